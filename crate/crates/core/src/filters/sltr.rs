use rayon::prelude::*;

use super::{cv_propagate, gibbs_update, maybe_resample, weighted_position, FilterSettings, ParticleCloud, StepOutput};
use crate::costs::{neg_log_power, Observation};
use crate::error::Result;
use crate::radar::{RadarConfig, Station};

/// Propagate and reweight without resampling; returns the weighted
/// posterior cloud and the number of matched-filter evaluations.
pub fn pf_sltr_update(
    cloud: &ParticleCloud,
    obs: &Observation,
    cfg: &RadarConfig,
    station: &Station,
    settings: &FilterSettings,
) -> Result<(ParticleCloud, usize)> {
    let prior = cv_propagate(cloud, cfg.tracking_period, settings);
    pf_sltr_reweight(&prior, obs, cfg, station, settings)
}

/// Gibbs reweighting of an already propagated cloud.
pub fn pf_sltr_reweight(
    prior: &ParticleCloud,
    obs: &Observation,
    cfg: &RadarConfig,
    station: &Station,
    settings: &FilterSettings,
) -> Result<(ParticleCloud, usize)> {
    let lambda = cfg.wavelength();
    let costs: Vec<f64> = prior
        .particles
        .par_iter()
        .map(|p| match p.hypothesis(station, lambda) {
            Some(h) => neg_log_power(obs.matched_filter(&h)),
            None => f64::INFINITY,
        })
        .collect();
    Ok((gibbs_update(prior, &costs, settings.xi)?, costs.len()))
}

/// One step of the signal-level Gibbs-posterior particle filter:
/// propagate, score every particle with `-ln |mf|^2` on the raw snapshot,
/// reweight, and resample when the ESS drops below `n_thres`.
pub fn pf_sltr_step(
    cloud: &ParticleCloud,
    obs: &Observation,
    cfg: &RadarConfig,
    station: &Station,
    settings: &FilterSettings,
) -> Result<(ParticleCloud, StepOutput)> {
    let (post, evaluations) = pf_sltr_update(cloud, obs, cfg, station, settings)?;
    let estimate = weighted_position(&post.particles, &post.weights);
    let (next, ess, resampled) = maybe_resample(post, settings);
    Ok((next, StepOutput { estimate, ess, resampled, evaluations }))
}
