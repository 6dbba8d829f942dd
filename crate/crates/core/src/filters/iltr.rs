use super::{cv_propagate, gibbs_update, maybe_resample, weighted_position, FilterSettings, ParticleCloud, StepOutput};
use crate::costs::{tracking_gate, Observation, TrackingGate};
use crate::error::{Error, Result};
use crate::radar::{Hypothesis, RadarConfig, Station};

/// Strongest node of a delay-Doppler-bearing grid search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridPeak {
    pub hypothesis: Hypothesis,
    pub power: f64,
    pub evaluations: usize,
}

fn linspace(lo: f64, hi: f64, n: usize) -> impl Iterator<Item = f64> {
    (0..n).map(move |i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
}

/// Evaluate `|mf|^2` on an `n_tg^3` uniform grid spanning `gate` and return
/// the maximum (first maximum in delay-major, Doppler, bearing order).
pub fn grid_search(obs: &Observation, gate: &TrackingGate, n_tg: usize) -> Result<GridPeak> {
    if n_tg < 2 {
        return Err(Error::InvalidArgument(format!("grid needs at least 2 nodes per axis, got {n_tg}")));
    }
    let mut best = GridPeak { hypothesis: Hypothesis::new(gate.tau.0, gate.nu.0, gate.theta.0), power: -1.0, evaluations: 0 };
    for tau in linspace(gate.tau.0, gate.tau.1, n_tg) {
        for nu in linspace(gate.nu.0, gate.nu.1, n_tg) {
            for theta in linspace(gate.theta.0, gate.theta.1, n_tg) {
                let h = Hypothesis::new(tau, nu, theta);
                let p = obs.matched_filter(&h).norm_sqr();
                best.evaluations += 1;
                if p > best.power {
                    best.power = p;
                    best.hypothesis = h;
                }
            }
        }
    }
    Ok(best)
}

/// Information-level baseline: grid-search the tracking gate around the
/// predicted state for a point measurement, then run a bootstrap particle
/// filter with independent Gaussian errors of one resolution cell per axis
/// (`1/B`, `1/T_i`, gate width over `n_tg`). The Doppler term is dropped
/// without Doppler processing (`N_p = 1`).
pub fn pf_iltr_step(
    cloud: &ParticleCloud,
    obs: &Observation,
    cfg: &RadarConfig,
    station: &Station,
    settings: &FilterSettings,
) -> Result<(ParticleCloud, StepOutput)> {
    let prior = cv_propagate(cloud, cfg.tracking_period, settings);
    let lambda = cfg.wavelength();
    let m = prior.mean_state();
    let predicted = station.polar([m[0], m[1]], [m[2], m[3]], lambda)?;
    let limits = cfg.derive()?.limits;
    let mut gate = tracking_gate(&predicted, cfg);
    gate.tau = (gate.tau.0.max(limits.tau_min), gate.tau.1.min(limits.tau_max));
    gate.nu = (gate.nu.0.max(limits.nu_min), gate.nu.1.min(limits.nu_max));
    if gate.tau.0 >= gate.tau.1 {
        return Err(Error::DelayOutOfWindow { tau: predicted.tau, min: limits.tau_min, max: limits.tau_max });
    }
    let peak = grid_search(obs, &gate, settings.n_tg)?;
    let z = peak.hypothesis;
    let s_tau = 1.0 / cfg.bandwidth_hz;
    let s_nu = 1.0 / cfg.cpi();
    let s_theta = (gate.theta.1 - gate.theta.0) / settings.n_tg as f64;
    let doppler = cfg.doppler_processing();
    let costs: Vec<f64> = prior
        .particles
        .iter()
        .map(|p| match p.hypothesis(station, lambda) {
            Some(h) => {
                let mut q = ((h.tau - z.tau) / s_tau).powi(2) + ((h.theta - z.theta) / s_theta).powi(2);
                if doppler {
                    q += ((h.nu - z.nu) / s_nu).powi(2);
                }
                0.5 * q
            }
            None => f64::INFINITY,
        })
        .collect();
    let post = gibbs_update(&prior, &costs, 1.0)?;
    let estimate = weighted_position(&post.particles, &post.weights);
    let (next, ess, resampled) = maybe_resample(post, settings);
    Ok((next, StepOutput { estimate, ess, resampled, evaluations: peak.evaluations }))
}
