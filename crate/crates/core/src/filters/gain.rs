use num_complex::Complex64;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use super::{cv_propagate, gibbs_update, maybe_resample, weighted_position, FilterSettings, GainState, ParticleCloud, StepOutput};
use crate::costs::Observation;
use crate::error::{Error, Result};
use crate::radar::{RadarConfig, Station};
use crate::rng::{self, tag};

fn complex_normal<R: rand::Rng + ?Sized>(rng: &mut R, std: f64) -> Complex64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(re, im) * std
}

/// `||y - beta g||^2` from the matched filter `mf = y^H g`, `||g||^2` and `||y||^2`.
pub(crate) fn residual_energy(y_energy: f64, mf: Complex64, g_energy: f64, beta: Complex64) -> f64 {
    y_energy - 2.0 * (beta * mf).re + beta.norm_sqr() * g_energy
}

/// Gain-augmented baseline: each particle carries a sampled complex gain that
/// follows a Gaussian random walk; weights are the exact Gaussian likelihood
/// `exp(-||y - beta g(phi)||^2 / sigma^2)`.
pub fn pf_sltr_a_step(
    cloud: &ParticleCloud,
    obs: &Observation,
    cfg: &RadarConfig,
    station: &Station,
    settings: &FilterSettings,
) -> Result<(ParticleCloud, StepOutput)> {
    let mut prior = cv_propagate(cloud, cfg.tracking_period, settings);
    let mut rng = rng::stream(settings.seed, &[tag::FILTER, prior.k, 2]);
    let init_std = (settings.gain_init_var / 2.0).sqrt();
    for p in prior.particles.iter_mut() {
        let beta = match p.gain {
            Some(g) => g.mean + complex_normal(&mut rng, settings.gain_walk_std),
            None => complex_normal(&mut rng, init_std),
        };
        p.gain = Some(GainState { mean: beta, var: 0.0 });
    }
    let lambda = cfg.wavelength();
    let y_energy = obs.energy();
    let sigma2 = obs.noise_var;
    let costs: Vec<f64> = prior
        .particles
        .par_iter()
        .map(|p| match p.hypothesis(station, lambda) {
            Some(h) => {
                let beta = p.gain.map(|g| g.mean).unwrap_or_default();
                residual_energy(y_energy, obs.matched_filter(&h), obs.model_energy(h.theta), beta) / sigma2
            }
            None => f64::INFINITY,
        })
        .collect();
    let post = gibbs_update(&prior, &costs, 1.0)?;
    let estimate = weighted_position(&post.particles, &post.weights);
    let (next, ess, resampled) = maybe_resample(post, settings);
    Ok((next, StepOutput { estimate, ess, resampled, evaluations: costs.len() }))
}

/// Scalar complex Kalman filter for `y = beta g + n`, `n ~ CN(0, sigma^2 I)`.
/// Returns the negative log marginal likelihood (up to a particle-independent
/// constant) and the updated gain.
pub(crate) fn kalman_gain_update(
    prior: GainState,
    y_energy: f64,
    mf: Complex64,
    g_energy: f64,
    sigma2: f64,
) -> Result<(f64, GainState)> {
    let p = prior.var;
    let m = prior.mean;
    let s = sigma2 + p * g_energy;
    if !(p > 0.0) || !(s > 0.0) || !s.is_finite() {
        return Err(Error::Numerical(format!("gain covariance {p} / innovation {s} not positive")));
    }
    let gy = mf.conj();
    let r_energy = residual_energy(y_energy, mf, g_energy, m);
    let gr = gy - m * g_energy;
    let quad = (r_energy - p * gr.norm_sqr() / s) / sigma2;
    let cost = quad + (s / sigma2).ln();
    let post_var = 1.0 / (1.0 / p + g_energy / sigma2);
    let post_mean = (m / p + gy / sigma2) * post_var;
    Ok((cost, GainState { mean: post_mean, var: post_var }))
}

/// Rao-Blackwellized baseline: the complex gain is a random-walk linear
/// Gaussian substate tracked by a per-particle Kalman filter; particles are
/// weighted by the marginal likelihood under the predicted gain.
pub fn rbpf_sltr_a_step(
    cloud: &ParticleCloud,
    obs: &Observation,
    cfg: &RadarConfig,
    station: &Station,
    settings: &FilterSettings,
) -> Result<(ParticleCloud, StepOutput)> {
    let mut prior = cv_propagate(cloud, cfg.tracking_period, settings);
    for p in prior.particles.iter_mut() {
        p.gain = Some(match p.gain {
            Some(g) => GainState { mean: g.mean, var: g.var + settings.gain_process_var },
            None => GainState { mean: Complex64::default(), var: settings.gain_init_var },
        });
    }
    let lambda = cfg.wavelength();
    let y_energy = obs.energy();
    let sigma2 = obs.noise_var;
    let scored: Vec<Result<(f64, Option<GainState>)>> = prior
        .particles
        .par_iter()
        .map(|p| match p.hypothesis(station, lambda) {
            Some(h) => {
                let g = p.gain.expect("gain initialized above");
                let (cost, post) = kalman_gain_update(g, y_energy, obs.matched_filter(&h), obs.model_energy(h.theta), sigma2)?;
                Ok((cost, Some(post)))
            }
            None => Ok((f64::INFINITY, p.gain)),
        })
        .collect();
    let mut costs = Vec::with_capacity(scored.len());
    for (p, r) in prior.particles.iter_mut().zip(scored) {
        let (c, g) = r?;
        costs.push(c);
        p.gain = g;
    }
    let post = gibbs_update(&prior, &costs, 1.0)?;
    let estimate = weighted_position(&post.particles, &post.weights);
    let (next, ess, resampled) = maybe_resample(post, settings);
    Ok((next, StepOutput { estimate, ess, resampled, evaluations: costs.len() }))
}
