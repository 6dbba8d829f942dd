//! Particle clouds, Gibbs weight update, resampling and motion model, plus
//! the signal-level filter and three baselines built on them.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::costs::tracking_gate;
use crate::error::{Error, Result};
use crate::radar::{Hypothesis, RadarConfig, Station, TargetTruth};
use crate::rng::{self, tag};

mod gain;
mod iltr;
mod sltr;

pub use gain::{pf_sltr_a_step, rbpf_sltr_a_step};
pub use iltr::{pf_iltr_step, GridPeak};
pub use sltr::{pf_sltr_reweight, pf_sltr_step, pf_sltr_update};

/// Complex path-gain substate carried by the gain-augmented baselines. For
/// the sampled variant `var` is zero; for the Rao-Blackwellized one it is the
/// Kalman posterior variance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GainState {
    pub mean: num_complex::Complex64,
    pub var: f64,
}

/// Hypothesized target: `[x, y, vx, vy]` in the world frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Particle {
    pub state: [f64; 4],
    #[serde(default)]
    pub gain: Option<GainState>,
}

impl Particle {
    pub fn new(state: [f64; 4]) -> Self {
        Self { state, gain: None }
    }

    pub fn position(&self) -> [f64; 2] {
        [self.state[0], self.state[1]]
    }

    pub fn velocity(&self) -> [f64; 2] {
        [self.state[2], self.state[3]]
    }

    /// Polar view from `station`; `None` if the particle sits on the station.
    pub fn hypothesis(&self, station: &Station, wavelength: f64) -> Option<Hypothesis> {
        station.polar(self.position(), self.velocity(), wavelength).ok()
    }
}

/// Weighted particle set at tracking step `k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticleCloud {
    pub particles: Vec<Particle>,
    pub weights: Vec<f64>,
    pub k: u64,
}

impl ParticleCloud {
    pub fn uniform(particles: Vec<Particle>, k: u64) -> Self {
        let n = particles.len();
        Self { particles, weights: vec![1.0 / n as f64; n], k }
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn mean_state(&self) -> [f64; 4] {
        let mut m = [0.0; 4];
        for (p, w) in self.particles.iter().zip(&self.weights) {
            for (mi, s) in m.iter_mut().zip(p.state) {
                *mi += w * s;
            }
        }
        m
    }

    pub fn mean_position(&self) -> [f64; 2] {
        let m = self.mean_state();
        [m[0], m[1]]
    }

    pub fn ess(&self) -> f64 {
        ess(&self.weights)
    }

    /// Reset to equal weights, keeping the atoms.
    pub fn flatten_weights(&mut self) {
        let n = self.len();
        self.weights = vec![1.0 / n as f64; n];
    }
}

fn default_n_thres() -> f64 {
    100.0
}
fn default_xi() -> f64 {
    1.0
}
fn default_accel_psd() -> f64 {
    0.1
}
fn default_gain_walk_std() -> f64 {
    0.1
}
fn default_gain_process_var() -> f64 {
    1e-5
}
fn default_gain_init_var() -> f64 {
    1.0
}
fn default_n_tg() -> usize {
    5
}
fn default_init_velocity_spread() -> f64 {
    1.0
}

/// Filter knobs. `accel_psd` is the white-acceleration intensity `q_a`
/// (m^2/s^3) of the constant-velocity model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterSettings {
    pub n_par: usize,
    #[serde(default = "default_n_thres")]
    pub n_thres: f64,
    #[serde(default = "default_xi")]
    pub xi: f64,
    #[serde(default = "default_accel_psd")]
    pub accel_psd: f64,
    #[serde(default)]
    pub seed: u64,
    /// Random-walk std per real component of the sampled path gain.
    #[serde(default = "default_gain_walk_std")]
    pub gain_walk_std: f64,
    /// Random-walk variance of the Kalman-tracked complex gain.
    #[serde(default = "default_gain_process_var")]
    pub gain_process_var: f64,
    #[serde(default = "default_gain_init_var")]
    pub gain_init_var: f64,
    /// Grid nodes per axis for the information-level baseline.
    #[serde(default = "default_n_tg")]
    pub n_tg: usize,
    /// Half-width (m/s) of the uniform initial velocity spread.
    #[serde(default = "default_init_velocity_spread")]
    pub init_velocity_spread: f64,
}

impl Default for FilterSettings {
    fn default() -> Self {
        Self {
            n_par: 200,
            n_thres: default_n_thres(),
            xi: default_xi(),
            accel_psd: default_accel_psd(),
            seed: 0,
            gain_walk_std: default_gain_walk_std(),
            gain_process_var: default_gain_process_var(),
            gain_init_var: default_gain_init_var(),
            n_tg: default_n_tg(),
            init_velocity_spread: default_init_velocity_spread(),
        }
    }
}

/// What a filter step reports besides the new cloud.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutput {
    /// Posterior-mean position, taken before any resampling.
    pub estimate: [f64; 2],
    pub ess: f64,
    pub resampled: bool,
    /// Matched-filter evaluations performed.
    pub evaluations: usize,
}

/// `1 / sum u_i^2`.
pub fn ess(weights: &[f64]) -> f64 {
    1.0 / weights.iter().map(|w| w * w).sum::<f64>()
}

/// Gibbs posterior weights `u_i ∝ eta_i exp(-xi (h_i - min h))`.
///
/// `+inf` costs give zero weight. `xi = 0` returns the prior weights
/// unchanged. Fails with [`Error::DegenerateUpdate`] if no mass survives.
pub fn gibbs_weights(prior: &[f64], costs: &[f64], xi: f64) -> Result<Vec<f64>> {
    if prior.len() != costs.len() {
        return Err(Error::Shape(format!("{} weights but {} costs", prior.len(), costs.len())));
    }
    if !(xi >= 0.0) || !xi.is_finite() {
        return Err(Error::InvalidArgument(format!("learning rate {xi} must be finite and non-negative")));
    }
    if let Some(bad) = costs.iter().find(|h| h.is_nan() || **h == f64::NEG_INFINITY) {
        return Err(Error::Numerical(format!("cost {bad} is not a valid Gibbs cost")));
    }
    if xi == 0.0 {
        return Ok(prior.to_vec());
    }
    let h_min = costs
        .iter()
        .zip(prior)
        .filter(|(h, w)| h.is_finite() && **w > 0.0)
        .map(|(h, _)| *h)
        .fold(f64::INFINITY, f64::min);
    if !h_min.is_finite() {
        return Err(Error::DegenerateUpdate);
    }
    let mut u: Vec<f64> = prior
        .iter()
        .zip(costs)
        .map(|(w, h)| if h.is_finite() { w * (-xi * (h - h_min)).exp() } else { 0.0 })
        .collect();
    let total: f64 = u.iter().sum();
    if !(total > 0.0) || !total.is_finite() {
        return Err(Error::DegenerateUpdate);
    }
    u.iter_mut().for_each(|x| *x /= total);
    Ok(u)
}

/// Apply [`gibbs_weights`] to a cloud.
pub fn gibbs_update(cloud: &ParticleCloud, costs: &[f64], xi: f64) -> Result<ParticleCloud> {
    let weights = gibbs_weights(&cloud.weights, costs, xi)?;
    Ok(ParticleCloud { particles: cloud.particles.clone(), weights, k: cloud.k })
}

/// Indices selected by systematic resampling: one uniform offset, stride `1/n`.
pub fn systematic_indices<R: Rng + ?Sized>(weights: &[f64], n: usize, rng: &mut R) -> Vec<usize> {
    let offset: f64 = rng.random::<f64>();
    systematic_indices_with_offset(weights, n, offset)
}

/// Deterministic core of systematic resampling; `offset` in `[0, 1)`.
pub fn systematic_indices_with_offset(weights: &[f64], n: usize, offset: f64) -> Vec<usize> {
    let total: f64 = weights.iter().sum();
    let mut out = Vec::with_capacity(n);
    let mut cum = weights.first().copied().unwrap_or(0.0) / total;
    let last = weights.iter().rposition(|w| *w > 0.0).unwrap_or(0);
    let mut i = 0;
    for j in 0..n {
        let target = (j as f64 + offset) / n as f64;
        while cum <= target && i < last {
            i += 1;
            cum += weights[i] / total;
        }
        out.push(i);
    }
    out
}

pub fn systematic_resample<R: Rng + ?Sized>(cloud: &ParticleCloud, rng: &mut R) -> ParticleCloud {
    let n = cloud.len();
    let idx = systematic_indices(&cloud.weights, n, rng);
    ParticleCloud::uniform(idx.into_iter().map(|i| cloud.particles[i]).collect(), cloud.k)
}

/// Lower-triangular factor of the per-axis CV process covariance
/// `q_a [[T^3/3, T^2/2], [T^2/2, T]]`.
pub fn cv_noise_factor(dt: f64, accel_psd: f64) -> [[f64; 2]; 2] {
    let q = accel_psd.sqrt();
    [[q * (dt.powi(3) / 3.0).sqrt(), 0.0], [q * 3f64.sqrt() / 2.0 * dt.sqrt(), q * dt.sqrt() / 2.0]]
}

/// Constant-velocity prediction with white-acceleration noise. Increments the
/// step index; the noise stream is keyed by the new index.
pub fn cv_propagate(cloud: &ParticleCloud, dt: f64, settings: &FilterSettings) -> ParticleCloud {
    let k = cloud.k + 1;
    let mut rng = rng::stream(settings.seed, &[tag::FILTER, k, 0]);
    let l = cv_noise_factor(dt, settings.accel_psd);
    let particles = cloud
        .particles
        .iter()
        .map(|p| {
            let mut s = p.state;
            for axis in 0..2 {
                let w1: f64 = StandardNormal.sample(&mut rng);
                let w2: f64 = StandardNormal.sample(&mut rng);
                s[axis] += s[axis + 2] * dt + l[0][0] * w1;
                s[axis + 2] += l[1][0] * w1 + l[1][1] * w2;
            }
            Particle { state: s, gain: p.gain }
        })
        .collect();
    ParticleCloud { particles, weights: cloud.weights.clone(), k }
}

/// Resample if the ESS falls below the threshold, keyed by the cloud's step.
pub fn maybe_resample(cloud: ParticleCloud, settings: &FilterSettings) -> (ParticleCloud, f64, bool) {
    let e = cloud.ess();
    if e < settings.n_thres {
        let mut rng = rng::stream(settings.seed, &[tag::FILTER, cloud.k, 1]);
        (systematic_resample(&cloud, &mut rng), e, true)
    } else {
        (cloud, e, false)
    }
}

/// Draw the initial cloud uniformly over the tracking gate around the true
/// initial state (uniform in delay and in sine of bearing), with velocities
/// spread uniformly about the true velocity.
pub fn init_cloud(truth: &TargetTruth, station: &Station, cfg: &RadarConfig, settings: &FilterSettings) -> Result<ParticleCloud> {
    if settings.n_par == 0 {
        return Err(Error::InvalidArgument("n_par must be at least 1".into()));
    }
    let phi = station.polar(truth.position, truth.velocity, cfg.wavelength())?;
    let gate = tracking_gate(&phi, cfg);
    let mut rng = rng::stream(settings.seed, &[tag::INIT]);
    let (s_lo, s_hi) = (gate.theta.0.sin(), gate.theta.1.sin());
    let tau_lo = gate.tau.0.max(0.0);
    let dv = settings.init_velocity_spread;
    let particles = (0..settings.n_par)
        .map(|_| {
            let tau = rng.random_range(tau_lo..=gate.tau.1);
            let theta = rng.random_range(s_lo..=s_hi).asin();
            let p = station.position_of(tau, theta);
            let vx = truth.velocity[0] + dv * (2.0 * rng.random::<f64>() - 1.0);
            let vy = truth.velocity[1] + dv * (2.0 * rng.random::<f64>() - 1.0);
            Particle::new([p[0], p[1], vx, vy])
        })
        .collect();
    Ok(ParticleCloud::uniform(particles, 0))
}

/// `alpha_i^xi / sum_j alpha_j^xi`, computed in log space with `0^0 = 1`.
pub fn entropy_power(alpha: &[f64], xi: f64) -> Result<Vec<f64>> {
    if alpha.is_empty() || alpha.iter().any(|a| !(*a >= 0.0) || !a.is_finite()) {
        return Err(Error::InvalidArgument("alpha must be a non-empty non-negative vector".into()));
    }
    if !(xi >= 0.0) || !xi.is_finite() {
        return Err(Error::InvalidArgument(format!("xi = {xi} must be finite and non-negative")));
    }
    let logs: Vec<f64> = alpha
        .iter()
        .map(|&a| if xi == 0.0 { 0.0 } else if a > 0.0 { xi * a.ln() } else { f64::NEG_INFINITY })
        .collect();
    let mx = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if mx == f64::NEG_INFINITY {
        return Err(Error::InvalidArgument("alpha has no positive entry".into()));
    }
    let e: Vec<f64> = logs.iter().map(|l| (l - mx).exp()).collect();
    let s: f64 = e.iter().sum();
    Ok(e.into_iter().map(|x| x / s).collect())
}

/// Shannon entropy (nats) with `0 ln 0 = 0`.
pub fn shannon_entropy(p: &[f64]) -> f64 {
    -p.iter().filter(|x| **x > 0.0).map(|x| x * x.ln()).sum::<f64>()
}

/// Weighted mean position of a cloud under the given weights.
pub(crate) fn weighted_position(particles: &[Particle], weights: &[f64]) -> [f64; 2] {
    let mut m = [0.0; 2];
    for (p, w) in particles.iter().zip(weights) {
        m[0] += w * p.state[0];
        m[1] += w * p.state[1];
    }
    m
}
