use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Scenario, StepRecord};
use crate::costs::Observation;
use crate::error::{Error, Result};
use crate::filters::{
    cv_propagate, init_cloud, maybe_resample, pf_iltr_step, pf_sltr_a_step, pf_sltr_reweight, pf_sltr_step, rbpf_sltr_a_step,
    FilterSettings, ParticleCloud, StepOutput,
};
use crate::fusion::{draw_sample, fuse, optimize_dual, stratified_fuse, FusionMethod, FusionProblem, FusionSettings};
use crate::radar::{RadarConfig, Station};
use crate::rng::{derive_seed, tag};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    PfSltr,
    PfIltr,
    PfSltrA,
    RbpfSltrA,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::PfSltr, Method::PfIltr, Method::PfSltrA, Method::RbpfSltrA];

    pub fn name(self) -> &'static str {
        match self {
            Method::PfSltr => "pf_sltr",
            Method::PfIltr => "pf_iltr",
            Method::PfSltrA => "pf_sltr_a",
            Method::RbpfSltrA => "rbpf_sltr_a",
        }
    }

    pub fn step(
        self,
        cloud: &ParticleCloud,
        obs: &Observation,
        cfg: &RadarConfig,
        station: &Station,
        settings: &FilterSettings,
    ) -> Result<(ParticleCloud, StepOutput)> {
        match self {
            Method::PfSltr => pf_sltr_step(cloud, obs, cfg, station, settings),
            Method::PfIltr => pf_iltr_step(cloud, obs, cfg, station, settings),
            Method::PfSltrA => pf_sltr_a_step(cloud, obs, cfg, station, settings),
            Method::RbpfSltrA => rbpf_sltr_a_step(cloud, obs, cfg, station, settings),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown method {s:?}; expected one of pf_sltr, pf_iltr, pf_sltr_a, rbpf_sltr_a")))
    }
}

/// Aggregated result of a Monte-Carlo tracking run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub method: String,
    pub stations: usize,
    pub trials: usize,
    pub steps: usize,
    pub records: Vec<StepRecord>,
    /// Mean squared 2-D position error over all steps and trials (m^2).
    pub mse: f64,
    /// Per-trial MSE.
    pub trial_mse: Vec<f64>,
    /// Mean wall time of the filtering (and fusion) work per step.
    pub mean_step_ms: f64,
    pub evaluations_per_step: f64,
    /// Steps at which the filter update failed and the cloud was carried on
    /// with flattened weights.
    pub divergences: usize,
    /// Fusion steps whose dual solver stopped short of its tolerance (the
    /// best iterate is used).
    pub fusion_unconverged: usize,
}

struct TrialOutcome {
    records: Vec<StepRecord>,
    step_secs: f64,
    evaluations: usize,
    divergences: usize,
    unconverged: usize,
}

fn filter_settings(scenario: &Scenario, settings: &FilterSettings, trial: usize, station: usize) -> FilterSettings {
    FilterSettings {
        seed: derive_seed(scenario.trial_seed(trial), &[tag::FILTER, settings.seed, station as u64]),
        ..settings.clone()
    }
}

fn record(scenario: &Scenario, trial: usize, k: usize, est: [f64; 2]) -> StepRecord {
    let t = scenario.truth[k].position;
    StepRecord {
        trial,
        step: trial * scenario.steps() + (k - 1),
        k,
        sq_err: (est[0] - t[0]).powi(2) + (est[1] - t[1]).powi(2),
        est_x: est[0],
        est_y: est[1],
        true_x: t[0],
        true_y: t[1],
    }
}

/// Keep tracking after a failed update: propagate, flatten, report the
/// predicted mean.
fn carry_on(cloud: &ParticleCloud, cfg: &RadarConfig, settings: &FilterSettings) -> (ParticleCloud, [f64; 2]) {
    let mut next = cv_propagate(cloud, cfg.tracking_period, settings);
    next.flatten_weights();
    let est = next.mean_position();
    (next, est)
}

fn is_divergence(e: &Error) -> bool {
    matches!(e, Error::DegenerateUpdate | Error::DelayOutOfWindow { .. } | Error::UndefinedBearing | Error::Numerical(_))
}

fn summarize(method: String, stations: usize, scenario: &Scenario, outcomes: Vec<TrialOutcome>) -> RunReport {
    let trials = outcomes.len();
    let steps = scenario.steps();
    let total_steps = (trials * steps).max(1) as f64;
    let trial_mse = outcomes
        .iter()
        .map(|o| o.records.iter().map(|r| r.sq_err).sum::<f64>() / o.records.len().max(1) as f64)
        .collect::<Vec<_>>();
    let report = RunReport {
        method,
        stations,
        trials,
        steps,
        mse: trial_mse.iter().sum::<f64>() / trials.max(1) as f64,
        trial_mse,
        mean_step_ms: 1e3 * outcomes.iter().map(|o| o.step_secs).sum::<f64>() / total_steps,
        evaluations_per_step: outcomes.iter().map(|o| o.evaluations).sum::<usize>() as f64 / total_steps,
        divergences: outcomes.iter().map(|o| o.divergences).sum(),
        fusion_unconverged: outcomes.iter().map(|o| o.unconverged).sum(),
        records: Vec::new(),
    };
    RunReport { records: outcomes.into_iter().flat_map(|o| o.records).collect(), ..report }
}

fn track_trial(scenario: &Scenario, method: Method, settings: &FilterSettings, trial: usize) -> Result<TrialOutcome> {
    let cfg = scenario.cfg();
    let station = &scenario.spec.stations[0];
    let s = filter_settings(scenario, settings, trial, 0);
    let mut cloud = init_cloud(&scenario.truth[0], station, cfg, &s)?;
    let mut out = TrialOutcome { records: Vec::with_capacity(scenario.steps()), step_secs: 0.0, evaluations: 0, divergences: 0, unconverged: 0 };
    for k in 1..=scenario.steps() {
        let obs = scenario.observe(trial, 0, k)?;
        let t0 = Instant::now();
        let result = method.step(&cloud, &obs, cfg, station, &s);
        out.step_secs += t0.elapsed().as_secs_f64();
        let est = match result {
            Ok((next, step)) => {
                cloud = next;
                out.evaluations += step.evaluations;
                step.estimate
            }
            Err(e) if is_divergence(&e) => {
                out.divergences += 1;
                let (next, est) = carry_on(&cloud, cfg, &s);
                cloud = next;
                est
            }
            Err(e) => return Err(e),
        };
        out.records.push(record(scenario, trial, k, est));
    }
    Ok(out)
}

/// Monte-Carlo tracking of the scenario's first station with one filter.
/// Trials run in parallel; wall time covers the filter step only.
pub fn run_tracking(scenario: &Scenario, method: Method, settings: &FilterSettings, trials: usize) -> Result<RunReport> {
    if trials == 0 {
        return Err(Error::InvalidArgument("trials must be positive".into()));
    }
    let outcomes = (0..trials)
        .into_par_iter()
        .map(|t| track_trial(scenario, method, settings, t))
        .collect::<Result<Vec<_>>>()?;
    Ok(summarize(method.name().to_string(), 1, scenario, outcomes))
}

/// Fused cloud and whether the dual solver met its tolerance.
fn fuse_step(posts: &[ParticleCloud], fusion: &FusionSettings, n_out: usize, seed: u64) -> Result<(ParticleCloud, bool)> {
    if fusion.method == FusionMethod::Stratified {
        return Ok((stratified_fuse(posts, n_out, seed)?, true));
    }
    let (problem, std) = FusionProblem::from_clouds(posts, *fusion)?;
    let sample = draw_sample(&problem, fusion.integration, fusion.n_mci, seed);
    let dual = optimize_dual(&problem, &sample);
    Ok((fuse(&problem, &dual, &std, n_out, seed)?, dual.converged))
}

fn multipoint_trial(scenario: &Scenario, z: usize, settings: &FilterSettings, fusion: &FusionSettings, trial: usize) -> Result<TrialOutcome> {
    let cfg = scenario.cfg();
    let stations = &scenario.spec.stations[..z];
    let s = filter_settings(scenario, settings, trial, 0);
    let mut cloud = init_cloud(&scenario.truth[0], &stations[0], cfg, &s)?;
    let mut out = TrialOutcome { records: Vec::with_capacity(scenario.steps()), step_secs: 0.0, evaluations: 0, divergences: 0, unconverged: 0 };
    for k in 1..=scenario.steps() {
        let observations = (0..z).map(|i| scenario.observe(trial, i, k)).collect::<Result<Vec<_>>>()?;
        let t0 = Instant::now();
        if z == 1 {
            let result = pf_sltr_step(&cloud, &observations[0], cfg, &stations[0], &s);
            out.step_secs += t0.elapsed().as_secs_f64();
            let est = match result {
                Ok((next, step)) => {
                    cloud = next;
                    out.evaluations += step.evaluations;
                    step.estimate
                }
                Err(e) if is_divergence(&e) => {
                    out.divergences += 1;
                    let (next, est) = carry_on(&cloud, cfg, &s);
                    cloud = next;
                    est
                }
                Err(e) => return Err(e),
            };
            out.records.push(record(scenario, trial, k, est));
            continue;
        }
        // Every station starts from the same predicted cloud.
        let prior = cv_propagate(&cloud, cfg.tracking_period, &s);
        let mut posts = Vec::with_capacity(z);
        for (obs, st) in observations.iter().zip(stations) {
            match pf_sltr_reweight(&prior, obs, cfg, st, &s) {
                Ok((post, evals)) => {
                    out.evaluations += evals;
                    posts.push(post);
                }
                Err(e) if is_divergence(&e) => {
                    out.divergences += 1;
                    let mut flat = prior.clone();
                    flat.flatten_weights();
                    posts.push(flat);
                }
                Err(e) => return Err(e),
            }
        }
        let seed = derive_seed(scenario.trial_seed(trial), &[tag::FUSION, k as u64]);
        let (mut fused, converged) = match fuse_step(&posts, fusion, settings.n_par, seed) {
            Ok(r) => r,
            Err(Error::DegenerateUpdate) => (stratified_fuse(&posts, settings.n_par, seed)?, false),
            Err(e) => return Err(e),
        };
        out.unconverged += usize::from(!converged);
        fused.k = prior.k;
        let est = fused.mean_position();
        cloud = maybe_resample(fused, &s).0;
        out.step_secs += t0.elapsed().as_secs_f64();
        out.records.push(record(scenario, trial, k, est));
    }
    Ok(out)
}

/// PF-SLTR at the first `z` stations of the scenario. Every station updates
/// the shared prior with its own snapshot; the station posteriors are fused
/// and the fused cloud becomes every station's next prior. With `z = 1` this
/// is exactly [`run_tracking`] with [`Method::PfSltr`].
pub fn run_multipoint(scenario: &Scenario, z: usize, settings: &FilterSettings, fusion: &FusionSettings, trials: usize) -> Result<RunReport> {
    if z == 0 || z > scenario.spec.stations.len() {
        return Err(Error::InvalidArgument(format!("{z} stations requested, scenario has {}", scenario.spec.stations.len())));
    }
    if trials == 0 {
        return Err(Error::InvalidArgument("trials must be positive".into()));
    }
    let outcomes = (0..trials)
        .into_par_iter()
        .map(|t| multipoint_trial(scenario, z, settings, fusion, t))
        .collect::<Result<Vec<_>>>()?;
    Ok(summarize(format!("pf_sltr_z{z}"), z, scenario, outcomes))
}
