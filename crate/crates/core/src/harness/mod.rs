//! Scenario construction, Monte-Carlo tracking runs and report output.

use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::channel::{rx_fft, sample_path_gain, simulate_rx_cw, simulate_rx_time, target_echo};
use crate::costs::Observation;
use crate::error::{Error, Result};
use crate::filters::FilterSettings;
use crate::fusion::FusionSettings;
use crate::radar::{RadarConfig, Scatterer, Scheme, Station, TargetTruth};
use crate::rng::{derive_seed, tag};
use crate::waveform::{assemble_pulse, fft_full_pri, gen_constellation};

mod report;
mod run;

pub use report::{emit_report, read_csv, write_csv, ReportFormat, StepRecord};
pub use run::{run_multipoint, run_tracking, Method, RunReport};

/// One piece of the target path: constant speed and turn rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    /// Seconds.
    pub duration: f64,
    /// m/s.
    pub speed: f64,
    /// rad/s, positive counterclockwise.
    #[serde(default)]
    pub turn_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySpec {
    pub start: [f64; 2],
    /// Initial heading from world +x (rad).
    pub heading: f64,
    pub segments: Vec<Segment>,
}

/// Stationary point scatterer in world coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScattererSpec {
    pub position: [f64; 2],
    #[serde(default)]
    pub velocity: [f64; 2],
    /// Complex gain as `[re, im]`.
    pub gain: [f64; 2],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum PathGainModel {
    /// Independent per-step gain `[0.9 + 0.1 (2 r1 - 1)] exp(j 2 pi r2)`.
    #[default]
    FastFading,
    Constant { re: f64, im: f64 },
}

fn default_qam() -> usize {
    64
}
fn default_stations() -> Vec<Station> {
    vec![Station::default()]
}
fn default_trials() -> usize {
    5
}

/// Everything needed to reproduce a run; the on-disk JSON format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub radar: RadarConfig,
    pub trajectory: TrajectorySpec,
    #[serde(default)]
    pub scatterers: Vec<ScattererSpec>,
    #[serde(default = "default_stations")]
    pub stations: Vec<Station>,
    #[serde(default = "default_qam")]
    pub qam_order: usize,
    #[serde(default)]
    pub path_gain: PathGainModel,
    pub filter: FilterSettings,
    #[serde(default)]
    pub fusion: FusionSettings,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_trials")]
    pub trials: usize,
}

impl ScenarioSpec {
    pub fn from_json_str(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Desk-scale CW scenario: 16x16 array, 256 subcarriers, -10 dB SNR,
    /// 20 s (400 steps) along a two-turn path, two strong scatterers
    /// well outside the tracking gate.
    pub fn desk() -> Self {
        let mut radar = RadarConfig::cw_baseline();
        radar.n_tx = 16;
        radar.n_rx = 16;
        Self {
            radar,
            trajectory: TrajectorySpec {
                start: [40.0, -12.0],
                heading: 1.75,
                segments: vec![
                    Segment { duration: 5.0, speed: 1.5, turn_rate: 0.0 },
                    Segment { duration: 5.0, speed: 1.5, turn_rate: 0.2 },
                    Segment { duration: 5.0, speed: 1.5, turn_rate: 0.0 },
                    Segment { duration: 5.0, speed: 1.5, turn_rate: -0.2 },
                ],
            },
            scatterers: vec![
                ScattererSpec { position: [120.0, 30.0], velocity: [0.0, 0.0], gain: [0.5, 0.0] },
                ScattererSpec { position: [90.0, -60.0], velocity: [0.0, 0.0], gain: [0.0, 0.5] },
            ],
            stations: default_stations(),
            qam_order: 64,
            path_gain: PathGainModel::FastFading,
            filter: FilterSettings::default(),
            fusion: FusionSettings::default(),
            seed: 1,
            trials: 5,
        }
    }
}

/// Truth positions/velocities at every step plus the fixed environment.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub spec: ScenarioSpec,
    /// `truth[0]` is the initial state; measurements exist for `k >= 1`.
    pub truth: Vec<TargetTruth>,
}

impl Scenario {
    pub fn steps(&self) -> usize {
        self.truth.len() - 1
    }

    pub fn cfg(&self) -> &RadarConfig {
        &self.spec.radar
    }

    /// Per-trial root seed; shared by all methods and sweep values so runs
    /// use common random numbers.
    pub fn trial_seed(&self, trial: usize) -> u64 {
        derive_seed(self.spec.seed, &[tag::TRIAL, trial as u64])
    }

    pub fn path_gain(&self, trial: usize, k: usize) -> Complex64 {
        match self.spec.path_gain {
            PathGainModel::FastFading => sample_path_gain(self.trial_seed(trial), k as u64),
            PathGainModel::Constant { re, im } => Complex64::new(re, im),
        }
    }

    pub fn truth_at(&self, trial: usize, k: usize) -> TargetTruth {
        TargetTruth { beta: self.path_gain(trial, k), ..self.truth[k] }
    }

    /// Simulate the frequency-domain observation of `station` at step `k`.
    pub fn observe(&self, trial: usize, station: usize, k: usize) -> Result<Observation> {
        let cfg = &self.spec.radar;
        let st = &self.spec.stations[station];
        let ts = self.trial_seed(trial);
        let keys = [station as u64, k as u64];
        let wave_seed = derive_seed(ts, &[tag::CONSTELLATION, keys[0], keys[1]]);
        let noise_seed = derive_seed(ts, &[tag::NOISE, keys[0], keys[1]]);
        let target = target_echo(&self.truth_at(trial, k), st, cfg)?;
        let scatterers = self.scatterer_echoes(st)?;
        let c = gen_constellation(cfg, self.spec.qam_order, wave_seed)?;
        match cfg.scheme {
            Scheme::Cw => {
                let y = simulate_rx_cw(&c, &target, &scatterers, cfg, noise_seed)?;
                Observation::cw(&y, &c, cfg)
            }
            Scheme::Pulsed => {
                let s = assemble_pulse(&c, cfg)?;
                let y = simulate_rx_time(&s, &target, &scatterers, cfg, noise_seed)?;
                Observation::pulsed(&rx_fft(&y)?, &fft_full_pri(&s, cfg)?, cfg)
            }
        }
    }

    fn scatterer_echoes(&self, st: &Station) -> Result<Vec<Scatterer>> {
        let cfg = &self.spec.radar;
        self.spec
            .scatterers
            .iter()
            .map(|s| {
                let h = st.polar(s.position, s.velocity, cfg.wavelength())?;
                Ok(Scatterer { beta: Complex64::new(s.gain[0], s.gain[1]), tau: h.tau, nu: h.nu, theta: h.theta })
            })
            .collect()
    }
}

/// Integrate the segment list at the tracking period.
pub fn synthesize_trajectory(spec: &TrajectorySpec, dt: f64) -> Result<Vec<TargetTruth>> {
    if spec.segments.is_empty() {
        return Err(Error::Config("trajectory needs at least one segment".into()));
    }
    for s in &spec.segments {
        if !(s.duration > 0.0) || !s.speed.is_finite() || !s.turn_rate.is_finite() {
            return Err(Error::Config(format!("invalid segment {s:?}")));
        }
    }
    let total: f64 = spec.segments.iter().map(|s| s.duration).sum();
    let steps = (total / dt).round() as usize;
    let mut pos = spec.start;
    let mut heading = spec.heading;
    let mut seg = 0;
    let mut seg_left = spec.segments[0].duration;
    let velocity = |seg: usize, heading: f64| {
        let v = spec.segments[seg.min(spec.segments.len() - 1)].speed;
        [v * heading.cos(), v * heading.sin()]
    };
    let mut out = vec![TargetTruth { position: pos, velocity: velocity(0, heading), beta: Complex64::new(1.0, 0.0) }];
    for _ in 0..steps {
        let mut remaining = dt;
        while remaining > 1e-12 {
            let s = spec.segments[seg.min(spec.segments.len() - 1)];
            let h = if seg < spec.segments.len() { remaining.min(seg_left) } else { remaining };
            let (v, w) = (s.speed, s.turn_rate);
            if w.abs() < 1e-12 {
                pos[0] += v * h * heading.cos();
                pos[1] += v * h * heading.sin();
            } else {
                pos[0] += v / w * ((heading + w * h).sin() - heading.sin());
                pos[1] += v / w * (heading.cos() - (heading + w * h).cos());
            }
            heading += w * h;
            remaining -= h;
            if seg < spec.segments.len() {
                seg_left -= h;
                if seg_left <= 1e-12 {
                    seg += 1;
                    if seg < spec.segments.len() {
                        seg_left = spec.segments[seg].duration;
                    }
                }
            }
        }
        out.push(TargetTruth { position: pos, velocity: velocity(seg, heading), beta: Complex64::new(1.0, 0.0) });
    }
    Ok(out)
}

/// Build the truth trajectory and check it stays observable from every station.
pub fn build_scenario(spec: &ScenarioSpec) -> Result<Scenario> {
    let limits = spec.radar.derive()?.limits;
    if spec.stations.is_empty() {
        return Err(Error::Config("at least one station is required".into()));
    }
    if spec.trials == 0 {
        return Err(Error::Config("trials must be at least 1".into()));
    }
    let truth = synthesize_trajectory(&spec.trajectory, spec.radar.tracking_period)?;
    for (k, t) in truth.iter().enumerate() {
        for st in &spec.stations {
            t.check_limits(&spec.radar, &limits, st)
                .map_err(|e| Error::Config(format!("trajectory step {k} not observable: {e}")))?;
        }
    }
    if spec.radar.scheme == Scheme::Cw {
        for s in &spec.scatterers {
            for st in &spec.stations {
                let h = st.polar(s.position, s.velocity, spec.radar.wavelength())?;
                if h.tau > spec.radar.cp_duration {
                    return Err(Error::Config(format!("scatterer at {:?} lies beyond the CP-limited range", s.position)));
                }
            }
        }
    }
    Ok(Scenario { spec: spec.clone(), truth })
}
