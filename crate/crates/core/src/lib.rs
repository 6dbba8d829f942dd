//! Signal-level single-target tracking for MIMO-OFDM pulse-Doppler radar with
//! Gibbs-posterior particle filters, baseline filters and multi-station
//! posterior fusion.

pub mod channel;
pub mod costs;
pub mod error;
pub mod filters;
pub mod fusion;
pub mod harness;
pub mod radar;
pub mod rng;
pub mod selftest;
pub mod waveform;

pub use channel::{Domain, SnapshotCube};
pub use costs::{Observation, RsMode, TrackingGate};
pub use error::{Error, Result};
pub use radar::{Hypothesis, RadarConfig, Scatterer, Scheme, Station, TargetTruth, C};
pub use waveform::{ConstellationCube, TxFreqSignal, TxTimeSignal};
pub use filters::{FilterSettings, Particle, ParticleCloud, StepOutput};
pub use fusion::{FusionProblem, FusionSettings};
pub use harness::{Method, RunReport, Scenario, ScenarioSpec};
