//! Radar configuration, derived timing, array steering vectors and
//! station-relative geometry.
//!
//! Frame conventions: each station's uniform linear array lies along its local
//! y axis with boresight along local +x. Bearings are measured from boresight,
//! positive counterclockwise, and are restricted to the unambiguous sector
//! (-pi/2, pi/2). An approaching target has positive Doppler.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Speed of light (m/s).
pub const C: f64 = 299_792_458.0;

/// Round half away from zero, the rounding used for every sample-grid size.
pub fn round_half_away(x: f64) -> i64 {
    x.round() as i64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Silent time between pulses; time-domain record processed over full PRIs.
    Pulsed,
    /// Back-to-back symbols; CP removal and per-symbol frequency processing.
    Cw,
}

/// System and waveform constants of one ISAC station.
///
/// Serialized field names are the lower-cased symbol names (`f_c`, `b`,
/// `p_t`, ...). Frequencies are in Hz, times in seconds, SNR in dB.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadarConfig {
    #[serde(rename = "f_c")]
    pub carrier_hz: f64,
    #[serde(rename = "b")]
    pub bandwidth_hz: f64,
    /// Per-antenna transmit power (linear).
    #[serde(rename = "p_t")]
    pub tx_power: f64,
    #[serde(rename = "n_t")]
    pub n_tx: usize,
    #[serde(rename = "n_r")]
    pub n_rx: usize,
    #[serde(rename = "t_t")]
    pub tracking_period: f64,
    #[serde(rename = "n_p")]
    pub n_pulses: usize,
    #[serde(rename = "t_r")]
    pub pri: f64,
    #[serde(rename = "t_c")]
    pub cp_duration: f64,
    #[serde(rename = "t_o")]
    pub symbol_duration: f64,
    #[serde(rename = "m")]
    pub symbols_per_pulse: usize,
    #[serde(rename = "n_c")]
    pub n_subcarriers: usize,
    pub scheme: Scheme,
    pub snr_db: f64,
    /// Full-duplex front end (minimum delay 0). CW is always full duplex;
    /// pulsed defaults to time-division duplex (minimum delay `T_p`).
    #[serde(default)]
    pub full_duplex: bool,
}

/// Detectable-range and unambiguous-Doppler limits plus resolutions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DerivedLimits {
    pub r_min: f64,
    pub r_max: f64,
    pub tau_min: f64,
    pub tau_max: f64,
    pub nu_min: f64,
    pub nu_max: f64,
    pub range_resolution: f64,
    pub doppler_resolution: f64,
}

/// Sizes of the sampled grids.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SampleGrid {
    /// Samples per PRI.
    pub l: usize,
    /// Non-zero samples per pulse.
    pub l_ss: usize,
    /// Cyclic-prefix samples per symbol.
    pub n_cp: usize,
    /// Frequency bins used for ranging (`L` pulsed, `N_c` CW).
    pub n_cr: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Derived {
    pub limits: DerivedLimits,
    pub grid: SampleGrid,
}

impl RadarConfig {
    /// The CW baseline used for the tracking experiments: 10 GHz carrier,
    /// 256 subcarriers at 0.2 MHz spacing, 1 us CP, one symbol per pulse,
    /// one pulse per 50 ms tracking period, 64x64 array, -10 dB SNR.
    pub fn cw_baseline() -> Self {
        Self {
            carrier_hz: 10e9,
            bandwidth_hz: 51.2e6,
            tx_power: 1.0,
            n_tx: 64,
            n_rx: 64,
            tracking_period: 0.05,
            n_pulses: 1,
            pri: 6e-6,
            cp_duration: 1e-6,
            symbol_duration: 5e-6,
            symbols_per_pulse: 1,
            n_subcarriers: 256,
            scheme: Scheme::Cw,
            snr_db: -10.0,
            full_duplex: true,
        }
    }

    pub fn wavelength(&self) -> f64 {
        C / self.carrier_hz
    }

    pub fn sample_period(&self) -> f64 {
        1.0 / self.bandwidth_hz
    }

    pub fn subcarrier_spacing(&self) -> f64 {
        1.0 / self.symbol_duration
    }

    pub fn pulse_duration(&self) -> f64 {
        self.symbols_per_pulse as f64 * (self.cp_duration + self.symbol_duration)
    }

    pub fn cpi(&self) -> f64 {
        self.n_pulses as f64 * self.pri
    }

    pub fn prf(&self) -> f64 {
        1.0 / self.pri
    }

    /// Channel noise variance per receive element, `P_t * 10^(-SNR/10)`.
    pub fn noise_variance(&self) -> f64 {
        self.tx_power * 10f64.powf(-self.snr_db / 10.0)
    }

    /// `max(N_t, N_r)`.
    pub fn n_tr(&self) -> usize {
        self.n_tx.max(self.n_rx)
    }

    pub fn is_full_duplex(&self) -> bool {
        self.full_duplex || self.scheme == Scheme::Cw
    }

    pub fn cp_samples(&self) -> usize {
        round_half_away(self.cp_duration / self.sample_period()).max(0) as usize
    }

    /// Validate invariants and compute limits and grid sizes.
    pub fn derive(&self) -> Result<Derived> {
        let cfg_err = |msg: String| Err(Error::Config(msg));
        let positive = [
            ("f_c", self.carrier_hz),
            ("b", self.bandwidth_hz),
            ("p_t", self.tx_power),
            ("t_t", self.tracking_period),
            ("t_r", self.pri),
            ("t_o", self.symbol_duration),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return cfg_err(format!("{name} must be positive and finite, got {v}"));
            }
        }
        if !(self.cp_duration.is_finite() && self.cp_duration >= 0.0) {
            return cfg_err(format!("t_c must be non-negative, got {}", self.cp_duration));
        }
        if !self.snr_db.is_finite() {
            return cfg_err("snr_db must be finite".into());
        }
        for (name, v) in [
            ("n_t", self.n_tx),
            ("n_r", self.n_rx),
            ("n_p", self.n_pulses),
            ("m", self.symbols_per_pulse),
            ("n_c", self.n_subcarriers),
        ] {
            if v == 0 {
                return cfg_err(format!("{name} must be at least 1"));
            }
        }
        let nc_from_b = self.bandwidth_hz * self.symbol_duration;
        if (nc_from_b - self.n_subcarriers as f64).abs() > 1e-6 * self.n_subcarriers as f64 {
            return cfg_err(format!(
                "T_o * B = {nc_from_b} does not equal N_c = {}",
                self.n_subcarriers
            ));
        }
        let t_p = self.pulse_duration();
        let t_i = self.cpi();
        let rel = 1e-9;
        if t_p > self.pri * (1.0 + rel) {
            return cfg_err(format!("pulse duration {t_p:e} exceeds PRI {:e}", self.pri));
        }
        if t_i > self.tracking_period * (1.0 + rel) {
            return cfg_err(format!(
                "CPI {t_i:e} exceeds tracking period {:e}",
                self.tracking_period
            ));
        }
        if self.scheme == Scheme::Cw && (self.pri - t_p).abs() > rel * t_p {
            return cfg_err(format!(
                "CW scheme requires T_r = T_p exactly (T_r = {:e}, T_p = {t_p:e})",
                self.pri
            ));
        }
        let t_s = self.sample_period();
        let n_cp = self.cp_samples();
        if n_cp >= self.n_subcarriers {
            return cfg_err(format!(
                "cyclic prefix of {n_cp} samples is not shorter than the {}-sample symbol",
                self.n_subcarriers
            ));
        }
        let l = round_half_away(self.pri / t_s) as usize;
        let l_ss = round_half_away(t_p / t_s) as usize;
        let assembled = self.symbols_per_pulse * (n_cp + self.n_subcarriers);
        if assembled != l_ss {
            return cfg_err(format!(
                "pulse of {assembled} assembled samples does not match round(T_p/T_s) = {l_ss}"
            ));
        }
        if l_ss > l {
            return cfg_err(format!("L_ss = {l_ss} exceeds L = {l}"));
        }
        let n_cr = match self.scheme {
            Scheme::Pulsed => l,
            Scheme::Cw => self.n_subcarriers,
        };

        let (tau_min, tau_max) = match self.scheme {
            Scheme::Cw => (0.0, self.cp_duration),
            Scheme::Pulsed => {
                let min = if self.full_duplex { 0.0 } else { t_p };
                (min, self.pri - t_p)
            }
        };
        let f_r = self.prf();
        let limits = DerivedLimits {
            r_min: C * tau_min / 2.0,
            r_max: C * tau_max / 2.0,
            tau_min,
            tau_max,
            nu_min: -f_r / 2.0,
            nu_max: f_r / 2.0,
            range_resolution: C / (2.0 * self.bandwidth_hz),
            doppler_resolution: 1.0 / t_i,
        };
        Ok(Derived {
            limits,
            grid: SampleGrid { l, l_ss, n_cp, n_cr },
        })
    }

    /// Doppler processing is meaningful only with more than one pulse per CPI.
    pub fn doppler_processing(&self) -> bool {
        self.n_pulses > 1
    }
}

/// Free-function form of [`RadarConfig::derive`].
pub fn derive(cfg: &RadarConfig) -> Result<Derived> {
    cfg.derive()
}

/// ULA steering vector with half-wavelength spacing:
/// element `t` is `exp(-j pi t sin(theta))`.
pub fn steering(theta: f64, n_elems: usize) -> Result<Vec<Complex64>> {
    if n_elems == 0 {
        return Err(Error::InvalidArgument("steering vector needs at least one element".into()));
    }
    Ok(steering_unchecked(theta, n_elems))
}

pub(crate) fn steering_unchecked(theta: f64, n_elems: usize) -> Vec<Complex64> {
    let s = theta.sin();
    (0..n_elems)
        .map(|t| Complex64::from_polar(1.0, -PI * t as f64 * s))
        .collect()
}

/// Hypothesized (or true) target parameters as seen by one station.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hypothesis {
    /// Round-trip delay (s).
    pub tau: f64,
    /// Doppler shift (Hz).
    pub nu: f64,
    /// Direction of arrival from boresight (rad).
    pub theta: f64,
}

impl Hypothesis {
    pub fn new(tau: f64, nu: f64, theta: f64) -> Self {
        Self { tau, nu, theta }
    }
}

/// Station pose: position in the world frame and array boresight direction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Station {
    pub position: [f64; 2],
    /// Boresight angle measured from world +x (rad).
    #[serde(default)]
    pub boresight: f64,
}

impl Default for Station {
    fn default() -> Self {
        Self { position: [0.0, 0.0], boresight: 0.0 }
    }
}

impl Station {
    /// Position relative to the station in its local frame.
    fn to_local(&self, p: [f64; 2]) -> [f64; 2] {
        let (dx, dy) = (p[0] - self.position[0], p[1] - self.position[1]);
        let (s, c) = self.boresight.sin_cos();
        [c * dx + s * dy, -s * dx + c * dy]
    }

    fn rotate_local(&self, v: [f64; 2]) -> [f64; 2] {
        let (s, c) = self.boresight.sin_cos();
        [c * v[0] + s * v[1], -s * v[0] + c * v[1]]
    }

    /// Translate a Cartesian position/velocity to (delay, Doppler, bearing).
    pub fn polar(&self, position: [f64; 2], velocity: [f64; 2], wavelength: f64) -> Result<Hypothesis> {
        let p = self.to_local(position);
        let v = self.rotate_local(velocity);
        let range = p[0].hypot(p[1]);
        if !(range > 0.0) {
            return Err(Error::UndefinedBearing);
        }
        let radial = (p[0] * v[0] + p[1] * v[1]) / range;
        Ok(Hypothesis {
            tau: 2.0 * range / C,
            nu: -2.0 * radial / wavelength,
            theta: p[1].atan2(p[0]),
        })
    }

    /// World-frame position for a given delay and bearing.
    pub fn position_of(&self, tau: f64, theta: f64) -> [f64; 2] {
        let r = C * tau / 2.0;
        let (s, c) = (self.boresight + theta).sin_cos();
        [self.position[0] + r * c, self.position[1] + r * s]
    }
}

/// Ground-truth target state for one tracking step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetTruth {
    pub position: [f64; 2],
    pub velocity: [f64; 2],
    pub beta: Complex64,
}

impl TargetTruth {
    pub fn range_from(&self, station: &Station) -> f64 {
        let p = station.to_local(self.position);
        p[0].hypot(p[1])
    }

    /// Check that the target is inside the detectable window of `station`.
    pub fn check_limits(&self, cfg: &RadarConfig, limits: &DerivedLimits, station: &Station) -> Result<Hypothesis> {
        let phi = station.polar(self.position, self.velocity, cfg.wavelength())?;
        if phi.tau < limits.tau_min || phi.tau > limits.tau_max {
            return Err(Error::DelayOutOfWindow { tau: phi.tau, min: limits.tau_min, max: limits.tau_max });
        }
        if phi.nu < limits.nu_min || phi.nu > limits.nu_max {
            return Err(Error::InvalidArgument(format!(
                "Doppler {} Hz outside unambiguous band [{}, {}]",
                phi.nu, limits.nu_min, limits.nu_max
            )));
        }
        if phi.theta.abs() >= PI / 2.0 {
            return Err(Error::InvalidArgument(format!(
                "bearing {} rad outside the array sector",
                phi.theta
            )));
        }
        Ok(phi)
    }
}

/// Polar view of a target for a station at the origin with boresight +x.
pub fn cartesian_to_polar(truth: &TargetTruth, cfg: &RadarConfig) -> Result<Hypothesis> {
    Station::default().polar(truth.position, truth.velocity, cfg.wavelength())
}

/// Inverse of [`cartesian_to_polar`] on range and bearing.
pub fn polar_to_cartesian(tau: f64, theta: f64) -> [f64; 2] {
    Station::default().position_of(tau, theta)
}

/// A point scatterer (target of no interest) in the sensing channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scatterer {
    pub beta: Complex64,
    pub tau: f64,
    pub nu: f64,
    pub theta: f64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn close(a: Complex64, b: Complex64) -> bool {
        (a - b).norm() < 1e-12
    }

    #[test]
    fn steering_examples() {
        assert!(steering(0.0, 4).unwrap().iter().all(|&z| close(z, Complex64::new(1.0, 0.0))));
        let v = steering(PI / 2.0, 2).unwrap();
        assert!(close(v[0], 1.0.into()) && close(v[1], (-1.0).into()));
        let v = steering(PI / 6.0, 3).unwrap();
        assert!(close(v[1], Complex64::new(0.0, -1.0)));
        assert!(close(v[2], (-1.0).into()));
        assert!(steering(0.3, 0).is_err());
    }

    #[test]
    fn steering_unit_modulus() {
        for k in 0..50 {
            let th = -1.5 + 3.0 * k as f64 / 49.0;
            for z in steering(th, 17).unwrap() {
                assert_relative_eq!(z.norm(), 1.0, epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn polar_examples() {
        let cfg = RadarConfig::cw_baseline();
        let t = TargetTruth { position: [150.0, 0.0], velocity: [0.0, 0.0], beta: 1.0.into() };
        let phi = cartesian_to_polar(&t, &cfg).unwrap();
        assert_relative_eq!(phi.tau, 300.0 / C, max_relative = 1e-15);
        assert_relative_eq!(phi.tau * 1e6, 1.0007, epsilon = 1e-4);
        assert_eq!(phi.nu, 0.0);
        assert_eq!(phi.theta, 0.0);

        // Approaching at 15 m/s on boresight: positive Doppler 2 * 15 / lambda.
        let t = TargetTruth { position: [100.0, 0.0], velocity: [-15.0, 0.0], beta: 1.0.into() };
        let phi = cartesian_to_polar(&t, &cfg).unwrap();
        let expected = 2.0 * 15.0 / (C / 10e9);
        assert_relative_eq!(phi.nu, expected, max_relative = 1e-12);
        assert_relative_eq!(phi.nu, 1000.69, epsilon = 0.01);

        // Tangential motion: zero Doppler, 45 degree bearing.
        let t = TargetTruth { position: [100.0, 100.0], velocity: [-3.0, 3.0], beta: 1.0.into() };
        let phi = cartesian_to_polar(&t, &cfg).unwrap();
        assert!(phi.nu.abs() < 1e-9);
        assert_relative_eq!(phi.theta, PI / 4.0, epsilon = 1e-15);

        let t = TargetTruth { position: [0.0, 0.0], velocity: [1.0, 0.0], beta: 1.0.into() };
        assert!(matches!(cartesian_to_polar(&t, &cfg), Err(Error::UndefinedBearing)));
    }

    #[test]
    fn polar_roundtrip_on_rotated_station() {
        let st = Station { position: [10.0, -5.0], boresight: 0.7 };
        for &(x, y) in &[(40.0, 3.0), (25.0, 30.0), (60.0, -20.0)] {
            let phi = st.polar([x, y], [0.0, 0.0], 0.03).unwrap();
            let p = st.position_of(phi.tau, phi.theta);
            assert_relative_eq!(p[0], x, max_relative = 1e-12);
            assert_relative_eq!(p[1], y, max_relative = 1e-12);
        }
    }

    #[test]
    fn cw_baseline_derivation() {
        let cfg = RadarConfig::cw_baseline();
        let d = cfg.derive().unwrap();
        assert_relative_eq!(cfg.subcarrier_spacing(), 0.2e6, max_relative = 1e-12);
        assert_relative_eq!(cfg.sample_period() * 1e6, 0.019531, epsilon = 1e-6);
        assert_relative_eq!(cfg.pulse_duration(), 6e-6, max_relative = 1e-12);
        assert_relative_eq!(cfg.cpi(), 6e-6, max_relative = 1e-12);
        assert_eq!(d.grid.l_ss, 307);
        assert_eq!(d.grid.n_cp, 51);
        assert_eq!(d.grid.l, 307);
        assert_eq!(d.grid.n_cr, 256);
        // CP-limited ranging: C * 1us / 2 ~ 149.9 m.
        assert_relative_eq!(d.limits.r_max, 149.896229, epsilon = 1e-6);
        assert_relative_eq!(
            cfg.symbol_duration,
            cfg.n_subcarriers as f64 / cfg.bandwidth_hz,
            max_relative = 1e-15
        );
    }

    #[test]
    fn pulsed_silent_time_sets_range() {
        let mut cfg = RadarConfig::cw_baseline();
        cfg.scheme = Scheme::Pulsed;
        cfg.full_duplex = false;
        cfg.pri = 2.0 * cfg.pulse_duration();
        let d = cfg.derive().unwrap();
        assert_relative_eq!(d.limits.r_max, C * cfg.pulse_duration() / 2.0, max_relative = 1e-12);
        assert_relative_eq!(d.limits.r_min, C * cfg.pulse_duration() / 2.0, max_relative = 1e-12);
        assert_eq!(d.grid.l, 614);
        assert_eq!(d.grid.n_cr, 614);
    }

    #[test]
    fn ordering_violations_rejected() {
        let mut cfg = RadarConfig::cw_baseline();
        cfg.scheme = Scheme::Pulsed;
        cfg.pri = 3e-6;
        assert!(matches!(cfg.derive(), Err(Error::Config(_))));
        let mut cfg = RadarConfig::cw_baseline();
        cfg.pri = 7e-6;
        assert!(cfg.derive().is_err(), "CW requires T_r = T_p");
        let mut cfg = RadarConfig::cw_baseline();
        cfg.symbol_duration = 4e-6;
        assert!(cfg.derive().is_err(), "T_o must equal N_c / B");
    }

    #[test]
    fn config_json_field_names() {
        let json = serde_json::to_value(RadarConfig::cw_baseline()).unwrap();
        for key in ["f_c", "b", "p_t", "n_t", "n_r", "t_t", "n_p", "t_r", "t_c", "t_o", "m", "n_c", "scheme", "snr_db"] {
            assert!(json.get(key).is_some(), "missing {key}");
        }
        assert_eq!(json["scheme"], "cw");
    }
}
