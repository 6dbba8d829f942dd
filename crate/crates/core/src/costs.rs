//! Matched filters, the four Gibbs cost functions and tracking-gate /
//! ambiguity utilities.
//!
//! `h1`/`h2` are least-squares residuals after eliminating the complex gain;
//! `h3`/`h4` are negative log matched-filter powers. A zero matched-filter
//! output makes `h3`/`h4` equal to `+inf`, which maps to zero Gibbs weight.

use std::f64::consts::PI;

use ndarray::{ArrayView4, Axis};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::channel::{Domain, SnapshotCube};
use crate::error::{Error, Result};
use crate::radar::{Hypothesis, RadarConfig};
use crate::waveform::{ConstellationCube, TxFreqSignal, TxTimeSignal};

/// How the transmit spatial correlation enters `h1`/`h2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RsMode {
    /// Expected correlation of i.i.d. unit-power symbols (`P_t I` per sample).
    #[default]
    White,
    /// Empirical correlation of the transmitted record.
    Empirical,
}

/// Conjugated steering weights: `sum_t w[t] x[t] = a(theta)^H x`.
fn beam_weights(theta: f64, n: usize) -> Vec<Complex64> {
    let s = theta.sin();
    (0..n).map(|t| Complex64::from_polar(1.0, PI * t as f64 * s)).collect()
}

#[inline]
fn beam(w: &[Complex64], x: &[Complex64]) -> Complex64 {
    let mut re = 0.0;
    let mut im = 0.0;
    for (a, b) in w.iter().zip(x) {
        re += a.re * b.re - a.im * b.im;
        im += a.re * b.im + a.im * b.re;
    }
    Complex64::new(re, im)
}

fn contiguous<'a>(v: &'a ArrayView4<'a, Complex64>, what: &str) -> Result<&'a [Complex64]> {
    v.as_slice().ok_or_else(|| Error::Shape(format!("{what} is not contiguous")))
}

/// Frequency-domain matched filter over `(pulse, symbol, bin, antenna)` data:
/// `sum y^H b a^H s exp(-j 2 pi n df tau) exp(j 2 pi p T_r nu)`.
fn spectral_mf(y: ArrayView4<Complex64>, s: ArrayView4<Complex64>, bin_width: f64, pri: f64, h: &Hypothesis) -> Result<Complex64> {
    let (n_p, m, n, n_r) = y.dim();
    let (sp, sm, sn, n_t) = s.dim();
    if (sp, sm, sn) != (n_p, m, n) {
        return Err(Error::Shape(format!("rx {:?} and tx {:?} grids differ", y.dim(), s.dim())));
    }
    let ys = contiguous(&y, "rx cube")?;
    let ss = contiguous(&s, "tx reference")?;
    let wb = beam_weights(h.theta, n_r);
    let wa = beam_weights(h.theta, n_t);
    let step = Complex64::from_polar(1.0, -2.0 * PI * bin_width * h.tau);
    let mut total = Complex64::default();
    for p in 0..n_p {
        let mut acc = Complex64::default();
        for mi in 0..m {
            let mut ramp = Complex64::new(1.0, 0.0);
            for k in 0..n {
                let row = (p * m + mi) * n + k;
                let by = beam(&wb, &ys[row * n_r..(row + 1) * n_r]);
                let bs = beam(&wa, &ss[row * n_t..(row + 1) * n_t]);
                acc += by.conj() * bs * ramp;
                ramp *= step;
            }
        }
        total += acc * Complex64::from_polar(1.0, 2.0 * PI * p as f64 * pri * h.nu);
    }
    Ok(total)
}

/// `N_r * sum |a^H s|^2` over every `(pulse, symbol, bin)` of a reference.
fn spectral_model_energy(s: ArrayView4<Complex64>, n_r: usize, theta: f64) -> Result<f64> {
    let n_t = s.dim().3;
    let ss = contiguous(&s, "tx reference")?;
    let wa = beam_weights(theta, n_t);
    Ok(n_r as f64 * ss.chunks_exact(n_t).map(|row| beam(&wa, row).norm_sqr()).sum::<f64>())
}

fn expect_domain(cube: &SnapshotCube, d: Domain) -> Result<()> {
    if cube.domain != d {
        return Err(Error::InvalidArgument(format!("expected a {d:?} cube, got {:?}", cube.domain)));
    }
    Ok(())
}

/// Time-domain matched filter with the delay quantized to `round(tau/T_s)`.
pub fn mf_time(y: &SnapshotCube, s: &TxTimeSignal, h: &Hypothesis, cfg: &RadarConfig) -> Result<Complex64> {
    expect_domain(y, Domain::Time)?;
    let (n_p, _, l, n_r) = y.y.dim();
    let (sp, sl, n_t) = s.s.dim();
    if sp != n_p || sl != l {
        return Err(Error::Shape(format!("rx {:?} and tx {:?} records differ", y.y.dim(), s.s.dim())));
    }
    let ys = y.y.as_slice().ok_or_else(|| Error::Shape("rx cube is not contiguous".into()))?;
    let ss = s.s.as_slice().ok_or_else(|| Error::Shape("tx record is not contiguous".into()))?;
    let q = (h.tau / cfg.sample_period()).round();
    let wb = beam_weights(h.theta, n_r);
    let wa = beam_weights(h.theta, n_t);
    let mut total = Complex64::default();
    for p in 0..n_p {
        let mut acc = Complex64::default();
        for li in 0..l {
            let src = li as f64 - q;
            if src < 0.0 || src >= l as f64 {
                continue;
            }
            let src = src as usize;
            let bs = beam(&wa, &ss[(p * l + src) * n_t..(p * l + src + 1) * n_t]);
            if bs == Complex64::default() {
                continue;
            }
            let by = beam(&wb, &ys[(p * l + li) * n_r..(p * l + li + 1) * n_r]);
            acc += by.conj() * bs;
        }
        total += acc * Complex64::from_polar(1.0, 2.0 * PI * p as f64 * cfg.pri * h.nu);
    }
    Ok(total)
}

/// Pulsed frequency-domain matched filter on full-PRI DFT bins.
pub fn mf_freq(ybar: &SnapshotCube, sbar: &TxFreqSignal, h: &Hypothesis, cfg: &RadarConfig) -> Result<Complex64> {
    expect_domain(ybar, Domain::Freq)?;
    spectral_mf(ybar.y.view(), sbar.s.view().insert_axis(Axis(1)), sbar.bin_width, cfg.pri, h)
}

/// CW per-symbol matched filter; the Doppler phase depends only on the pulse.
pub fn mf_cw(ybar: &SnapshotCube, c: &ConstellationCube, h: &Hypothesis, cfg: &RadarConfig) -> Result<Complex64> {
    expect_domain(ybar, Domain::Cw)?;
    spectral_mf(ybar.y.view(), c.c.view(), cfg.subcarrier_spacing(), cfg.pri, h)
}

fn ls_residual(energy: f64, mf: Complex64, denom: f64) -> Result<f64> {
    if !(denom > 0.0) || !denom.is_finite() {
        return Err(Error::Numerical(format!("model energy {denom} is not positive")));
    }
    Ok(energy - mf.norm_sqr() / denom)
}

/// Least-squares cost in the time domain with the gain eliminated.
pub fn h1(y: &SnapshotCube, s: &TxTimeSignal, h: &Hypothesis, cfg: &RadarConfig, mode: RsMode) -> Result<f64> {
    let mf = mf_time(y, s, h, cfg)?;
    let denom = match mode {
        RsMode::White => cfg.tx_power * (cfg.n_tx * cfg.n_rx * cfg.n_pulses * s.l_ss) as f64,
        RsMode::Empirical => spectral_model_energy(s.s.view().insert_axis(Axis(1)), cfg.n_rx, h.theta)?,
    };
    ls_residual(y.energy(), mf, denom)
}

/// Least-squares cost on full-PRI DFT bins. In white mode each bin carries
/// `L * L_ss * P_t / N_cr` per antenna in expectation (unnormalized DFT).
pub fn h2(ybar: &SnapshotCube, sbar: &TxFreqSignal, h: &Hypothesis, cfg: &RadarConfig, mode: RsMode) -> Result<f64> {
    let mf = mf_freq(ybar, sbar, h, cfg)?;
    let denom = match mode {
        RsMode::White => {
            let g = cfg.derive()?.grid;
            cfg.tx_power * (cfg.n_tx * cfg.n_rx * cfg.n_pulses * g.l * g.l_ss) as f64
        }
        RsMode::Empirical => spectral_model_energy(sbar.s.view().insert_axis(Axis(1)), cfg.n_rx, h.theta)?,
    };
    ls_residual(ybar.energy(), mf, denom)
}

/// CW least-squares cost, summed over pulses, symbols and subcarriers.
pub fn h2_cw(ybar: &SnapshotCube, c: &ConstellationCube, h: &Hypothesis, cfg: &RadarConfig, mode: RsMode) -> Result<f64> {
    let mf = mf_cw(ybar, c, h, cfg)?;
    let denom = match mode {
        RsMode::White => {
            cfg.tx_power * (cfg.n_tx * cfg.n_rx * cfg.n_pulses * cfg.symbols_per_pulse * cfg.n_subcarriers) as f64
        }
        RsMode::Empirical => spectral_model_energy(c.c.view(), cfg.n_rx, h.theta)?,
    };
    ls_residual(ybar.energy(), mf, denom)
}

/// `-ln |mf|^2`, `+inf` when the matched filter output vanishes.
pub fn neg_log_power(mf: Complex64) -> f64 {
    let p = mf.norm_sqr();
    if p > 0.0 {
        -p.ln()
    } else {
        f64::INFINITY
    }
}

pub fn h3(y: &SnapshotCube, s: &TxTimeSignal, h: &Hypothesis, cfg: &RadarConfig) -> Result<f64> {
    Ok(neg_log_power(mf_time(y, s, h, cfg)?))
}

pub fn h4(ybar: &SnapshotCube, sbar: &TxFreqSignal, h: &Hypothesis, cfg: &RadarConfig) -> Result<f64> {
    Ok(neg_log_power(mf_freq(ybar, sbar, h, cfg)?))
}

pub fn h4_cw(ybar: &SnapshotCube, c: &ConstellationCube, h: &Hypothesis, cfg: &RadarConfig) -> Result<f64> {
    Ok(neg_log_power(mf_cw(ybar, c, h, cfg)?))
}

/// Frequency-domain received data paired with its transmit reference, the
/// form every filter consumes. Pulsed data are full-PRI DFT bins (one
/// "symbol" per pulse); CW data are per-symbol subcarriers.
#[derive(Debug, Clone)]
pub struct Observation {
    pub y: ndarray::Array4<Complex64>,
    pub s: ndarray::Array4<Complex64>,
    pub bin_width: f64,
    pub pri: f64,
    /// Noise variance of each entry of `y`.
    pub noise_var: f64,
}

impl Observation {
    pub fn cw(ybar: &SnapshotCube, c: &ConstellationCube, cfg: &RadarConfig) -> Result<Self> {
        expect_domain(ybar, Domain::Cw)?;
        Ok(Self {
            y: ybar.y.clone(),
            s: c.c.clone(),
            bin_width: cfg.subcarrier_spacing(),
            pri: cfg.pri,
            noise_var: ybar.noise_var,
        })
    }

    pub fn pulsed(ybar: &SnapshotCube, sbar: &TxFreqSignal, cfg: &RadarConfig) -> Result<Self> {
        expect_domain(ybar, Domain::Freq)?;
        Ok(Self {
            y: ybar.y.clone(),
            s: sbar.s.clone().insert_axis(Axis(1)),
            bin_width: sbar.bin_width,
            pri: cfg.pri,
            noise_var: ybar.noise_var,
        })
    }

    pub fn n_rx(&self) -> usize {
        self.y.dim().3
    }

    pub fn matched_filter(&self, h: &Hypothesis) -> Complex64 {
        spectral_mf(self.y.view(), self.s.view(), self.bin_width, self.pri, h).expect("observation shapes checked at construction")
    }

    /// `||g(phi)||^2` for the rank-one echo model at bearing `theta`.
    pub fn model_energy(&self, theta: f64) -> f64 {
        spectral_model_energy(self.s.view(), self.n_rx(), theta).expect("contiguous reference")
    }

    pub fn energy(&self) -> f64 {
        self.y.iter().map(|z| z.norm_sqr()).sum()
    }
}

/// Half-open intervals of the tracking gate around a predicted hypothesis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackingGate {
    pub tau: (f64, f64),
    pub nu: (f64, f64),
    pub theta: (f64, f64),
}

impl TrackingGate {
    pub fn contains(&self, h: &Hypothesis) -> bool {
        let inside = |v: f64, (lo, hi): (f64, f64)| v >= lo && v <= hi;
        inside(h.tau, self.tau) && inside(h.nu, self.nu) && inside(h.theta, self.theta)
    }
}

/// Gate of one resolution cell either side: `1/B` in delay, `1/T_i` in
/// Doppler, and `2/N_tr` in sine-of-bearing.
pub fn tracking_gate(center: &Hypothesis, cfg: &RadarConfig) -> TrackingGate {
    let dt = 1.0 / cfg.bandwidth_hz;
    let dn = 1.0 / cfg.cpi();
    let ds = 2.0 / cfg.n_tr() as f64;
    let s = center.theta.sin();
    let clip = |v: f64| v.clamp(-1.0, 1.0);
    TrackingGate {
        tau: (center.tau - dt, center.tau + dt),
        nu: (center.nu - dn, center.nu + dn),
        theta: (clip(s - ds).asin(), clip(s + ds).asin()),
    }
}

/// Dirichlet kernel `|sin(pi x) / sin(pi x / N)|`, equal to `N` at `x = mN`.
pub fn dirichlet(n: usize, x: f64) -> f64 {
    let nf = n as f64;
    let r = x / nf;
    if (r - r.round()).abs() < 1e-12 {
        return nf;
    }
    ((PI * x).sin() / (PI * r).sin()).abs()
}

/// Expected matched-filter magnitude for white unit-power frequency-domain
/// symbols and no scatterers: a product of four Dirichlet kernels.
pub fn expected_ambiguity_magnitude(h: &Hypothesis, truth: &Hypothesis, beta_abs: f64, cfg: &RadarConfig) -> Result<f64> {
    let n_cr = cfg.derive()?.grid.n_cr;
    let dsin = h.theta.sin() - truth.theta.sin();
    Ok(beta_abs
        * cfg.tx_power
        * dirichlet(cfg.n_tx, cfg.n_tx as f64 / 2.0 * dsin)
        * dirichlet(cfg.n_rx, cfg.n_rx as f64 / 2.0 * dsin)
        * dirichlet(n_cr, cfg.bandwidth_hz * (truth.tau - h.tau))
        * dirichlet(cfg.n_pulses, cfg.cpi() * (h.nu - truth.nu)))
}

/// The Gibbs cost a filter evaluates for the configured scheme.
pub fn scheme_cost(obs: &Observation, h: &Hypothesis) -> f64 {
    neg_log_power(obs.matched_filter(h))
}
