//! Received-signal simulation: target and scatterer echoes plus complex
//! Gaussian noise, in the time domain or per OFDM symbol after CP removal.

use std::f64::consts::PI;
use std::io::{Read, Write};

use ndarray::{Array3, Array4};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::error::{Error, Result};
use crate::radar::{steering_unchecked, RadarConfig, Scatterer, Station, TargetTruth};
use crate::rng::{self, tag};
use crate::waveform::{dft_fast_time, ConstellationCube, TxTimeSignal};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Domain {
    /// Fast-time samples, `(pulse, 1, sample, rx)`.
    Time,
    /// Full-PRI DFT bins, `(pulse, 1, bin, rx)`.
    Freq,
    /// Per-symbol subcarriers after CP removal, `(pulse, symbol, subcarrier, rx)`.
    Cw,
}

/// Received data for one tracking step.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotCube {
    pub domain: Domain,
    pub y: Array4<Complex64>,
    /// Noise variance of each complex entry of `y`.
    pub noise_var: f64,
}

impl SnapshotCube {
    pub fn energy(&self) -> f64 {
        self.y.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn n_rx(&self) -> usize {
        self.y.dim().3
    }

    pub fn scale(&mut self, c: f64) {
        self.y.mapv_inplace(|z| z * c);
    }
}

/// Delay, Doppler, bearing and gain of the target as seen from `station`.
pub fn target_echo(truth: &TargetTruth, station: &Station, cfg: &RadarConfig) -> Result<Scatterer> {
    let h = station.polar(truth.position, truth.velocity, cfg.wavelength())?;
    Ok(Scatterer { beta: truth.beta, tau: h.tau, nu: h.nu, theta: h.theta })
}

fn check_target_window(target: &Scatterer, cfg: &RadarConfig) -> Result<()> {
    let lim = cfg.derive()?.limits;
    let tol = 1e-12 * lim.tau_max.max(1e-9);
    if target.tau < lim.tau_min - tol || target.tau > lim.tau_max + tol {
        return Err(Error::DelayOutOfWindow { tau: target.tau, min: lim.tau_min, max: lim.tau_max });
    }
    Ok(())
}

fn complex_noise<R: Rng>(rng: &mut R, std: f64) -> Complex64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(re, im) * std
}

fn dot_conj(w: &[Complex64], x: &[Complex64]) -> Complex64 {
    w.iter().zip(x).fold(Complex64::default(), |acc, (a, b)| acc + a.conj() * b)
}

/// Time-domain snapshot: each echo is the transmit record delayed by
/// `round(tau/T_s)` samples, steered, and rotated by `exp(j 2 pi nu p T_r)`.
///
/// Usable for either scheme; the CW case exists for cross-checking the
/// frequency-domain model.
pub fn simulate_rx_time(
    s: &TxTimeSignal,
    target: &Scatterer,
    scatterers: &[Scatterer],
    cfg: &RadarConfig,
    seed: u64,
) -> Result<SnapshotCube> {
    check_target_window(target, cfg)?;
    let (n_p, l, n_t) = s.s.dim();
    if n_t != cfg.n_tx || n_p != cfg.n_pulses {
        return Err(Error::Shape(format!("transmit record {:?} does not match config", s.s.dim())));
    }
    for sc in scatterers {
        if sc.tau < 0.0 || sc.tau >= cfg.pri {
            return Err(Error::InvalidArgument(format!("scatterer delay {:e} s outside [0, T_r)", sc.tau)));
        }
    }
    let n_r = cfg.n_rx;
    let t_s = cfg.sample_period();
    let mut y = Array4::<Complex64>::zeros((n_p, 1, l, n_r));
    let tx = s.s.as_standard_layout();
    let tx = tx.as_slice().expect("standard layout");
    for echo in std::iter::once(target).chain(scatterers) {
        let q = (echo.tau / t_s).round() as usize;
        let a = steering_unchecked(echo.theta, n_t);
        let b = steering_unchecked(echo.theta, n_r);
        for p in 0..n_p {
            let rot = echo.beta * Complex64::from_polar(1.0, 2.0 * PI * echo.nu * p as f64 * cfg.pri);
            for li in q..l {
                let src = &tx[(p * l + li - q) * n_t..(p * l + li - q + 1) * n_t];
                let g = rot * dot_conj(&a, src);
                if g == Complex64::default() {
                    continue;
                }
                for (r, br) in b.iter().enumerate() {
                    y[[p, 0, li, r]] += g * br;
                }
            }
        }
    }
    let var = cfg.noise_variance();
    let std = (var / 2.0).sqrt();
    for p in 0..n_p {
        let mut rng = rng::stream(seed, &[tag::NOISE, p as u64]);
        for z in y.slice_mut(ndarray::s![p, .., .., ..]).iter_mut() {
            *z += complex_noise(&mut rng, std);
        }
    }
    Ok(SnapshotCube { domain: Domain::Time, y, noise_var: var })
}

/// Per-symbol frequency-domain snapshot for the CW scheme.
pub fn simulate_rx_cw(
    c: &ConstellationCube,
    target: &Scatterer,
    scatterers: &[Scatterer],
    cfg: &RadarConfig,
    seed: u64,
) -> Result<SnapshotCube> {
    if cfg.scheme != crate::radar::Scheme::Cw {
        return Err(Error::WrongScheme { expected: "cw" });
    }
    check_target_window(target, cfg)?;
    let (n_p, m, n_c, n_t) = c.dims();
    if n_t != cfg.n_tx || n_p != cfg.n_pulses || m != cfg.symbols_per_pulse || n_c != cfg.n_subcarriers {
        return Err(Error::Shape(format!("constellation {:?} does not match config", c.dims())));
    }
    for sc in scatterers {
        if sc.tau < 0.0 || sc.tau > cfg.cp_duration * (1.0 + 1e-12) {
            return Err(Error::InvalidArgument(format!(
                "scatterer delay {:e} s exceeds the cyclic prefix",
                sc.tau
            )));
        }
    }
    let n_r = cfg.n_rx;
    let df = cfg.subcarrier_spacing();
    let mut y = Array4::<Complex64>::zeros((n_p, m, n_c, n_r));
    let cs = c.c.as_standard_layout();
    let cs = cs.as_slice().expect("standard layout");
    for echo in std::iter::once(target).chain(scatterers) {
        let a = steering_unchecked(echo.theta, n_t);
        let b = steering_unchecked(echo.theta, n_r);
        let ramp: Vec<Complex64> = (0..n_c)
            .map(|n| Complex64::from_polar(1.0, -2.0 * PI * n as f64 * df * echo.tau))
            .collect();
        for p in 0..n_p {
            let rot = echo.beta * Complex64::from_polar(1.0, 2.0 * PI * echo.nu * p as f64 * cfg.pri);
            for mi in 0..m {
                for n in 0..n_c {
                    let row = ((p * m + mi) * n_c + n) * n_t;
                    let g = rot * ramp[n] * dot_conj(&a, &cs[row..row + n_t]);
                    for (r, br) in b.iter().enumerate() {
                        y[[p, mi, n, r]] += g * br;
                    }
                }
            }
        }
    }
    let var = cfg.noise_variance();
    let std = (var / 2.0).sqrt();
    for p in 0..n_p {
        for mi in 0..m {
            let mut rng = rng::stream(seed, &[tag::NOISE, p as u64, mi as u64]);
            for z in y.slice_mut(ndarray::s![p, mi, .., ..]).iter_mut() {
                *z += complex_noise(&mut rng, std);
            }
        }
    }
    Ok(SnapshotCube { domain: Domain::Cw, y, noise_var: var })
}

/// Full-PRI forward DFT of a time-domain snapshot (same convention as
/// [`crate::waveform::fft_full_pri`]).
pub fn rx_fft(cube: &SnapshotCube) -> Result<SnapshotCube> {
    if cube.domain != Domain::Time {
        return Err(Error::InvalidArgument("rx_fft expects a time-domain cube".into()));
    }
    let (n_p, _, l, n_r) = cube.y.dim();
    let y3: Array3<Complex64> = cube
        .y
        .clone()
        .into_shape_with_order((n_p, l, n_r))
        .map_err(|e| Error::Shape(e.to_string()))?;
    let f = dft_fast_time(&y3).insert_axis(ndarray::Axis(1));
    Ok(SnapshotCube { domain: Domain::Freq, y: f, noise_var: cube.noise_var * l as f64 })
}

/// Fast-fading path gain for tracking step `k`:
/// `[0.9 + 0.1 (2 r1 - 1)] exp(j 2 pi r2)`, `r1 ~ U[0,1]`, `r2 ~ N(0,1)`.
pub fn sample_path_gain(seed: u64, k: u64) -> Complex64 {
    let mut rng = rng::stream(seed, &[tag::PATH_GAIN, k]);
    let r1: f64 = rng.random();
    let r2: f64 = Normal::new(0.0, 1.0).expect("unit normal").sample(&mut rng);
    Complex64::from_polar(0.9 + 0.1 * (2.0 * r1 - 1.0), 2.0 * PI * r2)
}

const MAGIC: &[u8; 8] = b"ISACCUBE";

/// Dump a cube as: magic, domain byte, four little-endian u64 dims,
/// noise variance, then interleaved re/im f64 values.
pub fn write_cube<W: Write>(cube: &SnapshotCube, mut w: W) -> Result<()> {
    w.write_all(MAGIC)?;
    let d = match cube.domain {
        Domain::Time => 0u8,
        Domain::Freq => 1,
        Domain::Cw => 2,
    };
    w.write_all(&[d])?;
    let (a, b, c, e) = cube.y.dim();
    for v in [a, b, c, e] {
        w.write_all(&(v as u64).to_le_bytes())?;
    }
    w.write_all(&cube.noise_var.to_le_bytes())?;
    for z in cube.y.iter() {
        w.write_all(&z.re.to_le_bytes())?;
        w.write_all(&z.im.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_cube<R: Read>(mut r: R) -> Result<SnapshotCube> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::InvalidArgument("not a snapshot cube dump".into()));
    }
    let mut d = [0u8; 1];
    r.read_exact(&mut d)?;
    let domain = match d[0] {
        0 => Domain::Time,
        1 => Domain::Freq,
        2 => Domain::Cw,
        x => return Err(Error::InvalidArgument(format!("unknown domain tag {x}"))),
    };
    let mut buf = [0u8; 8];
    let mut dims = [0usize; 4];
    for v in dims.iter_mut() {
        r.read_exact(&mut buf)?;
        *v = u64::from_le_bytes(buf) as usize;
    }
    r.read_exact(&mut buf)?;
    let noise_var = f64::from_le_bytes(buf);
    let n = dims.iter().product::<usize>();
    let mut data = Vec::with_capacity(n);
    for _ in 0..n {
        r.read_exact(&mut buf)?;
        let re = f64::from_le_bytes(buf);
        r.read_exact(&mut buf)?;
        data.push(Complex64::new(re, f64::from_le_bytes(buf)));
    }
    let y = Array4::from_shape_vec((dims[0], dims[1], dims[2], dims[3]), data)
        .map_err(|e| Error::Shape(e.to_string()))?;
    Ok(SnapshotCube { domain, y, noise_var })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::radar::Scheme;
    use crate::waveform::{assemble_pulse, gen_constellation, ofdm_demodulate};
    use approx::assert_relative_eq;

    fn pulsed_cfg() -> RadarConfig {
        let b = 1e6;
        RadarConfig {
            carrier_hz: 10e9,
            bandwidth_hz: b,
            tx_power: 1.0,
            n_tx: 1,
            n_rx: 1,
            tracking_period: 1.0,
            n_pulses: 4,
            pri: 40.0 / b,
            cp_duration: 4.0 / b,
            symbol_duration: 16.0 / b,
            symbols_per_pulse: 1,
            n_subcarriers: 16,
            scheme: Scheme::Pulsed,
            snr_db: 300.0,
            full_duplex: true,
        }
    }

    fn echo(tau: f64, nu: f64, theta: f64) -> Scatterer {
        Scatterer { beta: Complex64::new(1.0, 0.0), tau, nu, theta }
    }

    #[test]
    fn pure_delay() {
        let cfg = pulsed_cfg();
        let c = gen_constellation(&cfg, 16, 1).unwrap();
        let s = assemble_pulse(&c, &cfg).unwrap();
        let q = 7;
        let y = simulate_rx_time(&s, &echo(q as f64 / 1e6, 0.0, 0.0), &[], &cfg, 3).unwrap();
        for p in 0..4 {
            for l in 0..40 {
                let expect = if l >= q { s.s[[p, l - q, 0]] } else { Complex64::default() };
                assert!((y.y[[p, 0, l, 0]] - expect).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn doppler_quarter_prf_advances_quarter_turn() {
        let cfg = pulsed_cfg();
        let mut c = gen_constellation(&cfg, 16, 1).unwrap();
        // identical symbols in every pulse
        for p in 1..4 {
            let first = c.c.slice(ndarray::s![0, .., .., ..]).to_owned();
            c.c.slice_mut(ndarray::s![p, .., .., ..]).assign(&first);
        }
        let s = assemble_pulse(&c, &cfg).unwrap();
        let y = simulate_rx_time(&s, &echo(0.0, cfg.prf() / 4.0, 0.0), &[], &cfg, 3).unwrap();
        for p in 1..4 {
            let ratio = y.y[[p, 0, 5, 0]] / y.y[[0, 0, 5, 0]];
            let expect = Complex64::from_polar(1.0, PI / 2.0 * p as f64);
            assert!((ratio - expect).norm() < 1e-9);
        }
    }

    #[test]
    fn noise_floor_matches_snr() {
        let mut cfg = pulsed_cfg();
        cfg.snr_db = -10.0;
        cfg.n_rx = 4;
        cfg.n_pulses = 1;
        let mut target = echo(0.0, 0.0, 0.0);
        target.beta = Complex64::default();
        let s = TxTimeSignal { s: Array3::zeros((1, 40, 1)), l_ss: 20 };
        let mut acc = Vec::new();
        let mut pseudo = Complex64::default();
        for seed in 0..700 {
            let y = simulate_rx_time(&s, &target, &[], &cfg, seed).unwrap();
            acc.extend(y.y.iter().map(|z| z.norm_sqr()));
            pseudo += y.y.iter().map(|z| z * z).sum::<Complex64>();
        }
        let n = acc.len() as f64;
        assert!(n >= 1e5);
        let mean = acc.iter().sum::<f64>() / n;
        assert_relative_eq!(mean, 10.0, max_relative = 0.02);
        // circular symmetry: pseudo-covariance near zero relative to power
        assert!((pseudo / n).norm() < 0.2, "pseudo-covariance {}", pseudo / n);
    }

    #[test]
    fn cw_noise_free_identity_and_one_bin_ramp() {
        let mut cfg = RadarConfig::cw_baseline();
        cfg.n_tx = 1;
        cfg.n_rx = 1;
        cfg.snr_db = 400.0;
        let c = gen_constellation(&cfg, 64, 2).unwrap();
        let y = simulate_rx_cw(&c, &echo(0.0, 0.0, 0.0), &[], &cfg, 0).unwrap();
        for (a, b) in y.y.iter().zip(c.c.iter()) {
            assert!((a - b).norm() < 1e-9);
        }
        let tau = cfg.symbol_duration / cfg.n_subcarriers as f64;
        let y = simulate_rx_cw(&c, &echo(tau, 0.0, 0.0), &[], &cfg, 0).unwrap();
        for n in 0..256 {
            let expect = c.c[[0, 0, n, 0]] * Complex64::from_polar(1.0, -2.0 * PI * n as f64 / 256.0);
            assert!((y.y[[0, 0, n, 0]] - expect).norm() < 1e-9);
        }
    }

    #[test]
    fn time_and_cw_models_agree() {
        let mut cfg = RadarConfig::cw_baseline();
        cfg.n_tx = 3;
        cfg.n_rx = 2;
        cfg.n_pulses = 2;
        cfg.symbols_per_pulse = 2;
        cfg.pri = cfg.pulse_duration();
        cfg.snr_db = 400.0;
        let c = gen_constellation(&cfg, 64, 8).unwrap();
        let s = assemble_pulse(&c, &cfg).unwrap();
        let t_s = cfg.sample_period();
        let target = Scatterer { beta: Complex64::new(0.3, -0.8), tau: 17.0 * t_s, nu: 1234.0, theta: 0.4 };
        let sc = [Scatterer { beta: Complex64::new(0.5, 0.1), tau: 40.0 * t_s, nu: -300.0, theta: -0.7 }];
        let yt = simulate_rx_time(&s, &target, &sc, &cfg, 0).unwrap();
        let y3 = yt.y.clone().into_shape_with_order((2, 614, 2)).unwrap();
        let demod = ofdm_demodulate(&y3, &cfg).unwrap();
        let yc = simulate_rx_cw(&c, &target, &sc, &cfg, 0).unwrap();
        let scale = yc.y.iter().map(|z| z.norm()).fold(0.0, f64::max);
        for (a, b) in demod.iter().zip(yc.y.iter()) {
            assert!((a - b).norm() < 1e-9 * scale);
        }
    }

    #[test]
    fn superposition() {
        let mut cfg = pulsed_cfg();
        cfg.n_tx = 2;
        cfg.n_rx = 3;
        let c = gen_constellation(&cfg, 16, 1).unwrap();
        let s = assemble_pulse(&c, &cfg).unwrap();
        let t = echo(3e-6, 100.0, 0.2);
        let a = echo(5e-6, -2000.0, -0.3);
        let b = echo(9e-6, 500.0, 0.9);
        let both = simulate_rx_time(&s, &t, &[a, b], &cfg, 1).unwrap();
        let mut zero = t;
        zero.beta = Complex64::default();
        let only_t = simulate_rx_time(&s, &t, &[], &cfg, 1).unwrap();
        let only_a = simulate_rx_time(&s, &zero, &[a], &cfg, 1).unwrap();
        let only_b = simulate_rx_time(&s, &zero, &[b], &cfg, 1).unwrap();
        for i in 0..both.y.len() {
            let sum = only_t.y.as_slice().unwrap()[i] + only_a.y.as_slice().unwrap()[i] + only_b.y.as_slice().unwrap()[i];
            assert!((both.y.as_slice().unwrap()[i] - sum).norm() < 1e-9);
        }
    }

    #[test]
    fn target_outside_window_rejected() {
        let mut cfg = pulsed_cfg();
        cfg.full_duplex = false;
        let s = TxTimeSignal { s: Array3::zeros((4, 40, 1)), l_ss: 20 };
        // TDD: minimum delay is T_p = 20 us
        let r = simulate_rx_time(&s, &echo(5e-6, 0.0, 0.0), &[], &cfg, 0);
        assert!(matches!(r, Err(Error::DelayOutOfWindow { .. })));
        let c = gen_constellation(&RadarConfig::cw_baseline(), 4, 0).unwrap();
        let r = simulate_rx_cw(&c, &echo(2e-6, 0.0, 0.0), &[], &RadarConfig::cw_baseline(), 0);
        assert!(matches!(r, Err(Error::DelayOutOfWindow { .. })));
    }

    #[test]
    fn path_gain_statistics() {
        let n = 1_000_000u64;
        let mut m2 = 0.0;
        for k in 0..n {
            let b = sample_path_gain(5, k);
            assert!((0.8 - 1e-12..=1.0 + 1e-12).contains(&b.norm()));
            m2 += b.norm_sqr();
        }
        assert!((m2 / n as f64 - (0.81 + 0.01 / 3.0)).abs() < 1e-3);
        assert_eq!(sample_path_gain(5, 17), sample_path_gain(5, 17));
    }

    #[test]
    fn dump_roundtrip() {
        let mut cfg = pulsed_cfg();
        cfg.snr_db = 0.0;
        let c = gen_constellation(&cfg, 16, 1).unwrap();
        let s = assemble_pulse(&c, &cfg).unwrap();
        let y = simulate_rx_time(&s, &echo(2e-6, 0.0, 0.1), &[], &cfg, 1).unwrap();
        let mut buf = Vec::new();
        write_cube(&y, &mut buf).unwrap();
        assert_eq!(read_cube(&buf[..]).unwrap(), y);
    }
}
