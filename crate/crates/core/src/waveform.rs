//! MIMO-OFDM transmit signal generation.
//!
//! DFT conventions: the OFDM modulator/demodulator pair is unitary
//! (`1/sqrt(N_c)` each way), so time-domain samples carry the same average
//! power `P_t` as the constellation. The full-PRI transform used by the
//! pulsed frequency-domain processing is a plain forward DFT without
//! normalization, so `sum |S(n)|^2 = L * sum |s(l)|^2`.

use ndarray::{Array3, Array4, ArrayView2};
use num_complex::Complex64;
use rand::Rng;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::radar::{RadarConfig, Scheme};
use crate::rng::{self, tag};

/// QAM symbols indexed `(pulse, symbol, subcarrier, tx antenna)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstellationCube {
    pub c: Array4<Complex64>,
}

impl ConstellationCube {
    pub fn dims(&self) -> (usize, usize, usize, usize) {
        self.c.dim()
    }

    /// Empirical spatial correlation `(1/N) sum c c^H`.
    pub fn spatial_correlation(&self) -> ndarray::Array2<Complex64> {
        let n_t = self.c.dim().3;
        let rows = self.c.len() / n_t;
        let flat = self.c.view().into_shape_with_order((rows, n_t)).expect("contiguous cube");
        correlation(flat)
    }
}

pub(crate) fn correlation(rows: ArrayView2<Complex64>) -> ndarray::Array2<Complex64> {
    let (n, d) = rows.dim();
    let mut r = ndarray::Array2::<Complex64>::zeros((d, d));
    for row in rows.outer_iter() {
        for i in 0..d {
            for j in 0..d {
                r[[i, j]] += row[i] * row[j].conj();
            }
        }
    }
    r.mapv_inplace(|z| z / n as f64);
    r
}

/// Time-domain transmit record indexed `(pulse, fast-time sample, tx antenna)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TxTimeSignal {
    pub s: Array3<Complex64>,
    /// Number of non-silent samples at the start of each PRI.
    pub l_ss: usize,
}

/// Frequency-domain transmit reference indexed `(pulse, bin, tx antenna)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TxFreqSignal {
    pub s: Array3<Complex64>,
    /// Bin spacing `B / N_cr` (Hz).
    pub bin_width: f64,
}

/// Unit-average-energy square QAM alphabet.
pub fn qam_alphabet(order: usize) -> Result<Vec<Complex64>> {
    let side = (order as f64).sqrt().round() as usize;
    if order < 4 || side * side != order {
        return Err(Error::InvalidArgument(format!(
            "QAM order {order} is not a perfect square of at least 4"
        )));
    }
    let norm = (2.0 * (order as f64 - 1.0) / 3.0).sqrt();
    let level = |i: usize| (2.0 * i as f64 - (side as f64 - 1.0)) / norm;
    Ok((0..order)
        .map(|k| Complex64::new(level(k % side), level(k / side)))
        .collect())
}

/// Draw i.i.d. QAM symbols scaled to per-antenna power `P_t`.
///
/// Each `(pulse, symbol)` block has its own keyed stream.
pub fn gen_constellation(cfg: &RadarConfig, qam_order: usize, seed: u64) -> Result<ConstellationCube> {
    let alphabet = qam_alphabet(qam_order)?;
    let amp = cfg.tx_power.sqrt();
    let (n_p, m, n_c, n_t) = (cfg.n_pulses, cfg.symbols_per_pulse, cfg.n_subcarriers, cfg.n_tx);
    let mut c = Array4::<Complex64>::zeros((n_p, m, n_c, n_t));
    for p in 0..n_p {
        for mi in 0..m {
            let mut rng = rng::stream(seed, &[tag::CONSTELLATION, p as u64, mi as u64]);
            for z in c.slice_mut(ndarray::s![p, mi, .., ..]).iter_mut() {
                *z = alphabet[rng.random_range(0..qam_order)] * amp;
            }
        }
    }
    Ok(ConstellationCube { c })
}

/// OFDM-modulate every symbol, prepend cyclic prefixes and zero-fill the
/// silent part of each PRI.
pub fn assemble_pulse(c: &ConstellationCube, cfg: &RadarConfig) -> Result<TxTimeSignal> {
    let d = cfg.derive()?;
    let (n_p, m, n_c, n_t) = c.dims();
    if n_c != cfg.n_subcarriers || m != cfg.symbols_per_pulse || n_p != cfg.n_pulses || n_t != cfg.n_tx {
        return Err(Error::Shape(format!(
            "constellation {:?} does not match config ({}, {}, {}, {})",
            c.dims(),
            cfg.n_pulses,
            cfg.symbols_per_pulse,
            cfg.n_subcarriers,
            cfg.n_tx
        )));
    }
    let n_cp = d.grid.n_cp;
    let block = n_cp + n_c;
    let mut s = Array3::<Complex64>::zeros((n_p, d.grid.l, n_t));
    let ifft = FftPlanner::new().plan_fft_inverse(n_c);
    let scale = 1.0 / (n_c as f64).sqrt();
    let mut buf = vec![Complex64::default(); n_c];
    for p in 0..n_p {
        for mi in 0..m {
            for t in 0..n_t {
                for (n, b) in buf.iter_mut().enumerate() {
                    *b = c.c[[p, mi, n, t]];
                }
                ifft.process(&mut buf);
                let start = mi * block;
                for k in 0..n_c {
                    s[[p, start + n_cp + k, t]] = buf[k] * scale;
                }
                for k in 0..n_cp {
                    s[[p, start + k, t]] = buf[n_c - n_cp + k] * scale;
                }
            }
        }
    }
    Ok(TxTimeSignal { s, l_ss: d.grid.l_ss })
}

/// Forward DFT of each full PRI, CPs and silence included. Pulsed only.
pub fn fft_full_pri(s: &TxTimeSignal, cfg: &RadarConfig) -> Result<TxFreqSignal> {
    if cfg.scheme != Scheme::Pulsed {
        return Err(Error::WrongScheme { expected: "pulsed" });
    }
    Ok(TxFreqSignal { s: dft_fast_time(&s.s), bin_width: cfg.bandwidth_hz / s.s.dim().1 as f64 })
}

/// Unnormalized forward DFT along axis 1 of a `(pulse, sample, antenna)` array.
pub(crate) fn dft_fast_time(x: &Array3<Complex64>) -> Array3<Complex64> {
    transform_axis1(x, false, 1.0)
}

/// Inverse of [`dft_fast_time`] (includes the `1/L` factor).
pub fn idft_fast_time(x: &Array3<Complex64>) -> Array3<Complex64> {
    let l = x.dim().1;
    transform_axis1(x, true, 1.0 / l as f64)
}

fn transform_axis1(x: &Array3<Complex64>, inverse: bool, scale: f64) -> Array3<Complex64> {
    let (n_p, l, n_a) = x.dim();
    let mut planner = FftPlanner::new();
    let fft = if inverse { planner.plan_fft_inverse(l) } else { planner.plan_fft_forward(l) };
    let mut out = Array3::<Complex64>::zeros((n_p, l, n_a));
    let mut buf = vec![Complex64::default(); l];
    for p in 0..n_p {
        for a in 0..n_a {
            for (k, b) in buf.iter_mut().enumerate() {
                *b = x[[p, k, a]];
            }
            fft.process(&mut buf);
            for (k, b) in buf.iter().enumerate() {
                out[[p, k, a]] = *b * scale;
            }
        }
    }
    out
}

/// Strip the cyclic prefixes from a `(pulse, sample, antenna)` record and
/// demodulate every OFDM symbol with the unitary DFT. Output is indexed
/// `(pulse, symbol, subcarrier, antenna)`.
pub fn ofdm_demodulate(x: &Array3<Complex64>, cfg: &RadarConfig) -> Result<Array4<Complex64>> {
    let d = cfg.derive()?;
    let (n_p, l, n_a) = x.dim();
    let n_c = cfg.n_subcarriers;
    let m = cfg.symbols_per_pulse;
    let block = d.grid.n_cp + n_c;
    if l < m * block {
        return Err(Error::Shape(format!("record of {l} samples is shorter than {} symbols", m)));
    }
    let fft = FftPlanner::new().plan_fft_forward(n_c);
    let scale = 1.0 / (n_c as f64).sqrt();
    let mut out = Array4::<Complex64>::zeros((n_p, m, n_c, n_a));
    let mut buf = vec![Complex64::default(); n_c];
    for p in 0..n_p {
        for mi in 0..m {
            let start = mi * block + d.grid.n_cp;
            for a in 0..n_a {
                for (k, b) in buf.iter_mut().enumerate() {
                    *b = x[[p, start + k, a]];
                }
                fft.process(&mut buf);
                for (n, b) in buf.iter().enumerate() {
                    out[[p, mi, n, a]] = *b * scale;
                }
            }
        }
    }
    Ok(out)
}

/// Average per-antenna power over the non-silent part of a time record.
pub fn mean_active_power(s: &TxTimeSignal) -> f64 {
    let active = s.s.slice(ndarray::s![.., ..s.l_ss, ..]);
    active.iter().map(|z| z.norm_sqr()).sum::<f64>() / active.len() as f64
}
