//! Quick built-in oracle checks, run by `isac-pf selftest`.

use num_complex::Complex64;

use crate::channel::{simulate_rx_cw, target_echo};
use crate::costs::{scheme_cost, Observation};
use crate::filters::{gibbs_weights, systematic_indices_with_offset};
use crate::fusion::{g_star, solve_dual, FusionProblem, FusionSettings, Region};
use crate::radar::{RadarConfig, Station, TargetTruth};
use crate::waveform::{gen_constellation, qam_alphabet};

#[derive(Debug, Clone)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, f: impl FnOnce() -> crate::Result<(bool, String)>) -> Check {
    match f() {
        Ok((passed, detail)) => Check { name, passed, detail },
        Err(e) => Check { name, passed: false, detail: format!("error: {e}") },
    }
}

fn qam_power() -> crate::Result<(bool, String)> {
    let a = qam_alphabet(64)?;
    let p = a.iter().map(|s| s.norm_sqr()).sum::<f64>() / a.len() as f64;
    Ok(((p - 1.0).abs() < 1e-12, format!("mean power {p:.15}")))
}

fn polar_roundtrip() -> crate::Result<(bool, String)> {
    let st = Station { position: [10.0, -5.0], boresight: 0.7 };
    let p = [42.0, 17.5];
    let h = st.polar(p, [1.0, 0.5], 0.03)?;
    let q = st.position_of(h.tau, h.theta);
    let err = (q[0] - p[0]).hypot(q[1] - p[1]);
    Ok((err < 1e-9, format!("position error {err:.2e} m")))
}

fn matched_filter_peak() -> crate::Result<(bool, String)> {
    let mut cfg = RadarConfig::cw_baseline();
    cfg.n_tx = 8;
    cfg.n_rx = 8;
    cfg.snr_db = 10.0;
    let truth = TargetTruth { position: [40.0, 10.0], velocity: [1.0, 0.0], beta: Complex64::new(1.0, 0.0) };
    let st = Station::default();
    let echo = target_echo(&truth, &st, &cfg)?;
    let c = gen_constellation(&cfg, 64, 3)?;
    let y = simulate_rx_cw(&c, &echo, &[], &cfg, 4)?;
    let obs = Observation::cw(&y, &c, &cfg)?;
    let at_truth = st.polar(truth.position, truth.velocity, cfg.wavelength())?;
    let at = scheme_cost(&obs, &at_truth);
    let off: Vec<f64> = [[41.5, 10.0], [40.0, 14.0], [37.0, 8.0]]
        .iter()
        .map(|p| st.polar(*p, truth.velocity, cfg.wavelength()).map(|h| scheme_cost(&obs, &h)))
        .collect::<crate::Result<_>>()?;
    let ok = off.iter().all(|h| *h > at);
    Ok((ok, format!("cost at truth {at:.3}, off-target {off:.3?}")))
}

fn gibbs_identity() -> crate::Result<(bool, String)> {
    let prior = [0.1, 0.2, 0.3, 0.4];
    let w = gibbs_weights(&prior, &[5.0, 1.0, 3.0, 2.0], 0.0)?;
    Ok((w == prior, format!("{w:?}")))
}

fn systematic_counts() -> crate::Result<(bool, String)> {
    let idx = systematic_indices_with_offset(&[0.5, 0.25, 0.25], 4, 0.5);
    Ok((idx == [0, 0, 1, 2], format!("{idx:?}")))
}

fn one_atom(kappa: f64) -> crate::Result<FusionProblem> {
    let settings = FusionSettings { kappa, n_mci: 20_000, ..Default::default() };
    FusionProblem::new(1, vec![vec![0.0]], vec![vec![1.0]], Region { lo: vec![-1.0], hi: vec![1.0] }, settings)
}

fn fusion_closed_form() -> crate::Result<(bool, String)> {
    let p = one_atom(5.0)?;
    let dual = solve_dual(&p, 1)?;
    let exact = (2.0 * (1.0 - (-5.0f64).exp()) / 5.0).ln() - 1.0;
    let rel = ((dual.v - exact) / exact).abs();
    Ok((rel < 0.02, format!("v {:.5} vs {exact:.5}", dual.v)))
}

fn fusion_entropy_limit() -> crate::Result<(bool, String)> {
    let p = one_atom(0.0)?;
    let dual = solve_dual(&p, 1)?;
    let g = g_star(&[0.4], &dual, &p);
    Ok(((g - 0.5).abs() < 1e-12, format!("density {g}")))
}

/// Run every check; each returns its own verdict and never panics.
pub fn run_all() -> Vec<Check> {
    vec![
        check("qam64 unit power", qam_power),
        check("polar roundtrip", polar_roundtrip),
        check("matched filter peaks at truth", matched_filter_peak),
        check("gibbs update with zero rate", gibbs_identity),
        check("systematic resampling counts", systematic_counts),
        check("fusion 1-D closed form", fusion_closed_form),
        check("fusion entropy-only limit", fusion_entropy_limit),
    ]
}

#[cfg(test)]
mod tests {
    #[test]
    fn all_checks_pass() {
        for c in super::run_all() {
            assert!(c.passed, "{}: {}", c.name, c.detail);
        }
    }
}
