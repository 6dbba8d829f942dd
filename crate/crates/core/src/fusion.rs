//! Multi-station posterior fusion by maximum entropy under a Wasserstein
//! penalty.
//!
//! The fused density solves `min ∫ g ln g + kappa sum_z W1(g, q_z)` over
//! densities on a box `X`, where each `q_z` is a weighted atom set. Its dual
//! solution has the form
//! `g*(x) = exp(-1 - v - kappa sum_z min_i(|x - x_zi| - gamma_zi))`.
//! `v` is eliminated in closed form (`v = ln ∫ exp(-kappa sum_z phi_z) - 1`)
//! and the `gamma` are found by ascent on the concave reduced dual
//! `kappa sum gamma_zi u_zi - ln ∫ exp(-kappa sum_z phi_z)`, whose gradient is
//! `kappa (u_zi - mass of g* in cell X_zi)`. Integrals use one fixed
//! Monte-Carlo sample (sample-average approximation), so the optimized
//! objective is exactly concave.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filters::{systematic_indices, Particle, ParticleCloud};
use crate::rng::{self, tag};

/// How integration points (and fused-particle proposals) are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sampling {
    /// Uniform over the covering box.
    #[default]
    Uniform,
    /// Defensive mixture: Gaussian kernels on the pooled atoms (stations
    /// equally weighted) plus a uniform component over the box.
    Mixture,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FusionMethod {
    #[default]
    Dual,
    Stratified,
}

fn d_kappa() -> f64 {
    2.0
}
fn d_n_mci() -> usize {
    4000
}
fn d_step() -> f64 {
    1.0
}
fn d_max_iters() -> usize {
    200
}
fn d_tol() -> f64 {
    1e-3
}
fn d_proposal() -> Sampling {
    Sampling::Mixture
}
fn d_bandwidth() -> f64 {
    0.15
}
fn d_defensive() -> f64 {
    0.1
}

/// Solver and sampling knobs. Distances are measured after standardizing
/// each state axis by the pooled atom standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FusionSettings {
    #[serde(default)]
    pub method: FusionMethod,
    #[serde(default = "d_kappa")]
    pub kappa: f64,
    #[serde(default = "d_n_mci")]
    pub n_mci: usize,
    /// Initial (and maximum) ascent step.
    #[serde(default = "d_step")]
    pub step: f64,
    #[serde(default = "d_max_iters")]
    pub max_iters: usize,
    /// Stop when the gradient infinity-norm falls below this.
    #[serde(default = "d_tol")]
    pub tol: f64,
    #[serde(default)]
    pub integration: Sampling,
    #[serde(default = "d_proposal")]
    pub proposal: Sampling,
    /// Kernel std (standardized units) of the mixture sampler.
    #[serde(default = "d_bandwidth")]
    pub bandwidth: f64,
    /// Weight of the uniform component of the mixture sampler.
    #[serde(default = "d_defensive")]
    pub defensive: f64,
}

impl Default for FusionSettings {
    fn default() -> Self {
        Self {
            method: FusionMethod::Dual,
            kappa: d_kappa(),
            n_mci: d_n_mci(),
            step: d_step(),
            max_iters: d_max_iters(),
            tol: d_tol(),
            integration: Sampling::Uniform,
            proposal: d_proposal(),
            bandwidth: d_bandwidth(),
            defensive: d_defensive(),
        }
    }
}

/// Axis-aligned box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl Region {
    pub fn volume(&self) -> f64 {
        self.lo.iter().zip(&self.hi).map(|(a, b)| b - a).product()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter().zip(self.lo.iter().zip(&self.hi)).all(|(v, (a, b))| *v >= *a && *v <= *b)
    }

    /// Bounding box of `points` (flattened, dimension `d`) inflated by
    /// `frac` of its width on each side; degenerate axes get unit width.
    pub fn covering(points: &[f64], d: usize, frac: f64) -> Self {
        let mut lo = vec![f64::INFINITY; d];
        let mut hi = vec![f64::NEG_INFINITY; d];
        for x in points.chunks_exact(d) {
            for k in 0..d {
                lo[k] = lo[k].min(x[k]);
                hi[k] = hi[k].max(x[k]);
            }
        }
        for k in 0..d {
            let w = hi[k] - lo[k];
            let pad = if w > 0.0 { frac * w } else { 0.5 };
            lo[k] -= pad;
            hi[k] += pad;
        }
        Self { lo, hi }
    }
}

/// Per-axis affine map into standardized coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn identity(d: usize) -> Self {
        Self { mean: vec![0.0; d], scale: vec![1.0; d] }
    }

    /// Pooled (unweighted) mean and standard deviation of every atom.
    pub fn fit(points: &[f64], d: usize) -> Self {
        let n = (points.len() / d).max(1) as f64;
        let mut mean = vec![0.0; d];
        for x in points.chunks_exact(d) {
            for k in 0..d {
                mean[k] += x[k] / n;
            }
        }
        let mut var = vec![0.0; d];
        for x in points.chunks_exact(d) {
            for k in 0..d {
                var[k] += (x[k] - mean[k]).powi(2) / n;
            }
        }
        let scale = var.iter().map(|v| if *v > 0.0 { v.sqrt() } else { 1.0 }).collect();
        Self { mean, scale }
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(self.mean.iter().zip(&self.scale)).map(|(v, (m, s))| (v - m) / s).collect()
    }

    pub fn inverse(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(self.mean.iter().zip(&self.scale)).map(|(v, (m, s))| v * s + m).collect()
    }
}

/// Z weighted atom sets on a common box.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionProblem {
    pub dim: usize,
    /// Per station, atoms flattened row-major (`n_z * dim`).
    pub atoms: Vec<Vec<f64>>,
    pub weights: Vec<Vec<f64>>,
    pub kappa: f64,
    pub region: Region,
    pub settings: FusionSettings,
}

impl FusionProblem {
    pub fn new(dim: usize, atoms: Vec<Vec<f64>>, weights: Vec<Vec<f64>>, region: Region, settings: FusionSettings) -> Result<Self> {
        if dim == 0 || atoms.is_empty() || atoms.len() != weights.len() {
            return Err(Error::InvalidArgument("fusion needs at least one station with atoms".into()));
        }
        if region.lo.len() != dim || region.hi.len() != dim || region.volume() <= 0.0 {
            return Err(Error::InvalidArgument("region must be a non-degenerate box of the state dimension".into()));
        }
        if !(settings.kappa >= 0.0) || !settings.kappa.is_finite() {
            return Err(Error::InvalidArgument(format!("kappa {} must be finite and non-negative", settings.kappa)));
        }
        for (a, w) in atoms.iter().zip(&weights) {
            if a.len() != w.len() * dim || w.is_empty() {
                return Err(Error::Shape(format!("{} coordinates for {} weights in dimension {dim}", a.len(), w.len())));
            }
            let s: f64 = w.iter().sum();
            if (s - 1.0).abs() > 1e-9 || w.iter().any(|x| *x < 0.0) {
                return Err(Error::InvalidArgument(format!("station weights sum to {s}, expected 1")));
            }
            for x in a.chunks_exact(dim) {
                if !region.contains(x) {
                    return Err(Error::InvalidArgument(format!("atom {x:?} lies outside the region")));
                }
            }
        }
        Ok(Self { dim, atoms, weights, kappa: settings.kappa, region, settings })
    }

    /// Build from particle clouds in standardized `[x, y, vx, vy]`
    /// coordinates, with `X` the covering box inflated by 10% per side.
    pub fn from_clouds(clouds: &[ParticleCloud], settings: FusionSettings) -> Result<(Self, Standardizer)> {
        let raw: Vec<f64> = clouds.iter().flat_map(|c| c.particles.iter().flat_map(|p| p.state)).collect();
        let std = Standardizer::fit(&raw, 4);
        let atoms: Vec<Vec<f64>> = clouds
            .iter()
            .map(|c| c.particles.iter().flat_map(|p| std.forward(&p.state)).collect())
            .collect();
        let pooled: Vec<f64> = atoms.iter().flatten().copied().collect();
        let region = Region::covering(&pooled, 4, 0.1);
        let weights = clouds
            .iter()
            .map(|c| {
                let s: f64 = c.weights.iter().sum();
                c.weights.iter().map(|w| w / s).collect()
            })
            .collect();
        Ok((Self::new(4, atoms, weights, region, settings)?, std))
    }

    pub fn n_stations(&self) -> usize {
        self.atoms.len()
    }

    fn atom(&self, z: usize, i: usize) -> &[f64] {
        &self.atoms[z][i * self.dim..(i + 1) * self.dim]
    }
}

/// Dual variables plus solver diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualSolution {
    pub v: f64,
    pub gamma: Vec<Vec<f64>>,
    /// Reduced dual objective at this point (on the solver's sample).
    pub objective: f64,
    pub iterations: usize,
    pub grad_norm: f64,
    pub converged: bool,
}

impl DualSolution {
    pub fn zeros(problem: &FusionProblem) -> Self {
        Self {
            v: 0.0,
            gamma: problem.weights.iter().map(|w| vec![0.0; w.len()]).collect(),
            objective: f64::NAN,
            iterations: 0,
            grad_norm: f64::NAN,
            converged: false,
        }
    }
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Cell of station `z` containing `x`: `argmin_i |x - x_zi| - gamma_zi`,
/// lowest index on ties.
pub fn partition_index(x: &[f64], z: usize, dual: &DualSolution, problem: &FusionProblem) -> usize {
    let mut best = (f64::INFINITY, 0);
    for (i, g) in dual.gamma[z].iter().enumerate() {
        let c = dist(x, problem.atom(z, i)) - g;
        if c < best.0 {
            best = (c, i);
        }
    }
    best.1
}

fn potential_sum(x: &[f64], dual: &DualSolution, problem: &FusionProblem) -> f64 {
    (0..problem.n_stations())
        .map(|z| {
            dual.gamma[z]
                .iter()
                .enumerate()
                .map(|(i, g)| dist(x, problem.atom(z, i)) - g)
                .fold(f64::INFINITY, f64::min)
        })
        .sum()
}

/// Fused density at `x` (zero outside the region).
pub fn g_star(x: &[f64], dual: &DualSolution, problem: &FusionProblem) -> f64 {
    if !problem.region.contains(x) {
        return 0.0;
    }
    (-1.0 - dual.v - problem.kappa * potential_sum(x, dual, problem)).exp()
}

/// Points with importance weights such that `sum w_j f(x_j)` estimates `∫_X f`.
#[derive(Debug, Clone)]
pub struct IntegrationSample {
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
}

impl IntegrationSample {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

fn uniform_point<R: Rng + ?Sized>(rng: &mut R, region: &Region, out: &mut Vec<f64>) {
    for (a, b) in region.lo.iter().zip(&region.hi) {
        out.push(a + (b - a) * rng.random::<f64>());
    }
}

/// Draw `n` points from the chosen sampler, returning them with the
/// importance weights `1/(n q(x))` (uniform: `vol/n`).
pub fn draw_sample(problem: &FusionProblem, mode: Sampling, n: usize, seed: u64) -> IntegrationSample {
    let mut rng = rng::stream(seed, &[tag::FUSION]);
    let d = problem.dim;
    let vol = problem.region.volume();
    let mut points = Vec::with_capacity(n * d);
    match mode {
        Sampling::Uniform => {
            for _ in 0..n {
                uniform_point(&mut rng, &problem.region, &mut points);
            }
            IntegrationSample { points, weights: vec![vol / n as f64; n] }
        }
        Sampling::Mixture => {
            let s = &problem.settings;
            let h = s.bandwidth;
            let eps = s.defensive.clamp(0.0, 1.0);
            let z_n = problem.n_stations();
            let mut weights = Vec::with_capacity(n);
            let mut j = 0;
            let mut attempts = 0usize;
            while j < n {
                attempts += 1;
                let start = points.len();
                if rng.random::<f64>() < eps {
                    uniform_point(&mut rng, &problem.region, &mut points);
                } else {
                    let z = rng.random_range(0..z_n);
                    let i = pick(&problem.weights[z], rng.random::<f64>());
                    for c in problem.atom(z, i) {
                        let e: f64 = StandardNormal.sample(&mut rng);
                        points.push(c + h * e);
                    }
                }
                if !problem.region.contains(&points[start..]) {
                    points.truncate(start);
                    continue;
                }
                j += 1;
            }
            // Draws outside X are rejected; the truncated density is q / acceptance.
            let acceptance = n as f64 / attempts.max(1) as f64;
            for x in points.chunks_exact(d) {
                weights.push(acceptance / (n as f64 * mixture_density(problem, x, h, eps, vol)));
            }
            IntegrationSample { points, weights }
        }
    }
}

fn pick(w: &[f64], u: f64) -> usize {
    let mut c = 0.0;
    for (i, x) in w.iter().enumerate() {
        c += x;
        if u < c {
            return i;
        }
    }
    w.len() - 1
}

fn mixture_density(problem: &FusionProblem, x: &[f64], h: f64, eps: f64, vol: f64) -> f64 {
    let d = problem.dim as f64;
    let norm = (2.0 * std::f64::consts::PI * h * h).powf(-d / 2.0);
    let z_n = problem.n_stations() as f64;
    let mut kde = 0.0;
    for (z, w) in problem.weights.iter().enumerate() {
        for (i, wi) in w.iter().enumerate() {
            if *wi == 0.0 {
                continue;
            }
            let r2: f64 = x.iter().zip(problem.atom(z, i)).map(|(a, b)| (a - b) * (a - b)).sum();
            kde += wi * (-0.5 * r2 / (h * h)).exp();
        }
    }
    eps / vol + (1.0 - eps) * norm * kde / z_n
}

/// Distances from every sample point to every atom, cached for the solver.
struct Workspace<'a> {
    problem: &'a FusionProblem,
    sample: &'a IntegrationSample,
    /// `dists[z][j * n_z + i]`.
    dists: Vec<Vec<f64>>,
    ln_w: Vec<f64>,
}

struct Evaluation {
    objective: f64,
    ln_integral: f64,
    masses: Vec<Vec<f64>>,
}

impl<'a> Workspace<'a> {
    fn new(problem: &'a FusionProblem, sample: &'a IntegrationSample) -> Self {
        let d = problem.dim;
        let dists = (0..problem.n_stations())
            .map(|z| {
                let n_z = problem.weights[z].len();
                let mut out = Vec::with_capacity(sample.len() * n_z);
                for x in sample.points.chunks_exact(d) {
                    for i in 0..n_z {
                        out.push(dist(x, problem.atom(z, i)));
                    }
                }
                out
            })
            .collect();
        let ln_w = sample.weights.iter().map(|w| w.ln()).collect();
        Self { problem, sample, dists, ln_w }
    }

    fn evaluate(&self, gamma: &[Vec<f64>]) -> Evaluation {
        let p = self.problem;
        let n = self.sample.len();
        let z_n = p.n_stations();
        let mut log_terms = Vec::with_capacity(n);
        let mut cells = vec![0usize; n * z_n];
        for j in 0..n {
            let mut s = 0.0;
            for z in 0..z_n {
                let n_z = gamma[z].len();
                let row = &self.dists[z][j * n_z..(j + 1) * n_z];
                let mut best = (f64::INFINITY, 0);
                for (i, (dd, g)) in row.iter().zip(&gamma[z]).enumerate() {
                    let c = dd - g;
                    if c < best.0 {
                        best = (c, i);
                    }
                }
                s += best.0;
                cells[j * z_n + z] = best.1;
            }
            log_terms.push(self.ln_w[j] - p.kappa * s);
        }
        let mx = log_terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let total: f64 = log_terms.iter().map(|t| (t - mx).exp()).sum();
        let ln_integral = mx + total.ln();
        let mut masses: Vec<Vec<f64>> = gamma.iter().map(|g| vec![0.0; g.len()]).collect();
        for j in 0..n {
            let m = (log_terms[j] - ln_integral).exp();
            for z in 0..z_n {
                masses[z][cells[j * z_n + z]] += m;
            }
        }
        let linear: f64 = gamma
            .iter()
            .zip(&p.weights)
            .map(|(g, u)| g.iter().zip(u).map(|(a, b)| a * b).sum::<f64>())
            .sum();
        Evaluation { objective: p.kappa * linear - ln_integral, ln_integral, masses }
    }
}

fn grad_inf_norm(problem: &FusionProblem, masses: &[Vec<f64>]) -> f64 {
    masses
        .iter()
        .zip(&problem.weights)
        .flat_map(|(m, u)| m.iter().zip(u).map(|(a, b)| problem.kappa * (b - a).abs()))
        .fold(0.0, f64::max)
}

/// Maximize the reduced dual on the given integration sample. Always returns
/// the best iterate; `converged` reports whether the tolerance was met.
pub fn optimize_dual(problem: &FusionProblem, sample: &IntegrationSample) -> DualSolution {
    let s = &problem.settings;
    let mut dual = DualSolution::zeros(problem);
    if problem.kappa == 0.0 {
        dual.v = problem.region.volume().ln() - 1.0;
        dual.objective = -problem.region.volume().ln();
        dual.grad_norm = 0.0;
        dual.converged = true;
        return dual;
    }
    let ws = Workspace::new(problem, sample);
    let mut ev = ws.evaluate(&dual.gamma);
    let mut step = s.step;
    let cap = 5.0;
    let tiny = 1e-300;
    let mut iterations = 0;
    let mut grad = grad_inf_norm(problem, &ev.masses);
    while grad >= s.tol && iterations < s.max_iters {
        iterations += 1;
        // Ascent direction: componentwise log-ratio of target to current
        // cell mass (same sign as the gradient), gauge-projected.
        let dir: Vec<Vec<f64>> = ev
            .masses
            .iter()
            .zip(&problem.weights)
            .map(|(m, u)| {
                let mut d: Vec<f64> = m
                    .iter()
                    .zip(u)
                    .map(|(mi, ui)| ((ui + tiny).ln() - (mi + tiny).ln()).clamp(-cap, cap) / problem.kappa)
                    .collect();
                let mean = d.iter().sum::<f64>() / d.len() as f64;
                d.iter_mut().for_each(|x| *x -= mean);
                d
            })
            .collect();
        let mut accepted = false;
        for _ in 0..40 {
            let trial: Vec<Vec<f64>> = dual
                .gamma
                .iter()
                .zip(&dir)
                .map(|(g, d)| g.iter().zip(d).map(|(a, b)| a + step * b).collect())
                .collect();
            let tev = ws.evaluate(&trial);
            if tev.objective >= ev.objective - 1e-13 * ev.objective.abs().max(1.0) {
                dual.gamma = trial;
                ev = tev;
                accepted = true;
                step = (step * 2.0).min(s.step);
                break;
            }
            step *= 0.5;
        }
        grad = grad_inf_norm(problem, &ev.masses);
        if !accepted {
            break;
        }
    }
    dual.v = ev.ln_integral - 1.0;
    dual.objective = ev.objective;
    dual.iterations = iterations;
    dual.grad_norm = grad;
    dual.converged = grad < s.tol;
    dual
}

/// Solve the dual with integration points drawn per the problem settings.
/// Fails with [`Error::NotConverged`] if the tolerance is not met.
pub fn solve_dual(problem: &FusionProblem, seed: u64) -> Result<DualSolution> {
    let s = &problem.settings;
    if s.n_mci == 0 {
        return Err(Error::InvalidArgument("n_mci must be positive".into()));
    }
    let sample = draw_sample(problem, s.integration, s.n_mci, seed);
    let dual = optimize_dual(problem, &sample);
    if !dual.converged {
        return Err(Error::NotConverged { iterations: dual.iterations, grad_norm: dual.grad_norm });
    }
    Ok(dual)
}

/// Reduced dual objective `kappa sum gamma u - ln ∫ exp(-kappa sum phi)` on a sample.
pub fn dual_objective(problem: &FusionProblem, dual: &DualSolution, sample: &IntegrationSample) -> f64 {
    if problem.kappa == 0.0 {
        return -problem.region.volume().ln();
    }
    Workspace::new(problem, sample).evaluate(&dual.gamma).objective
}

/// Monte-Carlo estimate with standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub std_err: f64,
}

fn mc_mean(terms: &[f64]) -> Estimate {
    let n = terms.len() as f64;
    let mean = terms.iter().sum::<f64>() / n;
    let var = terms.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    Estimate { value: mean, std_err: (var / n).sqrt() }
}

/// `∫_X g*` on a sample.
pub fn integral_of_g(problem: &FusionProblem, dual: &DualSolution, sample: &IntegrationSample) -> Estimate {
    let n = sample.len() as f64;
    let terms: Vec<f64> = sample
        .points
        .chunks_exact(problem.dim)
        .zip(&sample.weights)
        .map(|(x, w)| n * w * g_star(x, dual, problem))
        .collect();
    mc_mean(&terms)
}

/// Mass of `g*` in every cell of station `z`, with standard errors.
pub fn cell_masses(problem: &FusionProblem, dual: &DualSolution, z: usize, sample: &IntegrationSample) -> Vec<Estimate> {
    let n = sample.len() as f64;
    let n_z = problem.weights[z].len();
    let mut terms = vec![vec![0.0; sample.len()]; n_z];
    for (j, (x, w)) in sample.points.chunks_exact(problem.dim).zip(&sample.weights).enumerate() {
        let i = partition_index(x, z, dual, problem);
        terms[i][j] = n * w * g_star(x, dual, problem);
    }
    terms.iter().map(|t| mc_mean(t)).collect()
}

/// Primal objective `∫ g ln g + kappa sum_z ∫ g(x) |x - x_{z, cell(x)}|`,
/// i.e. entropy term plus transport cost of the cell map.
pub fn primal_objective(problem: &FusionProblem, dual: &DualSolution, sample: &IntegrationSample) -> Estimate {
    let n = sample.len() as f64;
    let terms: Vec<f64> = sample
        .points
        .chunks_exact(problem.dim)
        .zip(&sample.weights)
        .map(|(x, w)| {
            let g = g_star(x, dual, problem);
            if g == 0.0 {
                return 0.0;
            }
            let transport: f64 = (0..problem.n_stations())
                .map(|z| dist(x, problem.atom(z, partition_index(x, z, dual, problem))))
                .sum();
            n * w * g * (g.ln() + problem.kappa * transport)
        })
        .collect();
    mc_mean(&terms)
}

/// Weighted fused atoms in the problem's coordinates.
#[derive(Debug, Clone)]
pub struct FusedPoints {
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
}

/// Draw `n_out` points from the proposal and weight them by `g*` (divided by
/// the proposal density for the mixture proposal), normalized.
pub fn fuse_points(problem: &FusionProblem, dual: &DualSolution, n_out: usize, seed: u64) -> Result<FusedPoints> {
    let sample = draw_sample(problem, problem.settings.proposal, n_out, rng::derive_seed(seed, &[1]));
    let raw: Vec<f64> = sample
        .points
        .chunks_exact(problem.dim)
        .zip(&sample.weights)
        .map(|(x, w)| w * g_star(x, dual, problem))
        .collect();
    let total: f64 = raw.iter().sum();
    if !(total > 0.0) || !total.is_finite() {
        return Err(Error::DegenerateUpdate);
    }
    Ok(FusedPoints { points: sample.points, weights: raw.into_iter().map(|w| w / total).collect() })
}

/// Fused particle cloud in the original `[x, y, vx, vy]` coordinates: a
/// weighted pool of `max(n_out, n_mci)` proposal points resampled to `n_out`.
pub fn fuse(problem: &FusionProblem, dual: &DualSolution, standardizer: &Standardizer, n_out: usize, seed: u64) -> Result<ParticleCloud> {
    if problem.dim != 4 {
        return Err(Error::Shape(format!("particle states are 4-D, problem is {}-D", problem.dim)));
    }
    let pool = fuse_points(problem, dual, n_out.max(problem.settings.n_mci), seed)?;
    let mut rng = rng::stream(seed, &[tag::FUSION, 2]);
    let particles = systematic_indices(&pool.weights, n_out, &mut rng)
        .into_iter()
        .map(|i| {
            let s = standardizer.inverse(&pool.points[4 * i..4 * i + 4]);
            Particle::new([s[0], s[1], s[2], s[3]])
        })
        .collect();
    Ok(ParticleCloud::uniform(particles, 0))
}

/// Pool systematic resamples of every cloud (counts split as evenly as
/// possible so the output has exactly `n_out` atoms), uniform weights.
pub fn stratified_fuse(clouds: &[ParticleCloud], n_out: usize, seed: u64) -> Result<ParticleCloud> {
    if clouds.is_empty() || clouds.iter().any(|c| c.is_empty()) {
        return Err(Error::InvalidArgument("stratified fusion needs non-empty clouds".into()));
    }
    let z_n = clouds.len();
    let mut particles = Vec::with_capacity(n_out);
    for (z, c) in clouds.iter().enumerate() {
        let count = n_out / z_n + usize::from(z < n_out % z_n);
        let mut rng = rng::stream(seed, &[tag::FUSION, tag::STATION, z as u64]);
        let idx = systematic_indices(&c.weights, count, &mut rng);
        particles.extend(idx.into_iter().map(|i| c.particles[i]));
    }
    let k = clouds[0].k;
    Ok(ParticleCloud::uniform(particles, k))
}
