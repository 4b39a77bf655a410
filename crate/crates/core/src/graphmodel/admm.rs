use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::block::{component_of, cross_component_max, BlockMatrix, PairSet};
use crate::error::{MpcError, Result};
use crate::linalg::{positive_quadratic_root, spectral_map, symmetrize};

/// Cross-component entries below this are treated as zero by the fast path.
pub const FAST_PATH_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdmmConfig {
    /// Augmented-Lagrangian penalty (not the EWMA weight).
    pub penalty: f64,
    pub max_iter: usize,
    pub tol_primal: f64,
    pub tol_dual: f64,
    pub use_fast_path: bool,
    /// Let the solver choose the penalty: the lasso rebalances it when one
    /// residual dominates, and each per-component constrained solve uses
    /// `1/(λ_min λ_max)` of its starting iterate instead of `penalty`.
    #[serde(default = "default_true")]
    pub adaptive_penalty: bool,
    /// Momentum with restarts in the per-component constrained solves.
    #[serde(default = "default_true")]
    pub accelerated: bool,
}

fn default_true() -> bool {
    true
}

/// Residual ratio that triggers a penalty change, and the change factor.
const BALANCE_RATIO: f64 = 10.0;
const BALANCE_FACTOR: f64 = 2.0;

/// Penalty changes are allowed in the first half of the iteration budget
/// only, so the penalty is eventually fixed.
fn rebalance(cfg: &AdmmConfig, iter: usize, primal: f64, dual: f64) -> f64 {
    if !cfg.adaptive_penalty || 2 * iter > cfg.max_iter {
        1.0
    } else if primal > BALANCE_RATIO * dual {
        BALANCE_FACTOR
    } else if dual > BALANCE_RATIO * primal {
        1.0 / BALANCE_FACTOR
    } else {
        1.0
    }
}

impl AdmmConfig {
    /// Defaults for a `dim × dim` problem: penalty 2, 500 iterations,
    /// tolerances `1e-6 · dim`.
    pub fn for_dimension(dim: usize) -> Self {
        let tol = 1e-6 * dim.max(1) as f64;
        Self {
            penalty: 2.0,
            max_iter: 500,
            tol_primal: tol,
            tol_dual: tol,
            use_fast_path: true,
            adaptive_penalty: true,
            accelerated: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.penalty > 0.0
            && self.penalty.is_finite()
            && self.max_iter > 0
            && self.tol_primal > 0.0
            && self.tol_dual > 0.0;
        if ok {
            Ok(())
        } else {
            Err(MpcError::InvalidInput(format!("invalid ADMM configuration {self:?}")))
        }
    }
}

/// Primal/dual iterates that can seed another solve. `y` is the unscaled
/// dual; `rho` holds the last penalty, one per component when components
/// were solved separately, and may be empty.
#[derive(Debug, Clone, PartialEq)]
pub struct AdmmState {
    pub z: DMatrix<f64>,
    pub y: DMatrix<f64>,
    pub rho: Vec<f64>,
}

impl AdmmState {
    /// Starts from `z` with a zero dual.
    pub fn at(z: DMatrix<f64>) -> Self {
        let d = z.nrows();
        Self {
            z,
            y: DMatrix::zeros(d, d),
            rho: Vec::new(),
        }
    }

    fn penalty(&self, c: usize, default: f64) -> f64 {
        self.rho.get(c).or(self.rho.first()).copied().unwrap_or(default)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdmmReport {
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    /// Iterations whose step 1 used per-component eigendecompositions.
    pub fast_path_steps: usize,
}

#[derive(Debug, Clone)]
pub struct AdmmSolution {
    pub theta: BlockMatrix,
    pub state: AdmmState,
    pub report: AdmmReport,
}

/// `V f(D) Vᵀ` for a ξ-ordered matrix. With `fast` set and negligible
/// cross-component entries the map is applied per component; the second
/// return value reports which path ran.
pub fn spectral_apply(
    m: &DMatrix<f64>,
    p: usize,
    k: usize,
    fast: bool,
    f: impl Fn(f64) -> f64,
) -> (DMatrix<f64>, bool) {
    if fast && k > 1 && cross_component_max(m, p, k) <= FAST_PATH_TOLERANCE {
        let d = p * k;
        let mut out = DMatrix::zeros(d, d);
        for c in 0..k {
            let mapped = spectral_map(&component_of(m, p, k, c), &f);
            for j in 0..p {
                for l in 0..p {
                    out[(j * k + c, l * k + c)] = mapped[(j, l)];
                }
            }
        }
        (out, true)
    } else {
        (spectral_map(m, f), fast && k == 1)
    }
}

/// Step 1: the minimizer of `−log|Θ| + tr(SΘ) + (ρ/2)‖Θ − Z + U‖²`.
pub fn step_theta(
    s: &DMatrix<f64>,
    z: &DMatrix<f64>,
    u: &DMatrix<f64>,
    rho: f64,
    p: usize,
    k: usize,
    fast: bool,
) -> (DMatrix<f64>, bool) {
    let m = s - (z - u) * rho;
    spectral_apply(&m, p, k, fast, |d| positive_quadratic_root(d, rho))
}

/// Group soft-threshold of one block: zero when `‖A‖_F ≤ threshold`, otherwise
/// `A` shrunk so its norm drops by exactly `threshold`.
pub fn group_soft_threshold(a: &DMatrix<f64>, threshold: f64) -> DMatrix<f64> {
    let norm = a.norm();
    if norm <= threshold {
        DMatrix::zeros(a.nrows(), a.ncols())
    } else {
        a * ((norm - threshold) / norm)
    }
}

/// Proximal step over ξ-ordered iterates, or over per-component iterates.
enum Prox<'a> {
    Lasso { weights: &'a DMatrix<f64>, lambda: f64 },
    Fixed { mask: Vec<bool>, fixed: &'a DMatrix<f64> },
}

impl Prox<'_> {
    fn label(&self) -> &'static str {
        match self {
            Prox::Lasso { .. } => "lasso",
            Prox::Fixed { .. } => "constrained",
        }
    }

    fn apply_full(&self, a: &DMatrix<f64>, z: &mut DMatrix<f64>, p: usize, k: usize, rho: f64) {
        match self {
            Prox::Lasso { weights, lambda } => {
                for j in 0..p {
                    for l in 0..p {
                        let blk = a.view((j * k, l * k), (k, k)).into_owned();
                        let shrunk = group_soft_threshold(&blk, lambda / (rho * weights[(j, l)]));
                        z.view_mut((j * k, l * k), (k, k)).copy_from(&shrunk);
                    }
                }
            }
            Prox::Fixed { mask, fixed } => {
                let d = p * k;
                for c in 0..d {
                    for r in 0..d {
                        z[(r, c)] = if mask[(r / k) * p + c / k] { a[(r, c)] } else { fixed[(r, c)] };
                    }
                }
            }
        }
    }
}

/// Group threshold applied to per-component iterates: block `(j, l)` is the
/// vector of `(j, l)` entries across components.
fn lasso_components(weights: &DMatrix<f64>, lambda: f64, a: &[DMatrix<f64>], z: &mut [DMatrix<f64>], p: usize, rho: f64) {
    for j in 0..p {
        for l in 0..p {
            let norm = a.iter().map(|m| m[(j, l)] * m[(j, l)]).sum::<f64>().sqrt();
            let t = lambda / (rho * weights[(j, l)]);
            let factor = if norm <= t { 0.0 } else { (norm - t) / norm };
            for (zc, ac) in z.iter_mut().zip(a) {
                zc[(j, l)] = ac[(j, l)] * factor;
            }
        }
    }
}

fn run_admm(
    s: &DMatrix<f64>,
    p: usize,
    k: usize,
    cfg: &AdmmConfig,
    init: AdmmState,
    prox: &Prox<'_>,
) -> Result<AdmmSolution> {
    cfg.validate()?;
    let block_diagonal = |m: &DMatrix<f64>| cross_component_max(m, p, k) <= FAST_PATH_TOLERANCE;
    let fixed_ok = match prox {
        Prox::Fixed { fixed, .. } => block_diagonal(fixed),
        Prox::Lasso { .. } => true,
    };
    if cfg.use_fast_path && fixed_ok && block_diagonal(s) && block_diagonal(&init.z) && block_diagonal(&init.y) {
        return match prox {
            Prox::Lasso { weights, lambda } => run_lasso_lockstep(s, p, k, cfg, init, weights, *lambda),
            Prox::Fixed { mask, fixed } => run_fixed_components(s, p, k, cfg, init, mask, fixed),
        };
    }
    let mut rho = init.penalty(0, cfg.penalty);
    let AdmmState { mut z, y, .. } = init;
    let mut u = y / rho;
    let mut z_prev = z.clone();
    let mut primal = f64::INFINITY;
    let mut dual = f64::INFINITY;
    let mut fast_steps = 0;
    for iter in 1..=cfg.max_iter {
        let (theta, fast) = step_theta(s, &z, &u, rho, p, k, cfg.use_fast_path);
        fast_steps += fast as usize;
        let a = &theta + &u;
        std::mem::swap(&mut z, &mut z_prev);
        prox.apply_full(&a, &mut z, p, k, rho);
        let resid = &theta - &z;
        u += &resid;
        primal = resid.norm();
        dual = rho * (&z - &z_prev).norm();
        if primal <= cfg.tol_primal && dual <= cfg.tol_dual {
            symmetrize(&mut z);
            return Ok(AdmmSolution {
                theta: BlockMatrix::from_symmetrized(p, k, z.clone()),
                state: AdmmState {
                    z,
                    y: u * rho,
                    rho: vec![rho],
                },
                report: AdmmReport {
                    iterations: iter,
                    primal_residual: primal,
                    dual_residual: dual,
                    fast_path_steps: fast_steps,
                },
            });
        }
        let f = rebalance(cfg, iter, primal, dual);
        if f != 1.0 {
            rho *= f;
            u /= f;
        }
    }
    stalled(prox.label(), p, k, cfg, primal, dual)
}

fn stalled<T>(label: &str, p: usize, k: usize, cfg: &AdmmConfig, primal: f64, dual: f64) -> Result<T> {
    log::debug!("{label} ADMM stalled: p={p} K={k} primal={primal:.3e} dual={dual:.3e}");
    Err(MpcError::NotConverged {
        iterations: cfg.max_iter,
        primal,
        dual,
    })
}

fn components(m: &DMatrix<f64>, p: usize, k: usize) -> Vec<DMatrix<f64>> {
    (0..k).map(|c| component_of(m, p, k, c)).collect()
}

/// The fast path for the lasso: the `K` component matrices advance in
/// lockstep under one penalty, since the group threshold couples them.
/// Residuals are pooled so the stopping rule matches the full iteration.
fn run_lasso_lockstep(
    s: &DMatrix<f64>,
    p: usize,
    k: usize,
    cfg: &AdmmConfig,
    init: AdmmState,
    weights: &DMatrix<f64>,
    lambda: f64,
) -> Result<AdmmSolution> {
    let mut rho = init.penalty(0, cfg.penalty);
    let s_c = components(s, p, k);
    let mut z = components(&init.z, p, k);
    let mut u: Vec<DMatrix<f64>> = components(&init.y, p, k).into_iter().map(|y| y / rho).collect();
    let mut z_prev = z.clone();
    let mut theta: Vec<DMatrix<f64>> = vec![DMatrix::zeros(p, p); k];
    let mut a: Vec<DMatrix<f64>> = vec![DMatrix::zeros(p, p); k];
    let mut primal = f64::INFINITY;
    let mut dual = f64::INFINITY;
    for iter in 1..=cfg.max_iter {
        for c in 0..k {
            let m = &s_c[c] - (&z[c] - &u[c]) * rho;
            theta[c] = spectral_map(&m, |d| positive_quadratic_root(d, rho));
            a[c] = &theta[c] + &u[c];
        }
        std::mem::swap(&mut z, &mut z_prev);
        lasso_components(weights, lambda, &a, &mut z, p, rho);
        let (mut pr, mut du) = (0.0, 0.0);
        for c in 0..k {
            let resid = &theta[c] - &z[c];
            u[c] += &resid;
            pr += resid.norm_squared();
            du += (&z[c] - &z_prev[c]).norm_squared();
        }
        primal = pr.sqrt();
        dual = rho * du.sqrt();
        if primal <= cfg.tol_primal && dual <= cfg.tol_dual {
            for zc in z.iter_mut() {
                symmetrize(zc);
            }
            let z_full = from_components_unchecked(&z, p, k);
            let y: Vec<DMatrix<f64>> = u.iter().map(|uc| uc * rho).collect();
            return Ok(AdmmSolution {
                theta: BlockMatrix::from_symmetrized(p, k, z_full.clone()),
                state: AdmmState {
                    z: z_full,
                    y: from_components_unchecked(&y, p, k),
                    rho: vec![rho],
                },
                report: AdmmReport {
                    iterations: iter,
                    primal_residual: primal,
                    dual_residual: dual,
                    fast_path_steps: iter,
                },
            });
        }
        let f = rebalance(cfg, iter, primal, dual);
        if f != 1.0 {
            rho *= f;
            for uc in u.iter_mut() {
                *uc /= f;
            }
        }
    }
    stalled("lasso", p, k, cfg, primal, dual)
}

/// `1/(λ_min λ_max)` of `z`, the penalty that balances the extreme
/// curvatures of `−log|Θ|` near `z`; `fallback` when `z` is not PD.
fn spectral_penalty(z: &DMatrix<f64>, fallback: f64) -> f64 {
    let ev = z.clone().symmetric_eigen().eigenvalues;
    let (lo, hi) = (ev.min(), ev.max());
    if lo > 0.0 && hi.is_finite() {
        1.0 / (lo * hi)
    } else {
        fallback
    }
}

struct ComponentRun {
    z: DMatrix<f64>,
    y: DMatrix<f64>,
    rho: f64,
    iterations: usize,
    primal: f64,
    dual: f64,
}

/// The fast path for the constrained problem. Components do not interact,
/// so each runs to its own share `tol/√K` of the tolerances under its own
/// penalty; the pooled residuals then meet the configured tolerances.
fn run_fixed_components(
    s: &DMatrix<f64>,
    p: usize,
    k: usize,
    cfg: &AdmmConfig,
    init: AdmmState,
    mask: &[bool],
    fixed: &DMatrix<f64>,
) -> Result<AdmmSolution> {
    let share = (k as f64).sqrt();
    let (tol_p, tol_d) = (cfg.tol_primal / share, cfg.tol_dual / share);
    let s_c = components(s, p, k);
    let fixed_c = components(fixed, p, k);
    let z0 = components(&init.z, p, k);
    let y0 = components(&init.y, p, k);
    let mut runs = Vec::with_capacity(k);
    let (mut pr, mut du) = (0.0, 0.0);
    let mut failed = false;
    for c in 0..k {
        let rho0 = if cfg.adaptive_penalty {
            spectral_penalty(&z0[c], cfg.penalty)
        } else {
            init.penalty(c, cfg.penalty)
        };
        let mut run = fixed_component(&s_c[c], &fixed_c[c], mask, p, cfg, tol_p, tol_d, &z0[c], &y0[c], rho0);
        if cfg.adaptive_penalty && (run.primal > tol_p || run.dual > tol_d) {
            // One restart from the stalled iterate, whose spectrum is a
            // better guide to the solution's than the starting point's.
            let rho1 = spectral_penalty(&run.z, run.rho);
            log::debug!("component {c} restarted with penalty {rho1:.3e} (was {:.3e})", run.rho);
            run = fixed_component(&s_c[c], &fixed_c[c], mask, p, cfg, tol_p, tol_d, &run.z, &run.y, rho1);
        }
        if run.primal > tol_p || run.dual > tol_d {
            // The stalled iterate may be indefinite; the pinned values are
            // always feasible and PD.
            let polished = newton_component(&s_c[c], &fixed_c[c], mask, p, &run.z, &run, tol_d)
                .or_else(|| newton_component(&s_c[c], &fixed_c[c], mask, p, &fixed_c[c], &run, tol_d));
            if let Some(polished) = polished {
                log::debug!("component {c} finished by Newton after {} iterations", polished.iterations);
                run = polished;
            }
        }
        pr += run.primal * run.primal;
        du += run.dual * run.dual;
        failed |= run.primal > tol_p || run.dual > tol_d;
        runs.push(run);
    }
    let (primal, dual) = (pr.sqrt(), du.sqrt());
    if failed {
        return stalled("constrained", p, k, cfg, primal, dual);
    }
    let z: Vec<DMatrix<f64>> = runs.iter().map(|r| r.z.clone()).collect();
    let y: Vec<DMatrix<f64>> = runs.iter().map(|r| r.y.clone()).collect();
    let iterations = runs.iter().map(|r| r.iterations).max().unwrap_or(0);
    let z_full = from_components_unchecked(&z, p, k);
    Ok(AdmmSolution {
        theta: BlockMatrix::from_symmetrized(p, k, z_full.clone()),
        state: AdmmState {
            z: z_full,
            y: from_components_unchecked(&y, p, k),
            rho: runs.iter().map(|r| r.rho).collect(),
        },
        report: AdmmReport {
            iterations,
            primal_residual: primal,
            dual_residual: dual,
            fast_path_steps: iterations,
        },
    })
}

/// Restart threshold for the momentum variant.
const RESTART_ETA: f64 = 0.999;

/// One component of the constrained problem. With `cfg.accelerated` the
/// iteration carries Nesterov momentum on `(Z, U)` and restarts whenever the
/// combined residual fails to shrink by `RESTART_ETA`; the dual residual is
/// then measured against the extrapolated `Z` the step used.
#[allow(clippy::too_many_arguments)]
fn fixed_component(
    s: &DMatrix<f64>,
    fixed: &DMatrix<f64>,
    mask: &[bool],
    p: usize,
    cfg: &AdmmConfig,
    tol_p: f64,
    tol_d: f64,
    z0: &DMatrix<f64>,
    y0: &DMatrix<f64>,
    rho: f64,
) -> ComponentRun {
    let project = |a: &DMatrix<f64>| {
        DMatrix::from_fn(p, p, |j, l| if mask[j * p + l] { a[(j, l)] } else { fixed[(j, l)] })
    };
    let mut z = z0.clone();
    let mut u = y0 / rho;
    let (mut z_hat, mut u_hat) = (z.clone(), u.clone());
    let mut momentum: f64 = 1.0;
    let mut combined_prev = f64::INFINITY;
    let mut primal = f64::INFINITY;
    let mut dual = f64::INFINITY;
    for iter in 1..=cfg.max_iter {
        let m = s - (&z_hat - &u_hat) * rho;
        let theta = spectral_map(&m, |d| positive_quadratic_root(d, rho));
        let z_new = project(&(&theta + &u_hat));
        let resid = &theta - &z_new;
        let u_new = &u_hat + &resid;
        primal = resid.norm();
        let dz = (&z_new - &z_hat).norm();
        dual = rho * dz;
        if primal <= tol_p && dual <= tol_d {
            let mut z = z_new;
            symmetrize(&mut z);
            return ComponentRun {
                z,
                y: u_new * rho,
                rho,
                iterations: iter,
                primal,
                dual,
            };
        }
        if !cfg.accelerated {
            z_hat = z_new.clone();
            u_hat = u_new.clone();
            z = z_new;
            u = u_new;
            continue;
        }
        let combined = rho * ((&u_new - &u_hat).norm_squared() + dz * dz);
        if combined < RESTART_ETA * combined_prev {
            let next = 0.5 * (1.0 + (1.0 + 4.0 * momentum * momentum).sqrt());
            let w = (momentum - 1.0) / next;
            z_hat = &z_new + (&z_new - &z) * w;
            u_hat = &u_new + (&u_new - &u) * w;
            momentum = next;
            combined_prev = combined;
            z = z_new;
            u = u_new;
        } else {
            momentum = 1.0;
            z_hat = z.clone();
            u_hat = u.clone();
            combined_prev /= RESTART_ETA;
        }
    }
    ComponentRun {
        z,
        y: u * rho,
        rho,
        iterations: cfg.max_iter,
        primal,
        dual,
    }
}

const NEWTON_MAX_ITER: usize = 100;

/// `f(Θ) = tr(SΘ) − log|Θ|` with `Θ⁻¹`, or `None` when `Θ` is not PD.
fn objective_and_inverse(s: &DMatrix<f64>, theta: &DMatrix<f64>) -> Option<(f64, DMatrix<f64>)> {
    let chol = theta.clone().cholesky()?;
    let logdet = 2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    Some((crate::linalg::trace_product(s, theta) - logdet, chol.inverse()))
}

/// Damped Newton on the free entries of one component, started from a
/// stalled ADMM iterate. The step is affine invariant, so it is unaffected
/// by the conditioning that slows ADMM. Returns `None` if `z0` is not
/// PD or the gradient does not reach `tol`.
fn newton_component(
    s: &DMatrix<f64>,
    fixed: &DMatrix<f64>,
    mask: &[bool],
    p: usize,
    z0: &DMatrix<f64>,
    start: &ComponentRun,
    tol: f64,
) -> Option<ComponentRun> {
    let free: Vec<(usize, usize)> = (0..p).flat_map(|j| (0..=j).map(move |l| (j, l))).filter(|&(j, l)| mask[j * p + l]).collect();
    let mut theta = DMatrix::from_fn(p, p, |j, l| if mask[j * p + l] { z0[(j, l)] } else { fixed[(j, l)] });
    symmetrize(&mut theta);
    let (mut f, mut w) = objective_and_inverse(s, &theta)?;
    let n = free.len();
    let terms = |(a, b): (usize, usize)| if a == b { vec![(a, b)] } else { vec![(a, b), (b, a)] };
    let done = |theta: DMatrix<f64>, w: &DMatrix<f64>, iterations: usize, gnorm: f64| ComponentRun {
        z: theta,
        y: w - s,
        rho: start.rho,
        iterations: start.iterations + iterations,
        primal: 0.0,
        dual: gnorm,
    };
    // Quadratic convergence makes a much tighter target nearly free; it is
    // dropped to `tol` only if rounding stalls the line search.
    let target = tol * 1e-4;
    let mut gnorm = f64::INFINITY;
    for iter in 0..NEWTON_MAX_ITER {
        let g = nalgebra::DVector::from_iterator(n, free.iter().map(|&(j, l)| {
            let m = if j == l { 1.0 } else { 2.0 };
            m * (s[(j, l)] - w[(j, l)])
        }));
        gnorm = g.norm();
        if gnorm <= target {
            return Some(done(theta, &w, iter, gnorm));
        }
        let mut h = DMatrix::zeros(n, n);
        for (e, &pe) in free.iter().enumerate() {
            for (q, &pq) in free.iter().enumerate().take(e + 1) {
                let mut v = 0.0;
                for (a, b) in terms(pe) {
                    for (c, d) in terms(pq) {
                        v += w[(b, c)] * w[(d, a)];
                    }
                }
                h[(e, q)] = v;
                h[(q, e)] = v;
            }
        }
        let Some(chol) = h.cholesky() else { break };
        let step = chol.solve(&(-&g));
        let slope = g.dot(&step);
        let mut t = 1.0;
        let mut moved = false;
        while t >= 1e-12 {
            let mut trial = theta.clone();
            for (e, &(j, l)) in free.iter().enumerate() {
                trial[(j, l)] += t * step[e];
                if j != l {
                    trial[(l, j)] += t * step[e];
                }
            }
            if let Some((ft, wt)) = objective_and_inverse(s, &trial) {
                // Near the optimum the decrease is below rounding in `f`.
                let flat = -slope <= 1e-13 * f.abs().max(1.0);
                if ft <= f + 0.25 * t * slope || (flat && ft <= f + 1e-13 * f.abs().max(1.0)) {
                    theta = trial;
                    f = ft;
                    w = wt;
                    moved = true;
                    break;
                }
            }
            t *= 0.5;
        }
        if !moved {
            break;
        }
    }
    (gnorm <= tol).then(|| done(theta, &w, NEWTON_MAX_ITER, gnorm))
}

fn from_components_unchecked(comps: &[DMatrix<f64>], p: usize, k: usize) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(p * k, p * k);
    for (c, m) in comps.iter().enumerate() {
        for l in 0..p {
            for j in 0..p {
                out[(j * k + c, l * k + c)] = m[(j, l)];
            }
        }
    }
    out
}

fn check_square(s: &DMatrix<f64>, dim: usize, what: &str) -> Result<()> {
    if s.nrows() == dim && s.ncols() == dim {
        Ok(())
    } else {
        Err(MpcError::DimensionMismatch(format!(
            "{what} is {}x{}, expected {dim}x{dim}",
            s.nrows(),
            s.ncols()
        )))
    }
}

fn check_warm(warm: Option<&AdmmState>, dim: usize) -> Result<AdmmState> {
    match warm {
        Some(w) => {
            check_square(&w.z, dim, "warm-start Z")?;
            check_square(&w.y, dim, "warm-start dual")?;
            Ok(w.clone())
        }
        None => Ok(AdmmState::at(DMatrix::identity(dim, dim))),
    }
}

/// Adaptive functional graphical lasso:
/// minimizes `−log|Θ| + tr(Σ̂Θ) + λ Σ_{j,l} ‖Θ_jl‖_F / w_jl`, the sum running
/// over every block of the `p × p` grid.
pub fn adaptive_fglasso(
    sigma0: &BlockMatrix,
    weights: &DMatrix<f64>,
    lambda: f64,
    cfg: &AdmmConfig,
) -> Result<BlockMatrix> {
    adaptive_fglasso_warm(sigma0, weights, lambda, cfg, None).map(|s| s.theta)
}

pub fn adaptive_fglasso_warm(
    sigma0: &BlockMatrix,
    weights: &DMatrix<f64>,
    lambda: f64,
    cfg: &AdmmConfig,
    warm: Option<&AdmmState>,
) -> Result<AdmmSolution> {
    let (p, k) = (sigma0.p(), sigma0.k());
    if weights.nrows() != p || weights.ncols() != p {
        return Err(MpcError::DimensionMismatch(format!(
            "weights are {}x{}, expected {p}x{p}",
            weights.nrows(),
            weights.ncols()
        )));
    }
    if weights.iter().any(|w| !(*w > 0.0) || !w.is_finite()) {
        return Err(MpcError::InvalidInput("adaptive weights must be positive and finite".into()));
    }
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(MpcError::InvalidInput(format!("lasso penalty must be >= 0, got {lambda}")));
    }
    let init = check_warm(warm, p * k)?;
    run_admm(sigma0.data(), p, k, cfg, init, &Prox::Lasso { weights, lambda })
}

/// Maximizes `log|Θ| − tr(SΘ)` subject to `Θ_jl = Θ̂₀_jl` for pairs outside
/// `free`.
pub fn constrained_mle(
    sn_perm: &DMatrix<f64>,
    theta0: &BlockMatrix,
    free: &PairSet,
    cfg: &AdmmConfig,
) -> Result<BlockMatrix> {
    constrained_mle_warm(sn_perm, theta0, free, cfg, None).map(|s| s.theta)
}

/// As [`constrained_mle`]; without a warm start the iterates begin at `Θ̂₀`.
pub fn constrained_mle_warm(
    sn_perm: &DMatrix<f64>,
    theta0: &BlockMatrix,
    free: &PairSet,
    cfg: &AdmmConfig,
    warm: Option<&AdmmState>,
) -> Result<AdmmSolution> {
    let (p, k) = (theta0.p(), theta0.k());
    let d = p * k;
    check_square(sn_perm, d, "sample covariance")?;
    if let Some((j, l)) = free.iter().find(|&(j, _)| j >= p) {
        return Err(MpcError::InvalidInput(format!("pair ({j}, {l}) outside a {p}-channel grid")));
    }
    if free.is_empty() {
        return Ok(AdmmSolution {
            theta: theta0.clone(),
            state: AdmmState::at(theta0.data().clone()),
            report: AdmmReport {
                iterations: 0,
                primal_residual: 0.0,
                dual_residual: 0.0,
                fast_path_steps: 0,
            },
        });
    }
    let init = match warm {
        Some(_) => check_warm(warm, d)?,
        None => AdmmState::at(theta0.data().clone()),
    };
    let mask = free.mask(p);
    let fixed = theta0.data();
    let mut sol = run_admm(sn_perm, p, k, cfg, init, &Prox::Fixed { mask: mask.clone(), fixed })?;
    // Symmetrization cannot move fixed blocks since Θ̂₀ is symmetric, but
    // restore them bit-for-bit anyway.
    let mut out = sol.theta.clone().into_inner();
    for c in 0..d {
        for r in 0..d {
            if !mask[(r / k) * p + c / k] {
                out[(r, c)] = fixed[(r, c)];
            }
        }
    }
    sol.theta = BlockMatrix::from_symmetrized(p, k, out);
    Ok(sol)
}

/// Objective minimized by [`adaptive_fglasso`].
pub fn fglasso_objective(
    theta: &DMatrix<f64>,
    sigma0: &BlockMatrix,
    weights: &DMatrix<f64>,
    lambda: f64,
) -> Option<f64> {
    let (p, k) = (sigma0.p(), sigma0.k());
    let logdet = crate::linalg::logdet_pd(theta)?;
    let mut pen = 0.0;
    for j in 0..p {
        for l in 0..p {
            pen += theta.view((j * k, l * k), (k, k)).norm() / weights[(j, l)];
        }
    }
    Some(-logdet + crate::linalg::trace_product(sigma0.data(), theta) + lambda * pen)
}
