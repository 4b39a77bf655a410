//! Acceptance suite. Prints one line per criterion and exits non-zero if any
//! criterion fails. `MPC_ACCEPTANCE_ONLY=1,2,9` restricts the run to the
//! listed criteria; `MPC_CASE_STUDY_DIR` points at the case-study data
//! (`ic.csv`, `oc.csv`, `groups.json`) for criterion 8.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use mpc_core::cli::{ingest_profiles, read_group_map, GroupCentering};
use mpc_core::diagnostics::{bh_reject, diagnose, estimate_change_point};
use mpc_core::fda::ScoreSet;
use mpc_core::graphmodel::{
    adaptive_fglasso, constrained_mle, fglasso_objective, fit_precision, group_soft_threshold, log_likelihood,
    ridge_precision, ridge_stationarity_residual, step_theta, AdmmConfig, BlockMatrix, PairSet, PrecisionConfig,
};
use mpc_core::linalg::logdet_pd;
use mpc_core::monitor::{censored_arl, fisher_combine, phase1_calibrate, Chart, MonitorConfig, StepResult};
use mpc_core::seeding::derive_rng;
use mpc_core::simgen::{
    apply_scenario, base_matrix, build_theta0, evaluate_arl, generate_profiles, ProfileGenerator, Scenario,
    ScenarioSpec, SimModelSpec,
};

enum Verdict {
    Pass(String),
    Fail(String),
    Skip(String),
}

fn verdict(ok: bool, detail: String) -> Verdict {
    if ok {
        Verdict::Pass(detail)
    } else {
        Verdict::Fail(detail)
    }
}

fn random_pd(rng: &mut ChaCha8Rng, d: usize, ridge: f64) -> DMatrix<f64> {
    let a = DMatrix::from_fn(d, d, |_, _| rng.sample::<f64, _>(StandardNormal));
    &a * a.transpose() / d as f64 + DMatrix::identity(d, d) * ridge
}

fn block_diag_pd(rng: &mut ChaCha8Rng, p: usize, k: usize) -> BlockMatrix {
    let comps: Vec<DMatrix<f64>> = (0..k).map(|_| random_pd(rng, p, 0.3)).collect();
    BlockMatrix::from_components(&comps).unwrap()
}

// ---------------------------------------------------------------- 1

/// Proximal gradient with backtracking on the lasso objective, every
/// ordered block penalized.
fn lasso_oracle(sigma: &BlockMatrix, w: &DMatrix<f64>, lambda: f64) -> f64 {
    let (p, k) = (sigma.p(), sigma.k());
    let d = p * k;
    let s = sigma.data();
    let smooth = |t: &DMatrix<f64>| logdet_pd(t).map(|ld| -ld + (s * t).trace());
    let prox = |a: &DMatrix<f64>, step: f64| {
        let mut out = a.clone();
        for j in 0..p {
            for l in 0..p {
                let b = a.view((j * k, l * k), (k, k)).clone_owned();
                out.view_mut((j * k, l * k), (k, k))
                    .copy_from(&group_soft_threshold(&b, step * lambda / w[(j, l)]));
            }
        }
        out
    };
    let mut theta = DMatrix::from_diagonal(&s.diagonal().map(|v| 1.0 / v));
    let mut g = smooth(&theta).unwrap();
    let mut step = 1.0;
    for _ in 0..50_000 {
        let inv = theta.clone().try_inverse().unwrap();
        let grad = s - &inv;
        let mut next;
        loop {
            next = prox(&(&theta - &grad * step), step);
            next = (&next + next.transpose()) * 0.5;
            let diff = &next - &theta;
            if let Some(gn) = smooth(&next) {
                if gn <= g + grad.dot(&diff) + diff.norm_squared() / (2.0 * step) + 1e-15 {
                    g = gn;
                    break;
                }
            }
            step *= 0.5;
        }
        let moved = (&next - &theta).norm();
        theta = next;
        step *= 1.5;
        if moved < 1e-13 {
            break;
        }
    }
    let _ = d;
    fglasso_objective(&theta, sigma, w, lambda).unwrap()
}

/// Projected gradient ascent over the free blocks.
fn constrained_oracle(s: &DMatrix<f64>, theta0: &BlockMatrix, free: &PairSet) -> f64 {
    let (p, k) = (theta0.p(), theta0.k());
    let mask = free.mask(p);
    let ll = |t: &DMatrix<f64>| logdet_pd(t).map(|ld| ld - (s * t).trace());
    let mut theta = theta0.data().clone();
    let mut f = ll(&theta).unwrap();
    let mut step = 1.0;
    for _ in 0..100_000 {
        let inv = theta.clone().try_inverse().unwrap();
        let grad = DMatrix::from_fn(p * k, p * k, |r, c| {
            if mask[(r / k) * p + c / k] {
                inv[(r, c)] - s[(r, c)]
            } else {
                0.0
            }
        });
        let gn2 = grad.norm_squared();
        if gn2.sqrt() < 1e-12 {
            break;
        }
        loop {
            let next = &theta + &grad * step;
            if let Some(fnext) = ll(&next) {
                if fnext >= f + 0.5 * step * gn2 {
                    theta = next;
                    f = fnext;
                    break;
                }
            }
            step *= 0.5;
            if step < 1e-20 {
                return f;
            }
        }
        step *= 1.5;
    }
    f
}

fn criterion_1() -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let (mut worst_lasso, mut worst_constr, mut worst_ridge) = (0.0f64, 0.0f64, 0.0f64);
    for i in 0..50 {
        let p = 2 + (i % 2);
        let k = 1 + (i / 2) % 2;
        let d = p * k;
        let sigma = if i % 4 < 2 {
            BlockMatrix::new(p, k, random_pd(&mut rng, d, 0.2)).unwrap()
        } else {
            block_diag_pd(&mut rng, p, k)
        };
        let mut w = DMatrix::from_fn(p, p, |_, _| rng.random_range(0.5..2.0));
        w = (&w + w.transpose()) * 0.5;
        let lambda = rng.random_range(0.02..0.5);
        let cfg = AdmmConfig::for_dimension(d);
        let est = adaptive_fglasso(&sigma, &w, lambda, &cfg).unwrap();
        let obj = fglasso_objective(est.data(), &sigma, &w, lambda).unwrap();
        worst_lasso = worst_lasso.max((obj - lasso_oracle(&sigma, &w, lambda)).abs());

        let theta0 = block_diag_pd(&mut rng, p, k);
        let mut free = PairSet::new();
        for j in 0..p {
            for l in 0..=j {
                if rng.random_bool(0.5) {
                    free.insert(j, l);
                }
            }
        }
        if free.is_empty() {
            free.insert(p - 1, 0);
        }
        let got = constrained_mle(sigma.data(), &theta0, &free, &cfg).unwrap();
        let ll = log_likelihood(&got, sigma.data()).unwrap();
        worst_constr = worst_constr.max((ll - constrained_oracle(sigma.data(), &theta0, &free)).abs());

        let target = block_diag_pd(&mut rng, p, k);
        let gamma = 10f64.powf(rng.random_range(-3.0..1.0));
        let r = ridge_precision(&sigma, &target, gamma).unwrap();
        let res = ridge_stationarity_residual(&r, &sigma, &target, gamma).unwrap();
        worst_ridge = worst_ridge.max(res / (1e-8 * d as f64));
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(
        worst_lasso <= 1e-4 && worst_constr <= 1e-4 && worst_ridge <= 1.0 && secs < 60.0,
        format!(
            "max |Δobjective| lasso {worst_lasso:.2e}, constrained {worst_constr:.2e} (limit 1e-4); \
             ridge residual at {worst_ridge:.2e} of 1e-8·pK; {secs:.1}s"
        ),
    )
}

// ---------------------------------------------------------------- 2

fn criterion_2() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let (mut zero_ok, mut norm_err, mut zeros) = (true, 0.0f64, 0);
    for i in 0..1000 {
        let k = 1 + i % 4;
        let a = DMatrix::from_fn(k, k, |_, _| rng.sample::<f64, _>(StandardNormal));
        let (lambda, rho, w) = (rng.random_range(0.01..3.0), rng.random_range(0.1..5.0), rng.random_range(0.2..2.0));
        let thr = lambda / (rho * w);
        let z = group_soft_threshold(&a, thr);
        if a.norm() <= thr {
            zeros += 1;
            zero_ok &= z.iter().all(|v| *v == 0.0);
        } else {
            zero_ok &= z.norm() > 0.0;
            norm_err = norm_err.max((z.norm() - (a.norm() - thr)).abs());
        }
    }
    let mut fast_err = 0.0f64;
    let mut fast_used = true;
    for _ in 0..100 {
        let (p, k) = (rng.random_range(2..6), rng.random_range(2..5));
        let s = block_diag_pd(&mut rng, p, k).into_inner();
        let z = block_diag_pd(&mut rng, p, k).into_inner();
        let u = block_diag_pd(&mut rng, p, k).into_inner() * 0.1;
        let rho = rng.random_range(0.1..5.0);
        let (fast, used) = step_theta(&s, &z, &u, rho, p, k, true);
        let (full, _) = step_theta(&s, &z, &u, rho, p, k, false);
        fast_used &= used;
        fast_err = fast_err.max((fast - full).abs().max());
    }
    verdict(
        zero_ok && norm_err <= 1e-12 && fast_used && fast_err <= 1e-8,
        format!(
            "{zeros}/1000 zeroed exactly, norm error {norm_err:.1e} (limit 1e-12); fast step max diff {fast_err:.1e} (limit 1e-8)"
        ),
    )
}

// ---------------------------------------------------------------- 3 to 6

struct Desk {
    chart: Chart,
    model: SimModelSpec,
    ic_arl: Option<f64>,
}

fn desk_chart() -> Desk {
    let model = SimModelSpec::default();
    let theta0 = build_theta0(&model).unwrap();
    let ic = generate_profiles(&theta0, 800, &model).unwrap();
    let cfg = MonitorConfig {
        arl0: 100.0,
        n_seq_ic: 100,
        l_seq_ic: 150,
        rng_seed: 17,
        ..Default::default()
    };
    let t = Instant::now();
    let (chart, report) = phase1_calibrate(&ic, &cfg).unwrap();
    eprintln!(
        "calibrated in {:.0}s: {} components, {} edges, h = {:.3}, calibration ARL {:.1}",
        t.elapsed().as_secs_f64(),
        report.n_components,
        report.edges.len(),
        report.control_limit,
        report.arl_estimate
    );
    Desk {
        chart,
        model,
        ic_arl: None,
    }
}

fn criterion_3(desk: &mut Desk) -> Verdict {
    let t = Instant::now();
    let theta0 = build_theta0(&desk.model).unwrap();
    let r = evaluate_arl(&desk.chart, &theta0, &desk.model, 100, 500, 303).unwrap();
    desk.ic_arl = Some(r.arl);
    verdict(
        r.arl >= 80.0 && !r.arl_lower_bound,
        format!(
            "IC ARL {:.1} over 100 sequences ({} signalled, limit >= 80); {:.0}s",
            r.arl,
            r.uncensored,
            t.elapsed().as_secs_f64()
        ),
    )
}

fn criterion_4(desk: &Desk) -> Verdict {
    let t = Instant::now();
    let Some(ic_arl) = desk.ic_arl else {
        return Verdict::Fail("needs the IC ARL from criterion 3".into());
    };
    let theta0 = build_theta0(&desk.model).unwrap();
    let base = base_matrix(desk.model.basis_size);
    let mut ok = true;
    let mut parts = Vec::new();
    for (si, sc) in [Scenario::I, Scenario::IV].into_iter().enumerate() {
        let mut arls = Vec::new();
        for sl in 1..=4u8 {
            let spec = ScenarioSpec {
                scenario: sc,
                n_el: 1,
                severity: sl,
                seed: 40 + si as u64,
                selected_blocks: Vec::new(),
            };
            let out = apply_scenario(&theta0, &spec, &base).unwrap();
            let r = evaluate_arl(&desk.chart, &out.theta1, &desk.model, 60, 300, 400 + 10 * si as u64 + sl as u64)
                .unwrap();
            arls.push(r.arl);
        }
        let decreasing = arls.windows(2).all(|w| w[1] < w[0]);
        let small = arls[3] < 0.25 * ic_arl;
        ok &= decreasing && small;
        parts.push(format!(
            "{sc:?}: {}",
            arls.iter().map(|a| format!("{a:.1}")).collect::<Vec<_>>().join(" > ")
        ));
    }
    verdict(
        ok,
        format!(
            "ARL by SL 1..4, {}; SL4 limit {:.1}; {:.0}s",
            parts.join("; "),
            0.25 * ic_arl,
            t.elapsed().as_secs_f64()
        ),
    )
}

fn criterion_5(desk: &Desk) -> Verdict {
    let theta0 = build_theta0(&desk.model).unwrap();
    let spec = ScenarioSpec {
        scenario: Scenario::I,
        n_el: 1,
        severity: 3,
        seed: 55,
        selected_blocks: Vec::new(),
    };
    let theta1 = apply_scenario(&theta0, &spec, &base_matrix(desk.model.basis_size)).unwrap().theta1;
    let (mut nested, mut worst_drop, mut exact, mut steps) = (true, 0.0f64, true, 0);
    for seq in 0..10u64 {
        let gen = ProfileGenerator::new(if seq % 2 == 0 { &theta0 } else { &theta1 }, &desk.model).unwrap();
        let mut rng = derive_rng(505, 0, seq);
        let mut session = desk.chart.session().unwrap();
        for _ in 0..100 {
            let r = session.step_raw(&gen.observation(&mut rng)).unwrap();
            steps += 1;
            for w in r.index_sets.windows(2) {
                let a: BTreeSet<_> = w[0].iter().collect();
                nested &= w[1].iter().filter(|x| a.contains(x)).count() == a.len();
            }
            for w in r.lambda_s.windows(2) {
                worst_drop = worst_drop.max(w[0] - w[1]);
            }
            let recomputed = -2.0 * r.s_pvalues.iter().map(|p| p.ln()).sum::<f64>();
            exact &= recomputed == r.lambda && fisher_combine(&r.s_pvalues).unwrap() == r.lambda;
        }
    }
    verdict(
        nested && worst_drop <= 1e-5 && exact,
        format!(
            "{steps} steps: nested {nested}, largest decrease of Λₛ in s {worst_drop:.2e} (limit 1e-5), Λ recomputed exactly {exact}"
        ),
    )
}

fn bh_brute(pv: &[f64], q: f64) -> Vec<bool> {
    let m = pv.len();
    let mut best = 0;
    for k in 1..=m {
        let below = pv.iter().filter(|&&p| p <= k as f64 * q / m as f64).count();
        if below >= k {
            best = k;
        }
    }
    let mut sorted = pv.to_vec();
    sorted.sort_by(f64::total_cmp);
    let cut = if best == 0 { f64::NEG_INFINITY } else { sorted[best - 1] };
    pv.iter().map(|&p| p <= cut).collect()
}

const IC_PREFIX: usize = 10;

fn criterion_6(desk: &Desk) -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    let mut bh_ok = 0;
    for _ in 0..500 {
        let m = rng.random_range(1..=20);
        let pv: Vec<f64> = (0..m)
            .map(|_| if rng.random_bool(0.3) { rng.random_range(0.0..0.01) } else { rng.random::<f64>() })
            .collect();
        let q = rng.random_range(0.01..0.3);
        bh_ok += (bh_reject(&pv, q).unwrap() == bh_brute(&pv, q)) as usize;
    }

    let engine = desk.chart.engine();
    let (p, k) = (engine.p, engine.k);
    let chol = desk.chart.precision.sigma0.data().clone().cholesky().unwrap();
    let l = chol.l();
    let mut hits = 0;
    for rep in 0..100u64 {
        let mut r = derive_rng(616, 0, rep);
        let obs: Vec<Vec<f64>> = (0..80)
            .map(|i| {
                let z = nalgebra::DVector::from_fn(p * k, |_, _| r.sample::<f64, _>(StandardNormal));
                let x = &l * z * if i >= 50 { 2f64.sqrt() } else { 1.0 };
                // ξ-order (j, k) to score layout k·p + j
                let mut v = vec![0.0; p * k];
                for j in 0..p {
                    for c in 0..k {
                        v[c * p + j] = x[j * k + c];
                    }
                }
                v
            })
            .collect();
        let scores = ScoreSet::from_observations(k, p, &obs).unwrap();
        let cp = estimate_change_point(&scores, &engine.theta0, &engine.theta0_star, engine.gamma).unwrap();
        hits += (45..=55).contains(&cp.tau) as usize;
    }

    let theta0 = build_theta0(&desk.model).unwrap();
    let base = base_matrix(desk.model.basis_size);
    let reps = 30u64;
    let mut found = 0;
    for rep in 0..reps {
        let spec = ScenarioSpec {
            scenario: Scenario::I,
            n_el: 1,
            severity: 4,
            seed: 660 + rep,
            selected_blocks: Vec::new(),
        };
        let out = apply_scenario(&theta0, &spec, &base).unwrap();
        let truth = out.spec.selected_blocks[0];
        // SL 4 signals on the first shifted step, so the stream opens with
        // in-control observations to leave a pre-change segment.
        let ic = ProfileGenerator::new(&theta0, &desk.model).unwrap();
        let oc = ProfileGenerator::new(&out.theta1, &desk.model).unwrap();
        let mut rng = derive_rng(661, 0, rep);
        let mut session = desk.chart.session().unwrap();
        let mut history: Vec<StepResult> = Vec::new();
        for i in 0..300 {
            let gen = if i < IC_PREFIX { &ic } else { &oc };
            let r = session.step_raw(&gen.observation(&mut rng)).unwrap();
            let signal = r.signal;
            history.push(r);
            if signal {
                break;
            }
        }
        // an alarm inside the prefix is a false alarm and counts as a miss
        if history.last().is_some_and(|r| r.signal) && history.len() > IC_PREFIX {
            let d = diagnose(&desk.chart, &history, 0.05).unwrap();
            found += d.shifted_pairs.contains(&truth) as usize;
        }
    }
    verdict(
        bh_ok == 500 && hits >= 90 && found * 10 >= 9 * reps as usize,
        format!(
            "BH agrees on {bh_ok}/500; τ̂ in [45, 55] for {hits}/100 (limit 90); true pair diagnosed in {found}/{reps} (limit 90%)"
        ),
    )
}

// ---------------------------------------------------------------- 7

fn criterion_7() -> Verdict {
    let model = SimModelSpec::default();
    let theta0 = build_theta0(&model).unwrap();
    let (p, m) = (model.p, model.basis_size);
    let sigma = theta0.data().clone().try_inverse().unwrap();
    let truth: Vec<DMatrix<f64>> = (0..m)
        .map(|c| {
            DMatrix::from_fn(p, p, |j, l| sigma[(j * m + c, l * m + c)])
                .try_inverse()
                .unwrap()
        })
        .collect();
    let gen = ProfileGenerator::new(&theta0, &model).unwrap();
    let reps = 20;
    let mut sum_sparse = vec![DMatrix::<f64>::zeros(p, p); m];
    let mut sum_desparse = sum_sparse.clone();
    for rep in 0..reps {
        let mut rng = derive_rng(707, 0, rep);
        let obs: Vec<Vec<f64>> = (0..500)
            .map(|_| {
                let c = gen.coefficients(&mut rng);
                let mut v = vec![0.0; p * m];
                for j in 0..p {
                    for b in 0..m {
                        v[b * p + j] = c[j * m + b];
                    }
                }
                v
            })
            .collect();
        let scores = ScoreSet::from_observations(m, p, &obs).unwrap();
        let fit = fit_precision(
            &scores,
            &PrecisionConfig {
                seed: rep,
                ..Default::default()
            },
        )
        .unwrap();
        for c in 0..m {
            sum_sparse[c] += fit.theta0.component(c);
            sum_desparse[c] += fit.theta0_desparse.component(c);
        }
    }
    let bias = |sums: &[DMatrix<f64>]| {
        let (mut acc, mut n) = (0.0, 0);
        for (c, s) in sums.iter().enumerate() {
            for j in 0..p {
                for l in 0..p {
                    if j != l {
                        acc += (s[(j, l)] / reps as f64 - truth[c][(j, l)]).abs();
                        n += 1;
                    }
                }
            }
        }
        acc / n as f64
    };
    let (b0, b1) = (bias(&sum_sparse), bias(&sum_desparse));
    verdict(
        b1 < b0,
        format!("mean |bias| off-diagonal blocks: sparse {b0:.4e}, de-sparsified {b1:.4e}"),
    )
}

// ---------------------------------------------------------------- 8

fn components_of(p: usize, edges: &[(usize, usize)]) -> Vec<BTreeSet<usize>> {
    let mut parent: Vec<usize> = (0..p).collect();
    fn find(parent: &mut [usize], x: usize) -> usize {
        if parent[x] != x {
            let r = find(parent, parent[x]);
            parent[x] = r;
        }
        parent[x]
    }
    for &(a, b) in edges {
        let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
        parent[ra] = rb;
    }
    let mut groups: BTreeMap<usize, BTreeSet<usize>> = BTreeMap::new();
    for x in 0..p {
        let r = find(&mut parent, x);
        groups.entry(r).or_default().insert(x);
    }
    groups.into_values().collect()
}

fn criterion_8() -> Verdict {
    let Some(dir) = std::env::var_os("MPC_CASE_STUDY_DIR").map(PathBuf::from) else {
        return Verdict::Skip("case-study data not supplied (set MPC_CASE_STUDY_DIR)".into());
    };
    let run = || -> Result<Verdict, mpc_core::MpcError> {
        let ic = ingest_profiles(&dir.join("ic.csv"))?;
        let oc = ingest_profiles(&dir.join("oc.csv"))?;
        let map = read_group_map(&dir.join("groups.json"))?;
        let shape = (ic.sample.n_channels(), ic.sample.n_points());
        let centering = GroupCentering::fit(&ic.sample, &ic.channels, &map)?;
        let (chart, report) = phase1_calibrate(&centering.apply_sample(&ic.sample)?, &MonitorConfig::default())?;
        let groups: BTreeSet<BTreeSet<usize>> = centering
            .groups
            .iter()
            .collect::<BTreeSet<_>>()
            .into_iter()
            .map(|g| (0..shape.0).filter(|&j| &centering.groups[j] == g).collect())
            .collect();
        let comps: BTreeSet<BTreeSet<usize>> = components_of(shape.0, &report.edges).into_iter().collect();
        let mut obs = oc.aligned(&ic.channels, ic.sample.grid())?;
        obs.iter_mut().for_each(|o| centering.apply(o));
        let mut session = chart.session()?;
        let mut history = Vec::new();
        for o in &obs {
            let r = session.step_raw(o)?;
            let signal = r.signal;
            history.push(r);
            if signal {
                break;
            }
        }
        let signalled = history.last().is_some_and(|r| r.signal);
        let (alarm, concentrated) = if signalled && history.len() >= 2 {
            let d = diagnose(&chart, &history, 0.05)?;
            let mut per_group: BTreeMap<&String, usize> = BTreeMap::new();
            for &(j, l) in &d.shifted_pairs {
                if centering.groups[j] == centering.groups[l] {
                    *per_group.entry(&centering.groups[j]).or_default() += 1;
                }
            }
            let top = per_group.values().max().copied().unwrap_or(0);
            (d.signal_step, !d.shifted_pairs.is_empty() && 2 * top > d.shifted_pairs.len())
        } else {
            (0, false)
        };
        Ok(verdict(
            shape == (15, 60) && comps == groups && signalled && concentrated,
            format!(
                "{}x{} profiles; graph components match groups {}; signal at {alarm}; pairs concentrated {concentrated}",
                shape.0,
                shape.1,
                comps == groups
            ),
        ))
    };
    run().unwrap_or_else(|e| Verdict::Fail(format!("pipeline error: {e}")))
}

// ---------------------------------------------------------------- 9

fn run_commands(dir: &Path) -> Vec<(String, i32)> {
    let bin = env!("CARGO_BIN_EXE_mpc");
    let p = |n: &str| dir.join(n).to_str().unwrap().to_string();
    std::fs::write(dir.join("cfg.json"), r#"{"n_seq_ic": 20, "l_seq_ic": 80, "gamma_subsamples": 4}"#).unwrap();
    std::fs::write(
        dir.join("sim.json"),
        r#"{"model": {"p": 4, "n_grid": 30, "seed": 3}, "scenario": {"scenario": "IV", "n_el": 1, "severity": 3, "seed": 1},
            "n_phase1": 160, "monitor": {"n_seq_ic": 20, "l_seq_ic": 60, "gamma_subsamples": 4, "arl0": 20},
            "n_seq": 6, "l_seq": 40}"#,
    )
    .unwrap();
    let commands: Vec<Vec<String>> = vec![
        vec!["generate".into(), "--p".into(), "4".into(), "--n".into(), "160".into(), "--n-grid".into(), "30".into(), "--out".into(), p("ic.csv")],
        vec![
            "generate".into(), "--p".into(), "4".into(), "--n".into(), "150".into(), "--n-grid".into(), "30".into(), "--draw".into(),
            "1".into(), "--scenario".into(), "IV".into(), "--severity".into(), "4".into(), "--shift-after".into(), "10".into(),
            "--out".into(), p("oc.csv"),
        ],
        vec![
            "calibrate".into(), "--ic".into(), p("ic.csv"), "--config".into(), p("cfg.json"), "--arl0".into(), "20".into(),
            "--ns".into(), "3".into(), "--out".into(), p("model.json"),
        ],
        vec!["monitor".into(), "--model".into(), p("model.json"), "--stream".into(), p("oc.csv"), "--out".into(), p("run.jsonl")],
        vec![
            "diagnose".into(), "--model".into(), p("model.json"), "--run".into(), p("run.jsonl"), "--out".into(), p("diag.json"),
            "--svg".into(), p("lambda.svg"),
        ],
        vec!["simulate".into(), "--config".into(), p("sim.json"), "--out".into(), p("arl.json"), "--csv".into(), p("arl.csv")],
    ];
    commands
        .iter()
        .map(|args| {
            let out = Command::new(bin).args(args).env("MPC_SEED", "9").env("RUST_LOG", "error").output().unwrap();
            (args[0].clone(), out.status.code().unwrap_or(-1))
        })
        .collect()
}

fn criterion_9() -> Verdict {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let (ca, cb) = (run_commands(a.path()), run_commands(b.path()));
    let codes_ok = ca == cb && ca.iter().all(|(c, code)| if c == "monitor" { *code == 2 } else { *code == 0 });
    let names = ["ic.csv", "oc.csv", "model.json", "model.report.json", "run.jsonl", "diag.json", "lambda.svg", "arl.json", "arl.csv"];
    let mut differing = Vec::new();
    for n in names {
        match (std::fs::read(a.path().join(n)), std::fs::read(b.path().join(n))) {
            (Ok(x), Ok(y)) if x == y && !x.is_empty() => {}
            _ => differing.push(n),
        }
    }
    verdict(
        codes_ok && differing.is_empty(),
        format!(
            "{} files compared after two runs; exit codes {:?}; differing or missing {:?}",
            names.len(),
            ca.iter().map(|c| c.1).collect::<Vec<_>>(),
            differing
        ),
    )
}

// ----------------------------------------------------------------

fn main() {
    let only: Option<BTreeSet<u32>> = std::env::var("MPC_ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|x| x.trim().parse().ok()).collect());
    let want = |n: u32| only.as_ref().is_none_or(|s| s.contains(&n));
    let names = [
        "solver oracle equivalence",
        "closed forms",
        "IC false-alarm control",
        "OC detection ordering",
        "nestedness and monotonicity",
        "diagnostics",
        "de-sparsification bias",
        "case study",
        "determinism",
    ];
    let mut desk: Option<Desk> = None;
    let mut failed = 0;
    for n in 1..=9u32 {
        if !want(n) {
            continue;
        }
        if (3..=6).contains(&n) && desk.is_none() {
            desk = Some(desk_chart());
        }
        let t = Instant::now();
        let v = match n {
            1 => criterion_1(),
            2 => criterion_2(),
            3 => criterion_3(desk.as_mut().unwrap()),
            4 => {
                let d = desk.as_mut().unwrap();
                if d.ic_arl.is_none() {
                    let theta0 = build_theta0(&d.model).unwrap();
                    let r = evaluate_arl(&d.chart, &theta0, &d.model, 100, 500, 303).unwrap();
                    d.ic_arl = Some(censored_arl(&r.runs.iter().map(|x| (x.rl, x.censored)).collect::<Vec<_>>()).unwrap_or(r.arl));
                }
                criterion_4(d)
            }
            5 => criterion_5(desk.as_ref().unwrap()),
            6 => criterion_6(desk.as_ref().unwrap()),
            7 => criterion_7(),
            8 => criterion_8(),
            _ => criterion_9(),
        };
        let name = names[n as usize - 1];
        let secs = t.elapsed().as_secs_f64();
        match v {
            Verdict::Pass(d) => println!("criterion {n} PASS: {name}: {d} [{secs:.0}s]"),
            Verdict::Fail(d) => {
                failed += 1;
                println!("criterion {n} FAIL: {name}: {d} [{secs:.0}s]")
            }
            Verdict::Skip(d) => println!("criterion {n} SKIP: {name}: {d}"),
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
