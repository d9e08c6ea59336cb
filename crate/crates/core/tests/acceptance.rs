//! Acceptance criteria. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fails.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use common::{central_diff, close};
use gammaphi::calibration::{calibration_gap, certify, sample_simplex, SamplingPlan, Tolerances, Verdict};
use gammaphi::consistency::*;
use gammaphi::counterexample::*;
use gammaphi::optim::bisect;
use gammaphi::risk::*;
use gammaphi::{LossSpec, Permutation, ProbVector, ScoreVector};

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn c1_counterexample() -> Outcome {
    let spec = LossSpec::counterexample(3);
    let p = face_point(0.6, 3).map_err(|e| e.to_string())?;
    let bayes = bayes_conditional_risk(&p, &spec, &SolverOptions::default()).map_err(|e| e.to_string())?.value;
    let gap = |t: f64| conditional_risk(&p, &spec, &divergent_witness(3, t).unwrap()).unwrap() - bayes;
    let (g100, g1000) = (gap(100.0), gap(1000.0));
    ensure(g100.abs() < 1e-2, || format!("|gap(100)| = {g100:e}"))?;
    ensure(g1000.abs() < 2e-3, || format!("|gap(1000)| = {g1000:e}"))?;
    let gaps: Vec<f64> = DEFAULT_T_GRID.iter().map(|&t| gap(t)).collect();
    ensure(gaps.windows(2).all(|w| w[1] <= w[0]), || format!("not monotone: {gaps:?}"))?;
    for &t in &DEFAULT_T_GRID {
        let w = divergent_witness(3, t).unwrap();
        ensure(w.argmax() == 1 && p.argmax() == 0, || format!("argmax at t = {t}"))?;
    }
    let report = certify(&spec, &SamplingPlan::stratified(200, 0), &Tolerances::default(), &SolverOptions::default())
        .map_err(|e| e.to_string())?;
    ensure(report.verdict == Verdict::ViolationFound, || format!("verdict {:?}", report.verdict))?;
    Ok(format!("gap(100) = {g100:.2e}, gap(1000) = {g1000:.2e}, certify: ViolationFound"))
}

fn c2_derivative_anchors() -> Outcome {
    let ln2 = 2f64.ln();
    let mut worst: f64 = 0.0;
    for r in [0.34, 0.5, 0.6, 2.0 / 3.0] {
        let a = (f_derivative(r, ln2) - (8.0 - 8.5 * r)).abs();
        let b = (f_derivative(r, -ln2) - (1.0 - 17.0 * r) / 2.0).abs();
        worst = worst.max(a).max(b);
        ensure(a < 1e-12 && b < 1e-12, || format!("r = {r}: errors {a:e}, {b:e}"))?;
    }
    let r = 0.8;
    let root = bisect(|x| g_plus(r, x), 1e-9, 5.0, 1e-14).map_err(|e| e.to_string())?;
    let want = (r / (2.0 * (1.0 - r))).ln() / 3.0;
    ensure((root - want).abs() < 1e-8, || format!("G+ root {root} vs {want}"))?;
    let r = 0.25;
    let root2 = bisect(|x| g_minus(r, x), -5.0, -1e-9, 1e-14).map_err(|e| e.to_string())?;
    let want2 = (2.0 * r / (1.0 - r)).ln() / 3.0;
    ensure((root2 - want2).abs() < 1e-8, || format!("G- root {root2} vs {want2}"))?;
    Ok(format!("max anchor error {worst:.1e}; roots {root:.9}, {root2:.9}"))
}

fn c3_unique_minimum() -> Outcome {
    for r in [1.0 / 3.0, 0.5, 0.6, 2.0 / 3.0] {
        ensure(f_profile(r, 0.0) == 1.0, || format!("F(0) = {} at r = {r}", f_profile(r, 0.0)))?;
        for i in (0..2001).filter(|&i| i != 1000) {
            let x = -5.0 + 10.0 * i as f64 / 2000.0;
            let d = f_derivative(r, x);
            ensure(d.signum() == x.signum() && d != 0.0, || format!("r = {r}, x = {x}: F' = {d}"))?;
        }
    }
    Ok("2000 nonzero grid points x 4 values of r, F(0) = 1".into())
}

fn c4_positive_certification() -> Outcome {
    let losses = ["logistic", "coherence:0.5", "coherence:1", "coherence:2", "pairwise-exp", "sigmoid"];
    let plan = SamplingPlan::stratified(200, 0);
    let mut smallest = f64::INFINITY;
    for name in losses {
        for k in 2..=4 {
            let spec = LossSpec::preset(name, k).unwrap();
            let faces = sample_simplex(k, plan.n, plan.mode, plan.seed).unwrap().iter().filter(|p| p.on_boundary()).count();
            ensure(faces * 4 >= plan.n, || format!("only {faces} boundary samples"))?;
            let report = certify(&spec, &plan, &Tolerances::default(), &SolverOptions::default()).map_err(|e| e.to_string())?;
            ensure(report.probes.iter().any(|p| p.evaluated), || "no probe evaluated".into())?;
            let gap = report.min_gap.unwrap_or(f64::NAN);
            ensure(report.verdict == Verdict::CalibratedEvidence && gap > 1e-3, || {
                format!("{name} k = {k}: {:?}, min gap {gap:e}, failures {}", report.verdict, report.solver_failures)
            })?;
            smallest = smallest.min(gap);
        }
    }
    Ok(format!("18 runs CalibratedEvidence, smallest min gap {smallest:.3e}"))
}

fn c5_binary_gap() -> Outcome {
    let p = ProbVector::new(vec![0.6, 0.4]).unwrap();
    let rec = calibration_gap(&p, &LossSpec::logistic(2), 1, 0.05, &SolverOptions::default())
        .map_err(|e| e.to_string())?
        .ok_or("pair not evaluated")?;
    let want = 2f64.ln() + 0.6 * 0.6f64.ln() + 0.4 * 0.4f64.ln();
    ensure((rec.gap - want).abs() < 1e-4, || format!("gap {} vs {want}", rec.gap))?;
    Ok(format!("gap {:.6} vs closed form {want:.6}", rec.gap))
}

fn c6_permutation_invariants() -> Outcome {
    let mut rng = common::rng(6);
    let (mut w41, mut w42, mut w43) = (0f64, 0f64, 0f64);
    for trial in 0..1000 {
        let name = common::PRESETS[trial % common::PRESETS.len()];
        let k = 2 + trial % 4;
        let spec = LossSpec::preset(name, k).unwrap();

        let p = common::random_prob(&mut rng, k);
        let v = common::random_scores(&mut rng, k, 3.0);
        let sigma = common::random_permutation(&mut rng, k);
        let a = conditional_risk(&p, &spec, &v).unwrap();
        let b = conditional_risk(&sigma.apply(&p).unwrap(), &spec, &sigma.apply(&v).unwrap()).unwrap();
        w41 = w41.max((a - b).abs());

        let y = trial % k;
        let y2 = (y + 1 + trial / k % (k - 1)) % k;
        let tau = Permutation::transposition(k, y, y2).unwrap();
        let l = spec.components(v.as_slice()).unwrap();
        let lhs = a - conditional_risk(&p, &spec, &tau.apply(&v).unwrap()).unwrap();
        w42 = w42.max((lhs - (p[y] - p[y2]) * (l[y] - l[y2])).abs());

        let order = p.descending_order();
        let sorted_p = ProbVector::new(order.iter().map(|&i| p[i]).collect()).unwrap();
        let sorted_v = Permutation::sorting_descending(v.as_slice()).apply(&v).unwrap();
        let excess = conditional_risk(&sorted_p, &spec, &sorted_v).unwrap() - conditional_risk(&sorted_p, &spec, &v).unwrap();
        w43 = w43.max(excess);
    }
    ensure(w41 <= 1e-10 && w42 <= 1e-10 && w43 <= 1e-10, || format!("violations {w41:e}, {w42:e}, {w43:e}"))?;
    Ok(format!("max violations: relabeling {w41:.1e}, transposition {w42:.1e}, sorting {w43:.1e}"))
}

fn c7_gradients() -> Outcome {
    let mut rng = common::rng(7);
    let mut worst_sum: f64 = 0.0;
    for name in common::PRESETS {
        for i in 0..200 {
            let k = 2 + i % 3;
            let spec = LossSpec::preset(name, k).unwrap();
            let v = common::random_scores(&mut rng, k, 3.0);
            let p = common::random_prob(&mut rng, k);
            let jac = spec.jacobian(v.as_slice()).unwrap();
            let g = conditional_risk_gradient(&p, &spec, &v).unwrap();
            let risk = |x: &[f64]| conditional_risk(&p, &spec, &ScoreVector::new(x.to_vec()).unwrap()).unwrap();
            for j in 0..k {
                for y in 0..k {
                    let fd = central_diff(|x| spec.components(x).unwrap()[y], v.as_slice(), j, 1e-5);
                    ensure(close(jac[y][j], fd, 1e-6), || format!("{name} jacobian [{y}][{j}] {} vs {fd}", jac[y][j]))?;
                }
                let fd = central_diff(risk, v.as_slice(), j, 1e-5);
                ensure(close(g[j], fd, 1e-6), || format!("{name} gradient [{j}] {} vs {fd}", g[j]))?;
            }
            let s: f64 = g.iter().sum();
            worst_sum = worst_sum.max(s.abs());
            ensure(s.abs() < 1e-10, || format!("{name}: gradient sums to {s:e}"))?;
        }
    }
    Ok(format!("6 losses x 200 points, max |sum grad| {worst_sum:.1e}"))
}

fn c8_oracle() -> Outcome {
    let mut rng = common::rng(8);
    let opts = SolverOptions::default();
    let mut worst: f64 = 0.0;
    for k in [2, 3] {
        for name in ["logistic", "cex"] {
            let spec = LossSpec::preset(name, k).unwrap();
            for i in 0..20 {
                let p = if i % 2 == 0 {
                    sample_simplex(k, 1, gammaphi::calibration::SamplingMode::Interior, rng_seed(&mut rng)).unwrap().remove(0)
                } else {
                    sample_simplex(k, 1, gammaphi::calibration::SamplingMode::BoundaryFaces, rng_seed(&mut rng)).unwrap().remove(0)
                };
                let grid = common::grid_bayes(&p, &spec, -10.0, 10.0, 0.01);
                let solved = bayes_conditional_risk(&p, &spec, &opts).map_err(|e| e.to_string())?.value;
                worst = worst.max((grid - solved).abs());
                ensure((grid - solved).abs() < 1e-3, || format!("{name} k = {k} p = {:?}: grid {grid} vs {solved}", p.as_slice()))?;
            }
        }
    }
    let spec = LossSpec::logistic(4);
    let p = ProbVector::new(vec![0.5, 0.3, 0.2, 0.0]).unwrap();
    let e = ExtendedScore::new(vec![0, 1, 2], vec![0.0, -0.5, -0.9]).unwrap();
    let limit = extended_risk(&p, &spec, &e).unwrap().total;
    let errs: Vec<f64> = [5.0, 10.0, 20.0, 40.0]
        .iter()
        .map(|&t| (conditional_risk(&p, &spec, &e.at_depth(4, t).unwrap()).unwrap() - limit).abs())
        .collect();
    ensure(errs.windows(2).all(|w| w[1] < w[0]), || format!("reduction errors {errs:?}"))?;
    Ok(format!("80 oracle solves, max diff {worst:.1e}; reduction errors {:.1e} .. {:.1e}", errs[0], errs[3]))
}

fn rng_seed(rng: &mut impl rand::Rng) -> u64 {
    rng.random()
}

fn c9_consistency() -> Outcome {
    let mut worst: f64 = 0.0;
    for seed in 0..20u64 {
        let k = 2 + (seed % 3) as usize;
        let d = DiscreteDistribution::random(k, 1 + (seed % 8) as usize, seed).map_err(|e| e.to_string())?;
        let t = surrogate_descent(&d, &LossSpec::logistic(k), &DescentOptions::default()).map_err(|e| e.to_string())?;
        let regret = t.final_zero_one_regret();
        worst = worst.max(regret);
        ensure(regret < 1e-6, || format!("seed {seed}: 01-regret {regret:e}"))?;
    }
    let d = DiscreteDistribution::single(ProbVector::new(vec![0.6, 0.4, 0.0]).unwrap());
    let run = adversarial_sequence(&d, &LossSpec::counterexample(3), &DEFAULT_T_GRID, &DescentOptions::default(), &SolverOptions::default())
        .map_err(|e| e.to_string())?;
    let sur = run.trajectory.final_surrogate_regret().unwrap();
    let zo = run.trajectory.steps.iter().map(|s| s.zero_one_risk - run.trajectory.bayes_zero_one_risk).fold(f64::INFINITY, f64::min);
    ensure(sur < 1e-2 && zo >= 0.19, || format!("surrogate regret {sur:e}, 01-regret {zo}"))?;
    Ok(format!("logistic max 01-regret {worst:.1e}; adversarial surrogate regret {sur:.1e}, 01-regret {zo:.3}"))
}

fn c10_determinism() -> Outcome {
    let run = |name: &str, seed: u64| {
        certify(&LossSpec::preset(name, 3).unwrap(), &SamplingPlan::stratified(200, seed), &Tolerances::default(), &SolverOptions { seed, ..SolverOptions::default() })
            .unwrap()
            .to_json()
    };
    for (name, seed) in [("logistic", 7), ("sigmoid", 1), ("cex", 0)] {
        ensure(run(name, seed) == run(name, seed), || format!("certify {name} differs between runs"))?;
    }
    let verify = || verify_counterexample(&CexParams::new(0.6, 3), 2e-3, &SolverOptions::default()).unwrap().to_json();
    ensure(verify() == verify(), || "verification report differs between runs".into())?;
    Ok("certify x3 and verify_counterexample byte-identical".into())
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("counterexample reproduction", c1_counterexample),
        ("closed-form derivative anchors", c2_derivative_anchors),
        ("unique minimum of the profile", c3_unique_minimum),
        ("positive certification", c4_positive_certification),
        ("binary closed-form gap", c5_binary_gap),
        ("permutation invariants", c6_permutation_invariants),
        ("gradient correctness", c7_gradients),
        ("Bayes oracle and reduction identity", c8_oracle),
        ("consistency transfer", c9_consistency),
        ("determinism", c10_determinism),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS criterion {:>2} {name}: {detail} [{secs:.1}s]", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL criterion {:>2} {name}: {detail} [{secs:.1}s]", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
