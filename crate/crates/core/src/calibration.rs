//! Numerical classification-calibration certificate.
//!
//! A loss is calibrated when, for every `p` and every class `y` with
//! `p_y < max p`, pinning the score maximum at `y` strictly raises the best
//! achievable conditional risk. [`certify`] samples the simplex (including
//! its proper faces, where violations hide), measures that gap at every
//! eligible `(p, y)` and condenses the result into a [`Verdict`].

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::loss::LossSpec;
use crate::risk::{bayes_conditional_risk, constrained_bayes_risk, BayesSolution, SolverOptions};
use crate::vectors::ProbVector;
use crate::{ARTIFACT_VERSION, REPORT_SCHEMA_VERSION};

const INTERIOR_FLOOR: f64 = 1e-6;

/// Ratios `r` of the probe points `(r, 1 − r, 0, …, 0)` always included in a certificate.
pub const PROBE_RATIOS: [f64; 4] = [0.51, 0.55, 0.6, 2.0 / 3.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingMode {
    /// Uniform on the simplex, every entry at least 1e-6.
    Interior,
    /// Uniform on faces with `m` nonzero entries, `m = 2, …, k − 1`
    /// (vertices when `k = 2`).
    BoundaryFaces,
    /// Interior points plus at least a quarter of face points.
    Stratified,
}

impl std::str::FromStr for SamplingMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "interior" => Ok(SamplingMode::Interior),
            "boundary" | "boundary_faces" => Ok(SamplingMode::BoundaryFaces),
            "stratified" => Ok(SamplingMode::Stratified),
            other => Err(Error::Config(format!("unknown sampling mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplingPlan {
    pub mode: SamplingMode,
    pub n: usize,
    pub seed: u64,
}

impl SamplingPlan {
    pub fn stratified(n: usize, seed: u64) -> Self {
        SamplingPlan { mode: SamplingMode::Stratified, n, seed }
    }
}

fn exp_weights<R: Rng>(rng: &mut R, m: usize) -> Vec<f64> {
    (0..m).map(|_| rng.sample::<f64, _>(Exp1)).collect()
}

fn interior_point<R: Rng>(rng: &mut R, k: usize) -> ProbVector {
    loop {
        let p = ProbVector::normalized(exp_weights(rng, k)).expect("exponential draws are positive");
        if p.as_slice().iter().all(|&w| w >= INTERIOR_FLOOR) {
            return p;
        }
    }
}

fn face_point<R: Rng>(rng: &mut R, k: usize, support: usize) -> ProbVector {
    loop {
        let idx = index::sample(rng, k, support);
        let w = exp_weights(rng, support);
        let mut full = vec![0.0; k];
        for (i, wi) in idx.iter().zip(w) {
            full[i] = wi;
        }
        if let Ok(p) = ProbVector::normalized(full) {
            return p;
        }
    }
}

fn face_sizes(k: usize) -> Vec<usize> {
    if k == 2 {
        vec![1]
    } else {
        (2..k).collect()
    }
}

/// Seeded sample of `n` points of the `k`-simplex.
pub fn sample_simplex(k: usize, n: usize, mode: SamplingMode, seed: u64) -> Result<Vec<ProbVector>> {
    if k < 2 {
        return Err(Error::Config(format!("k must be at least 2, got {k}")));
    }
    if n == 0 {
        return Err(Error::Config("sample size must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sizes = face_sizes(k);
    let faces = |rng: &mut ChaCha8Rng, count: usize| -> Vec<ProbVector> {
        (0..count).map(|i| face_point(rng, k, sizes[i % sizes.len()])).collect()
    };
    Ok(match mode {
        SamplingMode::Interior => (0..n).map(|_| interior_point(&mut rng, k)).collect(),
        SamplingMode::BoundaryFaces => faces(&mut rng, n),
        SamplingMode::Stratified => {
            let on_faces = n.div_ceil(4);
            let mut points = faces(&mut rng, on_faces);
            points.extend((on_faces..n).map(|_| interior_point(&mut rng, k)));
            points
        }
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    /// Only classes with `p_y < max p − margin` are tested.
    pub margin: f64,
    /// Any gap below this is reported as a violation.
    pub violation: f64,
    /// All gaps above this count as evidence of calibration.
    pub evidence: f64,
    /// Fraction of failed solves above which the verdict is inconclusive.
    pub max_failure_fraction: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { margin: 0.05, violation: 1e-4, evidence: 1e-3, max_failure_fraction: 0.05 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapRecord {
    pub p: ProbVector,
    pub y: usize,
    pub bayes: f64,
    pub constrained: f64,
    pub gap: f64,
}

fn eligible(p: &ProbVector, y: usize, margin: f64) -> bool {
    p[y] < p.max() - margin
}

fn gap_record(p: &ProbVector, y: usize, bayes: &BayesSolution, constrained: &BayesSolution) -> GapRecord {
    // the constrained witness is also a feasible point of the unconstrained problem
    let bayes = bayes.value.min(constrained.value);
    GapRecord { p: p.clone(), y, bayes, constrained: constrained.value, gap: constrained.value - bayes }
}

/// Gap between the best risk with the argmax pinned at `y` and the
/// unconstrained Bayes risk. `Ok(None)` when `y` is within `margin` of the
/// most probable class (not a testable pair).
pub fn calibration_gap(
    p: &ProbVector,
    spec: &LossSpec,
    y: usize,
    margin: f64,
    opts: &SolverOptions,
) -> Result<Option<GapRecord>> {
    check_len(spec.k, p.len())?;
    if y >= spec.k {
        return Err(Error::Validation(format!("class {y} out of range for k = {}", spec.k)));
    }
    if !eligible(p, y, margin) {
        return Ok(None);
    }
    let bayes = bayes_conditional_risk(p, spec, opts)?;
    let constrained = constrained_bayes_risk(p, spec, y, opts)?;
    Ok(Some(gap_record(p, y, &bayes, &constrained)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    CalibratedEvidence,
    ViolationFound,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Probe {
    pub p: ProbVector,
    pub y: usize,
    /// False when the probe is inside the margin and was not evaluated.
    pub evaluated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub schema_version: u32,
    pub artifact_version: String,
    pub spec: LossSpec,
    pub k: usize,
    pub seed: u64,
    pub sampling: SamplingPlan,
    pub tolerances: Tolerances,
    pub solver: SolverOptions,
    pub probes: Vec<Probe>,
    pub records: Vec<GapRecord>,
    pub min_gap: Option<f64>,
    pub verdict: Verdict,
    pub witness: Option<GapRecord>,
    pub solver_failures: usize,
    pub diagnostics: Vec<String>,
}

impl CalibrationReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report is serializable")
    }
}

fn probe_points(k: usize) -> Vec<ProbVector> {
    PROBE_RATIOS
        .iter()
        .map(|&r| {
            let mut w = vec![0.0; k];
            w[0] = r;
            w[1] = 1.0 - r;
            ProbVector::new(w).expect("probe is on the simplex")
        })
        .collect()
}

enum PointOutcome {
    Records(Vec<GapRecord>),
    Failed { pairs: usize, message: String },
}

fn evaluate_point(p: &ProbVector, spec: &LossSpec, ys: &[usize], opts: &SolverOptions) -> Vec<PointOutcome> {
    let bayes = match bayes_conditional_risk(p, spec, opts) {
        Ok(b) => b,
        Err(e) => {
            return vec![PointOutcome::Failed {
                pairs: ys.len(),
                message: format!("p = {:?}: {e}", p.as_slice()),
            }]
        }
    };
    ys.iter()
        .map(|&y| match constrained_bayes_risk(p, spec, y, opts) {
            Ok(c) => PointOutcome::Records(vec![gap_record(p, y, &bayes, &c)]),
            Err(e) => PointOutcome::Failed {
                pairs: 1,
                message: format!("p = {:?}, y = {y}: {e}", p.as_slice()),
            },
        })
        .collect()
}

/// Sweeps the probe points and a sampled set of `p`, evaluating the
/// calibration gap at every eligible `(p, y)`.
pub fn certify(
    spec: &LossSpec,
    plan: &SamplingPlan,
    tolerances: &Tolerances,
    opts: &SolverOptions,
) -> Result<CalibrationReport> {
    spec.validate()?;
    let k = spec.k;
    let samples = sample_simplex(k, plan.n, plan.mode, plan.seed)?;

    let probes: Vec<Probe> = probe_points(k)
        .into_iter()
        .map(|p| {
            let evaluated = eligible(&p, 1, tolerances.margin);
            Probe { p, y: 1, evaluated }
        })
        .collect();

    let mut jobs: Vec<(ProbVector, Vec<usize>)> = probes
        .iter()
        .filter(|pr| pr.evaluated)
        .map(|pr| (pr.p.clone(), vec![pr.y]))
        .collect();
    for p in samples {
        let ys: Vec<usize> = (0..k).filter(|&y| eligible(&p, y, tolerances.margin)).collect();
        if !ys.is_empty() {
            jobs.push((p, ys));
        }
    }

    let outcomes: Vec<Vec<PointOutcome>> =
        jobs.par_iter().map(|(p, ys)| evaluate_point(p, spec, ys, opts)).collect();

    let mut records = Vec::new();
    let mut diagnostics = Vec::new();
    let mut failures = 0;
    for outcome in outcomes.into_iter().flatten() {
        match outcome {
            PointOutcome::Records(r) => records.extend(r),
            PointOutcome::Failed { pairs, message } => {
                failures += pairs;
                diagnostics.push(message);
            }
        }
    }

    let witness = records.iter().min_by(|a, b| a.gap.total_cmp(&b.gap)).cloned();
    let min_gap = witness.as_ref().map(|w| w.gap);
    let attempted = records.len() + failures;
    let failure_fraction = if attempted == 0 { 0.0 } else { failures as f64 / attempted as f64 };

    let verdict = match min_gap {
        Some(g) if g < tolerances.violation => Verdict::ViolationFound,
        _ if failure_fraction > tolerances.max_failure_fraction => {
            diagnostics.push(format!(
                "{failures} of {attempted} solves failed, above the {} limit",
                tolerances.max_failure_fraction
            ));
            Verdict::Inconclusive
        }
        Some(g) if g > tolerances.evidence => Verdict::CalibratedEvidence,
        Some(_) => Verdict::Inconclusive,
        None => {
            diagnostics.push("no eligible (p, y) pairs were evaluated".into());
            Verdict::Inconclusive
        }
    };

    Ok(CalibrationReport {
        schema_version: REPORT_SCHEMA_VERSION,
        artifact_version: ARTIFACT_VERSION.to_string(),
        spec: *spec,
        k,
        seed: plan.seed,
        sampling: *plan,
        tolerances: *tolerances,
        solver: *opts,
        probes,
        records,
        min_gap,
        verdict,
        witness,
        solver_failures: failures,
        diagnostics,
    })
}
