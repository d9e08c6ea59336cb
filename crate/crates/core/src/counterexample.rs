//! The counterexample loss: γ strictly increasing but flat at 1, φ(x) = e^{−x}.
//!
//! For `p = (r, 1 − r, 0, …, 0)` the Bayes risk reduces to the minimum of the
//! one-dimensional profile
//!
//! ```text
//! F(x) = r·γ(φ(x)) + (1 − r)·γ(φ(−x))
//! ```
//!
//! which for `r ∈ [1/3, 2/3]` is attained only at `x = 0`. The sequence
//! `w^t = (0, 1/t, −t, …, −t)` keeps class 1 on top while its risk tends to
//! `F(0) = 1`, the Bayes risk, so the loss is not calibrated.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loss::{GammaFn, LossSpec, PhiFn};
use crate::risk::{bayes_conditional_risk, conditional_risk, ExtendedScore, SolverOptions};
use crate::vectors::{ProbVector, ScoreVector};
use crate::{ARTIFACT_VERSION, REPORT_SCHEMA_VERSION};

/// Range of `r` for which the witness construction applies: `(1/2, 2/3]`.
pub const WITNESS_RANGE: (f64, f64) = (0.5, 2.0 / 3.0);
/// Range of `r` on which `F` has its unique minimizer at 0: `[1/3, 2/3]`.
pub const UNIQUE_MIN_RANGE: (f64, f64) = (1.0 / 3.0, 2.0 / 3.0);

pub const DEFAULT_T_GRID: [f64; 8] = [1.0, 2.0, 5.0, 10.0, 50.0, 100.0, 500.0, 1000.0];

/// `F(x) = r γ(e^{−x}) + (1 − r) γ(e^{x})`.
pub fn f_profile(r: f64, x: f64) -> f64 {
    let spec = LossSpec::counterexample(2);
    r * spec.gamma.value(spec.phi.value(x)) + (1.0 - r) * spec.gamma.value(spec.phi.value(-x))
}

/// `F'` on `x > 0`.
pub fn g_plus(r: f64, x: f64) -> f64 {
    let (em, ep) = ((-x).exp(), x.exp());
    2.0 * r * (em - 1.0) * em + 4.0 * (1.0 - r) * (ep - 1.0) * ep
}

/// `F'` on `x < 0`.
pub fn g_minus(r: f64, x: f64) -> f64 {
    let (em, ep) = ((-x).exp(), x.exp());
    -4.0 * r * (em - 1.0) * em - 2.0 * (1.0 - r) * (ep - 1.0) * ep
}

/// `F'(x)`, piecewise in closed form.
pub fn f_derivative(r: f64, x: f64) -> f64 {
    if x > 0.0 {
        g_plus(r, x)
    } else if x < 0.0 {
        g_minus(r, x)
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Plus,
    Minus,
}

/// The nonzero root of `G₊` on `x > 0` (exists iff `r > 2/3`) or of `G₋` on
/// `x < 0` (exists iff `r < 1/3`).
pub fn g_zero(r: f64, side: Side) -> Option<f64> {
    let x = match side {
        Side::Plus => (r / (2.0 * (1.0 - r))).ln() / 3.0,
        Side::Minus => (2.0 * r / (1.0 - r)).ln() / 3.0,
    };
    let on_side = match side {
        Side::Plus => x > 0.0,
        Side::Minus => x < 0.0,
    };
    on_side.then_some(x)
}

/// `(0, 1/t, −t, …, −t)`: class 1 holds the maximum for every `t > 0`.
pub fn divergent_witness(k: usize, t: f64) -> Result<ScoreVector> {
    if k < 2 {
        return Err(Error::Config(format!("k must be at least 2, got {k}")));
    }
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::Config(format!("t must be finite and > 0, got {t}")));
    }
    let mut v = vec![-t; k];
    v[0] = 0.0;
    v[1] = 1.0 / t;
    ScoreVector::new(v)
}

/// `(r, 1 − r, 0, …, 0)`.
pub fn face_point(r: f64, k: usize) -> Result<ProbVector> {
    if !(r > 0.0 && r < 1.0) {
        return Err(Error::Config(format!("r must lie in (0, 1), got {r}")));
    }
    if k < 2 {
        return Err(Error::Config(format!("k must be at least 2, got {k}")));
    }
    let mut w = vec![0.0; k];
    w[0] = r;
    w[1] = 1.0 - r;
    ProbVector::new(w)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CexParams {
    pub r: f64,
    pub k: usize,
    pub t_grid: Vec<f64>,
}

impl CexParams {
    pub fn new(r: f64, k: usize) -> Self {
        CexParams { r, k, t_grid: DEFAULT_T_GRID.to_vec() }
    }

    pub fn validate(&self) -> Result<()> {
        face_point(self.r, self.k)?;
        if self.t_grid.is_empty() {
            return Err(Error::Config("t grid is empty".into()));
        }
        if self.t_grid.iter().any(|t| !(*t > 0.0 && t.is_finite())) {
            return Err(Error::Config("t grid entries must be finite and > 0".into()));
        }
        if self.t_grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config("t grid must be strictly increasing".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WitnessPoint {
    pub t: f64,
    pub risk: f64,
    /// `C_p(w^t) − C_p^*`
    pub gap: f64,
    pub argmax: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub schema_version: u32,
    pub artifact_version: String,
    pub params: CexParams,
    pub tol: f64,
    pub solver: SolverOptions,
    pub p: ProbVector,
    pub witness_path: Vec<WitnessPoint>,
    pub bayes_risk: f64,
    pub bayes_witness: ExtendedScore,
    pub profile_argmin: f64,
    pub checks: Vec<Check>,
    pub passed: bool,
    pub notes: Vec<String>,
}

impl VerificationReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report is serializable")
    }

    pub fn failed_checks(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

const PROFILE_GRID: (f64, f64, usize) = (-5.0, 5.0, 2001);

fn profile_grid() -> impl Iterator<Item = f64> {
    let (lo, hi, n) = PROFILE_GRID;
    let mid = (n - 1) / 2;
    // symmetric construction so the centre node is exactly 0
    (0..n).map(move |i| {
        if i == mid {
            0.0
        } else {
            lo + (hi - lo) * i as f64 / (n - 1) as f64
        }
    })
}

/// `(x, F(x), F'(x))` rows on `[lo, hi]` for plotting.
pub fn profile_table(r: f64, lo: f64, hi: f64, points: usize) -> Vec<(f64, f64, f64)> {
    let n = points.max(2);
    (0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .map(|x| (x, f_profile(r, x), f_derivative(r, x)))
        .collect()
}

/// Reproduces the non-calibration argument numerically at `p = (r, 1 − r, 0, …)`.
pub fn verify_counterexample(params: &CexParams, tol: f64, opts: &SolverOptions) -> Result<VerificationReport> {
    params.validate()?;
    if !(tol > 0.0) {
        return Err(Error::Config(format!("tolerance must be > 0, got {tol}")));
    }
    let (r, k) = (params.r, params.k);
    let spec = LossSpec::counterexample(k);
    let p = face_point(r, k)?;
    let bayes = bayes_conditional_risk(&p, &spec, opts)?;

    let witness_path = params
        .t_grid
        .iter()
        .map(|&t| {
            let w = divergent_witness(k, t)?;
            let risk = conditional_risk(&p, &spec, &w)?;
            Ok(WitnessPoint { t, risk, gap: risk - bayes.value, argmax: w.argmax() })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut checks = Vec::new();
    let mut notes = Vec::new();

    let in_range = r > WITNESS_RANGE.0 && r <= WITNESS_RANGE.1;
    checks.push(Check {
        name: "r_in_witness_range".into(),
        passed: in_range,
        detail: format!("r = {r}, required in (1/2, 2/3]"),
    });

    checks.push(Check {
        name: "zero_mass_class".into(),
        passed: k >= 3,
        detail: format!("k = {k}; p needs a class with zero mass, which requires k >= 3"),
    });
    if k == 2 {
        notes.push(
            "k = 2: p has no zero-mass class, so the face mechanism is not exercised. The binary \
             profile still has its minimum at the tie x = 0, so the witness gap also shrinks here."
                .into(),
        );
    }

    let decreasing = witness_path.windows(2).all(|w| w[1].gap <= w[0].gap);
    checks.push(Check {
        name: "gap_decreasing".into(),
        passed: decreasing,
        detail: format!(
            "gaps along t: {:?}",
            witness_path.iter().map(|w| w.gap).collect::<Vec<_>>()
        ),
    });

    let last = witness_path.last().expect("t grid is nonempty");
    checks.push(Check {
        name: "gap_below_tolerance".into(),
        passed: last.gap.abs() < tol,
        detail: format!("|C_p(w^t) - C_p*| = {:e} at t = {}, tolerance {tol:e}", last.gap.abs(), last.t),
    });

    let argmax_ok = witness_path.iter().all(|w| w.argmax == 1) && p.argmax() == 0;
    checks.push(Check {
        name: "argmax_mismatch".into(),
        passed: argmax_ok,
        detail: format!(
            "argmax p = {}, argmax w^t = {:?}",
            p.argmax(),
            witness_path.iter().map(|w| w.argmax).collect::<Vec<_>>()
        ),
    });

    let f0 = f_profile(r, 0.0);
    let (argmin, fmin) = profile_grid()
        .map(|x| (x, f_profile(r, x)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .expect("profile grid is nonempty");
    let unique = profile_grid().filter(|&x| x != 0.0).all(|x| f_profile(r, x) > f0);
    checks.push(Check {
        name: "profile_unique_min_at_zero".into(),
        passed: argmin == 0.0 && unique,
        detail: format!("grid argmin x = {argmin}, F = {fmin}; F(0) = {f0}"),
    });
    if r > UNIQUE_MIN_RANGE.1 {
        if let Some(z) = g_zero(r, Side::Plus) {
            notes.push(format!("r > 2/3: F' vanishes at x = {z:.6}, moving the minimum off 0"));
        }
    }

    let passed = checks.iter().all(|c| c.passed);
    Ok(VerificationReport {
        schema_version: REPORT_SCHEMA_VERSION,
        artifact_version: ARTIFACT_VERSION.to_string(),
        params: params.clone(),
        tol,
        solver: *opts,
        p,
        witness_path,
        bayes_risk: bayes.value,
        bayes_witness: bayes.witness,
        profile_argmin: argmin,
        checks,
        passed,
        notes,
    })
}
