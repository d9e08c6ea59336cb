//! Gamma-Phi losses.
//!
//! A Gamma-Phi loss on `k` classes is built from an outer non-decreasing
//! `γ: [0, ∞) → [0, ∞)` and an inner non-increasing `φ: ℝ → [0, ∞)`:
//!
//! ```text
//! L_y(v) = γ( Σ_{j ≠ y} φ(v_y − v_j) )
//! ```
//!
//! Classes are indexed from 0 throughout the crate.

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};

/// Outer function of a Gamma-Phi loss.
///
/// Implementations must be non-decreasing on `[0, ∞)`. `value` is never
/// called with a negative argument by this crate, but may be called with
/// `+∞` (saturated φ sums), in which case it must return the supremum.
pub trait GammaFn {
    fn value(&self, x: f64) -> f64;
    fn derivative(&self, x: f64) -> f64;

    /// `sup_{x ≥ 0} γ(x)`, when known in closed form.
    fn supremum(&self) -> Option<f64> {
        None
    }
}

/// Inner function of a Gamma-Phi loss. Must be non-increasing.
pub trait PhiFn {
    fn value(&self, x: f64) -> f64;
    fn derivative(&self, x: f64) -> f64;

    /// Limits `(φ(+∞), φ(−∞))`, when known in closed form.
    fn limits(&self) -> Option<(f64, f64)> {
        None
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum GammaSpec {
    /// `log(1 + x)`
    Log1p,
    /// `T·log(1 + x)`, `T > 0`
    ScaledLog1p { temperature: f64 },
    /// `x`
    Identity,
    /// `(x / (1 + x))²`, bounded by 1.
    SquaredRatio,
    /// `1 − (x − 1)²` below 1 and `2(x − 1)² + 1` from 1 on. Strictly
    /// increasing, but its derivative vanishes at `x = 1`.
    Counterexample,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum PhiSpec {
    /// `exp(−scale·x)`, `scale > 0`
    Exp { scale: f64 },
    /// `exp((shift − x) / T)`, `T > 0`
    ShiftedScaledExp { shift: f64, temperature: f64 },
    /// `1 / (1 + exp(x / T))`, `T > 0`
    Sigmoid { temperature: f64 },
}

fn positive_param(name: &str, value: f64) -> Result<()> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} must be finite and > 0, got {value}")))
    }
}

impl GammaSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            GammaSpec::ScaledLog1p { temperature } => positive_param("gamma.T", temperature),
            _ => Ok(()),
        }
    }

    fn check_arg(&self, x: f64) -> Result<()> {
        self.validate()?;
        if x.is_nan() || x < 0.0 {
            return Err(Error::Domain(format!("gamma is defined on [0, inf), got {x}")));
        }
        Ok(())
    }

    /// Checked evaluation of γ.
    pub fn eval(&self, x: f64) -> Result<f64> {
        self.check_arg(x)?;
        Ok(self.value(x))
    }

    /// Checked evaluation of γ'.
    pub fn deriv(&self, x: f64) -> Result<f64> {
        self.check_arg(x)?;
        Ok(GammaFn::derivative(self, x))
    }

    /// Closed-form facts `(strictly increasing, positive derivative, unbounded)`.
    pub fn analytic_facts(&self) -> (bool, bool, bool) {
        match self {
            GammaSpec::Log1p | GammaSpec::ScaledLog1p { .. } | GammaSpec::Identity => {
                (true, true, true)
            }
            GammaSpec::SquaredRatio => (true, false, false),
            GammaSpec::Counterexample => (true, false, true),
        }
    }
}

impl GammaFn for GammaSpec {
    fn value(&self, x: f64) -> f64 {
        if x == f64::INFINITY {
            return self.supremum().unwrap_or(f64::INFINITY);
        }
        match *self {
            GammaSpec::Log1p => x.ln_1p(),
            GammaSpec::ScaledLog1p { temperature } => temperature * x.ln_1p(),
            GammaSpec::Identity => x,
            GammaSpec::SquaredRatio => {
                let r = x / (1.0 + x);
                r * r
            }
            GammaSpec::Counterexample => {
                let d = x - 1.0;
                if x < 1.0 {
                    1.0 - d * d
                } else {
                    2.0 * d * d + 1.0
                }
            }
        }
    }

    fn derivative(&self, x: f64) -> f64 {
        match *self {
            GammaSpec::Log1p => 1.0 / (1.0 + x),
            GammaSpec::ScaledLog1p { temperature } => temperature / (1.0 + x),
            GammaSpec::Identity => 1.0,
            GammaSpec::SquaredRatio => {
                if x == f64::INFINITY {
                    0.0
                } else {
                    2.0 * x / ((1.0 + x) * (1.0 + x) * (1.0 + x))
                }
            }
            GammaSpec::Counterexample => {
                if x < 1.0 {
                    -2.0 * (x - 1.0)
                } else {
                    4.0 * (x - 1.0)
                }
            }
        }
    }

    fn supremum(&self) -> Option<f64> {
        Some(match self {
            GammaSpec::SquaredRatio => 1.0,
            _ => f64::INFINITY,
        })
    }
}

impl PhiSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            PhiSpec::Exp { scale } => positive_param("phi.scale", scale),
            PhiSpec::ShiftedScaledExp { shift, temperature } => {
                if !shift.is_finite() {
                    return Err(Error::Config(format!("phi.shift must be finite, got {shift}")));
                }
                positive_param("phi.T", temperature)
            }
            PhiSpec::Sigmoid { temperature } => positive_param("phi.T", temperature),
        }
    }

    pub fn eval(&self, x: f64) -> Result<f64> {
        self.validate()?;
        Ok(self.value(x))
    }

    pub fn deriv(&self, x: f64) -> Result<f64> {
        self.validate()?;
        Ok(PhiFn::derivative(self, x))
    }

    /// Closed-form facts `(non-increasing with negative slope at 0, inf φ = 0)`.
    pub fn analytic_facts(&self) -> (bool, bool) {
        (true, true)
    }
}

impl PhiFn for PhiSpec {
    fn value(&self, x: f64) -> f64 {
        match *self {
            PhiSpec::Exp { scale } => (-scale * x).exp(),
            PhiSpec::ShiftedScaledExp { shift, temperature } => ((shift - x) / temperature).exp(),
            PhiSpec::Sigmoid { temperature } => logistic_tail(x / temperature),
        }
    }

    fn derivative(&self, x: f64) -> f64 {
        match *self {
            PhiSpec::Exp { scale } => -scale * (-scale * x).exp(),
            PhiSpec::ShiftedScaledExp { shift, temperature } => {
                -((shift - x) / temperature).exp() / temperature
            }
            PhiSpec::Sigmoid { temperature } => {
                let s = logistic_tail(x / temperature);
                -s * (1.0 - s) / temperature
            }
        }
    }

    fn limits(&self) -> Option<(f64, f64)> {
        Some(match self {
            PhiSpec::Exp { .. } | PhiSpec::ShiftedScaledExp { .. } => (0.0, f64::INFINITY),
            PhiSpec::Sigmoid { .. } => (0.0, 1.0),
        })
    }
}

/// `1 / (1 + e^z)` without overflow for large `|z|`.
fn logistic_tail(z: f64) -> f64 {
    if z > 0.0 {
        let e = (-z).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + z.exp())
    }
}

/// A concrete Gamma-Phi loss on `k` classes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossSpec {
    pub gamma: GammaSpec,
    pub phi: PhiSpec,
    pub k: usize,
}

impl LossSpec {
    pub fn new(gamma: GammaSpec, phi: PhiSpec, k: usize) -> Result<Self> {
        let spec = LossSpec { gamma, phi, k };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.k < 2 {
            return Err(Error::Config(format!("k must be at least 2, got {}", self.k)));
        }
        self.gamma.validate()?;
        self.phi.validate()
    }

    pub fn logistic(k: usize) -> Self {
        LossSpec { gamma: GammaSpec::Log1p, phi: PhiSpec::Exp { scale: 1.0 }, k }
    }

    pub fn coherence(temperature: f64, k: usize) -> Self {
        LossSpec {
            gamma: GammaSpec::ScaledLog1p { temperature },
            phi: PhiSpec::ShiftedScaledExp { shift: 1.0, temperature },
            k,
        }
    }

    /// Pairwise-comparison loss with exponential φ (multiclass exponential loss).
    pub fn pairwise_exp(k: usize) -> Self {
        LossSpec { gamma: GammaSpec::Identity, phi: PhiSpec::Exp { scale: 1.0 }, k }
    }

    /// Savage loss. `scale` is the rate of the inner exponential; both 1 and 2
    /// appear in the literature.
    pub fn savage(scale: f64, k: usize) -> Self {
        LossSpec { gamma: GammaSpec::SquaredRatio, phi: PhiSpec::Exp { scale }, k }
    }

    pub fn sigmoid(k: usize) -> Self {
        LossSpec { gamma: GammaSpec::Identity, phi: PhiSpec::Sigmoid { temperature: 1.0 }, k }
    }

    /// Strictly increasing γ with a flat point at 1, exponential φ. Not
    /// classification-calibrated for k ≥ 2.
    pub fn counterexample(k: usize) -> Self {
        LossSpec { gamma: GammaSpec::Counterexample, phi: PhiSpec::Exp { scale: 1.0 }, k }
    }

    pub fn is_counterexample(&self) -> bool {
        self.gamma == GammaSpec::Counterexample && self.phi == PhiSpec::Exp { scale: 1.0 }
    }

    /// Resolves a named preset: `logistic`, `coherence[:T]`, `pairwise-exp`,
    /// `savage[:scale]`, `sigmoid`, `cex`.
    pub fn preset(name: &str, k: usize) -> Result<Self> {
        let (base, arg) = match name.split_once(':') {
            Some((b, a)) => (b, Some(a)),
            None => (name, None),
        };
        let param = |default: f64| -> Result<f64> {
            match arg {
                None => Ok(default),
                Some(a) => a
                    .trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Config(format!("bad preset parameter in {name:?}"))),
            }
        };
        let no_param = || -> Result<()> {
            match arg {
                None => Ok(()),
                Some(_) => Err(Error::Config(format!("preset {base:?} takes no parameter"))),
            }
        };
        let spec = match base {
            "logistic" => no_param().map(|_| LossSpec::logistic(k))?,
            "coherence" => LossSpec::coherence(param(1.0)?, k),
            "pairwise-exp" => no_param().map(|_| LossSpec::pairwise_exp(k))?,
            "savage" => LossSpec::savage(param(1.0)?, k),
            "sigmoid" => no_param().map(|_| LossSpec::sigmoid(k))?,
            "cex" | "counterexample" => no_param().map(|_| LossSpec::counterexample(k))?,
            other => return Err(Error::Config(format!("unknown loss preset {other:?}"))),
        };
        spec.validate()?;
        Ok(spec)
    }

    fn check_scores(&self, v: &[f64]) -> Result<()> {
        self.validate()?;
        check_len(self.k, v.len())?;
        if let Some(bad) = v.iter().find(|x| !x.is_finite()) {
            return Err(Error::Domain(format!("scores must be finite, got {bad}")));
        }
        Ok(())
    }

    /// `Σ_{j ≠ y} φ(v_y − v_j)` for every `y`.
    pub(crate) fn phi_sums(&self, v: &[f64]) -> Vec<f64> {
        (0..v.len())
            .map(|y| {
                v.iter()
                    .enumerate()
                    .filter(|&(j, _)| j != y)
                    .map(|(_, &vj)| self.phi.value(v[y] - vj))
                    .sum()
            })
            .collect()
    }

    /// The loss vector `(L_0(v), …, L_{k−1}(v))`.
    pub fn components(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.check_scores(v)?;
        Ok(self.phi_sums(v).into_iter().map(|a| self.gamma.value(a)).collect())
    }

    /// Row `y`, column `j` holds `∂L_y/∂v_j`.
    pub fn jacobian(&self, v: &[f64]) -> Result<Vec<Vec<f64>>> {
        self.check_scores(v)?;
        let sums = self.phi_sums(v);
        let k = v.len();
        let mut jac = vec![vec![0.0; k]; k];
        for y in 0..k {
            let outer = GammaFn::derivative(&self.gamma, sums[y]);
            let mut diag = 0.0;
            for j in (0..k).filter(|&j| j != y) {
                let d = PhiFn::derivative(&self.phi, v[y] - v[j]);
                diag += d;
                jac[y][j] = -outer * d;
            }
            jac[y][y] = outer * diag;
        }
        Ok(jac)
    }

    /// Serializes to the `key = value` config format read by [`LossSpec::from_config`].
    pub fn to_config(&self) -> String {
        let mut out = format!("k = {}\n", self.k);
        match self.gamma {
            GammaSpec::Log1p => out.push_str("gamma.family = log1p\n"),
            GammaSpec::ScaledLog1p { temperature } => {
                out.push_str(&format!("gamma.family = scaled_log1p\ngamma.T = {temperature}\n"))
            }
            GammaSpec::Identity => out.push_str("gamma.family = identity\n"),
            GammaSpec::SquaredRatio => out.push_str("gamma.family = squared_ratio\n"),
            GammaSpec::Counterexample => out.push_str("gamma.family = counterexample\n"),
        }
        match self.phi {
            PhiSpec::Exp { scale } => {
                out.push_str(&format!("phi.family = exp\nphi.scale = {scale}\n"))
            }
            PhiSpec::ShiftedScaledExp { shift, temperature } => out.push_str(&format!(
                "phi.family = shifted_scaled_exp\nphi.shift = {shift}\nphi.T = {temperature}\n"
            )),
            PhiSpec::Sigmoid { temperature } => {
                out.push_str(&format!("phi.family = sigmoid\nphi.T = {temperature}\n"))
            }
        }
        out
    }

    /// Parses the `key = value` loss config format.
    ///
    /// Recognized keys: `k`, `gamma.family`, `gamma.T`, `phi.family`,
    /// `phi.scale`, `phi.shift`, `phi.T`. Blank lines and `#` comments are
    /// ignored. `k` may be omitted when `default_k` is given.
    pub fn from_config(text: &str, default_k: Option<usize>) -> Result<Self> {
        let mut k = default_k;
        let mut gamma_family = None;
        let mut phi_family = None;
        let mut gamma_t = None;
        let mut phi_scale = None;
        let mut phi_shift = None;
        let mut phi_t = None;

        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected key = value", lineno + 1))
            })?;
            let (key, value) = (key.trim(), value.trim());
            let num = || -> Result<f64> {
                value.parse::<f64>().map_err(|_| {
                    Error::Config(format!("line {}: {key} needs a number", lineno + 1))
                })
            };
            match key {
                "k" => {
                    k = Some(value.parse::<usize>().map_err(|_| {
                        Error::Config(format!("line {}: k needs an integer", lineno + 1))
                    })?)
                }
                "gamma.family" => gamma_family = Some(value.to_string()),
                "phi.family" => phi_family = Some(value.to_string()),
                "gamma.T" => gamma_t = Some(num()?),
                "phi.scale" => phi_scale = Some(num()?),
                "phi.shift" => phi_shift = Some(num()?),
                "phi.T" => phi_t = Some(num()?),
                other => {
                    return Err(Error::Config(format!("line {}: unknown key {other:?}", lineno + 1)))
                }
            }
        }

        let k = k.ok_or_else(|| Error::Config("missing k".into()))?;
        let gamma = match gamma_family.as_deref() {
            Some("log1p") => GammaSpec::Log1p,
            Some("scaled_log1p") => GammaSpec::ScaledLog1p { temperature: gamma_t.unwrap_or(1.0) },
            Some("identity") => GammaSpec::Identity,
            Some("squared_ratio") => GammaSpec::SquaredRatio,
            Some("counterexample") => GammaSpec::Counterexample,
            Some(other) => return Err(Error::Config(format!("unknown gamma.family {other:?}"))),
            None => return Err(Error::Config("missing gamma.family".into())),
        };
        let phi = match phi_family.as_deref() {
            Some("exp") => PhiSpec::Exp { scale: phi_scale.unwrap_or(1.0) },
            Some("shifted_scaled_exp") => PhiSpec::ShiftedScaledExp {
                shift: phi_shift.unwrap_or(1.0),
                temperature: phi_t.unwrap_or(1.0),
            },
            Some("sigmoid") => PhiSpec::Sigmoid { temperature: phi_t.unwrap_or(1.0) },
            Some(other) => return Err(Error::Config(format!("unknown phi.family {other:?}"))),
            None => return Err(Error::Config("missing phi.family".into())),
        };
        LossSpec::new(gamma, phi, k)
    }
}
