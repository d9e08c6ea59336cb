//! Conditional risks, their gradients, limiting risks of score
//! configurations with coordinates sent to −∞, and conditional Bayes risk
//! solvers (unconstrained and with the argmax pinned to a given class).
//!
//! Bayes risks of Gamma-Phi losses are frequently approached only along
//! divergent score sequences. The solvers therefore search over
//! [`ExtendedScore`] configurations: a finite block `α` on an active set of
//! classes, every other coordinate at a common `−T` with `T → ∞`. The
//! limiting risk of such a sequence decomposes as `S·C_q(α) + A` where `S`
//! is the active mass, `q` the renormalized active weights and `A` the
//! contribution of the inactive classes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::loss::{GammaFn, LossSpec, PhiFn};
use crate::optim::{bfgs, nelder_mead, LocalMin};
use crate::vectors::{ProbVector, ScoreVector};

/// `C_p(v) = Σ_y p_y L_y(v)`.
pub fn conditional_risk(p: &ProbVector, spec: &LossSpec, v: &ScoreVector) -> Result<f64> {
    check_len(spec.k, p.len())?;
    let losses = spec.components(v.as_slice())?;
    Ok(weighted_sum(p.as_slice(), &losses))
}

/// `Σ w_y L_y` with the convention `0·∞ = 0`.
fn weighted_sum(w: &[f64], losses: &[f64]) -> f64 {
    w.iter().zip(losses).filter(|(w, _)| **w > 0.0).map(|(w, l)| w * l).sum()
}

/// Gradient of `C_p` with respect to the scores.
///
/// With `Γ_y(v) = γ'(Σ_{j≠y} φ(v_y − v_j))`, component `y` equals
/// `p_y Γ_y Σ_{j≠y} φ'(v_y − v_j) − Σ_{j≠y} p_j Γ_j φ'(v_j − v_y)`.
pub fn conditional_risk_gradient(
    p: &ProbVector,
    spec: &LossSpec,
    v: &ScoreVector,
) -> Result<Vec<f64>> {
    check_len(spec.k, p.len())?;
    spec.components(v.as_slice())?;
    Ok(weighted_value_and_gradient(spec, p.as_slice(), v.as_slice(), 0.0).1)
}

/// Value and gradient of `Σ_y w_y γ(offset + Σ_{j≠y} φ(v_y − v_j))`.
fn weighted_value_and_gradient(spec: &LossSpec, w: &[f64], v: &[f64], offset: f64) -> (f64, Vec<f64>) {
    let n = v.len();
    let mut grad = vec![0.0; n];
    let mut value = 0.0;
    for y in 0..n {
        if w[y] <= 0.0 {
            continue;
        }
        let mut arg = offset;
        for j in (0..n).filter(|&j| j != y) {
            arg += spec.phi.value(v[y] - v[j]);
        }
        value += w[y] * spec.gamma.value(arg);
        let outer = w[y] * GammaFn::derivative(&spec.gamma, arg);
        for j in (0..n).filter(|&j| j != y) {
            let d = outer * PhiFn::derivative(&spec.phi, v[y] - v[j]);
            grad[y] += d;
            grad[j] -= d;
        }
    }
    (value, grad)
}

/// A finite block `alpha` on the classes `active` (in that order); every
/// other coordinate is at a common `−T`, `T → ∞`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtendedScore {
    pub active: Vec<usize>,
    pub alpha: Vec<f64>,
}

impl ExtendedScore {
    pub fn new(active: Vec<usize>, alpha: Vec<f64>) -> Result<Self> {
        let e = ExtendedScore { active, alpha };
        e.validate(None)?;
        Ok(e)
    }

    /// All classes active.
    pub fn finite(v: &ScoreVector) -> Self {
        ExtendedScore { active: (0..v.len()).collect(), alpha: v.as_slice().to_vec() }
    }

    fn validate(&self, k: Option<usize>) -> Result<()> {
        if self.active.is_empty() {
            return Err(Error::Validation("active set is empty".into()));
        }
        check_len(self.active.len(), self.alpha.len())?;
        let bound = k.unwrap_or(usize::MAX);
        let mut seen = std::collections::BTreeSet::new();
        for &a in &self.active {
            if a >= bound || !seen.insert(a) {
                return Err(Error::Validation(format!("bad active set {:?}", self.active)));
            }
        }
        if let Some(x) = self.alpha.iter().find(|x| !x.is_finite()) {
            return Err(Error::Domain(format!("alpha must be finite, got {x}")));
        }
        Ok(())
    }

    /// Shifted so that `max(alpha) = 0`.
    pub fn canonical(&self) -> Self {
        let top = self.alpha.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        ExtendedScore {
            active: self.active.clone(),
            alpha: self.alpha.iter().map(|a| a - top).collect(),
        }
    }

    /// The member of the divergent sequence at depth `t`: `alpha` on the
    /// active classes, `−t` elsewhere.
    pub fn at_depth(&self, k: usize, t: f64) -> Result<ScoreVector> {
        self.validate(Some(k))?;
        let mut v = vec![-t; k];
        for (&a, &x) in self.active.iter().zip(&self.alpha) {
            v[a] = x;
        }
        ScoreVector::new(v)
    }
}

/// Limiting risk `total = S·C_q(α) + A` of an [`ExtendedScore`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskDecomposition {
    /// `S`, total mass of the active classes.
    pub mass: f64,
    /// Active weights renormalized (uniform when `S = 0`).
    pub q: Vec<f64>,
    /// `C_q(α)`.
    pub reduced_risk: f64,
    /// `A`, limiting contribution of inactive classes; may be `+∞`.
    pub residual: f64,
    /// May be `+∞`. Serialized as `null` in that case.
    pub total: f64,
}

/// Exact limit of `C_p(v^T)` as `T → ∞` for `v^T = e.at_depth(k, T)`.
pub fn extended_risk(p: &ProbVector, spec: &LossSpec, e: &ExtendedScore) -> Result<RiskDecomposition> {
    spec.validate()?;
    check_len(spec.k, p.len())?;
    e.validate(Some(spec.k))?;
    let sub = Subproblem::new(p, spec, &e.active);
    let active_part = sub.active_value(&e.alpha);
    let mass = sub.mass;
    let (q, reduced_risk) = if mass > 0.0 {
        (sub.weights.iter().map(|w| w / mass).collect::<Vec<_>>(), active_part / mass)
    } else {
        let l = e.active.len();
        let q = vec![1.0 / l as f64; l];
        let (value, _) = weighted_value_and_gradient(spec, &q, &e.alpha, sub.offset);
        (q, value)
    };
    Ok(RiskDecomposition {
        mass,
        q,
        reduced_risk,
        residual: sub.residual,
        total: active_part + sub.residual,
    })
}

/// The restriction of `C_p` to configurations with a fixed active set.
struct Subproblem<'a> {
    spec: &'a LossSpec,
    /// `p` on the active classes, unnormalized.
    weights: Vec<f64>,
    mass: f64,
    /// `(k − ℓ)·φ(+∞)`, added to every active γ argument.
    offset: f64,
    residual: f64,
}

impl<'a> Subproblem<'a> {
    fn new(p: &ProbVector, spec: &'a LossSpec, active: &[usize]) -> Self {
        let k = spec.k;
        let l = active.len();
        let (phi_pos, phi_neg) = spec
            .phi
            .limits()
            .expect("shipped phi families have closed-form limits");
        let weights: Vec<f64> = active.iter().map(|&a| p[a]).collect();
        let mass = weights.iter().sum();
        let offset = if l < k { (k - l) as f64 * phi_pos } else { 0.0 };

        // inactive classes sit at a common depth: φ(−∞) against each active
        // class, φ(0) against the other inactive ones
        let mut residual = 0.0;
        if l < k {
            let arg = l as f64 * phi_neg + (k - l - 1) as f64 * spec.phi.value(0.0);
            let inactive_loss = spec.gamma.value(arg);
            for y in (0..k).filter(|y| !active.contains(y)) {
                if p[y] > 0.0 {
                    residual += p[y] * inactive_loss;
                }
            }
        }
        Subproblem { spec, weights, mass, offset, residual }
    }

    fn active_value(&self, alpha: &[f64]) -> f64 {
        weighted_value_and_gradient(self.spec, &self.weights, alpha, self.offset).0
    }

    fn value_and_gradient(&self, alpha: &[f64]) -> (f64, Vec<f64>) {
        let (v, g) = weighted_value_and_gradient(self.spec, &self.weights, alpha, self.offset);
        (v + self.residual, g)
    }
}

/// Options for the multi-start inner minimization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub seed: u64,
    pub random_starts: usize,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions { seed: 0, random_starts: 3, max_iter: 5000, tol: 1e-10 }
    }
}

impl SolverOptions {
    fn validate(&self) -> Result<()> {
        if self.max_iter == 0 || !(self.tol > 0.0) {
            return Err(Error::Config(format!("invalid solver options {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BayesSolution {
    pub value: f64,
    /// Canonical (`max(alpha) = 0`) minimizing configuration.
    pub witness: ExtendedScore,
    pub converged: bool,
}

/// Slack floor for the constrained parameterization `α_j = −max(e^{u_j}, floor)`.
const SLACK_FLOOR: f64 = 1e-12;
const RANDOM_START_DEPTH: f64 = 6.0;

/// Starting points in α-space for the free coordinates of a block of size
/// `dim + 1` whose first coordinate is pinned at 0: zeros, a descending
/// ramp, and seeded uniform draws from `[−6, 0]`.
fn starting_points(dim: usize, opts: &SolverOptions, salt: u64) -> Vec<Vec<f64>> {
    let mut starts = vec![vec![0.0; dim], (1..=dim).map(|i| -(i as f64)).collect()];
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    for _ in 0..opts.random_starts {
        starts.push((0..dim).map(|_| -rng.random_range(0.0..RANDOM_START_DEPTH)).collect());
    }
    starts
}

/// Local search from one start: BFGS, then Nelder-Mead if BFGS did not settle.
fn local_search<F, G>(grad_objective: F, objective: G, x0: &[f64], opts: &SolverOptions) -> LocalMin
where
    F: Fn(&[f64]) -> (f64, Vec<f64>),
    G: Fn(&[f64]) -> f64,
{
    let quasi_newton = bfgs(&grad_objective, x0, opts.max_iter, opts.tol);
    if quasi_newton.converged && quasi_newton.value.is_finite() {
        return quasi_newton;
    }
    let simplex = nelder_mead(&objective, x0, 1.0, opts.max_iter, opts.tol);
    if simplex.value < quasi_newton.value || !quasi_newton.value.is_finite() {
        simplex
    } else {
        quasi_newton
    }
}

struct Candidate {
    value: f64,
    witness: ExtendedScore,
    converged: bool,
}

fn finish(best: Option<Candidate>) -> Result<BayesSolution> {
    let best = best.ok_or_else(|| Error::Solver { message: "no candidate evaluated".into(), best: None })?;
    if !best.value.is_finite() {
        return Err(Error::Solver { message: "no finite configuration found".into(), best: None });
    }
    if !best.converged {
        return Err(Error::Solver {
            message: "inner minimization did not converge within the iteration budget".into(),
            best: Some(best.value),
        });
    }
    Ok(BayesSolution { value: best.value, witness: best.witness.canonical(), converged: true })
}

fn keep_better(best: &mut Option<Candidate>, c: Candidate) {
    // strict improvement only, so earlier (smaller) active sets win ties
    let better = match best {
        None => true,
        Some(b) => c.value < b.value - 1e-15 * (1.0 + b.value.abs()),
    };
    if better {
        *best = Some(c);
    }
}

/// `C_p^* = inf_v C_p(v)`, searched over the active sets formed by the
/// `ℓ` most probable classes, `ℓ = 1, …, k`.
///
/// Within an active set the first (most probable) class is pinned at 0.
/// Sorting never increases the conditional risk of a permutation
/// equivariant loss, so these `k` nested sets suffice.
pub fn bayes_conditional_risk(p: &ProbVector, spec: &LossSpec, opts: &SolverOptions) -> Result<BayesSolution> {
    spec.validate()?;
    opts.validate()?;
    check_len(spec.k, p.len())?;
    let order = p.descending_order();
    let mut best: Option<Candidate> = None;

    for l in 1..=spec.k {
        let active = order[..l].to_vec();
        let sub = Subproblem::new(p, spec, &active);
        if !sub.residual.is_finite() {
            continue;
        }
        let embed = |x: &[f64]| -> Vec<f64> {
            let mut alpha = Vec::with_capacity(l);
            alpha.push(0.0);
            alpha.extend_from_slice(x);
            alpha
        };
        let with_grad = |x: &[f64]| {
            let (v, g) = sub.value_and_gradient(&embed(x));
            (v, g[1..].to_vec())
        };
        let value_only = |x: &[f64]| sub.value_and_gradient(&embed(x)).0;

        for x0 in starting_points(l - 1, opts, l as u64) {
            let run = local_search(with_grad, value_only, &x0, opts);
            keep_better(
                &mut best,
                Candidate {
                    value: run.value,
                    witness: ExtendedScore { active: active.clone(), alpha: embed(&run.x) },
                    converged: run.converged,
                },
            );
        }
    }
    finish(best)
}

/// `inf { C_p(v) : v_y = max v }`, over extended configurations in which
/// `y` is active and sits at the top level 0.
///
/// The other active coordinates are `α_j = −max(e^{u_j}, 1e−12)` with `u`
/// free, so the feasible set is exact without penalties. Active sets are
/// `y` plus the `m` most probable remaining classes, `m = 0, …, k − 1`.
pub fn constrained_bayes_risk(
    p: &ProbVector,
    spec: &LossSpec,
    y: usize,
    opts: &SolverOptions,
) -> Result<BayesSolution> {
    spec.validate()?;
    opts.validate()?;
    check_len(spec.k, p.len())?;
    if y >= spec.k {
        return Err(Error::Validation(format!("class {y} out of range for k = {}", spec.k)));
    }
    let others: Vec<usize> = p.descending_order().into_iter().filter(|&j| j != y).collect();
    let mut best: Option<Candidate> = None;

    for m in 0..spec.k {
        let mut active = vec![y];
        active.extend_from_slice(&others[..m]);
        let sub = Subproblem::new(p, spec, &active);
        if !sub.residual.is_finite() {
            continue;
        }
        let embed = |u: &[f64]| -> Vec<f64> {
            let mut alpha = Vec::with_capacity(m + 1);
            alpha.push(0.0);
            alpha.extend(u.iter().map(|&ui| -ui.exp().max(SLACK_FLOOR)));
            alpha
        };
        let with_grad = |u: &[f64]| {
            let (v, g) = sub.value_and_gradient(&embed(u));
            let gu = u
                .iter()
                .zip(&g[1..])
                .map(|(&ui, &gi)| {
                    let s = ui.exp();
                    if s > SLACK_FLOOR {
                        -s * gi
                    } else {
                        0.0
                    }
                })
                .collect();
            (v, gu)
        };
        let value_only = |u: &[f64]| sub.value_and_gradient(&embed(u)).0;

        for start in starting_points(m, opts, 1000 + m as u64) {
            let u0: Vec<f64> = start.iter().map(|&a| (-a).max(SLACK_FLOOR).ln()).collect();
            let run = local_search(with_grad, value_only, &u0, opts);
            keep_better(
                &mut best,
                Candidate {
                    value: run.value,
                    witness: ExtendedScore { active: active.clone(), alpha: embed(&run.x) },
                    converged: run.converged,
                },
            );
        }
    }
    finish(best)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pv(w: &[f64]) -> ProbVector {
        ProbVector::new(w.to_vec()).unwrap()
    }

    fn sv(w: &[f64]) -> ScoreVector {
        ScoreVector::new(w.to_vec()).unwrap()
    }

    fn binary_entropy(r: f64) -> f64 {
        -r * r.ln() - (1.0 - r) * (1.0 - r).ln()
    }

    #[test]
    fn conditional_risk_examples() {
        let spec = LossSpec::logistic(2);
        let v = sv(&[0.7, -0.2]);
        let l = spec.components(v.as_slice()).unwrap();
        assert_eq!(conditional_risk(&pv(&[1.0, 0.0]), &spec, &v).unwrap(), l[0]);
        let r = conditional_risk(&pv(&[0.5, 0.5]), &LossSpec::pairwise_exp(2), &sv(&[0.0, 0.0])).unwrap();
        assert_eq!(r, 1.0);
        let r = conditional_risk(&ProbVector::uniform(3), &LossSpec::logistic(3), &ScoreVector::zeros(3)).unwrap();
        assert!((r - 3f64.ln()).abs() < 1e-15);
        assert!(conditional_risk(&pv(&[0.5, 0.5]), &LossSpec::logistic(3), &ScoreVector::zeros(3)).is_err());
    }

    #[test]
    fn gradient_examples() {
        let g = conditional_risk_gradient(&pv(&[0.5, 0.5]), &LossSpec::pairwise_exp(2), &sv(&[0.0, 0.0])).unwrap();
        assert_eq!(g, vec![0.0, 0.0]);
        let g = conditional_risk_gradient(&pv(&[0.2, 0.3, 0.5]), &LossSpec::sigmoid(3), &sv(&[0.4, -1.0, 2.0])).unwrap();
        assert!(g.iter().sum::<f64>().abs() < 1e-12);
    }

    #[test]
    fn extended_risk_examples() {
        let cex = LossSpec::counterexample(3);
        let d = extended_risk(
            &pv(&[0.6, 0.4, 0.0]),
            &cex,
            &ExtendedScore::new(vec![0, 1], vec![0.0, 0.0]).unwrap(),
        )
        .unwrap();
        assert_eq!((d.mass, d.residual, d.total), (1.0, 0.0, 1.0));

        let d = extended_risk(
            &pv(&[0.5, 0.5]),
            &LossSpec::logistic(2),
            &ExtendedScore::new(vec![0], vec![0.0]).unwrap(),
        )
        .unwrap();
        assert_eq!(d.total, f64::INFINITY);
        assert_eq!(d.residual, f64::INFINITY);

        let spec = LossSpec::logistic(3);
        let p = ProbVector::uniform(3);
        let v = sv(&[0.3, -0.4, 1.1]);
        let d = extended_risk(&p, &spec, &ExtendedScore::finite(&v)).unwrap();
        assert!((d.total - conditional_risk(&p, &spec, &v).unwrap()).abs() < 1e-15);
        assert_eq!(d.residual, 0.0);
        assert_eq!(d.mass, 1.0);
    }

    #[test]
    fn extended_risk_with_bounded_phi_limit() {
        // sigmoid φ(−∞) = 1: inactive classes pay a finite price
        let spec = LossSpec::sigmoid(3);
        let p = pv(&[0.5, 0.3, 0.2]);
        let d = extended_risk(&p, &spec, &ExtendedScore::new(vec![0], vec![0.0]).unwrap()).unwrap();
        // each inactive class: γ(1·φ(−∞) + 1·φ(0)) = 1.5
        assert!((d.total - 0.5 * 1.5).abs() < 1e-15);
        let far = ExtendedScore::new(vec![0], vec![0.0]).unwrap().at_depth(3, 60.0).unwrap();
        assert!((conditional_risk(&p, &spec, &far).unwrap() - d.total).abs() < 1e-12);
    }

    #[test]
    fn extended_risk_validation() {
        let p = ProbVector::uniform(3);
        let spec = LossSpec::logistic(3);
        assert!(ExtendedScore::new(vec![], vec![]).is_err());
        assert!(ExtendedScore::new(vec![0, 0], vec![0.0, 1.0]).is_err());
        assert!(ExtendedScore::new(vec![0, 1], vec![0.0]).is_err());
        let e = ExtendedScore::new(vec![0, 5], vec![0.0, 1.0]).unwrap();
        assert!(extended_risk(&p, &spec, &e).is_err());
    }

    #[test]
    fn bayes_risk_logistic_binary() {
        let p = pv(&[0.6, 0.4]);
        let sol = bayes_conditional_risk(&p, &LossSpec::logistic(2), &SolverOptions::default()).unwrap();
        assert!((sol.value - binary_entropy(0.6)).abs() < 1e-9, "{sol:?}");
        assert_eq!(sol.witness.active, vec![0, 1]);
        assert!((sol.witness.alpha[1] - (0.4f64 / 0.6).ln()).abs() < 1e-4);
    }

    #[test]
    fn bayes_risk_counterexample_binary() {
        let p = pv(&[0.6, 0.4]);
        let sol = bayes_conditional_risk(&p, &LossSpec::counterexample(2), &SolverOptions::default()).unwrap();
        assert!((sol.value - 1.0).abs() < 1e-9, "{sol:?}");
        assert!(sol.witness.alpha[1].abs() < 1e-4);
    }

    #[test]
    fn bayes_risk_point_mass() {
        let p = pv(&[1.0, 0.0, 0.0]);
        let sol = bayes_conditional_risk(&p, &LossSpec::logistic(3), &SolverOptions::default()).unwrap();
        assert_eq!(sol.value, 0.0);
        assert_eq!(sol.witness.active, vec![0]);
    }

    #[test]
    fn bayes_risk_sigmoid_pairwise_minimum() {
        // identity γ with sigmoid φ: each pair contributes at best min(p_i, p_j)
        let p = pv(&[0.5, 0.3, 0.2]);
        let sol = bayes_conditional_risk(&p, &LossSpec::sigmoid(3), &SolverOptions::default()).unwrap();
        assert!((sol.value - 0.7).abs() < 1e-6, "{sol:?}");
    }

    #[test]
    fn constrained_examples() {
        let p = pv(&[0.6, 0.4]);
        let opts = SolverOptions::default();
        let spec = LossSpec::logistic(2);
        let c = constrained_bayes_risk(&p, &spec, 1, &opts).unwrap();
        assert!((c.value - 2f64.ln()).abs() < 1e-9, "{c:?}");
        assert!(c.witness.alpha.iter().all(|a| a.abs() < 1e-6));
        let c = constrained_bayes_risk(&p, &spec, 0, &opts).unwrap();
        assert!((c.value - binary_entropy(0.6)).abs() < 1e-9, "{c:?}");

        let c = constrained_bayes_risk(&pv(&[0.6, 0.4, 0.0]), &LossSpec::counterexample(3), 1, &opts).unwrap();
        assert!((c.value - 1.0).abs() < 1e-9, "{c:?}");
        assert!(constrained_bayes_risk(&p, &spec, 2, &opts).is_err());
    }

    #[test]
    fn constrained_witness_keeps_class_on_top() {
        let p = pv(&[0.5, 0.3, 0.2]);
        let c = constrained_bayes_risk(&p, &LossSpec::logistic(3), 2, &SolverOptions::default()).unwrap();
        let i = c.witness.active.iter().position(|&a| a == 2).unwrap();
        assert_eq!(c.witness.alpha[i], 0.0);
        assert!(c.witness.alpha.iter().all(|&a| a <= 0.0));
    }

    #[test]
    fn solver_rejects_bad_options() {
        let opts = SolverOptions { max_iter: 0, ..SolverOptions::default() };
        assert!(bayes_conditional_risk(&ProbVector::uniform(2), &LossSpec::logistic(2), &opts).is_err());
    }
}
