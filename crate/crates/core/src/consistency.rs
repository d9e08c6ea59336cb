//! Consistency transfer on finite instance spaces.
//!
//! With finitely many instances, a score function is one score vector per
//! cell and the population surrogate risk is `Σ_cells mass·C_p(v_cell)`.
//! [`surrogate_descent`] drives that risk down cell by cell and tracks the
//! 01-risk of the argmax classifier; [`adversarial_sequence`] replays the
//! divergent witness of the counterexample loss on its violating cells,
//! where surrogate risk converges while the 01-risk does not.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibration::{sample_simplex, SamplingMode};
use crate::counterexample::{divergent_witness, WITNESS_RANGE};
use crate::error::{Error, Result};
use crate::loss::LossSpec;
use crate::risk::{bayes_conditional_risk, conditional_risk, conditional_risk_gradient, SolverOptions};
use crate::vectors::{argmax, ProbVector, ScoreVector};

const MASS_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub mass: f64,
    pub cond: ProbVector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteDistribution {
    pub cells: Vec<Cell>,
}

impl DiscreteDistribution {
    pub fn new(cells: Vec<Cell>) -> Result<Self> {
        let d = DiscreteDistribution { cells };
        d.validate()?;
        Ok(d)
    }

    pub fn single(cond: ProbVector) -> Self {
        DiscreteDistribution { cells: vec![Cell { mass: 1.0, cond }] }
    }

    pub fn validate(&self) -> Result<()> {
        let first = self
            .cells
            .first()
            .ok_or_else(|| Error::Validation("distribution has no cells".into()))?;
        let k = first.cond.len();
        if k < 2 {
            return Err(Error::Validation("cells need at least 2 classes".into()));
        }
        for c in &self.cells {
            if !(c.mass >= 0.0 && c.mass.is_finite()) {
                return Err(Error::Validation(format!("cell mass must be >= 0, got {}", c.mass)));
            }
            if c.cond.len() != k {
                return Err(Error::Dimension { expected: k, got: c.cond.len() });
            }
        }
        let total: f64 = self.cells.iter().map(|c| c.mass).sum();
        if (total - 1.0).abs() > MASS_TOLERANCE {
            return Err(Error::Validation(format!("cell masses sum to {total}, not 1")));
        }
        Ok(())
    }

    pub fn k(&self) -> usize {
        self.cells[0].cond.len()
    }

    /// Reads the JSON layout `{"cells": [{"mass": m, "cond": [p_0, …]}, …]}`.
    pub fn from_json(text: &str) -> Result<Self> {
        let d: DiscreteDistribution =
            serde_json::from_str(text).map_err(|e| Error::Validation(format!("bad distribution file: {e}")))?;
        d.validate()?;
        Ok(d)
    }

    /// Seeded random distribution: Dirichlet cell masses and stratified
    /// conditionals (a quarter on faces of the simplex).
    pub fn random(k: usize, cells: usize, seed: u64) -> Result<Self> {
        if cells == 0 {
            return Err(Error::Config("need at least one cell".into()));
        }
        let masses: Vec<f64> = if cells == 1 {
            vec![1.0]
        } else {
            sample_simplex(cells, 1, SamplingMode::Interior, seed ^ 0x5151)?[0].as_slice().to_vec()
        };
        let conds = sample_simplex(k, cells, SamplingMode::Stratified, seed)?;
        let total: f64 = masses.iter().sum();
        let cells = masses
            .into_iter()
            .zip(conds)
            .map(|(m, cond)| Cell { mass: m / total, cond })
            .collect();
        DiscreteDistribution::new(cells)
    }
}

/// `Σ_cells mass·(1 − max cond)`.
pub fn bayes_01_risk(d: &DiscreteDistribution) -> f64 {
    d.cells.iter().map(|c| c.mass * (1.0 - c.cond.max())).sum()
}

/// 01-risk of predicting `predictions[i]` on cell `i`.
pub fn zero_one_risk(d: &DiscreteDistribution, predictions: &[usize]) -> f64 {
    d.cells.iter().zip(predictions).map(|(c, &y)| c.mass * (1.0 - c.cond[y])).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DescentOptions {
    pub steps: usize,
    pub initial_step: f64,
    pub shrink: f64,
    pub armijo: f64,
    pub max_backtracks: usize,
}

impl Default for DescentOptions {
    fn default() -> Self {
        DescentOptions { steps: 500, initial_step: 1.0, shrink: 0.5, armijo: 1e-4, max_backtracks: 60 }
    }
}

impl DescentOptions {
    fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::Config("descent needs at least one step".into()));
        }
        if !(self.initial_step.is_finite() && self.initial_step > 0.0) {
            return Err(Error::Solver {
                message: format!("divergent initial step size {}", self.initial_step),
                best: None,
            });
        }
        if !(self.shrink > 0.0 && self.shrink < 1.0) || !(self.armijo > 0.0 && self.armijo < 1.0) {
            return Err(Error::Config(format!("invalid line search constants {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryStep {
    /// Iteration number for descent runs, `t` for witness sequences.
    pub step: f64,
    pub surrogate_risk: f64,
    pub zero_one_risk: f64,
    pub per_cell_argmax: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub steps: Vec<TrajectoryStep>,
    pub bayes_zero_one_risk: f64,
    /// `Σ mass·C_p^*`, when computed.
    pub surrogate_infimum: Option<f64>,
}

impl Trajectory {
    pub fn last(&self) -> &TrajectoryStep {
        self.steps.last().expect("trajectories are nonempty")
    }

    pub fn final_zero_one_regret(&self) -> f64 {
        self.last().zero_one_risk - self.bayes_zero_one_risk
    }

    pub fn final_surrogate_regret(&self) -> Option<f64> {
        self.surrogate_infimum.map(|inf| self.last().surrogate_risk - inf)
    }

    /// CSV with header `step,surrogate_risk,zero_one_risk`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,surrogate_risk,zero_one_risk\n");
        for s in &self.steps {
            out.push_str(&format!("{},{},{}\n", s.step, s.surrogate_risk, s.zero_one_risk));
        }
        out
    }
}

/// Risk and argmax after every step (index 0 is the starting point), and the final scores.
type CellRun = (Vec<(f64, usize)>, ScoreVector);

fn descend_cell(p: &ProbVector, spec: &LossSpec, opts: &DescentOptions) -> Result<CellRun> {
    let k = spec.k;
    let mut v = ScoreVector::zeros(k);
    let mut risk = conditional_risk(p, spec, &v)?;
    if !risk.is_finite() {
        return Err(Error::Solver { message: "non-finite starting risk".into(), best: None });
    }
    let mut history = Vec::with_capacity(opts.steps + 1);
    history.push((risk, v.argmax()));
    for _ in 0..opts.steps {
        let g = conditional_risk_gradient(p, spec, &v)?;
        let g2: f64 = g.iter().map(|x| x * x).sum();
        let mut eta = opts.initial_step;
        for _ in 0..opts.max_backtracks {
            let trial: Vec<f64> = v.as_slice().iter().zip(&g).map(|(vi, gi)| vi - eta * gi).collect();
            if trial.iter().all(|x| x.is_finite()) {
                let trial = ScoreVector::new(trial)?;
                let r = conditional_risk(p, spec, &trial)?;
                if r.is_finite() && r <= risk - opts.armijo * eta * g2 {
                    v = trial;
                    risk = r;
                    break;
                }
            }
            eta *= opts.shrink;
        }
        // no acceptable step: stationary at working precision, stay put
        history.push((risk, v.argmax()));
    }
    Ok((history, v))
}

fn descend_all(d: &DiscreteDistribution, spec: &LossSpec, opts: &DescentOptions) -> Result<Vec<CellRun>> {
    d.validate()?;
    spec.validate()?;
    opts.validate()?;
    if d.k() != spec.k {
        return Err(Error::Dimension { expected: spec.k, got: d.k() });
    }
    d.cells.par_iter().map(|c| descend_cell(&c.cond, spec, opts)).collect()
}

/// Cell-wise gradient descent with Armijo backtracking from zero scores.
/// Argmax ties are broken toward the lowest class index.
pub fn surrogate_descent(d: &DiscreteDistribution, spec: &LossSpec, opts: &DescentOptions) -> Result<Trajectory> {
    let runs = descend_all(d, spec, opts)?;
    let steps = (0..=opts.steps)
        .map(|s| {
            let argmaxes: Vec<usize> = runs.iter().map(|(h, _)| h[s].1).collect();
            let surrogate = d.cells.iter().zip(&runs).map(|(c, (h, _))| c.mass * h[s].0).sum();
            TrajectoryStep {
                step: s as f64,
                surrogate_risk: surrogate,
                zero_one_risk: zero_one_risk(d, &argmaxes),
                per_cell_argmax: argmaxes,
            }
        })
        .collect();
    Ok(Trajectory { steps, bayes_zero_one_risk: bayes_01_risk(d), surrogate_infimum: None })
}

/// Adds `Σ mass·C_p^*` to a trajectory.
pub fn with_surrogate_infimum(mut traj: Trajectory, d: &DiscreteDistribution, spec: &LossSpec, opts: &SolverOptions) -> Result<Trajectory> {
    traj.surrogate_infimum = Some(surrogate_infimum(d, spec, opts)?);
    Ok(traj)
}

pub fn surrogate_infimum(d: &DiscreteDistribution, spec: &LossSpec, opts: &SolverOptions) -> Result<f64> {
    let values = d
        .cells
        .par_iter()
        .map(|c| bayes_conditional_risk(&c.cond, spec, opts).map(|b| c.mass * b.value))
        .collect::<Result<Vec<f64>>>()?;
    Ok(values.iter().sum())
}

/// Ratio `r` if `cond = (r, 1 − r, 0, …, 0)` with `r` in the witness range.
fn violating_ratio(cond: &ProbVector) -> Option<f64> {
    let w = cond.as_slice();
    let r = w[0];
    let shape = (w[1] - (1.0 - r)).abs() < 1e-12 && w[2..].iter().all(|&x| x == 0.0);
    (shape && r > WITNESS_RANGE.0 && r <= WITNESS_RANGE.1).then_some(r)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdversarialRun {
    pub trajectory: Trajectory,
    pub violating_cells: Vec<usize>,
}

/// Scores each violating cell of the counterexample loss with the divergent
/// witness at depth `t`, and every other cell with its descent limit.
pub fn adversarial_sequence(
    d: &DiscreteDistribution,
    spec: &LossSpec,
    t_grid: &[f64],
    descent: &DescentOptions,
    solver: &SolverOptions,
) -> Result<AdversarialRun> {
    d.validate()?;
    if !spec.is_counterexample() {
        return Err(Error::Precondition("adversarial sequences exist for the counterexample loss only".into()));
    }
    if t_grid.is_empty() {
        return Err(Error::Config("t grid is empty".into()));
    }
    let violating: Vec<usize> = d
        .cells
        .iter()
        .enumerate()
        .filter(|(_, c)| violating_ratio(&c.cond).is_some())
        .map(|(i, _)| i)
        .collect();
    if violating.is_empty() {
        return Err(Error::Precondition("no cell has conditional (r, 1 - r, 0, ...) with r in (1/2, 2/3]".into()));
    }

    let limits = descend_all(d, spec, descent)?;
    let k = spec.k;
    let steps = t_grid
        .iter()
        .map(|&t| {
            let w = divergent_witness(k, t)?;
            let mut surrogate = 0.0;
            let mut argmaxes = Vec::with_capacity(d.cells.len());
            for (i, (cell, (_, v_limit))) in d.cells.iter().zip(&limits).enumerate() {
                let v = if violating.contains(&i) { &w } else { v_limit };
                surrogate += cell.mass * conditional_risk(&cell.cond, spec, v)?;
                argmaxes.push(argmax(v.as_slice()));
            }
            Ok(TrajectoryStep {
                step: t,
                surrogate_risk: surrogate,
                zero_one_risk: zero_one_risk(d, &argmaxes),
                per_cell_argmax: argmaxes,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let trajectory = Trajectory {
        steps,
        bayes_zero_one_risk: bayes_01_risk(d),
        surrogate_infimum: Some(surrogate_infimum(d, spec, solver)?),
    };
    Ok(AdversarialRun { trajectory, violating_cells: violating })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pv(w: &[f64]) -> ProbVector {
        ProbVector::new(w.to_vec()).unwrap()
    }

    fn two_cells() -> DiscreteDistribution {
        DiscreteDistribution::new(vec![
            Cell { mass: 0.5, cond: pv(&[0.6, 0.4, 0.0]) },
            Cell { mass: 0.5, cond: pv(&[0.2, 0.3, 0.5]) },
        ])
        .unwrap()
    }

    #[test]
    fn bayes_01_examples() {
        assert!((bayes_01_risk(&DiscreteDistribution::single(pv(&[0.6, 0.4]))) - 0.4).abs() < 1e-15);
        let det = DiscreteDistribution::new(vec![
            Cell { mass: 0.5, cond: pv(&[1.0, 0.0]) },
            Cell { mass: 0.5, cond: pv(&[0.0, 1.0]) },
        ])
        .unwrap();
        assert_eq!(bayes_01_risk(&det), 0.0);
        assert!((bayes_01_risk(&two_cells()) - 0.45).abs() < 1e-15);
    }

    #[test]
    fn distribution_validation() {
        assert!(DiscreteDistribution::new(vec![]).is_err());
        assert!(DiscreteDistribution::new(vec![Cell { mass: 0.5, cond: pv(&[1.0, 0.0]) }]).is_err());
        assert!(DiscreteDistribution::new(vec![
            Cell { mass: 0.5, cond: pv(&[1.0, 0.0]) },
            Cell { mass: 0.5, cond: pv(&[1.0, 0.0, 0.0]) },
        ])
        .is_err());
        let d = DiscreteDistribution::from_json(r#"{"cells":[{"mass":1.0,"cond":[0.6,0.4,0.0]}]}"#).unwrap();
        assert_eq!(d.k(), 3);
        assert!(DiscreteDistribution::from_json(r#"{"cells":[{"mass":1.0,"cond":[0.6,0.5]}]}"#).is_err());
    }

    #[test]
    fn logistic_descent_reaches_bayes_01() {
        let d = two_cells();
        let traj = surrogate_descent(&d, &LossSpec::logistic(3), &DescentOptions::default()).unwrap();
        assert_eq!(traj.steps.len(), 501);
        assert!(traj.final_zero_one_regret().abs() < 1e-12);
        assert!(traj.steps.windows(2).all(|w| w[1].surrogate_risk <= w[0].surrogate_risk));
    }

    #[test]
    fn point_mass_cell_settles_immediately() {
        let d = DiscreteDistribution::single(pv(&[1.0, 0.0]));
        let traj = surrogate_descent(&d, &LossSpec::pairwise_exp(2), &DescentOptions::default()).unwrap();
        assert!(traj.steps[1..].iter().all(|s| s.per_cell_argmax == vec![0]));
    }

    #[test]
    fn symmetric_cell_stays_put() {
        let d = DiscreteDistribution::single(ProbVector::uniform(3));
        let opts = DescentOptions { steps: 20, ..DescentOptions::default() };
        let traj = surrogate_descent(&d, &LossSpec::pairwise_exp(3), &opts).unwrap();
        assert!(traj.steps.windows(2).all(|w| w[1].surrogate_risk <= w[0].surrogate_risk));
        assert!((traj.last().surrogate_risk - 2.0).abs() < 1e-12);
    }

    #[test]
    fn descent_rejects_bad_step() {
        let d = two_cells();
        let opts = DescentOptions { initial_step: f64::INFINITY, ..DescentOptions::default() };
        assert!(matches!(surrogate_descent(&d, &LossSpec::logistic(3), &opts), Err(Error::Solver { .. })));
        assert!(surrogate_descent(&d, &LossSpec::logistic(2), &DescentOptions::default()).is_err());
    }

    #[test]
    fn adversarial_preconditions() {
        let d = DiscreteDistribution::single(pv(&[0.6, 0.4, 0.0]));
        let r = adversarial_sequence(&d, &LossSpec::logistic(3), &[1.0], &DescentOptions::default(), &SolverOptions::default());
        assert!(matches!(r, Err(Error::Precondition(_))));
        let d = DiscreteDistribution::single(pv(&[0.8, 0.2, 0.0]));
        let r = adversarial_sequence(&d, &LossSpec::counterexample(3), &[1.0], &DescentOptions::default(), &SolverOptions::default());
        assert!(matches!(r, Err(Error::Precondition(_))));
    }

    #[test]
    fn adversarial_two_cells() {
        let d = two_cells();
        let grid = [1.0, 10.0, 100.0, 1000.0];
        let run = adversarial_sequence(&d, &LossSpec::counterexample(3), &grid, &DescentOptions::default(), &SolverOptions::default()).unwrap();
        assert_eq!(run.violating_cells, vec![0]);
        for s in &run.trajectory.steps {
            assert!((s.zero_one_risk - run.trajectory.bayes_zero_one_risk - 0.1).abs() < 1e-12);
        }
    }

    #[test]
    fn csv_layout() {
        let d = DiscreteDistribution::single(pv(&[0.7, 0.3]));
        let opts = DescentOptions { steps: 2, ..DescentOptions::default() };
        let csv = surrogate_descent(&d, &LossSpec::logistic(2), &opts).unwrap().to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "step,surrogate_risk,zero_one_risk");
        assert_eq!(lines.len(), 4);
        assert!(lines[1].starts_with("0,"));
    }
}
