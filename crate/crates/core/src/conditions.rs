//! Grid-based checks of the sufficient conditions for calibration of a
//! Gamma-Phi loss: γ strictly increasing / with positive derivative /
//! unbounded, and φ non-increasing with negative slope at 0 and infimum 0.
//!
//! Grid verdicts are falsifiable evidence. Where a family has a closed-form
//! answer (`sup γ`, `inf φ`) that answer decides and the grid value is
//! recorded alongside it.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loss::{GammaFn, GammaSpec, LossSpec, PhiFn, PhiSpec};

pub const DERIVATIVE_TOLERANCE: f64 = 1e-9;
const PHI_INF_THRESHOLD: f64 = 1e-6;

/// Evenly spaced sampling plan on `[lo, hi]`, endpoints included.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplingGrid {
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
}

impl SamplingGrid {
    pub fn gamma_default() -> Self {
        SamplingGrid { lo: 0.0, hi: 100.0, points: 1001 }
    }

    pub fn phi_default() -> Self {
        SamplingGrid { lo: -50.0, hi: 50.0, points: 1001 }
    }

    fn validate(&self) -> Result<()> {
        if !(self.lo.is_finite() && self.hi.is_finite()) || self.hi <= self.lo || self.points < 2 {
            return Err(Error::Config(format!("degenerate sampling grid {self:?}")));
        }
        Ok(())
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        let n = (self.points - 1) as f64;
        (0..self.points).map(move |i| self.lo + (self.hi - self.lo) * (i as f64) / n)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evidence {
    pub condition: String,
    pub x: f64,
    pub value: f64,
    pub note: String,
}

impl Evidence {
    fn new(condition: &str, x: f64, value: f64, note: impl Into<String>) -> Self {
        Evidence { condition: condition.to_string(), x, value, note: note.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaConditions {
    pub gamma_si: bool,
    pub gamma_pd: bool,
    pub gamma_sup_infinite: bool,
    pub evidence: Vec<Evidence>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhiConditions {
    pub phi_ndz: bool,
    pub phi_inf_zero: bool,
    pub evidence: Vec<Evidence>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub gamma_si: bool,
    pub gamma_pd: bool,
    pub gamma_sup_infinite: bool,
    pub phi_ndz: bool,
    pub phi_inf_zero: bool,
    pub evidence: Vec<Evidence>,
}

impl ConditionReport {
    pub fn from_parts(gamma: GammaConditions, phi: PhiConditions) -> Self {
        let mut evidence = gamma.evidence;
        evidence.extend(phi.evidence);
        ConditionReport {
            gamma_si: gamma.gamma_si,
            gamma_pd: gamma.gamma_pd,
            gamma_sup_infinite: gamma.gamma_sup_infinite,
            phi_ndz: phi.phi_ndz,
            phi_inf_zero: phi.phi_inf_zero,
            evidence,
        }
    }

    /// Positive derivative of γ, unbounded γ, NDZ φ with infimum 0.
    pub fn sufficient_for_calibration(&self) -> bool {
        self.gamma_pd && self.gamma_sup_infinite && self.phi_ndz && self.phi_inf_zero
    }
}

/// Closed-form answers a γ implementation may supply.
pub trait GammaFacts {
    /// `Some(true)` if γ is known to be unbounded.
    fn known_unbounded(&self) -> Option<bool> {
        None
    }
}

pub trait PhiFacts {
    fn known_inf_zero(&self) -> Option<bool> {
        None
    }
}

impl GammaFacts for GammaSpec {
    fn known_unbounded(&self) -> Option<bool> {
        Some(self.analytic_facts().2)
    }
}

impl PhiFacts for PhiSpec {
    fn known_inf_zero(&self) -> Option<bool> {
        Some(self.analytic_facts().1)
    }
}

pub fn check_gamma_conditions<G: GammaFn + GammaFacts>(
    gamma: &G,
    grid: &SamplingGrid,
) -> Result<GammaConditions> {
    grid.validate()?;
    if grid.lo != 0.0 || grid.hi < 100.0 {
        return Err(Error::Config(format!(
            "gamma grid must cover [0, x_max] with x_max >= 100, got [{}, {}]",
            grid.lo, grid.hi
        )));
    }
    let xs: Vec<f64> = grid.nodes().collect();
    let vals: Vec<f64> = xs.iter().map(|&x| gamma.value(x)).collect();
    let mut evidence = Vec::new();

    // smallest forward increment
    let (i_min, inc_min) = vals
        .windows(2)
        .map(|w| w[1] - w[0])
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .expect("grid has at least two points");
    let gamma_si = inc_min > 0.0;
    evidence.push(Evidence::new("gamma_si", xs[i_min], inc_min, "smallest forward increment on grid"));

    let (x_dmin, dmin) = xs
        .iter()
        .map(|&x| (x, gamma.derivative(x)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .expect("nonempty grid");
    let gamma_pd = dmin > DERIVATIVE_TOLERANCE;
    evidence.push(Evidence::new("gamma_pd", x_dmin, dmin, "smallest derivative on grid"));

    // growth over successive squarings of the argument; bounded γ flattens out
    let probes = [grid.hi, grid.hi.powi(2), grid.hi.powi(4), grid.hi.powi(8)];
    let g: Vec<f64> = probes.iter().map(|&x| gamma.value(x)).collect();
    let late = g[3] - g[2];
    let early = g[2] - g[1];
    let grows = late.is_infinite() || (late > 0.0 && late >= 0.5 * early);
    evidence.push(Evidence::new("gamma_sup_infinite", grid.hi, g[0], "gamma at grid end"));
    evidence.push(Evidence::new(
        "gamma_sup_infinite",
        probes[3],
        g[3],
        if grows { "still growing far out" } else { "flattening far out" },
    ));
    let gamma_sup_infinite = match gamma.known_unbounded() {
        Some(flag) => {
            if flag != grows {
                evidence.push(Evidence::new(
                    "gamma_sup_infinite",
                    probes[3],
                    g[3],
                    "grid heuristic disagrees with closed form; closed form used",
                ));
            }
            flag
        }
        None => grows,
    };

    Ok(GammaConditions { gamma_si, gamma_pd, gamma_sup_infinite, evidence })
}

pub fn check_phi_conditions<P: PhiFn + PhiFacts>(phi: &P, grid: &SamplingGrid) -> Result<PhiConditions> {
    grid.validate()?;
    if (grid.lo + grid.hi).abs() > 1e-12 * grid.hi.abs() {
        return Err(Error::Config(format!(
            "phi grid must be symmetric around 0, got [{}, {}]",
            grid.lo, grid.hi
        )));
    }
    let mut evidence = Vec::new();

    let (x_dmax, dmax) = grid
        .nodes()
        .map(|x| (x, phi.derivative(x)))
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .expect("nonempty grid");
    let d0 = phi.derivative(0.0);
    evidence.push(Evidence::new("phi_ndz", x_dmax, dmax, "largest derivative on grid"));
    evidence.push(Evidence::new("phi_ndz", 0.0, d0, "derivative at zero"));
    let phi_ndz = dmax <= 0.0 && d0 < -DERIVATIVE_TOLERANCE;

    let tail = phi.value(grid.hi);
    evidence.push(Evidence::new("phi_inf_zero", grid.hi, tail, "phi at grid end"));
    let small = (0.0..PHI_INF_THRESHOLD).contains(&tail);
    let phi_inf_zero = match phi.known_inf_zero() {
        Some(flag) => {
            if flag != small {
                evidence.push(Evidence::new(
                    "phi_inf_zero",
                    grid.hi,
                    tail,
                    "grid heuristic disagrees with closed form; closed form used",
                ));
            }
            flag
        }
        None => small,
    };

    Ok(PhiConditions { phi_ndz, phi_inf_zero, evidence })
}

/// Both checks on a loss with default grids.
pub fn check_conditions(spec: &LossSpec) -> Result<ConditionReport> {
    spec.validate()?;
    let gamma = check_gamma_conditions(&spec.gamma, &SamplingGrid::gamma_default())?;
    let phi = check_phi_conditions(&spec.phi, &SamplingGrid::phi_default())?;
    Ok(ConditionReport::from_parts(gamma, phi))
}
