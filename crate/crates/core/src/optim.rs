//! Small-dimensional local minimizers and a bracketing root finder.
//!
//! Objectives may return `+∞` (or NaN, treated as `+∞`) outside their
//! effective domain; both minimizers simply reject such points.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct LocalMin {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn sanitize(f: f64) -> f64 {
    if f.is_nan() {
        f64::INFINITY
    } else {
        f
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

const ARMIJO: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 60;
const STALL_ROUNDS: usize = 3;

/// Quasi-Newton (BFGS, inverse-Hessian form) with Armijo backtracking.
///
/// `objective` returns the value and gradient. Stops when the value changes
/// by at most `tol·(1 + |f|)` for a few consecutive iterations, when the
/// gradient vanishes, or when no descent step can be found.
pub fn bfgs<F>(objective: F, x0: &[f64], max_iter: usize, tol: f64) -> LocalMin
where
    F: Fn(&[f64]) -> (f64, Vec<f64>),
{
    let n = x0.len();
    let mut x = x0.to_vec();
    let (f0, mut g) = objective(&x);
    let mut f = sanitize(f0);
    if n == 0 || !f.is_finite() {
        return LocalMin { x, value: f, iterations: 0, converged: n == 0 };
    }

    let mut h = identity(n);
    let mut first_update = true;
    let mut quiet = 0;

    for iter in 1..=max_iter {
        if g.iter().all(|gi| gi.abs() <= 1e-14 * (1.0 + f.abs())) {
            return LocalMin { x, value: f, iterations: iter, converged: true };
        }
        let mut d: Vec<f64> = h.iter().map(|row| -dot(row, &g)).collect();
        let mut slope = dot(&g, &d);
        if !(slope < 0.0) {
            h = identity(n);
            d = g.iter().map(|gi| -gi).collect();
            slope = dot(&g, &d);
        }

        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..MAX_BACKTRACKS {
            let trial: Vec<f64> = x.iter().zip(&d).map(|(xi, di)| xi + step * di).collect();
            let (ft, gt) = objective(&trial);
            let ft = sanitize(ft);
            if ft.is_finite() && ft <= f + ARMIJO * step * slope {
                accepted = Some((trial, ft, gt));
                break;
            }
            step *= 0.5;
        }
        let Some((x_new, f_new, g_new)) = accepted else {
            // no descent direction left at working precision
            return LocalMin { x, value: f, iterations: iter, converged: true };
        };

        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() && sy.is_finite() {
            if first_update {
                let scale = sy / dot(&y, &y);
                h = identity(n);
                h.iter_mut().enumerate().for_each(|(i, row)| row[i] = scale);
                first_update = false;
            }
            bfgs_update(&mut h, &s, &y, sy);
        }

        let change = (f - f_new).abs();
        x = x_new;
        g = g_new;
        f = f_new;
        if change <= tol * (1.0 + f.abs()) {
            quiet += 1;
            if quiet >= STALL_ROUNDS {
                return LocalMin { x, value: f, iterations: iter, converged: true };
            }
        } else {
            quiet = 0;
        }
    }
    LocalMin { x, value: f, iterations: max_iter, converged: false }
}

fn identity(n: usize) -> Vec<Vec<f64>> {
    (0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect()
}

/// `H ← (I − ρ s yᵀ) H (I − ρ y sᵀ) + ρ s sᵀ`
fn bfgs_update(h: &mut [Vec<f64>], s: &[f64], y: &[f64], sy: f64) {
    let n = s.len();
    let rho = 1.0 / sy;
    let hy: Vec<f64> = h.iter().map(|row| dot(row, y)).collect();
    let yhy = dot(y, &hy);
    for i in 0..n {
        for j in 0..n {
            h[i][j] += -rho * (hy[i] * s[j] + s[i] * hy[j]) + (rho * rho * yhy + rho) * s[i] * s[j];
        }
    }
}

/// Nelder-Mead simplex search with standard coefficients.
///
/// `step` sets the edge length of the initial simplex around `x0`.
pub fn nelder_mead<F>(objective: F, x0: &[f64], step: f64, max_iter: usize, tol: f64) -> LocalMin
where
    F: Fn(&[f64]) -> f64,
{
    let n = x0.len();
    let eval = |x: &[f64]| sanitize(objective(x));
    if n == 0 {
        return LocalMin { x: vec![], value: eval(x0), iterations: 0, converged: true };
    }

    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    simplex.push((x0.to_vec(), eval(x0)));
    for i in 0..n {
        let mut v = x0.to_vec();
        v[i] += step;
        let fv = eval(&v);
        simplex.push((v, fv));
    }

    for iter in 1..=max_iter {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let best = simplex[0].1;
        let worst = simplex[n].1;
        let diameter = simplex[1..]
            .iter()
            .flat_map(|(v, _)| v.iter().zip(&simplex[0].0).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max);
        if best.is_finite() && (worst - best).abs() <= tol * (1.0 + best.abs()) && diameter < 1e-8 {
            let (x, value) = simplex.swap_remove(0);
            return LocalMin { x, value, iterations: iter, converged: true };
        }

        let centroid: Vec<f64> = (0..n)
            .map(|i| simplex[..n].iter().map(|(v, _)| v[i]).sum::<f64>() / n as f64)
            .collect();
        let along = |coef: f64| -> Vec<f64> {
            centroid.iter().zip(&simplex[n].0).map(|(c, w)| c + coef * (c - w)).collect()
        };

        let xr = along(1.0);
        let fr = eval(&xr);
        if fr < simplex[0].1 {
            let xe = along(2.0);
            let fe = eval(&xe);
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < simplex[n - 1].1 {
            simplex[n] = (xr, fr);
        } else {
            let (xc, fc) = if fr < simplex[n].1 {
                let xc = along(0.5);
                let fc = eval(&xc);
                (xc, fc)
            } else {
                let xc = along(-0.5);
                let fc = eval(&xc);
                (xc, fc)
            };
            if fc < simplex[n].1.min(fr) {
                simplex[n] = (xc, fc);
            } else {
                let anchor = simplex[0].0.clone();
                for (v, fv) in simplex.iter_mut().skip(1) {
                    for (vi, ai) in v.iter_mut().zip(&anchor) {
                        *vi = ai + 0.5 * (*vi - ai);
                    }
                    *fv = eval(v);
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    let (x, value) = simplex.swap_remove(0);
    LocalMin { x, value, iterations: max_iter, converged: false }
}

/// Bisection on a sign-changing bracket `[a, b]`, to absolute width `tol`.
pub fn bisect<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64, tol: f64) -> Result<f64> {
    let mut fa = f(a);
    let fb = f(b);
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if fa.signum() == fb.signum() || fa.is_nan() || fb.is_nan() {
        return Err(Error::Solver {
            message: format!("no sign change on [{a}, {b}]"),
            best: None,
        });
    }
    while (b - a).abs() > tol {
        let m = 0.5 * (a + b);
        if m == a || m == b {
            break;
        }
        let fm = f(m);
        if fm == 0.0 {
            return Ok(m);
        }
        if fm.signum() == fa.signum() {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
    }
    Ok(0.5 * (a + b))
}
