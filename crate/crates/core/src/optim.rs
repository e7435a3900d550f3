//! Numerical optimization primitives: BFGS with backtracking, Brent's
//! one-dimensional minimizer, and finite-difference Hessians.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::symmetrize;

#[derive(Debug, Clone)]
pub struct BfgsOptions {
    pub max_iter: usize,
    /// Convergence when the gradient max-norm falls below this.
    pub gtol: f64,
    /// Starting inverse-Hessian approximation; identity when `None`.
    pub initial_inverse_hessian: Option<DMatrix<f64>>,
}

impl Default for BfgsOptions {
    fn default() -> Self {
        Self { max_iter: 500, gtol: 1e-6, initial_inverse_hessian: None }
    }
}

#[derive(Debug, Clone)]
pub struct BfgsResult {
    pub x: DVector<f64>,
    pub f: f64,
    pub grad: DVector<f64>,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
    /// Objective value after each accepted step, starting with the initial point.
    pub trace: Vec<f64>,
}

/// Minimizes a smooth function given as `x -> (f(x), grad f(x))`.
pub fn bfgs<F>(mut fg: F, x0: DVector<f64>, opts: &BfgsOptions) -> Result<BfgsResult>
where
    F: FnMut(&DVector<f64>) -> Result<(f64, DVector<f64>)>,
{
    let n = x0.len();
    let h0 = opts
        .initial_inverse_hessian
        .clone()
        .unwrap_or_else(|| DMatrix::identity(n, n));
    let mut h = h0.clone();
    let mut x = x0;
    let (mut f, mut g) = fg(&x)?;
    let mut evaluations = 1;
    if !f.is_finite() {
        return Err(Error::Numerical("objective is not finite at the starting point".into()));
    }
    let mut trace = vec![f];
    let mut converged = g.amax() < opts.gtol;
    let mut iterations = 0;
    while !converged && iterations < opts.max_iter {
        iterations += 1;
        let mut d = -(&h * &g);
        let mut slope = g.dot(&d);
        if !(slope < 0.0) {
            h = h0.clone();
            d = -(&h * &g);
            slope = g.dot(&d);
            if !(slope < 0.0) {
                break;
            }
        }
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let xn = &x + &d * step;
            evaluations += 1;
            // a trial point where the objective cannot be evaluated is rejected like a non-decrease
            let Ok((fn_, gn)) = fg(&xn) else {
                step *= 0.5;
                continue;
            };
            if fn_.is_finite() && fn_ <= f + 1e-4 * step * slope {
                accepted = Some((xn, fn_, gn));
                break;
            }
            step *= 0.5;
        }
        let Some((xn, fn_, gn)) = accepted else {
            // no decrease possible along the search direction
            if h != h0 {
                h = h0.clone();
                continue;
            }
            break;
        };
        let s = &xn - &x;
        let y = &gn - &g;
        let sy = s.dot(&y);
        if sy > 1e-12 * s.norm() * y.norm() {
            let rho = 1.0 / sy;
            let hy = &h * &y;
            let yhy = y.dot(&hy);
            // H+ = H - rho (s y'H + H y s') + (rho^2 y'Hy + rho) s s'
            h -= (&s * hy.transpose() + &hy * s.transpose()) * rho;
            h += (&s * s.transpose()) * (rho * rho * yhy + rho);
            symmetrize(&mut h);
        }
        let progress = f - fn_;
        x = xn;
        f = fn_;
        g = gn;
        trace.push(f);
        converged = g.amax() < opts.gtol;
        if !converged && progress <= 1e-15 * f.abs().max(1.0) && s.amax() <= 1e-14 * x.amax().max(1.0) {
            break;
        }
    }
    Ok(BfgsResult { x, f, grad: g, iterations, evaluations, converged, trace })
}

/// Brent's method for the minimum of `f` on `[a, b]`.
pub fn brent_minimize<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, tol: f64, max_iter: usize) -> (f64, f64) {
    let golden = 0.5 * (3.0 - 5f64.sqrt());
    let (mut a, mut b) = (a.min(b), a.max(b));
    let mut x = a + golden * (b - a);
    let (mut w, mut v) = (x, x);
    let mut fx = f(x);
    let (mut fw, mut fv) = (fx, fx);
    let mut d: f64 = 0.0;
    let mut e: f64 = 0.0;
    for _ in 0..max_iter {
        let m = 0.5 * (a + b);
        let tol1 = tol * x.abs() + 1e-12;
        let tol2 = 2.0 * tol1;
        if (x - m).abs() <= tol2 - 0.5 * (b - a) {
            break;
        }
        let mut golden_step = true;
        if e.abs() > tol1 {
            let r = (x - w) * (fx - fv);
            let mut q = (x - v) * (fx - fw);
            let mut p = (x - v) * q - (x - w) * r;
            q = 2.0 * (q - r);
            if q > 0.0 {
                p = -p;
            }
            q = q.abs();
            if p.abs() < (0.5 * q * e).abs() && p > q * (a - x) && p < q * (b - x) {
                e = d;
                d = p / q;
                let u = x + d;
                if u - a < tol2 || b - u < tol2 {
                    d = if x < m { tol1 } else { -tol1 };
                }
                golden_step = false;
            }
        }
        if golden_step {
            e = if x < m { b - x } else { a - x };
            d = golden * e;
        }
        let u = if d.abs() >= tol1 { x + d } else if d > 0.0 { x + tol1 } else { x - tol1 };
        let fu = f(u);
        if fu <= fx {
            if u < x {
                b = x;
            } else {
                a = x;
            }
            v = w;
            fv = fw;
            w = x;
            fw = fx;
            x = u;
            fx = fu;
        } else {
            if u < x {
                a = u;
            } else {
                b = u;
            }
            if fu <= fw || w == x {
                v = w;
                fv = fw;
                w = u;
                fw = fu;
            } else if fu <= fv || v == x || v == w {
                v = u;
                fv = fu;
            }
        }
    }
    (x, fx)
}

/// Hessian by central differences of an analytic gradient.
pub fn hessian_from_gradient<G>(mut grad: G, x: &DVector<f64>, rel_step: f64) -> Result<DMatrix<f64>>
where
    G: FnMut(&DVector<f64>) -> Result<DVector<f64>>,
{
    let n = x.len();
    let mut hess = DMatrix::zeros(n, n);
    for k in 0..n {
        let h = rel_step * x[k].abs().max(1.0);
        let mut up = x.clone();
        up[k] += h;
        let mut dn = x.clone();
        dn[k] -= h;
        let col = (grad(&up)? - grad(&dn)?) / (2.0 * h);
        hess.set_column(k, &col);
    }
    symmetrize(&mut hess);
    Ok(hess)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bfgs_minimizes_rosenbrock() {
        let fg = |x: &DVector<f64>| {
            let (a, b) = (x[0], x[1]);
            let f = (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2);
            let g = DVector::from_vec(vec![-2.0 * (1.0 - a) - 400.0 * a * (b - a * a), 200.0 * (b - a * a)]);
            Ok((f, g))
        };
        let r = bfgs(fg, DVector::from_vec(vec![-1.2, 1.0]), &BfgsOptions { gtol: 1e-9, ..Default::default() })
            .unwrap();
        assert!(r.converged);
        assert!((r.x[0] - 1.0).abs() < 1e-6 && (r.x[1] - 1.0).abs() < 1e-6);
        assert!(r.trace.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn brent_finds_parabola_minimum() {
        let (x, fx) = brent_minimize(|x| (x - 0.3).powi(2) + 2.0, -5.0, 5.0, 1e-10, 200);
        assert!((x - 0.3).abs() < 1e-8);
        assert!((fx - 2.0).abs() < 1e-14);
        let (x, _) = brent_minimize(|x| x, 1.0, 4.0, 1e-10, 200);
        assert!((x - 1.0).abs() < 1e-8);
    }

    #[test]
    fn hessian_of_quadratic() {
        let a = DMatrix::from_row_slice(2, 2, &[3.0, 1.0, 1.0, 2.0]);
        let g = |x: &DVector<f64>| Ok(&a * x);
        let h = hessian_from_gradient(g, &DVector::from_vec(vec![0.4, -2.0]), 1e-4).unwrap();
        assert!((h - &a).amax() < 1e-9);
    }
}
