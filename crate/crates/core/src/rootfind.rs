//! Derivative-free bracketed root finding.

use crate::error::{Error, Result};

/// Outcome of a bracketed solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Root {
    pub x: f64,
    pub residual: f64,
    pub iterations: usize,
}

/// Bisection on a sign change of `f` over `[lo, hi]`.
///
/// Stops once the bracket is narrower than `x_tol` or `|f| <= f_tol`.
/// Exceeding `max_iter` is reported as a domain error so callers can
/// rewrap it with their own context.
pub fn bisect<F>(mut f: F, lo: f64, hi: f64, x_tol: f64, f_tol: f64, max_iter: usize) -> Result<Root>
where
    F: FnMut(f64) -> f64,
{
    let (mut a, mut b) = (lo, hi);
    let mut fa = f(a);
    let fb = f(b);
    if !fa.is_finite() || !fb.is_finite() {
        return Err(Error::domain("objective is not finite at the bracket ends"));
    }
    if fa == 0.0 {
        return Ok(Root { x: a, residual: 0.0, iterations: 0 });
    }
    if fb == 0.0 {
        return Ok(Root { x: b, residual: 0.0, iterations: 0 });
    }
    if fa.signum() == fb.signum() {
        return Err(Error::domain(format!(
            "no sign change on [{lo}, {hi}]: f(lo)={fa:.6e}, f(hi)={fb:.6e}"
        )));
    }
    for it in 1..=max_iter {
        let m = 0.5 * (a + b);
        let fm = f(m);
        if fm == 0.0 || fm.abs() <= f_tol || (b - a) * 0.5 < x_tol {
            return Ok(Root { x: m, residual: fm, iterations: it });
        }
        if fm.signum() == fa.signum() {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
    }
    Err(Error::domain(format!(
        "bisection did not converge in {max_iter} iterations (bracket [{a}, {b}])"
    )))
}

/// Scan `n` equal sub-intervals of `[lo, hi]` and return the first one where
/// `f` changes sign in the requested direction (`rising` = negative to positive).
pub fn scan_bracket<F>(mut f: F, lo: f64, hi: f64, n: usize, rising: bool) -> Option<(f64, f64)>
where
    F: FnMut(f64) -> f64,
{
    let step = (hi - lo) / n as f64;
    let mut x0 = lo;
    let mut f0 = f(x0);
    for i in 1..=n {
        let x1 = lo + step * i as f64;
        let f1 = f(x1);
        let crosses = if rising { f0 < 0.0 && f1 >= 0.0 } else { f0 > 0.0 && f1 <= 0.0 };
        if crosses {
            return Some((x0, x1));
        }
        x0 = x1;
        f0 = f1;
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_sqrt_two() {
        let r = bisect(|x| x * x - 2.0, 0.0, 2.0, 1e-14, 0.0, 200).unwrap();
        assert!((r.x - 2f64.sqrt()).abs() < 1e-13);
    }

    #[test]
    fn rejects_missing_sign_change() {
        assert!(bisect(|x| x * x + 1.0, -1.0, 1.0, 1e-9, 0.0, 100).is_err());
    }

    #[test]
    fn iteration_cap_is_an_error() {
        assert!(bisect(|x| x - 0.3, 0.0, 1.0, 1e-300, 0.0, 5).is_err());
    }

    #[test]
    fn scan_respects_direction() {
        let f = |x: f64| x.sin();
        let (a, b) = scan_bracket(f, 0.1, 6.2, 16, false).unwrap();
        assert!(a < std::f64::consts::PI && b >= std::f64::consts::PI);
        let (a, b) = scan_bracket(f, 0.1, 6.5, 16, true).unwrap();
        assert!(a < 2.0 * std::f64::consts::PI && b >= 2.0 * std::f64::consts::PI);
    }
}
