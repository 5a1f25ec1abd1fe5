//! Golden-section search for a minimum of a unimodal function on an interval.

const INV_PHI: f64 = 0.618_033_988_749_894_9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Minimum {
    pub x: f64,
    pub value: f64,
    pub evaluations: usize,
    /// Final bracket width reached the tolerance before `max_evals` ran out.
    pub converged: bool,
}

/// Minimises `f` on `[a, b]` until the bracket is narrower than `tol`.
///
/// `f` may fail; the first error aborts the search. Infinite values are
/// treated as ordinary (large) values.
pub fn minimize<E>(
    mut f: impl FnMut(f64) -> Result<f64, E>,
    mut a: f64,
    mut b: f64,
    tol: f64,
    max_evals: usize,
) -> Result<Minimum, E> {
    if a > b {
        std::mem::swap(&mut a, &mut b);
    }
    let mut x1 = b - INV_PHI * (b - a);
    let mut x2 = a + INV_PHI * (b - a);
    let mut f1 = f(x1)?;
    let mut f2 = f(x2)?;
    let mut evaluations = 2;
    while b - a > tol && evaluations < max_evals {
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - INV_PHI * (b - a);
            f1 = f(x1)?;
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + INV_PHI * (b - a);
            f2 = f(x2)?;
        }
        evaluations += 1;
    }
    let (x, value) = if f1 <= f2 { (x1, f1) } else { (x2, f2) };
    Ok(Minimum {
        x,
        value,
        evaluations,
        converged: b - a <= tol,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::convert::Infallible;

    #[test]
    fn parabola() {
        let m = minimize(
            |x| Ok::<_, Infallible>((x - 0.3) * (x - 0.3) + 2.0),
            -1.0,
            4.0,
            1e-10,
            500,
        )
        .unwrap();
        assert!((m.x - 0.3).abs() < 1e-7);
        assert!((m.value - 2.0).abs() < 1e-15);
        assert!(m.converged);
    }

    #[test]
    fn minimum_at_edge() {
        let m = minimize(|x: f64| Ok::<_, Infallible>(x), 1.0, 2.0, 1e-12, 500).unwrap();
        assert!((m.x - 1.0).abs() < 1e-11);
    }

    #[test]
    fn budget_exhausted() {
        let m = minimize(|x: f64| Ok::<_, Infallible>(x.cos()), 0.0, 6.0, 1e-14, 5).unwrap();
        assert!(!m.converged);
        assert_eq!(m.evaluations, 5);
    }

    #[test]
    fn error_propagates() {
        let r = minimize(
            |x: f64| if x > 1.0 { Err("boom") } else { Ok(x) },
            0.0,
            3.0,
            1e-6,
            100,
        );
        assert_eq!(r, Err("boom"));
    }
}
