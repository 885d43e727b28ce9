//! Forward-mode differentiation by truncated Taylor expansion.
//!
//! A [`Jet`] carries the value and every partial derivative up to its degree
//! over a fixed set of seeded variables. Each derivative taken (a connection
//! coefficient, a curvature term, a Lie bracket) consumes one degree, so the
//! configured maximum depth bounds how deep a bracket word can be evaluated.

mod field;
mod jet;
mod scalar;

pub use field::{bracket_jets, jacobian, BracketWord, EvaluableField, Generator};
pub use jet::{Jet, JetSpace};
pub use scalar::Scalar;

use crate::error::{Error, Result};
use crate::expr::ExprAst;

/// Default maximum derivative depth.
pub const DEFAULT_MAX_DEPTH: usize = 8;

pub(crate) fn check_depth(requested: usize, max: usize) -> Result<()> {
    if requested > max {
        Err(Error::DepthExceeded { requested, max })
    } else {
        Ok(())
    }
}

/// An expression with its parameters bound, viewed as a scalar on the stacked
/// chart coordinates `z = (x, y)`.
#[derive(Debug, Clone)]
pub struct BoundExpr<'a> {
    pub expr: &'a ExprAst,
    pub params: &'a [f64],
}

impl BoundExpr<'_> {
    pub fn expand(&self, z: &[Jet]) -> Result<Jet> {
        let n = self.expr.dimension();
        let params: Vec<Jet> = self.params.iter().map(|&p| z[0].lift(p)).collect();
        Ok(self.expr.eval(&z[..n], &z[n..2 * n], &params)?)
    }
}

/// Mixed partial of `f` at `point`; `exponents[k]` is the order along `z_k`.
pub fn partial(
    f: impl Fn(&[Jet]) -> Result<Jet>,
    point: &[f64],
    exponents: &[u8],
    max_depth: usize,
) -> Result<f64> {
    assert_eq!(point.len(), exponents.len(), "multi-index length must match the point");
    let order: usize = exponents.iter().map(|&k| usize::from(k)).sum();
    check_depth(order, max_depth)?;
    let z = Jet::seed(point, order);
    f(&z)?.partial(exponents)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse;

    #[test]
    fn partial_of_quadratic() {
        let e = parse("y1^2", 2, &[]).unwrap();
        let f = |z: &[Jet]| BoundExpr { expr: &e, params: &[] }.expand(z);
        for p in [[0.0, 1.0, 1.0, 1.0], [3.0, -2.0, 0.25, 9.0]] {
            assert_eq!(partial(f, &p, &[0, 0, 2, 0], 8).unwrap(), 2.0);
        }
        assert!(matches!(partial(f, &[0.0; 4], &[0, 0, 5, 4], 8), Err(Error::DepthExceeded { .. })));
    }

    #[test]
    fn symmetric_mixed_partials_are_identical() {
        let e = parse("sin(x1*y2)*exp(x2) + sqrt(y1^2 + y2^2)*x1", 2, &[]).unwrap();
        let f = |z: &[Jet]| BoundExpr { expr: &e, params: &[] }.expand(z);
        let p = [0.4, -0.3, 1.1, 0.6];
        // one monomial per unordered index pair, so (i,j) and (j,i) read the same slot
        for i in 0..4 {
            for j in 0..4 {
                let mut a = [0u8; 4];
                a[i] += 1;
                a[j] += 1;
                let mut b = [0u8; 4];
                b[j] += 1;
                b[i] += 1;
                assert_eq!(partial(f, &p, &a, 8).unwrap(), partial(f, &p, &b, 8).unwrap());
            }
        }
    }
}
