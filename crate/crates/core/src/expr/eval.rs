use super::{BinaryOp, ExprAst, Func, Node, UnaryOp, Var};
use crate::ad::Scalar;
use crate::error::Error;

/// Evaluation failure tagged with the smallest subexpression that raised it.
#[derive(Debug, Clone, PartialEq)]
pub enum EvalError {
    Domain { expr: String, reason: &'static str },
    Unbound(String),
}

impl From<EvalError> for Error {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Domain { expr, reason } => Error::Domain { expr, reason: reason.to_string() },
            EvalError::Unbound(name) => Error::UnboundParameter(name),
        }
    }
}

impl ExprAst {
    /// Evaluates at `(x, y)` with `params[k]` bound to `self.params()[k]`.
    ///
    /// `x` and `y` must both have length `n`; a jet point yields a jet whose
    /// derivative payload follows the chain rule.
    pub fn eval<T: Scalar>(&self, x: &[T], y: &[T], params: &[T]) -> Result<T, EvalError> {
        assert_eq!(x.len(), self.n, "x has wrong dimension");
        assert_eq!(y.len(), self.n, "y has wrong dimension");
        if params.len() < self.params.len() {
            return Err(EvalError::Unbound(self.params[params.len()].clone()));
        }
        eval_node(&self.root, x, y, params)
    }

    /// Plain-real evaluation with parameters bound by name.
    pub fn eval_f64(&self, x: &[f64], y: &[f64], bindings: &[(&str, f64)]) -> Result<f64, EvalError> {
        let params = self.bind(|name| bindings.iter().find(|(k, _)| *k == name).map(|(_, v)| *v))?;
        self.eval(x, y, &params)
    }

    /// Resolves the parameter table through `lookup`, in slot order.
    pub fn bind(&self, lookup: impl Fn(&str) -> Option<f64>) -> Result<Vec<f64>, EvalError> {
        self.params.iter().map(|p| lookup(p).ok_or_else(|| EvalError::Unbound(p.clone()))).collect()
    }
}

fn eval_node<T: Scalar>(node: &Node, x: &[T], y: &[T], params: &[T]) -> Result<T, EvalError> {
    let fail = |reason: &'static str| EvalError::Domain { expr: node.to_string(), reason };
    let out = match node {
        Node::Const(c) => x.first().or(y.first()).map(|t| t.lift(*c)).ok_or_else(|| fail("empty chart"))?,
        Node::Var(Var::X(i)) => x[*i].clone(),
        Node::Var(Var::Y(i)) => y[*i].clone(),
        Node::Param(_, slot) => params[*slot].clone(),
        Node::Unary(UnaryOp::Neg, a) => eval_node(a, x, y, params)?.neg(),
        Node::Call(f, a) => {
            let a = eval_node(a, x, y, params)?;
            match f {
                Func::Sqrt => a.sqrt(),
                Func::Sin => a.sin(),
                Func::Cos => a.cos(),
                Func::Exp => a.exp(),
                Func::Log => a.ln(),
                Func::Abs => a.abs(),
            }
            .map_err(fail)?
        }
        Node::Binary(op, a, b) => {
            let a = eval_node(a, x, y, params)?;
            let b = eval_node(b, x, y, params)?;
            match op {
                BinaryOp::Add => a.add(&b),
                BinaryOp::Sub => a.sub(&b),
                BinaryOp::Mul => a.mul(&b),
                BinaryOp::Div => a.div(&b).map_err(fail)?,
                BinaryOp::Pow => a.pow(&b).map_err(fail)?,
            }
        }
    };
    if !out.value().is_finite() {
        return Err(fail("non-finite result"));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ad::Jet;
    use crate::expr::parse;

    const NONE: &[&str] = &[];

    #[test]
    fn example_two_coefficient_value() {
        let g1 = parse("y1^2/(2*x2)", 2, NONE).unwrap();
        assert_eq!(g1.eval_f64(&[0.0, 1.0], &[1.0, 1.0], &[]).unwrap(), 0.5);
    }

    #[test]
    fn example_one_phi_value() {
        let phi = parse("sqrt(x2*y1^2+y2^2)", 2, NONE).unwrap();
        let v = phi.eval_f64(&[0.0, 1.0], &[1.0, 1.0], &[]).unwrap();
        assert!((v - 1.41421356).abs() < 1e-8);
    }

    #[test]
    fn constants_are_constant() {
        let c = parse("3.25", 2, NONE).unwrap();
        assert_eq!(c.eval_f64(&[9.0, -2.0], &[0.1, 4.0], &[]).unwrap(), 3.25);
    }

    #[test]
    fn domain_errors_name_the_subexpression() {
        let e = parse("x1 + sqrt(x2 - 3)", 2, NONE).unwrap();
        match e.eval_f64(&[0.0, 1.0], &[1.0, 1.0], &[]) {
            Err(EvalError::Domain { expr, .. }) => assert_eq!(expr, "sqrt(x2 - 3)"),
            other => panic!("{other:?}"),
        }
        let e = parse("y1/x1", 1, NONE).unwrap();
        assert!(matches!(e.eval_f64(&[0.0], &[1.0], &[]), Err(EvalError::Domain { .. })));
        let e = parse("log(x1)", 1, NONE).unwrap();
        assert!(e.eval_f64(&[-1.0], &[1.0], &[]).is_err());
        let e = parse("exp(x1)", 1, NONE).unwrap();
        assert!(e.eval_f64(&[1e6], &[1.0], &[]).is_err());
    }

    #[test]
    fn unbound_parameter() {
        let e = parse("mu*x1", 1, &["mu"]).unwrap();
        assert_eq!(e.eval_f64(&[1.0], &[1.0], &[]), Err(EvalError::Unbound("mu".into())));
        assert_eq!(e.eval(&[1.0], &[1.0], &[]), Err(EvalError::Unbound("mu".into())));
    }

    #[test]
    fn jet_value_equals_plain_value_exactly() {
        let src = "sqrt(x2*y1^2+y2^2)*y1 + y1*y2/(2*x2) - exp(-x1)*cos(y2)^3 + abs(x1)^1.5 + log(x2)";
        let e = parse(src, 2, NONE).unwrap();
        let (x, y) = ([0.3, 1.7], [-0.4, 0.9]);
        let plain = e.eval(&x, &y, &[]).unwrap();
        for degree in [0, 1, 3, 5] {
            let z = Jet::seed(&[x[0], x[1], y[0], y[1]], degree);
            let jet = e.eval(&z[..2], &z[2..], &[]).unwrap();
            assert_eq!(jet.value(), plain, "degree {degree}");
        }
    }

    #[test]
    fn varying_exponent_uses_exp_log() {
        let e = parse("x1^y1", 1, NONE).unwrap();
        let z = Jet::seed(&[2.0, 3.0], 1);
        let j = e.eval(&z[..1], &z[1..], &[]).unwrap();
        assert!((j.value() - 8.0).abs() < 1e-12);
        assert!((j.d(0).unwrap() - 12.0).abs() < 1e-12);
        assert!((j.d(1).unwrap() - 8.0 * 2f64.ln()).abs() < 1e-12);
    }
}
