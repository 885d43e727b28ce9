use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{check_depth, Jet, Scalar};
use crate::error::{Error, Result};

/// Leaf symbol of a bracket word.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Generator {
    /// Horizontal frame field `h_i` (zero-based index).
    Horizontal(usize),
    /// The Liouville field `y^i d/dy^i`.
    Liouville,
    /// The spray field itself.
    Spray,
}

/// How a vector field arose: a frame field or a bracket of two words.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BracketWord {
    Leaf(Generator),
    Bracket(Box<BracketWord>, Box<BracketWord>),
}

impl BracketWord {
    pub fn h(i: usize) -> BracketWord {
        BracketWord::Leaf(Generator::Horizontal(i))
    }

    pub fn bracket(a: &BracketWord, b: &BracketWord) -> BracketWord {
        BracketWord::Bracket(Box::new(a.clone()), Box::new(b.clone()))
    }

    /// Tree height; leaves have depth 0.
    pub fn depth(&self) -> usize {
        match self {
            BracketWord::Leaf(_) => 0,
            BracketWord::Bracket(a, b) => 1 + a.depth().max(b.depth()),
        }
    }

    /// True when every horizontal leaf index is below `n`.
    pub fn is_valid_for(&self, n: usize) -> bool {
        match self {
            BracketWord::Leaf(Generator::Horizontal(i)) => *i < n,
            BracketWord::Leaf(_) => true,
            BracketWord::Bracket(a, b) => a.is_valid_for(n) && b.is_valid_for(n),
        }
    }
}

impl fmt::Display for BracketWord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BracketWord::Leaf(Generator::Horizontal(i)) => write!(f, "h{}", i + 1),
            BracketWord::Leaf(Generator::Liouville) => f.write_str("C"),
            BracketWord::Leaf(Generator::Spray) => f.write_str("S"),
            BracketWord::Bracket(a, b) => write!(f, "[{a},{b}]"),
        }
    }
}

type FieldFn = dyn Fn(&[Jet]) -> Result<Vec<Jet>> + Send + Sync;

/// A vector field on the slit tangent space, evaluable at chart points.
///
/// The closure receives the `2n` coordinates seeded as jets of some degree
/// `D` and returns the `2n` components (in the `d/dx`, `d/dy` frame) as jets
/// of degree at least `D - required_depth`.
#[derive(Clone)]
pub struct EvaluableField {
    word: BracketWord,
    required_depth: usize,
    eval: Arc<FieldFn>,
}

impl fmt::Debug for EvaluableField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("EvaluableField")
            .field("word", &self.word.to_string())
            .field("required_depth", &self.required_depth)
            .finish()
    }
}

impl EvaluableField {
    pub fn new(
        word: BracketWord,
        required_depth: usize,
        eval: impl Fn(&[Jet]) -> Result<Vec<Jet>> + Send + Sync + 'static,
    ) -> EvaluableField {
        EvaluableField { word, required_depth, eval: Arc::new(eval) }
    }

    pub fn word(&self) -> &BracketWord {
        &self.word
    }

    pub fn required_depth(&self) -> usize {
        self.required_depth
    }

    /// Components as jets at seeded coordinates.
    pub fn expand(&self, z: &[Jet]) -> Result<Vec<Jet>> {
        (self.eval)(z)
    }

    /// The `2n` component values at `point`.
    pub fn eval(&self, point: &[f64], max_depth: usize) -> Result<DVector<f64>> {
        check_depth(self.required_depth, max_depth)?;
        let z = Jet::seed(point, self.required_depth);
        let comps = self.expand(&z)?;
        let values = comps.iter().map(|c| c.value()).collect::<Vec<_>>();
        finite_vector(values)
    }

    /// `(JacY) X - (JacX) Y`, the Lie bracket of two fields.
    pub fn bracket(&self, other: &EvaluableField) -> EvaluableField {
        let (x, y) = (self.clone(), other.clone());
        EvaluableField::new(
            BracketWord::bracket(&self.word, &other.word),
            1 + self.required_depth.max(other.required_depth),
            move |z| bracket_jets(&x.expand(z)?, &y.expand(z)?),
        )
    }
}

fn finite_vector(values: Vec<f64>) -> Result<DVector<f64>> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(DVector::from_vec(values))
    } else {
        Err(Error::Domain { expr: "vector field".into(), reason: "non-finite component".into() })
    }
}

/// Lie bracket of two fields given as component jets over the same seed.
///
/// The result is one degree lower than the lower of the two inputs.
pub fn bracket_jets(x: &[Jet], y: &[Jet]) -> Result<Vec<Jet>> {
    assert_eq!(x.len(), y.len(), "bracket of fields of different dimension");
    let dim = x.len();
    let dx: Vec<Vec<Jet>> = x.iter().map(|c| (0..dim).map(|b| c.derivative(b)).collect()).collect::<Result<_>>()?;
    let dy: Vec<Vec<Jet>> = y.iter().map(|c| (0..dim).map(|b| c.derivative(b)).collect()).collect::<Result<_>>()?;
    let mut out = Vec::with_capacity(dim);
    for a in 0..dim {
        let mut acc = x[0].mul(&dy[a][0]).sub(&y[0].mul(&dx[a][0]));
        for b in 1..dim {
            acc = acc.add(&x[b].mul(&dy[a][b])).sub(&y[b].mul(&dx[a][b]));
        }
        out.push(acc);
    }
    Ok(out)
}

/// Entry `(i, j)` is `dX^i/dz^j` over the `2n` chart coordinates.
pub fn jacobian(field: &EvaluableField, point: &[f64], max_depth: usize) -> Result<DMatrix<f64>> {
    let degree = field.required_depth + 1;
    check_depth(degree, max_depth)?;
    let z = Jet::seed(point, degree);
    let comps = field.expand(&z)?;
    let dim = point.len();
    let mut m = DMatrix::zeros(comps.len(), dim);
    for (i, c) in comps.iter().enumerate() {
        for j in 0..dim {
            m[(i, j)] = c.d(j)?;
        }
    }
    Ok(m)
}
