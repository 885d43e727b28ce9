//! Objects induced by a spray: the spray and Liouville fields, the nonlinear
//! connection `N^j_i = dG^j/dy^i`, the horizontal frame
//! `h_i = d/dx^i - N^j_i d/dy^j`, curvature and the Jacobi endomorphism.
//!
//! Vectors on the tangent bundle are stacked as `(x-block, y-block)`, `2n`
//! components in the coordinate frame.
//!
//! Curvature follows `R^i_jk = dN^i_j/dx^k - dN^i_k/dx^j` with horizontal
//! (delta) derivatives. With this index placement the vertical part of the
//! frame bracket satisfies `v[h_j, h_k] = R^i_jk d/dy^i`; the operator
//! `R(h_j, h_k) = -v[h_j, h_k]` therefore has components `-R^i_jk`. Only
//! sign-free consequences (vanishing, rank, image) are used downstream.

use std::collections::BTreeMap;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::ad::{check_depth, BracketWord, EvaluableField, Generator, Jet, Scalar};
use crate::error::{Error, Result};
use crate::expr::{parse, ExprAst};

/// A point `(x, y)` of the chart on the tangent bundle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChartPoint {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl ChartPoint {
    pub fn new(x: impl Into<Vec<f64>>, y: impl Into<Vec<f64>>) -> ChartPoint {
        ChartPoint { x: x.into(), y: y.into() }
    }

    pub fn dim(&self) -> usize {
        self.x.len()
    }

    /// `(x1..xn, y1..yn)`.
    pub fn stacked(&self) -> Vec<f64> {
        self.x.iter().chain(&self.y).copied().collect()
    }

    pub fn from_stacked(z: &[f64]) -> ChartPoint {
        let n = z.len() / 2;
        ChartPoint { x: z[..n].to_vec(), y: z[n..].to_vec() }
    }
}

/// One-coordinate interval constraint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Interval {
    pub min: f64,
    pub max: f64,
    #[serde(default)]
    pub min_strict: bool,
    #[serde(default)]
    pub max_strict: bool,
}

impl Interval {
    pub fn closed(min: f64, max: f64) -> Interval {
        Interval { min, max, min_strict: false, max_strict: false }
    }

    pub fn open(min: f64, max: f64) -> Interval {
        Interval { min, max, min_strict: true, max_strict: true }
    }

    pub fn contains(&self, v: f64) -> bool {
        let lo = if self.min_strict { v > self.min } else { v >= self.min };
        let hi = if self.max_strict { v < self.max } else { v <= self.max };
        lo && hi
    }

    pub fn is_nonempty(&self) -> bool {
        self.min.is_finite()
            && self.max.is_finite()
            && (self.min < self.max || (self.min == self.max && !self.min_strict && !self.max_strict))
    }
}

/// Open box in the chart, with `y != 0` always implied.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Domain {
    pub x: Vec<Interval>,
    pub y: Vec<Interval>,
}

impl Domain {
    pub fn contains(&self, p: &ChartPoint) -> bool {
        p.x.len() == self.x.len()
            && p.y.len() == self.y.len()
            && self.x.iter().zip(&p.x).all(|(b, v)| b.contains(*v))
            && self.y.iter().zip(&p.y).all(|(b, v)| b.contains(*v))
            && p.y.iter().any(|v| *v != 0.0)
    }

    pub fn contains_base(&self, x: &[f64]) -> bool {
        x.len() == self.x.len() && self.x.iter().zip(x).all(|(b, v)| b.contains(*v))
    }
}

/// A spray given by its coefficient expressions `G^i(x, y)`.
#[derive(Debug, Clone)]
pub struct SprayModel {
    name: String,
    n: usize,
    domain: Domain,
    coefficients: Vec<ExprAst>,
    params: BTreeMap<String, f64>,
}

impl SprayModel {
    /// Parses the coefficient sources against the parameter names in `params`.
    pub fn new(
        name: impl Into<String>,
        domain: Domain,
        coefficients: &[&str],
        params: BTreeMap<String, f64>,
    ) -> Result<SprayModel> {
        let n = coefficients.len();
        if n < 1 {
            return Err(Error::Config("a spray needs at least one coefficient".into()));
        }
        if domain.x.len() != n || domain.y.len() != n {
            return Err(Error::Config(format!("domain must constrain {n} x and {n} y coordinates")));
        }
        let names: Vec<&str> = params.keys().map(String::as_str).collect();
        let coefficients = coefficients.iter().map(|src| parse(src, n, &names)).collect::<Result<Vec<_>>>()?;
        Ok(SprayModel { name: name.into(), n, domain, coefficients, params })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn coefficients(&self) -> &[ExprAst] {
        &self.coefficients
    }

    pub fn params(&self) -> &BTreeMap<String, f64> {
        &self.params
    }

    /// Parameter names, for parsing further expressions over this model.
    pub fn param_names(&self) -> Vec<&str> {
        self.params.keys().map(String::as_str).collect()
    }

    /// Parses an expression (e.g. a Lagrangian) over this model's chart.
    pub fn parse(&self, source: &str) -> Result<ExprAst> {
        parse(source, self.n, &self.param_names())
    }

    /// Evaluates an expression parsed by [`SprayModel::parse`] at jet coordinates.
    pub fn eval_expr<T: Scalar>(&self, expr: &ExprAst, z: &[T]) -> Result<T> {
        let params: Vec<T> = expr
            .params()
            .iter()
            .map(|p| self.params.get(p).map(|v| z[0].lift(*v)).ok_or_else(|| Error::UnboundParameter(p.clone())))
            .collect::<Result<_>>()?;
        Ok(expr.eval(&z[..self.n], &z[self.n..2 * self.n], &params)?)
    }

    pub fn check_admissible(&self, p: &ChartPoint) -> Result<()> {
        if p.dim() != self.n || p.y.len() != self.n {
            return Err(Error::Inadmissible(format!("expected {} coordinates per block", self.n)));
        }
        if !self.domain.contains(p) {
            return Err(Error::Inadmissible(format!("{p:?} lies outside the chart domain")));
        }
        Ok(())
    }

    /// Seeds the point and expands every `G^i` to `degree`.
    pub fn expand(&self, p: &ChartPoint, degree: usize) -> Result<Expansion> {
        self.check_admissible(p)?;
        let z = Jet::seed(&p.stacked(), degree);
        self.expand_seeded(z)
    }

    /// Expands the coefficients at already seeded coordinates.
    pub fn expand_seeded(&self, z: Vec<Jet>) -> Result<Expansion> {
        let g = self.coefficients.iter().map(|e| self.eval_expr(e, &z)).collect::<Result<Vec<_>>>()?;
        Ok(Expansion { n: self.n, z, g })
    }

    /// Plain-real coefficient values.
    pub fn g_values(&self, p: &ChartPoint) -> Result<Vec<f64>> {
        let z = p.stacked();
        self.coefficients.iter().map(|e| self.eval_expr(e, &z)).collect()
    }

    /// Connection matrix `N[(j, i)] = N^j_i` at plain points, from a first-order expansion.
    pub fn connection(&self, p: &ChartPoint) -> Result<DMatrix<f64>> {
        self.check_admissible(p)?;
        self.connection_unchecked(p)
    }

    /// [`SprayModel::connection`] without the domain check, for integrators
    /// whose fibre coordinates may leave the sampling box.
    pub fn connection_unchecked(&self, p: &ChartPoint) -> Result<DMatrix<f64>> {
        let e = self.expand_seeded(Jet::seed(&p.stacked(), 1))?;
        let mut m = DMatrix::zeros(self.n, self.n);
        for j in 0..self.n {
            for i in 0..self.n {
                m[(j, i)] = e.g[j].d(self.n + i)?;
            }
        }
        Ok(m)
    }

    /// The spray `S = y^i d/dx^i - 2G^i d/dy^i` as an evaluable field.
    pub fn spray_field(self: &Arc<Self>) -> EvaluableField {
        let model = self.clone();
        EvaluableField::new(BracketWord::Leaf(Generator::Spray), 0, move |z| Ok(model.expand_seeded(z.to_vec())?.spray()))
    }

    /// The Liouville field `C = y^i d/dy^i`.
    pub fn liouville_field(self: &Arc<Self>) -> EvaluableField {
        let n = self.n;
        EvaluableField::new(BracketWord::Leaf(Generator::Liouville), 0, move |z| Ok(liouville(z, n)))
    }

    /// The horizontal frame field `h_i`.
    pub fn horizontal_field(self: &Arc<Self>, i: usize) -> EvaluableField {
        assert!(i < self.n);
        let model = self.clone();
        EvaluableField::new(BracketWord::h(i), 1, move |z| model.expand_seeded(z.to_vec())?.horizontal(i))
    }

    pub fn horizontal_frame(self: &Arc<Self>) -> Vec<EvaluableField> {
        (0..self.n).map(|i| self.horizontal_field(i)).collect()
    }
}

fn liouville(z: &[Jet], n: usize) -> Vec<Jet> {
    let zero = z[0].lift(0.0);
    (0..n).map(|_| zero.clone()).chain(z[n..2 * n].iter().cloned()).collect()
}

/// Coefficients of a spray expanded around one point.
#[derive(Debug, Clone)]
pub struct Expansion {
    n: usize,
    z: Vec<Jet>,
    g: Vec<Jet>,
}

impl Expansion {
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn degree(&self) -> usize {
        self.z[0].degree()
    }

    pub fn coords(&self) -> &[Jet] {
        &self.z
    }

    pub fn g(&self) -> &[Jet] {
        &self.g
    }

    pub fn spray(&self) -> Vec<Jet> {
        let n = self.n;
        self.z[n..2 * n].iter().cloned().chain(self.g.iter().map(|g| g.scale(-2.0))).collect()
    }

    pub fn liouville(&self) -> Vec<Jet> {
        liouville(&self.z, self.n)
    }

    /// `N^j_i` as jets, one degree below the expansion.
    pub fn connection(&self, j: usize, i: usize) -> Result<Jet> {
        self.g[j].derivative(self.n + i)
    }

    pub fn horizontal(&self, i: usize) -> Result<Vec<Jet>> {
        let n = self.n;
        check_depth(1, self.degree())?;
        let zero = self.z[0].lift(0.0).truncate(self.degree() - 1);
        let mut out = Vec::with_capacity(2 * n);
        for k in 0..n {
            out.push(if k == i { zero.lift(1.0) } else { zero.clone() });
        }
        for j in 0..n {
            out.push(self.connection(j, i)?.neg());
        }
        Ok(out)
    }

    pub fn horizontal_frame(&self) -> Result<Vec<Vec<Jet>>> {
        (0..self.n).map(|i| self.horizontal(i)).collect()
    }
}

/// Stacks jet components' values into a vector.
pub fn values(components: &[Jet]) -> DVector<f64> {
    DVector::from_iterator(components.len(), components.iter().map(|c| c.value()))
}

/// `y^j dG^i/dy^j - 2 G^i`.
pub fn homogeneity_residual(model: &SprayModel, p: &ChartPoint) -> Result<Vec<f64>> {
    let e = model.expand(p, 1)?;
    let n = model.dim();
    (0..n)
        .map(|i| {
            let euler: f64 = (0..n).map(|j| p.y[j] * e.g[i].d(n + j).unwrap_or(0.0)).sum();
            Ok(euler - 2.0 * e.g[i].value())
        })
        .collect()
}

/// Frame data at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct FramePack {
    pub spray: DVector<f64>,
    pub liouville: DVector<f64>,
    /// `connection[(j, i)] = N^j_i`.
    pub connection: DMatrix<f64>,
    pub horizontal: Vec<DVector<f64>>,
}

pub fn frame_pack(model: &SprayModel, p: &ChartPoint) -> Result<FramePack> {
    let e = model.expand(p, 1)?;
    let n = model.dim();
    let mut connection = DMatrix::zeros(n, n);
    for j in 0..n {
        for i in 0..n {
            connection[(j, i)] = e.g[j].d(n + i)?;
        }
    }
    let horizontal = (0..n)
        .map(|i| {
            let mut h = DVector::zeros(2 * n);
            h[i] = 1.0;
            for j in 0..n {
                h[n + j] = -connection[(j, i)];
            }
            h
        })
        .collect();
    Ok(FramePack { spray: values(&e.spray()), liouville: values(&e.liouville()), connection, horizontal })
}

/// `R^i_jk` at a point, stored as `r[(i * n + j) * n + k]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvatureData {
    pub n: usize,
    pub r: Vec<f64>,
}

impl CurvatureData {
    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.r[(i * self.n + j) * self.n + k]
    }

    /// `R^.jk` as a vertical vector in the stacked `2n` frame.
    pub fn vertical_vector(&self, j: usize, k: usize) -> DVector<f64> {
        let n = self.n;
        DVector::from_fn(2 * n, |a, _| if a < n { 0.0 } else { self.get(a - n, j, k) })
    }

    pub fn max_abs(&self) -> f64 {
        self.r.iter().fold(0.0, |m, v| m.max(f64::abs(*v)))
    }
}

pub fn curvature(model: &SprayModel, p: &ChartPoint) -> Result<CurvatureData> {
    let n = model.dim();
    let e = model.expand(p, 2)?;
    // conn[i][j] = N^i_j as first-order jets
    let conn: Vec<Vec<Jet>> =
        (0..n).map(|i| (0..n).map(|j| e.connection(i, j)).collect::<Result<Vec<_>>>()).collect::<Result<_>>()?;
    // delta[i][j][k] = dN^i_j / dx^k (horizontal derivative)
    let mut delta = vec![0.0; n * n * n];
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                let mut v = conn[i][j].d(k)?;
                for l in 0..n {
                    v -= conn[l][k].value() * conn[i][j].d(n + l)?;
                }
                delta[(i * n + j) * n + k] = v;
            }
        }
    }
    let mut r = vec![0.0; n * n * n];
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                r[(i * n + j) * n + k] = delta[(i * n + j) * n + k] - delta[(i * n + k) * n + j];
            }
        }
    }
    Ok(CurvatureData { n, r })
}

/// Jacobi endomorphism `Phi^i_j = y^k R^i_kj` with its traces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JacobiData {
    pub phi: Vec<Vec<f64>>,
    pub ricci: f64,
    pub rho: f64,
}

impl JacobiData {
    pub fn matrix(&self) -> DMatrix<f64> {
        let n = self.phi.len();
        DMatrix::from_fn(n, n, |i, j| self.phi[i][j])
    }
}

pub fn jacobi_from(curv: &CurvatureData, y: &[f64]) -> JacobiData {
    let n = curv.n;
    let phi: Vec<Vec<f64>> =
        (0..n).map(|i| (0..n).map(|j| (0..n).map(|k| y[k] * curv.get(i, k, j)).sum()).collect()).collect();
    let ricci: f64 = (0..n).map(|i| phi[i][i]).sum();
    let rho = if n > 1 { ricci / (n as f64 - 1.0) } else { 0.0 };
    JacobiData { phi, ricci, rho }
}

pub fn jacobi(model: &SprayModel, p: &ChartPoint) -> Result<JacobiData> {
    Ok(jacobi_from(&curvature(model, p)?, &p.y))
}

/// Result of trying to write `Phi = rho J - alpha (x) C`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsotropyOutcome {
    pub decomposes: bool,
    pub rho: f64,
    pub alpha: Vec<f64>,
    /// `|Phi - (rho Id - y alpha)|_F / max(|Phi|_F, 1)` at the best fit.
    pub residual: f64,
    /// `alpha(y) - rho`; vanishes when `rho` is the Ricci scalar.
    pub consistency: f64,
}

/// Least-squares fit of `Phi^i_j = rho delta^i_j - alpha_j y^i`.
pub fn isotropy_from(jac: &JacobiData, y: &[f64], tol: f64) -> IsotropyOutcome {
    let n = y.len();
    // unknowns: rho, alpha_1..alpha_n; one row per (i, j)
    let mut a = DMatrix::zeros(n * n, n + 1);
    let mut b = DVector::zeros(n * n);
    for i in 0..n {
        for j in 0..n {
            let row = i * n + j;
            a[(row, 0)] = if i == j { 1.0 } else { 0.0 };
            a[(row, 1 + j)] = -y[i];
            b[row] = jac.phi[i][j];
        }
    }
    let sol = crate::linalg::least_squares(&a, &b);
    let fit = &a * &sol;
    let phi_norm = b.norm();
    let residual = (&fit - &b).norm() / phi_norm.max(1.0);
    let rho = sol[0];
    let alpha: Vec<f64> = sol.iter().skip(1).copied().collect();
    let consistency = alpha.iter().zip(y).map(|(a, y)| a * y).sum::<f64>() - rho;
    IsotropyOutcome { decomposes: residual < tol, rho, alpha, residual, consistency }
}

pub fn isotropy_check(model: &SprayModel, p: &ChartPoint, tol: f64) -> Result<IsotropyOutcome> {
    Ok(isotropy_from(&jacobi(model, p)?, &p.y, tol))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_box(n: usize, x: Interval) -> Domain {
        Domain { x: vec![x; n], y: vec![Interval::closed(-2.0, 2.0); n] }
    }

    fn model(coeffs: &[&str]) -> SprayModel {
        let n = coeffs.len();
        SprayModel::new("test", unit_box(n, Interval::open(-5.0, 5.0)), coeffs, BTreeMap::new()).unwrap()
    }

    fn flat(n: usize) -> SprayModel {
        SprayModel::new("flat", unit_box(n, Interval::closed(-1.0, 1.0)), &vec!["0"; n], BTreeMap::new()).unwrap()
    }

    fn example2() -> SprayModel {
        SprayModel::new(
            "example-2",
            Domain { x: vec![Interval::closed(-2.0, 2.0), Interval::open(0.0, 3.0)], y: vec![Interval::closed(-2.0, 2.0); 2] },
            &["y1^2/(2*x2)", "0"],
            BTreeMap::new(),
        )
        .unwrap()
    }

    fn p0() -> ChartPoint {
        ChartPoint::new([0.0, 1.0], [1.0, 1.0])
    }

    #[test]
    fn homogeneity_of_quadratic_and_linear_coefficients() {
        let r = homogeneity_residual(&example2(), &p0()).unwrap();
        assert_eq!(r, vec![0.0, 0.0]);
        let m = model(&["y1", "0"]);
        assert_eq!(homogeneity_residual(&m, &p0()).unwrap(), vec![-1.0, 0.0]);
    }

    #[test]
    fn example_two_frame() {
        let f = frame_pack(&example2(), &p0()).unwrap();
        assert_eq!(f.spray.as_slice(), &[1.0, 1.0, -1.0, 0.0]);
        assert_eq!(f.connection, DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]));
        assert_eq!(f.horizontal[0].as_slice(), &[1.0, 0.0, -1.0, 0.0]);
        assert_eq!(f.horizontal[1].as_slice(), &[0.0, 1.0, 0.0, 0.0]);
        assert_eq!(f.liouville.as_slice(), &[0.0, 0.0, 1.0, 1.0]);
    }

    #[test]
    fn flat_frame_and_curvature() {
        let m = flat(3);
        let p = ChartPoint::new([0.1, 0.2, 0.3], [1.0, -1.0, 0.5]);
        let f = frame_pack(&m, &p).unwrap();
        assert_eq!(f.connection, DMatrix::zeros(3, 3));
        for i in 0..3 {
            let mut e = DVector::zeros(6);
            e[i] = 1.0;
            assert_eq!(f.horizontal[i], e);
        }
        assert_eq!(f.spray.as_slice(), &[1.0, -1.0, 0.5, 0.0, 0.0, 0.0]);
        let c = curvature(&m, &p).unwrap();
        assert_eq!(c.max_abs(), 0.0);
        let j = jacobi(&m, &p).unwrap();
        assert_eq!((j.ricci, j.rho), (0.0, 0.0));
        let iso = isotropy_check(&m, &p, 1e-8).unwrap();
        assert!(iso.decomposes);
        assert_eq!(iso.rho, 0.0);
        assert!(iso.alpha.iter().all(|a| *a == 0.0));
    }

    #[test]
    fn example_two_curvature_component() {
        let c = curvature(&example2(), &p0()).unwrap();
        // R^1_12 = -y1/(x2)^2 = -1, everything else but its mirror vanishes
        assert!((c.get(0, 0, 1) + 1.0).abs() < 1e-15);
        assert!((c.get(0, 1, 0) - 1.0).abs() < 1e-15);
        for (idx, v) in c.r.iter().enumerate() {
            if idx != 1 && idx != 2 {
                assert_eq!(*v, 0.0, "component {idx}");
            }
        }
    }

    #[test]
    fn curvature_is_antisymmetric_exactly() {
        let m = model(&["sqrt(x2*y1^2+y2^2)*y1 + y1*y2/(2*x2)", "sqrt(x2*y1^2+y2^2)*y2 - y1^2/4"]);
        let p = ChartPoint::new([0.3, 0.7], [0.4, -0.9]);
        let c = curvature(&m, &p).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                for k in 0..2 {
                    assert_eq!(c.get(i, j, k), -c.get(i, k, j));
                }
            }
        }
    }

    #[test]
    fn inadmissible_points_are_rejected() {
        let m = example2();
        assert!(matches!(m.expand(&ChartPoint::new([0.0, -1.0], [1.0, 1.0]), 1), Err(Error::Inadmissible(_))));
        assert!(matches!(m.expand(&ChartPoint::new([0.0, 1.0], [0.0, 0.0]), 1), Err(Error::Inadmissible(_))));
    }

    #[test]
    fn open_and_closed_intervals() {
        assert!(!Interval::open(0.0, 1.0).contains(0.0));
        assert!(Interval::closed(0.0, 1.0).contains(0.0));
        assert!(!Interval::open(1.0, 1.0).is_nonempty());
        assert!(Interval::closed(1.0, 1.0).is_nonempty());
    }
}
