//! Fixed-step RK4 integration of geodesics and horizontal lifts.
//!
//! Parallel translation along a base curve `x(s)` solves
//! `dy/ds = -N(x(s), y) dx/ds`, with `N` recomputed from the spray at every
//! stage point. Only the base part of the domain constrains integration; the
//! `y` intervals bound sampling.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::ad::{Jet, Scalar};
use crate::error::{Error, Result};
use crate::expr::{parse, ExprAst};
use crate::geometry::{ChartPoint, SprayModel};
use crate::linalg;

/// A base curve as written in a configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum CurveSpec {
    /// Counterclockwise axis-aligned square in the `(x^a, x^b)` plane,
    /// `axes` 1-based and defaulting to `[1, 2]`.
    Square {
        corner: Vec<f64>,
        side: f64,
        #[serde(default)]
        axes: Option<[usize; 2]>,
    },
    Polyline(Vec<Vec<f64>>),
    /// One expression in the parameter `t` on `[0, 1]` per base coordinate.
    Expressions(Vec<String>),
}

#[derive(Debug, Clone, PartialEq)]
enum Piece {
    Segment(Vec<f64>, Vec<f64>),
    Parametric(Vec<ExprAst>),
}

/// A resolved, piecewise smooth base curve.
#[derive(Debug, Clone, PartialEq)]
pub struct BaseCurve {
    n: usize,
    pieces: Vec<Piece>,
}

impl BaseCurve {
    pub fn polyline(points: Vec<Vec<f64>>) -> Result<BaseCurve> {
        let n = points.first().map(Vec::len).unwrap_or(0);
        if points.len() < 2 || points.iter().any(|p| p.len() != n) {
            return Err(Error::Config("a polyline needs at least two points of equal dimension".into()));
        }
        let pieces = points.windows(2).map(|w| Piece::Segment(w[0].clone(), w[1].clone())).collect();
        Ok(BaseCurve { n, pieces })
    }

    /// Counterclockwise square with the given corner, spanned by the
    /// 0-based axes `a` and `b`.
    pub fn square(corner: &[f64], side: f64, a: usize, b: usize) -> Result<BaseCurve> {
        let n = corner.len();
        if a >= n || b >= n || a == b {
            return Err(Error::Config(format!("square axes ({}, {}) are invalid for dimension {n}", a + 1, b + 1)));
        }
        if !(side > 0.0) {
            return Err(Error::Config("square side must be positive".into()));
        }
        let mut p1 = corner.to_vec();
        p1[a] += side;
        let mut p2 = p1.clone();
        p2[b] += side;
        let mut p3 = corner.to_vec();
        p3[b] += side;
        BaseCurve::polyline(vec![corner.to_vec(), p1, p2, p3, corner.to_vec()])
    }

    pub fn expressions(sources: &[String], params: &[&str]) -> Result<BaseCurve> {
        let n = sources.len();
        let mut names = params.to_vec();
        names.push("t");
        let exprs = sources.iter().map(|s| parse(s, n, &names)).collect::<Result<Vec<_>>>()?;
        if let Some(e) = exprs.iter().find(|e| !e.free_vars().is_empty()) {
            return Err(Error::Config(format!("curve expression `{e}` may only depend on t")));
        }
        Ok(BaseCurve { n, pieces: vec![Piece::Parametric(exprs)] })
    }

    pub fn from_spec(spec: &CurveSpec, model: &SprayModel) -> Result<BaseCurve> {
        let curve = match spec {
            CurveSpec::Square { corner, side, axes } => {
                let [a, b] = axes.unwrap_or([1, 2]);
                if a == 0 || b == 0 {
                    return Err(Error::Config("square axes are 1-based".into()));
                }
                BaseCurve::square(corner, *side, a - 1, b - 1)?
            }
            CurveSpec::Polyline(points) => BaseCurve::polyline(points.clone())?,
            CurveSpec::Expressions(src) => BaseCurve::expressions(src, &model.param_names())?,
        };
        if curve.n != model.dim() {
            return Err(Error::Config(format!("curve has dimension {}, model has {}", curve.n, model.dim())));
        }
        Ok(curve)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Point and velocity of piece `k` at local parameter `s` in `[0, 1]`.
    fn eval(&self, k: usize, s: f64, model: &SprayModel) -> Result<(Vec<f64>, Vec<f64>)> {
        match &self.pieces[k] {
            Piece::Segment(a, b) => {
                let x = a.iter().zip(b).map(|(a, b)| a + s * (b - a)).collect();
                let v = a.iter().zip(b).map(|(a, b)| b - a).collect();
                Ok((x, v))
            }
            Piece::Parametric(exprs) => {
                let t = Jet::seed(&[s], 1).remove(0);
                let zero: Vec<Jet> = (0..self.n).map(|_| t.lift(0.0)).collect();
                let mut x = Vec::with_capacity(self.n);
                let mut v = Vec::with_capacity(self.n);
                for e in exprs {
                    let params = e
                        .params()
                        .iter()
                        .map(|p| {
                            if p == "t" {
                                Ok(t.clone())
                            } else {
                                model.params().get(p).map(|v| t.lift(*v)).ok_or_else(|| Error::UnboundParameter(p.clone()))
                            }
                        })
                        .collect::<Result<Vec<_>>>()?;
                    let j = e.eval(&zero, &zero, &params)?;
                    x.push(j.value());
                    v.push(j.d(0)?);
                }
                Ok((x, v))
            }
        }
    }

    pub fn start(&self, model: &SprayModel) -> Result<Vec<f64>> {
        Ok(self.eval(0, 0.0, model)?.0)
    }

    pub fn end(&self, model: &SprayModel) -> Result<Vec<f64>> {
        Ok(self.eval(self.pieces.len() - 1, 1.0, model)?.0)
    }

    /// The same curve traversed backwards.
    pub fn reversed(&self) -> Result<BaseCurve> {
        let mut pieces = Vec::with_capacity(self.pieces.len());
        for p in self.pieces.iter().rev() {
            match p {
                Piece::Segment(a, b) => pieces.push(Piece::Segment(b.clone(), a.clone())),
                Piece::Parametric(_) => {
                    return Err(Error::Config("parametric curves cannot be reversed".into()));
                }
            }
        }
        Ok(BaseCurve { n: self.n, pieces })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransportResult {
    pub initial: Vec<f64>,
    #[serde(rename = "final")]
    pub final_vector: Vec<f64>,
    pub steps: usize,
    /// Richardson estimate `|tau_h - tau_{h/2}| / 15`.
    pub error_estimate: f64,
    /// `(x, y)` after every step, when requested.
    pub trace: Option<Vec<ChartPoint>>,
}

impl TransportResult {
    /// `|tau(v0) - v0|`.
    pub fn deviation(&self) -> f64 {
        self.initial.iter().zip(&self.final_vector).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
    }
}

fn lift_rhs(model: &SprayModel, x: &[f64], xdot: &[f64], y: &[f64]) -> Result<Vec<f64>> {
    let p = ChartPoint::new(x.to_vec(), y.to_vec());
    if !model.domain().contains_base(x) {
        return Err(Error::Transport(format!("curve leaves the base domain at x = {x:?}")));
    }
    let n = model.dim();
    let nmat = model.connection_unchecked(&p)?;
    Ok((0..n).map(|j| -(0..n).map(|i| nmat[(j, i)] * xdot[i]).sum::<f64>()).collect())
}

fn axpy(y: &[f64], h: f64, k: &[f64]) -> Vec<f64> {
    y.iter().zip(k).map(|(a, b)| a + h * b).collect()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

fn run_lift(
    model: &SprayModel,
    curve: &BaseCurve,
    v0: &[f64],
    steps: usize,
    mut trace: Option<&mut Vec<ChartPoint>>,
) -> Result<Vec<f64>> {
    let per_piece = (steps / curve.pieces.len()).max(1);
    let floor = 1e-12 * norm(v0);
    let mut y = v0.to_vec();
    for k in 0..curve.pieces.len() {
        let h = 1.0 / per_piece as f64;
        for step in 0..per_piece {
            let s = step as f64 * h;
            let (x0, v0) = curve.eval(k, s, model)?;
            let (xm, vm) = curve.eval(k, s + 0.5 * h, model)?;
            let (x1, v1) = curve.eval(k, s + h, model)?;
            let k1 = lift_rhs(model, &x0, &v0, &y)?;
            let k2 = lift_rhs(model, &xm, &vm, &axpy(&y, 0.5 * h, &k1))?;
            let k3 = lift_rhs(model, &xm, &vm, &axpy(&y, 0.5 * h, &k2))?;
            let k4 = lift_rhs(model, &x1, &v1, &axpy(&y, h, &k3))?;
            for a in 0..y.len() {
                y[a] += h / 6.0 * (k1[a] + 2.0 * k2[a] + 2.0 * k3[a] + k4[a]);
            }
            if norm(&y) <= floor {
                return Err(Error::Transport(format!("lift approaches the zero section at x = {x1:?}")));
            }
            if let Some(t) = trace.as_deref_mut() {
                t.push(ChartPoint::new(x1, y.clone()));
            }
        }
    }
    Ok(y)
}

/// Parallel translation of `v0` along `curve`.
pub fn horizontal_lift(
    model: &SprayModel,
    curve: &BaseCurve,
    v0: &[f64],
    steps: usize,
    keep_trace: bool,
) -> Result<TransportResult> {
    if v0.len() != model.dim() || v0.iter().all(|v| *v == 0.0) {
        return Err(Error::Transport("initial vector must be nonzero with one entry per base coordinate".into()));
    }
    if steps == 0 {
        return Err(Error::Config("steps must be positive".into()));
    }
    let mut trace = keep_trace.then(Vec::new);
    if let Some(t) = trace.as_mut() {
        t.push(ChartPoint::new(curve.start(model)?, v0.to_vec()));
    }
    let coarse = run_lift(model, curve, v0, steps, trace.as_mut())?;
    let fine = run_lift(model, curve, v0, 2 * steps, None)?;
    let diff: Vec<f64> = coarse.iter().zip(&fine).map(|(a, b)| a - b).collect();
    Ok(TransportResult {
        initial: v0.to_vec(),
        final_vector: coarse,
        steps: (steps / curve.pieces.len()).max(1) * curve.pieces.len(),
        error_estimate: norm(&diff) / 15.0,
        trace,
    })
}

fn check_closed(curve: &BaseCurve, model: &SprayModel) -> Result<()> {
    let a = curve.start(model)?;
    let b = curve.end(model)?;
    let gap = a.iter().zip(&b).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    if gap > 1e-12 {
        return Err(Error::Transport(format!("loop is not closed (endpoint gap {gap:e})")));
    }
    Ok(())
}

/// `|E(x0, tau(v0)) - E(x0, v0)|` around a closed loop.
pub fn invariance_by_transport(
    model: &SprayModel,
    e: &ExprAst,
    loop_curve: &BaseCurve,
    v0: &[f64],
    steps: usize,
) -> Result<(f64, TransportResult)> {
    check_closed(loop_curve, model)?;
    let res = horizontal_lift(model, loop_curve, v0, steps, false)?;
    let x0 = loop_curve.start(model)?;
    let before = model.eval_expr(e, &ChartPoint::new(x0.clone(), v0.to_vec()).stacked())?;
    let after = model.eval_expr(e, &ChartPoint::new(x0, res.final_vector.clone()).stacked())?;
    Ok(((after - before).abs(), res))
}

/// `|tau_reverse(tau(v0)) - v0|`.
pub fn reversibility_defect(model: &SprayModel, curve: &BaseCurve, v0: &[f64], steps: usize) -> Result<f64> {
    let there = horizontal_lift(model, curve, v0, steps, false)?;
    let back = horizontal_lift(model, &curve.reversed()?, &there.final_vector, steps, false)?;
    Ok(norm(&back.final_vector.iter().zip(v0).map(|(a, b)| a - b).collect::<Vec<_>>()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    /// State after every completed step, starting with the initial state.
    pub states: Vec<ChartPoint>,
    /// Integration stopped early because a stage left the domain.
    pub left_domain: bool,
}

impl Trajectory {
    pub fn last(&self) -> &ChartPoint {
        self.states.last().expect("a trajectory holds its initial state")
    }
}

/// Base point in the domain and `y != 0`; the `y` intervals of the domain
/// only bound sampling, so integrators do not enforce them.
fn in_phase_space(model: &SprayModel, p: &ChartPoint) -> bool {
    model.domain().contains_base(&p.x) && p.y.iter().any(|v| *v != 0.0)
}

fn geodesic_rhs(model: &SprayModel, z: &[f64]) -> Result<Option<Vec<f64>>> {
    let p = ChartPoint::from_stacked(z);
    if !in_phase_space(model, &p) {
        return Ok(None);
    }
    let g = model.g_values(&p)?;
    Ok(Some(p.y.iter().copied().chain(g.iter().map(|v| -2.0 * v)).collect()))
}

/// RK4 solution of `x'' = -2 G(x, x')` over `[0, duration]`.
pub fn geodesic(model: &SprayModel, v0: &ChartPoint, duration: f64, steps: usize) -> Result<Trajectory> {
    if v0.dim() != model.dim() || v0.y.len() != model.dim() || !in_phase_space(model, v0) {
        return Err(Error::Inadmissible(format!("{v0:?} is not an admissible initial state")));
    }
    if steps < 2 {
        return Err(Error::Config("a geodesic needs at least 2 steps".into()));
    }
    let h = duration / steps as f64;
    let mut z = v0.stacked();
    let mut states = vec![v0.clone()];
    for _ in 0..steps {
        let stage = |z: &[f64]| geodesic_rhs(model, z);
        let Some(k1) = stage(&z)? else { return Ok(Trajectory { states, left_domain: true }) };
        let Some(k2) = stage(&axpy(&z, 0.5 * h, &k1))? else { return Ok(Trajectory { states, left_domain: true }) };
        let Some(k3) = stage(&axpy(&z, 0.5 * h, &k2))? else { return Ok(Trajectory { states, left_domain: true }) };
        let Some(k4) = stage(&axpy(&z, h, &k3))? else { return Ok(Trajectory { states, left_domain: true }) };
        for a in 0..z.len() {
            z[a] += h / 6.0 * (k1[a] + 2.0 * k2[a] + 2.0 * k3[a] + k4[a]);
        }
        let p = ChartPoint::from_stacked(&z);
        if !in_phase_space(model, &p) {
            return Ok(Trajectory { states, left_domain: true });
        }
        states.push(p);
    }
    Ok(Trajectory { states, left_domain: false })
}

/// Convergence exponent `log2(e_h / e_{h/2})` of the geodesic endpoint
/// against a reference run with `16 * steps`.
pub fn measured_order(model: &SprayModel, v0: &ChartPoint, duration: f64, steps: usize) -> Result<f64> {
    let end = |k: usize| -> Result<DVector<f64>> {
        let t = geodesic(model, v0, duration, k)?;
        if t.left_domain {
            return Err(Error::Transport("geodesic left the domain".into()));
        }
        Ok(DVector::from_vec(t.last().stacked()))
    };
    let reference = end(16 * steps)?;
    let e1 = (end(steps)? - &reference).norm();
    let e2 = (end(2 * steps)? - &reference).norm();
    Ok((e1 / e2).log2())
}

/// Relative distance of `(tau(v) - v) / eps^2` to the span of the curvature
/// columns `R^.jk(p, v)`, for a square loop of side `eps` at `p` in the
/// `(x^1, x^2)` plane.
pub fn curvature_defect_residual(model: &SprayModel, x: &[f64], v: &[f64], eps: f64, steps: usize) -> Result<f64> {
    let n = model.dim();
    let loop_curve = BaseCurve::square(x, eps, 0, 1)?;
    let res = horizontal_lift(model, &loop_curve, v, steps, false)?;
    let defect = DVector::from_iterator(n, res.final_vector.iter().zip(v).map(|(a, b)| (a - b) / (eps * eps)));
    let curv = crate::geometry::curvature(model, &ChartPoint::new(x.to_vec(), v.to_vec()))?;
    let cols: Vec<DVector<f64>> = (0..n)
        .flat_map(|j| (0..n).map(move |k| (j, k)))
        .map(|(j, k)| DVector::from_fn(n, |i, _| curv.get(i, j, k)))
        .collect();
    let span = linalg::span_basis(&nalgebra::DMatrix::from_columns(&cols), 1e-10);
    Ok(linalg::relative_distance(&span, &defect))
}

/// A named transport job from a configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransportTask {
    pub name: String,
    pub curve: CurveSpec,
    pub v0: Vec<f64>,
    #[serde(default = "default_steps")]
    pub steps: usize,
    /// Candidate whose drift around the (closed) curve is reported.
    #[serde(default)]
    pub candidate: Option<String>,
    #[serde(default)]
    pub trace: bool,
}

fn default_steps() -> usize {
    2000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransportOutcome {
    pub name: String,
    pub deviation: f64,
    pub drift: Option<f64>,
    pub candidate: Option<String>,
    pub result: TransportResult,
}

/// Runs a task; `candidate` must be the expression named by the task, if any.
pub fn run_task(model: &SprayModel, task: &TransportTask, candidate: Option<&ExprAst>) -> Result<TransportOutcome> {
    let curve = BaseCurve::from_spec(&task.curve, model)?;
    let result = horizontal_lift(model, &curve, &task.v0, task.steps, task.trace)?;
    let drift = match candidate {
        Some(e) => {
            check_closed(&curve, model)?;
            let x0 = curve.start(model)?;
            let before = model.eval_expr(e, &ChartPoint::new(x0.clone(), task.v0.clone()).stacked())?;
            let after = model.eval_expr(e, &ChartPoint::new(x0, result.final_vector.clone()).stacked())?;
            Some((after - before).abs())
        }
        None => None,
    };
    Ok(TransportOutcome { name: task.name.clone(), deviation: result.deviation(), drift, candidate: task.candidate.clone(), result })
}
