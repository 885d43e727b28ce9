//! Candidate Lagrangians: Euler–Lagrange and invariance residuals, Hessian
//! regularity, functional combinations, and the freedom classification.
//!
//! The Euler–Lagrange check uses the coordinate form
//! `r_i = S(dE/dy^i) - dE/dx^i` with `S = y^j d/dx^j - 2 G^j d/dy^j`, which
//! needs only second derivatives of `E`.

use std::fmt;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ad::{Jet, Scalar};
use crate::error::{Error, Result};
use crate::expr::{BinaryOp, ExprAst, Node};
use crate::geometry::{self, ChartPoint, SprayModel};
use crate::holonomy::{self, DistributionReport};
use crate::linalg;

/// A candidate Lagrange function `E(x, y)` with its declared homogeneity degree.
#[derive(Debug, Clone, PartialEq)]
pub struct LagrangianCandidate {
    pub name: String,
    pub expr: ExprAst,
    pub degree: f64,
}

impl LagrangianCandidate {
    pub fn parse(model: &SprayModel, name: impl Into<String>, source: &str, degree: f64) -> Result<LagrangianCandidate> {
        Ok(LagrangianCandidate { name: name.into(), expr: model.parse(source)?, degree })
    }
}

/// Residual thresholds used to decide whether a candidate passes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CheckTolerances {
    pub homogeneity: f64,
    pub el: f64,
    pub invariance: f64,
    /// Relative: smallest over largest absolute Hessian eigenvalue.
    pub hessian: f64,
}

impl Default for CheckTolerances {
    fn default() -> Self {
        CheckTolerances { homogeneity: 1e-9, el: 1e-8, invariance: 1e-7, hessian: 1e-8 }
    }
}

fn nonzero_y(p: &ChartPoint) -> Result<()> {
    if p.y.iter().all(|v| *v == 0.0) {
        return Err(Error::Inadmissible("y = 0 is excluded".into()));
    }
    Ok(())
}

fn expand_candidate(model: &SprayModel, e: &ExprAst, p: &ChartPoint, degree: usize) -> Result<Jet> {
    model.check_admissible(p)?;
    nonzero_y(p)?;
    let z = Jet::seed(&p.stacked(), degree);
    model.eval_expr(e, &z)
}

fn second(jet: &Jet, a: usize, b: usize) -> Result<f64> {
    let mut alpha = vec![0u8; jet.nvars()];
    alpha[a] += 1;
    alpha[b] += 1;
    jet.partial(&alpha)
}

/// `r_i = y^j d2E/dx^j dy^i - 2 G^j d2E/dy^j dy^i - dE/dx^i`.
pub fn el_residual(model: &SprayModel, e: &ExprAst, p: &ChartPoint) -> Result<Vec<f64>> {
    let n = model.dim();
    let ej = expand_candidate(model, e, p, 2)?;
    let g = model.g_values(p)?;
    (0..n)
        .map(|i| {
            let mut r = -ej.d(i)?;
            for j in 0..n {
                r += p.y[j] * second(&ej, j, n + i)?;
                r -= 2.0 * g[j] * second(&ej, n + j, n + i)?;
            }
            Ok(r)
        })
        .collect()
}

/// `dE(B)` for each column `B` of `basis`.
pub fn invariance_residual(model: &SprayModel, e: &ExprAst, p: &ChartPoint, basis: &DMatrix<f64>) -> Result<Vec<f64>> {
    let ej = expand_candidate(model, e, p, 1)?;
    let grad = ej.gradient()?;
    Ok(basis.column_iter().map(|b| b.iter().zip(&grad).map(|(u, v)| u * v).sum()).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Definiteness {
    PositiveDefinite,
    NegativeDefinite,
    Indefinite,
    Singular,
}

impl fmt::Display for Definiteness {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Definiteness::PositiveDefinite => "positive definite",
            Definiteness::NegativeDefinite => "negative definite",
            Definiteness::Indefinite => "indefinite",
            Definiteness::Singular => "singular",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HessianReport {
    pub g: Vec<Vec<f64>>,
    pub eigenvalues: Vec<f64>,
    pub min_singular_value: f64,
    /// `min |lambda| / max |lambda|`, 0 for the zero matrix.
    pub relative_min_singular_value: f64,
    pub definiteness: Definiteness,
}

/// Classifies a symmetric matrix by the signs of its eigenvalues.
pub fn classify_symmetric(g: &DMatrix<f64>, rel_tol: f64) -> (Vec<f64>, f64, f64, Definiteness) {
    let eig = linalg::symmetric_eigenvalues(g);
    let top = eig.iter().fold(0.0f64, |m, v| m.max(f64::abs(*v)));
    let bottom = eig.iter().fold(f64::INFINITY, |m, v| m.min(f64::abs(*v)));
    let rel = if top > 0.0 { bottom / top } else { 0.0 };
    let class = if rel <= rel_tol {
        Definiteness::Singular
    } else if eig.iter().all(|v| *v > 0.0) {
        Definiteness::PositiveDefinite
    } else if eig.iter().all(|v| *v < 0.0) {
        Definiteness::NegativeDefinite
    } else {
        Definiteness::Indefinite
    };
    (eig, bottom, rel, class)
}

/// `g_ij = d2E/dy^i dy^j` with its regularity class.
pub fn hessian_report(model: &SprayModel, e: &ExprAst, p: &ChartPoint, rel_tol: f64) -> Result<HessianReport> {
    let n = model.dim();
    let ej = expand_candidate(model, e, p, 2)?;
    let mut g = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            g[(i, j)] = second(&ej, n + i, n + j)?;
        }
    }
    let (eigenvalues, min_singular_value, relative_min_singular_value, definiteness) = classify_symmetric(&g, rel_tol);
    Ok(HessianReport {
        g: (0..n).map(|i| (0..n).map(|j| g[(i, j)]).collect()).collect(),
        eigenvalues,
        min_singular_value,
        relative_min_singular_value,
        definiteness,
    })
}

/// `y^j dE/dy^j - k E`.
pub fn homogeneity_of_candidate(model: &SprayModel, e: &ExprAst, k: f64, p: &ChartPoint) -> Result<f64> {
    let n = model.dim();
    let ej = expand_candidate(model, e, p, 1)?;
    let mut euler = 0.0;
    for j in 0..n {
        euler += p.y[j] * ej.d(n + j)?;
    }
    Ok(euler - k * ej.value())
}

/// The whitelisted 1-homogeneous combiners.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Combiner {
    Linear(Vec<f64>),
    GeometricMean,
    PowerMean(f64),
}

fn scaled(c: f64, node: Node) -> Node {
    if c == 1.0 {
        node
    } else if c < 0.0 {
        Node::Unary(crate::expr::UnaryOp::Neg, Box::new(scaled(-c, node)))
    } else {
        Node::binary(BinaryOp::Mul, Node::Const(c), node)
    }
}

fn sum(nodes: Vec<Node>) -> Node {
    nodes.into_iter().reduce(|a, b| Node::binary(BinaryOp::Add, a, b)).expect("at least one term")
}

/// `phi(E_1, ..., E_r)` for a 1-homogeneous `phi`.
///
/// Mean-type combiners require every input to be positive at `points`.
pub fn combine(
    model: &SprayModel,
    name: impl Into<String>,
    inputs: &[&LagrangianCandidate],
    combiner: &Combiner,
    points: &[ChartPoint],
) -> Result<LagrangianCandidate> {
    if inputs.is_empty() {
        return Err(Error::Config("a combination needs at least one input".into()));
    }
    if let Some(c) = inputs.iter().find(|c| c.degree != 2.0) {
        return Err(Error::Config(format!("combination input `{}` is not declared 2-homogeneous", c.name)));
    }
    let r = inputs.len();
    let roots = || inputs.iter().map(|c| Node::clone(c.expr.root())).collect::<Vec<_>>();
    let root = match combiner {
        Combiner::Linear(coeffs) => {
            if coeffs.len() != r {
                return Err(Error::Config(format!("linear combiner has {} coefficients for {r} inputs", coeffs.len())));
            }
            let mut terms = coeffs.iter().zip(roots());
            let (c0, e0) = terms.next().expect("nonempty");
            terms.fold(scaled(*c0, e0), |acc, (c, e)| {
                if *c < 0.0 {
                    Node::binary(BinaryOp::Sub, acc, scaled(-c, e))
                } else {
                    Node::binary(BinaryOp::Add, acc, scaled(*c, e))
                }
            })
        }
        Combiner::GeometricMean => {
            let product = roots().into_iter().reduce(|a, b| Node::binary(BinaryOp::Mul, a, b)).expect("nonempty");
            if r == 1 {
                product
            } else {
                Node::binary(BinaryOp::Pow, product, Node::Const(1.0 / r as f64))
            }
        }
        Combiner::PowerMean(q) => {
            if *q == 0.0 || !q.is_finite() {
                return Err(Error::Config("power mean exponent must be finite and nonzero".into()));
            }
            let powered = roots().into_iter().map(|e| Node::binary(BinaryOp::Pow, e, Node::Const(*q))).collect();
            let mean = Node::binary(BinaryOp::Div, sum(powered), Node::Const(r as f64));
            Node::binary(BinaryOp::Pow, mean, Node::Const(1.0 / q))
        }
    };
    if !matches!(combiner, Combiner::Linear(_)) {
        for c in inputs {
            for p in points {
                let v = model.eval_expr(&c.expr, &p.stacked())?;
                if v <= 0.0 {
                    return Err(Error::Analysis(format!(
                        "positivity violation: `{}` = {v:e} at x = {:?}, y = {:?}",
                        c.name, p.x, p.y
                    )));
                }
            }
        }
    }
    let params = inputs.iter().flat_map(|c| c.expr.params().iter().cloned());
    Ok(LagrangianCandidate { name: name.into(), expr: ExprAst::from_node(root, model.dim(), params), degree: 2.0 })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidatePoint {
    pub homogeneity: f64,
    pub el: Vec<f64>,
    pub invariance: Vec<f64>,
    pub hessian: HessianReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateReport {
    pub name: String,
    pub expr: String,
    pub degree: f64,
    /// One entry per distribution sample; `Err` text when evaluation failed.
    pub points: Vec<std::result::Result<CandidatePoint, String>>,
    /// Every sample evaluated; maxima below are over the evaluated ones.
    pub complete: bool,
    pub max_homogeneity: f64,
    pub max_el: f64,
    pub max_invariance: f64,
    pub min_relative_singular_value: f64,
    pub all_regular: bool,
    pub all_positive_definite: bool,
    pub passes_homogeneity: bool,
    pub passes_el: bool,
    pub passes_invariance: bool,
    /// Homogeneous, Euler–Lagrange, invariant and regular at every sample.
    pub passes: bool,
    pub sample_digest: String,
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(f64::abs(*x)))
}

pub fn candidate_point(
    model: &SprayModel,
    cand: &LagrangianCandidate,
    p: &ChartPoint,
    basis: &DMatrix<f64>,
    tol: &CheckTolerances,
) -> Result<CandidatePoint> {
    Ok(CandidatePoint {
        homogeneity: homogeneity_of_candidate(model, &cand.expr, cand.degree, p)?,
        el: el_residual(model, &cand.expr, p)?,
        invariance: invariance_residual(model, &cand.expr, p, basis)?,
        hessian: hessian_report(model, &cand.expr, p, tol.hessian)?,
    })
}

/// Checks a candidate at every sample of `dist`, against that sample's basis.
pub fn candidate_report(
    model: &SprayModel,
    cand: &LagrangianCandidate,
    dist: &DistributionReport,
    tol: &CheckTolerances,
) -> CandidateReport {
    let points: Vec<std::result::Result<CandidatePoint, String>> = dist
        .points
        .par_iter()
        .map(|pd| candidate_point(model, cand, &pd.point, &pd.basis_matrix(), tol).map_err(|e| e.to_string()))
        .collect();
    let ok: Vec<&CandidatePoint> = points.iter().filter_map(|r| r.as_ref().ok()).collect();
    let complete = ok.len() == points.len() && !points.is_empty();
    let fold = |f: &dyn Fn(&CandidatePoint) -> f64| ok.iter().map(|c| f(c)).fold(0.0f64, f64::max);
    let max_homogeneity = fold(&|c| f64::abs(c.homogeneity));
    let max_el = fold(&|c| max_abs(&c.el));
    let max_invariance = fold(&|c| max_abs(&c.invariance));
    let min_relative_singular_value = if ok.is_empty() {
        0.0
    } else {
        ok.iter().map(|c| c.hessian.relative_min_singular_value).fold(f64::INFINITY, f64::min)
    };
    let all_regular = complete && ok.iter().all(|c| c.hessian.definiteness != Definiteness::Singular);
    let all_positive_definite = complete && ok.iter().all(|c| c.hessian.definiteness == Definiteness::PositiveDefinite);
    let passes_homogeneity = complete && cand.degree == 2.0 && max_homogeneity < tol.homogeneity;
    let passes_el = complete && max_el < tol.el;
    let passes_invariance = complete && max_invariance < tol.invariance;
    CandidateReport {
        name: cand.name.clone(),
        expr: cand.expr.to_string(),
        degree: cand.degree,
        points,
        complete,
        max_homogeneity,
        max_el,
        max_invariance,
        min_relative_singular_value,
        all_regular,
        all_positive_definite,
        passes_homogeneity,
        passes_el,
        passes_invariance,
        passes: passes_homogeneity && passes_el && passes_invariance && all_regular,
        sample_digest: dist.sample_digest.clone(),
    }
}

/// Curvature and isotropy over the sample set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsotropySummary {
    pub max_curvature: f64,
    pub curvature_vanishes: bool,
    pub isotropic_at_all_samples: bool,
    pub max_isotropy_residual: f64,
    pub rho_min: f64,
    pub rho_max: f64,
    pub max_abs_consistency: f64,
    pub sample_digest: String,
}

pub fn isotropy_summary(
    model: &SprayModel,
    points: &[ChartPoint],
    curvature_tol: f64,
    isotropy_tol: f64,
) -> Result<IsotropySummary> {
    if points.is_empty() {
        return Err(Error::Analysis("empty sample set".into()));
    }
    let per_point: Vec<(f64, geometry::IsotropyOutcome, f64)> = points
        .par_iter()
        .map(|p| {
            let curv = geometry::curvature(model, p)?;
            let jac = geometry::jacobi_from(&curv, &p.y);
            let iso = geometry::isotropy_from(&jac, &p.y, isotropy_tol);
            Ok((curv.max_abs(), iso, jac.rho))
        })
        .collect::<Result<_>>()?;
    let max_curvature = per_point.iter().map(|t| t.0).fold(0.0, f64::max);
    Ok(IsotropySummary {
        max_curvature,
        curvature_vanishes: max_curvature < curvature_tol,
        isotropic_at_all_samples: per_point.iter().all(|t| t.1.decomposes),
        max_isotropy_residual: per_point.iter().map(|t| t.1.residual).fold(0.0, f64::max),
        rho_min: per_point.iter().map(|t| t.2).fold(f64::INFINITY, f64::min),
        rho_max: per_point.iter().map(|t| t.2).fold(f64::NEG_INFINITY, f64::max),
        max_abs_consistency: per_point.iter().map(|t| t.1.consistency.abs()).fold(0.0, f64::max),
        sample_digest: holonomy::sample_digest(points),
    })
}

/// Which classification rule decided the verdict.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Rule {
    R0,
    R1,
    R2,
    R3,
    #[serde(rename = "R3+R4")]
    R3R4,
    R5,
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Rule::R0 => "R0",
            Rule::R1 => "R1",
            Rule::R2 => "R2",
            Rule::R3 => "R3",
            Rule::R3R4 => "R3+R4",
            Rule::R5 => "R5",
        })
    }
}

/// A freedom count or "unknown".
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Estimate {
    Known(usize),
    Unknown,
}

impl fmt::Display for Estimate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Estimate::Known(v) => write!(f, "{v}"),
            Estimate::Unknown => f.write_str("unknown"),
        }
    }
}

impl Serialize for Estimate {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Estimate::Known(v) => s.serialize_u64(*v as u64),
            Estimate::Unknown => s.serialize_str("unknown"),
        }
    }
}

impl<'de> Deserialize<'de> for Estimate {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(usize),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(Estimate::Known(v)),
            Raw::Text(t) if t == "unknown" => Ok(Estimate::Unknown),
            Raw::Text(t) => Err(serde::de::Error::custom(format!("expected a count or \"unknown\", got `{t}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationVerdict {
    pub vh2: Estimate,
    pub metrizability: Estimate,
    pub rule: Rule,
    pub assumptions: Vec<String>,
    pub evidence: Vec<String>,
    /// Contradictions between rules; never resolved silently.
    pub hard_diagnostics: Vec<String>,
}

const SAMPLED: &str = "conditions checked at all sampled points only";
const GENERIC_RANK: &str = "genericity of sampled rank assumed";
const REGULAR_TRANSPORT: &str = "regular parallel translation assumed";

/// Applies the rules R0 to R5 in priority order.
pub fn classify(
    dist: &DistributionReport,
    candidates: &[CandidateReport],
    iso: &IsotropySummary,
    curvature_tol: f64,
) -> Result<ClassificationVerdict> {
    if iso.sample_digest != dist.sample_digest {
        return Err(Error::Inconsistent("isotropy summary and distribution report use different samples".into()));
    }
    if let Some(c) = candidates.iter().find(|c| c.sample_digest != dist.sample_digest) {
        return Err(Error::Inconsistent(format!("candidate `{}` was checked on a different sample set", c.name)));
    }
    let n = dist.n;
    let mut assumptions = vec![SAMPLED.to_string()];
    let mut evidence = vec![format!(
        "generic rank {} (codim {}) over {} samples, histogram {:?}",
        dist.generic_rank,
        dist.generic_codim,
        dist.points.len(),
        dist.rank_histogram
    )];
    let verdict = |vh2, m, rule, assumptions, evidence| ClassificationVerdict {
        vh2,
        metrizability: m,
        rule,
        assumptions,
        evidence,
        hard_diagnostics: Vec::new(),
    };

    if iso.max_curvature < curvature_tol {
        evidence.push(format!("max |R^i_jk| = {:e} < {curvature_tol:e}", iso.max_curvature));
        assumptions.push("vanishing of sampled curvature taken as R = 0 on the domain".into());
        return Ok(verdict(Estimate::Known(n), Estimate::Known(n), Rule::R0, assumptions, evidence));
    }
    evidence.push(format!("max |R^i_jk| = {:e}", iso.max_curvature));

    if dist.liouville_at_all_samples {
        let worst = dist.points.iter().map(|p| p.liouville_residual).fold(0.0, f64::max);
        evidence.push(format!("Liouville field in the holonomy distribution, max residual {worst:e}"));
        assumptions.push(
            "Liouville membership excludes metrizability; read as 'not variational' following the worked example".into(),
        );
        assumptions.push(GENERIC_RANK.into());
        return Ok(verdict(Estimate::Known(0), Estimate::Known(0), Rule::R1, assumptions, evidence));
    }

    let flagged: Vec<usize> = (0..n).filter(|&i| dist.coordinate_vertical_at_all_samples[i]).collect();
    if !flagged.is_empty() {
        for i in &flagged {
            evidence.push(format!("coordinate-vertical obstruction: y{}", i + 1));
        }
        assumptions.push(GENERIC_RANK.into());
        return Ok(verdict(Estimate::Known(0), Estimate::Known(0), Rule::R2, assumptions, evidence));
    }

    if let Some(c) = candidates.iter().find(|c| c.passes) {
        let codim = dist.generic_codim;
        evidence.push(format!(
            "candidate `{}` passes: homogeneity {:e}, EL {:e}, invariance {:e}, Hessian {}",
            c.name,
            c.max_homogeneity,
            c.max_el,
            c.max_invariance,
            if c.all_positive_definite { "positive definite" } else { "regular" }
        ));
        assumptions.push(REGULAR_TRANSPORT.into());
        assumptions.push(GENERIC_RANK.into());
        let m = if c.all_positive_definite { Estimate::Known(codim) } else { Estimate::Unknown };
        let mut v = verdict(Estimate::Known(codim), m, Rule::R3, assumptions, evidence);
        if iso.isotropic_at_all_samples {
            v.rule = Rule::R3R4;
            v.evidence.push(format!(
                "isotropic at all samples (max residual {:e}), rho in [{:e}, {:e}]",
                iso.max_isotropy_residual, iso.rho_min, iso.rho_max
            ));
            if codim != 1 {
                v.hard_diagnostics.push(format!(
                    "isotropic non-flat spray must have freedom 1, but the candidate-backed codimension is {codim}"
                ));
            }
        }
        return Ok(v);
    }

    for c in candidates {
        evidence.push(format!(
            "candidate `{}` fails: homogeneity {:e}, EL {:e}, invariance {:e}, regular {}",
            c.name, c.max_homogeneity, c.max_el, c.max_invariance, c.all_regular
        ));
    }
    if iso.isotropic_at_all_samples {
        evidence.push("isotropic at all samples, no verified candidate".into());
    }
    assumptions.push(GENERIC_RANK.into());
    Ok(verdict(Estimate::Unknown, Estimate::Unknown, Rule::R5, assumptions, evidence))
}
