//! The holonomy distribution: the span of the horizontal frame and its
//! iterated Lie brackets, evaluated pointwise.
//!
//! Saturation brackets only against the frame fields `h_i`. At generic
//! points the pointwise span of iterated frame brackets coincides with the
//! distribution generated by all horizontal fields; rank changes across
//! samples are surfaced rather than smoothed over.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ad::{bracket_jets, BracketWord, EvaluableField, Generator, Jet};
use crate::error::{Error, Result};
use crate::geometry::{values, ChartPoint, CurvatureData, SprayModel};
use crate::linalg;

pub use crate::ad::BracketWord as Word;

/// Lie bracket of two evaluable fields.
pub fn bracket(x: &EvaluableField, y: &EvaluableField) -> EvaluableField {
    x.bracket(y)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SaturationConfig {
    /// Singular values below `rank_tol * sigma_max` do not count.
    pub rank_tol: f64,
    pub max_bracket_depth: usize,
    pub max_ad_depth: usize,
    /// Also seed the generator set with the Liouville field.
    pub with_liouville: bool,
}

impl SaturationConfig {
    pub fn for_dimension(n: usize) -> SaturationConfig {
        SaturationConfig { rank_tol: 1e-8, max_bracket_depth: 2 * n, max_ad_depth: crate::ad::DEFAULT_MAX_DEPTH, with_liouville: false }
    }
}

/// Outcome of bracket saturation at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct Saturation {
    pub rank: usize,
    pub words: Vec<BracketWord>,
    /// `2n x rank`, one admitted field value per column.
    pub basis: DMatrix<f64>,
    pub singular_values: Vec<f64>,
    /// The last sweep still raised the rank when the depth budget ran out,
    /// so `rank` is only a lower bound.
    pub exhausted: bool,
    /// Bracket depth actually used (clamped by the derivative budget).
    pub bracket_depth: usize,
}

struct Admitted {
    word: BracketWord,
    jets: Vec<Jet>,
}

fn raises_rank(columns: &[DVector<f64>], candidate: &DVector<f64>, rank_tol: f64) -> bool {
    let mut all: Vec<DVector<f64>> = columns.to_vec();
    all.push(candidate.clone());
    let m = DMatrix::from_columns(&all);
    linalg::numerical_rank(&m, rank_tol) > columns.len()
}

/// Rank of the holonomy distribution at `p` with the admitted basis.
pub fn saturate(model: &SprayModel, p: &ChartPoint, cfg: &SaturationConfig) -> Result<Saturation> {
    let n = model.dim();
    let bracket_depth = cfg.max_bracket_depth.min(cfg.max_ad_depth.saturating_sub(1));
    if bracket_depth == 0 && cfg.max_bracket_depth > 0 {
        return Err(Error::DepthExceeded { requested: 2, max: cfg.max_ad_depth });
    }
    let e = model.expand(p, bracket_depth + 1)?;

    let mut generators: Vec<Admitted> =
        (0..n).map(|i| Ok(Admitted { word: BracketWord::h(i), jets: e.horizontal(i)? })).collect::<Result<_>>()?;
    if cfg.with_liouville {
        generators.push(Admitted { word: BracketWord::Leaf(Generator::Liouville), jets: e.liouville() });
    }

    let mut basis: Vec<Admitted> = Vec::new();
    let mut columns: Vec<DVector<f64>> = Vec::new();
    let mut frontier: Vec<usize> = Vec::new();
    for g in generators {
        let v = values(&g.jets);
        if raises_rank(&columns, &v, cfg.rank_tol) {
            columns.push(v);
            frontier.push(basis.len());
            basis.push(g);
        }
    }

    let mut exhausted = false;
    for sweep in 1..=bracket_depth {
        if columns.len() == 2 * n {
            break;
        }
        let mut admitted = Vec::new();
        for i in 0..n {
            for &b in &frontier {
                let jets = bracket_jets(&basis[i].jets, &basis[b].jets)?;
                let v = values(&jets);
                if !v.iter().all(|c| c.is_finite()) {
                    return Err(Error::Domain { expr: format!("[h{},{}]", i + 1, basis[b].word), reason: "non-finite bracket".into() });
                }
                if raises_rank(&columns, &v, cfg.rank_tol) {
                    columns.push(v);
                    admitted.push(Admitted { word: BracketWord::bracket(&basis[i].word, &basis[b].word), jets });
                }
                if columns.len() == 2 * n {
                    break;
                }
            }
            if columns.len() == 2 * n {
                break;
            }
        }
        if admitted.is_empty() {
            break;
        }
        frontier = (basis.len()..basis.len() + admitted.len()).collect();
        basis.extend(admitted);
        if sweep == bracket_depth && columns.len() < 2 * n {
            exhausted = true;
        }
    }

    let m = DMatrix::from_columns(&columns);
    let singular_values = linalg::singular_values(&m);
    let rank = linalg::numerical_rank(&m, cfg.rank_tol);
    Ok(Saturation {
        rank,
        words: basis.into_iter().map(|a| a.word).collect(),
        basis: m,
        singular_values,
        exhausted,
        bracket_depth,
    })
}

/// Relative distance of `C(p) = (0, y)` to the span of `basis`, and whether
/// it is below `tol`.
pub fn contains_liouville(basis: &DMatrix<f64>, p: &ChartPoint, tol: f64) -> (bool, f64) {
    let n = p.dim();
    let c = DVector::from_fn(2 * n, |a, _| if a < n { 0.0 } else { p.y[a - n] });
    let q = linalg::span_basis(basis, 1e-12);
    let residual = linalg::relative_distance(&q, &c);
    (residual < tol, residual)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerticalDiagnostics {
    pub vertical_rank: usize,
    /// `flags[i]`: `d/dy^i` lies in the span.
    pub coordinate_vertical: Vec<bool>,
    pub coordinate_residuals: Vec<f64>,
}

/// Vertical rank and coordinate-vertical membership of a saturated basis.
///
/// The first `n` columns of `basis` must be the horizontal frame at `p`, as
/// produced by [`saturate`].
pub fn vertical_diagnostics(basis: &DMatrix<f64>, n: usize, tol: f64, rank_tol: f64) -> VerticalDiagnostics {
    let frame = basis.columns(0, n.min(basis.ncols())).into_owned();
    let mut vertical = DMatrix::zeros(n, basis.ncols());
    for c in 0..basis.ncols() {
        let col = basis.column(c);
        let mut rem = col.clone_owned();
        for i in 0..frame.ncols() {
            rem -= frame.column(i) * col[i];
        }
        for j in 0..n {
            vertical[(j, c)] = rem[n + j];
        }
    }
    let scale = linalg::singular_values(basis).first().copied().unwrap_or(0.0);
    let sv = linalg::singular_values(&vertical);
    let vertical_rank = sv.iter().filter(|&&s| s > rank_tol * scale).count();

    let q = linalg::span_basis(basis, 1e-12);
    let coordinate_residuals: Vec<f64> = (0..n)
        .map(|i| {
            let e = DVector::from_fn(2 * n, |a, _| if a == n + i { 1.0 } else { 0.0 });
            linalg::relative_distance(&q, &e)
        })
        .collect();
    VerticalDiagnostics {
        vertical_rank,
        coordinate_vertical: coordinate_residuals.iter().map(|r| *r < tol).collect(),
        coordinate_residuals,
    }
}

/// Largest distance of a curvature column `R^.jk(p)` to the span, relative
/// to the column norm with a unit floor.
pub fn curvature_image_residual(curv: &CurvatureData, basis: &DMatrix<f64>) -> f64 {
    let q = linalg::span_basis(basis, 1e-12);
    let mut worst: f64 = 0.0;
    for j in 0..curv.n {
        for k in 0..curv.n {
            worst = worst.max(linalg::scaled_distance(&q, &curv.vertical_vector(j, k)));
        }
    }
    worst
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistributionConfig {
    pub saturation: SaturationConfig,
    /// Threshold for Liouville and coordinate-vertical membership.
    pub membership_tol: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointDistribution {
    pub point: ChartPoint,
    pub rank: usize,
    pub words: Vec<String>,
    /// Admitted field values, one inner vector per basis field.
    pub basis: Vec<Vec<f64>>,
    pub liouville_residual: f64,
    pub contains_liouville: bool,
    pub vertical: VerticalDiagnostics,
    pub exhausted: bool,
}

impl PointDistribution {
    pub fn basis_matrix(&self) -> DMatrix<f64> {
        let cols: Vec<DVector<f64>> = self.basis.iter().map(|c| DVector::from_column_slice(c)).collect();
        if cols.is_empty() {
            DMatrix::zeros(2 * self.point.dim(), 0)
        } else {
            DMatrix::from_columns(&cols)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionReport {
    pub n: usize,
    pub points: Vec<PointDistribution>,
    /// Samples that failed, with the reason.
    pub skipped: Vec<(usize, String)>,
    pub generic_rank: usize,
    pub generic_codim: usize,
    pub rank_histogram: BTreeMap<usize, usize>,
    pub non_regular_suspected: bool,
    pub liouville_at_all_samples: bool,
    /// `coordinate_vertical_at_all_samples[i]`: `d/dy^i` in the span everywhere.
    pub coordinate_vertical_at_all_samples: Vec<bool>,
    pub any_exhausted: bool,
    pub sample_digest: String,
}

pub fn analyze_point(model: &SprayModel, p: &ChartPoint, cfg: &DistributionConfig) -> Result<PointDistribution> {
    let n = model.dim();
    let sat = saturate(model, p, &cfg.saturation)?;
    let (contains, liouville_residual) = contains_liouville(&sat.basis, p, cfg.membership_tol);
    let vertical = vertical_diagnostics(&sat.basis, n, cfg.membership_tol, cfg.saturation.rank_tol);
    Ok(PointDistribution {
        point: p.clone(),
        rank: sat.rank,
        words: sat.words.iter().map(|w| w.to_string()).collect(),
        basis: sat.basis.column_iter().map(|c| c.iter().copied().collect()).collect(),
        liouville_residual,
        contains_liouville: contains,
        vertical,
        exhausted: sat.exhausted,
    })
}

/// Per-point saturation over a sample set, merged in sample order.
pub fn analyze_distribution(model: &SprayModel, samples: &[ChartPoint], cfg: &DistributionConfig) -> Result<DistributionReport> {
    if samples.is_empty() {
        return Err(Error::Analysis("empty sample set".into()));
    }
    let n = model.dim();
    let results: Vec<Result<PointDistribution>> = samples.par_iter().map(|p| analyze_point(model, p, cfg)).collect();
    let mut points = Vec::new();
    let mut skipped = Vec::new();
    for (idx, r) in results.into_iter().enumerate() {
        match r {
            Ok(pd) => points.push(pd),
            Err(e) => skipped.push((idx, e.to_string())),
        }
    }
    if points.is_empty() {
        return Err(Error::Analysis(format!("every sample failed; first: {}", skipped[0].1)));
    }
    let mut rank_histogram = BTreeMap::new();
    for pd in &points {
        *rank_histogram.entry(pd.rank).or_insert(0) += 1;
    }
    let generic_rank = points.iter().map(|pd| pd.rank).max().unwrap_or(0);
    let used: Vec<ChartPoint> = points.iter().map(|pd| pd.point.clone()).collect();
    Ok(DistributionReport {
        n,
        generic_rank,
        generic_codim: 2 * n - generic_rank,
        non_regular_suspected: rank_histogram.len() > 1,
        rank_histogram,
        liouville_at_all_samples: points.iter().all(|pd| pd.contains_liouville),
        coordinate_vertical_at_all_samples: (0..n).map(|i| points.iter().all(|pd| pd.vertical.coordinate_vertical[i])).collect(),
        any_exhausted: points.iter().any(|pd| pd.exhausted),
        sample_digest: sample_digest(&used),
        points,
        skipped,
    })
}

/// Hex SHA-256 over the bit patterns of the sample coordinates.
pub fn sample_digest(points: &[ChartPoint]) -> String {
    use sha2::{Digest, Sha256};
    let mut h = Sha256::new();
    for p in points {
        for v in p.x.iter().chain(&p.y) {
            h.update(v.to_bits().to_le_bytes());
        }
    }
    hex::encode(h.finalize())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Domain, Interval};
    use std::sync::Arc;

    fn example2() -> Arc<SprayModel> {
        Arc::new(
            SprayModel::new(
                "example-2",
                Domain { x: vec![Interval::closed(-2.0, 2.0), Interval::open(0.0, 3.0)], y: vec![Interval::closed(-2.0, 2.0); 2] },
                &["y1^2/(2*x2)", "0"],
                Default::default(),
            )
            .unwrap(),
        )
    }

    fn flat() -> Arc<SprayModel> {
        Arc::new(
            SprayModel::new(
                "flat",
                Domain { x: vec![Interval::closed(-1.0, 1.0); 2], y: vec![Interval::closed(-2.0, 2.0); 2] },
                &["0", "0"],
                Default::default(),
            )
            .unwrap(),
        )
    }

    fn p0() -> ChartPoint {
        ChartPoint::new([0.0, 1.0], [1.0, 1.0])
    }

    #[test]
    fn example_two_frame_bracket() {
        let m = example2();
        let h = m.horizontal_frame();
        let v = bracket(&h[0], &h[1]).eval(&p0().stacked(), 8).unwrap();
        assert_eq!(v.as_slice(), &[0.0, 0.0, -1.0, 0.0]);
    }

    #[test]
    fn self_bracket_vanishes() {
        let m = example2();
        let h = m.horizontal_frame();
        let v = bracket(&h[0], &h[0]).eval(&p0().stacked(), 8).unwrap();
        assert!(v.iter().all(|c| *c == 0.0));
    }

    #[test]
    fn example_two_saturates_at_three() {
        let s = saturate(&example2(), &p0(), &SaturationConfig::for_dimension(2)).unwrap();
        assert_eq!(s.rank, 3);
        assert_eq!(s.words[2].to_string(), "[h1,h2]");
        assert!(!s.exhausted);
        let d = vertical_diagnostics(&s.basis, 2, 1e-6, 1e-8);
        assert_eq!(d.vertical_rank, 1);
        assert_eq!(d.coordinate_vertical, vec![true, false]);
    }

    #[test]
    fn flat_spray_is_purely_horizontal() {
        let p = ChartPoint::new([0.2, -0.4], [0.3, 1.5]);
        let s = saturate(&flat(), &p, &SaturationConfig::for_dimension(2)).unwrap();
        assert_eq!(s.rank, 2);
        let (inside, residual) = contains_liouville(&s.basis, &p, 1e-6);
        assert!(!inside);
        assert!((residual - 1.0).abs() < 1e-15);
        let d = vertical_diagnostics(&s.basis, 2, 1e-6, 1e-8);
        assert_eq!(d.vertical_rank, 0);
        assert_eq!(d.coordinate_vertical, vec![false, false]);
    }

    #[test]
    fn depth_budget_clamps_bracket_depth() {
        let cfg = SaturationConfig { rank_tol: 1e-8, max_bracket_depth: 4, max_ad_depth: 2, with_liouville: false };
        let s = saturate(&example2(), &p0(), &cfg).unwrap();
        assert_eq!(s.bracket_depth, 1);
        assert_eq!(s.rank, 3);
    }

    #[test]
    fn liouville_generator_adds_at_most_one() {
        let m = example2();
        let mut cfg = SaturationConfig::for_dimension(2);
        let base = saturate(&m, &p0(), &cfg).unwrap().rank;
        cfg.with_liouville = true;
        let with_c = saturate(&m, &p0(), &cfg).unwrap().rank;
        assert!(with_c <= base + 1);
        assert_eq!(with_c, 4);
    }

    #[test]
    fn aggregate_over_samples() {
        let pts = vec![p0(), ChartPoint::new([0.5, 2.0], [-0.3, 0.7])];
        let cfg = DistributionConfig { saturation: SaturationConfig::for_dimension(2), membership_tol: 1e-6 };
        let r = analyze_distribution(&example2(), &pts, &cfg).unwrap();
        assert_eq!(r.generic_rank, 3);
        assert_eq!(r.generic_codim, 1);
        assert_eq!(r.rank_histogram, BTreeMap::from([(3, 2)]));
        assert!(!r.non_regular_suspected);
        assert_eq!(r.coordinate_vertical_at_all_samples, vec![true, false]);
        assert!(analyze_distribution(&example2(), &[], &cfg).is_err());
    }

    #[test]
    fn failing_samples_are_skipped_with_notice() {
        let pts = vec![p0(), ChartPoint::new([0.0, -1.0], [1.0, 1.0])];
        let cfg = DistributionConfig { saturation: SaturationConfig::for_dimension(2), membership_tol: 1e-6 };
        let r = analyze_distribution(&example2(), &pts, &cfg).unwrap();
        assert_eq!(r.points.len(), 1);
        assert_eq!(r.skipped.len(), 1);
        assert_eq!(r.skipped[0].0, 1);
    }
}
