//! The end-to-end pipeline from a configuration to a report.

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{draw_samples, AnalysisConfig, SCHEMA_VERSION};
use crate::error::{Error, Result};
use crate::geometry::{self, SprayModel};
use crate::holonomy::{self, DistributionReport};
use crate::transport::{self, TransportOutcome};
use crate::variational::{self, CandidateReport, ClassificationVerdict, IsotropySummary, LagrangianCandidate};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HomogeneityValidation {
    /// `max |y^j dG^i/dy^j - 2 G^i| / max(1, |G|)` over the samples.
    pub max_residual: f64,
    pub passed: bool,
    pub allow_inhomogeneous: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransportEntry {
    pub name: String,
    pub outcome: Option<TransportOutcome>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub schema: String,
    pub name: String,
    pub config_hash: String,
    pub seed: u64,
    pub n: usize,
    pub samples_requested: usize,
    pub redraws: usize,
    pub homogeneity: HomogeneityValidation,
    pub distribution: DistributionReport,
    pub isotropy: IsotropySummary,
    pub candidates: Vec<CandidateReport>,
    pub verdict: ClassificationVerdict,
    pub transport: Vec<TransportEntry>,
    pub warnings: Vec<String>,
}

/// Candidates of a configuration, combinations included. Combinations whose
/// positivity check fails at `points` are dropped with a warning.
pub fn build_candidates(
    cfg: &AnalysisConfig,
    model: &SprayModel,
    points: &[geometry::ChartPoint],
    warnings: &mut Vec<String>,
) -> Result<Vec<LagrangianCandidate>> {
    let mut out = cfg
        .candidates
        .iter()
        .map(|c| LagrangianCandidate::parse(model, &c.name, &c.expr, c.degree))
        .collect::<Result<Vec<_>>>()?;
    for spec in &cfg.combinations {
        let inputs: Vec<&LagrangianCandidate> =
            spec.inputs.iter().map(|name| out.iter().find(|c| &c.name == name).expect("validated")).collect();
        match variational::combine(model, &spec.name, &inputs, &spec.combiner, points) {
            Ok(c) => out.push(c),
            Err(e) => warnings.push(format!("combination `{}` dropped: {e}", spec.name)),
        }
    }
    Ok(out)
}

/// Draws the configured samples, redrawing points where the coefficients or
/// a candidate cannot be evaluated.
pub fn sample_points(cfg: &AnalysisConfig, model: &SprayModel, seed: u64) -> Result<(Vec<geometry::ChartPoint>, usize)> {
    let candidates = build_candidates(cfg, model, &[], &mut Vec::new())?;
    draw_samples(cfg, model, seed, |p| {
        model.expand(p, 2)?;
        for c in &candidates {
            model.eval_expr(&c.expr, &p.stacked())?;
        }
        Ok(())
    })
}

fn homogeneity_scale(model: &SprayModel, p: &geometry::ChartPoint) -> Result<f64> {
    let res = geometry::homogeneity_residual(model, p)?;
    let g = model.g_values(p)?;
    let scale = g.iter().fold(1.0f64, |m, v| m.max(f64::abs(*v)));
    Ok(res.iter().fold(0.0f64, |m, v| m.max(f64::abs(*v))) / scale)
}

/// Runs the full pipeline. `seed` overrides the configured sampling seed.
pub fn run_analysis(cfg: &AnalysisConfig, seed: Option<u64>) -> Result<AnalysisReport> {
    cfg.validate()?;
    let model = cfg.model()?;
    let seed = seed.unwrap_or(cfg.samples.seed);
    let mut warnings = Vec::new();

    let (samples, redraws) = sample_points(cfg, &model, seed)?;
    if redraws > 0 {
        warnings.push(format!("{redraws} sample draws were rejected and redrawn"));
    }

    let residuals: Vec<f64> = samples.par_iter().map(|p| homogeneity_scale(&model, p)).collect::<Result<_>>()?;
    let max_residual = residuals.iter().fold(0.0, |m: f64, v| m.max(*v));
    let homogeneity = HomogeneityValidation {
        max_residual,
        passed: max_residual < cfg.tolerances.homogeneity,
        allow_inhomogeneous: cfg.allow_inhomogeneous,
    };
    if !homogeneity.passed {
        let msg = format!("coefficients are not 2-homogeneous in y (max residual {max_residual:e})");
        if !cfg.allow_inhomogeneous {
            return Err(Error::Analysis(msg));
        }
        warnings.push(msg);
    }

    let distribution = holonomy::analyze_distribution(&model, &samples, &cfg.distribution_config())?;
    let requested = samples.len();
    if 2 * distribution.points.len() < requested {
        return Err(Error::Analysis(format!(
            "only {} of {requested} samples could be analyzed",
            distribution.points.len()
        )));
    }
    for (idx, why) in &distribution.skipped {
        warnings.push(format!("sample {idx} skipped: {why}"));
    }
    if distribution.any_exhausted {
        warnings.push("bracket depth budget exhausted at some samples; their rank is a lower bound".into());
    }
    if distribution.non_regular_suspected {
        warnings.push(format!("rank varies across samples {:?}; non-regular points suspected", distribution.rank_histogram));
    }
    let used: Vec<geometry::ChartPoint> = distribution.points.iter().map(|p| p.point.clone()).collect();

    let isotropy =
        variational::isotropy_summary(&model, &used, cfg.tolerances.curvature, cfg.tolerances.isotropy)?;
    let candidates = build_candidates(cfg, &model, &used, &mut warnings)?;
    let checks = cfg.tolerances.checks();
    let candidate_reports: Vec<CandidateReport> =
        candidates.iter().map(|c| variational::candidate_report(&model, c, &distribution, &checks)).collect();
    let verdict = variational::classify(&distribution, &candidate_reports, &isotropy, cfg.tolerances.curvature)?;
    warnings.extend(verdict.hard_diagnostics.iter().cloned());

    let transport = cfg
        .transport
        .par_iter()
        .map(|task| {
            let cand = task.candidate.as_ref().and_then(|name| candidates.iter().find(|c| &c.name == name));
            match (&task.candidate, cand) {
                (Some(name), None) => TransportEntry {
                    name: task.name.clone(),
                    outcome: None,
                    error: Some(format!("candidate `{name}` is unavailable")),
                },
                _ => match transport::run_task(&model, task, cand.map(|c| &c.expr)) {
                    Ok(o) => TransportEntry { name: task.name.clone(), outcome: Some(o), error: None },
                    Err(e) => TransportEntry { name: task.name.clone(), outcome: None, error: Some(e.to_string()) },
                },
            }
        })
        .collect::<Vec<_>>();
    for t in &transport {
        if let Some(e) = &t.error {
            warnings.push(format!("transport task `{}` failed: {e}", t.name));
        }
    }

    Ok(AnalysisReport {
        schema: SCHEMA_VERSION.to_string(),
        name: cfg.name.clone(),
        config_hash: cfg.hash(),
        seed,
        n: cfg.n,
        samples_requested: requested,
        redraws,
        homogeneity,
        distribution,
        isotropy,
        candidates: candidate_reports,
        verdict,
        transport,
        warnings,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Json,
    Text,
}

impl AnalysisReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<AnalysisReport> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("report: {e}")))
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let d = &self.distribution;
        let v = &self.verdict;
        let _ = writeln!(s, "spray: {} (n = {})", self.name, self.n);
        let _ = writeln!(s, "config hash: {}", self.config_hash);
        let _ = writeln!(s, "seed: {}  samples: {} analyzed of {}", self.seed, d.points.len(), self.samples_requested);
        let _ = writeln!(
            s,
            "homogeneity: {} (max residual {:e})",
            if self.homogeneity.passed { "ok" } else { "FAILED" },
            self.homogeneity.max_residual
        );
        let _ = writeln!(s);
        let _ = writeln!(s, "verdict: vh(2) = {}, metrizability freedom = {}, rule {}", v.vh2, v.metrizability, v.rule);
        let _ = writeln!(s, "assumptions:");
        for a in &v.assumptions {
            let _ = writeln!(s, "  - {a}");
        }
        let _ = writeln!(s, "evidence:");
        for e in &v.evidence {
            let _ = writeln!(s, "  - {e}");
        }
        for h in &v.hard_diagnostics {
            let _ = writeln!(s, "HARD DIAGNOSTIC: {h}");
        }
        let _ = writeln!(s);
        let _ = writeln!(s, "holonomy distribution: generic rank {}, codim {}", d.generic_rank, d.generic_codim);
        let _ = writeln!(s, "  rank  samples");
        for (rank, count) in &d.rank_histogram {
            let _ = writeln!(s, "  {rank:>4}  {count:>7}");
        }
        let _ = writeln!(s, "Liouville field in distribution at all samples: {}", d.liouville_at_all_samples);
        for (i, flag) in d.coordinate_vertical_at_all_samples.iter().enumerate() {
            if *flag {
                let _ = writeln!(s, "coordinate-vertical obstruction: y{}", i + 1);
            }
        }
        let iso = &self.isotropy;
        let _ = writeln!(
            s,
            "curvature: max |R| = {:e}; isotropic at all samples: {} (max residual {:e})",
            iso.max_curvature, iso.isotropic_at_all_samples, iso.max_isotropy_residual
        );
        if !self.candidates.is_empty() {
            let _ = writeln!(s);
            let _ = writeln!(s, "candidates:");
            let _ = writeln!(
                s,
                "  {:<16} {:>11} {:>11} {:>11} {:>10}  verdict",
                "name", "homog", "EL", "invariance", "min sv"
            );
            for c in &self.candidates {
                let class = if c.all_positive_definite {
                    "positive definite"
                } else if c.all_regular {
                    "regular"
                } else {
                    "not regular"
                };
                let _ = writeln!(
                    s,
                    "  {:<16} {:>11.3e} {:>11.3e} {:>11.3e} {:>10.3e}  {}, {}",
                    c.name,
                    c.max_homogeneity,
                    c.max_el,
                    c.max_invariance,
                    c.min_relative_singular_value,
                    class,
                    if c.passes { "passes" } else { "fails" }
                );
            }
        }
        if !self.transport.is_empty() {
            let _ = writeln!(s);
            let _ = writeln!(s, "transport:");
            for t in &self.transport {
                match (&t.outcome, &t.error) {
                    (Some(o), _) => {
                        let _ = write!(
                            s,
                            "  {}: |tau(v) - v| = {:e}, error estimate {:e}",
                            t.name, o.deviation, o.result.error_estimate
                        );
                        if let (Some(d), Some(c)) = (o.drift, &o.candidate) {
                            let _ = write!(s, ", drift of {c} = {d:e}");
                        }
                        let _ = writeln!(s);
                    }
                    (None, Some(e)) => {
                        let _ = writeln!(s, "  {}: failed: {e}", t.name);
                    }
                    (None, None) => {}
                }
            }
        }
        if !self.warnings.is_empty() {
            let _ = writeln!(s);
            let _ = writeln!(s, "warnings:");
            for w in &self.warnings {
                let _ = writeln!(s, "  - {w}");
            }
        }
        s
    }

    pub fn render(&self, format: Format) -> String {
        match format {
            Format::Json => self.to_json(),
            Format::Text => self.to_text(),
        }
    }
}

/// Writes the report to `path`, or to standard output when `path` is `None`.
pub fn emit(report: &AnalysisReport, format: Format, path: Option<&Path>) -> Result<()> {
    let mut text = report.render(format);
    if !text.ends_with('\n') {
        text.push('\n');
    }
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| Error::Io(format!("{}: {e}", p.display()))),
        None => {
            use std::io::Write;
            match std::io::stdout().lock().write_all(text.as_bytes()) {
                Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
                _ => Ok(()),
            }
        }
    }
}
