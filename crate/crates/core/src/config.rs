//! JSON analysis configuration: schema, defaults, validation and sampling.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{ChartPoint, Domain, Interval, SprayModel};
use crate::holonomy::{DistributionConfig, SaturationConfig};
use crate::transport::TransportTask;
use crate::variational::{CheckTolerances, Combiner};

/// Schema identifier of configuration files and reports.
pub const SCHEMA_VERSION: &str = "spray-holonomy/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisConfig {
    pub version: String,
    #[serde(default)]
    pub name: String,
    pub n: usize,
    #[serde(default = "empty_domain")]
    pub domain: Domain,
    #[serde(default)]
    pub coefficients: Vec<String>,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    #[serde(default)]
    pub candidates: Vec<CandidateSpec>,
    #[serde(default)]
    pub combinations: Vec<CombinationSpec>,
    #[serde(default)]
    pub samples: SampleSpec,
    #[serde(default)]
    pub tolerances: Tolerances,
    /// Defaults to `2n`.
    #[serde(default)]
    pub max_bracket_depth: Option<usize>,
    #[serde(default = "default_ad_depth")]
    pub max_ad_depth: usize,
    #[serde(default)]
    pub transport: Vec<TransportTask>,
    /// Report, rather than reject, coefficients that fail the 2-homogeneity check.
    #[serde(default)]
    pub allow_inhomogeneous: bool,
}

fn empty_domain() -> Domain {
    Domain { x: Vec::new(), y: Vec::new() }
}

fn default_ad_depth() -> usize {
    crate::ad::DEFAULT_MAX_DEPTH
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CandidateSpec {
    pub name: String,
    pub expr: String,
    #[serde(default = "default_degree")]
    pub degree: f64,
}

fn default_degree() -> f64 {
    2.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CombinationSpec {
    pub name: String,
    pub inputs: Vec<String>,
    pub combiner: Combiner,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SampleSpec {
    pub count: usize,
    pub seed: u64,
    /// Explicit points; when present, `count` and `seed` are ignored.
    pub points: Option<Vec<ChartPoint>>,
    /// Redraws allowed per sample before giving up.
    pub retry_cap: usize,
}

impl Default for SampleSpec {
    fn default() -> Self {
        SampleSpec { count: 50, seed: 0, points: None, retry_cap: 100 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    pub rank: f64,
    pub el: f64,
    pub invariance: f64,
    pub homogeneity: f64,
    pub hessian: f64,
    pub membership: f64,
    pub curvature: f64,
    pub isotropy: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            rank: 1e-8,
            el: 1e-8,
            invariance: 1e-7,
            homogeneity: 1e-9,
            hessian: 1e-8,
            membership: 1e-6,
            curvature: 1e-9,
            isotropy: 1e-8,
        }
    }
}

impl Tolerances {
    pub fn checks(&self) -> CheckTolerances {
        CheckTolerances { homogeneity: self.homogeneity, el: self.el, invariance: self.invariance, hessian: self.hessian }
    }

    fn named(&self) -> [(&'static str, f64); 8] {
        [
            ("rank", self.rank),
            ("el", self.el),
            ("invariance", self.invariance),
            ("homogeneity", self.homogeneity),
            ("hessian", self.hessian),
            ("membership", self.membership),
            ("curvature", self.curvature),
            ("isotropy", self.isotropy),
        ]
    }
}

fn field(name: &str, msg: impl std::fmt::Display) -> Error {
    Error::Config(format!("{name}: {msg}"))
}

impl AnalysisConfig {
    pub fn from_json(text: &str) -> Result<AnalysisConfig> {
        let cfg: AnalysisConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("configuration serializes")
    }

    pub fn max_bracket_depth(&self) -> usize {
        self.max_bracket_depth.unwrap_or(2 * self.n)
    }

    pub fn distribution_config(&self) -> DistributionConfig {
        DistributionConfig {
            saturation: SaturationConfig {
                rank_tol: self.tolerances.rank,
                max_bracket_depth: self.max_bracket_depth(),
                max_ad_depth: self.max_ad_depth,
                with_liouville: false,
            },
            membership_tol: self.tolerances.membership,
        }
    }

    /// Checks every invariant that the schema alone cannot express.
    pub fn validate(&self) -> Result<()> {
        if self.version != SCHEMA_VERSION {
            return Err(field("version", format!("expected \"{SCHEMA_VERSION}\", found \"{}\"", self.version)));
        }
        let n = self.n;
        if n < 2 {
            return Err(field("n", "n ≥ 2 required"));
        }
        if self.domain.x.len() != n || self.domain.y.len() != n {
            return Err(field("domain", format!("needs {n} x and {n} y intervals")));
        }
        let check_box = |kind: &str, ivs: &[Interval]| -> Result<()> {
            for (i, iv) in ivs.iter().enumerate() {
                if !iv.is_nonempty() {
                    return Err(field(&format!("domain.{kind}[{i}]"), "interval is empty or unbounded"));
                }
            }
            Ok(())
        };
        check_box("x", &self.domain.x)?;
        check_box("y", &self.domain.y)?;
        if self.coefficients.len() != n {
            return Err(field("coefficients", format!("expected {n} expressions, found {}", self.coefficients.len())));
        }
        if self.samples.points.is_none() && self.samples.count < 1 {
            return Err(field("samples.count", "count ≥ 1 required"));
        }
        if let Some(points) = &self.samples.points {
            if points.is_empty() {
                return Err(field("samples.points", "explicit point list is empty"));
            }
            if let Some(p) = points.iter().find(|p| p.x.len() != n || p.y.len() != n) {
                return Err(field("samples.points", format!("point {p:?} does not have dimension {n}")));
            }
        }
        if self.samples.retry_cap < 1 {
            return Err(field("samples.retry_cap", "must be at least 1"));
        }
        for (name, v) in self.tolerances.named() {
            if !(v > 0.0 && v.is_finite()) {
                return Err(field(&format!("tolerances.{name}"), "must be positive and finite"));
            }
        }
        if self.max_ad_depth < 2 {
            return Err(field("max_ad_depth", "must be at least 2 (curvature needs second derivatives)"));
        }
        if self.max_bracket_depth() < 1 {
            return Err(field("max_bracket_depth", "must be at least 1"));
        }
        let mut names = BTreeSet::new();
        for c in &self.candidates {
            if !names.insert(c.name.as_str()) {
                return Err(field("candidates", format!("duplicate name `{}`", c.name)));
            }
            if !c.degree.is_finite() {
                return Err(field(&format!("candidates.{}.degree", c.name), "must be finite"));
            }
        }
        for c in &self.combinations {
            if !names.insert(c.name.as_str()) {
                return Err(field("combinations", format!("duplicate name `{}`", c.name)));
            }
            if let Some(missing) = c.inputs.iter().find(|i| !self.candidates.iter().any(|k| &k.name == *i)) {
                return Err(field(&format!("combinations.{}", c.name), format!("unknown input `{missing}`")));
            }
        }
        let mut tasks = BTreeSet::new();
        for t in &self.transport {
            if !tasks.insert(t.name.as_str()) {
                return Err(field("transport", format!("duplicate task `{}`", t.name)));
            }
            if t.v0.len() != n {
                return Err(field(&format!("transport.{}.v0", t.name), format!("expected {n} entries")));
            }
            if t.steps < 1 {
                return Err(field(&format!("transport.{}.steps", t.name), "must be positive"));
            }
            if let Some(c) = &t.candidate {
                if !names.contains(c.as_str()) {
                    return Err(field(&format!("transport.{}.candidate", t.name), format!("unknown candidate `{c}`")));
                }
            }
        }
        Ok(())
    }

    pub fn model(&self) -> Result<SprayModel> {
        let coeffs: Vec<&str> = self.coefficients.iter().map(String::as_str).collect();
        SprayModel::new(self.name.clone(), self.domain.clone(), &coeffs, self.params.clone())
    }

    /// Hex SHA-256 of the canonical (defaults filled) serialization.
    pub fn hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let canonical = serde_json::to_string(self).expect("configuration serializes");
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }
}

pub fn load_config(path: impl AsRef<Path>) -> Result<AnalysisConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    AnalysisConfig::from_json(&text).map_err(|e| match e {
        Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
        other => other,
    })
}

fn draw(rng: &mut ChaCha8Rng, iv: &Interval) -> f64 {
    if iv.min == iv.max {
        return iv.min;
    }
    loop {
        let v = rng.gen_range(iv.min..=iv.max);
        if iv.contains(v) {
            return v;
        }
    }
}

/// Samples uniformly in the domain box, redrawing points at which `accept`
/// fails, up to `retry_cap` redraws per sample.
pub fn draw_samples(
    cfg: &AnalysisConfig,
    model: &SprayModel,
    seed: u64,
    accept: impl Fn(&ChartPoint) -> Result<()>,
) -> Result<(Vec<ChartPoint>, usize)> {
    if let Some(points) = &cfg.samples.points {
        for p in points {
            model.check_admissible(p)?;
        }
        return Ok((points.clone(), 0));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(cfg.samples.count);
    let mut redraws = 0;
    while out.len() < cfg.samples.count {
        let mut tries = 0;
        loop {
            let x: Vec<f64> = cfg.domain.x.iter().map(|iv| draw(&mut rng, iv)).collect();
            let y: Vec<f64> = cfg.domain.y.iter().map(|iv| draw(&mut rng, iv)).collect();
            let p = ChartPoint::new(x, y);
            if model.check_admissible(&p).and_then(|_| accept(&p)).is_ok() {
                out.push(p);
                break;
            }
            tries += 1;
            redraws += 1;
            if tries >= cfg.samples.retry_cap {
                return Err(Error::Analysis(format!(
                    "retry cap {} exhausted while drawing sample {} (domain too thin?)",
                    cfg.samples.retry_cap,
                    out.len() + 1
                )));
            }
        }
    }
    Ok((out, redraws))
}
