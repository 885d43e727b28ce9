//! The four worked example sprays with their expected outcomes.

use crate::analysis::AnalysisReport;
use crate::config::AnalysisConfig;
use crate::error::Result;
use crate::geometry::SprayModel;
use crate::variational::{Estimate, LagrangianCandidate, Rule};

const SOURCES: [&str; 4] = [
    include_str!("../configs/example1.json"),
    include_str!("../configs/example2.json"),
    include_str!("../configs/example3.json"),
    include_str!("../configs/example4.json"),
];

/// Bounds a transport task of the example must satisfy.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportExpectation {
    pub task: &'static str,
    pub min_deviation: Option<f64>,
    pub max_deviation: Option<f64>,
    pub max_drift: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Expected {
    pub rule: Rule,
    pub vh2: Estimate,
    pub metrizability: Estimate,
    pub generic_rank: usize,
    pub transport: Vec<TransportExpectation>,
}

#[derive(Debug, Clone)]
pub struct BuiltinExample {
    pub id: u8,
    pub config: AnalysisConfig,
    pub expected: Expected,
}

impl BuiltinExample {
    pub fn model(&self) -> Result<SprayModel> {
        self.config.model()
    }

    /// Declared candidates and combinations (combinations unchecked for positivity).
    pub fn candidates(&self) -> Result<Vec<LagrangianCandidate>> {
        let model = self.model()?;
        crate::analysis::build_candidates(&self.config, &model, &[], &mut Vec::new())
    }

    /// Differences between `report` and the expected outcome; empty when it matches.
    pub fn mismatches(&self, report: &AnalysisReport) -> Vec<String> {
        let e = &self.expected;
        let v = &report.verdict;
        let mut out = Vec::new();
        if v.rule != e.rule {
            out.push(format!("rule {} (expected {})", v.rule, e.rule));
        }
        if v.vh2 != e.vh2 {
            out.push(format!("vh(2) = {} (expected {})", v.vh2, e.vh2));
        }
        if v.metrizability != e.metrizability {
            out.push(format!("metrizability freedom = {} (expected {})", v.metrizability, e.metrizability));
        }
        if !v.hard_diagnostics.is_empty() {
            out.push(format!("hard diagnostics: {}", v.hard_diagnostics.join("; ")));
        }
        if report.distribution.generic_rank != e.generic_rank {
            out.push(format!("generic rank {} (expected {})", report.distribution.generic_rank, e.generic_rank));
        }
        for t in &e.transport {
            let Some(entry) = report.transport.iter().find(|x| x.name == t.task) else {
                out.push(format!("transport task `{}` missing", t.task));
                continue;
            };
            let Some(o) = &entry.outcome else {
                out.push(format!("transport task `{}` failed: {}", t.task, entry.error.clone().unwrap_or_default()));
                continue;
            };
            if let Some(lo) = t.min_deviation {
                if !(o.deviation > lo) {
                    out.push(format!("`{}` deviation {:e} not above {lo:e}", t.task, o.deviation));
                }
            }
            if let Some(hi) = t.max_deviation {
                if !(o.deviation < hi) {
                    out.push(format!("`{}` deviation {:e} not below {hi:e}", t.task, o.deviation));
                }
            }
            if let Some(hi) = t.max_drift {
                match o.drift {
                    Some(d) if d < hi => {}
                    other => out.push(format!("`{}` drift {other:?} not below {hi:e}", t.task)),
                }
            }
        }
        out
    }
}

fn expected(id: u8) -> Expected {
    let none = Vec::new;
    match id {
        1 => Expected { rule: Rule::R1, vh2: Estimate::Known(0), metrizability: Estimate::Known(0), generic_rank: 4, transport: none() },
        2 => Expected { rule: Rule::R2, vh2: Estimate::Known(0), metrizability: Estimate::Known(0), generic_rank: 3, transport: none() },
        3 => Expected {
            rule: Rule::R3R4,
            vh2: Estimate::Known(1),
            metrizability: Estimate::Known(1),
            generic_rank: 3,
            transport: vec![
                TransportExpectation { task: "loop", min_deviation: Some(1e-3), max_deviation: None, max_drift: Some(1e-6) },
                TransportExpectation { task: "loop-euclid", min_deviation: Some(1e-3), max_deviation: None, max_drift: None },
            ],
        },
        4 => Expected {
            rule: Rule::R0,
            vh2: Estimate::Known(2),
            metrizability: Estimate::Known(2),
            generic_rank: 2,
            transport: vec![TransportExpectation {
                task: "flat-loop",
                min_deviation: None,
                max_deviation: Some(1e-7),
                max_drift: None,
            }],
        },
        _ => unreachable!("four builtin examples"),
    }
}

/// Raw JSON of builtin example `id` (1 to 4).
pub fn config_source(id: u8) -> Option<&'static str> {
    SOURCES.get(usize::from(id).checked_sub(1)?).copied()
}

pub fn builtin_examples() -> Vec<BuiltinExample> {
    (1..=4u8)
        .map(|id| BuiltinExample {
            id,
            config: AnalysisConfig::from_json(config_source(id).expect("bundled")).expect("bundled configs are valid"),
            expected: expected(id),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn four_examples_load() {
        let all = builtin_examples();
        assert_eq!(all.len(), 4);
        let ex2 = &all[1];
        assert_eq!(ex2.config.n, 2);
        assert!(ex2.config.domain.x[1].min == 0.0 && ex2.config.domain.x[1].min_strict);
        assert!(ex2.candidates().unwrap().iter().all(|c| c.name != "E_mu"));
        assert!(all[3].candidates().unwrap().len() >= 2);
    }
}
