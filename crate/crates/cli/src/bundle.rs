//! The machine-readable result of a command.
//!
//! Bundles hold no timing or host information, so identical inputs and seeds
//! give byte-identical `bundle.json` files.

use serde::{Deserialize, Serialize};
use weakpovm::engine::{DestructiveSummary, OracleReport, OutcomeStatistics, Verdict};
use weakpovm::{LipovmTree, Povm, PpovmPlan, WalkConfig};

use crate::io::StateSpec;
use crate::Status;

pub const DEFAULT_PHI: f64 = 0.1;
pub const DEFAULT_EPSILON: f64 = 1e-3;
pub const DEFAULT_TRAJECTORIES: usize = 20000;
pub const DEFAULT_SEED: u64 = 0;
pub const DEFAULT_Z_LIMIT: f64 = 3.0;

/// Everything needed to rerun a command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub command: String,
    pub povm_path: String,
    pub labels: Vec<String>,
    pub povm: Povm,
    pub state: Option<StateSpec>,
    /// Resolved walk settings, including the step budget.
    pub walk: WalkConfig,
    pub trajectories: usize,
    pub seed: u64,
    pub z_limit: f64,
    pub depth: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeafSummary {
    pub id: usize,
    pub probability: f64,
    /// Original labels of the leaf elements.
    pub labels: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decomposition {
    pub tree: LipovmTree,
    pub leaves: Vec<LeafSummary>,
    pub plans: Vec<PpovmPlan>,
}

/// A [`Verdict`] with infinite z-scores written as `null`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatisticalCheck {
    pub z_scores: Vec<Option<f64>>,
    pub z_limit: f64,
    pub pass: bool,
}

impl From<&Verdict> for StatisticalCheck {
    fn from(v: &Verdict) -> Self {
        StatisticalCheck {
            z_scores: v.z_scores.iter().map(|z| z.is_finite().then_some(*z)).collect(),
            z_limit: v.z_limit,
            pass: v.pass,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Simulation {
    pub statistics: OutcomeStatistics,
    pub check: StatisticalCheck,
    pub destructive: DestructiveSummary,
    pub non_converged_fraction: f64,
}

/// One oracle run of a leaf plan on one input ket.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleComponent {
    pub leaf: usize,
    /// Leaf probability times the weight of the input ket.
    pub weight: f64,
    pub report: OracleReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleDepth {
    pub depth: usize,
    pub total_probability: f64,
    pub absorbed_mass: f64,
    /// Weighted output masses by label.
    pub output_masses: Vec<f64>,
    pub reference: Vec<f64>,
    pub total_variation: f64,
    pub components: Vec<OracleComponent>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvariantCheck {
    pub name: String,
    /// `None` when the measured value is not finite.
    pub value: Option<f64>,
    pub limit: f64,
    pub pass: bool,
    /// Reported only; does not affect `invariants_pass` or the exit code.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub advisory: bool,
}

impl InvariantCheck {
    /// Passes iff `value <= limit`.
    pub fn at_most(name: impl Into<String>, value: f64, limit: f64) -> Self {
        InvariantCheck {
            name: name.into(),
            value: value.is_finite().then_some(value),
            limit,
            pass: value <= limit,
            advisory: false,
        }
    }

    pub fn advisory(mut self) -> Self {
        self.advisory = true;
        self
    }

    pub fn gates(&self) -> bool {
        !self.advisory
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultBundle {
    pub tool_version: String,
    pub config: RunConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decomposition: Option<Decomposition>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulation: Option<Simulation>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub oracle: Vec<OracleDepth>,
    pub invariants: Vec<InvariantCheck>,
    pub invariants_pass: bool,
    pub status: Status,
}

impl ResultBundle {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("bundle serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        serde_json::from_str(text)
    }
}
