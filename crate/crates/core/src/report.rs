//! Verification reports shared by every checker.

use std::collections::BTreeMap;
use std::sync::RwLock;

use serde::Serialize;
use serde_json::Value;

static TOLERANCE_OVERRIDES: RwLock<BTreeMap<String, f64>> = RwLock::new(BTreeMap::new());

/// Replaces the tolerance of every report created afterwards whose id is a key.
pub fn set_tolerance_overrides(overrides: BTreeMap<String, f64>) {
    *TOLERANCE_OVERRIDES.write().expect("tolerance table poisoned") = overrides;
}

/// Ids of every report produced by the checkers, for validating overrides.
pub const REPORT_IDS: &[&str] = &[
    "dual-transport-plus",
    "dual-transport-minus",
    "inf-convolution-t2",
    "mls-convex",
    "mls-concave",
    "weak-transport-plus",
    "weak-transport-minus",
    "concentration-lipschitz",
    "concentration-self-normalized",
    "concentration-lower-quantile",
    "concentration-lower-mean",
    "concentration-lower-moment",
];

/// One failed instance of an inequality.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct Violation {
    pub instance: usize,
    pub lhs: f64,
    pub rhs: f64,
    /// `rhs - lhs`, negative here by definition.
    pub slack: f64,
    pub inputs: Value,
}

/// Outcome of checking `lhs <= rhs` over many instances.
///
/// An instance is a violation when `rhs - lhs < -tolerance`.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct VerificationReport {
    pub id: String,
    pub instances: usize,
    /// Smallest `rhs - lhs` seen; `None` until a non-vacuous instance is recorded.
    pub worst_slack: Option<f64>,
    /// Largest `lhs / rhs` over instances with positive `rhs`.
    pub worst_ratio: Option<f64>,
    pub tolerance: f64,
    /// Instances where the bound carries no information (infinite or >= 1 for probabilities).
    pub vacuous: usize,
    pub violations: Vec<Violation>,
}

impl VerificationReport {
    pub fn new(id: impl Into<String>, tolerance: f64) -> Self {
        let id = id.into();
        let tolerance = TOLERANCE_OVERRIDES.read().expect("tolerance table poisoned").get(&id).copied().unwrap_or(tolerance);
        VerificationReport {
            id,
            instances: 0,
            worst_slack: None,
            worst_ratio: None,
            tolerance,
            vacuous: 0,
            violations: Vec::new(),
        }
    }

    /// Records one instance of `lhs <= rhs`; `inputs` is kept only on violation.
    pub fn record(&mut self, instance: usize, lhs: f64, rhs: f64, inputs: impl FnOnce() -> Value) {
        self.instances += 1;
        let slack = rhs - lhs;
        if slack.is_nan() {
            self.violations.push(Violation { instance, lhs, rhs, slack, inputs: inputs() });
            return;
        }
        self.worst_slack = Some(self.worst_slack.map_or(slack, |w| w.min(slack)));
        if rhs > 0.0 && rhs.is_finite() {
            let ratio = lhs / rhs;
            self.worst_ratio = Some(self.worst_ratio.map_or(ratio, |w| w.max(ratio)));
        }
        if slack < -self.tolerance {
            self.violations.push(Violation { instance, lhs, rhs, slack, inputs: inputs() });
        }
    }

    pub fn record_vacuous(&mut self) {
        self.instances += 1;
        self.vacuous += 1;
    }

    /// Folds another report for the same inequality into this one.
    pub fn merge(&mut self, other: VerificationReport) {
        self.instances += other.instances;
        self.vacuous += other.vacuous;
        self.worst_slack = match (self.worst_slack, other.worst_slack) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        };
        self.worst_ratio = match (self.worst_ratio, other.worst_ratio) {
            (Some(a), Some(b)) => Some(a.max(b)),
            (a, b) => a.or(b),
        };
        self.violations.extend(other.violations);
        self.violations.sort_by_key(|v| v.instance);
    }

    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}
