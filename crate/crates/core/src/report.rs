//! Run report: the stable, serializable record of one engine run.
//!
//! Field order is the serialization order; everything inside is a
//! deterministic function of (scenario, seed, version).

use serde::{Deserialize, Serialize};

use crate::measures::{Params, Totals};

pub const REPORT_VERSION: &str = "1";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Meta {
    pub version: String,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Ledger {
    pub lhs: f64,
    pub rhs: f64,
}

impl Ledger {
    pub fn holds(&self, rel: f64) -> bool {
        self.lhs <= self.rhs + rel * self.rhs.abs().max(1.0)
    }
}

/// Which step the iteration performed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepKind {
    /// Rigid motion certified for the active component.
    Trace,
    /// Weighted-measure minimality failed: replaced by a witness rectangle.
    Replace,
    /// Elastic energy overflow in the ring: absorbed the ring.
    Absorb,
    /// Bridge-energy overflow: merged with the large neighbor.
    Merge,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IterationRecord {
    pub index: usize,
    pub active_component: u32,
    pub case: StepKind,
    pub lambda: f64,
    pub measures: Totals,
    pub alpha: f64,
    /// Total-energy bookkeeping: lhs vs rhs of the running balance.
    pub ledger: Ledger,
    /// Trace step only: measured jump budget ratio.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trace_ratio: Option<f64>,
    pub anomalies: Vec<String>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RectOut {
    pub x0: i32,
    pub y0: i32,
    pub x1: i32,
    pub y1: i32,
    pub diam: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SurfaceBudget {
    pub lhs: f64,
    pub rhs: f64,
    pub theta: f64,
    /// Slack factor actually achieved: lhs / (jump + strain/eps term).
    pub measured_factor: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KornCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
    #[serde(rename = "A")]
    pub a: f64,
    pub b: [f64; 2],
    /// Shrunken-square half side; 0 means the estimate is vacuous.
    pub mu_tilde: f64,
}

/// One split-inequality evaluation on a probe region.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VariationSplit {
    pub region: RectOut,
    pub lhs: f64,
    pub rhs: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SkewDiagnostic {
    pub p2: f64,
    pub p4: f64,
    pub rhs_p2: f64,
    pub rhs_p4: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ComponentTrace {
    pub component: u32,
    pub jump_sq: f64,
    pub budget: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FinalReport {
    pub rectangles: Vec<RectOut>,
    /// `eps ||U||_* + alpha(U) <= (1 + sigma)(eps ||W||_* + alpha(W))`.
    pub total_energy: Ledger,
    pub surface_budget: SurfaceBudget,
    pub korn: KornCheck,
    pub variation_split: Vec<VariationSplit>,
    pub skew_diagnostic: SkewDiagnostic,
    pub component_traces: Vec<ComponentTrace>,
    /// Rectangle diameter vs exclusive-measure check per component:
    /// `|dR|_inf <= (1 + 2 max(h_*, sigma)) |theta|_*`.
    pub rect_measure_ok: bool,
    /// `|W \ U| <= ||U||_inf^2` (areas in cells and physical).
    pub area_loss_ok: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub meta: Meta,
    pub params: Params,
    pub iterations: Vec<IterationRecord>,
    #[serde(rename = "final", skip_serializing_if = "Option::is_none")]
    pub final_report: Option<FinalReport>,
    pub anomalies: Vec<String>,
    pub warnings: Vec<String>,
}
