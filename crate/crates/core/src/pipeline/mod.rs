//! File ingestion, stage orchestration and report emission.

pub mod config;
pub mod io;
mod run;

use serde::{Deserialize, Serialize};

use crate::geo::{HostState, RadarPoint};
use crate::screening::Platform;

pub use config::PipelineConfig;
pub use io::{ingest_trips, write_trips, Diagnostic, Ingested};
pub use run::{
    associate_trip, candidates_for_trip, process_trip, run_pipeline, run_trips, write_outputs, write_screening, CandidateOutcome,
    Comparison, Funnel, ModelSummary, RunReport, RunStatus, TripOutcome, RECORDS_FILE, SCENARIOS_FILE,
    SCREENING_FILE, SUMMARY_FILE, TRACES_FILE,
};

/// One trip's host and forward-radar channels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TripRecord {
    pub trip_id: String,
    pub platform: Platform,
    /// Population label used for comparisons; defaults to the platform code.
    pub label: Option<String>,
    pub host: Vec<HostState>,
    /// Intersection flag per host row.
    pub at_intersection: Vec<bool>,
    /// Radar returns with the reported target id (`-1` when unassociated).
    pub radar: Vec<(RadarPoint, i64)>,
}

impl TripRecord {
    pub fn label(&self) -> &str {
        self.label.as_deref().unwrap_or(self.platform.code())
    }
}
