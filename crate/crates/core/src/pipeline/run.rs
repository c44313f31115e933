use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::io::{self, Diagnostic};
use super::{PipelineConfig, TripRecord};
use crate::association::{associate_targets, tracks_from_ids, Association, AssociationConfig};
use crate::error::Result;
use crate::metrics::{compute_metrics, event_id, reconstruct, tcp_trace, ConflictRecord};
use crate::model::{fit_model, sample_scenarios, Bandwidths, SamplingMode, ScenarioSample};
use crate::parallel::{self, Parallelism};
use crate::screening::{screen_candidate, Candidate, Platform, RejectReason, ScreeningConfig};
use crate::stats::{self, build_distribution, mww_test, MwwResult, Variable};

/// Heavy-truck streams are associated here; light-vehicle streams arrive
/// with target ids and are grouped by id.
pub fn associate_trip(trip: &TripRecord, cfg: &AssociationConfig) -> Association {
    match trip.platform {
        Platform::HeavyTruck => {
            let points: Vec<_> = trip.radar.iter().map(|r| r.0).collect();
            associate_targets(&points, cfg)
        }
        Platform::LightVehicle => tracks_from_ids(&trip.radar),
    }
}

pub fn candidates_for_trip(trip: &TripRecord, assoc: &Association) -> Vec<Candidate> {
    assoc
        .tracks
        .iter()
        .map(|tr| Candidate::new(&trip.trip_id, &trip.host, &trip.at_intersection, tr.clone()))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateOutcome {
    pub event_id: String,
    pub trip_id: String,
    pub track_id: u32,
    pub n_points: usize,
    pub start: f64,
    pub end: f64,
    /// `None` when accepted.
    pub rejection: Option<RejectReason>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TripOutcome {
    pub trip_id: String,
    pub radar_points: usize,
    pub tracks: usize,
    pub noise_points: usize,
    pub candidates: Vec<CandidateOutcome>,
    pub records: Vec<ConflictRecord>,
    /// `(event_id, error)` for accepted events whose metrics failed.
    pub metric_failures: Vec<(String, String)>,
    pub multiple_crossings: usize,
    pub traces: Vec<(String, Vec<(f64, f64)>)>,
}

/// Runs association, screening, reconstruction and metrics for one trip.
/// Failures are captured in the outcome rather than returned.
pub fn process_trip(trip: &TripRecord, cfg: &PipelineConfig) -> TripOutcome {
    let assoc = associate_trip(trip, &cfg.association);
    let screening = ScreeningConfig { platform: trip.platform, ..cfg.screening };
    let mut out = TripOutcome {
        trip_id: trip.trip_id.clone(),
        radar_points: trip.radar.len(),
        tracks: assoc.tracks.len(),
        noise_points: assoc.noise.len(),
        ..Default::default()
    };
    for cand in candidates_for_trip(trip, &assoc) {
        let id = event_id(&trip.trip_id, cand.track.track_id);
        let verdict = screen_candidate(&cand, &screening);
        out.candidates.push(CandidateOutcome {
            event_id: id.clone(),
            trip_id: trip.trip_id.clone(),
            track_id: cand.track.track_id,
            n_points: cand.track.points.len(),
            start: cand.track.start(),
            end: cand.track.end(),
            rejection: verdict.as_ref().err().copied(),
        });
        let Ok(event) = verdict else { continue };
        let metrics = reconstruct(&event).and_then(|rec| {
            let record = compute_metrics(&rec)?;
            let trace = if cfg.traces { Some(tcp_trace(&rec)?) } else { None };
            Ok((rec.multiple_crossings, record, trace))
        });
        match metrics {
            Ok((multi, mut record, trace)) => {
                record.label = trip.label().to_string();
                out.multiple_crossings += usize::from(multi);
                out.records.push(record);
                if let Some(tr) = trace {
                    out.traces.push((id, tr));
                }
            }
            Err(e) => out.metric_failures.push((id, e.to_string())),
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Funnel {
    pub trips_in: usize,
    pub trips_rejected: usize,
    pub trips_processed: usize,
    pub radar_points: usize,
    pub tracks: usize,
    pub noise_points: usize,
    pub candidates: usize,
    pub accepted: usize,
    /// Count per first-failing criterion; every reason is listed.
    pub rejections: BTreeMap<String, usize>,
    pub metric_failures: usize,
    pub records: usize,
    pub multiple_crossings: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Success,
    Partial,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub variable: Variable,
    pub label_a: String,
    pub label_b: String,
    pub n_a: usize,
    pub n_b: usize,
    pub result: Option<MwwResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub mode: SamplingMode,
    pub source_records: usize,
    pub samples: usize,
    pub seed: u64,
    pub bandwidths: Option<Bandwidths>,
}

/// Everything a run produces. The serialized form (bulky tables skipped)
/// is `summary.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub status: RunStatus,
    pub funnel: Funnel,
    pub diagnostics: Vec<Diagnostic>,
    /// variable -> population label -> summary (`all` covers every record).
    pub summaries: BTreeMap<String, BTreeMap<String, stats::Summary>>,
    pub comparisons: Vec<Comparison>,
    pub model: Option<ModelSummary>,
    #[serde(skip)]
    pub records: Vec<ConflictRecord>,
    #[serde(skip)]
    pub candidates: Vec<CandidateOutcome>,
    #[serde(skip)]
    pub scenarios: Vec<ScenarioSample>,
    #[serde(skip)]
    pub traces: Vec<(String, Vec<(f64, f64)>)>,
}

impl RunReport {
    pub fn summary_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn assemble(
    outcomes: Vec<TripOutcome>,
    dropped: usize,
    diagnostics: Vec<Diagnostic>,
    cfg: &PipelineConfig,
    par: Parallelism,
) -> Result<RunReport> {
    let mut funnel = Funnel {
        trips_in: outcomes.len() + dropped,
        trips_rejected: dropped,
        trips_processed: outcomes.len(),
        rejections: RejectReason::ALL.iter().map(|r| (r.code().to_string(), 0)).collect(),
        ..Default::default()
    };
    let mut records = Vec::new();
    let mut candidates = Vec::new();
    let mut traces = Vec::new();
    for o in outcomes {
        funnel.radar_points += o.radar_points;
        funnel.tracks += o.tracks;
        funnel.noise_points += o.noise_points;
        funnel.candidates += o.candidates.len();
        for c in &o.candidates {
            match c.rejection {
                None => funnel.accepted += 1,
                Some(r) => *funnel.rejections.entry(r.code().to_string()).or_default() += 1,
            }
        }
        funnel.metric_failures += o.metric_failures.len();
        funnel.multiple_crossings += o.multiple_crossings;
        records.extend(o.records);
        candidates.extend(o.candidates);
        traces.extend(o.traces);
    }
    funnel.records = records.len();

    let labels: BTreeSet<&str> = records.iter().map(|r| r.label.as_str()).collect();
    let mut summaries = BTreeMap::new();
    for &var in &cfg.variables {
        let mut per_label = BTreeMap::new();
        if let Ok(d) = build_distribution(&records, var, "all") {
            per_label.insert("all".to_string(), stats::summarize(&d, cfg.bins));
        }
        if labels.len() > 1 {
            for &label in &labels {
                let subset: Vec<_> = records.iter().filter(|r| r.label == label).cloned().collect();
                if let Ok(d) = build_distribution(&subset, var, label) {
                    per_label.insert(label.to_string(), stats::summarize(&d, cfg.bins));
                }
            }
        }
        summaries.insert(var.code().to_string(), per_label);
    }

    let pair = cfg.compare.clone().or_else(|| {
        let mut it = labels.iter();
        match (it.next(), it.next(), it.next()) {
            (Some(a), Some(b), None) => Some((a.to_string(), b.to_string())),
            _ => None,
        }
    });
    let mut comparisons = Vec::new();
    if let Some((la, lb)) = pair {
        let pick = |l: &str| records.iter().filter(|r| r.label == l).cloned().collect::<Vec<_>>();
        let (ra, rb) = (pick(&la), pick(&lb));
        for &var in &cfg.variables {
            let da = build_distribution(&ra, var, la.as_str()).ok();
            let db = build_distribution(&rb, var, lb.as_str()).ok();
            let result = match (&da, &db) {
                (Some(a), Some(b)) => mww_test(a, b).ok(),
                _ => None,
            };
            comparisons.push(Comparison {
                variable: var,
                label_a: la.clone(),
                label_b: lb.clone(),
                n_a: da.as_ref().map_or(0, |d| d.samples.len()),
                n_b: db.as_ref().map_or(0, |d| d.samples.len()),
                result,
            });
        }
    }

    let (model, scenarios) = match cfg.model_mode {
        Some(mode) if records.len() >= 2 => {
            let m = fit_model(&records, mode)?;
            let s = sample_scenarios(&m, cfg.model_samples, cfg.seed, par)?;
            let summary = ModelSummary {
                mode,
                source_records: m.len(),
                samples: s.len(),
                seed: cfg.seed,
                bandwidths: m.bandwidths,
            };
            (Some(summary), s)
        }
        _ => (None, Vec::new()),
    };

    let status = if funnel.trips_in > 0 && funnel.trips_processed == 0 {
        RunStatus::Failed
    } else if funnel.trips_rejected > 0 || funnel.metric_failures > 0 {
        RunStatus::Partial
    } else {
        RunStatus::Success
    };

    Ok(RunReport {
        status,
        funnel,
        diagnostics,
        summaries,
        comparisons,
        model,
        records,
        candidates,
        scenarios,
        traces,
    })
}

/// Runs every stage over in-memory trips.
pub fn run_trips(trips: &[TripRecord], cfg: &PipelineConfig) -> Result<RunReport> {
    cfg.validate()?;
    let par = Parallelism::from_jobs(cfg.jobs);
    let outcomes = parallel::map(trips, par, |t| process_trip(t, cfg));
    assemble(outcomes, 0, Vec::new(), cfg, par)
}

/// Ingests `cfg.input`, runs every stage and writes the report files to
/// `cfg.output`.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<RunReport> {
    cfg.validate()?;
    let par = Parallelism::from_jobs(cfg.jobs);
    let ingested = io::ingest_trips(&cfg.input, cfg.screening.platform)?;
    let outcomes = parallel::map(&ingested.trips, par, |t| process_trip(t, cfg));
    let report = assemble(outcomes, ingested.dropped_trips.len(), ingested.diagnostics, cfg, par)?;
    write_outputs(&report, &cfg.output)?;
    Ok(report)
}

pub const RECORDS_FILE: &str = "conflict_records.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const SCENARIOS_FILE: &str = "scenarios.csv";
pub const SCREENING_FILE: &str = "screening.csv";
pub const TRACES_FILE: &str = "tcp_traces.csv";

pub fn write_outputs(report: &RunReport, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    io::write_conflict_records(&dir.join(RECORDS_FILE), &report.records)?;
    std::fs::write(dir.join(SUMMARY_FILE), report.summary_json()? + "\n")?;
    if report.model.is_some() {
        io::write_scenarios(&dir.join(SCENARIOS_FILE), &report.scenarios)?;
    }
    write_screening(&dir.join(SCREENING_FILE), &report.candidates)?;
    if !report.traces.is_empty() {
        let mut w = csv::Writer::from_path(dir.join(TRACES_FILE))?;
        w.write_record(["event_id", "t_rel", "t_cp"])?;
        for (id, trace) in &report.traces {
            for (t, v) in trace {
                w.write_record([id.clone(), t.to_string(), v.to_string()])?;
            }
        }
        w.flush()?;
    }
    Ok(())
}

pub fn write_screening(path: &Path, candidates: &[CandidateOutcome]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["event_id", "trip_id", "track_id", "n_points", "start", "end", "accepted", "reason"])?;
    for c in candidates {
        w.write_record([
            c.event_id.clone(),
            c.trip_id.clone(),
            c.track_id.to_string(),
            c.n_points.to_string(),
            c.start.to_string(),
            c.end.to_string(),
            u8::from(c.rejection.is_none()).to_string(),
            c.rejection.map_or(String::new(), |r| r.code().to_string()),
        ])?;
    }
    w.flush()?;
    Ok(())
}
