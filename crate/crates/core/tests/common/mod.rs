#![allow(dead_code)]

use ltap_core::metrics::ConflictRecord;
use ltap_core::pipeline::{process_trip, PipelineConfig, TripOutcome, TripRecord};
use ltap_core::synth::{generate_encounter, Encounter, EncounterSpec, GroundTruth, NoiseSpec};

/// Sensor noise of the reference noisy setting.
pub const REFERENCE_NOISE: NoiseSpec = NoiseSpec { range: 0.5, range_rate: 0.25, transversal: 0.3, gps: 1.0 };

pub fn trip_from(id: &str, spec: &EncounterSpec, enc: Encounter) -> TripRecord {
    TripRecord {
        trip_id: id.to_string(),
        platform: spec.platform,
        label: None,
        host: enc.host_states,
        at_intersection: enc.at_intersection,
        radar: enc.radar_points,
    }
}

/// Generates `spec`, runs it through every per-trip stage and returns the
/// outcome with the ground truth.
pub fn run_spec(spec: &EncounterSpec) -> (TripOutcome, GroundTruth) {
    let enc = generate_encounter(spec).expect("feasible spec");
    let truth = enc.truth.clone();
    let trip = trip_from("enc", spec, enc);
    (process_trip(&trip, &PipelineConfig::default()), truth)
}

/// The single record of an outcome, if exactly one was produced.
pub fn single(out: &TripOutcome) -> Option<&ConflictRecord> {
    match out.records.as_slice() {
        [r] => Some(r),
        _ => None,
    }
}

pub fn within_closure(r: &ConflictRecord, truth: &GroundTruth) -> bool {
    (r.t_cp - truth.t_cp).abs() < 0.05 && (r.d_cp - truth.d_cp).abs() < 0.5 && (r.v_sdv - truth.v_sdv).abs() < 0.1
}

/// Max absolute residual of the least-squares line through `pts`, as a
/// fraction of the spread of the y values.
pub fn linear_deviation(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let slope = sxy / sxx;
    let max_res = pts.iter().map(|p| (p.1 - (my + slope * (p.0 - mx))).abs()).fold(0.0, f64::max);
    let lo = pts.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    let hi = pts.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    max_res / (hi - lo)
}
