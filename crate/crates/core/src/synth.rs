//! Synthetic left-turn encounters with known ground truth.
//!
//! The host drives north (in its own frame) at constant speed. The turning
//! vehicle approaches in the opposite lane, offset to the host's left, and
//! turns left on a constant-radius arc that crosses the host's centerline.
//! It is phased so that, at the crossing, the host is `t_cp * v_sdv` meters
//! short of the crossing point. Host GPS and forward-radar channels are
//! produced from the exact geometry, clipped to the radar field of view and
//! optionally perturbed with seeded Gaussian noise.

use std::f64::consts::FRAC_PI_2;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::association::{neighbor_compatible, AssociationConfig};
use crate::error::{Error, Result};
use crate::geo::{from_local_frame, offset_to_planar, GeoPoint, HostState, PlanarPoint, RadarPoint};
use crate::parallel::{self, derive_seed, Parallelism};
use crate::pipeline::TripRecord;
use crate::screening::Platform;

pub const DEFAULT_ANCHOR: GeoPoint = GeoPoint { lat: 42.30, lon: -83.70 };

/// Half of the forward radar's 11 degree field of view.
pub const FOV_HALF_ANGLE_DEG: f64 = 5.5;

/// Time simulated before and after the crossing.
const LEAD_TIME: f64 = 8.0;
const TRAIL_TIME: f64 = 3.0;

/// Feasibility margins over the default screening thresholds.
const MIN_VISIBLE_DURATION: f64 = 2.0;
const MAX_FEASIBLE_RANGE_RATE: f64 = -1.5;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub range: f64,
    pub range_rate: f64,
    pub transversal: f64,
    pub gps: f64,
}

impl NoiseSpec {
    pub const ZERO: NoiseSpec = NoiseSpec { range: 0.0, range_rate: 0.0, transversal: 0.0, gps: 0.0 };

    pub fn scaled(&self, k: f64) -> NoiseSpec {
        NoiseSpec {
            range: self.range * k,
            range_rate: self.range_rate * k,
            transversal: self.transversal * k,
            gps: self.gps * k,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TargetMotion {
    LeftTurn,
    /// Oncoming vehicle that stays in its lane and never crosses.
    Straight,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EncounterSpec {
    pub sdv_speed: f64,
    pub tv_speed_at_crossing: f64,
    pub t_cp_true: f64,
    pub tv_turn_radius: f64,
    /// Lateral offset of the oncoming lane to the host's left (m).
    pub tv_lane_offset: f64,
    /// Host heading in degrees clockwise from north.
    pub host_heading: f64,
    pub sample_rate: f64,
    pub noise: NoiseSpec,
    pub platform: Platform,
    pub motion: TargetMotion,
    pub at_intersection: bool,
    /// Clip the emitted track to this many seconds around the crossing.
    pub track_clip: Option<f64>,
    pub seed: u64,
}

impl Default for EncounterSpec {
    fn default() -> Self {
        EncounterSpec {
            sdv_speed: 15.0,
            tv_speed_at_crossing: 6.0,
            t_cp_true: 2.0,
            tv_turn_radius: 12.0,
            tv_lane_offset: 2.0,
            host_heading: 0.0,
            sample_rate: 10.0,
            noise: NoiseSpec::ZERO,
            platform: Platform::HeavyTruck,
            motion: TargetMotion::LeftTurn,
            at_intersection: true,
            track_clip: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub t_x: f64,
    pub d_cp: f64,
    pub t_cp: f64,
    pub v_sdv: f64,
    pub v_tv: f64,
    /// Exact host positions at the host sample times.
    pub sdv_history: Vec<(f64, PlanarPoint)>,
    /// Exact target positions at the emitted radar times.
    pub tv_history: Vec<(f64, PlanarPoint)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Encounter {
    pub host_states: Vec<HostState>,
    pub at_intersection: Vec<bool>,
    /// Radar returns with the target id the platform would report.
    pub radar_points: Vec<(RadarPoint, i64)>,
    pub truth: GroundTruth,
}

/// Exact target kinematics in the host-aligned frame `(right, ahead)`,
/// where the host starts at the origin.
struct Geometry {
    spec: EncounterSpec,
    t_x: f64,
    arc_start_y: f64,
    crossing_angle: f64,
}

impl Geometry {
    fn new(spec: &EncounterSpec) -> Result<Self> {
        let s = spec;
        let positive = [
            ("sdv_speed", s.sdv_speed),
            ("tv_speed_at_crossing", s.tv_speed_at_crossing),
            ("t_cp_true", s.t_cp_true),
            ("tv_turn_radius", s.tv_turn_radius),
            ("tv_lane_offset", s.tv_lane_offset),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidInput(format!("{name} must be positive, got {v}")));
            }
        }
        if !(s.sample_rate >= 5.0 && s.sample_rate.is_finite()) {
            return Err(Error::InvalidInput(format!("sample_rate must be >= 5 Hz, got {}", s.sample_rate)));
        }
        let n = s.noise;
        if [n.range, n.range_rate, n.transversal, n.gps].iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::InvalidInput("noise std must be finite and >= 0".into()));
        }
        if s.tv_turn_radius < s.tv_lane_offset {
            return Err(Error::Infeasible(format!(
                "turn radius {} cannot reach the centerline from lane offset {}",
                s.tv_turn_radius, s.tv_lane_offset
            )));
        }
        let r = s.tv_turn_radius;
        let crossing_angle = ((r - s.tv_lane_offset) / r).acos();
        let t_x = LEAD_TIME;
        let crossing_y = s.sdv_speed * t_x + s.t_cp_true * s.sdv_speed;
        Ok(Geometry { spec: *s, t_x, arc_start_y: crossing_y + r * crossing_angle.sin(), crossing_angle })
    }

    fn host(&self, t: f64) -> PlanarPoint {
        PlanarPoint::new(0.0, self.spec.sdv_speed * t)
    }

    /// Target position and velocity at `t`.
    fn target(&self, t: f64) -> (PlanarPoint, PlanarPoint) {
        let s = &self.spec;
        let (w, r, v) = (s.tv_lane_offset, s.tv_turn_radius, s.tv_speed_at_crossing);
        let arc_len = v * (t - self.t_x) + r * self.crossing_angle;
        if s.motion == TargetMotion::Straight || arc_len < 0.0 {
            return (PlanarPoint::new(-w, self.arc_start_y - arc_len), PlanarPoint::new(0.0, -v));
        }
        if arc_len <= r * FRAC_PI_2 {
            let phi = arc_len / r;
            return (
                PlanarPoint::new(-w + r - r * phi.cos(), self.arc_start_y - r * phi.sin()),
                PlanarPoint::new(v * phi.sin(), -v * phi.cos()),
            );
        }
        (
            PlanarPoint::new(-w + r + (arc_len - r * FRAC_PI_2), self.arc_start_y - r),
            PlanarPoint::new(v, 0.0),
        )
    }

    /// Clean radar return at `t` with a right-positive transversal, or
    /// `None` when the target is behind the sensor.
    fn radar(&self, t: f64) -> Option<RadarPoint> {
        let h = self.host(t);
        let (p, vel) = self.target(t);
        let (right, ahead) = (p.x - h.x, p.y - h.y);
        if ahead <= 0.0 {
            return None;
        }
        let range = right.hypot(ahead);
        let rel_v = (vel.x, vel.y - self.spec.sdv_speed);
        Some(RadarPoint {
            t,
            range,
            range_rate: (right * rel_v.0 + ahead * rel_v.1) / range,
            transversal: right,
            azimuth: right.atan2(ahead).to_degrees(),
        })
    }
}

fn visible(p: &Option<RadarPoint>) -> bool {
    p.as_ref().is_some_and(|p| p.azimuth.abs() < FOV_HALF_ANGLE_DEG)
}

fn radar_times(spec: &EncounterSpec) -> Vec<f64> {
    // radar clock runs half a sample out of phase with the GPS clock
    let dt = 1.0 / spec.sample_rate;
    let end = LEAD_TIME + TRAIL_TIME;
    (0..)
        .map(|k| (k as f64 + 0.5) * dt)
        .take_while(|&t| t < end - 0.5 * dt)
        .collect()
}

/// Index range of the emitted track within `times`.
fn observed_run(geo: &Geometry, times: &[f64], clean: &[Option<RadarPoint>]) -> Option<(usize, usize)> {
    let crossing = times.partition_point(|&t| t <= geo.t_x);
    let (lo, hi) = if geo.spec.motion == TargetMotion::LeftTurn {
        if crossing == 0 || crossing >= times.len() || !visible(&clean[crossing - 1]) || !visible(&clean[crossing]) {
            return None;
        }
        let mut lo = crossing - 1;
        while lo > 0 && visible(&clean[lo - 1]) {
            lo -= 1;
        }
        let mut hi = crossing;
        while hi + 1 < times.len() && visible(&clean[hi + 1]) {
            hi += 1;
        }
        (lo, hi)
    } else {
        // longest visible run
        let mut best: Option<(usize, usize)> = None;
        let mut start = None;
        for k in 0..=clean.len() {
            let vis = clean.get(k).is_some_and(&visible);
            match (vis, start) {
                (true, None) => start = Some(k),
                (false, Some(s)) => {
                    if best.is_none_or(|(a, b)| k - 1 - s > b - a) {
                        best = Some((s, k - 1));
                    }
                    start = None;
                }
                _ => {}
            }
        }
        best?
    };
    match geo.spec.track_clip {
        Some(clip) => {
            let center = if geo.spec.motion == TargetMotion::LeftTurn { geo.t_x } else { times[(lo + hi) / 2] };
            let a = (lo..=hi).find(|&k| times[k] >= center - clip / 2.0)?;
            let b = (a..=hi).take_while(|&k| times[k] - times[a] <= clip).last()?;
            Some((a, b))
        }
        None => Some((lo, hi)),
    }
}

fn check_feasible(geo: &Geometry, points: &[RadarPoint]) -> Result<()> {
    let n = points.len();
    let cfg = AssociationConfig::default();
    if n < cfg.min_cluster_size {
        return Err(Error::Infeasible(format!("only {n} radar points in view")));
    }
    let duration = points[n - 1].t - points[0].t;
    let needed = geo.spec.track_clip.map_or(MIN_VISIBLE_DURATION, |c| c.min(MIN_VISIBLE_DURATION));
    if duration < needed - 1e-9 {
        return Err(Error::Infeasible(format!("target visible for {duration:.2} s")));
    }
    if let Some(p) = points.iter().find(|p| p.range_rate >= MAX_FEASIBLE_RANGE_RATE) {
        return Err(Error::Infeasible(format!("range rate {:.2} at t={:.2} too slow", p.range_rate, p.t)));
    }
    for w in points.windows(2) {
        if !neighbor_compatible(&w[0], &w[1], &cfg)? {
            return Err(Error::Infeasible(format!("consecutive returns at t={:.2} not associable", w[1].t)));
        }
    }
    Ok(())
}

/// Host fixes, radar returns and exact metrics for one encounter.
pub fn generate_encounter(spec: &EncounterSpec) -> Result<Encounter> {
    let geo = Geometry::new(spec)?;
    let times = radar_times(spec);
    let clean: Vec<Option<RadarPoint>> = times.iter().map(|&t| geo.radar(t)).collect();
    let (lo, hi) = observed_run(&geo, &times, &clean)
        .ok_or_else(|| Error::Infeasible("target not in view around the crossing".into()))?;
    let observed: Vec<RadarPoint> = clean[lo..=hi].iter().map(|p| p.expect("visible")).collect();
    check_feasible(&geo, &observed)?;

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut gauss = |sd: f64| -> f64 {
        if sd > 0.0 {
            Normal::new(0.0, sd).expect("finite sd").sample(&mut rng)
        } else {
            0.0
        }
    };

    let to_planar = |p: PlanarPoint| offset_to_planar(PlanarPoint::default(), spec.host_heading, p.y, p.x);
    let dt = 1.0 / spec.sample_rate;
    let n_host = ((LEAD_TIME + TRAIL_TIME) / dt).round() as usize + 1;
    let mut host_states = Vec::with_capacity(n_host);
    let mut sdv_history = Vec::with_capacity(n_host);
    for k in 0..n_host {
        let t = k as f64 * dt;
        let exact = to_planar(geo.host(t));
        sdv_history.push((t, exact));
        let noisy = PlanarPoint::new(exact.x + gauss(spec.noise.gps), exact.y + gauss(spec.noise.gps));
        let g = from_local_frame(DEFAULT_ANCHOR, noisy)?;
        host_states.push(HostState::new(t, g.lat, g.lon, spec.sdv_speed, spec.host_heading)?);
    }

    let sign = -spec.platform.entry_sign();
    let target_id = match spec.platform {
        Platform::LightVehicle => 1,
        Platform::HeavyTruck => -1,
    };
    let mut radar_points = Vec::with_capacity(observed.len());
    let mut tv_history = Vec::with_capacity(observed.len());
    for p in &observed {
        tv_history.push((p.t, to_planar(geo.target(p.t).0)));
        let range = (p.range + gauss(spec.noise.range)).max(0.1);
        let noisy = RadarPoint {
            t: p.t,
            range,
            range_rate: p.range_rate + gauss(spec.noise.range_rate),
            transversal: sign * (p.transversal + gauss(spec.noise.transversal)),
            azimuth: sign * p.azimuth,
        };
        radar_points.push((noisy, target_id));
    }

    let d_cp = spec.t_cp_true * spec.sdv_speed;
    let truth = GroundTruth {
        t_x: geo.t_x,
        d_cp,
        t_cp: d_cp / spec.sdv_speed,
        v_sdv: spec.sdv_speed,
        v_tv: spec.tv_speed_at_crossing,
        sdv_history,
        tv_history,
    };
    Ok(Encounter {
        at_intersection: vec![spec.at_intersection; host_states.len()],
        host_states,
        radar_points,
        truth,
    })
}

/// Inclusive uniform ranges for drawn encounter parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamRanges {
    pub sdv_speed: (f64, f64),
    pub t_cp: (f64, f64),
    pub tv_speed: (f64, f64),
    pub turn_radius: (f64, f64),
    pub lane_offset: (f64, f64),
}

impl Default for ParamRanges {
    fn default() -> Self {
        ParamRanges {
            sdv_speed: (8.0, 25.0),
            t_cp: (0.5, 6.0),
            tv_speed: (2.0, 9.0),
            turn_radius: (6.0, 20.0),
            lane_offset: (0.3, 3.5),
        }
    }
}

fn uniform(rng: &mut impl Rng, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.random_range(lo..=hi)
    } else {
        lo
    }
}

/// Attempts per primary draw before `(sdv_speed, t_cp)` is redrawn.
const SECONDARY_ATTEMPTS: usize = 200;
const PRIMARY_ATTEMPTS: usize = 200;

/// Draws a feasible left-turn spec. `(sdv_speed, t_cp)` is drawn first and
/// the target parameters are redrawn until the geometry is observable; only
/// if that fails is the primary pair redrawn.
pub fn draw_feasible_spec(rng: &mut impl Rng, ranges: &ParamRanges, template: &EncounterSpec) -> Result<EncounterSpec> {
    for _ in 0..PRIMARY_ATTEMPTS {
        let sdv_speed = uniform(rng, ranges.sdv_speed);
        let t_cp_true = uniform(rng, ranges.t_cp);
        for _ in 0..SECONDARY_ATTEMPTS {
            let tv_lane_offset = uniform(rng, ranges.lane_offset);
            let spec = EncounterSpec {
                sdv_speed,
                t_cp_true,
                tv_speed_at_crossing: uniform(rng, ranges.tv_speed),
                tv_turn_radius: uniform(rng, ranges.turn_radius).max(tv_lane_offset),
                tv_lane_offset,
                host_heading: rng.random_range(0.0..360.0),
                seed: rng.random(),
                ..*template
            };
            match generate_encounter(&spec) {
                Ok(_) => return Ok(spec),
                Err(Error::Infeasible(_)) => continue,
                Err(e) => return Err(e),
            }
        }
    }
    Err(Error::Infeasible("no feasible spec in the given ranges".into()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TripKind {
    Eligible,
    /// Oncoming target that never crosses.
    NoCrossing,
    /// Host below the straight-driving speed floor.
    SlowHost,
    /// Segment not flagged as at an intersection.
    NotAtIntersection,
    /// Target visible for only one second.
    ShortTrack,
}

impl TripKind {
    pub const DECOYS: [TripKind; 4] =
        [TripKind::NoCrossing, TripKind::SlowHost, TripKind::NotAtIntersection, TripKind::ShortTrack];

    pub fn code(self) -> &'static str {
        match self {
            TripKind::Eligible => "eligible",
            TripKind::NoCrossing => "no_crossing",
            TripKind::SlowHost => "slow_host",
            TripKind::NotAtIntersection => "not_at_intersection",
            TripKind::ShortTrack => "short_track",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationConfig {
    pub n: usize,
    pub decoy_fraction: f64,
    /// Decoy kinds, assigned round-robin.
    pub decoy_kinds: Vec<TripKind>,
    pub platform: Platform,
    pub ranges: ParamRanges,
    pub noise: NoiseSpec,
    pub sample_rate: f64,
    pub seed: u64,
}

impl Default for PopulationConfig {
    fn default() -> Self {
        PopulationConfig {
            n: 100,
            decoy_fraction: 0.0,
            decoy_kinds: TripKind::DECOYS.to_vec(),
            platform: Platform::HeavyTruck,
            ranges: ParamRanges::default(),
            noise: NoiseSpec::ZERO,
            sample_rate: 10.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticTrip {
    pub record: TripRecord,
    pub kind: TripKind,
    pub spec: EncounterSpec,
    pub truth: GroundTruth,
}

impl SyntheticTrip {
    pub fn eligible(&self) -> bool {
        self.kind == TripKind::Eligible
    }
}

pub fn trip_id(index: usize) -> String {
    format!("trip-{index:06}")
}

fn decoy_ranges(kind: TripKind, base: &ParamRanges) -> ParamRanges {
    match kind {
        TripKind::NoCrossing => ParamRanges { lane_offset: (2.5, 3.5), ..*base },
        TripKind::SlowHost => ParamRanges { sdv_speed: (2.0, 2.0), t_cp: (4.0, 8.0), tv_speed: (1.0, 3.0), ..*base },
        _ => *base,
    }
}

fn generate_member(cfg: &PopulationConfig, index: usize, kind: TripKind) -> Result<SyntheticTrip> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, index as u64));
    let template = EncounterSpec {
        sample_rate: cfg.sample_rate,
        noise: cfg.noise,
        platform: cfg.platform,
        motion: if kind == TripKind::NoCrossing { TargetMotion::Straight } else { TargetMotion::LeftTurn },
        at_intersection: kind != TripKind::NotAtIntersection,
        track_clip: (kind == TripKind::ShortTrack).then_some(1.0),
        ..EncounterSpec::default()
    };
    let spec = draw_feasible_spec(&mut rng, &decoy_ranges(kind, &cfg.ranges), &template)?;
    let enc = generate_encounter(&spec)?;
    let id = trip_id(index);
    Ok(SyntheticTrip {
        record: TripRecord {
            trip_id: id,
            platform: cfg.platform,
            label: None,
            host: enc.host_states,
            at_intersection: enc.at_intersection,
            radar: enc.radar_points,
        },
        kind,
        spec,
        truth: enc.truth,
    })
}

/// Generates `cfg.n` independent trips; exactly `round(n * decoy_fraction)`
/// of them are decoys, placed by a seeded shuffle.
pub fn generate_population(cfg: &PopulationConfig, par: Parallelism) -> Result<Vec<SyntheticTrip>> {
    if cfg.n == 0 {
        return Err(Error::InvalidInput("population size must be >= 1".into()));
    }
    if !(0.0..=1.0).contains(&cfg.decoy_fraction) {
        return Err(Error::InvalidInput("decoy_fraction must lie in [0, 1]".into()));
    }
    let n_decoys = (cfg.n as f64 * cfg.decoy_fraction).round() as usize;
    if n_decoys > 0 && cfg.decoy_kinds.is_empty() {
        return Err(Error::InvalidInput("decoys requested without decoy kinds".into()));
    }
    let mut order: Vec<usize> = (0..cfg.n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(cfg.seed));
    let mut kinds = vec![TripKind::Eligible; cfg.n];
    for (j, &i) in order.iter().take(n_decoys).enumerate() {
        kinds[i] = cfg.decoy_kinds[j % cfg.decoy_kinds.len()];
    }
    parallel::map_range(cfg.n, par, |i| generate_member(cfg, i, kinds[i])).into_iter().collect()
}

/// A radar stream with known point labels (`None` for clutter).
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledScene {
    pub points: Vec<RadarPoint>,
    pub labels: Vec<Option<usize>>,
}

/// Two simultaneous straight-line targets (30 returns each at 10 Hz, closing
/// at constant range rate with distinct transversal ramps) plus uniformly
/// random clutter making up `clutter_fraction` of all points. Target returns
/// stay inside the radar field of view. The stream is
/// time-sorted; heavy-truck sign convention.
pub fn two_target_scene(seed: u64, clutter_fraction: f64) -> LabeledScene {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let targets = [
        // (initial range, range rate, transversal start, transversal end)
        (65.0 + rng.random_range(-5.0..5.0), -12.0, -2.0, 2.0),
        (45.0 + rng.random_range(-5.0..5.0), -8.0, -1.5, 1.5),
    ];
    let n_per = 30;
    let dt = 0.1;
    let mut rows: Vec<(RadarPoint, Option<usize>)> = Vec::new();
    for (id, &(r0, rr, tr0, tr1)) in targets.iter().enumerate() {
        for k in 0..n_per {
            let t = k as f64 * dt;
            let range = r0 + rr * t;
            let transversal = tr0 + (tr1 - tr0) * k as f64 / (n_per - 1) as f64;
            let azimuth = transversal.atan2((range * range - transversal * transversal).sqrt()).to_degrees();
            rows.push((RadarPoint { t, range, range_rate: rr, transversal, azimuth }, Some(id)));
        }
    }
    let n_signal = rows.len() as f64;
    let n_clutter = (n_signal * clutter_fraction / (1.0 - clutter_fraction)).round() as usize;
    let span = (n_per - 1) as f64 * dt;
    for _ in 0..n_clutter {
        rows.push((
            RadarPoint {
                t: rng.random_range(0.0..span),
                range: rng.random_range(5.0..80.0),
                range_rate: rng.random_range(-20.0..2.0),
                transversal: rng.random_range(-6.0..6.0),
                azimuth: rng.random_range(-8.0..8.0),
            },
            None,
        ));
    }
    rows.sort_by(|a, b| a.0.t.total_cmp(&b.0.t));
    LabeledScene {
        points: rows.iter().map(|r| r.0).collect(),
        labels: rows.iter().map(|r| r.1).collect(),
    }
}
