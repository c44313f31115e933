//! Eligibility screening of (host window, target track) candidates.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::association::TargetTrack;
use crate::error::{Error, Result};
use crate::geo::{angle_diff, HostState, RadarPoint};

/// Instrumented platform. The two radars report transversal with opposite
/// signs: a target crossing from the host's left to its right goes
/// positive to negative on light vehicles and negative to positive on
/// heavy trucks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Platform {
    LightVehicle,
    HeavyTruck,
}

impl Platform {
    /// Sign of the transversal before the crossing.
    pub fn entry_sign(self) -> f64 {
        match self {
            Platform::LightVehicle => 1.0,
            Platform::HeavyTruck => -1.0,
        }
    }

    /// Converts a transversal reading to a right-positive lateral offset.
    pub fn lateral_right(self, transversal: f64) -> f64 {
        -self.entry_sign() * transversal
    }

    pub fn flipped(self) -> Platform {
        match self {
            Platform::LightVehicle => Platform::HeavyTruck,
            Platform::HeavyTruck => Platform::LightVehicle,
        }
    }

    pub fn code(self) -> &'static str {
        match self {
            Platform::LightVehicle => "LV",
            Platform::HeavyTruck => "HT",
        }
    }
}

impl fmt::Display for Platform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for Platform {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "lv" | "light" | "lightvehicle" | "light_vehicle" => Ok(Platform::LightVehicle),
            "ht" | "heavy" | "heavytruck" | "heavy_truck" => Ok(Platform::HeavyTruck),
            other => Err(Error::Config(format!("unknown platform `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScreeningConfig {
    pub min_host_speed: f64,
    pub max_heading_change: f64,
    pub max_target_longitudinal_speed: f64,
    pub min_duration: f64,
    pub max_point_gap: f64,
    pub platform: Platform,
}

impl Default for ScreeningConfig {
    fn default() -> Self {
        ScreeningConfig {
            min_host_speed: 3.0,
            max_heading_change: 10.0,
            max_target_longitudinal_speed: -0.5,
            min_duration: 1.5,
            max_point_gap: 1.0,
            platform: Platform::HeavyTruck,
        }
    }
}

impl ScreeningConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("min_host_speed", self.min_host_speed),
            ("max_heading_change", self.max_heading_change),
            ("min_duration", self.min_duration),
            ("max_point_gap", self.max_point_gap),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("screening.{name} must be > 0, got {v}")));
            }
        }
        if !self.max_target_longitudinal_speed.is_finite() {
            return Err(Error::Config("screening.max_target_longitudinal_speed must be finite".into()));
        }
        Ok(())
    }
}

/// First failing criterion for a rejected candidate, in screening order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    /// Host record missing or too short around the track.
    HostCoverage,
    /// Segment not flagged as at an intersection.
    Intersection,
    HostSpeed,
    HostHeading,
    TargetApproach,
    TargetDirection,
    Duration,
    Gap,
}

impl RejectReason {
    pub const ALL: [RejectReason; 8] = [
        RejectReason::HostCoverage,
        RejectReason::Intersection,
        RejectReason::HostSpeed,
        RejectReason::HostHeading,
        RejectReason::TargetApproach,
        RejectReason::TargetDirection,
        RejectReason::Duration,
        RejectReason::Gap,
    ];

    pub fn code(self) -> &'static str {
        match self {
            RejectReason::HostCoverage => "host_coverage",
            RejectReason::Intersection => "intersection",
            RejectReason::HostSpeed => "host_speed",
            RejectReason::HostHeading => "host_heading",
            RejectReason::TargetApproach => "target_approach",
            RejectReason::TargetDirection => "target_direction",
            RejectReason::Duration => "duration",
            RejectReason::Gap => "gap",
        }
    }
}

impl fmt::Display for RejectReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

/// A screened left-turn-across-path event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LtapOdEvent {
    pub trip_id: String,
    pub platform: Platform,
    pub host_states: Vec<HostState>,
    pub target_track: TargetTrack,
}

/// Max minus min of the unwrapped heading sequence, degrees.
pub fn heading_excursion(states: &[HostState]) -> f64 {
    let Some(first) = states.first() else { return 0.0 };
    let mut acc = first.heading;
    let (mut lo, mut hi) = (acc, acc);
    for w in states.windows(2) {
        acc += angle_diff(w[0].heading, w[1].heading);
        lo = lo.min(acc);
        hi = hi.max(acc);
    }
    hi - lo
}

fn straightness_failure(states: &[HostState], cfg: &ScreeningConfig) -> Result<Option<RejectReason>> {
    if states.len() < 2 {
        return Err(Error::InvalidInput(format!("need at least 2 host states, got {}", states.len())));
    }
    if !states.iter().all(|s| s.speed > cfg.min_host_speed) {
        return Ok(Some(RejectReason::HostSpeed));
    }
    if !(heading_excursion(states) < cfg.max_heading_change) {
        return Ok(Some(RejectReason::HostHeading));
    }
    Ok(None)
}

/// Every sample faster than the speed floor and total heading excursion
/// below the bound.
pub fn is_straight_driving(states: &[HostState], cfg: &ScreeningConfig) -> Result<bool> {
    straightness_failure(states, cfg).map(|r| r.is_none())
}

/// Index pairs `(before, after)` of consecutive non-zero transversal samples
/// whose sign flips in the platform's crossing direction. Zero samples lie
/// strictly between the pair.
pub fn platform_crossings(points: &[RadarPoint], platform: Platform) -> Vec<(usize, usize)> {
    let entry = platform.entry_sign();
    let mut out = Vec::new();
    let mut prev: Option<usize> = None;
    for (k, p) in points.iter().enumerate() {
        if p.transversal == 0.0 {
            continue;
        }
        if let Some(j) = prev {
            let a = points[j].transversal;
            if a * entry > 0.0 && p.transversal * entry < 0.0 {
                out.push((j, k));
            }
        }
        prev = Some(k);
    }
    out
}

/// Number of sign changes (either direction) across non-zero samples.
pub fn sign_changes(points: &[RadarPoint]) -> usize {
    let signs: Vec<bool> = points
        .iter()
        .filter(|p| p.transversal != 0.0)
        .map(|p| p.transversal > 0.0)
        .collect();
    signs.windows(2).filter(|w| w[0] != w[1]).count()
}

fn target_failure(track: &TargetTrack, cfg: &ScreeningConfig) -> Option<RejectReason> {
    let approaching = track
        .points
        .iter()
        .all(|p| p.range_rate * p.azimuth.to_radians().cos() < cfg.max_target_longitudinal_speed);
    if !approaching {
        return Some(RejectReason::TargetApproach);
    }
    if platform_crossings(&track.points, cfg.platform).is_empty() {
        return Some(RejectReason::TargetDirection);
    }
    None
}

pub fn is_crossing_target(track: &TargetTrack, cfg: &ScreeningConfig) -> bool {
    !track.points.is_empty() && target_failure(track, cfg).is_none()
}

/// Applies the kinematic criteria in order and returns the event or the
/// first failing criterion.
pub fn screen_event(
    trip_id: &str,
    host_states: &[HostState],
    track: &TargetTrack,
    cfg: &ScreeningConfig,
) -> std::result::Result<LtapOdEvent, RejectReason> {
    if track.points.is_empty() {
        return Err(RejectReason::TargetDirection);
    }
    match straightness_failure(host_states, cfg) {
        Err(_) => return Err(RejectReason::HostCoverage),
        Ok(Some(r)) => return Err(r),
        Ok(None) => {}
    }
    if let Some(r) = target_failure(track, cfg) {
        return Err(r);
    }
    if !(track.duration() > cfg.min_duration) {
        return Err(RejectReason::Duration);
    }
    if !(track.max_gap() < cfg.max_point_gap) {
        return Err(RejectReason::Gap);
    }
    Ok(LtapOdEvent {
        trip_id: trip_id.to_string(),
        platform: cfg.platform,
        host_states: host_states.to_vec(),
        target_track: track.clone(),
    })
}

/// A track paired with the host window that brackets it.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub trip_id: String,
    pub host_states: Vec<HostState>,
    /// Intersection flag of every host state in the window.
    pub at_intersection: bool,
    /// Whether the host window brackets the whole track.
    pub host_covers: bool,
    pub track: TargetTrack,
}

impl Candidate {
    /// Selects the host samples bracketing `track` (the last sample at or
    /// before its start through the first at or after its end).
    pub fn new(trip_id: &str, host: &[HostState], flags: &[bool], track: TargetTrack) -> Self {
        debug_assert_eq!(host.len(), flags.len());
        let (t0, t1) = (track.start(), track.end());
        let lo = host.partition_point(|s| s.t <= t0).saturating_sub(1);
        let hi = host.partition_point(|s| s.t < t1).min(host.len().saturating_sub(1));
        let (window, wflags) = if host.is_empty() || lo > hi {
            (Vec::new(), &flags[0..0])
        } else {
            (host[lo..=hi].to_vec(), &flags[lo..=hi])
        };
        let host_covers = window.len() >= 2
            && window.first().is_some_and(|s| s.t <= t0)
            && window.last().is_some_and(|s| s.t >= t1);
        Candidate {
            trip_id: trip_id.to_string(),
            at_intersection: !wflags.is_empty() && wflags.iter().all(|&f| f),
            host_covers,
            host_states: window,
            track,
        }
    }
}

/// Full screening of a candidate: data coverage, intersection flag, then the
/// kinematic criteria of [`screen_event`].
pub fn screen_candidate(
    cand: &Candidate,
    cfg: &ScreeningConfig,
) -> std::result::Result<LtapOdEvent, RejectReason> {
    if !cand.host_covers {
        return Err(RejectReason::HostCoverage);
    }
    if !cand.at_intersection {
        return Err(RejectReason::Intersection);
    }
    screen_event(&cand.trip_id, &cand.host_states, &cand.track, cfg)
}
