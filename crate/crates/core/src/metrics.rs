//! Trajectory reconstruction and conflict metrics.
//!
//! Both vehicles are placed in a local plane anchored at the first host fix.
//! The conflict moment `t_x` is where the target's transversal crosses zero
//! in the platform's crossing direction; the four conflict variables are
//! evaluated there.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::{interpolate_host, planar_to_offset, radar_to_global, to_local_frame, PlanarPoint, RadarPoint};
use crate::screening::{platform_crossings, sign_changes, LtapOdEvent, Platform};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathSample {
    pub t: f64,
    pub pos: PlanarPoint,
    pub speed: f64,
    /// Heading in degrees; for the target path this is the host heading at
    /// the sample time.
    pub heading: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconstructedEvent {
    pub event_id: String,
    pub trip_id: String,
    pub platform: Platform,
    pub sdv_path: Vec<PathSample>,
    pub tv_path: Vec<PathSample>,
    pub t_x: f64,
    /// Set when the transversal changed sign more than once.
    pub multiple_crossings: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConflictRecord {
    pub event_id: String,
    pub trip_id: String,
    pub t_x: f64,
    pub d_cp: f64,
    pub t_cp: f64,
    pub v_sdv: f64,
    pub v_tv: f64,
    pub label: String,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConflictTime {
    pub t_x: f64,
    pub multiple_crossings: bool,
}

pub fn event_id(trip_id: &str, track_id: u32) -> String {
    format!("{trip_id}#{track_id}")
}

/// Locates the first platform-direction zero crossing of the transversal.
pub fn find_conflict_time(points: &[RadarPoint], platform: Platform) -> Result<ConflictTime> {
    let crossings = platform_crossings(points, platform);
    let &(j, k) = crossings
        .first()
        .ok_or_else(|| Error::Consistency("no transversal zero crossing in track".into()))?;
    let multiple_crossings = sign_changes(points) > 1;
    let t_x = match points[j + 1..k].iter().find(|p| p.transversal == 0.0) {
        Some(hit) => hit.t,
        None => {
            let (a, b) = (&points[j], &points[k]);
            a.t + (0.0 - a.transversal) * (b.t - a.t) / (b.transversal - a.transversal)
        }
    };
    Ok(ConflictTime { t_x, multiple_crossings })
}

/// Magnitude of the finite-difference velocity along a path: central
/// differences inside, one-sided at the ends.
pub fn path_speeds(path: &[(f64, PlanarPoint)]) -> Vec<f64> {
    let n = path.len();
    (0..n)
        .map(|k| {
            if n < 2 {
                return 0.0;
            }
            let (a, b) = match k {
                0 => (0, 1),
                _ if k == n - 1 => (n - 2, n - 1),
                _ => (k - 1, k + 1),
            };
            let dt = path[b].0 - path[a].0;
            if dt > 0.0 {
                path[a].1.distance(&path[b].1) / dt
            } else {
                0.0
            }
        })
        .collect()
}

pub fn reconstruct(event: &LtapOdEvent) -> Result<ReconstructedEvent> {
    let host = &event.host_states;
    let anchor = host
        .first()
        .ok_or_else(|| Error::InvalidEvent("event without host states".into()))?
        .position();

    let sdv_path = host
        .iter()
        .map(|s| {
            Ok(PathSample {
                t: s.t,
                pos: to_local_frame(anchor, s.position())?,
                speed: s.speed,
                heading: s.heading,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut tv: Vec<(f64, PlanarPoint, f64)> = Vec::with_capacity(event.target_track.points.len());
    for pt in &event.target_track.points {
        let h = interpolate_host(host, pt.t).map_err(|_| Error::Synchronization(pt.t))?;
        let right = RadarPoint { transversal: event.platform.lateral_right(pt.transversal), ..*pt };
        tv.push((pt.t, radar_to_global(&h, &right, anchor)?, h.heading));
    }
    let speeds = path_speeds(&tv.iter().map(|&(t, p, _)| (t, p)).collect::<Vec<_>>());
    let tv_path = tv
        .iter()
        .zip(speeds)
        .map(|(&(t, pos, heading), speed)| PathSample { t, pos, speed, heading })
        .collect();

    let ct = find_conflict_time(&event.target_track.points, event.platform)?;
    Ok(ReconstructedEvent {
        event_id: event_id(&event.trip_id, event.target_track.track_id),
        trip_id: event.trip_id.clone(),
        platform: event.platform,
        sdv_path,
        tv_path,
        t_x: ct.t_x,
        multiple_crossings: ct.multiple_crossings,
    })
}

/// Linear interpolation of position and speed along a path.
pub fn sample_path(path: &[PathSample], t: f64) -> Result<(PlanarPoint, f64)> {
    let (first, last) = match (path.first(), path.last()) {
        (Some(f), Some(l)) => (f, l),
        _ => return Err(Error::InvalidEvent("empty path".into())),
    };
    if !(t >= first.t && t <= last.t) {
        return Err(Error::OutOfRange { t, start: first.t, end: last.t });
    }
    let idx = path.partition_point(|s| s.t < t);
    let hi = &path[idx];
    if hi.t == t || idx == 0 {
        return Ok((hi.pos, hi.speed));
    }
    let lo = &path[idx - 1];
    let w = (t - lo.t) / (hi.t - lo.t);
    Ok((lo.pos.lerp(&hi.pos, w), lo.speed + (hi.speed - lo.speed) * w))
}

/// Distance and time to the conflict point at `t_x`, with both speeds.
pub fn compute_metrics(rec: &ReconstructedEvent) -> Result<ConflictRecord> {
    let (p_sdv, v_sdv) = sample_path(&rec.sdv_path, rec.t_x)?;
    let (p_tv, v_tv) = sample_path(&rec.tv_path, rec.t_x)?;
    if !(v_sdv > 0.0) {
        return Err(Error::InvalidEvent(format!("host speed {v_sdv} at conflict time")));
    }
    let d_cp = p_sdv.distance(&p_tv);
    Ok(ConflictRecord {
        event_id: rec.event_id.clone(),
        trip_id: rec.trip_id.clone(),
        t_x: rec.t_x,
        d_cp,
        t_cp: d_cp / v_sdv,
        v_sdv,
        v_tv,
        label: rec.platform.code().to_string(),
    })
}

/// Time-to-conflict-point trace over the host window: for each host sample,
/// the along-track distance to the conflict point divided by the host speed.
/// Times are relative to `t_x`. Samples with zero speed are skipped.
pub fn tcp_trace(rec: &ReconstructedEvent) -> Result<Vec<(f64, f64)>> {
    let (conflict, _) = sample_path(&rec.tv_path, rec.t_x)?;
    Ok(rec
        .sdv_path
        .iter()
        .filter(|s| s.speed > 0.0)
        .map(|s| {
            let (ahead, _) = planar_to_offset(s.pos, s.heading, conflict);
            (s.t - rec.t_x, ahead / s.speed)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::association::TargetTrack;
    use crate::geo::{from_local_frame, GeoPoint, HostState};
    use approx::assert_abs_diff_eq;

    const ANCHOR: GeoPoint = GeoPoint { lat: 42.30, lon: -83.70 };

    fn tr(t: f64, transversal: f64) -> RadarPoint {
        RadarPoint { t, range: 30.0, range_rate: -5.0, transversal, azimuth: 0.0 }
    }

    fn path(points: &[(f64, f64, f64, f64)]) -> Vec<PathSample> {
        points
            .iter()
            .map(|&(t, x, y, speed)| PathSample { t, pos: PlanarPoint::new(x, y), speed, heading: 0.0 })
            .collect()
    }

    fn rec(sdv: Vec<PathSample>, tv: Vec<PathSample>, t_x: f64) -> ReconstructedEvent {
        ReconstructedEvent {
            event_id: "e".into(),
            trip_id: "t".into(),
            platform: Platform::HeavyTruck,
            sdv_path: sdv,
            tv_path: tv,
            t_x,
            multiple_crossings: false,
        }
    }

    #[test]
    fn conflict_time_examples() {
        let ht = Platform::HeavyTruck;
        assert_abs_diff_eq!(find_conflict_time(&[tr(1.0, -0.5), tr(2.0, 0.5)], ht).unwrap().t_x, 1.5);
        assert_abs_diff_eq!(find_conflict_time(&[tr(1.0, -1.0), tr(2.0, 3.0)], ht).unwrap().t_x, 1.25);
        let hit = [tr(3.0, -1.0), tr(4.0, 0.0), tr(5.0, 1.0)];
        assert_eq!(find_conflict_time(&hit, ht).unwrap().t_x, 4.0);
        assert!(matches!(find_conflict_time(&[tr(1.0, 1.0), tr(2.0, 2.0)], ht), Err(Error::Consistency(_))));
        let wobble = [tr(0.0, -1.0), tr(1.0, 1.0), tr(2.0, -1.0), tr(3.0, 1.0)];
        let ct = find_conflict_time(&wobble, ht).unwrap();
        assert!(ct.multiple_crossings);
        assert_abs_diff_eq!(ct.t_x, 0.5);
        let lv = find_conflict_time(&[tr(1.0, 0.5), tr(2.0, -0.5)], Platform::LightVehicle).unwrap();
        assert_abs_diff_eq!(lv.t_x, 1.5);
    }

    #[test]
    fn metric_examples() {
        let sdv = path(&[(0.0, 0.0, -15.0, 15.0), (2.0, 0.0, 15.0, 15.0)]);
        let tv = path(&[(0.0, -2.0, 30.0, 5.0), (2.0, 2.0, 30.0, 5.0)]);
        let m = compute_metrics(&rec(sdv.clone(), tv, 1.0)).unwrap();
        assert_abs_diff_eq!(m.d_cp, 30.0, epsilon = 1e-12);
        assert_abs_diff_eq!(m.t_cp, 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(m.v_tv, 5.0);

        let same = path(&[(0.0, 0.0, -15.0, 15.0), (2.0, 0.0, 15.0, 15.0)]);
        let m = compute_metrics(&rec(sdv, same, 1.0)).unwrap();
        assert_eq!((m.d_cp, m.t_cp), (0.0, 0.0));

        let stopped = path(&[(0.0, 0.0, 0.0, 0.0), (2.0, 0.0, 0.0, 0.0)]);
        let tv = path(&[(0.0, 0.0, 10.0, 1.0), (2.0, 0.0, 10.0, 1.0)]);
        assert!(matches!(compute_metrics(&rec(stopped, tv, 1.0)), Err(Error::InvalidEvent(_))));
    }

    #[test]
    fn stationary_host_static_target() {
        let host: Vec<_> = (0..5)
            .map(|k| HostState::new(k as f64, ANCHOR.lat, ANCHOR.lon, 0.0, 30.0).unwrap())
            .collect();
        let points: Vec<_> = (0..5)
            .map(|k| RadarPoint { t: k as f64, range: 20.0, range_rate: -1.0, transversal: if k < 2 { -0.0001 } else { 0.0001 }, azimuth: 0.0 })
            .collect();
        let ev = LtapOdEvent {
            trip_id: "s".into(),
            platform: Platform::HeavyTruck,
            host_states: host,
            target_track: TargetTrack { track_id: 1, points },
        };
        let r = reconstruct(&ev).unwrap();
        let first = r.tv_path[0].pos;
        assert!(r.tv_path.iter().all(|s| s.pos.distance(&first) < 1e-3));
        assert!(r.tv_path.iter().all(|s| s.speed < 1e-3));
    }

    #[test]
    fn radar_outside_host_span_is_sync_error() {
        let g = from_local_frame(ANCHOR, PlanarPoint::new(0.0, 0.0)).unwrap();
        let host = vec![
            HostState::new(0.0, g.lat, g.lon, 10.0, 0.0).unwrap(),
            HostState::new(1.0, g.lat, g.lon, 10.0, 0.0).unwrap(),
        ];
        let ev = LtapOdEvent {
            trip_id: "s".into(),
            platform: Platform::HeavyTruck,
            host_states: host,
            target_track: TargetTrack { track_id: 1, points: vec![tr(0.5, -1.0), tr(1.5, 1.0)] },
        };
        assert_eq!(reconstruct(&ev).unwrap_err(), Error::Synchronization(1.5));
    }

    #[test]
    fn central_differences() {
        let p: Vec<_> = (0..4).map(|k| (k as f64, PlanarPoint::new(3.0 * k as f64, 4.0 * k as f64))).collect();
        for v in path_speeds(&p) {
            assert_abs_diff_eq!(v, 5.0, epsilon = 1e-12);
        }
        assert_eq!(path_speeds(&p[..1]), vec![0.0]);
    }
}
