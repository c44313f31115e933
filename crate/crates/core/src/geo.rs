//! Coordinate and kinematic primitives shared by every stage.
//!
//! Geodetic host fixes are projected into a local east/north plane with an
//! equirectangular projection anchored at a reference fix. Radar returns are
//! expressed in the host frame: longitudinal ahead of the sensor, lateral
//! positive to the right of the heading.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Mean earth radius in meters.
pub const EARTH_RADIUS_M: f64 = 6_371_000.0;

/// Largest anchor-to-point separation (degrees) accepted by the projection.
pub const MAX_PROJECTION_SPAN_DEG: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub lat: f64,
    pub lon: f64,
}

impl GeoPoint {
    pub fn new(lat: f64, lon: f64) -> Result<Self> {
        let p = GeoPoint { lat, lon };
        p.validate()?;
        Ok(p)
    }

    fn validate(&self) -> Result<()> {
        if !self.lat.is_finite() || !self.lon.is_finite() {
            return Err(Error::InvalidInput(format!(
                "non-finite coordinate ({}, {})",
                self.lat, self.lon
            )));
        }
        if !(-90.0..=90.0).contains(&self.lat) || !(-180.0..=180.0).contains(&self.lon) {
            return Err(Error::InvalidInput(format!(
                "coordinate out of range ({}, {})",
                self.lat, self.lon
            )));
        }
        Ok(())
    }
}

/// Timestamped host (straight-driving vehicle) fix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HostState {
    pub t: f64,
    pub lat: f64,
    pub lon: f64,
    /// m/s, non-negative.
    pub speed: f64,
    /// Degrees clockwise from north in `[0, 360)`.
    pub heading: f64,
}

impl HostState {
    pub fn new(t: f64, lat: f64, lon: f64, speed: f64, heading: f64) -> Result<Self> {
        let s = HostState { t, lat, lon, speed, heading: wrap_degrees(heading) };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        self.position().validate()?;
        if !self.t.is_finite() {
            return Err(Error::InvalidInput("non-finite host time".into()));
        }
        if !self.speed.is_finite() || self.speed < 0.0 {
            return Err(Error::InvalidInput(format!("invalid host speed {}", self.speed)));
        }
        if !self.heading.is_finite() || !(0.0..360.0).contains(&self.heading) {
            return Err(Error::InvalidInput(format!("invalid heading {}", self.heading)));
        }
        Ok(())
    }

    pub fn position(&self) -> GeoPoint {
        GeoPoint { lat: self.lat, lon: self.lon }
    }
}

/// One forward-radar return in the host frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadarPoint {
    pub t: f64,
    /// meters, strictly positive.
    pub range: f64,
    /// m/s, negative when closing.
    pub range_rate: f64,
    /// Lateral offset in the sensor frame, meters.
    pub transversal: f64,
    /// Degrees, `|azimuth| <= 90`.
    pub azimuth: f64,
}

impl RadarPoint {
    pub fn validate(&self) -> Result<()> {
        let finite = [self.t, self.range, self.range_rate, self.transversal, self.azimuth]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidInput("non-finite radar field".into()));
        }
        if self.range <= 0.0 {
            return Err(Error::InvalidInput(format!("non-positive range {}", self.range)));
        }
        if self.azimuth.abs() > 90.0 {
            return Err(Error::InvalidInput(format!("azimuth {} beyond 90 deg", self.azimuth)));
        }
        Ok(())
    }

    /// Distance ahead of the sensor along the boresight.
    pub fn longitudinal(&self) -> f64 {
        self.range * self.azimuth.to_radians().cos()
    }
}

/// Meters east (`x`) and north (`y`) of a local anchor.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PlanarPoint {
    pub x: f64,
    pub y: f64,
}

impl PlanarPoint {
    pub fn new(x: f64, y: f64) -> Self {
        PlanarPoint { x, y }
    }

    pub fn distance(&self, other: &PlanarPoint) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn lerp(&self, other: &PlanarPoint, w: f64) -> PlanarPoint {
        PlanarPoint {
            x: self.x + (other.x - self.x) * w,
            y: self.y + (other.y - self.y) * w,
        }
    }
}

/// Wraps an angle in degrees into `[0, 360)`.
pub fn wrap_degrees(a: f64) -> f64 {
    let w = a.rem_euclid(360.0);
    // rem_euclid can round up to exactly 360 for tiny negative inputs
    if w >= 360.0 {
        0.0
    } else {
        w
    }
}

/// Signed shortest angular difference `b - a` in `(-180, 180]`.
pub fn angle_diff(a: f64, b: f64) -> f64 {
    let d = (b - a).rem_euclid(360.0);
    if d > 180.0 {
        d - 360.0
    } else {
        d
    }
}

/// Equirectangular projection of `p` into the tangent plane at `anchor`.
pub fn to_local_frame(anchor: GeoPoint, p: GeoPoint) -> Result<PlanarPoint> {
    anchor.validate()?;
    p.validate()?;
    let dlat = p.lat - anchor.lat;
    let dlon = p.lon - anchor.lon;
    if dlat.abs() > MAX_PROJECTION_SPAN_DEG || dlon.abs() > MAX_PROJECTION_SPAN_DEG {
        return Err(Error::InvalidInput(format!(
            "point ({}, {}) more than {MAX_PROJECTION_SPAN_DEG} deg from anchor ({}, {})",
            p.lat, p.lon, anchor.lat, anchor.lon
        )));
    }
    Ok(PlanarPoint {
        x: EARTH_RADIUS_M * dlon.to_radians() * anchor.lat.to_radians().cos(),
        y: EARTH_RADIUS_M * dlat.to_radians(),
    })
}

/// Inverse of [`to_local_frame`].
pub fn from_local_frame(anchor: GeoPoint, p: PlanarPoint) -> Result<GeoPoint> {
    anchor.validate()?;
    if !p.x.is_finite() || !p.y.is_finite() {
        return Err(Error::InvalidInput("non-finite planar point".into()));
    }
    let cos_lat = anchor.lat.to_radians().cos();
    if cos_lat.abs() < 1e-12 {
        return Err(Error::InvalidInput("anchor at a pole".into()));
    }
    let lat = anchor.lat + (p.y / EARTH_RADIUS_M).to_degrees();
    let lon = anchor.lon + (p.x / (EARTH_RADIUS_M * cos_lat)).to_degrees();
    GeoPoint::new(lat, lon)
}

/// Places a host-frame offset (ahead, right) into the plane given the
/// origin position and heading.
pub fn offset_to_planar(
    origin: PlanarPoint,
    heading_deg: f64,
    longitudinal: f64,
    lateral: f64,
) -> PlanarPoint {
    let (s, c) = heading_deg.to_radians().sin_cos();
    // forward = (sin h, cos h); right = (cos h, -sin h)
    PlanarPoint {
        x: origin.x + longitudinal * s + lateral * c,
        y: origin.y + longitudinal * c - lateral * s,
    }
}

/// Inverse of [`offset_to_planar`]: returns (longitudinal, lateral).
pub fn planar_to_offset(origin: PlanarPoint, heading_deg: f64, p: PlanarPoint) -> (f64, f64) {
    let (s, c) = heading_deg.to_radians().sin_cos();
    let dx = p.x - origin.x;
    let dy = p.y - origin.y;
    (dx * s + dy * c, dx * c - dy * s)
}

/// Projects a radar return into the anchor's plane.
///
/// Longitudinal offset is `range * cos(azimuth)`; the lateral offset is the
/// transversal channel, taken as positive to the right of the heading.
pub fn radar_to_global(host: &HostState, pt: &RadarPoint, anchor: GeoPoint) -> Result<PlanarPoint> {
    host.validate()?;
    pt.validate()?;
    let origin = to_local_frame(anchor, host.position())?;
    Ok(offset_to_planar(origin, host.heading, pt.longitudinal(), pt.transversal))
}

/// Interpolates the host record at time `t`.
///
/// Position and speed are linear in time; heading follows the shortest arc.
pub fn interpolate_host(states: &[HostState], t: f64) -> Result<HostState> {
    let (first, last) = match (states.first(), states.last()) {
        (Some(f), Some(l)) => (f, l),
        _ => return Err(Error::InvalidInput("empty host record".into())),
    };
    if !t.is_finite() || t < first.t || t > last.t {
        return Err(Error::OutOfRange { t, start: first.t, end: last.t });
    }
    let idx = states.partition_point(|s| s.t < t);
    let hi = &states[idx];
    if hi.t == t || idx == 0 {
        return Ok(*hi);
    }
    let lo = &states[idx - 1];
    let w = (t - lo.t) / (hi.t - lo.t);
    let lerp = |a: f64, b: f64| a + (b - a) * w;
    Ok(HostState {
        t,
        lat: lerp(lo.lat, hi.lat),
        lon: lerp(lo.lon, hi.lon),
        speed: lerp(lo.speed, hi.speed),
        heading: wrap_degrees(lo.heading + angle_diff(lo.heading, hi.heading) * w),
    })
}

/// Bearing (degrees clockwise from north) of the displacement `from -> to`.
pub fn bearing(from: PlanarPoint, to: PlanarPoint) -> f64 {
    wrap_degrees((to.x - from.x).atan2(to.y - from.y).to_degrees())
}

/// Fills headings that are missing (`None`) by finite differencing
/// consecutive fixes: forward difference everywhere except the final fix,
/// which uses the backward difference. A lone fix defaults to north.
pub fn fill_headings(
    fixes: &[(f64, GeoPoint)],
    headings: &[Option<f64>],
) -> Result<Vec<f64>> {
    assert_eq!(fixes.len(), headings.len());
    let Some(&(_, anchor)) = fixes.first() else {
        return Ok(Vec::new());
    };
    let planar = fixes
        .iter()
        .map(|(_, p)| to_local_frame(anchor, *p))
        .collect::<Result<Vec<_>>>()?;
    let n = fixes.len();
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        if let Some(h) = headings[i] {
            out.push(wrap_degrees(h));
            continue;
        }
        let derived = if n < 2 {
            0.0
        } else if i + 1 < n {
            bearing(planar[i], planar[i + 1])
        } else {
            bearing(planar[i - 1], planar[i])
        };
        out.push(derived);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    const ANCHOR: GeoPoint = GeoPoint { lat: 42.30, lon: -83.70 };

    fn host(t: f64, x: f64, speed: f64, heading: f64) -> HostState {
        let g = from_local_frame(ANCHOR, PlanarPoint::new(x, 0.0)).unwrap();
        HostState::new(t, g.lat, g.lon, speed, heading).unwrap()
    }

    fn haversine(a: GeoPoint, b: GeoPoint) -> f64 {
        let (p1, p2) = (a.lat.to_radians(), b.lat.to_radians());
        let dphi = p2 - p1;
        let dl = (b.lon - a.lon).to_radians();
        let h = (dphi / 2.0).sin().powi(2) + p1.cos() * p2.cos() * (dl / 2.0).sin().powi(2);
        2.0 * EARTH_RADIUS_M * h.sqrt().asin()
    }

    #[test]
    fn anchor_maps_to_origin() {
        let p = to_local_frame(ANCHOR, ANCHOR).unwrap();
        assert_eq!(p, PlanarPoint::new(0.0, 0.0));
    }

    #[test]
    fn one_meter_north() {
        let dlat = 1.0 / EARTH_RADIUS_M * (180.0 / std::f64::consts::PI);
        let p = to_local_frame(ANCHOR, GeoPoint::new(42.30 + dlat, -83.70).unwrap()).unwrap();
        assert_abs_diff_eq!(p.x, 0.0, epsilon = 1e-6);
        assert_abs_diff_eq!(p.y, 1.0, epsilon = 1e-6);
    }

    #[test]
    fn agrees_with_haversine() {
        let q = GeoPoint::new(42.31, -83.69).unwrap();
        let p = to_local_frame(ANCHOR, q).unwrap();
        let planar = p.x.hypot(p.y);
        let great_circle = haversine(ANCHOR, q);
        assert!(((planar - great_circle) / great_circle).abs() < 1e-3);
    }

    #[test]
    fn rejects_bad_coordinates() {
        assert!(to_local_frame(ANCHOR, GeoPoint { lat: f64::NAN, lon: 0.0 }).is_err());
        assert!(to_local_frame(ANCHOR, GeoPoint { lat: 91.0, lon: -83.7 }).is_err());
        assert!(to_local_frame(ANCHOR, GeoPoint { lat: 44.0, lon: -83.7 }).is_err());
    }

    #[test]
    fn radar_straight_ahead() {
        let pt = RadarPoint { t: 0.0, range: 50.0, range_rate: -1.0, transversal: 0.0, azimuth: 0.0 };
        let north = HostState::new(0.0, ANCHOR.lat, ANCHOR.lon, 10.0, 0.0).unwrap();
        let p = radar_to_global(&north, &pt, ANCHOR).unwrap();
        assert_abs_diff_eq!(p.x, 0.0, epsilon = 1e-9);
        assert_abs_diff_eq!(p.y, 50.0, epsilon = 1e-9);
        let east = HostState { heading: 90.0, ..north };
        let p = radar_to_global(&east, &pt, ANCHOR).unwrap();
        assert_abs_diff_eq!(p.x, 50.0, epsilon = 1e-9);
        assert_abs_diff_eq!(p.y, 0.0, epsilon = 1e-9);
    }

    #[test]
    fn radar_rotation_matches_matrix() {
        let origin = PlanarPoint::new(10.0, 20.0);
        let g = from_local_frame(ANCHOR, origin).unwrap();
        let h = HostState::new(0.0, g.lat, g.lon, 5.0, 45.0).unwrap();
        let pt = RadarPoint { t: 0.0, range: 10.0, range_rate: -1.0, transversal: 2.0, azimuth: 0.0 };
        let p = radar_to_global(&h, &pt, ANCHOR).unwrap();
        // Host frame (right, ahead) -> (east, north) is a rotation by -heading
        // applied to the standard math-frame vector (right, ahead).
        let theta = -45f64.to_radians();
        let (rx, ry) = (2.0, 10.0);
        let ex = 10.0 + theta.cos() * rx - theta.sin() * ry;
        let ny = 20.0 + theta.sin() * rx + theta.cos() * ry;
        assert_abs_diff_eq!(p.x, ex, epsilon = 1e-6);
        assert_abs_diff_eq!(p.y, ny, epsilon = 1e-6);
    }

    #[test]
    fn interpolation_examples() {
        let states = [host(0.0, 0.0, 10.0, 350.0), host(2.0, 10.0, 20.0, 10.0)];
        let exact = interpolate_host(&states, 2.0).unwrap();
        assert_eq!(exact, states[1]);
        let mid = interpolate_host(&states, 1.0).unwrap();
        assert_abs_diff_eq!(mid.heading, 0.0, epsilon = 1e-9);
        assert_abs_diff_eq!(mid.speed, 15.0, epsilon = 1e-12);
        let q = interpolate_host(&states, 0.5).unwrap();
        let x = to_local_frame(ANCHOR, q.position()).unwrap().x;
        assert_abs_diff_eq!(x, 2.5, epsilon = 1e-6);
        assert!(matches!(interpolate_host(&states, 2.5), Err(Error::OutOfRange { .. })));
        assert!(interpolate_host(&[], 0.0).is_err());
    }

    #[test]
    fn derived_headings_follow_motion() {
        let fixes: Vec<_> = (0..4)
            .map(|i| (i as f64, from_local_frame(ANCHOR, PlanarPoint::new(i as f64, 0.0)).unwrap()))
            .collect();
        let filled = fill_headings(&fixes, &[None, Some(12.0), None, None]).unwrap();
        assert_abs_diff_eq!(filled[0], 90.0, epsilon = 1e-6);
        assert_eq!(filled[1], 12.0);
        assert_abs_diff_eq!(filled[3], 90.0, epsilon = 1e-6);
    }

    proptest! {
        #[test]
        fn projection_round_trip(dlat in -0.05f64..0.05, dlon in -0.05f64..0.05) {
            let p = GeoPoint::new(ANCHOR.lat + dlat, ANCHOR.lon + dlon).unwrap();
            let planar = to_local_frame(ANCHOR, p).unwrap();
            let back = from_local_frame(ANCHOR, planar).unwrap();
            let again = to_local_frame(ANCHOR, back).unwrap();
            prop_assert!(planar.distance(&again) < 1e-6);
        }

        #[test]
        fn on_axis_target_is_range_ahead(range in 0.5f64..200.0, heading in 0.0f64..360.0) {
            let h = HostState::new(0.0, ANCHOR.lat, ANCHOR.lon, 10.0, heading).unwrap();
            let pt = RadarPoint { t: 0.0, range, range_rate: -1.0, transversal: 0.0, azimuth: 0.0 };
            let p = radar_to_global(&h, &pt, ANCHOR).unwrap();
            prop_assert!((p.x.hypot(p.y) - range).abs() < 1e-9);
            prop_assert!(angle_diff(bearing(PlanarPoint::default(), p), heading).abs() < 1e-6);
        }

        #[test]
        fn interpolation_piecewise_linear(w in 0.0f64..1.0, x0 in -50.0f64..50.0, x1 in -50.0f64..50.0) {
            let states = [host(1.0, x0, 5.0, 90.0), host(3.0, x1, 7.0, 90.0)];
            let q = interpolate_host(&states, 1.0 + 2.0 * w).unwrap();
            let x = to_local_frame(ANCHOR, q.position()).unwrap().x;
            prop_assert!((x - (x0 + (x1 - x0) * w)).abs() < 1e-6);
            prop_assert!((q.speed - (5.0 + 2.0 * w)).abs() < 1e-9);
        }
    }
}
