//! Groups raw forward-radar returns into per-target tracks.
//!
//! Heavy-truck radar logs carry unassociated returns. Points that are closing
//! and near boresight seed clusters, and a cluster grows in time order by
//! absorbing any later point that is kinematically compatible with one of its
//! members: range change consistent with the mean range rate over the
//! interval, and a bounded transversal rate. Clusters that stay small are
//! reported as noise along with ineligible points.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::RadarPoint;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AssociationConfig {
    /// Range rate must be strictly below this (m/s, negative).
    pub min_closing_speed: f64,
    /// `|azimuth|` must be strictly below this (degrees).
    pub max_azimuth: f64,
    /// Expansion window after a member point (s).
    pub time_window: f64,
    /// Bound on `|1 - dt_pred / dt|`.
    pub correspondence_tol: f64,
    /// Bound on `|d transversal / dt|` (m/s).
    pub max_transversal_rate: f64,
    pub min_cluster_size: usize,
}

impl Default for AssociationConfig {
    fn default() -> Self {
        AssociationConfig {
            min_closing_speed: -0.3,
            max_azimuth: 5.5,
            time_window: 0.85,
            correspondence_tol: 0.3,
            max_transversal_rate: 20.0,
            min_cluster_size: 5,
        }
    }
}

impl AssociationConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("max_azimuth", self.max_azimuth),
            ("time_window", self.time_window),
            ("correspondence_tol", self.correspondence_tol),
            ("max_transversal_rate", self.max_transversal_rate),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("association.{name} must be > 0, got {v}")));
            }
        }
        if !(self.min_closing_speed.is_finite() && self.min_closing_speed < 0.0) {
            return Err(Error::Config(format!(
                "association.min_closing_speed must be < 0, got {}",
                self.min_closing_speed
            )));
        }
        if self.min_cluster_size < 2 {
            return Err(Error::Config("association.min_cluster_size must be >= 2".into()));
        }
        Ok(())
    }
}

/// Time-ordered returns attributed to one target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetTrack {
    pub track_id: u32,
    pub points: Vec<RadarPoint>,
}

impl TargetTrack {
    pub fn start(&self) -> f64 {
        self.points.first().map_or(f64::NAN, |p| p.t)
    }

    pub fn end(&self) -> f64 {
        self.points.last().map_or(f64::NAN, |p| p.t)
    }

    pub fn duration(&self) -> f64 {
        self.end() - self.start()
    }

    /// Largest gap between consecutive points (0 for a single point).
    pub fn max_gap(&self) -> f64 {
        self.points
            .windows(2)
            .map(|w| w[1].t - w[0].t)
            .fold(0.0, f64::max)
    }
}

/// Output of [`associate_targets`]: every input point lands in exactly one
/// of `tracks` or `noise`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Association {
    pub tracks: Vec<TargetTrack>,
    pub noise: Vec<RadarPoint>,
}

pub fn point_eligible(pt: &RadarPoint, cfg: &AssociationConfig) -> bool {
    pt.range_rate < cfg.min_closing_speed && pt.azimuth.abs() < cfg.max_azimuth
}

/// Whether `j` may join a cluster through `i`. Requires `t(j) > t(i)`.
pub fn neighbor_compatible(i: &RadarPoint, j: &RadarPoint, cfg: &AssociationConfig) -> Result<bool> {
    let dt = j.t - i.t;
    if !(dt > 0.0) {
        return Err(Error::Precondition(format!(
            "neighbor point must be later: t(i)={}, t(j)={}",
            i.t, j.t
        )));
    }
    Ok(compatible_unchecked(i, j, dt, cfg))
}

fn compatible_unchecked(i: &RadarPoint, j: &RadarPoint, dt: f64, cfg: &AssociationConfig) -> bool {
    if dt > cfg.time_window {
        return false;
    }
    let rate_sum = i.range_rate + j.range_rate;
    if rate_sum == 0.0 {
        return false;
    }
    let dt_pred = 2.0 * (j.range - i.range) / rate_sum;
    if !((1.0 - dt_pred / dt).abs() < cfg.correspondence_tol) {
        return false;
    }
    (j.transversal - i.transversal).abs() / dt < cfg.max_transversal_rate
}

/// Region-growing association over a time-sorted point stream.
///
/// A point compatible with several open clusters joins the one holding its
/// nearest-in-time compatible member; ties go to the older cluster.
pub fn associate_targets(points: &[RadarPoint], cfg: &AssociationConfig) -> Association {
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| points[a].t.total_cmp(&points[b].t));

    let mut clusters: Vec<Vec<usize>> = Vec::new();
    let mut open: Vec<usize> = Vec::new();
    let mut assigned = vec![false; points.len()];

    for &j in &order {
        let pj = &points[j];
        if !point_eligible(pj, cfg) {
            continue;
        }
        open.retain(|&c| {
            let last = points[*clusters[c].last().expect("clusters are never empty")].t;
            pj.t - last <= cfg.time_window
        });

        let mut best: Option<(f64, usize)> = None;
        for &c in &open {
            let members = &clusters[c];
            let last_t = points[*members.last().unwrap()].t;
            // keeps track timestamps strictly increasing
            if last_t >= pj.t {
                continue;
            }
            let nearest = members
                .iter()
                .rev()
                .map(|&i| &points[i])
                .take_while(|pi| pj.t - pi.t <= cfg.time_window)
                .find(|pi| compatible_unchecked(pi, pj, pj.t - pi.t, cfg));
            if let Some(pi) = nearest {
                let better = match best {
                    None => true,
                    Some((bt, bc)) => pi.t > bt || (pi.t == bt && c < bc),
                };
                if better {
                    best = Some((pi.t, c));
                }
            }
        }

        match best {
            Some((_, c)) => clusters[c].push(j),
            None => {
                clusters.push(vec![j]);
                open.push(clusters.len() - 1);
            }
        }
    }

    let mut tracks = Vec::new();
    for members in clusters.into_iter().filter(|m| m.len() >= cfg.min_cluster_size) {
        for &i in &members {
            assigned[i] = true;
        }
        tracks.push(TargetTrack {
            track_id: tracks.len() as u32,
            points: members.iter().map(|&i| points[i]).collect(),
        });
    }
    let noise = (0..points.len()).filter(|&i| !assigned[i]).map(|i| points[i]).collect();
    Association { tracks, noise }
}

/// Builds tracks from externally supplied target ids (pre-tracked streams).
/// Points with a negative id, and ids with fewer than two points or a
/// repeated timestamp, are returned as noise.
pub fn tracks_from_ids(points: &[(RadarPoint, i64)]) -> Association {
    use std::collections::BTreeMap;
    let mut by_id: BTreeMap<i64, Vec<RadarPoint>> = BTreeMap::new();
    let mut noise = Vec::new();
    for &(p, id) in points {
        if id < 0 {
            noise.push(p);
        } else {
            by_id.entry(id).or_default().push(p);
        }
    }
    let mut tracks = Vec::new();
    for (id, mut pts) in by_id {
        pts.sort_by(|a, b| a.t.total_cmp(&b.t));
        let increasing = pts.windows(2).all(|w| w[1].t > w[0].t);
        if pts.len() >= 2 && increasing && id <= u32::MAX as i64 {
            tracks.push(TargetTrack { track_id: id as u32, points: pts });
        } else {
            noise.extend(pts);
        }
    }
    noise.sort_by(|a, b| a.t.total_cmp(&b.t));
    Association { tracks, noise }
}
