//! Channel file ingestion and report writers.
//!
//! An input directory holds `host.csv` and `radar.csv`, and optionally
//! `labels.csv` (`trip_id,label`) assigning each trip to a comparison
//! population. Missing channel files read as empty.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::TripRecord;
use crate::error::{Error, Result};
use crate::geo::{fill_headings, GeoPoint, HostState, RadarPoint};
use crate::metrics::ConflictRecord;
use crate::model::ScenarioSample;
use crate::screening::Platform;

pub const HOST_FILE: &str = "host.csv";
pub const RADAR_FILE: &str = "radar.csv";
pub const LABELS_FILE: &str = "labels.csv";

pub const HOST_COLUMNS: [&str; 7] = ["trip_id", "t", "lat", "lon", "speed", "heading", "at_intersection"];
pub const RADAR_COLUMNS: [&str; 7] =
    ["trip_id", "t", "range", "range_rate", "transversal", "azimuth", "target_id"];
pub const RECORD_COLUMNS: [&str; 8] = ["event_id", "trip_id", "t_x", "d_cp", "t_cp", "v_sdv", "v_tv", "label"];
pub const SCENARIO_COLUMNS: [&str; 5] = ["t_cp", "v_sdv", "v_tv", "d_cp", "seed"];

/// A rejected input row.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub file: String,
    /// 1-based line number in the file (the header is line 1).
    pub line: u64,
    pub column: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Ingested {
    pub trips: Vec<TripRecord>,
    pub dropped_trips: Vec<String>,
    pub diagnostics: Vec<Diagnostic>,
}

fn column_index(headers: &csv::StringRecord, columns: &[&str]) -> Result<Vec<usize>> {
    columns
        .iter()
        .map(|c| {
            headers
                .iter()
                .position(|h| h.trim() == *c)
                .ok_or_else(|| Error::Schema((*c).to_string()))
        })
        .collect()
}

struct RowReader<'a> {
    file: &'a str,
    line: u64,
    rec: &'a csv::StringRecord,
    idx: &'a [usize],
    columns: &'a [&'a str],
}

impl RowReader<'_> {
    fn raw(&self, k: usize) -> &str {
        self.rec.get(self.idx[k]).unwrap_or("").trim()
    }

    fn fail(&self, k: usize, message: String) -> Diagnostic {
        Diagnostic { file: self.file.into(), line: self.line, column: self.columns[k].into(), message }
    }

    fn num(&self, k: usize) -> std::result::Result<f64, Diagnostic> {
        let v = self.raw(k);
        match v.parse::<f64>() {
            Ok(x) if x.is_finite() => Ok(x),
            _ => Err(self.fail(k, format!("expected a finite number, got `{v}`"))),
        }
    }
}

type Rows<T> = BTreeMap<String, Vec<(u64, T)>>;

fn read_rows<T>(
    path: &Path,
    columns: &[&str],
    parse: impl Fn(&RowReader) -> std::result::Result<T, Diagnostic>,
    diagnostics: &mut Vec<Diagnostic>,
    bad_trips: &mut std::collections::BTreeSet<String>,
) -> Result<Rows<T>> {
    let mut rows: Rows<T> = BTreeMap::new();
    if !path.exists() {
        return Ok(rows);
    }
    let file = path.file_name().and_then(|f| f.to_str()).unwrap_or("?").to_string();
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_path(path)?;
    let headers = rdr.headers()?.clone();
    let idx = column_index(&headers, columns)?;
    for result in rdr.records() {
        let rec = match result {
            Ok(r) => r,
            Err(e) => {
                let line = e.position().map_or(0, |p| p.line());
                diagnostics.push(Diagnostic { file: file.clone(), line, column: String::new(), message: e.to_string() });
                continue;
            }
        };
        let line = rec.position().map_or(0, |p| p.line());
        let reader = RowReader { file: &file, line, rec: &rec, idx: &idx, columns };
        let trip_id = reader.raw(0).to_string();
        if trip_id.is_empty() {
            diagnostics.push(reader.fail(0, "empty trip_id".into()));
            continue;
        }
        match parse(&reader) {
            Ok(v) => rows.entry(trip_id).or_default().push((line, v)),
            Err(d) => {
                diagnostics.push(d);
                bad_trips.insert(trip_id);
            }
        }
    }
    Ok(rows)
}

struct HostRow {
    t: f64,
    pos: GeoPoint,
    speed: f64,
    heading: Option<f64>,
    at_intersection: bool,
}

fn parse_host(r: &RowReader) -> std::result::Result<HostRow, Diagnostic> {
    let t = r.num(1)?;
    let lat = r.num(2)?;
    let lon = r.num(3)?;
    let pos = GeoPoint::new(lat, lon).map_err(|e| r.fail(2, e.to_string()))?;
    let speed = r.num(4)?;
    if speed < 0.0 {
        return Err(r.fail(4, format!("negative speed {speed}")));
    }
    let heading = if r.raw(5).is_empty() { None } else { Some(r.num(5)?) };
    let at_intersection = match r.raw(6).to_ascii_lowercase().as_str() {
        "1" | "true" => true,
        "0" | "false" => false,
        other => return Err(r.fail(6, format!("expected 0/1, got `{other}`"))),
    };
    Ok(HostRow { t, pos, speed, heading, at_intersection })
}

fn parse_radar(r: &RowReader) -> std::result::Result<(RadarPoint, i64), Diagnostic> {
    let p = RadarPoint {
        t: r.num(1)?,
        range: r.num(2)?,
        range_rate: r.num(3)?,
        transversal: r.num(4)?,
        azimuth: r.num(5)?,
    };
    if p.range <= 0.0 {
        return Err(r.fail(2, format!("non-positive range {}", p.range)));
    }
    if p.azimuth.abs() > 90.0 {
        return Err(r.fail(5, format!("azimuth {} beyond 90 deg", p.azimuth)));
    }
    let id = r
        .raw(6)
        .parse::<i64>()
        .map_err(|_| r.fail(6, format!("expected an integer, got `{}`", r.raw(6))))?;
    Ok((p, id))
}

fn sorted_strictly<T>(rows: &[(u64, T)], t: impl Fn(&T) -> f64) -> bool {
    rows.windows(2).all(|w| t(&w[1].1) > t(&w[0].1))
}

fn sorted_weakly<T>(rows: &[(u64, T)], t: impl Fn(&T) -> f64) -> bool {
    rows.windows(2).all(|w| t(&w[1].1) >= t(&w[0].1))
}

/// Reads and validates the channel files in `dir`.
///
/// A malformed row yields a diagnostic and drops its trip; a trip whose
/// timestamps are out of order is dropped as a whole.
pub fn ingest_trips(dir: &Path, platform: Platform) -> Result<Ingested> {
    let mut out = Ingested::default();
    let mut bad = std::collections::BTreeSet::new();
    let host = read_rows(&dir.join(HOST_FILE), &HOST_COLUMNS, parse_host, &mut out.diagnostics, &mut bad)?;
    let radar = read_rows(&dir.join(RADAR_FILE), &RADAR_COLUMNS, parse_radar, &mut out.diagnostics, &mut bad)?;
    let labels = read_labels(&dir.join(LABELS_FILE))?;

    let mut ids: Vec<&String> = host.keys().chain(radar.keys()).collect();
    ids.sort();
    ids.dedup();
    for id in ids {
        if bad.contains(id) {
            out.dropped_trips.push(id.clone());
            continue;
        }
        let h = host.get(id).map(Vec::as_slice).unwrap_or(&[]);
        let r = radar.get(id).map(Vec::as_slice).unwrap_or(&[]);
        if !sorted_strictly(h, |x| x.t) || !sorted_weakly(r, |x| x.0.t) {
            out.diagnostics.push(Diagnostic {
                file: String::new(),
                line: 0,
                column: "t".into(),
                message: format!("trip {id}: timestamps not sorted"),
            });
            out.dropped_trips.push(id.clone());
            continue;
        }
        let fixes: Vec<(f64, GeoPoint)> = h.iter().map(|(_, x)| (x.t, x.pos)).collect();
        let headings: Vec<Option<f64>> = h.iter().map(|(_, x)| x.heading).collect();
        let filled = match fill_headings(&fixes, &headings) {
            Ok(v) => v,
            Err(e) => {
                out.diagnostics.push(Diagnostic {
                    file: HOST_FILE.into(),
                    line: h.first().map_or(0, |x| x.0),
                    column: "heading".into(),
                    message: format!("trip {id}: {e}"),
                });
                out.dropped_trips.push(id.clone());
                continue;
            }
        };
        let host_states = h
            .iter()
            .zip(filled)
            .map(|((_, x), heading)| HostState::new(x.t, x.pos.lat, x.pos.lon, x.speed, heading))
            .collect::<Result<Vec<_>>>()?;
        out.trips.push(TripRecord {
            trip_id: id.clone(),
            platform,
            label: labels.get(id).cloned(),
            at_intersection: h.iter().map(|(_, x)| x.at_intersection).collect(),
            host: host_states,
            radar: r.iter().map(|(_, x)| *x).collect(),
        });
    }
    Ok(out)
}

fn read_labels(path: &Path) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    if !path.exists() {
        return Ok(out);
    }
    let mut rdr = csv::Reader::from_path(path)?;
    let idx = column_index(rdr.headers()?, &["trip_id", "label"])?;
    for rec in rdr.records() {
        let rec = rec?;
        let id = rec.get(idx[0]).unwrap_or("").trim();
        if !id.is_empty() {
            out.insert(id.to_string(), rec.get(idx[1]).unwrap_or("").trim().to_string());
        }
    }
    Ok(out)
}

/// Writes trips in the ingestion format (`host.csv`, `radar.csv`, and
/// `labels.csv` when any trip carries a label).
pub fn write_trips(dir: &Path, trips: &[TripRecord]) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut host = csv::Writer::from_path(dir.join(HOST_FILE))?;
    host.write_record(HOST_COLUMNS)?;
    let mut radar = csv::Writer::from_path(dir.join(RADAR_FILE))?;
    radar.write_record(RADAR_COLUMNS)?;
    for trip in trips {
        for (s, &flag) in trip.host.iter().zip(&trip.at_intersection) {
            host.write_record([
                trip.trip_id.clone(),
                s.t.to_string(),
                s.lat.to_string(),
                s.lon.to_string(),
                s.speed.to_string(),
                s.heading.to_string(),
                u8::from(flag).to_string(),
            ])?;
        }
        for (p, id) in &trip.radar {
            radar.write_record([
                trip.trip_id.clone(),
                p.t.to_string(),
                p.range.to_string(),
                p.range_rate.to_string(),
                p.transversal.to_string(),
                p.azimuth.to_string(),
                id.to_string(),
            ])?;
        }
    }
    host.flush()?;
    radar.flush()?;
    if trips.iter().any(|t| t.label.is_some()) {
        let mut labels = csv::Writer::from_path(dir.join(LABELS_FILE))?;
        labels.write_record(["trip_id", "label"])?;
        for t in trips {
            if let Some(l) = &t.label {
                labels.write_record([t.trip_id.as_str(), l.as_str()])?;
            }
        }
        labels.flush()?;
    }
    Ok(())
}

pub fn write_conflict_records(path: &Path, records: &[ConflictRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(RECORD_COLUMNS)?;
    for r in records {
        w.write_record([
            r.event_id.clone(),
            r.trip_id.clone(),
            r.t_x.to_string(),
            r.d_cp.to_string(),
            r.t_cp.to_string(),
            r.v_sdv.to_string(),
            r.v_tv.to_string(),
            r.label.clone(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_conflict_records(path: &Path) -> Result<Vec<ConflictRecord>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let idx = column_index(rdr.headers()?, &RECORD_COLUMNS)?;
    let mut out = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let get = |k: usize| rec.get(idx[k]).unwrap_or("").trim();
        let num = |k: usize| -> Result<f64> {
            get(k).parse().map_err(|_| {
                Error::InvalidInput(format!("{} line {}: bad `{}` value `{}`", path.display(), row + 2, RECORD_COLUMNS[k], get(k)))
            })
        };
        out.push(ConflictRecord {
            event_id: get(0).to_string(),
            trip_id: get(1).to_string(),
            t_x: num(2)?,
            d_cp: num(3)?,
            t_cp: num(4)?,
            v_sdv: num(5)?,
            v_tv: num(6)?,
            label: get(7).to_string(),
        });
    }
    Ok(out)
}

pub fn write_scenarios(path: &Path, samples: &[ScenarioSample]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(SCENARIO_COLUMNS)?;
    for s in samples {
        w.write_record([
            s.t_cp.to_string(),
            s.v_sdv.to_string(),
            s.v_tv.to_string(),
            s.d_cp.to_string(),
            s.seed.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut f = File::create(path)?;
    serde_json::to_writer_pretty(&mut f, value)?;
    f.write_all(b"\n")?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, text: &str) {
        std::fs::write(dir.join(name), text).unwrap();
    }

    const HOST: &str = "trip_id,t,lat,lon,speed,heading,at_intersection\n\
        a,0,42.3,-83.7,10,0,1\n\
        a,1,42.30009,-83.7,10,0,1\n\
        b,0,42.3,-83.7,10,,0\n\
        b,1,42.3,-83.69988,10,,0\n";

    #[test]
    fn two_trip_fixture() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), HOST_FILE, HOST);
        write(
            dir.path(),
            RADAR_FILE,
            "trip_id,t,range,range_rate,transversal,azimuth,target_id\na,0.5,30,-5,-1,-1.9,-1\nb,0.5,30,-5,1,1.9,4\n",
        );
        let ing = ingest_trips(dir.path(), Platform::HeavyTruck).unwrap();
        assert_eq!(ing.trips.len(), 2);
        assert!(ing.diagnostics.is_empty());
        let b = &ing.trips[1];
        assert_eq!(b.trip_id, "b");
        assert!((b.host[0].heading - 90.0).abs() < 1e-6, "derived heading {}", b.host[0].heading);
        assert_eq!(b.at_intersection, vec![false, false]);
        assert_eq!(b.radar[0].1, 4);
    }

    #[test]
    fn bad_row_is_diagnosed() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), HOST_FILE, HOST);
        write(
            dir.path(),
            RADAR_FILE,
            "trip_id,t,range,range_rate,transversal,azimuth,target_id\na,0.5,30,-5,-1,0,-1\nb,0.5,abc,-5,1,0,-1\n",
        );
        let ing = ingest_trips(dir.path(), Platform::HeavyTruck).unwrap();
        assert_eq!(ing.trips.len(), 1);
        assert_eq!(ing.dropped_trips, vec!["b".to_string()]);
        assert_eq!(ing.diagnostics.len(), 1);
        let d = &ing.diagnostics[0];
        assert_eq!((d.line, d.column.as_str()), (3, "range"));
    }

    #[test]
    fn missing_column_is_schema_error() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), HOST_FILE, "trip_id,t,lat,lon,heading,at_intersection\n");
        assert_eq!(
            ingest_trips(dir.path(), Platform::HeavyTruck).unwrap_err(),
            Error::Schema("speed".into())
        );
    }

    #[test]
    fn unsorted_trip_rejected() {
        let dir = tempfile::tempdir().unwrap();
        write(
            dir.path(),
            HOST_FILE,
            "trip_id,t,lat,lon,speed,heading,at_intersection\na,1,42.3,-83.7,10,0,1\na,0,42.3,-83.7,10,0,1\n",
        );
        let ing = ingest_trips(dir.path(), Platform::HeavyTruck).unwrap();
        assert!(ing.trips.is_empty());
        assert_eq!(ing.dropped_trips, vec!["a".to_string()]);
    }

    #[test]
    fn empty_directory() {
        let dir = tempfile::tempdir().unwrap();
        assert_eq!(ingest_trips(dir.path(), Platform::HeavyTruck).unwrap(), Ingested::default());
    }
}
