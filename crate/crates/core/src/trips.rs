//! Trip record ingestion and time-windowed statistics.
//!
//! A [`TripDataset`] is an immutable, indexed view over a trip CSV export.
//! Agent-facing tools never read the files themselves; they go through the
//! [`TripStore`] trait, which is the only query surface exposed upward.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use chrono::{Duration, NaiveDateTime, Timelike};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const TRIP_HEADER: [&str; 6] = ["trip_id", "vehicle_id", "depart", "origin_zone", "dest_zone", "path"];
pub const ZONE_HEADER: [&str; 4] = ["zone_id", "name", "cx", "cy"];

/// Minute-resolution departure format used in trip files.
pub const DEPART_FORMAT: &str = "%Y-%m-%d %H:%M";

#[derive(Debug, Error)]
pub enum TripStoreError {
    #[error("file not found: {0}")]
    FileNotFound(String),
    #[error("schema mismatch at row {row}, column {column}: {message}")]
    SchemaMismatch {
        row: u64,
        column: String,
        message: String,
    },
    #[error("dataset contains no trip records")]
    EmptyDataset,
    #[error("invalid time window: start {start} is not before end {end}")]
    InvalidWindow {
        start: NaiveDateTime,
        end: NaiveDateTime,
    },
    #[error("invalid binning: {0}")]
    InvalidBinning(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = TripStoreError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TripRecord {
    pub trip_id: String,
    pub vehicle_id: String,
    pub depart: NaiveDateTime,
    pub origin_zone: String,
    pub dest_zone: String,
    pub path: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Zone {
    pub zone_id: String,
    pub name: String,
    pub cx: f64,
    pub cy: f64,
}

/// Half-open interval `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TimeWindow {
    start: NaiveDateTime,
    end: NaiveDateTime,
}

impl TimeWindow {
    pub fn new(start: NaiveDateTime, end: NaiveDateTime) -> Result<Self> {
        if start >= end {
            return Err(TripStoreError::InvalidWindow { start, end });
        }
        Ok(Self { start, end })
    }

    /// The hour ending at `end`.
    pub fn hour_ending(end: NaiveDateTime) -> Self {
        Self {
            start: end - Duration::hours(1),
            end,
        }
    }

    pub fn start(&self) -> NaiveDateTime {
        self.start
    }

    pub fn end(&self) -> NaiveDateTime {
        self.end
    }

    pub fn contains(&self, t: NaiveDateTime) -> bool {
        self.start <= t && t < self.end
    }

    pub fn duration(&self) -> Duration {
        self.end - self.start
    }
}

impl fmt::Display for TimeWindow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} to {}",
            self.start.format("%Y-%m-%d %H:%M:%S"),
            self.end.format("%Y-%m-%d %H:%M:%S")
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OdMatrix {
    /// Lexicographically ordered.
    pub zones: Vec<String>,
    /// Row = origin, column = destination.
    pub counts: Vec<Vec<u64>>,
    pub window: TimeWindow,
}

impl OdMatrix {
    pub fn get(&self, origin: &str, dest: &str) -> Option<u64> {
        let o = self.zones.binary_search_by(|z| z.as_str().cmp(origin)).ok()?;
        let d = self.zones.binary_search_by(|z| z.as_str().cmp(dest)).ok()?;
        Some(self.counts[o][d])
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    /// All non-zero cells as `(origin, dest, count)`, in row-major order.
    pub fn nonzero_pairs(&self) -> impl Iterator<Item = (&str, &str, u64)> + '_ {
        self.counts.iter().enumerate().flat_map(move |(o, row)| {
            row.iter().enumerate().filter(|(_, c)| **c > 0).map(move |(d, c)| {
                (self.zones[o].as_str(), self.zones[d].as_str(), *c)
            })
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkFlowMap {
    pub flows: BTreeMap<String, u64>,
    pub window: TimeWindow,
}

/// Read-only query surface over a trip dataset.
pub trait TripStore: Send + Sync {
    fn time_span(&self) -> (NaiveDateTime, NaiveDateTime);
    fn trip_count(&self, window: &TimeWindow) -> u64;
    fn od_matrix(&self, window: &TimeWindow) -> OdMatrix;
    fn link_flows(&self, window: &TimeWindow) -> LinkFlowMap;
    fn time_profile(&self, window: &TimeWindow, bin_minutes: u32) -> Result<Vec<(NaiveDateTime, u64)>>;
}

#[derive(Debug, Clone)]
pub struct TripDataset {
    records: Vec<TripRecord>,
    zones: BTreeMap<String, Zone>,
    roads: BTreeSet<String>,
    time_span: (NaiveDateTime, NaiveDateTime),
    /// Record indices sorted by departure time (stable on file order).
    by_depart: Vec<usize>,
}

impl TripDataset {
    /// Builds an indexed dataset from already-parsed parts.
    ///
    /// Zones referenced by records but absent from `zones` are added with an
    /// empty name and a centroid at the origin.
    pub fn from_records(records: Vec<TripRecord>, zones: Vec<Zone>) -> Result<Self> {
        if records.is_empty() {
            return Err(TripStoreError::EmptyDataset);
        }
        let mut zone_map: BTreeMap<String, Zone> =
            zones.into_iter().map(|z| (z.zone_id.clone(), z)).collect();
        let mut roads = BTreeSet::new();
        for r in &records {
            for z in [&r.origin_zone, &r.dest_zone] {
                zone_map.entry(z.clone()).or_insert_with(|| Zone {
                    zone_id: z.clone(),
                    name: String::new(),
                    cx: 0.0,
                    cy: 0.0,
                });
            }
            roads.extend(r.path.iter().cloned());
        }
        let mut by_depart: Vec<usize> = (0..records.len()).collect();
        by_depart.sort_by_key(|&i| records[i].depart);
        let time_span = (
            records[by_depart[0]].depart,
            records[*by_depart.last().unwrap()].depart,
        );
        Ok(Self {
            records,
            zones: zone_map,
            roads,
            time_span,
            by_depart,
        })
    }

    pub fn records(&self) -> &[TripRecord] {
        &self.records
    }

    pub fn zones(&self) -> &BTreeMap<String, Zone> {
        &self.zones
    }

    pub fn roads(&self) -> &BTreeSet<String> {
        &self.roads
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    fn in_window<'a>(&'a self, w: &TimeWindow) -> impl Iterator<Item = &'a TripRecord> + 'a {
        let lo = self
            .by_depart
            .partition_point(|&i| self.records[i].depart < w.start);
        let hi = self
            .by_depart
            .partition_point(|&i| self.records[i].depart < w.end);
        self.by_depart[lo..hi].iter().map(move |&i| &self.records[i])
    }
}

impl TripStore for TripDataset {
    fn time_span(&self) -> (NaiveDateTime, NaiveDateTime) {
        self.time_span
    }

    fn trip_count(&self, window: &TimeWindow) -> u64 {
        self.in_window(window).count() as u64
    }

    fn od_matrix(&self, window: &TimeWindow) -> OdMatrix {
        let zones: Vec<String> = self.zones.keys().cloned().collect();
        let index: BTreeMap<&str, usize> =
            zones.iter().enumerate().map(|(i, z)| (z.as_str(), i)).collect();
        let mut counts = vec![vec![0u64; zones.len()]; zones.len()];
        for r in self.in_window(window) {
            counts[index[r.origin_zone.as_str()]][index[r.dest_zone.as_str()]] += 1;
        }
        OdMatrix {
            zones,
            counts,
            window: *window,
        }
    }

    fn link_flows(&self, window: &TimeWindow) -> LinkFlowMap {
        let mut flows: BTreeMap<String, u64> = BTreeMap::new();
        let mut seen: BTreeSet<&str> = BTreeSet::new();
        for r in self.in_window(window) {
            seen.clear();
            for road in &r.path {
                if seen.insert(road.as_str()) {
                    *flows.entry(road.clone()).or_default() += 1;
                }
            }
        }
        LinkFlowMap {
            flows,
            window: *window,
        }
    }

    fn time_profile(&self, window: &TimeWindow, bin_minutes: u32) -> Result<Vec<(NaiveDateTime, u64)>> {
        if bin_minutes == 0 {
            return Err(TripStoreError::InvalidBinning("bin width must be at least 1 minute".into()));
        }
        let span = window.duration();
        if span.num_seconds() % 60 != 0 {
            return Err(TripStoreError::InvalidBinning(
                "window length is not a whole number of minutes".into(),
            ));
        }
        let minutes = span.num_minutes();
        if minutes % i64::from(bin_minutes) != 0 {
            return Err(TripStoreError::InvalidBinning(format!(
                "{bin_minutes} does not divide the {minutes}-minute window"
            )));
        }
        let bin = Duration::minutes(i64::from(bin_minutes));
        let n = (minutes / i64::from(bin_minutes)) as usize;
        let mut bins: Vec<(NaiveDateTime, u64)> =
            (0..n).map(|k| (window.start + bin * k as i32, 0)).collect();
        for r in self.in_window(window) {
            let k = ((r.depart - window.start).num_seconds() / bin.num_seconds()) as usize;
            bins[k].1 += 1;
        }
        Ok(bins)
    }
}

/// Parses a `YYYY-MM-DD HH:MM` departure stamp.
pub fn parse_depart(s: &str) -> Option<NaiveDateTime> {
    let t = NaiveDateTime::parse_from_str(s.trim(), DEPART_FORMAT).ok()?;
    (t.second() == 0).then_some(t)
}

fn open_reader(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    if !path.exists() {
        return Err(TripStoreError::FileNotFound(path.display().to_string()));
    }
    let file = std::fs::File::open(path)?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(file))
}

fn csv_error(row: u64, e: csv::Error) -> TripStoreError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => TripStoreError::Io(io),
        other => TripStoreError::SchemaMismatch {
            row,
            column: String::new(),
            message: format!("{other:?}"),
        },
    }
}

fn check_header(rec: Option<csv::StringRecord>, expected: &[&str]) -> Result<()> {
    let rec = rec.unwrap_or_default();
    for (i, want) in expected.iter().enumerate() {
        match rec.get(i).map(str::trim) {
            Some(got) if got == *want => {}
            got => {
                return Err(TripStoreError::SchemaMismatch {
                    row: 1,
                    column: (*want).to_string(),
                    message: format!("expected header `{want}`, found `{}`", got.unwrap_or("")),
                })
            }
        }
    }
    if rec.len() != expected.len() {
        return Err(TripStoreError::SchemaMismatch {
            row: 1,
            column: String::new(),
            message: format!("expected {} header columns, found {}", expected.len(), rec.len()),
        });
    }
    Ok(())
}

fn mismatch(row: u64, column: &str, message: impl Into<String>) -> TripStoreError {
    TripStoreError::SchemaMismatch {
        row,
        column: column.to_string(),
        message: message.into(),
    }
}

/// Reads a zones CSV (`zone_id,name,cx,cy`). Row numbers count the header as row 1.
pub fn load_zones(path: &Path) -> Result<Vec<Zone>> {
    let mut rdr = open_reader(path)?;
    let mut rows = rdr.records();
    check_header(rows.next().transpose().map_err(|e| csv_error(1, e))?, &ZONE_HEADER)?;
    let mut zones = Vec::new();
    let mut ids = BTreeSet::new();
    for (i, rec) in rows.enumerate() {
        let row = i as u64 + 2;
        let rec = rec.map_err(|e| csv_error(row, e))?;
        if rec.len() != ZONE_HEADER.len() {
            return Err(mismatch(row, "", format!("expected 4 fields, found {}", rec.len())));
        }
        let zone_id = rec[0].trim().to_string();
        if zone_id.is_empty() {
            return Err(mismatch(row, "zone_id", "empty zone id"));
        }
        if !ids.insert(zone_id.clone()) {
            return Err(mismatch(row, "zone_id", format!("duplicate zone `{zone_id}`")));
        }
        let coord = |col: usize, name: &str| -> Result<f64> {
            rec[col]
                .trim()
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| mismatch(row, name, format!("not a number: `{}`", &rec[col])))
        };
        zones.push(Zone {
            zone_id,
            name: rec[1].trim().to_string(),
            cx: coord(2, "cx")?,
            cy: coord(3, "cy")?,
        });
    }
    Ok(zones)
}

/// Loads and indexes a trip CSV together with its zones file.
///
/// Records referencing a zone missing from the zones file are rejected.
pub fn load_trips(source_path: &Path, zones_path: &Path) -> Result<TripDataset> {
    let zones = load_zones(zones_path)?;
    let known: BTreeSet<String> = zones.iter().map(|z| z.zone_id.clone()).collect();
    let records = read_trip_rows(source_path, Some(&known))?;
    TripDataset::from_records(records, zones)
}

/// Parses every row of a trip CSV. When `known_zones` is given, zone ids
/// outside it are schema errors.
pub fn read_trip_rows(path: &Path, known_zones: Option<&BTreeSet<String>>) -> Result<Vec<TripRecord>> {
    let mut rdr = open_reader(path)?;
    let mut rows = rdr.records();
    check_header(rows.next().transpose().map_err(|e| csv_error(1, e))?, &TRIP_HEADER)?;
    let mut out = Vec::new();
    for (i, rec) in rows.enumerate() {
        let row = i as u64 + 2;
        let rec = rec.map_err(|e| csv_error(row, e))?;
        out.push(parse_trip_row(row, &rec, known_zones)?);
    }
    Ok(out)
}

fn parse_trip_row(
    row: u64,
    rec: &csv::StringRecord,
    known_zones: Option<&BTreeSet<String>>,
) -> Result<TripRecord> {
    if rec.len() != TRIP_HEADER.len() {
        return Err(mismatch(row, "", format!("expected 6 fields, found {}", rec.len())));
    }
    let field = |i: usize| rec[i].trim();
    let nonempty = |i: usize| -> Result<String> {
        let v = field(i);
        if v.is_empty() {
            Err(mismatch(row, TRIP_HEADER[i], "empty value"))
        } else {
            Ok(v.to_string())
        }
    };
    let trip_id = nonempty(0)?;
    let vehicle_id = nonempty(1)?;
    let depart = parse_depart(field(2)).ok_or_else(|| {
        mismatch(row, "depart", format!("expected YYYY-MM-DD HH:MM, found `{}`", field(2)))
    })?;
    let origin_zone = nonempty(3)?;
    let dest_zone = nonempty(4)?;
    if let Some(known) = known_zones {
        for (col, z) in [(3, &origin_zone), (4, &dest_zone)] {
            if !known.contains(z) {
                return Err(mismatch(row, TRIP_HEADER[col], format!("unknown zone `{z}`")));
            }
        }
    }
    let path: Vec<String> = field(5).split('|').map(|s| s.trim().to_string()).collect();
    if path.iter().any(String::is_empty) {
        return Err(mismatch(row, "path", "path must be a non-empty `|`-separated road list"));
    }
    Ok(TripRecord {
        trip_id,
        vehicle_id,
        depart,
        origin_zone,
        dest_zone,
        path,
    })
}

/// Writes records in the trip CSV format.
pub fn write_trips<W: std::io::Write>(out: W, records: &[TripRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRIP_HEADER).map_err(|e| csv_error(0, e))?;
    for r in records {
        let depart = r.depart.format(DEPART_FORMAT).to_string();
        let path = r.path.join("|");
        w.write_record([
            r.trip_id.as_str(),
            &r.vehicle_id,
            &depart,
            &r.origin_zone,
            &r.dest_zone,
            &path,
        ])
        .map_err(|e| csv_error(0, e))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_zones<W: std::io::Write>(out: W, zones: &[Zone]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(ZONE_HEADER).map_err(|e| csv_error(0, e))?;
    for z in zones {
        w.write_record([
            z.zone_id.as_str(),
            &z.name,
            &format!("{:.1}", z.cx),
            &format!("{:.1}", z.cy),
        ])
        .map_err(|e| csv_error(0, e))?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;
    use std::io::Write as _;

    fn t(h: u32, m: u32) -> NaiveDateTime {
        NaiveDate::from_ymd_opt(2019, 8, 13).unwrap().and_hms_opt(h, m, 0).unwrap()
    }

    fn trip(id: &str, depart: NaiveDateTime, o: &str, d: &str, path: &[&str]) -> TripRecord {
        TripRecord {
            trip_id: id.into(),
            vehicle_id: format!("v{id}"),
            depart,
            origin_zone: o.into(),
            dest_zone: d.into(),
            path: path.iter().map(|s| s.to_string()).collect(),
        }
    }

    fn abba() -> TripDataset {
        TripDataset::from_records(
            vec![
                trip("1", t(7, 0), "A", "B", &["r1", "r2"]),
                trip("2", t(7, 30), "A", "B", &["r1", "r1"]),
                trip("3", t(8, 15), "B", "A", &["r2"]),
            ],
            vec![],
        )
        .unwrap()
    }

    #[test]
    fn od_matrix_counts_direct() {
        let ds = abba();
        let w = TimeWindow::new(t(0, 0), t(23, 0)).unwrap();
        let m = ds.od_matrix(&w);
        assert_eq!(m.zones, vec!["A", "B"]);
        assert_eq!(m.get("A", "B"), Some(2));
        assert_eq!(m.get("B", "A"), Some(1));
        assert_eq!(m.get("A", "A"), Some(0));
        assert_eq!(m.total(), ds.trip_count(&w));
    }

    #[test]
    fn empty_window_gives_zero_matrix_with_all_zones() {
        let ds = abba();
        let w = TimeWindow::new(t(1, 0), t(2, 0)).unwrap();
        let m = ds.od_matrix(&w);
        assert_eq!(m.zones.len(), 2);
        assert_eq!(m.total(), 0);
        assert_eq!(ds.trip_count(&w), 0);
    }

    #[test]
    fn window_is_half_open() {
        let ds = abba();
        assert_eq!(ds.trip_count(&TimeWindow::new(t(7, 0), t(7, 30)).unwrap()), 1);
        assert_eq!(ds.trip_count(&TimeWindow::new(t(7, 30), t(8, 15)).unwrap()), 1);
        let (lo, hi) = ds.time_span();
        let full = TimeWindow::new(lo, hi + Duration::minutes(1)).unwrap();
        assert_eq!(ds.trip_count(&full), 3);
    }

    #[test]
    fn link_flows_dedup_within_path() {
        let ds = TripDataset::from_records(vec![trip("1", t(7, 0), "A", "B", &["r1", "r1"])], vec![]).unwrap();
        let w = TimeWindow::hour_ending(t(8, 0));
        let f = ds.link_flows(&w);
        assert_eq!(f.flows, BTreeMap::from([("r1".to_string(), 1)]));

        let ds = TripDataset::from_records(vec![trip("1", t(7, 0), "A", "B", &["r1", "r2"])], vec![]).unwrap();
        let f = ds.link_flows(&w);
        assert_eq!(f.flows.len(), 2);
        assert!(f.flows.values().all(|&c| c == 1));
    }

    #[test]
    fn time_profile_binning_rules() {
        let ds = abba();
        let w = TimeWindow::new(t(7, 0), t(8, 0)).unwrap();
        assert_eq!(ds.time_profile(&w, 60).unwrap(), vec![(t(7, 0), 2)]);
        assert!(matches!(ds.time_profile(&w, 7), Err(TripStoreError::InvalidBinning(_))));
        assert!(matches!(ds.time_profile(&w, 0), Err(TripStoreError::InvalidBinning(_))));
        let halves = ds.time_profile(&w, 30).unwrap();
        assert_eq!(halves, vec![(t(7, 0), 1), (t(7, 30), 1)]);
    }

    #[test]
    fn invalid_window_rejected() {
        assert!(TimeWindow::new(t(8, 0), t(8, 0)).is_err());
        assert!(TimeWindow::new(t(9, 0), t(8, 0)).is_err());
    }

    fn write_file(dir: &Path, name: &str, body: &str) -> std::path::PathBuf {
        let p = dir.join(name);
        let mut f = std::fs::File::create(&p).unwrap();
        f.write_all(body.as_bytes()).unwrap();
        p
    }

    const ZONES: &str = "zone_id,name,cx,cy\nA,Alpha,0,0\nB,Beta,100,0\n";

    #[test]
    fn header_only_is_empty_dataset() {
        let dir = tempfile::tempdir().unwrap();
        let z = write_file(dir.path(), "z.csv", ZONES);
        let p = write_file(dir.path(), "t.csv", "trip_id,vehicle_id,depart,origin_zone,dest_zone,path\n");
        assert!(matches!(load_trips(&p, &z), Err(TripStoreError::EmptyDataset)));
    }

    #[test]
    fn missing_file_reported() {
        let dir = tempfile::tempdir().unwrap();
        let z = write_file(dir.path(), "z.csv", ZONES);
        let err = load_trips(&dir.path().join("nope.csv"), &z).unwrap_err();
        assert!(matches!(err, TripStoreError::FileNotFound(_)));
    }

    #[test]
    fn malformed_rows_carry_row_and_column() {
        let dir = tempfile::tempdir().unwrap();
        let z = write_file(dir.path(), "z.csv", ZONES);
        let body = "trip_id,vehicle_id,depart,origin_zone,dest_zone,path\n\
                    t1,v1,2019-08-13 07:00,A,B,r1|r2\n\
                    t2,v2,13/08/2019,A,B,r1\n";
        let p = write_file(dir.path(), "t.csv", body);
        match load_trips(&p, &z).unwrap_err() {
            TripStoreError::SchemaMismatch { row, column, .. } => {
                assert_eq!(row, 3);
                assert_eq!(column, "depart");
            }
            e => panic!("unexpected {e:?}"),
        }

        let body = "trip_id,vehicle_id,depart,origin_zone,dest_zone,path\nt1,v1,2019-08-13 07:00,A,Q,r1\n";
        let p = write_file(dir.path(), "t2.csv", body);
        match load_trips(&p, &z).unwrap_err() {
            TripStoreError::SchemaMismatch { row, column, .. } => {
                assert_eq!((row, column.as_str()), (2, "dest_zone"));
            }
            e => panic!("unexpected {e:?}"),
        }

        let body = "trip_id,vehicle_id,depart,origin_zone,dest_zone,path\nt1,v1,2019-08-13 07:00,A,B,r1||r2\n";
        let p = write_file(dir.path(), "t3.csv", body);
        assert!(matches!(
            load_trips(&p, &z).unwrap_err(),
            TripStoreError::SchemaMismatch { column, .. } if column == "path"
        ));
    }

    #[test]
    fn wrong_header_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let z = write_file(dir.path(), "z.csv", ZONES);
        let p = write_file(dir.path(), "t.csv", "trip,vehicle_id,depart,origin_zone,dest_zone,path\n");
        assert!(matches!(
            load_trips(&p, &z).unwrap_err(),
            TripStoreError::SchemaMismatch { row: 1, .. }
        ));
    }

    #[test]
    fn csv_round_trip_through_writer() {
        let dir = tempfile::tempdir().unwrap();
        let z = write_file(dir.path(), "z.csv", ZONES);
        let ds = abba();
        let p = dir.path().join("t.csv");
        write_trips(std::fs::File::create(&p).unwrap(), ds.records()).unwrap();
        let back = load_trips(&p, &z).unwrap();
        assert_eq!(back.records(), ds.records());
        assert_eq!(back.zones()["A"].name, "Alpha");
    }

    #[test]
    fn seconds_component_rejected() {
        assert!(parse_depart("2019-08-13 07:00").is_some());
        assert!(parse_depart("2019-08-13 07:00:30").is_none());
    }
}
