//! CSV ingestion in the LargeST-derived layout.
//!
//! * metadata: `id,lat,lon` (LargeST's `ID,Lat,Lng` headers are accepted)
//! * edges: `from_id,to_id,distance_m` (`from,to,cost` accepted)
//! * flow: `timestamp,<node_id>,...`, one column per sensor; timestamps as
//!   epoch seconds or `YYYY-MM-DD HH:MM:SS` (UTC); empty or `NaN` cells are
//!   missing readings.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::Write;
use std::path::Path;

use chrono::{NaiveDateTime, TimeZone, Utc};

use super::TrafficSeries;
use crate::error::{Error, Result};
use crate::graph::{DistanceEntry, RoadGraph};

fn open(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|source| Error::Read {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file))
}

fn parse_err(path: &Path, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        message: message.into(),
    }
}

fn find_column(headers: &csv::StringRecord, aliases: &[&str], path: &Path) -> Result<usize> {
    headers
        .iter()
        .position(|h| aliases.iter().any(|a| h.eq_ignore_ascii_case(a)))
        .ok_or_else(|| parse_err(path, format!("missing column `{}`", aliases[0])))
}

fn parse_f64(s: &str, path: &Path, row: usize) -> Result<f64> {
    s.parse::<f64>()
        .map_err(|e| parse_err(path, format!("row {row}: `{s}`: {e}")))
}

/// `(id, lat, lon)` per sensor in file order.
pub fn read_meta_csv(path: &Path) -> Result<Vec<(String, f64, f64)>> {
    let mut rdr = open(path)?;
    let headers = rdr.headers()?.clone();
    let id = find_column(&headers, &["id", "sensor_id", "node_id"], path)?;
    let lat = find_column(&headers, &["lat", "latitude"], path)?;
    let lon = find_column(&headers, &["lon", "lng", "longitude"], path)?;
    let mut out = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        out.push((
            rec[id].to_string(),
            parse_f64(&rec[lat], path, row)?,
            parse_f64(&rec[lon], path, row)?,
        ));
    }
    Ok(out)
}

/// `(from_id, to_id, meters)` rows.
pub fn read_edges_csv(path: &Path) -> Result<Vec<(String, String, f64)>> {
    let mut rdr = open(path)?;
    let headers = rdr.headers()?.clone();
    let from = find_column(&headers, &["from_id", "from"], path)?;
    let to = find_column(&headers, &["to_id", "to"], path)?;
    let dist = find_column(&headers, &["distance_m", "distance", "cost"], path)?;
    let mut out = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        out.push((
            rec[from].to_string(),
            rec[to].to_string(),
            parse_f64(&rec[dist], path, row)?,
        ));
    }
    Ok(out)
}

/// Raw flow table: column ids, timestamps and row-major `[T, V]` values.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowTable {
    pub ids: Vec<String>,
    pub timestamps: Vec<i64>,
    pub values: Vec<f64>,
}

fn parse_timestamp(s: &str) -> Option<i64> {
    if let Ok(v) = s.parse::<i64>() {
        return Some(v);
    }
    for fmt in ["%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M:%S"] {
        if let Ok(dt) = NaiveDateTime::parse_from_str(s, fmt) {
            return Some(Utc.from_utc_datetime(&dt).timestamp());
        }
    }
    chrono::DateTime::parse_from_rfc3339(s).ok().map(|d| d.timestamp())
}

pub fn read_flow_csv(path: &Path) -> Result<FlowTable> {
    let mut rdr = open(path)?;
    let headers = rdr.headers()?.clone();
    if headers.len() < 2 || !headers[0].eq_ignore_ascii_case("timestamp") {
        return Err(parse_err(path, "expected header `timestamp,<node_id>,...`"));
    }
    let ids: Vec<String> = headers.iter().skip(1).map(str::to_string).collect();
    let mut timestamps = Vec::new();
    let mut values = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.len() != headers.len() {
            return Err(parse_err(path, format!("row {row} has {} fields", rec.len())));
        }
        let ts = parse_timestamp(&rec[0])
            .ok_or_else(|| parse_err(path, format!("row {row}: bad timestamp `{}`", &rec[0])))?;
        timestamps.push(ts);
        for cell in rec.iter().skip(1) {
            if cell.is_empty() || cell.eq_ignore_ascii_case("nan") {
                values.push(f64::NAN);
            } else {
                values.push(parse_f64(cell, path, row)?);
            }
        }
    }
    Ok(FlowTable {
        ids,
        timestamps,
        values,
    })
}

/// Reads the three files and aligns the series to metadata order. Missing
/// readings stay NaN; the summary is logged.
pub fn ingest_largest(
    flow_file: &Path,
    meta_file: &Path,
    edge_file: &Path,
) -> Result<(RoadGraph, TrafficSeries)> {
    let meta = read_meta_csv(meta_file)?;
    let edges = read_edges_csv(edge_file)?;
    let flow = read_flow_csv(flow_file)?;

    let index: HashMap<&str, usize> = meta
        .iter()
        .enumerate()
        .map(|(i, (id, _, _))| (id.as_str(), i))
        .collect();
    if index.len() != meta.len() {
        return Err(Error::IdMismatch("duplicate ids in metadata".into()));
    }
    let flow_ids: HashSet<&str> = flow.ids.iter().map(String::as_str).collect();
    if flow_ids.len() != flow.ids.len() {
        return Err(Error::IdMismatch("duplicate ids in flow header".into()));
    }
    if let Some(id) = flow.ids.iter().find(|id| !index.contains_key(id.as_str())) {
        return Err(Error::IdMismatch(format!("flow column `{id}` has no metadata")));
    }
    if let Some((id, _, _)) = meta.iter().find(|(id, _, _)| !flow_ids.contains(id.as_str())) {
        return Err(Error::IdMismatch(format!("sensor `{id}` has no flow column")));
    }

    let mut distances = Vec::with_capacity(edges.len());
    for (from, to, meters) in &edges {
        let lookup = |id: &str| {
            index
                .get(id)
                .copied()
                .ok_or_else(|| Error::IdMismatch(format!("edge endpoint `{id}` has no metadata")))
        };
        let (f, t) = (lookup(from)?, lookup(to)?);
        if f == t {
            continue;
        }
        distances.push(DistanceEntry {
            from: f,
            to: t,
            meters: *meters,
        });
    }

    let v = meta.len();
    let t = flow.timestamps.len();
    let mut values = vec![0.0; v * t];
    for (col, id) in flow.ids.iter().enumerate() {
        let node = index[id.as_str()];
        for step in 0..t {
            values[node * t + step] = flow.values[step * v + col];
        }
    }
    let ids: Vec<String> = meta.iter().map(|(id, _, _)| id.clone()).collect();
    let coords = meta.iter().map(|(_, lat, lon)| (*lat, *lon)).collect();
    let graph = RoadGraph::new(ids.clone(), coords, distances)?;
    let series = TrafficSeries::new(ids, flow.timestamps, values)?;
    log::info!(
        "ingested {} sensors, {} frames, {} distance entries, {} missing readings",
        series.num_nodes(),
        series.len(),
        graph.distances().len(),
        series.missing_count()
    );
    Ok((graph, series))
}

pub fn write_meta_csv(graph: &RoadGraph, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["id", "lat", "lon"])?;
    for (id, (lat, lon)) in graph.node_ids().iter().zip(graph.coords()) {
        w.write_record([id.clone(), lat.to_string(), lon.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_edges_csv(graph: &RoadGraph, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["from_id", "to_id", "distance_m"])?;
    let ids = graph.node_ids();
    for d in graph.distances() {
        w.write_record([ids[d.from].clone(), ids[d.to].clone(), d.meters.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_flow_csv(series: &TrafficSeries, path: &Path) -> Result<()> {
    let mut f = std::io::BufWriter::new(File::create(path)?);
    write!(f, "timestamp")?;
    for id in series.node_ids() {
        write!(f, ",{id}")?;
    }
    writeln!(f)?;
    for (t, ts) in series.timestamps().iter().enumerate() {
        write!(f, "{ts}")?;
        for n in 0..series.num_nodes() {
            let v = series.get(n, t);
            if v.is_nan() {
                write!(f, ",")?;
            } else {
                write!(f, ",{v}")?;
            }
        }
        writeln!(f)?;
    }
    f.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn timestamps_parse_in_both_forms() {
        assert_eq!(parse_timestamp("1546300800"), Some(1_546_300_800));
        assert_eq!(parse_timestamp("2019-01-01 00:00:00"), Some(1_546_300_800));
        assert_eq!(parse_timestamp("2019-01-01T00:05:00"), Some(1_546_301_100));
        assert_eq!(parse_timestamp("yesterday"), None);
    }
}
