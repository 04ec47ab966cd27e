//! CSV and self-contained SVG exports of virtual-node connectivity.
//!
//! The heat map's cell `(v, i)` is `A[i, n_real + v]`, the weight in real
//! row `i`, virtual column `v`. Per-node records carry both directions.

use std::fmt::Write as _;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::graph::{AdjacencyMatrix, RoadGraph};
use crate::tensor::Tensor;

fn require_virtual(adj: &AdjacencyMatrix) -> Result<()> {
    if adj.n_virtual == 0 {
        return Err(Error::Config("adjacency has no virtual nodes to export".into()));
    }
    Ok(())
}

/// `[n_virtual, n_real]`, rows are virtual nodes.
pub fn heatmap_matrix(adj: &AdjacencyMatrix) -> Result<Tensor> {
    require_virtual(adj)?;
    adj.real_to_virtual().transpose()
}

pub fn write_heatmap_csv<W: Write>(w: W, adj: &AdjacencyMatrix, ids: &[String]) -> Result<()> {
    let m = heatmap_matrix(adj)?;
    if ids.len() != adj.n_real {
        return Err(Error::shape("heatmap ids", &[ids.len()], &[adj.n_real]));
    }
    let mut w = csv::Writer::from_writer(w);
    let mut header = vec!["virtual".to_string()];
    header.extend(ids.iter().cloned());
    w.write_record(&header)?;
    for v in 0..adj.n_virtual {
        let mut row = vec![format!("v{v}")];
        row.extend((0..adj.n_real).map(|i| format!("{:?}", m.at(v, i))));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Parses a heat-map CSV back to `[n_virtual, n_real]`.
pub fn read_heatmap_csv<R: Read>(r: R) -> Result<Tensor> {
    let mut rdr = csv::Reader::from_reader(r);
    let cols = rdr.headers()?.len().saturating_sub(1);
    let mut data = Vec::new();
    let mut rows = 0;
    for rec in rdr.records() {
        let rec = rec?;
        for cell in rec.iter().skip(1) {
            data.push(cell.parse::<f64>().map_err(|e| Error::Parse {
                path: "heatmap csv".into(),
                message: e.to_string(),
            })?);
        }
        rows += 1;
    }
    Tensor::new(vec![rows, cols], data)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// White to dark blue on `[0, max]`.
fn color(value: f64, max: f64) -> String {
    let t = if max > 0.0 { (value / max).clamp(0.0, 1.0) } else { 0.0 };
    let lerp = |a: f64, b: f64| (a + (b - a) * t).round() as u8;
    format!("#{:02x}{:02x}{:02x}", lerp(255.0, 8.0), lerp(255.0, 48.0), lerp(255.0, 107.0))
}

pub fn heatmap_svg(adj: &AdjacencyMatrix, ids: &[String]) -> Result<String> {
    let m = heatmap_matrix(adj)?;
    let (rows, cols) = (adj.n_virtual, adj.n_real);
    let cell = 14.0;
    let (left, top) = (60.0, 70.0);
    let width = left + cols as f64 * cell + 90.0;
    let height = top + rows as f64 * cell + 50.0;
    let max = m.data().iter().copied().fold(0.0, f64::max);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="9">"#
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="14" text-anchor="middle" font-size="12">real-to-virtual weights</text>"#,
        width / 2.0
    );
    for v in 0..rows {
        let y = top + v as f64 * cell;
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="end">v{v}</text>"#,
            left - 4.0,
            y + cell * 0.75
        );
        for i in 0..cols {
            let x = left + i as f64 * cell;
            let w = m.at(v, i);
            let _ = writeln!(
                s,
                r#"<rect x="{x}" y="{y}" width="{cell}" height="{cell}" fill="{}" data-weight="{w:?}"/>"#,
                color(w, max)
            );
        }
    }
    for (i, id) in ids.iter().enumerate() {
        let x = left + i as f64 * cell + cell * 0.7;
        let _ = writeln!(
            s,
            r#"<text x="{x}" y="{}" transform="rotate(-90 {x} {})">{}</text>"#,
            top - 4.0,
            top - 4.0,
            escape(id)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">real node</text>"#,
        left + cols as f64 * cell / 2.0,
        top + rows as f64 * cell + 20.0
    );
    let _ = writeln!(
        s,
        r#"<text x="12" y="{}" transform="rotate(-90 12 {})" text-anchor="middle">virtual node</text>"#,
        top + rows as f64 * cell / 2.0,
        top + rows as f64 * cell / 2.0
    );
    // colour bar
    let bx = left + cols as f64 * cell + 20.0;
    for k in 0..10 {
        let t = k as f64 / 9.0;
        let _ = writeln!(
            s,
            r#"<rect x="{bx}" y="{}" width="12" height="8" fill="{}"/>"#,
            top + (9 - k) as f64 * 8.0,
            color(t, 1.0)
        );
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}">{max:.3}</text>"#, bx + 16.0, top + 7.0);
    let _ = writeln!(s, r#"<text x="{}" y="{}">0</text>"#, bx + 16.0, top + 80.0);
    s.push_str("</svg>\n");
    Ok(s)
}

/// Writes `path` (CSV) and the same path with an `.svg` extension.
pub fn export_real_to_virtual_heatmap(adj: &AdjacencyMatrix, ids: &[String], path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    write_heatmap_csv(&mut buf, adj, ids)?;
    fs::write(path, buf)?;
    fs::write(path.with_extension("svg"), heatmap_svg(adj, ids)?)?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct NodeWeight {
    pub id: String,
    pub lat: f64,
    pub lon: f64,
    /// `A[i, n_real + v]`.
    pub to_virtual: f64,
    /// `A[n_real + v, i]`.
    pub from_virtual: f64,
}

pub fn node_weights(adj: &AdjacencyMatrix, graph: &RoadGraph, virtual_index: usize) -> Result<Vec<NodeWeight>> {
    require_virtual(adj)?;
    if virtual_index >= adj.n_virtual {
        return Err(Error::Config(format!(
            "virtual index {virtual_index} out of range (have {})",
            adj.n_virtual
        )));
    }
    if graph.num_nodes() != adj.n_real {
        return Err(Error::shape("node weights", &[graph.num_nodes()], &[adj.n_real]));
    }
    let c = adj.n_real + virtual_index;
    Ok(graph
        .node_ids()
        .iter()
        .zip(graph.coords())
        .enumerate()
        .map(|(i, (id, (lat, lon)))| NodeWeight {
            id: id.clone(),
            lat: *lat,
            lon: *lon,
            to_virtual: adj.at(i, c),
            from_virtual: adj.at(c, i),
        })
        .collect())
}

pub fn write_node_weights_csv<W: Write>(w: W, records: &[NodeWeight]) -> Result<()> {
    let mut w = csv::Writer::from_writer(w);
    w.write_record(["id", "lat", "lon", "weight_to_virtual", "weight_from_virtual"])?;
    for r in records {
        w.write_record([
            r.id.clone(),
            format!("{:?}", r.lat),
            format!("{:?}", r.lon),
            format!("{:?}", r.to_virtual),
            format!("{:?}", r.from_virtual),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_node_weights_csv<R: Read>(r: R) -> Result<Vec<NodeWeight>> {
    let mut rdr = csv::Reader::from_reader(r);
    let perr = |e: std::num::ParseFloatError| Error::Parse {
        path: "node weight csv".into(),
        message: e.to_string(),
    };
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        out.push(NodeWeight {
            id: rec[0].to_string(),
            lat: rec[1].parse().map_err(perr)?,
            lon: rec[2].parse().map_err(perr)?,
            to_virtual: rec[3].parse().map_err(perr)?,
            from_virtual: rec[4].parse().map_err(perr)?,
        });
    }
    Ok(out)
}

/// Scatter in lon/lat; radius grows linearly with `to + from` weight.
pub fn node_weight_svg(records: &[NodeWeight], virtual_index: usize) -> String {
    let (w, h, pad) = (480.0, 480.0, 40.0);
    let fold = |f: fn(f64, f64) -> f64, init: f64, g: fn(&NodeWeight) -> f64| {
        records.iter().map(g).fold(init, f)
    };
    let (lon0, lon1) = (fold(f64::min, f64::INFINITY, |r| r.lon), fold(f64::max, f64::NEG_INFINITY, |r| r.lon));
    let (lat0, lat1) = (fold(f64::min, f64::INFINITY, |r| r.lat), fold(f64::max, f64::NEG_INFINITY, |r| r.lat));
    let span = |a: f64, b: f64| if b > a { b - a } else { 1.0 };
    let max_w = fold(f64::max, 0.0, |r| r.to_virtual + r.from_virtual);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="10">"#
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="16" text-anchor="middle" font-size="12">weights to and from virtual node v{virtual_index}</text>"#,
        w / 2.0
    );
    for r in records {
        let x = pad + (r.lon - lon0) / span(lon0, lon1) * (w - 2.0 * pad);
        let y = h - pad - (r.lat - lat0) / span(lat0, lat1) * (h - 2.0 * pad);
        let weight = r.to_virtual + r.from_virtual;
        let radius = if max_w > 0.0 { 2.0 + 10.0 * weight / max_w } else { 2.0 };
        let _ = writeln!(
            s,
            r##"<circle cx="{x:.2}" cy="{y:.2}" r="{radius:.3}" fill="{}" stroke="#333" stroke-width="0.5" data-id="{}" data-weight="{weight:?}"/>"##,
            color(weight, max_w.max(f64::MIN_POSITIVE)),
            escape(&r.id)
        );
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">longitude</text>"#, w / 2.0, h - 8.0);
    let _ = writeln!(
        s,
        r#"<text x="12" y="{}" transform="rotate(-90 12 {})" text-anchor="middle">latitude</text>"#,
        h / 2.0,
        h / 2.0
    );
    s.push_str("</svg>\n");
    s
}

/// Writes `path` (CSV) and the same path with an `.svg` extension.
pub fn export_node_weight_map(
    adj: &AdjacencyMatrix,
    graph: &RoadGraph,
    virtual_index: usize,
    path: &Path,
) -> Result<Vec<NodeWeight>> {
    let records = node_weights(adj, graph, virtual_index)?;
    let mut buf = Vec::new();
    write_node_weights_csv(&mut buf, &records)?;
    fs::write(path, buf)?;
    fs::write(path.with_extension("svg"), node_weight_svg(&records, virtual_index))?;
    Ok(records)
}
