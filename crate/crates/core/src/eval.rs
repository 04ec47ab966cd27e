//! Horizon-wise scoring, results tables and the virtual-node sweep.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::data::WindowedDataset;
use crate::error::{Error, Result};
use crate::graph::AdjacencyKind;
use crate::model::{predict, Stgcn};
use crate::tensor::Tensor;

/// Default MAPE mask in flow units.
pub const DEFAULT_MAPE_EPSILON: f64 = 1e-3;
/// First and last 1-indexed horizons of the long-range average.
pub const LONG_HORIZONS: (usize, usize) = (15, 20);

fn check_shapes(op: &'static str, pred: &Tensor, target: &Tensor) -> Result<()> {
    if pred.shape() != target.shape() {
        return Err(Error::shape(op, pred.shape(), target.shape()));
    }
    if pred.is_empty() {
        return Err(Error::UndefinedMetric(format!("{op} of an empty tensor")));
    }
    Ok(())
}

pub fn rmse(pred: &Tensor, target: &Tensor) -> Result<f64> {
    check_shapes("rmse", pred, target)?;
    Ok(rmse_slices(pred.data(), target.data()))
}

fn rmse_slices(pred: &[f64], target: &[f64]) -> f64 {
    let s: f64 = pred.iter().zip(target).map(|(p, t)| (p - t) * (p - t)).sum();
    (s / pred.len() as f64).sqrt()
}

/// MAPE as a fraction plus the number of entries excluded by the mask.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Mape {
    pub value: f64,
    pub masked: usize,
}

/// Mean of `|y − ŷ| / |y|` over entries with `|y| > mask_epsilon`.
pub fn mape(pred: &Tensor, target: &Tensor, mask_epsilon: f64) -> Result<Mape> {
    check_shapes("mape", pred, target)?;
    mape_slices(pred.data(), target.data(), mask_epsilon)
}

fn mape_slices(pred: &[f64], target: &[f64], eps: f64) -> Result<Mape> {
    let (mut sum, mut kept) = (0.0, 0usize);
    for (p, t) in pred.iter().zip(target) {
        if t.abs() > eps {
            sum += (t - p).abs() / t.abs();
            kept += 1;
        }
    }
    if kept == 0 {
        return Err(Error::UndefinedMetric(format!(
            "every target is within {eps} of zero"
        )));
    }
    Ok(Mape {
        value: sum / kept as f64,
        masked: pred.len() - kept,
    })
}

/// Scores per horizon in flow units, with averages.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub kind: AdjacencyKind,
    pub n_virtual: usize,
    pub seed: u64,
    pub rmse: Vec<f64>,
    pub mape: Vec<f64>,
    pub masked: Vec<usize>,
    pub avg_rmse: f64,
    pub avg_mape: f64,
    /// Mean over horizons 15..=20; absent when fewer horizons exist.
    pub long_rmse: Option<f64>,
    pub long_mape: Option<f64>,
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

impl MetricsReport {
    /// Builds a report from per-horizon values, computing the averages.
    pub fn from_horizons(
        kind: AdjacencyKind,
        n_virtual: usize,
        seed: u64,
        rmse: Vec<f64>,
        mape: Vec<f64>,
        masked: Vec<usize>,
    ) -> Result<Self> {
        if rmse.is_empty() || rmse.len() != mape.len() || rmse.len() != masked.len() {
            return Err(Error::shape("metrics report", &[rmse.len()], &[mape.len(), masked.len()]));
        }
        let (lo, hi) = LONG_HORIZONS;
        let long = (rmse.len() >= lo).then(|| lo - 1..hi.min(rmse.len()));
        Ok(Self {
            kind,
            n_virtual,
            seed,
            avg_rmse: mean(&rmse),
            avg_mape: mean(&mape),
            long_rmse: long.clone().map(|r| mean(&rmse[r])),
            long_mape: long.map(|r| mean(&mape[r])),
            rmse,
            mape,
            masked,
        })
    }

    pub fn horizons(&self) -> usize {
        self.rmse.len()
    }

    pub fn masked_total(&self) -> usize {
        self.masked.iter().sum()
    }

    fn long_masked(&self) -> usize {
        let (lo, hi) = LONG_HORIZONS;
        if self.horizons() < lo {
            return 0;
        }
        self.masked[lo - 1..hi.min(self.horizons())].iter().sum()
    }
}

/// Scores `[B, n_real, T_out]` predictions against targets of the same
/// shape, horizon by horizon.
pub fn score(
    pred: &Tensor,
    target: &Tensor,
    kind: AdjacencyKind,
    n_virtual: usize,
    seed: u64,
    mask_epsilon: f64,
) -> Result<MetricsReport> {
    check_shapes("score", pred, target)?;
    if pred.rank() != 3 {
        return Err(Error::shape("score", pred.shape(), &[0, 0, 0]));
    }
    let t_out = pred.shape()[2];
    let rows = pred.len() / t_out;
    let (mut r, mut m, mut k) = (Vec::new(), Vec::new(), Vec::new());
    let mut p_h = vec![0.0; rows];
    let mut y_h = vec![0.0; rows];
    for h in 0..t_out {
        for i in 0..rows {
            p_h[i] = pred.data()[i * t_out + h];
            y_h[i] = target.data()[i * t_out + h];
        }
        r.push(rmse_slices(&p_h, &y_h));
        let mp = mape_slices(&p_h, &y_h, mask_epsilon)
            .map_err(|e| Error::UndefinedMetric(format!("horizon {}: {e}", h + 1)))?;
        m.push(mp.value);
        k.push(mp.masked);
    }
    MetricsReport::from_horizons(kind, n_virtual, seed, r, m, k)
}

/// De-normalized test-set evaluation.
pub fn evaluate(
    model: &Stgcn,
    test: &WindowedDataset,
    seed: u64,
    mask_epsilon: f64,
    batch_size: usize,
) -> Result<MetricsReport> {
    if test.is_empty() {
        return Err(Error::UndefinedMetric("test split has no windows".into()));
    }
    let pred = predict(model, test, batch_size)?;
    let target = test.denormalized_targets()?;
    score(
        &pred,
        &target,
        model.graph().kind(),
        model.graph().n_virtual(),
        seed,
        mask_epsilon,
    )
}

pub const RESULTS_HEADER: [&str; 7] = ["kind", "n_v", "seed", "horizon", "rmse", "mape", "masked_count"];

/// One row per horizon, then `avg` and (when defined) `avg_75_100` rows.
/// Floats use shortest round-trip formatting.
pub fn write_results_csv<W: Write>(w: W, reports: &[MetricsReport]) -> Result<()> {
    let mut w = csv::Writer::from_writer(w);
    w.write_record(RESULTS_HEADER)?;
    for r in reports {
        let row = |h: String, rmse: f64, mape: f64, masked: usize| {
            [
                r.kind.to_string(),
                r.n_virtual.to_string(),
                r.seed.to_string(),
                h,
                format!("{rmse:?}"),
                format!("{mape:?}"),
                masked.to_string(),
            ]
        };
        for h in 0..r.horizons() {
            w.write_record(row((h + 1).to_string(), r.rmse[h], r.mape[h], r.masked[h]))?;
        }
        w.write_record(row("avg".into(), r.avg_rmse, r.avg_mape, r.masked_total()))?;
        if let (Some(lr), Some(lm)) = (r.long_rmse, r.long_mape) {
            w.write_record(row("avg_75_100".into(), lr, lm, r.long_masked()))?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Parses a table written by [`write_results_csv`].
pub fn read_results_csv<R: Read>(r: R) -> Result<Vec<MetricsReport>> {
    let perr = |m: String| Error::Parse {
        path: "results csv".into(),
        message: m,
    };
    let mut rdr = csv::Reader::from_reader(r);
    let headers = rdr.headers()?.clone();
    if headers.iter().ne(RESULTS_HEADER) {
        return Err(perr(format!("unexpected header {headers:?}")));
    }
    struct Partial {
        kind: AdjacencyKind,
        n_v: usize,
        seed: u64,
        rmse: Vec<f64>,
        mape: Vec<f64>,
        masked: Vec<usize>,
        avg: Option<(f64, f64)>,
        long: Option<(f64, f64)>,
    }
    let mut out: Vec<Partial> = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let f = |c: usize| -> Result<f64> {
            rec[c].parse().map_err(|e| perr(format!("row {i}: {e}")))
        };
        let kind: AdjacencyKind = rec[0].parse()?;
        let n_v: usize = rec[1].parse().map_err(|e| perr(format!("row {i}: {e}")))?;
        let seed: u64 = rec[2].parse().map_err(|e| perr(format!("row {i}: {e}")))?;
        let masked: usize = rec[6].parse().map_err(|e| perr(format!("row {i}: {e}")))?;
        // a cell ends after its avg row, except for the long-range row
        let new_cell = out.last().map_or(true, |p| {
            (p.kind, p.n_v, p.seed) != (kind, n_v, seed)
                || (p.avg.is_some() && &rec[3] != "avg_75_100")
        });
        if new_cell {
            out.push(Partial {
                kind,
                n_v,
                seed,
                rmse: Vec::new(),
                mape: Vec::new(),
                masked: Vec::new(),
                avg: None,
                long: None,
            });
        }
        let p = out.last_mut().expect("pushed");
        match &rec[3] {
            "avg" => p.avg = Some((f(4)?, f(5)?)),
            "avg_75_100" => p.long = Some((f(4)?, f(5)?)),
            h => {
                let h: usize = h.parse().map_err(|e| perr(format!("row {i}: {e}")))?;
                if h != p.rmse.len() + 1 {
                    return Err(perr(format!("row {i}: horizon {h} out of order")));
                }
                p.rmse.push(f(4)?);
                p.mape.push(f(5)?);
                p.masked.push(masked);
            }
        }
    }
    out.into_iter()
        .map(|p| {
            let (avg_rmse, avg_mape) = p.avg.ok_or_else(|| perr("cell without avg row".into()))?;
            Ok(MetricsReport {
                kind: p.kind,
                n_virtual: p.n_v,
                seed: p.seed,
                rmse: p.rmse,
                mape: p.mape,
                masked: p.masked,
                avg_rmse,
                avg_mape,
                long_rmse: p.long.map(|l| l.0),
                long_mape: p.long.map(|l| l.1),
            })
        })
        .collect()
}

/// Mean over seeds for one (kind, n_v) cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub kind: AdjacencyKind,
    pub n_virtual: usize,
    pub seeds: Vec<u64>,
    pub mean_avg_rmse: f64,
    pub mean_avg_mape: f64,
    pub mean_long_rmse: Option<f64>,
    pub mean_long_mape: Option<f64>,
    /// Mean RMSE per horizon.
    pub horizon_rmse: Vec<f64>,
}

pub fn summarize(reports: &[MetricsReport]) -> Vec<CellSummary> {
    let mut cells: BTreeMap<(String, usize), Vec<&MetricsReport>> = BTreeMap::new();
    for r in reports {
        cells.entry((r.kind.to_string(), r.n_virtual)).or_default().push(r);
    }
    cells
        .into_values()
        .map(|rs| {
            let avg = |f: &dyn Fn(&MetricsReport) -> f64| mean(&rs.iter().map(|r| f(r)).collect::<Vec<_>>());
            let opt = |f: &dyn Fn(&MetricsReport) -> Option<f64>| {
                rs.iter().map(|r| f(r)).collect::<Option<Vec<_>>>().map(|v| mean(&v))
            };
            let h = rs.iter().map(|r| r.horizons()).min().unwrap_or(0);
            CellSummary {
                kind: rs[0].kind,
                n_virtual: rs[0].n_virtual,
                seeds: rs.iter().map(|r| r.seed).collect(),
                mean_avg_rmse: avg(&|r| r.avg_rmse),
                mean_avg_mape: avg(&|r| r.avg_mape),
                mean_long_rmse: opt(&|r| r.long_rmse),
                mean_long_mape: opt(&|r| r.long_mape),
                horizon_rmse: (0..h).map(|i| avg(&|r| r.rmse[i])).collect(),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(v: &[f64]) -> Tensor {
        Tensor::from_vec(v.to_vec())
    }

    #[test]
    fn hand_cases() {
        assert_eq!(rmse(&t(&[2.0, 2.0]), &t(&[0.0, 4.0])).unwrap(), 2.0);
        let m = mape(&t(&[2.0, 1.0]), &t(&[1.0, 2.0]), DEFAULT_MAPE_EPSILON).unwrap();
        assert_eq!(m.value, 0.75);
        assert_eq!(m.masked, 0);
        assert_eq!(rmse(&t(&[3.0]), &t(&[3.0])).unwrap(), 0.0);
    }

    #[test]
    fn zero_targets_are_masked() {
        let m = mape(&t(&[2.0, 5.0, 1.0]), &t(&[0.0, 4.0, 0.0]), 1e-3).unwrap();
        assert_eq!(m.masked, 2);
        assert_eq!(m.value, 0.25);
        assert!(matches!(
            mape(&t(&[1.0]), &t(&[0.0]), 1e-3),
            Err(Error::UndefinedMetric(_))
        ));
    }

    #[test]
    fn shape_mismatch() {
        assert!(rmse(&t(&[1.0]), &t(&[1.0, 2.0])).is_err());
    }

    fn report(h: usize, seed: u64) -> MetricsReport {
        let rmse = (0..h).map(|i| 10.0 + i as f64 / 3.0).collect();
        let mape = (0..h).map(|i| 0.1 + i as f64 / 700.0).collect();
        MetricsReport::from_horizons(AdjacencyKind::SemiAdaptive, 4, seed, rmse, mape, vec![1; h])
            .unwrap()
    }

    #[test]
    fn averages_cover_the_right_horizons() {
        let r = report(20, 0);
        let long: f64 = r.rmse[14..20].iter().sum::<f64>() / 6.0;
        assert!((r.long_rmse.unwrap() - long).abs() < 1e-12);
        assert!((r.avg_rmse - r.rmse.iter().sum::<f64>() / 20.0).abs() < 1e-12);
        assert_eq!(report(12, 0).long_rmse, None);
        assert_eq!(report(17, 0).long_rmse.unwrap(), report(17, 0).rmse[14..17].iter().sum::<f64>() / 3.0);
    }

    #[test]
    fn csv_roundtrip_is_exact() {
        let mut reports = vec![report(20, 0), report(20, 1), report(3, 2)];
        reports[2].kind = AdjacencyKind::Distance;
        reports[2].n_virtual = 0;
        let mut buf = Vec::new();
        write_results_csv(&mut buf, &reports).unwrap();
        let back = read_results_csv(buf.as_slice()).unwrap();
        assert_eq!(back, reports);
    }

    #[test]
    fn summary_means_over_seeds() {
        let mut a = report(20, 0);
        let mut b = report(20, 1);
        a.avg_rmse = 1.0;
        b.avg_rmse = 3.0;
        let s = summarize(&[a, b]);
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].mean_avg_rmse, 2.0);
        assert_eq!(s[0].seeds, vec![0, 1]);
    }
}
