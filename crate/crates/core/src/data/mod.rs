//! Traffic series, file ingestion, synthetic scenarios and windowing.

mod ingest;
mod synthetic;
mod windows;

pub use ingest::{
    ingest_largest, read_edges_csv, read_flow_csv, read_meta_csv, write_edges_csv,
    write_flow_csv, write_meta_csv, FlowTable,
};
pub use synthetic::{
    generate_synthetic, generate_with_incidents, sample_incidents, Incident, SyntheticScenario,
    Topology,
};
pub use windows::{make_windows, NormStats, Split, SplitRatios, WindowedDataset};

use crate::error::{Error, Result};

/// Sampling period of the benchmark data, in seconds.
pub const DEFAULT_STEP_SECONDS: i64 = 300;

/// Flow per sensor over uniformly spaced timestamps.
///
/// `values` is node-major: entry `(node, t)` lives at `node * len + t`.
/// Missing readings are NaN until [`TrafficSeries::impute`] runs.
#[derive(Clone, Debug, PartialEq)]
pub struct TrafficSeries {
    node_ids: Vec<String>,
    timestamps: Vec<i64>,
    values: Vec<f64>,
}

impl TrafficSeries {
    pub fn new(node_ids: Vec<String>, timestamps: Vec<i64>, values: Vec<f64>) -> Result<Self> {
        if values.len() != node_ids.len() * timestamps.len() {
            return Err(Error::shape(
                "traffic series",
                &[node_ids.len(), timestamps.len()],
                &[values.len()],
            ));
        }
        if timestamps.len() >= 2 {
            let step = timestamps[1] - timestamps[0];
            if step <= 0 {
                return Err(Error::NonUniformTimestamps {
                    row: 1,
                    expected: DEFAULT_STEP_SECONDS,
                    found: step,
                });
            }
            for (i, w) in timestamps.windows(2).enumerate() {
                if w[1] - w[0] != step {
                    return Err(Error::NonUniformTimestamps {
                        row: i + 1,
                        expected: step,
                        found: w[1] - w[0],
                    });
                }
            }
        }
        if let Some(v) = values.iter().find(|v| **v < 0.0 || v.is_infinite()) {
            return Err(Error::Construction(format!("flow values must be >= 0, found {v}")));
        }
        Ok(Self {
            node_ids,
            timestamps,
            values,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.node_ids.len()
    }

    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    pub fn node_ids(&self) -> &[String] {
        &self.node_ids
    }

    pub fn timestamps(&self) -> &[i64] {
        &self.timestamps
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn step_seconds(&self) -> Option<i64> {
        (self.timestamps.len() >= 2).then(|| self.timestamps[1] - self.timestamps[0])
    }

    pub fn get(&self, node: usize, t: usize) -> f64 {
        self.values[node * self.len() + t]
    }

    pub fn node_series(&self, node: usize) -> &[f64] {
        let t = self.len();
        &self.values[node * t..(node + 1) * t]
    }

    pub fn missing_count(&self) -> usize {
        self.values.iter().filter(|v| v.is_nan()).count()
    }

    /// Last observation carried forward per node; leading gaps become 0.
    pub fn impute(&mut self) {
        let t = self.len();
        for node in 0..self.num_nodes() {
            let row = &mut self.values[node * t..(node + 1) * t];
            let mut last = 0.0;
            for v in row.iter_mut() {
                if v.is_nan() {
                    *v = last;
                } else {
                    last = *v;
                }
            }
        }
    }

    /// Keeps the listed nodes, in the given order.
    pub fn select_nodes(&self, nodes: &[usize]) -> Result<Self> {
        let t = self.len();
        let mut values = Vec::with_capacity(nodes.len() * t);
        let mut ids = Vec::with_capacity(nodes.len());
        for &n in nodes {
            if n >= self.num_nodes() {
                return Err(Error::IdMismatch(format!("node index {n} out of range")));
            }
            values.extend_from_slice(self.node_series(n));
            ids.push(self.node_ids[n].clone());
        }
        Self::new(ids, self.timestamps.clone(), values)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_gaps_in_time() {
        let r = TrafficSeries::new(vec!["a".into()], vec![0, 300, 900], vec![1.0; 3]);
        assert!(matches!(r, Err(Error::NonUniformTimestamps { row: 2, .. })));
    }

    #[test]
    fn imputation_carries_forward_and_zero_fills_leading() {
        let nan = f64::NAN;
        let mut s = TrafficSeries::new(
            vec!["a".into(), "b".into()],
            vec![0, 300, 600],
            vec![nan, 2.0, nan, 5.0, nan, nan],
        )
        .unwrap();
        assert_eq!(s.missing_count(), 4);
        s.impute();
        assert_eq!(s.values(), &[0.0, 2.0, 2.0, 5.0, 5.0, 5.0]);
    }

    #[test]
    fn negative_flow_is_rejected() {
        assert!(TrafficSeries::new(vec!["a".into()], vec![0], vec![-1.0]).is_err());
    }
}
