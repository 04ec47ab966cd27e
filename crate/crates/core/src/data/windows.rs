//! Sliding input/target windows with a chronological split and train-only
//! z-score statistics.

use serde::{Deserialize, Serialize};

use super::TrafficSeries;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Test,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitRatios {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        Self {
            train: 0.6,
            val: 0.2,
            test: 0.2,
        }
    }
}

impl SplitRatios {
    pub fn validate(&self) -> Result<()> {
        let all = [self.train, self.val, self.test];
        if all.iter().any(|r| !(*r >= 0.0)) || (all.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "split ratios must be non-negative and sum to 1, got {all:?}"
            )));
        }
        Ok(())
    }

    /// Window counts per split; rounding leftovers go to the test split.
    pub fn counts(&self, windows: usize) -> (usize, usize, usize) {
        let w = windows as f64;
        let train = ((w * self.train).round() as usize).min(windows);
        let val = ((w * self.val).round() as usize).min(windows - train);
        (train, val, windows - train - val)
    }
}

/// Global z-score statistics in flow units.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: f64,
    pub std: f64,
}

impl NormStats {
    /// Population statistics; a flat sample falls back to unit spread.
    pub fn from_values(values: impl Iterator<Item = f64> + Clone) -> Self {
        let (mut n, mut sum) = (0usize, 0.0);
        for v in values.clone() {
            n += 1;
            sum += v;
        }
        let mean = if n == 0 { 0.0 } else { sum / n as f64 };
        let var = if n == 0 {
            0.0
        } else {
            values.map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64
        };
        let std = var.sqrt();
        Self {
            mean,
            std: if std > 1e-12 { std } else { 1.0 },
        }
    }

    pub fn normalize(&self, x: f64) -> f64 {
        (x - self.mean) / self.std
    }

    pub fn denormalize(&self, z: f64) -> f64 {
        z * self.std + self.mean
    }
}

/// Normalized windows for one split.
///
/// `inputs` is `[B, n_real + n_virtual, T_in]` with all virtual rows exactly
/// zero; `targets` is `[B, n_real, T_out]`, normalized with the same stats.
#[derive(Clone, Debug, PartialEq)]
pub struct WindowedDataset {
    pub inputs: Tensor,
    pub targets: Tensor,
    pub norm: Option<NormStats>,
    pub split: Split,
    /// Series index of each window's first input step.
    pub starts: Vec<usize>,
    pub n_real: usize,
    pub n_virtual: usize,
    pub input_window: usize,
    pub output_horizons: usize,
}

impl WindowedDataset {
    pub fn len(&self) -> usize {
        self.starts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.starts.is_empty()
    }

    fn gather(t: &Tensor, idx: &[usize]) -> Result<Tensor> {
        let s = t.shape();
        let stride = s[1] * s[2];
        let mut data = Vec::with_capacity(idx.len() * stride);
        for &i in idx {
            if i >= s[0] {
                return Err(Error::shape("window index", s, &[i]));
            }
            data.extend_from_slice(&t.data()[i * stride..(i + 1) * stride]);
        }
        Tensor::new(vec![idx.len(), s[1], s[2]], data)
    }

    pub fn input_batch(&self, idx: &[usize]) -> Result<Tensor> {
        Self::gather(&self.inputs, idx)
    }

    pub fn target_batch(&self, idx: &[usize]) -> Result<Tensor> {
        Self::gather(&self.targets, idx)
    }

    /// Targets in flow units.
    pub fn denormalized_targets(&self) -> Result<Tensor> {
        let stats = self
            .norm
            .ok_or_else(|| Error::Config("windows carry no normalization statistics".into()))?;
        let data = self.targets.data().iter().map(|v| stats.denormalize(*v)).collect();
        Tensor::new(self.targets.shape().to_vec(), data)
    }

    /// Same windows, padded or trimmed to a different virtual-node count.
    pub fn with_virtual_nodes(&self, n_virtual: usize) -> Self {
        let b = self.len();
        let t = self.input_window;
        let (old, new) = (self.n_real + self.n_virtual, self.n_real + n_virtual);
        let mut data = vec![0.0; b * new * t];
        for w in 0..b {
            let src = &self.inputs.data()[w * old * t..w * old * t + self.n_real * t];
            data[w * new * t..w * new * t + self.n_real * t].copy_from_slice(src);
        }
        Self {
            inputs: Tensor::new(vec![b, new, t], data).expect("shape"),
            n_virtual,
            ..self.clone()
        }
    }
}

/// Builds train/val/test windows in chronological order.
///
/// Window `k` reads inputs at steps `k..k+T_in` and targets at
/// `k+T_in..k+T_in+T_out`. Windows are assigned whole to one split, earliest
/// first. Statistics come from the input span of the training windows only.
/// Missing readings are imputed first.
pub fn make_windows(
    series: &TrafficSeries,
    input_window: usize,
    output_horizons: usize,
    n_virtual: usize,
    ratios: SplitRatios,
) -> Result<[WindowedDataset; 3]> {
    ratios.validate()?;
    if input_window == 0 || output_horizons == 0 {
        return Err(Error::Config("input window and horizons must be >= 1".into()));
    }
    let span = input_window + output_horizons;
    if series.len() < span {
        return Err(Error::SeriesTooShort {
            len: series.len(),
            required: span,
        });
    }
    let mut series = series.clone();
    if series.missing_count() > 0 {
        series.impute();
    }
    let windows = series.len() - span + 1;
    let (n_train, n_val, _) = ratios.counts(windows);
    if n_train == 0 {
        return Err(Error::SeriesTooShort {
            len: series.len(),
            required: span,
        });
    }
    let stats_end = n_train - 1 + input_window;
    let n_real = series.num_nodes();
    let stats = NormStats::from_values(
        (0..n_real).flat_map(|i| series.node_series(i)[..stats_end].iter().copied()),
    );

    let build = |range: std::ops::Range<usize>, split: Split| -> Result<WindowedDataset> {
        let b = range.len();
        let total = n_real + n_virtual;
        let mut inputs = vec![0.0; b * total * input_window];
        let mut targets = vec![0.0; b * n_real * output_horizons];
        for (w, start) in range.clone().enumerate() {
            for node in 0..n_real {
                let s = series.node_series(node);
                let xi = (w * total + node) * input_window;
                for (dst, v) in inputs[xi..xi + input_window]
                    .iter_mut()
                    .zip(&s[start..start + input_window])
                {
                    *dst = stats.normalize(*v);
                }
                let yi = (w * n_real + node) * output_horizons;
                for (dst, v) in targets[yi..yi + output_horizons]
                    .iter_mut()
                    .zip(&s[start + input_window..start + span])
                {
                    *dst = stats.normalize(*v);
                }
            }
        }
        Ok(WindowedDataset {
            inputs: Tensor::new(vec![b, total, input_window], inputs)?,
            targets: Tensor::new(vec![b, n_real, output_horizons], targets)?,
            norm: Some(stats),
            split,
            starts: range.collect(),
            n_real,
            n_virtual,
            input_window,
            output_horizons,
        })
    };
    Ok([
        build(0..n_train, Split::Train)?,
        build(n_train..n_train + n_val, Split::Val)?,
        build(n_train + n_val..windows, Split::Test)?,
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(nodes: usize, len: usize) -> TrafficSeries {
        let values = (0..nodes * len).map(|i| (i % len) as f64 + 10.0 * (i / len) as f64).collect();
        TrafficSeries::new(
            (0..nodes).map(|i| format!("n{i}")).collect(),
            (0..len as i64).map(|t| t * 300).collect(),
            values,
        )
        .unwrap()
    }

    #[test]
    fn minimal_series_gives_one_window() {
        let s = ramp(2, 5);
        let ratios = SplitRatios {
            train: 1.0,
            val: 0.0,
            test: 0.0,
        };
        let [tr, va, te] = make_windows(&s, 3, 2, 0, ratios).unwrap();
        assert_eq!((tr.len(), va.len(), te.len()), (1, 0, 0));
    }

    #[test]
    fn too_short_series_is_an_error() {
        let s = ramp(2, 4);
        assert!(matches!(
            make_windows(&s, 3, 2, 0, SplitRatios::default()),
            Err(Error::SeriesTooShort { .. })
        ));
    }

    #[test]
    fn hundred_windows_split_sixty_twenty_twenty() {
        // T = 100 + T_in + T_out - 1 gives exactly 100 windows.
        let s = ramp(3, 100 + 4 + 3 - 1);
        let [tr, va, te] = make_windows(&s, 4, 3, 2, SplitRatios::default()).unwrap();
        assert_eq!((tr.len(), va.len(), te.len()), (60, 20, 20));
        assert_eq!(tr.starts.last(), Some(&59));
        assert_eq!(va.starts[0], 60);
        assert_eq!(te.starts[0], 80);
    }

    #[test]
    fn virtual_rows_are_zero_and_targets_follow_inputs() {
        let s = ramp(2, 40);
        let [tr, ..] = make_windows(&s, 4, 3, 2, SplitRatios::default()).unwrap();
        assert_eq!(tr.inputs.shape(), &[tr.len(), 4, 4]);
        let stats = tr.norm.unwrap();
        for w in 0..tr.len() {
            for v in 2..4 {
                let row = &tr.inputs.data()[(w * 4 + v) * 4..(w * 4 + v + 1) * 4];
                assert!(row.iter().all(|x| *x == 0.0));
            }
            // node 0 ramps by one per step: first target equals last input + 1
            let last_in = stats.denormalize(tr.inputs.data()[w * 16 + 3]);
            let first_out = stats.denormalize(tr.targets.data()[w * 6]);
            assert!((first_out - last_in - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn normalize_roundtrip() {
        let st = NormStats { mean: 231.7, std: 48.3 };
        for x in [0.0, 1.0, 231.7, 999.25, 1e-3] {
            assert!((st.denormalize(st.normalize(x)) - x).abs() < 1e-12);
        }
    }

    #[test]
    fn flat_series_gets_unit_std() {
        let st = NormStats::from_values([5.0, 5.0, 5.0].into_iter());
        assert_eq!(st.mean, 5.0);
        assert_eq!(st.std, 1.0);
    }
}
