//! Adam on the MAE loss with seeded shuffling and early stopping.

use std::io::Write;
use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::WindowedDataset;
use crate::error::{Error, Result};
use crate::model::{Stgcn, EMBEDDING_E1, EMBEDDING_E2};
use crate::params::ParamSet;
use crate::rng::{rng_for, Stream};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub seed: u64,
    /// Global-norm clip applied before each update; `None` disables it.
    pub gradient_clip_norm: Option<f64>,
    /// Keep node embeddings at their initial values.
    pub freeze_embeddings: bool,
    /// Use every `window_stride`-th training window.
    pub window_stride: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            batch_size: 16,
            max_epochs: 100,
            patience: 10,
            seed: 0,
            gradient_clip_norm: Some(5.0),
            freeze_embeddings: false,
            window_stride: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.learning_rate > 0.0) {
            return bad("train.learning_rate must be > 0");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("train.beta1 and train.beta2 must lie in [0, 1)");
        }
        if !(self.eps > 0.0) {
            return bad("train.eps must be > 0");
        }
        if self.batch_size == 0 || self.max_epochs == 0 || self.window_stride == 0 {
            return bad("train.batch_size, train.max_epochs and train.window_stride must be >= 1");
        }
        if self.patience == 0 {
            return bad("train.patience must be >= 1");
        }
        if let Some(c) = self.gradient_clip_norm {
            if !(c > 0.0) {
                return bad("train.gradient_clip_norm must be > 0");
            }
        }
        Ok(())
    }
}

/// Mean absolute error over all elements.
pub fn mae_loss(pred: &Tensor, target: &Tensor) -> Result<f64> {
    if pred.shape() != target.shape() {
        return Err(Error::shape("mae_loss", pred.shape(), target.shape()));
    }
    if pred.is_empty() {
        return Err(Error::UndefinedMetric("MAE of an empty tensor".into()));
    }
    let s: f64 = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(p, t)| (p - t).abs())
        .sum();
    Ok(s / pred.len() as f64)
}

/// First and second moments per parameter tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    step: u64,
}

impl AdamState {
    pub fn new(params: &ParamSet) -> Self {
        let zeros = || params.tensors().iter().map(|t| vec![0.0; t.len()]).collect();
        Self {
            m: zeros(),
            v: zeros(),
            step: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }
}

/// One bias-corrected Adam update from the gradients stored on `params`.
///
/// Tensors flagged in `frozen` (or without a gradient) are left unchanged.
/// Gradients are checked for finiteness, then clipped jointly to
/// `gradient_clip_norm`. Gradients are cleared afterwards.
pub fn adam_step(
    params: &mut ParamSet,
    state: &mut AdamState,
    config: &TrainConfig,
    frozen: &[bool],
) -> Result<()> {
    if state.m.len() != params.len() {
        return Err(Error::shape("adam_step", &[state.m.len()], &[params.len()]));
    }
    let active = |i: usize| !frozen.get(i).copied().unwrap_or(false);
    let mut sq = 0.0;
    for (i, (name, t)) in params.iter().enumerate() {
        if let (true, Some(g)) = (active(i), t.grad()) {
            if g.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFiniteGradient {
                    name: name.to_string(),
                });
            }
            sq += g.iter().map(|x| x * x).sum::<f64>();
        }
    }
    let scale = match config.gradient_clip_norm {
        Some(c) if sq.sqrt() > c => c / sq.sqrt(),
        _ => 1.0,
    };
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - config.beta1.powi(t);
    let c2 = 1.0 - config.beta2.powi(t);
    for (i, tensor) in params.tensors_mut().iter_mut().enumerate() {
        let Some(g) = tensor.grad().map(<[f64]>::to_vec) else {
            continue;
        };
        tensor.clear_grad();
        if !active(i) {
            continue;
        }
        let (m, v) = (&mut state.m[i], &mut state.v[i]);
        for (j, w) in tensor.data_mut().iter_mut().enumerate() {
            let gj = g[j] * scale;
            m[j] = config.beta1 * m[j] + (1.0 - config.beta1) * gj;
            v[j] = config.beta2 * v[j] + (1.0 - config.beta2) * gj * gj;
            let mh = m[j] / c1;
            let vh = v[j] / c2;
            *w -= config.learning_rate * mh / (vh.sqrt() + config.eps);
        }
    }
    Ok(())
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub wall_seconds: f64,
}

/// Per-epoch losses (normalized units) and the selected epoch.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct TrainLog {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub checkpoint_path: Option<String>,
}

impl PartialEq for TrainLog {
    /// Wall times are ignored.
    fn eq(&self, other: &Self) -> bool {
        self.best_epoch == other.best_epoch
            && self.checkpoint_path == other.checkpoint_path
            && self.epochs.len() == other.epochs.len()
            && self.epochs.iter().zip(&other.epochs).all(|(a, b)| {
                a.epoch == b.epoch
                    && a.train_loss.to_bits() == b.train_loss.to_bits()
                    && a.val_loss.to_bits() == b.val_loss.to_bits()
            })
    }
}

impl TrainLog {
    pub fn best_val_loss(&self) -> Option<f64> {
        self.epochs
            .iter()
            .find(|e| e.epoch == self.best_epoch)
            .map(|e| e.val_loss)
    }

    /// One JSON object per epoch, then a summary line.
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        for e in &self.epochs {
            serde_json::to_writer(&mut w, e)?;
            writeln!(w)?;
        }
        serde_json::to_writer(
            &mut w,
            &serde_json::json!({
                "best_epoch": self.best_epoch,
                "best_val_loss": self.best_val_loss(),
                "checkpoint_path": self.checkpoint_path,
            }),
        )?;
        writeln!(w)?;
        Ok(())
    }
}

/// MAE of `model` on `data` in normalized units.
pub fn dataset_loss(model: &Stgcn, data: &WindowedDataset, batch_size: usize) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::UndefinedMetric("loss over an empty split".into()));
    }
    let mut total = 0.0;
    let mut start = 0;
    while start < data.len() {
        let end = (start + batch_size.max(1)).min(data.len());
        let idx: Vec<usize> = (start..end).collect();
        let pred = model.forward(&data.input_batch(&idx)?)?;
        total += mae_loss(&pred, &data.target_batch(&idx)?)? * idx.len() as f64;
        start = end;
    }
    Ok(total / data.len() as f64)
}

/// Trains `model` in place of a copy and returns the best-validation
/// parameters. Learned adjacencies are rebuilt from the current embeddings
/// on every forward pass. An empty validation split falls back to the
/// training loss for model selection.
pub fn train(
    model: Stgcn,
    train_set: &WindowedDataset,
    val_set: &WindowedDataset,
    config: &TrainConfig,
) -> Result<(Stgcn, TrainLog)> {
    config.validate()?;
    if train_set.is_empty() {
        return Err(Error::Config("training split has no windows".into()));
    }
    if train_set.n_virtual != model.graph().n_virtual()
        || val_set.n_virtual != model.graph().n_virtual()
    {
        return Err(Error::Config(format!(
            "windows carry {} virtual rows but the model has {}",
            train_set.n_virtual,
            model.graph().n_virtual()
        )));
    }
    let frozen: Vec<bool> = model
        .params()
        .names()
        .iter()
        .map(|n| config.freeze_embeddings && (n == EMBEDDING_E1 || n == EMBEDDING_E2))
        .collect();

    let mut model = model;
    model.params_mut().tensors_mut().iter_mut().for_each(|t| t.clear_grad());
    let mut state = AdamState::new(model.params());
    let mut rng = rng_for(config.seed, Stream::Shuffle);
    let mut order: Vec<usize> = (0..train_set.len()).step_by(config.window_stride).collect();
    let mut best = model.clone();
    let mut log = TrainLog::default();
    let mut best_loss = f64::INFINITY;
    let mut since_best = 0;

    for epoch in 1..=config.max_epochs {
        let started = Instant::now();
        order.shuffle(&mut rng);
        let mut sum = 0.0;
        for (step, idx) in order.chunks(config.batch_size).enumerate() {
            let x = train_set.input_batch(idx)?;
            let y = train_set.target_batch(idx)?;
            let loss = match model.accumulate_mae_grads(&x, &y) {
                Ok(l) => l,
                Err(Error::NonFinite { context }) => {
                    log::error!("non-finite value in {context} at epoch {epoch}, step {step}");
                    return Err(Error::Divergence {
                        epoch,
                        step,
                        loss: f64::NAN,
                    });
                }
                Err(e) => return Err(e),
            };
            if !loss.is_finite() {
                return Err(Error::Divergence { epoch, step, loss });
            }
            adam_step(model.params_mut(), &mut state, config, &frozen)?;
            sum += loss * idx.len() as f64;
        }
        let train_loss = sum / order.len() as f64;
        let val_loss = if val_set.is_empty() {
            train_loss
        } else {
            dataset_loss(&model, val_set, config.batch_size.max(64))?
        };
        log.epochs.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
            wall_seconds: started.elapsed().as_secs_f64(),
        });
        log::info!("epoch {epoch}: train {train_loss:.5} val {val_loss:.5}");
        if val_loss < best_loss {
            best_loss = val_loss;
            log.best_epoch = epoch;
            best = model.clone();
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= config.patience {
                log::info!("early stop after epoch {epoch}; best epoch {}", log.best_epoch);
                break;
            }
        }
    }
    Ok((best, log))
}
