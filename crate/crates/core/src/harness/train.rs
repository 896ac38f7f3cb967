//! Teacher-forced imitation training with Adam.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::episode::{make_synthetic_episode, template_vocab, EpisodeShape, SyntheticEpisode};
use crate::harness::run::{run_episode, teacher_forced_loss, RunMode};
use crate::losses::{CurveSpec, LossConfig, LossParts};
use crate::model::{Dropout, Model, ModelConfig};
use crate::num::{Gradients, ParamStore, Rng};

/// Adam with bias correction.
#[derive(Clone, Debug)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: u32,
}

impl Adam {
    pub fn new(params: &ParamStore, lr: f64) -> Self {
        let zeros: Vec<Vec<f64>> = params.iter().map(|(_, _, t)| vec![0.0; t.len()]).collect();
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: zeros.clone(),
            v: zeros,
            t: 0,
        }
    }

    pub fn steps(&self) -> u32 {
        self.t
    }

    /// Applies one update from per-parameter gradients (same order as
    /// `params.ids()`); `None` means the parameter received no gradient.
    pub fn step(&mut self, params: &mut ParamStore, grads: &[Option<Vec<f64>>]) -> Result<()> {
        if grads.len() != self.m.len() {
            return Err(Error::shape(format!(
                "{} gradients for {} parameters",
                grads.len(),
                self.m.len()
            )));
        }
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t as i32);
        let c2 = 1.0 - self.beta2.powi(self.t as i32);
        let ids: Vec<_> = params.ids().collect();
        for (i, id) in ids.into_iter().enumerate() {
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            let values = params.get_mut(id).values_mut();
            let zero;
            let g: &[f64] = match &grads[i] {
                Some(g) => g,
                None => {
                    zero = vec![0.0; values.len()];
                    &zero
                }
            };
            for j in 0..values.len() {
                m[j] = self.beta1 * m[j] + (1.0 - self.beta1) * g[j];
                v[j] = self.beta2 * v[j] + (1.0 - self.beta2) * g[j] * g[j];
                let mh = m[j] / c1;
                let vh = v[j] / c2;
                values[j] -= self.lr * mh / (vh.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub model: ModelConfig,
    pub loss: LossConfig,
    pub curve: CurveSpec,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub sub_count: usize,
    pub steps: usize,
    pub grid_cells: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            model: ModelConfig::default(),
            loss: LossConfig::default(),
            curve: CurveSpec::default(),
            learning_rate: 2.5e-4,
            batch_size: 5,
            sub_count: 3,
            steps: 8,
            grid_cells: 16,
        }
    }
}

impl TrainConfig {
    /// Reduced widths that keep a few hundred updates within minutes on one core.
    pub fn smoke() -> Self {
        Self {
            model: ModelConfig {
                feature_dim: 32,
                hidden_dim: 64,
                heads: 8,
                action_embed_dim: 8,
                ..ModelConfig::default()
            },
            grid_cells: 4,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.loss.validate()?;
        self.curve.validate()?;
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("learning rate must be positive"));
        }
        if self.batch_size == 0 || self.sub_count == 0 || self.steps == 0 || self.grid_cells == 0 {
            return Err(Error::invalid("batch size, sub count, steps and grid cells must be positive"));
        }
        Ok(())
    }

    pub fn episode_shape(&self) -> EpisodeShape {
        EpisodeShape {
            feature_dim: self.model.feature_dim,
            grid_cells: self.grid_cells,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub update: usize,
    pub loss_total: f64,
    pub loss_action: f64,
    pub loss_peak: f64,
    pub loss_progress: f64,
    pub lambda: f64,
}

/// Evaluation-mode teacher-forced scores averaged over the training episodes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub action_loss: f64,
    /// Fraction of steps whose argmax action equals the teacher action.
    pub agreement: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LearningCurve {
    pub rows: Vec<CurveRow>,
    pub initial: EvalSummary,
    pub last: EvalSummary,
}

impl LearningCurve {
    /// Relative reduction of the evaluation action loss.
    pub fn action_loss_drop(&self) -> f64 {
        1.0 - self.last.action_loss / self.initial.action_loss
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let io = |e| Error::io(path, e);
        writeln!(w, "update,loss_total,loss_action,loss_peak,loss_progress,lambda").map_err(io)?;
        for r in &self.rows {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                r.update, r.loss_total, r.loss_action, r.loss_peak, r.loss_progress, r.lambda
            )
            .map_err(io)?;
        }
        w.flush().map_err(io)
    }
}

pub fn evaluate(model: &Model, episodes: &[SyntheticEpisode], config: &TrainConfig) -> Result<EvalSummary> {
    let mut loss = 0.0;
    let (mut hits, mut total) = (0usize, 0usize);
    for e in episodes {
        let run = run_episode(model, e, RunMode::TeacherForced, &config.curve, &config.loss)?;
        loss += run.losses.action;
        hits += run.predicted().iter().zip(&e.teacher).filter(|(p, t)| p == t).count();
        total += e.steps();
    }
    Ok(EvalSummary {
        action_loss: loss / episodes.len() as f64,
        agreement: hits as f64 / total as f64,
    })
}

fn diverged(update: usize, e: Error) -> Error {
    match e {
        Error::NonFinite(detail) => Error::Diverged { update, detail },
        other => other,
    }
}

/// Trains a fresh model on `episodes` synthetic episodes for `updates`
/// Adam steps. Each update averages the loss over `batch_size` episodes
/// drawn cyclically, each with its own dropout mask.
pub fn train_smoke(seed: u64, episodes: usize, updates: usize, config: &TrainConfig) -> Result<(Model, LearningCurve)> {
    config.validate()?;
    if updates == 0 || episodes == 0 {
        return Err(Error::invalid("need at least one episode and one update"));
    }
    let shape = config.episode_shape();
    let data: Vec<SyntheticEpisode> = (0..episodes as u64)
        .map(|i| make_synthetic_episode(seed.wrapping_add(i), config.sub_count, config.steps, &shape))
        .collect::<Result<_>>()?;
    let mut model = Model::new(config.model.clone(), template_vocab().len(), seed)?;
    let mut adam = Adam::new(model.params(), config.learning_rate);
    let initial = evaluate(&model, &data, config)?;
    let dropout_rng = Rng::new(seed).fork(0xd0);
    let mut rows = Vec::with_capacity(updates);

    for u in 0..updates {
        let batch: Vec<(usize, Rng)> = (0..config.batch_size)
            .map(|b| {
                let slot = u * config.batch_size + b;
                (slot % data.len(), dropout_rng.fork(slot as u64))
            })
            .collect();
        let results: Vec<(LossParts, f64, f64, Gradients)> = batch
            .into_par_iter()
            .map(|(i, rng)| {
                let mut g = model.graph();
                let mut dropout = Dropout::On {
                    rate: config.model.dropout,
                    rng,
                };
                let (_, vars) = teacher_forced_loss(
                    &model, &mut g, &data[i], &mut dropout, &config.curve, &config.loss, u, updates,
                )?;
                let grads = g.backward(vars.total)?;
                Ok((vars.parts(&g), g.value(vars.total).values()[0], vars.lambda, grads))
            })
            .collect::<Result<_>>()
            .map_err(|e| diverged(u, e))?;

        let scale = 1.0 / results.len() as f64;
        let ids: Vec<_> = model.params().ids().collect();
        let mut summed: Vec<Option<Vec<f64>>> = vec![None; ids.len()];
        let mut row = CurveRow {
            update: u,
            loss_total: 0.0,
            loss_action: 0.0,
            loss_peak: 0.0,
            loss_progress: 0.0,
            lambda: results[0].2,
        };
        for (parts, total, _, grads) in &results {
            row.loss_total += scale * total;
            row.loss_action += scale * parts.action;
            row.loss_peak += scale * parts.peak;
            row.loss_progress += scale * parts.progress;
            for (slot, id) in summed.iter_mut().zip(&ids) {
                if let Some(g) = grads.param(*id) {
                    let acc = slot.get_or_insert_with(|| vec![0.0; g.len()]);
                    for (a, v) in acc.iter_mut().zip(g) {
                        *a += scale * v;
                    }
                }
            }
        }
        if !row.loss_total.is_finite() {
            return Err(Error::Diverged {
                update: u,
                detail: format!("total loss {}", row.loss_total),
            });
        }
        adam.step(model.params_mut(), &summed)?;
        rows.push(row);
    }
    let last = evaluate(&model, &data, config)?;
    Ok((model, LearningCurve { rows, initial, last }))
}
