//! Analytic-versus-numeric gradient suites behind the `gradcheck` command.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::episode::{make_synthetic_episode, template_vocab, EpisodeShape, SyntheticEpisode};
use crate::harness::run::teacher_forced_loss;
use crate::losses::{pal_grad, pal_loss_against, pal_targets, CurveKind, CurveSpec, LossConfig};
use crate::model::{Dropout, Model, ModelConfig};
use crate::num::{finite_diff, relative_error, softmax_values, ParamId, Rng, Tensor};

/// Gaussian widths exercised by the peak-loss suite.
pub const SIGMA_SWEEP: [f64; 4] = [0.5, 0.6, 0.8, 1.0];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradReport {
    pub cases: usize,
    /// Number of scalar derivatives compared.
    pub checked: usize,
    pub worst: f64,
    /// Where the worst error occurred.
    pub worst_at: String,
}

impl GradReport {
    fn new(cases: usize) -> Self {
        Self {
            cases,
            checked: 0,
            worst: 0.0,
            worst_at: String::new(),
        }
    }

    fn record(&mut self, err: f64, at: impl FnOnce() -> String) {
        self.checked += 1;
        if err > self.worst || self.worst_at.is_empty() {
            self.worst = err.max(self.worst);
            self.worst_at = at();
        }
    }
}

/// Random peak-loss case `i`: up to 3 rows of up to 10 scores, cycling
/// through every curve kind and the sigma sweep.
pub fn random_pal_case(rng: &mut Rng, i: usize) -> Result<(Tensor, CurveSpec)> {
    let n = 1 + rng.below(10);
    let t = 1 + rng.below(3);
    let kind = CurveKind::ALL[i % CurveKind::ALL.len()];
    let sigma = SIGMA_SWEEP[(i / CurveKind::ALL.len()) % SIGMA_SWEEP.len()];
    let mut rows = Vec::with_capacity(t * n);
    for _ in 0..t {
        let logits: Vec<f64> = (0..n).map(|_| rng.uniform(-3.0, 3.0)).collect();
        rows.extend(softmax_values(&logits));
    }
    Ok((Tensor::new(&[t, n], rows)?, CurveSpec::new(kind, sigma)?))
}

/// Compares [`pal_grad`] with central differences of the loss against
/// frozen targets over `cases` random cases.
pub fn pal_gradient_suite(seed: u64, cases: usize) -> Result<GradReport> {
    if cases == 0 {
        return Err(Error::invalid("at least one case is required"));
    }
    let mut rng = Rng::new(seed);
    let mut report = GradReport::new(cases);
    for i in 0..cases {
        let (alphas, curve) = random_pal_case(&mut rng, i)?;
        let targets = pal_targets(&alphas, &curve)?;
        let analytic = pal_grad(&alphas, &curve)?;
        let shape = alphas.shape().to_vec();
        let numeric = finite_diff(
            |x| pal_loss_against(&Tensor::new(&shape, x.to_vec())?, &targets),
            alphas.values(),
            1e-3,
        )?;
        for (k, (a, n)) in analytic.values().iter().zip(&numeric).enumerate() {
            report.record(relative_error(*a, *n, 1e-6), || format!("case {i} ({}) entry {k}", curve.kind));
        }
    }
    Ok(report)
}

/// Episode used by the whole-model check: `steps` steps, `subs`
/// sub-instructions and the first `words` instruction tokens.
pub fn gradcheck_episode(seed: u64, subs: usize, steps: usize, words: usize, config: &ModelConfig) -> Result<SyntheticEpisode> {
    let shape = EpisodeShape {
        feature_dim: config.feature_dim,
        grid_cells: 2,
    };
    let mut e = make_synthetic_episode(seed, subs, steps, &shape)?;
    if e.word_tokens.len() < words || words == 0 {
        return Err(Error::invalid(format!("episode has {} words, asked for {words}", e.word_tokens.len())));
    }
    e.word_tokens.truncate(words);
    Ok(e)
}

/// Every parameter gradient of the teacher-forced total loss against
/// central differences, at full peak-loss weight and with dropout off.
pub fn model_gradient_check(seed: u64, config: &ModelConfig, episode: &SyntheticEpisode, eps: f64) -> Result<GradReport> {
    let mut model = Model::new(config.clone(), template_vocab().len(), seed)?;
    let curve = CurveSpec::default();
    let loss_cfg = LossConfig::default();
    let loss = |m: &Model| -> Result<f64> {
        let mut g = m.graph();
        let (_, vars) = teacher_forced_loss(m, &mut g, episode, &mut Dropout::Off, &curve, &loss_cfg, 1, 1)?;
        Ok(g.value(vars.total).values()[0])
    };
    let grads = {
        let mut g = model.graph();
        let (_, vars) = teacher_forced_loss(&model, &mut g, episode, &mut Dropout::Off, &curve, &loss_cfg, 1, 1)?;
        g.backward(vars.total)?
    };
    let analytic: Vec<(ParamId, String, Vec<f64>)> = model
        .params()
        .iter()
        .map(|(id, name, t)| {
            let g = grads.param(id).map_or_else(|| vec![0.0; t.len()], <[f64]>::to_vec);
            (id, name.to_string(), g)
        })
        .collect();
    let mut report = GradReport::new(1);
    for (id, name, a) in analytic {
        for (e, a) in a.iter().enumerate() {
            model.params_mut().nudge(id, e, eps);
            let up = loss(&model)?;
            model.params_mut().nudge(id, e, -2.0 * eps);
            let down = loss(&model)?;
            model.params_mut().nudge(id, e, eps);
            let n = (up - down) / (2.0 * eps);
            report.record(relative_error(*a, n, 1e-6), || format!("{name}[{e}]"));
        }
    }
    Ok(report)
}
