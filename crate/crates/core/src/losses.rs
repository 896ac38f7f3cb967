//! Training objectives: peak attention loss, weighted action cross-entropy,
//! progress regression and their scheduled combination.
//!
//! Each loss exists twice: as a plain function over tensors (used by the
//! oracles and the CLI) and as a graph builder (used by training).

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::argmax;
use crate::num::{softmax_values, Graph, Tensor, Var};

/// Off-peak penalty of the constant target curve.
pub const CONSTANT_PENALTY: f64 = 4.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CurveKind {
    Gaussian,
    Constant,
    Linear,
    Quadratic,
    Cubic,
}

impl CurveKind {
    pub const ALL: [CurveKind; 5] = [
        CurveKind::Gaussian,
        CurveKind::Constant,
        CurveKind::Linear,
        CurveKind::Quadratic,
        CurveKind::Cubic,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            CurveKind::Gaussian => "gaussian",
            CurveKind::Constant => "constant",
            CurveKind::Linear => "linear",
            CurveKind::Quadratic => "quadratic",
            CurveKind::Cubic => "cubic",
        }
    }
}

impl fmt::Display for CurveKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CurveKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::invalid(format!("unknown curve kind {s:?}")))
    }
}

/// Shape of the single-peak target distribution.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveSpec {
    pub kind: CurveKind,
    /// Width of the gaussian curve; ignored by the other kinds.
    pub sigma: f64,
}

impl Default for CurveSpec {
    fn default() -> Self {
        Self::gaussian(0.6)
    }
}

impl CurveSpec {
    pub fn gaussian(sigma: f64) -> Self {
        Self {
            kind: CurveKind::Gaussian,
            sigma,
        }
    }

    pub fn new(kind: CurveKind, sigma: f64) -> Result<Self> {
        let c = Self { kind, sigma };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma.is_finite() && self.sigma > 0.0) {
            return Err(Error::invalid(format!("sigma must be positive, got {}", self.sigma)));
        }
        Ok(())
    }

    /// Pre-softmax target logit at distance `d = |k - k*|`.
    pub fn logit(&self, d: usize) -> f64 {
        let d = d as f64;
        match self.kind {
            CurveKind::Gaussian => -(d * d) / (2.0 * self.sigma * self.sigma),
            CurveKind::Constant if d == 0.0 => 0.0,
            CurveKind::Constant => -CONSTANT_PENALTY,
            CurveKind::Linear => -d,
            CurveKind::Quadratic => -d * d,
            CurveKind::Cubic => -d * d * d,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExpectedScore {
    pub beta: Tensor,
    pub k_star: usize,
}

/// Target distribution peaked at `argmax alpha` (lowest index on ties).
pub fn expected_score(alpha: &Tensor, curve: &CurveSpec) -> Result<ExpectedScore> {
    curve.validate()?;
    if alpha.rank() != 1 || alpha.is_empty() {
        return Err(Error::shape(format!(
            "score vector must be non-empty rank 1, got {:?}",
            alpha.shape()
        )));
    }
    let (beta, k_star) = target_row(alpha.values(), curve);
    Ok(ExpectedScore {
        beta: Tensor::vector(beta)?,
        k_star,
    })
}

fn target_row(alpha: &[f64], curve: &CurveSpec) -> (Vec<f64>, usize) {
    let k_star = argmax(alpha);
    let z: Vec<f64> = (0..alpha.len()).map(|k| curve.logit(k.abs_diff(k_star))).collect();
    (softmax_values(&z), k_star)
}

fn check_scores(alphas: &Tensor) -> Result<(usize, usize)> {
    match alphas.shape() {
        [t, n] if *t >= 1 && *n >= 1 => Ok((*t, *n)),
        s => Err(Error::shape(format!("score rows must be [T >= 1, N >= 1], got {s:?}"))),
    }
}

/// Target rows for every score row, with each peak fixed at that row's argmax.
pub fn pal_targets(alphas: &Tensor, curve: &CurveSpec) -> Result<Tensor> {
    curve.validate()?;
    let (t, n) = check_scores(alphas)?;
    let mut out = Vec::with_capacity(t * n);
    for r in 0..t {
        out.extend(target_row(alphas.row(r)?, curve).0);
    }
    Tensor::new(&[t, n], out)
}

/// `(1/N) * sum (alpha - target)^2` against fixed targets.
pub fn pal_loss_against(alphas: &Tensor, targets: &Tensor) -> Result<f64> {
    let (_, n) = check_scores(alphas)?;
    if alphas.shape() != targets.shape() {
        return Err(Error::shape(format!(
            "targets {:?} do not match scores {:?}",
            targets.shape(),
            alphas.shape()
        )));
    }
    let sq: f64 = alphas
        .values()
        .iter()
        .zip(targets.values())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(sq / n as f64)
}

/// Peak attention loss over `[T, N]` score rows.
pub fn pal_loss(alphas: &Tensor, curve: &CurveSpec) -> Result<f64> {
    pal_loss_against(alphas, &pal_targets(alphas, curve)?)
}

/// Gradient of [`pal_loss`] with the targets held fixed: `(2/N)(alpha - beta)`.
pub fn pal_grad(alphas: &Tensor, curve: &CurveSpec) -> Result<Tensor> {
    let targets = pal_targets(alphas, curve)?;
    let n = alphas.shape()[1] as f64;
    let g = alphas
        .values()
        .iter()
        .zip(targets.values())
        .map(|(a, b)| 2.0 * (a - b) / n)
        .collect();
    Tensor::new(alphas.shape(), g)
}

/// Number of strict local maxima of a score vector. Plateaus count once.
pub fn count_peaks(alpha: &[f64]) -> usize {
    let n = alpha.len();
    let mut peaks = 0;
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && alpha[j + 1] == alpha[i] {
            j += 1;
        }
        let left_lower = i == 0 || alpha[i - 1] < alpha[i];
        let right_lower = j + 1 == n || alpha[j + 1] < alpha[i];
        if left_lower && right_lower {
            peaks += 1;
        }
        i = j + 1;
    }
    peaks
}

#[derive(Clone, Debug, PartialEq)]
pub struct PalDescent {
    pub logits: Vec<f64>,
    pub alpha: Vec<f64>,
    pub loss: f64,
    pub steps: usize,
}

/// Plain gradient descent of the peak attention loss on free logits, with
/// `alpha = softmax(logits)`. Stops early once the loss reaches `tolerance`
/// and the scores have a single peak.
pub fn pal_descent(logits: &[f64], curve: &CurveSpec, steps: usize, lr: f64, tolerance: f64) -> Result<PalDescent> {
    if logits.is_empty() {
        return Err(Error::invalid("no logits to descend"));
    }
    let mut logits = logits.to_vec();
    let n = logits.len();
    for step in 0..=steps {
        let alpha = softmax_values(&logits);
        let row = Tensor::matrix(1, n, alpha.clone())?;
        let loss = pal_loss(&row, curve)?;
        if step == steps || (loss <= tolerance && count_peaks(&alpha) == 1) {
            return Ok(PalDescent { logits, alpha, loss, steps: step });
        }
        let g = pal_grad(&row, curve)?;
        let g = g.values();
        // softmax Jacobian-vector product
        let dot: f64 = alpha.iter().zip(g).map(|(a, gi)| a * gi).sum();
        for k in 0..n {
            logits[k] -= lr * alpha[k] * (g[k] - dot);
        }
    }
    unreachable!("loop returns on its last iteration")
}

/// Per-step weights: `inflection_weight` where the teacher action differs
/// from the previous one (the first step included), 1 elsewhere.
pub fn inflection_weights(teacher: &[usize], inflection_weight: f64) -> Vec<f64> {
    teacher
        .iter()
        .enumerate()
        .map(|(t, a)| {
            if t == 0 || teacher[t - 1] != *a {
                inflection_weight
            } else {
                1.0
            }
        })
        .collect()
}

fn check_teacher(teacher: &[usize], actions: usize) -> Result<()> {
    if let Some(&bad) = teacher.iter().find(|&&a| a >= actions) {
        return Err(Error::Index { index: bad, len: actions });
    }
    Ok(())
}

/// Weighted cross-entropy normalised by the sum of weights.
pub fn action_loss(dists: &Tensor, teacher: &[usize], inflection_weight: f64) -> Result<f64> {
    let (t, a) = match dists.shape() {
        [t, a] => (*t, *a),
        s => return Err(Error::shape(format!("action distributions must be [T, A], got {s:?}"))),
    };
    if t != teacher.len() || t == 0 {
        return Err(Error::shape(format!("{t} distributions for {} teacher actions", teacher.len())));
    }
    check_teacher(teacher, a)?;
    let w = inflection_weights(teacher, inflection_weight);
    let mut num = 0.0;
    for (r, (&act, wt)) in teacher.iter().zip(&w).enumerate() {
        num -= wt * dists.row(r)?[act].ln();
    }
    let loss = num / w.iter().sum::<f64>();
    if !loss.is_finite() {
        return Err(Error::NonFinite("action loss".into()));
    }
    Ok(loss)
}

/// Mean squared error between predicted and teacher progress.
pub fn progress_loss(progress: &[f64], teacher: &[f64]) -> Result<f64> {
    if progress.len() != teacher.len() || progress.is_empty() {
        return Err(Error::shape(format!(
            "{} progress values for {} targets",
            progress.len(),
            teacher.len()
        )));
    }
    let sq: f64 = progress.iter().zip(teacher).map(|(p, t)| (p - t) * (p - t)).sum();
    Ok(sq / progress.len() as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossConfig {
    pub lambda_max: f64,
    pub theta: f64,
    pub inflection_weight: f64,
    /// Fraction of training over which the peak-loss weight ramps up from 0.
    pub lambda_warmup_fraction: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            lambda_max: 0.4,
            theta: 1.0,
            inflection_weight: 3.2,
            lambda_warmup_fraction: 0.5,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.lambda_max >= 0.0
            && self.theta >= 0.0
            && self.inflection_weight >= 1.0
            && self.lambda_warmup_fraction > 0.0
            && self.lambda_warmup_fraction <= 1.0;
        if !ok {
            return Err(Error::invalid(format!("invalid loss configuration {self:?}")));
        }
        Ok(())
    }

    /// Peak-loss weight at update `u` of `total`.
    pub fn lambda_at(&self, update: usize, total_updates: usize) -> Result<f64> {
        if total_updates == 0 {
            return Err(Error::invalid("total update count must be positive"));
        }
        let horizon = self.lambda_warmup_fraction * total_updates as f64;
        Ok(self.lambda_max * (update as f64 / horizon).min(1.0))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossParts {
    pub action: f64,
    pub peak: f64,
    pub progress: f64,
}

/// `action + lambda(u) * peak + theta * progress`.
pub fn total_loss(parts: &LossParts, config: &LossConfig, update: usize, total_updates: usize) -> Result<f64> {
    let lambda = config.lambda_at(update, total_updates)?;
    Ok(parts.action + lambda * parts.peak + config.theta * parts.progress)
}

/// Graph form of [`pal_loss`]; targets are recomputed from the current
/// values and enter as constants.
pub fn pal_loss_graph(g: &mut Graph, alphas: &[Var], curve: &CurveSpec) -> Result<Var> {
    curve.validate()?;
    let Some(&first) = alphas.first() else {
        return Err(Error::invalid("no score rows"));
    };
    let n = g.shape(first).iter().product::<usize>();
    let mut terms = Vec::with_capacity(alphas.len());
    for &a in alphas {
        if g.shape(a) != [n] {
            return Err(Error::shape(format!("ragged score rows: {:?} vs [{n}]", g.shape(a))));
        }
        let (beta, _) = target_row(g.value(a).values(), curve);
        let beta = g.constant(Tensor::vector(beta)?)?;
        let d = g.sub(a, beta)?;
        let sq = g.square(d)?;
        terms.push(g.sum(sq)?);
    }
    let total = sum_scalars(g, &terms)?;
    g.scale(total, 1.0 / n as f64)
}

/// Graph form of [`action_loss`].
pub fn action_loss_graph(g: &mut Graph, dists: &[Var], teacher: &[usize], inflection_weight: f64) -> Result<Var> {
    if dists.len() != teacher.len() || dists.is_empty() {
        return Err(Error::shape(format!(
            "{} distributions for {} teacher actions",
            dists.len(),
            teacher.len()
        )));
    }
    let w = inflection_weights(teacher, inflection_weight);
    let norm: f64 = w.iter().sum();
    let mut terms = Vec::with_capacity(dists.len());
    for ((&d, &a), wt) in dists.iter().zip(teacher).zip(&w) {
        check_teacher(&[a], g.shape(d)[0])?;
        let p = g.pick(d, a)?;
        let lp = g.ln(p)?;
        terms.push(g.scale(lp, -wt / norm)?);
    }
    sum_scalars(g, &terms)
}

/// Graph form of [`progress_loss`].
pub fn progress_loss_graph(g: &mut Graph, progress: &[Var], teacher: &[f64]) -> Result<Var> {
    if progress.len() != teacher.len() || progress.is_empty() {
        return Err(Error::shape(format!(
            "{} progress values for {} targets",
            progress.len(),
            teacher.len()
        )));
    }
    let mut terms = Vec::with_capacity(progress.len());
    for (&p, &t) in progress.iter().zip(teacher) {
        let p = g.sum(p)?;
        let d = g.offset(p, -t)?;
        terms.push(g.square(d)?);
    }
    let total = sum_scalars(g, &terms)?;
    g.scale(total, 1.0 / progress.len() as f64)
}

#[derive(Clone, Copy, Debug)]
pub struct LossVars {
    pub total: Var,
    pub action: Var,
    pub peak: Var,
    pub progress: Var,
    pub lambda: f64,
}

impl LossVars {
    pub fn parts(&self, g: &Graph) -> LossParts {
        LossParts {
            action: g.value(self.action).values()[0],
            peak: g.value(self.peak).values()[0],
            progress: g.value(self.progress).values()[0],
        }
    }
}

/// Builds the scheduled total loss on a graph.
#[allow(clippy::too_many_arguments)]
pub fn total_loss_graph(
    g: &mut Graph,
    dists: &[Var],
    alphas: &[Var],
    progress: &[Var],
    teacher: &[usize],
    teacher_progress: &[f64],
    curve: &CurveSpec,
    config: &LossConfig,
    update: usize,
    total_updates: usize,
) -> Result<LossVars> {
    config.validate()?;
    let lambda = config.lambda_at(update, total_updates)?;
    let action = action_loss_graph(g, dists, teacher, config.inflection_weight)?;
    let peak = pal_loss_graph(g, alphas, curve)?;
    let progress = progress_loss_graph(g, progress, teacher_progress)?;
    let wp = g.scale(peak, lambda)?;
    let wr = g.scale(progress, config.theta)?;
    let sum = g.add(action, wp)?;
    let total = g.add(sum, wr)?;
    Ok(LossVars {
        total,
        action,
        peak,
        progress,
        lambda,
    })
}

fn sum_scalars(g: &mut Graph, terms: &[Var]) -> Result<Var> {
    let mut acc = terms[0];
    for &t in &terms[1..] {
        acc = g.add(acc, t)?;
    }
    Ok(acc)
}
