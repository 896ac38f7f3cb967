//! Episode rollout, attention traces and trace export.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::episode::SyntheticEpisode;
use crate::harness::kinematics::{metrics, Metrics, Pose};
use crate::losses::{
    action_loss, pal_loss, progress_loss, total_loss_graph, CurveSpec, LossConfig, LossParts, LossVars,
};
use crate::model::{Action, Dropout, EpisodeState, InstructionTensors, Model};
use crate::num::{Graph, Tensor, Var};

/// Step limit for policy rollouts.
pub const MAX_POLICY_STEPS: usize = 500;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunMode {
    /// Feeds the teacher action back and runs exactly `T` steps.
    TeacherForced,
    /// Feeds the predicted action back until it predicts stop or hits the step cap.
    Policy,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub step: usize,
    /// Action executed this step.
    pub action: Action,
    /// Argmax of the model's distribution this step.
    pub predicted: Action,
    /// Pose after the action.
    pub pose: Pose,
    pub alpha: Vec<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AttentionTrace {
    pub rows: Vec<TraceRow>,
}

impl AttentionTrace {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Checks every score row sums to 1 within `tol`.
    pub fn validate(&self, tol: f64) -> Result<()> {
        for r in &self.rows {
            let s: f64 = r.alpha.iter().sum();
            if r.alpha.is_empty() || (s - 1.0).abs() > tol || r.alpha.iter().any(|a| *a < 0.0) {
                return Err(Error::Validation(format!("step {}: scores sum to {s}", r.step)));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeRun {
    pub trace: AttentionTrace,
    /// Poses from the start, one more than the number of steps.
    pub trajectory: Vec<Pose>,
    pub dists: Vec<Vec<f64>>,
    pub progress: Vec<f64>,
    /// Loss parts over the steps shared with the teacher sequence.
    pub losses: LossParts,
    pub metrics: Metrics,
}

impl EpisodeRun {
    pub fn predicted(&self) -> Vec<Action> {
        self.trace.rows.iter().map(|r| r.predicted).collect()
    }

    /// Fraction of steps whose predicted action equals the teacher's.
    pub fn agreement(&self, teacher: &[Action]) -> f64 {
        let n = self.trace.len().min(teacher.len());
        if n == 0 {
            return 0.0;
        }
        let hits = self.trace.rows[..n]
            .iter()
            .zip(teacher)
            .filter(|(r, a)| r.predicted == **a)
            .count();
        hits as f64 / teacher.len().max(self.trace.len()) as f64
    }
}

/// Per-step graph outputs of a teacher-forced pass.
pub struct TeacherForcedPass {
    pub dists: Vec<Var>,
    pub alphas: Vec<Var>,
    pub progress: Vec<Var>,
    pub predicted: Vec<Action>,
}

/// Records a full teacher-forced pass of `episode` on `g`.
pub fn teacher_forced_pass(
    model: &Model,
    g: &mut Graph,
    episode: &SyntheticEpisode,
    dropout: &mut Dropout,
) -> Result<TeacherForcedPass> {
    let feats = model.encode_instruction(g, &episode.word_tokens, &episode.record.tokens, dropout)?;
    let mut state = model.initial_state(g)?;
    let steps = episode.steps();
    let mut pass = TeacherForcedPass {
        dists: Vec::with_capacity(steps),
        alphas: Vec::with_capacity(steps),
        progress: Vec::with_capacity(steps),
        predicted: Vec::with_capacity(steps),
    };
    for (obs, teacher) in episode.observations.iter().zip(&episode.teacher) {
        let out = model.step(g, &state, obs, &feats, dropout)?;
        pass.dists.push(out.decoded.dist);
        pass.alphas.push(out.mla.alpha);
        pass.progress.push(out.decoded.progress);
        pass.predicted.push(out.decoded.action);
        state = out.state;
        state.prev_action = teacher.index();
    }
    Ok(pass)
}

/// Teacher-forced pass plus the scheduled total loss, ready for `backward`.
#[allow(clippy::too_many_arguments)]
pub fn teacher_forced_loss(
    model: &Model,
    g: &mut Graph,
    episode: &SyntheticEpisode,
    dropout: &mut Dropout,
    curve: &CurveSpec,
    loss: &LossConfig,
    update: usize,
    total_updates: usize,
) -> Result<(TeacherForcedPass, LossVars)> {
    let pass = teacher_forced_pass(model, g, episode, dropout)?;
    let vars = total_loss_graph(
        g,
        &pass.dists,
        &pass.alphas,
        &pass.progress,
        &episode.teacher_indices(),
        &episode.teacher_progress(),
        curve,
        loss,
        update,
        total_updates,
    )?;
    Ok((pass, vars))
}

fn values(g: &Graph, vars: &[Var]) -> Vec<Vec<f64>> {
    vars.iter().map(|v| g.value(*v).values().to_vec()).collect()
}

/// Runs one episode with dropout off.
pub fn run_episode(model: &Model, episode: &SyntheticEpisode, mode: RunMode, curve: &CurveSpec, loss: &LossConfig) -> Result<EpisodeRun> {
    let mut dropout = Dropout::Off;
    let (executed, predicted, alphas, dists, progress) = match mode {
        RunMode::TeacherForced => {
            let mut g = model.graph();
            let pass = teacher_forced_pass(model, &mut g, episode, &mut dropout)?;
            let progress = pass.progress.iter().map(|p| g.value(*p).values()[0]).collect();
            (
                episode.teacher.clone(),
                pass.predicted,
                values(&g, &pass.alphas),
                values(&g, &pass.dists),
                progress,
            )
        }
        RunMode::Policy => policy_rollout(model, episode)?,
    };

    let trajectory = crate::harness::kinematics::rollout(episode.start, &executed);
    let rows: Vec<TraceRow> = executed
        .iter()
        .zip(&predicted)
        .zip(alphas)
        .enumerate()
        .map(|(t, ((&action, &pred), alpha))| TraceRow {
            step: t,
            action,
            predicted: pred,
            pose: trajectory[t + 1],
            alpha,
        })
        .collect();

    let n = dists.len().min(episode.steps());
    let teacher = &episode.teacher_indices()[..n];
    let flat: Vec<f64> = dists[..n].iter().flatten().copied().collect();
    let dist_t = Tensor::new(&[n, model.config().action_count], flat)?;
    let alpha_rows: Vec<Vec<f64>> = rows_alpha(&rows, n);
    let losses = LossParts {
        action: action_loss(&dist_t, teacher, loss.inflection_weight)?,
        peak: pal_loss(&Tensor::from_rows(&alpha_rows)?, curve)?,
        progress: progress_loss(&progress[..n], &episode.teacher_progress()[..n])?,
    };
    let metrics = metrics(&trajectory, &episode.goal, episode.shortest)?;
    Ok(EpisodeRun {
        trace: AttentionTrace { rows },
        trajectory,
        dists,
        progress,
        losses,
        metrics,
    })
}

fn rows_alpha(rows: &[TraceRow], n: usize) -> Vec<Vec<f64>> {
    rows[..n].iter().map(|r| r.alpha.clone()).collect()
}

type Rollout = (Vec<Action>, Vec<Action>, Vec<Vec<f64>>, Vec<Vec<f64>>, Vec<f64>);

/// Policy rollout with one graph per step. Instruction features are
/// computed once and re-bound as constants.
fn policy_rollout(model: &Model, episode: &SyntheticEpisode) -> Result<Rollout> {
    let mut dropout = Dropout::Off;
    let feats = {
        let mut g = model.graph();
        let f = model.encode_instruction(&mut g, &episode.word_tokens, &episode.record.tokens, &mut dropout)?;
        InstructionTensors::capture(&g, &f)
    };
    let mut state: EpisodeState = model.initial_episode_state(episode.start);
    let (mut executed, mut alphas, mut dists, mut progress) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    let last_obs = episode.observations.len() - 1;
    while state.step < MAX_POLICY_STEPS {
        let mut g = model.graph();
        let f = feats.bind(&mut g)?;
        let s = state.bind(&mut g, model.config().action_count)?;
        // past the scripted sequence the final observation repeats
        let obs = &episode.observations[state.step.min(last_obs)];
        let out = model.step(&mut g, &s, obs, &f, &mut dropout)?;
        let action = out.decoded.action;
        executed.push(action);
        alphas.push(g.value(out.mla.alpha).values().to_vec());
        dists.push(g.value(out.decoded.dist).values().to_vec());
        progress.push(g.value(out.decoded.progress).values()[0]);
        state = EpisodeState {
            h_high: g.value(out.state.h_high).clone(),
            h_low: g.value(out.state.h_low).clone(),
            h_action: g.value(out.state.h_action).clone(),
            prev_action: Some(action),
            step: state.step + 1,
            pose: state.pose.apply(action),
        };
        if action == Action::Stop {
            break;
        }
    }
    let predicted = executed.clone();
    Ok((executed, predicted, alphas, dists, progress))
}

/// Runs episodes in parallel; the result equals the sequential run.
pub fn run_episodes(
    model: &Model,
    episodes: &[SyntheticEpisode],
    mode: RunMode,
    curve: &CurveSpec,
    loss: &LossConfig,
) -> Result<Vec<EpisodeRun>> {
    episodes
        .par_iter()
        .map(|e| run_episode(model, e, mode, curve, loss))
        .collect()
}

/// Writes `step,action,x,y,heading,alpha_0..alpha_{N-1}`, one row per step.
pub fn export_trace(trace: &AttentionTrace, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let n = trace.rows.first().map_or(0, |r| r.alpha.len());
    if trace.rows.iter().any(|r| r.alpha.len() != n) {
        return Err(Error::Validation("trace rows have different score lengths".into()));
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let mut header = String::from("step,action,x,y,heading");
    for k in 0..n {
        header.push_str(&format!(",alpha_{k}"));
    }
    let io = |e| Error::io(path, e);
    writeln!(w, "{header}").map_err(io)?;
    for r in &trace.rows {
        let mut line = format!("{},{},{},{},{}", r.step, r.action.index(), r.pose.x, r.pose.y, r.pose.heading);
        for a in &r.alpha {
            line.push_str(&format!(",{a}"));
        }
        writeln!(w, "{line}").map_err(io)?;
    }
    w.flush().map_err(io)
}

/// Reads a trace CSV back. Predicted actions are not stored and are set to
/// the executed action.
pub fn read_trace(path: impl AsRef<Path>) -> Result<AttentionTrace> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| Error::Validation("empty trace file".into()))?;
    let cols = header.split(',').count();
    if cols < 5 {
        return Err(Error::Validation(format!("trace header has {cols} columns")));
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != cols {
            return Err(Error::Validation(format!("trace row {} has {} columns, expected {cols}", i + 1, f.len())));
        }
        let num = |s: &str| -> Result<f64> {
            s.parse::<f64>()
                .map_err(|e| Error::Validation(format!("trace row {}: {s:?}: {e}", i + 1)))
        };
        let step = f[0]
            .parse::<usize>()
            .map_err(|e| Error::Validation(format!("trace row {}: {e}", i + 1)))?;
        let action = Action::from_index(num(f[1])? as usize)?;
        rows.push(TraceRow {
            step,
            action,
            predicted: action,
            pose: Pose {
                x: num(f[2])?,
                y: num(f[3])?,
                heading: num(f[4])?,
            },
            alpha: f[5..].iter().map(|s| num(s)).collect::<Result<_>>()?,
        });
    }
    Ok(AttentionTrace { rows })
}
