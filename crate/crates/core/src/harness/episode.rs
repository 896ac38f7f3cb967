//! Seeded synthetic episodes standing in for simulator data.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::corpus::{build_vocab_from_texts, vocab_tokenize, InstructionRecord, Vocab};
use crate::error::{Error, Result};
use crate::harness::kinematics::{rollout, Pose, FORWARD_STEP};
use crate::model::{Action, Observation};
use crate::num::{Rng, Tensor};
use crate::segment::{clean_instruction, segment_instruction, RefineRuleSet};

/// Single-sentence instructions, each describing one leg, with the action
/// that opens the leg.
pub const TEMPLATES: &[(&str, Action)] = &[
    ("Walk forward past the sofa.", Action::Forward),
    ("Turn left at the kitchen counter.", Action::TurnLeft),
    ("Turn right into the hallway.", Action::TurnRight),
    ("Go straight down the long corridor.", Action::Forward),
    ("Continue through the open door.", Action::Forward),
    ("Turn left toward the dining table.", Action::TurnLeft),
    ("Head toward the white bathroom.", Action::Forward),
    ("Turn right at the wooden staircase.", Action::TurnRight),
    ("Walk past the refrigerator.", Action::Forward),
    ("Go into the bedroom on the left.", Action::Forward),
    ("Turn right past the fireplace.", Action::TurnRight),
    ("Walk toward the glass window.", Action::Forward),
    ("Move toward the large painting.", Action::Forward),
    ("Turn left before the laundry room.", Action::TurnLeft),
    ("Exit the room through the front door.", Action::Forward),
    ("Proceed along the narrow hallway.", Action::Forward),
];

/// Vocabulary covering every template word.
pub fn template_vocab() -> &'static Vocab {
    static VOCAB: OnceLock<Vocab> = OnceLock::new();
    VOCAB.get_or_init(|| build_vocab_from_texts(TEMPLATES.iter().map(|(t, _)| *t), 1))
}

/// Shape of the synthetic feature tensors.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpisodeShape {
    pub feature_dim: usize,
    /// Spatial grid cells per modality.
    pub grid_cells: usize,
}

impl EpisodeShape {
    pub fn new(feature_dim: usize) -> Self {
        Self {
            feature_dim,
            grid_cells: 16,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticEpisode {
    pub seed: u64,
    pub record: InstructionRecord,
    /// Token ids of the whole cleaned instruction.
    pub word_tokens: Vec<u32>,
    pub observations: Vec<Observation>,
    pub teacher: Vec<Action>,
    /// Sub-instruction that step `t` belongs to.
    pub sub_index: Vec<usize>,
    pub start: Pose,
    pub goal: Pose,
    /// Straight-line start-goal distance, at least one forward step.
    pub shortest: f64,
}

impl SyntheticEpisode {
    pub fn steps(&self) -> usize {
        self.teacher.len()
    }

    pub fn sub_count(&self) -> usize {
        self.record.sub_instructions.len()
    }

    /// Progress target `(t + 1) / T` for zero-based step `t`.
    pub fn teacher_progress(&self) -> Vec<f64> {
        let t = self.steps() as f64;
        (1..=self.steps()).map(|i| i as f64 / t).collect()
    }

    pub fn teacher_indices(&self) -> Vec<usize> {
        self.teacher.iter().map(|a| a.index()).collect()
    }
}

/// Sub-instruction of step `t` when `steps` steps cover `subs` legs.
pub fn sub_of_step(t: usize, steps: usize, subs: usize) -> usize {
    (t * subs / steps).min(subs - 1)
}

/// Builds a deterministic episode with `subs` sub-instructions and `steps`
/// teacher actions. Observation features at step `t` are noisy copies of a
/// per-sub prototype for sub `sub_of_step(t)`, so attention can learn to
/// follow the instruction over time.
pub fn make_synthetic_episode(seed: u64, subs: usize, steps: usize, shape: &EpisodeShape) -> Result<SyntheticEpisode> {
    if subs == 0 || steps == 0 {
        return Err(Error::invalid("an episode needs at least one sub-instruction and one step"));
    }
    if shape.feature_dim == 0 || shape.grid_cells == 0 {
        return Err(Error::invalid("feature width and grid size must be positive"));
    }
    let mut rng = Rng::new(seed);
    let picks: Vec<usize> = (0..subs).map(|_| rng.below(TEMPLATES.len())).collect();
    let text = picks.iter().map(|&i| TEMPLATES[i].0).collect::<Vec<_>>().join(" ");

    let vocab = template_vocab();
    let seg = segment_instruction(&text, &RefineRuleSet::default(), vocab)?;
    if seg.sub_instructions.len() != subs {
        return Err(Error::Validation(format!(
            "template text {text:?} segmented into {} sub-instructions, expected {subs}",
            seg.sub_instructions.len()
        )));
    }
    let record = InstructionRecord {
        id: format!("synthetic-{seed}"),
        instruction: text.clone(),
        sub_instructions: seg.sub_instructions,
        tokens: seg.tokens,
    };
    record.validate()?;
    let word_tokens = vocab_tokenize(&clean_instruction(&text), vocab);

    let sub_index: Vec<usize> = (0..steps).map(|t| sub_of_step(t, steps, subs)).collect();
    let teacher: Vec<Action> = (0..steps)
        .map(|t| {
            let k = sub_index[t];
            let opens_leg = t == 0 || sub_index[t - 1] != k;
            if t + 1 == steps {
                Action::Stop
            } else if opens_leg {
                TEMPLATES[picks[k]].1
            } else {
                Action::Forward
            }
        })
        .collect();

    let f = shape.feature_dim;
    let g = shape.grid_cells;
    let mut proto = rng.fork(1);
    let prototypes: Vec<(Vec<f64>, Vec<f64>)> = (0..subs)
        .map(|_| {
            let rgb = (0..f).map(|_| proto.uniform(-1.0, 1.0)).collect();
            let depth = (0..f).map(|_| proto.uniform(-1.0, 1.0)).collect();
            (rgb, depth)
        })
        .collect();
    let mut noise = rng.fork(2);
    let mut jitter = |base: &[f64], scale: f64| -> Vec<f64> {
        base.iter().map(|b| b + noise.uniform(-scale, scale)).collect()
    };
    let mut observations = Vec::with_capacity(steps);
    for t in 0..steps {
        let (rgb, depth) = &prototypes[sub_index[t]];
        let rgb_pooled = jitter(rgb, 0.1);
        let mut depth_pooled = jitter(depth, 0.1);
        depth_pooled[0] = if steps == 1 { 1.0 } else { 1.0 - t as f64 / (steps - 1) as f64 };
        let rgb_spatial: Vec<f64> = (0..g).flat_map(|_| jitter(rgb, 0.3)).collect();
        let depth_spatial: Vec<f64> = (0..g).flat_map(|_| jitter(depth, 0.3)).collect();
        observations.push(Observation {
            rgb_pooled: Tensor::vector(rgb_pooled)?,
            depth_pooled: Tensor::vector(depth_pooled)?,
            rgb_spatial: Tensor::matrix(g, f, rgb_spatial)?,
            depth_spatial: Tensor::matrix(g, f, depth_spatial)?,
        });
    }

    let start = Pose::default();
    let goal = *rollout(start, &teacher).last().expect("rollout includes the start");
    let shortest = start.distance(&goal).max(FORWARD_STEP);
    Ok(SyntheticEpisode {
        seed,
        record,
        word_tokens,
        observations,
        teacher,
        sub_index,
        start,
        goal,
        shortest,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_template_is_one_sub() {
        let vocab = template_vocab();
        for (t, _) in TEMPLATES {
            let seg = segment_instruction(t, &RefineRuleSet::default(), vocab).unwrap();
            assert_eq!(seg.sub_instructions.len(), 1, "{t}");
            assert!(seg.tokens[0].iter().all(|&id| id > crate::corpus::END));
        }
    }

    #[test]
    fn deterministic_and_well_formed() {
        let shape = EpisodeShape::new(8);
        let a = make_synthetic_episode(7, 3, 10, &shape).unwrap();
        let b = make_synthetic_episode(7, 3, 10, &shape).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.sub_count(), 3);
        assert_eq!(a.steps(), 10);
        assert_eq!(*a.teacher.last().unwrap(), Action::Stop);
        assert_eq!(a.sub_index, [0, 0, 0, 0, 1, 1, 1, 2, 2, 2]);
        assert_eq!(a.teacher_progress().last(), Some(&1.0));
        let c = make_synthetic_episode(8, 3, 10, &shape).unwrap();
        assert_ne!(a.observations, c.observations);
    }

    #[test]
    fn single_sub_and_single_step() {
        let shape = EpisodeShape::new(4);
        let e = make_synthetic_episode(1, 1, 5, &shape).unwrap();
        assert!(e.sub_index.iter().all(|&k| k == 0));
        let e = make_synthetic_episode(1, 2, 1, &shape).unwrap();
        assert_eq!(e.teacher, [Action::Stop]);
        assert!(make_synthetic_episode(1, 0, 5, &shape).is_err());
        assert!(make_synthetic_episode(1, 1, 0, &shape).is_err());
    }
}
