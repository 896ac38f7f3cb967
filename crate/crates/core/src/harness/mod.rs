//! Synthetic episodes, kinematics, metrics, rollout and smoke training.

mod check;
mod episode;
mod kinematics;
mod run;
mod train;

pub use check::{
    gradcheck_episode, model_gradient_check, pal_gradient_suite, random_pal_case, GradReport, SIGMA_SWEEP,
};
pub use episode::{make_synthetic_episode, sub_of_step, template_vocab, EpisodeShape, SyntheticEpisode, TEMPLATES};
pub use kinematics::{
    apply_action, metrics, normalize_heading, rollout, Metrics, Pose, FORWARD_STEP, SUCCESS_DISTANCE, TURN_DEGREES,
};
pub use run::{
    export_trace, read_trace, run_episode, run_episodes, teacher_forced_loss, teacher_forced_pass, AttentionTrace,
    EpisodeRun, RunMode, TeacherForcedPass, TraceRow, MAX_POLICY_STEPS,
};
pub use train::{evaluate, train_smoke, Adam, CurveRow, EvalSummary, LearningCurve, TrainConfig};
