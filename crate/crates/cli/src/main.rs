use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Result};
use clap::{Parser, Subcommand, ValueEnum};

use vln_core::corpus::{build_vocab, load_corpus, write_fsasub, Vocab};
use vln_core::harness::{
    export_trace, gradcheck_episode, make_synthetic_episode, model_gradient_check, pal_gradient_suite, run_episode,
    template_vocab, train_smoke, EpisodeShape, RunMode, TrainConfig,
};
use vln_core::losses::{CurveKind, CurveSpec, LossConfig};
use vln_core::model::{Model, ModelConfig};
use vln_core::segment::{bench_throughput, corpus_stats, segment_corpus, write_histogram_csv, RefineRuleSet};

/// Whole-corpus size used for throughput projections.
const CORPUS_SIZE: usize = 13_425;
const PAL_TOLERANCE: f64 = 1e-8;
const MODEL_TOLERANCE: f64 = 1e-4;
const REQUIRED_LOSS_DROP: f64 = 0.8;

#[derive(Parser, Debug)]
#[command(name = "vln", version, about = "Instruction segmentation and attention-model tooling")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Segment a JSON-lines corpus into sub-instructions.
    Segment {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// Vocabulary file, one token per line. Built from the input when absent.
        #[arg(long)]
        vocab: Option<PathBuf>,
        /// Where to write the built vocabulary.
        #[arg(long)]
        vocab_out: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        min_freq: usize,
    },
    /// Print segment ratio and average sub-instruction count.
    Stats {
        #[arg(long)]
        input: PathBuf,
        /// Histogram CSV (`sub_count,frequency`).
        #[arg(long)]
        hist_out: Option<PathBuf>,
    },
    /// Time single-threaded segmentation.
    Bench {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = 10)]
        repeat: usize,
    },
    /// Compare analytic gradients with finite differences.
    Gradcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Number of random peak-loss cases.
        #[arg(long, default_value_t = 100)]
        cases: usize,
    },
    /// Roll out a freshly initialised model on a synthetic episode.
    Run {
        /// Model configuration JSON; full-size defaults when absent.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        trace_out: PathBuf,
        #[arg(long, default_value_t = 3)]
        subs: usize,
        #[arg(long, default_value_t = 12)]
        steps: usize,
        #[arg(long, value_enum, default_value_t = Mode::Policy)]
        mode: Mode,
    },
    /// Overfit synthetic episodes and write the learning curve.
    TrainSmoke {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 300)]
        updates: usize,
        #[arg(long, default_value_t = 1)]
        episodes: usize,
        #[arg(long, default_value = "gaussian", value_parser = parse_curve)]
        curve: CurveKind,
        #[arg(long, default_value_t = 0.6)]
        sigma: f64,
        /// Model configuration JSON; reduced smoke dimensions when absent.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Learning-curve CSV.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Mode {
    Policy,
    TeacherForced,
}

fn parse_curve(s: &str) -> Result<CurveKind, String> {
    s.parse().map_err(|e: vln_core::Error| e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Segment {
            input,
            output,
            vocab,
            vocab_out,
            min_freq,
        } => segment(input, output, vocab, vocab_out, min_freq),
        Command::Stats { input, hist_out } => stats(input, hist_out),
        Command::Bench { input, repeat } => bench(input, repeat),
        Command::Gradcheck { seed, cases } => gradcheck(seed, cases),
        Command::Run {
            config,
            seed,
            trace_out,
            subs,
            steps,
            mode,
        } => run(config, seed, trace_out, subs, steps, mode),
        Command::TrainSmoke {
            seed,
            updates,
            episodes,
            curve,
            sigma,
            config,
            out,
        } => train(seed, updates, episodes, curve, sigma, config, out),
    }
}

fn load(input: &PathBuf) -> Result<Vec<vln_core::corpus::InstructionRecord>> {
    Ok(load_corpus(input)?)
}

fn segment(input: PathBuf, output: PathBuf, vocab: Option<PathBuf>, vocab_out: Option<PathBuf>, min_freq: usize) -> Result<()> {
    let records = load(&input)?;
    let vocab = match vocab {
        Some(p) => Vocab::load(&p)?,
        None => build_vocab(&records, min_freq),
    };
    if let Some(p) = vocab_out {
        vocab.save(&p)?;
    }
    let segmented = segment_corpus(&records, &RefineRuleSet::default(), &vocab)?;
    write_fsasub(&segmented, &output)?;
    println!("segmented {} records into {}", segmented.len(), output.display());
    Ok(())
}

fn stats(input: PathBuf, hist_out: Option<PathBuf>) -> Result<()> {
    let mut records = load(&input)?;
    if records.iter().any(|r| !r.is_segmented()) {
        let vocab = build_vocab(&records, 1);
        records = segment_corpus(&records, &RefineRuleSet::default(), &vocab)?;
    }
    let s = corpus_stats(&records)?;
    println!("records: {}", s.records);
    println!("segment_ratio: {:.4}", s.segment_ratio);
    println!("avg_sub_count: {:.4}", s.avg_sub_count);
    if let Some(p) = hist_out {
        write_histogram_csv(&s, &p)?;
    }
    Ok(())
}

fn bench(input: PathBuf, repeat: usize) -> Result<()> {
    let records = load(&input)?;
    let vocab = build_vocab(&records, 1);
    let t = bench_throughput(&records, repeat, &RefineRuleSet::default(), &vocab)?;
    println!("instructions: {}", t.instructions);
    println!("seconds: {:.4}", t.total_seconds);
    println!("instructions_per_second: {:.1}", t.instructions_per_second);
    println!(
        "projected_seconds_for_{CORPUS_SIZE}: {:.3}",
        t.projected_seconds(CORPUS_SIZE)
    );
    Ok(())
}

fn gradcheck(seed: u64, cases: usize) -> Result<()> {
    if cases == 0 {
        bail!("--cases 0 verifies nothing");
    }
    let pal = pal_gradient_suite(seed, cases)?;
    println!(
        "peak loss: {} cases, {} derivatives, worst relative error {:e} ({})",
        pal.cases, pal.checked, pal.worst, pal.worst_at
    );
    let config = ModelConfig::tiny();
    let episode = gradcheck_episode(seed, 2, 3, 5, &config)?;
    let model = model_gradient_check(seed, &config, &episode, 1e-5)?;
    println!(
        "model: {} derivatives, worst relative error {:e} ({})",
        model.checked, model.worst, model.worst_at
    );
    if pal.worst > PAL_TOLERANCE || model.worst > MODEL_TOLERANCE {
        bail!("gradient mismatch above tolerance");
    }
    Ok(())
}

fn model_config(path: Option<PathBuf>, default: ModelConfig) -> Result<ModelConfig> {
    match path {
        Some(p) => Ok(ModelConfig::load(&p)?),
        None => Ok(default),
    }
}

fn run(config: Option<PathBuf>, seed: u64, trace_out: PathBuf, subs: usize, steps: usize, mode: Mode) -> Result<()> {
    let config = model_config(config, ModelConfig::default())?;
    let shape = EpisodeShape::new(config.feature_dim);
    let episode = make_synthetic_episode(seed, subs, steps, &shape)?;
    let model = Model::new(config, template_vocab().len(), seed)?;
    let mode = match mode {
        Mode::Policy => RunMode::Policy,
        Mode::TeacherForced => RunMode::TeacherForced,
    };
    let out = run_episode(&model, &episode, mode, &CurveSpec::default(), &LossConfig::default())?;
    export_trace(&out.trace, &trace_out)?;
    let m = out.metrics;
    println!("steps: {}", out.trace.len());
    println!("TL: {:.3} NE: {:.3} SR: {} SPL: {:.3}", m.tl, m.ne, m.sr, m.spl);
    println!(
        "loss_action: {:.4} loss_peak: {:.4} loss_progress: {:.4}",
        out.losses.action, out.losses.peak, out.losses.progress
    );
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn train(
    seed: u64,
    updates: usize,
    episodes: usize,
    curve: CurveKind,
    sigma: f64,
    config: Option<PathBuf>,
    out: Option<PathBuf>,
) -> Result<()> {
    let mut cfg = TrainConfig::smoke();
    cfg.model = model_config(config, cfg.model)?;
    cfg.curve = CurveSpec::new(curve, sigma)?;
    let (_, lc) = train_smoke(seed, episodes, updates, &cfg)?;
    if let Some(p) = &out {
        lc.write_csv(p)?;
    }
    println!(
        "action loss {:.4} -> {:.4} ({:.1}% drop), agreement {:.1}% -> {:.1}%",
        lc.initial.action_loss,
        lc.last.action_loss,
        100.0 * lc.action_loss_drop(),
        100.0 * lc.initial.agreement,
        100.0 * lc.last.agreement
    );
    if lc.action_loss_drop() < REQUIRED_LOSS_DROP {
        bail!(
            "action loss dropped {:.1}%, below the required {:.0}%",
            100.0 * lc.action_loss_drop(),
            100.0 * REQUIRED_LOSS_DROP
        );
    }
    Ok(())
}
