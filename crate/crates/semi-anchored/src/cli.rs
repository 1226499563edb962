//! Command-line surface binding the library modules together.
//!
//! [`run`] is the whole program: it parses argv, dispatches, and maps
//! outcomes to exit codes (0 success, 1 runtime failure with a
//! diagnostic on stderr, 2 usage error with the usage text). Keeping it
//! a plain function makes the binary a one-liner and lets integration
//! tests drive the CLI in-process.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use crate::assignment::{
    label_locations, verify_proposition_1, AssignmentResult, LocationLabeler,
};
use crate::error::{Error, Result};
use crate::evaluation::{imbalance_stats, map_report};
use crate::geometry::{AnchorGrid, AnchorSpec};
use crate::gradcheck;
use crate::inference::run_inference;
use crate::io::annotations::{load_annotations, AnnotationSet};
use crate::io::config::{load_config, parse_strategy, RunConfig};
use crate::io::dumps::{
    assignment_text, detections_text, eval_report_text, imbalance_text, read_detections,
    read_head_outputs,
};
use crate::io::write_atomic;
use crate::losses::LossConfig;
use crate::toytrain::{ToyTrainer, TrainConfig};

#[derive(Parser, Debug)]
#[command(
    name = "semi-anchored",
    version,
    about = "Detection target pipeline: labeling, toy training, inference, evaluation",
    subcommand_required = true,
    arg_required_else_help = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Dump location and anchor labels for every image of an annotation set
    Assign(AssignArgs),
    /// Report positive/negative imbalance for an annotation set
    Stats(AssignArgs),
    /// Train the synthetic-scene toy model and score it on held-out scenes
    TrainToy(TrainToyArgs),
    /// Turn a head-output file into a detection file
    Infer(InferArgs),
    /// Score a detection file against annotations
    Eval(EvalArgs),
    /// Run the finite-difference gradient suites
    CheckGrad(CheckGradArgs),
    /// Exhaustively check that moved-score voting equals direct label assignment
    Prop1(Prop1Args),
}

#[derive(Args, Debug)]
struct AssignArgs {
    /// Annotation JSON file
    #[arg(long)]
    annotations: PathBuf,
    /// Run-config file; defaults apply when omitted
    #[arg(long)]
    config: Option<PathBuf>,
    /// Grid stride in pixels
    #[arg(long, default_value_t = 8.0)]
    stride: f64,
    /// Base anchor size in pixels
    #[arg(long, default_value_t = 32.0)]
    base_size: f64,
    /// Output file; prints to stdout when omitted
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct TrainToyArgs {
    /// Master seed for scenes and the sampled-anchor baseline
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Optimizer steps
    #[arg(long, default_value_t = 800)]
    steps: usize,
    /// Learning rate
    #[arg(long, default_value_t = 0.03)]
    lr: f64,
    /// Anchors per location: 1, 9, or 25
    #[arg(long = "K", default_value_t = 9)]
    k: usize,
    /// Location labeler: simplified | gamma | center
    #[arg(long, default_value = "simplified")]
    assigner: String,
    /// Soft-label sharpening exponent in [0,1)
    #[arg(long, default_value_t = 0.9)]
    sigma: f64,
    /// Vote threshold used by the gamma assigner
    #[arg(long, default_value_t = 0.2)]
    gamma: f64,
    /// Box shrink factor used by the center assigner, in (0,1]
    #[arg(long, default_value_t = 1.0)]
    shrink: f64,
    /// Anchor selection at inference: top-<k> | pos-<tau>
    #[arg(long, default_value = "top-1")]
    strategy: String,
    /// Anchor-classification head on/off
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    ac: bool,
    /// Where to save the trained model
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Where to save the per-step loss log
    #[arg(long)]
    log: Option<PathBuf>,
    /// Where to save the final evaluation report
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct InferArgs {
    /// Head-output file (see the head-outputs format in the io docs)
    #[arg(long)]
    heads: PathBuf,
    /// Run-config file supplying the inference settings
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output detection file; prints to stdout when omitted
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EvalArgs {
    /// Detection file
    #[arg(long)]
    detections: PathBuf,
    /// Annotation JSON file
    #[arg(long)]
    annotations: PathBuf,
    /// Where to save the flat-text report next to the printed table
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct CheckGradArgs {
    /// Sample points per analytic suite
    #[arg(long, default_value_t = 200)]
    points: usize,
    #[arg(long, default_value_t = 17)]
    seed: u64,
}

#[derive(Args, Debug)]
struct Prop1Args {
    /// Largest anchor count to sweep (k = 1..=K)
    #[arg(long = "K", default_value_t = 4)]
    k: usize,
    /// Largest class count to sweep (C = 1..=C)
    #[arg(long = "C", default_value_t = 3)]
    c: usize,
    /// Check a single threshold instead of the 1/(k+1) and 1/(2k) sweep
    #[arg(long)]
    gamma: Option<f64>,
}

/// Parses argv and runs the program, returning the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(err) => {
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 2,
            };
            let _ = err.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(err) => {
            eprintln!("error: {err}");
            1
        }
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Assign(args) => cmd_assign(args),
        Command::Stats(args) => cmd_stats(args),
        Command::TrainToy(args) => cmd_train_toy(args),
        Command::Infer(args) => cmd_infer(args),
        Command::Eval(args) => cmd_eval(args),
        Command::CheckGrad(args) => cmd_check_grad(args),
        Command::Prop1(args) => cmd_prop1(args),
    }
}

fn load_config_or_default(path: Option<&Path>) -> Result<RunConfig> {
    match path {
        Some(p) => load_config(p),
        None => Ok(RunConfig::default()),
    }
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => write_atomic(path, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

/// Labels every image of the set under the run config; returns the
/// per-image assignments in image-id order alongside the grid shape.
fn assign_all(
    set: &AnnotationSet,
    cfg: &RunConfig,
    stride: f64,
    base_size: f64,
) -> Result<Vec<(i64, AssignmentResult)>> {
    cfg.validate()?;
    let mut out = Vec::with_capacity(set.images.len());
    for image in &set.images {
        let gt = set.ground_truth(image.id)?;
        let grid = AnchorGrid::for_image(
            cfg.spec.clone(),
            image.width.ceil() as usize,
            image.height.ceil() as usize,
            stride,
            base_size,
        )?;
        let assignment =
            label_locations(&grid, &gt, cfg.labeler, cfg.fg_thresh, cfg.bg_thresh)?;
        out.push((image.id, assignment));
    }
    Ok(out)
}

fn cmd_assign(args: AssignArgs) -> Result<()> {
    let set = load_annotations(&args.annotations)?;
    if set.dropped_degenerate > 0 {
        log::warn!("dropped {} degenerate boxes", set.dropped_degenerate);
    }
    let cfg = load_config_or_default(args.config.as_deref())?;
    let k = cfg.spec.anchors_per_location();
    let mut text = String::new();
    for (image_id, assignment) in assign_all(&set, &cfg, args.stride, args.base_size)? {
        text.push_str(&assignment_text(image_id, &assignment, k));
    }
    emit(args.out.as_deref(), &text)
}

fn cmd_stats(args: AssignArgs) -> Result<()> {
    let set = load_annotations(&args.annotations)?;
    let cfg = load_config_or_default(args.config.as_deref())?;
    let assignments: Vec<AssignmentResult> = assign_all(&set, &cfg, args.stride, args.base_size)?
        .into_iter()
        .map(|(_, a)| a)
        .collect();
    let stats = imbalance_stats(&assignments);
    emit(args.out.as_deref(), &imbalance_text(&stats))
}

fn parse_assigner(name: &str, gamma: f64, shrink: f64) -> Result<LocationLabeler> {
    match name {
        "simplified" => Ok(LocationLabeler::Simplified),
        "gamma" => Ok(LocationLabeler::ThresholdMove { gamma }),
        "center" => Ok(LocationLabeler::Fcos {
            shrink_factor: shrink,
        }),
        other => Err(Error::invalid(
            "assigner",
            format!("expected simplified | gamma | center, got `{other}`"),
        )),
    }
}

fn spec_for_k(k: usize) -> Result<AnchorSpec> {
    let side = match k {
        1 => 1,
        9 => 3,
        25 => 5,
        other => {
            return Err(Error::invalid(
                "K",
                format!("supported anchor counts are 1, 9, 25; got {other}"),
            ))
        }
    };
    AnchorSpec::new(side, side)
}

fn cmd_train_toy(args: TrainToyArgs) -> Result<()> {
    let cfg = TrainConfig {
        seed: args.seed,
        steps: args.steps,
        learning_rate: args.lr,
        spec: spec_for_k(args.k)?,
        labeler: parse_assigner(&args.assigner, args.gamma, args.shrink)?,
        loss: LossConfig {
            sigma: args.sigma,
            ..LossConfig::default()
        },
        ac_head_enabled: args.ac,
        inference: crate::inference::InferenceConfig {
            strategy: parse_strategy(&args.strategy)?,
            ..Default::default()
        },
        ..TrainConfig::default()
    };
    let mut trainer = ToyTrainer::new(cfg)?;
    log::info!(
        "training on {} scenes, evaluating on {}",
        trainer.train_scenes().len(),
        trainer.eval_scenes().len()
    );
    let reports = trainer.run()?;
    let mut log_text = String::new();
    for (step, report) in reports.iter().enumerate() {
        let line = format!("step {:4} {report}", step + 1);
        println!("{line}");
        log_text.push_str(&line);
        log_text.push('\n');
    }
    // Without the anchor head the factorized score is meaningless, so
    // score the sampled-anchor baseline instead (best of 10 draws).
    let eval = if args.ac {
        trainer.evaluate()?
    } else {
        trainer.evaluate_sampled_anchor(10)?
    };
    println!("{eval}");
    if let Some(path) = args.log.as_deref() {
        write_atomic(path, &log_text)?;
    }
    if let Some(path) = args.report.as_deref() {
        write_atomic(path, &eval_report_text(&eval))?;
    }
    if let Some(path) = args.checkpoint.as_deref() {
        trainer.model.save(path)?;
    }
    Ok(())
}

fn cmd_infer(args: InferArgs) -> Result<()> {
    let cfg = load_config_or_default(args.config.as_deref())?;
    cfg.validate()?;
    let images = read_head_outputs(&args.heads)?;
    let mut dets = Vec::new();
    for img in &images {
        let found = run_inference(
            &img.loc_probs,
            &img.anchor_probs,
            &img.refined,
            img.num_classes,
            img.anchors_per_location,
            &cfg.inference,
        )?;
        dets.extend(found.into_iter().map(|d| crate::evaluation::DetRecord {
            image_id: img.image_id,
            bbox: d.bbox,
            class_id: d.class_id,
            score: d.score,
        }));
    }
    emit(args.out.as_deref(), &detections_text(&dets))
}

fn cmd_eval(args: EvalArgs) -> Result<()> {
    let dets = read_detections(&args.detections)?;
    let set = load_annotations(&args.annotations)?;
    let report = map_report(&dets, &set.gt_records())?;
    println!("{report}");
    if let Some(path) = args.out.as_deref() {
        write_atomic(path, &eval_report_text(&report))?;
    }
    Ok(())
}

fn cmd_check_grad(args: CheckGradArgs) -> Result<()> {
    let reports = gradcheck::check_all(args.points, args.seed)?;
    let mut failed = false;
    for report in &reports {
        println!("{report}");
        failed |= !report.passed();
    }
    if failed {
        return Err(Error::Inconsistent(
            "a gradient suite exceeded its tolerance".into(),
        ));
    }
    Ok(())
}

fn cmd_prop1(args: Prop1Args) -> Result<()> {
    if args.k == 0 || args.c == 0 {
        return Err(Error::invalid("K/C", "sweep bounds must be at least 1"));
    }
    for k in 1..=args.k {
        let gammas = match args.gamma {
            Some(g) => vec![g],
            None => vec![1.0 / (k as f64 + 1.0), 1.0 / (2.0 * k as f64)],
        };
        for c in 1..=args.c {
            for &gamma in &gammas {
                let report = verify_proposition_1(k, c, gamma)?;
                println!("{report}");
                if !report.passed() {
                    return Err(Error::Inconsistent(
                        "moved-score voting disagreed with direct assignment".into(),
                    ));
                }
            }
        }
    }
    Ok(())
}
