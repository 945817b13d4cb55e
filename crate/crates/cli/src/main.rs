//! `planocheck` — planogram compliance checking from the command line.

mod config;
mod overlay;
mod render;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use planocheck_core::pipeline::{run_check, PipelineOutput};
use planocheck_core::planogram::parse_planogram;
use planocheck_core::scene::{load_scene, save_scene, synthesize, SynthSpec};

use config::Config;

const EXIT_OK: u8 = 0;
const EXIT_ERROR: u8 = 1;
const EXIT_NONCOMPLIANT: u8 = 3;

#[derive(Parser)]
#[command(name = "planocheck", version, about = "Planogram compliance checking without product templates")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Check a feature scene against a planogram.
    Check(CheckArgs),
    /// Generate a synthetic feature scene from a planogram.
    Synth(SynthArgs),
    /// Render an existing report as text or an SVG overlay.
    Report(ReportArgs),
}

#[derive(Args)]
struct CheckArgs {
    /// Planogram XML file.
    #[arg(long)]
    planogram: Option<PathBuf>,
    /// Feature scene JSON file.
    #[arg(long)]
    scene: Option<PathBuf>,
    /// Write the report JSON here.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write an SVG overlay of the detections here.
    #[arg(long)]
    overlay: Option<PathBuf>,
    /// Config file (flat key=value lines).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override the detection seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for detection and scoring.
    #[arg(long)]
    jobs: Option<usize>,
    /// Re-detect missed products from extracted exemplars.
    #[arg(long)]
    refine: bool,
    /// Override the per-region instance cap.
    #[arg(long)]
    max_per_region: Option<usize>,
    /// Print the effective configuration and exit.
    #[arg(long)]
    print_config: bool,
}

#[derive(Args)]
struct SynthArgs {
    /// Planogram XML file.
    #[arg(long)]
    planogram: PathBuf,
    /// Synthesis spec JSON file.
    #[arg(long)]
    spec: PathBuf,
    /// Output scene JSON path.
    #[arg(long)]
    out: PathBuf,
    /// Override the spec's seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct ReportArgs {
    /// Report JSON produced by `planocheck check`.
    #[arg(long)]
    report: PathBuf,
    /// Write an SVG overlay of the detections here.
    #[arg(long)]
    overlay: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match cli.cmd {
        Cmd::Check(args) => cmd_check(args),
        Cmd::Synth(args) => cmd_synth(args),
        Cmd::Report(args) => cmd_report(args),
    };
    match code {
        Ok(c) => ExitCode::from(c),
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_ERROR)
        }
    }
}

fn cmd_check(args: CheckArgs) -> Result<u8, String> {
    let mut cfg = Config::default();
    if let Some(path) = &args.config {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        cfg.apply_file(&text)?;
    }
    // flags override file values
    if let Some(seed) = args.seed {
        cfg.pipeline.grasp.seed = seed;
    }
    if let Some(jobs) = args.jobs {
        cfg.pipeline.jobs = jobs;
    }
    if let Some(cap) = args.max_per_region {
        cfg.pipeline.partition.max_per_region = cap;
    }
    if args.refine {
        cfg.pipeline.refine = true;
    }
    if let Some(out) = &args.out {
        cfg.out = Some(out.clone());
    }
    if let Some(overlay) = &args.overlay {
        cfg.overlay = Some(overlay.clone());
    }

    if args.print_config {
        print!("{}", cfg.render());
        return Ok(EXIT_OK);
    }

    let planogram_path = args.planogram.ok_or("missing --planogram")?;
    let scene_path = args.scene.ok_or("missing --scene")?;
    let xml = std::fs::read_to_string(&planogram_path)
        .map_err(|e| format!("{}: {e}", planogram_path.display()))?;
    let planogram = parse_planogram(&xml).map_err(|e| e.to_string())?;
    let scene = load_scene(&scene_path).map_err(|e| format!("{}: {e}", scene_path.display()))?;

    let output = run_check(&planogram, &scene, &cfg.pipeline).map_err(|e| e.to_string())?;

    if let Some(path) = &cfg.out {
        std::fs::write(path, output.to_json().map_err(|e| e.to_string())?)
            .map_err(|e| format!("{}: {e}", path.display()))?;
    }
    if let Some(path) = &cfg.overlay {
        std::fs::write(path, overlay::render(&output))
            .map_err(|e| format!("{}: {e}", path.display()))?;
    }
    print!("{}", render::text_report(&output));

    Ok(if output.compliant() { EXIT_OK } else { EXIT_NONCOMPLIANT })
}

fn cmd_synth(args: SynthArgs) -> Result<u8, String> {
    let xml = std::fs::read_to_string(&args.planogram)
        .map_err(|e| format!("{}: {e}", args.planogram.display()))?;
    let planogram = parse_planogram(&xml).map_err(|e| e.to_string())?;
    let text = std::fs::read_to_string(&args.spec)
        .map_err(|e| format!("{}: {e}", args.spec.display()))?;
    let mut spec: SynthSpec = serde_json::from_str(&text).map_err(|e| e.to_string())?;
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    let (scene, truth) = synthesize(&planogram, &spec).map_err(|e| e.to_string())?;
    save_scene(&scene, &args.out).map_err(|e| e.to_string())?;
    println!(
        "wrote {}: {}x{} px, {} keypoints, {} instances, {} clutter",
        args.out.display(),
        scene.width,
        scene.height,
        scene.keypoints.len(),
        truth.instances.len(),
        truth.clutter.len()
    );
    Ok(EXIT_OK)
}

fn cmd_report(args: ReportArgs) -> Result<u8, String> {
    let text = std::fs::read_to_string(&args.report)
        .map_err(|e| format!("{}: {e}", args.report.display()))?;
    let output: PipelineOutput = serde_json::from_str(&text).map_err(|e| e.to_string())?;
    if let Some(path) = &args.overlay {
        std::fs::write(path, overlay::render(&output))
            .map_err(|e| format!("{}: {e}", path.display()))?;
    }
    print!("{}", render::text_report(&output));
    Ok(if output.compliant() { EXIT_OK } else { EXIT_NONCOMPLIANT })
}
