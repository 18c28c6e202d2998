//! `graspkit` command-line tool.
//!
//! Exit codes: 0 success, 1 other failure, 2 malformed input file (or bad
//! usage), 3 inputs whose dimensions disagree.

mod commands;
mod config;
mod manifest;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::config::Resolver;
use crate::manifest::RunManifest;

#[derive(Debug, Parser)]
#[command(
    name = "graspkit",
    version,
    about = "Heatmap-driven parallel-jaw grasp detection"
)]
struct Cli {
    #[command(flatten)]
    shared: Shared,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
pub struct Shared {
    /// JSON config file; flags override its entries.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Camera intrinsics JSON (fx, fy, cx, cy, width, height, depth_scale).
    #[arg(long, global = true)]
    intrinsics: Option<PathBuf>,
    /// Gripper as h,l,w_max,t_f,b_d in meters.
    #[arg(long, global = true)]
    gripper: Option<String>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker thread cap.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output file (directory for `synth`). Defaults to stdout where that makes sense.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Where to write the run manifest; defaults to `<out>.manifest.json`,
    /// or stderr without `--out`.
    #[arg(long, global = true)]
    manifest: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic tabletop scene with depth, cloud and oracle grasps.
    Synth(commands::SynthArgs),
    /// Build a ground-truth heatmap from grasp annotations.
    GtAvh(commands::GtAvhArgs),
    /// Detect grasps from a depth image and a heatmap.
    Detect(commands::DetectArgs),
    /// Score grasps against a scene cloud.
    Eval(commands::EvalArgs),
    /// Pose-space non-maximum suppression over a grasp file.
    Nms(commands::NmsArgs),
    /// Time the detection pipeline on a synthetic scene.
    Bench(commands::BenchArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Synth(_) => "synth",
            Command::GtAvh(_) => "gt-avh",
            Command::Detect(_) => "detect",
            Command::Eval(_) => "eval",
            Command::Nms(_) => "nms",
            Command::Bench(_) => "bench",
        }
    }
}

/// Shared state handed to every command.
pub struct Ctx {
    pub shared: Shared,
    pub resolver: Resolver,
    pub manifest: RunManifest,
}

impl Ctx {
    pub fn out(&self) -> Option<&Path> {
        self.shared.out.as_deref()
    }

    /// The seed from flag or config, recorded in the manifest.
    pub fn seed(&mut self, default: u64) -> anyhow::Result<u64> {
        let s = self.resolver.get("seed", self.shared.seed, default)?;
        self.manifest.seed = Some(s);
        Ok(s)
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<graspkit::Error>() {
            return match e {
                graspkit::Error::Format { .. } | graspkit::Error::Json(_) => 2,
                graspkit::Error::DimensionMismatch(_) => 3,
                _ => 1,
            };
        }
        if cause.downcast_ref::<serde_json::Error>().is_some() {
            return 2;
        }
    }
    1
}

fn run(ctx: &mut Ctx, command: Command) -> anyhow::Result<()> {
    let threads = ctx.resolver.get_opt("threads", ctx.shared.threads)?;
    if let Some(n) = threads {
        anyhow::ensure!(n > 0, "--threads must be at least 1");
        graspkit::par::configure_threads(n);
    }
    ctx.manifest.threads = threads;
    match command {
        Command::Synth(a) => commands::synth(ctx, a),
        Command::GtAvh(a) => commands::gt_avh(ctx, a),
        Command::Detect(a) => commands::detect(ctx, a),
        Command::Eval(a) => commands::eval(ctx, a),
        Command::Nms(a) => commands::nms(ctx, a),
        Command::Bench(a) => commands::bench(ctx, a),
    }
}

fn manifest_path(ctx: &Ctx, is_dir_output: bool) -> Option<PathBuf> {
    if let Some(p) = &ctx.shared.manifest {
        return Some(p.clone());
    }
    let out = ctx.shared.out.as_ref()?;
    if is_dir_output {
        return Some(out.join("manifest.json"));
    }
    let mut name = out.file_name()?.to_os_string();
    name.push(".manifest.json");
    Some(out.with_file_name(name))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let name = cli.command.name();
    let is_dir_output = matches!(cli.command, Command::Synth(_));
    let mut manifest = RunManifest::new(name);
    manifest.config = cli.shared.config.clone();
    let resolver = Resolver::load(cli.shared.config.as_deref());
    let (code, mut ctx) = match resolver {
        Ok(resolver) => {
            let mut ctx = Ctx {
                shared: cli.shared,
                resolver,
                manifest,
            };
            let result = run(&mut ctx, cli.command);
            let code = match result {
                Ok(()) => 0,
                Err(e) => {
                    eprintln!("error: {e:#}");
                    ctx.manifest.error = Some(format!("{e:#}"));
                    exit_code(&e)
                }
            };
            (code, ctx)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            manifest.error = Some(format!("{e:#}"));
            let code = exit_code(&e);
            (
                code,
                Ctx {
                    shared: cli.shared,
                    resolver: Resolver::default(),
                    manifest,
                },
            )
        }
    };
    ctx.manifest.exit_code = code as i32;
    ctx.manifest.overrides = std::mem::take(&mut ctx.resolver.overrides);
    let json = ctx.manifest.to_json();
    let written =
        manifest_path(&ctx, is_dir_output).is_some_and(|p| std::fs::write(p, &json).is_ok());
    if !written {
        eprintln!("{json}");
    }
    ExitCode::from(code)
}
