//! Command-line front end.
//!
//! Exit codes: 0 success, 1 flagged frames or a failed energy threshold,
//! 2 usage, input or parse errors.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::align::{opw_align, OpwParams};
use crate::assignment::{assignment_score, soft_to_hard};
use crate::collision::{CollisionModel, DEFAULT_LAMBDA_CAPSULE};
use crate::error::{Error, Result};
use crate::io::{
    motion_files, read_motion, read_plan, read_topology, write_assignment, write_clip, write_plan,
    write_text, LoadedClip, Manifest, RunConfig,
};
use crate::kinematics::DEFAULT_RHO;
use crate::optimizer::{optimize_pose, GradientMode, OptimizerConfig};
use crate::pipeline::generate;
use crate::pose::{MetricConfig, MotionClip};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FLAGGED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "geomotion",
    version,
    about = "Generate intermediate motion clips"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Print the OPW distance between two clips.
    Distance {
        reference: PathBuf,
        target: PathBuf,
        #[command(flatten)]
        opw: OpwArgs,
    },
    /// Write the OPW transport plan between two clips.
    Align {
        reference: PathBuf,
        target: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        opw: OpwArgs,
    },
    /// Project a transport plan onto a hard frame assignment.
    Project {
        plan: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the generation pipeline described by a run configuration.
    Generate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Report per-frame collision energy of a clip.
    Check {
        clip: PathBuf,
        #[command(flatten)]
        collision: CollisionArgs,
        /// Frames at or above this energy fail the check.
        #[arg(long, default_value_t = 1e-6)]
        threshold: f64,
    },
    /// Make every frame of a clip collision-free.
    Optimize {
        clip: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        collision: CollisionArgs,
        #[arg(long, default_value_t = 0.05)]
        learning_rate: f64,
        #[arg(long, default_value_t = 120)]
        max_steps: usize,
        #[arg(long, default_value_t = 1e-6)]
        energy_stop: f64,
        #[arg(long, value_enum, default_value_t = GradientArg::FiniteDifference)]
        gradient: GradientArg,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum GradientArg {
    Analytic,
    FiniteDifference,
}

#[derive(Debug, Args)]
struct OpwArgs {
    #[arg(long, default_value_t = 50.0)]
    lambda1: f64,
    #[arg(long, default_value_t = 0.1)]
    lambda2: f64,
    #[arg(long, default_value_t = 1.0)]
    delta: f64,
    #[arg(long, default_value_t = 20)]
    max_iters: usize,
    #[arg(long, default_value_t = 0.0)]
    tolerance: f64,
    #[arg(long)]
    log_domain: bool,
    /// Weight of rotation distance against root distance.
    #[arg(long, default_value_t = 1.0)]
    w: f64,
}

impl OpwArgs {
    fn params(&self) -> (OpwParams, MetricConfig) {
        (
            OpwParams {
                lambda1: self.lambda1,
                lambda2: self.lambda2,
                delta: self.delta,
                max_iters: self.max_iters,
                tolerance: self.tolerance,
                log_domain: self.log_domain,
                uniform_prior: false,
            },
            MetricConfig { w: self.w },
        )
    }
}

#[derive(Debug, Args)]
struct CollisionArgs {
    #[arg(long, default_value_t = DEFAULT_RHO)]
    rho: f64,
    #[arg(long, default_value_t = DEFAULT_LAMBDA_CAPSULE)]
    lambda_capsule: f64,
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::NumericOverflow(_) | Error::Divergence { .. } => EXIT_FLAGGED,
                _ => EXIT_USAGE,
            }
        }
    }
}

fn load_pair(reference: &Path, target: &Path) -> Result<(LoadedClip, LoadedClip)> {
    let r = read_motion(reference)?;
    let t = read_motion(target)?;
    if r.clip.topology_ref != t.clip.topology_ref {
        return Err(Error::TopologyMismatch {
            clip: r.clip.name.clone(),
        });
    }
    Ok((r, t))
}

fn execute(command: Command) -> Result<i32> {
    match command {
        Command::Distance {
            reference,
            target,
            opw,
        } => {
            let (r, t) = load_pair(&reference, &target)?;
            let (p, m) = opw.params();
            let a = opw_align(&r.clip.root_aligned(), &t.clip.root_aligned(), &p, &m)?;
            println!("distance: {}", a.distance);
            println!("marginal_error: {}", a.marginal_error);
            Ok(EXIT_OK)
        }
        Command::Align {
            reference,
            target,
            out,
            opw,
        } => {
            let (r, t) = load_pair(&reference, &target)?;
            let (p, m) = opw.params();
            let a = opw_align(&r.clip.root_aligned(), &t.clip.root_aligned(), &p, &m)?;
            write_plan(&out, &a.plan, Some(&a))?;
            println!("distance: {}", a.distance);
            println!("marginal_error: {}", a.marginal_error);
            println!("wrote {}", out.display());
            Ok(EXIT_OK)
        }
        Command::Project { plan, out } => {
            let plan = read_plan(&plan)?;
            let a = soft_to_hard(&plan)?;
            write_assignment(&out, &a)?;
            println!("pairs: {}", a.pairs.len());
            println!("score: {}", assignment_score(&plan, &a)?);
            println!("wrote {}", out.display());
            Ok(EXIT_OK)
        }
        Command::Generate { config } => run_generate(&config),
        Command::Check {
            clip,
            collision,
            threshold,
        } => {
            let loaded = read_motion(&clip)?;
            let model =
                CollisionModel::new(loaded.topology, collision.rho, collision.lambda_capsule)?;
            let mut failed = 0;
            for (i, frame) in loaded.clip.frames.iter().enumerate() {
                let e = model.energy(frame)?;
                let ok = e.total < threshold;
                failed += usize::from(!ok);
                println!(
                    "frame {i}: sphere {} capsule {} total {} {}",
                    e.sphere_energy,
                    e.capsule_energy,
                    e.total,
                    if ok { "ok" } else { "FAIL" }
                );
            }
            println!(
                "{failed} of {} frames at or above {threshold:e}",
                loaded.clip.len()
            );
            Ok(if failed == 0 { EXIT_OK } else { EXIT_FLAGGED })
        }
        Command::Optimize {
            clip,
            out,
            collision,
            learning_rate,
            max_steps,
            energy_stop,
            gradient,
        } => {
            let loaded = read_motion(&clip)?;
            let cfg = OptimizerConfig {
                learning_rate,
                max_steps,
                energy_stop,
                gradient_mode: match gradient {
                    GradientArg::Analytic => GradientMode::Analytic,
                    GradientArg::FiniteDifference => GradientMode::FiniteDifference,
                },
                ..OptimizerConfig::default()
            };
            let model = CollisionModel::new(
                loaded.topology.clone(),
                collision.rho,
                collision.lambda_capsule,
            )?;
            let mut frames = Vec::with_capacity(loaded.clip.len());
            let mut flagged = 0;
            for (i, frame) in loaded.clip.frames.iter().enumerate() {
                let (pose, trace) = optimize_pose(frame, &model, &cfg)?;
                let ok = trace.final_energy < energy_stop;
                flagged += usize::from(!ok);
                println!(
                    "frame {i}: initial {} final {} steps {}{}",
                    trace.initial_energy,
                    trace.final_energy,
                    trace.steps_taken,
                    if ok { "" } else { " FLAGGED" }
                );
                frames.push(pose);
            }
            let result = MotionClip::new(
                loaded.clip.name.clone(),
                loaded.clip.fps,
                frames,
                loaded.clip.topology_ref.clone(),
            )?;
            write_clip(&out, &result, &loaded.topology)?;
            println!("wrote {}", out.display());
            Ok(if flagged == 0 { EXIT_OK } else { EXIT_FLAGGED })
        }
    }
}

fn run_generate(config: &Path) -> Result<i32> {
    let run = RunConfig::load(config)?;
    let target = read_motion(&run.target)?;
    let topology = match &run.topology {
        Some(path) => read_topology(path)?,
        None => target.topology.clone(),
    };
    if topology.fingerprint() != target.clip.topology_ref {
        return Err(Error::TopologyMismatch {
            clip: target.clip.name.clone(),
        });
    }
    let mut refs = Vec::new();
    for path in motion_files(&run.reference_dir)? {
        if path == run.target {
            continue;
        }
        refs.push(read_motion(&path)?.clip);
    }
    log::info!(
        "{} reference clips from {}",
        refs.len(),
        run.reference_dir.display()
    );

    let set = generate(&refs, &target.clip, &topology, &run.generation)?;
    for clip in &set.clips {
        write_clip(
            &run.output_dir.join(format!("{}.json", clip.name)),
            clip,
            &topology,
        )?;
    }
    let manifest = Manifest::new(&target.clip.name, &run.generation, &set);
    let manifest_path = run.output_dir.join("manifest.json");
    write_text(&manifest_path, &serde_json::to_string_pretty(&manifest)?)?;

    let flagged = set.flagged_frame_count();
    println!(
        "wrote {} clips and manifest.json to {}",
        set.clips.len(),
        run.output_dir.display()
    );
    if flagged > 0 {
        println!("{flagged} frame(s) flagged");
        return Ok(EXIT_FLAGGED);
    }
    Ok(EXIT_OK)
}
