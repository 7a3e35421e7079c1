use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{error, info};
use mvsuq_core::config::PipelineConfig;
use mvsuq_core::io::read_json;
use mvsuq_core::pipeline::{
    evaluate_stage, fit_uq_stage, fuse_stage, infer_stage, layout, match_stage, report_stage,
    run_pipeline, synth_stage, PipelineError, PipelineInput,
};
use mvsuq_core::synth::SceneSpec;

const EXIT_INPUT: u8 = 2;
const EXIT_STAGE: u8 = 3;

#[derive(Parser, Debug)]
#[command(
    name = "mvsuq",
    version,
    about = "Multi-view stereo with per-point uncertainty"
)]
struct Cli {
    /// Pipeline configuration (JSON); missing fields take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads; defaults to the number of cores.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Log stage progress (repeat for debug output).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Match every view of a manifest against its neighbours.
    Match {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fuse the pair depth maps of a run directory into a point cloud.
    Fuse {
        #[arg(long = "in")]
        dir: PathBuf,
        /// Minimum number of consistent depth maps.
        #[arg(long)]
        k: Option<usize>,
        /// Neighbours used per base image.
        #[arg(long)]
        n: Option<usize>,
    },
    /// Register a cloud to a reference and attach per-point errors.
    Evaluate {
        #[arg(long)]
        cloud: PathBuf,
        #[arg(long)]
        reference: PathBuf,
        /// Refine the alignment with ICP.
        #[arg(long, conflicts_with = "no_icp")]
        icp: bool,
        #[arg(long)]
        no_icp: bool,
        /// Evaluated cloud; defaults to cloud_eval.ply next to the input.
        #[arg(long)]
        out_cloud: Option<PathBuf>,
        /// Summary; defaults to evaluation.json next to the input.
        #[arg(long)]
        out_json: Option<PathBuf>,
    },
    /// Fit the energy-binned Gamma error table of a run directory.
    FitUq {
        #[arg(long = "in")]
        dir: PathBuf,
        #[arg(long)]
        bin_size: Option<f64>,
        #[arg(long)]
        min_rays: Option<u8>,
        #[arg(long)]
        min_samples: Option<usize>,
    },
    /// Annotate a cloud with predicted errors from a fitted table.
    Infer {
        #[arg(long)]
        cloud: PathBuf,
        #[arg(long)]
        table: PathBuf,
        /// Defaults to <cloud stem>_uq.ply.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a synthetic scene with images, manifest and reference cloud.
    Synth {
        #[command(flatten)]
        scene: SceneArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write the CSV reports of a run directory.
    Report {
        #[arg(long = "in")]
        dir: PathBuf,
        #[arg(long)]
        reference: Option<PathBuf>,
    },
    /// Run every stage; a synthetic scene is generated when no manifest is given.
    Run {
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[command(flatten)]
        scene: SceneArgs,
        #[arg(long)]
        reference: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args, Debug)]
struct SceneArgs {
    /// Defaults to the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum, default_value_t = Preset::Hills)]
    spec: Preset,
    /// Nadir and oblique view counts.
    #[arg(long, value_parser = parse_views, default_value = "5,6")]
    views: (usize, usize),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Preset {
    Plane,
    Hills,
}

impl SceneArgs {
    fn input(&self, cfg: &PipelineConfig) -> PipelineInput {
        let (n, o) = self.views;
        let spec = match self.spec {
            Preset::Plane => SceneSpec::plane(n, o),
            Preset::Hills => SceneSpec::hills(n, o),
        };
        PipelineInput::Synthetic {
            seed: self.seed.unwrap_or(cfg.seed),
            spec,
        }
    }
}

fn parse_views(s: &str) -> Result<(usize, usize), String> {
    let (n, o) = s
        .split_once(',')
        .ok_or_else(|| format!("expected N,O but got '{s}'"))?;
    let parse = |v: &str| {
        v.trim()
            .parse::<usize>()
            .map_err(|e| format!("bad view count '{v}': {e}"))
    };
    Ok((parse(n)?, parse(o)?))
}

fn exit_code(e: &PipelineError) -> u8 {
    match e {
        PipelineError::Input(_) | PipelineError::Config(_) => EXIT_INPUT,
        PipelineError::Stage { .. } => EXIT_STAGE,
    }
}

fn sibling(path: &Path, name: &str) -> PathBuf {
    path.parent().unwrap_or(Path::new(".")).join(name)
}

fn execute(command: Command, mut cfg: PipelineConfig) -> Result<(), PipelineError> {
    match command {
        Command::Match { manifest, out } => {
            let scene = match_stage(&manifest, &out, &cfg)?;
            info!(
                "{} pair maps, {} rejected pairs",
                scene.matches.len(),
                scene.rejections.len()
            );
        }
        Command::Fuse { dir, k, n } => {
            if let Some(k) = k {
                cfg.fusion.k_consistency = k;
            }
            if let Some(n) = n {
                cfg.fusion.n_neighbors = n;
            }
            let cloud = fuse_stage(&dir, &cfg)?;
            println!(
                "{} points -> {}",
                cloud.len(),
                dir.join(layout::CLOUD).display()
            );
        }
        Command::Evaluate {
            cloud,
            reference,
            icp,
            no_icp,
            out_cloud,
            out_json,
        } => {
            if icp {
                cfg.eval.icp = true;
            }
            if no_icp {
                cfg.eval.icp = false;
            }
            let out_cloud = out_cloud.unwrap_or_else(|| sibling(&cloud, layout::CLOUD_EVAL));
            let out_json = out_json.unwrap_or_else(|| sibling(&cloud, layout::EVALUATION));
            let summary = evaluate_stage(&cloud, &reference, &out_cloud, &out_json, &cfg)?;
            println!(
                "evaluated {} points, MAE {} m, std {} m",
                summary.evaluated,
                summary.mae_m.map_or("n/a".into(), |v| format!("{v:.4}")),
                summary.std_m.map_or("n/a".into(), |v| format!("{v:.4}")),
            );
        }
        Command::FitUq {
            dir,
            bin_size,
            min_rays,
            min_samples,
        } => {
            if let Some(b) = bin_size {
                cfg.uq.bin_size = b;
            }
            if let Some(r) = min_rays {
                cfg.uq.min_rays = r;
            }
            if let Some(m) = min_samples {
                cfg.uq.min_samples = m;
            }
            let table = fit_uq_stage(&dir, &cfg)?;
            println!(
                "{} energy bins -> {}",
                table.bins.len(),
                dir.join(layout::UQ_TABLE).display()
            );
        }
        Command::Infer { cloud, table, out } => {
            let out = out.unwrap_or_else(|| {
                let stem = cloud
                    .file_stem()
                    .and_then(|s| s.to_str())
                    .unwrap_or("cloud");
                sibling(&cloud, &format!("{stem}_uq.ply"))
            });
            let flagged = infer_stage(&cloud, &table, &out)?;
            println!(
                "{} -> {} ({flagged} points outside the table)",
                cloud.display(),
                out.display()
            );
        }
        Command::Synth { scene, out } => {
            let PipelineInput::Synthetic { seed, spec } = scene.input(&cfg) else {
                unreachable!("scene arguments always describe a synthetic input")
            };
            let manifest = synth_stage(seed, &spec, &out, &cfg)?;
            println!("{}", manifest.display());
        }
        Command::Report { dir, reference } => {
            for path in report_stage(&dir, reference.as_deref(), &cfg)? {
                println!("{}", path.display());
            }
        }
        Command::Run {
            manifest,
            scene,
            reference,
            out,
        } => {
            let input = match manifest {
                Some(m) => PipelineInput::Manifest(m),
                None => scene.input(&cfg),
            };
            let artifacts = run_pipeline(&cfg, &input, reference.as_deref(), &out)?;
            println!(
                "{} points, {} energy bins",
                artifacts.points, artifacts.uq_bins
            );
            if let Some(e) = &artifacts.evaluation {
                println!(
                    "MAE {} m over {} points",
                    e.mae_m.map_or("n/a".into(), |v| format!("{v:.4}")),
                    e.evaluated
                );
            }
            for path in &artifacts.reports {
                println!("{}", path.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
        {
            error!("cannot configure {n} worker threads: {e}");
            return ExitCode::from(EXIT_INPUT);
        }
    }
    let cfg = match &cli.config {
        Some(path) => match read_json::<PipelineConfig>(path) {
            Ok(c) => c,
            Err(e) => {
                error!("{e}");
                return ExitCode::from(EXIT_INPUT);
            }
        },
        None => PipelineConfig::default(),
    };
    match execute(cli.command, cfg) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            error!("{e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
