use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use nalgebra::Vector3;
use rayon::prelude::*;
use serde::Serialize;

use hcce::codec::HierarchicalCodec;
use hcce::correspondence::build_correspondences;
use hcce::experiments::io::{load_cmap, save_cmap, save_cset};
use hcce::experiments::{
    codec_inspect, corrupt_map, derive_seed, generate_scene, loss_demo, run_ablation, ExperimentConfig, LossSchedule,
    SeedPurpose,
};
use hcce::geometry::Pose;
use hcce::metrics::{coordinate_accuracy, CoordinateAccuracy, DEFAULT_ACCURACY_FRACTIONS};
use hcce::CoordinateMap;

#[derive(Parser)]
#[command(name = "hcce", version, about = "Hierarchical coordinate codecs and pose-estimation experiments")]
struct Cli {
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory for files written by the command.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Worker threads (defaults to the number of CPUs).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Show every codec stage for a value in [0, 1].
    CodecInspect {
        x: f64,
        #[arg(long, default_value_t = 8)]
        levels: usize,
        /// Decode to bin centres.
        #[arg(long)]
        midpoint: bool,
    },
    /// Render the configured scenes and write clean and corrupted maps.
    Render {
        config: PathBuf,
        /// Also write each mode's correspondence set.
        #[arg(long)]
        cset: bool,
    },
    /// Run the correspondence-mode ablation.
    Ablate { config: PathBuf },
    /// Print level weights for an error-rate schedule (`builtin`,
    /// `builtin:<epochs>` or a JSON file).
    LossDemo {
        schedule: String,
        #[arg(long)]
        sigma: Option<f64>,
    },
    /// Coordinate accuracy of a predicted map against ground truth.
    Eval {
        pred: PathBuf,
        gt: PathBuf,
        /// Object diameter in meters.
        #[arg(long, conflicts_with = "mesh")]
        diameter: Option<f64>,
        /// Mesh whose diameter to use.
        #[arg(long)]
        mesh: Option<String>,
    },
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if n == 0 {
            bail!("--threads must be at least 1");
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().context("configuring the thread pool")?;
    }
    match &cli.command {
        Command::CodecInspect { x, levels, midpoint } => {
            let codec = HierarchicalCodec::new(*levels)?.with_midpoint(*midpoint);
            println!("{}", codec_inspect(*x, &codec)?);
        }
        Command::Render { config, cset } => render(&cli, config, *cset)?,
        Command::Ablate { config } => ablate(&cli, config)?,
        Command::LossDemo { schedule, sigma } => {
            let mut schedule = LossSchedule::load(schedule)?;
            if sigma.is_some() {
                schedule.sigma = *sigma;
            }
            let (table, csv) = loss_demo(&schedule, &Default::default())?;
            print!("{table}");
            if let Some(dir) = &cli.out_dir {
                let path = write_file(dir, "loss_demo.csv", csv.as_bytes())?;
                eprintln!("wrote {}", path.display());
            }
        }
        Command::Eval { pred, gt, diameter, mesh } => eval(pred, gt, *diameter, mesh.as_deref())?,
    }
    Ok(())
}

fn load_config(cli: &Cli, path: &Path) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn out_dir(cli: &Cli) -> PathBuf {
    cli.out_dir.clone().unwrap_or_else(|| PathBuf::from("out"))
}

fn write_file(dir: &Path, name: &str, bytes: &[u8]) -> Result<PathBuf> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join(name);
    fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}

#[derive(Serialize)]
struct RenderedScene {
    scene: usize,
    pose: Option<Pose>,
    masked_pixels: usize,
    noise_accuracy: Option<CoordinateAccuracy>,
    error: Option<String>,
}

fn render(cli: &Cli, config: &Path, cset: bool) -> Result<()> {
    let cfg = load_config(cli, config)?;
    let mesh = cfg.load_mesh()?;
    let dir = out_dir(cli);
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let scenes: Vec<Result<RenderedScene>> = (0..cfg.scenes)
        .into_par_iter()
        .map(|i| -> Result<RenderedScene> {
            let scene = match generate_scene(&cfg, &mesh, i) {
                Ok(s) => s,
                Err(e) => {
                    return Ok(RenderedScene { scene: i, pose: None, masked_pixels: 0, noise_accuracy: None, error: Some(e.to_string()) })
                }
            };
            let noisy = corrupt_map(&scene.map, &cfg.noise, mesh.diameter(), derive_seed(cfg.seed, i, SeedPurpose::Noise));
            save_cmap(dir.join(format!("scene_{i:04}_gt.cmap")), &scene.map)?;
            save_cmap(dir.join(format!("scene_{i:04}_pred.cmap")), &noisy)?;
            if cset {
                for mode in &cfg.modes {
                    let set = build_correspondences(&noisy, *mode, &cfg.correspondence)?;
                    save_cset(dir.join(format!("scene_{i:04}_{mode}.cset")), &set)?;
                }
            }
            Ok(RenderedScene {
                scene: i,
                pose: Some(scene.pose),
                masked_pixels: scene.map.masked_count(),
                noise_accuracy: coordinate_accuracy(&noisy, &scene.map, mesh.diameter(), &DEFAULT_ACCURACY_FRACTIONS).ok(),
                error: None,
            })
        })
        .collect();
    let scenes = scenes.into_iter().collect::<Result<Vec<_>>>()?;
    let json = serde_json::to_string_pretty(&scenes)? + "\n";
    let path = write_file(&dir, "scenes.json", json.as_bytes())?;
    let failed = scenes.iter().filter(|s| s.error.is_some()).count();
    println!("rendered {} scenes ({failed} failed) into {}", scenes.len() - failed, dir.display());
    eprintln!("wrote {}", path.display());
    Ok(())
}

fn ablate(cli: &Cli, config: &Path) -> Result<()> {
    let cfg = load_config(cli, config)?;
    let report = run_ablation(&cfg)?;
    let files = report.write(&out_dir(cli))?;
    println!(
        "{:<5} {:>6} {:>8} {:>14} {:>14} {:>10} {:>8}",
        "mode", "scenes", "failures", "med rot (deg)", "med trans (mm)", "recall", "AUC"
    );
    for r in &report.rows {
        println!(
            "{:<5} {:>6} {:>8} {:>14.4} {:>14.3} {:>10.3} {:>8.3}",
            r.mode.as_str(),
            r.scenes,
            r.failures,
            r.median_rot_rad.to_degrees(),
            r.median_trans_m * 1e3,
            r.add_recall,
            r.auc
        );
    }
    for f in files {
        eprintln!("wrote {}", f.display());
    }
    Ok(())
}

/// Largest distance between any two masked surface points.
fn map_extent(map: &CoordinateMap) -> f64 {
    let pts: Vec<Vector3<f64>> = map.masked_indices().flat_map(|i| [map.front(i), map.back(i)]).collect();
    pts.par_iter()
        .enumerate()
        .map(|(i, p)| pts[i + 1..].iter().map(|q| (p - q).norm()).fold(0.0, f64::max))
        .reduce(|| 0.0, f64::max)
}

fn eval(pred: &Path, gt: &Path, diameter: Option<f64>, mesh: Option<&str>) -> Result<()> {
    let pred_map = load_cmap(pred)?;
    let gt_map = load_cmap(gt)?;
    let diameter = match (diameter, mesh) {
        (Some(d), _) => d,
        (None, Some(m)) => hcce::experiments::resolve_mesh(m, None)?.diameter(),
        (None, None) => {
            let d = map_extent(&gt_map);
            eprintln!("no --diameter or --mesh given; using the ground-truth point extent {d:.6} m");
            d
        }
    };
    let acc = coordinate_accuracy(&pred_map, &gt_map, diameter, &DEFAULT_ACCURACY_FRACTIONS)?;
    println!("pixels evaluated: {}  diameter: {diameter:.6} m", acc.pixels);
    println!("{:>9} {:>8} {:>8}", "threshold", "front", "back");
    for ((f, a), b) in acc.fractions.iter().zip(&acc.front).zip(&acc.back) {
        println!("{:>8}% {:>8.4} {:>8.4}", f * 100.0, a, b);
    }
    Ok(())
}
