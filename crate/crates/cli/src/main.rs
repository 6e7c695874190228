use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use woodpith::evalbench::{self, DatasetManifest, ParamGrid};
use woodpith::imgproc::preprocess;
use woodpith::io::{load_mask, load_rgb, overlay, save_mask_png, save_rgb_png};
use woodpith::pclines::write_dual_csv;
use woodpith::pith_solver::estimate_lo;
use woodpith::synthgen::{generate_web, WebSpec};
use woodpith::{detect_preprocessed, DetectorParams, Method, PithError, Point, SliceMask};

/// Wood pith detection on cross-section images.
#[derive(Parser)]
#[command(name = "woodpith", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Detect the pith of one image and print the estimate as JSON.
    Detect(DetectArgs),
    /// Evaluate a detector over one or more annotated collections.
    Eval(EvalArgs),
    /// Render a synthetic ring image, its mask and the true pith.
    Synth(SynthArgs),
    /// Search percent_lo, st_w and lo_w for the lowest mean pixel error.
    Gridsearch(GridArgs),
}

/// Detector parameters. Precedence: method defaults, then --config, then flags.
#[derive(Args, Clone)]
struct ParamArgs {
    /// Detector variant: apd or apd-pcl.
    #[arg(long, default_value = "apd")]
    method: Method,
    /// Key-value file (`key = value` per line) with parameter overrides.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Gaussian sigma of the structure-tensor window [default: 1.2].
    #[arg(long)]
    st_sigma: Option<f64>,
    /// Structure-tensor window side, odd [default: 3 for apd, 7 for apd-pcl].
    #[arg(long)]
    st_w: Option<usize>,
    /// Fraction of foreground pixels above the coherence threshold [default: 0.7].
    #[arg(long)]
    percent_lo: Option<f64>,
    /// Side of the sampling patches [default: 3 for apd, 7 for apd-pcl].
    #[arg(long)]
    lo_w: Option<usize>,
    /// Refinement window divisor; the window side is max(w, h) / r_f [default: 7].
    #[arg(long)]
    r_f: Option<f64>,
    /// Convergence tolerance on the center displacement, pixels [default: 1e-5].
    #[arg(long)]
    eps: Option<f64>,
    /// Maximum refinement iterations [default: 5].
    #[arg(long)]
    max_iter: Option<usize>,
    /// Distance between PClines axes, normalized units [default: 1].
    #[arg(long)]
    d: Option<f64>,
    /// RANSAC inlier distance in dual space, normalized units [default: 0.03].
    #[arg(long)]
    ransac_outlier_th: Option<f64>,
    /// RANSAC iterations [default: 1000].
    #[arg(long)]
    ransac_iters: Option<usize>,
    /// Minimum RANSAC cluster size [default: 5].
    #[arg(long)]
    ransac_min_inliers: Option<usize>,
    /// Seed for RANSAC sampling and solver jitter [default: 0].
    #[arg(long)]
    seed: Option<u64>,
    /// Working image width in pixels [default: 640].
    #[arg(long)]
    target_width: Option<usize>,
}

impl ParamArgs {
    fn resolve(&self) -> Result<DetectorParams, CliError> {
        let mut p = DetectorParams::for_method(self.method);
        if let Some(path) = &self.config {
            let text = fs::read_to_string(path)
                .with_context(|| format!("reading config {}", path.display()))
                .map_err(CliError::Runtime)?;
            p.apply_kv(&text, &path.display().to_string()).map_err(usage)?;
        }
        let overrides: [(&str, Option<String>); 13] = [
            ("st_sigma", self.st_sigma.map(|v| v.to_string())),
            ("st_w", self.st_w.map(|v| v.to_string())),
            ("percent_lo", self.percent_lo.map(|v| v.to_string())),
            ("lo_w", self.lo_w.map(|v| v.to_string())),
            ("r_f", self.r_f.map(|v| v.to_string())),
            ("eps", self.eps.map(|v| v.to_string())),
            ("max_iter", self.max_iter.map(|v| v.to_string())),
            ("d", self.d.map(|v| v.to_string())),
            ("ransac_outlier_th", self.ransac_outlier_th.map(|v| v.to_string())),
            ("ransac_iters", self.ransac_iters.map(|v| v.to_string())),
            ("ransac_min_inliers", self.ransac_min_inliers.map(|v| v.to_string())),
            ("seed", self.seed.map(|v| v.to_string())),
            ("target_width", self.target_width.map(|v| v.to_string())),
        ];
        for (key, value) in overrides {
            if let Some(v) = value {
                p.set(key, &v).map_err(usage)?;
            }
        }
        p.validate().map_err(usage)?;
        Ok(p)
    }
}

#[derive(Args)]
struct DetectArgs {
    /// Input image (PNG or JPEG).
    image: PathBuf,
    /// Slice mask; nonzero pixels are wood.
    #[arg(long, conflicts_with = "all_foreground")]
    mask: Option<PathBuf>,
    /// Treat the whole image as wood (background-free scans).
    #[arg(long)]
    all_foreground: bool,
    #[command(flatten)]
    params: ParamArgs,
    /// Write a copy of the image with the estimate marked.
    #[arg(long)]
    overlay: Option<PathBuf>,
    /// Ground truth to mark on the overlay, as `x,y` in original pixels.
    #[arg(long, value_parser = parse_xy)]
    gt: Option<(f64, f64)>,
    /// Write the sampled orientation segments (working frame) as CSV.
    #[arg(long)]
    dump_lo: Option<PathBuf>,
    /// Write the PClines dual points and their RANSAC membership as CSV.
    #[arg(long)]
    dump_duals: Option<PathBuf>,
}

#[derive(Args)]
struct DatasetArgs {
    /// Collections file with `name = manifest.csv` lines.
    #[arg(long, required_unless_present = "manifest")]
    collections: Option<PathBuf>,
    /// A single manifest CSV (columns image,mask,gt_x,gt_y).
    #[arg(long, conflicts_with = "collections")]
    manifest: Option<PathBuf>,
}

impl DatasetArgs {
    fn load(&self) -> anyhow::Result<Vec<DatasetManifest>> {
        if let Some(c) = &self.collections {
            return Ok(evalbench::load_collections(c)?);
        }
        let m = self.manifest.as_ref().expect("clap enforces one source");
        let name = m.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "dataset".into());
        Ok(vec![DatasetManifest::load_csv(&name, m)?])
    }
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    data: DatasetArgs,
    #[command(flatten)]
    params: ParamArgs,
    /// Directory for records, metrics and timing files.
    #[arg(long)]
    out_dir: PathBuf,
    /// Images evaluated concurrently; keep 1 for comparable timings.
    #[arg(long, default_value_t = 1)]
    workers: usize,
}

#[derive(Args)]
struct SynthArgs {
    /// Key-value web description (width, height, center_x, center_y, n_rings,
    /// ring_spacing, n_rays, eccentricity, eccentricity_angle, noise_sigma,
    /// fungus_radius, seed); defaults are used when omitted.
    spec: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    /// File name stem for `<stem>.png`, `<stem>_mask.png` and `<stem>_gt.json`.
    #[arg(long, default_value = "web")]
    stem: String,
}

#[derive(Args)]
struct GridArgs {
    #[command(flatten)]
    data: DatasetArgs,
    #[command(flatten)]
    params: ParamArgs,
    /// Grid file with `percent_lo = ...`, `st_w = ...`, `lo_w = ...` lists;
    /// omitted axes default to 0.3,0.5,0.7,0.9 / 3,7,9,11 / 3,7,9,11.
    #[arg(long)]
    grid: Option<PathBuf>,
    /// Directory for grid_scores.csv and best_params.txt.
    #[arg(long)]
    out_dir: PathBuf,
    /// Images processed concurrently.
    #[arg(long, default_value_t = 1)]
    workers: usize,
}

enum CliError {
    Usage(anyhow::Error),
    DetectionFailed(String),
    Runtime(anyhow::Error),
}

fn usage(e: PithError) -> CliError {
    CliError::Usage(e.into())
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        CliError::Runtime(e)
    }
}

impl From<PithError> for CliError {
    fn from(e: PithError) -> Self {
        match e {
            PithError::DetectionFailed(m) => CliError::DetectionFailed(m),
            other => CliError::Runtime(other.into()),
        }
    }
}

fn parse_xy(s: &str) -> Result<(f64, f64), String> {
    let (x, y) = s.split_once(',').ok_or("expected x,y")?;
    let x = x.trim().parse().map_err(|_| format!("bad x in {s:?}"))?;
    let y = y.trim().parse().map_err(|_| format!("bad y in {s:?}"))?;
    Ok((x, y))
}

/// Writes to stdout, tolerating a closed pipe.
fn emit(text: &str) {
    let _ = std::io::stdout().lock().write_all(text.as_bytes());
}

fn create(path: &Path) -> anyhow::Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn cmd_detect(args: &DetectArgs) -> Result<(), CliError> {
    let params = args.params.resolve()?;
    let img = load_rgb(&args.image)?;
    let mask = match (&args.mask, args.all_foreground) {
        (Some(m), _) => load_mask(m)?,
        (None, true) => SliceMask::full(img.width(), img.height()),
        (None, false) => {
            return Err(CliError::Usage(anyhow::anyhow!(
                "no --mask given; pass --all-foreground if the image has no background"
            )))
        }
    };
    let pre = preprocess::<f64>(&img, &mask, params.target_width)?;
    if args.dump_lo.is_some() || args.dump_duals.is_some() {
        let lo = estimate_lo(&pre, &params)?;
        if let Some(path) = &args.dump_lo {
            lo.write_csv(create(path)?)?;
        }
        if let Some(path) = &args.dump_duals {
            write_dual_csv(&lo, pre.field.size(), &params.pclines, create(path)?)?;
        }
    }
    let est = detect_preprocessed::<f64>(&pre, args.params.method, &params)?;
    if let Some(path) = &args.overlay {
        let gt = args.gt.map(|(x, y)| Point::new(x, y));
        save_rgb_png(&overlay(&img, est.c_original, gt), path)?;
    }
    let trace: Vec<_> = est
        .trace
        .iter()
        .map(|t| json!({"x": t.center.x, "y": t.center.y, "cost": t.cost, "n_segments": t.n_segments}))
        .collect();
    let out = json!({
        "image": args.image.display().to_string(),
        "method": args.params.method.as_str(),
        "pith_x": est.c_original.x,
        "pith_y": est.c_original.y,
        "frame": "original",
        "c_working": {"x": est.c_working.x, "y": est.c_working.y},
        "scale": pre.resize.scale,
        "iterations": est.iterations,
        "converged": est.converged,
        "n_segments": est.n_segments,
        "n_used": est.n_used,
        "trace": trace,
        "diagnostics": est.diagnostics,
    });
    emit(&(serde_json::to_string_pretty(&out).expect("plain JSON values") + "\n"));
    Ok(())
}

fn cmd_eval(args: &EvalArgs) -> Result<(), CliError> {
    let params = args.params.resolve()?;
    let manifests = args.data.load()?;
    let eval = evalbench::evaluate(&manifests, args.params.method, &params, args.workers)?;
    fs::create_dir_all(&args.out_dir).with_context(|| format!("creating {}", args.out_dir.display()))?;
    let out = |name: &str| create(&args.out_dir.join(name));
    evalbench::write_records_csv(&eval.records, out("records.csv")?)?;
    evalbench::write_metrics_csv(&eval.metrics, out("metrics.csv")?)?;
    evalbench::write_metrics_json(&eval.metrics, out("metrics.json")?)?;
    evalbench::write_timing_csv(&eval, out("timing.csv")?)?;
    evalbench::write_skipped_csv(&eval.skipped, out("skipped.csv")?)?;
    if eval.records.is_empty() {
        eprintln!("warning: no images were evaluated");
    }
    for s in &eval.skipped {
        eprintln!("warning: skipped {} ({}): {}", s.image, s.collection, s.reason);
    }
    println!("{:<16} {:>5} {:>8} {:>8} {:>8} {:>8} {:>4} {:>9}", "collection", "n", "mean", "std", "median", "max", "FN", "ms");
    for m in &eval.metrics.rows {
        println!(
            "{:<16} {:>5} {:>8.3} {:>8.3} {:>8.3} {:>8.3} {:>4} {:>9.1}",
            m.collection, m.n, m.mean, m.std, m.median, m.max, m.false_negatives, m.mean_elapsed_ms
        );
    }
    Ok(())
}

fn cmd_synth(args: &SynthArgs) -> Result<(), CliError> {
    let spec = match &args.spec {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            WebSpec::from_kv(&text, &path.display().to_string()).map_err(usage)?
        }
        None => WebSpec::default(),
    };
    let (img, mask, center) = generate_web(&spec).map_err(usage)?;
    fs::create_dir_all(&args.out_dir).with_context(|| format!("creating {}", args.out_dir.display()))?;
    let image_path = args.out_dir.join(format!("{}.png", args.stem));
    let mask_path = args.out_dir.join(format!("{}_mask.png", args.stem));
    let gt_path = args.out_dir.join(format!("{}_gt.json", args.stem));
    save_rgb_png(&img, &image_path)?;
    save_mask_png(&mask, &mask_path)?;
    let gt = json!({"pith_x": center.x, "pith_y": center.y, "spec": spec});
    let text = serde_json::to_string_pretty(&gt).expect("plain JSON values");
    fs::write(&gt_path, text + "\n").with_context(|| format!("writing {}", gt_path.display()))?;
    println!("{}\n{}\n{}", image_path.display(), mask_path.display(), gt_path.display());
    Ok(())
}

fn cmd_gridsearch(args: &GridArgs) -> Result<(), CliError> {
    let base = args.params.resolve()?;
    let grid = match &args.grid {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            ParamGrid::from_kv(&text, &path.display().to_string()).map_err(usage)?
        }
        None => ParamGrid::default(),
    };
    let manifests = args.data.load()?;
    let res = evalbench::grid_search(&manifests, args.params.method, &base, &grid, args.workers)?;
    fs::create_dir_all(&args.out_dir).with_context(|| format!("creating {}", args.out_dir.display()))?;
    evalbench::write_grid_csv(&res.table, create(&args.out_dir.join("grid_scores.csv"))?)?;
    let best = &res.best.cell;
    let text = format!(
        "# mean distance {} px over the grid's images\npercent_lo = {}\nst_w = {}\nlo_w = {}\n",
        res.best.mean_distance, best.percent_lo, best.st_w, best.lo_w
    );
    fs::write(args.out_dir.join("best_params.txt"), &text).context("writing best_params.txt")?;
    for s in &res.skipped {
        eprintln!("warning: skipped {} ({}): {}", s.image, s.collection, s.reason);
    }
    print!("{text}");
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Detect(a) => cmd_detect(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Synth(a) => cmd_synth(a),
        Command::Gridsearch(a) => cmd_gridsearch(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(CliError::DetectionFailed(m)) => {
            eprintln!("detection failed: {m}");
            ExitCode::from(3)
        }
        Err(CliError::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
