//! `dmptool` — compute DMP feature stacks, tile rasters, stitch label
//! maps, evaluate predictions, and render error masks.
//!
//! Exit codes: 0 success, 1 I/O or data error, 2 usage/parameter error.

mod config;

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use dmp_core::formats::{
    read_png, read_png_mask, write_png_gray, write_png_mask, write_png_rgb, write_tensor,
    DecodedPng,
};
use dmp_core::image::GrayImage;
use dmp_core::metrics::{render_error_mask, ClassMetrics, ConfusionMatrix};
use dmp_core::profile::DifferentialSpec;
use dmp_core::stack::{
    stack_depth_extended, stack_depth_extended_gray, FeatureStack, StackData, ValueDomain,
};
use dmp_core::tiler::{
    extract_tile_gray, extract_tile_rgb, plan_tiles, stitch_labels, tile_file_name, TilePlan,
};

use config::{resolve, EffectiveConfig, PipelineConfig};

#[derive(Debug)]
pub enum CliError {
    /// Caller misuse; exit 2.
    Usage(String),
    /// Bad input data or I/O failure; exit 1.
    Data(String),
    Core(dmp_core::Error),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Data(m) => write!(f, "{m}"),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

impl From<dmp_core::Error> for CliError {
    fn from(e: dmp_core::Error) -> Self {
        CliError::Core(e)
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Data(_) => 1,
            CliError::Core(e) => {
                if e.is_usage() {
                    2
                } else {
                    1
                }
            }
        }
    }
}

type CliResult<T> = Result<T, CliError>;

#[derive(Parser)]
#[command(name = "dmptool", version, about = "Differential morphological profile toolkit")]
struct Cli {
    /// Size of the internal thread pool (default: one per core). Results
    /// never depend on this value.
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// JSON pipeline configuration; flags override file values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Echo the effective configuration as JSON before running.
    #[arg(long, global = true)]
    print_config: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute a depth-extended DMP feature stack and write it as a DMPT
    /// tensor, either for the whole image or per tile.
    Dmp(DmpArgs),
    /// Split a raster into window-sized PNG tiles plus a JSON plan manifest.
    Tile(TileArgs),
    /// Reassemble per-tile label masks into one full-size mask.
    Stitch(StitchArgs),
    /// Evaluate predicted masks against ground truth.
    Eval(EvalArgs),
    /// Render the color-coded error mask for one foreground class.
    Errmask(ErrmaskArgs),
}

#[derive(Args)]
struct DmpArgs {
    /// Input PNG (RGB or grayscale).
    input: PathBuf,
    /// Output .dmpt path (single-stack mode).
    #[arg(short, long, conflicts_with = "tile")]
    output: Option<PathBuf>,
    /// Named pair list: original, improved, evo1, evo2.
    #[arg(long)]
    preset: Option<String>,
    /// Explicit pair list, e.g. "9-3,5-3".
    #[arg(long)]
    pairs: Option<String>,
    /// SE shape: square or disk.
    #[arg(long)]
    shape: Option<String>,
    /// Output value domain: unit (f32 in [0,1]) or raw8.
    #[arg(long)]
    domain: Option<String>,
    /// Tile the raster and write one stack per tile into --out-dir.
    #[arg(long)]
    tile: bool,
    #[arg(long, requires = "tile")]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    window: Option<u32>,
    #[arg(long)]
    step: Option<u32>,
    /// Compute the DMP once on the whole image and slice tiles from the
    /// stack, instead of running the DMP per extracted tile.
    #[arg(long)]
    whole_image_dmp: bool,
}

#[derive(Args)]
struct TileArgs {
    /// Input PNG of any supported layout.
    input: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long)]
    window: Option<u32>,
    #[arg(long)]
    step: Option<u32>,
}

#[derive(Args)]
struct StitchArgs {
    /// JSON plan manifest written by `tile`.
    #[arg(long)]
    manifest: PathBuf,
    /// Directory of per-tile masks following the tile naming convention.
    #[arg(long)]
    tiles_dir: PathBuf,
    #[arg(long)]
    num_classes: Option<usize>,
    #[arg(short, long)]
    output: PathBuf,
    /// Tile file stem; defaults to the manifest name minus "_plan.json".
    #[arg(long)]
    stem: Option<String>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    gt_dir: PathBuf,
    #[arg(long)]
    pred_dir: PathBuf,
    #[arg(long)]
    num_classes: Option<usize>,
    /// Leave class 0 out of the macro averages.
    #[arg(long)]
    exclude_background: bool,
    /// Write the machine-readable report here as JSON.
    #[arg(long)]
    json_out: Option<PathBuf>,
}

#[derive(Args)]
struct ErrmaskArgs {
    #[arg(long)]
    gt: PathBuf,
    #[arg(long)]
    pred: PathBuf,
    /// Foreground class index (nonzero).
    #[arg(long = "class")]
    class: u8,
    #[arg(short, long)]
    output: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn run(cli: Cli) -> CliResult<()> {
    let Cli {
        threads,
        config,
        print_config,
        command,
    } = cli;
    if let Some(n) = threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be positive".into()));
        }
        // Ignores the error if a pool already exists (e.g. in tests).
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }

    let file_cfg = match &config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };

    match command {
        Command::Dmp(args) => cmd_dmp(print_config, &file_cfg, args),
        Command::Tile(args) => cmd_tile(print_config, &file_cfg, args),
        Command::Stitch(args) => cmd_stitch(args),
        Command::Eval(args) => cmd_eval(print_config, &file_cfg, args),
        Command::Errmask(args) => cmd_errmask(args),
    }
}

fn echo_config(print: bool, effective: &EffectiveConfig) {
    if print {
        println!(
            "{}",
            serde_json::to_string_pretty(effective).expect("config serializes")
        );
    }
}

fn file_stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "raster".into())
}

fn cmd_dmp(print_config: bool, file_cfg: &PipelineConfig, args: DmpArgs) -> CliResult<()> {
    let flags = PipelineConfig {
        preset: args.preset.clone(),
        pairs: args.pairs.clone(),
        shape: args.shape.clone(),
        domain: args.domain.clone(),
        window: args.window,
        step: args.step,
        whole_image_dmp: args.whole_image_dmp.then_some(true),
        ..Default::default()
    };
    let (effective, spec) = resolve(&file_cfg.merged(&flags))?;
    echo_config(print_config, &effective);
    let spec = spec.ok_or_else(|| {
        CliError::Usage("no differential pairs: pass --preset or --pairs".into())
    })?;
    let domain: ValueDomain = effective.domain.parse()?;

    let decoded = read_png(&args.input)?;

    if !args.tile {
        let output = args
            .output
            .ok_or_else(|| CliError::Usage("pass --output for single-stack mode".into()))?;
        let stack = stack_of(&decoded, &spec, domain);
        write_tensor(&stack, &output)?;
        println!("{}:", output.display());
        print_channel_summary(&stack);
        return Ok(());
    }

    let out_dir = args
        .out_dir
        .ok_or_else(|| CliError::Usage("pass --out-dir with --tile".into()))?;
    std::fs::create_dir_all(&out_dir)
        .map_err(|e| CliError::Data(format!("{}: {e}", out_dir.display())))?;
    let (width, height) = match &decoded {
        DecodedPng::Rgb(i) => (i.width(), i.height()),
        DecodedPng::Gray(i) => (i.width(), i.height()),
    };
    let plan = plan_tiles(width, height, effective.window, effective.step)?;
    let stem = file_stem(&args.input);

    // Each stack is written as soon as it is computed; only the one-line
    // summaries are kept.
    struct TileSummary {
        path: PathBuf,
        channels: u32,
        domain: ValueDomain,
        labels: Vec<String>,
        min: f64,
        max: f64,
    }
    let summarize = |origin: (u32, u32), stack: FeatureStack| -> CliResult<TileSummary> {
        let path = out_dir.join(tile_file_name(&stem, origin, "dmpt"));
        write_tensor(&stack, &path)?;
        let (min, max) = global_min_max(&stack);
        Ok(TileSummary {
            path,
            channels: stack.channels(),
            domain: stack.domain(),
            labels: stack.labels().to_vec(),
            min,
            max,
        })
    };

    let summaries: Vec<TileSummary> = if effective.whole_image_dmp {
        // One DMP over the full raster, then window-sized slices of it.
        let full = stack_of(&decoded, &spec, ValueDomain::Raw8);
        plan.origins
            .iter()
            .map(|&origin| {
                let sliced = slice_stack(&full, origin, plan.window)?;
                summarize(origin, sliced.to_domain(domain))
            })
            .collect::<CliResult<_>>()?
    } else {
        use rayon::prelude::*;
        plan.origins
            .par_iter()
            .map(|&origin| {
                let stack = match &decoded {
                    DecodedPng::Rgb(img) => {
                        let tile = extract_tile_rgb(img, origin, plan.window)?;
                        stack_depth_extended(&tile, &spec, domain)
                    }
                    DecodedPng::Gray(img) => {
                        let tile = extract_tile_gray(img, origin, plan.window)?;
                        stack_depth_extended_gray(&tile, &spec, domain)
                    }
                };
                summarize(origin, stack)
            })
            .collect::<CliResult<_>>()?
    };

    let manifest_path = out_dir.join(format!("{stem}_plan.json"));
    write_manifest(&plan, &manifest_path)?;

    let first = &summaries[0];
    println!(
        "{} tiles of {} channels each ({}), labels: [{}]",
        summaries.len(),
        first.channels,
        first.domain,
        first.labels.join(", ")
    );
    for s in &summaries {
        println!("  {}  min {:.4}  max {:.4}", s.path.display(), s.min, s.max);
    }
    println!("manifest: {}", manifest_path.display());
    Ok(())
}

fn stack_of(decoded: &DecodedPng, spec: &DifferentialSpec, domain: ValueDomain) -> FeatureStack {
    match decoded {
        DecodedPng::Rgb(img) => stack_depth_extended(img, spec, domain),
        DecodedPng::Gray(img) => stack_depth_extended_gray(img, spec, domain),
    }
}

/// Window-sized crop of every channel of a Raw8 stack, edge-replicated.
fn slice_stack(full: &FeatureStack, origin: (u32, u32), window: u32) -> CliResult<FeatureStack> {
    let mut planes = Vec::with_capacity(full.channels() as usize);
    for c in 0..full.channels() {
        let plane = full
            .channel_raw8(c)
            .expect("whole-image stack is computed in raw8");
        let img = GrayImage::new(full.width(), full.height(), plane.to_vec())?;
        planes.push(extract_tile_gray(&img, origin, window)?);
    }
    Ok(FeatureStack::from_gray_channels(&planes, full.labels().to_vec())?)
}

fn global_min_max(stack: &FeatureStack) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for c in 0..stack.channels() {
        let (l, h) = stack.channel_min_max(c);
        lo = lo.min(l);
        hi = hi.max(h);
    }
    (lo, hi)
}

fn print_channel_summary(stack: &FeatureStack) {
    println!(
        "channels: {} ({}), {}x{}",
        stack.channels(),
        stack.domain(),
        stack.width(),
        stack.height()
    );
    for c in 0..stack.channels() {
        let (lo, hi) = stack.channel_min_max(c);
        let label = &stack.labels()[c as usize];
        match stack.data() {
            StackData::Raw8(_) => println!("  ch {c:>2}  {label:<14} min {lo:>3}  max {hi:>3}"),
            StackData::UnitFloat(_) => {
                println!("  ch {c:>2}  {label:<14} min {lo:.4}  max {hi:.4}")
            }
        }
    }
}

fn write_manifest(plan: &TilePlan, path: &Path) -> CliResult<()> {
    let json = serde_json::to_string_pretty(plan).expect("plan serializes");
    std::fs::write(path, json).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn cmd_tile(print_config: bool, file_cfg: &PipelineConfig, args: TileArgs) -> CliResult<()> {
    let flags = PipelineConfig {
        window: args.window,
        step: args.step,
        ..Default::default()
    };
    let (effective, _) = resolve(&file_cfg.merged(&flags))?;
    echo_config(print_config, &effective);

    let decoded = read_png(&args.input)?;
    std::fs::create_dir_all(&args.out_dir)
        .map_err(|e| CliError::Data(format!("{}: {e}", args.out_dir.display())))?;
    let (width, height) = match &decoded {
        DecodedPng::Rgb(i) => (i.width(), i.height()),
        DecodedPng::Gray(i) => (i.width(), i.height()),
    };
    let plan = plan_tiles(width, height, effective.window, effective.step)?;
    let stem = file_stem(&args.input);

    for &origin in &plan.origins {
        let path = args.out_dir.join(tile_file_name(&stem, origin, "png"));
        match &decoded {
            DecodedPng::Rgb(img) => {
                write_png_rgb(&path, &extract_tile_rgb(img, origin, plan.window)?)?
            }
            DecodedPng::Gray(img) => {
                write_png_gray(&path, &extract_tile_gray(img, origin, plan.window)?)?
            }
        }
    }
    let manifest_path = args.out_dir.join(format!("{stem}_plan.json"));
    write_manifest(&plan, &manifest_path)?;
    println!(
        "{} tiles of {}x{} written to {}",
        plan.origins.len(),
        plan.window,
        plan.window,
        args.out_dir.display()
    );
    println!("manifest: {}", manifest_path.display());
    Ok(())
}

fn cmd_stitch(args: StitchArgs) -> CliResult<()> {
    let text = std::fs::read_to_string(&args.manifest)
        .map_err(|e| CliError::Data(format!("{}: {e}", args.manifest.display())))?;
    let plan: TilePlan = serde_json::from_str(&text)
        .map_err(|e| CliError::Data(format!("{}: invalid manifest: {e}", args.manifest.display())))?;
    plan.validate()?;

    let stem = match args.stem {
        Some(s) => s,
        None => {
            let name = file_stem(&args.manifest);
            name.strip_suffix("_plan").unwrap_or(&name).to_string()
        }
    };
    let num_classes = args.num_classes.unwrap_or(16);

    let tiles = plan
        .origins
        .iter()
        .map(|&origin| read_png_mask(args.tiles_dir.join(tile_file_name(&stem, origin, "png"))))
        .collect::<dmp_core::Result<Vec<_>>>()?;
    let mask = stitch_labels(&plan, &tiles, num_classes)?;
    write_png_mask(&args.output, &mask)?;
    println!(
        "stitched {} tiles into {}x{} mask: {}",
        tiles.len(),
        mask.width(),
        mask.height(),
        args.output.display()
    );
    Ok(())
}

fn png_names(dir: &Path) -> CliResult<BTreeSet<String>> {
    let mut names = BTreeSet::new();
    let entries =
        std::fs::read_dir(dir).map_err(|e| CliError::Data(format!("{}: {e}", dir.display())))?;
    for entry in entries {
        let entry = entry.map_err(|e| CliError::Data(format!("{}: {e}", dir.display())))?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if name.ends_with(".png") {
            names.insert(name);
        }
    }
    Ok(names)
}

fn cmd_eval(print_config: bool, file_cfg: &PipelineConfig, args: EvalArgs) -> CliResult<()> {
    let flags = PipelineConfig {
        num_classes: args.num_classes,
        exclude_background: args.exclude_background.then_some(true),
        ..Default::default()
    };
    let (effective, _) = resolve(&file_cfg.merged(&flags))?;
    echo_config(print_config, &effective);
    let num_classes = effective.num_classes;

    let gt_names = png_names(&args.gt_dir)?;
    let pred_names = png_names(&args.pred_dir)?;
    if gt_names.is_empty() && pred_names.is_empty() {
        return Err(CliError::Usage("nothing to evaluate: both directories are empty".into()));
    }
    let missing_pred: Vec<_> = gt_names.difference(&pred_names).cloned().collect();
    let missing_gt: Vec<_> = pred_names.difference(&gt_names).cloned().collect();
    if !missing_pred.is_empty() || !missing_gt.is_empty() {
        let mut msg = String::from("unmatched filenames:");
        for n in &missing_pred {
            msg.push_str(&format!("\n  only in {}: {n}", args.gt_dir.display()));
        }
        for n in &missing_gt {
            msg.push_str(&format!("\n  only in {}: {n}", args.pred_dir.display()));
        }
        return Err(CliError::Data(msg));
    }

    use rayon::prelude::*;
    let names: Vec<&String> = gt_names.iter().collect();
    let per_file: Vec<Result<ConfusionMatrix, String>> = names
        .par_iter()
        .map(|name| {
            let run = || -> dmp_core::Result<ConfusionMatrix> {
                let gt = read_png_mask(args.gt_dir.join(name))?;
                let pred = read_png_mask(args.pred_dir.join(name))?;
                let mut cm = ConfusionMatrix::new(num_classes)?;
                cm.accumulate(&gt, &pred, None)?;
                Ok(cm)
            };
            run().map_err(|e| format!("{name}: {e}"))
        })
        .collect();

    let mut failures = Vec::new();
    let mut total = ConfusionMatrix::new(num_classes)?;
    for result in per_file {
        match result {
            Ok(cm) => total.merge(&cm)?,
            Err(msg) => failures.push(msg),
        }
    }
    if !failures.is_empty() {
        return Err(CliError::Data(failures.join("\n")));
    }

    let metrics = if effective.exclude_background {
        total.compute_metrics_skipping(&[0])
    } else {
        total.compute_metrics()
    };
    print_metrics_table(&metrics);
    if let Some(path) = &args.json_out {
        let json = serde_json::to_string_pretty(&metrics).expect("metrics serialize");
        std::fs::write(path, json)
            .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        println!("report written to {}", path.display());
    }
    Ok(())
}

fn print_metrics_table(m: &ClassMetrics) {
    let fmt = |v: Option<f64>| match v {
        Some(v) => format!("{:>7.2}", v * 100.0),
        None => format!("{:>7}", "-"),
    };
    println!("{:>5}  {:>7}  {:>7}  {:>7}  {:>7}", "class", "IoU", "F1", "Prec", "Rec");
    for pc in &m.per_class {
        println!(
            "{:>5}  {}  {}  {}  {}",
            pc.class,
            fmt(pc.iou),
            fmt(pc.f1),
            fmt(pc.precision),
            fmt(pc.recall)
        );
    }
    println!(
        "{:>5}  {}  {}  {}  {}",
        "macro",
        fmt(m.miou),
        fmt(m.mf1),
        fmt(m.mprecision),
        fmt(m.mrecall)
    );
    if !m.excluded.is_empty() {
        println!(
            "excluded (absent from gt and pred): {:?}",
            m.excluded
        );
    }
    if !m.skipped.is_empty() {
        println!("excluded on request: {:?}", m.skipped);
    }
}

fn cmd_errmask(args: ErrmaskArgs) -> CliResult<()> {
    let gt = read_png_mask(&args.gt)?;
    let pred = read_png_mask(&args.pred)?;
    let mask = render_error_mask(&gt, &pred, args.class)?;
    write_png_rgb(&args.output, &mask)?;
    println!("error mask for class {}: {}", args.class, args.output.display());
    Ok(())
}
