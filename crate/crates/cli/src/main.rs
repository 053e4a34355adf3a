use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{ensure, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use prefacies_core::baselines::{pca_fit, pca_transform, poststack_features};
use prefacies_core::cae::{train_layerwise, CaeModel};
use prefacies_core::clustering::cluster;
use prefacies_core::config::RunConfig;
use prefacies_core::features::{
    assemble_feature_matrix, cut_survey, flatten_windows, standardize_survey, validate_window,
    SurveyGrid,
};
use prefacies_core::formats::{
    read_checkpoint, read_cube, read_features, read_labels, write_checkpoint, write_cube,
    write_features, write_labels, write_map,
};
use prefacies_core::gradcheck::{self, GradCheckConfig};
use prefacies_core::synth::{
    generate_cube, noise_sigma_for_snr, physical_model, score_map, FaciesMap,
};
use prefacies_core::tensor::Tensor;

#[derive(Parser)]
#[command(
    name = "prefacies",
    version,
    about = "Prestack seismic facies recognition: synthetic surveys, autoencoder training, clustering, baselines"
)]
struct Cli {
    /// Key-value run configuration file; built-in defaults apply when omitted
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Random seed, overriding the config file
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads for feature extraction (0 = one per core)
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic prestack survey and its true facies labels
    Synth(SynthArgs),
    /// Cut and standardize windows, train the autoencoder, write a checkpoint
    Train(IoModelArgs),
    /// Run the trained encoder over every gather and write the feature matrix
    Extract(ExtractArgs),
    /// Cluster a feature matrix into facies labels
    Cluster(ClusterArgs),
    /// Render a label grid as a P6 pixmap
    Map(MapArgs),
    /// Comparison pipelines over the same survey
    Baseline(BaselineArgs),
    /// Permutation-matched accuracy of predicted labels against a reference
    Score(ScoreArgs),
    /// Validate the hand-derived gradients against finite differences
    Gradcheck(GradcheckArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// Output survey file
    #[arg(long, value_name = "FILE")]
    cube: PathBuf,
    /// Output true-label CSV
    #[arg(long, value_name = "FILE")]
    labels: PathBuf,
    /// Optional rendered map of the true labels
    #[arg(long, value_name = "FILE")]
    map: Option<PathBuf>,
}

#[derive(Args)]
struct IoModelArgs {
    /// Input survey file
    #[arg(long, value_name = "FILE")]
    cube: PathBuf,
    /// Output model checkpoint
    #[arg(long, value_name = "FILE")]
    model: PathBuf,
}

#[derive(Args)]
struct ExtractArgs {
    /// Input survey file
    #[arg(long, value_name = "FILE")]
    cube: PathBuf,
    /// Trained model checkpoint
    #[arg(long, value_name = "FILE")]
    model: PathBuf,
    /// Output feature CSV
    #[arg(long, value_name = "FILE")]
    features: PathBuf,
}

#[derive(Args)]
struct ClusterArgs {
    /// Input feature CSV
    #[arg(long, value_name = "FILE")]
    features: PathBuf,
    /// Output label CSV
    #[arg(long, value_name = "FILE")]
    labels: PathBuf,
}

#[derive(Args)]
struct MapArgs {
    /// Input label CSV
    #[arg(long, value_name = "FILE")]
    labels: PathBuf,
    /// Output P6 pixmap
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
}

#[derive(Args)]
struct BaselineArgs {
    /// Which baseline to run
    #[arg(value_enum)]
    kind: BaselineKind,
    /// Input survey file
    #[arg(long, value_name = "FILE")]
    cube: PathBuf,
    /// Output label CSV
    #[arg(long, value_name = "FILE")]
    labels: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum BaselineKind {
    /// PCA-reduced windows fed to the same clustering
    Pca,
    /// Offset-stacked traces fed to the same clustering
    Poststack,
}

#[derive(Args)]
struct ScoreArgs {
    /// Predicted label CSV
    #[arg(long, value_name = "FILE")]
    pred: PathBuf,
    /// Reference label CSV
    #[arg(long, value_name = "FILE")]
    truth: PathBuf,
}

#[derive(Args)]
struct GradcheckArgs {
    /// Number of random configurations to check
    #[arg(long, default_value_t = 20)]
    trials: usize,
}

fn main() -> ExitCode {
    // die quietly on closed pipes like other unix filters
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            // one line, full context chain
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => {
            RunConfig::load(p).with_context(|| format!("reading config {}", p.display()))?
        }
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("initializing thread pool")?;
    }
    match cli.command {
        Command::Synth(a) => synth(&cfg, &a),
        Command::Train(a) => train(&cfg, &a),
        Command::Extract(a) => extract(&cfg, &a),
        Command::Cluster(a) => cluster_cmd(&cfg, &a),
        Command::Map(a) => map_cmd(&a),
        Command::Baseline(a) => baseline(&cfg, &a),
        Command::Score(a) => score(&a),
        Command::Gradcheck(a) => gradcheck_cmd(&cfg, &a),
    }
}

fn synth(cfg: &RunConfig, a: &SynthArgs) -> Result<()> {
    let mut layout = physical_model(cfg.inlines, cfg.crosslines, cfg.seed);
    layout.noise_sigma =
        noise_sigma_for_snr(&layout, cfg.dt_ms, cfg.window_ms, cfg.offsets, cfg.snr)?;
    let (cube, truth) = generate_cube(&layout, cfg.dt_ms, cfg.window_ms, cfg.offsets)?;
    write_cube(&a.cube, &cube).with_context(|| format!("writing {}", a.cube.display()))?;
    write_labels(&a.labels, &truth)
        .with_context(|| format!("writing {}", a.labels.display()))?;
    if let Some(map) = &a.map {
        write_map(map, &truth).with_context(|| format!("writing {}", map.display()))?;
    }
    println!(
        "synthesized {}x{} gathers, {} offsets, {} samples/trace, noise sigma {:.5}",
        cube.inlines, cube.crosslines, cube.offsets, cube.samples, layout.noise_sigma
    );
    Ok(())
}

/// Cuts windows along the horizon and standardizes them per gather.
fn standardized_grid(cfg: &RunConfig, cube_path: &Path) -> Result<SurveyGrid> {
    let cube =
        read_cube(cube_path).with_context(|| format!("reading {}", cube_path.display()))?;
    let grid = cut_survey(&cube, cfg.alignment)?;
    let flagged: usize = grid
        .windows()
        .iter()
        .map(|w| validate_window(w).flagged_traces.len())
        .sum();
    if flagged > 0 {
        eprintln!("note: {flagged} traces lack an interior crest or trough");
    }
    let (grid, constant) = standardize_survey(&grid)?;
    if constant > 0 {
        eprintln!("note: {constant} constant windows zeroed during standardization");
    }
    Ok(grid)
}

fn train(cfg: &RunConfig, a: &IoModelArgs) -> Result<()> {
    let grid = standardized_grid(cfg, &a.cube)?;
    let model = CaeModel::init(
        grid.window_shape(),
        &cfg.layer_specs(),
        cfg.slope,
        cfg.decoder_activation,
        cfg.unpool,
        cfg.seed,
    )?;
    let windows: Vec<Tensor> = grid.windows().iter().map(|w| w.samples.clone()).collect();
    let (model, history) = train_layerwise(model, &windows, &cfg.train_config())?;
    write_checkpoint(&a.model, &model)
        .with_context(|| format!("writing {}", a.model.display()))?;
    for (li, h) in history.iter().enumerate() {
        println!(
            "layer {li}: epoch-mean loss {:.6} -> {:.6} over {} epochs",
            h[0],
            h[h.len() - 1],
            h.len()
        );
    }
    println!("checkpoint written to {}", a.model.display());
    Ok(())
}

fn extract(cfg: &RunConfig, a: &ExtractArgs) -> Result<()> {
    let grid = standardized_grid(cfg, &a.cube)?;
    let model =
        read_checkpoint(&a.model).with_context(|| format!("reading {}", a.model.display()))?;
    let fs = assemble_feature_matrix(&grid, &model)?;
    write_features(&a.features, &fs.keys, &fs.matrix)
        .with_context(|| format!("writing {}", a.features.display()))?;
    println!(
        "extracted {} feature vectors of length {}",
        fs.matrix.rows(),
        fs.matrix.cols()
    );
    Ok(())
}

fn grid_extent(keys: &[(usize, usize)]) -> (usize, usize) {
    keys.iter()
        .fold((0, 0), |(il, xl), &(i, x)| (il.max(i + 1), xl.max(x + 1)))
}

fn cluster_cmd(cfg: &RunConfig, a: &ClusterArgs) -> Result<()> {
    let (keys, matrix) =
        read_features(&a.features).with_context(|| format!("reading {}", a.features.display()))?;
    let res = cluster(&matrix, &cfg.cluster_config())?;
    let (inlines, crosslines) = grid_extent(&keys);
    let map = FaciesMap::from_keyed_labels(inlines, crosslines, &keys, &res.labels)?;
    write_labels(&a.labels, &map)
        .with_context(|| format!("writing {}", a.labels.display()))?;
    println!(
        "clustered {} vectors into {} classes, final objective {:.6}",
        matrix.rows(),
        cfg.clusters,
        res.objective.last().copied().unwrap_or(f64::NAN)
    );
    Ok(())
}

fn map_cmd(a: &MapArgs) -> Result<()> {
    let map =
        read_labels(&a.labels).with_context(|| format!("reading {}", a.labels.display()))?;
    write_map(&a.out, &map).with_context(|| format!("writing {}", a.out.display()))?;
    println!(
        "rendered {}x{} map to {}",
        map.inlines,
        map.crosslines,
        a.out.display()
    );
    Ok(())
}

fn baseline(cfg: &RunConfig, a: &BaselineArgs) -> Result<()> {
    let grid = standardized_grid(cfg, &a.cube)?;
    let (keys, matrix, what) = match a.kind {
        BaselineKind::Pca => {
            let fs = flatten_windows(&grid)?;
            let model = pca_fit(&fs.matrix, cfg.pca_variance)?;
            let proj = pca_transform(&model, &fs.matrix)?;
            let what = format!(
                "pca retained {} of {} dimensions",
                model.retained,
                fs.matrix.cols()
            );
            (fs.keys, proj, what)
        }
        BaselineKind::Poststack => {
            let (fs, _constant) = poststack_features(&grid)?;
            let what = format!("poststack traces of {} samples", fs.matrix.cols());
            (fs.keys, fs.matrix, what)
        }
    };
    let res = cluster(&matrix, &cfg.cluster_config())?;
    let (inlines, crosslines) = grid_extent(&keys);
    let map = FaciesMap::from_keyed_labels(inlines, crosslines, &keys, &res.labels)?;
    write_labels(&a.labels, &map)
        .with_context(|| format!("writing {}", a.labels.display()))?;
    println!("{what}; labels written to {}", a.labels.display());
    Ok(())
}

fn score(a: &ScoreArgs) -> Result<()> {
    let pred = read_labels(&a.pred).with_context(|| format!("reading {}", a.pred.display()))?;
    let truth =
        read_labels(&a.truth).with_context(|| format!("reading {}", a.truth.display()))?;
    let report = score_map(&pred, &truth)?;
    println!("accuracy {:.4}", report.accuracy);
    for (class, recall) in report.per_class_recall.iter().enumerate() {
        println!("class {class} recall {recall:.4}");
    }
    Ok(())
}

fn gradcheck_cmd(cfg: &RunConfig, a: &GradcheckArgs) -> Result<()> {
    let gc = GradCheckConfig {
        trials: a.trials,
        seed: cfg.seed,
        ..GradCheckConfig::default()
    };
    let report = gradcheck::run(&gc)?;
    println!(
        "{} configurations, {} gradient components, max relative error {:.2e}",
        report.trials, report.components, report.max_rel_error
    );
    ensure!(
        report.passed(),
        "{} gradient components exceeded tolerance",
        report.failures
    );
    Ok(())
}
