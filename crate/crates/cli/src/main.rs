use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use xview::pipeline::{
    generate_synthetic_dataset, load_ground_truth_map, load_manifest, materialize_proxy, read_embeddings,
    run_stage, write_embeddings, Checkpoint, EmbedView, Stage, StageConfig, StageModel, SyntheticSpec,
};
use xview::retrieval::{distance_matrix, geolocalize_curve, ground_truth_indices, write_geo_csv, RecallReport};
use xview::synthproxy::{canny, read_rgb, to_grayscale, write_edge_map, CannyParams, ProxyConfig};
use xview::{Error, Result};

/// Cross-view ground-to-aerial image matching.
#[derive(Parser, Debug)]
#[command(name = "xview", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate the synthetic paired benchmark.
    GenData(GenData),
    /// Run the Canny detector on one image.
    Canny(CannyCmd),
    /// Embed a manifest with a checkpoint, or materialize synthesized views.
    Embed(Embed),
    /// Train one stage.
    Train(Train),
    /// Recall@K of query embeddings against a gallery.
    Eval(Eval),
    /// Geo-localization accuracy at distance thresholds.
    Localize(Localize),
    /// Describe a checkpoint.
    Info(Info),
}

#[derive(Args, Debug)]
struct GenData {
    #[arg(long)]
    clusters: usize,
    #[arg(long)]
    per_cluster: usize,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = SyntheticSpec::default().complementary_dims)]
    complementary_dims: usize,
    #[arg(long, default_value_t = SyntheticSpec::default().test_per_cluster)]
    test_per_cluster: usize,
    #[arg(long, default_value_t = SyntheticSpec::default().noise)]
    noise: f64,
    #[arg(long, default_value_t = SyntheticSpec::default().latent_dim)]
    latent_dim: usize,
}

#[derive(Args, Debug)]
struct CannyCmd {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = CannyParams::default().sigma)]
    sigma: f64,
    #[arg(long, default_value_t = CannyParams::default().low)]
    low: f64,
    #[arg(long, default_value_t = CannyParams::default().high)]
    high: f64,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum EmbedStage {
    Encoder,
    Proxy,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ViewArg {
    Query,
    Reference,
    Synth,
}

#[derive(Args, Debug)]
struct Embed {
    #[arg(long, value_enum)]
    stage: EmbedStage,
    /// Trained checkpoint; required for `--stage encoder`.
    #[arg(long)]
    ckpt: Option<PathBuf>,
    #[arg(long)]
    manifest: PathBuf,
    /// Embedding file, or the output manifest for `--stage proxy`.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "query")]
    view: ViewArg,
    #[arg(long)]
    with_edgemap: bool,
    /// Config file whose `[proxy]` section sets the proxy parameters.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    fidelity: Option<f64>,
    #[arg(long)]
    noise_std: Option<f64>,
    #[arg(long)]
    proxy_seed: Option<u64>,
    /// Where synthesized images go; defaults to `synth/` next to `--out`.
    #[arg(long)]
    synth_dir: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct Train {
    #[arg(long)]
    stage: String,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    warm_start: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Metrics CSV; defaults to `<out>.steps.csv`.
    #[arg(long)]
    log: Option<PathBuf>,
    /// Treat the aerial column as the query view.
    #[arg(long)]
    swap_views: bool,
}

#[derive(Args, Debug)]
struct Eval {
    #[arg(long)]
    query: PathBuf,
    #[arg(long)]
    gallery: PathBuf,
    /// `query,gallery` CSV; without it queries match the gallery row with the same id.
    #[arg(long)]
    gt: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "1,5,10")]
    k: Vec<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct Localize {
    #[arg(long)]
    query: PathBuf,
    #[arg(long)]
    gallery: PathBuf,
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "5,10,25,50,100")]
    thresholds: Vec<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct Info {
    #[arg(long)]
    ckpt: PathBuf,
}

fn gen_data(a: GenData) -> Result<()> {
    let spec = SyntheticSpec {
        clusters: a.clusters,
        per_cluster: a.per_cluster,
        test_per_cluster: a.test_per_cluster,
        complementary_dims: a.complementary_dims,
        noise: a.noise,
        latent_dim: a.latent_dim,
        seed: a.seed,
        ..SyntheticSpec::default()
    };
    let ds = generate_synthetic_dataset(&spec, &a.out)?;
    println!(
        "wrote {} train and {} test pairs to {}",
        ds.train.len(),
        ds.test.len(),
        a.out.display()
    );
    Ok(())
}

fn canny_cmd(a: CannyCmd) -> Result<()> {
    let params = CannyParams { sigma: a.sigma, low: a.low, high: a.high };
    let edges = canny(&to_grayscale(&read_rgb(&a.input)?)?, &params)?;
    write_edge_map(&a.out, &edges)?;
    println!("{} edge pixels", edges.count());
    Ok(())
}

fn embed(a: Embed) -> Result<()> {
    let manifest = load_manifest(&a.manifest)?;
    match a.stage {
        EmbedStage::Proxy => {
            let mut cfg = match &a.config {
                Some(p) => StageConfig::load(p, Stage::BaselineSynth)?.proxy,
                None => ProxyConfig::default(),
            };
            cfg.fidelity = a.fidelity.unwrap_or(cfg.fidelity);
            cfg.noise_std = a.noise_std.unwrap_or(cfg.noise_std);
            cfg.seed = a.proxy_seed.unwrap_or(cfg.seed);
            let dir = a
                .synth_dir
                .unwrap_or_else(|| a.out.parent().unwrap_or(Path::new(".")).join("synth"));
            let out = materialize_proxy(&manifest, &cfg, &dir)?;
            out.write(&a.out)?;
            println!("synthesized {} views into {}", out.len(), dir.display());
        }
        EmbedStage::Encoder => {
            let path = a
                .ckpt
                .ok_or_else(|| Error::Config("`embed --stage encoder` needs --ckpt".into()))?;
            let model = StageModel::from_checkpoint(&Checkpoint::load(&path)?)?;
            if a.with_edgemap && !model.uses_edgemap() {
                return Err(Error::Config(format!(
                    "{} was trained without the edge-map channel",
                    path.display()
                )));
            }
            let canny = &model.resolved.config.canny;
            let views = manifest.load_views(model.uses_edgemap().then_some(canny))?;
            let which = match a.view {
                ViewArg::Query => EmbedView::Query,
                ViewArg::Reference => EmbedView::Reference,
                ViewArg::Synth => EmbedView::Synth,
            };
            let m = model.embed(&views, which)?;
            write_embeddings(&a.out, &m)?;
            println!("wrote {}×{} embeddings to {}", m.len(), m.dim(), a.out.display());
        }
    }
    Ok(())
}

fn train(a: Train) -> Result<()> {
    let stage: Stage = a.stage.parse()?;
    let required = match stage {
        Stage::Joint => Some(Stage::BaselineGa),
        Stage::Fusion => Some(Stage::Joint),
        _ => None,
    };
    if let (Some(req), None) = (required, &a.warm_start) {
        return Err(Error::Stage(format!("`train --stage {stage}` requires --warm-start with a {req} checkpoint")));
    }
    let mut cfg = match &a.config {
        Some(p) => StageConfig::load(p, stage)?,
        None => StageConfig::for_stage(stage),
    };
    cfg.apply_env_seed()?;
    let warm = a.warm_start.as_ref().map(Checkpoint::load).transpose()?;
    let mut manifest = load_manifest(&a.manifest)?;
    if a.swap_views {
        manifest = manifest.swap_views();
    }
    info!("training {stage} on {} pairs, seed {}", manifest.len(), cfg.seed);
    let out = run_stage(&cfg, &manifest, warm.as_ref())?;
    out.checkpoint.save(&a.out)?;
    let log = a.log.unwrap_or_else(|| suffixed(&a.out, "steps.csv"));
    out.write_log(&log)?;
    if !out.recall_log.is_empty() {
        out.write_recall_log(suffixed(&a.out, "recall.csv"))?;
    }
    match (out.initial_loss(), out.final_loss()) {
        (Some(l0), Some(l1)) => println!("{stage}: {} steps, loss {l0:.4} -> {l1:.4}", out.log.len()),
        _ => println!("{stage}: 0 steps"),
    }
    Ok(())
}

fn suffixed(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".");
    s.push(suffix);
    PathBuf::from(s)
}

fn eval(a: Eval) -> Result<()> {
    let q = read_embeddings(&a.query)?;
    let g = read_embeddings(&a.gallery)?;
    let map = a.gt.as_ref().map(load_ground_truth_map).transpose()?;
    let gt = ground_truth_indices(&q, &g, map.as_ref())?;
    let report = RecallReport::compute(&distance_matrix(&q, &g)?, &gt, &a.k)?;
    println!("{:>8}  recall", "K");
    for (k, r) in &report.recall_at {
        println!("{k:>8}  {:.4}", r);
    }
    println!("{:>8}  {:.4}", "top-1%", report.top_one_percent);
    report.write_csv(&a.out)
}

fn localize(a: Localize) -> Result<()> {
    let q = read_embeddings(&a.query)?;
    let g = read_embeddings(&a.gallery)?;
    let geo = load_manifest(&a.manifest)?.geo_samples();
    if geo.is_empty() {
        return Err(Error::Data(format!("{} has no coordinates", a.manifest.display())));
    }
    let curve = geolocalize_curve(&distance_matrix(&q, &g)?, q.ids(), g.ids(), &geo, &a.thresholds)?;
    println!("{:>12}  accuracy", "threshold_m");
    for (t, acc) in &curve {
        println!("{t:>12}  {acc:.4}");
    }
    write_geo_csv(&a.out, &curve)
}

fn info_cmd(a: Info) -> Result<()> {
    let ck = Checkpoint::load(&a.ckpt)?;
    let mut text = format!(
        "stage    {}\nseed     {}\ndigest   {}\ntensors  {} ({} scalars)\n",
        ck.stage,
        ck.seed,
        ck.digest_hex(),
        ck.tensors.len(),
        ck.scalar_count()
    );
    for (name, t) in &ck.tensors {
        text += &format!("  {name:<28} {:?}\n", t.shape());
    }
    text += &format!("--- config ---\n{}\n", ck.config_text.trim_end());
    // a closed pipe (`| head`) is not an error
    let _ = std::io::stdout().lock().write_all(text.as_bytes());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenData(a) => gen_data(a),
        Command::Canny(a) => canny_cmd(a),
        Command::Embed(a) => embed(a),
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::Localize(a) => localize(a),
        Command::Info(a) => info_cmd(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprint!("{e}");
            return ExitCode::from(1);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
