use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use dann_amc::data::{load_csv, CsvOptions, Dataset, StandardScaler};
use dann_amc::embed::{render_scatter, export_plot_data, stratified_subsample, tsne, Embedding2D};
use dann_amc::experiment::config::DataSource;
use dann_amc::experiment::run::{CellMetrics, MANIFEST_FILE, METRICS_FILE};
use dann_amc::experiment::{
    run_experiment, simulate_all, write_report, CellStatus, ExperimentConfig, Manifest, RunOptions,
};
use dann_amc::models::AnyModel;
use dann_amc::nn::{Checkpoint, Matrix};
use dann_amc::{Band, Direction, Domain, Error};

/// Domain-adversarial modulation classification experiments.
#[derive(Debug, Parser)]
#[command(name = "dann-amc", version, about)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Global {
    /// TOML experiment configuration; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed override: the training seed for `run`, the generator seed for
    /// `simulate` and the t-SNE seed for `embed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output root.
    #[arg(long, global = true, env = "DANN_AMC_OUT")]
    out: Option<PathBuf>,
    /// Single-threaded, with wall-clock times left out of all artifacts.
    #[arg(long, global = true)]
    deterministic: bool,
    /// Restrict to these bands (repeatable), e.g. 100MHz.
    #[arg(long, global = true)]
    band: Vec<Band>,
    /// Restrict to these directions (repeatable).
    #[arg(long, global = true)]
    direction: Vec<Direction>,
    /// Cells run concurrently; 0 means one per CPU.
    #[arg(long, global = true)]
    jobs: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate per-band feature CSVs for both channel domains.
    Simulate,
    /// Train and evaluate every (band, direction, seed) cell.
    Run,
    /// Render the report tables from completed cells.
    Report {
        /// Run root; defaults to the output root.
        root: Option<PathBuf>,
    },
    /// t-SNE of feature CSVs, raw or through a trained model.
    Embed(EmbedArgs),
    /// Print a run manifest or a checkpoint summary.
    Inspect {
        /// Cell directory, manifest.json or checkpoint file.
        path: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModelChoice {
    Baseline,
    Dann,
}

#[derive(Debug, Args)]
struct EmbedArgs {
    /// Rayleigh-domain feature CSV.
    #[arg(long)]
    rayleigh: Option<PathBuf>,
    /// Rician-domain feature CSV.
    #[arg(long)]
    rician: Option<PathBuf>,
    /// Cell directory whose scaler and checkpoint are used; without it the
    /// standardized raw features are embedded.
    #[arg(long)]
    run: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "dann")]
    model: ModelChoice,
    /// Rows kept per (class, domain) pair.
    #[arg(long)]
    per_group: Option<usize>,
    /// Directory for embedding.csv and embedding.svg.
    #[arg(long, short, default_value = ".")]
    output: PathBuf,
}

/// Failure classes mapped to exit codes.
enum Failure {
    Usage(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) | Error::InvalidArgument(_) => Failure::Usage(e.to_string()),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

fn load_config(g: &Global) -> Result<ExperimentConfig, Failure> {
    let mut cfg = match &g.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(out) = &g.out {
        cfg.experiment.out_dir = out.clone();
    }
    if !g.band.is_empty() {
        cfg.experiment.bands = g.band.clone();
    }
    if !g.direction.is_empty() {
        cfg.experiment.directions = g.direction.clone();
    }
    if let Some(jobs) = g.jobs {
        cfg.experiment.jobs = jobs;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn cmd_simulate(g: &Global) -> Result<(), Failure> {
    let mut cfg = load_config(g)?;
    if let Some(seed) = g.seed {
        cfg.signal.seed = seed;
    }
    if cfg.data.source == DataSource::Csv {
        log::warn!("data source is csv; simulating anyway into {}", cfg.data_dir().display());
    }
    let paths = simulate_all(&cfg, &cfg.data_dir())?;
    for p in paths {
        println!("{}", p.display());
    }
    Ok(())
}

fn cmd_run(g: &Global) -> Result<(), Failure> {
    let mut cfg = load_config(g)?;
    if let Some(seed) = g.seed {
        cfg.experiment.seeds = vec![seed];
    }
    let rows = run_experiment(
        &cfg,
        RunOptions {
            deterministic: g.deterministic,
        },
    )?;
    let mut failed = 0;
    for r in &rows {
        let head = format!("{:<7} {:<19} seed {:<4}", r.band.tag(), r.direction.tag(), r.seed);
        match (&r.status, &r.metrics) {
            (CellStatus::Ok, Some(m)) => println!(
                "{head} baseline {:6.2}%  DANN {:6.2}%  DCA {:.4} -> {:.4}",
                m.baseline.overall_acc, m.dann.overall_acc, m.dca_before, m.dca_after
            ),
            _ => {
                failed += 1;
                println!("{head} FAILED: {}", r.error.as_deref().unwrap_or("unknown error"));
            }
        }
    }
    println!(
        "{} of {} cells completed; summary in {}",
        rows.len() - failed,
        rows.len(),
        cfg.experiment.out_dir.join("summary.csv").display()
    );
    if failed > 0 {
        return Err(Failure::Runtime(format!("{failed} cell(s) failed")));
    }
    Ok(())
}

fn cmd_report(g: &Global, root: Option<PathBuf>) -> Result<(), Failure> {
    let root = match root {
        Some(r) => r,
        None => load_config(g)?.experiment.out_dir,
    };
    let (report, written) = write_report(&root)?;
    print!("{}", report.to_text());
    println!("\n{} cells; tables written to {}", report.cells, root.join("report").display());
    log::debug!("wrote {} files", written.len());
    Ok(())
}

fn pooled(parts: &[(Domain, Dataset)]) -> Result<(Matrix, Vec<usize>, Vec<Domain>), Error> {
    let mut x = parts[0].1.features.clone();
    for (_, ds) in &parts[1..] {
        x = x.vstack(&ds.features)?;
    }
    let labels = parts.iter().flat_map(|(_, ds)| ds.labels.iter().copied()).collect();
    let domains = parts
        .iter()
        .flat_map(|(d, ds)| std::iter::repeat_n(*d, ds.len()))
        .collect();
    Ok((x, labels, domains))
}

fn cmd_embed(g: &Global, args: &EmbedArgs) -> Result<(), Failure> {
    let cfg = load_config(g)?;
    let mut parts = Vec::new();
    for (domain, path) in [(Domain::Rayleigh, &args.rayleigh), (Domain::Rician, &args.rician)] {
        if let Some(path) = path {
            let mut opts = CsvOptions::new(domain);
            opts.label_column = cfg.data.label_column.clone();
            parts.push((domain, load_csv(path, &opts)?));
        }
    }
    if parts.is_empty() {
        return Err(Failure::Usage("embed needs --rayleigh and/or --rician".into()));
    }
    let (x, labels, domains) = pooled(&parts)?;
    let per_group = args.per_group.unwrap_or(cfg.embed.per_group);
    let mut tsne_cfg = cfg.embed.tsne.clone();
    if let Some(seed) = g.seed {
        tsne_cfg.seed = seed;
    }
    let picked = stratified_subsample(&labels, &domains, per_group, tsne_cfg.seed);
    let x = x.select_rows(&picked);

    let (features, what) = match &args.run {
        Some(dir) => {
            let manifest = Manifest::load(dir.join(MANIFEST_FILE))?;
            let name = match args.model {
                ModelChoice::Baseline => "baseline",
                ModelChoice::Dann => "dann",
            };
            let mut model = AnyModel::from_checkpoint(Checkpoint::load(dir.join(format!("{name}.ckpt.json")))?)?;
            let scaled = manifest.scaler.transform_matrix(&x)?;
            (model.classifier().extract_features(&scaled)?, format!("{name} representation"))
        }
        None => {
            let ds = Dataset::unnamed(x.clone(), picked.iter().map(|&i| labels[i]).collect(), parts[0].0)?;
            let mut scaler = StandardScaler::default();
            scaler.fit(&ds)?;
            (scaler.transform_matrix(&x)?, "standardized features".to_string())
        }
    };
    let limit = (features.rows() as f64 - 1.0) / 3.0;
    if tsne_cfg.perplexity >= limit {
        return Err(Failure::Usage(format!(
            "{} rows allow a perplexity below {limit:.1}; set [embed.tsne] perplexity",
            features.rows()
        )));
    }
    let out = tsne(&features, &tsne_cfg)?;
    let emb = Embedding2D::new(
        out.points,
        picked.iter().map(|&i| labels[i]).collect(),
        picked.iter().map(|&i| domains[i]).collect(),
        out.kl_trace,
    )?;
    fs::create_dir_all(&args.output).map_err(|e| Error::file(&args.output, e))?;
    let csv = args.output.join("embedding.csv");
    let svg = args.output.join("embedding.svg");
    export_plot_data(&emb, &csv)?;
    render_scatter(&emb, &format!("t-SNE of {what}"), &svg)?;
    println!("{}\n{}", csv.display(), svg.display());
    Ok(())
}

fn print_manifest(dir: &Path, m: &Manifest) {
    println!("cell        {} {} seed {}", m.band.display_name(), m.direction.display_name(), m.seed);
    println!("config      {}", m.config_fingerprint);
    for (role, f) in [("source", &m.source_data), ("target", &m.target_data)] {
        println!("{role:<11} {} ({} rows, sha256 {})", f.path.display(), f.rows, f.sha256);
    }
    let s = &m.splits;
    println!(
        "splits      source {}/{} train/val, target {}/{} unlabeled/eval",
        s.source_train, s.source_val, s.target_unlabeled, s.target_eval
    );
    println!(
        "stopping    {:?}; baseline monitored {:?} (best epoch {}), DANN {:?} (best epoch {})",
        m.early_stop, m.baseline_monitor, m.baseline_best_epoch, m.dann_monitor, m.dann_best_epoch
    );
    if m.dann_fell_back {
        println!("note        DANN fell back to label-only training");
    }
    if let Some(t) = m.wall_seconds {
        println!("wall time   {t:.1} s");
    }
    if let Ok(bytes) = fs::read(dir.join(METRICS_FILE)) {
        if let Ok(c) = serde_json::from_slice::<CellMetrics>(&bytes) {
            println!(
                "accuracy    baseline {:.2}% (class avg {:.2}%), DANN {:.2}% (class avg {:.2}%)",
                c.baseline.overall_acc, c.baseline.avg_acc, c.dann.overall_acc, c.dann.avg_acc
            );
            println!("DCA         {:.4} before, {:.4} after", c.dca_before, c.dca_after);
        }
    }
    println!("files       {}", m.files.join(", "));
}

fn cmd_inspect(path: &Path) -> Result<(), Failure> {
    let file = if path.is_dir() { path.join(MANIFEST_FILE) } else { path.to_path_buf() };
    let bytes = fs::read(&file).map_err(|e| Error::file(&file, e))?;
    let value: serde_json::Value = serde_json::from_slice(&bytes).map_err(Error::from)?;
    match value.get("format").and_then(|f| f.as_str()) {
        Some(dann_amc::experiment::run::MANIFEST_FORMAT) => {
            let m = Manifest::load(&file)?;
            print_manifest(file.parent().unwrap_or(Path::new(".")), &m);
        }
        Some(dann_amc::nn::checkpoint::CHECKPOINT_FORMAT) => {
            let mut ckpt = Checkpoint::from_bytes(&bytes)?;
            let a = ckpt.architecture.clone();
            println!("model       {} with {} inputs", a.kind, a.input_dim);
            if let Some(rate) = a.dropout_rate {
                println!("dropout     {rate}");
            }
            for s in &mut ckpt.stacks {
                println!("stack       {} ({} parameters)", s.name, s.stack.num_params());
            }
            if !a.feature_names.is_empty() {
                println!("features    {}", a.feature_names.join(", "));
            }
        }
        _ => {
            return Err(Failure::Usage(format!(
                "{} is neither a run manifest nor a checkpoint",
                file.display()
            )))
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let g = &cli.global;
    let result = match &cli.command {
        Command::Simulate => cmd_simulate(g),
        Command::Run => cmd_run(g),
        Command::Report { root } => cmd_report(g, root.clone()),
        Command::Embed(args) => cmd_embed(g, args),
        Command::Inspect { path } => cmd_inspect(path),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}
