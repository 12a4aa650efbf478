//! `ringfinder` command line.
//!
//! Exit status: 0 on success, 1 on a usage error, 2 when the input data is
//! bad, 3 on an internal failure.

use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use ringfinder::clustering::{read_clusters, write_clusters};
use ringfinder::evaluation::{evaluate, generate, hard_link_baseline, read_truth, transform_stats, write_truth};
use ringfinder::graph::{
    read_hard_links, read_risk, read_soft_links, read_transformed, transform, write_hard_links, write_risk,
    write_soft_links, write_transformed, GraphBuilder, HeterogeneousGraph,
};
use ringfinder::incremental::{read_events, PipelineState, WeightView};
use ringfinder::pipeline::{
    cluster_stage, embed_stage, rank_stage, run_pipeline, transform_stage, PipelineConfig, CLUSTERS_FILE,
    TRANSFORMED_FILE,
};
use ringfinder::{Error, Result};

#[derive(Debug, Parser)]
#[command(name = "ringfinder", version, about = "Fraud-ring discovery on account graphs")]
struct Cli {
    /// Random seed for embedding training and data generation.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// TOML config with [embedding], [clustering], [incremental], [risk], [synth] and [paths].
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, clap::Args)]
struct LinkInputs {
    /// Hard-link file: `u TAB kind TAB v`.
    #[arg(long)]
    hard: Option<PathBuf>,
    /// Soft-link file: `u TAB kind TAB v [TAB weight [TAB day]]`.
    #[arg(long)]
    soft: Option<PathBuf>,
    /// Risk indicators: `token TAB value`.
    #[arg(long)]
    risk: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Format {
    Text,
    Kv,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Weights {
    Effective,
    Undecayed,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Merge hard-link components into super-nodes and write the weighted graph.
    Transform {
        #[command(flatten)]
        inputs: LinkInputs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train LINE embeddings on a transformed graph.
    Embed {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        dim: Option<usize>,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Run HDBSCAN on an embedding; with --graph and --report, also rank the clusters.
    Cluster {
        #[arg(long)]
        embedding: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        min_cluster_size: Option<usize>,
        #[arg(long)]
        min_samples: Option<usize>,
        #[arg(long, requires = "report")]
        graph: Option<PathBuf>,
        #[arg(long, requires = "graph")]
        report: Option<PathBuf>,
        #[arg(long, requires = "report")]
        risk: Option<PathBuf>,
        #[arg(long, requires = "report")]
        scores: Option<PathBuf>,
    },
    /// Run every stage and write all artifacts plus the ranked report.
    Pipeline {
        #[command(flatten)]
        inputs: LinkInputs,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Write a synthetic planted-ring dataset and its ground truth.
    Generate {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        n_legit: Option<usize>,
        #[arg(long)]
        n_rings: Option<usize>,
    },
    /// Score a clustering against ground truth.
    Evaluate {
        #[arg(long)]
        graph: PathBuf,
        /// Super-node labels; omit with --baseline.
        #[arg(long, required_unless_present = "baseline")]
        clusters: Option<PathBuf>,
        #[arg(long)]
        truth: PathBuf,
        /// Score the hard-link-only baseline instead.
        #[arg(long)]
        baseline: bool,
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
    },
    /// Apply an update log on top of an optional starting graph, then refresh.
    Replay {
        #[command(flatten)]
        inputs: LinkInputs,
        #[arg(long)]
        events: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        /// Rerun embedding and clustering whenever this many days have passed.
        #[arg(long)]
        refresh_every: Option<f64>,
        #[arg(long, value_enum, default_value = "effective")]
        weights: Weights,
    },
    /// Report graph size before and after the transform.
    Stats {
        #[command(flatten)]
        inputs: LinkInputs,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match std::panic::catch_unwind(|| run(cli)) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_data_error() { 2 } else { 3 })
        }
        Err(_) => ExitCode::from(3),
    }
}

fn load_config(cli: &Cli) -> Result<PipelineConfig> {
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = Some(seed);
        cfg.synth.seed = seed;
    }
    Ok(cfg)
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| file_error(path, e.into()))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| file_error(dir, e.into()))?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| file_error(path, e.into()))
}

fn file_error(path: &Path, source: Error) -> Error {
    Error::File {
        path: path.to_owned(),
        source: Box::new(source),
    }
}

fn with_file<T>(path: &Path, r: Result<T>) -> Result<T> {
    r.map_err(|e| file_error(path, e))
}

/// Command-line inputs win over the config's `[paths]`.
fn resolve(inputs: &LinkInputs, cfg: &PipelineConfig) -> (Option<PathBuf>, Option<PathBuf>, Option<PathBuf>) {
    let p = &cfg.paths;
    (
        inputs.hard.clone().or_else(|| p.hard_links.clone()),
        inputs.soft.clone().or_else(|| p.soft_links.clone()),
        inputs.risk.clone().or_else(|| p.risk.clone()),
    )
}

fn read_graph(inputs: &LinkInputs, cfg: &PipelineConfig) -> Result<HeterogeneousGraph> {
    let (hard, soft, risk) = resolve(inputs, cfg);
    let mut b = GraphBuilder::new();
    if let Some(p) = &hard {
        with_file(p, read_hard_links(open(p)?, &mut b))?;
    }
    if let Some(p) = &soft {
        with_file(p, read_soft_links(open(p)?, &mut b))?;
    }
    if let Some(p) = &risk {
        with_file(p, read_risk(open(p)?, &mut b))?;
    }
    Ok(b.build().0)
}

fn require_links(hard: &Option<PathBuf>, soft: &Option<PathBuf>) -> Result<()> {
    if hard.is_none() && soft.is_none() {
        return Err(Error::Config(
            "give --hard and/or --soft (or set them under [paths])".into(),
        ));
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = load_config(&cli)?;
    match cli.command {
        Command::Transform { inputs, out } => {
            let (hard, soft, risk) = resolve(&inputs, &cfg);
            require_links(&hard, &soft)?;
            let (g, tg) = transform_stage(hard.as_deref(), soft.as_deref(), risk.as_deref(), &out)?;
            eprintln!(
                "{} accounts -> {} super-nodes, {} edges",
                g.num_accounts(),
                tg.num_nodes(),
                tg.num_edges()
            );
        }
        Command::Embed {
            graph,
            out,
            dim,
            epochs,
        } => {
            cfg.embedding.dim = dim.unwrap_or(cfg.embedding.dim);
            cfg.embedding.epochs = epochs.unwrap_or(cfg.embedding.epochs);
            let emb = embed_stage(&graph, &out, &cfg.embedding_config())?;
            eprintln!("{} vectors of dimension {}", emb.rows(), emb.dim());
        }
        Command::Cluster {
            embedding,
            out,
            min_cluster_size,
            min_samples,
            graph,
            report,
            risk,
            scores,
        } => {
            if let Some(m) = min_cluster_size {
                cfg.clustering.min_cluster_size = m;
            }
            if min_samples.is_some() {
                cfg.clustering.min_samples = min_samples;
            }
            let a = cluster_stage(&embedding, &out, &cfg.clustering)?;
            eprintln!("{} clusters, {} noise", a.num_clusters(), a.noise_count());
            if let (Some(graph), Some(report)) = (graph, report) {
                let risk = risk.or(cfg.paths.risk.clone());
                rank_stage(
                    &graph,
                    &embedding,
                    &out,
                    risk.as_deref(),
                    &cfg.risk,
                    &report,
                    scores.as_deref(),
                )?;
            }
        }
        Command::Pipeline { inputs, out_dir } => {
            let (hard, soft, risk) = resolve(&inputs, &cfg);
            require_links(&hard, &soft)?;
            cfg.paths.hard_links = hard;
            cfg.paths.soft_links = soft;
            cfg.paths.risk = risk;
            cfg.paths.out_dir = out_dir.or(cfg.paths.out_dir);
            let a = run_pipeline(&cfg)?;
            eprintln!("{} ranked clusters -> {}", a.ranked.len(), a.report.display());
        }
        Command::Generate { out, n_legit, n_rings } => {
            let mut synth = cfg.synth.clone();
            synth.n_legit = n_legit.unwrap_or(synth.n_legit);
            synth.n_rings = n_rings.unwrap_or(synth.n_rings);
            let (g, truth) = generate(&synth)?;
            fs::create_dir_all(&out).map_err(|e| file_error(&out, e.into()))?;
            let write = |name: &str, f: &dyn Fn(&mut BufWriter<File>) -> Result<()>| -> Result<()> {
                let path = out.join(name);
                let mut w = create(&path)?;
                with_file(&path, f(&mut w))?;
                w.flush().map_err(|e| file_error(&path, e.into()))
            };
            write("hard_links.tsv", &|w| write_hard_links(w, &g))?;
            write("soft_links.tsv", &|w| write_soft_links(w, &g))?;
            write("risk.tsv", &|w| write_risk(w, &g))?;
            write("truth.tsv", &|w| write_truth(w, &g.tokens, &truth))?;
            eprintln!(
                "{} accounts, {} fraud in {} rings",
                g.num_accounts(),
                truth.fraud_count(),
                synth.n_rings
            );
        }
        Command::Evaluate {
            graph,
            clusters,
            truth,
            baseline,
            format,
        } => {
            let (tokens, tg) = with_file(&graph, read_transformed(open(&graph)?))?;
            let truth = with_file(&truth, read_truth(open(&truth)?, &tokens))?;
            let labels = match clusters {
                Some(p) if !baseline => with_file(&p, read_clusters(open(&p)?))?,
                _ => hard_link_baseline(&tg),
            };
            if labels.len() != tg.num_nodes() {
                return Err(Error::DimensionMismatch {
                    expected: tg.num_nodes(),
                    found: labels.len(),
                });
            }
            let m = evaluate(&labels, &tg.membership, &truth);
            let text = match format {
                Format::Text => m.to_text(),
                Format::Kv => m.to_kv(),
            };
            io::stdout().write_all(text.as_bytes())?;
        }
        Command::Replay {
            inputs,
            events,
            out_dir,
            refresh_every,
            weights,
        } => replay(&cfg, &inputs, &events, &out_dir, refresh_every, weights)?,
        Command::Stats { inputs } => {
            let (hard, soft, _) = resolve(&inputs, &cfg);
            require_links(&hard, &soft)?;
            let g = read_graph(&inputs, &cfg)?;
            let stats = transform_stats(&g, &transform(&g));
            io::stdout().write_all(stats.to_string().as_bytes())?;
        }
    }
    Ok(())
}

fn replay(
    cfg: &PipelineConfig,
    inputs: &LinkInputs,
    events: &Path,
    out_dir: &Path,
    refresh_every: Option<f64>,
    weights: Weights,
) -> Result<()> {
    if refresh_every.is_some_and(|d| d.is_nan() || d <= 0.0) {
        return Err(Error::Config("--refresh-every must be positive".into()));
    }
    let g = read_graph(inputs, cfg)?;
    let log = with_file(events, read_events(open(events)?))?;
    let mut state = PipelineState::from_graph(&g, cfg.incremental.clone(), cfg.embedding_config(), cfg.clustering)?;
    let mut last_refresh = state.now();
    for event in &log {
        if let Some(every) = refresh_every {
            if event.day - last_refresh >= every {
                state.full_refresh()?;
                last_refresh = event.day;
            }
        }
        state.apply_event(event).map_err(|e| file_error(events, e))?;
    }
    state.full_refresh()?;
    let view = match weights {
        Weights::Effective => WeightView::Effective,
        Weights::Undecayed => WeightView::Undecayed,
    };
    let tg = state.transformed(view);
    fs::create_dir_all(out_dir).map_err(|e| file_error(out_dir, e.into()))?;
    let path = out_dir.join(TRANSFORMED_FILE);
    let mut w = create(&path)?;
    with_file(&path, write_transformed(&mut w, state.tokens(), &tg))?;
    w.flush()?;
    let path = out_dir.join(CLUSTERS_FILE);
    let mut w = create(&path)?;
    with_file(&path, write_clusters(&mut w, &state.labels()))?;
    w.flush()?;
    eprintln!(
        "{} events, {} accounts, {} super-nodes after {} refreshes",
        log.len(),
        state.num_accounts(),
        state.num_super_nodes(),
        state.refresh_count()
    );
    Ok(())
}
