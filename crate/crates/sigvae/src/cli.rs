//! `sigvae` subcommands.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use sigvae_core::config::{DecoderKind, EncoderKind};
use sigvae_core::graph::split_edges;

use crate::checkpoint::Checkpoint;
use crate::config::RunConfig;
use crate::datasets::load_dataset;
use crate::io::{self, Loaded};
use crate::pipeline::{self, epoch_log_line, EmbedField, MetricsRecord, EPOCH_LOG_HEADER};
use crate::splitfile::{read_split, write_split, SplitFile};

#[derive(Debug, Parser)]
#[command(name = "sigvae", version, about = "Semi-implicit graph VAEs: split, train, evaluate, generate, embed")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a train/validation/test edge split.
    Split(SplitArgs),
    /// Train a model; writes checkpoint.bin, epochs.tsv, metrics.json and config.toml.
    Train(TrainArgs),
    /// Score a checkpoint on the test pairs of a split.
    Eval(EvalArgs),
    /// Sample graphs from a checkpoint and compare their statistics.
    Generate(GenerateArgs),
    /// Export per-node posterior draws as a tab-separated table.
    Embed(EmbedArgs),
}

#[derive(Debug, Args)]
pub struct ConfigArgs {
    /// TOML run config; omitted keys take their defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Dataset spec, overriding `[data].dataset`.
    #[arg(long)]
    pub dataset: Option<String>,
}

impl ConfigArgs {
    fn load(&self) -> anyhow::Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(d) = &self.dataset {
            cfg.data.dataset = d.clone();
        }
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output split file.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Split file; when absent the split is drawn with the training seed and saved as split.txt.
    #[arg(long)]
    pub split: Option<PathBuf>,
    /// Overrides `[train].seed`.
    #[arg(long)]
    pub seed: Option<u64>,
    /// vgae, sigvae, naive-sivi or nf
    #[arg(long, value_parser = parse_encoder)]
    pub encoder: Option<EncoderKind>,
    /// inner-product or bernoulli-poisson
    #[arg(long, value_parser = parse_decoder)]
    pub decoder: Option<DecoderKind>,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub split: PathBuf,
    /// Posterior draws per score (default: the checkpoint's eval_samples).
    #[arg(long)]
    pub samples: Option<usize>,
    /// Evaluation seed (default: the checkpoint's seed).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Metrics file; printed to stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub samples: usize,
    /// Rates below this are set to zero before sampling (0 disables).
    #[arg(long, default_value_t = sigvae_core::decoders::SHRINK_THRESHOLD)]
    pub shrink_threshold: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory for sample_<i>.edges and report.json.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EmbedArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Comma-separated node ids (default: all nodes).
    #[arg(long, value_delimiter = ',')]
    pub nodes: Option<Vec<usize>>,
    #[arg(long, default_value_t = 1000)]
    pub draws: usize,
    #[arg(long, value_enum, default_value_t = EmbedField::Z)]
    pub field: EmbedField,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output table.
    #[arg(long)]
    pub out: PathBuf,
}

fn parse_kind<T: serde::de::DeserializeOwned>(s: &str) -> Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.into())).map_err(|_| format!("unknown variant {s:?}"))
}

fn parse_encoder(s: &str) -> Result<EncoderKind, String> {
    parse_kind(s)
}

fn parse_decoder(s: &str) -> Result<DecoderKind, String> {
    parse_kind(s)
}

/// Prints a line to stdout; a closed pipe is not an error.
fn emit(s: &str) {
    let _ = writeln!(std::io::stdout().lock(), "{s}");
}

fn load_graph(cfg: &RunConfig) -> anyhow::Result<Loaded> {
    let loaded = load_dataset(&cfg.data.dataset, cfg.data.generator_seed)
        .with_context(|| format!("loading dataset {:?}", cfg.data.dataset))?;
    log::info!(
        "dataset {}: {} nodes, {} edges, {} attribute columns",
        cfg.data.dataset,
        loaded.graph.n(),
        loaded.graph.num_edges(),
        loaded.graph.attribute_dim()
    );
    Ok(loaded)
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Split(a) => cmd_split(a),
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Generate(a) => cmd_generate(a),
        Command::Embed(a) => cmd_embed(a),
    }
}

fn cmd_split(a: SplitArgs) -> anyhow::Result<()> {
    let cfg = a.config.load()?;
    let g = load_graph(&cfg)?.graph;
    let split = split_edges(&g, a.seed)?;
    write_split(&a.out, &SplitFile { n: g.n(), split })?;
    Ok(())
}

/// Line-buffered epoch log that remembers its first write error.
struct EpochLog {
    out: BufWriter<File>,
    error: Option<std::io::Error>,
}

impl EpochLog {
    fn create(path: &Path) -> anyhow::Result<Self> {
        let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
        let mut log = EpochLog { out: BufWriter::new(file), error: None };
        log.line(EPOCH_LOG_HEADER);
        Ok(log)
    }

    fn line(&mut self, s: &str) {
        if self.error.is_none() {
            if let Err(e) = writeln!(self.out, "{s}").and_then(|_| self.out.flush()) {
                self.error = Some(e);
            }
        }
    }

    fn finish(mut self) -> anyhow::Result<()> {
        self.out.flush()?;
        self.error.map_or(Ok(()), |e| Err(e.into()))
    }
}

fn cmd_train(a: TrainArgs) -> anyhow::Result<()> {
    let mut cfg = a.config.load()?;
    if let Some(s) = a.seed {
        cfg.train.seed = s;
    }
    if let Some(e) = a.encoder {
        cfg.model.encoder = e;
    }
    if let Some(d) = a.decoder {
        cfg.model.decoder = d;
    }
    if let Some(e) = a.epochs {
        cfg.train.epochs = e;
    }
    let g = load_graph(&cfg)?.graph;
    std::fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    let split = match &a.split {
        Some(p) => {
            let f = read_split(p)?;
            if f.n != g.n() {
                bail!("{}: split is for {} nodes, dataset has {}", p.display(), f.n, g.n());
            }
            if let Some(&(u, v)) = f.split.train_pos.iter().find(|&&(u, v)| !g.has_edge(u, v)) {
                bail!("{}: training edge ({u}, {v}) is not an edge of the dataset", p.display());
            }
            f.split
        }
        None => {
            let split = split_edges(&g, cfg.train.seed)?;
            write_split(&a.out.join("split.txt"), &SplitFile { n: g.n(), split: split.clone() })?;
            split
        }
    };
    io::write(&a.out.join("config.toml"), cfg.to_toml()?)?;

    let mut final_log = EpochLog::create(&a.out.join("epochs.tsv"))?;
    let mut stage1_log = if cfg.two_stage.enabled && !cfg.two_stage.skip_stage1 {
        Some(EpochLog::create(&a.out.join("stage1_epochs.tsv"))?)
    } else {
        None
    };
    let result = pipeline::train_run(&cfg, &g, &split, &mut |stage, r| {
        let line = epoch_log_line(r);
        match (stage, stage1_log.as_mut()) {
            (1, Some(l)) => l.line(&line),
            _ => final_log.line(&line),
        }
    });
    let outcome = match result {
        Ok(o) => o,
        Err(e) => {
            final_log.line(&format!("# {e}"));
            final_log.finish()?;
            return Err(e.into());
        }
    };
    final_log.finish()?;
    if let Some(l) = stage1_log {
        l.finish()?;
    }
    outcome.checkpoint.save(&a.out.join("checkpoint.bin"))?;
    let json = outcome.record.to_json();
    io::write(&a.out.join("metrics.json"), format!("{json}\n"))?;
    emit(&json);
    Ok(())
}

fn cmd_eval(a: EvalArgs) -> anyhow::Result<()> {
    let start = std::time::Instant::now();
    let ck = Checkpoint::load(&a.checkpoint)?;
    let f = read_split(&a.split)?;
    if f.n != ck.n {
        bail!("{}: split is for {} nodes, checkpoint has {}", a.split.display(), f.n, ck.n);
    }
    let model = ck.model()?;
    let inputs = ck.inputs()?;
    let samples = a.samples.unwrap_or(ck.run.train.eval_samples);
    let seed = a.seed.unwrap_or(ck.seed);
    let m = pipeline::test_metrics(&model, &inputs, &f.split, samples, seed)?;
    let record = MetricsRecord {
        dataset: ck.run.data.dataset.clone(),
        variant: ck.run.variant(),
        seed,
        auc: m.auc,
        ap: m.ap,
        runtime_seconds: start.elapsed().as_secs_f64(),
        training: None,
        config: ck.run.clone(),
    };
    let json = record.to_json();
    match &a.out {
        Some(p) => io::write(p, format!("{json}\n"))?,
        None => emit(&json),
    }
    Ok(())
}

fn cmd_generate(a: GenerateArgs) -> anyhow::Result<()> {
    let ck = Checkpoint::load(&a.checkpoint)?;
    let (graphs, report) = pipeline::generate(&ck, a.samples, a.shrink_threshold, a.seed)?;
    for (i, g) in graphs.iter().enumerate() {
        io::write_edge_list(&a.out.join(format!("sample_{i}.edges")), g.n(), g.edges())?;
    }
    let json = serde_json::to_string_pretty(&report)?;
    io::write(&a.out.join("report.json"), format!("{json}\n"))?;
    emit(&format!(
        "reference density {:.6} clustering {:.4}; generated density {:.6} clustering {:.4} ({:.1}x denser)",
        report.reference.density,
        report.reference.avg_clustering,
        report.mean_density,
        report.mean_clustering,
        report.density_ratio
    ));
    if report.dense_regime {
        emit("generated graphs are far denser than the reference: the decoder does not reproduce its sparsity");
    }
    Ok(())
}

fn cmd_embed(a: EmbedArgs) -> anyhow::Result<()> {
    let ck = Checkpoint::load(&a.checkpoint)?;
    let table = pipeline::embed(&ck, a.nodes.as_deref(), a.draws, a.field, a.seed)?;
    let prefix = match a.field {
        EmbedField::Z => "z",
        EmbedField::Mu => "mu",
        EmbedField::LogSigma => "log_sigma",
    };
    io::write(&a.out, table.to_tsv(prefix))?;
    Ok(())
}
