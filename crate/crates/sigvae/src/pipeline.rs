//! End-to-end runs: train + test evaluation, graph generation and
//! posterior export, all working on in-memory values.

use std::fmt::Write as _;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sigvae_core::config::DecoderKind;
use sigvae_core::decoders::{bernoulli_poisson_decode, inner_product_decode, sample_adjacency, shrink_r};
use sigvae_core::encoders::EncoderInputs;
use sigvae_core::eval::LinkMetrics;
use sigvae_core::graph::{graph_stats, EdgeSplit, Graph, GraphStats};
use sigvae_core::inference::{link_prediction_eval, prepare_inputs, train, train_two_stage, EpochRecord, TrainState};
use sigvae_core::model::Model;
use sigvae_core::rng::SeedRng;

use crate::checkpoint::Checkpoint;
use crate::config::RunConfig;
use crate::error::{Error, Result};

const TEST_SALT: u64 = 0x7e57;
const GENERATE_SALT: u64 = 0x6e4;
const EMBED_SALT: u64 = 0xe3b;

/// One run's summary, written as a JSON object.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub dataset: String,
    pub variant: String,
    pub seed: u64,
    pub auc: f64,
    pub ap: f64,
    pub runtime_seconds: f64,
    /// Training summary; absent in records written by `eval`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub training: Option<TrainingSummary>,
    pub config: RunConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingSummary {
    pub val_auc: f64,
    pub val_ap: f64,
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub stopped_early: bool,
}

impl MetricsRecord {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("metrics serialize")
    }
}

pub struct TrainOutcome {
    pub model: Model,
    pub inputs: EncoderInputs,
    pub state: TrainState,
    pub stage1: Option<TrainState>,
    pub test: LinkMetrics,
    pub checkpoint: Checkpoint,
    pub record: MetricsRecord,
}

/// Test-set AUC / AP with the evaluation stream of `seed`.
pub fn test_metrics(model: &Model, inputs: &EncoderInputs, split: &EdgeSplit, samples: usize, seed: u64) -> Result<LinkMetrics> {
    let mut rng = SeedRng::derived(seed, TEST_SALT);
    Ok(link_prediction_eval(model, inputs, &split.test_pos, &split.test_neg, samples, &mut rng)?)
}

/// Trains per `cfg` (single or two-stage), then scores the test pairs.
/// `on_epoch` receives the stage (1 or 2; 2 for single-stage runs) and the record.
pub fn train_run(
    cfg: &RunConfig,
    graph: &Graph,
    split: &EdgeSplit,
    on_epoch: &mut dyn FnMut(usize, &EpochRecord),
) -> Result<TrainOutcome> {
    let start = Instant::now();
    let n = graph.n();
    let (model, inputs, state, stage1, features) = if cfg.two_stage.enabled {
        let out = train_two_stage(&cfg.model, &cfg.two_stage, graph, split, &cfg.loss, &cfg.train, on_epoch)?;
        (out.model, out.inputs, out.state, out.stage1, out.features)
    } else {
        let inputs = prepare_inputs(n, split, graph.attributes().clone())?;
        let mut model = Model::new(&cfg.model, graph.attribute_dim(), cfg.train.seed)?;
        let state = train(&mut model, &inputs, split, &cfg.loss, &cfg.train, &mut |r| on_epoch(2, r))?;
        (model, inputs, state, None, graph.attributes().clone())
    };
    let test = test_metrics(&model, &inputs, split, cfg.train.eval_samples, cfg.train.seed)?;
    let runtime_seconds = start.elapsed().as_secs_f64();
    let checkpoint = Checkpoint {
        run: cfg.clone(),
        architecture: model.config().clone(),
        seed: cfg.train.seed,
        n,
        train_edges: split.train_pos.clone(),
        attributes: features,
        graph_stats: graph_stats(graph),
        params: model.params().clone(),
    };
    let record = MetricsRecord {
        dataset: cfg.data.dataset.clone(),
        variant: cfg.variant(),
        seed: cfg.train.seed,
        auc: test.auc,
        ap: test.ap,
        runtime_seconds,
        training: Some(TrainingSummary {
            val_auc: state.best_val.auc,
            val_ap: state.best_val.ap,
            best_epoch: state.best_epoch,
            epochs_run: state.epoch,
            stopped_early: state.stopped_early,
        }),
        config: cfg.clone(),
    };
    Ok(TrainOutcome { model, inputs, state, stage1, test, checkpoint, record })
}

/// Header plus one tab-separated line per epoch record.
pub const EPOCH_LOG_HEADER: &str = "epoch\tloss\tval_auc\tval_ap";

pub fn epoch_log_line(r: &EpochRecord) -> String {
    format!("{}\t{}\t{}\t{}", r.epoch, r.loss, r.val_auc, r.val_ap)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerationReport {
    pub decoder: String,
    pub shrink_threshold: f64,
    /// Rates after shrinkage (empty for the inner-product decoder).
    pub rates: Vec<f64>,
    pub reference: GraphStats,
    pub samples: Vec<GraphStats>,
    pub mean_density: f64,
    pub mean_clustering: f64,
    /// Mean generated density over the reference density.
    pub density_ratio: f64,
    /// Set when generated graphs are at least 20x denser than the reference.
    pub dense_regime: bool,
}

/// Samples `count` graphs, each from one posterior draw of the latent
/// positions decoded with the (shrunk) edge model.
pub fn generate(ck: &Checkpoint, count: usize, shrink_threshold: f64, seed: u64) -> Result<(Vec<Graph>, GenerationReport)> {
    let model = ck.model()?;
    let inputs = ck.inputs()?;
    let mut rng = SeedRng::derived(seed, GENERATE_SALT);
    let rates = model.r().map(|r| shrink_r(&r, shrink_threshold)).unwrap_or_default();
    let mut graphs = Vec::with_capacity(count);
    let mut stats = Vec::with_capacity(count);
    for _ in 0..count {
        let z = model.sample_posterior(&inputs, 1, &mut rng)?.remove(0).z;
        let p = match model.decoder().kind() {
            DecoderKind::InnerProduct => inner_product_decode(&z),
            DecoderKind::BernoulliPoisson => {
                let (p, saturated) = bernoulli_poisson_decode(&z, &rates);
                if saturated {
                    log::warn!("edge scores saturated while decoding a generated graph");
                }
                p
            }
        };
        let g = sample_adjacency(&p, &mut rng)?;
        stats.push(graph_stats(&g));
        graphs.push(g);
    }
    let k = count.max(1) as f64;
    let mean_density = stats.iter().map(|s| s.density).sum::<f64>() / k;
    let mean_clustering = stats.iter().map(|s| s.avg_clustering).sum::<f64>() / k;
    let density_ratio = mean_density / ck.graph_stats.density;
    let report = GenerationReport {
        decoder: crate::config::serialized_name(&model.decoder().kind()),
        shrink_threshold,
        rates,
        reference: ck.graph_stats,
        samples: stats,
        mean_density,
        mean_clustering,
        density_ratio,
        dense_regime: density_ratio >= 20.0,
    };
    Ok((graphs, report))
}

/// Which per-draw quantity `embed` exports.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum EmbedField {
    /// Latent sample.
    Z,
    /// Posterior mean of the draw.
    Mu,
    /// Posterior log standard deviation of the draw.
    LogSigma,
}

/// Per-node posterior draws as rows `node, draw, v1..vd`.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbedTable {
    pub nodes: Vec<usize>,
    pub draws: usize,
    /// `values[d][k]` is draw `d` of `nodes[k]`.
    pub values: Vec<Vec<Vec<f64>>>,
}

pub fn embed(ck: &Checkpoint, nodes: Option<&[usize]>, draws: usize, field: EmbedField, seed: u64) -> Result<EmbedTable> {
    let nodes: Vec<usize> = match nodes {
        Some(ids) => {
            if let Some(&bad) = ids.iter().find(|&&i| i >= ck.n) {
                return Err(Error::UnknownNode { id: bad, n: ck.n });
            }
            ids.to_vec()
        }
        None => (0..ck.n).collect(),
    };
    let model = ck.model()?;
    let inputs = ck.inputs()?;
    let mut rng = SeedRng::derived(seed, EMBED_SALT);
    let mut values = Vec::with_capacity(draws);
    for _ in 0..draws {
        let s = model.sample_posterior(&inputs, 1, &mut rng)?.remove(0);
        let m = match field {
            EmbedField::Z => s.z,
            EmbedField::Mu => s.mu,
            EmbedField::LogSigma => s.log_sigma,
        };
        values.push(nodes.iter().map(|&i| m.row(i).to_vec()).collect());
    }
    Ok(EmbedTable { nodes, draws, values })
}

impl EmbedTable {
    pub fn to_tsv(&self, prefix: &str) -> String {
        let dim = self.values.first().and_then(|d| d.first()).map_or(0, Vec::len);
        let mut out = String::from("node\tdraw");
        for k in 1..=dim {
            let _ = write!(out, "\t{prefix}{k}");
        }
        out.push('\n');
        for (k, node) in self.nodes.iter().enumerate() {
            for (d, draw) in self.values.iter().enumerate() {
                let _ = write!(out, "{node}\t{d}");
                for v in &draw[k] {
                    let _ = write!(out, "\t{v}");
                }
                out.push('\n');
            }
        }
        out
    }

    /// Across-draw standard deviation of each coordinate, per node.
    pub fn spread(&self) -> Vec<Vec<f64>> {
        let d = self.draws.max(1) as f64;
        (0..self.nodes.len())
            .map(|k| {
                let dim = self.values.first().map_or(0, |v| v[k].len());
                (0..dim)
                    .map(|c| {
                        // Shifted by the first draw so identical draws give exactly 0.
                        let first = self.values[0][k][c];
                        let mean = self.values.iter().map(|v| v[k][c] - first).sum::<f64>() / d;
                        (self.values.iter().map(|v| (v[k][c] - first - mean).powi(2)).sum::<f64>() / d).sqrt()
                    })
                    .collect()
            })
            .collect()
    }
}
