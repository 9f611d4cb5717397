//! One test per acceptance criterion, each printing a single PASS/FAIL line.
//!
//! Criteria 2-5 need the public benchmark graphs under `$SIGVAE_DATA` (see
//! `scripts/fetch_datasets.sh`). Without them they report FAIL with the
//! missing files and do not run; with them they run the full protocol and
//! assert.

use std::io::Write;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use sigvae::config::RunConfig;
use sigvae::datasets::{builtin_available, builtin_paths, load_dataset, DATA_ENV};
use sigvae::pipeline::{self, generate, MetricsRecord};
use sigvae_core::config::{DecoderKind, EncoderKind, LossConfig, MixtureScope, ModelConfig, NoiseSpec};
use sigvae_core::decoders::bp_link;
use sigvae_core::eval::{auc, average_precision};
use sigvae_core::graph::{split_edges, Graph};
use sigvae_core::inference::{elbo, prepare_inputs, Objective, ReconTarget};
use sigvae_core::model::Model;
use sigvae_core::numerics::{grad_check, CsrMatrix, Matrix, Tape, Var};
use sigvae_core::params::Bound;
use sigvae_core::rng::SeedRng;

const SEEDS: [u64; 5] = [0, 1, 2, 3, 4];

/// Written straight to stderr so the line survives test output capture.
fn report(id: u32, name: &str, pass: bool, detail: &str) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    let smoke = match epoch_override() {
        Some(e) if (2..=5).contains(&id) => format!(" [smoke run: {EPOCHS_ENV}={e}, not a valid result]"),
        _ => String::new(),
    };
    let _ = writeln!(std::io::stderr(), "{verdict} criterion {id} ({name}): {detail}{smoke}");
}

/// `Some(reason)` when any builtin dataset file is missing.
fn missing(names: &[&str]) -> Option<String> {
    let absent: Vec<String> = names
        .iter()
        .filter(|n| !builtin_available(n))
        .flat_map(|n| builtin_paths(n))
        .filter(|p| !p.is_file())
        .map(|p| p.display().to_string())
        .collect();
    (!absent.is_empty()).then(|| format!("not run, dataset files missing ({}); set {DATA_ENV}", absent.join(", ")))
}

fn mean(xs: impl IntoIterator<Item = f64>) -> f64 {
    let v: Vec<f64> = xs.into_iter().collect();
    v.iter().sum::<f64>() / v.len() as f64
}

// ---- criterion 1 -----------------------------------------------------------

const TWO_TRIANGLES: [(usize, usize); 6] = [(0, 1), (1, 2), (0, 2), (3, 4), (4, 5), (3, 5)];

fn toy_model_config(encoder: EncoderKind, decoder: DecoderKind, noise: usize, flows: usize) -> ModelConfig {
    ModelConfig {
        encoder,
        decoder,
        latent_dim: 3,
        hidden_dims: vec![5],
        noise: NoiseSpec { dim: noise, ..NoiseSpec::default() },
        flows,
        ..ModelConfig::default()
    }
}

fn toy_split() -> sigvae_core::graph::EdgeSplit {
    sigvae_core::graph::EdgeSplit {
        seed: 0,
        train_pos: TWO_TRIANGLES.to_vec(),
        val_pos: vec![(0, 1)],
        test_pos: vec![(1, 2)],
        val_neg: vec![(0, 3)],
        test_neg: vec![(2, 4)],
    }
}

/// ELBO of a 6-node two-triangle instance with the noise stream fixed by `seed`.
fn toy_elbo(model: &Model, obj: &Objective, seed: u64, vars: Option<&[Var]>, tape: &mut Tape) -> sigvae_core::Result<Var> {
    let inputs = prepare_inputs(6, &toy_split(), CsrMatrix::identity(6))?;
    let target = ReconTarget::new(6, &TWO_TRIANGLES, &LossConfig::default());
    let bound = match vars {
        Some(v) => Bound::from_vars(v.to_vec()),
        None => model.params().bind_frozen(tape),
    };
    Ok(elbo(tape, model, &bound, &inputs, &target, obj, &mut SeedRng::new(seed))?.elbo)
}

fn toy_value(model: &Model, obj: &Objective, seed: u64) -> f64 {
    let mut tape = Tape::new();
    let v = toy_elbo(model, obj, seed, None, &mut tape).unwrap();
    tape.value(v).item()
}

fn auc_oracle(pos: &[f64], neg: &[f64]) -> f64 {
    let mut wins = 0.0;
    for p in pos {
        for q in neg {
            wins += if p > q { 1.0 } else if p == q { 0.5 } else { 0.0 };
        }
    }
    wins / (pos.len() * neg.len()) as f64
}

/// Precision at each positive's rank; on equal scores positives precede
/// negatives and earlier positives precede later ones.
fn ap_oracle(pos: &[f64], neg: &[f64]) -> f64 {
    let mut total = 0.0;
    for (i, &s) in pos.iter().enumerate() {
        let hits = pos.iter().enumerate().filter(|&(j, &t)| t > s || (t == s && j <= i)).count();
        let above_neg = neg.iter().filter(|&&t| t > s).count();
        total += hits as f64 / (hits + above_neg) as f64;
    }
    total / pos.len() as f64
}

fn poisson(lambda: f64, rng: &mut SeedRng) -> u32 {
    let limit = (-lambda).exp();
    let (mut k, mut p) = (0, rng.uniform());
    while p > limit {
        k += 1;
        p *= rng.uniform();
    }
    k
}

#[test]
fn criterion_1_property_suite() {
    let start = Instant::now();
    let mut notes = Vec::new();
    let mut pass = true;

    // Autodiff against central differences on the full surrogate ELBO.
    let mut worst_grad: f64 = 0.0;
    for decoder in [DecoderKind::InnerProduct, DecoderKind::BernoulliPoisson] {
        for mixture in [MixtureScope::Joint, MixtureScope::PerNode] {
            let model = Model::new(&toy_model_config(EncoderKind::Sigvae, decoder, 4, 0), 6, 9).unwrap();
            let obj = Objective { j: 2, k: 3, mixture, kl_weight: 1.0 };
            let f = |tape: &mut Tape, vars: &[Var]| toy_elbo(&model, &obj, 21, Some(vars), tape);
            let err = grad_check(f, model.params().values(), 1e-6).unwrap().max_relative_error;
            worst_grad = worst_grad.max(err);
        }
    }
    pass &= worst_grad < 1e-4;
    notes.push(format!("grad rel err {worst_grad:.2e}"));

    // Ranking metrics against exhaustive definitions, with and without ties.
    let mut rng = SeedRng::new(5);
    let mut worst_metric: f64 = 0.0;
    for trial in 0..300 {
        let np = 1 + rng.below(100);
        let nn = 1 + rng.below(100);
        let draw = |rng: &mut SeedRng| if trial % 2 == 0 { rng.uniform() } else { rng.below(4) as f64 };
        let pos: Vec<f64> = (0..np).map(|_| draw(&mut rng)).collect();
        let neg: Vec<f64> = (0..nn).map(|_| draw(&mut rng)).collect();
        worst_metric = worst_metric
            .max((auc(&pos, &neg).unwrap() - auc_oracle(&pos, &neg)).abs())
            .max((average_precision(&pos, &neg).unwrap() - ap_oracle(&pos, &neg)).abs());
    }
    pass &= worst_metric < 1e-12;
    notes.push(format!("metric max diff {worst_metric:.1e}"));

    // Bernoulli-Poisson link against simulated Poisson counts.
    let mut worst_bp: f64 = 0.0;
    for lambda in [0.01, 0.1, 1.0, 5.0] {
        let draws = 100_000;
        let hits = (0..draws).filter(|_| poisson(lambda, &mut rng) > 0).count();
        worst_bp = worst_bp.max((hits as f64 / draws as f64 - bp_link(f64::ln(lambda))).abs());
    }
    pass &= worst_bp < 0.005;
    notes.push(format!("BP truncation max dev {worst_bp:.4}"));

    // Noise-free SIG-VAE and identity-flow NF collapse to VGAE.
    let ip = DecoderKind::InnerProduct;
    let vgae = Model::new(&toy_model_config(EncoderKind::Vgae, ip, 0, 0), 6, 4).unwrap();
    let sig = Model::new(&toy_model_config(EncoderKind::Sigvae, ip, 0, 0), 6, 4).unwrap();
    let mut nf = Model::new(&toy_model_config(EncoderKind::Nf, ip, 0, 2), 6, 4).unwrap();
    for k in 0..2 {
        let id = nf.params().find(&format!("flow{k}.u")).unwrap();
        *nf.params_mut().get_mut(id) = Matrix::zeros(1, 3);
    }
    let mut worst_red: f64 = 0.0;
    for seed in 0..5 {
        let obj = Objective { j: 2, k: 0, mixture: MixtureScope::Joint, kl_weight: 1.0 };
        let base = toy_value(&vgae, &obj, seed);
        worst_red = worst_red
            .max((toy_value(&sig, &Objective { k: 7, ..obj }, seed) - base).abs())
            .max((toy_value(&nf, &Objective { j: 1, ..obj }, seed) - toy_value(&vgae, &Objective { j: 1, ..obj }, seed)).abs());
    }
    pass &= worst_red < 1e-10;
    notes.push(format!("reduction max diff {worst_red:.1e}"));

    let elapsed = start.elapsed();
    pass &= elapsed < Duration::from_secs(300);
    notes.push(format!("{:.1}s; full invariant suites run as the workspace unit and integration tests", elapsed.as_secs_f64()));
    report(1, "property suite", pass, &notes.join(", "));
    assert!(pass);
}

// ---- criteria 2-5 ----------------------------------------------------------

struct Bench {
    graph: Graph,
    split: sigvae_core::graph::EdgeSplit,
}

fn bench(name: &str) -> Bench {
    let graph = load_dataset(name, 0).unwrap().graph;
    let split = split_edges(&graph, 0).unwrap();
    Bench { graph, split }
}

/// Smoke-run override of the epoch budget; results obtained with it do not
/// count toward the criteria.
const EPOCHS_ENV: &str = "SIGVAE_ACCEPTANCE_EPOCHS";

fn epoch_override() -> Option<usize> {
    std::env::var(EPOCHS_ENV).ok().and_then(|v| v.parse().ok())
}

fn base_config(dataset: &str, encoder: EncoderKind, decoder: DecoderKind) -> RunConfig {
    let mut cfg = RunConfig::default();
    if let Some(e) = epoch_override() {
        cfg.train.epochs = e;
    }
    cfg.data.dataset = dataset.into();
    cfg.model.encoder = encoder;
    cfg.model.decoder = decoder;
    cfg
}

fn run_seeds(b: &Bench, cfg: &RunConfig) -> Vec<MetricsRecord> {
    SEEDS
        .iter()
        .map(|&seed| {
            let mut c = cfg.clone();
            c.train.seed = seed;
            pipeline::train_run(&c, &b.graph, &b.split, &mut |_, _| {}).unwrap().record
        })
        .collect()
}

fn mean_auc(rs: &[MetricsRecord]) -> f64 {
    mean(rs.iter().map(|r| r.auc))
}

#[test]
fn criterion_2_vgae_cora() {
    let name = "VGAE baseline on Cora";
    if let Some(reason) = missing(&["cora"]) {
        return report(2, name, false, &reason);
    }
    let start = Instant::now();
    let runs = run_seeds(&bench("cora"), &base_config("cora", EncoderKind::Vgae, DecoderKind::InnerProduct));
    let elapsed = start.elapsed();
    let (a, p) = (mean_auc(&runs), mean(runs.iter().map(|r| r.ap)));
    let pass = a >= 0.89 && p >= 0.90 && elapsed <= Duration::from_secs(1800);
    report(2, name, pass, &format!("mean AUC {a:.4}, AP {p:.4} over {} seeds in {:.0}s", runs.len(), elapsed.as_secs_f64()));
    assert!(pass || epoch_override().is_some());
}

#[test]
fn criterion_3_sigvae_beats_baselines() {
    let name = "SIG-VAE improvement on Cora and Citeseer";
    if let Some(reason) = missing(&["cora", "citeseer"]) {
        return report(3, name, false, &reason);
    }
    let mut pass = true;
    let mut notes = Vec::new();
    for dataset in ["cora", "citeseer"] {
        let b = bench(dataset);
        let ip = DecoderKind::InnerProduct;
        let auc_of = |e| mean_auc(&run_seeds(&b, &base_config(dataset, e, ip)));
        let (vgae, sig, naive, nf) =
            (auc_of(EncoderKind::Vgae), auc_of(EncoderKind::Sigvae), auc_of(EncoderKind::NaiveSivi), auc_of(EncoderKind::Nf));
        pass &= sig - vgae >= 0.01 && sig > naive.max(nf) && naive.min(nf) >= vgae;
        notes.push(format!("{dataset}: sigvae {sig:.4}, naive {naive:.4}, nf {nf:.4}, vgae {vgae:.4}"));
    }
    report(3, name, pass, &notes.join("; "));
    assert!(pass || epoch_override().is_some());
}

#[test]
fn criterion_4_attribute_free_two_stage() {
    let name = "two-stage SIG-VAE on NS and Power";
    if let Some(reason) = missing(&["ns", "power"]) {
        return report(4, name, false, &reason);
    }
    let mut pass = true;
    let mut notes = Vec::new();
    for (dataset, floor) in [("ns", 0.95), ("power", 0.85)] {
        let b = bench(dataset);
        let start = Instant::now();
        let mut cfg = base_config(dataset, EncoderKind::Sigvae, DecoderKind::BernoulliPoisson);
        cfg.two_stage.enabled = true;
        let sig = mean_auc(&run_seeds(&b, &cfg));
        let elapsed = start.elapsed();
        pass &= sig >= floor && elapsed <= Duration::from_secs(1800);
        let mut note = format!("{dataset}: sigvae {sig:.4} in {:.0}s", elapsed.as_secs_f64());
        if dataset == "power" {
            let vgae = mean_auc(&run_seeds(&b, &base_config(dataset, EncoderKind::Vgae, DecoderKind::InnerProduct)));
            pass &= sig - vgae >= 0.10;
            note.push_str(&format!(", vgae {vgae:.4}"));
        }
        notes.push(note);
    }
    report(4, name, pass, &notes.join("; "));
    assert!(pass || epoch_override().is_some());
}

#[test]
fn criterion_5_graph_generation() {
    let name = "graph generation from Cora";
    if let Some(reason) = missing(&["cora"]) {
        return report(5, name, false, &reason);
    }
    let b = bench("cora");
    let generated = |decoder| {
        let out = pipeline::train_run(&base_config("cora", EncoderKind::Sigvae, decoder), &b.graph, &b.split, &mut |_, _| {}).unwrap();
        generate(&out.checkpoint, 10, sigvae_core::decoders::SHRINK_THRESHOLD, 0).unwrap().1
    };
    let bp = generated(DecoderKind::BernoulliPoisson);
    let ip = generated(DecoderKind::InnerProduct);
    let pass = (0.0007..=0.003).contains(&bp.mean_density)
        && (0.12..=0.36).contains(&bp.mean_clustering)
        && ip.density_ratio >= 20.0;
    report(
        5,
        name,
        pass,
        &format!(
            "BP density {:.5} clustering {:.3}; IP density {:.4} ({:.1}x reference {:.5})",
            bp.mean_density, bp.mean_clustering, ip.mean_density, ip.density_ratio, bp.reference.density
        ),
    );
    assert!(pass || epoch_override().is_some());
}

// ---- criterion 6 -----------------------------------------------------------

fn sigvae_cli(args: &[&str]) {
    let out = Command::new(env!("CARGO_BIN_EXE_sigvae")).args(args).output().unwrap();
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
}

/// Per-node largest across-draw standard deviation of the exported μ.
fn mu_spread(dir: &Path, encoder: &str) -> Vec<f64> {
    let run = dir.join(encoder);
    let cfg = dir.join("roll.toml");
    let (run_s, cfg_s) = (run.to_str().unwrap(), cfg.to_str().unwrap());
    sigvae_cli(&["train", "--config", cfg_s, "--encoder", encoder, "--out", run_s]);
    let table = run.join("mu.tsv");
    let ck = run.join("checkpoint.bin");
    sigvae_cli(&["embed", "--checkpoint", ck.to_str().unwrap(), "--field", "mu", "--draws", "40", "--out", table.to_str().unwrap()]);

    let text = std::fs::read_to_string(table).unwrap();
    let rows: Vec<Vec<f64>> = text.lines().skip(1).map(|l| l.split('\t').map(|v| v.parse().unwrap()).collect()).collect();
    let n = 1 + rows.iter().map(|r| r[0] as usize).max().unwrap();
    (0..n)
        .map(|node| {
            let mine: Vec<&Vec<f64>> = rows.iter().filter(|r| r[0] as usize == node).collect();
            (2..mine[0].len())
                .map(|c| {
                    // Deviations from the first draw: identical draws give exactly 0.
                    let d: Vec<f64> = mine.iter().map(|r| r[c] - mine[0][c]).collect();
                    let m = mean(d.iter().copied());
                    mean(d.iter().map(|x| (x - m).powi(2))).sqrt()
                })
                .fold(0.0, f64::max)
        })
        .collect()
}

#[test]
fn criterion_6_interpretability_export() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("roll.toml"),
        "[data]\ndataset = \"swiss-roll\"\n[train]\nepochs = 150\nlearning_rate = 0.01\n",
    )
    .unwrap();
    let graph = load_dataset("swiss-roll", 0).unwrap().graph;
    let connected: Vec<usize> = graph.degrees().iter().enumerate().filter(|(_, &d)| d > 0).map(|(i, _)| i).collect();

    let sig = mu_spread(dir.path(), "sigvae");
    let vgae = mu_spread(dir.path(), "vgae");
    let sig_min = connected.iter().map(|&i| sig[i]).fold(f64::INFINITY, f64::min);
    let vgae_max = vgae.iter().copied().fold(0.0, f64::max);
    let pass = sig_min > 0.0 && vgae_max == 0.0;
    report(
        6,
        "interpretability export",
        pass,
        &format!(
            "swiss roll {} nodes / {} edges; min μ spread over {} connected nodes under SIG-VAE {sig_min:.3e}, max under VGAE {vgae_max}",
            graph.n(),
            graph.num_edges(),
            connected.len()
        ),
    );
    assert!(pass);
}
