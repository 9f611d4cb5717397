use std::path::Path;

use sigvae::checkpoint::Checkpoint;
use sigvae::config::RunConfig;
use sigvae_core::config::DecoderKind;
use sigvae_core::graph::{graph_stats, split_edges, torus_graph};
use sigvae_core::model::Model;
use sigvae_core::numerics::CsrMatrix;
use sigvae_core::rng::SeedRng;

fn sample() -> (Checkpoint, Model) {
    let g = torus_graph(5, 5).unwrap();
    let split = split_edges(&g, 2).unwrap();
    let mut run = RunConfig::default();
    run.model.decoder = DecoderKind::BernoulliPoisson;
    run.model.latent_dim = 4;
    run.model.hidden_dims = vec![6];
    run.model.noise.dim = 3;
    let model = Model::new(&run.model, g.n(), 5).unwrap();
    let ck = Checkpoint {
        architecture: run.model.clone(),
        run,
        seed: 5,
        n: g.n(),
        train_edges: split.train_pos,
        attributes: CsrMatrix::identity(g.n()),
        graph_stats: graph_stats(&g),
        params: model.params().clone(),
    };
    (ck, model)
}

#[test]
fn round_trip_rebuilds_the_model() {
    let (ck, model) = sample();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("nested/ck.bin");
    ck.save(&path).unwrap();
    let back = Checkpoint::load(&path).unwrap();
    assert_eq!(back.run, ck.run);
    assert_eq!(back.architecture, ck.architecture);
    assert_eq!((back.seed, back.n), (5, 25));
    assert_eq!(back.train_edges, ck.train_edges);
    assert_eq!(back.attributes, ck.attributes);
    assert_eq!(back.graph_stats, ck.graph_stats);
    assert_eq!(back.params, ck.params);
    assert_eq!(back.to_bytes().unwrap(), ck.to_bytes().unwrap());

    let rebuilt = back.model().unwrap();
    let inputs = back.inputs().unwrap();
    let pairs = [(0, 1), (3, 7)];
    let a = model.score_pairs(&inputs, &pairs, 4, &mut SeedRng::new(1)).unwrap();
    let b = rebuilt.score_pairs(&inputs, &pairs, 4, &mut SeedRng::new(1)).unwrap();
    assert_eq!(a, b);
}

#[test]
fn damaged_bytes_are_rejected() {
    let (ck, _) = sample();
    let bytes = ck.to_bytes().unwrap();
    let p = Path::new("mem");
    assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 3], p).is_err());
    assert!(Checkpoint::from_bytes(&bytes[..20], p).is_err());
    let mut bad = bytes.clone();
    bad[0] = b'X';
    assert!(Checkpoint::from_bytes(&bad, p).unwrap_err().to_string().contains("not a sigvae checkpoint"));
    let mut newer = bytes.clone();
    newer[8] = 99;
    assert!(Checkpoint::from_bytes(&newer, p).unwrap_err().to_string().contains("version"));
    let mut long = bytes;
    long.push(0);
    assert!(Checkpoint::from_bytes(&long, p).is_err());
}

#[test]
fn architecture_mismatch_is_an_error() {
    let (mut ck, _) = sample();
    ck.architecture.latent_dim = 5;
    assert!(ck.model().is_err());
}
