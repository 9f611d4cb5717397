//! Versioned binary checkpoint.
//!
//! All integers are little-endian `u64` unless noted, floats are `f64` LE,
//! strings are a length followed by UTF-8 bytes.
//!
//! ```text
//! b"SIGVAECK"  u32 version
//! string  run config (TOML)
//! string  architecture (TOML of the trained model's config)
//! seed, n
//! count, then (a, b) per training edge
//! rows, cols, nnz, then (row, col, f64) per attribute entry
//! f64 density, f64 avg_clustering of the full dataset graph
//! count, then per parameter: name, rows, cols, rows*cols f64
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};
use sigvae_core::config::ModelConfig;
use sigvae_core::encoders::EncoderInputs;
use sigvae_core::graph::{normalize_adjacency, Edge, Graph, GraphStats};
use sigvae_core::model::Model;
use sigvae_core::numerics::{CsrMatrix, Matrix};
use sigvae_core::params::ParamSet;

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::io;

pub const MAGIC: &[u8; 8] = b"SIGVAECK";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub run: RunConfig,
    /// Config the saved parameters were built from (differs from `run.model`
    /// in latent and noise width when two-stage training was used).
    pub architecture: ModelConfig,
    pub seed: u64,
    pub n: usize,
    pub train_edges: Vec<Edge>,
    /// Encoder input features (learned ones after two-stage training).
    pub attributes: CsrMatrix,
    pub graph_stats: GraphStats,
    pub params: ParamSet,
}

#[derive(Serialize, Deserialize)]
struct Architecture {
    model: ModelConfig,
}

struct Writer(Vec<u8>);

impl Writer {
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }

    fn usize(&mut self, v: usize) {
        self.u64(v as u64);
    }

    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }

    fn str(&mut self, s: &str) {
        self.usize(s.len());
        self.0.extend_from_slice(s.as_bytes());
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn take(&mut self, k: usize) -> Result<&'a [u8]> {
        if self.buf.len() < k {
            return Err(Error::format(self.path, "truncated checkpoint"));
        }
        let (head, tail) = self.buf.split_at(k);
        self.buf = tail;
        Ok(head)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn usize(&mut self) -> Result<usize> {
        usize::try_from(self.u64()?).map_err(|_| Error::format(self.path, "length overflows usize"))
    }

    /// A count of items that each occupy at least `item_bytes`, checked
    /// against what is left so corrupt lengths cannot trigger huge allocations.
    fn count(&mut self, item_bytes: usize) -> Result<usize> {
        let k = self.usize()?;
        if k.saturating_mul(item_bytes) > self.buf.len() {
            return Err(Error::format(self.path, "truncated checkpoint"));
        }
        Ok(k)
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn str(&mut self) -> Result<&'a str> {
        let len = self.count(1)?;
        std::str::from_utf8(self.take(len)?).map_err(|_| Error::format(self.path, "invalid UTF-8 string"))
    }
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut w = Writer(Vec::new());
        w.0.extend_from_slice(MAGIC);
        w.0.extend_from_slice(&VERSION.to_le_bytes());
        w.str(&self.run.to_toml()?);
        let arch = toml::to_string(&Architecture { model: self.architecture.clone() })
            .map_err(|e| Error::Config(e.to_string()))?;
        w.str(&arch);
        w.u64(self.seed);
        w.usize(self.n);
        w.usize(self.train_edges.len());
        for &(a, b) in &self.train_edges {
            w.usize(a);
            w.usize(b);
        }
        w.usize(self.attributes.rows());
        w.usize(self.attributes.cols());
        w.usize(self.attributes.nnz());
        for r in 0..self.attributes.rows() {
            for (c, v) in self.attributes.row_iter(r) {
                w.usize(r);
                w.usize(c);
                w.f64(v);
            }
        }
        w.f64(self.graph_stats.density);
        w.f64(self.graph_stats.avg_clustering);
        w.usize(self.params.len());
        for (name, m) in self.params.iter() {
            w.str(name);
            w.usize(m.rows());
            w.usize(m.cols());
            m.as_slice().iter().for_each(|&v| w.f64(v));
        }
        Ok(w.0)
    }

    /// `path` is only used in error messages.
    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let mut r = Reader { buf: bytes, path };
        if r.take(8)? != MAGIC {
            return Err(Error::format(path, "not a sigvae checkpoint"));
        }
        let version = u32::from_le_bytes(r.take(4)?.try_into().expect("4 bytes"));
        if version != VERSION {
            return Err(Error::format(path, format!("unsupported checkpoint version {version}")));
        }
        let run = RunConfig::from_toml(r.str()?)?;
        let architecture = toml::from_str::<Architecture>(r.str()?).map_err(|e| Error::format(path, e.to_string()))?.model;
        let seed = r.u64()?;
        let n = r.usize()?;
        let edges = r.count(16)?;
        let train_edges = (0..edges).map(|_| Ok((r.usize()?, r.usize()?))).collect::<Result<Vec<_>>>()?;
        let (rows, cols) = (r.usize()?, r.usize()?);
        let nnz = r.count(24)?;
        let triplets = (0..nnz).map(|_| Ok((r.usize()?, r.usize()?, r.f64()?))).collect::<Result<Vec<_>>>()?;
        let attributes = CsrMatrix::from_triplets(rows, cols, triplets)?;
        let graph_stats = GraphStats { density: r.f64()?, avg_clustering: r.f64()? };
        let mut params = ParamSet::new();
        for _ in 0..r.count(24)? {
            let name = r.str()?.to_string();
            let (pr, pc) = (r.usize()?, r.usize()?);
            let len = pr.checked_mul(pc).ok_or_else(|| Error::format(path, "parameter too large"))?;
            if len.saturating_mul(8) > r.buf.len() {
                return Err(Error::format(path, "truncated checkpoint"));
            }
            let data = (0..len).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
            params.add(name, Matrix::from_vec(pr, pc, data)?);
        }
        if !r.buf.is_empty() {
            return Err(Error::format(path, "trailing bytes after checkpoint"));
        }
        if attributes.rows() != n {
            return Err(Error::format(path, "attribute rows do not match node count"));
        }
        Ok(Checkpoint { run, architecture, seed, n, train_edges, attributes, graph_stats, params })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        io::write(path, self.to_bytes()?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes, path)
    }

    pub fn model(&self) -> Result<Model> {
        Ok(Model::from_params(&self.architecture, self.attributes.cols(), self.params.clone())?)
    }

    /// Encoder inputs rebuilt from the saved training edges and features.
    pub fn inputs(&self) -> Result<EncoderInputs> {
        Ok(EncoderInputs::new(normalize_adjacency(self.n, &self.train_edges)?, self.attributes.clone())?)
    }

    pub fn train_graph(&self) -> Result<Graph> {
        Ok(Graph::from_edges(self.n, self.train_edges.iter().copied())?)
    }
}
