//! Dataset specs: builtin names under `$SIGVAE_DATA`, explicit files, and
//! synthetic generators.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use sigvae_core::graph::{attributed_block_graph, swiss_roll_tuned, torus_graph, BlockGraphSpec};

use crate::error::{Error, Result};
use crate::io::{load_citation_dataset, load_edge_list, Loaded};

/// Environment variable naming the dataset root (default `./data`).
pub const DATA_ENV: &str = "SIGVAE_DATA";

/// Datasets with `.content` / `.cites` files.
pub const CITATION_BUILTINS: [&str; 3] = ["cora", "citeseer", "pubmed"];
/// Attribute-free datasets stored as `<name>/<name>.edges`.
pub const EDGE_BUILTINS: [&str; 5] = ["ns", "power", "usair", "router", "yeast"];

const SWISS_ROLL_NODES: usize = 200;
const SWISS_ROLL_EDGES: usize = 1244;

/// Parsed form of a `dataset = "..."` string.
///
/// | spec | meaning |
/// |---|---|
/// | `cora`, `citeseer`, `pubmed` | `$SIGVAE_DATA/<name>/<name>.content` + `.cites` |
/// | `ns`, `power`, `usair`, `router`, `yeast` | `$SIGVAE_DATA/<name>/<name>.edges` |
/// | `edges:<path>` | edge-list file |
/// | `citation:<content>,<cites>` | citation file pair |
/// | `swiss-roll[:<n>]` | Swiss roll, edge count tuned to 1244·n/200 |
/// | `torus:<rows>x<cols>` | wraparound grid |
/// | `blocks[:<blocks>x<size>]` | planted partition with block-correlated attributes |
#[derive(Clone, Debug, PartialEq)]
pub enum DatasetSpec {
    Builtin(String),
    EdgeList(PathBuf),
    Citation { content: PathBuf, cites: PathBuf },
    SwissRoll { n: usize },
    Torus { rows: usize, cols: usize },
    Blocks { blocks: usize, block_size: usize },
}

fn dims(s: &str, spec: &str) -> Result<(usize, usize)> {
    let bad = || Error::UnknownDataset(spec.to_string());
    let (a, b) = s.split_once('x').ok_or_else(bad)?;
    Ok((a.parse().map_err(|_| bad())?, b.parse().map_err(|_| bad())?))
}

impl FromStr for DatasetSpec {
    type Err = Error;

    fn from_str(spec: &str) -> Result<Self> {
        let (head, arg) = match spec.split_once(':') {
            Some((h, a)) => (h, Some(a)),
            None => (spec, None),
        };
        let bad = || Error::UnknownDataset(spec.to_string());
        Ok(match (head, arg) {
            (name, None) if CITATION_BUILTINS.contains(&name) || EDGE_BUILTINS.contains(&name) => {
                DatasetSpec::Builtin(name.to_string())
            }
            ("edges", Some(p)) => DatasetSpec::EdgeList(p.into()),
            ("citation", Some(a)) => {
                let (c, e) = a.split_once(',').ok_or_else(bad)?;
                DatasetSpec::Citation { content: c.into(), cites: e.into() }
            }
            ("swiss-roll", None) => DatasetSpec::SwissRoll { n: SWISS_ROLL_NODES },
            ("swiss-roll", Some(n)) => DatasetSpec::SwissRoll { n: n.parse().map_err(|_| bad())? },
            ("torus", Some(d)) => {
                let (rows, cols) = dims(d, spec)?;
                DatasetSpec::Torus { rows, cols }
            }
            ("blocks", None) => {
                let d = BlockGraphSpec::default();
                DatasetSpec::Blocks { blocks: d.blocks, block_size: d.block_size }
            }
            ("blocks", Some(d)) => {
                let (blocks, block_size) = dims(d, spec)?;
                DatasetSpec::Blocks { blocks, block_size }
            }
            _ => return Err(bad()),
        })
    }
}

impl fmt::Display for DatasetSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DatasetSpec::Builtin(name) => write!(f, "{name}"),
            DatasetSpec::EdgeList(p) => write!(f, "edges:{}", p.display()),
            DatasetSpec::Citation { content, cites } => write!(f, "citation:{},{}", content.display(), cites.display()),
            DatasetSpec::SwissRoll { n } => write!(f, "swiss-roll:{n}"),
            DatasetSpec::Torus { rows, cols } => write!(f, "torus:{rows}x{cols}"),
            DatasetSpec::Blocks { blocks, block_size } => write!(f, "blocks:{blocks}x{block_size}"),
        }
    }
}

pub fn data_root() -> PathBuf {
    std::env::var_os(DATA_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("data"))
}

/// Files a builtin name resolves to (one edge file, or content + cites).
pub fn builtin_paths(name: &str) -> Vec<PathBuf> {
    let dir = data_root().join(name);
    if CITATION_BUILTINS.contains(&name) {
        vec![dir.join(format!("{name}.content")), dir.join(format!("{name}.cites"))]
    } else {
        vec![dir.join(format!("{name}.edges"))]
    }
}

/// True when every file of the builtin dataset exists.
pub fn builtin_available(name: &str) -> bool {
    builtin_paths(name).iter().all(|p| p.is_file())
}

fn synthetic(graph: sigvae_core::graph::Graph) -> Loaded {
    let n = graph.n();
    Loaded {
        graph,
        self_loops_dropped: 0,
        unknown_refs_dropped: 0,
        node_names: (0..n).map(|i| i.to_string()).collect(),
        label_names: Vec::new(),
    }
}

impl DatasetSpec {
    /// Loads or generates the graph; `seed` only affects synthetic specs.
    pub fn load(&self, seed: u64) -> Result<Loaded> {
        match self {
            DatasetSpec::Builtin(name) => {
                let paths = builtin_paths(name);
                if CITATION_BUILTINS.contains(&name.as_str()) {
                    load_citation_dataset(&paths[0], &paths[1])
                } else {
                    load_edge_list(&paths[0])
                }
            }
            DatasetSpec::EdgeList(p) => load_edge_list(p),
            DatasetSpec::Citation { content, cites } => load_citation_dataset(content, cites),
            DatasetSpec::SwissRoll { n } => {
                let target = (SWISS_ROLL_EDGES * n).div_ceil(SWISS_ROLL_NODES);
                let roll = swiss_roll_tuned(*n, target, seed)?;
                if roll.components > 1 {
                    log::warn!("swiss roll has {} connected components", roll.components);
                }
                Ok(synthetic(roll.graph))
            }
            DatasetSpec::Torus { rows, cols } => Ok(synthetic(torus_graph(*rows, *cols)?)),
            DatasetSpec::Blocks { blocks, block_size } => {
                let spec = BlockGraphSpec { blocks: *blocks, block_size: *block_size, ..BlockGraphSpec::default() };
                Ok(synthetic(attributed_block_graph(&spec, seed)?))
            }
        }
    }
}

/// Parses and loads in one step.
pub fn load_dataset(spec: &str, seed: u64) -> Result<Loaded> {
    spec.parse::<DatasetSpec>()?.load(seed)
}
