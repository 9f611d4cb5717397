//! Edge-list and citation-dataset readers, plus an edge-list writer.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use sigvae_core::graph::{Edge, Graph};
use sigvae_core::numerics::CsrMatrix;

use crate::error::{Error, Result};

/// A parsed graph plus what was dropped on the way in.
#[derive(Clone, Debug)]
pub struct Loaded {
    pub graph: Graph,
    pub self_loops_dropped: usize,
    pub unknown_refs_dropped: usize,
    /// Original node names, indexed by node id.
    pub node_names: Vec<String>,
    /// Class names, indexed by label id.
    pub label_names: Vec<String>,
}

pub(crate) fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn header_count(line: &str) -> Option<&str> {
    line.strip_prefix('#')?.trim().strip_prefix("n=").map(str::trim)
}

/// Parses `u v` lines; `path` is only used in messages.
pub fn parse_edge_list(text: &str, path: &Path) -> Result<Loaded> {
    let mut declared = None;
    let mut edges: Vec<Edge> = Vec::new();
    let mut self_loops = 0;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if line.starts_with('#') {
            if let Some(count) = header_count(line) {
                let n = count
                    .parse::<usize>()
                    .map_err(|_| Error::parse(path, line_no, format!("bad node count {count:?}")))?;
                declared = Some(n);
            }
            continue;
        }
        let mut fields = line.split_whitespace();
        let (Some(a), Some(b), None) = (fields.next(), fields.next(), fields.next()) else {
            return Err(Error::parse(path, line_no, format!("expected two node ids, got {line:?}")));
        };
        let id = |s: &str| s.parse::<usize>().map_err(|_| Error::parse(path, line_no, format!("bad node id {s:?}")));
        let (a, b) = (id(a)?, id(b)?);
        if a == b {
            self_loops += 1;
            continue;
        }
        edges.push((a, b));
    }
    let max_id = edges.iter().map(|&(a, b)| a.max(b) + 1).max().unwrap_or(0);
    let n = match declared {
        Some(n) if n < max_id => {
            return Err(Error::format(path, format!("header declares n={n} but node id {} appears", max_id - 1)))
        }
        Some(n) => n,
        None => max_id,
    };
    if self_loops > 0 {
        log::warn!("{}: dropped {self_loops} self-loop lines", path.display());
    }
    Ok(Loaded {
        graph: Graph::from_edges(n, edges)?,
        self_loops_dropped: self_loops,
        unknown_refs_dropped: 0,
        node_names: (0..n).map(|i| i.to_string()).collect(),
        label_names: Vec::new(),
    })
}

pub fn load_edge_list(path: &Path) -> Result<Loaded> {
    parse_edge_list(&read(path)?, path)
}

/// Parses a `.content` table (`id feat.. label`) and a `.cites` table
/// (`target source`). Citations are symmetrized; ones naming an unknown paper
/// are dropped and counted.
pub fn parse_citation(content: &str, cites: &str, content_path: &Path, cites_path: &Path) -> Result<Loaded> {
    let mut ids: HashMap<String, usize> = HashMap::new();
    let mut names = Vec::new();
    let mut raw_labels = Vec::new();
    let mut triplets = Vec::new();
    let mut arity = None;
    for (idx, raw) in content.lines().enumerate() {
        let line_no = idx + 1;
        let fields: Vec<&str> = raw.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        if fields.len() < 3 {
            return Err(Error::parse(content_path, line_no, "row needs an id, at least one feature and a label"));
        }
        let m = fields.len() - 2;
        match arity {
            None => arity = Some(m),
            Some(expected) if expected != m => {
                return Err(Error::parse(
                    content_path,
                    line_no,
                    format!("row {:?} has {m} features, earlier rows have {expected}", fields[0]),
                ))
            }
            _ => {}
        }
        let row = names.len();
        if ids.insert(fields[0].to_string(), row).is_some() {
            return Err(Error::parse(content_path, line_no, format!("duplicate paper id {:?}", fields[0])));
        }
        for (col, tok) in fields[1..=m].iter().enumerate() {
            let v: f64 = tok.parse().map_err(|_| {
                Error::parse(content_path, line_no, format!("row {:?}: bad feature value {tok:?}", fields[0]))
            })?;
            if v != 0.0 {
                triplets.push((row, col, v));
            }
        }
        names.push(fields[0].to_string());
        raw_labels.push(fields[m + 1].to_string());
    }
    let n = names.len();
    let m = arity.ok_or_else(|| Error::format(content_path, "no papers"))?;

    let label_index: BTreeMap<&str, usize> = {
        let mut sorted: Vec<&str> = raw_labels.iter().map(String::as_str).collect();
        sorted.sort_unstable();
        sorted.dedup();
        sorted.into_iter().enumerate().map(|(i, s)| (s, i)).collect()
    };
    let labels: Vec<usize> = raw_labels.iter().map(|l| label_index[l.as_str()]).collect();
    let label_names = label_index.keys().map(|s| s.to_string()).collect();

    let mut edges = Vec::new();
    let (mut unknown, mut self_loops) = (0, 0);
    for (idx, raw) in cites.lines().enumerate() {
        let fields: Vec<&str> = raw.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        if fields.len() != 2 {
            return Err(Error::parse(cites_path, idx + 1, format!("expected two paper ids, got {raw:?}")));
        }
        match (ids.get(fields[0]), ids.get(fields[1])) {
            (Some(&a), Some(&b)) if a == b => self_loops += 1,
            (Some(&a), Some(&b)) => edges.push((a, b)),
            _ => unknown += 1,
        }
    }
    if unknown > 0 {
        log::warn!("{}: dropped {unknown} citations to unknown papers", cites_path.display());
    }
    if self_loops > 0 {
        log::warn!("{}: dropped {self_loops} self-citations", cites_path.display());
    }
    let attributes = CsrMatrix::from_triplets(n, m, triplets)?;
    Ok(Loaded {
        graph: Graph::new(n, edges, Some(attributes), Some(labels))?,
        self_loops_dropped: self_loops,
        unknown_refs_dropped: unknown,
        node_names: names,
        label_names,
    })
}

pub fn load_citation_dataset(content: &Path, cites: &Path) -> Result<Loaded> {
    parse_citation(&read(content)?, &read(cites)?, content, cites)
}

/// `# n=<count>` header followed by one `u v` line per edge.
pub fn format_edge_list(n: usize, edges: &[Edge]) -> String {
    let mut out = String::with_capacity(16 * edges.len() + 16);
    let _ = writeln!(out, "# n={n}");
    for &(a, b) in edges {
        let _ = writeln!(out, "{a} {b}");
    }
    out
}

pub(crate) fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

pub fn write_edge_list(path: &Path, n: usize, edges: &[Edge]) -> Result<()> {
    write(path, format_edge_list(n, edges))
}
