//! Text serialization of an [`EdgeSplit`].
//!
//! ```text
//! # sigvae edge split v1
//! seed 7
//! n 120
//! train_pos 85
//! 0 4
//! ...
//! val_pos 5
//! ...
//! ```
//! Sections appear in the fixed order train_pos, val_pos, test_pos, val_neg,
//! test_neg, each announcing its length.

use std::fmt::Write as _;
use std::path::Path;

use sigvae_core::graph::{Edge, EdgeSplit};

use crate::error::{Error, Result};
use crate::io;

const MAGIC: &str = "# sigvae edge split v1";
const SECTIONS: [&str; 5] = ["train_pos", "val_pos", "test_pos", "val_neg", "test_neg"];

/// Split plus the node count of the graph it was drawn from.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SplitFile {
    pub n: usize,
    pub split: EdgeSplit,
}

fn lists(split: &EdgeSplit) -> [&Vec<Edge>; 5] {
    [&split.train_pos, &split.val_pos, &split.test_pos, &split.val_neg, &split.test_neg]
}

pub fn format_split(file: &SplitFile) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{MAGIC}");
    let _ = writeln!(out, "seed {}", file.split.seed);
    let _ = writeln!(out, "n {}", file.n);
    for (name, list) in SECTIONS.iter().zip(lists(&file.split)) {
        let _ = writeln!(out, "{name} {}", list.len());
        for &(a, b) in list {
            let _ = writeln!(out, "{a} {b}");
        }
    }
    out
}

struct Lines<'a, I> {
    it: I,
    path: &'a Path,
}

impl<'a, I: Iterator<Item = (usize, &'a str)>> Lines<'a, I> {
    fn next(&mut self, what: &str) -> Result<(usize, &'a str)> {
        self.it.next().ok_or_else(|| Error::format(self.path, format!("truncated before {what}")))
    }

    fn keyed(&mut self, key: &str) -> Result<u64> {
        let (no, line) = self.next(key)?;
        let value = line
            .strip_prefix(key)
            .and_then(|r| r.strip_prefix(' '))
            .ok_or_else(|| Error::parse(self.path, no, format!("expected `{key} <value>`")))?;
        value.parse().map_err(|_| Error::parse(self.path, no, format!("bad {key} {value:?}")))
    }
}

pub fn parse_split(text: &str, path: &Path) -> Result<SplitFile> {
    let mut lines = Lines { it: text.lines().enumerate().map(|(i, l)| (i + 1, l.trim())), path };
    let (no, magic) = lines.next("header")?;
    if magic != MAGIC {
        return Err(Error::parse(path, no, "not a sigvae split file"));
    }
    let seed = lines.keyed("seed")?;
    let n = lines.keyed("n")? as usize;
    let mut parsed: Vec<Vec<Edge>> = Vec::with_capacity(5);
    for name in SECTIONS {
        let count = lines.keyed(name)? as usize;
        let mut list = Vec::with_capacity(count);
        for _ in 0..count {
            let (no, line) = lines.next(name)?;
            let mut it = line.split_whitespace().map(str::parse::<usize>);
            match (it.next(), it.next(), it.next()) {
                (Some(Ok(a)), Some(Ok(b)), None) if a < n && b < n && a != b => list.push((a, b)),
                _ => return Err(Error::parse(path, no, format!("bad pair {line:?} in {name}"))),
            }
        }
        parsed.push(list);
    }
    let [train_pos, val_pos, test_pos, val_neg, test_neg]: [Vec<Edge>; 5] =
        parsed.try_into().expect("five sections");
    Ok(SplitFile { n, split: EdgeSplit { seed, train_pos, val_pos, test_pos, val_neg, test_neg } })
}

pub fn read_split(path: &Path) -> Result<SplitFile> {
    parse_split(&io::read(path)?, path)
}

pub fn write_split(path: &Path, file: &SplitFile) -> Result<()> {
    io::write(path, format_split(file))
}
