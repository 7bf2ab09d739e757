use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{AnalysisError, DistanceMatrix, Result};
use crate::ast::{escape, unescape};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Linkage {
    Single,
    #[default]
    Average,
    Complete,
}

impl FromStr for Linkage {
    type Err = AnalysisError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "single" => Ok(Self::Single),
            "average" => Ok(Self::Average),
            "complete" => Ok(Self::Complete),
            other => Err(AnalysisError::UnknownOption { kind: "linkage", value: other.into() }),
        }
    }
}

impl Linkage {
    /// Lance–Williams update: distance from the union of `a` and `b` to a
    /// third cluster.
    fn combine(self, d_a: f64, size_a: usize, d_b: f64, size_b: usize) -> f64 {
        match self {
            Self::Single => d_a.min(d_b),
            Self::Complete => d_a.max(d_b),
            Self::Average => (size_a as f64 * d_a + size_b as f64 * d_b) / (size_a + size_b) as f64,
        }
    }
}

/// Merge of clusters `a < b` into cluster `id`. Leaves are clusters
/// `0..T`; the `s`-th merge creates cluster `T + s`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Merge {
    pub a: usize,
    pub b: usize,
    pub height: f64,
    pub id: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dendrogram {
    pub labels: Vec<String>,
    pub merges: Vec<Merge>,
}

impl Dendrogram {
    pub fn leaf_count(&self) -> usize {
        self.labels.len()
    }

    fn height_of(&self, cluster: usize) -> f64 {
        if cluster < self.leaf_count() {
            0.0
        } else {
            self.merges[cluster - self.leaf_count()].height
        }
    }
}

/// Bottom-up agglomeration. At each step the closest pair of active clusters
/// merges; equal distances go to the pair with the smallest ids.
pub fn agglomerate(matrix: &DistanceMatrix, linkage: Linkage) -> Result<Dendrogram> {
    let t = matrix.len();
    if t < 2 {
        return Err(AnalysisError::TooFewPoints(t));
    }
    // Slot i holds the cluster that currently owns row/column i.
    let mut dist: Vec<Vec<f64>> = (0..t).map(|i| (0..t).map(|j| matrix.get(i, j)).collect()).collect();
    let mut cluster_id: Vec<usize> = (0..t).collect();
    let mut size = vec![1usize; t];
    let mut active: Vec<usize> = (0..t).collect();
    let mut merges = Vec::with_capacity(t - 1);

    for step in 0..t - 1 {
        let mut best: Option<(f64, usize, usize, usize, usize)> = None;
        for (x, &i) in active.iter().enumerate() {
            for &j in &active[x + 1..] {
                let (lo, hi) = {
                    let (ci, cj) = (cluster_id[i], cluster_id[j]);
                    (ci.min(cj), ci.max(cj))
                };
                let key = (dist[i][j], lo, hi, i, j);
                let better = match best {
                    None => true,
                    Some(b) => key.0 < b.0 || (key.0 == b.0 && (key.1, key.2) < (b.1, b.2)),
                };
                if better {
                    best = Some(key);
                }
            }
        }
        let (height, a, b, i, j) = best.expect("two active clusters");
        for &k in &active {
            if k != i && k != j {
                let d = linkage.combine(dist[i][k], size[i], dist[j][k], size[j]);
                dist[i][k] = d;
                dist[k][i] = d;
            }
        }
        size[i] += size[j];
        cluster_id[i] = t + step;
        active.retain(|&k| k != j);
        merges.push(Merge { a, b, height, id: t + step });
    }
    Ok(Dendrogram {
        labels: matrix.labels.clone(),
        merges,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DendrogramFormat {
    Newick,
    Dot,
    Tsv,
}

impl FromStr for DendrogramFormat {
    type Err = AnalysisError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "newick" => Ok(Self::Newick),
            "dot" => Ok(Self::Dot),
            "tsv" => Ok(Self::Tsv),
            other => Err(AnalysisError::UnknownOption { kind: "dendrogram format", value: other.into() }),
        }
    }
}

impl DendrogramFormat {
    pub fn extension(self) -> &'static str {
        match self {
            Self::Newick => "nwk",
            Self::Dot => "dot",
            Self::Tsv => "tsv",
        }
    }
}

fn newick_label(label: &str) -> String {
    if label.chars().any(|c| "()[]':;, \t\n\r".contains(c)) {
        format!("'{}'", label.replace('\'', "''"))
    } else {
        label.to_owned()
    }
}

fn newick(d: &Dendrogram, cluster: usize, out: &mut String) {
    let t = d.leaf_count();
    if cluster < t {
        out.push_str(&newick_label(&d.labels[cluster]));
        return;
    }
    let merge = d.merges[cluster - t];
    out.push('(');
    for (i, child) in [merge.a, merge.b].into_iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        newick(d, child, out);
        let _ = write!(out, ":{}", merge.height - d.height_of(child));
    }
    out.push(')');
}

/// Renders a dendrogram. Newick branch lengths are height differences, so
/// leaves sit at distance `height` from their first merge.
pub fn emit_dendrogram(d: &Dendrogram, format: DendrogramFormat) -> String {
    match format {
        DendrogramFormat::Newick => {
            let mut out = String::new();
            let root = d.merges.last().map_or(0, |m| m.id);
            newick(d, root, &mut out);
            out.push_str(";\n");
            out
        }
        DendrogramFormat::Dot => {
            let mut out = String::from("digraph dendrogram {\n");
            for (i, l) in d.labels.iter().enumerate() {
                let _ = writeln!(out, "  n{i} [label=\"{}\", shape=box];", l.replace('\\', "\\\\").replace('"', "\\\""));
            }
            for m in &d.merges {
                let _ = writeln!(out, "  n{} [label=\"\", shape=point, xlabel=\"{}\"];", m.id, m.height);
                for child in [m.a, m.b] {
                    let _ = writeln!(out, "  n{} -> n{child} [label=\"{}\"];", m.id, m.height - d.height_of(child));
                }
            }
            out.push_str("}\n");
            out
        }
        DendrogramFormat::Tsv => {
            let mut out = String::from("# dendrogram 1\n");
            for (i, l) in d.labels.iter().enumerate() {
                let _ = writeln!(out, "leaf\t{i}\t{}", escape(l));
            }
            for m in &d.merges {
                let _ = writeln!(out, "merge\t{}\t{}\t{}\t{}", m.a, m.b, m.height, m.id);
            }
            out
        }
    }
}

/// Reads the TSV form written by [`emit_dendrogram`].
pub fn parse_dendrogram_tsv(text: &str) -> Result<Dendrogram> {
    let err = |line: usize, message: String| AnalysisError::Parse { line, message };
    let mut labels = Vec::new();
    let mut merges = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if raw.starts_with('#') || raw.is_empty() {
            continue;
        }
        let fields: Vec<&str> = raw.split('\t').collect();
        let num = |s: &str| s.parse::<usize>().map_err(|_| err(line, format!("bad integer `{s}`")));
        match fields.as_slice() {
            ["leaf", id, label] => {
                if num(id)? != labels.len() {
                    return Err(err(line, "leaf ids must be consecutive".into()));
                }
                labels.push(unescape(label).map_err(|e| err(line, e.to_string()))?);
            }
            ["merge", a, b, h, id] => {
                let height: f64 = h.parse().map_err(|_| err(line, format!("bad height `{h}`")))?;
                let merge = Merge { a: num(a)?, b: num(b)?, height, id: num(id)? };
                if merge.id != labels.len() + merges.len() || merge.a >= merge.id || merge.b >= merge.id {
                    return Err(err(line, "merge ids out of order".into()));
                }
                merges.push(merge);
            }
            _ => return Err(err(line, "expected a leaf or merge record".into())),
        }
    }
    if !labels.is_empty() && merges.len() + 1 != labels.len() {
        return Err(err(0, format!("{} leaves need {} merges, found {}", labels.len(), labels.len() - 1, merges.len())));
    }
    Ok(Dendrogram { labels, merges })
}
