//! Immutable undirected graphs, file loading, edge splits and negative sampling.

use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use log::warn;
use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, streams, StreamRng};

/// Unordered node pair, stored with the smaller id first.
pub type Pair = (usize, usize);

pub fn ordered(i: usize, j: usize) -> Pair {
    if i <= j {
        (i, j)
    } else {
        (j, i)
    }
}

/// Magic tag of the binary feature format (`b"LXF1"` read as little-endian u32).
pub const FEATURE_MAGIC: u32 = u32::from_le_bytes(*b"LXF1");

/// Undirected graph in CSR form with a dense node feature matrix.
///
/// Adjacency is symmetric, free of self-loops and duplicates, and every
/// neighbor list is sorted ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseGraph {
    num_nodes: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    features: Array2<f64>,
}

impl SparseGraph {
    /// Build from an arbitrary edge list. Edges are symmetrized and
    /// deduplicated; self-loops are dropped with a warning.
    pub fn from_edges(num_nodes: usize, edges: &[Pair], features: Array2<f64>) -> Result<Self> {
        if features.nrows() != num_nodes {
            return Err(Error::DimensionMismatch(format!(
                "feature matrix has {} rows for {} nodes",
                features.nrows(),
                num_nodes
            )));
        }
        let mut adj: Vec<Vec<usize>> = vec![Vec::new(); num_nodes];
        let mut self_loops = 0usize;
        for &(u, v) in edges {
            for id in [u, v] {
                if id >= num_nodes {
                    return Err(Error::NodeOutOfRange { id, num_nodes });
                }
            }
            if u == v {
                self_loops += 1;
                continue;
            }
            adj[u].push(v);
            adj[v].push(u);
        }
        if self_loops > 0 {
            warn!("dropped {self_loops} self-loop(s)");
        }
        let mut indptr = Vec::with_capacity(num_nodes + 1);
        indptr.push(0);
        let mut indices = Vec::new();
        for list in &mut adj {
            list.sort_unstable();
            list.dedup();
            indices.extend_from_slice(list);
            indptr.push(indices.len());
        }
        Ok(Self {
            num_nodes,
            indptr,
            indices,
            features,
        })
    }

    /// Same nodes and features, different edge set.
    pub fn with_edges(&self, edges: &[Pair]) -> Result<Self> {
        Self::from_edges(self.num_nodes, edges, self.features.clone())
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn num_edges(&self) -> usize {
        self.indices.len() / 2
    }

    pub fn feature_dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.features
    }

    pub fn indptr(&self) -> &[usize] {
        &self.indptr
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.indices[self.indptr[i]..self.indptr[i + 1]]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.indptr[i + 1] - self.indptr[i]
    }

    pub fn degrees(&self) -> Vec<usize> {
        (0..self.num_nodes).map(|i| self.degree(i)).collect()
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.neighbors(i).binary_search(&j).is_ok()
    }

    /// All undirected edges as `(u, v)` with `u < v`, in CSR order.
    pub fn edges(&self) -> Vec<Pair> {
        (0..self.num_nodes)
            .flat_map(|u| self.neighbors(u).iter().filter(move |&&v| v > u).map(move |&v| (u, v)))
            .collect()
    }

    pub fn check_node(&self, id: usize) -> Result<()> {
        if id < self.num_nodes {
            Ok(())
        } else {
            Err(Error::NodeOutOfRange {
                id,
                num_nodes: self.num_nodes,
            })
        }
    }

    /// Shared neighbors of `i` and `j` by sorted-list intersection.
    pub fn common_neighbors(&self, i: usize, j: usize) -> Result<Vec<usize>> {
        self.check_node(i)?;
        self.check_node(j)?;
        if i == j {
            return Err(Error::InvalidPair(i, j));
        }
        Ok(intersect_sorted(self.neighbors(i), self.neighbors(j)))
    }
}

pub fn intersect_sorted(a: &[usize], b: &[usize]) -> Vec<usize> {
    let (mut x, mut y) = (0, 0);
    let mut out = Vec::new();
    while x < a.len() && y < b.len() {
        match a[x].cmp(&b[y]) {
            std::cmp::Ordering::Less => x += 1,
            std::cmp::Ordering::Greater => y += 1,
            std::cmp::Ordering::Equal => {
                out.push(a[x]);
                x += 1;
                y += 1;
            }
        }
    }
    out
}

// ---------------------------------------------------------------------------
// File formats
// ---------------------------------------------------------------------------

/// Parse a whitespace-separated edge list with `#` comments. Ids are kept raw.
pub fn read_edge_list(path: &Path) -> Result<Vec<(u64, u64)>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut edges = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let body = line.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let mut parts = body.split_whitespace();
        let parse = |tok: Option<&str>| -> Result<u64> {
            tok.ok_or_else(|| {
                Error::MalformedInput(format!("{}:{}: expected two node ids", path.display(), lineno + 1))
            })?
            .parse::<u64>()
            .map_err(|e| Error::MalformedInput(format!("{}:{}: {e}", path.display(), lineno + 1)))
        };
        let u = parse(parts.next())?;
        let v = parse(parts.next())?;
        if parts.next().is_some() {
            return Err(Error::MalformedInput(format!(
                "{}:{}: more than two fields",
                path.display(),
                lineno + 1
            )));
        }
        edges.push((u, v));
    }
    Ok(edges)
}

pub fn write_edge_list(path: &Path, edges: &[Pair]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for (u, v) in edges {
        writeln!(w, "{u} {v}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Read a feature matrix, detecting the binary format by its magic header and
/// falling back to CSV.
pub fn read_features(path: &Path) -> Result<Array2<f64>> {
    let mut file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut bytes = Vec::new();
    file.read_to_end(&mut bytes).map_err(|e| Error::io(path, e))?;
    if bytes.len() >= 4 && u32::from_le_bytes(bytes[..4].try_into().unwrap()) == FEATURE_MAGIC {
        parse_features_bin(&bytes)
    } else {
        let text = String::from_utf8(bytes)
            .map_err(|_| Error::MalformedInput(format!("{}: neither UTF-8 CSV nor binary features", path.display())))?;
        parse_features_csv(&text)
    }
}

fn parse_features_bin(bytes: &[u8]) -> Result<Array2<f64>> {
    if bytes.len() < 12 {
        return Err(Error::MalformedInput("binary feature header truncated".into()));
    }
    let word = |k: usize| u32::from_le_bytes(bytes[4 * k..4 * k + 4].try_into().unwrap()) as usize;
    let (n, d) = (word(1), word(2));
    let body = &bytes[12..];
    if body.len() != n * d * 4 {
        return Err(Error::MalformedInput(format!(
            "binary features declare {n}x{d} but carry {} bytes",
            body.len()
        )));
    }
    let values = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    Ok(Array2::from_shape_vec((n, d), values).expect("shape checked"))
}

fn parse_features_csv(text: &str) -> Result<Array2<f64>> {
    let mut values = Vec::new();
    let mut width = None;
    let mut rows = 0usize;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let before = values.len();
        for tok in line.split(',') {
            let v: f64 = tok
                .trim()
                .parse()
                .map_err(|e| Error::MalformedInput(format!("feature line {}: {e}", lineno + 1)))?;
            values.push(v);
        }
        let w = values.len() - before;
        match width {
            None => width = Some(w),
            Some(expected) if expected != w => {
                return Err(Error::DimensionMismatch(format!(
                    "feature line {} has {w} columns, expected {expected}",
                    lineno + 1
                )))
            }
            _ => {}
        }
        rows += 1;
    }
    let d = width.unwrap_or(0);
    Ok(Array2::from_shape_vec((rows, d), values).expect("shape checked"))
}

pub fn write_features_csv(path: &Path, features: &Array2<f64>) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for row in features.outer_iter() {
        let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        writeln!(w, "{}", line.join(",")).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_features_bin(path: &Path, features: &Array2<f64>) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let mut put = |bytes: &[u8]| w.write_all(bytes).map_err(|e| Error::io(path, e));
    put(&FEATURE_MAGIC.to_le_bytes())?;
    put(&(features.nrows() as u32).to_le_bytes())?;
    put(&(features.ncols() as u32).to_le_bytes())?;
    for v in features.iter() {
        put(&(*v as f32).to_le_bytes())?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Load a graph whose edge file uses contiguous ids `0..N`, with `N` the
/// number of feature rows.
pub fn load_graph(edge_file: &Path, feature_file: &Path) -> Result<SparseGraph> {
    let features = read_features(feature_file)?;
    let n = features.nrows();
    let raw = read_edge_list(edge_file)?;
    let mut edges = Vec::with_capacity(raw.len());
    for (u, v) in raw {
        for id in [u, v] {
            if id as usize >= n {
                return Err(Error::MalformedInput(format!(
                    "{}: node id {id} out of range for {n} feature rows",
                    edge_file.display()
                )));
            }
        }
        edges.push((u as usize, v as usize));
    }
    SparseGraph::from_edges(n, &edges, features)
}

/// Stable mapping from arbitrary integer node ids to `0..N`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IdMap {
    original: Vec<u64>,
    compact: BTreeMap<u64, usize>,
}

impl IdMap {
    /// Ids are assigned in first-seen order.
    pub fn from_ids(ids: impl IntoIterator<Item = u64>) -> Self {
        let mut map = Self::default();
        for id in ids {
            map.insert(id);
        }
        map
    }

    pub fn insert(&mut self, id: u64) -> usize {
        if let Some(&c) = self.compact.get(&id) {
            return c;
        }
        let c = self.original.len();
        self.original.push(id);
        self.compact.insert(id, c);
        c
    }

    pub fn get(&self, id: u64) -> Option<usize> {
        self.compact.get(&id).copied()
    }

    pub fn original(&self, compact: usize) -> u64 {
        self.original[compact]
    }

    pub fn len(&self) -> usize {
        self.original.len()
    }

    pub fn is_empty(&self) -> bool {
        self.original.is_empty()
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        writeln!(w, "compact_id\toriginal_id").map_err(|e| Error::io(path, e))?;
        for (c, o) in self.original.iter().enumerate() {
            writeln!(w, "{c}\t{o}").map_err(|e| Error::io(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut map = Self::default();
        for line in BufReader::new(file).lines().skip(1) {
            let line = line.map_err(|e| Error::io(path, e))?;
            let mut parts = line.split('\t');
            let c: usize = parts
                .next()
                .and_then(|t| t.parse().ok())
                .ok_or_else(|| Error::MalformedInput(format!("{}: bad id map line", path.display())))?;
            let o: u64 = parts
                .next()
                .and_then(|t| t.parse().ok())
                .ok_or_else(|| Error::MalformedInput(format!("{}: bad id map line", path.display())))?;
            if map.insert(o) != c {
                return Err(Error::MalformedInput(format!("{}: ids not contiguous", path.display())));
            }
        }
        Ok(map)
    }
}

// ---------------------------------------------------------------------------
// Splits and negative sampling
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeSplit {
    pub seed: u64,
    pub ratios: [f64; 3],
    pub train_pos: Vec<Pair>,
    pub val_pos: Vec<Pair>,
    pub test_pos: Vec<Pair>,
    pub train_neg: Vec<Pair>,
    pub val_neg: Vec<Pair>,
    pub test_neg: Vec<Pair>,
}

impl EdgeSplit {
    pub fn write(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        serde_json::to_writer(&mut w, self)?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_reader(BufReader::new(file))?)
    }

    /// Graph over the training positives only.
    pub fn train_graph(&self, full: &SparseGraph) -> Result<SparseGraph> {
        full.with_edges(&self.train_pos)
    }
}

/// Largest-remainder allocation of `total` items to `ratios`.
pub fn allocate(total: usize, ratios: &[f64]) -> Vec<usize> {
    let exact: Vec<f64> = ratios.iter().map(|r| r * total as f64).collect();
    let mut counts: Vec<usize> = exact.iter().map(|x| x.floor() as usize).collect();
    let mut left = total - counts.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..ratios.len()).collect();
    // larger remainder first, earlier slot wins ties
    order.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.partial_cmp(&ra).unwrap().then(a.cmp(&b))
    });
    for &k in order.iter().cycle() {
        if left == 0 {
            break;
        }
        counts[k] += 1;
        left -= 1;
    }
    counts
}

pub fn validate_ratios(ratios: [f64; 3]) -> Result<()> {
    if ratios.iter().any(|r| !(0.0..=1.0).contains(r)) || (ratios.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::Parameter(format!(
            "split ratios {ratios:?} must be in [0,1] and sum to 1"
        )));
    }
    Ok(())
}

/// Uniformly random train/val/test partition of the undirected edges, with
/// one sampled non-edge per positive in each partition.
pub fn split_edges(g: &SparseGraph, ratios: [f64; 3], seed: u64) -> Result<EdgeSplit> {
    validate_ratios(ratios)?;
    let mut edges = g.edges();
    if edges.is_empty() {
        return Err(Error::SplitInfeasible("graph has no edges".into()));
    }
    let counts = allocate(edges.len(), &ratios);
    for (k, (&c, &r)) in counts.iter().zip(&ratios).enumerate() {
        if c == 0 && r > 0.0 {
            return Err(Error::SplitInfeasible(format!(
                "{} edges cannot fill partition {k} with ratio {r}",
                edges.len()
            )));
        }
    }
    let mut rng = rng::stream(seed, streams::SPLIT);
    shuffle(&mut edges, &mut rng);
    let test_pos = edges[..counts[2]].to_vec();
    let val_pos = edges[counts[2]..counts[2] + counts[1]].to_vec();
    let train_pos = edges[counts[2] + counts[1]..].to_vec();

    let total_neg = edges.len();
    let negatives = sample_negative_edges(
        g,
        total_neg,
        &HashSet::new(),
        rng::derive_seed(seed, streams::NEGATIVES, &[]),
    )?;
    let test_neg = negatives[..counts[2]].to_vec();
    let val_neg = negatives[counts[2]..counts[2] + counts[1]].to_vec();
    let train_neg = negatives[counts[2] + counts[1]..].to_vec();
    Ok(EdgeSplit {
        seed,
        ratios,
        train_pos,
        val_pos,
        test_pos,
        train_neg,
        val_neg,
        test_neg,
    })
}

pub(crate) fn shuffle<T>(items: &mut [T], rng: &mut StreamRng) {
    for k in (1..items.len()).rev() {
        let j = rng.random_range(0..=k);
        items.swap(k, j);
    }
}

/// Distinct non-edges of `g` outside `exclude`, drawn uniformly by rejection.
pub fn sample_negative_edges(g: &SparseGraph, count: usize, exclude: &HashSet<Pair>, seed: u64) -> Result<Vec<Pair>> {
    let mut rng = rng::stream(seed, streams::NEGATIVES);
    sample_negatives_with(g, count, exclude, &mut rng)
}

pub fn sample_negatives_with(
    g: &SparseGraph,
    count: usize,
    exclude: &HashSet<Pair>,
    rng: &mut StreamRng,
) -> Result<Vec<Pair>> {
    let n = g.num_nodes();
    let max_attempts = count.saturating_mul(100);
    let mut seen: HashSet<Pair> = HashSet::with_capacity(count);
    let mut out = Vec::with_capacity(count);
    let mut attempts = 0usize;
    if n < 2 && count > 0 {
        return Err(Error::SamplingExhausted {
            requested: count,
            found: 0,
            attempts: 0,
        });
    }
    while out.len() < count {
        if attempts >= max_attempts {
            return Err(Error::SamplingExhausted {
                requested: count,
                found: out.len(),
                attempts,
            });
        }
        attempts += 1;
        let i = rng.random_range(0..n);
        let j = rng.random_range(0..n);
        if i == j {
            continue;
        }
        let p = ordered(i, j);
        if g.has_edge(p.0, p.1) || exclude.contains(&p) || !seen.insert(p) {
            continue;
        }
        out.push(p);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn graph(n: usize, edges: &[Pair]) -> SparseGraph {
        SparseGraph::from_edges(n, edges, Array2::zeros((n, 1))).unwrap()
    }

    #[test]
    fn minimal_graph() {
        let g = graph(2, &[(0, 1)]);
        assert_eq!(g.num_nodes(), 2);
        assert_eq!(g.degrees(), vec![1, 1]);
    }

    #[test]
    fn symmetrizes_and_dedups() {
        let g = graph(2, &[(0, 1), (1, 0), (0, 1)]);
        assert_eq!(g.num_edges(), 1);
        assert_eq!(g.edges(), vec![(0, 1)]);
    }

    #[test]
    fn self_loops_dropped() {
        let g = graph(3, &[(0, 0), (1, 2)]);
        assert_eq!(g.num_edges(), 1);
        assert_eq!(g.degree(0), 0);
    }

    #[test]
    fn out_of_range_and_dimension_errors() {
        assert!(matches!(
            SparseGraph::from_edges(2, &[(0, 2)], Array2::zeros((2, 1))),
            Err(Error::NodeOutOfRange { id: 2, .. })
        ));
        assert!(matches!(
            SparseGraph::from_edges(3, &[(0, 1)], Array2::zeros((2, 1))),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn common_neighbor_examples() {
        let tri = graph(3, &[(0, 1), (1, 2), (0, 2)]);
        assert_eq!(tri.common_neighbors(0, 1).unwrap(), vec![2]);
        let star = graph(5, &[(0, 1), (0, 2), (0, 3), (0, 4)]);
        assert_eq!(star.common_neighbors(1, 2).unwrap(), vec![0]);
        let two = graph(4, &[(0, 1), (2, 3)]);
        assert!(two.common_neighbors(0, 2).unwrap().is_empty());
        assert!(matches!(tri.common_neighbors(1, 1), Err(Error::InvalidPair(1, 1))));
        assert!(tri.common_neighbors(0, 9).is_err());
    }

    #[test]
    fn largest_remainder_sizes() {
        assert_eq!(allocate(10, &[0.8, 0.1, 0.1]), vec![8, 1, 1]);
        assert_eq!(allocate(7, &[0.5, 0.25, 0.25]).iter().sum::<usize>(), 7);
        let cora = allocate(5278, &[0.85, 0.05, 0.10]);
        assert_eq!(cora.iter().sum::<usize>(), 5278);
        assert!((cora[2] as i64 - 528).abs() <= 1);
    }

    #[test]
    fn split_sizes_and_determinism() {
        let edges: Vec<Pair> = (0..10).map(|k| (k, k + 1)).collect();
        let g = graph(12, &edges);
        let a = split_edges(&g, [0.8, 0.1, 0.1], 3).unwrap();
        let b = split_edges(&g, [0.8, 0.1, 0.1], 3).unwrap();
        assert_eq!(a, b);
        assert_eq!((a.train_pos.len(), a.val_pos.len(), a.test_pos.len()), (8, 1, 1));
        assert_eq!((a.train_neg.len(), a.val_neg.len(), a.test_neg.len()), (8, 1, 1));
    }

    #[test]
    fn split_infeasible_and_bad_ratios() {
        let g = graph(3, &[(0, 1)]);
        assert!(matches!(
            split_edges(&g, [0.8, 0.1, 0.1], 0),
            Err(Error::SplitInfeasible(_))
        ));
        assert!(matches!(split_edges(&g, [0.8, 0.1, 0.2], 0), Err(Error::Parameter(_))));
        let empty = graph(3, &[]);
        assert!(matches!(
            split_edges(&empty, [1.0, 0.0, 0.0], 0),
            Err(Error::SplitInfeasible(_))
        ));
    }

    #[test]
    fn negative_sampling_examples() {
        let k3 = graph(3, &[(0, 1), (1, 2), (0, 2)]);
        assert!(matches!(
            sample_negative_edges(&k3, 1, &HashSet::new(), 0),
            Err(Error::SamplingExhausted { .. })
        ));
        let path = graph(3, &[(0, 1), (1, 2)]);
        assert_eq!(
            sample_negative_edges(&path, 1, &HashSet::new(), 5).unwrap(),
            vec![(0, 2)]
        );
        let exclude: HashSet<Pair> = [(0, 2)].into_iter().collect();
        assert!(sample_negative_edges(&path, 1, &exclude, 5).is_err());
    }

    #[test]
    fn feature_formats_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let x = ndarray::array![[0.5, -1.25], [3.0, 0.0], [1e-3, 7.5]];
        let csv = dir.path().join("f.csv");
        let bin = dir.path().join("f.bin");
        write_features_csv(&csv, &x).unwrap();
        write_features_bin(&bin, &x).unwrap();
        assert_eq!(read_features(&csv).unwrap(), x);
        let back = read_features(&bin).unwrap();
        for (a, b) in back.iter().zip(x.iter()) {
            assert_eq!(*a, *b as f32 as f64);
        }
    }

    #[test]
    fn load_graph_checks() {
        let dir = tempfile::tempdir().unwrap();
        let e = dir.path().join("e.txt");
        let f = dir.path().join("f.csv");
        std::fs::write(&e, "# comment\n0 1\n1 0\n\n0 1 # trailing\n").unwrap();
        std::fs::write(&f, "1,0\n0,1\n").unwrap();
        let g = load_graph(&e, &f).unwrap();
        assert_eq!(g.num_edges(), 1);
        std::fs::write(&e, "0 5\n").unwrap();
        assert!(matches!(load_graph(&e, &f), Err(Error::MalformedInput(_))));
        std::fs::write(&e, "0 x\n").unwrap();
        assert!(matches!(load_graph(&e, &f), Err(Error::MalformedInput(_))));
    }

    #[test]
    fn id_map_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let map = IdMap::from_ids([31336, 1061127, 31336, 7]);
        assert_eq!(map.len(), 3);
        assert_eq!(map.get(7), Some(2));
        let p = dir.path().join("ids.tsv");
        map.write(&p).unwrap();
        assert_eq!(IdMap::read(&p).unwrap(), map);
    }
}
