//! k-nearest-neighbor entropy and mutual-information estimators under the max-norm,
//! and a Monte Carlo comparison of them against the cross-entropy control model.
//!
//! Inputs receive a tiny deterministic jitter before any distance is computed, since
//! ratio features tie constantly. The jitter of a point depends only on its own content
//! (coordinates, label, and how many identical points precede it), and points are put
//! in a canonical order afterwards, so every estimate is a function of the multiset of
//! samples: permuting the input cannot change a single bit of the result.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::digamma;
use xxhash_rust::xxh64::Xxh64;

use crate::corpus::{entropy_of_counts, stratified_subsample, Dataset};
use crate::error::{Error, Result};
use crate::features::HashingConfig;
use crate::seed::derive_seed;
use crate::shortcuts::FeatureSet;
use crate::tsi::{fit_control, hashed_examples, shortcut_examples, TsiConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    KlContinuous,
    PluginDiscrete,
    MixedMi,
    MixedConditional,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyEstimate {
    pub value_nats: f64,
    pub k: usize,
    pub n: usize,
    pub estimator: Estimator,
    /// Set by `mixed_conditional` when the value falls outside `[0, ln m]`.
    pub out_of_range: bool,
}

impl EntropyEstimate {
    fn new(value_nats: f64, k: usize, n: usize, estimator: Estimator) -> Self {
        EntropyEstimate {
            value_nats,
            k,
            n,
            estimator,
            out_of_range: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KnnOptions {
    pub k: usize,
    pub jitter: f64,
    pub seed: u64,
    /// Space-partitioning search; brute force when off. One-dimensional data is always
    /// searched by sorting when this is on.
    pub use_tree: bool,
}

impl Default for KnnOptions {
    fn default() -> Self {
        KnnOptions {
            k: 3,
            jitter: 1e-10,
            seed: 0,
            use_tree: true,
        }
    }
}

impl KnnOptions {
    pub fn with_k(k: usize) -> Self {
        KnnOptions {
            k,
            ..KnnOptions::default()
        }
    }
}

/// Row-major points of equal dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct Points {
    dim: usize,
    data: Vec<f64>,
}

impl Points {
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if dim == 0 || rows.iter().any(|r| r.len() != dim) {
            return Err(Error::NotEnoughPoints("points must be non-empty with equal positive dimension".into()));
        }
        if rows.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite coordinate"));
        }
        Ok(Points { dim, data: rows.concat() })
    }

    pub fn from_column(values: &[f64]) -> Result<Self> {
        let rows: Vec<Vec<f64>> = values.iter().map(|&v| vec![v]).collect();
        Points::from_rows(&rows)
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }
}

fn jitter_unit(coords: &[f64], label: usize, occurrence: usize, seed: u64, axis: usize) -> f64 {
    let mut h = Xxh64::new(seed);
    for c in coords {
        h.update(&c.to_bits().to_le_bytes());
    }
    h.update(&(label as u64).to_le_bytes());
    h.update(&(occurrence as u64).to_le_bytes());
    h.update(&(axis as u64).to_le_bytes());
    (h.digest() >> 11) as f64 / (1u64 << 53) as f64
}

/// Jittered points with labels, in canonical (lexicographic) order.
fn canonicalize(points: &Points, labels: &[usize], opts: &KnnOptions) -> (Points, Vec<usize>) {
    let mut seen: HashMap<(Vec<u64>, usize), usize> = HashMap::new();
    let mut rows: Vec<(Vec<f64>, usize)> = (0..points.len())
        .map(|i| {
            let src = points.row(i);
            let key = (src.iter().map(|v| v.to_bits()).collect(), labels[i]);
            let occ = seen.entry(key).or_insert(0);
            let row = src
                .iter()
                .enumerate()
                .map(|(a, &v)| v + opts.jitter * jitter_unit(src, labels[i], *occ, opts.seed, a))
                .collect();
            *occ += 1;
            (row, labels[i])
        })
        .collect();
    rows.sort_by(|a, b| {
        a.0.iter()
            .zip(&b.0)
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.1.cmp(&b.1))
    });
    let dim = points.dim;
    let labels = rows.iter().map(|r| r.1).collect();
    let data = rows.into_iter().flat_map(|r| r.0).collect();
    (Points { dim, data }, labels)
}

fn max_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Exact neighbor queries over one point set.
trait NeighborIndex: Sync {
    /// Distance from point `i` of the set to its k-th nearest other point.
    fn kth_distance(&self, i: usize, k: usize) -> f64;
    /// Points of the set within distance `r` (inclusive) of `q`, counting `q` itself
    /// when it belongs to the set.
    fn count_within(&self, q: &[f64], r: f64) -> usize;
}

struct Brute<'a> {
    pts: &'a Points,
}

impl NeighborIndex for Brute<'_> {
    fn kth_distance(&self, i: usize, k: usize) -> f64 {
        let q = self.pts.row(i);
        let mut d: Vec<f64> = (0..self.pts.len())
            .filter(|&j| j != i)
            .map(|j| max_dist(q, self.pts.row(j)))
            .collect();
        d.select_nth_unstable_by(k - 1, f64::total_cmp);
        d[k - 1]
    }

    fn count_within(&self, q: &[f64], r: f64) -> usize {
        (0..self.pts.len()).filter(|&j| max_dist(q, self.pts.row(j)) <= r).count()
    }
}

/// One-dimensional index: the points sorted by value.
struct Sorted {
    values: Vec<f64>,
}

impl Sorted {
    fn new(pts: &Points) -> Self {
        let mut values = pts.data.clone();
        values.sort_by(f64::total_cmp);
        Sorted { values }
    }
}

impl NeighborIndex for Sorted {
    fn kth_distance(&self, i: usize, k: usize) -> f64 {
        // Canonical order is already sorted for d = 1, so `i` indexes `values`.
        let v = &self.values;
        let x = v[i];
        let (mut lo, mut hi) = (i, i + 1);
        let mut d = 0.0;
        for _ in 0..k {
            let left = (lo > 0).then(|| x - v[lo - 1]);
            let right = (hi < v.len()).then(|| v[hi] - x);
            match (left, right) {
                (Some(l), Some(r)) if l <= r => {
                    d = l;
                    lo -= 1;
                }
                (Some(l), None) => {
                    d = l;
                    lo -= 1;
                }
                (_, Some(r)) => {
                    d = r;
                    hi += 1;
                }
                (None, None) => unreachable!("k < n is checked by callers"),
            }
        }
        d
    }

    fn count_within(&self, q: &[f64], r: f64) -> usize {
        let (x, v) = (q[0], &self.values);
        let mut lo = v.partition_point(|&a| a < x - r);
        let mut hi = v.partition_point(|&a| a <= x + r);
        // Settle the edges with the exact distance used everywhere else.
        while lo > 0 && (x - v[lo - 1]).abs() <= r {
            lo -= 1;
        }
        while lo < hi && (x - v[lo]).abs() > r {
            lo += 1;
        }
        while hi < v.len() && (v[hi] - x).abs() <= r {
            hi += 1;
        }
        while hi > lo && (v[hi - 1] - x).abs() > r {
            hi -= 1;
        }
        hi - lo
    }
}

const LEAF: usize = 16;

struct Node {
    lo: Vec<f64>,
    hi: Vec<f64>,
    start: usize,
    end: usize,
    children: Option<(usize, usize)>,
}

/// kd-tree over the max-norm with bounding boxes per node.
struct KdTree<'a> {
    pts: &'a Points,
    order: Vec<usize>,
    nodes: Vec<Node>,
}

impl<'a> KdTree<'a> {
    fn new(pts: &'a Points) -> Self {
        let mut tree = KdTree {
            pts,
            order: (0..pts.len()).collect(),
            nodes: Vec::new(),
        };
        tree.build(0, pts.len());
        tree
    }

    fn build(&mut self, start: usize, end: usize) -> usize {
        let dim = self.pts.dim;
        let mut lo = vec![f64::INFINITY; dim];
        let mut hi = vec![f64::NEG_INFINITY; dim];
        for &i in &self.order[start..end] {
            for (a, &v) in self.pts.row(i).iter().enumerate() {
                lo[a] = lo[a].min(v);
                hi[a] = hi[a].max(v);
            }
        }
        let id = self.nodes.len();
        let axis = (0..dim)
            .max_by(|&a, &b| (hi[a] - lo[a]).total_cmp(&(hi[b] - lo[b])))
            .unwrap();
        let spread = hi[axis] - lo[axis];
        self.nodes.push(Node {
            lo,
            hi,
            start,
            end,
            children: None,
        });
        if end - start > LEAF && spread > 0.0 {
            let mid = start + (end - start) / 2;
            let pts = self.pts;
            self.order[start..end]
                .select_nth_unstable_by(mid - start, |&a, &b| pts.row(a)[axis].total_cmp(&pts.row(b)[axis]));
            let left = self.build(start, mid);
            let right = self.build(mid, end);
            self.nodes[id].children = Some((left, right));
        }
        id
    }

    fn min_dist(node: &Node, q: &[f64]) -> f64 {
        q.iter()
            .enumerate()
            .map(|(a, &v)| (node.lo[a] - v).max(v - node.hi[a]).max(0.0))
            .fold(0.0, f64::max)
    }

    fn far_dist(node: &Node, q: &[f64]) -> f64 {
        q.iter()
            .enumerate()
            .map(|(a, &v)| (v - node.lo[a]).abs().max((node.hi[a] - v).abs()))
            .fold(0.0, f64::max)
    }

    fn knn(&self, node: usize, q: &[f64], skip: usize, best: &mut Vec<f64>, k: usize) {
        let n = &self.nodes[node];
        if best.len() == k && Self::min_dist(n, q) > best[k - 1] {
            return;
        }
        match n.children {
            None => {
                for &j in &self.order[n.start..n.end] {
                    if j == skip {
                        continue;
                    }
                    let d = max_dist(q, self.pts.row(j));
                    if best.len() < k || d < best[k - 1] {
                        let at = best.partition_point(|&b| b <= d);
                        best.insert(at, d);
                        best.truncate(k);
                    }
                }
            }
            Some((l, r)) => {
                let (first, second) = if Self::min_dist(&self.nodes[l], q) <= Self::min_dist(&self.nodes[r], q) {
                    (l, r)
                } else {
                    (r, l)
                };
                self.knn(first, q, skip, best, k);
                self.knn(second, q, skip, best, k);
            }
        }
    }

    fn count(&self, node: usize, q: &[f64], r: f64) -> usize {
        let n = &self.nodes[node];
        if Self::min_dist(n, q) > r {
            return 0;
        }
        if Self::far_dist(n, q) <= r {
            return n.end - n.start;
        }
        match n.children {
            None => self.order[n.start..n.end]
                .iter()
                .filter(|&&j| max_dist(q, self.pts.row(j)) <= r)
                .count(),
            Some((a, b)) => self.count(a, q, r) + self.count(b, q, r),
        }
    }
}

impl NeighborIndex for KdTree<'_> {
    fn kth_distance(&self, i: usize, k: usize) -> f64 {
        let mut best = Vec::with_capacity(k + 1);
        self.knn(0, self.pts.row(i), i, &mut best, k);
        best[k - 1]
    }

    fn count_within(&self, q: &[f64], r: f64) -> usize {
        self.count(0, q, r)
    }
}

fn index<'a>(pts: &'a Points, opts: &KnnOptions) -> Box<dyn NeighborIndex + 'a> {
    match (opts.use_tree, pts.dim) {
        (true, 1) => Box::new(Sorted::new(pts)),
        (true, _) => Box::new(KdTree::new(pts)),
        (false, _) => Box::new(Brute { pts }),
    }
}

fn check_options(opts: &KnnOptions) -> Result<()> {
    if opts.k == 0 || !(opts.jitter >= 0.0 && opts.jitter.is_finite()) {
        return Err(Error::invalid("k must be positive and jitter finite and non-negative"));
    }
    Ok(())
}

/// Kozachenko-Leonenko: `psi(n) - psi(k) + d * mean(ln(2 r_i))` with `r_i` the max-norm
/// distance to the k-th neighbor.
pub fn kl_entropy(points: &Points, opts: &KnnOptions) -> Result<EntropyEstimate> {
    check_options(opts)?;
    let n = points.len();
    if n <= opts.k {
        return Err(Error::NotEnoughPoints(format!("{n} points for k = {}", opts.k)));
    }
    let (pts, _) = canonicalize(points, &vec![0; n], opts);
    let idx = index(&pts, opts);
    let radii: Vec<f64> = (0..n).into_par_iter().map(|i| idx.kth_distance(i, opts.k)).collect();
    if radii.iter().any(|&r| r <= 0.0) {
        return Err(Error::invalid("zero neighbor distance after jitter"));
    }
    let mean_log = radii.iter().map(|r| (2.0 * r).ln()).sum::<f64>() / n as f64;
    let h = digamma(n as f64) - digamma(opts.k as f64) + pts.dim as f64 * mean_log;
    Ok(EntropyEstimate::new(h, opts.k, n, Estimator::KlContinuous))
}

/// Plug-in entropy of empirical label frequencies.
pub fn plugin_discrete(labels: &[usize]) -> Result<EntropyEstimate> {
    if labels.is_empty() {
        return Err(Error::NotEnoughPoints("no labels".into()));
    }
    let m = labels.iter().max().unwrap() + 1;
    let mut counts = vec![0usize; m];
    for &y in labels {
        counts[y] += 1;
    }
    Ok(EntropyEstimate::new(
        entropy_of_counts(&counts),
        0,
        labels.len(),
        Estimator::PluginDiscrete,
    ))
}

/// Ross's estimator for continuous `x` and discrete `y`:
/// `psi(n) - mean(psi(n_y)) + psi(k) - mean(psi(m_i))`, where `m_i` counts the other
/// points of the whole sample within the distance to the k-th same-class neighbor. The
/// raw value is returned, even when negative.
pub fn mixed_mi(x: &Points, y: &[usize], opts: &KnnOptions) -> Result<EntropyEstimate> {
    check_options(opts)?;
    let n = x.len();
    if y.len() != n {
        return Err(Error::invalid("x and y differ in length"));
    }
    let (pts, labels) = canonicalize(x, y, opts);
    let mut classes: Vec<(usize, Vec<usize>)> = Vec::new();
    {
        let mut by: std::collections::BTreeMap<usize, Vec<usize>> = std::collections::BTreeMap::new();
        for (i, &c) in labels.iter().enumerate() {
            by.entry(c).or_default().push(i);
        }
        classes.extend(by);
    }
    if let Some((c, members)) = classes.iter().find(|(_, m)| m.len() <= opts.k) {
        return Err(Error::NotEnoughPoints(format!(
            "class {c} has {} members, need more than k = {}",
            members.len(),
            opts.k
        )));
    }
    let full = index(&pts, opts);
    let mut per_point = vec![(0.0, 0.0); n];
    for (_, members) in &classes {
        let sub = Points {
            dim: pts.dim,
            data: members.iter().flat_map(|&i| pts.row(i).iter().copied()).collect(),
        };
        let sub_idx = index(&sub, opts);
        let n_c = members.len() as f64;
        let vals: Vec<(usize, f64)> = (0..members.len())
            .into_par_iter()
            .map(|local| {
                let r = sub_idx.kth_distance(local, opts.k);
                let global = members[local];
                let m_i = full.count_within(pts.row(global), r) - 1;
                (global, digamma(m_i as f64))
            })
            .collect();
        for (global, psi_m) in vals {
            per_point[global] = (digamma(n_c), psi_m);
        }
    }
    let nf = n as f64;
    let mean_psi_ny = per_point.iter().map(|p| p.0).sum::<f64>() / nf;
    let mean_psi_m = per_point.iter().map(|p| p.1).sum::<f64>() / nf;
    let mi = digamma(nf) - mean_psi_ny + digamma(opts.k as f64) - mean_psi_m;
    Ok(EntropyEstimate::new(mi, opts.k, n, Estimator::MixedMi))
}

/// `H(Y|X) = H_plugin(Y) - I(X; Y)`, flagged when outside `[0, ln m]` with `m` the
/// number of distinct labels present.
pub fn mixed_conditional(x: &Points, y: &[usize], opts: &KnnOptions) -> Result<EntropyEstimate> {
    let h = plugin_discrete(y)?;
    let mi = mixed_mi(x, y, opts)?;
    let value = h.value_nats - mi.value_nats;
    let present = y.iter().collect::<std::collections::BTreeSet<_>>().len().max(1);
    let mut est = EntropyEstimate::new(value, opts.k, x.len(), Estimator::MixedConditional);
    est.out_of_range = value < 0.0 || value > (present as f64).ln();
    Ok(est)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McRow {
    pub seed: u64,
    pub n: usize,
    pub k: usize,
    pub h_y: f64,
    pub h_y_given_xs_knn: f64,
    pub nll_control: f64,
    /// `h_y_given_xs_knn - nll_control`.
    pub gap: f64,
    pub negative_flag: bool,
    /// kNN `H(Y|X)` on hashed full inputs; `None` when the hashed dimension exceeds the cap.
    pub h_y_given_x_knn: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McSummary {
    pub seeds: usize,
    pub mean_knn: f64,
    pub std_knn: f64,
    pub mean_nll_control: f64,
    pub std_nll_control: f64,
    pub mean_gap: f64,
    pub mean_abs_gap: f64,
    pub negative_count: usize,
    pub x_side: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McComparison {
    pub feature_set: FeatureSet,
    pub rows: Vec<McRow>,
    pub summary: McSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct McConfig {
    pub subset_size: usize,
    pub seeds: Vec<u64>,
    pub knn: KnnOptions,
    /// Largest hashed dimension for which the full-input side is estimated.
    pub x_dim_cap: usize,
}

impl Default for McConfig {
    fn default() -> Self {
        McConfig {
            subset_size: 2000,
            seeds: (0..10).collect(),
            knn: KnnOptions::default(),
            x_dim_cap: 16,
        }
    }
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = if v.len() > 1 {
        v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

/// For every seed: a stratified subsample of `train` of about `subset_size` samples,
/// the kNN estimate of `H(Y|X_s)` on it, and the dev NLL of a control model trained on
/// the same subsample.
pub fn mc_compare(
    train: &Dataset,
    dev: &Dataset,
    features: FeatureSet,
    mc: &McConfig,
    config: &TsiConfig,
) -> Result<McComparison> {
    if mc.subset_size == 0 || mc.subset_size > train.len() {
        return Err(Error::invalid(format!(
            "subset size {} must lie in 1..={}",
            mc.subset_size,
            train.len()
        )));
    }
    if mc.seeds.is_empty() {
        return Err(Error::invalid("mc_compare needs at least one seed"));
    }
    features.check_applicable(train.is_pair())?;
    let fraction = mc.subset_size as f64 / train.len() as f64;
    let x_side = config.hashing.dims <= mc.x_dim_cap;
    let rows = mc
        .seeds
        .par_iter()
        .map(|&seed| {
            let sub = stratified_subsample(train, fraction, derive_seed(seed, "mc-subsample"))?;
            let xs = shortcut_examples(&sub, features, &config.stopwords)?;
            let rows: Vec<Vec<f64>> = (0..xs.len())
                .map(|i| match xs.row(i) {
                    crate::model::InputRow::Dense(r) => r.to_vec(),
                    crate::model::InputRow::Sparse(_) => unreachable!("shortcut inputs are dense"),
                })
                .collect();
            let labels = sub.labels();
            let knn = KnnOptions {
                seed: derive_seed(seed, "jitter"),
                ..mc.knn
            };
            let cond = mixed_conditional(&Points::from_rows(&rows)?, &labels, &knn)?;
            let h_y = plugin_discrete(&labels)?.value_nats;
            let control = fit_control(&sub, dev, features, config, seed)?;
            let h_x = if x_side {
                Some(hashed_conditional(&sub, &config.hashing, &labels, &knn)?)
            } else {
                None
            };
            Ok(McRow {
                seed,
                n: sub.len(),
                k: knn.k,
                h_y,
                h_y_given_xs_knn: cond.value_nats,
                nll_control: control.dev.nll_nats,
                gap: cond.value_nats - control.dev.nll_nats,
                negative_flag: cond.value_nats < 0.0,
                h_y_given_x_knn: h_x,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let knn_vals: Vec<f64> = rows.iter().map(|r| r.h_y_given_xs_knn).collect();
    let nll_vals: Vec<f64> = rows.iter().map(|r| r.nll_control).collect();
    let (mean_knn, std_knn) = mean_std(&knn_vals);
    let (mean_nll, std_nll) = mean_std(&nll_vals);
    let n = rows.len() as f64;
    let summary = McSummary {
        seeds: rows.len(),
        mean_knn,
        std_knn,
        mean_nll_control: mean_nll,
        std_nll_control: std_nll,
        mean_gap: rows.iter().map(|r| r.gap).sum::<f64>() / n,
        mean_abs_gap: rows.iter().map(|r| r.gap.abs()).sum::<f64>() / n,
        negative_count: rows.iter().filter(|r| r.negative_flag).count(),
        x_side: if x_side {
            "estimated".into()
        } else {
            format!("not applicable: hashed dim {} exceeds cap {}", config.hashing.dims, mc.x_dim_cap)
        },
    };
    Ok(McComparison {
        feature_set: features,
        rows,
        summary,
    })
}

fn hashed_conditional(sub: &Dataset, hashing: &HashingConfig, labels: &[usize], knn: &KnnOptions) -> Result<f64> {
    let ex = hashed_examples(sub, hashing)?;
    let rows: Vec<Vec<f64>> = (0..ex.len())
        .map(|i| match ex.row(i) {
            crate::model::InputRow::Sparse(v) => v.to_dense(hashing.dims),
            crate::model::InputRow::Dense(r) => r.to_vec(),
        })
        .collect();
    Ok(mixed_conditional(&Points::from_rows(&rows)?, labels, knn)?.value_nats)
}

/// CSV with the documented columns
/// `seed,n,k,h_y,h_y_given_xs_knn,nll_control,gap,negative_flag`.
pub fn write_mc_csv<W: std::io::Write>(out: W, cmp: &McComparison) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "seed", "n", "k", "h_y", "h_y_given_xs_knn", "nll_control", "gap", "negative_flag", "h_y_given_x_knn",
    ])?;
    for r in &cmp.rows {
        w.write_record([
            r.seed.to_string(),
            r.n.to_string(),
            r.k.to_string(),
            r.h_y.to_string(),
            r.h_y_given_xs_knn.to_string(),
            r.nll_control.to_string(),
            r.gap.to_string(),
            r.negative_flag.to_string(),
            r.h_y_given_x_knn.map(|v| v.to_string()).unwrap_or_else(|| "n/a".into()),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}
