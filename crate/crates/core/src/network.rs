//! Signed weighted complete networks built from correlation matrices and
//! their balance observables.
//!
//! Triangle weights `J_ijk` are never stored; they are products of three
//! link weights looked up on demand.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::CorrelationMatrix;

/// How an exactly-zero correlation maps to a link sign.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ZeroSign {
    #[default]
    Error,
    Positive,
}

impl std::str::FromStr for ZeroSign {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "error" => Ok(ZeroSign::Error),
            "positive" => Ok(ZeroSign::Positive),
            other => Err(Error::InvalidParam(format!("unknown zero_sign `{other}`"))),
        }
    }
}

/// Link signs, row-major `n × n`, symmetric, zero on the diagonal.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SignState {
    n: usize,
    signs: Vec<i8>,
}

impl SignState {
    pub fn all_positive(n: usize) -> Self {
        Self::from_fn(n, |_, _| 1)
    }

    pub fn random<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Self {
        Self::from_fn(n, |_, _| if rng.random::<bool>() { 1 } else { -1 })
    }

    /// Fills the upper triangle from `f(i, j)` with `i < j` and mirrors it.
    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> i8) -> Self {
        let mut signs = vec![0i8; n * n];
        for i in 0..n {
            for j in i + 1..n {
                let s = if f(i, j) < 0 { -1 } else { 1 };
                signs[i * n + j] = s;
                signs[j * n + i] = s;
            }
        }
        SignState { n, signs }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> i8 {
        self.signs[i * self.n + j]
    }

    pub fn flip(&mut self, i: usize, j: usize) {
        assert_ne!(i, j, "diagonal has no sign");
        self.signs[i * self.n + j] = -self.signs[i * self.n + j];
        self.signs[j * self.n + i] = -self.signs[j * self.n + i];
    }

    /// Flips every link at once.
    pub fn negated(&self) -> Self {
        SignState {
            n: self.n,
            signs: self.signs.iter().map(|s| -s).collect(),
        }
    }

    pub fn link_mean(&self) -> f64 {
        let n = self.n;
        let links = n * (n - 1) / 2;
        let sum: i64 = (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .map(|(i, j)| self.get(i, j) as i64)
            .sum();
        sum as f64 / links as f64
    }
}

/// Quenched link weights `|C_ij|` plus the data signs `sgn(C_ij)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SignedWeightedNetwork {
    n: usize,
    weights: Vec<f64>,
    data_signs: SignState,
}

impl SignedWeightedNetwork {
    /// Builds from symmetric link weights (`weights[i][j]` for `i < j` is read).
    pub fn from_weights(n: usize, weights: &[f64], data_signs: SignState) -> Result<Self> {
        if weights.len() != n * n {
            return Err(Error::DimensionMismatch {
                expected: n * n,
                found: weights.len(),
            });
        }
        if data_signs.n() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: data_signs.n(),
            });
        }
        if n < 3 {
            return Err(Error::TooFewTickers(n));
        }
        let mut w = vec![0.0; n * n];
        for i in 0..n {
            for j in i + 1..n {
                let v = weights[i * n + j];
                if !(0.0..=1.0).contains(&v) {
                    return Err(Error::InvalidParam(format!("weight ({i}, {j}) = {v} outside [0, 1]")));
                }
                w[i * n + j] = v;
                w[j * n + i] = v;
            }
        }
        Ok(SignedWeightedNetwork {
            n,
            weights: w,
            data_signs,
        })
    }

    /// Every link weighted `w`, all data signs positive.
    pub fn uniform(n: usize, w: f64) -> Result<Self> {
        Self::from_weights(n, &vec![w; n * n], SignState::all_positive(n))
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn links(&self) -> usize {
        self.n * (self.n - 1) / 2
    }

    #[inline]
    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.weights[i * self.n + j]
    }

    /// Row-major weight matrix with zero diagonal.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn data_signs(&self) -> &SignState {
        &self.data_signs
    }

    #[inline]
    pub fn triangle_weight(&self, i: usize, j: usize, k: usize) -> f64 {
        self.weight(i, j) * self.weight(j, k) * self.weight(k, i)
    }

    /// All `n choose 3` triangle weights, ordered by `i < j < k`.
    pub fn triangle_weights(&self) -> Vec<f64> {
        let n = self.n;
        let mut out = Vec::with_capacity(n * (n - 1) * (n - 2) / 6);
        for i in 0..n {
            for j in i + 1..n {
                for k in j + 1..n {
                    out.push(self.triangle_weight(i, j, k));
                }
            }
        }
        out
    }

    /// `Σ_k J_ijk`, the normalizer of the weighted two-star on link `(i, j)`.
    pub fn star_weight(&self, i: usize, j: usize) -> f64 {
        (0..self.n)
            .filter(|&k| k != i && k != j)
            .map(|k| self.triangle_weight(i, j, k))
            .sum()
    }

    fn check_state(&self, state: &SignState) -> Result<()> {
        if state.n() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                found: state.n(),
            });
        }
        Ok(())
    }
}

pub fn build_network(corr: &CorrelationMatrix) -> Result<SignedWeightedNetwork> {
    build_network_with(corr, ZeroSign::Error)
}

pub fn build_network_with(corr: &CorrelationMatrix, zero_sign: ZeroSign) -> Result<SignedWeightedNetwork> {
    let n = corr.n();
    let mut weights = vec![0.0; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let c = corr.get(i, j);
            if c == 0.0 && zero_sign == ZeroSign::Error {
                return Err(Error::ZeroCorrelation(i, j));
            }
            weights[i * n + j] = c.abs();
        }
    }
    let signs = SignState::from_fn(n, |i, j| if corr.get(i, j) < 0.0 { -1 } else { 1 });
    SignedWeightedNetwork::from_weights(n, &weights, signs)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    pub raw: f64,
    pub normalized: f64,
    pub j_total: f64,
}

/// `H = -Σ_{i>j>k} J_ijk s_ij s_jk s_ki`, also normalized by `Σ J_ijk`.
pub fn energy(net: &SignedWeightedNetwork, state: &SignState) -> Result<EnergyReport> {
    net.check_state(state)?;
    let n = net.n();
    let mut raw = 0.0;
    let mut j_total = 0.0;
    for i in 0..n {
        for j in 0..i {
            for k in 0..j {
                let jw = net.triangle_weight(i, j, k);
                let product = state.get(i, j) * state.get(j, k) * state.get(k, i);
                raw -= jw * product as f64;
                j_total += jw;
            }
        }
    }
    let normalized = if j_total > 0.0 { raw / j_total } else { 0.0 };
    Ok(EnergyReport {
        raw,
        normalized,
        j_total,
    })
}

/// `Σ_{k≠i,j} J_ijk s_jk s_ki`, the weighted two-star field on link `(i, j)`.
pub fn local_field(net: &SignedWeightedNetwork, state: &SignState, i: usize, j: usize) -> f64 {
    assert_ne!(i, j, "a link needs two distinct nodes");
    (0..net.n())
        .filter(|&k| k != i && k != j)
        .map(|k| net.triangle_weight(i, j, k) * (state.get(j, k) * state.get(k, i)) as f64)
        .sum()
}

/// Energy change from flipping link `(i, j)`.
pub fn delta_energy(net: &SignedWeightedNetwork, state: &SignState, i: usize, j: usize) -> f64 {
    2.0 * state.get(i, j) as f64 * local_field(net, state, i, j)
}

/// Link-averaged two-star field, each link divided by its own `Σ_k J_ijk`.
pub fn mean_two_star(net: &SignedWeightedNetwork, state: &SignState) -> Result<f64> {
    net.check_state(state)?;
    let n = net.n();
    let mut total = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            let norm = net.star_weight(i, j);
            if norm == 0.0 {
                return Err(Error::ZeroWeightStar(i, j));
            }
            total += local_field(net, state, i, j) / norm;
        }
    }
    Ok(total / net.links() as f64)
}

/// Link-averaged two-star field without normalization.
pub fn mean_two_star_raw(net: &SignedWeightedNetwork, state: &SignState) -> Result<f64> {
    net.check_state(state)?;
    let n = net.n();
    let total: f64 = (0..n)
        .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
        .map(|(i, j)| local_field(net, state, i, j))
        .sum();
    Ok(total / net.links() as f64)
}

pub const DEFAULT_LANDSCAPE_BINS: usize = 60;
pub const DEFAULT_LANDSCAPE_CAP: u64 = 300;

/// Counts of `(E_u, E_v)` for triangle pairs sharing a link, binned
/// uniformly on `[-1, 1]²`. `counts[x * bins + y]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram2D {
    pub bin_edges_x: Vec<f64>,
    pub bin_edges_y: Vec<f64>,
    pub counts: Vec<u64>,
    pub cap: u64,
}

impl Histogram2D {
    pub fn empty(bins: usize, cap: u64) -> Self {
        let edges: Vec<f64> = (0..=bins).map(|b| -1.0 + 2.0 * b as f64 / bins as f64).collect();
        Histogram2D {
            bin_edges_x: edges.clone(),
            bin_edges_y: edges,
            counts: vec![0; bins * bins],
            cap,
        }
    }

    pub fn bins(&self) -> usize {
        self.bin_edges_x.len() - 1
    }

    pub fn count(&self, x: usize, y: usize) -> u64 {
        self.counts[x * self.bins() + y]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    fn bin_of(&self, e: f64) -> usize {
        let bins = self.bins();
        let b = ((e + 1.0) / 2.0 * bins as f64).floor();
        (b.max(0.0) as usize).min(bins - 1)
    }

    pub fn add(&mut self, ex: f64, ey: f64) {
        let (x, y) = (self.bin_of(ex), self.bin_of(ey));
        let bins = self.bins();
        self.counts[x * bins + y] += 1;
    }

    pub fn bin_center(&self, b: usize) -> f64 {
        0.5 * (self.bin_edges_x[b] + self.bin_edges_x[b + 1])
    }

    /// Writes every bin as `bin_x_low,bin_y_low,count`.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let io = |e| Error::io(path, e);
        writeln!(w, "bin_x_low,bin_y_low,count").map_err(io)?;
        let bins = self.bins();
        for x in 0..bins {
            for y in 0..bins {
                writeln!(
                    w,
                    "{},{},{}",
                    crate::numfmt::f17(self.bin_edges_x[x]),
                    crate::numfmt::f17(self.bin_edges_y[y]),
                    self.count(x, y)
                )
                .map_err(io)?;
            }
        }
        w.flush().map_err(io)
    }

    /// Reads a file written by [`Histogram2D::write_csv`].
    pub fn read_csv(path: impl AsRef<Path>, cap: u64) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut rdr = csv::Reader::from_reader(file);
        let mut rows = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| Error::MalformedCsv(e.to_string()))?;
            let parse = |s: &str| s.parse::<f64>().map_err(|_| Error::MalformedCsv(format!("bad number `{s}`")));
            let count = rec[2]
                .parse::<u64>()
                .map_err(|_| Error::MalformedCsv(format!("bad count `{}`", &rec[2])))?;
            rows.push((parse(&rec[0])?, parse(&rec[1])?, count));
        }
        let bins = (rows.len() as f64).sqrt().round() as usize;
        if bins == 0 || bins * bins != rows.len() {
            return Err(Error::MalformedCsv(format!("{} is not a square grid", path.display())));
        }
        let mut h = Histogram2D::empty(bins, cap);
        for (idx, (x, y, c)) in rows.into_iter().enumerate() {
            let (bx, by) = (idx / bins, idx % bins);
            if x != h.bin_edges_x[bx] || y != h.bin_edges_y[by] {
                return Err(Error::MalformedCsv(format!("unexpected bin edges at row {}", idx + 1)));
            }
            h.counts[idx] = c;
        }
        Ok(h)
    }
}

/// Triangle energy-energy landscape: every pair of distinct triangles that
/// share a link contributes `(E_u, E_v)` and `(E_v, E_u)` with
/// `E_u = -J_u · (sign product of u)`.
pub fn energy_landscape(net: &SignedWeightedNetwork, state: &SignState, bins: usize, cap: u64) -> Result<Histogram2D> {
    net.check_state(state)?;
    if bins == 0 {
        return Err(Error::InvalidParam("landscape needs at least one bin".into()));
    }
    let n = net.n();
    let mut hist = Histogram2D::empty(bins, cap);
    let mut around = Vec::with_capacity(n);
    for i in 0..n {
        for j in i + 1..n {
            around.clear();
            for k in (0..n).filter(|&k| k != i && k != j) {
                let product = state.get(i, j) * state.get(j, k) * state.get(k, i);
                around.push(-net.triangle_weight(i, j, k) * product as f64);
            }
            for (a, &eu) in around.iter().enumerate() {
                for &ev in &around[a + 1..] {
                    hist.add(eu, ev);
                    hist.add(ev, eu);
                }
            }
        }
    }
    Ok(hist)
}

/// Heatmap ordering from average-linkage agglomerative clustering on
/// `d_ij = sqrt(2 (1 - C_ij))`.
///
/// Clusters are identified by their smallest member. Among equal minimal
/// distances the pair with the lexicographically smallest identifiers
/// merges first, and the merged cluster lists the lower-identified side
/// first. Identical off-diagonal elements therefore give the identity.
#[allow(clippy::needless_range_loop)]
pub fn cluster_order(corr: &CorrelationMatrix) -> Vec<usize> {
    let n = corr.n();
    let dist = |i: usize, j: usize| (2.0 * (1.0 - corr.get(i, j))).max(0.0).sqrt();

    // (leaves in order, id = min leaf)
    let mut clusters: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    // average-linkage distances between live clusters, indexed by position
    let mut d: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| dist(i, j)).collect()).collect();

    while clusters.len() > 1 {
        let mut best = (0, 1);
        let mut best_d = f64::INFINITY;
        for a in 0..clusters.len() {
            for b in a + 1..clusters.len() {
                if d[a][b] < best_d {
                    best_d = d[a][b];
                    best = (a, b);
                }
            }
        }
        let (a, b) = best;
        // clusters stay sorted by id, so `a` holds the lower id
        let (size_a, size_b) = (clusters[a].len() as f64, clusters[b].len() as f64);
        let merged_b = clusters.remove(b);
        clusters[a].extend(merged_b);
        let row_b = d.remove(b);
        for row in d.iter_mut() {
            row.remove(b);
        }
        for c in 0..clusters.len() {
            if c == a {
                continue;
            }
            let old_c = if c < b { c } else { c + 1 };
            let v = (size_a * d[a][c] + size_b * row_b[old_c]) / (size_a + size_b);
            d[a][c] = v;
            d[c][a] = v;
        }
    }
    clusters.pop().unwrap_or_default()
}

pub fn write_order(path: impl AsRef<Path>, corr: &CorrelationMatrix, order: &[usize]) -> Result<()> {
    let path = path.as_ref();
    let line: Vec<&str> = order.iter().map(|&i| corr.tickers[i].as_str()).collect();
    std::fs::write(path, format!("{}\n", line.join(","))).map_err(|e| Error::io(path, e))
}
