//! Metropolis dynamics over link signs, temperature sweeps, critical
//! temperature location and an exact-enumeration oracle for small networks.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{self, SignState, SignedWeightedNetwork};
use crate::numfmt::f17;

pub const DEFAULT_EQUIL_SWEEPS: usize = 2000;
pub const DEFAULT_MEASURE_SWEEPS: usize = 2000;
pub const DEFAULT_REPLICAS: usize = 8;
pub const DEFAULT_MIN_DROP: f64 = 0.2;
pub const DEFAULT_T_LO: f64 = 0.1;
pub const DEFAULT_T_HI: f64 = 10.0;
pub const DEFAULT_POINTS: usize = 50;
/// Largest link count `exact_ensemble` will enumerate.
pub const MAX_EXACT_LINKS: usize = 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitKind {
    Random,
    AllPositive,
    DataSigns,
}

impl std::str::FromStr for InitKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" => Ok(InitKind::Random),
            "all_positive" => Ok(InitKind::AllPositive),
            "data_signs" => Ok(InitKind::DataSigns),
            other => Err(Error::InvalidParam(format!("unknown init `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub temperature: f64,
    pub init: InitKind,
    pub equil_sweeps: usize,
    pub measure_sweeps: usize,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            temperature: 1.0,
            init: InitKind::AllPositive,
            equil_sweeps: DEFAULT_EQUIL_SWEEPS,
            measure_sweeps: DEFAULT_MEASURE_SWEEPS,
            seed: 0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.temperature > 0.0) || !self.temperature.is_finite() {
            return Err(Error::InvalidParam(format!(
                "temperature must be positive, got {}",
                self.temperature
            )));
        }
        if self.equil_sweeps < 1 || self.measure_sweeps < 1 {
            return Err(Error::InvalidParam("sweep counts must be at least 1".into()));
        }
        Ok(())
    }

    pub fn beta(&self) -> f64 {
        1.0 / self.temperature
    }
}

/// Metropolis acceptance probability `min(1, exp(-beta ΔE))`.
#[inline]
pub fn acceptance_probability(delta: f64, beta: f64) -> f64 {
    if delta <= 0.0 {
        1.0
    } else {
        (-beta * delta).exp()
    }
}

/// Instantaneous observables of one sign state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Snapshot {
    pub q_norm: f64,
    pub q_raw: f64,
    pub energy_raw: f64,
    pub energy_norm: f64,
    pub link_mean: f64,
}

/// Single-link-flip Metropolis chain.
///
/// Keeps `a_ij = w_ij s_ij` so the field on a link is
/// `w_ij · Σ_k a_ik a_jk`, a row dot product (the diagonal of `a` is zero).
pub struct Sampler<'a> {
    net: &'a SignedWeightedNetwork,
    n: usize,
    links: Vec<(usize, usize)>,
    star_norm: Vec<f64>,
    j_total: f64,
    signed: Vec<f64>,
    state: SignState,
    beta: f64,
    energy: f64,
    rng: ChaCha8Rng,
}

#[inline]
fn row_dot(m: &[f64], n: usize, i: usize, j: usize) -> f64 {
    let (ri, rj) = (&m[i * n..(i + 1) * n], &m[j * n..(j + 1) * n]);
    ri.iter().zip(rj).map(|(x, y)| x * y).sum()
}

impl<'a> Sampler<'a> {
    pub fn new(net: &'a SignedWeightedNetwork, state: SignState, beta: f64, rng: ChaCha8Rng) -> Result<Self> {
        let n = net.n();
        if state.n() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: state.n(),
            });
        }
        let links: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
        let w = net.weights();
        let mut star_norm = Vec::with_capacity(links.len());
        for &(i, j) in &links {
            let s = w[i * n + j] * row_dot(w, n, i, j);
            if s == 0.0 {
                return Err(Error::ZeroWeightStar(i, j));
            }
            star_norm.push(s);
        }
        let j_total = star_norm.iter().sum::<f64>() / 3.0;
        let mut signed = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    signed[i * n + j] = w[i * n + j] * state.get(i, j) as f64;
                }
            }
        }
        let mut sampler = Sampler {
            net,
            n,
            links,
            star_norm,
            j_total,
            signed,
            state,
            beta,
            energy: 0.0,
            rng,
        };
        sampler.energy = sampler.snapshot().energy_raw;
        Ok(sampler)
    }

    #[inline]
    fn field(&self, i: usize, j: usize) -> f64 {
        self.net.weight(i, j) * row_dot(&self.signed, self.n, i, j)
    }

    pub fn state(&self) -> &SignState {
        &self.state
    }

    /// Energy accumulated from accepted `ΔE` since the last resync.
    pub fn energy_tracked(&self) -> f64 {
        self.energy
    }

    pub fn set_beta(&mut self, beta: f64) {
        self.beta = beta;
    }

    /// One proposal on a uniformly chosen link; true if accepted.
    pub fn step(&mut self) -> bool {
        let (i, j) = self.links[self.rng.random_range(0..self.links.len())];
        let s = self.state.get(i, j) as f64;
        let delta = 2.0 * s * self.field(i, j);
        let accept = delta <= 0.0 || self.rng.random::<f64>() < acceptance_probability(delta, self.beta);
        if accept {
            let n = self.n;
            self.state.flip(i, j);
            self.signed[i * n + j] = -self.signed[i * n + j];
            self.signed[j * n + i] = -self.signed[j * n + i];
            self.energy += delta;
        }
        accept
    }

    /// `L = n(n-1)/2` proposals; returns the number accepted.
    pub fn sweep(&mut self) -> usize {
        (0..self.links.len()).filter(|_| self.step()).count()
    }

    /// Observables recomputed from scratch.
    pub fn snapshot(&self) -> Snapshot {
        let mut q_norm = 0.0;
        let mut q_raw = 0.0;
        let mut bond = 0.0;
        let mut sign_sum = 0i64;
        for (l, &(i, j)) in self.links.iter().enumerate() {
            let f = self.field(i, j);
            let s = self.state.get(i, j);
            q_raw += f;
            q_norm += f / self.star_norm[l];
            bond += s as f64 * f;
            sign_sum += s as i64;
        }
        let links = self.links.len() as f64;
        let energy_raw = -bond / 3.0;
        Snapshot {
            q_norm: q_norm / links,
            q_raw: q_raw / links,
            energy_raw,
            energy_norm: energy_raw / self.j_total,
            link_mean: sign_sum as f64 / links,
        }
    }

    /// Recomputes the energy, returns the drift of the tracked value and resyncs it.
    pub fn resync(&mut self) -> (Snapshot, f64) {
        let snap = self.snapshot();
        let drift = (snap.energy_raw - self.energy).abs();
        self.energy = snap.energy_raw;
        (snap, drift)
    }
}

/// Mean, standard deviation and batch-means standard error of a series.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Moments {
    pub mean: f64,
    pub std: f64,
    pub sem: f64,
}

const BATCHES: usize = 32;

impl Moments {
    pub fn of(xs: &[f64]) -> Self {
        let n = xs.len();
        if n == 0 {
            return Moments::default();
        }
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n as f64;
        let sem = if n >= 2 * BATCHES {
            let size = n / BATCHES;
            let means: Vec<f64> = xs
                .chunks_exact(size)
                .take(BATCHES)
                .map(|c| c.iter().sum::<f64>() / size as f64)
                .collect();
            let grand = means.iter().sum::<f64>() / BATCHES as f64;
            let bvar = means.iter().map(|m| (m - grand) * (m - grand)).sum::<f64>() / (BATCHES - 1) as f64;
            (bvar / BATCHES as f64).sqrt()
        } else if n > 1 {
            (var * n as f64 / (n - 1) as f64 / n as f64).sqrt()
        } else {
            0.0
        };
        Moments {
            mean,
            std: var.sqrt(),
            sem,
        }
    }
}

/// Observables averaged over the measurement sweeps of one run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObservableTrace {
    pub temperature: f64,
    pub q_norm: Moments,
    pub q_raw: Moments,
    pub energy_norm: Moments,
    pub energy_raw: Moments,
    pub link_mean: Moments,
    pub acceptance_rate: f64,
    pub max_energy_drift: f64,
}

impl ObservableTrace {
    pub fn q_norm_mean(&self) -> f64 {
        self.q_norm.mean
    }

    pub fn energy_norm_mean(&self) -> f64 {
        self.energy_norm.mean
    }
}

fn initial_state(net: &SignedWeightedNetwork, init: InitKind, rng: &mut ChaCha8Rng) -> SignState {
    match init {
        InitKind::Random => SignState::random(net.n(), rng),
        InitKind::AllPositive => SignState::all_positive(net.n()),
        InitKind::DataSigns => net.data_signs().clone(),
    }
}

fn measure(sampler: &mut Sampler<'_>, temperature: f64, equil: usize, sweeps: usize) -> ObservableTrace {
    for _ in 0..equil {
        sampler.sweep();
    }
    let mut series: [Vec<f64>; 5] = Default::default();
    for s in series.iter_mut() {
        s.reserve(sweeps);
    }
    let mut accepted = 0usize;
    let mut max_drift = 0f64;
    for _ in 0..sweeps {
        accepted += sampler.sweep();
        let (snap, drift) = sampler.resync();
        max_drift = max_drift.max(drift);
        series[0].push(snap.q_norm);
        series[1].push(snap.q_raw);
        series[2].push(snap.energy_norm);
        series[3].push(snap.energy_raw);
        series[4].push(snap.link_mean);
    }
    ObservableTrace {
        temperature,
        q_norm: Moments::of(&series[0]),
        q_raw: Moments::of(&series[1]),
        energy_norm: Moments::of(&series[2]),
        energy_raw: Moments::of(&series[3]),
        link_mean: Moments::of(&series[4]),
        acceptance_rate: accepted as f64 / (sweeps * sampler.links.len()) as f64,
        max_energy_drift: max_drift,
    }
}

/// Equilibrates, then averages observables over `measure_sweeps`.
pub fn metropolis_run(net: &SignedWeightedNetwork, cfg: &SimConfig) -> Result<ObservableTrace> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let state = initial_state(net, cfg.init, &mut rng);
    let mut sampler = Sampler::new(net, state, cfg.beta(), rng)?;
    Ok(measure(&mut sampler, cfg.temperature, cfg.equil_sweeps, cfg.measure_sweeps))
}

/// Boltzmann averages over every sign state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExactMeans {
    pub q_norm: f64,
    pub q_raw: f64,
    pub energy_raw: f64,
    pub energy_norm: f64,
    pub link_mean: f64,
}

/// Enumerates all `2^L` sign states with the reference observables of
/// [`crate::network`].
pub fn exact_ensemble(net: &SignedWeightedNetwork, beta: f64) -> Result<ExactMeans> {
    let n = net.n();
    let links: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
    if links.len() > MAX_EXACT_LINKS {
        return Err(Error::TooLarge {
            links: links.len(),
            max: MAX_EXACT_LINKS,
        });
    }
    let mut index = vec![0usize; n * n];
    for (l, &(i, j)) in links.iter().enumerate() {
        index[i * n + j] = l;
    }
    let state_of = |mask: u64| SignState::from_fn(n, |i, j| if mask >> index[i * n + j] & 1 == 1 { -1 } else { 1 });
    let states = 1u64 << links.len();

    let mut e_min = f64::INFINITY;
    for mask in 0..states {
        e_min = e_min.min(network::energy(net, &state_of(mask))?.raw);
    }
    let (mut z, mut qn, mut qr, mut er, mut en, mut lm) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
    for mask in 0..states {
        let s = state_of(mask);
        let e = network::energy(net, &s)?;
        let w = (-beta * (e.raw - e_min)).exp();
        z += w;
        qn += w * network::mean_two_star(net, &s)?;
        qr += w * network::mean_two_star_raw(net, &s)?;
        er += w * e.raw;
        en += w * e.normalized;
        lm += w * s.link_mean();
    }
    Ok(ExactMeans {
        q_norm: qn / z,
        q_raw: qr / z,
        energy_raw: er / z,
        energy_norm: en / z,
        link_mean: lm / z,
    })
}

/// SplitMix64 finalizer.
#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Run seed for `(window, temperature index, replica)`: each component is
/// folded in with `h = splitmix64(h ^ x)` starting from `splitmix64(base)`.
pub fn mix_seed(base: u64, window: u64, temperature: u64, replica: u64) -> u64 {
    [window, temperature, replica]
        .iter()
        .fold(splitmix64(base), |h, &x| splitmix64(h ^ x))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Schedule {
    /// Fresh initial state at every temperature.
    #[default]
    Independent,
    /// Each replica carries its state up the temperature grid.
    Anneal,
}

impl std::str::FromStr for Schedule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "independent" => Ok(Schedule::Independent),
            "anneal" => Ok(Schedule::Anneal),
            other => Err(Error::InvalidParam(format!("unknown schedule `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Spacing {
    Linear,
    Log,
}

impl std::str::FromStr for Spacing {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(Spacing::Linear),
            "log" => Ok(Spacing::Log),
            other => Err(Error::InvalidParam(format!("unknown spacing `{other}`"))),
        }
    }
}

/// Ascending grid of `points` temperatures from `lo` to `hi` inclusive.
pub fn temperature_grid(lo: f64, hi: f64, points: usize, spacing: Spacing) -> Result<Vec<f64>> {
    if !(lo > 0.0 && hi > lo) {
        return Err(Error::InvalidParam(format!("need 0 < lo < hi, got lo={lo} hi={hi}")));
    }
    if points < 2 {
        return Err(Error::InvalidParam("grid needs at least 2 points".into()));
    }
    let last = (points - 1) as f64;
    Ok((0..points)
        .map(|k| {
            let f = k as f64 / last;
            match spacing {
                Spacing::Linear => lo + f * (hi - lo),
                Spacing::Log => (lo.ln() + f * (hi.ln() - lo.ln())).exp(),
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub temperatures: Vec<f64>,
    pub replicas: usize,
    /// `traces[t][r]`.
    pub traces: Vec<Vec<ObservableTrace>>,
    pub t_c: Option<f64>,
}

/// Replica-averaged observables at one temperature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub temperature: f64,
    pub q_norm_mean: f64,
    pub q_norm_std: f64,
    pub q_raw_mean: f64,
    pub energy_norm_mean: f64,
    pub energy_norm_std: f64,
    pub link_mean: f64,
    pub acceptance_rate: f64,
    pub replicas: usize,
}

// pooled std over all replicas' samples (equal sample counts)
fn pooled(ms: impl Iterator<Item = Moments> + Clone) -> (f64, f64) {
    let k = ms.clone().count() as f64;
    let mean = ms.clone().map(|m| m.mean).sum::<f64>() / k;
    let second = ms.map(|m| m.std * m.std + m.mean * m.mean).sum::<f64>() / k;
    (mean, (second - mean * mean).max(0.0).sqrt())
}

impl SweepResult {
    pub fn rows(&self) -> Vec<SweepRow> {
        self.temperatures
            .iter()
            .zip(&self.traces)
            .map(|(&t, reps)| {
                let k = reps.len() as f64;
                let (q_norm_mean, q_norm_std) = pooled(reps.iter().map(|r| r.q_norm));
                let (energy_norm_mean, energy_norm_std) = pooled(reps.iter().map(|r| r.energy_norm));
                SweepRow {
                    temperature: t,
                    q_norm_mean,
                    q_norm_std,
                    q_raw_mean: reps.iter().map(|r| r.q_raw.mean).sum::<f64>() / k,
                    energy_norm_mean,
                    energy_norm_std,
                    link_mean: reps.iter().map(|r| r.link_mean.mean).sum::<f64>() / k,
                    acceptance_rate: reps.iter().map(|r| r.acceptance_rate).sum::<f64>() / k,
                    replicas: reps.len(),
                }
            })
            .collect()
    }

    pub fn q_norm_curve(&self) -> Vec<f64> {
        self.rows().iter().map(|r| r.q_norm_mean).collect()
    }
}

/// Independent runs per `(temperature, replica)`, seeded by [`mix_seed`]
/// from `base.seed` and `window`. Output is independent of the rayon pool size.
pub fn temperature_sweep(
    net: &SignedWeightedNetwork,
    grid: &[f64],
    replicas: usize,
    base: &SimConfig,
    schedule: Schedule,
    window: u64,
) -> Result<SweepResult> {
    if grid.is_empty() {
        return Err(Error::InvalidParam("temperature grid is empty".into()));
    }
    if grid.windows(2).any(|p| p[1] <= p[0]) {
        return Err(Error::InvalidParam("temperature grid must be strictly ascending".into()));
    }
    if replicas < 1 {
        return Err(Error::InvalidParam("replicas must be at least 1".into()));
    }
    let cfg_at = |t_idx: usize, r: usize| SimConfig {
        temperature: grid[t_idx],
        seed: mix_seed(base.seed, window, t_idx as u64, r as u64),
        ..*base
    };
    for &t in grid {
        SimConfig { temperature: t, ..*base }.validate()?;
    }

    let traces: Vec<Vec<ObservableTrace>> = match schedule {
        Schedule::Independent => {
            let flat: Vec<ObservableTrace> = (0..grid.len() * replicas)
                .into_par_iter()
                .map(|task| metropolis_run(net, &cfg_at(task / replicas, task % replicas)))
                .collect::<Result<_>>()?;
            flat.chunks(replicas).map(<[_]>::to_vec).collect()
        }
        Schedule::Anneal => {
            let per_replica: Vec<Vec<ObservableTrace>> = (0..replicas)
                .into_par_iter()
                .map(|r| {
                    let first = cfg_at(0, r);
                    let mut rng = ChaCha8Rng::seed_from_u64(first.seed);
                    let state = initial_state(net, base.init, &mut rng);
                    let mut sampler = Sampler::new(net, state, first.beta(), rng)?;
                    Ok(grid
                        .iter()
                        .map(|&t| {
                            sampler.set_beta(1.0 / t);
                            measure(&mut sampler, t, base.equil_sweeps, base.measure_sweeps)
                        })
                        .collect())
                })
                .collect::<Result<_>>()?;
            (0..grid.len())
                .map(|t| per_replica.iter().map(|reps| reps[t]).collect())
                .collect()
        }
    };

    let mut sweep = SweepResult {
        temperatures: grid.to_vec(),
        replicas,
        traces,
        t_c: None,
    };
    sweep.t_c = estimate_tc(&sweep, DEFAULT_MIN_DROP);
    Ok(sweep)
}

/// Midpoint of the adjacent grid pair with the largest drop of the
/// replica-averaged `q_norm`, or `None` when that drop is below `min_drop`.
pub fn estimate_tc(sweep: &SweepResult, min_drop: f64) -> Option<f64> {
    estimate_tc_from(&sweep.temperatures, &sweep.q_norm_curve(), min_drop)
}

pub fn estimate_tc_from(temperatures: &[f64], q_norm: &[f64], min_drop: f64) -> Option<f64> {
    if temperatures.len() < 3 || temperatures.len() != q_norm.len() {
        return None;
    }
    let mut best: Option<(usize, f64)> = None;
    for k in 0..q_norm.len() - 1 {
        let drop = q_norm[k] - q_norm[k + 1];
        if best.is_none_or(|(_, d)| drop > d) {
            best = Some((k, drop));
        }
    }
    match best {
        Some((k, drop)) if drop >= min_drop => Some(0.5 * (temperatures[k] + temperatures[k + 1])),
        _ => None,
    }
}

pub const SWEEP_HEADER: &str =
    "T,q_norm_mean,q_norm_std,q_raw_mean,energy_norm_mean,energy_norm_std,link_mean,acceptance_rate,replicas";

pub fn write_sweep_csv(path: impl AsRef<Path>, sweep: &SweepResult) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(w, "{SWEEP_HEADER}").map_err(io)?;
    for r in sweep.rows() {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{}",
            f17(r.temperature),
            f17(r.q_norm_mean),
            f17(r.q_norm_std),
            f17(r.q_raw_mean),
            f17(r.energy_norm_mean),
            f17(r.energy_norm_std),
            f17(r.link_mean),
            f17(r.acceptance_rate),
            r.replicas
        )
        .map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn read_sweep_csv(path: impl AsRef<Path>) -> Result<Vec<SweepRow>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::Reader::from_reader(file);
    let header = rdr.headers().map_err(|e| Error::MalformedCsv(e.to_string()))?;
    if header.iter().collect::<Vec<_>>().join(",") != SWEEP_HEADER {
        return Err(Error::MalformedCsv(format!("unexpected sweep header in {}", path.display())));
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::MalformedCsv(e.to_string()))?;
        let num = |k: usize| {
            rec[k]
                .parse::<f64>()
                .map_err(|_| Error::MalformedCsv(format!("bad number `{}`", &rec[k])))
        };
        rows.push(SweepRow {
            temperature: num(0)?,
            q_norm_mean: num(1)?,
            q_norm_std: num(2)?,
            q_raw_mean: num(3)?,
            energy_norm_mean: num(4)?,
            energy_norm_std: num(5)?,
            link_mean: num(6)?,
            acceptance_rate: num(7)?,
            replicas: rec[8]
                .parse()
                .map_err(|_| Error::MalformedCsv(format!("bad replica count `{}`", &rec[8])))?,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn random_net(n: usize, seed: u64, lo: f64) -> SignedWeightedNetwork {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w: Vec<f64> = (0..n * n).map(|_| rng.random_range(lo..1.0)).collect();
        let s = SignState::random(n, &mut rng);
        SignedWeightedNetwork::from_weights(n, &w, s).unwrap()
    }

    #[test]
    fn acceptance_rule() {
        assert_eq!(acceptance_probability(-3.0, 2.0), 1.0);
        assert_eq!(acceptance_probability(0.0, 2.0), 1.0);
        assert!((acceptance_probability(1.0, 2.0) - (-2f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn sampler_matches_reference_observables() {
        let net = random_net(7, 3, 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let s = SignState::random(7, &mut rng);
        let sampler = Sampler::new(&net, s.clone(), 1.0, rng).unwrap();
        let snap = sampler.snapshot();
        let e = network::energy(&net, &s).unwrap();
        assert!((snap.energy_raw - e.raw).abs() < 1e-12);
        assert!((snap.energy_norm - e.normalized).abs() < 1e-12);
        assert!((snap.q_norm - network::mean_two_star(&net, &s).unwrap()).abs() < 1e-12);
        assert!((snap.q_raw - network::mean_two_star_raw(&net, &s).unwrap()).abs() < 1e-12);
        assert!((snap.link_mean - s.link_mean()).abs() < 1e-15);
    }

    #[test]
    fn config_validation() {
        let net = SignedWeightedNetwork::uniform(4, 0.5).unwrap();
        for bad in [
            SimConfig { temperature: 0.0, ..Default::default() },
            SimConfig { temperature: -1.0, ..Default::default() },
            SimConfig { equil_sweeps: 0, ..Default::default() },
            SimConfig { measure_sweeps: 0, ..Default::default() },
        ] {
            assert!(metropolis_run(&net, &bad).is_err());
        }
    }

    #[test]
    fn hot_limit_accepts_everything() {
        let net = random_net(6, 1, 0.0);
        let cfg = SimConfig {
            temperature: 1e6,
            init: InitKind::Random,
            equil_sweeps: 10,
            measure_sweeps: 500,
            seed: 5,
        };
        let tr = metropolis_run(&net, &cfg).unwrap();
        assert!(tr.acceptance_rate > 0.99, "{}", tr.acceptance_rate);
    }

    #[test]
    fn cold_balanced_state_is_frozen() {
        // Weights uniform in [0.1, 1). The smallest flip cost from the
        // all-positive state must dwarf T = 0.01 for the state to freeze.
        let net = random_net(10, 21, 0.1);
        let paradise = SignState::all_positive(10);
        let min_cost = (0..10)
            .flat_map(|i| (i + 1..10).map(move |j| (i, j)))
            .map(|(i, j)| network::delta_energy(&net, &paradise, i, j))
            .fold(f64::INFINITY, f64::min);
        assert!(min_cost / 0.01 > 40.0, "min cost {min_cost}");
        let cfg = SimConfig {
            temperature: 0.01,
            init: InitKind::AllPositive,
            equil_sweeps: 1,
            measure_sweeps: 10_000,
            seed: 2,
        };
        let tr = metropolis_run(&net, &cfg).unwrap();
        assert_eq!(tr.energy_norm.mean, -1.0);
        assert_eq!(tr.q_norm.mean, 1.0);
        assert_eq!(tr.acceptance_rate, 0.0);
    }

    #[test]
    fn zero_star_weight_rejected() {
        let mut w = vec![0.5; 9];
        w[1] = 0.0;
        w[3] = 0.0;
        let net = SignedWeightedNetwork::from_weights(3, &w, SignState::all_positive(3)).unwrap();
        let cfg = SimConfig { measure_sweeps: 1, equil_sweeps: 1, ..Default::default() };
        assert!(matches!(metropolis_run(&net, &cfg), Err(Error::ZeroWeightStar(..))));
    }

    #[test]
    fn triangle_exact_energy() {
        let net = SignedWeightedNetwork::uniform(3, 1.0).unwrap();
        let ex = exact_ensemble(&net, 1.0).unwrap();
        assert!((ex.energy_raw + 1f64.tanh()).abs() < 1e-14);
        let hot = exact_ensemble(&net, 0.0).unwrap();
        assert!(hot.energy_raw.abs() < 1e-15);
        assert!(hot.link_mean.abs() < 1e-15);
    }

    #[test]
    fn exact_link_mean_vanishes() {
        let net = random_net(5, 4, 0.0);
        for beta in [0.3, 1.0, 5.0] {
            assert!(exact_ensemble(&net, beta).unwrap().link_mean.abs() < 1e-12);
        }
    }

    #[test]
    fn exact_refuses_large_networks() {
        let net = SignedWeightedNetwork::uniform(8, 0.5).unwrap();
        assert!(matches!(exact_ensemble(&net, 1.0), Err(Error::TooLarge { links: 28, max: 24 })));
    }

    #[test]
    fn tc_examples() {
        let t = [0.1, 0.2, 0.3, 0.4, 0.5];
        let tc = estimate_tc_from(&t, &[1.0, 1.0, 1.0, 0.0, 0.0], 0.2).unwrap();
        assert!((tc - 0.35).abs() < 1e-12);
        assert_eq!(estimate_tc_from(&t[..3], &[0.05, 0.04, 0.03], 0.2), None);
        let shallow = [1.0, 0.81, 0.62, 0.43, 0.24];
        assert_eq!(estimate_tc_from(&t, &shallow, 0.2), None);
        assert_eq!(estimate_tc_from(&t[..2], &[1.0, 0.0], 0.2), None);
    }

    #[test]
    fn grids() {
        let g = temperature_grid(0.02, 3.0, 50, Spacing::Log).unwrap();
        assert_eq!(g.len(), 50);
        assert!((g[0] - 0.02).abs() < 1e-15 && (g[49] - 3.0).abs() < 1e-12);
        assert!(g.windows(2).all(|p| p[1] > p[0]));
        let l = temperature_grid(1.0, 2.0, 3, Spacing::Linear).unwrap();
        assert_eq!(l, vec![1.0, 1.5, 2.0]);
        assert!(temperature_grid(2.0, 1.0, 5, Spacing::Log).is_err());
        assert!(temperature_grid(0.0, 1.0, 5, Spacing::Log).is_err());
    }

    #[test]
    fn single_temperature_sweep() {
        let net = random_net(5, 8, 0.1);
        let base = SimConfig { equil_sweeps: 10, measure_sweeps: 10, ..Default::default() };
        let sw = temperature_sweep(&net, &[0.5], 3, &base, Schedule::Independent, 0).unwrap();
        assert_eq!(sw.traces.len(), 1);
        assert_eq!(sw.traces[0].len(), 3);
        assert_eq!(sw.t_c, None);
        assert!(temperature_sweep(&net, &[0.5, 0.4], 1, &base, Schedule::Independent, 0).is_err());
        assert!(temperature_sweep(&net, &[], 1, &base, Schedule::Independent, 0).is_err());
        assert!(temperature_sweep(&net, &[0.5], 0, &base, Schedule::Independent, 0).is_err());
    }

    #[test]
    fn seeds_are_distinct() {
        let mut seen = std::collections::HashSet::new();
        for w in 0..4 {
            for t in 0..50 {
                for r in 0..8 {
                    assert!(seen.insert(mix_seed(42, w, t, r)));
                }
            }
        }
        assert_ne!(mix_seed(1, 0, 0, 0), mix_seed(2, 0, 0, 0));
    }

    #[test]
    fn batch_means_of_iid_series() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let xs: Vec<f64> = (0..64_000).map(|_| rng.random::<f64>()).collect();
        let m = Moments::of(&xs);
        let expect = (1.0f64 / 12.0).sqrt() / (64_000f64).sqrt();
        assert!((m.sem / expect - 1.0).abs() < 0.5);
        assert!((m.std - (1.0f64 / 12.0).sqrt()).abs() < 0.01);
    }

    proptest! {
        #[test]
        fn detailed_balance(seed in 0u64..500, beta in 0.05f64..5.0) {
            let net = random_net(6, seed, 0.0);
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
            let mut s = SignState::random(6, &mut rng);
            let i = rng.random_range(0..6);
            let j = (i + rng.random_range(1..6)) % 6;
            let forward = network::delta_energy(&net, &s, i, j);
            s.flip(i, j);
            let backward = network::delta_energy(&net, &s, i, j);
            prop_assert!((forward + backward).abs() < 1e-12);
            let ratio = acceptance_probability(forward, beta) / acceptance_probability(backward, beta);
            prop_assert!((ratio / (-beta * forward).exp() - 1.0).abs() < 1e-9);
        }

        #[test]
        fn tracked_energy_does_not_drift(seed in 0u64..50) {
            let net = random_net(8, seed, 0.0);
            let rng = ChaCha8Rng::seed_from_u64(seed);
            let mut sampler = Sampler::new(&net, SignState::all_positive(8), 0.7, rng).unwrap();
            for _ in 0..200 {
                sampler.sweep();
                let full = network::energy(&net, sampler.state()).unwrap().raw;
                prop_assert!((sampler.energy_tracked() - full).abs() < 1e-9);
            }
        }
    }
}
