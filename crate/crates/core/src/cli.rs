//! Command-line pipeline: `synth`, `corr`, `net`, `sim`, `mf`, `report`.
//!
//! Every setting is a `key = value` line in an optional config file and a
//! same-named `--key` flag; flags win over the file, the file over
//! defaults. All artifacts live under the output directory:
//!
//! ```text
//! prices.csv                      synth
//! fits.json                       corr (window list + Gaussian fits)
//! corr/win_<s>.csv, .order.csv    corr
//! net/win_<s>.landscape.csv       net
//! net/win_<s>.order.csv           net
//! sim/win_<s>.sweep.csv           sim
//! sim/win_<s>.summary.json        sim
//! mf/win_<s>.mf.json              mf
//! report.json                     sim, refreshed by report
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::NaiveDate;
use clap::{Arg, ArgAction, ArgMatches, Command};
use log::{info, warn};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::Error;
use crate::ingest::{self, GaussianFit, MissingPolicy, SynthSpec, WindowSpec};
use crate::meanfield::{self, BranchPoint, WeightDist};
use crate::network::{self, ZeroSign, DEFAULT_LANDSCAPE_BINS, DEFAULT_LANDSCAPE_CAP};
use crate::simulate::{self, InitKind, Schedule, SimConfig, Spacing};

pub const THREADS_ENV: &str = "BALANCE_THREADS";
/// Triangle-weight samples above this size are subsampled for `mf`.
pub const MAX_EMPIRICAL_SAMPLES: usize = 1_000_000;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Runtime(e)
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Runtime(e) => write!(f, "{e}"),
        }
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

struct Key {
    name: &'static str,
    help: &'static str,
    flag: bool,
}

const fn key(name: &'static str, help: &'static str) -> Key {
    Key { name, help, flag: false }
}

const fn flag(name: &'static str, help: &'static str) -> Key {
    Key { name, help, flag: true }
}

const COMMON: &[Key] = &[
    key("out", "output directory [default: out]"),
    key("threads", "worker threads (also BALANCE_THREADS)"),
];
const SYNTH: &[Key] = &[
    key("n", "number of assets [default: 40]"),
    key("days", "number of price rows [default: 3900]"),
    key("rho", "uniform cross-correlation in [0, 1) [default: 0]"),
    key("vol", "daily log-return volatility [default: 0.01]"),
    key("seed", "generator seed [default: 0]"),
];
const SYNTH_OUT: &[Key] = &[key("prices", "output price CSV [default: <out>/prices.csv]")];
const INPUT: &[Key] = &[
    key("prices", "price CSV (header date,TICK1,...)"),
    key("policy", "missing-data policy: strict | forward_fill [default: strict]"),
];
const WINDOWS: &[Key] = &[
    key("tau", "window length in return rows [default: 50]"),
    key("stride", "rows between window starts [default: tau]"),
    key("preset", "named period or FROM:TO dates instead of strided windows"),
    flag("strict", "abort on the first failing window"),
];
const SELECT: &[Key] = &[key("window", "only process this window id (win_<start>)")];
const NET: &[Key] = &[
    key("bins", "landscape bins per axis [default: 60]"),
    key("cap", "landscape display saturation count [default: 300]"),
    key("zero_sign", "exact-zero correlation sign: error | positive [default: error]"),
];
const SIM: &[Key] = &[
    key("t_lo", "lowest grid temperature [default: 0.1]"),
    key("t_hi", "highest grid temperature [default: 10]"),
    key("points", "grid points [default: 50]"),
    key("spacing", "grid spacing: linear | log [default: log]"),
    key("replicas", "independent runs per temperature [default: 8]"),
    key("equil_sweeps", "equilibration sweeps [default: 2000]"),
    key("measure_sweeps", "measurement sweeps [default: 2000]"),
    key("seed", "base seed [default: 0]"),
    key("init", "initial signs: all_positive | random | data_signs [default: all_positive]"),
    key("schedule", "independent | anneal [default: independent]"),
    key("min_drop", "minimum q_norm drop for a transition [default: 0.2]"),
];
const MF: &[Key] = &[
    key("mu", "Gaussian triangle-weight mean (overrides empirical weights)"),
    key("sigma", "Gaussian triangle-weight standard deviation"),
];

fn keys_for(cmd: &str) -> Vec<&'static Key> {
    let groups: &[&[Key]] = match cmd {
        "synth" => &[COMMON, SYNTH, SYNTH_OUT],
        "corr" => &[COMMON, INPUT, SYNTH, WINDOWS],
        "net" => &[COMMON, SELECT, NET],
        "sim" => &[COMMON, SELECT, NET, SIM],
        "mf" => &[COMMON, SELECT, NET, SIM, MF],
        "report" => &[COMMON],
        _ => &[],
    };
    let mut out: Vec<&Key> = Vec::new();
    for g in groups {
        for k in g.iter() {
            if !out.iter().any(|o| o.name == k.name) {
                out.push(k);
            }
        }
    }
    out
}

fn all_key_names() -> Vec<&'static str> {
    [COMMON, SYNTH, INPUT, WINDOWS, SELECT, NET, SIM, MF]
        .iter()
        .flat_map(|g| g.iter().map(|k| k.name))
        .collect()
}

const SUBCOMMANDS: &[(&str, &str)] = &[
    ("synth", "write a synthetic equicorrelated price panel"),
    ("corr", "windowed correlation matrices, Gaussian fits and cluster orders"),
    ("net", "triangle energy landscape and cluster order per window"),
    ("sim", "Metropolis temperature sweeps and critical temperatures"),
    ("mf", "mean-field critical temperature per window"),
    ("report", "rebuild report.json and print the critical-temperature timeline"),
];

pub fn command() -> Command {
    let mut cmd = Command::new("balance")
        .about("Weighted structural-balance analysis of stock correlation networks")
        .subcommand_required(true)
        .arg(
            Arg::new("config")
                .long("config")
                .global(true)
                .value_name("FILE")
                .help("flat key = value config file"),
        );
    for (name, about) in SUBCOMMANDS {
        let mut sub = Command::new(*name).about(*about);
        for k in keys_for(name) {
            let mut arg = Arg::new(k.name).long(k.name).help(k.help);
            arg = if k.flag {
                arg.action(ArgAction::SetTrue)
            } else {
                arg.value_name("VALUE")
            };
            sub = sub.arg(arg);
        }
        cmd = cmd.subcommand(sub);
    }
    cmd
}

/// Parses a flat `key = value` file; `#` starts a comment.
pub fn parse_config(text: &str) -> CliResult<BTreeMap<String, String>> {
    let known = all_key_names();
    let mut map = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| usage(format!("config line {}: expected `key = value`", lineno + 1)))?;
        let k = k.trim();
        if !known.contains(&k) {
            return Err(usage(format!("config line {}: unknown key `{k}`", lineno + 1)));
        }
        map.insert(k.to_string(), v.trim().to_string());
    }
    Ok(map)
}

/// Resolved settings for one subcommand.
#[derive(Debug, Clone, Default)]
pub struct Settings {
    values: BTreeMap<String, String>,
}

impl Settings {
    fn resolve(cmd: &str, file: BTreeMap<String, String>, matches: &ArgMatches) -> Self {
        let mut values = file;
        for k in keys_for(cmd) {
            if k.flag {
                if matches.get_flag(k.name) {
                    values.insert(k.name.to_string(), "true".into());
                }
            } else if let Some(v) = matches.get_one::<String>(k.name) {
                values.insert(k.name.to_string(), v.clone());
            }
        }
        Settings { values }
    }

    pub fn from_pairs(pairs: &[(&str, &str)]) -> Self {
        Settings {
            values: pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect(),
        }
    }

    fn has(&self, k: &str) -> bool {
        self.values.contains_key(k)
    }

    fn opt<T: FromStr>(&self, k: &str) -> CliResult<Option<T>> {
        self.values
            .get(k)
            .map(|v| v.parse::<T>().map_err(|_| usage(format!("invalid value `{v}` for `{k}`"))))
            .transpose()
    }

    fn get<T: FromStr>(&self, k: &str, default: T) -> CliResult<T> {
        Ok(self.opt(k)?.unwrap_or(default))
    }

    fn out(&self) -> PathBuf {
        PathBuf::from(self.values.get("out").map(String::as_str).unwrap_or("out"))
    }
}

/// Named reference periods: (name, first date, last date).
pub const PRESETS: &[(&str, &str, &str)] = &[
    ("off-crisis-2005", "2005-07-28", "2005-10-06"),
    ("on-crisis-2008", "2008-10-01", "2008-12-10"),
    ("off-crisis-2019", "2018-11-15", "2019-01-30"),
    ("on-crisis-2020", "2020-01-29", "2020-04-08"),
];

fn preset_range(spec: &str) -> CliResult<(NaiveDate, NaiveDate)> {
    let (from, to) = match PRESETS.iter().find(|p| p.0 == spec) {
        Some(&(_, f, t)) => (f, t),
        None => spec.split_once(':').ok_or_else(|| {
            let names: Vec<&str> = PRESETS.iter().map(|p| p.0).collect();
            usage(format!("unknown preset `{spec}`; use one of {names:?} or FROM:TO"))
        })?,
    };
    let parse = |d: &str| NaiveDate::parse_from_str(d, "%Y-%m-%d").map_err(|_| usage(format!("bad date `{d}`")));
    Ok((parse(from)?, parse(to)?))
}

fn parse_window_id(id: &str) -> CliResult<usize> {
    id.strip_prefix("win_")
        .filter(|s| !s.is_empty() && s.bytes().all(|b| b.is_ascii_digit()))
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| usage(format!("malformed window id `{id}`, expected win_<start_index>")))
}

fn create_dir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Runtime(Error::io(dir, e)))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(Error::from)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| CliError::Runtime(Error::io(path, e)))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> CliResult<T> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Runtime(Error::io(path, e)))?;
    Ok(serde_json::from_str(&text).map_err(Error::from)?)
}

fn synth_spec(s: &Settings) -> CliResult<SynthSpec> {
    let spec = SynthSpec {
        n_assets: s.get("n", 40)?,
        n_days: s.get("days", 3900)?,
        rho: s.get("rho", 0.0)?,
        daily_vol: s.get("vol", 0.01)?,
        seed: s.get("seed", 0)?,
    };
    spec.validate().map_err(|e| usage(e.to_string()))?;
    Ok(spec)
}

pub fn cmd_synth(s: &Settings) -> CliResult<PathBuf> {
    let spec = synth_spec(s)?;
    let path = match s.opt::<String>("prices")? {
        Some(p) => PathBuf::from(p),
        None => {
            create_dir(&s.out())?;
            s.out().join("prices.csv")
        }
    };
    let table = ingest::synthesize_market(&spec)?;
    ingest::write_prices(&path, &table)?;
    info!("wrote {} rows x {} assets to {}", table.n_days(), table.n_assets(), path.display());
    Ok(path)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowRecord {
    pub window_id: String,
    pub start_index: usize,
    pub tau: usize,
    pub start_date: String,
    pub end_date: String,
    pub gaussian_fit: GaussianFit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedWindow {
    pub window_id: String,
    pub error: String,
}

/// Contents of `fits.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fits {
    pub tickers: Vec<String>,
    pub windows: Vec<WindowRecord>,
    pub skipped: Vec<SkippedWindow>,
}

impl Fits {
    pub fn load(out: &Path) -> CliResult<Self> {
        read_json(&out.join("fits.json"))
    }

    fn select(&self, window: Option<&str>) -> CliResult<Vec<&WindowRecord>> {
        match window {
            None => Ok(self.windows.iter().collect()),
            Some(id) => {
                parse_window_id(id)?;
                let w = self
                    .windows
                    .iter()
                    .find(|w| w.window_id == id)
                    .ok_or_else(|| CliError::Runtime(Error::InvalidWindow(format!("no window `{id}` in fits.json"))))?;
                Ok(vec![w])
            }
        }
    }
}

impl WindowRecord {
    fn spec(&self) -> WindowSpec {
        WindowSpec {
            start_index: self.start_index,
            tau: self.tau,
            stride: self.tau,
        }
    }

    fn index(&self) -> u64 {
        self.start_index as u64
    }
}

fn load_window_corr(out: &Path, w: &WindowRecord) -> crate::Result<ingest::CorrelationMatrix> {
    ingest::load_correlation(out.join("corr").join(format!("{}.csv", w.window_id)), w.spec())
}

pub fn cmd_corr(s: &Settings) -> CliResult<Fits> {
    let out = s.out();
    let policy: MissingPolicy = s.get("policy", MissingPolicy::Strict)?;
    let synth_given = SYNTH.iter().any(|k| s.has(k.name));
    let prices = match (s.opt::<String>("prices")?, synth_given) {
        (Some(_), true) => return Err(usage("give either --prices or synthetic-market keys, not both")),
        (Some(p), false) => ingest::load_prices(p, policy)?,
        (None, true) => ingest::synthesize_market(&synth_spec(s)?)?,
        (None, false) => ingest::load_prices(out.join("prices.csv"), policy)?,
    };
    let returns = ingest::log_returns(&prices);
    let tau: usize = s.get("tau", 50)?;
    let stride: usize = s.get("stride", tau)?;
    let strict: bool = s.get("strict", false)?;
    let specs = match s.opt::<String>("preset")? {
        Some(p) => {
            let (from, to) = preset_range(&p)?;
            vec![ingest::window_for_dates(&returns, from, to)?]
        }
        None => ingest::windows(returns.n_rows(), tau, stride).map_err(|e| usage(e.to_string()))?,
    };
    if specs.is_empty() {
        warn!("tau = {tau} exceeds the {} return rows; no windows", returns.n_rows());
    }

    let corr_dir = out.join("corr");
    create_dir(&corr_dir)?;
    let mut fits = Fits {
        tickers: prices.tickers.clone(),
        windows: Vec::new(),
        skipped: Vec::new(),
    };
    for spec in specs {
        let id = spec.id();
        let corr = match ingest::correlation_matrix(&returns, spec) {
            Ok(c) => c,
            Err(e) if !strict => {
                warn!("skipping {id}: {e}");
                fits.skipped.push(SkippedWindow {
                    window_id: id,
                    error: e.to_string(),
                });
                continue;
            }
            Err(e) => return Err(CliError::Runtime(Error::InvalidWindow(format!("{id}: {e}")))),
        };
        ingest::write_correlation(corr_dir.join(format!("{id}.csv")), &corr)?;
        network::write_order(corr_dir.join(format!("{id}.order.csv")), &corr, &network::cluster_order(&corr))?;
        fits.windows.push(WindowRecord {
            window_id: id,
            start_index: spec.start_index,
            tau: spec.tau,
            start_date: returns.dates[spec.start_index].to_string(),
            end_date: returns.dates[spec.end_index() - 1].to_string(),
            gaussian_fit: ingest::fit_gaussian(&corr),
        });
    }
    write_json(&out.join("fits.json"), &fits)?;
    info!("{} windows, {} skipped", fits.windows.len(), fits.skipped.len());
    Ok(fits)
}

pub fn cmd_net(s: &Settings) -> CliResult<usize> {
    let out = s.out();
    let fits = Fits::load(&out)?;
    let bins: usize = s.get("bins", DEFAULT_LANDSCAPE_BINS)?;
    let cap: u64 = s.get("cap", DEFAULT_LANDSCAPE_CAP)?;
    let zero_sign: ZeroSign = s.get("zero_sign", ZeroSign::Error)?;
    if bins == 0 {
        return Err(usage("bins must be positive"));
    }
    let dir = out.join("net");
    create_dir(&dir)?;
    let selected = fits.select(s.opt::<String>("window")?.as_deref())?;
    for w in &selected {
        let corr = load_window_corr(&out, w)?;
        let net = network::build_network_with(&corr, zero_sign)?;
        let hist = network::energy_landscape(&net, net.data_signs(), bins, cap)?;
        hist.write_csv(dir.join(format!("{}.landscape.csv", w.window_id)))?;
        network::write_order(dir.join(format!("{}.order.csv", w.window_id)), &corr, &network::cluster_order(&corr))?;
    }
    Ok(selected.len())
}

/// Everything that determines a sweep's numbers.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimSettings {
    pub t_lo: f64,
    pub t_hi: f64,
    pub points: usize,
    pub spacing: Spacing,
    pub replicas: usize,
    pub equil_sweeps: usize,
    pub measure_sweeps: usize,
    pub seed: u64,
    pub init: InitKind,
    pub schedule: Schedule,
    pub min_drop: f64,
    pub zero_sign: ZeroSign,
}

impl SimSettings {
    pub fn from_settings(s: &Settings) -> CliResult<Self> {
        let sim = SimSettings {
            t_lo: s.get("t_lo", simulate::DEFAULT_T_LO)?,
            t_hi: s.get("t_hi", simulate::DEFAULT_T_HI)?,
            points: s.get("points", simulate::DEFAULT_POINTS)?,
            spacing: s.get("spacing", Spacing::Log)?,
            replicas: s.get("replicas", simulate::DEFAULT_REPLICAS)?,
            equil_sweeps: s.get("equil_sweeps", simulate::DEFAULT_EQUIL_SWEEPS)?,
            measure_sweeps: s.get("measure_sweeps", simulate::DEFAULT_MEASURE_SWEEPS)?,
            seed: s.get("seed", 0)?,
            init: s.get("init", InitKind::AllPositive)?,
            schedule: s.get("schedule", Schedule::Independent)?,
            min_drop: s.get("min_drop", simulate::DEFAULT_MIN_DROP)?,
            zero_sign: s.get("zero_sign", ZeroSign::Error)?,
        };
        if !(sim.t_lo > 0.0 && sim.t_lo < sim.t_hi) {
            return Err(usage(format!("need 0 < t_lo < t_hi, got {} and {}", sim.t_lo, sim.t_hi)));
        }
        if sim.points < 3 {
            return Err(usage("points must be at least 3"));
        }
        if sim.replicas < 1 || sim.equil_sweeps < 1 || sim.measure_sweeps < 1 {
            return Err(usage("replicas and sweep counts must be at least 1"));
        }
        Ok(sim)
    }

    pub fn grid(&self) -> Vec<f64> {
        simulate::temperature_grid(self.t_lo, self.t_hi, self.points, self.spacing).expect("validated grid")
    }

    fn base_config(&self) -> SimConfig {
        SimConfig {
            temperature: self.t_lo,
            init: self.init,
            equil_sweeps: self.equil_sweeps,
            measure_sweeps: self.measure_sweeps,
            seed: self.seed,
        }
    }

    /// First 16 bytes of SHA-256 over the canonical JSON of these settings.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("settings serialize");
        Sha256::digest(canonical.as_bytes())[..16]
            .iter()
            .fold(String::new(), |mut acc, b| {
                let _ = write!(acc, "{b:02x}");
                acc
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowSummary {
    pub window_id: String,
    pub start_date: String,
    pub end_date: String,
    pub t_c: Option<f64>,
    pub gaussian_fit: FitSummary,
    pub config_hash: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_c_mf: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub config_hash: String,
    pub windows: Vec<WindowSummary>,
}

fn summary_base(w: &WindowRecord, hash: &str) -> WindowSummary {
    WindowSummary {
        window_id: w.window_id.clone(),
        start_date: w.start_date.clone(),
        end_date: w.end_date.clone(),
        t_c: None,
        gaussian_fit: FitSummary {
            mean: w.gaussian_fit.mean,
            std: w.gaussian_fit.std,
        },
        config_hash: hash.to_string(),
        t_c_mf: None,
        sweep: None,
        error: None,
    }
}

fn sim_window(out: &Path, w: &WindowRecord, sim: &SimSettings) -> crate::Result<(simulate::SweepResult, String)> {
    let corr = load_window_corr(out, w)?;
    let net = network::build_network_with(&corr, sim.zero_sign)?;
    let mut sweep = simulate::temperature_sweep(
        &net,
        &sim.grid(),
        sim.replicas,
        &sim.base_config(),
        sim.schedule,
        w.index(),
    )?;
    sweep.t_c = simulate::estimate_tc(&sweep, sim.min_drop);
    let rel = format!("sim/{}.sweep.csv", w.window_id);
    simulate::write_sweep_csv(out.join(&rel), &sweep)?;
    Ok((sweep, rel))
}

pub fn cmd_sim(s: &Settings) -> CliResult<Report> {
    let out = s.out();
    let sim = SimSettings::from_settings(s)?;
    let fits = Fits::load(&out)?;
    let selected = fits.select(s.opt::<String>("window")?.as_deref())?;
    create_dir(&out.join("sim"))?;
    let hash = sim.hash();
    let mut windows = Vec::new();
    for w in selected {
        let mut summary = summary_base(w, &hash);
        match sim_window(&out, w, &sim) {
            Ok((sweep, rel)) => {
                summary.t_c = sweep.t_c;
                summary.sweep = Some(rel);
            }
            Err(e) => {
                warn!("{}: {e}", w.window_id);
                summary.error = Some(e.to_string());
            }
        }
        write_json(&out.join("sim").join(format!("{}.summary.json", w.window_id)), &summary)?;
        info!("{} t_c = {:?}", w.window_id, summary.t_c);
        windows.push(summary);
    }
    let report = Report {
        config_hash: hash,
        windows,
    };
    write_json(&out.join("report.json"), &report)?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MfWeights {
    Gaussian { mu: f64, sigma: f64 },
    Empirical { samples: usize, mean: f64, std: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MfParams {
    pub n: usize,
    pub weights: MfWeights,
    pub t_lo: f64,
    pub t_hi: f64,
}

/// Contents of `mf/win_<s>.mf.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MfReport {
    pub window_id: String,
    pub params: MfParams,
    pub t_c: Option<f64>,
    pub t_c_mc: Option<f64>,
    pub branch_curve: Vec<BranchPoint>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// All triangle weights, or a seeded subsample when there are too many.
pub fn empirical_weights(net: &network::SignedWeightedNetwork, seed: u64) -> Vec<f64> {
    let all = net.triangle_weights();
    if all.len() <= MAX_EMPIRICAL_SAMPLES {
        return all;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = sample(&mut rng, all.len(), MAX_EMPIRICAL_SAMPLES).into_vec();
    picked.sort_unstable();
    picked.into_iter().map(|i| all[i]).collect()
}

fn mf_window(out: &Path, w: &WindowRecord, sim: &SimSettings, gaussian: Option<(f64, f64)>) -> MfReport {
    let t_c_mc = read_json::<WindowSummary>(&out.join("sim").join(format!("{}.summary.json", w.window_id)))
        .ok()
        .and_then(|s| s.t_c);
    let mut report = MfReport {
        window_id: w.window_id.clone(),
        params: MfParams {
            n: 0,
            weights: MfWeights::Gaussian { mu: 0.0, sigma: 0.0 },
            t_lo: sim.t_lo,
            t_hi: sim.t_hi,
        },
        t_c: None,
        t_c_mc,
        branch_curve: Vec::new(),
        error: None,
    };
    let corr = match load_window_corr(out, w) {
        Ok(c) => c,
        Err(e) => {
            report.error = Some(e.to_string());
            return report;
        }
    };
    let n = corr.n();
    report.params.n = n;
    let dist = match gaussian {
        Some((mu, sigma)) => {
            report.params.weights = MfWeights::Gaussian { mu, sigma };
            WeightDist::Gaussian { mu, sigma }
        }
        None => match network::build_network_with(&corr, sim.zero_sign) {
            Ok(net) => {
                let sample = empirical_weights(&net, simulate::mix_seed(sim.seed, w.index(), 0, 0));
                let mean = sample.iter().sum::<f64>() / sample.len() as f64;
                let var = sample.iter().map(|j| (j - mean) * (j - mean)).sum::<f64>() / sample.len() as f64;
                report.params.weights = MfWeights::Empirical {
                    samples: sample.len(),
                    mean,
                    std: var.sqrt(),
                };
                WeightDist::Empirical(sample)
            }
            Err(e) => {
                report.error = Some(e.to_string());
                return report;
            }
        },
    };
    report.branch_curve = meanfield::branch_curve(n, &dist, &sim.grid());
    match meanfield::critical_temperature_mf(n, &dist, sim.t_lo, sim.t_hi) {
        Ok(t) => report.t_c = Some(t),
        Err(Error::BadBracket(msg)) => info!("{}: no mean-field transition in grid ({msg})", w.window_id),
        Err(e) => report.error = Some(e.to_string()),
    }
    report
}

pub fn cmd_mf(s: &Settings) -> CliResult<Vec<MfReport>> {
    let out = s.out();
    let sim = SimSettings::from_settings(s)?;
    let gaussian = match (s.opt::<f64>("mu")?, s.opt::<f64>("sigma")?) {
        (Some(mu), sigma) => {
            let sigma = sigma.unwrap_or(0.0);
            if !(sigma >= 0.0) {
                return Err(usage("sigma must be non-negative"));
            }
            Some((mu, sigma))
        }
        (None, Some(_)) => return Err(usage("--sigma needs --mu")),
        (None, None) => None,
    };
    let fits = Fits::load(&out)?;
    let selected = fits.select(s.opt::<String>("window")?.as_deref())?;
    create_dir(&out.join("mf"))?;
    let mut reports = Vec::new();
    for w in selected {
        let r = mf_window(&out, w, &sim, gaussian);
        if let Some(e) = &r.error {
            warn!("{}: {e}", w.window_id);
        }
        write_json(&out.join("mf").join(format!("{}.mf.json", w.window_id)), &r)?;
        reports.push(r);
    }
    Ok(reports)
}

/// Rebuilds `report.json` from the per-window summaries and mean-field
/// reports, returning the timeline table.
pub fn cmd_report(s: &Settings) -> CliResult<(Report, String)> {
    let out = s.out();
    let fits = Fits::load(&out)?;
    let mut windows = Vec::new();
    let mut hash = String::new();
    for w in &fits.windows {
        let sim_path = out.join("sim").join(format!("{}.summary.json", w.window_id));
        let mut summary = if sim_path.exists() {
            read_json::<WindowSummary>(&sim_path)?
        } else {
            let mut s = summary_base(w, "");
            s.error = Some("not simulated".into());
            s
        };
        if hash.is_empty() {
            hash = summary.config_hash.clone();
        }
        let mf_path = out.join("mf").join(format!("{}.mf.json", w.window_id));
        if mf_path.exists() {
            summary.t_c_mf = read_json::<MfReport>(&mf_path)?.t_c;
        }
        windows.push(summary);
    }
    let report = Report {
        config_hash: hash,
        windows,
    };
    write_json(&out.join("report.json"), &report)?;

    let fmt_t = |t: Option<f64>| t.map_or("0 (none)".to_string(), |t| format!("{t:.4}"));
    let mut table = String::from("window_id\tstart_date\tend_date\tfit_mean\tfit_std\tt_c\tt_c_mf\n");
    for w in &report.windows {
        let _ = writeln!(
            table,
            "{}\t{}\t{}\t{:.4}\t{:.4}\t{}\t{}{}",
            w.window_id,
            w.start_date,
            w.end_date,
            w.gaussian_fit.mean,
            w.gaussian_fit.std,
            fmt_t(w.t_c),
            fmt_t(w.t_c_mf),
            w.error.as_ref().map(|e| format!("\t[{e}]")).unwrap_or_default()
        );
    }
    Ok((report, table))
}

fn thread_count(s: &Settings) -> CliResult<Option<usize>> {
    let from_env = match std::env::var(THREADS_ENV) {
        Ok(v) => Some(
            v.parse::<usize>()
                .map_err(|_| usage(format!("{THREADS_ENV} must be a positive integer, got `{v}`")))?,
        ),
        Err(_) => None,
    };
    let from_key: Option<usize> = s.opt("threads")?;
    // an explicit setting is capped by the environment
    let n = match (from_key, from_env) {
        (Some(k), Some(e)) => Some(k.min(e)),
        (k, e) => k.or(e),
    };
    if n == Some(0) {
        return Err(usage("thread count must be positive"));
    }
    Ok(n)
}

/// Runs one invocation; `args` includes the program name.
pub fn run<I, T>(args: I) -> CliResult<()>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let matches = command().try_get_matches_from(args).map_err(|e| match e.kind() {
        clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => {
            print!("{e}");
            CliError::Usage(String::new())
        }
        _ => CliError::Usage(e.to_string()),
    })?;
    let (name, sub) = matches.subcommand().expect("subcommand required");
    let file = match matches.get_one::<String>("config") {
        Some(p) => parse_config(
            &std::fs::read_to_string(p).map_err(|e| CliError::Runtime(Error::io(p, e)))?,
        )?,
        None => BTreeMap::new(),
    };
    let settings = Settings::resolve(name, file, sub);
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = thread_count(&settings)? {
        pool = pool.num_threads(n);
    }
    let pool = pool
        .build()
        .map_err(|e| CliError::Runtime(Error::InvalidParam(e.to_string())))?;
    pool.install(|| match name {
        "synth" => cmd_synth(&settings).map(|p| println!("{}", p.display())),
        "corr" => cmd_corr(&settings).map(|f| println!("{} windows ({} skipped)", f.windows.len(), f.skipped.len())),
        "net" => cmd_net(&settings).map(|k| println!("{k} windows")),
        "sim" => cmd_sim(&settings).map(|r| {
            for w in &r.windows {
                println!("{}\t{}", w.window_id, w.t_c.map_or("0 (none)".into(), |t| format!("{t:.4}")));
            }
        }),
        "mf" => cmd_mf(&settings).map(|rs| {
            for r in &rs {
                println!("{}\t{}", r.window_id, r.t_c.map_or("0 (none)".into(), |t| format!("{t:.4}")));
            }
        }),
        "report" => cmd_report(&settings).map(|(_, table)| print!("{table}")),
        other => Err(usage(format!("unknown subcommand `{other}`"))),
    })
}
