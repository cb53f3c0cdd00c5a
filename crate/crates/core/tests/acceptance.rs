//! One PASS/FAIL line per acceptance criterion; exits non-zero on any FAIL.

mod common;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use balance::cli::{Fits, MfReport, Report};
use balance::meanfield::{self, MeanFieldParams, WeightDist};
use balance::network::{self, Histogram2D, SignState, SignedWeightedNetwork};
use balance::simulate::{self, InitKind, SimConfig};
use common::uniform_net;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn balance(out: &Path, args: &[&str], threads: Option<usize>) -> Result<(), String> {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_balance"));
    cmd.args(args).arg("--out").arg(out).env_remove("BALANCE_THREADS");
    if let Some(t) = threads {
        cmd.env("BALANCE_THREADS", t.to_string());
    }
    let o = cmd.output().map_err(|e| e.to_string())?;
    if o.status.success() {
        Ok(())
    } else {
        Err(format!("balance {args:?}: {}", String::from_utf8_lossy(&o.stderr).trim()))
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| e.to_string())
}

fn oracle_equivalence() -> Outcome {
    let start = Instant::now();
    let net = uniform_net(5, 0.1, 1.0, 2024);
    let mut worst: f64 = 0.0;
    for (k, beta) in [0.2, 1.0, 3.0].into_iter().enumerate() {
        let exact = simulate::exact_ensemble(&net, beta).unwrap();
        let cfg = SimConfig {
            temperature: 1.0 / beta,
            init: InitKind::Random,
            equil_sweeps: 2_000,
            measure_sweeps: 64_000,
            seed: 100 + k as u64,
        };
        let t = simulate::metropolis_run(&net, &cfg).unwrap();
        for (mc, ex) in [(t.energy_norm, exact.energy_norm), (t.q_raw, exact.q_raw)] {
            worst = worst.max((mc.mean - ex).abs() / mc.sem.max(1e-300));
        }
    }
    let elapsed = start.elapsed();
    outcome(
        worst <= 3.0 && elapsed < Duration::from_secs(60),
        format!("worst |MC - exact| = {worst:.2} SE (limit 3), {:.1}s (limit 60s)", elapsed.as_secs_f64()),
    )
}

fn balanced_normalization() -> Outcome {
    let mut worst: f64 = 0.0;
    for (n, seed) in [(3, 1), (5, 2), (20, 3), (40, 4)] {
        let net = uniform_net(n, 0.01, 1.0, seed);
        let s = SignState::all_positive(n);
        let e = network::energy(&net, &s).unwrap();
        let q = network::mean_two_star(&net, &s).unwrap();
        let snap = simulate::Sampler::new(&net, s, 1.0, ChaCha8Rng::seed_from_u64(seed))
            .unwrap()
            .snapshot();
        for err in [e.normalized + 1.0, q - 1.0, snap.energy_norm + 1.0, snap.q_norm - 1.0] {
            worst = worst.max(err.abs());
        }
    }
    outcome(worst <= 1e-12, format!("max deviation {worst:.1e} (limit 1e-12)"))
}

fn mean_field() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut f0: f64 = 0.0;
    for k in 0..100 {
        let dist = if k % 2 == 0 {
            WeightDist::Gaussian {
                mu: rng.random_range(-1.0..2.0),
                sigma: rng.random_range(0.0..0.5),
            }
        } else {
            WeightDist::Empirical((0..50).map(|_| rng.random_range(0.0..1.0)).collect())
        };
        let params = MeanFieldParams {
            n: rng.random_range(3..100),
            beta: rng.random_range(0.01..10.0),
            weight_dist: dist,
        };
        f0 = f0.max(meanfield::self_consistency_rhs(0.0, &params).unwrap().abs());
    }
    let sat = meanfield::solve_fixed_point(
        &MeanFieldParams {
            n: 40,
            beta: 2.0,
            weight_dist: WeightDist::Gaussian { mu: 1.0, sigma: 0.0 },
        },
        38.0,
    )
    .unwrap();
    let tc = |n: usize, mu: f64| {
        meanfield::critical_temperature_mf(n, &WeightDist::Gaussian { mu, sigma: 0.1 }, 0.5, 200.0).unwrap()
    };
    let by_mu: Vec<f64> = [0.5, 1.0, 2.0].iter().map(|&mu| tc(40, mu)).collect();
    let by_n: Vec<f64> = [20, 40, 60].iter().map(|&n| tc(n, 1.0)).collect();
    let increasing = |v: &[f64]| v.windows(2).all(|p| p[1] > p[0]);
    outcome(
        f0 <= f64::EPSILON && (sat.q_star - 38.0).abs() <= 1e-3 && increasing(&by_mu) && increasing(&by_n),
        format!(
            "max |f(0)| = {f0:.1e}; q* = {:.6}; T_c(mu=0.5,1,2) = {:.3?}; T_c(N=20,40,60) = {:.3?}",
            sat.q_star, by_mu, by_n
        ),
    )
}

/// Full default-settings pipeline on the first window of one synthetic panel.
struct Panel {
    out: PathBuf,
    fits: Fits,
    t_c: Option<f64>,
    q_lowest: f64,
    mf: MfReport,
}

fn panel(root: &Path, rho: &str) -> Result<Panel, String> {
    let out = root.join(format!("rho{rho}"));
    balance(&out, &["synth", "--n", "40", "--days", "3900", "--rho", rho, "--seed", "7"], None)?;
    balance(&out, &["corr", "--tau", "50"], None)?;
    balance(&out, &["net", "--window", "win_0"], None)?;
    balance(&out, &["sim", "--window", "win_0"], None)?;
    balance(&out, &["mf", "--window", "win_0"], None)?;
    balance(&out, &["report"], None)?;
    let fits: Fits = read_json(&out.join("fits.json"))?;
    let report: Report = read_json(&out.join("report.json"))?;
    let summary = report
        .windows
        .iter()
        .find(|w| w.window_id == "win_0")
        .ok_or("win_0 missing from report")?;
    let rows = simulate::read_sweep_csv(out.join("sim/win_0.sweep.csv")).map_err(|e| e.to_string())?;
    Ok(Panel {
        t_c: summary.t_c,
        q_lowest: rows[0].q_norm_mean,
        mf: read_json(&out.join("mf/win_0.mf.json"))?,
        fits,
        out,
    })
}

fn regime_discrimination(off: &Panel, on: &Panel, elapsed: Duration) -> Outcome {
    let pass = off.t_c.is_none()
        && on.t_c.is_some_and(|t| t > 0.1)
        && on.q_lowest >= 0.9
        && elapsed < Duration::from_secs(15 * 60);
    outcome(
        pass,
        format!(
            "T_c(rho=0) = {:?}, T_c(rho=0.6) = {:?} (mean-field {:?}), q_norm at lowest T = {:.4}; {:.0}s (limit 900s)",
            off.t_c,
            on.t_c,
            on.mf.t_c,
            on.q_lowest,
            elapsed.as_secs_f64()
        ),
    )
}

fn pdf_shift(off: &Panel, on: &Panel) -> Outcome {
    let means = |p: &Panel| p.fits.windows.iter().map(|w| w.gaussian_fit.mean).collect::<Vec<_>>();
    let off_max = means(off).iter().fold(0f64, |m, x| m.max(x.abs()));
    let on_min = means(on).iter().fold(f64::INFINITY, |m, &x| m.min(x));
    outcome(
        off_max < 0.05 && on_min > 0.4 && !off.fits.windows.is_empty() && !on.fits.windows.is_empty(),
        format!(
            "over {} windows each: max |mean| (rho=0) = {off_max:.4}, min mean (rho=0.6) = {on_min:.4}",
            off.fits.windows.len()
        ),
    )
}

/// Share of landscape mass in bins whose centres both lie within `radius`.
fn central_share(h: &Histogram2D, radius: f64) -> f64 {
    let bins = h.bins();
    let inside = |b: usize| h.bin_center(b).abs() <= radius + 1e-12;
    let mut central = 0u64;
    for x in 0..bins {
        for y in 0..bins {
            if inside(x) && inside(y) {
                central += h.count(x, y);
            }
        }
    }
    central as f64 / h.total() as f64
}

fn landscape(off: &Panel, on: &Panel) -> Outcome {
    let k4 = SignedWeightedNetwork::uniform(4, 0.5).unwrap();
    let k4_total = network::energy_landscape(&k4, &SignState::all_positive(4), 60, 300)
        .unwrap()
        .total();
    let load = |p: &Panel| Histogram2D::read_csv(p.out.join("net/win_0.landscape.csv"), 300).unwrap();
    let (h_off, h_on) = (load(off), load(on));
    let off_central = central_share(&h_off, 0.05);
    let on_outer = 1.0 - central_share(&h_on, 0.1);
    outcome(
        k4_total == 12 && off_central > 0.95 && on_outer > 0.0,
        format!(
            "K4 total = {k4_total}; rho=0 mass in |E| <= 0.05 = {:.2}%; rho=0.6 mass in |E| > 0.1 = {:.2}%",
            100.0 * off_central,
            100.0 * on_outer
        ),
    )
}

fn tree(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut files = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                files.insert(p.strip_prefix(dir).unwrap().to_path_buf(), std::fs::read(&p).unwrap());
            }
        }
    }
    files
}

fn determinism(root: &Path) -> Result<Outcome, String> {
    let cfg = root.join("small.cfg");
    std::fs::write(
        &cfg,
        "n = 12\ndays = 201\nrho = 0.4\nseed = 3\ntau = 50\npoints = 12\nreplicas = 3\nequil_sweeps = 150\nmeasure_sweeps = 150\n",
    )
    .map_err(|e| e.to_string())?;
    let c = cfg.to_str().unwrap();
    let mut trees = Vec::new();
    for threads in [1, 4] {
        let out = root.join(format!("det{threads}"));
        for step in ["synth", "corr", "net", "sim", "mf", "report"] {
            balance(&out, &["--config", c, step], Some(threads))?;
        }
        trees.push(tree(&out));
    }
    let differing: Vec<_> = trees[0]
        .iter()
        .filter(|(k, v)| trees[1].get(*k) != Some(*v))
        .map(|(k, _)| k.display().to_string())
        .collect();
    let same_set = trees[0].keys().eq(trees[1].keys());
    Ok(outcome(
        differing.is_empty() && same_set && !trees[0].is_empty(),
        format!(
            "{} artifacts compared across 1 and 4 worker threads, {} differ {:?}",
            trees[0].len(),
            differing.len(),
            differing
        ),
    ))
}

fn main() {
    let root = tempfile::tempdir().unwrap();
    let mut results: Vec<(&str, Outcome)> = vec![
        ("oracle equivalence", oracle_equivalence()),
        ("balanced normalization", balanced_normalization()),
        ("mean-field", mean_field()),
    ];

    let start = Instant::now();
    match panel(root.path(), "0.0").and_then(|off| Ok((off, panel(root.path(), "0.6")?))) {
        Ok((off, on)) => {
            results.push(("regime discrimination", regime_discrimination(&off, &on, start.elapsed())));
            results.push(("correlation pdf shift", pdf_shift(&off, &on)));
            results.push(("landscape combinatorics", landscape(&off, &on)));
        }
        Err(e) => {
            for name in ["regime discrimination", "correlation pdf shift", "landscape combinatorics"] {
                results.push((name, outcome(false, e.clone())));
            }
        }
    }
    results.push((
        "determinism",
        determinism(root.path()).unwrap_or_else(|e| outcome(false, e)),
    ));

    let mut failed = 0;
    for (name, o) in &results {
        println!("{} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        failed += usize::from(!o.pass);
    }
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
