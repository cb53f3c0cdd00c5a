//! Mean-field self-consistency for the weighted two-star field `Q`.
//!
//! A link feels `Q = <Σ_k J_ijk s_jk s_ki>`, its mean sign is
//! `tanh(β Q)`, and each two-star averages to `q(Q, J, β)`. Closing the loop
//! gives `Q = (N - 2) ∫ J P(J) q(Q, J, β) dJ`, solved here for `Q ≥ 0`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DAMPING: f64 = 0.5;
pub const FIXED_POINT_TOL: f64 = 1e-8;
pub const MAX_ITERATIONS: usize = 10_000;
pub const QUADRATURE_TOL: f64 = 1e-10;
/// Gaussian integrals are truncated at `mu ± 8 sigma`.
pub const GAUSS_HALF_WIDTH: f64 = 8.0;
const POSITIVE_THRESHOLD: f64 = 1e-6;
const BRACKET_TOL: f64 = 1e-3;

/// Mean link sign for a link feeling field `q_raw`.
pub fn link_mean(q_raw: f64, beta: f64) -> f64 {
    (beta * q_raw).tanh()
}

/// Mean two-star `<s_jk s_ki>` around a triangle of weight `j`:
///
/// `[e^{2βQ} - 2e^{-2βJ tanh(βQ)} + e^{-2βQ}] / [e^{2βQ} + 2e^{-2βJ tanh(βQ)} + e^{-2βQ}]`
///
/// evaluated with the largest exponent factored out.
pub fn two_star_expectation(q_raw: f64, j: f64, beta: f64) -> f64 {
    let up = 2.0 * beta * q_raw;
    let mid = -2.0 * beta * j * (beta * q_raw).tanh();
    let down = -up;
    let top = up.max(mid).max(down);
    let (a, b, c) = ((up - top).exp(), 2.0 * (mid - top).exp(), (down - top).exp());
    (a - b + c) / (a + b + c)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightDist {
    Gaussian { mu: f64, sigma: f64 },
    /// Triangle weights sampled from data.
    Empirical(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanFieldParams {
    pub n: usize,
    pub beta: f64,
    pub weight_dist: WeightDist,
}

impl MeanFieldParams {
    pub fn validate(&self) -> Result<()> {
        if self.n < 3 {
            return Err(Error::InvalidParam(format!("n must be at least 3, got {}", self.n)));
        }
        if !(self.beta > 0.0) || !self.beta.is_finite() {
            return Err(Error::InvalidParam(format!("beta must be positive, got {}", self.beta)));
        }
        match &self.weight_dist {
            WeightDist::Gaussian { sigma, mu } if !(*sigma >= 0.0) || !mu.is_finite() => {
                Err(Error::InvalidParam(format!("bad gaussian (mu={mu}, sigma={sigma})")))
            }
            WeightDist::Empirical(s) if s.is_empty() => Err(Error::InvalidParam("empty weight sample".into())),
            _ => Ok(()),
        }
    }

    fn stars(&self) -> f64 {
        (self.n - 2) as f64
    }
}

// 15-point Kronrod nodes (non-negative half) with the embedded 7-point Gauss rule.
const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
];
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

fn kronrod15(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for k in 0..7 {
        let dx = half * XGK[k];
        let pair = f(center - dx) + f(center + dx);
        kronrod += WGK[k] * pair;
        if k % 2 == 1 {
            gauss += WG[k / 2] * pair;
        }
    }
    (kronrod * half, ((kronrod - gauss) * half).abs())
}

/// Adaptive Gauss-Kronrod quadrature by recursive bisection.
pub fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> Result<f64> {
    fn recurse(f: &impl Fn(f64) -> f64, a: f64, b: f64, tol: f64, depth: u32) -> Result<f64> {
        let (value, err) = kronrod15(f, a, b);
        if err <= tol.max(1e-15 * value.abs()) {
            return Ok(value);
        }
        if depth == 0 {
            return Err(Error::Quadrature { estimate: err });
        }
        let mid = 0.5 * (a + b);
        Ok(recurse(f, a, mid, 0.5 * tol, depth - 1)? + recurse(f, mid, b, 0.5 * tol, depth - 1)?)
    }
    recurse(&f, a, b, tol, 40)
}

/// `f(Q) = (N - 2) ∫ J P(J) q(Q, J, β) dJ`.
pub fn self_consistency_rhs(q_raw: f64, params: &MeanFieldParams) -> Result<f64> {
    params.validate()?;
    let beta = params.beta;
    let integral = match &params.weight_dist {
        WeightDist::Gaussian { mu, sigma } if *sigma == 0.0 => mu * two_star_expectation(q_raw, *mu, beta),
        WeightDist::Gaussian { mu, sigma } => {
            let norm = 1.0 / (sigma * (2.0 * std::f64::consts::PI).sqrt());
            let density = |j: f64| norm * (-0.5 * ((j - mu) / sigma).powi(2)).exp();
            integrate(
                |j| j * density(j) * two_star_expectation(q_raw, j, beta),
                mu - GAUSS_HALF_WIDTH * sigma,
                mu + GAUSS_HALF_WIDTH * sigma,
                QUADRATURE_TOL,
            )?
        }
        WeightDist::Empirical(sample) => {
            sample.iter().map(|&j| j * two_star_expectation(q_raw, j, beta)).sum::<f64>() / sample.len() as f64
        }
    };
    Ok(params.stars() * integral)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    Trivial,
    Positive,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixedPointResult {
    pub q_star: f64,
    pub branch: Branch,
    pub iterations: usize,
    pub residual: f64,
}

/// Damped iteration `Q ← (1 - α) Q + α f(Q)` restricted to `Q ≥ 0`.
pub fn solve_fixed_point(params: &MeanFieldParams, init: f64) -> Result<FixedPointResult> {
    if !(init >= 0.0) {
        return Err(Error::InvalidParam(format!("initial Q must be non-negative, got {init}")));
    }
    let mut q = init;
    let mut residual = f64::INFINITY;
    for iterations in 0..MAX_ITERATIONS {
        let fq = self_consistency_rhs(q, params)?;
        residual = (q - fq).abs();
        if residual < FIXED_POINT_TOL {
            let branch = if q.abs() > POSITIVE_THRESHOLD {
                Branch::Positive
            } else {
                Branch::Trivial
            };
            return Ok(FixedPointResult {
                q_star: q,
                branch,
                iterations,
                residual,
            });
        }
        q = ((1.0 - DAMPING) * q + DAMPING * fq).max(0.0);
    }
    Err(Error::NoConvergence { residual })
}

/// Whether the ordered branch survives at `temperature`, probed from
/// `Q = N - 2`. A run that fails to settle counts as no branch: the
/// iteration is crawling through the remnant of a vanished solution.
pub fn has_positive_branch(n: usize, dist: &WeightDist, temperature: f64) -> Result<bool> {
    let params = MeanFieldParams {
        n,
        beta: 1.0 / temperature,
        weight_dist: dist.clone(),
    };
    match solve_fixed_point(&params, (n - 2) as f64) {
        Ok(r) => Ok(r.branch == Branch::Positive),
        Err(Error::NoConvergence { .. }) => Ok(false),
        Err(e) => Err(e),
    }
}

/// Bisection on `T` for the disappearance of the positive branch.
pub fn critical_temperature_mf(n: usize, dist: &WeightDist, t_lo: f64, t_hi: f64) -> Result<f64> {
    if !(t_lo > 0.0 && t_hi > t_lo) {
        return Err(Error::BadBracket(format!("need 0 < t_lo < t_hi, got [{t_lo}, {t_hi}]")));
    }
    if !has_positive_branch(n, dist, t_lo)? {
        return Err(Error::BadBracket(format!("no ordered branch at t_lo = {t_lo}")));
    }
    if has_positive_branch(n, dist, t_hi)? {
        return Err(Error::BadBracket(format!("ordered branch persists at t_hi = {t_hi}")));
    }
    let (mut lo, mut hi) = (t_lo, t_hi);
    while hi - lo >= BRACKET_TOL {
        let mid = 0.5 * (lo + hi);
        if has_positive_branch(n, dist, mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BranchPoint {
    #[serde(rename = "T")]
    pub temperature: f64,
    pub q_star: Option<f64>,
}

/// Positive-branch `Q*` per temperature, `None` where the solve failed.
pub fn branch_curve(n: usize, dist: &WeightDist, temperatures: &[f64]) -> Vec<BranchPoint> {
    temperatures
        .iter()
        .map(|&t| {
            let params = MeanFieldParams {
                n,
                beta: 1.0 / t,
                weight_dist: dist.clone(),
            };
            BranchPoint {
                temperature: t,
                q_star: solve_fixed_point(&params, (n - 2) as f64).ok().map(|r| r.q_star),
            }
        })
        .collect()
}
