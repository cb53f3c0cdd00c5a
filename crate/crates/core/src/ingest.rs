//! Price panels, log-returns, windowed correlation matrices and the
//! moment fit of the correlation-element distribution.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use chrono::{Datelike, Duration, NaiveDate, Weekday};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numfmt::f17;

const DATE_FMT: &str = "%Y-%m-%d";

/// Dated closing prices, `closes` is row-major `dates.len() × tickers.len()`.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceTable {
    pub tickers: Vec<String>,
    pub dates: Vec<NaiveDate>,
    pub closes: Vec<f64>,
}

impl PriceTable {
    pub fn n_assets(&self) -> usize {
        self.tickers.len()
    }

    pub fn n_days(&self) -> usize {
        self.dates.len()
    }

    pub fn close(&self, t: usize, i: usize) -> f64 {
        self.closes[t * self.tickers.len() + i]
    }

    fn validate(&self) -> Result<()> {
        if self.tickers.len() < 3 {
            return Err(Error::TooFewTickers(self.tickers.len()));
        }
        for (row, pair) in self.dates.windows(2).enumerate() {
            if pair[1] <= pair[0] {
                return Err(Error::UnorderedDates {
                    row: row + 1,
                    date: pair[1].format(DATE_FMT).to_string(),
                });
            }
        }
        let n = self.tickers.len();
        for (idx, &v) in self.closes.iter().enumerate() {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::NonPositivePrice {
                    ticker: self.tickers[idx % n].clone(),
                    date: self.dates[idx / n].format(DATE_FMT).to_string(),
                    value: v,
                });
            }
        }
        Ok(())
    }
}

/// What to do with empty cells in a price CSV.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MissingPolicy {
    #[default]
    Strict,
    ForwardFill,
}

impl std::str::FromStr for MissingPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "strict" => Ok(MissingPolicy::Strict),
            "forward_fill" => Ok(MissingPolicy::ForwardFill),
            other => Err(Error::InvalidParam(format!("unknown missing-data policy `{other}`"))),
        }
    }
}

fn is_missing(cell: &str) -> bool {
    matches!(cell, "" | "NA" | "NaN" | "nan" | "null")
}

/// Loads a wide CSV with header `date,TICK1,TICK2,...`.
pub fn load_prices(path: impl AsRef<Path>, policy: MissingPolicy) -> Result<PriceTable> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_prices(file, policy)
}

pub fn read_prices<R: std::io::Read>(reader: R, policy: MissingPolicy) -> Result<PriceTable> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header = rdr
        .headers()
        .map_err(|e| Error::MalformedCsv(e.to_string()))?
        .clone();
    if header.is_empty() || !header[0].eq_ignore_ascii_case("date") {
        return Err(Error::MalformedCsv("first column must be `date`".into()));
    }
    let tickers: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    if tickers.len() < 3 {
        return Err(Error::TooFewTickers(tickers.len()));
    }
    let n = tickers.len();

    let mut dates = Vec::new();
    let mut closes: Vec<f64> = Vec::new();
    for (row, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| Error::MalformedCsv(e.to_string()))?;
        if record.len() != n + 1 {
            return Err(Error::MalformedCsv(format!(
                "row {} has {} fields, expected {}",
                row + 1,
                record.len(),
                n + 1
            )));
        }
        let date = NaiveDate::parse_from_str(&record[0], DATE_FMT)
            .map_err(|e| Error::MalformedCsv(format!("bad date `{}`: {e}", &record[0])))?;
        for (i, cell) in record.iter().skip(1).enumerate() {
            let value = if is_missing(cell) {
                match policy {
                    MissingPolicy::ForwardFill if !dates.is_empty() => closes[(dates.len() - 1) * n + i],
                    _ => {
                        return Err(Error::MissingValue {
                            ticker: tickers[i].clone(),
                            date: record[0].to_string(),
                        })
                    }
                }
            } else {
                cell.parse::<f64>()
                    .map_err(|_| Error::MalformedCsv(format!("bad number `{cell}` in row {}", row + 1)))?
            };
            closes.push(value);
        }
        dates.push(date);
    }
    let table = PriceTable {
        tickers,
        dates,
        closes,
    };
    table.validate()?;
    Ok(table)
}

pub fn write_prices(path: impl AsRef<Path>, table: &PriceTable) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    write!(w, "date").map_err(io)?;
    for t in &table.tickers {
        write!(w, ",{t}").map_err(io)?;
    }
    writeln!(w).map_err(io)?;
    let n = table.n_assets();
    for (t, date) in table.dates.iter().enumerate() {
        write!(w, "{}", date.format(DATE_FMT)).map_err(io)?;
        for v in &table.closes[t * n..(t + 1) * n] {
            write!(w, ",{}", f17(*v)).map_err(io)?;
        }
        writeln!(w).map_err(io)?;
    }
    w.flush().map_err(io)
}

/// Log-returns, row `t` is the return from price row `t` to `t + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnMatrix {
    pub tickers: Vec<String>,
    pub dates: Vec<NaiveDate>,
    pub returns: Vec<f64>,
}

impl ReturnMatrix {
    pub fn n_rows(&self) -> usize {
        self.dates.len()
    }

    pub fn n_assets(&self) -> usize {
        self.tickers.len()
    }

    pub fn get(&self, t: usize, i: usize) -> f64 {
        self.returns[t * self.tickers.len() + i]
    }

    pub fn column(&self, i: usize) -> impl Iterator<Item = f64> + '_ {
        self.returns.iter().skip(i).step_by(self.tickers.len()).copied()
    }
}

pub fn log_returns(prices: &PriceTable) -> ReturnMatrix {
    let n = prices.n_assets();
    let rows = prices.n_days().saturating_sub(1);
    let mut returns = Vec::with_capacity(rows * n);
    for t in 0..rows {
        for i in 0..n {
            returns.push(prices.close(t + 1, i).ln() - prices.close(t, i).ln());
        }
    }
    ReturnMatrix {
        tickers: prices.tickers.clone(),
        dates: prices.dates.iter().skip(1).copied().collect(),
        returns,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowSpec {
    pub start_index: usize,
    pub tau: usize,
    pub stride: usize,
}

impl WindowSpec {
    pub fn new(start_index: usize, tau: usize, stride: usize) -> Result<Self> {
        if tau < 3 {
            return Err(Error::InvalidWindow(format!("tau must be at least 3, got {tau}")));
        }
        if stride < 1 {
            return Err(Error::InvalidWindow("stride must be at least 1".into()));
        }
        Ok(WindowSpec {
            start_index,
            tau,
            stride,
        })
    }

    pub fn end_index(&self) -> usize {
        self.start_index + self.tau
    }

    pub fn id(&self) -> String {
        format!("win_{}", self.start_index)
    }

    fn check_fits(&self, n_rows: usize) -> Result<()> {
        if self.end_index() > n_rows {
            return Err(Error::InvalidWindow(format!(
                "window [{}, {}) exceeds {} return rows",
                self.start_index,
                self.end_index(),
                n_rows
            )));
        }
        Ok(())
    }
}

/// All windows of length `tau` starting every `stride` rows that fit in
/// `n_rows`. Empty when `tau > n_rows`.
pub fn windows(n_rows: usize, tau: usize, stride: usize) -> Result<Vec<WindowSpec>> {
    WindowSpec::new(0, tau, stride)?;
    let mut out = Vec::new();
    let mut start = 0;
    while start + tau <= n_rows {
        out.push(WindowSpec::new(start, tau, stride)?);
        start += stride;
    }
    Ok(out)
}

/// The window covering every return row dated within `[from, to]`.
pub fn window_for_dates(returns: &ReturnMatrix, from: NaiveDate, to: NaiveDate) -> Result<WindowSpec> {
    let start = returns.dates.iter().position(|d| *d >= from);
    let end = returns.dates.iter().rposition(|d| *d <= to);
    match (start, end) {
        (Some(s), Some(e)) if e >= s => {
            let tau = e - s + 1;
            WindowSpec::new(s, tau, tau)
        }
        _ => Err(Error::InvalidWindow(format!("no return rows between {from} and {to}"))),
    }
}

/// Symmetric Pearson matrix, row-major, unit diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationMatrix {
    pub tickers: Vec<String>,
    pub values: Vec<f64>,
    pub window: WindowSpec,
}

impl CorrelationMatrix {
    pub fn n(&self) -> usize {
        self.tickers.len()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.tickers.len() + j]
    }

    /// Builds from a full row-major matrix, checking the invariants.
    pub fn from_values(tickers: Vec<String>, values: Vec<f64>, window: WindowSpec) -> Result<Self> {
        let n = tickers.len();
        if values.len() != n * n {
            return Err(Error::DimensionMismatch {
                expected: n * n,
                found: values.len(),
            });
        }
        for i in 0..n {
            if values[i * n + i] != 1.0 {
                return Err(Error::InvalidParam(format!("diagonal element {i} is not 1")));
            }
            for j in 0..i {
                let v = values[i * n + j];
                if v != values[j * n + i] {
                    return Err(Error::InvalidParam(format!("matrix not symmetric at ({i}, {j})")));
                }
                if !(-1.0..=1.0).contains(&v) {
                    return Err(Error::InvalidParam(format!("element ({i}, {j}) = {v} outside [-1, 1]")));
                }
            }
        }
        Ok(CorrelationMatrix {
            tickers,
            values,
            window,
        })
    }

    /// Upper-triangle elements in row order.
    pub fn off_diagonal(&self) -> impl Iterator<Item = f64> + '_ {
        let n = self.n();
        (0..n).flat_map(move |i| (i + 1..n).map(move |j| self.get(i, j)))
    }
}

pub fn correlation_matrix(returns: &ReturnMatrix, window: WindowSpec) -> Result<CorrelationMatrix> {
    window.check_fits(returns.n_rows())?;
    let n = returns.n_assets();
    let rows = window.start_index..window.end_index();
    let len = window.tau as f64;

    // centered columns and their root sum of squares
    let mut centered = vec![0.0; n * window.tau];
    let mut norms = vec![0.0; n];
    for i in 0..n {
        let mean = rows.clone().map(|t| returns.get(t, i)).sum::<f64>() / len;
        let col = &mut centered[i * window.tau..(i + 1) * window.tau];
        for (slot, t) in col.iter_mut().zip(rows.clone()) {
            *slot = returns.get(t, i) - mean;
        }
        let ss: f64 = col.iter().map(|d| d * d).sum();
        if ss == 0.0 {
            return Err(Error::ZeroVariance {
                ticker: returns.tickers[i].clone(),
            });
        }
        norms[i] = ss.sqrt();
    }

    let mut values = vec![0.0; n * n];
    for i in 0..n {
        values[i * n + i] = 1.0;
        let ci = &centered[i * window.tau..(i + 1) * window.tau];
        for j in i + 1..n {
            let cj = &centered[j * window.tau..(j + 1) * window.tau];
            let cov: f64 = ci.iter().zip(cj).map(|(a, b)| a * b).sum();
            let c = (cov / (norms[i] * norms[j])).clamp(-1.0, 1.0);
            values[i * n + j] = c;
            values[j * n + i] = c;
        }
    }
    Ok(CorrelationMatrix {
        tickers: returns.tickers.clone(),
        values,
        window,
    })
}

/// Writes the matrix with tickers as first row and first column.
pub fn write_correlation(path: impl AsRef<Path>, corr: &CorrelationMatrix) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    write!(w, "ticker").map_err(io)?;
    for t in &corr.tickers {
        write!(w, ",{t}").map_err(io)?;
    }
    writeln!(w).map_err(io)?;
    let n = corr.n();
    for i in 0..n {
        write!(w, "{}", corr.tickers[i]).map_err(io)?;
        for j in 0..n {
            write!(w, ",{}", f17(corr.get(i, j))).map_err(io)?;
        }
        writeln!(w).map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn load_correlation(path: impl AsRef<Path>, window: WindowSpec) -> Result<CorrelationMatrix> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let header = rdr
        .headers()
        .map_err(|e| Error::MalformedCsv(e.to_string()))?
        .clone();
    let tickers: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    let n = tickers.len();
    let mut values = Vec::with_capacity(n * n);
    for (i, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| Error::MalformedCsv(e.to_string()))?;
        if i >= n || record.len() != n + 1 || record[0] != tickers[i] {
            return Err(Error::MalformedCsv(format!("unexpected row {} in {}", i + 1, path.display())));
        }
        for cell in record.iter().skip(1) {
            values.push(
                cell.parse::<f64>()
                    .map_err(|_| Error::MalformedCsv(format!("bad number `{cell}`")))?,
            );
        }
    }
    CorrelationMatrix::from_values(tickers, values, window)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianFit {
    pub mean: f64,
    pub std: f64,
    pub count: usize,
}

/// Sample mean and standard deviation of the upper-triangle elements.
pub fn fit_gaussian(corr: &CorrelationMatrix) -> GaussianFit {
    let elems: Vec<f64> = corr.off_diagonal().collect();
    let count = elems.len();
    let mean = elems.iter().sum::<f64>() / count as f64;
    let var = if count > 1 {
        elems.iter().map(|c| (c - mean) * (c - mean)).sum::<f64>() / (count - 1) as f64
    } else {
        0.0
    };
    GaussianFit {
        mean,
        std: var.sqrt(),
        count,
    }
}

/// One-factor equicorrelated market.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub n_assets: usize,
    pub n_days: usize,
    pub rho: f64,
    pub daily_vol: f64,
    pub seed: u64,
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.rho) {
            return Err(Error::InvalidParam(format!("rho must lie in [0, 1), got {}", self.rho)));
        }
        if self.n_assets < 3 {
            return Err(Error::TooFewTickers(self.n_assets));
        }
        if self.n_days < 2 {
            return Err(Error::InvalidParam(format!("n_days must be at least 2, got {}", self.n_days)));
        }
        if !(self.daily_vol > 0.0) {
            return Err(Error::InvalidParam("daily_vol must be positive".into()));
        }
        Ok(())
    }
}

fn next_business_day(d: NaiveDate) -> NaiveDate {
    let mut next = d + Duration::days(1);
    while matches!(next.weekday(), Weekday::Sat | Weekday::Sun) {
        next += Duration::days(1);
    }
    next
}

/// Geometric price paths starting at 100 on business days from 2005-01-03.
///
/// Log-returns are `daily_vol * (sqrt(rho) m + sqrt(1 - rho) e_i)` with a
/// common factor `m` and idiosyncratic `e_i`, all standard normal.
pub fn synthesize_market(spec: &SynthSpec) -> Result<PriceTable> {
    spec.validate()?;
    let n = spec.n_assets;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let common = spec.rho.sqrt();
    let own = (1.0 - spec.rho).sqrt();

    let width = (n - 1).to_string().len().max(2);
    let tickers = (0..n).map(|i| format!("S{i:0width$}")).collect();
    let mut dates = Vec::with_capacity(spec.n_days);
    let mut date = NaiveDate::from_ymd_opt(2005, 1, 3).expect("valid date");
    let mut closes = Vec::with_capacity(spec.n_days * n);
    let mut log_price = vec![100f64.ln(); n];
    for day in 0..spec.n_days {
        if day > 0 {
            date = next_business_day(date);
            let m: f64 = StandardNormal.sample(&mut rng);
            for lp in log_price.iter_mut() {
                let e: f64 = StandardNormal.sample(&mut rng);
                *lp += spec.daily_vol * (common * m + own * e);
            }
        }
        dates.push(date);
        closes.extend(log_price.iter().map(|lp| lp.exp()));
    }
    Ok(PriceTable {
        tickers,
        dates,
        closes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn returns_from_columns(cols: &[Vec<f64>]) -> ReturnMatrix {
        let rows = cols[0].len();
        let n = cols.len();
        let mut returns = vec![0.0; rows * n];
        for (i, col) in cols.iter().enumerate() {
            for (t, v) in col.iter().enumerate() {
                returns[t * n + i] = *v;
            }
        }
        let start = NaiveDate::from_ymd_opt(2020, 1, 1).unwrap();
        ReturnMatrix {
            tickers: (0..n).map(|i| format!("T{i}")).collect(),
            dates: (0..rows).map(|t| start + Duration::days(t as i64)).collect(),
            returns,
        }
    }

    fn csv(text: &str, policy: MissingPolicy) -> Result<PriceTable> {
        read_prices(text.as_bytes(), policy)
    }

    #[test]
    fn loads_small_table() {
        let t = csv("date,A,B,C\n2020-01-01,1,2,3\n2020-01-02,2,3,4\n", MissingPolicy::Strict).unwrap();
        assert_eq!(t.n_days(), 2);
        assert_eq!(t.n_assets(), 3);
        assert_eq!(t.close(1, 2), 4.0);
    }

    #[test]
    fn rejects_bad_tables() {
        let neg = csv("date,A,B,C\n2020-01-01,1,-2,3\n", MissingPolicy::Strict);
        assert!(matches!(neg, Err(Error::NonPositivePrice { .. })));
        let zero = csv("date,A,B,C\n2020-01-01,1,0,3\n", MissingPolicy::Strict);
        assert!(matches!(zero, Err(Error::NonPositivePrice { .. })));
        let order = csv("date,A,B,C\n2020-01-02,1,2,3\n2020-01-01,1,2,3\n", MissingPolicy::Strict);
        assert!(matches!(order, Err(Error::UnorderedDates { row: 1, .. })));
        let two = csv("date,A,B\n2020-01-01,1,2\n", MissingPolicy::Strict);
        assert!(matches!(two, Err(Error::TooFewTickers(2))));
        let junk = csv("date,A,B,C\n2020-01-01,1,x,3\n", MissingPolicy::Strict);
        assert!(matches!(junk, Err(Error::MalformedCsv(_))));
        let short = csv("date,A,B,C\n2020-01-01,1,3\n", MissingPolicy::Strict);
        assert!(matches!(short, Err(Error::MalformedCsv(_))));
    }

    #[test]
    fn missing_cells_follow_policy() {
        let text = "date,A,B,C\n2020-01-01,1,2,3\n2020-01-02,5,,7\n";
        assert!(matches!(csv(text, MissingPolicy::Strict), Err(Error::MissingValue { .. })));
        let t = csv(text, MissingPolicy::ForwardFill).unwrap();
        assert_eq!(t.close(1, 1), 2.0);
        assert_eq!(t.close(1, 0), 5.0);
        // nothing to fill from on the first row
        let first = "date,A,B,C\n2020-01-01,1,,3\n";
        assert!(csv(first, MissingPolicy::ForwardFill).is_err());
    }

    #[test]
    fn log_return_values() {
        let t = csv(
            "date,A,B,C\n2020-01-01,100,100,100\n2020-01-02,100,110,50\n",
            MissingPolicy::Strict,
        )
        .unwrap();
        let r = log_returns(&t);
        assert_eq!(r.n_rows(), 1);
        assert_eq!(r.get(0, 0), 0.0);
        assert!((r.get(0, 1) - 0.095310).abs() < 1e-6);
        assert!((r.get(0, 2) + std::f64::consts::LN_2).abs() < 1e-12);
        assert_eq!(r.dates[0], NaiveDate::from_ymd_opt(2020, 1, 2).unwrap());
    }

    #[test]
    fn window_enumeration() {
        assert_eq!(windows(3899, 50, 50).unwrap().len(), 77);
        assert_eq!(windows(3900, 50, 50).unwrap().len(), 78);
        assert!(windows(10, 50, 50).unwrap().is_empty());
        let w = windows(10, 4, 3).unwrap();
        assert_eq!(w.iter().map(|w| w.start_index).collect::<Vec<_>>(), vec![0, 3, 6]);
        assert!(WindowSpec::new(0, 2, 1).is_err());
        assert!(WindowSpec::new(0, 5, 0).is_err());
    }

    #[test]
    fn perfect_and_anti_correlation() {
        let x: Vec<f64> = (0..10).map(|t| ((t * 7 % 5) as f64).sin()).collect();
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        let other: Vec<f64> = (0..10).map(|t| (t as f64).cos()).collect();
        let r = returns_from_columns(&[x.clone(), x, neg, other]);
        let c = correlation_matrix(&r, WindowSpec::new(0, 10, 10).unwrap()).unwrap();
        assert!((c.get(0, 1) - 1.0).abs() < 1e-15);
        assert!((c.get(0, 2) + 1.0).abs() < 1e-15);
        assert_eq!(c.get(3, 3), 1.0);
    }

    #[test]
    fn constant_column_is_zero_variance() {
        let r = returns_from_columns(&[vec![1.0, 2.0, 3.0], vec![0.5; 3], vec![3.0, 1.0, 2.0]]);
        match correlation_matrix(&r, WindowSpec::new(0, 3, 3).unwrap()) {
            Err(Error::ZeroVariance { ticker }) => assert_eq!(ticker, "T1"),
            other => panic!("expected ZeroVariance, got {other:?}"),
        }
    }

    #[test]
    fn window_outside_rows_is_rejected() {
        let r = returns_from_columns(&[vec![1.0, 2.0, 3.0], vec![2.0, 1.0, 0.0], vec![3.0, 1.0, 2.0]]);
        assert!(correlation_matrix(&r, WindowSpec::new(1, 3, 3).unwrap()).is_err());
    }

    #[test]
    fn dated_window() {
        let r = returns_from_columns(&[vec![1.0; 10], vec![2.0; 10], vec![3.0; 10]]);
        let from = NaiveDate::from_ymd_opt(2020, 1, 3).unwrap();
        let to = NaiveDate::from_ymd_opt(2020, 1, 7).unwrap();
        let w = window_for_dates(&r, from, to).unwrap();
        assert_eq!((w.start_index, w.tau), (2, 5));
        let later = NaiveDate::from_ymd_opt(2021, 1, 1).unwrap();
        assert!(window_for_dates(&r, later, later).is_err());
    }

    #[test]
    fn gaussian_fit_of_constant_elements() {
        let n = 4;
        let mut values = vec![0.5; n * n];
        for i in 0..n {
            values[i * n + i] = 1.0;
        }
        let c = CorrelationMatrix::from_values(
            (0..n).map(|i| i.to_string()).collect(),
            values,
            WindowSpec::new(0, 3, 3).unwrap(),
        )
        .unwrap();
        let fit = fit_gaussian(&c);
        assert_eq!(fit.count, 6);
        assert!((fit.mean - 0.5).abs() < 1e-15);
        assert_eq!(fit.std, 0.0);
    }

    #[test]
    fn synth_is_deterministic_and_positive() {
        let spec = SynthSpec {
            n_assets: 5,
            n_days: 300,
            rho: 0.9,
            daily_vol: 0.02,
            seed: 11,
        };
        let a = synthesize_market(&spec).unwrap();
        let b = synthesize_market(&spec).unwrap();
        assert_eq!(a, b);
        assert!(a.closes.iter().all(|&p| p > 0.0));
        assert!(a.dates.windows(2).all(|d| d[0] < d[1]));
        assert!(a.dates.iter().all(|d| !matches!(d.weekday(), Weekday::Sat | Weekday::Sun)));
        let c = synthesize_market(&SynthSpec { seed: 12, ..spec }).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn synth_rejects_bad_specs() {
        let ok = SynthSpec {
            n_assets: 5,
            n_days: 10,
            rho: 0.0,
            daily_vol: 0.01,
            seed: 1,
        };
        assert!(synthesize_market(&SynthSpec { rho: 1.0, ..ok }).is_err());
        assert!(synthesize_market(&SynthSpec { rho: -0.1, ..ok }).is_err());
        assert!(synthesize_market(&SynthSpec { n_assets: 2, ..ok }).is_err());
        assert!(synthesize_market(&SynthSpec { n_days: 1, ..ok }).is_err());
    }

    proptest! {
        #[test]
        fn symmetric_unit_diagonal(seed in 0u64..1000, n in 3usize..8, rows in 3usize..30) {
            let prices = synthesize_market(&SynthSpec { n_assets: n, n_days: rows + 1, rho: 0.3, daily_vol: 0.01, seed }).unwrap();
            let r = log_returns(&prices);
            let c = correlation_matrix(&r, WindowSpec::new(0, rows, rows).unwrap()).unwrap();
            for i in 0..n {
                prop_assert_eq!(c.get(i, i), 1.0);
                for j in 0..n {
                    prop_assert_eq!(c.get(i, j), c.get(j, i));
                    prop_assert!(c.get(i, j).abs() <= 1.0);
                }
            }
        }

        #[test]
        fn affine_invariance(seed in 0u64..1000, scale in 0.01f64..100.0, shift in -10.0f64..10.0, col in 0usize..4) {
            let prices = synthesize_market(&SynthSpec { n_assets: 4, n_days: 41, rho: 0.4, daily_vol: 0.01, seed }).unwrap();
            let r = log_returns(&prices);
            let mut moved = r.clone();
            for t in 0..moved.n_rows() {
                moved.returns[t * 4 + col] = scale * r.get(t, col) + shift;
            }
            let w = WindowSpec::new(0, 40, 40).unwrap();
            let a = correlation_matrix(&r, w).unwrap();
            let b = correlation_matrix(&moved, w).unwrap();
            for (x, y) in a.values.iter().zip(&b.values) {
                prop_assert!((x - y).abs() < 1e-10);
            }
        }

        #[test]
        fn cumulative_returns_rebuild_log_prices(seed in 0u64..1000) {
            let prices = synthesize_market(&SynthSpec { n_assets: 3, n_days: 200, rho: 0.5, daily_vol: 0.03, seed }).unwrap();
            let r = log_returns(&prices);
            for i in 0..3 {
                let mut acc = prices.close(0, i).ln();
                for (t, x) in r.column(i).enumerate() {
                    acc += x;
                    prop_assert!((acc - prices.close(t + 1, i).ln()).abs() < 1e-10);
                }
            }
        }
    }
}
