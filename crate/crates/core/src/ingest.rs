//! CSV ingestion, return construction and rolling-window testing.
//!
//! Security files come in two layouts, both with a mandatory header:
//!
//! * prices: `date, rf, <asset>_P, <asset>_DY, ...` with prices and annual
//!   dividend yields in percent; the return is
//!   `100 (P_t − P_{t−1}) / P_{t−1} + DY_t / 12`;
//! * returns: `date, rf, <asset>, ...` with total returns in percent.
//!
//! The `rf` column is subtracted in both cases. Empty cells are missing
//! values. Factor files are `date, <factor>, ...` without missing values.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use log::info;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::alpha_test::TestConfig;
use crate::derand::{run_derandomized, threshold_value, Decision, DerandConfig};
use crate::error::{Error, Result};
use crate::estimators::fit_ols;
use crate::linalg::Matrix;
use crate::panel::{FactorPanel, ReturnPanel};
use crate::rng::{derive_seed, purpose};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Schema {
    Prices,
    Returns,
}

/// Parsed security file. Series are indexed `[asset][date]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RawSecurityFile {
    pub dates: Vec<String>,
    pub risk_free: Vec<Option<f64>>,
    pub assets: Vec<String>,
    pub data: RawSeries,
}

#[derive(Debug, Clone, PartialEq)]
pub enum RawSeries {
    Prices {
        prices: Vec<Vec<Option<f64>>>,
        dividend_yields: Vec<Vec<Option<f64>>>,
    },
    Returns(Vec<Vec<Option<f64>>>),
}

impl RawSecurityFile {
    pub fn schema(&self) -> Schema {
        match self.data {
            RawSeries::Prices { .. } => Schema::Prices,
            RawSeries::Returns(_) => Schema::Returns,
        }
    }
}

/// Excess returns that may contain missing values, indexed `[asset][date]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnTable {
    pub assets: Vec<String>,
    pub dates: Vec<String>,
    pub values: Vec<Vec<Option<f64>>>,
}

impl ReturnTable {
    pub fn n_assets(&self) -> usize {
        self.assets.len()
    }

    pub fn n_periods(&self) -> usize {
        self.dates.len()
    }

    /// Assets observed at every date in `start..end`.
    pub fn complete_in(&self, start: usize, end: usize) -> Vec<usize> {
        (0..self.n_assets())
            .filter(|&i| self.values[i][start..end].iter().all(Option::is_some))
            .collect()
    }

    /// Panel of the assets observed at every date in `start..end`.
    pub fn panel_in(&self, start: usize, end: usize) -> Result<ReturnPanel<f64>> {
        let keep = self.complete_in(start, end);
        if keep.is_empty() {
            return Err(Error::NoSurvivingSecurities(format!(
                "no security is complete over {}..{}",
                self.dates[start],
                self.dates[end - 1]
            )));
        }
        let mut data = Vec::with_capacity(keep.len() * (end - start));
        for &i in &keep {
            data.extend(self.values[i][start..end].iter().map(|v| v.unwrap_or(f64::NAN)));
        }
        ReturnPanel::new(
            keep.iter().map(|&i| self.assets[i].clone()).collect(),
            self.dates[start..end].to_vec(),
            Matrix::new(keep.len(), end - start, data)?,
        )
    }

    /// Panel of the assets without any missing value.
    pub fn complete_panel(&self) -> Result<ReturnPanel<f64>> {
        if self.dates.is_empty() {
            return Err(Error::NoSurvivingSecurities("the table has no dates".into()));
        }
        self.panel_in(0, self.n_periods())
    }

    pub fn from_panel(panel: &ReturnPanel<f64>) -> Self {
        let r = panel.returns();
        Self {
            assets: panel.assets().to_vec(),
            dates: panel.dates().to_vec(),
            values: (0..r.rows()).map(|i| r.row(i).iter().map(|&v| Some(v)).collect()).collect(),
        }
    }
}

fn parse_cell(s: &str, line: u64, column: &str) -> Result<Option<f64>> {
    let s = s.trim();
    if s.is_empty() {
        return Ok(None);
    }
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(Some(v)),
        _ => Err(Error::Parse(format!("line {line}, column {column}: cannot parse '{s}' as a number"))),
    }
}

fn check_increasing(dates: &[String]) -> Result<()> {
    let numeric: Option<Vec<i64>> = dates.iter().map(|d| d.trim().parse::<i64>().ok()).collect();
    let ok = match numeric {
        Some(v) => v.windows(2).position(|w| w[0] >= w[1]),
        None => dates.windows(2).position(|w| w[0] >= w[1]),
    };
    match ok {
        None => Ok(()),
        Some(i) => Err(Error::Parse(format!(
            "dates must be strictly increasing: '{}' is followed by '{}'",
            dates[i],
            dates[i + 1]
        ))),
    }
}

fn check_unique(names: &[String], what: &str) -> Result<()> {
    let mut seen = HashSet::new();
    for n in names {
        if !seen.insert(n.as_str()) {
            return Err(Error::Parse(format!("duplicate {what} '{n}'")));
        }
    }
    Ok(())
}

struct CsvTable {
    header: Vec<String>,
    dates: Vec<String>,
    /// `[column][row]`, excluding the date column.
    columns: Vec<Vec<Option<f64>>>,
}

fn read_table(path: &Path) -> Result<CsvTable> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_path(path)?;
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header.len() < 2 {
        return Err(Error::Parse(format!("{}: header needs a date column and at least one series", path.display())));
    }
    let mut dates = Vec::new();
    let mut columns = vec![Vec::new(); header.len() - 1];
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let date = rec.get(0).unwrap_or("").to_string();
        if date.is_empty() {
            return Err(Error::Parse(format!("line {line}: empty date")));
        }
        dates.push(date);
        for (j, col) in columns.iter_mut().enumerate() {
            col.push(parse_cell(rec.get(j + 1).unwrap_or(""), line, &header[j + 1])?);
        }
    }
    check_increasing(&dates)?;
    Ok(CsvTable { header, dates, columns })
}

/// Reads a security file, detecting the layout from the header: the prices
/// layout is used when every series column ends in `_P` or `_DY` and they pair up.
pub fn read_security_csv(path: &Path) -> Result<RawSecurityFile> {
    let table = read_table(path)?;
    if !table.header[1].eq_ignore_ascii_case("rf") {
        return Err(Error::Parse(format!(
            "{}: second column must be 'rf', found '{}'",
            path.display(),
            table.header[1]
        )));
    }
    let names = &table.header[2..];
    let is_prices = !names.is_empty() && names.iter().all(|h| h.ends_with("_P") || h.ends_with("_DY"));
    let risk_free = table.columns[0].clone();
    let series = &table.columns[1..];
    if is_prices {
        let mut assets = Vec::new();
        let mut index: HashMap<String, (Option<usize>, Option<usize>)> = HashMap::new();
        for (j, h) in names.iter().enumerate() {
            let (base, is_price) = match h.strip_suffix("_P") {
                Some(b) => (b, true),
                None => (h.strip_suffix("_DY").unwrap_or(h), false),
            };
            let entry = index.entry(base.to_string()).or_insert_with(|| {
                assets.push(base.to_string());
                (None, None)
            });
            let slot = if is_price { &mut entry.0 } else { &mut entry.1 };
            if slot.replace(j).is_some() {
                return Err(Error::Parse(format!("duplicate asset column '{h}'")));
            }
        }
        let mut prices = Vec::with_capacity(assets.len());
        let mut dividend_yields = Vec::with_capacity(assets.len());
        for a in &assets {
            match index[a] {
                (Some(p), Some(d)) => {
                    prices.push(series[p].clone());
                    dividend_yields.push(series[d].clone());
                }
                _ => return Err(Error::Parse(format!("asset '{a}' needs both {a}_P and {a}_DY columns"))),
            }
        }
        Ok(RawSecurityFile {
            dates: table.dates,
            risk_free,
            assets,
            data: RawSeries::Prices {
                prices,
                dividend_yields,
            },
        })
    } else {
        let assets = names.to_vec();
        check_unique(&assets, "asset")?;
        Ok(RawSecurityFile {
            dates: table.dates,
            risk_free,
            assets,
            data: RawSeries::Returns(series.to_vec()),
        })
    }
}

/// Excess returns with missing values kept. The prices layout loses its
/// first date.
pub fn build_return_table(raw: &RawSecurityFile) -> Result<ReturnTable> {
    let n_dates = raw.dates.len();
    let (first, total): (usize, Vec<Vec<Option<f64>>>) = match &raw.data {
        RawSeries::Returns(r) => (0, r.clone()),
        RawSeries::Prices {
            prices,
            dividend_yields,
        } => {
            for (i, p) in prices.iter().enumerate() {
                if let Some((t, v)) = p.iter().enumerate().find_map(|(t, v)| v.filter(|v| *v <= 0.0).map(|v| (t, v))) {
                    return Err(Error::NonPositivePrice {
                        asset: raw.assets[i].clone(),
                        date: raw.dates[t].clone(),
                        price: v,
                    });
                }
            }
            let r = prices
                .iter()
                .zip(dividend_yields)
                .map(|(p, dy)| {
                    (1..n_dates)
                        .map(|t| match (p[t - 1], p[t], dy[t]) {
                            (Some(p0), Some(p1), Some(d)) => Some(100.0 * (p1 - p0) / p0 + d / 12.0),
                            _ => None,
                        })
                        .collect()
                })
                .collect();
            (1, r)
        }
    };
    let dates = raw.dates[first..].to_vec();
    let mut values = total;
    for (t, date) in dates.iter().enumerate() {
        let rf = raw.risk_free[t + first];
        let needed = values.iter().any(|row| row[t].is_some());
        match rf {
            Some(rf) => {
                for row in values.iter_mut() {
                    if let Some(v) = row[t].as_mut() {
                        *v -= rf;
                    }
                }
            }
            None if needed => return Err(Error::MissingRiskFree(date.clone())),
            None => {}
        }
    }
    Ok(ReturnTable {
        assets: raw.assets.clone(),
        dates,
        values,
    })
}

/// Complete-case excess-return panel: assets with any missing value are dropped.
pub fn build_returns(raw: &RawSecurityFile) -> Result<ReturnPanel<f64>> {
    build_return_table(raw)?.complete_panel()
}

/// Factor series read from CSV, indexed by date label.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorTable {
    pub names: Vec<String>,
    pub dates: Vec<String>,
    /// `[factor][date]`.
    pub values: Vec<Vec<f64>>,
}

pub fn read_factor_csv(path: &Path) -> Result<FactorTable> {
    let table = read_table(path)?;
    let names = table.header[1..].to_vec();
    check_unique(&names, "factor")?;
    let mut values = Vec::with_capacity(names.len());
    for (name, col) in names.iter().zip(table.columns) {
        let filled: Option<Vec<f64>> = col.iter().copied().collect();
        match filled {
            Some(v) => values.push(v),
            None => return Err(Error::Parse(format!("factor '{name}' has missing values"))),
        }
    }
    Ok(FactorTable {
        names,
        dates: table.dates,
        values,
    })
}

impl FactorTable {
    /// Factors `names` at `dates` (every date must be present).
    pub fn select(&self, names: &[String], dates: &[String]) -> Result<FactorPanel<f64>> {
        let pos: HashMap<&str, usize> = self.dates.iter().enumerate().map(|(i, d)| (d.as_str(), i)).collect();
        let idx: Vec<usize> = dates
            .iter()
            .map(|d| {
                pos.get(d.as_str())
                    .copied()
                    .ok_or_else(|| Error::Parse(format!("factor file has no row for date '{d}'")))
            })
            .collect::<Result<_>>()?;
        let mut data = Vec::with_capacity(names.len() * dates.len());
        for name in names {
            let k = self
                .names
                .iter()
                .position(|n| n.eq_ignore_ascii_case(name))
                .ok_or_else(|| Error::Parse(format!("factor file has no column '{name}'")))?;
            data.extend(idx.iter().map(|&t| self.values[k][t]));
        }
        FactorPanel::new(names.to_vec(), Matrix::new(names.len(), dates.len(), data)?)
    }
}

/// Factor sets of the empirical application.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FactorModel {
    Capm,
    Ff2,
    Ff3,
    Ff4,
    Ff5,
    Ff6,
    Custom(Vec<String>),
}

impl FactorModel {
    pub fn factor_names(&self) -> Vec<String> {
        let names: &[&str] = match self {
            FactorModel::Capm => &["MKT"],
            FactorModel::Ff2 => &["MKT", "MOM"],
            FactorModel::Ff3 => &["MKT", "SMB", "HML"],
            FactorModel::Ff4 => &["MKT", "SMB", "HML", "MOM"],
            FactorModel::Ff5 => &["MKT", "SMB", "HML", "RMW", "CMA"],
            FactorModel::Ff6 => &["MKT", "SMB", "HML", "RMW", "CMA", "MOM"],
            FactorModel::Custom(v) => return v.clone(),
        };
        names.iter().map(|s| s.to_string()).collect()
    }
}

impl FromStr for FactorModel {
    type Err = Error;

    /// Preset name, or a comma-separated list of factor columns.
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.trim().to_ascii_lowercase().as_str() {
            "capm" => FactorModel::Capm,
            "ff2" => FactorModel::Ff2,
            "ff3" => FactorModel::Ff3,
            "ff4" => FactorModel::Ff4,
            "ff5" => FactorModel::Ff5,
            "ff6" => FactorModel::Ff6,
            _ => {
                let v: Vec<String> = s.split(',').map(|x| x.trim().to_string()).filter(|x| !x.is_empty()).collect();
                if v.is_empty() {
                    return Err(Error::InvalidConfig(format!("unknown factor model '{s}'")));
                }
                FactorModel::Custom(v)
            }
        })
    }
}

impl fmt::Display for FactorModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FactorModel::Custom(v) => f.write_str(&v.join(",")),
            other => write!(f, "{}", format!("{other:?}").to_ascii_uppercase()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RollingResult {
    pub window_starts: Vec<String>,
    pub window_ends: Vec<String>,
    pub q_values: Vec<f64>,
    pub thresholds: Vec<f64>,
    pub decisions: Vec<Decision>,
    pub n_per_window: Vec<usize>,
    pub b_per_window: Vec<usize>,
}

impl RollingResult {
    pub fn len(&self) -> usize {
        self.q_values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.q_values.is_empty()
    }

    pub fn rejections(&self) -> usize {
        self.decisions.iter().filter(|d| **d == Decision::RejectNull).count()
    }

    /// Rows as written by [`write_q_series`] with the per-window thresholds.
    pub fn q_rows(&self) -> Vec<QRow> {
        (0..self.len())
            .map(|w| QRow {
                window_end: self.window_ends[w].clone(),
                q_value: self.q_values[w],
                threshold: self.thresholds[w],
                decision: self.decisions[w],
            })
            .collect()
    }
}

/// Seed of the de-randomization in window `w`.
pub fn window_seed(master: u64, w: usize) -> u64 {
    derive_seed(master, &[purpose::WINDOW, w as u64])
}

struct WindowOutcome {
    q: f64,
    threshold: f64,
    decision: Decision,
    n: usize,
    b: usize,
}

/// Slides a window of `window` periods one period at a time. In each window
/// the assets with any missing value are dropped, the model is fitted by OLS
/// on the factors of `model` and the de-randomized rule is applied.
/// `factors` must carry every factor of `model` over the dates of `table`.
pub fn run_rolling(
    table: &ReturnTable,
    factors: &FactorPanel<f64>,
    window: usize,
    test: &TestConfig,
    derand: &DerandConfig,
    model: &FactorModel,
) -> Result<RollingResult> {
    test.validate()?;
    let total = table.n_periods();
    if window == 0 || window > total {
        return Err(Error::WindowTooShort {
            window,
            available: total,
        });
    }
    if factors.n_periods() != total {
        return Err(Error::DimensionMismatch(format!(
            "factors span {} periods, returns span {total}",
            factors.n_periods()
        )));
    }
    let names = model.factor_names();
    let rows: Vec<usize> = names
        .iter()
        .map(|n| {
            factors
                .names()
                .iter()
                .position(|f| f.eq_ignore_ascii_case(n))
                .ok_or_else(|| Error::InvalidConfig(format!("factor '{n}' not supplied for model {model}")))
        })
        .collect::<Result<_>>()?;
    let n_windows = total - window + 1;
    let outcomes: Vec<Result<WindowOutcome>> = (0..n_windows)
        .into_par_iter()
        .map(|w| {
            let panel = table.panel_in(w, w + window)?;
            if panel.n_assets() < 3 {
                return Err(Error::NoSurvivingSecurities(format!(
                    "only {} complete securities in the window ending {}",
                    panel.n_assets(),
                    table.dates[w + window - 1]
                )));
            }
            let data: Vec<f64> = rows
                .iter()
                .flat_map(|&k| factors.values().row(k)[w..w + window].iter().copied())
                .collect();
            let fw = FactorPanel::new(names.clone(), Matrix::new(rows.len(), window, data)?)?;
            let fitted = fit_ols(&panel, &fw)?;
            let mut d = *derand;
            d.master_seed = window_seed(derand.master_seed, w);
            let rep = run_derandomized(&fitted, test, &d)?;
            Ok(WindowOutcome {
                q: rep.q_value,
                threshold: rep.threshold_value,
                decision: rep.decision,
                n: panel.n_assets(),
                b: rep.b_used,
            })
        })
        .collect();
    let mut result = RollingResult {
        window_starts: Vec::with_capacity(n_windows),
        window_ends: Vec::with_capacity(n_windows),
        q_values: Vec::with_capacity(n_windows),
        thresholds: Vec::with_capacity(n_windows),
        decisions: Vec::with_capacity(n_windows),
        n_per_window: Vec::with_capacity(n_windows),
        b_per_window: Vec::with_capacity(n_windows),
    };
    for (w, o) in outcomes.into_iter().enumerate() {
        let o = o?;
        result.window_starts.push(table.dates[w].clone());
        result.window_ends.push(table.dates[w + window - 1].clone());
        result.q_values.push(o.q);
        result.thresholds.push(o.threshold);
        result.decisions.push(o.decision);
        result.n_per_window.push(o.n);
        result.b_per_window.push(o.b);
    }
    info!(
        "{} windows of {window} periods, {} rejections",
        result.len(),
        result.rejections()
    );
    Ok(result)
}

/// One line of a Q series file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QRow {
    pub window_end: String,
    pub q_value: f64,
    pub threshold: f64,
    pub decision: Decision,
}

/// Writes `window_end, q_value, threshold, decision`. With a fixed
/// `threshold` every row is compared with it; otherwise the per-window
/// thresholds and decisions are written.
pub fn write_q_series(result: &RollingResult, threshold: Option<f64>, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for mut row in result.q_rows() {
        if let Some(th) = threshold {
            row.threshold = th;
            row.decision = if row.q_value >= th {
                Decision::RetainNull
            } else {
                Decision::RejectNull
            };
        }
        w.serialize(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_q_series(path: &Path) -> Result<Vec<QRow>> {
    let mut r = csv::Reader::from_path(path)?;
    let rows: std::result::Result<Vec<QRow>, _> = r.deserialize().collect();
    Ok(rows?)
}

/// Threshold of a de-randomized rule for `n` assets, as used per window.
pub fn window_threshold(derand: &DerandConfig, n: usize) -> Result<f64> {
    threshold_value(derand.threshold, derand.tau, derand.resolve_b(n))
}

/// Writes a panel in the returns layout with a zero `rf` column.
pub fn write_returns_csv(panel: &ReturnPanel<f64>, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["date".to_string(), "rf".into()];
    header.extend(panel.assets().iter().cloned());
    w.write_record(&header)?;
    let r = panel.returns();
    for (t, d) in panel.dates().iter().enumerate() {
        let mut row = vec![d.clone(), "0".into()];
        row.extend((0..r.rows()).map(|i| r[(i, t)].to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `date, <factor>, ...` using `dates` as row labels.
pub fn write_factors_csv(factors: &FactorPanel<f64>, dates: &[String], path: &Path) -> Result<()> {
    if dates.len() != factors.n_periods() {
        return Err(Error::DimensionMismatch(format!(
            "{} dates for {} factor periods",
            dates.len(),
            factors.n_periods()
        )));
    }
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["date".to_string()];
    header.extend(factors.names().iter().cloned());
    w.write_record(&header)?;
    for (t, d) in dates.iter().enumerate() {
        let mut row = vec![d.clone()];
        row.extend((0..factors.n_factors()).map(|k| factors.values()[(k, t)].to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
