//! Forward returns, abnormal returns and tertile labels.
//!
//! Returns are simple returns between two trading days: the first trading
//! day on or after the anchor and the first trading day on or after
//! `anchor + horizon_days`. Both endpoints must lie within
//! [`SNAP_TOLERANCE_DAYS`] calendar days of their target, otherwise the
//! anchor is unlabelable for that ticker.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::{Duration, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_HORIZON_DAYS: i64 = 365;
pub const SNAP_TOLERANCE_DAYS: i64 = 7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PerformanceClass {
    Under,
    Average,
    Over,
}

impl PerformanceClass {
    pub const ALL: [PerformanceClass; 3] = [
        PerformanceClass::Under,
        PerformanceClass::Average,
        PerformanceClass::Over,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            PerformanceClass::Under => "under",
            PerformanceClass::Average => "average",
            PerformanceClass::Over => "over",
        }
    }
}

impl fmt::Display for PerformanceClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PerformanceClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "under" => Ok(PerformanceClass::Under),
            "average" => Ok(PerformanceClass::Average),
            "over" => Ok(PerformanceClass::Over),
            other => Err(Error::Data(format!("unknown performance class {other:?}"))),
        }
    }
}

/// Daily adjusted closes for one ticker, strictly increasing in date.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceSeries {
    ticker: String,
    points: Vec<(NaiveDate, f64)>,
}

impl PriceSeries {
    pub fn new(ticker: impl Into<String>, points: Vec<(NaiveDate, f64)>) -> Result<Self> {
        let ticker = ticker.into();
        for w in points.windows(2) {
            if w[0].0 >= w[1].0 {
                return Err(Error::Data(format!(
                    "{ticker}: price dates not strictly increasing at {}",
                    w[1].0
                )));
            }
        }
        if let Some((d, p)) = points.iter().find(|(_, p)| !(p.is_finite() && *p > 0.0)) {
            return Err(Error::Data(format!("{ticker}: non-positive price {p} on {d}")));
        }
        Ok(PriceSeries { ticker, points })
    }

    pub fn ticker(&self) -> &str {
        &self.ticker
    }

    pub fn points(&self) -> &[(NaiveDate, f64)] {
        &self.points
    }

    /// Index of the first trading day in `[target, target + tolerance]`.
    pub fn snap_forward(&self, target: NaiveDate, tolerance_days: i64) -> Option<usize> {
        let i = self.points.partition_point(|(d, _)| *d < target);
        let (d, _) = self.points.get(i)?;
        ((*d - target).num_days() <= tolerance_days).then_some(i)
    }

    /// Last close on or before `date`.
    pub fn price_on_or_before(&self, date: NaiveDate) -> Option<f64> {
        let i = self.points.partition_point(|(d, _)| *d <= date);
        i.checked_sub(1).map(|i| self.points[i].1)
    }

    pub fn scaled(&self, factor: f64) -> PriceSeries {
        PriceSeries {
            ticker: self.ticker.clone(),
            points: self.points.iter().map(|&(d, p)| (d, p * factor)).collect(),
        }
    }
}

/// All price series keyed by ticker.
pub type PriceBook = BTreeMap<String, PriceSeries>;

/// Reader interface for price data.
pub trait PriceSource {
    fn load(&self) -> Result<PriceBook>;
}

/// Local CSV file with header `ticker,date,adj_close`.
#[derive(Debug, Clone)]
pub struct CsvPriceFile {
    pub path: PathBuf,
}

impl CsvPriceFile {
    pub fn new(path: impl Into<PathBuf>) -> Self {
        CsvPriceFile { path: path.into() }
    }
}

impl PriceSource for CsvPriceFile {
    fn load(&self) -> Result<PriceBook> {
        let file = std::fs::File::open(&self.path).map_err(|e| Error::io(&self.path, e))?;
        read_prices(file, &self.path)
    }
}

#[derive(Debug, Deserialize)]
struct PriceRow {
    ticker: String,
    date: String,
    adj_close: f64,
}

pub fn read_prices<R: Read>(reader: R, origin: &Path) -> Result<PriceBook> {
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| Error::Data(format!("{}: unreadable header: {e}", origin.display())))?
        .clone();
    let mut rows: BTreeMap<String, Vec<(NaiveDate, f64)>> = BTreeMap::new();
    let mut record = csv::StringRecord::new();
    loop {
        let at = |line: u64, message: String| Error::DataAt {
            path: origin.to_path_buf(),
            line,
            message,
        };
        match rdr.read_record(&mut record) {
            Ok(false) => break,
            Ok(true) => {
                let line = record.position().map(|p| p.line()).unwrap_or(0);
                let row: PriceRow = record
                    .deserialize(Some(&headers))
                    .map_err(|e| at(line, format!("malformed price row: {e}")))?;
                let date = NaiveDate::parse_from_str(row.date.trim(), "%Y-%m-%d")
                    .map_err(|e| at(line, format!("invalid date {:?}: {e}", row.date)))?;
                if !(row.adj_close.is_finite() && row.adj_close > 0.0) {
                    return Err(at(line, format!("non-positive price {}", row.adj_close)));
                }
                rows.entry(row.ticker.trim().to_uppercase())
                    .or_default()
                    .push((date, row.adj_close));
            }
            Err(e) => {
                let line = e.position().map(|p| p.line()).unwrap_or(0);
                return Err(at(line, format!("malformed price row: {e}")));
            }
        }
    }
    rows.into_iter()
        .map(|(ticker, mut points)| {
            points.sort_by_key(|(d, _)| *d);
            if let Some(w) = points.windows(2).find(|w| w[0].0 == w[1].0) {
                return Err(Error::Data(format!("{ticker}: duplicate price row for {}", w[0].0)));
            }
            Ok((ticker.clone(), PriceSeries::new(ticker, points)?))
        })
        .collect()
}

pub fn write_prices<W: Write>(book: &PriceBook, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let err = |e: csv::Error| Error::Data(format!("price csv write: {e}"));
    w.write_record(["ticker", "date", "adj_close"]).map_err(err)?;
    for series in book.values() {
        for (d, p) in series.points() {
            w.write_record([series.ticker(), &d.to_string(), &format!("{p}")])
                .map_err(err)?;
        }
    }
    w.flush().map_err(|e| Error::io("<prices>", e))
}

/// Simple return from the first trading day on/after `anchor` to the first
/// trading day on/after `anchor + horizon_days`. `None` when either endpoint
/// has no trading day within the snap tolerance.
pub fn forward_return(series: &PriceSeries, anchor: NaiveDate, horizon_days: i64) -> Option<f64> {
    let start = series.snap_forward(anchor, SNAP_TOLERANCE_DAYS)?;
    let end = series.snap_forward(anchor + Duration::days(horizon_days), SNAP_TOLERANCE_DAYS)?;
    Some(series.points[end].1 / series.points[start].1 - 1.0)
}

/// What "the market" means when computing abnormal returns.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", tag = "kind", content = "ticker")]
pub enum Benchmark {
    /// Equal-weighted mean over every series in the book.
    #[default]
    EqualWeighted,
    /// A single index series, looked up in a separate book.
    Index(String),
}

/// Equal-weighted mean forward return over every labelable series.
pub fn market_return(all_series: &PriceBook, anchor: NaiveDate, horizon_days: i64) -> Result<f64> {
    let mut sum = 0.0;
    let mut n = 0usize;
    for series in all_series.values() {
        if let Some(r) = forward_return(series, anchor, horizon_days) {
            sum += r;
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::Data(format!("no labelable firm at {anchor}")));
    }
    Ok(sum / n as f64)
}

/// Market return source that also handles index benchmarks.
#[derive(Debug, Clone)]
pub struct Market<'a> {
    pub firms: &'a PriceBook,
    pub benchmark: Benchmark,
    pub index: Option<&'a PriceSeries>,
    pub horizon_days: i64,
}

impl<'a> Market<'a> {
    pub fn equal_weighted(firms: &'a PriceBook, horizon_days: i64) -> Self {
        Market {
            firms,
            benchmark: Benchmark::EqualWeighted,
            index: None,
            horizon_days,
        }
    }

    pub fn with_index(firms: &'a PriceBook, index: &'a PriceSeries, horizon_days: i64) -> Self {
        Market {
            firms,
            benchmark: Benchmark::Index(index.ticker().to_string()),
            index: Some(index),
            horizon_days,
        }
    }

    pub fn market_return(&self, anchor: NaiveDate) -> Result<f64> {
        match (&self.benchmark, self.index) {
            (Benchmark::EqualWeighted, _) => market_return(self.firms, anchor, self.horizon_days),
            (Benchmark::Index(ticker), Some(series)) => forward_return(series, anchor, self.horizon_days)
                .ok_or_else(|| Error::Unlabelable {
                    ticker: ticker.clone(),
                    date: anchor,
                }),
            (Benchmark::Index(ticker), None) => Err(Error::Config(format!("index series {ticker} not loaded"))),
        }
    }

    pub fn abnormal_return(&self, ticker: &str, anchor: NaiveDate) -> Result<AbnormalReturn> {
        let series = self
            .firms
            .get(ticker)
            .ok_or_else(|| Error::Data(format!("no price series for {ticker}")))?;
        let stock = forward_return(series, anchor, self.horizon_days).ok_or_else(|| Error::Unlabelable {
            ticker: ticker.to_string(),
            date: anchor,
        })?;
        let market = self.market_return(anchor)?;
        Ok(AbnormalReturn::new(ticker, anchor, stock, market))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbnormalReturn {
    pub ticker: String,
    pub anchor_date: NaiveDate,
    pub stock_return: f64,
    pub market_return: f64,
    pub abnormal: f64,
}

impl AbnormalReturn {
    pub fn new(ticker: &str, anchor_date: NaiveDate, stock_return: f64, market_return: f64) -> Self {
        AbnormalReturn {
            ticker: ticker.to_string(),
            anchor_date,
            stock_return,
            market_return,
            abnormal: stock_return - market_return,
        }
    }
}

/// Stock forward return minus the equal-weighted market return.
pub fn abnormal_return(
    series: &PriceSeries,
    all_series: &PriceBook,
    anchor: NaiveDate,
    horizon_days: i64,
) -> Result<AbnormalReturn> {
    let stock = forward_return(series, anchor, horizon_days).ok_or_else(|| Error::Unlabelable {
        ticker: series.ticker().to_string(),
        date: anchor,
    })?;
    let market = market_return(all_series, anchor, horizon_days)?;
    Ok(AbnormalReturn::new(series.ticker(), anchor, stock, market))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TertileBreakpoints {
    pub q33: f64,
    pub q66: f64,
    pub fitted_on: String,
}

/// Nearest-rank one-third and two-thirds quantiles.
///
/// Ranks are `ceil(n/3)` and `ceil(2n/3)` computed in integers, so
/// all-distinct populations split into classes differing by at most one.
pub fn fit_tertiles(returns: &[f64], fitted_on: impl Into<String>) -> Result<TertileBreakpoints> {
    if returns.len() < 3 {
        return Err(Error::Data(format!(
            "tertiles need at least 3 returns, got {}",
            returns.len()
        )));
    }
    if returns.iter().any(|r| !r.is_finite()) {
        return Err(Error::Data("non-finite return in tertile input".into()));
    }
    let mut sorted = returns.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let rank33 = n.div_ceil(3);
    let rank66 = (2 * n).div_ceil(3);
    Ok(TertileBreakpoints {
        q33: sorted[rank33 - 1],
        q66: sorted[rank66 - 1],
        fitted_on: fitted_on.into(),
    })
}

pub fn assign_label(r: f64, bp: &TertileBreakpoints) -> PerformanceClass {
    if r <= bp.q33 {
        PerformanceClass::Under
    } else if r > bp.q66 {
        PerformanceClass::Over
    } else {
        PerformanceClass::Average
    }
}

/// Abnormal one-year forward returns for every (trading day, ticker) in a window.
///
/// Trading days are the union of all series' dates inside the window.
#[derive(Debug, Clone)]
pub struct AbnormalPanel {
    pub days: Vec<NaiveDate>,
    pub tickers: Vec<String>,
    /// Day-major; `None` where the ticker (or the market) is unlabelable.
    pub values: Vec<Vec<Option<f64>>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupAverage {
    pub value: f64,
    pub days_used: usize,
    pub firms_labelable: usize,
}

impl AbnormalPanel {
    pub fn build(market: &Market<'_>, window_start: NaiveDate, window_end: NaiveDate) -> Result<Self> {
        if window_end < window_start {
            return Err(Error::Usage(format!("empty window {window_start}..{window_end}")));
        }
        let days: BTreeSet<NaiveDate> = market
            .firms
            .values()
            .flat_map(|s| s.points().iter().map(|(d, _)| *d))
            .filter(|d| (window_start..=window_end).contains(d))
            .collect();
        let tickers: Vec<String> = market.firms.keys().cloned().collect();
        let days: Vec<NaiveDate> = days.into_iter().collect();
        let values = days
            .iter()
            .map(|&day| match market.market_return(day) {
                Ok(m) => market
                    .firms
                    .values()
                    .map(|s| forward_return(s, day, market.horizon_days).map(|r| r - m))
                    .collect(),
                Err(_) => vec![None; tickers.len()],
            })
            .collect();
        Ok(AbnormalPanel { days, tickers, values })
    }

    /// Mean over days of the equal-weighted mean abnormal return of `members`.
    pub fn group_average(&self, members: &BTreeSet<String>) -> Result<GroupAverage> {
        let cols: Vec<usize> = self
            .tickers
            .iter()
            .enumerate()
            .filter(|(_, t)| members.contains(*t))
            .map(|(i, _)| i)
            .collect();
        let mut labelable = vec![false; cols.len()];
        let mut total = 0.0;
        let mut days_used = 0usize;
        for row in &self.values {
            let mut sum = 0.0;
            let mut n = 0usize;
            for (k, &c) in cols.iter().enumerate() {
                if let Some(v) = row[c] {
                    sum += v;
                    n += 1;
                    labelable[k] = true;
                }
            }
            if n > 0 {
                total += sum / n as f64;
                days_used += 1;
            }
        }
        if days_used == 0 {
            return Err(Error::Data("no labelable trading day for group".into()));
        }
        Ok(GroupAverage {
            value: total / days_used as f64,
            days_used,
            firms_labelable: labelable.iter().filter(|&&b| b).count(),
        })
    }

    /// Adds `c` to every defined cell.
    pub fn shifted(&self, c: f64) -> AbnormalPanel {
        AbnormalPanel {
            values: self
                .values
                .iter()
                .map(|row| row.iter().map(|v| v.map(|x| x + c)).collect())
                .collect(),
            ..self.clone()
        }
    }
}

/// Footnote-style rolling average: mean over trading days in the window of
/// the group's equal-weighted one-year abnormal return starting that day.
pub fn rolling_year_average(
    tickers: &BTreeSet<String>,
    window_start: NaiveDate,
    window_end: NaiveDate,
    all_series: &PriceBook,
    horizon_days: i64,
) -> Result<f64> {
    let market = Market::equal_weighted(all_series, horizon_days);
    let panel = AbnormalPanel::build(&market, window_start, window_end)?;
    Ok(panel.group_average(tickers)?.value)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(y: i32, m: u32, day: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(y, m, day).unwrap()
    }

    fn series(ticker: &str, points: &[(NaiveDate, f64)]) -> PriceSeries {
        PriceSeries::new(ticker, points.to_vec()).unwrap()
    }

    #[test]
    fn simple_forward_returns() {
        let s = series("A", &[(d(2019, 1, 2), 100.0), (d(2020, 1, 2), 110.0)]);
        let r = forward_return(&s, d(2019, 1, 2), 365).unwrap();
        assert!((r - 0.10).abs() < 1e-12);
        let flat = series("B", &[(d(2019, 1, 2), 50.0), (d(2020, 1, 2), 50.0)]);
        assert_eq!(forward_return(&flat, d(2019, 1, 2), 365), Some(0.0));
    }

    #[test]
    fn weekend_anchor_snaps_to_monday() {
        // 2019-01-05 is a Saturday; business days only
        let mut points = Vec::new();
        let mut day = d(2018, 12, 31);
        let mut price = 100.0;
        while day <= d(2020, 1, 31) {
            if !matches!(day.format("%a").to_string().as_str(), "Sat" | "Sun") {
                points.push((day, price));
                price += 1.0;
            }
            day += Duration::days(1);
        }
        let s = series("A", &points);
        let anchor = d(2019, 1, 5);
        // brute force: scan forward day by day for the first listed date
        let scan = |target: NaiveDate| {
            let mut t = target;
            loop {
                if let Some(&(_, p)) = points.iter().find(|(pd, _)| *pd == t) {
                    return p;
                }
                t += Duration::days(1);
            }
        };
        let start = scan(anchor);
        assert_eq!(start, points.iter().find(|(pd, _)| *pd == d(2019, 1, 7)).unwrap().1);
        let end = scan(anchor + Duration::days(365));
        assert_eq!(forward_return(&s, anchor, 365).unwrap(), end / start - 1.0);
    }

    #[test]
    fn gap_beyond_tolerance_is_unlabelable() {
        let s = series("A", &[(d(2019, 1, 1), 1.0), (d(2019, 1, 20), 2.0), (d(2020, 1, 2), 3.0)]);
        assert_eq!(forward_return(&s, d(2019, 1, 5), 365), None);
        // end too far away
        let s = series("A", &[(d(2019, 1, 2), 1.0), (d(2020, 2, 1), 2.0)]);
        assert_eq!(forward_return(&s, d(2019, 1, 2), 365), None);
    }

    #[test]
    fn market_mean_and_abnormal() {
        let mut book = PriceBook::new();
        book.insert("A".into(), series("A", &[(d(2019, 1, 2), 100.0), (d(2020, 1, 2), 110.0)]));
        book.insert("B".into(), series("B", &[(d(2019, 1, 2), 100.0), (d(2020, 1, 2), 130.0)]));
        let m = market_return(&book, d(2019, 1, 2), 365).unwrap();
        assert!((m - 0.20).abs() < 1e-12);
        let ab = abnormal_return(&book["A"], &book, d(2019, 1, 2), 365).unwrap();
        assert!((ab.abnormal + 0.10).abs() < 1e-12);
        assert_eq!(ab.abnormal, ab.stock_return - ab.market_return);

        let mut single = PriceBook::new();
        single.insert("A".into(), book["A"].clone());
        let r = forward_return(&book["A"], d(2019, 1, 2), 365).unwrap();
        assert_eq!(market_return(&single, d(2019, 1, 2), 365).unwrap(), r);
        assert!(market_return(&single, d(2010, 1, 2), 365).is_err());
    }

    #[test]
    fn abnormal_arithmetic() {
        assert_eq!(AbnormalReturn::new("A", d(2019, 1, 2), 0.10, 0.10).abnormal, 0.0);
        let ab = AbnormalReturn::new("A", d(2019, 1, 2), 0.15, 0.05);
        assert!((ab.abnormal - 0.10).abs() < 1e-15);
    }

    #[test]
    fn tertiles_on_six_values() {
        let values = [-0.3, -0.1, 0.0, 0.1, 0.2, 0.3];
        let bp = fit_tertiles(&values, "t").unwrap();
        assert_eq!(bp.q33, -0.1);
        assert_eq!(bp.q66, 0.1);
        let mut counts = [0; 3];
        for v in values {
            counts[assign_label(v, &bp).index()] += 1;
        }
        assert_eq!(counts, [2, 2, 2]);
        assert_eq!(assign_label(bp.q33, &bp), PerformanceClass::Under);
        assert_eq!(assign_label(bp.q66, &bp), PerformanceClass::Average);
    }

    #[test]
    fn degenerate_tertiles() {
        let bp = fit_tertiles(&[0.5; 7], "t").unwrap();
        assert_eq!((bp.q33, bp.q66), (0.5, 0.5));
        assert!(fit_tertiles(&[0.1, 0.2], "t").is_err());
    }

    #[test]
    fn class_order() {
        assert!(PerformanceClass::Under < PerformanceClass::Average);
        assert!(PerformanceClass::Average < PerformanceClass::Over);
    }

    #[test]
    fn rolling_mean_of_means() {
        let mut book = PriceBook::new();
        // day 1 return 0.10, day 2 return 0.20 for the single firm; market uses an
        // index so the firm's abnormal return equals its raw return
        book.insert(
            "A".into(),
            series(
                "A",
                &[(d(2019, 1, 2), 100.0), (d(2019, 1, 3), 100.0), (d(2020, 1, 2), 110.0), (d(2020, 1, 3), 120.0)],
            ),
        );
        let index = series(
            "IDX",
            &[(d(2019, 1, 2), 1.0), (d(2019, 1, 3), 1.0), (d(2020, 1, 2), 1.0), (d(2020, 1, 3), 1.0)],
        );
        let market = Market::with_index(&book, &index, 365);
        let panel = AbnormalPanel::build(&market, d(2019, 1, 2), d(2019, 1, 3)).unwrap();
        let members: BTreeSet<String> = ["A".to_string()].into();
        let avg = panel.group_average(&members).unwrap();
        assert!((avg.value - 0.15).abs() < 1e-12);
        assert_eq!(avg.days_used, 2);

        // equal-weighted single firm: abnormal return is identically zero
        let v = rolling_year_average(&members, d(2019, 1, 2), d(2019, 1, 2), &book, 365).unwrap();
        assert_eq!(v, 0.0);
    }

    #[test]
    fn price_csv_roundtrip_and_errors() {
        let body = "ticker,date,adj_close\nb,2019-01-03,2.5\nA,2019-01-02,1.0\nB,2019-01-02,2.0\n";
        let book = read_prices(body.as_bytes(), Path::new("p.csv")).unwrap();
        assert_eq!(book.len(), 2);
        assert_eq!(book["B"].points()[0].0, d(2019, 1, 2));
        let mut out = Vec::new();
        write_prices(&book, &mut out).unwrap();
        assert_eq!(read_prices(out.as_slice(), Path::new("p.csv")).unwrap(), book);

        let bad = "ticker,date,adj_close\nA,2019-01-02,-1.0\n";
        assert!(matches!(read_prices(bad.as_bytes(), Path::new("p.csv")), Err(Error::DataAt { line: 2, .. })));
        let dup = "ticker,date,adj_close\nA,2019-01-02,1.0\nA,2019-01-02,1.5\n";
        assert!(read_prices(dup.as_bytes(), Path::new("p.csv")).is_err());
    }
}
