//! Firm-level picks from document predictions and their realized rolling
//! one-year abnormal returns over a test window.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::io::Write;

use chrono::{Duration, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::baselines::{argmax, PredictionRecord};
use crate::error::{Error, Result};
use crate::market::{AbnormalPanel, Market, PerformanceClass, PriceBook, SNAP_TOLERANCE_DAYS};

pub const DEFAULT_K: usize = 10;
/// Length of the indexed price paths.
pub const SERIES_DAYS: i64 = 730;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FirmPrediction {
    pub ticker: String,
    /// Mean of the firm's document probability vectors.
    pub probabilities: [f64; 3],
    pub predicted: PerformanceClass,
    pub n_docs: usize,
}

impl FirmPrediction {
    pub fn p(&self, class: PerformanceClass) -> f64 {
        self.probabilities[class.index()]
    }
}

/// Mean probability vector per ticker; tickers with no predictions are skipped.
pub fn aggregate_firm(by_ticker: &BTreeMap<String, Vec<PredictionRecord>>) -> Vec<FirmPrediction> {
    by_ticker
        .iter()
        .filter(|(_, preds)| !preds.is_empty())
        .map(|(ticker, preds)| {
            let mut sum = [0.0; 3];
            for p in preds {
                for k in 0..3 {
                    sum[k] += p.probabilities[k];
                }
            }
            let probabilities = sum.map(|s| s / preds.len() as f64);
            FirmPrediction {
                ticker: ticker.clone(),
                predicted: argmax(&probabilities),
                probabilities,
                n_docs: preds.len(),
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Group {
    WholeSample,
    Good,
    Average,
    Bad,
    TopK,
    FlopK,
}

impl Group {
    pub const ALL: [Group; 6] = [
        Group::WholeSample,
        Group::Good,
        Group::Average,
        Group::Bad,
        Group::TopK,
        Group::FlopK,
    ];

    pub fn label(self, k: usize) -> String {
        match self {
            Group::WholeSample => "Whole Sample".into(),
            Group::Good => "Good".into(),
            Group::Average => "Average".into(),
            Group::Bad => "Bad".into(),
            Group::TopK => format!("Top-{k}"),
            Group::FlopK => format!("Flop-{k}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupResult {
    pub group: Group,
    pub label: String,
    pub members: Vec<String>,
    /// `None` when the group is empty.
    pub avg_abnormal_return: Option<f64>,
    pub days_used: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesPoint {
    pub date: NaiveDate,
    pub indexed_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub window_start: NaiveDate,
    pub window_end: NaiveDate,
    pub horizon_days: i64,
    pub k: usize,
    pub groups: Vec<GroupResult>,
    /// Predicted firms with no labelable day in the window.
    pub unlabelable: Vec<String>,
    pub series: BTreeMap<String, Vec<SeriesPoint>>,
}

impl SimulationReport {
    pub fn group(&self, g: Group) -> &GroupResult {
        self.groups.iter().find(|r| r.group == g).expect("every group is reported")
    }
}

/// The K tickers with the largest `score`, ties broken by ticker.
pub fn top_k<'a>(firms: &[&'a FirmPrediction], k: usize, score: impl Fn(&FirmPrediction) -> f64) -> Vec<&'a str> {
    let mut ranked: Vec<&FirmPrediction> = firms.to_vec();
    ranked.sort_by(|a, b| score(b).total_cmp(&score(a)).then_with(|| a.ticker.cmp(&b.ticker)));
    ranked.into_iter().take(k).map(|f| f.ticker.as_str()).collect()
}

/// Rolling one-year abnormal returns of each prediction group over
/// `[window_start, window_end]`, plus equal-weighted indexed price paths.
pub fn simulate(
    firms: &[FirmPrediction],
    market: &Market<'_>,
    window_start: NaiveDate,
    window_end: NaiveDate,
    k: usize,
) -> Result<SimulationReport> {
    if k == 0 {
        return Err(Error::Config("simulation k must be at least 1".into()));
    }
    let panel = AbnormalPanel::build(market, window_start, window_end)?;
    if panel.days.is_empty() {
        return Err(Error::Data(format!("no trading day between {window_start} and {window_end}")));
    }
    let column: BTreeMap<&str, usize> = panel.tickers.iter().enumerate().map(|(i, t)| (t.as_str(), i)).collect();
    let labelable = |t: &str| column.get(t).is_some_and(|&c| panel.values.iter().any(|row| row[c].is_some()));

    let (usable, unusable): (Vec<&FirmPrediction>, Vec<&FirmPrediction>) =
        firms.iter().partition(|f| labelable(&f.ticker));

    let members = |g: Group| -> Vec<String> {
        let pick: Vec<&str> = match g {
            Group::WholeSample => usable.iter().map(|f| f.ticker.as_str()).collect(),
            Group::Good => by_class(&usable, PerformanceClass::Over),
            Group::Average => by_class(&usable, PerformanceClass::Average),
            Group::Bad => by_class(&usable, PerformanceClass::Under),
            Group::TopK => top_k(&usable, k, |f| f.p(PerformanceClass::Over)),
            Group::FlopK => top_k(&usable, k, |f| f.p(PerformanceClass::Under)),
        };
        pick.into_iter().map(String::from).collect()
    };

    let mut groups = Vec::new();
    let mut series = BTreeMap::new();
    for g in Group::ALL {
        let m = members(g);
        let set: BTreeSet<String> = m.iter().cloned().collect();
        let (avg, days_used) = if set.is_empty() {
            (None, 0)
        } else {
            let ga = panel.group_average(&set)?;
            (Some(ga.value), ga.days_used)
        };
        series.insert(g.label(k), indexed_path(market.firms, &set, window_start));
        groups.push(GroupResult {
            group: g,
            label: g.label(k),
            members: m,
            avg_abnormal_return: avg,
            days_used,
        });
    }
    Ok(SimulationReport {
        window_start,
        window_end,
        horizon_days: market.horizon_days,
        k,
        groups,
        unlabelable: unusable.iter().map(|f| f.ticker.clone()).collect(),
        series,
    })
}

fn by_class<'a>(firms: &[&'a FirmPrediction], class: PerformanceClass) -> Vec<&'a str> {
    firms
        .iter()
        .filter(|f| f.predicted == class)
        .map(|f| f.ticker.as_str())
        .collect()
}

/// Equal-weighted mean of member price paths, each divided by its price on
/// the first trading day at or after `start`; prices are forward-filled.
fn indexed_path(book: &PriceBook, members: &BTreeSet<String>, start: NaiveDate) -> Vec<SeriesPoint> {
    let end = start + Duration::days(SERIES_DAYS);
    // (series, base price, first indexed day)
    let bases: Vec<(&crate::market::PriceSeries, f64, NaiveDate)> = members
        .iter()
        .filter_map(|t| book.get(t))
        .filter_map(|s| {
            s.snap_forward(start, SNAP_TOLERANCE_DAYS)
                .map(|i| (s, s.points()[i].1, s.points()[i].0))
        })
        .collect();
    if bases.is_empty() {
        return Vec::new();
    }
    let days: BTreeSet<NaiveDate> = bases
        .iter()
        .flat_map(|(s, _, _)| s.points().iter().map(|(d, _)| *d))
        .filter(|d| (start..=end).contains(d))
        .collect();
    days.into_iter()
        .filter_map(|day| {
            let mut sum = 0.0;
            let mut n = 0;
            for (s, base, first) in &bases {
                if day >= *first {
                    if let Some(p) = s.price_on_or_before(day) {
                        sum += p / base;
                        n += 1;
                    }
                }
            }
            (n > 0).then(|| SeriesPoint {
                date: day,
                indexed_value: sum / n as f64,
            })
        })
        .collect()
}

/// CSV `group,avg_abnormal_return`; empty groups get an empty cell.
pub fn write_group_csv<W: Write>(report: &SimulationReport, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let err = |e: csv::Error| Error::Data(format!("simulation csv: {e}"));
    w.write_record(["group", "avg_abnormal_return"]).map_err(err)?;
    for g in &report.groups {
        let v = g.avg_abnormal_return.map_or(String::new(), |v| format!("{v}"));
        w.write_record([g.label.as_str(), v.as_str()]).map_err(err)?;
    }
    w.flush().map_err(|e| Error::Data(e.to_string()))
}

/// CSV `date,group,indexed_value`.
pub fn write_series_csv<W: Write>(report: &SimulationReport, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let err = |e: csv::Error| Error::Data(format!("simulation csv: {e}"));
    w.write_record(["date", "group", "indexed_value"]).map_err(err)?;
    for g in &report.groups {
        for p in &report.series[&g.label] {
            w.write_record([p.date.to_string(), g.label.clone(), format!("{}", p.indexed_value)])
                .map_err(err)?;
        }
    }
    w.flush().map_err(|e| Error::Data(e.to_string()))
}

/// Plain-text summary, one row per group with returns in percent.
pub fn format_table(report: &SimulationReport) -> String {
    let width = report.groups.iter().map(|g| g.label.len()).max().unwrap_or(0).max(12);
    let mut out = String::new();
    let _ = writeln!(out, "{:<width$}  {:>8}  {:>14}", "Group", "Firms", "Avg. abnormal");
    for g in &report.groups {
        let v = g.avg_abnormal_return.map_or("-".to_string(), |v| format!("{:.2}%", 100.0 * v));
        let _ = writeln!(out, "{:<width$}  {:>8}  {:>14}", g.label, g.members.len(), v);
    }
    if !report.unlabelable.is_empty() {
        let _ = writeln!(out, "unlabelable firms excluded: {}", report.unlabelable.len());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::PriceSeries;

    fn d(y: i32, m: u32, day: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(y, m, day).unwrap()
    }

    fn firm(t: &str, p: [f64; 3]) -> FirmPrediction {
        FirmPrediction {
            ticker: t.into(),
            probabilities: p,
            predicted: argmax(&p),
            n_docs: 1,
        }
    }

    #[test]
    fn aggregation_examples() {
        let one: BTreeMap<String, Vec<PredictionRecord>> =
            [("A".to_string(), vec![PredictionRecord::new("a1", [0.2, 0.3, 0.5])])].into();
        assert_eq!(aggregate_firm(&one)[0].probabilities, [0.2, 0.3, 0.5]);

        let two: BTreeMap<String, Vec<PredictionRecord>> = [(
            "B".to_string(),
            vec![
                PredictionRecord::new("b1", [0.8, 0.1, 0.1]),
                PredictionRecord::new("b2", [0.2, 0.5, 0.3]),
            ],
        )]
        .into();
        let f = &aggregate_firm(&two)[0];
        for (a, b) in f.probabilities.iter().zip([0.5, 0.3, 0.2]) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(f.predicted, PerformanceClass::Under);
        assert_eq!(f.n_docs, 2);
    }

    #[test]
    fn top_k_ties_and_size() {
        let a = firm("A", [0.1, 0.1, 0.8]);
        let b = firm("B", [0.1, 0.1, 0.8]);
        let c = firm("C", [0.1, 0.4, 0.5]);
        assert_eq!(top_k(&[&c, &b, &a], 2, |f| f.p(PerformanceClass::Over)), vec!["A", "B"]);
        assert_eq!(top_k(&[&c], 10, |f| f.p(PerformanceClass::Over)), vec!["C"]);
    }

    fn book() -> PriceBook {
        let mut b = PriceBook::new();
        for (i, t) in ["A", "B", "C", "D"].iter().enumerate() {
            let pts: Vec<(NaiveDate, f64)> = (0..800)
                .map(|k| (d(2019, 1, 1) + Duration::days(k), 10.0 * (1.0 + 0.001 * (i as f64 + 1.0)).powi(k as i32)))
                .collect();
            b.insert(t.to_string(), PriceSeries::new(*t, pts).unwrap());
        }
        b
    }

    #[test]
    fn all_good_equals_whole_sample() {
        let book = book();
        let market = Market::equal_weighted(&book, 365);
        let firms: Vec<FirmPrediction> = ["A", "B", "C", "D"].iter().map(|t| firm(t, [0.1, 0.2, 0.7])).collect();
        let r = simulate(&firms, &market, d(2019, 1, 1), d(2019, 1, 31), 10).unwrap();
        assert_eq!(
            r.group(Group::Good).avg_abnormal_return,
            r.group(Group::WholeSample).avg_abnormal_return
        );
        assert_eq!(r.group(Group::Average).avg_abnormal_return, None);
        assert_eq!(r.group(Group::TopK).members.len(), 4);
        let path = &r.series["Whole Sample"];
        assert_eq!(path[0].indexed_value, 1.0);
        assert_eq!(path.last().unwrap().date, d(2020, 12, 31));
    }

    #[test]
    fn unlabelable_firms_are_counted() {
        let book = book();
        let market = Market::equal_weighted(&book, 365);
        let firms = vec![firm("A", [0.1, 0.2, 0.7]), firm("ZZZ", [0.1, 0.2, 0.7])];
        let r = simulate(&firms, &market, d(2019, 1, 1), d(2019, 1, 31), 10).unwrap();
        assert_eq!(r.unlabelable, vec!["ZZZ".to_string()]);
        assert_eq!(r.group(Group::WholeSample).members, vec!["A".to_string()]);
        let mut buf = Vec::new();
        write_group_csv(&r, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("group,avg_abnormal_return\nWhole Sample,"));
        assert!(text.contains("Average,\n"));
        assert!(format_table(&r).contains("Top-10"));
    }
}
