//! Temporal train/dev/test partition with a leakage gap.
//!
//! Dev firms are held out entirely: their training-period documents form
//! the dev set, and they contribute to neither train nor test. Years between
//! the train and test ranges are dropped.

use std::collections::BTreeSet;

use chrono::{Datelike, Duration, NaiveDate};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::market::DEFAULT_HORIZON_DAYS;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct YearRange {
    pub from: i32,
    pub to: i32,
}

impl YearRange {
    pub const fn new(from: i32, to: i32) -> Self {
        YearRange { from, to }
    }

    pub fn contains(&self, year: i32) -> bool {
        (self.from..=self.to).contains(&year)
    }

    fn overlaps(&self, other: &YearRange) -> bool {
        self.from <= other.to && other.from <= self.to
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitConfig {
    pub train_years: YearRange,
    pub test_years: YearRange,
    pub dev_firm_fraction: f64,
    pub horizon_days: i64,
    pub seed: u64,
}

impl SplitConfig {
    /// Train 2012-2017, test 2019, 10% dev firms, one-year horizon.
    pub fn paper(seed: u64) -> Self {
        SplitConfig {
            train_years: YearRange::new(2012, 2017),
            test_years: YearRange::new(2019, 2019),
            dev_firm_fraction: 0.10,
            horizon_days: DEFAULT_HORIZON_DAYS,
            seed,
        }
    }

    /// The robustness variant: train 2012-2016, test 2018.
    pub fn robustness(seed: u64) -> Self {
        SplitConfig {
            train_years: YearRange::new(2012, 2016),
            test_years: YearRange::new(2018, 2018),
            ..SplitConfig::paper(seed)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.train_years.from > self.train_years.to || self.test_years.from > self.test_years.to {
            return Err(Error::Config("year ranges must satisfy from <= to".into()));
        }
        if self.train_years.overlaps(&self.test_years) {
            return Err(Error::validation(format!(
                "train years {}-{} overlap test years {}-{}",
                self.train_years.from, self.train_years.to, self.test_years.from, self.test_years.to
            )));
        }
        if !(self.dev_firm_fraction > 0.0 && self.dev_firm_fraction < 1.0) {
            return Err(Error::Config(format!(
                "dev_firm_fraction must lie in (0, 1), got {}",
                self.dev_firm_fraction
            )));
        }
        if self.horizon_days < 1 {
            return Err(Error::Config("horizon_days must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: BTreeSet<String>,
    pub dev: BTreeSet<String>,
    pub test: BTreeSet<String>,
    pub dev_firms: BTreeSet<String>,
    pub seed: u64,
}

impl Split {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("split serializes")
    }
}

/// Number of dev firms: `ceil(fraction * firms)`, tolerant of float noise.
fn dev_firm_count(fraction: f64, firms: usize) -> usize {
    (fraction * firms as f64 - 1e-9).ceil().max(0.0) as usize
}

pub fn make_temporal_split(corpus: &Corpus, config: &SplitConfig) -> Result<Split> {
    config.validate()?;
    let firms: Vec<&str> = corpus.tickers().collect();
    let n_dev = dev_firm_count(config.dev_firm_fraction, firms.len());
    if n_dev == 0 || n_dev >= firms.len() {
        return Err(Error::validation(format!(
            "dev sample of {n_dev} firms leaves no train firms out of {}",
            firms.len()
        )));
    }
    let mut shuffled = firms.clone();
    shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(config.seed));
    let dev_firms: BTreeSet<String> = shuffled[..n_dev].iter().map(|t| t.to_string()).collect();

    let mut split = Split {
        train: BTreeSet::new(),
        dev: BTreeSet::new(),
        test: BTreeSet::new(),
        dev_firms,
        seed: config.seed,
    };
    for doc in corpus.iter() {
        let year = doc.date.year();
        let is_dev = split.dev_firms.contains(&doc.ticker);
        if config.train_years.contains(year) {
            if is_dev {
                split.dev.insert(doc.id.clone());
            } else {
                split.train.insert(doc.id.clone());
            }
        } else if config.test_years.contains(year) && !is_dev {
            split.test.insert(doc.id.clone());
        }
    }
    if split.train.is_empty() {
        return Err(Error::validation("train set is empty"));
    }
    if split.test.is_empty() {
        return Err(Error::validation("test set is empty"));
    }
    Ok(split)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LeakageReport {
    pub passed: bool,
    pub earliest_test: Option<NaiveDate>,
    pub horizon_days: i64,
    /// Train/dev document ids whose label window reaches the test period.
    pub violations: Vec<String>,
}

/// Every train/dev label window must close strictly before the earliest
/// test document.
pub fn validate_no_leakage(split: &Split, corpus: &Corpus, config: &SplitConfig) -> Result<LeakageReport> {
    let date_of = |id: &String| {
        corpus
            .get(id)
            .map(|d| d.date)
            .ok_or_else(|| Error::Usage(format!("split references unknown document {id}")))
    };
    let mut earliest_test = None;
    for id in &split.test {
        let date = date_of(id)?;
        earliest_test = Some(earliest_test.map_or(date, |e: NaiveDate| e.min(date)));
    }
    let mut violations = Vec::new();
    if let Some(first_test) = earliest_test {
        for id in split.train.iter().chain(split.dev.iter()) {
            if date_of(id)? + Duration::days(config.horizon_days) >= first_test {
                violations.push(id.clone());
            }
        }
    }
    Ok(LeakageReport {
        passed: violations.is_empty(),
        earliest_test,
        horizon_days: config.horizon_days,
        violations,
    })
}
