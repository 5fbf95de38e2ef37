use std::collections::BTreeSet;
use std::path::Path;

use chrono::{Duration, NaiveDate};
use proptest::prelude::*;

use medrun::baselines::{argmax, train_boosted, train_logistic, BoostedParams, LogisticParams};
use medrun::corpus::{
    read_documents, select_top_covered, split_report_paragraphs, Corpus, Document, DocumentFormat, LoadOptions,
    SourceKind,
};
use medrun::encoder::{attention, normalize_rows, tensor::Mat};
use medrun::features::{self, Vocabulary};
use medrun::fixture::separable;
use medrun::market::{assign_label, fit_tertiles, forward_return, Market, PriceBook, PriceSeries};
use medrun::simulation::{top_k, FirmPrediction};
use medrun::splits::{make_temporal_split, validate_no_leakage, SplitConfig};
use medrun::PerformanceClass;

fn config() -> ProptestConfig {
    ProptestConfig {
        cases: 48,
        ..ProptestConfig::default()
    }
}

fn day(offset: i64) -> NaiveDate {
    NaiveDate::from_ymd_opt(2012, 1, 1).unwrap() + Duration::days(offset)
}

prop_compose! {
    fn document()(
        t in 0..6u8,
        offset in 0..(8 * 365i64),
        s in 0..3usize,
        title in "[A-Za-z ]{0,12}",
        text in "[a-z]{1,8}( [a-z,\"']{1,8}){0,12}",
    ) -> Document {
        let ticker = format!("T{}", (b'A' + t) as char);
        let date = day(offset);
        Document {
            id: Document::derive_id(&ticker, date, &text),
            ticker,
            date,
            source: SourceKind::ALL[s],
            title,
            text,
        }
    }
}

fn corpus(max: usize) -> impl Strategy<Value = Corpus> {
    prop::collection::vec(document(), 1..max).prop_map(|docs| Corpus::new(docs).unwrap())
}

fn reversed(c: &Corpus) -> Corpus {
    Corpus::new(c.documents().iter().rev().cloned().collect()).unwrap()
}

/// Trading-day series with `n` points starting at `start`, one to three days apart.
fn series_strategy(n: usize) -> impl Strategy<Value = Vec<(i64, f64)>> {
    prop::collection::vec((1..4i64, 1.0..200.0f64), n).prop_map(|steps| {
        let mut at = 0;
        steps
            .into_iter()
            .map(|(gap, p)| {
                at += gap;
                (at, p)
            })
            .collect()
    })
}

fn to_series(ticker: &str, pts: &[(i64, f64)]) -> PriceSeries {
    PriceSeries::new(ticker, pts.iter().map(|&(o, p)| (day(o), p)).collect()).unwrap()
}

proptest! {
    #![proptest_config(config())]

    // ---- corpus

    #[test]
    fn corpus_csv_roundtrip(c in corpus(30)) {
        let mut buf = Vec::new();
        c.write_csv(&mut buf).unwrap();
        let back = read_documents(&buf[..], DocumentFormat::Csv, Path::new("mem.csv"), LoadOptions::default()).unwrap();
        prop_assert_eq!(back.documents(), c.documents());
    }

    #[test]
    fn top_covered_is_idempotent_and_order_free(c in corpus(60), n in 1..5usize, min in 0..6usize) {
        let n = n.min(c.tickers().count());
        let sel = select_top_covered(&c, n, min).unwrap();
        let again = select_top_covered(&c.retain_tickers(&sel.tickers), n, min).unwrap();
        prop_assert_eq!(&again.tickers, &sel.tickers);
        prop_assert_eq!(select_top_covered(&reversed(&c), n, min).unwrap(), sel);
    }

    #[test]
    fn report_paragraphs_are_substrings(
        parts in prop::collection::vec(("[a-zA-Z .,]{0,60}", "\n{1,3}|\n \n|\r\n\r\n"), 0..8),
        min in 0..40usize,
    ) {
        let text: String = parts.iter().map(|(p, sep)| format!("{p}{sep}")).collect();
        for p in split_report_paragraphs(&text, min) {
            prop_assert!(text.contains(&p));
            prop_assert!(p.chars().count() >= min && !p.is_empty());
            prop_assert!(!p.contains("\n\n"));
        }
    }

    // ---- market

    #[test]
    fn scaling_prices_keeps_labels(pts in series_strategy(400), c in 0.01..100.0f64, anchors in prop::collection::vec(0..150i64, 3..30)) {
        let s = to_series("AAA", &pts);
        let scaled = s.scaled(c);
        let horizon = 200;
        let a: Vec<f64> = anchors.iter().filter_map(|&o| forward_return(&s, day(o), horizon)).collect();
        let b: Vec<f64> = anchors.iter().filter_map(|&o| forward_return(&scaled, day(o), horizon)).collect();
        prop_assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() <= 1e-12 * (1.0 + x.abs()));
        }
        if a.len() >= 3 {
            let (ba, bb) = (fit_tertiles(&a, "a").unwrap(), fit_tertiles(&b, "b").unwrap());
            // labels compare on each side's own breakpoints
            let la: Vec<_> = a.iter().map(|r| assign_label(*r, &ba)).collect();
            let lb: Vec<_> = b.iter().map(|r| assign_label(*r, &bb)).collect();
            prop_assert_eq!(la, lb);
        }
    }

    #[test]
    fn forward_return_ignores_interior_prices(pts in series_strategy(300), anchor in 0..100i64, noise in prop::collection::vec(0.5..2.0f64, 300)) {
        let s = to_series("AAA", &pts);
        let horizon = 150;
        let (Some(i), Some(j)) = (s.snap_forward(day(anchor), 7), s.snap_forward(day(anchor + horizon), 7)) else {
            return Ok(());
        };
        let perturbed: Vec<(i64, f64)> = pts
            .iter()
            .enumerate()
            .map(|(k, &(o, p))| if k > i && k < j { (o, p * noise[k]) } else { (o, p) })
            .collect();
        let other = to_series("AAA", &perturbed);
        prop_assert_eq!(forward_return(&s, day(anchor), horizon), forward_return(&other, day(anchor), horizon));
    }

    #[test]
    fn distinct_populations_split_evenly(values in prop::collection::btree_set(-1_000_000i64..1_000_000, 3..500)) {
        let v: Vec<f64> = values.iter().map(|&x| x as f64 / 1000.0).collect();
        let bp = fit_tertiles(&v, "p").unwrap();
        let mut counts = [0usize; 3];
        for r in &v {
            counts[assign_label(*r, &bp).index()] += 1;
        }
        prop_assert!(counts.iter().max().unwrap() - counts.iter().min().unwrap() <= 1);
    }

    #[test]
    fn equal_weighted_abnormal_returns_average_zero(
        firms in prop::collection::vec(prop::collection::vec(0.5..2.0f64, 60), 2..8),
        anchor in 0..20i64,
    ) {
        // daily series on a shared calendar, so every firm is defined at the anchor
        let mut book = PriceBook::new();
        for (f, rel) in firms.iter().enumerate() {
            let mut p = 10.0;
            let pts = rel.iter().enumerate().map(|(k, r)| { p *= r; (day(k as i64), p) }).collect();
            let t = format!("F{f}");
            book.insert(t.clone(), PriceSeries::new(t, pts).unwrap());
        }
        let market = Market::equal_weighted(&book, 30);
        let sum: f64 = book.keys().map(|t| market.abnormal_return(t, day(anchor)).unwrap().abnormal).sum();
        prop_assert!((sum / book.len() as f64).abs() <= 1e-12);
    }

    // ---- splits

    #[test]
    fn splits_are_reproducible_and_leak_free(c in corpus(120), seed in any::<u64>()) {
        let cfg = SplitConfig::paper(seed);
        let a = make_temporal_split(&c, &cfg);
        prop_assume!(a.is_ok());
        let a = a.unwrap();
        let b = make_temporal_split(&reversed(&c), &cfg).unwrap();
        prop_assert_eq!(a.to_json(), b.to_json());
        for id in a.train.iter().chain(&a.dev).chain(&a.test) {
            let y = chrono::Datelike::year(&c.get(id).unwrap().date);
            prop_assert!(cfg.train_years.contains(y) || cfg.test_years.contains(y), "gap-year document {id}");
        }
        prop_assert!(validate_no_leakage(&a, &c, &cfg).unwrap().passed);
    }

    // ---- features

    #[test]
    fn tfidf_is_unit_norm_bag_of_words_and_order_free(
        docs in prop::collection::vec(prop::collection::vec("[a-e]{1,2}", 0..15), 1..25),
        shuffle_seed in any::<u64>(),
    ) {
        let model = features::fit(&docs, 50, 1).unwrap();
        let mut rev = docs.clone();
        rev.reverse();
        prop_assert_eq!(features::fit(&rev, 50, 1).unwrap().to_json(), model.to_json());
        for d in &docs {
            let v = model.transform(d);
            if !v.entries.is_empty() {
                prop_assert!((v.norm() - 1.0).abs() <= 1e-9);
            }
            let mut perm = d.clone();
            let mut s = shuffle_seed;
            for i in (1..perm.len()).rev() {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                perm.swap(i, (s >> 33) as usize % (i + 1));
            }
            prop_assert_eq!(model.transform(&perm), v);
        }
    }

    // ---- encoder layers

    #[test]
    fn layer_norm_standardizes_rows(rows in 1..6usize, cols in 2..12usize, data in prop::collection::vec(-50.0..50.0f64, 72)) {
        let x = Mat::from_vec(rows, cols, data[..rows * cols].to_vec());
        let n = normalize_rows(&x);
        for r in 0..rows {
            let row = n.xhat.row(r);
            // near-constant rows are dominated by the epsilon
            let distinct = x.row(r).iter().any(|v| (v - x.row(r)[0]).abs() > 1e-3);
            let mean = row.iter().sum::<f64>() / cols as f64;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / cols as f64;
            prop_assert!(mean.abs() <= 1e-6);
            if distinct {
                prop_assert!((var - 1.0).abs() <= 1e-4, "variance {var}");
            }
        }
    }

    #[test]
    fn attention_rows_are_distributions(n in 1..10usize, d in 1..5usize, real in 1..10usize, data in prop::collection::vec(-6.0..6.0f64, 150)) {
        let real = real.min(n);
        let m = |o: usize| Mat::from_vec(n, d, data[o..o + n * d].to_vec());
        let mask: Vec<u8> = (0..n).map(|i| u8::from(i < real)).collect();
        let a = attention(&m(0), &m(50), &m(100), &mask).unwrap();
        for r in 0..n {
            let row = a.weights.row(r);
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
            prop_assert!(row[real..].iter().all(|w| w.abs() < 1e-12));
        }
    }

    // ---- simulation

    #[test]
    fn top_k_ignores_monotone_rescoring(probs in prop::collection::vec((0.01..1.0f64, 0.01..1.0f64, 0.01..1.0f64), 1..20), k in 1..8usize) {
        let firms: Vec<FirmPrediction> = probs
            .iter()
            .enumerate()
            .map(|(i, &(a, b, c))| {
                let s = a + b + c;
                let p = [a / s, b / s, c / s];
                FirmPrediction { ticker: format!("F{i:02}"), probabilities: p, predicted: argmax(&p), n_docs: 1 }
            })
            .collect();
        let refs: Vec<&FirmPrediction> = firms.iter().collect();
        let base = top_k(&refs, k, |f| f.p(PerformanceClass::Over));
        let warped = top_k(&refs, k, |f| (3.0 * f.p(PerformanceClass::Over)).exp() - 7.0);
        prop_assert_eq!(base, warped);
    }
}

// ---- baselines (slower, fewer cases)

proptest! {
    #![proptest_config(ProptestConfig { cases: 8, ..ProptestConfig::default() })]

    #[test]
    fn trainers_are_deterministic(seed in any::<u64>()) {
        let data = separable(12);
        let lp = LogisticParams { seed, epochs: 5, batch_size: 7, ..LogisticParams::default() };
        prop_assert_eq!(train_logistic(&data, &lp).unwrap().to_json(), train_logistic(&data, &lp).unwrap().to_json());
        let vocab = Vocabulary::new((0..4).map(|i| format!("f{i}")).collect(), vec![1; 4]).unwrap();
        let bp = BoostedParams { seed, rounds: 5, ..BoostedParams::default() };
        let a = train_boosted(&data, &vocab, &bp).unwrap();
        prop_assert_eq!(a.to_json(), train_boosted(&data, &vocab, &bp).unwrap().to_json());
        for (x, _) in &data {
            let s = a.scores(x).unwrap();
            let warped = s.map(|v| v.powi(3) + 2.0 * v);
            prop_assert_eq!(argmax(&s), argmax(&warped));
            prop_assert_eq!(argmax(&s), argmax(&s.map(f64::exp)));
        }
    }
}

#[test]
fn full_batch_logistic_loss_is_non_increasing() {
    let data = separable(10);
    let losses: Vec<f64> = (0..=30)
        .map(|epochs| {
            let p = LogisticParams {
                learning_rate: 0.01,
                epochs,
                batch_size: data.len(),
                ..LogisticParams::default()
            };
            train_logistic(&data, &p).unwrap().objective(&data, p.l2)
        })
        .collect();
    assert!(losses.windows(2).all(|w| w[1] <= w[0]), "{losses:?}");
}

#[test]
fn stronger_l2_never_grows_the_weights() {
    let data = separable(10);
    let norms: Vec<f64> = [0.0, 0.1, 1.0]
        .iter()
        .map(|&l2| {
            let p = LogisticParams {
                learning_rate: 0.1,
                epochs: 300,
                l2,
                batch_size: data.len(),
                ..LogisticParams::default()
            };
            train_logistic(&data, &p).unwrap().weight_norm()
        })
        .collect();
    assert!(norms[0] >= norms[1] && norms[1] >= norms[2], "{norms:?}");
}

#[test]
fn shifting_abnormal_returns_shifts_group_values() {
    let mut book = PriceBook::new();
    for f in 0..6 {
        let mut p = 20.0 + f as f64;
        let pts = (0..500)
            .map(|k| {
                p *= 1.0 + 0.01 * (((k * (f + 3)) % 7) as f64 - 3.0) / 3.0;
                (day(k), p)
            })
            .collect();
        let t = format!("F{f}");
        book.insert(t.clone(), PriceSeries::new(t, pts).unwrap());
    }
    let market = Market::equal_weighted(&book, 365);
    let panel = medrun::market::AbnormalPanel::build(&market, day(10), day(60)).unwrap();
    let members: BTreeSet<String> = ["F1", "F3", "F4"].iter().map(|s| s.to_string()).collect();
    for c in [-0.5, -1e-3, 0.0, 0.25, 3.0] {
        let base = panel.group_average(&members).unwrap();
        let moved = panel.shifted(c).group_average(&members).unwrap();
        assert!((moved.value - (base.value + c)).abs() <= 1e-12, "shift {c}");
        assert_eq!(moved.days_used, base.days_used);
    }
}
