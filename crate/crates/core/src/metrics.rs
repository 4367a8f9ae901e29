//! Per-class AUC, training-set threshold calibration, thresholded accuracy,
//! multi-seed aggregation and per-case attribution reports.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::game::ShapleyState;
use crate::model::{aggregate, predict, stream_outputs, CoalitionMask, EmbeddedCase, ModelParams};
use crate::{Error, Result};

/// Mann-Whitney AUC: the fraction of (positive, negative) pairs ranked
/// correctly, ties counting one half. `None` when only one class is present.
pub fn auc(scores: &[f64], labels: &[bool]) -> Result<Option<f64>> {
    if scores.len() != labels.len() {
        return Err(Error::shape("auc", scores.len(), labels.len()));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Input("AUC scores contain NaN".into()));
    }
    let positives = labels.iter().filter(|&&l| l).count() as u64;
    let negatives = labels.len() as u64 - positives;
    if positives == 0 || negatives == 0 {
        return Ok(None);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    // Twice the U statistic, kept in integers so ties are exact.
    let mut twice_u: u64 = 0;
    let mut negatives_below: u64 = 0;
    let mut start = 0;
    while start < order.len() {
        let score = scores[order[start]];
        let mut end = start;
        let (mut pos_here, mut neg_here) = (0u64, 0u64);
        while end < order.len() && scores[order[end]] == score {
            if labels[order[end]] {
                pos_here += 1;
            } else {
                neg_here += 1;
            }
            end += 1;
        }
        twice_u += pos_here * (2 * negatives_below + neg_here);
        negatives_below += neg_here;
        start = end;
    }
    Ok(Some(twice_u as f64 / (2 * positives * negatives) as f64))
}

/// Thresholds in logit space plus the sorted training scores per class, which
/// anchor the percentile transform.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdVector {
    #[serde(with = "extended_f64::vec")]
    pub thresholds: Vec<f64>,
    pub train_scores: Vec<Vec<f64>>,
}

/// Fits one threshold per class on training predictions only.
///
/// Candidates are the midpoints between consecutive distinct scores; the one
/// maximizing Youden's `J = TPR - FPR` (decision `score > t`) wins, ties going
/// to the smaller threshold. A class with only negatives gets `+inf`, only
/// positives `-inf`. If every score is equal, `t` is that score.
///
/// `scores[j][k]` and `labels[j][k]` are case `j`, class `k`.
pub fn fit_thresholds(scores: &[Vec<f64>], labels: &[Vec<bool>]) -> Result<ThresholdVector> {
    let classes = check_table("fit_thresholds", scores, labels)?;
    if scores.is_empty() {
        return Err(Error::Config("cannot fit thresholds on an empty training set".into()));
    }
    let mut thresholds = Vec::with_capacity(classes);
    let mut train_scores = Vec::with_capacity(classes);
    for k in 0..classes {
        let column: Vec<(f64, bool)> = scores.iter().zip(labels).map(|(s, l)| (s[k], l[k])).collect();
        thresholds.push(youden_threshold(&column));
        let mut sorted: Vec<f64> = column.iter().map(|c| c.0).collect();
        sorted.sort_by(f64::total_cmp);
        train_scores.push(sorted);
    }
    Ok(ThresholdVector {
        thresholds,
        train_scores,
    })
}

fn youden_threshold(column: &[(f64, bool)]) -> f64 {
    let positives = column.iter().filter(|c| c.1).count();
    let negatives = column.len() - positives;
    if positives == 0 {
        return f64::INFINITY;
    }
    if negatives == 0 {
        return f64::NEG_INFINITY;
    }
    let mut sorted = column.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    // Sweep upward: after consuming every score <= s, the cases remaining
    // above the next midpoint are predicted positive.
    let (mut tp, mut fp) = (positives as f64, negatives as f64);
    let mut best: Option<(f64, f64)> = None;
    let mut i = 0;
    while i < sorted.len() {
        let s = sorted[i].0;
        while i < sorted.len() && sorted[i].0 == s {
            if sorted[i].1 {
                tp -= 1.0;
            } else {
                fp -= 1.0;
            }
            i += 1;
        }
        if i == sorted.len() {
            break;
        }
        let t = s + (sorted[i].0 - s) / 2.0;
        let j = tp / positives as f64 - fp / negatives as f64;
        if best.is_none_or(|(bj, _)| j > bj) {
            best = Some((j, t));
        }
    }
    best.map_or(sorted[0].0, |(_, t)| t)
}

fn check_table<T, U>(context: &'static str, scores: &[Vec<T>], labels: &[Vec<U>]) -> Result<usize> {
    if scores.len() != labels.len() {
        return Err(Error::shape(context, scores.len(), labels.len()));
    }
    let classes = scores.first().map_or(0, Vec::len);
    for (s, l) in scores.iter().zip(labels) {
        if s.len() != classes || l.len() != classes {
            return Err(Error::shape(context, classes, format!("{} scores / {} labels", s.len(), l.len())));
        }
    }
    Ok(classes)
}

/// Per-class accuracy `mean_j [ [s_jk > t_k] == y_jk ]` and its macro mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyReport {
    pub per_class: Vec<f64>,
    pub macro_mean: f64,
}

pub fn accuracy(
    scores: &[Vec<f64>],
    labels: &[Vec<bool>],
    thresholds: &ThresholdVector,
) -> Result<AccuracyReport> {
    let classes = check_table("accuracy", scores, labels)?;
    if classes != thresholds.thresholds.len() {
        return Err(Error::shape("accuracy thresholds", classes, thresholds.thresholds.len()));
    }
    if scores.is_empty() {
        return Err(Error::Input("accuracy needs at least one case".into()));
    }
    let per_class: Vec<f64> = (0..classes)
        .map(|k| {
            let t = thresholds.thresholds[k];
            let hits = scores
                .iter()
                .zip(labels)
                .filter(|(s, l)| (s[k] > t) == l[k])
                .count();
            hits as f64 / scores.len() as f64
        })
        .collect();
    let macro_mean = per_class.iter().sum::<f64>() / classes.max(1) as f64;
    Ok(AccuracyReport {
        per_class,
        macro_mean,
    })
}

/// `100 * #{train scores <= score} / #train scores` for class `class`.
pub fn percentile_transform(score: f64, class: usize, thresholds: &ThresholdVector) -> Result<f64> {
    let Some(train) = thresholds.train_scores.get(class) else {
        return Err(Error::Config(format!("no training distribution for class {class}")));
    };
    if train.is_empty() {
        return Err(Error::Config(format!("training distribution for class {class} is empty")));
    }
    let at_or_below = train.partition_point(|&s| s <= score);
    Ok(100.0 * at_or_below as f64 / train.len() as f64)
}

/// Metrics of one trained model on its test split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedMetrics {
    pub seed: u64,
    pub class_names: Vec<String>,
    pub auc: Vec<Option<f64>>,
    pub accuracy: Vec<f64>,
    pub macro_auc: Option<f64>,
    pub macro_accuracy: f64,
}

/// Full-coalition logits for every case.
pub fn predict_all(params: &ModelParams, cases: &[EmbeddedCase]) -> Result<Vec<Vec<f64>>> {
    cases.iter().map(|c| predict(params, c)).collect()
}

fn bool_labels(cases: &[EmbeddedCase]) -> Vec<Vec<bool>> {
    cases
        .iter()
        .map(|c| c.labels.iter().map(|&y| y == 1.0).collect())
        .collect()
}

/// Fits thresholds on `train`, then scores `test`.
pub fn evaluate(
    params: &ModelParams,
    train: &[EmbeddedCase],
    test: &[EmbeddedCase],
    class_names: &[String],
    seed: u64,
) -> Result<(SeedMetrics, ThresholdVector)> {
    let thresholds = fit_thresholds(&predict_all(params, train)?, &bool_labels(train))?;
    let scores = predict_all(params, test)?;
    let labels = bool_labels(test);
    let acc = accuracy(&scores, &labels, &thresholds)?;
    let aucs = (0..params.classes())
        .map(|k| {
            let s: Vec<f64> = scores.iter().map(|r| r[k]).collect();
            let l: Vec<bool> = labels.iter().map(|r| r[k]).collect();
            auc(&s, &l)
        })
        .collect::<Result<Vec<_>>>()?;
    let defined: Vec<f64> = aucs.iter().flatten().copied().collect();
    let macro_auc = (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64);
    Ok((
        SeedMetrics {
            seed,
            class_names: class_names.to_vec(),
            auc: aucs,
            accuracy: acc.per_class,
            macro_auc,
            macro_accuracy: acc.macro_mean,
        },
        thresholds,
    ))
}

/// Mean and population standard deviation across seeds; seeds where the
/// metric is undefined are left out and `flagged` is set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedStat {
    pub mean: Option<f64>,
    pub std: Option<f64>,
    pub count: usize,
    pub flagged: bool,
    pub per_seed: Vec<Option<f64>>,
}

impl SeedStat {
    pub fn from_values(values: Vec<Option<f64>>) -> Self {
        let defined: Vec<f64> = values.iter().flatten().copied().collect();
        let count = defined.len();
        let (mean, std) = if count == 0 {
            (None, None)
        } else {
            let mut mean = defined.iter().sum::<f64>() / count as f64;
            if defined.iter().all(|&v| v == defined[0]) {
                mean = defined[0];
            }
            let var = defined.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / count as f64;
            (Some(mean), Some(libm::sqrt(var)))
        };
        SeedStat {
            mean,
            std,
            count,
            flagged: count < values.len(),
            per_seed: values,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassSummary {
    pub name: String,
    pub auc: SeedStat,
    pub accuracy: SeedStat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsSummary {
    pub seeds: Vec<u64>,
    pub classes: Vec<ClassSummary>,
    pub macro_auc: SeedStat,
    pub macro_accuracy: SeedStat,
}

pub fn multi_seed_aggregate(runs: &[SeedMetrics]) -> Result<MetricsSummary> {
    let Some(first) = runs.first() else {
        return Err(Error::Input("no runs to aggregate".into()));
    };
    for run in runs {
        if run.class_names != first.class_names
            || run.auc.len() != first.class_names.len()
            || run.accuracy.len() != first.class_names.len()
        {
            return Err(Error::Input(format!(
                "seed {} has class set {:?}, expected {:?}",
                run.seed, run.class_names, first.class_names
            )));
        }
    }
    let classes = first
        .class_names
        .iter()
        .enumerate()
        .map(|(k, name)| ClassSummary {
            name: name.clone(),
            auc: SeedStat::from_values(runs.iter().map(|r| r.auc[k]).collect()),
            accuracy: SeedStat::from_values(runs.iter().map(|r| Some(r.accuracy[k])).collect()),
        })
        .collect();
    Ok(MetricsSummary {
        seeds: runs.iter().map(|r| r.seed).collect(),
        classes,
        macro_auc: SeedStat::from_values(runs.iter().map(|r| r.macro_auc).collect()),
        macro_accuracy: SeedStat::from_values(runs.iter().map(|r| Some(r.macro_accuracy)).collect()),
    })
}

/// Explanation of one class decision for one case.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassAttribution {
    pub class_index: usize,
    pub logit: f64,
    pub score_percentile: f64,
    #[serde(with = "extended_f64")]
    pub threshold: f64,
    pub threshold_percentile: f64,
    pub decision: bool,
    /// `W_ik * h_ik` for every agent.
    pub contributions: Vec<f64>,
    /// Contributions divided by their sum; `None` when the sum is zero.
    pub shares: Option<Vec<f64>>,
    /// Column `k` of the smoothed Shapley matrix, if one exists.
    pub phi_ema: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionReport {
    pub case_id: String,
    pub classes: Vec<ClassAttribution>,
}

pub fn attribution_report(
    params: &ModelParams,
    case: &EmbeddedCase,
    thresholds: &ThresholdVector,
    shapley: Option<&ShapleyState>,
) -> Result<AttributionReport> {
    if thresholds.thresholds.len() != params.classes() {
        return Err(Error::shape("attribution thresholds", params.classes(), thresholds.thresholds.len()));
    }
    let streams = stream_outputs(params, case)?;
    let w = params.decision_weights();
    let logits = predict(params, case)?;
    // the full-mask aggregate is sum_i W_ik h_ik; keep it for the share check
    let z = aggregate(&streams.agent_logits, &w, &CoalitionMask::full(params.agents()))?;
    let phi = shapley.and_then(|s| s.ema.as_ref());
    let mut classes = Vec::with_capacity(params.classes());
    for (k, &logit) in logits.iter().enumerate() {
        let contributions: Vec<f64> = (0..params.agents())
            .map(|i| w.get(i, k) * streams.agent_logits.get(i, k))
            .collect();
        let total: f64 = contributions.iter().sum();
        debug_assert!((total - z[k]).abs() <= 1e-9 * (1.0 + total.abs()));
        let shares = (total != 0.0).then(|| contributions.iter().map(|c| c / total).collect());
        let t = thresholds.thresholds[k];
        classes.push(ClassAttribution {
            class_index: k,
            logit,
            score_percentile: percentile_transform(logit, k, thresholds)?,
            threshold: t,
            threshold_percentile: percentile_transform(t, k, thresholds)?,
            decision: logit > t,
            contributions,
            shares,
            phi_ema: phi.map(|p| p.column(k)),
        });
    }
    Ok(AttributionReport {
        case_id: case.id.clone(),
        classes,
    })
}

/// Serializes `f64` as a JSON number when finite and as `"inf"`, `"-inf"` or
/// `"nan"` otherwise, since JSON has no representation for them.
pub mod extended_f64 {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize)]
    #[serde(untagged)]
    enum Repr<'a> {
        Number(f64),
        Text(&'a str),
    }

    pub fn serialize<S: Serializer>(value: &f64, serializer: S) -> Result<S::Ok, S::Error> {
        match *value {
            v if v.is_finite() => Repr::Number(v),
            v if v.is_nan() => Repr::Text("nan"),
            v if v > 0.0 => Repr::Text("inf"),
            _ => Repr::Text("-inf"),
        }
        .serialize(serializer)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(deserializer: D) -> Result<f64, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Owned {
            Number(f64),
            Text(alloc::string::String),
        }
        match Owned::deserialize(deserializer)? {
            Owned::Number(v) => Ok(v),
            Owned::Text(s) => {
                match s.as_str() {
                    "inf" => Ok(f64::INFINITY),
                    "-inf" => Ok(f64::NEG_INFINITY),
                    "nan" => Ok(f64::NAN),
                    other => Err(serde::de::Error::custom(alloc::format!("invalid number {other:?}"))),
                }
            }
        }
    }

    pub mod vec {
        use alloc::vec::Vec;
        use serde::ser::SerializeSeq;
        use serde::{Deserialize, Deserializer, Serializer};

        #[derive(Deserialize)]
        struct Wrapped(#[serde(with = "super")] f64);

        struct Ref<'a>(&'a f64);

        impl serde::Serialize for Ref<'_> {
            fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
                super::serialize(self.0, s)
            }
        }

        pub fn serialize<S: Serializer>(values: &[f64], serializer: S) -> Result<S::Ok, S::Error> {
            let mut seq = serializer.serialize_seq(Some(values.len()))?;
            for v in values {
                seq.serialize_element(&Ref(v))?;
            }
            seq.end()
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(deserializer: D) -> Result<Vec<f64>, D::Error> {
            Ok(Vec::<Wrapped>::deserialize(deserializer)?
                .into_iter()
                .map(|w| w.0)
                .collect())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream_rng, Stream};
    use proptest::prelude::*;
    use rand::Rng;

    fn auc_oracle(scores: &[f64], labels: &[bool]) -> Option<f64> {
        let mut twice = 0u64;
        let (mut p, mut n) = (0u64, 0u64);
        for (i, &li) in labels.iter().enumerate() {
            if li {
                p += 1;
            } else {
                n += 1;
            }
            if !li {
                continue;
            }
            for (j, &lj) in labels.iter().enumerate() {
                if lj {
                    continue;
                }
                if scores[i] > scores[j] {
                    twice += 2;
                } else if scores[i] == scores[j] {
                    twice += 1;
                }
            }
        }
        (p > 0 && n > 0).then(|| twice as f64 / (2 * p * n) as f64)
    }

    #[test]
    fn auc_examples() {
        let l = [true, true, false, false];
        assert_eq!(auc(&[0.9, 0.8, 0.7, 0.1], &l).unwrap(), Some(1.0));
        assert_eq!(auc(&[0.8, 0.3, 0.5, 0.1], &l).unwrap(), Some(0.75));
        assert_eq!(auc(&[0.8, 0.3], &[true, true]).unwrap(), None);
        assert!(auc(&[0.1], &[true, false]).is_err());
        assert_eq!(auc(&[0.5, 0.5], &[true, false]).unwrap(), Some(0.5));
    }

    proptest! {
        #[test]
        fn auc_equals_pairwise_oracle(
            data in proptest::collection::vec((0u8..6, any::<bool>()), 1..80)
        ) {
            let scores: Vec<f64> = data.iter().map(|d| d.0 as f64 / 5.0).collect();
            let labels: Vec<bool> = data.iter().map(|d| d.1).collect();
            prop_assert_eq!(auc(&scores, &labels).unwrap(), auc_oracle(&scores, &labels));
        }
    }

    fn brute_force_threshold(column: &[(f64, bool)]) -> f64 {
        let mut distinct: Vec<f64> = column.iter().map(|c| c.0).collect();
        distinct.sort_by(f64::total_cmp);
        distinct.dedup();
        let p = column.iter().filter(|c| c.1).count() as f64;
        let n = column.len() as f64 - p;
        let mut best = (f64::NEG_INFINITY, 0.0);
        for pair in distinct.windows(2) {
            let t = pair[0] + (pair[1] - pair[0]) / 2.0;
            let tp = column.iter().filter(|c| c.1 && c.0 > t).count() as f64;
            let fp = column.iter().filter(|c| !c.1 && c.0 > t).count() as f64;
            let j = tp / p - fp / n;
            if j > best.0 {
                best = (j, t);
            }
        }
        best.1
    }

    #[test]
    fn threshold_examples() {
        let scores = alloc::vec![alloc::vec![0.1], alloc::vec![0.2], alloc::vec![0.8], alloc::vec![0.9]];
        let labels = alloc::vec![alloc::vec![false], alloc::vec![false], alloc::vec![true], alloc::vec![true]];
        let t = fit_thresholds(&scores, &labels).unwrap();
        assert!((t.thresholds[0] - 0.5).abs() < 1e-15);

        let negatives = alloc::vec![alloc::vec![false]; 4];
        let t = fit_thresholds(&scores, &negatives).unwrap();
        assert_eq!(t.thresholds[0], f64::INFINITY);
        let acc = accuracy(&scores, &negatives, &t).unwrap();
        assert_eq!(acc.macro_mean, 1.0);

        let t = fit_thresholds(&scores, &alloc::vec![alloc::vec![true]; 4]).unwrap();
        assert_eq!(t.thresholds[0], f64::NEG_INFINITY);
        assert!(matches!(fit_thresholds(&[], &[]), Err(Error::Config(_))));
    }

    #[test]
    fn thresholds_match_brute_force_on_interleaved_scores() {
        let mut rng = stream_rng(11, Stream::Synth);
        for _ in 0..200 {
            let n = rng.random_range(2..30);
            let column: Vec<(f64, bool)> = (0..n)
                .map(|_| ((rng.random_range(0..12) as f64) / 4.0, rng.random_bool(0.4)))
                .collect();
            let p = column.iter().filter(|c| c.1).count();
            if p == 0 || p == n {
                continue;
            }
            let scores: Vec<Vec<f64>> = column.iter().map(|c| alloc::vec![c.0]).collect();
            let labels: Vec<Vec<bool>> = column.iter().map(|c| alloc::vec![c.1]).collect();
            let fitted = fit_thresholds(&scores, &labels).unwrap().thresholds[0];
            let distinct = {
                let mut d: Vec<f64> = column.iter().map(|c| c.0).collect();
                d.sort_by(f64::total_cmp);
                d.dedup();
                d.len()
            };
            if distinct > 1 {
                assert_eq!(fitted, brute_force_threshold(&column));
            }
        }
    }

    #[test]
    fn accuracy_examples() {
        let t = ThresholdVector { thresholds: alloc::vec![0.0, 0.0], train_scores: alloc::vec![alloc::vec![0.0]; 2] };
        let scores = alloc::vec![alloc::vec![1.0, 1.0], alloc::vec![-1.0, 1.0]];
        let labels = alloc::vec![alloc::vec![true, true], alloc::vec![false, false]];
        let acc = accuracy(&scores, &labels, &t).unwrap();
        assert_eq!(acc.per_class, alloc::vec![1.0, 0.5]);
        assert_eq!(acc.macro_mean, 0.75);
        assert!(accuracy(&scores, &labels[..1], &t).is_err());
    }

    #[test]
    fn accuracy_matches_literal_formula() {
        let mut rng = stream_rng(12, Stream::Synth);
        let (n, c) = (17, 3);
        let scores: Vec<Vec<f64>> = (0..n).map(|_| (0..c).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
        let labels: Vec<Vec<bool>> = (0..n).map(|_| (0..c).map(|_| rng.random_bool(0.5)).collect()).collect();
        let t = ThresholdVector { thresholds: alloc::vec![-0.3, 0.0, 0.4], train_scores: alloc::vec![alloc::vec![0.0]; 3] };
        let acc = accuracy(&scores, &labels, &t).unwrap();
        for k in 0..c {
            let mut sum = 0.0;
            for j in 0..n {
                let decision = if scores[j][k] > t.thresholds[k] { 1 } else { 0 };
                let truth = if labels[j][k] { 1 } else { 0 };
                sum += if decision == truth { 1.0 } else { 0.0 };
            }
            assert_eq!(acc.per_class[k], sum / n as f64);
        }
    }

    #[test]
    fn percentile_examples() {
        let t = ThresholdVector { thresholds: alloc::vec![0.0], train_scores: alloc::vec![alloc::vec![0.1, 0.2, 0.3, 0.4]] };
        assert_eq!(percentile_transform(0.3, 0, &t).unwrap(), 75.0);
        assert_eq!(percentile_transform(0.0, 0, &t).unwrap(), 0.0);
        assert_eq!(percentile_transform(0.4, 0, &t).unwrap(), 100.0);
        assert_eq!(percentile_transform(f64::INFINITY, 0, &t).unwrap(), 100.0);
        assert!(percentile_transform(0.3, 1, &t).is_err());
        let empty = ThresholdVector { thresholds: alloc::vec![0.0], train_scores: alloc::vec![alloc::vec![]] };
        assert!(matches!(percentile_transform(0.3, 0, &empty), Err(Error::Config(_))));
    }

    proptest! {
        #[test]
        fn percentile_is_monotone(train in proptest::collection::vec(-5.0f64..5.0, 1..40), a in -6.0f64..6.0, b in -6.0f64..6.0) {
            let mut sorted = train.clone();
            sorted.sort_by(f64::total_cmp);
            let t = ThresholdVector { thresholds: alloc::vec![0.0], train_scores: alloc::vec![sorted] };
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let plo = percentile_transform(lo, 0, &t).unwrap();
            let phi = percentile_transform(hi, 0, &t).unwrap();
            prop_assert!(plo <= phi);
            prop_assert!((0.0..=100.0).contains(&plo));
        }
    }

    fn run(seed: u64, auc: Vec<Option<f64>>, acc: Vec<f64>) -> SeedMetrics {
        SeedMetrics {
            seed,
            class_names: (0..auc.len()).map(|k| format!("c{k}")).collect(),
            macro_auc: None,
            macro_accuracy: acc.iter().sum::<f64>() / acc.len() as f64,
            auc,
            accuracy: acc,
        }
    }

    #[test]
    fn aggregate_examples() {
        let same = run(0, alloc::vec![Some(0.8)], alloc::vec![0.9]);
        let s = multi_seed_aggregate(&[same.clone(), same.clone(), same]).unwrap();
        assert_eq!(s.classes[0].auc.std, Some(0.0));

        let runs = [
            run(0, alloc::vec![Some(0.7)], alloc::vec![0.7]),
            run(1, alloc::vec![Some(0.8)], alloc::vec![0.8]),
            run(2, alloc::vec![Some(0.9)], alloc::vec![0.9]),
        ];
        let s = multi_seed_aggregate(&runs).unwrap();
        let stat = &s.classes[0].accuracy;
        assert!((stat.mean.unwrap() - 0.8).abs() < 1e-12);
        assert!((stat.std.unwrap() - libm::sqrt(0.02 / 3.0)).abs() < 1e-12);
        assert!((stat.std.unwrap() - 0.0816).abs() < 1e-4);

        let runs = [
            run(0, alloc::vec![Some(0.7)], alloc::vec![0.7]),
            run(1, alloc::vec![None], alloc::vec![0.8]),
            run(2, alloc::vec![Some(0.9)], alloc::vec![0.9]),
        ];
        let s = multi_seed_aggregate(&runs).unwrap();
        assert_eq!(s.classes[0].auc.count, 2);
        assert!(s.classes[0].auc.flagged);
        assert!((s.classes[0].auc.mean.unwrap() - 0.8).abs() < 1e-12);

        let mismatched = [run(0, alloc::vec![Some(0.7)], alloc::vec![0.7]), run(1, alloc::vec![None, None], alloc::vec![0.8, 0.8])];
        assert!(matches!(multi_seed_aggregate(&mismatched), Err(Error::Input(_))));
    }

    #[test]
    fn threshold_serialization_handles_infinity() {
        let t = ThresholdVector { thresholds: alloc::vec![f64::INFINITY, -1.5, f64::NEG_INFINITY], train_scores: alloc::vec![] };
        let json = serde_json::to_string(&t).unwrap();
        assert!(json.contains("\"inf\"") && json.contains("\"-inf\""));
        let back: ThresholdVector = serde_json::from_str(&json).unwrap();
        assert_eq!(back, t);
    }
}
