//! Cases, datasets, stratified splitting and the planted synthetic generator.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::model::EmbeddedCase;
use crate::rng::{stream_rng, Stream};
use crate::{Error, Result};

/// Separator placed between partition texts when a case has no explicit
/// global payload.
pub const GLOBAL_SEPARATOR: &str = "\n\n";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Payload {
    Text(String),
    Vector(Vec<f64>),
}

impl Payload {
    pub fn as_text(&self) -> Option<&str> {
        match self {
            Payload::Text(t) => Some(t),
            Payload::Vector(_) => None,
        }
    }

    pub fn as_vector(&self) -> Option<&[f64]> {
        match self {
            Payload::Vector(v) => Some(v),
            Payload::Text(_) => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PayloadMode {
    Text,
    Vector { dim: usize },
}

impl PayloadMode {
    fn of(payload: &Payload) -> Self {
        match payload {
            Payload::Text(_) => PayloadMode::Text,
            Payload::Vector(v) => PayloadMode::Vector { dim: v.len() },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Case {
    pub id: String,
    pub partitions: Vec<Payload>,
    pub global: Option<Payload>,
    pub labels: Vec<u8>,
}

/// The global payload used when a case has none: partition texts joined by
/// [`GLOBAL_SEPARATOR`], or the mean of partition vectors.
pub fn default_global(partitions: &[Payload]) -> Result<Payload> {
    match partitions.first() {
        None => Err(Error::Input("cannot derive a global payload from zero partitions".into())),
        Some(Payload::Text(_)) => {
            let texts = partitions
                .iter()
                .map(|p| p.as_text().ok_or_else(|| Error::Input("mixed text and vector partitions".into())))
                .collect::<Result<Vec<_>>>()?;
            Ok(Payload::Text(texts.join(GLOBAL_SEPARATOR)))
        }
        Some(Payload::Vector(first)) => {
            let mut mean = alloc::vec![0.0; first.len()];
            for p in partitions {
                let v = p
                    .as_vector()
                    .ok_or_else(|| Error::Input("mixed text and vector partitions".into()))?;
                if v.len() != mean.len() {
                    return Err(Error::shape("partition vector", mean.len(), v.len()));
                }
                for (m, x) in mean.iter_mut().zip(v) {
                    *m += x;
                }
            }
            let n = partitions.len() as f64;
            mean.iter_mut().for_each(|m| *m /= n);
            Ok(Payload::Vector(mean))
        }
    }
}

/// Expected partition and class counts. The payload mode is fixed by the
/// first case checked.
#[derive(Debug, Clone, PartialEq)]
pub struct Schema {
    pub agents: usize,
    pub classes: usize,
    pub mode: Option<PayloadMode>,
}

impl Schema {
    pub fn new(agents: usize, classes: usize) -> Self {
        Schema {
            agents,
            classes,
            mode: None,
        }
    }

    /// Validates one case and pins the payload mode if not yet known.
    pub fn check(&mut self, case: &Case) -> Result<()> {
        if case.partitions.len() != self.agents {
            return Err(Error::Input(format!(
                "case {:?} has {} partitions, expected {}",
                case.id,
                case.partitions.len(),
                self.agents
            )));
        }
        if case.labels.len() != self.classes {
            return Err(Error::Input(format!(
                "case {:?} has {} labels, expected {}",
                case.id,
                case.labels.len(),
                self.classes
            )));
        }
        if let Some(bad) = case.labels.iter().find(|&&y| y > 1) {
            return Err(Error::Input(format!("case {:?} has label {bad}, expected 0 or 1", case.id)));
        }
        for payload in case.partitions.iter().chain(&case.global) {
            let mode = PayloadMode::of(payload);
            if let Payload::Vector(v) = payload {
                if v.iter().any(|x| !x.is_finite()) {
                    return Err(Error::Input(format!("case {:?} has a non-finite vector entry", case.id)));
                }
            }
            match self.mode {
                None => self.mode = Some(mode),
                Some(expected) if expected != mode => {
                    return Err(Error::Input(format!(
                        "case {:?} mixes payload modes: {} where {} was expected",
                        case.id,
                        describe(mode),
                        describe(expected)
                    )));
                }
                Some(_) => {}
            }
        }
        Ok(())
    }
}

fn describe(mode: PayloadMode) -> String {
    match mode {
        PayloadMode::Text => "text".to_string(),
        PayloadMode::Vector { dim } => format!("vector of dimension {dim}"),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub partition_names: Vec<String>,
    pub class_names: Vec<String>,
    pub cases: Vec<Case>,
}

impl Dataset {
    pub fn new(partition_names: Vec<String>, class_names: Vec<String>, cases: Vec<Case>) -> Result<Self> {
        let ds = Dataset {
            partition_names,
            class_names,
            cases,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<PayloadMode> {
        if self.cases.is_empty() {
            return Err(Error::Input("dataset has no cases".into()));
        }
        if self.class_names.is_empty() {
            return Err(Error::Input("dataset has no classes".into()));
        }
        let mut schema = Schema::new(self.agents(), self.classes());
        let mut ids = BTreeSet::new();
        for case in &self.cases {
            schema.check(case)?;
            if !ids.insert(case.id.as_str()) {
                return Err(Error::Input(format!("duplicate case id {:?}", case.id)));
            }
        }
        Ok(schema.mode.expect("nonempty dataset pins a mode"))
    }

    pub fn agents(&self) -> usize {
        self.partition_names.len()
    }

    pub fn classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn mode(&self) -> Option<PayloadMode> {
        let case = self.cases.first()?;
        case.partitions.iter().chain(&case.global).next().map(PayloadMode::of)
    }

    /// Copies the named cases, in the order given.
    pub fn select(&self, ids: &[String]) -> Result<Dataset> {
        let cases = ids
            .iter()
            .map(|id| {
                self.cases
                    .iter()
                    .find(|c| &c.id == id)
                    .cloned()
                    .ok_or_else(|| Error::Input(format!("unknown case id {id:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Dataset::new(self.partition_names.clone(), self.class_names.clone(), cases)
    }

    /// Vector-mode cases in model form; a missing global payload becomes the
    /// partition mean.
    pub fn embedded_cases(&self) -> Result<Vec<EmbeddedCase>> {
        self.cases
            .iter()
            .map(|case| {
                let partitions = case
                    .partitions
                    .iter()
                    .map(|p| {
                        p.as_vector()
                            .map(<[f64]>::to_vec)
                            .ok_or_else(|| Error::Usage("text payloads must be embedded first".into()))
                    })
                    .collect::<Result<Vec<_>>>()?;
                let global = match &case.global {
                    Some(g) => g.clone(),
                    None => default_global(&case.partitions)?,
                };
                let global = global
                    .as_vector()
                    .ok_or_else(|| Error::Usage("text payloads must be embedded first".into()))?
                    .to_vec();
                Ok(EmbeddedCase {
                    id: case.id.clone(),
                    partitions,
                    global,
                    labels: case.labels.iter().map(|&y| f64::from(y)).collect(),
                })
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub seed: u64,
}

/// Case ids on each side of a split.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub seed: u64,
    pub train_ids: Vec<String>,
    pub test_ids: Vec<String>,
}

/// Train-side size for `n` cases.
pub fn train_size(n: usize, train_fraction: f64) -> Result<usize> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::Config(format!("train_fraction {train_fraction} is outside (0, 1)")));
    }
    let size = libm::round(train_fraction * n as f64) as usize;
    if size == 0 || size >= n {
        return Err(Error::Config(format!(
            "train_fraction {train_fraction} on {n} cases leaves one side empty"
        )));
    }
    Ok(size)
}

/// Greedy multi-label stratification.
///
/// Cases are shuffled under the seed, then stably ordered by the dataset
/// frequency of their rarest positive label (cases with no positive label go
/// last). Each case goes to the side that minimizes
/// `sum_k |train_pos_k / n_train - test_pos_k / n_test|` measured against the
/// target side sizes. Ties go to the side with more relative room left, then
/// to train. Returns case indices for each side, each in dataset order.
pub fn stratified_split_indices(dataset: &Dataset, spec: SplitSpec) -> Result<(Vec<usize>, Vec<usize>)> {
    let n = dataset.cases.len();
    if n == 0 {
        return Err(Error::Input("cannot split an empty dataset".into()));
    }
    let n_train = train_size(n, spec.train_fraction)?;
    let n_test = n - n_train;
    let classes = dataset.classes();
    let labels: Vec<&[u8]> = dataset.cases.iter().map(|c| c.labels.as_slice()).collect();
    split_labels(&labels, classes, n_train, n_test, spec.seed)
}

fn split_labels(
    labels: &[&[u8]],
    classes: usize,
    n_train: usize,
    n_test: usize,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    let mut frequency = alloc::vec![0usize; classes];
    for row in labels {
        for (k, &y) in row.iter().enumerate() {
            frequency[k] += usize::from(y);
        }
    }
    let rarest = |j: usize| {
        labels[j]
            .iter()
            .enumerate()
            .filter(|(_, &y)| y == 1)
            .map(|(k, _)| frequency[k])
            .min()
            .unwrap_or(usize::MAX)
    };

    let mut order: Vec<usize> = (0..labels.len()).collect();
    order.shuffle(&mut stream_rng(seed, Stream::Split));
    order.sort_by_key(|&j| rarest(j));

    let mut train_pos = alloc::vec![0usize; classes];
    let mut test_pos = alloc::vec![0usize; classes];
    let (mut train, mut test) = (Vec::with_capacity(n_train), Vec::with_capacity(n_test));
    let gap = |tp: &[usize], sp: &[usize]| -> f64 {
        tp.iter()
            .zip(sp)
            .map(|(&a, &b)| libm::fabs(a as f64 / n_train as f64 - b as f64 / n_test as f64))
            .sum()
    };

    for j in order {
        let to_train = if train.len() == n_train {
            false
        } else if test.len() == n_test {
            true
        } else {
            let row = labels[j];
            let with = |counts: &[usize]| -> Vec<usize> {
                counts.iter().zip(row).map(|(&c, &y)| c + usize::from(y)).collect()
            };
            let cost_train = gap(&with(&train_pos), &test_pos);
            let cost_test = gap(&train_pos, &with(&test_pos));
            if cost_train != cost_test {
                cost_train < cost_test
            } else {
                let room_train = (n_train - train.len()) as f64 / n_train as f64;
                let room_test = (n_test - test.len()) as f64 / n_test as f64;
                room_train >= room_test
            }
        };
        let (side, counts) = if to_train {
            (&mut train, &mut train_pos)
        } else {
            (&mut test, &mut test_pos)
        };
        side.push(j);
        for (c, &y) in counts.iter_mut().zip(labels[j]) {
            *c += usize::from(y);
        }
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

/// Splits into train and test datasets plus the id manifest.
pub fn stratified_split(dataset: &Dataset, spec: SplitSpec) -> Result<(Dataset, Dataset, SplitManifest)> {
    dataset.validate()?;
    let (train_idx, test_idx) = stratified_split_indices(dataset, spec)?;
    let pick = |idx: &[usize]| Dataset {
        partition_names: dataset.partition_names.clone(),
        class_names: dataset.class_names.clone(),
        cases: idx.iter().map(|&j| dataset.cases[j].clone()).collect(),
    };
    let (train, test) = (pick(&train_idx), pick(&test_idx));
    let manifest = SplitManifest {
        seed: spec.seed,
        train_ids: train.cases.iter().map(|c| c.id.clone()).collect(),
        test_ids: test.cases.iter().map(|c| c.id.clone()).collect(),
    };
    Ok((train, test, manifest))
}

/// Planted informativeness: `informative[k]` lists `(agent, alpha)` pairs for
/// class `k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InformativeMap {
    pub informative: Vec<Vec<(usize, f64)>>,
}

impl InformativeMap {
    /// The agent with the largest planted strength for `class`; the lowest
    /// index wins ties.
    pub fn planted_agent(&self, class: usize) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for &(i, alpha) in self.informative.get(class)? {
            if best.is_none_or(|(_, a)| alpha > a) {
                best = Some((i, alpha));
            }
        }
        best.map(|b| b.0)
    }

    pub fn alpha(&self, agent: usize, class: usize) -> f64 {
        self.informative
            .get(class)
            .map_or(0.0, |row| row.iter().filter(|e| e.0 == agent).map(|e| e.1).sum())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub n_cases: usize,
    pub agents: usize,
    pub classes: usize,
    pub dim: usize,
    pub informative: InformativeMap,
    pub noise_std: f64,
    pub seed: u64,
}

impl SynthSpec {
    /// One informative agent per class: class `k` is carried by agent
    /// `k mod agents` with strength `alpha`.
    pub fn one_per_class(
        n_cases: usize,
        agents: usize,
        classes: usize,
        dim: usize,
        alpha: f64,
        noise_std: f64,
        seed: u64,
    ) -> Self {
        let informative = (0..classes)
            .map(|k| alloc::vec![(k % agents.max(1), alpha)])
            .collect();
        SynthSpec {
            n_cases,
            agents,
            classes,
            dim,
            informative: InformativeMap { informative },
            noise_std,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_cases == 0 || self.agents == 0 || self.classes == 0 {
            return Err(Error::Config("synthetic data needs at least one case, agent and class".into()));
        }
        if self.dim < self.classes {
            return Err(Error::Config(format!(
                "dimension {} is smaller than class count {}; orthonormal class directions need D >= C",
                self.dim, self.classes
            )));
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return Err(Error::Config(format!("noise_std {} must be finite and >= 0", self.noise_std)));
        }
        if self.informative.informative.len() != self.classes {
            return Err(Error::Config(format!(
                "informative map covers {} classes, expected {}",
                self.informative.informative.len(),
                self.classes
            )));
        }
        for (k, row) in self.informative.informative.iter().enumerate() {
            if row.is_empty() {
                return Err(Error::Config(format!("class {k} has no informative agent")));
            }
            for &(i, alpha) in row {
                if i >= self.agents {
                    return Err(Error::Config(format!("class {k} names agent {i} of {}", self.agents)));
                }
                if !(alpha >= 0.0 && alpha.is_finite()) {
                    return Err(Error::Config(format!("class {k} agent {i} strength {alpha} is invalid")));
                }
            }
        }
        Ok(())
    }
}

/// Generates a vector-mode dataset. Class direction `u_k` is the standard
/// basis vector `e_k`, so coordinate `k` of agent `i` is
/// `alpha_ik * (2 y_k - 1)` plus noise.
pub fn synth_generate(spec: &SynthSpec) -> Result<(Dataset, InformativeMap)> {
    spec.validate()?;
    let mut rng = stream_rng(spec.seed, Stream::Synth);
    let noise = Normal::new(0.0, spec.noise_std).map_err(|e| Error::Config(format!("noise: {e}")))?;
    let width = digits(spec.n_cases);
    let mut cases = Vec::with_capacity(spec.n_cases);
    for j in 0..spec.n_cases {
        let labels: Vec<u8> = (0..spec.classes).map(|_| u8::from(rng.random_bool(0.5))).collect();
        let mut partitions = Vec::with_capacity(spec.agents);
        for i in 0..spec.agents {
            let mut v: Vec<f64> = (0..spec.dim).map(|_| noise.sample(&mut rng)).collect();
            for (k, &y) in labels.iter().enumerate() {
                let alpha = spec.informative.alpha(i, k);
                if alpha != 0.0 {
                    let signal = alpha * (2.0 * f64::from(y) - 1.0);
                    v[k] = if spec.noise_std == 0.0 { signal } else { signal + v[k] };
                }
            }
            partitions.push(Payload::Vector(v));
        }
        let global = default_global(&partitions)?;
        cases.push(Case {
            id: format!("case-{j:0width$}"),
            partitions,
            global: Some(global),
            labels,
        });
    }
    let dataset = Dataset::new(
        (0..spec.agents).map(|i| format!("agent_{i}")).collect(),
        (0..spec.classes).map(|k| format!("class_{k}")).collect(),
        cases,
    )?;
    Ok((dataset, spec.informative.clone()))
}

fn digits(n: usize) -> usize {
    let mut d = 1;
    let mut x = n.saturating_sub(1);
    while x >= 10 {
        x /= 10;
        d += 1;
    }
    d
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn text_case(id: &str, n: usize, labels: Vec<u8>) -> Case {
        Case {
            id: id.into(),
            partitions: (0..n).map(|i| Payload::Text(format!("p{i}"))).collect(),
            global: None,
            labels,
        }
    }

    fn labelled(rows: &[Vec<u8>]) -> Dataset {
        let cases = rows
            .iter()
            .enumerate()
            .map(|(j, y)| text_case(&format!("c{j}"), 1, y.clone()))
            .collect();
        Dataset::new(vec!["a".into()], (0..rows[0].len()).map(|k| format!("k{k}")).collect(), cases).unwrap()
    }

    #[test]
    fn schema_rejects_bad_cases() {
        let mut s = Schema::new(5, 2);
        let err = s.check(&text_case("x", 4, vec![0, 1])).unwrap_err();
        assert!(err.to_string().contains("expected 5"), "{err}");
        assert!(Schema::new(1, 3).check(&text_case("x", 1, vec![0, 1])).is_err());
        assert!(Schema::new(1, 1).check(&text_case("x", 1, vec![2])).is_err());

        let mut s = Schema::new(2, 1);
        let mixed = Case {
            id: "m".into(),
            partitions: vec![Payload::Text("a".into()), Payload::Vector(vec![1.0])],
            global: None,
            labels: vec![1],
        };
        assert!(s.check(&mixed).is_err());
    }

    #[test]
    fn vector_dimensions_must_agree() {
        let mut s = Schema::new(1, 1);
        let case = |d: usize| Case { id: "v".into(), partitions: vec![Payload::Vector(vec![0.0; d])], global: None, labels: vec![0] };
        s.check(&case(3)).unwrap();
        assert!(s.check(&case(4)).is_err());
    }

    #[test]
    fn default_global_joins_texts_in_order() {
        let parts = vec![Payload::Text("p1".into()), Payload::Text("p2".into()), Payload::Text("p3".into())];
        assert_eq!(default_global(&parts).unwrap(), Payload::Text("p1\n\np2\n\np3".into()));
        let vecs = vec![Payload::Vector(vec![1.0, 2.0]), Payload::Vector(vec![3.0, 6.0])];
        assert_eq!(default_global(&vecs).unwrap(), Payload::Vector(vec![2.0, 4.0]));
    }

    #[test]
    fn split_sizes_follow_fraction() {
        let ds = labelled(&vec![vec![1]; 4]);
        let (train, test, _) = stratified_split(&ds, SplitSpec { train_fraction: 0.75, seed: 0 }).unwrap();
        assert_eq!((train.cases.len(), test.cases.len()), (3, 1));
        assert!(matches!(
            stratified_split(&ds, SplitSpec { train_fraction: 0.1, seed: 0 }),
            Err(Error::Config(_))
        ));
        assert!(stratified_split(&ds, SplitSpec { train_fraction: 1.0, seed: 0 }).is_err());
    }

    #[test]
    fn balanced_positives_split_evenly() {
        let rows: Vec<Vec<u8>> = (0..8).map(|j| vec![u8::from(j % 2 == 0)]).collect();
        let ds = labelled(&rows);
        for seed in 0..20 {
            let (train, test, _) = stratified_split(&ds, SplitSpec { train_fraction: 0.5, seed }).unwrap();
            let pos = |d: &Dataset| d.cases.iter().filter(|c| c.labels[0] == 1).count();
            assert_eq!((pos(&train), pos(&test)), (2, 2));
        }
    }

    #[test]
    fn split_is_deterministic_and_partitions() {
        let rows: Vec<Vec<u8>> = (0..23).map(|j| vec![u8::from(j % 3 == 0), u8::from(j % 5 == 1)]).collect();
        let ds = labelled(&rows);
        let spec = SplitSpec { train_fraction: 0.75, seed: 9 };
        let (_, _, a) = stratified_split(&ds, spec).unwrap();
        let (_, _, b) = stratified_split(&ds, spec).unwrap();
        assert_eq!(a, b);
        let mut all: Vec<String> = a.train_ids.iter().chain(&a.test_ids).cloned().collect();
        all.sort();
        let mut expected: Vec<String> = ds.cases.iter().map(|c| c.id.clone()).collect();
        expected.sort();
        assert_eq!(all, expected);
        assert_eq!(a.train_ids.len(), 17);
    }

    #[test]
    fn single_label_split_is_optimal_against_exhaustive_search() {
        // For one class the greedy rule should reach the smallest gap of any
        // split with the same side sizes.
        for n in 2..=12usize {
            for positives in 0..=n {
                let rows: Vec<Vec<u8>> = (0..n).map(|j| vec![u8::from(j < positives)]).collect();
                let ds = labelled(&rows);
                for frac in [0.5, 0.75, 0.8] {
                    let Ok(n_train) = train_size(n, frac) else { continue };
                    let n_test = n - n_train;
                    let (train, test) = stratified_split_indices(&ds, SplitSpec { train_fraction: frac, seed: 3 }).unwrap();
                    let rate = |idx: &[usize], size: usize| idx.iter().filter(|&&j| j < positives).count() as f64 / size as f64;
                    let got = (rate(&train, n_train) - rate(&test, n_test)).abs();
                    let mut best = f64::INFINITY;
                    for mask in 0u32..(1 << n) {
                        if mask.count_ones() as usize != n_train {
                            continue;
                        }
                        let tp = (0..n).filter(|&j| mask >> j & 1 == 1 && j < positives).count();
                        let gap = (tp as f64 / n_train as f64 - (positives - tp) as f64 / n_test as f64).abs();
                        best = best.min(gap);
                    }
                    assert!(got <= best + 1e-12, "n={n} pos={positives} frac={frac}: {got} > {best}");
                }
            }
        }
    }

    #[test]
    fn synth_noiseless_projection_is_exact() {
        let spec = SynthSpec::one_per_class(30, 3, 4, 6, 2.0, 0.0, 5);
        let (ds, map) = synth_generate(&spec).unwrap();
        for case in &ds.cases {
            for (i, p) in case.partitions.iter().enumerate() {
                let v = p.as_vector().unwrap();
                for k in 0..4 {
                    let mut u = vec![0.0; 6];
                    u[k] = 1.0;
                    let dot: f64 = v.iter().zip(&u).map(|(a, b)| a * b).sum();
                    let expected = map.alpha(i, k) * (2.0 * f64::from(case.labels[k]) - 1.0);
                    assert_eq!(dot, expected);
                }
            }
        }
    }

    #[test]
    fn synth_rejects_small_dimension_and_is_seeded() {
        let spec = SynthSpec::one_per_class(5, 2, 4, 3, 1.0, 0.1, 0);
        assert!(matches!(synth_generate(&spec), Err(Error::Config(_))));
        let spec = SynthSpec::one_per_class(5, 2, 2, 3, 1.0, 0.1, 0);
        assert_eq!(synth_generate(&spec).unwrap(), synth_generate(&spec).unwrap());
        let other = SynthSpec { seed: 1, ..spec.clone() };
        assert_ne!(synth_generate(&spec).unwrap().0, synth_generate(&other).unwrap().0);
    }

    #[test]
    fn synth_global_is_partition_mean() {
        let spec = SynthSpec::one_per_class(4, 3, 2, 2, 1.0, 0.3, 2);
        let (ds, _) = synth_generate(&spec).unwrap();
        let embedded = ds.embedded_cases().unwrap();
        for c in &embedded {
            for d in 0..2 {
                let mean = c.partitions.iter().map(|p| p[d]).sum::<f64>() / 3.0;
                assert!((c.global[d] - mean).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn synth_spec_validation() {
        let mut spec = SynthSpec::one_per_class(4, 3, 2, 2, 1.0, 0.3, 2);
        spec.informative.informative[1].clear();
        assert!(spec.validate().is_err());
        let mut spec = SynthSpec::one_per_class(4, 3, 2, 2, 1.0, 0.3, 2);
        spec.informative.informative[0][0].1 = f64::NAN;
        assert!(spec.validate().is_err());
        assert_eq!(SynthSpec::one_per_class(4, 3, 5, 5, 1.0, 0.3, 2).informative.planted_agent(4), Some(1));
    }

    #[test]
    fn text_dataset_cannot_be_embedded_directly() {
        let ds = labelled(&[vec![1], vec![0]]);
        assert!(matches!(ds.embedded_cases(), Err(Error::Usage(_))));
        assert_eq!(ds.mode(), Some(PayloadMode::Text));
    }
}
