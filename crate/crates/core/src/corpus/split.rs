use rand::seq::SliceRandom;

use super::LabeledCorpus;
use crate::seed;
use crate::{Error, Result};

/// Train/validation/test proportions as integer parts of a common whole, so
/// the fractions always sum to exactly one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct SplitSpec {
    pub train: u32,
    pub val: u32,
    pub test: u32,
    pub seed: u64,
    pub stratified: bool,
}

impl SplitSpec {
    pub fn new(train: u32, val: u32, test: u32, seed: u64) -> Result<Self> {
        let spec = Self {
            train,
            val,
            test,
            seed,
            stratified: true,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// 90% / 5% / 5%, stratified.
    pub fn standard(seed: u64) -> Self {
        Self {
            train: 90,
            val: 5,
            test: 5,
            seed,
            stratified: true,
        }
    }

    pub fn unstratified(mut self) -> Self {
        self.stratified = false;
        self
    }

    /// Converts decimal fractions (e.g. `0.9, 0.05, 0.05`) to parts per million.
    pub fn from_fractions(train: f64, val: f64, test: f64, seed: u64) -> Result<Self> {
        let to_ppm = |f: f64| -> Result<u32> {
            if !(f > 0.0 && f < 1.0) {
                return Err(Error::Config(format!("split fraction {f} must be in (0, 1)")));
            }
            Ok((f * 1e6).round() as u32)
        };
        let (a, b, c) = (to_ppm(train)?, to_ppm(val)?, to_ppm(test)?);
        if a + b + c != 1_000_000 {
            return Err(Error::Config(format!(
                "split fractions {train} + {val} + {test} do not sum to 1"
            )));
        }
        Self::new(a, b, c, seed)
    }

    pub fn validate(&self) -> Result<()> {
        if self.train == 0 || self.val == 0 || self.test == 0 {
            return Err(Error::Config(format!(
                "split parts must be positive, got {}/{}/{}",
                self.train, self.val, self.test
            )));
        }
        Ok(())
    }

    fn total(&self) -> u64 {
        u64::from(self.train) + u64::from(self.val) + u64::from(self.test)
    }

    /// Rounded (half up) share of `n` for `part`.
    fn share(&self, n: usize, part: u32) -> usize {
        let total = self.total();
        ((n as u64 * u64::from(part) * 2 + total) / (2 * total)) as usize
    }

    /// (train, val, test) sizes for a group of `n` rows.
    fn sizes(&self, n: usize, at_least_one: bool) -> (usize, usize, usize) {
        let mut val = self.share(n, self.val);
        let mut test = self.share(n, self.test);
        if at_least_one {
            val = val.max(1);
            test = test.max(1);
        }
        // Keep at least one training row when rounding overshoots.
        while n > 0 && val + test >= n {
            if val >= test {
                val -= 1;
            } else {
                test -= 1;
            }
        }
        (n - val - test, val, test)
    }
}

/// Row indices of each partition, ascending.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// Assigns every row to exactly one partition.
///
/// Stratified splits shuffle each class separately (classes in ascending label
/// order, one RNG stream) and give every class at least one validation and one
/// test row.
pub fn split_indices(corpus: &LabeledCorpus, spec: &SplitSpec) -> Result<SplitIndices> {
    spec.validate()?;
    if corpus.is_empty() {
        return Err(Error::Config("cannot split an empty corpus".into()));
    }
    let mut rng = seed::rng(seed::derive(spec.seed, seed::ns::SPLIT));
    let mut out = SplitIndices::default();

    let groups: Vec<Vec<usize>> = if spec.stratified {
        let mut groups = vec![Vec::new(); corpus.num_classes() + 1];
        for (i, t) in corpus.tweets().iter().enumerate() {
            groups[t.class_label as usize].push(i);
        }
        let too_small: Vec<String> = groups
            .iter()
            .enumerate()
            .filter(|(_, g)| !g.is_empty() && g.len() < 3)
            .map(|(c, g)| format!("{} ({} member(s))", corpus.class_names()[c], g.len()))
            .collect();
        if !too_small.is_empty() {
            return Err(Error::data(
                "stratified split",
                format!(
                    "every class needs at least 3 members; too small: {}",
                    too_small.join(", ")
                ),
            ));
        }
        groups
    } else {
        vec![(0..corpus.len()).collect()]
    };

    for mut group in groups.into_iter().filter(|g| !g.is_empty()) {
        group.shuffle(&mut rng);
        let (_, val, test) = spec.sizes(group.len(), spec.stratified);
        out.val.extend_from_slice(&group[..val]);
        out.test.extend_from_slice(&group[val..val + test]);
        out.train.extend_from_slice(&group[val + test..]);
    }
    out.train.sort_unstable();
    out.val.sort_unstable();
    out.test.sort_unstable();
    Ok(out)
}

/// Splits a corpus into (train, validation, test).
pub fn split(
    corpus: &LabeledCorpus,
    spec: &SplitSpec,
) -> Result<(LabeledCorpus, LabeledCorpus, LabeledCorpus)> {
    let idx = split_indices(corpus, spec)?;
    Ok((
        corpus.select(&idx.train),
        corpus.select(&idx.val),
        corpus.select(&idx.test),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{ClassTable, Tweet};
    use proptest::prelude::*;

    fn corpus_with_counts(counts: &[usize]) -> LabeledCorpus {
        let mut tweets = Vec::new();
        for (label, &n) in counts.iter().enumerate() {
            for j in 0..n {
                tweets.push(Tweet {
                    id: format!("{label}-{j}"),
                    text: format!("tweet {j}"),
                    class_label: label as u32,
                    source_tag: String::new(),
                });
            }
        }
        let names = ClassTable::numbered(counts.len() - 1, "T").class_names();
        LabeledCorpus::new(tweets, names).unwrap()
    }

    #[test]
    fn twenty_rows_half_quarter_quarter() {
        let c = corpus_with_counts(&[0, 20]);
        let spec = SplitSpec::new(50, 25, 25, 11).unwrap();
        let a = split_indices(&c, &spec).unwrap();
        assert_eq!((a.train.len(), a.val.len(), a.test.len()), (10, 5, 5));
        let b = split_indices(&c, &spec).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn small_class_is_rejected_when_stratified() {
        let c = corpus_with_counts(&[10, 2]);
        let err = split_indices(&c, &SplitSpec::standard(1)).unwrap_err();
        assert!(err.to_string().contains("event_01 (2 member(s))"), "{err}");
        assert!(split_indices(&c, &SplitSpec::standard(1).unstratified()).is_ok());
    }

    #[test]
    fn rare_classes_reach_every_partition() {
        let c = corpus_with_counts(&[500, 21, 3]);
        let s = split_indices(&c, &SplitSpec::standard(3)).unwrap();
        for part in [&s.train, &s.val, &s.test] {
            for label in 0..3u32 {
                assert!(part.iter().any(|&i| c.tweets()[i].class_label == label));
            }
        }
    }

    #[test]
    fn rejects_bad_fractions() {
        assert!(SplitSpec::from_fractions(0.9, 0.05, 0.05, 0).is_ok());
        assert!(SplitSpec::from_fractions(0.9, 0.1, 0.05, 0).is_err());
        assert!(SplitSpec::from_fractions(1.0, 0.0, 0.0, 0).is_err());
        assert!(SplitSpec::new(0, 5, 5, 0).is_err());
    }

    #[test]
    fn different_seeds_give_different_membership() {
        let c = corpus_with_counts(&[200, 200]);
        let a = split_indices(&c, &SplitSpec::standard(1)).unwrap();
        let b = split_indices(&c, &SplitSpec::standard(2)).unwrap();
        assert_ne!(a.test, b.test);
    }

    proptest! {
        #[test]
        fn partition_laws(
            counts in proptest::collection::vec(5usize..60, 2..6),
            seed in any::<u64>(),
            stratified in any::<bool>(),
        ) {
            let c = corpus_with_counts(&counts);
            let mut spec = SplitSpec::new(80, 10, 10, seed).unwrap();
            spec.stratified = stratified;
            let s = split_indices(&c, &spec).unwrap();
            let mut all: Vec<usize> = s.train.iter().chain(&s.val).chain(&s.test).copied().collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..c.len()).collect::<Vec<_>>());

            let check = |n: usize, got: (usize, usize, usize)| -> bool {
                let exp = (n as f64 * 0.8, n as f64 * 0.1, n as f64 * 0.1);
                (got.0 as f64 - exp.0).abs() <= 1.0 + 1e-9
                    && (got.1 as f64 - exp.1).abs() <= 1.0
                    && (got.2 as f64 - exp.2).abs() <= 1.0
            };
            if stratified {
                for (label, &n) in counts.iter().enumerate() {
                    let count = |v: &Vec<usize>| v.iter().filter(|&&i| c.tweets()[i].class_label as usize == label).count();
                    prop_assert!(check(n, (count(&s.train), count(&s.val), count(&s.test))));
                }
            } else {
                prop_assert!(check(c.len(), (s.train.len(), s.val.len(), s.test.len())));
            }
            prop_assert_eq!(split_indices(&c, &spec).unwrap(), s);
        }
    }
}
