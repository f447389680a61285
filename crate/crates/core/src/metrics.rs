//! Confusion counts, accuracy and macro-averaged F1.
//!
//! Counts are one-vs-rest per class. Precision or recall with a zero
//! denominator is undefined; such a class gets F1 = 0 and is listed in
//! [`MetricsReport::zero_division_classes`].

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassCounts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub per_class: Vec<ClassCounts>,
    pub n: u64,
}

impl ConfusionCounts {
    pub fn num_classes(&self) -> usize {
        self.per_class.len()
    }

    /// Number of exactly correct predictions.
    pub fn correct(&self) -> u64 {
        self.per_class.iter().map(|c| c.tp).sum()
    }
}

/// Tallies one-vs-rest counts for `C` classes.
pub fn confusion(predictions: &[usize], truth: &[usize], num_classes: usize) -> Result<ConfusionCounts> {
    if predictions.len() != truth.len() {
        return Err(Error::Shape(format!(
            "{} predictions vs {} truth labels",
            predictions.len(),
            truth.len()
        )));
    }
    let mut matrix = vec![0u64; num_classes * num_classes];
    for (i, (&p, &t)) in predictions.iter().zip(truth).enumerate() {
        if p >= num_classes || t >= num_classes {
            return Err(Error::data(
                format!("sample {i}"),
                format!("label pair ({p}, {t}) out of range for {num_classes} classes"),
            ));
        }
        matrix[t * num_classes + p] += 1;
    }
    let n = predictions.len() as u64;
    let per_class = (0..num_classes)
        .map(|c| {
            let tp = matrix[c * num_classes + c];
            let row: u64 = (0..num_classes).map(|p| matrix[c * num_classes + p]).sum();
            let col: u64 = (0..num_classes).map(|t| matrix[t * num_classes + c]).sum();
            let fp = col - tp;
            let fn_ = row - tp;
            ClassCounts {
                tp,
                fp,
                fn_,
                tn: n - tp - fp - fn_,
            }
        })
        .collect();
    Ok(ConfusionCounts { per_class, n })
}

/// Fraction of exactly correct predictions; `None` when there are no samples.
pub fn accuracy(counts: &ConfusionCounts) -> Option<f64> {
    if counts.n == 0 {
        None
    } else {
        Some(counts.correct() as f64 / counts.n as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassScores {
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: f64,
}

/// Precision, recall and F1 of one class.
pub fn class_scores(c: &ClassCounts) -> ClassScores {
    let ratio = |num: u64, den: u64| (den > 0).then(|| num as f64 / den as f64);
    let precision = ratio(c.tp, c.tp + c.fp);
    let recall = ratio(c.tp, c.tp + c.fn_);
    let f1 = match (precision, recall) {
        (Some(p), Some(r)) if p + r > 0.0 => 2.0 * r * p / (r + p),
        _ => 0.0,
    };
    ClassScores {
        precision,
        recall,
        f1,
    }
}

/// Unweighted mean of per-class F1 over all classes.
pub fn macro_f1(counts: &ConfusionCounts) -> f64 {
    macro_f1_over(counts, true)
}

/// Macro-F1, optionally leaving class 0 out of the mean.
pub fn macro_f1_over(counts: &ConfusionCounts, include_class0: bool) -> f64 {
    let skip = usize::from(!include_class0);
    let scores: Vec<f64> = counts.per_class[skip..]
        .iter()
        .map(|c| class_scores(c).f1)
        .collect();
    if scores.is_empty() {
        return 0.0;
    }
    scores.iter().sum::<f64>() / scores.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub num_classes: usize,
    pub n: u64,
    pub include_class0: bool,
    pub accuracy: Option<f64>,
    pub macro_f1: f64,
    pub per_class: Vec<ClassScores>,
    pub counts: ConfusionCounts,
    pub zero_division_classes: Vec<usize>,
}

const REPORT_HEADER: &str = "# metrics report v1";
const JSON_MARKER: &str = "--- json";

impl MetricsReport {
    pub fn from_counts(counts: ConfusionCounts, include_class0: bool) -> Self {
        let per_class: Vec<ClassScores> = counts.per_class.iter().map(class_scores).collect();
        let zero_division_classes = per_class
            .iter()
            .enumerate()
            .filter(|(_, s)| s.precision.is_none() || s.recall.is_none())
            .map(|(c, _)| c)
            .collect();
        Self {
            num_classes: counts.num_classes(),
            n: counts.n,
            include_class0,
            accuracy: accuracy(&counts),
            macro_f1: macro_f1_over(&counts, include_class0),
            per_class,
            counts,
            zero_division_classes,
        }
    }

    pub fn evaluate(predictions: &[usize], truth: &[usize], num_classes: usize) -> Result<Self> {
        Ok(Self::from_counts(confusion(predictions, truth, num_classes)?, true))
    }

    /// Line-oriented `key = value` form with a stable field order. With
    /// `with_json`, a machine-readable block follows a `--- json` line.
    pub fn to_text(&self, with_json: bool) -> String {
        let opt = |v: Option<f64>| v.map_or_else(|| "none".to_string(), |x| x.to_string());
        let mut s = String::new();
        let _ = writeln!(s, "{REPORT_HEADER}");
        let _ = writeln!(s, "classes = {}", self.num_classes);
        let _ = writeln!(s, "n = {}", self.n);
        let _ = writeln!(s, "macro_includes_class0 = {}", self.include_class0);
        let _ = writeln!(s, "accuracy = {}", opt(self.accuracy));
        let _ = writeln!(s, "macro_f1 = {}", self.macro_f1);
        let zd: Vec<String> = self.zero_division_classes.iter().map(|c| c.to_string()).collect();
        let _ = writeln!(s, "zero_division_classes = {}", zd.join(","));
        for (c, (k, sc)) in self.counts.per_class.iter().zip(&self.per_class).enumerate() {
            let _ = writeln!(
                s,
                "class.{c} = tp:{} fp:{} fn:{} tn:{} precision:{} recall:{} f1:{}",
                k.tp,
                k.fp,
                k.fn_,
                k.tn,
                opt(sc.precision),
                opt(sc.recall),
                sc.f1
            );
        }
        if with_json {
            let _ = writeln!(s, "{JSON_MARKER}");
            let _ = writeln!(s, "{}", serde_json::to_string(self).expect("report serializes"));
        }
        s
    }

    /// Parses the key-value form produced by [`MetricsReport::to_text`].
    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |m: String| Error::data("metrics report", m);
        let mut lines = text.lines();
        if lines.next().map(str::trim) != Some(REPORT_HEADER) {
            return Err(bad("missing report header".into()));
        }
        let parse_opt = |v: &str| -> Result<Option<f64>> {
            if v == "none" {
                Ok(None)
            } else {
                v.parse::<f64>().map(Some).map_err(|_| bad(format!("bad number '{v}'")))
            }
        };
        let mut kv: Vec<(String, String)> = Vec::new();
        for line in lines {
            if line.trim() == JSON_MARKER {
                break;
            }
            if let Some((k, v)) = line.split_once(" = ") {
                kv.push((k.trim().to_string(), v.trim().to_string()));
            }
        }
        let get = |key: &str| -> Result<&str> {
            kv.iter()
                .find(|(k, _)| k == key)
                .map(|(_, v)| v.as_str())
                .ok_or_else(|| bad(format!("missing field '{key}'")))
        };
        let int = |key: &str| -> Result<u64> {
            get(key)?.parse::<u64>().map_err(|_| bad(format!("bad integer for '{key}'")))
        };
        let num_classes = int("classes")? as usize;
        let n = int("n")?;
        let include_class0 = get("macro_includes_class0")? == "true";
        let accuracy = parse_opt(get("accuracy")?)?;
        let macro_f1 = parse_opt(get("macro_f1")?)?.ok_or_else(|| bad("macro_f1 is none".into()))?;
        let zd = get("zero_division_classes")?;
        let zero_division_classes = if zd.is_empty() {
            Vec::new()
        } else {
            zd.split(',')
                .map(|c| c.parse::<usize>().map_err(|_| bad(format!("bad class '{c}'"))))
                .collect::<Result<_>>()?
        };
        let mut per_class_counts = Vec::with_capacity(num_classes);
        let mut per_class = Vec::with_capacity(num_classes);
        for c in 0..num_classes {
            let line = get(&format!("class.{c}"))?;
            let mut fields = std::collections::HashMap::new();
            for part in line.split_whitespace() {
                let (k, v) = part.split_once(':').ok_or_else(|| bad(format!("bad field '{part}'")))?;
                fields.insert(k, v);
            }
            let f = |k: &str| fields.get(k).copied().ok_or_else(|| bad(format!("class.{c} lacks '{k}'")));
            let u = |k: &str| -> Result<u64> { f(k)?.parse().map_err(|_| bad(format!("class.{c} bad '{k}'"))) };
            per_class_counts.push(ClassCounts {
                tp: u("tp")?,
                fp: u("fp")?,
                fn_: u("fn")?,
                tn: u("tn")?,
            });
            per_class.push(ClassScores {
                precision: parse_opt(f("precision")?)?,
                recall: parse_opt(f("recall")?)?,
                f1: parse_opt(f("f1")?)?.ok_or_else(|| bad(format!("class.{c} f1 is none")))?,
            });
        }
        Ok(Self {
            num_classes,
            n,
            include_class0,
            accuracy,
            macro_f1,
            per_class,
            counts: ConfusionCounts {
                per_class: per_class_counts,
                n,
            },
            zero_division_classes,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn perfect_predictions() {
        let truth = vec![0, 1, 2, 2, 1, 0, 0, 1, 2, 2];
        let c = confusion(&truth, &truth, 3).unwrap();
        assert!(c.per_class.iter().all(|k| k.fp == 0 && k.fn_ == 0));
        assert_eq!(c.correct(), 10);
        assert_eq!(accuracy(&c), Some(1.0));
        assert_eq!(macro_f1(&c), 1.0);
    }

    #[test]
    fn binary_hand_enumeration() {
        let c = confusion(&[1, 1, 0, 0, 1, 0], &[1, 0, 0, 0, 1, 1], 2).unwrap();
        assert_eq!(c.per_class[1], ClassCounts { tp: 2, fp: 1, fn_: 1, tn: 2 });
        assert_eq!(c.per_class[0], ClassCounts { tp: 2, fp: 1, fn_: 1, tn: 2 });
        let f1 = macro_f1(&c);
        assert!((f1 - 2.0 / 3.0).abs() < 1e-15);
        for k in &c.per_class {
            assert!((class_scores(k).f1 - 2.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn accuracy_by_substitution() {
        // TP=3, TN=2, FP=1, FN=0 for the positive class.
        let c = confusion(&[1, 1, 1, 0, 0, 1], &[1, 1, 1, 0, 0, 0], 2).unwrap();
        assert_eq!(c.per_class[1], ClassCounts { tp: 3, fp: 1, fn_: 0, tn: 2 });
        assert_eq!(accuracy(&c), Some(5.0 / 6.0));
    }

    #[test]
    fn empty_input_has_no_accuracy() {
        let c = confusion(&[], &[], 3).unwrap();
        assert_eq!(c.n, 0);
        assert_eq!(accuracy(&c), None);
        assert_eq!(macro_f1(&c), 0.0);
        let r = MetricsReport::from_counts(c, true);
        assert_eq!(r.zero_division_classes, vec![0, 1, 2]);
    }

    #[test]
    fn absent_class_drags_macro_mean() {
        // class 2 never predicted, never true
        let c = confusion(&[0, 1, 0, 1], &[0, 1, 0, 1], 3).unwrap();
        assert_eq!(class_scores(&c.per_class[2]).f1, 0.0);
        assert!((macro_f1(&c) - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(macro_f1_over(&c, false), 0.5);
    }

    #[test]
    fn errors_on_bad_input() {
        assert!(confusion(&[0, 1], &[0], 2).is_err());
        assert!(confusion(&[0, 2], &[0, 1], 2).is_err());
    }

    #[test]
    fn report_text_round_trip() {
        let r = MetricsReport::evaluate(&[0, 1, 2, 2, 0, 1, 1], &[0, 1, 1, 2, 2, 1, 0], 4).unwrap();
        for json in [false, true] {
            let back = MetricsReport::from_text(&r.to_text(json)).unwrap();
            assert_eq!(back, r);
        }
        let text = r.to_text(true);
        let json = text.split(JSON_MARKER).nth(1).unwrap();
        let from_json: MetricsReport = serde_json::from_str(json.trim()).unwrap();
        assert_eq!(from_json, r);
    }

    proptest! {
        #[test]
        fn count_invariants_and_relabeling(
            pairs in proptest::collection::vec((0usize..5, 0usize..5), 0..80),
            shift in 0usize..5,
        ) {
            let (p, t): (Vec<usize>, Vec<usize>) = pairs.iter().copied().unzip();
            let c = confusion(&p, &t, 5).unwrap();
            for k in &c.per_class {
                prop_assert_eq!(k.tp + k.fp + k.fn_ + k.tn, c.n);
            }
            let exact = p.iter().zip(&t).filter(|(a, b)| a == b).count() as u64;
            prop_assert_eq!(c.correct(), exact);
            let r = MetricsReport::from_counts(c.clone(), true);
            prop_assert!(r.macro_f1 >= 0.0 && r.macro_f1 <= 1.0);
            if let Some(a) = r.accuracy { prop_assert!((0.0..=1.0).contains(&a)); }

            let relabel = |v: &[usize]| v.iter().map(|x| (x + shift) % 5).collect::<Vec<_>>();
            let c2 = confusion(&relabel(&p), &relabel(&t), 5).unwrap();
            prop_assert!((macro_f1(&c2) - macro_f1(&c)).abs() < 1e-12);
        }
    }
}
