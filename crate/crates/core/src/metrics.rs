//! Accuracy and support-weighted F1.

use crate::error::{Error, Result};

fn check_lengths(y_true: &[usize], y_pred: &[usize]) -> Result<()> {
    if y_true.len() != y_pred.len() {
        return Err(Error::invalid(format!(
            "label vectors differ in length: {} vs {}",
            y_true.len(),
            y_pred.len()
        )));
    }
    if y_true.is_empty() {
        return Err(Error::EmptyDataset("no labels to score".into()));
    }
    Ok(())
}

pub fn accuracy(y_true: &[usize], y_pred: &[usize]) -> Result<f64> {
    check_lengths(y_true, y_pred)?;
    let correct = y_true.iter().zip(y_pred).filter(|(a, b)| a == b).count();
    Ok(correct as f64 / y_true.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassStats {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub weighted_f1: f64,
    /// Indexed by class id, covering every id seen in either vector.
    pub per_class: Vec<ClassStats>,
}

impl MetricsReport {
    /// Zero denominators give zero precision, recall or F1.
    pub fn compute(y_true: &[usize], y_pred: &[usize]) -> Result<Self> {
        check_lengths(y_true, y_pred)?;
        let k = y_true.iter().chain(y_pred).max().map_or(0, |m| m + 1);
        let mut tp = vec![0usize; k];
        let mut predicted = vec![0usize; k];
        let mut support = vec![0usize; k];
        for (&t, &p) in y_true.iter().zip(y_pred) {
            support[t] += 1;
            predicted[p] += 1;
            if t == p {
                tp[t] += 1;
            }
        }
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let n = y_true.len() as f64;
        let mut weighted_f1 = 0.0;
        let per_class = (0..k)
            .map(|c| {
                let precision = ratio(tp[c], predicted[c]);
                let recall = ratio(tp[c], support[c]);
                let f1 = if precision + recall == 0.0 {
                    0.0
                } else {
                    2.0 * precision * recall / (precision + recall)
                };
                weighted_f1 += support[c] as f64 / n * f1;
                ClassStats {
                    precision,
                    recall,
                    f1,
                    support: support[c],
                }
            })
            .collect();
        Ok(MetricsReport {
            accuracy: accuracy(y_true, y_pred)?,
            weighted_f1,
            per_class,
        })
    }
}

pub fn weighted_f1(y_true: &[usize], y_pred: &[usize]) -> Result<f64> {
    Ok(MetricsReport::compute(y_true, y_pred)?.weighted_f1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn four_sample_example() {
        let t = [0, 0, 1, 1];
        let p = [0, 1, 1, 1];
        assert_eq!(accuracy(&t, &p).unwrap(), 0.75);
        let r = MetricsReport::compute(&t, &p).unwrap();
        assert!((r.per_class[0].f1 - 2.0 / 3.0).abs() < 1e-12);
        assert!((r.per_class[1].f1 - 0.8).abs() < 1e-12);
        assert!((r.weighted_f1 - 11.0 / 15.0).abs() < 1e-12);
    }

    #[test]
    fn trivial_cases() {
        assert_eq!(accuracy(&[1, 2, 3], &[1, 2, 3]).unwrap(), 1.0);
        assert_eq!(weighted_f1(&[1, 2, 3], &[1, 2, 3]).unwrap(), 1.0);
        assert_eq!(accuracy(&[0, 0], &[1, 1]).unwrap(), 0.0);
        assert_eq!(accuracy(&[0, 0, 1, 1], &[0, 0, 0, 0]).unwrap(), 0.5);
        assert!(accuracy(&[0], &[0, 1]).is_err());
        assert!(accuracy(&[], &[]).is_err());
    }

    #[test]
    fn never_predicted_class_scores_zero() {
        let r = MetricsReport::compute(&[0, 1, 1], &[1, 1, 1]).unwrap();
        assert_eq!(r.per_class[0].f1, 0.0);
        assert_eq!(r.per_class[0].precision, 0.0);
        // F1_1 = 2 * (2/3) * 1 / (5/3) = 0.8, weighted by 2/3.
        assert!((r.weighted_f1 - 0.8 * 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn predicted_only_class_has_no_weight() {
        let r = MetricsReport::compute(&[0, 0], &[0, 5]).unwrap();
        assert_eq!(r.per_class[5].support, 0);
        assert!((r.weighted_f1 - 2.0 / 3.0).abs() < 1e-12);
    }

    fn labels() -> impl Strategy<Value = (Vec<usize>, Vec<usize>)> {
        (1usize..60).prop_flat_map(|n| {
            (
                proptest::collection::vec(0usize..6, n),
                proptest::collection::vec(0usize..6, n),
            )
        })
    }

    proptest! {
        #[test]
        fn perfect_iff_equal((t, p) in labels()) {
            let acc = accuracy(&t, &p).unwrap();
            let f1 = weighted_f1(&t, &p).unwrap();
            prop_assert_eq!(acc == 1.0, t == p);
            prop_assert_eq!((f1 - 1.0).abs() < 1e-12, t == p);
        }

        #[test]
        fn relabeling_invariant((t, p) in labels(), perm in Just((0..6usize).collect::<Vec<_>>()).prop_shuffle()) {
            let rt: Vec<usize> = t.iter().map(|&c| perm[c]).collect();
            let rp: Vec<usize> = p.iter().map(|&c| perm[c]).collect();
            let a = weighted_f1(&t, &p).unwrap();
            let b = weighted_f1(&rt, &rp).unwrap();
            prop_assert!((a - b).abs() < 1e-12);
            prop_assert_eq!(accuracy(&t, &p).unwrap(), accuracy(&rt, &rp).unwrap());
        }
    }
}
