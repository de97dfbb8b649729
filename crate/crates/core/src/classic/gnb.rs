use std::f64::consts::PI;

use super::LatentDataset;
use crate::error::{Error, Result};
use crate::tensor::{argmax, Tensor};

/// Fraction of the largest feature variance added to every variance.
pub const GNB_VAR_SMOOTHING: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct GnbModel {
    pub priors: Vec<f64>,
    /// `[class][feature]`.
    pub means: Vec<Vec<f64>>,
    /// Smoothed, strictly positive.
    pub variances: Vec<Vec<f64>>,
}

pub fn gnb_fit(train: &LatentDataset) -> Result<GnbModel> {
    let (n, d, k) = (train.len(), train.dim(), train.num_classes);
    if n == 0 {
        return Err(Error::EmptyDataset("naive Bayes training set".into()));
    }
    let mut counts = vec![0usize; k];
    let mut means = vec![vec![0.0; d]; k];
    for (i, &c) in train.y.iter().enumerate() {
        counts[c] += 1;
        for (m, v) in means[c].iter_mut().zip(train.z.row(i)) {
            *m += v;
        }
    }
    if let Some(c) = counts.iter().position(|&c| c == 0) {
        return Err(Error::invalid(format!("class {c} has no training samples")));
    }
    for (m, &c) in means.iter_mut().zip(&counts) {
        m.iter_mut().for_each(|v| *v /= c as f64);
    }
    let mut variances = vec![vec![0.0; d]; k];
    for (i, &c) in train.y.iter().enumerate() {
        for ((s, v), m) in variances[c].iter_mut().zip(train.z.row(i)).zip(&means[c]) {
            *s += (v - m) * (v - m);
        }
    }

    // Smoothing is relative to the largest variance over the whole set.
    let mut total_mean = vec![0.0; d];
    for i in 0..n {
        for (m, v) in total_mean.iter_mut().zip(train.z.row(i)) {
            *m += v;
        }
    }
    total_mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut total_var = vec![0.0; d];
    for i in 0..n {
        for ((s, v), m) in total_var.iter_mut().zip(train.z.row(i)).zip(&total_mean) {
            *s += (v - m) * (v - m);
        }
    }
    let max_var = total_var.iter().map(|s| s / n as f64).fold(0.0, f64::max);
    // All-constant features would leave every variance at zero.
    let epsilon = (GNB_VAR_SMOOTHING * max_var).max(f64::MIN_POSITIVE);

    for (var, &c) in variances.iter_mut().zip(&counts) {
        var.iter_mut().for_each(|v| *v = *v / c as f64 + epsilon);
    }
    Ok(GnbModel {
        priors: counts.iter().map(|&c| c as f64 / n as f64).collect(),
        means,
        variances,
    })
}

impl GnbModel {
    /// Unnormalized log posterior of every class for one sample.
    pub fn joint_log_likelihood(&self, x: &[f64]) -> Vec<f64> {
        self.priors
            .iter()
            .zip(&self.means)
            .zip(&self.variances)
            .map(|((p, mean), var)| {
                let mut ll = p.ln();
                for ((v, m), s) in x.iter().zip(mean).zip(var) {
                    ll -= 0.5 * (2.0 * PI * s).ln() + (v - m) * (v - m) / (2.0 * s);
                }
                ll
            })
            .collect()
    }
}

/// Highest posterior class; ties go to the lowest class index.
pub fn gnb_predict(model: &GnbModel, query: &Tensor<f64>) -> Result<Vec<usize>> {
    let d = model.means.first().map_or(0, Vec::len);
    if query.rank() != 2 || query.sample_len() != d {
        return Err(Error::shape(format!(
            "expected queries [m, {d}], got {:?}",
            query.shape()
        )));
    }
    Ok((0..query.batch())
        .map(|i| argmax(&model.joint_log_likelihood(query.row(i))))
        .collect())
}
