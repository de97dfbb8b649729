//! Classical classifiers fitted on encoder outputs or on raw pixels.
//!
//! All three work in `f64` on row-major feature matrices.

mod gnb;
mod knn;
mod svm;

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

pub use gnb::{gnb_fit, gnb_predict, GnbModel, GNB_VAR_SMOOTHING};
pub use knn::{knn_predict, DEFAULT_NEIGHBORS};
pub use svm::{
    gamma_scale, svm_fit, svm_predict, BinarySvm, Gamma, SvmModel, SvmParams, SvmStatus,
};

use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::metrics::MetricsReport;
use crate::model::CsaeModel;
use crate::tensor::Tensor;
use crate::train::EVAL_BATCH;

/// Feature rows `[n, d]` with labels in `0..num_classes`.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentDataset {
    pub z: Tensor<f64>,
    pub y: Vec<usize>,
    pub num_classes: usize,
}

impl LatentDataset {
    pub fn new(z: Tensor<f64>, y: Vec<usize>, num_classes: usize) -> Result<Self> {
        if z.rank() != 2 {
            return Err(Error::shape(format!(
                "expected [n, d] features, got {:?}",
                z.shape()
            )));
        }
        if z.batch() != y.len() {
            return Err(Error::CountMismatch {
                images: z.batch(),
                labels: y.len(),
            });
        }
        if let Some(&label) = y.iter().find(|&&l| l >= num_classes) {
            return Err(Error::LabelOutOfRange { label, num_classes });
        }
        Ok(LatentDataset { z, y, num_classes })
    }

    /// Flattened pixels of an image dataset.
    pub fn from_pixels(data: &LabeledDataset) -> Result<Self> {
        let z = data.images.cast::<f64>().flatten_batch();
        LatentDataset::new(z, data.labels.clone(), data.num_classes)
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.z.sample_len()
    }

    /// CSV with header `z0,..,z{d-1},label`.
    pub fn write_csv(&self, out: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<String> = (0..self.dim()).map(|i| format!("z{i}")).collect();
        header.push("label".into());
        w.write_record(&header)?;
        for (i, &label) in self.y.iter().enumerate() {
            let mut rec: Vec<String> = self.z.row(i).iter().map(f64::to_string).collect();
            rec.push(label.to_string());
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads the layout written by [`write_csv`](Self::write_csv). With
    /// `num_classes` unset it is inferred as `max label + 1`.
    pub fn read_csv(input: impl Read, num_classes: Option<usize>) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let header = r.headers()?.clone();
        let d = header
            .len()
            .checked_sub(1)
            .filter(|&d| d > 0)
            .ok_or_else(|| {
                Error::Malformed("latent CSV needs at least one feature and a label".into())
            })?;
        if header.get(d) != Some("label") {
            return Err(Error::Malformed(
                "last latent CSV column must be `label`".into(),
            ));
        }
        let mut z = Vec::new();
        let mut y = Vec::new();
        for (line, rec) in r.records().enumerate() {
            let rec = rec?;
            let bad = |what: &str| Error::Malformed(format!("row {}: bad {what}", line + 1));
            for field in rec.iter().take(d) {
                z.push(field.trim().parse::<f64>().map_err(|_| bad("feature"))?);
            }
            y.push(rec[d].trim().parse::<usize>().map_err(|_| bad("label"))?);
        }
        if y.is_empty() {
            return Err(Error::EmptyDataset("latent CSV has no rows".into()));
        }
        let k = num_classes.unwrap_or_else(|| y.iter().max().map_or(0, |m| m + 1));
        LatentDataset::new(Tensor::new([y.len(), d], z)?, y, k)
    }
}

/// Encodes a dataset in bounded-size batches.
pub fn extract_latent(model: &CsaeModel, data: &LabeledDataset) -> Result<LatentDataset> {
    let z = model.encode_batched(&data.images, EVAL_BATCH)?;
    LatentDataset::new(z.cast::<f64>(), data.labels.clone(), data.num_classes)
}

/// Per-feature mean and population standard deviation (floored at 1e-8).
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

pub const STD_FLOOR: f64 = 1e-8;

impl Standardizer {
    pub fn fit(x: &Tensor<f64>) -> Result<Self> {
        if x.rank() != 2 || x.is_empty() {
            return Err(Error::EmptyDataset(
                "standardizer needs a non-empty [n, d] matrix".into(),
            ));
        }
        let (n, d) = (x.batch(), x.sample_len());
        let mut mean = vec![0.0; d];
        for i in 0..n {
            for (m, v) in mean.iter_mut().zip(x.row(i)) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        let mut var = vec![0.0; d];
        for i in 0..n {
            for ((s, v), m) in var.iter_mut().zip(x.row(i)).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let std = var
            .into_iter()
            .map(|s| (s / n as f64).sqrt().max(STD_FLOOR))
            .collect();
        Ok(Standardizer { mean, std })
    }

    pub fn apply(&self, x: &Tensor<f64>) -> Result<Tensor<f64>> {
        if x.rank() != 2 || x.sample_len() != self.mean.len() {
            return Err(Error::shape(format!(
                "expected [n, {}] features, got {:?}",
                self.mean.len(),
                x.shape()
            )));
        }
        let d = self.mean.len();
        let data = x
            .data()
            .iter()
            .enumerate()
            .map(|(i, v)| (v - self.mean[i % d]) / self.std[i % d])
            .collect();
        Tensor::new(x.shape().to_vec(), data)
    }
}

/// Standardizes `train_x` and `apply_x` with statistics of `train_x`.
pub fn standardize(
    train_x: &Tensor<f64>,
    apply_x: &Tensor<f64>,
) -> Result<(Tensor<f64>, Tensor<f64>)> {
    let s = Standardizer::fit(train_x)?;
    Ok((s.apply(train_x)?, s.apply(apply_x)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Knn,
    Gnb,
    Svm,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Knn => "knn",
            Method::Gnb => "gnb",
            Method::Svm => "svm",
        })
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "knn" => Ok(Method::Knn),
            "gnb" => Ok(Method::Gnb),
            "svm" => Ok(Method::Svm),
            other => Err(Error::invalid(format!(
                "unknown method {other:?} (expected knn, gnb or svm)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassicOptions {
    pub neighbors: usize,
    pub standardize: bool,
    pub svm: SvmParams,
}

impl Default for ClassicOptions {
    fn default() -> Self {
        ClassicOptions {
            neighbors: DEFAULT_NEIGHBORS,
            standardize: false,
            svm: SvmParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassicOutcome {
    pub predictions: Vec<usize>,
    pub metrics: MetricsReport,
    /// Set for SVM fits that hit the pass cap in any pairwise machine.
    pub svm_status: Option<SvmStatus>,
}

/// Fits `method` on `train` and scores it on `test`.
pub fn fit_predict(
    train: &LatentDataset,
    test: &LatentDataset,
    method: Method,
    opts: &ClassicOptions,
) -> Result<ClassicOutcome> {
    let (train_z, test_z) = if opts.standardize {
        standardize(&train.z, &test.z)?
    } else {
        (train.z.clone(), test.z.clone())
    };
    let fitted = LatentDataset::new(train_z, train.y.clone(), train.num_classes)?;
    let mut svm_status = None;
    let predictions = match method {
        Method::Knn => knn_predict(&fitted, &test_z, opts.neighbors)?,
        Method::Gnb => gnb_predict(&gnb_fit(&fitted)?, &test_z)?,
        Method::Svm => {
            let model = svm_fit(&fitted, &opts.svm)?;
            svm_status = Some(model.status());
            svm_predict(&model, &test_z)?
        }
    };
    let metrics = MetricsReport::compute(&test.y, &predictions)?;
    Ok(ClassicOutcome {
        predictions,
        metrics,
        svm_status,
    })
}

/// Encodes both image sets with `model`, then fits and scores `method` on the
/// latent codes.
pub fn pipeline_classify(
    model: &CsaeModel,
    train: &LabeledDataset,
    test: &LabeledDataset,
    method: Method,
    opts: &ClassicOptions,
) -> Result<ClassicOutcome> {
    fit_predict(
        &extract_latent(model, train)?,
        &extract_latent(model, test)?,
        method,
        opts,
    )
}
