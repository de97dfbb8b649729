//! RBF-kernel SVM trained by SMO, with one-vs-one multi-class voting.
//!
//! For each violating index `i` the partner `j` is drawn at random from a
//! seeded generator; when that pair cannot make progress every other partner
//! is tried in turn. Fitting stops after a full pass with no update, or at
//! the pass cap.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::LatentDataset;
use crate::error::{Error, Result};
use crate::tensor::{argmax, Tensor};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Gamma {
    /// `1 / (d * var(X))` over all training feature values.
    Scale,
    Value(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SvmParams {
    pub c: f64,
    pub gamma: Gamma,
    /// KKT tolerance.
    pub tol: f64,
    /// Pass cap per machine is `max_passes_factor * n`.
    pub max_passes_factor: usize,
    pub seed: u64,
}

impl Default for SvmParams {
    fn default() -> Self {
        SvmParams {
            c: 1.0,
            gamma: Gamma::Scale,
            tol: 1e-3,
            max_passes_factor: 10,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SvmStatus {
    Converged,
    /// The pass cap was hit or no pair could make progress while some point
    /// still violated the KKT conditions; the best-so-far model is kept.
    NotConverged {
        max_violation: f64,
    },
}

pub fn gamma_scale(x: &Tensor<f64>) -> f64 {
    let n = x.len() as f64;
    let mean = x.data().iter().sum::<f64>() / n;
    let var = x
        .data()
        .iter()
        .map(|v| (v - mean) * (v - mean))
        .sum::<f64>()
        / n;
    if var > 0.0 {
        1.0 / (x.sample_len() as f64 * var)
    } else {
        1.0
    }
}

fn rbf(a: &[f64], b: &[f64], gamma: f64) -> f64 {
    let d: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    (-gamma * d).exp()
}

/// Two-class machine with labels `+1` / `-1`.
#[derive(Debug, Clone, PartialEq)]
pub struct BinarySvm {
    pub support_vectors: Tensor<f64>,
    /// Training row of each support vector.
    pub support_indices: Vec<usize>,
    /// `alpha_i * y_i` per support vector.
    pub dual_coef: Vec<f64>,
    pub intercept: f64,
    pub gamma: f64,
    pub c: f64,
    pub passes: usize,
    pub status: SvmStatus,
}

struct Smo<'a> {
    k: Vec<f64>,
    n: usize,
    y: &'a [f64],
    c: f64,
    alpha: Vec<f64>,
    b: f64,
    err: Vec<f64>,
}

const ALPHA_STEP_MIN: f64 = 1e-10;

impl Smo<'_> {
    fn kij(&self, i: usize, j: usize) -> f64 {
        self.k[i * self.n + j]
    }

    /// `y_i f(x_i) - 1` from the error cache.
    fn margin(&self, i: usize) -> f64 {
        self.y[i] * self.err[i]
    }

    fn violation(&self, i: usize) -> f64 {
        let r = self.margin(i);
        let a = self.alpha[i];
        if a <= 0.0 {
            (-r).max(0.0)
        } else if a >= self.c {
            r.max(0.0)
        } else {
            r.abs()
        }
    }

    fn take_step(&mut self, i: usize, j: usize) -> bool {
        if i == j {
            return false;
        }
        let (ai, aj) = (self.alpha[i], self.alpha[j]);
        let (yi, yj) = (self.y[i], self.y[j]);
        let (ei, ej) = (self.err[i], self.err[j]);
        let (lo, hi) = if yi != yj {
            ((aj - ai).max(0.0), (self.c + aj - ai).min(self.c))
        } else {
            ((ai + aj - self.c).max(0.0), (ai + aj).min(self.c))
        };
        if hi - lo < ALPHA_STEP_MIN {
            return false;
        }
        let (kii, kjj, kij) = (self.kij(i, i), self.kij(j, j), self.kij(i, j));
        let eta = 2.0 * kij - kii - kjj;
        if eta >= 0.0 {
            return false;
        }
        let mut aj_new = (aj - yj * (ei - ej) / eta).clamp(lo, hi);
        if aj_new - lo < ALPHA_STEP_MIN {
            aj_new = lo;
        } else if hi - aj_new < ALPHA_STEP_MIN {
            aj_new = hi;
        }
        if (aj_new - aj).abs() < ALPHA_STEP_MIN {
            return false;
        }
        let mut ai_new = ai + yi * yj * (aj - aj_new);
        if ai_new < ALPHA_STEP_MIN {
            ai_new = 0.0;
        } else if self.c - ai_new < ALPHA_STEP_MIN {
            ai_new = self.c;
        }
        let (di, dj) = (yi * (ai_new - ai), yj * (aj_new - aj));
        let b1 = self.b - ei - di * kii - dj * kij;
        let b2 = self.b - ej - di * kij - dj * kjj;
        let b_new = if ai_new > 0.0 && ai_new < self.c {
            b1
        } else if aj_new > 0.0 && aj_new < self.c {
            b2
        } else {
            0.5 * (b1 + b2)
        };
        let db = b_new - self.b;
        for t in 0..self.n {
            self.err[t] += di * self.k[i * self.n + t] + dj * self.k[j * self.n + t] + db;
        }
        self.alpha[i] = ai_new;
        self.alpha[j] = aj_new;
        self.b = b_new;
        true
    }
}

impl BinarySvm {
    /// Fits on rows of `x` with labels `y` in `{+1, -1}`.
    pub fn fit<R: Rng + ?Sized>(
        x: &Tensor<f64>,
        y: &[f64],
        c: f64,
        gamma: f64,
        tol: f64,
        max_passes: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let n = y.len();
        if x.rank() != 2 || x.batch() != n || n < 2 {
            return Err(Error::shape(format!(
                "SVM needs [n >= 2, d] features matching {n} labels, got {:?}",
                x.shape()
            )));
        }
        if y.iter().any(|&v| v != 1.0 && v != -1.0) {
            return Err(Error::invalid("binary SVM labels must be +1 or -1"));
        }
        if c.is_nan() || c <= 0.0 || gamma.is_nan() || gamma <= 0.0 {
            return Err(Error::invalid("C and gamma must be positive"));
        }
        let mut k = vec![0.0; n * n];
        for i in 0..n {
            k[i * n + i] = 1.0;
            for j in 0..i {
                let v = rbf(x.row(i), x.row(j), gamma);
                k[i * n + j] = v;
                k[j * n + i] = v;
            }
        }
        let mut smo = Smo {
            k,
            n,
            y,
            c,
            alpha: vec![0.0; n],
            b: 0.0,
            err: y.iter().map(|v| -v).collect(),
        };
        let mut passes = 0;
        while passes < max_passes {
            let mut changed = 0;
            for i in 0..n {
                if smo.violation(i) <= tol {
                    continue;
                }
                let mut j = rng.random_range(0..n - 1);
                if j >= i {
                    j += 1;
                }
                if smo.take_step(i, j) {
                    changed += 1;
                    continue;
                }
                let start = rng.random_range(0..n);
                if (0..n).any(|off| smo.take_step(i, (start + off) % n)) {
                    changed += 1;
                }
            }
            passes += 1;
            if changed == 0 {
                break;
            }
        }
        let support_indices: Vec<usize> = (0..n).filter(|&i| smo.alpha[i] > 0.0).collect();
        let support_vectors = if support_indices.is_empty() {
            Tensor::zeros([1, x.sample_len()])?
        } else {
            x.gather(&support_indices)?
        };
        let dual_coef = if support_indices.is_empty() {
            vec![0.0]
        } else {
            support_indices
                .iter()
                .map(|&i| smo.alpha[i] * y[i])
                .collect()
        };
        let mut model = BinarySvm {
            support_vectors,
            support_indices,
            dual_coef,
            intercept: smo.b,
            gamma,
            c,
            passes,
            status: SvmStatus::Converged,
        };
        let worst = model.max_kkt_violation(x, y);
        if worst > tol {
            model.status = SvmStatus::NotConverged {
                max_violation: worst,
            };
        }
        Ok(model)
    }

    pub fn decision(&self, x: &[f64]) -> f64 {
        let mut f = self.intercept;
        for (s, coef) in self.dual_coef.iter().enumerate() {
            f += coef * rbf(self.support_vectors.row(s), x, self.gamma);
        }
        f
    }

    /// Largest KKT violation over the training set, recomputed from scratch.
    pub fn max_kkt_violation(&self, x: &Tensor<f64>, y: &[f64]) -> f64 {
        let mut alpha = vec![0.0; y.len()];
        for (&i, coef) in self.support_indices.iter().zip(&self.dual_coef) {
            alpha[i] = coef * y[i];
        }
        (0..y.len())
            .map(|i| {
                let r = y[i] * self.decision(x.row(i)) - 1.0;
                if alpha[i] <= 0.0 {
                    (-r).max(0.0)
                } else if alpha[i] >= self.c {
                    r.max(0.0)
                } else {
                    r.abs()
                }
            })
            .fold(0.0, f64::max)
    }
}

/// One machine per pair of classes present in the training set.
#[derive(Debug, Clone, PartialEq)]
pub struct SvmModel {
    pub num_classes: usize,
    pub gamma: f64,
    /// `(a, b, machine)` with `a < b`; positive decisions vote for `a`.
    pub machines: Vec<(usize, usize, BinarySvm)>,
}

impl SvmModel {
    pub fn status(&self) -> SvmStatus {
        let worst = self
            .machines
            .iter()
            .filter_map(|(_, _, m)| match m.status {
                SvmStatus::NotConverged { max_violation } => Some(max_violation),
                SvmStatus::Converged => None,
            })
            .fold(None, |acc: Option<f64>, v| {
                Some(acc.map_or(v, |a| a.max(v)))
            });
        match worst {
            Some(max_violation) => SvmStatus::NotConverged { max_violation },
            None => SvmStatus::Converged,
        }
    }
}

pub fn svm_fit(train: &LatentDataset, params: &SvmParams) -> Result<SvmModel> {
    let present: Vec<usize> = (0..train.num_classes)
        .filter(|&c| train.y.contains(&c))
        .collect();
    if present.len() < 2 {
        return Err(Error::invalid(
            "SVM needs at least two classes in the training set",
        ));
    }
    let gamma = match params.gamma {
        Gamma::Scale => gamma_scale(&train.z),
        Gamma::Value(g) => g,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut machines = Vec::new();
    for (ia, &a) in present.iter().enumerate() {
        for &b in &present[ia + 1..] {
            let rows: Vec<usize> = (0..train.len())
                .filter(|&i| train.y[i] == a || train.y[i] == b)
                .collect();
            let x = train.z.gather(&rows)?;
            let y: Vec<f64> = rows
                .iter()
                .map(|&i| if train.y[i] == a { 1.0 } else { -1.0 })
                .collect();
            let cap = params.max_passes_factor.saturating_mul(rows.len()).max(1);
            let m = BinarySvm::fit(&x, &y, params.c, gamma, params.tol, cap, &mut rng)?;
            machines.push((a, b, m));
        }
    }
    Ok(SvmModel {
        num_classes: train.num_classes,
        gamma,
        machines,
    })
}

/// One-vs-one vote; ties go to the lowest class index.
pub fn svm_predict(model: &SvmModel, query: &Tensor<f64>) -> Result<Vec<usize>> {
    let d = model
        .machines
        .first()
        .map_or(0, |(_, _, m)| m.support_vectors.sample_len());
    if query.rank() != 2 || query.sample_len() != d {
        return Err(Error::shape(format!(
            "expected queries [m, {d}], got {:?}",
            query.shape()
        )));
    }
    let mut votes = vec![0usize; model.num_classes];
    Ok((0..query.batch())
        .map(|q| {
            votes.iter_mut().for_each(|v| *v = 0);
            for (a, b, m) in &model.machines {
                if m.decision(query.row(q)) > 0.0 {
                    votes[*a] += 1;
                } else {
                    votes[*b] += 1;
                }
            }
            argmax(&votes)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fit_binary(points: &[f64], d: usize, y: &[f64], seed: u64) -> (Tensor<f64>, BinarySvm) {
        let x = Tensor::new([y.len(), d], points.to_vec()).unwrap();
        let g = gamma_scale(&x);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = BinarySvm::fit(&x, y, 1.0, g, 1e-3, 10 * y.len(), &mut rng).unwrap();
        (x, m)
    }

    #[test]
    fn xor_is_separated() {
        let pts = [0.0, 0.0, 0.0, 1.0, 1.0, 0.0, 1.0, 1.0];
        let y = [1.0, -1.0, -1.0, 1.0];
        let (x, m) = fit_binary(&pts, 2, &y, 0);
        assert_eq!(m.status, SvmStatus::Converged);
        assert!(m.max_kkt_violation(&x, &y) <= 1e-3);
        for (i, yi) in y.iter().enumerate() {
            assert!(m.decision(x.row(i)) * yi > 0.0, "point {i}");
        }
    }

    #[test]
    fn multiclass_xor_labels() {
        let z = Tensor::new([4, 2], vec![0.0, 0.0, 0.0, 1.0, 1.0, 0.0, 1.0, 1.0]).unwrap();
        let train = LatentDataset::new(z.clone(), vec![0, 1, 1, 0], 2).unwrap();
        let model = svm_fit(&train, &SvmParams::default()).unwrap();
        assert_eq!(svm_predict(&model, &z).unwrap(), vec![0, 1, 1, 0]);
    }

    #[test]
    fn distant_clusters_have_opposite_signs() {
        let mut pts = Vec::new();
        let mut y = Vec::new();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for i in 0..40 {
            let (cx, label) = if i % 2 == 0 { (-5.0, 1.0) } else { (5.0, -1.0) };
            pts.push(cx + rng.random_range(-0.5..0.5));
            pts.push(rng.random_range(-0.5..0.5));
            y.push(label);
        }
        let (x, m) = fit_binary(&pts, 2, &y, 1);
        assert_eq!(m.status, SvmStatus::Converged);
        assert!(m.max_kkt_violation(&x, &y) <= 1e-3);
        assert!(m.decision(&[-5.0, 0.0]) > 0.0);
        assert!(m.decision(&[5.0, 0.0]) < 0.0);
    }

    #[test]
    fn three_classes_build_three_machines() {
        let mut z = Vec::new();
        let mut y = Vec::new();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let centers = [[0.0, 0.0], [4.0, 0.0], [0.0, 4.0]];
        for i in 0..60 {
            let c = i % 3;
            z.push(centers[c][0] + rng.random_range(-1.0..1.0));
            z.push(centers[c][1] + rng.random_range(-1.0..1.0));
            y.push(c);
        }
        let train = LatentDataset::new(Tensor::new([60, 2], z).unwrap(), y.clone(), 3).unwrap();
        let model = svm_fit(&train, &SvmParams::default()).unwrap();
        assert_eq!(model.machines.len(), 3);
        assert_eq!(model.status(), SvmStatus::Converged);
        let pred = svm_predict(&model, &train.z).unwrap();
        let acc = pred.iter().zip(&y).filter(|(a, b)| a == b).count();
        assert!(acc >= 57, "{acc}/60");
        let centers = Tensor::new([3, 2], centers.concat()).unwrap();
        assert_eq!(svm_predict(&model, &centers).unwrap(), vec![0, 1, 2]);
    }

    #[test]
    fn label_swap_negates_decision() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let pts: Vec<f64> = (0..60).map(|_| rng.random_range(-1.0..1.0)).collect();
        let y: Vec<f64> = (0..30)
            .map(|i| {
                if pts[2 * i] + 0.3 * pts[2 * i + 1] > 0.0 {
                    1.0
                } else {
                    -1.0
                }
            })
            .collect();
        let flipped: Vec<f64> = y.iter().map(|v| -v).collect();
        let (x, a) = fit_binary(&pts, 2, &y, 5);
        let (_, b) = fit_binary(&pts, 2, &flipped, 5);
        for i in 0..30 {
            let (da, db) = (a.decision(x.row(i)), b.decision(x.row(i)));
            assert!((da + db).abs() < 1e-9);
            assert_eq!(da > 0.0, db < 0.0);
        }
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let z: Vec<f64> = (0..80).map(|_| rng.random_range(-1.0..1.0)).collect();
        let y: Vec<usize> = (0..40).map(|i| (i * 7 % 3) as usize).collect();
        let train = LatentDataset::new(Tensor::new([40, 2], z).unwrap(), y, 3).unwrap();
        let a = svm_fit(&train, &SvmParams::default()).unwrap();
        let b = svm_fit(&train, &SvmParams::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn pass_cap_reports_status() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let pts: Vec<f64> = (0..100).map(|_| rng.random_range(-1.0..1.0)).collect();
        let y: Vec<f64> = (0..50)
            .map(|i| if i % 2 == 0 { 1.0 } else { -1.0 })
            .collect();
        let x = Tensor::new([50, 2], pts).unwrap();
        let m = BinarySvm::fit(&x, &y, 1.0, 1.0, 1e-3, 1, &mut rng).unwrap();
        assert_eq!(m.passes, 1);
        assert!(matches!(m.status, SvmStatus::NotConverged { .. }));
    }

    #[test]
    fn gamma_scale_value() {
        let x = Tensor::new([2, 2], vec![0.0, 2.0, 0.0, 2.0]).unwrap();
        // Values {0,2,0,2}: variance 1, d = 2.
        assert_eq!(gamma_scale(&x), 0.5);
        assert_eq!(gamma_scale(&Tensor::full([2, 2], 3.0).unwrap()), 1.0);
    }

    #[test]
    fn one_class_is_an_error() {
        let z = Tensor::new([2, 1], vec![0.0, 1.0]).unwrap();
        let train = LatentDataset::new(z, vec![1, 1], 3).unwrap();
        assert!(svm_fit(&train, &SvmParams::default()).is_err());
    }
}
