use super::LatentDataset;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const DEFAULT_NEIGHBORS: usize = 3;

/// Squared Euclidean distance with four independent accumulators.
fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let mut ca = a.chunks_exact(4);
    let mut cb = b.chunks_exact(4);
    for (x, y) in (&mut ca).zip(&mut cb) {
        for l in 0..4 {
            let d = x[l] - y[l];
            acc[l] += d * d;
        }
    }
    let tail: f64 = ca
        .remainder()
        .iter()
        .zip(cb.remainder())
        .map(|(x, y)| (x - y) * (x - y))
        .sum();
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Brute-force k-nearest-neighbour majority vote.
///
/// Distance ties go to the lower training index. Vote ties go to the tied
/// class whose nearest member is closest.
pub fn knn_predict(train: &LatentDataset, query: &Tensor<f64>, k: usize) -> Result<Vec<usize>> {
    if train.is_empty() {
        return Err(Error::EmptyDataset("k-NN training set".into()));
    }
    if k == 0 || k > train.len() {
        return Err(Error::invalid(format!(
            "k must lie in 1..={}, got {k}",
            train.len()
        )));
    }
    if query.rank() != 2 || query.sample_len() != train.dim() {
        return Err(Error::shape(format!(
            "expected queries [m, {}], got {:?}",
            train.dim(),
            query.shape()
        )));
    }
    let mut nearest: Vec<(f64, usize)> = Vec::with_capacity(k + 1);
    let mut votes = vec![0usize; train.num_classes];
    let mut out = Vec::with_capacity(query.batch());
    for q in 0..query.batch() {
        let row = query.row(q);
        nearest.clear();
        for i in 0..train.len() {
            let d = sq_dist(row, train.z.row(i));
            if nearest.len() == k && d >= nearest[k - 1].0 {
                continue;
            }
            // Inserting after equal distances keeps lower indices ahead.
            let pos = nearest.partition_point(|&(nd, _)| nd <= d);
            nearest.insert(pos, (d, i));
            nearest.truncate(k);
        }
        votes.iter_mut().for_each(|v| *v = 0);
        for &(_, i) in &nearest {
            votes[train.y[i]] += 1;
        }
        let top = *votes.iter().max().expect("at least one class");
        let winner = nearest
            .iter()
            .map(|&(_, i)| train.y[i])
            .find(|&c| votes[c] == top)
            .expect("a neighbour carries the top vote");
        out.push(winner);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn dataset(points: &[[f64; 2]], labels: &[usize], k: usize) -> LatentDataset {
        let z = Tensor::new([points.len(), 2], points.concat()).unwrap();
        LatentDataset::new(z, labels.to_vec(), k).unwrap()
    }

    /// Full sort of every distance, then a separate tally.
    fn oracle(train: &LatentDataset, query: &Tensor<f64>, k: usize) -> Vec<usize> {
        (0..query.batch())
            .map(|q| {
                let mut all: Vec<(f64, usize)> = (0..train.len())
                    .map(|i| {
                        let d: f64 = query
                            .row(q)
                            .iter()
                            .zip(train.z.row(i))
                            .map(|(a, b)| (a - b).powi(2))
                            .sum();
                        (d, i)
                    })
                    .collect();
                all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                let top = &all[..k];
                let count = |c: usize| top.iter().filter(|&&(_, i)| train.y[i] == c).count();
                let best = (0..train.num_classes).map(count).max().unwrap();
                top.iter()
                    .map(|&(_, i)| train.y[i])
                    .find(|&c| count(c) == best)
                    .unwrap()
            })
            .collect()
    }

    #[test]
    fn small_vote() {
        let train = dataset(&[[0.0, 0.0], [0.0, 1.0], [5.0, 5.0]], &[0, 0, 1], 2);
        let q = Tensor::new([1, 2], vec![0.0, 0.5]).unwrap();
        assert_eq!(knn_predict(&train, &q, 3).unwrap(), vec![0]);
    }

    #[test]
    fn exact_match_with_one_neighbour() {
        let train = dataset(&[[1.0, 1.0], [2.0, 2.0], [3.0, 3.0]], &[2, 0, 1], 3);
        let q = Tensor::new([1, 2], vec![2.0, 2.0]).unwrap();
        assert_eq!(knn_predict(&train, &q, 1).unwrap(), vec![0]);
    }

    #[test]
    fn vote_tie_goes_to_nearest_member() {
        // Neighbours at distances 1 (class 1), 2 (class 0), with k = 2.
        let train = dataset(&[[2.0, 0.0], [1.0, 0.0]], &[0, 1], 2);
        let q = Tensor::new([1, 2], vec![0.0, 0.0]).unwrap();
        assert_eq!(knn_predict(&train, &q, 2).unwrap(), vec![1]);
    }

    #[test]
    fn distance_tie_goes_to_lower_index() {
        let train = dataset(&[[1.0, 0.0], [-1.0, 0.0]], &[1, 0], 2);
        let q = Tensor::new([1, 2], vec![0.0, 0.0]).unwrap();
        assert_eq!(knn_predict(&train, &q, 1).unwrap(), vec![1]);
    }

    #[test]
    fn argument_errors() {
        let train = dataset(&[[0.0, 0.0]], &[0], 1);
        let q = Tensor::new([1, 2], vec![0.0, 0.0]).unwrap();
        assert!(knn_predict(&train, &q, 2).is_err());
        assert!(knn_predict(&train, &q, 0).is_err());
        let wrong = Tensor::new([1, 3], vec![0.0; 3]).unwrap();
        assert!(knn_predict(&train, &wrong, 1).is_err());
    }

    #[test]
    fn matches_oracle_on_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let n = rng.random_range(5..=200);
            let d = rng.random_range(1..=16);
            let m = rng.random_range(1..=20);
            let classes = rng.random_range(2..=5);
            let k = rng.random_range(1..=5.min(n));
            // Integer grids produce exact distance ties.
            let grid = rng.random_bool(0.5);
            let draw = |r: &mut ChaCha8Rng| {
                if grid {
                    r.random_range(-2..=2) as f64
                } else {
                    r.random_range(-1.0..1.0)
                }
            };
            let z: Vec<f64> = (0..n * d).map(|_| draw(&mut rng)).collect();
            let y: Vec<usize> = (0..n).map(|_| rng.random_range(0..classes)).collect();
            let q: Vec<f64> = (0..m * d).map(|_| draw(&mut rng)).collect();
            let train = LatentDataset::new(Tensor::new([n, d], z).unwrap(), y, classes).unwrap();
            let query = Tensor::new([m, d], q).unwrap();
            assert_eq!(
                knn_predict(&train, &query, k).unwrap(),
                oracle(&train, &query, k)
            );
        }
    }
}
