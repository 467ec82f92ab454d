use serde::{Deserialize, Serialize};

use crate::diffcore::Tensor;

/// Mean pairwise Euclidean distance between node rows, one value per layer.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SmoothingProfile {
    pub per_layer: Vec<f64>,
}

impl SmoothingProfile {
    pub fn mean(&self) -> f64 {
        if self.per_layer.is_empty() {
            return 0.0;
        }
        self.per_layer.iter().sum::<f64>() / self.per_layer.len() as f64
    }

    pub fn last(&self) -> Option<f64> {
        self.per_layer.last().copied()
    }
}

/// Mean distance over all unordered node pairs; zero for fewer than two nodes.
pub fn mean_pairwise_distance(h: &Tensor) -> f64 {
    let n = h.rows();
    if n < 2 {
        return 0.0;
    }
    let mut total = 0.0;
    for i in 0..n {
        let a = h.row(i);
        for j in i + 1..n {
            let d2: f64 = a.iter().zip(h.row(j)).map(|(x, y)| (x - y) * (x - y)).sum();
            total += d2.sqrt();
        }
    }
    total / (n * (n - 1) / 2) as f64
}

pub fn smoothing_profile(layers: &[Tensor]) -> SmoothingProfile {
    SmoothingProfile {
        per_layer: layers.iter().map(mean_pairwise_distance).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn examples() {
        let same = Tensor::from_rows(&[vec![1.0, 2.0], vec![1.0, 2.0], vec![1.0, 2.0]]).unwrap();
        assert_eq!(mean_pairwise_distance(&same), 0.0);
        let pair = Tensor::from_rows(&[vec![0.0, 0.0], vec![3.0, 4.0]]).unwrap();
        assert_eq!(mean_pairwise_distance(&pair), 5.0);
        assert_eq!(mean_pairwise_distance(&Tensor::filled(1, 3, 9.0)), 0.0);
        let p = smoothing_profile(&[same, pair]);
        assert_eq!(p.per_layer, vec![0.0, 5.0]);
        assert_eq!(p.mean(), 2.5);
    }

    #[test]
    fn matches_double_loop_and_ignores_order() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let rows: Vec<Vec<f64>> = (0..5).map(|_| (0..3).map(|_| rng.gen_range(-2.0..2.0)).collect()).collect();
        let mut brute = 0.0;
        let mut pairs = 0.0;
        for a in 0..5 {
            for b in 0..5 {
                if a != b {
                    let d: f64 = (0..3).map(|k| (rows[a][k] - rows[b][k]).powi(2)).sum();
                    brute += d.sqrt();
                    pairs += 1.0;
                }
            }
        }
        let got = mean_pairwise_distance(&Tensor::from_rows(&rows).unwrap());
        assert!((got - brute / pairs).abs() < 1e-12);

        let mut shuffled = rows.clone();
        shuffled.reverse();
        shuffled.swap(0, 2);
        let again = mean_pairwise_distance(&Tensor::from_rows(&shuffled).unwrap());
        assert!((got - again).abs() < 1e-12);
    }
}
