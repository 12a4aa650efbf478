use rand::Rng;

use crate::{Error, Result};

/// Walker/Vose alias table: O(n) construction, O(1) weighted draws.
#[derive(Debug, Clone)]
pub struct AliasTable {
    probabilities: Vec<f64>,
    aliases: Vec<u32>,
}

impl AliasTable {
    /// Draws item `i` with probability `weights[i] / Σ weights`.
    pub fn new(weights: &[f64]) -> Result<Self> {
        if weights.is_empty() || weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidWeights);
        }
        let total: f64 = weights.iter().sum();
        if !(total > 0.0 && total.is_finite()) {
            return Err(Error::InvalidWeights);
        }
        let n = weights.len();
        let mut probabilities: Vec<f64> = weights.iter().map(|w| w * n as f64 / total).collect();
        let mut aliases: Vec<u32> = (0..n as u32).collect();

        let (mut small, mut large): (Vec<usize>, Vec<usize>) = (0..n).partition(|&i| probabilities[i] < 1.0);
        while let (Some(&s), Some(&l)) = (small.last(), large.last()) {
            small.pop();
            aliases[s] = l as u32;
            probabilities[l] = (probabilities[l] + probabilities[s]) - 1.0;
            if probabilities[l] < 1.0 {
                large.pop();
                small.push(l);
            }
        }
        // Leftovers are 1 up to rounding.
        for i in large.into_iter().chain(small) {
            probabilities[i] = 1.0;
        }
        // Zero-weight items must never be drawn, even after rounding.
        let heaviest = (0..n).max_by(|&a, &b| weights[a].total_cmp(&weights[b])).unwrap_or(0);
        for (i, w) in weights.iter().enumerate() {
            if *w == 0.0 {
                probabilities[i] = 0.0;
                if aliases[i] as usize == i {
                    aliases[i] = heaviest as u32;
                }
            }
        }
        Ok(AliasTable { probabilities, aliases })
    }

    pub fn len(&self) -> usize {
        self.probabilities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probabilities.is_empty()
    }

    /// Exact draw probability of item `i` implied by the table.
    pub fn probability(&self, i: usize) -> f64 {
        let n = self.len() as f64;
        let aliased: f64 = self
            .aliases
            .iter()
            .zip(&self.probabilities)
            .filter(|&(&a, _)| a as usize == i)
            .map(|(_, p)| 1.0 - p)
            .sum();
        (self.probabilities[i] + aliased) / n
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let i = rng.random_range(0..self.probabilities.len());
        if rng.random::<f64>() < self.probabilities[i] {
            i
        } else {
            self.aliases[i] as usize
        }
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn frequencies(weights: &[f64], draws: usize, seed: u64) -> Vec<f64> {
        let table = AliasTable::new(weights).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut counts = vec![0usize; weights.len()];
        for _ in 0..draws {
            counts[table.sample(&mut rng)] += 1;
        }
        counts.into_iter().map(|c| c as f64 / draws as f64).collect()
    }

    #[test]
    fn table_probabilities_match_weights() {
        let weights = [0.0, 5.0, 1.0, 2.5, 0.5, 7.0];
        let table = AliasTable::new(&weights).unwrap();
        let total: f64 = weights.iter().sum();
        for (i, w) in weights.iter().enumerate() {
            assert!((table.probability(i) - w / total).abs() < 1e-12);
        }
    }

    #[test]
    fn single_item_always_drawn() {
        assert_eq!(frequencies(&[1.0], 1000, 1), vec![1.0]);
    }

    #[test]
    fn uniform_weights() {
        for f in frequencies(&[1.0; 4], 1_000_000, 2) {
            assert!((f - 0.25).abs() < 0.01 * 0.25, "{f}");
        }
    }

    #[test]
    fn one_to_three() {
        let f = frequencies(&[1.0, 3.0], 1_000_000, 3);
        assert!((f[1] - 0.75).abs() < 0.01, "{f:?}");
    }

    #[test]
    fn zero_weight_never_drawn() {
        let f = frequencies(&[0.0, 2.0, 0.0, 1.0, 0.0], 200_000, 4);
        assert_eq!(f[0], 0.0);
        assert_eq!(f[2], 0.0);
        assert_eq!(f[4], 0.0);
    }

    #[test]
    fn rejects_degenerate_input() {
        assert!(AliasTable::new(&[]).is_err());
        assert!(AliasTable::new(&[0.0, 0.0]).is_err());
        assert!(AliasTable::new(&[1.0, -1.0]).is_err());
        assert!(AliasTable::new(&[f64::NAN]).is_err());
    }

    #[test]
    fn scaling_weights_leaves_table_unchanged() {
        let w = [1.0, 5.0, 2.0, 0.5, 7.0];
        let scaled: Vec<f64> = w.iter().map(|x| x * 8.0).collect();
        let (a, b) = (AliasTable::new(&w).unwrap(), AliasTable::new(&scaled).unwrap());
        assert_eq!(a.aliases, b.aliases);
        for (x, y) in a.probabilities.iter().zip(&b.probabilities) {
            assert!((x - y).abs() < 1e-12);
        }
    }
}
