use serde::{Deserialize, Serialize};

use super::{Maneuver, Scenario};
use crate::error::{Error, Result};
use crate::numcore::SeededRng;

/// Downsamples every class to the minority count without replacement, then
/// shuffles.
pub fn balance_scenarios(scenarios: &[Scenario], seed: u64) -> Vec<Scenario> {
    let mut rng = SeededRng::new(seed);
    let classes = [Maneuver::KeepLane, Maneuver::LaneChange];
    let members: Vec<Vec<usize>> = classes
        .iter()
        .map(|c| {
            scenarios
                .iter()
                .enumerate()
                .filter(|(_, s)| s.maneuver == *c)
                .map(|(i, _)| i)
                .collect()
        })
        .collect();
    let k = members.iter().map(Vec::len).min().unwrap_or(0);
    let mut picked: Vec<usize> = Vec::with_capacity(2 * k);
    for m in &members {
        let mut chosen = rng.sample_indices(m.len(), k);
        chosen.sort_unstable();
        picked.extend(chosen.into_iter().map(|i| m[i]));
    }
    rng.shuffle(&mut picked);
    picked.into_iter().map(|i| scenarios[i].clone()).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train: f64,
    pub val: f64,
    pub test: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train: 0.7,
            val: 0.1,
            test: 0.2,
            seed: 0,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        let fr = [self.train, self.val, self.test];
        if fr.iter().any(|f| !(0.0..=1.0).contains(f)) || (fr.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "split fractions {}:{}:{} must lie in [0, 1] and sum to 1",
                self.train, self.val, self.test
            )));
        }
        Ok(())
    }

    /// Subset sizes: train and validation are floored, test takes the rest.
    pub fn sizes(&self, n: usize) -> (usize, usize, usize) {
        let train = ((n as f64) * self.train).floor() as usize;
        let val = (((n as f64) * self.val).floor() as usize).min(n - train);
        (train, val, n - train - val)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Splits {
    pub train: Vec<Scenario>,
    pub val: Vec<Scenario>,
    pub test: Vec<Scenario>,
}

/// Seeded shuffle followed by a contiguous partition.
pub fn split_dataset(scenarios: &[Scenario], spec: &SplitSpec) -> Result<Splits> {
    spec.validate()?;
    let mut order: Vec<usize> = (0..scenarios.len()).collect();
    SeededRng::new(spec.seed).shuffle(&mut order);
    let (n_train, n_val, _) = spec.sizes(scenarios.len());
    let take = |r: std::ops::Range<usize>| order[r].iter().map(|&i| scenarios[i].clone()).collect();
    Ok(Splits {
        train: take(0..n_train),
        val: take(n_train..n_train + n_val),
        test: take(n_train + n_val..scenarios.len()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn large_dataset_sizes() {
        let s = SplitSpec::default();
        assert_eq!(s.sizes(10), (7, 1, 2));
        assert_eq!(s.sizes(13725), (9607, 1372, 2746));
        assert_eq!(s.sizes(0), (0, 0, 0));
    }

    #[test]
    fn rejects_bad_fractions() {
        let s = SplitSpec { train: 0.8, ..Default::default() };
        assert!(s.validate().is_err());
        assert!(split_dataset(&[], &s).is_err());
    }
}
