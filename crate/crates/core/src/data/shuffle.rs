use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::rng::{derive_seed, Rng};

const ORDER_STREAM: u64 = 0x006f_7264_6572; // "order"

/// Repeated-shuffle benchmark protocol: `n_shuffles` data orders, each trained
/// `n_iterations` times with different seeds.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShufflePlan {
    pub n_shuffles: usize,
    pub n_iterations: usize,
    pub base_seed: u64,
}

impl Default for ShufflePlan {
    fn default() -> Self {
        ShufflePlan {
            n_shuffles: 4,
            n_iterations: 5,
            base_seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ShuffleRun {
    pub shuffle: usize,
    pub iteration: usize,
    /// Permutation of dataset indices shared by every iteration of this shuffle.
    pub order: Vec<usize>,
    pub seed: u64,
}

impl ShufflePlan {
    pub fn validate(&self) -> Result<()> {
        if self.n_shuffles == 0 || self.n_iterations == 0 {
            return Err(Error::Config(format!(
                "shuffle plan needs at least one shuffle and one iteration, got {}x{}",
                self.n_shuffles, self.n_iterations
            )));
        }
        Ok(())
    }

    pub fn order_seed(&self, shuffle: usize) -> u64 {
        derive_seed(self.base_seed, &[ORDER_STREAM, shuffle as u64])
    }

    pub fn run_seed(&self, shuffle: usize, iteration: usize) -> u64 {
        derive_seed(self.base_seed, &[shuffle as u64, iteration as u64])
    }

    pub fn run_count(&self) -> usize {
        self.n_shuffles * self.n_iterations
    }
}

/// Expands a plan into its runs, shuffle-major.
pub fn make_shuffle_plan(plan: &ShufflePlan, dataset_len: usize) -> Result<Vec<ShuffleRun>> {
    plan.validate()?;
    let mut runs = Vec::with_capacity(plan.run_count());
    for shuffle in 0..plan.n_shuffles {
        let order = Rng::new(plan.order_seed(shuffle)).permutation(dataset_len);
        for iteration in 0..plan.n_iterations {
            runs.push(ShuffleRun {
                shuffle,
                iteration,
                order: order.clone(),
                seed: plan.run_seed(shuffle, iteration),
            });
        }
    }
    Ok(runs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_plan_has_twenty_runs() {
        assert_eq!(make_shuffle_plan(&ShufflePlan::default(), 30).unwrap().len(), 20);
    }

    #[test]
    fn iterations_share_order_but_not_seed() {
        let runs = make_shuffle_plan(&ShufflePlan::default(), 50).unwrap();
        assert_eq!(runs[0].order, runs[4].order);
        assert_ne!(runs[0].seed, runs[1].seed);
        assert_ne!(runs[0].order, runs[5].order);
    }

    #[test]
    fn single_run_plan_is_a_seeded_permutation() {
        let plan = ShufflePlan {
            n_shuffles: 1,
            n_iterations: 1,
            base_seed: 17,
        };
        let runs = make_shuffle_plan(&plan, 10).unwrap();
        assert_eq!(runs.len(), 1);
        assert_eq!(runs[0].order, Rng::new(plan.order_seed(0)).permutation(10));
        assert_eq!(runs, make_shuffle_plan(&plan, 10).unwrap());
    }

    #[test]
    fn empty_plan_is_rejected() {
        let plan = ShufflePlan {
            n_shuffles: 0,
            ..ShufflePlan::default()
        };
        assert!(make_shuffle_plan(&plan, 10).is_err());
    }
}
