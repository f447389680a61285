//! Random hyperparameter search.

use rand::seq::index::sample;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{EpochRecord, Optimizer, TrainConfig};
use crate::seed;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchSpace {
    pub optimizers: Vec<Optimizer>,
    pub learning_rates: Vec<f64>,
    pub batch_sizes: Vec<usize>,
    /// Recorded with each result; has no effect on training.
    pub distillation: Vec<bool>,
    pub trials_per_config: usize,
    pub epochs_per_trial: usize,
    pub budget: usize,
}

impl Default for SearchSpace {
    fn default() -> Self {
        Self {
            optimizers: Optimizer::ALL.to_vec(),
            learning_rates: vec![5e-3, 2e-3, 5e-4, 2e-4, 5e-5, 2e-5],
            batch_sizes: vec![16, 32, 64],
            distillation: vec![true, false],
            trials_per_config: 2,
            epochs_per_trial: 3,
            budget: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchPoint {
    pub optimizer: Optimizer,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub distillation: bool,
}

impl SearchSpace {
    pub fn validate(&self) -> Result<()> {
        let empty = [
            ("optimizers", self.optimizers.is_empty()),
            ("learning_rates", self.learning_rates.is_empty()),
            ("batch_sizes", self.batch_sizes.is_empty()),
            ("distillation", self.distillation.is_empty()),
        ];
        for (name, is_empty) in empty {
            if is_empty {
                return Err(Error::Config(format!("search space list '{name}' is empty")));
            }
        }
        if self.budget == 0 || self.trials_per_config == 0 || self.epochs_per_trial == 0 {
            return Err(Error::Config(
                "budget, trials_per_config and epochs_per_trial must be at least 1".into(),
            ));
        }
        if self.batch_sizes.contains(&0) || self.learning_rates.iter().any(|&lr| !(lr >= 0.0)) {
            return Err(Error::Config("batch sizes must be ≥ 1 and learning rates ≥ 0".into()));
        }
        Ok(())
    }

    /// Every combination, optimizer-major.
    pub fn points(&self) -> Vec<SearchPoint> {
        let mut out = Vec::new();
        for &optimizer in &self.optimizers {
            for &learning_rate in &self.learning_rates {
                for &batch_size in &self.batch_sizes {
                    for &distillation in &self.distillation {
                        out.push(SearchPoint {
                            optimizer,
                            learning_rate,
                            batch_size,
                            distillation,
                        });
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub seed: u64,
    pub val_accuracy: Option<f64>,
    pub val_macro_f1: f64,
    pub history: Vec<EpochRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeaderboardEntry {
    /// Position in sampling order.
    pub order: usize,
    pub config: SearchPoint,
    pub trials: Vec<TrialResult>,
    pub mean_macro_f1: f64,
    pub std_macro_f1: f64,
    pub mean_accuracy: f64,
    pub std_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Leaderboard {
    pub seed: u64,
    pub space: SearchSpace,
    pub entries: Vec<LeaderboardEntry>,
}

impl Leaderboard {
    /// Sorts by mean macro-F1, then mean accuracy (both descending), then
    /// sampling order.
    pub fn sort(&mut self) {
        self.entries.sort_by(|a, b| {
            b.mean_macro_f1
                .total_cmp(&a.mean_macro_f1)
                .then(b.mean_accuracy.total_cmp(&a.mean_accuracy))
                .then(a.order.cmp(&b.order))
        });
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("serializable leaderboard")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::data("leaderboard", e.to_string()))
    }
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Samples `space.budget` configurations (without replacement while the space
/// is large enough, otherwise with replacement) and runs each one
/// `trials_per_config` times through `run_trial`.
///
/// `run_trial` receives the base config with the sampled values and a trial
/// seed filled in, and returns that trial's history; the last record's
/// validation metrics score the trial.
pub fn hyperparam_search<F>(space: &SearchSpace, base: &TrainConfig, seed: u64, mut run_trial: F) -> Result<Leaderboard>
where
    F: FnMut(&TrainConfig, &SearchPoint) -> Result<Vec<EpochRecord>>,
{
    space.validate()?;
    let points = space.points();
    let search_seed = seed::derive(seed, seed::ns::SEARCH);
    let mut rng = seed::rng(search_seed);
    let chosen: Vec<usize> = if space.budget <= points.len() {
        sample(&mut rng, points.len(), space.budget).into_vec()
    } else {
        (0..space.budget).map(|_| rng.random_range(0..points.len())).collect()
    };

    let mut entries = Vec::with_capacity(chosen.len());
    for (order, &pi) in chosen.iter().enumerate() {
        let point = &points[pi];
        let mut trials = Vec::with_capacity(space.trials_per_config);
        for t in 0..space.trials_per_config {
            let trial_seed = seed::derive_index(search_seed, (order * space.trials_per_config + t) as u64);
            let config = TrainConfig {
                optimizer: point.optimizer,
                learning_rate: point.learning_rate,
                batch_size: point.batch_size,
                epochs: space.epochs_per_trial,
                seed: trial_seed,
                ..base.clone()
            };
            log::info!(
                "config {order} trial {t}: {} lr={} batch={} distillation={}",
                point.optimizer,
                point.learning_rate,
                point.batch_size,
                point.distillation
            );
            let history = run_trial(&config, point)?;
            let last = history
                .last()
                .ok_or_else(|| Error::Numeric("trial produced an empty history".into()))?;
            trials.push(TrialResult {
                seed: trial_seed,
                val_accuracy: last.val_accuracy,
                val_macro_f1: last.val_macro_f1,
                history,
            });
        }
        let f1s: Vec<f64> = trials.iter().map(|t| t.val_macro_f1).collect();
        let accs: Vec<f64> = trials.iter().map(|t| t.val_accuracy.unwrap_or(0.0)).collect();
        let (mean_macro_f1, std_macro_f1) = mean_std(&f1s);
        let (mean_accuracy, std_accuracy) = mean_std(&accs);
        entries.push(LeaderboardEntry {
            order,
            config: point.clone(),
            trials,
            mean_macro_f1,
            std_macro_f1,
            mean_accuracy,
            std_accuracy,
        });
    }
    let mut board = Leaderboard {
        seed,
        space: space.clone(),
        entries,
    };
    board.sort();
    Ok(board)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fake(config: &TrainConfig, _: &SearchPoint) -> Result<Vec<EpochRecord>> {
        // score depends on lr and seed only
        let f1 = 1.0 - (config.learning_rate.log10() + 3.5).abs() / 10.0 + (config.seed % 7) as f64 * 1e-4;
        Ok(vec![EpochRecord {
            epoch: 1,
            train_loss: 0.5,
            val_accuracy: Some(f1),
            val_macro_f1: f1,
        }])
    }

    #[test]
    fn default_space_size() {
        assert_eq!(SearchSpace::default().points().len(), 3 * 6 * 3 * 2);
    }

    #[test]
    fn budget_one() {
        let space = SearchSpace {
            budget: 1,
            ..Default::default()
        };
        let board = hyperparam_search(&space, &TrainConfig::default(), 3, fake).unwrap();
        assert_eq!(board.entries.len(), 1);
        assert_eq!(board.entries[0].trials.len(), 2);
    }

    #[test]
    fn trial_seeds_differ_and_runs_repeat() {
        let space = SearchSpace {
            optimizers: vec![Optimizer::AdamW],
            learning_rates: vec![5e-5],
            batch_sizes: vec![32],
            distillation: vec![false],
            budget: 1,
            ..Default::default()
        };
        let a = hyperparam_search(&space, &TrainConfig::default(), 9, fake).unwrap();
        let b = hyperparam_search(&space, &TrainConfig::default(), 9, fake).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.entries[0].trials[0].seed, a.entries[0].trials[1].seed);
    }

    #[test]
    fn sampling_without_replacement_then_with() {
        let space = SearchSpace {
            optimizers: vec![Optimizer::Adam],
            batch_sizes: vec![32],
            distillation: vec![false],
            budget: 6,
            trials_per_config: 1,
            ..Default::default()
        };
        let board = hyperparam_search(&space, &TrainConfig::default(), 1, fake).unwrap();
        let mut lrs: Vec<f64> = board.entries.iter().map(|e| e.config.learning_rate).collect();
        lrs.sort_by(f64::total_cmp);
        lrs.dedup();
        assert_eq!(lrs.len(), 6);
        let bigger = SearchSpace { budget: 9, ..space };
        assert_eq!(hyperparam_search(&bigger, &TrainConfig::default(), 1, fake).unwrap().entries.len(), 9);
    }

    #[test]
    fn leaderboard_is_sorted_and_round_trips() {
        let space = SearchSpace {
            budget: 8,
            ..Default::default()
        };
        let board = hyperparam_search(&space, &TrainConfig::default(), 5, fake).unwrap();
        for w in board.entries.windows(2) {
            assert!(w[0].mean_macro_f1 >= w[1].mean_macro_f1);
        }
        assert_eq!(Leaderboard::from_json(&board.to_json()).unwrap(), board);
    }

    #[test]
    fn empty_list_rejected() {
        let space = SearchSpace {
            learning_rates: vec![],
            ..Default::default()
        };
        assert!(hyperparam_search(&space, &TrainConfig::default(), 0, fake).is_err());
    }
}
