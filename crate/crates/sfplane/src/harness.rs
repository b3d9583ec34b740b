//! Instrumented training runs and repetition batches.
//!
//! A run generates its dataset, initializes weights, and minimizes the SF
//! objective on the training split while an observer records, at every
//! accepted iterate, the binned `I[X;T]` and `H[T]` on the evaluation split
//! together with the objective and the Frobenius norm of the weight change.
//! `X` is binned over its empirical range, frozen once per run; `T` is binned
//! over the fixed `[0, 1]` range its invariants guarantee. Batches repeat the
//! run with derived seeds and can execute repetitions in parallel.

use ndarray::Array1;
#[cfg(feature = "parallel")]
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datagen::{self, make_simulation_data, RngSeed};
use crate::error::{Error, Result};
use crate::infotheory::{
    discretize, empirical_distribution, entropy, joint_counts, mutual_information, BinSpec,
};
use crate::optim::{self, OptimizerConfig, TerminationReason};
use crate::sf::{self, DataMatrix, WeightMatrix, DEFAULT_EPSILON};

/// One accepted iterate with its information-plane statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Training objective (sum of column l1 norms on the train split).
    pub objective: f64,
    /// Binned mutual information between the evaluation split and its
    /// representation, in bits.
    pub mi_xt: f64,
    /// Binned entropy of the representation, in bits.
    pub entropy_t: f64,
    /// Frobenius norm of the weight change from the previous iterate; 0 at
    /// iteration 0.
    pub weight_delta: f64,
}

/// The full record of one training run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunTrajectory {
    pub sim_id: u8,
    pub repetition: usize,
    pub seed: RngSeed,
    pub records: Vec<IterationRecord>,
    pub termination: TerminationReason,
}

/// Per-iteration means across runs, truncated at the shortest run.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateTrajectory {
    pub mean_mi: Vec<f64>,
    pub mean_entropy: Vec<f64>,
    pub mean_objective: Vec<f64>,
}

impl AggregateTrajectory {
    pub fn len(&self) -> usize {
        self.mean_mi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean_mi.is_empty()
    }
}

/// Which split the information statistics are computed on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalSplit {
    Test,
    Train,
}

/// Declarative description of one simulation batch.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationConfig {
    pub sim_id: u8,
    pub repetitions: usize,
    pub base_seed: RngSeed,
    pub bin_count: usize,
    pub epsilon: f64,
    pub optimizer: OptimizerConfig,
    pub eval_split: EvalSplit,
}

impl SimulationConfig {
    /// Paper defaults: 10 repetitions, 30 bins, statistics on the test split.
    pub fn new(sim_id: u8) -> Self {
        Self {
            sim_id,
            repetitions: 10,
            base_seed: RngSeed(42),
            bin_count: 30,
            epsilon: DEFAULT_EPSILON,
            optimizer: OptimizerConfig::default(),
            eval_split: EvalSplit::Test,
        }
    }

    pub fn validate(&self) -> Result<()> {
        datagen::simulation_dims(self.sim_id)?;
        if self.repetitions == 0 {
            return Err(Error::Config("repetitions must be at least 1".into()));
        }
        if self.bin_count < 2 {
            return Err(Error::Config(format!(
                "bin count must be at least 2, got {}",
                self.bin_count
            )));
        }
        if self.epsilon.is_nan() || self.epsilon <= 0.0 {
            return Err(Error::Config(format!(
                "epsilon must be positive, got {}",
                self.epsilon
            )));
        }
        self.optimizer.validate()
    }
}

/// Seed of one repetition, derived from the base seed so repetitions are
/// independent and the whole batch is reproducible.
pub fn run_seed(base: RngSeed, sim_id: u8, repetition: usize) -> RngSeed {
    base.derive(sim_id as u64).derive(repetition as u64)
}

/// Result of one instrumented training call.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub weights: WeightMatrix,
    pub records: Vec<IterationRecord>,
    pub termination: TerminationReason,
}

/// Trains an SF module on `train` and records information statistics of the
/// representation of `eval_data` at every accepted iterate.
pub fn train_sparse_filter(
    train: &DataMatrix,
    eval_data: &DataMatrix,
    features: usize,
    weight_seed: RngSeed,
    bin_count: usize,
    epsilon: f64,
    optimizer: &OptimizerConfig,
) -> Result<TrainOutcome> {
    let dims = train.dims();
    if eval_data.dims() != dims {
        return Err(Error::DimensionMismatch(format!(
            "train has {} dims, eval split has {}",
            dims,
            eval_data.dims()
        )));
    }
    let w0 = sf::init_weights(features, dims, weight_seed)?;

    // X bins are frozen from the evaluation split once per run; T has the
    // known [0, 1] range.
    let x_spec = BinSpec::from_data(eval_data.values(), bin_count)?;
    let x_binned = discretize(eval_data.values(), &x_spec)?;
    let t_spec = BinSpec::fixed(features, bin_count, 0.0, 1.0)?;

    let mut records: Vec<IterationRecord> = Vec::new();
    let mut prev_weights: Option<WeightMatrix> = None;
    let mut observer_error: Option<Error> = None;

    let result = optim::minimize(
        |flat: &Array1<f64>| {
            let w = WeightMatrix::from_flat(features, dims, flat)?;
            let eval = sf::sf_objective_and_gradient(&w, train, epsilon)?;
            Ok((eval.value, Array1::from_iter(eval.gradient.iter().copied())))
        },
        &w0.to_flat(),
        optimizer,
        |event| {
            if observer_error.is_some() {
                return;
            }
            let stats = (|| -> Result<IterationRecord> {
                let w = WeightMatrix::from_flat(features, dims, event.parameters)?;
                let t = sf::sf_forward(&w, eval_data, epsilon)?;
                let t_binned = discretize(t.values(), &t_spec)?;
                let mi_xt = mutual_information(&joint_counts(&x_binned, &t_binned)?);
                let entropy_t = entropy(&empirical_distribution(&t_binned)?);
                let weight_delta = match prev_weights.as_ref() {
                    Some(prev) => (w.values() - prev.values()).mapv(|v| v * v).sum().sqrt(),
                    None => 0.0,
                };
                prev_weights = Some(w);
                Ok(IterationRecord {
                    iteration: event.iteration,
                    objective: event.objective,
                    mi_xt,
                    entropy_t,
                    weight_delta,
                })
            })();
            match stats {
                Ok(record) => records.push(record),
                Err(e) => observer_error = Some(e),
            }
        },
    )?;
    if let Some(e) = observer_error {
        return Err(e);
    }

    let weights = WeightMatrix::from_flat(features, dims, &result.x)?;
    Ok(TrainOutcome {
        weights,
        records,
        termination: result.reason,
    })
}

/// Executes one repetition of a simulation.
pub fn run_single(config: &SimulationConfig, repetition: usize) -> Result<RunTrajectory> {
    config.validate()?;
    let seed = run_seed(config.base_seed, config.sim_id, repetition);
    let (dataset, _input_dim, output_dim) = make_simulation_data(config.sim_id, seed)?;
    let eval_data = match config.eval_split {
        EvalSplit::Test => &dataset.test,
        EvalSplit::Train => &dataset.train,
    };
    let outcome = train_sparse_filter(
        &dataset.train,
        eval_data,
        output_dim,
        seed.derive(datagen::stream::WEIGHTS),
        config.bin_count,
        config.epsilon,
        &config.optimizer,
    )
    .map_err(|e| match e {
        Error::Numerical { iteration, context } => Error::Numerical {
            iteration,
            context: format!("sim {} repetition {repetition}: {context}", config.sim_id),
        },
        other => other,
    })?;
    Ok(RunTrajectory {
        sim_id: config.sim_id,
        repetition,
        seed,
        records: outcome.records,
        termination: outcome.termination,
    })
}

/// Runs every repetition of the batch. With the `parallel` feature the
/// repetitions execute on the rayon pool; results are ordered by repetition
/// index either way.
pub fn run_batch(config: &SimulationConfig) -> Result<Vec<RunTrajectory>> {
    config.validate()?;
    #[cfg(feature = "parallel")]
    {
        let results: Vec<Result<RunTrajectory>> = (0..config.repetitions)
            .into_par_iter()
            .map(|repetition| run_single(config, repetition))
            .collect();
        collect_batch(results)
    }
    #[cfg(not(feature = "parallel"))]
    {
        run_batch_serial(config)
    }
}

/// Sequential reference path for [`run_batch`]; always available, used by the
/// benches and the parallel-equivalence tests.
pub fn run_batch_serial(config: &SimulationConfig) -> Result<Vec<RunTrajectory>> {
    config.validate()?;
    let results: Vec<Result<RunTrajectory>> = (0..config.repetitions)
        .map(|repetition| run_single(config, repetition))
        .collect();
    collect_batch(results)
}

fn collect_batch(results: Vec<Result<RunTrajectory>>) -> Result<Vec<RunTrajectory>> {
    let mut out = Vec::with_capacity(results.len());
    for (repetition, result) in results.into_iter().enumerate() {
        match result {
            Ok(trajectory) => out.push(trajectory),
            Err(source) => {
                return Err(Error::RunFailed {
                    repetition,
                    source: Box::new(source),
                })
            }
        }
    }
    Ok(out)
}

/// Per-iteration arithmetic means across runs, truncated at the shortest
/// run's length.
pub fn aggregate(runs: &[RunTrajectory]) -> Result<AggregateTrajectory> {
    if runs.is_empty() {
        return Err(Error::Config("cannot aggregate zero runs".into()));
    }
    let len = runs.iter().map(|r| r.records.len()).min().unwrap_or(0);
    let n = runs.len() as f64;
    let mut mean_mi = vec![0.0; len];
    let mut mean_entropy = vec![0.0; len];
    let mut mean_objective = vec![0.0; len];
    for run in runs {
        for (i, record) in run.records.iter().take(len).enumerate() {
            mean_mi[i] += record.mi_xt;
            mean_entropy[i] += record.entropy_t;
            mean_objective[i] += record.objective;
        }
    }
    for i in 0..len {
        mean_mi[i] /= n;
        mean_entropy[i] /= n;
        mean_objective[i] /= n;
    }
    Ok(AggregateTrajectory {
        mean_mi,
        mean_entropy,
        mean_objective,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick_config(sim_id: u8) -> SimulationConfig {
        let mut config = SimulationConfig::new(sim_id);
        config.repetitions = 3;
        config.optimizer.max_iterations = 8;
        config
    }

    fn synthetic_run(mi: Vec<f64>, sim_id: u8, repetition: usize) -> RunTrajectory {
        let records = mi
            .iter()
            .enumerate()
            .map(|(i, &m)| IterationRecord {
                iteration: i,
                objective: 10.0 - i as f64,
                mi_xt: m,
                entropy_t: m + 1.0,
                weight_delta: if i == 0 { 0.0 } else { 0.1 },
            })
            .collect();
        RunTrajectory {
            sim_id,
            repetition,
            seed: RngSeed(0),
            records,
            termination: TerminationReason::MaxIterations,
        }
    }

    #[test]
    fn aggregate_truncates_to_shortest_run() {
        let runs = vec![
            synthetic_run(vec![0.0; 5], 1, 0),
            synthetic_run(vec![0.0; 7], 1, 1),
            synthetic_run(vec![0.0; 6], 1, 2),
        ];
        let agg = aggregate(&runs).unwrap();
        assert_eq!(agg.len(), 5);
    }

    #[test]
    fn aggregate_of_identical_runs_is_any_single_run() {
        let runs = vec![
            synthetic_run(vec![0.5, 0.7, 0.9], 1, 0),
            synthetic_run(vec![0.5, 0.7, 0.9], 1, 1),
            synthetic_run(vec![0.5, 0.7, 0.9], 1, 2),
        ];
        let agg = aggregate(&runs).unwrap();
        // sum(3x)/3 can round in the last ulp.
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-14 * b.abs().max(1.0);
        for (i, record) in runs[0].records.iter().enumerate() {
            assert!(close(agg.mean_mi[i], record.mi_xt));
            assert!(close(agg.mean_entropy[i], record.entropy_t));
            assert!(close(agg.mean_objective[i], record.objective));
        }
    }

    #[test]
    fn aggregate_means_are_arithmetic() {
        let runs = vec![
            synthetic_run(vec![0.0, 1.0], 1, 0),
            synthetic_run(vec![0.0, 3.0], 1, 1),
        ];
        let agg = aggregate(&runs).unwrap();
        assert_eq!(agg.mean_mi, vec![0.0, 2.0]);
    }

    #[test]
    fn aggregate_of_a_single_run_is_that_run() {
        let runs = vec![synthetic_run(vec![0.1, 0.2, 0.3], 2, 0)];
        let agg = aggregate(&runs).unwrap();
        assert_eq!(agg.len(), 3);
        assert_eq!(agg.mean_mi, vec![0.1, 0.2, 0.3]);
    }

    #[test]
    fn aggregate_rejects_empty_input() {
        assert!(matches!(aggregate(&[]), Err(Error::Config(_))));
    }

    #[test]
    fn run_single_is_deterministic() {
        let config = quick_config(1);
        let a = run_single(&config, 0).unwrap();
        let b = run_single(&config, 0).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn first_record_exists_with_zero_weight_delta() {
        let config = quick_config(1);
        let run = run_single(&config, 0).unwrap();
        assert!(!run.records.is_empty());
        assert_eq!(run.records[0].iteration, 0);
        assert_eq!(run.records[0].weight_delta, 0.0);
        for record in &run.records[1..] {
            assert!(record.weight_delta >= 0.0);
        }
    }

    #[test]
    fn records_satisfy_information_bounds_and_monotone_objective() {
        for sim_id in [1u8, 2] {
            let config = quick_config(sim_id);
            let (_, output_dim) = datagen::simulation_dims(sim_id).unwrap();
            let cap = output_dim as f64 * (config.bin_count as f64).log2();
            let run = run_single(&config, 0).unwrap();
            for record in &run.records {
                assert!(record.mi_xt >= 0.0);
                assert!(record.entropy_t >= 0.0);
                assert!(record.mi_xt <= record.entropy_t + 1e-9);
                assert!(record.entropy_t <= cap + 1e-9);
            }
            for pair in run.records.windows(2) {
                assert!(pair[1].objective <= pair[0].objective);
            }
        }
    }

    #[test]
    fn record_iterations_are_consecutive() {
        let run = run_single(&quick_config(1), 1).unwrap();
        for (i, record) in run.records.iter().enumerate() {
            assert_eq!(record.iteration, i);
        }
    }

    #[test]
    fn batch_produces_one_trajectory_per_repetition() {
        let config = quick_config(1);
        let runs = run_batch(&config).unwrap();
        assert_eq!(runs.len(), 3);
        for (i, run) in runs.iter().enumerate() {
            assert_eq!(run.repetition, i);
        }
        // A one-repetition batch is exactly run_single(.., 0).
        let mut single = config.clone();
        single.repetitions = 1;
        let batch = run_batch(&single).unwrap();
        assert_eq!(batch[0], run_single(&single, 0).unwrap());
    }

    #[cfg(feature = "parallel")]
    #[test]
    fn serial_and_parallel_batches_are_identical() {
        let config = quick_config(2);
        let parallel = run_batch(&config).unwrap();
        let serial = run_batch_serial(&config).unwrap();
        assert_eq!(parallel, serial);
    }

    #[test]
    fn gradient_descent_runs_complete_and_record_every_iterate() {
        let mut config = quick_config(1);
        config.optimizer.method = crate::optim::Method::Gd;
        config.optimizer.step_size = 1e-4;
        config.optimizer.max_iterations = 12;
        let run = run_single(&config, 0).unwrap();
        assert!(!run.records.is_empty());
        for (i, record) in run.records.iter().enumerate() {
            assert_eq!(record.iteration, i);
            assert!(record.objective.is_finite());
        }
    }

    #[test]
    fn repetition_seeds_differ() {
        let base = RngSeed(42);
        assert_ne!(run_seed(base, 1, 0), run_seed(base, 1, 1));
        assert_ne!(run_seed(base, 1, 0), run_seed(base, 2, 0));
    }

    #[test]
    fn invalid_configs_are_rejected_before_any_work() {
        let mut config = quick_config(1);
        config.sim_id = 9;
        assert!(matches!(run_batch(&config), Err(Error::Config(_))));

        let mut config = quick_config(1);
        config.repetitions = 0;
        assert!(matches!(run_batch(&config), Err(Error::Config(_))));

        let mut config = quick_config(1);
        config.bin_count = 1;
        assert!(matches!(run_single(&config, 0), Err(Error::Config(_))));
    }
}
