//! Trial execution, sequential or on a rayon pool.
//!
//! Both paths return results in plan order, so logs and maps do not depend
//! on the worker count.

use crate::classify::{classify_session, FaultObservation, NominalProfile};
#[cfg(feature = "parallel")]
use crate::error::Error;
use crate::error::Result;
use crate::protocol::parse_session;
use crate::pulse::PulseParameters;
use crate::target::{RawObservation, TargetBackend};

use super::plan::PlannedTrial;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    Sequential,
    /// `workers == 0` uses one worker per available core. Runs sequentially
    /// when the `parallel` feature is disabled.
    Parallel {
        workers: usize,
    },
    /// All available cores.
    #[default]
    Auto,
}

impl Execution {
    pub fn from_workers(workers: usize) -> Self {
        match workers {
            1 => Execution::Sequential,
            n => Execution::Parallel { workers: n },
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrialResult {
    pub raw: RawObservation,
    pub classification: FaultObservation,
}

pub fn execute_trial<B: TargetBackend>(
    backend: &mut B,
    trial: &PlannedTrial,
    params: &[PulseParameters],
    nominal: &NominalProfile,
) -> TrialResult {
    backend.reset();
    let raw = backend.inject(&trial.coordinate, &params[trial.param_index], trial.trial_seed);
    let classification = classify_session(&parse_session(&raw.output_lines, raw.responded), nominal);
    TrialResult { raw, classification }
}

fn run_sequential<B: TargetBackend + Clone>(
    backend: &B,
    trials: &[PlannedTrial],
    params: &[PulseParameters],
    nominal: &NominalProfile,
) -> Vec<TrialResult> {
    let mut b = backend.clone();
    trials.iter().map(|t| execute_trial(&mut b, t, params, nominal)).collect()
}

/// Runs a batch and returns results in the order of `trials`.
pub struct Executor {
    #[cfg(feature = "parallel")]
    pool: Option<rayon::ThreadPool>,
}

impl Executor {
    pub fn new(execution: Execution) -> Result<Self> {
        #[cfg(feature = "parallel")]
        {
            let workers = match execution {
                Execution::Sequential => return Ok(Executor { pool: None }),
                Execution::Parallel { workers } => workers,
                Execution::Auto => 0,
            };
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(workers)
                .build()
                .map_err(|e| Error::domain(format!("thread pool: {e}")))?;
            Ok(Executor { pool: Some(pool) })
        }
        #[cfg(not(feature = "parallel"))]
        {
            let _ = execution;
            Ok(Executor {})
        }
    }

    pub fn is_parallel(&self) -> bool {
        #[cfg(feature = "parallel")]
        {
            self.pool.is_some()
        }
        #[cfg(not(feature = "parallel"))]
        {
            false
        }
    }

    pub fn run<B>(
        &self,
        backend: &B,
        trials: &[PlannedTrial],
        params: &[PulseParameters],
        nominal: &NominalProfile,
    ) -> Vec<TrialResult>
    where
        B: TargetBackend + Clone + Send + Sync,
    {
        #[cfg(feature = "parallel")]
        if let Some(pool) = &self.pool {
            use rayon::prelude::*;
            return pool.install(|| {
                trials.par_iter().map_init(|| backend.clone(), |b, t| execute_trial(b, t, params, nominal)).collect()
            });
        }
        run_sequential(backend, trials, params, nominal)
    }
}
