//! Teacher-forced evaluation spread over a bounded worker pool.

use rayon::prelude::*;
use webnav_core::episode::{Policy, Trace};
use webnav_core::evaluator::{aggregate, evaluate_step, BenchReport, SplitError, SplitSpec, StepResult};

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error(transparent)]
    Split(#[from] SplitError),
    #[error("worker pool: {0}")]
    Pool(String),
}

/// Scores every step of every trace with at most `workers` concurrent
/// policy calls. Results do not depend on `workers` for a deterministic
/// policy; one worker keeps the calls in bench order.
pub fn evaluate_parallel<P>(
    traces: &[Trace],
    spec: Option<&SplitSpec>,
    policy: &P,
    workers: usize,
) -> Result<BenchReport, EvalError>
where
    P: Policy + Sync + ?Sized,
{
    let jobs: Vec<(usize, usize)> = traces
        .iter()
        .enumerate()
        .flat_map(|(i, t)| (0..t.steps.len()).map(move |j| (i, j)))
        .collect();
    let run = |&(i, j): &(usize, usize)| evaluate_step(&traces[i].task, &traces[i].steps[j], policy);

    let flat: Vec<StepResult> = if workers <= 1 {
        jobs.iter().map(run).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| EvalError::Pool(e.to_string()))?;
        pool.install(|| jobs.par_iter().map(run).collect())
    };

    let mut flat = flat.into_iter();
    let results: Vec<Vec<StepResult>> = traces
        .iter()
        .map(|t| flat.by_ref().take(t.steps.len()).collect())
        .collect();
    Ok(aggregate(traces, spec, policy.identity(), &results)?)
}
