//! The step loop shared by every trainable stage: seeded batch sampling,
//! the exhaustive → hard-negative phase switch, NaN abort and Adam.

use std::fmt;

use rand::seq::SliceRandom;

use crate::diffcore::{name_key, stream_rng, AdamConfig, DistanceMode, Graph, ParamStore, Tensor, Var};
use crate::error::{param_err, Error, Result};
use crate::losses::{batch_distance_matrix, enumerate_exhaustive_triplets, mine_hard_negatives, TripletBatch};
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Phase {
    Exhaustive,
    HardNegative,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Phase::Exhaustive => "exhaustive",
            Phase::HardNegative => "hard-negative",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub loss: f64,
    pub phase: Phase,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Schedule {
    pub batch_size: usize,
    pub steps_exhaustive: usize,
    pub steps_hard_negative: usize,
    pub adam: AdamConfig,
    pub seed: u64,
}

impl Schedule {
    pub fn total_steps(&self) -> usize {
        self.steps_exhaustive + self.steps_hard_negative
    }

    pub fn phase(&self, step: usize) -> Phase {
        if step < self.steps_exhaustive {
            Phase::Exhaustive
        } else {
            Phase::HardNegative
        }
    }
}

/// Yields disjoint batches from seeded per-epoch permutations. The tail of
/// an epoch that cannot fill a batch is skipped.
#[derive(Clone, Debug)]
pub struct BatchSampler {
    n: usize,
    batch: usize,
    seed: u64,
    epoch: u64,
    order: Vec<usize>,
    pos: usize,
}

impl BatchSampler {
    pub fn new(n: usize, batch: usize, seed: u64) -> Result<Self> {
        if batch < 2 {
            return Err(param_err!("batch size must be ≥ 2, got {batch}"));
        }
        if batch > n {
            return Err(param_err!("batch size {batch} exceeds the {n} available samples"));
        }
        let mut s = Self {
            n,
            batch,
            seed,
            epoch: 0,
            order: Vec::new(),
            pos: 0,
        };
        s.reshuffle();
        Ok(s)
    }

    fn reshuffle(&mut self) {
        self.order = (0..self.n).collect();
        let mut rng = stream_rng(self.seed, name_key("epoch"), self.epoch);
        self.order.shuffle(&mut rng);
        self.pos = 0;
    }

    pub fn next_batch(&mut self) -> Vec<usize> {
        if self.pos + self.batch > self.n {
            self.epoch += 1;
            self.reshuffle();
        }
        let out = self.order[self.pos..self.pos + self.batch].to_vec();
        self.pos += self.batch;
        out
    }
}

/// Triplets for one step: every in-batch negative, or the hardest one
/// under the current embeddings.
pub fn select_triplets<T: Real>(
    phase: Phase,
    f_query: &Tensor<T>,
    f_ref: &Tensor<T>,
    mode: DistanceMode,
) -> Result<TripletBatch> {
    match phase {
        Phase::Exhaustive => enumerate_exhaustive_triplets(f_query.shape()[0]),
        Phase::HardNegative => mine_hard_negatives(&batch_distance_matrix(f_query, f_ref, mode)?),
    }
}

/// Runs `schedule` against `store`.
///
/// `step_fn` records the loss for one batch on a fresh graph. `observer`
/// is called after every update with the step index and the store.
pub fn run_schedule<T: Real, F, O>(
    store: &mut ParamStore<T>,
    n_samples: usize,
    schedule: &Schedule,
    mut step_fn: F,
    mut observer: O,
) -> Result<Vec<StepRecord>>
where
    F: FnMut(&mut Graph<T>, &ParamStore<T>, &[usize], Phase, usize) -> Result<Var>,
    O: FnMut(usize, &ParamStore<T>) -> Result<()>,
{
    let total = schedule.total_steps();
    let mut log = Vec::with_capacity(total);
    if total == 0 {
        return Ok(log);
    }
    let mut sampler = BatchSampler::new(n_samples, schedule.batch_size, schedule.seed)?;
    for step in 0..total {
        let phase = schedule.phase(step);
        let batch = sampler.next_batch();
        store.zero_grads();
        let mut g = Graph::new();
        let loss = step_fn(&mut g, store, &batch, phase, step)?;
        let value = g.value(loss).item().to_f64_lossy();
        if !value.is_finite() {
            return Err(Error::NumericAbort { step });
        }
        g.reverse_accumulate(loss, store)?;
        store.adam_step(&schedule.adam)?;
        log.push(StepRecord { step, loss: value, phase });
        observer(step, store)?;
    }
    Ok(log)
}
