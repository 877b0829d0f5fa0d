//! Cross-entropy method action search over the tanh-squashed box `(-1, 1)^d`.
//!
//! Each problem keeps an independent diagonal Gaussian over pre-tanh actions,
//! starting at `N(0, 1)`. Every iteration draws `samples` candidates, squashes
//! them with `tanh`, scores the squashed actions, and refits mean and
//! population variance to the top `elites` in pre-tanh space. The answer is
//! the best-scoring squashed sample of the final iteration.
//!
//! Many problems (one per state in a minibatch) can be solved together; the
//! scoring closure then sees one `[problems · samples × d]` matrix per
//! iteration, so a full solve costs exactly `iterations` score calls.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::nn::{concat_columns, DenseNet};

/// Pre-tanh samples are clamped to this magnitude so `tanh` stays strictly
/// inside the open box in f64.
const PRE_TANH_LIMIT: f64 = 18.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CemConfig {
    pub iterations: usize,
    pub samples: usize,
    pub elites: usize,
    pub action_dim: usize,
    pub variance_floor: f64,
}

impl CemConfig {
    /// 2 iterations, 64 samples, 6 elites.
    pub fn new(action_dim: usize) -> Self {
        CemConfig {
            iterations: 2,
            samples: 64,
            elites: 6,
            action_dim,
            variance_floor: 1e-6,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::config("cem_iterations", "must be at least 1"));
        }
        if self.samples == 0 {
            return Err(Error::config("cem_samples", "must be at least 1"));
        }
        if self.elites == 0 || self.elites > self.samples {
            return Err(Error::config(
                "cem_elites",
                format!(
                    "must lie in 1..={} (the sample count), got {}",
                    self.samples, self.elites
                ),
            ));
        }
        if self.action_dim == 0 {
            return Err(Error::config("action_dim", "must be at least 1"));
        }
        if !(self.variance_floor >= 0.0 && self.variance_floor.is_finite()) {
            return Err(Error::config(
                "cem_variance_floor",
                "must be finite and non-negative",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Proposal {
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
}

impl Proposal {
    pub fn standard(dim: usize) -> Self {
        Proposal {
            mean: vec![0.0; dim],
            variance: vec![1.0; dim],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CemSolution {
    pub action: Vec<f64>,
    pub value: f64,
}

/// What one iteration of a single-problem solve did.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationTrace {
    pub best_elite_score: f64,
    /// Proposal after refitting to this iteration's elites.
    pub proposal: Proposal,
}

/// Maximizes `score` over `(-1, 1)^d`. `score` receives `[samples × d]`
/// squashed actions and returns one value per row.
pub fn cem_argmax<F, R>(score: F, config: &CemConfig, rng: &mut R) -> Result<CemSolution>
where
    F: FnMut(ArrayView2<f64>) -> Result<Array1<f64>>,
    R: Rng + ?Sized,
{
    let (mut sols, _) = solve(1, score, config, rng, false)?;
    Ok(sols.pop().unwrap())
}

pub fn cem_argmax_traced<F, R>(
    score: F,
    config: &CemConfig,
    rng: &mut R,
) -> Result<(CemSolution, Vec<IterationTrace>)>
where
    F: FnMut(ArrayView2<f64>) -> Result<Array1<f64>>,
    R: Rng + ?Sized,
{
    let (mut sols, trace) = solve(1, score, config, rng, true)?;
    Ok((sols.pop().unwrap(), trace))
}

/// Solves `problems` independent searches with one score call per iteration.
/// Rows `p * samples .. (p + 1) * samples` of each scored batch belong to
/// problem `p`.
pub fn cem_argmax_batch<F, R>(
    problems: usize,
    score: F,
    config: &CemConfig,
    rng: &mut R,
) -> Result<Vec<CemSolution>>
where
    F: FnMut(ArrayView2<f64>) -> Result<Array1<f64>>,
    R: Rng + ?Sized,
{
    Ok(solve(problems, score, config, rng, false)?.0)
}

fn solve<F, R>(
    problems: usize,
    mut score: F,
    config: &CemConfig,
    rng: &mut R,
    trace: bool,
) -> Result<(Vec<CemSolution>, Vec<IterationTrace>)>
where
    F: FnMut(ArrayView2<f64>) -> Result<Array1<f64>>,
    R: Rng + ?Sized,
{
    config.validate()?;
    let CemConfig {
        iterations,
        samples: n,
        elites: k,
        action_dim: d,
        variance_floor,
    } = *config;
    let mut proposals = vec![Proposal::standard(d); problems];
    let mut best = vec![
        CemSolution {
            action: vec![0.0; d],
            value: f64::NEG_INFINITY
        };
        problems
    ];
    let mut traces = Vec::new();
    let mut order: Vec<usize> = Vec::with_capacity(n);

    for _ in 0..iterations {
        let mut raw = Array2::<f64>::zeros((problems * n, d));
        let mut squashed = Array2::<f64>::zeros((problems * n, d));
        {
            let raw_flat = raw.as_slice_mut().expect("standard layout");
            let sq_flat = squashed.as_slice_mut().expect("standard layout");
            for (p, prop) in proposals.iter().enumerate() {
                let std: Vec<f64> = prop.variance.iter().map(|v| v.sqrt()).collect();
                let rows = p * n * d..(p + 1) * n * d;
                for (row, sq) in raw_flat[rows.clone()]
                    .chunks_exact_mut(d)
                    .zip(sq_flat[rows].chunks_exact_mut(d))
                {
                    for j in 0..d {
                        let z: f64 = StandardNormal.sample(rng);
                        let x = (prop.mean[j] + std[j] * z).clamp(-PRE_TANH_LIMIT, PRE_TANH_LIMIT);
                        row[j] = x;
                        sq[j] = x.tanh();
                    }
                }
            }
        }
        let scores = score(squashed.view())?;
        if scores.len() != problems * n {
            return Err(Error::Shape(format!(
                "score returned {} values for {} actions",
                scores.len(),
                problems * n
            )));
        }
        if let Some(index) = scores.iter().position(|s| !s.is_finite()) {
            return Err(Error::NonFiniteScore {
                index,
                value: scores[index],
                action: squashed.row(index).to_vec(),
            });
        }

        for (p, prop) in proposals.iter_mut().enumerate() {
            let base = p * n;
            order.clear();
            order.extend(0..n);
            // descending score, equal scores in sample-index order
            let rank = |&a: &usize, &b: &usize| {
                scores[base + b]
                    .total_cmp(&scores[base + a])
                    .then(a.cmp(&b))
            };
            if k < n {
                order.select_nth_unstable_by(k, rank);
            }
            order[..k].sort_unstable_by(rank);
            let elites = &order[..k];

            let top = base + elites[0];
            best[p] = CemSolution {
                action: squashed.row(top).to_vec(),
                value: scores[top],
            };

            for j in 0..d {
                let mean = elites.iter().map(|&i| raw[[base + i, j]]).sum::<f64>() / k as f64;
                let var = elites
                    .iter()
                    .map(|&i| (raw[[base + i, j]] - mean).powi(2))
                    .sum::<f64>()
                    / k as f64;
                prop.mean[j] = mean;
                prop.variance[j] = var.max(variance_floor);
            }
            if trace {
                traces.push(IterationTrace {
                    best_elite_score: scores[top],
                    proposal: prop.clone(),
                });
            }
        }
    }
    Ok((best, traces))
}

/// A Q-function evaluated on row-aligned state and action batches.
pub trait QFunction {
    fn q_values(&self, states: ArrayView2<f64>, actions: ArrayView2<f64>) -> Result<Array1<f64>>;
}

/// Critic networks take `[state | action]` rows and emit one column.
impl QFunction for DenseNet {
    fn q_values(&self, states: ArrayView2<f64>, actions: ArrayView2<f64>) -> Result<Array1<f64>> {
        let input = concat_columns(states, actions)?;
        let out = self.forward(input.view())?;
        Ok(out.index_axis_move(Axis(1), 0))
    }
}

/// Adapter for closures `(states, actions) -> values`.
pub struct FnQ<F>(pub F);

impl<F> QFunction for FnQ<F>
where
    F: Fn(ArrayView2<f64>, ArrayView2<f64>) -> Array1<f64>,
{
    fn q_values(&self, states: ArrayView2<f64>, actions: ArrayView2<f64>) -> Result<Array1<f64>> {
        Ok((self.0)(states, actions))
    }
}

/// CEM policy for one state: the state is replicated across the sample batch
/// so each iteration is a single Q evaluation.
pub fn cem_policy<Q, R>(state: &[f64], q: &Q, config: &CemConfig, rng: &mut R) -> Result<Vec<f64>>
where
    Q: QFunction + ?Sized,
    R: Rng + ?Sized,
{
    let states = ndarray::aview1(state).insert_axis(Axis(0));
    let actions = cem_policy_batch(states, q, config, rng)?;
    Ok(actions.row(0).to_vec())
}

/// CEM policy for every row of `states`, returning `[rows × d]` actions.
pub fn cem_policy_batch<Q, R>(
    states: ArrayView2<f64>,
    q: &Q,
    config: &CemConfig,
    rng: &mut R,
) -> Result<Array2<f64>>
where
    Q: QFunction + ?Sized,
    R: Rng + ?Sized,
{
    let (rows, obs) = states.dim();
    let n = config.samples;
    let mut replicated = Array2::zeros((rows * n, obs));
    for (r, state) in states.outer_iter().enumerate() {
        for i in 0..n {
            replicated.row_mut(r * n + i).assign(&state);
        }
    }
    let sols = cem_argmax_batch(
        rows,
        |actions| q.q_values(replicated.view(), actions),
        config,
        rng,
    )?;
    let mut out = Array2::zeros((rows, config.action_dim));
    for (r, sol) in sols.into_iter().enumerate() {
        out.row_mut(r).assign(&Array1::from(sol.action));
    }
    Ok(out)
}

#[cfg(test)]
mod tests;
