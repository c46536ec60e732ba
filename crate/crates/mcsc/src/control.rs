//! Sparse controller design on an estimated Markov chain.
//!
//! The controller is a modification matrix `A'` with zero column sums and
//! `A + A'` entrywise nonnegative. Only suppression is supported: each
//! intervention multiplies one off-diagonal transition probability by
//! `1 - h` and adds the removed mass to the source state's self-transition.
//! The objective
//!
//! ```text
//! G = r^T z' - lambda1 * nnz(A') - lambda2 * sum_{A_ij != 0} |log((A_ij + A'_ij) / A_ij)|
//! ```
//!
//! scores the expected reward under the controlled stationary (or
//! finite-horizon) distribution `z'` against an L0 sparsity penalty and a
//! log-fold-change modification cost. A greedy loop ranks candidate
//! transitions, screens them with a small probe suppression, exhaustively
//! scores the survivors over the allowed suppression levels, and commits
//! the best move until no strict improvement remains.

use std::collections::BTreeMap;

use ndarray::{Array1, Array2};
use rayon::prelude::*;

use crate::chain::{
    evolve, stationary, Distribution, DistributionSeries, StationaryMethod, TransitionMatrix,
};
use crate::error::{McscError, Result};

/// Entries of `A'` smaller than this in magnitude do not count as nonzero.
pub const NNZ_EPS: f64 = 1e-15;

/// Tolerance used by the internal stationary solves.
const STATIONARY_TOL: f64 = 1e-12;

/// Safety cap on greedy iterations.
const GREEDY_ITERATION_CAP: usize = 10_000;

/// Where the controlled distribution `z'` is evaluated.
#[derive(Debug, Clone, PartialEq)]
pub enum Horizon {
    /// `z'` is the stationary distribution of `A + A'`.
    Stationary,
    /// `z' = (A + A')^(tau - 1) z1`.
    Finite { tau: usize, z1: Distribution },
}

/// Ranking key for the candidate set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CandidateRanking {
    /// Rank off-diagonal entries by probability value.
    #[default]
    Value,
    /// Rank by stationary flow `z*_i * A_ji` through the transition.
    Flow,
}

/// Parameters of the sparse-control problem.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlConfig {
    pub lambda1: f64,
    pub lambda2: f64,
    /// Allowed suppression fractions `H`, each in (0,1).
    pub suppression_levels: Vec<f64>,
    /// Fraction of off-diagonal cells admitted to the candidate set.
    pub candidate_fraction: f64,
    /// Suppression fraction used by the screening probe.
    pub probe_suppression: f64,
    pub horizon: Horizon,
    pub ranking: CandidateRanking,
}

impl ControlConfig {
    pub fn new(lambda1: f64, lambda2: f64) -> Self {
        Self {
            lambda1,
            lambda2,
            suppression_levels: vec![0.5, 0.8, 0.9],
            candidate_fraction: 0.2,
            probe_suppression: 0.1,
            horizon: Horizon::Stationary,
            ranking: CandidateRanking::Value,
        }
    }

    pub fn with_horizon(mut self, horizon: Horizon) -> Self {
        self.horizon = horizon;
        self
    }

    pub fn with_suppression_levels(mut self, h: Vec<f64>) -> Self {
        self.suppression_levels = h;
        self
    }

    fn validate(&self, k: usize) -> Result<()> {
        if !(self.lambda1 >= 0.0) || !(self.lambda2 >= 0.0) {
            return Err(McscError::InvalidConfig(
                "lambda1 and lambda2 must be >= 0".into(),
            ));
        }
        if self.suppression_levels.is_empty() {
            return Err(McscError::InvalidConfig(
                "suppression level set H must be non-empty".into(),
            ));
        }
        for &h in &self.suppression_levels {
            if !(h > 0.0 && h < 1.0) {
                return Err(McscError::InvalidConfig(format!(
                    "suppression level {h} outside (0,1)"
                )));
            }
        }
        if !(self.candidate_fraction > 0.0 && self.candidate_fraction <= 1.0) {
            return Err(McscError::InvalidConfig(
                "candidate_fraction must be in (0,1]".into(),
            ));
        }
        if !(self.probe_suppression > 0.0 && self.probe_suppression < 1.0) {
            return Err(McscError::InvalidConfig(
                "probe_suppression must be in (0,1)".into(),
            ));
        }
        if let Horizon::Finite { tau, z1 } = &self.horizon {
            if *tau < 1 {
                return Err(McscError::InvalidConfig("tau must be >= 1".into()));
            }
            if z1.k() != k {
                return Err(McscError::DimensionMismatch {
                    expected: k,
                    got: z1.k(),
                });
            }
        }
        Ok(())
    }
}

/// One suppressed transition with its accumulated suppression fraction
/// `1 - effective / original` in (0,1].
#[derive(Debug, Clone, PartialEq)]
pub struct Intervention {
    pub from: usize,
    pub to: usize,
    pub cumulative_suppression: f64,
}

/// Result of the greedy optimizer.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlPlan {
    /// The sparse modification matrix; columns sum to zero.
    pub a_prime: Array2<f64>,
    /// Suppressed transitions sorted by `(from, to)`.
    pub interventions: Vec<Intervention>,
    /// Objective values: the uncontrolled `G` followed by one entry per
    /// committed intervention, strictly increasing.
    pub objective_trace: Vec<f64>,
}

impl ControlPlan {
    pub fn empty(k: usize, g0: f64) -> Self {
        Self {
            a_prime: Array2::zeros((k, k)),
            interventions: Vec::new(),
            objective_trace: vec![g0],
        }
    }

    pub fn is_empty(&self) -> bool {
        self.interventions.is_empty()
    }

    /// Check every structural invariant against the chain the plan was
    /// built for.
    pub fn validate(&self, a: &TransitionMatrix) -> Result<()> {
        let k = a.k();
        if self.a_prime.nrows() != k || self.a_prime.ncols() != k {
            return Err(McscError::DimensionMismatch {
                expected: k,
                got: self.a_prime.nrows(),
            });
        }
        for i in 0..k {
            let col_sum: f64 = self.a_prime.column(i).sum();
            if col_sum.abs() > 1e-12 {
                return Err(McscError::NotStochastic(format!(
                    "A' column {i} sums to {col_sum}"
                )));
            }
            for j in 0..k {
                let v = self.a_prime[[j, i]];
                if i != j && v > NNZ_EPS {
                    return Err(McscError::NotStochastic(format!(
                        "A' off-diagonal ({j},{i}) = {v} > 0 in suppression-only mode"
                    )));
                }
                if i == j && v < -NNZ_EPS {
                    return Err(McscError::NotStochastic(format!(
                        "A' diagonal ({i},{i}) = {v} < 0"
                    )));
                }
            }
        }
        // A + A' must itself be a valid transition matrix.
        effective_matrix(a, &self.a_prime)?;
        for w in self.objective_trace.windows(2) {
            if w[1] <= w[0] {
                return Err(McscError::InvalidConfig(format!(
                    "objective trace not strictly increasing: {} -> {}",
                    w[0], w[1]
                )));
            }
        }
        for iv in &self.interventions {
            let s = iv.cumulative_suppression;
            if !(s > 0.0 && s <= 1.0) {
                return Err(McscError::InvalidConfig(format!(
                    "cumulative suppression {s} outside (0,1]"
                )));
            }
        }
        Ok(())
    }
}

fn effective_matrix(a: &TransitionMatrix, a_prime: &Array2<f64>) -> Result<TransitionMatrix> {
    let mut eff = a.as_array() + a_prime;
    // Suppression arithmetic can leave -1e-18-size dust on suppressed cells.
    eff.mapv_inplace(|v| if v < 0.0 && v >= -NNZ_EPS { 0.0 } else { v });
    TransitionMatrix::new(eff)
}

/// The controlled distribution `z'` for the configured horizon.
fn controlled_distribution(eff: &TransitionMatrix, horizon: &Horizon) -> Result<Distribution> {
    match horizon {
        Horizon::Stationary => stationary(eff, StationaryMethod::ReducedForm, STATIONARY_TOL),
        Horizon::Finite { tau, z1 } => {
            let path = evolve(eff, z1, tau - 1)?;
            Ok(path.points().last().expect("evolve returns z0").clone())
        }
    }
}

/// Evaluate the objective `G` for a candidate modification `A'`.
///
/// Returns [`McscError::LogDivergence`] when a modified entry reaches zero
/// where `A` is nonzero, which marks the candidate as rejected rather than
/// scoring it at `G = -inf`.
pub fn objective(
    a: &TransitionMatrix,
    a_prime: &Array2<f64>,
    r: &Array1<f64>,
    config: &ControlConfig,
) -> Result<f64> {
    let k = a.k();
    config.validate(k)?;
    if r.len() != k {
        return Err(McscError::DimensionMismatch {
            expected: k,
            got: r.len(),
        });
    }
    if r.iter().any(|v| !v.is_finite()) {
        return Err(McscError::NonFinite("reward vector"));
    }

    let mut nnz = 0usize;
    let mut log_cost = 0.0;
    for ((j, i), &dv) in a_prime.indexed_iter() {
        if dv.abs() <= NNZ_EPS {
            continue;
        }
        nnz += 1;
        let orig = a.as_array()[[j, i]];
        if orig != 0.0 {
            let modified = orig + dv;
            if modified <= 0.0 {
                return Err(McscError::LogDivergence {
                    from: i + 1,
                    to: j + 1,
                });
            }
            log_cost += (modified / orig).ln().abs();
        }
    }

    let eff = effective_matrix(a, a_prime)?;
    let z_prime = controlled_distribution(&eff, &config.horizon)?;
    let reward: f64 = r
        .iter()
        .zip(z_prime.as_array())
        .map(|(ri, zi)| ri * zi)
        .sum();
    Ok(reward - config.lambda1 * nnz as f64 - config.lambda2 * log_cost)
}

/// Top off-diagonal transitions of `effective`, ranked by probability value
/// descending (ties by matrix `(row, column)` order), truncated to
/// `ceil(fraction * K * (K-1))` entries. Returned as 1-based `(from, to)`
/// pairs.
pub fn candidate_set(effective: &TransitionMatrix, fraction: f64) -> Vec<(usize, usize)> {
    ranked_candidates(effective, fraction, CandidateRanking::Value, None)
}

fn ranked_candidates(
    effective: &TransitionMatrix,
    fraction: f64,
    ranking: CandidateRanking,
    z_star: Option<&Distribution>,
) -> Vec<(usize, usize)> {
    let k = effective.k();
    if k < 2 {
        return Vec::new();
    }
    let take = ((fraction * (k * (k - 1)) as f64).ceil() as usize).clamp(1, k * (k - 1));
    let arr = effective.as_array();
    // (key, row, col): row = destination index, col = source index.
    let mut cells: Vec<(f64, usize, usize)> = Vec::with_capacity(k * (k - 1));
    for row in 0..k {
        for col in 0..k {
            if row == col {
                continue;
            }
            let key = match ranking {
                CandidateRanking::Value => arr[[row, col]],
                CandidateRanking::Flow => {
                    let z = z_star.expect("flow ranking needs the stationary distribution");
                    z.as_array()[col] * arr[[row, col]]
                }
            };
            cells.push((key, row, col));
        }
    }
    cells.sort_by(|a, b| {
        b.0.partial_cmp(&a.0)
            .unwrap()
            .then_with(|| (a.1, a.2).cmp(&(b.1, b.2)))
    });
    cells
        .into_iter()
        .take(take)
        .map(|(_, row, col)| (col + 1, row + 1))
        .collect()
}

/// Suppress the transition `site = (from, to)` by fraction `h`: the
/// effective entry shrinks multiplicatively by `1 - h` and the removed mass
/// moves to the source state's self-transition.
pub fn apply_suppression(
    a: &TransitionMatrix,
    a_prime: &Array2<f64>,
    site: (usize, usize),
    h: f64,
) -> Result<Array2<f64>> {
    let k = a.k();
    let (from, to) = site;
    if from < 1 || from > k {
        return Err(McscError::LabelOutOfRange { label: from, k });
    }
    if to < 1 || to > k {
        return Err(McscError::LabelOutOfRange { label: to, k });
    }
    if from == to {
        return Err(McscError::InvalidConfig(
            "cannot suppress a self-transition".into(),
        ));
    }
    if !(h > 0.0 && h < 1.0) {
        return Err(McscError::InvalidConfig(format!(
            "suppression fraction {h} outside (0,1)"
        )));
    }
    let effective = a.as_array()[[to - 1, from - 1]] + a_prime[[to - 1, from - 1]];
    if effective <= 0.0 {
        return Err(McscError::ZeroTransition { from, to });
    }
    let delta = h * effective;
    let mut out = a_prime.clone();
    out[[to - 1, from - 1]] -= delta;
    out[[from - 1, from - 1]] += delta;
    Ok(out)
}

/// Greedy sparse-control optimizer.
///
/// Each iteration: (1) rank candidate transitions on the current effective
/// matrix, (2) probe each candidate with a small suppression and drop those
/// whose objective decreases, (3) exhaustively score the survivors over all
/// levels in `H` and commit the best strictly-improving move. Stops when no
/// move improves `G`. Ties prefer the smaller `h`, then the smaller
/// `(from, to)`.
pub fn greedy_optimize(
    a: &TransitionMatrix,
    r: &Array1<f64>,
    config: &ControlConfig,
) -> Result<ControlPlan> {
    let k = a.k();
    config.validate(k)?;
    let mut a_prime = Array2::<f64>::zeros((k, k));
    let mut g_current = objective(a, &a_prime, r, config)?;
    let mut trace = vec![g_current];
    let mut cumulative: BTreeMap<(usize, usize), f64> = BTreeMap::new();

    for _ in 0..GREEDY_ITERATION_CAP {
        let eff = effective_matrix(a, &a_prime)?;
        let z_star = match config.ranking {
            CandidateRanking::Value => None,
            CandidateRanking::Flow => Some(stationary(
                &eff,
                StationaryMethod::ReducedForm,
                STATIONARY_TOL,
            )?),
        };
        let candidates: Vec<(usize, usize)> =
            ranked_candidates(&eff, config.candidate_fraction, config.ranking, z_star.as_ref())
                .into_iter()
                .filter(|&(from, to)| eff.prob(from, to) > 0.0)
                .collect();
        if candidates.is_empty() {
            break;
        }

        // Probe screen: drop candidates whose small suppression lowers G.
        // Candidates whose probe diverges are dropped the same way.
        let probe_results: Vec<(usize, Option<f64>)> = candidates
            .par_iter()
            .enumerate()
            .map(|(idx, &site)| {
                let probed = apply_suppression(a, &a_prime, site, config.probe_suppression)
                    .and_then(|ap| objective(a, &ap, r, config));
                (idx, probed.ok())
            })
            .collect();
        let survivors: Vec<(usize, usize)> = probe_results
            .into_iter()
            .filter_map(|(idx, g)| match g {
                Some(g) if g >= g_current => Some(candidates[idx]),
                _ => None,
            })
            .collect();
        if survivors.is_empty() {
            break;
        }

        // Exhaustive search over survivors x H.
        let moves: Vec<((usize, usize), f64)> = survivors
            .iter()
            .flat_map(|&site| {
                config
                    .suppression_levels
                    .iter()
                    .map(move |&h| (site, h))
            })
            .collect();
        let scored: Vec<Option<f64>> = moves
            .par_iter()
            .map(|&(site, h)| {
                apply_suppression(a, &a_prime, site, h)
                    .and_then(|ap| objective(a, &ap, r, config))
                    .ok()
            })
            .collect();

        let mut best: Option<(f64, f64, (usize, usize))> = None;
        for (&(site, h), g) in moves.iter().zip(&scored) {
            let Some(g) = *g else { continue };
            let better = match &best {
                None => true,
                Some((bg, bh, bsite)) => {
                    g > *bg || (g == *bg && (h < *bh || (h == *bh && site < *bsite)))
                }
            };
            if better {
                best = Some((g, h, site));
            }
        }

        match best {
            Some((g, h, site)) if g > g_current => {
                a_prime = apply_suppression(a, &a_prime, site, h)?;
                g_current = g;
                trace.push(g);
                let c = cumulative.entry(site).or_insert(0.0);
                *c = 1.0 - (1.0 - *c) * (1.0 - h);
            }
            _ => break,
        }
    }

    let interventions = cumulative
        .into_iter()
        .map(|((from, to), cumulative_suppression)| Intervention {
            from,
            to,
            cumulative_suppression,
        })
        .collect();
    Ok(ControlPlan {
        a_prime,
        interventions,
        objective_trace: trace,
    })
}

/// Evolve the controlled chain `A + A'` from `z0`.
pub fn simulate_controlled(
    a: &TransitionMatrix,
    a_prime: &Array2<f64>,
    z0: &Distribution,
    steps: usize,
) -> Result<DistributionSeries> {
    let eff = effective_matrix(a, a_prime)?;
    evolve(&eff, z0, steps)
}
