//! Markov-chain estimation and evolution.
//!
//! Transition events are extracted from labeled longitudinal data, the
//! column-stochastic matrix `A` is estimated by relative frequency or
//! inverse-count weighting, and robustness transforms (PageRank-style
//! damping, RBF kernel smoothing over a state distance matrix, final-state
//! resetting) are applied on top. The probability distribution `z(t)` on
//! the chain evolves as the discrete-time linear system `z(t+1) = A z(t)`;
//! its stationary distribution comes from either a reduced `(K-1)`-dim
//! closed form or plain power iteration.

use std::collections::BTreeMap;

use ndarray::{Array1, Array2};

use crate::error::{McscError, Result};
use crate::geometry::{DistanceMatrix, LabeledSeries};
use crate::linalg::lu_solve;

/// Tolerance for column-sum and simplex-sum validation.
pub const STOCHASTIC_TOL: f64 = 1e-12;

/// One observed transition: individual `m` moved from state `from` at time
/// `t` to state `to` at time `t+1`. Self-transitions are allowed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransitionEvent {
    pub individual: String,
    pub time: i64,
    pub from: usize,
    pub to: usize,
}

/// Whether resetting events have been added to an event set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ResettingMode {
    #[default]
    None,
    /// Final state of each individual loops back to its initial state.
    Loop,
    /// Final states route through an extra dummy state `K+1`.
    Dummy,
}

/// Multiset of transition events over states `1..=K`.
#[derive(Debug, Clone, PartialEq)]
pub struct EventSet {
    events: Vec<TransitionEvent>,
    k: usize,
    resetting: ResettingMode,
}

impl EventSet {
    pub fn new(events: Vec<TransitionEvent>, k: usize) -> Result<Self> {
        for e in &events {
            for label in [e.from, e.to] {
                if label < 1 || label > k {
                    return Err(McscError::LabelOutOfRange { label, k });
                }
            }
        }
        Ok(Self {
            events,
            k,
            resetting: ResettingMode::None,
        })
    }

    pub fn events(&self) -> &[TransitionEvent] {
        &self.events
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn resetting(&self) -> ResettingMode {
        self.resetting
    }
}

/// Column-stochastic transition matrix: `A[[j-1, i-1]]` is the probability
/// of moving from state `i` to state `j` in one step.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix {
    a: Array2<f64>,
}

impl TransitionMatrix {
    pub fn new(a: Array2<f64>) -> Result<Self> {
        let k = a.nrows();
        if k == 0 || a.ncols() != k {
            return Err(McscError::NotStochastic(format!(
                "expected square nonempty matrix, got {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        for ((j, i), &v) in a.indexed_iter() {
            if !v.is_finite() || v < 0.0 {
                return Err(McscError::NotStochastic(format!(
                    "entry ({j},{i}) = {v}"
                )));
            }
        }
        for i in 0..k {
            let s: f64 = a.column(i).sum();
            if (s - 1.0).abs() > STOCHASTIC_TOL {
                return Err(McscError::NotStochastic(format!(
                    "column {i} sums to {s}"
                )));
            }
        }
        Ok(Self { a })
    }

    pub fn identity(k: usize) -> Self {
        Self {
            a: Array2::eye(k),
        }
    }

    pub fn k(&self) -> usize {
        self.a.nrows()
    }

    pub fn as_array(&self) -> &Array2<f64> {
        &self.a
    }

    pub fn into_array(self) -> Array2<f64> {
        self.a
    }

    /// Probability of the transition `from -> to` (1-based labels).
    pub fn prob(&self, from: usize, to: usize) -> f64 {
        self.a[[to - 1, from - 1]]
    }
}

/// Point of the standard simplex: nonnegative entries summing to 1.
#[derive(Debug, Clone, PartialEq)]
pub struct Distribution {
    z: Array1<f64>,
}

impl Distribution {
    pub fn new(z: Array1<f64>) -> Result<Self> {
        if z.is_empty() {
            return Err(McscError::EmptyInput("distribution"));
        }
        for (i, &v) in z.iter().enumerate() {
            if !v.is_finite() || v < 0.0 {
                return Err(McscError::NotDistribution(format!("entry {i} = {v}")));
            }
        }
        let s = z.sum();
        if (s - 1.0).abs() > STOCHASTIC_TOL {
            return Err(McscError::NotDistribution(format!("sums to {s}")));
        }
        Ok(Self { z })
    }

    pub fn uniform(k: usize) -> Self {
        Self {
            z: Array1::from_elem(k, 1.0 / k as f64),
        }
    }

    /// All mass on one state (1-based label).
    pub fn point_mass(k: usize, state: usize) -> Result<Self> {
        if state < 1 || state > k {
            return Err(McscError::LabelOutOfRange { label: state, k });
        }
        let mut z = Array1::zeros(k);
        z[state - 1] = 1.0;
        Ok(Self { z })
    }

    /// Normalize a nonnegative weight vector into a distribution.
    pub fn from_weights(w: &[f64]) -> Result<Self> {
        let total: f64 = w.iter().sum();
        if !(total > 0.0) || !total.is_finite() {
            return Err(McscError::NotDistribution(format!(
                "weights sum to {total}"
            )));
        }
        Distribution::new(Array1::from_iter(w.iter().map(|v| v / total)))
    }

    pub fn k(&self) -> usize {
        self.z.len()
    }

    pub fn as_array(&self) -> &Array1<f64> {
        &self.z
    }

    /// Mass on a state (1-based label).
    pub fn get(&self, state: usize) -> f64 {
        self.z[state - 1]
    }

    pub fn l1_distance(&self, other: &Distribution) -> f64 {
        self.z
            .iter()
            .zip(other.z.iter())
            .map(|(a, b)| (a - b).abs())
            .sum()
    }
}

/// Time-stamped sequence of distributions.
#[derive(Debug, Clone, PartialEq)]
pub struct DistributionSeries {
    times: Vec<f64>,
    points: Vec<Distribution>,
}

impl DistributionSeries {
    pub fn new(times: Vec<f64>, points: Vec<Distribution>) -> Result<Self> {
        if times.is_empty() {
            return Err(McscError::EmptyInput("distribution series"));
        }
        if times.len() != points.len() {
            return Err(McscError::DimensionMismatch {
                expected: times.len(),
                got: points.len(),
            });
        }
        if times.iter().any(|t| !t.is_finite()) {
            return Err(McscError::NonFinite("series time stamp"));
        }
        if times.windows(2).any(|w| w[0] >= w[1]) {
            return Err(McscError::InvalidConfig(
                "series times must be strictly increasing".into(),
            ));
        }
        let k = points[0].k();
        for p in &points {
            if p.k() != k {
                return Err(McscError::DimensionMismatch {
                    expected: k,
                    got: p.k(),
                });
            }
        }
        Ok(Self { times, points })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn points(&self) -> &[Distribution] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn k(&self) -> usize {
        self.points[0].k()
    }
}

/// Extract one event per consecutive observed pair (`t`, `t+1`) of the same
/// individual. Gaps in the time index produce no event.
pub fn extract_events(series: &LabeledSeries) -> EventSet {
    extract_events_with(series, false)
}

/// As [`extract_events`], but `bridge_gaps = true` also pairs observations
/// separated by missing intermediate times.
pub fn extract_events_with(series: &LabeledSeries, bridge_gaps: bool) -> EventSet {
    let mut events = Vec::new();
    for w in series.records().windows(2) {
        let (a, b) = (&w[0], &w[1]);
        if a.individual != b.individual {
            continue;
        }
        if bridge_gaps || b.time == a.time + 1 {
            events.push(TransitionEvent {
                individual: a.individual.clone(),
                time: a.time,
                from: a.label,
                to: b.label,
            });
        }
    }
    EventSet {
        events,
        k: series.k(),
        resetting: ResettingMode::None,
    }
}

/// Add resetting events: each individual's final state loops back to its
/// initial state (periodic boundary conditions on the time axis). With
/// `dummy = true` the loop routes through an extra state `K+1` instead, and
/// the returned set has `K+1` states.
///
/// Rejects event sets that were already reset.
pub fn apply_resetting(events: &EventSet, series: &LabeledSeries, dummy: bool) -> Result<EventSet> {
    if events.resetting != ResettingMode::None {
        return Err(McscError::ResettingAlreadyApplied);
    }
    if series.is_empty() {
        return Err(McscError::EmptyInput("series"));
    }
    if series.k() != events.k {
        return Err(McscError::DimensionMismatch {
            expected: events.k,
            got: series.k(),
        });
    }

    // Records are sorted by (individual, time): first/last record per
    // individual give t_min and t_max.
    let mut bounds: BTreeMap<&str, (&crate::geometry::LabeledRecord, &crate::geometry::LabeledRecord)> =
        BTreeMap::new();
    for r in series.records() {
        bounds
            .entry(r.individual.as_str())
            .and_modify(|(_, last)| *last = r)
            .or_insert((r, r));
    }

    let mut out = events.events.clone();
    if dummy {
        let dummy_state = events.k + 1;
        for (m, (first, last)) in &bounds {
            out.push(TransitionEvent {
                individual: (*m).to_string(),
                time: last.time,
                from: last.label,
                to: dummy_state,
            });
            out.push(TransitionEvent {
                individual: (*m).to_string(),
                time: last.time,
                from: dummy_state,
                to: first.label,
            });
        }
        Ok(EventSet {
            events: out,
            k: dummy_state,
            resetting: ResettingMode::Dummy,
        })
    } else {
        for (m, (first, last)) in &bounds {
            out.push(TransitionEvent {
                individual: (*m).to_string(),
                time: last.time,
                from: last.label,
                to: first.label,
            });
        }
        Ok(EventSet {
            events: out,
            k: events.k,
            resetting: ResettingMode::Loop,
        })
    }
}

/// Relative-frequency estimate: `A_ji = count(i->j) / count(i->.)`.
/// Columns of never-visited states become self-transition unit vectors.
pub fn estimate_relative_frequency(events: &EventSet) -> Result<TransitionMatrix> {
    let k = events.k;
    let mut counts = Array2::<f64>::zeros((k, k));
    for e in &events.events {
        counts[[e.to - 1, e.from - 1]] += 1.0;
    }
    let mut a = Array2::<f64>::zeros((k, k));
    for i in 0..k {
        let total: f64 = counts.column(i).sum();
        if total == 0.0 {
            a[[i, i]] = 1.0;
        } else {
            for j in 0..k {
                a[[j, i]] = counts[[j, i]] / total;
            }
        }
    }
    TransitionMatrix::new(a)
}

/// Weighted estimate downweighting individuals with many events from the
/// same source state: `w(m,i) = 1 / (count_m(i->.) + eta)`.
pub fn estimate_weighted(events: &EventSet, eta: f64) -> Result<TransitionMatrix> {
    if !(eta > 0.0) {
        return Err(McscError::InvalidConfig("eta must be > 0".into()));
    }
    let k = events.k;
    // Per-individual counts, keyed by individual for deterministic order.
    let mut per_m: BTreeMap<&str, Array2<f64>> = BTreeMap::new();
    for e in &events.events {
        let c = per_m
            .entry(e.individual.as_str())
            .or_insert_with(|| Array2::zeros((k, k)));
        c[[e.to - 1, e.from - 1]] += 1.0;
    }

    let mut num = Array2::<f64>::zeros((k, k));
    let mut den = Array1::<f64>::zeros(k);
    let mut contributors = vec![0usize; k];
    let mut sole: Vec<Option<&Array2<f64>>> = vec![None; k];
    for counts in per_m.values() {
        for i in 0..k {
            let n_mi: f64 = counts.column(i).sum();
            if n_mi == 0.0 {
                continue;
            }
            contributors[i] += 1;
            sole[i] = Some(counts);
            let w = 1.0 / (n_mi + eta);
            for j in 0..k {
                num[[j, i]] += w * counts[[j, i]];
            }
            den[i] += w * n_mi;
        }
    }

    let mut a = Array2::<f64>::zeros((k, k));
    for i in 0..k {
        if den[i] == 0.0 {
            a[[i, i]] = 1.0;
        } else if contributors[i] == 1 {
            // The weight cancels when one individual feeds the column, so
            // divide the raw counts directly; this keeps the estimate
            // bit-identical to the relative frequency for M = 1.
            let counts = sole[i].expect("column has a contributor");
            let n_mi: f64 = counts.column(i).sum();
            for j in 0..k {
                a[[j, i]] = counts[[j, i]] / n_mi;
            }
        } else {
            for j in 0..k {
                a[[j, i]] = num[[j, i]] / den[i];
            }
        }
    }
    TransitionMatrix::new(a)
}

/// PageRank-style damping: `(A + eps * O) / (1 + eps * K)` with `O` the
/// all-ones matrix. For `eps > 0` the result is strictly positive, hence
/// ergodic.
pub fn apply_damping(a: &TransitionMatrix, epsilon: f64) -> Result<TransitionMatrix> {
    if !(epsilon >= 0.0) {
        return Err(McscError::InvalidConfig("epsilon must be >= 0".into()));
    }
    let k = a.k() as f64;
    let denom = 1.0 + epsilon * k;
    let damped = a.as_array().mapv(|v| (v + epsilon) / denom);
    TransitionMatrix::new(damped)
}

/// Nadaraya-Watson smoothing across columns with RBF weights
/// `exp(-gamma * D_ij^2)`: each column becomes a convex combination of all
/// columns. `gamma = 0` averages all columns uniformly; large `gamma`
/// leaves `A` unchanged.
pub fn smooth_kernel(
    a: &TransitionMatrix,
    d: &DistanceMatrix,
    gamma: f64,
) -> Result<TransitionMatrix> {
    if !(gamma >= 0.0) {
        return Err(McscError::InvalidConfig("gamma must be >= 0".into()));
    }
    let k = a.k();
    if d.k() != k {
        return Err(McscError::DimensionMismatch {
            expected: k,
            got: d.k(),
        });
    }
    let arr = a.as_array();
    let dist = d.as_array();
    let mut out = Array2::<f64>::zeros((k, k));
    for i in 0..k {
        let weights: Vec<f64> = (0..k)
            .map(|j| (-gamma * dist[[i, j]] * dist[[i, j]]).exp())
            .collect();
        let total: f64 = weights.iter().sum();
        for row in 0..k {
            let mut v = 0.0;
            for (j, w) in weights.iter().enumerate() {
                v += w * arr[[row, j]];
            }
            out[[row, i]] = v / total;
        }
    }
    TransitionMatrix::new(out)
}

/// Iterate `z(t+1) = A z(t)` for `steps` steps, returning the whole path
/// (including `z0`) with integer time stamps.
pub fn evolve(a: &TransitionMatrix, z0: &Distribution, steps: usize) -> Result<DistributionSeries> {
    if z0.k() != a.k() {
        return Err(McscError::DimensionMismatch {
            expected: a.k(),
            got: z0.k(),
        });
    }
    let mut points = Vec::with_capacity(steps + 1);
    let mut times = Vec::with_capacity(steps + 1);
    points.push(z0.clone());
    times.push(0.0);
    let mut z = z0.as_array().clone();
    for t in 1..=steps {
        z = a.as_array().dot(&z);
        // Counter accumulated round-off so every step stays on the simplex.
        let s = z.sum();
        z.mapv_inplace(|v| v / s);
        points.push(Distribution::new(z.clone())?);
        times.push(t as f64);
    }
    DistributionSeries::new(times, points)
}

/// How to compute the stationary distribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StationaryMethod {
    /// Solve the reduced `(K-1)`-dimensional linear system
    /// `(I - A~ + a e^T) z~ = a` and append `z_K = 1 - sum(z~)`.
    #[default]
    ReducedForm,
    /// Iterate `z <- A z` until successive iterates differ by less than
    /// `tol` in L1 (cap 10^6 iterations).
    PowerIteration,
}

pub const POWER_ITERATION_CAP: usize = 1_000_000;

/// Stationary distribution of an ergodic chain. The result satisfies
/// `||A z* - z*||_1 < 10 * tol`.
pub fn stationary(
    a: &TransitionMatrix,
    method: StationaryMethod,
    tol: f64,
) -> Result<Distribution> {
    if !(tol > 0.0) {
        return Err(McscError::InvalidConfig("tol must be > 0".into()));
    }
    let k = a.k();
    if k == 1 {
        return Distribution::new(Array1::ones(1));
    }
    let z = match method {
        StationaryMethod::ReducedForm => {
            let red = reduce(a)?;
            // (I - A~ + a e^T) z~ = a
            let mut m = Array2::<f64>::eye(k - 1) - &red.a_tilde;
            for j in 0..k - 1 {
                for i in 0..k - 1 {
                    m[[i, j]] += red.a[i];
                }
            }
            let z_tilde = lu_solve(&m, &red.a, "reduced-form stationary")?;
            let mut z = Array1::<f64>::zeros(k);
            let mut head = 0.0;
            for i in 0..k - 1 {
                z[i] = z_tilde[i];
                head += z_tilde[i];
            }
            z[k - 1] = 1.0 - head;
            // Round-off can leave tiny negatives on states with ~zero mass.
            for v in z.iter_mut() {
                if *v < 0.0 {
                    if *v < -1e-9 {
                        return Err(McscError::NotDistribution(format!(
                            "reduced-form solution has entry {v}"
                        )));
                    }
                    *v = 0.0;
                }
            }
            let s = z.sum();
            z.mapv_inplace(|v| v / s);
            z
        }
        StationaryMethod::PowerIteration => {
            let mut z = Array1::from_elem(k, 1.0 / k as f64);
            let mut converged = false;
            for _ in 0..POWER_ITERATION_CAP {
                let mut next = a.as_array().dot(&z);
                let s = next.sum();
                next.mapv_inplace(|v| v / s);
                let diff: f64 = next.iter().zip(z.iter()).map(|(a, b)| (a - b).abs()).sum();
                z = next;
                if diff < tol {
                    converged = true;
                    break;
                }
            }
            if !converged {
                return Err(McscError::NoConvergence {
                    iterations: POWER_ITERATION_CAP,
                    context: "power iteration",
                });
            }
            z
        }
    };

    let residual: f64 = {
        let az = a.as_array().dot(&z);
        az.iter().zip(z.iter()).map(|(a, b)| (a - b).abs()).sum()
    };
    if residual >= 10.0 * tol {
        return Err(McscError::NoConvergence {
            iterations: 0,
            context: "stationary residual check",
        });
    }
    Distribution::new(z)
}

/// The `(K-1)`-dimensional reduction of a transition matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedChain {
    /// Top-left `(K-1) x (K-1)` block of `A`.
    pub a_tilde: Array2<f64>,
    /// First `K-1` entries of the last column of `A`.
    pub a: Array1<f64>,
    /// `A~ - a e^T`: the dynamics matrix of the deviation coordinates
    /// `z~' = z~ - z~*`.
    pub a_prime_tilde: Array2<f64>,
}

/// Reduce `z(t+1) = A z(t)` to the affine `(K-1)`-dimensional form
/// `z~(t+1) = (A~ - a e^T) z~(t) + a`.
pub fn reduce(a: &TransitionMatrix) -> Result<ReducedChain> {
    let k = a.k();
    if k < 2 {
        return Err(McscError::InvalidConfig(
            "reduction needs at least 2 states".into(),
        ));
    }
    let arr = a.as_array();
    let mut a_tilde = Array2::<f64>::zeros((k - 1, k - 1));
    for i in 0..k - 1 {
        for j in 0..k - 1 {
            a_tilde[[i, j]] = arr[[i, j]];
        }
    }
    let a_vec = Array1::from_iter((0..k - 1).map(|i| arr[[i, k - 1]]));
    let mut a_prime_tilde = a_tilde.clone();
    for j in 0..k - 1 {
        for i in 0..k - 1 {
            a_prime_tilde[[i, j]] -= a_vec[i];
        }
    }
    Ok(ReducedChain {
        a_tilde,
        a: a_vec,
        a_prime_tilde,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::LabeledRecord;
    use ndarray::array;

    fn series(k: usize, data: &[(&str, i64, usize)]) -> LabeledSeries {
        let records = data
            .iter()
            .map(|(m, t, l)| LabeledRecord {
                individual: (*m).to_string(),
                time: *t,
                label: *l,
            })
            .collect();
        LabeledSeries::new(records, k).unwrap()
    }

    fn pairs(events: &EventSet) -> Vec<(usize, usize)> {
        events.events().iter().map(|e| (e.from, e.to)).collect()
    }

    #[test]
    fn extract_events_hand_enumeration() {
        let s = series(2, &[("a", 0, 1), ("a", 1, 2), ("a", 2, 1), ("a", 3, 2)]);
        let ev = extract_events(&s);
        assert_eq!(pairs(&ev), vec![(1, 2), (2, 1), (1, 2)]);
    }

    #[test]
    fn extract_events_single_observation_is_empty() {
        let s = series(5, &[("a", 0, 3), ("b", 7, 4)]);
        assert!(extract_events(&s).is_empty());
    }

    #[test]
    fn extract_events_self_transitions_allowed() {
        let s = series(5, &[("a", 0, 5), ("a", 1, 5), ("b", 0, 5), ("b", 1, 5)]);
        let ev = extract_events(&s);
        assert_eq!(pairs(&ev), vec![(5, 5), (5, 5)]);
    }

    #[test]
    fn extract_events_gap_breaks_chain() {
        let s = series(3, &[("a", 0, 1), ("a", 1, 2), ("a", 5, 3)]);
        assert_eq!(pairs(&extract_events(&s)), vec![(1, 2)]);
        assert_eq!(
            pairs(&extract_events_with(&s, true)),
            vec![(1, 2), (2, 3)]
        );
    }

    #[test]
    fn resetting_adds_final_to_initial_loop() {
        let s = series(9, &[("a", 0, 1), ("a", 1, 5), ("a", 2, 8)]);
        let ev = extract_events(&s);
        let reset = apply_resetting(&ev, &s, false).unwrap();
        assert_eq!(reset.k(), 9);
        assert_eq!(pairs(&reset), vec![(1, 5), (5, 8), (8, 1)]);
    }

    #[test]
    fn resetting_dummy_state_routing() {
        let s = series(9, &[
            ("a", 0, 1),
            ("a", 1, 8),
            ("b", 0, 2),
            ("b", 1, 9),
        ]);
        let ev = extract_events(&s);
        let reset = apply_resetting(&ev, &s, true).unwrap();
        assert_eq!(reset.k(), 10);
        let added: Vec<(usize, usize)> = pairs(&reset)[2..].to_vec();
        assert_eq!(added, vec![(8, 10), (10, 1), (9, 10), (10, 2)]);
    }

    #[test]
    fn resetting_twice_rejected() {
        let s = series(2, &[("a", 0, 1), ("a", 1, 2)]);
        let ev = extract_events(&s);
        let once = apply_resetting(&ev, &s, false).unwrap();
        assert!(matches!(
            apply_resetting(&once, &s, false),
            Err(McscError::ResettingAlreadyApplied)
        ));
    }

    #[test]
    fn relative_frequency_hand_counts() {
        let s = series(2, &[("a", 0, 1), ("a", 1, 2), ("a", 2, 1), ("a", 3, 2)]);
        let a = estimate_relative_frequency(&extract_events(&s)).unwrap();
        assert_eq!(a.as_array(), &array![[0.0, 1.0], [1.0, 0.0]]);
    }

    #[test]
    fn relative_frequency_self_transitions_identity() {
        let s = series(3, &[("a", 0, 1), ("a", 1, 1), ("b", 0, 2), ("b", 1, 2)]);
        let a = estimate_relative_frequency(&extract_events(&s)).unwrap();
        assert_eq!(a.as_array(), &Array2::<f64>::eye(3));
    }

    #[test]
    fn unvisited_states_become_self_loops() {
        let s = series(4, &[("a", 0, 1), ("a", 1, 2)]);
        let a = estimate_relative_frequency(&extract_events(&s)).unwrap();
        assert_eq!(a.prob(1, 2), 1.0);
        assert_eq!(a.prob(2, 2), 1.0);
        assert_eq!(a.prob(3, 3), 1.0);
        assert_eq!(a.prob(4, 4), 1.0);
    }

    #[test]
    fn weighted_single_individual_equals_relative_frequency() {
        let s = series(3, &[
            ("a", 0, 1),
            ("a", 1, 2),
            ("a", 2, 2),
            ("a", 3, 3),
            ("a", 4, 1),
        ]);
        let ev = extract_events(&s);
        let rf = estimate_relative_frequency(&ev).unwrap();
        let w = estimate_weighted(&ev, 1.0).unwrap();
        assert_eq!(rf.as_array(), w.as_array());
    }

    #[test]
    fn weighted_two_individuals_hand_computation() {
        // A: ten events 1->2; B: one event 1->3; eta = 1.
        let mut ev = Vec::new();
        for t in 0..10 {
            ev.push(TransitionEvent {
                individual: "a".into(),
                time: t,
                from: 1,
                to: 2,
            });
        }
        ev.push(TransitionEvent {
            individual: "b".into(),
            time: 0,
            from: 1,
            to: 3,
        });
        let events = EventSet::new(ev, 3).unwrap();
        let a = estimate_weighted(&events, 1.0).unwrap();
        // w_A = 1/11, w_B = 1/2; column 1 proportional to (10/11) e_2 + (1/2) e_3.
        assert!((a.prob(1, 2) - 20.0 / 31.0).abs() < 1e-14);
        assert!((a.prob(1, 3) - 11.0 / 31.0).abs() < 1e-14);
        assert!((a.prob(1, 2) - 0.6452).abs() < 1e-3);
        assert!((a.prob(1, 3) - 0.3548).abs() < 1e-3);
    }

    #[test]
    fn weighted_large_eta_approaches_relative_frequency() {
        let mut ev = Vec::new();
        for t in 0..10 {
            ev.push(TransitionEvent {
                individual: "a".into(),
                time: t,
                from: 1,
                to: 2,
            });
        }
        ev.push(TransitionEvent {
            individual: "b".into(),
            time: 0,
            from: 1,
            to: 3,
        });
        let events = EventSet::new(ev, 3).unwrap();
        let rf = estimate_relative_frequency(&events).unwrap();
        let w = estimate_weighted(&events, 1e12).unwrap();
        for (x, y) in w.as_array().iter().zip(rf.as_array()) {
            assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn damping_zero_epsilon_identity_transform() {
        let a = TransitionMatrix::new(array![[0.9, 0.2], [0.1, 0.8]]).unwrap();
        let d = apply_damping(&a, 0.0).unwrap();
        assert_eq!(a.as_array(), d.as_array());
    }

    #[test]
    fn damping_hand_example() {
        let a = TransitionMatrix::identity(2);
        let d = apply_damping(&a, 0.5).unwrap();
        assert_eq!(d.as_array(), &array![[0.75, 0.25], [0.25, 0.75]]);
    }

    #[test]
    fn damping_default_epsilon_small_perturbation() {
        let k = 100;
        let a = TransitionMatrix::identity(k);
        let d = apply_damping(&a, 1e-10).unwrap();
        for (x, y) in d.as_array().iter().zip(a.as_array()) {
            assert!((x - y).abs() < 1e-8);
        }
        // Strictly positive, hence ergodic.
        assert!(d.as_array().iter().all(|&v| v > 0.0));
    }

    #[test]
    fn smoothing_gamma_zero_averages_columns() {
        let a = TransitionMatrix::new(array![[1.0, 0.0], [0.0, 1.0]]).unwrap();
        let d = DistanceMatrix::new(array![[0.0, 1.0], [1.0, 0.0]]).unwrap();
        let s = smooth_kernel(&a, &d, 0.0).unwrap();
        for v in s.as_array() {
            assert!((v - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn smoothing_huge_gamma_is_identity_transform() {
        let a = TransitionMatrix::new(array![[0.7, 0.4], [0.3, 0.6]]).unwrap();
        let d = DistanceMatrix::new(array![[0.0, 1.0], [1.0, 0.0]]).unwrap();
        let s = smooth_kernel(&a, &d, 1e4).unwrap();
        for (x, y) in s.as_array().iter().zip(a.as_array()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn evolve_zero_steps_returns_initial() {
        let a = TransitionMatrix::identity(3);
        let z0 = Distribution::point_mass(3, 2).unwrap();
        let path = evolve(&a, &z0, 0).unwrap();
        assert_eq!(path.len(), 1);
        assert_eq!(path.points()[0], z0);
    }

    #[test]
    fn evolve_swap_chain_alternates() {
        let a = TransitionMatrix::new(array![[0.0, 1.0], [1.0, 0.0]]).unwrap();
        let z0 = Distribution::point_mass(2, 1).unwrap();
        let path = evolve(&a, &z0, 3).unwrap();
        assert_eq!(path.points()[0].as_array(), &array![1.0, 0.0]);
        assert_eq!(path.points()[1].as_array(), &array![0.0, 1.0]);
        assert_eq!(path.points()[2].as_array(), &array![1.0, 0.0]);
        assert_eq!(path.points()[3].as_array(), &array![0.0, 1.0]);
    }

    #[test]
    fn evolve_rank_one_projector() {
        let a = TransitionMatrix::new(array![[0.5, 0.5], [0.5, 0.5]]).unwrap();
        let z0 = Distribution::point_mass(2, 1).unwrap();
        let path = evolve(&a, &z0, 1).unwrap();
        assert_eq!(path.points()[1].as_array(), &array![0.5, 0.5]);
    }

    #[test]
    fn stationary_symmetric_chain() {
        let a = TransitionMatrix::new(array![[0.5, 0.5], [0.5, 0.5]]).unwrap();
        for method in [StationaryMethod::ReducedForm, StationaryMethod::PowerIteration] {
            let z = stationary(&a, method, 1e-12).unwrap();
            assert!((z.get(1) - 0.5).abs() < 1e-12);
            assert!((z.get(2) - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn stationary_two_state_hand_solve() {
        let a = TransitionMatrix::new(array![[0.9, 0.2], [0.1, 0.8]]).unwrap();
        let z = stationary(&a, StationaryMethod::ReducedForm, 1e-12).unwrap();
        assert!((z.get(1) - 2.0 / 3.0).abs() < 1e-12);
        assert!((z.get(2) - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn stationary_single_state() {
        let a = TransitionMatrix::identity(1);
        let z = stationary(&a, StationaryMethod::ReducedForm, 1e-12).unwrap();
        assert_eq!(z.get(1), 1.0);
    }

    #[test]
    fn stationary_methods_agree_on_damped_chain() {
        let raw = TransitionMatrix::new(array![
            [0.6, 0.1, 0.3],
            [0.3, 0.7, 0.3],
            [0.1, 0.2, 0.4]
        ])
        .unwrap();
        let a = apply_damping(&raw, 1e-10).unwrap();
        let zr = stationary(&a, StationaryMethod::ReducedForm, 1e-13).unwrap();
        let zp = stationary(&a, StationaryMethod::PowerIteration, 1e-13).unwrap();
        assert!(zr.l1_distance(&zp) < 1e-10);
    }

    #[test]
    fn reduce_two_state_example() {
        let a = TransitionMatrix::new(array![[0.9, 0.2], [0.1, 0.8]]).unwrap();
        let red = reduce(&a).unwrap();
        assert!((red.a_tilde[[0, 0]] - 0.9).abs() < 1e-15);
        assert!((red.a[0] - 0.2).abs() < 1e-15);
        // Spectral radius of the reduced dynamics = second eigenvalue of A.
        assert!((red.a_prime_tilde[[0, 0]] - 0.7).abs() < 1e-15);
    }

    #[test]
    fn reduce_rejects_single_state() {
        let a = TransitionMatrix::identity(1);
        assert!(reduce(&a).is_err());
    }

    #[test]
    fn reduced_fixed_point_at_origin() {
        let a = TransitionMatrix::new(array![[0.9, 0.2], [0.1, 0.8]]).unwrap();
        let red = reduce(&a).unwrap();
        let z_star = stationary(&a, StationaryMethod::ReducedForm, 1e-12).unwrap();
        // z~' = 0 must be a fixed point of z~'(t+1) = A~' z~'(t); equivalently
        // z~* satisfies z~* = (A~ - a e^T) z~* + a.
        let z_tilde = z_star.get(1);
        let next = red.a_prime_tilde[[0, 0]] * z_tilde + red.a[0];
        assert!((next - z_tilde).abs() < 1e-12);
    }
}
