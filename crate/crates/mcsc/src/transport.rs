//! Transition-matrix estimation from distribution snapshots via optimal
//! transport, for independent-measures data (different individuals observed
//! at each time point).
//!
//! Consecutive snapshots are matched by exact OT plans `F(t)` minimizing
//! `sum_ij F_ij D_ij` under marginal constraints; the entrywise average
//! `F_bar` over time is row-normalized and transposed into a
//! column-stochastic matrix. Plans are computed with the transportation
//! simplex (network simplex on the bipartite transportation graph), so the
//! solution is an exact vertex optimum rather than an entropic
//! approximation.

use ndarray::Array2;
use rayon::prelude::*;

use crate::chain::{evolve, Distribution, DistributionSeries, TransitionMatrix};
use crate::error::{McscError, Result};
use crate::geometry::DistanceMatrix;

/// Marginal tolerance for validated transport plans.
pub const MARGINAL_TOL: f64 = 1e-10;

/// Free-run mismatch (max per-step L1) above which [`match_series`] logs a
/// warning suggesting stronger smoothing of the snapshot series.
pub const FREE_RUN_WARN_L1: f64 = 0.5;

/// Nonnegative flow matrix with prescribed marginals: `F[[i, j]]` is the
/// mass moving from state `i` to state `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportPlan {
    f: Array2<f64>,
}

impl TransportPlan {
    /// Validates nonnegativity and that row/column sums reproduce the
    /// source/destination marginals within [`MARGINAL_TOL`].
    pub fn new(f: Array2<f64>, src: &Distribution, dst: &Distribution) -> Result<Self> {
        let k = src.k();
        if f.nrows() != k || f.ncols() != k || dst.k() != k {
            return Err(McscError::DimensionMismatch {
                expected: k,
                got: f.nrows().max(f.ncols()).max(dst.k()),
            });
        }
        for &v in &f {
            if !v.is_finite() || v < 0.0 {
                return Err(McscError::NotDistribution(format!(
                    "transport plan entry {v}"
                )));
            }
        }
        for i in 0..k {
            let rs: f64 = f.row(i).sum();
            if (rs - src.get(i + 1)).abs() > MARGINAL_TOL {
                return Err(McscError::InfeasibleMarginals {
                    src_sum: rs,
                    dst_sum: src.get(i + 1),
                });
            }
            let cs: f64 = f.column(i).sum();
            if (cs - dst.get(i + 1)).abs() > MARGINAL_TOL {
                return Err(McscError::InfeasibleMarginals {
                    src_sum: cs,
                    dst_sum: dst.get(i + 1),
                });
            }
        }
        Ok(Self { f })
    }

    pub fn k(&self) -> usize {
        self.f.nrows()
    }

    pub fn as_array(&self) -> &Array2<f64> {
        &self.f
    }

    /// Total transport cost `sum_ij F_ij D_ij`.
    pub fn cost(&self, d: &DistanceMatrix) -> f64 {
        self.f
            .indexed_iter()
            .map(|((i, j), &v)| v * d.as_array()[[i, j]])
            .sum()
    }
}

/// Exact OT plan from `src` to `dst` with respect to the distance matrix.
pub fn solve_ot(
    src: &Distribution,
    dst: &Distribution,
    d: &DistanceMatrix,
) -> Result<TransportPlan> {
    let k = src.k();
    if dst.k() != k || d.k() != k {
        return Err(McscError::DimensionMismatch {
            expected: k,
            got: dst.k().min(d.k()),
        });
    }
    let flow = solve_transportation(
        src.as_array().as_slice().unwrap(),
        dst.as_array().as_slice().unwrap(),
        d.as_array(),
    )?;
    TransportPlan::new(flow, src, dst)
}

/// Solve the balanced transportation problem
/// `min sum_ij F_ij cost_ij  s.t.  row sums = supply, column sums = demand`
/// with the transportation simplex. Bland's entering rule keeps degenerate
/// instances from cycling.
pub fn solve_transportation(
    supply: &[f64],
    demand: &[f64],
    cost: &Array2<f64>,
) -> Result<Array2<f64>> {
    let m = supply.len();
    let n = demand.len();
    if m == 0 || n == 0 {
        return Err(McscError::EmptyInput("transportation marginals"));
    }
    if cost.nrows() != m || cost.ncols() != n {
        return Err(McscError::DimensionMismatch {
            expected: m * n,
            got: cost.nrows() * cost.ncols(),
        });
    }
    if supply.iter().chain(demand).any(|v| !v.is_finite() || *v < 0.0) {
        return Err(McscError::NotDistribution("negative marginal".into()));
    }
    let s_total: f64 = supply.iter().sum();
    let d_total: f64 = demand.iter().sum();
    if (s_total - d_total).abs() > 1e-9 {
        return Err(McscError::InfeasibleMarginals {
            src_sum: s_total,
            dst_sum: d_total,
        });
    }

    // Northwest-corner initial basic feasible solution. The path from (0,0)
    // to (m-1,n-1) moves only down/right, so exactly m+n-1 cells enter the
    // basis (some possibly with zero flow) and they form a spanning tree of
    // the bipartite graph.
    let mut flow = Array2::<f64>::zeros((m, n));
    let mut in_basis = vec![false; m * n];
    let mut rs = supply.to_vec();
    let mut ds = demand.to_vec();
    let (mut i, mut j) = (0usize, 0usize);
    loop {
        let f = rs[i].min(ds[j]);
        flow[[i, j]] = f;
        in_basis[i * n + j] = true;
        rs[i] -= f;
        ds[j] -= f;
        if i == m - 1 && j == n - 1 {
            break;
        }
        if j == n - 1 || (rs[i] <= ds[j] && i < m - 1) {
            i += 1;
        } else {
            j += 1;
        }
    }

    let max_cost = cost.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
    let tol = 1e-12 * (1.0 + max_cost);
    let pivot_cap = 1000 * (m + n) * (m + n);

    for _pivot in 0..pivot_cap {
        // Node potentials u (rows) and v (cols) from u_i + v_j = c_ij on the
        // basis tree, rooted at row 0 with u_0 = 0.
        let (u, v) = potentials(m, n, &in_basis, cost)?;

        // Entering arc: Bland's rule, first cell in lexicographic order with
        // negative reduced cost.
        let mut entering = None;
        'scan: for ei in 0..m {
            for ej in 0..n {
                if !in_basis[ei * n + ej] && cost[[ei, ej]] - u[ei] - v[ej] < -tol {
                    entering = Some((ei, ej));
                    break 'scan;
                }
            }
        }
        let Some((ei, ej)) = entering else {
            return Ok(flow);
        };

        // The basis tree plus the entering arc contains a unique cycle:
        // entering arc + the tree path from column node ej back to row node
        // ei. Cells at even positions get +theta, odd positions -theta.
        let cycle = cycle_path(m, n, &in_basis, ei, ej)?;
        let mut theta = f64::INFINITY;
        for (pos, &(ci, cj)) in cycle.iter().enumerate() {
            if pos % 2 == 1 {
                theta = theta.min(flow[[ci, cj]]);
            }
        }
        // Leaving arc: lexicographically smallest minus-cell achieving theta.
        let mut leaving = None;
        for (pos, &(ci, cj)) in cycle.iter().enumerate() {
            if pos % 2 == 1
                && flow[[ci, cj]] <= theta + 1e-15
                && leaving.is_none_or(|l| (ci, cj) < l)
            {
                leaving = Some((ci, cj));
            }
        }
        let leaving = leaving.expect("cycle has at least one minus cell");
        for (pos, &(ci, cj)) in cycle.iter().enumerate() {
            if pos % 2 == 0 {
                flow[[ci, cj]] += theta;
            } else {
                flow[[ci, cj]] -= theta;
                if flow[[ci, cj]] < 0.0 {
                    flow[[ci, cj]] = 0.0;
                }
            }
        }
        in_basis[ei * n + ej] = true;
        in_basis[leaving.0 * n + leaving.1] = false;
    }

    Err(McscError::NoConvergence {
        iterations: pivot_cap,
        context: "transportation simplex",
    })
}

/// Solve `u_i + v_j = c_ij` over the basis tree (row nodes `0..m`, column
/// nodes `m..m+n`), rooted at row 0.
fn potentials(
    m: usize,
    n: usize,
    in_basis: &[bool],
    cost: &Array2<f64>,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let nodes = m + n;
    let mut adj: Vec<Vec<(usize, usize, usize)>> = vec![Vec::new(); nodes];
    for i in 0..m {
        for j in 0..n {
            if in_basis[i * n + j] {
                adj[i].push((m + j, i, j));
                adj[m + j].push((i, i, j));
            }
        }
    }
    let mut u = vec![f64::NAN; m];
    let mut v = vec![f64::NAN; n];
    let mut visited = vec![false; nodes];
    let mut stack = vec![0usize];
    u[0] = 0.0;
    visited[0] = true;
    while let Some(node) = stack.pop() {
        for &(other, ci, cj) in &adj[node] {
            if !visited[other] {
                visited[other] = true;
                if other >= m {
                    v[other - m] = cost[[ci, cj]] - u[ci];
                } else {
                    u[other] = cost[[ci, cj]] - v[cj];
                }
                stack.push(other);
            }
        }
    }
    if visited.iter().any(|&x| !x) {
        // The basis always spans by construction; a disconnected basis means
        // the pivot bookkeeping broke down.
        return Err(McscError::SingularSystem("transportation basis tree"));
    }
    Ok((u, v))
}

/// Cells of the unique cycle created by adding `(ei, ej)` to the basis tree,
/// starting with the entering cell.
fn cycle_path(
    m: usize,
    n: usize,
    in_basis: &[bool],
    ei: usize,
    ej: usize,
) -> Result<Vec<(usize, usize)>> {
    let nodes = m + n;
    let mut adj: Vec<Vec<(usize, usize, usize)>> = vec![Vec::new(); nodes];
    for i in 0..m {
        for j in 0..n {
            if in_basis[i * n + j] {
                adj[i].push((m + j, i, j));
                adj[m + j].push((i, i, j));
            }
        }
    }
    // Path from column node ej to row node ei through the tree.
    let start = m + ej;
    let goal = ei;
    let mut parent: Vec<Option<(usize, usize, usize)>> = vec![None; nodes];
    let mut visited = vec![false; nodes];
    let mut queue = std::collections::VecDeque::new();
    visited[start] = true;
    queue.push_back(start);
    while let Some(node) = queue.pop_front() {
        if node == goal {
            break;
        }
        for &(other, ci, cj) in &adj[node] {
            if !visited[other] {
                visited[other] = true;
                parent[other] = Some((node, ci, cj));
                queue.push_back(other);
            }
        }
    }
    if !visited[goal] {
        return Err(McscError::SingularSystem("transportation cycle search"));
    }
    let mut cells = vec![(ei, ej)];
    let mut node = goal;
    while node != start {
        let (prev, ci, cj) = parent[node].expect("path exists");
        cells.push((ci, cj));
        node = prev;
    }
    Ok(cells)
}

/// Entrywise mean of transport plans (Eq.-style `F_bar`); the result is
/// plan-shaped but its marginals are the averages of the inputs'.
pub fn average_plan(plans: &[TransportPlan]) -> Result<Array2<f64>> {
    if plans.is_empty() {
        return Err(McscError::EmptyInput("transport plans"));
    }
    let k = plans[0].k();
    let mut acc = Array2::<f64>::zeros((k, k));
    for p in plans {
        if p.k() != k {
            return Err(McscError::DimensionMismatch {
                expected: k,
                got: p.k(),
            });
        }
        acc += p.as_array();
    }
    acc.mapv_inplace(|v| v / plans.len() as f64);
    Ok(acc)
}

/// Turn an averaged plan into a column-stochastic transition matrix:
/// `A_ji = F_ij / sum_l F_il`. Rows with zero outflow map to self-transition
/// unit columns.
pub fn plan_to_transition(f_bar: &Array2<f64>) -> Result<TransitionMatrix> {
    let k = f_bar.nrows();
    if f_bar.ncols() != k || k == 0 {
        return Err(McscError::DimensionMismatch {
            expected: k,
            got: f_bar.ncols(),
        });
    }
    for &v in f_bar {
        if !v.is_finite() || v < 0.0 {
            return Err(McscError::NotDistribution(format!("plan entry {v}")));
        }
    }
    let mut a = Array2::<f64>::zeros((k, k));
    for i in 0..k {
        let total: f64 = f_bar.row(i).sum();
        if total == 0.0 {
            a[[i, i]] = 1.0;
        } else {
            for j in 0..k {
                a[[j, i]] = f_bar[[i, j]] / total;
            }
        }
    }
    TransitionMatrix::new(a)
}

/// Interpolate a snapshot series onto `grid` (entrywise linear), apply a
/// centered moving average of half-width `smooth_window` (truncated at the
/// boundaries), and renormalize each point onto the simplex.
pub fn regrid_series(
    series: &DistributionSeries,
    grid: &[f64],
    smooth_window: usize,
) -> Result<DistributionSeries> {
    let times = series.times();
    let (t_min, t_max) = (times[0], times[times.len() - 1]);
    for &g in grid {
        if !g.is_finite() || g < t_min || g > t_max {
            return Err(McscError::GridOutOfRange(g));
        }
    }
    if grid.is_empty() {
        return Err(McscError::EmptyInput("time grid"));
    }
    let k = series.k();

    // Entrywise linear interpolation.
    let mut interp: Vec<Vec<f64>> = Vec::with_capacity(grid.len());
    for &g in grid {
        let seg = times.partition_point(|&t| t <= g);
        let z = if seg == 0 {
            series.points()[0].as_array().to_vec()
        } else if seg == times.len() {
            series.points()[times.len() - 1].as_array().to_vec()
        } else {
            let (t0, t1) = (times[seg - 1], times[seg]);
            let w = (g - t0) / (t1 - t0);
            let z0 = series.points()[seg - 1].as_array();
            let z1 = series.points()[seg].as_array();
            (0..k).map(|s| (1.0 - w) * z0[s] + w * z1[s]).collect()
        };
        interp.push(z);
    }

    // Centered moving average with truncated windows, then renormalize.
    let mut points = Vec::with_capacity(grid.len());
    for t in 0..interp.len() {
        let lo = t.saturating_sub(smooth_window);
        let hi = (t + smooth_window).min(interp.len() - 1);
        let count = (hi - lo + 1) as f64;
        let mut z = vec![0.0; k];
        for row in &interp[lo..=hi] {
            for (acc, v) in z.iter_mut().zip(row) {
                *acc += v;
            }
        }
        for v in &mut z {
            *v /= count;
        }
        points.push(Distribution::from_weights(&z)?);
    }
    DistributionSeries::new(grid.to_vec(), points)
}

/// Estimate a time-invariant transition matrix from a snapshot series:
/// solve OT on every consecutive pair, average the plans, and normalize.
///
/// Logs a warning when the free-run simulation from the first snapshot
/// deviates from the series by more than [`FREE_RUN_WARN_L1`] in L1 at some
/// step, which usually means the series needs stronger smoothing.
pub fn match_series(series: &DistributionSeries, d: &DistanceMatrix) -> Result<TransitionMatrix> {
    if series.len() < 2 {
        return Err(McscError::InvalidConfig(
            "matching needs at least 2 snapshots".into(),
        ));
    }
    let points = series.points();
    let plans: Vec<TransportPlan> = (0..points.len() - 1)
        .into_par_iter()
        .map(|t| solve_ot(&points[t], &points[t + 1], d))
        .collect::<Result<_>>()?;
    let f_bar = average_plan(&plans)?;
    let a = plan_to_transition(&f_bar)?;

    let dev = free_run_deviation(&a, series)?;
    let worst = dev.iter().cloned().fold(0.0f64, f64::max);
    if worst > FREE_RUN_WARN_L1 {
        log::warn!(
            "free-run simulation deviates from the snapshot series by up to {worst:.3} (L1); \
             consider stronger smoothing of the series before matching"
        );
    }
    Ok(a)
}

/// Per-step L1 distance between the free-run evolution `z(t) = A^t z(1)` and
/// the observed series.
pub fn free_run_deviation(a: &TransitionMatrix, series: &DistributionSeries) -> Result<Vec<f64>> {
    let run = evolve(a, &series.points()[0], series.len() - 1)?;
    Ok(run
        .points()
        .iter()
        .zip(series.points())
        .map(|(x, y)| x.l1_distance(y))
        .collect())
}
