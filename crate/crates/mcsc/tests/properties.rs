//! Cross-module invariants: stochasticity preservation, simplex
//! preservation, two-route stationary agreement, OT optimality against a
//! brute-force vertex oracle, and control-plan structure on randomized
//! problems.

use mcsc::chain::{
    apply_damping, apply_resetting, estimate_relative_frequency, estimate_weighted, evolve,
    extract_events, reduce, smooth_kernel, stationary, Distribution, StationaryMethod,
    TransitionMatrix,
};
use mcsc::control::{greedy_optimize, ControlConfig};
use mcsc::geometry::{
    fit_kmeans, partition_per_axis, DistanceMatrix, Distance, EdgeRule, LabeledRecord,
    LabeledSeries,
};
use mcsc::transport::{solve_ot, solve_transportation};

use ndarray::{Array1, Array2};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_stochastic(k: usize, rng: &mut ChaCha8Rng) -> TransitionMatrix {
    let mut a = Array2::<f64>::zeros((k, k));
    for i in 0..k {
        let mut col: Vec<f64> = (0..k).map(|_| rng.random::<f64>() + 1e-3).collect();
        let s: f64 = col.iter().sum();
        for v in &mut col {
            *v /= s;
        }
        for j in 0..k {
            a[[j, i]] = col[j];
        }
    }
    TransitionMatrix::new(a).unwrap()
}

fn column_sums_one(a: &TransitionMatrix) -> bool {
    (0..a.k()).all(|i| (a.as_array().column(i).sum() - 1.0).abs() <= 1e-12)
}

proptest! {
    #[test]
    fn transforms_preserve_column_stochasticity(seed in 0u64..500, k in 2usize..12) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random_stochastic(k, &mut rng);
        prop_assert!(column_sums_one(&a));

        let damped = apply_damping(&a, 1e-4).unwrap();
        prop_assert!(column_sums_one(&damped));
        prop_assert!(damped.as_array().iter().all(|&v| v > 0.0));

        let pts: Vec<Vec<f64>> = (0..k).map(|i| vec![i as f64]).collect();
        let d = DistanceMatrix::from_points(&pts, Distance::Euclidean).unwrap();
        let smoothed = smooth_kernel(&a, &d, 0.7).unwrap();
        prop_assert!(column_sums_one(&smoothed));
        prop_assert!(smoothed.as_array().iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn evolve_stays_on_simplex(seed in 0u64..200, k in 2usize..10, steps in 1usize..60) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random_stochastic(k, &mut rng);
        let z0 = Distribution::uniform(k);
        let path = evolve(&a, &z0, steps).unwrap();
        for p in path.points() {
            let s: f64 = p.as_array().sum();
            prop_assert!((s - 1.0).abs() <= 1e-12);
            prop_assert!(p.as_array().iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn per_axis_roundtrip_random_bins(b1 in 1usize..5, b2 in 1usize..5, b3 in 1usize..4) {
        let pts: Vec<Vec<f64>> = (0..120)
            .map(|i| vec![(i % 11) as f64, (i % 13) as f64, (i % 7) as f64])
            .collect();
        let p = partition_per_axis(&pts, &[b1, b2, b3], EdgeRule::UniformRange).unwrap();
        prop_assert_eq!(p.k(), b1 * b2 * b3);
        for label in 1..=p.k() {
            let center = p.representative(label).unwrap();
            prop_assert_eq!(p.assign(&center).unwrap(), label);
        }
    }

    #[test]
    fn every_finite_point_gets_exactly_one_label(seed in 0u64..200) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pts: Vec<Vec<f64>> = (0..60)
            .map(|_| vec![rng.random::<f64>() * 10.0, rng.random::<f64>() * 10.0])
            .collect();
        let p = fit_kmeans(&pts, 5, seed, 100).unwrap();
        let probe = vec![rng.random::<f64>() * 20.0 - 5.0, rng.random::<f64>() * 20.0 - 5.0];
        let label = p.assign(&probe).unwrap();
        prop_assert!((1..=5).contains(&label));
    }
}

#[test]
fn stationary_routes_agree_on_random_damped_chains() {
    let mut rng = ChaCha8Rng::seed_from_u64(71);
    for k in [2usize, 5, 17, 50] {
        for _ in 0..5 {
            let a = apply_damping(&random_stochastic(k, &mut rng), 1e-8).unwrap();
            let zr = stationary(&a, StationaryMethod::ReducedForm, 1e-13).unwrap();
            let zp = stationary(&a, StationaryMethod::PowerIteration, 1e-13).unwrap();
            assert!(
                zr.l1_distance(&zp) < 1e-10,
                "K={k}: routes differ by {}",
                zr.l1_distance(&zp)
            );
        }
    }
}

#[test]
fn reduced_dynamics_reproduce_full_evolution() {
    let mut rng = ChaCha8Rng::seed_from_u64(5150);
    for k in 2usize..=6 {
        let a = apply_damping(&random_stochastic(k, &mut rng), 1e-6).unwrap();
        let red = reduce(&a).unwrap();
        let z0 = Distribution::point_mass(k, 1).unwrap();
        let path = evolve(&a, &z0, 50).unwrap();

        // Evolve the affine reduced system z~(t+1) = (A~ - a e^T) z~(t) + a
        // and lift back with z_K = 1 - sum(z~).
        let mut z_tilde = Array1::from_iter(z0.as_array().iter().take(k - 1).copied());
        for (t, full) in path.points().iter().enumerate() {
            let mut lifted = z_tilde.to_vec();
            lifted.push(1.0 - z_tilde.sum());
            for (s, v) in lifted.iter().enumerate() {
                assert!(
                    (v - full.as_array()[s]).abs() < 1e-10,
                    "K={k} t={t} state {s}"
                );
            }
            z_tilde = red.a_prime_tilde.dot(&z_tilde) + &red.a;
        }
    }
}

#[test]
fn long_ergodic_series_empirical_matches_stationary() {
    // Single long 1D double-well run: the stationary distribution of the
    // estimated damped chain converges to the empirical label histogram.
    let config = mcsc::models::SimConfig::dw1_defaults(17);
    let traj = mcsc::models::simulate_dw1(&config).unwrap();
    let partition = partition_per_axis(&traj.points, &[20], EdgeRule::Quantile).unwrap();
    let records = traj
        .points
        .iter()
        .zip(&traj.times)
        .map(|(p, &t)| LabeledRecord {
            individual: traj.individual_id.clone(),
            time: t,
            label: partition.assign(p).unwrap(),
        })
        .collect();
    let series = LabeledSeries::new(records, 20).unwrap();
    let events = extract_events(&series);
    let a = apply_damping(&estimate_relative_frequency(&events).unwrap(), 1e-10).unwrap();
    let z = stationary(&a, StationaryMethod::ReducedForm, 1e-12).unwrap();
    let hist = series.label_histogram();
    let l1: f64 = hist
        .iter()
        .zip(z.as_array())
        .map(|(a, b)| (a - b).abs())
        .sum();
    assert!(l1 < 0.05, "empirical vs stationary L1 = {l1}");
}

#[test]
fn resetting_gives_every_observed_state_an_exit() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let k = 8;
    let mut records = Vec::new();
    for m in 0..6 {
        let len = rng.random_range(1..10usize);
        for t in 0..len {
            records.push(LabeledRecord {
                individual: format!("m{m}"),
                time: t as i64,
                label: rng.random_range(1..=k),
            });
        }
    }
    let series = LabeledSeries::new(records, k).unwrap();
    let events = apply_resetting(&extract_events(&series), &series, false).unwrap();
    let mut observed = vec![false; k];
    let mut has_exit = vec![false; k];
    for r in series.records() {
        observed[r.label - 1] = true;
    }
    for e in events.events() {
        has_exit[e.from - 1] = true;
    }
    for s in 0..k {
        if observed[s] {
            assert!(has_exit[s], "state {} observed but has no outgoing event", s + 1);
        }
    }
    // After damping the chain is strictly positive.
    let a = apply_damping(&estimate_relative_frequency(&events).unwrap(), 1e-10).unwrap();
    assert!(a.as_array().iter().all(|&v| v > 0.0));
}

#[test]
fn weighted_equals_relative_frequency_for_single_individual() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..20 {
        let k = rng.random_range(2..7usize);
        let len = rng.random_range(2..40usize);
        let records: Vec<LabeledRecord> = (0..len)
            .map(|t| LabeledRecord {
                individual: "only".into(),
                time: t as i64,
                label: rng.random_range(1..=k),
            })
            .collect();
        let series = LabeledSeries::new(records, k).unwrap();
        let events = extract_events(&series);
        let rf = estimate_relative_frequency(&events).unwrap();
        let w = estimate_weighted(&events, 0.37).unwrap();
        assert_eq!(rf.as_array(), w.as_array(), "exact equality for M = 1");
    }
}

// ---------------------------------------------------------------------------
// OT oracle: vertex enumeration of the transportation polytope
// ---------------------------------------------------------------------------

/// Brute-force optimum: enumerate every basis (spanning tree of the
/// bipartite supply/demand graph with m+n-1 arcs), solve the flows by leaf
/// peeling, and keep the cheapest feasible vertex.
fn brute_force_transport_cost(supply: &[f64], demand: &[f64], cost: &Array2<f64>) -> f64 {
    let m = supply.len();
    let n = demand.len();
    let cells: Vec<(usize, usize)> = (0..m)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .collect();
    let basis_size = m + n - 1;
    let mut best = f64::INFINITY;

    // Iterate subsets of size basis_size via bitmask (mn <= 16 here).
    let total = 1usize << cells.len();
    for mask in 0..total {
        if (mask as u32).count_ones() as usize != basis_size {
            continue;
        }
        let chosen: Vec<(usize, usize)> = cells
            .iter()
            .enumerate()
            .filter(|(idx, _)| mask & (1 << idx) != 0)
            .map(|(_, &c)| c)
            .collect();

        // Leaf peeling: solve flows if the arcs form a spanning tree.
        let mut rs = supply.to_vec();
        let mut ds = demand.to_vec();
        let mut remaining = chosen.clone();
        let mut flows: Vec<((usize, usize), f64)> = Vec::new();
        let mut ok = true;
        while !remaining.is_empty() {
            let mut row_deg = vec![0usize; m];
            let mut col_deg = vec![0usize; n];
            for &(i, j) in &remaining {
                row_deg[i] += 1;
                col_deg[j] += 1;
            }
            let leaf_pos = remaining.iter().position(|&(i, j)| {
                row_deg[i] == 1 || col_deg[j] == 1
            });
            let Some(pos) = leaf_pos else {
                ok = false; // pure cycle: not a tree
                break;
            };
            let (i, j) = remaining.swap_remove(pos);
            let f = if row_deg[i] == 1 { rs[i] } else { ds[j] };
            flows.push(((i, j), f));
            rs[i] -= f;
            ds[j] -= f;
        }
        if !ok {
            continue;
        }
        // Residuals must vanish and flows must be nonnegative.
        if rs.iter().chain(ds.iter()).any(|v| v.abs() > 1e-9) {
            continue;
        }
        if flows.iter().any(|&(_, f)| f < -1e-12) {
            continue;
        }
        let c: f64 = flows.iter().map(|&((i, j), f)| f * cost[[i, j]]).sum();
        best = best.min(c);
    }
    best
}

#[test]
fn transport_solver_matches_vertex_oracle_k3_k4() {
    let mut rng = ChaCha8Rng::seed_from_u64(314);
    for k in [3usize, 4] {
        // Distances from random point layouts plus a line layout.
        for trial in 0..25 {
            let pts: Vec<Vec<f64>> = if trial == 0 {
                (0..k).map(|i| vec![i as f64]).collect()
            } else {
                (0..k)
                    .map(|_| vec![rng.random::<f64>() * 3.0, rng.random::<f64>() * 3.0])
                    .collect()
            };
            let d = DistanceMatrix::from_points(&pts, Distance::Euclidean).unwrap();
            let raw_s: Vec<f64> = (0..k).map(|_| rng.random::<f64>() + 0.01).collect();
            let raw_t: Vec<f64> = (0..k).map(|_| rng.random::<f64>() + 0.01).collect();
            let src = Distribution::from_weights(&raw_s).unwrap();
            let dst = Distribution::from_weights(&raw_t).unwrap();

            let plan = solve_ot(&src, &dst, &d).unwrap();
            let solver_cost = plan.cost(&d);
            let oracle = brute_force_transport_cost(
                src.as_array().as_slice().unwrap(),
                dst.as_array().as_slice().unwrap(),
                d.as_array(),
            );
            assert!(
                (solver_cost - oracle).abs() < 1e-9,
                "K={k} trial={trial}: solver {solver_cost} vs oracle {oracle}"
            );
        }
    }
}

#[test]
fn transport_solver_handles_degenerate_grid_marginals() {
    // Marginals with many zeros exercise degenerate pivots.
    let d = DistanceMatrix::from_points(
        &[vec![0.0], vec![1.0], vec![2.5]],
        Distance::Euclidean,
    )
    .unwrap();
    let quarters = [0.0, 0.25, 0.5, 0.75, 1.0];
    let mut checked = 0;
    for &a in &quarters {
        for &b in &quarters {
            let c: f64 = 1.0 - a - b;
            if c < -1e-12 {
                continue;
            }
            let src = Distribution::new(ndarray::array![a, b, c.max(0.0)]).unwrap();
            for &x in &quarters {
                for &y in &quarters {
                    let z: f64 = 1.0 - x - y;
                    if z < -1e-12 {
                        continue;
                    }
                    let dst = Distribution::new(ndarray::array![x, y, z.max(0.0)]).unwrap();
                    let plan = solve_ot(&src, &dst, &d).unwrap();
                    let oracle = brute_force_transport_cost(
                        src.as_array().as_slice().unwrap(),
                        dst.as_array().as_slice().unwrap(),
                        d.as_array(),
                    );
                    assert!((plan.cost(&d) - oracle).abs() < 1e-9);
                    checked += 1;
                }
            }
        }
    }
    assert_eq!(checked, 225, "15 x 15 grid pairs");
}

#[test]
fn transportation_rejects_unbalanced_problems() {
    let cost = Array2::zeros((2, 3));
    assert!(solve_transportation(&[0.7, 0.7], &[0.3, 0.3, 0.3], &cost).is_err());
}

// ---------------------------------------------------------------------------
// Control invariants on randomized problems
// ---------------------------------------------------------------------------

#[test]
fn control_plans_valid_on_random_problems() {
    let mut rng = ChaCha8Rng::seed_from_u64(2718);
    for trial in 0..15 {
        let k = rng.random_range(2..10usize);
        let a = apply_damping(&random_stochastic(k, &mut rng), 1e-8).unwrap();
        let r = Array1::from_shape_fn(k, |_| rng.random::<f64>() * 4.0 - 2.0);
        let mut config = ControlConfig::new(
            rng.random::<f64>() * 0.1,
            rng.random::<f64>() * 0.1,
        );
        config.candidate_fraction = 0.5;
        let plan = greedy_optimize(&a, &r, &config).unwrap();
        plan.validate(&a).expect("plan invariants");

        // Suppression-only mode never increases any off-diagonal entry.
        for i in 0..k {
            for j in 0..k {
                if i != j {
                    assert!(
                        plan.a_prime[[j, i]] <= 1e-15,
                        "trial {trial}: off-diagonal increased"
                    );
                }
            }
        }
    }
}
