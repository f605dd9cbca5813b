//! Independent exact oracles for the riskiest algorithms: the
//! knowledge-channel planner (imperfect recall), the Thompson history tree
//! (closed-form action integration), and the transport solver on
//! non-trivial metrics. Each oracle re-derives the quantity through a
//! different code path and representation, then demands agreement to within
//! accumulated float error.

use mbr_core::env::{EnvironmentSpec, History, StepRecord};
use mbr_core::gen::{
    generate_random_instance, generate_random_knowledge_kernel, InstanceKind, SizeCaps,
};
use mbr_core::inference::{enumerate_history_tree, history_posterior, TreePolicy};
use mbr_core::info::{wasserstein1, FiniteMetric};
use mbr_core::planning::{
    bcr_with_knowledge, optimal_policy_known_theta, thompson_action_dist, KnowledgeKernelSpec,
};
use mbr_core::prob::{FiniteDistribution, RandomSource};
use std::collections::BTreeMap;

const BUDGET: usize = 1_000_000;

/// All `(t, prefix)` decision sites of a knowledge channel with
/// full-support rows, in a fixed order.
fn knowledge_sites(n_knowledge: usize, horizon: usize) -> Vec<(usize, Vec<usize>)> {
    let mut sites = Vec::new();
    let mut prefixes: Vec<Vec<usize>> = (0..n_knowledge).map(|x| vec![x]).collect();
    for t in 1..=horizon {
        for prefix in &prefixes {
            sites.push((t, prefix.clone()));
        }
        if t < horizon {
            let mut next = Vec::new();
            for prefix in &prefixes {
                for x in 0..n_knowledge {
                    let mut p = prefix.clone();
                    p.push(x);
                    next.push(p);
                }
            }
            prefixes = next;
        }
    }
    sites
}

/// Exact value of one fixed knowledge policy, written as a straight
/// trajectory-measure recursion (independent of the planner's frontier
/// bookkeeping).
#[allow(clippy::too_many_arguments)]
fn knowledge_policy_value(
    spec: &EnvironmentSpec,
    know: &KnowledgeKernelSpec,
    action_at: &dyn Fn(usize, &[usize], usize) -> usize,
) -> f64 {
    fn recurse(
        spec: &EnvironmentSpec,
        know: &KnowledgeKernelSpec,
        action_at: &dyn Fn(usize, &[usize], usize) -> usize,
        t: usize,
        prefix: &mut Vec<usize>,
        theta: usize,
        state: usize,
        mass: f64,
    ) -> f64 {
        if t > spec.horizon || mass == 0.0 {
            return 0.0;
        }
        let action = action_at(t, prefix, state);
        let mut total = mass * spec.expected_reward(state, action, theta);
        if t < spec.horizon {
            for (y, &wy) in spec.outcome_row(state, theta).iter().enumerate() {
                if wy == 0.0 {
                    continue;
                }
                let know_row = know.step_row(state, action, y, theta, spec);
                for x_next in 0..know.n_knowledge {
                    let wx = know_row[x_next];
                    if wx == 0.0 {
                        continue;
                    }
                    for (s_next, &ws) in spec.trans_row(state, action, theta).iter().enumerate() {
                        if ws == 0.0 {
                            continue;
                        }
                        prefix.push(x_next);
                        total += recurse(
                            spec,
                            know,
                            action_at,
                            t + 1,
                            prefix,
                            theta,
                            s_next,
                            mass * wy * wx * ws,
                        );
                        prefix.pop();
                    }
                }
            }
        }
        total
    }
    let mut value = 0.0;
    for theta in 0..spec.n_params {
        let w_theta = spec.prior_weights()[theta];
        if w_theta == 0.0 {
            continue;
        }
        for s1 in 0..spec.n_states {
            let ws = spec.initial_row(theta)[s1];
            if ws == 0.0 {
                continue;
            }
            for x1 in 0..know.n_knowledge {
                let wx = know.initial_row(s1, theta, spec.n_params)[x1];
                if wx > 0.0 {
                    let mut prefix = vec![x1];
                    value += recurse(
                        spec,
                        know,
                        &action_at,
                        1,
                        &mut prefix,
                        theta,
                        s1,
                        w_theta * ws * wx,
                    );
                }
            }
        }
    }
    value
}

#[test]
fn knowledge_planner_matches_exhaustive_policy_enumeration() {
    // Tiny instances where every deterministic knowledge policy can be
    // tried: the planner's sequence-form maximization must find the same
    // supremum.
    for seed in 0..6u64 {
        let caps = SizeCaps {
            states: 2,
            actions: 2,
            outcomes: 2,
            params: 2,
            horizon: 2,
        };
        let instance =
            generate_random_instance(seed, &caps, InstanceKind::cycle(seed as usize));
        let spec = instance.base();
        let know = generate_random_knowledge_kernel(spec, 500 + seed, 2);
        let sites = knowledge_sites(2, spec.horizon);
        let n_slots = sites.len() * spec.n_states;
        assert!(n_slots <= 16, "brute force would be too large");
        let site_index = |t: usize, prefix: &[usize], state: usize| -> usize {
            let pos = sites
                .iter()
                .position(|(st, sp)| *st == t && sp == prefix)
                .expect("site enumerated");
            pos * spec.n_states + state
        };
        let mut best = f64::NEG_INFINITY;
        for combo in 0..(spec.n_actions as u64).pow(n_slots as u32) {
            let actions: Vec<usize> = (0..n_slots)
                .map(|slot| {
                    (combo / (spec.n_actions as u64).pow(slot as u32)) as usize
                        % spec.n_actions
                })
                .collect();
            let value = knowledge_policy_value(spec, &know, &|t, prefix, state| {
                actions[site_index(t, prefix, state)]
            });
            best = best.max(value);
        }
        let planned = bcr_with_knowledge(spec, &know, BUDGET).unwrap().value;
        assert!(
            (planned - best).abs() < 1e-10,
            "seed {seed}: planner {planned} vs brute force {best}"
        );
    }
}

/// Flat enumeration of every Thompson trajectory with from-scratch
/// posteriors, aggregated into `(history, state)` nodes.
fn thompson_nodes_by_flat_enumeration(
    spec: &EnvironmentSpec,
    psi: &mbr_core::planning::PolicyTable,
) -> Vec<BTreeMap<(Vec<(usize, usize, u64)>, usize), Vec<f64>>> {
    let rewards = spec.reachable_reward_set();
    let mut layers: Vec<BTreeMap<(Vec<(usize, usize, u64)>, usize), Vec<f64>>> =
        vec![BTreeMap::new(); spec.horizon + 1];
    #[allow(clippy::too_many_arguments)]
    fn recurse(
        spec: &EnvironmentSpec,
        psi: &mbr_core::planning::PolicyTable,
        rewards: &[f64],
        layers: &mut [BTreeMap<(Vec<(usize, usize, u64)>, usize), Vec<f64>>],
        t: usize,
        history: &mut History,
        state: usize,
        per_theta: Vec<f64>,
    ) {
        let key = (history.key(), state);
        let entry = layers[t - 1]
            .entry(key)
            .or_insert_with(|| vec![0.0; spec.n_params]);
        for theta in 0..spec.n_params {
            entry[theta] += per_theta[theta];
        }
        if t > spec.horizon {
            return;
        }
        let posterior = history_posterior(spec, history)
            .expect("materialized histories have positive probability")
            .dist;
        let nu = thompson_action_dist(spec, psi, &posterior, t, state);
        for a in 0..spec.n_actions {
            let wa = nu.weight(a);
            if wa == 0.0 {
                continue;
            }
            for &r in rewards {
                for s_next in 0..spec.n_states {
                    let child: Vec<f64> = (0..spec.n_params)
                        .map(|theta| {
                            per_theta[theta]
                                * wa
                                * spec.reward_likelihood(state, a, r, theta)
                                * spec.trans_row(state, a, theta)[s_next]
                        })
                        .collect();
                    let mass: f64 = (0..spec.n_params)
                        .map(|th| spec.prior_weights()[th] * child[th])
                        .sum();
                    if mass > 0.0 {
                        history.push(StepRecord {
                            state,
                            action: a,
                            reward: r,
                        });
                        recurse(spec, psi, rewards, layers, t + 1, history, s_next, child);
                        let records = history.records().to_vec();
                        *history = History::from_records(records[..records.len() - 1].to_vec());
                    }
                }
            }
        }
    }
    for s1 in 0..spec.n_states {
        let per_theta: Vec<f64> = (0..spec.n_params)
            .map(|theta| spec.initial_row(theta)[s1])
            .collect();
        let mass: f64 = (0..spec.n_params)
            .map(|th| spec.prior_weights()[th] * per_theta[th])
            .sum();
        if mass > 0.0 {
            let mut history = History::new();
            recurse(
                spec,
                psi,
                &rewards,
                &mut layers,
                1,
                &mut history,
                s1,
                per_theta,
            );
        }
    }
    layers
}

#[test]
fn thompson_tree_matches_flat_joint_enumeration() {
    // The layer-by-layer tree (posteriors aggregated from node reach
    // probabilities) must agree with a flat trajectory enumeration whose
    // posteriors are recomputed from scratch at every node.
    for seed in [0u64, 1, 2, 5, 9] {
        let instance = generate_random_instance(
            seed,
            &SizeCaps::default(),
            InstanceKind::cycle(seed as usize),
        );
        let spec = instance.base();
        let (psi, _) = optimal_policy_known_theta(spec);
        let tree = enumerate_history_tree(spec, TreePolicy::Thompson(&psi), BUDGET).unwrap();
        let oracle = thompson_nodes_by_flat_enumeration(spec, &psi);
        for t in 1..=spec.horizon + 1 {
            let layer = tree.layer(t);
            assert_eq!(layer.len(), oracle[t - 1].len(), "seed {seed}, t {t}");
            for node in layer {
                let key = (node.history.key(), node.state);
                let expected = &oracle[t - 1][&key];
                for theta in 0..spec.n_params {
                    assert!(
                        (node.per_theta[theta] - expected[theta]).abs() < 1e-12,
                        "seed {seed}, t {t}, theta {theta}: {} vs {}",
                        node.per_theta[theta],
                        expected[theta]
                    );
                }
            }
        }
    }
}

/// Kantorovich–Rubinstein dual by vertex enumeration (spanning trees of
/// tight constraints), for supports up to four points.
fn dual_value(p: &FiniteDistribution, q: &FiniteDistribution, metric: &FiniteMetric) -> f64 {
    let n = metric.n_points();
    let edges: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
        .collect();
    let mut best = f64::NEG_INFINITY;
    for mask in 0u32..(1 << edges.len()) {
        if mask.count_ones() as usize != n - 1 {
            continue;
        }
        let chosen: Vec<(usize, usize)> = edges
            .iter()
            .enumerate()
            .filter(|&(e, _)| mask & (1 << e) != 0)
            .map(|(_, &pair)| pair)
            .collect();
        for signs in 0u32..(1 << (n - 1)) {
            let mut f = vec![f64::NAN; n];
            f[0] = 0.0;
            let mut changed = true;
            while changed {
                changed = false;
                for (e, &(i, j)) in chosen.iter().enumerate() {
                    let sign = if signs & (1 << e) != 0 { 1.0 } else { -1.0 };
                    if !f[i].is_nan() && f[j].is_nan() {
                        f[j] = f[i] + sign * metric.distance(i, j);
                        changed = true;
                    } else if f[i].is_nan() && !f[j].is_nan() {
                        f[i] = f[j] - sign * metric.distance(i, j);
                        changed = true;
                    }
                }
            }
            if f.iter().any(|x| x.is_nan()) {
                continue;
            }
            let feasible = (0..n)
                .all(|i| (0..n).all(|j| (f[i] - f[j]).abs() <= metric.distance(i, j) + 1e-9));
            if feasible {
                let value: f64 = (0..n).map(|i| f[i] * (p.weight(i) - q.weight(i))).sum();
                best = best.max(value);
            }
        }
    }
    best
}

#[test]
fn transport_matches_dual_on_plane_metrics() {
    // Euclidean metrics from random points in the plane: genuinely
    // two-dimensional geometry, unlike the line metrics of the unit tests.
    let mut rng = RandomSource::new(1234, 8);
    for _ in 0..40 {
        let n = 3 + rng.next_below(2);
        let points: Vec<(f64, f64)> = (0..n)
            .map(|_| (4.0 * rng.next_f64(), 4.0 * rng.next_f64()))
            .collect();
        let matrix: Vec<Vec<f64>> = points
            .iter()
            .map(|&(x1, y1)| {
                points
                    .iter()
                    .map(|&(x2, y2)| ((x1 - x2).powi(2) + (y1 - y2).powi(2)).sqrt())
                    .collect()
            })
            .collect();
        let metric = FiniteMetric::new(matrix).unwrap();
        let draw = |rng: &mut RandomSource| {
            let raw: Vec<f64> = (0..n).map(|_| 1.0 - rng.next_f64()).collect();
            FiniteDistribution::normalize(&raw).unwrap()
        };
        let p = draw(&mut rng);
        let q = draw(&mut rng);
        let (w, coupling) = wasserstein1(&p, &q, &metric).unwrap();
        assert!(coupling.check_marginals(&p, &q, 1e-9));
        let dual = dual_value(&p, &q, &metric);
        assert!((w - dual).abs() < 1e-7, "primal {w} vs dual {dual}");
        // Primal feasibility of the witness at the reported cost.
        let mut cost = 0.0;
        for i in 0..n {
            for j in 0..n {
                cost += coupling.mass(i, j) * metric.distance(i, j);
            }
        }
        assert!((cost - w).abs() < 1e-9);
    }
}
