//! Seeded random instance generation for the randomized suites.
//!
//! Kernel rows are normalized positive uniform draws. Rewards are drawn from
//! the grid `{0, 0.25, 0.5, 0.75, 1}` so the reachable reward set stays
//! small and exact-equality merging of reward values is safe. The same seed
//! always yields the same instance.

use crate::env::{EnvironmentSpec, Instance, PartialFeedbackSpec};
use crate::planning::{KnowledgeKernelSpec, ProcessingKernelSpec};
use crate::prob::RandomSource;

pub const REWARD_GRID: [f64; 5] = [0.0, 0.25, 0.5, 0.75, 1.0];

/// Size caps for generated instances.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SizeCaps {
    pub states: usize,
    pub actions: usize,
    pub outcomes: usize,
    pub params: usize,
    pub horizon: usize,
}

impl Default for SizeCaps {
    fn default() -> Self {
        Self {
            states: 3,
            actions: 3,
            outcomes: 3,
            params: 3,
            horizon: 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InstanceKind {
    /// Fully random kernels: states move.
    General,
    /// State never changes; the outcome kernel is state-independent, so the
    /// optimal action is uniform over states and times.
    Static,
    /// Online optimization with partial feedback; arms independent given the
    /// parameter.
    PartialFeedback,
    /// Partial feedback where each coordinate is a permutation of one shared
    /// draw: observing any coordinate reveals the whole outcome vector.
    PartialFeedbackFullReveal,
}

impl InstanceKind {
    pub fn tag(&self) -> &'static str {
        match self {
            InstanceKind::General => "general",
            InstanceKind::Static => "static",
            InstanceKind::PartialFeedback => "pf",
            InstanceKind::PartialFeedbackFullReveal => "pf-reveal",
        }
    }

    /// Round-robin over the four kinds.
    pub fn cycle(index: usize) -> Self {
        match index % 4 {
            0 => InstanceKind::General,
            1 => InstanceKind::Static,
            2 => InstanceKind::PartialFeedback,
            _ => InstanceKind::PartialFeedbackFullReveal,
        }
    }
}

fn positive(rng: &mut RandomSource) -> f64 {
    1.0 - rng.next_f64()
}

fn normalized_row(rng: &mut RandomSource, n: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| positive(rng)).collect();
    let sum: f64 = raw.iter().sum();
    raw.into_iter().map(|w| w / sum).collect()
}

fn draw_dim(rng: &mut RandomSource, cap: usize) -> usize {
    if cap <= 1 {
        1
    } else {
        2 + rng.next_below(cap - 1)
    }
}

fn grid_reward(rng: &mut RandomSource) -> f64 {
    REWARD_GRID[rng.next_below(REWARD_GRID.len())]
}

fn shuffled_grid(rng: &mut RandomSource) -> Vec<f64> {
    let mut grid = REWARD_GRID.to_vec();
    for i in (1..grid.len()).rev() {
        grid.swap(i, rng.next_below(i + 1));
    }
    grid
}

fn point_mass_trans(n_states: usize, n_actions: usize, n_params: usize) -> Vec<f64> {
    let mut trans = vec![0.0; n_states * n_actions * n_params * n_states];
    for s in 0..n_states {
        for a in 0..n_actions {
            for theta in 0..n_params {
                trans[((s * n_actions + a) * n_params + theta) * n_states + s] = 1.0;
            }
        }
    }
    trans
}

/// Generates one valid instance of the requested kind within the caps.
pub fn generate_random_instance(seed: u64, caps: &SizeCaps, kind: InstanceKind) -> Instance {
    let mut rng = RandomSource::new(seed, 0x6e57);
    let horizon = 1 + rng.next_below(caps.horizon);
    let n_params = draw_dim(&mut rng, caps.params);
    let prior = normalized_row(&mut rng, n_params);
    match kind {
        InstanceKind::General | InstanceKind::Static => {
            let n_states = draw_dim(&mut rng, caps.states);
            let n_actions = draw_dim(&mut rng, caps.actions);
            let n_outcomes = draw_dim(&mut rng, caps.outcomes);
            let mut initial = Vec::with_capacity(n_params * n_states);
            for _ in 0..n_params {
                initial.extend(normalized_row(&mut rng, n_states));
            }
            let trans = if kind == InstanceKind::Static {
                point_mass_trans(n_states, n_actions, n_params)
            } else {
                let mut trans = Vec::with_capacity(n_states * n_actions * n_params * n_states);
                for _ in 0..n_states * n_actions * n_params {
                    trans.extend(normalized_row(&mut rng, n_states));
                }
                trans
            };
            let outcome = if kind == InstanceKind::Static {
                // One row per parameter, copied across states.
                let rows: Vec<Vec<f64>> = (0..n_params)
                    .map(|_| normalized_row(&mut rng, n_outcomes))
                    .collect();
                let mut outcome = Vec::with_capacity(n_states * n_params * n_outcomes);
                for _ in 0..n_states {
                    for row in &rows {
                        outcome.extend(row.iter().copied());
                    }
                }
                outcome
            } else {
                let mut outcome = Vec::with_capacity(n_states * n_params * n_outcomes);
                for _ in 0..n_states * n_params {
                    outcome.extend(normalized_row(&mut rng, n_outcomes));
                }
                outcome
            };
            let reward: Vec<f64> = (0..n_outcomes * n_actions)
                .map(|_| grid_reward(&mut rng))
                .collect();
            let spec = EnvironmentSpec::new(
                n_states, n_actions, n_outcomes, n_params, horizon, prior, initial, trans,
                outcome, reward,
            )
            .expect("generated shapes are consistent");
            debug_assert!(spec.validate().is_empty());
            Instance::General(spec)
        }
        InstanceKind::PartialFeedback | InstanceKind::PartialFeedbackFullReveal => {
            let n_actions = draw_dim(&mut rng, caps.actions.min(3));
            let n_per_action = draw_dim(&mut rng, caps.outcomes.min(3));
            let n_outcomes = n_per_action.pow(n_actions as u32);
            let preference: Vec<f64> = shuffled_grid(&mut rng)
                .into_iter()
                .take(n_per_action)
                .collect();
            let mut outcome = vec![0.0; n_params * n_outcomes];
            if kind == InstanceKind::PartialFeedback {
                // Independent per-arm outcome distributions.
                let arm_dists: Vec<Vec<Vec<f64>>> = (0..n_actions)
                    .map(|_| {
                        (0..n_params)
                            .map(|_| normalized_row(&mut rng, n_per_action))
                            .collect()
                    })
                    .collect();
                for theta in 0..n_params {
                    for y in 0..n_outcomes {
                        let mut w = 1.0;
                        for (a, dist) in arm_dists.iter().enumerate() {
                            let coord = (y / n_per_action.pow(a as u32)) % n_per_action;
                            w *= dist[theta][coord];
                        }
                        outcome[theta * n_outcomes + y] = w;
                    }
                }
            } else {
                // One shared draw, permuted per arm: coordinate a of the
                // realized vector is sigma_a(v).
                let mut perms: Vec<Vec<usize>> = vec![(0..n_per_action).collect()];
                for _ in 1..n_actions {
                    let mut p: Vec<usize> = (0..n_per_action).collect();
                    for i in (1..p.len()).rev() {
                        p.swap(i, rng.next_below(i + 1));
                    }
                    perms.push(p);
                }
                for theta in 0..n_params {
                    let q = normalized_row(&mut rng, n_per_action);
                    for (v, &w) in q.iter().enumerate() {
                        let mut y = 0;
                        for a in (0..n_actions).rev() {
                            y = y * n_per_action + perms[a][v];
                        }
                        outcome[theta * n_outcomes + y] = w;
                    }
                }
            }
            let mut reward = vec![0.0; n_outcomes * n_actions];
            for y in 0..n_outcomes {
                for a in 0..n_actions {
                    let coord = (y / n_per_action.pow(a as u32)) % n_per_action;
                    reward[y * n_actions + a] = preference[coord];
                }
            }
            let base = EnvironmentSpec::new(
                1,
                n_actions,
                n_outcomes,
                n_params,
                horizon,
                prior,
                vec![1.0; n_params],
                vec![1.0; n_actions * n_params],
                outcome,
                reward,
            )
            .expect("generated shapes are consistent");
            debug_assert!(base.validate().is_empty());
            let pf = PartialFeedbackSpec::new(
                base,
                n_per_action,
                preference,
                kind == InstanceKind::PartialFeedbackFullReveal,
            )
            .expect("generated partial-feedback structure is consistent");
            Instance::PartialFeedback(pf)
        }
    }
}

/// A random knowledge channel with full-support rows.
pub fn generate_random_knowledge_kernel(
    spec: &EnvironmentSpec,
    seed: u64,
    n_knowledge: usize,
) -> KnowledgeKernelSpec {
    let mut rng = RandomSource::new(seed, 0x6b6e);
    let mut initial = Vec::with_capacity(spec.n_states * spec.n_params * n_knowledge);
    for _ in 0..spec.n_states * spec.n_params {
        initial.extend(normalized_row(&mut rng, n_knowledge));
    }
    let rows = spec.n_states * spec.n_actions * spec.n_outcomes * spec.n_params;
    let mut step = Vec::with_capacity(rows * n_knowledge);
    for _ in 0..rows {
        step.extend(normalized_row(&mut rng, n_knowledge));
    }
    KnowledgeKernelSpec::new(spec, n_knowledge, initial, step).expect("consistent shapes")
}

/// A random processing channel with full-support rows over every knowledge
/// prefix.
pub fn generate_random_processing_kernel(
    n_knowledge: usize,
    n_processed: usize,
    horizon: usize,
    seed: u64,
) -> ProcessingKernelSpec {
    let mut rng = RandomSource::new(seed, 0x7072);
    let per_t: Vec<Vec<f64>> = (1..=horizon)
        .map(|t| {
            let n_prefixes = n_knowledge.pow(t as u32);
            let mut rows = Vec::with_capacity(n_prefixes * n_processed);
            for _ in 0..n_prefixes {
                rows.extend(normalized_row(&mut rng, n_processed));
            }
            rows
        })
        .collect();
    ProcessingKernelSpec::new(n_knowledge, n_processed, horizon, per_t)
        .expect("consistent shapes")
}
