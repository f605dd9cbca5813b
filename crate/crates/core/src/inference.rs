//! Exact Bayesian inference over the environment parameter and exhaustive
//! enumeration of histories with their probabilities.
//!
//! The history tree is the engine behind both exact planning and exact bound
//! evaluation: every node carries the exact probability of reaching it under
//! each parameter, so conditional expectations over histories are plain
//! finite sums with no estimation error. Thompson sampling is handled in
//! closed form — the sampled-parameter action distribution at a node is the
//! posterior pushed through the known-parameter policy, integrated exactly
//! rather than sampled.
//!
//! Two different posteriors appear, and the distinction matters:
//!
//! - the history posterior `P(Theta | h^t)` conditions on the records alone
//!   (this is what drives the Thompson action draw);
//! - the state posterior `P(Theta | h^t, s_t)` also conditions on the current
//!   state, i.e. on the transition that produced it (this is the belief the
//!   history-feedback planner maximizes over).

use crate::env::{EnvironmentSpec, History, PartialFeedbackSpec, StepRecord};
use crate::planning::{thompson_action_dist, InfoKey, InformationKind, PolicyTable};
use crate::prob::FiniteDistribution;
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum InferenceError {
    #[error("no parameter with positive mass can produce the observation")]
    ZeroLikelihood,
    #[error("node budget exceeded: {nodes} nodes at layer {layer}")]
    BudgetExceeded { nodes: usize, layer: usize },
    #[error("fixed policy has no action for t={time}, state={state}")]
    PolicyUndefined { time: usize, state: usize },
    #[error("query not applicable: {0}")]
    NotApplicable(String),
}

/// Exact posterior over the environment parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct Posterior {
    pub dist: FiniteDistribution,
}

impl Posterior {
    pub fn from_prior(spec: &EnvironmentSpec) -> Self {
        Self { dist: spec.prior() }
    }
}

/// One observed step: the state the agent was in, the action it took, the
/// reward it received, and the state it moved to.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepObservation {
    pub state: usize,
    pub action: usize,
    pub reward: f64,
    pub next_state: usize,
}

/// One step of Bayes rule: reweights by the reward likelihood at
/// `(state, action)` and the transition mass into `next_state`. Composed
/// from [`posterior_after_initial`], this yields the state posterior
/// `P(Theta | h^t, s_t)`.
pub fn posterior_update(
    spec: &EnvironmentSpec,
    current: &Posterior,
    observed: StepObservation,
) -> Result<Posterior, InferenceError> {
    let weights: Vec<f64> = (0..spec.n_params)
        .map(|theta| {
            current.dist.weight(theta)
                * spec.reward_likelihood(observed.state, observed.action, observed.reward, theta)
                * spec.trans_row(observed.state, observed.action, theta)[observed.next_state]
        })
        .collect();
    let dist =
        FiniteDistribution::normalize(&weights).map_err(|_| InferenceError::ZeroLikelihood)?;
    Ok(Posterior { dist })
}

/// Posterior after observing only the initial state.
pub fn posterior_after_initial(
    spec: &EnvironmentSpec,
    s1: usize,
) -> Result<Posterior, InferenceError> {
    let weights: Vec<f64> = (0..spec.n_params)
        .map(|theta| spec.prior_weights()[theta] * spec.initial_row(theta)[s1])
        .collect();
    let dist =
        FiniteDistribution::normalize(&weights).map_err(|_| InferenceError::ZeroLikelihood)?;
    Ok(Posterior { dist })
}

/// The history posterior `P(Theta | h^t)`, computed from scratch. The
/// likelihood contains the arrival factor of every recorded state and the
/// reward factor of every record, but not the transition out of the last
/// record (the current state is not part of the history).
pub fn history_posterior(
    spec: &EnvironmentSpec,
    history: &History,
) -> Result<Posterior, InferenceError> {
    let weights: Vec<f64> = (0..spec.n_params)
        .map(|theta| {
            let mut w = spec.prior_weights()[theta];
            let mut prev: Option<&StepRecord> = None;
            for record in history.records() {
                let arrival = match prev {
                    None => spec.initial_row(theta)[record.state],
                    Some(p) => spec.trans_row(p.state, p.action, theta)[record.state],
                };
                w *= arrival
                    * spec.reward_likelihood(record.state, record.action, record.reward, theta);
                prev = Some(record);
            }
            w
        })
        .collect();
    let dist =
        FiniteDistribution::normalize(&weights).map_err(|_| InferenceError::ZeroLikelihood)?;
    Ok(Posterior { dist })
}

/// The state posterior `P(Theta | h^t, s_t)`: the history posterior times
/// the arrival factor of the current state.
pub fn state_posterior(
    spec: &EnvironmentSpec,
    history: &History,
    current_state: usize,
) -> Result<Posterior, InferenceError> {
    let base = history_posterior(spec, history)?;
    let weights: Vec<f64> = (0..spec.n_params)
        .map(|theta| {
            let arrival = match history.records().last() {
                None => spec.initial_row(theta)[current_state],
                Some(p) => spec.trans_row(p.state, p.action, theta)[current_state],
            };
            base.dist.weight(theta) * arrival
        })
        .collect();
    let dist =
        FiniteDistribution::normalize(&weights).map_err(|_| InferenceError::ZeroLikelihood)?;
    Ok(Posterior { dist })
}

/// One node of the enumerated history tree: a history prefix together with
/// the current state, carrying exact reach probabilities.
#[derive(Debug, Clone)]
pub struct HistoryNode {
    pub history: History,
    /// Decision time `t` (1-based); the records have length `t - 1`.
    pub time: usize,
    pub state: usize,
    /// `P(node)` marginalized over the parameter under the prior.
    pub probability: f64,
    /// `P(node | theta)` for each parameter.
    pub per_theta: Vec<f64>,
    /// Action distribution the generating policy plays here; `None` on the
    /// terminal layer.
    pub action_dist: Option<FiniteDistribution>,
    /// Index of the parent node in the previous layer.
    pub parent: Option<usize>,
}

/// The policy that generates the tree: a fixed deterministic
/// history-feedback policy, or the Thompson sampling process driven by the
/// known-parameter policy.
#[derive(Debug, Clone, Copy)]
pub enum TreePolicy<'a> {
    Fixed(&'a PolicyTable),
    Thompson(&'a PolicyTable),
}

/// Layers of history nodes for decision times `t = 1..=T+1`; the final layer
/// holds terminal histories.
#[derive(Debug, Clone)]
pub struct HistoryTree {
    layers: Vec<Vec<HistoryNode>>,
}

impl HistoryTree {
    /// Nodes at decision time `t` (1-based, up to `T + 1`).
    pub fn layer(&self, t: usize) -> &[HistoryNode] {
        &self.layers[t - 1]
    }

    pub fn n_layers(&self) -> usize {
        self.layers.len()
    }

    /// Groups the nodes of layer `t` by their history, yielding the
    /// conditioning cells every bound expectation runs over. Cells are
    /// ordered by history key, so downstream sums are deterministic.
    pub fn history_cells(&self, spec: &EnvironmentSpec, t: usize) -> Vec<HistoryCell> {
        let mut groups: BTreeMap<Vec<(usize, usize, u64)>, Vec<usize>> = BTreeMap::new();
        for (idx, node) in self.layer(t).iter().enumerate() {
            groups.entry(node.history.key()).or_default().push(idx);
        }
        let nodes = self.layer(t);
        groups
            .into_values()
            .map(|indices| {
                let mut per_theta = vec![0.0; spec.n_params];
                for &i in &indices {
                    for theta in 0..spec.n_params {
                        per_theta[theta] += nodes[i].per_theta[theta];
                    }
                }
                let weight: f64 = (0..spec.n_params)
                    .map(|theta| spec.prior_weights()[theta] * per_theta[theta])
                    .sum();
                let posterior_raw: Vec<f64> = (0..spec.n_params)
                    .map(|theta| spec.prior_weights()[theta] * per_theta[theta])
                    .collect();
                let posterior = FiniteDistribution::normalize(&posterior_raw)
                    .expect("cells with zero probability are never materialized");
                // occupancy[theta][s] = P(S_t = s | theta, history)
                let mut occupancy = vec![0.0; spec.n_params * spec.n_states];
                for theta in 0..spec.n_params {
                    if per_theta[theta] > 0.0 {
                        for &i in &indices {
                            occupancy[theta * spec.n_states + nodes[i].state] +=
                                nodes[i].per_theta[theta] / per_theta[theta];
                        }
                    }
                }
                HistoryCell {
                    history: nodes[indices[0]].history.clone(),
                    node_indices: indices,
                    weight,
                    per_theta,
                    posterior,
                    occupancy,
                }
            })
            .collect()
    }
}

/// A conditioning cell: all layer-`t` nodes sharing one history.
#[derive(Debug, Clone)]
pub struct HistoryCell {
    pub history: History,
    pub node_indices: Vec<usize>,
    /// `P(history)` under the prior.
    pub weight: f64,
    /// `P(history | theta)`.
    pub per_theta: Vec<f64>,
    /// `P(theta | history)`.
    pub posterior: FiniteDistribution,
    /// `P(S_t = s | theta, history)`, flat over `(theta, s)`; rows for
    /// parameters that cannot produce this history are zero.
    pub occupancy: Vec<f64>,
}

impl HistoryCell {
    /// `P(Y_t = y | theta, history)`: outcome mass mixed over the current
    /// state occupancy.
    pub fn outcome_law_given_theta(&self, spec: &EnvironmentSpec, theta: usize) -> Vec<f64> {
        let mut law = vec![0.0; spec.n_outcomes];
        for s in 0..spec.n_states {
            let os = self.occupancy[theta * spec.n_states + s];
            if os > 0.0 {
                for (y, &wy) in spec.outcome_row(s, theta).iter().enumerate() {
                    law[y] += os * wy;
                }
            }
        }
        law
    }

    /// `P(Y_t = y | history)`: the previous law mixed over the posterior.
    pub fn outcome_law(&self, spec: &EnvironmentSpec) -> Vec<f64> {
        let mut law = vec![0.0; spec.n_outcomes];
        for theta in 0..spec.n_params {
            let w = self.posterior.weight(theta);
            if w > 0.0 {
                for (y, v) in self.outcome_law_given_theta(spec, theta).iter().enumerate() {
                    law[y] += w * v;
                }
            }
        }
        law
    }

    /// `P(Y_t = y, S_t = s | history)`, flat over `y * n_states + s`.
    pub fn outcome_state_law(&self, spec: &EnvironmentSpec) -> Vec<f64> {
        let mut law = vec![0.0; spec.n_outcomes * spec.n_states];
        for theta in 0..spec.n_params {
            let w = self.posterior.weight(theta);
            if w <= 0.0 {
                continue;
            }
            for s in 0..spec.n_states {
                let os = self.occupancy[theta * spec.n_states + s];
                if os > 0.0 {
                    for (y, &wy) in spec.outcome_row(s, theta).iter().enumerate() {
                        law[y * spec.n_states + s] += w * os * wy;
                    }
                }
            }
        }
        law
    }
}

/// Exhaustively enumerates every history with positive probability under the
/// generating policy, layer by layer, with exact per-parameter reach
/// probabilities. Thompson mode integrates the sampled-parameter action
/// distribution exactly; no Monte Carlo is involved.
pub fn enumerate_history_tree(
    spec: &EnvironmentSpec,
    policy: TreePolicy<'_>,
    budget: usize,
) -> Result<HistoryTree, InferenceError> {
    if let TreePolicy::Fixed(table) = policy {
        assert!(
            table.information_kind() == InformationKind::History,
            "only history-measurable policies can generate a history tree"
        );
    }
    let rewards = spec.reachable_reward_set();
    let mut layers: Vec<Vec<HistoryNode>> = Vec::with_capacity(spec.horizon + 1);
    let mut first = Vec::new();
    for s1 in 0..spec.n_states {
        let per_theta: Vec<f64> = (0..spec.n_params)
            .map(|theta| spec.initial_row(theta)[s1])
            .collect();
        let probability: f64 = (0..spec.n_params)
            .map(|theta| spec.prior_weights()[theta] * per_theta[theta])
            .sum();
        if probability > 0.0 {
            first.push(HistoryNode {
                history: History::new(),
                time: 1,
                state: s1,
                probability,
                per_theta,
                action_dist: None,
                parent: None,
            });
        }
    }
    layers.push(first);
    let mut total_nodes = layers[0].len();

    for t in 1..=spec.horizon {
        // Posterior per history group, shared by sibling nodes.
        let mut group_posterior: BTreeMap<Vec<(usize, usize, u64)>, FiniteDistribution> =
            BTreeMap::new();
        {
            let mut group_mass: BTreeMap<Vec<(usize, usize, u64)>, Vec<f64>> = BTreeMap::new();
            for node in &layers[t - 1] {
                let entry = group_mass
                    .entry(node.history.key())
                    .or_insert_with(|| vec![0.0; spec.n_params]);
                for theta in 0..spec.n_params {
                    entry[theta] += spec.prior_weights()[theta] * node.per_theta[theta];
                }
            }
            for (key, mass) in group_mass {
                group_posterior.insert(
                    key,
                    FiniteDistribution::normalize(&mass)
                        .expect("materialized groups have positive mass"),
                );
            }
        }

        let mut next: Vec<HistoryNode> = Vec::new();
        let layer_len = layers[t - 1].len();
        for idx in 0..layer_len {
            let (state, history, per_theta) = {
                let node = &layers[t - 1][idx];
                (node.state, node.history.clone(), node.per_theta.clone())
            };
            let nu = match policy {
                TreePolicy::Fixed(table) => {
                    let action = table
                        .action(t, state, &InfoKey::History(history.key()))
                        .ok_or(InferenceError::PolicyUndefined { time: t, state })?;
                    FiniteDistribution::point_mass(spec.n_actions, action)
                }
                TreePolicy::Thompson(psi_star) => {
                    let posterior = &group_posterior[&history.key()];
                    thompson_action_dist(spec, psi_star, posterior, t, state)
                }
            };
            for a in 0..spec.n_actions {
                let wa = nu.weight(a);
                if wa <= 0.0 {
                    continue;
                }
                for &r in &rewards {
                    let lik: Vec<f64> = (0..spec.n_params)
                        .map(|theta| {
                            if per_theta[theta] > 0.0 {
                                spec.reward_likelihood(state, a, r, theta)
                            } else {
                                0.0
                            }
                        })
                        .collect();
                    for s2 in 0..spec.n_states {
                        let child_per_theta: Vec<f64> = (0..spec.n_params)
                            .map(|theta| {
                                per_theta[theta]
                                    * wa
                                    * lik[theta]
                                    * spec.trans_row(state, a, theta)[s2]
                            })
                            .collect();
                        let probability: f64 = (0..spec.n_params)
                            .map(|theta| spec.prior_weights()[theta] * child_per_theta[theta])
                            .sum();
                        if probability > 0.0 {
                            let mut child_history = history.clone();
                            child_history.push(StepRecord {
                                state,
                                action: a,
                                reward: r,
                            });
                            next.push(HistoryNode {
                                history: child_history,
                                time: t + 1,
                                state: s2,
                                probability,
                                per_theta: child_per_theta,
                                action_dist: None,
                                parent: Some(idx),
                            });
                        }
                    }
                }
            }
            layers[t - 1][idx].action_dist = Some(nu);
        }
        total_nodes += next.len();
        if total_nodes > budget {
            return Err(InferenceError::BudgetExceeded {
                nodes: total_nodes,
                layer: t + 1,
            });
        }
        layers.push(next);
    }
    Ok(HistoryTree { layers })
}

/// The conditional laws the regret bounds are built from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LawQuery {
    /// `(Y_t, S_t) | history` under the generating process.
    OutcomeStateGivenHistory,
    /// `(Y_t, S_t) | theta` under the known-parameter optimal process.
    OptimalOutcomeStateGivenTheta,
    /// `Y_t | optimal action, history` (static instances with a uniform
    /// optimal action).
    OutcomeGivenOptActionAndHistory,
    /// Per-action outcome `Y_{t,A*} | optimal action, history`
    /// (partial feedback).
    PerActionOutcomeGivenOptActionAndHistory,
    /// Per-action outcome `Y_{t,A*} | history` — the cell still names the
    /// optimal action selecting the coordinate, but the law conditions on
    /// the history alone (partial feedback).
    PerActionOutcomeGivenHistory,
    /// `A* | history`.
    OptActionGivenHistory,
}

/// One conditioning cell of a conditional law: the event's probability and
/// the exact distribution given the event.
#[derive(Debug, Clone)]
pub struct LawCell {
    pub weight: f64,
    pub law: FiniteDistribution,
    pub theta: Option<usize>,
    pub history_index: Option<usize>,
    pub opt_action: Option<usize>,
}

/// Everything a law query may need. `optimal_occupancy` indexes
/// `[t-1][theta][s]` for the process driven by the known-parameter policy;
/// `gamma_star` maps each parameter to its optimal action on static
/// instances.
pub struct LawContext<'a> {
    pub spec: &'a EnvironmentSpec,
    pub tree: &'a HistoryTree,
    pub optimal_occupancy: Option<&'a [Vec<Vec<f64>>]>,
    pub gamma_star: Option<&'a [usize]>,
    pub pf: Option<&'a PartialFeedbackSpec>,
}

/// Evaluates one conditional-law query at decision time `t`. Cells of zero
/// probability are omitted; the returned weights sum to one.
pub fn conditional_law(
    ctx: &LawContext<'_>,
    t: usize,
    query: LawQuery,
) -> Result<Vec<LawCell>, InferenceError> {
    let spec = ctx.spec;
    match query {
        LawQuery::OutcomeStateGivenHistory => {
            let cells = ctx.tree.history_cells(spec, t);
            Ok(cells
                .iter()
                .enumerate()
                .map(|(i, cell)| LawCell {
                    weight: cell.weight,
                    law: FiniteDistribution::normalize(&cell.outcome_state_law(spec))
                        .expect("cell law has positive mass"),
                    theta: None,
                    history_index: Some(i),
                    opt_action: None,
                })
                .collect())
        }
        LawQuery::OptimalOutcomeStateGivenTheta => {
            let occ = ctx.optimal_occupancy.ok_or_else(|| {
                InferenceError::NotApplicable("optimal occupancy not supplied".into())
            })?;
            let mut cells = Vec::new();
            for theta in 0..spec.n_params {
                let weight = spec.prior_weights()[theta];
                if weight <= 0.0 {
                    continue;
                }
                let mut law = vec![0.0; spec.n_outcomes * spec.n_states];
                for s in 0..spec.n_states {
                    let os = occ[t - 1][theta][s];
                    if os > 0.0 {
                        for (y, &wy) in spec.outcome_row(s, theta).iter().enumerate() {
                            law[y * spec.n_states + s] += os * wy;
                        }
                    }
                }
                cells.push(LawCell {
                    weight,
                    law: FiniteDistribution::normalize(&law).expect("occupancy sums to one"),
                    theta: Some(theta),
                    history_index: None,
                    opt_action: None,
                });
            }
            Ok(cells)
        }
        LawQuery::OutcomeGivenOptActionAndHistory => {
            let gamma = require_gamma(ctx)?;
            let cells = ctx.tree.history_cells(spec, t);
            let mut out = Vec::new();
            for (i, cell) in cells.iter().enumerate() {
                for a_star in 0..spec.n_actions {
                    let p_a: f64 = (0..spec.n_params)
                        .filter(|&theta| gamma[theta] == a_star)
                        .map(|theta| cell.posterior.weight(theta))
                        .sum();
                    if p_a <= 0.0 {
                        continue;
                    }
                    let mut law = vec![0.0; spec.n_outcomes];
                    for theta in (0..spec.n_params).filter(|&th| gamma[th] == a_star) {
                        let w = cell.posterior.weight(theta) / p_a;
                        if w > 0.0 {
                            for (y, v) in
                                cell.outcome_law_given_theta(spec, theta).iter().enumerate()
                            {
                                law[y] += w * v;
                            }
                        }
                    }
                    out.push(LawCell {
                        weight: cell.weight * p_a,
                        law: FiniteDistribution::normalize(&law)
                            .expect("conditional outcome law has positive mass"),
                        theta: None,
                        history_index: Some(i),
                        opt_action: Some(a_star),
                    });
                }
            }
            Ok(out)
        }
        LawQuery::PerActionOutcomeGivenOptActionAndHistory => {
            let pf = require_pf(ctx)?;
            let full = conditional_law(ctx, t, LawQuery::OutcomeGivenOptActionAndHistory)?;
            Ok(full
                .into_iter()
                .map(|cell| {
                    let a_star = cell.opt_action.expect("cell carries the optimal action");
                    LawCell {
                        law: project_coordinate(pf, cell.law.weights(), a_star),
                        ..cell
                    }
                })
                .collect())
        }
        LawQuery::PerActionOutcomeGivenHistory => {
            let pf = require_pf(ctx)?;
            let gamma = require_gamma(ctx)?;
            let cells = ctx.tree.history_cells(spec, t);
            let mut out = Vec::new();
            for (i, cell) in cells.iter().enumerate() {
                let marginal = cell.outcome_law(spec);
                for a_star in 0..spec.n_actions {
                    let p_a: f64 = (0..spec.n_params)
                        .filter(|&theta| gamma[theta] == a_star)
                        .map(|theta| cell.posterior.weight(theta))
                        .sum();
                    if p_a <= 0.0 {
                        continue;
                    }
                    out.push(LawCell {
                        weight: cell.weight * p_a,
                        law: project_coordinate(pf, &marginal, a_star),
                        theta: None,
                        history_index: Some(i),
                        opt_action: Some(a_star),
                    });
                }
            }
            Ok(out)
        }
        LawQuery::OptActionGivenHistory => {
            let gamma = require_gamma(ctx)?;
            let cells = ctx.tree.history_cells(spec, t);
            Ok(cells
                .iter()
                .enumerate()
                .map(|(i, cell)| {
                    let mut law = vec![0.0; spec.n_actions];
                    for theta in 0..spec.n_params {
                        law[gamma[theta]] += cell.posterior.weight(theta);
                    }
                    LawCell {
                        weight: cell.weight,
                        law: FiniteDistribution::normalize(&law)
                            .expect("posterior pushforward has mass"),
                        theta: None,
                        history_index: Some(i),
                        opt_action: None,
                    }
                })
                .collect())
        }
    }
}

fn require_gamma<'a>(ctx: &LawContext<'a>) -> Result<&'a [usize], InferenceError> {
    ctx.gamma_star.ok_or_else(|| {
        InferenceError::NotApplicable(
            "query requires a static instance with a state- and time-uniform optimal action"
                .into(),
        )
    })
}

fn require_pf<'a>(ctx: &LawContext<'a>) -> Result<&'a PartialFeedbackSpec, InferenceError> {
    ctx.pf.ok_or_else(|| {
        InferenceError::NotApplicable("query requires a partial-feedback instance".into())
    })
}

/// Pushes a law over the full outcome vector onto coordinate `a`.
pub fn project_coordinate(
    pf: &PartialFeedbackSpec,
    law_over_outcomes: &[f64],
    a: usize,
) -> FiniteDistribution {
    let mut out = vec![0.0; pf.n_per_action];
    for (y, &w) in law_over_outcomes.iter().enumerate() {
        out[pf.coordinate(y, a)] += w;
    }
    FiniteDistribution::normalize(&out).expect("projection preserves mass")
}
