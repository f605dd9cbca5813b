//! Exact optimal planning.
//!
//! Four value computations, all exact on finite instances:
//!
//! - the known-parameter optimum via per-parameter backward induction, which
//!   also yields the policy driving Thompson sampling;
//! - the best history-feedback value via dynamic programming over the
//!   enumerated history tree (the history information is nested, so the
//!   belief recursion computes the true supremum over deterministic
//!   history policies);
//! - the best value under an arbitrary knowledge kernel, via a depth-first
//!   recursion over knowledge-sequence prefixes that carries the unnormalized
//!   joint over (parameter, state) as context. Knowledge sequences are
//!   remembered but past states are not, so the recursion maximizes one
//!   state-to-action assignment per prefix node — exact even without perfect
//!   recall;
//! - the best value under processed knowledge, by exhaustive enumeration of
//!   deterministic processed policies. A processed policy sees only the
//!   current draw `Z_t`, which neither nests nor reveals the past, so no
//!   recursion decouples the decision sites; the objective is affine in each
//!   per-site action choice, hence a deterministic optimum exists and
//!   enumeration is exact.

use crate::env::{EnvironmentSpec, History};
use crate::inference::{self, HistoryTree, InferenceError, TreePolicy};
use crate::prob::{FiniteDistribution, RandomSource};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlanError {
    #[error("node budget exceeded: {nodes} nodes at layer {layer}")]
    BudgetExceeded { nodes: usize, layer: usize },
    #[error("policy enumeration too large: {combos} deterministic policies exceed the budget {budget}")]
    PolicySpaceTooLarge { combos: u128, budget: u128 },
    #[error("kernel shape mismatch: {0}")]
    Shape(String),
}

impl From<InferenceError> for PlanError {
    fn from(err: InferenceError) -> Self {
        match err {
            InferenceError::BudgetExceeded { nodes, layer } => {
                PlanError::BudgetExceeded { nodes, layer }
            }
            other => panic!("unexpected inference failure during planning: {other}"),
        }
    }
}

/// What a decision rule is allowed to condition on, besides the current
/// state.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InformationKind {
    History,
    Theta,
    Knowledge,
    Processed,
}

/// The information argument of a decision rule at one time step.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum InfoKey {
    Empty,
    Theta(usize),
    History(Vec<(usize, usize, u64)>),
    Knowledge(Vec<usize>),
    Processed(usize),
}

/// A deterministic decision rule per time step, indexed by
/// `(state, information)` pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyTable {
    kind: InformationKind,
    steps: Vec<BTreeMap<(usize, InfoKey), usize>>,
    defaults: Vec<BTreeMap<usize, usize>>,
}

impl PolicyTable {
    pub fn new(kind: InformationKind, horizon: usize) -> Self {
        Self {
            kind,
            steps: vec![BTreeMap::new(); horizon],
            defaults: vec![BTreeMap::new(); horizon],
        }
    }

    pub fn information_kind(&self) -> InformationKind {
        self.kind
    }

    pub fn horizon(&self) -> usize {
        self.steps.len()
    }

    /// Registers the action for `(t, state, key)`; `t` is 1-based.
    pub fn set(&mut self, t: usize, state: usize, key: InfoKey, action: usize) {
        self.steps[t - 1].insert((state, key), action);
    }

    /// Registers an action for `(t, state)` regardless of the information
    /// value; exact entries take precedence.
    pub fn set_default(&mut self, t: usize, state: usize, action: usize) {
        self.defaults[t - 1].insert(state, action);
    }

    pub fn action(&self, t: usize, state: usize, key: &InfoKey) -> Option<usize> {
        self.steps[t - 1]
            .get(&(state, key.clone()))
            .or_else(|| self.defaults[t - 1].get(&state))
            .copied()
    }

    /// Resolves the action during an episode, building the information key
    /// from the running history (or the fixed parameter for a
    /// known-parameter policy).
    pub fn action_in_episode(
        &self,
        t: usize,
        state: usize,
        history: &History,
        theta: usize,
    ) -> Option<usize> {
        let key = match self.kind {
            InformationKind::History => InfoKey::History(history.key()),
            InformationKind::Theta => InfoKey::Theta(theta),
            // Knowledge- and processed-information policies are evaluated by
            // their own planners, not by direct episode simulation.
            InformationKind::Knowledge | InformationKind::Processed => return None,
        };
        self.action(t, state, &key)
    }

    pub fn entries_at(&self, t: usize) -> impl Iterator<Item = (&(usize, InfoKey), &usize)> {
        self.steps[t - 1].iter()
    }
}

/// An expected cumulative reward together with the policy achieving it and
/// the per-step breakdown (which sums to the value within 1e-10).
#[derive(Debug, Clone)]
pub struct ValueReport {
    pub value: f64,
    pub per_time_values: Vec<f64>,
    pub policy: PolicyTable,
}

impl ValueReport {
    fn new(value: f64, per_time_values: Vec<f64>, policy: PolicyTable) -> Self {
        let sum: f64 = per_time_values.iter().sum();
        debug_assert!(
            (sum - value).abs() <= 1e-10,
            "per-time values sum to {sum}, value is {value}"
        );
        Self {
            value,
            per_time_values,
            policy,
        }
    }
}

/// Backward induction for each parameter separately: the best expected
/// cumulative reward an agent could reach if the parameter were revealed,
/// averaged under the prior. Argmax ties break toward the lowest action
/// index so downstream pushforwards are reproducible.
pub fn optimal_policy_known_theta(spec: &EnvironmentSpec) -> (PolicyTable, ValueReport) {
    let horizon = spec.horizon;
    let mut policy = PolicyTable::new(InformationKind::Theta, horizon);
    // values[theta][s] at the time step being processed
    let mut value_next = vec![vec![0.0; spec.n_states]; spec.n_params];
    let mut value_at_t = vec![vec![vec![0.0; spec.n_states]; spec.n_params]; horizon];
    for t in (1..=horizon).rev() {
        let mut value_here = vec![vec![0.0; spec.n_states]; spec.n_params];
        for theta in 0..spec.n_params {
            for s in 0..spec.n_states {
                let mut best_a = 0;
                let mut best_q = f64::NEG_INFINITY;
                for a in 0..spec.n_actions {
                    let immediate = spec.expected_reward(s, a, theta);
                    let continuation: f64 = spec
                        .trans_row(s, a, theta)
                        .iter()
                        .enumerate()
                        .map(|(s2, &w)| w * value_next[theta][s2])
                        .sum();
                    let q = immediate + continuation;
                    if q > best_q {
                        best_q = q;
                        best_a = a;
                    }
                }
                value_here[theta][s] = best_q;
                policy.set(t, s, InfoKey::Theta(theta), best_a);
            }
        }
        value_at_t[t - 1] = value_here.clone();
        value_next = value_here;
    }
    let value: f64 = (0..spec.n_params)
        .map(|theta| {
            let v: f64 = spec
                .initial_row(theta)
                .iter()
                .enumerate()
                .map(|(s, &w)| w * value_at_t[0][theta][s])
                .sum();
            spec.prior_weights()[theta] * v
        })
        .sum();

    let occupancy = optimal_occupancy(spec, &policy);
    let per_time: Vec<f64> = (1..=horizon)
        .map(|t| {
            let mut total = 0.0;
            for theta in 0..spec.n_params {
                for s in 0..spec.n_states {
                    let w = spec.prior_weights()[theta] * occupancy[t - 1][theta][s];
                    if w > 0.0 {
                        let a = policy
                            .action(t, s, &InfoKey::Theta(theta))
                            .expect("policy covers all (t, s, theta)");
                        total += w * spec.expected_reward(s, a, theta);
                    }
                }
            }
            total
        })
        .collect();
    let report = ValueReport::new(value, per_time, policy.clone());
    (policy, report)
}

/// State occupancy `P(S_t = s | theta)` of the process driven by a
/// known-parameter policy, for t = 1..=T (outer index t-1).
pub fn optimal_occupancy(spec: &EnvironmentSpec, psi: &PolicyTable) -> Vec<Vec<Vec<f64>>> {
    let mut occ = vec![vec![vec![0.0; spec.n_states]; spec.n_params]; spec.horizon];
    for theta in 0..spec.n_params {
        occ[0][theta] = spec.initial_row(theta).to_vec();
    }
    for t in 1..spec.horizon {
        for theta in 0..spec.n_params {
            for s in 0..spec.n_states {
                let w = occ[t - 1][theta][s];
                if w > 0.0 {
                    let a = psi
                        .action(t, s, &InfoKey::Theta(theta))
                        .expect("policy covers all (t, s, theta)");
                    for (s2, &p) in spec.trans_row(s, a, theta).iter().enumerate() {
                        occ[t][theta][s2] += w * p;
                    }
                }
            }
        }
    }
    occ
}

struct BcrSearch<'a> {
    spec: &'a EnvironmentSpec,
    rewards: Vec<f64>,
    policy: PolicyTable,
    nodes: usize,
    budget: usize,
}

impl BcrSearch<'_> {
    /// Unnormalized value contribution of the subtree rooted at
    /// `(t, state, history)` with joint weights `w[theta] =
    /// prior(theta) * P(history, state | theta)`.
    fn visit(
        &mut self,
        t: usize,
        state: usize,
        history: &mut History,
        weights: &[f64],
    ) -> Result<f64, PlanError> {
        self.nodes += 1;
        if self.nodes > self.budget {
            return Err(PlanError::BudgetExceeded {
                nodes: self.nodes,
                layer: t,
            });
        }
        let spec = self.spec;
        let rewards = self.rewards.clone();
        let mut best_value = f64::NEG_INFINITY;
        let mut best_action = 0;
        for a in 0..spec.n_actions {
            let mut value = 0.0;
            for theta in 0..spec.n_params {
                if weights[theta] > 0.0 {
                    value += weights[theta] * spec.expected_reward(state, a, theta);
                }
            }
            if t < spec.horizon {
                for &r in &rewards {
                    // Children partition by (reward, next state); each child
                    // weight multiplies in the reward likelihood and the
                    // transition mass.
                    let lik: Vec<f64> = (0..spec.n_params)
                        .map(|theta| {
                            if weights[theta] > 0.0 {
                                spec.reward_likelihood(state, a, r, theta)
                            } else {
                                0.0
                            }
                        })
                        .collect();
                    if lik.iter().zip(weights).all(|(&l, &w)| l * w <= 0.0) {
                        continue;
                    }
                    for s2 in 0..spec.n_states {
                        let child: Vec<f64> = (0..spec.n_params)
                            .map(|theta| {
                                weights[theta]
                                    * lik[theta]
                                    * spec.trans_row(state, a, theta)[s2]
                            })
                            .collect();
                        if child.iter().all(|&w| w <= 0.0) {
                            continue;
                        }
                        history.push(crate::env::StepRecord {
                            state,
                            action: a,
                            reward: r,
                        });
                        let sub = self.visit(t + 1, s2, history, &child)?;
                        history.pop_record();
                        value += sub;
                    }
                }
            }
            if value > best_value {
                best_value = value;
                best_action = a;
            }
        }
        self.policy
            .set(t, state, InfoKey::History(history.key()), best_action);
        Ok(best_value)
    }
}

/// The best expected cumulative reward over all deterministic
/// history-feedback policies: dynamic programming over the enumerated
/// history tree, choosing at each `(t, state, history)` node the action
/// maximizing posterior-expected reward plus continuation.
pub fn bcr_exact(spec: &EnvironmentSpec, budget: usize) -> Result<ValueReport, PlanError> {
    let mut search = BcrSearch {
        spec,
        rewards: spec.reachable_reward_set(),
        policy: PolicyTable::new(InformationKind::History, spec.horizon),
        nodes: 0,
        budget,
    };
    let mut value = 0.0;
    for s1 in 0..spec.n_states {
        let weights: Vec<f64> = (0..spec.n_params)
            .map(|theta| spec.prior_weights()[theta] * spec.initial_row(theta)[s1])
            .collect();
        if weights.iter().any(|&w| w > 0.0) {
            let mut history = History::new();
            value += search.visit(1, s1, &mut history, &weights)?;
        }
    }
    let policy = search.policy;
    let tree = inference::enumerate_history_tree(spec, TreePolicy::Fixed(&policy), budget)?;
    let per_time = expected_rewards_per_step(spec, &tree);
    Ok(ValueReport::new(value, per_time, policy))
}

/// Per-step expected rewards of the process materialized in `tree`.
pub fn expected_rewards_per_step(spec: &EnvironmentSpec, tree: &HistoryTree) -> Vec<f64> {
    (1..=spec.horizon)
        .map(|t| {
            tree.layer(t)
                .iter()
                .map(|node| {
                    let nu = node
                        .action_dist
                        .as_ref()
                        .expect("non-terminal layers carry action distributions");
                    (0..spec.n_params)
                        .map(|theta| {
                            let w = spec.prior_weights()[theta] * node.per_theta[theta];
                            if w > 0.0 {
                                w * nu.expect(|a| spec.expected_reward(node.state, a, theta))
                            } else {
                                0.0
                            }
                        })
                        .sum::<f64>()
                })
                .sum()
        })
        .collect()
}

/// Knowledge channel: `initial[(s, theta)] -> X` seeds the first knowledge
/// draw and `step[(s, a, y, theta)] -> X` produces each subsequent one.
///
/// The seeding table is what lets the revealed-parameter channel put
/// `X_1 = Theta`; without it no knowledge kernel could reproduce the
/// known-parameter optimum at the first decision.
#[derive(Debug, Clone, PartialEq)]
pub struct KnowledgeKernelSpec {
    pub n_knowledge: usize,
    initial: Vec<f64>,
    step: Vec<f64>,
}

impl KnowledgeKernelSpec {
    pub fn new(
        spec: &EnvironmentSpec,
        n_knowledge: usize,
        initial: Vec<f64>,
        step: Vec<f64>,
    ) -> Result<Self, PlanError> {
        let want_initial = spec.n_states * spec.n_params * n_knowledge;
        let want_step =
            spec.n_states * spec.n_actions * spec.n_outcomes * spec.n_params * n_knowledge;
        if initial.len() != want_initial {
            return Err(PlanError::Shape(format!(
                "initial table has length {}, expected {want_initial}",
                initial.len()
            )));
        }
        if step.len() != want_step {
            return Err(PlanError::Shape(format!(
                "step table has length {}, expected {want_step}",
                step.len()
            )));
        }
        Ok(Self {
            n_knowledge,
            initial,
            step,
        })
    }

    pub fn initial_row(&self, s: usize, theta: usize, n_params: usize) -> &[f64] {
        let base = (s * n_params + theta) * self.n_knowledge;
        &self.initial[base..base + self.n_knowledge]
    }

    pub fn step_row(
        &self,
        s: usize,
        a: usize,
        y: usize,
        theta: usize,
        spec: &EnvironmentSpec,
    ) -> &[f64] {
        let base = (((s * spec.n_actions + a) * spec.n_outcomes + y) * spec.n_params + theta)
            * self.n_knowledge;
        &self.step[base..base + self.n_knowledge]
    }

    /// The history channel: knowledge is the last `(state, action, reward)`
    /// record, with a distinguished empty symbol at the start.
    pub fn history_kernel(spec: &EnvironmentSpec) -> Self {
        let rewards = spec.reachable_reward_set();
        let n_rewards = rewards.len();
        let n_knowledge = 1 + spec.n_states * spec.n_actions * n_rewards;
        let mut initial = vec![0.0; spec.n_states * spec.n_params * n_knowledge];
        for s in 0..spec.n_states {
            for theta in 0..spec.n_params {
                initial[(s * spec.n_params + theta) * n_knowledge] = 1.0;
            }
        }
        let mut step =
            vec![0.0; spec.n_states * spec.n_actions * spec.n_outcomes * spec.n_params * n_knowledge];
        for s in 0..spec.n_states {
            for a in 0..spec.n_actions {
                for y in 0..spec.n_outcomes {
                    let r = spec.reward(y, a);
                    let ri = rewards
                        .iter()
                        .position(|&v| v == r)
                        .expect("reward in reachable set");
                    let symbol = 1 + (s * spec.n_actions + a) * n_rewards + ri;
                    for theta in 0..spec.n_params {
                        let base = (((s * spec.n_actions + a) * spec.n_outcomes + y)
                            * spec.n_params
                            + theta)
                            * n_knowledge;
                        step[base + symbol] = 1.0;
                    }
                }
            }
        }
        Self {
            n_knowledge,
            initial,
            step,
        }
    }

    /// The revealed-parameter channel: knowledge is the parameter itself at
    /// every step, including the first.
    pub fn theta_kernel(spec: &EnvironmentSpec) -> Self {
        let n_knowledge = spec.n_params;
        let mut initial = vec![0.0; spec.n_states * spec.n_params * n_knowledge];
        for s in 0..spec.n_states {
            for theta in 0..spec.n_params {
                initial[(s * spec.n_params + theta) * n_knowledge + theta] = 1.0;
            }
        }
        let mut step =
            vec![0.0; spec.n_states * spec.n_actions * spec.n_outcomes * spec.n_params * n_knowledge];
        for s in 0..spec.n_states {
            for a in 0..spec.n_actions {
                for y in 0..spec.n_outcomes {
                    for theta in 0..spec.n_params {
                        let base = (((s * spec.n_actions + a) * spec.n_outcomes + y)
                            * spec.n_params
                            + theta)
                            * n_knowledge;
                        step[base + theta] = 1.0;
                    }
                }
            }
        }
        Self {
            n_knowledge,
            initial,
            step,
        }
    }

    /// The uninformative channel: a single constant symbol.
    pub fn constant_kernel(spec: &EnvironmentSpec) -> Self {
        Self {
            n_knowledge: 1,
            initial: vec![1.0; spec.n_states * spec.n_params],
            step: vec![1.0; spec.n_states * spec.n_actions * spec.n_outcomes * spec.n_params],
        }
    }
}

/// Processing channel: one row per knowledge prefix at each time step,
/// mapping `X^t` to a distribution over the processed space `Z`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProcessingKernelSpec {
    pub n_processed: usize,
    n_knowledge: usize,
    per_t: Vec<Vec<f64>>,
}

impl ProcessingKernelSpec {
    pub fn new(
        n_knowledge: usize,
        n_processed: usize,
        horizon: usize,
        per_t: Vec<Vec<f64>>,
    ) -> Result<Self, PlanError> {
        if per_t.len() != horizon {
            return Err(PlanError::Shape(format!(
                "processing kernel covers {} steps, expected {horizon}",
                per_t.len()
            )));
        }
        for (t, rows) in per_t.iter().enumerate() {
            let want = n_knowledge.pow(t as u32 + 1) * n_processed;
            if rows.len() != want {
                return Err(PlanError::Shape(format!(
                    "processing rows at t={} have length {}, expected {want}",
                    t + 1,
                    rows.len()
                )));
            }
        }
        Ok(Self {
            n_processed,
            n_knowledge,
            per_t,
        })
    }

    fn prefix_code(&self, prefix: &[usize]) -> usize {
        prefix.iter().fold(0, |acc, &x| acc * self.n_knowledge + x)
    }

    pub fn row(&self, prefix: &[usize]) -> &[f64] {
        let t = prefix.len();
        let base = self.prefix_code(prefix) * self.n_processed;
        &self.per_t[t - 1][base..base + self.n_processed]
    }

    /// Identity processing: `Z_t` is a lossless code of the whole prefix.
    pub fn identity(n_knowledge: usize, horizon: usize) -> Self {
        let n_processed = n_knowledge.pow(horizon as u32);
        let per_t = (1..=horizon)
            .map(|t| {
                let n_prefixes = n_knowledge.pow(t as u32);
                let mut rows = vec![0.0; n_prefixes * n_processed];
                for code in 0..n_prefixes {
                    rows[code * n_processed + code] = 1.0;
                }
                rows
            })
            .collect();
        Self {
            n_processed,
            n_knowledge,
            per_t,
        }
    }

    /// Degenerate processing: everything maps to one symbol.
    pub fn constant(n_knowledge: usize, horizon: usize) -> Self {
        let per_t = (1..=horizon)
            .map(|t| vec![1.0; n_knowledge.pow(t as u32)])
            .collect();
        Self {
            n_processed: 1,
            n_knowledge,
            per_t,
        }
    }
}

struct KnowledgeSearch<'a> {
    spec: &'a EnvironmentSpec,
    know: &'a KnowledgeKernelSpec,
    nodes: usize,
    budget: usize,
}

/// One recorded decision of the knowledge planner.
struct KnowledgeDecision {
    t: usize,
    state: usize,
    prefix: Vec<usize>,
    action: usize,
}

impl KnowledgeSearch<'_> {
    /// `rho[(theta, s)]` is the unnormalized joint
    /// `prior(theta) * P(X^t = prefix, S_t = s | theta)` given the decisions
    /// already fixed on ancestor prefixes. A prefix node is visited once per
    /// ancestor decision combination, so the decisions of the winning
    /// subtree are returned rather than written in place.
    fn visit(
        &mut self,
        t: usize,
        prefix: &mut Vec<usize>,
        rho: &[f64],
    ) -> Result<(f64, Vec<KnowledgeDecision>), PlanError> {
        self.nodes += 1;
        if self.nodes > self.budget {
            return Err(PlanError::BudgetExceeded {
                nodes: self.nodes,
                layer: t,
            });
        }
        let spec = self.spec;
        let ns = spec.n_states;
        let live_states: Vec<usize> = (0..ns)
            .filter(|&s| (0..spec.n_params).any(|theta| rho[theta * ns + s] > 0.0))
            .collect();
        if live_states.is_empty() {
            return Ok((0.0, Vec::new()));
        }
        let combos = (spec.n_actions as u128).pow(live_states.len() as u32);
        let mut best: Option<(f64, Vec<usize>, Vec<KnowledgeDecision>)> = None;
        for combo in 0..combos {
            let mut assignment = Vec::with_capacity(live_states.len());
            let mut c = combo;
            for _ in 0..live_states.len() {
                assignment.push((c % spec.n_actions as u128) as usize);
                c /= spec.n_actions as u128;
            }
            let mut value = 0.0;
            let mut decisions: Vec<KnowledgeDecision> = Vec::new();
            for (pos, &s) in live_states.iter().enumerate() {
                let a = assignment[pos];
                for theta in 0..spec.n_params {
                    let w = rho[theta * ns + s];
                    if w > 0.0 {
                        value += w * spec.expected_reward(s, a, theta);
                    }
                }
            }
            if t < spec.horizon {
                for x_next in 0..self.know.n_knowledge {
                    let mut child = vec![0.0; spec.n_params * ns];
                    let mut mass = 0.0;
                    for (pos, &s) in live_states.iter().enumerate() {
                        let a = assignment[pos];
                        for theta in 0..spec.n_params {
                            let w = rho[theta * ns + s];
                            if w <= 0.0 {
                                continue;
                            }
                            for (y, &wy) in spec.outcome_row(s, theta).iter().enumerate() {
                                if wy <= 0.0 {
                                    continue;
                                }
                                let wk =
                                    self.know.step_row(s, a, y, theta, spec)[x_next];
                                if wk <= 0.0 {
                                    continue;
                                }
                                for (s2, &wt) in
                                    spec.trans_row(s, a, theta).iter().enumerate()
                                {
                                    if wt > 0.0 {
                                        let m = w * wy * wk * wt;
                                        child[theta * ns + s2] += m;
                                        mass += m;
                                    }
                                }
                            }
                        }
                    }
                    if mass > 0.0 {
                        prefix.push(x_next);
                        let (sub, sub_decisions) = self.visit(t + 1, prefix, &child)?;
                        prefix.pop();
                        value += sub;
                        decisions.extend(sub_decisions);
                    }
                }
            }
            if best.as_ref().is_none_or(|(v, _, _)| value > *v) {
                best = Some((value, assignment, decisions));
            }
        }
        let (value, assignment, mut decisions) = best.expect("combo loop ran");
        for (pos, &s) in live_states.iter().enumerate() {
            decisions.push(KnowledgeDecision {
                t,
                state: s,
                prefix: prefix.clone(),
                action: assignment[pos],
            });
        }
        Ok((value, decisions))
    }
}

/// The generalized Bayesian cumulative reward under a knowledge channel.
/// With the history channel it reproduces [`bcr_exact`]; with the
/// revealed-parameter channel it reproduces the known-parameter optimum.
pub fn bcr_with_knowledge(
    spec: &EnvironmentSpec,
    know: &KnowledgeKernelSpec,
    budget: usize,
) -> Result<ValueReport, PlanError> {
    let mut search = KnowledgeSearch {
        spec,
        know,
        nodes: 0,
        budget,
    };
    let ns = spec.n_states;
    let mut value = 0.0;
    let mut policy = PolicyTable::new(InformationKind::Knowledge, spec.horizon);
    for x1 in 0..know.n_knowledge {
        let mut rho = vec![0.0; spec.n_params * ns];
        let mut mass = 0.0;
        for theta in 0..spec.n_params {
            for s in 0..ns {
                let w = spec.prior_weights()[theta]
                    * spec.initial_row(theta)[s]
                    * know.initial_row(s, theta, spec.n_params)[x1];
                rho[theta * ns + s] = w;
                mass += w;
            }
        }
        if mass > 0.0 {
            let mut prefix = vec![x1];
            let (sub, decisions) = search.visit(1, &mut prefix, &rho)?;
            value += sub;
            for d in decisions {
                policy.set(d.t, d.state, InfoKey::Knowledge(d.prefix), d.action);
            }
        }
    }
    let per_time = evaluate_knowledge_policy(spec, know, &policy);
    Ok(ValueReport::new(value, per_time, policy))
}

/// Forward evaluation of a fixed knowledge policy; returns the per-step
/// expected rewards.
fn evaluate_knowledge_policy(
    spec: &EnvironmentSpec,
    know: &KnowledgeKernelSpec,
    policy: &PolicyTable,
) -> Vec<f64> {
    let ns = spec.n_states;
    let mut per_time = vec![0.0; spec.horizon];
    // frontier: prefix -> rho over (theta, s)
    let mut frontier: Vec<(Vec<usize>, Vec<f64>)> = Vec::new();
    for x1 in 0..know.n_knowledge {
        let mut rho = vec![0.0; spec.n_params * ns];
        let mut mass = 0.0;
        for theta in 0..spec.n_params {
            for s in 0..ns {
                let w = spec.prior_weights()[theta]
                    * spec.initial_row(theta)[s]
                    * know.initial_row(s, theta, spec.n_params)[x1];
                rho[theta * ns + s] = w;
                mass += w;
            }
        }
        if mass > 0.0 {
            frontier.push((vec![x1], rho));
        }
    }
    for t in 1..=spec.horizon {
        let mut next = Vec::new();
        for (prefix, rho) in &frontier {
            let key = InfoKey::Knowledge(prefix.clone());
            for s in 0..ns {
                let occupied = (0..spec.n_params).any(|theta| rho[theta * ns + s] > 0.0);
                if !occupied {
                    continue;
                }
                let a = policy.action(t, s, &key).expect("policy covers live states");
                for theta in 0..spec.n_params {
                    let w = rho[theta * ns + s];
                    if w > 0.0 {
                        per_time[t - 1] += w * spec.expected_reward(s, a, theta);
                    }
                }
            }
            if t < spec.horizon {
                for x_next in 0..know.n_knowledge {
                    let mut child = vec![0.0; spec.n_params * ns];
                    let mut mass = 0.0;
                    for s in 0..ns {
                        let occupied =
                            (0..spec.n_params).any(|theta| rho[theta * ns + s] > 0.0);
                        if !occupied {
                            continue;
                        }
                        let a = policy.action(t, s, &key).expect("policy covers live states");
                        for theta in 0..spec.n_params {
                            let w = rho[theta * ns + s];
                            if w <= 0.0 {
                                continue;
                            }
                            for (y, &wy) in spec.outcome_row(s, theta).iter().enumerate() {
                                if wy <= 0.0 {
                                    continue;
                                }
                                let wk = know.step_row(s, a, y, theta, spec)[x_next];
                                if wk <= 0.0 {
                                    continue;
                                }
                                for (s2, &wt) in spec.trans_row(s, a, theta).iter().enumerate() {
                                    if wt > 0.0 {
                                        let m = w * wy * wk * wt;
                                        child[theta * ns + s2] += m;
                                        mass += m;
                                    }
                                }
                            }
                        }
                    }
                    if mass > 0.0 {
                        let mut p = prefix.clone();
                        p.push(x_next);
                        next.push((p, child));
                    }
                }
            }
        }
        frontier = next;
    }
    per_time
}

/// The processed Bayesian cumulative reward: the best deterministic policy
/// whose action at time `t` depends only on the current state and the
/// processed draw `Z_t`. Exhaustive over the `|A|^(T |Z| |S|)` deterministic
/// policies; `budget` caps that count.
pub fn bcr_with_processing(
    spec: &EnvironmentSpec,
    know: &KnowledgeKernelSpec,
    proc: &ProcessingKernelSpec,
    budget: u128,
) -> Result<ValueReport, PlanError> {
    let sites = spec.horizon * proc.n_processed * spec.n_states;
    let combos = (spec.n_actions as u128)
        .checked_pow(sites as u32)
        .ok_or(PlanError::PolicySpaceTooLarge {
            combos: u128::MAX,
            budget,
        })?;
    if combos > budget {
        return Err(PlanError::PolicySpaceTooLarge { combos, budget });
    }
    let site_index =
        |t: usize, z: usize, s: usize| ((t - 1) * proc.n_processed + z) * spec.n_states + s;
    let mut best: Option<(f64, Vec<usize>, Vec<f64>)> = None;
    let mut actions = vec![0usize; sites];
    for combo in 0..combos {
        let mut c = combo;
        for slot in actions.iter_mut() {
            *slot = (c % spec.n_actions as u128) as usize;
            c /= spec.n_actions as u128;
        }
        let per_time = evaluate_processed_policy(spec, know, proc, |t, z, s| {
            actions[site_index(t, z, s)]
        });
        let value: f64 = per_time.iter().sum();
        if best.as_ref().is_none_or(|(v, _, _)| value > *v) {
            best = Some((value, actions.clone(), per_time));
        }
    }
    let (value, actions, per_time) = best.expect("at least one policy");
    let mut policy = PolicyTable::new(InformationKind::Processed, spec.horizon);
    for t in 1..=spec.horizon {
        for z in 0..proc.n_processed {
            for s in 0..spec.n_states {
                policy.set(t, s, InfoKey::Processed(z), actions[site_index(t, z, s)]);
            }
        }
    }
    Ok(ValueReport::new(value, per_time, policy))
}

/// Forward evaluation of one processed policy over the knowledge-prefix
/// tree.
fn evaluate_processed_policy(
    spec: &EnvironmentSpec,
    know: &KnowledgeKernelSpec,
    proc: &ProcessingKernelSpec,
    action_of: impl Fn(usize, usize, usize) -> usize,
) -> Vec<f64> {
    let ns = spec.n_states;
    let mut per_time = vec![0.0; spec.horizon];
    let mut frontier: Vec<(Vec<usize>, Vec<f64>)> = Vec::new();
    for x1 in 0..know.n_knowledge {
        let mut rho = vec![0.0; spec.n_params * ns];
        let mut mass = 0.0;
        for theta in 0..spec.n_params {
            for s in 0..ns {
                let w = spec.prior_weights()[theta]
                    * spec.initial_row(theta)[s]
                    * know.initial_row(s, theta, spec.n_params)[x1];
                rho[theta * ns + s] = w;
                mass += w;
            }
        }
        if mass > 0.0 {
            frontier.push((vec![x1], rho));
        }
    }
    for t in 1..=spec.horizon {
        let mut next = Vec::new();
        for (prefix, rho) in &frontier {
            let z_row = proc.row(prefix);
            for s in 0..ns {
                for theta in 0..spec.n_params {
                    let w = rho[theta * ns + s];
                    if w <= 0.0 {
                        continue;
                    }
                    for (z, &wz) in z_row.iter().enumerate() {
                        if wz > 0.0 {
                            per_time[t - 1] +=
                                w * wz * spec.expected_reward(s, action_of(t, z, s), theta);
                        }
                    }
                }
            }
            if t < spec.horizon {
                for x_next in 0..know.n_knowledge {
                    let mut child = vec![0.0; spec.n_params * ns];
                    let mut mass = 0.0;
                    for s in 0..ns {
                        for theta in 0..spec.n_params {
                            let w = rho[theta * ns + s];
                            if w <= 0.0 {
                                continue;
                            }
                            for (z, &wz) in z_row.iter().enumerate() {
                                if wz <= 0.0 {
                                    continue;
                                }
                                let a = action_of(t, z, s);
                                for (y, &wy) in spec.outcome_row(s, theta).iter().enumerate() {
                                    if wy <= 0.0 {
                                        continue;
                                    }
                                    let wk = know.step_row(s, a, y, theta, spec)[x_next];
                                    if wk <= 0.0 {
                                        continue;
                                    }
                                    for (s2, &wt) in
                                        spec.trans_row(s, a, theta).iter().enumerate()
                                    {
                                        if wt > 0.0 {
                                            let m = w * wz * wy * wk * wt;
                                            child[theta * ns + s2] += m;
                                            mass += m;
                                        }
                                    }
                                }
                            }
                        }
                    }
                    if mass > 0.0 {
                        let mut p = prefix.clone();
                        p.push(x_next);
                        next.push((p, child));
                    }
                }
            }
        }
        frontier = next;
    }
    per_time
}

/// The action distribution Thompson sampling induces at one node: the
/// posterior over parameters pushed through the known-parameter policy at
/// the node's state and time.
pub fn thompson_action_dist(
    spec: &EnvironmentSpec,
    psi_star: &PolicyTable,
    posterior: &FiniteDistribution,
    t: usize,
    state: usize,
) -> FiniteDistribution {
    let mut weights = vec![0.0; spec.n_actions];
    for theta in 0..spec.n_params {
        let w = posterior.weight(theta);
        if w > 0.0 {
            let a = psi_star
                .action(t, state, &InfoKey::Theta(theta))
                .expect("known-parameter policy covers all (t, s, theta)");
            weights[a] += w;
        }
    }
    FiniteDistribution::new(weights).expect("posterior pushforward is normalized")
}

/// The Thompson sampling policy materialized on the enumerated history tree:
/// every non-terminal node carries its exact action distribution.
pub fn thompson_policy(
    spec: &EnvironmentSpec,
    psi_star: &PolicyTable,
    budget: usize,
) -> Result<HistoryTree, PlanError> {
    Ok(inference::enumerate_history_tree(
        spec,
        TreePolicy::Thompson(psi_star),
        budget,
    )?)
}

/// Exact expected cumulative reward of the Thompson sampling process.
pub fn thompson_value(spec: &EnvironmentSpec, budget: usize) -> Result<ValueReport, PlanError> {
    let (psi_star, _) = optimal_policy_known_theta(spec);
    let tree = thompson_policy(spec, &psi_star, budget)?;
    let per_time = expected_rewards_per_step(spec, &tree);
    let value = per_time.iter().sum();
    Ok(ValueReport::new(value, per_time, psi_star))
}

/// Minimum Bayesian regret: the gap between the known-parameter optimum and
/// the best history-feedback value. Non-negative up to 1e-10 of float noise
/// on every valid instance.
pub fn mbr(spec: &EnvironmentSpec, budget: usize) -> Result<f64, PlanError> {
    let (_, limit) = optimal_policy_known_theta(spec);
    let bcr = bcr_exact(spec, budget)?;
    let gap = limit.value - bcr.value;
    assert!(gap >= -1e-10, "regret {gap} below the float-noise floor");
    Ok(gap)
}

/// One Monte Carlo episode of the Thompson sampling process under a fixed
/// true parameter: the sampled parameter estimate is drawn from the exact
/// posterior given the history so far.
pub fn simulate_thompson_episode(
    spec: &EnvironmentSpec,
    psi_star: &PolicyTable,
    theta: usize,
    rng: &mut RandomSource,
) -> (History, f64) {
    let mut history = History::new();
    let mut posterior = spec.prior();
    let mut total = 0.0;
    let initial = FiniteDistribution::new(spec.initial_row(theta).to_vec())
        .expect("validated initial row");
    let mut state = initial.sample(rng);
    let mut prev: Option<(usize, usize)> = None;
    for t in 1..=spec.horizon {
        let theta_hat = posterior.sample(rng);
        let action = psi_star
            .action(t, state, &InfoKey::Theta(theta_hat))
            .expect("known-parameter policy covers all (t, s, theta)");
        let outcome_row = FiniteDistribution::new(spec.outcome_row(state, theta).to_vec())
            .expect("validated outcome row");
        let y = outcome_row.sample(rng);
        let reward = spec.reward(y, action);
        total += reward;
        // Move the history posterior forward: the transition factor into the
        // current state (the initial-state factor at t = 1) and the reward
        // factor at (state, action).
        let weights: Vec<f64> = (0..spec.n_params)
            .map(|th| {
                let arrival = match prev {
                    None => spec.initial_row(th)[state],
                    Some((ps, pa)) => spec.trans_row(ps, pa, th)[state],
                };
                posterior.weight(th) * arrival * spec.reward_likelihood(state, action, reward, th)
            })
            .collect();
        posterior = FiniteDistribution::normalize(&weights)
            .expect("observed trajectory has positive likelihood");
        history.push(crate::env::StepRecord {
            state,
            action,
            reward,
        });
        prev = Some((state, action));
        let trans_row = FiniteDistribution::new(spec.trans_row(state, action, theta).to_vec())
            .expect("validated transition row");
        state = trans_row.sample(rng);
    }
    (history, total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{simulate_episode, EnvironmentSpec};
    use crate::gen::{
        generate_random_instance, generate_random_knowledge_kernel,
        generate_random_processing_kernel, InstanceKind, SizeCaps,
    };
    use crate::testutil::bernoulli2x2;

    const BUDGET: usize = 1_000_000;

    #[test]
    fn known_theta_value_on_canonical_bandit() {
        let pf = bernoulli2x2(2);
        let (_, report) = optimal_policy_known_theta(&pf.base);
        // Both parameters admit a 0.9 arm: the revealed-parameter agent
        // collects 0.9 per step.
        assert!((report.value - 1.8).abs() < 1e-12);
        assert_eq!(report.per_time_values.len(), 2);
        assert!((report.per_time_values[0] - 0.9).abs() < 1e-12);
    }

    #[test]
    fn known_theta_point_prior_equals_single_param_dp() {
        let pf = crate::env::bernoulli_bandit(
            &[vec![0.7], vec![0.4]],
            &crate::prob::FiniteDistribution::point_mass(1, 0),
            3,
        )
        .unwrap();
        let (_, report) = optimal_policy_known_theta(&pf.base);
        assert!((report.value - 3.0 * 0.7).abs() < 1e-12);
    }

    #[test]
    fn known_theta_constant_reward_gives_t_times_c() {
        for seed in 0..5 {
            let instance =
                generate_random_instance(seed, &SizeCaps::default(), InstanceKind::General);
            let mut spec = instance.base().clone();
            let c = 0.5;
            let reward = vec![c; spec.n_outcomes * spec.n_actions];
            spec = EnvironmentSpec::new(
                spec.n_states,
                spec.n_actions,
                spec.n_outcomes,
                spec.n_params,
                spec.horizon,
                spec.prior_weights().to_vec(),
                (0..spec.n_params)
                    .flat_map(|th| spec.initial_row(th).to_vec())
                    .collect(),
                (0..spec.n_states)
                    .flat_map(|s| {
                        (0..spec.n_actions).flat_map(move |a| {
                            (0..spec.n_params).map(move |th| (s, a, th))
                        })
                    })
                    .flat_map(|(s, a, th)| spec.trans_row(s, a, th).to_vec())
                    .collect(),
                (0..spec.n_states)
                    .flat_map(|s| (0..spec.n_params).map(move |th| (s, th)))
                    .flat_map(|(s, th)| spec.outcome_row(s, th).to_vec())
                    .collect(),
                reward,
            )
            .unwrap();
            let (_, report) = optimal_policy_known_theta(&spec);
            assert!((report.value - c * spec.horizon as f64).abs() < 1e-10);
        }
    }

    #[test]
    fn bcr_exact_on_canonical_bandit() {
        let pf = bernoulli2x2(2);
        let report = bcr_exact(&pf.base, BUDGET).unwrap();
        // First step is a coin flip worth 0.5; afterwards the posterior
        // concentrates at 0.9 on the observed arm's parameter, worth 0.82.
        assert!((report.value - 1.32).abs() < 1e-12, "value {}", report.value);
        assert!((report.per_time_values[0] - 0.5).abs() < 1e-12);
        assert!((report.per_time_values[1] - 0.82).abs() < 1e-12);
    }

    #[test]
    fn bcr_exact_point_prior_matches_known_theta() {
        let pf = crate::env::bernoulli_bandit(
            &[vec![0.7], vec![0.4]],
            &crate::prob::FiniteDistribution::point_mass(1, 0),
            2,
        )
        .unwrap();
        let (_, limit) = optimal_policy_known_theta(&pf.base);
        let report = bcr_exact(&pf.base, BUDGET).unwrap();
        assert!((report.value - limit.value).abs() < 1e-12);
    }

    #[test]
    fn bcr_exact_horizon_one_is_single_bayes_decision() {
        for seed in 0..10 {
            let caps = SizeCaps {
                states: 1,
                horizon: 1,
                ..SizeCaps::default()
            };
            let instance = generate_random_instance(seed, &caps, InstanceKind::Static);
            let spec = instance.base();
            let report = bcr_exact(spec, BUDGET).unwrap();
            // max_a sum_theta prior(theta) sum_s initial(s|theta) E[r(Y,a)]
            let oracle = (0..spec.n_actions)
                .map(|a| {
                    (0..spec.n_params)
                        .map(|th| {
                            spec.prior_weights()[th]
                                * spec
                                    .initial_row(th)
                                    .iter()
                                    .enumerate()
                                    .map(|(s, &w)| w * spec.expected_reward(s, a, th))
                                    .sum::<f64>()
                        })
                        .sum::<f64>()
                })
                .fold(f64::NEG_INFINITY, f64::max);
            assert!((report.value - oracle).abs() < 1e-12);
        }
    }

    /// Exhaustive maximization over all deterministic history policies on
    /// tiny instances: enumerate the information sets of the all-action
    /// tree, then try every assignment.
    fn brute_force_history_optimum(spec: &EnvironmentSpec) -> f64 {
        #[derive(Clone)]
        struct Node {
            state: usize,
            weights: Vec<f64>,
            history_key: Vec<(usize, usize, u64)>,
        }
        // Collect information sets (t, state, history) reachable under any
        // policy.
        let rewards = spec.reachable_reward_set();
        let mut layers: Vec<Vec<Node>> = Vec::new();
        let mut first = Vec::new();
        for s in 0..spec.n_states {
            let weights: Vec<f64> = (0..spec.n_params)
                .map(|th| spec.prior_weights()[th] * spec.initial_row(th)[s])
                .collect();
            if weights.iter().any(|&w| w > 0.0) {
                first.push(Node {
                    state: s,
                    weights,
                    history_key: vec![],
                });
            }
        }
        layers.push(first);
        for t in 1..spec.horizon {
            let mut next = Vec::new();
            for node in &layers[t - 1] {
                for a in 0..spec.n_actions {
                    for &r in &rewards {
                        for s2 in 0..spec.n_states {
                            let weights: Vec<f64> = (0..spec.n_params)
                                .map(|th| {
                                    node.weights[th]
                                        * spec.reward_likelihood(node.state, a, r, th)
                                        * spec.trans_row(node.state, a, th)[s2]
                                })
                                .collect();
                            if weights.iter().any(|&w| w > 0.0) {
                                let mut key = node.history_key.clone();
                                key.push((node.state, a, r.to_bits()));
                                next.push(Node {
                                    state: s2,
                                    weights,
                                    history_key: key,
                                });
                            }
                        }
                    }
                }
            }
            layers.push(next);
        }
        // Information sets in a fixed order.
        let mut infosets: Vec<(usize, usize, Vec<(usize, usize, u64)>)> = Vec::new();
        for (t0, layer) in layers.iter().enumerate() {
            for node in layer {
                let set = (t0 + 1, node.state, node.history_key.clone());
                if !infosets.contains(&set) {
                    infosets.push(set);
                }
            }
        }
        let combos = (spec.n_actions as u64).pow(infosets.len() as u32);
        assert!(combos <= 1 << 22, "brute force too large: {combos}");
        let mut best = f64::NEG_INFINITY;
        for combo in 0..combos {
            let mut assignment = std::collections::BTreeMap::new();
            let mut c = combo;
            for set in &infosets {
                assignment.insert(set.clone(), (c % spec.n_actions as u64) as usize);
                c /= spec.n_actions as u64;
            }
            // Evaluate the policy by forward enumeration.
            let mut value = 0.0;
            let mut frontier: Vec<Node> = layers[0].clone();
            for t in 1..=spec.horizon {
                let mut next = Vec::new();
                for node in &frontier {
                    let a = assignment[&(t, node.state, node.history_key.clone())];
                    for th in 0..spec.n_params {
                        if node.weights[th] > 0.0 {
                            value += node.weights[th] * spec.expected_reward(node.state, a, th);
                        }
                    }
                    if t < spec.horizon {
                        for &r in &rewards {
                            for s2 in 0..spec.n_states {
                                let weights: Vec<f64> = (0..spec.n_params)
                                    .map(|th| {
                                        node.weights[th]
                                            * spec.reward_likelihood(node.state, a, r, th)
                                            * spec.trans_row(node.state, a, th)[s2]
                                    })
                                    .collect();
                                if weights.iter().any(|&w| w > 0.0) {
                                    let mut key = node.history_key.clone();
                                    key.push((node.state, a, r.to_bits()));
                                    next.push(Node {
                                        state: s2,
                                        weights,
                                        history_key: key,
                                    });
                                }
                            }
                        }
                    }
                }
                frontier = next;
            }
            best = best.max(value);
        }
        best
    }

    #[test]
    fn bcr_exact_matches_policy_enumeration_oracle() {
        // Two-armed, two-reward, two-parameter bandits with T = 2.
        for seed in 0..15 {
            let caps = SizeCaps {
                states: 1,
                actions: 2,
                outcomes: 2,
                params: 2,
                horizon: 2,
            };
            let kind = if seed % 2 == 0 {
                InstanceKind::Static
            } else {
                InstanceKind::PartialFeedback
            };
            let instance = generate_random_instance(seed, &caps, kind);
            let spec = instance.base();
            let dp = bcr_exact(spec, BUDGET).unwrap().value;
            let brute = brute_force_history_optimum(spec);
            assert!((dp - brute).abs() < 1e-10, "dp {dp} vs brute {brute}");
        }
    }

    #[test]
    fn knowledge_history_kernel_reproduces_bcr() {
        for seed in [0, 3, 8] {
            let caps = SizeCaps {
                states: 2,
                actions: 2,
                outcomes: 2,
                params: 2,
                horizon: 2,
            };
            let instance = generate_random_instance(seed, &caps, InstanceKind::General);
            let spec = instance.base();
            let know = KnowledgeKernelSpec::history_kernel(spec);
            let via_knowledge = bcr_with_knowledge(spec, &know, BUDGET).unwrap();
            let direct = bcr_exact(spec, BUDGET).unwrap();
            assert!(
                (via_knowledge.value - direct.value).abs() < 1e-10,
                "knowledge {} vs direct {}",
                via_knowledge.value,
                direct.value
            );
        }
    }

    #[test]
    fn knowledge_theta_kernel_reproduces_fundamental_limit() {
        for seed in [1, 4, 9] {
            let caps = SizeCaps {
                states: 2,
                actions: 2,
                outcomes: 3,
                params: 2,
                horizon: 2,
            };
            let instance = generate_random_instance(seed, &caps, InstanceKind::General);
            let spec = instance.base();
            let know = KnowledgeKernelSpec::theta_kernel(spec);
            let via_knowledge = bcr_with_knowledge(spec, &know, BUDGET).unwrap();
            let (_, limit) = optimal_policy_known_theta(spec);
            assert!(
                (via_knowledge.value - limit.value).abs() < 1e-10,
                "knowledge {} vs limit {}",
                via_knowledge.value,
                limit.value
            );
        }
    }

    /// Best open-loop value of a single-state instance: max over action
    /// sequences of the expected cumulative reward.
    fn brute_force_open_loop(spec: &EnvironmentSpec) -> f64 {
        assert_eq!(spec.n_states, 1);
        let seqs = (spec.n_actions as u64).pow(spec.horizon as u32);
        let mut best = f64::NEG_INFINITY;
        for combo in 0..seqs {
            let mut c = combo;
            let mut value = 0.0;
            for _t in 0..spec.horizon {
                let a = (c % spec.n_actions as u64) as usize;
                c /= spec.n_actions as u64;
                value += (0..spec.n_params)
                    .map(|th| spec.prior_weights()[th] * spec.expected_reward(0, a, th))
                    .sum::<f64>();
            }
            best = best.max(value);
        }
        best
    }

    #[test]
    fn knowledge_constant_kernel_is_open_loop() {
        for seed in [2, 6, 11] {
            let caps = SizeCaps {
                states: 1,
                actions: 2,
                outcomes: 3,
                params: 3,
                horizon: 3,
            };
            let instance = generate_random_instance(seed, &caps, InstanceKind::Static);
            let spec = instance.base();
            let know = KnowledgeKernelSpec::constant_kernel(spec);
            let value = bcr_with_knowledge(spec, &know, BUDGET).unwrap().value;
            let open_loop = brute_force_open_loop(spec);
            assert!((value - open_loop).abs() < 1e-10);
            assert!(value <= bcr_exact(spec, BUDGET).unwrap().value + 1e-10);
        }
    }

    #[test]
    fn processing_identity_matches_knowledge_value() {
        for seed in [0, 5] {
            let caps = SizeCaps {
                states: 2,
                actions: 2,
                outcomes: 2,
                params: 2,
                horizon: 2,
            };
            let instance = generate_random_instance(seed, &caps, InstanceKind::General);
            let spec = instance.base();
            let know = generate_random_knowledge_kernel(spec, seed + 70, 2);
            let proc = ProcessingKernelSpec::identity(2, spec.horizon);
            let processed = bcr_with_processing(spec, &know, &proc, 1 << 22).unwrap();
            let direct = bcr_with_knowledge(spec, &know, BUDGET).unwrap();
            assert!(
                (processed.value - direct.value).abs() < 1e-10,
                "processed {} vs knowledge {}",
                processed.value,
                direct.value
            );
        }
    }

    #[test]
    fn processing_constant_matches_constant_knowledge() {
        for seed in [1, 7] {
            let caps = SizeCaps {
                states: 1,
                actions: 2,
                outcomes: 2,
                params: 2,
                horizon: 3,
            };
            let instance = generate_random_instance(seed, &caps, InstanceKind::Static);
            let spec = instance.base();
            let know = generate_random_knowledge_kernel(spec, seed + 80, 3);
            let proc = ProcessingKernelSpec::constant(3, spec.horizon);
            let processed = bcr_with_processing(spec, &know, &proc, 1 << 22).unwrap();
            let constant = KnowledgeKernelSpec::constant_kernel(spec);
            let open_loop = bcr_with_knowledge(spec, &constant, BUDGET).unwrap();
            assert!((processed.value - open_loop.value).abs() < 1e-10);
        }
    }

    #[test]
    fn processing_never_beats_knowledge() {
        for seed in 0..25 {
            let caps = SizeCaps {
                states: 2,
                actions: 2,
                outcomes: 2,
                params: 3,
                horizon: 2,
            };
            let instance =
                generate_random_instance(seed, &caps, InstanceKind::cycle(seed as usize));
            let spec = instance.base();
            let know = generate_random_knowledge_kernel(spec, seed + 200, 2);
            let proc = generate_random_processing_kernel(2, 2, spec.horizon, seed + 300);
            let with_knowledge = bcr_with_knowledge(spec, &know, BUDGET).unwrap().value;
            let with_processing = bcr_with_processing(spec, &know, &proc, 1 << 22)
                .unwrap()
                .value;
            assert!(
                with_knowledge >= with_processing - 1e-9,
                "seed {seed}: knowledge {with_knowledge} < processed {with_processing}"
            );
        }
    }

    #[test]
    fn thompson_action_dist_examples() {
        let pf = bernoulli2x2(2);
        let (psi, _) = optimal_policy_known_theta(&pf.base);
        // t = 1: uniform posterior maps to a fair coin over the arms.
        let nu1 = thompson_action_dist(&pf.base, &psi, &pf.base.prior(), 1, 0);
        assert_eq!(nu1.weights(), &[0.5, 0.5]);
        // After pulling arm 0 and seeing reward 1, the posterior is
        // (0.9, 0.1) and so is the pushforward.
        let posterior =
            crate::inference::history_posterior(&pf.base, &history_of(&[(0, 0, 1.0)])).unwrap();
        let nu2 = thompson_action_dist(&pf.base, &psi, &posterior.dist, 2, 0);
        assert!((nu2.weight(0) - 0.9).abs() < 1e-12);
        assert!((nu2.weight(1) - 0.1).abs() < 1e-12);
    }

    fn history_of(records: &[(usize, usize, f64)]) -> History {
        let mut h = History::new();
        for &(state, action, reward) in records {
            h.push(crate::env::StepRecord {
                state,
                action,
                reward,
            });
        }
        h
    }

    #[test]
    fn thompson_value_on_canonical_bandit() {
        let pf = bernoulli2x2(2);
        let report = thompson_value(&pf.base, BUDGET).unwrap();
        // 0.5 on the first pull, 0.756 on the second.
        assert!((report.value - 1.256).abs() < 1e-12, "value {}", report.value);
        assert!((report.per_time_values[0] - 0.5).abs() < 1e-12);
        assert!((report.per_time_values[1] - 0.756).abs() < 1e-12);
    }

    #[test]
    fn thompson_point_prior_equals_limit() {
        let pf = crate::env::bernoulli_bandit(
            &[vec![0.3], vec![0.8]],
            &crate::prob::FiniteDistribution::point_mass(1, 0),
            3,
        )
        .unwrap();
        let (_, limit) = optimal_policy_known_theta(&pf.base);
        let report = thompson_value(&pf.base, BUDGET).unwrap();
        assert!((report.value - limit.value).abs() < 1e-12);
    }

    #[test]
    fn value_chain_over_random_instances() {
        for seed in 0..40 {
            let instance = generate_random_instance(
                seed,
                &SizeCaps::default(),
                InstanceKind::cycle(seed as usize),
            );
            let spec = instance.base();
            let (_, limit) = optimal_policy_known_theta(spec);
            let bcr = bcr_exact(spec, BUDGET).unwrap().value;
            let thompson = thompson_value(spec, BUDGET).unwrap().value;
            assert!(
                limit.value >= bcr - 1e-10,
                "seed {seed}: limit {} < bcr {bcr}",
                limit.value
            );
            assert!(
                bcr >= thompson - 1e-10,
                "seed {seed}: bcr {bcr} < thompson {thompson}"
            );
        }
    }

    #[test]
    fn mbr_examples() {
        let pf = bernoulli2x2(2);
        let value = mbr(&pf.base, BUDGET).unwrap();
        assert!((value - 0.48).abs() < 1e-12, "mbr {value}");

        let point = crate::env::bernoulli_bandit(
            &[vec![0.3], vec![0.8]],
            &crate::prob::FiniteDistribution::point_mass(1, 0),
            2,
        )
        .unwrap();
        assert!(mbr(&point.base, BUDGET).unwrap().abs() < 1e-12);

        // Identical means across parameters: indistinguishable and the same
        // optimum, so no regret.
        let flat = crate::env::bernoulli_bandit(
            &[vec![0.6, 0.6], vec![0.2, 0.2]],
            &crate::prob::FiniteDistribution::uniform(2),
            2,
        )
        .unwrap();
        assert!(mbr(&flat.base, BUDGET).unwrap().abs() < 1e-12);
    }

    #[test]
    fn reward_scaling_leaves_argmax_unchanged() {
        for seed in 0..10 {
            let instance = generate_random_instance(
                seed,
                &SizeCaps::default(),
                InstanceKind::General,
            );
            let spec = instance.base();
            let scaled = EnvironmentSpec::new(
                spec.n_states,
                spec.n_actions,
                spec.n_outcomes,
                spec.n_params,
                spec.horizon,
                spec.prior_weights().to_vec(),
                (0..spec.n_params)
                    .flat_map(|th| spec.initial_row(th).to_vec())
                    .collect(),
                (0..spec.n_states)
                    .flat_map(|s| {
                        (0..spec.n_actions)
                            .flat_map(move |a| (0..spec.n_params).map(move |th| (s, a, th)))
                    })
                    .flat_map(|(s, a, th)| spec.trans_row(s, a, th).to_vec())
                    .collect(),
                (0..spec.n_states)
                    .flat_map(|s| (0..spec.n_params).map(move |th| (s, th)))
                    .flat_map(|(s, th)| spec.outcome_row(s, th).to_vec())
                    .collect(),
                spec.reward_table().iter().map(|&r| 2.5 * r).collect(),
            )
            .unwrap();
            let (p1, v1) = optimal_policy_known_theta(spec);
            let (p2, v2) = optimal_policy_known_theta(&scaled);
            assert_eq!(p1, p2);
            assert!((2.5 * v1.value - v2.value).abs() < 1e-9);
        }
    }

    #[test]
    fn thompson_monte_carlo_agrees_with_exact_value() {
        let pf = bernoulli2x2(2);
        let (psi, _) = optimal_policy_known_theta(&pf.base);
        let exact = thompson_value(&pf.base, BUDGET).unwrap().value;
        let n = 200_000;
        let mut rng = crate::prob::RandomSource::new(4242, 0);
        let prior = pf.base.prior();
        let mut total = 0.0;
        let mut totsq = 0.0;
        for _ in 0..n {
            let theta = prior.sample(&mut rng);
            let (_, reward) = simulate_thompson_episode(&pf.base, &psi, theta, &mut rng);
            total += reward;
            totsq += reward * reward;
        }
        let mean = total / n as f64;
        let var = (totsq / n as f64 - mean * mean).max(0.0);
        let se = (var / n as f64).sqrt();
        assert!(
            (mean - exact).abs() < 4.0 * se + 1e-9,
            "mean {mean} vs exact {exact} (se {se})"
        );
    }

    #[test]
    fn simulate_episode_under_theta_policy() {
        let pf = bernoulli2x2(3);
        let (psi, _) = optimal_policy_known_theta(&pf.base);
        let mut rng = crate::prob::RandomSource::new(8, 0);
        let (history, _) = simulate_episode(&pf.base, &psi, 0, &mut rng).unwrap();
        // Parameter 0 prefers arm 0 at every step.
        assert!(history.records().iter().all(|r| r.action == 0));
    }
}

#[cfg(test)]
mod mc_tests {
    use super::*;
    use crate::env::simulate_episode;
    use crate::gen::{generate_random_instance, InstanceKind, SizeCaps};
    use crate::prob::RandomSource;

    #[test]
    fn fixed_policy_monte_carlo_matches_exact_value() {
        // The exact history-policy value equals the Monte Carlo mean of
        // simulated episodes under that policy within four standard errors.
        for seed in [3u64, 14] {
            let instance = generate_random_instance(
                seed,
                &SizeCaps::default(),
                InstanceKind::cycle(seed as usize),
            );
            let spec = instance.base();
            let report = bcr_exact(spec, 1_000_000).unwrap();
            let n = 100_000;
            let mut rng = RandomSource::new(seed, 77);
            let prior = spec.prior();
            let mut total = 0.0;
            let mut total_sq = 0.0;
            for _ in 0..n {
                let theta = prior.sample(&mut rng);
                let (_, reward) =
                    simulate_episode(spec, &report.policy, theta, &mut rng).unwrap();
                total += reward;
                total_sq += reward * reward;
            }
            let mean = total / n as f64;
            let variance = (total_sq / n as f64 - mean * mean).max(0.0);
            let se = (variance / n as f64).sqrt();
            assert!(
                (mean - report.value).abs() <= 4.0 * se + 1e-9,
                "seed {seed}: mean {mean} vs exact {} (se {se})",
                report.value
            );
        }
    }
}

#[cfg(test)]
mod degenerate_tests {
    use super::*;

    #[test]
    fn single_arm_point_prior_has_no_regret() {
        let pf = crate::env::bernoulli_bandit(
            &[vec![0.6]],
            &crate::prob::FiniteDistribution::point_mass(1, 0),
            3,
        )
        .unwrap();
        assert!(mbr(&pf.base, 1_000_000).unwrap().abs() < 1e-12);
    }
}
