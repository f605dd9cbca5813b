//! Finite Bayesian MDP descriptions and forward simulation.
//!
//! An [`EnvironmentSpec`] declares the spaces, kernels, reward table, prior,
//! and horizon of a finite Bayesian Markov decision process. Static
//! instances, multi-armed bandits, and online optimization with partial
//! feedback are special cases; the latter two are carried by
//! [`PartialFeedbackSpec`], which wraps a base spec whose outcome space is
//! the product of per-action outcomes.
//!
//! Specs are plain data. [`EnvironmentSpec::validate`] returns diagnostics
//! rather than panicking, so a spec loaded from a file can be inspected
//! before any computation trusts it.

use crate::planning::PolicyTable;
use crate::prob::{FiniteDistribution, RandomSource, MASS_TOL};
use std::fmt;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnvError {
    #[error("table shape mismatch: {0}")]
    Shape(String),
    #[error("arm {arm} mean {mean} for parameter {theta} is outside [0, 1]")]
    MeanOutOfRange { arm: usize, theta: usize, mean: f64 },
    #[error("policy has no action for t={time}, state={state}")]
    PolicyUndefined { time: usize, state: usize },
    #[error("preference values must be pairwise distinct so that observing the reward reveals the per-action outcome; values {a} and {b} collide")]
    NonInjectivePreference { a: usize, b: usize },
    #[error("partial feedback structure violated: {0}")]
    PartialFeedback(String),
    #[error("spec failed validation: {0}")]
    Invalid(String),
}

/// A single validation finding, naming the offending table entry.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    PriorRow { detail: String },
    InitialRow { theta: usize, detail: String },
    TransRow { s: usize, a: usize, theta: usize, detail: String },
    OutcomeRow { s: usize, theta: usize, detail: String },
    RewardEntry { y: usize, a: usize, detail: String },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::PriorRow { detail } => write!(f, "prior: {detail}"),
            Violation::InitialRow { theta, detail } => {
                write!(f, "initial[theta={theta}]: {detail}")
            }
            Violation::TransRow { s, a, theta, detail } => {
                write!(f, "trans[s={s}][a={a}][theta={theta}]: {detail}")
            }
            Violation::OutcomeRow { s, theta, detail } => {
                write!(f, "outcome[s={s}][theta={theta}]: {detail}")
            }
            Violation::RewardEntry { y, a, detail } => {
                write!(f, "reward[y={y}][a={a}]: {detail}")
            }
        }
    }
}

/// A finite Bayesian MDP.
///
/// Kernel rows are stored as flat weight vectors so that a malformed spec can
/// be represented and diagnosed; every computation in the crate assumes a
/// spec for which [`validate`](Self::validate) returned no violations.
///
/// Layouts (row-major): `trans[(s, a, theta)] -> S`, `outcome[(s, theta)] -> Y`,
/// `initial[theta] -> S`, `reward[(y, a)]`.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvironmentSpec {
    pub n_states: usize,
    pub n_actions: usize,
    pub n_outcomes: usize,
    pub n_params: usize,
    pub horizon: usize,
    prior: Vec<f64>,
    initial: Vec<f64>,
    trans: Vec<f64>,
    outcome: Vec<f64>,
    reward: Vec<f64>,
}

impl EnvironmentSpec {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        n_states: usize,
        n_actions: usize,
        n_outcomes: usize,
        n_params: usize,
        horizon: usize,
        prior: Vec<f64>,
        initial: Vec<f64>,
        trans: Vec<f64>,
        outcome: Vec<f64>,
        reward: Vec<f64>,
    ) -> Result<Self, EnvError> {
        if n_states == 0 || n_actions == 0 || n_outcomes == 0 || n_params == 0 || horizon == 0 {
            return Err(EnvError::Shape("all dimensions must be positive".into()));
        }
        let check = |name: &str, got: usize, want: usize| {
            if got == want {
                Ok(())
            } else {
                Err(EnvError::Shape(format!("{name} has length {got}, expected {want}")))
            }
        };
        check("prior", prior.len(), n_params)?;
        check("initial", initial.len(), n_params * n_states)?;
        check("trans", trans.len(), n_states * n_actions * n_params * n_states)?;
        check("outcome", outcome.len(), n_states * n_params * n_outcomes)?;
        check("reward", reward.len(), n_outcomes * n_actions)?;
        // Canonicalize -0.0 so reward values compare and hash consistently.
        let reward = reward
            .into_iter()
            .map(|r| if r == 0.0 { 0.0 } else { r })
            .collect();
        Ok(Self {
            n_states,
            n_actions,
            n_outcomes,
            n_params,
            horizon,
            prior,
            initial,
            trans,
            outcome,
            reward,
        })
    }

    pub fn prior_weights(&self) -> &[f64] {
        &self.prior
    }

    pub fn prior(&self) -> FiniteDistribution {
        FiniteDistribution::new(self.prior.clone()).expect("validated prior")
    }

    pub fn initial_row(&self, theta: usize) -> &[f64] {
        let base = theta * self.n_states;
        &self.initial[base..base + self.n_states]
    }

    pub fn trans_row(&self, s: usize, a: usize, theta: usize) -> &[f64] {
        let base = ((s * self.n_actions + a) * self.n_params + theta) * self.n_states;
        &self.trans[base..base + self.n_states]
    }

    pub fn outcome_row(&self, s: usize, theta: usize) -> &[f64] {
        let base = (s * self.n_params + theta) * self.n_outcomes;
        &self.outcome[base..base + self.n_outcomes]
    }

    pub fn reward(&self, y: usize, a: usize) -> f64 {
        self.reward[y * self.n_actions + a]
    }

    pub fn reward_table(&self) -> &[f64] {
        &self.reward
    }

    /// Expected one-step reward of action `a` in state `s` under parameter
    /// `theta`.
    pub fn expected_reward(&self, s: usize, a: usize, theta: usize) -> f64 {
        self.outcome_row(s, theta)
            .iter()
            .enumerate()
            .map(|(y, &w)| w * self.reward(y, a))
            .sum()
    }

    /// Returns every invariant violation; an empty list means the spec is a
    /// well-formed finite Bayesian MDP.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let row_problem = |row: &[f64]| -> Option<String> {
            for &w in row {
                if !w.is_finite() {
                    return Some("non-finite weight".into());
                }
                if w < 0.0 {
                    return Some(format!("negative weight {w}"));
                }
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > MASS_TOL {
                return Some(format!("weights sum to {sum}"));
            }
            None
        };
        if let Some(detail) = row_problem(&self.prior) {
            out.push(Violation::PriorRow { detail });
        }
        for theta in 0..self.n_params {
            if let Some(detail) = row_problem(self.initial_row(theta)) {
                out.push(Violation::InitialRow { theta, detail });
            }
        }
        for s in 0..self.n_states {
            for a in 0..self.n_actions {
                for theta in 0..self.n_params {
                    if let Some(detail) = row_problem(self.trans_row(s, a, theta)) {
                        out.push(Violation::TransRow { s, a, theta, detail });
                    }
                }
            }
        }
        for s in 0..self.n_states {
            for theta in 0..self.n_params {
                if let Some(detail) = row_problem(self.outcome_row(s, theta)) {
                    out.push(Violation::OutcomeRow { s, theta, detail });
                }
            }
        }
        for y in 0..self.n_outcomes {
            for a in 0..self.n_actions {
                if !self.reward(y, a).is_finite() {
                    out.push(Violation::RewardEntry {
                        y,
                        a,
                        detail: format!("non-finite reward {}", self.reward(y, a)),
                    });
                }
            }
        }
        out
    }

    /// A static instance never changes state: every transition row is a point
    /// mass at the current state.
    pub fn is_static(&self) -> bool {
        for s in 0..self.n_states {
            for a in 0..self.n_actions {
                for theta in 0..self.n_params {
                    let row = self.trans_row(s, a, theta);
                    for (s2, &w) in row.iter().enumerate() {
                        let want = if s2 == s { 1.0 } else { 0.0 };
                        if (w - want).abs() > MASS_TOL {
                            return false;
                        }
                    }
                }
            }
        }
        true
    }

    /// Sorted distinct reward values over all `(y, a)` pairs, merged with
    /// exact floating equality.
    pub fn reachable_reward_set(&self) -> Vec<f64> {
        let mut values: Vec<f64> = self.reward.clone();
        values.sort_by(|a, b| a.partial_cmp(b).expect("validated rewards are not NaN"));
        values.dedup();
        values
    }

    /// Probability that action `a` in state `s` yields reward value `r`
    /// under parameter `theta`: outcome-kernel mass over `{y : r(y,a) = r}`.
    pub fn reward_likelihood(&self, s: usize, a: usize, r: f64, theta: usize) -> f64 {
        self.outcome_row(s, theta)
            .iter()
            .enumerate()
            .filter(|&(y, _)| self.reward(y, a) == r)
            .map(|(_, &w)| w)
            .sum()
    }
}

/// One step of a trajectory: the state observed, the action taken, and the
/// reward received.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub state: usize,
    pub action: usize,
    pub reward: f64,
}

/// A typed trajectory prefix: `records` has length `t - 1` for the history
/// available at decision time `t`. Static environments still record the
/// (constant) state to keep a single history type.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct History {
    records: Vec<StepRecord>,
}

impl History {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, record: StepRecord) {
        self.records.push(record);
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[StepRecord] {
        &self.records
    }

    pub fn from_records(records: Vec<StepRecord>) -> Self {
        Self { records }
    }

    pub(crate) fn pop_record(&mut self) {
        self.records.pop();
    }

    /// Hashable key: rewards are keyed by their exact bit patterns, which is
    /// sound because reward values come from the reachable reward set and are
    /// compared with exact equality throughout.
    pub fn key(&self) -> Vec<(usize, usize, u64)> {
        self.records
            .iter()
            .map(|r| (r.state, r.action, r.reward.to_bits()))
            .collect()
    }
}

/// Reward range certificate: `sigma2 = (hi - lo)^2 / 4` is a valid
/// sub-Gaussian variance proxy for any distribution of the arguments
/// (Hoeffding's lemma).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundedRewardCertificate {
    pub lo: f64,
    pub hi: f64,
    pub sub_gaussian_sigma2: f64,
}

impl BoundedRewardCertificate {
    pub fn from_spec(spec: &EnvironmentSpec) -> Self {
        let lo = spec
            .reward_table()
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min);
        let hi = spec
            .reward_table()
            .iter()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max);
        Self {
            lo,
            hi,
            sub_gaussian_sigma2: (hi - lo) * (hi - lo) / 4.0,
        }
    }

    pub fn within_unit_interval(&self) -> bool {
        self.lo >= -MASS_TOL && self.hi <= 1.0 + MASS_TOL
    }
}

/// An online-optimization-with-partial-feedback instance.
///
/// The base spec's outcome space is the product `Y = (Y')^|A|`, encoded
/// little-endian in base `n_per_action`: coordinate `a` of outcome `y` is
/// `(y / n_per_action^a) % n_per_action`. The reward of action `a` is the
/// preference of coordinate `a`. Preference values must be pairwise distinct
/// so that a recorded reward is equivalent to the observed per-action
/// outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct PartialFeedbackSpec {
    pub base: EnvironmentSpec,
    pub n_per_action: usize,
    pub preference: Vec<f64>,
    pub full_reveal: bool,
}

impl PartialFeedbackSpec {
    pub fn new(
        base: EnvironmentSpec,
        n_per_action: usize,
        preference: Vec<f64>,
        full_reveal: bool,
    ) -> Result<Self, EnvError> {
        if preference.len() != n_per_action {
            return Err(EnvError::Shape(format!(
                "preference has length {}, expected {n_per_action}",
                preference.len()
            )));
        }
        let expected_outcomes = n_per_action
            .checked_pow(base.n_actions as u32)
            .ok_or_else(|| EnvError::Shape("outcome product space overflows".into()))?;
        if base.n_outcomes != expected_outcomes {
            return Err(EnvError::PartialFeedback(format!(
                "|Y| = {} but (|Y'|)^|A| = {expected_outcomes}",
                base.n_outcomes
            )));
        }
        for i in 0..n_per_action {
            for j in (i + 1)..n_per_action {
                if preference[i] == preference[j] {
                    return Err(EnvError::NonInjectivePreference { a: i, b: j });
                }
            }
        }
        if !base.is_static() {
            return Err(EnvError::PartialFeedback("base spec is not static".into()));
        }
        // Outcomes must not depend on the state.
        for theta in 0..base.n_params {
            let row0 = base.outcome_row(0, theta);
            for s in 1..base.n_states {
                let row = base.outcome_row(s, theta);
                if row
                    .iter()
                    .zip(row0)
                    .any(|(&a, &b)| (a - b).abs() > MASS_TOL)
                {
                    return Err(EnvError::PartialFeedback(format!(
                        "outcome kernel depends on the state (theta={theta}, s={s})"
                    )));
                }
            }
        }
        let pf = Self {
            base,
            n_per_action,
            preference,
            full_reveal,
        };
        // Reward identity r(y, a) = preference(y_a), checked exhaustively.
        for y in 0..pf.base.n_outcomes {
            for a in 0..pf.base.n_actions {
                let want = pf.preference[pf.coordinate(y, a)];
                if pf.base.reward(y, a) != want {
                    return Err(EnvError::PartialFeedback(format!(
                        "reward[y={y}][a={a}] = {} but preference of coordinate {} is {want}",
                        pf.base.reward(y, a),
                        pf.coordinate(y, a)
                    )));
                }
            }
        }
        if full_reveal {
            pf.check_full_reveal()?;
        }
        Ok(pf)
    }

    /// Coordinate `a` of the encoded outcome vector `y`.
    pub fn coordinate(&self, y: usize, a: usize) -> usize {
        (y / self.n_per_action.pow(a as u32)) % self.n_per_action
    }

    /// Full reveal means observing any single coordinate determines the whole
    /// outcome vector on the support of the outcome kernel.
    fn check_full_reveal(&self) -> Result<(), EnvError> {
        let mut support: Vec<usize> = Vec::new();
        for s in 0..self.base.n_states {
            for theta in 0..self.base.n_params {
                for (y, &w) in self.base.outcome_row(s, theta).iter().enumerate() {
                    if w > 0.0 && !support.contains(&y) {
                        support.push(y);
                    }
                }
            }
        }
        for a in 0..self.base.n_actions {
            for (i, &y1) in support.iter().enumerate() {
                for &y2 in &support[i + 1..] {
                    if self.coordinate(y1, a) == self.coordinate(y2, a) {
                        return Err(EnvError::PartialFeedback(format!(
                            "full_reveal set, but outcomes {y1} and {y2} share coordinate {a}"
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

/// An instance is either a general MDP or a partial-feedback wrapper around
/// one.
#[derive(Debug, Clone, PartialEq)]
pub enum Instance {
    General(EnvironmentSpec),
    PartialFeedback(PartialFeedbackSpec),
}

impl Instance {
    pub fn base(&self) -> &EnvironmentSpec {
        match self {
            Instance::General(spec) => spec,
            Instance::PartialFeedback(pf) => &pf.base,
        }
    }

    pub fn partial_feedback(&self) -> Option<&PartialFeedbackSpec> {
        match self {
            Instance::PartialFeedback(pf) => Some(pf),
            Instance::General(_) => None,
        }
    }
}

/// Runs one full-horizon episode under a fixed deterministic policy and a
/// fixed environment parameter, returning the trajectory and the cumulative
/// reward.
pub fn simulate_episode(
    spec: &EnvironmentSpec,
    policy: &PolicyTable,
    theta: usize,
    rng: &mut RandomSource,
) -> Result<(History, f64), EnvError> {
    let is_static = spec.is_static();
    let mut history = History::new();
    let mut total = 0.0;
    let initial = FiniteDistribution::new(spec.initial_row(theta).to_vec())
        .expect("validated initial row");
    let mut state = initial.sample(rng);
    for t in 1..=spec.horizon {
        let action = policy
            .action_in_episode(t, state, &history, theta)
            .ok_or(EnvError::PolicyUndefined { time: t, state })?;
        let outcome_row = FiniteDistribution::new(spec.outcome_row(state, theta).to_vec())
            .expect("validated outcome row");
        let y = outcome_row.sample(rng);
        let reward = spec.reward(y, action);
        total += reward;
        history.push(StepRecord {
            state,
            action,
            reward,
        });
        let trans_row = FiniteDistribution::new(spec.trans_row(state, action, theta).to_vec())
            .expect("validated transition row");
        let next = trans_row.sample(rng);
        if is_static {
            assert_eq!(next, state, "static spec changed state");
        }
        state = next;
    }
    Ok((history, total))
}

/// Convenience constructor for a Bernoulli multi-armed bandit, modeled as an
/// online-optimization-with-partial-feedback instance: the outcome is the
/// full vector of per-arm Bernoulli draws and the reward of arm `a` is its
/// own draw. The arms are independent given the parameter, so observing one
/// coordinate does not reveal the rest (`full_reveal = false`).
///
/// `means[arm][theta]` is the success probability of `arm` under parameter
/// `theta`.
pub fn bernoulli_bandit(
    means: &[Vec<f64>],
    prior: &FiniteDistribution,
    horizon: usize,
) -> Result<PartialFeedbackSpec, EnvError> {
    let n_actions = means.len();
    let n_params = prior.support_size();
    if n_actions == 0 {
        return Err(EnvError::Shape("at least one arm required".into()));
    }
    for (arm, row) in means.iter().enumerate() {
        if row.len() != n_params {
            return Err(EnvError::Shape(format!(
                "arm {arm} has {} means, expected {n_params}",
                row.len()
            )));
        }
        for (theta, &mean) in row.iter().enumerate() {
            if !(0.0..=1.0).contains(&mean) {
                return Err(EnvError::MeanOutOfRange { arm, theta, mean });
            }
        }
    }
    let n_outcomes = 1usize
        .checked_shl(n_actions as u32)
        .ok_or_else(|| EnvError::Shape("too many arms".into()))?;
    let mut outcome = vec![0.0; n_params * n_outcomes];
    for theta in 0..n_params {
        for y in 0..n_outcomes {
            let mut w = 1.0;
            for (arm, row) in means.iter().enumerate() {
                let bit = (y >> arm) & 1;
                w *= if bit == 1 { row[theta] } else { 1.0 - row[theta] };
            }
            outcome[theta * n_outcomes + y] = w;
        }
    }
    let mut reward = vec![0.0; n_outcomes * n_actions];
    for y in 0..n_outcomes {
        for a in 0..n_actions {
            reward[y * n_actions + a] = ((y >> a) & 1) as f64;
        }
    }
    let base = EnvironmentSpec::new(
        1,
        n_actions,
        n_outcomes,
        n_params,
        horizon,
        prior.weights().to_vec(),
        vec![1.0; n_params],
        vec![1.0; n_actions * n_params],
        outcome,
        reward,
    )?;
    PartialFeedbackSpec::new(base, 2, vec![0.0, 1.0], false)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::planning::{InfoKey, InformationKind, PolicyTable};

    pub(crate) fn two_armed_bandit(horizon: usize) -> PartialFeedbackSpec {
        bernoulli_bandit(
            &[vec![0.9, 0.1], vec![0.1, 0.9]],
            &FiniteDistribution::uniform(2),
            horizon,
        )
        .unwrap()
    }

    #[test]
    fn well_formed_bandit_validates() {
        let pf = two_armed_bandit(2);
        assert!(pf.base.validate().is_empty());
    }

    #[test]
    fn kernel_row_sum_violation_named() {
        let mut spec = two_armed_bandit(2).base;
        // Corrupt trans[s=0][a=1][theta=0] to sum to 0.9.
        let base = (0 * spec.n_actions + 1) * spec.n_params * spec.n_states;
        spec.trans[base] = 0.9;
        let violations = spec.validate();
        assert_eq!(violations.len(), 1);
        let text = violations[0].to_string();
        assert!(text.contains("trans[s=0][a=1][theta=0]"), "{text}");
    }

    #[test]
    fn nan_reward_violation_named() {
        let mut spec = two_armed_bandit(2).base;
        spec.reward[2 * spec.n_actions + 1] = f64::NAN;
        let violations = spec.validate();
        assert_eq!(violations.len(), 1);
        assert!(violations[0].to_string().contains("reward[y=2][a=1]"));
    }

    #[test]
    fn reachable_rewards_bernoulli() {
        let pf = two_armed_bandit(2);
        assert_eq!(pf.base.reachable_reward_set(), vec![0.0, 1.0]);
    }

    #[test]
    fn reachable_rewards_constant_table() {
        let spec = EnvironmentSpec::new(
            1,
            2,
            2,
            1,
            1,
            vec![1.0],
            vec![1.0],
            vec![1.0, 1.0],
            vec![0.5, 0.5],
            vec![0.75; 4],
        )
        .unwrap();
        assert_eq!(spec.reachable_reward_set(), vec![0.75]);
    }

    #[test]
    fn reachable_rewards_distinct_count() {
        // 3 outcomes x 2 actions with 5 distinct values.
        let reward = vec![0.0, 0.25, 0.5, 0.25, 0.75, 1.0];
        let spec = EnvironmentSpec::new(
            1,
            2,
            3,
            1,
            1,
            vec![1.0],
            vec![1.0],
            vec![1.0, 1.0],
            vec![0.2, 0.3, 0.5],
            reward,
        )
        .unwrap();
        assert_eq!(
            spec.reachable_reward_set(),
            vec![0.0, 0.25, 0.5, 0.75, 1.0]
        );
    }

    #[test]
    fn simulate_deterministic_environment_analytic_sum() {
        // Single outcome, single state: cumulative reward is exactly T * r.
        let spec = EnvironmentSpec::new(
            1,
            1,
            1,
            1,
            4,
            vec![1.0],
            vec![1.0],
            vec![1.0],
            vec![1.0],
            vec![0.25],
        )
        .unwrap();
        let mut policy = PolicyTable::new(InformationKind::History, 4);
        for t in 1..=4 {
            policy.set_default(t, 0, 0);
        }
        let mut rng = RandomSource::new(1, 0);
        let (history, total) = simulate_episode(&spec, &policy, 0, &mut rng).unwrap();
        assert_eq!(history.len(), 4);
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn simulate_horizon_one_single_record() {
        let pf = two_armed_bandit(1);
        let mut policy = PolicyTable::new(InformationKind::History, 1);
        policy.set_default(1, 0, 0);
        let mut rng = RandomSource::new(3, 1);
        let (history, _) = simulate_episode(&pf.base, &policy, 0, &mut rng).unwrap();
        assert_eq!(history.len(), 1);
    }

    #[test]
    fn simulate_point_prior_bandit_mean_within_ci() {
        // Constant policy on the best arm of a point-prior bandit: the mean
        // cumulative reward over 10^5 episodes lies within 3 binomial sigma
        // of T * 0.9.
        let pf = bernoulli_bandit(
            &[vec![0.9], vec![0.1]],
            &FiniteDistribution::point_mass(1, 0),
            2,
        )
        .unwrap();
        let mut policy = PolicyTable::new(InformationKind::History, 2);
        policy.set_default(1, 0, 0);
        policy.set_default(2, 0, 0);
        let n = 100_000;
        let mut rng = RandomSource::new(17, 0);
        let mut total = 0.0;
        for _ in 0..n {
            let (_, r) = simulate_episode(&pf.base, &policy, 0, &mut rng).unwrap();
            total += r;
        }
        let mean = total / n as f64;
        let sigma = (2.0 * 0.9 * 0.1 / n as f64).sqrt();
        assert!((mean - 1.8).abs() < 3.0 * sigma, "mean {mean}");
    }

    #[test]
    fn policy_undefined_is_reported() {
        let pf = two_armed_bandit(2);
        let mut policy = PolicyTable::new(InformationKind::History, 2);
        policy.set(1, 0, InfoKey::History(vec![]), 0);
        // No entries for t = 2.
        let mut rng = RandomSource::new(5, 0);
        let err = simulate_episode(&pf.base, &policy, 0, &mut rng).unwrap_err();
        assert!(matches!(err, EnvError::PolicyUndefined { time: 2, state: 0 }));
    }

    #[test]
    fn partial_feedback_reward_identity_checked() {
        let pf = two_armed_bandit(2);
        for y in 0..pf.base.n_outcomes {
            for a in 0..pf.base.n_actions {
                assert_eq!(pf.base.reward(y, a), pf.preference[pf.coordinate(y, a)]);
            }
        }
    }

    #[test]
    fn partial_feedback_rejects_duplicate_preferences() {
        let base = two_armed_bandit(2).base;
        let err = PartialFeedbackSpec::new(base, 2, vec![0.5, 0.5], false).unwrap_err();
        assert!(matches!(err, EnvError::NonInjectivePreference { .. }));
    }

    #[test]
    fn independent_arms_are_not_full_reveal() {
        let base = two_armed_bandit(2).base;
        assert!(PartialFeedbackSpec::new(base, 2, vec![0.0, 1.0], true).is_err());
    }

    #[test]
    fn mean_out_of_range_rejected() {
        let err = bernoulli_bandit(
            &[vec![1.2]],
            &FiniteDistribution::point_mass(1, 0),
            1,
        )
        .unwrap_err();
        assert!(matches!(err, EnvError::MeanOutOfRange { arm: 0, theta: 0, .. }));
    }

    #[test]
    fn certificate_matches_reward_range() {
        let pf = two_armed_bandit(2);
        let cert = BoundedRewardCertificate::from_spec(&pf.base);
        assert_eq!(cert.lo, 0.0);
        assert_eq!(cert.hi, 1.0);
        assert_eq!(cert.sub_gaussian_sigma2, 0.25);
        assert!(cert.within_unit_interval());
    }
}
