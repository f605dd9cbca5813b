//! The randomized verification suites: soundness of every bound against the
//! exact regret, the data-processing inequality for the cumulative reward,
//! and the entropy-cap sweep over growing horizons.
//!
//! Each suite is a pure function of its seed, so reruns are byte-identical.
//! Failures are collected as human-readable strings rather than panics; the
//! caller decides whether a non-empty failure list is fatal.

use crate::bounds::{BoundError, BOUND_TOL};
use crate::env::{EnvironmentSpec, Instance, PartialFeedbackSpec};
use crate::gen::{
    generate_random_instance, generate_random_knowledge_kernel,
    generate_random_processing_kernel, InstanceKind, SizeCaps,
};
use crate::planning::{bcr_with_knowledge, bcr_with_processing, PlanError};
use crate::report::{evaluate_all, BoundReport};

/// Gap below which the exact minimum Bayesian regret may dip from float
/// noise.
pub const MBR_NOISE_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct SoundnessOutcome {
    pub reports: Vec<BoundReport>,
    pub failures: Vec<String>,
}

/// Generates `count` random instances (cycling the four instance kinds) and
/// asserts, for each: the regret is non-negative, every applicable bound
/// dominates it, the printed relaxation chains hold, and the entropy
/// dominance check passes.
pub fn soundness_suite(
    seed: u64,
    count: usize,
    caps: &SizeCaps,
    budget: usize,
) -> Result<SoundnessOutcome, BoundError> {
    let mut reports = Vec::with_capacity(count);
    let mut failures = Vec::new();
    for i in 0..count {
        let kind = InstanceKind::cycle(i);
        let instance_seed = seed.wrapping_add(i as u64);
        let instance = generate_random_instance(instance_seed, caps, kind);
        let id = format!("gen-{}-{}", kind.tag(), instance_seed);
        let report = evaluate_all(&instance, &id, None, budget)?;
        check_report(&report, &mut failures);
        reports.push(report);
    }
    Ok(SoundnessOutcome { reports, failures })
}

/// The per-report inequality checks shared by the soundness suite and the
/// file-driven bounds run.
pub fn check_report(report: &BoundReport, failures: &mut Vec<String>) {
    let id = &report.instance_id;
    if report.mbr_exact < -MBR_NOISE_FLOOR {
        failures.push(format!("{id}: regret {} is negative", report.mbr_exact));
    }
    for entry in &report.entries {
        if entry.applicable && entry.holds != Some(true) {
            failures.push(format!(
                "{id}: {} fails (value {:?}, regret {})",
                entry.name, entry.value, report.mbr_exact
            ));
        }
    }
    let value_of = |name: &str| -> Option<f64> {
        report
            .entry(name)
            .filter(|e| e.applicable && !e.infinite)
            .and_then(|e| e.value)
    };
    let mut chain = |lo: &str, hi: &str| {
        if let (Some(a), Some(b)) = (value_of(lo), value_of(hi)) {
            if a > b + BOUND_TOL {
                failures.push(format!("{id}: {lo} = {a} exceeds {hi} = {b}"));
            }
        }
    };
    chain("cor2_wasserstein_bounded", "cor1_kl_bounded");
    chain("prop3_mab_wasserstein", "cor3_mab_mutual_information");
    chain("prop4_pf_wasserstein", "cor4_pf_kl");
    chain("cor4_pf_kl", "cor5_entropy_general");
    chain("cor4_pf_kl", "cor5_entropy_full_reveal");
    chain("prop4_pf_wasserstein", "cor5_entropy_general");
    chain("prop4_pf_wasserstein", "cor5_entropy_full_reveal");
    if let Some(entry) = report.entry("remark7_entropy_dominance") {
        if entry.applicable && entry.holds != Some(true) {
            failures.push(format!("{id}: entropy dominance fails"));
        }
    }
}

#[derive(Debug, Clone)]
pub struct DpiResult {
    pub triple_id: String,
    pub knowledge_value: f64,
    pub processed_value: f64,
    pub holds: bool,
}

#[derive(Debug, Clone)]
pub struct DpiOutcome {
    pub results: Vec<DpiResult>,
    pub failures: Vec<String>,
}

/// Caps small enough that exhaustive processed-policy enumeration stays
/// cheap: two states, two actions, processed alphabet of two.
pub fn dpi_caps() -> SizeCaps {
    SizeCaps {
        states: 2,
        actions: 2,
        outcomes: 3,
        params: 3,
        horizon: 3,
    }
}

/// Random (instance, knowledge kernel, processing kernel) triples: the value
/// reachable from the knowledge stream must dominate the value reachable
/// from any processing of it.
pub fn dpi_suite(seed: u64, count: usize, budget: usize) -> Result<DpiOutcome, PlanError> {
    let caps = dpi_caps();
    let mut results = Vec::with_capacity(count);
    let mut failures = Vec::new();
    for i in 0..count {
        let triple_seed = seed.wrapping_add(i as u64).wrapping_mul(0x9e37_79b9);
        let instance = generate_random_instance(triple_seed, &caps, InstanceKind::cycle(i));
        let spec = instance.base();
        let n_knowledge = 2 + (triple_seed as usize) % 2;
        let know = generate_random_knowledge_kernel(spec, triple_seed ^ 0xabcd, n_knowledge);
        let proc =
            generate_random_processing_kernel(n_knowledge, 2, spec.horizon, triple_seed ^ 0x1234);
        let knowledge_value = bcr_with_knowledge(spec, &know, budget)?.value;
        let processed_value = bcr_with_processing(spec, &know, &proc, 1 << 24)?.value;
        let holds = knowledge_value >= processed_value - BOUND_TOL;
        let triple_id = format!("dpi-{triple_seed}");
        if !holds {
            failures.push(format!(
                "{triple_id}: processed value {processed_value} exceeds knowledge value {knowledge_value}"
            ));
        }
        results.push(DpiResult {
            triple_id,
            knowledge_value,
            processed_value,
            holds,
        });
    }
    Ok(DpiOutcome { results, failures })
}

#[derive(Debug, Clone)]
pub struct SweepRow {
    pub instance_id: String,
    pub horizon: usize,
    pub information_sum: f64,
    pub entropy_cap: f64,
    pub holds: bool,
}

#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub rows: Vec<SweepRow>,
    pub failures: Vec<String>,
}

/// Rebuilds an instance with a different horizon (kernels unchanged).
pub fn with_horizon(instance: &Instance, horizon: usize) -> Instance {
    let spec = instance.base();
    let rebuilt = EnvironmentSpec::new(
        spec.n_states,
        spec.n_actions,
        spec.n_outcomes,
        spec.n_params,
        horizon,
        spec.prior_weights().to_vec(),
        (0..spec.n_params)
            .flat_map(|th| spec.initial_row(th).to_vec())
            .collect(),
        (0..spec.n_states)
            .flat_map(|s| {
                (0..spec.n_actions).flat_map(move |a| (0..spec.n_params).map(move |th| (s, a, th)))
            })
            .flat_map(|(s, a, th)| spec.trans_row(s, a, th).to_vec())
            .collect(),
        (0..spec.n_states)
            .flat_map(|s| (0..spec.n_params).map(move |th| (s, th)))
            .flat_map(|(s, th)| spec.outcome_row(s, th).to_vec())
            .collect(),
        spec.reward_table().to_vec(),
    )
    .expect("same shapes");
    match instance {
        Instance::General(_) => Instance::General(rebuilt),
        Instance::PartialFeedback(pf) => Instance::PartialFeedback(
            PartialFeedbackSpec::new(rebuilt, pf.n_per_action, pf.preference.clone(), pf.full_reveal)
                .expect("same structure"),
        ),
    }
}

/// Runs the entropy-dominance check over horizons 1..=4 on a fixed family of
/// partial-feedback instances: the summed information gain accumulates
/// monotonically in the horizon and never exceeds the entropy cap.
pub fn sweep_t_suite(seed: u64, budget: usize) -> Result<SweepOutcome, BoundError> {
    let mut family: Vec<(String, Instance)> = vec![(
        "bernoulli2x2".to_string(),
        Instance::PartialFeedback(
            crate::env::bernoulli_bandit(
                &[vec![0.9, 0.1], vec![0.1, 0.9]],
                &crate::prob::FiniteDistribution::uniform(2),
                1,
            )
            .expect("canonical bandit is well-formed"),
        ),
    )];
    for i in 0..3u64 {
        let kind = if i % 2 == 0 {
            InstanceKind::PartialFeedback
        } else {
            InstanceKind::PartialFeedbackFullReveal
        };
        let instance_seed = seed.wrapping_add(1000 + i);
        let caps = SizeCaps {
            horizon: 1,
            ..SizeCaps::default()
        };
        family.push((
            format!("sweep-{}-{}", kind.tag(), instance_seed),
            generate_random_instance(instance_seed, &caps, kind),
        ));
    }
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for (id, base) in &family {
        let mut previous = 0.0;
        for horizon in 1..=4 {
            let instance = with_horizon(base, horizon);
            let ctx = crate::bounds::BoundContext::build(&instance, budget)?;
            let (lhs, rhs, holds) = crate::bounds::remark7_entropy_dominance_check(&ctx)?;
            if !holds {
                failures.push(format!(
                    "{id} T={horizon}: information sum {lhs} exceeds entropy cap {rhs}"
                ));
            }
            if lhs + 1e-9 < previous {
                failures.push(format!(
                    "{id} T={horizon}: information sum {lhs} decreased from {previous}"
                ));
            }
            previous = lhs;
            rows.push(SweepRow {
                instance_id: id.clone(),
                horizon,
                information_sum: lhs,
                entropy_cap: rhs,
                holds,
            });
        }
    }
    Ok(SweepOutcome { rows, failures })
}
