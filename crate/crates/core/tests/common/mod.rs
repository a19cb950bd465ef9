//! Shared machinery for the theorem property suites: instance generators
//! and the per-instance verdict that every implication must survive.

use markov_abstractions::check::{
    self, builders, CheckConfig, CheckReport,
};
use markov_abstractions::mdp::{
    self, Abstraction, BeliefQuery, PolicyTable, TabularMdp,
};
use std::collections::HashMap;

/// Tolerances used by the implication suite: premises are detected slightly
/// tighter than consequents are asserted.
pub const PREMISE_TOL: f64 = 1e-9;
pub const SUITE_TOL: f64 = 1e-8;

/// A Block-MDP instance whose abstraction satisfies every condition by
/// construction. Sizes vary with the index.
pub fn block_instance(index: u64) -> (TabularMdp, Abstraction) {
    let n_latent = 2 + (index % 3) as usize;
    let n_actions = 2 + (index % 2) as usize;
    let dup = 1 + (index % 3) as usize;
    builders::build_block_mdp_with(index.wrapping_mul(2654435761).wrapping_add(17), n_latent, n_actions, dup)
}

/// A random MDP with a random (usually non-Markov) abstraction.
pub fn random_instance(index: u64) -> (TabularMdp, Abstraction) {
    let n_states = 3 + (index % 6) as usize;
    let n_actions = 2 + (index % 2) as usize;
    let n_abstract = 2 + (index % 2).min(n_states as u64 - 1) as usize;
    let seed = index.wrapping_mul(0x9E3779B97F4A7C15).wrapping_add(3);
    let mdp = builders::random_mdp(seed, n_states, n_actions);
    let abstraction = builders::random_abstraction(seed ^ 0xABCD, n_states, n_abstract.min(n_states));
    (mdp, abstraction)
}

/// The suite's check configuration: uniform plus three random lifted
/// policies, history length 3, four timesteps.
pub fn suite_config(mdp: &TabularMdp, abstraction: &Abstraction, seed: u64) -> CheckConfig {
    CheckConfig::with_policies(mdp, abstraction, seed, 3, 3, 3, SUITE_TOL)
}

pub struct InstanceVerdict {
    pub markov: CheckReport,
    pub inverse: CheckReport,
    pub ratio: CheckReport,
    pub strong: CheckReport,
    pub backward: CheckReport,
    pub forward: CheckReport,
}

pub fn run_all_checks(
    mdp: &TabularMdp,
    abstraction: &Abstraction,
    config: &CheckConfig,
) -> InstanceVerdict {
    let markov = check::check_markov_abstraction(mdp, abstraction, config).unwrap();
    let inverse = check::check_inverse_condition(mdp, abstraction, config).unwrap();
    let ratio = check::check_density_ratio_condition(mdp, abstraction, config).unwrap();
    let strong = check::check_strong_density_ratio(mdp, abstraction, config).unwrap();
    let (backward, forward) =
        check::check_kinematic_inseparability(mdp, abstraction, config).unwrap();
    InstanceVerdict {
        markov,
        inverse,
        ratio,
        strong,
        backward,
        forward,
    }
}

/// All violations of the proved implications on one instance. An empty
/// result means the instance is consistent with the theory.
pub fn theorem_violations(
    label: &str,
    mdp: &TabularMdp,
    abstraction: &Abstraction,
    config: &CheckConfig,
) -> Vec<String> {
    let mut violations = Vec::new();
    let v = run_all_checks(mdp, abstraction, config);

    // Sufficiency: both conditions imply a Markov abstraction, up to the
    // derived tolerance K * tol.
    if v.inverse.holds && v.ratio.holds {
        let derived = config.history_len as f64 * config.tolerance;
        if v.markov.max_violation > derived {
            violations.push(format!(
                "{}: inverse ({:.2e}) and ratio ({:.2e}) hold but markov violates by {:.2e}",
                label, v.inverse.max_violation, v.ratio.max_violation, v.markov.max_violation
            ));
        }
    }

    // Necessity given the inverse condition: a Markov abstraction whose
    // inverse models match must satisfy the density-ratio condition.
    if v.markov.holds && v.inverse.holds && !v.ratio.holds {
        violations.push(format!(
            "{}: markov and inverse hold but density ratio violates by {:.2e}",
            label, v.ratio.max_violation
        ));
    }

    // Strong conditions imply kinematic inseparability.
    if v.inverse.holds && v.strong.holds && !(v.backward.holds && v.forward.holds) {
        violations.push(format!(
            "{}: strong conditions hold but KI violates (backward {:.2e}, forward {:.2e})",
            label, v.backward.max_violation, v.forward.max_violation
        ));
    }

    for (p_idx, policy) in config.policy_set.iter().enumerate() {
        belief_chain_violations(label, p_idx, mdp, abstraction, policy, config, &mut violations);
    }
    violations
}

fn drop_oldest(query: &BeliefQuery) -> BeliefQuery {
    BeliefQuery::with_history(
        query.t,
        query.z_now,
        query.history[..query.history.len() - 1].to_vec(),
    )
}

/// Belief-chain lemmas for one policy:
///
/// * if the k-step beliefs equal the (k-1)-step beliefs everywhere, then
///   the k-step abstract transitions and rewards equal their (k-1)-step
///   counterparts (checked through the public operations), and
/// * the (k+1)-step beliefs equal the k-step beliefs, and
/// * any belief divergence at some depth shows up at depth one.
fn belief_chain_violations(
    label: &str,
    p_idx: usize,
    mdp: &TabularMdp,
    abstraction: &Abstraction,
    policy: &PolicyTable,
    config: &CheckConfig,
    violations: &mut Vec<String>,
) {
    let queries = check::enumerate_reachable_queries(
        mdp,
        abstraction,
        policy,
        config.history_len,
        config.t_max,
    )
    .unwrap();
    let mut beliefs: HashMap<BeliefQuery, Vec<f64>> = HashMap::with_capacity(queries.len());
    for rq in &queries {
        beliefs.insert(rq.query.clone(), rq.belief.clone());
    }
    let base_belief = |t: usize, z: usize| -> Vec<f64> {
        let visits = mdp::state_visitation(mdp, policy, t).unwrap();
        let mut out = vec![0.0; mdp.n_states()];
        let mut mass = 0.0;
        for &x in abstraction.block(z) {
            out[x] = visits[x];
            mass += visits[x];
        }
        out.iter_mut().for_each(|v| *v /= mass);
        out
    };
    let shorter = |q: &BeliefQuery| -> Vec<f64> {
        if q.k() == 1 {
            base_belief(q.t, q.z_now)
        } else {
            beliefs[&drop_oldest(q)].clone()
        }
    };

    // Premise per depth: k-step beliefs equal (k-1)-step beliefs.
    let mut step_gap = vec![0.0f64; config.history_len + 1];
    // Divergence from the history-free belief per depth.
    let mut base_gap = vec![0.0f64; config.history_len + 1];
    for rq in &queries {
        let k = rq.query.k();
        let tv = check::total_variation(&rq.belief, &shorter(&rq.query));
        step_gap[k] = step_gap[k].max(tv);
        let tv0 = check::total_variation(&rq.belief, &base_belief(rq.query.t, rq.query.z_now));
        base_gap[k] = base_gap[k].max(tv0);
    }

    // Divergence at any depth must already be visible at depth one.
    let worst = base_gap.iter().cloned().fold(0.0f64, f64::max);
    if worst > config.tolerance && base_gap[1] <= config.tolerance {
        violations.push(format!(
            "{} policy {}: belief diverges by {:.2e} at depth > 1 but only {:.2e} at depth 1",
            label, p_idx, worst, base_gap[1]
        ));
    }

    for k in 1..=config.history_len {
        if step_gap[k] > PREMISE_TOL {
            continue;
        }
        // Equal-belief premise holds at depth k: the induced transition and
        // reward models must agree between depths k and k-1 ...
        for rq in queries.iter().filter(|rq| rq.query.k() == k) {
            let short = drop_oldest(&rq.query);
            for a in 0..mdp.n_actions() {
                let long_t =
                    mdp::abstract_transition(mdp, abstraction, policy, &rq.query, a).unwrap();
                let short_t = mdp::abstract_transition(mdp, abstraction, policy, &short, a).unwrap();
                for z_next in 0..abstraction.n_abstract() {
                    let gap = (long_t[z_next] - short_t[z_next]).abs();
                    if gap > SUITE_TOL {
                        violations.push(format!(
                            "{} policy {}: transitions differ by {:.2e} at depth {} ({:?}, a={}, z'={})",
                            label, p_idx, gap, k, rq.query, a, z_next
                        ));
                    }
                    if long_t[z_next] > 1e-6 {
                        let long_r = mdp::abstract_reward(
                            mdp,
                            abstraction,
                            policy,
                            &rq.query,
                            a,
                            z_next,
                        )
                        .unwrap();
                        let short_r =
                            mdp::abstract_reward(mdp, abstraction, policy, &short, a, z_next)
                                .unwrap();
                        if (long_r - short_r).abs() > SUITE_TOL {
                            violations.push(format!(
                                "{} policy {}: rewards differ by {:.2e} at depth {}",
                                label,
                                p_idx,
                                (long_r - short_r).abs(),
                                k
                            ));
                        }
                    }
                }
            }
        }
        // ... and the premise must propagate one depth further.
        if k < config.history_len && step_gap[k + 1] > SUITE_TOL {
            violations.push(format!(
                "{} policy {}: beliefs equal at depth {} but diverge by {:.2e} at depth {}",
                label,
                p_idx,
                k,
                step_gap[k + 1],
                k + 1
            ));
        }
    }
}
