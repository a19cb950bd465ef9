//! Decision procedures for abstraction quality on tabular MDPs.
//!
//! Each check enumerates policies, timesteps, and (where relevant) reachable
//! abstract histories up to a configured length, and reports the worst
//! violation it finds together with a witness. A check "holds" exactly when
//! its worst violation is within tolerance. Checking is exhaustive up to the
//! configured bounds: a failure is a genuine refutation, while a pass
//! certifies the condition only over the enumerated horizon.
//!
//! Checks over distinct policies and timesteps are independent pure
//! functions; reports merge by taking the larger violation.

use crate::mdp::{
    self, Abstraction, BeliefQuery, MdpError, PolicyTable, TabularMdp, REACH_CUTOFF,
};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::fmt;
use thiserror::Error;

pub mod builders;

#[derive(Debug, Error)]
pub enum CheckError {
    #[error("invalid check configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Mdp(#[from] MdpError),
}

/// Bounds and policy set for a check run.
///
/// `history_len` truncates the universal quantifier over history lengths
/// (`k` in the Markov definition); `t_max` bounds the timesteps enumerated.
/// Every policy in `policy_set` must lie in the abstraction's policy class.
#[derive(Debug, Clone)]
pub struct CheckConfig {
    pub history_len: usize,
    pub t_max: usize,
    pub tolerance: f64,
    pub policy_set: Vec<PolicyTable>,
}

impl CheckConfig {
    /// Default bounds: `K = 3`, `t_max = 6`, tolerance `1e-9`, and a policy
    /// set of the uniform policy plus 20 random lifted policies.
    pub fn standard(mdp: &TabularMdp, abstraction: &Abstraction, seed: u64) -> Self {
        Self::with_policies(mdp, abstraction, seed, 20, 3, 6, 1e-9)
    }

    /// Like [`CheckConfig::standard`] with explicit bounds and policy count.
    pub fn with_policies(
        mdp: &TabularMdp,
        abstraction: &Abstraction,
        seed: u64,
        n_random_policies: usize,
        history_len: usize,
        t_max: usize,
        tolerance: f64,
    ) -> Self {
        let horizon = t_max + 1;
        let mut policy_set = vec![PolicyTable::uniform(
            mdp.n_states(),
            mdp.n_actions(),
            horizon,
        )];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..n_random_policies {
            let policy =
                builders::random_lifted_policy(&mut rng, abstraction, mdp.n_actions(), horizon)
                    .expect("lifted policy construction cannot fail on valid inputs");
            policy_set.push(policy);
        }
        Self {
            history_len,
            t_max,
            tolerance,
            policy_set,
        }
    }

    pub fn validate(
        &self,
        mdp: &TabularMdp,
        abstraction: &Abstraction,
    ) -> Result<(), CheckError> {
        if self.history_len < 1 {
            return Err(CheckError::Config("history_len must be at least 1".into()));
        }
        if !(self.tolerance > 0.0) {
            return Err(CheckError::Config("tolerance must be positive".into()));
        }
        if self.policy_set.is_empty() {
            return Err(CheckError::Config("policy_set is empty".into()));
        }
        for (i, policy) in self.policy_set.iter().enumerate() {
            if policy.n_states() != mdp.n_states() || policy.n_actions() != mdp.n_actions() {
                return Err(CheckError::Config(format!(
                    "policy {} has shape {}x{}, MDP is {}x{}",
                    i,
                    policy.n_states(),
                    policy.n_actions(),
                    mdp.n_states(),
                    mdp.n_actions()
                )));
            }
            if policy.horizon() < self.t_max + 1 {
                return Err(CheckError::Config(format!(
                    "policy {} has horizon {} but t_max {} requires at least {}",
                    i,
                    policy.horizon(),
                    self.t_max,
                    self.t_max + 1
                )));
            }
            if let Some(v) = mdp::policy_in_class(abstraction, policy) {
                return Err(CheckError::Config(format!(
                    "policy {} is not in the abstraction's policy class (t={}, x1={}, x2={})",
                    i, v.t, v.x1, v.x2
                )));
            }
        }
        Ok(())
    }
}

/// Where the worst violation of a check occurred.
#[derive(Debug, Clone, PartialEq)]
pub enum Witness {
    /// Belief divergence for a history query.
    Belief { policy: usize, query: BeliefQuery },
    /// Ground vs abstract inverse-model mismatch.
    Inverse {
        policy: usize,
        t: usize,
        x: usize,
        x_next: usize,
        action: usize,
    },
    /// Ground vs abstract density-ratio mismatch at (z, x').
    DensityRatio {
        policy: usize,
        t: usize,
        z: usize,
        x_next: usize,
    },
    /// Per-ground-state density-ratio mismatch at (x, x').
    StrongDensityRatio {
        policy: usize,
        t: usize,
        x: usize,
        x_next: usize,
    },
    /// Backward-dynamics mismatch between two same-block states.
    BackwardKi {
        policy: usize,
        t: usize,
        x1: usize,
        x2: usize,
        x_from: usize,
        action: usize,
    },
    /// Transition-row mismatch between two same-block states.
    ForwardKi {
        x1: usize,
        x2: usize,
        action: usize,
        x_next: usize,
    },
}

impl fmt::Display for Witness {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Witness::Belief { policy, query } => {
                write!(
                    f,
                    "policy={} t={} z={} history={:?}",
                    policy, query.t, query.z_now, query.history
                )
            }
            Witness::Inverse {
                policy,
                t,
                x,
                x_next,
                action,
            } => write!(f, "policy={} t={} x={} x'={} a={}", policy, t, x, x_next, action),
            Witness::DensityRatio { policy, t, z, x_next } => {
                write!(f, "policy={} t={} z={} x'={}", policy, t, z, x_next)
            }
            Witness::StrongDensityRatio { policy, t, x, x_next } => {
                write!(f, "policy={} t={} x={} x'={}", policy, t, x, x_next)
            }
            Witness::BackwardKi {
                policy,
                t,
                x1,
                x2,
                x_from,
                action,
            } => write!(
                f,
                "policy={} t={} x1'={} x2'={} x={} a={}",
                policy, t, x1, x2, x_from, action
            ),
            Witness::ForwardKi {
                x1,
                x2,
                action,
                x_next,
            } => write!(f, "x1'={} x2'={} a={} x''={}", x1, x2, action, x_next),
        }
    }
}

/// Outcome of a check: the worst violation found, where it occurred, and how
/// many near-zero-probability histories were pruned.
#[derive(Debug, Clone)]
pub struct CheckReport {
    pub holds: bool,
    pub max_violation: f64,
    pub tolerance: f64,
    pub witness: Option<Witness>,
    pub skipped_histories: usize,
}

impl CheckReport {
    fn new(tolerance: f64) -> Self {
        Self {
            holds: true,
            max_violation: 0.0,
            tolerance,
            witness: None,
            skipped_histories: 0,
        }
    }

    fn record(&mut self, violation: f64, witness: impl FnOnce() -> Witness) {
        if violation > self.max_violation {
            self.max_violation = violation;
            self.witness = Some(witness());
            self.holds = self.max_violation <= self.tolerance;
        }
    }

    fn finish(mut self) -> Self {
        self.holds = self.max_violation <= self.tolerance;
        self
    }

    /// Combine two reports of the same check over disjoint work, keeping the
    /// larger violation.
    pub fn merge(self, other: Self) -> Self {
        let (worse, better) = if other.max_violation > self.max_violation {
            (other, self)
        } else {
            (self, other)
        };
        Self {
            holds: worse.max_violation <= worse.tolerance,
            max_violation: worse.max_violation,
            tolerance: worse.tolerance,
            witness: worse.witness,
            skipped_histories: worse.skipped_histories + better.skipped_histories,
        }
    }
}

/// A reachable history query discovered by enumeration, with its exact
/// probability and the belief it induces.
#[derive(Debug, Clone)]
pub struct ReachableQuery {
    pub query: BeliefQuery,
    pub probability: f64,
    pub belief: Vec<f64>,
}

struct HistoryWalk<'a> {
    mdp: &'a TabularMdp,
    abstraction: &'a Abstraction,
    policy: &'a PolicyTable,
    k_max: usize,
    t_max: usize,
    visits: Vec<Vec<f64>>,
    skipped: usize,
}

impl<'a> HistoryWalk<'a> {
    fn new(
        mdp: &'a TabularMdp,
        abstraction: &'a Abstraction,
        policy: &'a PolicyTable,
        k_max: usize,
        t_max: usize,
    ) -> Result<Self, MdpError> {
        let visits = (0..=t_max)
            .map(|t| mdp::state_visitation(mdp, policy, t))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            mdp,
            abstraction,
            policy,
            k_max,
            t_max,
            visits,
            skipped: 0,
        })
    }

    /// Visit every reachable history query with `1 <= k <= k_max` and
    /// `t <= t_max`. The callback receives the query's timestep, abstract
    /// state, chronological history (oldest first, pairing each action with
    /// the abstract state it was taken from), probability, and normalized
    /// belief.
    fn walk(&mut self, mut f: impl FnMut(usize, usize, &[(usize, usize)], f64, &[f64])) {
        let n_z = self.abstraction.n_abstract();
        for t0 in 0..self.t_max {
            for z0 in 0..n_z {
                let mut weights = vec![0.0; self.mdp.n_states()];
                let mut mass = 0.0;
                for &x in self.abstraction.block(z0) {
                    weights[x] = self.visits[t0][x];
                    mass += weights[x];
                }
                if mass < REACH_CUTOFF {
                    continue;
                }
                let mut chrono = Vec::with_capacity(self.k_max);
                self.descend(t0, 0, z0, &weights, &mut chrono, &mut f);
            }
        }
    }

    fn descend(
        &mut self,
        t0: usize,
        depth: usize,
        z_cur: usize,
        weights: &[f64],
        chrono: &mut Vec<(usize, usize)>,
        f: &mut impl FnMut(usize, usize, &[(usize, usize)], f64, &[f64]),
    ) {
        let t = t0 + depth;
        if depth > 0 {
            let total: f64 = weights.iter().sum();
            let belief: Vec<f64> = weights.iter().map(|w| w / total).collect();
            f(t, z_cur, chrono, total, &belief);
        }
        if depth == self.k_max || t == self.t_max {
            return;
        }
        let n_z = self.abstraction.n_abstract();
        for a in 0..self.mdp.n_actions() {
            for z_next in 0..n_z {
                let mut next = vec![0.0; self.mdp.n_states()];
                let mut total = 0.0;
                for &x_next in self.abstraction.block(z_next) {
                    let mut mass = 0.0;
                    for &x in self.abstraction.block(z_cur) {
                        let w = weights[x];
                        if w == 0.0 {
                            continue;
                        }
                        mass += self.mdp.transition(x, a, x_next) * self.policy.prob(t, x, a) * w;
                    }
                    next[x_next] = mass;
                    total += mass;
                }
                if total == 0.0 {
                    continue;
                }
                if total < REACH_CUTOFF {
                    self.skipped += 1;
                    continue;
                }
                chrono.push((a, z_cur));
                self.descend(t0, depth + 1, z_next, &next, chrono, f);
                chrono.pop();
            }
        }
    }
}

fn query_from_chrono(t: usize, z_now: usize, chrono: &[(usize, usize)]) -> BeliefQuery {
    let history: Vec<(usize, usize)> = chrono.iter().rev().copied().collect();
    BeliefQuery::with_history(t, z_now, history)
}

/// Enumerate every reachable history query (with `1 <= k <= history_len`,
/// `t <= t_max`) for one policy, together with its probability and belief.
pub fn enumerate_reachable_queries(
    mdp: &TabularMdp,
    abstraction: &Abstraction,
    policy: &PolicyTable,
    history_len: usize,
    t_max: usize,
) -> Result<Vec<ReachableQuery>, MdpError> {
    let mut walk = HistoryWalk::new(mdp, abstraction, policy, history_len, t_max)?;
    let mut out = Vec::new();
    walk.walk(|t, z_now, chrono, probability, belief| {
        out.push(ReachableQuery {
            query: query_from_chrono(t, z_now, chrono),
            probability,
            belief: belief.to_vec(),
        });
    });
    Ok(out)
}

/// Total-variation distance between two distributions.
pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p
        .iter()
        .zip(q)
        .map(|(a, b)| (a - b).abs())
        .sum::<f64>()
}

/// Markov-abstraction check: enumerates all reachable histories up to the
/// configured length for each policy and timestep and measures the
/// total-variation distance between the history-conditioned belief and the
/// history-free belief over the same abstract state.
pub fn check_markov_abstraction(
    mdp: &TabularMdp,
    abstraction: &Abstraction,
    config: &CheckConfig,
) -> Result<CheckReport, CheckError> {
    config.validate(mdp, abstraction)?;
    let mut report = CheckReport::new(config.tolerance);
    for (p_idx, policy) in config.policy_set.iter().enumerate() {
        let mut walk =
            HistoryWalk::new(mdp, abstraction, policy, config.history_len, config.t_max)?;
        let visits = walk.visits.clone();
        let mut base = vec![0.0; mdp.n_states()];
        walk.walk(|t, z_now, chrono, _prob, belief| {
            base.iter_mut().for_each(|v| *v = 0.0);
            let mut mass = 0.0;
            for &x in abstraction.block(z_now) {
                base[x] = visits[t][x];
                mass += base[x];
            }
            // A reachable history implies visitation mass in the block.
            base.iter_mut().for_each(|v| *v /= mass);
            let tv = total_variation(belief, &base);
            report.record(tv, || Witness::Belief {
                policy: p_idx,
                query: query_from_chrono(t, z_now, chrono),
            });
        });
        report.skipped_histories += walk.skipped;
    }
    Ok(report.finish())
}

/// Inverse-model condition: the ground and abstract inverse dynamics models
/// agree on every reachable state pair and action.
pub fn check_inverse_condition(
    mdp: &TabularMdp,
    abstraction: &Abstraction,
    config: &CheckConfig,
) -> Result<CheckReport, CheckError> {
    config.validate(mdp, abstraction)?;
    let mut report = CheckReport::new(config.tolerance);
    for (p_idx, policy) in config.policy_set.iter().enumerate() {
        for t in 0..=config.t_max {
            let visits = mdp::state_visitation(mdp, policy, t)?;
            let ground = mdp::inverse_model(mdp, policy, t)?;
            let lifted = mdp::abstract_inverse_model(mdp, abstraction, policy, t)?;
            for x in 0..mdp.n_states() {
                if visits[x] < REACH_CUTOFF {
                    continue;
                }
                let z = abstraction.map(x);
                for x_next in 0..mdp.n_states() {
                    if !ground.is_defined(x, x_next) {
                        continue;
                    }
                    let z_next = abstraction.map(x_next);
                    for a in 0..mdp.n_actions() {
                        let diff =
                            (ground.prob(x, x_next, a) - lifted.prob(z, z_next, a)).abs();
                        report.record(diff, || Witness::Inverse {
                            policy: p_idx,
                            t,
                            x,
                            x_next,
                            action: a,
                        });
                    }
                }
            }
        }
    }
    Ok(report.finish())
}

/// Expected next-state distribution from each ground state under the policy
/// at timestep `t`: `P_t(x' | x) = sum_a T(x'|a,x) pi_t(a|x)`.
fn expected_next(mdp: &TabularMdp, policy: &PolicyTable, t: usize) -> Vec<f64> {
    let n = mdp.n_states();
    let mut out = vec![0.0; n * n];
    for x in 0..n {
        for a in 0..mdp.n_actions() {
            let pa = policy.prob(t, x, a);
            if pa == 0.0 {
                continue;
            }
            for (x_next, &tp) in mdp.transition_row(x, a).iter().enumerate() {
                out[x * n + x_next] += pa * tp;
            }
        }
    }
    out
}

/// Block visitation mass and normalized in-block beliefs at a timestep.
fn block_beliefs(
    abstraction: &Abstraction,
    visits: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    let n_z = abstraction.n_abstract();
    let mut mass = vec![0.0; n_z];
    let mut belief = vec![0.0; visits.len()];
    for (x, &v) in visits.iter().enumerate() {
        mass[abstraction.map(x)] += v;
    }
    for (x, &v) in visits.iter().enumerate() {
        let z = abstraction.map(x);
        if mass[z] >= REACH_CUTOFF {
            belief[x] = v / mass[z];
        }
    }
    (mass, belief)
}

/// Density-ratio condition: the abstract next-state density ratio matches
/// the belief-averaged ground ratio for every reachable abstract state and
/// next ground state. Conditionals are taken over one step `t -> t + 1`; the
/// marginals are visitation masses at `t + 1`.
pub fn check_density_ratio_condition(
    mdp: &TabularMdp,
    abstraction: &Abstraction,
    config: &CheckConfig,
) -> Result<CheckReport, CheckError> {
    config.validate(mdp, abstraction)?;
    let mut report = CheckReport::new(config.tolerance);
    for (p_idx, policy) in config.policy_set.iter().enumerate() {
        for t in 0..config.t_max {
            let ratios = step_ratios(mdp, abstraction, policy, t)?;
            for z in 0..abstraction.n_abstract() {
                if !ratios.z_reachable[z] {
                    continue;
                }
                for x_next in 0..mdp.n_states() {
                    if ratios.marg[x_next] < REACH_CUTOFF {
                        continue;
                    }
                    let ground = ratios.cond[z * mdp.n_states() + x_next] / ratios.marg[x_next];
                    let z_next = abstraction.map(x_next);
                    let abstracted = ratios.cond_z[z * abstraction.n_abstract() + z_next]
                        / ratios.marg_z[z_next];
                    let diff = (ground - abstracted).abs();
                    report.record(diff, || Witness::DensityRatio {
                        policy: p_idx,
                        t,
                        z,
                        x_next,
                    });
                }
            }
        }
    }
    Ok(report.finish())
}

/// Strong density-ratio condition: quantified per ground state rather than
/// belief-averaged.
pub fn check_strong_density_ratio(
    mdp: &TabularMdp,
    abstraction: &Abstraction,
    config: &CheckConfig,
) -> Result<CheckReport, CheckError> {
    config.validate(mdp, abstraction)?;
    let mut report = CheckReport::new(config.tolerance);
    for (p_idx, policy) in config.policy_set.iter().enumerate() {
        for t in 0..config.t_max {
            let ratios = step_ratios(mdp, abstraction, policy, t)?;
            let next = expected_next(mdp, policy, t);
            for x in 0..mdp.n_states() {
                if ratios.visits_now[x] < REACH_CUTOFF {
                    continue;
                }
                let z = abstraction.map(x);
                for x_next in 0..mdp.n_states() {
                    if ratios.marg[x_next] < REACH_CUTOFF {
                        continue;
                    }
                    let ground = next[x * mdp.n_states() + x_next] / ratios.marg[x_next];
                    let z_next = abstraction.map(x_next);
                    let abstracted = ratios.cond_z[z * abstraction.n_abstract() + z_next]
                        / ratios.marg_z[z_next];
                    let diff = (ground - abstracted).abs();
                    report.record(diff, || Witness::StrongDensityRatio {
                        policy: p_idx,
                        t,
                        x,
                        x_next,
                    });
                }
            }
        }
    }
    Ok(report.finish())
}

/// One-step conditional and marginal quantities shared by the density-ratio
/// checks (conditionals from `t`, marginals at `t + 1`).
struct StepRatios {
    visits_now: Vec<f64>,
    z_reachable: Vec<bool>,
    /// `P_t(x' | z)` indexed `[z][x']`.
    cond: Vec<f64>,
    /// `P_t(z' | z)` indexed `[z][z']`.
    cond_z: Vec<f64>,
    /// `P_{t+1}(x')`.
    marg: Vec<f64>,
    /// `P_{t+1}(z')`.
    marg_z: Vec<f64>,
}

fn step_ratios(
    mdp: &TabularMdp,
    abstraction: &Abstraction,
    policy: &PolicyTable,
    t: usize,
) -> Result<StepRatios, MdpError> {
    let n = mdp.n_states();
    let n_z = abstraction.n_abstract();
    let visits_now = mdp::state_visitation(mdp, policy, t)?;
    let marg = mdp::state_visitation(mdp, policy, t + 1)?;
    let next = expected_next(mdp, policy, t);
    let (mass, belief) = block_beliefs(abstraction, &visits_now);
    let z_reachable: Vec<bool> = mass.iter().map(|&m| m >= REACH_CUTOFF).collect();
    let mut cond = vec![0.0; n_z * n];
    for z in 0..n_z {
        if !z_reachable[z] {
            continue;
        }
        for &x in abstraction.block(z) {
            let b = belief[x];
            if b == 0.0 {
                continue;
            }
            for x_next in 0..n {
                cond[z * n + x_next] += b * next[x * n + x_next];
            }
        }
    }
    let mut cond_z = vec![0.0; n_z * n_z];
    for z in 0..n_z {
        for x_next in 0..n {
            cond_z[z * n_z + abstraction.map(x_next)] += cond[z * n + x_next];
        }
    }
    let mut marg_z = vec![0.0; n_z];
    for (x_next, &p) in marg.iter().enumerate() {
        marg_z[abstraction.map(x_next)] += p;
    }
    Ok(StepRatios {
        visits_now,
        z_reachable,
        cond,
        cond_z,
        marg,
        marg_z,
    })
}

/// Kinematic-inseparability checks. States grouped by the abstraction must
/// agree on their backward dynamics (policy- and time-dependent) and on
/// their forward transition rows (policy-independent). Returns the backward
/// and forward reports separately.
pub fn check_kinematic_inseparability(
    mdp: &TabularMdp,
    abstraction: &Abstraction,
    config: &CheckConfig,
) -> Result<(CheckReport, CheckReport), CheckError> {
    config.validate(mdp, abstraction)?;
    let n = mdp.n_states();
    let m = mdp.n_actions();

    let mut backward = CheckReport::new(config.tolerance);
    for (p_idx, policy) in config.policy_set.iter().enumerate() {
        for t in 0..config.t_max {
            let visits = mdp::state_visitation(mdp, policy, t)?;
            // joint[(x, a), x'] = T(x'|a,x) pi_t(a|x) P_t(x)
            let mut joint = vec![0.0; n * m * n];
            let mut denom = vec![0.0; n];
            for x in 0..n {
                if visits[x] == 0.0 {
                    continue;
                }
                for a in 0..m {
                    let w = visits[x] * policy.prob(t, x, a);
                    if w == 0.0 {
                        continue;
                    }
                    for (x_next, &tp) in mdp.transition_row(x, a).iter().enumerate() {
                        let v = w * tp;
                        joint[(x * m + a) * n + x_next] += v;
                        denom[x_next] += v;
                    }
                }
            }
            for z in 0..abstraction.n_abstract() {
                let block = abstraction.block(z);
                for (i, &x1) in block.iter().enumerate() {
                    if denom[x1] < REACH_CUTOFF {
                        continue;
                    }
                    for &x2 in &block[i + 1..] {
                        if denom[x2] < REACH_CUTOFF {
                            continue;
                        }
                        for x in 0..n {
                            for a in 0..m {
                                let p1 = joint[(x * m + a) * n + x1] / denom[x1];
                                let p2 = joint[(x * m + a) * n + x2] / denom[x2];
                                backward.record((p1 - p2).abs(), || Witness::BackwardKi {
                                    policy: p_idx,
                                    t,
                                    x1,
                                    x2,
                                    x_from: x,
                                    action: a,
                                });
                            }
                        }
                    }
                }
            }
        }
    }

    let mut forward = CheckReport::new(config.tolerance);
    for z in 0..abstraction.n_abstract() {
        let block = abstraction.block(z);
        for (i, &x1) in block.iter().enumerate() {
            for &x2 in &block[i + 1..] {
                for a in 0..m {
                    for x_next in 0..n {
                        let diff =
                            (mdp.transition(x1, a, x_next) - mdp.transition(x2, a, x_next)).abs();
                        forward.record(diff, || Witness::ForwardKi {
                            x1,
                            x2,
                            action: a,
                            x_next,
                        });
                    }
                }
            }
        }
    }

    Ok((backward.finish(), forward.finish()))
}
