//! Tabular MDPs, state abstractions, policies, and the exact belief /
//! abstract-dynamics quantities they induce.
//!
//! Everything here is dense `f64` and validated once at construction, so the
//! operations can assume well-formed inputs. All operations are pure
//! functions of their arguments; the types are immutable after construction
//! and safe to share across workers.
//!
//! Beliefs are computed by exact forward recursion. A belief conditioned on
//! `k` extra steps of abstract history is only defined when that history has
//! positive probability; querying an unreachable history is a distinct error
//! ([`MdpError::UnreachableHistory`]) rather than an arbitrary distribution.

use thiserror::Error;

pub mod text;

/// Tolerance for validating that stored probability rows sum to one.
pub const DIST_TOLERANCE: f64 = 1e-12;

/// Probability mass below which a history or conditional is treated as
/// unreachable. Masses this small cannot be distinguished from accumulated
/// dust in a forward recursion over ~50-state MDPs.
pub const REACH_CUTOFF: f64 = 1e-15;

#[derive(Debug, Error)]
pub enum MdpError {
    #[error("{what} row {index} is not a distribution (sums to {sum})")]
    NotADistribution {
        what: &'static str,
        index: usize,
        sum: f64,
    },
    #[error("{what} row {index} has negative entry {value}")]
    NegativeEntry {
        what: &'static str,
        index: usize,
        value: f64,
    },
    #[error("discount {0} must lie in [0, 1)")]
    BadDiscount(f64),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("abstract state {0} has no preimage under the mapping")]
    NotSurjective(usize),
    #[error("index {index} out of range ({what} has size {size})")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        size: usize,
    },
    #[error("timestep {t} exceeds policy horizon {horizon}")]
    HorizonExceeded { t: usize, horizon: usize },
    #[error("query history is longer than its timestep (k = {k}, t = {t})")]
    HistoryLongerThanTime { k: usize, t: usize },
    #[error("history has zero probability under this MDP and policy")]
    UnreachableHistory,
    #[error("conditional is undefined: {0}")]
    UndefinedConditional(String),
}

/// A finite MDP: dense transition and reward cubes plus a discount factor
/// and an initial state distribution.
///
/// `transition` and `reward` are indexed `[x][a][x']` (row-major). Rewards
/// are attached to transitions, i.e. `reward(x, a, x')` is the reward for
/// moving from `x` to `x'` under `a`.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularMdp {
    n_states: usize,
    n_actions: usize,
    transition: Vec<f64>,
    reward: Vec<f64>,
    discount: f64,
    initial_dist: Vec<f64>,
}

impl TabularMdp {
    pub fn new(
        n_states: usize,
        n_actions: usize,
        transition: Vec<f64>,
        reward: Vec<f64>,
        discount: f64,
        initial_dist: Vec<f64>,
    ) -> Result<Self, MdpError> {
        let cube = n_states * n_actions * n_states;
        if transition.len() != cube || reward.len() != cube {
            return Err(MdpError::DimensionMismatch(format!(
                "expected {} transition/reward entries, got {}/{}",
                cube,
                transition.len(),
                reward.len()
            )));
        }
        if initial_dist.len() != n_states {
            return Err(MdpError::DimensionMismatch(format!(
                "initial_dist has {} entries for {} states",
                initial_dist.len(),
                n_states
            )));
        }
        if !(0.0..1.0).contains(&discount) {
            return Err(MdpError::BadDiscount(discount));
        }
        for row in 0..n_states * n_actions {
            validate_distribution("transition", row, &transition[row * n_states..(row + 1) * n_states])?;
        }
        validate_distribution("initial_dist", 0, &initial_dist)?;
        Ok(Self {
            n_states,
            n_actions,
            transition,
            reward,
            discount,
            initial_dist,
        })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    pub fn initial_dist(&self) -> &[f64] {
        &self.initial_dist
    }

    /// `T(x' | a, x)`.
    pub fn transition(&self, x: usize, a: usize, x_next: usize) -> f64 {
        self.transition[(x * self.n_actions + a) * self.n_states + x_next]
    }

    /// The row `T(· | a, x)`.
    pub fn transition_row(&self, x: usize, a: usize) -> &[f64] {
        let base = (x * self.n_actions + a) * self.n_states;
        &self.transition[base..base + self.n_states]
    }

    /// `R(x', a, x)` for the transition `x --a--> x'`.
    pub fn reward(&self, x: usize, a: usize, x_next: usize) -> f64 {
        self.reward[(x * self.n_actions + a) * self.n_states + x_next]
    }

    pub fn reward_row(&self, x: usize, a: usize) -> &[f64] {
        let base = (x * self.n_actions + a) * self.n_states;
        &self.reward[base..base + self.n_states]
    }
}

fn validate_distribution(what: &'static str, index: usize, row: &[f64]) -> Result<(), MdpError> {
    let mut sum = 0.0;
    for &p in row {
        if p < 0.0 {
            return Err(MdpError::NegativeEntry {
                what,
                index,
                value: p,
            });
        }
        sum += p;
    }
    if (sum - 1.0).abs() > DIST_TOLERANCE {
        return Err(MdpError::NotADistribution { what, index, sum });
    }
    Ok(())
}

/// A surjective map from ground states onto abstract states.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Abstraction {
    mapping: Vec<usize>,
    n_abstract: usize,
    blocks: Vec<Vec<usize>>,
}

impl Abstraction {
    pub fn new(mapping: Vec<usize>, n_abstract: usize) -> Result<Self, MdpError> {
        let mut blocks = vec![Vec::new(); n_abstract];
        for (x, &z) in mapping.iter().enumerate() {
            if z >= n_abstract {
                return Err(MdpError::IndexOutOfRange {
                    what: "abstract state",
                    index: z,
                    size: n_abstract,
                });
            }
            blocks[z].push(x);
        }
        if let Some(z) = blocks.iter().position(|b| b.is_empty()) {
            return Err(MdpError::NotSurjective(z));
        }
        Ok(Self {
            mapping,
            n_abstract,
            blocks,
        })
    }

    /// The identity abstraction (every block a singleton).
    pub fn identity(n_states: usize) -> Self {
        Self {
            mapping: (0..n_states).collect(),
            n_abstract: n_states,
            blocks: (0..n_states).map(|x| vec![x]).collect(),
        }
    }

    pub fn n_ground(&self) -> usize {
        self.mapping.len()
    }

    pub fn n_abstract(&self) -> usize {
        self.n_abstract
    }

    /// `phi(x)`.
    pub fn map(&self, x: usize) -> usize {
        self.mapping[x]
    }

    pub fn mapping(&self) -> &[usize] {
        &self.mapping
    }

    /// Ground states in block `z`, in increasing order.
    pub fn block(&self, z: usize) -> &[usize] {
        &self.blocks[z]
    }
}

/// A (possibly non-stationary) stochastic policy over ground states.
///
/// A stationary policy stores one `[x][a]` slice and reuses it for every
/// timestep of its horizon; a time-varying policy stores one slice per step.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyTable {
    n_states: usize,
    n_actions: usize,
    horizon: usize,
    n_slices: usize,
    slices: Vec<f64>,
}

impl PolicyTable {
    /// Stationary policy from a single `[x][a]` slice.
    pub fn stationary(
        n_states: usize,
        n_actions: usize,
        horizon: usize,
        probs: Vec<f64>,
    ) -> Result<Self, MdpError> {
        Self::from_slices(n_states, n_actions, horizon, 1, probs)
    }

    /// Time-varying policy: `horizon` slices, each `[x][a]`.
    pub fn time_varying(
        n_states: usize,
        n_actions: usize,
        probs: Vec<f64>,
    ) -> Result<Self, MdpError> {
        let slice = n_states * n_actions;
        if slice == 0 || probs.len() % slice != 0 {
            return Err(MdpError::DimensionMismatch(format!(
                "policy data of length {} is not a multiple of {}",
                probs.len(),
                slice
            )));
        }
        let horizon = probs.len() / slice;
        Self::from_slices(n_states, n_actions, horizon, horizon, probs)
    }

    fn from_slices(
        n_states: usize,
        n_actions: usize,
        horizon: usize,
        n_slices: usize,
        slices: Vec<f64>,
    ) -> Result<Self, MdpError> {
        if slices.len() != n_slices * n_states * n_actions {
            return Err(MdpError::DimensionMismatch(format!(
                "expected {} policy entries, got {}",
                n_slices * n_states * n_actions,
                slices.len()
            )));
        }
        for row in 0..n_slices * n_states {
            validate_distribution("policy", row, &slices[row * n_actions..(row + 1) * n_actions])?;
        }
        Ok(Self {
            n_states,
            n_actions,
            horizon,
            n_slices,
            slices,
        })
    }

    /// Uniform stationary policy.
    pub fn uniform(n_states: usize, n_actions: usize, horizon: usize) -> Self {
        let p = 1.0 / n_actions as f64;
        Self {
            n_states,
            n_actions,
            horizon,
            n_slices: 1,
            slices: vec![p; n_states * n_actions],
        }
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn is_stationary(&self) -> bool {
        self.n_slices == 1
    }

    pub fn n_slices(&self) -> usize {
        self.n_slices
    }

    /// `pi_t(a | x)`. Panics if `t >= horizon`.
    pub fn prob(&self, t: usize, x: usize, a: usize) -> f64 {
        assert!(t < self.horizon, "policy queried at t={} beyond horizon {}", t, self.horizon);
        let s = if self.n_slices == 1 { 0 } else { t };
        self.slices[(s * self.n_states + x) * self.n_actions + a]
    }

    /// The `[x][a]` slice in effect at timestep `t`.
    pub fn slice(&self, t: usize) -> &[f64] {
        assert!(t < self.horizon);
        let s = if self.n_slices == 1 { 0 } else { t };
        let len = self.n_states * self.n_actions;
        &self.slices[s * len..(s + 1) * len]
    }

    pub(crate) fn raw_slices(&self) -> &[f64] {
        &self.slices
    }
}

/// A belief query: abstract state `z_now` observed at timestep `t`, plus `k`
/// extra steps of abstract history, most recent first. `history[i]` pairs
/// the action taken at time `t - 1 - i` with the abstract state occupied at
/// that same time.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BeliefQuery {
    pub t: usize,
    pub z_now: usize,
    pub history: Vec<(usize, usize)>,
}

impl BeliefQuery {
    /// History-free query (`k = 0`).
    pub fn now(t: usize, z_now: usize) -> Self {
        Self {
            t,
            z_now,
            history: Vec::new(),
        }
    }

    pub fn with_history(t: usize, z_now: usize, history: Vec<(usize, usize)>) -> Self {
        Self { t, z_now, history }
    }

    /// The number of extra history steps `k`.
    pub fn k(&self) -> usize {
        self.history.len()
    }
}

/// A violating triple returned by [`policy_in_class`]: the policy treats
/// ground states `x1` and `x2` differently at timestep `t` even though they
/// share an abstract state.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ClassViolation {
    pub t: usize,
    pub x1: usize,
    pub x2: usize,
}

fn check_dims(mdp: &TabularMdp, policy: &PolicyTable) -> Result<(), MdpError> {
    if policy.n_states() != mdp.n_states() || policy.n_actions() != mdp.n_actions() {
        return Err(MdpError::DimensionMismatch(format!(
            "policy is {}x{} but MDP is {}x{}",
            policy.n_states(),
            policy.n_actions(),
            mdp.n_states(),
            mdp.n_actions()
        )));
    }
    Ok(())
}

fn check_abstraction_dims(mdp: &TabularMdp, abstraction: &Abstraction) -> Result<(), MdpError> {
    if abstraction.n_ground() != mdp.n_states() {
        return Err(MdpError::DimensionMismatch(format!(
            "abstraction covers {} ground states but MDP has {}",
            abstraction.n_ground(),
            mdp.n_states()
        )));
    }
    Ok(())
}

/// Ground-state visitation distribution `P_t` under `policy`, computed by
/// forward recursion from the initial distribution.
pub fn state_visitation(
    mdp: &TabularMdp,
    policy: &PolicyTable,
    t: usize,
) -> Result<Vec<f64>, MdpError> {
    check_dims(mdp, policy)?;
    if t > policy.horizon() {
        return Err(MdpError::HorizonExceeded {
            t,
            horizon: policy.horizon(),
        });
    }
    let n = mdp.n_states();
    let m = mdp.n_actions();
    let mut dist = mdp.initial_dist().to_vec();
    let mut next = vec![0.0; n];
    for s in 0..t {
        next.iter_mut().for_each(|v| *v = 0.0);
        for x in 0..n {
            let px = dist[x];
            if px == 0.0 {
                continue;
            }
            for a in 0..m {
                let w = px * policy.prob(s, x, a);
                if w == 0.0 {
                    continue;
                }
                for (x_next, &tp) in mdp.transition_row(x, a).iter().enumerate() {
                    next[x_next] += w * tp;
                }
            }
        }
        std::mem::swap(&mut dist, &mut next);
    }
    Ok(dist)
}

/// Belief distribution over ground states for a query: the probability of
/// each ground state given the observed abstract state and `k` extra steps
/// of abstract history.
///
/// For `k = 0` this is the visitation mass of `z_now`'s block, normalized.
/// Longer histories apply the one-step transition recursion conditioned on
/// the recorded actions. The result is supported only on `z_now`'s block.
pub fn belief(
    mdp: &TabularMdp,
    abstraction: &Abstraction,
    policy: &PolicyTable,
    query: &BeliefQuery,
) -> Result<Vec<f64>, MdpError> {
    check_dims(mdp, policy)?;
    check_abstraction_dims(mdp, abstraction)?;
    let k = query.k();
    if k > query.t {
        return Err(MdpError::HistoryLongerThanTime { k, t: query.t });
    }
    validate_abstract_index(abstraction, query.z_now)?;
    for &(a, z) in &query.history {
        validate_action_index(mdp, a)?;
        validate_abstract_index(abstraction, z)?;
    }
    belief_rec(mdp, abstraction, policy, query.t, query.z_now, &query.history)
}

fn validate_abstract_index(abstraction: &Abstraction, z: usize) -> Result<(), MdpError> {
    if z >= abstraction.n_abstract() {
        return Err(MdpError::IndexOutOfRange {
            what: "abstract state",
            index: z,
            size: abstraction.n_abstract(),
        });
    }
    Ok(())
}

fn validate_action_index(mdp: &TabularMdp, a: usize) -> Result<(), MdpError> {
    if a >= mdp.n_actions() {
        return Err(MdpError::IndexOutOfRange {
            what: "action",
            index: a,
            size: mdp.n_actions(),
        });
    }
    Ok(())
}

fn belief_rec(
    mdp: &TabularMdp,
    abstraction: &Abstraction,
    policy: &PolicyTable,
    t: usize,
    z_now: usize,
    history: &[(usize, usize)],
) -> Result<Vec<f64>, MdpError> {
    let n = mdp.n_states();
    let mut out = vec![0.0; n];
    if history.is_empty() {
        let visits = state_visitation(mdp, policy, t)?;
        for &x in abstraction.block(z_now) {
            out[x] = visits[x];
        }
    } else {
        let (a_prev, z_prev) = history[0];
        let prev = belief_rec(mdp, abstraction, policy, t - 1, z_prev, &history[1..])?;
        for &x in abstraction.block(z_now) {
            let mut mass = 0.0;
            for &x_prev in abstraction.block(z_prev) {
                mass += mdp.transition(x_prev, a_prev, x) * prev[x_prev];
            }
            out[x] = mass;
        }
    }
    let total: f64 = out.iter().sum();
    if total < REACH_CUTOFF {
        return Err(MdpError::UnreachableHistory);
    }
    out.iter_mut().for_each(|v| *v /= total);
    Ok(out)
}

/// Belief over ground states conditioned additionally on taking `action`
/// now. For policies in the abstraction's policy class this equals the
/// plain belief; for arbitrary policies the action reweights the belief by
/// `pi_t(action | x)`.
fn action_conditioned_belief(
    mdp: &TabularMdp,
    abstraction: &Abstraction,
    policy: &PolicyTable,
    query: &BeliefQuery,
    action: usize,
) -> Result<Vec<f64>, MdpError> {
    if query.t >= policy.horizon() {
        return Err(MdpError::HorizonExceeded {
            t: query.t,
            horizon: policy.horizon(),
        });
    }
    validate_action_index(mdp, action)?;
    let mut b = belief(mdp, abstraction, policy, query)?;
    let mut total = 0.0;
    for (x, w) in b.iter_mut().enumerate() {
        *w *= policy.prob(query.t, x, action);
        total += *w;
    }
    if total < REACH_CUTOFF {
        return Err(MdpError::UndefinedConditional(format!(
            "action {} has zero probability at every believed state",
            action
        )));
    }
    b.iter_mut().for_each(|v| *v /= total);
    Ok(b)
}

/// Abstract transition probabilities for a query: the distribution over the
/// next abstract state given the query's belief and `action`. Valid for
/// arbitrary policies (the belief is reweighted by the policy's probability
/// of the action); for policies in the abstraction's class the reweighting
/// is a no-op.
pub fn abstract_transition(
    mdp: &TabularMdp,
    abstraction: &Abstraction,
    policy: &PolicyTable,
    query: &BeliefQuery,
    action: usize,
) -> Result<Vec<f64>, MdpError> {
    let weights = action_conditioned_belief(mdp, abstraction, policy, query, action)?;
    let mut out = vec![0.0; abstraction.n_abstract()];
    for &x in abstraction.block(query.z_now) {
        let w = weights[x];
        if w == 0.0 {
            continue;
        }
        for (x_next, &tp) in mdp.transition_row(x, action).iter().enumerate() {
            if tp != 0.0 {
                out[abstraction.map(x_next)] += w * tp;
            }
        }
    }
    Ok(out)
}

/// Expected abstract reward for landing in `z_next` from the query's
/// abstract state under `action`: a convex combination of the ground
/// rewards along transitions consistent with the query.
pub fn abstract_reward(
    mdp: &TabularMdp,
    abstraction: &Abstraction,
    policy: &PolicyTable,
    query: &BeliefQuery,
    action: usize,
    z_next: usize,
) -> Result<f64, MdpError> {
    validate_abstract_index(abstraction, z_next)?;
    let weights = action_conditioned_belief(mdp, abstraction, policy, query, action)?;
    let mut mass = 0.0;
    let mut value = 0.0;
    for &x in abstraction.block(query.z_now) {
        let w = weights[x];
        if w == 0.0 {
            continue;
        }
        for &x_next in abstraction.block(z_next) {
            let p = w * mdp.transition(x, action, x_next);
            if p != 0.0 {
                mass += p;
                value += p * mdp.reward(x, action, x_next);
            }
        }
    }
    if mass < REACH_CUTOFF {
        return Err(MdpError::UndefinedConditional(format!(
            "abstract state {} is unreachable from the query under action {}",
            z_next, action
        )));
    }
    Ok(value / mass)
}

/// An inverse dynamics model: for each (from, to) state pair, a distribution
/// over the actions that could have produced the transition. Pairs with zero
/// one-step probability are masked as undefined rather than erroring.
#[derive(Debug, Clone)]
pub struct InverseModel {
    n_from: usize,
    n_actions: usize,
    probs: Vec<f64>,
    defined: Vec<bool>,
}

impl InverseModel {
    pub fn n_states(&self) -> usize {
        self.n_from
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    /// `I(a | to, from)`; zero when the pair is undefined.
    pub fn prob(&self, from: usize, to: usize, a: usize) -> f64 {
        self.probs[(from * self.n_from + to) * self.n_actions + a]
    }

    /// Whether the pair (from, to) has positive one-step probability.
    pub fn is_defined(&self, from: usize, to: usize) -> bool {
        self.defined[from * self.n_from + to]
    }
}

/// Ground inverse dynamics model at timestep `t`: Bayes' rule over actions
/// given a consecutive state pair.
pub fn inverse_model(
    mdp: &TabularMdp,
    policy: &PolicyTable,
    t: usize,
) -> Result<InverseModel, MdpError> {
    check_dims(mdp, policy)?;
    if t >= policy.horizon() {
        return Err(MdpError::HorizonExceeded {
            t,
            horizon: policy.horizon(),
        });
    }
    let n = mdp.n_states();
    let m = mdp.n_actions();
    let mut probs = vec![0.0; n * n * m];
    let mut defined = vec![false; n * n];
    for x in 0..n {
        for x_next in 0..n {
            let base = (x * n + x_next) * m;
            let mut total = 0.0;
            for a in 0..m {
                let p = mdp.transition(x, a, x_next) * policy.prob(t, x, a);
                probs[base + a] = p;
                total += p;
            }
            if total > 0.0 {
                defined[x * n + x_next] = true;
                for a in 0..m {
                    probs[base + a] /= total;
                }
            } else {
                for a in 0..m {
                    probs[base + a] = 0.0;
                }
            }
        }
    }
    Ok(InverseModel {
        n_from: n,
        n_actions: m,
        probs,
        defined,
    })
}

/// Abstract inverse dynamics model at timestep `t`, built from the
/// belief-weighted one-step abstract dynamics. Abstract states with no
/// visitation mass at `t` are masked as undefined.
pub fn abstract_inverse_model(
    mdp: &TabularMdp,
    abstraction: &Abstraction,
    policy: &PolicyTable,
    t: usize,
) -> Result<InverseModel, MdpError> {
    check_dims(mdp, policy)?;
    check_abstraction_dims(mdp, abstraction)?;
    if t >= policy.horizon() {
        return Err(MdpError::HorizonExceeded {
            t,
            horizon: policy.horizon(),
        });
    }
    let n_z = abstraction.n_abstract();
    let m = mdp.n_actions();
    let visits = state_visitation(mdp, policy, t)?;
    let mut probs = vec![0.0; n_z * n_z * m];
    let mut defined = vec![false; n_z * n_z];
    for z in 0..n_z {
        let block_mass: f64 = abstraction.block(z).iter().map(|&x| visits[x]).sum();
        if block_mass < REACH_CUTOFF {
            continue;
        }
        // joint(z', a) = sum_x sum_{x' in z'} T(x'|a,x) pi_t(a|x) B_t(x|z)
        for &x in abstraction.block(z) {
            let b = visits[x] / block_mass;
            if b == 0.0 {
                continue;
            }
            for a in 0..m {
                let w = b * policy.prob(t, x, a);
                if w == 0.0 {
                    continue;
                }
                for (x_next, &tp) in mdp.transition_row(x, a).iter().enumerate() {
                    if tp != 0.0 {
                        let z_next = abstraction.map(x_next);
                        probs[(z * n_z + z_next) * m + a] += w * tp;
                    }
                }
            }
        }
        for z_next in 0..n_z {
            let base = (z * n_z + z_next) * m;
            let total: f64 = probs[base..base + m].iter().sum();
            if total > 0.0 {
                defined[z * n_z + z_next] = true;
                for a in 0..m {
                    probs[base + a] /= total;
                }
            }
        }
    }
    Ok(InverseModel {
        n_from: n_z,
        n_actions: m,
        probs,
        defined,
    })
}

/// Lift a policy over abstract states to a ground policy that treats every
/// state in a block identically. The result always passes
/// [`policy_in_class`].
pub fn lift_policy(
    abstraction: &Abstraction,
    abstract_policy: &PolicyTable,
) -> Result<PolicyTable, MdpError> {
    if abstract_policy.n_states() != abstraction.n_abstract() {
        return Err(MdpError::DimensionMismatch(format!(
            "abstract policy covers {} states but abstraction has {} blocks",
            abstract_policy.n_states(),
            abstraction.n_abstract()
        )));
    }
    let n = abstraction.n_ground();
    let m = abstract_policy.n_actions();
    let n_slices = abstract_policy.n_slices();
    let mut slices = vec![0.0; n_slices * n * m];
    for s in 0..n_slices {
        for x in 0..n {
            let z = abstraction.map(x);
            for a in 0..m {
                slices[(s * n + x) * m + a] =
                    abstract_policy.raw_slices()[(s * abstraction.n_abstract() + z) * m + a];
            }
        }
    }
    PolicyTable::from_slices(n, m, abstract_policy.horizon(), n_slices, slices)
}

/// Whether the policy lies in the abstraction's policy class: states that
/// share an abstract state must share action probabilities (within 1e-12) at
/// every timestep. Returns the first violating triple, or `None` if the
/// policy is in the class.
pub fn policy_in_class(abstraction: &Abstraction, policy: &PolicyTable) -> Option<ClassViolation> {
    let m = policy.n_actions();
    for s in 0..policy.n_slices() {
        let slice_t = if policy.is_stationary() { 0 } else { s };
        for z in 0..abstraction.n_abstract() {
            let block = abstraction.block(z);
            let first = block[0];
            for &x in &block[1..] {
                for a in 0..m {
                    let diff =
                        (policy.prob(slice_t, first, a) - policy.prob(slice_t, x, a)).abs();
                    if diff > 1e-12 {
                        return Some(ClassViolation {
                            t: slice_t,
                            x1: first,
                            x2: x,
                        });
                    }
                }
            }
        }
    }
    None
}
