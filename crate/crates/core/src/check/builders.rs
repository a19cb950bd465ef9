//! Builders for the reference example MDPs and randomized test instances.

use crate::mdp::{Abstraction, MdpError, PolicyTable, TabularMdp};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The four-state, two-action MDP whose aggregation of the two central
/// states is *not* a Markov abstraction, even though its inverse models
/// match.
///
/// States `x0..x3`, blocks `{x0} -> zA`, `{x1, x2} -> zB`, `{x3} -> zC`.
/// Action `a1` moves inward (`x0 -> x1`, `x3 -> x2`, self-loop at `x1`,
/// `x2`); action `a0` moves outward (`x1 -> x0`, `x2 -> x3`, self-loop at
/// `x0`, `x3`). All rewards are zero and the initial distribution is
/// uniform, which makes the visitation distribution uniform at every
/// timestep under the uniform policy.
pub fn build_fig3_mdp() -> (TabularMdp, Abstraction) {
    let n = 4;
    let m = 2;
    // a0 targets, a1 targets per state.
    let a0 = [0usize, 0, 3, 3];
    let a1 = [1usize, 1, 2, 2];
    let mut transition = vec![0.0; n * m * n];
    for x in 0..n {
        transition[(x * m) * n + a0[x]] = 1.0;
        transition[(x * m + 1) * n + a1[x]] = 1.0;
    }
    let reward = vec![0.0; n * m * n];
    let initial = vec![0.25; n];
    let mdp = TabularMdp::new(n, m, transition, reward, 0.95, initial).expect("valid by construction");
    let abstraction = Abstraction::new(vec![0, 1, 1, 2], 3).expect("valid by construction");
    (mdp, abstraction)
}

/// The variant where `a1` behaves identically everywhere: it lands on `x1`
/// or `x2` with probability one half from every state. The aggregation of
/// `{x1, x2}` is then a Markov abstraction, but not a kinematic
/// inseparability abstraction (the forward dynamics of `x1` and `x2` still
/// differ under `a0`).
pub fn build_fig6_mdp() -> (TabularMdp, Abstraction) {
    let n = 4;
    let m = 2;
    let a0 = [0usize, 0, 3, 3];
    let mut transition = vec![0.0; n * m * n];
    for x in 0..n {
        transition[(x * m) * n + a0[x]] = 1.0;
        transition[(x * m + 1) * n + 1] = 0.5;
        transition[(x * m + 1) * n + 2] = 0.5;
    }
    let reward = vec![0.0; n * m * n];
    let initial = vec![0.25; n];
    let mdp = TabularMdp::new(n, m, transition, reward, 0.95, initial).expect("valid by construction");
    let abstraction = Abstraction::new(vec![0, 1, 1, 2], 3).expect("valid by construction");
    (mdp, abstraction)
}

/// A random Block MDP: a random latent MDP over `n_latent` states whose
/// every state is duplicated `dup_factor` times. Duplicates share outgoing
/// dynamics exactly; incoming mass is split among the duplicates of the
/// target state by a random emission distribution fixed per latent state.
/// The returned abstraction groups duplicates, and satisfies the Markov,
/// inverse-model, density-ratio, and kinematic-inseparability conditions by
/// construction.
pub fn build_block_mdp(seed: u64, n_latent: usize, dup_factor: usize) -> (TabularMdp, Abstraction) {
    build_block_mdp_with(seed, n_latent, 3, dup_factor)
}

/// [`build_block_mdp`] with an explicit action count.
pub fn build_block_mdp_with(
    seed: u64,
    n_latent: usize,
    n_actions: usize,
    dup_factor: usize,
) -> (TabularMdp, Abstraction) {
    assert!(n_latent >= 2, "need at least two latent states");
    assert!(dup_factor >= 1, "need at least one duplicate per latent state");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let latent_t: Vec<Vec<f64>> = (0..n_latent * n_actions)
        .map(|_| random_distribution(&mut rng, n_latent))
        .collect();
    let latent_r: Vec<f64> = (0..n_latent * n_actions * n_latent)
        .map(|_| rng.gen_range(-1.0..1.0))
        .collect();
    // One emission split per latent state, shared by every incoming edge:
    // this is what keeps the belief over duplicates history-independent.
    let splits: Vec<Vec<f64>> = (0..n_latent)
        .map(|_| random_distribution(&mut rng, dup_factor))
        .collect();
    let latent_p0 = random_distribution(&mut rng, n_latent);

    let n = n_latent * dup_factor;
    let latent_of = |x: usize| x / dup_factor;
    let copy_of = |x: usize| x % dup_factor;
    let mut transition = vec![0.0; n * n_actions * n];
    let mut reward = vec![0.0; n * n_actions * n];
    for x in 0..n {
        let s = latent_of(x);
        for a in 0..n_actions {
            for x_next in 0..n {
                let s_next = latent_of(x_next);
                let idx = (x * n_actions + a) * n + x_next;
                transition[idx] = latent_t[s * n_actions + a][s_next] * splits[s_next][copy_of(x_next)];
                reward[idx] = latent_r[(s * n_actions + a) * n_latent + s_next];
            }
        }
    }
    let initial: Vec<f64> = (0..n)
        .map(|x| latent_p0[latent_of(x)] * splits[latent_of(x)][copy_of(x)])
        .collect();
    let mdp = TabularMdp::new(n, n_actions, transition, reward, 0.95, initial)
        .expect("valid by construction");
    let abstraction =
        Abstraction::new((0..n).map(latent_of).collect(), n_latent).expect("valid by construction");
    (mdp, abstraction)
}

/// A dense random MDP with strictly positive transition rows.
pub fn random_mdp(seed: u64, n_states: usize, n_actions: usize) -> TabularMdp {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut transition = Vec::with_capacity(n_states * n_actions * n_states);
    for _ in 0..n_states * n_actions {
        transition.extend(random_distribution(&mut rng, n_states));
    }
    let reward: Vec<f64> = (0..n_states * n_actions * n_states)
        .map(|_| rng.gen_range(-1.0..1.0))
        .collect();
    let initial = random_distribution(&mut rng, n_states);
    TabularMdp::new(n_states, n_actions, transition, reward, 0.95, initial)
        .expect("valid by construction")
}

/// A random surjective abstraction of `n_states` ground states onto
/// `n_abstract` blocks.
pub fn random_abstraction(seed: u64, n_states: usize, n_abstract: usize) -> Abstraction {
    assert!(n_abstract <= n_states);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Guarantee surjectivity by seating one state per block first.
    let mut mapping: Vec<usize> = (0..n_states)
        .map(|x| {
            if x < n_abstract {
                x
            } else {
                rng.gen_range(0..n_abstract)
            }
        })
        .collect();
    // Shuffle which ground states carry the seats.
    for i in (1..n_states).rev() {
        let j = rng.gen_range(0..=i);
        mapping.swap(i, j);
    }
    Abstraction::new(mapping, n_abstract).expect("valid by construction")
}

/// A random stationary policy over abstract states, lifted to the ground
/// MDP. Always a member of the abstraction's policy class, with every
/// action probability strictly positive.
pub fn random_lifted_policy(
    rng: &mut ChaCha8Rng,
    abstraction: &Abstraction,
    n_actions: usize,
    horizon: usize,
) -> Result<PolicyTable, MdpError> {
    let n_z = abstraction.n_abstract();
    let mut probs = Vec::with_capacity(n_z * n_actions);
    for _ in 0..n_z {
        probs.extend(random_distribution(rng, n_actions));
    }
    let abstract_policy = PolicyTable::stationary(n_z, n_actions, horizon, probs)?;
    crate::mdp::lift_policy(abstraction, &abstract_policy)
}

/// A distribution sampled uniformly from the simplex (unit-rate exponential
/// draws, normalized), which keeps every entry strictly positive.
pub fn random_distribution(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    let mut out: Vec<f64> = (0..len)
        .map(|_| {
            let u: f64 = rng.gen_range(f64::EPSILON..1.0);
            -u.ln()
        })
        .collect();
    let total: f64 = out.iter().sum();
    out.iter_mut().for_each(|v| *v /= total);
    out
}
