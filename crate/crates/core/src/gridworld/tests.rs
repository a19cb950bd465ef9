use super::*;
use crate::mdp::{state_visitation, PolicyTable};

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[test]
fn default_canvas_flattens_to_252() {
    let config = GridConfig::default();
    assert_eq!(config.obs_dim(), 252);
    assert_eq!(config.n_cells(), 36);
}

#[test]
fn noiseless_renders_are_deterministic_and_injective() {
    let config = GridConfig {
        noise_std: 0.0,
        ..GridConfig::default()
    };
    let mut r1 = rng(1);
    let mut r2 = rng(2);
    let a = render(&config, (3, 4), &mut r1);
    let b = render(&config, (3, 4), &mut r2);
    assert_eq!(a, b);

    // Every pair of distinct cells renders to distinct images.
    let images: Vec<Vec<f64>> = (0..config.n_cells())
        .map(|cell| render_noiseless(&config, config.cell_position(cell)))
        .collect();
    for i in 0..images.len() {
        for j in i + 1..images.len() {
            let l2: f64 = images[i]
                .iter()
                .zip(&images[j])
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            assert!(l2 > 1e-3, "cells {} and {} render too similarly", i, j);
        }
    }
}

#[test]
fn renders_peak_at_the_anchor_and_vanish_outside_truncation() {
    let config = GridConfig {
        noise_std: 0.0,
        ..GridConfig::default()
    };
    let obs = render_noiseless(&config, (0, 0));
    let max = obs.iter().cloned().fold(0.0f64, f64::max);
    assert!((max - 1.0).abs() < 1e-12);
    // A far corner pixel is outside the truncated kernel support.
    assert_eq!(obs[config.obs_dim() - 1], 0.0);
}

#[test]
fn noisy_render_mean_approaches_the_noiseless_image() {
    let config = GridConfig::default();
    let mut r = rng(7);
    let clean = render_noiseless(&config, (2, 2));
    let n = 1000usize;
    let mut mean = vec![0.0; config.obs_dim()];
    for _ in 0..n {
        let obs = render(&config, (2, 2), &mut r);
        for (m, v) in mean.iter_mut().zip(&obs) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|v| *v /= n as f64);
    let bound = 3.0 * config.noise_std / (n as f64).sqrt();
    for (i, (m, c)) in mean.iter().zip(&clean).enumerate() {
        assert!(
            (m - c).abs() <= bound,
            "pixel {}: |{} - {}| > {}",
            i,
            m,
            c,
            bound
        );
    }
}

#[test]
fn walls_self_loop() {
    let config = GridConfig::default();
    let mut r = rng(3);
    let state = GridState::reward_free((0, 0));
    let (transition, next) = step(&state, &config, UP, &mut r);
    assert_eq!(next.position, (0, 0));
    assert_eq!(transition.reward, 0.0);
    assert!(!transition.done);
    let (_, next) = step(&state, &config, LEFT, &mut r);
    assert_eq!(next.position, (0, 0));
    let (_, next) = step(&state, &config, DOWN, &mut r);
    assert_eq!(next.position, (1, 0));
}

#[test]
fn reward_free_steps_never_pay_or_terminate() {
    let config = GridConfig::default();
    let mut r = rng(5);
    let mut state = GridState::reward_free((2, 3));
    for _ in 0..50 {
        let action = r.gen_range(0..N_ACTIONS);
        let (transition, next) = step(&state, &config, action, &mut r);
        assert_eq!(transition.reward, 0.0);
        assert!(!transition.done);
        state = next;
    }
}

#[test]
fn goal_mode_pays_minus_one_and_resets_on_arrival() {
    let config = GridConfig::default();
    let mut r = rng(11);
    let state = GridState::with_goal((1, 2), (1, 3));
    let (transition, next) = step(&state, &config, RIGHT, &mut r);
    assert_eq!(transition.reward, -1.0);
    assert!(transition.done);
    assert_ne!(next.position, (1, 3), "reset lands off the goal");
    assert_eq!(next.steps_in_episode, 0);

    let (transition, next) = step(&state, &config, LEFT, &mut r);
    assert_eq!(transition.reward, -1.0);
    assert!(!transition.done);
    assert_eq!(next.position, (1, 1));
    assert_eq!(next.steps_in_episode, 1);
}

#[test]
fn collection_is_deterministic_and_covers_the_grid() {
    let config = GridConfig::default();
    assert!(collect_dataset(&config, 0, 1).is_empty());

    let (data, report) = collect_dataset_report(&config, 20_000, 42);
    assert_eq!(data.len(), 20_000);
    assert!(report.covered, "visited {} of 36 cells", report.cells_visited);

    let again = collect_dataset(&config, 20_000, 42);
    assert_eq!(data[0], again[0]);
    assert_eq!(data[19_999], again[19_999]);

    // Consecutive records share the intermediate observation.
    assert_eq!(data[0].next_obs, data[1].obs);

    // Action frequencies are uniform within three binomial sigmas.
    let mut counts = [0usize; N_ACTIONS];
    for t in &data {
        counts[t.action] += 1;
    }
    let expect = 20_000.0 / N_ACTIONS as f64;
    let sigma = (20_000.0f64 * 0.25 * 0.75).sqrt();
    for &c in &counts {
        assert!((c as f64 - expect).abs() <= 3.0 * sigma, "count {}", c);
    }
}

#[test]
fn empirical_visits_match_the_tabular_twin() {
    let config = GridConfig {
        noise_std: 0.0, // rendering noise is irrelevant to the visit counts
        ..GridConfig::default()
    };
    let (data, report) = collect_dataset_report(&config, 50_000, 9);
    let mut empirical = vec![0.0; config.n_cells()];
    for position in &report.positions {
        empirical[config.cell_index(*position)] += 1.0;
    }
    let total: f64 = empirical.iter().sum();
    empirical.iter_mut().for_each(|v| *v /= total);
    assert_eq!(data.len() + 1, report.positions.len());

    // Exact reference: average the visitation distribution of the twin MDP
    // under the uniform policy over a window of timesteps.
    let (twin, _) = tabular_twin(&config);
    let policy = PolicyTable::uniform(twin.n_states(), twin.n_actions(), 40);
    let mut reference = vec![0.0; twin.n_states()];
    for t in 0..40 {
        let visits = state_visitation(&twin, &policy, t).unwrap();
        for (r, v) in reference.iter_mut().zip(&visits) {
            *r += v / 40.0;
        }
    }
    let tv: f64 = 0.5
        * empirical
            .iter()
            .zip(&reference)
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>();
    assert!(tv < 0.05, "total variation {}", tv);
}

#[test]
fn twin_dynamics_are_deterministic_and_markov() {
    let config = GridConfig::default();
    let (twin, identity) = tabular_twin(&config);
    assert_eq!(twin.n_states(), 36);
    for x in 0..36 {
        for a in 0..N_ACTIONS {
            let row = twin.transition_row(x, a);
            assert_eq!(row.iter().filter(|&&p| p == 1.0).count(), 1);
            assert_eq!(row.iter().sum::<f64>(), 1.0);
        }
    }
    // The identity abstraction of the twin passes the Markov check.
    let cfg = crate::check::CheckConfig::with_policies(&twin, &identity, 0, 2, 2, 3, 1e-9);
    let report = crate::check::check_markov_abstraction(&twin, &identity, &cfg).unwrap();
    assert!(report.holds);
}

#[test]
fn permutations_are_bijections() {
    let config = GridConfig::default();
    let perm = permute_positions(&config, 33);
    let mut image: Vec<usize> = (0..config.n_cells()).map(|c| perm.apply_cell(c)).collect();
    image.sort_unstable();
    let expected: Vec<usize> = (0..config.n_cells()).collect();
    assert_eq!(image, expected);

    let identity = PositionPermutation::identity(config.grid_size);
    for cell in 0..config.n_cells() {
        assert_eq!(identity.apply(config.cell_position(cell)), config.cell_position(cell));
    }
}

mod dataset_io {
    use super::super::io::*;
    use super::*;

    #[test]
    fn records_round_trip_bit_exactly() {
        let config = GridConfig {
            grid_size: 3,
            obs_height: 7,
            obs_width: 6,
            ..GridConfig::default()
        };
        let data = collect_dataset(&config, 25, 4);
        let mut buf = Vec::new();
        write_records(&mut buf, &data).unwrap();
        let loaded = read_records(&mut buf.as_slice(), config.obs_dim()).unwrap();
        assert_eq!(data, loaded);
    }

    #[test]
    fn header_round_trips() {
        let config = GridConfig {
            kernel_std: 0.55,
            noise_std: 0.075,
            seed: 99,
            ..GridConfig::default()
        };
        let text = write_header(&config, 1234);
        let (parsed, n) = parse_header(&text).unwrap();
        assert_eq!(parsed, config);
        assert_eq!(n, 1234);
    }

    #[test]
    fn save_and_load_verify_the_record_count() {
        let dir = tempfile::tempdir().unwrap();
        let config = GridConfig {
            grid_size: 3,
            obs_height: 7,
            obs_width: 6,
            ..GridConfig::default()
        };
        let data = collect_dataset(&config, 10, 5);
        let path = dir.path().join("dataset.bin");
        save_dataset(&path, &config, &data).unwrap();
        let (loaded_config, loaded) = load_dataset(&path).unwrap();
        assert_eq!(loaded_config, config);
        assert_eq!(loaded, data);
    }

    #[test]
    fn truncated_streams_are_rejected() {
        let config = GridConfig {
            grid_size: 3,
            obs_height: 7,
            obs_width: 6,
            ..GridConfig::default()
        };
        let data = collect_dataset(&config, 3, 6);
        let mut buf = Vec::new();
        write_records(&mut buf, &data).unwrap();
        buf.truncate(buf.len() - 5);
        assert!(read_records(&mut buf.as_slice(), config.obs_dim()).is_err());
    }
}
