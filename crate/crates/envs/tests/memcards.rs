use dbgfqn_envs::{EnvError, MemoryCards, MemoryCardsConfig, PomdpEnv};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn cards(pairs: usize, max_steps: usize) -> MemoryCards {
    MemoryCards::new(MemoryCardsConfig { pairs, max_steps }).unwrap()
}

#[test]
fn widths_follow_pair_count() {
    let env = cards(5, 50);
    assert_eq!((env.obs_width(), env.action_count()), (15, 10));
}

#[test]
fn observation_is_position_and_value_one_hot() {
    let mut env = cards(3, 10);
    let obs = env.reset(4);
    assert_eq!(obs.len(), 9);
    assert_eq!(obs[..6].iter().sum::<f32>(), 1.0);
    assert_eq!(obs[6..].iter().sum::<f32>(), 1.0);
    assert_eq!(obs[env.revealed()], 1.0);
    assert_eq!(obs[6 + env.values()[env.revealed()]], 1.0);
}

#[test]
fn layout_is_a_perfect_matching() {
    let mut env = cards(5, 50);
    for seed in 0..50 {
        env.reset(seed);
        let mut counts = [0; 5];
        for v in env.values() {
            counts[*v] += 1;
        }
        assert_eq!(counts, [2; 5]);
        for p in 0..10 {
            assert_eq!(env.partner(env.partner(p)), p);
        }
    }
}

#[test]
fn correct_guess_scores_and_wrong_guess_costs() {
    let mut env = cards(5, 50);
    env.reset(1);
    let partner = env.partner(env.revealed());
    let wrong = (0..10).find(|&p| p != partner).unwrap();
    let mut e = env.clone();
    assert_eq!(e.step(partner).unwrap().reward, 1.0);
    assert!(e.solved()[partner]);
    assert!(!e.solved()[e.revealed()]);
    assert_eq!(env.step(wrong).unwrap().reward, -1.0);
}

#[test]
fn layout_oracle_wins_in_p_steps() {
    let mut env = cards(5, 50);
    for seed in 0..100 {
        env.reset(seed);
        for i in 1..=5 {
            let s = env.step(env.partner(env.revealed())).unwrap();
            assert_eq!(s.done, i == 5);
            if s.done {
                assert!(s.success);
            }
        }
        assert!(matches!(env.step(0), Err(EnvError::StepAfterDone)));
    }
}

/// Remembers every revealed card and guesses a partner once it has been seen,
/// otherwise an unseen position.
#[test]
fn memory_agent_nearly_always_wins() {
    let mut env = cards(5, 50);
    let mut wins = 0;
    for seed in 0..200 {
        let mut obs = env.reset(seed);
        let mut seen: Vec<Option<usize>> = vec![None; 10];
        loop {
            let pos = obs[..10].iter().position(|v| *v == 1.0).unwrap();
            let value = obs[10..].iter().position(|v| *v == 1.0).unwrap();
            seen[pos] = Some(value);
            let guess = (0..10)
                .find(|&p| p != pos && seen[p] == Some(value))
                .or_else(|| (0..10).find(|&p| p != pos && seen[p].is_none()))
                .unwrap();
            let s = env.step(guess).unwrap();
            if s.done {
                wins += usize::from(s.success);
                break;
            }
            obs = s.obs;
        }
    }
    assert!(wins >= 195, "{wins}/200");
}

/// Exact success probability of a uniformly random guesser, enumerating
/// every revealed card and every guess with their probabilities.
fn enumerate(pairs: usize, max_steps: usize) -> f64 {
    let cards = 2 * pairs;
    let partner = |p: usize| p ^ 1;
    fn go(solved: &mut Vec<bool>, left: usize, partner: &dyn Fn(usize) -> usize) -> f64 {
        let open: Vec<usize> = (0..solved.len()).filter(|&i| !solved[i]).collect();
        if open.is_empty() {
            return 1.0;
        }
        if left == 0 {
            return 0.0;
        }
        let mut total = 0.0;
        for &revealed in &open {
            for guess in 0..solved.len() {
                let w = 1.0 / (open.len() * solved.len()) as f64;
                if guess == partner(revealed) {
                    solved[revealed] = true;
                    solved[guess] = true;
                    total += w * go(solved, left - 1, partner);
                    solved[revealed] = false;
                    solved[guess] = false;
                } else {
                    total += w * go(solved, left - 1, partner);
                }
            }
        }
        total
    }
    go(&mut vec![false; cards], max_steps, &partner)
}

#[test]
fn random_baseline_formula_matches_enumeration() {
    for (p, t) in [(1, 1), (1, 3), (2, 2), (2, 4), (2, 5), (3, 4)] {
        let exact = enumerate(p, t);
        let closed = MemoryCardsConfig {
            pairs: p,
            max_steps: t,
        }
        .random_policy_success();
        assert!(
            (exact - closed).abs() < 1e-12,
            "P={p} T={t}: {exact} vs {closed}"
        );
    }
}

#[test]
fn random_policy_monte_carlo_matches_exact_value() {
    let (p, t) = (2, 4);
    let exact = enumerate(p, t);
    let mut env = cards(p, t);
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let episodes = 10_000;
    let mut wins = 0;
    for seed in 0..episodes {
        env.reset(seed);
        loop {
            let s = env.step(rng.gen_range(0..2 * p)).unwrap();
            if s.done {
                wins += usize::from(s.success);
                break;
            }
        }
    }
    let rate = wins as f64 / episodes as f64;
    let sigma = (exact * (1.0 - exact) / episodes as f64).sqrt();
    assert!(
        (rate - exact).abs() < 3.0 * sigma,
        "{rate} vs {exact} ± {sigma}"
    );
}

#[test]
fn timeout_fails_the_episode() {
    let mut env = cards(2, 3);
    env.reset(0);
    for i in 1..=3 {
        let wrong = (0..4).find(|&p| p != env.partner(env.revealed())).unwrap();
        let s = env.step(wrong).unwrap();
        assert_eq!(s.done, i == 3);
        assert!(!s.success);
    }
}
