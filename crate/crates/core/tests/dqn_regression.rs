mod common;

use edge_aoi::dqn::{train_step, Action, DqnConfig, Experience, ReplayMemory};
use edge_aoi::nn::{init_network, AdamConfig, AdamState, Matrix, QNetwork};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn frozen_memory(seed: u64) -> ReplayMemory {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let states = common::random_states(&mut rng, 128);
    let mut memory = ReplayMemory::new(1000);
    for i in 0..64 {
        let s = states.row(2 * i);
        let n = states.row(2 * i + 1);
        let action = Action::from_index(rng.gen_range(0..2));
        // smooth in the state, with a different slope per action
        let reward = match action {
            Action::Wait => 0.5 * s[0] / 18.0 - 0.2,
            Action::Transmit => 0.8 - s[1] / 200.0,
        };
        memory.push(Experience {
            state: [s[0], s[1], s[2]],
            action,
            reward,
            next_state: [n[0], n[1], n[2]],
            terminal: false,
        });
    }
    memory
}

/// Infer-mode TD error against a fixed target network.
fn td_mse(policy: &QNetwork, target: &QNetwork, memory: &ReplayMemory, gamma: f64) -> f64 {
    let s = Matrix::from_rows(&memory.iter().map(|e| e.state.to_vec()).collect::<Vec<_>>());
    let n = Matrix::from_rows(&memory.iter().map(|e| e.next_state.to_vec()).collect::<Vec<_>>());
    let q = policy.predict(&s).unwrap();
    let qn = target.predict(&n).unwrap();
    memory
        .iter()
        .enumerate()
        .map(|(i, e)| {
            let y = e.reward + gamma * qn.row(i)[0].max(qn.row(i)[1]);
            (q.row(i)[e.action.index()] - y).powi(2)
        })
        .sum::<f64>()
        / memory.len() as f64
}

/// Supervised regression through the full training path: a zero-output target
/// network makes every TD target equal the reward.
#[test]
fn loss_falls_by_ninety_percent_on_frozen_experiences() {
    let ratios: Vec<f64> = (0..10)
        .map(|seed| {
            let memory = frozen_memory(seed);
            let cfg = DqnConfig::default();
            let mut policy = init_network(seed + 100);
            let mut target = init_network(seed + 200);
            let out = target.layers.len() - 1;
            target.layers[out].weights.as_mut_slice().fill(0.0);
            target.layers[out].bias.fill(0.0);
            assert_eq!(td_mse(&policy, &target, &memory, 0.0), td_mse(&policy, &target, &memory, cfg.gamma));

            let mut opt = AdamState::for_network(AdamConfig::default(), &policy);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let losses: Vec<f64> = (0..500)
                .map(|_| {
                    train_step(&mut policy, &target, &memory, &cfg, &mut opt, &mut rng)
                        .unwrap()
                        .loss()
                        .expect("memory holds a full batch")
                })
                .collect();
            let ratio = losses[499] / losses[0];
            assert!(ratio < 0.2, "seed {seed}: loss {} -> {}", losses[0], losses[499]);
            ratio
        })
        .collect();
    let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
    assert!(mean <= 0.1, "mean final/initial loss {mean:.3} over {ratios:?}");
}
