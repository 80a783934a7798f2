#![allow(dead_code)]

use edge_aoi::device::{DecisionRule, DeviceState, SyncMode};
use edge_aoi::energy::{EnergyConfig, EnergyState};
use edge_aoi::nn::{init_network, Matrix, QNetwork};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn random_states(rng: &mut impl Rng, rows: usize) -> Matrix {
    let data = (0..rows)
        .flat_map(|_| [rng.gen_range(0.0..18.0), rng.gen_range(0.0..200.0), rng.gen_range(0.0..2e-4)])
        .collect();
    Matrix::from_vec(rows, 3, data)
}

/// Worst relative error between backprop and central differences of
/// L = Σ Q ⊙ W on one seeded batch, replaying the dropout masks.
pub fn fd_max_rel_error(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xF00D);
    let mut net = init_network(seed);
    // keep pre-activations off the ReLU kink
    for (g, group) in net.param_groups_mut().into_iter().enumerate() {
        if g < 2 || g % 2 == 1 {
            group.iter_mut().for_each(|x| *x += rng.gen_range(-0.5..0.5));
        }
    }
    let rows = rng.gen_range(4..12);
    let batch = random_states(&mut rng, rows);
    let upstream = Matrix::from_vec(rows, 2, (0..rows * 2).map(|_| rng.gen_range(-1.0..1.0)).collect());
    let mask_seed: u64 = rng.gen();
    let loss = |n: &QNetwork| {
        let mut n = n.clone();
        let (q, _) = n
            .forward_train(&batch, &mut ChaCha8Rng::seed_from_u64(mask_seed))
            .unwrap();
        q.as_slice().iter().zip(upstream.as_slice()).map(|(a, b)| a * b).sum::<f64>()
    };
    let (_, cache) = net
        .clone()
        .forward_train(&batch, &mut ChaCha8Rng::seed_from_u64(mask_seed))
        .unwrap();
    let grads = net.backward(&cache, &upstream).unwrap();
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for g in 0..grads.groups.len() {
        for i in 0..grads.groups[g].len() {
            let mut plus = net.clone();
            plus.param_groups_mut()[g][i] += h;
            let mut minus = net.clone();
            minus.param_groups_mut()[g][i] -= h;
            let numeric = (loss(&plus) - loss(&minus)) / (2.0 * h);
            let analytic = grads.groups[g][i];
            worst = worst.max((analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6));
        }
    }
    worst
}

/// `(reception step, generation step)` pairs, in delivery order.
pub type Events = Vec<(u64, u64)>;

pub fn random_events(rng: &mut impl Rng) -> (u64, Events) {
    let horizon = rng.gen_range(1..400u64);
    let n = rng.gen_range(0..40);
    let mut ev: Events = (0..n)
        .map(|_| {
            let at = rng.gen_range(1..=horizon);
            (at, rng.gen_range(0..=at))
        })
        .collect();
    ev.sort_by_key(|e| e.0);
    (horizon, ev)
}

pub struct BruteAoi {
    pub ages: Vec<u64>,
    pub peaks: Vec<u64>,
    pub stale: u64,
}

impl BruteAoi {
    pub fn average(&self) -> f64 {
        self.ages.iter().sum::<u64>() as f64 / self.ages.len() as f64
    }

    pub fn peak(&self) -> Option<f64> {
        (!self.peaks.is_empty()).then(|| self.peaks.iter().sum::<u64>() as f64 / self.peaks.len() as f64)
    }
}

/// Recomputes Δ(t) = t − G(t) from scratch at every step, and the age just
/// before each freshness-increasing reception.
pub fn brute_aoi(horizon: u64, events: &[(u64, u64)]) -> BruteAoi {
    let ages = (1..=horizon)
        .map(|t| {
            let g = events.iter().filter(|(at, _)| *at <= t).map(|e| e.1).max().unwrap_or(0);
            t - g
        })
        .collect();
    let mut freshest = 0;
    let mut peaks = Vec::new();
    let mut stale = 0;
    for &(at, g) in events {
        if g > freshest {
            peaks.push(at - freshest);
            freshest = g;
        } else {
            stale += 1;
        }
    }
    BruteAoi { ages, peaks, stale }
}

pub struct LedgerFuzz {
    pub bounds_ok: bool,
    pub mirror_ok: bool,
    pub residual: f64,
}

/// Random harvest/debit sequence against an independently tracked mirror.
pub fn fuzz_energy(seed: u64, steps: usize) -> LedgerFuzz {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = EnergyConfig {
        capacitance_farads: rng.gen_range(0.5..10.0),
        initial_charge_frac: rng.gen_range(0.0..=1.0),
        ..Default::default()
    };
    let cap = 0.5 * cfg.capacitance_farads * cfg.supply_voltage * cfg.supply_voltage;
    let mut state = EnergyState::new(&cfg);
    let initial = state.stored();
    let mut mirror = initial;
    let (mut harvested, mut debited) = (0.0, 0.0);
    let mut out = LedgerFuzz { bounds_ok: true, mirror_ok: true, residual: 0.0 };
    for _ in 0..steps {
        if rng.gen_bool(0.5) {
            let current = if rng.gen_bool(0.3) { 0.0 } else { rng.gen_range(0.0..3e-3) };
            state.harvest(current, &cfg);
            let next = (mirror + cfg.supply_voltage * current * cfg.step_seconds).min(cap);
            harvested += next - mirror;
            mirror = next;
        } else {
            let amount = rng.gen_range(0.0..0.5);
            let ok = state.debit(amount).is_ok();
            if ok != (mirror >= amount) {
                out.mirror_ok = false;
            }
            if ok {
                debited += amount;
                mirror -= amount;
            }
        }
        let e = state.stored();
        out.bounds_ok &= (0.0..=cap).contains(&e);
        out.mirror_ok &= e == mirror;
    }
    out.residual = initial + harvested - debited - state.stored();
    out
}

/// Device-level fuzz: random currents and transmit flags through the full
/// wake/sense/transmit path.
pub fn fuzz_device(seed: u64, steps: usize) -> (bool, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = EnergyConfig { capacitance_farads: rng.gen_range(0.5..10.0), ..Default::default() };
    let flags: Vec<bool> = (0..steps).map(|_| rng.gen_bool(0.4)).collect();
    let mut dev = DeviceState::new(cfg.clone(), init_network(seed), SyncMode::Disabled, DecisionRule::Schedule(flags));
    let cap = cfg.capacity_joules();
    let mut ok = true;
    for t in 1..=steps as u64 {
        let current = if rng.gen_bool(0.5) { 0.0 } else { rng.gen_range(0.0..2e-4) };
        dev.step(t, current, 0.0, &mut rng, None);
        ok &= (0.0..=cap).contains(&dev.energy().stored());
    }
    (ok, dev.energy().ledger_residual())
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut r = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for k in i..=j {
            r[idx[k]] = avg;
        }
        i = j + 1;
    }
    r
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    let (rx, ry) = (ranks(x), ranks(y));
    let n = rx.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}
