mod common;

use common::{rel_err_vec, rigid_motion, rotation};
use histloss::codec::{encode_target, EncodeConfig};
use histloss::loss::LossConfig;
use histloss::model::{
    featurize, Architecture, EnergyHead, InputNorm, ModelState, OptimizerConfig, Params,
};
use histloss::objective::{batch_objective, predict, Prepared};
use histloss::toy::{generate_dataset, DatasetSpec, LjParams, Sample};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const MAX_ATOMS: usize = 8;
const N_SPECIES: usize = 3;

fn samples(n: usize, seed: u64) -> Vec<Sample> {
    let spec = DatasetSpec {
        seed,
        samples: n,
        ..Default::default()
    };
    generate_dataset(&spec, &LjParams::default()).unwrap()
}

fn histogram_head(k: usize) -> EnergyHead {
    EnergyHead::Histogram {
        lo: -0.05,
        hi: 0.25,
        bins: k,
        sigma_multiplier: 0.75,
        temperature: 2.0,
    }
}

fn build(
    head: EnergyHead,
    data: &[Sample],
    hidden: usize,
    seed: u64,
) -> (ModelState, Vec<Prepared>) {
    let descs: Vec<_> = data
        .iter()
        .map(|s| featurize(&s.config, MAX_ATOMS, N_SPECIES).unwrap())
        .collect();
    let arch = Architecture {
        max_atoms: MAX_ATOMS,
        n_species: N_SPECIES,
        hidden,
        energy_outputs: head.outputs(),
    };
    let norm = InputNorm::fit(&descs.iter().collect::<Vec<_>>(), arch.input_dim());
    let grid = head.grid();
    let prepared = data
        .iter()
        .zip(descs)
        .map(|(s, desc)| Prepared {
            desc,
            energy: s.per_atom_energy,
            forces: s.flat_forces(),
            target: grid.as_ref().map(|g| {
                let enc = EncodeConfig::from_multiplier(0.75, g).unwrap();
                encode_target(s.per_atom_energy, &enc, g).unwrap().probs
            }),
            stratum: s.config.dominant_species(N_SPECIES),
        })
        .collect();
    let state = ModelState::init(arch, head, norm, 0.05, seed).unwrap();
    (state, prepared)
}

/// Richardson-extrapolated central difference of the batch loss.
fn numeric_gradient(state: &ModelState, batch: &[&Prepared], cfg: &LossConfig) -> Vec<f64> {
    let mut s = state.clone();
    let loss = |s: &ModelState| batch_objective(s, batch, cfg).unwrap().loss.total;
    let h = 1e-4;
    (0..s.params.len())
        .map(|i| {
            let x = *s.params.flat_mut(i);
            let mut diff = |h: f64| {
                *s.params.flat_mut(i) = x + h;
                let p = loss(&s);
                *s.params.flat_mut(i) = x - h;
                let m = loss(&s);
                *s.params.flat_mut(i) = x;
                (p - m) / (2.0 * h)
            };
            let coarse = diff(h);
            let fine = diff(0.5 * h);
            (4.0 * fine - coarse) / 3.0
        })
        .collect()
}

fn block_errors(analytic: &Params, numeric: &[f64]) -> Vec<(&'static str, f64)> {
    let mut offset = 0;
    analytic
        .blocks()
        .iter()
        .map(|(name, block, _)| {
            let fd = &numeric[offset..offset + block.len()];
            offset += block.len();
            let diff: f64 = block
                .iter()
                .zip(fd)
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                .sqrt();
            let scale = block
                .iter()
                .map(|v| v * v)
                .sum::<f64>()
                .sqrt()
                .max(fd.iter().map(|v| v * v).sum::<f64>().sqrt())
                .max(1e-7);
            (*name, diff / scale)
        })
        .collect()
}

fn randomize_energy_head(state: &mut ModelState, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for v in state.params.energy_w.iter_mut() {
        *v = rng.gen_range(-0.3..0.3);
    }
    for v in state.params.energy_b.iter_mut() {
        *v = rng.gen_range(-0.3..0.3);
    }
}

fn check_full_gradient(head: EnergyHead, seed: u64) {
    let data = samples(5, seed);
    let (mut state, prepared) = build(head, &data, 16, seed);
    randomize_energy_head(&mut state, seed + 1);
    let batch: Vec<&Prepared> = prepared.iter().collect();
    let cfg = LossConfig::default();
    let analytic = batch_objective(&state, &batch, &cfg).unwrap().grads;
    let numeric = numeric_gradient(&state, &batch, &cfg);
    for (name, err) in block_errors(&analytic, &numeric) {
        assert!(err <= 1e-5, "block {name}: relative error {err:e}");
    }
    assert!(rel_err_vec(&analytic.to_flat(), &numeric) <= 1e-5);
}

#[test]
fn histogram_model_gradient_matches_differences() {
    check_full_gradient(histogram_head(24), 41);
}

#[test]
fn scalar_model_gradient_matches_differences() {
    check_full_gradient(
        EnergyHead::Scalar {
            mean: -0.005,
            scale: 0.02,
        },
        42,
    );
}

#[test]
fn initial_histogram_prediction_is_uniform() {
    let data = samples(20, 3);
    let k = 64;
    let (state, prepared) = build(histogram_head(k), &data, 32, 9);
    for p in &prepared {
        let pred = predict(&state, &p.desc).unwrap();
        assert!((pred.entropy.unwrap() - (k as f64).ln()).abs() < 1e-9);
        assert!((pred.energy - 0.1).abs() < 1e-12);
    }
}

#[test]
fn trunk_initialization_is_shared_across_heads() {
    let data = samples(10, 3);
    let (a, _) = build(histogram_head(128), &data, 32, 5);
    let (b, _) = build(
        EnergyHead::Scalar {
            mean: 0.0,
            scale: 1.0,
        },
        &data,
        32,
        5,
    );
    assert_eq!(a.params.trunk_hash(), b.params.trunk_hash());
    let (c, _) = build(histogram_head(128), &data, 32, 6);
    assert_ne!(a.params.trunk_hash(), c.params.trunk_hash());
}

#[test]
fn predicted_forces_are_equivariant_with_zero_net_force() {
    let data = samples(30, 12);
    let (mut state, _) = build(histogram_head(16), &data, 32, 1);
    randomize_energy_head(&mut state, 2);
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for s in &data {
        let q = [(); 4].map(|_| rng.gen_range(-1.0..1.0));
        let r = rotation(q);
        let moved = rigid_motion(&s.config, &r, [1.0, -2.0, 0.5]);
        let p0 = predict(&state, &featurize(&s.config, MAX_ATOMS, N_SPECIES).unwrap()).unwrap();
        let p1 = predict(&state, &featurize(&moved, MAX_ATOMS, N_SPECIES).unwrap()).unwrap();
        assert!((p0.energy - p1.energy).abs() < 1e-10);
        for a in 0..s.config.n_atoms() {
            for (i, row) in r.iter().enumerate() {
                let rotated: f64 = (0..3).map(|j| row[j] * p0.forces[3 * a + j]).sum();
                assert!((rotated - p1.forces[3 * a + i]).abs() < 1e-10);
            }
        }
        for k in 0..3 {
            let net: f64 = p0.forces.iter().skip(k).step_by(3).sum();
            assert!(net.abs() < 1e-12);
        }
    }
}

#[test]
fn checkpoint_round_trips_exactly() {
    let data = samples(40, 8);
    let (mut state, prepared) = build(histogram_head(32), &data, 16, 4);
    let cfg = OptimizerConfig {
        total_steps: 10,
        warmup_steps: 2,
        ..Default::default()
    };
    let batch: Vec<&Prepared> = prepared.iter().take(8).collect();
    for _ in 0..3 {
        let g = batch_objective(&state, &batch, &LossConfig::default())
            .unwrap()
            .grads;
        state.optimizer_step(&g, &cfg).unwrap();
    }
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ckpt.json");
    state.save(&path, "echo = 1\n").unwrap();
    let (back, echo) = ModelState::load(&path).unwrap();
    assert_eq!(echo, "echo = 1\n");
    assert_eq!(back.params.to_flat(), state.params.to_flat());
    assert_eq!(back.first_moment.to_flat(), state.first_moment.to_flat());
    assert_eq!(back.second_moment.to_flat(), state.second_moment.to_flat());
    assert_eq!(back.step, state.step);
    for p in &prepared {
        assert_eq!(
            predict(&back, &p.desc).unwrap(),
            predict(&state, &p.desc).unwrap()
        );
    }
    std::fs::write(&path, "{\"format\":\"other\"}").unwrap();
    assert!(ModelState::load(&path).is_err());
}
