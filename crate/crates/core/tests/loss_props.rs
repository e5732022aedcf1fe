mod common;

use common::rel_err_vec;
use histloss::loss::{
    combined_loss, cross_entropy, cross_entropy_grad_logits, force_mae_grad, force_mae_loss,
    softmax_with_temperature, LossConfig,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn ce_of_logits(target: &[f64], z: &[f64], t: f64) -> f64 {
    cross_entropy(target, &softmax_with_temperature(z, t).unwrap()).unwrap()
}

fn random_distribution(rng: &mut ChaCha8Rng, k: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..k).map(|_| rng.gen_range(0.0..1.0f64).powi(3)).collect();
    let s: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / s).collect()
}

#[test]
fn cross_entropy_gradient_matches_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let h = 1e-5;
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let k = rng.gen_range(2..40);
        let t = rng.gen_range(0.5..4.0);
        let z: Vec<f64> = (0..k).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let target = random_distribution(&mut rng, k);
        let g = cross_entropy_grad_logits(&target, &z, t).unwrap();
        let mut fd = vec![0.0; k];
        for i in 0..k {
            let mut zp = z.clone();
            let mut zm = z.clone();
            zp[i] += h;
            zm[i] -= h;
            fd[i] = (ce_of_logits(&target, &zp, t) - ce_of_logits(&target, &zm, t)) / (2.0 * h);
        }
        worst = worst.max(rel_err_vec(&g, &fd));
    }
    assert!(worst <= 1e-6, "worst relative error {worst:e}");
}

#[test]
fn force_mae_gradient_matches_differences_away_from_kinks() {
    let f = [0.3, -1.0, 2.5, 0.0, 0.7, -0.2];
    let fh = [0.1, -0.5, 3.0, 0.4, 0.2, -0.9];
    let g = force_mae_grad(&f, &fh).unwrap();
    for i in 0..f.len() {
        let mut p = fh;
        let mut m = fh;
        p[i] += 1e-6;
        m[i] -= 1e-6;
        let fd = (force_mae_loss(&f, &p).unwrap() - force_mae_loss(&f, &m).unwrap()) / 2e-6;
        assert!((fd - g[i]).abs() < 1e-9);
    }
}

proptest! {
    #[test]
    fn cross_entropy_is_at_least_entropy(
        seed in any::<u64>(),
        k in 2usize..64,
        t in 0.25..5.0f64,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = random_distribution(&mut rng, k);
        let z: Vec<f64> = (0..k).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let q = softmax_with_temperature(&z, t).unwrap();
        let h = cross_entropy(&p, &p).unwrap();
        prop_assert!(cross_entropy(&p, &q).unwrap() >= h - 1e-12);
    }

    #[test]
    fn temperature_preserves_argmax(
        z in prop::collection::vec(-20.0..20.0f64, 2..50),
        t1 in 0.1..10.0f64,
        t2 in 0.1..10.0f64,
    ) {
        let argmax = |p: &[f64]| {
            p.iter().enumerate().fold(0, |b, (i, v)| if *v > p[b] { i } else { b })
        };
        let p1 = softmax_with_temperature(&z, t1).unwrap();
        let p2 = softmax_with_temperature(&z, t2).unwrap();
        prop_assert_eq!(argmax(&p1), argmax(&z));
        prop_assert_eq!(argmax(&p2), argmax(&z));
        prop_assert!((p1.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn gradient_sums_to_zero(
        seed in any::<u64>(),
        k in 2usize..64,
        t in 0.25..5.0f64,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = random_distribution(&mut rng, k);
        let z: Vec<f64> = (0..k).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let g = cross_entropy_grad_logits(&p, &z, t).unwrap();
        prop_assert!(g.iter().sum::<f64>().abs() < 1e-12);
    }

    #[test]
    fn combined_loss_is_linear(
        a in 0.0..10.0f64, b in 0.0..10.0f64,
        c in 0.0..10.0f64, d in 0.0..10.0f64,
        s in 0.0..3.0f64,
    ) {
        let cfg = LossConfig::default();
        let sum = combined_loss(a + c, b + d, &cfg);
        prop_assert!((sum - combined_loss(a, b, &cfg) - combined_loss(c, d, &cfg)).abs() < 1e-12);
        prop_assert!((combined_loss(s * a, s * b, &cfg) - s * combined_loss(a, b, &cfg)).abs() < 1e-12);
    }
}
