use hieroscribe_core::cnn::{softmax, weighted_cce_logits, weighted_cross_entropy};
use hieroscribe_core::metric::{contrastive_loss, cosine_contrastive, DISSIMILAR, SIMILAR};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

fn central<F: Fn(&[f64]) -> f64>(f: F, x: &[f64], i: usize) -> f64 {
    let h = 1e-6 * x[i].abs().max(1.0);
    let mut a = x.to_vec();
    let mut b = x.to_vec();
    a[i] += h;
    b[i] -= h;
    (f(&a) - f(&b)) / (2.0 * h)
}

#[test]
fn contrastive_gradient_through_cosine() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut checked = 0;
    while checked < 100 {
        let d = rng.random_range(2..10);
        let u: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let v: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let y = if rng.random_bool(0.5) { SIMILAR } else { DISSIMILAR };
        let (_, s, du, dv) = cosine_contrastive(&u, &v, y, 0.5);
        // The hinge kink at s = m has no derivative.
        if y == DISSIMILAR && (s - 0.5).abs() < 1e-3 {
            continue;
        }
        for i in 0..d {
            let fu = central(|w| cosine_contrastive(w, &v, y, 0.5).0, &u, i);
            let fv = central(|w| cosine_contrastive(&u, w, y, 0.5).0, &v, i);
            if fu.abs() > 1e-7 || du[i].abs() > 1e-7 {
                assert!(rel_err(fu, du[i]) < 1e-4, "du[{i}] {fu} vs {}", du[i]);
            }
            if fv.abs() > 1e-7 || dv[i].abs() > 1e-7 {
                assert!(rel_err(fv, dv[i]) < 1e-4, "dv[{i}] {fv} vs {}", dv[i]);
            }
        }
        checked += 1;
    }
}

#[test]
fn cce_gradient_wrt_logits() {
    let mut rng = ChaCha8Rng::seed_from_u64(78);
    for _ in 0..100 {
        let c = rng.random_range(2..8);
        let z: Vec<f64> = (0..c).map(|_| rng.random_range(-3.0..3.0)).collect();
        let label = rng.random_range(0..c);
        let w = rng.random_range(0.1..5.0);
        let (_, g) = weighted_cce_logits(&z, label, w);
        for k in 0..c {
            let fd = central(|x| weighted_cce_logits(x, label, w).0, &z, k);
            if fd.abs() > 1e-7 || g[k].abs() > 1e-7 {
                assert!(rel_err(fd, g[k]) < 1e-4);
            }
        }
    }
}

fn random_stochastic(rng: &mut ChaCha8Rng, n: usize, c: usize) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let probs = (0..n)
        .map(|_| {
            let z: Vec<f64> = (0..c).map(|_| rng.random_range(-2.0..2.0)).collect();
            softmax(&z)
        })
        .collect();
    let onehot = (0..n)
        .map(|_| {
            let k = rng.random_range(0..c);
            (0..c).map(|j| if j == k { 1.0 } else { 0.0 }).collect()
        })
        .collect();
    (probs, onehot)
}

#[test]
fn uniform_weights_equal_plain_cross_entropy() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..100 {
        let (n, c) = (rng.random_range(1..20), rng.random_range(2..6));
        let (p, y) = random_stochastic(&mut rng, n, c);
        let plain: f64 = -p
            .iter()
            .zip(&y)
            .map(|(pr, yr)| {
                let k = yr.iter().position(|&v| v == 1.0).unwrap();
                pr[k].ln()
            })
            .sum::<f64>()
            / n as f64;
        let weighted = weighted_cross_entropy(&p, &y, &vec![1.0; c]).unwrap();
        assert!((plain - weighted).abs() < 1e-9);
    }
}

proptest! {
    #[test]
    fn contrastive_nonnegative_and_zero_set(s in -1.0f64..=1.0, m in 0.0f64..1.0, dissimilar in any::<bool>()) {
        let y = if dissimilar { DISSIMILAR } else { SIMILAR };
        let l = contrastive_loss(s, y, m);
        prop_assert!(l >= 0.0);
        let zero = if dissimilar { s <= m } else { s == 1.0 };
        prop_assert_eq!(l == 0.0, zero);
    }

    #[test]
    fn cce_scales_with_weights(seed in any::<u64>(), k in 0.01f64..100.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (p, y) = random_stochastic(&mut rng, 6, 4);
        let w: Vec<f64> = (0..4).map(|_| rng.random_range(0.1..3.0)).collect();
        let wk: Vec<f64> = w.iter().map(|v| v * k).collect();
        let a = weighted_cross_entropy(&p, &y, &w).unwrap();
        let b = weighted_cross_entropy(&p, &y, &wk).unwrap();
        prop_assert!((b - k * a).abs() <= 1e-9 * b.abs().max(1.0));
        prop_assert!(a > 0.0);
    }
}
