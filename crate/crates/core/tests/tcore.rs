use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tno_core::oracle::{dense_matvec, relative_l2};
use tno_core::rpe::FnEncoder;
use tno_core::tcore::{
    apply_decay_bias, tno_baseline, toeplitz_dense, toeplitz_matvec, DecayBias, FftWorkspace, ToeplitzKernel,
};
use tno_core::Matrix;

fn kernel_strategy(max_n: usize) -> impl Strategy<Value = (ToeplitzKernel, Vec<f64>)> {
    (1..=max_n, any::<bool>()).prop_flat_map(|(n, causal)| {
        (
            prop::collection::vec(-1.0f64..1.0, 2 * n - 1),
            prop::collection::vec(-1.0f64..1.0, n),
        )
            .prop_map(move |(v, x)| (ToeplitzKernel::new(n, v, false).unwrap(), x, causal))
            .prop_map(|(k, x, causal)| {
                let k = if causal {
                    ToeplitzKernel::from_fn(k.n(), true, |d| k.at(d)).unwrap()
                } else {
                    k
                };
                (k, x)
            })
    })
}

proptest! {
    #[test]
    fn fft_matvec_matches_dense((k, x) in kernel_strategy(96)) {
        let fast = toeplitz_matvec(&k, &x, &mut FftWorkspace::for_len(k.n())).unwrap();
        let slow = dense_matvec(&toeplitz_dense(&k).unwrap(), &x);
        let scale = 1.0 + slow.iter().map(|v| v.abs()).fold(0.0, f64::max);
        for (a, b) in fast.iter().zip(&slow) {
            prop_assert!((a - b).abs() <= 1e-12 * scale * k.n() as f64);
        }
    }

    #[test]
    fn matvec_is_linear((k, x) in kernel_strategy(64), a in -3.0f64..3.0, b in -3.0f64..3.0, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let z: Vec<f64> = (0..k.n()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut ws = FftWorkspace::for_len(k.n());
        let mix: Vec<f64> = x.iter().zip(&z).map(|(p, q)| a * p + b * q).collect();
        let lhs = toeplitz_matvec(&k, &mix, &mut ws).unwrap();
        let tx = toeplitz_matvec(&k, &x, &mut ws).unwrap();
        let tz = toeplitz_matvec(&k, &z, &mut ws).unwrap();
        for i in 0..k.n() {
            prop_assert!((lhs[i] - (a * tx[i] + b * tz[i])).abs() < 1e-11);
        }
    }

    #[test]
    fn causal_output_ignores_the_future(n in 2usize..80, cut in 0usize..80, seed in any::<u64>()) {
        let cut = cut % n;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = ToeplitzKernel::from_fn(n, true, |_| rng.random_range(-1.0..1.0)).unwrap();
        let x: Vec<f64> = (0..n).map(|i| i as f64 * 0.1 - 1.0).collect();
        let mut y = x.clone();
        for v in &mut y[cut + 1..] {
            *v += 5.0;
        }
        let mut ws = FftWorkspace::for_len(n);
        let a = toeplitz_matvec(&k, &x, &mut ws).unwrap();
        let b = toeplitz_matvec(&k, &y, &mut ws).unwrap();
        for i in 0..=cut {
            prop_assert!((a[i] - b[i]).abs() < 1e-11);
        }
    }

    #[test]
    fn decay_bias_shrinks_with_distance(lambda in 0.05f64..0.999, d in 0isize..200) {
        let bias = DecayBias::new(lambda).unwrap();
        prop_assert!(bias.factor(d + 1) < bias.factor(d));
        prop_assert_eq!(bias.factor(d), bias.factor(-d));
        prop_assert!(bias.factor(d) <= 1.0);
    }
}

#[test]
fn decay_bias_worked_values() {
    let bias = DecayBias::new(0.99).unwrap();
    assert!((bias.factor(100) - 0.366_032_341_273_229_3).abs() < 1e-12);
    let k = ToeplitzKernel::from_fn(256, false, |d| if d == -200 { -1.0 } else { 0.0 }).unwrap();
    let biased = apply_decay_bias(&k, bias);
    assert!((biased.at(-200) + 0.133_979_674_857_961_7).abs() < 1e-12);
    assert_eq!(DecayBias::none().factor(1000), 1.0);
}

#[test]
fn baseline_matches_per_channel_dense_sum() {
    let (n, d) = (40, 3);
    let enc = FnEncoder::new(d, |t: f64, out: &mut [f64]| {
        for (l, o) in out.iter_mut().enumerate() {
            *o = (0.3 * (l + 1) as f64 * t).sin() + 0.1 * l as f64;
        }
    });
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let x = Matrix::from_fn(n, d, |_, _| rng.random_range(-1.0..1.0));
    let bias = DecayBias::new(0.9).unwrap();
    let y = tno_baseline(&x, &enc, bias, &mut FftWorkspace::for_len(n)).unwrap();
    for l in 0..d {
        for i in 0..n {
            let mut want = 0.0;
            for j in 0..n {
                let delta = i as f64 - j as f64;
                let v = (0.3 * (l + 1) as f64 * delta).sin() + 0.1 * l as f64;
                want += 0.9f64.powf(delta.abs()) * v * x[(j, l)];
            }
            assert!((y[(i, l)] - want).abs() < 1e-12, "channel {l} row {i}");
        }
    }
}

#[test]
fn reused_workspace_is_stateless() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let k = ToeplitzKernel::from_fn(33, false, |_| rng.random_range(-1.0..1.0)).unwrap();
    let x: Vec<f64> = (0..33).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut ws = FftWorkspace::for_len(33);
    let first = toeplitz_matvec(&k, &x, &mut ws).unwrap();
    let _ = toeplitz_matvec(&k, &vec![1.0; 33], &mut ws).unwrap();
    let again = toeplitz_matvec(&k, &x, &mut ws).unwrap();
    assert!(relative_l2(&first, &again) == 0.0);
}
