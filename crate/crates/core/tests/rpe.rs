use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tno_core::fdom::{causal_freq_kernel, real_responses, response_kernel};
use tno_core::rpe::{
    fit_fd_causal, layer_normalize, piecewise_linearity_probe, Activation, CosInput, FitOptions, MlpRpe,
};
use tno_core::tcore::ToeplitzKernel;
use tno_core::Error;

fn net(hidden: usize, depth: usize, out: usize, act: Activation, ln: bool, seed: u64) -> MlpRpe {
    MlpRpe::with_hidden(hidden, depth, out, act, ln, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
}

/// Worst relative gap between backprop and fourth-order central differences of `upstream . net(t)`.
fn gradient_gap(net: &mut MlpRpe, t: f64, upstream: &[f64]) -> f64 {
    let step = 1e-3;
    net.forward_train(t);
    let analytic = net.backward(upstream).unwrap().flatten();
    let base = net.params();
    let mut probe = base.clone();
    let mut worst: f64 = 0.0;
    let mut eval = |p: &[f64]| -> f64 {
        net.set_params(p).unwrap();
        net.forward(t).iter().zip(upstream).map(|(a, b)| a * b).sum()
    };
    for i in 0..base.len() {
        // fourth-order central stencil
        let mut at = |k: f64| {
            probe[i] = base[i] + k * step;
            eval(&probe)
        };
        let fd = (at(-2.0) - 8.0 * at(-1.0) + 8.0 * at(1.0) - at(2.0)) / (12.0 * step);
        probe[i] = base[i];
        worst = worst.max((fd - analytic[i]).abs() / fd.abs().max(analytic[i].abs()).max(1e-8));
    }
    worst
}

fn activation() -> impl Strategy<Value = Activation> {
    prop_oneof![Just(Activation::Gelu), Just(Activation::Silu)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn backprop_matches_finite_differences(
        act in activation(),
        ln in any::<bool>(),
        hidden in 4usize..12,
        depth in 1usize..4,
        out in 1usize..4,
        t in -1.0f64..1.0,
        seed in any::<u64>(),
    ) {
        let mut n = net(hidden, depth, out, act, ln, seed);
        let upstream: Vec<f64> = (0..out).map(|k| 1.0 - 0.4 * k as f64).collect();
        prop_assert!(gradient_gap(&mut n, t, &upstream) < 1e-5);
    }

    #[test]
    fn layer_norm_ignores_scale(z in prop::collection::vec(-5.0f64..5.0, 2..40), c in 1e-3f64..1e3) {
        prop_assume!(z.iter().any(|v| (v - z[0]).abs() > 1e-3));
        let mut a = z.clone();
        let mut b: Vec<f64> = z.iter().map(|v| v * c).collect();
        layer_normalize(&mut a, 0.0);
        layer_normalize(&mut b, 0.0);
        for (p, q) in a.iter().zip(&b) {
            prop_assert!((p - q).abs() < 1e-9);
        }
        let mean: f64 = a.iter().sum::<f64>() / a.len() as f64;
        let var: f64 = a.iter().map(|v| v * v).sum::<f64>() / a.len() as f64;
        prop_assert!(mean.abs() < 1e-12 && (var - 1.0).abs() < 1e-9);
    }

    #[test]
    fn relu_nets_are_piecewise_linear(hidden in 2usize..24, depth in 1usize..4, seed in any::<u64>()) {
        let n = net(hidden, depth, 1, Activation::Relu, false, seed);
        let rep = piecewise_linearity_probe(&n, -1.0, 1.0, 4000).unwrap();
        prop_assert!(rep.passed);
    }
}

#[test]
fn smooth_nets_are_refused_by_the_probe() {
    for act in [Activation::Gelu, Activation::Silu] {
        assert!(piecewise_linearity_probe(&net(8, 2, 1, act, false, 1), -1.0, 1.0, 100).is_err());
    }
}

#[test]
fn binary_roundtrip_preserves_outputs() {
    let original = net(16, 3, 5, Activation::Silu, true, 42);
    let mut buf = Vec::new();
    original.write_to(&mut buf).unwrap();
    let restored = MlpRpe::read_from(buf.as_slice()).unwrap();
    assert_eq!(restored.params(), original.params());
    for t in [-0.9, 0.0, 0.37] {
        assert_eq!(restored.forward(t), original.forward(t));
    }
    assert!(MlpRpe::read_from(&buf[..buf.len() / 2]).is_err());
}

#[test]
fn params_roundtrip_through_set_params() {
    let mut a = net(6, 2, 2, Activation::Gelu, true, 7);
    let b = net(6, 2, 2, Activation::Gelu, true, 8);
    a.set_params(&b.params()).unwrap();
    assert_eq!(a.forward(0.5), b.forward(0.5));
    assert!(matches!(a.set_params(&[0.0; 3]), Err(Error::DimensionMismatch { .. })));
}

#[test]
fn fitting_a_nets_own_response_starts_at_zero_loss() {
    let n = 32;
    let mut model = net(16, 2, 1, Activation::Gelu, true, 3);
    let kh = &real_responses(&CosInput(&model), n).unwrap()[0];
    let target = response_kernel(&causal_freq_kernel(kh).unwrap(), true).unwrap();
    let opts = FitOptions {
        steps: 5,
        samples: 2,
        ..Default::default()
    };
    let rep = fit_fd_causal(&mut model, &[target], &opts).unwrap();
    assert!(rep.initial_loss() < 1e-24, "{}", rep.initial_loss());
}

#[test]
fn identity_fit_converges() {
    let n = 32;
    let mut model = net(32, 2, 1, Activation::Gelu, true, 4);
    let opts = FitOptions {
        steps: 3000,
        lr: 1e-2,
        samples: 2,
        seed: 1,
        target_loss: 1e-6,
    };
    let rep = fit_fd_causal(&mut model, &[ToeplitzKernel::identity(n)], &opts).unwrap();
    assert!(
        rep.final_loss() <= 1e-6,
        "loss {} after {} steps",
        rep.final_loss(),
        rep.accepted
    );
    assert!(rep.losses.windows(2).all(|w| w[1] <= w[0]));
}
