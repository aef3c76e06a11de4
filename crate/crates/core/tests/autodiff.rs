#[path = "support/graphs.rs"]
mod graphs;

use eit_core::autodiff::{sigmanet_spatial_grad, SigmaNet, Tape, PARAM_COUNT, SIGMA_FLOOR};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn random_graphs_match_central_differences() {
    let errors = graphs::gradient_check_suite(50, 2024);
    let worst = errors.iter().copied().fold(0.0f64, f64::max);
    println!("worst relative error over 50 graphs: {worst:e}");
    assert!(worst < 1e-5);
}

#[test]
fn tapes_are_deterministic() {
    let build = || {
        let tape = Tape::new();
        let params = tape.vars(SigmaNet::new(3).params());
        let p = [tape.var(0.3), tape.var(-0.4)];
        let y = SigmaNet::forward_tape(&params, p);
        let g = tape.grad(y, &params).unwrap();
        (tape.snapshot(), g)
    };
    let (ta, ga) = build();
    let (tb, gb) = build();
    assert_eq!(ta, tb);
    assert!(ga.iter().zip(&gb).all(|(a, b)| a.to_bits() == b.to_bits()));
}

#[test]
fn sigma_is_positive_for_random_weights_and_inputs() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut min = f64::INFINITY;
    for draw in 0..100 {
        let mut net = SigmaNet::new(draw);
        // Widen the draws beyond the initializer's range.
        let scale = rng.random_range(0.5..4.0);
        for p in net.params_mut() {
            *p = *p * scale + rng.random_range(-0.5..0.5);
        }
        let points: Vec<[f64; 2]> = (0..1000)
            .map(|_| [rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)])
            .collect();
        let (sigma, _) = net.with_spatial_grad(&points);
        min = sigma.iter().copied().fold(min, f64::min);
    }
    assert!(min >= SIGMA_FLOOR && min > 0.0, "{min}");
}

#[test]
fn spatial_gradient_matches_central_differences() {
    let net = SigmaNet::new(17);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let points: Vec<[f64; 2]> = (0..20)
        .map(|_| [rng.random_range(-0.9..0.9), rng.random_range(-0.9..0.9)])
        .collect();
    let grad = sigmanet_spatial_grad(&net, &points);
    let h = 1e-5;
    for (p, g) in points.iter().zip(&grad) {
        let fx = (net.forward([p[0] + h, p[1]]) - net.forward([p[0] - h, p[1]])) / (2.0 * h);
        let fy = (net.forward([p[0], p[1] + h]) - net.forward([p[0], p[1] - h])) / (2.0 * h);
        let err = ((g[0] - fx).powi(2) + (g[1] - fy).powi(2)).sqrt() / fx.hypot(fy).max(1e-8);
        assert!(err < 1e-4, "{p:?}: {g:?} vs [{fx}, {fy}]");
    }
}

#[test]
fn constant_net_has_zero_spatial_gradient() {
    let mut net = SigmaNet::zeros();
    net.set_output_level(2.0);
    let g = sigmanet_spatial_grad(&net, &[[0.1, 0.2], [-0.5, 0.7]]);
    assert!(g.iter().all(|v| v == &[0.0, 0.0]));
    assert!((net.forward([0.3, 0.3]) - 2.0).abs() < 1e-12);
}

#[test]
fn spatial_gradient_linear_in_final_layer() {
    // Before the positivity map, σ's pre-activation is linear in the read-out
    // weights, so doubling them doubles its spatial gradient.
    let net = SigmaNet::new(4);
    let mut doubled = net.clone();
    let n = PARAM_COUNT;
    for p in &mut doubled.params_mut()[n - 65..n - 1] {
        *p *= 2.0;
    }
    let pre = |net: &SigmaNet, p: [f64; 2]| {
        let s = net.forward(p) - SIGMA_FLOOR;
        s.exp_m1().ln()
    };
    let h = 1e-5;
    let p = [0.2, -0.1];
    for d in 0..2 {
        let (mut a, mut b) = (p, p);
        a[d] += h;
        b[d] -= h;
        let g1 = (pre(&net, a) - pre(&net, b)) / (2.0 * h);
        let g2 = (pre(&doubled, a) - pre(&doubled, b)) / (2.0 * h);
        assert!((g2 - 2.0 * g1).abs() < 1e-6 * g1.abs().max(1.0), "{g1} {g2}");
    }
}

#[test]
fn checkpoint_file_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("w.bin");
    let net = SigmaNet::new(8);
    net.save(&path).unwrap();
    let back = SigmaNet::load(&path).unwrap();
    // Checkpoints store f32.
    assert!(net.params().iter().zip(back.params()).all(|(a, b)| *b == *a as f32 as f64));
    back.save(&path).unwrap();
    assert_eq!(SigmaNet::load(&path).unwrap(), back);
    let mut bytes = std::fs::read(&path).unwrap();
    bytes[0] = b'X';
    std::fs::write(&path, &bytes).unwrap();
    assert!(SigmaNet::load(&path).is_err());
}
