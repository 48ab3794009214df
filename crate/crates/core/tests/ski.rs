use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tno_core::config::TnoConfig;
use tno_core::oracle::{banded_dense, dense_matvec, masked_ski_matvec, relative_l2};
use tno_core::ski::{
    eval_warped_rpe, inducing_kernels, interpolation_weights, inverse_time_warp, make_inducing_grid,
    observation_weights, ski_causal_scan, ski_lowrank_matvec, ski_tno, sparse_conv_matvec, Degree, ExecPath, GridSpan,
    InducingGrid, SparseFilter, WarpedRpe,
};
use tno_core::tcore::{tno_baseline, toeplitz_dense, DecayBias, FftWorkspace};
use tno_core::Matrix;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn uniform(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    (0..len).map(|_| rng.random_range(-1.0..1.0)).collect()
}

/// Weight of node `j` for query `q` from the Lagrange basis over `nodes`.
fn lagrange_basis(nodes: &[f64], j: usize, q: f64) -> f64 {
    nodes
        .iter()
        .enumerate()
        .filter(|&(m, _)| m != j)
        .map(|(_, &p)| (q - p) / (nodes[j] - p))
        .product()
}

fn hat(grid: &InducingGrid, j: usize, q: f64) -> f64 {
    (1.0 - (q - grid.points()[j]).abs() / grid.spacing()).max(0.0)
}

fn dense_weights(w: &tno_core::ski::InterpOperator) -> Matrix {
    let mut m = Matrix::zeros(w.rows(), w.cols());
    for i in 0..w.rows() {
        let (cols, vals) = w.row(i);
        for (&c, &v) in cols.iter().zip(vals) {
            m[(i, c)] += v;
        }
    }
    m
}

#[test]
fn linear_weights_are_hat_functions() {
    let grid = make_inducing_grid(50, 11).unwrap();
    let queries: Vec<f64> = (0..=500).map(|i| i as f64 * 0.1).collect();
    let w = dense_weights(&interpolation_weights(&grid, &queries, Degree::Linear).unwrap());
    for (i, &q) in queries.iter().enumerate() {
        for j in 0..grid.r() {
            assert!((w[(i, j)] - hat(&grid, j, q)).abs() < 1e-13, "q = {q}, node {j}");
        }
    }
}

#[test]
fn cubic_weights_match_the_lagrange_basis() {
    let grid = make_inducing_grid(64, 9).unwrap();
    let queries: Vec<f64> = (0..=640).map(|i| i as f64 * 0.1).collect();
    let w = interpolation_weights(&grid, &queries, Degree::Cubic).unwrap();
    for (i, &q) in queries.iter().enumerate() {
        let (cols, vals) = w.row(i);
        if cols.len() == 1 {
            // query on a node
            let p = grid.points()[cols[0]];
            assert!((q - p).abs() < 1e-9 && vals[0] == 1.0);
            continue;
        }
        assert_eq!(cols.len(), 4);
        assert!(cols.windows(2).all(|c| c[1] == c[0] + 1));
        let nodes: Vec<f64> = cols.iter().map(|&c| grid.points()[c]).collect();
        assert!(nodes[0] <= q + 1e-12 && q <= nodes[3] + 1e-12);
        for (j, &v) in vals.iter().enumerate() {
            assert!((v - lagrange_basis(&nodes, j, q)).abs() < 1e-12);
        }
    }
}

#[test]
fn cubic_interpolation_reproduces_cubics() {
    let grid = InducingGrid::uniform(-3.0, 7.0, 12).unwrap();
    let f = |x: f64| 0.5 * x * x * x - 2.0 * x * x + x - 4.0;
    let queries: Vec<f64> = (0..200).map(|i| -3.0 + i as f64 * 0.05).collect();
    let w = interpolation_weights(&grid, &queries, Degree::Cubic).unwrap();
    let values: Vec<f64> = grid.points().iter().map(|&p| f(p)).collect();
    let mut out = vec![0.0; queries.len()];
    w.apply(&values, &mut out).unwrap();
    for (q, v) in queries.iter().zip(&out) {
        assert!((v - f(*q)).abs() < 1e-9 * (1.0 + f(*q).abs()));
    }
}

proptest! {
    #[test]
    fn rows_are_partitions_of_unity(n in 8usize..300, r in 4usize..64, cubic in any::<bool>()) {
        let r = r.min(n + 1);
        let degree = if cubic { Degree::Cubic } else { Degree::Linear };
        let w = observation_weights(&make_inducing_grid(n, r).unwrap(), n, degree).unwrap();
        for i in 0..n {
            let s: f64 = w.row(i).1.iter().sum();
            prop_assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn lagrange_factor_within_h2_over_8(n in 8usize..300, r in 2usize..64) {
        let r = r.min(n + 1);
        let w = observation_weights(&make_inducing_grid(n, r).unwrap(), n, Degree::Linear).unwrap();
        let h = w.grid().spacing();
        for i in 0..n {
            prop_assert!(w.lagrange_factor(i) <= h * h / 8.0 * (1.0 + 1e-12));
        }
    }

    #[test]
    fn warp_is_odd_and_bounded(t in -400.0f64..400.0, lambda in 0.5f64..0.999) {
        let a = inverse_time_warp(t, lambda).unwrap();
        prop_assert_eq!(a, -inverse_time_warp(-t, lambda).unwrap());
        prop_assert!(a.abs() <= 1.0);
    }

    #[test]
    fn scan_matches_masked_oracle(n in 4usize..90, r in 2usize..30, cubic in any::<bool>(), seed in any::<u64>()) {
        let degree = if cubic { Degree::Cubic } else { Degree::Linear };
        let r = r.min(n + 1).max(degree.stencil());
        let mut g = rng(seed);
        let w = observation_weights(&make_inducing_grid(n, r).unwrap(), n, degree).unwrap();
        let a = Matrix::from_fn(r, r, |_, _| g.random_range(-1.0..1.0));
        let x = uniform(&mut g, n);
        let want = masked_ski_matvec(&w, &a, &x).unwrap();
        let sparse = ski_causal_scan(&w, &a, &x).unwrap();
        let dense = ski_causal_scan(&w.clone().with_exec(ExecPath::Dense), &a, &x).unwrap();
        prop_assert!(relative_l2(&sparse, &want) < 1e-11);
        prop_assert!(relative_l2(&dense, &sparse) < 1e-12);
    }
}

#[test]
fn wide_centered_filter_matches_banded_oracle() {
    let mut g = rng(3);
    let f = SparseFilter::centered(uniform(&mut g, 33)).unwrap();
    let x = uniform(&mut g, 256);
    let fast = sparse_conv_matvec(&f, &x).unwrap();
    let slow = dense_matvec(&banded_dense(&f, 256), &x);
    assert!(relative_l2(&fast, &slow) < 1e-14);
    let c = SparseFilter::causal(uniform(&mut g, 9)).unwrap();
    let fast = sparse_conv_matvec(&c, &x).unwrap();
    assert!(relative_l2(&fast, &dense_matvec(&banded_dense(&c, 256), &x)) < 1e-14);
}

#[test]
fn ski_operator_matches_dense_sum() {
    let cfg = TnoConfig {
        n: 128,
        d: 4,
        r: 32,
        m: 16,
        ..Default::default()
    };
    let mut g = rng(17);
    let rpe = WarpedRpe::random(65, cfg.d, cfg.lambda, &mut g).unwrap();
    let filters: Vec<SparseFilter> = (0..cfg.d)
        .map(|_| SparseFilter::centered(uniform(&mut g, cfg.centered_taps())).unwrap())
        .collect();
    let x = Matrix::from_fn(cfg.n, cfg.d, |_, _| g.random_range(-1.0..1.0));
    let y = ski_tno(&x, &cfg, &rpe, &filters).unwrap();

    // W from hat functions, A from the encoder at inducing-point differences
    let grid = make_inducing_grid(cfg.n, cfg.r).unwrap();
    let w = Matrix::from_fn(cfg.n, cfg.r, |i, j| hat(&grid, j, i as f64));
    for l in 0..cfg.d {
        let a = Matrix::from_fn(cfg.r, cfg.r, |p, q| {
            eval_warped_rpe(&rpe, grid.points()[p] - grid.points()[q])[l]
        });
        let t = banded_dense(&filters[l], cfg.n) + &w * a * w.transpose();
        let want = dense_matvec(&t, x.column(l).as_slice());
        let got: Vec<f64> = y.column(l).iter().copied().collect();
        assert!(relative_l2(&got, &want) < 1e-12, "channel {l}");
    }
}

#[test]
fn lowrank_matvec_matches_product() {
    let mut g = rng(23);
    let (n, r) = (200, 24);
    let grid = make_inducing_grid(n, r).unwrap();
    let w = observation_weights(&grid, n, Degree::Cubic).unwrap();
    let rpe = WarpedRpe::random(49, 1, 0.95, &mut g).unwrap();
    let a = &inducing_kernels(&rpe, &grid).unwrap()[0];
    let x = uniform(&mut g, n);
    let fast = ski_lowrank_matvec(&w, a, &x, &mut FftWorkspace::for_len(r)).unwrap();
    let wd = dense_weights(&w);
    let slow = dense_matvec(&(&wd * toeplitz_dense(a).unwrap() * wd.transpose()), &x);
    assert!(relative_l2(&fast, &slow) < 1e-12);
}

#[test]
fn full_rank_observed_grid_collapses_to_the_baseline() {
    let n = 48;
    let cfg = TnoConfig {
        n,
        d: 3,
        r: n,
        m: 1,
        span: GridSpan::Observed,
        ..Default::default()
    };
    let mut g = rng(29);
    let rpe = WarpedRpe::random(33, cfg.d, cfg.lambda, &mut g).unwrap();
    let filters: Vec<SparseFilter> = (0..cfg.d).map(|_| SparseFilter::centered(vec![0.0]).unwrap()).collect();
    let x = Matrix::from_fn(n, cfg.d, |_, _| g.random_range(-1.0..1.0));
    let ski = ski_tno(&x, &cfg, &rpe, &filters).unwrap();
    let base = tno_baseline(&x, &rpe, DecayBias::none(), &mut FftWorkspace::for_len(n)).unwrap();
    assert!(relative_l2(ski.as_slice(), base.as_slice()) < 1e-12);
}

#[test]
fn exec_paths_agree() {
    let mut g = rng(31);
    let (n, r) = (300, 40);
    let w = observation_weights(&make_inducing_grid(n, r).unwrap(), n, Degree::Cubic).unwrap();
    let dense = w.clone().with_exec(ExecPath::Dense);
    let z = uniform(&mut g, r);
    let x = uniform(&mut g, n);
    let (mut a, mut b) = (vec![0.0; n], vec![0.0; n]);
    w.apply(&z, &mut a).unwrap();
    dense.apply(&z, &mut b).unwrap();
    assert!(relative_l2(&a, &b) < 1e-12);
    let (mut a, mut b) = (vec![0.0; r], vec![0.0; r]);
    w.apply_transpose(&x, &mut a).unwrap();
    dense.apply_transpose(&x, &mut b).unwrap();
    assert!(relative_l2(&a, &b) < 1e-12);
}

#[test]
fn affine_kernel_is_interpolated_exactly() {
    // k(delta) = c0 + c1 delta is linear in both arguments, so the bilinear
    // interpolant reproduces it on any grid
    let (n, r) = (90, 13);
    let grid = make_inducing_grid(n, r).unwrap();
    let w = dense_weights(&observation_weights(&grid, n, Degree::Linear).unwrap());
    let k = |d: f64| 0.4 - 0.03 * d;
    let a = Matrix::from_fn(r, r, |p, q| k(grid.points()[p] - grid.points()[q]));
    let approx = &w * a * w.transpose();
    let exact = Matrix::from_fn(n, n, |i, j| k(i as f64 - j as f64));
    assert!((approx - exact).abs().max() < 1e-12);
}

#[test]
fn invalid_shapes_are_errors() {
    assert!(make_inducing_grid(10, 1).is_err());
    assert!(make_inducing_grid(10, 12).is_err());
    assert!(InducingGrid::for_sequence(10, 11, GridSpan::Observed).is_err());
    assert!(interpolation_weights(&make_inducing_grid(10, 3).unwrap(), &[0.0], Degree::Cubic).is_err());
    assert!(interpolation_weights(&make_inducing_grid(10, 5).unwrap(), &[10.5], Degree::Linear).is_err());
    assert!(SparseFilter::centered(vec![1.0, 2.0]).is_err());
    assert!(inverse_time_warp(1.0, 1.0).is_err());
}
