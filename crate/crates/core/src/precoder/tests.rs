use super::*;
use crate::quantize::arcsin_remainder;
use crate::sim::{draw_channel, run_link_gaussian, ChannelSet};
use crate::wl::WlVector;
use nalgebra::{Complex, DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn identity(n: usize) -> DMatrix<f64> {
    DMatrix::identity(n, n)
}

fn scenario(nt: usize, k: usize, snr: f64, rng: &mut ChaCha8Rng) -> PrecoderScenario {
    PrecoderScenario::from_snr_db(draw_channel(nt, k, rng), snr).unwrap()
}

fn gaussian(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

#[test]
fn superposition_examples() {
    let s = make_superposition(1, 1).unwrap();
    assert_eq!(s.pi(), &identity(2));
    let s = make_superposition(1, 2).unwrap();
    assert_eq!(s.tau(), &[2.0, 1.0]);
    let s = make_superposition(2, 2).unwrap();
    assert_eq!(s.pi().shape(), (4, 8));
    assert_eq!(s.pi().row(0).iter().copied().collect::<Vec<_>>(), vec![2.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
    assert_eq!(s.pi().row(3).iter().copied().collect::<Vec<_>>(), vec![0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 2.0, 1.0]);
    for col in s.pi().column_iter() {
        assert_eq!(col.iter().filter(|&&v| v != 0.0).count(), 1);
    }
    assert!(make_superposition(0, 1).is_err());
    assert!(make_superposition(1, 0).is_err());
}

#[test]
fn superimpose_examples() {
    let s = make_superposition(1, 2).unwrap();
    let v = |x: &[f64]| WlVector::from_real(DVector::from_row_slice(x)).unwrap();
    assert_eq!(superimpose(&s, &v(&[1.0, -1.0, 1.0, 1.0])).unwrap().data().as_slice(), &[1.0, 3.0]);
    assert_eq!(superimpose(&s, &v(&[-1.0, -1.0, -1.0, 1.0])).unwrap().data().as_slice(), &[-3.0, -1.0]);
    let s3 = make_superposition(1, 3).unwrap();
    assert_eq!(superimpose(&s3, &v(&[1.0, -1.0, 1.0, 1.0, 1.0, 1.0])).unwrap().data()[0], 3.0);
    assert!(superimpose(&s, &v(&[1.0, 0.5, 1.0, 1.0])).is_err());
    assert!(superimpose(&s, &v(&[1.0, 1.0])).is_err());
}

#[test]
fn superposition_alphabet_has_uniform_levels() {
    for r in 1..=3usize {
        let s = make_superposition(1, r).unwrap();
        let mut levels: Vec<i64> = (0..1u32 << r)
            .map(|pattern| {
                let streams: Vec<f64> =
                    (0..r).map(|i| if pattern >> i & 1 == 1 { 1.0 } else { -1.0 }).collect();
                let mut full = streams.clone();
                full.extend(vec![1.0; r]);
                let out = superimpose(&s, &WlVector::from_real(DVector::from_vec(full)).unwrap()).unwrap();
                out.data()[0] as i64
            })
            .collect();
        levels.sort();
        let expected: Vec<i64> = (0..1i64 << r).map(|i| 2 * i - ((1 << r) - 1)).collect();
        assert_eq!(levels, expected, "R = {r}");
        assert_eq!(s.max_level(), ((1 << r) - 1) as f64);
    }
}

#[test]
fn constant_terms_and_zero_beta() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let sc = PrecoderScenario::new(draw_channel(3, 1, &mut rng), 0.7, 2.0).unwrap();
    let pi = make_superposition(1, 2).unwrap();
    let p = gaussian(6, 4, &mut rng);
    let t = mse_terms(&p, &sc, &pi, &identity(4)).unwrap();
    assert_eq!(t.e, 10.0);
    assert!((t.d - 0.7).abs() < 1e-15);
    assert_eq!(mse_exact(&p, 0.0, &sc, &pi, &identity(4)).unwrap(), 10.0);
    assert_eq!(t.mse(0.0), 10.0);
}

#[test]
fn optimal_beta_closed_form() {
    let t = MseTerms { a: 1.0, b: 0.5, c: -1.0, d: 0.5, e: 3.0 };
    assert_eq!(t.optimal_beta().unwrap(), 0.5);
    assert_eq!(MseTerms { c: 0.0, ..t }.optimal_beta().unwrap(), 0.0);
    assert!(MseTerms { a: 0.0, b: 0.0, d: 0.0, ..t }.optimal_beta().is_err());

    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let sc = scenario(4, 2, 5.0, &mut rng);
    let pi = make_superposition(2, 2).unwrap();
    let p = gaussian(8, 8, &mut rng);
    let t = mse_terms(&p, &sc, &pi, &identity(8)).unwrap();
    let beta = optimal_beta(&p, &sc, &pi, &identity(8)).unwrap();
    assert!(t.beta_derivative(beta).abs() < 1e-10 * t.mse(beta).max(1.0));
    for _ in 0..100 {
        let other = rng.random_range(0.0..5.0 * beta.abs() + 1.0);
        assert!(t.mse(beta) <= t.mse(other) + 1e-12);
    }
}

#[test]
fn exact_mse_is_nonnegative() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..100 {
        let nt = rng.random_range(1..6);
        let k = rng.random_range(1..=nt);
        let r = rng.random_range(1..3);
        let sc = scenario(nt, k, rng.random_range(-10.0..20.0), &mut rng);
        let pi = make_superposition(k, r).unwrap();
        let n = pi.num_streams();
        let p = gaussian(2 * nt, n, &mut rng);
        let beta = rng.random_range(-2.0..2.0);
        assert!(mse_exact(&p, beta, &sc, &pi, &identity(n)).unwrap() >= 0.0);
    }
}

#[test]
fn approximation_is_exact_for_uncorrelated_antennas() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let sc = scenario(2, 2, 10.0, &mut rng);
    let pi = make_superposition(2, 1).unwrap();
    // rows with disjoint support have zero cross-correlation
    let p = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 2.0, 0.5, 3.0]));
    let beta = 0.7;
    let approx = mse_terms(&p, &sc, &pi, &identity(4)).unwrap().mse(beta);
    let exact = mse_exact(&p, beta, &sc, &pi, &identity(4)).unwrap();
    assert!((approx - exact).abs() < 1e-10);
}

#[test]
fn approximation_error_respects_remainder_bound() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut checked = 0;
    while checked < 20 {
        let sc = scenario(2, 2, 10.0, &mut rng);
        let pi = make_superposition(2, 26).unwrap();
        let streams = pi.num_streams();
        let p = gaussian(4, streams, &mut rng);
        let x = &p * p.transpose();
        let dg: Vec<f64> = (0..4).map(|i| x[(i, i)]).collect();
        let max_corr = (0..4)
            .flat_map(|i| (0..4).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| (x[(i, j)] / (dg[i] * dg[j]).sqrt()).abs())
            .fold(0.0, f64::max);
        if max_corr > 0.3 {
            continue;
        }
        checked += 1;
        let beta = 1.3;
        let w = sc.channel().data().transpose() * sc.channel().data();
        let bound: f64 = (0..4)
            .flat_map(|i| (0..4).map(move |j| (i, j)))
            .filter(|(i, j)| i != j)
            .map(|(i, j)| w[(i, j)].abs() * (dg[i] * dg[j]).sqrt())
            .sum::<f64>()
            * crate::TWO_OVER_PI
            * beta
            * beta
            * arcsin_remainder(0.3);
        let approx = mse_terms(&p, &sc, &pi, &identity(streams)).unwrap().mse(beta);
        let exact = mse_exact(&p, beta, &sc, &pi, &identity(streams)).unwrap();
        assert!((approx - exact).abs() <= bound + 1e-12, "{approx} {exact} {bound}");
    }
}

/// Central differences of the approximate MSE against the closed-form
/// gradient, norm-wise relative error.
fn fd_relative_error(p: &DMatrix<f64>, beta: f64, sc: &PrecoderScenario, pi: &Superposition) -> f64 {
    let n = pi.num_streams();
    let r_s = identity(n);
    let f = |q: &DMatrix<f64>| mse_terms(q, sc, pi, &r_s).unwrap().mse(beta);
    let analytic = mse_gradient(p, beta, sc, pi, &r_s).unwrap();
    let mut fd = DMatrix::zeros(p.nrows(), p.ncols());
    for j in 0..p.ncols() {
        for i in 0..p.nrows() {
            let h = 1e-6 * p[(i, j)].abs().max(1e-2);
            let mut plus = p.clone();
            let mut minus = p.clone();
            plus[(i, j)] += h;
            minus[(i, j)] -= h;
            fd[(i, j)] = (f(&plus) - f(&minus)) / (2.0 * h);
        }
    }
    (&fd - &analytic).norm() / analytic.norm()
}

#[test]
fn gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..20 {
        let nt = rng.random_range(2..=8);
        let k = rng.random_range(1..=nt.min(3));
        let r = rng.random_range(1..=2);
        let sc = scenario(nt, k, rng.random_range(0.0..20.0), &mut rng);
        let pi = make_superposition(k, r).unwrap();
        let p = gaussian(2 * nt, pi.num_streams(), &mut rng);
        let beta = rng.random_range(0.1..2.0);
        let err = fd_relative_error(&p, beta, &sc, &pi);
        assert!(err < 1e-5, "relative error {err}");
    }
}

#[test]
fn c_gradient_is_constant() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let sc = scenario(4, 2, 10.0, &mut rng);
    let pi = make_superposition(2, 2).unwrap();
    let expected = sc.channel().data().transpose() * pi.pi() * (-crate::SQRT_2_OVER_PI);
    for _ in 0..3 {
        let p = gaussian(8, 8, &mut rng);
        let g = mse_gradient_terms(&p, &sc, &pi, &identity(8)).unwrap();
        assert!((&g.c - &expected).abs().max() < 1e-14);
        let beta = 0.8;
        let c_part = g.combine(beta) - (&g.a + &g.b) * (beta * beta);
        assert!((c_part - &expected * (2.0 * beta)).abs().max() < 1e-12);
    }
}

#[test]
fn power_projection_examples() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let r_s = identity(3);
    let p = gaussian(4, 3, &mut rng);
    let e = p.norm_squared();
    let same = project_power(&p, &r_s, e).unwrap();
    assert!((&same - &p).abs().max() < 1e-15);
    let half = project_power(&p, &r_s, e / 4.0).unwrap();
    assert!((&half - &p * 0.5).abs().max() < 1e-15);
    let double = project_power(&p, &r_s, e * 4.0).unwrap();
    assert!((&double - &p * 2.0).abs().max() < 1e-14);
    assert!(project_power(&DMatrix::zeros(4, 3), &r_s, 1.0).is_err());
}

#[test]
fn exact_mse_matches_gaussian_simulation() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let h = WlMatrix::strictly_linear(&DMatrix::from_element(1, 1, Complex::new(1.0, 0.0)));
    let cases = [
        (h.clone(), DMatrix::identity(2, 2), 1, 1),
        (draw_channel(3, 2, &mut rng), gaussian(6, 8, &mut rng), 2, 2),
    ];
    for (channel, p, k, r) in cases {
        let sc = PrecoderScenario::new(channel.clone(), 0.5, 3.0).unwrap();
        let pi = make_superposition(k, r).unwrap();
        let p = project_power(&p, &identity(pi.num_streams()), sc.tx_energy()).unwrap();
        let beta = optimal_beta(&p, &sc, &pi, &identity(pi.num_streams())).unwrap();
        let sol = PrecoderSolution {
            power_alloc: row_powers(&p).map(f64::sqrt),
            precoder: p.clone(),
            beta,
            superposition: pi.clone(),
            structure: Structure::Wl,
            quantized: true,
            trace: AlgoTrace::default(),
        };
        let chan = ChannelSet { true_channel: channel.clone(), est_channel: channel, xi: 0.0, seed: 0 };
        let blocks: Vec<f64> =
            (0..100).map(|_| run_link_gaussian(&sol, &chan, 0.5, 10_000, &mut rng).unwrap()).collect();
        let mean = blocks.iter().sum::<f64>() / 100.0;
        let sd = (blocks.iter().map(|b| (b - mean).powi(2)).sum::<f64>() / 99.0).sqrt() / 10.0;
        let exact = mse_exact(&p, beta, &sc, &pi, &identity(pi.num_streams())).unwrap();
        assert!((mean - exact).abs() < 3.0 * sd, "simulated {mean} +- {sd}, analytic {exact}");
    }
}

fn small_problem(seed: u64) -> (PrecoderScenario, Superposition) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (scenario(8, 2, 10.0, &mut rng), make_superposition(2, 2).unwrap())
}

#[test]
fn algorithm_iterates_are_monotone_and_feasible() {
    for seed in 0..10 {
        let (sc, pi) = small_problem(seed);
        for init in [Init::RandomWl, Init::RandomSl] {
            let cfg = AlgoConfig { seed, init: init.clone(), record_iterates: true, ..AlgoConfig::default() };
            let sol = solve_txwfq_pi(&sc, &pi, &cfg).unwrap();
            let t = &sol.trace;
            assert!(t.mse.windows(2).all(|w| w[1] <= w[0]));
            assert_eq!(t.iterates.len(), t.mse.len());
            for p in &t.iterates {
                assert!((p.norm_squared() - sc.tx_energy()).abs() < 1e-8 * sc.tx_energy());
                if init == Init::RandomSl {
                    assert!(WlMatrix::from_real(p.clone()).unwrap().is_strictly_linear(1e-9));
                }
            }
            assert_eq!(sol.structure, if init == Init::RandomSl { Structure::Sl } else { Structure::Wl });
            assert_eq!(sol.power_alloc, sol.recompute_power_alloc());
            let terms = mse_terms(&sol.precoder, &sc, &pi, &identity(8)).unwrap();
            assert!(terms.beta_derivative(sol.beta).abs() < 1e-6 * terms.mse(sol.beta));
        }
    }
}

#[test]
fn converged_point_is_nearly_stationary() {
    let (sc, pi) = small_problem(20);
    let cfg = AlgoConfig { delta: 1e-9, max_iters: 20_000, ..AlgoConfig::default() };
    let sol = solve_txwfq_pi(&sc, &pi, &cfg).unwrap();
    let tangent = |p: &DMatrix<f64>, g: &DMatrix<f64>| g - p * (g.dot(p) / p.norm_squared());
    let r_s = identity(8);
    let g_end = mse_gradient(&sol.precoder, sol.beta, &sc, &pi, &r_s).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let p0 = project_power(&gaussian(16, 8, &mut rng), &r_s, sc.tx_energy()).unwrap();
    let b0 = optimal_beta(&p0, &sc, &pi, &r_s).unwrap();
    let g_start = mse_gradient(&p0, b0, &sc, &pi, &r_s).unwrap();
    let ratio = tangent(&sol.precoder, &g_end).norm() / tangent(&p0, &g_start).norm();
    assert!(ratio < 1e-2, "projected gradient ratio {ratio}");
}

#[test]
fn wl_and_sl_designs_reach_similar_mse() {
    let (sc, pi) = small_problem(30);
    let run = |init: Init| {
        let sol = solve_txwfq_pi(&sc, &pi, &AlgoConfig { init, seed: 3, ..AlgoConfig::default() }).unwrap();
        *sol.trace.mse.last().unwrap()
    };
    let (wl, sl) = (run(Init::RandomWl), run(Init::RandomSl));
    assert!((wl - sl).abs() < 0.05 * wl.max(sl), "wl {wl} sl {sl}");
}

#[test]
fn algorithm_rejects_bad_config() {
    let (sc, pi) = small_problem(1);
    assert!(solve_txwfq_pi(&sc, &pi, &AlgoConfig { gamma0: 0.0, ..AlgoConfig::default() }).is_err());
    assert!(solve_txwfq_pi(&sc, &pi, &AlgoConfig { delta: -1.0, ..AlgoConfig::default() }).is_err());
    let wrong = Init::Provided(DMatrix::zeros(3, 3));
    assert!(solve_txwfq_pi(&sc, &pi, &AlgoConfig { init: wrong, ..AlgoConfig::default() }).is_err());
}

#[test]
fn provided_init_is_used() {
    let (sc, pi) = small_problem(2);
    let first = solve_txwfq_pi(&sc, &pi, &AlgoConfig::default()).unwrap();
    let cfg = AlgoConfig { init: Init::Provided(first.precoder.clone()), ..AlgoConfig::default() };
    let again = solve_txwfq_pi(&sc, &pi, &cfg).unwrap();
    assert!(again.trace.mse[0] <= first.trace.mse[0]);
    assert!((again.trace.mse[0] - first.trace.mse.last().unwrap()).abs() < 1e-9 * again.trace.mse[0]);
}

#[test]
fn baselines_have_expected_structure() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let sc = scenario(8, 2, 10.0, &mut rng);
    let pi = make_superposition(2, 2).unwrap();
    let cfg = AlgoConfig::default();
    for kind in [PrecoderKind::Mf, PrecoderKind::Zf, PrecoderKind::TxWfqChannelRank] {
        let sol = baseline_precoder(&sc, &pi, kind, &cfg).unwrap();
        assert!(sol.quantized);
        assert!((sol.precoder.norm_squared() - sc.tx_energy()).abs() < 1e-8 * sc.tx_energy());
        assert!(WlMatrix::from_real(sol.precoder.clone()).unwrap().is_strictly_linear(1e-9), "{kind}");
        assert_eq!(sol.power_alloc, sol.recompute_power_alloc());
        // the MSE is invariant to flipping the sign of both P and beta
        assert!(sol.beta != 0.0);
        if kind != PrecoderKind::TxWfqChannelRank {
            assert!(sol.beta > 0.0, "{kind}");
        }
    }
    let txwfq = baseline_precoder(&sc, &pi, PrecoderKind::TxWfqChannelRank, &cfg).unwrap();
    let sv = txwfq.precoder.clone().singular_values();
    let rank = sv.iter().filter(|&&v| v > 1e-9 * sv.max()).count();
    assert_eq!(rank, 4);

    let unq = baseline_precoder(&sc, &pi, PrecoderKind::TxWfUnquantized, &cfg).unwrap();
    assert!(!unq.quantized);
    assert_eq!(unq.power_alloc, DVector::from_element(16, 1.0));
    assert!((unq.precoder.norm_squared() - sc.tx_energy()).abs() < 1e-8 * sc.tx_energy());
    let wide = scenario(2, 3, 10.0, &mut rng);
    let pi3 = make_superposition(3, 1).unwrap();
    assert!(baseline_precoder(&wide, &pi3, PrecoderKind::Zf, &cfg).is_err());
}

#[test]
fn unquantized_wiener_filter_tends_to_zero_forcing() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let channel = draw_channel(6, 2, &mut rng);
    let pi = make_superposition(2, 1).unwrap();
    let cfg = AlgoConfig::default();
    let dir = |snr: f64, kind| {
        let sc = PrecoderScenario::from_snr_db(channel.clone(), snr).unwrap();
        let p = baseline_precoder(&sc, &pi, kind, &cfg).unwrap().precoder;
        &p / p.norm()
    };
    let zf = dir(60.0, PrecoderKind::Zf);
    let far = (dir(0.0, PrecoderKind::TxWfUnquantized) - &zf).norm();
    let near = (dir(60.0, PrecoderKind::TxWfUnquantized) - &zf).norm();
    assert!(near < 1e-4 && near < far, "near {near} far {far}");
}

#[test]
fn unquantized_beta_minimizes_the_linear_mse() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let sc = scenario(6, 2, 5.0, &mut rng);
    let pi = make_superposition(2, 2).unwrap();
    let sol = baseline_precoder(&sc, &pi, PrecoderKind::TxWfUnquantized, &AlgoConfig::default()).unwrap();
    let h = sc.channel().data();
    let hp = h * &sol.precoder;
    let optimal = (&hp * pi.pi().transpose()).trace() / (hp.norm_squared() + sc.noise_trace());
    assert!((sol.beta - optimal).abs() < 1e-10 * optimal);
}

#[test]
fn text_round_trip_is_exact() {
    let (sc, pi) = small_problem(3);
    for init in [Init::RandomWl, Init::RandomSl] {
        let sol = solve_txwfq_pi(&sc, &pi, &AlgoConfig { init, ..AlgoConfig::default() }).unwrap();
        let back = PrecoderSolution::from_text(&sol.to_text()).unwrap();
        assert_eq!(back.precoder, sol.precoder);
        assert_eq!(back.power_alloc, sol.power_alloc);
        assert_eq!(back.beta.to_bits(), sol.beta.to_bits());
        assert_eq!(back.superposition, sol.superposition);
        assert_eq!(back.structure, sol.structure);
        assert_eq!(back.trace.mse, sol.trace.mse);
        assert_eq!(back.trace.iterations, sol.trace.iterations);
    }
    let unq = baseline_precoder(&sc, &pi, PrecoderKind::TxWfUnquantized, &AlgoConfig::default()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("unq.txt");
    unq.save(&path).unwrap();
    let back = PrecoderSolution::load(&path).unwrap();
    assert!(!back.quantized);
    assert_eq!(back.precoder, unq.precoder);
}

#[test]
fn text_parser_rejects_damage() {
    let (sc, pi) = small_problem(4);
    let text = baseline_precoder(&sc, &pi, PrecoderKind::Mf, &AlgoConfig::default()).unwrap().to_text();
    assert!(PrecoderSolution::from_text("").is_err());
    assert!(PrecoderSolution::from_text(&text.replace("qml-precoder 1", "qml-precoder 9")).is_err());
    assert!(PrecoderSolution::from_text(&text.replace("structure sl", "structure xx")).is_err());
    let truncated: String = text.lines().take(20).collect::<Vec<_>>().join("\n");
    assert!(PrecoderSolution::from_text(&truncated).is_err());
    assert!(PrecoderSolution::from_text(&text.replace("users 2", "users 3")).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn projection_hits_the_power_budget(seed in any::<u64>(), e in 1e-3f64..1e3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = gaussian(6, 4, &mut rng);
        let q = project_power(&p, &identity(4), e).unwrap();
        prop_assert!((q.norm_squared() - e).abs() < 1e-12 * e);
    }

    #[test]
    fn sl_gradient_stays_strictly_linear(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sc = scenario(4, 2, 10.0, &mut rng);
        let pi = make_superposition(2, 2).unwrap();
        let b = DMatrix::from_fn(4, 4, |_, _| Complex::new(rng.sample(StandardNormal), rng.sample(StandardNormal)));
        let p = WlMatrix::strictly_linear(&b).into_inner();
        let g = mse_gradient(&p, 0.9, &sc, &pi, &identity(8)).unwrap();
        prop_assert!(WlMatrix::from_real(g).unwrap().is_strictly_linear(1e-9));
    }
}
