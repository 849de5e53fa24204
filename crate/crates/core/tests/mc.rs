use proptest::prelude::*;
use sdechaos::fields::{BuiltinFieldId, ExpressionTable, FieldSpec, Smoothness};
use sdechaos::mc::*;
use sdechaos::pde::*;
use sdechaos::stats::Estimate;
use sdechaos::testfn::TestFunction;

fn identity() -> sdechaos::fields::CoefficientField {
    FieldSpec::builtin(BuiltinFieldId::ConstantIdentity, 2).build().unwrap()
}

fn vortex(n: u32) -> sdechaos::fields::CoefficientField {
    FieldSpec::builtin(BuiltinFieldId::Vortex2d, 2).mollified(n).build().unwrap()
}

fn user(sigma: &[&[&str]], drift: &[&str]) -> sdechaos::fields::CoefficientField {
    let table = ExpressionTable {
        sigma: sigma.iter().map(|r| r.iter().map(|s| s.to_string()).collect()).collect(),
        drift: drift.iter().map(|s| s.to_string()).collect(),
        delta: 0.5,
        smoothness: Smoothness::AnalyticSmooth,
    };
    FieldSpec { expressions: Some(table), ..FieldSpec::builtin(BuiltinFieldId::UserDefined, sigma.len()) }
        .build()
        .unwrap()
}

#[test]
fn paths_are_reproducible() {
    let a = WienerPath::sample(2, 1.0, 8, 5, 17).unwrap();
    assert_eq!(a, WienerPath::sample(2, 1.0, 8, 5, 17).unwrap());
    assert_ne!(a, WienerPath::sample(2, 1.0, 8, 5, 18).unwrap());
    assert_ne!(a, WienerPath::sample(2, 1.0, 8, 6, 17).unwrap());
    assert_eq!(a.at(0), &[0.0, 0.0]);
    assert_eq!(sample_wiener_path(2, 1.0, 8, 5).unwrap(), WienerPath::sample(2, 1.0, 8, 5, 0).unwrap());
}

#[test]
fn quadratic_variation_is_the_horizon() {
    let t = 0.75;
    let p = WienerPath::sample(2, t, 16, 3, 0).unwrap();
    for k in 0..2 {
        let qv: f64 = (0..p.steps()).map(|j| p.increment(j, k).powi(2)).sum();
        // sd of the sum is t sqrt(2 / 2^16)
        assert!((qv - t).abs() < 5.0 * t * (2.0f64 / 65536.0).sqrt(), "{qv}");
    }
}

#[test]
fn endpoint_and_midpoint_moments() {
    let (t, n) = (2.0, 4000);
    let mut ends = Vec::new();
    let mut mids = Vec::new();
    for i in 0..n {
        let p = WienerPath::sample(1, t, 3, 9, i).unwrap();
        let q = p.refined().unwrap();
        ends.push(p.at(p.steps())[0]);
        // the new point minus the chord midpoint
        mids.push(q.at(1)[0] - 0.5 * (q.at(0)[0] + q.at(2)[0]));
    }
    let e = Estimate::from_samples(&ends);
    assert!(e.mean.abs() < 4.0 * e.std_err);
    let var_end = ends.iter().map(|v| v * v).sum::<f64>() / n as f64;
    assert!((var_end - t).abs() < 4.0 * t * (2.0 / n as f64).sqrt(), "{var_end}");
    // bridge midpoint variance is a quarter of the coarse step
    let want = 0.25 * t / 8.0;
    let var_mid = mids.iter().map(|v| v * v).sum::<f64>() / n as f64;
    assert!((var_mid - want).abs() < 4.0 * want * (2.0 / n as f64).sqrt(), "{var_mid} vs {want}");
}

#[test]
fn path_file_round_trip() {
    let p = WienerPath::sample(3, 0.5, 6, 2, 4).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("w.bin");
    p.write_binary(std::fs::File::create(&file).unwrap()).unwrap();
    let q = WienerPath::read_binary(std::fs::File::open(&file).unwrap()).unwrap();
    assert_eq!(p, q);
    let mut bytes = std::fs::read(&file).unwrap();
    bytes[0] = b'X';
    assert!(WienerPath::read_binary(&bytes[..]).is_err());
    assert!(WienerPath::sample(1, 1.0, MAX_LEVEL + 1, 0, 0).is_err());
    assert!(WienerPath::sample(1, -1.0, 2, 0, 0).is_err());
}

#[test]
fn euler_is_exact_for_additive_noise() {
    let p = WienerPath::sample(2, 1.0, 9, 1, 0).unwrap();
    let x = euler_maruyama(&identity(), &[0.5, -1.0], &p, &EulerOptions::default()).unwrap();
    for j in [0, 100, p.steps()] {
        let w = p.at(j);
        assert!((x.state(j)[0] - 0.5 - w[0]).abs() < 1e-12);
        assert!((x.state(j)[1] + 1.0 - w[1]).abs() < 1e-12);
    }
    assert!(!x.clamped && !x.exited());
}

#[test]
fn euler_with_constant_drift() {
    let field = user(&[&["1", "0"], &["0", "2"]], &["0.5", "-1"]);
    let p = WienerPath::sample(2, 0.8, 7, 2, 0).unwrap();
    let x = euler_maruyama(&field, &[0.0, 0.0], &p, &EulerOptions::default()).unwrap();
    let (w, end) = (p.at(p.steps()), x.endpoint());
    assert!((end[0] - (w[0] + 0.4)).abs() < 1e-12);
    assert!((end[1] - (2.0 * w[1] - 0.8)).abs() < 1e-12);

    let capped = EulerOptions { lambda: 0.25, ..EulerOptions::default() };
    let y = euler_maruyama(&field, &[0.0, 0.0], &p, &capped).unwrap();
    assert!(y.clamped);
    assert!((y.endpoint()[0] - (w[0] + 0.2)).abs() < 1e-12);
    assert!((y.endpoint()[1] - (2.0 * w[1] - 0.2)).abs() < 1e-12);
}

#[test]
fn euler_self_converges_on_a_smooth_field() {
    // geometric noise: the strong error halves with a quarter of the step
    let field = user(&[&["0.5 * x1", "0"], &["0", "1"]], &["0", "0"]);
    let mut e_coarse = 0.0;
    let mut e_fine = 0.0;
    for i in 0..200 {
        let fine = WienerPath::sample(2, 1.0, 12, 4, i).unwrap();
        let end = |level: u32| {
            let p = fine.coarsened(level).unwrap();
            euler_maruyama(&field, &[1.0, 0.0], &p, &EulerOptions::default()).unwrap().endpoint()[0]
        };
        let r = end(12);
        e_coarse += (end(6) - r).powi(2);
        e_fine += (end(8) - r).powi(2);
    }
    let ratio = (e_coarse / e_fine).sqrt();
    assert!(ratio > 1.5 && ratio < 3.0, "{ratio}");
}

#[test]
fn exit_flag_and_shapes() {
    let p = WienerPath::sample(2, 1.0, 6, 0, 0).unwrap();
    let opts = EulerOptions { half_box: 0.5, ..EulerOptions::default() };
    let x = euler_maruyama(&identity(), &[1.0, 0.0], &p, &opts).unwrap();
    assert_eq!(x.exit_step, Some(0));
    assert!(euler_maruyama(&identity(), &[0.0], &p, &opts).is_err());
    let q = WienerPath::sample(3, 1.0, 6, 0, 0).unwrap();
    assert!(euler_maruyama(&identity(), &[0.0, 0.0], &q, &opts).is_err());
}

#[test]
fn coupled_solves_share_noise() {
    let p = WienerPath::sample(2, 1.0, 8, 7, 0).unwrap();
    let (a, b) = (identity(), user(&[&["1", "0"], &["0", "1"]], &["0.25", "0"]));
    let xs = coupled_solve(&[&a, &b], &[vec![0.0, 0.0], vec![0.0, 0.0]], &p, &EulerOptions::default()).unwrap();
    assert!((xs[1].endpoint()[0] - xs[0].endpoint()[0] - 0.25).abs() < 1e-12);
    assert_eq!(xs[1].endpoint()[1], xs[0].endpoint()[1]);
    assert!(coupled_solve(&[&a], &[], &p, &EulerOptions::default()).is_err());
}

#[test]
fn reversed_accumulation_agrees() {
    let field = vortex(16);
    for i in 0..20 {
        let p = WienerPath::sample(2, 1.0, 10, 3, i).unwrap();
        let x = euler_maruyama(&field, &[1.0, 0.0], &p, &EulerOptions::default()).unwrap();
        let rev = EulerOptions { reverse_order: true, ..EulerOptions::default() };
        let y = euler_maruyama(&field, &[1.0, 0.0], &p, &rev).unwrap();
        let gap = x.states.iter().zip(&y.states).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        assert!(gap <= 1e-12, "{gap}");
    }
}

#[test]
fn variational_flow_of_additive_noise_is_constant() {
    let p = WienerPath::sample(2, 1.0, 8, 1, 0).unwrap();
    let v = variational_solve(&identity(), &[0.3, 0.1], &[1.0, -2.0], &p, &EulerOptions::default()).unwrap();
    assert_eq!(v.endpoint(), &[1.0, -2.0]);
}

#[test]
fn variational_flow_is_linear_in_the_direction() {
    let field = vortex(16);
    let p = WienerPath::sample(2, 0.5, 9, 2, 0).unwrap();
    let x0 = [0.7, -0.4];
    let a = variational_solve(&field, &x0, &[0.6, 0.8], &p, &EulerOptions::default()).unwrap();
    let b = variational_solve(&field, &x0, &[1.2, 1.6], &p, &EulerOptions::default()).unwrap();
    for (u, v) in a.xi.iter().zip(&b.xi) {
        assert!((2.0 * u - v).abs() <= 1e-12 * v.abs().max(1.0));
    }
}

#[test]
fn variational_flow_matches_finite_differences() {
    let field = vortex(16);
    let (x0, eta) = ([0.7, -0.4], [0.6, 0.8]);
    let opts = EulerOptions::default();
    let mut gaps = Vec::new();
    for eps in [1e-2, 1e-3] {
        let mut total = 0.0;
        for i in 0..50 {
            let p = WienerPath::sample(2, 0.5, 9, 6, i).unwrap();
            let v = variational_solve(&field, &x0, &eta, &p, &opts).unwrap();
            let y0 = [x0[0] + eps * eta[0], x0[1] + eps * eta[1]];
            let a = euler_maruyama(&field, &x0, &p, &opts).unwrap();
            let b = euler_maruyama(&field, &y0, &p, &opts).unwrap();
            total += (0..2).map(|i| ((b.endpoint()[i] - a.endpoint()[i]) / eps - v.endpoint()[i]).abs()).sum::<f64>();
        }
        gaps.push(total / 50.0);
    }
    assert!(gaps[1] < 0.5 * gaps[0], "{gaps:?}");
}

#[test]
fn single_integral_of_one_is_the_endpoint() {
    let p = WienerPath::sample(2, 1.0, 9, 3, 0).unwrap();
    let k = FnKernel { multi_index: vec![1], f: |_: &[f64]| 1.0 };
    let v = iterated_ito_integral(&k, &p, 1.0).unwrap();
    assert!((v - p.at(p.steps())[1]).abs() < 1e-12);
    let half = iterated_ito_integral(&k, &p, 0.5).unwrap();
    assert!((half - p.at(p.steps() / 2)[1]).abs() < 1e-12);
}

#[test]
fn double_integral_of_one_is_the_second_hermite_polynomial() {
    let k = FnKernel { multi_index: vec![0, 0], f: |_: &[f64]| 1.0 };
    let t = 1.0;
    let mut rms = [0.0; 2];
    for i in 0..40 {
        let fine = WienerPath::sample(1, t, 11, 8, i).unwrap();
        for (slot, level) in [(0, 8), (1, 11)] {
            let p = fine.coarsened(level).unwrap();
            let v = iterated_ito_integral(&k, &p, t).unwrap();
            let w = p.at(p.steps())[0];
            let qv: f64 = (0..p.steps()).map(|j| p.increment(j, 0).powi(2)).sum();
            // the discrete sum telescopes exactly
            assert!((v - 0.5 * (w * w - qv)).abs() < 1e-10);
            rms[slot] += (v - 0.5 * (w * w - t)).powi(2);
        }
    }
    // strong rate dt^{1/2}: three levels give a factor 2^{3/2}
    let ratio = (rms[0] / rms[1]).sqrt();
    assert!(ratio > 2.0 && ratio < 4.0, "{ratio}");
}

#[test]
fn synthetic_kernel_matches_brute_force() {
    let g = |s: f64| (2.0 * s).cos();
    let h = |s: f64| 1.0 + s * s;
    let k = FnKernel { multi_index: vec![0, 1], f: move |ts: &[f64]| g(ts[0]) * h(ts[1]) };
    let t = 1.0;
    let (mut err8, mut err10) = (0.0, 0.0);
    for i in 0..30 {
        let fine = WienerPath::sample(2, t, 12, 5, i).unwrap();
        // brute force at level 12: Σ_{a > b} g(t_a) h(t_b) Δw⁰_a Δw¹_b
        let n = fine.steps();
        let dt = t / n as f64;
        let mut inner = 0.0;
        let mut brute = 0.0;
        for a in 0..n {
            brute += g(a as f64 * dt) * inner * fine.increment(a, 0);
            inner += h(a as f64 * dt) * fine.increment(a, 1);
        }
        let at = |level| iterated_ito_integral(&k, &fine.coarsened(level).unwrap(), t).unwrap();
        err8 += (at(8) - brute).powi(2);
        err10 += (at(10) - brute).powi(2);
    }
    assert!(err10 < err8);
    assert!((err8 / 30.0).sqrt() < 0.05, "{}", (err8 / 30.0).sqrt());
}

#[test]
fn short_paths_are_rejected() {
    let k = FnKernel { multi_index: vec![0], f: |_: &[f64]| 1.0 };
    let p = WienerPath::sample(1, 1.0, 7, 0, 0).unwrap();
    assert!(iterated_ito_integral(&k, &p, 1.0).is_err());
    let k2 = FnKernel { multi_index: vec![2], f: |_: &[f64]| 1.0 };
    assert!(iterated_ito_integral(&k2, &WienerPath::sample(1, 1.0, 8, 0, 0).unwrap(), 1.0).is_err());
}

fn linear_setup() -> (OperatorContext, DiscreteField, TestFunction) {
    let ctx = OperatorContext::assemble(&identity(), &make_grid(2, 4.0, 65).unwrap(), None).unwrap();
    let tf = TestFunction::ClippedLinear { axis: 0, inner: 2.0, outer: 3.5 };
    let f = DiscreteField::sample(ctx.grid(), |x| tf.eval(x));
    (ctx, f, tf)
}

#[test]
fn reconstruction_of_a_linear_function_terminates() {
    let (ctx, f, tf) = linear_setup();
    let (x0, t) = ([0.125, -0.25], 0.1);
    let p = WienerPath::sample(2, t, 8, 11, 0).unwrap();
    let r = chaos_reconstruct(&ctx, &f, &x0, &p, t, 1).unwrap();
    let w = p.at(p.steps());
    assert!((r - (x0[0] + w[0])).abs() < 1e-4, "{r}");
    let x = euler_maruyama(&identity(), &x0, &p, &EulerOptions::default()).unwrap();
    assert!((r - tf.eval(x.endpoint())).abs() < 1e-4);
    let s = conditional_series_estimate(&ctx, &f, &x0, &p, t, 1).unwrap();
    assert_eq!(s.to_bits(), r.to_bits());
}

#[test]
fn table_levels_and_budget() {
    let (ctx, f, _) = linear_setup();
    let (x0, t) = ([0.125, -0.25], 0.1);
    let table = ChaosTable::build(&ctx, &f, &x0, t, 2, 16).unwrap();
    assert!((table.mean - x0[0]).abs() < 1e-4);
    assert!((table.kernel(&[0], &[7]) - 1.0).abs() < 1e-4);
    assert!(table.kernel(&[1], &[7]).abs() < 1e-4);
    assert!(table.kernel(&[0, 0], &[9, 3]).abs() < 1e-4);
    let p = WienerPath::sample(2, t, 6, 0, 0).unwrap();
    let lv = table.levels(&p, 2).unwrap();
    assert!((lv[0] - p.at(p.steps())[0]).abs() < 1e-4);
    assert!(table.levels(&p, 3).is_err());
    assert!(ChaosTable::build(&ctx, &f, &x0, t, 3, 1024).is_err());
}

#[test]
fn feynman_kac_of_constants_and_gaussians() {
    let opts = EnsembleOptions { level: 6, seed: 3, ..EnsembleOptions::default() };
    let one = feynman_kac_estimate(&identity(), &TestFunction::Constant { value: 1.0 }, &[0.0, 0.0], 1.0, 200, &opts)
        .unwrap();
    assert_eq!((one.mean, one.std_err), (1.0, 0.0));

    let (c, s, t, x0) = ([0.5, -0.25], 0.4, 0.6, [0.0, 0.1]);
    let f = TestFunction::gaussian(c.to_vec(), s);
    let est = feynman_kac_estimate(&identity(), &f, &x0, t, 4000, &opts).unwrap();
    let r2 = (x0[0] - c[0]).powi(2) + (x0[1] - c[1]).powi(2);
    let exact = s / (s + t) * (-r2 / (2.0 * (s + t))).exp();
    assert!((est.mean - exact).abs() < 3.0 * est.std_err, "{} ± {} vs {exact}", est.mean, est.std_err);
    assert!(feynman_kac_estimate(&identity(), &f, &x0, t, 99, &opts).is_err());
}

#[test]
fn excessive_exits_are_reported() {
    let opts = EnsembleOptions { level: 6, seed: 0, euler: EulerOptions { half_box: 0.5, ..EulerOptions::default() } };
    let f = TestFunction::gaussian(vec![0.0, 0.0], 1.0);
    assert!(feynman_kac_estimate(&identity(), &f, &[0.0, 0.0], 1.0, 200, &opts).is_err());
}

#[test]
fn ensembles_do_not_depend_on_thread_count() {
    let field = vortex(8);
    let run = |threads| {
        rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(|| {
            let opts = EnsembleOptions { level: 7, seed: 12, ..EnsembleOptions::default() };
            feynman_kac_estimate(&field, &TestFunction::bump(vec![1.0, 0.0], 1.5), &[1.0, 0.0], 0.5, 300, &opts)
                .unwrap()
        })
    };
    assert_eq!(run(1), run(3));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn coarsening_inverts_refinement(seed in any::<u64>(), level in 0u32..8, d1 in 1usize..4) {
        let p = WienerPath::sample(d1, 1.0, level, seed, 0).unwrap();
        prop_assert_eq!(p.refined().unwrap().coarsened(level).unwrap(), p);
    }

    #[test]
    fn additive_noise_moves_every_start_alike(a in -2.0f64..2.0, b in -2.0f64..2.0, seed in any::<u64>()) {
        let p = WienerPath::sample(2, 1.0, 6, seed, 0).unwrap();
        let f = identity();
        let x = euler_maruyama(&f, &[a, b], &p, &EulerOptions::default()).unwrap();
        let y = euler_maruyama(&f, &[0.0, 0.0], &p, &EulerOptions::default()).unwrap();
        prop_assert!((x.endpoint()[0] - a - y.endpoint()[0]).abs() < 1e-12);
        prop_assert!((x.endpoint()[1] - b - y.endpoint()[1]).abs() < 1e-12);
    }
}
