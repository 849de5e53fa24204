use num_complex::Complex64;
use sdechaos::fields::{BuiltinFieldId, FieldSpec};
use sdechaos::oracle::{GaussianOracle, Letter};
use sdechaos::pde::*;
use sdechaos::testfn::TestFunction;

fn heat_ctx(r: f64, n: usize) -> OperatorContext {
    let field = FieldSpec::builtin(BuiltinFieldId::ConstantIdentity, 2).build().unwrap();
    OperatorContext::assemble(&field, &make_grid(2, r, n).unwrap(), None).unwrap()
}

fn max_rel_err(a: &DiscreteField, exact: impl Fn(&[f64]) -> f64) -> f64 {
    let mut x = vec![0.0; a.grid.dim()];
    let mut worst: f64 = 0.0;
    let mut scale: f64 = 0.0;
    for p in 0..a.grid.len() {
        a.grid.point(p, &mut x);
        let e = exact(&x);
        worst = worst.max((a.values[p] - e).abs());
        scale = scale.max(e.abs());
    }
    worst / scale
}

#[test]
fn heat_semigroup_matches_gaussian_composition() {
    let ctx = heat_ctx(4.0, 257);
    let f = TestFunction::GaussianDensity { center: vec![0.0, 0.0], variance: 0.25 };
    let exact = TestFunction::GaussianDensity { center: vec![0.0, 0.0], variance: 0.75 };
    let u0 = DiscreteField::sample(ctx.grid(), |x| f.eval(x));
    let u = evolve_semigroup(&ctx, &u0, 0.5, 0.5 / 256.0).unwrap();
    let err = max_rel_err(&u, |x| exact.eval(x));
    assert!(err <= 1e-3, "max relative error {err:e}");
}

#[test]
fn zero_time_returns_input() {
    let ctx = heat_ctx(2.0, 33);
    let f = DiscreteField::sample(ctx.grid(), |x| (-(x[0] * x[0] + x[1] * x[1])).exp());
    let mut g = f.clone();
    for p in 0..g.grid.len() {
        if g.grid.is_boundary(p) {
            g.values[p] = 0.0;
        }
    }
    assert_eq!(evolve_semigroup(&ctx, &f, 0.0, 0.01).unwrap(), g);
}

#[test]
fn positivity_and_semigroup_property() {
    let ctx = heat_ctx(3.0, 65);
    let f = DiscreteField::sample(ctx.grid(), |x| TestFunction::bump(vec![0.2, 0.0], 0.8).eval(x));
    let dt = 0.25 / 64.0;
    let whole = evolve_semigroup(&ctx, &f, 0.5, dt).unwrap();
    let halves = evolve_semigroup(&ctx, &evolve_semigroup(&ctx, &f, 0.25, dt).unwrap(), 0.25, dt).unwrap();
    let fmax = f.max_abs();
    assert!(whole.values.iter().all(|&v| v >= -1e-8 * fmax));
    let gap = whole.values.iter().zip(&halves.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    // the split run restarts with implicit Euler; both are O(dt²) accurate
    assert!(gap < 1e-4 * fmax, "gap {gap:e}");
}

#[test]
fn resolvent_defining_identity() {
    let field = FieldSpec::builtin(BuiltinFieldId::Vortex2d, 2).mollified(8).build().unwrap();
    let ctx = OperatorContext::assemble(&field, &make_grid(2, 3.0, 49).unwrap(), None).unwrap();
    let f = DiscreteField::sample(ctx.grid(), |x| TestFunction::bump(vec![0.5, 0.0], 1.0).eval(x));
    for lam in [Complex64::new(1.0, 0.0), Complex64::new(2.0, 3.0)] {
        let u = resolvent_solve(&ctx, lam, &f).unwrap();
        let mut lu = vec![Complex64::default(); u.values.len()];
        ctx.apply_into(&u.values, &mut lu, false);
        let mut num = 0.0;
        let mut den = 0.0;
        for p in ctx.interior() {
            num += (lam * u.values[*p] - lu[*p] - f.values[*p]).norm_sqr();
            den += f.values[*p] * f.values[*p];
        }
        assert!((num / den).sqrt() < 1e-9);
    }
}

#[test]
fn resolvent_of_discrete_eigenvector() {
    use std::f64::consts::PI;
    let ctx = heat_ctx(1.0, 33);
    let g = ctx.grid().clone();
    let n = g.n_per_axis();
    let (k1, k2) = (2.0, 3.0);
    let len = 2.0 * g.r_dom();
    let f = DiscreteField::sample(&g, |x| (k1 * PI * (x[0] + 1.0) / len).sin() * (k2 * PI * (x[1] + 1.0) / len).sin());
    let h = g.h();
    assert_eq!(n, 33);
    let eig = |k: f64| 4.0 / (h * h) * (k * PI * h / (2.0 * len)).sin().powi(2);
    let kappa2 = eig(k1) + eig(k2);
    let lam = 4.0;
    let u = resolvent_solve(&ctx, Complex64::new(lam, 0.0), &f).unwrap();
    for p in ctx.interior() {
        assert!((u.values[*p].re - f.values[*p] / (lam + 0.5 * kappa2)).abs() < 1e-9);
    }
}

#[test]
fn resolvent_matches_oracle_at_origin() {
    let ctx = heat_ctx(4.0, 129);
    let f = TestFunction::gaussian(vec![0.0, 0.0], 0.5);
    let oracle = GaussianOracle::from_field(ctx.field()).unwrap();
    let u = resolvent_solve(&ctx, Complex64::new(4.0, 0.0), &DiscreteField::sample(ctx.grid(), |x| f.eval(x))).unwrap();
    let exact = oracle.resolvent(&f, 4.0, &[0.0, 0.0]).unwrap();
    let got = u.real_part().interpolate(&[0.0, 0.0]);
    assert!((got - exact).abs() < 1e-3 * exact, "{got} vs {exact}");
}

#[test]
fn contour_semigroup_agrees_with_time_stepping() {
    let ctx = heat_ctx(4.0, 97);
    let f = DiscreteField::sample(ctx.grid(), |x| TestFunction::gaussian(vec![0.2, -0.1], 0.3).eval(x));
    let t = 0.5;
    let stepped = evolve_semigroup(&ctx, &f, t, t / 256.0).unwrap();
    let c32 = contour_semigroup(&ctx, &f, t, &ContourTable::parabolic(32)).unwrap();
    let c64 = contour_semigroup(&ctx, &f, t, &ContourTable::parabolic(64)).unwrap();
    let m = stepped.max_abs();
    let diff = |a: &DiscreteField, b: &DiscreteField| a.values.iter().zip(&b.values).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    assert!(diff(&stepped, &c32) <= 1e-3 * m);
    assert!(diff(&c32, &c64) <= 1e-6 * m);
}

#[test]
fn q_operator_on_linear_and_constant_data() {
    let ctx = heat_ctx(4.0, 129);
    let lin = TestFunction::ClippedLinear { axis: 0, inner: 1.5, outer: 3.0 };
    let f = DiscreteField::sample(ctx.grid(), |x| lin.eval(x));
    for k in 0..2 {
        let q = q_operator(&ctx, k, 0.01, &f, None, 0.001).unwrap();
        for x in [[0.0, 0.0], [0.25, -0.5], [-0.5, 0.5]] {
            let expected = if k == 0 { 1.0 } else { 0.0 };
            assert!((q.interpolate(&x) - expected).abs() <= 1e-6, "k={k} x={x:?}: {}", q.interpolate(&x));
        }
    }
    let one = DiscreteField::sample(ctx.grid(), |_| 1.0);
    let q = q_operator(&ctx, 0, 0.0, &one, None, 0.01).unwrap();
    for p in 0..one.grid.len() {
        assert_eq!(q.values[p], 0.0);
    }
}

#[test]
fn q_operator_matches_oracle() {
    let ctx = heat_ctx(4.0, 257);
    let oracle = GaussianOracle::from_field(ctx.field()).unwrap();
    let f = TestFunction::gaussian(vec![0.25, -0.125], 0.5);
    let u0 = DiscreteField::sample(ctx.grid(), |x| f.eval(x));
    let t = 0.3;
    let q = q_operator(&ctx, 0, t, &u0, None, t / 128.0).unwrap();
    let exact = oracle.word(&f, &[Letter::Q(0, t)], &[0.0, 0.0]).unwrap();
    let got = q.interpolate(&[0.0, 0.0]);
    assert!((got - exact).abs() <= 1e-3 * exact.abs(), "{got} vs {exact}");

    // length-three word Q^0_{0.2} Q^1_{0.1} T_{0.15}
    let w1 = evolve_semigroup(&ctx, &u0, 0.15, 0.15 / 64.0).unwrap();
    let w2 = q_operator(&ctx, 1, 0.1, &w1, None, 0.1 / 64.0).unwrap();
    let w3 = q_operator(&ctx, 0, 0.2, &w2, None, 0.2 / 64.0).unwrap();
    let exact = oracle.word(&f, &[Letter::T(0.15), Letter::Q(1, 0.1), Letter::Q(0, 0.2)], &[0.0, 0.0]).unwrap();
    let got = w3.interpolate(&[0.0, 0.0]);
    assert!((got - exact).abs() <= 2e-3 * exact.abs(), "{got} vs {exact}");
}

#[test]
fn semigroup_cache_reads_are_consistent() {
    let ctx = heat_ctx(3.0, 65);
    let f = DiscreteField::sample(ctx.grid(), |x| TestFunction::gaussian(vec![0.0, 0.0], 0.4).eval(x));
    let cache = SemigroupCache::build(&ctx, &f, 0.01, 0.5, LADDER_RATIO, 0.01).unwrap();
    let times = cache.times().to_vec();
    assert!(times.windows(2).all(|w| w[0] < w[1]));
    // exact at a ladder time; gradient equals gradient of the snapshot
    let t = times[5];
    let snap = cache.snapshot_at(t).unwrap();
    let g = cache.gradient_at(t).unwrap();
    assert_eq!(gradient(&snap), g);
    // mid-ladder read is close to a direct evolution
    let tm = 0.5 * (times[10] + times[11]);
    let direct = evolve_semigroup(&ctx, &f, tm, tm / 128.0).unwrap();
    let read = cache.snapshot_at(tm).unwrap();
    let gap = direct.values.iter().zip(&read.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(gap < 2e-3 * direct.max_abs(), "gap {gap:e}");
}

#[test]
fn point_probe_matches_forward_evolution() {
    let field = FieldSpec::builtin(BuiltinFieldId::Vortex2d, 2).mollified(8).build().unwrap();
    let ctx = OperatorContext::assemble(&field, &make_grid(2, 3.0, 65).unwrap(), None).unwrap();
    let x0 = [0.5625, -0.1875];
    let probe = PointProbe::build(&ctx, &x0, 0.5, &[0.3], &ProbeOptions::default()).unwrap();
    let f = DiscreteField::sample(ctx.grid(), |x| TestFunction::bump(vec![0.2, 0.1], 1.2).eval(x));
    for tau in [0.3, 0.123, 0.0071, 0.5] {
        let direct = evolve_semigroup(&ctx, &f, tau, tau / 256.0).unwrap().interpolate(&x0);
        let via = probe.value(tau, &f).unwrap();
        assert!((direct - via).abs() < 2e-4 * f.max_abs(), "τ={tau}: {direct} vs {via}");
    }
}

#[test]
fn coarse_grid_reports_boundary_leak() {
    let ctx = heat_ctx(1.0, 65);
    let f = DiscreteField::sample(ctx.grid(), |x| TestFunction::gaussian(vec![0.0, 0.0], 0.2).eval(x));
    evolve_semigroup(&ctx, &f, 1.0, 0.01).unwrap();
    assert!(ctx.leak_events() > 0);
    assert!(ctx.max_leak_ratio() > BOUNDARY_LEAK_THRESHOLD);
}
