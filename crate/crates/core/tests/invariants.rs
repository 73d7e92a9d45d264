use std::sync::OnceLock;

use bergman_core::domains::{potential_jet, DomainSpec, NegLogBall, WeightSpec};
use bergman_core::geometry::{bochner_normal_map, curvature_from_jet, hsc_from_jet, hsc_from_kernel, metric_from_kernel};
use bergman_core::kernel::{build_kernel, KernelModel, KernelOptions};
use bergman_core::minint::fuks_at;
use bergman_core::oracles::{fr_kernel, fr_kernel_offdiag, fr_metric_hsc};
use bergman_core::series::{inverse_map, Series};
use bergman_core::{Point, C64};
use proptest::prelude::*;

fn ball_point(n: usize, max_radius: f64) -> impl Strategy<Value = Point> {
    (prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), n), 0.0..max_radius).prop_map(|(v, r)| {
        let z: Vec<C64> = v.into_iter().map(|(a, b)| C64::new(a, b)).collect();
        let norm = z.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt().max(1e-12);
        z.into_iter().map(|c| c * (r / norm)).collect()
    })
}

fn direction(n: usize) -> impl Strategy<Value = Vec<C64>> {
    prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), n)
        .prop_filter("nonzero", |v| v.iter().any(|(a, b)| a.abs() + b.abs() > 1e-3))
        .prop_map(|v| v.into_iter().map(|(a, b)| C64::new(a, b)).collect())
}

/// Weighted ball kernels, m=2 on 𝔹², built once with probes up to |z| = 0.7.
fn ball2_m2() -> &'static KernelModel {
    static MODEL: OnceLock<KernelModel> = OnceLock::new();
    MODEL.get_or_init(|| {
        let probes = vec![vec![C64::new(0.5, 0.0), C64::new(0.0, 0.5)]];
        let opts = KernelOptions { fixed_degree: Some(70), ..Default::default() };
        build_kernel(&DomainSpec::ball(2, 1.0).unwrap(), &WeightSpec::radial_power(2, 1.0), &probes, &opts).unwrap()
    })
}

fn disk_unit() -> &'static KernelModel {
    static MODEL: OnceLock<KernelModel> = OnceLock::new();
    MODEL.get_or_init(|| {
        let opts = KernelOptions { fixed_degree: Some(200), ..Default::default() };
        build_kernel(&DomainSpec::disk(1.0).unwrap(), &WeightSpec::unit(), &[vec![C64::new(0.7, 0.0)]], &opts).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn kernel_is_hermitian_and_cauchy_schwarz(z in ball_point(2, 0.7), w in ball_point(2, 0.7)) {
        let model = ball2_m2();
        let kzw = model.eval(&z, &w).unwrap();
        let kwz = model.eval(&w, &z).unwrap();
        prop_assert!((kzw - kwz.conj()).norm() <= 1e-12 * kzw.norm().max(1.0));
        let bound = model.diag(&z).unwrap() * model.diag(&w).unwrap();
        prop_assert!(kzw.norm_sqr() <= bound * (1.0 + 1e-12));
    }

    #[test]
    fn weighted_ball_matches_forelli_rudin(z in ball_point(2, 0.7), w in ball_point(2, 0.7)) {
        let model = ball2_m2();
        let want = fr_kernel(2, 1.0, 2, &z).unwrap();
        prop_assert!((model.diag(&z).unwrap() - want).abs() <= 1e-8 * want);
        let want = fr_kernel_offdiag(2, 1.0, 2, &z, &w).unwrap();
        prop_assert!((model.eval(&z, &w).unwrap() - want).norm() <= 1e-8 * want.norm());
    }

    #[test]
    fn kernel_curvature_matches_oracle(z in ball_point(2, 0.6), x in direction(2)) {
        let model = ball2_m2();
        let (g, h) = fr_metric_hsc(2, 1.0, 2, &z, &x).unwrap();
        let gm = metric_from_kernel(model, &z, &x).unwrap();
        prop_assert!((gm - g).abs() <= 1e-7 * g);
        prop_assert!((hsc_from_kernel(model, &z, &x).unwrap() - h).abs() <= 1e-6);
    }

    #[test]
    fn fuks_route_agrees_with_kernel_route(z in ball_point(1, 0.6), x in direction(1)) {
        let model = disk_unit();
        let (v, results) = fuks_at(&model.system, &z, &x).unwrap();
        for r in &results {
            prop_assert!(r.constraint_residual < 1e-8);
        }
        let k = model.diag(&z).unwrap();
        prop_assert!((v.kernel - k).abs() <= 1e-9 * k);
        let g = metric_from_kernel(model, &z, &x).unwrap();
        prop_assert!((v.metric - g).abs() <= 1e-9 * g);
        prop_assert!((v.hsc - hsc_from_kernel(model, &z, &x).unwrap()).abs() <= 1e-7);
    }

    #[test]
    fn bochner_coordinates_normalize_the_jet(p in ball_point(2, 0.8), x in direction(2)) {
        let phi = NegLogBall::unit(2);
        let jet = potential_jet(&phi, &p).unwrap();
        let map = bochner_normal_map(&jet).unwrap();
        prop_assert!(map.invariants().max() < 1e-9);
        // 𝔹² with φ = -log(1-|z|²) has S = -6 and H = -2 in every direction
        let report = curvature_from_jet(&map, &x).unwrap();
        prop_assert!((report.scalar + 6.0).abs() < 1e-9);
        prop_assert!((report.hsc + 2.0).abs() < 1e-9);
        prop_assert!((hsc_from_jet(&jet, &x).unwrap() + 2.0).abs() < 1e-9);
    }

    #[test]
    fn inverse_map_round_trips(a in -0.5f64..0.5, b in -0.5f64..0.5, c in -0.5f64..0.5, t in (-0.2f64..0.2, -0.2f64..0.2)) {
        let order = 6;
        // f(ζ) = (ζ₁ + a ζ₁ζ₂ + b ζ₂², 2ζ₂ + c ζ₁³)
        let z1 = Series::var(2, order, 0);
        let z2 = Series::var(2, order, 1);
        let f1 = &(&z1 + &(&z1 * &z2).scale(C64::new(a, 0.0))) + &z2.pow(2).scale(C64::new(b, 0.0));
        let f2 = &z2.scale(C64::new(2.0, 0.0)) + &z1.pow(3).scale(C64::new(c, 0.0));
        let f = vec![f1, f2];
        let g = inverse_map(&f).unwrap();
        let w = [C64::new(t.0, t.1), C64::new(t.1, -t.0)];
        let back: Vec<C64> = f.iter().map(|fi| fi.eval(&g.iter().map(|gi| gi.eval(&w)).collect::<Vec<_>>())).collect();
        let err = (0..2).map(|i| (back[i] - w[i]).norm()).fold(0.0, f64::max);
        let scale = w.iter().map(|c| c.norm()).fold(0.0, f64::max);
        prop_assert!(err <= 50.0 * scale.powi(order as i32 + 1) + 1e-14, "err {err}");
    }
}
