use lplab::exact::{
    exit_value_38, exit_value_limit_eps0, gamma_of_eps, radial_profile, radial_scaling_constant, RADIAL_EVAL,
};
use proptest::prelude::*;

/// Independent oracle: Simpson integration of `-v'` from `rho` to `3/2`.
fn profile_by_simpson(eps: f64, r: f64, rho: f64) -> f64 {
    let dv = |p: f64| {
        if p <= r {
            -p / (2.0 - eps)
        } else {
            -r.powf((2.0 - eps) / (1.0 - eps)) / (2.0 - eps) * p.powf(-1.0 / (1.0 - eps))
        }
    };
    let simpson = |a: f64, b: f64, n: usize| {
        let h = (b - a) / n as f64;
        let mut s = dv(a) + dv(b);
        for i in 1..n {
            s += dv(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        s * h / 3.0
    };
    if rho >= r {
        -simpson(rho, 1.5, 4000)
    } else {
        -simpson(rho, r, 4000) - simpson(r, 1.5, 4000)
    }
}

proptest! {
    #[test]
    fn closed_form_matches_profile(eps in 0.01f64..0.95, r in 0.01f64..0.49) {
        let a = exit_value_38(eps, r).unwrap();
        let b = radial_profile(eps, r, RADIAL_EVAL).unwrap();
        prop_assert!((a - b).abs() <= 1e-12 * a.max(1e-300));
        let c = profile_by_simpson(eps, r, RADIAL_EVAL);
        prop_assert!((a - c).abs() <= 1e-8 * a, "{a} vs {c}");
    }

    #[test]
    fn gamma_decreasing(eps in 0.0f64..0.98, d in 0.001f64..0.01) {
        let a = gamma_of_eps(eps).unwrap();
        let b = gamma_of_eps(eps + d).unwrap();
        prop_assert!(b.gamma < a.gamma);
        prop_assert!(a.exponents_match());
    }

    #[test]
    fn scaling_constant_free_of_r(eps in 0.05f64..0.9, r in 0.02f64..0.49) {
        let g = gamma_of_eps(eps).unwrap().gamma;
        let c = exit_value_38(eps, r).unwrap() / (std::f64::consts::PI * r * r).powf(1.0 / g);
        let c0 = radial_scaling_constant(eps).unwrap();
        prop_assert!((c - c0).abs() <= 1e-10 * c0);
    }
}

#[test]
fn remark_value_and_eps_limit() {
    assert!((exit_value_38(0.5, 0.25).unwrap() - 1.0 / 72.0).abs() < 1e-15);
    let lim = exit_value_limit_eps0(0.25);
    assert!((exit_value_38(1e-9, 0.25).unwrap() - lim).abs() < 1e-8 * lim);
    assert!(gamma_of_eps(1.0).is_err());
    assert!(exit_value_38(0.5, 0.5).is_err());
}
