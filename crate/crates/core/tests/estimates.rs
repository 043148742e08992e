use std::sync::Arc;

use lplab::coeffs::{CoefficientField, OperatorClass, OperatorSpec};
use lplab::domain::{Domain, GridSpec, Mesh, Point};
use lplab::estimates::{
    check_gradient_bound, check_hessian_bound, distribution_function, layer_cake_quasinorm, lp_norm, resolve_gamma,
};
use lplab::fd::{solve_elliptic, GridFunction};
use proptest::prelude::*;

fn laplace(dim: usize) -> OperatorSpec {
    OperatorSpec::new(CoefficientField::laplacian(dim), 1.0, 0.0, OperatorClass::DriftBound).unwrap()
}

fn disk_mesh(r: f64, h: f64) -> Arc<Mesh> {
    let d = Domain::ball(r, &[0.0, 0.0]).unwrap();
    Arc::new(Mesh::new(&d, &GridSpec::new(2, h).unwrap()).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn distribution_scales_exactly(a in 0.1f64..3.0, b in -2.0f64..2.0, lam in 0.05f64..2.0) {
        let dom = Domain::ball(1.0, &[0.0, 0.0]).unwrap();
        let m = disk_mesh(1.0, 1.0 / 16.0);
        let u = GridFunction::from_field(m, &move |_: f64, x: &Point| (a * x[0] + b * x[1]).exp());
        let levels = [lam, 2.0 * lam, 4.0 * lam];
        let doubled: Vec<f64> = levels.iter().map(|l| 2.0 * l).collect();
        let f1 = distribution_function(&u, &levels, &dom).unwrap();
        let f2 = distribution_function(&u.map(|v| 2.0 * v), &doubled, &dom).unwrap();
        prop_assert_eq!(f1.f_values, f2.f_values);
    }

    #[test]
    fn distribution_is_nonincreasing(c in 0.5f64..4.0) {
        let dom = Domain::ball(1.0, &[0.0, 0.0]).unwrap();
        let u = GridFunction::from_field(disk_mesh(1.0, 1.0 / 16.0), &move |_: f64, x: &Point| c * (1.0 - x[0] * x[0]));
        let levels: Vec<f64> = (1..20).map(|i| i as f64 * 0.2).collect();
        let t = distribution_function(&u, &levels, &dom).unwrap();
        prop_assert!(t.f_values.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn hessian_constant_nonincreasing_in_outer(gamma in 0.2f64..1.0, r0 in 0.6f64..1.0) {
        let u = GridFunction::from_field(disk_mesh(2.2, 1.0 / 16.0), &|_: f64, x: &Point| x[0] * x[0] + x[1] * x[1]);
        let inner = Domain::ball(0.5, &[0.0, 0.0]).unwrap();
        let mut prev = f64::INFINITY;
        for k in 0..4 {
            let outer = Domain::ball(r0 + 0.3 * k as f64, &[0.0, 0.0]).unwrap();
            let n = check_hessian_bound(&u, &laplace(2), &inner, &outer, gamma, 2.0).unwrap().fitted_n;
            prop_assert!(n <= prev * (1.0 + 1e-12), "{n} > {prev}");
            prev = n;
        }
    }
}

#[test]
fn layer_cake_agrees_with_direct_integral() {
    let dom = Domain::ball(1.0, &[0.0, 0.0]).unwrap();
    let g = GridFunction::from_field(disk_mesh(1.0, 1.0 / 128.0), &|_: f64, x: &Point| {
        x[0].hypot(x[1]).max(1e-3).powf(-0.5)
    });
    let levels: Vec<f64> = (0..400).map(|i| 0.5 * 1.02f64.powi(i)).collect();
    let tail = distribution_function(&g, &levels, &dom).unwrap();
    for gamma in [0.5, 1.0, 2.0] {
        let cake = layer_cake_quasinorm(&tail, gamma).unwrap();
        let direct = lp_norm(&g, gamma, &dom).unwrap();
        assert!((cake - direct).abs() < 0.03 * direct, "gamma {gamma}: {cake} vs {direct}");
    }
    assert!(resolve_gamma(None, Some(&tail)).unwrap() >= 0.05);
}

#[test]
fn bounds_on_solved_problem_are_stable() {
    let dom = Domain::ball(1.0, &[0.0, 0.0]).unwrap();
    let inner = Domain::ball(0.5, &[0.0, 0.0]).unwrap();
    let coeffs = CoefficientField::checkerboard(0.5, 0.5, 2);
    let spec = OperatorSpec::new(coeffs, 0.5, 0.0, OperatorClass::DriftBound).unwrap();
    let mut ns = Vec::new();
    for h in [1.0 / 16.0, 1.0 / 32.0] {
        let gs = GridSpec::new(2, h).unwrap();
        let (u, rep) = solve_elliptic(&spec, &dom, &|_: f64, _: &Point| -1.0, &|_: f64, _: &Point| 0.0, &gs).unwrap();
        assert!(rep.monotone_scheme);
        let hes = check_hessian_bound(&u, &spec, &inner, &dom, 0.5, 2.0).unwrap();
        let gra = check_gradient_bound(&u, &spec, &inner, &dom, 0.5, 2.0).unwrap();
        assert!(hes.fitted_n > 0.0 && gra.fitted_n > 0.0);
        ns.push(hes.fitted_n);
    }
    assert!((ns[1] / ns[0] - 1.0).abs() < 0.1, "{ns:?}");
}
