use lplab::coeffs::{CoefficientField, OperatorClass, OperatorSpec};
use lplab::domain::{Domain, GridSpec};
use lplab::exact::decay_rate;
use lplab::quadrature::CellQuadrature;
use lplab::resolvent::{
    check_dichotomy, corollary_lower_bound, lambda_of_mu, mu_theta, nu_theta, scaled_plan, split_drift, Branch,
    DriftProfile, TestBank,
};
use proptest::prelude::*;

fn bump_profile() -> DriftProfile {
    let q = CellQuadrature::new(2, [-2.0, -2.0], [2.0, 2.0], 1.0 / 32.0).unwrap();
    DriftProfile::from_box(&q, |x| 5.0 * (-(x[0] * x[0] + x[1] * x[1]) * 4.0).exp() / (x[0].hypot(x[1]) + 0.1))
}

proptest! {
    #[test]
    fn split_reconstructs_exactly(b0 in -1e3f64..1e3, b1 in -1e3f64..1e3, mu in 0.0f64..100.0) {
        let b = [b0, b1];
        let (p, q) = split_drift(b, mu).unwrap();
        prop_assert_eq!(p[0] + q[0], b[0]);
        prop_assert_eq!(p[1] + q[1], b[1]);
        let norm = b0.hypot(b1);
        prop_assert!(p[0].hypot(p[1]) <= mu * (1.0 + 1e-14) + 4.0 * f64::EPSILON * norm);
        if norm <= mu {
            prop_assert_eq!(q, [0.0, 0.0]);
        }
    }

    #[test]
    fn mu_theta_monotone(theta in 0.01f64..2.0, lambda in 0.1f64..100.0) {
        let prof = bump_profile();
        for branch in [Branch::Elliptic, Branch::Parabolic] {
            let a = mu_theta(&prof, theta, lambda, branch, 2).unwrap();
            let b = mu_theta(&prof, 2.0 * theta, lambda, branch, 2).unwrap();
            prop_assert!(b <= a + 1e-9);
        }
        let a = mu_theta(&prof, theta, lambda, Branch::Parabolic, 2).unwrap();
        let b = mu_theta(&prof, theta, 2.0 * lambda, Branch::Parabolic, 2).unwrap();
        prop_assert!(b >= a - 1e-9);
    }

    #[test]
    fn lambda_increasing_in_mu(k in 0.0f64..3.0, nu in 0.0f64..2.0, m in 0.1f64..5.0, mu in 1e-3f64..1e3) {
        let f = |l: f64| nu * l.sqrt() + m;
        let a = lambda_of_mu(k, &f, mu).unwrap();
        let b = lambda_of_mu(k, &f, 1.5 * mu).unwrap();
        prop_assert!(b > a);
        prop_assert!(a >= corollary_lower_bound(k, nu, m, mu) * (1.0 - 1e-12));
        // The root solves the defining equation.
        prop_assert!((k * a + f(a) * a.sqrt() - mu).abs() <= 1e-9 * mu);
    }
}

#[test]
fn nu_theta_scales_with_theta() {
    let q = CellQuadrature::new(2, [-2.0, -2.0], [2.0, 2.0], 1.0 / 32.0).unwrap();
    let b2 = DriftProfile::from_box(&q, |x| if x[0].hypot(x[1]) < 1.0 { 2.0 } else { 0.0 });
    let a = nu_theta(&b2, 1.0, 2).unwrap();
    let b = nu_theta(&b2, 2.0, 2).unwrap();
    assert!((a / b - 8.0).abs() < 1e-12);
    assert!(nu_theta(&DriftProfile::Constant(1.0), 1.0, 2).is_err());
}

fn sign_spec(m: f64) -> OperatorSpec {
    OperatorSpec::new(CoefficientField::sign_drift(m), 1.0, 1.0, OperatorClass::EllipticTrace).unwrap()
}

#[test]
fn dichotomy_report_and_crossover() {
    let m = 3.0;
    let spec = sign_spec(m);
    // Twelve decay lengths on each side, 50 cells per resolved length.
    let plan = move |mu: f64| {
        let nu = decay_rate(m, mu)?;
        let h = (1.0 / nu).min(1.0 / m) / 50.0;
        let r = ((12.0 / nu) / h).ceil() * h + 0.5 * h;
        Ok((Domain::ball(r, &[0.0])?, GridSpec::new(1, h)?))
    };
    let bank = move |mu: f64| {
        let w = 0.1 * (1.0 / decay_rate(m, mu).unwrap()).min(1.0 / m);
        TestBank::point_masses([0.0, 0.0], &[w, 2.0 * w])
    };
    let mus: Vec<f64> = (0..9).map(|i| 10f64.powf(-1.0 + 0.375 * i as f64)).collect();
    let rep = check_dichotomy(&spec, 1.0, m, &mus, &plan, &bank).unwrap();
    assert_eq!(rep.threshold, 18.0);
    let mut csv = Vec::new();
    rep.to_csv(&mut csv).unwrap();
    let text = String::from_utf8(csv).unwrap();
    assert!(text.starts_with("mu,norm_u,norm_f,mu_ratio,mu2_ratio"));
    assert_eq!(text.lines().count(), mus.len() + 1);
    assert!(rep.to_json().unwrap().contains("\"threshold\""));
    // Crossover of μ·N and μ²·N/M² lies within a factor 4 of the threshold.
    let cross = rep
        .rows
        .windows(2)
        .find(|w| (w[0].mu_ratio - w[0].mu2_ratio / (m * m)) * (w[1].mu_ratio - w[1].mu2_ratio / (m * m)) <= 0.0)
        .map(|w| (w[0].mu * w[1].mu).sqrt())
        .expect("crossover inside the sweep");
    assert!(cross > rep.threshold / 4.0 && cross < rep.threshold * 4.0, "{cross}");
}

#[test]
fn drift_free_decay_is_natural() {
    let spec = OperatorSpec::new(CoefficientField::laplacian(1), 1.0, 0.0, OperatorClass::EllipticTrace).unwrap();
    let plan = scaled_plan(|mu: f64| Ok(1.0 / mu.sqrt()), 15.0, 100.0, 0.05);
    let bank = |mu: f64| TestBank::standard([0.0, 0.0], 1.0 / mu.sqrt());
    let mus: Vec<f64> = (0..5).map(|i| 10f64.powf(0.5 * i as f64)).collect();
    let rep = check_dichotomy(&spec, 1.0, 0.0, &mus, &plan, &bank).unwrap();
    for r in &rep.rows {
        assert!(r.mu_ratio <= 1.0 + 1e-6 && r.mu_ratio > 0.9, "{r:?}");
    }
}
