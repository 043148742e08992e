//! Closed-form oracles: the degenerate radial example in the plane and the
//! one-dimensional sign-drift resolvent.

use serde::{Deserialize, Serialize};

use crate::domain::Point;
use crate::error::{invalid, Result};
use crate::linalg::Sym2;

/// Outer radius of the ball in which the radial example is posed.
pub const RADIAL_OUTER: f64 = 1.5;
/// Polar radius of the evaluation point (the origin seen from the pole `e1/2`).
pub const RADIAL_EVAL: f64 = 0.5;

/// `I - eps x x^T / |x|^2`, and the identity at `x = 0`.
pub fn degenerate_matrix(x: &Point, eps: f64) -> Sym2 {
    let r2 = x[0] * x[0] + x[1] * x[1];
    if r2 == 0.0 {
        return Sym2::IDENTITY;
    }
    Sym2::new(1.0 - eps * x[0] * x[0] / r2, -eps * x[0] * x[1] / r2, 1.0 - eps * x[1] * x[1] / r2)
}

/// `√(2a)` for `a = I - eps ŷŷ^T`: `√2 (I - (1 - √(1 - eps)) ŷŷ^T)`.
pub fn degenerate_sigma(x: &Point, eps: f64) -> Sym2 {
    let r2 = x[0] * x[0] + x[1] * x[1];
    let s = std::f64::consts::SQRT_2;
    if r2 == 0.0 {
        return Sym2::scalar(s);
    }
    let k = 1.0 - (1.0 - eps).sqrt();
    Sym2::new(s * (1.0 - k * x[0] * x[0] / r2), -s * k * x[0] * x[1] / r2, s * (1.0 - k * x[1] * x[1] / r2))
}

fn check_eps(eps: f64) -> Result<()> {
    if !(eps > 0.0 && eps < 1.0) {
        return invalid(format!("eps must lie in (0, 1), got {eps}"));
    }
    Ok(())
}

fn check_source_radius(r: f64) -> Result<()> {
    if !(r > 0.0 && r < 0.5) {
        return invalid(format!("source radius must lie in (0, 1/2), got {r}"));
    }
    Ok(())
}

/// Parameters of the degenerate radial example.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct RadialExample {
    pub eps: f64,
    pub r: f64,
    pub shift: Point,
}

impl RadialExample {
    pub fn new(eps: f64, r: f64) -> Result<Self> {
        check_eps(eps)?;
        check_source_radius(r)?;
        Ok(RadialExample { eps, r, shift: [0.5, 0.0] })
    }

    pub fn gamma(&self) -> f64 {
        gamma_of_eps(self.eps).map(|g| g.gamma).unwrap_or(f64::NAN)
    }

    pub fn exit_value(&self) -> f64 {
        exit_value_38(self.eps, self.r).unwrap_or(f64::NAN)
    }

    /// Lebesgue measure of the source disk.
    pub fn source_measure(&self) -> f64 {
        std::f64::consts::PI * self.r * self.r
    }
}

/// Radial solution `v(rho)` of `(1 - eps) v'' + v'/rho = -1_{[0, r]}(rho)` with
/// `v'(0) = 0` and `v(3/2) = 0`.
///
/// The integrating factor `rho^{1/(1-eps)}` gives `v'` in closed form on both
/// sides of `r`; `v` is its antiderivative anchored at `rho = 3/2`.
pub fn radial_profile(eps: f64, r: f64, rho: f64) -> Result<f64> {
    check_eps(eps)?;
    if !(r > 0.0 && r < RADIAL_OUTER) {
        return invalid(format!("source radius must lie in (0, 3/2), got {r}"));
    }
    if !(0.0..=RADIAL_OUTER).contains(&rho) {
        return invalid(format!("rho must lie in [0, 3/2], got {rho}"));
    }
    let outer = |p: f64| outer_profile(eps, r, p);
    if rho >= r {
        Ok(outer(rho))
    } else {
        Ok(outer(r) + (r * r - rho * rho) / (2.0 * (2.0 - eps)))
    }
}

/// `v(p)` for `p >= r`: `C (1 - eps)/eps (p^{-beta} - (3/2)^{-beta})` with
/// `beta = eps / (1 - eps)` and `C = r^{(2 - eps)/(1 - eps)} / (2 - eps)`.
fn outer_profile(eps: f64, r: f64, p: f64) -> f64 {
    let amp = r.powf((2.0 - eps) / (1.0 - eps)) / (2.0 - eps);
    let log_ratio = (RADIAL_OUTER / p).ln();
    if eps < 1e-12 {
        // eps -> 0 limit: logarithmic profile.
        return amp * log_ratio;
    }
    let beta = eps / (1.0 - eps);
    // p^{-beta} - (3/2)^{-beta} = (3/2)^{-beta} expm1(beta ln(3/(2p))), divided by beta.
    let diff_over_beta = RADIAL_OUTER.powf(-beta) * (beta * log_ratio).exp_m1() / beta;
    amp * diff_over_beta
}

/// Closed-form value at the origin of the solution of `a^{ij} D_ij u = -1_G`
/// in `B_{3/2} + e1/2` with zero boundary data, `G = B_r + e1/2`.
pub fn exit_value_38(eps: f64, r: f64) -> Result<f64> {
    check_eps(eps)?;
    check_source_radius(r)?;
    let beta = eps / (1.0 - eps);
    let power = r.powf((2.0 - eps) / (1.0 - eps));
    // (1 - 3^{-beta}) / eps computed stably for small eps.
    let one_minus = -(-beta * 3f64.ln()).exp_m1();
    let lead = (1.0 - eps) / (2.0 - eps) * 2f64.powf(beta) * one_minus / eps;
    Ok(lead * power)
}

/// The `eps -> 0` limit `(r^2/2) ln 3` of the exit value.
pub fn exit_value_limit_eps0(r: f64) -> f64 {
    0.5 * r * r * 3f64.ln()
}

/// `gamma(eps)` together with the exponent consistency `(2-eps)/(1-eps) = 2/gamma`.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct GammaOfEps {
    pub eps: f64,
    pub gamma: f64,
    /// Power of `r` in the exit value.
    pub r_exponent: f64,
    /// `2 / gamma`, the power of `r` in `|G|^{1/gamma}` with `|G| = pi r^2`.
    pub two_over_gamma: f64,
}

impl GammaOfEps {
    pub fn exponents_match(&self) -> bool {
        (self.r_exponent - self.two_over_gamma).abs() <= 1e-12 * self.r_exponent.abs().max(1.0)
    }
}

pub fn gamma_of_eps(eps: f64) -> Result<GammaOfEps> {
    if !(0.0..1.0).contains(&eps) {
        return invalid(format!("eps must lie in [0, 1), got {eps}"));
    }
    let gamma = 2.0 * (1.0 - eps) / (2.0 - eps);
    Ok(GammaOfEps {
        eps,
        gamma,
        r_exponent: (2.0 - eps) / (1.0 - eps),
        two_over_gamma: 2.0 / gamma,
    })
}

/// Constant `u(0) / |G|^{1/gamma}` of the radial example (independent of `r`).
pub fn radial_scaling_constant(eps: f64) -> Result<f64> {
    let r = 0.25;
    let g = gamma_of_eps(eps)?;
    let measure = std::f64::consts::PI * r * r;
    Ok(exit_value_38(eps, r)? / measure.powf(1.0 / g.gamma))
}

/// Parameters of the sign-drift example `u'' - M sign(x) u' - mu u = -f`.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct SignDriftExample {
    pub m: f64,
    pub mu: f64,
    pub nu: f64,
}

impl SignDriftExample {
    pub fn new(m: f64, mu: f64) -> Result<Self> {
        Ok(SignDriftExample { m, mu, nu: decay_rate(m, mu)? })
    }

    /// Residual of the defining quadratic `nu^2 + M nu - mu`.
    pub fn quadratic_residual(&self) -> f64 {
        self.nu * self.nu + self.m * self.nu - self.mu
    }
}

/// `nu = (sqrt(M^2 + 4 mu) - M)/2`, evaluated as `2 mu / (sqrt(M^2 + 4 mu) + M)`,
/// which has no cancellation as `mu/M^2 -> 0` and reduces to `sqrt(mu)` at `M = 0`.
pub fn decay_rate(m: f64, mu: f64) -> Result<f64> {
    if !(mu > 0.0) || !mu.is_finite() {
        return invalid(format!("mu must be positive, got {mu}"));
    }
    if !(m >= 0.0) || !m.is_finite() {
        return invalid(format!("M must be nonnegative, got {m}"));
    }
    if m == 0.0 {
        return Ok(mu.sqrt());
    }
    Ok(2.0 * mu / ((m * m + 4.0 * mu).sqrt() + m))
}

/// Fundamental solution `e^{-nu |x|} / (2 nu)` with pole at the origin.
pub fn fundamental_solution_56(m: f64, mu: f64, x: f64) -> Result<f64> {
    let nu = decay_rate(m, mu)?;
    Ok((-nu * x.abs()).exp() / (2.0 * nu))
}

/// Limiting `L_1` norm `1/nu^2 = [sqrt(M^2 + 4 mu) + M]^2 / (4 mu^2)`.
pub fn resolvent_l1_norm_56(m: f64, mu: f64) -> Result<f64> {
    let nu = decay_rate(m, mu)?;
    Ok(1.0 / (nu * nu))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn degenerate_sigma_squares_to_twice_a() {
        for x in [[0.3, -0.7], [1.0, 0.0], [0.0, 0.0], [-2.0, 5.0]] {
            let s = degenerate_sigma(&x, 0.6);
            let a = degenerate_matrix(&x, 0.6).scale(2.0);
            let sq = Sym2::new(s.xx * s.xx + s.xy * s.xy, s.xy * (s.xx + s.yy), s.xy * s.xy + s.yy * s.yy);
            assert!((sq.xx - a.xx).abs() < 1e-14 && (sq.xy - a.xy).abs() < 1e-14 && (sq.yy - a.yy).abs() < 1e-14);
        }
    }

    /// Independent oracle: composite Gauss-Legendre integration of the closed-form `v'`.
    fn profile_by_quadrature(eps: f64, r: f64, rho: f64) -> f64 {
        let dv = |p: f64| {
            if p <= r {
                -p / (2.0 - eps)
            } else {
                -r.powf((2.0 - eps) / (1.0 - eps)) * p.powf(-1.0 / (1.0 - eps)) / (2.0 - eps)
            }
        };
        let gl = |a: f64, b: f64| {
            let nodes = [
                (-0.906_179_845_938_664, 0.236_926_885_056_189),
                (-0.538_469_310_105_683, 0.478_628_670_499_366),
                (0.0, 0.568_888_888_888_889),
                (0.538_469_310_105_683, 0.478_628_670_499_366),
                (0.906_179_845_938_664, 0.236_926_885_056_189),
            ];
            let (m, hw) = (0.5 * (a + b), 0.5 * (b - a));
            nodes.iter().map(|(x, w)| w * dv(m + hw * x)).sum::<f64>() * hw
        };
        // v(rho) = -∫_rho^{3/2} v'(p) dp, split at r where v' has a kink.
        let mut breaks = vec![rho];
        if rho < r {
            breaks.push(r);
        }
        breaks.push(RADIAL_OUTER);
        let mut total = 0.0;
        for w in breaks.windows(2) {
            let n = 4000;
            let step = (w[1] - w[0]) / n as f64;
            for i in 0..n {
                total += gl(w[0] + i as f64 * step, w[0] + (i + 1) as f64 * step);
            }
        }
        -total
    }

    #[test]
    fn degenerate_matrix_values() {
        assert_eq!(degenerate_matrix(&[0.0, 0.0], 0.5), Sym2::IDENTITY);
        let a = degenerate_matrix(&[1.0, 0.0], 0.5);
        assert_eq!((a.xx, a.xy, a.yy), (0.5, 0.0, 1.0));
        let ev = degenerate_matrix(&[0.3, -0.7], 0.35).eigenvalues(2);
        assert!((ev[0] - 0.65).abs() < 1e-14 && (ev[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn profile_boundary_condition() {
        for &eps in &[0.1, 0.5, 0.9] {
            for &r in &[0.1, 0.25, 0.4] {
                assert_eq!(radial_profile(eps, r, RADIAL_OUTER).unwrap(), 0.0);
            }
        }
    }

    #[test]
    fn profile_matches_quadrature_oracle() {
        for &eps in &[0.2, 0.5, 0.8] {
            for &rho in &[0.0, 0.1, 0.5, 1.0] {
                let v = radial_profile(eps, 0.25, rho).unwrap();
                let q = profile_by_quadrature(eps, 0.25, rho);
                assert!((v - q).abs() < 1e-11 * (1.0 + q.abs()), "eps={eps} rho={rho}: {v} vs {q}");
            }
        }
    }

    #[test]
    fn exit_value_one_seventy_second() {
        let v = exit_value_38(0.5, 0.25).unwrap();
        assert!((v - 1.0 / 72.0).abs() < 1e-15);
        let p = radial_profile(0.5, 0.25, RADIAL_EVAL).unwrap();
        assert!((p - 1.0 / 72.0).abs() < 1e-15);
    }

    #[test]
    fn exit_value_agrees_with_profile_sweep() {
        for i in 1..=9 {
            let eps = i as f64 / 10.0;
            for &r in &[0.05, 0.125, 0.25, 0.375, 0.49] {
                let a = exit_value_38(eps, r).unwrap();
                let b = radial_profile(eps, r, RADIAL_EVAL).unwrap();
                assert!((a - b).abs() <= 1e-10 * a.abs().max(1e-300) + 1e-16, "{eps} {r}");
            }
        }
    }

    #[test]
    fn small_eps_limit() {
        let target = 3f64.ln() / 32.0;
        assert!((exit_value_limit_eps0(0.25) - target).abs() < 1e-16);
        let v = radial_profile(1e-9, 0.25, 0.5).unwrap();
        assert!((v - target).abs() < 1e-8, "{v}");
        let w = exit_value_38(1e-9, 0.25).unwrap();
        assert!((w - target).abs() < 1e-8, "{w}");
    }

    #[test]
    fn doubling_r_scales_by_eight() {
        let a = exit_value_38(0.5, 0.125).unwrap();
        let b = exit_value_38(0.5, 0.25).unwrap();
        assert!((b / a - 8.0).abs() < 1e-12);
    }

    #[test]
    fn gamma_values() {
        assert_eq!(gamma_of_eps(0.0).unwrap().gamma, 1.0);
        assert!((gamma_of_eps(0.5).unwrap().gamma - 2.0 / 3.0).abs() < 1e-15);
        assert!(gamma_of_eps(0.999_999).unwrap().gamma < 1e-5);
        assert!(gamma_of_eps(0.3).unwrap().exponents_match());
        assert!(gamma_of_eps(1.0).is_err());
    }

    #[test]
    fn invalid_parameters_rejected() {
        assert!(radial_profile(0.0, 0.25, 0.5).is_err());
        assert!(radial_profile(0.5, 0.25, 2.0).is_err());
        assert!(exit_value_38(0.5, 0.6).is_err());
        assert!(fundamental_solution_56(1.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn sign_drift_values() {
        assert!((fundamental_solution_56(0.0, 1.0, 0.0).unwrap() - 0.5).abs() < 1e-15);
        let v = fundamental_solution_56(3.0, 4.0, 1.0).unwrap();
        assert!((v - (-1f64).exp() / 2.0).abs() < 1e-15);
        assert!((resolvent_l1_norm_56(0.0, 2.5).unwrap() - 0.4).abs() < 1e-15);
        assert!((resolvent_l1_norm_56(3.0, 4.0).unwrap() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn fundamental_solution_solves_ode() {
        let (m, mu) = (3.0, 4.0);
        let nu = decay_rate(m, mu).unwrap();
        for &x in &[-2.0, -0.3, 0.4, 1.7] {
            let u = fundamental_solution_56(m, mu, x).unwrap();
            let s = f64::signum(x);
            let du = -nu * s * u;
            let d2u = nu * nu * u;
            let res = d2u - m * s * du - mu * u;
            assert!(res.abs() < 1e-10, "{res}");
            // Finite-difference cross-check of the derivative formulas.
            let e = 1e-4;
            let fd2 = (fundamental_solution_56(m, mu, x + e).unwrap() - 2.0 * u
                + fundamental_solution_56(m, mu, x - e).unwrap())
                / (e * e);
            assert!((fd2 - d2u).abs() < 1e-5);
        }
    }

    #[test]
    fn fundamental_solution_mass() {
        let (m, mu) = (1.5, 0.7);
        let n = 400_000;
        let l = 60.0;
        let h = 2.0 * l / n as f64;
        let mass: f64 = (0..n)
            .map(|i| fundamental_solution_56(m, mu, -l + (i as f64 + 0.5) * h).unwrap() * h)
            .sum();
        let target = resolvent_l1_norm_56(m, mu).unwrap();
        assert!((mass - target).abs() < 1e-6 * target, "{mass} {target}");
    }

    #[test]
    fn dichotomy_asymptotics() {
        let m = 3.0;
        let large = 1e8;
        assert!((large * resolvent_l1_norm_56(m, large).unwrap() - 1.0).abs() < 1e-3);
        let small = 1e-8;
        let v = small * small * resolvent_l1_norm_56(m, small).unwrap();
        assert!((v - m * m).abs() < 1e-6, "{v}");
    }

    proptest::proptest! {
        #[test]
        fn nu_solves_quadratic(m in 0.0f64..50.0, mu in 1e-6f64..1e4) {
            let ex = SignDriftExample::new(m, mu).unwrap();
            proptest::prop_assert!(ex.nu > 0.0);
            proptest::prop_assert!(ex.quadratic_residual().abs() <= 1e-12 * mu.max(ex.nu * ex.nu));
        }

        #[test]
        fn gamma_strictly_decreasing(a in 0.0f64..0.999, b in 0.0f64..0.999) {
            proptest::prop_assume!(a < b);
            let ga = gamma_of_eps(a).unwrap().gamma;
            let gb = gamma_of_eps(b).unwrap().gamma;
            proptest::prop_assert!(gb < ga && gb > 0.0 && ga <= 1.0);
        }
    }
}
