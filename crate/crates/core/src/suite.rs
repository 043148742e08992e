//! The locked family of operator/solution pairs used for the inequality checks.
//!
//! Each pair fixes an operator, an outer domain, a strictly interior inner
//! domain and a nonnegative forcing `f`; the solution solves `Lu = -f`
//! (elliptic) or `∂_t u + Lu = -f` (parabolic) with zero data.

use std::sync::Arc;

use crate::coeffs::{CoefficientField, OperatorClass, OperatorSpec};
use crate::domain::{Domain, GridSpec, Point};
use crate::error::Result;
use crate::estimates::{check_gradient_bound, check_hessian_bound, BoundReport};
use crate::exact::degenerate_sigma;
use crate::fd::{solve_elliptic, solve_parabolic, GridFunction, ScalarField};
use crate::linalg::Sym2;
use crate::sde::{check_occupation_bound, simulate_occupation, Functional, OccupationEstimate, SimConfig};

type Forcing = dyn Fn(f64, &Point) -> f64 + Send + Sync;

#[derive(Clone)]
pub struct SuitePair {
    pub name: &'static str,
    pub spec: OperatorSpec,
    pub outer: Domain,
    pub inner: Domain,
    pub forcing: Arc<Forcing>,
    /// Coarsest spatial step.
    pub h: f64,
    /// Time step `k = k_over_h2 · h²` for cylinders.
    pub k_over_h2: f64,
    /// Closed-form `σ`, when one is known.
    pub sigma: Option<Arc<dyn Fn(f64, &Point) -> Sym2 + Send + Sync>>,
}

/// Fitted constants of the deterministic checks at one resolution.
#[derive(Clone, Debug)]
pub struct SuiteBounds {
    pub h: f64,
    pub hessian: BoundReport,
    pub gradient: BoundReport,
}

impl SuitePair {
    pub fn dim(&self) -> usize {
        self.spec.dim()
    }

    /// `L_p` exponent of the right side: `d` for balls, `d + 1` for cylinders.
    pub fn p_exp(&self) -> f64 {
        let d = self.dim() as f64;
        if self.outer.is_cylinder() {
            d + 1.0
        } else {
            d
        }
    }

    /// Grid after `refine` halvings of the coarsest step.
    pub fn gridspec(&self, refine: u32) -> Result<GridSpec> {
        let h = self.h / f64::from(1u32 << refine);
        if self.outer.is_cylinder() {
            GridSpec::parabolic(self.dim(), h, self.k_over_h2 * h * h)
        } else {
            GridSpec::new(self.dim(), h)
        }
    }

    pub fn solve(&self, refine: u32) -> Result<GridFunction> {
        let gs = self.gridspec(refine)?;
        let f = self.forcing.clone();
        let rhs = move |t: f64, x: &Point| -f(t, x);
        let zero = |_: f64, _: &Point| 0.0;
        let (u, _) = if self.outer.is_cylinder() {
            solve_parabolic(&self.spec, &self.outer, &rhs, &zero, &gs)?
        } else {
            solve_elliptic(&self.spec, &self.outer, &rhs, &zero, &gs)?
        };
        Ok(u)
    }

    /// Hessian and gradient checks at the given refinement.
    pub fn bounds(&self, refine: u32, gamma: f64) -> Result<SuiteBounds> {
        let u = self.solve(refine)?;
        let p = self.p_exp();
        Ok(SuiteBounds {
            h: u.mesh().h(),
            hessian: check_hessian_bound(&u, &self.spec, &self.inner, &self.outer, gamma, p)?,
            gradient: check_gradient_bound(&u, &self.spec, &self.inner, &self.outer, gamma, p)?,
        })
    }

    /// Diffusion generated by the pair's operator, started at the domain's start point.
    pub fn sim_config(&self, dt: f64, n_paths: usize, seed: u64) -> SimConfig {
        let cfg = SimConfig::from_coefficients(
            &self.spec.coeffs,
            self.outer.clone(),
            self.spec.delta,
            self.spec.k_bound,
            dt,
            n_paths,
            seed,
        );
        match &self.sigma {
            Some(s) => {
                let s = s.clone();
                cfg.with_sigma(move |t, x| s(t, x))
            }
            None => cfg,
        }
    }

    /// Occupation estimate of `f` and the occupation bound at `gamma`.
    pub fn occupation(&self, cfg: &SimConfig, gamma: f64) -> Result<(OccupationEstimate, BoundReport)> {
        let f = self.forcing.clone();
        let field = move |t: f64, x: &Point| f(t, x);
        let (_, est) = simulate_occupation(cfg, &[Functional::plain(&field as &dyn ScalarField)])?;
        let rep = check_occupation_bound(&field, &est[0], gamma, &self.outer, 400)?;
        Ok((est[0], rep))
    }
}

fn bump(c: Point, r: f64) -> impl Fn(f64, &Point) -> f64 + Send + Sync {
    move |_, x| {
        let s = ((x[0] - c[0]).powi(2) + (x[1] - c[1]).powi(2)) / (r * r);
        (1.0 - s).max(0.0).powi(2)
    }
}

fn spec(coeffs: CoefficientField, delta: f64, k: f64) -> OperatorSpec {
    OperatorSpec::new(coeffs, delta, k, OperatorClass::DriftBound).expect("suite operator is admissible")
}

/// Smooth `a` with off-diagonal coupling and a constant drift.
fn smooth_field() -> CoefficientField {
    CoefficientField::new(
        2,
        |_, x| Sym2::new(1.0 + 0.3 * x[0].sin(), 0.2 * (x[0] + x[1]).cos(), 1.0 + 0.3 * x[1].cos()),
        |_, _| [0.5, -0.3],
        |_, _| 0.0,
    )
    .with_label("smooth")
}

/// The ten locked pairs.
pub fn locked_suite() -> Vec<SuitePair> {
    let ball2 = Domain::ball(1.0, &[0.0, 0.0]).unwrap();
    let inner2 = Domain::ball(0.5, &[0.0, 0.0]).unwrap();
    let ball1 = Domain::ball(1.0, &[0.0]).unwrap();
    let inner1 = Domain::ball(0.5, &[0.0]).unwrap();
    let cyl1 = Domain::cylinder(1.0, 1.0, 0.0, &[0.0]).unwrap();
    let cyl1_in = Domain::cylinder(0.5, 0.5, 0.25, &[0.0]).unwrap();
    let cyl2 = Domain::cylinder(0.5, 1.0, 0.0, &[0.0, 0.0]).unwrap();
    let cyl2_in = Domain::cylinder(0.25, 0.5, 0.125, &[0.0, 0.0]).unwrap();
    let shift = [0.5, 0.0];
    let radial_outer = Domain::ball(1.5, &shift).unwrap();
    let radial_inner = Domain::ball(0.75, &shift).unwrap();
    let pair = |name, spec, outer: &Domain, inner: &Domain, forcing: Arc<Forcing>, h, k| SuitePair {
        name,
        spec,
        outer: outer.clone(),
        inner: inner.clone(),
        forcing,
        h,
        k_over_h2: k,
        sigma: None,
    };
    let radial_sigma = |eps: f64| -> Arc<dyn Fn(f64, &Point) -> Sym2 + Send + Sync> {
        Arc::new(move |_, x: &Point| degenerate_sigma(&[x[0] - 0.5, x[1]], eps))
    };
    let mut radial_g = pair(
        "radial-0.5-indicator",
        spec(CoefficientField::radial_degenerate(0.5, shift), 0.5, 0.0),
        &radial_outer,
        &radial_inner,
        Arc::new(|_, x: &Point| if (x[0] - 0.5).hypot(x[1]) < 0.25 { 1.0 } else { 0.0 }),
        1.0 / 32.0,
        0.0,
    );
    radial_g.sigma = Some(radial_sigma(0.5));
    let mut radial_smooth = pair(
        "radial-0.3-bump",
        spec(CoefficientField::radial_degenerate(0.3, shift), 0.7, 0.0),
        &radial_outer,
        &radial_inner,
        Arc::new(bump([0.7, 0.2], 0.6)),
        1.0 / 32.0,
        0.0,
    );
    radial_smooth.sigma = Some(radial_sigma(0.3));
    vec![
        pair(
            "laplace-2d-bump",
            spec(CoefficientField::laplacian(2), 1.0, 0.0),
            &ball2,
            &inner2,
            Arc::new(bump([0.2, -0.1], 0.6)),
            1.0 / 32.0,
            0.0,
        ),
        pair("laplace-1d-const", spec(CoefficientField::laplacian(1), 1.0, 0.0), &ball1, &inner1, Arc::new(|_, _| 1.0), 1.0 / 64.0, 0.0),
        pair("smooth-2d-bump", spec(smooth_field(), 0.5, 0.6), &ball2, &inner2, Arc::new(bump([0.0, 0.0], 0.7)), 1.0 / 32.0, 0.0),
        pair(
            "checkerboard-2d-const",
            spec(CoefficientField::checkerboard(0.5, 0.25, 2), 0.5, 0.0),
            &ball2,
            &inner2,
            Arc::new(|_, _| 1.0),
            1.0 / 32.0,
            0.0,
        ),
        pair(
            "checkerboard-1d-bump",
            spec(CoefficientField::checkerboard(0.5, 0.25, 1), 0.5, 0.0),
            &ball1,
            &inner1,
            Arc::new(bump([0.1, 0.0], 0.5)),
            1.0 / 64.0,
            0.0,
        ),
        radial_g,
        radial_smooth,
        pair("heat-1d-const", spec(CoefficientField::laplacian(1), 1.0, 0.0), &cyl1, &cyl1_in, Arc::new(|_, _| 1.0), 1.0 / 32.0, 1.0),
        pair(
            "checkerboard-heat-1d-bump",
            spec(CoefficientField::checkerboard(0.5, 0.25, 1), 0.5, 0.0),
            &cyl1,
            &cyl1_in,
            Arc::new(bump([0.0, 0.0], 0.6)),
            1.0 / 32.0,
            1.0,
        ),
        pair("smooth-heat-2d-bump", spec(smooth_field(), 0.5, 0.6), &cyl2, &cyl2_in, Arc::new(bump([0.1, 0.1], 0.6)), 1.0 / 16.0, 4.0),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ten_admissible_pairs() {
        let suite = locked_suite();
        assert_eq!(suite.len(), 10);
        for p in &suite {
            assert!(p.inner.radius < p.outer.radius, "{}", p.name);
            assert!(p.gridspec(1).unwrap().h < p.gridspec(0).unwrap().h);
        }
    }
}
