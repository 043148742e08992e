//! One-dimensional Bellman equation
//! `∂_t u + inf_{a ∈ [δ, 1/δ], |b| <= K} (a u_xx + b u_x) + f = 0`
//! with zero data on the parabolic boundary, solved by implicit backward
//! steps with Howard policy iteration.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::coeffs::OperatorSpec;
use crate::domain::{Domain, GridSpec, Mesh, Point, SpaceTag};
use crate::error::{invalid, LabError, Result};
use crate::fd::{solve_parabolic_with, DriftScheme, GridFunction, ScalarField, SolveOptions};
use crate::linalg::solve_tridiagonal;
use crate::sde::OccupationEstimate;

const TOLERANCE: f64 = 1e-10;
const MAX_SWEEPS: usize = 100;

/// `min(δ u_xx, u_xx/δ) - K |u_x| + f`.
pub fn bellman_rhs_1d(u_xx: f64, u_x: f64, delta: f64, k: f64, f: f64) -> f64 {
    (delta * u_xx).min(u_xx / delta) - k * u_x.abs() + f
}

#[derive(Clone, Debug)]
pub struct BellmanProblem {
    pub delta: f64,
    pub k: f64,
    /// Nonnegative forcing sampled on the cylinder mesh.
    pub f: GridFunction,
}

impl BellmanProblem {
    pub fn new(delta: f64, k: f64, f: GridFunction) -> Result<Self> {
        if !(delta > 0.0 && delta <= 1.0) {
            return invalid(format!("delta must lie in (0, 1], got {delta}"));
        }
        if !(k >= 0.0) || !k.is_finite() {
            return invalid(format!("K must be nonnegative, got {k}"));
        }
        let mesh = f.mesh();
        if mesh.dim() != 1 || !mesh.is_parabolic() {
            return invalid("the Bellman solver needs a one-dimensional cylinder mesh");
        }
        if f.values().iter().any(|&v| v < 0.0) {
            return invalid("f must be nonnegative");
        }
        Ok(BellmanProblem { delta, k, f })
    }

    /// Samples `f` on the mesh of `domain` with steps `gridspec`.
    pub fn from_field(
        delta: f64,
        k: f64,
        f: &dyn ScalarField,
        domain: &Domain,
        gridspec: &GridSpec,
    ) -> Result<Self> {
        let mesh = Arc::new(Mesh::new(domain, gridspec)?);
        Self::new(delta, k, GridFunction::from_field(mesh, f))
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BellmanReport {
    pub max_sweeps: usize,
    pub total_sweeps: usize,
    pub steps: usize,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum DriftChoice {
    Forward,
    Backward,
    Zero,
}

/// Solves the Bellman problem on the mesh of `problem.f`.
pub fn solve_bellman_1d(problem: &BellmanProblem) -> Result<(GridFunction, BellmanReport)> {
    let mesh = problem.f.mesh().clone();
    let k = mesh.k().ok_or_else(|| LabError::StepIncompatible("cylinder mesh has a single level".into()))?;
    let h = mesh.h();
    let unknowns: Vec<usize> = (0..mesh.len()).filter(|&n| mesh.space_tag(n) == SpaceTag::Inside).collect();
    let m = unknowns.len();
    let (delta, cap) = (problem.delta, problem.k);
    let mut u = GridFunction::zeros(mesh.clone());
    let last = mesh.n_levels() - 1;
    let mut report = BellmanReport { max_sweeps: 0, total_sweeps: 0, steps: last };
    // Policy carried over between steps as a warm start.
    let mut a_pol = vec![1.0 / delta; m];
    let mut b_pol = vec![DriftChoice::Zero; m];
    let (mut lower, mut diag, mut upper, mut rhs) = (vec![0.0; m], vec![0.0; m], vec![0.0; m], vec![0.0; m]);
    for level in (0..last).rev() {
        let next: Vec<f64> = unknowns.iter().map(|&n| u.get(level + 1, n)).collect();
        let mut cur = next.clone();
        let mut sweeps = 0;
        loop {
            sweeps += 1;
            for i in 0..m {
                let a = a_pol[i];
                let (bp, bm) = match b_pol[i] {
                    DriftChoice::Forward => (cap / h, 0.0),
                    DriftChoice::Backward => (0.0, cap / h),
                    DriftChoice::Zero => (0.0, 0.0),
                };
                lower[i] = -(a / (h * h) + bm);
                upper[i] = -(a / (h * h) + bp);
                diag[i] = 1.0 / k + 2.0 * a / (h * h) + bp + bm;
                rhs[i] = next[i] / k + problem.f.get(level, unknowns[i]);
            }
            let sol = solve_tridiagonal(&lower, &diag, &upper, &rhs)?;
            let change = sol.iter().zip(&cur).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
            cur = sol;
            let mut policy_changed = false;
            for i in 0..m {
                let left = if i > 0 { cur[i - 1] } else { 0.0 };
                let right = if i + 1 < m { cur[i + 1] } else { 0.0 };
                let d2 = (right - 2.0 * cur[i] + left) / (h * h);
                let a = if d2 >= 0.0 { delta } else { 1.0 / delta };
                let fwd = cap * (right - cur[i]) / h;
                let bwd = -cap * (cur[i] - left) / h;
                let b = if fwd < bwd.min(0.0) {
                    DriftChoice::Forward
                } else if bwd < 0.0 {
                    DriftChoice::Backward
                } else {
                    DriftChoice::Zero
                };
                if a != a_pol[i] || b != b_pol[i] {
                    policy_changed = true;
                }
                a_pol[i] = a;
                b_pol[i] = b;
            }
            if !policy_changed || (sweeps > 1 && change <= TOLERANCE) {
                break;
            }
            if sweeps >= MAX_SWEEPS {
                return Err(LabError::NoConvergence(format!(
                    "policy iteration did not settle in {MAX_SWEEPS} sweeps at level {level}"
                )));
            }
        }
        report.max_sweeps = report.max_sweeps.max(sweeps);
        report.total_sweeps += sweeps;
        for (&n, v) in unknowns.iter().zip(&cur) {
            u.set(level, n, *v);
        }
    }
    Ok((u, report))
}

/// Outcome of comparing the Bellman solution with one linear solution.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Suboptimality {
    pub holds: bool,
    /// `min (u_linear - u_bellman)` off the parabolic boundary; nonnegative when the comparison holds.
    pub margin: f64,
    pub tolerance: f64,
    /// `(t, x)` of the worst node.
    pub worst: (f64, Point),
}

/// Checks `u_bellman <= u_linear` nodewise up to `10 h²`, where `u_linear`
/// solves `∂_t u + L u = -f` with zero data for the linear operator `spec`
/// (first-order terms upwinded, like the Bellman scheme).
pub fn check_suboptimality(u_bellman: &GridFunction, spec: &OperatorSpec, f: &GridFunction) -> Result<(Suboptimality, GridFunction)> {
    let mesh = u_bellman.mesh();
    if spec.dim() != 1 {
        return invalid("comparison operator must be one-dimensional");
    }
    let gs = GridSpec::parabolic(1, mesh.h(), mesh.k().unwrap_or(0.0))?;
    let neg_f = |t: f64, x: &Point| -f.eval(t, x);
    let zero = |_: f64, _: &Point| 0.0;
    let opts = SolveOptions { drift: DriftScheme::Upwind, ..SolveOptions::default() };
    let (lin, _) = solve_parabolic_with(spec, &mesh.domain, &neg_f, &zero, &gs, &opts)?;
    if lin.values().len() != u_bellman.values().len() {
        return Err(LabError::GridMismatch("linear and Bellman meshes differ".into()));
    }
    let tolerance = 10.0 * mesh.h() * mesh.h();
    let mut margin = f64::INFINITY;
    let mut worst = (0.0, [0.0, 0.0]);
    for level in 0..mesh.n_levels() {
        for node in 0..mesh.len() {
            let tag = mesh.tag(level, node);
            if !tag.has_data() || tag.in_parabolic_boundary() {
                continue;
            }
            let d = lin.get(level, node) - u_bellman.get(level, node);
            if d < margin {
                margin = d;
                worst = (mesh.times()[level], mesh.coords(node));
            }
        }
    }
    Ok((Suboptimality { holds: margin >= -tolerance, margin, tolerance, worst }, lin))
}

/// The Monte Carlo side of the comparison: `E ∫ f >= u_bellman(0,0) - 3 stderr`.
pub fn occupation_dominates(u00: f64, estimate: &OccupationEstimate) -> bool {
    estimate.mean >= u00 - 3.0 * estimate.stderr
}
