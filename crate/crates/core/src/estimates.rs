//! Norms, distribution functions, tail fits and instance-wise checks of the
//! Hessian, gradient and identity estimates.
//!
//! `|D²u|` is the Frobenius norm of the Hessian and `|Du|` the Euclidean
//! norm of the gradient. Integrals use node-centred cells clipped to the
//! domain. Derivative-based integrands are only sampled where every spatial
//! difference is centered, which drops the outermost node ring of the mesh.

use serde::{Deserialize, Serialize};

use crate::coeffs::OperatorSpec;
use crate::domain::{Domain, Mesh, SpaceTag};
use crate::error::{invalid, LabError, Result};
use crate::fd::{apply_operator, discrete_derivatives, level_time, Derivatives, DriftScheme, GridFunction};
use crate::linalg::KahanSum;

/// Outcome of one inequality check `lhs <= N * sum(rhs_terms)`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BoundReport {
    pub lhs: f64,
    pub rhs_terms: Vec<(String, f64)>,
    pub ratio: f64,
    pub gamma_used: f64,
    #[serde(rename = "fitted_N")]
    pub fitted_n: f64,
    /// Standard error of `fitted_n` for Monte Carlo right-hand sides.
    pub stderr: Option<f64>,
    /// Set when the right-hand side is statistically indistinguishable from zero.
    pub inconclusive: bool,
}

impl BoundReport {
    pub fn new(lhs: f64, rhs_terms: Vec<(String, f64)>, gamma: f64) -> Result<Self> {
        let rhs: f64 = rhs_terms.iter().map(|(_, v)| v).sum();
        let ratio = if lhs == 0.0 {
            0.0
        } else if rhs > 0.0 {
            lhs / rhs
        } else {
            return Err(LabError::Violation(format!(
                "lhs = {lhs:e} is positive while every right-hand term vanishes"
            )));
        };
        Ok(BoundReport {
            lhs,
            rhs_terms,
            ratio,
            gamma_used: gamma,
            fitted_n: ratio,
            stderr: None,
            inconclusive: false,
        })
    }

    pub fn rhs(&self) -> f64 {
        self.rhs_terms.iter().map(|(_, v)| v).sum()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Measures of superlevel sets `{field >= lambda}`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TailData {
    pub lambdas: Vec<f64>,
    pub f_values: Vec<f64>,
    /// `u(0, 0)` or `u(0)` when known.
    pub u00: Option<f64>,
}

impl TailData {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct TailFit {
    pub gamma_hat: f64,
    /// `C` in `F(lambda) ≈ C lambda^{-gamma_hat}`.
    pub constant: f64,
    pub samples: usize,
}

/// Cell weight of every `(level, node)` with respect to `domain`.
fn weights(mesh: &Mesh, domain: &Domain) -> Vec<f64> {
    let space = mesh.space_weights(domain);
    let time = mesh.time_weights(domain);
    let n = mesh.len();
    let mut w = vec![0.0; n * mesh.n_levels()];
    for (level, &tw) in time.iter().enumerate() {
        if tw == 0.0 {
            continue;
        }
        for node in 0..n {
            w[level * n + node] = tw * space[node];
        }
    }
    w
}

fn check_domain(mesh: &Mesh, domain: &Domain) -> Result<()> {
    if domain.dim != mesh.dim() {
        return Err(LabError::GridMismatch("domain and mesh dimensions differ".into()));
    }
    if domain.is_cylinder() != mesh.is_parabolic() {
        return Err(LabError::GridMismatch("domain kind does not match mesh".into()));
    }
    Ok(())
}

/// `(∫_domain |u|^p)^{1/p}`; a quasi-norm for `p < 1`.
pub fn lp_norm(u: &GridFunction, p: f64, domain: &Domain) -> Result<f64> {
    if !(p > 0.0) {
        return invalid(format!("p must be positive, got {p}"));
    }
    check_domain(u.mesh(), domain)?;
    let w = weights(u.mesh(), domain);
    let mut acc = KahanSum::default();
    for (v, wt) in u.values().iter().zip(&w) {
        if *wt > 0.0 {
            acc.add(wt * v.abs().powf(p));
        }
    }
    Ok(acc.value().powf(1.0 / p))
}

/// `max |u|` over the given `(level, node)` pairs.
pub fn sup_on(u: &GridFunction, nodes: &[(usize, usize)]) -> Result<f64> {
    if nodes.is_empty() {
        return invalid("sup over an empty node set");
    }
    Ok(nodes.iter().map(|&(l, n)| u.get(l, n).abs()).fold(0.0, f64::max))
}

/// The snapped `∂` of a ball or `∂'` of a cylinder on `mesh`.
pub fn boundary_nodes(mesh: &Mesh, domain: &Domain) -> Result<Vec<(usize, usize)>> {
    check_domain(mesh, domain)?;
    let ring = mesh.ring_of(domain);
    if !domain.is_cylinder() {
        return Ok(ring.into_iter().map(|n| (0, n)).collect());
    }
    let k = mesh.k().unwrap_or(f64::INFINITY);
    let times = mesh.times();
    let tol = 1e-9 * k;
    let last = times
        .iter()
        .enumerate()
        .filter(|(_, &t)| t <= domain.t_end() + tol)
        .map(|(l, _)| l)
        .next_back()
        .ok_or_else(|| LabError::GridMismatch("cylinder lies before the mesh".into()))?;
    let mut out = Vec::new();
    for (level, &t) in times.iter().enumerate() {
        if t < domain.t0 - tol || level > last {
            continue;
        }
        if level == last {
            for node in 0..mesh.len() {
                if mesh.has_data_space(node) && domain.contains_space_closed(&mesh.coords(node)) {
                    out.push((level, node));
                }
            }
        }
        out.extend(ring.iter().map(|&n| (level, n)));
    }
    out.sort_unstable();
    out.dedup();
    Ok(out)
}

/// Cell-counting measure of `{field >= lambda}` within `domain` for each level.
pub fn distribution_function(field: &GridFunction, lambdas: &[f64], domain: &Domain) -> Result<TailData> {
    if lambdas.is_empty() || lambdas[0] <= 0.0 || lambdas.windows(2).any(|w| w[1] <= w[0]) {
        return invalid("levels must be positive and increasing");
    }
    check_domain(field.mesh(), domain)?;
    let w = weights(field.mesh(), domain);
    let mut cells: Vec<(f64, f64)> =
        field.values().iter().zip(&w).filter(|(_, &wt)| wt > 0.0).map(|(&v, &wt)| (v, wt)).collect();
    cells.sort_by(|a, b| b.0.total_cmp(&a.0));
    // Sweep levels from the top so each F is a prefix sum of the sorted cells.
    let mut f_values = vec![0.0; lambdas.len()];
    let mut acc = KahanSum::default();
    let mut i = 0;
    for (j, &lam) in lambdas.iter().enumerate().rev() {
        while i < cells.len() && cells[i].0 >= lam {
            acc.add(cells[i].1);
            i += 1;
        }
        f_values[j] = acc.value();
    }
    Ok(TailData { lambdas: lambdas.to_vec(), f_values, u00: None })
}

/// Least-squares slope of `log F` against `log lambda`, negated.
pub fn fit_tail_exponent(tail: &TailData) -> Result<TailFit> {
    let pts: Vec<(f64, f64)> = tail
        .lambdas
        .iter()
        .zip(&tail.f_values)
        .filter(|(_, &f)| f > 0.0)
        .map(|(&l, &f)| (l.ln(), f.ln()))
        .collect();
    if pts.len() < 3 {
        return Err(LabError::Degenerate(format!("need 3 levels with F > 0, have {}", pts.len())));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let spread = pts.iter().map(|p| (p.1 - my).abs()).fold(0.0, f64::max);
    if sxx == 0.0 || spread <= 1e-14 * my.abs().max(1.0) {
        return Err(LabError::Degenerate("distribution function is flat".into()));
    }
    let slope = sxy / sxx;
    Ok(TailFit { gamma_hat: -slope, constant: (my - slope * mx).exp(), samples: pts.len() })
}

/// `(∫ |g|^{gamma})^{1/gamma}` from the layer-cake formula
/// `∫ |g|^γ = ∫_0^∞ F(λ) d(λ^γ)`, with `F` constant below the first level
/// and continued by the fitted power law above the last one.
pub fn layer_cake_quasinorm(tail: &TailData, gamma: f64) -> Result<f64> {
    if !(gamma > 0.0) {
        return invalid("gamma must be positive");
    }
    let fit = fit_tail_exponent(tail)?;
    if gamma >= fit.gamma_hat {
        return invalid(format!("gamma {gamma} must lie below the tail exponent {}", fit.gamma_hat));
    }
    let (l, f) = (&tail.lambdas, &tail.f_values);
    let mut acc = KahanSum::default();
    acc.add(f[0] * l[0].powf(gamma));
    for i in 1..l.len() {
        acc.add(0.5 * (f[i] + f[i - 1]) * (l[i].powf(gamma) - l[i - 1].powf(gamma)));
    }
    let top = *l.last().expect("nonempty levels");
    acc.add(gamma * fit.constant * top.powf(gamma - fit.gamma_hat) / (fit.gamma_hat - gamma));
    Ok(acc.value().powf(1.0 / gamma))
}

/// Exponent used by the checkers: the supplied value, or the fitted tail
/// exponent floored at 0.05 and capped at 1.
pub fn resolve_gamma(gamma: Option<f64>, tail: Option<&TailData>) -> Result<f64> {
    match (gamma, tail) {
        (Some(g), _) => {
            if g > 0.0 && g <= 1.0 {
                Ok(g)
            } else {
                invalid(format!("gamma must lie in (0, 1], got {g}"))
            }
        }
        (None, Some(t)) => Ok(fit_tail_exponent(t)?.gamma_hat.clamp(0.05, 1.0)),
        (None, None) => invalid("no gamma and no tail data to fit one from"),
    }
}

/// `L u` on every node with centered spatial differences: the scheme's own
/// stencil (with its forward time difference) below the terminal slab, the
/// derivative fields on the terminal slab.
pub fn operator_field(spec: &OperatorSpec, u: &GridFunction, der: &Derivatives) -> GridFunction {
    let mesh = u.mesh().clone();
    let mut lu = apply_operator(spec, u, DriftScheme::Centered);
    if mesh.is_parabolic() {
        let last = mesh.n_levels() - 1;
        for node in 0..mesh.len() {
            if mesh.space_tag(node) == SpaceTag::Inside {
                lu.set(last, node, der.apply(&spec.coeffs, u, last, node));
            }
        }
    }
    lu
}

fn integrate_centered(mesh: &Mesh, domain: &Domain, values: impl Fn(usize, usize) -> f64) -> f64 {
    let w = weights(mesh, domain);
    let n = mesh.len();
    let mut acc = KahanSum::default();
    for level in 0..mesh.n_levels() {
        for node in 0..n {
            let wt = w[level * n + node];
            if wt > 0.0 && mesh.space_tag(node) == SpaceTag::Inside {
                acc.add(wt * values(level, node));
            }
        }
    }
    acc.value()
}

#[derive(Clone, Copy)]
enum Order {
    Gradient,
    Hessian,
}

fn check_bound(
    order: Order,
    u: &GridFunction,
    spec: &OperatorSpec,
    inner: &Domain,
    outer: &Domain,
    gamma: f64,
    p_exp: f64,
) -> Result<BoundReport> {
    if !(gamma > 0.0 && gamma <= 1.0) {
        return invalid(format!("gamma must lie in (0, 1], got {gamma}"));
    }
    if !(p_exp > 0.0) {
        return invalid("integrability exponent must be positive");
    }
    let mesh = u.mesh();
    check_domain(mesh, inner)?;
    check_domain(mesh, outer)?;
    let der = discrete_derivatives(u)?;
    let dim = mesh.dim();
    let lhs = integrate_centered(mesh, inner, |l, n| {
        let i = der.idx(l, n);
        let g = match order {
            Order::Hessian => der.hess[i].frobenius(dim),
            Order::Gradient => (der.grad[i][0].powi(2) + der.grad[i][1].powi(2)).sqrt(),
        };
        g.powf(gamma)
    });
    let lu = operator_field(spec, u, &der);
    let lu_int = integrate_centered(mesh, outer, |l, n| lu.get(l, n).abs().powf(p_exp));
    let sup = sup_on(u, &boundary_nodes(mesh, outer)?)?;
    let label = if outer.is_cylinder() { "sup_parabolic_boundary|u|^gamma" } else { "sup_boundary|u|^gamma" };
    BoundReport::new(
        lhs,
        vec![
            (format!("(int|Lu|^{p_exp})^(gamma/{p_exp})"), lu_int.powf(gamma / p_exp)),
            (label.to_string(), sup.powf(gamma)),
        ],
        gamma,
    )
}

/// `∫_inner |D²u|^γ` against `(∫_outer |Lu|^p)^{γ/p} + sup_{∂ outer} |u|^γ`.
pub fn check_hessian_bound(
    u: &GridFunction,
    spec: &OperatorSpec,
    inner: &Domain,
    outer: &Domain,
    gamma: f64,
    p_exp: f64,
) -> Result<BoundReport> {
    check_bound(Order::Hessian, u, spec, inner, outer, gamma, p_exp)
}

/// As [`check_hessian_bound`] with `|Du|` in place of `|D²u|`.
pub fn check_gradient_bound(
    u: &GridFunction,
    spec: &OperatorSpec,
    inner: &Domain,
    outer: &Domain,
    gamma: f64,
    p_exp: f64,
) -> Result<BoundReport> {
    check_bound(Order::Gradient, u, spec, inner, outer, gamma, p_exp)
}

/// Max over unknown nodes of `|L(-u²) - g + f|` with `g = -2u Lu - c u²` and
/// `f = 2 a^{ij} D_i u D_j u`, using the scheme's spatial stencil (centered
/// drift) on each time slab and centered first differences.
pub fn verify_identity_22(u: &GridFunction, spec: &OperatorSpec) -> Result<f64> {
    let mesh = u.mesh().clone();
    if spec.dim() != mesh.dim() {
        return Err(LabError::GridMismatch("operator and mesh dimensions differ".into()));
    }
    let der = discrete_derivatives(u)?;
    let neg_sq = u.map(|v| -v * v);
    let coeffs = &spec.coeffs;
    let dim = mesh.dim();
    let mut worst = 0.0f64;
    for level in 0..mesh.n_levels() {
        let t = level_time(&mesh, level);
        for node in 0..mesh.len() {
            if mesh.space_tag(node) != SpaceTag::Inside {
                continue;
            }
            let x = mesh.coords(node);
            let st = crate::fd::Stencil::build(coeffs, t, &x, mesh.h(), DriftScheme::Centered);
            let l_neg_sq = crate::fd::apply_stencil(&st, &mesh, node, neg_sq.level(level));
            let lu = crate::fd::apply_stencil(&st, &mesh, node, u.level(level));
            let v = u.get(level, node);
            let c = coeffs.c(t, &x);
            let g = -2.0 * v * lu - c * v * v;
            let grad = der.grad[der.idx(level, node)];
            let f = 2.0 * coeffs.a(t, &x).quad(&grad, dim);
            worst = worst.max((l_neg_sq - g + f).abs());
        }
    }
    Ok(worst)
}
