//! Drift splitting, the truncation level `μ_θ(λ)`, `ν_θ`, the root `λ(μ)`
//! of `μ = Kλ + μ_θ(λ)√λ`, and empirical resolvent-norm estimates.

use std::io::Write;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::coeffs::OperatorSpec;
use crate::domain::{Domain, GridSpec, Mesh, Point};
use crate::error::{invalid, LabError, Result};
use crate::estimates::lp_norm;
use crate::fd::{Resolvent, ScalarField, SolveOptions};
use crate::linalg::KahanSum;
use crate::output::CsvTable;
use crate::quadrature::CellQuadrature;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Branch {
    Elliptic,
    Parabolic,
}

impl Branch {
    /// Integrability exponent of the excess drift: `d` or `d + 1`.
    pub fn q_exp(self, dim: usize) -> f64 {
        match self {
            Branch::Elliptic => dim as f64,
            Branch::Parabolic => dim as f64 + 1.0,
        }
    }
}

/// `b = b1 + b2` with `b1 = b` where `|b| <= μ` and `b1 = μ b/|b|` elsewhere.
pub fn split_drift(b: Point, mu_cut: f64) -> Result<(Point, Point)> {
    if !(mu_cut >= 0.0) {
        return invalid(format!("truncation level must be nonnegative, got {mu_cut}"));
    }
    let norm = b[0].hypot(b[1]);
    if norm <= mu_cut {
        return Ok((b, [0.0, 0.0]));
    }
    let s = mu_cut / norm;
    let b2 = [b[0] - b[0] * s, b[1] - b[1] * s];
    // Recovering b1 from b2 makes b1 + b2 == b in floating point.
    Ok(([b[0] - b2[0], b[1] - b2[1]], b2))
}

/// Values of `|b|` with quadrature weights, or a constant `|b| ≡ M` on all of space.
#[derive(Clone, Debug)]
pub enum DriftProfile {
    Constant(f64),
    Samples(Vec<(f64, f64)>),
}

impl DriftProfile {
    /// Samples `|b|` at the cell centres of `quad`.
    pub fn from_box(quad: &CellQuadrature, b_norm: impl Fn(&Point) -> f64) -> Self {
        let w = quad.cell_volume();
        DriftProfile::Samples(quad.points().map(|x| (b_norm(&x).abs(), w)).collect())
    }

    /// Samples `|b(t, x)|` on `quad` times `nt` midpoint cells of `[t0, t1]`.
    pub fn from_space_time(
        quad: &CellQuadrature,
        t0: f64,
        t1: f64,
        nt: usize,
        b_norm: impl Fn(f64, &Point) -> f64,
    ) -> Result<Self> {
        if nt == 0 || !(t1 > t0) {
            return invalid("need a nonempty time interval");
        }
        let k = (t1 - t0) / nt as f64;
        let w = quad.cell_volume() * k;
        let pts: Vec<Point> = quad.points().collect();
        let mut out = Vec::with_capacity(pts.len() * nt);
        for i in 0..nt {
            let t = t0 + (i as f64 + 0.5) * k;
            out.extend(pts.iter().map(|x| (b_norm(t, x).abs(), w)));
        }
        Ok(DriftProfile::Samples(out))
    }

    /// `‖(|b| - μ)_+‖_{L_q}`.
    pub fn excess_norm(&self, mu: f64, q: f64) -> f64 {
        match self {
            DriftProfile::Constant(m) => {
                if mu >= *m {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
            DriftProfile::Samples(s) => {
                let mut acc = KahanSum::default();
                for &(v, w) in s {
                    if v > mu {
                        acc.add(w * (v - mu).powf(q));
                    }
                }
                acc.value().powf(1.0 / q)
            }
        }
    }

    /// `∫ |b|^q`.
    pub fn power_integral(&self, q: f64) -> f64 {
        match self {
            DriftProfile::Constant(m) if *m == 0.0 => 0.0,
            DriftProfile::Constant(_) => f64::INFINITY,
            DriftProfile::Samples(s) => {
                let mut acc = KahanSum::default();
                s.iter().for_each(|&(v, w)| acc.add(w * v.powf(q)));
                acc.value()
            }
        }
    }

    pub fn sup(&self) -> f64 {
        match self {
            DriftProfile::Constant(m) => *m,
            DriftProfile::Samples(s) => s.iter().map(|p| p.0).fold(0.0, f64::max),
        }
    }
}

/// `inf{μ >= 0 : ‖(|b| - μ)_+‖_{L_q} <= target}` with `q = d + 1` and target
/// `θ λ^{-1/(2d+2)}` (parabolic) or `q = d` and target `θ` (elliptic).
pub fn mu_theta(profile: &DriftProfile, theta: f64, lambda: f64, branch: Branch, dim: usize) -> Result<f64> {
    if !(theta > 0.0) || !(lambda > 0.0) {
        return invalid("theta and lambda must be positive");
    }
    let q = branch.q_exp(dim);
    let target = match branch {
        Branch::Parabolic => theta * lambda.powf(-1.0 / (2.0 * dim as f64 + 2.0)),
        Branch::Elliptic => theta,
    };
    if profile.excess_norm(0.0, q) <= target {
        return Ok(0.0);
    }
    let (mut lo, mut hi) = (0.0, profile.sup());
    if !hi.is_finite() {
        return Err(LabError::Degenerate("drift is unbounded on the sample set".into()));
    }
    if let DriftProfile::Constant(m) = profile {
        return Ok(*m);
    }
    let tol = 1e-12 * (1.0 + hi);
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if profile.excess_norm(mid, q) <= target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// `ν_θ = ‖b2‖_{L_{d+2}}^{d+2} θ^{-(d+1)}`.
pub fn nu_theta(b2: &DriftProfile, theta: f64, dim: usize) -> Result<f64> {
    if !(theta > 0.0) {
        return invalid("theta must be positive");
    }
    let d = dim as f64;
    let v = b2.power_integral(d + 2.0);
    if !v.is_finite() {
        return Err(LabError::Degenerate("b2 is not in L_{d+2}".into()));
    }
    Ok(v * theta.powf(-(d + 1.0)))
}

/// Root `λ` of `μ = Kλ + μ_θ(λ)√λ`, whose right side increases from 0.
pub fn lambda_of_mu(k: f64, mu_theta_fn: &dyn Fn(f64) -> f64, mu: f64) -> Result<f64> {
    if !(mu > 0.0) || !mu.is_finite() {
        return invalid(format!("mu must be positive, got {mu}"));
    }
    if !(k >= 0.0) {
        return invalid("K must be nonnegative");
    }
    let g = |l: f64| k * l + mu_theta_fn(l) * l.sqrt();
    let mut hi = 1.0;
    let mut doublings = 0;
    while g(hi) < mu {
        hi *= 2.0;
        doublings += 1;
        if doublings > 2000 || !hi.is_finite() {
            return Err(LabError::Degenerate("Kλ + μ_θ(λ)√λ never reaches μ".into()));
        }
    }
    // g(0) = 0 < μ, so 0 is always a valid lower end.
    let mut lo = 0.0;
    for _ in 0..400 {
        if hi - lo <= 1e-15 * hi {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if g(mid) < mu {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Lower bound on `λ(μ)` in the regime `μ_θ(λ) = ν√λ + M`:
/// `μ/(K+ν+1)` when `μ >= (K+ν+1)M²`, else `μ²/((K+ν+1)² M²)`.
pub fn corollary_lower_bound(k: f64, nu: f64, m: f64, mu: f64) -> f64 {
    let s = k + nu + 1.0;
    if mu >= s * m * m {
        mu / s
    } else {
        mu * mu / (s * s * m * m)
    }
}

/// A bank of nonnegative right-hand sides.
pub struct TestBank {
    pub members: Vec<(String, Box<dyn ScalarField + Send>)>,
}

impl TestBank {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Sixteen members around `center` on length `scale`: hats of five
    /// widths, shifted hats, ball indicators, oscillatory envelopes and a
    /// Gaussian.
    pub fn standard(center: Point, scale: f64) -> Self {
        let mut members: Vec<(String, Box<dyn ScalarField + Send>)> = Vec::new();
        for w in [0.125, 0.25, 0.5, 1.0, 2.0] {
            members.push((format!("hat(w={w})"), Box::new(hat(center, w * scale))));
        }
        for s in [-2.0, -1.0, 1.0, 2.0] {
            let c = [center[0] + s * scale, center[1]];
            members.push((format!("hat(shift={s})"), Box::new(hat(c, scale))));
        }
        for w in [0.5, 1.0, 2.0] {
            let r = w * scale;
            members.push((
                format!("indicator(r={w})"),
                Box::new(move |_: f64, x: &Point| if dist(x, &center) < r { 1.0 } else { 0.0 }),
            ));
        }
        for kf in [1.0, 2.0, 4.0] {
            let base = hat(center, 2.0 * scale);
            let freq = kf * std::f64::consts::PI / scale;
            members.push((
                format!("oscillatory(k={kf})"),
                Box::new(move |t: f64, x: &Point| base(t, x) * (1.0 + (freq * (x[0] - center[0])).cos())),
            ));
        }
        members.push((
            "gaussian".into(),
            Box::new(move |_: f64, x: &Point| (-(dist(x, &center) / scale).powi(2)).exp()),
        ));
        TestBank { members }
    }

    /// Narrow hats at `center` approximating a point mass.
    pub fn point_masses(center: Point, widths: &[f64]) -> Self {
        TestBank {
            members: widths
                .iter()
                .map(|&w| (format!("hat(w={w})"), Box::new(hat(center, w)) as Box<dyn ScalarField + Send>))
                .collect(),
        }
    }
}

fn dist(x: &Point, c: &Point) -> f64 {
    (x[0] - c[0]).hypot(x[1] - c[1])
}

/// `max(0, 1 - |x - c|/w)`.
pub fn hat(c: Point, w: f64) -> impl Fn(f64, &Point) -> f64 + Sync + Send + Clone {
    move |_, x| (1.0 - dist(x, &c) / w).max(0.0)
}

/// Ratio `‖(R_μ f)_+‖_p / ‖f‖_p` for each bank member.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NormEstimate {
    pub mu: f64,
    /// Largest ratio over the bank: a lower bound on the operator norm.
    pub n_hat: f64,
    pub best: String,
    pub norm_u: f64,
    pub norm_f: f64,
    /// Bank members whose solution had a negative part.
    pub negative_parts: Vec<String>,
    pub monotone_scheme: bool,
}

/// Lower bound `max_f ‖(R_μ f)_+‖_p / ‖f‖_p` on the resolvent norm over a test bank.
pub fn estimate_operator_norm(
    spec: &OperatorSpec,
    mu: f64,
    p: f64,
    domain: &Domain,
    gridspec: &GridSpec,
    bank: &TestBank,
) -> Result<NormEstimate> {
    if bank.is_empty() {
        return invalid("test bank is empty");
    }
    if !(p >= 1.0) {
        return invalid(format!("p must be at least 1, got {p}"));
    }
    let mesh = Arc::new(Mesh::new(domain, gridspec)?);
    let res = Resolvent::new(spec, mu, mesh, SolveOptions::default())?;
    let fields: Vec<&dyn ScalarField> = bank.members.iter().map(|(_, f)| f.as_ref() as &dyn ScalarField).collect();
    let sols = res.apply_many(&fields)?;
    let mut best: Option<NormEstimate> = None;
    let mut negative_parts = Vec::new();
    let mut monotone = true;
    for ((name, f), (u, rep)) in bank.members.iter().zip(&sols) {
        monotone &= rep.monotone_scheme;
        let floor = -1e-14 * u.max_abs();
        if u.values().iter().any(|&v| v < floor) {
            negative_parts.push(name.clone());
        }
        let fg = crate::fd::GridFunction::from_field(u.mesh().clone(), f.as_ref());
        if fg.values().iter().any(|&v| v < 0.0) {
            return invalid(format!("bank member {name} is negative somewhere"));
        }
        let norm_f = lp_norm(&fg, p, domain)?;
        if norm_f == 0.0 {
            return Err(LabError::Degenerate(format!("bank member {name} vanishes on the grid")));
        }
        let norm_u = lp_norm(&u.map(|v| v.max(0.0)), p, domain)?;
        let ratio = norm_u / norm_f;
        if best.as_ref().is_none_or(|b| ratio > b.n_hat) {
            best = Some(NormEstimate {
                mu,
                n_hat: ratio,
                best: name.clone(),
                norm_u,
                norm_f,
                negative_parts: Vec::new(),
                monotone_scheme: true,
            });
        }
    }
    let mut est = best.expect("bank is nonempty");
    est.negative_parts = negative_parts;
    est.monotone_scheme = monotone;
    Ok(est)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DichotomyRow {
    pub mu: f64,
    pub norm_u: f64,
    pub norm_f: f64,
    pub mu_ratio: f64,
    pub mu2_ratio: f64,
    pub above_threshold: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DichotomyReport {
    pub m: f64,
    pub k: f64,
    /// `(K + 1) M²`.
    pub threshold: f64,
    pub rows: Vec<DichotomyRow>,
    /// `max μ·ratio` over rows at or above the threshold.
    pub max_mu_ratio_above: Option<f64>,
    /// `max μ²·ratio / M²` over rows below the threshold.
    pub max_mu2_ratio_below: Option<f64>,
}

impl DichotomyReport {
    pub fn to_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut t = CsvTable::new(["mu", "norm_u", "norm_f", "mu_ratio", "mu2_ratio"]);
        for r in &self.rows {
            t.push_numbers(&[r.mu, r.norm_u, r.norm_f, r.mu_ratio, r.mu2_ratio])?;
        }
        t.write(w)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// How the mesh for each `μ` is chosen.
pub type MeshPlan<'a> = &'a dyn Fn(f64) -> Result<(Domain, GridSpec)>;

/// Records `μ·‖u_+‖/‖f‖` and `μ²·‖u_+‖/‖f‖` for `u = R_μ f` over a bank,
/// for every `μ`, with `M = sup|b|` and threshold `(K+1)M²`.
pub fn check_dichotomy(
    spec: &OperatorSpec,
    p: f64,
    m: f64,
    mu_list: &[f64],
    plan: MeshPlan<'_>,
    bank: &dyn Fn(f64) -> TestBank,
) -> Result<DichotomyReport> {
    let k = spec.k_bound;
    let threshold = (k + 1.0) * m * m;
    let mut rows = Vec::new();
    for &mu in mu_list {
        let (domain, gs) = plan(mu)?;
        let est = estimate_operator_norm(spec, mu, p, &domain, &gs, &bank(mu))?;
        rows.push(DichotomyRow {
            mu,
            norm_u: est.norm_u,
            norm_f: est.norm_f,
            mu_ratio: mu * est.n_hat,
            mu2_ratio: mu * mu * est.n_hat,
            above_threshold: mu >= threshold,
        });
    }
    let max_of = |it: Vec<f64>| it.into_iter().reduce(f64::max);
    let max_mu_ratio_above = max_of(rows.iter().filter(|r| r.above_threshold).map(|r| r.mu_ratio).collect());
    let max_mu2_ratio_below = if m > 0.0 {
        max_of(rows.iter().filter(|r| !r.above_threshold).map(|r| r.mu2_ratio / (m * m)).collect())
    } else {
        None
    };
    Ok(DichotomyReport { m, k, threshold, rows, max_mu_ratio_above, max_mu2_ratio_below })
}

/// Mesh plan for one-dimensional problems resolving a length scale `ℓ(μ)`:
/// the interval `(-R, R)` with `R = span·ℓ` and `h = ℓ/per_scale`, `h <= h_max`.
pub fn scaled_plan(
    scale_of_mu: impl Fn(f64) -> Result<f64>,
    span: f64,
    per_scale: f64,
    h_max: f64,
) -> impl Fn(f64) -> Result<(Domain, GridSpec)> {
    move |mu| {
        let len = scale_of_mu(mu)?;
        let h = (len / per_scale).min(h_max);
        // Snap R to the lattice so the ring sits symmetrically.
        let r = ((span * len) / h).ceil() * h + 0.5 * h;
        Ok((Domain::ball(r, &[0.0])?, GridSpec::new(1, h)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeffs::{CoefficientField, OperatorClass};
    use crate::exact::resolvent_l1_norm_56;

    fn unit_bump() -> (CellQuadrature, impl Fn(&Point) -> f64) {
        let q = CellQuadrature::new(1, [-1.0, 0.0], [3.0, 0.0], 1.0 / 128.0).unwrap();
        (q, |x: &Point| if (0.0..=1.0).contains(&x[0]) { 2.0 } else { 0.0 })
    }

    #[test]
    fn split_examples() {
        assert_eq!(split_drift([3.0, 0.0], 2.0).unwrap(), ([2.0, 0.0], [1.0, 0.0]));
        assert_eq!(split_drift([3.0, 4.0], 5.0).unwrap(), ([3.0, 4.0], [0.0, 0.0]));
        let (b1, b2) = split_drift([3.0, 4.0], 2.5).unwrap();
        assert!((b1[0] - 1.5).abs() < 1e-15 && (b1[1] - 2.0).abs() < 1e-15);
        assert!((b2[0] - 1.5).abs() < 1e-15 && (b2[1] - 2.0).abs() < 1e-15);
        assert!(split_drift([1.0, 0.0], -1.0).is_err());
    }

    #[test]
    fn mu_theta_examples() {
        let (q, b) = unit_bump();
        let prof = DriftProfile::from_box(&q, b);
        let v = mu_theta(&prof, 0.5, 1.0, Branch::Parabolic, 1).unwrap();
        assert!((v - 1.5).abs() < 1e-9, "{v}");
        assert_eq!(mu_theta(&prof, 1e9, 1.0, Branch::Parabolic, 1).unwrap(), 0.0);
        assert_eq!(mu_theta(&DriftProfile::Constant(3.0), 0.1, 2.0, Branch::Parabolic, 2).unwrap(), 3.0);
        assert_eq!(mu_theta(&DriftProfile::Constant(3.0), 1e9, 2.0, Branch::Elliptic, 2).unwrap(), 3.0);
        assert!(mu_theta(&prof, 0.0, 1.0, Branch::Elliptic, 1).is_err());
    }

    #[test]
    fn nu_theta_examples() {
        let q = CellQuadrature::new(1, [-1.0, 0.0], [3.0, 0.0], 1.0 / 128.0).unwrap();
        let ind = DriftProfile::from_box(&q, |x| if (0.0..=1.0).contains(&x[0]) { 1.0 } else { 0.0 });
        assert!((nu_theta(&ind, 1.0, 1).unwrap() - 1.0).abs() < 1e-12);
        let zero = DriftProfile::from_box(&q, |_| 0.0);
        assert_eq!(nu_theta(&zero, 1.0, 1).unwrap(), 0.0);
    }

    #[test]
    fn lambda_examples() {
        for mu in [1e-3, 0.7, 5.0, 1e3] {
            let l = lambda_of_mu(1.0, &|_| 0.0, mu).unwrap();
            assert!((l - mu).abs() <= 1e-10 * mu);
            let m = 3.0;
            let l = lambda_of_mu(0.0, &|_| m, mu).unwrap();
            assert!((l - mu * mu / (m * m)).abs() <= 1e-10 * l);
        }
        assert!(matches!(lambda_of_mu(0.0, &|_| 0.0, 1.0), Err(LabError::Degenerate(_))));
    }

    #[test]
    fn heat_resolvent_norm_is_inverse_mu() {
        let spec = OperatorSpec::new(CoefficientField::laplacian(1), 1.0, 0.0, OperatorClass::DriftBound).unwrap();
        let mu = 4.0;
        let dom = Domain::ball(12.0, &[0.0]).unwrap();
        let gs = GridSpec::new(1, 1.0 / 64.0).unwrap();
        let est = estimate_operator_norm(&spec, mu, 1.0, &dom, &gs, &TestBank::standard([0.0, 0.0], 0.5)).unwrap();
        assert!((est.n_hat * mu - 1.0).abs() < 1e-3, "{}", est.n_hat * mu);
        assert!(est.negative_parts.is_empty() && est.monotone_scheme);
        let est2 = estimate_operator_norm(&spec, 2.0 * mu, 1.0, &dom, &gs, &TestBank::standard([0.0, 0.0], 0.5)).unwrap();
        assert!(est2.n_hat <= est.n_hat);
    }

    #[test]
    fn sign_drift_point_mass_limit() {
        let (m, mu) = (3.0, 4.0);
        let spec = OperatorSpec::new(CoefficientField::sign_drift(m), 1.0, m, OperatorClass::DriftBound).unwrap();
        let exact = resolvent_l1_norm_56(m, mu).unwrap();
        let mut prev = 0.0;
        for w in [0.04, 0.02, 0.01] {
            let (dom, gs) = scaled_plan(|_| Ok(w), 25.0 / w, 10.0, 1.0)(mu).unwrap();
            let est = estimate_operator_norm(&spec, mu, 1.0, &dom, &gs, &TestBank::point_masses([0.0, 0.0], &[w])).unwrap();
            // Narrower bumps approach the point-mass value from below.
            assert!(est.n_hat > prev && est.n_hat < exact);
            prev = est.n_hat;
        }
        assert!((prev - exact).abs() < 0.015 * exact, "{prev} vs {exact}");
    }

    #[test]
    fn corollary_bound_holds_in_regime() {
        let (k, nu, m) = (1.0, 0.5, 2.0);
        for i in -30..=30 {
            let mu = 10f64.powf(i as f64 / 10.0);
            let l = lambda_of_mu(k, &|l: f64| nu * l.sqrt() + m, mu).unwrap();
            assert!(l >= corollary_lower_bound(k, nu, m, mu) * (1.0 - 1e-12));
        }
    }
}
