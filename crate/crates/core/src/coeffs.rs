//! Coefficient fields `a, b, c` of `L = a^{ij} D_ij + b^i D_i - c`, the
//! operator classes they are claimed to belong to, and ellipticity checks.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Read;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::domain::Point;
use crate::error::{invalid, Result};
use crate::exact::degenerate_matrix;
use crate::linalg::{sym_eigenvalues, Sym2};

type MatFn = dyn Fn(f64, &Point) -> Sym2 + Send + Sync;
type VecFn = dyn Fn(f64, &Point) -> Point + Send + Sync;
type ScalarFn = dyn Fn(f64, &Point) -> f64 + Send + Sync;

/// Coefficients sampled pointwise at `(t, x)`; no averaging is ever applied.
#[derive(Clone)]
pub struct CoefficientField {
    dim: usize,
    a: Arc<MatFn>,
    b: Arc<VecFn>,
    c: Arc<ScalarFn>,
    time_dependent: bool,
    label: String,
}

impl fmt::Debug for CoefficientField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CoefficientField")
            .field("label", &self.label)
            .field("dim", &self.dim)
            .field("time_dependent", &self.time_dependent)
            .finish()
    }
}

impl CoefficientField {
    pub fn new<A, B, C>(dim: usize, a: A, b: B, c: C) -> Self
    where
        A: Fn(f64, &Point) -> Sym2 + Send + Sync + 'static,
        B: Fn(f64, &Point) -> Point + Send + Sync + 'static,
        C: Fn(f64, &Point) -> f64 + Send + Sync + 'static,
    {
        CoefficientField {
            dim,
            a: Arc::new(a),
            b: Arc::new(b),
            c: Arc::new(c),
            time_dependent: false,
            label: "custom".into(),
        }
    }

    pub fn time_dependent(mut self, flag: bool) -> Self {
        self.time_dependent = flag;
        self
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_time_dependent(&self) -> bool {
        self.time_dependent
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn a(&self, t: f64, x: &Point) -> Sym2 {
        (self.a)(t, x)
    }

    pub fn b(&self, t: f64, x: &Point) -> Point {
        let b = (self.b)(t, x);
        if self.dim == 1 {
            [b[0], 0.0]
        } else {
            b
        }
    }

    pub fn c(&self, t: f64, x: &Point) -> f64 {
        (self.c)(t, x)
    }

    pub fn b_norm(&self, t: f64, x: &Point) -> f64 {
        let b = self.b(t, x);
        b[0].hypot(b[1])
    }

    /// Replaces the drift, keeping `a` and `c`.
    pub fn with_drift<B>(mut self, b: B) -> Self
    where
        B: Fn(f64, &Point) -> Point + Send + Sync + 'static,
    {
        self.b = Arc::new(b);
        self
    }

    /// Replaces the zeroth-order coefficient.
    pub fn with_potential<C>(mut self, c: C) -> Self
    where
        C: Fn(f64, &Point) -> f64 + Send + Sync + 'static,
    {
        self.c = Arc::new(c);
        self
    }

    /// `a = I`, `b = 0`, `c = 0`.
    pub fn laplacian(dim: usize) -> Self {
        Self::new(dim, |_, _| Sym2::IDENTITY, |_, _| [0.0, 0.0], |_, _| 0.0).with_label("laplacian")
    }

    /// `a(x) = I - eps (x - s)(x - s)^T / |x - s|^2` in two dimensions, identity at `x = s`.
    pub fn radial_degenerate(eps: f64, shift: Point) -> Self {
        Self::new(
            2,
            move |_, x| degenerate_matrix(&[x[0] - shift[0], x[1] - shift[1]], eps),
            |_, _| [0.0, 0.0],
            |_, _| 0.0,
        )
        .with_label(format!("radial-degenerate({eps})"))
    }

    /// One-dimensional `a = 1`, `b(x) = -M sign x`, `c = 0`.
    pub fn sign_drift(m: f64) -> Self {
        Self::new(
            1,
            |_, _| Sym2::scalar(1.0),
            move |_, x| {
                let s = if x[0] > 0.0 {
                    1.0
                } else if x[0] < 0.0 {
                    -1.0
                } else {
                    0.0
                };
                [-m * s, 0.0]
            },
            |_, _| 0.0,
        )
        .with_label(format!("sign-drift({m})"))
    }

    /// Anisotropic checkerboard on squares of side `cell`:
    /// `diag(delta, 1/delta)` on even squares and `diag(1/delta, delta)` on odd ones.
    /// In one dimension the entries alternate between `delta` and `1/delta`.
    pub fn checkerboard(delta: f64, cell: f64, dim: usize) -> Self {
        Self::new(
            dim,
            move |_, x| {
                let ix = (x[0] / cell).floor() as i64;
                let iy = if dim == 2 { (x[1] / cell).floor() as i64 } else { 0 };
                if (ix + iy).rem_euclid(2) == 0 {
                    Sym2::diag(delta, 1.0 / delta)
                } else {
                    Sym2::diag(1.0 / delta, delta)
                }
            },
            |_, _| [0.0, 0.0],
            |_, _| 0.0,
        )
        .with_label(format!("checkerboard({delta})"))
    }

    /// Coefficients tabulated on a tensor grid, looked up at the nearest sample.
    ///
    /// The header names the columns: optional `t`, then `x` (and `y`), then the
    /// entries of `a` row-major, then `b`, then `c`.
    pub fn from_csv<R: Read>(reader: R) -> Result<Self> {
        TabulatedField::parse(reader).map(TabulatedField::into_field)
    }
}

/// Which bound the drift/trace constant `K` refers to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OperatorClass {
    /// `|b| + c <= K`.
    DriftBound,
    /// `tr a + 1 <= K` (parabolic resolvent class).
    ParabolicTrace,
    /// `tr a <= K` (elliptic resolvent class).
    EllipticTrace,
}

/// A coefficient field together with the ellipticity and bound it claims.
#[derive(Clone, Debug)]
pub struct OperatorSpec {
    pub coeffs: CoefficientField,
    pub delta: f64,
    pub k_bound: f64,
    pub class: OperatorClass,
}

impl OperatorSpec {
    pub fn new(coeffs: CoefficientField, delta: f64, k_bound: f64, class: OperatorClass) -> Result<Self> {
        if !(delta > 0.0 && delta <= 1.0) {
            return invalid(format!("ellipticity constant must lie in (0, 1], got {delta}"));
        }
        if !(k_bound >= 0.0) {
            return invalid(format!("bound K must be nonnegative, got {k_bound}"));
        }
        Ok(OperatorSpec { coeffs, delta, k_bound, class })
    }

    pub fn dim(&self) -> usize {
        self.coeffs.dim()
    }
}

/// True iff the symmetric matrix has all eigenvalues in `[delta, 1/delta]`.
pub fn check_s_delta(matrix: &[Vec<f64>], delta: f64) -> Result<bool> {
    if !(delta > 0.0) {
        return invalid("delta must be positive");
    }
    let ev = sym_eigenvalues(matrix)?;
    let tol = 1e-12;
    Ok(ev.iter().all(|&l| l >= delta - tol && l <= 1.0 / delta + tol))
}

pub(crate) fn sym2_in_s_delta(a: &Sym2, dim: usize, delta: f64) -> bool {
    let [lo, hi] = a.eigenvalues(dim);
    let tol = 1e-12;
    lo >= delta - tol && hi <= 1.0 / delta + tol
}

/// Worst-case statistics of a coefficient field over sample points.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ValidationReport {
    pub samples: usize,
    pub min_eigenvalue: f64,
    pub max_eigenvalue: f64,
    /// `max(lambda_max) / min(lambda_min)` over the samples.
    pub ellipticity_ratio: f64,
    pub max_b_plus_c: f64,
    pub max_trace_plus_one: f64,
    pub min_c: f64,
    pub elliptic: bool,
    pub bound_ok: bool,
    pub pass: bool,
    pub failures: Vec<String>,
}

/// Samples `spec` at `(t, x)` points and checks the class it claims.
pub fn validate_operator(spec: &OperatorSpec, sample_points: &[(f64, Point)]) -> ValidationReport {
    let dim = spec.dim();
    let mut min_ev = f64::INFINITY;
    let mut max_ev = f64::NEG_INFINITY;
    let mut max_bc = 0.0f64;
    let mut max_tr = f64::NEG_INFINITY;
    let mut min_c = f64::INFINITY;
    let mut failures = Vec::new();
    for &(t, x) in sample_points {
        let a = spec.coeffs.a(t, &x);
        let [lo, hi] = a.eigenvalues(dim);
        min_ev = min_ev.min(lo);
        max_ev = max_ev.max(hi);
        let c = spec.coeffs.c(t, &x);
        min_c = min_c.min(c);
        max_bc = max_bc.max(spec.coeffs.b_norm(t, &x) + c);
        max_tr = max_tr.max(a.trace(dim) + 1.0);
        if !sym2_in_s_delta(&a, dim, spec.delta) && failures.len() < 8 {
            failures.push(format!(
                "eigenvalues [{lo:.6}, {hi:.6}] outside [{}, {}] at t={t}, x={x:?}",
                spec.delta,
                1.0 / spec.delta
            ));
        }
    }
    let tol = 1e-12;
    let elliptic =
        min_ev >= spec.delta - tol && max_ev <= 1.0 / spec.delta + tol && min_c >= -tol;
    if min_c < -tol {
        failures.push(format!("c takes negative value {min_c}"));
    }
    let bound_ok = match spec.class {
        OperatorClass::DriftBound => max_bc <= spec.k_bound + tol,
        OperatorClass::ParabolicTrace => max_tr <= spec.k_bound + tol,
        OperatorClass::EllipticTrace => max_tr - 1.0 <= spec.k_bound + tol,
    };
    if !bound_ok {
        failures.push(format!("class bound K={} violated ({:?})", spec.k_bound, spec.class));
    }
    ValidationReport {
        samples: sample_points.len(),
        min_eigenvalue: min_ev,
        max_eigenvalue: max_ev,
        ellipticity_ratio: max_ev / min_ev,
        max_b_plus_c: max_bc,
        max_trace_plus_one: max_tr,
        min_c,
        elliptic,
        bound_ok,
        pass: elliptic && bound_ok && !sample_points.is_empty(),
        failures,
    }
}

struct TabulatedField {
    dim: usize,
    has_t: bool,
    axes: Vec<Vec<f64>>,
    index: BTreeMap<Vec<usize>, usize>,
    rows: Vec<(Sym2, Point, f64)>,
}

impl TabulatedField {
    fn parse<R: Read>(mut reader: R) -> Result<Self> {
        let mut text = String::new();
        reader.read_to_string(&mut text)?;
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header: Vec<String> = match lines.next() {
            Some(h) => h.split(',').map(|s| s.trim().to_ascii_lowercase()).collect(),
            None => return invalid("empty coefficient table"),
        };
        let has_t = header.first().map(|s| s == "t").unwrap_or(false);
        let ncoord = header.iter().filter(|s| *s == "t" || *s == "x" || *s == "y").count();
        let dim = ncoord - usize::from(has_t);
        let expected = match dim {
            1 => ncoord + 3,
            2 => ncoord + 4 + 2 + 1,
            _ => return invalid("coefficient table needs x or x,y columns"),
        };
        if header.len() != expected {
            return invalid(format!("expected {expected} columns for d={dim}, found {}", header.len()));
        }
        let mut raw: Vec<Vec<f64>> = Vec::new();
        for (lineno, line) in lines.enumerate() {
            let vals: std::result::Result<Vec<f64>, _> =
                line.split(',').map(|s| s.trim().parse::<f64>()).collect();
            let vals = match vals {
                Ok(v) if v.len() == expected => v,
                _ => return invalid(format!("malformed row {}", lineno + 2)),
            };
            raw.push(vals);
        }
        if raw.is_empty() {
            return invalid("coefficient table has no rows");
        }
        let mut axes: Vec<Vec<f64>> = Vec::new();
        for col in 0..ncoord {
            let mut v: Vec<f64> = raw.iter().map(|r| r[col]).collect();
            v.sort_by(f64::total_cmp);
            v.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * (1.0 + b.abs()));
            axes.push(v);
        }
        let mut index = BTreeMap::new();
        let mut rows = Vec::with_capacity(raw.len());
        for (r, vals) in raw.iter().enumerate() {
            let key: Vec<usize> = (0..ncoord).map(|c| nearest(&axes[c], vals[c])).collect();
            index.insert(key, r);
            let s = &vals[ncoord..];
            let (a, b, c) = if dim == 1 {
                (Sym2::scalar(s[0]), [s[1], 0.0], s[2])
            } else {
                if (s[1] - s[2]).abs() > 1e-12 * (1.0 + s[1].abs()) {
                    return invalid(format!("asymmetric a in row {}", r + 2));
                }
                (Sym2::new(s[0], s[1], s[3]), [s[4], s[5]], s[6])
            };
            rows.push((a, b, c));
        }
        Ok(TabulatedField { dim, has_t, axes, index, rows })
    }

    fn lookup(&self, t: f64, x: &Point) -> &(Sym2, Point, f64) {
        let mut key = Vec::with_capacity(self.axes.len());
        let mut c = 0;
        if self.has_t {
            key.push(nearest(&self.axes[0], t));
            c = 1;
        }
        for a in 0..self.dim {
            key.push(nearest(&self.axes[c + a], x[a]));
        }
        match self.index.get(&key) {
            Some(&r) => &self.rows[r],
            None => &self.rows[0],
        }
    }

    fn into_field(self) -> CoefficientField {
        let dim = self.dim;
        let has_t = self.has_t;
        let table = Arc::new(self);
        let (ta, tb, tc) = (table.clone(), table.clone(), table);
        CoefficientField::new(
            dim,
            move |t, x| ta.lookup(t, x).0,
            move |t, x| tb.lookup(t, x).1,
            move |t, x| tc.lookup(t, x).2,
        )
        .time_dependent(has_t)
        .with_label("tabulated")
    }
}

fn nearest(axis: &[f64], v: f64) -> usize {
    match axis.binary_search_by(|p| p.total_cmp(&v)) {
        Ok(i) => i,
        Err(0) => 0,
        Err(i) if i >= axis.len() => axis.len() - 1,
        Err(i) => {
            if (v - axis[i - 1]).abs() <= (axis[i] - v).abs() {
                i - 1
            } else {
                i
            }
        }
    }
}
