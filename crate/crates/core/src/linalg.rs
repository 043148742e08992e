//! Dense 2x2 helpers, a sparse LU wrapper and a tridiagonal solver.

use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::Lu;
use faer::sparse::{SparseColMat, Triplet};
use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, LabError, Result};

/// Symmetric matrix of size `d <= 2`. In one dimension only `xx` is used.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sym2 {
    pub xx: f64,
    pub xy: f64,
    pub yy: f64,
}

impl Sym2 {
    pub const IDENTITY: Sym2 = Sym2 { xx: 1.0, xy: 0.0, yy: 1.0 };

    pub fn new(xx: f64, xy: f64, yy: f64) -> Self {
        Sym2 { xx, xy, yy }
    }

    pub fn scalar(a: f64) -> Self {
        Sym2 { xx: a, xy: 0.0, yy: a }
    }

    pub fn diag(xx: f64, yy: f64) -> Self {
        Sym2 { xx, xy: 0.0, yy }
    }

    pub fn scale(self, s: f64) -> Self {
        Sym2 { xx: s * self.xx, xy: s * self.xy, yy: s * self.yy }
    }

    pub fn trace(&self, dim: usize) -> f64 {
        if dim == 1 {
            self.xx
        } else {
            self.xx + self.yy
        }
    }

    /// Eigenvalues in ascending order (one value repeated in one dimension).
    pub fn eigenvalues(&self, dim: usize) -> [f64; 2] {
        if dim == 1 {
            return [self.xx, self.xx];
        }
        let mean = 0.5 * (self.xx + self.yy);
        let half_diff = 0.5 * (self.xx - self.yy);
        let rad = half_diff.hypot(self.xy);
        [mean - rad, mean + rad]
    }

    /// `a^{ij} xi^i xi^j`.
    pub fn quad(&self, xi: &[f64; 2], dim: usize) -> f64 {
        if dim == 1 {
            self.xx * xi[0] * xi[0]
        } else {
            self.xx * xi[0] * xi[0] + 2.0 * self.xy * xi[0] * xi[1] + self.yy * xi[1] * xi[1]
        }
    }

    /// `a^{ij} m_{ij}` (Frobenius inner product).
    pub fn contract(&self, m: &Sym2, dim: usize) -> f64 {
        if dim == 1 {
            self.xx * m.xx
        } else {
            self.xx * m.xx + 2.0 * self.xy * m.xy + self.yy * m.yy
        }
    }

    pub fn frobenius(&self, dim: usize) -> f64 {
        self.contract(self, dim).sqrt()
    }

    /// Principal square root of a positive semidefinite matrix.
    pub fn sqrt_psd(&self, dim: usize) -> Result<Sym2> {
        let [lo, _] = self.eigenvalues(dim);
        if lo < -1e-12 * (1.0 + self.xx.abs() + self.yy.abs()) {
            return invalid(format!("matrix not positive semidefinite (eigenvalue {lo})"));
        }
        if dim == 1 {
            return Ok(Sym2::scalar(self.xx.max(0.0).sqrt()));
        }
        let det = (self.xx * self.yy - self.xy * self.xy).max(0.0);
        let s = det.sqrt();
        let t = (self.xx + self.yy + 2.0 * s).sqrt();
        if t == 0.0 {
            return Ok(Sym2::new(0.0, 0.0, 0.0));
        }
        Ok(Sym2::new((self.xx + s) / t, self.xy / t, (self.yy + s) / t))
    }

    pub fn mul_vec(&self, v: &[f64; 2]) -> [f64; 2] {
        [self.xx * v[0] + self.xy * v[1], self.xy * v[0] + self.yy * v[1]]
    }
}

/// Eigenvalues of a general symmetric matrix by cyclic Jacobi rotations.
pub fn sym_eigenvalues(m: &[Vec<f64>]) -> Result<Vec<f64>> {
    let n = m.len();
    if m.iter().any(|row| row.len() != n) {
        return invalid("matrix must be square");
    }
    let scale = m.iter().flatten().fold(0.0f64, |acc, v| acc.max(v.abs())).max(1.0);
    for i in 0..n {
        for j in 0..i {
            if (m[i][j] - m[j][i]).abs() > 1e-12 * scale {
                return invalid(format!("matrix not symmetric at ({i}, {j})"));
            }
        }
    }
    let mut a: Vec<Vec<f64>> = m.to_vec();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j] * a[i][j])
            .sum();
        if off.sqrt() <= 1e-15 * scale {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| a[i][i]).collect();
    ev.sort_by(f64::total_cmp);
    Ok(ev)
}

/// Assembles a sparse matrix from triplets and keeps its LU factors.
pub struct SparseLu {
    n: usize,
    lu: Lu<usize, f64>,
}

impl SparseLu {
    pub fn factor(n: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        let trip: Vec<Triplet<usize, usize, f64>> =
            triplets.iter().map(|&(r, c, v)| Triplet::new(r, c, v)).collect();
        let mat = SparseColMat::<usize, f64>::try_new_from_triplets(n, n, &trip)
            .map_err(|e| LabError::Singular(format!("assembly failed: {e:?}")))?;
        let lu = mat.sp_lu().map_err(|e| LabError::Singular(format!("factorization failed: {e:?}")))?;
        Ok(SparseLu { n, lu })
    }

    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        if rhs.len() != self.n {
            return invalid("right-hand side has wrong length");
        }
        let b = Mat::<f64>::from_fn(self.n, 1, |i, _| rhs[i]);
        let x = self.lu.solve(&b);
        let out: Vec<f64> = (0..self.n).map(|i| x[(i, 0)]).collect();
        if out.iter().any(|v| !v.is_finite()) {
            return Err(LabError::Singular("solution has non-finite entries".into()));
        }
        Ok(out)
    }

    /// Solves for several right-hand sides with one factorization.
    pub fn solve_many(&self, rhs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        if rhs.is_empty() {
            return Ok(Vec::new());
        }
        if rhs.iter().any(|r| r.len() != self.n) {
            return invalid("right-hand side has wrong length");
        }
        let b = Mat::<f64>::from_fn(self.n, rhs.len(), |i, j| rhs[j][i]);
        let x = self.lu.solve(&b);
        let out: Vec<Vec<f64>> =
            (0..rhs.len()).map(|j| (0..self.n).map(|i| x[(i, j)]).collect()).collect();
        if out.iter().flatten().any(|v| !v.is_finite()) {
            return Err(LabError::Singular("solution has non-finite entries".into()));
        }
        Ok(out)
    }
}

/// Thomas algorithm for `lower[i] x[i-1] + diag[i] x[i] + upper[i] x[i+1] = rhs[i]`.
pub fn solve_tridiagonal(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &[f64]) -> Result<Vec<f64>> {
    let n = diag.len();
    if lower.len() != n || upper.len() != n || rhs.len() != n {
        return invalid("tridiagonal bands must have equal length");
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    let mut piv = diag[0];
    if piv.abs() < 1e-300 {
        return Err(LabError::Singular("zero pivot in tridiagonal solve".into()));
    }
    c[0] = upper[0] / piv;
    d[0] = rhs[0] / piv;
    for i in 1..n {
        piv = diag[i] - lower[i] * c[i - 1];
        if piv.abs() < 1e-300 {
            return Err(LabError::Singular(format!("zero pivot at row {i}")));
        }
        c[i] = upper[i] / piv;
        d[i] = (rhs[i] - lower[i] * d[i - 1]) / piv;
    }
    let mut x = vec![0.0; n];
    x[n - 1] = d[n - 1];
    for i in (0..n - 1).rev() {
        x[i] = d[i] - c[i] * x[i + 1];
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(LabError::Singular("tridiagonal solution not finite".into()));
    }
    Ok(x)
}

/// Neumaier compensated summation.
#[derive(Clone, Copy, Debug, Default)]
pub struct KahanSum {
    sum: f64,
    comp: f64,
}

impl KahanSum {
    pub fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.comp += (self.sum - t) + v;
        } else {
            self.comp += (v - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

pub fn compensated_sum<I: IntoIterator<Item = f64>>(it: I) -> f64 {
    let mut acc = KahanSum::default();
    for v in it {
        acc.add(v);
    }
    acc.value()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sqrt_squares_back() {
        let a = Sym2::new(0.75, -0.25, 0.75);
        let s = a.sqrt_psd(2).unwrap();
        let r0 = s.mul_vec(&[s.xx, s.xy]);
        let r1 = s.mul_vec(&[s.xy, s.yy]);
        assert!((r0[0] - a.xx).abs() < 1e-14);
        assert!((r0[1] - a.xy).abs() < 1e-14);
        assert!((r1[1] - a.yy).abs() < 1e-14);
    }

    #[test]
    fn jacobi_matches_closed_form() {
        let m = vec![vec![2.0, 0.3], vec![0.3, 0.5]];
        let ev = sym_eigenvalues(&m).unwrap();
        let cf = Sym2::new(2.0, 0.3, 0.5).eigenvalues(2);
        assert!((ev[0] - cf[0]).abs() < 1e-13 && (ev[1] - cf[1]).abs() < 1e-13);
        assert!(sym_eigenvalues(&[vec![1.0, 2.0], vec![0.0, 1.0]]).is_err());
    }

    #[test]
    fn tridiagonal_solves_poisson() {
        let n = 9;
        let h = 1.0 / (n + 1) as f64;
        let lower = vec![1.0; n];
        let upper = vec![1.0; n];
        let diag = vec![-2.0; n];
        let rhs = vec![-2.0 * h * h; n];
        let x = solve_tridiagonal(&lower, &diag, &upper, &rhs).unwrap();
        for (i, v) in x.iter().enumerate() {
            let s = (i + 1) as f64 * h;
            assert!((v - s * (1.0 - s)).abs() < 1e-13);
        }
    }

    #[test]
    fn sparse_lu_small() {
        let t = vec![(0, 0, 2.0), (0, 1, -1.0), (1, 0, -1.0), (1, 1, 2.0)];
        let lu = SparseLu::factor(2, &t).unwrap();
        let x = lu.solve(&[1.0, 1.0]).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-14 && (x[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let mut v = vec![1e16, 1.0, -1e16];
        v.extend(std::iter::repeat(1.0).take(10));
        assert_eq!(compensated_sum(v), 11.0);
    }
}
