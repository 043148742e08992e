//! Midpoint quadrature for closures on boxes and on balls or cylinders.

use crate::domain::{cell_fraction, Domain, Point};
use crate::error::{invalid, Result};
use crate::fd::ScalarField;
use crate::linalg::KahanSum;

/// Midpoint rule on the cells `lo + (i + 1/2) h` of an axis-aligned box.
#[derive(Clone, Copy, Debug)]
pub struct CellQuadrature {
    pub dim: usize,
    pub lo: Point,
    pub h: f64,
    pub cells: [usize; 2],
}

impl CellQuadrature {
    /// Box `[lo, hi]` split into cells of side at most `h`.
    pub fn new(dim: usize, lo: Point, hi: Point, h: f64) -> Result<Self> {
        if !(1..=2).contains(&dim) {
            return invalid("dimension must be 1 or 2");
        }
        if !(h > 0.0) {
            return invalid("cell size must be positive");
        }
        let mut cells = [1usize; 2];
        for a in 0..dim {
            if !(hi[a] > lo[a]) {
                return invalid("box must have positive extent");
            }
            cells[a] = ((hi[a] - lo[a]) / h - 1e-9).ceil().max(1.0) as usize;
        }
        // Use one common step so that cells are squares.
        let step = (0..dim).map(|a| (hi[a] - lo[a]) / cells[a] as f64).fold(f64::INFINITY, f64::min);
        for a in 0..dim {
            cells[a] = ((hi[a] - lo[a]) / step).round() as usize;
        }
        Ok(CellQuadrature { dim, lo, h: step, cells })
    }

    pub fn cell_volume(&self) -> f64 {
        self.h.powi(self.dim as i32)
    }

    pub fn points(&self) -> impl Iterator<Item = Point> + '_ {
        let (nx, ny) = (self.cells[0], if self.dim == 2 { self.cells[1] } else { 1 });
        (0..ny).flat_map(move |j| {
            (0..nx).map(move |i| {
                let x = self.lo[0] + (i as f64 + 0.5) * self.h;
                let y = if self.dim == 2 { self.lo[1] + (j as f64 + 0.5) * self.h } else { 0.0 };
                [x, y]
            })
        })
    }

    /// `∫ f` over the box.
    pub fn integrate(&self, f: impl Fn(&Point) -> f64) -> f64 {
        let mut acc = KahanSum::default();
        for x in self.points() {
            acc.add(f(&x));
        }
        acc.value() * self.cell_volume()
    }
}

/// `∫_domain f` by the midpoint rule on `n` cells per diameter (and `n`
/// time cells for cylinders), boundary cells clipped by area fraction.
pub fn integrate_domain(domain: &Domain, f: &dyn ScalarField, n: usize) -> Result<f64> {
    if n == 0 {
        return invalid("need at least one cell");
    }
    let r = domain.radius;
    let lo = [domain.center[0] - r, domain.center[1] - r];
    let hi = [domain.center[0] + r, domain.center[1] + r];
    let q = CellQuadrature::new(domain.dim, lo, hi, 2.0 * r / n as f64)?;
    let times: Vec<(f64, f64)> = if domain.is_cylinder() {
        let k = domain.height / n as f64;
        (0..n).map(|i| (domain.t0 + (i as f64 + 0.5) * k, k)).collect()
    } else {
        vec![(0.0, 1.0)]
    };
    let weights: Vec<(Point, f64)> = q
        .points()
        .map(|x| (x, cell_fraction(domain, &x, q.h)))
        .filter(|(_, w)| *w > 0.0)
        .collect();
    let mut acc = KahanSum::default();
    for &(t, tw) in &times {
        for (x, w) in &weights {
            acc.add(tw * w * f.eval(t, x));
        }
    }
    Ok(acc.value() * q.cell_volume())
}
