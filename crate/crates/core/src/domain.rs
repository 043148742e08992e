//! Balls, parabolic cylinders and the tensor lattices that discretize them.
//!
//! All meshes live on the global lattice `x = i·h`, so meshes built for
//! different domains with the same step share node positions. A node is an
//! unknown when it lies strictly inside the ball; the ring of outside nodes
//! touching an unknown carries Dirichlet data (nearest-node snapping of the
//! boundary).

use serde::{Deserialize, Serialize};

use crate::error::{invalid, LabError, Result};

/// Spatial point. In one dimension the second coordinate is ignored and kept at 0.
pub type Point = [f64; 2];

const REL_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DomainKind {
    Ball,
    Cylinder,
}

/// A ball `B_r + c` or a cylinder `(t0, t0 + rho) x (B_r + c)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    pub kind: DomainKind,
    pub dim: usize,
    pub radius: f64,
    /// Cylinder height; zero for balls.
    pub height: f64,
    pub center: Point,
    /// Time origin; zero for balls.
    pub t0: f64,
}

/// Continuum classification of a space-time point relative to a domain.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PointClass {
    Interior,
    /// `∂B_r` of a ball.
    Boundary,
    /// `[0, rho] x ∂B_r` of a cylinder.
    Lateral,
    /// `{rho} x B_r`, including its edge.
    Terminal,
    /// `{0} x B_r`: on the topological boundary but not the parabolic one.
    Initial,
    Outside,
}

impl PointClass {
    pub fn in_parabolic_boundary(self) -> bool {
        matches!(self, PointClass::Boundary | PointClass::Lateral | PointClass::Terminal)
    }
}

/// Builds a domain from its kind, radius, cylinder height and shift.
///
/// For a ball the shift is the center (its length fixes `d`); for a cylinder
/// the shift is `(t, x)`, so `(1, 0)` with `r = rho = 1` gives `C_{1,1}(1, 0)`.
pub fn make_domain(kind: DomainKind, r: f64, rho: f64, shift: &[f64]) -> Result<Domain> {
    match kind {
        DomainKind::Ball => Domain::ball(r, shift),
        DomainKind::Cylinder => {
            if shift.is_empty() {
                return invalid("cylinder shift must be (t, x)");
            }
            Domain::cylinder(rho, r, shift[0], &shift[1..])
        }
    }
}

fn point_from(x: &[f64]) -> Result<(usize, Point)> {
    match x.len() {
        1 => Ok((1, [x[0], 0.0])),
        2 => Ok((2, [x[0], x[1]])),
        d => invalid(format!("dimension {d} unsupported (d must be 1 or 2)")),
    }
}

impl Domain {
    pub fn ball(r: f64, center: &[f64]) -> Result<Self> {
        if !(r > 0.0) || !r.is_finite() {
            return invalid(format!("radius must be positive, got {r}"));
        }
        let (dim, center) = point_from(center)?;
        Ok(Domain { kind: DomainKind::Ball, dim, radius: r, height: 0.0, center, t0: 0.0 })
    }

    pub fn cylinder(rho: f64, r: f64, t0: f64, center: &[f64]) -> Result<Self> {
        if !(r > 0.0) || !r.is_finite() {
            return invalid(format!("radius must be positive, got {r}"));
        }
        if !(rho > 0.0) || !rho.is_finite() {
            return invalid(format!("cylinder height must be positive, got {rho}"));
        }
        let (dim, center) = point_from(center)?;
        Ok(Domain { kind: DomainKind::Cylinder, dim, radius: r, height: rho, center, t0 })
    }

    /// `C_r = C_{r^2, r}` shifted to `(t0, center)`.
    pub fn standard_cylinder(r: f64, t0: f64, center: &[f64]) -> Result<Self> {
        Self::cylinder(r * r, r, t0, center)
    }

    pub fn is_cylinder(&self) -> bool {
        self.kind == DomainKind::Cylinder
    }

    pub fn t_end(&self) -> f64 {
        self.t0 + self.height
    }

    pub fn spatial_distance(&self, x: &Point) -> f64 {
        let dx = x[0] - self.center[0];
        let dy = if self.dim == 2 { x[1] - self.center[1] } else { 0.0 };
        (dx * dx + dy * dy).sqrt()
    }

    /// Signed distance to the spatial sphere, positive inside.
    pub fn depth(&self, x: &Point) -> f64 {
        self.radius - self.spatial_distance(x)
    }

    pub fn contains_space(&self, x: &Point) -> bool {
        self.spatial_distance(x) < self.radius * (1.0 - REL_TOL)
    }

    pub fn contains_space_closed(&self, x: &Point) -> bool {
        self.spatial_distance(x) <= self.radius * (1.0 + REL_TOL)
    }

    /// Open-set membership. The time argument is ignored for balls.
    pub fn contains(&self, t: f64, x: &Point) -> bool {
        if !self.contains_space(x) {
            return false;
        }
        match self.kind {
            DomainKind::Ball => true,
            DomainKind::Cylinder => {
                let tol = REL_TOL * self.height.max(1.0);
                t > self.t0 + tol && t < self.t_end() - tol
            }
        }
    }

    pub fn classify(&self, t: f64, x: &Point) -> PointClass {
        let dist = self.spatial_distance(x);
        let tol_x = REL_TOL * self.radius.max(1.0);
        let inside_x = dist < self.radius - tol_x;
        let on_sphere = (dist - self.radius).abs() <= tol_x;
        match self.kind {
            DomainKind::Ball => {
                if inside_x {
                    PointClass::Interior
                } else if on_sphere {
                    PointClass::Boundary
                } else {
                    PointClass::Outside
                }
            }
            DomainKind::Cylinder => {
                let tol_t = REL_TOL * self.height.max(1.0);
                let at_end = (t - self.t_end()).abs() <= tol_t;
                let at_start = (t - self.t0).abs() <= tol_t;
                let inside_t = t > self.t0 + tol_t && t < self.t_end() - tol_t;
                if !(inside_x || on_sphere) || !(inside_t || at_end || at_start) {
                    PointClass::Outside
                } else if at_end {
                    PointClass::Terminal
                } else if on_sphere {
                    PointClass::Lateral
                } else if at_start {
                    PointClass::Initial
                } else {
                    PointClass::Interior
                }
            }
        }
    }

    pub fn spatial_measure(&self) -> f64 {
        match self.dim {
            1 => 2.0 * self.radius,
            _ => std::f64::consts::PI * self.radius * self.radius,
        }
    }

    /// Lebesgue measure in `R^d` (balls) or `R^{d+1}` (cylinders).
    pub fn measure(&self) -> f64 {
        match self.kind {
            DomainKind::Ball => self.spatial_measure(),
            DomainKind::Cylinder => self.height * self.spatial_measure(),
        }
    }

    /// Default start point of a diffusion: the ball center, or the cylinder origin.
    pub fn start_point(&self) -> (f64, Point) {
        (self.t0, self.center)
    }
}

/// Discretization parameters shared by solvers and simulators.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub dim: usize,
    /// Driving-noise dimension for SDE use; only `noise_dim == dim` is exercised.
    pub noise_dim: usize,
    pub h: f64,
    /// Time step, required for cylinders.
    pub k: Option<f64>,
}

impl GridSpec {
    pub fn new(dim: usize, h: f64) -> Result<Self> {
        if dim != 1 && dim != 2 {
            return invalid(format!("dimension {dim} unsupported"));
        }
        if !(h > 0.0) || !h.is_finite() {
            return invalid(format!("spatial step must be positive, got {h}"));
        }
        Ok(GridSpec { dim, noise_dim: dim, h, k: None })
    }

    pub fn parabolic(dim: usize, h: f64, k: f64) -> Result<Self> {
        if !(k > 0.0) || !k.is_finite() {
            return invalid(format!("time step must be positive, got {k}"));
        }
        Ok(GridSpec { k: Some(k), ..Self::new(dim, h)? })
    }

    pub fn with_noise_dim(mut self, noise_dim: usize) -> Result<Self> {
        if noise_dim < self.dim {
            return invalid("noise dimension must be at least the spatial dimension");
        }
        self.noise_dim = noise_dim;
        Ok(self)
    }
}

/// Tag of a mesh node. Space-time meshes use `Lateral`/`Terminal`/`Initial`,
/// ball meshes use `Boundary`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeTag {
    Interior,
    Boundary,
    Lateral,
    Terminal,
    Initial,
    Outside,
}

impl NodeTag {
    pub fn in_parabolic_boundary(self) -> bool {
        matches!(self, NodeTag::Boundary | NodeTag::Lateral | NodeTag::Terminal)
    }

    pub fn has_data(self) -> bool {
        self != NodeTag::Outside
    }
}

/// Spatial role of a lattice node with respect to the ball.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpaceTag {
    Inside,
    Ring,
    Outside,
}

/// A tensor lattice covering a domain closure, with every node tagged.
#[derive(Clone, Debug)]
pub struct Mesh {
    pub domain: Domain,
    pub spec: GridSpec,
    /// Lattice index of the first node on each axis.
    lo: [i64; 2],
    /// Node count per axis (`n[1] == 1` in one dimension).
    n: [usize; 2],
    space: Vec<SpaceTag>,
    times: Vec<f64>,
}

/// Tags every lattice node of `gridspec` relative to `domain`.
pub fn classify_boundary(domain: &Domain, gridspec: &GridSpec) -> Result<Mesh> {
    Mesh::new(domain, gridspec)
}

impl Mesh {
    pub fn new(domain: &Domain, spec: &GridSpec) -> Result<Self> {
        if domain.dim != spec.dim {
            return Err(LabError::GridMismatch(format!(
                "domain has dimension {} but grid has {}",
                domain.dim, spec.dim
            )));
        }
        let h = spec.h;
        if h >= domain.radius {
            return Err(LabError::GridMismatch(format!(
                "step {h} does not resolve radius {}",
                domain.radius
            )));
        }
        let mut lo = [0i64; 2];
        let mut n = [1usize; 2];
        for a in 0..domain.dim {
            let first = ((domain.center[a] - domain.radius) / h).floor() as i64 - 1;
            let last = ((domain.center[a] + domain.radius) / h).ceil() as i64 + 1;
            lo[a] = first;
            n[a] = (last - first + 1) as usize;
        }
        let times = match domain.kind {
            DomainKind::Ball => Vec::new(),
            DomainKind::Cylinder => {
                let k = spec.k.ok_or_else(|| {
                    LabError::GridMismatch("cylinder requires a time step".into())
                })?;
                let steps = (domain.height / k).round();
                if steps < 1.0 || ((steps * k - domain.height).abs() > 1e-9 * domain.height) {
                    return Err(LabError::GridMismatch(format!(
                        "time step {k} does not divide height {}",
                        domain.height
                    )));
                }
                let steps = steps as usize;
                (0..=steps).map(|i| domain.t0 + domain.height * i as f64 / steps as f64).collect()
            }
        };
        let mut mesh = Mesh {
            domain: domain.clone(),
            spec: spec.clone(),
            lo,
            n,
            space: Vec::new(),
            times,
        };
        mesh.space = mesh.tag_space(domain);
        if !mesh.space.contains(&SpaceTag::Inside) {
            return Err(LabError::GridMismatch("no interior nodes".into()));
        }
        Ok(mesh)
    }

    fn tag_space(&self, domain: &Domain) -> Vec<SpaceTag> {
        let inside: Vec<bool> =
            (0..self.len()).map(|i| domain.contains_space(&self.coords(i))).collect();
        (0..self.len())
            .map(|i| {
                if inside[i] {
                    SpaceTag::Inside
                } else if self.neighbors8(i).any(|j| inside[j]) {
                    SpaceTag::Ring
                } else {
                    SpaceTag::Outside
                }
            })
            .collect()
    }

    pub fn dim(&self) -> usize {
        self.spec.dim
    }

    pub fn h(&self) -> f64 {
        self.spec.h
    }

    /// Number of spatial nodes.
    pub fn len(&self) -> usize {
        self.n[0] * self.n[1]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn shape(&self) -> [usize; 2] {
        self.n
    }

    pub fn is_parabolic(&self) -> bool {
        !self.times.is_empty()
    }

    /// Time levels; empty for ball meshes.
    pub fn times(&self) -> &[f64] {
        &self.times
    }

    /// Number of time levels (1 for ball meshes).
    pub fn n_levels(&self) -> usize {
        self.times.len().max(1)
    }

    pub fn k(&self) -> Option<f64> {
        if self.times.len() > 1 {
            Some(self.times[1] - self.times[0])
        } else {
            None
        }
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        i + self.n[0] * j
    }

    pub fn ij(&self, node: usize) -> (usize, usize) {
        (node % self.n[0], node / self.n[0])
    }

    pub fn coords(&self, node: usize) -> Point {
        let (i, j) = self.ij(node);
        let h = self.spec.h;
        let x = (self.lo[0] + i as i64) as f64 * h;
        let y = if self.dim() == 2 { (self.lo[1] + j as i64) as f64 * h } else { 0.0 };
        [x, y]
    }

    /// Nearest lattice node to `x`, if it lies on this mesh.
    pub fn node_at(&self, x: &Point) -> Option<usize> {
        let h = self.spec.h;
        let mut idx = [0usize; 2];
        for a in 0..self.dim() {
            let g = (x[a] / h).round() as i64 - self.lo[a];
            if g < 0 || g as usize >= self.n[a] {
                return None;
            }
            idx[a] = g as usize;
        }
        Some(self.index(idx[0], idx[1]))
    }

    /// Nearest time level to `t`.
    pub fn level_at(&self, t: f64) -> Option<usize> {
        if self.times.is_empty() {
            return Some(0);
        }
        let k = self.k().unwrap_or(1.0);
        let n = ((t - self.times[0]) / k).round();
        if n < 0.0 || n as usize >= self.times.len() {
            None
        } else {
            Some(n as usize)
        }
    }

    /// Neighbor in lattice direction `(di, dj)`, if on the mesh.
    pub fn offset(&self, node: usize, di: i64, dj: i64) -> Option<usize> {
        let (i, j) = self.ij(node);
        let ni = i as i64 + di;
        let nj = j as i64 + dj;
        if ni < 0 || nj < 0 || ni as usize >= self.n[0] || nj as usize >= self.n[1] {
            return None;
        }
        Some(self.index(ni as usize, nj as usize))
    }

    fn neighbors8(&self, node: usize) -> impl Iterator<Item = usize> + '_ {
        let dj_range: &[i64] = if self.dim() == 2 { &[-1, 0, 1] } else { &[0] };
        dj_range.iter().flat_map(move |&dj| {
            [-1i64, 0, 1].into_iter().filter_map(move |di| {
                if di == 0 && dj == 0 {
                    None
                } else {
                    self.offset(node, di, dj)
                }
            })
        })
    }

    pub fn space_tag(&self, node: usize) -> SpaceTag {
        self.space[node]
    }

    pub fn is_unknown_space(&self, node: usize) -> bool {
        self.space[node] == SpaceTag::Inside
    }

    pub fn has_data_space(&self, node: usize) -> bool {
        self.space[node] != SpaceTag::Outside
    }

    /// Tag of node `node` at time level `level` (level is ignored for balls).
    pub fn tag(&self, level: usize, node: usize) -> NodeTag {
        let s = self.space[node];
        if self.times.is_empty() {
            return match s {
                SpaceTag::Inside => NodeTag::Interior,
                SpaceTag::Ring => NodeTag::Boundary,
                SpaceTag::Outside => NodeTag::Outside,
            };
        }
        let last = self.times.len() - 1;
        match s {
            SpaceTag::Outside => NodeTag::Outside,
            // Edge nodes {rho} x ∂B_r are tagged terminal.
            _ if level == last => NodeTag::Terminal,
            SpaceTag::Ring => NodeTag::Lateral,
            SpaceTag::Inside if level == 0 => NodeTag::Initial,
            SpaceTag::Inside => NodeTag::Interior,
        }
    }

    /// Tag of the node nearest to `(t, x)`.
    pub fn tag_at(&self, t: f64, x: &Point) -> Option<NodeTag> {
        let node = self.node_at(x)?;
        let level = self.level_at(t)?;
        Some(self.tag(level, node))
    }

    /// All `(level, node)` pairs on `∂'` (cylinders) or `∂` (balls).
    pub fn parabolic_boundary_nodes(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for level in 0..self.n_levels() {
            for node in 0..self.len() {
                if self.tag(level, node).in_parabolic_boundary() {
                    out.push((level, node));
                }
            }
        }
        out
    }

    /// Spatial nodes inside `domain` (open) that carry data on this mesh.
    pub fn nodes_inside(&self, domain: &Domain) -> Vec<usize> {
        (0..self.len())
            .filter(|&i| self.has_data_space(i) && domain.contains_space(&self.coords(i)))
            .collect()
    }

    /// Spatial nodes forming the snapped boundary ring of `domain` on this lattice.
    pub fn ring_of(&self, domain: &Domain) -> Vec<usize> {
        (0..self.len())
            .filter(|&i| {
                !domain.contains_space(&self.coords(i))
                    && self.neighbors8(i).any(|j| domain.contains_space(&self.coords(j)))
            })
            .collect()
    }

    /// Node-centered midpoint-rule weights of the spatial cells, clipped to
    /// the spatial ball of `domain`.
    pub fn space_weights(&self, domain: &Domain) -> Vec<f64> {
        let h = self.spec.h;
        (0..self.len())
            .map(|i| {
                if !self.has_data_space(i) {
                    return 0.0;
                }
                cell_fraction(domain, &self.coords(i), h) * h.powi(self.dim() as i32)
            })
            .collect()
    }

    /// Time-slab weights clipped to `[t0, t0 + rho]` of `domain`. For ball
    /// meshes a single unit weight.
    pub fn time_weights(&self, domain: &Domain) -> Vec<f64> {
        if self.times.is_empty() {
            return vec![1.0];
        }
        let k = self.k().unwrap_or(0.0);
        let (a, b) = if domain.is_cylinder() {
            (domain.t0, domain.t_end())
        } else {
            (f64::NEG_INFINITY, f64::INFINITY)
        };
        self.times
            .iter()
            .map(|&t| {
                let lo = (t - 0.5 * k).max(a).max(self.times[0]);
                let hi = (t + 0.5 * k).min(b).min(*self.times.last().unwrap());
                (hi - lo).max(0.0)
            })
            .collect()
    }

    /// Sample points for coefficient validation: nodes with data plus cell midpoints.
    pub fn validation_points(&self) -> Vec<Point> {
        let h = self.spec.h;
        let mut pts = Vec::new();
        for i in 0..self.len() {
            if !self.has_data_space(i) {
                continue;
            }
            let x = self.coords(i);
            pts.push(x);
            if self.dim() == 1 {
                pts.push([x[0] + 0.5 * h, 0.0]);
            } else {
                pts.push([x[0] + 0.5 * h, x[1] + 0.5 * h]);
            }
        }
        pts
    }
}

/// Fraction of the cell `center ± h/2` inside the spatial ball of `domain`.
pub fn cell_fraction(domain: &Domain, center: &Point, h: f64) -> f64 {
    let half = 0.5 * h;
    let depth = domain.depth(center);
    let reach = if domain.dim == 1 { half } else { half * std::f64::consts::SQRT_2 };
    if depth >= reach {
        return 1.0;
    }
    if depth <= -reach {
        return 0.0;
    }
    if domain.dim == 1 {
        let lo = (center[0] - half).max(domain.center[0] - domain.radius);
        let hi = (center[0] + half).min(domain.center[0] + domain.radius);
        return ((hi - lo) / h).clamp(0.0, 1.0);
    }
    const SUB: usize = 16;
    let mut count = 0usize;
    for a in 0..SUB {
        for b in 0..SUB {
            let p = [
                center[0] - half + (a as f64 + 0.5) * h / SUB as f64,
                center[1] - half + (b as f64 + 0.5) * h / SUB as f64,
            ];
            if domain.spatial_distance(&p) < domain.radius {
                count += 1;
            }
        }
    }
    count as f64 / (SUB * SUB) as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cylinder_shift_matches_sub_cylinder() {
        let c = make_domain(DomainKind::Cylinder, 1.0, 1.0, &[1.0, 0.0]).unwrap();
        assert_eq!(c.dim, 1);
        assert_eq!(c.t0, 1.0);
        assert!(c.contains(1.5, &[0.0, 0.0]));
        assert!(!c.contains(0.5, &[0.0, 0.0]));
        assert!(!c.contains(1.5, &[1.0, 0.0]));
        assert!((c.measure() - 2.0).abs() < 1e-15);
    }

    #[test]
    fn ball_contains_origin() {
        let b = make_domain(DomainKind::Ball, 1.0, 0.0, &[0.0, 0.0]).unwrap();
        assert!(b.contains(0.0, &[0.0, 0.0]));
        assert_eq!(b.classify(0.0, &[1.0, 0.0]), PointClass::Boundary);
    }

    #[test]
    fn shifted_ball_contains_unit_ball() {
        let big = make_domain(DomainKind::Ball, 1.5, 0.0, &[0.5, 0.0]).unwrap();
        for k in 0..64 {
            let th = k as f64 * std::f64::consts::TAU / 64.0;
            assert!(big.contains_space_closed(&[th.cos(), th.sin()]));
        }
    }

    #[test]
    fn nonpositive_dimensions_rejected() {
        assert!(make_domain(DomainKind::Ball, 0.0, 0.0, &[0.0]).is_err());
        assert!(make_domain(DomainKind::Cylinder, 1.0, -1.0, &[0.0, 0.0]).is_err());
        assert!(make_domain(DomainKind::Ball, 1.0, 0.0, &[0.0, 0.0, 0.0]).is_err());
    }

    #[test]
    fn continuum_parabolic_boundary() {
        let c = Domain::cylinder(1.0, 1.0, 0.0, &[0.0]).unwrap();
        assert_eq!(c.classify(1.0, &[0.0, 0.0]), PointClass::Terminal);
        assert!(c.classify(1.0, &[0.0, 0.0]).in_parabolic_boundary());
        assert_eq!(c.classify(0.0, &[0.0, 0.0]), PointClass::Initial);
        assert!(!c.classify(0.0, &[0.0, 0.0]).in_parabolic_boundary());
        assert_eq!(c.classify(0.5, &[1.0, 0.0]), PointClass::Lateral);
        assert_eq!(c.classify(1.0, &[1.0, 0.0]), PointClass::Terminal);
    }

    #[test]
    fn mesh_tags_match_definition() {
        let c = Domain::cylinder(1.0, 1.0, 0.0, &[0.0, 0.0]).unwrap();
        let spec = GridSpec::parabolic(2, 0.25, 0.25).unwrap();
        let m = classify_boundary(&c, &spec).unwrap();
        assert_eq!(m.tag_at(1.0, &[0.0, 0.0]), Some(NodeTag::Terminal));
        assert_eq!(m.tag_at(0.0, &[0.0, 0.0]), Some(NodeTag::Initial));
        assert_eq!(m.tag_at(0.5, &[1.0, 0.0]), Some(NodeTag::Lateral));
        assert_eq!(m.tag_at(1.0, &[1.0, 0.0]), Some(NodeTag::Terminal));
        assert_eq!(m.tag_at(0.5, &[0.0, 0.5]), Some(NodeTag::Interior));
        assert_eq!(m.tag_at(0.5, &[1.25, 1.25]), Some(NodeTag::Outside));
        assert_eq!(m.tag_at(0.5, &[3.0, 3.0]), None);
    }

    #[test]
    fn boundary_tags_partition() {
        let c = Domain::cylinder(0.5, 1.0, 0.0, &[0.1, -0.2]).unwrap();
        let spec = GridSpec::parabolic(2, 0.125, 0.125).unwrap();
        let m = classify_boundary(&c, &spec).unwrap();
        for level in 0..m.n_levels() {
            for node in 0..m.len() {
                let tag = m.tag(level, node);
                let lateral = tag == NodeTag::Lateral;
                let terminal = tag == NodeTag::Terminal;
                assert!(!(lateral && terminal));
                if m.space_tag(node) == SpaceTag::Ring && level == m.n_levels() - 1 {
                    assert!(terminal);
                }
            }
        }
    }

    #[test]
    fn mesh_errors() {
        let c = Domain::cylinder(1.0, 1.0, 0.0, &[0.0]).unwrap();
        assert!(Mesh::new(&c, &GridSpec::new(1, 0.1).unwrap()).is_err());
        assert!(Mesh::new(&c, &GridSpec::parabolic(1, 0.1, 0.3).unwrap()).is_err());
        assert!(Mesh::new(&c, &GridSpec::parabolic(2, 0.1, 0.1).unwrap()).is_err());
        let b = Domain::ball(0.1, &[0.0]).unwrap();
        assert!(Mesh::new(&b, &GridSpec::new(1, 0.5).unwrap()).is_err());
    }

    #[test]
    fn weights_sum_to_measure() {
        let b = Domain::ball(1.0, &[0.0, 0.0]).unwrap();
        let m = Mesh::new(&b, &GridSpec::new(2, 1.0 / 32.0).unwrap()).unwrap();
        let total: f64 = m.space_weights(&b).iter().sum();
        assert!((total - std::f64::consts::PI).abs() < 5e-4, "{total}");
        let c = Domain::cylinder(1.0, 1.0, 0.0, &[0.0]).unwrap();
        let m = Mesh::new(&c, &GridSpec::parabolic(1, 0.1, 0.1).unwrap()).unwrap();
        let ts: f64 = m.time_weights(&c).iter().sum();
        let xs: f64 = m.space_weights(&c).iter().sum();
        assert!((ts - 1.0).abs() < 1e-12 && (xs - 2.0).abs() < 1e-12);
    }
}
