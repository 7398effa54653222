//! Galerkin entries of the single and double layer operators for
//! piecewise constant functions, far-field coupling entries, and dense
//! matrices and tensors for reference computations.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chebyshev::InterpGrid;
use crate::kernels::{dlp_radial, slp_kernel, slp_radial, CqmScheme, KernelError, C64};
use crate::mesh::{SurfaceMesh, Vec3};
use crate::quadrature::{GaussRule, TriangleRule};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureConfig {
    /// Polynomial degree of the triangle rule for well separated pairs.
    pub far_order: usize,
    /// Gauss points per direction for touching and nearby pairs.
    pub singular_order: usize,
    /// Pairs closer than this multiple of the larger panel diameter use
    /// the high-order path.
    pub near_threshold: f64,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        Self {
            far_order: 4,
            singular_order: 4,
            near_threshold: 1.0,
        }
    }
}

impl QuadratureConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.far_order < 1 || self.singular_order < 1 {
            return Err("quadrature orders must be at least 1".into());
        }
        if !(self.near_threshold >= 0.0) {
            return Err("near threshold must be non-negative".into());
        }
        Ok(())
    }
}

/// Geometric relation of two panels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairKind {
    Coincident,
    /// Shared edge between the two listed global vertex indices, lower first.
    Edge(usize, usize),
    Vertex(usize),
    Near,
    Far,
}

pub fn classify_pair(mesh: &SurfaceMesh, i: usize, j: usize, near_threshold: f64) -> PairKind {
    if i == j {
        return PairKind::Coincident;
    }
    let (ti, tj) = (mesh.triangles()[i], mesh.triangles()[j]);
    let mut shared: Vec<usize> = ti.iter().copied().filter(|v| tj.contains(v)).collect();
    shared.sort_unstable();
    match shared.len() {
        3 => PairKind::Coincident,
        2 => PairKind::Edge(shared[0], shared[1]),
        1 => PairKind::Vertex(shared[0]),
        _ => {
            let (di, dj) = (mesh.panel_diameter(i), mesh.panel_diameter(j));
            let gap = (mesh.centroids()[i] - mesh.centroids()[j]).norm() - 0.5 * (di + dj);
            if gap < near_threshold * di.max(dj) {
                PairKind::Near
            } else {
                PairKind::Far
            }
        }
    }
}

/// Frequency-independent quadrature for one panel pair: the Galerkin
/// entry is `Σ_q w_q k(y_q - x_q)`.
#[derive(Debug, Clone, Default)]
pub struct PairRule {
    pub weights: Vec<f64>,
    /// `|y_q - x_q|`
    pub dist: Vec<f64>,
    /// `(y_q - x_q) · n_j`
    pub projection: Vec<f64>,
}

impl PairRule {
    fn with_capacity(n: usize) -> Self {
        Self {
            weights: Vec::with_capacity(n),
            dist: Vec::with_capacity(n),
            projection: Vec::with_capacity(n),
        }
    }

    fn push(&mut self, w: f64, d: Vec3, normal: &Vec3) {
        self.weights.push(w);
        self.dist.push(d.norm());
        self.projection.push(d.dot(normal));
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn slp(&self, s: C64) -> C64 {
        self.weights
            .iter()
            .zip(&self.dist)
            .map(|(&w, &r)| w * slp_radial(r, s))
            .sum()
    }

    pub fn dlp(&self, s: C64) -> C64 {
        self.weights
            .iter()
            .zip(&self.dist)
            .zip(&self.projection)
            .filter(|(_, &p)| p != 0.0)
            .map(|((&w, &r), &p)| w * dlp_radial(r, p, s))
            .sum()
    }

    /// Integral of the constant one; equals `|τ_i| |τ_j|` for exact rules.
    pub fn measure(&self) -> f64 {
        self.weights.iter().sum()
    }
}

/// Which layer potential an entry belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Operator {
    SingleLayer,
    DoubleLayer,
}

impl PairRule {
    pub fn eval(&self, op: Operator, s: C64) -> C64 {
        match op {
            Operator::SingleLayer => self.slp(s),
            Operator::DoubleLayer => self.dlp(s),
        }
    }
}

/// Quadrature for panel `i` (test, variable `x`) against panel `j`
/// (trial, variable `y`).
pub fn pair_rule(mesh: &SurfaceMesh, i: usize, j: usize, quad: &QuadratureConfig) -> PairRule {
    let normal = mesh.normals()[j];
    let n = quad.singular_order.max(1);
    match classify_pair(mesh, i, j, quad.near_threshold) {
        PairKind::Coincident => coincident_rule(mesh, i, n, &normal),
        PairKind::Edge(p0, p1) => edge_rule(mesh, i, j, p0, p1, n, &normal),
        PairKind::Vertex(p0) => vertex_rule(mesh, i, j, p0, n, &normal),
        PairKind::Near => tensor_rule(mesh, i, j, &TriangleRule::with_degree(2 * n), &normal),
        PairKind::Far => tensor_rule(mesh, i, j, &TriangleRule::with_degree(quad.far_order), &normal),
    }
}

fn tensor_rule(mesh: &SurfaceMesh, i: usize, j: usize, rule: &TriangleRule, normal: &Vec3) -> PairRule {
    let [a0, a1, a2] = mesh.corners(i);
    let [b0, b1, b2] = mesh.corners(j);
    let jac = 4.0 * mesh.areas()[i] * mesh.areas()[j];
    let ys: Vec<Vec3> = rule
        .points
        .iter()
        .map(|p| b0 + (b1 - b0) * p[0] + (b2 - b0) * p[1])
        .collect();
    let mut out = PairRule::with_capacity(rule.len() * rule.len());
    for (p, wx) in rule.points.iter().zip(&rule.weights) {
        let x = a0 + (a1 - a0) * p[0] + (a2 - a0) * p[1];
        for (y, wy) in ys.iter().zip(&rule.weights) {
            out.push(jac * wx * wy, y - x, normal);
        }
    }
    out
}

/// Identical panels. With `y - x = B w` the difference `w` ranges over the
/// hexagon `T - T`; each of its six sectors is mapped to the unit square
/// by polar coordinates, absorbing the `1/|w|` singularity.
fn coincident_rule(mesh: &SurfaceMesh, i: usize, n: usize, normal: &Vec3) -> PairRule {
    const HEXAGON: [[f64; 2]; 6] = [[1.0, 0.0], [0.0, 1.0], [-1.0, 1.0], [-1.0, 0.0], [0.0, -1.0], [1.0, -1.0]];
    let [p0, p1, p2] = mesh.corners(i);
    let (e1, e2) = (p1 - p0, p2 - p0);
    let jac = 4.0 * mesh.areas()[i] * mesh.areas()[i];
    let g = GaussRule::new(n);
    let mut out = PairRule::with_capacity(6 * n * n);
    for k in 0..6 {
        let (a, b) = (HEXAGON[k], HEXAGON[(k + 1) % 6]);
        for (t, wt) in g.iter() {
            let w = [(1.0 - t) * a[0] + t * b[0], (1.0 - t) * a[1] + t * b[1]];
            let dir = e1 * w[0] + e2 * w[1];
            for (rho, wr) in g.iter() {
                let weight = jac * 0.5 * rho * (1.0 - rho) * (1.0 - rho) * wr * wt;
                out.push(weight, dir * rho, normal);
            }
        }
    }
    out
}

/// Panels sharing the edge `p0 -> p1`. In edge coordinates the integrand
/// depends on three relative variables; each half of their domain is a
/// prism that splits into two cones with apex at the singular point.
fn edge_rule(mesh: &SurfaceMesh, i: usize, j: usize, p0: usize, p1: usize, n: usize, normal: &Vec3) -> PairRule {
    let verts = mesh.vertices();
    let third = |panel: usize| -> Vec3 {
        let t = mesh.triangles()[panel];
        let v = *t.iter().find(|&&v| v != p0 && v != p1).expect("edge pair has a third vertex");
        verts[v]
    };
    let origin = verts[p0];
    let e = verts[p1] - origin;
    let a = third(i) - origin;
    let b = third(j) - origin;
    let jac = e.cross(&a).norm() * e.cross(&b).norm();
    let g = GaussRule::new(n);
    let mut out = PairRule::with_capacity(4 * n * n * n);

    // region z = v1 - u1 >= 0 uses (z, v2, u2); the mirrored region uses
    // (c1, c2, c3) = (u1 - v1, u2, v2)
    let diff_a = |f: [f64; 3]| e * f[0] + b * f[1] - a * f[2];
    let diff_b = |f: [f64; 3]| -e * f[0] - a * f[1] + b * f[2];
    for (rho, wr) in g.iter() {
        let radial = rho * rho * (1.0 - rho) * wr;
        for (sigma, ws) in g.iter() {
            for (tau, wt) in g.iter() {
                let faces = [
                    ([1.0 - sigma, sigma, tau], 1.0),
                    ([sigma * (1.0 - tau), sigma * tau, 1.0], sigma),
                ];
                for (f, face_jac) in faces {
                    let w = jac * radial * face_jac * ws * wt;
                    out.push(w, diff_a(f) * rho, normal);
                    out.push(w, diff_b(f) * rho, normal);
                }
            }
        }
    }
    out
}

/// Panels sharing the single vertex `p0`. Polar coordinates on both
/// panels around the shared vertex, split by which radius is larger.
fn vertex_rule(mesh: &SurfaceMesh, i: usize, j: usize, p0: usize, n: usize, normal: &Vec3) -> PairRule {
    let verts = mesh.vertices();
    let others = |panel: usize| -> (Vec3, Vec3) {
        let t = mesh.triangles()[panel];
        let k = t.iter().position(|&v| v == p0).expect("vertex pair shares p0");
        // keep the panel's orientation
        (verts[t[(k + 1) % 3]] - verts[p0], verts[t[(k + 2) % 3]] - verts[p0])
    };
    let (a1, a2) = others(i);
    let (b1, b2) = others(j);
    let jac = a1.cross(&a2).norm() * b1.cross(&b2).norm();
    let g = GaussRule::new(n);
    let mut out = PairRule::with_capacity(2 * n.pow(4));
    for (sigma, ws) in g.iter() {
        let radial = sigma * sigma * sigma * ws;
        for (t, wt) in g.iter() {
            for (alpha, wa) in g.iter() {
                let u = a1 * (1.0 - alpha) + a2 * alpha;
                for (beta, wb) in g.iter() {
                    let v = b1 * (1.0 - beta) + b2 * beta;
                    let w = jac * radial * t * wt * wa * wb;
                    // |x - p0| larger, then |y - p0| larger
                    out.push(w, (v * t - u) * sigma, normal);
                    out.push(w, (v - u * t) * sigma, normal);
                }
            }
        }
    }
    out
}

/// Galerkin single layer entry `∫_{τ_i}∫_{τ_j} e^{-s|y-x|}/(4π|y-x|) dy dx`.
pub fn near_entry(mesh: &SurfaceMesh, i: usize, j: usize, s: C64, quad: &QuadratureConfig) -> C64 {
    pair_rule(mesh, i, j, quad).slp(s)
}

/// Galerkin double layer entry with the normal of the trial panel `j`.
pub fn near_entry_dlp(mesh: &SurfaceMesh, i: usize, j: usize, s: C64, quad: &QuadratureConfig) -> C64 {
    pair_rule(mesh, i, j, quad).dlp(s)
}

/// Kernel at the interpolation nodes `ξ_{r,μ}` and `ξ_{c,ν}`.
pub fn coupling_entry(grid_r: &InterpGrid, grid_c: &InterpGrid, mu: usize, nu: usize, s: C64) -> Result<C64, KernelError> {
    slp_kernel(&grid_r.point(mu), &grid_c.point(nu), s)
}

/// Dense `M x M` Galerkin matrix of one operator at one frequency.
pub fn assemble_dense(mesh: &SurfaceMesh, op: Operator, s: C64, quad: &QuadratureConfig) -> DMatrix<C64> {
    let m = mesh.len();
    let rows: Vec<Vec<C64>> = (0..m)
        .into_par_iter()
        .map(|i| (0..m).map(|j| pair_rule(mesh, i, j, quad).eval(op, s)).collect())
        .collect();
    DMatrix::from_fn(m, m, |i, j| rows[i][j])
}

pub fn assemble_dense_matrix(mesh: &SurfaceMesh, s: C64, quad: &QuadratureConfig) -> DMatrix<C64> {
    assemble_dense(mesh, Operator::SingleLayer, s, quad)
}

pub fn assemble_dense_dlp(mesh: &SurfaceMesh, s: C64, quad: &QuadratureConfig) -> DMatrix<C64> {
    assemble_dense(mesh, Operator::DoubleLayer, s, quad)
}

/// Dense matrices at every frequency of the scheme. Only the half
/// spectrum is computed; the remaining slices are conjugates.
pub fn assemble_dense_tensor(
    mesh: &SurfaceMesh,
    scheme: &CqmScheme,
    op: Operator,
    quad: &QuadratureConfig,
) -> Vec<DMatrix<C64>> {
    let m = mesh.len();
    let freqs: Vec<C64> = scheme.half_spectrum().map(|l| scheme.frequencies[l]).collect();
    // one rule per pair, evaluated at all frequencies
    let rows: Vec<Vec<Vec<C64>>> = (0..m)
        .into_par_iter()
        .map(|i| {
            (0..m)
                .map(|j| {
                    let rule = pair_rule(mesh, i, j, quad);
                    freqs.iter().map(|&s| rule.eval(op, s)).collect()
                })
                .collect()
        })
        .collect();
    let half: Vec<DMatrix<C64>> = (0..freqs.len())
        .map(|l| DMatrix::from_fn(m, m, |i, j| rows[i][j][l]))
        .collect();
    (0..scheme.n_steps)
        .map(|l| match scheme.mirror(l) {
            (k, false) => half[k].clone(),
            (k, true) => half[k].map(|z| z.conj()),
        })
        .collect()
}

/// Diagonal P0 mass matrix.
pub fn mass_matrix(mesh: &SurfaceMesh) -> DMatrix<f64> {
    DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(mesh.areas()))
}
