//! Tensor Chebyshev interpolation on cluster boxes and the nested
//! cluster bases built from it.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::clustering::{BoundingBox, ClusterTree};
use crate::mesh::{SurfaceMesh, Vec3};
use crate::quadrature::TriangleRule;

/// Relative width below which a box axis counts as degenerate.
const FLAT_AXIS: f64 = 1e-10;
/// Width given to a degenerate axis, relative to the box diameter.
const FLAT_INFLATION: f64 = 1e-2;

/// First-kind Chebyshev nodes `cos((2k+1)π/(2m))` mapped to `[a, b]`.
pub fn chebyshev_nodes(m: usize, a: f64, b: f64) -> Vec<f64> {
    let (mid, half) = (0.5 * (a + b), 0.5 * (b - a));
    (0..m)
        .map(|k| {
            let t = ((2 * k + 1) as f64 * std::f64::consts::PI / (2 * m) as f64).cos();
            mid + half * t
        })
        .collect()
}

/// Values of all Lagrange polynomials for `nodes` at `x`.
pub fn lagrange_values(nodes: &[f64], x: f64) -> Vec<f64> {
    (0..nodes.len())
        .map(|k| {
            nodes
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != k)
                .map(|(_, &xj)| (x - xj) / (nodes[k] - xj))
                .product()
        })
        .collect()
}

/// Derivatives of all Lagrange polynomials for `nodes` at `x`.
pub fn lagrange_derivatives(nodes: &[f64], x: f64) -> Vec<f64> {
    let m = nodes.len();
    (0..m)
        .map(|k| {
            let mut sum = 0.0;
            for i in (0..m).filter(|&i| i != k) {
                let mut prod = 1.0 / (nodes[k] - nodes[i]);
                for j in (0..m).filter(|&j| j != k && j != i) {
                    prod *= (x - nodes[j]) / (nodes[k] - nodes[j]);
                }
                sum += prod;
            }
            sum
        })
        .collect()
}

/// Tensor Chebyshev grid of order `m` on a box. The multi-index
/// `(i0, i1, i2)` is stored at `i0 + m*i1 + m²*i2`.
#[derive(Debug, Clone, PartialEq)]
pub struct InterpGrid {
    m: usize,
    axes: [Vec<f64>; 3],
}

impl InterpGrid {
    pub fn new(bbox: &BoundingBox, m: usize) -> Self {
        assert!(m >= 1, "interpolation order must be positive");
        let diam = bbox.diameter();
        let axes = std::array::from_fn(|a| {
            let (mut lo, mut hi) = (bbox.min[a], bbox.max[a]);
            if hi - lo <= FLAT_AXIS * diam.max(f64::MIN_POSITIVE) {
                let half = 0.5 * FLAT_INFLATION * diam.max(1e-300);
                let mid = 0.5 * (lo + hi);
                lo = mid - half;
                hi = mid + half;
            }
            chebyshev_nodes(m, lo, hi)
        });
        Self { m, axes }
    }

    pub fn order(&self) -> usize {
        self.m
    }

    /// Number of interpolation points, `m³`.
    pub fn len(&self) -> usize {
        self.m.pow(3)
    }

    pub fn is_empty(&self) -> bool {
        self.m == 0
    }

    pub fn axis(&self, a: usize) -> &[f64] {
        &self.axes[a]
    }

    pub fn point(&self, nu: usize) -> Vec3 {
        let m = self.m;
        Vec3::new(self.axes[0][nu % m], self.axes[1][(nu / m) % m], self.axes[2][nu / (m * m)])
    }

    pub fn points(&self) -> Vec<Vec3> {
        (0..self.len()).map(|nu| self.point(nu)).collect()
    }

    /// All `m³` tensor Lagrange polynomials at `x`.
    pub fn eval(&self, x: &Vec3) -> Vec<f64> {
        let l: [Vec<f64>; 3] = std::array::from_fn(|a| lagrange_values(&self.axes[a], x[a]));
        let m = self.m;
        let mut out = Vec::with_capacity(self.len());
        for i2 in 0..m {
            for i1 in 0..m {
                let f = l[1][i1] * l[2][i2];
                out.extend(l[0].iter().map(|v| v * f));
            }
        }
        out
    }

    /// Directional derivatives `dir · ∇L_ν(x)` of all tensor Lagrange polynomials.
    pub fn directional_derivative(&self, x: &Vec3, dir: &Vec3) -> Vec<f64> {
        let l: [Vec<f64>; 3] = std::array::from_fn(|a| lagrange_values(&self.axes[a], x[a]));
        let d: [Vec<f64>; 3] = std::array::from_fn(|a| lagrange_derivatives(&self.axes[a], x[a]));
        let m = self.m;
        let mut out = Vec::with_capacity(self.len());
        for i2 in 0..m {
            for i1 in 0..m {
                for i0 in 0..m {
                    out.push(
                        dir.x * d[0][i0] * l[1][i1] * l[2][i2]
                            + dir.y * l[0][i0] * d[1][i1] * l[2][i2]
                            + dir.z * l[0][i0] * l[1][i1] * d[2][i2],
                    );
                }
            }
        }
        out
    }
}

/// What the leaf matrices integrate against the P0 basis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum BasisKind {
    /// `∫_{τ_i} L_ν(x) dx`
    Value,
    /// `∫_{τ_j} n_j · ∇L_ν(y) dy`
    NormalDerivative,
}

/// Nested interpolation basis on every cluster of a tree.
#[derive(Debug, Clone)]
pub struct ClusterBasis {
    m: usize,
    kind: BasisKind,
    grids: Vec<InterpGrid>,
    /// `#r x m³` for leaves, in tree order of the cluster's panels.
    leaf: Vec<Option<DMatrix<f64>>>,
    /// `m³ x m³` transfer from each non-root cluster to its father.
    transfer: Vec<Option<DMatrix<f64>>>,
}

impl ClusterBasis {
    pub fn build(tree: &ClusterTree, mesh: &SurfaceMesh, m: usize, kind: BasisKind) -> Self {
        let grids: Vec<InterpGrid> = tree.nodes().iter().map(|n| InterpGrid::new(&n.bbox, m)).collect();
        let rule = TriangleRule::with_degree(leaf_quadrature_degree(m));

        let leaf = (0..tree.len())
            .into_par_iter()
            .map(|id| {
                tree.node(id)
                    .is_leaf()
                    .then(|| leaf_matrix(&grids[id], tree.indices(id), mesh, &rule, kind))
            })
            .collect();

        let transfer = (0..tree.len())
            .map(|id| {
                tree.node(id).parent.map(|father| {
                    let (son, father) = (&grids[id], &grids[father]);
                    let p = son.len();
                    let mut e = DMatrix::zeros(p, p);
                    for lambda in 0..p {
                        let row = father.eval(&son.point(lambda));
                        for (mu, v) in row.into_iter().enumerate() {
                            e[(lambda, mu)] = v;
                        }
                    }
                    e
                })
            })
            .collect();

        Self {
            m,
            kind,
            grids,
            leaf,
            transfer,
        }
    }

    pub fn order(&self) -> usize {
        self.m
    }

    pub fn kind(&self) -> BasisKind {
        self.kind
    }

    /// Rank `m³` of every cluster basis.
    pub fn rank(&self) -> usize {
        self.m.pow(3)
    }

    pub fn grid(&self, id: usize) -> &InterpGrid {
        &self.grids[id]
    }

    pub fn leaf_matrix(&self, id: usize) -> Option<&DMatrix<f64>> {
        self.leaf[id].as_ref()
    }

    pub fn transfer(&self, id: usize) -> Option<&DMatrix<f64>> {
        self.transfer[id].as_ref()
    }

    /// Full `#r x m³` basis of a cluster, assembled from leaf and transfer
    /// matrices. Rows follow the tree order of the cluster's panels.
    pub fn expanded(&self, tree: &ClusterTree, id: usize) -> DMatrix<f64> {
        let node = tree.node(id);
        if let Some(v) = &self.leaf[id] {
            return v.clone();
        }
        let mut out = DMatrix::zeros(node.len(), self.rank());
        for &son in &node.sons {
            let sub = self.expanded(tree, son) * self.transfer[son].as_ref().expect("son has transfer");
            let offset = tree.node(son).range.start - node.range.start;
            out.rows_mut(offset, sub.nrows()).copy_from(&sub);
        }
        out
    }

    /// Stored reals: leaf matrices plus transfer matrices.
    pub fn storage_units(&self) -> usize {
        self.leaf.iter().flatten().map(|v| v.len()).sum::<usize>()
            + self.transfer.iter().flatten().map(|e| e.len()).sum::<usize>()
    }
}

/// Triangle quadrature degree for leaf integrals. Tensor Lagrange
/// polynomials of order `m` have total degree `3(m-1)` on a panel.
pub fn leaf_quadrature_degree(m: usize) -> usize {
    (3 * m.saturating_sub(1)).max(2)
}

fn leaf_matrix(
    grid: &InterpGrid,
    panels: &[usize],
    mesh: &SurfaceMesh,
    rule: &TriangleRule,
    kind: BasisKind,
) -> DMatrix<f64> {
    let p = grid.len();
    let mut v = DMatrix::zeros(panels.len(), p);
    for (row, &panel) in panels.iter().enumerate() {
        let [a, b, c] = mesh.corners(panel);
        let jac = 2.0 * mesh.areas()[panel];
        let normal = mesh.normals()[panel];
        for (uv, w) in rule.points.iter().zip(&rule.weights) {
            let x = a + (b - a) * uv[0] + (c - a) * uv[1];
            let vals = match kind {
                BasisKind::Value => grid.eval(&x),
                BasisKind::NormalDerivative => grid.directional_derivative(&x, &normal),
            };
            for (nu, val) in vals.into_iter().enumerate() {
                v[(row, nu)] += jac * w * val;
            }
        }
    }
    v
}
