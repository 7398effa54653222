//! Convolution quadrature weights and the marching-on-in-time solve for
//! the Dirichlet problem.
//!
//! The compressed frequency tensor is turned into weight tensors by
//! transforming only the frequency fibres of every block. History sums
//! are evaluated block-wise: scalar convolutions of the weight fibres with
//! the history, then one product per rank-one term, with the cluster bases
//! applied through upward and downward passes for admissible blocks.

use std::time::Instant;

use nalgebra::{Cholesky, DMatrix, DVector};
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::Serialize;
use thiserror::Error;

use crate::htensor::{HTensor, HTensorError};
use crate::kernels::{CqmScheme, C64};
use crate::mesh::{SurfaceMesh, Vec3};

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("the zero-order single layer weight is not positive definite")]
    NotPositiveDefinite,
    #[error("inconsistent input: {0}")]
    Mismatch(String),
    #[error(transparent)]
    Tensor(#[from] HTensorError),
}

/// Compressed integration weights `V̂_0, ..., V̂_N`.
#[derive(Debug, Clone)]
pub struct WeightTensor {
    /// Same blocks as the frequency tensor with fibres of length `N + 1`.
    pub tensor: HTensor,
    pub n_steps: usize,
    pub radius: f64,
    pub dt: f64,
}

impl WeightTensor {
    /// Number of weights, `N + 1`.
    pub fn len(&self) -> usize {
        self.n_steps + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn n_panels(&self) -> usize {
        self.tensor.n_panels()
    }

    /// Dense weight `V̂_n` in mesh order.
    pub fn slice(&self, n: usize) -> DMatrix<C64> {
        let m = self.n_panels();
        let tree = &self.tensor.structure.tree;
        let mut out = DMatrix::zeros(m, m);
        for (idx, b) in self.tensor.partition_blocks().iter().enumerate() {
            let vals = self.tensor.block_slice(idx, n);
            for (a, &i) in tree.indices(b.row).iter().enumerate() {
                for (c, &j) in tree.indices(b.col).iter().enumerate() {
                    out[(i, j)] = vals[(a, c)];
                }
            }
        }
        out
    }

    /// All dense weights, subject to the expansion size cap.
    pub fn expand_dense(&self) -> Result<Vec<DMatrix<C64>>, SolverError> {
        Ok(self.tensor.expand_dense()?)
    }
}

/// Scaled transform of each column: `d̂[n] = R^{-n}/N Σ_ℓ e^{-2πinℓ/N} d[ℓ]`
/// for `n = 0..=N`.
pub fn transform_fibres(d: &DMatrix<C64>, radius: f64) -> DMatrix<C64> {
    let n = d.nrows();
    let mut out = DMatrix::zeros(n + 1, d.ncols());
    if n == 0 {
        return out;
    }
    let fft = FftPlanner::<f64>::new().plan_fft_forward(n);
    let scale: Vec<f64> = (0..=n).map(|k| radius.powi(-(k as i32)) / n as f64).collect();
    for c in 0..d.ncols() {
        let mut buf: Vec<C64> = d.column(c).iter().copied().collect();
        fft.process(&mut buf);
        for (k, v) in buf.iter().enumerate() {
            out[(k, c)] = v * scale[k];
        }
        // e^{-2πi N ℓ/N} = 1
        out[(n, c)] = d.column(c).sum() * scale[n];
    }
    out
}

/// Turns a compressed frequency tensor into compressed weights.
pub fn transform_weights(ht: &HTensor, scheme: &CqmScheme) -> Result<WeightTensor, SolverError> {
    if ht.n_slices != scheme.n_steps {
        return Err(SolverError::Mismatch(format!(
            "tensor has {} slices, scheme has {} frequencies",
            ht.n_slices, scheme.n_steps
        )));
    }
    let radius = scheme.radius;
    let tensor = ht.map_fibres(scheme.n_steps + 1, |d| transform_fibres(d, radius));
    Ok(WeightTensor {
        tensor,
        n_steps: scheme.n_steps,
        radius,
        dt: scheme.dt,
    })
}

/// Weights from dense frequency slices by the direct sum.
pub fn dense_weights(slices: &[DMatrix<C64>], radius: f64) -> Vec<DMatrix<C64>> {
    let n = slices.len();
    let (rows, cols) = slices.first().map_or((0, 0), |s| s.shape());
    (0..=n)
        .map(|k| {
            let mut w = DMatrix::zeros(rows, cols);
            for (l, s) in slices.iter().enumerate() {
                let phase = -2.0 * std::f64::consts::PI * ((k * l) % n) as f64 / n as f64;
                w += s * C64::from_polar(1.0, phase);
            }
            w * C64::from(radius.powi(-(k as i32)) / n as f64)
        })
        .collect()
}

/// `max_n ‖Im V̂_n‖_F / ‖V̂_0‖_F`
pub fn imaginary_residue(weights: &[DMatrix<C64>]) -> f64 {
    let scale = weights.first().map_or(0.0, |w| w.norm());
    if scale == 0.0 {
        return 0.0;
    }
    weights.iter().map(|w| w.map(|z| z.im).norm()).fold(0.0, f64::max) / scale
}

/// Convolution of weights with a vector history.
pub trait HistorySum {
    fn push(&mut self, x: &DVector<f64>);
    /// Number of stored history vectors.
    fn len(&self) -> usize;
    fn is_empty(&self) -> bool {
        self.len() == 0
    }
    /// `Re Σ_k W_{n-k} x_k` over the stored history with `k ≤ n`.
    fn evaluate(&self, n: usize) -> DVector<f64>;
}

/// Naive history sums with dense weights.
pub struct DenseHistory<'a> {
    weights: &'a [DMatrix<C64>],
    history: Vec<DVector<f64>>,
}

impl<'a> DenseHistory<'a> {
    pub fn new(weights: &'a [DMatrix<C64>]) -> Self {
        Self {
            weights,
            history: Vec::new(),
        }
    }
}

impl HistorySum for DenseHistory<'_> {
    fn push(&mut self, x: &DVector<f64>) {
        self.history.push(x.clone());
    }

    fn len(&self) -> usize {
        self.history.len()
    }

    fn evaluate(&self, n: usize) -> DVector<f64> {
        let m = self.weights.first().map_or(0, |w| w.nrows());
        let mut out = DVector::zeros(m);
        for (k, x) in self.history.iter().enumerate().take(n + 1) {
            let xc = x.map(C64::from);
            out += (&self.weights[n - k] * xc).map(|z| z.re);
        }
        out
    }
}

/// Fast history sums on a compressed weight tensor.
pub struct FastHistory<'a> {
    weights: &'a WeightTensor,
    /// History vectors in tree order.
    history: Vec<DVector<f64>>,
    /// Column basis coefficients `W_cᵀ x_k` of every cluster and step.
    coeffs: Vec<Vec<DVector<f64>>>,
}

impl<'a> FastHistory<'a> {
    pub fn new(weights: &'a WeightTensor) -> Self {
        Self {
            weights,
            history: Vec::new(),
            coeffs: Vec::new(),
        }
    }

    fn upward(&self, x: &DVector<f64>) -> Vec<DVector<f64>> {
        let s = &self.weights.tensor.structure;
        let tree = &s.tree;
        let basis = s.col_basis(self.weights.tensor.operator);
        let p = basis.rank();
        let mut coeffs = vec![DVector::zeros(p); tree.len()];
        for id in (0..tree.len()).rev() {
            let node = tree.node(id);
            if let Some(v) = basis.leaf_matrix(id) {
                coeffs[id] = v.tr_mul(&x.rows(node.range.start, node.len()));
            } else {
                let mut acc = DVector::zeros(p);
                for &son in &node.sons {
                    let e = basis.transfer(son).expect("son has transfer");
                    acc += e.tr_mul(&coeffs[son]);
                }
                coeffs[id] = acc;
            }
        }
        coeffs
    }
}

/// `Σ_k d̂_ℓ[n-k] x_k` for every term `ℓ` of a block.
fn fibre_convolution<'v>(d: &DMatrix<C64>, n: usize, xs: impl Iterator<Item = (usize, nalgebra::DVectorView<'v, f64>)>, len: usize) -> Vec<DVector<C64>> {
    let mut acc = vec![DVector::<C64>::zeros(len); d.ncols()];
    for (k, x) in xs {
        if k > n || n - k >= d.nrows() {
            continue;
        }
        for (l, a) in acc.iter_mut().enumerate() {
            let w = d[(n - k, l)];
            if w == C64::new(0.0, 0.0) {
                continue;
            }
            for (ai, &xi) in a.iter_mut().zip(x.iter()) {
                *ai += w * xi;
            }
        }
    }
    acc
}

impl HistorySum for FastHistory<'_> {
    fn push(&mut self, x: &DVector<f64>) {
        let perm = self.weights.tensor.structure.tree.permutation();
        let xt = DVector::from_iterator(perm.len(), perm.iter().map(|&i| x[i]));
        let coeffs = self.upward(&xt);
        self.coeffs.push(coeffs);
        self.history.push(xt);
    }

    fn len(&self) -> usize {
        self.history.len()
    }

    fn evaluate(&self, n: usize) -> DVector<f64> {
        let t = &self.weights.tensor;
        let s = &t.structure;
        let tree = &s.tree;
        let blocks = t.partition_blocks();
        let p = s.value_basis.rank();

        let parts: Vec<DVector<f64>> = blocks
            .par_iter()
            .zip(t.blocks.par_iter())
            .map(|(b, lr)| {
                let (rows, cols) = (tree.node(b.row), tree.node(b.col));
                let (nr, nc) = if b.admissible { (p, p) } else { (rows.len(), cols.len()) };
                let mut out = DVector::<C64>::zeros(nr);
                if lr.rank() == 0 {
                    return out.map(|z| z.re);
                }
                let xs: Vec<DVector<C64>> = if b.admissible {
                    let it = self.coeffs.iter().enumerate().map(|(k, c)| (k, c[b.col].rows(0, p)));
                    fibre_convolution(&lr.d, n, it, nc)
                } else {
                    let it = self.history.iter().enumerate().map(|(k, x)| (k, x.rows(cols.range.start, nc)));
                    fibre_convolution(&lr.d, n, it, nc)
                };
                for (c, x) in lr.c.iter().zip(&xs) {
                    out.gemv(C64::from(1.0), c, x, C64::from(1.0));
                }
                out.map(|z| z.re)
            })
            .collect();

        let m = t.n_panels();
        let mut result = DVector::zeros(m);
        let mut down = vec![DVector::<f64>::zeros(p); tree.len()];
        for (b, part) in blocks.iter().zip(parts) {
            if b.admissible {
                down[b.row] += part;
            } else {
                let node = tree.node(b.row);
                let mut seg = result.rows_mut(node.range.start, node.len());
                seg += part;
            }
        }
        let basis = &s.value_basis;
        for id in 0..tree.len() {
            let node = tree.node(id);
            if down[id].iter().all(|&v| v == 0.0) {
                continue;
            }
            if let Some(u) = basis.leaf_matrix(id) {
                let mut seg = result.rows_mut(node.range.start, node.len());
                seg += u * &down[id];
            } else {
                for &son in &node.sons {
                    let e = basis.transfer(son).expect("son has transfer");
                    let add = e * &down[id];
                    down[son] += add;
                }
            }
        }

        let perm = tree.permutation();
        let mut out = DVector::zeros(m);
        for (pos, &i) in perm.iter().enumerate() {
            out[i] = result[pos];
        }
        out
    }
}

/// `Re Σ_{k ≤ n} V̂_{n-k} x_k` with the compressed weights.
pub fn convolve_rhs(weights: &WeightTensor, history: &[DVector<f64>], n: usize) -> DVector<f64> {
    let mut h = FastHistory::new(weights);
    for x in history {
        h.push(x);
    }
    h.evaluate(n)
}

/// `Re Σ_{k ≤ n} V̂_{n-k} x_k` with dense weights.
pub fn dense_convolution(weights: &[DMatrix<C64>], history: &[DVector<f64>], n: usize) -> DVector<f64> {
    let mut h = DenseHistory::new(weights);
    for x in history {
        h.push(x);
    }
    h.evaluate(n)
}

#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct MotTimings {
    /// Factorisation of the zero-order weight.
    pub factor_s: f64,
    /// Time stepping including all history sums.
    pub march_s: f64,
}

#[derive(Debug, Clone)]
pub struct MotSolution {
    /// Neumann coefficients `q_0, ..., q_N`.
    pub q: Vec<DVector<f64>>,
    pub timings: MotTimings,
}

/// Symmetric part of the real part.
fn symmetric_real(w: &DMatrix<C64>) -> DMatrix<f64> {
    let re = w.map(|z| z.re);
    (&re + re.transpose()) * 0.5
}

/// Cholesky factor of the symmetrised real part of `V̂_0`.
pub fn factor_weight0(v0: &DMatrix<C64>) -> Result<Cholesky<f64, nalgebra::Dyn>, SolverError> {
    Cholesky::new(symmetric_real(v0)).ok_or(SolverError::NotPositiveDefinite)
}

fn march(
    v0: &DMatrix<C64>,
    mut v_hist: impl HistorySum,
    mut k_hist: impl HistorySum,
    g: &[DVector<f64>],
    mass: &DVector<f64>,
    n_weights: usize,
) -> Result<MotSolution, SolverError> {
    let m = v0.nrows();
    if g.len() > n_weights {
        return Err(SolverError::Mismatch(format!("{} data vectors but only {n_weights} weights", g.len())));
    }
    if mass.len() != m || g.iter().any(|x| x.len() != m) {
        return Err(SolverError::Mismatch(format!("vectors must have length {m}")));
    }
    let start = Instant::now();
    let chol = factor_weight0(v0)?;
    let factor_s = start.elapsed().as_secs_f64();

    let start = Instant::now();
    let mut q = Vec::with_capacity(g.len());
    for (n, gn) in g.iter().enumerate() {
        k_hist.push(gn);
        let mut rhs = k_hist.evaluate(n) - v_hist.evaluate(n);
        rhs -= gn.component_mul(mass) * 0.5;
        let qn = chol.solve(&rhs);
        v_hist.push(&qn);
        q.push(qn);
    }
    Ok(MotSolution {
        q,
        timings: MotTimings {
            factor_s,
            march_s: start.elapsed().as_secs_f64(),
        },
    })
}

/// Solves `V̂_0 q_n = (-½M + K̂_0) g_n + Σ_{k<n} (K̂_{n-k} g_k - V̂_{n-k} q_k)`
/// with compressed weights. `mass` is the diagonal of the P0 Gram matrix.
pub fn mot_solve(
    v: &WeightTensor,
    k: &WeightTensor,
    g: &[DVector<f64>],
    mass: &DVector<f64>,
) -> Result<MotSolution, SolverError> {
    if v.n_steps != k.n_steps || v.radius != k.radius || v.dt != k.dt {
        return Err(SolverError::Mismatch("weight tensors come from different schemes".into()));
    }
    if v.n_panels() != k.n_panels() {
        return Err(SolverError::Mismatch("weight tensors have different sizes".into()));
    }
    let v0 = v.slice(0);
    march(&v0, FastHistory::new(v), FastHistory::new(k), g, mass, v.len())
}

/// Same time stepping with dense weights.
pub fn mot_solve_dense(
    v: &[DMatrix<C64>],
    k: &[DMatrix<C64>],
    g: &[DVector<f64>],
    mass: &DVector<f64>,
) -> Result<MotSolution, SolverError> {
    if v.len() != k.len() || v.is_empty() {
        return Err(SolverError::Mismatch("weight sequences differ in length or are empty".into()));
    }
    march(&v[0], DenseHistory::new(v), DenseHistory::new(k), g, mass, v.len())
}

/// Wave profile `f(z) = cos(5z + 1) - 1` for `z > -1/5`, else 0.
pub fn profile(z: f64) -> f64 {
    if z > -0.2 {
        (5.0 * z + 1.0).cos() - 1.0
    } else {
        0.0
    }
}

pub fn profile_derivative(z: f64) -> f64 {
    if z > -0.2 {
        -5.0 * (5.0 * z + 1.0).sin()
    } else {
        0.0
    }
}

/// Outgoing spherical wave `u(x,t) = f(t + shift - |x|) / |x|`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SphericalWave {
    pub shift: f64,
}

impl SphericalWave {
    pub fn new(shift: f64) -> Self {
        Self { shift }
    }

    /// Wave whose front touches the closest point of the surface at `t = 0`.
    pub fn arriving_at(mesh: &SurfaceMesh) -> Self {
        Self::new(min_surface_radius(mesh) - 0.2)
    }

    pub fn value(&self, x: &Vec3, t: f64) -> f64 {
        let r = x.norm();
        profile(t + self.shift - r) / r
    }

    /// `∂u/∂n = ∂u/∂r (x/|x|)·n`
    pub fn normal_derivative(&self, x: &Vec3, normal: &Vec3, t: f64) -> f64 {
        let r = x.norm();
        let z = t + self.shift - r;
        let du_dr = -profile_derivative(z) / r - profile(z) / (r * r);
        du_dr * x.dot(normal) / r
    }
}

/// Dirichlet data sampled at panel centroids for `t_n = n Δt`, `n = 0..=N`.
pub fn dirichlet_data(mesh: &SurfaceMesh, scheme: &CqmScheme, wave: &SphericalWave) -> Vec<DVector<f64>> {
    (0..=scheme.n_steps)
        .map(|n| {
            let t = n as f64 * scheme.dt;
            DVector::from_iterator(mesh.len(), mesh.centroids().iter().map(|c| wave.value(c, t)))
        })
        .collect()
}

/// Exact Neumann trace at panel centroids for `t_n = n Δt`, `n = 0..=N`.
pub fn neumann_trace(mesh: &SurfaceMesh, scheme: &CqmScheme, wave: &SphericalWave) -> Vec<DVector<f64>> {
    (0..=scheme.n_steps)
        .map(|n| {
            let t = n as f64 * scheme.dt;
            let vals = mesh
                .centroids()
                .iter()
                .zip(mesh.normals())
                .map(|(c, nrm)| wave.normal_derivative(c, nrm, t));
            DVector::from_iterator(mesh.len(), vals)
        })
        .collect()
}

/// Distance from the origin to the closest point of the surface.
pub fn min_surface_radius(mesh: &SurfaceMesh) -> f64 {
    (0..mesh.len())
        .map(|p| point_triangle_distance(&Vec3::zeros(), &mesh.corners(p)))
        .fold(f64::INFINITY, f64::min)
}

fn point_triangle_distance(x: &Vec3, [a, b, c]: &[Vec3; 3]) -> f64 {
    let (ab, ac, ap) = (b - a, c - a, x - a);
    let (d1, d2) = (ab.dot(&ap), ac.dot(&ap));
    if d1 <= 0.0 && d2 <= 0.0 {
        return ap.norm();
    }
    let bp = x - b;
    let (d3, d4) = (ab.dot(&bp), ac.dot(&bp));
    if d3 >= 0.0 && d4 <= d3 {
        return bp.norm();
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        return (x - (a + ab * (d1 / (d1 - d3)))).norm();
    }
    let cp = x - c;
    let (d5, d6) = (ab.dot(&cp), ac.dot(&cp));
    if d6 >= 0.0 && d5 <= d6 {
        return cp.norm();
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        return (x - (a + ac * (d2 / (d2 - d6)))).norm();
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && d4 - d3 >= 0.0 && d5 - d6 >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return (x - (b + (c - b) * w)).norm();
    }
    let denom = 1.0 / (va + vb + vc);
    (x - (a + ab * (vb * denom) + ac * (vc * denom))).norm()
}

/// Number of steps for a Courant number `Δt / h` on `[0, T]`.
pub fn steps_for_courant(final_time: f64, mesh_width: f64, courant: f64) -> usize {
    ((final_time / (courant * mesh_width)).ceil() as usize).max(1)
}

/// `‖v‖_{L²(Γ)}` of a piecewise constant function.
pub fn l2_norm(mesh: &SurfaceMesh, v: &DVector<f64>) -> f64 {
    mesh.areas().iter().zip(v.iter()).map(|(a, x)| a * x * x).sum::<f64>().sqrt()
}

/// `sqrt(Σ_n ‖a_n - b_n‖²) / sqrt(Σ_n ‖b_n‖²)` in `L²(Γ)`.
pub fn time_averaged_error(mesh: &SurfaceMesh, approx: &[DVector<f64>], exact: &[DVector<f64>]) -> f64 {
    let (mut err, mut norm) = (0.0, 0.0);
    for (a, b) in approx.iter().zip(exact) {
        err += l2_norm(mesh, &(a - b)).powi(2);
        norm += l2_norm(mesh, b).powi(2);
    }
    if norm == 0.0 {
        err.sqrt()
    } else {
        (err / norm).sqrt()
    }
}

/// `sqrt(Σ_n ‖q_n - q̃_n‖²) / sqrt(Σ_n ‖q_n - q̃ref_n‖²)`: how much the
/// compression changes the discretisation error.
pub fn deviation_ratio(mesh: &SurfaceMesh, approx: &[DVector<f64>], reference: &[DVector<f64>], exact: &[DVector<f64>]) -> f64 {
    let sum = |xs: &[DVector<f64>]| -> f64 { xs.iter().zip(exact).map(|(x, e)| l2_norm(mesh, &(x - e)).powi(2)).sum() };
    (sum(approx) / sum(reference)).sqrt()
}

/// Per-step record of a solve.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct StepRecord {
    pub n: usize,
    pub t: f64,
    pub q_norm: f64,
    pub error: f64,
    pub relative_error: Option<f64>,
    /// `‖q_n - q̃_n‖ / ‖q_n - q̃ref_n‖` against a dense reference solve.
    pub deviation: Option<f64>,
}

pub fn step_records(
    mesh: &SurfaceMesh,
    dt: f64,
    q: &[DVector<f64>],
    exact: &[DVector<f64>],
    reference: Option<&[DVector<f64>]>,
) -> Vec<StepRecord> {
    q.iter()
        .zip(exact)
        .enumerate()
        .map(|(n, (qn, en))| {
            let error = l2_norm(mesh, &(qn - en));
            let exact_norm = l2_norm(mesh, en);
            let deviation = reference.map(|r| {
                let denom = l2_norm(mesh, &(&r[n] - en));
                if denom == 0.0 {
                    if error == 0.0 {
                        1.0
                    } else {
                        f64::INFINITY
                    }
                } else {
                    error / denom
                }
            });
            StepRecord {
                n,
                t: n as f64 * dt,
                q_norm: l2_norm(mesh, qn),
                error,
                relative_error: (exact_norm > 0.0).then(|| error / exact_norm),
                deviation,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::{assemble_dense_tensor, Operator, QuadratureConfig};
    use crate::htensor::{compress, CompressionParams};
    use crate::kernels::{cqm_frequencies, default_radius, Method};
    use crate::maca::LowRankTensorBlock;
    use crate::mesh::{make_sphere, make_tetrahedron};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rel(a: &DMatrix<C64>, b: &DMatrix<C64>) -> f64 {
        (a - b).norm() / b.norm().max(1e-300)
    }

    fn random_vectors(rng: &mut ChaCha8Rng, m: usize, count: usize) -> Vec<DVector<f64>> {
        (0..count).map(|_| DVector::from_fn(m, |_, _| rng.gen_range(-1.0..1.0))).collect()
    }

    fn direct_fibre(d: &[C64], radius: f64, n: usize) -> C64 {
        let len = d.len();
        let sum: C64 = d
            .iter()
            .enumerate()
            .map(|(l, &v)| v * C64::from_polar(1.0, -2.0 * std::f64::consts::PI * (n * l) as f64 / len as f64))
            .sum();
        sum * radius.powi(-(n as i32)) / len as f64
    }

    #[test]
    fn constant_fibre_transforms_to_delta() {
        let d = DMatrix::from_element(6, 1, C64::from(1.0));
        let t = transform_fibres(&d, 1.0);
        assert_eq!(t.nrows(), 7);
        assert!((t[(0, 0)] - C64::from(1.0)).norm() < 1e-15);
        for n in 1..6 {
            assert!(t[(n, 0)].norm() < 1e-15);
        }
        assert!((t[(6, 0)] - C64::from(1.0)).norm() < 1e-15);
    }

    #[test]
    fn two_point_transform_by_hand() {
        let (a, b) = (C64::new(2.0, 1.0), C64::new(-0.5, 3.0));
        let d = DMatrix::from_column_slice(2, 1, &[a, b]);
        let r = 0.7;
        let t = transform_fibres(&d, r);
        assert!((t[(0, 0)] - (a + b) / 2.0).norm() < 1e-15);
        assert!((t[(1, 0)] - (a - b) / (2.0 * r)).norm() < 1e-15);
        assert!((t[(2, 0)] - (a + b) / (2.0 * r * r)).norm() < 1e-14);
    }

    proptest! {
        #[test]
        fn fft_matches_direct_sum(n in 1usize..40, seed in 0u64..1000, radius in 0.3f64..1.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let vals: Vec<C64> = (0..n).map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
            let d = DMatrix::from_column_slice(n, 1, &vals);
            let t = transform_fibres(&d, radius);
            for k in 0..=n {
                let want = direct_fibre(&vals, radius, k);
                prop_assert!((t[(k, 0)] - want).norm() <= 1e-12 * want.norm().max(radius.powi(-(k as i32))));
            }
        }

        #[test]
        fn transform_commutes_with_expansion(seed in 0u64..200, rank in 0usize..4, n in 1usize..10) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut cval = || C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            let c: Vec<DMatrix<C64>> = (0..rank).map(|_| DMatrix::from_fn(3, 4, |_, _| cval())).collect();
            let d = DMatrix::from_fn(n, rank, |_, _| cval());
            let block = LowRankTensorBlock::from_factors(c, d);
            let radius = default_radius(n);
            let dense = dense_weights(&block.expand(), radius);
            let fast = block.with_fibres(transform_fibres(&block.d, radius));
            for (k, w) in dense.iter().enumerate() {
                let got = crate::maca::lr_slice(&fast, k).unwrap();
                prop_assert!((&got - w).norm() <= 1e-12 * w.norm().max(1e-300) + 1e-300);
            }
        }
    }

    fn tetra_setup(n: usize, eps: f64, order: usize) -> (SurfaceMesh, CqmScheme, CompressionParams) {
        let mesh = make_tetrahedron();
        let scheme = cqm_frequencies(n, 1.0, default_radius(n), Method::Bdf2).unwrap();
        let params = CompressionParams {
            n_min: 2,
            eps,
            order,
            ..Default::default()
        };
        (mesh, scheme, params)
    }

    #[test]
    fn compressed_weights_match_dense_path() {
        let (mesh, scheme, params) = tetra_setup(8, 1e-12, 4);
        let dense = assemble_dense_tensor(&mesh, &scheme, Operator::SingleLayer, &params.quad);
        let ht = compress(&mesh, &scheme, &params, Operator::SingleLayer).unwrap();
        let wt = transform_weights(&ht, &scheme).unwrap();
        let oracle = dense_weights(&ht.expand_dense().unwrap(), scheme.radius);
        let fast = wt.expand_dense().unwrap();
        for (a, b) in fast.iter().zip(&oracle) {
            assert!(rel(a, b) < 1e-10, "{}", rel(a, b));
        }
        assert!(imaginary_residue(&dense_weights(&dense, scheme.radius)) < 1e-10);
        assert!(imaginary_residue(&fast) < 1e-10);
    }

    #[test]
    fn fast_convolution_matches_naive_sum() {
        let mesh = make_sphere(1);
        let n = 6;
        let scheme = cqm_frequencies(n, 2.0, default_radius(n), Method::Bdf2).unwrap();
        let params = CompressionParams {
            n_min: 4,
            eps: 1e-8,
            order: 2,
            direct_small_far: false,
            ..Default::default()
        };
        for op in [Operator::SingleLayer, Operator::DoubleLayer] {
            let ht = compress(&mesh, &scheme, &params, op).unwrap();
            assert!(ht.partition_blocks().iter().any(|b| b.admissible));
            let wt = transform_weights(&ht, &scheme).unwrap();
            let weights = wt.expand_dense().unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(5);
            let hist = random_vectors(&mut rng, mesh.len(), n + 1);
            for upto in [0, 3, n] {
                let fast = convolve_rhs(&wt, &hist[..=upto], upto);
                let naive = dense_convolution(&weights, &hist[..=upto], upto);
                assert!((&fast - &naive).norm() <= 1e-10 * naive.norm(), "{op:?} n={upto}");
            }
        }
    }

    #[test]
    fn delta_history_picks_a_column() {
        let (mesh, scheme, params) = tetra_setup(8, 1e-12, 3);
        let ht = compress(&mesh, &scheme, &params, Operator::SingleLayer).unwrap();
        let wt = transform_weights(&ht, &scheme).unwrap();
        let mut e1 = DVector::zeros(mesh.len());
        e1[1] = 1.0;
        let mut hist = vec![e1];
        hist.extend((0..5).map(|_| DVector::zeros(mesh.len())));
        for n in 0..6 {
            let got = convolve_rhs(&wt, &hist[..=n], n);
            let want = wt.slice(n).column(1).map(|z| z.re);
            assert!((&got - &want).norm() <= 1e-12 * want.norm());
        }
    }

    #[test]
    fn rank_zero_tensor_gives_zero() {
        let (mesh, scheme, params) = tetra_setup(4, 1e-12, 2);
        let ht = compress(&mesh, &scheme, &params, Operator::SingleLayer).unwrap();
        let zero = HTensor {
            blocks: ht.blocks.iter().map(|b| LowRankTensorBlock::zero(b.dims())).collect(),
            ..ht
        };
        let wt = transform_weights(&zero, &scheme).unwrap();
        let hist = vec![DVector::from_element(mesh.len(), 1.0); 3];
        assert_eq!(convolve_rhs(&wt, &hist, 2).norm(), 0.0);
    }

    #[test]
    fn weights_decay_on_sphere() {
        let mesh = make_sphere(0);
        let n = 24;
        let scheme = cqm_frequencies(n, 0.5 * mesh.mesh_width() * n as f64, default_radius(n), Method::Bdf2).unwrap();
        let dense = assemble_dense_tensor(&mesh, &scheme, Operator::SingleLayer, &QuadratureConfig::default());
        let w = dense_weights(&dense, scheme.radius);
        assert!(imaginary_residue(&w) < 1e-10);
        // the last weight is R^{-N} times the first; the envelope runs over n < N
        let norms: Vec<f64> = w[..n].iter().map(|x| x.norm()).collect();
        let envelope: Vec<f64> = (0..n).map(|i| norms[i..].iter().cloned().fold(0.0, f64::max)).collect();
        // oscillations below 1e-6 of the first weight are tolerated
        for i in 1..n {
            if envelope[i - 1] > 1e-6 * norms[0] {
                assert!(envelope[i] < envelope[i - 1], "{i}: {envelope:?}");
            } else {
                assert!(envelope[i] <= envelope[i - 1]);
            }
        }
        assert!(norms[n - 1] < 1e-2 * norms[0]);
        assert!(rel(&w[n], &(&w[0] * C64::from(scheme.radius.powi(-(n as i32))))) < 1e-12);
    }

    #[test]
    fn zero_data_gives_zero_solution() {
        let (mesh, scheme, params) = tetra_setup(4, 1e-10, 3);
        let v = transform_weights(&compress(&mesh, &scheme, &params, Operator::SingleLayer).unwrap(), &scheme).unwrap();
        let k = transform_weights(&compress(&mesh, &scheme, &params, Operator::DoubleLayer).unwrap(), &scheme).unwrap();
        let g = vec![DVector::zeros(mesh.len()); 5];
        let mass = DVector::from_column_slice(mesh.areas());
        let sol = mot_solve(&v, &k, &g, &mass).unwrap();
        assert!(sol.q.iter().all(|q| q.iter().all(|&x| x == 0.0)));
    }

    #[test]
    fn single_step_is_one_solve() {
        let (mesh, scheme, params) = tetra_setup(1, 1e-10, 3);
        let quad = params.quad;
        let vd = dense_weights(&assemble_dense_tensor(&mesh, &scheme, Operator::SingleLayer, &quad), scheme.radius);
        let kd = dense_weights(&assemble_dense_tensor(&mesh, &scheme, Operator::DoubleLayer, &quad), scheme.radius);
        let g0 = DVector::from_fn(mesh.len(), |i, _| 1.0 + i as f64);
        let mass = DVector::from_column_slice(mesh.areas());
        let sol = mot_solve_dense(&vd, &kd, std::slice::from_ref(&g0), &mass).unwrap();
        let v0 = vd[0].map(|z| z.re);
        let rhs = kd[0].map(|z| z.re) * &g0 - g0.component_mul(&mass) * 0.5;
        assert!((&v0 * &sol.q[0] - &rhs).norm() < 1e-10 * rhs.norm());
    }

    #[test]
    fn fast_and_dense_marching_agree() {
        let (mesh, scheme, params) = tetra_setup(8, 1e-10, 6);
        let quad = params.quad;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let g = random_vectors(&mut rng, mesh.len(), 9);
        let mass = DVector::from_column_slice(mesh.areas());
        let vd = dense_weights(&assemble_dense_tensor(&mesh, &scheme, Operator::SingleLayer, &quad), scheme.radius);
        let kd = dense_weights(&assemble_dense_tensor(&mesh, &scheme, Operator::DoubleLayer, &quad), scheme.radius);
        let dense = mot_solve_dense(&vd, &kd, &g, &mass).unwrap();
        let v = transform_weights(&compress(&mesh, &scheme, &params, Operator::SingleLayer).unwrap(), &scheme).unwrap();
        let k = transform_weights(&compress(&mesh, &scheme, &params, Operator::DoubleLayer).unwrap(), &scheme).unwrap();
        let fast = mot_solve(&v, &k, &g, &mass).unwrap();
        for (a, b) in fast.q.iter().zip(&dense.q) {
            assert!((a - b).norm() <= 1e-6 * b.norm());
        }
    }

    #[test]
    fn indefinite_weight_is_rejected() {
        let mut v = vec![DMatrix::from_element(2, 2, C64::from(0.0)); 2];
        v[0][(0, 0)] = C64::from(-1.0);
        v[0][(1, 1)] = C64::from(1.0);
        let k = v.clone();
        let g = vec![DVector::zeros(2)];
        let err = mot_solve_dense(&v, &k, &g, &DVector::from_element(2, 1.0)).unwrap_err();
        assert!(matches!(err, SolverError::NotPositiveDefinite));
    }

    #[test]
    fn wave_profile_values() {
        assert_eq!(profile(-0.2), 0.0);
        assert!(((5.0 * -0.2 + 1.0f64).cos() - 1.0).abs() < 1e-15);
        assert!((profile(0.0) - (1.0f64.cos() - 1.0)).abs() < 1e-15);
        assert!((profile(0.0) + 0.4597).abs() < 1e-4);
        assert_eq!(profile(-3.0), 0.0);
        let wave = SphericalWave::new(0.0);
        let x = Vec3::new(0.0, 0.0, 1.0);
        assert!((wave.value(&x, 1.0) - (1.0f64.cos() - 1.0)).abs() < 1e-15);
    }

    #[test]
    fn normal_derivative_matches_finite_difference() {
        let wave = SphericalWave::new(0.3);
        let x = Vec3::new(0.4, -0.7, 0.9);
        let n = Vec3::new(0.2, 0.5, -0.3).normalize();
        for t in [0.5, 1.2, 2.0] {
            let h = 1e-6;
            let fd = (wave.value(&(x + n * h), t) - wave.value(&(x - n * h), t)) / (2.0 * h);
            assert!((wave.normal_derivative(&x, &n, t) - fd).abs() < 1e-7);
        }
    }

    #[test]
    fn data_vanishes_before_arrival() {
        let mesh = make_sphere(1);
        let wave = SphericalWave::arriving_at(&mesh);
        let scheme = cqm_frequencies(10, 3.0, default_radius(10), Method::Bdf2).unwrap();
        let g = dirichlet_data(&mesh, &scheme, &wave);
        assert_eq!(g.len(), 11);
        assert!(g[0].iter().all(|&x| x == 0.0));
        assert!(g[10].iter().any(|&x| x != 0.0));
        let early = SphericalWave::new(wave.shift - 5.0);
        assert!(dirichlet_data(&mesh, &scheme, &early).iter().take(5).all(|g| g.iter().all(|&x| x == 0.0)));
    }

    #[test]
    fn surface_radius_of_unit_cube() {
        let mesh = crate::mesh::make_cube();
        let centre = mesh.vertex_barycentre();
        let shifted = SurfaceMesh::new(mesh.vertices().iter().map(|v| v - centre).collect(), mesh.triangles().to_vec()).unwrap();
        let half = (mesh.vertices()[0] - centre).abs().max();
        assert!((min_surface_radius(&shifted) - half).abs() < 1e-14);
        let s = make_sphere(2);
        assert!(min_surface_radius(&s) <= s.min_centroid_radius() + 1e-15);
        assert!(min_surface_radius(&s) > 0.9);
    }

    #[test]
    fn courant_steps() {
        assert_eq!(steps_for_courant(3.0, 0.6, 0.5), 10);
        assert_eq!(steps_for_courant(1e-9, 1.0, 0.5), 1);
    }

    #[test]
    fn error_metrics() {
        let mesh = make_tetrahedron();
        let e = vec![DVector::from_element(4, 2.0); 3];
        assert_eq!(time_averaged_error(&mesh, &e, &e), 0.0);
        let a: Vec<_> = e.iter().map(|x| x * 1.5).collect();
        assert!((time_averaged_error(&mesh, &a, &e) - 0.5).abs() < 1e-14);
        let r: Vec<_> = e.iter().map(|x| x * 2.0).collect();
        assert!((deviation_ratio(&mesh, &a, &r, &e) - 0.5).abs() < 1e-14);
        let recs = step_records(&mesh, 0.1, &a, &e, Some(&r));
        assert_eq!(recs.len(), 3);
        assert!((recs[2].t - 0.2).abs() < 1e-15);
        assert!((recs[1].relative_error.unwrap() - 0.5).abs() < 1e-14);
        assert!((recs[0].deviation.unwrap() - 0.5).abs() < 1e-14);
    }
}
