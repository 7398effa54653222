//! Hierarchical tensor approximation of a boundary element operator
//! across all quadrature frequencies.
//!
//! Every block of the partition is lifted to a block of the frequency
//! tensor. Inadmissible blocks are compressed directly from Galerkin
//! entries; admissible blocks compress the kernel at interpolation node
//! pairs and are expanded through the nested cluster bases.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assembly::{pair_rule, Operator, PairRule, QuadratureConfig};
use crate::chebyshev::{BasisKind, ClusterBasis};
use crate::clustering::{Block, BlockPartition, ClusterError, ClusterTree};
use crate::kernels::{slp_radial, CqmScheme, C64};
use crate::maca::{maca, LowRankTensorBlock, TensorEntries};
use crate::mesh::SurfaceMesh;

/// Largest dense expansion `M² N` allowed.
pub const DENSE_CAP: usize = 1 << 26;

const MAGIC: &[u8; 8] = b"CQBEMHT\0";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum HTensorError {
    #[error(transparent)]
    Cluster(#[from] ClusterError),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("dense expansion of {0} scalars exceeds the cap of {DENSE_CAP}")]
    TooLarge(usize),
    #[error("dimension mismatch: {0}")]
    Mismatch(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed factor file: {0}")]
    Format(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompressionParams {
    pub n_min: usize,
    pub eta: f64,
    /// Chebyshev points per axis.
    pub order: usize,
    pub eps: f64,
    /// Overrides `eps` for inadmissible blocks.
    pub eps_near: Option<f64>,
    /// Overrides `eps` for admissible blocks.
    pub eps_far: Option<f64>,
    pub quad: QuadratureConfig,
    /// Compress admissible blocks from Galerkin entries when their
    /// coupling matrix would hold more entries than the block itself.
    pub direct_small_far: bool,
}

impl Default for CompressionParams {
    fn default() -> Self {
        Self {
            n_min: 32,
            eta: 2.0,
            order: 4,
            eps: 1e-4,
            eps_near: None,
            eps_far: None,
            quad: QuadratureConfig::default(),
            direct_small_far: true,
        }
    }
}

impl CompressionParams {
    pub fn validate(&self) -> Result<(), HTensorError> {
        let bad = |m: &str| Err(HTensorError::InvalidParameter(m.into()));
        if self.n_min < 1 {
            return bad("n_min must be at least 1");
        }
        if !(self.eta > 0.0) {
            return bad("eta must be positive");
        }
        if self.order < 1 {
            return bad("interpolation order must be at least 1");
        }
        for eps in [Some(self.eps), self.eps_near, self.eps_far].into_iter().flatten() {
            if !(eps >= 0.0) {
                return bad("tolerances must be non-negative");
            }
        }
        self.quad.validate().map_err(HTensorError::InvalidParameter)
    }

    fn near_eps(&self) -> f64 {
        self.eps_near.unwrap_or(self.eps)
    }

    fn far_eps(&self) -> f64 {
        self.eps_far.unwrap_or(self.eps)
    }
}

/// Frequency-independent data: cluster tree, partition and bases. Built
/// once and shared by all operators on the same mesh.
#[derive(Debug)]
pub struct HStructure {
    pub tree: ClusterTree,
    pub partition: BlockPartition,
    pub value_basis: ClusterBasis,
    pub normal_basis: ClusterBasis,
    pub n_panels: usize,
    pub n_min: usize,
    pub eta: f64,
    pub order: usize,
    pub direct_small_far: bool,
}

impl HStructure {
    pub fn build(mesh: &SurfaceMesh, params: &CompressionParams) -> Result<Self, HTensorError> {
        let CompressionParams {
            n_min,
            eta,
            order,
            direct_small_far,
            ..
        } = *params;
        let tree = ClusterTree::for_mesh(mesh, n_min)?;
        let mut partition = BlockPartition::build(&tree, &tree, eta);
        if direct_small_far {
            let p2 = order.pow(6);
            partition.demote(|b| tree.node(b.row).len() * tree.node(b.col).len() <= p2);
        }
        let (value_basis, normal_basis) = rayon::join(
            || ClusterBasis::build(&tree, mesh, order, BasisKind::Value),
            || ClusterBasis::build(&tree, mesh, order, BasisKind::NormalDerivative),
        );
        Ok(Self {
            tree,
            partition,
            value_basis,
            normal_basis,
            n_panels: mesh.len(),
            n_min,
            eta,
            order,
            direct_small_far,
        })
    }

    /// Column basis for far blocks of an operator.
    pub fn col_basis(&self, op: Operator) -> &ClusterBasis {
        match op {
            Operator::SingleLayer => &self.value_basis,
            Operator::DoubleLayer => &self.normal_basis,
        }
    }

    pub fn rank(&self) -> usize {
        self.value_basis.rank()
    }
}

#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct CompressionTimings {
    pub structure_s: f64,
    pub near_s: f64,
    pub far_s: f64,
}

/// Compressed tensor: one low-rank factorisation per partition block,
/// aligned with `structure.partition.blocks()`.
#[derive(Debug, Clone)]
pub struct HTensor {
    pub structure: Arc<HStructure>,
    pub operator: Operator,
    pub blocks: Vec<LowRankTensorBlock>,
    /// Length of the last mode.
    pub n_slices: usize,
    pub eps: f64,
    pub timings: CompressionTimings,
}

/// Galerkin entries of one inadmissible block.
struct NearEntries<'a> {
    rules: Vec<PairRule>,
    n_cols: usize,
    n_rows: usize,
    scheme: &'a CqmScheme,
    op: Operator,
}

impl<'a> NearEntries<'a> {
    fn new(mesh: &SurfaceMesh, rows: &[usize], cols: &[usize], scheme: &'a CqmScheme, op: Operator, quad: &QuadratureConfig) -> Self {
        let rules = rows
            .iter()
            .flat_map(|&i| cols.iter().map(move |&j| pair_rule(mesh, i, j, quad)))
            .collect();
        Self {
            rules,
            n_rows: rows.len(),
            n_cols: cols.len(),
            scheme,
            op,
        }
    }
}

/// Evaluates on the half spectrum and mirrors the rest.
fn mirrored_fibre(scheme: &CqmScheme, f: impl Fn(C64) -> C64) -> Vec<C64> {
    let half: Vec<C64> = scheme.half_spectrum().map(|l| f(scheme.frequencies[l])).collect();
    (0..scheme.n_steps)
        .map(|k| match scheme.mirror(k) {
            (l, false) => half[l],
            (l, true) => half[l].conj(),
        })
        .collect()
}

fn mirrored_slice(scheme: &CqmScheme, k: usize, rows: usize, cols: usize, f: impl Fn(usize, usize, C64) -> C64) -> DMatrix<C64> {
    let (l, conj) = scheme.mirror(k);
    let s = scheme.frequencies[l];
    DMatrix::from_fn(rows, cols, |i, j| {
        let v = f(i, j, s);
        if conj {
            v.conj()
        } else {
            v
        }
    })
}

impl TensorEntries for NearEntries<'_> {
    fn dims(&self) -> (usize, usize, usize) {
        (self.n_rows, self.n_cols, self.scheme.n_steps)
    }

    fn slice(&self, k: usize) -> DMatrix<C64> {
        mirrored_slice(self.scheme, k, self.n_rows, self.n_cols, |i, j, s| {
            self.rules[i * self.n_cols + j].eval(self.op, s)
        })
    }

    fn fibre(&self, i: usize, j: usize) -> Vec<C64> {
        let rule = &self.rules[i * self.n_cols + j];
        mirrored_fibre(self.scheme, |s| rule.eval(self.op, s))
    }
}

/// Kernel at interpolation node pairs of one admissible block.
struct FarEntries<'a> {
    dist: DMatrix<f64>,
    scheme: &'a CqmScheme,
}

impl TensorEntries for FarEntries<'_> {
    fn dims(&self) -> (usize, usize, usize) {
        (self.dist.nrows(), self.dist.ncols(), self.scheme.n_steps)
    }

    fn slice(&self, k: usize) -> DMatrix<C64> {
        mirrored_slice(self.scheme, k, self.dist.nrows(), self.dist.ncols(), |i, j, s| {
            slp_radial(self.dist[(i, j)], s)
        })
    }

    fn fibre(&self, i: usize, j: usize) -> Vec<C64> {
        let r = self.dist[(i, j)];
        mirrored_fibre(self.scheme, |s| slp_radial(r, s))
    }
}

/// Builds the structure and compresses one operator.
pub fn compress(mesh: &SurfaceMesh, scheme: &CqmScheme, params: &CompressionParams, op: Operator) -> Result<HTensor, HTensorError> {
    params.validate()?;
    let start = Instant::now();
    let structure = Arc::new(HStructure::build(mesh, params)?);
    let structure_s = start.elapsed().as_secs_f64();
    let mut ht = compress_with(structure, mesh, scheme, params, op)?;
    ht.timings.structure_s = structure_s;
    Ok(ht)
}

/// Compresses one operator on an existing structure.
pub fn compress_with(
    structure: Arc<HStructure>,
    mesh: &SurfaceMesh,
    scheme: &CqmScheme,
    params: &CompressionParams,
    op: Operator,
) -> Result<HTensor, HTensorError> {
    params.validate()?;
    if structure.n_panels != mesh.len() {
        return Err(HTensorError::Mismatch("structure was built for another mesh".into()));
    }
    if structure.order != params.order
        || structure.n_min != params.n_min
        || structure.eta != params.eta
        || structure.direct_small_far != params.direct_small_far
    {
        return Err(HTensorError::Mismatch("structure parameters differ from the compression parameters".into()));
    }
    let tree = &structure.tree;
    let blocks = structure.partition.blocks();

    let compress_block = |b: &Block| -> LowRankTensorBlock {
        if b.admissible {
            let (gr, gc) = (structure.value_basis.grid(b.row), structure.value_basis.grid(b.col));
            let (pr, pc) = (gr.points(), gc.points());
            let dist = DMatrix::from_fn(pr.len(), pc.len(), |mu, nu| (pr[mu] - pc[nu]).norm());
            maca(&FarEntries { dist, scheme }, params.far_eps())
        } else {
            let entries = NearEntries::new(mesh, tree.indices(b.row), tree.indices(b.col), scheme, op, &params.quad);
            maca(&entries, params.near_eps())
        }
    };

    let start = Instant::now();
    let near: Vec<(usize, LowRankTensorBlock)> = blocks
        .par_iter()
        .enumerate()
        .filter(|(_, b)| !b.admissible)
        .map(|(idx, b)| (idx, compress_block(b)))
        .collect();
    let near_s = start.elapsed().as_secs_f64();
    let start = Instant::now();
    let far: Vec<(usize, LowRankTensorBlock)> = blocks
        .par_iter()
        .enumerate()
        .filter(|(_, b)| b.admissible)
        .map(|(idx, b)| (idx, compress_block(b)))
        .collect();
    let far_s = start.elapsed().as_secs_f64();

    let mut slots: Vec<Option<LowRankTensorBlock>> = vec![None; blocks.len()];
    for (idx, block) in near.into_iter().chain(far) {
        slots[idx] = Some(block);
    }
    Ok(HTensor {
        structure,
        operator: op,
        blocks: slots.into_iter().map(|b| b.expect("every block compressed")).collect(),
        n_slices: scheme.n_steps,
        eps: params.eps,
        timings: CompressionTimings {
            structure_s: 0.0,
            near_s,
            far_s,
        },
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct StorageReport {
    pub near: usize,
    pub far_coupling: usize,
    pub bases: usize,
    pub total: usize,
    /// `M² N`
    pub dense: usize,
    /// Near field plus one coupling matrix per far block and slice.
    pub h2_only: usize,
}

impl HTensor {
    pub fn n_panels(&self) -> usize {
        self.structure.n_panels
    }

    pub fn partition_blocks(&self) -> &[Block] {
        self.structure.partition.blocks()
    }

    /// Same blocks with new fibres, e.g. after a transform along the last mode.
    pub fn map_fibres(&self, n_slices: usize, f: impl Fn(&DMatrix<C64>) -> DMatrix<C64> + Sync) -> HTensor {
        let blocks = self
            .blocks
            .par_iter()
            .map(|b| {
                let d = f(&b.d);
                assert_eq!(d.nrows(), n_slices);
                b.with_fibres(d)
            })
            .collect();
        HTensor {
            structure: Arc::clone(&self.structure),
            operator: self.operator,
            blocks,
            n_slices,
            eps: self.eps,
            timings: self.timings,
        }
    }

    /// Dense values of one block at slice `k`, rows and columns in tree order.
    pub fn block_slice(&self, idx: usize, k: usize) -> DMatrix<C64> {
        let b = self.partition_blocks()[idx];
        let lr = &self.blocks[idx];
        let core = crate::maca::lr_slice(lr, k).expect("slice in range");
        if !b.admissible {
            return core;
        }
        let tree = &self.structure.tree;
        let u = to_complex(&self.structure.value_basis.expanded(tree, b.row));
        let w = to_complex(&self.structure.col_basis(self.operator).expanded(tree, b.col));
        u * core * w.transpose()
    }

    /// Full `M x M` slices, indices in mesh order.
    pub fn expand_dense(&self) -> Result<Vec<DMatrix<C64>>, HTensorError> {
        let m = self.n_panels();
        let size = m * m * self.n_slices;
        if size > DENSE_CAP {
            return Err(HTensorError::TooLarge(size));
        }
        let tree = &self.structure.tree;
        let slices = (0..self.n_slices)
            .into_par_iter()
            .map(|k| {
                let mut out = DMatrix::zeros(m, m);
                for idx in 0..self.blocks.len() {
                    let b = self.partition_blocks()[idx];
                    let vals = self.block_slice(idx, k);
                    for (a, &i) in tree.indices(b.row).iter().enumerate() {
                        for (c, &j) in tree.indices(b.col).iter().enumerate() {
                            out[(i, j)] = vals[(a, c)];
                        }
                    }
                }
                out
            })
            .collect();
        Ok(slices)
    }

    /// Squared Frobenius error of every block against a dense tensor.
    pub fn block_errors(&self, dense: &[DMatrix<C64>]) -> Result<Vec<f64>, HTensorError> {
        self.check_dense(dense)?;
        let tree = &self.structure.tree;
        Ok((0..self.blocks.len())
            .into_par_iter()
            .map(|idx| {
                let b = self.partition_blocks()[idx];
                let mut err = 0.0;
                for (k, slice) in dense.iter().enumerate() {
                    let vals = self.block_slice(idx, k);
                    for (a, &i) in tree.indices(b.row).iter().enumerate() {
                        for (c, &j) in tree.indices(b.col).iter().enumerate() {
                            err += (vals[(a, c)] - slice[(i, j)]).norm_sqr();
                        }
                    }
                }
                err
            })
            .collect())
    }

    fn check_dense(&self, dense: &[DMatrix<C64>]) -> Result<(), HTensorError> {
        let m = self.n_panels();
        if dense.len() != self.n_slices || dense.iter().any(|s| s.shape() != (m, m)) {
            return Err(HTensorError::Mismatch(format!(
                "expected {} slices of {m}x{m}",
                self.n_slices
            )));
        }
        Ok(())
    }

    /// `‖dense - approx‖_F / ‖dense‖_F`
    pub fn relative_error(&self, dense: &[DMatrix<C64>]) -> Result<f64, HTensorError> {
        let err: f64 = self.block_errors(dense)?.iter().sum();
        let norm: f64 = dense.iter().map(|s| s.norm_squared()).sum();
        Ok((err / norm).sqrt())
    }

    pub fn max_rank(&self) -> usize {
        self.blocks.iter().map(|b| b.rank()).max().unwrap_or(0)
    }

    pub fn max_far_rank(&self) -> usize {
        self.blocks
            .iter()
            .zip(self.partition_blocks())
            .filter(|(_, b)| b.admissible)
            .map(|(lr, _)| lr.rank())
            .max()
            .unwrap_or(0)
    }

    /// Number of blocks per rank.
    pub fn rank_histogram(&self) -> BTreeMap<usize, usize> {
        let mut hist = BTreeMap::new();
        for b in &self.blocks {
            *hist.entry(b.rank()).or_insert(0) += 1;
        }
        hist
    }

    /// Complex scalars stored by the factors plus reals of the bases the
    /// far field uses.
    pub fn storage(&self) -> StorageReport {
        let mut near = 0;
        let mut far_coupling = 0;
        let mut h2_only = 0;
        for (lr, b) in self.blocks.iter().zip(self.partition_blocks()) {
            let (rows, cols, _) = lr.dims();
            if b.admissible {
                far_coupling += lr.stored_scalars();
                h2_only += rows * cols * self.n_slices;
            } else {
                near += lr.stored_scalars();
                h2_only += rows * cols * self.n_slices;
            }
        }
        let has_far = self.partition_blocks().iter().any(|b| b.admissible);
        let bases = if has_far {
            let col = self.structure.col_basis(self.operator);
            let row = &self.structure.value_basis;
            if std::ptr::eq(row, col) {
                row.storage_units()
            } else {
                row.storage_units() + col.storage_units()
            }
        } else {
            0
        };
        let m = self.n_panels();
        StorageReport {
            near,
            far_coupling,
            bases,
            total: near + far_coupling + bases,
            dense: m * m * self.n_slices,
            h2_only: h2_only + bases,
        }
    }

    pub fn storage_units(&self) -> usize {
        self.storage().total
    }

    /// Far-field storage: coupling factors plus bases.
    pub fn far_storage_units(&self) -> usize {
        let s = self.storage();
        s.far_coupling + s.bases
    }

    /// `(rows, cols, slices)` of the tensor.
    pub fn dims(&self) -> (usize, usize, usize) {
        (self.n_panels(), self.n_panels(), self.n_slices)
    }

    pub fn metrics(&self, relative_error: Option<f64>, wall_time_s: f64) -> CompressionMetrics {
        let storage = self.storage();
        let stats = self.structure.partition.stats(&self.structure.tree, &self.structure.tree);
        CompressionMetrics {
            panels: self.n_panels(),
            slices: self.n_slices,
            order: self.structure.order,
            eps: self.eps,
            eta: self.structure.eta,
            n_min: self.structure.n_min,
            operator: self.operator,
            near_blocks: stats.near_blocks,
            far_blocks: stats.far_blocks,
            relative_error,
            max_rank: self.max_rank(),
            rank_histogram: self.rank_histogram(),
            compression_rate_dense: storage.total as f64 / storage.dense as f64,
            compression_rate_h2: storage.total as f64 / storage.h2_only as f64,
            storage,
            timings: self.timings,
            wall_time_s,
        }
    }

    /// Writes the factors in a versioned little-endian format.
    pub fn dump(&self, mut w: impl Write) -> Result<(), HTensorError> {
        w.write_all(MAGIC)?;
        w.write_all(&FORMAT_VERSION.to_le_bytes())?;
        w.write_all(&[match self.operator {
            Operator::SingleLayer => 0u8,
            Operator::DoubleLayer => 1u8,
        }])?;
        let s = &self.structure;
        for v in [s.n_panels, self.n_slices, s.order, s.n_min, s.direct_small_far as usize, self.blocks.len()] {
            w.write_all(&(v as u64).to_le_bytes())?;
        }
        w.write_all(&s.eta.to_le_bytes())?;
        w.write_all(&self.eps.to_le_bytes())?;
        for (lr, b) in self.blocks.iter().zip(self.partition_blocks()) {
            let (rows, cols, slices) = lr.dims();
            for v in [b.row, b.col, b.admissible as usize, rows, cols, slices, lr.rank()] {
                w.write_all(&(v as u64).to_le_bytes())?;
            }
            for c in &lr.c {
                write_complex(&mut w, c.iter())?;
            }
            write_complex(&mut w, lr.d.iter())?;
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), HTensorError> {
        let file = std::fs::File::create(path)?;
        let mut w = std::io::BufWriter::new(file);
        self.dump(&mut w)?;
        w.flush()?;
        Ok(())
    }

    /// Reads factors written by [`HTensor::dump`]. The structure is
    /// rebuilt from the mesh and must reproduce the stored partition.
    pub fn load_from(mut r: impl Read, mesh: &SurfaceMesh) -> Result<HTensor, HTensorError> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(HTensorError::Format("bad magic".into()));
        }
        let version = u32::from_le_bytes(read_array(&mut r)?);
        if version != FORMAT_VERSION {
            return Err(HTensorError::Format(format!("unsupported version {version}")));
        }
        let mut op = [0u8; 1];
        r.read_exact(&mut op)?;
        let operator = match op[0] {
            0 => Operator::SingleLayer,
            1 => Operator::DoubleLayer,
            other => return Err(HTensorError::Format(format!("unknown operator tag {other}"))),
        };
        let mut header = [0usize; 6];
        for h in &mut header {
            *h = read_u64(&mut r)?;
        }
        let [n_panels, n_slices, order, n_min, direct_small_far, n_blocks] = header;
        let eta = f64::from_le_bytes(read_array(&mut r)?);
        let eps = f64::from_le_bytes(read_array(&mut r)?);
        if n_panels != mesh.len() {
            return Err(HTensorError::Mismatch(format!("file has {n_panels} panels, mesh has {}", mesh.len())));
        }
        let params = CompressionParams {
            n_min,
            eta,
            order,
            direct_small_far: direct_small_far == 1,
            ..Default::default()
        };
        params.validate()?;
        let structure = Arc::new(HStructure::build(mesh, &params)?);
        if structure.partition.len() != n_blocks {
            return Err(HTensorError::Mismatch("partition differs from the stored one".into()));
        }
        let mut blocks = Vec::with_capacity(n_blocks);
        for b in structure.partition.blocks() {
            let mut fields = [0usize; 7];
            for f in &mut fields {
                *f = read_u64(&mut r)?;
            }
            let [row, col, adm, rows, cols, slices, rank] = fields;
            if row != b.row || col != b.col || (adm == 1) != b.admissible || slices != n_slices {
                return Err(HTensorError::Mismatch("block layout differs from the stored one".into()));
            }
            let c = (0..rank)
                .map(|_| Ok(DMatrix::from_vec(rows, cols, read_complex(&mut r, rows * cols)?)))
                .collect::<Result<Vec<_>, HTensorError>>()?;
            let d = DMatrix::from_vec(slices, rank, read_complex(&mut r, slices * rank)?);
            blocks.push(if rank == 0 {
                LowRankTensorBlock::zero((rows, cols, slices))
            } else {
                LowRankTensorBlock::from_factors(c, d)
            });
        }
        Ok(HTensor {
            structure,
            operator,
            blocks,
            n_slices,
            eps,
            timings: CompressionTimings::default(),
        })
    }

    pub fn load(path: impl AsRef<Path>, mesh: &SurfaceMesh) -> Result<HTensor, HTensorError> {
        let file = std::fs::File::open(path)?;
        Self::load_from(std::io::BufReader::new(file), mesh)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CompressionMetrics {
    pub panels: usize,
    pub slices: usize,
    pub order: usize,
    pub eps: f64,
    pub eta: f64,
    pub n_min: usize,
    pub operator: Operator,
    pub near_blocks: usize,
    pub far_blocks: usize,
    pub relative_error: Option<f64>,
    pub max_rank: usize,
    pub rank_histogram: BTreeMap<usize, usize>,
    pub storage: StorageReport,
    /// Stored units over `M² N`.
    pub compression_rate_dense: f64,
    /// Stored units over one H² matrix per slice.
    pub compression_rate_h2: f64,
    pub timings: CompressionTimings,
    pub wall_time_s: f64,
}

pub fn to_complex(m: &DMatrix<f64>) -> DMatrix<C64> {
    m.map(|v| C64::new(v, 0.0))
}

fn write_complex<'a>(w: &mut impl Write, values: impl Iterator<Item = &'a C64>) -> std::io::Result<()> {
    for z in values {
        w.write_all(&z.re.to_le_bytes())?;
        w.write_all(&z.im.to_le_bytes())?;
    }
    Ok(())
}

fn read_array<const N: usize>(r: &mut impl Read) -> Result<[u8; N], HTensorError> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf)
        .map_err(|e| HTensorError::Format(format!("truncated file: {e}")))?;
    Ok(buf)
}

fn read_u64(r: &mut impl Read) -> Result<usize, HTensorError> {
    let v = u64::from_le_bytes(read_array(r)?);
    usize::try_from(v).map_err(|_| HTensorError::Format("size field overflows".into()))
}

fn read_complex(r: &mut impl Read, n: usize) -> Result<Vec<C64>, HTensorError> {
    (0..n)
        .map(|_| {
            let re = f64::from_le_bytes(read_array(r)?);
            let im = f64::from_le_bytes(read_array(r)?);
            Ok(C64::new(re, im))
        })
        .collect()
}
