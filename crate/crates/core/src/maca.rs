//! Multivariate adaptive cross approximation of third-order tensors
//! along their last mode.

use nalgebra::DMatrix;

use crate::kernels::C64;

/// Entry access for an `m x n x p` tensor. Slices and fibres are the only
/// access patterns the approximation needs.
pub trait TensorEntries: Sync {
    fn dims(&self) -> (usize, usize, usize);

    /// `G[·, ·, k]`
    fn slice(&self, k: usize) -> DMatrix<C64>;

    /// `G[i, j, ·]`
    fn fibre(&self, i: usize, j: usize) -> Vec<C64>;
}

/// Adapts an entry callback to [`TensorEntries`].
pub struct EntryFn<F> {
    dims: (usize, usize, usize),
    f: F,
}

impl<F: Fn(usize, usize, usize) -> C64 + Sync> EntryFn<F> {
    pub fn new(dims: (usize, usize, usize), f: F) -> Self {
        Self { dims, f }
    }
}

impl<F: Fn(usize, usize, usize) -> C64 + Sync> TensorEntries for EntryFn<F> {
    fn dims(&self) -> (usize, usize, usize) {
        self.dims
    }

    fn slice(&self, k: usize) -> DMatrix<C64> {
        DMatrix::from_fn(self.dims.0, self.dims.1, |i, j| (self.f)(i, j, k))
    }

    fn fibre(&self, i: usize, j: usize) -> Vec<C64> {
        (0..self.dims.2).map(|k| (self.f)(i, j, k)).collect()
    }
}

/// `G ≈ Σ_ℓ C_ℓ ×₃ d_ℓ`, with the fibres `d_ℓ` stored as columns of `d`.
#[derive(Debug, Clone, PartialEq)]
pub struct LowRankTensorBlock {
    pub c: Vec<DMatrix<C64>>,
    pub d: DMatrix<C64>,
    dims: (usize, usize, usize),
}

impl LowRankTensorBlock {
    pub fn zero(dims: (usize, usize, usize)) -> Self {
        Self {
            c: Vec::new(),
            d: DMatrix::zeros(dims.2, 0),
            dims,
        }
    }

    pub fn from_factors(c: Vec<DMatrix<C64>>, d: DMatrix<C64>) -> Self {
        assert_eq!(c.len(), d.ncols(), "one fibre per slice");
        let (m, n) = c.first().map(|s| s.shape()).unwrap_or((0, 0));
        assert!(c.iter().all(|s| s.shape() == (m, n)));
        Self { dims: (m, n, d.nrows()), c, d }
    }

    pub fn rank(&self) -> usize {
        self.c.len()
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        self.dims
    }

    /// Reals stored: complex slices and fibres count twice.
    pub fn stored_scalars(&self) -> usize {
        self.rank() * (self.dims.0 * self.dims.1 + self.dims.2)
    }

    /// Replaces the fibres, e.g. by a linear transform along the last mode.
    pub fn with_fibres(&self, d: DMatrix<C64>) -> Self {
        assert_eq!(d.ncols(), self.rank());
        Self {
            c: self.c.clone(),
            dims: (self.dims.0, self.dims.1, d.nrows()),
            d,
        }
    }

    /// Entry `G^(r)[i, j, k]`.
    pub fn entry(&self, i: usize, j: usize, k: usize) -> C64 {
        self.c.iter().enumerate().map(|(l, c)| c[(i, j)] * self.d[(k, l)]).sum()
    }

    pub fn fibre(&self, i: usize, j: usize) -> Vec<C64> {
        (0..self.dims.2).map(|k| self.entry(i, j, k)).collect()
    }

    /// All slices of the expansion.
    pub fn expand(&self) -> Vec<DMatrix<C64>> {
        (0..self.dims.2).map(|k| lr_slice(self, k).expect("index in range")).collect()
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("slice index {index} out of range for {len} slices")]
pub struct SliceOutOfRange {
    pub index: usize,
    pub len: usize,
}

/// `Σ_ℓ d_ℓ[k] C_ℓ`
pub fn lr_slice(block: &LowRankTensorBlock, k: usize) -> Result<DMatrix<C64>, SliceOutOfRange> {
    if k >= block.dims.2 {
        return Err(SliceOutOfRange {
            index: k,
            len: block.dims.2,
        });
    }
    let mut out = DMatrix::zeros(block.dims.0, block.dims.1);
    for (l, c) in block.c.iter().enumerate() {
        out.zip_apply(c, |o, v| *o += v * block.d[(k, l)]);
    }
    Ok(out)
}

/// `⟨a, b⟩ = Σ a conj(b)` over all entries.
fn inner<'a>(a: impl Iterator<Item = &'a C64>, b: impl Iterator<Item = &'a C64>) -> C64 {
    a.zip(b).map(|(x, y)| x * y.conj()).sum()
}

/// Frobenius norm from the Gram products of slices and fibres.
pub fn lr_frobenius_norm(block: &LowRankTensorBlock) -> f64 {
    let r = block.rank();
    let mut total = 0.0;
    for l in 0..r {
        for t in 0..r {
            let cc = inner(block.c[l].iter(), block.c[t].iter());
            let dd = inner(block.d.column(l).iter(), block.d.column(t).iter());
            total += (cc * dd).re;
        }
    }
    total.max(0.0).sqrt()
}

/// Tolerance `ε = δ(1 - δ)/(1 + δ)` for a target relative accuracy `δ`.
pub fn eps_from_delta(delta: f64) -> f64 {
    delta * (1.0 - delta) / (1.0 + delta)
}

/// Pivots below this magnitude count as zero.
const ZERO_PIVOT: f64 = 1e-300;
/// Residual pivots at round-off level relative to the slice also count as zero.
const ROUNDOFF_PIVOT: f64 = 64.0 * f64::EPSILON;

/// One cross of the approximation: slice index `k` and entry `(i, j)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Pivot {
    pub i: usize,
    pub j: usize,
    pub k: usize,
}

pub fn maca<E: TensorEntries + ?Sized>(entries: &E, eps: f64) -> LowRankTensorBlock {
    maca_traced(entries, eps).0
}

pub fn maca_fn<F>(f: F, dims: (usize, usize, usize), eps: f64) -> LowRankTensorBlock
where
    F: Fn(usize, usize, usize) -> C64 + Sync,
{
    maca(&EntryFn::new(dims, f), eps)
}

/// Runs the approximation and also returns the chosen pivots.
pub fn maca_traced<E: TensorEntries + ?Sized>(entries: &E, eps: f64) -> (LowRankTensorBlock, Vec<Pivot>) {
    let dims = entries.dims();
    let (m, n, p) = dims;
    let mut block = LowRankTensorBlock::zero(dims);
    let mut pivots = Vec::new();
    if m == 0 || n == 0 || p == 0 {
        return (block, pivots);
    }

    let mut fibres: Vec<Vec<C64>> = Vec::new();
    let mut used = vec![false; p];
    let mut norm2 = 0.0;
    let mut k = 0;
    loop {
        used[k] = true;
        let mut c = entries.slice(k);
        let slice_max = c.iter().map(|z| z.norm()).fold(0.0, f64::max);
        for (cl, dl) in block.c.iter().zip(&fibres) {
            let f = dl[k];
            c.zip_apply(cl, |o, v| *o -= v * f);
        }

        // row-major scan keeps ties at the lowest linear index
        let (mut bi, mut bj, mut best) = (0, 0, -1.0);
        for i in 0..m {
            for j in 0..n {
                let a = c[(i, j)].norm();
                if a > best {
                    (bi, bj, best) = (i, j, a);
                }
            }
        }
        if best < ZERO_PIVOT || best <= ROUNDOFF_PIVOT * slice_max {
            break;
        }
        let pivot = c[(bi, bj)];

        let mut d = entries.fibre(bi, bj);
        for (cl, dl) in block.c.iter().zip(&fibres) {
            let f = cl[(bi, bj)];
            for (dk, v) in d.iter_mut().zip(dl) {
                *dk -= f * v;
            }
        }
        for dk in d.iter_mut() {
            *dk /= pivot;
        }

        let c_norm2 = c.norm_squared();
        let d_norm2: f64 = d.iter().map(|z| z.norm_sqr()).sum();
        let mut cross = 0.0;
        for (cl, dl) in block.c.iter().zip(&fibres) {
            cross += (inner(c.iter(), cl.iter()) * inner(d.iter(), dl.iter())).re;
        }
        norm2 += 2.0 * cross + c_norm2 * d_norm2;

        pivots.push(Pivot { i: bi, j: bj, k });
        block.c.push(c);
        fibres.push(d);

        if (c_norm2 * d_norm2).sqrt() <= eps * norm2.max(0.0).sqrt() || fibres.len() == p {
            break;
        }
        // largest remaining fibre entry; the current k has d[k] = 1 and is excluded
        let last = fibres.last().expect("just pushed");
        let next = (0..p)
            .filter(|&q| !used[q])
            .fold(None, |acc: Option<(usize, f64)>, q| {
                let a = last[q].norm();
                match acc {
                    Some((_, b)) if b >= a => acc,
                    _ => Some((q, a)),
                }
            });
        match next {
            Some((q, _)) => k = q,
            None => break,
        }
    }

    let r = fibres.len();
    block.d = DMatrix::from_fn(p, r, |k, l| fibres[l][k]);
    (block, pivots)
}
