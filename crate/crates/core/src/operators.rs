//! Equivariant operators on a cover, stored as group-indexed block kernels.
//!
//! The kernel of an operator is `k((γ, v), (γ', w)) = B(γ⁻¹γ', v, w)`, so
//! commuting with the deck action is built into the representation. Dense
//! matrices use the basis order `((γ·|V| + v)·rank + i)`.

use std::collections::BTreeMap;
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::cover::CoverGraph;
use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type Block = DMatrix<C64>;

pub(crate) const ZERO: C64 = C64::new(0.0, 0.0);
pub(crate) const ONE: C64 = C64::new(1.0, 0.0);

/// Key `(g, v, w)` of a kernel block.
pub type BlockKey = (usize, usize, usize);

#[derive(Debug, Clone)]
pub struct EquivariantKernel {
    cover: Arc<CoverGraph>,
    rank: usize,
    blocks: BTreeMap<BlockKey, Block>,
}

fn max_abs(m: &Block) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

impl EquivariantKernel {
    pub fn zero(cover: Arc<CoverGraph>, rank: usize) -> Self {
        EquivariantKernel { cover, rank, blocks: BTreeMap::new() }
    }

    /// The identity operator: `B(e, v, v) = I`.
    pub fn identity(cover: Arc<CoverGraph>, rank: usize) -> Self {
        let e = cover.group().identity();
        let blocks = (0..cover.base().vertex_count())
            .map(|v| ((e, v, v), Block::identity(rank, rank)))
            .collect();
        EquivariantKernel { cover, rank, blocks }
    }

    /// Builds a kernel from explicit blocks; repeated keys are summed.
    pub fn from_blocks(
        cover: Arc<CoverGraph>,
        rank: usize,
        blocks: impl IntoIterator<Item = (BlockKey, Block)>,
    ) -> Result<Self> {
        let mut k = Self::zero(cover, rank);
        for (key, b) in blocks {
            k.add_block(key, &b)?;
        }
        Ok(k)
    }

    pub fn cover(&self) -> &Arc<CoverGraph> {
        &self.cover
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    /// Dense dimension `|Γ|·|V|·rank`.
    pub fn dimension(&self) -> usize {
        self.cover.vertex_count() * self.rank
    }

    pub fn block(&self, g: usize, v: usize, w: usize) -> Option<&Block> {
        self.blocks.get(&(g, v, w))
    }

    pub fn blocks(&self) -> impl Iterator<Item = (&BlockKey, &Block)> {
        self.blocks.iter()
    }

    pub fn block_count(&self) -> usize {
        self.blocks.len()
    }

    pub fn add_block(&mut self, key: BlockKey, b: &Block) -> Result<()> {
        let (g, v, w) = key;
        let nv = self.cover.base().vertex_count();
        if g >= self.cover.group().order() || v >= nv || w >= nv {
            return Err(Error::InvalidGraph(format!("block key {key:?} out of range")));
        }
        if b.nrows() != self.rank || b.ncols() != self.rank {
            return Err(Error::InvalidGraph(format!(
                "block is {}×{}, expected {r}×{r}",
                b.nrows(),
                b.ncols(),
                r = self.rank
            )));
        }
        match self.blocks.get_mut(&key) {
            Some(existing) => *existing += b,
            None => {
                self.blocks.insert(key, b.clone());
            }
        }
        Ok(())
    }

    pub fn same_space(&self, other: &Self) -> bool {
        self.rank == other.rank && Arc::ptr_eq(&self.cover, &other.cover)
    }

    fn check_same(&self, other: &Self) -> Result<()> {
        if self.same_space(other) {
            Ok(())
        } else {
            Err(Error::CoverMismatch)
        }
    }

    /// Dense matrix of the operator.
    pub fn assemble(&self) -> DMatrix<C64> {
        let n = self.dimension();
        let r = self.rank;
        let group = self.cover.group();
        let mut m = DMatrix::zeros(n, n);
        for (&(g, v, w), b) in &self.blocks {
            for gamma in group.elements() {
                let row = self.cover.vertex(gamma, v) * r;
                let col = self.cover.vertex(group.mul(gamma, g), w) * r;
                m.view_mut((row, col), (r, r)).copy_from(b);
            }
        }
        m
    }

    /// Kernel composition `C(ab, v, w) = Σ_u B(a, v, u)·B'(b, u, w)`.
    pub fn compose(&self, other: &Self) -> Result<Self> {
        self.check_same(other)?;
        let group = self.cover.group();
        let nv = self.cover.base().vertex_count();
        // index the right factor by its source vertex
        let mut by_source: Vec<Vec<(usize, usize, &Block)>> = vec![Vec::new(); nv];
        for (&(b, u, w), blk) in &other.blocks {
            by_source[u].push((b, w, blk));
        }
        let mut out = Self::zero(Arc::clone(&self.cover), self.rank);
        for (&(a, v, u), left) in &self.blocks {
            for &(b, w, right) in &by_source[u] {
                let key = (group.mul(a, b), v, w);
                let prod = left * right;
                match out.blocks.get_mut(&key) {
                    Some(acc) => *acc += prod,
                    None => {
                        out.blocks.insert(key, prod);
                    }
                }
            }
        }
        Ok(out)
    }

    /// `B*(g, v, w) = B(g⁻¹, w, v)^†`.
    pub fn adjoint(&self) -> Self {
        let group = self.cover.group();
        let blocks = self
            .blocks
            .iter()
            .map(|(&(g, v, w), b)| ((group.inv(g), w, v), b.adjoint()))
            .collect();
        EquivariantKernel { cover: Arc::clone(&self.cover), rank: self.rank, blocks }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_same(other)?;
        let mut out = self.clone();
        for (&key, b) in &other.blocks {
            out.add_block(key, b)?;
        }
        Ok(out)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.add(&other.scale(C64::new(-1.0, 0.0)))
    }

    pub fn scale(&self, z: C64) -> Self {
        let blocks = self.blocks.iter().map(|(&k, b)| (k, b * z)).collect();
        EquivariantKernel { cover: Arc::clone(&self.cover), rank: self.rank, blocks }
    }

    /// Entrywise maximum of `|K − K'|` over the union of block supports.
    pub fn max_abs_diff(&self, other: &Self) -> Result<f64> {
        self.check_same(other)?;
        let mut worst: f64 = 0.0;
        for (key, b) in &self.blocks {
            worst = worst.max(match other.blocks.get(key) {
                Some(c) => max_abs(&(b - c)),
                None => max_abs(b),
            });
        }
        for (key, c) in &other.blocks {
            if !self.blocks.contains_key(key) {
                worst = worst.max(max_abs(c));
            }
        }
        Ok(worst)
    }

    /// Largest entry modulus.
    pub fn max_abs(&self) -> f64 {
        self.blocks.values().map(max_abs).fold(0.0, f64::max)
    }

    /// Entrywise residual `max |K − K*|`.
    pub fn hermitian_residual(&self) -> f64 {
        self.max_abs_diff(&self.adjoint()).expect("same space")
    }

    /// ε-propagation: the largest `d((e, v), (g, w))` over blocks whose
    /// Frobenius norm exceeds `tau`.
    pub fn propagation(&self, tau: f64) -> f64 {
        self.blocks
            .iter()
            .filter(|(_, b)| b.norm() > tau)
            .map(|(&(g, v, w), _)| self.cover.dist_from_base(v, g, w))
            .fold(0.0, f64::max)
    }

    /// Spectral norm of the dense matrix. For a finite group this is also
    /// the maximal norm.
    pub fn operator_norm(&self) -> f64 {
        if self.blocks.is_empty() {
            return 0.0;
        }
        self.assemble().singular_values().max()
    }

    /// Drops blocks whose entries are all exactly zero.
    pub fn pruned(mut self) -> Self {
        self.blocks.retain(|_, b| b.iter().any(|z| *z != ZERO));
        self
    }

    /// Maps every block through `f`, keeping keys.
    pub fn map_blocks(&self, mut f: impl FnMut(&Block) -> Block) -> Self {
        let blocks = self.blocks.iter().map(|(&k, b)| (k, f(b))).collect();
        EquivariantKernel { cover: Arc::clone(&self.cover), rank: self.rank, blocks }
    }

    /// Same blocks reinterpreted over another cover with identical group
    /// order and base size.
    pub fn with_cover(&self, cover: Arc<CoverGraph>) -> Result<Self> {
        if cover.group().order() != self.cover.group().order()
            || cover.base().vertex_count() != self.cover.base().vertex_count()
        {
            return Err(Error::CoverMismatch);
        }
        Ok(EquivariantKernel { cover, rank: self.rank, blocks: self.blocks.clone() })
    }

    /// JSON-friendly block list.
    pub fn to_serialized(&self) -> SerializedKernel {
        let entries = self
            .blocks
            .iter()
            .map(|(&(g, v, w), b)| {
                let block = (0..self.rank)
                    .flat_map(|i| (0..self.rank).map(move |j| (i, j)))
                    .map(|(i, j)| [b[(i, j)].re, b[(i, j)].im])
                    .collect();
                KernelEntry { g, v, w, block }
            })
            .collect();
        SerializedKernel { rank: self.rank, entries }
    }

    pub fn from_serialized(cover: Arc<CoverGraph>, s: &SerializedKernel) -> Result<Self> {
        let r = s.rank;
        let blocks = s
            .entries
            .iter()
            .map(|e| {
                if e.block.len() != r * r {
                    return Err(Error::InvalidGraph("serialized block has wrong size".into()));
                }
                let b = Block::from_fn(r, r, |i, j| {
                    let [re, im] = e.block[i * r + j];
                    C64::new(re, im)
                });
                Ok(((e.g, e.v, e.w), b))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_blocks(cover, r, blocks)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelEntry {
    pub g: usize,
    pub v: usize,
    pub w: usize,
    /// Row-major `(re, im)` pairs.
    pub block: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SerializedKernel {
    pub rank: usize,
    pub entries: Vec<KernelEntry>,
}

/// Largest entry of `U_g A U_g* − A` over all deck transformations.
pub fn equivariance_violation(a: &DMatrix<C64>, cover: &CoverGraph, rank: usize) -> f64 {
    let n = cover.vertex_count();
    let mut worst: f64 = 0.0;
    for g in cover.group().elements() {
        for x in 0..n {
            let gx = cover.act(g, x);
            for y in 0..n {
                let gy = cover.act(g, y);
                for i in 0..rank {
                    for j in 0..rank {
                        let d = a[(gx * rank + i, gy * rank + j)] - a[(x * rank + i, y * rank + j)];
                        worst = worst.max(d.norm());
                    }
                }
            }
        }
    }
    worst
}

/// Group-averages a dense matrix into a kernel.
///
/// Each block is the value read from the identity sheet plus the mean
/// deviation of the other sheets from it, so exactly equivariant input is
/// recovered bit for bit. Fails when the deck-action commutator has an entry
/// above `tol`.
pub fn compress(a: &DMatrix<C64>, cover: &Arc<CoverGraph>, rank: usize, tol: f64) -> Result<EquivariantKernel> {
    let n = cover.vertex_count() * rank;
    if a.nrows() != n || a.ncols() != n {
        return Err(Error::CoverMismatch);
    }
    let violation = equivariance_violation(a, cover, rank);
    if violation > tol {
        return Err(Error::NotEquivariant { violation, tolerance: tol });
    }
    let group = cover.group();
    let e = group.identity();
    let nv = cover.base().vertex_count();
    let count = group.order() as f64;
    let mut blocks = BTreeMap::new();
    for g in group.elements() {
        for v in 0..nv {
            for w in 0..nv {
                let read = |gamma: usize, i: usize, j: usize| {
                    a[(cover.vertex(gamma, v) * rank + i, cover.vertex(group.mul(gamma, g), w) * rank + j)]
                };
                let b = Block::from_fn(rank, rank, |i, j| {
                    let base = read(e, i, j);
                    let dev: C64 = group.elements().map(|gamma| read(gamma, i, j) - base).sum();
                    base + dev / count
                });
                if b.iter().any(|z| *z != ZERO) {
                    blocks.insert((g, v, w), b);
                }
            }
        }
    }
    Ok(EquivariantKernel { cover: Arc::clone(cover), rank, blocks })
}

/// Image of a kernel in `ℂΓ ⊗ M_{|V|·rank}(ℂ)`: one `|V|·rank` square matrix
/// per group element.
#[derive(Debug, Clone)]
pub struct PhiRepresentation {
    cover: Arc<CoverGraph>,
    rank: usize,
    coeffs: Vec<DMatrix<C64>>,
}

pub fn phi_transform(k: &EquivariantKernel) -> PhiRepresentation {
    let nv = k.cover.base().vertex_count();
    let r = k.rank;
    let mut coeffs = vec![DMatrix::zeros(nv * r, nv * r); k.cover.group().order()];
    for (&(g, v, w), b) in &k.blocks {
        coeffs[g].view_mut((v * r, w * r), (r, r)).copy_from(b);
    }
    PhiRepresentation { cover: Arc::clone(&k.cover), rank: r, coeffs }
}

impl PhiRepresentation {
    pub fn coeff(&self, g: usize) -> &DMatrix<C64> {
        &self.coeffs[g]
    }

    /// Convolution over the group with matrix products on coefficients.
    pub fn mul(&self, other: &Self) -> Result<Self> {
        if self.rank != other.rank || !Arc::ptr_eq(&self.cover, &other.cover) {
            return Err(Error::CoverMismatch);
        }
        let group = self.cover.group();
        let dim = self.coeffs[0].nrows();
        let mut coeffs = vec![DMatrix::zeros(dim, dim); group.order()];
        for a in group.elements() {
            if self.coeffs[a].iter().all(|z| *z == ZERO) {
                continue;
            }
            for b in group.elements() {
                coeffs[group.mul(a, b)] += &self.coeffs[a] * &other.coeffs[b];
            }
        }
        Ok(PhiRepresentation { cover: Arc::clone(&self.cover), rank: self.rank, coeffs })
    }

    /// Back to a kernel.
    pub fn inverse(&self) -> EquivariantKernel {
        let nv = self.cover.base().vertex_count();
        let r = self.rank;
        let mut blocks = BTreeMap::new();
        for (g, c) in self.coeffs.iter().enumerate() {
            for v in 0..nv {
                for w in 0..nv {
                    let b: Block = c.view((v * r, w * r), (r, r)).into_owned();
                    if b.iter().any(|z| *z != ZERO) {
                        blocks.insert((g, v, w), b);
                    }
                }
            }
        }
        EquivariantKernel { cover: Arc::clone(&self.cover), rank: r, blocks }
    }

    /// `Σ_g R_g ⊗ c_g` with `R_g = Σ_γ E_{γ, γg}` the right regular
    /// representation.
    pub fn to_dense(&self) -> DMatrix<C64> {
        let group = self.cover.group();
        let dim = self.coeffs[0].nrows();
        let n = group.order() * dim;
        let mut m = DMatrix::zeros(n, n);
        for (g, c) in self.coeffs.iter().enumerate() {
            for gamma in group.elements() {
                let col = group.mul(gamma, g);
                let mut view = m.view_mut((gamma * dim, col * dim), (dim, dim));
                view += c;
            }
        }
        m
    }
}

/// Fiber grading parity.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Parity {
    Even,
    Odd,
}

/// Largest entry violating the given parity for a fiber split `(r⁺, r⁻)`.
pub fn parity_residual(b: &Block, grading: (usize, usize), parity: Parity) -> f64 {
    let (p, _) = grading;
    let mut worst: f64 = 0.0;
    for i in 0..b.nrows() {
        for j in 0..b.ncols() {
            let same = (i < p) == (j < p);
            let forbidden = match parity {
                Parity::Odd => same,
                Parity::Even => !same,
            };
            if forbidden {
                worst = worst.max(b[(i, j)].norm());
            }
        }
    }
    worst
}

impl EquivariantKernel {
    /// Parity defect with respect to the base grading; `None` if ungraded.
    pub fn parity_residual(&self, parity: Parity) -> Option<f64> {
        let grading = self.cover.base().grading()?;
        Some(self.blocks.values().map(|b| parity_residual(b, grading, parity)).fold(0.0, f64::max))
    }
}

/// Hermitian data on the base: one block per vertex and one per edge, the
/// edge block `M_e` being the kernel entry from `v` to `w`. If
/// `reverse_blocks` is given, each entry must be the adjoint of `M_e`.
#[derive(Debug, Clone, PartialEq)]
pub struct BaseOperator {
    pub vertex_blocks: Vec<Block>,
    pub edge_blocks: Vec<Block>,
    pub reverse_blocks: Option<Vec<Block>>,
}

const BASE_HERMITIAN_TOL: f64 = 1e-14;

/// Lifts a base operator to an equivariant kernel on the cover.
pub fn lift_base_operator(base_op: &BaseOperator, cover: &Arc<CoverGraph>) -> Result<EquivariantKernel> {
    let base = cover.base();
    let r = base.fiber_rank();
    let group = cover.group();
    let e = group.identity();
    if base_op.vertex_blocks.len() != base.vertex_count() {
        return Err(Error::NonHermitianBase(format!(
            "{} vertex blocks for {} vertices",
            base_op.vertex_blocks.len(),
            base.vertex_count()
        )));
    }
    if base_op.edge_blocks.len() != base.edges().len() {
        return Err(Error::NonHermitianBase(format!(
            "{} edge blocks for {} edges",
            base_op.edge_blocks.len(),
            base.edges().len()
        )));
    }
    let all = base_op.vertex_blocks.iter().chain(&base_op.edge_blocks);
    if all.clone().any(|b| b.nrows() != r || b.ncols() != r) {
        return Err(Error::NonHermitianBase(format!("blocks must be {r}×{r}")));
    }
    for (v, a) in base_op.vertex_blocks.iter().enumerate() {
        let res = max_abs(&(a - a.adjoint()));
        if res > BASE_HERMITIAN_TOL {
            return Err(Error::NonHermitianBase(format!("vertex block {v} has residual {res:e}")));
        }
    }
    if let Some(rev) = &base_op.reverse_blocks {
        if rev.len() != base_op.edge_blocks.len() {
            return Err(Error::NonHermitianBase("reverse block list has wrong length".into()));
        }
        for (k, (m, mr)) in base_op.edge_blocks.iter().zip(rev).enumerate() {
            if mr.nrows() != r || mr.ncols() != r || max_abs(&(mr - m.adjoint())) > BASE_HERMITIAN_TOL {
                return Err(Error::NonHermitianBase(format!("reverse block of edge {k} is not the adjoint")));
            }
        }
    }
    if let Some(grading) = base.grading() {
        for (k, b) in all.enumerate() {
            let res = parity_residual(b, grading, Parity::Odd);
            if res > 0.0 {
                return Err(Error::NotGraded(format!("base block {k} has even part of size {res:e}")));
            }
        }
    }
    // collect every contribution first so coinciding keys are summed exactly
    let adjoints: Vec<Block> = base_op.edge_blocks.iter().map(|m| m.adjoint()).collect();
    let mut terms: BTreeMap<BlockKey, Vec<&Block>> = BTreeMap::new();
    for (v, a) in base_op.vertex_blocks.iter().enumerate() {
        terms.entry((e, v, v)).or_default().push(a);
    }
    for (k, (&(v, w, _), &s)) in base.edges().iter().zip(cover.voltages()).enumerate() {
        terms.entry((s, v, w)).or_default().push(&base_op.edge_blocks[k]);
        terms.entry((group.inv(s), w, v)).or_default().push(&adjoints[k]);
    }
    let blocks = terms.into_iter().map(|(key, ts)| (key, exact_block_sum(&ts))).collect();
    Ok(EquivariantKernel { cover: Arc::clone(cover), rank: r, blocks })
}

/// Random kernel with blocks on a random subset of keys; entries uniform in
/// the unit square.
pub fn random_kernel(cover: &Arc<CoverGraph>, rank: usize, density: f64, rng: &mut ChaCha20Rng) -> EquivariantKernel {
    let nv = cover.base().vertex_count();
    let mut k = EquivariantKernel::zero(Arc::clone(cover), rank);
    for g in cover.group().elements() {
        for v in 0..nv {
            for w in 0..nv {
                if rng.random::<f64>() < density {
                    let b = Block::from_fn(rank, rank, |_, _| {
                        C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
                    });
                    k.blocks.insert((g, v, w), b);
                }
            }
        }
    }
    k
}

/// `(K + K*)/2` for a random `K`.
pub fn random_hermitian_kernel(cover: &Arc<CoverGraph>, rank: usize, density: f64, rng: &mut ChaCha20Rng) -> EquivariantKernel {
    let k = random_kernel(cover, rank, density, rng);
    k.add(&k.adjoint()).expect("same space").scale(C64::new(0.5, 0.0))
}

/// Correctly rounded sum of `values`, independent of their order
/// (Shewchuk's partials algorithm with a final half-way correction).
pub fn exact_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut partials: Vec<f64> = Vec::new();
    for mut x in values {
        let mut i = 0;
        for j in 0..partials.len() {
            let mut y = partials[j];
            if x.abs() < y.abs() {
                std::mem::swap(&mut x, &mut y);
            }
            let hi = x + y;
            let lo = y - (hi - x);
            if lo != 0.0 {
                partials[i] = lo;
                i += 1;
            }
            x = hi;
        }
        partials.truncate(i);
        partials.push(x);
    }
    let mut n = partials.len();
    if n == 0 {
        return 0.0;
    }
    n -= 1;
    let mut hi = partials[n];
    let mut lo = 0.0;
    while n > 0 {
        let x = hi;
        n -= 1;
        let y = partials[n];
        hi = x + y;
        lo = y - (hi - x);
        if lo != 0.0 {
            break;
        }
    }
    if n > 0 && ((lo < 0.0 && partials[n - 1] < 0.0) || (lo > 0.0 && partials[n - 1] > 0.0)) {
        let y = lo * 2.0;
        let x = hi + y;
        if y == x - hi {
            hi = x;
        }
    }
    hi
}

/// Entrywise [`exact_sum`] of equally sized blocks.
pub fn exact_block_sum(blocks: &[&Block]) -> Block {
    let (r, c) = blocks.first().map_or((0, 0), |b| b.shape());
    Block::from_fn(r, c, |i, j| {
        C64::new(
            exact_sum(blocks.iter().map(|b| b[(i, j)].re)),
            exact_sum(blocks.iter().map(|b| b[(i, j)].im)),
        )
    })
}

/// Seeded generator used throughout.
pub fn rng_from_seed(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}
