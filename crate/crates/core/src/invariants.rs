//! Index representatives `A(χ)`, the boundary maps, higher rho paths and the
//! functoriality checks comparing both sides of a fold.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::cover::CoverGraph;
use crate::error::{Error, Result};
use crate::folding::{fold_kernel, FoldContext};
use crate::operators::{compress, lift_base_operator, BaseOperator, Block, EquivariantKernel, Parity, C64, ONE};
use crate::spectral::{
    eigendecompose, multiset_contained, NormalizingFamily, ScalarFunction, SpectralDecomposition,
    CALCULUS_COMPRESS_TOL, HERMITIAN_TOL,
};

pub const UNITARITY_TOL: f64 = 1e-11;
pub const FUNCTORIALITY_TOL: f64 = 1e-10;
/// Constant in `‖A² − A‖ ≤ C·‖(1 − χ²)(D)‖`, also used for the χ-swap bound
/// in the graded case.
pub const EVEN_DEFECT_CONSTANT: f64 = 32.0;
pub const DEFAULT_GAP_FLOOR: f64 = 0.1;
/// Threshold for the ε-propagation of rho path samples.
pub const RHO_PROPAGATION_TAU: f64 = 1e-9;
/// Tail of the rho grid on which propagation must be non-increasing.
pub const RHO_TAIL_FROM: f64 = 1.0;

pub fn default_rho_grid() -> Vec<f64> {
    vec![0.0, 0.25, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0]
}

/// A 2×2 matrix of kernels on a common space, row-major.
#[derive(Debug, Clone)]
pub struct KernelMatrix2 {
    pub entries: [[EquivariantKernel; 2]; 2],
}

impl KernelMatrix2 {
    pub fn new(a: EquivariantKernel, b: EquivariantKernel, c: EquivariantKernel, d: EquivariantKernel) -> Result<Self> {
        if !(a.same_space(&b) && a.same_space(&c) && a.same_space(&d)) {
            return Err(Error::CoverMismatch);
        }
        Ok(KernelMatrix2 { entries: [[a, b], [c, d]] })
    }

    pub fn diag(a: EquivariantKernel, d: EquivariantKernel) -> Result<Self> {
        let z = EquivariantKernel::zero(Arc::clone(a.cover()), a.rank());
        Self::new(a, z.clone(), z, d)
    }

    pub fn get(&self, i: usize, j: usize) -> &EquivariantKernel {
        &self.entries[i][j]
    }

    fn zip(&self, other: &Self, f: impl Fn(&EquivariantKernel, &EquivariantKernel) -> Result<EquivariantKernel>) -> Result<Self> {
        let e = |i: usize, j: usize| f(&self.entries[i][j], &other.entries[i][j]);
        Self::new(e(0, 0)?, e(0, 1)?, e(1, 0)?, e(1, 1)?)
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip(other, |a, b| a.add(b))
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip(other, |a, b| a.sub(b))
    }

    pub fn compose(&self, other: &Self) -> Result<Self> {
        let e = |i: usize, j: usize| -> Result<EquivariantKernel> {
            self.entries[i][0].compose(&other.entries[0][j])?.add(&self.entries[i][1].compose(&other.entries[1][j])?)
        };
        Self::new(e(0, 0)?, e(0, 1)?, e(1, 0)?, e(1, 1)?)
    }

    pub fn try_map(&self, f: impl Fn(&EquivariantKernel) -> Result<EquivariantKernel>) -> Result<Self> {
        let e = |i: usize, j: usize| f(&self.entries[i][j]);
        Self::new(e(0, 0)?, e(0, 1)?, e(1, 0)?, e(1, 1)?)
    }

    /// Dense `2n × 2n` matrix.
    pub fn assemble(&self) -> DMatrix<C64> {
        let n = self.entries[0][0].dimension();
        let mut m = DMatrix::zeros(2 * n, 2 * n);
        for i in 0..2 {
            for j in 0..2 {
                m.view_mut((i * n, j * n), (n, n)).copy_from(&self.entries[i][j].assemble());
            }
        }
        m
    }

    pub fn max_abs(&self) -> f64 {
        self.entries.iter().flatten().map(|k| k.max_abs()).fold(0.0, f64::max)
    }

    pub fn max_abs_diff(&self, other: &Self) -> Result<f64> {
        let mut worst: f64 = 0.0;
        for i in 0..2 {
            for j in 0..2 {
                worst = worst.max(self.entries[i][j].max_abs_diff(&other.entries[i][j])?);
            }
        }
        Ok(worst)
    }

    pub fn operator_norm(&self) -> f64 {
        self.assemble().singular_values().iter().copied().fold(0.0, f64::max)
    }

    pub fn trace(&self) -> C64 {
        self.assemble().trace()
    }

    /// `‖M² − M‖_max`.
    pub fn idempotency_residual(&self) -> Result<f64> {
        self.compose(self)?.sub(self).map(|d| d.max_abs())
    }

    pub fn fold(&self, ctx: &FoldContext) -> Result<Self> {
        self.try_map(|k| fold_kernel(k, ctx))
    }
}

/// Projections onto the even and odd parts of the fibers.
pub fn grading_projections(cover: &Arc<CoverGraph>, rank: usize) -> Result<(EquivariantKernel, EquivariantKernel)> {
    let (p, _) = cover
        .base()
        .grading()
        .ok_or_else(|| Error::NotGraded("the base graph carries no grading".into()))?;
    let e = cover.group().identity();
    let diag = |even: bool| {
        let b = Block::from_fn(rank, rank, |i, j| if i == j && (i < p) == even { ONE } else { C64::new(0.0, 0.0) });
        let keys = (0..cover.base().vertex_count()).map(|v| ((e, v, v), b.clone()));
        EquivariantKernel::from_blocks(Arc::clone(cover), rank, keys)
    };
    Ok((diag(true)?, diag(false)?))
}

#[derive(Debug, Clone)]
pub enum IndexEntries {
    /// `e^{πi(χ+1)}(D)`.
    Odd(EquivariantKernel),
    /// The literal entries, whose `(2,2)` slot carries `−P₋`; adding
    /// `diag(0, scalar_shift)` gives the idempotent itself.
    Even { matrix: KernelMatrix2, scalar_shift: EquivariantKernel },
}

#[derive(Debug, Clone)]
pub struct IndexRepresentative {
    pub entries: IndexEntries,
    pub source: EquivariantKernel,
    pub chi: String,
}

impl IndexRepresentative {
    pub fn is_odd(&self) -> bool {
        matches!(self.entries, IndexEntries::Odd(_))
    }

    /// Odd: `max(‖UU* − 1‖, ‖U*U − 1‖)` entrywise. Even: `‖A² − A‖`.
    pub fn defect(&self) -> Result<f64> {
        match &self.entries {
            IndexEntries::Odd(u) => unitarity_residual(u),
            IndexEntries::Even { matrix, .. } => Ok(matrix.compose(matrix)?.sub(matrix)?.operator_norm()),
        }
    }

    /// `A + diag(0, scalar_shift)` in the graded case.
    pub fn shifted(&self) -> Result<Option<KernelMatrix2>> {
        match &self.entries {
            IndexEntries::Odd(_) => Ok(None),
            IndexEntries::Even { matrix, scalar_shift } => {
                let zero = EquivariantKernel::zero(Arc::clone(scalar_shift.cover()), scalar_shift.rank());
                Ok(Some(matrix.add(&KernelMatrix2::diag(zero, scalar_shift.clone())?)?))
            }
        }
    }

    /// Distance to the value at `t = 0` of a rho path: the identity in the
    /// odd case and `diag(0, P₋)` for the shifted graded matrix.
    pub fn trivial_residual(&self) -> Result<f64> {
        match &self.entries {
            IndexEntries::Odd(u) => u.max_abs_diff(&EquivariantKernel::identity(Arc::clone(u.cover()), u.rank())),
            IndexEntries::Even { scalar_shift, .. } => {
                let zero = EquivariantKernel::zero(Arc::clone(scalar_shift.cover()), scalar_shift.rank());
                let target = KernelMatrix2::diag(zero, scalar_shift.clone())?;
                self.shifted()?.expect("graded").max_abs_diff(&target)
            }
        }
    }

    /// Entrywise fold to the quotient cover.
    pub fn fold(&self, ctx: &FoldContext) -> Result<Self> {
        let entries = match &self.entries {
            IndexEntries::Odd(u) => IndexEntries::Odd(fold_kernel(u, ctx)?),
            IndexEntries::Even { matrix, scalar_shift } => {
                IndexEntries::Even { matrix: matrix.fold(ctx)?, scalar_shift: fold_kernel(scalar_shift, ctx)? }
            }
        };
        Ok(IndexRepresentative { entries, source: fold_kernel(&self.source, ctx)?, chi: self.chi.clone() })
    }

    /// Largest entrywise difference; the parities must agree.
    pub fn residual(&self, other: &Self) -> Result<f64> {
        match (&self.entries, &other.entries) {
            (IndexEntries::Odd(a), IndexEntries::Odd(b)) => a.max_abs_diff(b),
            (IndexEntries::Even { matrix: a, scalar_shift: sa }, IndexEntries::Even { matrix: b, scalar_shift: sb }) => {
                Ok(a.max_abs_diff(b)?.max(sa.max_abs_diff(sb)?))
            }
            _ => Err(Error::ContextMismatch("comparing odd and graded representatives".into())),
        }
    }

    /// Dense matrix of the literal entries.
    pub fn assemble(&self) -> DMatrix<C64> {
        match &self.entries {
            IndexEntries::Odd(u) => u.assemble(),
            IndexEntries::Even { matrix, .. } => matrix.assemble(),
        }
    }
}

fn unitarity_residual(u: &EquivariantKernel) -> Result<f64> {
    let id = EquivariantKernel::identity(Arc::clone(u.cover()), u.rank());
    let a = u.compose(&u.adjoint())?.max_abs_diff(&id)?;
    let b = u.adjoint().compose(u)?.max_abs_diff(&id)?;
    Ok(a.max(b))
}

fn odd_exponent(chi: &ScalarFunction) -> ScalarFunction {
    chi.map(format!("exp(πi({}+1))", chi.name()), false, |c| (C64::new(0.0, PI) * (c + ONE)).exp())
}

fn odd_from(dec: &SpectralDecomposition, chi: &ScalarFunction) -> Result<IndexRepresentative> {
    Ok(IndexRepresentative {
        entries: IndexEntries::Odd(dec.apply(&odd_exponent(chi))?),
        source: dec.source().clone(),
        chi: chi.name().to_string(),
    })
}

fn check_odd_graded(d: &EquivariantKernel) -> Result<()> {
    match d.parity_residual(Parity::Odd) {
        None => Err(Error::NotGraded("the base graph carries no grading".into())),
        Some(r) if r > HERMITIAN_TOL => Err(Error::NotGraded(format!("even-parity entry of size {r:e}"))),
        Some(_) => Ok(()),
    }
}

/// Graded matrix from `X = χ(D)` with `χ⁺ = P₋XP₊` and `χ⁻ = P₊XP₋`.
fn even_from_chi(x: &EquivariantKernel, source: &EquivariantKernel, chi: &str) -> Result<IndexRepresentative> {
    let (pp, pm) = grading_projections(x.cover(), x.rank())?;
    let cp = pm.compose(x)?.compose(&pp)?;
    let cm = pp.compose(x)?.compose(&pm)?;
    let two = C64::new(2.0, 0.0);
    let mp = cm.compose(&cp)?;
    let pmm = cp.compose(&cm)?;
    let s0 = pp.sub(&mp)?;
    let s1 = pm.sub(&pmm)?;
    let a11 = s0.compose(&s0)?;
    let a12 = cm.compose(&s1)?;
    let a21 = cp.compose(&pp.scale(two).sub(&mp)?)?.compose(&s0)?;
    let a22 = pmm.compose(&pm.scale(two).sub(&pmm)?)?.sub(&pm)?;
    Ok(IndexRepresentative {
        entries: IndexEntries::Even { matrix: KernelMatrix2::new(a11, a12, a21, a22)?, scalar_shift: pm },
        source: source.clone(),
        chi: chi.to_string(),
    })
}

/// `e^{πi(χ+1)}(D)`.
pub fn index_odd(d: &EquivariantKernel, chi: &ScalarFunction) -> Result<IndexRepresentative> {
    odd_from(&eigendecompose(d)?, chi)
}

/// Graded representative built from the blocks of `χ(D)`.
pub fn index_even(d: &EquivariantKernel, chi: &ScalarFunction) -> Result<IndexRepresentative> {
    check_odd_graded(d)?;
    let x = eigendecompose(d)?.apply(chi)?;
    even_from_chi(&x, d, chi.name())
}

/// Odd or graded representative according to the base grading.
pub fn index_representative(d: &EquivariantKernel, chi: &ScalarFunction) -> Result<IndexRepresentative> {
    if d.cover().base().grading().is_some() {
        index_even(d, chi)
    } else {
        index_odd(d, chi)
    }
}

/// `(‖A(χ₁) − A(χ₂)‖, C·sup_{spec D} |χ₁ − χ₂|)` with `C = π` in the odd
/// case and [`EVEN_DEFECT_CONSTANT`] in the graded case.
pub fn normalizing_independence(d: &EquivariantKernel, chi1: &ScalarFunction, chi2: &ScalarFunction) -> Result<(f64, f64)> {
    let a1 = index_representative(d, chi1)?;
    let a2 = index_representative(d, chi2)?;
    let diff = a1.assemble() - a2.assemble();
    let norm = diff.singular_values().iter().copied().fold(0.0, f64::max);
    let dec = eigendecompose(d)?;
    let sup = dec.eigenvalues().iter().map(|&x| (chi1.eval(x) - chi2.eval(x)).norm()).fold(0.0, f64::max);
    let c = if a1.is_odd() { PI } else { EVEN_DEFECT_CONSTANT };
    Ok((norm, c * sup))
}

/// `W = [[1,0],[U,1]]·[[1,−V],[0,1]]·[[1,0],[U,1]]`, its inverse from the
/// inverted factors, and `P = W·diag(1,0)·W⁻¹`.
#[derive(Debug, Clone)]
pub struct BoundaryIdempotent {
    pub w: KernelMatrix2,
    pub w_inv: KernelMatrix2,
    pub p: KernelMatrix2,
}

pub fn boundary_idempotent(u: &EquivariantKernel, v: &EquivariantKernel) -> Result<BoundaryIdempotent> {
    if !u.same_space(v) {
        return Err(Error::CoverMismatch);
    }
    let id = EquivariantKernel::identity(Arc::clone(u.cover()), u.rank());
    let zero = EquivariantKernel::zero(Arc::clone(u.cover()), u.rank());
    let lower = |x: &EquivariantKernel| KernelMatrix2::new(id.clone(), zero.clone(), x.clone(), id.clone());
    let upper = |x: &EquivariantKernel| KernelMatrix2::new(id.clone(), x.clone(), zero.clone(), id.clone());
    let minus_u = u.scale(-ONE);
    let minus_v = v.scale(-ONE);
    let w = lower(u)?.compose(&upper(&minus_v)?)?.compose(&lower(u)?)?;
    let w_inv = lower(&minus_u)?.compose(&upper(v)?)?.compose(&lower(&minus_u)?)?;
    let e11 = KernelMatrix2::diag(id.clone(), zero.clone())?;
    let p = w.compose(&e11)?.compose(&w_inv)?;
    Ok(BoundaryIdempotent { w, w_inv, p })
}

/// `e^{2πiQ}`: spectral calculus for Hermitian `Q`, a dense matrix
/// exponential otherwise.
pub fn boundary_exponential(q: &EquivariantKernel) -> Result<EquivariantKernel> {
    if q.hermitian_residual() <= HERMITIAN_TOL {
        let f = ScalarFunction::new("exp(2πix)", crate::spectral::FunctionClass::Bounded, false, |x| {
            C64::new(0.0, 2.0 * PI * x).exp()
        })?;
        return eigendecompose(q)?.apply(&f);
    }
    dense_exponential(q)
}

fn dense_exponential(q: &EquivariantKernel) -> Result<EquivariantKernel> {
    let m = (q.assemble() * C64::new(0.0, 2.0 * PI)).exp();
    compress(&m, q.cover(), q.rank(), CALCULUS_COMPRESS_TOL)
}

/// `t ↦ A(F_t)` with the ε-propagation of each `F_t(D)`.
#[derive(Debug, Clone)]
pub struct RhoPath {
    pub samples: Vec<(f64, IndexRepresentative)>,
    pub gap: f64,
    /// `(t, prop(F_t(D), τ))`.
    pub prop_profile: Vec<(f64, f64)>,
    pub tau: f64,
    /// `‖D‖·(max edge length)`.
    pub speed: f64,
    /// One edge length.
    pub slack: f64,
    lambdas: Vec<f64>,
}

/// Propagation of one sample against `λ(t)·v + s₀`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PropagationSample {
    pub t: f64,
    pub propagation: f64,
    pub bound: f64,
}

impl PropagationSample {
    pub fn holds(&self) -> bool {
        self.propagation <= self.bound
    }
}

pub fn rho_path(d: &EquivariantKernel, fam: &NormalizingFamily, grid: &[f64], gap_floor: f64) -> Result<RhoPath> {
    if grid.first() != Some(&0.0) {
        return Err(Error::BadParameterization("the rho grid must start at 0".into()));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::BadParameterization("the rho grid must be increasing".into()));
    }
    let graded = d.cover().base().grading().is_some();
    if graded {
        check_odd_graded(d)?;
    }
    let dec = eigendecompose(d)?;
    let gap = dec.gap();
    if gap < gap_floor {
        return Err(Error::NoSpectralGap { gap, floor: gap_floor });
    }
    let tau = RHO_PROPAGATION_TAU;
    let computed: Vec<(IndexRepresentative, f64)> = grid
        .par_iter()
        .map(|&t| {
            let f = fam.member(t)?;
            let x = dec.apply(&f)?;
            let prop = x.propagation(tau);
            let rep = if graded { even_from_chi(&x, d, f.name())? } else { odd_from(&dec, &f)? };
            Ok((rep, prop))
        })
        .collect::<Result<_>>()?;
    let base = d.cover().base();
    let slack = base.max_edge_length();
    let speed = dec.spectral_radius() * slack;
    let lambdas = grid.iter().map(|&t| if t == 0.0 { f64::INFINITY } else { fam.lambda(t) }).collect();
    let (samples, prop_profile) = grid
        .iter()
        .zip(computed)
        .map(|(&t, (rep, prop))| ((t, rep), (t, prop)))
        .unzip();
    Ok(RhoPath { samples, gap, prop_profile, tau, speed, slack, lambdas })
}

impl RhoPath {
    /// Residual of the `t = 0` sample against its trivial value.
    pub fn zero_residual(&self) -> Result<f64> {
        self.samples[0].1.trivial_residual()
    }

    /// Propagation against `λ(t)·v + s₀` at every positive sample.
    pub fn propagation_bounds(&self) -> Vec<PropagationSample> {
        self.prop_profile
            .iter()
            .zip(&self.lambdas)
            .filter(|((t, _), _)| *t > 0.0)
            .map(|(&(t, propagation), &l)| PropagationSample { t, propagation, bound: l * self.speed + self.slack })
            .collect()
    }

    /// Propagation is non-increasing on samples with `t ≥` [`RHO_TAIL_FROM`].
    pub fn tail_non_increasing(&self) -> bool {
        let tail: Vec<f64> = self.prop_profile.iter().filter(|(t, _)| *t >= RHO_TAIL_FROM).map(|p| p.1).collect();
        tail.windows(2).all(|w| w[1] <= w[0])
    }

    /// Largest sample defect (unitarity or idempotency).
    pub fn max_defect(&self) -> Result<f64> {
        self.samples.iter().map(|(_, r)| r.defect()).try_fold(0.0, |acc, d| Ok(f64::max(acc, d?)))
    }

    pub fn fold(&self, ctx: &FoldContext) -> Result<Vec<(f64, IndexRepresentative)>> {
        self.samples.par_iter().map(|(t, r)| Ok((*t, r.fold(ctx)?))).collect()
    }
}

/// Lifts a base operator to both covers of a fold context independently.
pub fn lift_pair(base_op: &BaseOperator, ctx: &FoldContext) -> Result<(EquivariantKernel, EquivariantKernel)> {
    Ok((lift_base_operator(base_op, ctx.m1())?, lift_base_operator(base_op, ctx.m2())?))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FunctorialityRecord {
    pub residual: f64,
    pub tolerance: f64,
}

impl FunctorialityRecord {
    fn new(residual: f64) -> Self {
        FunctorialityRecord { residual, tolerance: FUNCTORIALITY_TOL }
    }

    pub fn pass(&self) -> bool {
        self.residual < self.tolerance
    }
}

/// `‖Ψ(f(D₁)) − f(D₂)‖_max`.
pub fn check_function_functoriality(base_op: &BaseOperator, ctx: &FoldContext, f: &ScalarFunction) -> Result<FunctorialityRecord> {
    let (d1, d2) = lift_pair(base_op, ctx)?;
    let (f1, f2) = rayon::join(|| eigendecompose(&d1)?.apply(f), || eigendecompose(&d2)?.apply(f));
    Ok(FunctorialityRecord::new(fold_kernel(&f1?, ctx)?.max_abs_diff(&f2?)?))
}

/// `‖Ψ(e^{itD₁}) − e^{itD₂}‖_max` along a grid.
pub fn check_wave_functoriality(base_op: &BaseOperator, ctx: &FoldContext, grid: &[f64]) -> Result<Vec<(f64, FunctorialityRecord)>> {
    let (d1, d2) = lift_pair(base_op, ctx)?;
    let (dec1, dec2) = (eigendecompose(&d1)?, eigendecompose(&d2)?);
    grid.par_iter()
        .map(|&t| {
            let f = ScalarFunction::exp_i(t);
            let lhs = fold_kernel(&dec1.apply(&f)?, ctx)?;
            Ok((t, FunctorialityRecord::new(lhs.max_abs_diff(&dec2.apply(&f)?)?)))
        })
        .collect()
}

/// Fold of every entry of `A₁(χ)` against `A₂(χ)`.
pub fn check_index_functoriality(base_op: &BaseOperator, ctx: &FoldContext, chi: &ScalarFunction) -> Result<FunctorialityRecord> {
    let (d1, d2) = lift_pair(base_op, ctx)?;
    let (a1, a2) = rayon::join(|| index_representative(&d1, chi), || index_representative(&d2, chi));
    Ok(FunctorialityRecord::new(a1?.fold(ctx)?.residual(&a2?)?))
}

#[derive(Debug, Clone)]
pub struct RhoFunctoriality {
    pub samples: Vec<(f64, FunctorialityRecord)>,
    pub path1: RhoPath,
    pub path2: RhoPath,
    /// Largest matched distance of `spec(D₂) ⊆ spec(D₁)`, if contained.
    pub containment: Option<f64>,
}

impl RhoFunctoriality {
    pub fn max_residual(&self) -> f64 {
        self.samples.iter().map(|(_, r)| r.residual).fold(0.0, f64::max)
    }

    pub fn pass(&self) -> bool {
        self.samples.iter().all(|(_, r)| r.pass())
    }
}

/// Folds `R_{D₁}` samplewise and compares with `R_{D₂}`. Only `D₁` is
/// required to clear the gap floor; `D₂` is then checked by containment.
pub fn check_rho_functoriality(
    base_op: &BaseOperator,
    ctx: &FoldContext,
    fam: &NormalizingFamily,
    grid: &[f64],
    gap_floor: f64,
) -> Result<RhoFunctoriality> {
    let (d1, d2) = lift_pair(base_op, ctx)?;
    let path1 = rho_path(&d1, fam, grid, gap_floor)?;
    let path2 = rho_path(&d2, fam, grid, 0.0)?;
    let folded = path1.fold(ctx)?;
    let samples = folded
        .iter()
        .zip(&path2.samples)
        .map(|((t, a), (_, b))| Ok((*t, FunctorialityRecord::new(a.residual(b)?))))
        .collect::<Result<_>>()?;
    let s1 = eigendecompose(&d1)?;
    let s2 = eigendecompose(&d2)?;
    let containment = multiset_contained(s2.eigenvalues(), s1.eigenvalues(), FUNCTORIALITY_TOL);
    Ok(RhoFunctoriality { samples, path1, path2, containment })
}

/// `‖e^{2πiQ} − 1‖_max`.
pub fn distance_to_identity(u: &EquivariantKernel) -> Result<f64> {
    u.max_abs_diff(&EquivariantKernel::identity(Arc::clone(u.cover()), u.rank()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cover::{build_cover, BaseGraph, VoltageAssignment};
    use crate::group::FiniteGroup;
    use crate::operators::{random_hermitian_kernel, random_kernel, rng_from_seed};
    use crate::spectral::{chi_default_function, default_family, wave_operator};
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    /// Z/4 over a weighted triangle, rank 2, mass ±1 with small hopping.
    fn z4_tower() -> (BaseOperator, FoldContext) {
        let base = BaseGraph::new(3, 2, None, vec![(0, 1, 1.0), (1, 2, 1.5), (2, 0, 0.5)]).unwrap();
        let cover = build_cover(Arc::new(base), &VoltageAssignment::new(vec![0, 1, 0]), Arc::new(FiniteGroup::cyclic(4).unwrap()))
            .unwrap();
        let ctx = FoldContext::from_generators(Arc::new(cover), &[2]).unwrap();
        let mass = Block::from_row_slice(2, 2, &[c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(-1.0, 0.0)]);
        let hop = |a: f64, b: f64| Block::from_row_slice(2, 2, &[c(a, 0.1), c(b, 0.0), c(0.0, -b), c(0.05, a)]);
        let op = BaseOperator {
            vertex_blocks: vec![mass.clone(), mass.scale(1.2), mass.scale(0.9)],
            edge_blocks: vec![hop(0.2, 0.1), hop(-0.15, 0.05), hop(0.1, -0.2)],
            reverse_blocks: None,
        };
        (op, ctx)
    }

    /// Z/6 over a 4-cycle with grading (1, 1) and an odd operator; H = {0, 3}.
    fn z6_graded_tower() -> (BaseOperator, FoldContext) {
        let base = BaseGraph::new(4, 2, Some((1, 1)), vec![(0, 1, 1.0), (1, 2, 1.0), (2, 3, 1.0), (3, 0, 1.0)]).unwrap();
        let cover =
            build_cover(Arc::new(base), &VoltageAssignment::new(vec![1, 0, 0, 0]), Arc::new(FiniteGroup::cyclic(6).unwrap()))
                .unwrap();
        let ctx = FoldContext::from_generators(Arc::new(cover), &[3]).unwrap();
        let odd = |a: C64, b: C64| Block::from_row_slice(2, 2, &[c(0.0, 0.0), a, b, c(0.0, 0.0)]);
        let op = BaseOperator {
            vertex_blocks: (0..4).map(|k| odd(c(1.0 + 0.1 * k as f64, 0.0), c(1.0 + 0.1 * k as f64, 0.0))).collect(),
            edge_blocks: vec![
                odd(c(0.2, 0.1), c(-0.1, 0.0)),
                odd(c(0.0, 0.15), c(0.1, 0.1)),
                odd(c(-0.2, 0.0), c(0.05, -0.1)),
                odd(c(0.1, 0.0), c(0.0, 0.2)),
            ],
            reverse_blocks: None,
        };
        (op, ctx)
    }

    #[test]
    fn odd_index_examples() {
        let (op, ctx) = z4_tower();
        let d = lift_base_operator(&op, ctx.m1()).unwrap();
        let a = index_odd(&d, &ScalarFunction::sign()).unwrap();
        assert!(a.trivial_residual().unwrap() < 1e-11);
        let zero = index_odd(&d, &ScalarFunction::constant(c(0.0, 0.0))).unwrap();
        let minus = EquivariantKernel::identity(Arc::clone(ctx.m1()), 2).scale(-ONE);
        match &zero.entries {
            IndexEntries::Odd(u) => assert!(u.max_abs_diff(&minus).unwrap() < 1e-12),
            _ => unreachable!(),
        }
        let mut rng = rng_from_seed(4);
        let r = random_hermitian_kernel(ctx.m1(), 2, 0.4, &mut rng);
        assert!(index_odd(&r, &chi_default_function()).unwrap().defect().unwrap() < UNITARITY_TOL);
    }

    #[test]
    fn even_index_examples() {
        let (op, ctx) = z6_graded_tower();
        let d = lift_base_operator(&op, ctx.m1()).unwrap();
        assert!(eigendecompose(&d).unwrap().gap() > 0.3);
        let a = index_even(&d, &ScalarFunction::sign()).unwrap();
        assert!(a.defect().unwrap() < 1e-11);
        assert!(a.trivial_residual().unwrap() < 1e-11);
        let shifted = a.shifted().unwrap().unwrap();
        assert!(shifted.idempotency_residual().unwrap() < 1e-11);

        let z = index_even(&d, &ScalarFunction::constant(c(0.0, 0.0))).unwrap();
        let (pp, pm) = grading_projections(ctx.m1(), 2).unwrap();
        let pattern = KernelMatrix2::diag(pp, pm.scale(-ONE)).unwrap();
        match &z.entries {
            IndexEntries::Even { matrix, .. } => assert_eq!(matrix.max_abs_diff(&pattern).unwrap(), 0.0),
            _ => unreachable!(),
        }

        // defect bound for a soft normalizing function
        for scale in [0.5, 1.0, 4.0] {
            let chi = ScalarFunction::real("chi", crate::spectral::FunctionClass::Normalizing, move |x| {
                crate::spectral::chi_default(scale * x)
            })
            .unwrap();
            let a = index_even(&d, &chi).unwrap();
            let one_minus = eigendecompose(&d)
                .unwrap()
                .apply(&ScalarFunction::real("1-χ²", crate::spectral::FunctionClass::C0, move |x| {
                    1.0 - crate::spectral::chi_default(scale * x).powi(2)
                })
                .unwrap())
                .unwrap()
                .operator_norm();
            let defect = a.defect().unwrap();
            assert!(defect > 1e-6);
            assert!(defect <= EVEN_DEFECT_CONSTANT * one_minus, "{defect} vs {one_minus}");
            // the shifted matrix is idempotent for any χ
            assert!(a.shifted().unwrap().unwrap().idempotency_residual().unwrap() < 1e-11);
        }
    }

    #[test]
    fn even_index_requires_odd_operator() {
        let (_, ctx) = z6_graded_tower();
        let id = EquivariantKernel::identity(Arc::clone(ctx.m1()), 2);
        assert!(matches!(index_even(&id, &ScalarFunction::sign()), Err(Error::NotGraded(_))));
        let (op, ctx) = z4_tower();
        let d = lift_base_operator(&op, ctx.m1()).unwrap();
        assert!(matches!(index_even(&d, &ScalarFunction::sign()), Err(Error::NotGraded(_))));
    }

    #[test]
    fn boundary_idempotent_examples() {
        let (op, ctx) = z4_tower();
        let cover = Arc::clone(ctx.m1());
        let id = EquivariantKernel::identity(Arc::clone(&cover), 2);
        let zero = EquivariantKernel::zero(Arc::clone(&cover), 2);

        let b = boundary_idempotent(&id, &id).unwrap();
        let expected_w = KernelMatrix2::new(zero.clone(), id.scale(-ONE), id.clone(), zero.clone()).unwrap();
        assert_eq!(b.w.max_abs_diff(&expected_w).unwrap(), 0.0);
        assert!(b.p.max_abs_diff(&KernelMatrix2::diag(zero.clone(), id.clone()).unwrap()).unwrap() < 1e-13);
        assert!(b.p.idempotency_residual().unwrap() < 1e-13);

        let d = lift_base_operator(&op, &cover).unwrap();
        let u = wave_operator(&d, 0.8).unwrap();
        let b = boundary_idempotent(&u, &u.adjoint()).unwrap();
        let n = cover.dimension();
        assert!((b.p.trace() - c(n as f64, 0.0)).norm() < 1e-11);
        assert!(b.p.idempotency_residual().unwrap() < 1e-11);

        let mut rng = rng_from_seed(5);
        let v = random_kernel(&cover, 2, 0.3, &mut rng);
        let b = boundary_idempotent(&zero, &v).unwrap();
        let w = KernelMatrix2::new(id.clone(), v.scale(-ONE), zero.clone(), id.clone()).unwrap();
        assert_eq!(b.w.max_abs_diff(&w).unwrap(), 0.0);
        // W·diag(1,0)·W⁻¹ with W⁻¹ = [[1,V],[0,1]]
        let p = KernelMatrix2::new(id.clone(), v.clone(), zero.clone(), zero.clone()).unwrap();
        assert!(b.p.max_abs_diff(&p).unwrap() < 1e-13);

        let inv = b.w.compose(&b.w_inv).unwrap();
        assert!(inv.max_abs_diff(&KernelMatrix2::diag(id.clone(), id.clone()).unwrap()).unwrap() < 1e-13);
    }

    #[test]
    fn boundary_exponential_examples() {
        let (op, ctx) = z4_tower();
        let cover = Arc::clone(ctx.m1());
        let d = lift_base_operator(&op, &cover).unwrap();
        let dec = eigendecompose(&d).unwrap();
        let proj = dec
            .apply(&ScalarFunction::real("step", crate::spectral::FunctionClass::Bounded, |x| if x > 0.0 { 1.0 } else { 0.0 }).unwrap())
            .unwrap();
        assert!(distance_to_identity(&boundary_exponential(&proj).unwrap()).unwrap() < 1e-12);
        let id = EquivariantKernel::identity(Arc::clone(&cover), 2);
        let half = boundary_exponential(&id.scale(c(0.5, 0.0))).unwrap();
        assert!(half.max_abs_diff(&id.scale(-ONE)).unwrap() < 1e-12);

        let mut rng = rng_from_seed(6);
        let h = random_hermitian_kernel(&cover, 2, 0.3, &mut rng);
        let h = h.scale(c(1e-3 / h.operator_norm(), 0.0));
        let e = boundary_exponential(&proj.add(&h).unwrap()).unwrap();
        assert!(e.sub(&id).unwrap().operator_norm() <= 2.0 * PI * 1e-3 + 1e-5);
        assert!(unitarity_residual(&e).unwrap() < UNITARITY_TOL);

        // the dense route agrees with the spectral one on Hermitian input
        let q = proj.add(&h).unwrap();
        assert!(dense_exponential(&q).unwrap().max_abs_diff(&boundary_exponential(&q).unwrap()).unwrap() < 1e-11);
        // non-Hermitian input: a nilpotent Q gives 1 + 2πiQ
        let nil = EquivariantKernel::from_blocks(
            Arc::clone(&cover),
            2,
            [((0, 0, 0), Block::from_row_slice(2, 2, &[c(0.0, 0.0), c(0.3, 0.0), c(0.0, 0.0), c(0.0, 0.0)]))],
        )
        .unwrap();
        let e = boundary_exponential(&nil).unwrap();
        let expected = id.add(&nil.scale(c(0.0, 2.0 * PI))).unwrap();
        assert!(e.max_abs_diff(&expected).unwrap() < 1e-12);
    }

    #[test]
    fn rho_path_examples() {
        let (op, ctx) = z4_tower();
        let d = lift_base_operator(&op, ctx.m1()).unwrap();
        let fam = default_family();
        let path = rho_path(&d, &fam, &default_rho_grid(), DEFAULT_GAP_FLOOR).unwrap();
        assert!(path.zero_residual().unwrap() < 1e-11);
        assert!(path.max_defect().unwrap() < UNITARITY_TOL);
        assert_eq!(path.samples.len(), 10);
        let bounds = path.propagation_bounds();
        assert_eq!(bounds.len(), 9);
        assert!(bounds.iter().all(|b| b.bound.is_finite() && b.propagation.is_finite()));
        assert!(path.tail_non_increasing());

        let gapless = EquivariantKernel::zero(Arc::clone(ctx.m1()), 2);
        assert!(matches!(rho_path(&gapless, &fam, &default_rho_grid(), 0.1), Err(Error::NoSpectralGap { .. })));
        assert!(matches!(rho_path(&d, &fam, &[0.5, 1.0], 0.1), Err(Error::BadParameterization(_))));
    }

    #[test]
    fn graded_rho_path_starts_trivial() {
        let (op, ctx) = z6_graded_tower();
        let d = lift_base_operator(&op, ctx.m1()).unwrap();
        let path = rho_path(&d, &default_family(), &[0.0, 1.0, 100.0], DEFAULT_GAP_FLOOR).unwrap();
        assert!(path.zero_residual().unwrap() < 1e-11);
        assert!(!path.samples[0].1.is_odd());
    }

    #[test]
    fn functoriality_examples() {
        let (op, ctx) = z4_tower();
        let chi = chi_default_function();
        let rec = check_index_functoriality(&op, &ctx, &chi).unwrap();
        assert!(rec.pass(), "{rec:?}");
        for (t, rec) in check_wave_functoriality(&op, &ctx, &[0.1, 0.5, 1.0, 2.0, 5.0]).unwrap() {
            assert!(rec.pass(), "t={t}: {rec:?}");
        }
        assert!(check_function_functoriality(&op, &ctx, &ScalarFunction::gaussian()).unwrap().pass());

        let trivial = FoldContext::from_generators(Arc::clone(ctx.m1()), &[]).unwrap();
        assert_eq!(check_index_functoriality(&op, &trivial, &chi).unwrap().residual, 0.0);
        let rho = check_rho_functoriality(&op, &trivial, &default_family(), &default_rho_grid(), DEFAULT_GAP_FLOOR).unwrap();
        assert_eq!(rho.max_residual(), 0.0);
    }

    #[test]
    fn graded_functoriality() {
        let (op, ctx) = z6_graded_tower();
        let rec = check_index_functoriality(&op, &ctx, &chi_default_function()).unwrap();
        assert!(rec.pass(), "{rec:?}");
        let rho = check_rho_functoriality(&op, &ctx, &default_family(), &default_rho_grid(), DEFAULT_GAP_FLOOR).unwrap();
        assert!(rho.pass(), "{}", rho.max_residual());
        assert!(rho.path1.zero_residual().unwrap() < 1e-11);
        assert!(rho.path2.zero_residual().unwrap() < 1e-11);
        assert!(rho.containment.is_some());
    }

    #[test]
    fn independence_bound() {
        for (op, ctx) in [z4_tower(), z6_graded_tower()] {
            let d = lift_base_operator(&op, ctx.m1()).unwrap();
            let fam = default_family();
            for t in [0.1, 1.0] {
                let (diff, bound) = normalizing_independence(&d, &chi_default_function(), &fam.member(t).unwrap()).unwrap();
                assert!(diff <= bound + 1e-12, "{diff} > {bound}");
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(12))]

        #[test]
        fn conjugated_projection_is_idempotent(seed in any::<u64>(), s in 0.01f64..1.0) {
            let (_, ctx) = z4_tower();
            let mut rng = rng_from_seed(seed);
            let u = random_kernel(ctx.m1(), 2, 0.3, &mut rng).scale(c(s, 0.0));
            let v = random_kernel(ctx.m1(), 2, 0.3, &mut rng).scale(c(s, 0.0));
            let b = boundary_idempotent(&u, &v).unwrap();
            let scale = b.p.max_abs().max(1.0);
            prop_assert!(b.p.idempotency_residual().unwrap() < 1e-11 * scale * scale);
        }

        #[test]
        fn odd_representative_is_unitary(seed in any::<u64>()) {
            let (_, ctx) = z4_tower();
            let mut rng = rng_from_seed(seed);
            let d = random_hermitian_kernel(ctx.m1(), 2, 0.4, &mut rng);
            prop_assert!(index_odd(&d, &chi_default_function()).unwrap().defect().unwrap() < UNITARITY_TOL);
        }
    }
}
