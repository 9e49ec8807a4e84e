//! The folding map `Ψ` from `Γ₁`-equivariant operators on `M₁` to
//! `Γ₂`-equivariant operators on `M₂ = H\M₁`, in its kernel, partition,
//! pointwise and invariant-section forms, plus the unfolding right inverse.

use std::collections::BTreeMap;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::cover::{
    canonical_partition, project_cover, random_cutoff, random_partition, transversal_cutoff, CoverGraph, CutoffFunction,
    Partition,
};
use crate::error::{Error, Result};
use crate::group::{quotient, subgroup_closure, QuotientData, Subgroup};
use crate::operators::{compress, exact_block_sum, Block, BlockKey, EquivariantKernel, C64, ZERO};

/// Tolerance used when compressing the dense output of the partition form.
const PARTITION_COMPRESS_TOL: f64 = 1e-10;
/// Allowed deviation from `H`-invariance of an input section.
pub const INVARIANCE_TOL: f64 = 1e-13;

/// A covering step `M₁ → M₂` with its quotient data.
#[derive(Debug, Clone)]
pub struct FoldContext {
    m1: Arc<CoverGraph>,
    m2: Arc<CoverGraph>,
    q: QuotientData,
    pi: Vec<usize>,
}

impl FoldContext {
    pub fn new(m1: Arc<CoverGraph>, q: QuotientData) -> Result<Self> {
        let (m2, pi) = project_cover(&m1, &q)?;
        Ok(FoldContext { m1, m2: Arc::new(m2), q, pi })
    }

    /// Context for the subgroup generated by `generators`.
    pub fn from_generators(m1: Arc<CoverGraph>, generators: &[usize]) -> Result<Self> {
        let h = subgroup_closure(m1.group(), generators)?;
        let q = quotient(m1.group(), &h)?;
        Self::new(m1, q)
    }

    pub fn m1(&self) -> &Arc<CoverGraph> {
        &self.m1
    }

    pub fn m2(&self) -> &Arc<CoverGraph> {
        &self.m2
    }

    pub fn quotient(&self) -> &QuotientData {
        &self.q
    }

    pub fn subgroup(&self) -> &Subgroup {
        self.q.subgroup()
    }

    /// Vertex map `π: M₁ → M₂`.
    pub fn pi(&self) -> &[usize] {
        &self.pi
    }

    /// Vertices of `M₁` over a vertex of `M₂`, ascending.
    pub fn lifts(&self, x: usize) -> Vec<usize> {
        (0..self.m1.vertex_count()).filter(|&y| self.pi[y] == x).collect()
    }

    /// Same context with a different transversal.
    pub fn with_transversal(&self, reps: Vec<usize>) -> Result<Self> {
        Ok(FoldContext { q: self.q.with_transversal(reps)?, ..self.clone() })
    }

    fn check_m1(&self, k: &EquivariantKernel) -> Result<()> {
        if Arc::ptr_eq(k.cover(), &self.m1) {
            Ok(())
        } else {
            Err(Error::ContextMismatch("kernel does not live on the upper cover".into()))
        }
    }

    fn check_m2(&self, k: &EquivariantKernel) -> Result<()> {
        if Arc::ptr_eq(k.cover(), &self.m2) {
            Ok(())
        } else {
            Err(Error::ContextMismatch("kernel does not live on the lower cover".into()))
        }
    }

    /// Pull-back `ũ = u ∘ π` of a section of `E₂`.
    pub fn lift_section(&self, u: &DVector<C64>, rank: usize) -> DVector<C64> {
        DVector::from_fn(self.m1.vertex_count() * rank, |idx, _| {
            u[self.pi[idx / rank] * rank + idx % rank]
        })
    }

    /// Restriction of an `H`-invariant section to one lift per vertex of `M₂`.
    pub fn descend_section(&self, s: &DVector<C64>, rank: usize) -> DVector<C64> {
        let mut out = DVector::zeros(self.m2.vertex_count() * rank);
        for x2 in 0..self.m2.vertex_count() {
            let (c, v) = self.m2.split(x2);
            let y = self.m1.vertex(self.q.transversal()[c], v);
            for k in 0..rank {
                out[x2 * rank + k] = s[y * rank + k];
            }
        }
        out
    }

    /// `max |s(hx) − s(x)|` over `h ∈ H`.
    pub fn invariance_defect(&self, s: &DVector<C64>, rank: usize) -> f64 {
        let mut worst: f64 = 0.0;
        for &h in self.q.subgroup().members() {
            for x in 0..self.m1.vertex_count() {
                let hx = self.m1.act(h, x);
                for k in 0..rank {
                    worst = worst.max((s[hx * rank + k] - s[x * rank + k]).norm());
                }
            }
        }
        worst
    }
}

/// Kernel form: `B₂(c, v, w) = Σ_{g ∈ c} B₁(g, v, w)`, summed exactly.
pub fn fold_kernel(k1: &EquivariantKernel, ctx: &FoldContext) -> Result<EquivariantKernel> {
    ctx.check_m1(k1)?;
    let mut terms: BTreeMap<BlockKey, Vec<&Block>> = BTreeMap::new();
    for (&(g, v, w), b) in k1.blocks() {
        terms.entry((ctx.q.proj(g), v, w)).or_default().push(b);
    }
    let blocks = terms.into_iter().map(|(key, ts)| (key, exact_block_sum(&ts)));
    EquivariantKernel::from_blocks(Arc::clone(&ctx.m2), k1.rank(), blocks)
}

/// Partition form: applies `Σ_{g,s,i,j} φ_i^{[g]} T(φ_j^s u)` to every basis
/// section `u` of `E₂`, with `s` running over `transversal`.
pub fn fold_via_partition(
    k1: &EquivariantKernel,
    ctx: &FoldContext,
    part: &Partition,
    transversal: &[usize],
) -> Result<EquivariantKernel> {
    ctx.check_m1(k1)?;
    ctx.q.with_transversal(transversal.to_vec())?;
    let m1 = &ctx.m1;
    let diameter = part.support_diameter(m1);
    let radius = m1.even_cover_radius();
    if diameter >= radius {
        return Err(Error::PartitionTooCoarse { diameter, radius });
    }
    let r = k1.rank();
    let a1 = k1.assemble();
    let nv = m1.base().vertex_count();
    let n2 = ctx.m2.vertex_count() * r;
    let group = m1.group();
    let columns: Vec<DVector<C64>> = (0..n2)
        .into_par_iter()
        .map(|col| {
            let mut out = DVector::<C64>::zeros(n2);
            let (x2, a) = (col / r, col % r);
            for &s in transversal {
                for j in 0..nv {
                    // φ_j^s u, with u the basis section at (x2, a)
                    let mut piece = DVector::<C64>::zeros(a1.nrows());
                    let mut any = false;
                    for (y, wt) in part.translate(m1, j, s) {
                        if ctx.pi[y] == x2 {
                            piece[y * r + a] = C64::new(wt, 0.0);
                            any = true;
                        }
                    }
                    if !any {
                        continue;
                    }
                    let image = &a1 * piece;
                    for g in group.elements() {
                        for i in 0..nv {
                            for (y, wt) in part.translate(m1, i, g) {
                                for b in 0..r {
                                    out[ctx.pi[y] * r + b] += image[y * r + b] * wt;
                                }
                            }
                        }
                    }
                }
            }
            out
        })
        .collect();
    let a2 = DMatrix::from_columns(&columns);
    compress(&a2, &ctx.m2, r, PARTITION_COMPRESS_TOL)
}

/// Result of the pointwise form at one vertex of `M₂`.
#[derive(Debug, Clone)]
pub struct PointwiseFold {
    pub value: DVector<C64>,
    /// Largest deviation between the values computed at different lifts.
    pub lift_deviation: f64,
}

/// Pointwise form: `(Ψ(T)u)(x) = Σ_{j,g} T(φ_j^g u)(y₀)`, evaluated at every
/// lift `y₀` of `x`.
pub fn fold_pointwise(
    k1: &EquivariantKernel,
    ctx: &FoldContext,
    part: &Partition,
    u: &DVector<C64>,
    x: usize,
) -> Result<PointwiseFold> {
    ctx.check_m1(k1)?;
    let r = k1.rank();
    if u.len() != ctx.m2.vertex_count() * r || x >= ctx.m2.vertex_count() {
        return Err(Error::ContextMismatch("section or vertex does not match the lower cover".into()));
    }
    let m1 = &ctx.m1;
    let group = m1.group();
    let nv = m1.base().vertex_count();
    let mut values = Vec::new();
    for y0 in ctx.lifts(x) {
        let (g0, v0) = m1.split(y0);
        let g0i = group.inv(g0);
        let mut acc = DVector::<C64>::zeros(r);
        for g in group.elements() {
            for j in 0..nv {
                for (y, wt) in part.translate(m1, j, g) {
                    let (gy, w) = m1.split(y);
                    if let Some(b) = k1.block(group.mul(g0i, gy), v0, w) {
                        let uy = u.rows(ctx.pi[y] * r, r);
                        acc += b * uy * C64::new(wt, 0.0);
                    }
                }
            }
        }
        values.push(acc);
    }
    let lift_deviation = values
        .iter()
        .map(|v| (v - &values[0]).iter().map(|z| z.norm()).fold(0.0, f64::max))
        .fold(0.0, f64::max);
    Ok(PointwiseFold { value: values.swap_remove(0), lift_deviation })
}

/// Unfolding `σ`: `B₁(g) = B₂([g])` on the transversal, zero elsewhere.
pub fn unfold_kernel(k2: &EquivariantKernel, ctx: &FoldContext) -> Result<EquivariantKernel> {
    ctx.check_m2(k2)?;
    let blocks = k2
        .blocks()
        .map(|(&(c, v, w), b)| ((ctx.q.transversal()[c], v, w), b.clone()));
    EquivariantKernel::from_blocks(Arc::clone(&ctx.m1), k2.rank(), blocks)
}

/// Invariant-section form. For an `H`-invariant section `s` on `M₁` this
/// returns `Σ_{h∈H} h·T(c² s)`, which is again `H`-invariant.
pub fn fold_invariant_action(
    k1: &EquivariantKernel,
    ctx: &FoldContext,
    s: &DVector<C64>,
    c: &CutoffFunction,
) -> Result<DVector<C64>> {
    ctx.check_m1(k1)?;
    let r = k1.rank();
    let n = ctx.m1.vertex_count();
    if s.len() != n * r {
        return Err(Error::ContextMismatch("section does not match the upper cover".into()));
    }
    let deviation = ctx.invariance_defect(s, r);
    if deviation > INVARIANCE_TOL {
        return Err(Error::NotInvariant { deviation });
    }
    let cut = DVector::from_fn(n * r, |idx, _| s[idx] * c.at(idx / r).powi(2));
    let image = k1.assemble() * cut;
    let mut out = DVector::<C64>::zeros(n * r);
    for &h in ctx.q.subgroup().members() {
        // (h·f)(y) = f(h⁻¹y)
        let hi = ctx.m1.group().inv(h);
        for y in 0..n {
            let src = ctx.m1.act(hi, y);
            for k in 0..r {
                out[y * r + k] += image[src * r + k];
            }
        }
    }
    Ok(out)
}

/// Every formulation of the fold evaluated as a dense matrix on `M₂`.
#[derive(Debug, Clone)]
pub struct FormulationComparison {
    pub forms: Vec<(String, DMatrix<C64>)>,
    /// Largest disagreement of the pointwise form across lifts.
    pub lift_deviation: f64,
}

impl FormulationComparison {
    /// Largest entrywise difference over all pairs of forms.
    pub fn max_pairwise(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (i, (_, a)) in self.forms.iter().enumerate() {
            for (_, b) in &self.forms[i + 1..] {
                worst = worst.max((a - b).iter().map(|z| z.norm()).fold(0.0, f64::max));
            }
        }
        worst
    }
}

/// Kernel form; partition form for each seed with the least and the largest
/// coset representatives; pointwise form with the canonical partition;
/// invariant-section form with the transversal cutoff and a random one.
pub fn compare_formulations(k1: &EquivariantKernel, ctx: &FoldContext, partition_seeds: &[u64], cutoff_seed: u64) -> Result<FormulationComparison> {
    let m1 = &ctx.m1;
    let r = k1.rank();
    let n2 = ctx.m2.vertex_count() * r;
    let mut forms = vec![("kernel".to_string(), fold_kernel(k1, ctx)?.assemble())];
    let least = ctx.q.transversal().to_vec();
    let largest: Vec<usize> = ctx.q.cosets().iter().map(|c| *c.last().expect("non-empty coset")).collect();
    for &seed in partition_seeds {
        let part = random_partition(m1, seed);
        for (label, trans) in [("least", &least), ("largest", &largest)] {
            let f = fold_via_partition(k1, ctx, &part, trans)?;
            forms.push((format!("partition[seed={seed},{label}]"), f.assemble()));
        }
    }
    let basis = |col: usize| DVector::from_fn(n2, |i, _| if i == col { C64::new(1.0, 0.0) } else { ZERO });
    let canon = canonical_partition(m1);
    let mut pointwise = DMatrix::zeros(n2, n2);
    let mut lift_deviation: f64 = 0.0;
    for col in 0..n2 {
        let u = basis(col);
        for x in 0..ctx.m2.vertex_count() {
            let p = fold_pointwise(k1, ctx, &canon, &u, x)?;
            lift_deviation = lift_deviation.max(p.lift_deviation);
            pointwise.view_mut((x * r, col), (r, 1)).copy_from(&p.value);
        }
    }
    forms.push(("pointwise".to_string(), pointwise));
    for (label, cut) in [
        ("transversal", transversal_cutoff(m1, &ctx.q)),
        ("random", random_cutoff(m1, &ctx.q, cutoff_seed)),
    ] {
        let mut m = DMatrix::zeros(n2, n2);
        for col in 0..n2 {
            let s = ctx.lift_section(&basis(col), r);
            let out = fold_invariant_action(k1, ctx, &s, &cut)?;
            m.set_column(col, &ctx.descend_section(&out, r));
        }
        forms.push((format!("invariant[{label}]"), m));
    }
    Ok(FormulationComparison { forms, lift_deviation })
}

/// Samplewise fold of a time-indexed path.
pub fn fold_path(path: &[(f64, EquivariantKernel)], ctx: &FoldContext) -> Result<Vec<(f64, EquivariantKernel)>> {
    path.par_iter()
        .map(|(t, k)| Ok((*t, fold_kernel(k, ctx)?)))
        .collect()
}

/// Propagation threshold to use on the folded side.
pub fn folded_threshold(tau: f64, ctx: &FoldContext) -> f64 {
    tau * ctx.q.subgroup().order() as f64
}

/// `Γ₁ → Γ₁/H₁ → Γ₁/H₂` next to the direct step `Γ₁ → Γ₁/H₂`.
#[derive(Debug, Clone)]
pub struct TwoStepTower {
    pub first: FoldContext,
    pub second: FoldContext,
    pub direct: FoldContext,
    /// Element of the two-step bottom group ↦ element of the direct one.
    pub iso: Vec<usize>,
}

/// Builds the two-step tower for normal subgroups `H₁ ⊆ H₂` of `Γ₁`, given
/// by generators.
pub fn two_step_tower(m1: Arc<CoverGraph>, h1: &[usize], h2: &[usize]) -> Result<TwoStepTower> {
    let g1 = Arc::clone(m1.group());
    let sub1 = subgroup_closure(&g1, h1)?;
    let sub2 = subgroup_closure(&g1, h2)?;
    if !sub1.members().iter().all(|&h| sub2.contains(h)) {
        return Err(Error::InvalidGroup("first subgroup is not contained in the second".into()));
    }
    let first = FoldContext::new(Arc::clone(&m1), quotient(&g1, &sub1)?)?;
    let direct = FoldContext::new(m1, quotient(&g1, &sub2)?)?;
    let g2 = Arc::clone(first.m2.group());
    let image: Vec<usize> = sub2.members().iter().map(|&h| first.q.proj(h)).collect();
    let sub_mid = Subgroup::from_members(&g2, image)?;
    let second = FoldContext::new(Arc::clone(&first.m2), quotient(&g2, &sub_mid)?)?;
    let g3 = second.m2.group();
    let mut iso = vec![usize::MAX; g3.order()];
    for g in g1.elements() {
        iso[second.q.proj(first.q.proj(g))] = direct.q.proj(g);
    }
    Ok(TwoStepTower { first, second, direct, iso })
}

impl TwoStepTower {
    /// Moves a kernel on the two-step bottom cover to the direct one.
    pub fn transport(&self, k3: &EquivariantKernel) -> Result<EquivariantKernel> {
        let blocks = k3.blocks().map(|(&(c, v, w), b)| ((self.iso[c], v, w), b.clone()));
        EquivariantKernel::from_blocks(Arc::clone(&self.direct.m2), k3.rank(), blocks)
    }

    /// `max |Ψ₂₃Ψ₁₂(K) − Ψ₁₃(K)|`.
    pub fn residual(&self, k1: &EquivariantKernel) -> Result<f64> {
        let two = fold_kernel(&fold_kernel(k1, &self.first)?, &self.second)?;
        let one = fold_kernel(k1, &self.direct)?;
        self.transport(&two)?.max_abs_diff(&one)
    }
}

/// `Σ_x ⟨a(x), b(x)⟩` over a cover.
pub fn inner_product(a: &DVector<C64>, b: &DVector<C64>) -> C64 {
    a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).fold(ZERO, |s, z| s + z)
}
