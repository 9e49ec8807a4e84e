//! Finite groups given by multiplication tables, their normal subgroups and
//! quotients, and the group-algebra fold `ℂΓ₁ → ℂΓ₂`.
//!
//! Elements are plain indices `0..order`. Groups built from cyclic factors,
//! products or permutation generators always have the identity at index 0;
//! groups loaded from an arbitrary table may not, which is why the identity
//! index is stored explicitly.

use std::collections::{BTreeSet, VecDeque};
use std::ops::{Add, Mul};
use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Largest group order accepted by the exhaustive validators.
pub const MAX_EXHAUSTIVE_ORDER: usize = 256;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FiniteGroup {
    order: usize,
    mul: Vec<usize>,
    inv: Vec<usize>,
    identity: usize,
}

impl FiniteGroup {
    /// Builds a group from a full multiplication table `table[a][b] = a·b`.
    ///
    /// Closure, identity and inverses are always checked. Associativity is
    /// checked over all triples when the order is at most
    /// [`MAX_EXHAUSTIVE_ORDER`].
    pub fn from_table(table: Vec<Vec<usize>>) -> Result<Self> {
        let order = table.len();
        if order == 0 {
            return Err(Error::InvalidGroup("empty multiplication table".into()));
        }
        let mut mul = Vec::with_capacity(order * order);
        for (a, row) in table.iter().enumerate() {
            if row.len() != order {
                return Err(Error::InvalidGroup(format!("row {a} has length {}", row.len())));
            }
            for &c in row {
                if c >= order {
                    return Err(Error::InvalidGroup(format!("entry {c} out of range")));
                }
            }
            mul.extend_from_slice(row);
        }
        let identity = (0..order)
            .find(|&e| (0..order).all(|a| mul[e * order + a] == a && mul[a * order + e] == a))
            .ok_or_else(|| Error::InvalidGroup("no two-sided identity".into()))?;
        let mut inv = vec![usize::MAX; order];
        for a in 0..order {
            let b = (0..order)
                .find(|&b| mul[a * order + b] == identity && mul[b * order + a] == identity)
                .ok_or_else(|| Error::InvalidGroup(format!("element {a} has no inverse")))?;
            inv[a] = b;
        }
        let group = FiniteGroup { order, mul, inv, identity };
        if order <= MAX_EXHAUSTIVE_ORDER {
            group.check_associative()?;
        }
        Ok(group)
    }

    fn check_associative(&self) -> Result<()> {
        for a in 0..self.order {
            for b in 0..self.order {
                let ab = self.mul(a, b);
                for c in 0..self.order {
                    if self.mul(ab, c) != self.mul(a, self.mul(b, c)) {
                        return Err(Error::InvalidGroup(format!("({a}·{b})·{c} ≠ {a}·({b}·{c})")));
                    }
                }
            }
        }
        Ok(())
    }

    /// `ℤ/n` with element `k` standing for the residue `k`.
    pub fn cyclic(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidGroup("cyclic group of order 0".into()));
        }
        let mul = (0..n).flat_map(|a| (0..n).map(move |b| (a + b) % n)).collect();
        let inv = (0..n).map(|a| (n - a) % n).collect();
        Ok(FiniteGroup { order: n, mul, inv, identity: 0 })
    }

    /// Direct product; the pair `(a, b)` has index `a·|B| + b`.
    pub fn product(a: &FiniteGroup, b: &FiniteGroup) -> Self {
        let (na, nb) = (a.order, b.order);
        let order = na * nb;
        let mut mul = vec![0; order * order];
        for x in 0..order {
            for y in 0..order {
                let (xa, xb) = (x / nb, x % nb);
                let (ya, yb) = (y / nb, y % nb);
                mul[x * order + y] = a.mul(xa, ya) * nb + b.mul(xb, yb);
            }
        }
        let inv = (0..order).map(|x| a.inv(x / nb) * nb + b.inv(x % nb)).collect();
        FiniteGroup { order, mul, inv, identity: a.identity * nb + b.identity }
    }

    /// The permutation group generated by `generators`, each a permutation
    /// of `0..degree` in one-line notation. Elements are indexed in
    /// lexicographic order of their one-line notation, so the identity is
    /// element 0. Composition is `(p·q)(i) = p(q(i))`.
    pub fn from_permutations(generators: &[Vec<usize>]) -> Result<(Self, Vec<Vec<usize>>)> {
        let degree = generators.first().map_or(1, Vec::len);
        for g in generators {
            let mut seen = vec![false; degree];
            if g.len() != degree {
                return Err(Error::InvalidGroup("generators have different degrees".into()));
            }
            for &i in g {
                if i >= degree || seen[i] {
                    return Err(Error::InvalidGroup(format!("{g:?} is not a permutation")));
                }
                seen[i] = true;
            }
        }
        let identity: Vec<usize> = (0..degree).collect();
        let mut elements = BTreeSet::new();
        elements.insert(identity.clone());
        let mut queue = VecDeque::from([identity]);
        while let Some(p) = queue.pop_front() {
            for g in generators {
                let q: Vec<usize> = (0..degree).map(|i| p[g[i]]).collect();
                if elements.insert(q.clone()) {
                    if elements.len() > MAX_EXHAUSTIVE_ORDER {
                        return Err(Error::InvalidGroup(format!(
                            "generated group exceeds order {MAX_EXHAUSTIVE_ORDER}"
                        )));
                    }
                    queue.push_back(q);
                }
            }
        }
        let perms: Vec<Vec<usize>> = elements.into_iter().collect();
        let index = |p: &Vec<usize>| perms.binary_search(p).expect("closed under composition");
        let table = perms
            .iter()
            .map(|p| {
                perms
                    .iter()
                    .map(|q| index(&(0..degree).map(|i| p[q[i]]).collect()))
                    .collect()
            })
            .collect();
        Ok((Self::from_table(table)?, perms))
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn identity(&self) -> usize {
        self.identity
    }

    #[inline]
    pub fn mul(&self, a: usize, b: usize) -> usize {
        self.mul[a * self.order + b]
    }

    #[inline]
    pub fn inv(&self, a: usize) -> usize {
        self.inv[a]
    }

    pub fn elements(&self) -> std::ops::Range<usize> {
        0..self.order
    }

    pub fn is_abelian(&self) -> bool {
        self.elements()
            .all(|a| self.elements().all(|b| self.mul(a, b) == self.mul(b, a)))
    }

    /// Multiplication table as nested rows.
    pub fn table(&self) -> Vec<Vec<usize>> {
        self.mul.chunks(self.order).map(<[usize]>::to_vec).collect()
    }
}

/// A subgroup, stored as its sorted member list.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Subgroup {
    members: Vec<usize>,
}

impl Subgroup {
    pub fn members(&self) -> &[usize] {
        &self.members
    }

    pub fn order(&self) -> usize {
        self.members.len()
    }

    pub fn contains(&self, g: usize) -> bool {
        self.members.binary_search(&g).is_ok()
    }

    pub fn trivial(group: &FiniteGroup) -> Self {
        Subgroup { members: vec![group.identity()] }
    }

    pub fn whole(group: &FiniteGroup) -> Self {
        Subgroup { members: group.elements().collect() }
    }

    /// Validates an explicit member set as a subgroup of `group`.
    pub fn from_members(group: &FiniteGroup, members: impl IntoIterator<Item = usize>) -> Result<Self> {
        let set: BTreeSet<usize> = members.into_iter().collect();
        if let Some(&g) = set.iter().find(|&&g| g >= group.order()) {
            return Err(Error::InvalidGroup(format!("element {g} out of range")));
        }
        if !set.contains(&group.identity()) {
            return Err(Error::InvalidGroup("subgroup must contain the identity".into()));
        }
        for &a in &set {
            if !set.contains(&group.inv(a)) || set.iter().any(|&b| !set.contains(&group.mul(a, b))) {
                return Err(Error::InvalidGroup("member set is not closed".into()));
            }
        }
        Ok(Subgroup { members: set.into_iter().collect() })
    }
}

/// Smallest subgroup containing `generators`. Generators out of range are
/// rejected with [`Error::InvalidGroup`].
pub fn subgroup_closure(group: &FiniteGroup, generators: &[usize]) -> Result<Subgroup> {
    if let Some(&g) = generators.iter().find(|&&g| g >= group.order()) {
        return Err(Error::InvalidGroup(format!("generator {g} out of range")));
    }
    let mut members = BTreeSet::from([group.identity()]);
    let mut queue = VecDeque::from([group.identity()]);
    while let Some(x) = queue.pop_front() {
        for &g in generators {
            let y = group.mul(x, g);
            if members.insert(y) {
                queue.push_back(y);
            }
        }
    }
    // In a finite group the monoid generated is already a group.
    Ok(Subgroup { members: members.into_iter().collect() })
}

/// First witness `(g, h, g h g⁻¹)` of non-normality, if any.
fn normality_witness(group: &FiniteGroup, sub: &Subgroup) -> Option<(usize, usize, usize)> {
    for g in group.elements() {
        let gi = group.inv(g);
        for &h in sub.members() {
            let c = group.mul(group.mul(g, h), gi);
            if !sub.contains(c) {
                return Some((g, h, c));
            }
        }
    }
    None
}

pub fn is_normal(group: &FiniteGroup, sub: &Subgroup) -> bool {
    normality_witness(group, sub).is_none()
}

/// `Γ₁ → Γ₂ = Γ₁/H` together with a coset transversal.
#[derive(Debug, Clone, PartialEq)]
pub struct QuotientData {
    parent: Arc<FiniteGroup>,
    subgroup: Subgroup,
    cosets: Vec<Vec<usize>>,
    proj: Vec<usize>,
    transversal: Vec<usize>,
    quotient: Arc<FiniteGroup>,
}

/// Forms the quotient by a normal subgroup.
///
/// Cosets are numbered by their least element. The transversal picks the
/// least element of each coset except for `H` itself, which is represented by
/// the identity.
pub fn quotient(group: &Arc<FiniteGroup>, sub: &Subgroup) -> Result<QuotientData> {
    if let Some((g, h, conjugate)) = normality_witness(group, sub) {
        return Err(Error::NotNormal { g, h, conjugate });
    }
    let n = group.order();
    let mut proj = vec![usize::MAX; n];
    let mut cosets: Vec<Vec<usize>> = Vec::new();
    for g in group.elements() {
        if proj[g] != usize::MAX {
            continue;
        }
        let mut coset: Vec<usize> = sub.members().iter().map(|&h| group.mul(h, g)).collect();
        coset.sort_unstable();
        for &x in &coset {
            proj[x] = cosets.len();
        }
        cosets.push(coset);
    }
    let m = cosets.len();
    let mut table = vec![vec![0; m]; m];
    for (a, row) in table.iter_mut().enumerate() {
        for (b, entry) in row.iter_mut().enumerate() {
            *entry = proj[group.mul(cosets[a][0], cosets[b][0])];
        }
    }
    let quotient = Arc::new(FiniteGroup::from_table(table)?);
    let id_coset = proj[group.identity()];
    let transversal = cosets
        .iter()
        .enumerate()
        .map(|(c, coset)| if c == id_coset { group.identity() } else { coset[0] })
        .collect();
    Ok(QuotientData {
        parent: Arc::clone(group),
        subgroup: sub.clone(),
        cosets,
        proj,
        transversal,
        quotient,
    })
}

impl QuotientData {
    pub fn parent(&self) -> &Arc<FiniteGroup> {
        &self.parent
    }

    pub fn subgroup(&self) -> &Subgroup {
        &self.subgroup
    }

    pub fn quotient_group(&self) -> &Arc<FiniteGroup> {
        &self.quotient
    }

    pub fn cosets(&self) -> &[Vec<usize>] {
        &self.cosets
    }

    #[inline]
    pub fn proj(&self, g: usize) -> usize {
        self.proj[g]
    }

    pub fn proj_table(&self) -> &[usize] {
        &self.proj
    }

    /// Transversal indexed by quotient element.
    pub fn transversal(&self) -> &[usize] {
        &self.transversal
    }

    pub fn is_in_transversal(&self, g: usize) -> bool {
        self.transversal[self.proj[g]] == g
    }

    /// Same quotient with a different set of coset representatives;
    /// `reps[c]` must lie in coset `c`.
    pub fn with_transversal(&self, reps: Vec<usize>) -> Result<QuotientData> {
        if reps.len() != self.cosets.len() {
            return Err(Error::InvalidGroup("transversal has wrong length".into()));
        }
        for (c, &s) in reps.iter().enumerate() {
            if s >= self.parent.order() || self.proj[s] != c {
                return Err(Error::InvalidGroup(format!("{s} does not represent coset {c}")));
            }
        }
        Ok(QuotientData { transversal: reps, ..self.clone() })
    }
}

/// Element of the group algebra `ℂΓ`, one coefficient per group element.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupAlgebraElement {
    group: Arc<FiniteGroup>,
    coeffs: Vec<Complex64>,
}

impl GroupAlgebraElement {
    pub fn new(group: Arc<FiniteGroup>, coeffs: Vec<Complex64>) -> Result<Self> {
        if coeffs.len() != group.order() {
            return Err(Error::GroupMismatch(format!(
                "{} coefficients for a group of order {}",
                coeffs.len(),
                group.order()
            )));
        }
        Ok(GroupAlgebraElement { group, coeffs })
    }

    pub fn zero(group: Arc<FiniteGroup>) -> Self {
        let n = group.order();
        GroupAlgebraElement { group, coeffs: vec![Complex64::new(0.0, 0.0); n] }
    }

    pub fn delta(group: Arc<FiniteGroup>, g: usize) -> Self {
        let mut x = Self::zero(group);
        x.coeffs[g] = Complex64::new(1.0, 0.0);
        x
    }

    pub fn group(&self) -> &Arc<FiniteGroup> {
        &self.group
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    fn check_same(&self, other: &Self) -> Result<()> {
        if Arc::ptr_eq(&self.group, &other.group) || self.group == other.group {
            Ok(())
        } else {
            Err(Error::GroupMismatch("elements over different groups".into()))
        }
    }

    /// Convolution product `(xy)(g) = Σ_{ab=g} x(a) y(b)`.
    pub fn convolve(&self, other: &Self) -> Result<Self> {
        self.check_same(other)?;
        let mut out = Self::zero(Arc::clone(&self.group));
        for (a, &xa) in self.coeffs.iter().enumerate() {
            if xa == Complex64::new(0.0, 0.0) {
                continue;
            }
            for (b, &yb) in other.coeffs.iter().enumerate() {
                out.coeffs[self.group.mul(a, b)] += xa * yb;
            }
        }
        Ok(out)
    }

    /// Involution `x*(g) = conj(x(g⁻¹))`.
    pub fn adjoint(&self) -> Self {
        let coeffs = self
            .group
            .elements()
            .map(|g| self.coeffs[self.group.inv(g)].conj())
            .collect();
        GroupAlgebraElement { group: Arc::clone(&self.group), coeffs }
    }

    pub fn max_abs_diff(&self, other: &Self) -> Result<f64> {
        self.check_same(other)?;
        Ok(self
            .coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max))
    }
}

impl Add for &GroupAlgebraElement {
    type Output = GroupAlgebraElement;

    fn add(self, rhs: Self) -> GroupAlgebraElement {
        self.check_same(rhs).expect("group algebra elements over different groups");
        let coeffs = self.coeffs.iter().zip(&rhs.coeffs).map(|(a, b)| a + b).collect();
        GroupAlgebraElement { group: Arc::clone(&self.group), coeffs }
    }
}

impl Mul<Complex64> for &GroupAlgebraElement {
    type Output = GroupAlgebraElement;

    fn mul(self, rhs: Complex64) -> GroupAlgebraElement {
        let coeffs = self.coeffs.iter().map(|a| a * rhs).collect();
        GroupAlgebraElement { group: Arc::clone(&self.group), coeffs }
    }
}

/// The fold `α: ℂΓ₁ → ℂΓ₂`; the coefficient of a coset is the sum of the
/// coefficients over that coset.
pub fn algebra_fold(x: &GroupAlgebraElement, q: &QuotientData) -> Result<GroupAlgebraElement> {
    if !(Arc::ptr_eq(&x.group, &q.parent) || *x.group == *q.parent) {
        return Err(Error::GroupMismatch("element is not over the quotient's parent".into()));
    }
    let mut out = GroupAlgebraElement::zero(Arc::clone(&q.quotient));
    for (c, coset) in q.cosets.iter().enumerate() {
        out.coeffs[c] = coset.iter().map(|&g| x.coeffs[g]).sum();
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s3() -> (FiniteGroup, Vec<Vec<usize>>) {
        FiniteGroup::from_permutations(&[vec![1, 0, 2], vec![1, 2, 0]]).unwrap()
    }

    fn perm_index(perms: &[Vec<usize>], p: &[usize]) -> usize {
        perms.iter().position(|q| q == p).unwrap()
    }

    #[test]
    fn closure_in_z4() {
        let z4 = FiniteGroup::cyclic(4).unwrap();
        assert_eq!(subgroup_closure(&z4, &[]).unwrap().members(), &[0]);
        assert_eq!(subgroup_closure(&z4, &[2]).unwrap().members(), &[0, 2]);
        assert_eq!(subgroup_closure(&z4, &[1]).unwrap().members(), &[0, 1, 2, 3]);
        assert!(subgroup_closure(&z4, &[7]).is_err());
    }

    #[test]
    fn three_cycle_generates_a3() {
        let (s3, perms) = s3();
        assert_eq!(s3.order(), 6);
        let c = perm_index(&perms, &[1, 2, 0]);
        let a3 = subgroup_closure(&s3, &[c]).unwrap();
        // brute-force orbit closure: powers of the 3-cycle
        let mut orbit = BTreeSet::new();
        let mut p: Vec<usize> = vec![0, 1, 2];
        for _ in 0..6 {
            orbit.insert(perm_index(&perms, &p));
            p = (0..3).map(|i| p[[1, 2, 0][i]]).collect();
        }
        assert_eq!(a3.members(), orbit.into_iter().collect::<Vec<_>>().as_slice());
        assert_eq!(a3.order(), 3);
        assert!(is_normal(&s3, &a3));
    }

    #[test]
    fn transposition_subgroup_not_normal() {
        let (s3, perms) = s3();
        let t12 = perm_index(&perms, &[1, 0, 2]);
        let t13 = perm_index(&perms, &[2, 1, 0]);
        let h = subgroup_closure(&s3, &[t12]).unwrap();
        assert!(!is_normal(&s3, &h));
        // (13)(12)(13) = (23) ∉ {e, (12)}
        let conj = s3.mul(s3.mul(t13, t12), s3.inv(t13));
        assert!(!h.contains(conj));
        let err = quotient(&Arc::new(s3.clone()), &h).unwrap_err();
        assert!(matches!(err, Error::NotNormal { .. }));
        assert!(is_normal(&s3, &Subgroup::whole(&s3)));
        assert!(!s3.is_abelian());
    }

    #[test]
    fn abelian_subgroups_are_normal() {
        let g = FiniteGroup::product(&FiniteGroup::cyclic(2).unwrap(), &FiniteGroup::cyclic(4).unwrap());
        assert!(g.is_abelian());
        for gen in g.elements() {
            let h = subgroup_closure(&g, &[gen]).unwrap();
            assert!(is_normal(&g, &h));
        }
    }

    #[test]
    fn z4_mod_two() {
        let z4 = Arc::new(FiniteGroup::cyclic(4).unwrap());
        let h = subgroup_closure(&z4, &[2]).unwrap();
        let q = quotient(&z4, &h).unwrap();
        assert_eq!(q.cosets(), &[vec![0, 2], vec![1, 3]]);
        assert_eq!(q.quotient_group().order(), 2);
        assert_eq!(q.quotient_group().table(), vec![vec![0, 1], vec![1, 0]]);
        assert_eq!(q.proj_table(), &[0, 1, 0, 1]);
        assert_eq!(q.transversal(), &[0, 1]);
    }

    #[test]
    fn extreme_quotients() {
        let (s3, _) = s3();
        let s3 = Arc::new(s3);
        let q = quotient(&s3, &Subgroup::trivial(&s3)).unwrap();
        assert_eq!(q.quotient_group().order(), 6);
        assert!(q.proj_table().iter().enumerate().all(|(g, &c)| g == c));
        let q = quotient(&s3, &Subgroup::whole(&s3)).unwrap();
        assert_eq!(q.quotient_group().order(), 1);
        assert_eq!(q.transversal(), &[0]);
    }

    #[test]
    fn projection_is_homomorphism_with_kernel_h() {
        let g = Arc::new(FiniteGroup::product(&FiniteGroup::cyclic(4).unwrap(), &FiniteGroup::cyclic(6).unwrap()));
        for gens in [vec![2usize], vec![3, 8], vec![6]] {
            let h = subgroup_closure(&g, &gens).unwrap();
            let q = quotient(&g, &h).unwrap();
            let gq = q.quotient_group();
            for a in g.elements() {
                for b in g.elements() {
                    assert_eq!(q.proj(g.mul(a, b)), gq.mul(q.proj(a), q.proj(b)));
                }
            }
            let kernel: Vec<usize> = g.elements().filter(|&x| q.proj(x) == gq.identity()).collect();
            assert_eq!(kernel, h.members());
            let mut hit = vec![0; gq.order()];
            for &s in q.transversal() {
                hit[q.proj(s)] += 1;
            }
            assert!(hit.iter().all(|&k| k == 1));
        }
    }

    #[test]
    fn rejects_bad_tables() {
        assert!(FiniteGroup::from_table(vec![vec![0, 0], vec![0, 0]]).is_err());
        assert!(FiniteGroup::from_table(vec![vec![0, 1], vec![1, 2]]).is_err());
        // a loop that is not associative: identity 0, every element self-inverse
        let t = vec![
            vec![0, 1, 2, 3, 4],
            vec![1, 0, 3, 4, 2],
            vec![2, 4, 0, 1, 3],
            vec![3, 2, 4, 0, 1],
            vec![4, 3, 1, 2, 0],
        ];
        assert!(FiniteGroup::from_table(t).is_err());
    }

    #[test]
    fn fold_of_deltas() {
        let z4 = Arc::new(FiniteGroup::cyclic(4).unwrap());
        let q = quotient(&z4, &subgroup_closure(&z4, &[2]).unwrap()).unwrap();
        let z2 = Arc::clone(q.quotient_group());
        let d3 = GroupAlgebraElement::delta(Arc::clone(&z4), 3);
        assert_eq!(algebra_fold(&d3, &q).unwrap(), GroupAlgebraElement::delta(Arc::clone(&z2), 1));
        let sum_h = &GroupAlgebraElement::delta(Arc::clone(&z4), 0) + &GroupAlgebraElement::delta(Arc::clone(&z4), 2);
        let folded = algebra_fold(&sum_h, &q).unwrap();
        assert_eq!(folded, &GroupAlgebraElement::delta(z2, 0) * Complex64::new(2.0, 0.0));
        let other = GroupAlgebraElement::delta(Arc::new(FiniteGroup::cyclic(3).unwrap()), 0);
        assert!(algebra_fold(&other, &q).is_err());
    }
}
