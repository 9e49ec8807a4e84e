//! Galois covers of finite weighted graphs built from voltage assignments,
//! together with their metrics, deck actions and equivariant partitions of
//! unity.
//!
//! A cover vertex `(g, v)` is stored at index `g·|V| + v`. The edge
//! `v → w` with voltage `σ` lifts to `(g, v) ~ (gσ, w)` for every `g`, and
//! the deck group acts on the left: `g'·(g, v) = (g'g, v)`.

use std::sync::Arc;

use petgraph::algo::dijkstra;
use petgraph::graph::{NodeIndex, UnGraph};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::group::{FiniteGroup, QuotientData};

/// Finite weighted graph with a uniform fiber rank.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaseGraph {
    vertex_count: usize,
    fiber_rank: usize,
    grading: Option<(usize, usize)>,
    edges: Vec<(usize, usize, f64)>,
}

impl BaseGraph {
    /// Validates and builds a base graph. `grading = Some((r⁺, r⁻))` splits
    /// each fiber into its first `r⁺` even and last `r⁻` odd coordinates.
    pub fn new(
        vertex_count: usize,
        fiber_rank: usize,
        grading: Option<(usize, usize)>,
        edges: Vec<(usize, usize, f64)>,
    ) -> Result<Self> {
        if vertex_count == 0 {
            return Err(Error::InvalidGraph("no vertices".into()));
        }
        if fiber_rank == 0 {
            return Err(Error::InvalidGraph("fiber rank must be positive".into()));
        }
        if let Some((p, m)) = grading {
            if p + m != fiber_rank {
                return Err(Error::InvalidGraph(format!(
                    "grading {p}+{m} does not match fiber rank {fiber_rank}"
                )));
            }
        }
        for (k, &(v, w, len)) in edges.iter().enumerate() {
            if v >= vertex_count || w >= vertex_count {
                return Err(Error::InvalidGraph(format!("edge {k} has an endpoint out of range")));
            }
            if !(len > 0.0 && len.is_finite()) {
                return Err(Error::InvalidGraph(format!("edge {k} has non-positive length {len}")));
            }
        }
        let graph = BaseGraph { vertex_count, fiber_rank, grading, edges };
        if !graph.is_connected() {
            return Err(Error::InvalidGraph("base graph is not connected".into()));
        }
        Ok(graph)
    }

    fn is_connected(&self) -> bool {
        let mut seen = vec![false; self.vertex_count];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(v) = stack.pop() {
            for &(a, b, _) in &self.edges {
                for (x, y) in [(a, b), (b, a)] {
                    if x == v && !seen[y] {
                        seen[y] = true;
                        stack.push(y);
                    }
                }
            }
        }
        seen.into_iter().all(|s| s)
    }

    pub fn vertex_count(&self) -> usize {
        self.vertex_count
    }

    pub fn fiber_rank(&self) -> usize {
        self.fiber_rank
    }

    pub fn grading(&self) -> Option<(usize, usize)> {
        self.grading
    }

    pub fn edges(&self) -> &[(usize, usize, f64)] {
        &self.edges
    }

    pub fn min_edge_length(&self) -> f64 {
        self.edges.iter().map(|e| e.2).fold(f64::INFINITY, f64::min)
    }

    pub fn max_edge_length(&self) -> f64 {
        self.edges.iter().map(|e| e.2).fold(0.0, f64::max)
    }
}

/// Group-valued labels on the edges of a base graph, read in the stored
/// direction `v → w`. An optional explicit reverse labelling is checked
/// against the inverses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoltageAssignment {
    pub forward: Vec<usize>,
    #[serde(default)]
    pub reverse: Option<Vec<usize>>,
}

impl VoltageAssignment {
    pub fn new(forward: Vec<usize>) -> Self {
        VoltageAssignment { forward, reverse: None }
    }

    /// All voltages trivial.
    pub fn trivial(group: &FiniteGroup, edge_count: usize) -> Self {
        Self::new(vec![group.identity(); edge_count])
    }

    fn validate(&self, group: &FiniteGroup, base: &BaseGraph) -> Result<()> {
        if self.forward.len() != base.edges().len() {
            return Err(Error::InvalidGraph(format!(
                "{} voltages for {} edges",
                self.forward.len(),
                base.edges().len()
            )));
        }
        if let Some(&g) = self.forward.iter().find(|&&g| g >= group.order()) {
            return Err(Error::InvalidGroup(format!("voltage {g} out of range")));
        }
        if let Some(rev) = &self.reverse {
            if rev.len() != self.forward.len() {
                return Err(Error::InvalidGraph("reverse voltage list has wrong length".into()));
            }
            for (edge, (&f, &r)) in self.forward.iter().zip(rev).enumerate() {
                if r >= group.order() || group.inv(f) != r {
                    return Err(Error::InconsistentVoltage { edge });
                }
            }
        }
        Ok(())
    }
}

/// Derived cover of a voltage graph.
#[derive(Debug, Clone)]
pub struct CoverGraph {
    group: Arc<FiniteGroup>,
    base: Arc<BaseGraph>,
    voltages: Vec<usize>,
    /// `base_dist[v][y]` is the distance from `(e, v)` to cover vertex `y`.
    base_dist: Vec<Vec<f64>>,
    even_cover_radius: f64,
}

/// Builds the derived cover and its metric.
pub fn build_cover(base: Arc<BaseGraph>, volt: &VoltageAssignment, group: Arc<FiniteGroup>) -> Result<CoverGraph> {
    volt.validate(&group, &base)?;
    let nv = base.vertex_count();
    let n = group.order() * nv;
    let mut graph = UnGraph::<(), f64>::with_capacity(n, group.order() * base.edges().len());
    for _ in 0..n {
        graph.add_node(());
    }
    for g in group.elements() {
        for (&(v, w, len), &s) in base.edges().iter().zip(&volt.forward) {
            let a = g * nv + v;
            let b = group.mul(g, s) * nv + w;
            graph.add_edge(NodeIndex::new(a), NodeIndex::new(b), len);
        }
    }
    let e = group.identity();
    let base_dist: Vec<Vec<f64>> = (0..nv)
        .map(|v| {
            let found = dijkstra(&graph, NodeIndex::new(e * nv + v), None, |edge| *edge.weight());
            let mut row = vec![f64::INFINITY; n];
            for (node, d) in found {
                row[node.index()] = d;
            }
            row
        })
        .collect();
    let mut cover = CoverGraph {
        group,
        base,
        voltages: volt.forward.clone(),
        base_dist,
        even_cover_radius: f64::INFINITY,
    };
    cover.even_cover_radius = cover.compute_even_cover_radius();
    Ok(cover)
}

impl CoverGraph {
    pub fn group(&self) -> &Arc<FiniteGroup> {
        &self.group
    }

    pub fn base(&self) -> &Arc<BaseGraph> {
        &self.base
    }

    pub fn voltages(&self) -> &[usize] {
        &self.voltages
    }

    pub fn vertex_count(&self) -> usize {
        self.group.order() * self.base.vertex_count()
    }

    /// Dimension of the space of sections.
    pub fn dimension(&self) -> usize {
        self.vertex_count() * self.base.fiber_rank()
    }

    #[inline]
    pub fn vertex(&self, g: usize, v: usize) -> usize {
        g * self.base.vertex_count() + v
    }

    /// `(sheet, base vertex)` of a cover vertex.
    #[inline]
    pub fn split(&self, x: usize) -> (usize, usize) {
        let nv = self.base.vertex_count();
        (x / nv, x % nv)
    }

    /// Deck transformation `g·x`.
    #[inline]
    pub fn act(&self, g: usize, x: usize) -> usize {
        let (s, v) = self.split(x);
        self.vertex(self.group.mul(g, s), v)
    }

    /// The deck transformation of `g` as a vertex permutation.
    pub fn deck_permutation(&self, g: usize) -> Vec<usize> {
        (0..self.vertex_count()).map(|x| self.act(g, x)).collect()
    }

    /// Projection `p: M → N` to the base.
    pub fn to_base(&self, x: usize) -> usize {
        x % self.base.vertex_count()
    }

    /// Lifted edges `((g, v), (gσ, w), length)`.
    pub fn lifted_edges(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::with_capacity(self.group.order() * self.voltages.len());
        for g in self.group.elements() {
            for (&(v, w, len), &s) in self.base.edges().iter().zip(&self.voltages) {
                out.push((self.vertex(g, v), self.vertex(self.group.mul(g, s), w), len));
            }
        }
        out
    }

    /// Shortest-path distance; `INFINITY` between components.
    pub fn dist(&self, x: usize, y: usize) -> f64 {
        let (g, v) = self.split(x);
        let (h, w) = self.split(y);
        let gi = self.group.inv(g);
        let hi = self.group.inv(h);
        let a = self.base_dist[v][self.vertex(self.group.mul(gi, h), w)];
        let b = self.base_dist[w][self.vertex(self.group.mul(hi, g), v)];
        a.min(b)
    }

    /// Distance from `(e, v)` to `(g, w)`.
    pub fn dist_from_base(&self, v: usize, g: usize, w: usize) -> f64 {
        self.dist(self.vertex(self.group.identity(), v), self.vertex(g, w))
    }

    /// All-pairs distance matrix, row-major.
    pub fn distance_matrix(&self) -> Vec<Vec<f64>> {
        let n = self.vertex_count();
        (0..n).map(|x| (0..n).map(|y| self.dist(x, y)).collect()).collect()
    }

    /// Radius below which balls embed in the base: half the shortest
    /// displacement `d(x, gx)` over `g ≠ e`, floored at the shortest edge.
    pub fn even_cover_radius(&self) -> f64 {
        self.even_cover_radius
    }

    fn compute_even_cover_radius(&self) -> f64 {
        let e = self.group.identity();
        let mut shortest = f64::INFINITY;
        for v in 0..self.base.vertex_count() {
            for g in self.group.elements().filter(|&g| g != e) {
                shortest = shortest.min(self.base_dist[v][self.vertex(g, v)]);
            }
        }
        if shortest.is_infinite() {
            return f64::INFINITY;
        }
        (shortest / 2.0).max(self.base.min_edge_length())
    }
}

/// Quotient cover `M₂ = H\M₁` with the projection `π(g, v) = ([g], v)`.
pub fn project_cover(m1: &CoverGraph, q: &QuotientData) -> Result<(CoverGraph, Vec<usize>)> {
    if **q.parent() != **m1.group() {
        return Err(Error::GroupMismatch("cover group is not the quotient's parent".into()));
    }
    let volt = VoltageAssignment::new(m1.voltages.iter().map(|&s| q.proj(s)).collect());
    let m2 = build_cover(Arc::clone(&m1.base), &volt, Arc::clone(q.quotient_group()))?;
    let pi = (0..m1.vertex_count())
        .map(|x| {
            let (g, v) = m1.split(x);
            m2.vertex(q.proj(g), v)
        })
        .collect();
    Ok((m2, pi))
}

/// Equivariant partition of unity `φ_i^g(x) = φ_i^e(g⁻¹x)`, indexed by base
/// vertices `i` and group elements `g`. Only the `g = e` members are stored.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    lifts: Vec<Vec<(usize, f64)>>,
}

impl Partition {
    /// Partition from explicit `φ_i^e`; no validation is done here, see
    /// [`Partition::sum_residual`] and [`Partition::support_diameter`].
    pub fn from_lifts(lifts: Vec<Vec<(usize, f64)>>) -> Self {
        Partition { lifts }
    }

    /// `φ_i^e` as a sparse list of `(cover vertex, value)`.
    pub fn lift(&self, i: usize) -> &[(usize, f64)] {
        &self.lifts[i]
    }

    pub fn index_count(&self) -> usize {
        self.lifts.len()
    }

    /// `φ_i^g(x)`.
    pub fn value(&self, cover: &CoverGraph, i: usize, g: usize, x: usize) -> f64 {
        let y = cover.act(cover.group().inv(g), x);
        self.lifts[i].iter().find(|&&(z, _)| z == y).map_or(0.0, |&(_, w)| w)
    }

    /// Support of `φ_i^g` with values.
    pub fn translate(&self, cover: &CoverGraph, i: usize, g: usize) -> Vec<(usize, f64)> {
        self.lifts[i].iter().map(|&(y, w)| (cover.act(g, y), w)).collect()
    }

    /// Largest diameter of a support set. Translates share the diameter of
    /// their `g = e` member since the action is isometric.
    pub fn support_diameter(&self, cover: &CoverGraph) -> f64 {
        let mut diam: f64 = 0.0;
        for lift in &self.lifts {
            for &(a, _) in lift {
                for &(b, _) in lift {
                    diam = diam.max(cover.dist(a, b));
                }
            }
        }
        diam
    }

    /// `max_x |Σ_{i,g} φ_i^g(x) − 1|`.
    pub fn sum_residual(&self, cover: &CoverGraph) -> f64 {
        let mut total = vec![0.0; cover.vertex_count()];
        for i in 0..self.lifts.len() {
            for g in cover.group().elements() {
                for (x, w) in self.translate(cover, i, g) {
                    total[x] += w;
                }
            }
        }
        total.iter().map(|t| (t - 1.0).abs()).fold(0.0, f64::max)
    }
}

/// Indicator partition `φ_v^g = 1_{(g, v)}`.
pub fn canonical_partition(cover: &CoverGraph) -> Partition {
    let e = cover.group().identity();
    Partition {
        lifts: (0..cover.base().vertex_count()).map(|v| vec![(cover.vertex(e, v), 1.0)]).collect(),
    }
}

const PARTITION_SCALE: u64 = 1 << 20;

/// Random equivariant partition with overlapping supports.
///
/// `φ_i^e` is supported on vertices closer than
/// `min(ρ/2, max edge length)` to `(e, i)`. Weights are multiples of
/// `2⁻²⁰` and sum to exactly one over each fiber, so the partition sums to one
/// without rounding error.
pub fn random_partition(cover: &CoverGraph, seed: u64) -> Partition {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let nv = cover.base().vertex_count();
    let e = cover.group().identity();
    let radius = (cover.even_cover_radius() / 2.0).min(cover.base().max_edge_length());
    let mut lifts: Vec<Vec<(usize, f64)>> = vec![Vec::new(); nv];
    for v in 0..nv {
        // slots (i, γ) with (γ, v) within radius of (e, i); (v, e) comes first
        let mut slots = vec![(v, e)];
        for i in 0..nv {
            for g in cover.group().elements() {
                if (i, g) != (v, e) && cover.dist_from_base(i, g, v) < radius {
                    slots.push((i, g));
                }
            }
        }
        let mut raw: Vec<u64> = (0..slots.len()).map(|_| rng.random_range(1..=1000)).collect();
        let total: u64 = raw.iter().sum();
        for r in raw.iter_mut() {
            *r = *r * PARTITION_SCALE / total;
        }
        let assigned: u64 = raw[1..].iter().sum();
        raw[0] = PARTITION_SCALE - assigned;
        for (&(i, g), &r) in slots.iter().zip(&raw) {
            lifts[i].push((cover.vertex(g, v), r as f64 / PARTITION_SCALE as f64));
        }
    }
    for lift in &mut lifts {
        lift.sort_by_key(|&(x, _)| x);
    }
    Partition { lifts }
}

/// Cutoff `c` on `M₁` with `Σ_{h∈H} c(hx)² = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct CutoffFunction {
    values: Vec<f64>,
}

impl CutoffFunction {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn at(&self, x: usize) -> f64 {
        self.values[x]
    }

    /// `max_x |Σ_h c(hx)² − 1|`.
    pub fn normalization_residual(&self, cover: &CoverGraph, q: &QuotientData) -> f64 {
        (0..cover.vertex_count())
            .map(|x| {
                let s: f64 = q.subgroup().members().iter().map(|&h| self.values[cover.act(h, x)].powi(2)).sum();
                (s - 1.0).abs()
            })
            .fold(0.0, f64::max)
    }
}

/// Indicator of the transversal sheets.
pub fn transversal_cutoff(cover: &CoverGraph, q: &QuotientData) -> CutoffFunction {
    let values = (0..cover.vertex_count())
        .map(|x| if q.is_in_transversal(cover.split(x).0) { 1.0 } else { 0.0 })
        .collect();
    CutoffFunction { values }
}

/// Smooth-looking cutoff `c(x) = √(w(x) / Σ_h w(hx))` from random positive
/// weights.
pub fn random_cutoff(cover: &CoverGraph, q: &QuotientData, seed: u64) -> CutoffFunction {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let w: Vec<f64> = (0..cover.vertex_count()).map(|_| rng.random_range(0.1..1.0)).collect();
    let values = (0..cover.vertex_count())
        .map(|x| {
            let s: f64 = q.subgroup().members().iter().map(|&h| w[cover.act(h, x)]).sum();
            (w[x] / s).sqrt()
        })
        .collect();
    CutoffFunction { values }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group::{quotient, subgroup_closure, Subgroup};
    use std::collections::BTreeSet;

    fn triangle(lengths: [f64; 3]) -> Arc<BaseGraph> {
        Arc::new(BaseGraph::new(3, 1, None, vec![(0, 1, lengths[0]), (1, 2, lengths[1]), (2, 0, lengths[2])]).unwrap())
    }

    /// Floyd–Warshall on the lifted edge list.
    fn floyd(cover: &CoverGraph) -> Vec<Vec<f64>> {
        let n = cover.vertex_count();
        let mut d = vec![vec![f64::INFINITY; n]; n];
        for (x, row) in d.iter_mut().enumerate() {
            row[x] = 0.0;
        }
        for (a, b, len) in cover.lifted_edges() {
            d[a][b] = d[a][b].min(len);
            d[b][a] = d[b][a].min(len);
        }
        for k in 0..n {
            for i in 0..n {
                for j in 0..n {
                    let via = d[i][k] + d[k][j];
                    if via < d[i][j] {
                        d[i][j] = via;
                    }
                }
            }
        }
        d
    }

    fn z4_cover() -> CoverGraph {
        let z4 = Arc::new(FiniteGroup::cyclic(4).unwrap());
        build_cover(triangle([1.0, 0.5, 0.75]), &VoltageAssignment::new(vec![0, 1, 0]), z4).unwrap()
    }

    #[test]
    fn trivial_group_cover_is_base() {
        let t = Arc::new(FiniteGroup::cyclic(1).unwrap());
        let base = triangle([1.0, 2.0, 4.0]);
        let c = build_cover(Arc::clone(&base), &VoltageAssignment::trivial(&t, 3), t).unwrap();
        assert_eq!(c.vertex_count(), 3);
        assert_eq!(c.dist(0, 2), 3.0);
        assert_eq!(c.dist(0, 1), 1.0);
        assert_eq!(c.dist(1, 2), 2.0);
        assert_eq!(c.even_cover_radius(), f64::INFINITY);
    }

    #[test]
    fn triangle_double_cover_is_hexagon() {
        let z2 = Arc::new(FiniteGroup::cyclic(2).unwrap());
        let c = build_cover(triangle([1.0; 3]), &VoltageAssignment::new(vec![0, 0, 1]), z2).unwrap();
        let edges: BTreeSet<(usize, usize)> = c
            .lifted_edges()
            .into_iter()
            .map(|(a, b, _)| (a.min(b), a.max(b)))
            .collect();
        // (0,0)-(0,1), (0,1)-(0,2), (0,2)-(1,0); same on sheet 1 with the last edge closing up
        let expected: BTreeSet<(usize, usize)> =
            [(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (0, 5)].into_iter().collect();
        assert_eq!(edges, expected);
        let mut degree = [0; 6];
        for &(a, b) in &edges {
            degree[a] += 1;
            degree[b] += 1;
        }
        assert!(degree.iter().all(|&d| d == 2));
        assert_eq!(c.dist(0, 3), 3.0);
        assert_eq!(c.even_cover_radius(), 1.5);
    }

    #[test]
    fn identity_voltages_give_disjoint_copies() {
        let z3 = Arc::new(FiniteGroup::cyclic(3).unwrap());
        let c = build_cover(triangle([1.0; 3]), &VoltageAssignment::trivial(&z3, 3), z3).unwrap();
        assert_eq!(c.vertex_count(), 9);
        for x in 0..9 {
            for y in 0..9 {
                assert_eq!(c.dist(x, y).is_finite(), c.split(x).0 == c.split(y).0);
            }
        }
    }

    #[test]
    fn inconsistent_reverse_voltage() {
        let z4 = Arc::new(FiniteGroup::cyclic(4).unwrap());
        let volt = VoltageAssignment { forward: vec![0, 1, 0], reverse: Some(vec![0, 1, 0]) };
        let err = build_cover(triangle([1.0; 3]), &volt, z4).unwrap_err();
        assert_eq!(err, Error::InconsistentVoltage { edge: 1 });
    }

    #[test]
    fn rejects_bad_bases() {
        assert!(BaseGraph::new(3, 1, None, vec![(0, 1, 1.0)]).is_err());
        assert!(BaseGraph::new(2, 1, None, vec![(0, 1, 0.0)]).is_err());
        assert!(BaseGraph::new(2, 2, Some((1, 2)), vec![(0, 1, 1.0)]).is_err());
    }

    #[test]
    fn metric_matches_floyd_and_deck_is_free_isometry() {
        let c = z4_cover();
        let d = floyd(&c);
        let n = c.vertex_count();
        for x in 0..n {
            for y in 0..n {
                assert_eq!(c.dist(x, y), d[x][y]);
            }
        }
        for g in c.group().elements() {
            let perm = c.deck_permutation(g);
            if g != c.group().identity() {
                assert!((0..n).all(|x| perm[x] != x));
            }
            for x in 0..n {
                for y in 0..n {
                    assert_eq!(c.dist(perm[x], perm[y]), c.dist(x, y));
                }
            }
        }
        assert!(c.even_cover_radius() > 0.0);
    }

    #[test]
    fn projection_is_local_bijection_on_edges() {
        let c = z4_cover();
        let nv = c.base().vertex_count();
        for x in 0..c.vertex_count() {
            let v = c.to_base(x);
            let mut up: Vec<usize> = Vec::new();
            let mut down: Vec<usize> = Vec::new();
            for (k, (a, b, _)) in c.lifted_edges().into_iter().enumerate() {
                if a == x || b == x {
                    up.push(k % c.voltages().len());
                }
            }
            for (k, &(a, b, _)) in c.base().edges().iter().enumerate() {
                if a == v || b == v {
                    down.push(k);
                }
            }
            up.sort_unstable();
            assert_eq!(up, down, "vertex {x} over {v} of {nv}");
        }
    }

    #[test]
    fn quotient_metric_is_min_over_h() {
        let m1 = z4_cover();
        let g = Arc::clone(m1.group());
        let q = quotient(&g, &subgroup_closure(&g, &[2]).unwrap()).unwrap();
        let (m2, pi) = project_cover(&m1, &q).unwrap();
        assert_eq!(m2.vertex_count(), 6);
        let mut count = vec![0; m2.vertex_count()];
        for &p in &pi {
            count[p] += 1;
        }
        assert!(count.iter().all(|&k| k == 2));
        for x in 0..m1.vertex_count() {
            for y in 0..m1.vertex_count() {
                let brute = q.subgroup().members().iter().map(|&h| m1.dist(m1.act(h, x), y)).fold(f64::INFINITY, f64::min);
                assert_eq!(m2.dist(pi[x], pi[y]), brute);
            }
        }
        // M₂ is a 6-cycle: every vertex has degree 2
        let mut degree = [0; 6];
        for (a, b, _) in m2.lifted_edges() {
            degree[a] += 1;
            degree[b] += 1;
        }
        assert!(degree.iter().all(|&d| d == 2));
    }

    #[test]
    fn extreme_projections() {
        let m1 = z4_cover();
        let g = Arc::clone(m1.group());
        let q = quotient(&g, &Subgroup::trivial(&g)).unwrap();
        let (m2, pi) = project_cover(&m1, &q).unwrap();
        assert_eq!(pi, (0..12).collect::<Vec<_>>());
        for x in 0..12 {
            for y in 0..12 {
                assert_eq!(m2.dist(x, y), m1.dist(x, y));
            }
        }
        let q = quotient(&g, &Subgroup::whole(&g)).unwrap();
        let (m2, _) = project_cover(&m1, &q).unwrap();
        assert_eq!(m2.vertex_count(), 3);
        assert_eq!(m2.dist(0, 1), 1.0);
        assert_eq!(m2.dist(0, 2), 0.75);

        let other = build_cover(triangle([1.0; 3]), &VoltageAssignment::new(vec![0, 1, 0]), Arc::new(FiniteGroup::cyclic(2).unwrap())).unwrap();
        assert!(project_cover(&other, &q).is_err());
    }

    #[test]
    fn canonical_partition_is_exact() {
        let c = z4_cover();
        let p = canonical_partition(&c);
        assert_eq!(p.sum_residual(&c), 0.0);
        assert_eq!(p.support_diameter(&c), 0.0);
        for i in 0..3 {
            for g in c.group().elements() {
                for gp in c.group().elements() {
                    for x in 0..c.vertex_count() {
                        assert_eq!(
                            p.value(&c, i, c.group().mul(gp, g), c.act(gp, x)),
                            p.value(&c, i, g, x)
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn random_partition_properties() {
        let c = z4_cover();
        let a = random_partition(&c, 7);
        assert_eq!(a, random_partition(&c, 7));
        assert_ne!(a, random_partition(&c, 8));
        assert_eq!(a.sum_residual(&c), 0.0);
        assert!(a.support_diameter(&c) < c.even_cover_radius());
        assert!((0..3).any(|i| a.lift(i).len() > 1), "supports should overlap");
        for lift in (0..3).map(|i| a.lift(i)) {
            let bases: BTreeSet<usize> = lift.iter().map(|&(x, _)| c.to_base(x)).collect();
            assert_eq!(bases.len(), lift.len(), "support must embed in the base");
            assert!(lift.iter().all(|&(_, w)| (0.0..=1.0).contains(&w)));
        }
    }

    #[test]
    fn cutoffs() {
        let c = z4_cover();
        let g = Arc::clone(c.group());
        let q = quotient(&g, &subgroup_closure(&g, &[2]).unwrap()).unwrap();
        let t = transversal_cutoff(&c, &q);
        let ones: Vec<usize> = (0..12).filter(|&x| t.at(x) == 1.0).map(|x| c.split(x).0).collect();
        assert_eq!(ones, vec![0, 0, 0, 1, 1, 1]);
        assert_eq!(t.normalization_residual(&c, &q), 0.0);
        let r = random_cutoff(&c, &q, 3);
        assert!(r.normalization_residual(&c, &q) < 1e-15);
        let q1 = quotient(&g, &Subgroup::trivial(&g)).unwrap();
        assert!(transversal_cutoff(&c, &q1).values().iter().all(|&v| v == 1.0));
    }
}
