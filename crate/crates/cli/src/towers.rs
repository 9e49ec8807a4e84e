//! Construction of covers, fold contexts and lifted operators from a config.

use std::sync::Arc;

use equifold::cover::{build_cover, BaseGraph, CoverGraph, VoltageAssignment};
use equifold::folding::FoldContext;
use equifold::group::{is_normal, quotient, subgroup_closure, FiniteGroup, Subgroup};
use equifold::operators::{lift_base_operator, BaseOperator, EquivariantKernel};
use equifold::Error;

use crate::config::{matrix_from_spec, ConfigError, ElementSpec, ExperimentConfig, GroupSpec};

/// A validated config with everything needed by the suites.
#[derive(Debug, Clone)]
pub struct Tower {
    pub config: ExperimentConfig,
    pub group: Arc<FiniteGroup>,
    pub ctx: FoldContext,
    pub h_generators: Vec<usize>,
    pub coarser_generators: Vec<usize>,
    pub base_op: BaseOperator,
}

type BuiltGroup = (FiniteGroup, Option<Vec<Vec<usize>>>);

fn build_group(spec: &GroupSpec) -> Result<BuiltGroup, ConfigError> {
    match spec {
        GroupSpec::Cyclic(n) => Ok((FiniteGroup::cyclic(*n).map_err(lib_err)?, None)),
        GroupSpec::Product(factors) => {
            let mut it = factors.iter();
            let first = it.next().ok_or_else(|| ConfigError::new("empty product"))?;
            let mut acc = build_group(first)?.0;
            for f in it {
                acc = FiniteGroup::product(&acc, &build_group(f)?.0);
            }
            Ok((acc, None))
        }
        GroupSpec::PermutationGenerators(gens) => {
            let (g, perms) = FiniteGroup::from_permutations(gens).map_err(lib_err)?;
            Ok((g, Some(perms)))
        }
    }
}

fn lib_err(e: Error) -> ConfigError {
    ConfigError::new(e.to_string())
}

fn resolve(spec: &ElementSpec, order: usize, perms: Option<&[Vec<usize>]>, what: &str) -> Result<usize, ConfigError> {
    match spec {
        ElementSpec::Index(i) if *i < order => Ok(*i),
        ElementSpec::Index(i) => Err(ConfigError::new(format!("{what}: element {i} out of range for a group of order {order}"))),
        ElementSpec::Permutation(p) => perms
            .ok_or_else(|| ConfigError::new(format!("{what}: permutations are only valid for permutation groups")))?
            .iter()
            .position(|q| q == p)
            .ok_or_else(|| ConfigError::new(format!("{what}: {p:?} is not in the group"))),
    }
}

fn resolve_all(specs: &[ElementSpec], order: usize, perms: Option<&[Vec<usize>]>, what: &str) -> Result<Vec<usize>, ConfigError> {
    specs.iter().map(|s| resolve(s, order, perms, what)).collect()
}

fn normal_closure(group: &FiniteGroup, gens: &[usize], what: &str) -> Result<Subgroup, ConfigError> {
    let h = subgroup_closure(group, gens).map_err(lib_err)?;
    if !is_normal(group, &h) {
        return Err(ConfigError::new(format!("{what} fails is_normal: the generated subgroup {:?} is not normal", h.members())));
    }
    Ok(h)
}

impl Tower {
    pub fn from_config(config: &ExperimentConfig) -> Result<Self, ConfigError> {
        let (group, perms) = build_group(&config.group)?;
        let group = Arc::new(group);
        let order = group.order();
        let perms = perms.as_deref();

        let h_generators = resolve_all(&config.normal_subgroup, order, perms, "normal_subgroup")?;
        let h = normal_closure(&group, &h_generators, "normal_subgroup")?;
        let mut coarser_generators = match &config.coarser_subgroup {
            Some(c) => resolve_all(c, order, perms, "coarser_subgroup")?,
            None => group.elements().collect(),
        };
        coarser_generators.extend(&h_generators);
        normal_closure(&group, &coarser_generators, "coarser_subgroup")?;

        let g = &config.base_graph;
        let grading = g.grading.map(|[p, m]| (p, m));
        let base = BaseGraph::new(g.vertices, g.fiber_rank, grading, g.edges.clone()).map_err(lib_err)?;
        let forward = resolve_all(&config.voltages, order, perms, "voltages")?;
        let reverse = config
            .reverse_voltages
            .as_ref()
            .map(|r| resolve_all(r, order, perms, "reverse_voltages"))
            .transpose()?;
        let volt = VoltageAssignment { forward, reverse };
        let cover = build_cover(Arc::new(base), &volt, Arc::clone(&group)).map_err(lib_err)?;
        let q = quotient(&group, &h).map_err(lib_err)?;
        let ctx = FoldContext::new(Arc::new(cover), q).map_err(lib_err)?;

        let r = g.fiber_rank;
        let op = &config.base_operator;
        let blocks = |list: &[crate::config::MatrixSpec], what: &str| {
            list.iter()
                .enumerate()
                .map(|(i, m)| matrix_from_spec(m, r, &format!("{what}[{i}]")))
                .collect::<Result<Vec<_>, _>>()
        };
        let base_op = BaseOperator {
            vertex_blocks: blocks(&op.vertex_blocks, "vertex_blocks")?,
            edge_blocks: blocks(&op.edge_blocks, "edge_blocks")?,
            reverse_blocks: op.reverse_blocks.as_deref().map(|b| blocks(b, "reverse_blocks")).transpose()?,
        };
        // validates Hermiticity, sizes and parity
        lift_base_operator(&base_op, ctx.m1()).map_err(lib_err)?;

        Ok(Tower { config: config.clone(), group, ctx, h_generators, coarser_generators, base_op })
    }

    pub fn name(&self) -> &str {
        &self.config.name
    }

    pub fn m1(&self) -> &Arc<CoverGraph> {
        self.ctx.m1()
    }

    pub fn m2(&self) -> &Arc<CoverGraph> {
        self.ctx.m2()
    }

    pub fn rank(&self) -> usize {
        self.m1().base().fiber_rank()
    }

    pub fn is_graded(&self) -> bool {
        self.m1().base().grading().is_some()
    }

    /// `(D₁, D₂)`, lifted independently.
    pub fn operators(&self) -> (EquivariantKernel, EquivariantKernel) {
        equifold::invariants::lift_pair(&self.base_op, &self.ctx).expect("validated at construction")
    }
}
