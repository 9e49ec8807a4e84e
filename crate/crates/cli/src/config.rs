//! Experiment configuration: JSON schema, built-in towers and validation.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use equifold::operators::{Block, C64};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
#[error("config error: {0}")]
pub struct ConfigError(pub String);

impl ConfigError {
    pub fn new(msg: impl Into<String>) -> Self {
        ConfigError(msg.into())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    Algebra,
    Folding,
    Wave,
    Funcalc,
    Index,
    Rho,
}

impl Suite {
    pub const ALL: [Suite; 6] = [Suite::Algebra, Suite::Folding, Suite::Wave, Suite::Funcalc, Suite::Index, Suite::Rho];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Algebra => "algebra",
            Suite::Folding => "folding",
            Suite::Wave => "wave",
            Suite::Funcalc => "funcalc",
            Suite::Index => "index",
            Suite::Rho => "rho",
        }
    }

    pub fn parse(s: &str) -> Result<Self, ConfigError> {
        Self::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| ConfigError::new(format!("unknown suite {s:?}")))
    }

    /// Default bound of the suite's main comparison.
    pub fn default_tolerance(self) -> f64 {
        match self {
            Suite::Algebra | Suite::Folding => 1e-12,
            Suite::Wave | Suite::Funcalc | Suite::Index | Suite::Rho => 1e-10,
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum GroupSpec {
    Cyclic(usize),
    /// Direct product; element `(a, b)` has index `a·|B| + b`.
    Product(Vec<GroupSpec>),
    /// Group generated by permutations of `0..n`; elements are indexed in
    /// lexicographic order of their images.
    PermutationGenerators(Vec<Vec<usize>>),
}

/// A group element, by index or (for permutation groups) by images.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ElementSpec {
    Index(usize),
    Permutation(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaseGraphSpec {
    pub vertices: usize,
    pub fiber_rank: usize,
    #[serde(default)]
    pub grading: Option<[usize; 2]>,
    /// `[v, w, length]`.
    pub edges: Vec<(usize, usize, f64)>,
}

/// Matrix entry: a real number or `[re, im]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EntrySpec {
    Real(f64),
    Complex([f64; 2]),
}

impl EntrySpec {
    pub fn value(self) -> C64 {
        match self {
            EntrySpec::Real(x) => C64::new(x, 0.0),
            EntrySpec::Complex([re, im]) => C64::new(re, im),
        }
    }
}

/// Row-major matrix.
pub type MatrixSpec = Vec<Vec<EntrySpec>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaseOperatorSpec {
    pub vertex_blocks: Vec<MatrixSpec>,
    pub edge_blocks: Vec<MatrixSpec>,
    #[serde(default)]
    pub reverse_blocks: Option<Vec<MatrixSpec>>,
}

pub fn matrix_from_spec(m: &MatrixSpec, rank: usize, what: &str) -> Result<Block, ConfigError> {
    if m.len() != rank || m.iter().any(|row| row.len() != rank) {
        return Err(ConfigError::new(format!("{what} must be {rank}×{rank}")));
    }
    if m.iter().flatten().any(|e| !e.value().re.is_finite() || !e.value().im.is_finite()) {
        return Err(ConfigError::new(format!("{what} has a non-finite entry")));
    }
    Ok(Block::from_fn(rank, rank, |i, j| m[i][j].value()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grids {
    #[serde(default = "default_wave_grid")]
    pub wave: Vec<f64>,
    #[serde(default = "equifold::invariants::default_rho_grid")]
    pub rho: Vec<f64>,
    /// Parameters of the `F_t` used in the calculus functoriality checks.
    #[serde(default = "default_fejer_grid")]
    pub fejer: Vec<f64>,
}

impl Default for Grids {
    fn default() -> Self {
        Grids { wave: default_wave_grid(), rho: equifold::invariants::default_rho_grid(), fejer: default_fejer_grid() }
    }
}

fn default_wave_grid() -> Vec<f64> {
    vec![0.1, 0.5, 1.0, 2.0, 5.0]
}

fn default_fejer_grid() -> Vec<f64> {
    vec![0.5, 1.0, 4.0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Thresholds {
    /// `τ` values for the propagation monotonicity check.
    #[serde(default = "default_propagation_thresholds")]
    pub propagation: Vec<f64>,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds { propagation: default_propagation_thresholds() }
    }
}

fn default_propagation_thresholds() -> Vec<f64> {
    vec![1e-12]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadratureSpec {
    pub t_max: f64,
    pub nodes: usize,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        QuadratureSpec { t_max: 8.0, nodes: 2048 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub group: GroupSpec,
    /// Generators of the normal subgroup `H`.
    pub normal_subgroup: Vec<ElementSpec>,
    /// Extra generators of a second normal subgroup `H₂ ⊇ H` for the
    /// two-step check; the whole group if absent.
    #[serde(default)]
    pub coarser_subgroup: Option<Vec<ElementSpec>>,
    pub base_graph: BaseGraphSpec,
    pub voltages: Vec<ElementSpec>,
    #[serde(default)]
    pub reverse_voltages: Option<Vec<ElementSpec>>,
    pub base_operator: BaseOperatorSpec,
    #[serde(default = "all_suites")]
    pub suites: Vec<Suite>,
    #[serde(default)]
    pub seed: u64,
    /// Overrides of the main bound of each suite.
    #[serde(default)]
    pub tolerances: BTreeMap<Suite, f64>,
    #[serde(default)]
    pub grids: Grids,
    #[serde(default)]
    pub thresholds: Thresholds,
    /// Random kernels per randomized check.
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default = "default_gap_floor")]
    pub gap_floor: f64,
    #[serde(default)]
    pub quadrature: QuadratureSpec,
}

fn all_suites() -> Vec<Suite> {
    Suite::ALL.to_vec()
}

fn default_samples() -> usize {
    100
}

fn default_gap_floor() -> f64 {
    equifold::invariants::DEFAULT_GAP_FLOOR
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let cfg: ExperimentConfig = serde_json::from_str(text).map_err(|e| ConfigError::new(format!("invalid JSON: {e}")))?;
        cfg.check_scalars()?;
        Ok(cfg)
    }

    pub fn tolerance(&self, suite: Suite) -> f64 {
        self.tolerances.get(&suite).copied().unwrap_or_else(|| suite.default_tolerance())
    }

    fn check_scalars(&self) -> Result<(), ConfigError> {
        if let Some((s, t)) = self.tolerances.iter().find(|(_, &t)| !(t > 0.0 && t.is_finite())) {
            return Err(ConfigError::new(format!("tolerance for {s} must be positive, got {t}")));
        }
        if !(self.gap_floor >= 0.0 && self.gap_floor.is_finite()) {
            return Err(ConfigError::new("gap_floor must be non-negative"));
        }
        if self.thresholds.propagation.iter().any(|&t| !(t > 0.0)) {
            return Err(ConfigError::new("propagation thresholds must be positive"));
        }
        if self.grids.wave.iter().chain(&self.grids.fejer).any(|t| !t.is_finite()) {
            return Err(ConfigError::new("grids must be finite"));
        }
        if self.grids.fejer.iter().any(|&t| t <= 0.0) {
            return Err(ConfigError::new("fejer grid values must be positive"));
        }
        if self.quadrature.nodes == 0 || !self.quadrature.nodes.is_multiple_of(4) || !(self.quadrature.t_max > 0.0) {
            return Err(ConfigError::new("quadrature needs t_max > 0 and a node count divisible by 4"));
        }
        if self.samples == 0 {
            return Err(ConfigError::new("samples must be positive"));
        }
        Ok(())
    }
}

pub const BUILTIN_PREFIX: &str = "builtin:";

const BUILTINS: [(&str, &str); 3] = [
    ("z4_mod_z2_triangle", include_str!("../fixtures/z4_mod_z2_triangle.json")),
    ("z6_mod_z2_square_graded", include_str!("../fixtures/z6_mod_z2_square_graded.json")),
    ("s3_mod_a3_multigraph", include_str!("../fixtures/s3_mod_a3_multigraph.json")),
];

pub fn builtin_names() -> impl Iterator<Item = &'static str> {
    BUILTINS.iter().map(|(n, _)| *n)
}

pub fn builtin(name: &str) -> Result<ExperimentConfig, ConfigError> {
    let (_, text) = BUILTINS
        .iter()
        .find(|(n, _)| *n == name)
        .ok_or_else(|| ConfigError::new(format!("no built-in tower named {name:?}")))?;
    ExperimentConfig::from_json(text)
}

/// Reads `builtin:NAME` or a JSON file.
pub fn load(source: &str) -> Result<ExperimentConfig, ConfigError> {
    if let Some(name) = source.strip_prefix(BUILTIN_PREFIX) {
        return builtin(name);
    }
    let text = std::fs::read_to_string(Path::new(source)).map_err(|e| ConfigError::new(format!("cannot read {source}: {e}")))?;
    ExperimentConfig::from_json(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtins_parse() {
        for name in builtin_names() {
            let cfg = builtin(name).unwrap();
            assert_eq!(cfg.name, name);
            assert_eq!(cfg.suites.len(), 6);
            assert_eq!(cfg.samples, 100);
        }
        assert!(builtin("nope").is_err());
    }

    #[test]
    fn entries_and_elements() {
        let m: MatrixSpec = serde_json::from_str("[[1.0, [0.5, -2.0]], [0, 3]]").unwrap();
        let b = matrix_from_spec(&m, 2, "block").unwrap();
        assert_eq!(b[(0, 1)], C64::new(0.5, -2.0));
        assert_eq!(b[(1, 1)], C64::new(3.0, 0.0));
        assert!(matrix_from_spec(&m, 3, "block").is_err());
        let e: Vec<ElementSpec> = serde_json::from_str("[2, [1, 0, 2]]").unwrap();
        assert_eq!(e, vec![ElementSpec::Index(2), ElementSpec::Permutation(vec![1, 0, 2])]);
    }

    #[test]
    fn scalar_validation() {
        let mut cfg = builtin("z4_mod_z2_triangle").unwrap();
        cfg.tolerances.insert(Suite::Wave, -1.0);
        let text = serde_json::to_string(&cfg).unwrap();
        assert!(ExperimentConfig::from_json(&text).unwrap_err().0.contains("tolerance"));
        assert!(ExperimentConfig::from_json("{").is_err());
        assert!(ExperimentConfig::from_json(r#"{"name": 1}"#).is_err());
    }

    #[test]
    fn suite_names_round_trip() {
        for s in Suite::ALL {
            assert_eq!(Suite::parse(s.name()).unwrap(), s);
        }
        assert!(Suite::parse("bogus").is_err());
    }
}
