//! Plain-text experiment configuration: `key = value` lines, `#` comments,
//! a mandatory schema version and seed, and fail-closed parsing (unknown
//! keys are errors).

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::measure::{JumpMeasure, LevyTriplet, MuMeasure, OrthonormalSystem, QuadratureSpec, TestFunction};
use crate::systems;

/// Named density shapes available from configuration files.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum DensityKind {
    /// `h(x) = x^{-2}`
    Cauchy,
    /// `h(x) = e^{-|x|/b}`
    Laplace { scale: f64 },
    /// `h(x) = e^{-x^2/2}`
    GaussTail,
}

impl DensityKind {
    pub fn function(&self) -> impl Fn(f64) -> f64 + Send + Sync + Copy + 'static {
        let kind = *self;
        move |x: f64| match kind {
            DensityKind::Cauchy => x.powi(-2),
            DensityKind::Laplace { scale } => (-x.abs() / scale).exp(),
            DensityKind::GaussTail => (-x * x / 2.0).exp(),
        }
    }

    /// Density value at the origin (for the weighted systems); infinite for
    /// the Cauchy shape.
    pub fn at_zero(&self) -> f64 {
        match self {
            DensityKind::Cauchy => f64::INFINITY,
            DensityKind::Laplace { .. } | DensityKind::GaussTail => 1.0,
        }
    }
}

/// Jump-measure description.
#[derive(Debug, Clone, Serialize)]
pub enum NuSpec {
    Atomic { atoms: Vec<(f64, f64)> },
    Density { kind: DensityKind, truncation_eps: f64, x_max: f64, panels: usize, nodes: usize },
}

/// Which function system generates the family.
#[derive(Debug, Clone, Serialize)]
pub enum BasisKind {
    Teugels { n_max: usize },
    Hermite { n_max: usize },
    Haar { j_min: i32, j_max: i32, k_min: i32, k_max: i32 },
    Indicator { cells: Vec<(f64, f64)>, at_zero: f64 },
}

/// Which check families `verify` runs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum SuiteSelection {
    All,
    Some(Vec<String>),
}

pub const SUITE_FAMILIES: &[&str] = &[
    "stability",
    "poisson",
    "isometry",
    "orthogonality",
    "product",
    "permutation",
    "crp",
    "chaos",
    "gram",
    "oracle",
];

impl SuiteSelection {
    pub fn includes(&self, family: &str) -> bool {
        match self {
            SuiteSelection::All => true,
            SuiteSelection::Some(list) => list.iter().any(|s| s == family),
        }
    }
}

/// Parsed experiment configuration.
#[derive(Debug, Clone, Serialize)]
pub struct ExperimentConfig {
    pub version: u32,
    pub seed: u64,
    pub horizon: f64,
    pub grid_step: f64,
    pub n_paths: usize,
    pub order_cap: usize,
    pub chaos_depth: u32,
    pub beta: f64,
    pub sigma2: f64,
    pub nu: NuSpec,
    pub basis: BasisKind,
    pub suite: SuiteSelection,
    pub out_dir: Option<String>,
    /// FNV-1a hash of the canonicalized key-value pairs
    pub config_hash: String,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            version: 1,
            seed: 1,
            horizon: 1.0,
            grid_step: 0.01,
            n_paths: 10_000,
            order_cap: 2,
            chaos_depth: 3,
            beta: 0.0,
            sigma2: 1.0,
            nu: NuSpec::Atomic { atoms: vec![(1.0, 2.0)] },
            basis: BasisKind::Teugels { n_max: 2 },
            suite: SuiteSelection::All,
            out_dir: None,
            config_hash: String::new(),
        }
    }
}

impl ExperimentConfig {
    /// Parse the documented `key = value` schema; unknown keys, missing
    /// mandatory fields and non-positive numeric knobs are errors.
    pub fn parse(text: &str) -> Result<Self> {
        let mut pairs: BTreeMap<String, String> = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::ConfigInvalid(format!("line {}: expected key = value", lineno + 1)))?;
            let key = k.trim().to_string();
            if pairs.insert(key.clone(), v.trim().to_string()).is_some() {
                return Err(Error::ConfigInvalid(format!("duplicate key '{key}'")));
            }
        }
        Self::from_pairs(pairs)
    }

    fn from_pairs(pairs: BTreeMap<String, String>) -> Result<Self> {
        const KNOWN: &[&str] = &[
            "version",
            "seed",
            "horizon",
            "grid_step",
            "n_paths",
            "order_cap",
            "chaos.depth",
            "triplet.beta",
            "triplet.sigma2",
            "nu.kind",
            "nu.atoms",
            "nu.density",
            "nu.truncation_eps",
            "nu.x_max",
            "nu.panels",
            "nu.nodes",
            "basis.kind",
            "basis.n_max",
            "basis.j_min",
            "basis.j_max",
            "basis.k_min",
            "basis.k_max",
            "basis.cells",
            "basis.at_zero",
            "suite",
            "out_dir",
        ];
        for key in pairs.keys() {
            if !KNOWN.contains(&key.as_str()) {
                return Err(Error::ConfigInvalid(format!("unknown key '{key}'")));
            }
        }
        let get = |k: &str| pairs.get(k).map(|s| s.as_str());
        let version: u32 = parse_field(get("version").ok_or_else(|| miss("version"))?, "version")?;
        if version != 1 {
            return Err(Error::ConfigInvalid(format!("unsupported version {version}")));
        }
        let seed: u64 = parse_field(get("seed").ok_or_else(|| miss("seed"))?, "seed")?;

        let mut cfg = ExperimentConfig { version, seed, ..Default::default() };
        if let Some(v) = get("horizon") {
            cfg.horizon = parse_positive(v, "horizon")?;
        }
        if let Some(v) = get("grid_step") {
            cfg.grid_step = parse_positive(v, "grid_step")?;
        }
        if let Some(v) = get("n_paths") {
            cfg.n_paths = parse_field(v, "n_paths")?;
            if cfg.n_paths == 0 {
                return Err(Error::ConfigInvalid("n_paths must be positive".into()));
            }
        }
        if let Some(v) = get("order_cap") {
            cfg.order_cap = parse_field(v, "order_cap")?;
        }
        if let Some(v) = get("chaos.depth") {
            cfg.chaos_depth = parse_field(v, "chaos.depth")?;
        }
        if let Some(v) = get("triplet.beta") {
            cfg.beta = parse_field(v, "triplet.beta")?;
        }
        if let Some(v) = get("triplet.sigma2") {
            cfg.sigma2 = parse_field(v, "triplet.sigma2")?;
            if cfg.sigma2 < 0.0 {
                return Err(Error::ConfigInvalid("triplet.sigma2 must be >= 0".into()));
            }
        }
        cfg.nu = parse_nu(&pairs)?;
        cfg.basis = parse_basis(&pairs)?;
        if let Some(v) = get("suite") {
            cfg.suite = if v == "all" {
                SuiteSelection::All
            } else {
                let list: Vec<String> = v.split(',').map(|s| s.trim().to_string()).collect();
                for item in &list {
                    if !SUITE_FAMILIES.contains(&item.as_str()) {
                        return Err(Error::ConfigInvalid(format!(
                            "unknown suite family '{item}' (known: {})",
                            SUITE_FAMILIES.join(", ")
                        )));
                    }
                }
                SuiteSelection::Some(list)
            };
        }
        cfg.out_dir = get("out_dir").map(|s| s.to_string());
        cfg.config_hash = hash_pairs(&pairs);
        Ok(cfg)
    }

    pub fn triplet(&self) -> Result<LevyTriplet> {
        let nu = match &self.nu {
            NuSpec::Atomic { atoms } => JumpMeasure::atomic(atoms.clone())?,
            NuSpec::Density { kind, truncation_eps, x_max, panels, nodes } => JumpMeasure::density(
                kind.function(),
                QuadratureSpec { x_max: *x_max, panels_per_side: *panels, nodes_per_panel: *nodes },
                *truncation_eps,
            )?,
        };
        LevyTriplet::new(self.beta, self.sigma2, nu)
    }

    /// Materialize the configured basis as raw generator functions.
    pub fn basis_functions(&self, mu: &MuMeasure) -> Result<Vec<TestFunction>> {
        match &self.basis {
            BasisKind::Teugels { n_max } => systems::teugels_system(*n_max, mu),
            BasisKind::Hermite { n_max } => {
                let h0 = match &self.nu {
                    NuSpec::Density { kind, .. } => kind.at_zero(),
                    NuSpec::Atomic { .. } => return Err(Error::DensityRequired),
                };
                Ok(systems::hermite_weighted_system(*n_max, mu, h0)?.members().to_vec())
            }
            BasisKind::Haar { j_min, j_max, k_min, k_max } => {
                let h0 = match &self.nu {
                    NuSpec::Density { kind, .. } => kind.at_zero(),
                    NuSpec::Atomic { .. } => return Err(Error::DensityRequired),
                };
                Ok(systems::haar_system(*j_min, *j_max, *k_min, *k_max, mu, h0)?.members().to_vec())
            }
            BasisKind::Indicator { cells, at_zero } => {
                Ok(systems::indicator_system(cells, *at_zero, mu)?.members().to_vec())
            }
        }
    }

    /// Materialize the configured basis orthonormalized in L^2(mu).
    pub fn orthonormal_system(&self, mu: &MuMeasure) -> Result<OrthonormalSystem> {
        let raw = self.basis_functions(mu)?;
        crate::measure::gram_schmidt(&raw, mu, crate::measure::DROP_TOL)
    }
}

fn miss(key: &str) -> Error {
    Error::ConfigInvalid(format!("missing mandatory key '{key}'"))
}

fn parse_field<T: std::str::FromStr>(v: &str, key: &str) -> Result<T> {
    v.parse::<T>().map_err(|_| Error::ConfigInvalid(format!("field '{key}': cannot parse '{v}'")))
}

fn parse_positive(v: &str, key: &str) -> Result<f64> {
    let x: f64 = parse_field(v, key)?;
    if x > 0.0 {
        Ok(x)
    } else {
        Err(Error::ConfigInvalid(format!("field '{key}' must be positive, got {x}")))
    }
}

fn parse_pair_list(v: &str, key: &str) -> Result<Vec<(f64, f64)>> {
    let mut out = Vec::new();
    for item in v.split(',') {
        let item = item.trim();
        if item.is_empty() {
            continue;
        }
        let (a, b) = item
            .split_once(':')
            .ok_or_else(|| Error::ConfigInvalid(format!("field '{key}': expected a:b pairs, got '{item}'")))?;
        out.push((parse_field(a.trim(), key)?, parse_field(b.trim(), key)?));
    }
    if out.is_empty() {
        return Err(Error::ConfigInvalid(format!("field '{key}' is empty")));
    }
    Ok(out)
}

fn parse_nu(pairs: &BTreeMap<String, String>) -> Result<NuSpec> {
    let kind = pairs.get("nu.kind").map(|s| s.as_str()).unwrap_or("atomic");
    match kind {
        "atomic" => {
            let atoms = match pairs.get("nu.atoms") {
                Some(v) => parse_pair_list(v, "nu.atoms")?,
                None => vec![(1.0, 2.0)],
            };
            Ok(NuSpec::Atomic { atoms })
        }
        "density" => {
            let spec = pairs.get("nu.density").map(|s| s.as_str()).unwrap_or("gausstail");
            let kind = match spec.split(':').next().unwrap_or("") {
                "cauchy" => DensityKind::Cauchy,
                "gausstail" => DensityKind::GaussTail,
                "laplace" => {
                    let scale = spec
                        .split_once(':')
                        .map(|(_, s)| parse_field(s, "nu.density"))
                        .transpose()?
                        .unwrap_or(1.0);
                    DensityKind::Laplace { scale }
                }
                other => {
                    return Err(Error::ConfigInvalid(format!(
                        "unknown density '{other}' (known: cauchy, laplace[:scale], gausstail)"
                    )))
                }
            };
            Ok(NuSpec::Density {
                kind,
                truncation_eps: pairs
                    .get("nu.truncation_eps")
                    .map(|v| parse_positive(v, "nu.truncation_eps"))
                    .transpose()?
                    .unwrap_or(1e-3),
                x_max: pairs.get("nu.x_max").map(|v| parse_positive(v, "nu.x_max")).transpose()?.unwrap_or(30.0),
                panels: pairs.get("nu.panels").map(|v| parse_field(v, "nu.panels")).transpose()?.unwrap_or(40),
                nodes: pairs.get("nu.nodes").map(|v| parse_field(v, "nu.nodes")).transpose()?.unwrap_or(32),
            })
        }
        other => Err(Error::ConfigInvalid(format!("nu.kind must be atomic or density, got '{other}'"))),
    }
}

fn parse_basis(pairs: &BTreeMap<String, String>) -> Result<BasisKind> {
    let kind = pairs.get("basis.kind").map(|s| s.as_str()).unwrap_or("teugels");
    let n_max = pairs.get("basis.n_max").map(|v| parse_field::<usize>(v, "basis.n_max")).transpose()?;
    match kind {
        "teugels" => Ok(BasisKind::Teugels { n_max: n_max.unwrap_or(2) }),
        "hermite" => Ok(BasisKind::Hermite { n_max: n_max.unwrap_or(3) }),
        "haar" => Ok(BasisKind::Haar {
            j_min: pairs.get("basis.j_min").map(|v| parse_field(v, "basis.j_min")).transpose()?.unwrap_or(0),
            j_max: pairs.get("basis.j_max").map(|v| parse_field(v, "basis.j_max")).transpose()?.unwrap_or(2),
            k_min: pairs.get("basis.k_min").map(|v| parse_field(v, "basis.k_min")).transpose()?.unwrap_or(-2),
            k_max: pairs.get("basis.k_max").map(|v| parse_field(v, "basis.k_max")).transpose()?.unwrap_or(2),
        }),
        "indicator" => Ok(BasisKind::Indicator {
            cells: match pairs.get("basis.cells") {
                Some(v) => parse_pair_list(v, "basis.cells")?,
                None => vec![(0.5, 1.5), (1.5, 2.5)],
            },
            at_zero: pairs.get("basis.at_zero").map(|v| parse_field(v, "basis.at_zero")).transpose()?.unwrap_or(1.0),
        }),
        other => Err(Error::ConfigInvalid(format!(
            "basis.kind must be teugels, hermite, haar or indicator, got '{other}'"
        ))),
    }
}

fn hash_pairs(pairs: &BTreeMap<String, String>) -> String {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for (k, v) in pairs {
        for b in k.bytes().chain(*b"=").chain(v.bytes()).chain(*b"\n") {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01B3);
        }
    }
    format!("{h:016x}")
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = "\
version = 1
seed = 42
horizon = 1.0          # one time unit
grid_step = 0.01
n_paths = 1000
triplet.sigma2 = 1.0
nu.kind = atomic
nu.atoms = 1.0:2.0
basis.kind = teugels
basis.n_max = 2
suite = isometry, gram
";

    #[test]
    fn parses_sample() {
        let cfg = ExperimentConfig::parse(SAMPLE).unwrap();
        assert_eq!(cfg.seed, 42);
        assert_eq!(cfg.n_paths, 1000);
        assert!(cfg.suite.includes("isometry"));
        assert!(!cfg.suite.includes("product"));
        assert!(!cfg.config_hash.is_empty());
        cfg.triplet().unwrap();
    }

    #[test]
    fn rejects_unknown_key() {
        let text = format!("{SAMPLE}\nbogus = 1\n");
        let err = ExperimentConfig::parse(&text).unwrap_err();
        assert!(err.to_string().contains("bogus"), "{err}");
    }

    #[test]
    fn rejects_missing_seed() {
        let err = ExperimentConfig::parse("version = 1\n").unwrap_err();
        assert!(err.to_string().contains("seed"), "{err}");
    }

    #[test]
    fn rejects_bad_suite_family() {
        let text = format!("{}suite = nonsense\n", "version = 1\nseed = 1\n");
        assert!(ExperimentConfig::parse(&text).is_err());
    }

    #[test]
    fn hash_is_stable_and_content_sensitive() {
        let a = ExperimentConfig::parse(SAMPLE).unwrap();
        let b = ExperimentConfig::parse(SAMPLE).unwrap();
        assert_eq!(a.config_hash, b.config_hash);
        let c = ExperimentConfig::parse(&SAMPLE.replace("seed = 42", "seed = 43")).unwrap();
        assert_ne!(a.config_hash, c.config_hash);
    }

    #[test]
    fn density_config_builds() {
        let text = "\
version = 1
seed = 7
nu.kind = density
nu.density = laplace:0.5
nu.truncation_eps = 0.001
basis.kind = hermite
basis.n_max = 2
";
        let cfg = ExperimentConfig::parse(text).unwrap();
        let triplet = cfg.triplet().unwrap();
        let mu = triplet.mu();
        let sys = cfg.basis_functions(&mu).unwrap();
        assert_eq!(sys.len(), 3);
    }
}
