//! Run configuration, a versioned TOML document.
//!
//! ```toml
//! schema = 1
//! test = 1                      # or case = "test1" | "test2" | "constant" | "linear-x"
//! layout = "checkerboard2x2"    # or "explicit" with [[blocks]]
//! levels = [8, 16, 32, 48]
//! n = 8                         # single level for solve / compare-dd (default: first level)
//! ratio = 4
//! level_convention = "coarse-domain"   # or "fine-block"
//! tol = 1e-12
//! weighted_norm = true
//! block_jacobi = false
//!
//! [output]
//! csv = "table1.csv"
//! vtk_dir = "fields"
//! ```

use std::fmt;
use std::path::PathBuf;

use serde::Deserialize;

use crate::case::ManufacturedCase;
use crate::mesh::BlockSpec;
use crate::verification::LevelConvention;

pub const SCHEMA_VERSION: i64 = 1;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigIssue {
    pub key: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub struct ConfigError {
    pub issues: Vec<ConfigIssue>,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid configuration:")?;
        for i in &self.issues {
            if i.key.is_empty() {
                write!(f, "\n  {}", i.reason)?;
            } else {
                write!(f, "\n  {}: {}", i.key, i.reason)?;
            }
        }
        Ok(())
    }
}

impl ConfigError {
    pub fn has(&self, key: &str) -> bool {
        self.issues.iter().any(|i| i.key == key)
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBlock {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
    nx: usize,
    ny: usize,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    csv: Option<PathBuf>,
    vtk_dir: Option<PathBuf>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    schema: Option<i64>,
    test: Option<u32>,
    case: Option<String>,
    layout: Option<String>,
    blocks: Option<Vec<RawBlock>>,
    levels: Option<Vec<usize>>,
    n: Option<usize>,
    ratio: Option<usize>,
    level_convention: Option<String>,
    tol: Option<f64>,
    weighted_norm: Option<bool>,
    block_jacobi: Option<bool>,
    #[serde(default)]
    output: RawOutput,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LayoutConfig {
    Checkerboard,
    Explicit(Vec<BlockSpec>),
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct OutputConfig {
    pub csv: Option<PathBuf>,
    pub vtk_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    /// Builtin case name, see [`ManufacturedCase::builtin`].
    pub case: String,
    pub layout: LayoutConfig,
    pub levels: Vec<usize>,
    pub n: Option<usize>,
    pub ratio: usize,
    pub convention: LevelConvention,
    pub tol: f64,
    pub weighted_norm: bool,
    pub block_jacobi: bool,
    pub output: OutputConfig,
}

impl RunConfig {
    /// Defaults for a builtin case on the checkerboard layout.
    pub fn for_case(case: impl Into<String>, levels: Vec<usize>) -> Self {
        Self {
            case: case.into(),
            layout: LayoutConfig::Checkerboard,
            levels,
            n: None,
            ratio: 4,
            convention: LevelConvention::default(),
            tol: 1e-12,
            weighted_norm: true,
            block_jacobi: false,
            output: OutputConfig::default(),
        }
    }

    pub fn manufactured_case(&self) -> crate::Result<ManufacturedCase> {
        ManufacturedCase::builtin(&self.case)
    }

    /// Level used by single-solve commands.
    pub fn single_level(&self) -> Option<usize> {
        self.n.or_else(|| self.levels.first().copied())
    }

    /// Check preconditions that do not depend on how the config was built.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut issues = Vec::new();
        let mut issue = |key: &str, reason: String| issues.push(ConfigIssue { key: key.into(), reason });
        if ManufacturedCase::builtin(&self.case).is_err() {
            issue("case", format!("unknown case {:?}", self.case));
        }
        if self.ratio == 0 {
            issue("ratio", "must be positive".into());
        }
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            issue("tol", format!("must be positive, got {}", self.tol));
        }
        if self.levels.windows(2).any(|w| w[1] <= w[0]) {
            issue("levels", "must be strictly increasing".into());
        }
        match &self.layout {
            LayoutConfig::Checkerboard => {
                if self.levels.is_empty() && self.n.is_none() {
                    issue("levels", "missing required key (or n)".into());
                }
                if self.ratio > 0 {
                    for (key, n) in self.levels.iter().map(|&n| ("levels", n)).chain(self.n.map(|n| ("n", n))) {
                        if let Err(crate::Error::NotDivisible { n, ratio }) = self.convention.fine_cells(n, self.ratio) {
                            issue(key, format!("{n} not divisible by {ratio}"));
                        }
                    }
                }
            }
            LayoutConfig::Explicit(blocks) => {
                if blocks.is_empty() {
                    issue("blocks", "explicit layout needs at least one block".into());
                } else if let Err(e) = crate::mesh::build_multiblock(blocks) {
                    issue("blocks", e.to_string());
                }
            }
        }
        if issues.is_empty() {
            Ok(())
        } else {
            Err(ConfigError { issues })
        }
    }
}

pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let raw: RawConfig = toml::from_str(text)
        .map_err(|e| ConfigError { issues: vec![ConfigIssue { key: String::new(), reason: e.message().to_string() }] })?;
    let mut issues = Vec::new();
    let mut issue = |key: &str, reason: &str| issues.push(ConfigIssue { key: key.into(), reason: reason.into() });
    match raw.schema {
        None => issue("schema", "missing required key"),
        Some(SCHEMA_VERSION) => {}
        Some(v) => issue("schema", &format!("unsupported version {v}")),
    }
    let case = match (raw.test, raw.case) {
        (Some(_), Some(_)) => {
            issue("case", "give either test or case, not both");
            String::new()
        }
        (Some(t), None) => t.to_string(),
        (None, Some(c)) => c,
        (None, None) => {
            issue("test", "missing required key (or case)");
            String::new()
        }
    };
    let layout = match (raw.layout.as_deref(), raw.blocks) {
        (None | Some("checkerboard2x2"), None) => LayoutConfig::Checkerboard,
        (Some("checkerboard2x2"), Some(_)) => {
            issue("blocks", "only allowed with layout = \"explicit\"");
            LayoutConfig::Checkerboard
        }
        (None | Some("explicit"), Some(b)) => LayoutConfig::Explicit(
            b.into_iter()
                .map(|b| BlockSpec { x0: b.x0, x1: b.x1, y0: b.y0, y1: b.y1, nx: b.nx, ny: b.ny })
                .collect(),
        ),
        (Some("explicit"), None) => {
            issue("blocks", "missing required key for explicit layout");
            LayoutConfig::Explicit(Vec::new())
        }
        (Some(other), _) => {
            issue("layout", &format!("unknown layout {other:?}"));
            LayoutConfig::Checkerboard
        }
    };
    let convention = match raw.level_convention.as_deref() {
        None | Some("coarse-domain") => LevelConvention::CoarseDomain,
        Some("fine-block") => LevelConvention::FineBlock,
        Some(other) => {
            issue("level_convention", &format!("unknown convention {other:?}"));
            LevelConvention::default()
        }
    };
    let defaults = RunConfig::for_case("", Vec::new());
    let cfg = RunConfig {
        case,
        layout,
        levels: raw.levels.unwrap_or_default(),
        n: raw.n,
        ratio: raw.ratio.unwrap_or(defaults.ratio),
        convention,
        tol: raw.tol.unwrap_or(defaults.tol),
        weighted_norm: raw.weighted_norm.unwrap_or(defaults.weighted_norm),
        block_jacobi: raw.block_jacobi.unwrap_or(defaults.block_jacobi),
        output: OutputConfig { csv: raw.output.csv, vtk_dir: raw.output.vtk_dir },
    };
    let checked = if cfg.case.is_empty() {
        Vec::new()
    } else {
        cfg.validate().err().map(|e| e.issues).unwrap_or_default()
    };
    issues.extend(checked);
    if issues.is_empty() {
        Ok(cfg)
    } else {
        Err(ConfigError { issues })
    }
}
