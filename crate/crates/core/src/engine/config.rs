//! Campaign configuration: a TOML document naming the package, genesis and
//! fuzzing parameters.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::concolic::DEFAULT_BUDGET;
use crate::model::{ident, FunctionRef, QualifiedName};
use crate::oracles::OracleConfig;
use crate::synth::MAX_CALLS;
use crate::vm::DEFAULT_GAS_LIMIT;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {msg}")]
    Io { path: String, msg: String },
    #[error("config: {0}")]
    Syntax(String),
    #[error("config: {0}")]
    Invalid(String),
    #[error("package: {0}")]
    Package(String),
    #[error("genesis: {0}")]
    Genesis(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Weights {
    pub generate: f64,
    pub mutate: f64,
    pub concolic: f64,
}

impl Default for Weights {
    fn default() -> Self {
        Weights { generate: 0.2, mutate: 0.6, concolic: 0.2 }
    }
}

impl Weights {
    /// The same weights with concolic disabled and the rest rescaled.
    pub fn without_concolic(&self) -> Weights {
        let rest = self.generate + self.mutate;
        if rest <= 0.0 {
            return Weights { generate: 1.0, mutate: 0.0, concolic: 0.0 };
        }
        Weights { generate: self.generate / rest, mutate: self.mutate / rest, concolic: 0.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleSettings {
    pub infinite_loop: bool,
    pub precision_loss: bool,
    pub unnecessary_cast: bool,
    pub unnecessary_bool: bool,
    pub shl_overflow: bool,
    pub earning_profits: bool,
    pub amplification: bool,
    pub loop_threshold: u64,
}

impl Default for OracleSettings {
    fn default() -> Self {
        let d = OracleConfig::default();
        OracleSettings {
            infinite_loop: d.infinite_loop,
            precision_loss: d.precision_loss,
            unnecessary_cast: d.unnecessary_cast,
            unnecessary_bool: d.unnecessary_bool,
            shl_overflow: d.shl_overflow,
            earning_profits: d.earning_profits,
            amplification: d.amplification,
            loop_threshold: d.loop_threshold,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CampaignConfig {
    pub package: PathBuf,
    pub genesis: Option<PathBuf>,
    pub seed: u64,
    pub iterations: Option<u64>,
    /// Wall-clock limit in seconds.
    pub time: Option<f64>,
    pub gas_limit: u64,
    pub workers: usize,
    pub max_calls: usize,
    pub typegraph: bool,
    pub typeparams: bool,
    pub concolic: bool,
    pub concolic_budget: u32,
    pub dump_constraints: bool,
    pub weights: Weights,
    pub oracles: OracleSettings,
    /// Event tag to oracle name.
    pub custom_oracles: BTreeMap<String, String>,
    /// Function to call in place of another, both as `module::name`.
    pub rename: BTreeMap<String, String>,
}

impl Default for CampaignConfig {
    fn default() -> Self {
        CampaignConfig {
            package: PathBuf::new(),
            genesis: None,
            seed: 0,
            iterations: None,
            time: None,
            gas_limit: DEFAULT_GAS_LIMIT,
            workers: 1,
            max_calls: MAX_CALLS,
            typegraph: true,
            typeparams: true,
            concolic: true,
            concolic_budget: DEFAULT_BUDGET,
            dump_constraints: false,
            weights: Weights::default(),
            oracles: OracleSettings::default(),
            custom_oracles: BTreeMap::new(),
            rename: BTreeMap::new(),
        }
    }
}

pub fn parse_function_ref(s: &str) -> Option<FunctionRef> {
    let (m, f) = s.split_once("::")?;
    let ok = |x: &str| !x.is_empty() && x.chars().all(|c| c.is_ascii_alphanumeric() || c == '_');
    (ok(m) && ok(f)).then(|| QualifiedName { module: ident(m), name: ident(f) })
}

impl CampaignConfig {
    /// Reads a config file; relative paths resolve against its directory.
    pub fn load(path: &Path) -> Result<CampaignConfig, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::Io { path: path.display().to_string(), msg: e.to_string() })?;
        let mut cfg = Self::parse(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.package = base.join(&cfg.package);
        cfg.genesis = cfg.genesis.map(|g| base.join(g));
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<CampaignConfig, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Syntax(e.message().to_string()))
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if self.package.as_os_str().is_empty() {
            return bad("`package` is required".into());
        }
        if self.iterations.is_none() && self.time.is_none() {
            return bad("set `iterations` or `time`".into());
        }
        if let Some(t) = self.time {
            if !(t.is_finite() && t > 0.0) {
                return bad(format!("`time` must be positive, got {t}"));
            }
        }
        if self.gas_limit == 0 {
            return bad("`gas_limit` must be positive".into());
        }
        if self.workers == 0 {
            return bad("`workers` must be positive".into());
        }
        if self.max_calls == 0 {
            return bad("`max_calls` must be positive".into());
        }
        let w = &self.weights;
        for (name, v) in [("generate", w.generate), ("mutate", w.mutate), ("concolic", w.concolic)] {
            if !(v.is_finite() && v >= 0.0) {
                return bad(format!("weight `{name}` must be non-negative, got {v}"));
            }
        }
        let sum = w.generate + w.mutate + w.concolic;
        if (sum - 1.0).abs() > 1e-9 {
            return bad(format!("weights must sum to 1, got {sum}"));
        }
        self.custom_registry()?;
        self.rename_map()?;
        Ok(())
    }

    pub fn custom_registry(&self) -> Result<BTreeMap<u64, String>, ConfigError> {
        self.custom_oracles
            .iter()
            .map(|(k, v)| {
                let tag = k.parse::<u64>().map_err(|_| ConfigError::Invalid(format!("custom oracle tag `{k}` is not a u64")))?;
                Ok((tag, v.clone()))
            })
            .collect()
    }

    pub fn rename_map(&self) -> Result<BTreeMap<FunctionRef, FunctionRef>, ConfigError> {
        let parse = |s: &str| parse_function_ref(s).ok_or_else(|| ConfigError::Invalid(format!("`{s}` is not `module::function`")));
        self.rename.iter().map(|(k, v)| Ok((parse(k)?, parse(v)?))).collect()
    }

    pub fn oracle_config(&self) -> Result<OracleConfig, ConfigError> {
        let o = &self.oracles;
        Ok(OracleConfig {
            infinite_loop: o.infinite_loop,
            precision_loss: o.precision_loss,
            unnecessary_cast: o.unnecessary_cast,
            unnecessary_bool: o.unnecessary_bool,
            shl_overflow: o.shl_overflow,
            earning_profits: o.earning_profits,
            amplification: o.amplification,
            loop_threshold: o.loop_threshold,
            custom: self.custom_registry()?,
        })
    }

    /// Scheduling weights after ablation flags.
    pub fn effective_weights(&self) -> Weights {
        if self.concolic {
            self.weights.clone()
        } else {
            self.weights.without_concolic()
        }
    }
}
