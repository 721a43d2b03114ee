//! Experiment configuration, a versioned TOML document.
//!
//! ```toml
//! version = 1
//! output_dir = "results"        # relative to the config file
//! seeds = [0, 1, 2]             # or: replicates = 10  (seeds 0..10)
//!
//! [engine]                      # defaults for ensemble methods
//! population_size = 15
//! temperature = 1.0
//!
//! [adapt]                       # defaults for adaptive-p3bo
//! quantile = 0.5
//!
//! [[problems]]
//! file = "ising.problem"        # relative to the config file
//!
//! [[problems]]
//! generate = "lookup"
//! params = { seed = 3, motifs = 4 }
//!
//! [[methods]]
//! kind = "p3bo"
//!
//! [[methods]]
//! name = "cem-markov"
//! kind = "cem"
//! params = { model = "markov" }
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::adaptive::{AdaptConfig, PopulationSpec, PriorCatalog};
use crate::engine::{Adaptation, EngineConfig};
use crate::error::{Error, Result};
use crate::harness::generate::{gen_problem, Params};
use crate::oracles::format::load_problem;
use crate::oracles::{OracleInstance, OracleKind};
use crate::solvers::{HyperParams, SolverClass, SolverSpec};

pub const CONFIG_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub seeds: Vec<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub replicates: Option<u64>,
    #[serde(default, skip_serializing_if = "toml::Table::is_empty")]
    pub engine: toml::Table,
    #[serde(default, skip_serializing_if = "toml::Table::is_empty")]
    pub adapt: toml::Table,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub priors: Option<PriorCatalog>,
    pub problems: Vec<ProblemConfig>,
    pub methods: Vec<MethodConfig>,
}

fn default_output() -> PathBuf {
    PathBuf::from("results")
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generate: Option<String>,
    #[serde(default, skip_serializing_if = "toml::Table::is_empty")]
    pub params: toml::Table,
    /// Overrides the instance's rounds.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rounds: Option<usize>,
    /// Overrides the instance's batch size.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub batch_size: Option<usize>,
    /// Overrides the instance id.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum MethodKind {
    #[serde(rename = "p3bo")]
    P3bo,
    #[serde(rename = "adaptive-p3bo")]
    AdaptiveP3bo,
    #[serde(rename = "smw")]
    Smw,
    #[serde(rename = "evolution")]
    Evolution,
    #[serde(rename = "cem")]
    Cem,
    #[serde(rename = "mbo")]
    Mbo,
}

impl MethodKind {
    pub fn as_str(self) -> &'static str {
        match self {
            MethodKind::P3bo => "p3bo",
            MethodKind::AdaptiveP3bo => "adaptive-p3bo",
            MethodKind::Smw => "smw",
            MethodKind::Evolution => "evolution",
            MethodKind::Cem => "cem",
            MethodKind::Mbo => "mbo",
        }
    }

    pub fn standalone_class(self) -> Option<SolverClass> {
        match self {
            MethodKind::Smw => Some(SolverClass::Smw),
            MethodKind::Evolution => Some(SolverClass::Evolution),
            MethodKind::Cem => Some(SolverClass::Cem),
            MethodKind::Mbo => Some(SolverClass::Mbo),
            MethodKind::P3bo | MethodKind::AdaptiveP3bo => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodConfig {
    /// Label in outputs; defaults to the kind.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub kind: MethodKind,
    /// Engine overrides on top of the top-level `[engine]` table.
    #[serde(default, skip_serializing_if = "toml::Table::is_empty")]
    pub engine: toml::Table,
    /// Adaptation overrides on top of the top-level `[adapt]` table.
    #[serde(default, skip_serializing_if = "toml::Table::is_empty")]
    pub adapt: toml::Table,
    /// Initial population constraints for ensemble methods.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub population: Option<PopulationSpec>,
    /// Solver hyperparameters for standalone methods.
    #[serde(default, skip_serializing_if = "HyperParams::is_empty")]
    pub params: HyperParams,
}

impl MethodConfig {
    pub fn new(kind: MethodKind) -> Self {
        Self {
            name: None,
            kind,
            engine: toml::Table::new(),
            adapt: toml::Table::new(),
            population: None,
            params: HyperParams::new(),
        }
    }

    pub fn named(mut self, name: impl Into<String>) -> Self {
        self.name = Some(name.into());
        self
    }

    pub fn label(&self) -> String {
        self.name.clone().unwrap_or_else(|| self.kind.as_str().to_string())
    }
}

/// A method ready to run: engine settings plus how to obtain the initial
/// population.
#[derive(Clone, Debug, PartialEq)]
pub struct ResolvedMethod {
    pub name: String,
    pub kind: MethodKind,
    pub engine: EngineConfig,
    pub population: PopulationSource,
}

#[derive(Clone, Debug, PartialEq)]
pub enum PopulationSource {
    Fixed(Vec<SolverSpec>),
    Sampled { spec: PopulationSpec, priors: PriorCatalog },
}

fn merge(base: &toml::Table, over: &toml::Table) -> toml::Table {
    let mut out = base.clone();
    for (k, v) in over {
        out.insert(k.clone(), v.clone());
    }
    out
}

fn from_table<T: serde::de::DeserializeOwned>(t: toml::Table, what: &str) -> Result<T> {
    toml::Value::Table(t)
        .try_into()
        .map_err(|e| Error::Config(format!("{what}: {e}")))
}

/// Engine keys accepted in `[engine]` tables.
#[derive(Deserialize)]
#[serde(default, deny_unknown_fields)]
struct EngineSection {
    population_size: usize,
    temperature: f64,
    decay: f64,
    warmup_rounds: usize,
    retry_cap: usize,
    initial_weights: Option<Vec<f64>>,
    share_data: bool,
}

impl Default for EngineSection {
    fn default() -> Self {
        let d = EngineConfig::default();
        Self {
            population_size: d.population_size,
            temperature: d.temperature,
            decay: d.decay,
            warmup_rounds: d.warmup_rounds,
            retry_cap: d.retry_cap,
            initial_weights: d.initial_weights,
            share_data: d.share_data,
        }
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != CONFIG_VERSION {
            return Err(Error::Config(format!(
                "unsupported config version {} (expected {CONFIG_VERSION})",
                self.version
            )));
        }
        if self.seed_list().is_empty() {
            return Err(Error::Config("no seeds: give `seeds` or `replicates`".into()));
        }
        if !self.seeds.is_empty() && self.replicates.is_some() {
            return Err(Error::Config("give either `seeds` or `replicates`, not both".into()));
        }
        if self.problems.is_empty() || self.methods.is_empty() {
            return Err(Error::Config("need at least one problem and one method".into()));
        }
        let mut names: Vec<String> = self.methods.iter().map(MethodConfig::label).collect();
        names.sort();
        if let Some(w) = names.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::Config(format!("duplicate method name `{}`", w[0])));
        }
        for m in self.methods.iter() {
            self.resolve_method(m)?;
        }
        for p in &self.problems {
            if p.file.is_some() == p.generate.is_some() {
                return Err(Error::Config("each problem needs exactly one of `file` or `generate`".into()));
            }
        }
        Ok(())
    }

    pub fn seed_list(&self) -> Vec<u64> {
        match self.replicates {
            Some(n) if self.seeds.is_empty() => (0..n).collect(),
            _ => self.seeds.clone(),
        }
    }

    pub fn resolve_methods(&self) -> Result<Vec<ResolvedMethod>> {
        self.methods.iter().map(|m| self.resolve_method(m)).collect()
    }

    fn resolve_method(&self, m: &MethodConfig) -> Result<ResolvedMethod> {
        let name = m.label();
        if name.is_empty() || name.chars().any(|c| c.is_whitespace() || c == '/' || c == '\\') {
            return Err(Error::Config(format!("method name `{name}` must be non-empty without whitespace or slashes")));
        }
        let what = format!("method `{name}`");
        let section: EngineSection = from_table(merge(&self.engine, &m.engine), &format!("{what} engine"))?;
        let mut engine = EngineConfig {
            population_size: section.population_size,
            temperature: section.temperature,
            decay: section.decay,
            warmup_rounds: section.warmup_rounds,
            retry_cap: section.retry_cap,
            seed: 0,
            initial_weights: section.initial_weights,
            share_data: section.share_data,
            adaptation: None,
        };
        let priors = self.priors.clone().unwrap_or_default();
        let population = match m.kind.standalone_class() {
            Some(class) => {
                if m.population.is_some() || !m.adapt.is_empty() {
                    return Err(Error::Config(format!("{what}: standalone methods take no population or adapt settings")));
                }
                engine.population_size = 1;
                engine.initial_weights = None;
                let spec = SolverSpec::new(class, m.params.clone());
                spec.validate().map_err(|e| Error::Config(format!("{what}: {e}")))?;
                PopulationSource::Fixed(vec![spec])
            }
            None => {
                if !m.params.is_empty() {
                    return Err(Error::Config(format!("{what}: ensemble methods take `population`, not `params`")));
                }
                if m.kind == MethodKind::AdaptiveP3bo {
                    let config: AdaptConfig = from_table(merge(&self.adapt, &m.adapt), &format!("{what} adapt"))?;
                    engine.adaptation = Some(Adaptation {
                        config,
                        priors: priors.clone(),
                    });
                } else if !m.adapt.is_empty() {
                    return Err(Error::Config(format!("{what}: adapt settings need kind adaptive-p3bo")));
                }
                PopulationSource::Sampled {
                    spec: m.population.clone().unwrap_or_default(),
                    priors,
                }
            }
        };
        engine.validate().map_err(|e| Error::Config(format!("{what}: {e}")))?;
        Ok(ResolvedMethod {
            name,
            kind: m.kind,
            engine,
            population,
        })
    }

    /// Loads or generates every problem; relative paths resolve against
    /// `base`.
    pub fn load_problems(&self, base: &Path) -> Result<Vec<OracleInstance>> {
        let mut out: Vec<OracleInstance> = Vec::new();
        for p in &self.problems {
            let mut inst = match (&p.file, &p.generate) {
                (Some(f), None) => load_problem(base.join(f))?,
                (None, Some(kind)) => {
                    let kind: OracleKind = kind.parse()?;
                    let values: BTreeMap<String, String> = p
                        .params
                        .iter()
                        .map(|(k, v)| {
                            let s = match v {
                                toml::Value::String(s) => s.clone(),
                                toml::Value::Array(a) => a.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(","),
                                other => other.to_string(),
                            };
                            (k.clone(), s)
                        })
                        .collect();
                    gen_problem(kind, Params::new(values))?.instance
                }
                _ => return Err(Error::Config("each problem needs exactly one of `file` or `generate`".into())),
            };
            if let Some(r) = p.rounds {
                if r == 0 {
                    return Err(Error::Config("rounds override must be positive".into()));
                }
                inst.rounds = r;
            }
            if let Some(b) = p.batch_size {
                if b == 0 {
                    return Err(Error::Config("batch_size override must be positive".into()));
                }
                inst.batch_size = b;
            }
            if let Some(id) = &p.id {
                inst.id = id.clone();
            }
            if out.iter().any(|o| o.id == inst.id) {
                return Err(Error::Config(format!("duplicate problem id `{}`", inst.id)));
            }
            out.push(inst);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"
version = 1
replicates = 2

[engine]
temperature = 2.0

[adapt]
quantile = 0.25

[[problems]]
generate = "lookup"
params = { seed = 1, length = 5 }

[[methods]]
kind = "p3bo"
engine = { population_size = 4 }

[[methods]]
kind = "adaptive-p3bo"
adapt = { mutation_rate = 0.1 }

[[methods]]
name = "cem-markov"
kind = "cem"
params = { model = "markov", quantile = 0.9 }
"#;

    #[test]
    fn sample_resolves() {
        let cfg = ExperimentConfig::parse(SAMPLE).unwrap();
        assert_eq!(cfg.seed_list(), vec![0, 1]);
        let methods = cfg.resolve_methods().unwrap();
        assert_eq!(methods[0].engine.population_size, 4);
        assert_eq!(methods[0].engine.temperature, 2.0);
        let a = methods[1].engine.adaptation.as_ref().unwrap();
        assert_eq!((a.config.quantile, a.config.mutation_rate), (0.25, 0.1));
        assert_eq!(methods[2].name, "cem-markov");
        assert_eq!(methods[2].engine.population_size, 1);
        let problems = cfg.load_problems(Path::new(".")).unwrap();
        assert_eq!(problems[0].length, 5);
        assert_eq!(problems[0].id, "lookup-1");
    }

    #[test]
    fn round_trips_through_toml() {
        let cfg = ExperimentConfig::parse(SAMPLE).unwrap();
        let again = ExperimentConfig::parse(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(cfg, again);
    }

    #[test]
    fn rejects_bad_configs() {
        let bad = [
            SAMPLE.replace("version = 1", "version = 2"),
            SAMPLE.replace("replicates = 2", ""),
            SAMPLE.replace("temperature = 2.0", "temprature = 2.0"),
            SAMPLE.replace("model = \"markov\"", "model = \"vae\""),
            SAMPLE.replace("kind = \"p3bo\"", "kind = \"dbas\""),
            SAMPLE.replace("name = \"cem-markov\"", "name = \"p3bo\""),
            SAMPLE.replace("temperature = 2.0", "temperature = -1.0"),
        ];
        for text in bad {
            assert!(ExperimentConfig::parse(&text).is_err(), "{text}");
        }
    }
}
