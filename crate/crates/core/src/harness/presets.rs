//! Ready-to-run ablation configs. Each preset expands to several configs,
//! one per variant, with distinct method names so their result
//! directories can be summarized together.

use std::path::PathBuf;

use super::config::{ExperimentConfig, MethodConfig, MethodKind, ProblemConfig, CONFIG_VERSION};
use crate::adaptive::PopulationSpec;
use crate::error::{Error, Result};
use crate::solvers::SolverClass;

pub const PRESETS: [&str; 6] = ["leave-one-out", "sharing", "bad-init", "temperature", "population-size", "batch-size"];

pub const TEMPERATURES: [f64; 4] = [0.1, 1.0, 10.0, 100.0];
pub const POPULATION_SIZES: [usize; 4] = [1, 5, 10, 15];
pub const BATCH_SIZES: [usize; 4] = [1, 10, 100, 500];

#[derive(Clone, Debug)]
pub struct PresetOptions {
    pub problem: ProblemConfig,
    /// Class of the bad-init population.
    pub weak_class: SolverClass,
    pub replicates: u64,
}

impl Default for PresetOptions {
    fn default() -> Self {
        let mut params = toml::Table::new();
        params.insert("seed".into(), toml::Value::Integer(0));
        Self {
            problem: ProblemConfig {
                generate: Some("ising".into()),
                params,
                ..Default::default()
            },
            weak_class: SolverClass::Smw,
            replicates: 10,
        }
    }
}

/// A named variant of a preset.
#[derive(Clone, Debug)]
pub struct Variant {
    pub name: String,
    pub config: ExperimentConfig,
}

fn base(preset: &str, variant: &str, opts: &PresetOptions, methods: Vec<MethodConfig>) -> Variant {
    Variant {
        name: variant.to_string(),
        config: ExperimentConfig {
            version: CONFIG_VERSION,
            output_dir: PathBuf::from("results").join(preset).join(variant),
            seeds: Vec::new(),
            replicates: Some(opts.replicates),
            engine: toml::Table::new(),
            adapt: toml::Table::new(),
            priors: None,
            problems: vec![opts.problem.clone()],
            methods,
        },
    }
}

fn p3bo_with(name: String, key: &str, value: toml::Value) -> MethodConfig {
    let mut m = MethodConfig::new(MethodKind::P3bo).named(name);
    m.engine.insert(key.into(), value);
    m
}

fn float_label(x: f64) -> String {
    format!("{x}")
}

/// Expands preset `name`.
pub fn preset(name: &str, opts: &PresetOptions) -> Result<Vec<Variant>> {
    let out = match name {
        "leave-one-out" => {
            let mut v = vec![base(name, "full", opts, vec![MethodConfig::new(MethodKind::P3bo).named("p3bo-full")])];
            for drop in SolverClass::ALL {
                let mut m = MethodConfig::new(MethodKind::P3bo).named(format!("p3bo-no-{drop}"));
                m.population = Some(PopulationSpec {
                    classes: SolverClass::ALL.into_iter().filter(|&c| c != drop).collect(),
                    ..Default::default()
                });
                v.push(base(name, &format!("no-{drop}"), opts, vec![m]));
            }
            v
        }
        "sharing" => [("on", true), ("off", false)]
            .into_iter()
            .map(|(label, on)| {
                base(name, label, opts, vec![p3bo_with(format!("p3bo-sharing-{label}"), "share_data", on.into())])
            })
            .collect(),
        "bad-init" => {
            let pop = PopulationSpec::single_class(opts.weak_class, 15);
            [(MethodKind::P3bo, "p3bo"), (MethodKind::AdaptiveP3bo, "adaptive-p3bo")]
                .into_iter()
                .map(|(kind, label)| {
                    let mut m = MethodConfig::new(kind).named(format!("{label}-all-{}", opts.weak_class));
                    m.population = Some(pop.clone());
                    base(name, label, opts, vec![m])
                })
                .collect()
        }
        "temperature" => TEMPERATURES
            .iter()
            .map(|&t| {
                let label = format!("tau-{}", float_label(t));
                base(name, &label, opts, vec![p3bo_with(format!("p3bo-{label}"), "temperature", t.into())])
            })
            .collect(),
        "population-size" => POPULATION_SIZES
            .iter()
            .map(|&n| {
                let label = format!("n-{n}");
                let mut m = p3bo_with(format!("p3bo-{label}"), "population_size", (n as i64).into());
                if n < SolverClass::ALL.len() {
                    // too small for one member per class
                    m.population = Some(PopulationSpec {
                        min_per_class: 0,
                        ..Default::default()
                    });
                }
                base(name, &label, opts, vec![m])
            })
            .collect(),
        "batch-size" => BATCH_SIZES
            .iter()
            .map(|&b| {
                let label = format!("b-{b}");
                let mut v = base(name, &label, opts, vec![MethodConfig::new(MethodKind::P3bo).named(format!("p3bo-{label}"))]);
                v.config.problems[0].batch_size = Some(b);
                v
            })
            .collect(),
        other => {
            return Err(Error::invalid(format!("unknown preset `{other}` (expected one of {})", PRESETS.join(", "))));
        }
    };
    for v in &out {
        v.config.validate()?;
    }
    Ok(out)
}
