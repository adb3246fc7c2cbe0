//! Shipped test models and the closed-form oracles behind them.

use crate::config::{EnvironmentRange, RunConfig, SimulationSettings, SolverSettings};
use crate::error::ConfigError;
use crate::kernel::{DivisionKernel, KernelFamily, Profile};
use crate::model::{DivisionRateModel, GrowthModel, ModelDefinition};

/// Extinction probability of binary splitting at rate `b` with death rate
/// `d`: the minimal root of `d + b q^2 = (d + b) q`.
pub fn gw_extinction_oracle(b: f64, d: f64) -> f64 {
    assert!(b > 0.0, "division rate must be positive");
    (d / b).min(1.0)
}

/// Malthus parameter for a constant division rate: total mass balance gives
/// `d/dt N = (b - D) N`.
pub fn mass_balance_lambda_oracle(b: f64, d: f64) -> f64 {
    b - d
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OracleTag {
    GaltonWatson,
    MassBalance,
    None,
}

#[derive(Debug, Clone)]
pub struct NamedModel {
    pub id: &'static str,
    pub config: RunConfig,
    pub oracles: Vec<OracleTag>,
    /// `(quantity, value)` pairs recomputed from the oracles at load time.
    pub expectations: Vec<(String, f64)>,
}

/// Constant division rate `b` above mass zero, logistic growth, uniform kernel.
pub fn constant_rate_model(b: f64, d: f64) -> ModelDefinition {
    ModelDefinition {
        max_mass: 1.0,
        death_rate: d,
        growth: GrowthModel::LogisticMonod {
            mu_max: 1.0,
            half_saturation: 1.0,
        },
        division: DivisionRateModel::constant(b, 0.0),
        kernel: DivisionKernel::uniform(0.25),
    }
}

/// The logistic-growth, ramp-division benchmark: `M = 1`,
/// `g = 2S/(1+S) x (1-x)`, `b = 4 max(0, x - 0.2) / 0.8`, uniform kernel on
/// `[0.25, 0.75]`.
pub fn logramp_model() -> ModelDefinition {
    ModelDefinition {
        max_mass: 1.0,
        death_rate: 0.3,
        growth: GrowthModel::LogisticMonod {
            mu_max: 2.0,
            half_saturation: 1.0,
        },
        division: DivisionRateModel::ramp(4.0, 0.2, 1.0),
        kernel: DivisionKernel::uniform(0.25),
    }
}

pub fn logramp_environment() -> EnvironmentRange {
    EnvironmentRange {
        substrates: vec![0.25, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0],
        death_rates: vec![0.3, 0.6, 1.0, 1.5],
    }
}

fn config(model: ModelDefinition, environment: EnvironmentRange) -> RunConfig {
    RunConfig {
        x0: 0.5 * model.max_mass,
        model,
        environment,
        solver: SolverSettings::default(),
        simulation: SimulationSettings::default(),
        defaults_applied: Vec::new(),
    }
}

/// LOGRAMP with the sweep settings used for acceptance: near-critical
/// cells need a deep generation limit, while a population of 500 already
/// makes later extinction negligible.
pub fn logramp_config() -> RunConfig {
    let mut cfg = config(logramp_model(), logramp_environment());
    cfg.simulation.pop_cap = 500;
    cfg.simulation.gen_limit = 2000;
    cfg
}

/// Uniform kernel whose support margin shrinks as `l(x) = 0.45 (1 - x)`:
/// large mothers may produce smaller daughters than small mothers, which
/// breaks the coupling condition.
pub fn shrinking_margin_kernel() -> DivisionKernel {
    DivisionKernel {
        family: KernelFamily::Uniform {
            l: Profile::linear(0.45, -0.45),
        },
    }
}

/// All shipped models.
pub fn named_models() -> Vec<NamedModel> {
    let (b, d) = (2.0, 1.0);
    let constant = constant_rate_model(b, d);
    let mut declining = logramp_model();
    declining.division = DivisionRateModel::declining(4.0, 0.2);
    let mut asymmetric = constant_rate_model(b, d);
    asymmetric.kernel = DivisionKernel::table(vec![2.0, 0.0]);
    let mut shrinking = logramp_model();
    shrinking.kernel = shrinking_margin_kernel();
    vec![
        NamedModel {
            id: "LOGRAMP",
            config: logramp_config(),
            oracles: vec![OracleTag::None],
            expectations: Vec::new(),
        },
        NamedModel {
            id: "CONSTANT",
            config: config(constant, EnvironmentRange::single(1.0, d)),
            oracles: vec![OracleTag::GaltonWatson, OracleTag::MassBalance],
            expectations: vec![
                ("extinction".into(), gw_extinction_oracle(b, d)),
                ("lambda".into(), mass_balance_lambda_oracle(b, d)),
            ],
        },
        NamedModel {
            id: "DECLINING",
            config: config(declining, logramp_environment()),
            oracles: vec![OracleTag::None],
            expectations: Vec::new(),
        },
        NamedModel {
            id: "ASYMMETRIC",
            config: config(asymmetric, EnvironmentRange::single(1.0, d)),
            oracles: vec![OracleTag::None],
            expectations: Vec::new(),
        },
        NamedModel {
            id: "SHRINKING",
            config: config(shrinking, logramp_environment()),
            oracles: vec![OracleTag::None],
            expectations: Vec::new(),
        },
    ]
}

pub fn named_model(id: &str) -> Option<NamedModel> {
    named_models().into_iter().find(|m| m.id.eq_ignore_ascii_case(id))
}

/// Configuration of a builtin model, as loaded by `builtin:NAME`.
pub fn builtin_config(id: &str) -> Result<RunConfig, ConfigError> {
    named_model(id)
        .map(|m| m.config)
        .ok_or_else(|| ConfigError::UnknownBuiltin(id.into()))
}
