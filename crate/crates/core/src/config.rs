//! INI run configuration: parsing, validation, defaults and serialization.
//!
//! Sections are `[model]`, `[growth]`, `[division]`, `[kernel]`,
//! `[environment]`, `[solver]` and `[simulation]`. Lists are comma separated.
//! Unknown sections or keys are rejected. A path of the form
//! `builtin:NAME` loads one of the shipped benchmark models instead of a
//! file. See the README for the full key reference.

use std::fmt::Write as _;
use std::path::Path;

use ini::Ini;
use sha2::{Digest, Sha256};

use crate::error::ConfigError;
use crate::kernel::{DivisionKernel, KernelFamily, Profile};
use crate::model::{DivisionFamily, DivisionRateModel, GrowthModel, ModelDefinition, Table};

/// Substrate levels and death rates spanned by a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvironmentRange {
    pub substrates: Vec<f64>,
    pub death_rates: Vec<f64>,
}

impl EnvironmentRange {
    pub fn single(s: f64, d: f64) -> Self {
        Self {
            substrates: vec![s],
            death_rates: vec![d],
        }
    }

    /// Cells in row-major order: substrate outer, death rate inner.
    pub fn cells(&self) -> Vec<(f64, f64)> {
        self.substrates
            .iter()
            .flat_map(|&s| self.death_rates.iter().map(move |&d| (s, d)))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverSettings {
    /// Number of mass cells.
    pub grid: usize,
    /// Sup-norm stopping threshold of the generation recursion.
    pub tol: f64,
    pub max_generations: usize,
    pub eigen_tol: f64,
    pub max_iterations: usize,
    pub ode_rtol: f64,
    /// Points per axis of the assumption probe grids.
    pub probe: usize,
    /// Also iterate the recursion from `p = 1` as a diagnostic.
    pub from_above: bool,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            grid: 512,
            tol: 1e-8,
            max_generations: 10_000,
            eigen_tol: 1e-8,
            max_iterations: 2_000_000,
            ode_rtol: 1e-10,
            probe: 64,
            from_above: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationSettings {
    pub trials: usize,
    pub seed: u64,
    pub pop_cap: usize,
    pub gen_limit: u32,
    pub time_horizon: f64,
    pub epsilon_lambda: f64,
    pub epsilon_p: f64,
    pub martingale_times: Vec<f64>,
}

impl Default for SimulationSettings {
    fn default() -> Self {
        Self {
            trials: 10_000,
            seed: 1,
            pop_cap: 10_000,
            gen_limit: 200,
            time_horizon: f64::INFINITY,
            epsilon_lambda: 1e-4,
            epsilon_p: 1e-4,
            martingale_times: vec![0.5, 1.0, 2.0],
        }
    }
}

/// Fully populated run configuration.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub model: ModelDefinition,
    pub environment: EnvironmentRange,
    pub solver: SolverSettings,
    pub simulation: SimulationSettings,
    /// Initial mass used for survival and fitness evaluation.
    pub x0: f64,
    /// Human-readable record of every default that was filled in.
    pub defaults_applied: Vec<String>,
}

impl RunConfig {
    /// Compares all settings, ignoring the record of applied defaults.
    pub fn same_settings(&self, other: &RunConfig) -> bool {
        self.model == other.model
            && self.environment == other.environment
            && self.solver == other.solver
            && self.simulation == other.simulation
            && self.x0 == other.x0
    }

    /// SHA-256 of the canonical serialization.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(write_config(self).as_bytes()))
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        validate(self)
    }
}

/// Loads a configuration file, or a builtin model for `builtin:NAME`.
pub fn load_config(path: &Path) -> Result<RunConfig, ConfigError> {
    if let Some(name) = path.to_str().and_then(|p| p.strip_prefix("builtin:")) {
        return crate::benchmarks::builtin_config(name);
    }
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config(&text)
}

const SECTIONS: [&str; 7] = [
    "model",
    "growth",
    "division",
    "kernel",
    "environment",
    "solver",
    "simulation",
];

struct Reader<'a> {
    ini: &'a Ini,
    used: Vec<(String, String)>,
    defaults: Vec<String>,
}

impl<'a> Reader<'a> {
    fn raw(&mut self, section: &str, key: &str) -> Option<&'a str> {
        let v = self.ini.section(Some(section)).and_then(|p| p.get(key));
        if v.is_some() {
            self.used.push((section.to_string(), key.to_string()));
        }
        v.map(str::trim)
    }

    fn note_default(&mut self, section: &str, key: &str, value: &str) {
        let line = format!("[{section}] {key} = {value}");
        log::info!("default applied: {line}");
        self.defaults.push(line);
    }

    fn number(&mut self, section: &str, key: &str) -> Result<Option<f64>, ConfigError> {
        match self.raw(section, key) {
            None => Ok(None),
            Some(v) => parse_f64(v).map(Some).ok_or_else(|| bad(section, key, v)),
        }
    }

    fn required(&mut self, section: &str, key: &str) -> Result<f64, ConfigError> {
        self.number(section, key)?.ok_or_else(|| ConfigError::MissingKey {
            section: section.into(),
            key: key.into(),
        })
    }

    fn or(&mut self, section: &str, key: &str, default: f64) -> Result<f64, ConfigError> {
        match self.number(section, key)? {
            Some(v) => Ok(v),
            None => {
                self.note_default(section, key, &default.to_string());
                Ok(default)
            }
        }
    }

    fn integer<T>(&mut self, section: &str, key: &str, default: T) -> Result<T, ConfigError>
    where
        T: std::str::FromStr + std::fmt::Display,
    {
        match self.raw(section, key) {
            Some(v) => v.parse().map_err(|_| bad(section, key, v)),
            None => {
                self.note_default(section, key, &default.to_string());
                Ok(default)
            }
        }
    }

    fn list(&mut self, section: &str, key: &str) -> Result<Option<Vec<f64>>, ConfigError> {
        match self.raw(section, key) {
            None => Ok(None),
            Some(v) => v
                .split(',')
                .map(|t| parse_f64(t.trim()).ok_or_else(|| bad(section, key, v)))
                .collect::<Result<Vec<_>, _>>()
                .map(Some),
        }
    }

    fn required_list(&mut self, section: &str, key: &str) -> Result<Vec<f64>, ConfigError> {
        self.list(section, key)?.ok_or_else(|| ConfigError::MissingKey {
            section: section.into(),
            key: key.into(),
        })
    }

    fn family(&mut self, section: &str, default: &str) -> String {
        match self.raw(section, "family") {
            Some(v) => v.to_string(),
            None => {
                self.note_default(section, "family", default);
                default.to_string()
            }
        }
    }
}

fn parse_f64(v: &str) -> Option<f64> {
    v.parse::<f64>().ok().filter(|x| !x.is_nan())
}

fn bad(section: &str, key: &str, value: &str) -> ConfigError {
    ConfigError::BadNumber {
        section: section.into(),
        key: key.into(),
        value: value.into(),
    }
}

/// Parses and validates configuration text.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let ini = Ini::load_from_str(text).map_err(|e| ConfigError::Syntax(e.to_string()))?;
    for (name, props) in ini.iter() {
        match name {
            None => {
                if let Some((k, _)) = props.iter().next() {
                    return Err(ConfigError::Syntax(format!("key '{k}' outside any section")));
                }
            }
            Some(s) if !SECTIONS.contains(&s) => return Err(ConfigError::UnknownSection(s.into())),
            _ => {}
        }
    }
    let mut r = Reader {
        ini: &ini,
        used: Vec::new(),
        defaults: Vec::new(),
    };

    let max_mass = r.required("model", "max_mass")?;
    let death_rate = r.required("model", "death_rate")?;
    let x0 = r.or("model", "x0", 0.5 * max_mass)?;

    let growth = match r.family("growth", "logistic_monod").as_str() {
        "logistic_monod" => GrowthModel::LogisticMonod {
            mu_max: r.required("growth", "mu_max")?,
            half_saturation: r.required("growth", "half_saturation")?,
        },
        "separable" => GrowthModel::Separable {
            mu: Table::new(
                r.required_list("growth", "mu_substrates")?,
                r.required_list("growth", "mu_values")?,
            ),
            shape: Table::new(
                r.required_list("growth", "shape_masses")?,
                r.required_list("growth", "shape_values")?,
            ),
        },
        other => {
            return Err(ConfigError::UnknownFamily {
                what: "growth",
                tag: other.into(),
            })
        }
    };

    let division_tag = r.family("division", "constant");
    let rate = r.required("division", "rate")?;
    let threshold = r.or("division", "threshold", 0.0)?;
    let family = match division_tag.as_str() {
        "constant" => DivisionFamily::Constant,
        "ramp" => DivisionFamily::Ramp {
            exponent: r.or("division", "exponent", 1.0)?,
        },
        "declining" => DivisionFamily::Declining,
        other => {
            return Err(ConfigError::UnknownFamily {
                what: "division",
                tag: other.into(),
            })
        }
    };
    let division = DivisionRateModel {
        family,
        rate,
        threshold,
        s_half_saturation: r.number("division", "s_half_saturation")?,
        bound: r.number("division", "bound")?,
    };

    let kernel = match r.family("kernel", "uniform").as_str() {
        "uniform" => DivisionKernel {
            family: KernelFamily::Uniform {
                l: Profile::linear(r.required("kernel", "l")?, r.or("kernel", "l_slope", 0.0)?),
            },
        },
        "beta_ramp" => DivisionKernel {
            family: KernelFamily::BetaRamp {
                l: Profile::linear(r.required("kernel", "l")?, r.or("kernel", "l_slope", 0.0)?),
                beta: Profile::linear(
                    r.required("kernel", "beta")?,
                    r.or("kernel", "beta_slope", 0.0)?,
                ),
            },
        },
        "equal_mitosis" => DivisionKernel::equal_mitosis(),
        "table" => DivisionKernel::table(r.required_list("kernel", "density")?),
        other => {
            return Err(ConfigError::UnknownFamily {
                what: "kernel",
                tag: other.into(),
            })
        }
    };

    let substrates = match r.list("environment", "substrates")? {
        Some(v) => v,
        None => {
            r.note_default("environment", "substrates", "1");
            vec![1.0]
        }
    };
    let death_rates = match r.list("environment", "death_rates")? {
        Some(v) => v,
        None => {
            r.note_default("environment", "death_rates", &death_rate.to_string());
            vec![death_rate]
        }
    };

    let sd = SolverSettings::default();
    let solver = SolverSettings {
        grid: r.integer("solver", "grid", sd.grid)?,
        tol: r.or("solver", "tol", sd.tol)?,
        max_generations: r.integer("solver", "max_generations", sd.max_generations)?,
        eigen_tol: r.or("solver", "eigen_tol", sd.eigen_tol)?,
        max_iterations: r.integer("solver", "max_iterations", sd.max_iterations)?,
        ode_rtol: r.or("solver", "ode_rtol", sd.ode_rtol)?,
        probe: r.integer("solver", "probe", sd.probe)?,
        from_above: r.integer("solver", "from_above", sd.from_above)?,
    };

    let md = SimulationSettings::default();
    let simulation = SimulationSettings {
        trials: r.integer("simulation", "trials", md.trials)?,
        seed: r.integer("simulation", "seed", md.seed)?,
        pop_cap: r.integer("simulation", "pop_cap", md.pop_cap)?,
        gen_limit: r.integer("simulation", "gen_limit", md.gen_limit)?,
        time_horizon: r.or("simulation", "time_horizon", md.time_horizon)?,
        epsilon_lambda: r.or("simulation", "epsilon_lambda", md.epsilon_lambda)?,
        epsilon_p: r.or("simulation", "epsilon_p", md.epsilon_p)?,
        martingale_times: match r.list("simulation", "martingale_times")? {
            Some(v) => v,
            None => {
                r.note_default("simulation", "martingale_times", "0.5,1,2");
                md.martingale_times.clone()
            }
        },
    };

    for (name, props) in ini.iter() {
        let Some(section) = name else { continue };
        for (key, _) in props.iter() {
            if !r.used.iter().any(|(s, k)| s == section && k == key) {
                return Err(ConfigError::UnknownKey {
                    section: section.into(),
                    key: key.into(),
                });
            }
        }
    }

    let cfg = RunConfig {
        model: ModelDefinition {
            max_mass,
            death_rate,
            growth,
            division,
            kernel,
        },
        environment: EnvironmentRange {
            substrates,
            death_rates,
        },
        solver,
        simulation,
        x0,
        defaults_applied: r.defaults,
    };
    validate(&cfg)?;
    Ok(cfg)
}

fn range(cond: bool, msg: impl Into<String>) -> Result<(), ConfigError> {
    if cond {
        Ok(())
    } else {
        Err(ConfigError::OutOfRange(msg.into()))
    }
}

fn increasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[0] < w[1])
}

fn validate(cfg: &RunConfig) -> Result<(), ConfigError> {
    let m = &cfg.model;
    let big_m = m.max_mass;
    range(big_m > 0.0 && big_m.is_finite(), "M must be positive and finite")?;
    range(m.death_rate >= 0.0 && m.death_rate.is_finite(), "D must be non-negative")?;
    range(cfg.x0 > 0.0 && cfg.x0 < big_m, "x0 must lie in (0,M)")?;
    match &m.growth {
        GrowthModel::LogisticMonod {
            mu_max,
            half_saturation,
        } => {
            range(*mu_max > 0.0, "mu_max must be positive")?;
            range(*half_saturation >= 0.0, "half_saturation must be non-negative")?;
        }
        GrowthModel::Separable { mu, shape } => {
            for (t, what) in [(mu, "mu"), (shape, "shape")] {
                range(
                    t.xs.len() == t.ys.len() && !t.xs.is_empty(),
                    format!("{what} table abscissae and values must have equal non-zero length"),
                )?;
                range(increasing(&t.xs), format!("{what} table abscissae must be strictly increasing"))?;
            }
        }
    }
    let d = &m.division;
    range(d.rate >= 0.0 && d.rate.is_finite(), "division rate must be non-negative")?;
    range(d.threshold >= 0.0 && d.threshold < big_m, "m_div must lie in [0,M)")?;
    if let DivisionFamily::Ramp { exponent } = d.family {
        range(exponent > 0.0, "ramp exponent must be positive")?;
    }
    if let Some(k) = d.s_half_saturation {
        range(k >= 0.0, "s_half_saturation must be non-negative")?;
    }
    if let Some(b) = d.bound {
        range(b > 0.0, "division bound must be positive")?;
    }
    match &m.kernel.family {
        KernelFamily::Uniform { l } | KernelFamily::BetaRamp { l, .. } => {
            for x in [0.0, big_m] {
                let v = l.at(x);
                range((0.0..0.5).contains(&v), format!("l(x) must lie in [0,1/2), got {v} at x = {x}"))?;
            }
            if let KernelFamily::BetaRamp { beta, .. } = &m.kernel.family {
                for x in [0.0, big_m] {
                    range(beta.at(x) >= 0.0, "beta(x) must be non-negative")?;
                }
            }
        }
        KernelFamily::Table { density } => {
            range(!density.is_empty(), "kernel density table is empty")?;
            range(density.iter().all(|&v| v >= 0.0), "kernel density must be non-negative")?;
            range(density.iter().sum::<f64>() > 0.0, "kernel density must have positive mass")?;
        }
        KernelFamily::EqualMitosis => {}
    }
    let env = &cfg.environment;
    range(!env.substrates.is_empty(), "substrate list is empty")?;
    range(!env.death_rates.is_empty(), "death rate list is empty")?;
    range(env.substrates.iter().all(|&s| s > 0.0), "substrates must be positive")?;
    range(env.death_rates.iter().all(|&d| d >= 0.0), "death rates must be non-negative")?;
    range(increasing(&env.substrates), "substrates must be strictly increasing")?;
    range(increasing(&env.death_rates), "death rates must be strictly increasing")?;
    let s = &cfg.solver;
    range(s.grid >= 4, "grid must have at least 4 cells")?;
    range(s.tol > 0.0 && s.eigen_tol > 0.0 && s.ode_rtol > 0.0, "tolerances must be positive")?;
    range(s.max_generations >= 1 && s.max_iterations >= 1, "iteration limits must be positive")?;
    range(s.probe >= 16, "probe grids need at least 16 points")?;
    let sim = &cfg.simulation;
    range(sim.trials >= 1, "trials must be positive")?;
    range(sim.pop_cap >= 1, "pop_cap must be positive")?;
    range(sim.time_horizon > 0.0, "time_horizon must be positive")?;
    range(sim.epsilon_lambda >= 0.0 && sim.epsilon_p >= 0.0, "epsilons must be non-negative")?;
    range(sim.martingale_times.iter().all(|&t| t >= 0.0), "martingale times must be non-negative")?;
    Ok(())
}

fn join(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

/// Canonical serialization; every field is written explicitly so that
/// `parse_config(write_config(c))` reproduces `c`.
pub fn write_config(cfg: &RunConfig) -> String {
    let m = &cfg.model;
    let mut out = String::new();
    let _ = writeln!(out, "[model]");
    let _ = writeln!(out, "max_mass = {}", m.max_mass);
    let _ = writeln!(out, "death_rate = {}", m.death_rate);
    let _ = writeln!(out, "x0 = {}", cfg.x0);

    let _ = writeln!(out, "\n[growth]\nfamily = {}", m.growth.tag());
    match &m.growth {
        GrowthModel::LogisticMonod {
            mu_max,
            half_saturation,
        } => {
            let _ = writeln!(out, "mu_max = {mu_max}\nhalf_saturation = {half_saturation}");
        }
        GrowthModel::Separable { mu, shape } => {
            let _ = writeln!(out, "mu_substrates = {}", join(&mu.xs));
            let _ = writeln!(out, "mu_values = {}", join(&mu.ys));
            let _ = writeln!(out, "shape_masses = {}", join(&shape.xs));
            let _ = writeln!(out, "shape_values = {}", join(&shape.ys));
        }
    }

    let d = &m.division;
    let _ = writeln!(out, "\n[division]\nfamily = {}", d.tag());
    let _ = writeln!(out, "rate = {}\nthreshold = {}", d.rate, d.threshold);
    if let DivisionFamily::Ramp { exponent } = d.family {
        let _ = writeln!(out, "exponent = {exponent}");
    }
    if let Some(k) = d.s_half_saturation {
        let _ = writeln!(out, "s_half_saturation = {k}");
    }
    if let Some(b) = d.bound {
        let _ = writeln!(out, "bound = {b}");
    }

    let _ = writeln!(out, "\n[kernel]\nfamily = {}", m.kernel.tag());
    match &m.kernel.family {
        KernelFamily::Uniform { l } => {
            let _ = writeln!(out, "l = {}\nl_slope = {}", l.intercept, l.slope);
        }
        KernelFamily::BetaRamp { l, beta } => {
            let _ = writeln!(out, "l = {}\nl_slope = {}", l.intercept, l.slope);
            let _ = writeln!(out, "beta = {}\nbeta_slope = {}", beta.intercept, beta.slope);
        }
        KernelFamily::Table { density } => {
            let _ = writeln!(out, "density = {}", join(density));
        }
        KernelFamily::EqualMitosis => {}
    }

    let env = &cfg.environment;
    let _ = writeln!(out, "\n[environment]");
    let _ = writeln!(out, "substrates = {}", join(&env.substrates));
    let _ = writeln!(out, "death_rates = {}", join(&env.death_rates));

    let s = &cfg.solver;
    let _ = writeln!(out, "\n[solver]");
    let _ = writeln!(out, "grid = {}\ntol = {}", s.grid, s.tol);
    let _ = writeln!(out, "max_generations = {}", s.max_generations);
    let _ = writeln!(out, "eigen_tol = {}\nmax_iterations = {}", s.eigen_tol, s.max_iterations);
    let _ = writeln!(out, "ode_rtol = {}\nprobe = {}", s.ode_rtol, s.probe);
    let _ = writeln!(out, "from_above = {}", s.from_above);

    let sim = &cfg.simulation;
    let _ = writeln!(out, "\n[simulation]");
    let _ = writeln!(out, "trials = {}\nseed = {}", sim.trials, sim.seed);
    let _ = writeln!(out, "pop_cap = {}\ngen_limit = {}", sim.pop_cap, sim.gen_limit);
    let _ = writeln!(out, "time_horizon = {}", sim.time_horizon);
    let _ = writeln!(out, "epsilon_lambda = {}\nepsilon_p = {}", sim.epsilon_lambda, sim.epsilon_p);
    let _ = writeln!(out, "martingale_times = {}", join(&sim.martingale_times));
    out
}
