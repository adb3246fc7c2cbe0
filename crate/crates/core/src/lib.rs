//! Survival and growth of cell populations under growth and fragmentation:
//! extinction probabilities, principal eigenvalues and Monte Carlo
//! branching simulation over a grid of substrate and death-rate values.

pub mod assumptions;
pub mod benchmarks;
pub mod config;
pub mod error;
pub mod experiments;
pub mod extinction;
pub mod flow;
pub mod grid;
pub mod kernel;
pub mod model;
pub mod ode;
pub mod quadrature;
pub mod simulation;
pub mod spectral;
pub mod stats;

pub use assumptions::{validate_assumptions, AssumptionReport, Check};
pub use config::{load_config, parse_config, write_config, EnvironmentRange, RunConfig, SimulationSettings, SolverSettings};
pub use error::{ConfigError, ExperimentError, FlowError, KernelError, SolverError};
pub use experiments::{check_consistency, check_monotonicity, run_sweep, SweepResult, SweepRow, Verdict};
pub use extinction::{solve_extinction, ExtinctionProfile, ExtinctionSolver};
pub use flow::GrowthFlow;
pub use grid::MassGrid;
pub use kernel::DivisionKernel;
pub use model::{DivisionRateModel, GrowthModel, ModelDefinition};
pub use simulation::{estimate_survival, SimulationLimits, Simulator, SurvivalEstimate};
pub use spectral::{principal_eigenpair, SpectralSolution};
