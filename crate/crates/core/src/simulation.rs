//! Event-driven simulation of the individual-based branching process and
//! Monte Carlo survival estimation.
//!
//! Each individual follows the deterministic flow until its first event. The
//! event time is drawn by inverting the cumulative hazard `integral (b + D)`
//! at an `Exp(1)` variate; the event is a death with probability
//! `D / (D + b)` at the realized mass, otherwise a division with fraction
//! drawn from the kernel by inverse transform.
//!
//! Trials are independent. Trial `k` of a run with master seed `s` draws from
//! the ChaCha8 stream `k` of key `s`, so results do not depend on scheduling.

use std::collections::VecDeque;
use std::fmt;
use std::io::Write;

use rand::distributions::{Distribution, Open01};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::flow::{GrowthFlow, HazardTable};
use crate::model::ModelDefinition;
use crate::spectral::SpectralSolution;
use crate::stats::{mean_variance, wilson_interval, Z95};

/// RNG for trial `trial` of a run seeded with `seed`.
pub fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimulationLimits {
    pub gen_limit: u32,
    pub pop_cap: usize,
    pub time_horizon: f64,
}

impl Default for SimulationLimits {
    fn default() -> Self {
        Self {
            gen_limit: 200,
            pop_cap: 10_000,
            time_horizon: f64::INFINITY,
        }
    }
}

impl fmt::Display for SimulationLimits {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "gen_limit={} pop_cap={} time_horizon={}",
            self.gen_limit, self.pop_cap, self.time_horizon
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CensorReason {
    GenerationLimit,
    PopulationCap,
    TimeHorizon,
    /// An individual whose event clock never rings.
    Immortal,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SimulationOutcome {
    /// Last individual died; `generation` is the deepest generation reached
    /// and `time` the time of the last death.
    Extinct { generation: u32, time: f64 },
    SurvivedCensored { reason: CensorReason },
}

impl SimulationOutcome {
    pub fn survived(&self) -> bool {
        matches!(self, SimulationOutcome::SurvivedCensored { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialRecord {
    pub outcome: SimulationOutcome,
    /// Individuals alive (pending) when the trial stopped.
    pub final_population: usize,
    pub deaths: u64,
    pub divisions: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Individual {
    pub mass: f64,
    pub generation: u32,
    pub birth_time: f64,
    pub id: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EventKind {
    Death,
    /// Division with daughter fraction `alpha`.
    Division { alpha: f64 },
    /// The clock never rings.
    Immortal,
}

/// First event of an individual: time since birth, mass at that time, kind.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EventDraw {
    pub time: f64,
    pub mass: f64,
    pub kind: EventKind,
}

/// One record of the optional event log, 25 bytes little-endian:
/// `time f64 | parent id u64 | tag u8 (0 death, 1 division, 2 immortal) | alpha f64`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EventRecord {
    pub time: f64,
    pub parent: u64,
    pub tag: u8,
    pub alpha: f64,
}

impl EventRecord {
    pub const SIZE: usize = 25;

    pub fn to_bytes(&self) -> [u8; Self::SIZE] {
        let mut b = [0u8; Self::SIZE];
        b[0..8].copy_from_slice(&self.time.to_le_bytes());
        b[8..16].copy_from_slice(&self.parent.to_le_bytes());
        b[16] = self.tag;
        b[17..25].copy_from_slice(&self.alpha.to_le_bytes());
        b
    }

    pub fn from_bytes(b: &[u8; Self::SIZE]) -> Self {
        let f = |r: std::ops::Range<usize>| {
            let mut a = [0u8; 8];
            a.copy_from_slice(&b[r]);
            a
        };
        Self {
            time: f64::from_le_bytes(f(0..8)),
            parent: u64::from_le_bytes(f(8..16)),
            tag: b[16],
            alpha: f64::from_le_bytes(f(17..25)),
        }
    }
}

/// Simulator for one environment `(S, D)`.
#[derive(Debug, Clone)]
pub struct Simulator<'a> {
    model: &'a ModelDefinition,
    flow: GrowthFlow<'a>,
    clock: Option<HazardTable>,
    s: f64,
    d: f64,
}

impl<'a> Simulator<'a> {
    pub fn new(model: &'a ModelDefinition, s: f64, d: f64, rtol: f64) -> Self {
        Self {
            model,
            flow: GrowthFlow::new(model, s, rtol),
            clock: HazardTable::new(model, s),
            s,
            d,
        }
    }

    /// Draws the first event of an individual of mass `mass`.
    pub fn next_event<R: Rng + ?Sized>(&self, mass: f64, rng: &mut R) -> EventDraw {
        let u: f64 = Open01.sample(rng);
        let e = -u.ln();
        let (time, m) = self
            .flow
            .linear_clock(mass, e, self.d)
            .or_else(|| self.clock.as_ref().and_then(|c| c.event_time(mass, e, self.d)))
            .unwrap_or_else(|| self.flow.event_time(mass, e, self.d));
        if time.is_infinite() {
            return EventDraw {
                time,
                mass: m,
                kind: EventKind::Immortal,
            };
        }
        let b = self.model.division_rate(self.s, m);
        let v: f64 = Open01.sample(rng);
        let kind = if v * (self.d + b) < self.d {
            EventKind::Death
        } else {
            let w: f64 = Open01.sample(rng);
            EventKind::Division {
                alpha: self.model.kernel.sample(m, w),
            }
        };
        EventDraw { time, mass: m, kind }
    }

    /// One trial started from a single individual of mass `x0`.
    pub fn simulate<R: Rng + ?Sized>(&self, x0: f64, limits: &SimulationLimits, rng: &mut R) -> TrialRecord {
        self.simulate_logged(x0, limits, rng, None)
    }

    /// As [`Self::simulate`], appending every event to `log` when given.
    pub fn simulate_logged<R: Rng + ?Sized>(
        &self,
        x0: f64,
        limits: &SimulationLimits,
        rng: &mut R,
        mut log: Option<&mut Vec<EventRecord>>,
    ) -> TrialRecord {
        let mut queue = VecDeque::new();
        queue.push_back(Individual {
            mass: x0,
            generation: 0,
            birth_time: 0.0,
            id: 0,
        });
        let mut next_id = 1u64;
        let (mut deaths, mut divisions) = (0u64, 0u64);
        let mut deepest = 0u32;
        let mut last_time = 0.0f64;
        let censored = |reason, pop, deaths, divisions| TrialRecord {
            outcome: SimulationOutcome::SurvivedCensored { reason },
            final_population: pop,
            deaths,
            divisions,
        };
        while let Some(ind) = queue.pop_front() {
            let ev = self.next_event(ind.mass, rng);
            let at = ind.birth_time + ev.time;
            if let Some(log) = log.as_deref_mut() {
                let (tag, alpha) = match ev.kind {
                    EventKind::Death => (0, f64::NAN),
                    EventKind::Division { alpha } => (1, alpha),
                    EventKind::Immortal => (2, f64::NAN),
                };
                log.push(EventRecord {
                    time: at,
                    parent: ind.id,
                    tag,
                    alpha,
                });
            }
            if at > limits.time_horizon {
                return censored(CensorReason::TimeHorizon, queue.len() + 1, deaths, divisions);
            }
            match ev.kind {
                EventKind::Immortal => {
                    return censored(CensorReason::Immortal, queue.len() + 1, deaths, divisions);
                }
                EventKind::Death => {
                    deaths += 1;
                    last_time = last_time.max(at);
                }
                EventKind::Division { alpha } => {
                    divisions += 1;
                    let generation = ind.generation + 1;
                    if generation > limits.gen_limit {
                        return censored(CensorReason::GenerationLimit, queue.len() + 2, deaths, divisions);
                    }
                    deepest = deepest.max(generation);
                    for m in [alpha * ev.mass, (1.0 - alpha) * ev.mass] {
                        queue.push_back(Individual {
                            mass: m,
                            generation,
                            birth_time: at,
                            id: next_id,
                        });
                        next_id += 1;
                    }
                    if queue.len() >= limits.pop_cap {
                        return censored(CensorReason::PopulationCap, queue.len(), deaths, divisions);
                    }
                }
            }
        }
        TrialRecord {
            outcome: SimulationOutcome::Extinct {
                generation: deepest,
                time: last_time,
            },
            final_population: 0,
            deaths,
            divisions,
        }
    }

    /// Runs `n_trials` independent trials in parallel, in trial order.
    pub fn run_trials(&self, x0: f64, limits: &SimulationLimits, n_trials: usize, seed: u64) -> Vec<TrialRecord> {
        (0..n_trials as u64)
            .into_par_iter()
            .map(|k| self.simulate(x0, limits, &mut trial_rng(seed, k)))
            .collect()
    }
}

/// Monte Carlo survival probability with a Wilson 95% interval.
#[derive(Debug, Clone, PartialEq)]
pub struct SurvivalEstimate {
    pub estimate: f64,
    pub lower: f64,
    pub upper: f64,
    pub trials: usize,
    pub survived: usize,
    /// Surviving trials by censoring reason: generation limit, population
    /// cap, time horizon, immortal.
    pub censored: [usize; 4],
    pub limits: SimulationLimits,
    pub seed: u64,
    pub events: u64,
}

impl SurvivalEstimate {
    pub fn from_records(records: &[TrialRecord], limits: SimulationLimits, seed: u64) -> Self {
        let mut censored = [0usize; 4];
        let mut events = 0;
        for r in records {
            events += r.deaths + r.divisions;
            if let SimulationOutcome::SurvivedCensored { reason } = r.outcome {
                let k = match reason {
                    CensorReason::GenerationLimit => 0,
                    CensorReason::PopulationCap => 1,
                    CensorReason::TimeHorizon => 2,
                    CensorReason::Immortal => 3,
                };
                censored[k] += 1;
            }
        }
        let survived: usize = censored.iter().sum();
        let n = records.len();
        let (lower, upper) = wilson_interval(survived, n, Z95);
        Self {
            estimate: if n == 0 { 0.0 } else { survived as f64 / n as f64 },
            lower,
            upper,
            trials: n,
            survived,
            censored,
            limits,
            seed,
            events,
        }
    }

    pub fn half_width(&self) -> f64 {
        0.5 * (self.upper - self.lower)
    }

    /// Whether `value` lies inside the interval.
    pub fn covers(&self, value: f64) -> bool {
        self.lower <= value && value <= self.upper
    }
}

/// Estimates the survival probability from a single individual of mass `x0`.
#[allow(clippy::too_many_arguments)]
pub fn estimate_survival(
    model: &ModelDefinition,
    x0: f64,
    s: f64,
    d: f64,
    n_trials: usize,
    limits: SimulationLimits,
    seed: u64,
    rtol: f64,
) -> SurvivalEstimate {
    let sim = Simulator::new(model, s, d, rtol);
    let records = sim.run_trials(x0, &limits, n_trials, seed);
    SurvivalEstimate::from_records(&records, limits, seed)
}

/// Writes the event logs of `n_trials` trials, one after the other.
pub fn write_event_log<W: Write>(
    sim: &Simulator<'_>,
    x0: f64,
    limits: &SimulationLimits,
    n_trials: usize,
    seed: u64,
    mut out: W,
) -> std::io::Result<()> {
    for k in 0..n_trials as u64 {
        let mut log = Vec::new();
        sim.simulate_logged(x0, limits, &mut trial_rng(seed, k), Some(&mut log));
        for r in &log {
            out.write_all(&r.to_bytes())?;
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub time: f64,
    /// Sample mean of `exp(-Lambda t) sum_i v(X_t^i)`.
    pub mean: f64,
    pub std_error: f64,
    /// `(mean - v(x0)) / std_error`; zero when the statistic is exact.
    pub z: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MartingaleReport {
    pub expected: f64,
    pub lambda: f64,
    pub trials: usize,
    pub checkpoints: Vec<Checkpoint>,
    /// Trials stopped early by the population guard.
    pub truncated: usize,
}

impl MartingaleReport {
    pub fn max_abs_z(&self) -> f64 {
        self.checkpoints.iter().map(|c| c.z.abs()).fold(0.0, f64::max)
    }
}

/// Guard against runaway populations in the martingale diagnostic.
const MARTINGALE_POPULATION_GUARD: usize = 1_000_000;

/// Monte Carlo check that `exp(-Lambda t) sum_i v(X_t^i)` has constant mean
/// `v(x0)`.
#[allow(clippy::too_many_arguments)]
pub fn martingale_check(
    model: &ModelDefinition,
    x0: f64,
    s: f64,
    d: f64,
    spectral: &SpectralSolution,
    times: &[f64],
    n_trials: usize,
    seed: u64,
    rtol: f64,
) -> MartingaleReport {
    let sim = Simulator::new(model, s, d, rtol);
    let t_max = times.iter().cloned().fold(0.0, f64::max);
    let per_trial: Vec<(Vec<f64>, bool)> = (0..n_trials as u64)
        .into_par_iter()
        .map(|k| {
            let mut rng = trial_rng(seed, k);
            let mut acc = vec![0.0; times.len()];
            let mut queue = VecDeque::new();
            queue.push_back((x0, 0.0f64));
            let mut processed = 0usize;
            while let Some((mass, birth)) = queue.pop_front() {
                processed += 1;
                if processed > MARTINGALE_POPULATION_GUARD {
                    return (acc, true);
                }
                let ev = sim.next_event(mass, &mut rng);
                let end = birth + ev.time;
                for (a, &t) in acc.iter_mut().zip(times) {
                    if birth <= t && t < end {
                        *a += spectral.v_at(sim.flow.flow(mass, t - birth));
                    }
                }
                if let EventKind::Division { alpha } = ev.kind {
                    if end <= t_max {
                        queue.push_back((alpha * ev.mass, end));
                        queue.push_back(((1.0 - alpha) * ev.mass, end));
                    }
                }
            }
            (acc, false)
        })
        .collect();
    let expected = spectral.v_at(x0);
    let truncated = per_trial.iter().filter(|t| t.1).count();
    let checkpoints = times
        .iter()
        .enumerate()
        .map(|(c, &t)| {
            let ys: Vec<f64> = per_trial.iter().map(|(a, _)| (-spectral.lambda * t).exp() * a[c]).collect();
            let (mean, var) = mean_variance(&ys);
            let std_error = (var / ys.len() as f64).sqrt();
            let scale = 1e-12 * expected.abs().max(1.0);
            let z = if std_error > scale {
                (mean - expected) / std_error
            } else if (mean - expected).abs() <= scale {
                0.0
            } else {
                f64::INFINITY
            };
            Checkpoint {
                time: t,
                mean,
                std_error,
                z,
            }
        })
        .collect();
    MartingaleReport {
        expected,
        lambda: spectral.lambda,
        trials: n_trials,
        checkpoints,
        truncated,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::DivisionKernel;
    use crate::model::{DivisionRateModel, GrowthModel};

    fn model(b: f64) -> ModelDefinition {
        ModelDefinition {
            max_mass: 1.0,
            death_rate: 1.0,
            growth: GrowthModel::LogisticMonod {
                mu_max: 1.0,
                half_saturation: 1.0,
            },
            division: DivisionRateModel::constant(b, 0.0),
            kernel: DivisionKernel::uniform(0.25),
        }
    }

    #[test]
    fn no_division_dies_at_generation_zero() {
        let m = model(0.0);
        let sim = Simulator::new(&m, 1.0, 1.0, 1e-10);
        let mut rng = trial_rng(7, 0);
        for _ in 0..100 {
            let r = sim.simulate(0.5, &SimulationLimits::default(), &mut rng);
            assert!(matches!(r.outcome, SimulationOutcome::Extinct { generation: 0, .. }));
            assert_eq!(r.final_population, 0);
        }
    }

    #[test]
    fn pop_cap_one_censors_at_first_division() {
        let m = model(50.0);
        let sim = Simulator::new(&m, 1.0, 0.0, 1e-10);
        let limits = SimulationLimits {
            pop_cap: 1,
            ..Default::default()
        };
        let r = sim.simulate(0.5, &limits, &mut trial_rng(1, 0));
        assert_eq!(
            r.outcome,
            SimulationOutcome::SurvivedCensored {
                reason: CensorReason::PopulationCap
            }
        );
        assert_eq!(r.divisions, 1);
    }

    #[test]
    fn division_conserves_mass() {
        let m = model(2.0);
        let sim = Simulator::new(&m, 1.0, 0.0, 1e-10);
        let mut rng = trial_rng(3, 0);
        for _ in 0..200 {
            let ev = sim.next_event(0.3, &mut rng);
            match ev.kind {
                EventKind::Division { alpha } => {
                    let (a, b) = (alpha * ev.mass, (1.0 - alpha) * ev.mass);
                    assert!(((a + b) - ev.mass).abs() <= 1e-15);
                    assert!(a > 0.0 && b > 0.0 && a < ev.mass && b < ev.mass);
                }
                _ => panic!("no deaths without a death rate"),
            }
        }
    }

    #[test]
    fn same_seed_same_records() {
        let m = model(2.0);
        let sim = Simulator::new(&m, 1.0, 1.0, 1e-10);
        let limits = SimulationLimits {
            pop_cap: 200,
            ..Default::default()
        };
        let a = sim.run_trials(0.5, &limits, 64, 11);
        let b = sim.run_trials(0.5, &limits, 64, 11);
        assert_eq!(a, b);
    }

    #[test]
    fn event_record_round_trip() {
        let r = EventRecord {
            time: 1.5,
            parent: 42,
            tag: 1,
            alpha: 0.3,
        };
        assert_eq!(EventRecord::from_bytes(&r.to_bytes()), r);
    }
}
