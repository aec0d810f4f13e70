//! Scenario generator: Poisson occurrences per day, then one observation
//! date per event from a time-changed delay.
//!
//! Every occurrence date draws from its own ChaCha8 stream `(seed, t)`, so
//! dates can be generated in any order or in parallel with identical output.
//! The two-state occurrence chain uses its own stream.

use alloc::vec;
use alloc::vec::Vec;

use chrono::{Datelike, Months, NaiveDate, Weekday};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::calendar::{Calendar, CovariateSpec, DateIndex, DayInfo, Effect, HolidayClass};
use crate::counts::{EventDataset, EventRecord};
use crate::timechange::{ExposureModel, TimeChangedDistribution};

const MARKOV_STREAM: u64 = u64::MAX;
/// Days of exposure precomputed past the last occurrence date.
const LOOKAHEAD: i32 = 5000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioId {
    Baseline,
    Volatile,
    LowFrequency,
    OnlineReporting,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimulateError {
    #[error("occurrence intensity must be finite and non-negative, got {0}")]
    BadIntensity(f64),
    #[error("transition probability must lie in [0, 1], got {0}")]
    BadTransition(f64),
    #[error("exposure multiplier must lie in (0, 1], got {0}")]
    BadMultiplier(f64),
    #[error("first occurrence date {first} is after the last {last}")]
    EmptyRange { first: NaiveDate, last: NaiveDate },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OccurrenceProcess {
    Constant {
        lambda: f64,
    },
    /// Two-state chain starting in the good state. Each row of the
    /// transition matrix is `(1 - p, p)`, so rows sum to one by construction.
    Markov {
        lambda_good: f64,
        lambda_bad: f64,
        good_to_bad: f64,
        bad_to_good: f64,
    },
}

impl OccurrenceProcess {
    fn validate(&self) -> Result<(), SimulateError> {
        let lambdas: &[f64] = match self {
            OccurrenceProcess::Constant { lambda } => &[*lambda],
            OccurrenceProcess::Markov {
                lambda_good,
                lambda_bad,
                good_to_bad,
                bad_to_good,
            } => {
                for p in [*good_to_bad, *bad_to_good] {
                    if !(0.0..=1.0).contains(&p) {
                        return Err(SimulateError::BadTransition(p));
                    }
                }
                return [*lambda_good, *lambda_bad]
                    .iter()
                    .try_for_each(|&l| check_lambda(l));
            }
        };
        lambdas.iter().try_for_each(|&l| check_lambda(l))
    }

    /// Long-run average intensity.
    pub fn stationary_mean(&self) -> f64 {
        match *self {
            OccurrenceProcess::Constant { lambda } => lambda,
            OccurrenceProcess::Markov {
                lambda_good,
                lambda_bad,
                good_to_bad,
                bad_to_good,
            } => {
                let pi_good = bad_to_good / (good_to_bad + bad_to_good);
                pi_good * lambda_good + (1.0 - pi_good) * lambda_bad
            }
        }
    }
}

fn check_lambda(l: f64) -> Result<(), SimulateError> {
    if l.is_finite() && l >= 0.0 {
        Ok(())
    } else {
        Err(SimulateError::BadIntensity(l))
    }
}

/// `α_s = base · sat^{[Sat] + [unofficial]} · sun^{[Sun] + [national]}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Multipliers {
    pub base: f64,
    /// Saturdays and unofficial holidays.
    pub saturday: f64,
    /// Sundays and national holidays.
    pub sunday: f64,
}

impl Multipliers {
    pub const BASELINE: Multipliers = Multipliers {
        base: 0.10,
        saturday: 0.20,
        sunday: 0.01,
    };
    pub const ONLINE: Multipliers = Multipliers {
        base: 0.10,
        saturday: 0.50,
        sunday: 0.20,
    };

    fn alpha(&self, day: &DayInfo) -> f64 {
        let mut a = self.base;
        match day.weekday {
            Weekday::Sat => a *= self.saturday,
            Weekday::Sun => a *= self.sunday,
            _ => {}
        }
        match day.holiday {
            HolidayClass::Unofficial => a *= self.saturday,
            HolidayClass::National => a *= self.sunday,
            HolidayClass::None => {}
        }
        a
    }
}

/// Observation exposures that depend on the observation date only, with an
/// optional switch to new multipliers from a breakpoint onwards.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExposureFormula {
    pub before: Multipliers,
    #[serde(default)]
    pub breakpoint: Option<Breakpoint>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Breakpoint {
    pub date: NaiveDate,
    pub after: Multipliers,
}

impl ExposureFormula {
    pub fn alpha(&self, day: &DayInfo) -> f64 {
        match self.breakpoint {
            Some(b) if day.date >= b.date => b.after.alpha(day),
            _ => self.before.alpha(day),
        }
    }

    fn validate(&self) -> Result<(), SimulateError> {
        let mut all = vec![self.before];
        all.extend(self.breakpoint.map(|b| b.after));
        for m in all {
            for x in [m.saturday, m.sunday] {
                if !(x > 0.0 && x <= 1.0) {
                    return Err(SimulateError::BadMultiplier(x));
                }
            }
            if !(m.base > 0.0 && m.base.is_finite()) {
                return Err(SimulateError::BadMultiplier(m.base));
            }
        }
        Ok(())
    }

    /// The same exposures as a regression: intercept, observation weekday
    /// (Monday reference) and holiday class, split at the breakpoint.
    pub fn exact_spec(&self) -> CovariateSpec {
        let inner = vec![
            Effect::ReportingDow {
                reference: Weekday::Mon,
            },
            Effect::ReportingHoliday,
        ];
        let effects = match self.breakpoint {
            None => {
                let mut e = vec![Effect::Intercept];
                e.extend(inner);
                e
            }
            Some(b) => vec![
                Effect::Intercept,
                Effect::BreakpointSplit {
                    breakpoint: b.date,
                    effects: inner,
                },
            ],
        };
        CovariateSpec::new(effects).expect("fixed scenario spec is valid")
    }

    /// Coefficients of [`exact_spec`](Self::exact_spec) reproducing the
    /// formula. Requires a common `base` on both sides of the breakpoint.
    pub fn truth_gamma(&self) -> Vec<f64> {
        let spec = self.exact_spec();
        spec.column_names()
            .iter()
            .map(|name| {
                let (m, col) = match (name.strip_prefix("pre:"), name.strip_prefix("post:")) {
                    (Some(c), _) => (self.before, c),
                    (_, Some(c)) => (self.breakpoint.map_or(self.before, |b| b.after), c),
                    _ => (self.before, name.as_str()),
                };
                match col {
                    "intercept" => libm::log(m.base),
                    "dow[Sat]" | "holiday[unofficial]" => libm::log(m.saturday),
                    "dow[Sun]" | "holiday[national]" => libm::log(m.sunday),
                    _ => 0.0,
                }
            })
            .collect()
    }

    pub fn truth_model(&self) -> ExposureModel {
        ExposureModel::new(self.exact_spec(), self.truth_gamma()).expect("lengths agree")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub id: ScenarioId,
    pub first_occurrence: NaiveDate,
    pub last_occurrence: NaiveDate,
    pub occurrence: OccurrenceProcess,
    pub delay: TimeChangedDistribution,
    pub exposure: ExposureFormula,
    pub seed: u64,
}

fn ymd(y: i32, m: u32, d: u32) -> NaiveDate {
    NaiveDate::from_ymd_opt(y, m, d).expect("valid date")
}

pub fn online_breakpoint() -> NaiveDate {
    ymd(2003, 1, 1)
}

impl ScenarioConfig {
    /// Occurrence intensity `scale` per day (volatile: `scale` and
    /// `4 · scale`; low frequency: 2 regardless of `scale`).
    fn with_scale(
        id: ScenarioId,
        first: NaiveDate,
        last: NaiveDate,
        scale: f64,
        seed: u64,
    ) -> Self {
        let occurrence = match id {
            ScenarioId::Baseline | ScenarioId::OnlineReporting => {
                OccurrenceProcess::Constant { lambda: scale }
            }
            ScenarioId::Volatile => OccurrenceProcess::Markov {
                lambda_good: scale,
                lambda_bad: 4.0 * scale,
                good_to_bad: 0.1,
                bad_to_good: 0.6,
            },
            ScenarioId::LowFrequency => OccurrenceProcess::Constant { lambda: 2.0 },
        };
        let breakpoint = (id == ScenarioId::OnlineReporting).then(|| Breakpoint {
            date: online_breakpoint(),
            after: Multipliers::ONLINE,
        });
        ScenarioConfig {
            id,
            first_occurrence: first,
            last_occurrence: last,
            occurrence,
            delay: TimeChangedDistribution::LogNormal { sigma: 1.0 },
            exposure: ExposureFormula {
                before: Multipliers::BASELINE,
                breakpoint,
            },
            seed,
        }
    }

    /// Full scale: 100 events a day from 1998-01-01 through `last`.
    pub fn full_scale(id: ScenarioId, last: NaiveDate, seed: u64) -> Self {
        Self::with_scale(id, ymd(1998, 1, 1), last, 100.0, seed)
    }

    /// Reduced scale: 20 events a day and three years of occurrences ending
    /// at `last`.
    pub fn desk_scale(id: ScenarioId, last: NaiveDate, seed: u64) -> Self {
        let first = last
            .checked_sub_months(Months::new(36))
            .and_then(|d| d.succ_opt())
            .expect("date in range");
        Self::with_scale(id, first, last, 20.0, seed)
    }

    pub fn validate(&self) -> Result<(), SimulateError> {
        if self.first_occurrence > self.last_occurrence {
            return Err(SimulateError::EmptyRange {
                first: self.first_occurrence,
                last: self.last_occurrence,
            });
        }
        self.occurrence.validate()?;
        self.exposure.validate()
    }

    /// Years a holiday calendar must cover to generate this scenario.
    pub fn holiday_years(&self) -> (i32, i32) {
        let horizon_years = LOOKAHEAD / 365 + 1;
        (
            self.first_occurrence.year(),
            self.last_occurrence.year() + horizon_years,
        )
    }
}

/// Precomputed exposures and intensities for one scenario.
#[derive(Debug, Clone)]
pub struct Simulator {
    cfg: ScenarioConfig,
    cal: Calendar,
    first: DateIndex,
    last: DateIndex,
    /// `cum[i] = Σ_{v < first + i} α_v`.
    cum: Vec<f64>,
    lambdas: Vec<f64>,
}

impl Simulator {
    pub fn new(cfg: ScenarioConfig, cal: Calendar) -> Result<Self, SimulateError> {
        cfg.validate()?;
        let first = cal.index(cfg.first_occurrence);
        let last = cal.index(cfg.last_occurrence);
        let mut cum = Vec::with_capacity((last.days_since(first) + LOOKAHEAD + 2) as usize);
        let mut acc = 0.0;
        cum.push(acc);
        for d in first.0..=last.0 + LOOKAHEAD {
            acc += cfg.exposure.alpha(&cal.day(DateIndex(d)));
            cum.push(acc);
        }
        let n = (last.days_since(first) + 1) as usize;
        let lambdas = match cfg.occurrence {
            OccurrenceProcess::Constant { lambda } => vec![lambda; n],
            OccurrenceProcess::Markov {
                lambda_good,
                lambda_bad,
                good_to_bad,
                bad_to_good,
            } => {
                let mut rng = stream(cfg.seed, MARKOV_STREAM);
                let mut good = true;
                let mut out = Vec::with_capacity(n);
                for _ in 0..n {
                    out.push(if good { lambda_good } else { lambda_bad });
                    let u: f64 = rng.random();
                    good = if good { u >= good_to_bad } else { u < bad_to_good };
                }
                out
            }
        };
        Ok(Simulator {
            cfg,
            cal,
            first,
            last,
            cum,
            lambdas,
        })
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.cfg
    }

    pub fn calendar(&self) -> &Calendar {
        &self.cal
    }

    pub fn first(&self) -> DateIndex {
        self.first
    }

    pub fn last(&self) -> DateIndex {
        self.last
    }

    /// `λ_t` for every occurrence date in range.
    pub fn intensities(&self) -> &[f64] {
        &self.lambdas
    }

    pub fn intensity(&self, t: DateIndex) -> f64 {
        self.lambdas[t.days_since(self.first) as usize]
    }

    /// `α_{t,s}` from the scenario formula.
    pub fn alpha(&self, s: DateIndex) -> f64 {
        self.cfg.exposure.alpha(&self.cal.day(s))
    }

    /// `min{s ≥ t : Σ_{v=t}^{s} α_v > u}`.
    pub fn observation_date(&self, t: DateIndex, u: f64) -> DateIndex {
        let i0 = t.days_since(self.first) as usize;
        let target = self.cum[i0] + u;
        // First index j > i0 with cum[j] > target; the date is first + j - 1.
        let tail = &self.cum[i0 + 1..];
        let k = tail.partition_point(|&c| c <= target);
        if k < tail.len() {
            return t + k as i32;
        }
        let mut acc = tail[tail.len() - 1] - self.cum[i0];
        let mut s = t + tail.len() as i32;
        loop {
            acc += self.alpha(s);
            if acc > u {
                return s;
            }
            s = s + 1;
        }
    }

    pub fn draw_u<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        draw_time_changed(&self.cfg.delay, rng)
    }

    /// Events of one occurrence date, sorted by observation date.
    pub fn occurrence_date(&self, t: DateIndex) -> Vec<EventRecord> {
        let mut rng = stream(self.cfg.seed, t.0 as u32 as u64);
        let n = draw_poisson(self.intensity(t), &mut rng);
        let mut out: Vec<EventRecord> = (0..n)
            .map(|_| EventRecord {
                occurrence: t,
                observation: self.observation_date(t, self.draw_u(&mut rng)),
            })
            .collect();
        out.sort_unstable();
        out
    }

    /// `N_t` for every occurrence date, from the same streams as the events.
    pub fn occurrence_counts(&self) -> Vec<(DateIndex, u64)> {
        (self.first.0..=self.last.0)
            .map(|d| {
                let t = DateIndex(d);
                let mut rng = stream(self.cfg.seed, d as u32 as u64);
                (t, draw_poisson(self.intensity(t), &mut rng))
            })
            .collect()
    }

    pub fn run(&self) -> EventDataset {
        EventDataset::from_records(
            (self.first.0..=self.last.0).flat_map(|d| self.occurrence_date(DateIndex(d))),
        )
    }
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

fn draw_poisson<R: Rng + ?Sized>(lambda: f64, rng: &mut R) -> u64 {
    if lambda <= 0.0 {
        return 0;
    }
    let p = Poisson::new(lambda).expect("positive finite intensity");
    p.sample(rng) as u64
}

/// One draw of `Ũ`.
pub fn draw_time_changed<R: Rng + ?Sized>(dist: &TimeChangedDistribution, rng: &mut R) -> f64 {
    match dist {
        TimeChangedDistribution::Exponential => Exp1.sample(rng),
        TimeChangedDistribution::LogNormal { sigma } => {
            let z: f64 = StandardNormal.sample(rng);
            libm::exp(sigma * z)
        }
    }
}

/// `N_t` per occurrence date.
pub fn simulate_occurrences(sim: &Simulator) -> Vec<(DateIndex, u64)> {
    sim.occurrence_counts()
}

/// Observation date for one event from `t`, drawing `Ũ` from `rng`.
pub fn simulate_observation_date<R: Rng + ?Sized>(
    sim: &Simulator,
    t: DateIndex,
    rng: &mut R,
) -> DateIndex {
    sim.observation_date(t, sim.draw_u(rng))
}

/// All events of one occurrence date.
pub fn simulate_occurrence_date(sim: &Simulator, t: DateIndex) -> Vec<EventRecord> {
    sim.occurrence_date(t)
}

/// Every event of the scenario with its true observation date.
pub fn simulate_scenario(cfg: ScenarioConfig, cal: Calendar) -> Result<EventDataset, SimulateError> {
    Ok(Simulator::new(cfg, cal)?.run())
}
