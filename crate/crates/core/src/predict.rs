//! Occurrence intensities, expected future observations and rolling
//! backtests.
//!
//! Given a fitted exposure model and the triangle at the computation date
//! `c ≥ τ`, each occurrence date `t ≤ τ` gets `λ̂_t = N_t^Obs(c) / p_t^Obs(c)`
//! and the cells `(t, s)` with `s > c` are predicted as `λ̂_t p_{t,s}`.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use chrono::Datelike;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::calendar::{Calendar, CovariateSpec, DateIndex, DayTable};
use crate::chainladder::{self, Anchor, Grid};
use crate::counts::{self, CountTriangle, EventDataset};
use crate::likelihood::{self, FitOptions, FitResult, FitStatus};
use crate::timechange::{ExposureModel, ExposureSchedule, TailRule, TimeChangedDistribution};

/// How far into the future observation dates are predicted.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Horizon {
    /// Observation dates up to and including this day.
    Through { date: DateIndex },
    /// Until the remaining mass drops below the rule's tolerance. The
    /// leftover tail is added to the last cell.
    TailRule(TailRule),
}

impl Default for Horizon {
    fn default() -> Self {
        Horizon::TailRule(TailRule::default())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PredictionOptions {
    pub horizon: Horizon,
    /// `p_t^Obs` below this marks `λ̂_t` as unreliable. It is still used.
    pub reliability_floor: f64,
}

impl Default for PredictionOptions {
    fn default() -> Self {
        PredictionOptions {
            horizon: Horizon::default(),
            reliability_floor: 1e-4,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PredictError {
    #[error("computation date {computation} precedes evaluation date {eval}")]
    ComputationBeforeEval {
        eval: DateIndex,
        computation: DateIndex,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LambdaEstimate {
    pub occurrence: DateIndex,
    pub observed: u64,
    pub observed_probability: f64,
    pub lambda: f64,
    pub reliable: bool,
}

/// `λ̂ = N / p`, with `λ̂ = 0` whenever nothing was observed.
pub fn lambda_ratio(observed: u64, observed_probability: f64) -> f64 {
    if observed == 0 {
        0.0
    } else {
        observed as f64 / observed_probability
    }
}

/// `λ̂_t` from the triangle at its own evaluation date.
pub fn estimate_lambda(
    triangle: &CountTriangle,
    model: &ExposureModel,
    dist: &TimeChangedDistribution,
    cal: &Calendar,
    t: DateIndex,
    reliability_floor: f64,
) -> LambdaEstimate {
    let c = triangle.eval_date();
    let sched = ExposureSchedule::build(model, t, (c.days_since(t) + 1).max(0) as usize, cal);
    let p = if t > c {
        0.0
    } else {
        dist.cdf_unchecked(sched.phi_values()[sched.horizon()])
    };
    make_lambda(t, triangle.row_total(t), p, reliability_floor)
}

fn make_lambda(t: DateIndex, n: u64, p: f64, floor: f64) -> LambdaEstimate {
    LambdaEstimate {
        occurrence: t,
        observed: n,
        observed_probability: p,
        lambda: lambda_ratio(n, p),
        reliable: p >= floor,
    }
}

/// `100 (actual - predicted) / actual`; `None` when `actual = 0`.
/// Positive values mean underestimation.
pub fn percentage_error(predicted: f64, actual: u64) -> Option<f64> {
    if actual == 0 {
        None
    } else {
        Some(100.0 * (actual as f64 - predicted) / actual as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FutureCell {
    pub occurrence: DateIndex,
    pub observation: DateIndex,
    pub expected: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Month {
    pub year: i32,
    pub month: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionReport {
    pub eval_date: DateIndex,
    pub computation_date: DateIndex,
    pub lambdas: Vec<LambdaEstimate>,
    pub future_cells: Vec<FutureCell>,
    /// Expected events from `t ≤ τ` observed after the computation date.
    pub hidden_total: f64,
    /// Poisson variance of the hidden total given `λ̂`.
    pub variance: f64,
    /// Events from `t ≤ τ` already seen in `(τ, c]`.
    pub observed_in_gap: u64,
    /// Estimate of everything hidden at `τ`:
    /// `observed_in_gap + hidden_total`.
    pub ibnr_estimate: f64,
    pub unreliable_dates: usize,
}

impl PredictionReport {
    pub fn by_future_date(&self) -> Vec<(DateIndex, f64)> {
        let mut out: BTreeMap<DateIndex, f64> = BTreeMap::new();
        for c in &self.future_cells {
            *out.entry(c.observation).or_insert(0.0) += c.expected;
        }
        out.into_iter().collect()
    }

    pub fn by_future_month(&self, cal: &Calendar) -> Vec<(Month, f64)> {
        let mut out: BTreeMap<Month, f64> = BTreeMap::new();
        for (s, x) in self.by_future_date() {
            let d = cal.date(s);
            let key = Month {
                year: d.year(),
                month: d.month(),
            };
            *out.entry(key).or_insert(0.0) += x;
        }
        out.into_iter().collect()
    }
}

struct Totals {
    hidden: f64,
    observed_in_gap: u64,
    unreliable: usize,
}

/// Walks every occurrence date `t ≤ τ` of the triangle and every future
/// cell, calling the sinks as it goes.
fn walk(
    triangle: &CountTriangle,
    model: &ExposureModel,
    dist: &TimeChangedDistribution,
    eval_date: DateIndex,
    cal: &Calendar,
    opts: &PredictionOptions,
    mut on_lambda: impl FnMut(LambdaEstimate),
    mut on_cell: impl FnMut(FutureCell),
) -> Result<Totals, PredictError> {
    let c = triangle.eval_date();
    if c < eval_date {
        return Err(PredictError::ComputationBeforeEval {
            eval: eval_date,
            computation: c,
        });
    }
    let first = triangle.first_date();
    let mut totals = Totals {
        hidden: 0.0,
        observed_in_gap: 0,
        unreliable: 0,
    };
    if first > eval_date {
        return Ok(totals);
    }
    let last_needed = match opts.horizon {
        Horizon::Through { date } => date.max(c + 1),
        Horizon::TailRule(rule) => eval_date + rule.max_days as i32 + c.days_since(eval_date) + 2,
    };
    let days = DayTable::new(cal, first, last_needed);
    // Exposures shared by every occurrence date when they depend on `s` only.
    let shared: Option<Vec<f64>> = model.spec.observation_only().then(|| {
        let mut active = Vec::new();
        (first.0..=last_needed.0)
            .map(|d| {
                let info = days.get(DateIndex(d));
                model.spec.active_columns(info, info, &mut active);
                model.exposure_from_active(&active)
            })
            .collect()
    });
    let schedule = |t: DateIndex, rule: TailRule, min_horizon: usize| match &shared {
        Some(a) => ExposureSchedule::with_tail_rule_by(t, dist, rule, min_horizon, |s| {
            a[s.days_since(first) as usize]
        }),
        None => ExposureSchedule::with_tail_rule_in(model, t, dist, &days, rule, min_horizon),
    };
    let mut t = first;
    while t <= eval_date {
        let row = triangle.row(t);
        let n: u64 = row.iter().map(|&(_, k)| k).sum();
        let gap_delay_lo = eval_date.days_since(t) as u32;
        totals.observed_in_gap += row
            .iter()
            .filter(|&&(d, _)| d > gap_delay_lo)
            .map(|&(_, k)| k)
            .sum::<u64>();
        // Cells d = 0..=c-t are observed; d_obs is the first future delay.
        let d_obs = c.days_since(t) as usize + 1;
        let sched = match opts.horizon {
            Horizon::Through { date } => {
                let rule = TailRule {
                    tolerance: 0.0,
                    max_days: 0,
                };
                let len = (date.days_since(t) + 1).max(d_obs as i32) as usize;
                schedule(t, rule, len)
            }
            Horizon::TailRule(rule) => {
                let rule = if n == 0 {
                    TailRule {
                        tolerance: 0.0,
                        max_days: 0,
                    }
                } else {
                    rule
                };
                schedule(t, rule, d_obs + 1)
            }
        };
        let phi = sched.phi_values();
        let lam = make_lambda(t, n, dist.cdf_unchecked(phi[d_obs]), opts.reliability_floor);
        if !lam.reliable {
            totals.unreliable += 1;
        }
        on_lambda(lam);
        if lam.lambda > 0.0 {
            let h = sched.horizon();
            let fold = matches!(opts.horizon, Horizon::TailRule(_));
            // Survival differences: every future cell lies beyond the
            // observed part, where 1 - F carries the precision.
            let mut sf_lo = dist.sf_unchecked(phi[d_obs]);
            for d in d_obs..h {
                let sf_hi = if fold && d + 1 == h {
                    0.0
                } else {
                    dist.sf_unchecked(phi[d + 1])
                };
                let p = (sf_lo - sf_hi).max(0.0);
                sf_lo = sf_hi;
                let expected = lam.lambda * p;
                totals.hidden += expected;
                on_cell(FutureCell {
                    occurrence: t,
                    observation: t + d as i32,
                    expected,
                });
            }
        }
        t = t + 1;
    }
    Ok(totals)
}

/// Full prediction report. The triangle's evaluation date is the
/// computation date; `eval_date` is the date whose hidden events are
/// targeted. A `Through` horizon on or before the computation date gives an
/// empty set of future cells.
pub fn predict_cells(
    triangle: &CountTriangle,
    model: &ExposureModel,
    dist: &TimeChangedDistribution,
    eval_date: DateIndex,
    cal: &Calendar,
    opts: &PredictionOptions,
) -> Result<PredictionReport, PredictError> {
    let mut lambdas = Vec::new();
    let mut future_cells = Vec::new();
    let totals = walk(
        triangle,
        model,
        dist,
        eval_date,
        cal,
        opts,
        |l| lambdas.push(l),
        |c| future_cells.push(c),
    )?;
    Ok(report(triangle, eval_date, totals, lambdas, future_cells))
}

/// As [`predict_cells`] without storing the per-date and per-cell detail.
pub fn predict_hidden_total(
    triangle: &CountTriangle,
    model: &ExposureModel,
    dist: &TimeChangedDistribution,
    eval_date: DateIndex,
    cal: &Calendar,
    opts: &PredictionOptions,
) -> Result<PredictionReport, PredictError> {
    let totals = walk(triangle, model, dist, eval_date, cal, opts, |_| (), |_| ())?;
    Ok(report(triangle, eval_date, totals, Vec::new(), Vec::new()))
}

fn report(
    triangle: &CountTriangle,
    eval_date: DateIndex,
    totals: Totals,
    lambdas: Vec<LambdaEstimate>,
    future_cells: Vec<FutureCell>,
) -> PredictionReport {
    PredictionReport {
        eval_date,
        computation_date: triangle.eval_date(),
        lambdas,
        future_cells,
        hidden_total: totals.hidden,
        variance: totals.hidden,
        observed_in_gap: totals.observed_in_gap,
        ibnr_estimate: totals.observed_in_gap as f64 + totals.hidden,
        unreliable_dates: totals.unreliable,
    }
}

/// Estimator evaluated in a backtest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BacktestMethod {
    Granular {
        spec: CovariateSpec,
        distribution: TimeChangedDistribution,
        #[serde(default)]
        fit: FitOptions,
    },
    ChainLadder {
        grid: Grid,
        #[serde(default)]
        anchor: Anchor,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BacktestOptions {
    /// Days between the evaluation date and the computation date.
    pub gap: u32,
    /// Refit at every `refit_every`-th evaluation date and reuse the last
    /// fit in between.
    pub refit_every: usize,
    pub prediction: PredictionOptions,
}

impl Default for BacktestOptions {
    fn default() -> Self {
        BacktestOptions {
            gap: 5,
            refit_every: 1,
            prediction: PredictionOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "detail", rename_all = "snake_case")]
pub enum BacktestFlag {
    /// Nothing was hidden, so the percentage error is undefined.
    ZeroActual,
    /// No events were observed by the computation date.
    NoData,
    /// The fit or the chain-ladder estimate failed.
    Failed(String),
    /// The fit returned without converging; the prediction is still used.
    NotConverged,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestRow {
    pub eval_date: DateIndex,
    pub computation_date: DateIndex,
    pub predicted: Option<f64>,
    pub actual: u64,
    pub percentage_error: Option<f64>,
    pub flags: Vec<BacktestFlag>,
    pub fit_status: Option<FitStatus>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BacktestSummary {
    /// Rows with a defined percentage error.
    pub count: usize,
    pub mean: Option<f64>,
    /// Sample standard deviation (`n - 1` denominator).
    pub sd: Option<f64>,
}

impl BacktestSummary {
    pub fn from_errors(pe: &[f64]) -> Self {
        let n = pe.len();
        let mean = (n > 0).then(|| pe.iter().sum::<f64>() / n as f64);
        let sd = mean.filter(|_| n > 1).map(|m| {
            libm::sqrt(pe.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1) as f64)
        });
        BacktestSummary { count: n, mean, sd }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestResult {
    pub rows: Vec<BacktestRow>,
    pub summary: BacktestSummary,
}

impl BacktestResult {
    pub fn from_rows(rows: Vec<BacktestRow>) -> Self {
        let pe: Vec<f64> = rows.iter().filter_map(|r| r.percentage_error).collect();
        BacktestResult {
            summary: BacktestSummary::from_errors(&pe),
            rows,
        }
    }
}

/// One evaluation date. `reuse` is a previous fit: with `refit = false` it
/// is used as it is, otherwise it only provides starting values. Returns the
/// row and the fit that produced it.
pub fn backtest_date(
    events: &EventDataset,
    eval_date: DateIndex,
    method: &BacktestMethod,
    cal: &Calendar,
    opts: &BacktestOptions,
    reuse: Option<&FitResult>,
    refit: bool,
) -> (BacktestRow, Option<FitResult>) {
    let mut row = BacktestRow {
        eval_date,
        computation_date: eval_date,
        predicted: None,
        actual: 0,
        percentage_error: None,
        flags: Vec::new(),
        fit_status: None,
    };
    let mut kept = None;
    match method {
        BacktestMethod::ChainLadder { grid, anchor } => {
            row.actual = counts::actual_hidden_count(events, eval_date, None);
            match chainladder::aggregate(events, eval_date, *grid, *anchor, cal)
                .and_then(|tri| chainladder::ibnr_estimate(&tri))
            {
                Ok(est) => row.predicted = Some(est.ibnr),
                Err(e) => row.flags.push(BacktestFlag::Failed(e.to_string())),
            }
        }
        BacktestMethod::Granular {
            spec,
            distribution,
            fit,
        } => {
            let c = eval_date + opts.gap as i32;
            row.computation_date = c;
            let through = match opts.prediction.horizon {
                Horizon::Through { date } => Some(date),
                Horizon::TailRule(_) => None,
            };
            row.actual = counts::actual_hidden_count(events, eval_date, through);
            let Ok(tri) = counts::triangle_from_events(events, c) else {
                row.flags.push(BacktestFlag::NoData);
                finish(&mut row);
                return (row, reuse.cloned());
            };
            let fitted = match (reuse, refit) {
                (Some(prev), false) => Ok(prev.clone()),
                (prev, _) => {
                    let (init, dist) = match prev {
                        Some(p) if p.model.spec == *spec => {
                            (Some(p.model.gamma.as_slice()), p.distribution)
                        }
                        _ => (None, *distribution),
                    };
                    likelihood::fit(&tri, spec, &dist, cal, init, fit)
                }
            };
            match fitted {
                Ok(f) => {
                    row.fit_status = Some(f.status);
                    if f.status != FitStatus::Converged {
                        row.flags.push(BacktestFlag::NotConverged);
                    }
                    match predict_hidden_total(
                        &tri,
                        &f.model,
                        &f.distribution,
                        eval_date,
                        cal,
                        &opts.prediction,
                    ) {
                        Ok(p) => row.predicted = Some(p.ibnr_estimate),
                        Err(e) => row.flags.push(BacktestFlag::Failed(e.to_string())),
                    }
                    kept = Some(f);
                }
                Err(e) => row.flags.push(BacktestFlag::Failed(e.to_string())),
            }
        }
    }
    finish(&mut row);
    (row, kept.or_else(|| reuse.cloned()))
}

fn finish(row: &mut BacktestRow) {
    if row.actual == 0 {
        row.flags.push(BacktestFlag::ZeroActual);
    }
    row.percentage_error = row.predicted.and_then(|p| percentage_error(p, row.actual));
}

/// Rolling evaluation over `eval_dates` in the given order. A fit failure at
/// one date is flagged and the run continues.
pub fn backtest(
    events: &EventDataset,
    eval_dates: &[DateIndex],
    method: &BacktestMethod,
    cal: &Calendar,
    opts: &BacktestOptions,
) -> BacktestResult {
    let every = opts.refit_every.max(1);
    let mut last: Option<FitResult> = None;
    let mut rows = Vec::with_capacity(eval_dates.len());
    for (i, &tau) in eval_dates.iter().enumerate() {
        let refit = i % every == 0 || last.is_none();
        let (row, fit) = backtest_date(events, tau, method, cal, opts, last.as_ref(), refit);
        last = fit;
        rows.push(row);
    }
    BacktestResult::from_rows(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calendar::{Effect, Epoch, HolidayCalendar};
    use crate::counts::EventRecord;
    use alloc::vec;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn cal() -> Calendar {
        Calendar::new(Epoch::default(), HolidayCalendar::empty())
    }

    fn intercept_model(gamma0: f64) -> ExposureModel {
        let spec = CovariateSpec::new(vec![Effect::Intercept]).unwrap();
        ExposureModel::new(spec, vec![gamma0]).unwrap()
    }

    fn ev(t: i32, s: i32) -> EventRecord {
        EventRecord {
            occurrence: DateIndex(t),
            observation: DateIndex(s),
        }
    }

    #[test]
    fn lambda_examples() {
        assert_relative_eq!(lambda_ratio(50, 0.8), 62.5);
        assert_eq!(lambda_ratio(0, 0.3), 0.0);
        assert_eq!(lambda_ratio(17, 1.0), 17.0);
    }

    #[test]
    fn percentage_error_sign() {
        assert_eq!(percentage_error(100.0, 100), Some(0.0));
        assert_relative_eq!(percentage_error(90.0, 100).unwrap(), 10.0);
        assert_relative_eq!(percentage_error(110.0, 100).unwrap(), -10.0);
        assert_eq!(percentage_error(5.0, 0), None);
    }

    #[test]
    fn constant_exposure_hand_check() {
        // Exponential with α = 0.5: p^Obs(τ=t) = 1 - e^{-0.5}, and the
        // whole remaining mass e^{-0.5} is hidden.
        let model = intercept_model(libm::log(0.5));
        let ds = EventDataset::from_records(vec![ev(100, 100), ev(100, 100), ev(100, 100)]);
        let tri = counts::triangle_from_events(&ds, DateIndex(100)).unwrap();
        let r = predict_cells(
            &tri,
            &model,
            &TimeChangedDistribution::Exponential,
            DateIndex(100),
            &cal(),
            &PredictionOptions::default(),
        )
        .unwrap();
        let p = 1.0 - libm::exp(-0.5);
        assert_relative_eq!(r.lambdas[0].lambda, 3.0 / p, max_relative = 1e-12);
        assert_relative_eq!(r.hidden_total, 3.0 / p * (1.0 - p), max_relative = 1e-9);
        // First future day: λ (e^{-0.5} - e^{-1}).
        assert_relative_eq!(
            r.future_cells[0].expected,
            3.0 / p * (libm::exp(-0.5) - libm::exp(-1.0)),
            max_relative = 1e-12
        );
    }

    #[test]
    fn immediate_observation_hides_nothing() {
        let model = intercept_model(60.0);
        let ds = EventDataset::from_records((0..20).map(|t| ev(t, t)));
        let tri = counts::triangle_from_events(&ds, DateIndex(19)).unwrap();
        let r = predict_cells(
            &tri,
            &model,
            &TimeChangedDistribution::lognormal(1.0).unwrap(),
            DateIndex(19),
            &cal(),
            &PredictionOptions::default(),
        )
        .unwrap();
        assert!(r.hidden_total < 1e-12);
        assert_eq!(r.unreliable_dates, 0);
    }

    #[test]
    fn horizon_before_computation_is_empty() {
        let model = intercept_model(libm::log(0.2));
        let ds = EventDataset::from_records(vec![ev(5, 6), ev(8, 9)]);
        let tri = counts::triangle_from_events(&ds, DateIndex(12)).unwrap();
        let opts = PredictionOptions {
            horizon: Horizon::Through { date: DateIndex(11) },
            ..Default::default()
        };
        let r = predict_cells(
            &tri,
            &model,
            &TimeChangedDistribution::Exponential,
            DateIndex(10),
            &cal(),
            &opts,
        )
        .unwrap();
        assert!(r.future_cells.is_empty());
        assert_eq!(r.hidden_total, 0.0);
    }

    #[test]
    fn gap_events_are_counted() {
        let model = intercept_model(0.0);
        let ds = EventDataset::from_records(vec![ev(1, 1), ev(2, 4), ev(3, 6), ev(4, 5)]);
        let tri = counts::triangle_from_events(&ds, DateIndex(5)).unwrap();
        let r = predict_hidden_total(
            &tri,
            &model,
            &TimeChangedDistribution::Exponential,
            DateIndex(3),
            &cal(),
            &PredictionOptions::default(),
        )
        .unwrap();
        assert_eq!(r.observed_in_gap, 1);
        assert_relative_eq!(r.ibnr_estimate, 1.0 + r.hidden_total);
    }

    #[test]
    fn computation_before_eval_rejected() {
        let ds = EventDataset::from_records(vec![ev(1, 1)]);
        let tri = counts::triangle_from_events(&ds, DateIndex(3)).unwrap();
        let r = predict_cells(
            &tri,
            &intercept_model(0.0),
            &TimeChangedDistribution::Exponential,
            DateIndex(4),
            &cal(),
            &PredictionOptions::default(),
        );
        assert!(matches!(r, Err(PredictError::ComputationBeforeEval { .. })));
    }

    #[test]
    fn perfect_information_backtest() {
        let ds = EventDataset::from_records((0..200).flat_map(|t| [ev(t, t), ev(t, t)]));
        let method = BacktestMethod::ChainLadder {
            grid: Grid::Days28,
            anchor: Anchor::EvaluationDate,
        };
        let res = backtest(
            &ds,
            &[DateIndex(100), DateIndex(150)],
            &method,
            &cal(),
            &BacktestOptions::default(),
        );
        for r in &res.rows {
            assert_eq!(r.predicted, Some(0.0));
            assert_eq!(r.flags, vec![BacktestFlag::ZeroActual]);
        }
        assert_eq!(res.summary.count, 0);
    }

    #[test]
    fn summary_statistics() {
        let s = BacktestSummary::from_errors(&[1.0, 2.0, 3.0, 6.0]);
        assert_relative_eq!(s.mean.unwrap(), 3.0);
        // Σ(x-3)² = 4+1+0+9 = 14, / 3.
        assert_relative_eq!(s.sd.unwrap(), libm::sqrt(14.0 / 3.0));
        assert_eq!(BacktestSummary::from_errors(&[2.0]).sd, None);
    }

    proptest! {
        #[test]
        fn aggregations_and_horizon_monotone(
            gamma in -3.0..0.5f64,
            raw in prop::collection::vec((0..40i32, 0..10i32), 1..60),
            h1 in 1..60i32,
            h2 in 0..40i32,
        ) {
            let model = intercept_model(gamma);
            let ds = EventDataset::from_records(raw.iter().map(|&(t, d)| ev(t, t + d)));
            let tau = DateIndex(40);
            let tri = match counts::triangle_from_events(&ds, tau + 2) {
                Ok(t) => t,
                Err(_) => return Ok(()),
            };
            let dist = TimeChangedDistribution::lognormal(0.8).unwrap();
            let run = |h: Horizon| predict_cells(
                &tri, &model, &dist, tau, &cal(),
                &PredictionOptions { horizon: h, ..Default::default() },
            ).unwrap();
            let near = run(Horizon::Through { date: tau + h1 });
            let far = run(Horizon::Through { date: tau + h1 + h2 });
            let full = run(Horizon::default());
            prop_assert!(far.hidden_total >= near.hidden_total);
            prop_assert!(full.hidden_total + 1e-9 >= far.hidden_total);
            for r in [&near, &far, &full] {
                let by_date: f64 = r.by_future_date().iter().map(|x| x.1).sum();
                let by_month: f64 = r.by_future_month(&cal()).iter().map(|x| x.1).sum();
                prop_assert!((by_date - r.hidden_total).abs() < 1e-9);
                prop_assert!((by_month - r.hidden_total).abs() < 1e-9);
                for c in &r.future_cells {
                    prop_assert!(c.expected >= 0.0);
                    prop_assert!(c.observation > tri.eval_date());
                    prop_assert!(c.occurrence <= tau);
                }
            }
        }
    }
}
