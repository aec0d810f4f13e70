//! Simulation oracles: the generator knows the truth, so fitted parameters,
//! predicted cells and rolling hidden counts can be checked against it.

use chrono::{Datelike, NaiveDate, Weekday};
use hidden_events_core::calendar::{Calendar, DateIndex, Epoch, HolidayCalendar};
use hidden_events_core::counts::{actual_hidden_count, triangle_from_events, EventDataset};
use hidden_events_core::likelihood::{confidence_intervals, fit, FitOptions, FitStatus};
use hidden_events_core::predict::{
    backtest, predict_cells, BacktestMethod, BacktestOptions, PredictionOptions,
};
use hidden_events_core::simulate::{OccurrenceProcess, ScenarioConfig, ScenarioId, Simulator};
use hidden_events_core::timechange::{
    cell_probability, ExposureSchedule, TimeChangedDistribution,
};

fn ymd(y: i32, m: u32, d: u32) -> NaiveDate {
    NaiveDate::from_ymd_opt(y, m, d).unwrap()
}

fn cal() -> Calendar {
    Calendar::new(Epoch::default(), HolidayCalendar::dutch(1995, 2020))
}

fn baseline(last: NaiveDate, seed: u64) -> ScenarioConfig {
    ScenarioConfig::desk_scale(ScenarioId::Baseline, last, seed)
}

#[test]
fn exact_model_recovers_truth_within_three_se() {
    let cal = cal();
    let last = ymd(2004, 9, 5);
    let reps = 10;
    let mut hits = 0;
    let mut total = 0;
    let mut covered_95 = 0;
    for seed in 0..reps {
        let cfg = baseline(last, 500 + seed);
        let spec = cfg.exposure.exact_spec();
        let truth = cfg.exposure.truth_gamma();
        let names = spec.column_names();
        let ds = Simulator::new(cfg, cal.clone()).unwrap().run();
        let tri = triangle_from_events(&ds, cal.index(last)).unwrap();
        let start = TimeChangedDistribution::lognormal(1.5).unwrap();
        let f = fit(&tri, &spec, &start, &cal, None, &FitOptions::default()).unwrap();
        assert_eq!(f.status, FitStatus::Converged);
        let ci = confidence_intervals(&f, 0.95).unwrap();
        for name in ["intercept", "dow[Sat]", "dow[Sun]"] {
            let i = names.iter().position(|n| n == name).unwrap();
            total += 1;
            if (ci[i].coefficient - truth[i]).abs() < 3.0 * ci[i].standard_error {
                hits += 1;
            }
            let t = truth[i].exp();
            if ci[i].lower <= t && t <= ci[i].upper {
                covered_95 += 1;
            }
        }
        let sigma = ci.last().unwrap();
        total += 1;
        if (sigma.coefficient - 1.0).abs() < 3.0 * sigma.standard_error {
            hits += 1;
        }
    }
    assert!(hits as f64 >= 0.9 * total as f64, "{hits}/{total}");
    // 30 Bernoulli(0.95) trials; fewer than 24 has probability < 0.1%.
    assert!(covered_95 >= 24, "{covered_95}/30");
}

#[test]
fn mean_predicted_cell_matches_thinning() {
    // True model, short history: averaged λ̂_t p_{t,s} for a probe cell
    // tracks λ_t p_{t,s}.
    let cal = cal();
    let last = ymd(2004, 3, 10);
    let reps = 300;
    let tau = cal.index(last);
    let t = tau - 2;
    let probe = tau + 3;
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    let mut expected = 0.0;
    for seed in 0..reps {
        let mut cfg = baseline(last, seed);
        cfg.first_occurrence = ymd(2004, 2, 1);
        let model = cfg.exposure.truth_model();
        let dist = cfg.delay;
        let sim = Simulator::new(cfg, cal.clone()).unwrap();
        let ds = sim.run();
        let tri = triangle_from_events(&ds, tau).unwrap();
        let r = predict_cells(&tri, &model, &dist, tau, &cal, &PredictionOptions::default())
            .unwrap();
        let x: f64 = r
            .future_cells
            .iter()
            .filter(|c| c.occurrence == t && c.observation == probe)
            .map(|c| c.expected)
            .sum();
        sum += x;
        sum_sq += x * x;
        if seed == 0 {
            let sched = ExposureSchedule::build(&model, t, 10, &cal);
            expected = sim.intensity(t) * cell_probability(t, probe, &sched, &dist).unwrap();
        }
    }
    let n = reps as f64;
    let mean = sum / n;
    let se = ((sum_sq / n - mean * mean) / (n - 1.0)).sqrt();
    assert!(
        (mean - expected).abs() < 3.0 * se,
        "mean {mean} expected {expected} se {se}"
    );
}

fn rolling_hidden(ds: &EventDataset, from: DateIndex, to: DateIndex) -> Vec<u64> {
    (from.0..=to.0)
        .map(|d| actual_hidden_count(ds, DateIndex(d), None))
        .collect()
}

#[test]
fn sunday_predictions_are_suppressed() {
    let cal = cal();
    let last = ymd(2004, 9, 5);
    let cfg = baseline(last, 42);
    let spec = cfg.exposure.exact_spec();
    let ds = Simulator::new(cfg, cal.clone()).unwrap().run();
    let c = cal.index(last);
    let tri = triangle_from_events(&ds, c).unwrap();
    let start = TimeChangedDistribution::lognormal(1.5).unwrap();
    let f = fit(&tri, &spec, &start, &cal, None, &FitOptions::default()).unwrap();
    let r = predict_cells(
        &tri,
        &f.model,
        &f.distribution,
        c - 5,
        &cal,
        &PredictionOptions::default(),
    )
    .unwrap();
    let daily = r.by_future_date();
    let (mut sun, mut n_sun, mut wk, mut n_wk) = (0.0, 0, 0.0, 0);
    for &(s, x) in daily.iter().take(120) {
        let info = cal.day(s);
        if info.holiday != hidden_events_core::calendar::HolidayClass::None {
            continue;
        }
        match info.weekday {
            Weekday::Sun => {
                sun += x;
                n_sun += 1;
            }
            Weekday::Sat => {}
            _ => {
                wk += x;
                n_wk += 1;
            }
        }
    }
    assert!(sun / (n_sun as f64) < 0.05 * wk / (n_wk as f64));
}

#[test]
fn hidden_counts_spike_at_year_end() {
    let cal = cal();
    let ds = Simulator::new(baseline(ymd(2004, 9, 5), 3), cal.clone())
        .unwrap()
        .run();
    let from = cal.index(ymd(2003, 12, 1));
    let to = cal.index(ymd(2004, 1, 31));
    let series = rolling_hidden(&ds, from, to);
    let argmax = series
        .iter()
        .enumerate()
        .max_by_key(|(_, v)| **v)
        .map(|(i, _)| from + i as i32)
        .unwrap();
    let date = cal.date(argmax);
    let in_window = (date.month() == 12 && date.day() >= 25) || (date.month() == 1 && date.day() <= 5);
    assert!(in_window, "maximum at {date}");
}

#[test]
fn predictions_follow_weekday_sawtooth() {
    let cal = cal();
    let last = ymd(2004, 9, 5);
    // Scenario-1 intensity of 100 a day over three years: at 20 a day the
    // midweek changes drown in Poisson noise.
    let mut cfg = baseline(last, 9);
    cfg.occurrence = OccurrenceProcess::Constant { lambda: 100.0 };
    let spec = cfg.exposure.exact_spec();
    let ds = Simulator::new(cfg, cal.clone()).unwrap().run();
    let first = cal.index(ymd(2004, 5, 1));
    let dates: Vec<DateIndex> = (0..90).map(|i| first + i).collect();
    let method = BacktestMethod::Granular {
        spec,
        distribution: TimeChangedDistribution::lognormal(1.5).unwrap(),
        fit: FitOptions::default(),
    };
    let opts = BacktestOptions {
        refit_every: 1000,
        ..Default::default()
    };
    let res = backtest(&ds, &dates, &method, &cal, &opts);
    let actual: Vec<f64> = res.rows.iter().map(|r| r.actual as f64).collect();
    let predicted: Vec<f64> = res.rows.iter().map(|r| r.predicted.unwrap()).collect();
    let mut agree = 0;
    for i in 1..actual.len() {
        let da = actual[i] - actual[i - 1];
        let dp = predicted[i] - predicted[i - 1];
        if da.signum() == dp.signum() {
            agree += 1;
        }
    }
    let frac = agree as f64 / (actual.len() - 1) as f64;
    assert!(frac >= 0.8, "sign agreement {frac}");
}
