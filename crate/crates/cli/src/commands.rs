//! The six subcommands.

use std::path::PathBuf;

use chrono::NaiveDate;
use hidden_events_core::binning::{hazard_table, kaplan_meier, propose_bins};
use hidden_events_core::calendar::{Calendar, CovariateSpec, DateIndex, Effect};
use hidden_events_core::chainladder::{self, Anchor, Grid};
use hidden_events_core::counts::{triangle_from_events, CountTriangle, EventDataset};
use hidden_events_core::likelihood::{
    confidence_intervals, fit, ConfidenceInterval, FitOptions, FitResult, FitStatus,
};
use hidden_events_core::predict::{
    backtest, backtest_date, predict_cells, BacktestFlag, BacktestMethod, BacktestOptions,
    BacktestRow, BacktestSummary, Horizon, PredictionOptions, PredictionReport,
};
use hidden_events_core::simulate::{ScenarioConfig, Simulator};
use hidden_events_core::timechange::TimeChangedDistribution;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{self, HorizonConfig, LoadedConfig, MethodConfig};
use crate::io;
use crate::report::{OutputDir, Provenance};
use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Simulate,
    Fit,
    Bins,
    Predict,
    Backtest,
    ChainLadder,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Fit => "fit",
            Command::Bins => "bins",
            Command::Predict => "predict",
            Command::Backtest => "backtest",
            Command::ChainLadder => "chainladder",
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunArgs {
    pub config: PathBuf,
    /// Overrides the config's `seed`.
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    /// Defaults to `out/` next to the config file.
    pub out: Option<PathBuf>,
}

/// Files written and messages for the user. A run that wrote its files but
/// should exit non-zero returns them inside `status`.
#[derive(Debug)]
pub struct Outcome {
    pub written: Vec<PathBuf>,
    pub notes: Vec<String>,
    pub status: Result<(), CliError>,
}

pub fn run(cmd: Command, args: &RunArgs) -> Result<Outcome, CliError> {
    let loaded = LoadedConfig::load(&args.config)?;
    match args.threads {
        Some(0) => Err(CliError::Config("--threads must be at least 1".into())),
        Some(k) => rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build()
            .map_err(|e| CliError::Config(e.to_string()))?
            .install(|| dispatch(cmd, &loaded, args)),
        None => dispatch(cmd, &loaded, args),
    }
}

fn dispatch(cmd: Command, loaded: &LoadedConfig, args: &RunArgs) -> Result<Outcome, CliError> {
    let cal = loaded.calendar()?;
    let seed = args.seed.or(loaded.config.seed);
    let dir = args
        .out
        .clone()
        .unwrap_or_else(|| loaded.base_dir.join("out"));
    let mut out = OutputDir::create(&dir, Provenance::new(cmd.name(), &loaded.sha256, seed))?;
    let mut notes = Vec::new();
    let status = match cmd {
        Command::Simulate => simulate(loaded, &cal, seed.unwrap_or(0), &mut out, &mut notes),
        Command::Fit => fit_cmd(loaded, &cal, &mut out, &mut notes),
        Command::Bins => bins(loaded, &cal, &mut out, &mut notes),
        Command::Predict => predict(loaded, &cal, &mut out, &mut notes),
        Command::Backtest => backtest_cmd(loaded, &cal, seed.unwrap_or(0), &mut out, &mut notes),
        Command::ChainLadder => chain_ladder(loaded, &cal, &mut out, &mut notes),
    }?;
    Ok(Outcome {
        written: out.written().to_vec(),
        notes,
        status,
    })
}

type Status = Result<Result<(), CliError>, CliError>;

fn load_events(
    loaded: &LoadedConfig,
    cal: &Calendar,
    notes: &mut Vec<String>,
) -> Result<EventDataset, CliError> {
    let parsed = io::read_events(&loaded.events_path()?, cal)?;
    notes.push(parsed.summary());
    Ok(parsed.dataset)
}

fn triangle_at(events: &EventDataset, c: DateIndex) -> Result<CountTriangle, CliError> {
    triangle_from_events(events, c).map_err(|e| CliError::Data(e.to_string()))
}

/// Computation date from the config, else the last observation date.
fn computation_date(
    given: Option<NaiveDate>,
    events: &EventDataset,
    cal: &Calendar,
) -> Result<DateIndex, CliError> {
    match given {
        Some(d) => Ok(cal.index(d)),
        None => events
            .last_observation()
            .ok_or_else(|| CliError::Data("no events".into())),
    }
}

fn run_fit(
    tri: &CountTriangle,
    spec: &CovariateSpec,
    dist: &TimeChangedDistribution,
    opts: &FitOptions,
    cal: &Calendar,
) -> Result<FitResult, CliError> {
    fit(tri, spec, dist, cal, None, opts).map_err(|e| CliError::Data(format!("fit: {e}")))
}

fn convergence(f: &FitResult) -> Result<(), CliError> {
    if f.converged {
        Ok(())
    } else {
        let mut msg = format!("status {:?} after {} iterations", f.status, f.iterations);
        if !f.drifting.is_empty() {
            msg.push_str(&format!("; drifting: {}", f.drifting.join(", ")));
        }
        Err(CliError::NotConverged(msg))
    }
}

fn simulate(
    loaded: &LoadedConfig,
    cal: &Calendar,
    seed: u64,
    out: &mut OutputDir,
    notes: &mut Vec<String>,
) -> Status {
    let section = config::section(&loaded.config.simulate, "simulate")?;
    let cfg = section.scenario_config(seed)?;
    let (events, intensities) = simulate_dataset(cfg.clone(), cal)?;
    notes.push(format!("{} events simulated", events.len()));

    let mut buf = Vec::new();
    io::write_events(&mut buf, &events, cal, Some(&out.provenance().comment_line()))?;
    out.raw("events.csv", &buf)?;

    #[derive(Serialize)]
    struct IntensityRow {
        occurrence_date: NaiveDate,
        lambda: f64,
    }
    let rows: Vec<IntensityRow> = intensities
        .iter()
        .map(|&(t, lambda)| IntensityRow {
            occurrence_date: cal.date(t),
            lambda,
        })
        .collect();
    out.csv("intensities.csv", &["occurrence_date", "lambda"], &rows)?;

    #[derive(Serialize)]
    struct Summary<'a> {
        scenario: &'a ScenarioConfig,
        events: usize,
        first_observation: Option<NaiveDate>,
        last_observation: Option<NaiveDate>,
    }
    out.json(
        "simulate.json",
        &Summary {
            scenario: &cfg,
            events: events.len(),
            first_observation: events.events().iter().map(|e| e.observation).min().map(|d| cal.date(d)),
            last_observation: events.last_observation().map(|d| cal.date(d)),
        },
    )?;
    Ok(Ok(()))
}

/// Simulates in parallel over occurrence dates. Each date has its own
/// random stream, so the result does not depend on the thread count.
pub fn simulate_dataset(
    cfg: ScenarioConfig,
    cal: &Calendar,
) -> Result<(EventDataset, Vec<(DateIndex, f64)>), CliError> {
    let sim = Simulator::new(cfg, cal.clone()).map_err(|e| CliError::Config(e.to_string()))?;
    let records: Vec<_> = (sim.first().0..=sim.last().0)
        .into_par_iter()
        .flat_map_iter(|d| sim.occurrence_date(DateIndex(d)))
        .collect();
    let intensities = (sim.first().0..=sim.last().0)
        .map(|d| (DateIndex(d), sim.intensity(DateIndex(d))))
        .collect();
    Ok((EventDataset::from_records(records), intensities))
}

#[derive(Serialize)]
struct CoefficientRow {
    name: String,
    coefficient: f64,
    standard_error: f64,
    estimate: f64,
    lower: f64,
    upper: f64,
}

impl From<&ConfidenceInterval> for CoefficientRow {
    fn from(c: &ConfidenceInterval) -> Self {
        CoefficientRow {
            name: c.name.clone(),
            coefficient: c.coefficient,
            standard_error: c.standard_error,
            estimate: c.estimate,
            lower: c.lower,
            upper: c.upper,
        }
    }
}

fn fit_cmd(
    loaded: &LoadedConfig,
    cal: &Calendar,
    out: &mut OutputDir,
    notes: &mut Vec<String>,
) -> Status {
    let (spec, model) = loaded.model()?;
    let events = load_events(loaded, cal, notes)?;
    let section = loaded.config.fit.clone().unwrap_or(config::FitSection {
        computation_date: None,
        level: 0.95,
    });
    if !(section.level > 0.0 && section.level < 1.0) {
        return Err(CliError::Config("fit.level must lie in (0, 1)".into()));
    }
    let c = computation_date(section.computation_date, &events, cal)?;
    let tri = triangle_at(&events, c)?;
    let f = run_fit(&tri, &spec, &model.distribution, &model.fit, cal)?;
    let intervals = match confidence_intervals(&f, section.level) {
        Ok(ci) => Some(ci),
        Err(e) => {
            notes.push(format!("no confidence intervals: {e}"));
            None
        }
    };

    #[derive(Serialize)]
    struct FitOutput<'a> {
        computation_date: NaiveDate,
        level: f64,
        fit: &'a FitResult,
        confidence_intervals: &'a Option<Vec<ConfidenceInterval>>,
    }
    out.json(
        "fit.json",
        &FitOutput {
            computation_date: cal.date(c),
            level: section.level,
            fit: &f,
            confidence_intervals: &intervals,
        },
    )?;
    let rows: Vec<CoefficientRow> = match &intervals {
        Some(ci) => ci.iter().map(CoefficientRow::from).collect(),
        None => f
            .parameter_names()
            .into_iter()
            .zip(f.parameters())
            .map(|(name, coefficient)| CoefficientRow {
                name,
                coefficient,
                standard_error: f64::NAN,
                estimate: f64::NAN,
                lower: f64::NAN,
                upper: f64::NAN,
            })
            .collect(),
    };
    out.csv("coefficients.csv", &["name", "coefficient", "standard_error", "estimate", "lower", "upper"], &rows)?;
    notes.push(format!(
        "fit {:?} in {} iterations, loglik {:.4}",
        f.status, f.iterations, f.loglik
    ));
    Ok(convergence(&f))
}

fn bins(
    loaded: &LoadedConfig,
    cal: &Calendar,
    out: &mut OutputDir,
    notes: &mut Vec<String>,
) -> Status {
    let events = load_events(loaded, cal, notes)?;
    let section = loaded.config.bins.clone().unwrap_or(config::BinsSection {
        computation_date: None,
        options: Default::default(),
    });
    let c = computation_date(section.computation_date, &events, cal)?;
    let tri = triangle_at(&events, c)?;
    let table = hazard_table(&tri);
    let km = kaplan_meier(&table);

    #[derive(Serialize)]
    struct HazardCsv {
        delay: u32,
        n_equal: u64,
        n_geq: u64,
        hazard: f64,
        km_survival: f64,
    }
    let rows: Vec<HazardCsv> = table
        .rows()
        .iter()
        .zip(&km)
        .map(|(r, &s)| HazardCsv {
            delay: r.delay,
            n_equal: r.count_equal,
            n_geq: r.count_geq,
            hazard: r.hazard,
            km_survival: s,
        })
        .collect();
    out.csv("hazard.csv", &["delay", "n_equal", "n_geq", "hazard", "km_survival"], &rows)?;

    let proposed =
        propose_bins(&table, &section.options).map_err(|e| CliError::Data(e.to_string()))?;
    #[derive(Serialize)]
    struct BinsOutput {
        computation_date: NaiveDate,
        starts: Vec<u32>,
        labels: Vec<String>,
        options: hidden_events_core::binning::BinOptions,
    }
    out.json(
        "bins.json",
        &BinsOutput {
            computation_date: cal.date(c),
            starts: proposed.starts().to_vec(),
            labels: (0..proposed.len()).map(|b| proposed.label(b)).collect(),
            options: section.options,
        },
    )?;
    notes.push(format!("{} delay bins", proposed.len()));
    Ok(Ok(()))
}

fn horizon(h: &HorizonConfig, cal: &Calendar) -> Horizon {
    match h.through {
        Some(d) => Horizon::Through { date: cal.index(d) },
        None => Horizon::TailRule(h.tail),
    }
}

fn predict(
    loaded: &LoadedConfig,
    cal: &Calendar,
    out: &mut OutputDir,
    notes: &mut Vec<String>,
) -> Status {
    let section = config::section(&loaded.config.predict, "predict")?;
    let (spec, model) = loaded.model()?;
    let events = load_events(loaded, cal, notes)?;
    let tau = cal.index(section.eval_date);
    let c = tau + section.gap as i32;
    let h = horizon(&section.horizon, cal);
    if let Horizon::Through { date } = h {
        if date <= c {
            notes.push(format!(
                "warning: horizon {} is not after the computation date {}; nothing to predict",
                cal.date(date),
                cal.date(c)
            ));
        }
    }
    let tri = triangle_at(&events, c)?;
    let f = run_fit(&tri, &spec, &model.distribution, &model.fit, cal)?;
    let opts = PredictionOptions {
        horizon: h,
        reliability_floor: section.reliability_floor,
    };
    let r = predict_cells(&tri, &f.model, &f.distribution, tau, cal, &opts)
        .map_err(|e| CliError::Data(e.to_string()))?;
    if r.unreliable_dates > 0 {
        notes.push(format!(
            "warning: {} occurrence dates have observed probability below {}",
            r.unreliable_dates, section.reliability_floor
        ));
    }
    write_prediction(out, cal, &r, &f)?;
    notes.push(format!(
        "hidden at {}: {:.2} (observed in gap {}, still to come {:.2})",
        section.eval_date, r.ibnr_estimate, r.observed_in_gap, r.hidden_total
    ));
    Ok(convergence(&f))
}

fn write_prediction(
    out: &mut OutputDir,
    cal: &Calendar,
    r: &PredictionReport,
    f: &FitResult,
) -> Result<(), CliError> {
    #[derive(Serialize)]
    struct PredictionOutput {
        eval_date: NaiveDate,
        computation_date: NaiveDate,
        hidden_total: f64,
        variance: f64,
        observed_in_gap: u64,
        ibnr_estimate: f64,
        unreliable_dates: usize,
        future_dates: usize,
        fit_status: FitStatus,
        column_names: Vec<String>,
        parameters: Vec<f64>,
    }
    let by_date = r.by_future_date();
    out.json(
        "prediction.json",
        &PredictionOutput {
            eval_date: cal.date(r.eval_date),
            computation_date: cal.date(r.computation_date),
            hidden_total: r.hidden_total,
            variance: r.variance,
            observed_in_gap: r.observed_in_gap,
            ibnr_estimate: r.ibnr_estimate,
            unreliable_dates: r.unreliable_dates,
            future_dates: by_date.len(),
            fit_status: f.status,
            column_names: f.parameter_names(),
            parameters: f.parameters(),
        },
    )?;

    #[derive(Serialize)]
    struct DateRow {
        observation_date: NaiveDate,
        expected: f64,
    }
    let rows: Vec<DateRow> = by_date
        .iter()
        .map(|&(s, expected)| DateRow {
            observation_date: cal.date(s),
            expected,
        })
        .collect();
    out.csv("by_date.csv", &["observation_date", "expected"], &rows)?;

    #[derive(Serialize)]
    struct MonthRow {
        year: i32,
        month: u32,
        expected: f64,
    }
    let rows: Vec<MonthRow> = r
        .by_future_month(cal)
        .into_iter()
        .map(|(m, expected)| MonthRow {
            year: m.year,
            month: m.month,
            expected,
        })
        .collect();
    out.csv("by_month.csv", &["year", "month", "expected"], &rows)?;

    #[derive(Serialize)]
    struct LambdaRow {
        occurrence_date: NaiveDate,
        observed: u64,
        observed_probability: f64,
        lambda: f64,
        reliable: bool,
    }
    let rows: Vec<LambdaRow> = r
        .lambdas
        .iter()
        .map(|l| LambdaRow {
            occurrence_date: cal.date(l.occurrence),
            observed: l.observed,
            observed_probability: l.observed_probability,
            lambda: l.lambda,
            reliable: l.reliable,
        })
        .collect();
    out.csv("lambdas.csv", &["occurrence_date", "observed", "observed_probability", "lambda", "reliable"], &rows)?;
    Ok(())
}

fn chain_ladder(
    loaded: &LoadedConfig,
    cal: &Calendar,
    out: &mut OutputDir,
    notes: &mut Vec<String>,
) -> Status {
    let section = config::section(&loaded.config.chainladder, "chainladder")?;
    let events = load_events(loaded, cal, notes)?;
    let tau = cal.index(section.eval_date);
    let tri = chainladder::aggregate(&events, tau, section.grid, section.anchor, cal)
        .map_err(|e| CliError::Data(e.to_string()))?;
    let est = chainladder::ibnr_estimate(&tri).map_err(|e| CliError::Data(e.to_string()))?;

    #[derive(Serialize)]
    struct CellRow {
        origin_start: NaiveDate,
        origin_end: NaiveDate,
        development: usize,
        cumulative: f64,
        complete: bool,
    }
    let mut rows = Vec::new();
    for (i, row) in tri.cum.iter().enumerate() {
        let (a, b) = tri.periods[i];
        for (j, &x) in row.iter().enumerate() {
            rows.push(CellRow {
                origin_start: cal.date(a),
                origin_end: cal.date(b),
                development: j,
                cumulative: x,
                complete: tri.complete[i][j],
            });
        }
    }
    out.csv("triangle.csv", &["origin_start", "origin_end", "development", "cumulative", "complete"], &rows)?;

    #[derive(Serialize)]
    struct ClOutput<'a> {
        eval_date: NaiveDate,
        grid: Grid,
        anchor: Anchor,
        periods: Vec<(NaiveDate, NaiveDate)>,
        factors: &'a [f64],
        latest: &'a [f64],
        ultimates: &'a [f64],
        ibnr: f64,
    }
    out.json(
        "chainladder.json",
        &ClOutput {
            eval_date: section.eval_date,
            grid: section.grid,
            anchor: section.anchor,
            periods: tri
                .periods
                .iter()
                .map(|&(a, b)| (cal.date(a), cal.date(b)))
                .collect(),
            factors: &est.factors,
            latest: &est.latest,
            ultimates: &est.ultimates,
            ibnr: est.ibnr,
        },
    )?;
    notes.push(format!("chain-ladder IBNR at {}: {:.2}", section.eval_date, est.ibnr));
    Ok(Ok(()))
}

/// A backtest method resolved against one scenario and its bin proposal.
fn resolve_method(
    m: &MethodConfig,
    scenario: Option<&ScenarioConfig>,
    proposal: Option<&EventDataset>,
    proposal_date: DateIndex,
) -> Result<BacktestMethod, CliError> {
    match m {
        MethodConfig::ChainLadder { grid, anchor, .. } => Ok(BacktestMethod::ChainLadder {
            grid: *grid,
            anchor: *anchor,
        }),
        MethodConfig::Granular {
            name,
            effects,
            scenario_effects,
            auto_bins,
            distribution,
            fit,
        } => {
            let mut all: Vec<Effect> = Vec::new();
            if *scenario_effects {
                let s = scenario.ok_or_else(|| {
                    CliError::Config(format!(
                        "method {name}: scenario_effects needs [backtest.scenario]"
                    ))
                })?;
                all.extend(s.exposure.exact_spec().effects().iter().cloned());
            }
            all.extend(effects.iter().cloned());
            if let Some(opts) = auto_bins {
                let ds = proposal.expect("proposal dataset is present");
                let tri = triangle_at(ds, proposal_date)?;
                let bins = propose_bins(&hazard_table(&tri), opts)
                    .map_err(|e| CliError::Data(format!("method {name}: {e}")))?;
                all.push(Effect::DelayBins { bins });
            }
            let spec = CovariateSpec::new(all)
                .map_err(|e| CliError::Config(format!("method {name}: {e}")))?;
            Ok(BacktestMethod::Granular {
                spec,
                distribution: *distribution,
                fit: *fit,
            })
        }
    }
}

#[derive(Serialize)]
struct BacktestCsvRow {
    replication: usize,
    seed: Option<u64>,
    method: String,
    eval_date: NaiveDate,
    computation_date: NaiveDate,
    predicted: Option<f64>,
    actual: u64,
    percentage_error: Option<f64>,
    fit_status: Option<FitStatus>,
    flags: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct SummaryRow {
    pub scenario: String,
    /// An ISO date, or `all` for the pooled row.
    pub eval_date: String,
    pub method: String,
    pub n: usize,
    pub mean_pe: Option<f64>,
    pub sd_pe: Option<f64>,
}

fn flag_text(flags: &[BacktestFlag]) -> String {
    flags
        .iter()
        .map(|f| match f {
            BacktestFlag::ZeroActual => "zero_actual".to_string(),
            BacktestFlag::NoData => "no_data".to_string(),
            BacktestFlag::NotConverged => "not_converged".to_string(),
            BacktestFlag::Failed(d) => format!("failed: {d}"),
        })
        .collect::<Vec<_>>()
        .join("; ")
}

/// Runs one method over all dates. With `refit_every == 1` each date is
/// fitted from scratch and dates run in parallel; otherwise the core's
/// sequential warm-started loop is used.
pub fn run_backtest(
    events: &EventDataset,
    dates: &[DateIndex],
    method: &BacktestMethod,
    cal: &Calendar,
    opts: &BacktestOptions,
) -> Vec<BacktestRow> {
    if opts.refit_every <= 1 {
        dates
            .par_iter()
            .map(|&tau| backtest_date(events, tau, method, cal, opts, None, true).0)
            .collect()
    } else {
        backtest(events, dates, method, cal, opts).rows
    }
}

/// Evaluation dates sharing the same simulated (or loaded) datasets.
struct Group {
    dates: Vec<DateIndex>,
    data: Vec<(Option<u64>, EventDataset)>,
    methods: Vec<BacktestMethod>,
}

fn backtest_cmd(
    loaded: &LoadedConfig,
    cal: &Calendar,
    seed: u64,
    out: &mut OutputDir,
    notes: &mut Vec<String>,
) -> Status {
    let section = config::section(&loaded.config.backtest, "backtest")?;
    if section.methods.is_empty() {
        return Err(CliError::Config("backtest needs at least one method".into()));
    }
    if section.replications == 0 {
        return Err(CliError::Config("replications must be at least 1".into()));
    }
    let mut names: Vec<&str> = section.methods.iter().map(MethodConfig::name).collect();
    names.sort_unstable();
    if names.windows(2).any(|w| w[0] == w[1]) {
        return Err(CliError::Config("backtest method names must be unique".into()));
    }
    let dates: Vec<DateIndex> = section.dates()?.iter().map(|&d| cal.index(d)).collect();
    let opts = BacktestOptions {
        gap: section.gap,
        refit_every: section.refit_every.max(1),
        prediction: PredictionOptions {
            horizon: horizon(&section.horizon, cal),
            reliability_floor: section.reliability_floor,
        },
    };
    let gap = section.gap as i32;

    let (label, groups) = match &section.scenario {
        Some(s) => {
            let label = serde_json::to_value(s.scenario)
                .ok()
                .and_then(|v| v.as_str().map(str::to_string))
                .unwrap_or_default();
            // Without a fixed end, every date gets data ending `gap` days later.
            let batches: Vec<Vec<DateIndex>> = match s.last_occurrence {
                Some(_) => vec![dates.clone()],
                None => dates.iter().map(|&d| vec![d]).collect(),
            };
            let mut groups = Vec::new();
            for batch in batches {
                let last = s
                    .last_occurrence
                    .unwrap_or_else(|| cal.date(batch[0] + gap));
                let data: Vec<(Option<u64>, EventDataset)> = (0..section.replications as u64)
                    .into_par_iter()
                    .map(|r| {
                        simulate_dataset(s.scenario_config_ending(last, seed + r), cal)
                            .map(|(d, _)| (Some(seed + r), d))
                    })
                    .collect::<Result<_, _>>()?;
                let scenario = s.scenario_config_ending(last, seed);
                groups.push(make_group(section, batch, data, Some(&scenario), gap)?);
            }
            (label, groups)
        }
        None => {
            if section.replications > 1 {
                return Err(CliError::Config(
                    "replications > 1 needs [backtest.scenario]".into(),
                ));
            }
            let events = load_events(loaded, cal, notes)?;
            let label = loaded
                .events_path()?
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default();
            let group = make_group(section, dates.clone(), vec![(None, events)], None, gap)?;
            (label, vec![group])
        }
    };

    let jobs: Vec<(usize, usize, usize)> = groups
        .iter()
        .enumerate()
        .flat_map(|(g, grp)| {
            (0..grp.data.len()).flat_map(move |r| (0..grp.methods.len()).map(move |m| (g, r, m)))
        })
        .collect();
    let results: Vec<Vec<BacktestRow>> = jobs
        .par_iter()
        .map(|&(g, r, m)| {
            let grp = &groups[g];
            run_backtest(&grp.data[r].1, &grp.dates, &grp.methods[m], cal, &opts)
        })
        .collect();

    let mut csv_rows = Vec::new();
    let mut tagged: Vec<(usize, &BacktestRow)> = Vec::new();
    let mut not_converged = 0;
    for (&(g, r, m), rows) in jobs.iter().zip(&results) {
        for row in rows {
            not_converged += row.flags.contains(&BacktestFlag::NotConverged) as usize;
            tagged.push((m, row));
            csv_rows.push(BacktestCsvRow {
                replication: r,
                seed: groups[g].data[r].0,
                method: section.methods[m].name().to_string(),
                eval_date: cal.date(row.eval_date),
                computation_date: cal.date(row.computation_date),
                predicted: row.predicted,
                actual: row.actual,
                percentage_error: row.percentage_error,
                fit_status: row.fit_status,
                flags: flag_text(&row.flags),
            });
        }
    }
    out.csv(
        "backtest_rows.csv",
        &[
            "replication",
            "seed",
            "method",
            "eval_date",
            "computation_date",
            "predicted",
            "actual",
            "percentage_error",
            "fit_status",
            "flags",
        ],
        &csv_rows,
    )?;

    let per_date = dates.len() > 1 || section.replications > 1;
    let summary = summarise(&label, &section.methods, &dates, &tagged, per_date, cal);
    out.csv("summary.csv", &["scenario", "eval_date", "method", "n", "mean_pe", "sd_pe"], &summary)?;

    #[derive(Serialize)]
    struct GroupOutput<'a> {
        eval_dates: Vec<NaiveDate>,
        seeds: Vec<Option<u64>>,
        methods: Vec<(&'a str, &'a BacktestMethod)>,
    }
    #[derive(Serialize)]
    struct BacktestOutput<'a> {
        scenario: &'a str,
        options: BacktestOptions,
        groups: Vec<GroupOutput<'a>>,
        summary: &'a [SummaryRow],
    }
    out.json(
        "backtest.json",
        &BacktestOutput {
            scenario: &label,
            options: opts,
            groups: groups
                .iter()
                .map(|g| GroupOutput {
                    eval_dates: g.dates.iter().map(|&d| cal.date(d)).collect(),
                    seeds: g.data.iter().map(|(s, _)| *s).collect(),
                    methods: section
                        .methods
                        .iter()
                        .map(MethodConfig::name)
                        .zip(&g.methods)
                        .collect(),
                })
                .collect(),
            summary: &summary,
        },
    )?;
    if not_converged > 0 {
        notes.push(format!("{not_converged} backtest fits did not converge (flagged in rows)"));
    }
    for s in summary.iter().filter(|s| s.eval_date == "all") {
        notes.push(format!(
            "{}: n={} mean PE {} sd {}",
            s.method,
            s.n,
            fmt_opt(s.mean_pe),
            fmt_opt(s.sd_pe)
        ));
    }
    Ok(Ok(()))
}

/// Resolves the methods of one group; delay bins are proposed on its first
/// dataset at the latest computation date.
fn make_group(
    section: &config::BacktestSection,
    dates: Vec<DateIndex>,
    data: Vec<(Option<u64>, EventDataset)>,
    scenario: Option<&ScenarioConfig>,
    gap: i32,
) -> Result<Group, CliError> {
    let latest = *dates.iter().max().expect("dates are non-empty");
    let methods = section
        .methods
        .iter()
        .map(|m| resolve_method(m, scenario, data.first().map(|(_, d)| d), latest + gap))
        .collect::<Result<_, _>>()?;
    Ok(Group {
        dates,
        data,
        methods,
    })
}

fn summarise(
    label: &str,
    methods: &[MethodConfig],
    dates: &[DateIndex],
    rows: &[(usize, &BacktestRow)],
    per_date: bool,
    cal: &Calendar,
) -> Vec<SummaryRow> {
    let mut out = Vec::new();
    for (m, method) in methods.iter().enumerate() {
        let row = |key: String, pe: Vec<f64>| {
            let s = BacktestSummary::from_errors(&pe);
            SummaryRow {
                scenario: label.to_string(),
                eval_date: key,
                method: method.name().to_string(),
                n: s.count,
                mean_pe: s.mean,
                sd_pe: s.sd,
            }
        };
        let mine = || rows.iter().filter(|(rm, _)| *rm == m).map(|(_, r)| *r);
        if per_date {
            let mut seen = Vec::new();
            for &d in dates {
                if seen.contains(&d) {
                    continue;
                }
                seen.push(d);
                let pe = mine()
                    .filter(|r| r.eval_date == d)
                    .filter_map(|r| r.percentage_error)
                    .collect();
                out.push(row(cal.date(d).to_string(), pe));
            }
        }
        out.push(row("all".into(), mine().filter_map(|r| r.percentage_error).collect()));
    }
    out
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or_else(|| "n/a".to_string(), |v| format!("{v:.2}"))
}

