//! Aggregate benchmark: occurrence-period × development-period triangles and
//! the chain-ladder IBNR estimate.

use alloc::vec;
use alloc::vec::Vec;

use chrono::{Datelike, Months, NaiveDate};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::calendar::{Calendar, DateIndex};
use crate::counts::EventDataset;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Grid {
    /// Periods of 365 or 366 days.
    Yearly,
    /// Fixed 28-day blocks.
    Days28,
}

/// Where period boundaries sit.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Anchor {
    /// The most recent period ends on the evaluation date (yearly periods
    /// run between anniversaries of it), so every cell is complete.
    #[default]
    EvaluationDate,
    /// Civil years, or 28-day blocks starting at the first occurrence date.
    /// The period containing the evaluation date is only partly observed.
    Calendar,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ChainLadderError {
    #[error("no events occurred on or before the evaluation date")]
    Empty,
    #[error("development factor {0} is undefined (zero cumulative count)")]
    UndefinedFactor(usize),
}

/// Cumulative counts `cum[i][j]`: events from origin period `i` observed
/// within `j` periods of it, for every cell that has started by `τ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateTriangle {
    /// Inclusive `(first, last)` day of each period, oldest first.
    pub periods: Vec<(DateIndex, DateIndex)>,
    pub cum: Vec<Vec<f64>>,
    /// Whether each cell's development period ended by `τ`.
    pub complete: Vec<Vec<bool>>,
}

impl AggregateTriangle {
    /// Triangle from cumulative rows given oldest first; row `i` of an
    /// `n`-row triangle should hold `n - i` complete cells.
    pub fn from_cumulative(cum: Vec<Vec<f64>>) -> Self {
        let complete = cum.iter().map(|r| vec![true; r.len()]).collect();
        AggregateTriangle {
            periods: Vec::new(),
            cum,
            complete,
        }
    }

    pub fn rows(&self) -> usize {
        self.cum.len()
    }

    pub fn latest(&self) -> Vec<f64> {
        self.cum.iter().map(|r| r.last().copied().unwrap_or(0.0)).collect()
    }
}

fn period_starts(
    grid: Grid,
    anchor: Anchor,
    first: DateIndex,
    tau: DateIndex,
    cal: &Calendar,
) -> Vec<DateIndex> {
    let mut starts = Vec::new();
    match (grid, anchor) {
        (Grid::Days28, Anchor::EvaluationDate) => {
            let mut s = tau - 27;
            starts.push(s);
            while s > first {
                s = s - 28;
                starts.push(s);
            }
            starts.reverse();
        }
        (Grid::Days28, Anchor::Calendar) => {
            let mut s = first;
            while s <= tau {
                starts.push(s);
                s = s + 28;
            }
        }
        (Grid::Yearly, Anchor::EvaluationDate) => {
            let end = cal.date(tau);
            let mut k = 1;
            loop {
                let s = cal.index(shift_years(end, k)) + 1;
                starts.push(s);
                if s <= first {
                    break;
                }
                k += 1;
            }
            starts.reverse();
        }
        (Grid::Yearly, Anchor::Calendar) => {
            let y0 = cal.date(first).year();
            let y1 = cal.date(tau).year();
            for y in y0..=y1 {
                starts.push(cal.index(NaiveDate::from_ymd_opt(y, 1, 1).unwrap()));
            }
        }
    }
    starts
}

fn shift_years(d: NaiveDate, k: u32) -> NaiveDate {
    d.checked_sub_months(Months::new(12 * k)).unwrap()
}

/// Aggregates the events observed by `tau` on the chosen grid.
pub fn aggregate(
    events: &EventDataset,
    tau: DateIndex,
    grid: Grid,
    anchor: Anchor,
    cal: &Calendar,
) -> Result<AggregateTriangle, ChainLadderError> {
    let first = events
        .events()
        .iter()
        .filter(|e| e.occurrence <= tau)
        .map(|e| e.occurrence)
        .min()
        .ok_or(ChainLadderError::Empty)?;
    let starts = period_starts(grid, anchor, first, tau, cal);
    let n = starts.len();
    let period_of = |d: DateIndex| starts.partition_point(|&s| s <= d) - 1;
    let mut inc = vec![vec![0.0; n]; n];
    for e in events.events() {
        if e.occurrence > tau || e.observation > tau {
            continue;
        }
        let i = period_of(e.occurrence);
        let j = period_of(e.observation) - i;
        inc[i][j] += 1.0;
    }
    let mut periods = Vec::with_capacity(n);
    for i in 0..n {
        let end = if i + 1 < n { starts[i + 1] - 1 } else { tau };
        periods.push((starts[i], end));
    }
    let last_complete = match anchor {
        Anchor::EvaluationDate => true,
        Anchor::Calendar => match grid {
            Grid::Days28 => starts[n - 1] + 27 == tau,
            Grid::Yearly => {
                let d = cal.date(tau);
                d.month() == 12 && d.day() == 31
            }
        },
    };
    let mut cum = Vec::with_capacity(n);
    let mut complete = Vec::with_capacity(n);
    for (i, row) in inc.iter().enumerate() {
        let mut acc = 0.0;
        let cells: Vec<f64> = row[..n - i]
            .iter()
            .map(|x| {
                acc += x;
                acc
            })
            .collect();
        complete.push(
            (0..n - i)
                .map(|j| i + j + 1 < n || last_complete)
                .collect(),
        );
        cum.push(cells);
    }
    Ok(AggregateTriangle {
        periods,
        cum,
        complete,
    })
}

/// `f_j = Σ_i cum(i, j+1) / Σ_i cum(i, j)` over rows whose cell `j + 1` is
/// complete. The list stops at the first development step without any
/// complete cell (possible only with partly observed periods); later steps
/// are not developed.
pub fn development_factors(tri: &AggregateTriangle) -> Result<Vec<f64>, ChainLadderError> {
    let n = tri.rows();
    let mut factors = Vec::new();
    for j in 0..n.saturating_sub(1) {
        let (mut num, mut den, mut rows) = (0.0, 0.0, 0);
        for i in 0..n {
            if tri.complete[i].get(j + 1) == Some(&true) {
                num += tri.cum[i][j + 1];
                den += tri.cum[i][j];
                rows += 1;
            }
        }
        if rows == 0 {
            break;
        }
        if den == 0.0 {
            return Err(ChainLadderError::UndefinedFactor(j));
        }
        factors.push(num / den);
    }
    Ok(factors)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainLadderEstimate {
    pub factors: Vec<f64>,
    pub latest: Vec<f64>,
    pub ultimates: Vec<f64>,
    pub ibnr: f64,
}

/// Develops each row's latest cumulative count to the oldest row's
/// development horizon; there is no tail factor beyond it.
pub fn ibnr_estimate(tri: &AggregateTriangle) -> Result<ChainLadderEstimate, ChainLadderError> {
    let factors = development_factors(tri)?;
    let latest = tri.latest();
    let ultimates: Vec<f64> = tri
        .cum
        .iter()
        .zip(&latest)
        .map(|(row, &l)| {
            let from = row.len().saturating_sub(1);
            l * factors.iter().skip(from).product::<f64>()
        })
        .collect();
    let ibnr = ultimates.iter().zip(&latest).map(|(u, l)| u - l).sum();
    Ok(ChainLadderEstimate {
        factors,
        latest,
        ultimates,
        ibnr,
    })
}
