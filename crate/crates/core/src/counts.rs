//! Event records and the daily occurrence × observation count triangle.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::calendar::DateIndex;

/// One event: the day it occurred and the day it was observed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct EventRecord {
    pub occurrence: DateIndex,
    pub observation: DateIndex,
}

impl EventRecord {
    pub fn delay(&self) -> i32 {
        self.observation.days_since(self.occurrence)
    }
}

/// Validated events. Records observed before they occurred are dropped on
/// construction and counted in `dropped_reversed`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventDataset {
    events: Vec<EventRecord>,
    dropped_reversed: usize,
}

impl EventDataset {
    pub fn from_records(records: impl IntoIterator<Item = EventRecord>) -> Self {
        let mut dropped_reversed = 0;
        let mut events: Vec<EventRecord> = records
            .into_iter()
            .filter(|e| {
                let ok = e.observation >= e.occurrence;
                if !ok {
                    dropped_reversed += 1;
                }
                ok
            })
            .collect();
        events.sort_unstable();
        EventDataset {
            events,
            dropped_reversed,
        }
    }

    pub fn events(&self) -> &[EventRecord] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn dropped_reversed(&self) -> usize {
        self.dropped_reversed
    }

    pub fn first_occurrence(&self) -> Option<DateIndex> {
        self.events.first().map(|e| e.occurrence)
    }

    pub fn last_occurrence(&self) -> Option<DateIndex> {
        self.events.iter().map(|e| e.occurrence).max()
    }

    pub fn last_observation(&self) -> Option<DateIndex> {
        self.events.iter().map(|e| e.observation).max()
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CountsError {
    #[error("no events are observed on or before the evaluation date {0}")]
    EmptyTriangle(DateIndex),
}

/// Counts `N_{t,s}` for `t <= s <= eval_date`, stored sparsely per
/// occurrence date as `(delay, count)` pairs sorted by delay.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountTriangle {
    eval_date: DateIndex,
    first_date: DateIndex,
    rows: BTreeMap<DateIndex, Vec<(u32, u64)>>,
    row_totals: BTreeMap<DateIndex, u64>,
}

impl CountTriangle {
    pub fn eval_date(&self) -> DateIndex {
        self.eval_date
    }

    /// Earliest occurrence date with an observed event.
    pub fn first_date(&self) -> DateIndex {
        self.first_date
    }

    pub fn row(&self, t: DateIndex) -> &[(u32, u64)] {
        self.rows.get(&t).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn rows(&self) -> impl Iterator<Item = (DateIndex, &[(u32, u64)])> {
        self.rows.iter().map(|(t, r)| (*t, r.as_slice()))
    }

    /// `N_t^Obs(τ)`; zero for dates without observed events.
    pub fn row_total(&self, t: DateIndex) -> u64 {
        self.row_totals.get(&t).copied().unwrap_or(0)
    }

    pub fn row_totals(&self) -> &BTreeMap<DateIndex, u64> {
        &self.row_totals
    }

    pub fn total(&self) -> u64 {
        self.row_totals.values().sum()
    }

    pub fn cell(&self, t: DateIndex, s: DateIndex) -> u64 {
        let delay = s.days_since(t);
        if delay < 0 {
            return 0;
        }
        self.row(t)
            .binary_search_by_key(&(delay as u32), |&(d, _)| d)
            .map(|i| self.row(t)[i].1)
            .unwrap_or(0)
    }

    /// Iterates non-zero cells as `(t, s, count)`.
    pub fn cells(&self) -> impl Iterator<Item = (DateIndex, DateIndex, u64)> + '_ {
        self.rows
            .iter()
            .flat_map(|(t, r)| r.iter().map(move |&(d, n)| (*t, *t + d as i32, n)))
    }

    /// Observed delays with multiplicity, ignoring truncation.
    pub fn delay_counts(&self) -> BTreeMap<u32, u64> {
        let mut out = BTreeMap::new();
        for r in self.rows.values() {
            for &(d, n) in r {
                *out.entry(d).or_insert(0) += n;
            }
        }
        out
    }

    /// Expands the triangle back into one record per counted event.
    pub fn to_events(&self) -> Vec<EventRecord> {
        let mut out = Vec::with_capacity(self.total() as usize);
        for (t, s, n) in self.cells() {
            for _ in 0..n {
                out.push(EventRecord {
                    occurrence: t,
                    observation: s,
                });
            }
        }
        out
    }

    /// Restricts an existing triangle to an earlier evaluation date.
    pub fn truncate(&self, eval_date: DateIndex) -> Result<CountTriangle, CountsError> {
        build(
            self.cells()
                .filter(|&(_, s, _)| s <= eval_date)
                .map(|(t, s, n)| (t, s, n)),
            eval_date,
        )
    }
}

fn build(
    cells: impl Iterator<Item = (DateIndex, DateIndex, u64)>,
    eval_date: DateIndex,
) -> Result<CountTriangle, CountsError> {
    let mut map: BTreeMap<DateIndex, BTreeMap<u32, u64>> = BTreeMap::new();
    for (t, s, n) in cells {
        if s > eval_date || n == 0 {
            continue;
        }
        *map.entry(t)
            .or_default()
            .entry(s.days_since(t) as u32)
            .or_insert(0) += n;
    }
    let first_date = *map.keys().next().ok_or(CountsError::EmptyTriangle(eval_date))?;
    let mut rows = BTreeMap::new();
    let mut row_totals = BTreeMap::new();
    for (t, r) in map {
        row_totals.insert(t, r.values().sum());
        rows.insert(t, r.into_iter().collect());
    }
    Ok(CountTriangle {
        eval_date,
        first_date,
        rows,
        row_totals,
    })
}

/// Counts every event observed on or before `eval_date`. Events occurring
/// after `eval_date` are necessarily unobserved and excluded.
pub fn triangle_from_events(
    events: &EventDataset,
    eval_date: DateIndex,
) -> Result<CountTriangle, CountsError> {
    build(
        events
            .events()
            .iter()
            .map(|e| (e.occurrence, e.observation, 1)),
        eval_date,
    )
}

/// Ground truth for backtests: events with
/// `occurrence <= eval_date < observation <= horizon_date`
/// (`None` means no upper limit on the observation date).
pub fn actual_hidden_count(
    events: &EventDataset,
    eval_date: DateIndex,
    horizon_date: Option<DateIndex>,
) -> u64 {
    events
        .events()
        .iter()
        .filter(|e| {
            e.occurrence <= eval_date
                && e.observation > eval_date
                && horizon_date.map_or(true, |h| e.observation <= h)
        })
        .count() as u64
}
