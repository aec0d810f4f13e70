//! Date indices, holiday calendars and the covariate encoding of
//! (occurrence date, observation date) pairs.
//!
//! Dates are carried as integer [`DateIndex`] values relative to an
//! [`Epoch`]; every covariate is a deterministic function of the civil
//! calendar, so encoding a future pair needs no extra data.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::ops::{Add, Sub};

use chrono::{Datelike, NaiveDate, Weekday};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::binning::DelayBins;

/// Day number relative to an [`Epoch`]; the epoch origin is day 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DateIndex(pub i32);

impl DateIndex {
    pub const fn new(day: i32) -> Self {
        DateIndex(day)
    }

    pub const fn get(self) -> i32 {
        self.0
    }

    /// Signed number of days from `earlier` to `self`.
    pub const fn days_since(self, earlier: DateIndex) -> i32 {
        self.0 - earlier.0
    }
}

impl Add<i32> for DateIndex {
    type Output = DateIndex;
    fn add(self, rhs: i32) -> DateIndex {
        DateIndex(self.0 + rhs)
    }
}

impl Sub<i32> for DateIndex {
    type Output = DateIndex;
    fn sub(self, rhs: i32) -> DateIndex {
        DateIndex(self.0 - rhs)
    }
}

impl fmt::Display for DateIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Maps civil dates to [`DateIndex`] values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Epoch {
    origin: NaiveDate,
}

impl Epoch {
    pub const fn new(origin: NaiveDate) -> Self {
        Epoch { origin }
    }

    pub const fn origin(&self) -> NaiveDate {
        self.origin
    }

    pub fn index(&self, date: NaiveDate) -> DateIndex {
        DateIndex(date.num_days_from_ce() - self.origin.num_days_from_ce() + 1)
    }

    /// Panics only if the index lies outside chrono's representable range
    /// (roughly ±262,000 years).
    pub fn date(&self, day: DateIndex) -> NaiveDate {
        NaiveDate::from_num_days_from_ce_opt(self.origin.num_days_from_ce() + day.0 - 1)
            .expect("date index outside the representable calendar range")
    }
}

impl Default for Epoch {
    fn default() -> Self {
        Epoch::new(NaiveDate::from_ymd_opt(1990, 1, 1).unwrap())
    }
}

pub fn day_of_week(epoch: &Epoch, day: DateIndex) -> Weekday {
    epoch.date(day).weekday()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HolidayClass {
    None,
    National,
    Unofficial,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CalendarError {
    #[error("{0} is listed as both a national and an unofficial holiday")]
    OverlappingHoliday(NaiveDate),
    #[error("observation date {observation} precedes occurrence date {occurrence}")]
    ReversedPair {
        occurrence: DateIndex,
        observation: DateIndex,
    },
}

/// National and unofficial holidays; the two sets never share a date.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct HolidayCalendar {
    national: BTreeSet<NaiveDate>,
    unofficial: BTreeSet<NaiveDate>,
}

impl HolidayCalendar {
    pub fn new(
        national: BTreeSet<NaiveDate>,
        unofficial: BTreeSet<NaiveDate>,
    ) -> Result<Self, CalendarError> {
        if let Some(d) = national.intersection(&unofficial).next() {
            return Err(CalendarError::OverlappingHoliday(*d));
        }
        Ok(HolidayCalendar {
            national,
            unofficial,
        })
    }

    pub fn empty() -> Self {
        Self::default()
    }

    /// Dutch calendar: ten national holidays (New Year, Easter Sunday and
    /// Monday, Queen's Day, Liberation Day, Ascension, Whit Sunday and
    /// Monday, Christmas and Boxing Day) plus Good Friday and New Year's Eve
    /// as unofficial holidays.
    pub fn dutch(first_year: i32, last_year: i32) -> Self {
        let mut national = BTreeSet::new();
        let mut unofficial = BTreeSet::new();
        for year in first_year..=last_year {
            let ymd = |m, d| NaiveDate::from_ymd_opt(year, m, d).unwrap();
            let easter = easter_sunday(year);
            let rel = |days: i64| {
                NaiveDate::from_num_days_from_ce_opt(easter.num_days_from_ce() + days as i32)
                    .unwrap()
            };
            national.insert(ymd(1, 1));
            national.insert(easter);
            national.insert(rel(1));
            // Queen's Day moves to the Saturday when 30 April is a Sunday.
            let queens = ymd(4, 30);
            national.insert(if queens.weekday() == Weekday::Sun {
                ymd(4, 29)
            } else {
                queens
            });
            national.insert(ymd(5, 5));
            national.insert(rel(39));
            national.insert(rel(49));
            national.insert(rel(50));
            national.insert(ymd(12, 25));
            national.insert(ymd(12, 26));

            unofficial.insert(rel(-2));
            unofficial.insert(ymd(12, 31));
        }
        HolidayCalendar {
            national,
            unofficial,
        }
    }

    pub fn national(&self) -> &BTreeSet<NaiveDate> {
        &self.national
    }

    pub fn unofficial(&self) -> &BTreeSet<NaiveDate> {
        &self.unofficial
    }

    pub fn class_of(&self, date: NaiveDate) -> HolidayClass {
        if self.national.contains(&date) {
            HolidayClass::National
        } else if self.unofficial.contains(&date) {
            HolidayClass::Unofficial
        } else {
            HolidayClass::None
        }
    }
}

/// Western (Gregorian) Easter Sunday, anonymous Gregorian algorithm.
pub fn easter_sunday(year: i32) -> NaiveDate {
    let a = year % 19;
    let b = year / 100;
    let c = year % 100;
    let d = b / 4;
    let e = b % 4;
    let f = (b + 8) / 25;
    let g = (b - f + 1) / 3;
    let h = (19 * a + b - d - g + 15) % 30;
    let i = c / 4;
    let k = c % 4;
    let l = (32 + 2 * e + 2 * i - h - k) % 7;
    let m = (a + 11 * h + 22 * l) / 451;
    let month = (h + l - 7 * m + 114) / 31;
    let day = (h + l - 7 * m + 114) % 31 + 1;
    NaiveDate::from_ymd_opt(year, month as u32, day as u32).unwrap()
}

pub fn holiday_class(epoch: &Epoch, day: DateIndex, cal: &HolidayCalendar) -> HolidayClass {
    cal.class_of(epoch.date(day))
}

/// Epoch plus holiday calendar: everything needed to turn day indices into
/// covariates.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Calendar {
    pub epoch: Epoch,
    pub holidays: HolidayCalendar,
}

impl Calendar {
    pub fn new(epoch: Epoch, holidays: HolidayCalendar) -> Self {
        Calendar { epoch, holidays }
    }

    pub fn day(&self, day: DateIndex) -> DayInfo {
        let date = self.epoch.date(day);
        DayInfo {
            index: day,
            date,
            weekday: date.weekday(),
            holiday: self.holidays.class_of(date),
        }
    }

    pub fn date(&self, day: DateIndex) -> NaiveDate {
        self.epoch.date(day)
    }

    pub fn index(&self, date: NaiveDate) -> DateIndex {
        self.epoch.index(date)
    }
}

/// Calendar attributes of one day.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DayInfo {
    pub index: DateIndex,
    pub date: NaiveDate,
    pub weekday: Weekday,
    pub holiday: HolidayClass,
}

/// Precomputed [`DayInfo`] for a contiguous range of days.
#[derive(Debug, Clone)]
pub struct DayTable {
    first: DateIndex,
    days: Vec<DayInfo>,
}

impl DayTable {
    pub fn new(cal: &Calendar, first: DateIndex, last: DateIndex) -> Self {
        let days = (first.0..=last.0).map(|d| cal.day(DateIndex(d))).collect();
        DayTable { first, days }
    }

    pub fn get(&self, day: DateIndex) -> &DayInfo {
        &self.days[(day.0 - self.first.0) as usize]
    }

    pub fn first(&self) -> DateIndex {
        self.first
    }

    pub fn last(&self) -> DateIndex {
        self.first + (self.days.len() as i32 - 1)
    }
}

fn default_dom_reference() -> u32 {
    2
}

fn default_month_reference() -> u32 {
    1
}

fn default_weekday_reference() -> Weekday {
    Weekday::Mon
}

/// One block of the exposure regression.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Effect {
    /// A single always-on column: the overall exposure level.
    Intercept,
    OccurrenceDayOfMonth {
        #[serde(default = "default_dom_reference")]
        reference: u32,
    },
    OccurrenceMonth {
        #[serde(default = "default_month_reference")]
        reference: u32,
    },
    /// National and unofficial holiday indicators on the observation date.
    ReportingHoliday,
    ReportingMonth {
        #[serde(default = "default_month_reference")]
        reference: u32,
    },
    /// Observation weekday interacted with the delay: one group per delay
    /// 0..=6 and a pooled group for delays of a week or more.
    ReportingDowFirstWeek {
        #[serde(default = "default_weekday_reference")]
        reference: Weekday,
    },
    DelayBins { bins: DelayBins },
    ReportingDow {
        #[serde(default = "default_weekday_reference")]
        reference: Weekday,
    },
    /// Separate copies of `effects` for observation dates before and on/after
    /// `breakpoint`.
    BreakpointSplit {
        breakpoint: NaiveDate,
        effects: Vec<Effect>,
    },
}

const DOW_GROUPS: usize = 8;

fn weekday_level(day: Weekday, reference: Weekday) -> Option<usize> {
    let d = day.num_days_from_monday() as usize;
    let r = reference.num_days_from_monday() as usize;
    match d.cmp(&r) {
        core::cmp::Ordering::Equal => None,
        core::cmp::Ordering::Less => Some(d),
        core::cmp::Ordering::Greater => Some(d - 1),
    }
}

fn ref_level(value: u32, reference: u32) -> Option<usize> {
    match value.cmp(&reference) {
        core::cmp::Ordering::Equal => None,
        core::cmp::Ordering::Less => Some(value as usize - 1),
        core::cmp::Ordering::Greater => Some(value as usize - 2),
    }
}

const WEEKDAYS: [Weekday; 7] = [
    Weekday::Mon,
    Weekday::Tue,
    Weekday::Wed,
    Weekday::Thu,
    Weekday::Fri,
    Weekday::Sat,
    Weekday::Sun,
];

impl Effect {
    pub fn column_count(&self) -> usize {
        match self {
            Effect::Intercept => 1,
            Effect::OccurrenceDayOfMonth { .. } => 30,
            Effect::OccurrenceMonth { .. } | Effect::ReportingMonth { .. } => 11,
            Effect::ReportingHoliday => 2,
            Effect::ReportingDowFirstWeek { .. } => DOW_GROUPS * 6,
            Effect::DelayBins { bins } => bins.len() - 1,
            Effect::ReportingDow { .. } => 6,
            Effect::BreakpointSplit { effects, .. } => {
                2 * effects.iter().map(Effect::column_count).sum::<usize>()
            }
        }
    }

    fn validate(&self, nested: bool) -> Result<(), SpecError> {
        match self {
            Effect::OccurrenceDayOfMonth { reference } if !(1..=31).contains(reference) => {
                Err(SpecError::BadReference(format!("day-of-month {reference}")))
            }
            Effect::OccurrenceMonth { reference } | Effect::ReportingMonth { reference }
                if !(1..=12).contains(reference) =>
            {
                Err(SpecError::BadReference(format!("month {reference}")))
            }
            Effect::BreakpointSplit { .. } if nested => Err(SpecError::NestedSplit),
            Effect::BreakpointSplit { effects, .. } => {
                effects.iter().try_for_each(|e| e.validate(true))
            }
            _ => Ok(()),
        }
    }

    fn push_names(&self, prefix: &str, out: &mut Vec<String>) {
        match self {
            Effect::Intercept => out.push(format!("{prefix}intercept")),
            Effect::OccurrenceDayOfMonth { reference } => out.extend(
                (1..=31u32)
                    .filter(|d| d != reference)
                    .map(|d| format!("{prefix}occ_dom[{d}]")),
            ),
            Effect::OccurrenceMonth { reference } => out.extend(
                (1..=12u32)
                    .filter(|m| m != reference)
                    .map(|m| format!("{prefix}occ_month[{m}]")),
            ),
            Effect::ReportingHoliday => {
                out.push(format!("{prefix}holiday[national]"));
                out.push(format!("{prefix}holiday[unofficial]"));
            }
            Effect::ReportingMonth { reference } => out.extend(
                (1..=12u32)
                    .filter(|m| m != reference)
                    .map(|m| format!("{prefix}rep_month[{m}]")),
            ),
            Effect::ReportingDowFirstWeek { reference } => {
                for group in 0..DOW_GROUPS {
                    let g = if group == DOW_GROUPS - 1 {
                        String::from("d7+")
                    } else {
                        format!("d{group}")
                    };
                    for w in WEEKDAYS.iter().filter(|w| *w != reference) {
                        out.push(format!("{prefix}dow_first_week[{w},{g}]"));
                    }
                }
            }
            Effect::DelayBins { bins } => {
                for b in 1..bins.len() {
                    out.push(format!("{prefix}delay[{}]", bins.label(b)));
                }
            }
            Effect::ReportingDow { reference } => out.extend(
                WEEKDAYS
                    .iter()
                    .filter(|w| *w != reference)
                    .map(|w| format!("{prefix}dow[{w}]")),
            ),
            Effect::BreakpointSplit { effects, .. } => {
                for (tag, _) in [("pre:", 0), ("post:", 1)] {
                    let p = format!("{prefix}{tag}");
                    for e in effects {
                        e.push_names(&p, out);
                    }
                }
            }
        }
    }

    /// Appends the active (value 1) columns of this block, shifted by `base`.
    fn encode(&self, base: usize, t: &DayInfo, s: &DayInfo, out: &mut Vec<u16>) {
        let delay = s.index.days_since(t.index);
        let mut push = |offset: usize| out.push((base + offset) as u16);
        match self {
            Effect::Intercept => push(0),
            Effect::OccurrenceDayOfMonth { reference } => {
                if let Some(l) = ref_level(t.date.day(), *reference) {
                    push(l)
                }
            }
            Effect::OccurrenceMonth { reference } => {
                if let Some(l) = ref_level(t.date.month(), *reference) {
                    push(l)
                }
            }
            Effect::ReportingHoliday => match s.holiday {
                HolidayClass::None => {}
                HolidayClass::National => push(0),
                HolidayClass::Unofficial => push(1),
            },
            Effect::ReportingMonth { reference } => {
                if let Some(l) = ref_level(s.date.month(), *reference) {
                    push(l)
                }
            }
            Effect::ReportingDowFirstWeek { reference } => {
                let group = (delay as usize).min(DOW_GROUPS - 1);
                if let Some(l) = weekday_level(s.weekday, *reference) {
                    push(group * 6 + l)
                }
            }
            Effect::DelayBins { bins } => {
                let b = bins.bin_of(delay as u32);
                if b > 0 {
                    push(b - 1)
                }
            }
            Effect::ReportingDow { reference } => {
                if let Some(l) = weekday_level(s.weekday, *reference) {
                    push(l)
                }
            }
            Effect::BreakpointSplit {
                breakpoint,
                effects,
            } => {
                let inner: usize = effects.iter().map(Effect::column_count).sum();
                let mut offset = if s.date < *breakpoint { base } else { base + inner };
                for e in effects {
                    e.encode(offset, t, s, out);
                    offset += e.column_count();
                }
            }
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SpecError {
    #[error("invalid reference level: {0}")]
    BadReference(String),
    #[error("breakpoint splits cannot be nested")]
    NestedSplit,
    #[error("covariate specification has {0} columns; at most 65535 are supported")]
    TooManyColumns(usize),
}

/// Ordered list of effects making up the exposure regression
/// `log α_{t,s} = x'_{t,s} γ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SpecRepr", into = "SpecRepr")]
pub struct CovariateSpec {
    effects: Vec<Effect>,
    offsets: Vec<usize>,
    columns: usize,
}

#[derive(Serialize, Deserialize)]
struct SpecRepr {
    effects: Vec<Effect>,
}

impl TryFrom<SpecRepr> for CovariateSpec {
    type Error = SpecError;
    fn try_from(r: SpecRepr) -> Result<Self, SpecError> {
        CovariateSpec::new(r.effects)
    }
}

impl From<CovariateSpec> for SpecRepr {
    fn from(s: CovariateSpec) -> Self {
        SpecRepr { effects: s.effects }
    }
}

impl CovariateSpec {
    pub fn new(effects: Vec<Effect>) -> Result<Self, SpecError> {
        for e in &effects {
            e.validate(false)?;
        }
        let mut offsets = Vec::with_capacity(effects.len());
        let mut columns = 0;
        for e in &effects {
            offsets.push(columns);
            columns += e.column_count();
        }
        if columns > u16::MAX as usize {
            return Err(SpecError::TooManyColumns(columns));
        }
        Ok(CovariateSpec {
            effects,
            offsets,
            columns,
        })
    }

    pub fn effects(&self) -> &[Effect] {
        &self.effects
    }

    pub fn column_count(&self) -> usize {
        self.columns
    }

    pub fn column_names(&self) -> Vec<String> {
        let mut out = Vec::with_capacity(self.columns);
        for e in &self.effects {
            e.push_names("", &mut out);
        }
        out
    }

    /// Column range occupied by effect `i`.
    pub fn effect_columns(&self, i: usize) -> core::ops::Range<usize> {
        self.offsets[i]..self.offsets[i] + self.effects[i].column_count()
    }

    /// Sparse encoding: indices of the columns equal to one, ascending
    /// within each effect block.
    pub fn active_columns(&self, t: &DayInfo, s: &DayInfo, out: &mut Vec<u16>) {
        out.clear();
        for (e, &base) in self.effects.iter().zip(&self.offsets) {
            e.encode(base, t, s, out);
        }
    }

    pub fn delay_bins(&self) -> Option<(usize, &DelayBins)> {
        self.effects.iter().enumerate().find_map(|(i, e)| match e {
            Effect::DelayBins { bins } => Some((self.offsets[i], bins)),
            _ => None,
        })
    }

    /// True when no column depends on the occurrence date or the delay, so
    /// `α_{t,s}` is a function of `s` alone.
    pub fn observation_only(&self) -> bool {
        fn check(e: &Effect) -> bool {
            match e {
                Effect::Intercept
                | Effect::ReportingHoliday
                | Effect::ReportingMonth { .. }
                | Effect::ReportingDow { .. } => true,
                Effect::OccurrenceDayOfMonth { .. }
                | Effect::OccurrenceMonth { .. }
                | Effect::ReportingDowFirstWeek { .. }
                | Effect::DelayBins { .. } => false,
                Effect::BreakpointSplit { effects, .. } => effects.iter().all(check),
            }
        }
        self.effects.iter().all(check)
    }

    pub fn intercept_column(&self) -> Option<usize> {
        self.effects
            .iter()
            .position(|e| matches!(e, Effect::Intercept))
            .map(|i| self.offsets[i])
    }
}

/// Dense covariate vector `x_{t,s}`; categorical blocks are 0/1 indicators.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignVector {
    pub values: Vec<f64>,
}

impl DesignVector {
    pub fn dot(&self, gamma: &[f64]) -> f64 {
        self.values.iter().zip(gamma).map(|(x, g)| x * g).sum()
    }
}

pub fn design_vector(
    t: DateIndex,
    s: DateIndex,
    spec: &CovariateSpec,
    cal: &Calendar,
) -> Result<DesignVector, CalendarError> {
    if s < t {
        return Err(CalendarError::ReversedPair {
            occurrence: t,
            observation: s,
        });
    }
    let mut active = Vec::new();
    spec.active_columns(&cal.day(t), &cal.day(s), &mut active);
    let mut values = alloc::vec![0.0; spec.column_count()];
    for c in active {
        values[c as usize] = 1.0;
    }
    Ok(DesignVector { values })
}
