//! Observation exposures, the time change `φ_t` and the time-changed delay
//! distribution `Ũ`.
//!
//! An event from occurrence date `t` observed on `s` has probability
//!
//! ```text
//! p_{t,s} = F(φ_t(s - t + 1)) - F(φ_t(s - t)),   φ_t(d) = Σ_{i<d} α_{t,t+i}
//! ```
//!
//! with `α_{t,s} = exp(x'_{t,s} γ)` and `F` the CDF of `Ũ`.

use alloc::vec::Vec;
use core::f64::consts::FRAC_1_SQRT_2;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::calendar::{Calendar, CovariateSpec, DateIndex, DayTable};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TimeChangeError {
    #[error("distribution evaluated at negative time {0}")]
    NegativeArgument(f64),
    #[error("delay {delay} lies beyond the schedule horizon of {horizon} days")]
    BeyondHorizon { delay: i64, horizon: usize },
    #[error("coefficient vector has {got} entries but the covariate specification has {expected} columns")]
    LengthMismatch { expected: usize, got: usize },
    #[error("observation date {observation} precedes occurrence date {occurrence}")]
    ReversedPair {
        occurrence: DateIndex,
        observation: DateIndex,
    },
    #[error("lognormal sigma must be positive and finite, got {0}")]
    BadSigma(f64),
}

/// Law of the time-changed delay `Ũ`. The scale is fixed (unit rate,
/// `μ = 0`) because the exposures already carry it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TimeChangedDistribution {
    Exponential,
    #[serde(rename = "lognormal")]
    LogNormal { sigma: f64 },
}

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

fn std_normal_pdf(z: f64) -> f64 {
    INV_SQRT_2PI * libm::exp(-0.5 * z * z)
}

fn std_normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z * FRAC_1_SQRT_2)
}

impl TimeChangedDistribution {
    pub fn lognormal(sigma: f64) -> Result<Self, TimeChangeError> {
        if sigma > 0.0 && sigma.is_finite() {
            Ok(TimeChangedDistribution::LogNormal { sigma })
        } else {
            Err(TimeChangeError::BadSigma(sigma))
        }
    }

    pub fn sigma(&self) -> Option<f64> {
        match self {
            TimeChangedDistribution::Exponential => None,
            TimeChangedDistribution::LogNormal { sigma } => Some(*sigma),
        }
    }

    /// Number of free distribution parameters (0 or 1).
    pub fn parameter_count(&self) -> usize {
        self.sigma().map_or(0, |_| 1)
    }

    fn check(u: f64) -> Result<f64, TimeChangeError> {
        if u < 0.0 {
            Err(TimeChangeError::NegativeArgument(u))
        } else {
            Ok(u)
        }
    }

    pub fn cdf(&self, u: f64) -> Result<f64, TimeChangeError> {
        Self::check(u).map(|u| self.cdf_unchecked(u))
    }

    pub fn pdf(&self, u: f64) -> Result<f64, TimeChangeError> {
        Self::check(u).map(|u| self.pdf_unchecked(u))
    }

    pub fn pdf_derivative(&self, u: f64) -> Result<f64, TimeChangeError> {
        Self::check(u).map(|u| self.pdf_derivative_unchecked(u))
    }

    pub fn survival(&self, u: f64) -> Result<f64, TimeChangeError> {
        Self::check(u).map(|u| self.sf_unchecked(u))
    }

    pub(crate) fn cdf_unchecked(&self, u: f64) -> f64 {
        match *self {
            TimeChangedDistribution::Exponential => -libm::expm1(-u),
            TimeChangedDistribution::LogNormal { sigma } => {
                if u <= 0.0 {
                    0.0
                } else if u.is_infinite() {
                    1.0
                } else {
                    std_normal_cdf(libm::log(u) / sigma)
                }
            }
        }
    }

    pub(crate) fn sf_unchecked(&self, u: f64) -> f64 {
        match *self {
            TimeChangedDistribution::Exponential => libm::exp(-u),
            TimeChangedDistribution::LogNormal { sigma } => {
                if u <= 0.0 {
                    1.0
                } else if u.is_infinite() {
                    0.0
                } else {
                    std_normal_cdf(-libm::log(u) / sigma)
                }
            }
        }
    }

    pub(crate) fn pdf_unchecked(&self, u: f64) -> f64 {
        match *self {
            TimeChangedDistribution::Exponential => libm::exp(-u),
            TimeChangedDistribution::LogNormal { sigma } => {
                if u <= 0.0 || u.is_infinite() {
                    0.0
                } else {
                    std_normal_pdf(libm::log(u) / sigma) / (u * sigma)
                }
            }
        }
    }

    pub(crate) fn pdf_derivative_unchecked(&self, u: f64) -> f64 {
        match *self {
            TimeChangedDistribution::Exponential => -libm::exp(-u),
            TimeChangedDistribution::LogNormal { sigma } => {
                if u <= 0.0 || u.is_infinite() {
                    0.0
                } else {
                    let z = libm::log(u) / sigma;
                    -std_normal_pdf(z) * (z + sigma) / (u * u * sigma * sigma)
                }
            }
        }
    }

    /// `P(a <= Ũ < b)` for `0 <= a <= b`, evaluated on whichever tail keeps
    /// the subtraction well conditioned.
    pub(crate) fn interval_unchecked(&self, a: f64, b: f64) -> f64 {
        match *self {
            TimeChangedDistribution::Exponential => {
                if b.is_infinite() {
                    libm::exp(-a)
                } else {
                    libm::exp(-a) * -libm::expm1(-(b - a))
                }
            }
            TimeChangedDistribution::LogNormal { .. } => {
                let fb = self.cdf_unchecked(b);
                if fb <= 0.5 {
                    fb - self.cdf_unchecked(a)
                } else {
                    self.sf_unchecked(a) - self.sf_unchecked(b)
                }
            }
        }
    }

    /// `∂F/∂σ`, `∂²F/∂σ²` and `∂f/∂σ` at `u`; all zero for the exponential.
    pub(crate) fn sigma_derivatives(&self, u: f64) -> (f64, f64, f64) {
        match *self {
            TimeChangedDistribution::Exponential => (0.0, 0.0, 0.0),
            TimeChangedDistribution::LogNormal { sigma } => {
                if u <= 0.0 || u.is_infinite() {
                    return (0.0, 0.0, 0.0);
                }
                let z = libm::log(u) / sigma;
                let phi = std_normal_pdf(z);
                let s2 = sigma * sigma;
                (
                    -z * phi / sigma,
                    z * phi * (2.0 - z * z) / s2,
                    phi * (z * z - 1.0) / (u * s2),
                )
            }
        }
    }

    /// A point `u` with `1 - F(u) < tol` and `1 - F(u')` at least `tol`
    /// for all `u'` a few ulps below it. Bisection keeps the returned end
    /// strictly inside the tail.
    pub(crate) fn tail_point(&self, tol: f64) -> f64 {
        let (mut lo, mut hi) = (0.0, 1.0);
        while self.sf_unchecked(hi) >= tol {
            lo = hi;
            hi *= 2.0;
            if !hi.is_finite() {
                return f64::INFINITY;
            }
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.sf_unchecked(mid) >= tol {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        hi
    }

    /// Mean of `Ũ`.
    pub fn mean(&self) -> f64 {
        match *self {
            TimeChangedDistribution::Exponential => 1.0,
            TimeChangedDistribution::LogNormal { sigma } => libm::exp(0.5 * sigma * sigma),
        }
    }
}

impl Default for TimeChangedDistribution {
    fn default() -> Self {
        TimeChangedDistribution::Exponential
    }
}

/// Covariate specification plus coefficients: `α_{t,s} = exp(x'_{t,s} γ)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExposureModel {
    pub spec: CovariateSpec,
    pub gamma: Vec<f64>,
}

impl ExposureModel {
    pub fn new(spec: CovariateSpec, gamma: Vec<f64>) -> Result<Self, TimeChangeError> {
        if gamma.len() != spec.column_count() {
            return Err(TimeChangeError::LengthMismatch {
                expected: spec.column_count(),
                got: gamma.len(),
            });
        }
        Ok(ExposureModel { spec, gamma })
    }

    /// All coefficients zero: every exposure equals one.
    pub fn zero(spec: CovariateSpec) -> Self {
        let gamma = alloc::vec![0.0; spec.column_count()];
        ExposureModel { spec, gamma }
    }

    pub fn exposure(
        &self,
        t: DateIndex,
        s: DateIndex,
        cal: &Calendar,
    ) -> Result<f64, TimeChangeError> {
        if s < t {
            return Err(TimeChangeError::ReversedPair {
                occurrence: t,
                observation: s,
            });
        }
        let mut active = Vec::new();
        self.spec.active_columns(&cal.day(t), &cal.day(s), &mut active);
        Ok(self.exposure_from_active(&active))
    }

    pub(crate) fn exposure_from_active(&self, active: &[u16]) -> f64 {
        libm::exp(active.iter().map(|&c| self.gamma[c as usize]).sum::<f64>())
    }
}

/// Tail cut-off for the infinite delay support.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailRule {
    /// Stop at the first horizon `H` with `1 - F(φ_t(H)) < tolerance`.
    pub tolerance: f64,
    /// Hard cap on `H` in days.
    pub max_days: usize,
}

impl Default for TailRule {
    fn default() -> Self {
        TailRule {
            tolerance: 1e-6,
            max_days: 3650,
        }
    }
}

/// Exposures `α_{t,t}, α_{t,t+1}, …` for one occurrence date together with
/// their running sums `φ_t(0..=horizon)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExposureSchedule {
    start: DateIndex,
    alphas: Vec<f64>,
    phi: Vec<f64>,
}

impl ExposureSchedule {
    pub fn from_alphas(start: DateIndex, alphas: Vec<f64>) -> Self {
        let mut phi = Vec::with_capacity(alphas.len() + 1);
        let mut acc = 0.0;
        phi.push(acc);
        for a in &alphas {
            acc += a;
            phi.push(acc);
        }
        ExposureSchedule { start, alphas, phi }
    }

    /// Schedule covering delays `0..days`.
    pub fn build(model: &ExposureModel, t: DateIndex, days: usize, cal: &Calendar) -> Self {
        let mut sched = ExposureSchedule::from_alphas(t, Vec::with_capacity(days));
        sched.extend(model, cal, days);
        sched
    }

    /// Schedule extended until the tail rule is met or its cap is reached.
    pub fn with_tail_rule(
        model: &ExposureModel,
        t: DateIndex,
        dist: &TimeChangedDistribution,
        cal: &Calendar,
        rule: TailRule,
    ) -> Self {
        let t_info = cal.day(t);
        let mut active = Vec::new();
        Self::grow(
            t,
            |s| {
                model.spec.active_columns(&t_info, &cal.day(s), &mut active);
                model.exposure_from_active(&active)
            },
            {
                let u = dist.tail_point(rule.tolerance);
                move |sched: &Self| sched.tail_open(u, rule)
            },
        )
    }

    /// As [`with_tail_rule`](Self::with_tail_rule), reading calendar
    /// attributes from a precomputed table, and covering at least
    /// `min_horizon` delays.
    pub fn with_tail_rule_in(
        model: &ExposureModel,
        t: DateIndex,
        dist: &TimeChangedDistribution,
        days: &DayTable,
        rule: TailRule,
        min_horizon: usize,
    ) -> Self {
        let t_info = *days.get(t);
        let mut active = Vec::new();
        Self::with_tail_rule_by(t, dist, rule, min_horizon, |s| {
            model.spec.active_columns(&t_info, days.get(s), &mut active);
            model.exposure_from_active(&active)
        })
    }

    /// Tail-rule schedule from an arbitrary exposure function `s ↦ α_{t,s}`.
    pub fn with_tail_rule_by(
        t: DateIndex,
        dist: &TimeChangedDistribution,
        rule: TailRule,
        min_horizon: usize,
        alpha: impl FnMut(DateIndex) -> f64,
    ) -> Self {
        let u = dist.tail_point(rule.tolerance);
        Self::grow(t, alpha, |sched| {
            sched.horizon() < min_horizon || sched.tail_open(u, rule)
        })
    }

    /// `u` is the distribution's tail point for the rule's tolerance.
    fn tail_open(&self, u: f64, rule: TailRule) -> bool {
        self.horizon() < rule.max_days && self.phi[self.horizon()] < u
    }

    fn grow(
        t: DateIndex,
        mut alpha: impl FnMut(DateIndex) -> f64,
        more: impl Fn(&Self) -> bool,
    ) -> Self {
        let mut sched = ExposureSchedule::from_alphas(t, Vec::new());
        while more(&sched) {
            let s = t + sched.horizon() as i32;
            sched.push(alpha(s));
        }
        sched
    }

    fn push(&mut self, alpha: f64) {
        let last = *self.phi.last().unwrap();
        self.alphas.push(alpha);
        self.phi.push(last + alpha);
    }

    /// Appends exposures until the schedule covers `days` delays.
    pub fn extend(&mut self, model: &ExposureModel, cal: &Calendar, days: usize) {
        let t_info = cal.day(self.start);
        let mut active = Vec::new();
        while self.horizon() < days {
            let s = self.start + self.horizon() as i32;
            model.spec.active_columns(&t_info, &cal.day(s), &mut active);
            self.push(model.exposure_from_active(&active));
        }
    }

    pub fn start(&self) -> DateIndex {
        self.start
    }

    /// Number of exposures held; `φ_t(d)` is available for `d <= horizon`.
    pub fn horizon(&self) -> usize {
        self.alphas.len()
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alphas
    }

    pub fn phi_values(&self) -> &[f64] {
        &self.phi
    }

    /// `φ_t(d) = Σ_{i=1}^{d} α_{t,t+i-1}`.
    pub fn phi(&self, d: i64) -> Result<f64, TimeChangeError> {
        if d < 0 || d as usize > self.horizon() {
            return Err(TimeChangeError::BeyondHorizon {
                delay: d,
                horizon: self.horizon(),
            });
        }
        Ok(self.phi[d as usize])
    }
}

/// `p_{t,s} = F(φ_t(s-t+1)) - F(φ_t(s-t))`.
pub fn cell_probability(
    t: DateIndex,
    s: DateIndex,
    sched: &ExposureSchedule,
    dist: &TimeChangedDistribution,
) -> Result<f64, TimeChangeError> {
    if s < t {
        return Err(TimeChangeError::ReversedPair {
            occurrence: t,
            observation: s,
        });
    }
    let d = (s.days_since(t) - sched.start().days_since(t)) as i64;
    let lo = sched.phi(d)?;
    let hi = sched.phi(d + 1)?;
    Ok(dist.interval_unchecked(lo, hi))
}

/// `p_t^Obs(τ) = F(φ_t(τ - t + 1))`, the probability that an event from `t`
/// is observed by `tau`.
pub fn observed_probability(
    t: DateIndex,
    tau: DateIndex,
    sched: &ExposureSchedule,
    dist: &TimeChangedDistribution,
) -> Result<f64, TimeChangeError> {
    if tau < t {
        return Err(TimeChangeError::ReversedPair {
            occurrence: t,
            observation: tau,
        });
    }
    let d = tau.days_since(t) as i64 + 1;
    Ok(dist.cdf_unchecked(sched.phi(d)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calendar::{Effect, Epoch, HolidayCalendar};
    use alloc::vec;
    use approx::assert_relative_eq;
    use chrono::{NaiveDate, Weekday};
    use proptest::prelude::*;

    fn scenario_one_alphas(cal: &Calendar, t: DateIndex, days: usize) -> Vec<f64> {
        (0..days as i32)
            .map(|d| {
                let day = cal.day(t + d);
                let mut a = 0.10;
                if day.weekday == Weekday::Sat {
                    a *= 0.20;
                }
                if day.weekday == Weekday::Sun {
                    a *= 0.01;
                }
                match day.holiday {
                    crate::calendar::HolidayClass::National => a *= 0.01,
                    crate::calendar::HolidayClass::Unofficial => a *= 0.20,
                    crate::calendar::HolidayClass::None => {}
                }
                a
            })
            .collect()
    }

    fn dutch() -> Calendar {
        Calendar::new(Epoch::default(), HolidayCalendar::dutch(1996, 2010))
    }

    #[test]
    fn zero_gamma_gives_unit_exposure() {
        let cal = dutch();
        let spec = CovariateSpec::new(vec![Effect::Intercept, Effect::ReportingHoliday]).unwrap();
        let m = ExposureModel::zero(spec);
        for d in 0..10 {
            assert_eq!(m.exposure(DateIndex(4000), DateIndex(4000 + d), &cal).unwrap(), 1.0);
        }
    }

    #[test]
    fn scenario_one_weekday_values() {
        let cal = dutch();
        // Thursday 2003-10-09: Thu, Fri, Sat, Sun.
        let t = cal.index(NaiveDate::from_ymd_opt(2003, 10, 9).unwrap());
        let a = scenario_one_alphas(&cal, t, 4);
        assert_relative_eq!(a[0], 0.10);
        assert_relative_eq!(a[2], 0.02);
        assert_relative_eq!(a[3], 0.001);
        let sched = ExposureSchedule::from_alphas(t, a);
        assert_eq!(sched.phi(0).unwrap(), 0.0);
        assert_relative_eq!(sched.phi(3).unwrap(), 0.22, max_relative = 1e-14);
        assert!(sched.phi(5).is_err());
        // Sunday national holiday: 2003-04-20 is Easter Sunday.
        let easter = cal.index(NaiveDate::from_ymd_opt(2003, 4, 20).unwrap());
        let a = scenario_one_alphas(&cal, easter, 1);
        assert_relative_eq!(a[0], 1e-5, max_relative = 1e-12);
    }

    #[test]
    fn identity_time_change() {
        let sched = ExposureSchedule::from_alphas(DateIndex(1), vec![1.0; 20]);
        for d in 0..=20 {
            assert_eq!(sched.phi(d).unwrap(), d as f64);
        }
    }

    #[test]
    fn closed_form_cell_probabilities() {
        let e = TimeChangedDistribution::Exponential;
        let t = DateIndex(10);
        let sched = ExposureSchedule::from_alphas(t, vec![0.10, 0.10, 0.02]);
        let p = cell_probability(t, t, &sched, &e).unwrap();
        assert_relative_eq!(p, 0.095_162_581_964_040_4, max_relative = 1e-12);
        let po = observed_probability(t, t, &sched, &e).unwrap();
        assert_relative_eq!(po, p, max_relative = 1e-14);
        assert_relative_eq!(e.cdf(0.22).unwrap(), 0.197_481_202_037_521_5, max_relative = 1e-12);
    }

    #[test]
    fn vanishing_exposure_gives_vanishing_probability() {
        let e = TimeChangedDistribution::Exponential;
        let t = DateIndex(1);
        for g in [-10.0, -20.0, -40.0] {
            let sched = ExposureSchedule::from_alphas(t, vec![1.0, libm::exp(g)]);
            let p = cell_probability(t, t + 1, &sched, &e).unwrap();
            assert!(p < 2.0 * libm::exp(g));
        }
    }

    #[test]
    fn distribution_values() {
        let e = TimeChangedDistribution::Exponential;
        let ln = TimeChangedDistribution::lognormal(1.0).unwrap();
        assert_relative_eq!(ln.cdf(1.0).unwrap(), 0.5, max_relative = 1e-15);
        for u in [0.1, 1.0, 3.0] {
            assert_relative_eq!(e.pdf_derivative(u).unwrap(), -libm::exp(-u));
        }
        assert!(e.cdf(-0.1).is_err());
        assert!(ln.pdf(-1.0).is_err());
        assert!(TimeChangedDistribution::lognormal(0.0).is_err());
    }

    #[test]
    fn lognormal_derivatives_match_finite_differences() {
        let sigma = 0.8;
        let d = TimeChangedDistribution::lognormal(sigma).unwrap();
        let h = 1e-6;
        for u in [0.05, 0.4, 1.0, 2.5, 9.0] {
            let fd_pdf = (d.cdf_unchecked(u + h) - d.cdf_unchecked(u - h)) / (2.0 * h);
            assert_relative_eq!(d.pdf_unchecked(u), fd_pdf, max_relative = 1e-7);
            let fd_dpdf = (d.pdf_unchecked(u + h) - d.pdf_unchecked(u - h)) / (2.0 * h);
            assert_relative_eq!(d.pdf_derivative_unchecked(u), fd_dpdf, max_relative = 1e-6, epsilon = 1e-9);
            let up = TimeChangedDistribution::lognormal(sigma + h).unwrap();
            let dn = TimeChangedDistribution::lognormal(sigma - h).unwrap();
            let (ds, d2s, dus) = d.sigma_derivatives(u);
            let fd_s = (up.cdf_unchecked(u) - dn.cdf_unchecked(u)) / (2.0 * h);
            assert_relative_eq!(ds, fd_s, max_relative = 1e-6, epsilon = 1e-10);
            let fd_ss = (up.sigma_derivatives(u).0 - dn.sigma_derivatives(u).0) / (2.0 * h);
            assert_relative_eq!(d2s, fd_ss, max_relative = 1e-5, epsilon = 1e-9);
            let fd_us = (up.pdf_unchecked(u) - dn.pdf_unchecked(u)) / (2.0 * h);
            assert_relative_eq!(dus, fd_us, max_relative = 1e-5, epsilon = 1e-9);
        }
    }

    #[test]
    fn unit_exponential_identity_time_change_has_no_calendar_dependence() {
        let cal = dutch();
        let spec = CovariateSpec::new(vec![
            Effect::ReportingDow { reference: Weekday::Mon },
            Effect::ReportingHoliday,
        ])
        .unwrap();
        let m = ExposureModel::zero(spec);
        let e = TimeChangedDistribution::Exponential;
        for t in [3000, 3001, 3005] {
            let t = DateIndex(t);
            let sched = ExposureSchedule::build(&m, t, 30, &cal);
            for d in 0..29 {
                let p = cell_probability(t, t + d, &sched, &e).unwrap();
                let expect = libm::exp(-(d as f64)) * (1.0 - libm::exp(-1.0));
                assert_relative_eq!(p, expect, max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn tail_rule_reaches_tolerance() {
        let cal = dutch();
        let spec = CovariateSpec::new(vec![Effect::Intercept]).unwrap();
        let m = ExposureModel::new(spec, vec![libm::log(0.1)]).unwrap();
        for dist in [
            TimeChangedDistribution::Exponential,
            TimeChangedDistribution::lognormal(1.0).unwrap(),
        ] {
            let sched = ExposureSchedule::with_tail_rule(&m, DateIndex(5000), &dist, &cal, TailRule::default());
            let h = sched.horizon();
            assert!(dist.sf_unchecked(sched.phi(h as i64).unwrap()) < 1e-6);
            assert!(dist.sf_unchecked(sched.phi(h as i64 - 1).unwrap()) >= 1e-6);
        }
    }

    fn alphas() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-6.0..2.0f64, 1..60).prop_map(|v| v.into_iter().map(libm::exp).collect())
    }

    proptest! {
        #[test]
        fn telescoping(a in alphas(), sigma in 0.3..2.0f64, lognormal in any::<bool>()) {
            let dist = if lognormal {
                TimeChangedDistribution::lognormal(sigma).unwrap()
            } else {
                TimeChangedDistribution::Exponential
            };
            let t = DateIndex(7);
            let n = a.len() as i32;
            let sched = ExposureSchedule::from_alphas(t, a);
            let mut acc = 0.0;
            let mut prev = 0.0;
            for d in 0..n {
                acc += cell_probability(t, t + d, &sched, &dist).unwrap();
                let obs = observed_probability(t, t + d, &sched, &dist).unwrap();
                prop_assert!((acc - obs).abs() < 1e-12);
                prop_assert!(obs >= prev);
                prev = obs;
            }
        }

        #[test]
        fn scaling_degeneracy(a in alphas(), c in 0.1..10.0f64) {
            // Scaling all exposures by c and Ũ by c leaves p_{t,s} unchanged.
            let t = DateIndex(1);
            let scaled: Vec<f64> = a.iter().map(|x| x * c).collect();
            let base = ExposureSchedule::from_alphas(t, a.clone());
            let big = ExposureSchedule::from_alphas(t, scaled);
            let e = TimeChangedDistribution::Exponential;
            for d in 0..a.len() as i64 {
                let p = cell_probability(t, t + d as i32, &base, &e).unwrap();
                let lo = big.phi(d).unwrap() / c;
                let hi = big.phi(d + 1).unwrap() / c;
                let q = libm::exp(-lo) - libm::exp(-hi);
                prop_assert!((p - q).abs() < 1e-12);
            }
        }
    }
}
