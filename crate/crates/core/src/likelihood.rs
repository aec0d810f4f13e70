//! Loglikelihood of the right-truncated count triangle, its analytic score
//! and Hessian, and the Newton-Raphson fit.
//!
//! The objective is
//!
//! ```text
//! ℓ(γ) = Σ_t Σ_s N_{t,s} ln p_{t,s} - Σ_t N_t^Obs(τ) ln p_t^Obs(τ)
//! ```
//!
//! Every cell `(t, s)` with `s <= τ` is reduced to the signature of its
//! covariate vector (the sorted list of active indicator columns), so each
//! evaluation computes one exponential per distinct signature.
//!
//! Derivatives use `∂φ_t(d)/∂γ = Σ_{i<d} α_{t,t+i} x_{t,t+i}` and
//! `∂²φ_t(d)/∂γ∂γ' = Σ_{i<d} α_{t,t+i} x x'`. The second-order sums are not
//! formed per cell: the coefficients multiplying `∂φ_t(j)` are accumulated
//! per delay and turned into per-signature weights by one backward pass.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::binning::hazard_table;
use crate::calendar::{Calendar, CovariateSpec, DateIndex, DayTable};
use crate::counts::CountTriangle;
use crate::timechange::{ExposureModel, TimeChangedDistribution};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LikelihoodError {
    #[error("parameter vector has {got} entries, expected {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("cell ({occurrence}, {observation}) has events but zero probability")]
    Infeasible {
        occurrence: DateIndex,
        observation: DateIndex,
    },
    #[error("columns are not identifiable from the data window: {}", columns.join(", "))]
    NonIdentifiable { columns: Vec<String> },
    #[error("the observed information matrix is not positive definite")]
    NotPositiveDefinite,
    #[error("lognormal sigma must be positive and finite, got {0}")]
    BadSigma(f64),
}

struct Row {
    t: DateIndex,
    /// Signature id for delays `0..=τ-t`.
    ids: Vec<u32>,
    /// Non-zero cells `(delay, count)` sorted by delay.
    cells: Vec<(u32, f64)>,
    observed: f64,
    /// `(signature, multiplicity)` over all delays of the row.
    compressed: Vec<(u32, f64)>,
}

/// A count triangle encoded against a covariate specification.
pub struct TriangleDesign {
    columns: usize,
    column_names: Vec<String>,
    signatures: Vec<Vec<u16>>,
    rows: Vec<Row>,
    eval_date: DateIndex,
    /// Events observed at each signature.
    sig_events: Vec<f64>,
    /// Events observed later than a cell of each signature (same `t`).
    sig_at_risk: Vec<f64>,
}

impl TriangleDesign {
    pub fn new(triangle: &CountTriangle, spec: &CovariateSpec, cal: &Calendar) -> Self {
        let tau = triangle.eval_date();
        let days = DayTable::new(cal, triangle.first_date(), tau);
        let mut intern: BTreeMap<Vec<u16>, u32> = BTreeMap::new();
        let mut signatures: Vec<Vec<u16>> = Vec::new();
        let mut active = Vec::new();
        let mut rows = Vec::new();
        for (t, cells) in triangle.rows() {
            let t_info = days.get(t);
            let horizon = tau.days_since(t) as usize + 1;
            let mut ids = Vec::with_capacity(horizon);
            for d in 0..horizon {
                spec.active_columns(t_info, days.get(t + d as i32), &mut active);
                let id = match intern.get(active.as_slice()) {
                    Some(&id) => id,
                    None => {
                        let id = signatures.len() as u32;
                        signatures.push(active.clone());
                        intern.insert(active.clone(), id);
                        id
                    }
                };
                ids.push(id);
            }
            let mut counts: BTreeMap<u32, f64> = BTreeMap::new();
            for &id in &ids {
                *counts.entry(id).or_insert(0.0) += 1.0;
            }
            rows.push(Row {
                t,
                ids,
                cells: cells.iter().map(|&(d, n)| (d, n as f64)).collect(),
                observed: triangle.row_total(t) as f64,
                compressed: counts.into_iter().collect(),
            });
        }
        let mut sig_events = vec![0.0; signatures.len()];
        let mut sig_at_risk = vec![0.0; signatures.len()];
        for row in &rows {
            let mut later = row.observed;
            let mut next = 0;
            for (d, &id) in row.ids.iter().enumerate() {
                if let Some(&(cd, n)) = row.cells.get(next) {
                    if cd as usize == d {
                        sig_events[id as usize] += n;
                        later -= n;
                        next += 1;
                    }
                }
                sig_at_risk[id as usize] += later;
            }
        }
        TriangleDesign {
            columns: spec.column_count(),
            column_names: spec.column_names(),
            signatures,
            rows,
            eval_date: tau,
            sig_events,
            sig_at_risk,
        }
    }

    pub fn column_count(&self) -> usize {
        self.columns
    }

    pub fn column_names(&self) -> &[String] {
        &self.column_names
    }

    pub fn signature_count(&self) -> usize {
        self.signatures.len()
    }

    pub fn eval_date(&self) -> DateIndex {
        self.eval_date
    }

    /// Rejects designs with a column that is never active or that is a
    /// linear combination of earlier columns over the cells in the window.
    /// The error lists each dependent column and the columns it depends on.
    pub fn check_identifiable(&self) -> Result<(), LikelihoodError> {
        let p = self.columns;
        let mut gram = DMatrix::<f64>::zeros(p, p);
        for sig in &self.signatures {
            for &a in sig {
                for &b in sig {
                    gram[(a as usize, b as usize)] += 1.0;
                }
            }
        }
        let mut kept: Vec<usize> = Vec::new();
        let mut bad: Vec<String> = Vec::new();
        for j in 0..p {
            if gram[(j, j)] == 0.0 {
                bad.push(self.column_names[j].clone());
                continue;
            }
            if !kept.is_empty() {
                let k = kept.len();
                let sub = DMatrix::from_fn(k, k, |a, b| gram[(kept[a], kept[b])]);
                let rhs = DVector::from_fn(k, |a, _| gram[(kept[a], j)]);
                if let Some(chol) = sub.cholesky() {
                    let c = chol.solve(&rhs);
                    let residual = gram[(j, j)] - rhs.dot(&c);
                    if residual <= 1e-9 * gram[(j, j)] {
                        let mut names = String::from(self.column_names[j].as_str());
                        names.push_str(" ~");
                        for (a, &col) in kept.iter().enumerate() {
                            if c[a].abs() > 1e-8 {
                                names.push(' ');
                                names.push_str(&self.column_names[col]);
                            }
                        }
                        bad.push(names);
                        continue;
                    }
                }
            }
            kept.push(j);
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(LikelihoodError::NonIdentifiable { columns: bad })
        }
    }

    fn alphas(&self, gamma: &[f64]) -> Vec<f64> {
        self.signatures
            .iter()
            .map(|sig| libm::exp(sig.iter().map(|&c| gamma[c as usize]).sum::<f64>()))
            .collect()
    }

    fn check_len(&self, gamma: &[f64]) -> Result<(), LikelihoodError> {
        if gamma.len() != self.columns {
            return Err(LikelihoodError::LengthMismatch {
                expected: self.columns,
                got: gamma.len(),
            });
        }
        Ok(())
    }

    /// Generic evaluation for any time-changed distribution. Parameters are
    /// `γ` followed by `σ` for the lognormal.
    pub fn evaluate(
        &self,
        gamma: &[f64],
        dist: &TimeChangedDistribution,
        truncation: bool,
        order: Order,
    ) -> Result<Evaluation, LikelihoodError> {
        self.check_len(gamma)?;
        let p = self.columns;
        let np = p + dist.parameter_count();
        let alpha = self.alphas(gamma);
        let want_grad = order >= Order::Score;
        let want_hess = order >= Order::Hessian;
        let mut ll = 0.0;
        let mut grad = vec![0.0; np];
        let mut hess = if want_hess {
            DMatrix::zeros(np, np)
        } else {
            DMatrix::zeros(0, 0)
        };
        let mut w_sig = vec![0.0; if want_grad { alpha.len() } else { 0 }];
        let mut phi: Vec<f64> = Vec::new();
        let mut a: Vec<f64> = Vec::new();
        let mut g = vec![0.0; p];
        let mut g_lo = vec![0.0; p];
        let zero = vec![0.0; p];

        for row in &self.rows {
            let n_delays = row.ids.len();
            phi.clear();
            phi.push(0.0);
            let mut acc = 0.0;
            for &id in &row.ids {
                acc += alpha[id as usize];
                phi.push(acc);
            }
            if want_grad {
                a.clear();
                a.resize(n_delays + 1, 0.0);
            }
            if want_hess {
                g.iter_mut().for_each(|x| *x = 0.0);
            }
            let mut g_at = 0usize;

            let trunc_term = truncation.then_some((0usize, n_delays, -row.observed));
            let cell_terms = row
                .cells
                .iter()
                .map(|&(d, n)| (d as usize, d as usize + 1, n));
            for (lo, hi, w) in cell_terms.chain(trunc_term) {
                let lo_u = phi[lo];
                let hi_u = phi[hi];
                let prob = if lo == 0 {
                    dist.cdf_unchecked(hi_u)
                } else {
                    dist.interval_unchecked(lo_u, hi_u)
                };
                if !(prob > 0.0) {
                    return Err(LikelihoodError::Infeasible {
                        occurrence: row.t,
                        observation: row.t + (hi as i32 - 1),
                    });
                }
                ll += w * libm::log(prob);
                if !want_grad {
                    continue;
                }
                let f_hi = dist.pdf_unchecked(hi_u);
                let f_lo = if lo == 0 { 0.0 } else { dist.pdf_unchecked(lo_u) };
                let wp = w / prob;
                a[hi] += wp * f_hi;
                a[lo] -= wp * f_lo;
                let (s_hi, ss_hi, us_hi) = dist.sigma_derivatives(hi_u);
                let (s_lo, ss_lo, us_lo) = if lo == 0 {
                    (0.0, 0.0, 0.0)
                } else {
                    dist.sigma_derivatives(lo_u)
                };
                let dps = s_hi - s_lo;
                if np > p {
                    grad[p] += wp * dps;
                }
                if !want_hess {
                    continue;
                }
                // Walk g = ∂φ(j)/∂γ forward to the term's boundaries.
                let advance = |g: &mut Vec<f64>, from: usize, to: usize| {
                    for i in from..to {
                        let id = row.ids[i] as usize;
                        for &c in &self.signatures[id] {
                            g[c as usize] += alpha[id];
                        }
                    }
                };
                let lo_vec: &[f64] = if lo == 0 {
                    &zero
                } else {
                    advance(&mut g, g_at, lo);
                    g_at = lo;
                    g_lo.copy_from_slice(&g);
                    &g_lo
                };
                advance(&mut g, g_at, hi);
                g_at = hi;
                let wp2 = wp / prob;
                let f1_hi = dist.pdf_derivative_unchecked(hi_u);
                let f1_lo = if lo == 0 {
                    0.0
                } else {
                    dist.pdf_derivative_unchecked(lo_u)
                };
                let m11 = wp * f1_hi - wp2 * f_hi * f_hi;
                let m22 = -wp * f1_lo - wp2 * f_lo * f_lo;
                let m12 = wp2 * f_hi * f_lo;
                for i in 0..p {
                    let (gi, li) = (g[i], lo_vec[i]);
                    if gi == 0.0 && li == 0.0 {
                        continue;
                    }
                    for j in i..p {
                        let (gj, lj) = (g[j], lo_vec[j]);
                        hess[(i, j)] +=
                            m11 * gi * gj + m12 * (gi * lj + li * gj) + m22 * li * lj;
                    }
                }
                if np > p {
                    hess[(p, p)] += wp * (ss_hi - ss_lo) - wp2 * dps * dps;
                    let c_hi = wp * us_hi - wp2 * f_hi * dps;
                    let c_lo = -wp * us_lo + wp2 * f_lo * dps;
                    for i in 0..p {
                        hess[(i, p)] += c_hi * g[i] + c_lo * lo_vec[i];
                    }
                }
            }
            if want_grad {
                let mut suffix = 0.0;
                for i in (0..n_delays).rev() {
                    suffix += a[i + 1];
                    let id = row.ids[i] as usize;
                    w_sig[id] += alpha[id] * suffix;
                }
            }
        }
        if want_grad {
            for (sig, &w) in self.signatures.iter().zip(&w_sig) {
                for &c in sig {
                    grad[c as usize] += w;
                }
                if want_hess {
                    add_outer_upper(&mut hess, sig, w);
                }
            }
        }
        if want_hess {
            mirror_upper(&mut hess);
        }
        Ok(Evaluation {
            loglik: ll,
            score: grad,
            hessian: hess,
        })
    }

    /// Unit-exponential fast path: each cell depends on a single exposure,
    ///
    /// ```text
    /// ℓ = Σ_sig [-R_sig α_sig + N_sig ln(1 - e^{-α_sig})] - Σ_t M_t ln(1 - e^{-φ_t(τ-t+1)})
    /// ```
    ///
    /// with `N_sig` events at, and `R_sig` events after, cells of that
    /// signature.
    pub fn evaluate_exponential(
        &self,
        gamma: &[f64],
        truncation: bool,
        order: Order,
    ) -> Result<Evaluation, LikelihoodError> {
        self.check_len(gamma)?;
        let p = self.columns;
        let alpha = self.alphas(gamma);
        let want_grad = order >= Order::Score;
        let want_hess = order >= Order::Hessian;
        let mut ll = 0.0;
        let mut w1 = vec![0.0; alpha.len()];
        let mut w2 = vec![0.0; alpha.len()];
        let mut hess = if want_hess {
            DMatrix::zeros(p, p)
        } else {
            DMatrix::zeros(0, 0)
        };
        for (k, &a) in alpha.iter().enumerate() {
            let (n, r) = (self.sig_events[k], self.sig_at_risk[k]);
            let em1 = libm::expm1(a);
            if n > 0.0 {
                let log_p = libm::log(-libm::expm1(-a));
                if log_p == f64::NEG_INFINITY {
                    return Err(self.infeasible_at(k));
                }
                ll += n * log_p;
            }
            ll -= r * a;
            if want_grad {
                let h1 = -r + if n > 0.0 { n / em1 } else { 0.0 };
                let h2 = if n > 0.0 {
                    -n / (em1 * -libm::expm1(-a))
                } else {
                    0.0
                };
                w1[k] += a * h1;
                w2[k] += a * a * h2 + a * h1;
            }
        }
        if truncation {
            let mut g = vec![0.0; p];
            for row in &self.rows {
                let phi: f64 = row
                    .compressed
                    .iter()
                    .map(|&(id, c)| c * alpha[id as usize])
                    .sum();
                let m = row.observed;
                ll -= m * libm::log(-libm::expm1(-phi));
                if !want_grad {
                    continue;
                }
                let em1 = libm::expm1(phi);
                let k1 = -m / em1;
                for &(id, c) in &row.compressed {
                    let v = k1 * c * alpha[id as usize];
                    w1[id as usize] += v;
                    w2[id as usize] += v;
                }
                if want_hess {
                    let k2 = m / (em1 * -libm::expm1(-phi));
                    g.iter_mut().for_each(|x| *x = 0.0);
                    for &(id, c) in &row.compressed {
                        for &col in &self.signatures[id as usize] {
                            g[col as usize] += c * alpha[id as usize];
                        }
                    }
                    for i in 0..p {
                        if g[i] == 0.0 {
                            continue;
                        }
                        let gi = k2 * g[i];
                        for j in i..p {
                            hess[(i, j)] += gi * g[j];
                        }
                    }
                }
            }
        }
        let mut grad = vec![0.0; p];
        if want_grad {
            for (k, sig) in self.signatures.iter().enumerate() {
                for &c in sig {
                    grad[c as usize] += w1[k];
                }
                if want_hess {
                    add_outer_upper(&mut hess, sig, w2[k]);
                }
            }
        }
        if want_hess {
            mirror_upper(&mut hess);
        }
        Ok(Evaluation {
            loglik: ll,
            score: grad,
            hessian: hess,
        })
    }

    fn infeasible_at(&self, sig: usize) -> LikelihoodError {
        for row in &self.rows {
            for &(d, _) in &row.cells {
                if row.ids[d as usize] as usize == sig {
                    return LikelihoodError::Infeasible {
                        occurrence: row.t,
                        observation: row.t + d as i32,
                    };
                }
            }
        }
        LikelihoodError::Infeasible {
            occurrence: self.eval_date,
            observation: self.eval_date,
        }
    }

    fn evaluate_any(
        &self,
        gamma: &[f64],
        dist: &TimeChangedDistribution,
        truncation: bool,
        order: Order,
    ) -> Result<Evaluation, LikelihoodError> {
        match dist {
            TimeChangedDistribution::Exponential => {
                self.evaluate_exponential(gamma, truncation, order)
            }
            _ => self.evaluate(gamma, dist, truncation, order),
        }
    }
}

fn add_outer_upper(h: &mut DMatrix<f64>, sig: &[u16], w: f64) {
    for (k, &a) in sig.iter().enumerate() {
        for &b in &sig[k..] {
            let (i, j) = if a <= b { (a, b) } else { (b, a) };
            h[(i as usize, j as usize)] += w;
        }
    }
}

fn mirror_upper(h: &mut DMatrix<f64>) {
    let n = h.nrows();
    for i in 0..n {
        for j in 0..i {
            h[(i, j)] = h[(j, i)];
        }
    }
}

/// How much of the objective to compute.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Order {
    Value,
    Score,
    Hessian,
}

/// Loglikelihood with optional score and Hessian. For the lognormal the
/// last parameter is `σ`.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub loglik: f64,
    pub score: Vec<f64>,
    pub hessian: DMatrix<f64>,
}

/// Generic loglikelihood for any time-changed distribution.
pub fn loglik_generic(
    model: &ExposureModel,
    triangle: &CountTriangle,
    dist: &TimeChangedDistribution,
    cal: &Calendar,
) -> Result<f64, LikelihoodError> {
    TriangleDesign::new(triangle, &model.spec, cal)
        .evaluate(&model.gamma, dist, true, Order::Value)
        .map(|e| e.loglik)
}

/// Loglikelihood for a unit-exponential `Ũ`.
pub fn loglik_exponential(
    model: &ExposureModel,
    triangle: &CountTriangle,
    cal: &Calendar,
) -> Result<f64, LikelihoodError> {
    TriangleDesign::new(triangle, &model.spec, cal)
        .evaluate_exponential(&model.gamma, true, Order::Value)
        .map(|e| e.loglik)
}

/// `∂ℓ/∂γ`, followed by `∂ℓ/∂σ` for the lognormal.
pub fn score(
    model: &ExposureModel,
    triangle: &CountTriangle,
    dist: &TimeChangedDistribution,
    cal: &Calendar,
) -> Result<Vec<f64>, LikelihoodError> {
    TriangleDesign::new(triangle, &model.spec, cal)
        .evaluate(&model.gamma, dist, true, Order::Score)
        .map(|e| e.score)
}

/// Second derivatives in the same parameter order as [`score`].
pub fn hessian(
    model: &ExposureModel,
    triangle: &CountTriangle,
    dist: &TimeChangedDistribution,
    cal: &Calendar,
) -> Result<DMatrix<f64>, LikelihoodError> {
    TriangleDesign::new(triangle, &model.spec, cal)
        .evaluate(&model.gamma, dist, true, Order::Hessian)
        .map(|e| e.hessian)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitOptions {
    pub max_iterations: usize,
    /// Convergence when the ∞-norm of the score (in `γ` and `ln σ`) falls
    /// below this.
    pub gradient_tolerance: f64,
    /// Largest accepted step component below which the iteration stalls.
    pub step_tolerance: f64,
    /// First ridge tried when `-H` is not positive definite; grows ×10.
    pub ridge_floor: f64,
    pub ridge_max: f64,
    pub step_halving_max: usize,
    /// A coefficient whose standard error exceeds this is drifting to the
    /// boundary of the parameter space.
    pub drift_standard_error: f64,
    /// A coefficient larger than this in absolute value is drifting.
    pub drift_coefficient: f64,
    /// Keep the `-N^Obs ln p^Obs` term.
    pub include_truncation: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            max_iterations: 100,
            gradient_tolerance: 1e-6,
            step_tolerance: 1e-8,
            ridge_floor: 1e-8,
            ridge_max: 1e10,
            step_halving_max: 20,
            drift_standard_error: 10.0,
            drift_coefficient: 50.0,
            include_truncation: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitStatus {
    Converged,
    /// Some coefficients run off to ±∞ (or are not informed by the data).
    BoundaryDrift,
    MaxIterations,
    /// `-H` could not be repaired by the largest ridge.
    Singular,
    /// No step length increased the loglikelihood.
    StepFailure,
    /// Steps became negligible before the score did.
    Stalled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub loglik: f64,
    pub score_norm: f64,
    pub step_halvings: usize,
    pub ridge: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub model: ExposureModel,
    pub distribution: TimeChangedDistribution,
    pub column_names: Vec<String>,
    pub loglik: f64,
    /// ∞-norm of the score in the optimisation parameters (`γ`, `ln σ`).
    pub score_norm: f64,
    /// Hessian in `(γ, σ)`, row-major.
    pub hessian: Vec<Vec<f64>>,
    pub iterations: usize,
    pub converged: bool,
    pub status: FitStatus,
    /// Names of parameters flagged as drifting.
    pub drifting: Vec<String>,
    pub trace: Vec<IterationRecord>,
}

impl FitResult {
    pub fn sigma(&self) -> Option<f64> {
        self.distribution.sigma()
    }

    pub fn hessian_matrix(&self) -> DMatrix<f64> {
        let n = self.hessian.len();
        DMatrix::from_fn(n, n, |i, j| self.hessian[i][j])
    }

    /// Fitted parameters: `γ`, then `σ` for the lognormal.
    pub fn parameters(&self) -> Vec<f64> {
        let mut v = self.model.gamma.clone();
        v.extend(self.sigma());
        v
    }

    pub fn parameter_names(&self) -> Vec<String> {
        let mut v = self.column_names.clone();
        if self.sigma().is_some() {
            v.push(String::from("sigma"));
        }
        v
    }

    /// Square roots of the diagonal of `(-H)^{-1}`.
    pub fn standard_errors(&self) -> Result<Vec<f64>, LikelihoodError> {
        let cov = covariance(&self.hessian_matrix())?;
        Ok((0..cov.nrows()).map(|i| libm::sqrt(cov[(i, i)].max(0.0))).collect())
    }

    /// Largest eigenvalue of `H` is at most `tol` times the largest
    /// absolute eigenvalue.
    pub fn hessian_is_nsd(&self, tol: f64) -> bool {
        let eig = self.hessian_matrix().symmetric_eigen();
        let scale = eig.eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        eig.eigenvalues.iter().all(|&v| v <= tol * scale)
    }
}

fn covariance(h: &DMatrix<f64>) -> Result<DMatrix<f64>, LikelihoodError> {
    let info = -h.clone();
    let chol = info.cholesky().ok_or(LikelihoodError::NotPositiveDefinite)?;
    Ok(chol.inverse())
}

/// Starting values: the intercept from the mean observed delay (or the
/// delay-zero hazard when delay bins are present), delay-bin coefficients
/// from the per-bin mean log hazard exposure, everything else zero.
pub fn initial_gamma(triangle: &CountTriangle, spec: &CovariateSpec) -> Vec<f64> {
    let mut gamma = vec![0.0; spec.column_count()];
    let Some(ic) = spec.intercept_column() else {
        return gamma;
    };
    let table = hazard_table(triangle);
    if let Some((offset, bins)) = spec.delay_bins() {
        let logs = table.bin_log_hazards(bins);
        let base = logs.first().copied().flatten().unwrap_or(0.0);
        gamma[ic] = base;
        for (b, l) in logs.iter().enumerate().skip(1) {
            if let Some(l) = l {
                gamma[offset + b - 1] = l - base;
            }
        }
    } else {
        let total: f64 = table.rows().iter().map(|r| r.count_equal as f64).sum();
        let mean = table
            .rows()
            .iter()
            .map(|r| r.delay as f64 * r.count_equal as f64)
            .sum::<f64>()
            / total.max(1.0);
        let mean = mean.max(0.01);
        gamma[ic] = libm::log(libm::log1p(1.0 / mean));
    }
    gamma
}

/// Newton-Raphson maximisation of the loglikelihood.
///
/// `dist` selects the family; for the lognormal its `σ` is the starting
/// value. Each Newton step solves `(-H + λI) δ = S`, with `λ = 0` unless
/// `-H` fails a Cholesky factorisation, and is halved until the
/// loglikelihood does not decrease. Steps whose predicted gain is below
/// rounding level are accepted as they are.
pub fn fit(
    triangle: &CountTriangle,
    spec: &CovariateSpec,
    dist: &TimeChangedDistribution,
    cal: &Calendar,
    init: Option<&[f64]>,
    opts: &FitOptions,
) -> Result<FitResult, LikelihoodError> {
    let design = TriangleDesign::new(triangle, spec, cal);
    let gamma0 = match init {
        Some(g) => g.to_vec(),
        None => initial_gamma(triangle, spec),
    };
    fit_design(&design, spec, dist, &gamma0, opts)
}

/// [`fit`] on a prebuilt design.
pub fn fit_design(
    design: &TriangleDesign,
    spec: &CovariateSpec,
    dist: &TimeChangedDistribution,
    gamma0: &[f64],
    opts: &FitOptions,
) -> Result<FitResult, LikelihoodError> {
    design.check_len(gamma0)?;
    design.check_identifiable()?;
    if let Some(s) = dist.sigma() {
        if !(s > 0.0 && s.is_finite()) {
            return Err(LikelihoodError::BadSigma(s));
        }
    }
    let p = design.column_count();
    let lognormal = dist.sigma().is_some();
    let mut theta: Vec<f64> = gamma0.to_vec();
    if let Some(s) = dist.sigma() {
        theta.push(libm::log(s));
    }
    let trunc = opts.include_truncation;

    let unpack = |theta: &[f64]| -> TimeChangedDistribution {
        if lognormal {
            TimeChangedDistribution::LogNormal {
                sigma: libm::exp(theta[p]),
            }
        } else {
            TimeChangedDistribution::Exponential
        }
    };
    // Score and Hessian in the optimisation parameters (γ, ln σ).
    let eval_theta = |theta: &[f64], order: Order| -> Result<Evaluation, LikelihoodError> {
        let d = unpack(theta);
        let mut ev = design.evaluate_any(&theta[..p], &d, trunc, order)?;
        if let Some(s) = d.sigma() {
            if order >= Order::Hessian {
                let ss = ev.score[p];
                ev.hessian[(p, p)] = s * s * ev.hessian[(p, p)] + s * ss;
                for i in 0..p {
                    let v = s * ev.hessian[(i, p)];
                    ev.hessian[(i, p)] = v;
                    ev.hessian[(p, i)] = v;
                }
            }
            if order >= Order::Score {
                ev.score[p] *= s;
            }
        }
        Ok(ev)
    };
    let inf_norm = |v: &[f64]| v.iter().fold(0.0f64, |m, x| m.max(x.abs()));

    let mut ev = eval_theta(&theta, Order::Hessian)?;
    let mut trace = Vec::new();
    let mut status = FitStatus::MaxIterations;
    let mut iterations = 0;
    let n = theta.len();
    loop {
        let s_norm = inf_norm(&ev.score);
        if s_norm < opts.gradient_tolerance {
            status = FitStatus::Converged;
            break;
        }
        if iterations >= opts.max_iterations {
            break;
        }
        iterations += 1;
        let info = -ev.hessian.clone();
        let rhs = DVector::from_column_slice(&ev.score);
        let mut ridge = 0.0;
        let delta = loop {
            let mut m = info.clone();
            for i in 0..n {
                m[(i, i)] += ridge;
            }
            if let Some(chol) = m.cholesky() {
                break Some(chol.solve(&rhs));
            }
            ridge = if ridge == 0.0 {
                opts.ridge_floor
            } else {
                ridge * 10.0
            };
            if ridge > opts.ridge_max {
                break None;
            }
        };
        let Some(delta) = delta else {
            status = FitStatus::Singular;
            break;
        };
        let predicted = delta.dot(&rhs);
        let noise = 1e-13 * (1.0 + ev.loglik.abs());
        let mut t = 1.0;
        let mut accepted = None;
        for h in 0..=opts.step_halving_max {
            let cand: Vec<f64> = theta.iter().zip(delta.iter()).map(|(a, d)| a + t * d).collect();
            match eval_theta(&cand, Order::Value) {
                Ok(e) if e.loglik >= ev.loglik || (h == 0 && predicted < noise) => {
                    accepted = Some((cand, h));
                    break;
                }
                _ => t *= 0.5,
            }
        }
        let Some((cand, halvings)) = accepted else {
            status = FitStatus::StepFailure;
            break;
        };
        let step = t * inf_norm(delta.as_slice());
        theta = cand;
        ev = eval_theta(&theta, Order::Hessian)?;
        trace.push(IterationRecord {
            iteration: iterations,
            loglik: ev.loglik,
            score_norm: inf_norm(&ev.score),
            step_halvings: halvings,
            ridge,
        });
        if inf_norm(&theta[..p]) > opts.drift_coefficient {
            status = FitStatus::BoundaryDrift;
            break;
        }
        if step < opts.step_tolerance && inf_norm(&ev.score) >= opts.gradient_tolerance {
            status = FitStatus::Stalled;
            break;
        }
    }

    let distribution = unpack(&theta);
    let natural = design.evaluate_any(&theta[..p], &distribution, trunc, Order::Hessian)?;
    let h = &natural.hessian;
    let hessian: Vec<Vec<f64>> = (0..h.nrows())
        .map(|i| (0..h.ncols()).map(|j| h[(i, j)]).collect())
        .collect();
    let mut names = design.column_names().to_vec();
    if lognormal {
        names.push(String::from("sigma"));
    }
    let ses = covariance(h).ok().map(|c| {
        (0..c.nrows())
            .map(|i| libm::sqrt(c[(i, i)].max(0.0)))
            .collect::<Vec<_>>()
    });
    let mut drifting = Vec::new();
    for i in 0..theta.len() {
        let coef_bad = i < p && theta[i].abs() > opts.drift_coefficient;
        let se_bad = ses
            .as_ref()
            .map_or(true, |s| !(s[i] <= opts.drift_standard_error));
        if coef_bad || se_bad {
            drifting.push(names[i].clone());
        }
    }
    if !drifting.is_empty() && matches!(status, FitStatus::Converged | FitStatus::BoundaryDrift) {
        status = FitStatus::BoundaryDrift;
    }
    let model = ExposureModel {
        spec: spec.clone(),
        gamma: theta[..p].to_vec(),
    };
    Ok(FitResult {
        model,
        distribution,
        column_names: design.column_names().to_vec(),
        loglik: ev.loglik,
        score_norm: inf_norm(&ev.score),
        hessian,
        iterations,
        converged: status == FitStatus::Converged,
        status,
        drifting,
        trace,
    })
}

/// Wald interval for one parameter. For coefficients the bounds are on
/// the exposure scale `exp(γ)`; for `σ` they are `σ̂ exp(±z se/σ̂)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceInterval {
    pub name: String,
    pub coefficient: f64,
    pub standard_error: f64,
    pub estimate: f64,
    pub lower: f64,
    pub upper: f64,
}

/// Upper `(1 + level)/2` standard normal quantile.
pub fn normal_quantile(level: f64) -> f64 {
    let target = 0.5 * (1.0 - level);
    // Solve 0.5 erfc(z/√2) = target by Newton's method.
    let mut z = 1.0;
    for _ in 0..100 {
        let sf = 0.5 * libm::erfc(z * core::f64::consts::FRAC_1_SQRT_2);
        let pdf = libm::exp(-0.5 * z * z) * 0.398_942_280_401_432_7;
        let step = (sf - target) / pdf;
        z += step;
        if step.abs() < 1e-15 {
            break;
        }
    }
    z
}

pub fn confidence_intervals(
    fit: &FitResult,
    level: f64,
) -> Result<Vec<ConfidenceInterval>, LikelihoodError> {
    let se = fit.standard_errors()?;
    let z = normal_quantile(level);
    let names = fit.parameter_names();
    let params = fit.parameters();
    let p = fit.model.gamma.len();
    Ok((0..params.len())
        .map(|i| {
            let (est, lo, hi) = if i < p {
                let g = params[i];
                (
                    libm::exp(g),
                    libm::exp(g - z * se[i]),
                    libm::exp(g + z * se[i]),
                )
            } else {
                let s = params[i];
                let r = libm::exp(z * se[i] / s);
                (s, s / r, s * r)
            };
            ConfidenceInterval {
                name: names[i].clone(),
                coefficient: params[i],
                standard_error: se[i],
                estimate: est,
                lower: lo,
                upper: hi,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::binning::{DelayBins, HazardTable};
    use crate::calendar::{Effect, Epoch, HolidayCalendar};
    use crate::counts::{triangle_from_events, EventDataset, EventRecord};
    use approx::assert_relative_eq;
    use chrono::Weekday;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cal() -> Calendar {
        Calendar::new(Epoch::default(), HolidayCalendar::dutch(1996, 2010))
    }

    fn ev(t: i32, s: i32) -> EventRecord {
        EventRecord {
            occurrence: DateIndex(t),
            observation: DateIndex(s),
        }
    }

    fn tri(events: &[(i32, i32)], tau: i32) -> CountTriangle {
        let ds = EventDataset::from_records(events.iter().map(|&(t, s)| ev(t, s)));
        triangle_from_events(&ds, DateIndex(tau)).unwrap()
    }

    fn dow_holiday() -> CovariateSpec {
        CovariateSpec::new(vec![
            Effect::Intercept,
            Effect::ReportingDow {
                reference: Weekday::Mon,
            },
            Effect::ReportingHoliday,
        ])
        .unwrap()
    }

    fn intercept_only() -> CovariateSpec {
        CovariateSpec::new(vec![Effect::Intercept]).unwrap()
    }

    /// Random triangle on `dates` occurrence dates, τ = last date.
    fn random_triangle(rng: &mut ChaCha8Rng, start: i32, dates: i32, per_day: u32) -> CountTriangle {
        let mut events = Vec::new();
        for t in start..start + dates {
            for _ in 0..rng.random_range(0..=per_day) {
                let d = (rng.random::<f64>() * rng.random::<f64>() * 12.0) as i32;
                events.push((t, t + d));
            }
        }
        events.push((start, start));
        tri(&events, start + dates - 1)
    }

    fn rel_err(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1.0)
    }

    #[test]
    fn forced_observation_cancels() {
        let t = tri(&[(4000, 4000)], 4000);
        let m = ExposureModel::new(intercept_only(), vec![0.3]).unwrap();
        let e = TimeChangedDistribution::Exponential;
        assert_eq!(loglik_generic(&m, &t, &e, &cal()).unwrap(), 0.0);
        assert_eq!(loglik_exponential(&m, &t, &cal()).unwrap(), 0.0);
    }

    #[test]
    fn hand_two_cell_loglik() {
        let t = tri(&[(4000, 4000), (4000, 4001)], 4001);
        let m = ExposureModel::zero(dow_holiday());
        let e1 = libm::exp(-1.0);
        let expect = libm::log(1.0 - e1) + libm::log(e1 * (1.0 - e1)) - 2.0 * libm::log(1.0 - e1 * e1);
        let e = TimeChangedDistribution::Exponential;
        assert_relative_eq!(loglik_generic(&m, &t, &e, &cal()).unwrap(), expect, max_relative = 1e-14);
        assert_relative_eq!(loglik_exponential(&m, &t, &cal()).unwrap(), expect, max_relative = 1e-14);
    }

    #[test]
    fn zero_probability_is_infeasible() {
        // A national holiday exposure of e^-800 makes a holiday report impossible.
        let c = cal();
        let xmas = c.index(chrono::NaiveDate::from_ymd_opt(2003, 12, 25).unwrap());
        let t = tri(&[(xmas.0, xmas.0)], xmas.0 + 3);
        let mut g = vec![0.0; 9];
        g[7] = -800.0;
        let m = ExposureModel::new(dow_holiday(), g).unwrap();
        assert!(matches!(
            loglik_exponential(&m, &t, &c),
            Err(LikelihoodError::Infeasible { .. })
        ));
        assert!(matches!(
            loglik_generic(&m, &t, &TimeChangedDistribution::Exponential, &c),
            Err(LikelihoodError::Infeasible { .. })
        ));
    }

    fn fd_check(dist: TimeChangedDistribution, seed: u64) {
        let c = cal();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t = random_triangle(&mut rng, 4000, 20, 6);
        let spec = dow_holiday();
        let gamma: Vec<f64> = (0..9)
            .map(|i| if i == 0 { -1.0 } else { rng.random_range(-1.0..0.5) })
            .collect();
        let design = TriangleDesign::new(&t, &spec, &c);
        let ev = design.evaluate(&gamma, &dist, true, Order::Hessian).unwrap();
        let mut params = gamma.clone();
        params.extend(dist.sigma());
        let eval_at = |p: &[f64], order: Order| {
            let d = match dist {
                TimeChangedDistribution::Exponential => dist,
                _ => TimeChangedDistribution::LogNormal { sigma: p[9] },
            };
            design.evaluate(&p[..9], &d, true, order).unwrap()
        };
        for i in 0..params.len() {
            let h = 1e-6 * (1.0 + params[i].abs());
            let mut up = params.clone();
            up[i] += h;
            let mut dn = params.clone();
            dn[i] -= h;
            let fd = (eval_at(&up, Order::Value).loglik - eval_at(&dn, Order::Value).loglik) / (2.0 * h);
            assert!(rel_err(ev.score[i], fd) < 1e-5, "score {i}: {} vs {fd}", ev.score[i]);
            let su = eval_at(&up, Order::Score).score;
            let sd = eval_at(&dn, Order::Score).score;
            for j in 0..params.len() {
                let fd = (su[j] - sd[j]) / (2.0 * h);
                assert!(
                    rel_err(ev.hessian[(j, i)], fd) < 1e-4,
                    "hessian ({j},{i}): {} vs {fd}",
                    ev.hessian[(j, i)]
                );
            }
        }
        assert_eq!(ev.hessian, ev.hessian.transpose());
    }

    #[test]
    fn derivatives_match_finite_differences() {
        for seed in 0..10 {
            fd_check(TimeChangedDistribution::Exponential, seed);
            fd_check(TimeChangedDistribution::LogNormal { sigma: 0.7 + 0.1 * seed as f64 }, seed);
        }
    }

    #[test]
    fn exponential_path_derivatives_match_generic() {
        let c = cal();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let t = random_triangle(&mut rng, 5000, 40, 8);
        let design = TriangleDesign::new(&t, &dow_holiday(), &c);
        let gamma: Vec<f64> = (0..9).map(|_| rng.random_range(-1.0..0.5)).collect();
        let e = TimeChangedDistribution::Exponential;
        let a = design.evaluate(&gamma, &e, true, Order::Hessian).unwrap();
        let b = design.evaluate_exponential(&gamma, true, Order::Hessian).unwrap();
        assert_relative_eq!(a.loglik, b.loglik, max_relative = 1e-12);
        for i in 0..9 {
            assert!(rel_err(a.score[i], b.score[i]) < 1e-10);
            for j in 0..9 {
                assert!(rel_err(a.hessian[(i, j)], b.hessian[(i, j)]) < 1e-10);
            }
        }
    }

    #[test]
    fn doubling_counts_doubles_derivatives() {
        let c = cal();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let t = random_triangle(&mut rng, 4500, 15, 5);
        let doubled = {
            let mut evs = t.to_events();
            evs.extend(t.to_events());
            triangle_from_events(&EventDataset::from_records(evs), t.eval_date()).unwrap()
        };
        let gamma: Vec<f64> = (0..9).map(|_| rng.random_range(-1.0..0.5)).collect();
        for dist in [TimeChangedDistribution::Exponential, TimeChangedDistribution::LogNormal { sigma: 1.2 }] {
            let a = TriangleDesign::new(&t, &dow_holiday(), &c)
                .evaluate(&gamma, &dist, true, Order::Hessian)
                .unwrap();
            let b = TriangleDesign::new(&doubled, &dow_holiday(), &c)
                .evaluate(&gamma, &dist, true, Order::Hessian)
                .unwrap();
            for i in 0..a.score.len() {
                assert_eq!(b.score[i], 2.0 * a.score[i]);
            }
            assert_eq!(b.hessian, a.hessian * 2.0);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(50))]
        #[test]
        fn exponential_specialisation(seed in any::<u64>(), dates in 2..25i32) {
            let c = cal();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let t = random_triangle(&mut rng, 3000 + (seed % 500) as i32, dates, 5);
            let gamma: Vec<f64> = (0..9).map(|_| rng.random_range(-2.0..1.0)).collect();
            let m = ExposureModel::new(dow_holiday(), gamma).unwrap();
            let a = loglik_generic(&m, &t, &TimeChangedDistribution::Exponential, &c).unwrap();
            let b = loglik_exponential(&m, &t, &c).unwrap();
            prop_assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn collinear_columns_reported() {
        let c = cal();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let t = random_triangle(&mut rng, 4000, 30, 5);
        let spec = CovariateSpec::new(vec![Effect::Intercept, Effect::Intercept]).unwrap();
        let err = fit(&t, &spec, &TimeChangedDistribution::Exponential, &c, None, &FitOptions::default())
            .unwrap_err();
        match err {
            LikelihoodError::NonIdentifiable { columns } => {
                assert_eq!(columns.len(), 1);
                assert!(columns[0].contains("intercept"));
            }
            e => panic!("{e:?}"),
        }
        // A delay bin beyond every observable delay is never active.
        let spec = CovariateSpec::new(vec![
            Effect::Intercept,
            Effect::DelayBins { bins: DelayBins::new(vec![0, 1, 500]).unwrap() },
        ])
        .unwrap();
        assert!(matches!(
            fit(&t, &spec, &TimeChangedDistribution::Exponential, &c, None, &FitOptions::default()),
            Err(LikelihoodError::NonIdentifiable { .. })
        ));
    }

    #[test]
    fn all_delay_zero_drifts() {
        let events: Vec<(i32, i32)> = (0..50).flat_map(|t| [(4000 + t, 4000 + t); 3]).collect();
        let t = tri(&events, 4060);
        let r = fit(
            &t,
            &intercept_only(),
            &TimeChangedDistribution::Exponential,
            &cal(),
            None,
            &FitOptions::default(),
        )
        .unwrap();
        assert_eq!(r.status, FitStatus::BoundaryDrift);
        assert!(!r.converged);
        assert_eq!(r.drifting, vec![String::from("intercept")]);
        assert!(r.iterations <= FitOptions::default().max_iterations);
    }

    fn geometric_events(rng: &mut ChaCha8Rng, first: i32, dates: i32, per_day: usize, alpha: f64) -> Vec<(i32, i32)> {
        let q = 1.0 - libm::exp(-alpha);
        let mut out = Vec::new();
        for t in first..first + dates {
            for _ in 0..per_day {
                let mut d = 0;
                while rng.random::<f64>() >= q {
                    d += 1;
                }
                out.push((t, t + d));
            }
        }
        out
    }

    #[test]
    fn intercept_fit_and_fixed_point() {
        let c = cal();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let events = geometric_events(&mut rng, 4000, 120, 30, 0.3);
        let t = tri(&events, 4119);
        for dist in [TimeChangedDistribution::Exponential, TimeChangedDistribution::LogNormal { sigma: 1.0 }] {
            let r = fit(&t, &intercept_only(), &dist, &c, None, &FitOptions::default()).unwrap();
            assert!(r.converged, "{:?}", r.status);
            assert!(r.score_norm < 1e-6);
            assert!(r.hessian_is_nsd(1e-10));
            for w in r.trace.windows(2) {
                assert!(w[1].loglik >= w[0].loglik - 1e-9 * w[0].loglik.abs());
            }
            let again = fit(&t, &intercept_only(), &r.distribution, &c, Some(&r.model.gamma), &FitOptions::default())
                .unwrap();
            assert!(again.iterations <= 2);
            assert!((again.loglik - r.loglik).abs() < 1e-10);
        }
        let r = fit(&t, &intercept_only(), &TimeChangedDistribution::Exponential, &c, None, &FitOptions::default())
            .unwrap();
        assert!((libm::exp(r.model.gamma[0]) - 0.3).abs() < 0.03);
    }

    #[test]
    fn information_scales_with_counts() {
        let c = cal();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let events = geometric_events(&mut rng, 4000, 60, 10, 0.4);
        let t = tri(&events, 4059);
        let mut big = Vec::new();
        for _ in 0..10 {
            big.extend(events.iter().copied());
        }
        let tb = tri(&big, 4059);
        let spec = dow_holiday();
        let e = TimeChangedDistribution::Exponential;
        let a = fit(&t, &spec, &e, &c, None, &FitOptions::default()).unwrap();
        let b = fit(&tb, &spec, &e, &c, None, &FitOptions::default()).unwrap();
        let ca = confidence_intervals(&a, 0.95).unwrap();
        let cb = confidence_intervals(&b, 0.95).unwrap();
        for (x, y) in ca.iter().zip(&cb) {
            assert_relative_eq!(x.coefficient, y.coefficient, max_relative = 1e-6, epsilon = 1e-7);
            assert_relative_eq!(x.standard_error / y.standard_error, libm::sqrt(10.0), max_relative = 1e-4);
            assert!(y.upper - y.lower < x.upper - x.lower);
        }
    }

    #[test]
    fn quantile() {
        assert_relative_eq!(normal_quantile(0.95), 1.959_963_984_540_054, max_relative = 1e-12);
        assert_relative_eq!(normal_quantile(0.99), 2.575_829_303_548_901, max_relative = 1e-12);
    }

    #[test]
    fn per_delay_fit_recovers_hazards_when_truncation_is_negligible() {
        // Delays up to ~100 days, every occurrence date at least 1000 days old.
        let c = cal();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let events = geometric_events(&mut rng, 3000, 40, 200, 0.12);
        let max_delay = events.iter().map(|e| e.1 - e.0).max().unwrap();
        assert!(max_delay < 150);
        let t = tri(&events, 3000 + 40 + 1000);
        let bins = DelayBins::singletons(8);
        let spec = CovariateSpec::new(vec![Effect::Intercept, Effect::DelayBins { bins: bins.clone() }]).unwrap();
        let r = fit(&t, &spec, &TimeChangedDistribution::Exponential, &c, None, &FitOptions::default()).unwrap();
        assert!(r.converged, "{:?}", r.status);
        let delays: Vec<u32> = events.iter().map(|e| (e.1 - e.0) as u32).collect();
        let table = HazardTable::from_delays(&delays);
        let g = &r.model.gamma;
        for d in 0..8u32 {
            let fitted = libm::exp(g[0] + if d == 0 { 0.0 } else { g[d as usize] });
            assert!((fitted - table.hazard(d).unwrap()).abs() < 1e-6, "delay {d}");
        }
        // Pooled tail: α = ln(1 + N/R) over delays >= 8.
        let (n, r_) = table.rows()[8..].iter().fold((0.0, 0.0), |(n, r), row| {
            (n + row.count_equal as f64, r + (row.count_geq - row.count_equal) as f64)
        });
        let fitted = libm::exp(g[0] + g[8]);
        assert!((fitted - libm::log1p(n / r_)).abs() < 1e-6);
    }
}
