//! Estimation of constant `α`, `β` and a piecewise-constant isolation time
//! from cumulative case and death counts.
//!
//! Every integer τ-tuple is enumerated (or refined coordinate-wise when the
//! tuple space is too large) and, for each, `(α, β)` is found by multistart
//! Nelder–Mead on a normalized least-squares loss over both series.

use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kernel::GammaKernel;
use crate::model::{ControlSchedule, RegionParams, Seed};
use crate::nelder_mead::{self, NelderMeadOptions};
use crate::simulate::{cumulative_series, reproduction_number, simulate_single};

/// Above this many τ-tuples the search switches to coordinate refinement.
pub const MAX_ENUMERATED_TUPLES: usize = 10_000;

/// Cumulative counts at (possibly irregular) report days.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservedSeries {
    pub days: Vec<i64>,
    pub cases: Vec<f64>,
    pub deaths: Vec<f64>,
}

impl ObservedSeries {
    pub fn new(days: Vec<i64>, cases: Vec<f64>, deaths: Vec<f64>) -> Result<Self> {
        if days.is_empty() {
            return Err(Error::EmptyData("observed series has no rows".into()));
        }
        if cases.len() != days.len() || deaths.len() != days.len() {
            return Err(Error::DimensionMismatch {
                what: "observed values",
                expected: days.len(),
                got: cases.len().min(deaths.len()),
            });
        }
        if days.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::param("days", "report days must be strictly increasing"));
        }
        if cases.iter().chain(&deaths).any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::param("counts", "cumulative counts must be finite and >= 0"));
        }
        Ok(Self { days, cases, deaths })
    }

    pub fn len(&self) -> usize {
        self.days.len()
    }

    pub fn is_empty(&self) -> bool {
        self.days.is_empty()
    }

    /// Row indices where either cumulative column drops below the previous row.
    pub fn monotonicity_violations(&self) -> Vec<usize> {
        (1..self.len())
            .filter(|&k| self.cases[k] < self.cases[k - 1] || self.deaths[k] < self.deaths[k - 1])
            .collect()
    }
}

/// Search space and fixed inputs of a fit.
#[derive(Debug, Clone)]
pub struct FitSpec {
    /// Right-closed interval edges in model days; `τ_k` holds on `(T_k, T_{k+1}]`.
    pub breakpoints: Vec<i64>,
    pub tau_min: u32,
    pub tau_max: u32,
    pub alpha_bounds: (f64, f64),
    pub beta_bounds: (f64, f64),
    pub seed: Seed,
    pub latent_d: usize,
    pub kernel: Arc<GammaKernel>,
    pub starts: usize,
    pub nelder_mead: NelderMeadOptions,
}

impl FitSpec {
    pub fn new(
        breakpoints: Vec<i64>,
        tau_range: (u32, u32),
        alpha_bounds: (f64, f64),
        beta_bounds: (f64, f64),
        seed: Seed,
        latent_d: usize,
        kernel: Arc<GammaKernel>,
    ) -> Result<Self> {
        let spec = Self {
            breakpoints,
            tau_min: tau_range.0,
            tau_max: tau_range.1,
            alpha_bounds,
            beta_bounds,
            seed,
            latent_d,
            kernel,
            starts: 16,
            nelder_mead: NelderMeadOptions::default(),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn intervals(&self) -> usize {
        self.breakpoints.len().saturating_sub(1)
    }

    fn validate(&self) -> Result<()> {
        if self.breakpoints.len() < 2 {
            return Err(Error::param("breakpoints", "need at least two breakpoints"));
        }
        // validates ordering and τ bounds in one go
        ControlSchedule::new(
            self.breakpoints.clone(),
            vec![self.tau_min; self.intervals()],
            self.tau_min,
            self.tau_max,
        )?;
        let (alo, ahi) = self.alpha_bounds;
        if !(0.0 <= alo && alo <= ahi && ahi <= 1.0) {
            return Err(Error::param(
                "alpha_bounds",
                format!("need 0 <= lo <= hi <= 1, got [{alo}, {ahi}]"),
            ));
        }
        let (blo, bhi) = self.beta_bounds;
        if !(blo.is_finite() && bhi.is_finite() && 0.0 <= blo && blo <= bhi) {
            return Err(Error::param(
                "beta_bounds",
                format!("need 0 <= lo <= hi, got [{blo}, {bhi}]"),
            ));
        }
        if self.starts == 0 {
            return Err(Error::param("starts", "need at least one start"));
        }
        Seed::new(self.seed.value, self.seed.convention)?;
        Ok(())
    }

    fn region(&self, alpha: f64) -> Result<RegionParams> {
        RegionParams::new(alpha, self.latent_d, 1, self.kernel.clone())
    }

    fn schedule(&self, taus: &[u32]) -> Result<ControlSchedule> {
        ControlSchedule::new(self.breakpoints.clone(), taus.to_vec(), self.tau_min, self.tau_max)
    }

    /// Number of τ-tuples in `{τ_min..τ_max}^p`, saturating.
    pub fn tuple_count(&self) -> usize {
        let width = (self.tau_max - self.tau_min + 1) as usize;
        (0..self.intervals())
            .try_fold(1usize, |acc, _| acc.checked_mul(width))
            .unwrap_or(usize::MAX)
    }

    fn check_covers(&self, obs: &ObservedSeries) -> Result<()> {
        let last_obs = *obs.days.last().unwrap();
        if obs.days[0] < 0 {
            return Err(Error::param("days", "observed days must be >= 0"));
        }
        if self.breakpoints[0] >= 0 {
            return Err(Error::ControlGap {
                day: 0,
                first: self.breakpoints[0] + 1,
                last: *self.breakpoints.last().unwrap(),
            });
        }
        let last = *self.breakpoints.last().unwrap();
        if last < last_obs - 1 {
            return Err(Error::ControlGap {
                day: last_obs - 1,
                first: self.breakpoints[0] + 1,
                last,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub alpha: f64,
    pub beta: f64,
    pub taus: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub alpha: f64,
    pub beta: f64,
    pub taus: Vec<u32>,
    pub reproduction_numbers: Vec<f64>,
    pub loss: f64,
    /// Model `C(t)` and `D(t)` at the observed days.
    pub fitted_cases: Vec<f64>,
    pub fitted_deaths: Vec<f64>,
    pub tuples_searched: usize,
    pub evaluations: usize,
}

/// Model cumulative cases and deaths at the observed days.
pub fn model_series(candidate: &Candidate, spec: &FitSpec, obs: &ObservedSeries) -> Result<(Vec<f64>, Vec<f64>)> {
    let last = *obs.days.last().unwrap();
    let params = spec.region(candidate.alpha)?;
    let control = spec.schedule(&candidate.taus)?;
    let traj = simulate_single(&params, candidate.beta, &control, spec.seed, last.max(1))?;
    let (c, d) = cumulative_series(&traj, &params, last)?;
    Ok((
        obs.days.iter().map(|&t| c[t as usize]).collect(),
        obs.days.iter().map(|&t| d[t as usize]).collect(),
    ))
}

fn normalizer(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(0.0, f64::max);
    if m > 0.0 {
        m
    } else {
        1.0
    }
}

/// Normalized squared error over both cumulative series at the observed days.
pub fn fit_loss(candidate: &Candidate, spec: &FitSpec, obs: &ObservedSeries) -> Result<f64> {
    let (alo, ahi) = spec.alpha_bounds;
    let (blo, bhi) = spec.beta_bounds;
    if !(alo..=ahi).contains(&candidate.alpha) || !(blo..=bhi).contains(&candidate.beta) {
        return Err(Error::param("candidate", "alpha/beta outside the fit bounds"));
    }
    spec.check_covers(obs)?;
    let (c, d) = model_series(candidate, spec, obs)?;
    let (cn, dn) = (normalizer(&obs.cases), normalizer(&obs.deaths));
    let mut loss = 0.0;
    for k in 0..obs.len() {
        let ec = (c[k] - obs.cases[k]) / cn;
        let ed = (d[k] - obs.deaths[k]) / dn;
        loss += ec * ec + ed * ed;
    }
    Ok(loss)
}

struct TupleFit {
    alpha: f64,
    beta: f64,
    loss: f64,
    evals: usize,
}

/// Stratified start points: a near-square grid of cell centers over the box.
fn start_points(spec: &FitSpec) -> Vec<[f64; 2]> {
    let n = spec.starts;
    let cols = (n as f64).sqrt().ceil() as usize;
    let rows = n.div_ceil(cols);
    let (alo, ahi) = spec.alpha_bounds;
    let (blo, bhi) = spec.beta_bounds;
    (0..n)
        .map(|k| {
            let (i, j) = (k % cols, k / cols);
            [
                alo + (ahi - alo) * (i as f64 + 0.5) / cols as f64,
                blo + (bhi - blo) * (j as f64 + 0.5) / rows as f64,
            ]
        })
        .collect()
}

fn fit_tuple(taus: &[u32], spec: &FitSpec, obs: &ObservedSeries) -> Result<TupleFit> {
    // validate once so the objective closure can map errors to +inf
    fit_loss(
        &Candidate {
            alpha: spec.alpha_bounds.0,
            beta: spec.beta_bounds.0,
            taus: taus.to_vec(),
        },
        spec,
        obs,
    )?;
    let lower = [spec.alpha_bounds.0, spec.beta_bounds.0];
    let upper = [spec.alpha_bounds.1, spec.beta_bounds.1];
    let mut best: Option<TupleFit> = None;
    let mut evals = 0;
    for start in start_points(spec) {
        let m = nelder_mead::minimize(
            |x| {
                let c = Candidate {
                    alpha: x[0],
                    beta: x[1],
                    taus: taus.to_vec(),
                };
                fit_loss(&c, spec, obs).unwrap_or(f64::INFINITY)
            },
            &start,
            &lower,
            &upper,
            &spec.nelder_mead,
        );
        evals += m.evals;
        if best.as_ref().is_none_or(|b| m.value < b.loss) {
            best = Some(TupleFit {
                alpha: m.x[0],
                beta: m.x[1],
                loss: m.value,
                evals: 0,
            });
        }
    }
    let mut best = best.unwrap();
    best.evals = evals;
    Ok(best)
}

fn all_tuples(spec: &FitSpec) -> Vec<Vec<u32>> {
    let p = spec.intervals();
    let mut out = vec![Vec::with_capacity(p)];
    for _ in 0..p {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                (spec.tau_min..=spec.tau_max).map(move |tau| {
                    let mut v = prefix.clone();
                    v.push(tau);
                    v
                })
            })
            .collect();
    }
    out
}

/// Lowest loss wins; ties go to the lexicographically smaller tuple.
fn better(a: &(Vec<u32>, TupleFit), b: &(Vec<u32>, TupleFit)) -> bool {
    a.1.loss < b.1.loss || (a.1.loss == b.1.loss && a.0 < b.0)
}

fn search_exhaustive(spec: &FitSpec, obs: &ObservedSeries) -> Result<((Vec<u32>, TupleFit), usize, usize)> {
    let tuples = all_tuples(spec);
    let fits: Vec<(Vec<u32>, TupleFit)> = tuples
        .into_par_iter()
        .map(|taus| fit_tuple(&taus, spec, obs).map(|f| (taus, f)))
        .collect::<Result<_>>()?;
    let count = fits.len();
    let evals = fits.iter().map(|f| f.1.evals).sum();
    let best = fits
        .into_iter()
        .reduce(|a, b| if better(&b, &a) { b } else { a })
        .unwrap();
    Ok((best, count, evals))
}

fn search_coordinate(spec: &FitSpec, obs: &ObservedSeries) -> Result<((Vec<u32>, TupleFit), usize, usize)> {
    let mut taus = vec![spec.tau_min; spec.intervals()];
    let mut current = (taus.clone(), fit_tuple(&taus, spec, obs)?);
    let (mut count, mut evals) = (1, current.1.evals);
    loop {
        let mut improved = false;
        for k in 0..taus.len() {
            let trials: Vec<(Vec<u32>, TupleFit)> = (spec.tau_min..=spec.tau_max)
                .filter(|&v| v != taus[k])
                .map(|v| {
                    let mut t = taus.clone();
                    t[k] = v;
                    t
                })
                .collect::<Vec<_>>()
                .into_par_iter()
                .map(|t| fit_tuple(&t, spec, obs).map(|f| (t, f)))
                .collect::<Result<_>>()?;
            count += trials.len();
            evals += trials.iter().map(|f| f.1.evals).sum::<usize>();
            for trial in trials {
                if trial.1.loss < current.1.loss {
                    current = trial;
                    improved = true;
                }
            }
            taus = current.0.clone();
        }
        if !improved {
            break;
        }
    }
    Ok((current, count, evals))
}

/// Best `(α, β, τ-schedule)` for the observed series.
pub fn fit(obs: &ObservedSeries, spec: &FitSpec) -> Result<FitResult> {
    spec.validate()?;
    if obs.is_empty() {
        return Err(Error::EmptyData("observed series has no rows".into()));
    }
    spec.check_covers(obs)?;
    let ((taus, best), tuples_searched, evaluations) = if spec.tuple_count() <= MAX_ENUMERATED_TUPLES {
        search_exhaustive(spec, obs)?
    } else {
        search_coordinate(spec, obs)?
    };
    let candidate = Candidate {
        alpha: best.alpha,
        beta: best.beta,
        taus: taus.clone(),
    };
    let (fitted_cases, fitted_deaths) = model_series(&candidate, spec, obs)?;
    let reproduction_numbers = taus
        .iter()
        .map(|&tau| reproduction_number(best.alpha, best.beta, tau, &spec.kernel))
        .collect::<Result<_>>()?;
    Ok(FitResult {
        alpha: best.alpha,
        beta: best.beta,
        taus,
        reproduction_numbers,
        loss: best.loss,
        fitted_cases,
        fitted_deaths,
        tuples_searched,
        evaluations,
    })
}
