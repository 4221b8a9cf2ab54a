//! Gamma-distributed death-delay kernel.
//!
//! The kernel tabulates the gamma CDF `ω(i)` and density `ω_p(i)` at integer
//! day lags `i = 0..=n`. Integer arguments are plugged straight into the
//! continuous functions; no mass is binned into day intervals, so
//! `Σ ω_p(i)` only approximates one.
//!
//! Special functions come from `statrs`.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::{gamma_lr, ln_gamma};

use crate::error::{Error, Result};

/// Longest kernel table [`GammaKernel::build`] accepts.
pub const MAX_LAG: usize = 100_000;

/// Shape/rate parametrisation of a gamma distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaParams {
    shape: f64,
    rate: f64,
}

impl GammaParams {
    /// Shape 10, rate 1.3333 per day (mean ≈ 7.5 days).
    pub const EBOLA_DEATH_DELAY: GammaParams = GammaParams {
        shape: 10.0,
        rate: 1.3333,
    };

    pub fn new(shape: f64, rate: f64) -> Result<Self> {
        if !(shape.is_finite() && shape > 0.0) {
            return Err(Error::param("shape", format!("must be finite and > 0, got {shape}")));
        }
        if !(rate.is_finite() && rate > 0.0) {
            return Err(Error::param("rate", format!("must be finite and > 0, got {rate}")));
        }
        Ok(Self { shape, rate })
    }

    pub fn shape(&self) -> f64 {
        self.shape
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn mean(&self) -> f64 {
        self.shape / self.rate
    }

    fn validate(&self) -> Result<()> {
        Self::new(self.shape, self.rate).map(|_| ())
    }
}

impl Default for GammaParams {
    fn default() -> Self {
        Self::EBOLA_DEATH_DELAY
    }
}

/// Gamma density `b^a / Γ(a) · x^(a−1) · e^(−bx)`.
pub fn gamma_pdf(x: f64, p: &GammaParams) -> Result<f64> {
    p.validate()?;
    if !(x >= 0.0) {
        return Err(Error::param("x", format!("must be >= 0, got {x}")));
    }
    let (a, b) = (p.shape, p.rate);
    if x == 0.0 {
        return Ok(match a {
            a if a > 1.0 => 0.0,
            1.0 => b,
            _ => f64::INFINITY,
        });
    }
    let ln = a * b.ln() - ln_gamma(a) + (a - 1.0) * x.ln() - b * x;
    Ok(ln.exp())
}

/// Gamma CDF `P(a, b·x)`.
pub fn gamma_cdf(x: f64, p: &GammaParams) -> Result<f64> {
    p.validate()?;
    if !(x >= 0.0) {
        return Err(Error::param("x", format!("must be >= 0, got {x}")));
    }
    let z = p.rate * x;
    Ok(if z == 0.0 {
        0.0
    } else if z.is_infinite() {
        1.0
    } else {
        gamma_lr(p.shape, z)
    })
}

/// Tabulated `ω(i)` and `ω_p(i)` for `i = 0..=max_lag`.
///
/// Immutable once built; share it behind an `Arc` between regions.
#[derive(Debug, Clone, PartialEq)]
pub struct GammaKernel {
    params: GammaParams,
    cdf: Vec<f64>,
    pdf: Vec<f64>,
}

impl GammaKernel {
    pub fn build(params: GammaParams, max_lag: usize) -> Result<Self> {
        params.validate()?;
        if !(1..=MAX_LAG).contains(&max_lag) {
            return Err(Error::param(
                "max_lag",
                format!("must be in 1..={MAX_LAG}, got {max_lag}"),
            ));
        }
        let mut cdf = Vec::with_capacity(max_lag + 1);
        let mut pdf = Vec::with_capacity(max_lag + 1);
        for i in 0..=max_lag {
            cdf.push(gamma_cdf(i as f64, &params)?);
            pdf.push(gamma_pdf(i as f64, &params)?);
        }
        Ok(Self { params, cdf, pdf })
    }

    pub fn params(&self) -> GammaParams {
        self.params
    }

    pub fn max_lag(&self) -> usize {
        self.cdf.len() - 1
    }

    /// `ω(i)`. Panics if `i > max_lag`; callers validate lags up front.
    #[inline]
    pub fn cdf(&self, i: usize) -> f64 {
        self.cdf[i]
    }

    /// `ω_p(i)`. Panics if `i > max_lag`.
    #[inline]
    pub fn pdf(&self, i: usize) -> f64 {
        self.pdf[i]
    }

    pub fn cdf_table(&self) -> &[f64] {
        &self.cdf
    }

    pub fn pdf_table(&self) -> &[f64] {
        &self.pdf
    }

    pub(crate) fn check_lag(&self, lag: usize) -> Result<()> {
        if lag > self.max_lag() {
            Err(Error::KernelTooShort {
                lag,
                max_lag: self.max_lag(),
            })
        } else {
            Ok(())
        }
    }
}
