//! Value types shared by simulation, fitting and allocation.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::GammaKernel;

/// Disease parameters for one region.
///
/// `latent_d` and `sigma` are lag indices in days; the kernel is shared.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionParams {
    alpha: f64,
    latent_d: usize,
    sigma: usize,
    kernel: Arc<GammaKernel>,
}

impl RegionParams {
    pub fn new(alpha: f64, latent_d: usize, sigma: usize, kernel: Arc<GammaKernel>) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::param("alpha", format!("must lie in [0, 1], got {alpha}")));
        }
        if sigma < 1 {
            return Err(Error::param("sigma", "must be >= 1"));
        }
        kernel.check_lag(sigma)?;
        Ok(Self {
            alpha,
            latent_d,
            sigma,
            kernel,
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn latent_d(&self) -> usize {
        self.latent_d
    }

    pub fn sigma(&self) -> usize {
        self.sigma
    }

    pub fn kernel(&self) -> &GammaKernel {
        &self.kernel
    }

    pub fn kernel_arc(&self) -> &Arc<GammaKernel> {
        &self.kernel
    }

    pub fn with_alpha(&self, alpha: f64) -> Result<Self> {
        Self::new(alpha, self.latent_d, self.sigma, self.kernel.clone())
    }

    /// Fraction of a cohort still alive `i` days after becoming infectious.
    #[inline]
    pub fn surviving(&self, i: usize) -> f64 {
        1.0 - self.alpha * self.kernel.cdf(i)
    }
}

/// Cross-region transmission rates, `beta(from, into)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplingMatrix {
    m: usize,
    beta: Vec<f64>,
}

impl CouplingMatrix {
    /// `rows[i][r]` is the rate from region `i` into region `r`.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let m = rows.len();
        if m == 0 {
            return Err(Error::param("beta", "coupling matrix needs at least one region"));
        }
        let mut beta = Vec::with_capacity(m * m);
        for row in rows {
            if row.len() != m {
                return Err(Error::DimensionMismatch {
                    what: "coupling columns",
                    expected: m,
                    got: row.len(),
                });
            }
            for &b in row {
                if !(b.is_finite() && b >= 0.0) {
                    return Err(Error::param(
                        "beta",
                        format!("entries must be finite and >= 0, got {b}"),
                    ));
                }
                beta.push(b);
            }
        }
        Ok(Self { m, beta })
    }

    pub fn diagonal(rates: &[f64]) -> Result<Self> {
        let m = rates.len();
        let rows: Vec<Vec<f64>> = (0..m)
            .map(|i| (0..m).map(|r| if i == r { rates[i] } else { 0.0 }).collect())
            .collect();
        Self::from_rows(&rows)
    }

    pub fn regions(&self) -> usize {
        self.m
    }

    #[inline]
    pub fn get(&self, from: usize, into: usize) -> f64 {
        self.beta[from * self.m + into]
    }

    pub fn is_diagonal(&self) -> bool {
        (0..self.m).all(|i| (0..self.m).all(|r| i == r || self.get(i, r) == 0.0))
    }
}

/// Piecewise-constant integer isolation time.
///
/// `tau(t) = values[j]` for `t` in `(breakpoints[j], breakpoints[j + 1]]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ControlSchedule {
    breakpoints: Vec<i64>,
    values: Vec<u32>,
    tau_min: u32,
    tau_max: u32,
}

impl ControlSchedule {
    pub fn new(breakpoints: Vec<i64>, values: Vec<u32>, tau_min: u32, tau_max: u32) -> Result<Self> {
        if tau_min < 1 {
            return Err(Error::param("tau_min", "must be >= 1"));
        }
        if tau_max < tau_min {
            return Err(Error::param("tau_max", format!("{tau_max} is below tau_min {tau_min}")));
        }
        if values.is_empty() {
            return Err(Error::param("taus", "schedule needs at least one interval"));
        }
        if breakpoints.len() != values.len() + 1 {
            return Err(Error::DimensionMismatch {
                what: "breakpoints",
                expected: values.len() + 1,
                got: breakpoints.len(),
            });
        }
        if breakpoints.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::param("breakpoints", "must be strictly increasing"));
        }
        if let Some(&tau) = values.iter().find(|&&v| v < tau_min || v > tau_max) {
            return Err(Error::TauOutOfRange {
                tau,
                min: tau_min,
                max: tau_max,
            });
        }
        Ok(Self {
            breakpoints,
            values,
            tau_min,
            tau_max,
        })
    }

    /// One value on `(start, end]`, bounds collapsed to that value.
    pub fn constant(start: i64, end: i64, tau: u32) -> Result<Self> {
        Self::new(vec![start, end], vec![tau], tau.max(1), tau.max(1))
    }

    pub fn tau_at(&self, t: i64) -> Result<u32> {
        let first = self.breakpoints[0];
        let last = *self.breakpoints.last().unwrap();
        if t <= first || t > last {
            return Err(Error::ControlGap {
                day: t,
                first: first + 1,
                last,
            });
        }
        // first breakpoint >= t closes the interval containing t
        let j = self.breakpoints.partition_point(|&b| b < t);
        Ok(self.values[j - 1])
    }

    pub fn breakpoints(&self) -> &[i64] {
        &self.breakpoints
    }

    pub fn values(&self) -> &[u32] {
        &self.values
    }

    pub fn tau_min(&self) -> u32 {
        self.tau_min
    }

    pub fn tau_max(&self) -> u32 {
        self.tau_max
    }

    /// First day with a defined value.
    pub fn first_day(&self) -> i64 {
        self.breakpoints[0] + 1
    }

    pub fn last_day(&self) -> i64 {
        *self.breakpoints.last().unwrap()
    }

    pub fn covers(&self, from: i64, to: i64) -> Result<()> {
        if from < self.first_day() {
            self.tau_at(from)?;
        }
        if to > self.last_day() {
            self.tau_at(to)?;
        }
        Ok(())
    }

    /// Copy with the values of the intervals starting at or after `from` replaced by `tau`.
    pub fn with_tail(&self, from: i64, tau: u32) -> Result<Self> {
        let mut values = self.values.clone();
        for (j, v) in values.iter_mut().enumerate() {
            if self.breakpoints[j] >= from {
                *v = tau;
            }
        }
        Self::new(
            self.breakpoints.clone(),
            values,
            self.tau_min.min(tau),
            self.tau_max.max(tau),
        )
    }
}

/// How the seed value populates days `t <= 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SeedConvention {
    /// `x(t) = x0` for every `t <= 0`.
    Constant,
    /// `x(0) = x0`, zero earlier.
    Pulse,
    /// `x(t) = x0` for `-d <= t <= 0`, zero earlier: the span that enters
    /// the cumulative case count at the first step.
    #[default]
    Window,
}

impl SeedConvention {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "constant" => Ok(Self::Constant),
            "pulse" => Ok(Self::Pulse),
            "window" => Ok(Self::Window),
            other => Err(Error::param(
                "seed_convention",
                format!("expected constant|pulse|window, got `{other}`"),
            )),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Constant => "constant",
            Self::Pulse => "pulse",
            Self::Window => "window",
        }
    }

    pub fn value_at(&self, t: i64, x0: f64, latent_d: usize) -> f64 {
        debug_assert!(t <= 0);
        match self {
            Self::Constant => x0,
            Self::Pulse if t == 0 => x0,
            Self::Pulse => 0.0,
            Self::Window if t >= -(latent_d as i64) => x0,
            Self::Window => 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Seed {
    pub value: f64,
    pub convention: SeedConvention,
}

impl Seed {
    pub fn new(value: f64, convention: SeedConvention) -> Result<Self> {
        if !(value.is_finite() && value >= 0.0) {
            return Err(Error::param("x0", format!("must be finite and >= 0, got {value}")));
        }
        Ok(Self { value, convention })
    }
}

/// Daily new infections `x(t)` on a dense day range, prehistory included.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    region: usize,
    start: i64,
    values: Vec<f64>,
    seed: Seed,
}

impl Trajectory {
    pub(crate) fn seeded(region: usize, seed: Seed, latent_d: usize, depth: usize, capacity: usize) -> Self {
        let start = -(depth as i64);
        let mut values = Vec::with_capacity(depth + 1 + capacity);
        for t in start..=0 {
            values.push(seed.convention.value_at(t, seed.value, latent_d));
        }
        Self {
            region,
            start,
            values,
            seed,
        }
    }

    /// Builds a trajectory from explicit values starting at day `start`.
    pub fn from_values(region: usize, start: i64, values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::param("x", "trajectory values must be finite and >= 0"));
        }
        Ok(Self {
            region,
            start,
            values,
            seed: Seed {
                value: 0.0,
                convention: SeedConvention::Constant,
            },
        })
    }

    pub(crate) fn push(&mut self, v: f64) {
        self.values.push(v);
    }

    pub fn region(&self) -> usize {
        self.region
    }

    pub fn seed(&self) -> Seed {
        self.seed
    }

    /// Earliest stored day.
    pub fn start(&self) -> i64 {
        self.start
    }

    /// Last stored day.
    pub fn end(&self) -> i64 {
        self.start + self.values.len() as i64 - 1
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn at(&self, t: i64) -> Result<f64> {
        if t < self.start {
            return Err(Error::InsufficientHistory {
                day: t,
                earliest: self.start,
            });
        }
        self.values
            .get((t - self.start) as usize)
            .copied()
            .ok_or(Error::BeyondHorizon {
                day: t,
                last: self.end(),
            })
    }

    /// Values on `from..=to`.
    pub fn window(&self, from: i64, to: i64) -> Result<&[f64]> {
        self.at(from)?;
        self.at(to)?;
        Ok(&self.values[(from - self.start) as usize..=(to - self.start) as usize])
    }
}

/// Bed capacity for one region: base plus tranches arriving on fixed days.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BedPlan {
    pub region: usize,
    pub start_day: i64,
    pub base: f64,
    pub tranche_days: Vec<i64>,
    pub tranche_sizes: Vec<f64>,
}

impl BedPlan {
    pub fn new(
        region: usize,
        start_day: i64,
        base: f64,
        tranche_days: Vec<i64>,
        tranche_sizes: Vec<f64>,
    ) -> Result<Self> {
        if !(base.is_finite() && base >= 0.0) {
            return Err(Error::param(
                "base_beds",
                format!("must be finite and >= 0, got {base}"),
            ));
        }
        if tranche_days.len() != tranche_sizes.len() {
            return Err(Error::DimensionMismatch {
                what: "tranche sizes",
                expected: tranche_days.len(),
                got: tranche_sizes.len(),
            });
        }
        if tranche_sizes.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return Err(Error::param("tranche_sizes", "must be finite and >= 0"));
        }
        Ok(Self {
            region,
            start_day,
            base,
            tranche_days,
            tranche_sizes,
        })
    }

    /// `b(t)`: base plus every tranche with `T^b_i <= t`.
    pub fn beds_at(&self, t: i64) -> f64 {
        let mut b = self.base;
        for (&day, &size) in self.tranche_days.iter().zip(&self.tranche_sizes) {
            if day <= t {
                b += size;
            }
        }
        b
    }

    pub fn total(&self) -> f64 {
        self.base + self.tranche_sizes.iter().sum::<f64>()
    }
}

/// Funds available per day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Budget {
    Constant(f64),
    /// `per_day[k]` applies to day `first_day + k`; later days reuse the last entry.
    Daily {
        first_day: i64,
        per_day: Vec<f64>,
    },
}

impl Budget {
    pub fn at(&self, t: i64) -> f64 {
        match self {
            Budget::Constant(f) => *f,
            Budget::Daily { first_day, per_day } => {
                let k = (t - first_day).max(0) as usize;
                per_day.get(k).or(per_day.last()).copied().unwrap_or(0.0)
            }
        }
    }
}

/// Linear cost coefficients and the daily budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostModel {
    pub bed_cost: f64,
    pub service_cost: f64,
    pub pre_hospital_cost: f64,
    pub budget: Budget,
}

impl CostModel {
    pub fn new(bed_cost: f64, service_cost: f64, pre_hospital_cost: f64, budget: Budget) -> Result<Self> {
        for (name, v) in [
            ("bed_cost", bed_cost),
            ("service_cost", service_cost),
            ("pre_hospital_cost", pre_hospital_cost),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::param(name, format!("must be finite and >= 0, got {v}")));
            }
        }
        let funds_ok = match &budget {
            Budget::Constant(f) => f.is_finite() && *f >= 0.0,
            Budget::Daily { per_day, .. } => !per_day.is_empty() && per_day.iter().all(|f| f.is_finite() && *f >= 0.0),
        };
        if !funds_ok {
            return Err(Error::param("budget", "funds must be finite, nonempty and >= 0"));
        }
        Ok(Self {
            bed_cost,
            service_cost,
            pre_hospital_cost,
            budget,
        })
    }
}
