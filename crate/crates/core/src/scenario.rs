//! TOML scenario files.
//!
//! ```toml
//! [model]
//! horizon = 150
//! latent_days = 6
//! sigma = 10
//! tau_min = 3
//! tau_max = 5
//!
//! [kernel]
//! shape = 10.0
//! rate = 1.3333
//! max_lag = 35
//!
//! [[regions]]
//! name = "north"
//! alpha = 0.6
//! x0 = 2.0
//! base_beds = 126.0
//! control = { breakpoints = [-1, 48, 100, 150], taus = [4, 5, 3] }
//!
//! [coupling]
//! beta = [[0.30]]
//!
//! [beds]
//! tranche_days = [101, 108]
//! tranche_sizes = [350.0, 300.0]
//!
//! [objective]
//! weight = 100.0
//! window_start = 100
//! ```
//!
//! Validation collects every problem before reporting, so a hand-edited file
//! can be fixed in one pass.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::allocate::AllocationProblem;
use crate::error::{Error, Result};
use crate::fit::FitSpec;
use crate::kernel::{GammaKernel, GammaParams};
use crate::model::{Budget, ControlSchedule, CostModel, CouplingMatrix, RegionParams, Seed, SeedConvention};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub model: ModelSection,
    #[serde(default)]
    pub kernel: KernelSection,
    pub regions: Vec<RegionSection>,
    pub coupling: CouplingSection,
    pub beds: Option<BedsSection>,
    pub objective: Option<ObjectiveSection>,
    pub costs: Option<CostsSection>,
    pub fit: Option<FitSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub horizon: i64,
    pub latent_days: usize,
    pub sigma: usize,
    #[serde(default)]
    pub seed_convention: SeedConvention,
    pub tau_min: u32,
    pub tau_max: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSection {
    pub shape: f64,
    pub rate: f64,
    pub max_lag: usize,
}

impl Default for KernelSection {
    fn default() -> Self {
        let p = GammaParams::default();
        Self {
            shape: p.shape(),
            rate: p.rate(),
            max_lag: 35,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionSection {
    pub name: String,
    pub alpha: f64,
    pub x0: f64,
    #[serde(default)]
    pub base_beds: f64,
    /// Overrides `model.latent_days`.
    pub latent_days: Option<usize>,
    /// Overrides `model.sigma`.
    pub sigma: Option<usize>,
    pub control: ControlSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlSection {
    pub breakpoints: Vec<i64>,
    pub taus: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CouplingSection {
    /// `beta[i][r]`: infections in region `r` per active case in region `i`.
    pub beta: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BedsSection {
    pub tranche_days: Vec<i64>,
    pub tranche_sizes: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectiveSection {
    pub weight: f64,
    pub window_start: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostsSection {
    pub bed: f64,
    pub service: f64,
    pub pre_hospital: f64,
    pub budget: Budget,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitSection {
    /// Interval edges in days after the first observation; must start below 0.
    pub breakpoints: Vec<i64>,
    pub x0: f64,
    pub alpha_bounds: [f64; 2],
    pub beta_bounds: [f64; 2],
    /// Overrides `model.latent_days`.
    pub latent_days: Option<usize>,
    pub starts: Option<usize>,
}

/// A validated scenario with model objects built.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub file: ScenarioFile,
    pub names: Vec<String>,
    pub regions: Vec<RegionParams>,
    pub coupling: CouplingMatrix,
    pub controls: Vec<ControlSchedule>,
    pub seeds: Vec<Seed>,
    pub kernel: Arc<GammaKernel>,
}

fn note<T>(errors: &mut Vec<String>, context: &str, r: Result<T>) -> Option<T> {
    match r {
        Ok(v) => Some(v),
        Err(e) => {
            errors.push(format!("{context}: {e}"));
            None
        }
    }
}

impl ScenarioFile {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Scenario(vec![e.to_string().trim_end().to_string()]))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    /// Checks every section and builds the model objects.
    pub fn build(self) -> Result<Scenario> {
        let mut errors = Vec::new();
        let m = &self.model;
        if m.horizon < 1 {
            errors.push(format!("model.horizon: must be >= 1, got {}", m.horizon));
        }
        if m.tau_min < 1 || m.tau_max < m.tau_min {
            errors.push(format!(
                "model: need 1 <= tau_min <= tau_max, got {}..{}",
                m.tau_min, m.tau_max
            ));
        }
        let kernel = note(
            &mut errors,
            "kernel",
            GammaParams::new(self.kernel.shape, self.kernel.rate)
                .and_then(|p| GammaKernel::build(p, self.kernel.max_lag))
                .map(Arc::new),
        );
        if self.regions.is_empty() {
            errors.push("regions: need at least one region".into());
        }
        for (i, r) in self.regions.iter().enumerate() {
            if self.regions[..i].iter().any(|o| o.name == r.name) {
                errors.push(format!("regions[{i}]: duplicate name `{}`", r.name));
            }
        }

        let mut regions = Vec::new();
        let mut controls = Vec::new();
        let mut seeds = Vec::new();
        for (i, r) in self.regions.iter().enumerate() {
            let ctx = format!("regions[{i}] `{}`", r.name);
            if let Some(k) = &kernel {
                let d = r.latent_days.unwrap_or(m.latent_days);
                let sigma = r.sigma.unwrap_or(m.sigma);
                if let Some(p) = note(&mut errors, &ctx, RegionParams::new(r.alpha, d, sigma, k.clone())) {
                    regions.push(p);
                }
            }
            let ctl = note(
                &mut errors,
                &format!("{ctx} control"),
                ControlSchedule::new(
                    r.control.breakpoints.clone(),
                    r.control.taus.clone(),
                    m.tau_min,
                    m.tau_max,
                ),
            );
            if let Some(c) = ctl {
                if m.horizon >= 1 {
                    note(&mut errors, &format!("{ctx} control"), c.covers(0, m.horizon - 1));
                }
                controls.push(c);
            }
            if let Some(s) = note(&mut errors, &ctx, Seed::new(r.x0, m.seed_convention)) {
                seeds.push(s);
            }
            if !(r.base_beds.is_finite() && r.base_beds >= 0.0) {
                errors.push(format!("{ctx}: base_beds must be finite and >= 0, got {}", r.base_beds));
            }
        }

        let coupling = note(&mut errors, "coupling", CouplingMatrix::from_rows(&self.coupling.beta));
        if let Some(c) = &coupling {
            if c.regions() != self.regions.len() {
                errors.push(format!(
                    "coupling: beta is {0}x{0} but {1} regions are defined",
                    c.regions(),
                    self.regions.len()
                ));
            }
        }

        if let Some(b) = &self.beds {
            if b.tranche_days.len() != b.tranche_sizes.len() {
                errors.push(format!(
                    "beds: {} tranche days but {} tranche sizes",
                    b.tranche_days.len(),
                    b.tranche_sizes.len()
                ));
            }
            if b.tranche_days.is_empty() {
                errors.push("beds: need at least one tranche".into());
            }
            if b.tranche_sizes.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
                errors.push("beds: tranche sizes must be finite and >= 0".into());
            }
        }
        if let Some(o) = &self.objective {
            if !(o.weight.is_finite() && o.weight >= 0.0) {
                errors.push(format!("objective.weight: must be finite and >= 0, got {}", o.weight));
            }
            if o.window_start < 0 || o.window_start >= m.horizon {
                errors.push(format!(
                    "objective.window_start: window ({}, {}] is empty or starts before day 0",
                    o.window_start, m.horizon
                ));
            }
        }
        if let Some(c) = &self.costs {
            note(
                &mut errors,
                "costs",
                CostModel::new(c.bed, c.service, c.pre_hospital, c.budget.clone()),
            );
        }
        if let (Some(f), Some(k)) = (&self.fit, &kernel) {
            note(&mut errors, "fit", self.fit_spec_with(f, k.clone()));
        }

        if !errors.is_empty() {
            return Err(Error::Scenario(errors));
        }
        Ok(Scenario {
            names: self.regions.iter().map(|r| r.name.clone()).collect(),
            regions,
            coupling: coupling.unwrap(),
            controls,
            seeds,
            kernel: kernel.unwrap(),
            file: self,
        })
    }

    fn fit_spec_with(&self, f: &FitSection, kernel: Arc<GammaKernel>) -> Result<FitSpec> {
        let mut spec = FitSpec::new(
            f.breakpoints.clone(),
            (self.model.tau_min, self.model.tau_max),
            (f.alpha_bounds[0], f.alpha_bounds[1]),
            (f.beta_bounds[0], f.beta_bounds[1]),
            Seed::new(f.x0, self.model.seed_convention)?,
            f.latent_days.unwrap_or(self.model.latent_days),
            kernel,
        )?;
        if let Some(s) = f.starts {
            if s == 0 {
                return Err(Error::param("starts", "need at least one start"));
            }
            spec.starts = s;
        }
        Ok(spec)
    }
}

impl Scenario {
    pub fn from_toml(text: &str) -> Result<Self> {
        ScenarioFile::parse(text)?.build()
    }

    pub fn horizon(&self) -> i64 {
        self.file.model.horizon
    }

    /// Same scenario with a different seed convention.
    pub fn with_seed_convention(&self, convention: SeedConvention) -> Result<Self> {
        let mut file = self.file.clone();
        file.model.seed_convention = convention;
        file.build()
    }

    /// Replaces each region's τ on the planning window `(window_start, horizon]`.
    pub fn with_planning_taus(&self, taus: &[u32]) -> Result<Self> {
        let o = self.objective()?;
        if taus.len() != self.regions.len() {
            return Err(Error::DimensionMismatch {
                what: "planning taus",
                expected: self.regions.len(),
                got: taus.len(),
            });
        }
        let mut file = self.file.clone();
        for (r, (region, &tau)) in file.regions.iter_mut().zip(taus).enumerate() {
            let ctl = self.controls[r].with_tail(o.window_start, tau)?;
            region.control = ControlSection {
                breakpoints: ctl.breakpoints().to_vec(),
                taus: ctl.values().to_vec(),
            };
        }
        file.build()
    }

    fn objective(&self) -> Result<&ObjectiveSection> {
        self.file
            .objective
            .as_ref()
            .ok_or_else(|| Error::Scenario(vec!["objective: section required for allocation".into()]))
    }

    pub fn allocation_problem(&self) -> Result<AllocationProblem> {
        let o = self.objective()?;
        let b = self
            .file
            .beds
            .as_ref()
            .ok_or_else(|| Error::Scenario(vec!["beds: section required for allocation".into()]))?;
        let cost = match &self.file.costs {
            Some(c) => Some(CostModel::new(c.bed, c.service, c.pre_hospital, c.budget.clone())?),
            None => None,
        };
        Ok(AllocationProblem {
            regions: self.regions.clone(),
            coupling: self.coupling.clone(),
            controls: self.controls.clone(),
            seeds: self.seeds.clone(),
            base_beds: self.file.regions.iter().map(|r| r.base_beds).collect(),
            tranche_days: b.tranche_days.clone(),
            tranche_sizes: b.tranche_sizes.clone(),
            weight: o.weight,
            window_start: o.window_start,
            horizon: self.horizon(),
            cost,
        })
    }

    pub fn fit_spec(&self) -> Result<FitSpec> {
        let f = self
            .file
            .fit
            .as_ref()
            .ok_or_else(|| Error::Scenario(vec!["fit: section required for fitting".into()]))?;
        self.file.fit_spec_with(f, self.kernel.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TWO_REGIONS: &str = r#"
[model]
horizon = 150
latent_days = 6
sigma = 10
tau_min = 3
tau_max = 5

[[regions]]
name = "north"
alpha = 0.6
x0 = 2.0
base_beds = 126.0
control = { breakpoints = [-1, 48, 100, 150], taus = [4, 5, 3] }

[[regions]]
name = "south"
alpha = 0.6
x0 = 2.0
base_beds = 60.0
control = { breakpoints = [-1, 48, 100, 150], taus = [4, 5, 3] }

[coupling]
beta = [[0.30, 0.0], [0.0, 0.28]]

[beds]
tranche_days = [101, 108, 115, 122]
tranche_sizes = [350.0, 300.0, 100.0, 20.0]

[objective]
weight = 100.0
window_start = 100
"#;

    #[test]
    fn parses_and_builds() {
        let s = Scenario::from_toml(TWO_REGIONS).unwrap();
        assert_eq!(s.names, vec!["north", "south"]);
        assert_eq!(s.file.model.seed_convention, SeedConvention::Window);
        assert_eq!(s.kernel.max_lag(), 35);
        let p = s.allocation_problem().unwrap();
        assert_eq!(p.base_beds, vec![126.0, 60.0]);
        assert!(s.fit_spec().is_err());
    }

    #[test]
    fn round_trips_through_toml() {
        let s = ScenarioFile::parse(TWO_REGIONS).unwrap();
        assert_eq!(ScenarioFile::parse(&s.to_toml()).unwrap(), s);
    }

    #[test]
    fn reports_all_errors_at_once() {
        let text = TWO_REGIONS
            .replace(
                "alpha = 0.6\nx0 = 2.0\nbase_beds = 60.0",
                "alpha = 1.6\nx0 = -2.0\nbase_beds = 60.0",
            )
            .replace("weight = 100.0", "weight = -1.0")
            .replace("taus = [4, 5, 3] }\n\n[coupling]", "taus = [4, 9, 3] }\n\n[coupling]");
        let Err(Error::Scenario(errs)) = Scenario::from_toml(&text) else {
            panic!("expected validation failure");
        };
        assert_eq!(errs.len(), 4, "{errs:#?}");
    }

    #[test]
    fn rejects_unknown_keys_and_shape_mismatch() {
        assert!(Scenario::from_toml(&TWO_REGIONS.replace("sigma = 10", "sigma = 10\nsigmaa = 3")).is_err());
        assert!(Scenario::from_toml(&TWO_REGIONS.replace("[[0.30, 0.0], [0.0, 0.28]]", "[[0.30]]")).is_err());
        assert!(Scenario::from_toml(&TWO_REGIONS.replace("name = \"south\"", "name = \"north\"")).is_err());
    }

    #[test]
    fn planning_taus_replace_the_tail() {
        let s = Scenario::from_toml(TWO_REGIONS)
            .unwrap()
            .with_planning_taus(&[5, 4])
            .unwrap();
        assert_eq!(s.controls[0].tau_at(120).unwrap(), 5);
        assert_eq!(s.controls[1].tau_at(120).unwrap(), 4);
        assert_eq!(s.controls[1].tau_at(60).unwrap(), 5);
    }

    #[test]
    fn budget_forms() {
        let constant =
            format!("{TWO_REGIONS}\n[costs]\nbed = 1.0\nservice = 2.0\npre_hospital = 3.0\nbudget = 500.0\n");
        let s = Scenario::from_toml(&constant).unwrap();
        assert_eq!(
            s.allocation_problem().unwrap().cost.unwrap().budget,
            Budget::Constant(500.0)
        );
        let daily = format!(
            "{TWO_REGIONS}\n[costs]\nbed = 1.0\nservice = 2.0\npre_hospital = 3.0\nbudget = {{ first_day = 101, per_day = [5.0, 6.0] }}\n"
        );
        let s = Scenario::from_toml(&daily).unwrap();
        assert_eq!(s.allocation_problem().unwrap().cost.unwrap().budget.at(102), 6.0);
    }
}
