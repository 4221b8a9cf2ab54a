//! Distribution of new bed tranches across regions.
//!
//! The objective is
//!
//! ```text
//! Σ_r [ x_r(T) + K · Σ_{t ∈ (T0, T]} h_r(t) / b_r(t) ]
//! ```
//!
//! Dynamics do not depend on beds, so `x_r` and `h_r` are computed once per
//! problem and the objective is a sum of `1/b` terms: convex in the tranche
//! shares. Shares are a probability vector per tranche (`λ, 1 − λ` for two
//! regions), i.e. the capacity constraint is always met with equality.

use crate::error::{Error, Result};
use crate::model::{BedPlan, ControlSchedule, CostModel, CouplingMatrix, RegionParams, Seed, Trajectory};
use crate::simulate::{cumulative_infections, hospitalized, simulate_multi};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProblemKind {
    /// Capacity constraint only.
    Capacity,
    /// Capacity plus the daily cost constraint.
    CapacityAndCost,
}

#[derive(Debug, Clone)]
pub struct AllocationProblem {
    pub regions: Vec<RegionParams>,
    pub coupling: CouplingMatrix,
    /// Controls fixed over the whole horizon, planning window included.
    pub controls: Vec<ControlSchedule>,
    pub seeds: Vec<Seed>,
    pub base_beds: Vec<f64>,
    pub tranche_days: Vec<i64>,
    pub tranche_sizes: Vec<f64>,
    /// Weight `K` of the occupancy penalty.
    pub weight: f64,
    /// Planning window is `(window_start, horizon]`.
    pub window_start: i64,
    pub horizon: i64,
    pub cost: Option<CostModel>,
}

impl AllocationProblem {
    pub fn regions(&self) -> usize {
        self.regions.len()
    }

    pub fn tranches(&self) -> usize {
        self.tranche_days.len()
    }

    fn validate(&self) -> Result<()> {
        let m = self.coupling.regions();
        for (what, got) in [
            ("region params", self.regions.len()),
            ("controls", self.controls.len()),
            ("seeds", self.seeds.len()),
            ("base bed counts", self.base_beds.len()),
        ] {
            if got != m {
                return Err(Error::DimensionMismatch { what, expected: m, got });
            }
        }
        if self.tranche_days.is_empty() {
            return Err(Error::param("tranches", "need at least one tranche"));
        }
        if self.tranche_sizes.len() != self.tranche_days.len() {
            return Err(Error::DimensionMismatch {
                what: "tranche sizes",
                expected: self.tranche_days.len(),
                got: self.tranche_sizes.len(),
            });
        }
        if self.tranche_sizes.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return Err(Error::param("tranche_sizes", "must be finite and >= 0"));
        }
        if self.base_beds.iter().any(|b| !(b.is_finite() && *b >= 0.0)) {
            return Err(Error::param("base_beds", "must be finite and >= 0"));
        }
        if !(self.weight.is_finite() && self.weight >= 0.0) {
            return Err(Error::param(
                "weight",
                format!("K must be finite and >= 0, got {}", self.weight),
            ));
        }
        if self.horizon <= self.window_start {
            return Err(Error::param(
                "window",
                format!("planning window ({}, {}] is empty", self.window_start, self.horizon),
            ));
        }
        if self.window_start < 0 {
            return Err(Error::param("window", "window must start at day >= 0"));
        }
        Ok(())
    }

    /// Simulates once and tabulates everything the objective needs.
    pub fn prepare(&self) -> Result<PreparedProblem> {
        self.validate()?;
        let trajectories = simulate_multi(&self.regions, &self.coupling, &self.controls, &self.seeds, self.horizon)?;
        let days: Vec<i64> = (self.window_start + 1..=self.horizon).collect();
        let mut hosp = Vec::with_capacity(self.regions());
        let mut hosp_next = Vec::with_capacity(self.regions());
        for r in 0..self.regions() {
            let mut row = Vec::with_capacity(days.len());
            for &t in &days {
                let tau = self.controls[r].tau_at(t)?;
                row.push(hospitalized(&trajectories[r], &self.regions[r], tau, t)?);
            }
            hosp.push(row);
            // h(T + 1) for the forward difference on the last day, when defined
            let after = self.controls[r]
                .tau_at(self.horizon + 1)
                .ok()
                .and_then(|tau| hospitalized(&trajectories[r], &self.regions[r], tau, self.horizon + 1).ok());
            hosp_next.push(after);
        }
        let final_new_cases = trajectories
            .iter()
            .map(|x| x.at(self.horizon))
            .collect::<Result<Vec<_>>>()?;
        let final_infections = trajectories
            .iter()
            .map(|x| cumulative_infections(x, self.horizon))
            .collect::<Result<Vec<_>>>()?;
        // tranche index -> first window position where it is available
        let tranche_offsets = self
            .tranche_days
            .iter()
            .map(|&d| days.partition_point(|&t| t < d))
            .collect();
        Ok(PreparedProblem {
            problem: self.clone(),
            trajectories,
            days,
            hosp,
            hosp_next,
            final_new_cases,
            final_infections,
            tranche_offsets,
        })
    }
}

/// Per-tranche shares: `shares[j][r]` is the fraction of tranche `j` given to region `r`.
#[derive(Debug, Clone, PartialEq)]
pub struct Shares(pub Vec<Vec<f64>>);

impl Shares {
    pub fn uniform(q: usize, m: usize) -> Self {
        Shares(vec![vec![1.0 / m as f64; m]; q])
    }

    /// Two-region form: `λ_j` to region 0, `1 − λ_j` to region 1.
    pub fn from_lambdas(lambdas: &[f64]) -> Self {
        Shares(lambdas.iter().map(|&l| vec![l, 1.0 - l]).collect())
    }

    pub fn lambdas(&self) -> Vec<f64> {
        self.0.iter().map(|s| s[0]).collect()
    }

    pub fn tranches(&self) -> usize {
        self.0.len()
    }

    fn flat_distance(&self, other: &Shares) -> f64 {
        self.0
            .iter()
            .flatten()
            .zip(other.0.iter().flatten())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}

/// Euclidean projection onto the probability simplex.
pub fn project_simplex(v: &[f64]) -> Vec<f64> {
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (k, &uk) in u.iter().enumerate() {
        cumsum += uk;
        let t = (cumsum - 1.0) / (k + 1) as f64;
        if uk - t > 0.0 {
            theta = t;
        }
    }
    v.iter().map(|&x| (x - theta).max(0.0)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OccupancyStats {
    pub mean: f64,
    pub max: f64,
    pub max_day: i64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub region: usize,
    pub day: i64,
    pub occupancy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeasibilityReport {
    pub feasible: bool,
    pub occupancy_violations: Vec<Violation>,
    /// Days where spending exceeds the budget.
    pub cost_violations: Vec<i64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostCheck {
    pub satisfied: bool,
    pub spend: f64,
    pub budget: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AllocationSolution {
    pub shares: Shares,
    pub plans: Vec<BedPlan>,
    pub objective: f64,
    /// `x_r(T)`.
    pub final_new_cases: Vec<f64>,
    /// Infections accumulated over `1..=T`.
    pub final_infections: Vec<f64>,
    pub occupancy: Vec<OccupancyStats>,
    pub feasibility: FeasibilityReport,
    /// Objective decrease still available from one projected-gradient step.
    pub stationarity_gap: f64,
}

impl AllocationSolution {
    /// Beds from tranche `j` given to region `r`.
    pub fn tranche_beds(&self, r: usize) -> Vec<f64> {
        self.plans[r].tranche_sizes.clone()
    }
}

/// A problem with dynamics already simulated.
#[derive(Debug, Clone)]
pub struct PreparedProblem {
    problem: AllocationProblem,
    trajectories: Vec<Trajectory>,
    days: Vec<i64>,
    hosp: Vec<Vec<f64>>,
    hosp_next: Vec<Option<f64>>,
    final_new_cases: Vec<f64>,
    final_infections: Vec<f64>,
    tranche_offsets: Vec<usize>,
}

impl PreparedProblem {
    pub fn problem(&self) -> &AllocationProblem {
        &self.problem
    }

    pub fn trajectories(&self) -> &[Trajectory] {
        &self.trajectories
    }

    pub fn window_days(&self) -> &[i64] {
        &self.days
    }

    /// `h_r(t)` over the window.
    pub fn hospitalized(&self, r: usize) -> &[f64] {
        &self.hosp[r]
    }

    pub fn final_new_cases(&self) -> &[f64] {
        &self.final_new_cases
    }

    pub fn final_infections(&self) -> &[f64] {
        &self.final_infections
    }

    fn m(&self) -> usize {
        self.problem.regions()
    }

    fn q(&self) -> usize {
        self.problem.tranches()
    }

    pub fn plans(&self, shares: &Shares) -> Result<Vec<BedPlan>> {
        self.check_shares(shares)?;
        (0..self.m())
            .map(|r| {
                BedPlan::new(
                    r,
                    self.problem.window_start,
                    self.problem.base_beds[r],
                    self.problem.tranche_days.clone(),
                    shares
                        .0
                        .iter()
                        .zip(&self.problem.tranche_sizes)
                        .map(|(s, size)| s[r] * size)
                        .collect(),
                )
            })
            .collect()
    }

    fn check_shares(&self, shares: &Shares) -> Result<()> {
        if shares.tranches() != self.q() {
            return Err(Error::DimensionMismatch {
                what: "tranche shares",
                expected: self.q(),
                got: shares.tranches(),
            });
        }
        for s in &shares.0 {
            if s.len() != self.m() {
                return Err(Error::DimensionMismatch {
                    what: "region shares",
                    expected: self.m(),
                    got: s.len(),
                });
            }
            if s.iter().any(|v| !(-1e-12..=1.0 + 1e-12).contains(v)) || (s.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                return Err(Error::param(
                    "shares",
                    "each tranche must be split into fractions summing to 1",
                ));
            }
        }
        Ok(())
    }

    /// `b_r(t)` over the window for given shares.
    fn bed_rows(&self, shares: &Shares) -> Vec<Vec<f64>> {
        let n = self.days.len();
        (0..self.m())
            .map(|r| {
                let mut row = vec![self.problem.base_beds[r]; n];
                for (j, &off) in self.tranche_offsets.iter().enumerate() {
                    let add = shares.0[j][r] * self.problem.tranche_sizes[j];
                    for b in &mut row[off..] {
                        *b += add;
                    }
                }
                row
            })
            .collect()
    }

    fn penalty_from_beds(&self, beds: &[Vec<f64>]) -> Result<f64> {
        let mut total = 0.0;
        for r in 0..self.m() {
            for (k, (&h, &b)) in self.hosp[r].iter().zip(&beds[r]).enumerate() {
                if !(b > 0.0) {
                    return Err(Error::NonPositiveBeds {
                        region: r,
                        day: self.days[k],
                        beds: b,
                    });
                }
                total += h / b;
            }
        }
        Ok(self.problem.weight * total)
    }

    fn constant_term(&self) -> f64 {
        self.final_new_cases.iter().sum()
    }

    /// Objective for tranche shares.
    pub fn objective_shares(&self, shares: &Shares) -> Result<f64> {
        self.check_shares(shares)?;
        Ok(self.constant_term() + self.penalty_from_beds(&self.bed_rows(shares))?)
    }

    fn objective_or_inf(&self, shares: &Shares) -> f64 {
        self.penalty_from_beds(&self.bed_rows(shares))
            .map(|p| self.constant_term() + p)
            .unwrap_or(f64::INFINITY)
    }

    /// Objective for explicit per-region plans.
    pub fn objective(&self, plans: &[BedPlan]) -> Result<f64> {
        let beds = self.plan_rows(plans)?;
        Ok(self.constant_term() + self.penalty_from_beds(&beds)?)
    }

    fn plan_rows(&self, plans: &[BedPlan]) -> Result<Vec<Vec<f64>>> {
        if plans.len() != self.m() {
            return Err(Error::DimensionMismatch {
                what: "bed plans",
                expected: self.m(),
                got: plans.len(),
            });
        }
        Ok(plans
            .iter()
            .map(|p| self.days.iter().map(|&t| p.beds_at(t)).collect())
            .collect())
    }

    /// `∂/∂s_{j,r}` of the objective.
    pub fn gradient(&self, shares: &Shares) -> Result<Shares> {
        self.check_shares(shares)?;
        let beds = self.bed_rows(shares);
        let k = self.problem.weight;
        let mut grad = vec![vec![0.0; self.m()]; self.q()];
        for r in 0..self.m() {
            // suffix sums of h/b² so each tranche reads its tail in O(1)
            let n = self.days.len();
            let mut tail = vec![0.0; n + 1];
            for i in (0..n).rev() {
                let b = beds[r][i];
                if !(b > 0.0) {
                    return Err(Error::NonPositiveBeds {
                        region: r,
                        day: self.days[i],
                        beds: b,
                    });
                }
                tail[i] = tail[i + 1] + self.hosp[r][i] / (b * b);
            }
            for (j, &off) in self.tranche_offsets.iter().enumerate() {
                grad[j][r] = -k * self.problem.tranche_sizes[j] * tail[off];
            }
        }
        Ok(Shares(grad))
    }

    fn project(&self, raw: &[Vec<f64>]) -> Shares {
        Shares(raw.iter().map(|v| project_simplex(v)).collect())
    }

    fn projected_step(&self, x: &Shares, g: &Shares, eta: f64) -> Shares {
        let raw: Vec<Vec<f64>> =
            x.0.iter()
                .zip(&g.0)
                .map(|(xs, gs)| xs.iter().zip(gs).map(|(a, b)| a - eta * b).collect())
                .collect();
        self.project(&raw)
    }

    /// Largest one-step decrease reachable by backtracking along the projected gradient.
    fn best_projected_decrease(&self, x: &Shares, fx: f64) -> Result<(f64, Shares)> {
        let g = self.gradient(x)?;
        let gnorm = g.0.iter().flatten().map(|v| v * v).sum::<f64>().sqrt();
        if gnorm == 0.0 {
            return Ok((0.0, x.clone()));
        }
        let mut eta = 1.0 / gnorm;
        let mut best = (0.0, x.clone());
        for _ in 0..60 {
            let y = self.projected_step(x, &g, eta);
            let fy = self.objective_or_inf(&y);
            if fx - fy > best.0 {
                best = (fx - fy, y);
            }
            eta *= 0.5;
        }
        Ok(best)
    }

    fn descend(&self, start: Shares) -> Result<(Shares, f64)> {
        let mut x = start;
        let mut fx = self.objective_or_inf(&x);
        if !fx.is_finite() {
            return Ok((x, fx));
        }
        let mut eta = 1.0;
        for _ in 0..5_000 {
            let g = self.gradient(&x)?;
            let mut accepted = None;
            // backtracking with the sufficient-decrease test on the projected step
            for _ in 0..80 {
                let y = self.projected_step(&x, &g, eta);
                let fy = self.objective_or_inf(&y);
                let dist = x.flat_distance(&y);
                if fy <= fx - 1e-4 / eta * dist * dist {
                    accepted = Some((y, fy, dist));
                    break;
                }
                eta *= 0.5;
            }
            let Some((y, fy, dist)) = accepted else { break };
            let gain = fx - fy;
            x = y;
            fx = fy;
            if dist < 1e-12 || gain < 1e-14 {
                break;
            }
            eta *= 2.0;
        }
        Ok((x, fx))
    }

    /// Moves 0.01 of a tranche between region pairs while that strictly improves.
    fn polish(&self, mut x: Shares, mut fx: f64) -> (Shares, f64) {
        const STEP: f64 = 0.01;
        let (m, q) = (self.m(), self.q());
        for _ in 0..10_000 {
            let mut improved = false;
            for j in 0..q {
                for a in 0..m {
                    for b in 0..m {
                        if a == b || x.0[j][a] <= 0.0 {
                            continue;
                        }
                        let moved = STEP.min(x.0[j][a]);
                        let mut y = x.clone();
                        y.0[j][a] -= moved;
                        y.0[j][b] += moved;
                        let fy = self.objective_or_inf(&y);
                        if fy < fx - 1e-12 {
                            x = y;
                            fx = fy;
                            improved = true;
                        }
                    }
                }
            }
            if !improved {
                break;
            }
        }
        (x, fx)
    }

    fn starts(&self) -> Vec<Shares> {
        let (m, q) = (self.m(), self.q());
        let center = Shares::uniform(q, m);
        let mut starts = vec![center.clone()];
        for r in 0..m {
            let vertex: Vec<f64> = (0..m).map(|i| if i == r { 1.0 } else { 0.0 }).collect();
            starts.push(Shares(vec![vertex.clone(); q]));
        }
        for r in 0..m {
            let mid: Vec<f64> = (0..m)
                .map(|i| 0.5 * center.0[0][i] + if i == r { 0.5 } else { 0.0 })
                .collect();
            starts.push(Shares(vec![mid; q]));
        }
        starts
    }

    /// `spend(t) = κ_B ΔB(t) + Σ_r [κ_S h_r(t) + κ_I max(Δh_r(t), 0)]` against `F(t)`.
    pub fn cost_constraint(&self, plans: &[BedPlan], t: i64) -> Result<CostCheck> {
        let cost = self.problem.cost.as_ref().ok_or(Error::MissingCostModel)?;
        let k = self.days.iter().position(|&d| d == t).ok_or(Error::BeyondHorizon {
            day: t,
            last: self.problem.horizon,
        })?;
        if plans.len() != self.m() {
            return Err(Error::DimensionMismatch {
                what: "bed plans",
                expected: self.m(),
                got: plans.len(),
            });
        }
        // beds are paid for on the day a tranche arrives
        let new_beds: f64 = plans.iter().map(|p| p.beds_at(t) - p.beds_at(t - 1)).sum();
        let mut spend = cost.bed_cost * new_beds.max(0.0);
        for r in 0..self.m() {
            let h = self.hosp[r][k];
            let next = if k + 1 < self.days.len() {
                Some(self.hosp[r][k + 1])
            } else {
                self.hosp_next[r]
            };
            let dh = next.map(|n| n - h).unwrap_or(0.0);
            spend += cost.service_cost * h + cost.pre_hospital_cost * dh.max(0.0);
        }
        let budget = cost.budget.at(t);
        Ok(CostCheck {
            satisfied: spend <= budget,
            spend,
            budget,
        })
    }

    pub fn feasible(&self, plans: &[BedPlan]) -> Result<FeasibilityReport> {
        let beds = self.plan_rows(plans)?;
        let mut occupancy_violations = Vec::new();
        for r in 0..self.m() {
            for (k, (&h, &b)) in self.hosp[r].iter().zip(&beds[r]).enumerate() {
                if h > b {
                    occupancy_violations.push(Violation {
                        region: r,
                        day: self.days[k],
                        occupancy: if b > 0.0 { h / b } else { f64::INFINITY },
                    });
                }
            }
        }
        let mut cost_violations = Vec::new();
        if self.problem.cost.is_some() {
            for &t in &self.days {
                if !self.cost_constraint(plans, t)?.satisfied {
                    cost_violations.push(t);
                }
            }
        }
        Ok(FeasibilityReport {
            feasible: occupancy_violations.is_empty() && cost_violations.is_empty(),
            occupancy_violations,
            cost_violations,
        })
    }

    pub fn occupancy(&self, plans: &[BedPlan]) -> Result<Vec<OccupancyStats>> {
        let beds = self.plan_rows(plans)?;
        (0..self.m())
            .map(|r| {
                let mut sum = 0.0;
                let mut max = f64::NEG_INFINITY;
                let mut max_day = self.days[0];
                for (k, (&h, &b)) in self.hosp[r].iter().zip(&beds[r]).enumerate() {
                    let o = crate::simulate::hosp_rate(h, b)?;
                    sum += o;
                    if o > max {
                        max = o;
                        max_day = self.days[k];
                    }
                }
                Ok(OccupancyStats {
                    mean: sum / self.days.len() as f64,
                    max,
                    max_day,
                })
            })
            .collect()
    }

    /// Minimizes the objective over per-tranche shares.
    pub fn solve(&self, kind: ProblemKind) -> Result<AllocationSolution> {
        if kind == ProblemKind::CapacityAndCost {
            let cost_days = self.cost_failures()?;
            if !cost_days.is_empty() {
                return Err(Error::NoFeasiblePoint { days: cost_days });
            }
        }
        let mut best: Option<(Shares, f64)> = None;
        for start in self.starts() {
            let (x, fx) = self.descend(start)?;
            if best.as_ref().is_none_or(|b| fx < b.1) {
                best = Some((x, fx));
            }
        }
        let (x, fx) = best.unwrap();
        if !fx.is_finite() {
            return Err(Error::param(
                "base_beds",
                "every candidate plan leaves a region without beds",
            ));
        }
        let (mut x, mut fx) = self.polish(x, fx);
        let mut gap = 0.0;
        for _ in 0..20 {
            let (decrease, y) = self.best_projected_decrease(&x, fx)?;
            gap = decrease;
            if decrease <= 1e-6 {
                break;
            }
            let (z, fz) = self.descend(y)?;
            x = z;
            fx = fz;
        }
        self.finish(x, gap)
    }

    /// Days on which the spend exceeds the budget. Spending does not depend
    /// on how tranches are split, so any full split decides feasibility.
    fn cost_failures(&self) -> Result<Vec<i64>> {
        let plans = self.plans(&Shares::uniform(self.q(), self.m()))?;
        let mut days = Vec::new();
        for &t in &self.days {
            if !self.cost_constraint(&plans, t)?.satisfied {
                days.push(t);
            }
        }
        Ok(days)
    }

    /// Packages shares into a solution, re-evaluating everything from the plans.
    pub fn finish(&self, shares: Shares, stationarity_gap: f64) -> Result<AllocationSolution> {
        let plans = self.plans(&shares)?;
        let objective = self.objective(&plans)?;
        Ok(AllocationSolution {
            occupancy: self.occupancy(&plans)?,
            feasibility: self.feasible(&plans)?,
            final_new_cases: self.final_new_cases.clone(),
            final_infections: self.final_infections.clone(),
            shares,
            plans,
            objective,
            stationarity_gap,
        })
    }
}

/// Objective of explicit plans for an unprepared problem.
pub fn objective(problem: &AllocationProblem, plans: &[BedPlan]) -> Result<f64> {
    problem.prepare()?.objective(plans)
}

pub fn feasible(problem: &AllocationProblem, plans: &[BedPlan]) -> Result<FeasibilityReport> {
    problem.prepare()?.feasible(plans)
}

pub fn cost_constraint(problem: &AllocationProblem, plans: &[BedPlan], t: i64) -> Result<CostCheck> {
    problem.prepare()?.cost_constraint(plans, t)
}

pub fn solve(problem: &AllocationProblem, kind: ProblemKind) -> Result<AllocationSolution> {
    problem.prepare()?.solve(kind)
}
