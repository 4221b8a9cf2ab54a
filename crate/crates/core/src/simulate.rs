//! Single- and multi-region propagation of the isolation-time model and the
//! observables derived from a trajectory.
//!
//! New cases on day `t + 1` come from the cohorts infected `d .. d + τ(t) − 1`
//! days earlier that are still alive and not yet isolated:
//!
//! ```text
//! x_r(t+1) = Σ_i β_ir · Σ_{j=0}^{τ_i(t)−1} (1 − α_i ω(j)) · x_i(t − d − j)
//! ```

use crate::error::{Error, Result};
use crate::kernel::GammaKernel;
use crate::model::{ControlSchedule, CouplingMatrix, RegionParams, Seed, Trajectory};

/// Days of prehistory needed so every lagged access in simulation,
/// hospital counts and the death convolution is defined.
pub fn prehistory_depth(params: &RegionParams, tau_max: u32) -> usize {
    let widest = params.kernel().max_lag().max(params.sigma()).max(tau_max as usize);
    params.latent_d() + widest
}

fn check_tau(tau: u32, kernel: &GammaKernel) -> Result<()> {
    let max = kernel.max_lag() as u32 + 1;
    if tau < 1 || tau > max {
        return Err(Error::TauOutOfRange { tau, min: 1, max });
    }
    Ok(())
}

/// `I_a(t) = Σ_{i=0}^{τ−1} (1 − α ω(i)) x(t − d − i)`.
pub fn active_infectious(traj: &Trajectory, params: &RegionParams, tau: u32, t: i64) -> Result<f64> {
    check_tau(tau, params.kernel())?;
    let newest = t - params.latent_d() as i64;
    let oldest = newest - tau as i64 + 1;
    let xs = traj.window(oldest, newest)?;
    let mut acc = 0.0;
    // xs[last] is lag 0
    for (i, &x) in xs.iter().rev().enumerate() {
        acc += params.surviving(i) * x;
    }
    Ok(acc)
}

/// `x(t + 1) = β · I_a(t)`.
pub fn step_single(history: &Trajectory, params: &RegionParams, beta: f64, tau: u32, t: i64) -> Result<f64> {
    if !(beta.is_finite() && beta >= 0.0) {
        return Err(Error::param("beta", format!("must be finite and >= 0, got {beta}")));
    }
    Ok(beta * active_infectious(history, params, tau, t)?)
}

/// Runs one region on `[1, horizon]`. The control must cover `0..horizon`.
pub fn simulate_single(
    params: &RegionParams,
    beta: f64,
    control: &ControlSchedule,
    seed: Seed,
    horizon: i64,
) -> Result<Trajectory> {
    let coupling = CouplingMatrix::diagonal(&[beta])?;
    let mut out = simulate_multi(
        std::slice::from_ref(params),
        &coupling,
        std::slice::from_ref(control),
        &[seed],
        horizon,
    )?;
    Ok(out.pop().unwrap())
}

/// Runs `m` coupled regions on `[1, horizon]`.
pub fn simulate_multi(
    params: &[RegionParams],
    coupling: &CouplingMatrix,
    controls: &[ControlSchedule],
    seeds: &[Seed],
    horizon: i64,
) -> Result<Vec<Trajectory>> {
    let m = coupling.regions();
    for (what, got) in [
        ("region params", params.len()),
        ("controls", controls.len()),
        ("seeds", seeds.len()),
    ] {
        if got != m {
            return Err(Error::DimensionMismatch { what, expected: m, got });
        }
    }
    if horizon < 1 {
        return Err(Error::param("horizon", format!("must be >= 1, got {horizon}")));
    }
    for seed in seeds {
        Seed::new(seed.value, seed.convention)?;
    }
    for (c, p) in controls.iter().zip(params) {
        c.covers(0, horizon - 1)?;
        check_tau(c.tau_max(), p.kernel())?;
    }

    let mut trajs: Vec<Trajectory> = (0..m)
        .map(|r| {
            let depth = prehistory_depth(&params[r], controls[r].tau_max());
            Trajectory::seeded(r, seeds[r], params[r].latent_d(), depth, horizon as usize)
        })
        .collect();

    let mut active = vec![0.0; m];
    let mut taus = vec![0u32; m];
    for t in 0..horizon {
        for i in 0..m {
            taus[i] = controls[i].tau_at(t)?;
            active[i] = active_infectious(&trajs[i], &params[i], taus[i], t)?;
        }
        for r in 0..m {
            let mut next = 0.0;
            for i in 0..m {
                let b = coupling.get(i, r);
                if b != 0.0 {
                    next += b * active[i];
                }
            }
            trajs[r].push(next);
        }
    }
    Ok(trajs)
}

/// `h(t) = Σ_{i=τ}^{σ} (1 − α ω(i)) x(t − d − i)`.
pub fn hospitalized(traj: &Trajectory, params: &RegionParams, tau: u32, t: i64) -> Result<f64> {
    let sigma = params.sigma();
    if tau as usize > sigma {
        return Err(Error::EmptyHospitalWindow { tau, sigma });
    }
    let base = t - params.latent_d() as i64;
    let xs = traj.window(base - sigma as i64, base - tau as i64)?;
    let mut acc = 0.0;
    // xs[last] is lag tau
    for (k, &x) in xs.iter().rev().enumerate() {
        acc += params.surviving(tau as usize + k) * x;
    }
    Ok(acc)
}

/// `C(t) = Σ_{s=0}^{t−1} x(s − d)`: cases that have passed the latent period by day `t`.
pub fn cumulative_cases(traj: &Trajectory, latent_d: usize, t: i64) -> Result<f64> {
    if t <= 0 {
        return Ok(0.0);
    }
    let d = latent_d as i64;
    Ok(traj.window(-d, t - 1 - d)?.iter().sum())
}

/// `Σ_{s=1}^{t} x(s)`: infections generated on days `1..=t`.
pub fn cumulative_infections(traj: &Trajectory, t: i64) -> Result<f64> {
    if t <= 0 {
        return Ok(0.0);
    }
    Ok(traj.window(1, t)?.iter().sum())
}

/// Expected deaths on day `s + 1`: `Σ_{i=0}^{n} α ω_p(i) x(s − d − i)`.
fn daily_deaths(traj: &Trajectory, params: &RegionParams, s: i64) -> Result<f64> {
    let n = params.kernel().max_lag() as i64;
    let newest = s - params.latent_d() as i64;
    let xs = traj.window(newest - n, newest)?;
    let k = params.kernel();
    let mut acc = 0.0;
    for (i, &x) in xs.iter().rev().enumerate() {
        acc += k.pdf(i) * x;
    }
    Ok(params.alpha() * acc)
}

/// `D(t) = Σ_{s=0}^{t−1} Σ_{i=0}^{n} α ω_p(i) x(s − d − i)`.
pub fn cumulative_deaths(traj: &Trajectory, params: &RegionParams, t: i64) -> Result<f64> {
    let mut acc = 0.0;
    for s in 0..t {
        acc += daily_deaths(traj, params, s)?;
    }
    Ok(acc)
}

/// `C(t)` and `D(t)` for `t = 0..=last`, in one pass.
pub fn cumulative_series(traj: &Trajectory, params: &RegionParams, last: i64) -> Result<(Vec<f64>, Vec<f64>)> {
    let len = last.max(0) as usize + 1;
    let mut cases = Vec::with_capacity(len);
    let mut deaths = Vec::with_capacity(len);
    let (mut c, mut d) = (0.0, 0.0);
    cases.push(c);
    deaths.push(d);
    let lag = params.latent_d() as i64;
    for s in 0..last {
        c += traj.at(s - lag)?;
        d += daily_deaths(traj, params, s)?;
        cases.push(c);
        deaths.push(d);
    }
    Ok((cases, deaths))
}

/// `R = β · [τ − α Σ_{i=0}^{τ−1} ω(i)]`.
pub fn reproduction_number(alpha: f64, beta: f64, tau: u32, kernel: &GammaKernel) -> Result<f64> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::param("alpha", format!("must lie in [0, 1], got {alpha}")));
    }
    if !(beta.is_finite() && beta >= 0.0) {
        return Err(Error::param("beta", format!("must be finite and >= 0, got {beta}")));
    }
    check_tau(tau, kernel)?;
    let s: f64 = (0..tau as usize).map(|i| kernel.cdf(i)).sum();
    Ok(beta * (tau as f64 - alpha * s))
}

/// Occupancy `h / beds`.
pub fn hosp_rate(h: f64, beds: f64) -> Result<f64> {
    if !(beds > 0.0) {
        return Err(Error::param("beds", format!("must be > 0, got {beds}")));
    }
    Ok(h / beds)
}

/// Per-day observables of one simulated region on `1..=horizon`.
#[derive(Debug, Clone, PartialEq)]
pub struct Observables {
    pub days: Vec<i64>,
    pub new_cases: Vec<f64>,
    pub cumulative_cases: Vec<f64>,
    pub cumulative_infections: Vec<f64>,
    pub cumulative_deaths: Vec<f64>,
    pub active: Vec<f64>,
    /// `None` on days where `τ(t) > σ`.
    pub hospitalized: Vec<Option<f64>>,
}

pub fn observables(
    traj: &Trajectory,
    params: &RegionParams,
    control: &ControlSchedule,
    horizon: i64,
) -> Result<Observables> {
    let (c, d) = cumulative_series(traj, params, horizon)?;
    let mut out = Observables {
        days: Vec::new(),
        new_cases: Vec::new(),
        cumulative_cases: Vec::new(),
        cumulative_infections: Vec::new(),
        cumulative_deaths: Vec::new(),
        active: Vec::new(),
        hospitalized: Vec::new(),
    };
    let mut infections = 0.0;
    for t in 1..=horizon {
        let x = traj.at(t)?;
        infections += x;
        out.days.push(t);
        out.new_cases.push(x);
        out.cumulative_cases.push(c[t as usize]);
        out.cumulative_infections.push(infections);
        out.cumulative_deaths.push(d[t as usize]);
        match control.tau_at(t) {
            Ok(tau) => {
                out.active.push(active_infectious(traj, params, tau, t)?);
                out.hospitalized.push(match hospitalized(traj, params, tau, t) {
                    Ok(h) => Some(h),
                    Err(Error::EmptyHospitalWindow { .. }) => None,
                    Err(e) => return Err(e),
                });
            }
            // the last day may fall past the control; the step that uses it never runs
            Err(Error::ControlGap { .. }) => {
                out.active.push(f64::NAN);
                out.hospitalized.push(None);
            }
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::GammaParams;
    use crate::model::SeedConvention;
    use std::sync::Arc;

    fn kernel() -> Arc<GammaKernel> {
        Arc::new(GammaKernel::build(GammaParams::default(), 35).unwrap())
    }

    fn region(alpha: f64, d: usize, sigma: usize) -> RegionParams {
        RegionParams::new(alpha, d, sigma, kernel()).unwrap()
    }

    fn constant_history(c: f64, from: i64, to: i64) -> Trajectory {
        Trajectory::from_values(0, from, vec![c; (to - from + 1) as usize]).unwrap()
    }

    fn seed(v: f64) -> Seed {
        Seed::new(v, SeedConvention::Window).unwrap()
    }

    #[test]
    fn zero_history_gives_zero_step() {
        let h = constant_history(0.0, -50, 0);
        assert_eq!(step_single(&h, &region(0.6, 6, 6), 0.3, 4, 0).unwrap(), 0.0);
    }

    #[test]
    fn step_matches_hand_summation() {
        // ω(0..3) from the independently computed kernel table
        let k = kernel();
        let expected =
            0.30 * ((1.0 - 0.6 * k.cdf(0)) + (1.0 - 0.6 * k.cdf(1)) + (1.0 - 0.6 * k.cdf(2)) + (1.0 - 0.6 * k.cdf(3)));
        let h = constant_history(1.0, -50, 0);
        let v = step_single(&h, &region(0.6, 6, 6), 0.30, 4, 0).unwrap();
        assert!((v - expected).abs() < 1e-15);
        // ≈ 0.3 · (4 − 0.6 · 0.0086)
        assert!((v - 1.19845).abs() < 1e-4, "{v}");
    }

    #[test]
    fn stationary_history_is_fixed_point_at_r_one() {
        let p = region(0.6, 6, 6);
        let r_unit = reproduction_number(0.6, 1.0, 4, p.kernel()).unwrap();
        let beta = 1.0 / r_unit;
        let h = constant_history(3.0, -50, 0);
        let v = step_single(&h, &p, beta, 4, 0).unwrap();
        assert!((v - 3.0).abs() < 1e-12);
    }

    #[test]
    fn insufficient_history_is_reported() {
        let h = constant_history(1.0, -5, 0);
        assert!(matches!(
            step_single(&h, &region(0.6, 6, 6), 0.3, 4, 0),
            Err(Error::InsufficientHistory { .. })
        ));
    }

    #[test]
    fn active_without_deaths_is_windowed_sum() {
        let vals: Vec<f64> = (0..40).map(|k| k as f64).collect();
        let traj = Trajectory::from_values(0, -39, vals).unwrap();
        // x(t) = t + 39; window x(-6), x(-7), x(-8)
        let v = active_infectious(&traj, &region(0.0, 6, 6), 3, 0).unwrap();
        assert_eq!(v, 33.0 + 32.0 + 31.0);
    }

    #[test]
    fn hospital_window_edge_cases() {
        let p = region(0.6, 6, 6);
        let ones = constant_history(1.0, -50, 10);
        let k = p.kernel();
        let single = hospitalized(&ones, &p, 6, 5).unwrap();
        assert!((single - (1.0 - 0.6 * k.cdf(6))).abs() < 1e-15);
        let four: f64 = (3..=6).map(|i| 1.0 - 0.6 * k.cdf(i)).sum();
        assert!((hospitalized(&ones, &p, 3, 5).unwrap() - four).abs() < 1e-14);
        assert!(matches!(
            hospitalized(&ones, &p, 7, 5),
            Err(Error::EmptyHospitalWindow { .. })
        ));
        let zeros = constant_history(0.0, -50, 10);
        assert_eq!(hospitalized(&zeros, &p, 3, 5).unwrap(), 0.0);
    }

    #[test]
    fn cumulative_counts() {
        let ones = constant_history(1.0, -50, 10);
        assert_eq!(cumulative_cases(&ones, 6, 10).unwrap(), 10.0);
        assert_eq!(cumulative_infections(&ones, 10).unwrap(), 10.0);
        let p = region(0.0, 6, 6);
        assert_eq!(cumulative_deaths(&ones, &p, 5).unwrap(), 0.0);
    }

    #[test]
    fn death_increment_converges_to_kernel_mass() {
        let p = region(0.6, 6, 6);
        let ones = constant_history(1.0, -100, 10);
        let inc = cumulative_deaths(&ones, &p, 10).unwrap() - cumulative_deaths(&ones, &p, 9).unwrap();
        let mass: f64 = p.kernel().pdf_table().iter().sum();
        assert!((inc - 0.6 * mass).abs() < 1e-12);
    }

    #[test]
    fn series_match_pointwise_definitions() {
        let p = region(0.6, 6, 10);
        let ctl = ControlSchedule::new(vec![-1, 48, 100], vec![4, 5], 3, 5).unwrap();
        let traj = simulate_single(&p, 0.3, &ctl, seed(2.0), 100).unwrap();
        let (c, d) = cumulative_series(&traj, &p, 100).unwrap();
        for t in [0, 1, 7, 50, 100] {
            assert!((c[t as usize] - cumulative_cases(&traj, 6, t).unwrap()).abs() < 1e-9);
            assert!((d[t as usize] - cumulative_deaths(&traj, &p, t).unwrap()).abs() < 1e-9);
        }
    }

    #[test]
    fn reproduction_number_without_deaths() {
        let k = kernel();
        assert_eq!(reproduction_number(0.0, 0.3, 4, &k).unwrap(), 0.3 * 4.0);
        assert!(reproduction_number(0.6, 0.3, 0, &k).is_err());
    }

    #[test]
    fn hosp_rate_basics() {
        assert_eq!(hosp_rate(0.0, 10.0).unwrap(), 0.0);
        assert_eq!(hosp_rate(10.0, 10.0).unwrap(), 1.0);
        assert!(hosp_rate(1.0, 0.0).is_err());
    }

    #[test]
    fn zero_seed_stays_zero() {
        let p = region(0.6, 6, 6);
        let ctl = ControlSchedule::constant(-1, 100, 4).unwrap();
        let traj = simulate_single(&p, 0.3, &ctl, seed(0.0), 100).unwrap();
        assert!(traj.values().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn control_gap_and_negative_seed_rejected() {
        let p = region(0.6, 6, 6);
        let ctl = ControlSchedule::constant(0, 100, 4).unwrap();
        assert!(matches!(
            simulate_single(&p, 0.3, &ctl, seed(1.0), 50),
            Err(Error::ControlGap { .. })
        ));
        assert!(Seed::new(-1.0, SeedConvention::Window).is_err());
    }

    #[test]
    fn multi_checks_dimensions() {
        let p = region(0.6, 6, 6);
        let ctl = ControlSchedule::constant(-1, 10, 4).unwrap();
        let coupling = CouplingMatrix::diagonal(&[0.3, 0.3]).unwrap();
        assert!(matches!(
            simulate_multi(&[p], &coupling, &[ctl.clone(), ctl], &[seed(1.0), seed(1.0)], 10),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn symmetric_regions_evolve_identically() {
        let p = region(0.6, 6, 6);
        let ctl = ControlSchedule::constant(-1, 80, 4).unwrap();
        let coupling = CouplingMatrix::from_rows(&[vec![0.25, 0.02], vec![0.02, 0.25]]).unwrap();
        let out = simulate_multi(
            &[p.clone(), p],
            &coupling,
            &[ctl.clone(), ctl],
            &[seed(2.0), seed(2.0)],
            80,
        )
        .unwrap();
        assert_eq!(out[0].values(), out[1].values());
    }
}
