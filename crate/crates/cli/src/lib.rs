//! Runners behind the `epibeds` subcommands.
//!
//! Every run writes plain CSV files plus `summary.txt` (flat `key = value`
//! lines) and `scenario.resolved.toml` into the output directory. Each file
//! carries the SHA-256 of the scenario file it came from.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use epibeds::allocate::{AllocationSolution, ProblemKind};
use epibeds::fit::{fit, FitResult};
use epibeds::io::{fmt_f64, read_observed_csv, write_columns, ObservedTable};
use epibeds::scenario::Scenario;
use epibeds::simulate::{observables, reproduction_number, simulate_multi};
use epibeds::SeedConvention;
use rayon::prelude::*;
use sha2::{Digest, Sha256};

/// Upper bound on sweep cells, so a typo in a range cannot run for hours.
pub const MAX_SWEEP_CELLS: usize = 10_000;

#[derive(Debug, Clone)]
pub struct LoadedScenario {
    pub scenario: Scenario,
    pub sha256: String,
    pub path: PathBuf,
}

impl LoadedScenario {
    pub fn load(path: &Path, seed_convention: Option<SeedConvention>) -> Result<Self> {
        let bytes = fs::read(path).with_context(|| format!("reading scenario {}", path.display()))?;
        let text = std::str::from_utf8(&bytes).with_context(|| format!("{} is not UTF-8", path.display()))?;
        let mut scenario = Scenario::from_toml(text).with_context(|| format!("loading {}", path.display()))?;
        if let Some(c) = seed_convention {
            scenario = scenario.with_seed_convention(c)?;
        }
        Ok(Self {
            scenario,
            sha256: hex::encode(Sha256::digest(&bytes)),
            path: path.to_path_buf(),
        })
    }

    fn header(&self) -> Vec<(String, String)> {
        vec![
            ("scenario-sha256".into(), self.sha256.clone()),
            (
                "seed-convention".into(),
                self.scenario.file.model.seed_convention.as_str().into(),
            ),
        ]
    }
}

/// Ordered `key = value` pairs written to `summary.txt`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Summary(pub Vec<(String, String)>);

impl Summary {
    fn push(&mut self, key: impl Into<String>, value: impl ToString) {
        self.0.push((key.into(), value.to_string()));
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.0.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn parse(text: &str) -> Self {
        Summary(
            text.lines()
                .filter_map(|l| l.split_once(" = "))
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .collect(),
        )
    }
}

fn create(out: &Path, name: &str) -> Result<BufWriter<File>> {
    let path = out.join(name);
    let f = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn prepare_out(out: &Path) -> Result<()> {
    fs::create_dir_all(out).with_context(|| format!("creating output directory {}", out.display()))
}

fn finish(loaded: &LoadedScenario, out: &Path, command: &str, mut summary: Summary) -> Result<Summary> {
    let mut head = Summary::default();
    head.push("command", command);
    head.push("scenario", loaded.path.display());
    head.push("scenario_sha256", &loaded.sha256);
    head.push("seed_convention", loaded.scenario.file.model.seed_convention.as_str());
    head.0.append(&mut summary.0);
    let mut w = create(out, "summary.txt")?;
    for (k, v) in &head.0 {
        writeln!(w, "{k} = {v}")?;
    }
    w.flush()?;
    let mut w = create(out, "scenario.resolved.toml")?;
    writeln!(w, "# scenario-sha256: {}", loaded.sha256)?;
    w.write_all(loaded.scenario.file.to_toml().as_bytes())?;
    w.flush()?;
    Ok(head)
}

/// Region file prefix: `r1`, `r2`, ...
pub fn region_prefix(r: usize) -> String {
    format!("r{}", r + 1)
}

fn write_series(
    loaded: &LoadedScenario,
    out: &Path,
    file: &str,
    column: &str,
    days: &[i64],
    values: &[f64],
) -> Result<()> {
    let mut w = create(out, file)?;
    write_columns(&mut w, &loaded.header(), &[column], days, &[values])?;
    w.flush()?;
    Ok(())
}

/// Daily per-region series over `1..=horizon` and R for every control interval.
pub fn run_simulate(loaded: &LoadedScenario, out: &Path) -> Result<Summary> {
    prepare_out(out)?;
    let s = &loaded.scenario;
    let horizon = s.horizon();
    let trajs = simulate_multi(&s.regions, &s.coupling, &s.controls, &s.seeds, horizon)?;
    let mut summary = Summary::default();
    summary.push("horizon", horizon);
    for (r, traj) in trajs.iter().enumerate() {
        let obs = observables(traj, &s.regions[r], &s.controls[r], horizon)?;
        let p = region_prefix(r);
        let hosp: Vec<f64> = obs.hospitalized.iter().map(|h| h.unwrap_or(f64::NAN)).collect();
        let series: [(&str, &[f64]); 6] = [
            ("new_cases", &obs.new_cases),
            ("cumulative_cases", &obs.cumulative_cases),
            ("cumulative_infections", &obs.cumulative_infections),
            ("cumulative_deaths", &obs.cumulative_deaths),
            ("active", &obs.active),
            ("hospitalized", &hosp),
        ];
        for (name, values) in series {
            write_series(loaded, out, &format!("{p}_{name}.csv"), name, &obs.days, values)?;
        }
        let base = s.file.regions[r].base_beds;
        if base > 0.0 {
            let occ: Vec<f64> = hosp.iter().map(|h| h / base).collect();
            write_series(loaded, out, &format!("{p}_occupancy.csv"), "occupancy", &obs.days, &occ)?;
        }

        summary.push(format!("{p}.name"), &s.names[r]);
        let last = obs.days.len() - 1;
        summary.push(
            format!("{p}.cumulative_infections"),
            fmt_f64(obs.cumulative_infections[last]),
        );
        summary.push(format!("{p}.cumulative_cases"), fmt_f64(obs.cumulative_cases[last]));
        summary.push(format!("{p}.cumulative_deaths"), fmt_f64(obs.cumulative_deaths[last]));
        let ctl = &s.controls[r];
        let beta = s.coupling.get(r, r);
        for (k, (w, &tau)) in ctl.breakpoints().windows(2).zip(ctl.values()).enumerate() {
            let rn = reproduction_number(s.regions[r].alpha(), beta, tau, &s.kernel)?;
            summary.push(
                format!("{p}.interval.{}", k + 1),
                format!("({}, {}] tau={tau} R={}", w[0], w[1], fmt_f64(rn)),
            );
        }
    }
    finish(loaded, out, "simulate", summary)
}

#[derive(Debug, Clone)]
pub struct FitReport {
    pub table: ObservedTable,
    pub result: FitResult,
    pub summary: Summary,
}

/// Fits `(α, β, τ_k)` to a `date,cases,deaths` file.
pub fn run_fit(loaded: &LoadedScenario, data: &Path, out: &Path) -> Result<FitReport> {
    let file = File::open(data).with_context(|| format!("opening data file {}", data.display()))?;
    let table = read_observed_csv(file).with_context(|| format!("reading {}", data.display()))?;
    let spec = loaded.scenario.fit_spec()?;
    let result = fit(&table.series, &spec)?;
    prepare_out(out)?;

    let label = data.file_stem().and_then(|s| s.to_str()).unwrap_or("data").to_string();
    let mut w = csv_writer(create(out, "fit_table.csv")?, loaded)?;
    let mut header = vec!["label".to_string(), "alpha".into(), "beta".into()];
    for k in 1..=result.taus.len() {
        header.push(format!("R{k}"));
        header.push(format!("tau{k}"));
    }
    w.write_record(&header)?;
    let mut row = vec![label.clone(), fmt_f64(result.alpha), fmt_f64(result.beta)];
    for (rn, tau) in result.reproduction_numbers.iter().zip(&result.taus) {
        row.push(fmt_f64(*rn));
        row.push(tau.to_string());
    }
    w.write_record(&row)?;
    w.flush()?;

    let obs = &table.series;
    let mut w = csv_writer(create(out, "fit_curves.csv")?, loaded)?;
    w.write_record([
        "day",
        "date",
        "observed_cases",
        "fitted_cases",
        "observed_deaths",
        "fitted_deaths",
    ])?;
    for k in 0..obs.len() {
        w.write_record([
            obs.days[k].to_string(),
            table.label(obs.days[k]),
            fmt_f64(obs.cases[k]),
            fmt_f64(result.fitted_cases[k]),
            fmt_f64(obs.deaths[k]),
            fmt_f64(result.fitted_deaths[k]),
        ])?;
    }
    w.flush()?;

    let mut summary = Summary::default();
    summary.push("data", data.display());
    summary.push("data_origin", table.label(0));
    summary.push("rows", obs.len());
    for (i, warning) in table.warnings.iter().enumerate() {
        summary.push(format!("warning.{}", i + 1), warning);
    }
    summary.push("alpha", fmt_f64(result.alpha));
    summary.push("beta", fmt_f64(result.beta));
    for (k, (rn, tau)) in result.reproduction_numbers.iter().zip(&result.taus).enumerate() {
        summary.push(format!("interval.{}", k + 1), format!("tau={tau} R={}", fmt_f64(*rn)));
    }
    summary.push("loss", fmt_f64(result.loss));
    summary.push("tuples_searched", result.tuples_searched);
    summary.push("evaluations", result.evaluations);
    let summary = finish(loaded, out, "fit", summary)?;
    Ok(FitReport { table, result, summary })
}

fn csv_writer<W: Write>(mut w: W, loaded: &LoadedScenario) -> Result<csv::Writer<W>> {
    for (k, v) in loaded.header() {
        writeln!(w, "# {k}: {v}")?;
    }
    Ok(csv::Writer::from_writer(w))
}

pub fn problem_kind(problem: u8) -> Result<ProblemKind> {
    match problem {
        1 => Ok(ProblemKind::Capacity),
        2 => Ok(ProblemKind::CapacityAndCost),
        other => bail!("--problem must be 1 or 2, got {other}"),
    }
}

/// Splits new bed tranches between regions.
pub fn run_allocate(
    loaded: &LoadedScenario,
    problem: ProblemKind,
    out: &Path,
) -> Result<(AllocationSolution, Summary)> {
    let s = &loaded.scenario;
    let prepared = s.allocation_problem()?.prepare()?;
    let sol = prepared.solve(problem)?;
    prepare_out(out)?;

    let q = prepared.problem().tranches();
    let mut w = csv_writer(create(out, "allocation.csv")?, loaded)?;
    let mut header = vec!["region".to_string()];
    header.extend(prepared.problem().tranche_days.iter().map(|d| format!("day_{d}")));
    w.write_record(&header)?;
    for (r, plan) in sol.plans.iter().enumerate() {
        let mut row = vec![s.names[r].clone()];
        row.extend(plan.tranche_sizes.iter().map(|v| fmt_f64(*v)));
        w.write_record(&row)?;
    }
    let mut total = vec!["Total".to_string()];
    total.extend(prepared.problem().tranche_sizes.iter().map(|v| fmt_f64(*v)));
    w.write_record(&total)?;
    w.flush()?;

    let days = prepared.window_days();
    for (r, plan) in sol.plans.iter().enumerate() {
        let p = region_prefix(r);
        let beds: Vec<f64> = days.iter().map(|&t| plan.beds_at(t)).collect();
        let occ: Vec<f64> = prepared.hospitalized(r).iter().zip(&beds).map(|(h, b)| h / b).collect();
        write_series(loaded, out, &format!("{p}_beds.csv"), "beds", days, &beds)?;
        write_series(loaded, out, &format!("{p}_occupancy.csv"), "occupancy", days, &occ)?;
    }

    let mut summary = Summary::default();
    summary.push("problem", if problem == ProblemKind::Capacity { 1 } else { 2 });
    summary.push("objective", fmt_f64(sol.objective));
    summary.push("feasible", sol.feasibility.feasible);
    summary.push("stationarity_gap", fmt_f64(sol.stationarity_gap));
    for j in 0..q {
        let shares: Vec<String> = sol.shares.0[j].iter().map(|v| fmt_f64(*v)).collect();
        summary.push(format!("tranche.{}.shares", j + 1), shares.join(","));
    }
    for r in 0..s.regions.len() {
        let p = region_prefix(r);
        summary.push(format!("{p}.name"), &s.names[r]);
        summary.push(format!("{p}.final_new_cases"), fmt_f64(sol.final_new_cases[r]));
        summary.push(format!("{p}.cumulative_infections"), fmt_f64(sol.final_infections[r]));
        summary.push(format!("{p}.occupancy_mean"), fmt_f64(sol.occupancy[r].mean));
        summary.push(format!("{p}.occupancy_max"), fmt_f64(sol.occupancy[r].max));
        summary.push(format!("{p}.occupancy_max_day"), sol.occupancy[r].max_day);
    }
    for v in &sol.feasibility.occupancy_violations {
        summary.push(
            format!("violation.{}.day.{}", region_prefix(v.region), v.day),
            fmt_f64(v.occupancy),
        );
    }
    if !sol.feasibility.cost_violations.is_empty() {
        let days: Vec<String> = sol.feasibility.cost_violations.iter().map(|d| d.to_string()).collect();
        summary.push("cost_violation_days", days.join(","));
    }
    let summary = finish(loaded, out, "allocate", summary)?;
    Ok((sol, summary))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub taus: Vec<u32>,
    pub solution: AllocationSolution,
}

/// Every combination of planning-window τ per region, in lexicographic order.
pub fn tau_combinations(grid: &[u32], regions: usize) -> Result<Vec<Vec<u32>>> {
    if grid.is_empty() {
        bail!("tau grid is empty");
    }
    let cells = (0..regions).try_fold(1usize, |acc, _| acc.checked_mul(grid.len()));
    match cells {
        Some(n) if n <= MAX_SWEEP_CELLS => {}
        _ => bail!("tau grid gives more than {MAX_SWEEP_CELLS} combinations"),
    }
    let mut out = vec![vec![]];
    for _ in 0..regions {
        out = out
            .into_iter()
            .flat_map(|prefix: Vec<u32>| {
                grid.iter().map(move |&t| {
                    let mut v = prefix.clone();
                    v.push(t);
                    v
                })
            })
            .collect();
    }
    Ok(out)
}

/// Runs the allocation for each τ combination; cells are independent and run in parallel.
pub fn run_sweep(loaded: &LoadedScenario, grid: &[u32], out: &Path) -> Result<(Vec<SweepRow>, Summary)> {
    let s = &loaded.scenario;
    let m = s.regions.len();
    let combos = tau_combinations(grid, m)?;
    let rows: Vec<SweepRow> = combos
        .par_iter()
        .map(|taus| -> Result<SweepRow> {
            let cell = s.with_planning_taus(taus)?;
            let solution = cell.allocation_problem()?.prepare()?.solve(ProblemKind::Capacity)?;
            Ok(SweepRow {
                taus: taus.clone(),
                solution,
            })
        })
        .collect::<Result<_>>()?;
    prepare_out(out)?;

    let q = s.file.beds.as_ref().map(|b| b.tranche_days.len()).unwrap_or(0);
    let mut w = csv_writer(create(out, "sweep.csv")?, loaded)?;
    let mut header: Vec<String> = (1..=m).map(|r| format!("tau{r}")).collect();
    header.push("region".into());
    header.extend((1..=q).map(|j| format!("tranche{j}")));
    header.extend([
        "objective".into(),
        "feasible".into(),
        "occupancy_mean".into(),
        "occupancy_max".into(),
    ]);
    w.write_record(&header)?;
    for row in &rows {
        for (r, plan) in row.solution.plans.iter().enumerate() {
            let mut rec: Vec<String> = row.taus.iter().map(|t| t.to_string()).collect();
            rec.push(s.names[r].clone());
            rec.extend(plan.tranche_sizes.iter().map(|v| fmt_f64(*v)));
            rec.push(fmt_f64(row.solution.objective));
            rec.push(row.solution.feasibility.feasible.to_string());
            rec.push(fmt_f64(row.solution.occupancy[r].mean));
            rec.push(fmt_f64(row.solution.occupancy[r].max));
            w.write_record(&rec)?;
        }
    }
    w.flush()?;

    let mut summary = Summary::default();
    let grid_text: Vec<String> = grid.iter().map(|t| t.to_string()).collect();
    summary.push("tau_grid", grid_text.join(","));
    summary.push("cells", rows.len());
    let summary = finish(loaded, out, "sweep", summary)?;
    Ok((rows, summary))
}
