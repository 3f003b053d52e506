//! Batch runner: dispatches a validated [`ExperimentConfig`] to the numeric
//! modules and serializes everything a run produces — resolved config,
//! per-state fields CSV, a deterministic summary JSON, and (for sweeps) the
//! sweep table. Wall-clock timing goes to a separate file so the summary is
//! byte-reproducible for a fixed config and seed.

use std::fs;
use std::io::Write as _;
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;

use crate::config::{ExperimentConfig, Task};
use crate::energy::Problem;
use crate::error::{Error, Result};
use crate::grid::{build_grid, norm_w, Field, Grid, State};
use crate::mass::{mass_polarization_check, solve_mass_ground_state, MassState};
use crate::model::{check_assumptions, ModelP};
use crate::polarize::{
    antipodality_check, foliated_schwarz_metrics, half_space_family, polarized_energy_compare,
};
use crate::solver::{diagnostics_bundle, solve_ground_state, Solution, SolverOptions};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub config_hash: String,
    pub version: String,
    pub task: Task,
    /// All task flags passed (solver certificates, assumption verdicts,
    /// polarization inequalities, ...). The CLI exits nonzero otherwise.
    pub flags_ok: bool,
    pub results: serde_json::Value,
    #[serde(skip)]
    pub wall_clock_seconds: f64,
}

/// FNV-1a over the resolved config text; enough to tie outputs to inputs.
fn config_hash(text: &str) -> String {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in text.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    format!("{h:016x}")
}

fn write_fields_csv(path: &Path, grid: &Grid, components: &[&Field]) -> Result<()> {
    let mut out = String::new();
    let polar = grid.is_polar();
    let coords_header = if polar { "r,theta" } else { "x,y" };
    out.push_str(&format!("index,{coords_header},weight"));
    for i in 1..=components.len() {
        out.push_str(&format!(",u{i}"));
    }
    out.push('\n');
    let w = grid.weights();
    for i in 0..grid.len() {
        let (a, b) = if polar {
            grid.polar_coords(i).expect("polar grid")
        } else {
            grid.coords(i)
        };
        out.push_str(&format!("{i},{a},{b},{}", w[i]));
        for f in components {
            out.push_str(&format!(",{}", f.values()[i]));
        }
        out.push('\n');
    }
    Ok(fs::write(path, out)?)
}

/// Normalized w-distance of a field to its per-ring angular average. Zero
/// for exactly radial fields; order one for fully localized ones.
pub fn radial_deviation(grid: &Grid, f: &Field) -> Result<f64> {
    let (nr, ntheta) = match grid.layout() {
        crate::grid::GridLayout::Polar { nr, ntheta, .. } => (*nr, *ntheta),
        _ => {
            return Err(Error::Unsupported(
                "radial deviation is defined on polar grids".into(),
            ))
        }
    };
    let v = f.values();
    let mut dev = grid.zero_field();
    for j in 0..nr {
        let ring = &v[j * ntheta..(j + 1) * ntheta];
        let mean = ring.iter().sum::<f64>() / ntheta as f64;
        for m in 0..ntheta {
            dev.values_mut()[j * ntheta + m] = ring[m] - mean;
        }
    }
    let scale = norm_w(grid, f)?;
    if scale < 1e-30 {
        return Ok(0.0);
    }
    Ok(norm_w(grid, &dev)? / scale)
}

fn build_problem(config: &ExperimentConfig, grid: Arc<Grid>) -> Result<Problem> {
    let model = ModelP::power(config.model.clone())?;
    let potentials = config
        .potentials
        .iter()
        .map(|p| p.realize(&grid))
        .collect::<Result<Vec<_>>>()?;
    Problem::new(grid, model, potentials, config.diffusion.clone())
}

fn solver_options(config: &ExperimentConfig) -> SolverOptions {
    let mut opts = config.solver;
    opts.seed = config.seed;
    opts
}

fn solution_json(sol: &Solution) -> serde_json::Value {
    json!({
        "energy": sol.energy_level,
        "nehari": sol.nehari,
        "multipliers": sol.multipliers,
        "multiplier_fit_residual": sol.multiplier_fit_residual,
        "pde_residual": sol.pde_residual,
        "start_index": sol.start_index,
        "iterations": sol.iterations,
        "start_records": sol.start_records,
    })
}

fn run_solve(config: &ExperimentConfig, out_dir: &Path) -> Result<(serde_json::Value, bool)> {
    let grid = Arc::new(build_grid(&config.domain)?);
    let problem = build_problem(config, Arc::clone(&grid))?;
    let sol = solve_ground_state(&problem, &solver_options(config))?;
    let diag = diagnostics_bundle(&problem, &sol)?;
    let fields: Vec<&Field> = sol.state.components.iter().collect();
    write_fields_csv(&out_dir.join("fields.csv"), &grid, &fields)?;
    let ok = diag.positivity_ok
        && diag.hessian_certificate_ok
        && diag.norm_floors_ok
        && sol.nehari.on_manifold();
    let mut results = solution_json(&sol);
    results["diagnostics"] = serde_json::to_value(&diag)?;
    if grid.is_polar() && problem.k() == 2 {
        let ru = foliated_schwarz_metrics(&grid, &sol.state.components[0])?;
        let rv = foliated_schwarz_metrics(&grid, &sol.state.components[1])?;
        results["antipodal_deviation"] = json!(antipodality_check(&ru, &rv));
        results["symmetry"] = json!([ru, rv]);
    }
    Ok((results, ok))
}

fn mass_initial_state(grid: &Grid) -> MassState {
    // Mirror-image tilted bumps: generic enough to break any unstable
    // symmetric saddle, deterministic across runs.
    use crate::grid::DomainSpec;
    let spec = grid.spec().clone();
    let bump = move |x: f64, y: f64| -> f64 {
        match spec {
            DomainSpec::Interval { length, .. } => x * (length - x),
            DomainSpec::Rectangle { lx, ly, .. } => x * (lx - x) * y * (ly - y),
            DomainSpec::Disk { radius, .. } => (radius * radius - x * x - y * y).max(0.0),
            DomainSpec::Annulus { r_in, r_out, .. } => {
                let r = (x * x + y * y).sqrt();
                ((r_out - r) * (r - r_in)).max(0.0)
            }
        }
    };
    let scale = match grid.spec() {
        DomainSpec::Interval { length, .. } => *length,
        DomainSpec::Rectangle { lx, .. } => *lx,
        DomainSpec::Disk { radius, .. } => *radius,
        DomainSpec::Annulus { r_out, .. } => *r_out,
    };
    let u = grid.field_from_fn(|x, y| bump(x, y) * (1.3 + x / scale));
    let v = grid.field_from_fn(|x, y| bump(x, y) * (1.3 - x / scale));
    MassState { u, v }
}

fn run_solve_mass(config: &ExperimentConfig, out_dir: &Path) -> Result<(serde_json::Value, bool)> {
    let grid = Arc::new(build_grid(&config.domain)?);
    let beta = config.pair_beta();
    let initial = mass_initial_state(&grid);
    let (state, pair, diag) = solve_mass_ground_state(&grid, beta, &initial, &config.mass_options)?;
    write_fields_csv(&out_dir.join("fields.csv"), &grid, &[&state.u, &state.v])?;

    let mut coupling_dev: f64 = 0.0;
    let mut pol_increase: f64 = f64::NEG_INFINITY;
    for h in half_space_family(&grid)? {
        let report = mass_polarization_check(&grid, &state, beta, &h)?;
        coupling_dev = coupling_dev.max(report.coupling_integral_deviation);
        pol_increase = pol_increase.max(report.energy_increase);
    }
    let mut results = json!({
        "i_energy": diag.i_energy,
        "lambda": pair.lambda,
        "mu": pair.mu,
        "masses": diag.masses,
        "stationarity_residuals": diag.stationarity_residuals,
        "iterations": diag.iterations,
        "coupling_integral_deviation": coupling_dev,
        "max_polarization_increase": pol_increase,
    });
    let mut ok = diag.masses.iter().all(|m| (m - 1.0).abs() <= 1e-10)
        && diag.stationarity_residuals.iter().all(|r| *r < 1e-6)
        && pol_increase <= 1e-12 * (1.0 + diag.i_energy.abs());
    if grid.is_polar() {
        let ru = foliated_schwarz_metrics(&grid, &state.u)?;
        let rv = foliated_schwarz_metrics(&grid, &state.v)?;
        results["antipodal_deviation"] = json!(antipodality_check(&ru, &rv));
        results["symmetry"] = json!([ru, rv]);
        ok = ok && coupling_dev <= 1e-10;
    }
    Ok((results, ok))
}

fn run_check(config: &ExperimentConfig) -> Result<(serde_json::Value, bool)> {
    let grid = build_grid(&config.domain)?;
    let model = ModelP::power(config.model.clone())?;
    let potentials = config
        .potentials
        .iter()
        .map(|p| p.realize(&grid))
        .collect::<Result<Vec<_>>>()?;
    let report = check_assumptions(&model, &grid, &potentials, &config.diffusion, None)?;
    let ok = report.verdicts.iter().all(|v| v.pass);
    Ok((serde_json::to_value(&report)?, ok))
}

fn random_positive_state(grid: &Grid, k: usize, rng: &mut ChaCha8Rng) -> State {
    let components = (0..k)
        .map(|_| {
            let vals: Vec<f64> = (0..grid.len()).map(|_| rng.gen_range(0.05..1.0)).collect();
            grid.field_from_values(vals).expect("sized to grid")
        })
        .collect();
    State::new(components)
}

fn run_polarize_audit(
    config: &ExperimentConfig,
    out_dir: &Path,
) -> Result<(serde_json::Value, bool)> {
    let grid = Arc::new(build_grid(&config.domain)?);
    let problem = build_problem(config, Arc::clone(&grid))?;
    let family = half_space_family(&grid)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let mut table = String::from("field,axis_angle,e_original,e_polarized,increase\n");
    let mut worst: f64 = f64::NEG_INFINITY;
    let mut rows = 0usize;
    for fi in 0..config.audit_fields {
        let state = random_positive_state(&grid, problem.k(), &mut rng);
        for h in &family {
            let (e_pol, e_orig) = polarized_energy_compare(&problem, &state, h)?;
            let inc = e_pol - e_orig;
            worst = worst.max(inc / (1.0 + e_orig.abs()));
            table.push_str(&format!(
                "{fi},{},{e_orig},{e_pol},{inc}\n",
                h.axis_angle
            ));
            rows += 1;
        }
    }
    fs::write(out_dir.join("polarize_audit.csv"), table)?;
    let ok = worst <= 1e-12;
    Ok((
        json!({
            "half_spaces": family.len(),
            "fields": config.audit_fields,
            "rows": rows,
            "worst_relative_increase": worst,
        }),
        ok,
    ))
}

#[derive(Debug, Clone, Serialize)]
struct SweepRow {
    beta: f64,
    converged: bool,
    energy: Option<f64>,
    radial_deviation: Option<[f64; 2]>,
    axial_asymmetry: Option<[f64; 2]>,
    antipodal_deviation: Option<f64>,
    error: Option<String>,
}

fn sweep_one(config: &ExperimentConfig, beta: f64) -> SweepRow {
    let attempt = || -> Result<SweepRow> {
        let grid = Arc::new(build_grid(&config.domain)?);
        let mut params = config.model.clone();
        params.beta = vec![vec![0.0, beta], vec![beta, 0.0]];
        let model = ModelP::power(params)?;
        let potentials = config
            .potentials
            .iter()
            .map(|p| p.realize(&grid))
            .collect::<Result<Vec<_>>>()?;
        let problem = Problem::new(Arc::clone(&grid), model, potentials, config.diffusion.clone())?;
        let sol = solve_ground_state(&problem, &solver_options(config))?;
        let ru = foliated_schwarz_metrics(&grid, &sol.state.components[0])?;
        let rv = foliated_schwarz_metrics(&grid, &sol.state.components[1])?;
        Ok(SweepRow {
            beta,
            converged: true,
            energy: Some(sol.energy_level),
            radial_deviation: Some([
                radial_deviation(&grid, &sol.state.components[0])?,
                radial_deviation(&grid, &sol.state.components[1])?,
            ]),
            axial_asymmetry: Some([ru.axial_asymmetry, rv.axial_asymmetry]),
            antipodal_deviation: antipodality_check(&ru, &rv),
            error: None,
        })
    };
    attempt().unwrap_or_else(|e| SweepRow {
        beta,
        converged: false,
        energy: None,
        radial_deviation: None,
        axial_asymmetry: None,
        antipodal_deviation: None,
        error: Some(e.to_string()),
    })
}

pub fn sweep_beta(
    config: &ExperimentConfig,
    out_dir: &Path,
    workers: Option<usize>,
) -> Result<(serde_json::Value, bool)> {
    if !matches!(
        config.domain,
        crate::grid::DomainSpec::Disk { .. } | crate::grid::DomainSpec::Annulus { .. }
    ) {
        return Err(Error::Unsupported("sweep_beta requires a radial domain".into()));
    }
    let mut betas = config.betas.clone();
    betas.sort_by(|a, b| a.partial_cmp(b).expect("validated finite"));
    let before = betas.len();
    betas.dedup();
    let deduplicated = before - betas.len();
    if deduplicated > 0 {
        eprintln!("warning: removed {deduplicated} duplicate beta value(s) from sweep");
    }

    let run_all = || betas.iter().map(|b| sweep_one(config, *b)).collect::<Vec<_>>();
    let rows: Vec<SweepRow> = match workers {
        Some(n) if n > 0 => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::SolverFailure(format!("worker pool: {e}")))?;
            pool.install(|| {
                use rayon::prelude::*;
                betas.par_iter().map(|b| sweep_one(config, *b)).collect()
            })
        }
        _ => run_all(),
    };

    let mut table = String::from(
        "beta,converged,energy,raddev_u1,raddev_u2,axasym_u1,axasym_u2,antipodal_deviation,error\n",
    );
    for r in &rows {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let pair = |v: Option<[f64; 2]>| match v {
            Some([a, b]) => (a.to_string(), b.to_string()),
            None => (String::new(), String::new()),
        };
        let (rd1, rd2) = pair(r.radial_deviation);
        let (ax1, ax2) = pair(r.axial_asymmetry);
        table.push_str(&format!(
            "{},{},{},{rd1},{rd2},{ax1},{ax2},{},{}\n",
            r.beta,
            r.converged,
            opt(r.energy),
            opt(r.antipodal_deviation),
            r.error.clone().unwrap_or_default()
        ));
    }
    fs::write(out_dir.join("sweep.csv"), table)?;

    let ok = rows.iter().all(|r| r.converged);
    Ok((
        json!({
            "rows": rows,
            "deduplicated": deduplicated,
        }),
        ok,
    ))
}

/// Runs one experiment into `out_dir`, writing `resolved_config.json`,
/// `summary.json`, per-task data files and `timing.json`.
pub fn run_experiment(
    config: &ExperimentConfig,
    out_dir: &Path,
    workers: Option<usize>,
) -> Result<RunSummary> {
    fs::create_dir_all(out_dir)?;
    let resolved = serde_json::to_string_pretty(config)?;
    fs::write(out_dir.join("resolved_config.json"), &resolved)?;

    let started = Instant::now();
    let (results, flags_ok) = match config.task {
        Task::Solve => run_solve(config, out_dir)?,
        Task::SolveMass => run_solve_mass(config, out_dir)?,
        Task::CheckAssumptions => run_check(config)?,
        Task::PolarizeAudit => run_polarize_audit(config, out_dir)?,
        Task::SweepBeta => sweep_beta(config, out_dir, workers)?,
    };
    let wall = started.elapsed().as_secs_f64();

    let summary = RunSummary {
        config_hash: config_hash(&resolved),
        version: VERSION.to_string(),
        task: config.task,
        flags_ok,
        results,
        wall_clock_seconds: wall,
    };
    let text = serde_json::to_string_pretty(&summary)?;
    fs::write(out_dir.join("summary.json"), text)?;
    let mut timing = fs::File::create(out_dir.join("timing.json"))?;
    writeln!(timing, "{{\"wall_clock_seconds\": {wall}}}")?;
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse_config;
    use tempfile::tempdir;

    fn read(dir: &Path, name: &str) -> String {
        fs::read_to_string(dir.join(name)).unwrap()
    }

    #[test]
    fn check_task_writes_passing_report() {
        let cfg = parse_config(
            r#"{
                "task": "check_assumptions",
                "domain": {"kind": "disk", "radius": 1.0, "nr": 12, "ntheta": 16}
            }"#,
        )
        .unwrap();
        let dir = tempdir().unwrap();
        let summary = run_experiment(&cfg, dir.path(), None).unwrap();
        assert!(summary.flags_ok);
        let text = read(dir.path(), "summary.json");
        assert!(text.contains("verdicts"));
        assert!(dir.path().join("resolved_config.json").exists());
    }

    #[test]
    fn solve_interval_scalar_summary() {
        let cfg = parse_config(
            r#"{
                "task": "solve",
                "domain": {"kind": "interval", "length": 1.0, "n": 64},
                "model": {"k": 1, "p": 4.0, "lambda": [1.0], "q": [2.0], "beta": [[0.0]]},
                "solver": {"start_count": 1}
            }"#,
        )
        .unwrap();
        let dir = tempdir().unwrap();
        let summary = run_experiment(&cfg, dir.path(), None).unwrap();
        assert!(summary.flags_ok);
        let energy = summary.results["energy"].as_f64().unwrap();
        // Continuum value of the scalar interval ground state is ≈ 15.76;
        // n = 64 resolves it to a few parts in 1e3.
        assert!((energy - 15.75).abs() < 0.1, "{energy}");
        let csv = read(dir.path(), "fields.csv");
        assert!(csv.starts_with("index,x,y,weight,u1"));
        assert_eq!(csv.lines().count(), 65);
    }

    #[test]
    fn polarize_audit_table() {
        let cfg = parse_config(
            r#"{
                "task": "polarize_audit",
                "domain": {"kind": "disk", "radius": 1.0, "nr": 8, "ntheta": 16},
                "audit_fields": 3,
                "seed": 11
            }"#,
        )
        .unwrap();
        let dir = tempdir().unwrap();
        let summary = run_experiment(&cfg, dir.path(), None).unwrap();
        assert!(summary.flags_ok, "{}", summary.results);
        let csv = read(dir.path(), "polarize_audit.csv");
        assert_eq!(csv.lines().count(), 1 + 3 * 16);
    }

    #[test]
    fn sweep_dedups_and_orders() {
        let cfg = parse_config(
            r#"{
                "task": "sweep_beta",
                "domain": {"kind": "disk", "radius": 1.0, "nr": 10, "ntheta": 16},
                "betas": [1.0, 0.0, 1.0],
                "solver": {"start_count": 1, "gradient_tol": 1e-7},
                "seed": 3
            }"#,
        )
        .unwrap();
        let dir = tempdir().unwrap();
        let summary = run_experiment(&cfg, dir.path(), Some(2)).unwrap();
        assert_eq!(summary.results["deduplicated"], 1);
        let csv = read(dir.path(), "sweep.csv");
        let rows: Vec<&str> = csv.lines().skip(1).collect();
        assert_eq!(rows.len(), 2);
        assert!(rows[0].starts_with("0,"));
        assert!(rows[1].starts_with("1,"));
        // β = 0 decouples: radial ground states.
        let raddev: f64 = rows[0].split(',').nth(3).unwrap().parse().unwrap();
        assert!(raddev < 1e-6, "{raddev}");
    }

    #[test]
    fn determinism_bit_identical_summaries() {
        let cfg = parse_config(
            r#"{
                "task": "solve",
                "domain": {"kind": "interval", "length": 1.0, "n": 32},
                "model": {"k": 1, "p": 4.0, "lambda": [1.0], "q": [2.0], "beta": [[0.0]]},
                "seed": 42
            }"#,
        )
        .unwrap();
        let d1 = tempdir().unwrap();
        let d2 = tempdir().unwrap();
        run_experiment(&cfg, d1.path(), None).unwrap();
        run_experiment(&cfg, d2.path(), None).unwrap();
        assert_eq!(read(d1.path(), "summary.json"), read(d2.path(), "summary.json"));
        assert_eq!(read(d1.path(), "fields.csv"), read(d2.path(), "fields.csv"));
    }
}
