//! The four subcommands.

use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::json;
use wentzell_core::analysis::*;
use wentzell_core::evolution::{evolve, RunStatus, TrajectoryRecord};
use wentzell_core::io::{read_snapshot, write_diagnostics, write_snapshot, write_timeseries};
use wentzell_core::stationary::{find_equilibrium, newton_refine, EquilibriumSolution, Method};
use wentzell_core::svg::{Plot, Series};
use wentzell_core::{EnergyModel, PairField, StripGrid, WentzellOperator};

use crate::config::RunConfig;
use crate::error::CliError;
use crate::output::{sha256_hex, OutputDir};

pub const CONFIG_COPY: &str = "config.toml";
pub const SNAPSHOT_INDEX: &str = "snapshots/index.csv";

fn base_dir(config_path: &Path) -> PathBuf {
    config_path
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_default()
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

pub fn load_field(path: &Path, grid: &StripGrid) -> Result<PairField, CliError> {
    let f = File::open(path)
        .map_err(|e| CliError::Config(format!("cannot open {}: {e}", path.display())))?;
    let (g, u) = read_snapshot(BufReader::new(f))
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    if !g.same_shape(grid) {
        return Err(CliError::Config(format!(
            "{} is on a {} {}x{} grid, the configuration has {} {}x{}",
            path.display(),
            g.mode(),
            g.nx(),
            g.ny(),
            grid.mode(),
            grid.nx(),
            grid.ny()
        )));
    }
    Ok(u)
}

fn build_model(cfg: &RunConfig) -> Result<EnergyModel, CliError> {
    let op = WentzellOperator::new(cfg.grid()?, cfg.constants)?;
    Ok(EnergyModel::new(op, cfg.potential()?)?)
}

fn initial_state(cfg: &RunConfig, base: &Path, grid: &StripGrid) -> Result<PairField, CliError> {
    match cfg.initial_data() {
        Ok(data) => Ok(data.generate(grid)?),
        Err(path) => load_field(&resolve(base, &path), grid),
    }
}

fn snapshot_writer<'a>(
    grid: &'a StripGrid,
    u: &'a PairField,
) -> impl FnOnce(&mut dyn std::io::Write) -> Result<(), CliError> + 'a {
    move |w| Ok(write_snapshot(w, grid, u)?)
}

fn energy_plots(out: &mut OutputDir, traj: &TrajectoryRecord) -> Result<(), CliError> {
    let e: Vec<f64> = traj.energies();
    let d: Vec<f64> = traj
        .energy_reports
        .iter()
        .map(|r| r.dissipation.max(f64::MIN_POSITIVE).log10())
        .collect();
    let svg = Plot::new("Free energy", "t", "E")
        .with(Series::line("E(U)", &traj.times, &e))
        .render();
    out.write_str("energy.svg", &svg)?;
    let svg = Plot::new("Dissipation", "t", "log10 dissipation")
        .with(Series::line("log10 <A mu, mu>", &traj.times, &d))
        .render();
    out.write_str("dissipation.svg", &svg)
}

pub fn simulate(config_path: &Path, output: Option<&Path>) -> Result<(), CliError> {
    let cfg = RunConfig::load(config_path)?;
    let config_hash = sha256_hex(&std::fs::read(config_path)?);
    let base = base_dir(config_path);
    let model = build_model(&cfg)?;
    let grid = model.grid().clone();
    let u0 = initial_state(&cfg, &base, &grid)?;
    let reference = cfg
        .reference_equilibrium
        .as_ref()
        .map(|p| load_field(&resolve(&base, p), &grid))
        .transpose()?;
    let root = output.map(Path::to_path_buf).unwrap_or_else(|| resolve(&base, &cfg.io.output_dir));
    let mut out = OutputDir::create(&root)?;
    out.write_str(CONFIG_COPY, &cfg.to_toml())?;

    log::info!(
        "simulating to t = {} with dt = {} on a {}x{} grid",
        cfg.stepper.t_end,
        cfg.stepper.dt,
        grid.nx(),
        grid.ny()
    );
    let traj = evolve(&model, &u0, cfg.stepper_config(), cfg.evolve_config(), reference.as_ref())?;

    out.write("timeseries.csv", |w| Ok(write_timeseries(w, &traj)?))?;
    out.write("diagnostics.csv", |w| Ok(write_diagnostics(w, &traj.diagnostics)?))?;
    let mut index = String::from("index,t,file\n");
    for (n, (t, u)) in traj.snapshots.iter().enumerate() {
        let name = format!("snapshots/snap_{n:06}.csv");
        out.write(&name, snapshot_writer(&grid, u))?;
        index.push_str(&format!("{n},{t:e},{}\n", &name["snapshots/".len()..]));
    }
    out.write_str(SNAPSHOT_INDEX, &index)?;
    out.write("final.csv", snapshot_writer(&grid, &traj.final_state))?;
    if cfg.io.plots {
        energy_plots(&mut out, &traj)?;
        if let Some(d) = traj.x_dist_to_ref() {
            let logd: Vec<f64> = d.iter().map(|d| d.max(f64::MIN_POSITIVE).log10()).collect();
            let svg = Plot::new("Distance to the reference equilibrium", "t", "log10 ||U - psi||_X")
                .with(Series::line("X-distance", &traj.times, &logd))
                .render();
            out.write_str("distance.svg", &svg)?;
        }
    }

    let last = traj.energy_reports.last();
    let details = json!({
        "steps": traj.steps,
        "rejected_steps": traj.rejected_steps,
        "final_time": traj.final_time,
        "final_energy": last.map(|r| r.e_total),
        "final_residual": last.map(|r| r.bulk_res + r.bdry_res),
        "max_energy_increase": traj.max_energy_increase,
        "max_mass_flux_ratio": traj.max_mass_flux_ratio,
        "run_status": &traj.status,
    });
    match &traj.status {
        RunStatus::Completed => {
            println!(
                "completed {} steps to t = {}; E = {:.10e}, residual = {:.3e}",
                traj.steps,
                traj.final_time,
                last.map_or(f64::NAN, |r| r.e_total),
                last.map_or(f64::NAN, |r| r.bulk_res + r.bdry_res)
            );
            out.finish("simulate", Some(config_hash), "completed", details)
        }
        RunStatus::Aborted { t, dt, reason } => {
            out.finish("simulate", Some(config_hash), "aborted", details)?;
            Err(CliError::GuardAbort(format!("at t = {t} (dt = {dt}): {reason}")))
        }
    }
}

#[derive(Serialize)]
struct EquilibriumSidecar<'a> {
    #[serde(flatten)]
    solution: &'a EquilibriumSolution,
    quadratic_convergence: bool,
    minimize_iterations: Option<usize>,
    saddle_escapes: Option<usize>,
    classification: Classification,
    lambda_min: f64,
    spectrum: &'a SpectralReport,
}

fn spectral_report(cfg: &RunConfig, model: &EnergyModel, psi: &PairField) -> Result<SpectralReport, CliError> {
    let zero = PairField::zeros(model.grid());
    let l = LinearizedOperator::assemble(model, psi, &zero)?;
    let k = cfg.analysis.eigenvalues.min(l.dim());
    let opts = SpectrumOptions {
        kernel_tol: cfg.analysis.kernel_tol,
        ..Default::default()
    };
    Ok(spectrum_with(&l, k, opts)?)
}

pub fn equilibrium(config_path: &Path, init: Option<&Path>, output: Option<&Path>) -> Result<(), CliError> {
    let cfg = RunConfig::load(config_path)?;
    let config_hash = sha256_hex(&std::fs::read(config_path)?);
    let base = base_dir(config_path);
    let model = build_model(&cfg)?;
    let grid = model.grid().clone();
    let u0 = match init {
        Some(p) => load_field(p, &grid)?,
        None => initial_state(&cfg, &base, &grid)?,
    };
    let root = output
        .map(Path::to_path_buf)
        .unwrap_or_else(|| resolve(&base, &cfg.io.output_dir).join("equilibrium"));
    let mut out = OutputDir::create(&root)?;

    // a supplied start inside the basin is refined directly; configured
    // initial data always goes through descent, which also escapes saddles
    let (b, s) = model.stationary_residual(&u0)?;
    let (min, sol) = if init.is_some() && b + s <= cfg.equilibrium.basin {
        let mut sol = newton_refine(&model, &u0, cfg.newton_options())?;
        sol.method = Method::NewtonOnly;
        (None, sol)
    } else {
        let (min, sol) = find_equilibrium(&model, &u0, cfg.minimize_options(), cfg.newton_options())?;
        (Some(min), sol)
    };
    let report = spectral_report(&cfg, &model, &sol.psi)?;
    out.write("equilibrium.csv", snapshot_writer(&grid, &sol.psi))?;
    let sidecar = EquilibriumSidecar {
        solution: &sol,
        quadratic_convergence: sol.is_quadratic(),
        minimize_iterations: min.as_ref().map(|m| m.iterations),
        saddle_escapes: min.as_ref().map(|m| m.escapes),
        classification: report.classification,
        lambda_min: report.lambda_min(),
        spectrum: &report,
    };
    out.write_json("equilibrium.json", &sidecar)?;

    println!(
        "classification: {} (lambda_min = {:.6e}, kernel dimension {})",
        report.classification,
        report.lambda_min(),
        report.kernel_dim
    );
    println!(
        "E(psi) = {:.12e}, residual = {:.3e}, Newton iterations = {}, method = {:?}",
        sol.energy,
        sol.residual(),
        sol.newton_iters,
        sol.method
    );
    let status = if sol.converged { "converged" } else { "unconverged" };
    out.finish(
        "equilibrium",
        Some(config_hash),
        status,
        json!({ "residual": sol.residual(), "energy": sol.energy }),
    )?;
    if sol.converged {
        Ok(())
    } else {
        Err(CliError::Unconverged(format!(
            "residual {:e} after {} Newton iterations (history {:?}); kernel dimension {:?}",
            sol.residual(),
            sol.newton_iters,
            sol.residual_history,
            sol.kernel_dim
        )))
    }
}

fn read_snapshots(run_dir: &Path, grid: &StripGrid) -> Result<Vec<(f64, PairField)>, CliError> {
    let index_path = run_dir.join(SNAPSHOT_INDEX);
    let text = std::fs::read_to_string(&index_path)?;
    let mut states = Vec::new();
    for line in text.lines().skip(1).filter(|l| !l.trim().is_empty()) {
        let mut cells = line.split(',');
        let (_, t, file) = (cells.next(), cells.next(), cells.next());
        let t: f64 = t
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| CliError::Config(format!("{}: bad row `{line}`", index_path.display())))?;
        let file = file.ok_or_else(|| CliError::Config(format!("{}: bad row `{line}`", index_path.display())))?;
        states.push((t, load_field(&run_dir.join("snapshots").join(file), grid)?));
    }
    Ok(states)
}

#[derive(Serialize)]
struct ProbeSummary<'a> {
    #[serde(flatten)]
    report: &'a LsProbeReport,
    calibration_margin: f64,
}

pub fn analyze(run_dir: &Path, psi_path: &Path, output: Option<&Path>) -> Result<(), CliError> {
    let required = [CONFIG_COPY, SNAPSHOT_INDEX];
    let mut missing: Vec<String> = required
        .iter()
        .filter(|f| !run_dir.join(f).is_file())
        .map(|f| run_dir.join(f).display().to_string())
        .collect();
    if !psi_path.is_file() {
        missing.push(psi_path.display().to_string());
    }
    if !missing.is_empty() {
        return Err(CliError::Config(format!("missing artifacts: {}", missing.join(", "))));
    }
    let cfg = RunConfig::load(&run_dir.join(CONFIG_COPY))?;
    let model = build_model(&cfg)?;
    let grid = model.grid().clone();
    let psi = load_field(psi_path, &grid)?;
    let states = read_snapshots(run_dir, &grid)?;
    let root = output.map(Path::to_path_buf).unwrap_or_else(|| run_dir.join("analysis"));
    let mut out = OutputDir::create(&root)?;

    // spectrum at psi
    let spec = spectral_report(&cfg, &model, &psi)?;
    out.write_json("spectrum.json", &spec)?;
    let mut csv = String::from("index,lambda,residual\n");
    for (i, (l, r)) in spec.eigenvalues.iter().zip(&spec.residuals).enumerate() {
        csv.push_str(&format!("{i},{l:e},{r:e}\n"));
    }
    out.write_str("eigenvalues.csv", &csv)?;
    println!(
        "spectrum: {} (lambda_min = {:.6e}, kernel dimension {}, condition {:.3e})",
        spec.classification,
        spec.lambda_min(),
        spec.kernel_dim,
        spec.condition
    );
    if spec.ill_conditioned {
        eprintln!("warning: the linearization at psi is ill-conditioned");
    }

    // Lojasiewicz-Simon probe
    let opts = LsProbeOptions {
        window: cfg.analysis.probe_window,
        ..Default::default()
    };
    let probe = ls_probe_states(&model, &states, &psi, &opts)?;
    out.write_json(
        "ls_probe.json",
        &ProbeSummary {
            report: &probe,
            calibration_margin: opts.calibration_margin,
        },
    )?;
    let mut csv = String::from("t,gap,lhs,v_dist\n");
    for s in &probe.samples {
        csv.push_str(&format!("{:e},{:e},{:e},{:e}\n", s.t, s.gap, s.lhs, s.v_dist));
    }
    out.write_str("ls_samples.csv", &csv)?;
    if probe.insufficient {
        eprintln!(
            "warning: only {} usable probe samples inside the V-window {}; no exponent fitted",
            probe.samples.len(),
            opts.window
        );
    } else {
        println!(
            "LS probe: theta = {:.5}, {} samples, {} inequality violations",
            probe.fitted_theta.unwrap_or(f64::NAN),
            probe.samples.len(),
            probe.inequality_violations
        );
    }

    // decay rate of the X-distance
    let times: Vec<f64> = states.iter().map(|s| s.0).collect();
    let mut x_dist = Vec::with_capacity(states.len());
    let mut csv = String::from("t,x_dist,v_dist\n");
    for (t, u) in &states {
        let d = u.sub(&psi);
        let x = model.op().x_norm(&d)?;
        csv.push_str(&format!("{t:e},{x:e},{:e}\n", model.op().v_norm(&d)));
        x_dist.push(x);
    }
    out.write_str("distance.csv", &csv)?;
    let t_last = times.last().copied().unwrap_or(0.0);
    let range = (
        cfg.analysis.rate_t_min.unwrap_or(t_last / 10.0),
        cfg.analysis.rate_t_max.unwrap_or(t_last),
    );
    let rate = rate_fit(
        &times,
        &x_dist,
        probe.fitted_theta,
        &RateOptions {
            t_range: Some(range),
            ..Default::default()
        },
    );
    match &rate {
        Ok(fit) => {
            out.write_json("rate.json", fit)?;
            println!(
                "rate: {:?} decay (gamma = {:.4e}, q = {:.4}); bound check {}",
                fit.preferred,
                fit.gamma,
                fit.q,
                match fit.bound_ok {
                    Some(true) => "passes",
                    Some(false) => "fails",
                    None => "not applicable (no exponent)",
                }
            );
            if !fit.monotone {
                eprintln!("warning: the distance series is not monotone");
            }
        }
        Err(e) => eprintln!("warning: no rate fit: {e}"),
    }

    if cfg.io.plots {
        let lg: Vec<f64> = probe.samples.iter().map(|s| s.gap.ln()).collect();
        let ll: Vec<f64> = probe.samples.iter().map(|s| s.lhs.ln()).collect();
        let mut plot = Plot::new("Lojasiewicz-Simon probe", "ln(E(u) - E(psi))", "ln(residual)")
            .with(Series::points("samples", &lg, &ll));
        if let (Some(s), Some(c)) = (probe.slope, probe.intercept) {
            let fit: Vec<f64> = lg.iter().map(|x| c + s * x).collect();
            plot = plot.with(Series::line(format!("slope {s:.4}"), &lg, &fit));
        }
        out.write_str("ls_scatter.svg", &plot.render())?;
        let logd: Vec<f64> = x_dist.iter().map(|d| d.max(f64::MIN_POSITIVE).log10()).collect();
        out.write_str(
            "decay.svg",
            &Plot::new("Convergence to psi", "t", "log10 ||U - psi||_X")
                .with(Series::line("X-distance", &times, &logd))
                .render(),
        )?;
    }

    out.finish(
        "analyze",
        None,
        if probe.insufficient { "insufficient_samples" } else { "ok" },
        json!({
            "psi": psi_path.display().to_string(),
            "snapshots": states.len(),
            "fitted_theta": probe.fitted_theta,
            "rate_model": rate.as_ref().ok().map(|f| f.preferred),
        }),
    )
}

/// Runs the structural invariants on a tiny grid.
pub fn check() -> Result<(), CliError> {
    let results = crate::check::run();
    let mut failed = 0;
    for (name, ok, detail) in &results {
        println!("{} {name}: {detail}", if *ok { "PASS" } else { "FAIL" });
        failed += usize::from(!ok);
    }
    if failed == 0 {
        println!("all {} invariant checks passed", results.len());
        Ok(())
    } else {
        Err(CliError::Failed(format!("{failed} of {} invariant checks failed", results.len())))
    }
}
