//! A quick self-test of the discrete structure on a tiny grid.

use wentzell_core::analysis::LinearizedOperator;
use wentzell_core::evolution::{evolve, EvolveConfig, StepperConfig, ENERGY_GUARD_TOL};
use wentzell_core::initial::InitialData;
use wentzell_core::io::{read_snapshot, write_snapshot};
use wentzell_core::stationary::{find_equilibrium, MinimizeOptions, NewtonOptions};
use wentzell_core::{Constants, EnergyModel, PairField, Potential, Result, StripGrid, WentzellOperator};

pub type CheckResult = (&'static str, bool, String);

fn tiny_model() -> Result<EnergyModel> {
    let g = StripGrid::strip(1.0, 1.0, 6, 6)?;
    let consts = Constants {
        alpha: 0.8,
        beta: 1.2,
        b: 1.5,
        c: 0.7,
    };
    EnergyModel::new(WentzellOperator::new(g, consts)?, Potential::double_well())
}

fn sample(m: &EnergyModel, seed: u64) -> Result<PairField> {
    InitialData::RandomModes {
        amplitude: 0.6,
        mean: 0.1,
        modes: 2,
        seed,
    }
    .generate(m.grid())
}

fn self_adjointness(m: &EnergyModel) -> Result<CheckResult> {
    let wa = m.op().a_matrix().scaled_rows(m.op().mass());
    let ra = wa.asymmetry() / wa.frobenius();
    let psi = sample(m, 1)?;
    let v = sample(m, 2)?.scale(0.1);
    let rl = LinearizedOperator::assemble(m, &psi, &v)?.self_adjointness_residual();
    Ok((
        "self-adjointness",
        ra <= 1e-12 && rl <= 1e-12,
        format!("A {ra:.1e}, L(v) {rl:.1e}"),
    ))
}

fn gradient(m: &EnergyModel) -> Result<CheckResult> {
    let mut worst = 0.0_f64;
    for seed in 0..5 {
        let u = sample(m, 10 + seed)?;
        let g = m.gradient(&u)?;
        let scale = g.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        let h = 1e-5;
        for k in 0..u.len() {
            let mut p = u.clone();
            p.values_mut()[k] += h;
            let mut q = u.clone();
            q.values_mut()[k] -= h;
            let fd = (m.energy(&p)? - m.energy(&q)?) / (2.0 * h);
            worst = worst.max((fd - g[k]).abs() / scale);
        }
    }
    Ok(("gradient", worst <= 1e-6, format!("max relative error {worst:.1e}")))
}

fn x_norm_routes(m: &EnergyModel) -> Result<CheckResult> {
    let mu = m.chemical_potential(&sample(m, 3)?)?;
    let ut = m.op().apply(&mu)?.scale(-1.0);
    let x = m.op().x_norm(&ut)?;
    let a = m.op().a_form(&mu, &mu)?.sqrt();
    let r = (x - a).abs() / a;
    Ok(("x-norm identity", r <= 1e-10, format!("relative difference {r:.1e}")))
}

fn energy_and_mass(m: &EnergyModel) -> Result<Vec<CheckResult>> {
    let traj = evolve(
        m,
        &sample(m, 4)?,
        StepperConfig {
            dt: 1e-3,
            ..Default::default()
        },
        EvolveConfig {
            t_end: 0.2,
            series_stride: 1,
            snapshot_stride: 0,
        },
        None,
    )?;
    Ok(vec![
        (
            "energy law",
            traj.max_energy_increase <= ENERGY_GUARD_TOL,
            format!("max relative increase {:.1e} over {} steps", traj.max_energy_increase, traj.steps),
        ),
        (
            "mass-flux balance",
            traj.max_mass_flux_ratio <= 10.0,
            format!("max defect / (dt * mu scale) {:.3}", traj.max_mass_flux_ratio),
        ),
    ])
}

fn snapshot_round_trip(m: &EnergyModel) -> Result<CheckResult> {
    let u = sample(m, 5)?;
    let mut buf = Vec::new();
    write_snapshot(&mut buf, m.grid(), &u)?;
    let (_, back) = read_snapshot(buf.as_slice())?;
    let ok = back.values() == u.values();
    Ok(("snapshot round trip", ok, format!("{} values", u.len())))
}

fn zero_equilibrium(m: &EnergyModel) -> Result<CheckResult> {
    let z = PairField::zeros(m.grid());
    let (_, sol) = find_equilibrium(m, &z, MinimizeOptions::default(), NewtonOptions::default())?;
    let ok = sol.psi.values().iter().all(|v| *v == 0.0);
    Ok(("zero equilibrium", ok, format!("residual {:.1e}", sol.residual())))
}

pub fn run() -> Vec<CheckResult> {
    let m = match tiny_model() {
        Ok(m) => m,
        Err(e) => return vec![("setup", false, e.to_string())],
    };
    let mut out = Vec::new();
    let mut push = |name: &'static str, r: Result<Vec<CheckResult>>| match r {
        Ok(v) => out.extend(v),
        Err(e) => out.push((name, false, e.to_string())),
    };
    push("self-adjointness", self_adjointness(&m).map(|r| vec![r]));
    push("gradient", gradient(&m).map(|r| vec![r]));
    push("x-norm identity", x_norm_routes(&m).map(|r| vec![r]));
    push("energy law", energy_and_mass(&m));
    push("snapshot round trip", snapshot_round_trip(&m).map(|r| vec![r]));
    push("zero equilibrium", zero_equilibrium(&m).map(|r| vec![r]));
    out
}

#[cfg(test)]
mod tests {
    #[test]
    fn all_checks_pass() {
        for (name, ok, detail) in super::run() {
            assert!(ok, "{name}: {detail}");
        }
    }
}
