//! Experiment drivers behind the `fdisp` binary. Each driver writes its
//! tables into an output directory and returns a one-line summary.

use fdisp_core::checkpoint::{load_checkpoint_for, save_checkpoint};
use fdisp_core::config::{Command, ExperimentConfig, Initial, Params};
use fdisp_core::evolution::{correlation_shift, run, Integrator, Observer, SimConfig};
use fdisp_core::ground_state::{
    default_init, petviashvili_solve, pohozaev_slack, GroundState, SolverOptions,
};
use fdisp_core::linearized::{
    build_instability_data, coercivity_probe, lowest_eigenpair, rotation_defect, scaling_identities,
    EigenOptions, LinearizedOperator,
};
use fdisp_core::modulation::{instability_experiment, InstabilityConfig, ModulationContext};
use fdisp_core::monotonicity::{commutator_sweep, kernel_omega, omega_decay_check, probe_family};
use fdisp_core::table::{emit_csv, Table};
use fdisp_core::weights::WeightParams;
use fdisp_core::{Error, RealField, Result, Spectral};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

/// Environment variable naming the output directory.
pub const OUT_DIR_ENV: &str = "FDISP_OUT_DIR";

#[derive(Debug, Clone)]
pub struct Outcome {
    pub summary: String,
    pub files: Vec<PathBuf>,
}

struct Writer<'a> {
    dir: &'a Path,
    files: Vec<PathBuf>,
}

impl Writer<'_> {
    fn csv(&mut self, name: &str, table: &Table) -> Result<()> {
        let path = self.dir.join(name);
        emit_csv(table, &path)?;
        self.files.push(path);
        Ok(())
    }

    fn checkpoint(&mut self, name: &str, field: &RealField, alpha: f64, t: f64) -> Result<()> {
        let path = self.dir.join(name);
        save_checkpoint(field, alpha, t, &path)?;
        self.files.push(path);
        Ok(())
    }
}

/// Runs the configured experiment, writing into `out_dir`.
pub fn execute(cfg: &ExperimentConfig, out_dir: &Path) -> Result<Outcome> {
    cfg.validate()?;
    std::fs::create_dir_all(out_dir)?;
    let mut w = Writer {
        dir: out_dir,
        files: Vec::new(),
    };
    let p = &cfg.params;
    let summary = match cfg.command {
        Command::GroundState => ground_state(p, &mut w)?,
        Command::Spectrum => spectrum(p, &mut w)?,
        Command::Simulate => simulate(p, &mut w)?,
        Command::CheckMonotonicity => check_monotonicity(p, &mut w)?,
        Command::KernelDecay => kernel_decay(p, &mut w)?,
        Command::Instability => instability(p, &mut w)?,
    };
    Ok(Outcome {
        summary,
        files: w.files,
    })
}

fn solve(p: &Params) -> Result<(Spectral, GroundState)> {
    let grid = p.grid_spec()?;
    let sp = Spectral::new(&grid);
    let opts = SolverOptions {
        max_iterations: p.max_iterations,
        tolerance: p.tolerance,
        band_limited: p.band_limited,
    };
    let gs = petviashvili_solve(&sp, p.alpha, p.c, &default_init(grid), opts)?;
    Ok((sp, gs))
}

/// Values along the `x1` axis through the middle row.
fn axis_profile(u: &RealField, name: &str) -> Result<Table> {
    let g = *u.grid();
    let j = if g.dim() == 2 { g.n(1) / 2 } else { 0 };
    let mut t = Table::new(&["x1", name]);
    for i in 0..g.n(0) {
        t.push(vec![g.point(j * g.n(0) + i)[0], u.at(i, j)])?;
    }
    Ok(t)
}

fn ground_state(p: &Params, w: &mut Writer) -> Result<String> {
    let (sp, gs) = solve(p)?;
    let slack = pohozaev_slack(&sp, &gs.q, p.alpha);
    let mut t = Table::new(&[
        "alpha",
        "c",
        "iterations",
        "residual",
        "stabilizer",
        "max",
        "mass",
        "energy",
        "decay_exponent",
        "pohozaev_slack",
    ]);
    t.push(vec![
        gs.alpha,
        gs.c,
        gs.iterations as f64,
        gs.residual_norm,
        gs.stabilizer,
        gs.q.max(),
        gs.mass,
        gs.energy,
        gs.decay_exponent.unwrap_or(f64::NAN),
        slack,
    ])?;
    w.csv("ground_state.csv", &t)?;
    w.csv("profile.csv", &axis_profile(&gs.q, "q")?)?;
    w.checkpoint("ground_state.ckpt", &gs.q, p.alpha, 0.0)?;
    Ok(format!(
        "iterations={} residual={:e} max={} mass={} energy={} decay_exponent={} pohozaev_slack={:e}",
        gs.iterations,
        gs.residual_norm,
        gs.q.max(),
        gs.mass,
        gs.energy,
        gs.decay_exponent.unwrap_or(f64::NAN),
        slack
    ))
}

fn spectrum(p: &Params, w: &mut Writer) -> Result<String> {
    let (sp, gs) = solve(p)?;
    let op = LinearizedOperator::new(&sp, &gs)?;
    let bundle = lowest_eigenpair(&op, EigenOptions::default())?;
    let coercivity = coercivity_probe(&op, &bundle, p.coercivity_trials, p.seed);
    let (scaling_residual, scaling_ratio) = scaling_identities(&op);
    let radial = rotation_defect(&bundle.psi0).unwrap_or(f64::NAN);
    let mut t = Table::new(&[
        "mu0",
        "eigen_residual",
        "kernel_residual_x1",
        "kernel_residual_x2",
        "psi0_rotation_defect",
        "scaling_residual",
        "scaling_ratio",
        "coercivity_min",
    ]);
    t.push(vec![
        bundle.mu0,
        bundle.eigen_residual,
        bundle.kernel_residuals[0],
        bundle.kernel_residuals.get(1).copied().unwrap_or(f64::NAN),
        radial,
        scaling_residual,
        scaling_ratio,
        coercivity.min_ratio,
    ])?;
    w.csv("spectrum.csv", &t)?;
    let mut c = Table::new(&["trial", "ratio"]);
    for (i, r) in coercivity.ratios.iter().enumerate() {
        c.push(vec![i as f64, *r])?;
    }
    w.csv("coercivity.csv", &c)?;
    w.checkpoint("psi0.ckpt", &bundle.psi0, p.alpha, 0.0)?;
    Ok(format!(
        "mu0={} eigen_residual={:e} kernel_residual={:e} coercivity_min={}",
        bundle.mu0,
        bundle.eigen_residual,
        bundle.kernel_residuals.iter().cloned().fold(0.0, f64::max),
        coercivity.min_ratio
    ))
}

fn simulate(p: &Params, w: &mut Writer) -> Result<String> {
    let grid = p.grid_spec()?;
    let u0 = match (&p.checkpoint, p.initial) {
        (Some(path), _) => load_checkpoint_for(Path::new(path), &grid)?.1,
        (None, Initial::Soliton) => solve(p)?.1.q,
        (None, Initial::Gaussian) => RealField::from_fn(grid, |x, y| (-(x * x + y * y)).exp()),
    };
    let sp = Spectral::new(&grid);
    if p.dealias {
        let outside = u0.sub(&sp.dealias(&u0)).norm() / u0.norm();
        if outside > 1e-6 {
            log::warn!(
                "{outside:e} of the initial norm lies outside the dealiased band; mass and energy will not be conserved"
            );
        }
    }
    let cfg = SimConfig {
        alpha: p.alpha,
        dt: p.dt,
        t_end: p.t_end,
        dealias: p.dealias,
        diagnostics_every: p.diagnostics_every,
        nonlinearity: true,
        frame_speed: p.frame_speed,
        scheme: p.scheme,
    };
    cfg.validate(&sp)?;
    let integrator = Integrator::new(&sp, cfg)?;
    let shift = Observer::new(&["shift_x1", "shift_x2"], |_, u| {
        correlation_shift(&sp, u, &u0).to_vec()
    });
    let out = run(&integrator, &u0, &[shift])?;
    let mut t = Table::new(&out.series.columns);
    for row in &out.series.rows {
        t.push(row.clone())?;
    }
    w.csv("diagnostics.csv", &t)?;
    w.checkpoint("final.ckpt", &out.final_state.u, p.alpha, out.final_state.t)?;
    if let Some(b) = out.blowup {
        return Err(Error::Numerical(format!("run stopped at t = {}: {}", b.last_state.t, b.message)));
    }
    let mass = t.column("mass").unwrap_or_default();
    let energy = t.column("energy").unwrap_or_default();
    let drift = |v: &[f64]| {
        v.iter()
            .map(|x| (x - v[0]).abs())
            .fold(0.0, f64::max)
            / v[0].abs().max(f64::MIN_POSITIVE)
    };
    Ok(format!(
        "t={} steps={} mass_drift={:e} energy_drift={:e}",
        out.final_state.t,
        out.final_state.step_index,
        drift(&mass),
        drift(&energy)
    ))
}

fn check_monotonicity(p: &Params, w: &mut Writer) -> Result<String> {
    let grid = p.grid_spec()?;
    let sp = Spectral::new(&grid);
    let weight = WeightParams::new(&p.sigma, p.omega, p.gamma, p.m_scale, p.alpha)?;
    let probes = probe_family(&sp, p.probes, p.seed);
    let sweep = commutator_sweep(&sp, &probes, &weight, p.alpha, p.weight_form, p.c1)?;
    let mut t = Table::new(&["probe", "lhs", "smoothing_term", "mass_term", "slack", "seam_level"]);
    for (i, r) in sweep.reports.iter().enumerate() {
        t.push(vec![i as f64, r.lhs, r.smoothing_term, r.mass_term, r.slack, r.seam_level])?;
    }
    w.csv("monotonicity.csv", &t)?;
    Ok(format!(
        "c1={} c2={} min_slack={:e} probes={}",
        sweep.c1,
        sweep.c2_fitted,
        sweep.min_slack(),
        sweep.reports.len()
    ))
}

fn kernel_decay(p: &Params, w: &mut Writer) -> Result<String> {
    let grid = p.grid_spec()?;
    let sp = Spectral::new(&grid);
    let omega = kernel_omega(&sp, p.alpha)?;
    let report = omega_decay_check(&omega, p.alpha, p.r_inner);
    let power = grid.dim() as f64 + p.alpha + 1.0;
    let profile = axis_profile(&omega, "omega")?;
    let mut t = Table::new(&["x1", "omega", "weighted"]);
    for row in profile.rows.iter().filter(|r| r[0] >= 0.0) {
        t.push(vec![row[0], row[1], row[1].abs() * (1.0 + row[0] * row[0]).powf(0.5 * power)])?;
    }
    w.csv("kernel_decay.csv", &t)?;
    Ok(format!(
        "inner={:e} sup={:e} ratio={} oddness_defect={:e} integral={:e}",
        report.inner_value, report.sup_value, report.ratio, report.oddness_defect, report.integral
    ))
}

fn instability(p: &Params, w: &mut Writer) -> Result<String> {
    let (sp, gs) = solve(p)?;
    let op = LinearizedOperator::new(&sp, &gs)?;
    let bundle = lowest_eigenpair(&op, EigenOptions::default())?;
    let ctx = ModulationContext::new(&op, &bundle)?;
    let mut data = build_instability_data(&op, &bundle, p.n_index, Some(ctx.tube_radius()))?;
    if p.flip {
        data = data.flipped(op.q());
    }
    let cfg = InstabilityConfig {
        s_end: p.t_end,
        dt: p.dt,
        sample_every: p.sample_every,
        a_cutoff: p.a_cutoff,
        x0_list: p.x0_list.clone(),
        m_exponent: p.m_exponent,
        frame_speed: p.frame_speed,
        weight_scale: p.weight_scale,
        nu: p.nu,
        scheme: p.scheme,
    };
    let report = instability_experiment(&ctx, &data, &cfg)?;

    let mut virial = Table::new(&["s", "lambda", "z1", "J_A", "K_A", "dK_ds", "tube_distance"]);
    let mut right = Table::new(&["s", "x0", "value"]);
    let mut budget = Table::new(&[
        "s",
        "t",
        "eps_norm",
        "eps_mass",
        "energy_defect",
        "expansion_residual",
        "weighted_mass",
    ]);
    for r in &report.records {
        virial.push(vec![r.s, r.lambda, r.z1, r.j_a, r.k_a, r.dk_ds, r.tube_distance])?;
        for (x0, v) in report.x0_list.iter().zip(&r.right_mass) {
            right.push(vec![r.s, *x0, *v])?;
        }
        budget.push(vec![
            r.s,
            r.t,
            r.eps_norm,
            r.budget.mass,
            r.budget.energy_defect(),
            r.budget.expansion_residual(),
            r.weighted_mass,
        ])?;
    }
    w.csv("virial.csv", &virial)?;
    w.csv("rightmass.csv", &right)?;
    w.csv("budget.csv", &budget)?;

    let mut line = format!(
        "verdict={} n_index={} mean_dK_ds={} lower_bound={} tube_exceeded={} K_monotone={} s_reached={}",
        report.verdict,
        report.n_index,
        report.mean_dk_ds.unwrap_or(f64::NAN),
        report.lower_bound,
        report.tube_exceeded,
        report.k_monotone,
        report.records.last().map_or(0.0, |r| r.s),
    );
    if let Some(reason) = &report.stopped {
        let _ = write!(line, " stopped=\"{reason}\"");
    }
    Ok(line)
}
