//! Case orchestration: mesh → assemble → solve → post, for single runs, motion
//! sequences and convergence studies.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::config::{Analytic, CaseConfig};
use crate::coupling::{
    apply_motion, assemble_sector_block, augment_system, build_current_sheet, AugmentedSystem, CoupledSystem,
};
use crate::error::{Error, Result};
use crate::fem::CurrentFn;
use crate::mesh::{Point, TetMesh};
use crate::post::{self, ConvergenceRow, ExteriorField, FieldSample};
use crate::solver::{build_preconditioner, solve_augmented, BlockPreconditioner, InitialGuess, Solution, SolveReport};

/// Process exit code for an error: 2 invalid input, 3 solver failure, 4 I/O.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Io(_) => 4,
        Error::NotConverged { .. } | Error::Breakdown(..) | Error::NotPositiveDefinite(_) => 3,
        _ => 2,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepReport {
    pub step: usize,
    pub iterations: usize,
    pub final_residual: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodicCheck {
    pub sectors: usize,
    /// `max |V_{2,3} − V_{1,2}| / max |V_{1,2}|`; absent below three sectors.
    pub block_deviation: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub name: String,
    pub h: f64,
    pub n_fem: usize,
    pub n_bem: usize,
    pub n_components: usize,
    /// `‖B‖_{L2}` in T·m^{3/2}.
    pub l2_norm: f64,
    pub l2_error: Option<f64>,
    pub volume_average_b: [f64; 3],
    pub normal_flux_jump: f64,
    pub sheet_amplitudes: Vec<f64>,
    pub probes: Vec<FieldSample>,
    pub loop_currents: Vec<f64>,
    pub solve: SolveReport,
    pub preconditioner_fallback: bool,
    pub motion: Vec<StepReport>,
    pub periodic: Option<PeriodicCheck>,
    pub files: Vec<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub rows: Vec<ConvergenceRow>,
    pub monotone: bool,
    /// `(level, h, N_FEM, N_BEM, iterations per μr value)`.
    pub sweep: Option<(Vec<f64>, Vec<(usize, f64, usize, usize, Vec<usize>)>)>,
    pub files: Vec<PathBuf>,
}

/// Assembled and solved state of one mesh level.
pub struct LevelSolve {
    pub aug: AugmentedSystem,
    pub precond: BlockPreconditioner,
    pub solution: Solution,
    pub cells: Vec<Point>,
    pub seconds: f64,
}

impl LevelSolve {
    pub fn sys(&self) -> &CoupledSystem {
        &self.aug.base
    }

    pub fn exterior(&self) -> ExteriorField<'_> {
        ExteriorField {
            surface: &self.aug.base.surface,
            trace: &self.solution.trace,
            lambda: &self.solution.lambda,
        }
    }
}

fn analytic_field(a: &Analytic) -> impl Fn(&Point) -> Point + Sync + '_ {
    move |x| match a {
        Analytic::MagnetizedBall { radius, magnetization } => {
            post::magnetized_ball_b(*radius, &Point::from(*magnetization), x)
        }
    }
}

fn assemble_level(cfg: &CaseConfig, level: usize, mesh: TetMesh) -> Result<AugmentedSystem> {
    let coil = |x: &Point| cfg.coil_density(x);
    let current: Option<CurrentFn<'_>> = if cfg.coils.is_empty() { None } else { Some(&coil) };
    let sys = CoupledSystem::assemble(mesh, current, cfg.system)?;
    let sheets = cfg.meshes[level]
        .cycles
        .iter()
        .map(|c| build_current_sheet(&sys.surface, c))
        .collect::<Result<Vec<_>>>()?;
    augment_system(sys, sheets)
}

/// Assembles and solves level `level`, with region `mu.0` set to `μr = mu.1` if given.
pub fn solve_level(cfg: &CaseConfig, level: usize, mu: Option<(i64, f64)>) -> Result<LevelSolve> {
    let start = Instant::now();
    let mut mesh = cfg.build_mesh(level)?;
    if let Some((tag, value)) = mu {
        let m = mesh.materials.get_mut(&tag).ok_or(Error::MissingMaterial(tag))?;
        m.mu_r = value;
    }
    let t = Instant::now();
    let aug = assemble_level(cfg, level, mesh)?;
    let t_assemble = t.elapsed().as_secs_f64();
    let t = Instant::now();
    let precond = build_preconditioner(&aug.base);
    let t_precond = t.elapsed().as_secs_f64();
    let mut solution = solve_augmented(&aug, &precond, &cfg.solver, None)?;
    solution.report.timings.insert("assemble".into(), t_assemble);
    solution.report.timings.insert("preconditioner".into(), t_precond);
    let cells = post::interior_b(&aug.base.mesh, solution.fem_part(&aug.base));
    log::info!(
        "level {level}: N_FEM {} N_BEM {} iterations {}",
        aug.base.n_fem(),
        aug.base.n_bem(),
        solution.report.iterations
    );
    Ok(LevelSolve {
        aug,
        precond,
        solution,
        cells,
        seconds: start.elapsed().as_secs_f64(),
    })
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Io(std::io::Error::other(e)))?;
    std::fs::write(path, text)?;
    Ok(())
}

fn periodic_check(cfg: &CaseConfig, sys: &CoupledSystem) -> Option<PeriodicCheck> {
    let p = cfg.periodicity?;
    let axis = Point::from(p.axis);
    let block_deviation = (p.sectors >= 3).then(|| {
        let v12 = assemble_sector_block(&sys.surface, p.sectors, 0, 1, &axis, &cfg.system.bem);
        let v23 = assemble_sector_block(&sys.surface, p.sectors, 1, 2, &axis, &cfg.system.bem);
        (v23 - &v12).amax() / v12.amax().max(f64::MIN_POSITIVE)
    });
    Some(PeriodicCheck {
        sectors: p.sectors,
        block_deviation,
    })
}

fn surface_phi(sys: &CoupledSystem, sol: &Solution) -> Vec<f64> {
    sol.phi(sys).to_vec()
}

/// Runs the first mesh level of a case, then its motion script, and writes the artifacts.
pub fn run_case(cfg: &CaseConfig) -> Result<RunReport> {
    cfg.validate()?;
    let out = cfg.output_dir();
    std::fs::create_dir_all(&out)?;
    let lv = solve_level(cfg, 0, None)?;
    let sys = lv.sys();
    let mesh = &sys.mesh;
    let mut files = Vec::new();

    let l2_norm = post::l2_norm(mesh, &lv.cells);
    let l2_error = cfg
        .study
        .analytic
        .as_ref()
        .map(|a| post::l2_error(mesh, &lv.cells, analytic_field(a)));
    let avg = post::volume_average(mesh, &lv.cells, |_| true);
    let probes: Vec<Point> = cfg.probes.iter().map(|p| Point::from(*p)).collect();
    let field = lv.exterior();
    let probes = if probes.is_empty() { Vec::new() } else { field.samples(&probes)? };
    let loop_currents = cfg
        .loops
        .iter()
        .map(|l| {
            let pts = post::circle_loop(&Point::from(l.center), &Point::from(l.axis), l.radius, l.samples);
            post::ampere_loop(&field, &pts)
        })
        .collect::<Result<Vec<_>>>()?;

    if cfg.output.vtk {
        let vol = out.join(format!("{}_volume.vtk", cfg.name));
        post::write_volume_vtk(mesh, &[("B", &lv.cells)], &vol)?;
        let surf = out.join(format!("{}_surface.vtk", cfg.name));
        post::write_surface_vtk(&sys.surface, &[("phi", &surface_phi(sys, &lv.solution))], &surf)?;
        files.extend([vol, surf]);
    }

    let mut motion = Vec::new();
    if !cfg.motion.is_empty() {
        let mut cur_sys = sys.clone();
        let mut prev = lv.solution.x.clone();
        for (k, step) in cfg.motion.iter().enumerate() {
            let t = Instant::now();
            cur_sys = apply_motion(&cur_sys, &step.to_motion()?)?;
            let aug = augment_system(cur_sys.clone(), lv.aug.sheets.clone())?;
            let x0 = (cfg.solver.initial_guess == InitialGuess::Warm).then_some(prev.as_slice());
            let sol = solve_augmented(&aug, &lv.precond, &cfg.solver, x0)?;
            motion.push(StepReport {
                step: k + 1,
                iterations: sol.report.iterations,
                final_residual: sol.report.final_residual(),
                seconds: t.elapsed().as_secs_f64(),
            });
            log::info!("motion step {}: {} iterations", k + 1, sol.report.iterations);
            if cfg.output.vtk {
                let cells = post::interior_b(&cur_sys.mesh, sol.fem_part(&cur_sys));
                let path = out.join(format!("{}_step{}.vtk", cfg.name, k + 1));
                post::write_volume_vtk(&cur_sys.mesh, &[("B", &cells)], &path)?;
                files.push(path);
            }
            prev = sol.x;
        }
    }

    let row = ConvergenceRow {
        level: 0,
        h: mesh.mesh_size(),
        n_fem: sys.n_fem(),
        n_bem: sys.n_bem(),
        l2_norm,
        l2_error: l2_error.unwrap_or(f64::NAN),
        iterations: lv.solution.report.iterations,
        seconds: if cfg.output.timings { lv.seconds } else { f64::NAN },
        warning: String::new(),
    };
    if cfg.output.csv {
        let path = out.join(format!("{}.csv", cfg.name));
        std::fs::write(&path, post::convergence_csv(std::slice::from_ref(&row)))?;
        files.push(path);
    }
    let report_path = out.join(format!("{}_report.json", cfg.name));
    files.push(report_path.clone());
    let report = RunReport {
        name: cfg.name.clone(),
        h: row.h,
        n_fem: row.n_fem,
        n_bem: row.n_bem,
        n_components: sys.n_components(),
        l2_norm,
        l2_error,
        volume_average_b: avg.into(),
        normal_flux_jump: post::normal_flux_jump(mesh, &lv.cells),
        sheet_amplitudes: lv.solution.alpha.clone(),
        probes,
        loop_currents,
        solve: lv.solution.report.clone(),
        preconditioner_fallback: lv.precond.has_fallback(),
        motion,
        periodic: periodic_check(cfg, sys),
        files,
    };
    write_json(&report, &report_path)?;
    Ok(report)
}

/// Solves every mesh level and writes the convergence table; with `mu_sweep`, also the
/// iteration table over levels and permeabilities.
pub fn convergence_study(cfg: &CaseConfig) -> Result<StudyReport> {
    cfg.validate()?;
    if cfg.meshes.len() < 2 {
        return Err(Error::Config(format!(
            "a convergence study needs at least 2 mesh levels, got {}",
            cfg.meshes.len()
        )));
    }
    let out = cfg.output_dir();
    std::fs::create_dir_all(&out)?;
    let mut rows = Vec::new();
    let mut norms = Vec::new();
    for level in 0..cfg.meshes.len() {
        let lv = solve_level(cfg, level, None)?;
        let mesh = &lv.sys().mesh;
        let l2_norm = post::l2_norm(mesh, &lv.cells);
        let l2_error = cfg
            .study
            .analytic
            .as_ref()
            .map(|a| post::l2_error(mesh, &lv.cells, analytic_field(a)));
        norms.push(l2_norm);
        rows.push(ConvergenceRow {
            level,
            h: mesh.mesh_size(),
            n_fem: lv.sys().n_fem(),
            n_bem: lv.sys().n_bem(),
            l2_norm,
            l2_error: l2_error.unwrap_or(f64::NAN),
            iterations: lv.solution.report.iterations,
            seconds: if cfg.output.timings { lv.seconds } else { f64::NAN },
            warning: String::new(),
        });
    }
    if cfg.study.analytic.is_none() {
        // Without a closed form, the error is measured against the finest level's norm.
        let finest = *norms.last().expect("at least two levels");
        for r in &mut rows {
            r.l2_error = (r.l2_norm - finest).abs();
        }
    }
    let monotone = post::flag_non_monotone(&mut rows);
    if !monotone {
        log::warn!("l2_error is not monotonically decreasing; the study is not reported as converged");
    }
    let mut files = Vec::new();
    if cfg.output.csv {
        let path = out.join(format!("{}_convergence.csv", cfg.name));
        std::fs::write(&path, post::convergence_csv(&rows))?;
        files.push(path);
    }

    let sweep = match &cfg.study.mu_sweep {
        None => None,
        Some(s) => {
            let mut table = Vec::new();
            for level in 0..cfg.meshes.len() {
                let mut its = Vec::new();
                let mut dims = (0.0, 0, 0);
                for &mu in &s.values {
                    let lv = solve_level(cfg, level, Some((s.region, mu)))?;
                    dims = (lv.sys().mesh.mesh_size(), lv.sys().n_fem(), lv.sys().n_bem());
                    its.push(lv.solution.report.iterations);
                }
                table.push((level, dims.0, dims.1, dims.2, its));
            }
            if cfg.output.csv {
                let path = out.join(format!("{}_iterations.csv", cfg.name));
                std::fs::write(&path, iteration_csv(&s.values, &table))?;
                files.push(path);
            }
            Some((s.values.clone(), table))
        }
    };
    let report = StudyReport {
        rows,
        monotone,
        sweep,
        files,
    };
    let path = out.join(format!("{}_study.json", cfg.name));
    write_json(&report, &path)?;
    Ok(report)
}

fn iteration_csv(values: &[f64], table: &[(usize, f64, usize, usize, Vec<usize>)]) -> String {
    let mut s = String::from("level,h,N_FEM,N_BEM");
    for v in values {
        s.push_str(&format!(",mu_r={v:e}"));
    }
    s.push('\n');
    for (level, h, nf, nb, its) in table {
        s.push_str(&format!("{level},{h:.6e},{nf},{nb}"));
        for i in its {
            s.push_str(&format!(",{i}"));
        }
        s.push('\n');
    }
    s
}

/// Largest over smallest iteration count across the sweep values, per level.
pub fn sweep_ratios(table: &[(usize, f64, usize, usize, Vec<usize>)]) -> BTreeMap<usize, f64> {
    table
        .iter()
        .map(|(level, _, _, _, its)| {
            let max = *its.iter().max().unwrap_or(&0) as f64;
            let min = (*its.iter().min().unwrap_or(&1)).max(1) as f64;
            (*level, max / min)
        })
        .collect()
}
