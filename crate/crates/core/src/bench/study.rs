//! Refinement studies and their CSV reports.
//!
//! A study runs one problem over a sequence of uniformly refined meshes,
//! records per-level residuals, errors and solver statistics, and formats
//! the results deterministically so repeated runs produce identical bytes.

use super::error::measure_errors;
use super::{BenchError, Problem};
use crate::system::assemble::{assemble, Discretization};
use crate::system::bc::build_bc_table;
use crate::system::solve::{quadratic_value, solve_spd, SolverKind};
use std::io::Write;

#[derive(Debug, Clone, Copy)]
pub struct StudyOptions {
    pub p: usize,
    pub dp: usize,
    /// Number of uniform refinements after the base mesh; the study runs
    /// `refinements + 1` levels.
    pub refinements: usize,
    pub solver: SolverKind,
}

/// Results of one refinement level.
#[derive(Debug, Clone)]
pub struct LevelRecord {
    pub level: usize,
    pub n_elements: usize,
    /// Total skeleton unknowns (free and constrained).
    pub n_dof: usize,
    pub n_constrained: usize,
    /// Square root of the (clamped) minimized quadratic: the residual norm
    /// of the first-order system in the dual test norm.
    pub residual: f64,
    /// One value per problem measure, in the problem's order.
    pub errors: Vec<f64>,
    pub solve_method: &'static str,
    pub solve_iterations: usize,
}

#[derive(Debug, Clone)]
pub struct StudyResult {
    pub benchmark: String,
    pub formulation_config: String,
    pub p: usize,
    pub dp: usize,
    pub error_labels: Vec<&'static str>,
    pub levels: Vec<LevelRecord>,
}

impl StudyResult {
    /// Observed order between consecutive levels for measure `m`;
    /// `None` at level 0.
    pub fn rate(&self, level: usize, m: usize) -> Option<f64> {
        if level == 0 {
            return None;
        }
        let prev = self.levels[level - 1].errors[m];
        let cur = self.levels[level].errors[m];
        Some((prev / cur).ln() / std::f64::consts::LN_2)
    }

    /// Rate of the last refinement interval for the measure with `label`.
    pub fn final_rate(&self, label: &str) -> Option<f64> {
        let m = self.error_labels.iter().position(|&l| l == label)?;
        self.rate(self.levels.len() - 1, m)
    }

    pub fn errors_for(&self, label: &str) -> Option<Vec<f64>> {
        let m = self.error_labels.iter().position(|&l| l == label)?;
        Some(self.levels.iter().map(|l| l.errors[m]).collect())
    }
}

/// Runs the refinement study. Meshes are refined uniformly from the
/// problem's base mesh; every level is assembled, constrained, solved and
/// measured.
pub fn run_study(problem: &Problem, opts: &StudyOptions) -> Result<StudyResult, BenchError> {
    let mut levels = Vec::with_capacity(opts.refinements + 1);
    let mut mesh = problem.base_mesh.clone();
    for level in 0..=opts.refinements {
        if level > 0 {
            mesh = mesh.refined_uniform()?;
        }
        let disc = Discretization {
            mesh: &mesh,
            p: opts.p,
            dp: opts.dp,
            subdomains: problem.subdomains.clone(),
            body_force: &*problem.body_force,
            quadrature_boost: problem.quadrature_boost,
        };
        let asm = assemble(&disc)?;
        let spec = (problem.make_bc)(&mesh);
        let bc = build_bc_table(&mesh, &asm.dm, &spec, disc.n_gauss())?;
        let (u, report) = solve_spd(&asm.k, &asm.f, &bc, opts.solver)?;
        let residual_sq = quadratic_value(&asm.k, &asm.f, asm.c_total, &u);
        let errors = measure_errors(&disc, &asm, &u, &problem.measures)?;
        levels.push(LevelRecord {
            level,
            n_elements: mesh.n_elements(),
            n_dof: asm.dm.n_global,
            n_constrained: bc.n_constrained(),
            residual: residual_sq.max(0.0).sqrt(),
            errors,
            solve_method: report.method,
            solve_iterations: report.iterations,
        });
    }
    Ok(StudyResult {
        benchmark: problem.benchmark.clone(),
        formulation_config: problem.formulation_config.clone(),
        p: opts.p,
        dp: opts.dp,
        error_labels: problem.measures.iter().map(|m| m.label()).collect(),
        levels,
    })
}

/// Convergence table: one row per level and measure, with the observed
/// order between consecutive levels (empty at level 0).
pub fn write_convergence_csv(w: &mut impl Write, r: &StudyResult) -> std::io::Result<()> {
    writeln!(
        w,
        "benchmark,formulation_config,p,dp,level,n_elements,n_dof,error_measure,error_value,rate"
    )?;
    for rec in &r.levels {
        for (m, label) in r.error_labels.iter().enumerate() {
            let rate = match r.rate(rec.level, m) {
                Some(v) => format!("{v:.6}"),
                None => String::new(),
            };
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{:.12e},{}",
                r.benchmark,
                r.formulation_config,
                r.p,
                r.dp,
                rec.level,
                rec.n_elements,
                rec.n_dof,
                label,
                rec.errors[m],
                rate
            )?;
        }
    }
    Ok(())
}

/// Residual norms per level.
pub fn write_residual_csv(w: &mut impl Write, r: &StudyResult) -> std::io::Result<()> {
    writeln!(
        w,
        "benchmark,formulation_config,p,dp,level,n_elements,n_dof,residual"
    )?;
    for rec in &r.levels {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{:.12e}",
            r.benchmark,
            r.formulation_config,
            r.p,
            r.dp,
            rec.level,
            rec.n_elements,
            rec.n_dof,
            rec.residual
        )?;
    }
    Ok(())
}

/// Unknown counts and solver statistics per level.
pub fn write_dof_report(w: &mut impl Write, r: &StudyResult) -> std::io::Result<()> {
    writeln!(
        w,
        "benchmark,formulation_config,p,dp,level,n_elements,n_dof,n_constrained,n_free,solve_method,solve_iterations"
    )?;
    for rec in &r.levels {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{}",
            r.benchmark,
            r.formulation_config,
            r.p,
            r.dp,
            rec.level,
            rec.n_elements,
            rec.n_dof,
            rec.n_constrained,
            rec.n_dof - rec.n_constrained,
            rec.solve_method,
            rec.solve_iterations
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn synthetic_result() -> StudyResult {
        StudyResult {
            benchmark: "cube".into(),
            formulation_config: "SUMPPMUS".into(),
            p: 2,
            dp: 1,
            error_labels: vec!["displacement_l2", "stress_l2"],
            levels: vec![
                LevelRecord {
                    level: 0,
                    n_elements: 8,
                    n_dof: 100,
                    n_constrained: 40,
                    residual: 1.0,
                    errors: vec![0.8, 1.6],
                    solve_method: "direct",
                    solve_iterations: 0,
                },
                LevelRecord {
                    level: 1,
                    n_elements: 64,
                    n_dof: 800,
                    n_constrained: 160,
                    residual: 0.5,
                    errors: vec![0.1, 0.4],
                    solve_method: "direct",
                    solve_iterations: 0,
                },
            ],
        }
    }

    #[test]
    fn rates_match_hand_computed_orders() {
        let r = synthetic_result();
        assert!(r.rate(0, 0).is_none());
        assert!((r.rate(1, 0).unwrap() - 3.0).abs() < 1e-12);
        assert!((r.rate(1, 1).unwrap() - 2.0).abs() < 1e-12);
        assert!((r.final_rate("stress_l2").unwrap() - 2.0).abs() < 1e-12);
        assert_eq!(r.errors_for("displacement_l2").unwrap(), vec![0.8, 0.1]);
        assert!(r.final_rate("missing").is_none());
    }

    #[test]
    fn csv_output_is_stable_and_has_expected_shape() {
        let r = synthetic_result();
        let mut buf = Vec::new();
        write_convergence_csv(&mut buf, &r).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 1 + 2 * 2);
        assert_eq!(
            lines[0],
            "benchmark,formulation_config,p,dp,level,n_elements,n_dof,error_measure,error_value,rate"
        );
        assert_eq!(
            lines[1],
            "cube,SUMPPMUS,2,1,0,8,100,displacement_l2,8.000000000000e-1,"
        );
        assert_eq!(
            lines[3],
            "cube,SUMPPMUS,2,1,1,64,800,displacement_l2,1.000000000000e-1,3.000000"
        );
        // Byte-identical on rewrite.
        let mut buf2 = Vec::new();
        write_convergence_csv(&mut buf2, &r).unwrap();
        assert_eq!(text.as_bytes(), buf2.as_slice());

        let mut rbuf = Vec::new();
        write_residual_csv(&mut rbuf, &r).unwrap();
        assert!(String::from_utf8(rbuf)
            .unwrap()
            .contains("cube,SUMPPMUS,2,1,1,64,800,5.000000000000e-1"));
        let mut dbuf = Vec::new();
        write_dof_report(&mut dbuf, &r).unwrap();
        assert!(String::from_utf8(dbuf)
            .unwrap()
            .contains("cube,SUMPPMUS,2,1,0,8,100,40,60,direct,0"));
    }
}
