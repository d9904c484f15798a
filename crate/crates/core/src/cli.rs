//! Command-line front end. All commands read a TOML config; every section is
//! optional and unknown keys are rejected.
//!
//! ```toml
//! [problem]
//! case = "example51"
//! lambda = 1e-3        # overrides the case default
//! q_a = 0.0
//! q_b = 0.8
//!
//! [solver]
//! tol = 1e-10
//! max_outer = 50
//!
//! [study]
//! levels = [[4, 4], [8, 6], [16, 12], [32, 23], [64, 46]]
//!
//! [output]
//! dir = "out"
//! dump_matrices = false
//!
//! [check]
//! suites = ["gradient", "hessian", "adjoint", "coercivity"]
//! seed = 42
//!
//! [solve]
//! n = 8
//! m = 6
//! ```
//!
//! Exit codes: 0 success, 1 usage or config error, 2 numerical failure
//! (including failed checks).

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::Deserialize;

use crate::assembly::{assemble_control_seminorm, assemble_mass_stiffness, SlabSolverOptions};
use crate::checks::run_checks;
use crate::error::{Error, Result};
use crate::manufactured::{case_by_name, run_study, solve_level, ManufacturedCase, StudyOptions, AVAILABLE_CASES};
use crate::mesh::SpaceTimeMesh;
use crate::optimizer::{PdasOptions, ReducedProblem};
use crate::spaces::StateField;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_NUMERICAL: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "dbc", version, about = "Dirichlet boundary control of the heat equation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Convergence study over a sequence of (n, M) levels.
    Study {
        #[arg(long)]
        config: PathBuf,
        /// Number of levels solved concurrently.
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Gradient, Hessian, adjoint and coercivity self-checks.
    Check {
        #[arg(long)]
        config: PathBuf,
    },
    /// Single solve with solution snapshots.
    Solve {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default)]
    pub problem: ProblemSection,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub study: StudySection,
    #[serde(default)]
    pub output: OutputSection,
    #[serde(default)]
    pub check: CheckSection,
    #[serde(default)]
    pub solve: SolveSection,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSection {
    #[serde(default = "default_case")]
    pub case: String,
    pub lambda: Option<f64>,
    pub q_a: Option<f64>,
    pub q_b: Option<f64>,
}

impl Default for ProblemSection {
    fn default() -> Self {
        Self { case: default_case(), lambda: None, q_a: None, q_b: None }
    }
}

fn default_case() -> String {
    "example51".into()
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSection {
    pub tol: f64,
    pub max_outer: usize,
    pub c_pdas: Option<f64>,
    pub cg_tol: Option<f64>,
    pub cg_max_iter: usize,
    pub direct_limit: usize,
    pub slab_tol: f64,
}

impl Default for SolverSection {
    fn default() -> Self {
        let (pdas, slab) = (PdasOptions::default(), SlabSolverOptions::default());
        Self {
            tol: pdas.tol,
            max_outer: pdas.max_outer,
            c_pdas: pdas.c_pdas,
            cg_tol: pdas.cg_tol,
            cg_max_iter: pdas.cg_max_iter,
            direct_limit: slab.direct_limit,
            slab_tol: slab.rel_tol,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StudySection {
    pub levels: Vec<(usize, usize)>,
    pub jobs: usize,
}

impl Default for StudySection {
    fn default() -> Self {
        Self { levels: vec![(4, 4), (8, 6), (16, 12), (32, 23), (64, 46)], jobs: 1 }
    }
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
    /// Also write M, S and A in Matrix Market format.
    pub dump_matrices: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: PathBuf::from("out"), dump_matrices: false }
    }
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CheckSection {
    pub suites: Vec<String>,
    pub seed: u64,
    pub n: usize,
    pub m: usize,
}

impl Default for CheckSection {
    fn default() -> Self {
        Self { suites: crate::checks::SUITES.iter().map(|s| s.to_string()).collect(), seed: 42, n: 2, m: 2 }
    }
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolveSection {
    pub n: usize,
    pub m: usize,
}

impl Default for SolveSection {
    fn default() -> Self {
        Self { n: 8, m: 6 }
    }
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string().trim_end().to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn case(&self) -> Result<ManufacturedCase> {
        case_by_name(&self.problem.case).ok_or_else(|| {
            Error::Config(format!(
                "unknown case `{}` (available: {})",
                self.problem.case,
                AVAILABLE_CASES.join(", ")
            ))
        })
    }

    pub fn study_options(&self) -> StudyOptions {
        let s = &self.solver;
        StudyOptions {
            lambda: self.problem.lambda,
            q_a: self.problem.q_a,
            q_b: self.problem.q_b,
            pdas: PdasOptions {
                tol: s.tol,
                max_outer: s.max_outer,
                c_pdas: s.c_pdas,
                cg_tol: s.cg_tol,
                cg_max_iter: s.cg_max_iter,
            },
            solver: SlabSolverOptions { direct_limit: s.direct_limit, rel_tol: s.slab_tol },
            jobs: self.study.jobs,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.solver.tol > 0.0) {
            return Err(Error::Config("solver.tol must be positive".into()));
        }
        if let Some(l) = self.problem.lambda {
            if !(l > 0.0) {
                return Err(Error::Config("problem.lambda must be positive".into()));
            }
        }
        Ok(())
    }
}

fn exit_code(err: &Error) -> i32 {
    if err.is_numerical() {
        EXIT_NUMERICAL
    } else {
        EXIT_CONFIG
    }
}

fn report(err: &Error) -> i32 {
    eprintln!("error: {err}");
    exit_code(err)
}

fn create_file(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn load(path: &Path) -> Result<Config> {
    let config = Config::load(path)?;
    config.validate()?;
    Ok(config)
}

pub fn cmd_study(config_path: &Path, jobs: Option<usize>) -> i32 {
    let mut config = match load(config_path) {
        Ok(c) => c,
        Err(e) => return report(&e),
    };
    if let Some(j) = jobs {
        config.study.jobs = j;
    }
    let case = match config.case() {
        Ok(c) => c,
        Err(e) => return report(&e),
    };
    if config.study.levels.is_empty() {
        eprintln!("error: levels must be nonempty");
        return EXIT_CONFIG;
    }
    let dir = &config.output.dir;
    let write = |report: &crate::manufactured::StudyReport| -> Result<()> {
        fs::create_dir_all(dir)?;
        let mut csv = create_file(&dir.join("table.csv"))?;
        report.write_csv(&mut csv)?;
        csv.flush()?;
        fs::write(dir.join("report.json"), report.to_json()?)?;
        Ok(())
    };
    match run_study(&config.study.levels, &case, &config.study_options()) {
        Ok(study) => {
            if let Err(e) = write(&study) {
                return report(&e);
            }
            let mut stdout = std::io::stdout().lock();
            let _ = study.write_csv(&mut stdout);
            EXIT_OK
        }
        Err(failure) => {
            eprintln!("error: {failure}");
            let _ = write(&failure.partial);
            exit_code(&failure.error)
        }
    }
}

pub fn cmd_check(config_path: &Path) -> i32 {
    let run = || -> Result<bool> {
        let config = load(config_path)?;
        let case = config.case()?;
        let opts = config.study_options();
        let mesh = SpaceTimeMesh::unit(config.check.n, config.check.m)?;
        let problem = ReducedProblem::new(
            mesh,
            opts.lambda.unwrap_or(case.lambda),
            opts.q_a.unwrap_or(case.q_a),
            opts.q_b.unwrap_or(case.q_b),
            &case.data(),
            opts.solver,
        )?;
        let results = run_checks(&problem, &config.check.suites, config.check.seed)?;
        for r in &results {
            println!("{r}");
        }
        Ok(results.iter().all(|r| r.passed))
    };
    match run() {
        Ok(true) => EXIT_OK,
        Ok(false) => EXIT_NUMERICAL,
        Err(e) => report(&e),
    }
}

fn write_state_csv(path: &Path, mesh: &SpaceTimeMesh, layout: &crate::spaces::NodeLayout, u: &StateField) -> Result<()> {
    let mut out = create_file(path)?;
    writeln!(out, "slab,node,x,y,value")?;
    for m in 1..=u.steps() {
        let full = layout.extend(u.slab(m));
        for (node, (p, v)) in mesh.triangulation.vertices().iter().zip(&full).enumerate() {
            writeln!(out, "{m},{node},{},{},{:e}", p[0], p[1], v)?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn cmd_solve(config_path: &Path) -> i32 {
    let run = || -> Result<()> {
        let config = load(config_path)?;
        let case = config.case()?;
        let opts = config.study_options();
        let sol = solve_level(&case, config.solve.n, config.solve.m, &opts)?;
        let mesh = sol.problem.mesh();
        let dir = config.output.dir.join("snapshots");
        fs::create_dir_all(&dir)?;

        let q = &sol.outcome.control;
        let mut out = create_file(&dir.join("control.csv"))?;
        writeln!(out, "level,t,node,x,y,value")?;
        for level in 1..mesh.steps() {
            let t = mesh.time.points()[level];
            let values = q.level(level).expect("interior level");
            for (node, (p, v)) in mesh.triangulation.vertices().iter().zip(values).enumerate() {
                writeln!(out, "{level},{t},{node},{},{},{:e}", p[0], p[1], v)?;
            }
        }
        out.flush()?;
        write_state_csv(&dir.join("state.csv"), mesh, &sol.problem.disc.layout, &sol.outcome.state)?;
        write_state_csv(&dir.join("adjoint.csv"), mesh, &sol.problem.disc.layout, &sol.outcome.adjoint)?;
        fs::write(
            config.output.dir.join("diagnostics.json"),
            serde_json::to_string_pretty(&sol.outcome.diagnostics)?,
        )?;

        if config.output.dump_matrices {
            let mdir = config.output.dir.join("matrices");
            fs::create_dir_all(&mdir)?;
            let (mass, stiffness) = assemble_mass_stiffness(&mesh.triangulation)?;
            let a = assemble_control_seminorm(mesh)?;
            for (name, mat) in [("mass", &mass), ("stiffness", &stiffness), ("seminorm", &a)] {
                let mut f = create_file(&mdir.join(format!("{name}.mtx")))?;
                mat.write_matrix_market(&mut f)?;
                f.flush()?;
            }
        }
        let d = &sol.outcome.diagnostics;
        println!(
            "n = {}, M = {}: {} outer iterations, {} CG iterations, |A-| = {}, |A+| = {}",
            config.solve.n, config.solve.m, d.outer_iterations, d.cg_iterations, d.lower_active, d.upper_active
        );
        println!(
            "errors: state {:.8e}, adjoint {:.8e}, control {:.8e}",
            sol.err_state, sol.err_adjoint, sol.err_control
        );
        Ok(())
    };
    match run() {
        Ok(()) => EXIT_OK,
        Err(e) => report(&e),
    }
}

/// Parses arguments, runs the command and returns the exit code.
pub fn main() -> i32 {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("DBC_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match cli.command {
        Command::Study { config, jobs } => cmd_study(&config, jobs),
        Command::Check { config } => cmd_check(&config),
        Command::Solve { config } => cmd_solve(&config),
    }
}
