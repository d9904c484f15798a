//! Self-checks of the discrete operators on random instances: finite
//! difference gradient test, Hessian symmetry, adjoint duality and the
//! coercivity of the dG(0) form.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::adjoint::adjoint_identity_check;
use crate::assembly::{gradient_energy_dense, state_form_dense, Discretization};
use crate::error::Result;
use crate::linalg::dot;
use crate::mesh::SpaceTimeMesh;
use crate::optimizer::ReducedProblem;
use crate::spaces::{ControlField, StateField};

pub const SUITES: &[&str] = &["gradient", "hessian", "adjoint", "coercivity"];

#[derive(Debug, Clone, Serialize)]
pub struct CheckResult {
    pub name: String,
    /// Worst discrepancy, or for lower-bound checks the smallest margin.
    pub measured: f64,
    pub threshold: f64,
    /// `true` when `measured` must stay at or above `threshold`.
    pub lower_bound: bool,
    pub passed: bool,
}

impl CheckResult {
    fn below(name: &str, measured: f64, threshold: f64) -> Self {
        let passed = measured < threshold;
        Self { name: name.into(), measured, threshold, lower_bound: false, passed }
    }

    fn at_least(name: &str, measured: f64, threshold: f64) -> Self {
        let passed = measured >= threshold;
        Self { name: name.into(), measured, threshold, lower_bound: true, passed }
    }
}

impl std::fmt::Display for CheckResult {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let op = if self.lower_bound { ">=" } else { "<" };
        let verdict = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{verdict} {}: {:.3e} (required {op} {:.0e})", self.name, self.measured, self.threshold)
    }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_vec(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

pub fn random_control(rng: &mut ChaCha8Rng, nodes: usize, steps: usize) -> ControlField {
    ControlField::from_values(nodes, steps, random_vec(rng, nodes * steps.saturating_sub(1)))
        .expect("length matches layout")
}

pub fn random_state(rng: &mut ChaCha8Rng, steps: usize, interior: usize) -> StateField {
    StateField { slabs: (0..steps).map(|_| random_vec(rng, interior)).collect() }
}

/// Largest relative error between the adjoint gradient and central
/// differences `(j(q + eps d) - j(q - eps d)) / (2 eps)` over random `q`, `d`.
pub fn gradient_check(problem: &ReducedProblem, seed: u64, directions: usize, eps: f64) -> Result<f64> {
    let mut rng = rng(seed);
    let (nodes, steps) = (problem.mesh().num_nodes(), problem.mesh().steps());
    let mut worst = 0.0f64;
    for _ in 0..directions {
        let q = random_control(&mut rng, nodes, steps);
        let d = random_control(&mut rng, nodes, steps);
        let g = problem.reduced_gradient(&q)?;
        let (mut plus, mut minus) = (q.clone(), q.clone());
        plus.axpy(eps, &d);
        minus.axpy(-eps, &d);
        let fd = (problem.objective(&plus)? - problem.objective(&minus)?) / (2.0 * eps);
        let exact = dot(g.values(), d.values());
        worst = worst.max((fd - exact).abs() / exact.abs().max(f64::MIN_POSITIVE));
    }
    Ok(worst)
}

/// Largest `|d1.H d2 - d2.H d1|` and smallest `d.H d - lambda d.A d` over random pairs.
pub fn hessian_check(problem: &ReducedProblem, seed: u64, pairs: usize) -> Result<(f64, f64)> {
    let mut rng = rng(seed);
    let (nodes, steps) = (problem.mesh().num_nodes(), problem.mesh().steps());
    let (mut asym, mut margin) = (0.0f64, f64::INFINITY);
    for _ in 0..pairs {
        let d1 = random_control(&mut rng, nodes, steps);
        let d2 = random_control(&mut rng, nodes, steps);
        let (h1, h2) = (problem.hessian_vec(&d1)?, problem.hessian_vec(&d2)?);
        asym = asym.max((dot(d1.values(), h2.values()) - dot(d2.values(), h1.values())).abs());
        let mut a1 = vec![0.0; d1.len()];
        problem.disc.apply_seminorm(d1.values(), &mut a1);
        margin = margin.min(dot(d1.values(), h1.values()) - problem.lambda * dot(d1.values(), &a1));
    }
    Ok((asym, margin))
}

/// Largest duality discrepancy from [`adjoint_identity_check`] over random instances.
pub fn adjoint_duality_check(disc: &Discretization, seed: u64, instances: usize) -> Result<f64> {
    let mut rng = rng(seed);
    let mut worst = 0.0f64;
    for _ in 0..instances {
        let dq = random_control(&mut rng, disc.num_nodes(), disc.steps());
        let g = random_state(&mut rng, disc.steps(), disc.num_interior()).slabs;
        worst = worst.max(adjoint_identity_check(disc, &dq, &g)?);
    }
    Ok(worst)
}

/// Smallest `B(v, v) - sum_m k_m |grad v_m|^2` over `states` random discrete
/// states, drawn on the given meshes in turn.
pub fn coercivity_check(meshes: &[(usize, usize)], seed: u64, states: usize) -> Result<f64> {
    let mut rng = rng(seed);
    let discs = meshes
        .iter()
        .map(|&(n, steps)| Discretization::new(SpaceTimeMesh::unit(n, steps)?, Default::default()))
        .collect::<Result<Vec<_>>>()?;
    let mut margin = f64::INFINITY;
    for disc in discs.iter().cycle().take(states) {
        let v = random_state(&mut rng, disc.steps(), disc.num_interior());
        margin = margin.min(state_form_dense(disc, &v, &v) - gradient_energy_dense(disc, &v));
    }
    Ok(margin)
}

/// Runs the named suites on `problem` (coercivity uses its own meshes with
/// `n = 2, 3, 4` and the problem's number of steps).
pub fn run_checks(problem: &ReducedProblem, suites: &[String], seed: u64) -> Result<Vec<CheckResult>> {
    let mut out = Vec::new();
    for suite in suites {
        match suite.as_str() {
            "gradient" => {
                let err = gradient_check(problem, seed, 20, 1e-4)?;
                out.push(CheckResult::below("gradient finite differences", err, 1e-6));
            }
            "hessian" => {
                let (asym, margin) = hessian_check(problem, seed, 10)?;
                out.push(CheckResult::below("hessian symmetry", asym, 1e-10));
                out.push(CheckResult::at_least("hessian above lambda*A", margin, 0.0));
            }
            "adjoint" => {
                let err = adjoint_duality_check(&problem.disc, seed, 10)?;
                out.push(CheckResult::below("adjoint identity", err, 1e-10));
            }
            "coercivity" => {
                let steps = problem.mesh().steps();
                let margin = coercivity_check(&[(2, steps), (3, steps), (4, steps)], seed, 100)?;
                out.push(CheckResult::at_least("coercivity", margin, 0.0));
            }
            other => {
                return Err(crate::error::Error::Config(format!(
                    "unknown check suite `{other}` (available: {})",
                    SUITES.join(", ")
                )))
            }
        }
    }
    Ok(out)
}
