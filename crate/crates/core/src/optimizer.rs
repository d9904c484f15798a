//! Reduced optimal control problem and its solution by a primal-dual active
//! set method with conjugate gradients on the inactive coefficients.
//!
//! The reduced functional is
//! `j(q) = 1/2 |u_kh(q) - u_d|_I^2 + lambda/2 |q - q_d|_{1, Omega x I}^2`
//! over discrete controls with box constraints at lateral-boundary nodes.
//! Gradients are returned as coefficient vectors `g_p = j'(q) e_p` in the
//! nodal basis; the optimality condition reads `g . (p - q) >= 0` for all
//! admissible `p`.

use std::sync::Arc;

use serde::Serialize;

use crate::adjoint::solve_adjoint_with_loads;
use crate::assembly::{Discretization, SlabLoads, SlabSolverOptions};
use crate::error::{Error, Result};
use crate::forward::{solve_state, solve_state_sensitivity, ForwardData};
use crate::linalg::{dot, norm_inf, pcg};
use crate::mesh::SpaceTimeMesh;
use crate::spaces::{interpolate_control, AdjointField, BoundSet, ControlField, StateField};

/// Scalar function of `(x, y, t)`.
pub type SpaceTimeFn = Arc<dyn Fn(f64, f64, f64) -> f64 + Send + Sync>;

/// Problem data: source, initial value, desired state and optional control shift.
#[derive(Clone)]
pub struct ProblemData {
    pub f: SpaceTimeFn,
    pub u0: Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>,
    pub u_d: SpaceTimeFn,
    pub q_d: Option<SpaceTimeFn>,
}

impl ProblemData {
    pub fn zero() -> Self {
        Self {
            f: Arc::new(|_, _, _| 0.0),
            u0: Arc::new(|_, _| 0.0),
            u_d: Arc::new(|_, _, _| 0.0),
            q_d: None,
        }
    }
}

impl std::fmt::Debug for ProblemData {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ProblemData").field("has_q_d", &self.q_d.is_some()).finish_non_exhaustive()
    }
}

/// Discretized reduced problem on one space-time mesh.
#[derive(Debug)]
pub struct ReducedProblem {
    pub disc: Discretization,
    pub lambda: f64,
    pub bounds: BoundSet,
    forward: ForwardData,
    desired: SlabLoads,
    shift: ControlField,
}

/// State, adjoint, gradient and value at one control.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub state: StateField,
    pub adjoint: AdjointField,
    pub gradient: ControlField,
    pub value: f64,
}

/// Contributions of the tracking term `1/2 |z - u_d|_I^2`, `z = w + q`.
struct Tracking {
    adjoint_loads: Vec<Vec<f64>>,
    control_part: Vec<f64>,
    value: f64,
}

impl ReducedProblem {
    pub fn new(
        mesh: SpaceTimeMesh,
        lambda: f64,
        q_a: f64,
        q_b: f64,
        data: &ProblemData,
        solver: SlabSolverOptions,
    ) -> Result<Self> {
        if !(lambda > 0.0) {
            return Err(Error::InvalidArgument(format!("lambda must be positive, got {lambda}")));
        }
        let bounds = BoundSet::new(&mesh, q_a, q_b)?;
        let disc = Discretization::new(mesh, solver)?;
        let forward = ForwardData::new(&disc, |x, y, t| (data.f)(x, y, t), |x, y| (data.u0)(x, y))?;
        let desired = SlabLoads::new(&disc.mesh, |x, y, t| (data.u_d)(x, y, t));
        let shift = match &data.q_d {
            Some(q_d) => interpolate_control(&disc.mesh, |x, y, t| q_d(x, y, t)),
            None => ControlField::for_mesh(&disc.mesh),
        };
        Ok(Self { disc, lambda, bounds, forward, desired, shift })
    }

    pub fn mesh(&self) -> &SpaceTimeMesh {
        &self.disc.mesh
    }

    pub fn zero_control(&self) -> ControlField {
        ControlField::for_mesh(&self.disc.mesh)
    }

    pub fn state(&self, q: &ControlField) -> Result<StateField> {
        solve_state(&self.disc, &self.forward, q)
    }

    fn tracking(&self, w: &StateField, q: &ControlField, with_data: bool) -> Tracking {
        let disc = &self.disc;
        let (n, steps) = (disc.num_nodes(), disc.steps());
        let mut adjoint_loads = Vec::with_capacity(steps);
        let mut control_part = vec![0.0; q.len()];
        let mut value = if with_data { 0.5 * self.desired.norm_sq } else { 0.0 };
        for m in 1..=steps {
            let k = disc.step(m);
            let w_full = disc.layout.extend(w.slab(m));
            let (prev, cur) = (q.level_or_zero(m - 1), q.level_or_zero(m));
            let a: Vec<f64> = w_full.iter().zip(prev.iter()).map(|(x, y)| x + y).collect();
            let b: Vec<f64> = w_full.iter().zip(cur.iter()).map(|(x, y)| x + y).collect();
            let (ma, mb) = (disc.mass.mul_vec(&a), disc.mass.mul_vec(&b));
            value += 0.5 * k / 3.0 * (dot(&a, &ma) + dot(&a, &mb) + dot(&b, &mb));

            let mut load: Vec<f64> = ma.iter().zip(&mb).map(|(x, y)| 0.5 * k * (x + y)).collect();
            let (left, right) = (&self.desired.left[m - 1], &self.desired.right[m - 1]);
            if with_data {
                value -= dot(&a, left) + dot(&b, right);
                for (l, (dl, dr)) in load.iter_mut().zip(left.iter().zip(right)) {
                    *l -= dl + dr;
                }
            }
            adjoint_loads.push(disc.layout.restrict(&load));

            // slab m is the right half of the hat at level m-1 ...
            if m >= 2 {
                let out = &mut control_part[(m - 2) * n..(m - 1) * n];
                for i in 0..n {
                    out[i] += k / 3.0 * ma[i] + k / 6.0 * mb[i] - if with_data { left[i] } else { 0.0 };
                }
            }
            // ... and the left half of the hat at level m
            if m < steps {
                let out = &mut control_part[(m - 1) * n..m * n];
                for i in 0..n {
                    out[i] += k / 6.0 * ma[i] + k / 3.0 * mb[i] - if with_data { right[i] } else { 0.0 };
                }
            }
        }
        Tracking { adjoint_loads, control_part, value }
    }

    /// Adds `-B(e_p, phi)` for every control coefficient `p` to `out`.
    fn add_coupling_part(&self, phi: &AdjointField, out: &mut [f64]) {
        let disc = &self.disc;
        let (n, steps) = (disc.num_nodes(), disc.steps());
        for m in 1..=steps {
            let k = disc.step(m);
            let phi_full = disc.layout.extend(phi.slab(m));
            let (mphi, sphi) = (disc.mass.mul_vec(&phi_full), disc.stiffness.mul_vec(&phi_full));
            if m < steps {
                let o = &mut out[(m - 1) * n..m * n];
                for i in 0..n {
                    o[i] -= mphi[i] + 0.5 * k * sphi[i];
                }
            }
            if m >= 2 {
                let o = &mut out[(m - 2) * n..(m - 1) * n];
                for i in 0..n {
                    o[i] += mphi[i] - 0.5 * k * sphi[i];
                }
            }
        }
    }

    fn regularization(&self, q: &ControlField) -> (Vec<f64>, f64) {
        let diff: Vec<f64> = q.values().iter().zip(self.shift.values()).map(|(a, b)| a - b).collect();
        let mut a_diff = vec![0.0; diff.len()];
        self.disc.apply_seminorm(&diff, &mut a_diff);
        let value = 0.5 * self.lambda * dot(&diff, &a_diff);
        a_diff.iter_mut().for_each(|v| *v *= self.lambda);
        (a_diff, value)
    }

    /// Value of the reduced functional.
    pub fn objective(&self, q: &ControlField) -> Result<f64> {
        let w = self.state(q)?;
        Ok(self.tracking(&w, q, true).value + self.regularization(q).1)
    }

    /// State, adjoint, gradient and functional value at `q`.
    pub fn evaluate(&self, q: &ControlField) -> Result<Evaluation> {
        q.check_mesh(self.mesh())?;
        let state = self.state(q)?;
        let tracking = self.tracking(&state, q, true);
        let adjoint = solve_adjoint_with_loads(&self.disc, &tracking.adjoint_loads)?;
        let (mut grad, reg_value) = self.regularization(q);
        crate::linalg::axpy(1.0, &tracking.control_part, &mut grad);
        self.add_coupling_part(&adjoint, &mut grad);
        Ok(Evaluation {
            state,
            adjoint,
            gradient: ControlField::from_values(q.num_nodes(), q.steps(), grad)?,
            value: tracking.value + reg_value,
        })
    }

    pub fn reduced_gradient(&self, q: &ControlField) -> Result<ControlField> {
        Ok(self.evaluate(q)?.gradient)
    }

    /// Hessian of the reduced functional applied to `dq`.
    pub fn hessian_vec(&self, dq: &ControlField) -> Result<ControlField> {
        let mut out = vec![0.0; dq.len()];
        self.hessian_vec_into(dq.values(), &mut out)?;
        ControlField::from_values(dq.num_nodes(), dq.steps(), out)
    }

    fn hessian_vec_into(&self, dq: &[f64], out: &mut [f64]) -> Result<()> {
        let dq = ControlField::from_values(self.disc.num_nodes(), self.disc.steps(), dq.to_vec())?;
        let s = solve_state_sensitivity(&self.disc, &dq)?;
        let tracking = self.tracking(&s, &dq, false);
        let psi = solve_adjoint_with_loads(&self.disc, &tracking.adjoint_loads)?;
        self.disc.apply_seminorm(dq.values(), out);
        out.iter_mut().zip(&tracking.control_part).for_each(|(o, t)| *o = self.lambda * *o + t);
        self.add_coupling_part(&psi, out);
        Ok(())
    }

    /// Diagonal of `lambda A`, the CG preconditioner.
    pub fn preconditioner_diagonal(&self) -> Vec<f64> {
        self.disc.seminorm.diagonal().iter().map(|d| self.lambda * d).collect()
    }
}

/// Options of the active set iteration.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct PdasOptions {
    /// Threshold for the stationarity and complementarity residuals.
    pub tol: f64,
    pub max_outer: usize,
    /// Scaling in the active set prediction `q - mu / c`; `None` uses lambda.
    pub c_pdas: Option<f64>,
    /// Relative CG tolerance; `None` uses `min(1e-10, 1e-2 tol)`.
    pub cg_tol: Option<f64>,
    pub cg_max_iter: usize,
}

impl Default for PdasOptions {
    fn default() -> Self {
        Self { tol: 1e-10, max_outer: 50, c_pdas: None, cg_tol: None, cg_max_iter: 20_000 }
    }
}

impl PdasOptions {
    pub fn cg_tolerance(&self) -> f64 {
        self.cg_tol.unwrap_or_else(|| (1e-2 * self.tol).min(1e-10))
    }
}

/// Per-outer-iteration record.
#[derive(Debug, Clone, Serialize)]
pub struct OuterIteration {
    pub iteration: usize,
    pub lower_active: usize,
    pub upper_active: usize,
    pub cg_iterations: usize,
    /// Functional value after the solve of this iteration.
    pub objective: f64,
}

/// Residuals of the discrete optimality system at a control.
///
/// Stationarity and complementarity are measured relative to the largest
/// gradient component at the starting control; infeasibility is absolute.
#[derive(Debug, Clone, Serialize)]
pub struct KktDiagnostics {
    pub stationarity: f64,
    pub complementarity: f64,
    pub infeasibility: f64,
    pub lower_active: usize,
    pub upper_active: usize,
    pub outer_iterations: usize,
    pub cg_iterations: usize,
    pub objective: f64,
    pub history: Vec<OuterIteration>,
}

/// Multiplier estimate `mu = gradient` at the constrained coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiplierField {
    pub dofs: Vec<usize>,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct PdasOutcome {
    pub control: ControlField,
    pub state: StateField,
    pub adjoint: AdjointField,
    pub multipliers: MultiplierField,
    pub diagnostics: KktDiagnostics,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Activity {
    Free,
    Lower,
    Upper,
}

fn kkt_residuals(bounds: &BoundSet, q: &[f64], g: &[f64], scale: f64) -> (f64, f64, f64, usize, usize) {
    let mut constrained = vec![false; q.len()];
    let (mut comp, mut infeas) = (0.0f64, 0.0f64);
    let (mut lower, mut upper) = (0, 0);
    let mut stat = 0.0f64;
    for &i in bounds.constrained() {
        constrained[i] = true;
        infeas = infeas.max(bounds.q_a - q[i]).max(q[i] - bounds.q_b);
        if q[i] <= bounds.q_a {
            lower += 1;
            comp = comp.max(-g[i]);
        } else if q[i] >= bounds.q_b {
            upper += 1;
            comp = comp.max(g[i]);
        } else {
            stat = stat.max(g[i].abs());
        }
    }
    for (i, gi) in g.iter().enumerate() {
        if !constrained[i] {
            stat = stat.max(gi.abs());
        }
    }
    (stat / scale, comp.max(0.0) / scale, infeas.max(0.0), lower, upper)
}

/// Primal-dual active set iteration.
pub fn pdas_solve(problem: &ReducedProblem, q_init: &ControlField, options: &PdasOptions) -> Result<PdasOutcome> {
    if !(options.tol > 0.0) {
        return Err(Error::InvalidArgument("tolerance must be positive".into()));
    }
    q_init.check_mesh(problem.mesh())?;
    let bounds = &problem.bounds;
    let c = options.c_pdas.unwrap_or(problem.lambda);
    let cg_tol = options.cg_tolerance();
    let precond = problem.preconditioner_diagonal();
    let dim = q_init.len();

    let mut q = q_init.clone();
    let mut eval = problem.evaluate(&q)?;
    let scale = norm_inf(eval.gradient.values()).max(f64::MIN_POSITIVE);
    let mut previous: Option<Vec<Activity>> = None;
    let mut history = Vec::new();
    let mut cg_total = 0;

    for outer in 0..=options.max_outer {
        let g = eval.gradient.values();
        let mut activity = vec![Activity::Free; dim];
        for &i in bounds.constrained() {
            let predicted = q.values()[i] - g[i] / c;
            activity[i] = if predicted < bounds.q_a {
                Activity::Lower
            } else if predicted > bounds.q_b {
                Activity::Upper
            } else {
                Activity::Free
            };
        }
        let (stat, comp, infeas, lower, upper) = kkt_residuals(bounds, q.values(), g, scale);
        log::debug!(
            "pdas {outer}: J = {:.10e}, |A-| = {lower}, |A+| = {upper}, stat = {stat:.2e}, comp = {comp:.2e}",
            eval.value
        );
        if previous.as_ref() == Some(&activity) && stat < options.tol && comp < options.tol && infeas == 0.0 {
            let multipliers = MultiplierField {
                dofs: bounds.constrained().to_vec(),
                values: bounds.constrained().iter().map(|&i| g[i]).collect(),
            };
            let diagnostics = KktDiagnostics {
                stationarity: stat,
                complementarity: comp,
                infeasibility: infeas,
                lower_active: lower,
                upper_active: upper,
                outer_iterations: outer,
                cg_iterations: cg_total,
                objective: eval.value,
                history,
            };
            return Ok(PdasOutcome {
                control: q,
                state: eval.state,
                adjoint: eval.adjoint,
                multipliers,
                diagnostics,
            });
        }
        if outer == options.max_outer {
            return Err(Error::PdasNonconvergence(Box::new(KktDiagnostics {
                stationarity: stat,
                complementarity: comp,
                infeasibility: infeas,
                lower_active: lower,
                upper_active: upper,
                outer_iterations: outer,
                cg_iterations: cg_total,
                objective: eval.value,
                history,
            })));
        }

        // fix the active coefficients at their bounds
        let mut fixed = q.clone();
        for (i, act) in activity.iter().enumerate() {
            match act {
                Activity::Lower => fixed.values_mut()[i] = bounds.q_a,
                Activity::Upper => fixed.values_mut()[i] = bounds.q_b,
                Activity::Free => {}
            }
        }
        let base = if fixed == q { eval.gradient.clone() } else { problem.reduced_gradient(&fixed)? };
        let free: Vec<usize> = (0..dim).filter(|&i| activity[i] == Activity::Free).collect();
        let rhs: Vec<f64> = free.iter().map(|&i| -base.values()[i]).collect();
        let mut padded = vec![0.0; dim];
        let mut image = vec![0.0; dim];
        let solution = pcg(
            |x, y| {
                padded.iter_mut().for_each(|v| *v = 0.0);
                for (&i, &xi) in free.iter().zip(x) {
                    padded[i] = xi;
                }
                problem.hessian_vec_into(&padded, &mut image)?;
                for (yi, &i) in y.iter_mut().zip(&free) {
                    *yi = image[i];
                }
                Ok(())
            },
            |r, z| {
                for ((zi, ri), &i) in z.iter_mut().zip(r).zip(&free) {
                    *zi = ri / precond[i];
                }
            },
            &rhs,
            None,
            cg_tol,
            options.cg_max_iter,
        )?;
        cg_total += solution.iterations;
        q = fixed;
        for (&i, dx) in free.iter().zip(&solution.x) {
            q.values_mut()[i] += dx;
        }
        eval = problem.evaluate(&q)?;
        history.push(OuterIteration {
            iteration: outer + 1,
            lower_active: activity.iter().filter(|&&a| a == Activity::Lower).count(),
            upper_active: activity.iter().filter(|&&a| a == Activity::Upper).count(),
            cg_iterations: solution.iterations,
            objective: eval.value,
        });
        log::info!(
            "pdas outer {}: |A-| = {}, |A+| = {}, cg = {}, J = {:.10e}",
            outer + 1,
            history.last().unwrap().lower_active,
            history.last().unwrap().upper_active,
            solution.iterations,
            eval.value
        );
        previous = Some(activity);
    }
    unreachable!("loop returns on the final iteration")
}
