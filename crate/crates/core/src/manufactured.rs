//! Manufactured solutions with known optimal control, discretization error
//! norms and convergence studies over sequences of meshes.

use std::io::Write;
use std::sync::Arc;

use serde::Serialize;

use crate::assembly::SlabSolverOptions;
use crate::error::{Error, Result};
use crate::mesh::{signed_area, SpaceTimeMesh};
use crate::optimizer::{pdas_solve, KktDiagnostics, PdasOptions, ProblemData, ReducedProblem, SpaceTimeFn};
use crate::quadrature::{IntervalRule, TriangleRule};
use crate::spaces::{ControlField, NodeLayout, StateField};

/// Vector-valued function of `(x, y, t)`.
pub type GradientFn = Arc<dyn Fn(f64, f64, f64) -> [f64; 2] + Send + Sync>;

/// Test case with known optimal state, adjoint and control.
#[derive(Clone)]
pub struct ManufacturedCase {
    pub name: &'static str,
    pub u: SpaceTimeFn,
    pub grad_u: GradientFn,
    pub phi: SpaceTimeFn,
    pub grad_phi: GradientFn,
    pub q: SpaceTimeFn,
    pub grad_q: GradientFn,
    pub dt_q: SpaceTimeFn,
    /// `f = u_t - lap u`
    pub f: SpaceTimeFn,
    /// `u_d = u + phi_t + lap phi`
    pub u_d: SpaceTimeFn,
    pub lambda: f64,
    pub q_a: f64,
    pub q_b: f64,
}

impl std::fmt::Debug for ManufacturedCase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ManufacturedCase")
            .field("name", &self.name)
            .field("lambda", &self.lambda)
            .field("q_a", &self.q_a)
            .field("q_b", &self.q_b)
            .finish_non_exhaustive()
    }
}

impl ManufacturedCase {
    /// Problem data with `q_d = q` and `u_0 = u(., 0)`.
    pub fn data(&self) -> ProblemData {
        let u = self.u.clone();
        ProblemData {
            f: self.f.clone(),
            u0: Arc::new(move |x, y| u(x, y, 0.0)),
            u_d: self.u_d.clone(),
            q_d: Some(self.q.clone()),
        }
    }
}

/// Names accepted by [`case_by_name`].
pub const AVAILABLE_CASES: &[&str] = &["example51"];

pub fn case_by_name(name: &str) -> Option<ManufacturedCase> {
    match name {
        "example51" => Some(example51()),
        _ => None,
    }
}

/// `u = q = x e^y (1-x)(1-y) t(1-t)`, `phi = (x^2-x^3)(y^2-y^3) t(1-t)` on
/// the unit cube with `lambda = 1e-3` and bounds `[0, 0.8]`.
pub fn example51() -> ManufacturedCase {
    // u = X(x) Y(y) tau(t)
    fn x_part(x: f64) -> (f64, f64, f64) {
        (x * (1.0 - x), 1.0 - 2.0 * x, -2.0)
    }
    fn y_part(y: f64) -> (f64, f64, f64) {
        let e = y.exp();
        (e * (1.0 - y), -y * e, -(1.0 + y) * e)
    }
    fn p_part(s: f64) -> (f64, f64, f64) {
        (s * s - s * s * s, 2.0 * s - 3.0 * s * s, 2.0 - 6.0 * s)
    }
    fn tau(t: f64) -> (f64, f64) {
        (t * (1.0 - t), 1.0 - 2.0 * t)
    }
    fn u(x: f64, y: f64, t: f64) -> f64 {
        x_part(x).0 * y_part(y).0 * tau(t).0
    }
    fn grad_u(x: f64, y: f64, t: f64) -> [f64; 2] {
        let ((xv, xd, _), (yv, yd, _), (tv, _)) = (x_part(x), y_part(y), tau(t));
        [xd * yv * tv, xv * yd * tv]
    }
    fn dt_u(x: f64, y: f64, t: f64) -> f64 {
        x_part(x).0 * y_part(y).0 * tau(t).1
    }
    fn phi(x: f64, y: f64, t: f64) -> f64 {
        p_part(x).0 * p_part(y).0 * tau(t).0
    }
    fn grad_phi(x: f64, y: f64, t: f64) -> [f64; 2] {
        let ((xv, xd, _), (yv, yd, _), (tv, _)) = (p_part(x), p_part(y), tau(t));
        [xd * yv * tv, xv * yd * tv]
    }
    fn f(x: f64, y: f64, t: f64) -> f64 {
        let ((xv, _, xdd), (yv, _, ydd), (tv, td)) = (x_part(x), y_part(y), tau(t));
        xv * yv * td - (xdd * yv + xv * ydd) * tv
    }
    fn u_d(x: f64, y: f64, t: f64) -> f64 {
        let ((xv, _, xdd), (yv, _, ydd), (tv, td)) = (p_part(x), p_part(y), tau(t));
        u(x, y, t) + xv * yv * td + (xdd * yv + xv * ydd) * tv
    }
    ManufacturedCase {
        name: "example51",
        u: Arc::new(u),
        grad_u: Arc::new(grad_u),
        phi: Arc::new(phi),
        grad_phi: Arc::new(grad_phi),
        q: Arc::new(u),
        grad_q: Arc::new(grad_u),
        dt_q: Arc::new(dt_u),
        f: Arc::new(f),
        u_d: Arc::new(u_d),
        lambda: 1e-3,
        q_a: 0.0,
        q_b: 0.8,
    }
}

/// Quadrature used by the error norms: a triangle rule times a time rule per prism.
#[derive(Debug, Clone)]
pub struct ErrorQuadrature {
    pub space: TriangleRule,
    pub time: IntervalRule,
}

impl Default for ErrorQuadrature {
    fn default() -> Self {
        Self { space: TriangleRule::degree4(), time: IntervalRule::gauss2() }
    }
}

/// `sqrt( sum_prisms int |grad exact - grad discrete|^2 [+ |dt exact - dt discrete|^2] )`
/// where the discrete field is `w + q` (either part optional).
#[allow(clippy::too_many_arguments)]
fn space_time_error<G, D>(
    mesh: &SpaceTimeMesh,
    layout: &NodeLayout,
    grad_exact: G,
    dt_exact: Option<D>,
    w: Option<&StateField>,
    q: Option<&ControlField>,
    rule: &ErrorQuadrature,
) -> f64
where
    G: Fn(f64, f64, f64) -> [f64; 2],
    D: Fn(f64, f64, f64) -> f64,
{
    let tri = &mesh.triangulation;
    let mut total = 0.0;
    for m in 1..=mesh.steps() {
        let (t0, t1) = (mesh.time.points()[m - 1], mesh.time.points()[m]);
        let k = t1 - t0;
        let w_full = w.map(|w| layout.extend(w.slab(m)));
        let levels = q.map(|q| (q.level_or_zero(m - 1), q.level_or_zero(m)));
        for (ti, verts) in tri.triangles().iter().enumerate() {
            let p = tri.triangle_points(ti);
            let area = signed_area(&p);
            let grads = crate::assembly::barycentric_gradients(&p);
            let grad_of = |values: &[f64]| -> [f64; 2] {
                let mut g = [0.0; 2];
                for a in 0..3 {
                    g[0] += values[verts[a]] * grads[a][0];
                    g[1] += values[verts[a]] * grads[a][1];
                }
                g
            };
            let gw = w_full.as_deref().map(grad_of).unwrap_or([0.0; 2]);
            let (gq0, gq1) = levels.as_ref().map_or(([0.0; 2], [0.0; 2]), |(l, r)| (grad_of(l), grad_of(r)));
            for (t, wt) in rule.time.on(t0, t1) {
                let s = (t - t0) / k;
                for (x, w, lambda) in rule.space.physical_points(&p) {
                    let exact = grad_exact(x[0], x[1], t);
                    let gx = gw[0] + (1.0 - s) * gq0[0] + s * gq1[0];
                    let gy = gw[1] + (1.0 - s) * gq0[1] + s * gq1[1];
                    let mut e2 = (exact[0] - gx).powi(2) + (exact[1] - gy).powi(2);
                    if let (Some(dt), Some((l, r))) = (dt_exact.as_ref(), levels.as_ref()) {
                        let slope: f64 = (0..3).map(|a| lambda[a] * (r[verts[a]] - l[verts[a]])).sum::<f64>() / k;
                        e2 += (dt(x[0], x[1], t) - slope).powi(2);
                    }
                    total += wt * w * area * e2;
                }
            }
        }
    }
    total.sqrt()
}

fn check_state_layout(mesh: &SpaceTimeMesh, layout: &NodeLayout, w: &StateField) -> Result<()> {
    w.check_layout(mesh, layout)
}

/// `|grad(u - (w + q))|_I` for the state `u_kh = w + q`.
pub fn energy_error_state(
    mesh: &SpaceTimeMesh,
    grad_u: impl Fn(f64, f64, f64) -> [f64; 2],
    w: &StateField,
    q: &ControlField,
    rule: &ErrorQuadrature,
) -> Result<f64> {
    let layout = NodeLayout::new(&mesh.triangulation);
    check_state_layout(mesh, &layout, w)?;
    q.check_mesh(mesh)?;
    Ok(space_time_error(mesh, &layout, grad_u, None::<fn(f64, f64, f64) -> f64>, Some(w), Some(q), rule))
}

/// `|grad(phi - phi_kh)|_I`.
pub fn energy_error_adjoint(
    mesh: &SpaceTimeMesh,
    grad_phi: impl Fn(f64, f64, f64) -> [f64; 2],
    phi: &StateField,
    rule: &ErrorQuadrature,
) -> Result<f64> {
    let layout = NodeLayout::new(&mesh.triangulation);
    check_state_layout(mesh, &layout, phi)?;
    Ok(space_time_error(mesh, &layout, grad_phi, None::<fn(f64, f64, f64) -> f64>, Some(phi), None, rule))
}

/// Space-time H1 seminorm `|q - q_sigma|_{1, Omega x I}`.
pub fn control_error(
    mesh: &SpaceTimeMesh,
    grad_q: impl Fn(f64, f64, f64) -> [f64; 2],
    dt_q: impl Fn(f64, f64, f64) -> f64,
    q: &ControlField,
    rule: &ErrorQuadrature,
) -> Result<f64> {
    q.check_mesh(mesh)?;
    let layout = NodeLayout::new(&mesh.triangulation);
    Ok(space_time_error(mesh, &layout, grad_q, Some(dt_q), None, Some(q), rule))
}

/// Empirical orders `log(e_l / e_{l-1}) / log(mu_l / mu_{l-1})`; `None` for the first level.
pub fn eoc(errors: &[f64], params: &[f64]) -> Vec<Option<f64>> {
    assert_eq!(errors.len(), params.len());
    (0..errors.len())
        .map(|l| (l > 0).then(|| (errors[l] / errors[l - 1]).ln() / (params[l] / params[l - 1]).ln()))
        .collect()
}

/// Options of a convergence study.
#[derive(Debug, Clone)]
pub struct StudyOptions {
    pub lambda: Option<f64>,
    pub q_a: Option<f64>,
    pub q_b: Option<f64>,
    pub pdas: PdasOptions,
    pub solver: SlabSolverOptions,
    /// Number of levels solved concurrently.
    pub jobs: usize,
}

impl Default for StudyOptions {
    fn default() -> Self {
        Self { lambda: None, q_a: None, q_b: None, pdas: PdasOptions::default(), solver: Default::default(), jobs: 1 }
    }
}

/// Results for one refinement level.
#[derive(Debug, Clone, Serialize)]
pub struct LevelResult {
    pub n: usize,
    pub steps: usize,
    /// Cell width `1/n`.
    pub h: f64,
    pub k: f64,
    pub sigma: f64,
    pub err_state: f64,
    pub err_adjoint: f64,
    pub err_control: f64,
    pub rate_state_h: Option<f64>,
    pub rate_adjoint_h: Option<f64>,
    pub rate_state_k: Option<f64>,
    pub rate_adjoint_k: Option<f64>,
    pub rate_control_sigma: Option<f64>,
    pub diagnostics: KktDiagnostics,
}

#[derive(Debug, Clone, Serialize)]
pub struct StudyReport {
    pub case: String,
    pub lambda: f64,
    pub q_a: f64,
    pub q_b: f64,
    pub levels: Vec<LevelResult>,
}

/// A study that failed at some level, with the levels completed before it.
#[derive(Debug)]
pub struct StudyFailure {
    pub partial: StudyReport,
    pub level: (usize, usize),
    pub error: Error,
}

impl std::fmt::Display for StudyFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "level (n = {}, M = {}) failed: {}", self.level.0, self.level.1, self.error)
    }
}

impl std::error::Error for StudyFailure {}

/// Solution of one level: the converged fields and the three errors.
#[derive(Debug)]
pub struct LevelSolution {
    pub problem: ReducedProblem,
    pub outcome: crate::optimizer::PdasOutcome,
    pub err_state: f64,
    pub err_adjoint: f64,
    pub err_control: f64,
}

pub fn solve_level(case: &ManufacturedCase, n: usize, steps: usize, options: &StudyOptions) -> Result<LevelSolution> {
    let mesh = SpaceTimeMesh::unit(n, steps)?;
    let lambda = options.lambda.unwrap_or(case.lambda);
    let (q_a, q_b) = (options.q_a.unwrap_or(case.q_a), options.q_b.unwrap_or(case.q_b));
    let problem = ReducedProblem::new(mesh, lambda, q_a, q_b, &case.data(), options.solver)?;
    let outcome = pdas_solve(&problem, &problem.zero_control(), &options.pdas)?;
    let rule = ErrorQuadrature::default();
    let mesh = problem.mesh();
    let err_state = energy_error_state(mesh, &*case.grad_u, &outcome.state, &outcome.control, &rule)?;
    let err_adjoint = energy_error_adjoint(mesh, &*case.grad_phi, &outcome.adjoint, &rule)?;
    let err_control = control_error(mesh, &*case.grad_q, &*case.dt_q, &outcome.control, &rule)?;
    Ok(LevelSolution { problem, outcome, err_state, err_adjoint, err_control })
}

fn level_result(n: usize, steps: usize, sol: LevelSolution) -> LevelResult {
    let mesh = sol.problem.mesh();
    LevelResult {
        n,
        steps,
        h: mesh.cell_width(),
        k: mesh.k(),
        sigma: mesh.sigma(),
        err_state: sol.err_state,
        err_adjoint: sol.err_adjoint,
        err_control: sol.err_control,
        rate_state_h: None,
        rate_adjoint_h: None,
        rate_state_k: None,
        rate_adjoint_k: None,
        rate_control_sigma: None,
        diagnostics: sol.outcome.diagnostics,
    }
}

fn fill_rates(levels: &mut [LevelResult]) {
    let col = |f: fn(&LevelResult) -> f64| levels.iter().map(f).collect::<Vec<_>>();
    let (es, ea, ec) = (col(|l| l.err_state), col(|l| l.err_adjoint), col(|l| l.err_control));
    let (h, k, sigma) = (col(|l| l.h), col(|l| l.k), col(|l| l.sigma));
    let rates = [eoc(&es, &h), eoc(&ea, &h), eoc(&es, &k), eoc(&ea, &k), eoc(&ec, &sigma)];
    for (l, level) in levels.iter_mut().enumerate() {
        level.rate_state_h = rates[0][l];
        level.rate_adjoint_h = rates[1][l];
        level.rate_state_k = rates[2][l];
        level.rate_adjoint_k = rates[3][l];
        level.rate_control_sigma = rates[4][l];
    }
}

/// Solves the case on every `(n, M)` level and collects errors and rates.
pub fn run_study(
    levels: &[(usize, usize)],
    case: &ManufacturedCase,
    options: &StudyOptions,
) -> std::result::Result<StudyReport, StudyFailure> {
    let mut report = StudyReport {
        case: case.name.to_string(),
        lambda: options.lambda.unwrap_or(case.lambda),
        q_a: options.q_a.unwrap_or(case.q_a),
        q_b: options.q_b.unwrap_or(case.q_b),
        levels: Vec::new(),
    };
    if levels.is_empty() {
        return Err(StudyFailure {
            partial: report,
            level: (0, 0),
            error: Error::InvalidArgument("levels must be nonempty".into()),
        });
    }
    let jobs = options.jobs.max(1);
    let mut results: Vec<Option<Result<LevelSolution>>> = (0..levels.len()).map(|_| None).collect();
    for chunk_start in (0..levels.len()).step_by(jobs) {
        let chunk = &levels[chunk_start..(chunk_start + jobs).min(levels.len())];
        let solved: Vec<Result<LevelSolution>> = std::thread::scope(|scope| {
            let handles: Vec<_> = chunk
                .iter()
                .map(|&(n, m)| scope.spawn(move || solve_level(case, n, m, options)))
                .collect();
            handles.into_iter().map(|h| h.join().expect("level worker panicked")).collect()
        });
        for (offset, r) in solved.into_iter().enumerate() {
            results[chunk_start + offset] = Some(r);
        }
        if results[chunk_start..chunk_start + chunk.len()].iter().any(|r| matches!(r, Some(Err(_)))) {
            break;
        }
    }
    for (&(n, m), result) in levels.iter().zip(results) {
        match result {
            Some(Ok(sol)) => {
                log::info!(
                    "level n = {n}, M = {m}: state {:.8e}, adjoint {:.8e}, control {:.8e}",
                    sol.err_state,
                    sol.err_adjoint,
                    sol.err_control
                );
                report.levels.push(level_result(n, m, sol));
            }
            Some(Err(error)) => {
                fill_rates(&mut report.levels);
                return Err(StudyFailure { partial: report, level: (n, m), error });
            }
            None => break,
        }
    }
    fill_rates(&mut report.levels);
    Ok(report)
}

/// Formats a value with eight significant digits in plain decimal notation.
pub fn format_significant(value: f64) -> String {
    if value == 0.0 || !value.is_finite() {
        return format!("{value}");
    }
    let magnitude = value.abs().log10().floor() as i32;
    let decimals = (7 - magnitude).max(0) as usize;
    format!("{value:.decimals$}")
}

pub const CSV_HEADER: &str =
    "n,M,h,k,sigma,err_state,rate_state,err_adjoint,rate_adjoint,err_control,rate_control";

impl StudyReport {
    /// One row per level; state and adjoint rates are with respect to `h`,
    /// control rates with respect to `sigma`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let opt = |v: Option<f64>| v.map(format_significant).unwrap_or_default();
        writeln!(out, "{CSV_HEADER}")?;
        for l in &self.levels {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{}",
                l.n,
                l.steps,
                format_significant(l.h),
                format_significant(l.k),
                format_significant(l.sigma),
                format_significant(l.err_state),
                opt(l.rate_state_h),
                format_significant(l.err_adjoint),
                opt(l.rate_adjoint_h),
                format_significant(l.err_control),
                opt(l.rate_control_sigma),
            )?;
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn example_values() {
        let case = example51();
        // 0.5 * e^0.5 * 0.5 * 0.5 * 0.25
        assert_relative_eq!((case.u)(0.5, 0.5, 0.5), 0.03125 * 0.5f64.exp(), max_relative = 1e-15);
        assert_relative_eq!((case.u)(0.5, 0.5, 0.5), 0.051_522_6, max_relative = 1e-5);
        for i in 0..=10 {
            let x = i as f64 / 10.0;
            assert!((case.q)(x, 0.0, 0.3) >= 0.0);
        }
        assert_eq!((case.phi)(0.3, 0.6, 1.0), 0.0);
    }

    #[test]
    fn eoc_of_exact_power_law() {
        let params = [0.5, 0.25, 0.1, 0.03];
        let errors: Vec<f64> = params.iter().map(|p| 3.0 * p).collect();
        let rates = eoc(&errors, &params);
        assert!(rates[0].is_none());
        for r in &rates[1..] {
            assert_relative_eq!(r.unwrap(), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn significant_digits() {
        assert_eq!(format_significant(0.02610199), "0.026101990");
        assert_eq!(format_significant(1.0), "1.0000000");
        assert_eq!(format_significant(123.456789012), "123.45679");
        assert_eq!(format_significant(0.0), "0");
    }

    #[test]
    fn empty_levels_rejected() {
        let err = run_study(&[], &example51(), &StudyOptions::default()).unwrap_err();
        assert_eq!(err.error.to_string(), "invalid argument: levels must be nonempty");
    }

    #[test]
    fn zero_error_for_exact_fields() {
        // linear in space, piecewise linear in time with the kink on a time node
        let mesh = SpaceTimeMesh::unit(3, 4).unwrap();
        let g = |x: f64, y: f64, t: f64| (1.0 + x - 2.0 * y) * t.min(1.0 - t);
        let q = crate::spaces::interpolate_control(&mesh, g);
        let err = control_error(
            &mesh,
            |_, _, t| [t.min(1.0 - t), -2.0 * t.min(1.0 - t)],
            |x, y, t| (1.0 + x - 2.0 * y) * if t < 0.5 { 1.0 } else { -1.0 },
            &q,
            &ErrorQuadrature::default(),
        )
        .unwrap();
        assert!(err < 1e-13, "{err}");
    }
}
