//! Forward sweep for the dG(0)-in-time state equation.
//!
//! On slab `m` the state coefficients satisfy
//! `(M + k_m S) w_m = M w_{m-1} + F_m - C_m(q)` with `w_0` the L2 projection of
//! the initial value and `C_m` the coupling from [`assemble_coupling`].

use crate::assembly::{assemble_coupling, assemble_source, l2_project_initial, Discretization};
use crate::error::Result;
use crate::spaces::{ControlField, StateField};

/// Source loads and initial coefficients of a state problem.
#[derive(Debug, Clone)]
pub struct ForwardData {
    pub sources: Vec<Vec<f64>>,
    pub initial: Vec<f64>,
}

impl ForwardData {
    pub fn new<F, U>(disc: &Discretization, f: F, u0: U) -> Result<Self>
    where
        F: Fn(f64, f64, f64) -> f64,
        U: Fn(f64, f64) -> f64,
    {
        let sources = (1..=disc.steps()).map(|m| assemble_source(disc, &f, m)).collect::<Result<_>>()?;
        let initial = l2_project_initial(disc, u0)?;
        Ok(Self { sources, initial })
    }

    pub fn zero(disc: &Discretization) -> Self {
        Self {
            sources: vec![vec![0.0; disc.num_interior()]; disc.steps()],
            initial: vec![0.0; disc.num_interior()],
        }
    }
}

fn sweep(disc: &Discretization, data: Option<&ForwardData>, q: &ControlField) -> Result<StateField> {
    q.check_mesh(&disc.mesh)?;
    let n = disc.num_interior();
    let mut state = StateField::zeros(disc.steps(), n);
    let mut prev = data.map_or_else(|| vec![0.0; n], |d| d.initial.clone());
    for m in 1..=disc.steps() {
        let mut rhs = disc.mass_ii.mul_vec(&prev);
        if let Some(d) = data {
            crate::linalg::axpy(1.0, &d.sources[m - 1], &mut rhs);
        }
        crate::linalg::axpy(-1.0, &assemble_coupling(disc, q, m)?, &mut rhs);
        disc.solve_slab(m, &mut rhs)?;
        state.slabs[m - 1].copy_from_slice(&rhs);
        prev = rhs;
    }
    Ok(state)
}

/// Homogeneous part `w_kh` of the discrete state; the full state is `w_kh + q`.
pub fn solve_state(disc: &Discretization, data: &ForwardData, q: &ControlField) -> Result<StateField> {
    sweep(disc, Some(data), q)
}

/// Linearized state: the sweep with zero source and zero initial value.
pub fn solve_state_sensitivity(disc: &Discretization, dq: &ControlField) -> Result<StateField> {
    sweep(disc, None, dq)
}
