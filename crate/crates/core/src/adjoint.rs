//! Backward sweep for the discrete adjoint equation.
//!
//! Transposing the dG(0) form gives, for `m = M, ..., 1`,
//! `(M + k_m S) phi_m = M phi_{m+1} + G_m` with `phi_{M+1} = 0`, where `G_m` is
//! the tracking load `int_{I_m} (u_kh - u_d) phi_i`.

use crate::assembly::{assemble_coupling, discrete_tracking_load, Discretization, SlabLoads};
use crate::error::{Error, Result};
use crate::forward::solve_state_sensitivity;
use crate::linalg::dot;
use crate::spaces::{AdjointField, ControlField, StateField};

/// Adjoint sweep driven by precomputed per-slab loads on interior vertices.
pub fn solve_adjoint_with_loads(disc: &Discretization, loads: &[Vec<f64>]) -> Result<AdjointField> {
    if loads.len() != disc.steps() {
        return Err(Error::MeshMismatch(format!(
            "{} tracking loads for {} slabs",
            loads.len(),
            disc.steps()
        )));
    }
    let n = disc.num_interior();
    let mut adjoint = StateField::zeros(disc.steps(), n);
    let mut next = vec![0.0; n];
    for m in (1..=disc.steps()).rev() {
        let mut rhs = disc.mass_ii.mul_vec(&next);
        crate::linalg::axpy(1.0, &loads[m - 1], &mut rhs);
        disc.solve_slab(m, &mut rhs)?;
        adjoint.slabs[m - 1].copy_from_slice(&rhs);
        next = rhs;
    }
    Ok(adjoint)
}

/// Adjoint of the state `u_kh = w + q` with desired state given by its
/// precomputed loads (`None` for `u_d = 0`).
pub fn solve_adjoint(
    disc: &Discretization,
    w: &StateField,
    q: &ControlField,
    u_d: Option<&SlabLoads>,
) -> Result<AdjointField> {
    w.check_layout(&disc.mesh, &disc.layout)?;
    q.check_mesh(&disc.mesh)?;
    let loads: Vec<Vec<f64>> = (1..=disc.steps())
        .map(|m| {
            let mut g = discrete_tracking_load(disc, w.slab(m), q, m);
            if let Some(ud) = u_d {
                let data = disc.layout.restrict(&ud.constant(m));
                crate::linalg::axpy(-1.0, &data, &mut g);
            }
            g
        })
        .collect();
    solve_adjoint_with_loads(disc, &loads)
}

/// Discrepancy in the discrete duality between the state sensitivity and the
/// adjoint: with `s` solving `B(s, v) = -B(dq, v)` and `phi` solving
/// `B(v, phi) = <g, v>`, returns `|<g, s> + B(dq, phi)|`, which vanishes in
/// exact arithmetic.
pub fn adjoint_identity_check(disc: &Discretization, dq: &ControlField, g: &[Vec<f64>]) -> Result<f64> {
    let s = solve_state_sensitivity(disc, dq)?;
    let phi = solve_adjoint_with_loads(disc, g)?;
    let mut tracking = 0.0;
    let mut coupling = 0.0;
    for m in 1..=disc.steps() {
        tracking += dot(&g[m - 1], s.slab(m));
        coupling += dot(&assemble_coupling(disc, dq, m)?, phi.slab(m));
    }
    Ok((tracking + coupling).abs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::SpaceTimeMesh;

    #[test]
    fn zero_tracking_gives_zero_adjoint() {
        let disc = Discretization::new(SpaceTimeMesh::unit(3, 1).unwrap(), Default::default()).unwrap();
        let phi = solve_adjoint_with_loads(&disc, &[vec![0.0; 4]]).unwrap();
        assert!(phi.flatten().iter().all(|&v| v == 0.0));
        assert!(solve_adjoint_with_loads(&disc, &[]).is_err());
    }

    #[test]
    fn identity_trivial_cases() {
        let disc = Discretization::new(SpaceTimeMesh::unit(2, 2).unwrap(), Default::default()).unwrap();
        let zero_q = ControlField::for_mesh(&disc.mesh);
        let g = vec![vec![0.3], vec![-1.2]];
        assert_eq!(adjoint_identity_check(&disc, &zero_q, &g).unwrap(), 0.0);
        let dq = crate::spaces::interpolate_control(&disc.mesh, |x, y, _| x + 2.0 * y);
        assert_eq!(adjoint_identity_check(&disc, &dq, &[vec![0.0], vec![0.0]]).unwrap(), 0.0);
        assert!(adjoint_identity_check(&disc, &dq, &g).unwrap() < 1e-14);
    }
}
