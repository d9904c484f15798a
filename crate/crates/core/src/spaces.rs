//! Degree-of-freedom layouts for the state, adjoint and control spaces.
//!
//! * State and adjoint: piecewise constant in time on each slab
//!   `(t_{m-1}, t_m]`, continuous P1 in space with zero boundary trace. Only
//!   interior vertices carry coefficients.
//! * Control: continuous P1 x P1 on prisms, vanishing at `t = 0` and `t = T`.
//!   Coefficients live on every spatial vertex at the interior time levels
//!   `t_1 .. t_{M-1}`, ordered by level, then vertex.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::mesh::{SpaceTimeMesh, Triangulation};

/// Map between all vertices and interior (free) vertices of a triangulation.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeLayout {
    interior: Vec<usize>,
    slot: Vec<Option<usize>>,
}

impl NodeLayout {
    pub fn new(tri: &Triangulation) -> Self {
        let interior = tri.interior_vertices();
        let mut slot = vec![None; tri.num_vertices()];
        for (i, &v) in interior.iter().enumerate() {
            slot[v] = Some(i);
        }
        Self { interior, slot }
    }

    pub fn num_nodes(&self) -> usize {
        self.slot.len()
    }

    pub fn num_interior(&self) -> usize {
        self.interior.len()
    }

    pub fn interior(&self) -> &[usize] {
        &self.interior
    }

    pub fn slot(&self, vertex: usize) -> Option<usize> {
        self.slot[vertex]
    }

    /// Embeds an interior vector into all vertices with zeros on the boundary.
    pub fn extend(&self, interior_values: &[f64]) -> Vec<f64> {
        let mut full = vec![0.0; self.num_nodes()];
        for (&v, &x) in self.interior.iter().zip(interior_values) {
            full[v] = x;
        }
        full
    }

    pub fn restrict(&self, full: &[f64]) -> Vec<f64> {
        self.interior.iter().map(|&v| full[v]).collect()
    }
}

/// Coefficients of a discrete state (or adjoint) field, one interior-vertex
/// vector per time slab.
#[derive(Debug, Clone, PartialEq)]
pub struct StateField {
    pub slabs: Vec<Vec<f64>>,
}

/// The adjoint state uses the state layout; its value beyond `t_M` is zero.
pub type AdjointField = StateField;

impl StateField {
    pub fn zeros(steps: usize, interior: usize) -> Self {
        Self { slabs: vec![vec![0.0; interior]; steps] }
    }

    pub fn steps(&self) -> usize {
        self.slabs.len()
    }

    /// Coefficients on slab `m` (1-based).
    pub fn slab(&self, m: usize) -> &[f64] {
        &self.slabs[m - 1]
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.slabs.concat()
    }

    pub fn scale(&mut self, alpha: f64) {
        self.slabs.iter_mut().flatten().for_each(|v| *v *= alpha);
    }

    pub fn check_layout(&self, mesh: &SpaceTimeMesh, layout: &NodeLayout) -> Result<()> {
        if self.slabs.len() != mesh.steps() || self.slabs.iter().any(|s| s.len() != layout.num_interior()) {
            return Err(Error::MeshMismatch(format!(
                "state field has {} slabs, mesh has {} steps and {} interior vertices",
                self.slabs.len(),
                mesh.steps(),
                layout.num_interior()
            )));
        }
        Ok(())
    }
}

/// Coefficients of a discrete control.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlField {
    nodes: usize,
    levels: usize,
    values: Vec<f64>,
}

impl ControlField {
    /// Zero control for `steps` time steps and `nodes` spatial vertices.
    pub fn zeros(nodes: usize, steps: usize) -> Self {
        let levels = steps.saturating_sub(1);
        Self { nodes, levels, values: vec![0.0; nodes * levels] }
    }

    pub fn for_mesh(mesh: &SpaceTimeMesh) -> Self {
        Self::zeros(mesh.num_nodes(), mesh.steps())
    }

    pub fn from_values(nodes: usize, steps: usize, values: Vec<f64>) -> Result<Self> {
        let levels = steps.saturating_sub(1);
        if values.len() != nodes * levels {
            return Err(Error::InvalidArgument(format!(
                "control needs {} values, got {}",
                nodes * levels,
                values.len()
            )));
        }
        Ok(Self { nodes, levels, values })
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes
    }

    /// Number of time steps `M` of the underlying partition.
    pub fn steps(&self) -> usize {
        self.levels + 1
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn dof(level: usize, node: usize, nodes: usize) -> usize {
        (level - 1) * nodes + node
    }

    /// Nodal values at time level `m` in `0..=M`; `None` at the two end levels
    /// where the control vanishes.
    pub fn level(&self, m: usize) -> Option<&[f64]> {
        (m >= 1 && m <= self.levels).then(|| &self.values[(m - 1) * self.nodes..m * self.nodes])
    }

    pub fn level_or_zero(&self, m: usize) -> std::borrow::Cow<'_, [f64]> {
        match self.level(m) {
            Some(v) => v.into(),
            None => vec![0.0; self.nodes].into(),
        }
    }

    pub fn check_mesh(&self, mesh: &SpaceTimeMesh) -> Result<()> {
        if self.nodes != mesh.num_nodes() || self.levels + 1 != mesh.steps().max(1) {
            return Err(Error::MeshMismatch(format!(
                "control has {} nodes x {} levels, mesh has {} nodes and {} steps",
                self.nodes,
                self.levels,
                mesh.num_nodes(),
                mesh.steps()
            )));
        }
        Ok(())
    }

    pub fn axpy(&mut self, alpha: f64, other: &Self) {
        crate::linalg::axpy(alpha, &other.values, &mut self.values);
    }
}

/// Box constraints on control coefficients at lateral-boundary nodes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundSet {
    pub q_a: f64,
    pub q_b: f64,
    constrained: Vec<usize>,
}

impl BoundSet {
    /// Constrains every control coefficient whose vertex lies on the spatial boundary.
    pub fn new(mesh: &SpaceTimeMesh, q_a: f64, q_b: f64) -> Result<Self> {
        if !(q_a <= 0.0 && q_b >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "bounds must satisfy q_a <= 0 <= q_b, got [{q_a}, {q_b}]"
            )));
        }
        let tri = &mesh.triangulation;
        let nodes = tri.num_vertices();
        let constrained = (1..mesh.steps())
            .flat_map(|l| {
                (0..nodes)
                    .filter(|&v| tri.is_boundary(v))
                    .map(move |v| ControlField::dof(l, v, nodes))
            })
            .collect();
        Ok(Self { q_a, q_b, constrained })
    }

    /// Constrained DOF indices in increasing order.
    pub fn constrained(&self) -> &[usize] {
        &self.constrained
    }
}

pub fn project_onto_bounds(q: &ControlField, bounds: &BoundSet) -> ControlField {
    let mut out = q.clone();
    for &i in bounds.constrained() {
        out.values[i] = out.values[i].clamp(bounds.q_a, bounds.q_b);
    }
    out
}

/// Nodal interpolation at spatial vertices and interior time levels.
pub fn interpolate_control<G>(mesh: &SpaceTimeMesh, g: G) -> ControlField
where
    G: Fn(f64, f64, f64) -> f64,
{
    let mut q = ControlField::for_mesh(mesh);
    let nodes = mesh.num_nodes();
    let verts = mesh.triangulation.vertices();
    for l in 1..mesh.steps() {
        let t = mesh.time.points()[l];
        for (v, p) in verts.iter().enumerate() {
            q.values[ControlField::dof(l, v, nodes)] = g(p[0], p[1], t);
        }
    }
    q
}

fn locate(mesh: &SpaceTimeMesh, x: f64, y: f64, t: f64) -> Result<(usize, [f64; 3])> {
    mesh.triangulation.locate(x, y).ok_or(Error::OutOfDomain { x, y, t })
}

/// Evaluates a state field at `(x, y, t)` with `t` in `(0, T]`.
pub fn eval_state(
    mesh: &SpaceTimeMesh,
    layout: &NodeLayout,
    u: &StateField,
    x: f64,
    y: f64,
    t: f64,
) -> Result<f64> {
    u.check_layout(mesh, layout)?;
    let m = mesh.time.slab_of(t).ok_or(Error::OutOfDomain { x, y, t })?;
    let (tri, lambda) = locate(mesh, x, y, t)?;
    let coeffs = u.slab(m);
    Ok(mesh.triangulation.triangles()[tri]
        .iter()
        .zip(lambda)
        .map(|(&v, l)| layout.slot(v).map_or(0.0, |s| l * coeffs[s]))
        .sum())
}

/// Evaluates a control field at `(x, y, t)` with `t` in `[0, T]`.
pub fn eval_control(mesh: &SpaceTimeMesh, q: &ControlField, x: f64, y: f64, t: f64) -> Result<f64> {
    q.check_mesh(mesh)?;
    let (tri, lambda) = locate(mesh, x, y, t)?;
    let m = if t == 0.0 { 1 } else { mesh.time.slab_of(t).ok_or(Error::OutOfDomain { x, y, t })? };
    let (t0, t1) = (mesh.time.points()[m - 1], mesh.time.points()[m]);
    let s = (t - t0) / (t1 - t0);
    let (left, right) = (q.level_or_zero(m - 1), q.level_or_zero(m));
    Ok(mesh.triangulation.triangles()[tri]
        .iter()
        .zip(lambda)
        .map(|(&v, l)| l * ((1.0 - s) * left[v] + s * right[v]))
        .sum())
}
