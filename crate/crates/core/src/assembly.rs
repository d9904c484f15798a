//! Finite element operators: spatial mass and stiffness matrices, the
//! space-time H1 seminorm on the control space, the state-control coupling
//! and quadrature-based load vectors.

use crate::error::{Error, Result};
use crate::linalg::SpdSolver;
use crate::mesh::{signed_area, SpaceTimeMesh, Triangulation};
use crate::quadrature::{IntervalRule, TriangleRule};
use crate::sparse::SparseMatrix;
use crate::spaces::{ControlField, NodeLayout, StateField};

pub type Matrix3 = [[f64; 3]; 3];
pub type Matrix2 = [[f64; 2]; 2];

/// Gradients of the three barycentric coordinates, constant on the triangle.
pub fn barycentric_gradients(p: &[[f64; 2]; 3]) -> [[f64; 2]; 3] {
    let two_area = 2.0 * signed_area(p);
    std::array::from_fn(|i| {
        let (a, b) = (p[(i + 1) % 3], p[(i + 2) % 3]);
        [(a[1] - b[1]) / two_area, (b[0] - a[0]) / two_area]
    })
}

pub fn element_stiffness(p: &[[f64; 2]; 3]) -> Matrix3 {
    let area = signed_area(p);
    let g = barycentric_gradients(p);
    std::array::from_fn(|i| std::array::from_fn(|j| area * (g[i][0] * g[j][0] + g[i][1] * g[j][1])))
}

pub fn element_mass(area: f64) -> Matrix3 {
    std::array::from_fn(|i| std::array::from_fn(|j| if i == j { area / 6.0 } else { area / 12.0 }))
}

/// P1 mass matrix on an interval of length `k`.
pub fn time_mass(k: f64) -> Matrix2 {
    [[k / 3.0, k / 6.0], [k / 6.0, k / 3.0]]
}

/// P1 stiffness matrix on an interval of length `k`.
pub fn time_stiffness(k: f64) -> Matrix2 {
    [[1.0 / k, -1.0 / k], [-1.0 / k, 1.0 / k]]
}

/// Mass and stiffness matrices over all vertices.
pub fn assemble_mass_stiffness(tri: &Triangulation) -> Result<(SparseMatrix, SparseMatrix)> {
    let mut mass = Vec::with_capacity(9 * tri.num_triangles());
    let mut stiff = Vec::with_capacity(9 * tri.num_triangles());
    for (index, verts) in tri.triangles().iter().enumerate() {
        let p = tri.triangle_points(index);
        let area = signed_area(&p);
        if !(area > 0.0) {
            return Err(Error::DegenerateTriangle { index, area });
        }
        let (me, ke) = (element_mass(area), element_stiffness(&p));
        for a in 0..3 {
            for b in 0..3 {
                mass.push((verts[a], verts[b], me[a][b]));
                stiff.push((verts[a], verts[b], ke[a][b]));
            }
        }
    }
    let n = tri.num_vertices();
    Ok((SparseMatrix::from_triplets(n, n, mass), SparseMatrix::from_triplets(n, n, stiff)))
}

/// `(diag, off)` of a symmetric tridiagonal matrix.
type Tridiagonal = (Vec<f64>, Vec<f64>);

/// Tridiagonal 1-D mass and stiffness over the interior levels `1..M-1`,
/// returned as `(diag, off)` pairs where `off[l]` couples levels `l` and `l+1`.
fn interior_time_matrices(mesh: &SpaceTimeMesh) -> (Tridiagonal, Tridiagonal) {
    let steps = mesh.steps();
    let levels = steps.saturating_sub(1);
    let (mut md, mut sd) = (vec![0.0; levels], vec![0.0; levels]);
    let (mut mo, mut so) = (vec![0.0; levels.saturating_sub(1)], vec![0.0; levels.saturating_sub(1)]);
    for m in 1..=steps {
        let k = mesh.time.step(m);
        let (tm, ts) = (time_mass(k), time_stiffness(k));
        // slab m joins levels m-1 and m; levels 0 and M are eliminated
        let (left, right) = (m - 1, m);
        if left >= 1 {
            md[left - 1] += tm[0][0];
            sd[left - 1] += ts[0][0];
        }
        if right <= levels {
            md[right - 1] += tm[1][1];
            sd[right - 1] += ts[1][1];
        }
        if left >= 1 && right <= levels {
            mo[left - 1] += tm[0][1];
            so[left - 1] += ts[0][1];
        }
    }
    ((md, mo), (sd, so))
}

/// Space-time H1 seminorm matrix on the control coefficients,
/// `A = S (x) M_t + M (x) S_t` with the end levels eliminated. Kept in factored
/// form and applied level by level.
#[derive(Debug, Clone)]
pub struct ControlSeminorm {
    nodes: usize,
    time_mass: (Vec<f64>, Vec<f64>),
    time_stiffness: (Vec<f64>, Vec<f64>),
    diagonal: Vec<f64>,
}

impl ControlSeminorm {
    pub fn new(mesh: &SpaceTimeMesh, mass: &SparseMatrix, stiffness: &SparseMatrix) -> Self {
        let (time_mass, time_stiffness) = interior_time_matrices(mesh);
        let nodes = mesh.num_nodes();
        let (md, sd) = (mass.diagonal(), stiffness.diagonal());
        let diagonal = (0..time_mass.0.len())
            .flat_map(|l| {
                let (tm, ts) = (time_mass.0[l], time_stiffness.0[l]);
                sd.iter().zip(&md).map(move |(s, m)| s * tm + m * ts).collect::<Vec<_>>()
            })
            .collect();
        Self { nodes, time_mass, time_stiffness, diagonal }
    }

    pub fn dim(&self) -> usize {
        self.diagonal.len()
    }

    pub fn diagonal(&self) -> &[f64] {
        &self.diagonal
    }

    /// `y = A x` with the spatial matrices supplied by the caller.
    pub fn apply(&self, mass: &SparseMatrix, stiffness: &SparseMatrix, x: &[f64], y: &mut [f64]) {
        let n = self.nodes;
        let levels = self.time_mass.0.len();
        let sx: Vec<Vec<f64>> = x.chunks(n).map(|c| stiffness.mul_vec(c)).collect();
        let mx: Vec<Vec<f64>> = x.chunks(n).map(|c| mass.mul_vec(c)).collect();
        for l in 0..levels {
            let out = &mut y[l * n..(l + 1) * n];
            let (tm, ts) = (self.time_mass.0[l], self.time_stiffness.0[l]);
            for i in 0..n {
                out[i] = tm * sx[l][i] + ts * mx[l][i];
            }
            if l > 0 {
                let (tm, ts) = (self.time_mass.1[l - 1], self.time_stiffness.1[l - 1]);
                for i in 0..n {
                    out[i] += tm * sx[l - 1][i] + ts * mx[l - 1][i];
                }
            }
            if l + 1 < levels {
                let (tm, ts) = (self.time_mass.1[l], self.time_stiffness.1[l]);
                for i in 0..n {
                    out[i] += tm * sx[l + 1][i] + ts * mx[l + 1][i];
                }
            }
        }
    }
}

/// Assembled space-time seminorm matrix (without the regularization weight).
pub fn assemble_control_seminorm(mesh: &SpaceTimeMesh) -> Result<SparseMatrix> {
    let (mass, stiffness) = assemble_mass_stiffness(&mesh.triangulation)?;
    let ((md, mo), (sd, so)) = interior_time_matrices(mesh);
    let n = mesh.num_nodes();
    let levels = md.len();
    let mut triplets = Vec::new();
    let mut block = |la: usize, lb: usize, tm: f64, ts: f64| {
        for i in 0..n {
            for (j, s) in stiffness.row(i) {
                triplets.push((la * n + i, lb * n + j, s * tm));
            }
            for (j, m) in mass.row(i) {
                triplets.push((la * n + i, lb * n + j, m * ts));
            }
        }
    };
    for l in 0..levels {
        block(l, l, md[l], sd[l]);
        if l + 1 < levels {
            block(l, l + 1, mo[l], so[l]);
            block(l + 1, l, mo[l], so[l]);
        }
    }
    Ok(SparseMatrix::from_triplets(levels * n, levels * n, triplets))
}

/// Options for the per-slab linear solves.
#[derive(Debug, Clone, Copy)]
pub struct SlabSolverOptions {
    /// Systems with fewer unknowns are factored directly.
    pub direct_limit: usize,
    pub rel_tol: f64,
}

impl Default for SlabSolverOptions {
    fn default() -> Self {
        Self { direct_limit: 20_000, rel_tol: 1e-12 }
    }
}

/// All mesh-dependent operators needed by the forward and adjoint sweeps.
#[derive(Debug, Clone)]
pub struct Discretization {
    pub mesh: SpaceTimeMesh,
    pub layout: NodeLayout,
    /// Mass and stiffness over all vertices.
    pub mass: SparseMatrix,
    pub stiffness: SparseMatrix,
    /// Interior-interior blocks.
    pub mass_ii: SparseMatrix,
    pub stiffness_ii: SparseMatrix,
    pub seminorm: ControlSeminorm,
    solvers: Vec<(f64, SpdSolver)>,
    slab_solver: Vec<usize>,
}

impl Discretization {
    pub fn new(mesh: SpaceTimeMesh, options: SlabSolverOptions) -> Result<Self> {
        let layout = NodeLayout::new(&mesh.triangulation);
        let (mass, stiffness) = assemble_mass_stiffness(&mesh.triangulation)?;
        let mass_ii = mass.submatrix(layout.interior(), layout.interior());
        let stiffness_ii = stiffness.submatrix(layout.interior(), layout.interior());
        let seminorm = ControlSeminorm::new(&mesh, &mass, &stiffness);

        // one factorization per distinct step length
        let mut solvers: Vec<(f64, SpdSolver)> = Vec::new();
        let mut slab_solver = Vec::with_capacity(mesh.steps());
        for m in 1..=mesh.steps() {
            let k = mesh.time.step(m);
            let found = solvers.iter().position(|(kk, _)| (kk - k).abs() <= 1e-14 * k);
            let idx = match found {
                Some(i) => i,
                None => {
                    let system = SparseMatrix::linear_combination(1.0, &mass_ii, k, &stiffness_ii);
                    solvers.push((k, SpdSolver::new(system, options.direct_limit, options.rel_tol)?));
                    solvers.len() - 1
                }
            };
            slab_solver.push(idx);
        }
        Ok(Self { mesh, layout, mass, stiffness, mass_ii, stiffness_ii, seminorm, solvers, slab_solver })
    }

    pub fn steps(&self) -> usize {
        self.mesh.steps()
    }

    pub fn num_nodes(&self) -> usize {
        self.mesh.num_nodes()
    }

    pub fn num_interior(&self) -> usize {
        self.layout.num_interior()
    }

    pub fn step(&self, m: usize) -> f64 {
        self.mesh.time.step(m)
    }

    /// Solves `(M + k_m S) x = rhs` on interior vertices in place.
    pub fn solve_slab(&self, m: usize, rhs: &mut [f64]) -> Result<()> {
        self.solvers[self.slab_solver[m - 1]].1.solve_in_place(rhs, m)
    }

    /// Number of distinct slab factorizations held.
    pub fn num_factorizations(&self) -> usize {
        self.solvers.len()
    }

    /// `y = A x` for the control seminorm.
    pub fn apply_seminorm(&self, x: &[f64], y: &mut [f64]) {
        self.seminorm.apply(&self.mass, &self.stiffness, x, y);
    }

    fn check_slab(&self, m: usize) -> Result<()> {
        if m == 0 || m > self.steps() {
            return Err(Error::SlabOutOfRange { slab: m, steps: self.steps() });
        }
        Ok(())
    }
}

/// `B(q, v)` tested with the interior hat functions on slab `m`:
/// `M (q_m - q_{m-1}) + (k_m / 2) S (q_m + q_{m-1})`, restricted to interior rows.
pub fn assemble_coupling(disc: &Discretization, q: &ControlField, m: usize) -> Result<Vec<f64>> {
    disc.check_slab(m)?;
    q.check_mesh(&disc.mesh)?;
    let (prev, cur) = (q.level_or_zero(m - 1), q.level_or_zero(m));
    let diff: Vec<f64> = cur.iter().zip(prev.iter()).map(|(a, b)| a - b).collect();
    let sum: Vec<f64> = cur.iter().zip(prev.iter()).map(|(a, b)| a + b).collect();
    let mut full = disc.mass.mul_vec(&diff);
    disc.stiffness.mul_vec_add(0.5 * disc.step(m), &sum, &mut full);
    Ok(disc.layout.restrict(&full))
}

/// Space-time load vectors of a function against the nodal hat functions,
/// split by the two linear time shape functions of each slab.
#[derive(Debug, Clone)]
pub struct SlabLoads {
    /// `left[m-1][i] = int_{I_m} int g phi_i (t_m - t)/k_m`
    pub left: Vec<Vec<f64>>,
    /// `right[m-1][i] = int_{I_m} int g phi_i (t - t_{m-1})/k_m`
    pub right: Vec<Vec<f64>>,
    /// `int_I int g^2`
    pub norm_sq: f64,
}

impl SlabLoads {
    pub fn new<G>(mesh: &SpaceTimeMesh, g: G) -> Self
    where
        G: Fn(f64, f64, f64) -> f64,
    {
        let tri = &mesh.triangulation;
        let (space, time) = (TriangleRule::degree4(), IntervalRule::gauss2());
        let n = tri.num_vertices();
        let mut left = Vec::with_capacity(mesh.steps());
        let mut right = Vec::with_capacity(mesh.steps());
        let mut norm_sq = 0.0;
        for m in 1..=mesh.steps() {
            let (t0, t1) = (mesh.time.points()[m - 1], mesh.time.points()[m]);
            let (mut l, mut r) = (vec![0.0; n], vec![0.0; n]);
            for (t, wt) in time.on(t0, t1) {
                let s = (t - t0) / (t1 - t0);
                for (ti, verts) in tri.triangles().iter().enumerate() {
                    let p = tri.triangle_points(ti);
                    let area = signed_area(&p);
                    for (x, w, lambda) in space.physical_points(&p) {
                        let gv = g(x[0], x[1], t);
                        let weight = wt * w * area * gv;
                        norm_sq += wt * w * area * gv * gv;
                        for a in 0..3 {
                            l[verts[a]] += weight * lambda[a] * (1.0 - s);
                            r[verts[a]] += weight * lambda[a] * s;
                        }
                    }
                }
            }
            left.push(l);
            right.push(r);
        }
        Self { left, right, norm_sq }
    }

    /// Load against the slab-constant test functions, `left + right`, on all vertices.
    pub fn constant(&self, m: usize) -> Vec<f64> {
        self.left[m - 1].iter().zip(&self.right[m - 1]).map(|(a, b)| a + b).collect()
    }
}

/// `int_{I_m} int f phi_i` for interior vertices `i`.
pub fn assemble_source<F>(disc: &Discretization, f: F, m: usize) -> Result<Vec<f64>>
where
    F: Fn(f64, f64, f64) -> f64,
{
    disc.check_slab(m)?;
    let tri = &disc.mesh.triangulation;
    let (space, time) = (TriangleRule::degree4(), IntervalRule::gauss2());
    let (t0, t1) = (disc.mesh.time.points()[m - 1], disc.mesh.time.points()[m]);
    let mut full = vec![0.0; tri.num_vertices()];
    for (t, wt) in time.on(t0, t1) {
        for (ti, verts) in tri.triangles().iter().enumerate() {
            let p = tri.triangle_points(ti);
            let area = signed_area(&p);
            for (x, w, lambda) in space.physical_points(&p) {
                let weight = wt * w * area * f(x[0], x[1], t);
                for a in 0..3 {
                    full[verts[a]] += weight * lambda[a];
                }
            }
        }
    }
    Ok(disc.layout.restrict(&full))
}

/// Tracking load `int_{I_m} (w_m + q(t) - u_d) phi_i` on interior vertices,
/// with the discrete part integrated exactly and `u_d` by quadrature.
pub fn assemble_tracking<G>(
    disc: &Discretization,
    u_d: G,
    w: &StateField,
    q: &ControlField,
    m: usize,
) -> Result<Vec<f64>>
where
    G: Fn(f64, f64, f64) -> f64,
{
    disc.check_slab(m)?;
    let data = assemble_source(disc, u_d, m)?;
    let mut out = discrete_tracking_load(disc, w.slab(m), q, m);
    for (o, d) in out.iter_mut().zip(&data) {
        *o -= d;
    }
    Ok(out)
}

/// `int_{I_m} (w_m + q(t)) phi_i` on interior vertices, exact.
pub(crate) fn discrete_tracking_load(disc: &Discretization, w_m: &[f64], q: &ControlField, m: usize) -> Vec<f64> {
    let k = disc.step(m);
    let (prev, cur) = (q.level_or_zero(m - 1), q.level_or_zero(m));
    let mut z = disc.layout.extend(w_m);
    for (zi, (a, b)) in z.iter_mut().zip(prev.iter().zip(cur.iter())) {
        *zi = k * *zi + 0.5 * k * (a + b);
    }
    disc.layout.restrict(&disc.mass.mul_vec(&z))
}

/// Spatial L2 projection onto the interior P1 space.
pub fn l2_project_initial<F>(disc: &Discretization, u0: F) -> Result<Vec<f64>>
where
    F: Fn(f64, f64) -> f64,
{
    let tri = &disc.mesh.triangulation;
    let rule = TriangleRule::degree4();
    let mut full = vec![0.0; tri.num_vertices()];
    for (ti, verts) in tri.triangles().iter().enumerate() {
        let p = tri.triangle_points(ti);
        let area = signed_area(&p);
        for (x, w, lambda) in rule.physical_points(&p) {
            let weight = w * area * u0(x[0], x[1]);
            for a in 0..3 {
                full[verts[a]] += weight * lambda[a];
            }
        }
    }
    let rhs = disc.layout.restrict(&full);
    if rhs.is_empty() {
        return Ok(rhs);
    }
    let solver = SpdSolver::new(disc.mass_ii.clone(), 20_000, 1e-13)?;
    let mut c = rhs;
    solver.solve_in_place(&mut c, 0)?;
    Ok(c)
}

/// `B(v, w)` for two discrete states evaluated with dense matrices:
/// `sum_m (v_m - v_{m-1}, w_m) + k_m (grad v_m, grad w_m)` with `v_0 = 0`.
pub fn state_form_dense(disc: &Discretization, v: &StateField, w: &StateField) -> f64 {
    let mass = disc.mass_ii.to_dense();
    let stiff = disc.stiffness_ii.to_dense();
    let form = |a: &[Vec<f64>], x: &[f64], y: &[f64]| -> f64 {
        a.iter().zip(x).map(|(row, xi)| xi * row.iter().zip(y).map(|(aij, yj)| aij * yj).sum::<f64>()).sum()
    };
    let zero = vec![0.0; disc.num_interior()];
    (1..=disc.steps())
        .map(|m| {
            let prev = if m == 1 { &zero[..] } else { v.slab(m - 1) };
            let jump: Vec<f64> = v.slab(m).iter().zip(prev).map(|(a, b)| a - b).collect();
            form(&mass, &jump, w.slab(m)) + disc.step(m) * form(&stiff, v.slab(m), w.slab(m))
        })
        .sum()
}

/// `sum_m k_m (grad v_m, grad v_m)` with a dense stiffness matrix.
pub fn gradient_energy_dense(disc: &Discretization, v: &StateField) -> f64 {
    let stiff = disc.stiffness_ii.to_dense();
    (1..=disc.steps())
        .map(|m| {
            let x = v.slab(m);
            disc.step(m)
                * stiff.iter().zip(x).map(|(row, xi)| xi * row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>()).sum::<f64>()
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn reference_element_matrices() {
        let k = element_stiffness(&[[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]);
        let expected = [[1.0, -0.5, -0.5], [-0.5, 0.5, 0.0], [-0.5, 0.0, 0.5]];
        for i in 0..3 {
            for j in 0..3 {
                assert_abs_diff_eq!(k[i][j], expected[i][j], epsilon = 1e-14);
            }
        }
        let m = element_mass(0.5);
        assert_abs_diff_eq!(m[0][0], 1.0 / 12.0, epsilon = 1e-16);
        assert_abs_diff_eq!(m[0][1], 1.0 / 24.0, epsilon = 1e-16);
    }

    #[test]
    fn mass_row_sums() {
        let tri = crate::mesh::unit_square_mesh(5).unwrap();
        let (m, s) = assemble_mass_stiffness(&tri).unwrap();
        let ones = vec![1.0; tri.num_vertices()];
        assert_abs_diff_eq!(m.mul_vec(&ones).iter().sum::<f64>(), 1.0, epsilon = 1e-14);
        assert!(s.mul_vec(&ones).iter().all(|v| v.abs() < 1e-13));
        assert!(m.max_asymmetry() < 1e-16 && s.max_asymmetry() < 1e-15);
    }

    #[test]
    fn coupling_slab_range() {
        let disc = Discretization::new(SpaceTimeMesh::unit(2, 2).unwrap(), Default::default()).unwrap();
        let q = ControlField::for_mesh(&disc.mesh);
        assert!(matches!(assemble_coupling(&disc, &q, 0), Err(Error::SlabOutOfRange { .. })));
        assert!(matches!(assemble_coupling(&disc, &q, 3), Err(Error::SlabOutOfRange { .. })));
        assert_eq!(assemble_coupling(&disc, &q, 2).unwrap(), vec![0.0]);
    }

    #[test]
    fn seminorm_operator_matches_assembled() {
        let mesh = SpaceTimeMesh::unit(3, 5).unwrap();
        let disc = Discretization::new(mesh.clone(), Default::default()).unwrap();
        let a = assemble_control_seminorm(&mesh).unwrap();
        assert!(a.max_asymmetry() < 1e-15);
        let x: Vec<f64> = (0..a.cols()).map(|i| ((i * 7) % 11) as f64 - 5.0).collect();
        let mut y = vec![0.0; x.len()];
        disc.apply_seminorm(&x, &mut y);
        for (p, q) in y.iter().zip(a.mul_vec(&x)) {
            assert_abs_diff_eq!(*p, q, epsilon = 1e-13);
        }
        for (p, q) in disc.seminorm.diagonal().iter().zip(a.diagonal()) {
            assert_abs_diff_eq!(*p, q, epsilon = 1e-15);
        }
        assert!(crate::linalg::BandCholesky::factor(&a).is_ok());
    }

    #[test]
    fn single_factorization_for_uniform_steps() {
        let disc = Discretization::new(SpaceTimeMesh::unit(3, 7).unwrap(), Default::default()).unwrap();
        assert_eq!(disc.num_factorizations(), 1);
    }

    #[test]
    fn source_of_constant() {
        let disc = Discretization::new(SpaceTimeMesh::unit(4, 4).unwrap(), Default::default()).unwrap();
        let load = assemble_source(&disc, |_, _, _| 1.0, 2).unwrap();
        let row_sums = disc.layout.restrict(&disc.mass.mul_vec(&vec![1.0; disc.num_nodes()]));
        for (a, b) in load.iter().zip(&row_sums) {
            assert_abs_diff_eq!(*a, 0.25 * b, epsilon = 1e-15);
        }
    }
}
