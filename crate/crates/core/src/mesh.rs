//! Structured triangulations of the unit square, time partitions and the
//! prismatic space-time mesh built from their product.
//!
//! Spatial vertices are numbered lexicographically by `(y, x)`: vertex
//! `(i, j)` of an `n x n` grid has index `j * (n + 1) + i`. Every grid cell is
//! split along the diagonal from its lower-left to its upper-right corner.

use std::collections::HashMap;
use std::io::Write;

use crate::error::{Error, Result};

/// Conforming triangulation of a polygon in the plane.
#[derive(Debug, Clone, PartialEq)]
pub struct Triangulation {
    vertices: Vec<[f64; 2]>,
    triangles: Vec<[usize; 3]>,
    boundary: Vec<bool>,
    h: f64,
    /// Subdivisions per side when built by [`unit_square_mesh`].
    subdivisions: Option<usize>,
}

impl Triangulation {
    /// Builds a triangulation from raw data and validates orientation and
    /// edge connectivity. Boundary vertices are the endpoints of edges that
    /// belong to exactly one triangle.
    pub fn new(vertices: Vec<[f64; 2]>, triangles: Vec<[usize; 3]>) -> Result<Self> {
        if triangles.is_empty() {
            return Err(Error::InvalidArgument("triangulation has no triangles".into()));
        }
        let mut h: f64 = 0.0;
        for (index, tri) in triangles.iter().enumerate() {
            if tri.iter().any(|&v| v >= vertices.len()) {
                return Err(Error::InvalidArgument(format!(
                    "triangle {index} references a missing vertex"
                )));
            }
            let p = tri.map(|v| vertices[v]);
            let area = signed_area(&p);
            if area <= 0.0 {
                return Err(Error::DegenerateTriangle { index, area });
            }
            for e in 0..3 {
                let (a, b) = (p[e], p[(e + 1) % 3]);
                h = h.max(((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt());
            }
        }

        let mut edge_count: HashMap<(usize, usize), usize> = HashMap::new();
        for tri in &triangles {
            for e in 0..3 {
                let (a, b) = (tri[e], tri[(e + 1) % 3]);
                *edge_count.entry((a.min(b), a.max(b))).or_default() += 1;
            }
        }
        let mut boundary = vec![false; vertices.len()];
        for (&(a, b), &count) in &edge_count {
            match count {
                1 => {
                    boundary[a] = true;
                    boundary[b] = true;
                }
                2 => {}
                _ => {
                    return Err(Error::InvalidArgument(format!(
                        "edge ({a}, {b}) is shared by {count} triangles"
                    )))
                }
            }
        }

        Ok(Self {
            vertices,
            triangles,
            boundary,
            h,
            subdivisions: None,
        })
    }

    pub fn vertices(&self) -> &[[f64; 2]] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn boundary_flags(&self) -> &[bool] {
        &self.boundary
    }

    pub fn is_boundary(&self, vertex: usize) -> bool {
        self.boundary[vertex]
    }

    /// Maximum triangle diameter.
    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn subdivisions(&self) -> Option<usize> {
        self.subdivisions
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn triangle_points(&self, t: usize) -> [[f64; 2]; 3] {
        self.triangles[t].map(|v| self.vertices[v])
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        signed_area(&self.triangle_points(t))
    }

    /// Indices of vertices not on the boundary, in increasing order.
    pub fn interior_vertices(&self) -> Vec<usize> {
        (0..self.vertices.len()).filter(|&v| !self.boundary[v]).collect()
    }

    /// Finds a triangle containing `(x, y)` and the barycentric coordinates of
    /// the point in it.
    pub fn locate(&self, x: f64, y: f64) -> Option<(usize, [f64; 3])> {
        const TOL: f64 = 1e-12;
        self.triangles.iter().enumerate().find_map(|(t, _)| {
            let lambda = barycentric(&self.triangle_points(t), x, y);
            lambda.iter().all(|&l| l >= -TOL).then_some((t, lambda))
        })
    }

    /// Writes one vertex per line as `x y flag`, then one triangle per line as
    /// `i j k`. Each block is preceded by a `#` comment with its length.
    pub fn write_text<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "# vertices {}", self.vertices.len())?;
        for (p, &b) in self.vertices.iter().zip(&self.boundary) {
            writeln!(out, "{} {} {}", p[0], p[1], u8::from(b))?;
        }
        writeln!(out, "# triangles {}", self.triangles.len())?;
        for t in &self.triangles {
            writeln!(out, "{} {} {}", t[0], t[1], t[2])?;
        }
        Ok(())
    }
}

pub(crate) fn signed_area(p: &[[f64; 2]; 3]) -> f64 {
    0.5 * ((p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]))
}

pub(crate) fn barycentric(p: &[[f64; 2]; 3], x: f64, y: f64) -> [f64; 3] {
    let det = 2.0 * signed_area(p);
    let l1 = ((p[2][0] - p[0][0]) * (y - p[0][1]) - (x - p[0][0]) * (p[2][1] - p[0][1])) / -det;
    let l2 = ((p[1][0] - p[0][0]) * (y - p[0][1]) - (x - p[0][0]) * (p[1][1] - p[0][1])) / det;
    [1.0 - l1 - l2, l1, l2]
}

/// Right-diagonal triangulation of the unit square with `n` cells per side.
pub fn unit_square_mesh(n: usize) -> Result<Triangulation> {
    if n == 0 {
        return Err(Error::InvalidArgument("n must be at least 1".into()));
    }
    let width = 1.0 / n as f64;
    let vertices = (0..=n)
        .flat_map(|j| (0..=n).map(move |i| [i as f64 * width, j as f64 * width]))
        .map(|[x, y]| [x.min(1.0), y.min(1.0)])
        .collect::<Vec<_>>();
    let id = |i: usize, j: usize| j * (n + 1) + i;
    let mut triangles = Vec::with_capacity(2 * n * n);
    for j in 0..n {
        for i in 0..n {
            let (v00, v10, v01, v11) = (id(i, j), id(i + 1, j), id(i, j + 1), id(i + 1, j + 1));
            triangles.push([v00, v10, v11]);
            triangles.push([v00, v11, v01]);
        }
    }
    let mut tri = Triangulation::new(vertices, triangles)?;
    tri.subdivisions = Some(n);
    Ok(tri)
}

/// Partition `0 = t_0 < t_1 < ... < t_M = T` of the time interval.
#[derive(Debug, Clone, PartialEq)]
pub struct TimePartition {
    points: Vec<f64>,
    k: f64,
}

impl TimePartition {
    pub fn new(points: Vec<f64>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::InvalidArgument("time partition needs at least one step".into()));
        }
        if points[0] != 0.0 {
            return Err(Error::InvalidArgument("time partition must start at 0".into()));
        }
        if points.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidArgument("time points must be strictly increasing".into()));
        }
        let k = points.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
        Ok(Self { points, k })
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    /// Number of steps `M`.
    pub fn steps(&self) -> usize {
        self.points.len() - 1
    }

    pub fn final_time(&self) -> f64 {
        self.points[self.points.len() - 1]
    }

    /// Maximum step length.
    pub fn k(&self) -> f64 {
        self.k
    }

    /// Length of slab `m` (1-based), i.e. of `(t_{m-1}, t_m]`.
    pub fn step(&self, m: usize) -> f64 {
        self.points[m] - self.points[m - 1]
    }

    /// The slab `m` with `t` in `(t_{m-1}, t_m]`.
    pub fn slab_of(&self, t: f64) -> Option<usize> {
        if t <= 0.0 || t > self.final_time() {
            return None;
        }
        Some(self.points.partition_point(|&p| p < t))
    }
}

pub fn uniform_time_partition(steps: usize, final_time: f64) -> Result<TimePartition> {
    if steps == 0 {
        return Err(Error::InvalidArgument("number of time steps must be at least 1".into()));
    }
    if !(final_time > 0.0) {
        return Err(Error::InvalidArgument(format!("final time must be positive, got {final_time}")));
    }
    let points = (0..=steps)
        .map(|m| if m == steps { final_time } else { m as f64 * final_time / steps as f64 })
        .collect();
    TimePartition::new(points)
}

/// Product mesh of prisms `K x I_m`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpaceTimeMesh {
    pub triangulation: Triangulation,
    pub time: TimePartition,
}

impl SpaceTimeMesh {
    pub fn new(triangulation: Triangulation, time: TimePartition) -> Self {
        let mesh = Self { triangulation, time };
        let ratio = mesh.time.k() / mesh.cell_width();
        if !(0.25..=4.0).contains(&ratio) {
            log::warn!("prism aspect ratio k/h = {ratio:.3} is outside [0.25, 4]");
        }
        mesh
    }

    /// Unit square with `n` subdivisions per side over `(0, 1)` with `steps`
    /// uniform time steps.
    pub fn unit(n: usize, steps: usize) -> Result<Self> {
        Ok(Self::new(unit_square_mesh(n)?, uniform_time_partition(steps, 1.0)?))
    }

    /// Mesh parameter used for reporting: the axis-aligned cell width `1/n`
    /// for structured meshes, the maximum diameter otherwise.
    pub fn cell_width(&self) -> f64 {
        match self.triangulation.subdivisions() {
            Some(n) => 1.0 / n as f64,
            None => self.triangulation.h(),
        }
    }

    pub fn k(&self) -> f64 {
        self.time.k()
    }

    /// Control discretization parameter `sqrt(h^2 + k^2)` with `h` the cell width.
    pub fn sigma(&self) -> f64 {
        self.cell_width().hypot(self.k())
    }

    pub fn num_prisms(&self) -> usize {
        self.triangulation.num_triangles() * self.time.steps()
    }

    pub fn steps(&self) -> usize {
        self.time.steps()
    }

    pub fn num_nodes(&self) -> usize {
        self.triangulation.num_vertices()
    }
}

/// Uniform refinement of a structured unit-square mesh with uniform steps.
pub fn refine(
    mesh: &SpaceTimeMesh,
    spatial_factor: usize,
    temporal_factor: usize,
) -> Result<SpaceTimeMesh> {
    if spatial_factor == 0 || temporal_factor == 0 {
        return Err(Error::InvalidArgument("refinement factors must be at least 1".into()));
    }
    let n = mesh.triangulation.subdivisions().ok_or_else(|| {
        Error::InvalidArgument("only structured unit-square meshes can be refined".into())
    })?;
    Ok(SpaceTimeMesh::new(
        unit_square_mesh(n * spatial_factor)?,
        uniform_time_partition(mesh.steps() * temporal_factor, mesh.time.final_time())?,
    ))
}
