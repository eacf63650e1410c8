//! Closed, oriented triangle meshes and the builtin test surfaces.
//!
//! A [`Hypersurface`] pairs vertex positions with an immutable, shared
//! [`Topology`]. Moving vertices (a flow step, a rescaling) reuses the
//! topology, so validation and adjacency construction happen once per mesh.

use std::collections::HashMap;
use std::sync::Arc;

use nalgebra::Vector3;

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;

/// Relative area threshold: faces below `DEGENERATE_REL * diag^2` are rejected.
pub const DEGENERATE_REL: f64 = 1e-12;

/// Connectivity of a closed oriented triangle mesh.
#[derive(Debug, Clone)]
pub struct Topology {
    faces: Vec<[usize; 3]>,
    vertex_faces: Vec<Vec<usize>>,
    one_ring: Vec<Vec<usize>>,
    two_ring: Vec<Vec<usize>>,
}

impl Topology {
    fn build(vertex_count: usize, faces: Vec<[usize; 3]>) -> Result<Self> {
        if vertex_count < 4 {
            return Err(Error::TooFewVertices(vertex_count));
        }
        let mut directed: HashMap<(usize, usize), usize> = HashMap::with_capacity(faces.len() * 3);
        for (fi, f) in faces.iter().enumerate() {
            for c in 0..3 {
                let (a, b) = (f[c], f[(c + 1) % 3]);
                if a >= vertex_count || b >= vertex_count {
                    return Err(Error::NonManifold(format!(
                        "face {fi} references a missing vertex"
                    )));
                }
                if a == b {
                    return Err(Error::NonManifold(format!("face {fi} repeats vertex {a}")));
                }
                if directed.insert((a, b), fi).is_some() {
                    return Err(Error::NonManifold(format!(
                        "directed edge ({a}, {b}) used twice; winding is inconsistent or the edge is non-manifold"
                    )));
                }
            }
        }
        for &(a, b) in directed.keys() {
            if !directed.contains_key(&(b, a)) {
                return Err(Error::OpenMesh(a.min(b), a.max(b)));
            }
        }

        let mut vertex_faces = vec![Vec::new(); vertex_count];
        let mut one_ring = vec![Vec::new(); vertex_count];
        for (fi, f) in faces.iter().enumerate() {
            for c in 0..3 {
                vertex_faces[f[c]].push(fi);
                one_ring[f[c]].push(f[(c + 1) % 3]);
                one_ring[f[c]].push(f[(c + 2) % 3]);
            }
        }
        for (v, ring) in one_ring.iter_mut().enumerate() {
            ring.sort_unstable();
            ring.dedup();
            if ring.is_empty() {
                return Err(Error::NonManifold(format!(
                    "vertex {v} is not referenced by any face"
                )));
            }
        }
        let two_ring = (0..vertex_count)
            .map(|v| {
                let mut ring: Vec<usize> = one_ring[v]
                    .iter()
                    .flat_map(|&w| one_ring[w].iter().copied())
                    .chain(one_ring[v].iter().copied())
                    .filter(|&w| w != v)
                    .collect();
                ring.sort_unstable();
                ring.dedup();
                ring
            })
            .collect();

        Ok(Self {
            faces,
            vertex_faces,
            one_ring,
            two_ring,
        })
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }

    pub fn vertex_count(&self) -> usize {
        self.one_ring.len()
    }

    pub fn vertex_faces(&self, v: usize) -> &[usize] {
        &self.vertex_faces[v]
    }

    pub fn one_ring(&self, v: usize) -> &[usize] {
        &self.one_ring[v]
    }

    /// Vertices within two edges of `v`, excluding `v`.
    pub fn two_ring(&self, v: usize) -> &[usize] {
        &self.two_ring[v]
    }
}

/// A triangulated closed surface embedded in R^3.
#[derive(Debug, Clone)]
pub struct Hypersurface {
    vertices: Vec<Vec3>,
    topology: Arc<Topology>,
}

impl Hypersurface {
    /// Validates and builds a mesh. Faces are reoriented as a whole when the
    /// enclosed signed volume is negative, so normals always point outward.
    pub fn new(vertices: Vec<Vec3>, mut faces: Vec<[usize; 3]>) -> Result<Self> {
        if vertices.iter().any(|p| !p.iter().all(|c| c.is_finite())) {
            return Err(Error::InvalidArgument(
                "non-finite vertex coordinate".into(),
            ));
        }
        let topology = Topology::build(vertices.len(), faces.clone())?;
        let signed_volume: f64 = faces
            .iter()
            .map(|f| vertices[f[0]].dot(&vertices[f[1]].cross(&vertices[f[2]])) / 6.0)
            .sum();
        let topology = if signed_volume < 0.0 {
            for f in faces.iter_mut() {
                f.swap(1, 2);
            }
            Topology::build(vertices.len(), faces)?
        } else {
            topology
        };
        let mesh = Self {
            vertices,
            topology: Arc::new(topology),
        };
        mesh.check_degenerate()?;
        Ok(mesh)
    }

    /// Same topology, new positions. Only the degenerate-face check is repeated.
    pub fn with_positions(&self, vertices: Vec<Vec3>) -> Result<Self> {
        if vertices.len() != self.vertices.len() {
            return Err(Error::InvalidArgument(format!(
                "expected {} positions, got {}",
                self.vertices.len(),
                vertices.len()
            )));
        }
        let mesh = Self {
            vertices,
            topology: Arc::clone(&self.topology),
        };
        mesh.check_degenerate()?;
        Ok(mesh)
    }

    /// Uniformly scaled copy. Scaling preserves validity, so no checks run.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            vertices: self.vertices.iter().map(|p| p * factor).collect(),
            topology: Arc::clone(&self.topology),
        }
    }

    fn check_degenerate(&self) -> Result<()> {
        let diag = self.bounding_box_diagonal();
        let threshold = DEGENERATE_REL * diag * diag;
        for (fi, f) in self.topology.faces.iter().enumerate() {
            let area = triangle_area(
                &self.vertices[f[0]],
                &self.vertices[f[1]],
                &self.vertices[f[2]],
            );
            if !(area > threshold) {
                return Err(Error::DegenerateMesh {
                    face: fi,
                    area,
                    threshold,
                });
            }
        }
        Ok(())
    }

    pub fn vertices(&self) -> &[Vec3] {
        &self.vertices
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        self.topology.faces()
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    /// Intrinsic dimension of a triangle mesh.
    pub fn dimension(&self) -> usize {
        2
    }

    pub fn bounding_box_diagonal(&self) -> f64 {
        let mut lo = Vec3::repeat(f64::INFINITY);
        let mut hi = Vec3::repeat(f64::NEG_INFINITY);
        for p in &self.vertices {
            lo = lo.inf(p);
            hi = hi.sup(p);
        }
        (hi - lo).norm()
    }

    pub fn face_area(&self, f: usize) -> f64 {
        let [a, b, c] = self.topology.faces[f];
        triangle_area(&self.vertices[a], &self.vertices[b], &self.vertices[c])
    }

    pub fn total_area(&self) -> f64 {
        (0..self.faces().len()).map(|f| self.face_area(f)).sum()
    }

    pub fn enclosed_volume(&self) -> f64 {
        self.faces()
            .iter()
            .map(|f| {
                self.vertices[f[0]].dot(&self.vertices[f[1]].cross(&self.vertices[f[2]])) / 6.0
            })
            .sum()
    }

    pub fn centroid(&self) -> Vec3 {
        self.vertices.iter().sum::<Vec3>() / self.vertices.len() as f64
    }

    pub fn min_edge_length(&self) -> f64 {
        let mut min = f64::INFINITY;
        for f in self.faces() {
            for c in 0..3 {
                let l = (self.vertices[f[c]] - self.vertices[f[(c + 1) % 3]]).norm();
                min = min.min(l);
            }
        }
        min
    }

    /// Minimum over faces of `4 sqrt(3) A / (l0^2 + l1^2 + l2^2)`; 1 for equilateral.
    pub fn min_triangle_quality(&self) -> f64 {
        self.faces()
            .iter()
            .map(|f| {
                let (a, b, c) = (
                    self.vertices[f[0]],
                    self.vertices[f[1]],
                    self.vertices[f[2]],
                );
                let sum_sq =
                    (b - a).norm_squared() + (c - b).norm_squared() + (a - c).norm_squared();
                4.0 * 3f64.sqrt() * triangle_area(&a, &b, &c) / sum_sq
            })
            .fold(f64::INFINITY, f64::min)
    }

    /// Mean distance of the vertices from `center`.
    pub fn mean_radius(&self, center: &Vec3) -> f64 {
        self.vertices
            .iter()
            .map(|p| (p - center).norm())
            .sum::<f64>()
            / self.vertices.len() as f64
    }

    /// Coefficient of variation (std / mean) of vertex distances from `center`.
    pub fn radius_variation(&self, center: &Vec3) -> f64 {
        let radii: Vec<f64> = self.vertices.iter().map(|p| (p - center).norm()).collect();
        let mean = radii.iter().sum::<f64>() / radii.len() as f64;
        let var = radii.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / radii.len() as f64;
        var.sqrt() / mean
    }
}

pub fn triangle_area(a: &Vec3, b: &Vec3, c: &Vec3) -> f64 {
    0.5 * (b - a).cross(&(c - a)).norm()
}

/// Subdivided icosahedron projected onto the sphere of the given radius.
/// Level 0 has 12 vertices; level `l` has `10 * 4^l + 2`.
pub fn icosphere(level: u32, radius: f64) -> Result<Hypersurface> {
    let (vertices, faces) = unit_icosphere(level);
    Hypersurface::new(vertices.into_iter().map(|p| p * radius).collect(), faces)
}

/// Axis-aligned ellipsoid with semi-axes `(a, b, c)`, obtained by stretching an icosphere.
pub fn ellipsoid(a: f64, b: f64, c: f64, level: u32) -> Result<Hypersurface> {
    let (vertices, faces) = unit_icosphere(level);
    Hypersurface::new(
        vertices
            .into_iter()
            .map(|p| Vec3::new(a * p.x, b * p.y, c * p.z))
            .collect(),
        faces,
    )
}

/// Torus of revolution about the z axis, major radius `major`, tube radius `minor`,
/// sampled on a `n_major x n_minor` grid.
pub fn torus(major: f64, minor: f64, n_major: usize, n_minor: usize) -> Result<Hypersurface> {
    if n_major < 3 || n_minor < 3 || minor >= major {
        return Err(Error::InvalidArgument(
            "torus needs n >= 3 and minor < major".into(),
        ));
    }
    let mut vertices = Vec::with_capacity(n_major * n_minor);
    for i in 0..n_major {
        let u = std::f64::consts::TAU * i as f64 / n_major as f64;
        for j in 0..n_minor {
            let v = std::f64::consts::TAU * j as f64 / n_minor as f64;
            let ring = major + minor * v.cos();
            vertices.push(Vec3::new(ring * u.cos(), ring * u.sin(), minor * v.sin()));
        }
    }
    let idx = |i: usize, j: usize| (i % n_major) * n_minor + (j % n_minor);
    let mut faces = Vec::with_capacity(2 * n_major * n_minor);
    for i in 0..n_major {
        for j in 0..n_minor {
            let (a, b, c, d) = (idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1));
            faces.push([a, b, c]);
            faces.push([a, c, d]);
        }
    }
    Hypersurface::new(vertices, faces)
}

fn unit_icosphere(level: u32) -> (Vec<Vec3>, Vec<[usize; 3]>) {
    let phi = (1.0 + 5f64.sqrt()) / 2.0;
    let mut vertices: Vec<Vec3> = [
        (-1.0, phi, 0.0),
        (1.0, phi, 0.0),
        (-1.0, -phi, 0.0),
        (1.0, -phi, 0.0),
        (0.0, -1.0, phi),
        (0.0, 1.0, phi),
        (0.0, -1.0, -phi),
        (0.0, 1.0, -phi),
        (phi, 0.0, -1.0),
        (phi, 0.0, 1.0),
        (-phi, 0.0, -1.0),
        (-phi, 0.0, 1.0),
    ]
    .iter()
    .map(|&(x, y, z)| Vec3::new(x, y, z).normalize())
    .collect();
    let mut faces: Vec<[usize; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..level {
        let mut midpoints: HashMap<(usize, usize), usize> = HashMap::new();
        let mut midpoint = |a: usize, b: usize, vertices: &mut Vec<Vec3>| -> usize {
            let key = (a.min(b), a.max(b));
            *midpoints.entry(key).or_insert_with(|| {
                vertices.push(((vertices[a] + vertices[b]) * 0.5).normalize());
                vertices.len() - 1
            })
        };
        let mut next = Vec::with_capacity(faces.len() * 4);
        for [a, b, c] in faces {
            let ab = midpoint(a, b, &mut vertices);
            let bc = midpoint(b, c, &mut vertices);
            let ca = midpoint(c, a, &mut vertices);
            next.extend_from_slice(&[[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        faces = next;
    }
    (vertices, faces)
}
