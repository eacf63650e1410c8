//! Discrete differential geometry on closed triangle meshes.
//!
//! Mean curvature comes from the cotangent Laplace-Beltrami operator applied
//! to the embedding, normalised by mixed Voronoi areas. The shape operator is
//! fitted independently with a local quadric over the 2-ring, and its trace is
//! cross-checked against the Laplacian estimate. Integrals use barycentric
//! lumped area weights, which are exact for constants.

use nalgebra::{Matrix2, SMatrix, SVector, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::{Hypersurface, Vec3};

/// Per-vertex geometric quantities of one mesh state.
#[derive(Debug, Clone)]
pub struct GeometryCache {
    /// Outward unit vertex normals, corrected by the local quadric fit.
    pub normals: Vec<Vec3>,
    /// Mean curvature `H = k1 + k2`, positive on spheres.
    pub mean_curvature: Vec<f64>,
    /// Symmetric shape operator in the orthonormal tangent frame `frames[v]`.
    pub shape_operator: Vec<Matrix2<f64>>,
    /// Tangent frame used by `shape_operator`.
    pub frames: Vec<(Vec3, Vec3)>,
    /// Principal curvatures `(min, max)`, eigenvalues of the shape operator.
    pub principal: Vec<(f64, f64)>,
    /// Lumped area weights, one third of the incident triangle areas.
    pub area_weights: Vec<f64>,
    /// `|A|^2 = k1^2 + k2^2`.
    pub second_fund_norm_sq: Vec<f64>,
    /// Mixed Voronoi areas used to normalise the cotangent Laplacian.
    pub voronoi_areas: Vec<f64>,
    /// Per-face `[cot at corner 0, cot at corner 1, cot at corner 2]`.
    pub face_cotangents: Vec<[f64; 3]>,
    pub face_areas: Vec<f64>,
    /// Unit face normals.
    pub face_normals: Vec<Vec3>,
}

/// A per-vertex scalar field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalarField {
    pub values: Vec<f64>,
}

impl ScalarField {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "field value at vertex {i} is not finite"
            )));
        }
        Ok(Self { values })
    }

    pub fn constant(len: usize, c: f64) -> Self {
        Self {
            values: vec![c; len],
        }
    }

    /// Evaluates `f` at every vertex position.
    pub fn from_positions(mesh: &Hypersurface, f: impl Fn(&Vec3) -> f64) -> Self {
        Self {
            values: mesh.vertices().iter().map(f).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            values: self.values.iter().copied().map(f).collect(),
        }
    }

    /// Errors with `NegativeField` at the first negative entry.
    pub fn require_nonnegative(&self) -> Result<()> {
        match self.values.iter().position(|&v| v < 0.0) {
            Some(vertex) => Err(Error::NegativeField {
                vertex,
                value: self.values[vertex],
            }),
            None => Ok(()),
        }
    }
}

impl GeometryCache {
    pub fn vertex_count(&self) -> usize {
        self.area_weights.len()
    }

    pub fn total_area(&self) -> f64 {
        self.area_weights.iter().sum()
    }

    pub fn min_mean_curvature(&self) -> f64 {
        self.mean_curvature
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }

    pub fn max_mean_curvature(&self) -> f64 {
        self.mean_curvature
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Index and value of the largest mean curvature.
    pub fn argmax_mean_curvature(&self) -> (usize, f64) {
        self.mean_curvature.iter().copied().enumerate().fold(
            (0, f64::NEG_INFINITY),
            |acc, (i, h)| if h > acc.1 { (i, h) } else { acc },
        )
    }

    pub fn mean_curvature_field(&self) -> ScalarField {
        ScalarField {
            values: self.mean_curvature.clone(),
        }
    }

    /// Copy of the cache for the mesh scaled by `factor`, without recomputation.
    pub fn scaled(&self, factor: f64) -> Self {
        let inv = 1.0 / factor;
        let sq = factor * factor;
        Self {
            normals: self.normals.clone(),
            mean_curvature: self.mean_curvature.iter().map(|h| h * inv).collect(),
            shape_operator: self.shape_operator.iter().map(|s| s * inv).collect(),
            frames: self.frames.clone(),
            principal: self
                .principal
                .iter()
                .map(|&(a, b)| (a * inv, b * inv))
                .collect(),
            area_weights: self.area_weights.iter().map(|a| a * sq).collect(),
            second_fund_norm_sq: self
                .second_fund_norm_sq
                .iter()
                .map(|a| a * inv * inv)
                .collect(),
            voronoi_areas: self.voronoi_areas.iter().map(|a| a * sq).collect(),
            face_cotangents: self.face_cotangents.clone(),
            face_areas: self.face_areas.iter().map(|a| a * sq).collect(),
            face_normals: self.face_normals.clone(),
        }
    }
}

fn cotangent(a: &Vec3, b: &Vec3, c: &Vec3) -> f64 {
    // angle at a in triangle (a, b, c)
    let u = b - a;
    let v = c - a;
    u.dot(&v) / u.cross(&v).norm()
}

/// Computes normals, mean curvature, shape operator and area weights.
pub fn build_geometry(mesh: &Hypersurface) -> Result<GeometryCache> {
    let verts = mesh.vertices();
    let faces = mesh.faces();
    let nv = verts.len();

    let mut face_areas = Vec::with_capacity(faces.len());
    let mut face_normals = Vec::with_capacity(faces.len());
    let mut face_cotangents = Vec::with_capacity(faces.len());
    let diag = mesh.bounding_box_diagonal();
    let threshold = crate::mesh::DEGENERATE_REL * diag * diag;
    for (fi, f) in faces.iter().enumerate() {
        let (a, b, c) = (verts[f[0]], verts[f[1]], verts[f[2]]);
        let cross = (b - a).cross(&(c - a));
        let area = 0.5 * cross.norm();
        if !(area > threshold) {
            return Err(Error::DegenerateMesh {
                face: fi,
                area,
                threshold,
            });
        }
        face_areas.push(area);
        face_normals.push(cross / (2.0 * area));
        face_cotangents.push([
            cotangent(&a, &b, &c),
            cotangent(&b, &c, &a),
            cotangent(&c, &a, &b),
        ]);
    }

    let mut area_weights = vec![0.0; nv];
    let mut voronoi_areas = vec![0.0; nv];
    let mut normal_acc = vec![Vec3::zeros(); nv];
    let mut laplace_acc = vec![Vec3::zeros(); nv];
    for (fi, f) in faces.iter().enumerate() {
        let area = face_areas[fi];
        let cots = face_cotangents[fi];
        for c in 0..3 {
            let i = f[c];
            let j = f[(c + 1) % 3];
            let k = f[(c + 2) % 3];
            area_weights[i] += area / 3.0;
            normal_acc[i] += face_normals[fi] * area;
            // edge (i, j) is opposite corner k, edge (i, k) opposite corner j
            let cot_k = cots[(c + 2) % 3];
            let cot_j = cots[(c + 1) % 3];
            laplace_acc[i] +=
                (verts[i] - verts[j]) * (0.5 * cot_k) + (verts[i] - verts[k]) * (0.5 * cot_j);
            voronoi_areas[i] += mixed_area_share(c, &cots, area, &verts[i], &verts[j], &verts[k]);
        }
    }

    let normals: Vec<Vec3> = normal_acc.iter().map(|n| n.normalize()).collect();
    let mean_curvature: Vec<f64> = (0..nv)
        .map(|i| {
            let hn = laplace_acc[i] / voronoi_areas[i];
            hn.norm().copysign(hn.dot(&normals[i]))
        })
        .collect();

    let topo = mesh.topology();
    let fits: Vec<(Matrix2<f64>, (Vec3, Vec3), Vec3)> = (0..nv)
        .into_par_iter()
        .map(|v| {
            fit_shape_operator(
                &verts[v],
                &normals[v],
                topo.two_ring(v).iter().map(|&w| &verts[w]),
            )
        })
        .collect();
    let mut shape_operator = Vec::with_capacity(nv);
    let mut frames = Vec::with_capacity(nv);
    let mut principal = Vec::with_capacity(nv);
    let mut second_fund_norm_sq = Vec::with_capacity(nv);
    let mut fitted_normals = Vec::with_capacity(nv);
    for (s, frame, fnrm) in fits {
        fitted_normals.push(fnrm);
        let (lo, hi) = eigen_pair(&s);
        principal.push((lo, hi));
        second_fund_norm_sq.push(lo * lo + hi * hi);
        shape_operator.push(s);
        frames.push(frame);
    }

    // the averaged normal only seeds the fit and signs H; motion uses the fitted one
    let normals = fitted_normals;
    Ok(GeometryCache {
        normals,
        mean_curvature,
        shape_operator,
        frames,
        principal,
        area_weights,
        second_fund_norm_sq,
        voronoi_areas,
        face_cotangents,
        face_areas,
        face_normals,
    })
}

/// Share of a triangle's area assigned to corner `c` under the mixed Voronoi rule.
fn mixed_area_share(c: usize, cots: &[f64; 3], area: f64, pi: &Vec3, pj: &Vec3, pk: &Vec3) -> f64 {
    let obtuse_here = cots[c] < 0.0;
    let obtuse_elsewhere = cots[(c + 1) % 3] < 0.0 || cots[(c + 2) % 3] < 0.0;
    if obtuse_here {
        area / 2.0
    } else if obtuse_elsewhere {
        area / 4.0
    } else {
        let cot_j = cots[(c + 1) % 3];
        let cot_k = cots[(c + 2) % 3];
        ((pi - pk).norm_squared() * cot_j + (pi - pj).norm_squared() * cot_k) / 8.0
    }
}

fn eigen_pair(s: &Matrix2<f64>) -> (f64, f64) {
    let e = SymmetricEigen::new(*s);
    let (a, b) = (e.eigenvalues[0], e.eigenvalues[1]);
    (a.min(b), a.max(b))
}

fn tangent_frame(n: &Vec3) -> (Vec3, Vec3) {
    let helper = if n.x.abs() < 0.9 {
        Vec3::x()
    } else {
        Vec3::y()
    };
    let e1 = (helper - n * n.dot(&helper)).normalize();
    let e2 = n.cross(&e1);
    (e1, e2)
}

/// Least-squares fit of `w = a u^2 + b uv + c v^2 + d u + e v` in the tangent
/// frame at `p`; returns the symmetric shape operator `I^{-1/2} II I^{-1/2}`
/// with the sign convention `h = -<nu, F_ij>` (positive on spheres).
fn fit_shape_operator<'a>(
    p: &Vec3,
    n: &Vec3,
    neighbors: impl Iterator<Item = &'a Vec3>,
) -> (Matrix2<f64>, (Vec3, Vec3), Vec3) {
    let (e1, e2) = tangent_frame(n);
    let mut ata = SMatrix::<f64, 5, 5>::zeros();
    let mut atb = SVector::<f64, 5>::zeros();
    let mut scale = 0.0f64;
    let local: Vec<(f64, f64, f64)> = neighbors
        .map(|q| {
            let d = q - p;
            let (u, v) = (d.dot(&e1), d.dot(&e2));
            scale = scale.max(u.abs()).max(v.abs());
            (u, v, d.dot(n))
        })
        .collect();
    // normalise coordinates so the normal equations stay well conditioned
    let s = if scale > 0.0 { 1.0 / scale } else { 1.0 };
    for &(u, v, w) in &local {
        let (u, v, w) = (u * s, v * s, w * s);
        let row = SVector::<f64, 5>::new(u * u, u * v, v * v, u, v);
        ata += row * row.transpose();
        atb += row * w;
    }
    let coef = ata.cholesky().map(|c| c.solve(&atb)).unwrap_or_else(|| {
        ata.pseudo_inverse(1e-14)
            .map(|p| p * atb)
            .unwrap_or_else(|_| SVector::zeros())
    });
    // undo the normalisation: second derivatives pick up a factor s, gradients none
    let (a, b, c, d, e) = (coef[0] * s, coef[1] * s, coef[2] * s, coef[3], coef[4]);
    let hess = Matrix2::new(2.0 * a, b, b, 2.0 * c);
    let grad_sq = d * d + e * e;
    let second = -hess / (1.0 + grad_sq).sqrt();
    let first = Matrix2::new(1.0 + d * d, d * e, d * e, 1.0 + e * e);
    let fe = SymmetricEigen::new(first);
    let inv_sqrt = fe.eigenvectors
        * Matrix2::from_diagonal(&fe.eigenvalues.map(|l| 1.0 / l.sqrt()))
        * fe.eigenvectors.transpose();
    let shape = inv_sqrt * second * inv_sqrt;
    let shape = (shape + shape.transpose()) * 0.5;
    let fitted = (n - e1 * d - e2 * e).normalize();
    (shape, (e1, e2), fitted)
}

/// Smallest principal curvature over all vertices. Pinching `h >= C g` holds iff this is `>= C`.
pub fn pinching_minimum(cache: &GeometryCache) -> f64 {
    cache
        .principal
        .iter()
        .map(|p| p.0)
        .fold(f64::INFINITY, f64::min)
}

/// `(sum_v |f_v|^p w_v)^(1/p)`.
pub fn lp_norm(cache: &GeometryCache, field: &ScalarField, p: f64) -> f64 {
    weighted_lp(&cache.area_weights, &field.values, p)
}

/// `sum_v |f_v|^p w_v`, the p-th power of the L^p norm.
pub fn lp_integral(cache: &GeometryCache, field: &ScalarField, p: f64) -> f64 {
    field
        .values
        .iter()
        .zip(&cache.area_weights)
        .map(|(f, w)| f.abs().powf(p) * w)
        .sum()
}

pub(crate) fn weighted_lp(weights: &[f64], values: &[f64], p: f64) -> f64 {
    let s: f64 = values
        .iter()
        .zip(weights)
        .map(|(f, w)| f.abs().powf(p) * w)
        .sum();
    s.powf(1.0 / p)
}

/// Tangential gradient of the piecewise-linear interpolant on each face.
pub fn face_gradients(
    mesh: &Hypersurface,
    cache: &GeometryCache,
    field: &ScalarField,
) -> Vec<Vec3> {
    let verts = mesh.vertices();
    mesh.faces()
        .iter()
        .enumerate()
        .map(|(fi, f)| {
            let n = cache.face_normals[fi];
            let inv = 1.0 / (2.0 * cache.face_areas[fi]);
            (0..3).fold(Vec3::zeros(), |acc, c| {
                // edge opposite corner c, oriented counter-clockwise
                let e = verts[f[(c + 2) % 3]] - verts[f[(c + 1) % 3]];
                acc + n.cross(&e) * (field.values[f[c]] * inv)
            })
        })
        .collect()
}

/// `(sum_f |grad f|^p A_f)^(1/p)`.
pub fn gradient_lp_norm(
    mesh: &Hypersurface,
    cache: &GeometryCache,
    field: &ScalarField,
    p: f64,
) -> f64 {
    face_gradients(mesh, cache, field)
        .iter()
        .zip(&cache.face_areas)
        .map(|(g, a)| g.norm().powf(p) * a)
        .sum::<f64>()
        .powf(1.0 / p)
}

/// L^2 norm of the tangential gradient of the piecewise-linear interpolant.
pub fn gradient_l2_norm(
    mesh: &Hypersurface,
    cache: &GeometryCache,
    field: &ScalarField,
) -> Result<f64> {
    if cache.face_areas.iter().any(|a| !(*a > 0.0)) {
        return Err(Error::DegenerateMesh {
            face: 0,
            area: 0.0,
            threshold: 0.0,
        });
    }
    Ok(gradient_lp_norm(mesh, cache, field, 2.0))
}

/// Per-vertex `|grad f|^2`: area-weighted mean over incident faces.
pub fn vertex_gradient_sq(
    mesh: &Hypersurface,
    cache: &GeometryCache,
    field: &ScalarField,
) -> Vec<f64> {
    let grads = face_gradients(mesh, cache, field);
    let topo = mesh.topology();
    (0..mesh.vertex_count())
        .map(|v| {
            let (num, den) = topo.vertex_faces(v).iter().fold((0.0, 0.0), |(n, d), &f| {
                (
                    n + grads[f].norm_squared() * cache.face_areas[f],
                    d + cache.face_areas[f],
                )
            });
            num / den
        })
        .collect()
}

/// Cotangent Laplace-Beltrami of a vertex field, normalised by mixed areas
/// (the sign convention makes it negative semidefinite).
pub fn laplacian(mesh: &Hypersurface, cache: &GeometryCache, field: &ScalarField) -> Vec<f64> {
    let mut acc = vec![0.0; mesh.vertex_count()];
    for (fi, f) in mesh.faces().iter().enumerate() {
        let cots = cache.face_cotangents[fi];
        for c in 0..3 {
            // edge (f[c+1], f[c+2]) opposite corner c
            let (i, j) = (f[(c + 1) % 3], f[(c + 2) % 3]);
            let w = 0.5 * cots[c];
            let diff = field.values[j] - field.values[i];
            acc[i] += w * diff;
            acc[j] -= w * diff;
        }
    }
    acc.iter()
        .zip(&cache.voronoi_areas)
        .map(|(a, m)| a / m)
        .collect()
}
