//! P1 finite elements on intrinsic meshes: cotangent stiffness, density
//! weighted mass, and per-triangle gradient energies.
//!
//! The stiffness matrix depends only on angles and is therefore unchanged
//! when the metric is multiplied by a density. All of the conformal factor
//! enters through the mass matrix `M[μ]`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::TriangleMesh;
use crate::sparse::CsrMatrix;

/// Angles below this (radians) are reported as near-degenerate.
pub const DEGENERATE_ANGLE: f64 = 1e-8;

/// Relative tolerance on `∫ μ dA = 1` for an admissible density.
pub const MASS_TOLERANCE: f64 = 1e-10;

/// Lower bound of the density box.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum Floor {
    #[default]
    Zero,
    NegativeHalf,
}

impl Floor {
    pub fn value(self) -> f64 {
        match self {
            Floor::Zero => 0.0,
            Floor::NegativeHalf => -0.5,
        }
    }

    pub fn from_value(v: f64) -> Result<Self> {
        if v == 0.0 {
            Ok(Floor::Zero)
        } else if v == -0.5 {
            Ok(Floor::NegativeHalf)
        } else {
            Err(Error::InvalidArgument(format!(
                "floor must be 0 or -0.5, got {v}"
            )))
        }
    }
}

/// Per-vertex conformal density with box bounds `[floor, cap]` and unit mass.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityField {
    values: Vec<f64>,
    floor: Floor,
    cap: f64,
    mesh_fingerprint: u64,
}

impl DensityField {
    /// Checks box and mass constraints; values are taken as given.
    pub fn new(mesh: &TriangleMesh, values: Vec<f64>, floor: Floor, cap: f64) -> Result<Self> {
        if values.len() != mesh.vertex_count() {
            return Err(Error::InvalidDensity(format!(
                "{} values for {} vertices",
                values.len(),
                mesh.vertex_count()
            )));
        }
        if !(cap > 0.0) {
            return Err(Error::InvalidDensity(format!(
                "cap must be positive, got {cap}"
            )));
        }
        let lo = floor.value();
        if let Some((v, &x)) = values
            .iter()
            .enumerate()
            .find(|&(_, &x)| !(x.is_finite() && x >= lo && x <= cap))
        {
            return Err(Error::InvalidDensity(format!(
                "vertex {v}: value {x} outside [{lo}, {cap}]"
            )));
        }
        let mass = integrate(mesh, &values);
        if (mass - 1.0).abs() > MASS_TOLERANCE {
            return Err(Error::InvalidDensity(format!(
                "total mass {mass} differs from 1"
            )));
        }
        Ok(DensityField {
            values,
            floor,
            cap,
            mesh_fingerprint: mesh.fingerprint(),
        })
    }

    /// Rescales `values` to unit mass, then validates.
    pub fn normalized(
        mesh: &TriangleMesh,
        mut values: Vec<f64>,
        floor: Floor,
        cap: f64,
    ) -> Result<Self> {
        if values.len() != mesh.vertex_count() {
            return Err(Error::InvalidDensity(format!(
                "{} values for {} vertices",
                values.len(),
                mesh.vertex_count()
            )));
        }
        let mass = integrate(mesh, &values);
        if !(mass.is_finite() && mass > 0.0) {
            return Err(Error::InvalidDensity(format!(
                "cannot normalize density with mass {mass}"
            )));
        }
        values.iter_mut().for_each(|v| *v /= mass);
        Self::new(mesh, values, floor, cap)
    }

    /// `μ ≡ 1/A`.
    pub fn uniform(mesh: &TriangleMesh, floor: Floor, cap: f64) -> Result<Self> {
        Self::normalized(mesh, vec![1.0; mesh.vertex_count()], floor, cap)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn floor(&self) -> Floor {
        self.floor
    }

    pub fn cap(&self) -> f64 {
        self.cap
    }

    pub fn mesh_fingerprint(&self) -> u64 {
        self.mesh_fingerprint
    }

    pub fn belongs_to(&self, mesh: &TriangleMesh) -> bool {
        self.mesh_fingerprint == mesh.fingerprint()
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Same values under a different box.
    pub fn with_bounds(&self, mesh: &TriangleMesh, floor: Floor, cap: f64) -> Result<Self> {
        Self::new(mesh, self.values.clone(), floor, cap)
    }
}

/// `∫ f dA` for a P1 field: exact barycentric vertex quadrature.
pub fn integrate(mesh: &TriangleMesh, f: &[f64]) -> f64 {
    f.iter().zip(mesh.vertex_areas()).map(|(f, a)| f * a).sum()
}

/// `∫ |f − g| dA` with vertex quadrature.
pub fn l1_distance(mesh: &TriangleMesh, f: &[f64], g: &[f64]) -> f64 {
    f.iter()
        .zip(g)
        .zip(mesh.vertex_areas())
        .map(|((f, g), a)| (f - g).abs() * a)
        .sum()
}

#[derive(Debug, Clone)]
pub struct StiffnessMatrix {
    pub matrix: CsrMatrix,
    /// Triangles with an angle below [`DEGENERATE_ANGLE`].
    pub degenerate_triangles: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MassMode {
    Consistent,
    Lumped,
}

#[derive(Debug, Clone)]
pub struct MassMatrix {
    pub matrix: CsrMatrix,
    pub mode: MassMode,
    /// `1ᵀ M 1`.
    pub total_mass: f64,
    /// Smallest vertex density used in assembly; negative values trigger
    /// the eigensolver's inertia check.
    pub min_density: f64,
}

/// Cotangents of the three corner angles from edge lengths (law of cosines).
pub fn corner_cotangents(lengths: [f64; 3], area: f64) -> [f64; 3] {
    let sq = lengths.map(|l| l * l);
    [0, 1, 2].map(|k| (sq[(k + 1) % 3] + sq[(k + 2) % 3] - sq[k]) / (4.0 * area))
}

/// Element stiffness: off-diagonal `(i, j)` is `−cot θ_k / 2` with `k` the third corner.
pub fn element_stiffness(lengths: [f64; 3], area: f64) -> [[f64; 3]; 3] {
    let cot = corner_cotangents(lengths, area);
    let mut k = [[0.0; 3]; 3];
    for c in 0..3 {
        let (i, j) = ((c + 1) % 3, (c + 2) % 3);
        k[i][j] = -0.5 * cot[c];
        k[j][i] = -0.5 * cot[c];
    }
    for i in 0..3 {
        k[i][i] = -(k[i][(i + 1) % 3] + k[i][(i + 2) % 3]);
    }
    k
}

/// Exact `∫ μ φ_i φ_j dA` on one triangle for linear μ with corner values `mu`.
pub fn element_mass(mu: [f64; 3], area: f64) -> [[f64; 3]; 3] {
    let mut m = [[0.0; 3]; 3];
    for i in 0..3 {
        let (j, k) = ((i + 1) % 3, (i + 2) % 3);
        m[i][i] = area * (mu[i] / 10.0 + (mu[j] + mu[k]) / 30.0);
        m[i][j] = area * ((mu[i] + mu[j]) / 30.0 + mu[k] / 60.0);
        m[j][i] = m[i][j];
    }
    m
}

pub fn assemble_stiffness(mesh: &TriangleMesh) -> StiffnessMatrix {
    let elements: Vec<([[f64; 3]; 3], bool)> = (0..mesh.triangles().len())
        .into_par_iter()
        .map(|t| {
            let lengths = mesh.triangle_lengths(t);
            let area = mesh.triangle_area(t);
            let degenerate = corner_cotangents(lengths, area)
                .iter()
                .any(|&c| 1f64.atan2(c) < DEGENERATE_ANGLE);
            (element_stiffness(lengths, area), degenerate)
        })
        .collect();
    let degenerate_triangles: Vec<usize> = elements
        .iter()
        .enumerate()
        .filter(|(_, e)| e.1)
        .map(|(t, _)| t)
        .collect();
    for &t in &degenerate_triangles {
        log::warn!("triangle {t} has an angle below {DEGENERATE_ANGLE:e} rad");
    }
    let mats: Vec<_> = elements.into_iter().map(|e| e.0).collect();
    StiffnessMatrix {
        matrix: CsrMatrix::assemble(mesh, &mats),
        degenerate_triangles,
    }
}

pub fn assemble_mass(mesh: &TriangleMesh, density: &DensityField, mode: MassMode) -> MassMatrix {
    assemble_mass_values(mesh, density.values(), mode)
}

/// Mass matrix for arbitrary per-vertex weights (not necessarily admissible).
pub fn assemble_mass_values(mesh: &TriangleMesh, mu: &[f64], mode: MassMode) -> MassMatrix {
    let mats: Vec<[[f64; 3]; 3]> = mesh
        .triangles()
        .par_iter()
        .enumerate()
        .map(|(t, tri)| element_mass(tri.map(|v| mu[v]), mesh.triangle_area(t)))
        .collect();
    let consistent = CsrMatrix::assemble(mesh, &mats);
    let matrix = match mode {
        MassMode::Consistent => consistent,
        MassMode::Lumped => consistent.with_diagonal(&consistent.row_sums()),
    };
    let total_mass = matrix.row_sums().iter().sum();
    MassMatrix {
        matrix,
        mode,
        total_mass,
        min_density: mu.iter().copied().fold(f64::INFINITY, f64::min),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientField {
    /// Constant `|∇u|²` on each triangle.
    pub per_triangle: Vec<f64>,
    /// Area-weighted average of the incident triangle values.
    pub per_vertex: Vec<f64>,
}

pub fn gradient_field(mesh: &TriangleMesh, u: &[f64]) -> Result<GradientField> {
    if u.len() != mesh.vertex_count() {
        return Err(Error::InvalidArgument(format!(
            "field has {} entries, mesh has {} vertices",
            u.len(),
            mesh.vertex_count()
        )));
    }
    let per_triangle: Vec<f64> = mesh
        .triangles()
        .par_iter()
        .enumerate()
        .map(|(t, tri)| {
            let area = mesh.triangle_area(t);
            let k = element_stiffness(mesh.triangle_lengths(t), area);
            let x = tri.map(|v| u[v]);
            let mut e = 0.0;
            for i in 0..3 {
                for j in 0..3 {
                    e += x[i] * k[i][j] * x[j];
                }
            }
            (e / area).max(0.0)
        })
        .collect();
    let per_vertex = vertex_average(mesh, &per_triangle);
    Ok(GradientField {
        per_triangle,
        per_vertex,
    })
}

/// Area-weighted average of a per-triangle field over each vertex star.
pub fn vertex_average(mesh: &TriangleMesh, per_triangle: &[f64]) -> Vec<f64> {
    let mut sum = vec![0.0; mesh.vertex_count()];
    let mut weight = vec![0.0; mesh.vertex_count()];
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let a = mesh.triangle_area(t);
        for &v in tri {
            sum[v] += a * per_triangle[t];
            weight[v] += a;
        }
    }
    sum.iter().zip(&weight).map(|(s, w)| s / w).collect()
}
