//! Sphere frames: eigenfunction families with `Σ u_i² ≈ 1`, the maps they
//! define into `S^{ℓ−1}`, and the density they induce.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fem::{
    assemble_mass_values, assemble_stiffness, gradient_field, integrate, MassMode, StiffnessMatrix,
};
use crate::mesh::TriangleMesh;

/// Relative eigenvalue threshold defining the rank of `Q`.
pub const RANK_TOLERANCE: f64 = 1e-8;
/// Slack on `∫ w μ dA ≤ 1`.
pub const MASS_SLACK: f64 = 1e-6;
/// RMS deviation `sqrt(objective / A)` above which the constraint counts as unattained.
pub const ATTAINED_RMS: f64 = 2e-2;
/// `w` below this fraction of its mean marks a vertex where the map is undefined.
pub const DEGENERATE_W: f64 = 1e-6;

#[derive(Debug, Clone, Serialize)]
pub struct SphereFrame {
    pub ell: usize,
    /// `ℓ` per-vertex functions.
    pub u: Vec<Vec<f64>>,
    /// Gram coefficients over the input basis, row-major `m × m`.
    pub q: Vec<Vec<f64>>,
    /// Eigenvalues of `Q`, descending.
    pub q_spectrum: Vec<f64>,
    /// `Σ u_i²` per vertex.
    pub w: Vec<f64>,
    pub lambda: f64,
    /// `∫ (w − 1)² dA`.
    pub objective: f64,
    pub constraint_attained: bool,
}

impl SphereFrame {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("frame serializes")
    }
}

/// Monomials `λ₀², λ₁², λ₂², λ₀λ₁, λ₀λ₂, λ₁λ₂` on the reference triangle.
const MONOMIALS: [(usize, usize); 6] = [(0, 0), (1, 1), (2, 2), (0, 1), (0, 2), (1, 2)];

fn factorial(n: usize) -> f64 {
    (1..=n).product::<usize>() as f64
}

/// `∫ λ^α dA / A` over a triangle.
fn moment(e: [usize; 3]) -> f64 {
    2.0 * e.iter().map(|&k| factorial(k)).product::<f64>() / factorial(e.iter().sum::<usize>() + 2)
}

/// Gram matrix of the monomials and their integrals, per unit area.
fn monomial_moments() -> ([[f64; 6]; 6], [f64; 6]) {
    let mut b = [[0.0; 6]; 6];
    let mut c = [0.0; 6];
    for (p, &(i, j)) in MONOMIALS.iter().enumerate() {
        let mut e = [0; 3];
        e[i] += 1;
        e[j] += 1;
        c[p] = moment(e);
        for (q, &(k, l)) in MONOMIALS.iter().enumerate() {
            let mut f = e;
            f[k] += 1;
            f[l] += 1;
            b[p][q] = moment(f);
        }
    }
    (b, c)
}

/// Index pairs `(a, b)`, `a ≤ b`, of the upper triangle of an `m × m` matrix.
fn pairs(m: usize) -> Vec<(usize, usize)> {
    (0..m).flat_map(|a| (a..m).map(move |b| (a, b))).collect()
}

/// Quadratic form of the objective in Frobenius coordinates `y` of `Q`
/// (`y_aa = Q_aa`, `y_ab = √2 Q_ab`): `f(y) = yᵀGy − 2hᵀy + A`.
struct Objective {
    m: usize,
    g: DMatrix<f64>,
    h: DVector<f64>,
    area: f64,
}

impl Objective {
    fn new(mesh: &TriangleMesh, basis: &[Vec<f64>]) -> Self {
        let m = basis.len();
        let idx = pairs(m);
        let p = idx.len();
        let (b0, c0) = monomial_moments();
        let scale: Vec<f64> = idx
            .iter()
            .map(|&(a, b)| {
                if a == b {
                    1.0
                } else {
                    std::f64::consts::SQRT_2
                }
            })
            .collect();
        let (g, h) = mesh
            .triangles()
            .par_iter()
            .enumerate()
            .fold(
                || (DMatrix::zeros(p, p), DVector::zeros(p)),
                |(mut g, mut h), (t, tri)| {
                    let area = mesh.triangle_area(t);
                    // z[r][s]: coefficient of monomial r contributed by y_s.
                    let mut z = DMatrix::<f64>::zeros(6, p);
                    for (s, &(a, b)) in idx.iter().enumerate() {
                        let va = tri.map(|v| basis[a][v]);
                        let vb = tri.map(|v| basis[b][v]);
                        for (r, &(i, j)) in MONOMIALS.iter().enumerate() {
                            let sym = va[i] * vb[j] + va[j] * vb[i];
                            let coeff = if i == j { sym / 2.0 } else { sym };
                            // Off-diagonal Q_ab appears twice in Σ Q v v.
                            z[(r, s)] = if a == b {
                                coeff
                            } else {
                                2.0 * coeff / scale[s]
                            };
                        }
                    }
                    let bz = DMatrix::from_fn(6, 6, |r, q| b0[r][q] * area) * &z;
                    g += z.transpose() * bz;
                    h += z.transpose() * DVector::from_fn(6, |r, _| c0[r] * area);
                    (g, h)
                },
            )
            .collect::<Vec<_>>()
            .into_iter()
            .fold(
                (DMatrix::zeros(p, p), DVector::zeros(p)),
                |(g0, h0), (g1, h1)| (g0 + g1, h0 + h1),
            );
        Objective {
            m,
            g,
            h,
            area: mesh.area(),
        }
    }

    fn value(&self, y: &DVector<f64>) -> f64 {
        ((y.transpose() * &self.g * y)[0] - 2.0 * self.h.dot(y) + self.area).max(0.0)
    }

    fn gradient(&self, y: &DVector<f64>) -> DVector<f64> {
        2.0 * (&self.g * y - &self.h)
    }

    fn to_matrix(&self, y: &DVector<f64>) -> DMatrix<f64> {
        let mut q = DMatrix::zeros(self.m, self.m);
        for (s, (a, b)) in pairs(self.m).into_iter().enumerate() {
            if a == b {
                q[(a, a)] = y[s];
            } else {
                q[(a, b)] = y[s] / std::f64::consts::SQRT_2;
                q[(b, a)] = q[(a, b)];
            }
        }
        q
    }

    fn to_coords(&self, q: &DMatrix<f64>) -> DVector<f64> {
        let idx = pairs(self.m);
        DVector::from_iterator(
            idx.len(),
            idx.iter().map(|&(a, b)| {
                if a == b {
                    q[(a, a)]
                } else {
                    q[(a, b)] * std::f64::consts::SQRT_2
                }
            }),
        )
    }

    /// Euclidean projection onto the PSD cone.
    fn project(&self, y: &DVector<f64>) -> DVector<f64> {
        let eig = SymmetricEigen::new(self.to_matrix(y));
        let clipped = eig.eigenvalues.map(|l| l.max(0.0));
        let q = &eig.eigenvectors * DMatrix::from_diagonal(&clipped) * eig.eigenvectors.transpose();
        self.to_coords(&q)
    }
}

/// Projected gradient with Barzilai–Borwein trial steps and Armijo backtracking.
fn minimize(obj: &Objective) -> DVector<f64> {
    let p = obj.h.len();
    let identity = obj.to_coords(&DMatrix::identity(obj.m, obj.m));
    let curvature = (identity.transpose() * &obj.g * &identity)[0];
    let alpha = if curvature > 0.0 {
        (obj.h.dot(&identity) / curvature).max(0.0)
    } else {
        0.0
    };
    let mut y = identity * alpha;
    let mut f = obj.value(&y);
    let mut grad = obj.gradient(&y);
    let lipschitz = 2.0 * obj.g.norm().max(f64::MIN_POSITIVE);
    let mut step = 1.0 / lipschitz;
    for _ in 0..5000 {
        let mut t = step;
        let (y_new, f_new) = loop {
            let cand = obj.project(&(&y - &grad * t));
            let fc = obj.value(&cand);
            let d = &cand - &y;
            if fc <= f + 1e-4 * grad.dot(&d) || t < 1e-3 / lipschitz {
                break (cand, fc);
            }
            t *= 0.5;
        };
        let s = &y_new - &y;
        let g_new = obj.gradient(&y_new);
        let yk = &g_new - &grad;
        let moved = s.norm();
        let decrease = f - f_new;
        y = y_new;
        grad = g_new;
        f = f_new;
        if moved <= 1e-13 * (1.0 + y.norm()) || decrease.abs() <= 1e-15 * obj.area.max(f) {
            break;
        }
        let sy = s.dot(&yk);
        step = if sy > 0.0 {
            (s.dot(&s) / sy).clamp(1e-3 / lipschitz, 1e6 / lipschitz)
        } else {
            1.0 / lipschitz
        };
        debug_assert_eq!(y.len(), p);
    }
    y
}

/// Picks `Q ⪰ 0` minimizing `∫ (Σ Q_ab v_a v_b − 1)² dA` over the
/// `M`-orthonormal cluster `basis`, then caps `∫ w μ dA = tr Q` at `1 + 1e−6`.
pub fn select_frame(mesh: &TriangleMesh, basis: &[Vec<f64>], lambda: f64) -> Result<SphereFrame> {
    let m = basis.len();
    if m == 0 {
        return Err(Error::InvalidArgument("empty eigenspace basis".into()));
    }
    let n = mesh.vertex_count();
    if basis.iter().any(|b| b.len() != n) {
        return Err(Error::Inconsistent(
            "basis vector length differs from vertex count".into(),
        ));
    }
    let obj = Objective::new(mesh, basis);
    let mut y = minimize(&obj);
    let mut q = obj.to_matrix(&y);
    let trace = q.trace();
    if trace > 1.0 + MASS_SLACK {
        q *= (1.0 + MASS_SLACK) / trace;
        y = obj.to_coords(&q);
    }
    let objective = obj.value(&y);
    Ok(build(mesh, basis, q, lambda, objective))
}

fn build(
    mesh: &TriangleMesh,
    basis: &[Vec<f64>],
    q: DMatrix<f64>,
    lambda: f64,
    objective: f64,
) -> SphereFrame {
    let n = mesh.vertex_count();
    let m = basis.len();
    let eig = SymmetricEigen::new(q.clone());
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let top = eig.eigenvalues[order[0]].max(0.0);
    let mut u = Vec::new();
    for &c in &order {
        let l = eig.eigenvalues[c];
        if top == 0.0 || l <= RANK_TOLERANCE * top {
            continue;
        }
        let r = eig.eigenvectors.column(c);
        let s = l.sqrt();
        let mut ui = vec![0.0; n];
        for (a, b) in basis.iter().enumerate() {
            let c = s * r[a];
            ui.iter_mut().zip(b).for_each(|(x, y)| *x += c * y);
        }
        u.push(ui);
    }
    let w: Vec<f64> = (0..n)
        .map(|v| u.iter().map(|ui| ui[v] * ui[v]).sum())
        .collect();
    let rms = (objective / mesh.area()).sqrt();
    let constraint_attained = rms <= ATTAINED_RMS;
    if !constraint_attained {
        log::warn!("sphere constraint unattained (rms deviation {rms:.3e})");
    }
    SphereFrame {
        ell: u.len(),
        u,
        q: (0..m)
            .map(|a| (0..m).map(|b| q[(a, b)]).collect())
            .collect(),
        q_spectrum: order.iter().map(|&c| eig.eigenvalues[c]).collect(),
        w,
        lambda,
        objective,
        constraint_attained,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HarmonicResidual {
    pub weak_residual: f64,
    pub identity_residual: f64,
    /// Vertices where `w` vanishes and the normalized map is undefined.
    pub undefined_vertices: usize,
}

/// Tension-field test of `φ̂ = φ/√w` against hat functions, and the discrete
/// `Σ u_i Δu_i = Σ |∇u_i|²` identity. The weak residual aggregates the
/// components in Frobenius norm so it does not depend on the frame's rotation.
pub fn harmonic_residual(mesh: &TriangleMesh, frame: &SphereFrame) -> Result<HarmonicResidual> {
    harmonic_residual_with(mesh, frame, &assemble_stiffness(mesh))
}

pub fn harmonic_residual_with(
    mesh: &TriangleMesh,
    frame: &SphereFrame,
    stiffness: &StiffnessMatrix,
) -> Result<HarmonicResidual> {
    let n = mesh.vertex_count();
    if frame.u.is_empty() {
        return Err(Error::DegenerateMap { fraction: 100.0 });
    }
    let k = &stiffness.matrix;
    let mean_w = frame.w.iter().sum::<f64>() / n as f64;
    let defined: Vec<bool> = frame
        .w
        .iter()
        .map(|&w| w > DEGENERATE_W * mean_w && w > 0.0)
        .collect();
    let undefined = defined.iter().filter(|d| !**d).count();
    if undefined as f64 > 0.01 * n as f64 {
        return Err(Error::DegenerateMap {
            fraction: 100.0 * undefined as f64 / n as f64,
        });
    }

    let adjacency = mesh.adjacency();
    let mut phi: Vec<Vec<f64>> = frame
        .u
        .iter()
        .map(|u| {
            (0..n)
                .map(|v| {
                    if defined[v] {
                        u[v] / frame.w[v].sqrt()
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect();
    // Fill undefined vertices with the normalized mean of their defined neighbours.
    for v in (0..n).filter(|&v| !defined[v]) {
        let mut acc = vec![0.0; phi.len()];
        for &(nb, _) in &adjacency[v] {
            if defined[nb] {
                acc.iter_mut().zip(&phi).for_each(|(a, p)| *a += p[nb]);
            }
        }
        let norm = acc.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm > 0.0 {
            phi.iter_mut().zip(&acc).for_each(|(p, a)| p[v] = a / norm);
        }
    }

    let mut rho = vec![0.0; n];
    for p in &phi {
        let g = gradient_field(mesh, p)?;
        rho.iter_mut().zip(&g.per_vertex).for_each(|(r, g)| *r += g);
    }
    let m1 = assemble_mass_values(mesh, &vec![1.0; n], MassMode::Consistent).matrix;
    let (mut num, mut den) = (0.0, 0.0);
    for p in &phi {
        let kp = k.mul_vec(p);
        let mp = m1.mul_vec(p);
        for v in (0..n).filter(|&v| defined[v]) {
            num += (kp[v] - rho[v] * mp[v]).powi(2);
            den += kp[v] * kp[v];
        }
    }
    let weak_residual = if den > 0.0 {
        (num / den).sqrt()
    } else {
        f64::INFINITY
    };

    let mut lhs = vec![0.0; n];
    let mut grad = vec![0.0; n];
    for u in &frame.u {
        let ku = k.mul_vec(u);
        lhs.iter_mut()
            .zip(u.iter().zip(&ku))
            .for_each(|(l, (a, b))| *l += a * b);
        let g = gradient_field(mesh, u)?;
        grad.iter_mut()
            .zip(&g.per_vertex)
            .for_each(|(s, g)| *s += g);
    }
    let areas = mesh.vertex_areas();
    let (mut mismatch, mut total) = (0.0, 0.0);
    for v in 0..n {
        let rhs = areas[v] * grad[v];
        mismatch += (lhs[v] - rhs).abs();
        total += rhs.abs();
    }
    let identity_residual = if total > 0.0 {
        mismatch / total
    } else {
        f64::INFINITY
    };
    Ok(HarmonicResidual {
        weak_residual,
        identity_residual,
        undefined_vertices: undefined,
    })
}

/// `Σ_i |∇u_i|² / λ` at vertices, rescaled to unit mass; no box clipping.
pub fn recover_density(mesh: &TriangleMesh, frame: &SphereFrame) -> Result<Vec<f64>> {
    if !(frame.lambda > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "frame eigenvalue {} is not positive",
            frame.lambda
        )));
    }
    let n = mesh.vertex_count();
    let mut nu = vec![0.0; n];
    for u in &frame.u {
        let g = gradient_field(mesh, u)?;
        nu.iter_mut()
            .zip(&g.per_vertex)
            .for_each(|(s, g)| *s += g / frame.lambda);
    }
    let mass = integrate(mesh, &nu);
    if !(mass > 0.0) {
        return Err(Error::InvalidDensity(
            "recovered density has no mass".into(),
        ));
    }
    nu.iter_mut().for_each(|x| *x /= mass);
    Ok(nu)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eigen::{solve_pencil, EigenOptions};
    use crate::fem::{assemble_mass, DensityField, Floor};
    use crate::mesh::gen_icosphere;

    #[test]
    fn moments_of_constant_basis() {
        let (b, c) = monomial_moments();
        // Σ over the expansion of (λ₀+λ₁+λ₂)² integrates to 1 per unit area.
        let w = [1.0, 1.0, 1.0, 2.0, 2.0, 2.0];
        let total: f64 = (0..6).map(|p| w[p] * c[p]).sum();
        assert!((total - 1.0).abs() < 1e-15);
        let sq: f64 = (0..6)
            .flat_map(|p| (0..6).map(move |q| (p, q)))
            .map(|(p, q)| w[p] * w[q] * b[p][q])
            .sum();
        assert!((sq - 1.0).abs() < 1e-15);
    }

    #[test]
    fn sphere_coordinates_form_a_frame() {
        let mesh = gen_icosphere(3).unwrap();
        let mu = DensityField::uniform(&mesh, Floor::Zero, 64.0).unwrap();
        let k = assemble_stiffness(&mesh);
        let m = assemble_mass(&mesh, &mu, MassMode::Consistent);
        let spec = solve_pencil(&k, &m, &EigenOptions::with_k(4)).unwrap();
        let frame = select_frame(
            &mesh,
            &spec.first_cluster_basis(),
            spec.first_cluster_value(),
        )
        .unwrap();
        assert_eq!(frame.ell, 3);
        let dev = frame.w.iter().map(|w| (w - 1.0).abs()).fold(0.0, f64::max);
        assert!(dev < 2e-2, "{dev}");
        assert!(frame.constraint_attained);
    }

    #[test]
    fn single_sign_changing_function_leaves_positive_objective() {
        let mesh = gen_icosphere(2).unwrap();
        let z: Vec<f64> = mesh.embedding().unwrap().iter().map(|p| p[2]).collect();
        let frame = select_frame(&mesh, &[z], 1.0).unwrap();
        assert!(frame.objective > 0.1 * mesh.area());
        assert!(!frame.constraint_attained);
    }
}
