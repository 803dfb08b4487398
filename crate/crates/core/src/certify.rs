//! Extremality certificate and Möbius centering on `S²`.

use std::f64::consts::PI;

use nalgebra::{Matrix3, Vector3};
use serde::Serialize;

use crate::eigen::SpectralResult;
use crate::error::{Error, Result};
use crate::fem::{assemble_stiffness, gradient_field, l1_distance, DensityField};
use crate::frame::{harmonic_residual_with, recover_density, SphereFrame};
use crate::maximizer::{
    detect_collapse, negative_measure, saturated_measure, CollapseReport, COLLAPSE_RADII,
    SATURATION_MARGIN,
};
use crate::mesh::TriangleMesh;

pub const SCHEMA: &str = "confspec-cert-1";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CertifyOptions {
    /// Vertices with `Σ|∇u_i|²` below this fraction of its mean are singular candidates.
    pub singular_threshold: f64,
    /// Relative slack on the closed-form bounds.
    pub tol_mesh: f64,
    pub radius_fractions: Vec<f64>,
}

impl Default for CertifyOptions {
    fn default() -> Self {
        CertifyOptions {
            singular_threshold: 1e-3,
            tol_mesh: 0.02,
            radius_fractions: COLLAPSE_RADII.to_vec(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SingularVertex {
    pub vertex: usize,
    pub w: f64,
    pub gradient_energy: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Bounds {
    pub yang_yau_ok: bool,
    pub hersch_floor_ok: bool,
    pub genus: usize,
    pub bound_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[allow(non_snake_case)]
pub struct Certificate {
    pub schema: &'static str,
    pub lambda1_area: f64,
    pub sphere_residual: f64,
    pub density_recovery_L1: f64,
    pub harmonic_weak_residual: f64,
    pub neg_set_measure: f64,
    pub sat_set_measure_times_N: f64,
    pub singular_vertices: Vec<SingularVertex>,
    pub bounds: Bounds,
    pub collapse: CollapseReport,
}

impl Certificate {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("certificate serializes")
    }
}

/// `8π ⌊(γ + 3)/2⌋`.
pub fn yang_yau_bound(genus: usize) -> f64 {
    8.0 * PI * ((genus + 3) / 2) as f64
}

pub fn certificate(
    mesh: &TriangleMesh,
    density: &DensityField,
    spectral: &SpectralResult,
    frame: &SphereFrame,
    opts: &CertifyOptions,
) -> Result<Certificate> {
    let n = mesh.vertex_count();
    if !density.belongs_to(mesh) {
        return Err(Error::Inconsistent(
            "density was built on a different mesh".into(),
        ));
    }
    if spectral.eigenvectors.iter().any(|u| u.len() != n) || frame.w.len() != n {
        return Err(Error::Inconsistent(
            "spectral data does not match the mesh".into(),
        ));
    }
    let mu = density.values();
    let cut = density.cap() * (1.0 - SATURATION_MARGIN);
    let sphere_residual = frame
        .w
        .iter()
        .zip(mu)
        .filter(|(_, &m)| m < cut)
        .map(|(w, _)| (w - 1.0).abs())
        .fold(0.0, f64::max);

    let nu = recover_density(mesh, frame)?;
    let density_recovery = l1_distance(mesh, &nu, mu);
    let harmonic = harmonic_residual_with(mesh, frame, &assemble_stiffness(mesh))?;

    let mut energy = vec![0.0; n];
    for u in &frame.u {
        let g = gradient_field(mesh, u)?;
        energy
            .iter_mut()
            .zip(&g.per_vertex)
            .for_each(|(e, g)| *e += g);
    }
    let mean = energy.iter().sum::<f64>() / n as f64;
    let singular_vertices = (0..n)
        .filter(|&v| energy[v] < opts.singular_threshold * mean)
        .map(|v| SingularVertex {
            vertex: v,
            w: frame.w[v],
            gradient_energy: energy[v],
        })
        .collect();

    let lambda1_area = spectral.lambda1();
    let genus = mesh.genus();
    let bound_value = yang_yau_bound(genus);
    Ok(Certificate {
        schema: SCHEMA,
        lambda1_area,
        sphere_residual,
        density_recovery_L1: density_recovery,
        harmonic_weak_residual: harmonic.weak_residual,
        neg_set_measure: negative_measure(mesh, density),
        sat_set_measure_times_N: saturated_measure(mesh, density) * density.cap(),
        singular_vertices,
        bounds: Bounds {
            yang_yau_ok: lambda1_area <= bound_value * (1.0 + opts.tol_mesh),
            hersch_floor_ok: lambda1_area >= 8.0 * PI * (1.0 - opts.tol_mesh),
            genus,
            bound_value,
        },
        collapse: detect_collapse(mesh, mu, &opts.radius_fractions),
    })
}

/// `σ_e(x) = ((1−|e|²)x − (1−2e·x+|x|²)e) / (1−2e·x+|e|²|x|²)`.
pub fn moebius_map(e: [f64; 3], x: [f64; 3]) -> Result<[f64; 3]> {
    let e = Vector3::from(e);
    if !(e.norm() < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "|e| = {} is not below 1",
            e.norm()
        )));
    }
    let x = Vector3::from(x);
    Ok(sigma(&e, &x).into())
}

fn sigma(e: &Vector3<f64>, x: &Vector3<f64>) -> Vector3<f64> {
    let (ee, ex, xx) = (e.norm_squared(), e.dot(x), x.norm_squared());
    ((1.0 - ee) * x - (1.0 - 2.0 * ex + xx) * e) / (1.0 - 2.0 * ex + ee * xx)
}

/// Derivative of `σ_e(x)` in `e` for unit `x`.
fn sigma_jacobian(e: &Vector3<f64>, x: &Vector3<f64>) -> Matrix3<f64> {
    let (ee, ex) = (e.norm_squared(), e.dot(x));
    let num = (1.0 - ee) * x - (2.0 - 2.0 * ex) * e;
    let den = 1.0 - 2.0 * ex + ee;
    let dnum =
        2.0 * e * x.transpose() - (2.0 - 2.0 * ex) * Matrix3::identity() - 2.0 * x * e.transpose();
    let dden = 2.0 * (e - x);
    (dnum * den - num * dden.transpose()) / (den * den)
}

/// Newton solve of `Σ w_j σ_e(x_j) = 0` for `|e| < 1`.
pub fn moebius_center(weights: &[f64], points: &[[f64; 3]]) -> Result<[f64; 3]> {
    if weights.len() != points.len() || weights.is_empty() {
        return Err(Error::InvalidArgument(
            "weights and points differ in length".into(),
        ));
    }
    if weights.iter().any(|&w| !(w >= 0.0)) {
        return Err(Error::InvalidArgument("weights must be nonnegative".into()));
    }
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return Err(Error::InvalidArgument("weights sum to zero".into()));
    }
    let pts: Vec<Vector3<f64>> = points
        .iter()
        .map(|p| Vector3::from(*p).normalize())
        .collect();
    let w: Vec<f64> = weights.iter().map(|x| x / total).collect();
    let residual = |e: &Vector3<f64>| -> Vector3<f64> {
        pts.iter().zip(&w).map(|(x, &wj)| wj * sigma(e, x)).sum()
    };

    let mut e = Vector3::zeros();
    let mut f = residual(&e);
    for _ in 0..200 {
        if f.norm() < 1e-10 {
            return Ok(e.into());
        }
        let jac: Matrix3<f64> = pts
            .iter()
            .zip(&w)
            .map(|(x, &wj)| wj * sigma_jacobian(&e, x))
            .sum();
        let Some(step) = jac.lu().solve(&(-f)) else {
            return Err(Error::AtomicMeasure);
        };
        let mut t = 1.0;
        let mut moved = false;
        while t > 1e-12 {
            let cand = e + t * step;
            if cand.norm() < 1.0 {
                let fc = residual(&cand);
                if fc.norm() < (1.0 - 1e-4 * t) * f.norm() {
                    e = cand;
                    f = fc;
                    moved = true;
                    break;
                }
            }
            t *= 0.5;
        }
        if !moved || e.norm() > 1.0 - 1e-9 {
            return Err(Error::AtomicMeasure);
        }
    }
    if f.norm() < 1e-10 {
        Ok(e.into())
    } else {
        Err(Error::AtomicMeasure)
    }
}

/// Centers the measure `μ dA` carried by an embedded sphere-like mesh,
/// with vertex positions projected radially to `S²`.
pub fn moebius_center_mesh(mesh: &TriangleMesh, density: Option<&[f64]>) -> Result<[f64; 3]> {
    let pos = mesh
        .embedding()
        .ok_or_else(|| Error::InvalidArgument("Möbius centering needs an embedded mesh".into()))?;
    let weights: Vec<f64> = match density {
        Some(mu) => mu
            .iter()
            .zip(mesh.vertex_areas())
            .map(|(m, a)| (m * a).max(0.0))
            .collect(),
        None => mesh.vertex_areas().to_vec(),
    };
    moebius_center(&weights, pos)
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn random_unit(rng: &mut ChaCha8Rng) -> [f64; 3] {
        loop {
            let v = Vector3::new(
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            );
            if v.norm() > 0.1 && v.norm() <= 1.0 {
                return v.normalize().into();
            }
        }
    }

    #[test]
    fn zero_center_is_identity() {
        let x = [0.6, 0.0, 0.8];
        assert_eq!(moebius_map([0.0; 3], x).unwrap(), x);
    }

    #[test]
    fn poles_on_the_axis_are_fixed() {
        let y = moebius_map([0.0, 0.0, 0.7], [0.0, 0.0, 1.0]).unwrap();
        assert!((Vector3::from(y) - Vector3::z()).norm() < 1e-15);
    }

    #[test]
    fn map_preserves_the_sphere() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            let e = Vector3::from(random_unit(&mut rng)) * rng.gen_range(0.0..0.99);
            let y = moebius_map(e.into(), random_unit(&mut rng)).unwrap();
            assert!((Vector3::from(y).norm() - 1.0).abs() < 1e-12);
        }
        assert!(moebius_map([1.0, 0.0, 0.0], [0.0, 0.0, 1.0]).is_err());
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..20 {
            let e = Vector3::from(random_unit(&mut rng)) * 0.4;
            let x = Vector3::from(random_unit(&mut rng));
            let j = sigma_jacobian(&e, &x);
            for k in 0..3 {
                let mut d = Vector3::zeros();
                d[k] = 1e-6;
                let fd = (sigma(&(e + d), &x) - sigma(&(e - d), &x)) / 2e-6;
                assert!((fd - j.column(k)).norm() < 1e-7);
            }
        }
    }

    #[test]
    fn tetrahedron_is_already_centered() {
        let s = 1.0 / 3f64.sqrt();
        let pts = [[s, s, s], [s, -s, -s], [-s, s, -s], [-s, -s, s]];
        let e = moebius_center(&[0.25; 4], &pts).unwrap();
        assert!(Vector3::from(e).norm() < 1e-10);
    }

    #[test]
    fn antipodal_pair_centers_at_zero() {
        let e = moebius_center(&[0.5, 0.5], &[[0.0, 0.0, 1.0], [0.0, 0.0, -1.0]]).unwrap();
        assert!(Vector3::from(e).norm() < 1e-10);
    }

    #[test]
    fn single_atom_has_no_center() {
        let err = moebius_center(&[1.0], &[[0.0, 0.0, 1.0]]).unwrap_err();
        assert_eq!(err.to_string(), "measure nearly atomic; no interior center");
    }

    #[test]
    fn off_center_measure_is_centered() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let pts: Vec<[f64; 3]> = (0..200)
            .map(|_| {
                let p = random_unit(&mut rng);
                // Bias towards the north pole.
                Vector3::new(p[0], p[1], p[2].abs() + 0.5)
                    .normalize()
                    .into()
            })
            .collect();
        let w = vec![1.0 / 200.0; 200];
        let e = Vector3::from(moebius_center(&w, &pts).unwrap());
        assert!(e.norm() > 0.1 && e.norm() < 1.0);
        let f: Vector3<f64> = pts
            .iter()
            .map(|x| sigma(&e, &Vector3::from(*x)) / 200.0)
            .sum();
        assert!(f.norm() < 1e-10);
    }
}
