//! Brute-force oracle for the square flat torus: dense P1 matrices built
//! directly from grid coordinates, dense generalized eigensolves, and
//! random-restart projected gradient ascent on a soft minimum of the low
//! spectrum. Shares no code with the mesh, fem, eigen or maximizer modules.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleConfig {
    pub grid: usize,
    pub restarts: usize,
    pub iterations: usize,
    /// Density cap in units of `1/A`.
    pub cap: f64,
    pub seed: u64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig {
            grid: 12,
            restarts: 20,
            iterations: 120,
            cap: 64.0,
            seed: 2024,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct OracleResult {
    pub best: f64,
    pub uniform: f64,
    pub per_restart: Vec<f64>,
}

/// Unit-square torus on an `n × n` grid, cells cut along `(i,j)–(i+1,j+1)`.
struct Grid {
    n: usize,
    triangles: Vec<[usize; 3]>,
    /// Gradients of the three hat functions on each triangle.
    gradients: Vec<[[f64; 2]; 3]>,
    area: f64,
}

impl Grid {
    fn new(n: usize) -> Self {
        let h = 1.0 / n as f64;
        let id = |i: usize, j: usize| (i % n) + n * (j % n);
        let mut triangles = Vec::new();
        let mut gradients = Vec::new();
        for j in 0..n {
            for i in 0..n {
                let lower = [(0.0, 0.0), (h, 0.0), (h, h)];
                let upper = [(0.0, 0.0), (h, h), (0.0, h)];
                triangles.push([id(i, j), id(i + 1, j), id(i + 1, j + 1)]);
                gradients.push(hat_gradients(lower));
                triangles.push([id(i, j), id(i + 1, j + 1), id(i, j + 1)]);
                gradients.push(hat_gradients(upper));
            }
        }
        Grid {
            n,
            triangles,
            gradients,
            area: h * h / 2.0,
        }
    }

    fn vertices(&self) -> usize {
        self.n * self.n
    }

    fn stiffness(&self) -> DMatrix<f64> {
        let v = self.vertices();
        let mut k = DMatrix::zeros(v, v);
        for (tri, g) in self.triangles.iter().zip(&self.gradients) {
            for a in 0..3 {
                for b in 0..3 {
                    k[(tri[a], tri[b])] += self.area * (g[a][0] * g[b][0] + g[a][1] * g[b][1]);
                }
            }
        }
        k
    }

    /// `∫ μ φ_a φ_b` with `μ` linear on each triangle.
    fn mass(&self, mu: &[f64]) -> DMatrix<f64> {
        let v = self.vertices();
        let mut m = DMatrix::zeros(v, v);
        for tri in &self.triangles {
            for a in 0..3 {
                for b in 0..3 {
                    let mut s = 0.0;
                    for c in 0..3 {
                        s += mu[tri[c]] * triple(a, b, c);
                    }
                    m[(tri[a], tri[b])] += self.area * s;
                }
            }
        }
        m
    }

    /// `∂(uᵀ M[μ] u)/∂μ_c` for every vertex `c`.
    fn mass_derivative(&self, u: &[f64]) -> Vec<f64> {
        let mut d = vec![0.0; self.vertices()];
        for tri in &self.triangles {
            for c in 0..3 {
                let mut s = 0.0;
                for a in 0..3 {
                    for b in 0..3 {
                        s += u[tri[a]] * u[tri[b]] * triple(a, b, c);
                    }
                }
                d[tri[c]] += self.area * s;
            }
        }
        d
    }
}

fn hat_gradients(p: [(f64, f64); 3]) -> [[f64; 2]; 3] {
    let det = (p[1].0 - p[0].0) * (p[2].1 - p[0].1) - (p[2].0 - p[0].0) * (p[1].1 - p[0].1);
    let mut g = [[0.0; 2]; 3];
    for a in 0..3 {
        let (b, c) = ((a + 1) % 3, (a + 2) % 3);
        g[a] = [(p[b].1 - p[c].1) / det, (p[c].0 - p[b].0) / det];
    }
    g
}

/// `∫ λ_a λ_b λ_c dA / A` on a triangle.
fn triple(a: usize, b: usize, c: usize) -> f64 {
    let mut e = [0usize; 3];
    e[a] += 1;
    e[b] += 1;
    e[c] += 1;
    let fact = |k: usize| (1..=k).product::<usize>() as f64;
    2.0 * e.iter().map(|&k| fact(k)).product::<f64>() / fact(5)
}

/// Smallest nonzero eigenvalues with `M`-normalized eigenvectors.
fn low_spectrum(
    k: &DMatrix<f64>,
    m: &DMatrix<f64>,
    count: usize,
) -> Option<Vec<(f64, DVector<f64>)>> {
    let l = m.clone().cholesky()?.l();
    let linv = l.clone().try_inverse()?;
    let c = &linv * k * linv.transpose();
    let c = (&c + c.transpose()) * 0.5;
    let eig = SymmetricEigen::new(c);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    Some(
        order
            .iter()
            .skip(1)
            .take(count)
            .map(|&i| {
                (
                    eig.eigenvalues[i],
                    linv.transpose() * eig.eigenvectors.column(i),
                )
            })
            .collect(),
    )
}

/// Shift-and-clip onto `{0 ≤ μ ≤ cap, Σ μ_v A_v = 1}` by bisection.
fn project(x: &[f64], vertex_area: f64, cap: f64) -> Vec<f64> {
    let mass = |c: f64| x.iter().map(|v| (v + c).clamp(0.0, cap)).sum::<f64>() * vertex_area;
    let (mut lo, mut hi) = (
        -x.iter().copied().fold(f64::MIN, f64::max),
        cap - x.iter().copied().fold(f64::MAX, f64::min),
    );
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mass(mid) < 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let c = 0.5 * (lo + hi);
    let mut mu: Vec<f64> = x.iter().map(|v| (v + c).clamp(0.0, cap)).collect();
    let total = mu.iter().sum::<f64>() * vertex_area;
    mu.iter_mut().for_each(|v| *v /= total);
    mu
}

/// Maximizes `λ₁` of `K u = λ M[μ] u` over unit-mass densities in `[0, cap]`.
pub fn square_torus_oracle(config: &OracleConfig) -> OracleResult {
    let grid = Grid::new(config.grid);
    let k = grid.stiffness();
    let v = grid.vertices();
    let vertex_area = 1.0 / v as f64;
    let cap = config.cap;
    let uniform = low_spectrum(&k, &grid.mass(&vec![1.0; v]), 1).map_or(0.0, |s| s[0].0);

    let per_restart: Vec<f64> = (0..config.restarts)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(r as u64));
            let start: Vec<f64> = (0..v).map(|_| rng.gen_range(0.5..1.5)).collect();
            let mut mu = project(&start, vertex_area, cap);
            let Some(mut spec) = low_spectrum(&k, &grid.mass(&mu), 8) else {
                return 0.0;
            };
            let mut step = 0.2;
            for _ in 0..config.iterations {
                // Gradient of the soft minimum −β⁻¹ log Σ exp(−β λ_i).
                let l1 = spec[0].0;
                let beta = 200.0 / l1;
                let weights: Vec<f64> =
                    spec.iter().map(|(l, _)| (-beta * (l - l1)).exp()).collect();
                let total: f64 = weights.iter().sum();
                let mut grad = vec![0.0; v];
                for ((l, u), w) in spec.iter().zip(&weights) {
                    let d = grid.mass_derivative(u.as_slice());
                    grad.iter_mut()
                        .zip(&d)
                        .for_each(|(g, d)| *g -= w / total * l * d / vertex_area);
                }
                let mean = grad.iter().sum::<f64>() / v as f64;
                grad.iter_mut().for_each(|g| *g -= mean);
                let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
                if norm == 0.0 {
                    break;
                }
                let trial: Vec<f64> = mu
                    .iter()
                    .zip(&grad)
                    .map(|(m, g)| m + step * g / norm)
                    .collect();
                let trial = project(&trial, vertex_area, cap);
                match low_spectrum(&k, &grid.mass(&trial), 8) {
                    Some(s) if s[0].0 > l1 => {
                        mu = trial;
                        spec = s;
                        step *= 1.5;
                    }
                    _ => {
                        step *= 0.5;
                        if step < 1e-5 {
                            break;
                        }
                    }
                }
            }
            spec[0].0
        })
        .collect();
    OracleResult {
        best: per_restart
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max),
        uniform,
        per_restart,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_square_torus_matches_fourier_value() {
        let grid = Grid::new(16);
        let k = grid.stiffness();
        let spec = low_spectrum(&k, &grid.mass(&vec![1.0; 256]), 4).unwrap();
        for (l, _) in &spec {
            assert!(
                (l / (4.0 * std::f64::consts::PI.powi(2)) - 1.0).abs() < 0.03,
                "{l}"
            );
        }
    }

    #[test]
    fn projection_is_feasible() {
        let x: Vec<f64> = (0..64).map(|i| (i as f64 * 0.37).sin() * 3.0).collect();
        let mu = project(&x, 1.0 / 64.0, 4.0);
        assert!((mu.iter().sum::<f64>() / 64.0 - 1.0).abs() < 1e-12);
        assert!(mu.iter().all(|&m| (0.0..=4.0 + 1e-12).contains(&m)));
    }
}
