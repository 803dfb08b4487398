//! Smallest nonzero eigenpairs of the pencil `K u = λ M[μ] u`.
//!
//! Shift-invert block Krylov iteration with thick restarts, run in the
//! `M`-inner product on the `M`-orthogonal complement of the constants. The
//! operator is `A = P (K − σM)⁻¹ M` with `P` the `M`-orthogonal projector that
//! removes the constant mode and `σ < 0` a small shift. Block size exceeds
//! `k`, so exactly degenerate clusters (symmetric meshes) are resolved with
//! their full multiplicity.

use std::fmt::Write as _;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fem::{MassMatrix, StiffnessMatrix};
use crate::sparse::{CsrMatrix, LdlFactor};

/// Default relative gap separating eigenvalue clusters.
pub const DEFAULT_REL_GAP: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EigenOptions {
    pub k: usize,
    /// Relative residual `‖Ku − λMu‖ / ‖Ku‖` required of every pair.
    pub tol: f64,
    pub seed: u64,
    pub max_restarts: usize,
    pub rel_gap: f64,
}

impl Default for EigenOptions {
    fn default() -> Self {
        EigenOptions {
            k: 8,
            tol: 1e-9,
            seed: 0x5eed,
            max_restarts: 300,
            rel_gap: DEFAULT_REL_GAP,
        }
    }
}

impl EigenOptions {
    pub fn with_k(k: usize) -> Self {
        EigenOptions {
            k,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SpectralResult {
    /// Ascending, strictly above the deflated zero mode.
    pub eigenvalues: Vec<f64>,
    /// `M`-orthonormal, `M`-orthogonal to the constants.
    #[serde(skip)]
    pub eigenvectors: Vec<Vec<f64>>,
    pub residuals: Vec<f64>,
    pub clusters: Vec<Vec<usize>>,
    /// Vertices whose mass row vanishes (μ = 0 on the whole star).
    pub excluded_vertices: Vec<usize>,
    pub shift: f64,
    pub restarts: usize,
}

impl SpectralResult {
    pub fn lambda1(&self) -> f64 {
        self.eigenvalues[0]
    }

    pub fn first_cluster(&self) -> &[usize] {
        &self.clusters[0]
    }

    /// Eigenvectors of the first cluster.
    pub fn first_cluster_basis(&self) -> Vec<Vec<f64>> {
        self.first_cluster()
            .iter()
            .map(|&i| self.eigenvectors[i].clone())
            .collect()
    }

    /// Mean eigenvalue of the first cluster.
    pub fn first_cluster_value(&self) -> f64 {
        let c = self.first_cluster();
        c.iter().map(|&i| self.eigenvalues[i]).sum::<f64>() / c.len() as f64
    }

    pub fn cluster_of(&self, index: usize) -> usize {
        self.clusters
            .iter()
            .position(|c| c.contains(&index))
            .expect("index is clustered")
    }

    /// CSV with columns `index,lambda,residual,cluster`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("index,lambda,residual,cluster\n");
        for (i, (l, r)) in self.eigenvalues.iter().zip(&self.residuals).enumerate() {
            let _ = writeln!(out, "{},{:.17e},{:.6e},{}", i + 1, l, r, self.cluster_of(i));
        }
        out
    }
}

/// Greedy clustering of sorted positive values: `λ_{i+1}` joins the current
/// cluster iff `(λ_{i+1} − λ_i) / λ_i < rel_gap`.
pub fn cluster_eigenvalues(values: &[f64], rel_gap: f64) -> Vec<Vec<usize>> {
    let mut clusters: Vec<Vec<usize>> = Vec::new();
    for (i, &v) in values.iter().enumerate() {
        match clusters.last_mut() {
            Some(c) if (v - values[i - 1]) / values[i - 1] < rel_gap => c.push(i),
            _ => clusters.push(vec![i]),
        }
    }
    clusters
}

struct Workspace<'a> {
    k: &'a CsrMatrix,
    m: &'a CsrMatrix,
    factor: LdlFactor,
    m_ones: Vec<f64>,
    total: f64,
    rng: ChaCha8Rng,
}

impl Workspace<'_> {
    fn deflate(&self, y: &mut [f64]) {
        let c = dot(&self.m_ones, y) / self.total;
        y.iter_mut().for_each(|v| *v -= c);
    }

    /// `P (K − σM)⁻¹ M x`.
    fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = self.factor.solve(&self.m.mul_vec(x));
        self.deflate(&mut y);
        y
    }

    fn random_vector(&mut self) -> Vec<f64> {
        let n = self.m_ones.len();
        let r: Vec<f64> = (0..n).map(|_| self.rng.gen_range(-1.0..1.0)).collect();
        self.apply(&r)
    }
}

struct Basis {
    v: Vec<Vec<f64>>,
    mv: Vec<Vec<f64>>,
    av: Vec<Vec<f64>>,
}

impl Basis {
    fn len(&self) -> usize {
        self.v.len()
    }

    /// `M`-orthonormalizes `block` against the basis and itself. Vectors that
    /// collapse are replaced by fresh random ones.
    fn orthonormalize(&self, ws: &mut Workspace, block: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
        let mut accepted: Vec<(Vec<f64>, Vec<f64>)> = Vec::with_capacity(block.len());
        for w in block {
            let mut w = w;
            for attempt in 0..8 {
                let norm0 = m_norm(ws.m, &w);
                for _ in 0..2 {
                    for (vi, mvi) in self.v.iter().zip(&self.mv) {
                        let c = dot(mvi, &w);
                        axpy(-c, vi, &mut w);
                    }
                    for (vi, mvi) in &accepted {
                        let c = dot(mvi, &w);
                        axpy(-c, vi, &mut w);
                    }
                    ws.deflate(&mut w);
                }
                let mw = ws.m.mul_vec(&w);
                let norm = dot(&w, &mw).max(0.0).sqrt();
                if norm > 1e-8 * norm0 && norm > 0.0 {
                    let inv = 1.0 / norm;
                    w.iter_mut().for_each(|x| *x *= inv);
                    let mw: Vec<f64> = mw.iter().map(|x| x * inv).collect();
                    accepted.push((w, mw));
                    break;
                }
                if attempt == 7 {
                    // Krylov space exhausted; drop the vector.
                    break;
                }
                w = ws.random_vector();
            }
        }
        accepted.into_iter().map(|(w, _)| w).collect()
    }
}

/// Solves `K u = λ M u` for the `opts.k` smallest eigenvalues above the constant mode.
pub fn solve_pencil(
    k: &StiffnessMatrix,
    m: &MassMatrix,
    opts: &EigenOptions,
) -> Result<SpectralResult> {
    let km = &k.matrix;
    let mm = &m.matrix;
    let n = km.n();
    if mm.n() != n {
        return Err(Error::Inconsistent(format!(
            "stiffness is {n}x{n}, mass is {0}x{0}",
            mm.n()
        )));
    }
    if opts.k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    let excluded: Vec<usize> = (0..n)
        .filter(|&i| mm.row(i).all(|(_, v)| v == 0.0))
        .collect();
    if !excluded.is_empty() {
        log::info!(
            "{} vertices carry no mass; eigenvectors extend harmonically there",
            excluded.len()
        );
    }
    let support: Vec<usize> = (0..n)
        .filter(|i| excluded.binary_search(i).is_err())
        .collect();
    let n_eff = support.len().saturating_sub(1);
    if opts.k > n_eff {
        return Err(Error::InvalidArgument(format!(
            "k = {} exceeds the {n_eff} available eigenvalues",
            opts.k
        )));
    }

    if m.min_density < 0.0 {
        let sub = mm.principal_submatrix(&support);
        let inertia = LdlFactor::factor(&sub)
            .map_err(|_| Error::IndefiniteMass { negative: 0 })?
            .inertia();
        if inertia.negative > 0 {
            return Err(Error::IndefiniteMass {
                negative: inertia.negative,
            });
        }
    }

    let m_ones = mm.row_sums();
    let total: f64 = m_ones.iter().sum();
    if !(total > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "total mass {total} is not positive"
        )));
    }
    let trace_k: f64 = km.diagonal().iter().sum();
    let trace_m: f64 = mm.diagonal().iter().sum();
    let shift = -0.1 * trace_k / (trace_m * n as f64);
    let factor = LdlFactor::factor(&km.add_scaled(-shift, mm))?;
    let mut ws = Workspace {
        k: km,
        m: mm,
        factor,
        m_ones,
        total,
        rng: ChaCha8Rng::seed_from_u64(opts.seed),
    };

    let want = opts.k;
    let block = (want + 2).min(16).min(n_eff);
    let max_dim = (4 * block).max(2 * want + 20).min(n_eff);
    let keep = (want + block / 2)
        .min(max_dim.saturating_sub(block))
        .max(want);

    let mut basis = Basis {
        v: Vec::new(),
        mv: Vec::new(),
        av: Vec::new(),
    };
    let mut h: Vec<Vec<f64>> = Vec::new();
    let start: Vec<Vec<f64>> = (0..block).map(|_| ws.random_vector()).collect();
    let mut pending = basis.orthonormalize(&mut ws, start);
    let mut last_residuals = Vec::new();

    for restart in 0..=opts.max_restarts {
        // Expand until the basis is full or the Krylov space is exhausted.
        while !pending.is_empty() && basis.len() + pending.len() <= max_dim {
            let first_new = basis.len();
            for p in pending.drain(..) {
                let mp = mm.mul_vec(&p);
                let ap = ws.apply(&p);
                basis.v.push(p);
                basis.mv.push(mp);
                basis.av.push(ap);
            }
            let dim = basis.len();
            for row in &mut h {
                row.resize(dim, 0.0);
            }
            h.resize(dim, vec![0.0; dim]);
            for j in first_new..dim {
                for i in 0..=j {
                    let hij =
                        0.5 * (dot(&basis.mv[i], &basis.av[j]) + dot(&basis.mv[j], &basis.av[i]));
                    h[i][j] = hij;
                    h[j][i] = hij;
                }
            }
            let next: Vec<Vec<f64>> = basis.av[first_new..].to_vec();
            pending = basis.orthonormalize(&mut ws, next);
        }

        let dim = basis.len();
        let hm = DMatrix::from_fn(dim, dim, |i, j| h[i][j]);
        let eig = SymmetricEigen::new(hm);
        let mut order: Vec<usize> = (0..dim).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));

        let mut pairs = Vec::with_capacity(want);
        for &c in order.iter().take(want) {
            let theta = eig.eigenvalues[c];
            let y = eig.eigenvectors.column(c);
            let mut u = vec![0.0; n];
            for (i, vi) in basis.v.iter().enumerate() {
                axpy(y[i], vi, &mut u);
            }
            let lambda = shift + 1.0 / theta;
            let ku = km.mul_vec(&u);
            let mu = mm.mul_vec(&u);
            let r: f64 = ku
                .iter()
                .zip(&mu)
                .map(|(a, b)| (a - lambda * b).powi(2))
                .sum::<f64>()
                .sqrt();
            let scale = norm2(&ku).max(f64::MIN_POSITIVE);
            pairs.push((lambda, u, r / scale));
        }
        last_residuals = pairs.iter().map(|p| p.2).collect();
        let converged = pairs
            .iter()
            .all(|p| p.2 <= opts.tol && p.0.is_finite() && p.0 > 0.0);
        if converged || (pending.is_empty() && dim == n_eff) {
            if !converged {
                let worst = last_residuals.iter().copied().fold(0.0, f64::max);
                if worst > opts.tol.max(1e-6) {
                    break;
                }
            }
            return Ok(finish(pairs, excluded, shift, restart, opts.rel_gap, &ws));
        }
        if pending.is_empty() {
            // Invariant subspace found but not yet all wanted pairs; widen it.
            let fresh: Vec<Vec<f64>> = (0..block).map(|_| ws.random_vector()).collect();
            pending = basis.orthonormalize(&mut ws, fresh);
        }

        // Thick restart on the leading Ritz vectors.
        let kept: Vec<usize> = order.iter().take(keep.min(dim)).copied().collect();
        let combine = |src: &[Vec<f64>]| -> Vec<Vec<f64>> {
            kept.iter()
                .map(|&c| {
                    let y = eig.eigenvectors.column(c);
                    let mut out = vec![0.0; n];
                    for (i, s) in src.iter().enumerate() {
                        axpy(y[i], s, &mut out);
                    }
                    out
                })
                .collect()
        };
        basis = Basis {
            v: combine(&basis.v),
            mv: combine(&basis.mv),
            av: combine(&basis.av),
        };
        h = kept
            .iter()
            .enumerate()
            .map(|(i, &c)| {
                let mut row = vec![0.0; kept.len()];
                row[i] = eig.eigenvalues[c];
                row
            })
            .collect();
    }
    let max_residual = last_residuals.iter().copied().fold(0.0, f64::max);
    Err(Error::NonConvergence {
        iterations: opts.max_restarts,
        max_residual,
        residuals: last_residuals,
    })
}

fn finish(
    mut pairs: Vec<(f64, Vec<f64>, f64)>,
    excluded: Vec<usize>,
    shift: f64,
    restarts: usize,
    rel_gap: f64,
    ws: &Workspace,
) -> SpectralResult {
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    for (_, u, _) in &mut pairs {
        ws.deflate(u);
        let norm = m_norm(ws.m, u);
        let big = u
            .iter()
            .copied()
            .fold(0.0f64, |m, x| if x.abs() > m.abs() { x } else { m });
        let s = if big < 0.0 { -1.0 / norm } else { 1.0 / norm };
        u.iter_mut().for_each(|x| *x *= s);
    }
    let eigenvalues: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let clusters = cluster_eigenvalues(&eigenvalues, rel_gap);
    // Residuals are recomputed after normalization for the final report.
    let residuals = pairs
        .iter()
        .map(|(l, u, _)| {
            let ku = ws.k.mul_vec(u);
            let mu = ws.m.mul_vec(u);
            let r: f64 = ku
                .iter()
                .zip(&mu)
                .map(|(a, b)| (a - l * b).powi(2))
                .sum::<f64>()
                .sqrt();
            r / norm2(&ku).max(f64::MIN_POSITIVE)
        })
        .collect();
    SpectralResult {
        eigenvalues,
        eigenvectors: pairs.into_iter().map(|p| p.1).collect(),
        residuals,
        clusters,
        excluded_vertices: excluded,
        shift,
        restarts,
    }
}

/// Solves with growing `k` until the first cluster is followed by at least
/// one eigenvalue outside it.
pub fn solve_first_cluster(
    k: &StiffnessMatrix,
    m: &MassMatrix,
    opts: &EigenOptions,
) -> Result<SpectralResult> {
    let mut o = *opts;
    loop {
        let res = solve_pencil(k, m, &o)?;
        let n_eff = k.matrix.n().saturating_sub(res.excluded_vertices.len() + 1);
        if res.clusters.len() > 1 || o.k >= n_eff {
            return Ok(res);
        }
        o.k = (o.k * 2).min(n_eff);
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

fn m_norm(m: &CsrMatrix, x: &[f64]) -> f64 {
    m.bilinear(x, x).max(0.0).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::{assemble_mass, assemble_stiffness, DensityField, Floor, MassMode};
    use crate::mesh::{gen_flat_torus, gen_icosphere};

    #[test]
    fn clustering_examples() {
        assert_eq!(
            cluster_eigenvalues(&[2.001, 2.002, 2.003, 6.1], 0.05),
            vec![vec![0, 1, 2], vec![3]]
        );
        assert_eq!(
            cluster_eigenvalues(&[1.0, 2.0, 3.0], 0.05),
            vec![vec![0], vec![1], vec![2]]
        );
        assert!(cluster_eigenvalues(&[], 0.05).is_empty());
    }

    fn uniform_problem(mesh: &crate::mesh::TriangleMesh) -> (StiffnessMatrix, MassMatrix) {
        let mu = DensityField::uniform(mesh, Floor::Zero, f64::INFINITY).unwrap();
        (
            assemble_stiffness(mesh),
            assemble_mass(mesh, &mu, MassMode::Consistent),
        )
    }

    #[test]
    fn icosahedron_matches_dense_solution() {
        let mesh = gen_icosphere(1).unwrap();
        let (k, m) = uniform_problem(&mesh);
        let res = solve_pencil(&k, &m, &EigenOptions::with_k(12)).unwrap();

        // Dense reference: Cholesky-reduce the pencil and diagonalize.
        let n = mesh.vertex_count();
        let kd = DMatrix::from_fn(n, n, |i, j| k.matrix.get(i, j));
        let md = DMatrix::from_fn(n, n, |i, j| m.matrix.get(i, j));
        let l = md.cholesky().unwrap().l();
        let li = l.clone().try_inverse().unwrap();
        let c = &li * kd * li.transpose();
        let mut ev: Vec<f64> = SymmetricEigen::new(c).eigenvalues.iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        for (a, b) in res.eigenvalues.iter().zip(&ev[1..]) {
            assert!((a - b).abs() < 1e-8 * b, "{a} vs {b}");
        }
        assert_eq!(res.first_cluster().len(), 3);
    }

    #[test]
    fn zero_mode_is_deflated_and_vectors_are_m_orthonormal() {
        let mesh = gen_flat_torus([[1.0, 0.0], [0.0, 1.0]], 10, 10).unwrap();
        let (k, m) = uniform_problem(&mesh);
        let res = solve_pencil(&k, &m, &EigenOptions::with_k(1)).unwrap();
        assert!(res.lambda1() > 1.0);
        let res = solve_pencil(&k, &m, &EigenOptions::with_k(9)).unwrap();
        let ones = vec![1.0; mesh.vertex_count()];
        for (i, u) in res.eigenvectors.iter().enumerate() {
            assert!(m.matrix.bilinear(&ones, u).abs() < 1e-10);
            for (j, w) in res.eigenvectors.iter().enumerate() {
                let g = m.matrix.bilinear(u, w);
                let expected = if i == j { 1.0 } else { 0.0 };
                assert!((g - expected).abs() < 1e-8, "{i},{j}: {g}");
            }
        }
        assert!(res.residuals.iter().all(|&r| r < 1e-9));
        assert_eq!(res.clusters[0].len(), 4);
    }

    #[test]
    fn solve_is_deterministic() {
        let mesh = gen_icosphere(2).unwrap();
        let (k, m) = uniform_problem(&mesh);
        let a = solve_pencil(&k, &m, &EigenOptions::with_k(6)).unwrap();
        let b = solve_pencil(&k, &m, &EigenOptions::with_k(6)).unwrap();
        assert_eq!(a.eigenvalues, b.eigenvalues);
        assert_eq!(a.eigenvectors, b.eigenvectors);
    }

    #[test]
    fn zero_mass_vertices_are_reported() {
        let mesh = gen_icosphere(2).unwrap();
        let mut values = vec![1.0; mesh.vertex_count()];
        values[0] = 0.0;
        for &[a, b] in mesh.edges() {
            if a == 0 {
                values[b] = 0.0;
            }
        }
        let mu = DensityField::normalized(&mesh, values, Floor::Zero, f64::INFINITY).unwrap();
        let k = assemble_stiffness(&mesh);
        let m = assemble_mass(&mesh, &mu, MassMode::Consistent);
        let res = solve_pencil(&k, &m, &EigenOptions::with_k(4)).unwrap();
        assert_eq!(res.excluded_vertices, vec![0]);
        assert!(res.residuals.iter().all(|&r| r < 1e-9));
    }

    #[test]
    fn strongly_negative_density_is_refused() {
        let mesh = gen_icosphere(2).unwrap();
        let mut values = vec![1.0; mesh.vertex_count()];
        for v in values.iter_mut().take(40) {
            *v = -6.0;
        }
        let m = crate::fem::assemble_mass_values(&mesh, &values, MassMode::Consistent);
        let k = assemble_stiffness(&mesh);
        let err = solve_pencil(&k, &m, &EigenOptions::with_k(3)).unwrap_err();
        assert!(matches!(err, Error::IndefiniteMass { .. }), "{err}");
        assert!(err
            .to_string()
            .starts_with("indefinite mass; reduce negative density or use floor=0"));
    }

    #[test]
    fn csv_dump_has_header_and_rows() {
        let mesh = gen_icosphere(1).unwrap();
        let (k, m) = uniform_problem(&mesh);
        let res = solve_pencil(&k, &m, &EigenOptions::with_k(4)).unwrap();
        let csv = res.to_csv();
        assert!(csv.starts_with("index,lambda,residual,cluster\n"));
        assert_eq!(csv.lines().count(), 5);
    }
}
