//! Symmetric sparse matrices on a mesh's vertex graph and an envelope
//! (profile) LDLᵀ factorization under reverse Cuthill–McKee ordering.

use std::collections::VecDeque;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::mesh::TriangleMesh;

/// Square CSR matrix with full (both triangles) symmetric storage.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Zero matrix with the vertex-adjacency pattern of `mesh` (diagonal included).
    pub fn vertex_pattern(mesh: &TriangleMesh) -> Self {
        let n = mesh.vertex_count();
        let mut rows: Vec<Vec<usize>> = (0..n).map(|v| vec![v]).collect();
        for &[a, b] in mesh.edges() {
            rows[a].push(b);
            rows[b].push(a);
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::new();
        row_ptr.push(0);
        for mut r in rows {
            r.sort_unstable();
            col_idx.extend(r);
            row_ptr.push(col_idx.len());
        }
        let nnz = col_idx.len();
        CsrMatrix {
            n,
            row_ptr,
            col_idx,
            values: vec![0.0; nnz],
        }
    }

    /// Scatter-adds per-triangle 3×3 element matrices, in triangle order.
    pub fn assemble(mesh: &TriangleMesh, elements: &[[[f64; 3]; 3]]) -> Self {
        let mut m = Self::vertex_pattern(mesh);
        for (tri, e) in mesh.triangles().iter().zip(elements) {
            for (a, &i) in tri.iter().enumerate() {
                for (b, &j) in tri.iter().enumerate() {
                    let slot = m
                        .slot(i, j)
                        .expect("element entry lies in the vertex pattern");
                    m.values[slot] += e[a][b];
                }
            }
        }
        m
    }

    /// Diagonal matrix on the same pattern.
    pub fn with_diagonal(&self, diag: &[f64]) -> Self {
        let mut m = self.clone();
        m.values.iter_mut().for_each(|v| *v = 0.0);
        for (i, &d) in diag.iter().enumerate() {
            let s = m.slot(i, i).expect("diagonal in pattern");
            m.values[s] = d;
        }
        m
    }

    fn slot(&self, i: usize, j: usize) -> Option<usize> {
        let row = &self.col_idx[self.row_ptr[i]..self.row_ptr[i + 1]];
        row.binary_search(&j).ok().map(|k| self.row_ptr[i] + k)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.slot(i, j).map_or(0.0, |s| self.values[s])
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[r.clone()]
            .iter()
            .copied()
            .zip(self.values[r].iter().copied())
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.n)
            .map(|i| self.row(i).map(|(_, v)| v).sum())
            .collect()
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.mul_vec_into(x, &mut y);
        y
    }

    pub fn mul_vec_into(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            *yi = self.row(i).map(|(j, v)| v * x[j]).sum();
        }
    }

    /// `xᵀ A y`.
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        (0..self.n)
            .map(|i| x[i] * self.row(i).map(|(j, v)| v * y[j]).sum::<f64>())
            .sum()
    }

    /// `self + alpha * other`; both must share the vertex pattern.
    pub fn add_scaled(&self, alpha: f64, other: &CsrMatrix) -> Self {
        assert_eq!(self.col_idx, other.col_idx, "patterns differ");
        let mut m = self.clone();
        for (v, o) in m.values.iter_mut().zip(&other.values) {
            *v += alpha * o;
        }
        m
    }

    pub fn max_asymmetry(&self) -> f64 {
        (0..self.n)
            .flat_map(|i| self.row(i).map(move |(j, v)| (i, j, v)))
            .map(|(i, j, v)| (v - self.get(j, i)).abs())
            .fold(0.0, f64::max)
    }

    /// Principal submatrix on `keep` (sorted, unique indices), as a dense-indexed CSR.
    pub fn principal_submatrix(&self, keep: &[usize]) -> Self {
        let mut map = vec![usize::MAX; self.n];
        for (new, &old) in keep.iter().enumerate() {
            map[old] = new;
        }
        let mut row_ptr = vec![0];
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        for &old in keep {
            for (j, v) in self.row(old) {
                if map[j] != usize::MAX {
                    col_idx.push(map[j]);
                    values.push(v);
                }
            }
            row_ptr.push(col_idx.len());
        }
        CsrMatrix {
            n: keep.len(),
            row_ptr,
            col_idx,
            values,
        }
    }

    /// MatrixMarket coordinate file, symmetric, lower triangle, 1-based.
    pub fn to_matrix_market(&self) -> String {
        let mut entries = Vec::new();
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                if j <= i {
                    entries.push((i, j, v));
                }
            }
        }
        let mut out = String::from("%%MatrixMarket matrix coordinate real symmetric\n");
        let _ = writeln!(out, "{} {} {}", self.n, self.n, entries.len());
        for (i, j, v) in entries {
            let _ = writeln!(out, "{} {} {:.17e}", i + 1, j + 1, v);
        }
        out
    }
}

/// Reverse Cuthill–McKee ordering; `perm[new] = old`.
pub fn reverse_cuthill_mckee(a: &CsrMatrix) -> Vec<usize> {
    let n = a.n();
    let degree: Vec<usize> = (0..n)
        .map(|i| a.row(i).filter(|&(j, _)| j != i).count())
        .collect();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    while order.len() < n {
        let seed = (0..n)
            .filter(|&i| !visited[i])
            .min_by_key(|&i| degree[i])
            .expect("unvisited vertex");
        let start = pseudo_peripheral(a, seed, &degree);
        let mut queue = VecDeque::from([start]);
        visited[start] = true;
        while let Some(v) = queue.pop_front() {
            order.push(v);
            let mut nbrs: Vec<usize> = a.row(v).map(|(j, _)| j).filter(|&j| !visited[j]).collect();
            nbrs.sort_by_key(|&j| (degree[j], j));
            for j in nbrs {
                visited[j] = true;
                queue.push_back(j);
            }
        }
    }
    order.reverse();
    order
}

fn pseudo_peripheral(a: &CsrMatrix, seed: usize, degree: &[usize]) -> usize {
    let mut root = seed;
    let mut ecc = 0;
    for _ in 0..8 {
        let levels = bfs_levels(a, root);
        let depth = *levels
            .iter()
            .filter(|&&l| l != usize::MAX)
            .max()
            .unwrap_or(&0);
        if depth <= ecc && ecc > 0 {
            break;
        }
        ecc = depth;
        root = (0..a.n())
            .filter(|&i| levels[i] == depth)
            .min_by_key(|&i| (degree[i], i))
            .unwrap_or(root);
    }
    root
}

fn bfs_levels(a: &CsrMatrix, root: usize) -> Vec<usize> {
    let mut level = vec![usize::MAX; a.n()];
    level[root] = 0;
    let mut queue = VecDeque::from([root]);
    while let Some(v) = queue.pop_front() {
        for (j, _) in a.row(v) {
            if level[j] == usize::MAX {
                level[j] = level[v] + 1;
                queue.push_back(j);
            }
        }
    }
    level
}

/// LDLᵀ factor stored row-wise in envelope form, without pivoting.
#[derive(Debug, Clone)]
pub struct LdlFactor {
    perm: Vec<usize>,
    first: Vec<usize>,
    start: Vec<usize>,
    lower: Vec<f64>,
    diag: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Inertia {
    pub negative: usize,
    pub zero: usize,
    pub positive: usize,
}

impl LdlFactor {
    /// Factors a symmetric matrix. Pivots of magnitude below
    /// `1e-14 · max|diag|` are treated as zero and abort the factorization.
    pub fn factor(a: &CsrMatrix) -> Result<Self> {
        let n = a.n();
        let perm = reverse_cuthill_mckee(a);
        let mut inv = vec![0; n];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }
        let first: Vec<usize> = (0..n)
            .map(|i| {
                a.row(perm[i])
                    .map(|(j, _)| inv[j])
                    .min()
                    .unwrap_or(i)
                    .min(i)
            })
            .collect();
        let mut start = Vec::with_capacity(n + 1);
        start.push(0);
        for i in 0..n {
            start.push(start[i] + (i - first[i]));
        }
        let mut lower = vec![0.0; start[n]];
        let mut diag = vec![0.0; n];
        for i in 0..n {
            for (j, v) in a.row(perm[i]) {
                let jn = inv[j];
                if jn < i {
                    lower[start[i] + jn - first[i]] = v;
                } else if jn == i {
                    diag[i] = v;
                }
            }
        }
        let scale = diag
            .iter()
            .fold(0.0f64, |m, d| m.max(d.abs()))
            .max(f64::MIN_POSITIVE);

        for i in 0..n {
            let fi = first[i];
            let row_i = start[i];
            for j in fi..i {
                let fj = first[j];
                let k0 = fi.max(fj);
                let mut s = lower[row_i + j - fi];
                let (li, lj) = (row_i + k0 - fi, start[j] + k0 - fj);
                for k in 0..(j - k0) {
                    s -= lower[li + k] * lower[lj + k];
                }
                lower[row_i + j - fi] = s;
            }
            // lower now holds L_ij · D_j; divide and accumulate the pivot.
            let mut d = diag[i];
            for j in fi..i {
                let w = lower[row_i + j - fi];
                let l = w / diag[j];
                d -= w * l;
                lower[row_i + j - fi] = l;
            }
            if !d.is_finite() || d.abs() <= 1e-14 * scale {
                return Err(Error::Factorization(format!(
                    "zero pivot at row {i} ({d:.3e})"
                )));
            }
            diag[i] = d;
        }
        Ok(LdlFactor {
            perm,
            first,
            start,
            lower,
            diag,
        })
    }

    /// Sylvester inertia read off the pivots.
    pub fn inertia(&self) -> Inertia {
        let negative = self.diag.iter().filter(|&&d| d < 0.0).count();
        let zero = self.diag.iter().filter(|&&d| d == 0.0).count();
        Inertia {
            negative,
            zero,
            positive: self.diag.len() - negative - zero,
        }
    }

    pub fn envelope_size(&self) -> usize {
        self.lower.len()
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.diag.len();
        let mut y: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let fi = self.first[i];
            let row = &self.lower[self.start[i]..self.start[i + 1]];
            let s: f64 = row.iter().zip(&y[fi..i]).map(|(l, y)| l * y).sum();
            y[i] -= s;
        }
        for (yi, d) in y.iter_mut().zip(&self.diag) {
            *yi /= d;
        }
        for i in (0..n).rev() {
            let fi = self.first[i];
            let yi = y[i];
            let row = &self.lower[self.start[i]..self.start[i + 1]];
            for (k, l) in row.iter().enumerate() {
                y[fi + k] -= l * yi;
            }
        }
        let mut x = vec![0.0; n];
        for (new, &old) in self.perm.iter().enumerate() {
            x[old] = y[new];
        }
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::gen_icosphere;

    fn laplacian_plus_identity(mesh: &TriangleMesh, shift: f64) -> CsrMatrix {
        let mut m = CsrMatrix::vertex_pattern(mesh);
        for i in 0..m.n() {
            let deg = m.row(i).count() as f64 - 1.0;
            for k in m.row_ptr[i]..m.row_ptr[i + 1] {
                m.values[k] = if m.col_idx[k] == i { deg + shift } else { -1.0 };
            }
        }
        m
    }

    #[test]
    fn ldl_solves_graph_laplacian_system() {
        let mesh = gen_icosphere(3).unwrap();
        let a = laplacian_plus_identity(&mesh, 0.5);
        let f = LdlFactor::factor(&a).unwrap();
        let x_true: Vec<f64> = (0..a.n()).map(|i| ((i * 37 % 101) as f64).sin()).collect();
        let b = a.mul_vec(&x_true);
        let x = f.solve(&b);
        let err = x
            .iter()
            .zip(&x_true)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-10, "{err}");
        assert_eq!(f.inertia().negative, 0);
        // RCM keeps the envelope far below dense storage.
        assert!(f.envelope_size() < a.n() * a.n() / 8);
    }

    #[test]
    fn inertia_counts_negative_eigenvalues() {
        let mesh = gen_icosphere(1).unwrap();
        // graph Laplacian eigenvalues: 0 and positive; shifting by -0.5 makes exactly one negative.
        let a = laplacian_plus_identity(&mesh, -0.5);
        let f = LdlFactor::factor(&a).unwrap();
        assert_eq!(f.inertia().negative, 1);
    }

    #[test]
    fn singular_matrix_is_reported() {
        let mesh = gen_icosphere(1).unwrap();
        let a = laplacian_plus_identity(&mesh, 0.0);
        assert!(LdlFactor::factor(&a).is_err());
    }

    #[test]
    fn matrix_market_header() {
        let mesh = gen_icosphere(0).unwrap();
        let a = laplacian_plus_identity(&mesh, 1.0);
        let mm = a.to_matrix_market();
        let mut lines = mm.lines();
        assert_eq!(
            lines.next(),
            Some("%%MatrixMarket matrix coordinate real symmetric")
        );
        assert_eq!(lines.next(), Some("12 12 42"));
    }
}
