//! Closed triangulated surfaces described intrinsically by connectivity and
//! edge lengths.
//!
//! A [`TriangleMesh`] is validated at construction and immutable afterwards.
//! Every downstream computation reads only the edge lengths; the optional
//! embedding is carried along for export and for tools that need positions
//! (Möbius centering, visualization).

mod generate;
mod io;

use std::collections::HashMap;
use std::hash::{Hash, Hasher};
use std::sync::OnceLock;

use serde::Serialize;

use crate::error::{Error, Result};

pub use generate::{
    gen_flat_torus, gen_icosphere, MeshGenerator, EQUILATERAL_LATTICE, MAX_ICOSPHERE_SUBDIVISIONS,
    SQUARE_LATTICE,
};
pub use io::{
    load_mesh, parse_intrinsic_json, parse_obj, parse_off, write_intrinsic_json, write_off,
    IntrinsicMeshFile, MeshFormat,
};

/// Relative tolerance between embedded and stored edge lengths.
pub const EMBEDDING_TOLERANCE: f64 = 1e-12;

#[derive(Debug)]
pub struct TriangleMesh {
    vertex_count: usize,
    triangles: Vec<[usize; 3]>,
    /// Undirected edges with `e[0] < e[1]`.
    edges: Vec<[usize; 2]>,
    edge_lengths: Vec<f64>,
    /// `tri_edges[t][k]` is the edge opposite corner `k` of triangle `t`.
    tri_edges: Vec<[usize; 3]>,
    embedding: Option<Vec<[f64; 3]>>,
    genus: usize,
    areas: Vec<f64>,
    vertex_areas: Vec<f64>,
    fingerprint: u64,
    diameter: OnceLock<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeshStats {
    pub vertices: usize,
    pub edges: usize,
    pub triangles: usize,
    pub area: f64,
    pub genus: usize,
    pub min_edge_length: f64,
    pub max_edge_length: f64,
    /// Worst triangle quality `4√3 A / (a² + b² + c²)`; 1 for equilateral.
    pub min_quality: f64,
    pub mean_quality: f64,
}

impl TriangleMesh {
    /// Builds a mesh from connectivity and explicit per-edge lengths.
    ///
    /// `lengths` lists `(i, j, len)` for undirected edges; order of `i, j`
    /// is irrelevant. Every edge of every triangle must be listed.
    pub fn from_intrinsic(
        vertex_count: usize,
        triangles: Vec<[usize; 3]>,
        lengths: &[(usize, usize, f64)],
    ) -> Result<Self> {
        let mut table = HashMap::with_capacity(lengths.len());
        for &(i, j, len) in lengths {
            if i >= vertex_count || j >= vertex_count || i == j {
                return Err(Error::InvalidMesh(format!(
                    "edge length entry ({i}, {j}) is not a valid edge"
                )));
            }
            if !(len.is_finite() && len > 0.0) {
                return Err(Error::InvalidMesh(format!(
                    "edge ({i}, {j}) has non-positive length {len}"
                )));
            }
            if table.insert(key(i, j), len).is_some() {
                return Err(Error::InvalidMesh(format!("edge ({i}, {j}) listed twice")));
            }
        }
        Self::build(
            vertex_count,
            triangles,
            |i, j| table.get(&key(i, j)).copied(),
            None,
        )
    }

    /// Builds a mesh from 3D positions; edge lengths are the Euclidean chord lengths.
    pub fn from_embedded(positions: Vec<[f64; 3]>, triangles: Vec<[usize; 3]>) -> Result<Self> {
        let n = positions.len();
        let pos = positions.clone();
        Self::build(
            n,
            triangles,
            |i, j| Some(dist(&pos[i], &pos[j])),
            Some(positions),
        )
    }

    fn build(
        vertex_count: usize,
        triangles: Vec<[usize; 3]>,
        length_of: impl Fn(usize, usize) -> Option<f64>,
        embedding: Option<Vec<[f64; 3]>>,
    ) -> Result<Self> {
        if vertex_count == 0 || triangles.is_empty() {
            return Err(Error::InvalidMesh(
                "mesh has no vertices or triangles".into(),
            ));
        }
        for (t, tri) in triangles.iter().enumerate() {
            if tri.iter().any(|&v| v >= vertex_count) {
                return Err(Error::InvalidMesh(format!(
                    "triangle {t} references a vertex out of range"
                )));
            }
            if tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2] {
                return Err(Error::InvalidMesh(format!("triangle {t} repeats a vertex")));
            }
        }

        // Directed half-edges: each must occur once, its twin once.
        let mut directed: HashMap<(usize, usize), usize> =
            HashMap::with_capacity(3 * triangles.len());
        let mut undirected: HashMap<(usize, usize), usize> =
            HashMap::with_capacity(3 * triangles.len() / 2);
        let mut edges = Vec::new();
        let mut edge_use = Vec::new();
        let mut tri_edges = Vec::with_capacity(triangles.len());
        for (t, tri) in triangles.iter().enumerate() {
            let mut te = [0usize; 3];
            for k in 0..3 {
                let (a, b) = (tri[(k + 1) % 3], tri[(k + 2) % 3]);
                if directed.insert((a, b), t).is_some() {
                    let k = key(a, b);
                    let count = triangles
                        .iter()
                        .filter(|tr| (0..3).any(|c| key(tr[c], tr[(c + 1) % 3]) == k))
                        .count();
                    if count > 2 {
                        return Err(Error::NonManifoldEdge(k.0, k.1, count));
                    }
                    return Err(Error::OrientationConflict(t));
                }
                let id = *undirected.entry(key(a, b)).or_insert_with(|| {
                    edges.push([a.min(b), a.max(b)]);
                    edge_use.push(0usize);
                    edges.len() - 1
                });
                edge_use[id] += 1;
                te[k] = id;
            }
            tri_edges.push(te);
        }
        for (id, &uses) in edge_use.iter().enumerate() {
            let [a, b] = edges[id];
            match uses {
                2 => {}
                1 => return Err(Error::OpenBoundary(a, b)),
                n => return Err(Error::NonManifoldEdge(a, b, n)),
            }
        }

        check_vertex_links(vertex_count, &triangles)?;
        check_connected(vertex_count, &edges)?;

        let mut edge_lengths = Vec::with_capacity(edges.len());
        for &[a, b] in &edges {
            match length_of(a, b) {
                Some(len) if len.is_finite() && len > 0.0 => edge_lengths.push(len),
                Some(len) => {
                    return Err(Error::InvalidMesh(format!(
                        "edge ({a}, {b}) has non-positive length {len}"
                    )))
                }
                None => {
                    return Err(Error::InvalidMesh(format!(
                        "missing length for edge ({a}, {b})"
                    )))
                }
            }
        }

        let mut areas = Vec::with_capacity(triangles.len());
        for (t, te) in tri_edges.iter().enumerate() {
            let l = te.map(|e| edge_lengths[e]);
            if !strict_triangle(l) {
                return Err(Error::DegenerateTriangle(t));
            }
            areas.push(heron(l));
        }

        let euler = vertex_count as i64 - edges.len() as i64 + triangles.len() as i64;
        if euler > 2 || (2 - euler) % 2 != 0 {
            return Err(Error::InvalidMesh(format!(
                "Euler characteristic {euler} does not match an orientable closed surface"
            )));
        }
        let genus = ((2 - euler) / 2) as usize;

        if let Some(pos) = &embedding {
            if pos.len() != vertex_count {
                return Err(Error::InvalidMesh(
                    "embedding has wrong vertex count".into(),
                ));
            }
            for (id, &[a, b]) in edges.iter().enumerate() {
                let d = dist(&pos[a], &pos[b]);
                if (d - edge_lengths[id]).abs() > EMBEDDING_TOLERANCE * edge_lengths[id] {
                    return Err(Error::InvalidMesh(format!(
                        "embedding does not reproduce length of edge ({a}, {b})"
                    )));
                }
            }
        }

        let mut vertex_areas = vec![0.0; vertex_count];
        for (tri, &a) in triangles.iter().zip(&areas) {
            for &v in tri {
                vertex_areas[v] += a / 3.0;
            }
        }

        let mut hasher = std::collections::hash_map::DefaultHasher::new();
        vertex_count.hash(&mut hasher);
        triangles.hash(&mut hasher);
        for len in &edge_lengths {
            len.to_bits().hash(&mut hasher);
        }

        Ok(TriangleMesh {
            vertex_count,
            triangles,
            edges,
            edge_lengths,
            tri_edges,
            embedding,
            genus,
            areas,
            vertex_areas,
            fingerprint: hasher.finish(),
            diameter: OnceLock::new(),
        })
    }

    pub fn vertex_count(&self) -> usize {
        self.vertex_count
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn edges(&self) -> &[[usize; 2]] {
        &self.edges
    }

    pub fn edge_lengths(&self) -> &[f64] {
        &self.edge_lengths
    }

    pub fn embedding(&self) -> Option<&[[f64; 3]]> {
        self.embedding.as_deref()
    }

    /// Always true: non-orientable inputs fail validation.
    pub fn orientable(&self) -> bool {
        true
    }

    pub fn genus(&self) -> usize {
        self.genus
    }

    pub fn euler_characteristic(&self) -> i64 {
        2 - 2 * self.genus as i64
    }

    /// Lengths of the edges opposite each corner of triangle `t`.
    pub fn triangle_lengths(&self, t: usize) -> [f64; 3] {
        self.tri_edges[t].map(|e| self.edge_lengths[e])
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        self.areas[t]
    }

    pub fn triangle_areas(&self) -> &[f64] {
        &self.areas
    }

    pub fn area(&self) -> f64 {
        self.areas.iter().sum()
    }

    /// Barycentric vertex areas (one third of each incident triangle).
    /// These are the exact quadrature weights for integrating P1 functions.
    pub fn vertex_areas(&self) -> &[f64] {
        &self.vertex_areas
    }

    /// Hash of connectivity and edge lengths; identifies the mesh a density
    /// or spectrum was computed on.
    pub fn fingerprint(&self) -> u64 {
        self.fingerprint
    }

    /// Neighbour lists with edge lengths, sorted by neighbour index.
    pub fn adjacency(&self) -> Vec<Vec<(usize, f64)>> {
        let mut adj = vec![Vec::new(); self.vertex_count];
        for (&[a, b], &len) in self.edges.iter().zip(&self.edge_lengths) {
            adj[a].push((b, len));
            adj[b].push((a, len));
        }
        for list in &mut adj {
            list.sort_by_key(|&(v, _)| v);
        }
        adj
    }

    /// Intrinsic graph diameter (longest shortest edge path), computed once.
    pub fn diameter(&self) -> f64 {
        *self.diameter.get_or_init(|| {
            use rayon::prelude::*;
            let adj = self.adjacency();
            (0..self.vertex_count)
                .into_par_iter()
                .map(|s| {
                    graph_distances(&adj, s, f64::INFINITY)
                        .into_iter()
                        .map(|(_, d)| d)
                        .fold(0.0, f64::max)
                })
                .reduce(|| 0.0, f64::max)
        })
    }

    pub fn stats(&self) -> MeshStats {
        mesh_stats(self)
    }
}

pub fn mesh_stats(mesh: &TriangleMesh) -> MeshStats {
    let (min_edge_length, max_edge_length) = mesh
        .edge_lengths
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), &l| {
            (lo.min(l), hi.max(l))
        });
    let qualities: Vec<f64> = (0..mesh.triangles.len())
        .map(|t| {
            let [a, b, c] = mesh.triangle_lengths(t);
            4.0 * 3f64.sqrt() * mesh.areas[t] / (a * a + b * b + c * c)
        })
        .collect();
    MeshStats {
        vertices: mesh.vertex_count,
        edges: mesh.edges.len(),
        triangles: mesh.triangles.len(),
        area: mesh.area(),
        genus: mesh.genus,
        min_edge_length,
        max_edge_length,
        min_quality: qualities.iter().copied().fold(f64::INFINITY, f64::min),
        mean_quality: qualities.iter().sum::<f64>() / qualities.len() as f64,
    }
}

/// Dijkstra from `source`, returning `(vertex, distance)` for every vertex
/// with distance at most `radius`.
pub fn graph_distances(adj: &[Vec<(usize, f64)>], source: usize, radius: f64) -> Vec<(usize, f64)> {
    use std::cmp::Reverse;
    use std::collections::BinaryHeap;

    struct Dist(f64);
    impl PartialEq for Dist {
        fn eq(&self, other: &Self) -> bool {
            self.0.total_cmp(&other.0).is_eq()
        }
    }
    impl Eq for Dist {}
    impl PartialOrd for Dist {
        fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
            Some(self.cmp(other))
        }
    }
    impl Ord for Dist {
        fn cmp(&self, other: &Self) -> std::cmp::Ordering {
            self.0.total_cmp(&other.0)
        }
    }

    let mut best = HashMap::new();
    let mut done = Vec::new();
    let mut heap = BinaryHeap::new();
    best.insert(source, 0.0);
    heap.push(Reverse((Dist(0.0), source)));
    while let Some(Reverse((Dist(d), v))) = heap.pop() {
        if best.get(&v).is_some_and(|&b| d > b) {
            continue;
        }
        if d > radius {
            break;
        }
        done.push((v, d));
        for &(u, len) in &adj[v] {
            let nd = d + len;
            if best.get(&u).is_none_or(|&b| nd < b) {
                best.insert(u, nd);
                heap.push(Reverse((Dist(nd), u)));
            }
        }
    }
    done
}

/// Triangle area from edge lengths, Kahan's cancellation-free ordering of Heron's formula.
pub fn heron(lengths: [f64; 3]) -> f64 {
    let mut l = lengths;
    l.sort_by(|a, b| b.total_cmp(a));
    let [a, b, c] = l;
    let p = (a + (b + c)) * (c - (a - b)) * (c + (a - b)) * (a + (b - c));
    0.25 * p.max(0.0).sqrt()
}

fn strict_triangle([a, b, c]: [f64; 3]) -> bool {
    a < b + c && b < a + c && c < a + b
}

fn key(i: usize, j: usize) -> (usize, usize) {
    (i.min(j), i.max(j))
}

fn dist(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

fn check_vertex_links(vertex_count: usize, triangles: &[[usize; 3]]) -> Result<()> {
    // For each vertex, map "previous" rim vertex to "next" around the fan.
    let mut fans: Vec<Vec<(usize, usize)>> = vec![Vec::new(); vertex_count];
    for tri in triangles {
        for k in 0..3 {
            fans[tri[k]].push((tri[(k + 1) % 3], tri[(k + 2) % 3]));
        }
    }
    for (v, fan) in fans.iter().enumerate() {
        if fan.is_empty() {
            return Err(Error::InvalidMesh(format!(
                "vertex {v} is not used by any triangle"
            )));
        }
        let next: HashMap<usize, usize> = fan.iter().copied().collect();
        let start = fan[0].0;
        let mut cur = start;
        let mut steps = 0;
        loop {
            cur = match next.get(&cur) {
                Some(&n) => n,
                None => return Err(Error::NonManifoldVertex(v)),
            };
            steps += 1;
            if cur == start || steps > fan.len() {
                break;
            }
        }
        if cur != start || steps != fan.len() {
            return Err(Error::NonManifoldVertex(v));
        }
    }
    Ok(())
}

fn check_connected(vertex_count: usize, edges: &[[usize; 2]]) -> Result<()> {
    let mut parent: Vec<usize> = (0..vertex_count).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    for &[a, b] in edges {
        let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
        if ra != rb {
            parent[ra] = rb;
        }
    }
    let root = find(&mut parent, 0);
    if (1..vertex_count).any(|v| find(&mut parent, v) != root) {
        return Err(Error::InvalidMesh("mesh is not connected".into()));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tetrahedron() -> TriangleMesh {
        let p = vec![
            [1.0, 1.0, 1.0],
            [1.0, -1.0, -1.0],
            [-1.0, 1.0, -1.0],
            [-1.0, -1.0, 1.0],
        ];
        TriangleMesh::from_embedded(p, vec![[0, 1, 2], [0, 3, 1], [0, 2, 3], [1, 3, 2]]).unwrap()
    }

    #[test]
    fn tetrahedron_is_genus_zero() {
        let m = tetrahedron();
        assert_eq!(m.genus(), 0);
        assert_eq!(m.edges().len(), 6);
        let side = 8f64.sqrt();
        assert!((m.area() - 4.0 * 3f64.sqrt() / 4.0 * side * side).abs() < 1e-12);
    }

    #[test]
    fn heron_matches_right_triangle() {
        assert!((heron([3.0, 4.0, 5.0]) - 6.0).abs() < 1e-14);
        // needle: 1, 1, 2 - 1e-12 has tiny but positive area
        assert!(heron([1.0, 1.0, 2.0 - 1e-12]) > 0.0);
    }

    #[test]
    fn open_surface_is_rejected() {
        let p = vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]];
        let err = TriangleMesh::from_embedded(p, vec![[0, 1, 2]]).unwrap_err();
        assert!(matches!(err, Error::OpenBoundary(..)), "{err}");
    }

    #[test]
    fn flipped_triangle_is_an_orientation_conflict() {
        let p = vec![
            [1.0, 1.0, 1.0],
            [1.0, -1.0, -1.0],
            [-1.0, 1.0, -1.0],
            [-1.0, -1.0, 1.0],
        ];
        let err = TriangleMesh::from_embedded(p, vec![[0, 1, 2], [0, 3, 1], [0, 2, 3], [1, 2, 3]])
            .unwrap_err();
        assert!(matches!(err, Error::OrientationConflict(3)), "{err}");
    }

    #[test]
    fn triangle_inequality_is_enforced() {
        let tris = vec![[0, 1, 2], [0, 3, 1], [0, 2, 3], [1, 3, 2]];
        let mut lens = vec![
            (0, 1, 1.0),
            (0, 2, 1.0),
            (1, 2, 3.0),
            (0, 3, 1.0),
            (1, 3, 1.0),
            (2, 3, 1.0),
        ];
        let err = TriangleMesh::from_intrinsic(4, tris.clone(), &lens).unwrap_err();
        assert_eq!(err.to_string(), "triangle 0: triangle inequality violated");
        lens[2].2 = 1.0;
        assert!(TriangleMesh::from_intrinsic(4, tris, &lens).is_ok());
    }

    #[test]
    fn two_spheres_sharing_a_vertex_are_rejected() {
        let mut tris = vec![[0, 1, 2], [0, 3, 1], [0, 2, 3], [1, 3, 2]];
        tris.extend([[0, 4, 5], [0, 6, 4], [0, 5, 6], [4, 6, 5]]);
        let lens: Vec<_> = [
            (0, 1),
            (0, 2),
            (1, 2),
            (0, 3),
            (1, 3),
            (2, 3),
            (0, 4),
            (0, 5),
            (4, 5),
            (0, 6),
            (4, 6),
            (5, 6),
        ]
        .iter()
        .map(|&(a, b)| (a, b, 1.0))
        .collect();
        let err = TriangleMesh::from_intrinsic(7, tris, &lens).unwrap_err();
        assert!(matches!(err, Error::NonManifoldVertex(0)), "{err}");
    }

    #[test]
    fn graph_distances_respect_radius() {
        let m = tetrahedron();
        let adj = m.adjacency();
        let all = graph_distances(&adj, 0, f64::INFINITY);
        assert_eq!(all.len(), 4);
        assert_eq!(graph_distances(&adj, 0, 0.1).len(), 1);
        assert!((m.diameter() - 8f64.sqrt()).abs() < 1e-12);
    }
}
