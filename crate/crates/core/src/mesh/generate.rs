use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use super::TriangleMesh;
use crate::error::{Error, Result};

/// Largest accepted icosphere subdivision level (655 362 vertices).
pub const MAX_ICOSPHERE_SUBDIVISIONS: u32 = 8;

/// Unit-sphere mesh: icosahedron refined `subdivisions` times by 1→4 splits,
/// new vertices projected radially. `V = 10·4^s + 2`.
pub fn gen_icosphere(subdivisions: u32) -> Result<TriangleMesh> {
    if subdivisions > MAX_ICOSPHERE_SUBDIVISIONS {
        return Err(Error::InvalidArgument(format!(
            "icosphere subdivisions {subdivisions} exceed limit {MAX_ICOSPHERE_SUBDIVISIONS}"
        )));
    }
    let phi = (1.0 + 5f64.sqrt()) / 2.0;
    let mut positions: Vec<[f64; 3]> = [
        [-1.0, phi, 0.0],
        [1.0, phi, 0.0],
        [-1.0, -phi, 0.0],
        [1.0, -phi, 0.0],
        [0.0, -1.0, phi],
        [0.0, 1.0, phi],
        [0.0, -1.0, -phi],
        [0.0, 1.0, -phi],
        [phi, 0.0, -1.0],
        [phi, 0.0, 1.0],
        [-phi, 0.0, -1.0],
        [-phi, 0.0, 1.0],
    ]
    .iter()
    .map(normalize)
    .collect();
    let mut triangles: Vec<[usize; 3]> = vec![
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

    for _ in 0..subdivisions {
        let mut midpoints: HashMap<(usize, usize), usize> = HashMap::new();
        let mut refined = Vec::with_capacity(4 * triangles.len());
        let mut midpoint = |a: usize, b: usize, positions: &mut Vec<[f64; 3]>| {
            *midpoints.entry((a.min(b), a.max(b))).or_insert_with(|| {
                let (p, q) = (positions[a], positions[b]);
                positions.push(normalize(&[p[0] + q[0], p[1] + q[1], p[2] + q[2]]));
                positions.len() - 1
            })
        };
        for &[a, b, c] in &triangles {
            let ab = midpoint(a, b, &mut positions);
            let bc = midpoint(b, c, &mut positions);
            let ca = midpoint(c, a, &mut positions);
            refined.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        triangles = refined;
    }
    TriangleMesh::from_embedded(positions, triangles)
}

/// Flat torus ℝ²/Γ for the lattice spanned by `basis[0]`, `basis[1]`,
/// sampled on an `nx × ny` grid. Each cell is split along its shorter
/// diagonal, so the equilateral lattice yields equilateral triangles.
pub fn gen_flat_torus(basis: [[f64; 2]; 2], nx: usize, ny: usize) -> Result<TriangleMesh> {
    let [b1, b2] = basis;
    let det = b1[0] * b2[1] - b1[1] * b2[0];
    let scale = (b1[0].hypot(b1[1]) * b2[0].hypot(b2[1])).max(f64::MIN_POSITIVE);
    if !det.is_finite() || det.abs() <= 1e-12 * scale {
        return Err(Error::InvalidArgument("singular lattice".into()));
    }
    if nx < 3 || ny < 3 {
        return Err(Error::InvalidArgument(format!(
            "grid too coarse ({nx}x{ny}); need at least 3x3"
        )));
    }
    let step_x = [b1[0] / nx as f64, b1[1] / nx as f64];
    let step_y = [b2[0] / ny as f64, b2[1] / ny as f64];
    let len = |dx: f64, dy: f64| {
        let v = [
            dx * step_x[0] + dy * step_y[0],
            dx * step_x[1] + dy * step_y[1],
        ];
        v[0].hypot(v[1])
    };
    // (1,-1) diagonal joins (i+1,j)-(i,j+1); (1,1) joins (i,j)-(i+1,j+1).
    let anti = len(1.0, -1.0) <= len(1.0, 1.0);

    let id = |i: usize, j: usize| (i % nx) + nx * (j % ny);
    let mut triangles = Vec::with_capacity(2 * nx * ny);
    let mut lengths = Vec::with_capacity(3 * nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let (v00, v10, v01, v11) = (id(i, j), id(i + 1, j), id(i, j + 1), id(i + 1, j + 1));
            if anti {
                triangles.push([v00, v10, v01]);
                triangles.push([v10, v11, v01]);
                lengths.push((v10, v01, len(1.0, -1.0)));
            } else {
                triangles.push([v00, v10, v11]);
                triangles.push([v00, v11, v01]);
                lengths.push((v00, v11, len(1.0, 1.0)));
            }
            lengths.push((v00, v10, len(1.0, 0.0)));
            lengths.push((v00, v01, len(0.0, 1.0)));
        }
    }
    if det < 0.0 {
        for t in &mut triangles {
            t.swap(1, 2);
        }
    }
    TriangleMesh::from_intrinsic(nx * ny, triangles, &lengths)
}

/// Equilateral lattice `(1,0), (1/2, √3/2)`.
pub const EQUILATERAL_LATTICE: [[f64; 2]; 2] = [[1.0, 0.0], [0.5, 0.866_025_403_784_438_6]];
pub const SQUARE_LATTICE: [[f64; 2]; 2] = [[1.0, 0.0], [0.0, 1.0]];

/// Textual generator spec: `icosphere:S`, `flat-torus:square:N`,
/// `flat-torus:equilateral:NxM`, or `flat-torus:a,b,c,d:N` for the lattice
/// spanned by `(a,b)` and `(c,d)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MeshGenerator {
    Icosphere(u32),
    FlatTorus {
        basis: [[f64; 2]; 2],
        nx: usize,
        ny: usize,
    },
}

impl MeshGenerator {
    pub fn generate(&self) -> Result<TriangleMesh> {
        match *self {
            MeshGenerator::Icosphere(s) => gen_icosphere(s),
            MeshGenerator::FlatTorus { basis, nx, ny } => gen_flat_torus(basis, nx, ny),
        }
    }
}

impl FromStr for MeshGenerator {
    type Err = Error;

    fn from_str(spec: &str) -> Result<Self> {
        let bad = |why: &str| Error::InvalidArgument(format!("generator '{spec}': {why}"));
        let parts: Vec<&str> = spec.split(':').collect();
        match parts.as_slice() {
            ["icosphere", s] => s
                .parse()
                .map(MeshGenerator::Icosphere)
                .map_err(|_| bad("subdivisions must be an integer")),
            ["flat-torus", lattice, grid] => {
                let basis = match *lattice {
                    "square" => SQUARE_LATTICE,
                    "equilateral" => EQUILATERAL_LATTICE,
                    custom => {
                        let v: Vec<f64> = custom
                            .split(',')
                            .map(|x| x.trim().parse::<f64>())
                            .collect::<std::result::Result<_, _>>()
                            .map_err(|_| bad("lattice must be square, equilateral or a,b,c,d"))?;
                        if v.len() != 4 {
                            return Err(bad("custom lattice needs four numbers"));
                        }
                        [[v[0], v[1]], [v[2], v[3]]]
                    }
                };
                let (nx, ny) = match grid.split_once('x') {
                    Some((a, b)) => (a.parse(), b.parse()),
                    None => (grid.parse(), grid.parse()),
                };
                let (nx, ny) = (
                    nx.map_err(|_| bad("bad grid size"))?,
                    ny.map_err(|_| bad("bad grid size"))?,
                );
                Ok(MeshGenerator::FlatTorus { basis, nx, ny })
            }
            _ => Err(bad("expected icosphere:S or flat-torus:LATTICE:N")),
        }
    }
}

impl fmt::Display for MeshGenerator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MeshGenerator::Icosphere(s) => write!(f, "icosphere:{s}"),
            MeshGenerator::FlatTorus { basis, nx, ny } => {
                let lattice = if *basis == SQUARE_LATTICE {
                    "square".to_string()
                } else if *basis == EQUILATERAL_LATTICE {
                    "equilateral".to_string()
                } else {
                    format!(
                        "{},{},{},{}",
                        basis[0][0], basis[0][1], basis[1][0], basis[1][1]
                    )
                };
                write!(f, "flat-torus:{lattice}:{nx}x{ny}")
            }
        }
    }
}

fn normalize(p: &[f64; 3]) -> [f64; 3] {
    let n = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
    [p[0] / n, p[1] / n, p[2] / n]
}

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;

    use super::*;

    const EQUILATERAL: [[f64; 2]; 2] = EQUILATERAL_LATTICE;

    #[test]
    fn icosphere_counts() {
        for s in 0..=3 {
            let m = gen_icosphere(s).unwrap();
            assert_eq!(m.vertex_count(), 10 * 4usize.pow(s) + 2);
            assert_eq!(m.triangles().len(), 20 * 4usize.pow(s));
            assert_eq!(m.genus(), 0);
        }
        assert_eq!(gen_icosphere(2).unwrap().vertex_count(), 162);
        assert!(gen_icosphere(9).is_err());
    }

    #[test]
    fn icosphere_area_converges_at_second_order() {
        let areas: Vec<f64> = (0..=5).map(|s| gen_icosphere(s).unwrap().area()).collect();
        for w in areas.windows(2) {
            assert!(w[1] > w[0]);
        }
        // Level 4 sits at 0.118% below 4π; level 5 is the first within 0.1%.
        let rel = |a: f64| (4.0 * PI - a) / (4.0 * PI);
        assert!(rel(areas[4]) < 1.5e-3);
        assert!(rel(areas[5]) < 1e-3);
        for s in 1..4 {
            let order = ((4.0 * PI - areas[s]) / (4.0 * PI - areas[s + 1])).log2();
            assert!(order >= 1.9, "s={s}: order {order}");
        }
    }

    #[test]
    fn embedded_lengths_match_stored_lengths() {
        let m = gen_icosphere(3).unwrap();
        let pos = m.embedding().unwrap();
        for (&[a, b], &len) in m.edges().iter().zip(m.edge_lengths()) {
            let d = super::super::dist(&pos[a], &pos[b]);
            assert!((d - len).abs() <= 1e-12 * len);
        }
    }

    #[test]
    fn square_torus() {
        let m = gen_flat_torus([[1.0, 0.0], [0.0, 1.0]], 8, 8).unwrap();
        assert_eq!(m.triangles().len(), 128);
        assert_eq!(m.genus(), 1);
        assert!((m.area() - 1.0).abs() < 1e-12);
        assert!(m.embedding().is_none());
    }

    #[test]
    fn equilateral_torus_has_equilateral_triangles() {
        for (nx, ny) in [(3, 3), (5, 7), (12, 12)] {
            let m = gen_flat_torus(EQUILATERAL, nx, ny).unwrap();
            assert!((m.area() - 3f64.sqrt() / 2.0).abs() < 1e-12);
            assert_eq!(m.genus(), 1);
        }
        let m = gen_flat_torus(EQUILATERAL, 6, 6).unwrap();
        assert!((m.stats().min_quality - 1.0).abs() < 1e-12);
    }

    #[test]
    fn torus_guards() {
        let err = gen_flat_torus([[1.0, 0.0], [0.0, 1.0]], 2, 8).unwrap_err();
        assert!(err.to_string().contains("grid too coarse"));
        assert!(gen_flat_torus([[1.0, 0.0], [2.0, 0.0]], 8, 8)
            .unwrap_err()
            .to_string()
            .contains("singular"));
    }

    #[test]
    fn generator_specs() {
        assert_eq!(
            "icosphere:3".parse::<MeshGenerator>().unwrap(),
            MeshGenerator::Icosphere(3)
        );
        let g: MeshGenerator = "flat-torus:equilateral:6x8".parse().unwrap();
        assert_eq!(g.generate().unwrap().vertex_count(), 48);
        let g: MeshGenerator = "flat-torus:1,0,0.2,1.5:5".parse().unwrap();
        assert!((g.generate().unwrap().area() - 1.5).abs() < 1e-12);
        assert_eq!(
            "flat-torus:square:12"
                .parse::<MeshGenerator>()
                .unwrap()
                .to_string(),
            "flat-torus:square:12x12"
        );
        assert!("sphere:2".parse::<MeshGenerator>().is_err());
        assert!("flat-torus:square:2"
            .parse::<MeshGenerator>()
            .unwrap()
            .generate()
            .is_err());
    }

    #[test]
    fn negatively_oriented_lattice_is_still_valid() {
        let m = gen_flat_torus([[0.0, 1.0], [1.0, 0.0]], 4, 5).unwrap();
        assert!((m.area() - 1.0).abs() < 1e-12);
    }
}
