use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::TriangleMesh;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeshFormat {
    Off,
    Obj,
    IntrinsicJson,
}

impl MeshFormat {
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "off" => Some(MeshFormat::Off),
            "obj" => Some(MeshFormat::Obj),
            "json" => Some(MeshFormat::IntrinsicJson),
            _ => None,
        }
    }
}

impl FromStr for MeshFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "off" => Ok(MeshFormat::Off),
            "obj" => Ok(MeshFormat::Obj),
            "json" | "intrinsic-json" | "intrinsic" => Ok(MeshFormat::IntrinsicJson),
            other => Err(Error::InvalidArgument(format!(
                "unknown mesh format '{other}'"
            ))),
        }
    }
}

/// On-disk intrinsic mesh. `density` is present only in density sidecars.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IntrinsicMeshFile {
    pub vertices: usize,
    pub triangles: Vec<[usize; 3]>,
    pub edge_lengths: Vec<(usize, usize, f64)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub density: Option<Vec<f64>>,
}

impl IntrinsicMeshFile {
    pub fn from_mesh(mesh: &TriangleMesh, density: Option<Vec<f64>>) -> Self {
        IntrinsicMeshFile {
            vertices: mesh.vertex_count(),
            triangles: mesh.triangles().to_vec(),
            edge_lengths: mesh
                .edges()
                .iter()
                .zip(mesh.edge_lengths())
                .map(|(&[a, b], &l)| (a, b, l))
                .collect(),
            density,
        }
    }

    pub fn to_mesh(&self) -> Result<TriangleMesh> {
        TriangleMesh::from_intrinsic(self.vertices, self.triangles.clone(), &self.edge_lengths)
    }
}

pub fn load_mesh(path: impl AsRef<Path>, format: MeshFormat) -> Result<TriangleMesh> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    match format {
        MeshFormat::Off => parse_off(&text),
        MeshFormat::Obj => parse_obj(&text),
        MeshFormat::IntrinsicJson => parse_intrinsic_json(&text),
    }
}

pub fn parse_intrinsic_json(text: &str) -> Result<TriangleMesh> {
    let file: IntrinsicMeshFile = serde_json::from_str(text).map_err(|e| Error::Parse {
        line: e.line(),
        message: e.to_string(),
    })?;
    file.to_mesh()
}

pub fn parse_off(text: &str) -> Result<TriangleMesh> {
    let mut tokens = OffTokens::new(text);
    let (line, header) = tokens.next_raw().ok_or(Error::Parse {
        line: 1,
        message: "empty file".into(),
    })?;
    // Header may be glued to the counts ("OFF12 20 30") in some exporters.
    let rest = header.strip_prefix("OFF").ok_or(Error::Parse {
        line,
        message: "missing OFF header".into(),
    })?;
    if !rest.is_empty() {
        tokens.pending = Some((line, rest));
    }
    let nv: usize = tokens.read("vertex count")?;
    let nf: usize = tokens.read("face count")?;
    let _edges: usize = tokens.read("edge count")?;
    let mut positions = Vec::with_capacity(nv);
    for _ in 0..nv {
        positions.push([
            tokens.read("coordinate")?,
            tokens.read("coordinate")?,
            tokens.read("coordinate")?,
        ]);
    }
    let mut triangles = Vec::with_capacity(nf);
    for f in 0..nf {
        let n: usize = tokens.read("face size")?;
        if n != 3 {
            return Err(Error::Parse {
                line: tokens.line,
                message: format!("face {f} has {n} vertices; only triangles are accepted"),
            });
        }
        triangles.push([
            tokens.read("vertex index")?,
            tokens.read("vertex index")?,
            tokens.read("vertex index")?,
        ]);
    }
    TriangleMesh::from_embedded(positions, triangles)
}

struct OffTokens<'a> {
    inner: Box<dyn Iterator<Item = (usize, &'a str)> + 'a>,
    pending: Option<(usize, &'a str)>,
    line: usize,
}

impl<'a> OffTokens<'a> {
    fn new(text: &'a str) -> Self {
        let inner = text.lines().enumerate().flat_map(|(n, line)| {
            let line = line.split('#').next().unwrap_or("");
            line.split_whitespace().map(move |tok| (n + 1, tok))
        });
        OffTokens {
            inner: Box::new(inner),
            pending: None,
            line: 0,
        }
    }

    fn next_raw(&mut self) -> Option<(usize, &'a str)> {
        let item = self.pending.take().or_else(|| self.inner.next());
        if let Some((line, _)) = item {
            self.line = line;
        }
        item
    }

    fn read<T: FromStr>(&mut self, what: &str) -> Result<T> {
        let line = self.line;
        let (line, tok) = self.next_raw().ok_or_else(|| Error::Parse {
            line,
            message: format!("unexpected end of file reading {what}"),
        })?;
        tok.parse().map_err(|_| Error::Parse {
            line,
            message: format!("expected {what}, found '{tok}'"),
        })
    }
}

pub fn parse_obj(text: &str) -> Result<TriangleMesh> {
    let mut positions = Vec::new();
    let mut triangles = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = n + 1;
        let body = raw.split('#').next().unwrap_or("");
        let mut parts = body.split_whitespace();
        match parts.next() {
            Some("v") => {
                let coords: Vec<f64> = parts
                    .take(3)
                    .map(|t| {
                        t.parse().map_err(|_| Error::Parse {
                            line,
                            message: format!("bad coordinate '{t}'"),
                        })
                    })
                    .collect::<Result<_>>()?;
                if coords.len() != 3 {
                    return Err(Error::Parse {
                        line,
                        message: "vertex needs three coordinates".into(),
                    });
                }
                positions.push([coords[0], coords[1], coords[2]]);
            }
            Some("f") => {
                let idx: Vec<usize> = parts
                    .map(|t| {
                        let head = t.split('/').next().unwrap_or("");
                        let i: i64 = head.parse().map_err(|_| Error::Parse {
                            line,
                            message: format!("bad face index '{t}'"),
                        })?;
                        let resolved = if i < 0 {
                            positions.len() as i64 + i
                        } else {
                            i - 1
                        };
                        if resolved < 0 || i == 0 {
                            return Err(Error::Parse {
                                line,
                                message: format!("face index '{t}' out of range"),
                            });
                        }
                        Ok(resolved as usize)
                    })
                    .collect::<Result<_>>()?;
                if idx.len() != 3 {
                    return Err(Error::Parse {
                        line,
                        message: format!(
                            "face {} has {} vertices; only triangles are accepted",
                            triangles.len(),
                            idx.len()
                        ),
                    });
                }
                triangles.push([idx[0], idx[1], idx[2]]);
            }
            _ => {}
        }
    }
    TriangleMesh::from_embedded(positions, triangles)
}

/// Writes an embedded mesh as ASCII OFF.
pub fn write_off(mesh: &TriangleMesh) -> Result<String> {
    let pos = mesh
        .embedding()
        .ok_or_else(|| Error::InvalidArgument("OFF export needs an embedded mesh".into()))?;
    let mut out = String::new();
    let _ = writeln!(
        out,
        "OFF\n{} {} {}",
        mesh.vertex_count(),
        mesh.triangles().len(),
        mesh.edges().len()
    );
    for p in pos {
        let _ = writeln!(out, "{:.17e} {:.17e} {:.17e}", p[0], p[1], p[2]);
    }
    for t in mesh.triangles() {
        let _ = writeln!(out, "3 {} {} {}", t[0], t[1], t[2]);
    }
    Ok(out)
}

pub fn write_intrinsic_json(mesh: &TriangleMesh, density: Option<&[f64]>) -> String {
    let file = IntrinsicMeshFile::from_mesh(mesh, density.map(<[f64]>::to_vec));
    serde_json::to_string_pretty(&file).expect("intrinsic mesh serializes")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{gen_flat_torus, gen_icosphere};

    #[test]
    fn off_icosahedron_round_trip() {
        let ico = gen_icosphere(0).unwrap();
        let text = write_off(&ico).unwrap();
        let m = parse_off(&text).unwrap();
        assert_eq!(
            (m.vertex_count(), m.triangles().len(), m.genus()),
            (12, 20, 0)
        );
    }

    #[test]
    fn obj_torus_has_genus_one() {
        // Embedded 4x4 torus of revolution.
        let (n, k) = (4usize, 4usize);
        let mut text = String::new();
        for i in 0..n {
            for j in 0..k {
                let (u, v) = (
                    i as f64 / n as f64 * std::f64::consts::TAU,
                    j as f64 / k as f64 * std::f64::consts::TAU,
                );
                let r = 2.0 + v.cos();
                text += &format!("v {} {} {}\n", r * u.cos(), r * u.sin(), v.sin());
            }
        }
        let id = |i: usize, j: usize| (i % n) * k + (j % k) + 1;
        for i in 0..n {
            for j in 0..k {
                text += &format!("f {} {} {}\n", id(i, j), id(i + 1, j), id(i + 1, j + 1));
                text += &format!(
                    "f {}/1 {}/1 {}/1\n",
                    id(i, j),
                    id(i + 1, j + 1),
                    id(i, j + 1)
                );
            }
        }
        let m = parse_obj(&text).unwrap();
        assert_eq!(m.genus(), 1);
    }

    #[test]
    fn quads_are_rejected() {
        let text = "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n";
        let err = parse_obj(text).unwrap_err();
        assert!(err.to_string().contains("only triangles"), "{err}");
        let off = "OFF\n4 1 0\n0 0 0\n1 0 0\n1 1 0\n0 1 0\n4 0 1 2 3\n";
        assert!(parse_off(off)
            .unwrap_err()
            .to_string()
            .contains("only triangles"));
    }

    #[test]
    fn non_manifold_off_names_the_edge() {
        // Three triangles on edge (0,1) plus caps: edge (0,1) used three times.
        let off = "OFF\n5 3 0\n0 0 0\n1 0 0\n0 1 0\n0 -1 0\n0 0 1\n3 0 1 2\n3 1 0 3\n3 0 1 4\n";
        let err = parse_off(off).unwrap_err();
        assert_eq!(
            err.to_string(),
            "non-manifold edge (0, 1): shared by 3 triangles"
        );
    }

    #[test]
    fn intrinsic_json_rejects_bad_triangle() {
        let text = r#"{"vertices": 4, "triangles": [[0,1,2],[0,3,1],[0,2,3],[1,3,2]],
            "edge_lengths": [[0,1,1],[0,2,1],[1,2,3],[0,3,1],[1,3,1],[2,3,1]]}"#;
        let err = parse_intrinsic_json(text).unwrap_err();
        assert!(err.to_string().contains("triangle inequality violated"));
    }

    #[test]
    fn intrinsic_json_round_trip_preserves_lengths() {
        let t = gen_flat_torus([[1.0, 0.0], [0.5, 0.75f64.sqrt()]], 4, 5).unwrap();
        let back = parse_intrinsic_json(&write_intrinsic_json(&t, None)).unwrap();
        assert_eq!(back.fingerprint(), t.fingerprint());
    }

    #[test]
    fn format_from_extension() {
        assert_eq!(
            MeshFormat::from_path(Path::new("a/b.OFF")),
            Some(MeshFormat::Off)
        );
        assert_eq!(
            MeshFormat::from_path(Path::new("x.json")),
            Some(MeshFormat::IntrinsicJson)
        );
        assert_eq!(MeshFormat::from_path(Path::new("x.ply")), None);
    }
}
