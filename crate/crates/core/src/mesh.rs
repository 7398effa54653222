//! Closed flat-triangle surface meshes.
//!
//! A [`SurfaceMesh`] is immutable once built. Construction validates the
//! connectivity (every edge shared by exactly two consistently oriented
//! triangles), computes per-panel areas, centroids and unit normals, and
//! orients the whole surface so that normals point away from the enclosed
//! solid.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use nalgebra::Vector3;
use thiserror::Error;

pub type Vec3 = Vector3<f64>;

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("non-triangle face at line {line} ({size} vertices)")]
    NonTriangle { line: usize, size: usize },
    #[error("triangle {triangle} references vertex {vertex}, but only {count} vertices exist")]
    IndexOutOfRange {
        triangle: usize,
        vertex: usize,
        count: usize,
    },
    #[error("triangle {0} is degenerate (zero area)")]
    Degenerate(usize),
    #[error("open surface: edge ({0}, {1}) is shared by {2} triangles")]
    OpenSurface(usize, usize, usize),
    #[error("inconsistent orientation at edge ({0}, {1})")]
    InconsistentOrientation(usize, usize),
    #[error("mesh has no triangles")]
    Empty,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceMesh {
    vertices: Vec<Vec3>,
    triangles: Vec<[usize; 3]>,
    areas: Vec<f64>,
    centroids: Vec<Vec3>,
    normals: Vec<Vec3>,
}

impl SurfaceMesh {
    /// Builds a mesh from raw vertex positions and triangle connectivity.
    ///
    /// If the enclosed signed volume comes out negative the orientation of
    /// every triangle is reversed, so the stored normals always point into
    /// the exterior domain.
    pub fn new(vertices: Vec<Vec3>, mut triangles: Vec<[usize; 3]>) -> Result<Self, MeshError> {
        if triangles.is_empty() {
            return Err(MeshError::Empty);
        }
        for (t, tri) in triangles.iter().enumerate() {
            for &v in tri {
                if v >= vertices.len() {
                    return Err(MeshError::IndexOutOfRange {
                        triangle: t,
                        vertex: v,
                        count: vertices.len(),
                    });
                }
            }
        }
        check_closed(&triangles)?;

        let signed_volume: f64 = triangles
            .iter()
            .map(|t| vertices[t[0]].dot(&vertices[t[1]].cross(&vertices[t[2]])) / 6.0)
            .sum();
        if signed_volume < 0.0 {
            for t in &mut triangles {
                t.swap(1, 2);
            }
        }

        let mut areas = Vec::with_capacity(triangles.len());
        let mut centroids = Vec::with_capacity(triangles.len());
        let mut normals = Vec::with_capacity(triangles.len());
        for (t, tri) in triangles.iter().enumerate() {
            let [a, b, c] = tri.map(|i| vertices[i]);
            let cross = (b - a).cross(&(c - a));
            let norm = cross.norm();
            // relative to the squared edge scale, so tiny but valid meshes pass
            let scale = (b - a).norm_squared().max((c - a).norm_squared());
            if norm <= 1e-14 * scale || norm == 0.0 {
                return Err(MeshError::Degenerate(t));
            }
            areas.push(0.5 * norm);
            centroids.push((a + b + c) / 3.0);
            normals.push(cross / norm);
        }

        Ok(Self {
            vertices,
            triangles,
            areas,
            centroids,
            normals,
        })
    }

    pub fn vertices(&self) -> &[Vec3] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn areas(&self) -> &[f64] {
        &self.areas
    }

    pub fn centroids(&self) -> &[Vec3] {
        &self.centroids
    }

    pub fn normals(&self) -> &[Vec3] {
        &self.normals
    }

    /// Number of panels `M`.
    pub fn len(&self) -> usize {
        self.triangles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    pub fn corners(&self, panel: usize) -> [Vec3; 3] {
        self.triangles[panel].map(|i| self.vertices[i])
    }

    pub fn total_area(&self) -> f64 {
        self.areas.iter().sum()
    }

    /// Volume enclosed by the surface, via the divergence theorem.
    pub fn enclosed_volume(&self) -> f64 {
        self.triangles
            .iter()
            .map(|t| {
                let [a, b, c] = t.map(|i| self.vertices[i]);
                a.dot(&b.cross(&c)) / 6.0
            })
            .sum()
    }

    /// Mesh width `h`: the longest edge in the mesh.
    pub fn mesh_width(&self) -> f64 {
        (0..self.len())
            .map(|p| self.panel_diameter(p))
            .fold(0.0, f64::max)
    }

    /// Longest edge of one panel (the diameter of a triangle).
    pub fn panel_diameter(&self, panel: usize) -> f64 {
        let [a, b, c] = self.corners(panel);
        (b - a).norm().max((c - b).norm()).max((a - c).norm())
    }

    /// Mean of all vertex positions.
    pub fn vertex_barycentre(&self) -> Vec3 {
        self.vertices.iter().sum::<Vec3>() / self.vertices.len() as f64
    }

    /// Smallest distance of a panel centroid from the origin.
    pub fn min_centroid_radius(&self) -> f64 {
        self.centroids
            .iter()
            .map(|c| c.norm())
            .fold(f64::INFINITY, f64::min)
    }

    /// Parses ASCII OFF text.
    pub fn parse_off(text: &str) -> Result<Self, MeshError> {
        // (line number, tokens) for every non-empty, non-comment line
        let mut lines = text.lines().enumerate().filter_map(|(n, l)| {
            let content = l.split('#').next().unwrap_or("").trim();
            (!content.is_empty()).then(|| (n + 1, content))
        });

        let (first_no, first) = lines.next().ok_or(MeshError::Parse {
            line: 1,
            msg: "empty file".into(),
        })?;
        let mut header: Vec<&str> = first.split_whitespace().collect();
        if header.first() == Some(&"OFF") {
            header.remove(0);
        } else if header[0].ends_with("OFF") {
            return Err(MeshError::Parse {
                line: first_no,
                msg: format!("unsupported OFF variant `{}`", header[0]),
            });
        } else {
            return Err(MeshError::Parse {
                line: first_no,
                msg: "missing OFF header".into(),
            });
        }
        let counts_line = if header.is_empty() {
            lines.next().ok_or(MeshError::Parse {
                line: first_no + 1,
                msg: "missing counts line".into(),
            })?
        } else {
            (first_no, first.trim_start_matches("OFF").trim())
        };
        let counts: Vec<usize> = parse_tokens(counts_line.1, counts_line.0)?;
        if counts.len() < 2 {
            return Err(MeshError::Parse {
                line: counts_line.0,
                msg: "expected vertex and face counts".into(),
            });
        }
        let (nv, nf) = (counts[0], counts[1]);

        let mut vertices = Vec::with_capacity(nv);
        for _ in 0..nv {
            let (n, l) = lines.next().ok_or(MeshError::Parse {
                line: counts_line.0,
                msg: format!("expected {nv} vertex lines"),
            })?;
            let xyz: Vec<f64> = parse_tokens(l, n)?;
            if xyz.len() < 3 {
                return Err(MeshError::Parse {
                    line: n,
                    msg: "vertex needs three coordinates".into(),
                });
            }
            vertices.push(Vec3::new(xyz[0], xyz[1], xyz[2]));
        }

        let mut triangles = Vec::with_capacity(nf);
        for _ in 0..nf {
            let (n, l) = lines.next().ok_or(MeshError::Parse {
                line: counts_line.0,
                msg: format!("expected {nf} face lines"),
            })?;
            let idx: Vec<usize> = parse_tokens(l, n)?;
            let size = *idx.first().ok_or(MeshError::Parse {
                line: n,
                msg: "empty face".into(),
            })?;
            if size != 3 {
                return Err(MeshError::NonTriangle { line: n, size });
            }
            if idx.len() < 4 {
                return Err(MeshError::Parse {
                    line: n,
                    msg: "face lists fewer indices than declared".into(),
                });
            }
            triangles.push([idx[1], idx[2], idx[3]]);
        }
        Self::new(vertices, triangles)
    }

    pub fn load_off(path: impl AsRef<Path>) -> Result<Self, MeshError> {
        let text = std::fs::read_to_string(path)?;
        Self::parse_off(&text)
    }

    /// ASCII OFF text. Coordinates use Rust's shortest round-trip float
    /// formatting, so `parse_off(write_off(m))` reproduces `m` bit for bit.
    pub fn write_off(&self) -> String {
        let mut out = String::new();
        writeln!(out, "OFF").unwrap();
        writeln!(out, "{} {} 0", self.vertices.len(), self.triangles.len()).unwrap();
        for v in &self.vertices {
            writeln!(out, "{:?} {:?} {:?}", v.x, v.y, v.z).unwrap();
        }
        for t in &self.triangles {
            writeln!(out, "3 {} {} {}", t[0], t[1], t[2]).unwrap();
        }
        out
    }

    pub fn save_off(&self, path: impl AsRef<Path>) -> Result<(), MeshError> {
        std::fs::write(path, self.write_off())?;
        Ok(())
    }
}

fn parse_tokens<T: std::str::FromStr>(line: &str, line_no: usize) -> Result<Vec<T>, MeshError> {
    line.split_whitespace()
        .map(|tok| {
            tok.parse::<T>().map_err(|_| MeshError::Parse {
                line: line_no,
                msg: format!("invalid token `{tok}`"),
            })
        })
        .collect()
}

fn check_closed(triangles: &[[usize; 3]]) -> Result<(), MeshError> {
    // undirected edge -> (count, net orientation)
    let mut edges: HashMap<(usize, usize), (usize, i32)> = HashMap::new();
    for t in triangles {
        for k in 0..3 {
            let (a, b) = (t[k], t[(k + 1) % 3]);
            let key = (a.min(b), a.max(b));
            let e = edges.entry(key).or_insert((0, 0));
            e.0 += 1;
            e.1 += if a < b { 1 } else { -1 };
        }
    }
    let mut sorted: Vec<_> = edges.into_iter().collect();
    sorted.sort_unstable_by_key(|(k, _)| *k);
    for ((a, b), (count, net)) in sorted {
        if count != 2 {
            return Err(MeshError::OpenSurface(a, b, count));
        }
        if net != 0 {
            return Err(MeshError::InconsistentOrientation(a, b));
        }
    }
    Ok(())
}

/// Icosahedron with `refinement` rounds of 1-to-4 midpoint subdivision,
/// vertices projected onto the unit sphere. Has `20 * 4^refinement` panels.
pub fn make_sphere(refinement: u32) -> SurfaceMesh {
    let phi = (1.0 + 5f64.sqrt()) / 2.0;
    let mut vertices: Vec<Vec3> = [
        (-1.0, phi, 0.0),
        (1.0, phi, 0.0),
        (-1.0, -phi, 0.0),
        (1.0, -phi, 0.0),
        (0.0, -1.0, phi),
        (0.0, 1.0, phi),
        (0.0, -1.0, -phi),
        (0.0, 1.0, -phi),
        (phi, 0.0, -1.0),
        (phi, 0.0, 1.0),
        (-phi, 0.0, -1.0),
        (-phi, 0.0, 1.0),
    ]
    .iter()
    .map(|&(x, y, z)| Vec3::new(x, y, z).normalize())
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

    for _ in 0..refinement {
        let mut midpoints: HashMap<(usize, usize), usize> = HashMap::new();
        let mut midpoint = |a: usize, b: usize, vertices: &mut Vec<Vec3>| -> usize {
            *midpoints.entry((a.min(b), a.max(b))).or_insert_with(|| {
                vertices.push(((vertices[a] + vertices[b]) * 0.5).normalize());
                vertices.len() - 1
            })
        };
        let mut next = Vec::with_capacity(triangles.len() * 4);
        for &[a, b, c] in &triangles {
            let ab = midpoint(a, b, &mut vertices);
            let bc = midpoint(b, c, &mut vertices);
            let ca = midpoint(c, a, &mut vertices);
            next.push([a, ab, ca]);
            next.push([b, bc, ab]);
            next.push([c, ca, bc]);
            next.push([ab, bc, ca]);
        }
        triangles = next;
    }
    SurfaceMesh::new(vertices, triangles).expect("icosphere is a closed surface")
}

/// Regular tetrahedron with unit edge length.
pub fn make_tetrahedron() -> SurfaceMesh {
    let s = 1.0 / 8f64.sqrt();
    let vertices = vec![
        Vec3::new(s, s, s),
        Vec3::new(s, -s, -s),
        Vec3::new(-s, s, -s),
        Vec3::new(-s, -s, s),
    ];
    let triangles = vec![[0, 1, 2], [0, 3, 1], [0, 2, 3], [1, 3, 2]];
    SurfaceMesh::new(vertices, triangles).expect("tetrahedron is a closed surface")
}

/// Unit cube `[0,1]^3` split into 12 triangles.
pub fn make_cube() -> SurfaceMesh {
    let vertices: Vec<Vec3> = (0..8)
        .map(|i| Vec3::new((i & 1) as f64, ((i >> 1) & 1) as f64, ((i >> 2) & 1) as f64))
        .collect();
    let quads = [
        [0, 2, 3, 1],
        [4, 5, 7, 6],
        [0, 1, 5, 4],
        [2, 6, 7, 3],
        [0, 4, 6, 2],
        [1, 3, 7, 5],
    ];
    let triangles = quads
        .iter()
        .flat_map(|q| [[q[0], q[1], q[2]], [q[0], q[2], q[3]]])
        .collect();
    SurfaceMesh::new(vertices, triangles).expect("cube is a closed surface")
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    const TETRA_OFF: &str = include_str!("../fixtures/tetrahedron.off");
    const CUBE_OFF: &str = include_str!("../fixtures/cube.off");

    fn assert_invariants(mesh: &SurfaceMesh) {
        let centre = mesh.vertex_barycentre();
        for p in 0..mesh.len() {
            assert!(mesh.areas()[p] > 0.0);
            assert!((mesh.normals()[p].norm() - 1.0).abs() < 1e-12);
            assert!(mesh.normals()[p].dot(&(mesh.centroids()[p] - centre)) > 0.0);
        }
        assert!(mesh.enclosed_volume() > 0.0);
    }

    #[test]
    fn tetrahedron_fixture() {
        let mesh = SurfaceMesh::parse_off(TETRA_OFF).unwrap();
        assert_eq!(mesh.len(), 4);
        for &a in mesh.areas() {
            assert!((a - 3f64.sqrt() / 4.0).abs() < 1e-14);
        }
        assert!((mesh.total_area() - 3f64.sqrt()).abs() < 1e-14);
        assert_invariants(&mesh);
    }

    #[test]
    fn cube_fixture() {
        let mesh = SurfaceMesh::parse_off(CUBE_OFF).unwrap();
        assert_eq!(mesh.len(), 12);
        assert!((mesh.total_area() - 6.0).abs() < 1e-14);
        assert!((mesh.enclosed_volume() - 1.0).abs() < 1e-14);
        assert_invariants(&mesh);
    }

    #[test]
    fn fixtures_match_generators() {
        assert_eq!(SurfaceMesh::parse_off(TETRA_OFF).unwrap(), make_tetrahedron());
        assert_eq!(SurfaceMesh::parse_off(CUBE_OFF).unwrap(), make_cube());
    }

    #[test]
    fn quad_face_is_rejected() {
        let text = "OFF\n4 1 0\n0 0 0\n1 0 0\n1 1 0\n0 1 0\n4 0 1 2 3\n";
        match SurfaceMesh::parse_off(text) {
            Err(MeshError::NonTriangle { line, size }) => {
                assert_eq!((line, size), (7, 4));
                let msg = SurfaceMesh::parse_off(text).unwrap_err().to_string();
                assert!(msg.contains("non-triangle face"));
            }
            other => panic!("expected non-triangle error, got {other:?}"),
        }
    }

    #[test]
    fn open_surface_is_rejected() {
        let text = "OFF\n4 3 0\n0 0 0\n1 0 0\n0 1 0\n0 0 1\n3 0 2 1\n3 0 1 3\n3 0 3 2\n";
        assert!(matches!(
            SurfaceMesh::parse_off(text),
            Err(MeshError::OpenSurface(_, _, 1))
        ));
    }

    #[test]
    fn parse_error_reports_line() {
        let text = "OFF\n4 4 0\n0 0 0\n1 x 0\n";
        match SurfaceMesh::parse_off(text) {
            Err(MeshError::Parse { line, .. }) => assert_eq!(line, 4),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn inward_orientation_is_flipped() {
        let t = make_tetrahedron();
        let flipped: Vec<[usize; 3]> = t.triangles().iter().map(|&[a, b, c]| [a, c, b]).collect();
        let mesh = SurfaceMesh::new(t.vertices().to_vec(), flipped).unwrap();
        assert_invariants(&mesh);
    }

    #[test]
    fn icosahedron() {
        let mesh = make_sphere(0);
        assert_eq!(mesh.len(), 20);
        assert_invariants(&mesh);
    }

    #[test]
    fn sphere_area_converges() {
        let four_pi = 4.0 * PI;
        let r2 = make_sphere(2);
        let r3 = make_sphere(3);
        assert_eq!(r2.len(), 320);
        assert_eq!(r3.len(), 1280);
        let e2 = (r2.total_area() - four_pi).abs();
        let e3 = (r3.total_area() - four_pi).abs();
        assert!(e2 / four_pi < 0.03, "relative area error {}", e2 / four_pi);
        assert!(e3 < e2);
        assert_invariants(&r3);
    }

    #[test]
    fn sphere_volume_converges_from_below() {
        let exact = 4.0 * PI / 3.0;
        let vols: Vec<f64> = (0..4).map(|r| make_sphere(r).enclosed_volume()).collect();
        for w in vols.windows(2) {
            assert!(w[0] < w[1]);
        }
        assert!(vols.iter().all(|&v| v < exact));
        assert!((exact - vols[3]) / exact < 0.01);
    }

    #[test]
    fn mesh_width_halves_roughly() {
        let h: Vec<f64> = (0..4).map(|r| make_sphere(r).mesh_width()).collect();
        for w in h.windows(2) {
            let ratio = w[1] / w[0];
            assert!(ratio > 0.45 && ratio < 0.6, "ratio {ratio}");
        }
    }

    #[test]
    fn off_round_trip_is_bit_exact() {
        let mesh = make_sphere(2);
        let back = SurfaceMesh::parse_off(&mesh.write_off()).unwrap();
        assert_eq!(back.vertices(), mesh.vertices());
        assert_eq!(back.triangles(), mesh.triangles());
    }
}
