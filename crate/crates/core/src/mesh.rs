//! Ring triangulations of the disk and uniform red refinement.
//!
//! The coarse mesh has a centre vertex and concentric rings, ring `i` of
//! `m` holding `8i` equally spaced vertices starting at angle 0. Adjacent
//! rings are stitched by a zipper that always advances the ring whose next
//! vertex has the smaller angle. Because ring `i` contains the angles
//! `t·π/4` for every `t`, the rays at multiples of `π/4` are resolved by
//! mesh edges.

use std::collections::HashMap;
use std::f64::consts::{PI, TAU};
use std::fmt::Write as _;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeshError {
    #[error("target mesh size {target_h} must lie in (0, {radius})")]
    Param { radius: f64, target_h: f64 },
    #[error("mesh text line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("invalid mesh: {0}")]
    Invalid(String),
}

/// A boundary edge with the polar angles of its end points; `theta_b` is
/// `2π` rather than `0` on the edge that closes the circle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryEdge {
    pub a: usize,
    pub b: usize,
    pub theta_a: f64,
    pub theta_b: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    vertices: Vec<[f64; 2]>,
    triangles: Vec<[usize; 3]>,
    boundary: Vec<BoundaryEdge>,
    radius: f64,
    level: u32,
    h: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeshStats {
    pub h: f64,
    pub min_angle: f64,
    pub n_vertices: usize,
    pub n_triangles: usize,
    pub n_boundary: usize,
}

impl Mesh {
    /// Builds a mesh from raw parts. Only basic index checks are done here;
    /// see [`Mesh::validate`] for the full invariant check.
    pub fn from_parts(
        vertices: Vec<[f64; 2]>,
        triangles: Vec<[usize; 3]>,
        boundary: Vec<BoundaryEdge>,
        radius: f64,
        level: u32,
    ) -> Result<Mesh, MeshError> {
        let nv = vertices.len();
        if triangles.iter().flatten().any(|&i| i >= nv) || boundary.iter().any(|e| e.a >= nv || e.b >= nv) {
            return Err(MeshError::Invalid("vertex index out of range".into()));
        }
        let h = longest_edge(&vertices, &triangles);
        Ok(Mesh { vertices, triangles, boundary, radius, level, h })
    }

    pub fn vertices(&self) -> &[[f64; 2]] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn boundary_edges(&self) -> &[BoundaryEdge] {
        &self.boundary
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    /// Longest edge length.
    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    /// Sorted, deduplicated indices of the vertices on the outer circle.
    pub fn boundary_vertices(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self.boundary.iter().flat_map(|e| [e.a, e.b]).collect();
        v.sort_unstable();
        v.dedup();
        v
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangles[t];
        signed_area(self.vertices[a], self.vertices[b], self.vertices[c])
    }

    /// Area of the polygonal domain.
    pub fn area(&self) -> f64 {
        (0..self.triangles.len()).map(|t| self.triangle_area(t)).sum()
    }

    /// Unique undirected edges, each with the number of triangles using it.
    pub fn edges(&self) -> Vec<([usize; 2], usize)> {
        let mut count: HashMap<[usize; 2], usize> = HashMap::new();
        let mut order = Vec::new();
        for tri in &self.triangles {
            for (a, b) in [(tri[0], tri[1]), (tri[1], tri[2]), (tri[2], tri[0])] {
                let key = [a.min(b), a.max(b)];
                let c = count.entry(key).or_insert_with(|| {
                    order.push(key);
                    0
                });
                *c += 1;
            }
        }
        order.into_iter().map(|k| (k, count[&k])).collect()
    }

    /// Checks orientation, conformity, the Euler relation, boundary radii
    /// and the angular partition of the boundary.
    pub fn validate(&self) -> Result<(), MeshError> {
        let bad = |m: String| Err(MeshError::Invalid(m));
        for t in 0..self.triangles.len() {
            if !(self.triangle_area(t) > 0.0) {
                return bad(format!("triangle {t} is not counterclockwise"));
            }
        }
        let edges = self.edges();
        let mut boundary_keys: Vec<[usize; 2]> = Vec::new();
        for &(key, c) in &edges {
            match c {
                1 => boundary_keys.push(key),
                2 => {}
                _ => return bad(format!("edge {key:?} shared by {c} triangles")),
            }
        }
        let euler = self.vertices.len() as i64 - edges.len() as i64 + self.triangles.len() as i64;
        if euler != 1 {
            return bad(format!("Euler characteristic {euler}, expected 1"));
        }
        let mut declared: Vec<[usize; 2]> = self.boundary.iter().map(|e| [e.a.min(e.b), e.a.max(e.b)]).collect();
        declared.sort_unstable();
        boundary_keys.sort_unstable();
        if declared != boundary_keys {
            return bad("boundary edge list does not match the mesh boundary".into());
        }
        for &v in &self.boundary_vertices() {
            let [x, y] = self.vertices[v];
            if (x.hypot(y) - self.radius).abs() > 1e-12 * self.radius {
                return bad(format!("boundary vertex {v} is off the circle"));
            }
        }
        let mut sorted = self.boundary.clone();
        sorted.sort_by(|a, b| a.theta_a.total_cmp(&b.theta_a));
        let mut expect = 0.0;
        for e in &sorted {
            if e.theta_a != expect || !(e.theta_b > e.theta_a) {
                return bad(format!("boundary angles leave a gap or overlap at {}", e.theta_a));
            }
            expect = e.theta_b;
        }
        if !sorted.is_empty() && expect != TAU {
            return bad("boundary angles do not close at 2π".into());
        }
        Ok(())
    }

    pub fn stats(&self) -> MeshStats {
        mesh_stats(self)
    }

    /// Plain-text dump: a count header, a radius/level line, then `v`, `t`
    /// and `b` records. Floats use shortest round-trip formatting.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "vertices {} / triangles {} / boundary {}",
            self.vertices.len(),
            self.triangles.len(),
            self.boundary.len()
        );
        let _ = writeln!(s, "radius {:?} level {}", self.radius, self.level);
        for [x, y] in &self.vertices {
            let _ = writeln!(s, "v {x:?} {y:?}");
        }
        for [a, b, c] in &self.triangles {
            let _ = writeln!(s, "t {a} {b} {c}");
        }
        for e in &self.boundary {
            let _ = writeln!(s, "b {} {} {:?} {:?}", e.a, e.b, e.theta_a, e.theta_b);
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Mesh, MeshError> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let err = |line: usize, msg: &str| MeshError::Parse { line: line + 1, msg: msg.to_string() };

        let (ln, header) = lines.next().ok_or_else(|| err(0, "empty input"))?;
        let h: Vec<&str> = header.split_whitespace().collect();
        if h.len() != 8 || h[0] != "vertices" || h[2] != "/" || h[3] != "triangles" || h[5] != "/" || h[6] != "boundary" {
            return Err(err(ln, "expected `vertices N / triangles M / boundary K`"));
        }
        let count = |s: &str| s.parse::<usize>().map_err(|_| err(ln, "bad count"));
        let (nv, nt, nb) = (count(h[1])?, count(h[4])?, count(h[7])?);

        let (ln, meta) = lines.next().ok_or_else(|| err(ln, "missing radius line"))?;
        let m: Vec<&str> = meta.split_whitespace().collect();
        if m.len() != 4 || m[0] != "radius" || m[2] != "level" {
            return Err(err(ln, "expected `radius R level L`"));
        }
        let radius: f64 = m[1].parse().map_err(|_| err(ln, "bad radius"))?;
        let level: u32 = m[3].parse().map_err(|_| err(ln, "bad level"))?;

        let mut vertices = Vec::with_capacity(nv);
        let mut triangles = Vec::with_capacity(nt);
        let mut boundary = Vec::with_capacity(nb);
        for (ln, line) in lines {
            let f: Vec<&str> = line.split_whitespace().collect();
            let num = |i: usize| -> Result<f64, MeshError> {
                f.get(i).and_then(|s| s.parse().ok()).ok_or_else(|| err(ln, "bad number"))
            };
            let idx = |i: usize| -> Result<usize, MeshError> {
                f.get(i).and_then(|s| s.parse().ok()).ok_or_else(|| err(ln, "bad index"))
            };
            match f[0] {
                "v" if f.len() == 3 => vertices.push([num(1)?, num(2)?]),
                "t" if f.len() == 4 => triangles.push([idx(1)?, idx(2)?, idx(3)?]),
                "b" if f.len() == 5 => boundary.push(BoundaryEdge { a: idx(1)?, b: idx(2)?, theta_a: num(3)?, theta_b: num(4)? }),
                _ => return Err(err(ln, "unrecognised record")),
            }
        }
        if vertices.len() != nv || triangles.len() != nt || boundary.len() != nb {
            return Err(err(0, "record counts disagree with the header"));
        }
        Mesh::from_parts(vertices, triangles, boundary, radius, level)
    }
}

fn signed_area(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

fn longest_edge(vertices: &[[f64; 2]], triangles: &[[usize; 3]]) -> f64 {
    triangles
        .iter()
        .flat_map(|&[a, b, c]| [(a, b), (b, c), (c, a)])
        .map(|(a, b)| dist(vertices[a], vertices[b]))
        .fold(0.0, f64::max)
}

/// Number of rings used for a requested mesh size. The factor accounts
/// for the diagonal edges between rings being longer than the ring spacing.
fn ring_count(radius: f64, target_h: f64) -> usize {
    ((1.07 * radius / target_h).ceil() as usize).max(2)
}

/// Ring triangulation of the disk of the given radius; the result is level 1.
pub fn generate_disk_mesh(radius: f64, target_h: f64) -> Result<Mesh, MeshError> {
    if !(target_h > 0.0 && target_h < radius) {
        return Err(MeshError::Param { radius, target_h });
    }
    let m = ring_count(radius, target_h);

    // ring i starts at index 1 + 4 i (i - 1)
    let start = |i: usize| 1 + 4 * i * (i - 1);
    let mut vertices = Vec::with_capacity(start(m + 1));
    vertices.push([0.0, 0.0]);
    for i in 1..=m {
        let n = 8 * i;
        let r = if i == m { radius } else { radius * i as f64 / m as f64 };
        for j in 0..n {
            let t = TAU * j as f64 / n as f64;
            vertices.push([r * t.cos(), r * t.sin()]);
        }
    }

    let mut triangles = Vec::with_capacity(8 * m * m);
    for j in 0..8 {
        triangles.push([0, start(1) + j, start(1) + (j + 1) % 8]);
    }
    for i in 2..=m {
        let (n0, n1) = (8 * (i - 1), 8 * i);
        let (s0, s1) = (start(i - 1), start(i));
        let (mut p, mut q) = (0, 0);
        while p < n0 || q < n1 {
            let outer_first = q < n1 && (p == n0 || (q + 1) * n0 <= (p + 1) * n1);
            if outer_first {
                triangles.push([s0 + p % n0, s1 + q, s1 + (q + 1) % n1]);
                q += 1;
            } else {
                triangles.push([s0 + p, s1 + q % n1, s0 + (p + 1) % n0]);
                p += 1;
            }
        }
    }

    let nb = 8 * m;
    let sb = start(m);
    let boundary = (0..nb)
        .map(|j| BoundaryEdge {
            a: sb + j,
            b: sb + (j + 1) % nb,
            theta_a: TAU * j as f64 / nb as f64,
            theta_b: if j + 1 == nb { TAU } else { TAU * (j + 1) as f64 / nb as f64 },
        })
        .collect();

    Mesh::from_parts(vertices, triangles, boundary, radius, 1)
}

/// Red refinement: every triangle splits into four through its edge
/// midpoints. Midpoints of boundary edges are placed on the circle at the
/// mid angle. Existing vertices keep their indices.
pub fn refine(mesh: &Mesh) -> Mesh {
    let mut vertices = mesh.vertices.clone();
    let radius = mesh.radius;

    let mut boundary_mid: HashMap<[usize; 2], f64> = HashMap::new();
    for e in &mesh.boundary {
        boundary_mid.insert([e.a.min(e.b), e.a.max(e.b)], 0.5 * (e.theta_a + e.theta_b));
    }

    let mut mids: HashMap<[usize; 2], usize> = HashMap::new();
    let mut midpoint = |a: usize, b: usize, vertices: &mut Vec<[f64; 2]>| -> usize {
        let key = [a.min(b), a.max(b)];
        *mids.entry(key).or_insert_with(|| {
            let p = match boundary_mid.get(&key) {
                Some(&t) => [radius * t.cos(), radius * t.sin()],
                None => {
                    let (u, v) = (vertices[a], vertices[b]);
                    [0.5 * (u[0] + v[0]), 0.5 * (u[1] + v[1])]
                }
            };
            vertices.push(p);
            vertices.len() - 1
        })
    };

    let mut triangles = Vec::with_capacity(4 * mesh.triangles.len());
    for &[a, b, c] in &mesh.triangles {
        let ab = midpoint(a, b, &mut vertices);
        let bc = midpoint(b, c, &mut vertices);
        let ca = midpoint(c, a, &mut vertices);
        triangles.push([a, ab, ca]);
        triangles.push([ab, b, bc]);
        triangles.push([ca, bc, c]);
        triangles.push([ab, bc, ca]);
    }

    let mut boundary = Vec::with_capacity(2 * mesh.boundary.len());
    for e in &mesh.boundary {
        let mid = mids[&[e.a.min(e.b), e.a.max(e.b)]];
        let tm = 0.5 * (e.theta_a + e.theta_b);
        boundary.push(BoundaryEdge { a: e.a, b: mid, theta_a: e.theta_a, theta_b: tm });
        boundary.push(BoundaryEdge { a: mid, b: e.b, theta_a: tm, theta_b: e.theta_b });
    }

    let h = longest_edge(&vertices, &triangles);
    Mesh { vertices, triangles, boundary, radius, level: mesh.level + 1, h }
}

/// Level-`level` mesh: the base mesh refined `level - 1` times.
pub fn mesh_at_level(radius: f64, base_h: f64, level: u32) -> Result<Mesh, MeshError> {
    let mut mesh = generate_disk_mesh(radius, base_h)?;
    for _ in 1..level {
        mesh = refine(&mesh);
    }
    Ok(mesh)
}

pub fn mesh_stats(mesh: &Mesh) -> MeshStats {
    let mut min_angle = PI;
    for &[a, b, c] in &mesh.triangles {
        let p = [mesh.vertices[a], mesh.vertices[b], mesh.vertices[c]];
        for i in 0..3 {
            let (o, u, v) = (p[i], p[(i + 1) % 3], p[(i + 2) % 3]);
            let (ux, uy, vx, vy) = (u[0] - o[0], u[1] - o[1], v[0] - o[0], v[1] - o[1]);
            let angle = (ux * vy - uy * vx).abs().atan2(ux * vx + uy * vy);
            min_angle = min_angle.min(angle);
        }
    }
    MeshStats {
        h: mesh.h,
        min_angle,
        n_vertices: mesh.vertices.len(),
        n_triangles: mesh.triangles.len(),
        n_boundary: mesh.boundary.len(),
    }
}
