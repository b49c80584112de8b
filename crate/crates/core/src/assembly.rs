//! Linear Lagrange finite elements on a disk mesh and the truncated
//! Dirichlet-to-Neumann closure.
//!
//! `F(k) = S + M_V − k² M − E(k)` with
//! `E(k) = Σ'_{n≤N} R·(k/π)(H_n'(kR)/H_n(kR))·(c_n c_nᵀ + s_n s_nᵀ)`, the
//! prime halving the `n = 0` term. `c_n`, `s_n` are the cosine and sine
//! moments of the boundary hat functions, with traces taken as linear in
//! the polar angle so every edge integral has a closed form.
//!
//! `S`, `M` and `M_V` are built on the same pattern (explicit zeros kept),
//! so `A(k) = S + M_V − k² M` is a value-wise combination. `E(k)` is kept
//! in factored form `U·diag(w(k))·Uᵀ` and only materialised on request.

use num_complex::Complex64;
use thiserror::Error;

use crate::linalg::{LinalgError, SparseComplexMatrix};
use crate::mesh::Mesh;
use crate::potential::{PotentialError, PotentialSpec};
use crate::specfun::{dtn_symbols, SpecFunError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AssemblyError {
    #[error(transparent)]
    Potential(#[from] PotentialError),
    #[error(transparent)]
    Pole(#[from] SpecFunError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("potential support radius {support} exceeds the truncation radius {radius}")]
    Support { support: f64, radius: f64 },
}

/// Symmetric quadrature rules on triangles.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QuadRule {
    /// Degree 2.
    ThreePoint,
    /// Degree 5.
    SevenPoint,
}

impl QuadRule {
    pub fn from_points(n: usize) -> Option<QuadRule> {
        match n {
            3 => Some(QuadRule::ThreePoint),
            7 => Some(QuadRule::SevenPoint),
            _ => None,
        }
    }

    pub fn points(self) -> usize {
        match self {
            QuadRule::ThreePoint => 3,
            QuadRule::SevenPoint => 7,
        }
    }

    /// Barycentric points and weights (summing to one).
    pub fn nodes(self) -> Vec<([f64; 3], f64)> {
        match self {
            QuadRule::ThreePoint => {
                let (a, b) = (2.0 / 3.0, 1.0 / 6.0);
                vec![([a, b, b], 1.0 / 3.0), ([b, a, b], 1.0 / 3.0), ([b, b, a], 1.0 / 3.0)]
            }
            QuadRule::SevenPoint => {
                let s = 15f64.sqrt();
                let (a1, b1, w1) = ((9.0 - 2.0 * s) / 21.0, (6.0 + s) / 21.0, (155.0 + s) / 1200.0);
                let (a2, b2, w2) = ((9.0 + 2.0 * s) / 21.0, (6.0 - s) / 21.0, (155.0 - s) / 1200.0);
                let t = 1.0 / 3.0;
                vec![
                    ([t, t, t], 0.225),
                    ([a1, b1, b1], w1),
                    ([b1, a1, b1], w1),
                    ([b1, b1, a1], w1),
                    ([a2, b2, b2], w2),
                    ([b2, a2, b2], w2),
                    ([b2, b2, a2], w2),
                ]
            }
        }
    }
}

fn corners(mesh: &Mesh, t: usize) -> ([usize; 3], [[f64; 2]; 3]) {
    let tri = mesh.triangles()[t];
    let v = mesh.vertices();
    (tri, [v[tri[0]], v[tri[1]], v[tri[2]]])
}

/// Local stiffness matrix of a linear triangle.
pub fn local_stiffness(p: [[f64; 2]; 3]) -> [[f64; 3]; 3] {
    let area = 0.5 * ((p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]));
    let b = [p[1][1] - p[2][1], p[2][1] - p[0][1], p[0][1] - p[1][1]];
    let c = [p[2][0] - p[1][0], p[0][0] - p[2][0], p[1][0] - p[0][0]];
    let mut k = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            k[i][j] = (b[i] * b[j] + c[i] * c[j]) / (4.0 * area);
        }
    }
    k
}

fn assemble_local<F>(mesh: &Mesh, mut local: F) -> Result<SparseComplexMatrix, AssemblyError>
where
    F: FnMut(usize, [[f64; 2]; 3]) -> Result<[[Complex64; 3]; 3], AssemblyError>,
{
    let mut trip = Vec::with_capacity(9 * mesh.triangles().len());
    for t in 0..mesh.triangles().len() {
        let (idx, p) = corners(mesh, t);
        let m = local(t, p)?;
        for i in 0..3 {
            for j in 0..3 {
                trip.push((idx[i], idx[j], m[i][j]));
            }
        }
    }
    Ok(SparseComplexMatrix::from_triplets(mesh.n_vertices(), trip)?)
}

fn real3(m: [[f64; 3]; 3]) -> [[Complex64; 3]; 3] {
    m.map(|row| row.map(|v| Complex64::new(v, 0.0)))
}

pub fn assemble_stiffness(mesh: &Mesh) -> SparseComplexMatrix {
    assemble_local(mesh, |_, p| Ok(real3(local_stiffness(p)))).expect("indices are in range")
}

pub fn assemble_mass(mesh: &Mesh) -> SparseComplexMatrix {
    assemble_local(mesh, |t, _| {
        let a = mesh.triangle_area(t) / 12.0;
        Ok(real3([[2.0 * a, a, a], [a, 2.0 * a, a], [a, a, 2.0 * a]]))
    })
    .expect("indices are in range")
}

pub fn assemble_potential(mesh: &Mesh, spec: &PotentialSpec, rule: QuadRule) -> Result<SparseComplexMatrix, AssemblyError> {
    let nodes = rule.nodes();
    assemble_local(mesh, |t, p| {
        let area = mesh.triangle_area(t);
        let mut m = [[Complex64::new(0.0, 0.0); 3]; 3];
        if spec.is_zero() {
            return Ok(m);
        }
        for (lam, w) in &nodes {
            let x = [
                lam[0] * p[0][0] + lam[1] * p[1][0] + lam[2] * p[2][0],
                lam[0] * p[0][1] + lam[1] * p[1][1] + lam[2] * p[2][1],
            ];
            let v = spec.eval(x)? * (w * area);
            for i in 0..3 {
                for j in 0..3 {
                    m[i][j] += v * (lam[i] * lam[j]);
                }
            }
        }
        Ok(m)
    })
}

/// `∫_0^1 e^{xt} dt` and `∫_0^1 t e^{xt} dt`.
fn edge_moments(x: Complex64) -> (Complex64, Complex64) {
    if x.norm() < 1.0 {
        // Taylor: g0 = Σ x^k/(k+1)!, g1 = Σ x^k/(k!(k+2))
        let mut g0 = Complex64::new(0.0, 0.0);
        let mut g1 = Complex64::new(0.0, 0.0);
        let mut p = Complex64::new(1.0, 0.0); // x^k / k!
        for k in 0..24 {
            g0 += p / (k + 1) as f64;
            g1 += p / (k + 2) as f64;
            p = p * x / (k + 1) as f64;
        }
        (g0, g1)
    } else {
        let e = x.exp();
        ((e - 1.0) / x, (e * (x - 1.0) + 1.0) / (x * x))
    }
}

/// Cosine and sine moments of the boundary hat functions, stored on the
/// boundary vertices only.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryModes {
    truncation: usize,
    radius: f64,
    dim: usize,
    nodes: Vec<usize>,
    cos: Vec<Vec<f64>>,
    sin: Vec<Vec<f64>>,
}

impl BoundaryModes {
    pub fn truncation(&self) -> usize {
        self.truncation
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    /// Global indices of the boundary vertices, ascending.
    pub fn nodes(&self) -> &[usize] {
        &self.nodes
    }

    /// `c_n` restricted to [`Self::nodes`].
    pub fn cos_local(&self, n: usize) -> &[f64] {
        &self.cos[n]
    }

    pub fn sin_local(&self, n: usize) -> &[f64] {
        &self.sin[n]
    }

    fn expand(&self, local: &[f64]) -> Vec<f64> {
        let mut v = vec![0.0; self.dim];
        for (&i, &x) in self.nodes.iter().zip(local) {
            v[i] = x;
        }
        v
    }

    /// `c_n` as a full vector.
    pub fn c(&self, n: usize) -> Vec<f64> {
        self.expand(&self.cos[n])
    }

    pub fn s(&self, n: usize) -> Vec<f64> {
        self.expand(&self.sin[n])
    }

    /// Number of columns of the low-rank factor, `2N + 1`.
    pub fn rank(&self) -> usize {
        2 * self.truncation + 1
    }

    /// Columns of the low-rank factor in the order `c_0, c_1, s_1, …, c_N, s_N`,
    /// each restricted to the boundary nodes.
    pub fn columns_local(&self) -> Vec<&[f64]> {
        let mut cols = vec![self.cos[0].as_slice()];
        for n in 1..=self.truncation {
            cols.push(&self.cos[n]);
            cols.push(&self.sin[n]);
        }
        cols
    }
}

pub fn assemble_boundary_modes(mesh: &Mesh, truncation: usize) -> BoundaryModes {
    let nodes = mesh.boundary_vertices();
    let local = |v: usize| nodes.binary_search(&v).expect("boundary vertex");
    let nb = nodes.len();
    let mut cos = vec![vec![0.0; nb]; truncation + 1];
    let mut sin = vec![vec![0.0; nb]; truncation + 1];
    for e in mesh.boundary_edges() {
        let (ia, ib) = (local(e.a), local(e.b));
        let delta = e.theta_b - e.theta_a;
        for n in 0..=truncation {
            let nf = n as f64;
            let (g0, g1) = edge_moments(Complex64::new(0.0, nf * delta));
            let phase = Complex64::from_polar(delta, nf * e.theta_a);
            let to_b = phase * g1;
            let to_a = phase * (g0 - g1);
            cos[n][ia] += to_a.re;
            sin[n][ia] += to_a.im;
            cos[n][ib] += to_b.re;
            sin[n][ib] += to_b.im;
        }
    }
    for v in sin[0].iter_mut() {
        *v = 0.0;
    }
    BoundaryModes { truncation, radius: mesh.radius(), dim: mesh.n_vertices(), nodes, cos, sin }
}

/// Everything needed to form `F(k)` on one mesh.
#[derive(Debug, Clone)]
pub struct OperatorBundle {
    pub stiffness: SparseComplexMatrix,
    pub mass: SparseComplexMatrix,
    pub potential: SparseComplexMatrix,
    pub modes: BoundaryModes,
    pub radius: f64,
}

impl OperatorBundle {
    pub fn assemble(mesh: &Mesh, spec: &PotentialSpec, truncation: usize, rule: QuadRule) -> Result<Self, AssemblyError> {
        if spec.support > mesh.radius() * (1.0 + 1e-12) {
            return Err(AssemblyError::Support { support: spec.support, radius: mesh.radius() });
        }
        Ok(OperatorBundle {
            stiffness: assemble_stiffness(mesh),
            mass: assemble_mass(mesh),
            potential: assemble_potential(mesh, spec, rule)?,
            modes: assemble_boundary_modes(mesh, truncation),
            radius: mesh.radius(),
        })
    }

    pub fn dim(&self) -> usize {
        self.mass.dim()
    }

    /// `A(k) = S + M_V − k² M`, on the shared mesh pattern.
    pub fn assemble_a(&self, k: Complex64) -> SparseComplexMatrix {
        let one = Complex64::new(1.0, 0.0);
        SparseComplexMatrix::combine(&[(one, &self.stiffness), (one, &self.potential), (-k * k, &self.mass)])
            .expect("bundle matrices share one dimension")
    }

    /// Weights `w_n(k)` of the DtN term, one per low-rank column
    /// (`c_0, c_1, s_1, …`): `R·(k/π)·H_n'/H_n`, halved for `n = 0`.
    pub fn dtn_weights(&self, k: Complex64) -> Result<Vec<Complex64>, AssemblyError> {
        let beta = dtn_symbols(self.modes.truncation, k, self.radius)?;
        let mut w = Vec::with_capacity(self.modes.rank());
        w.push(0.5 * self.radius * beta[0]);
        for b in &beta[1..] {
            w.push(self.radius * b);
            w.push(self.radius * b);
        }
        Ok(w)
    }

    /// `E(k) x` without forming `E`.
    pub fn apply_e(&self, k: Complex64, x: &[Complex64]) -> Result<Vec<Complex64>, AssemblyError> {
        let w = self.dtn_weights(k)?;
        let nodes = self.modes.nodes();
        let mut out = vec![Complex64::new(0.0, 0.0); x.len()];
        for (col, wn) in self.modes.columns_local().into_iter().zip(&w) {
            let dot: Complex64 = nodes.iter().zip(col).map(|(&i, &u)| x[i] * u).sum();
            let s = wn * dot;
            for (&i, &u) in nodes.iter().zip(col) {
                out[i] += s * u;
            }
        }
        Ok(out)
    }

    /// `F(k) x` without forming `F`.
    pub fn apply_f(&self, k: Complex64, x: &[Complex64]) -> Result<Vec<Complex64>, AssemblyError> {
        let mut y = self.assemble_a(k).mul_vec(x)?;
        let e = self.apply_e(k, x)?;
        for (a, b) in y.iter_mut().zip(&e) {
            *a -= b;
        }
        Ok(y)
    }

    /// The dense boundary block of `E(k)` on [`BoundaryModes::nodes`],
    /// row-major.
    pub fn boundary_block(&self, k: Complex64) -> Result<Vec<Vec<Complex64>>, AssemblyError> {
        let w = self.dtn_weights(k)?;
        let nb = self.modes.nodes().len();
        let mut e = vec![vec![Complex64::new(0.0, 0.0); nb]; nb];
        for (col, wn) in self.modes.columns_local().into_iter().zip(&w) {
            for (a, row) in e.iter_mut().enumerate() {
                for (b, v) in row.iter_mut().enumerate() {
                    // real product first keeps the block exactly symmetric
                    *v += wn * (col[a] * col[b]);
                }
            }
        }
        Ok(e)
    }

    /// Materialised `F(k)`: the mesh pattern plus a dense boundary clique.
    pub fn assemble_f(&self, k: Complex64) -> Result<SparseComplexMatrix, AssemblyError> {
        let a = self.assemble_a(k);
        let block = self.boundary_block(k)?;
        let nodes = self.modes.nodes();
        let mut trip: Vec<(usize, usize, Complex64)> = a.triplets().collect();
        for (ia, row) in block.iter().enumerate() {
            for (ib, v) in row.iter().enumerate() {
                trip.push((nodes[ia], nodes[ib], -v));
            }
        }
        Ok(SparseComplexMatrix::from_triplets(a.dim(), trip)?)
    }
}

pub fn assemble_f(bundle: &OperatorBundle, k: Complex64) -> Result<SparseComplexMatrix, AssemblyError> {
    bundle.assemble_f(k)
}
