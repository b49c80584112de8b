//! Spectral indicator search for the eigenvalues of a holomorphic matrix
//! function `F(z)` inside a rectangle.
//!
//! A disk `|z − c| ≤ r` is probed with the trapezoidal approximation of the
//! resolvent projection
//!
//! ```text
//! P f ≈ (1/N) Σ_j (z_j − c) F(z_j)^{-1} f,   z_j = c + r e^{2πij/N},
//! ```
//!
//! and the indicator `I = ‖P f|_N‖ / (√N ‖P f|_{N/2}‖)`, the half-count sum
//! reusing the even-indexed nodes. Regions are squares probed through their
//! circumscribed circles; a square with `I > tol_ind` is split into its four
//! quadrants until the radius drops to `tol_eps`. The surviving centres are
//! clustered and each cluster is refined into an eigenpair by inverse
//! iteration on `F(k)`.

use std::f64::consts::{FRAC_1_SQRT_2, PI, TAU};
use std::fmt::{self, Write as _};

use faer::linalg::solvers::Solve;
use faer::Mat;
use num_complex::Complex64;
use rayon::prelude::*;
use thiserror::Error;

use crate::assembly::{AssemblyError, OperatorBundle};
use crate::linalg::{inverse_iteration, lu_factor, norm2, random_vector, EigenEstimate, LinalgError, SparseComplexMatrix, SymbolicFactor};
use crate::specfun::SpecFunError;

/// Relative residual above which a quadrature solve counts as near a pole.
pub const NEAR_POLE_RESIDUAL: f64 = 1e-8;

/// A half-count projection below this fraction of the mean summand size
/// `(1/N) Σ r‖x_j‖` is rounding noise. Noise gives `‖P f|_N‖/‖P f|_{N/2}‖ ≈
/// 1/√2`, which would clear `tol_ind = 0.1`, so such regions are reported
/// as degenerate with indicator 0.
pub const NOISE_FLOOR: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid search configuration: {0}")]
    Config(String),
    #[error("F(z) is numerically singular at z = {z} (relative residual {residual:e})")]
    NearPole { z: Complex64, residual: f64 },
    #[error("quadrature node {z} hits a pole of the DtN symbol: {source}")]
    HankelPole { z: Complex64, source: SpecFunError },
    #[error("{live} live regions at level {level} exceed the budget of {cap}")]
    Budget { level: u32, live: usize, cap: usize },
    #[error("region radius still {radius:e} after {levels} levels")]
    LevelCap { levels: u32, radius: f64 },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Assembly(AssemblyError),
}

impl SimError {
    fn at(z: Complex64, e: AssemblyError) -> SimError {
        match e {
            AssemblyError::Pole(source) => SimError::HankelPole { z, source },
            e => SimError::Assembly(e),
        }
    }

    fn is_pole(&self) -> bool {
        matches!(self, SimError::NearPole { .. } | SimError::HankelPole { .. })
    }
}

/// A holomorphic matrix function that can be solved and applied pointwise.
pub trait OperatorFunction: Sync {
    fn dim(&self) -> usize;

    /// `F(z)^{-1} f`. Fails with [`SimError::NearPole`] when the solve is not
    /// accurate to [`NEAR_POLE_RESIDUAL`].
    fn solve(&self, z: Complex64, f: &[Complex64]) -> Result<Vec<Complex64>, SimError>;

    /// Both trapezoidal projections for one contour. The default solves
    /// node by node.
    fn contour_sums(&self, region: &SearchRegion, f: &[Complex64], n_points: usize, phase: f64) -> Result<ContourSums, SimError> {
        ContourSums::by_nodes(self, region, f, n_points, phase)
    }

    fn apply(&self, z: Complex64, x: &[Complex64]) -> Result<Vec<Complex64>, SimError>;

    /// Smallest-magnitude eigenpair of `F(k)`, `‖F(k)‖_∞`, and whether
    /// inverse iteration met `tol` (otherwise the best iterate is returned).
    fn smallest_eigenpair(&self, k: Complex64, tol: f64, max_iter: usize, seed: u64) -> Result<(EigenEstimate, f64, bool), SimError>;
}

fn relative_residual(fx: &[Complex64], f: &[Complex64]) -> f64 {
    let r: f64 = fx.iter().zip(f).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt();
    let s = norm2(f);
    if s > 0.0 {
        r / s
    } else {
        r
    }
}

fn eigen_of(a: &SparseComplexMatrix, tol: f64, max_iter: usize, seed: u64) -> Result<(EigenEstimate, f64, bool), SimError> {
    match inverse_iteration(a, tol, max_iter, seed) {
        Ok(est) => Ok((est, a.norm_inf(), true)),
        Err(LinalgError::NoConvergence { best, .. }) => Ok((*best, a.norm_inf(), false)),
        Err(e) => Err(e.into()),
    }
}

/// `F(z) = g(z)`, a 1×1 problem.
pub struct ScalarFunction<G>(pub G);

impl<G: Fn(Complex64) -> Complex64 + Sync> OperatorFunction for ScalarFunction<G> {
    fn dim(&self) -> usize {
        1
    }

    fn solve(&self, z: Complex64, f: &[Complex64]) -> Result<Vec<Complex64>, SimError> {
        let g = (self.0)(z);
        let x = f[0] / g;
        if g == Complex64::new(0.0, 0.0) || !x.is_finite() {
            return Err(SimError::NearPole { z, residual: f64::INFINITY });
        }
        Ok(vec![x])
    }

    fn apply(&self, z: Complex64, x: &[Complex64]) -> Result<Vec<Complex64>, SimError> {
        Ok(vec![(self.0)(z) * x[0]])
    }

    fn smallest_eigenpair(&self, k: Complex64, _tol: f64, _max_iter: usize, _seed: u64) -> Result<(EigenEstimate, f64, bool), SimError> {
        let g = (self.0)(k);
        let est = EigenEstimate { lambda: g, vector: vec![Complex64::new(1.0, 0.0)], residual: 0.0, iterations: 0 };
        Ok((est, g.norm(), true))
    }
}

/// `F(z)` given as a closure producing a sparse matrix, factored afresh
/// at every point. Meant for small planted problems.
pub struct MatrixFunction<G>(pub G);

impl<G: Fn(Complex64) -> SparseComplexMatrix + Sync> OperatorFunction for MatrixFunction<G> {
    fn dim(&self) -> usize {
        (self.0)(Complex64::new(0.0, 0.0)).dim()
    }

    fn solve(&self, z: Complex64, f: &[Complex64]) -> Result<Vec<Complex64>, SimError> {
        let a = (self.0)(z);
        let x = match lu_factor(&a) {
            Ok(fact) => fact.solve(f)?,
            Err(LinalgError::Singular { .. }) => return Err(SimError::NearPole { z, residual: f64::INFINITY }),
            Err(e) => return Err(e.into()),
        };
        let residual = relative_residual(&a.mul_vec(&x)?, f);
        if !(residual <= NEAR_POLE_RESIDUAL) {
            return Err(SimError::NearPole { z, residual });
        }
        Ok(x)
    }

    fn apply(&self, z: Complex64, x: &[Complex64]) -> Result<Vec<Complex64>, SimError> {
        Ok((self.0)(z).mul_vec(x)?)
    }

    fn smallest_eigenpair(&self, k: Complex64, tol: f64, max_iter: usize, seed: u64) -> Result<(EigenEstimate, f64, bool), SimError> {
        eigen_of(&(self.0)(k), tol, max_iter, seed)
    }
}

/// The finite element operator function of an [`OperatorBundle`].
///
/// `F(z) = A(z) − U D(z) Uᵀ` with `A(z) = S + M_V − z² M` sparse and the
/// DtN term of rank `2N + 1`. A single solve factors `A(z)` on a shared
/// symbolic analysis and applies the Woodbury correction
/// `y = A⁻¹f`, `W = A⁻¹U`, `(I − D UᵀW) t = D Uᵀy`, `x = y + W t`,
/// falling back to the materialised `F(z)` when `A(z)` is itself near
/// singular.
///
/// Contour sums factor `A(c)` once at the centre instead. With
/// `δ = z² − c²` and `T = A(c)⁻¹M`, `A(z)⁻¹ = Σ_k δ^k T^k A(c)⁻¹`; the
/// truncated series leaves the residual `δ^{m+1} M T^m A(c)⁻¹(f + U t)`
/// exactly, which is checked for every node. Regions where the series
/// does not settle within [`MAX_SERIES_TERMS`] go node by node.
pub struct FemOperator {
    bundle: OperatorBundle,
    symbolic: SymbolicFactor,
    nodes: Vec<usize>,
    /// Local boundary columns of `U`, one per DtN weight.
    columns: Vec<Vec<f64>>,
}

/// Longest Neumann series tried for one contour.
pub const MAX_SERIES_TERMS: usize = 40;
/// Relative truncation residual at which the series stops.
const SERIES_TOL: f64 = 1e-13;

impl FemOperator {
    pub fn new(bundle: OperatorBundle) -> Result<FemOperator, SimError> {
        let symbolic = SymbolicFactor::analyze(&bundle.assemble_a(Complex64::new(1.0, -1.0)))?;
        let nodes = bundle.modes.nodes().to_vec();
        let columns = bundle.modes.columns_local().into_iter().map(|c| c.to_vec()).collect();
        Ok(FemOperator { bundle, symbolic, nodes, columns })
    }

    pub fn bundle(&self) -> &OperatorBundle {
        &self.bundle
    }

    pub fn into_bundle(self) -> OperatorBundle {
        self.bundle
    }

    fn rank(&self) -> usize {
        self.columns.len()
    }

    /// `Uᵀ x`.
    fn project(&self, x: &[Complex64]) -> Vec<Complex64> {
        self.columns.iter().map(|c| self.nodes.iter().zip(c).map(|(&i, &u)| x[i] * u).sum()).collect()
    }

    /// `x += U t`.
    fn add_low_rank(&self, x: &mut [Complex64], t: &[Complex64]) {
        for (col, tc) in self.columns.iter().zip(t) {
            for (&i, &u) in self.nodes.iter().zip(col) {
                x[i] += tc * u;
            }
        }
    }

    /// `[f | U]`, column-major.
    fn rhs_block(&self, f: &[Complex64]) -> Vec<Complex64> {
        let n = self.dim();
        let mut rhs = vec![Complex64::new(0.0, 0.0); n * (self.rank() + 1)];
        rhs[..n].copy_from_slice(f);
        for (j, col) in self.columns.iter().enumerate() {
            let base = (j + 1) * n;
            for (&i, &u) in self.nodes.iter().zip(col) {
                rhs[base + i] = Complex64::new(u, 0.0);
            }
        }
        rhs
    }

    /// `Uᵀ` applied to every column of an `n × (rank + 1)` block; entry
    /// `(a, c)` at `a * (rank + 1) + c`.
    fn project_block(&self, block: &[Complex64]) -> Vec<Complex64> {
        let n = self.dim();
        let cols = self.rank() + 1;
        let mut out = vec![Complex64::new(0.0, 0.0); self.rank() * cols];
        for c in 0..cols {
            let p = self.project(&block[c * n..(c + 1) * n]);
            for (a, v) in p.into_iter().enumerate() {
                out[a * cols + c] = v;
            }
        }
        out
    }

    fn woodbury(&self, z: Complex64, f: &[Complex64], w: &[Complex64]) -> Result<Vec<Complex64>, SimError> {
        let n = self.dim();
        let m = self.rank();
        let a = self.bundle.assemble_a(z);
        let fact = self.symbolic.factor(&a)?;
        let mut block = self.rhs_block(f);
        fact.solve_many_in_place(&mut block, m + 1)?;
        let p = self.project_block(&block);
        let t = low_rank_correction(w, &p, m).ok_or(SimError::NearPole { z, residual: f64::INFINITY })?;

        let (y, wcols) = block.split_at(n);
        let mut x = y.to_vec();
        for (c, tc) in t.iter().enumerate() {
            for (xi, wi) in x.iter_mut().zip(&wcols[c * n..(c + 1) * n]) {
                *xi += tc * wi;
            }
        }

        let mut fx = a.mul_vec(&x)?;
        let ux = self.project(&x);
        let dux: Vec<Complex64> = ux.iter().zip(w).map(|(u, w)| -w * u).collect();
        self.add_low_rank(&mut fx, &dux);
        let residual = relative_residual(&fx, f);
        if !(residual <= NEAR_POLE_RESIDUAL) {
            return Err(SimError::NearPole { z, residual });
        }
        Ok(x)
    }

    fn direct(&self, z: Complex64, f: &[Complex64]) -> Result<Vec<Complex64>, SimError> {
        let fz = self.bundle.assemble_f(z).map_err(|e| SimError::at(z, e))?;
        let x = match lu_factor(&fz) {
            Ok(fact) => fact.solve(f)?,
            Err(LinalgError::Singular { .. }) => return Err(SimError::NearPole { z, residual: f64::INFINITY }),
            Err(e) => return Err(e.into()),
        };
        let residual = relative_residual(&fz.mul_vec(&x)?, f);
        if !(residual <= NEAR_POLE_RESIDUAL) {
            return Err(SimError::NearPole { z, residual });
        }
        Ok(x)
    }

    fn mass_block(&self, block: &[Complex64], cols: usize) -> Result<Vec<Complex64>, SimError> {
        let n = self.dim();
        let mut out = Vec::with_capacity(block.len());
        for c in 0..cols {
            out.extend(self.bundle.mass.mul_vec(&block[c * n..(c + 1) * n])?);
        }
        Ok(out)
    }

    /// Contour sums through the series about the centre; `None` when the
    /// series is not usable for this region.
    fn series_sums(&self, region: &SearchRegion, f: &[Complex64], n_points: usize, phase: f64) -> Result<Option<ContourSums>, SimError> {
        let n = self.dim();
        let m = self.rank();
        let cols = m + 1;
        let c = region.center;
        let zs = region.nodes(n_points, phase);
        let deltas: Vec<Complex64> = zs.iter().map(|z| z * z - c * c).collect();
        let dmax = deltas.iter().map(|d| d.norm()).fold(0.0, f64::max);
        let weights = zs.iter().map(|&z| self.bundle.dtn_weights(z).map_err(|e| SimError::at(z, e))).collect::<Result<Vec<_>, _>>()?;

        let fact = match self.symbolic.factor(&self.bundle.assemble_a(c)) {
            Ok(f) => f,
            Err(LinalgError::Singular { .. }) => return Ok(None),
            Err(e) => return Err(e.into()),
        };
        let mut block = self.rhs_block(f);
        let col_norms: Vec<f64> = (0..cols).map(|j| norm2(&block[j * n..(j + 1) * n])).collect();
        fact.solve_many_in_place(&mut block, cols)?;
        let b0_norms: Vec<f64> = (0..cols).map(|j| norm2(&block[j * n..(j + 1) * n])).collect();

        // P_k = Uᵀ T^k A(c)⁻¹ [f | U]
        let mut proj = vec![self.project_block(&block)];
        let mut last_tail = f64::INFINITY;
        let tail_norms = loop {
            let mb = self.mass_block(&block, cols)?;
            let mb_norms: Vec<f64> = (0..cols).map(|j| norm2(&mb[j * n..(j + 1) * n])).collect();
            let k = proj.len();
            let tail = (0..cols).map(|j| mb_norms[j] / col_norms[j]).fold(0.0, f64::max) * dmax.powi(k as i32);
            if tail <= SERIES_TOL {
                break mb_norms;
            }
            if k >= MAX_SERIES_TERMS || !tail.is_finite() || (k >= 4 && tail > 0.8 * last_tail) {
                return Ok(None);
            }
            last_tail = tail;
            block = mb;
            fact.solve_many_in_place(&mut block, cols)?;
            proj.push(self.project_block(&block));
        };
        let terms = proj.len();
        drop(block);

        // per-node low-rank corrections
        let mut ts = Vec::with_capacity(n_points);
        for (j, (&d, w)) in deltas.iter().zip(&weights).enumerate() {
            let mut pj = vec![Complex64::new(0.0, 0.0); m * cols];
            let mut dk = Complex64::new(1.0, 0.0);
            for pk in &proj {
                for (acc, v) in pj.iter_mut().zip(pk) {
                    *acc += dk * v;
                }
                dk *= d;
            }
            let z = zs[j];
            let t = low_rank_correction(w, &pj, m).ok_or(SimError::NearPole { z, residual: f64::INFINITY })?;
            // ‖δ^{m+1} M T^m A(c)⁻¹ (f + U t)‖ ≤ |δ|^{m+1} (‖M v_m‖ + Σ |t_c| ‖M V_m,c‖)
            let tail = d.norm().powi(terms as i32)
                * (tail_norms[0] + t.iter().zip(&tail_norms[1..]).map(|(tc, nv)| tc.norm() * nv).sum::<f64>());
            let residual = tail / col_norms[0];
            if !(residual <= NEAR_POLE_RESIDUAL) {
                return Err(SimError::NearPole { z, residual });
            }
            ts.push(t);
        }

        // Σ_j ω_j x_j = Σ_k T^k A(c)⁻¹ g_k, g_k = Σ_j ω_j δ_j^k (f + U t_j), by Horner
        let omegas = |j: usize| -> [Complex64; 2] {
            let w = (zs[j] - c) / n_points as f64;
            [w, if j % 2 == 0 { 2.0 * w } else { Complex64::new(0.0, 0.0) }]
        };
        let mut acc = vec![Complex64::new(0.0, 0.0); 2 * n];
        for k in (0..terms).rev() {
            let mut rhs = if k + 1 < terms { self.mass_block(&acc, 2)? } else { vec![Complex64::new(0.0, 0.0); 2 * n] };
            for q in 0..2 {
                let mut alpha = Complex64::new(0.0, 0.0);
                let mut beta = vec![Complex64::new(0.0, 0.0); m];
                for j in 0..n_points {
                    let wk = omegas(j)[q] * deltas[j].powu(k as u32);
                    alpha += wk;
                    for (b, t) in beta.iter_mut().zip(&ts[j]) {
                        *b += wk * t;
                    }
                }
                let part = &mut rhs[q * n..(q + 1) * n];
                for (r, fv) in part.iter_mut().zip(f) {
                    *r += alpha * fv;
                }
                self.add_low_rank(part, &beta);
            }
            fact.solve_many_in_place(&mut rhs, 2)?;
            acc = rhs;
        }

        let scale = region.radius / n_points as f64
            * ts.iter().map(|t| b0_norms[0] + t.iter().zip(&b0_norms[1..]).map(|(tc, nv)| tc.norm() * nv).sum::<f64>()).sum::<f64>();
        let half = acc.split_off(n);
        Ok(Some(ContourSums { full: acc, half, scale, solves: terms + 1 }))
    }
}

/// Solves `(I − D G) t = D Uᵀy` given `p = Uᵀ[y | W]` (row-major,
/// `rank × (rank + 1)`), rows scaled to unit maximum. `None` if singular.
fn low_rank_correction(w: &[Complex64], p: &[Complex64], m: usize) -> Option<Vec<Complex64>> {
    let cols = m + 1;
    let mut lhs = Mat::<Complex64>::zeros(m, m);
    let mut b = Mat::<Complex64>::zeros(m, 1);
    for a in 0..m {
        let row = &p[a * cols..(a + 1) * cols];
        let mut r: Vec<Complex64> = row[1..].iter().map(|g| -w[a] * g).collect();
        r[a] += 1.0;
        let s = r.iter().map(|v| v.norm()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
        for (c, v) in r.iter().enumerate() {
            lhs[(a, c)] = v / s;
        }
        b[(a, 0)] = w[a] * row[0] / s;
    }
    let t = lhs.full_piv_lu().solve(&b);
    let t: Vec<Complex64> = (0..m).map(|a| t[(a, 0)]).collect();
    t.iter().all(|v| v.is_finite()).then_some(t)
}

impl OperatorFunction for FemOperator {
    fn dim(&self) -> usize {
        self.bundle.dim()
    }

    fn solve(&self, z: Complex64, f: &[Complex64]) -> Result<Vec<Complex64>, SimError> {
        let w = self.bundle.dtn_weights(z).map_err(|e| SimError::at(z, e))?;
        match self.woodbury(z, f, &w) {
            Ok(x) => Ok(x),
            Err(SimError::NearPole { .. }) | Err(SimError::Linalg(LinalgError::Singular { .. })) => self.direct(z, f),
            Err(e) => Err(e),
        }
    }

    fn contour_sums(&self, region: &SearchRegion, f: &[Complex64], n_points: usize, phase: f64) -> Result<ContourSums, SimError> {
        match self.series_sums(region, f, n_points, phase)? {
            Some(s) => Ok(s),
            None => ContourSums::by_nodes(self, region, f, n_points, phase),
        }
    }

    fn apply(&self, z: Complex64, x: &[Complex64]) -> Result<Vec<Complex64>, SimError> {
        self.bundle.apply_f(z, x).map_err(|e| SimError::at(z, e))
    }

    fn smallest_eigenpair(&self, k: Complex64, tol: f64, max_iter: usize, seed: u64) -> Result<(EigenEstimate, f64, bool), SimError> {
        eigen_of(&self.bundle.assemble_f(k).map_err(|e| SimError::at(k, e))?, tol, max_iter, seed)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    /// Quadrature points per contour.
    pub n_points: usize,
    pub tol_ind: f64,
    pub tol_eps: f64,
    /// Radius of the level-1 disks.
    pub r0: f64,
    /// Seed of the probe vector.
    pub seed: u64,
    pub max_levels: u32,
    /// Largest number of regions allowed at one level.
    pub max_live: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig { n_points: 32, tol_ind: 0.1, tol_eps: 1e-3, r0: 0.25, seed: 1, max_levels: 48, max_live: 4096 }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        if self.n_points < 8 || self.n_points % 2 != 0 {
            return Err(SimError::Config(format!("n_points must be even and at least 8, got {}", self.n_points)));
        }
        if !(self.tol_ind > 0.0 && self.tol_ind < 1.0) {
            return Err(SimError::Config(format!("tol_ind must lie in (0, 1), got {}", self.tol_ind)));
        }
        if !(self.tol_eps > 0.0 && self.tol_eps < self.r0) {
            return Err(SimError::Config(format!("need 0 < tol_eps < r0, got tol_eps = {}, r0 = {}", self.tol_eps, self.r0)));
        }
        if self.max_levels == 0 || self.max_live == 0 {
            return Err(SimError::Config("max_levels and max_live must be positive".into()));
        }
        Ok(())
    }

    /// Level at which the region radius first drops to `tol_eps`.
    pub fn final_level(&self) -> u32 {
        let mut r = self.r0;
        let mut level = 1;
        while r > self.tol_eps {
            r *= 0.5;
            level += 1;
        }
        level
    }
}

/// Axis-aligned rectangle in ℂ.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchRect {
    pub re_min: f64,
    pub re_max: f64,
    pub im_min: f64,
    pub im_max: f64,
}

impl SearchRect {
    pub fn new(re_min: f64, re_max: f64, im_min: f64, im_max: f64) -> Result<SearchRect, SimError> {
        let r = SearchRect { re_min, re_max, im_min, im_max };
        if !(re_min < re_max && im_min < im_max) || ![re_min, re_max, im_min, im_max].iter().all(|v| v.is_finite()) {
            return Err(SimError::Config(format!("degenerate rectangle {r}")));
        }
        Ok(r)
    }

    /// `(−4, 4) × (−4, −0.5)i`.
    pub fn lower_band() -> SearchRect {
        SearchRect { re_min: -4.0, re_max: 4.0, im_min: -4.0, im_max: -0.5 }
    }

    pub fn contains(&self, z: Complex64, margin: f64) -> bool {
        z.re >= self.re_min - margin && z.re <= self.re_max + margin && z.im >= self.im_min - margin && z.im <= self.im_max + margin
    }

    /// Level-1 regions: squares of side `2·SQUARE_MARGIN·r0/√2` (contour
    /// radius `r0`) centred on a grid no coarser than the side, row by row
    /// from the bottom left.
    pub fn cover(&self, r0: f64) -> Vec<SearchRegion> {
        let s = 2.0 * half_side(r0);
        let (w, h) = (self.re_max - self.re_min, self.im_max - self.im_min);
        let nx = ((w / s).ceil() as usize).max(1);
        let ny = ((h / s).ceil() as usize).max(1);
        let (dx, dy) = (w / nx as f64, h / ny as f64);
        let mut out = Vec::with_capacity(nx * ny);
        for j in 0..ny {
            for i in 0..nx {
                let c = Complex64::new(self.re_min + (i as f64 + 0.5) * dx, self.im_min + (j as f64 + 0.5) * dy);
                out.push(SearchRegion { center: c, radius: r0, level: 1 });
            }
        }
        out
    }
}

impl fmt::Display for SearchRect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}) x ({}, {})i", self.re_min, self.re_max, self.im_min, self.im_max)
    }
}

/// Half-diagonal of a region's square relative to its contour radius.
/// Keeping the square strictly inside the circle bounds ρ = |λ − c|/r by
/// 0.8 for every λ in the square, so I ≥ 1/(√N·(1 + 0.8^{N/2})); with the
/// square inscribed (ρ = 1 at the corners) a resonance on a shared corner
/// scores ≈ 0.09 in all four children and is lost.
pub const SQUARE_MARGIN: f64 = 0.8;

fn half_side(radius: f64) -> f64 {
    SQUARE_MARGIN * radius * FRAC_1_SQRT_2
}

/// A square of the search quadtree, probed through a circle of radius
/// `radius` that strictly contains it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchRegion {
    pub center: Complex64,
    pub radius: f64,
    pub level: u32,
}

impl SearchRegion {
    pub fn new(center: Complex64, radius: f64) -> SearchRegion {
        SearchRegion { center, radius, level: 1 }
    }

    /// Inside the contour (up to rounding).
    pub fn contains(&self, z: Complex64) -> bool {
        (z - self.center).norm() <= self.radius * (1.0 + 1e-12)
    }

    pub fn half_side(&self) -> f64 {
        half_side(self.radius)
    }

    /// Inside the square.
    pub fn square_contains(&self, z: Complex64) -> bool {
        let h = self.half_side() * (1.0 + 1e-12);
        (z.re - self.center.re).abs() <= h && (z.im - self.center.im).abs() <= h
    }

    /// The four quadrants: centres at `c + (s/4)(±1 ± i)` for side `s`,
    /// radius `r/2`. They tile this square, so their circles cover it.
    pub fn children(&self) -> [SearchRegion; 4] {
        let d = 0.5 * self.half_side();
        let r = 0.5 * self.radius;
        let level = self.level + 1;
        [(-1.0, -1.0), (1.0, -1.0), (-1.0, 1.0), (1.0, 1.0)]
            .map(|(a, b)| SearchRegion { center: self.center + Complex64::new(a * d, b * d), radius: r, level })
    }

    /// Trapezoidal nodes on the circle, offset by `phase`.
    pub fn nodes(&self, n: usize, phase: f64) -> Vec<Complex64> {
        (0..n).map(|j| self.center + Complex64::from_polar(self.radius, phase + TAU * j as f64 / n as f64)).collect()
    }
}

/// Probe vector used by every region of a search.
pub fn probe_vector(dim: usize, seed: u64) -> Vec<Complex64> {
    random_vector(dim, seed)
}

/// The `N`- and `N/2`-point trapezoidal projections of one contour.
#[derive(Debug, Clone, PartialEq)]
pub struct ContourSums {
    pub full: Vec<Complex64>,
    pub half: Vec<Complex64>,
    /// Size of the summands, `(r/N) Σ_j ‖x_j‖` or an upper bound of it.
    pub scale: f64,
    /// Linear solves spent (block solves count once).
    pub solves: usize,
}

impl ContourSums {
    pub fn by_nodes<P: OperatorFunction + ?Sized>(
        provider: &P,
        region: &SearchRegion,
        f: &[Complex64],
        n_points: usize,
        phase: f64,
    ) -> Result<ContourSums, SimError> {
        let xs = solve_nodes(provider, region, f, n_points, phase)?;
        let scale = region.radius * xs.iter().map(|x| norm2(x)).sum::<f64>() / n_points as f64;
        Ok(ContourSums {
            full: quadrature(region, &xs, phase, 1),
            half: quadrature(region, &xs, phase, 2),
            scale,
            solves: n_points,
        })
    }
}

fn solve_nodes<P: OperatorFunction + ?Sized>(
    provider: &P,
    region: &SearchRegion,
    f: &[Complex64],
    n: usize,
    phase: f64,
) -> Result<Vec<Vec<Complex64>>, SimError> {
    region.nodes(n, phase).into_iter().map(|z| provider.solve(z, f)).collect()
}

/// `(1/n) Σ (z_j − c) x_j` over the nodes `j ≡ 0 mod step`.
fn quadrature(region: &SearchRegion, xs: &[Vec<Complex64>], phase: f64, step: usize) -> Vec<Complex64> {
    let n = xs.len();
    let count = n / step;
    let mut out = vec![Complex64::new(0.0, 0.0); xs[0].len()];
    for j in (0..n).step_by(step) {
        let dz = Complex64::from_polar(region.radius, phase + TAU * j as f64 / n as f64);
        for (o, x) in out.iter_mut().zip(&xs[j]) {
            *o += dz * x;
        }
    }
    let s = 1.0 / count as f64;
    out.iter_mut().for_each(|v| *v *= s);
    out
}

/// Trapezoidal approximation of `(1/2πi)∮ F(z)^{-1} f dz` on the region's
/// circle with `n_points` nodes, solving node by node.
pub fn projection_apply<P: OperatorFunction + ?Sized>(
    provider: &P,
    region: &SearchRegion,
    f: &[Complex64],
    n_points: usize,
) -> Result<Vec<Complex64>, SimError> {
    if n_points == 0 {
        return Err(SimError::Config("at least one quadrature point is needed".into()));
    }
    let xs = solve_nodes(provider, region, f, n_points, 0.0)?;
    Ok(quadrature(region, &xs, 0.0, 1))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Indicator {
    pub value: f64,
    /// `‖P f|_N‖₂`.
    pub norm_full: f64,
    /// `‖P f|_{N/2}‖₂`.
    pub norm_half: f64,
    /// The projections are at the rounding floor ([`NOISE_FLOOR`]);
    /// `value` is reported as 0.
    pub degenerate: bool,
    /// Nodes were rotated by `π/N` after a near-pole solve.
    pub rotated: bool,
}

fn indicator_from(sums: &ContourSums, n_points: usize, rotated: bool) -> Indicator {
    let norm_full = norm2(&sums.full);
    let norm_half = norm2(&sums.half);
    if !(norm_half.is_normal() && norm_full.is_normal()) || norm_half <= NOISE_FLOOR * sums.scale {
        return Indicator { value: 0.0, norm_full, norm_half, degenerate: true, rotated };
    }
    let value = norm_full / (norm_half * (n_points as f64).sqrt());
    Indicator { value, norm_full, norm_half, degenerate: false, rotated }
}

/// Indicator of one region with a given probe vector; no rotation retry.
pub fn indicator_with<P: OperatorFunction + ?Sized>(
    provider: &P,
    region: &SearchRegion,
    f: &[Complex64],
    n_points: usize,
) -> Result<Indicator, SimError> {
    if n_points < 2 || n_points % 2 != 0 {
        return Err(SimError::Config(format!("n_points must be even, got {n_points}")));
    }
    let sums = provider.contour_sums(region, f, n_points, 0.0)?;
    Ok(indicator_from(&sums, n_points, false))
}

/// Indicator of one region with the probe vector drawn from `config.seed`.
pub fn indicator<P: OperatorFunction + ?Sized>(provider: &P, region: &SearchRegion, config: &SimConfig) -> Result<Indicator, SimError> {
    config.validate()?;
    let f = probe_vector(provider.dim(), config.seed);
    indicator_with(provider, region, &f, config.n_points)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    Subdivide,
    Accept,
    Discard,
    /// Both the nominal and the rotated node sets hit a pole; the region is
    /// kept as if flagged.
    OnContour,
}

impl Decision {
    pub fn as_str(self) -> &'static str {
        match self {
            Decision::Subdivide => "subdivide",
            Decision::Accept => "accept",
            Decision::Discard => "discard",
            Decision::OnContour => "on-contour",
        }
    }

    fn flagged(self) -> bool {
        self != Decision::Discard
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceEntry {
    pub region: SearchRegion,
    pub indicator: Option<Indicator>,
    pub decision: Decision,
}

impl fmt::Display for TraceEntry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let r = &self.region;
        write!(f, "{} {:+.12e} {:+.12e} {:.6e} ", r.level, r.center.re, r.center.im, r.radius)?;
        match &self.indicator {
            Some(i) => write!(f, "{:.6e}", i.value)?,
            None => f.write_str("nan")?,
        }
        f.write_str(" ")?;
        f.write_str(self.decision.as_str())?;
        if self.indicator.is_some_and(|i| i.rotated) {
            f.write_str(" rotated")?;
        }
        if self.indicator.is_some_and(|i| i.degenerate) {
            f.write_str(" degenerate")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Provenance {
    pub final_level: u32,
    /// Region centres from level 1 down to the accepted region.
    pub centers: Vec<Complex64>,
    /// Number of accepted regions merged into this value.
    pub cluster_size: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResonanceResult {
    pub k: Complex64,
    /// `‖F(k) u‖₂` with `‖u‖₂ = 1`.
    pub residual: f64,
    /// Smallest-magnitude eigenvalue of `F(k)`.
    pub lambda: Complex64,
    pub eigenvector: Vec<Complex64>,
    /// `‖F(k)‖_∞`.
    pub norm_inf: f64,
    /// Inverse iteration met its tolerance.
    pub converged: bool,
    pub provenance: Provenance,
    /// Indicator values along the provenance chain.
    pub indicator_trace: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchOutcome {
    /// Sorted by real, then imaginary part.
    pub results: Vec<ResonanceResult>,
    pub trace: Vec<TraceEntry>,
    /// Deepest level evaluated.
    pub levels: u32,
    pub solves: usize,
}

impl SearchOutcome {
    pub fn eigenvalues(&self) -> Vec<Complex64> {
        self.results.iter().map(|r| r.k).collect()
    }

    /// One line per evaluated region: level, centre, radius, indicator,
    /// decision.
    pub fn trace_text(&self) -> String {
        let mut s = String::from("# level center_re center_im radius indicator decision\n");
        for e in &self.trace {
            writeln!(s, "{e}").unwrap();
        }
        s
    }
}

/// Indicator with one retry on nodes rotated by `π/N`. `None` means both
/// attempts hit a pole.
fn evaluate_region<P: OperatorFunction + ?Sized>(
    provider: &P,
    region: &SearchRegion,
    f: &[Complex64],
    n: usize,
) -> Result<(Option<Indicator>, usize), SimError> {
    let mut solves = 0;
    for (attempt, phase) in [0.0, PI / n as f64].into_iter().enumerate() {
        match provider.contour_sums(region, f, n, phase) {
            Ok(sums) => return Ok((Some(indicator_from(&sums, n, attempt > 0)), solves + sums.solves)),
            Err(e) if e.is_pole() => solves += n,
            Err(e) => return Err(e),
        }
    }
    Ok((None, solves))
}

struct Node {
    region: SearchRegion,
    parent: Option<usize>,
    value: f64,
}

/// Cover `theta`, subdivide flagged disks down to `tol_eps`, cluster the
/// accepted centres and extract an eigenpair for each cluster inside
/// `theta` (inflated by `tol_eps`).
pub fn search<P: OperatorFunction + ?Sized>(provider: &P, theta: &SearchRect, config: &SimConfig) -> Result<SearchOutcome, SimError> {
    config.validate()?;
    let f = probe_vector(provider.dim(), config.seed);
    search_regions(provider, theta, theta.cover(config.r0), &f, config)
}

/// [`search`] started from given level-1 regions instead of a cover of
/// `theta`; results are still restricted to `theta`.
pub fn search_regions<P: OperatorFunction + ?Sized>(
    provider: &P,
    theta: &SearchRect,
    start: Vec<SearchRegion>,
    f: &[Complex64],
    config: &SimConfig,
) -> Result<SearchOutcome, SimError> {
    config.validate()?;
    let n = config.n_points;
    let mut nodes: Vec<Node> = Vec::new();
    let mut trace = Vec::new();
    let mut accepted: Vec<usize> = Vec::new();
    let mut solves = 0;
    let mut levels = 0;

    let mut live: Vec<(SearchRegion, Option<usize>)> = start.into_iter().map(|r| (r, None)).collect();
    while !live.is_empty() {
        let level = live[0].0.level;
        if live.len() > config.max_live {
            return Err(SimError::Budget { level, live: live.len(), cap: config.max_live });
        }
        if level > config.max_levels {
            return Err(SimError::LevelCap { levels: config.max_levels, radius: live[0].0.radius });
        }
        levels = levels.max(level);
        let evals: Vec<Result<(Option<Indicator>, usize), SimError>> =
            live.par_iter().map(|(r, _)| evaluate_region(provider, r, f, n)).collect();

        let mut next = Vec::new();
        for ((region, parent), ev) in live.into_iter().zip(evals) {
            let (ind, used) = ev?;
            solves += used;
            let last = region.radius <= config.tol_eps;
            let decision = match ind {
                None => Decision::OnContour,
                Some(i) if i.value > config.tol_ind => {
                    if last {
                        Decision::Accept
                    } else {
                        Decision::Subdivide
                    }
                }
                Some(_) => Decision::Discard,
            };
            trace.push(TraceEntry { region, indicator: ind, decision });
            if !decision.flagged() {
                continue;
            }
            let id = nodes.len();
            nodes.push(Node { region, parent, value: ind.map_or(f64::NAN, |i| i.value) });
            if last {
                accepted.push(id);
            } else {
                next.extend(region.children().into_iter().map(|c| (c, Some(id))));
            }
        }
        live = next;
    }

    let centers: Vec<Complex64> = accepted.iter().map(|&i| nodes[i].region.center).collect();
    let mut clusters = cluster(&centers, 2.0 * config.tol_eps);
    clusters.retain(|c| theta.contains(centroid(&centers, c), config.tol_eps));

    let results: Vec<Result<ResonanceResult, SimError>> = clusters
        .par_iter()
        .map(|members| {
            let k = centroid(&centers, members);
            let mut res = extract_eigenpair(provider, k, config)?;
            let mut chain = Vec::new();
            let mut at = Some(accepted[members[0]]);
            while let Some(i) = at {
                chain.push(i);
                at = nodes[i].parent;
            }
            chain.reverse();
            res.provenance = Provenance {
                final_level: nodes[accepted[members[0]]].region.level,
                centers: chain.iter().map(|&i| nodes[i].region.center).collect(),
                cluster_size: members.len(),
            };
            res.indicator_trace = chain.iter().map(|&i| nodes[i].value).collect();
            Ok(res)
        })
        .collect();
    let mut results = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    results.sort_by(|a, b| canonical(a.k, b.k));
    Ok(SearchOutcome { results, trace, levels, solves })
}

fn canonical(a: Complex64, b: Complex64) -> std::cmp::Ordering {
    a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im))
}

fn centroid(points: &[Complex64], members: &[usize]) -> Complex64 {
    members.iter().map(|&i| points[i]).sum::<Complex64>() / members.len() as f64
}

/// Single-linkage clusters with the given link distance, as index lists in
/// order of first member.
fn cluster(points: &[Complex64], link: f64) -> Vec<Vec<usize>> {
    let n = points.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn root(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    for i in 0..n {
        for j in i + 1..n {
            if (points[i] - points[j]).norm() <= link {
                let (a, b) = (root(&mut parent, i), root(&mut parent, j));
                parent[a.max(b)] = a.min(b);
            }
        }
    }
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut slot = vec![usize::MAX; n];
    for i in 0..n {
        let r = root(&mut parent, i);
        if slot[r] == usize::MAX {
            slot[r] = groups.len();
            groups.push(Vec::new());
        }
        groups[slot[r]].push(i);
    }
    groups
}

/// Single-linkage clustering with link distance `2·tol`; returns the
/// cluster centroids sorted by real, then imaginary part. Chains merge: with
/// points `0, 1.5·tol, 3·tol` all three form one cluster.
pub fn deduplicate(candidates: &[Complex64], tol: f64) -> Vec<Complex64> {
    let mut out: Vec<Complex64> = cluster(candidates, 2.0 * tol).iter().map(|c| centroid(candidates, c)).collect();
    out.sort_by(|a, b| canonical(*a, *b));
    out
}

/// Eigenvector of the smallest-magnitude eigenvalue of `F(k)` by inverse
/// iteration. Non-convergence is reported through `converged`, with the
/// best iterate kept.
pub fn extract_eigenpair<P: OperatorFunction + ?Sized>(provider: &P, k: Complex64, config: &SimConfig) -> Result<ResonanceResult, SimError> {
    let (est, norm_inf, converged) = provider.smallest_eigenpair(k, 1e-10, 100, config.seed)?;
    let residual = norm2(&provider.apply(k, &est.vector)?);
    Ok(ResonanceResult {
        k,
        residual,
        lambda: est.lambda,
        eigenvector: est.vector,
        norm_inf,
        converged,
        provenance: Provenance { final_level: 0, centers: vec![k], cluster_size: 1 },
        indicator_trace: Vec::new(),
    })
}
