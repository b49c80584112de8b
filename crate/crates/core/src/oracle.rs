//! Exact resonances of a constant potential on a disk.
//!
//! Matching the interior Bessel expansion to the exterior outgoing Hankel
//! expansion at |x| = r0 gives one scalar determinant d_n(k) per angular
//! order; its zeros are the resonances.

use num_complex::Complex64;
use rayon::prelude::*;
use thiserror::Error;

use crate::sim::SearchRect;
use crate::specfun::{bessel_j_seq, hankel1_seq, SpecFunError};

type C = Complex64;

/// Step of the central difference used by Newton.
pub const NEWTON_STEP: f64 = 1e-7;
/// Acceptance threshold relative to the largest |d_n| seen on the grid.
pub const ACCEPT_REL: f64 = 1e-10;
/// Seed perturbation for the basin stability re-check.
pub const BASIN_PERTURBATION: f64 = 1e-3;

const MAX_NEWTON: usize = 60;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("invalid disk problem: {0}")]
    Config(String),
    #[error(transparent)]
    SpecFun(#[from] SpecFunError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiskProblem {
    pub r0: f64,
    pub v0: C,
    pub n_max: usize,
}

impl DiskProblem {
    pub fn new(r0: f64, v0: C, n_max: usize) -> Result<DiskProblem, OracleError> {
        if !(r0 > 0.0 && r0.is_finite()) {
            return Err(OracleError::Config(format!("disk radius must be positive, got {r0}")));
        }
        if !(v0.re.is_finite() && v0.im.is_finite()) {
            return Err(OracleError::Config("potential value is not finite".into()));
        }
        Ok(DiskProblem { r0, v0, n_max })
    }

    /// Interior wavenumber √(k² − V0), on the branch that tends to k as
    /// V0 → 0 (Re(w·k̄) ≥ 0). The other branch only flips d_n by (−1)^n.
    pub fn interior(&self, k: C) -> C {
        let w = (k * k - self.v0).sqrt();
        if (w * k.conj()).re < 0.0 {
            -w
        } else {
            w
        }
    }

    pub fn d_n(&self, n: usize, k: C) -> Result<C, OracleError> {
        self.d_with(n, k, self.interior(k))
    }

    /// d_n evaluated with an explicit choice of the interior wavenumber w.
    pub fn d_with(&self, n: usize, k: C, w: C) -> Result<C, OracleError> {
        if k == C::new(0.0, 0.0) {
            return Err(OracleError::Config("d_n is undefined at k = 0".into()));
        }
        let j = bessel_j_seq(n + 1, w * self.r0)?;
        let h = hankel1_seq(n + 1, k * self.r0)?;
        let (j, h) = (j.values(), h.values());
        Ok(w * j[n + 1] * h[n] - k * h[n + 1] * j[n])
    }

    /// d_0(k) .. d_{n_max}(k) from one pair of sequences.
    pub fn d_all(&self, k: C) -> Result<Vec<C>, OracleError> {
        if k == C::new(0.0, 0.0) {
            return Err(OracleError::Config("d_n is undefined at k = 0".into()));
        }
        let w = self.interior(k);
        let j = bessel_j_seq(self.n_max + 1, w * self.r0)?;
        let h = hankel1_seq(self.n_max + 1, k * self.r0)?;
        let (j, h) = (j.values(), h.values());
        Ok((0..=self.n_max).map(|n| w * j[n + 1] * h[n] - k * h[n + 1] * j[n]).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleRoot {
    pub n: usize,
    pub k: C,
    pub residual: f64,
}

#[derive(Debug, Clone, Default)]
pub struct RootSearch {
    /// Sorted by order, then real part, then imaginary part.
    pub roots: Vec<OracleRoot>,
    /// Seeds whose Newton run failed or did not pass re-verification.
    pub dropped: usize,
}

impl RootSearch {
    /// Distinct root locations (orders merged), sorted by real then imaginary part.
    pub fn locations(&self) -> Vec<C> {
        let mut ks: Vec<C> = self.roots.iter().map(|r| r.k).collect();
        ks.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
        ks.dedup_by(|a, b| (*a - *b).norm() <= 1e-8 * b.norm().max(1.0));
        ks
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("n, re, im, residual\n");
        for r in &self.roots {
            s.push_str(&format!("{}, {:.12}, {:.12}, {:.3e}\n", r.n, r.k.re, r.k.im, r.residual));
        }
        s
    }
}

/// Grid axes covering the rectangle, one step beyond each side so that
/// roots on the edge still sit at an interior grid minimum.
fn axes(theta: &SearchRect, step: f64) -> (Vec<f64>, Vec<f64>) {
    let axis = |lo: f64, hi: f64| {
        let n = ((hi - lo) / step).ceil() as usize;
        (0..=n + 2).map(|i| lo - step + i as f64 * step).collect::<Vec<_>>()
    };
    (axis(theta.re_min, theta.re_max), axis(theta.im_min, theta.im_max))
}

fn newton<F: Fn(C) -> Result<C, OracleError>>(f: &F, mut k: C) -> Option<C> {
    let h = NEWTON_STEP;
    for _ in 0..MAX_NEWTON {
        let d = f(k).ok()?;
        let dp = (f(k + h).ok()? - f(k - h).ok()?) / (2.0 * h);
        if dp.norm() == 0.0 || !dp.is_finite() {
            return None;
        }
        let step = d / dp;
        k -= step;
        if !k.is_finite() || k.norm() > 1e3 {
            return None;
        }
        if step.norm() <= 1e-14 * k.norm().max(1.0) {
            return Some(k);
        }
    }
    Some(k)
}

pub fn oracle_roots(problem: &DiskProblem, theta: &SearchRect, grid_step: f64) -> Result<RootSearch, OracleError> {
    if !(grid_step > 0.0) {
        return Err(OracleError::Config(format!("grid step must be positive, got {grid_step}")));
    }
    let (xs, ys) = axes(theta, grid_step);
    let (nx, ny) = (xs.len(), ys.len());
    // grid[n][iy * nx + ix]
    let rows: Vec<Vec<Vec<f64>>> = ys
        .par_iter()
        .map(|&y| {
            xs.iter()
                .map(|&x| match problem.d_all(C::new(x, y)) {
                    Ok(d) => d.iter().map(|v| v.norm()).collect(),
                    Err(_) => vec![f64::NAN; problem.n_max + 1],
                })
                .collect()
        })
        .collect();

    let per_order: Vec<(Vec<OracleRoot>, usize)> = (0..=problem.n_max)
        .into_par_iter()
        .map(|n| {
            let at = |ix: usize, iy: usize| rows[iy][ix][n];
            let scale = rows.iter().flatten().map(|v| v[n]).filter(|v| v.is_finite()).fold(0.0, f64::max);
            let f = |k: C| problem.d_n(n, k);
            let mut found: Vec<OracleRoot> = Vec::new();
            let mut dropped = 0;
            for iy in 1..ny - 1 {
                for ix in 1..nx - 1 {
                    let v = at(ix, iy);
                    if !v.is_finite() {
                        continue;
                    }
                    let mut is_min = true;
                    let mut top: f64 = 0.0;
                    for (dx, dy) in [(-1, -1), (0, -1), (1, -1), (-1, 0), (1, 0), (-1, 1), (0, 1), (1, 1)] {
                        let u = at((ix as i64 + dx) as usize, (iy as i64 + dy) as usize);
                        if !(v < u) {
                            is_min = false;
                            break;
                        }
                        top = top.max(u);
                    }
                    // flat neighbourhoods are rounding noise, not zeros
                    if !is_min || v > 0.99 * top {
                        continue;
                    }
                    let seed = C::new(xs[ix], ys[iy]);
                    let Some(k) = newton(&f, seed) else {
                        dropped += 1;
                        continue;
                    };
                    let residual = f(k).map(|d| d.norm()).unwrap_or(f64::INFINITY);
                    let stable = newton(&f, k + C::new(BASIN_PERTURBATION, -BASIN_PERTURBATION))
                        .is_some_and(|k2| (k2 - k).norm() <= 1e-8 * k.norm().max(1.0));
                    if !(residual <= ACCEPT_REL * scale) || !stable {
                        dropped += 1;
                        continue;
                    }
                    if !theta.contains(k, 0.0) {
                        continue;
                    }
                    if found.iter().any(|r| (r.k - k).norm() <= 1e-8 * k.norm().max(1.0)) {
                        continue;
                    }
                    found.push(OracleRoot { n, k, residual });
                }
            }
            found.sort_by(|a, b| a.k.re.total_cmp(&b.k.re).then(a.k.im.total_cmp(&b.k.im)));
            (found, dropped)
        })
        .collect();

    let mut out = RootSearch::default();
    for (roots, dropped) in per_order {
        out.roots.extend(roots);
        out.dropped += dropped;
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct ContourMap {
    pub resolution: usize,
    pub re: Vec<f64>,
    pub im: Vec<f64>,
    /// Row-major over (im, re): values[iy * resolution + ix].
    pub values: Vec<f64>,
}

impl ContourMap {
    pub fn at(&self, ix: usize, iy: usize) -> f64 {
        self.values[iy * self.resolution + ix]
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("re, im, value\n");
        for (iy, &y) in self.im.iter().enumerate() {
            for (ix, &x) in self.re.iter().enumerate() {
                s.push_str(&format!("{:.6}, {:.6}, {:.9}\n", x, y, self.at(ix, iy)));
            }
        }
        s
    }
}

/// min over n of log10|d_n(k)| on a resolution × resolution grid spanning the rectangle.
pub fn contour_map(problem: &DiskProblem, theta: &SearchRect, resolution: usize) -> Result<ContourMap, OracleError> {
    if resolution < 16 {
        return Err(OracleError::Config(format!("map resolution must be at least 16, got {resolution}")));
    }
    let lin = |lo: f64, hi: f64| (0..resolution).map(|i| lo + (hi - lo) * i as f64 / (resolution - 1) as f64).collect::<Vec<_>>();
    let re = lin(theta.re_min, theta.re_max);
    let im = lin(theta.im_min, theta.im_max);
    let rows: Result<Vec<Vec<f64>>, OracleError> = im
        .par_iter()
        .map(|&y| {
            re.iter()
                .map(|&x| {
                    let d = problem.d_all(C::new(x, y))?;
                    Ok(d.iter().map(|v| v.norm().log10()).fold(f64::INFINITY, f64::min))
                })
                .collect()
        })
        .collect();
    Ok(ContourMap { resolution, re, im, values: rows?.concat() })
}
