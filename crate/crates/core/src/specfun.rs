//! Integer-order Bessel and Hankel functions of complex argument.
//!
//! `J_n` comes from the power series for `|z| <= 4` and from Miller's
//! backward recurrence otherwise. The recurrence is normalised with the
//! Jacobi–Anger sum `e^{±iz} = J_0 + 2 Σ (±i)^m J_m`, choosing the sign so
//! the sum does not cancel when `Im z` is large. `Y_0` and `Y_1` follow from
//! the Neumann series over the same `J_m`, higher `Y_n` by stepping the
//! Wronskian `J_{n+1} Y_n - J_n Y_{n+1} = 2/(πz)` forward, and
//! `H_n^{(1)} = J_n + i Y_n`.
//!
//! The intended domain is the closed lower half-plane, where resonances
//! live. In the upper half-plane `H_n^{(1)}` decays like `e^{-Im z}` while
//! `J_n` and `Y_n` grow, so its relative accuracy degrades there.

use std::f64::consts::{FRAC_2_PI, PI};

use num_complex::Complex64;
use thiserror::Error;

/// Largest supported argument modulus.
pub const MAX_ARG: f64 = 100.0;
/// Largest supported order.
pub const MAX_ORDER: usize = 60;

const SERIES_RADIUS: f64 = 4.0;
const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;
const RESCALE_ABOVE: f64 = 1e250;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpecFunError {
    #[error("argument {z} or order {n_max} outside the supported range (|z| <= {MAX_ARG}, n <= {MAX_ORDER})")]
    Domain { z: Complex64, n_max: usize },
    #[error("Hankel function of order {n} vanishes at {z}")]
    Pole { n: usize, z: Complex64 },
    #[error("sequence holds orders up to {have}, order {need} requested")]
    ShortSequence { have: usize, need: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CylKind {
    BesselJ,
    BesselY,
    Hankel1,
}

/// Values of one cylinder function at a fixed argument for orders `0..=order_max`.
#[derive(Debug, Clone, PartialEq)]
pub struct CylSequence {
    kind: CylKind,
    z: Complex64,
    values: Vec<Complex64>,
}

impl CylSequence {
    pub fn kind(&self) -> CylKind {
        self.kind
    }

    pub fn arg(&self) -> Complex64 {
        self.z
    }

    pub fn order_max(&self) -> usize {
        self.values.len() - 1
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn get(&self, n: usize) -> Option<Complex64> {
        self.values.get(n).copied()
    }
}

fn check_domain(n_max: usize, z: Complex64) -> Result<(), SpecFunError> {
    if n_max > MAX_ORDER || !(z.norm() <= MAX_ARG) {
        return Err(SpecFunError::Domain { z, n_max });
    }
    Ok(())
}

/// `J_0(z), ..., J_{n_max}(z)`.
pub fn bessel_j_seq(n_max: usize, z: Complex64) -> Result<CylSequence, SpecFunError> {
    check_domain(n_max, z)?;
    let mut values = j_values(n_max, z);
    values.truncate(n_max + 1);
    Ok(CylSequence { kind: CylKind::BesselJ, z, values })
}

/// `Y_0(z), ..., Y_{n_max}(z)` on the principal branch.
pub fn bessel_y_seq(n_max: usize, z: Complex64) -> Result<CylSequence, SpecFunError> {
    let (_, y) = j_and_y(n_max, z)?;
    Ok(CylSequence { kind: CylKind::BesselY, z, values: y })
}

/// `H_0^{(1)}(z), ..., H_{n_max}^{(1)}(z)` on the principal branch.
pub fn hankel1_seq(n_max: usize, z: Complex64) -> Result<CylSequence, SpecFunError> {
    let (j, y) = j_and_y(n_max, z)?;
    let i = Complex64::i();
    let values = j.iter().zip(&y).map(|(&jn, &yn)| jn + i * yn).collect();
    Ok(CylSequence { kind: CylKind::Hankel1, z, values })
}

/// Derivative of order `n` from a precomputed sequence, via
/// `C_n' = C_{n-1} - (n/z) C_n` (and `C_0' = -C_1`).
pub fn hankel1_prime(n: usize, z: Complex64, seq: &CylSequence) -> Result<Complex64, SpecFunError> {
    let need = n.max(1);
    if seq.values.len() <= need {
        return Err(SpecFunError::ShortSequence { have: seq.order_max(), need });
    }
    if n == 0 {
        return Ok(-seq.values[1]);
    }
    Ok(seq.values[n - 1] - seq.values[n] * (n as f64) / z)
}

/// DtN symbol `(k/π) H_n^{(1)'}(kR) / H_n^{(1)}(kR)`.
pub fn dtn_symbol(n: usize, k: Complex64, radius: f64) -> Result<Complex64, SpecFunError> {
    let all = dtn_symbols(n, k, radius)?;
    Ok(all[n])
}

/// DtN symbols for every order `0..=n_max`, sharing one Hankel sequence.
pub fn dtn_symbols(n_max: usize, k: Complex64, radius: f64) -> Result<Vec<Complex64>, SpecFunError> {
    let z = k * radius;
    if z == Complex64::new(0.0, 0.0) {
        return Err(SpecFunError::Domain { z, n_max });
    }
    let seq = hankel1_seq(n_max.max(1), z)?;
    (0..=n_max)
        .map(|n| {
            let h = seq.values[n];
            if !(h.norm() > f64::MIN_POSITIVE) || !h.is_finite() {
                return Err(SpecFunError::Pole { n, z });
            }
            let dh = hankel1_prime(n, z, &seq)?;
            Ok(k / PI * dh / h)
        })
        .collect()
}

/// Power series for a single order; used for `|z| <= 4`.
fn j_series(n: usize, z: Complex64) -> Complex64 {
    let half = z * 0.5;
    let mut lead = Complex64::new(1.0, 0.0);
    for k in 1..=n {
        lead *= half / k as f64;
    }
    let q = -half * half;
    let mut term = lead;
    let mut sum = lead;
    for m in 1..200 {
        term *= q / ((m * (n + m)) as f64);
        sum += term;
        if term.norm() <= 1e-17 * sum.norm() {
            break;
        }
    }
    sum
}

/// Highest order the Neumann sums and the Miller start need for this argument.
fn internal_order(n_max: usize, z: Complex64) -> usize {
    let m = (n_max as f64).max(z.norm().ceil());
    let start = m + 20.0 + (40.0 * m).sqrt();
    // even, so the Neumann sums pair up cleanly
    2 * ((start as usize + 1) / 2)
}

/// `J_0..J_top` where `top = internal_order(n_max, z)`.
fn j_values(n_max: usize, z: Complex64) -> Vec<Complex64> {
    let top = internal_order(n_max, z);
    if z.norm() <= SERIES_RADIUS {
        return (0..=top).map(|n| j_series(n, z)).collect();
    }
    miller(top, z)
}

fn miller(top: usize, z: Complex64) -> Vec<Complex64> {
    let zero = Complex64::new(0.0, 0.0);
    let mut f = vec![zero; top + 2];
    f[top] = Complex64::new(1e-30, 0.0);
    for n in (1..=top).rev() {
        f[n - 1] = f[n] * (2.0 * n as f64) / z - f[n + 1];
        if f[n - 1].norm() > RESCALE_ABOVE {
            let s = 1.0 / RESCALE_ABOVE;
            for v in f[n - 1..].iter_mut() {
                *v *= s;
            }
        }
    }
    // e^{iz} = J_0 + 2 Σ i^m J_m, e^{-iz} = J_0 + 2 Σ (-i)^m J_m
    let (unit, target) = if z.im <= 0.0 {
        (Complex64::i(), (Complex64::i() * z).exp())
    } else {
        (-Complex64::i(), (-Complex64::i() * z).exp())
    };
    let mut phase = Complex64::new(1.0, 0.0);
    let mut sum = f[0];
    for v in &f[1..=top] {
        phase *= unit;
        sum += 2.0 * phase * v;
    }
    let scale = target / sum;
    f.truncate(top + 1);
    for v in f.iter_mut() {
        *v *= scale;
    }
    f
}

/// `(J_0..J_{n_max}, Y_0..Y_{n_max})`.
fn j_and_y(n_max: usize, z: Complex64) -> Result<(Vec<Complex64>, Vec<Complex64>), SpecFunError> {
    check_domain(n_max, z)?;
    if z == Complex64::new(0.0, 0.0) {
        return Err(SpecFunError::Domain { z, n_max });
    }
    let j = j_values(n_max.max(1), z);
    let top = j.len() - 1;
    let log_term = (z * 0.5).ln() + EULER_GAMMA;

    let mut s0 = Complex64::new(0.0, 0.0);
    let mut s1 = Complex64::new(0.0, 0.0);
    let mut k = 1;
    while 2 * k < top {
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        s0 += sign * j[2 * k] / k as f64;
        s1 += sign * (j[2 * k - 1] - j[2 * k + 1]) / k as f64;
        k += 1;
    }
    let y0 = FRAC_2_PI * (log_term * j[0] - 2.0 * s0);
    let y1 = FRAC_2_PI * (log_term * j[1] - j[0] / z + s1);

    let mut y = Vec::with_capacity(n_max + 2);
    y.push(y0);
    y.push(y1);
    // Y_{n+1} from the Wronskian with J wherever J_n is not small: errors
    // then propagate like J_{n+1}/J_n instead of picking up the solution
    // that is recessive at n = 0, which matters deep in the lower
    // half-plane. Near zeros of J_n the plain recurrence is used.
    let wronskian = Complex64::new(FRAC_2_PI, 0.0) / z;
    for n in 1..n_max {
        let next = if (j[n] * y[n] * z).norm() >= 0.25 {
            (j[n + 1] * y[n] - wronskian) / j[n]
        } else {
            y[n] * (2.0 * n as f64) / z - y[n - 1]
        };
        y.push(next);
    }
    y.truncate(n_max + 1);
    if y.iter().any(|v| !v.is_finite()) {
        return Err(SpecFunError::Domain { z, n_max });
    }
    let mut j = j;
    j.truncate(n_max + 1);
    Ok((j, y))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn rel(a: Complex64, b: Complex64) -> f64 {
        (a - b).norm() / b.norm()
    }

    #[test]
    fn j_at_origin() {
        let s = bessel_j_seq(3, c(0.0, 0.0)).unwrap();
        assert_eq!(s.values()[0], c(1.0, 0.0));
        for n in 1..=3 {
            assert_eq!(s.values()[n], c(0.0, 0.0));
        }
        assert_eq!(s.order_max(), 3);
    }

    #[test]
    fn hankel_rejects_origin_and_large_args() {
        assert!(matches!(hankel1_seq(2, c(0.0, 0.0)), Err(SpecFunError::Domain { .. })));
        assert!(matches!(bessel_j_seq(2, c(120.0, 0.0)), Err(SpecFunError::Domain { .. })));
        assert!(matches!(bessel_j_seq(61, c(1.0, 0.0)), Err(SpecFunError::Domain { .. })));
    }

    #[test]
    fn recurrence_closure_for_j_and_h() {
        for &(n_max, z) in &[(5usize, c(-0.85, -1.34)), (10, c(2.0, -3.0)), (30, c(17.0, -6.0)), (40, c(-33.0, 4.0))] {
            for seq in [bessel_j_seq(n_max, z).unwrap(), hankel1_seq(n_max, z).unwrap()] {
                let v = seq.values();
                for n in 1..n_max {
                    let lhs = v[n - 1] + v[n + 1];
                    let rhs = v[n] * (2.0 * n as f64) / z;
                    let scale = lhs.norm().max(rhs.norm()).max(v[n].norm());
                    assert!((lhs - rhs).norm() <= 1e-9 * scale, "{:?} n={n} z={z}", seq.kind());
                }
            }
        }
    }

    #[test]
    fn j_conjugation_symmetry() {
        for &z in &[c(1.3, 0.7), c(6.5, -2.5), c(-20.0, 9.0), c(0.2, -3.9)] {
            let a = bessel_j_seq(12, z).unwrap();
            let b = bessel_j_seq(12, z.conj()).unwrap();
            for (x, y) in a.values().iter().zip(b.values()) {
                assert!((x.conj() - y).norm() <= 4.0 * f64::EPSILON * x.norm().max(1e-300));
            }
        }
    }

    #[test]
    fn series_and_miller_agree_near_switch() {
        // |z| just either side of the switch radius
        let inside = c(2.8, -2.8);
        let outside = inside * (4.01 / inside.norm());
        let near = inside * (3.99 / inside.norm());
        let a = bessel_j_seq(8, outside).unwrap();
        let b: Vec<_> = (0..=8).map(|n| j_series(n, outside)).collect();
        for (x, y) in a.values().iter().zip(&b) {
            assert!(rel(*x, *y) < 1e-12);
        }
        let s = bessel_j_seq(8, near).unwrap();
        let m = miller(internal_order(8, near), near);
        for n in 0..=8 {
            assert!(rel(s.values()[n], m[n]) < 1e-12);
        }
    }

    #[test]
    fn derivative_identities_agree() {
        for &z in &[c(1.0, 0.0), c(2.0, -1.0), c(-3.5, -2.2), c(9.0, -0.4)] {
            let h = hankel1_seq(12, z).unwrap();
            for n in 1..11 {
                let a = hankel1_prime(n, z, &h).unwrap();
                let b = (h.values()[n - 1] - h.values()[n + 1]) * 0.5;
                assert!(rel(a, b) < 1e-10, "n={n} z={z}");
            }
            assert_eq!(hankel1_prime(0, z, &h).unwrap(), -h.values()[1]);
        }
    }

    #[test]
    fn prime_needs_long_enough_sequence() {
        let h = hankel1_seq(0, c(1.0, 0.0)).unwrap();
        assert!(matches!(hankel1_prime(0, c(1.0, 0.0), &h), Err(SpecFunError::ShortSequence { .. })));
    }

    #[test]
    fn dtn_symbol_small_order_composition() {
        let h = hankel1_seq(1, c(1.0, 0.0)).unwrap();
        let expect = -h.values()[1] / h.values()[0] / PI;
        let got = dtn_symbol(0, c(1.0, 0.0), 1.0).unwrap();
        assert!(rel(got, expect) < 1e-14);
    }

    #[test]
    fn dtn_symbol_large_order_is_negative_real_dominant() {
        let k = c(2.0, -2.0);
        for n in 10..=20 {
            let s = dtn_symbol(n, k, 1.0).unwrap();
            assert!(s.re < 0.0);
            assert!(s.re.abs() > s.im.abs());
            assert!((s.re + n as f64 / PI).abs() < 0.35 * n as f64 / PI);
        }
    }
}
