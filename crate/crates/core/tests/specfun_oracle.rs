//! Bessel/Hankel values checked against a big-integer series evaluation.

mod common;

use common::bigc;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use resonances::specfun::{bessel_j_seq, bessel_y_seq, dtn_symbol, hankel1_prime, hankel1_seq};

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn rel(a: Complex64, b: Complex64) -> f64 {
    (a - b).norm() / b.norm()
}

#[test]
fn j_at_one_matches_series() {
    let seq = bessel_j_seq(2, c(1.0, 0.0)).unwrap();
    for n in 0..=2 {
        let exact = bigc::bessel_j(n, c(1.0, 0.0)).to_c64();
        assert!(rel(seq.values()[n as usize], exact) <= 1e-12, "J_{n}(1)");
    }
}

#[test]
fn h0_h1_at_one_match_series() {
    let seq = hankel1_seq(1, c(1.0, 0.0)).unwrap();
    for n in 0..=1 {
        let exact = bigc::hankel1(n, c(1.0, 0.0)).to_c64();
        assert!(rel(seq.values()[n as usize], exact) <= 1e-12, "H_{n}(1)");
    }
}

#[test]
fn j_sequences_match_series_on_random_arguments() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst: f64 = 0.0;
    for _ in 0..40 {
        let r = rng.random_range(0.5..60.0);
        let t = rng.random_range(-std::f64::consts::PI..0.0);
        let z = Complex64::from_polar(r, t);
        if z.im.abs() > 12.0 {
            continue;
        }
        let seq = bessel_j_seq(30, z).unwrap();
        for n in [0u32, 1, 2, 5, 13, 30] {
            let exact = bigc::bessel_j(n, z).to_c64();
            worst = worst.max(rel(seq.values()[n as usize], exact));
        }
    }
    assert!(worst <= 1e-10, "worst relative error {worst:e}");
}

#[test]
fn hankel_sequences_match_series_in_lower_half_plane() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut worst: f64 = 0.0;
    for _ in 0..30 {
        let z = c(rng.random_range(-8.0..8.0), rng.random_range(-8.0..-0.05));
        let seq = hankel1_seq(24, z).unwrap();
        for n in [0u32, 1, 3, 10, 20, 24] {
            let exact = bigc::hankel1(n, z).to_c64();
            worst = worst.max(rel(seq.values()[n as usize], exact));
        }
    }
    assert!(worst <= 1e-9, "worst relative error {worst:e}");
}

#[test]
fn y_matches_series_on_real_axis() {
    for &x in &[0.3, 1.0, 4.5, 17.0] {
        let seq = bessel_y_seq(6, c(x, 0.0)).unwrap();
        for n in 0..=6u32 {
            let exact = bigc::bessel_y(n, c(x, 0.0)).to_c64();
            assert!(rel(seq.values()[n as usize], exact) <= 1e-10, "Y_{n}({x})");
        }
    }
}

#[test]
fn dtn_symbol_matches_series_ratio() {
    let k = c(2.0, -2.0);
    let h4 = bigc::hankel1(4, k).to_c64();
    let h5 = bigc::hankel1(5, k).to_c64();
    let h5p = h4 - 5.0 / k * h5;
    let exact = k / std::f64::consts::PI * h5p / h5;
    let got = dtn_symbol(5, k, 1.0).unwrap();
    assert!(rel(got, exact) <= 1e-8, "{got} vs {exact}");
}

#[test]
fn hankel_prime_matches_finite_difference() {
    let z = c(2.0, -1.0);
    let step = 1e-6;
    let seq = hankel1_seq(4, z).unwrap();
    let d = hankel1_prime(3, z, &seq).unwrap();
    let hp = hankel1_seq(3, z + step).unwrap().values()[3];
    let hm = hankel1_seq(3, z - step).unwrap().values()[3];
    let fd = (hp - hm) / (2.0 * step);
    assert!(rel(d, fd) <= 1e-7, "{d} vs {fd}");
}

#[test]
fn oracle_constants() {
    let pi = bigc::pi().to_f64();
    assert_eq!(pi, std::f64::consts::PI);
    let ln10 = bigc::ln(&bigc::Fx::from_int(10)).to_f64();
    assert_eq!(ln10, std::f64::consts::LN_10);
    let a = bigc::atan2(&bigc::Fx::from_int(-1), &bigc::Fx::from_int(-1)).to_f64();
    assert!((a + 0.75 * std::f64::consts::PI).abs() < 1e-15);
}
