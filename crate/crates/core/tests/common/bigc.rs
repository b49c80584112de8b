//! Fixed-point complex arithmetic on big integers, used as an
//! arbitrary-precision oracle for the cylinder functions. Slow and simple.

use std::ops::{Add, Mul, Neg, Sub};

use num_bigint::BigInt;
use num_complex::Complex64;
use num_traits::{One, Signed, ToPrimitive, Zero};

/// Fractional bits carried by every value.
pub const PREC: u32 = 512;

const EULER_GAMMA_DIGITS: &str =
    "57721566490153286060651209008240243104215933593992359880576723488486772677766467";

#[derive(Clone, Debug, PartialEq)]
pub struct Fx(pub BigInt);

impl Fx {
    pub fn zero() -> Self {
        Fx(BigInt::zero())
    }

    pub fn one() -> Self {
        Fx(BigInt::one() << PREC)
    }

    pub fn from_int(v: i64) -> Self {
        Fx(BigInt::from(v) << PREC)
    }

    pub fn from_f64(x: f64) -> Self {
        assert!(x.is_finite());
        if x == 0.0 {
            return Fx::zero();
        }
        let bits = x.to_bits();
        let sign = if bits >> 63 == 1 { -1 } else { 1 };
        let exp = ((bits >> 52) & 0x7ff) as i64;
        let frac = bits & ((1u64 << 52) - 1);
        let (mant, e) = if exp == 0 { (frac, -1074) } else { (frac | (1u64 << 52), exp - 1075) };
        let m = BigInt::from(mant) * sign;
        let shift = e + PREC as i64;
        if shift >= 0 {
            Fx(m << shift as usize)
        } else {
            Fx(m >> (-shift) as usize)
        }
    }

    pub fn to_f64(&self) -> f64 {
        // keep 64 significant bits, then scale by an exact power of two
        let bits = self.0.bits() as i64;
        let drop = (bits - 64).max(0);
        let top = (&self.0 >> drop as usize).to_f64().unwrap();
        top * 2f64.powi((drop - PREC as i64) as i32)
    }

    pub fn div_int(&self, k: i64) -> Self {
        Fx(&self.0 / k)
    }

    pub fn mul_int(&self, k: i64) -> Self {
        Fx(&self.0 * k)
    }

    pub fn div(&self, other: &Fx) -> Self {
        Fx((&self.0 << PREC) / &other.0)
    }

    pub fn sqrt(&self) -> Self {
        assert!(!self.0.is_negative());
        Fx((&self.0 << PREC).sqrt())
    }

    pub fn is_negligible(&self) -> bool {
        self.0.abs() < BigInt::from(16)
    }

    /// Shift by a power of two.
    pub fn shl(&self, k: i64) -> Self {
        if k >= 0 {
            Fx(&self.0 << k as usize)
        } else {
            Fx(&self.0 >> (-k) as usize)
        }
    }
}

impl Add for &Fx {
    type Output = Fx;
    fn add(self, o: &Fx) -> Fx {
        Fx(&self.0 + &o.0)
    }
}

impl Sub for &Fx {
    type Output = Fx;
    fn sub(self, o: &Fx) -> Fx {
        Fx(&self.0 - &o.0)
    }
}

impl Mul for &Fx {
    type Output = Fx;
    fn mul(self, o: &Fx) -> Fx {
        Fx((&self.0 * &o.0) >> PREC)
    }
}

impl Neg for &Fx {
    type Output = Fx;
    fn neg(self) -> Fx {
        Fx(-&self.0)
    }
}

/// atan(1/x) for integer x > 1.
fn atan_inv(x: i64) -> Fx {
    let x2 = x * x;
    let mut power = Fx::one().div_int(x);
    let mut sum = power.clone();
    let mut k = 1i64;
    loop {
        power = power.div_int(x2);
        if power.is_negligible() {
            break;
        }
        let term = power.div_int(2 * k + 1);
        sum = if k % 2 == 1 { &sum - &term } else { &sum + &term };
        k += 1;
    }
    sum
}

pub fn pi() -> Fx {
    let a = atan_inv(5).mul_int(16);
    let b = atan_inv(239).mul_int(4);
    &a - &b
}

pub fn euler_gamma() -> Fx {
    let digits: BigInt = EULER_GAMMA_DIGITS.parse().unwrap();
    let scale = BigInt::from(10).pow(EULER_GAMMA_DIGITS.len() as u32);
    Fx((digits << PREC) / scale)
}

/// 2 artanh(t) for |t| < 1.
fn two_artanh(t: &Fx) -> Fx {
    let t2 = t * t;
    let mut power = t.clone();
    let mut sum = t.clone();
    let mut k = 1i64;
    loop {
        power = &power * &t2;
        let term = power.div_int(2 * k + 1);
        if term.is_negligible() {
            break;
        }
        sum = &sum + &term;
        k += 1;
    }
    sum.mul_int(2)
}

/// Natural log of a positive value.
pub fn ln(x: &Fx) -> Fx {
    assert!(x.0.is_positive());
    // x = m 2^e with m in [1, 2)
    let e = x.0.bits() as i64 - 1 - PREC as i64;
    let m = x.shl(-e);
    let one = Fx::one();
    let ln_m = two_artanh(&(&m - &one).div(&(&m + &one)));
    let ln2 = two_artanh(&one.div_int(3));
    &ln_m + &ln2.mul_int(e)
}

/// atan(t) for |t| <= 1.
fn atan_small(t: &Fx) -> Fx {
    // two halvings: atan t = 2 atan(t / (1 + sqrt(1 + t^2)))
    let one = Fx::one();
    let mut u = t.clone();
    for _ in 0..2 {
        let root = (&one + &(&u * &u)).sqrt();
        u = u.div(&(&one + &root));
    }
    let u2 = &u * &u;
    let mut power = u.clone();
    let mut sum = u.clone();
    let mut k = 1i64;
    loop {
        power = &power * &u2;
        let term = power.div_int(2 * k + 1);
        if term.is_negligible() {
            break;
        }
        sum = if k % 2 == 1 { &sum - &term } else { &sum + &term };
        k += 1;
    }
    sum.mul_int(4)
}

pub fn atan2(y: &Fx, x: &Fx) -> Fx {
    let p = pi();
    let half_pi = p.div_int(2);
    if x.0.is_zero() && y.0.is_zero() {
        return Fx::zero();
    }
    if x.0.abs() >= y.0.abs() {
        let base = atan_small(&y.div(x));
        if x.0.is_positive() {
            base
        } else if y.0.is_negative() {
            &base - &p
        } else {
            &base + &p
        }
    } else {
        let base = atan_small(&x.div(y));
        if y.0.is_positive() {
            &half_pi - &base
        } else {
            &(-&half_pi) - &base
        }
    }
}

#[derive(Clone, Debug)]
pub struct Cx {
    pub re: Fx,
    pub im: Fx,
}

impl Cx {
    pub fn zero() -> Self {
        Cx { re: Fx::zero(), im: Fx::zero() }
    }

    pub fn real(re: Fx) -> Self {
        Cx { re, im: Fx::zero() }
    }

    pub fn i() -> Self {
        Cx { re: Fx::zero(), im: Fx::one() }
    }

    pub fn from_c64(z: Complex64) -> Self {
        Cx { re: Fx::from_f64(z.re), im: Fx::from_f64(z.im) }
    }

    pub fn to_c64(&self) -> Complex64 {
        Complex64::new(self.re.to_f64(), self.im.to_f64())
    }

    pub fn add(&self, o: &Cx) -> Cx {
        Cx { re: &self.re + &o.re, im: &self.im + &o.im }
    }

    pub fn sub(&self, o: &Cx) -> Cx {
        Cx { re: &self.re - &o.re, im: &self.im - &o.im }
    }

    pub fn mul(&self, o: &Cx) -> Cx {
        Cx {
            re: &(&self.re * &o.re) - &(&self.im * &o.im),
            im: &(&self.re * &o.im) + &(&self.im * &o.re),
        }
    }

    pub fn scale(&self, s: &Fx) -> Cx {
        Cx { re: &self.re * s, im: &self.im * s }
    }

    pub fn div_int(&self, k: i64) -> Cx {
        Cx { re: self.re.div_int(k), im: self.im.div_int(k) }
    }

    pub fn inv(&self) -> Cx {
        let n = &(&self.re * &self.re) + &(&self.im * &self.im);
        Cx { re: self.re.div(&n), im: (-&self.im).div(&n) }
    }

    pub fn is_negligible(&self) -> bool {
        self.re.is_negligible() && self.im.is_negligible()
    }

    pub fn ln(&self) -> Cx {
        let n = &(&self.re * &self.re) + &(&self.im * &self.im);
        Cx { re: ln(&n).div_int(2), im: atan2(&self.im, &self.re) }
    }
}

/// J_n(z) by its power series.
pub fn bessel_j(n: u32, z: Complex64) -> Cx {
    let half = Cx::from_c64(z).div_int(2);
    let mut lead = Cx::real(Fx::one());
    for k in 1..=n as i64 {
        lead = lead.mul(&half).div_int(k);
    }
    let q = half.mul(&half);
    let q = Cx { re: -&q.re, im: -&q.im };
    let mut term = lead.clone();
    let mut sum = lead;
    let mut m = 1i64;
    loop {
        term = term.mul(&q).div_int(m * (n as i64 + m));
        if term.is_negligible() && m > 2 {
            break;
        }
        sum = sum.add(&term);
        m += 1;
    }
    sum
}

/// Y_n(z) by the series with the logarithmic term (principal branch).
pub fn bessel_y(n: u32, z: Complex64) -> Cx {
    let n = n as i64;
    let p = pi();
    let gamma = euler_gamma();
    let half = Cx::from_c64(z).div_int(2);
    let q = half.mul(&half); // z^2/4
    let neg_q = Cx { re: -&q.re, im: -&q.im };

    // finite part: -(1/π)(z/2)^{-n} Σ_{k<n} (n-k-1)!/k! (z²/4)^k
    let mut finite = Cx::zero();
    if n > 0 {
        let mut qk = Cx::real(Fx::one());
        for k in 0..n {
            let mut coef = BigInt::one();
            for t in 1..=(n - k - 1) {
                coef *= t;
            }
            let mut kf = BigInt::one();
            for t in 1..=k {
                kf *= t;
            }
            let c = Fx((coef << PREC) / kf);
            finite = finite.add(&qk.scale(&c));
            qk = qk.mul(&q);
        }
        let mut hp = Cx::real(Fx::one());
        for _ in 0..n {
            hp = hp.mul(&half);
        }
        finite = finite.mul(&hp.inv());
    }

    // log part: (2/π) ln(z/2) J_n(z)
    let jn = bessel_j(n as u32, z);
    let log_part = half.ln().mul(&jn).scale(&Fx::from_int(2).div(&p));

    // tail: -(1/π)(z/2)^n Σ (ψ(k+1)+ψ(n+k+1)) (-z²/4)^k / (k!(n+k)!)
    let mut lead = Cx::real(Fx::one());
    for k in 1..=n {
        lead = lead.mul(&half).div_int(k);
    }
    let harmonic = |m: i64| {
        let mut s = Fx::zero();
        for t in 1..=m {
            s = &s + &Fx::one().div_int(t);
        }
        s
    };
    let mut term = lead; // (z/2)^n / (0! n!)
    let mut h_k = Fx::zero();
    let mut h_nk = harmonic(n);
    let two_gamma = gamma.mul_int(2);
    let mut tail = Cx::zero();
    let mut k = 0i64;
    loop {
        let psi_sum = &(&h_k + &h_nk) - &two_gamma;
        let t = term.scale(&psi_sum);
        if k > 2 && term.is_negligible() {
            break;
        }
        tail = tail.add(&t);
        k += 1;
        term = term.mul(&neg_q).div_int(k * (n + k));
        h_k = &h_k + &Fx::one().div_int(k);
        h_nk = &h_nk + &Fx::one().div_int(n + k);
    }

    let inv_pi = Fx::one().div(&p);
    let out = log_part.sub(&finite.scale(&inv_pi)).sub(&tail.scale(&inv_pi));
    out
}

pub fn hankel1(n: u32, z: Complex64) -> Cx {
    bessel_j(n, z).add(&Cx::i().mul(&bessel_y(n, z)))
}
