//! Exact arithmetic: big rationals and real quadratic surds.
//!
//! Degeneracy instants are roots of polynomials of degree at most two with
//! rational coefficients, so every instant is exactly representable as
//! `a + b·√d` with `a, b` rational and `d` a positive integer. Ordering and
//! equality of such numbers are decided without rounding.

use std::cmp::Ordering;
use std::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::error::{Error, Result};

pub type Rational = BigRational;

pub fn int(n: i64) -> Rational {
    Rational::from_integer(BigInt::from(n))
}

/// `n / d`; panics on `d == 0`.
pub fn ratio(n: i64, d: i64) -> Rational {
    Rational::new(BigInt::from(n), BigInt::from(d))
}

pub fn to_f64(r: &Rational) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

/// Exact binary value of a finite float.
pub fn from_f64(x: f64) -> Option<Rational> {
    Rational::from_float(x)
}

/// Parses `"p/q"`, an integer, or a decimal literal such as `"0.05"` or
/// `"1e-3"`. Decimal literals are read as the exact decimal fraction they
/// spell, not as the nearest binary float.
pub fn parse_rational(text: &str) -> Result<Rational> {
    let s = text.trim();
    let bad = || Error::InvalidArgument(format!("not a rational literal: {text:?}"));
    if s.is_empty() {
        return Err(bad());
    }
    if let Some((num, den)) = s.split_once('/') {
        let n: BigInt = num.trim().parse().map_err(|_| bad())?;
        let d: BigInt = den.trim().parse().map_err(|_| bad())?;
        if d.is_zero() {
            return Err(Error::InvalidArgument(format!("zero denominator in {text:?}")));
        }
        return Ok(Rational::new(n, d));
    }
    let (mantissa, exponent) = match s.find(['e', 'E']) {
        Some(pos) => {
            let e: i32 = s[pos + 1..].parse().map_err(|_| bad())?;
            (&s[..pos], e)
        }
        None => (s, 0),
    };
    let (negative, digits) = match mantissa.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, mantissa.strip_prefix('+').unwrap_or(mantissa)),
    };
    let (whole, frac) = digits.split_once('.').unwrap_or((digits, ""));
    if whole.is_empty() && frac.is_empty() {
        return Err(bad());
    }
    if !whole.chars().chain(frac.chars()).all(|c| c.is_ascii_digit()) {
        return Err(bad());
    }
    let all_digits = format!("{whole}{frac}");
    let mut value = Rational::from_integer(all_digits.parse::<BigInt>().map_err(|_| bad())?);
    let scale = exponent - frac.len() as i32;
    let ten = Rational::from_integer(BigInt::from(10));
    if scale >= 0 {
        value *= num_traits::pow(ten, scale as usize);
    } else {
        value /= num_traits::pow(ten, (-scale) as usize);
    }
    Ok(if negative { -value } else { value })
}

/// Formats as `"p"` or `"p/q"`.
pub fn format_rational(r: &Rational) -> String {
    if r.is_integer() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

/// Sign of `a + b·√d` for `d ≥ 0`.
fn sign_single(a: &Rational, b: &Rational, d: &BigInt) -> Ordering {
    let sa = a.cmp(&Rational::zero());
    let sb = if d.is_zero() {
        Ordering::Equal
    } else {
        b.cmp(&Rational::zero())
    };
    match (sa, sb) {
        (_, Ordering::Equal) => sa,
        (Ordering::Equal, _) => sb,
        _ if sa == sb => sa,
        _ => {
            // Opposite signs: the larger magnitude wins.
            let lhs = a * a;
            let rhs = b * b * Rational::from_integer(d.clone());
            match lhs.cmp(&rhs) {
                Ordering::Greater => sa,
                Ordering::Less => sb,
                Ordering::Equal => Ordering::Equal,
            }
        }
    }
}

/// Sign of `p + q·√u + r·√v`.
fn sign_double(p: &Rational, q: &Rational, u: &BigInt, r: &Rational, v: &BigInt) -> Ordering {
    if u == v {
        return sign_single(p, &(q + r), u);
    }
    // Sign of the irrational part q√u + r√v.
    let sq = sign_single(&Rational::zero(), q, u);
    let sr = sign_single(&Rational::zero(), r, v);
    let sx = match (sq, sr) {
        (Ordering::Equal, _) => sr,
        (_, Ordering::Equal) => sq,
        _ if sq == sr => sq,
        _ => {
            let qu = q * q * Rational::from_integer(u.clone());
            let rv = r * r * Rational::from_integer(v.clone());
            match qu.cmp(&rv) {
                Ordering::Greater => sq,
                Ordering::Less => sr,
                Ordering::Equal => Ordering::Equal,
            }
        }
    };
    let sp = p.cmp(&Rational::zero());
    match (sp, sx) {
        (_, Ordering::Equal) => sp,
        (Ordering::Equal, _) => sx,
        _ if sp == sx => sp,
        _ => {
            // Compare p² against (q√u + r√v)² = q²u + r²v + 2qr√(uv).
            let uu = Rational::from_integer(u.clone());
            let vv = Rational::from_integer(v.clone());
            let rational = p * p - q * q * uu - r * r * vv;
            let coeff = -(q * r) * int(2);
            match sign_single(&rational, &coeff, &(u * v)) {
                Ordering::Greater => sp,
                Ordering::Less => sx,
                Ordering::Equal => Ordering::Equal,
            }
        }
    }
}

/// A real number `rational + coeff·√radicand`.
///
/// The radicand is a positive integer with small square factors removed; a
/// radicand of 1 (with zero coefficient) encodes a rational number.
#[derive(Clone, Debug)]
pub struct QuadraticSurd {
    rational: Rational,
    coeff: Rational,
    radicand: BigInt,
}

const SMALL_PRIMES_LIMIT: u32 = 1000;

impl QuadraticSurd {
    pub fn from_rational(r: Rational) -> Self {
        Self {
            rational: r,
            coeff: Rational::zero(),
            radicand: BigInt::one(),
        }
    }

    /// `rational + coeff·√radicand` for a nonnegative rational radicand.
    pub fn new(rational: Rational, coeff: Rational, radicand: &Rational) -> Self {
        assert!(!radicand.is_negative(), "negative radicand");
        // √(p/q) = √(pq)/q
        let scaled_coeff = coeff / Rational::from_integer(radicand.denom().clone());
        let n = radicand.numer() * radicand.denom();
        let (outside, inside) = extract_square(n);
        let mut out = Self {
            rational,
            coeff: scaled_coeff * Rational::from_integer(outside),
            radicand: inside,
        };
        out.normalize();
        out
    }

    pub fn sqrt(radicand: &Rational) -> Self {
        Self::new(Rational::zero(), Rational::one(), radicand)
    }

    fn normalize(&mut self) {
        if self.radicand.is_zero() || self.coeff.is_zero() {
            self.coeff = Rational::zero();
            self.radicand = BigInt::one();
        } else if self.radicand.is_one() {
            self.rational += &self.coeff;
            self.coeff = Rational::zero();
        }
    }

    pub fn rational_part(&self) -> &Rational {
        &self.rational
    }

    pub fn coeff(&self) -> &Rational {
        &self.coeff
    }

    pub fn radicand(&self) -> &BigInt {
        &self.radicand
    }

    pub fn as_rational(&self) -> Option<&Rational> {
        self.coeff.is_zero().then_some(&self.rational)
    }

    pub fn is_rational(&self) -> bool {
        self.coeff.is_zero()
    }

    pub fn to_f64(&self) -> f64 {
        if self.coeff.is_zero() {
            return to_f64(&self.rational);
        }
        let root = self.radicand.to_f64().unwrap_or(f64::NAN).sqrt();
        to_f64(&self.rational) + to_f64(&self.coeff) * root
    }

    /// Sign relative to zero.
    pub fn signum(&self) -> Ordering {
        sign_single(&self.rational, &self.coeff, &self.radicand)
    }

    pub fn is_zero(&self) -> bool {
        self.signum() == Ordering::Equal
    }

    pub fn is_positive(&self) -> bool {
        self.signum() == Ordering::Greater
    }

    pub fn cmp_rational(&self, r: &Rational) -> Ordering {
        sign_single(&(&self.rational - r), &self.coeff, &self.radicand)
    }

    pub fn add_rational(&self, r: &Rational) -> Self {
        Self {
            rational: &self.rational + r,
            coeff: self.coeff.clone(),
            radicand: self.radicand.clone(),
        }
    }

    pub fn scale(&self, r: &Rational) -> Self {
        let mut out = Self {
            rational: &self.rational * r,
            coeff: &self.coeff * r,
            radicand: self.radicand.clone(),
        };
        out.normalize();
        out
    }

    /// `1 / self`; `None` for zero.
    pub fn recip(&self) -> Option<Self> {
        if self.is_zero() {
            return None;
        }
        let d = Rational::from_integer(self.radicand.clone());
        let norm = &self.rational * &self.rational - &self.coeff * &self.coeff * d;
        if norm.is_zero() {
            // Only possible for a perfect-square radicand, which is normalized away.
            return None;
        }
        let mut out = Self {
            rational: &self.rational / &norm,
            coeff: -(&self.coeff / &norm),
            radicand: self.radicand.clone(),
        };
        out.normalize();
        Some(out)
    }

    fn compatible(&self, other: &Self) -> Option<BigInt> {
        if self.is_rational() {
            Some(other.radicand.clone())
        } else if other.is_rational() || self.radicand == other.radicand {
            Some(self.radicand.clone())
        } else {
            None
        }
    }

    /// Sum; `None` when both operands carry distinct irrational radicands.
    pub fn checked_add(&self, other: &Self) -> Option<Self> {
        let radicand = self.compatible(other)?;
        let mut out = Self {
            rational: &self.rational + &other.rational,
            coeff: &self.coeff + &other.coeff,
            radicand,
        };
        out.normalize();
        Some(out)
    }

    pub fn checked_sub(&self, other: &Self) -> Option<Self> {
        self.checked_add(&other.scale(&int(-1)))
    }

    pub fn checked_mul(&self, other: &Self) -> Option<Self> {
        let radicand = self.compatible(other)?;
        let d = Rational::from_integer(radicand.clone());
        let mut out = Self {
            rational: &self.rational * &other.rational + &self.coeff * &other.coeff * d,
            coeff: &self.rational * &other.coeff + &self.coeff * &other.rational,
            radicand,
        };
        out.normalize();
        Some(out)
    }
}

/// Splits `n = outside² · inside`, removing square factors of small primes and
/// folding `inside` completely when it is itself a perfect square.
fn extract_square(mut n: BigInt) -> (BigInt, BigInt) {
    let mut outside = BigInt::one();
    if n.is_zero() {
        return (BigInt::zero(), BigInt::zero());
    }
    let mut p = 2u32;
    while p <= SMALL_PRIMES_LIMIT {
        let sq = BigInt::from(p * p);
        if sq > n {
            break;
        }
        while (&n % &sq).is_zero() {
            n /= &sq;
            outside *= p;
        }
        p += if p == 2 { 1 } else { 2 };
    }
    let root = n.sqrt();
    if &root * &root == n {
        outside *= root;
        n = BigInt::one();
    }
    (outside, n)
}

impl From<Rational> for QuadraticSurd {
    fn from(r: Rational) -> Self {
        Self::from_rational(r)
    }
}

impl PartialEq for QuadraticSurd {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for QuadraticSurd {}

impl PartialOrd for QuadraticSurd {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for QuadraticSurd {
    fn cmp(&self, other: &Self) -> Ordering {
        sign_double(
            &(&self.rational - &other.rational),
            &self.coeff,
            &self.radicand,
            &(-&other.coeff),
            &other.radicand,
        )
    }
}

impl fmt::Display for QuadraticSurd {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.coeff.is_zero() {
            return write!(f, "{}", format_rational(&self.rational));
        }
        let root = if self.coeff.is_one() {
            format!("sqrt({})", self.radicand)
        } else if (-&self.coeff).is_one() {
            format!("-sqrt({})", self.radicand)
        } else {
            format!("{}*sqrt({})", format_rational(&self.coeff), self.radicand)
        };
        if self.rational.is_zero() {
            write!(f, "{root}")
        } else if let Some(magnitude) = root.strip_prefix('-') {
            write!(f, "{} - {}", format_rational(&self.rational), magnitude)
        } else {
            write!(f, "{} + {}", format_rational(&self.rational), root)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn surd(a: Rational, b: Rational, d: i64) -> QuadraticSurd {
        QuadraticSurd::new(a, b, &int(d))
    }

    #[test]
    fn parses_fractions_integers_and_decimals() {
        assert_eq!(parse_rational("1/4").unwrap(), ratio(1, 4));
        assert_eq!(parse_rational(" -6 ").unwrap(), int(-6));
        assert_eq!(parse_rational("0.05").unwrap(), ratio(1, 20));
        assert_eq!(parse_rational("1e-3").unwrap(), ratio(1, 1000));
        assert_eq!(parse_rational("2.5E2").unwrap(), int(250));
        assert!(parse_rational("1/0").is_err());
        assert!(parse_rational("abc").is_err());
        assert!(parse_rational(".").is_err());
    }

    #[test]
    fn square_factors_are_extracted() {
        let s = QuadraticSurd::sqrt(&int(72));
        assert_eq!(s.radicand(), &BigInt::from(2));
        assert_eq!(s.coeff(), &int(6));
        let r = QuadraticSurd::sqrt(&ratio(9, 4));
        assert_eq!(r.as_rational(), Some(&ratio(3, 2)));
    }

    #[test]
    fn hopf_root_value() {
        // (3√2 − 4)/2
        let t = surd(int(-2), ratio(3, 2), 2);
        assert!((t.to_f64() - 0.121_320_343_559_642_6).abs() < 1e-15);
        assert_eq!(t.to_string(), "-2 + 3/2*sqrt(2)");
    }

    #[test]
    fn ordering_across_radicands() {
        let a = QuadraticSurd::sqrt(&int(2));
        let b = QuadraticSurd::sqrt(&int(3));
        assert!(a < b);
        // √2 + √3 vs 3.146...
        let sum_sq = surd(int(0), int(1), 2);
        let x = surd(ratio(314, 100), int(0), 1);
        assert!(sum_sq < x);
        let y = surd(int(1), int(1), 2); // 1 + √2 ≈ 2.414
        let z = surd(int(0), int(1), 6); // √6 ≈ 2.449
        assert!(y < z);
        assert_eq!(surd(int(0), int(2), 2), QuadraticSurd::sqrt(&int(8)));
    }

    #[test]
    fn reciprocal_and_products() {
        let t = surd(int(-2), ratio(3, 2), 2);
        let inv = t.recip().unwrap();
        let one = t.checked_mul(&inv).unwrap();
        assert_eq!(one.as_rational(), Some(&int(1)));
        assert!((inv.to_f64() - 1.0 / t.to_f64()).abs() < 1e-12);
    }

    proptest::proptest! {
        #[test]
        fn ordering_matches_floats(a in -50i64..50, b in -50i64..50, c in -50i64..50,
                                   d in 2i64..40, e in -50i64..50, f in 2i64..40) {
            let x = surd(ratio(a, 7), ratio(b, 3), d);
            let y = surd(ratio(c, 5), ratio(e, 11), f);
            let gap = x.to_f64() - y.to_f64();
            if gap.abs() > 1e-9 {
                proptest::prop_assert_eq!(x.cmp(&y), gap.partial_cmp(&0.0).unwrap());
            }
            proptest::prop_assert_eq!(x.cmp(&x), Ordering::Equal);
        }
    }
}
