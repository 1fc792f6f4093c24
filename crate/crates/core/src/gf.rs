//! Arithmetic in GF(2^8).
//!
//! Elements are bytes; addition is XOR and multiplication is polynomial
//! multiplication reduced modulo x^8 + x^4 + x^3 + x + 1 (0x11B). The
//! generator 0x03 has order 255 under this polynomial, so log/antilog tables
//! built from its powers give constant-time multiply and inverse.

use std::fmt;
use std::ops::{Add, AddAssign, Mul};

use thiserror::Error;

/// Reduction polynomial, including the x^8 term.
pub const POLYNOMIAL: u16 = 0x11B;

const GENERATOR: u8 = 0x03;

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
pub enum GfError {
    #[error("zero has no multiplicative inverse in GF(256)")]
    ZeroInverse,
}

struct Tables {
    exp: [u8; 512],
    log: [u8; 256],
}

const fn slow_mul(mut a: u8, mut b: u8) -> u8 {
    let mut acc = 0u8;
    while b != 0 {
        if b & 1 != 0 {
            acc ^= a;
        }
        let carry = a & 0x80 != 0;
        a <<= 1;
        if carry {
            a ^= (POLYNOMIAL & 0xFF) as u8;
        }
        b >>= 1;
    }
    acc
}

const fn build_tables() -> Tables {
    let mut exp = [0u8; 512];
    let mut log = [0u8; 256];
    let mut x = 1u8;
    let mut i = 0usize;
    while i < 255 {
        exp[i] = x;
        exp[i + 255] = x;
        log[x as usize] = i as u8;
        x = slow_mul(x, GENERATOR);
        i += 1;
    }
    // exp[510], exp[511] are never read: log sums stay below 509.
    Tables { exp, log }
}

static TABLES: Tables = build_tables();

/// One element of GF(2^8).
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default, PartialOrd, Ord)]
pub struct FieldElement(pub u8);

impl FieldElement {
    pub const ZERO: Self = Self(0);
    pub const ONE: Self = Self(1);

    #[inline]
    pub const fn new(value: u8) -> Self {
        Self(value)
    }

    #[inline]
    pub const fn value(self) -> u8 {
        self.0
    }

    #[inline]
    pub const fn is_zero(self) -> bool {
        self.0 == 0
    }

    #[inline]
    pub fn inv(self) -> Result<Self, GfError> {
        gf_inv(self)
    }
}

impl fmt::Debug for FieldElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#04x}", self.0)
    }
}

impl From<u8> for FieldElement {
    fn from(v: u8) -> Self {
        Self(v)
    }
}

impl Add for FieldElement {
    type Output = Self;
    #[inline]
    #[allow(clippy::suspicious_arithmetic_impl)]
    fn add(self, rhs: Self) -> Self {
        Self(self.0 ^ rhs.0)
    }
}

impl AddAssign for FieldElement {
    #[inline]
    #[allow(clippy::suspicious_op_assign_impl)]
    fn add_assign(&mut self, rhs: Self) {
        self.0 ^= rhs.0;
    }
}

impl Mul for FieldElement {
    type Output = Self;
    #[inline]
    fn mul(self, rhs: Self) -> Self {
        gf_mul(self, rhs)
    }
}

#[inline]
pub fn gf_mul(a: FieldElement, b: FieldElement) -> FieldElement {
    FieldElement(mul_u8(a.0, b.0))
}

#[inline]
pub(crate) fn mul_u8(a: u8, b: u8) -> u8 {
    if a == 0 || b == 0 {
        return 0;
    }
    let t = &TABLES;
    t.exp[t.log[a as usize] as usize + t.log[b as usize] as usize]
}

pub fn gf_inv(a: FieldElement) -> Result<FieldElement, GfError> {
    if a.0 == 0 {
        return Err(GfError::ZeroInverse);
    }
    let t = &TABLES;
    Ok(FieldElement(t.exp[255 - t.log[a.0 as usize] as usize]))
}

/// `y ^= scale * x`, element-wise.
///
/// Panics if the slices differ in length.
pub fn axpy_in_place(scale: FieldElement, x: &[u8], y: &mut [u8]) {
    assert_eq!(x.len(), y.len(), "axpy operands must have equal length");
    match scale.0 {
        0 => {}
        1 => y.iter_mut().zip(x).for_each(|(y, x)| *y ^= x),
        s => {
            let t = &TABLES;
            let ls = t.log[s as usize] as usize;
            for (y, &x) in y.iter_mut().zip(x) {
                if x != 0 {
                    *y ^= t.exp[ls + t.log[x as usize] as usize];
                }
            }
        }
    }
}

/// Returns `y ^ scale * x` as a new vector.
pub fn vec_axpy(scale: FieldElement, x: &[u8], y: &[u8]) -> Vec<u8> {
    let mut out = y.to_vec();
    axpy_in_place(scale, x, &mut out);
    out
}

/// `x *= scale`, element-wise.
pub fn scale_in_place(scale: FieldElement, x: &mut [u8]) {
    match scale.0 {
        0 => x.fill(0),
        1 => {}
        s => x.iter_mut().for_each(|v| *v = mul_u8(s, *v)),
    }
}
