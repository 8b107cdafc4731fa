//! Arithmetic in the Mersenne prime field F_p with p = 2^61 - 1.
//!
//! Elements are kept in canonical form `[0, p)`. Multiplication reduces a
//! 122-bit product with two shift-and-add folds, which is what makes the
//! Mersenne modulus attractive for circuit evaluation at desk scale.

use std::fmt;
use std::iter::{Product, Sum};
use std::ops::{Add, AddAssign, Mul, MulAssign, Neg, Sub, SubAssign};

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::ZkError;

/// The field modulus, 2^61 - 1.
pub const MODULUS: u64 = (1 << 61) - 1;

/// Number of bytes in the canonical little-endian encoding of an element.
pub const ENCODED_LEN: usize = 8;

#[derive(Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u64", into = "u64")]
pub struct Fp(u64);

impl Fp {
    pub const ZERO: Fp = Fp(0);
    pub const ONE: Fp = Fp(1);

    /// Reduces an arbitrary `u64` into the field.
    pub const fn new(value: u64) -> Self {
        let folded = (value & MODULUS) + (value >> 61);
        if folded >= MODULUS {
            Fp(folded - MODULUS)
        } else {
            Fp(folded)
        }
    }

    /// Embeds a signed integer as `v mod p`.
    pub fn from_i64(value: i64) -> Self {
        if value >= 0 {
            Fp::new(value as u64)
        } else {
            -Fp::new(value.unsigned_abs())
        }
    }

    /// Canonical representative in `[0, p)`.
    pub const fn value(self) -> u64 {
        self.0
    }

    /// Interprets the element as a signed integer in `(-p/2, p/2]`.
    pub fn to_signed(self) -> i64 {
        if self.0 > MODULUS / 2 {
            -((MODULUS - self.0) as i64)
        } else {
            self.0 as i64
        }
    }

    fn reduce_wide(x: u128) -> Self {
        let lo = (x as u64) & MODULUS;
        let hi = (x >> 61) as u64;
        // hi < 2^61 because x < 2^122.
        Fp::new(lo + hi)
    }

    pub fn square(self) -> Self {
        self * self
    }

    pub fn pow(self, mut exp: u64) -> Self {
        let mut base = self;
        let mut acc = Fp::ONE;
        while exp > 0 {
            if exp & 1 == 1 {
                acc *= base;
            }
            base = base.square();
            exp >>= 1;
        }
        acc
    }

    /// Multiplicative inverse via Fermat's little theorem.
    pub fn inv(self) -> Result<Self, ZkError> {
        if self.0 == 0 {
            return Err(ZkError::ZeroInverse);
        }
        Ok(self.pow(MODULUS - 2))
    }

    pub fn is_zero(self) -> bool {
        self.0 == 0
    }

    /// Uniform sample by rejection on the 61 low bits.
    pub fn random<R: RngCore + ?Sized>(rng: &mut R) -> Self {
        loop {
            let candidate = rng.next_u64() & MODULUS;
            if candidate != MODULUS {
                return Fp(candidate);
            }
        }
    }

    pub fn to_le_bytes(self) -> [u8; ENCODED_LEN] {
        self.0.to_le_bytes()
    }

    /// Decodes a canonical encoding; non-canonical values are rejected.
    pub fn from_le_bytes(bytes: [u8; ENCODED_LEN]) -> Option<Self> {
        let raw = u64::from_le_bytes(bytes);
        (raw < MODULUS).then_some(Fp(raw))
    }
}

impl TryFrom<u64> for Fp {
    type Error = String;

    fn try_from(value: u64) -> Result<Self, Self::Error> {
        if value < MODULUS {
            Ok(Fp(value))
        } else {
            Err(format!("{value} is not a canonical field element"))
        }
    }
}

impl From<Fp> for u64 {
    fn from(value: Fp) -> Self {
        value.0
    }
}

impl fmt::Debug for Fp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Fp({})", self.0)
    }
}

impl fmt::Display for Fp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl Add for Fp {
    type Output = Fp;

    #[inline]
    fn add(self, rhs: Fp) -> Fp {
        // Both operands are < 2^61 so the sum fits in u64.
        let sum = self.0 + rhs.0;
        if sum >= MODULUS {
            Fp(sum - MODULUS)
        } else {
            Fp(sum)
        }
    }
}

impl Sub for Fp {
    type Output = Fp;

    #[inline]
    fn sub(self, rhs: Fp) -> Fp {
        if self.0 >= rhs.0 {
            Fp(self.0 - rhs.0)
        } else {
            Fp(self.0 + MODULUS - rhs.0)
        }
    }
}

impl Mul for Fp {
    type Output = Fp;

    #[inline]
    fn mul(self, rhs: Fp) -> Fp {
        Fp::reduce_wide(self.0 as u128 * rhs.0 as u128)
    }
}

impl Neg for Fp {
    type Output = Fp;

    #[inline]
    fn neg(self) -> Fp {
        if self.0 == 0 {
            self
        } else {
            Fp(MODULUS - self.0)
        }
    }
}

impl AddAssign for Fp {
    fn add_assign(&mut self, rhs: Fp) {
        *self = *self + rhs;
    }
}

impl SubAssign for Fp {
    fn sub_assign(&mut self, rhs: Fp) {
        *self = *self - rhs;
    }
}

impl MulAssign for Fp {
    fn mul_assign(&mut self, rhs: Fp) {
        *self = *self * rhs;
    }
}

impl Sum for Fp {
    fn sum<I: Iterator<Item = Fp>>(iter: I) -> Fp {
        iter.fold(Fp::ZERO, Add::add)
    }
}

impl Product for Fp {
    fn product<I: Iterator<Item = Fp>>(iter: I) -> Fp {
        iter.fold(Fp::ONE, Mul::mul)
    }
}
