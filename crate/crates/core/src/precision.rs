//! Arithmetic backends.
//!
//! Every numerical stage is generic over [`Real`]. Two backends exist:
//! plain `f64` (53-bit mantissa) and [`Extended`], a software float with a
//! configurable mantissa width. Graded coupling profiles span dozens of
//! orders of magnitude, so the backend is picked per chain.

use std::cell::RefCell;
use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};

use astro_float::{BigFloat, Consts, Radix, RoundingMode};

use crate::error::{Error, Result};

/// Mantissa width of IEEE double precision.
pub const DOUBLE_BITS: u32 = 53;
/// Smallest accepted extended mantissa width.
pub const MIN_EXTENDED_BITS: u32 = 64;
/// Largest accepted extended mantissa width.
pub const MAX_EXTENDED_BITS: u32 = 8192;

/// Check that `bits` names a supported backend.
pub fn validate_bits(bits: u32) -> Result<()> {
    if bits == DOUBLE_BITS || (MIN_EXTENDED_BITS..=MAX_EXTENDED_BITS).contains(&bits) {
        Ok(())
    } else {
        Err(Error::InvalidChain(format!(
            "precision_bits must be {DOUBLE_BITS} or in {MIN_EXTENDED_BITS}..={MAX_EXTENDED_BITS}, got {bits}"
        )))
    }
}

/// Unit roundoff `2^(1-bits)` as an `f64`.
pub fn unit_roundoff(bits: u32) -> f64 {
    (2.0f64).powi(1 - bits as i32)
}

/// Real scalar used by the chain, solver and entanglement stages.
pub trait Real:
    Clone
    + PartialOrd
    + fmt::Debug
    + fmt::Display
    + Send
    + Sync
    + 'static
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    /// Convert an `f64` exactly into a value carrying `bits` of mantissa.
    fn from_f64(x: f64, bits: u32) -> Self;
    /// Parse a decimal string, rounding once to `bits`.
    fn parse_decimal(s: &str, bits: u32) -> Result<Self>;
    /// Decimal text that parses back to the identical value.
    fn to_decimal(&self) -> String;
    /// Round to the nearest `f64`.
    fn to_f64(&self) -> f64;
    fn bits(&self) -> u32;
    fn sqrt(&self) -> Self;
    fn abs(&self) -> Self;
    fn exp(&self) -> Self;
    fn ln(&self) -> Self;
    fn is_finite(&self) -> bool;
    /// True for nonzero magnitudes below the normal range of the backend.
    fn is_underflowed(&self) -> bool;

    fn zero_at(bits: u32) -> Self {
        Self::from_f64(0.0, bits)
    }

    fn one_at(bits: u32) -> Self {
        Self::from_f64(1.0, bits)
    }

    fn is_zero(&self) -> bool {
        *self == Self::zero_at(self.bits())
    }

    fn max_of(a: Self, b: Self) -> Self {
        if b > a {
            b
        } else {
            a
        }
    }
}

impl Real for f64 {
    fn from_f64(x: f64, _bits: u32) -> Self {
        x
    }

    fn parse_decimal(s: &str, _bits: u32) -> Result<Self> {
        s.trim()
            .parse::<f64>()
            .map_err(|e| Error::Parse(format!("`{s}`: {e}")))
    }

    fn to_decimal(&self) -> String {
        // Rust prints the shortest string that round-trips.
        format!("{self:?}")
    }

    fn to_f64(&self) -> f64 {
        *self
    }

    fn bits(&self) -> u32 {
        DOUBLE_BITS
    }

    fn sqrt(&self) -> Self {
        f64::sqrt(*self)
    }

    fn abs(&self) -> Self {
        f64::abs(*self)
    }

    fn exp(&self) -> Self {
        f64::exp(*self)
    }

    fn ln(&self) -> Self {
        f64::ln(*self)
    }

    fn is_finite(&self) -> bool {
        f64::is_finite(*self)
    }

    fn is_underflowed(&self) -> bool {
        *self != 0.0 && self.abs() < f64::MIN_POSITIVE
    }

    fn is_zero(&self) -> bool {
        *self == 0.0
    }
}

const RM: RoundingMode = RoundingMode::ToEven;

thread_local! {
    static CONSTS: RefCell<Consts> = RefCell::new(Consts::new().expect("astro-float constant cache"));
}

fn with_consts<R>(f: impl FnOnce(&mut Consts) -> R) -> R {
    CONSTS.with(|c| f(&mut c.borrow_mut()))
}

/// Software binary float with a configurable mantissa width.
#[derive(Clone)]
pub struct Extended {
    value: BigFloat,
    bits: u32,
}

impl Extended {
    fn wrap(value: BigFloat, bits: u32) -> Self {
        Extended { value, bits }
    }

    fn p(&self) -> usize {
        self.bits as usize
    }

    fn joint(&self, other: &Self) -> u32 {
        self.bits.max(other.bits)
    }

    pub fn inner(&self) -> &BigFloat {
        &self.value
    }
}

impl Real for Extended {
    fn from_f64(x: f64, bits: u32) -> Self {
        Extended::wrap(BigFloat::from_f64(x, bits as usize), bits)
    }

    fn parse_decimal(s: &str, bits: u32) -> Result<Self> {
        let v = with_consts(|cc| BigFloat::parse(s.trim(), Radix::Dec, bits as usize, RM, cc));
        if v.is_nan() {
            return Err(Error::Parse(format!("`{s}` is not a decimal number")));
        }
        Ok(Extended::wrap(v, bits))
    }

    fn to_decimal(&self) -> String {
        if self.value.is_zero() {
            return "0".to_string();
        }
        // Widening the mantissa is exact and buys enough decimal digits
        // for the text to identify the original value uniquely.
        let mut wide = self.value.clone();
        let stored = self.value.mantissa_max_bit_len().unwrap_or(0).max(self.p());
        let _ = wide.set_precision(stored + 64, RoundingMode::None);
        with_consts(|cc| wide.format(Radix::Dec, RM, cc)).unwrap_or_else(|_| "NaN".to_string())
    }

    fn to_f64(&self) -> f64 {
        if self.value.is_nan() {
            return f64::NAN;
        }
        if self.value.is_inf_pos() {
            return f64::INFINITY;
        }
        if self.value.is_inf_neg() {
            return f64::NEG_INFINITY;
        }
        if self.value.is_zero() {
            return 0.0;
        }
        self.to_decimal()
            .replace("e+", "e")
            .parse::<f64>()
            .unwrap_or(f64::NAN)
    }

    fn bits(&self) -> u32 {
        self.bits
    }

    fn sqrt(&self) -> Self {
        Extended::wrap(self.value.sqrt(self.p(), RM), self.bits)
    }

    fn abs(&self) -> Self {
        Extended::wrap(self.value.abs(), self.bits)
    }

    fn exp(&self) -> Self {
        let v = with_consts(|cc| self.value.exp(self.p(), RM, cc));
        Extended::wrap(v, self.bits)
    }

    fn ln(&self) -> Self {
        if self.value.is_zero() {
            return Extended::wrap(BigFloat::from_f64(f64::NEG_INFINITY, self.p()), self.bits);
        }
        let v = with_consts(|cc| self.value.ln(self.p(), RM, cc));
        Extended::wrap(v, self.bits)
    }

    fn is_finite(&self) -> bool {
        !(self.value.is_nan() || self.value.is_inf())
    }

    fn is_underflowed(&self) -> bool {
        false
    }

    fn is_zero(&self) -> bool {
        self.value.is_zero()
    }
}

impl PartialEq for Extended {
    fn eq(&self, other: &Self) -> bool {
        self.value.partial_cmp(&other.value) == Some(Ordering::Equal)
    }
}

impl PartialOrd for Extended {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        self.value.partial_cmp(&other.value)
    }
}

impl fmt::Debug for Extended {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Extended({}, {} bits)", self.to_decimal(), self.bits)
    }
}

impl fmt::Display for Extended {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_decimal())
    }
}

macro_rules! extended_binop {
    ($tr:ident, $method:ident, $call:ident) => {
        impl $tr for Extended {
            type Output = Extended;
            fn $method(self, rhs: Extended) -> Extended {
                let bits = self.joint(&rhs);
                Extended::wrap(self.value.$call(&rhs.value, bits as usize, RM), bits)
            }
        }
    };
}

extended_binop!(Add, add, add);
extended_binop!(Sub, sub, sub);
extended_binop!(Mul, mul, mul);
extended_binop!(Div, div, div);

impl Neg for Extended {
    type Output = Extended;
    fn neg(self) -> Extended {
        Extended::wrap(self.value.neg(), self.bits)
    }
}

/// Default relative zero-mode threshold for a backend: `1e-12` in double
/// precision, shrinking with the extra mantissa bits of extended backends.
pub fn default_zero_mode_tolerance(bits: u32) -> f64 {
    1e-12 * (2.0f64).powi(DOUBLE_BITS as i32 - bits as i32)
}
