use crate::{pow2, Rat};
use num::{BigInt, ToPrimitive};
use serde::{Deserialize, Serialize};
use std::fmt;

/// Fixed-point scalar: an integer mantissa paired with a base-2 scale
/// exponent. The represented value is `mantissa / 2^scale_log`.
///
/// Scalar-variant instructions carry these instead of floats so that
/// traces stay exactly serialisable and the simulator stays exact.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FixedScalar {
    pub mantissa: i64,
    pub scale_log: i32,
}

impl FixedScalar {
    pub const fn new(mantissa: i64, scale_log: i32) -> Self {
        FixedScalar {
            mantissa,
            scale_log,
        }
    }

    /// An integer at scale 0.
    pub const fn integer(x: i64) -> Self {
        FixedScalar {
            mantissa: x,
            scale_log: 0,
        }
    }

    /// Round a rational onto the `2^-scale_log` grid.
    pub fn from_rat(v: &Rat, scale_log: i32) -> Self {
        Self::try_from_rat(v, scale_log).expect("scaled scalar mantissa fits 64 bits")
    }

    /// Like `from_rat`, but `None` when the mantissa leaves i64.
    pub fn try_from_rat(v: &Rat, scale_log: i32) -> Option<Self> {
        let m = (v * pow2(scale_log)).round();
        let mantissa = m.to_integer().to_i64()?;
        Some(FixedScalar {
            mantissa,
            scale_log,
        })
    }

    pub fn from_f64(v: f64, scale_log: i32) -> Self {
        Self::from_rat(&crate::rat_from_f64(v), scale_log)
    }

    pub fn value(&self) -> Rat {
        Rat::new(BigInt::from(self.mantissa), BigInt::from(1)) * pow2(-self.scale_log)
    }
}

impl fmt::Debug for FixedScalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}@{}", self.mantissa, self.scale_log)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rounds_to_grid() {
        let third = Rat::new(1.into(), 3.into());
        let s = FixedScalar::from_rat(&third, 4);
        assert_eq!(s.mantissa, 5); // round(16/3) = 5
        assert_eq!(s.value(), Rat::new(5.into(), 16.into()));
    }

    #[test]
    fn integer_is_scale_zero() {
        assert_eq!(FixedScalar::integer(7).value(), Rat::from_integer(7.into()));
    }
}
