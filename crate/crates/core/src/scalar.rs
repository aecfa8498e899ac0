//! Scalar abstraction over the tensor element type.
//!
//! All numeric code in this crate is generic over [`Scalar`]; concrete
//! aliases for the default 64-bit instantiation live at the crate root.
//! Constants are written as `f64` literals and converted through
//! [`Scalar::c`], and random draws always consume `f64` from the stream so
//! that the sequence of RNG states does not depend on the element type.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssignOps, ToPrimitive};

pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + NumAssignOps
    + Sum
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` constant into this scalar type.
    #[inline]
    fn c(x: f64) -> Self {
        Self::from_f64(x).expect("f64 constant representable")
    }

    /// Widens to `f64` (exact for `f32` and `f64`).
    #[inline]
    fn f64(self) -> f64 {
        self.to_f64().expect("scalar widens to f64")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
