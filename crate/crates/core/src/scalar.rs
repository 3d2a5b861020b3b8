//! Scalar abstraction for block data.
//!
//! Stencil arithmetic, halo buffers, and the serial reference are generic over
//! [`Scalar`], with `f32` and `f64` provided. Timing never depends on the
//! scalar type except through its byte width.

use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive};

pub trait Scalar:
    Float + FromPrimitive + Default + Debug + Display + Send + Sync + 'static
{
    /// Short name used in configs and reports.
    const NAME: &'static str;

    /// Bit pattern used for exact (bitwise) grid comparison.
    fn to_bits_u64(self) -> u64;

    fn seven() -> Self;
}

impl Scalar for f64 {
    const NAME: &'static str = "f64";

    fn to_bits_u64(self) -> u64 {
        self.to_bits()
    }

    fn seven() -> Self {
        7.0
    }
}

impl Scalar for f32 {
    const NAME: &'static str = "f32";

    fn to_bits_u64(self) -> u64 {
        self.to_bits() as u64
    }

    fn seven() -> Self {
        7.0
    }
}

/// Element width in bytes.
pub fn elem_bytes<T: Scalar>() -> u64 {
    std::mem::size_of::<T>() as u64
}
