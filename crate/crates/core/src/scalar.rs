//! Floating-point scalar abstraction for the model math.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating point: f32 or f64.
///
/// Carries the little-endian codec used by checkpoints so parameter tensors
/// round-trip bit-exactly at their native width.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Sum
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Name recorded in checkpoint headers.
    const NAME: &'static str;
    /// Encoded width in bytes.
    const BYTES: usize;

    fn write_le(self, out: &mut Vec<u8>);
    fn read_le(bytes: &[u8]) -> Self;

    /// Lossy-free for f64; rounds for f32.
    #[inline]
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("f64 is representable")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar converts to f64")
    }
}

impl Scalar for f32 {
    const NAME: &'static str = "f32";
    const BYTES: usize = 4;

    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }

    fn read_le(bytes: &[u8]) -> Self {
        f32::from_le_bytes(bytes[..4].try_into().expect("4 bytes"))
    }
}

impl Scalar for f64 {
    const NAME: &'static str = "f64";
    const BYTES: usize = 8;

    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }

    fn read_le(bytes: &[u8]) -> Self {
        f64::from_le_bytes(bytes[..8].try_into().expect("8 bytes"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn codec_round_trips_bits() {
        for x in [0.1f64, -3.5e-300, f64::MAX, 1.0 / 3.0] {
            let mut buf = Vec::new();
            x.write_le(&mut buf);
            assert_eq!(buf.len(), f64::BYTES);
            assert_eq!(f64::read_le(&buf).to_bits(), x.to_bits());
        }
        let mut buf = Vec::new();
        0.3f32.write_le(&mut buf);
        assert_eq!(f32::read_le(&buf).to_bits(), 0.3f32.to_bits());
    }
}
