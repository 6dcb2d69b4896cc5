//! Rounding of scalars to the storage precision selected by an element width.
//!
//! 64 → IEEE binary64, 32 → binary32, 16 → binary16, 8 → two's-complement
//! signed integer.

use half::f16;

use crate::error::{Error, Result};

/// Rounds `x` to the nearest value storable with `bits` bits.
pub fn round_to(x: f64, bits: u32) -> f64 {
    match bits {
        64 => x,
        32 => x as f32 as f64,
        16 => f16::from_f64(x).to_f64(),
        8 => x.round().clamp(i8::MIN as f64, i8::MAX as f64),
        _ => x,
    }
}

pub fn is_representable(x: f64, bits: u32) -> bool {
    round_to(x, bits).to_bits() == x.to_bits() || (x == 0.0 && round_to(x, bits) == 0.0)
}

pub fn check_representable(x: f64, bits: u32) -> Result<()> {
    if is_representable(x, bits) {
        Ok(())
    } else {
        Err(Error::NotRepresentable { value: x, bits })
    }
}

/// Next representable value above (`up`) or below `x` at the given width.
/// `x` must already be representable.
pub fn step(x: f64, bits: u32, up: bool) -> f64 {
    match bits {
        64 => {
            if up {
                x.next_up()
            } else {
                x.next_down()
            }
        }
        32 => {
            let v = x as f32;
            (if up { v.next_up() } else { v.next_down() }) as f64
        }
        16 => {
            // binary16 bit patterns are sign-magnitude integers
            let b = f16::from_f64(x).to_bits();
            let magnitude = b & 0x7fff;
            let negative = b & 0x8000 != 0 && magnitude != 0;
            let next = match (negative, up) {
                (_, true) if magnitude == 0 => 0x0001,
                (_, false) if magnitude == 0 => 0x8001,
                (false, true) | (true, false) => b + 1,
                (false, false) | (true, true) => b - 1,
            };
            f16::from_bits(next).to_f64()
        }
        _ => {
            if up {
                x + 1.0
            } else {
                x - 1.0
            }
        }
    }
}
