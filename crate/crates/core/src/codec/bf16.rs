use half::bf16;

/// Raw brain-float-16 bits: 1 sign, 8 exponent, 7 explicit mantissa.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Bf16Word(pub u16);

pub const MANTISSA_BITS: u32 = 7;
const MAX_FINITE: u16 = 0x7F7F;

impl Bf16Word {
    pub fn bits(self) -> u16 {
        self.0
    }

    pub fn to_f32(self) -> f32 {
        bf16::from_bits(self.0).to_f32()
    }

    pub fn to_f64(self) -> f64 {
        f64::from(self.to_f32())
    }

    pub fn is_zero(self) -> bool {
        self.0 & 0x7FFF == 0
    }
}

/// Rounds `x` to bf16 (round-to-nearest-even on the f32 representation).
/// Returns the word and whether it saturated to the largest finite magnitude.
pub fn to_bf16(x: f64) -> (Bf16Word, bool) {
    debug_assert!(x.is_finite());
    let h = bf16::from_f32(x as f32);
    if h.is_infinite() {
        let sign = if x < 0.0 { 0x8000 } else { 0 };
        (Bf16Word(sign | MAX_FINITE), true)
    } else {
        (Bf16Word(h.to_bits()), false)
    }
}

/// Clears the lowest `m` explicit mantissa bits (truncation toward zero).
pub fn truncate_mantissa(w: Bf16Word, m: u32) -> Bf16Word {
    assert!(m <= MANTISSA_BITS, "at most {MANTISSA_BITS} mantissa bits can be cleared");
    let mask: u16 = !((1u16 << m) - 1);
    Bf16Word(w.0 & mask)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn exact_values() {
        assert_eq!(to_bf16(1.0).0.to_f64(), 1.0);
        assert_eq!(to_bf16(0.0).0, Bf16Word(0));
        // 1 + 2⁻⁸ lies halfway between 1 and 1 + 2⁻⁷; ties go to the even mantissa.
        assert_eq!(to_bf16(1.00390625).0.to_f64(), 1.0);
        assert_eq!(to_bf16(1.01171875).0.to_f64(), 1.015625);
    }

    #[test]
    fn saturates_out_of_range() {
        let (w, sat) = to_bf16(1e300);
        assert!(sat);
        assert_eq!(w.0, 0x7F7F);
        let (w, sat) = to_bf16(-1e39);
        assert!(sat);
        assert_eq!(w.0, 0xFF7F);
        assert!(!to_bf16(3.0e38).1);
    }

    #[test]
    fn truncation_examples() {
        let w = to_bf16(1.9921875).0;
        assert_eq!(w.0 & 0x7F, 0x7F);
        assert_eq!(truncate_mantissa(w, 7).to_f64(), 1.0);
        let w = to_bf16(1.75).0;
        assert_eq!(truncate_mantissa(w, 2), w);
        assert_eq!(truncate_mantissa(w, 0), w);
        assert_eq!(truncate_mantissa(to_bf16(-1.9921875).0, 7).to_f64(), -1.0);
    }

    proptest! {
        #[test]
        fn bf16_roundtrips_through_f32(bits in any::<u16>()) {
            let w = Bf16Word(bits);
            let f = w.to_f32();
            prop_assume!(f.is_finite());
            prop_assert_eq!(Bf16Word(bf16::from_f32(f).to_bits()), w);
        }

        #[test]
        fn truncation_is_idempotent_and_bounded(x in -1e30f64..1e30, m in 0u32..=7) {
            let w = to_bf16(x).0;
            let t = truncate_mantissa(w, m);
            prop_assert_eq!(truncate_mantissa(t, m), t);
            prop_assert_eq!(t.0 & 0xFF80, w.0 & 0xFF80);
            let (a, b) = (w.to_f64(), t.to_f64());
            if a != 0.0 && (w.0 & 0x7F80) != 0 {
                prop_assert!(((a - b) / a).abs() <= 2f64.powi(m as i32 - 7));
                prop_assert!(b.abs() <= a.abs());
            }
        }
    }
}
