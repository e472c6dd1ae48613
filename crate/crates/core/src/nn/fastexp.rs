//! Batched `exp` for max-shifted softmax logits.
//!
//! Range reduction `x = k ln2 + r`, `|r| <= ln2 / 2`, then a degree-13 Taylor
//! polynomial: within a few ulp of `f64::exp`. Only IEEE add, sub and mul are
//! used (no fused multiply-add), so the AVX2 build and the portable build
//! return identical bits.

const LN2_HI: f64 = 6.931_471_803_691_238_2e-1;
const LN2_LO: f64 = 1.908_214_929_270_587_7e-10;
/// `1.5 * 2^52`: adding it rounds to an integer held in the low mantissa bits.
const SHIFTER: f64 = 6_755_399_441_055_744.0;
/// Inputs below this flush to zero; `2^k` stays normal above it.
const LOWER: f64 = -708.0;
const INV_FACT: [f64; 14] = [
    1.0,
    1.0,
    1.0 / 2.0,
    1.0 / 6.0,
    1.0 / 24.0,
    1.0 / 120.0,
    1.0 / 720.0,
    1.0 / 5040.0,
    1.0 / 40_320.0,
    1.0 / 362_880.0,
    1.0 / 3_628_800.0,
    1.0 / 39_916_800.0,
    1.0 / 479_001_600.0,
    1.0 / 6_227_020_800.0,
];

#[inline(always)]
fn exp_one(x: f64) -> f64 {
    let xc = if x < LOWER { LOWER } else { x };
    let t = xc * std::f64::consts::LOG2_E + SHIFTER;
    let kf = t - SHIFTER;
    let r = (xc - kf * LN2_HI) - kf * LN2_LO;
    let mut p = INV_FACT[13];
    for c in INV_FACT[..13].iter().rev() {
        p = p * r + c;
    }
    // low bits of t hold k (two's complement); shift k + 1023 into the exponent
    let scale = f64::from_bits(t.to_bits().wrapping_add(1023) << 52);
    let y = p * scale;
    if x.is_nan() {
        x
    } else if x < LOWER {
        0.0
    } else {
        y
    }
}

fn exp_slice_portable(values: &mut [f64]) {
    for v in values {
        *v = exp_one(*v);
    }
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2")]
unsafe fn exp_slice_avx2(values: &mut [f64]) {
    for v in values {
        *v = exp_one(*v);
    }
}

/// In-place `exp` of every entry; entries must be `<= 0`.
pub(crate) fn exp_nonpositive_slice(values: &mut [f64]) {
    #[cfg(target_arch = "x86_64")]
    {
        if std::is_x86_feature_detected!("avx2") {
            // SAFETY: the CPU supports AVX2, checked just above.
            unsafe { exp_slice_avx2(values) };
            return;
        }
    }
    exp_slice_portable(values);
}
