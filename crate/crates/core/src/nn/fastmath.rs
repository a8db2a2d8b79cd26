//! `sin`/`cos` and `exp` for the activation hot loops.
//!
//! fdlibm reductions and kernel polynomials, about 1 ulp. The `*_reduced`
//! forms have no branches, so loops over them vectorize; callers check the
//! argument range once per slice and fall back to the standard library.

const REDUCE_LIMIT: f64 = 1e5;

const PIO2_1: f64 = 1.570_796_326_734_125_614_17e+00;
const PIO2_2: f64 = 6.077_100_506_303_965_976_60e-11;
const PIO2_3: f64 = 2.022_266_248_711_166_455_80e-21;

const S1: f64 = -1.666_666_666_666_663_243_48e-01;
const S2: f64 = 8.333_333_333_322_489_461_21e-03;
const S3: f64 = -1.984_126_982_985_794_931_34e-04;
const S4: f64 = 2.755_731_370_707_006_767_89e-06;
const S5: f64 = -2.505_076_025_340_686_341_95e-08;
const S6: f64 = 1.589_690_995_211_550_158_94e-10;

const C1: f64 = 4.166_666_666_666_660_190_37e-02;
const C2: f64 = -1.388_888_888_887_410_957_49e-03;
const C3: f64 = 2.480_158_728_947_672_941_78e-05;
const C4: f64 = -2.755_731_435_139_066_330_35e-07;
const C5: f64 = 2.087_572_321_298_174_827_79e-09;
const C6: f64 = -1.135_964_755_778_819_482_51e-11;

#[inline]
fn kernel_sin(x: f64) -> f64 {
    let z = x * x;
    let r = S2 + z * (S3 + z * (S4 + z * (S5 + z * S6)));
    x + x * z * (S1 + z * r)
}

#[inline]
fn kernel_cos(x: f64) -> f64 {
    let z = x * x;
    let r = z * (C1 + z * (C2 + z * (C3 + z * (C4 + z * (C5 + z * C6)))));
    let hz = 0.5 * z;
    let w = 1.0 - hz;
    w + (((1.0 - w) - hz) + z * r)
}

/// Adding and subtracting 1.5 * 2^52 rounds to the nearest integer.
const ROUND_MAGIC: f64 = 6_755_399_441_055_744.0;

#[inline]
pub fn sin_cos(x: f64) -> (f64, f64) {
    if !(x.abs() < REDUCE_LIMIT) {
        return x.sin_cos();
    }
    sin_cos_reduced(x)
}

/// True when every `scale * x` can take [`sin_cos_reduced`].
pub fn all_reducible(xs: &[f64], scale: f64) -> bool {
    xs.iter().fold(true, |ok, &x| ok & ((scale * x).abs() < REDUCE_LIMIT))
}

/// Only valid for `|x| < REDUCE_LIMIT`. Branch-free so loops over it vectorize.
#[inline(always)]
pub fn sin_cos_reduced(x: f64) -> (f64, f64) {
    let shifted = x * std::f64::consts::FRAC_2_PI + ROUND_MAGIC;
    let q = shifted - ROUND_MAGIC;
    let r = ((x - q * PIO2_1) - q * PIO2_2) - q * PIO2_3;
    let (s, c) = (kernel_sin(r), kernel_cos(r));
    // The low mantissa bits of `shifted` hold q. Odd quadrants swap
    // (s, c) -> (c, -s), quadrants 2 and 3 negate both.
    let qi = shifted.to_bits();
    let odd = (qi & 1) as f64;
    let even = 1.0 - odd;
    let sign = ((qi >> 1) & 1) << 63;
    let sin = s * even + c * odd;
    let cos = c * even - s * odd;
    (f64::from_bits(sin.to_bits() ^ sign), f64::from_bits(cos.to_bits() ^ sign))
}


const LN2_HI: f64 = 6.931_471_803_691_238_164_90e-01;
const LN2_LO: f64 = 1.908_214_929_270_587_700_02e-10;
const P1: f64 = 1.666_666_666_666_660_190_37e-01;
const P2: f64 = -2.777_777_777_701_559_338_42e-03;
const P3: f64 = 6.613_756_321_437_934_361_17e-05;
const P4: f64 = -1.653_390_220_546_525_153_90e-06;
const P5: f64 = 4.138_136_797_057_238_460_39e-08;

/// Above this `exp` needs an exponent the bit trick below cannot build.
const EXP_MAX: f64 = 709.0;
/// Below this the result is subnormal; it is flushed to zero.
const EXP_MIN: f64 = -708.0;

/// True when every `x` can take [`exp_reduced`]. NaN fails the check.
pub fn all_exp_reducible(xs: impl Iterator<Item = f64>) -> bool {
    xs.fold(true, |ok, x| ok & (x <= EXP_MAX))
}

/// `exp` for `x <= EXP_MAX`; inputs below `EXP_MIN` give zero.
#[inline(always)]
pub fn exp_reduced(x: f64) -> f64 {
    let xc = x.max(EXP_MIN);
    let shifted = xc * std::f64::consts::LOG2_E + ROUND_MAGIC;
    let k = shifted - ROUND_MAGIC;
    let hi = xc - k * LN2_HI;
    let lo = k * LN2_LO;
    let r = hi - lo;
    let t = r * r;
    let c = r - t * (P1 + t * (P2 + t * (P3 + t * (P4 + t * P5))));
    let y = 1.0 - ((lo - (r * c) / (2.0 - c)) - hi);
    // Low mantissa bits of `shifted` hold k as two's complement.
    let n = (shifted.to_bits() as i64).wrapping_sub(ROUND_MAGIC.to_bits() as i64);
    let scale = f64::from_bits(((n + 1023) as u64) << 52);
    let keep = (x >= EXP_MIN) as u64 as f64;
    y * scale * keep
}

#[inline]
pub fn exp(x: f64) -> f64 {
    if x <= EXP_MAX {
        exp_reduced(x)
    } else {
        x.exp()
    }
}
