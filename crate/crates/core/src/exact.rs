//! Comparisons between `f64` quantities and integer byte counts.
//!
//! Every finite `f64` is a dyadic rational `m * 2^e`, so ratios of weights to
//! byte counts can be ordered without rounding by working in `u128`. Time
//! checks use the correctly rounded quotient instead, matching the times the
//! scheduler reports.

use std::cmp::Ordering;

/// Splits a finite, non-negative float into `(mantissa, exponent)` with
/// `x == mantissa * 2^exponent` exactly.
pub fn decompose(x: f64) -> (u64, i32) {
    debug_assert!(x.is_finite() && x >= 0.0, "decompose expects finite x >= 0, got {x}");
    if x == 0.0 {
        return (0, 0);
    }
    let bits = x.to_bits();
    let raw_exp = ((bits >> 52) & 0x7ff) as i32;
    let frac = bits & ((1u64 << 52) - 1);
    if raw_exp == 0 {
        (frac, -1074)
    } else {
        (frac | (1u64 << 52), raw_exp - 1075)
    }
}

/// Compares `a * 2^ea` against `b * 2^eb`.
fn cmp_scaled(a: u128, ea: i32, b: u128, eb: i32) -> Ordering {
    if a == 0 || b == 0 {
        return a.cmp(&b);
    }
    let la = 128 - a.leading_zeros() as i32 + ea;
    let lb = 128 - b.leading_zeros() as i32 + eb;
    if la != lb {
        return la.cmp(&lb);
    }
    // Equal bit lengths: the exponent gap is below 128 and the shifted
    // operand keeps the other's bit length, so the shift cannot overflow.
    if ea >= eb {
        (a << (ea - eb) as u32).cmp(&b)
    } else {
        a.cmp(&(b << (eb - ea) as u32))
    }
}

/// Compares the ratios `wa / ca` and `wb / cb` exactly.
///
/// Costs must be strictly positive.
pub fn ratio_cmp(wa: f64, ca: u64, wb: f64, cb: u64) -> Ordering {
    debug_assert!(ca > 0 && cb > 0);
    let (ma, ea) = decompose(wa);
    let (mb, eb) = decompose(wb);
    cmp_scaled(ma as u128 * cb as u128, ea, mb as u128 * ca as u128, eb)
}

/// Returns true when the transfer time `bytes / bandwidth`, rounded to the
/// nearest `f64`, is at most `seconds`.
///
/// The rounded quotient is what [`crate::scheduler::completion_times`]
/// reports, so a unit accepted here never shows a completion time past the
/// deadline, and a decimal deadline such as 0.6 s accepts a transfer of
/// exactly 0.6 s.
pub fn bytes_within(bytes: u64, bandwidth: u64, seconds: f64) -> bool {
    debug_assert!(bandwidth > 0);
    bytes as f64 / bandwidth as f64 <= seconds
}

/// `floor(rate * seconds)` with the product rounded to the nearest `f64`
/// first, saturating at `u64::MAX`.
pub fn floor_product(rate: u64, seconds: f64) -> u64 {
    if seconds.is_nan() || seconds <= 0.0 {
        return 0;
    }
    // Float-to-int casts saturate.
    (rate as f64 * seconds).floor() as u64
}
