//! Signed magic-number division constants.
//!
//! For a divisor d with |d| >= 2, finds (m, s) such that for every 32-bit
//! x, the truncating quotient x / d equals
//!
//!   q = hi32(m * x) ; if m < 0 { q += x } ; q >>= s ; q += (x >>u 31)
//!
//! (for d > 0; negative divisors negate the result of |d|). This is the
//! standard iterative construction over the unsigned 33-bit estimate.

/// Magic pair for a positive divisor `d >= 2` that is used by the code
/// generator for non-power-of-two divisors.
pub fn magic_s32(d: i32) -> (i32, u32) {
    assert!(d >= 2, "magic constants are generated for divisors >= 2");
    let ad: u32 = d.unsigned_abs();
    let two31: u32 = 1 << 31;
    // Largest magnitude negative dividend "anc" that behaves like -2^31
    // for this divisor.
    let t: u32 = two31.wrapping_add((d as u32) >> 31);
    let anc: u32 = t.wrapping_sub(1).wrapping_sub(t % ad);
    let mut p: u32 = 31;
    let mut q1: u32 = two31 / anc;
    let mut r1: u32 = two31.wrapping_sub(q1.wrapping_mul(anc));
    let mut q2: u32 = two31 / ad;
    let mut r2: u32 = two31.wrapping_sub(q2.wrapping_mul(ad));
    loop {
        p += 1;
        q1 = q1.wrapping_mul(2);
        r1 = r1.wrapping_mul(2);
        if r1 >= anc {
            q1 = q1.wrapping_add(1);
            r1 = r1.wrapping_sub(anc);
        }
        q2 = q2.wrapping_mul(2);
        r2 = r2.wrapping_mul(2);
        if r2 >= ad {
            q2 = q2.wrapping_add(1);
            r2 = r2.wrapping_sub(ad);
        }
        let delta = ad.wrapping_sub(r2);
        if q1 < delta || (q1 == delta && r1 == 0) {
            continue;
        }
        break;
    }
    let m = q2.wrapping_add(1) as i32;
    (m, p - 32)
}

/// Reference quotient computed through the magic sequence, mirroring the
/// emitted instructions. Used to cross-check the constants.
#[cfg(test)]
pub(crate) fn magic_quotient(x: i32, m: i32, s: u32) -> i32 {
    let wide = (m as i64).wrapping_mul(x as i64);
    let mut hi = (wide >> 32) as i32;
    if m < 0 {
        hi = hi.wrapping_add(x);
    }
    let shifted = hi >> s;
    shifted.wrapping_add(((x as u32) >> 31) as i32)
}
