//! Bit-exact f64 serialization as C99-style hex-float strings.
//!
//! Decimal JSON numbers round-trip f64 only if the emitter uses
//! shortest-representation formatting everywhere; hex floats make the
//! guarantee unconditional and self-evident. Formatting normalizes to
//! `0x1.<mantissa>p<exp>` (or `0x0.<mantissa>p-1022` for subnormals) with
//! trailing zero digits trimmed, so every emitted string parses back to the
//! identical bit pattern.

const EXP_BITS_MASK: u64 = 0x7ff;
const FRAC_MASK: u64 = (1u64 << 52) - 1;

/// Formats a finite, infinite, or NaN f64 as a hex-float string.
pub fn format_hex(x: f64) -> String {
    if x.is_nan() {
        return "nan".to_string();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf" } else { "-inf" }.to_string();
    }
    let bits = x.to_bits();
    let sign = if bits >> 63 == 1 { "-" } else { "" };
    let exp_bits = (bits >> 52) & EXP_BITS_MASK;
    let frac = bits & FRAC_MASK;
    if exp_bits == 0 && frac == 0 {
        return format!("{sign}0x0p+0");
    }
    let (lead, exp) = if exp_bits == 0 {
        ('0', -1022i64)
    } else {
        ('1', exp_bits as i64 - 1023)
    };
    let digits = format!("{frac:013x}");
    let digits = digits.trim_end_matches('0');
    if digits.is_empty() {
        format!("{sign}0x{lead}p{exp:+}")
    } else {
        format!("{sign}0x{lead}.{digits}p{exp:+}")
    }
}

/// Parses a hex-float string produced by [`format_hex`] (or any hex-float
/// literal whose mantissa fits in 53 bits). Returns an error for syntax
/// errors and for values that are not exactly representable.
pub fn parse_hex(s: &str) -> Result<f64, String> {
    let s = s.trim();
    match s {
        "nan" => return Ok(f64::NAN),
        "inf" => return Ok(f64::INFINITY),
        "-inf" => return Ok(f64::NEG_INFINITY),
        _ => {}
    }
    let (neg, rest) = match s.strip_prefix('-') {
        Some(r) => (true, r),
        None => (false, s.strip_prefix('+').unwrap_or(s)),
    };
    let rest = rest
        .strip_prefix("0x")
        .or_else(|| rest.strip_prefix("0X"))
        .ok_or_else(|| format!("expected hex float, got {s:?}"))?;
    let p = rest
        .find(['p', 'P'])
        .ok_or_else(|| format!("missing exponent in {s:?}"))?;
    let (mant_str, exp_str) = (&rest[..p], &rest[p + 1..]);
    let exp: i64 = exp_str
        .parse()
        .map_err(|_| format!("bad exponent in {s:?}"))?;
    let (int_part, frac_part) = match mant_str.find('.') {
        Some(d) => (&mant_str[..d], &mant_str[d + 1..]),
        None => (mant_str, ""),
    };
    if int_part.is_empty() && frac_part.is_empty() {
        return Err(format!("empty mantissa in {s:?}"));
    }
    let mut m: u128 = 0;
    for c in int_part.chars().chain(frac_part.chars()) {
        let d = c.to_digit(16).ok_or_else(|| format!("bad digit in {s:?}"))? as u128;
        m = m
            .checked_mul(16)
            .and_then(|v| v.checked_add(d))
            .ok_or_else(|| format!("mantissa overflow in {s:?}"))?;
    }
    let mut k = exp - 4 * frac_part.len() as i64;
    if m == 0 {
        return Ok(if neg { -0.0 } else { 0.0 });
    }
    while m & 1 == 0 {
        m >>= 1;
        k += 1;
    }
    if m >> 53 != 0 {
        return Err(format!("mantissa of {s:?} needs more than 53 bits"));
    }
    if k < -1074 {
        return Err(format!("{s:?} underflows f64"));
    }
    if k > 1023 {
        return Err(format!("{s:?} overflows f64"));
    }
    let val = m as f64 * pow2(k as i32);
    if val.is_infinite() {
        return Err(format!("{s:?} overflows f64"));
    }
    Ok(if neg { -val } else { val })
}

/// Exact power of two for -1074 <= k <= 1023, by bit construction.
fn pow2(k: i32) -> f64 {
    debug_assert!((-1074..=1023).contains(&k));
    if k >= -1022 {
        f64::from_bits(((k + 1023) as u64) << 52)
    } else {
        f64::from_bits(1u64 << (k + 1074))
    }
}
