//! printf-style number formatting for the text formats (`%.17g`, `%.6e`).

/// C `%.{prec}g`.
pub fn g(x: f64, prec: usize) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let prec = prec.max(1);
    if x == 0.0 {
        return if x.is_sign_negative() {
            "-0".into()
        } else {
            "0".into()
        };
    }
    let sci = format!("{:.*e}", prec - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent marker");
    let exp: i32 = exp.parse().expect("exponent digits");
    if exp < -4 || exp >= prec as i32 {
        format!("{}e{}", trim_zeros(mantissa), exponent_suffix(exp))
    } else {
        let decimals = (prec as i32 - 1 - exp) as usize;
        trim_zeros(&format!("{:.*}", decimals, x)).to_string()
    }
}

/// `%.17g`: enough digits to round-trip any double.
pub fn g17(x: f64) -> String {
    g(x, 17)
}

/// Fewest `%g` digits that parse back to `x`.
pub fn shortest(x: f64) -> String {
    (1..17)
        .map(|p| g(x, p))
        .find(|s| s.parse::<f64>().is_ok_and(|v| v == x))
        .unwrap_or_else(|| g17(x))
}

/// C `%.{prec}e`.
pub fn e(x: f64, prec: usize) -> String {
    if !x.is_finite() {
        return g(x, prec);
    }
    let sci = format!("{:.*e}", prec, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent marker");
    let exp: i32 = exp.parse().expect("exponent digits");
    format!("{}e{}", mantissa, exponent_suffix(exp))
}

fn exponent_suffix(exp: i32) -> String {
    let sign = if exp < 0 { '-' } else { '+' };
    format!("{}{:02}", sign, exp.abs())
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}
