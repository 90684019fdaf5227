//! Text output helpers shared by the CSV writers.

/// Format `x` with 17 significant digits.
///
/// Plain decimal notation is used for decimal exponents in `[-5, 17)`,
/// scientific notation otherwise. Output round-trips through `str::parse`.
pub fn fmt17(x: f64) -> String {
    if !x.is_finite() {
        return format!("{x}");
    }
    if x == 0.0 {
        return if x.is_sign_negative() {
            "-0.0000000000000000".into()
        } else {
            "0.0000000000000000".into()
        };
    }
    // Exponent of the value after rounding to 17 significant digits.
    let sci = format!("{:.16e}", x);
    let exp: i32 = sci[sci.find('e').expect("scientific format") + 1..]
        .parse()
        .expect("integer exponent");
    if (-5..17).contains(&exp) {
        let decimals = (16 - exp) as usize;
        format!("{:.*}", decimals, x)
    } else {
        sci
    }
}
