/// Formats a finite float with at most 9 significant digits, using the
/// shortest decimal that round-trips to the 9-digit rounded value.
pub(crate) fn sig9(x: f64) -> String {
    debug_assert!(x.is_finite());
    format!("{}", round_sig9(x))
}

/// Nearest float to `x` rounded to 9 significant decimal digits.
pub(crate) fn round_sig9(x: f64) -> f64 {
    if x == 0.0 {
        return 0.0;
    }
    format!("{x:.8e}").parse().expect("formatted float parses")
}
