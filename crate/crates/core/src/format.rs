//! Byte-stable number formatting for CSV and console output.

/// Shortest round-trip decimal. Very large or very small magnitudes switch to
/// exponent notation so the penalty sentinel stays readable.
pub fn float(x: f64) -> String {
    let a = x.abs();
    if x != 0.0 && x.is_finite() && !(1e-5..1e16).contains(&a) {
        format!("{x:e}")
    } else {
        format!("{x}")
    }
}

#[cfg(test)]
mod tests {
    use super::float;

    #[test]
    fn round_trips() {
        for x in [0.0, 1.5, -2.25, 1e-7, f64::MAX, 0.1 + 0.2, 123456.789] {
            assert_eq!(float(x).parse::<f64>().unwrap(), x);
        }
        assert_eq!(float(f64::MAX), "1.7976931348623157e308");
        assert_eq!(float(0.5), "0.5");
    }
}
