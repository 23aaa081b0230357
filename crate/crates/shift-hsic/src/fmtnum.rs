//! Text formatting for numeric output: 17 significant digits, enough to
//! round-trip any f64 exactly.

pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn round_trips_exactly(v in proptest::num::f64::NORMAL | proptest::num::f64::ZERO) {
            let parsed: f64 = fmt_f64(v).parse().unwrap();
            prop_assert_eq!(parsed.to_bits(), v.to_bits());
        }
    }
}
