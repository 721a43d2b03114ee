//! Experiment harness: configs, problem generation, runs, summaries and
//! ablation presets.
//!
//! Seeding: a triple `(method, instance, seed)` runs with
//! `child_seed(seed, "<method>/<instance>")`. Inside a run, the engine draws
//! from the `engine/draws` and `adapt` streams, each solver from
//! `solver/<id>`, and the initial population from `population`. Nothing reads
//! ambient entropy.

pub mod config;
pub mod generate;
pub mod presets;
pub mod runner;
pub mod summarize;

/// Formats a float with 9 significant digits; NaN becomes an empty cell.
pub fn fmt_float(x: f64) -> String {
    if x.is_nan() {
        return String::new();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let rounded: f64 = format!("{x:.8e}").parse().expect("formatted float parses");
    format!("{rounded}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nine_significant_digits() {
        assert_eq!(fmt_float(1.0), "1");
        assert_eq!(fmt_float(0.1 + 0.2), "0.3");
        assert_eq!(fmt_float(1.0 / 3.0), "0.333333333");
        assert_eq!(fmt_float(123456789012.0), "123456789000");
        assert_eq!(fmt_float(-2.5e-7), "-0.00000025");
        assert_eq!(fmt_float(f64::NAN), "");
        assert_eq!(fmt_float(f64::NEG_INFINITY), "-inf");
    }
}
