//! Flat-file output: CSV with 17-significant-digit floats.

use std::io::{self, Write};

use crate::equilibria::{Equilibrium, LocusFailure, PitchforkPoint};

/// Shortest decimal that round-trips: at most 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        // Rust's Display is the shortest exact round-trip representation
        format!("{x:?}")
    } else if x.is_nan() {
        "nan".into()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

pub fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

pub const EQUILIBRIA_HEADER: &str =
    "alpha,t_h,q_star,tau_prime,kind,eig_re_1,eig_im_1,eig_re_2,eig_im_2";

pub fn equilibrium_row(alpha: f64, t_h: f64, e: &Equilibrium) -> String {
    format!(
        "{},{},{},{},{},{},{},{},{}",
        fmt_f64(alpha),
        fmt_f64(t_h),
        fmt_f64(e.q_star),
        fmt_f64(e.tau_prime),
        e.kind.as_str(),
        fmt_f64(e.eigenvalues[0].re),
        fmt_f64(e.eigenvalues[0].im),
        fmt_f64(e.eigenvalues[1].re),
        fmt_f64(e.eigenvalues[1].im)
    )
}

pub fn write_equilibria<W: Write>(
    mut out: W,
    rows: &[(f64, f64, Vec<Equilibrium>)],
) -> io::Result<()> {
    writeln!(out, "{EQUILIBRIA_HEADER}")?;
    for (alpha, t_h, eqs) in rows {
        for e in eqs {
            writeln!(out, "{}", equilibrium_row(*alpha, *t_h, e))?;
        }
    }
    Ok(())
}

pub fn write_pitchfork<W: Write>(mut out: W, points: &[PitchforkPoint]) -> io::Result<()> {
    writeln!(out, "alpha,t_h,q_star")?;
    for pt in points {
        writeln!(out, "{},{},{}", fmt_f64(pt.alpha), fmt_f64(pt.t_h), fmt_f64(pt.q_star))?;
    }
    Ok(())
}

pub fn write_locus_failures<W: Write>(mut out: W, kind: &str, failures: &[LocusFailure]) -> io::Result<()> {
    writeln!(out, "kind,alpha,reason")?;
    for f in failures {
        writeln!(out, "{},{},{}", kind, fmt_f64(f.alpha), csv_text(&f.reason))?;
    }
    Ok(())
}

/// Quote a free-text field if it needs it.
pub fn csv_text(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip_exactly() {
        for x in [0.1, 1.0 / 3.0, std::f64::consts::PI, -2.5e-300, 6.02214076e23, 0.0, 337.6] {
            let s = fmt_f64(x);
            assert_eq!(s.parse::<f64>().unwrap().to_bits(), x.to_bits(), "{s}");
            let digits = s
                .trim_start_matches('-')
                .split(['e', 'E'])
                .next()
                .unwrap()
                .chars()
                .filter(|c| c.is_ascii_digit())
                .collect::<String>();
            assert!(digits.trim_start_matches('0').len() <= 17, "{s}");
        }
    }

    #[test]
    fn text_fields_are_quoted() {
        assert_eq!(csv_text("plain"), "plain");
        assert_eq!(csv_text("a, b"), "\"a, b\"");
        assert_eq!(csv_text("say \"hi\""), "\"say \"\"hi\"\"\"");
    }
}
