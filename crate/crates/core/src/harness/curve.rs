use std::fmt::Write as _;
use std::path::Path;

use super::pipeline::RunManifest;
use crate::error::Result;

pub const CURVE_HEADER: &str = "size,mean_error,std_error,baseline";

/// `%.9g`-style formatting: 9 significant digits, trailing zeros trimmed,
/// exponent form outside [1e-4, 1e9).
pub fn format_g9(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return if v == 0.0 { "0".into() } else { format!("{v}") };
    }
    // rounding to 9 digits first settles the exponent, as printf does
    let s = format!("{:.8e}", v);
    let (mant, e) = s.split_once('e').expect("exponent form");
    let e: i32 = e.parse().expect("integer exponent");
    if (-4..9).contains(&e) {
        let decimals = (8 - e).max(0) as usize;
        trim(&format!("{:.*}", decimals, v))
    } else {
        format!(
            "{}e{}{:02}",
            trim(mant),
            if e < 0 { '-' } else { '+' },
            e.abs()
        )
    }
}

fn trim(s: &str) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s.to_string()
    }
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".into(), format_g9)
}

pub fn curve_csv(manifest: &RunManifest) -> String {
    let mut out = String::from(CURVE_HEADER);
    out.push('\n');
    for p in &manifest.per_size_curve {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            p.augmentation_size,
            cell(p.mean_error),
            cell(p.std_error),
            format_g9(manifest.baseline_error)
        );
    }
    out
}

pub fn emit_curve(manifest: &RunManifest, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, curve_csv(manifest))?;
    Ok(())
}
