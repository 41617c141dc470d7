//! CSV rendering with fixed precision and atomic file output.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use crate::chamber::{Lobe, SweepSample};
use crate::channel::Pdp;
use crate::coverage::CoverageGrid;

/// Formats a dB value with two decimals; infinities as `-inf` / `inf`.
pub fn fmt_db(v: f64) -> String {
    if v == f64::NEG_INFINITY {
        "-inf".to_string()
    } else if v == f64::INFINITY {
        "inf".to_string()
    } else if v.is_nan() {
        "nan".to_string()
    } else {
        format!("{:.2}", v + 0.0)
    }
}

/// Formats a coordinate in meters with three decimals.
pub fn fmt_pos(v: f64) -> String {
    format!("{:.3}", v + 0.0)
}

pub fn fmt_prob(v: f64) -> String {
    format!("{:.6}", v)
}

pub fn grid_csv(grid: &CoverageGrid, with_baseline: bool) -> String {
    let mut s = String::from("x,y,z,power_dbm");
    if with_baseline {
        s.push_str(",baseline_dbm");
    }
    s.push('\n');
    for (k, p) in grid.points.iter().enumerate() {
        let _ = write!(
            s,
            "{},{},{},{}",
            fmt_pos(p.x),
            fmt_pos(p.y),
            fmt_pos(p.z),
            fmt_db(grid.power_dbm[k])
        );
        if with_baseline {
            let _ = write!(s, ",{}", fmt_db(grid.baseline_dbm[k]));
        }
        s.push('\n');
    }
    s
}

pub fn cdf_csv(cdf: &[(f64, f64)]) -> String {
    let mut s = String::from("power_dbm,probability\n");
    for (v, p) in cdf {
        let _ = writeln!(s, "{},{}", fmt_db(*v), fmt_prob(*p));
    }
    s
}

/// `name,value` rows with preformatted values.
pub fn stats_csv(rows: &[(String, String)]) -> String {
    let mut s = String::from("statistic,value\n");
    for (name, v) in rows {
        let _ = writeln!(s, "{name},{v}");
    }
    s
}

pub fn pdp_csv(pdp: &Pdp) -> String {
    let mut s = String::from("delay_ns,power_dbm,tag\n");
    for e in &pdp.bins {
        let _ = writeln!(
            s,
            "{:.3},{},{}",
            e.delay_s * 1e9,
            fmt_db(e.power_dbm),
            e.tag.as_str()
        );
    }
    s
}

pub fn sweep_csv(sweep: &[SweepSample]) -> String {
    let mut s = String::from("theta_deg,power_dbm\n");
    for p in sweep {
        let _ = writeln!(s, "{},{}", fmt_pos(p.theta_deg), fmt_db(p.power_dbm));
    }
    s
}

pub fn lobes_csv(lobes: &[Lobe]) -> String {
    let mut s = String::from("rank,theta_deg,power_dbm,relative_db\n");
    for l in lobes {
        let _ = writeln!(
            s,
            "{},{},{},{}",
            l.rank,
            fmt_pos(l.theta_deg),
            fmt_db(l.power_dbm),
            fmt_db(l.relative_db)
        );
    }
    s
}

/// Writes `contents` to a temporary file in the target directory and renames
/// it into place, so readers never observe a partial file.
pub fn write_atomic(path: &Path, contents: &[u8]) -> std::io::Result<()> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(contents)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}
