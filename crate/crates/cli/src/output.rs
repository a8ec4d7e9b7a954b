//! Locale-independent number formatting and all-or-nothing file writes.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

/// Scientific notation with 12 significant digits; `-0` prints as `0`.
pub fn fmt_num(x: f64) -> String {
    let s = format!("{x:.11e}");
    let zero = format!("{:.11e}", 0.0);
    if s == format!("-{zero}") {
        zero
    } else {
        s
    }
}

/// `x` rounded to what [`fmt_num`] prints, for JSON output.
pub fn round_sig(x: f64) -> f64 {
    fmt_num(x).parse().expect("formatted float parses")
}

pub fn csv_row(values: &[f64]) -> String {
    let mut row = values.iter().map(|&v| fmt_num(v)).collect::<Vec<_>>().join(",");
    row.push('\n');
    row
}

/// Writes through a temporary sibling and renames it into place, so a
/// failed write never leaves a partial file at `path`.
pub fn write_atomic(path: &Path, contents: &[u8]) -> io::Result<()> {
    let tmp = tmp_path(path);
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(contents)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    result
}

fn tmp_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".partial");
    path.with_file_name(name)
}
