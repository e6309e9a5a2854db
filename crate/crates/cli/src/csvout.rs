//! Minimal RFC 4180 CSV writing: CRLF line endings, '.' decimal separator,
//! no locale dependence. Fields here never contain separators or quotes, so
//! no escaping is required.

use std::fs;
use std::io;
use std::path::Path;

pub fn write_csv(path: &Path, header: &[String], rows: &[Vec<String>]) -> io::Result<()> {
    let mut out = String::new();
    out.push_str(&header.join(","));
    out.push_str("\r\n");
    for row in rows {
        out.push_str(&row.join(","));
        out.push_str("\r\n");
    }
    fs::write(path, out)
}
