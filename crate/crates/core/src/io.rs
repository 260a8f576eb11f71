//! Number formatting, digests and small text-parsing helpers shared by the file formats.

use sha2::{Digest, Sha256};

/// Scientific notation with 9 significant digits.
pub fn sig9(x: f64) -> String {
    format!("{x:.8e}")
}

/// Scientific notation with 17 significant digits; parses back to the same `f64`.
pub fn sig17(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Splits a data line on commas or runs of whitespace.
pub(crate) fn split_fields(line: &str) -> Vec<&str> {
    if line.contains(',') {
        line.split(',').map(str::trim).collect()
    } else {
        line.split_whitespace().collect()
    }
}

pub(crate) fn parse_f64(field: &str) -> Option<f64> {
    field.trim().parse::<f64>().ok()
}
