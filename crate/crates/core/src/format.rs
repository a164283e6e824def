//! Text formatting for numbers in emitted JSON and CSV files.
//!
//! Every float is written from its shortest round-trip representation, padded
//! with trailing zeros up to a minimum number of significant digits. The output
//! always parses back to the identical `f64`.

use std::io;

use serde::Serialize;
use serde_json::ser::{Formatter, PrettyFormatter};

/// Significant digits used for floats in JSON outputs.
pub const JSON_DIGITS: usize = 10;
/// Significant digits used for floats in CSV outputs.
pub const CSV_DIGITS: usize = 6;

/// Formats `value` with at least `min_digits` significant digits, losslessly.
///
/// Magnitudes in `[1e-5, 1e15)` use positional notation, everything else
/// scientific (`1.234500000e-7`). Non-finite values are written as `NaN`,
/// `inf` or `-inf`; callers emitting JSON must not pass them.
pub fn fmt_sig(value: f64, min_digits: usize) -> String {
    if !value.is_finite() {
        return format!("{value}");
    }
    if value == 0.0 {
        return if value.is_sign_negative() { "-0.0".into() } else { "0.0".into() };
    }
    let sci = format!("{:e}", value.abs());
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    let mut digits: String = mantissa.chars().filter(|c| *c != '.').collect();
    while digits.len() < min_digits.max(1) {
        digits.push('0');
    }
    let sign = if value < 0.0 { "-" } else { "" };
    if (-5..15).contains(&exp) {
        let body = if exp < 0 {
            format!("0.{}{}", "0".repeat((-exp - 1) as usize), digits)
        } else {
            let int_len = exp as usize + 1;
            if digits.len() <= int_len {
                let pad = int_len - digits.len();
                format!("{}{}.0", digits, "0".repeat(pad))
            } else {
                format!("{}.{}", &digits[..int_len], &digits[int_len..])
            }
        };
        format!("{sign}{body}")
    } else {
        let tail = if digits.len() > 1 { &digits[1..] } else { "0" };
        format!("{sign}{}.{tail}e{exp}", &digits[..1])
    }
}

/// Pretty JSON formatter that writes floats through [`fmt_sig`].
struct SigFormatter<'a> {
    inner: PrettyFormatter<'a>,
    digits: usize,
}

impl Formatter for SigFormatter<'_> {
    fn write_f64<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        if value.is_finite() {
            writer.write_all(fmt_sig(value, self.digits).as_bytes())
        } else {
            writer.write_all(b"null")
        }
    }

    fn begin_array<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.inner.begin_array(writer)
    }

    fn end_array<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.inner.end_array(writer)
    }

    fn begin_array_value<W: ?Sized + io::Write>(&mut self, writer: &mut W, first: bool) -> io::Result<()> {
        self.inner.begin_array_value(writer, first)
    }

    fn end_array_value<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.inner.end_array_value(writer)
    }

    fn begin_object<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.inner.begin_object(writer)
    }

    fn end_object<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.inner.end_object(writer)
    }

    fn begin_object_key<W: ?Sized + io::Write>(&mut self, writer: &mut W, first: bool) -> io::Result<()> {
        self.inner.begin_object_key(writer, first)
    }

    fn begin_object_value<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.inner.begin_object_value(writer)
    }

    fn end_object_value<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.inner.end_object_value(writer)
    }
}

/// Serializes `value` as pretty JSON with floats at [`JSON_DIGITS`] significant digits.
pub fn to_json_pretty<T: Serialize + ?Sized>(value: &T) -> crate::Result<String> {
    let mut buf = Vec::new();
    let formatter = SigFormatter { inner: PrettyFormatter::with_indent(b"  "), digits: JSON_DIGITS };
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, formatter);
    value.serialize(&mut ser)?;
    buf.push(b'\n');
    Ok(String::from_utf8(buf).expect("serde_json emits UTF-8"))
}
