//! Fixed-precision number formatting for JSON and CSV output.

use std::io;

use serde::Serialize;

/// Formats `x` with 17 significant digits, which round-trips every `f64`.
///
/// Magnitudes in `[1e-5, 1e17)` use plain decimal notation, others scientific.
pub fn sig17(x: f64) -> String {
    if !x.is_finite() {
        // not representable in JSON; callers only pass finite values
        return if x.is_nan() { "NaN".into() } else if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return if x.is_sign_negative() { "-0.0".into() } else { "0.0".into() };
    }
    let sci = format!("{x:.16e}");
    let exp: i32 = sci[sci.find('e').expect("exponent") + 1..].parse().expect("integer exponent");
    if (-5..17).contains(&exp) {
        let decimals = (16 - exp).max(0) as usize;
        let mut s = format!("{x:.decimals$}");
        if !s.contains('.') {
            s.push_str(".0");
        }
        s
    } else {
        sci
    }
}

/// serde_json formatter that writes floats through [`sig17`].
#[derive(Debug, Clone, Copy, Default)]
pub struct Sig17Formatter {
    pretty: bool,
    indent: usize,
    has_value: bool,
}

impl Sig17Formatter {
    pub fn pretty() -> Self {
        Self { pretty: true, ..Self::default() }
    }

    fn newline<W: ?Sized + io::Write>(&self, w: &mut W) -> io::Result<()> {
        if self.pretty {
            w.write_all(b"\n")?;
            for _ in 0..self.indent {
                w.write_all(b"  ")?;
            }
        }
        Ok(())
    }
}

impl serde_json::ser::Formatter for Sig17Formatter {
    fn write_f64<W: ?Sized + io::Write>(&mut self, w: &mut W, value: f64) -> io::Result<()> {
        if value.is_finite() {
            w.write_all(sig17(value).as_bytes())
        } else {
            w.write_all(b"null")
        }
    }

    fn write_f32<W: ?Sized + io::Write>(&mut self, w: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(w, value as f64)
    }

    fn begin_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.indent += 1;
        self.has_value = false;
        w.write_all(b"[")
    }

    fn end_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.indent -= 1;
        if self.has_value {
            self.newline(w)?;
        }
        w.write_all(b"]")
    }

    fn begin_array_value<W: ?Sized + io::Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        if !first {
            w.write_all(b",")?;
        }
        self.newline(w)
    }

    fn end_array_value<W: ?Sized + io::Write>(&mut self, _w: &mut W) -> io::Result<()> {
        self.has_value = true;
        Ok(())
    }

    fn begin_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.indent += 1;
        self.has_value = false;
        w.write_all(b"{")
    }

    fn end_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.indent -= 1;
        if self.has_value {
            self.newline(w)?;
        }
        w.write_all(b"}")
    }

    fn begin_object_key<W: ?Sized + io::Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        if !first {
            w.write_all(b",")?;
        }
        self.newline(w)
    }

    fn begin_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        w.write_all(if self.pretty { b": " } else { b":" })
    }

    fn end_object_value<W: ?Sized + io::Write>(&mut self, _w: &mut W) -> io::Result<()> {
        self.has_value = true;
        Ok(())
    }
}

/// Serializes to JSON with 17-significant-digit floats.
pub fn to_json_sig17<T: Serialize + ?Sized>(value: &T, pretty: bool) -> serde_json::Result<String> {
    let mut out = Vec::new();
    let fmt = if pretty { Sig17Formatter::pretty() } else { Sig17Formatter::default() };
    let mut ser = serde_json::Serializer::with_formatter(&mut out, fmt);
    value.serialize(&mut ser)?;
    Ok(String::from_utf8(out).expect("serde_json emits UTF-8"))
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    #[test]
    fn examples() {
        assert_eq!(sig17(0.75), "0.75000000000000000");
        assert_eq!(sig17(1.0), "1.0000000000000000");
        assert_eq!(sig17(1.64_f64.sqrt()), "1.2806248474865698");
        assert_eq!(sig17(0.0), "0.0");
        assert_eq!(sig17(1e-20), "9.9999999999999995e-21");
    }

    #[test]
    fn json_uses_fixed_digits() {
        let v = serde_json::json!({"s_value": 1.0, "xs": [0.5, 2.0]});
        let text = to_json_sig17(&v, false).unwrap();
        assert_eq!(text, r#"{"s_value":1.0000000000000000,"xs":[0.50000000000000000,2.0000000000000000]}"#);
        let pretty = to_json_sig17(&v, true).unwrap();
        let back: serde_json::Value = serde_json::from_str(&pretty).unwrap();
        assert_eq!(back, v);
    }

    proptest! {
        #[test]
        fn sig17_round_trips(x in proptest::num::f64::NORMAL | proptest::num::f64::SUBNORMAL) {
            let back: f64 = sig17(x).parse().unwrap();
            prop_assert_eq!(back.to_bits(), x.to_bits());
        }
    }
}
