//! Line-oriented instrumentation protocol.
//!
//! Every line a target emits has the form
//!
//! ```text
//! TOKEN( key[=value])*\n
//! ```
//!
//! with exactly one space before each field, keys matching `[a-z][a-z0-9_]*`
//! and values made of printable non-space ASCII (`0x21..=0x7E`). The value is
//! everything after the first `=`. A field may also be a bare key with no `=`
//! (a flag such as `loop` in `MARK loop seq=3`); it is stored with an empty
//! value and serialized back as the bare key. Tokens:
//!
//! | token     | emitted when                                    |
//! |-----------|-------------------------------------------------|
//! | `BOOT`    | target came out of reset                        |
//! | `MARK`    | a deterministic progress marker was reached     |
//! | `REGS`    | a breakpoint register snapshot                  |
//! | `BITFLIP` | sentinel read-back found a flipped bit          |
//! | `CF_SKIP` | loop finished with fewer iterations than planned|
//! | `CF_EXIT` | loop left early                                 |
//! | `CRC_ERR` | sentinel block checksum mismatch                |
//! | `RESET`   | target reset itself                             |
//! | `HALT`    | core halted outside a breakpoint                |
//! | `OK`      | run completed                                   |
//!
//! This grammar is the compatibility contract for hardware backends.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Token {
    #[serde(rename = "BOOT")]
    Boot,
    #[serde(rename = "MARK")]
    Mark,
    #[serde(rename = "REGS")]
    Regs,
    #[serde(rename = "BITFLIP")]
    BitFlip,
    #[serde(rename = "CF_SKIP")]
    CfSkip,
    #[serde(rename = "CF_EXIT")]
    CfExit,
    #[serde(rename = "CRC_ERR")]
    CrcErr,
    #[serde(rename = "RESET")]
    Reset,
    #[serde(rename = "HALT")]
    Halt,
    #[serde(rename = "OK")]
    Ok,
}

impl Token {
    pub const ALL: [Token; 10] = [
        Token::Boot,
        Token::Mark,
        Token::Regs,
        Token::BitFlip,
        Token::CfSkip,
        Token::CfExit,
        Token::CrcErr,
        Token::Reset,
        Token::Halt,
        Token::Ok,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Token::Boot => "BOOT",
            Token::Mark => "MARK",
            Token::Regs => "REGS",
            Token::BitFlip => "BITFLIP",
            Token::CfSkip => "CF_SKIP",
            Token::CfExit => "CF_EXIT",
            Token::CrcErr => "CRC_ERR",
            Token::Reset => "RESET",
            Token::Halt => "HALT",
            Token::Ok => "OK",
        }
    }

    pub fn from_name(s: &str) -> Option<Token> {
        Token::ALL.into_iter().find(|t| t.as_str() == s)
    }
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProtocolLine {
    pub token: Token,
    pub attributes: Vec<(String, String)>,
}

impl ProtocolLine {
    pub fn bare(token: Token) -> Self {
        ProtocolLine { token, attributes: Vec::new() }
    }

    /// Appends a field. Keys and values must already satisfy the grammar.
    pub fn with(mut self, key: &str, value: impl fmt::Display) -> Self {
        let value = value.to_string();
        debug_assert!(valid_key(key.as_bytes()), "bad key {key:?}");
        debug_assert!(!value.is_empty() && value.bytes().all(valid_value_byte), "bad value {value:?}");
        self.attributes.push((key.to_owned(), value));
        self
    }

    /// Appends a bare flag field.
    pub fn flag(mut self, key: &str) -> Self {
        debug_assert!(valid_key(key.as_bytes()), "bad key {key:?}");
        self.attributes.push((key.to_owned(), String::new()));
        self
    }

    pub fn attr(&self, key: &str) -> Option<&str> {
        self.attributes.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn attr_u64(&self, key: &str) -> Option<u64> {
        self.attr(key).and_then(parse_uint)
    }

    /// Serialized form without the trailing newline.
    pub fn serialize(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for ProtocolLine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token.as_str())?;
        for (k, v) in &self.attributes {
            if v.is_empty() {
                write!(f, " {k}")?;
            } else {
                write!(f, " {k}={v}")?;
            }
        }
        Ok(())
    }
}

/// Decimal, or hexadecimal with a `0x` prefix.
pub fn parse_uint(s: &str) -> Option<u64> {
    match s.strip_prefix("0x") {
        Some(hex) => u64::from_str_radix(hex, 16).ok(),
        None => s.parse().ok(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ParseError {
    #[error("unknown token at byte {position}")]
    UnknownToken { position: usize },
    #[error("malformed attribute at byte {position}")]
    MalformedAttribute { position: usize },
    #[error("non-ASCII byte at {position}")]
    NonAscii { position: usize },
}

impl ParseError {
    pub fn position(&self) -> usize {
        match *self {
            ParseError::UnknownToken { position }
            | ParseError::MalformedAttribute { position }
            | ParseError::NonAscii { position } => position,
        }
    }
}

fn valid_key(k: &[u8]) -> bool {
    matches!(k.first(), Some(b'a'..=b'z')) && k.iter().all(|b| matches!(b, b'a'..=b'z' | b'0'..=b'9' | b'_'))
}

fn valid_value_byte(b: u8) -> bool {
    (0x21..=0x7E).contains(&b)
}

/// Parses one line. A single trailing `\n` or `\r\n` is accepted.
pub fn parse_line(raw: &str) -> Result<ProtocolLine, ParseError> {
    let raw = raw.strip_suffix('\n').map(|s| s.strip_suffix('\r').unwrap_or(s)).unwrap_or(raw);
    let bytes = raw.as_bytes();
    if let Some(position) = bytes.iter().position(|b| !b.is_ascii()) {
        return Err(ParseError::NonAscii { position });
    }

    let mut fields = raw.split(' ');
    let head = fields.next().unwrap_or("");
    let token = Token::from_name(head).ok_or(ParseError::UnknownToken { position: 0 })?;

    let mut attributes = Vec::new();
    let mut position = head.len();
    for field in fields {
        position += 1;
        let malformed = ParseError::MalformedAttribute { position };
        let (k, v) = match field.split_once('=') {
            Some((k, v)) if !v.is_empty() && v.bytes().all(valid_value_byte) => (k, v),
            Some(_) => return Err(malformed),
            None => (field, ""),
        };
        if !valid_key(k.as_bytes()) {
            return Err(malformed);
        }
        attributes.push((k.to_owned(), v.to_owned()));
        position += field.len();
    }
    Ok(ProtocolLine { token, attributes })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedLine {
    /// Index of the line in the raw capture.
    pub index: usize,
    pub line: ProtocolLine,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LineError {
    pub index: usize,
    pub error: ParseError,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SessionParse {
    pub lines: Vec<ParsedLine>,
    pub malformed: Vec<LineError>,
    pub hang: bool,
}

impl SessionParse {
    pub fn count(&self, token: Token) -> usize {
        self.lines.iter().filter(|l| l.line.token == token).count()
    }
}

pub fn parse_session<S: AsRef<str>>(lines: &[S], responded: bool) -> SessionParse {
    let mut out = SessionParse { hang: !responded, ..SessionParse::default() };
    for (index, raw) in lines.iter().enumerate() {
        match parse_line(raw.as_ref()) {
            Ok(line) => out.lines.push(ParsedLine { index, line }),
            Err(error) => out.malformed.push(LineError { index, error }),
        }
    }
    out
}

const CRC16_POLY: u16 = 0x1021;

const CRC16_TABLE: [u16; 256] = {
    let mut table = [0u16; 256];
    let mut i = 0;
    while i < 256 {
        let mut crc = (i as u16) << 8;
        let mut bit = 0;
        while bit < 8 {
            crc = if crc & 0x8000 != 0 { (crc << 1) ^ CRC16_POLY } else { crc << 1 };
            bit += 1;
        }
        table[i] = crc;
        i += 1;
    }
    table
};

/// CRC-16/CCITT-FALSE: poly 0x1021, init 0xFFFF, no reflection, no final xor.
pub fn crc16(data: &[u8]) -> u16 {
    data.iter().fold(0xFFFF, |crc, &b| (crc << 8) ^ CRC16_TABLE[((crc >> 8) as u8 ^ b) as usize])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FlipDirection {
    ZeroToOne,
    OneToZero,
}

impl FlipDirection {
    pub fn as_str(self) -> &'static str {
        match self {
            FlipDirection::ZeroToOne => "01",
            FlipDirection::OneToZero => "10",
        }
    }

    pub fn from_wire(s: &str) -> Option<Self> {
        match s {
            "01" => Some(FlipDirection::ZeroToOne),
            "10" => Some(FlipDirection::OneToZero),
            _ => None,
        }
    }

    pub fn inverse(self) -> Self {
        match self {
            FlipDirection::ZeroToOne => FlipDirection::OneToZero,
            FlipDirection::OneToZero => FlipDirection::ZeroToOne,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BitFlip {
    pub byte_offset: usize,
    pub bit_index: u8,
    pub direction: FlipDirection,
}

impl BitFlip {
    pub fn to_line(&self) -> ProtocolLine {
        ProtocolLine::bare(Token::BitFlip)
            .with("addr", format_args!("0x{:04x}", self.byte_offset))
            .with("bit", self.bit_index)
            .with("dir", self.direction.as_str())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SentinelDiff {
    pub flips: Vec<BitFlip>,
}

impl SentinelDiff {
    pub fn count(&self, direction: FlipDirection) -> usize {
        self.flips.iter().filter(|f| f.direction == direction).count()
    }
}

/// Every differing bit between `expected` and `actual`, ordered by
/// `(byte_offset, bit_index)`.
pub fn diff_sentinel(expected: &[u8], actual: &[u8]) -> Result<SentinelDiff> {
    if expected.len() != actual.len() {
        return Err(Error::domain(format!(
            "sentinel length mismatch: expected {} bytes, got {}",
            expected.len(),
            actual.len()
        )));
    }
    let mut flips = Vec::new();
    for (byte_offset, (&e, &a)) in expected.iter().zip(actual).enumerate() {
        let mut delta = e ^ a;
        while delta != 0 {
            let bit = delta.trailing_zeros() as u8;
            let direction = if e >> bit & 1 == 0 { FlipDirection::ZeroToOne } else { FlipDirection::OneToZero };
            flips.push(BitFlip { byte_offset, bit_index: bit, direction });
            delta &= delta - 1;
        }
    }
    Ok(SentinelDiff { flips })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn bare_token() {
        let l = parse_line("OK").unwrap();
        assert_eq!(l, ProtocolLine::bare(Token::Ok));
    }

    #[test]
    fn cf_skip_attributes() {
        let l = parse_line("CF_SKIP iter=7 expected=10").unwrap();
        assert_eq!(l.token, Token::CfSkip);
        assert_eq!(l.attributes, vec![("iter".into(), "7".into()), ("expected".into(), "10".into())]);
        assert_eq!(l.attr_u64("iter"), Some(7));
    }

    #[test]
    fn unknown_token_at_zero() {
        assert_eq!(parse_line("GLITCH?"), Err(ParseError::UnknownToken { position: 0 }));
        assert_eq!(parse_line(""), Err(ParseError::UnknownToken { position: 0 }));
        assert_eq!(parse_line("ok"), Err(ParseError::UnknownToken { position: 0 }));
    }

    #[test]
    fn malformed_attribute_positions() {
        assert_eq!(parse_line("MARK Loop"), Err(ParseError::MalformedAttribute { position: 5 }));
        assert_eq!(parse_line("MARK =1 seq=1"), Err(ParseError::MalformedAttribute { position: 5 }));
        assert_eq!(parse_line("MARK seq=1 Key=2"), Err(ParseError::MalformedAttribute { position: 11 }));
        assert_eq!(parse_line("MARK seq=1  x=2"), Err(ParseError::MalformedAttribute { position: 11 }));
        assert_eq!(parse_line("OK "), Err(ParseError::MalformedAttribute { position: 3 }));
        assert_eq!(parse_line("MARK seq="), Err(ParseError::MalformedAttribute { position: 5 }));
    }

    #[test]
    fn bare_flag_fields() {
        let l = parse_line("MARK loop seq=3").unwrap();
        assert_eq!(l.attr("loop"), Some(""));
        assert_eq!(l.attr_u64("seq"), Some(3));
        assert_eq!(l.serialize(), "MARK loop seq=3");
        assert_eq!(ProtocolLine::bare(Token::Mark).flag("sentinel").with("seq", 0).serialize(), "MARK sentinel seq=0");
    }

    #[test]
    fn non_ascii_position() {
        assert_eq!(parse_line("MARK seq=\u{e9}"), Err(ParseError::NonAscii { position: 9 }));
    }

    #[test]
    fn trailing_newline_accepted() {
        assert_eq!(parse_line("BOOT\n").unwrap().token, Token::Boot);
        assert_eq!(parse_line("BOOT\r\n").unwrap().token, Token::Boot);
    }

    #[test]
    fn session_cases() {
        let s = parse_session::<&str>(&[], false);
        assert!(s.hang && s.lines.is_empty() && s.malformed.is_empty());

        let s = parse_session(&["BOOT", "MARK loop=a seq=0", "OK"], true);
        assert_eq!((s.lines.len(), s.malformed.len(), s.hang), (3, 0, false));

        let s = parse_session(&["BOOT", "\u{1}#@!", "OK"], true);
        assert_eq!(s.lines.len(), 2);
        assert_eq!(s.malformed, vec![LineError { index: 1, error: ParseError::UnknownToken { position: 0 } }]);
        assert_eq!(s.lines[1].index, 2);
    }

    /// Bit-at-a-time reference, independent of the table.
    fn crc16_bitwise(data: &[u8]) -> u16 {
        let mut crc: u16 = 0xFFFF;
        for &byte in data {
            for i in (0..8).rev() {
                let bit = (byte >> i) & 1 == 1;
                let top = crc & 0x8000 != 0;
                crc <<= 1;
                if bit != top {
                    crc ^= 0x1021;
                }
            }
        }
        crc
    }

    #[test]
    fn crc_check_values() {
        assert_eq!(crc16(b""), 0xFFFF);
        // Catalogue check value for CRC-16/CCITT-FALSE.
        assert_eq!(crc16(b"123456789"), 0x29B1);
        assert_eq!(crc16_bitwise(b"123456789"), 0x29B1);
        assert_eq!(crc16(&[0x00]), crc16_bitwise(&[0x00]));
        assert_eq!(crc16(&[0x00]), 0xE1F0);
    }

    #[test]
    fn crc_matches_reference_on_random_inputs() {
        let mut rng = crate::rng::TrialRng::new(0xC0FFEE);
        for _ in 0..1000 {
            let len = rng.below(200) as usize;
            let data: Vec<u8> = (0..len).map(|_| rng.next_u64() as u8).collect();
            assert_eq!(crc16(&data), crc16_bitwise(&data));
        }
    }

    #[test]
    fn diff_examples() {
        let a = [0xA5u8; 8];
        assert!(diff_sentinel(&a, &a).unwrap().flips.is_empty());

        let e = [0, 0, 0, 0xFF];
        let a = [0, 0, 0, 0xFD];
        let d = diff_sentinel(&e, &a).unwrap();
        assert_eq!(d.flips, vec![BitFlip { byte_offset: 3, bit_index: 1, direction: FlipDirection::OneToZero }]);
        assert!(diff_sentinel(&[0, 1], &[0]).is_err());
    }

    fn naive_diff(e: &[u8], a: &[u8]) -> Vec<BitFlip> {
        let mut out = Vec::new();
        for i in 0..e.len() {
            for b in 0..8u8 {
                let eb = (e[i] >> b) & 1;
                let ab = (a[i] >> b) & 1;
                if eb != ab {
                    let direction = if eb == 0 { FlipDirection::ZeroToOne } else { FlipDirection::OneToZero };
                    out.push(BitFlip { byte_offset: i, bit_index: b, direction });
                }
            }
        }
        out
    }

    fn arb_line() -> impl Strategy<Value = ProtocolLine> {
        let token = prop::sample::select(Token::ALL.to_vec());
        let attr = ("[a-z][a-z0-9_]{0,6}", "([!-~]{1,10})?");
        (token, prop::collection::vec(attr, 0..5)).prop_map(|(token, attributes)| ProtocolLine { token, attributes })
    }

    proptest! {
        #[test]
        fn diff_matches_naive_loop(e in prop::collection::vec(any::<u8>(), 64), a in prop::collection::vec(any::<u8>(), 64)) {
            prop_assert_eq!(diff_sentinel(&e, &a).unwrap().flips, naive_diff(&e, &a));
        }

        #[test]
        fn diff_is_antisymmetric(e in prop::collection::vec(any::<u8>(), 0..48), seed in any::<u64>()) {
            let mut rng = crate::rng::TrialRng::new(seed);
            let a: Vec<u8> = e.iter().map(|&b| b ^ rng.next_u64() as u8).collect();
            let ab = diff_sentinel(&e, &a).unwrap();
            let ba = diff_sentinel(&a, &e).unwrap();
            prop_assert_eq!(ab.flips.len(), ba.flips.len());
            for (x, y) in ab.flips.iter().zip(&ba.flips) {
                prop_assert_eq!((x.byte_offset, x.bit_index), (y.byte_offset, y.bit_index));
                prop_assert_eq!(x.direction, y.direction.inverse());
            }
        }

        #[test]
        fn serialize_round_trip(line in arb_line()) {
            let text = line.serialize();
            prop_assert!(text.is_ascii());
            prop_assert_eq!(parse_line(&text).unwrap(), line.clone());
            prop_assert_eq!(parse_line(&format!("{text}\n")).unwrap(), line);
        }
    }
}
