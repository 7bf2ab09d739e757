//! Decoding of PowerShell `-EncodedCommand` payloads (Base-64 over UTF-16LE).

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DecodeError {
    #[error("invalid base-64: {0}")]
    Base64(String),
    #[error("decoded byte length {0} is odd, not UTF-16")]
    OddLength(usize),
    #[error("invalid UTF-16 sequence at code unit {0}")]
    Utf16(usize),
}

/// Decodes an encoded command. ASCII whitespace (line breaks from wrapped
/// payloads, a trailing newline) is ignored.
pub fn decode_encoded_command(encoded: &str) -> Result<String, DecodeError> {
    let compact: String = encoded
        .chars()
        .filter(|c| !c.is_ascii_whitespace())
        .collect();
    let bytes = STANDARD
        .decode(compact.as_bytes())
        .map_err(|e| DecodeError::Base64(e.to_string()))?;
    if bytes.len() % 2 != 0 {
        return Err(DecodeError::OddLength(bytes.len()));
    }
    let units: Vec<u16> = bytes
        .chunks_exact(2)
        .map(|pair| u16::from_le_bytes([pair[0], pair[1]]))
        .collect();
    let mut out = String::with_capacity(units.len());
    for (pos, decoded) in char::decode_utf16(units.iter().copied()).enumerate() {
        match decoded {
            Ok(c) => out.push(c),
            Err(_) => return Err(DecodeError::Utf16(pos)),
        }
    }
    Ok(out)
}

/// Inverse of [`decode_encoded_command`].
pub fn encode_command(text: &str) -> String {
    let bytes: Vec<u8> = text.encode_utf16().flat_map(u16::to_le_bytes).collect();
    STANDARD.encode(bytes)
}
