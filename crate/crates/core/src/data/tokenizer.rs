//! Byte-level vocabulary: four specials followed by the 256 byte values.

pub const PAD: usize = 0;
pub const BOS: usize = 1;
pub const EOS: usize = 2;
/// Placeholder where image tokens are spliced into the sequence.
pub const IMG: usize = 3;
pub const BYTE_OFFSET: usize = 4;
pub const VOCAB_SIZE: usize = 256 + BYTE_OFFSET;

pub fn encode_text(s: &[u8]) -> Vec<usize> {
    s.iter().map(|&b| b as usize + BYTE_OFFSET).collect()
}

/// Inverse of [`encode_text`]; special and out-of-range ids are skipped.
pub fn decode(ids: &[usize]) -> Vec<u8> {
    ids.iter()
        .filter(|&&id| (BYTE_OFFSET..VOCAB_SIZE).contains(&id))
        .map(|&id| (id - BYTE_OFFSET) as u8)
        .collect()
}

pub fn decode_string(ids: &[usize]) -> String {
    String::from_utf8_lossy(&decode(ids)).into_owned()
}
