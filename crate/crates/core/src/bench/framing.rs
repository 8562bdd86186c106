//! Bytes to protocol bits and back, most significant bit first.

use alloc::vec::Vec;

use crate::protocol::ProtocolBit;

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum FramingError {
    #[error("{0} bits do not form whole bytes")]
    NotByteAligned(usize),
}

pub fn encode_message(text: &[u8]) -> Vec<ProtocolBit> {
    text.iter()
        .flat_map(|&byte| (0..8).rev().map(move |k| ProtocolBit::from_bool(byte >> k & 1 == 1)))
        .collect()
}

pub fn decode_message(bits: &[ProtocolBit]) -> Result<Vec<u8>, FramingError> {
    if bits.len() % 8 != 0 {
        return Err(FramingError::NotByteAligned(bits.len()));
    }
    Ok(bits
        .chunks(8)
        .map(|c| c.iter().fold(0u8, |acc, b| acc << 1 | b.as_u8()))
        .collect())
}
