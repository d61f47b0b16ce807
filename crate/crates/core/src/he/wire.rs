//! Byte form of a ciphertext.
//!
//! ```text
//! context_id [16] | depth u32 BE | word count u32 BE | words u64 BE ...
//! ```

use super::{ContextId, CtHandle, HeError, HeResult};

pub const CT_HEADER_LEN: usize = 16 + 4 + 4;

impl CtHandle {
    pub fn to_bytes(&self) -> Vec<u8> {
        let words = self.payload();
        let mut out = Vec::with_capacity(CT_HEADER_LEN + 8 * words.len());
        out.extend_from_slice(&self.context().0);
        out.extend_from_slice(&self.depth().to_be_bytes());
        out.extend_from_slice(&(words.len() as u32).to_be_bytes());
        for w in words {
            out.extend_from_slice(&w.to_be_bytes());
        }
        out
    }

    /// Parses a serialized ciphertext. Capacity is recomputed against the
    /// receiver's level budget, so a forged depth shows up as a failing
    /// capacity check rather than being trusted.
    pub fn from_bytes(bytes: &[u8], levels: u32) -> HeResult<CtHandle> {
        if bytes.len() < CT_HEADER_LEN {
            return Err(HeError::Malformed(format!(
                "{} bytes is shorter than the header",
                bytes.len()
            )));
        }
        let mut id = [0u8; 16];
        id.copy_from_slice(&bytes[..16]);
        let depth = u32::from_be_bytes(bytes[16..20].try_into().unwrap());
        let count = u32::from_be_bytes(bytes[20..24].try_into().unwrap()) as usize;
        let body = &bytes[CT_HEADER_LEN..];
        if body.len() != count * 8 {
            return Err(HeError::Malformed(format!(
                "header announces {count} words, body holds {} bytes",
                body.len()
            )));
        }
        let words: Vec<u64> = body
            .chunks_exact(8)
            .map(|c| u64::from_be_bytes(c.try_into().unwrap()))
            .collect();
        Ok(CtHandle::from_parts(
            ContextId(id),
            depth,
            levels,
            words.into(),
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::he::{keygen, Encryptor, Evaluator, HeParams, SlotVector};

    #[test]
    fn layout_is_bit_exact() {
        let keys = keygen(&HeParams::binary(2, 4)).unwrap();
        let c = keys
            .pk
            .encrypt_packed(&SlotVector::new(vec![1, 0]))
            .unwrap();
        let c = keys.ek.mul(&c, &c).unwrap();
        let bytes = c.to_bytes();
        assert_eq!(bytes.len(), CT_HEADER_LEN + 16);
        assert_eq!(&bytes[..16], &c.context().0);
        assert_eq!(&bytes[16..20], &[0, 0, 0, 1]);
        assert_eq!(&bytes[20..24], &[0, 0, 0, 2]);
        assert_eq!(&bytes[24..32], &[0, 0, 0, 0, 0, 0, 0, 1]);
        assert_eq!(&bytes[32..40], &[0; 8]);
        assert_eq!(CtHandle::from_bytes(&bytes, 4).unwrap(), c);
    }

    #[test]
    fn truncated_input_is_malformed() {
        assert!(CtHandle::from_bytes(&[0; 10], 4).is_err());
        let keys = keygen(&HeParams::binary(2, 4)).unwrap();
        let mut bytes = keys.pk.encrypt(1).unwrap().to_bytes();
        bytes.pop();
        assert!(matches!(
            CtHandle::from_bytes(&bytes, 4),
            Err(HeError::Malformed(_))
        ));
    }
}
