//! Offline randomizer: masks shared ahead of time so the online upload is a
//! blinded plaintext instead of a ciphertext.
//!
//! Binary contexts use bitwise masks (`x ⊕ r`), integer contexts additive
//! masks mod `p` (`v + r`). The server unblinds homomorphically with its
//! encrypted copy `⟦r⟧`.

use std::sync::Mutex;

use rand::Rng;

use crate::error::{Error, Result};
use crate::he::{CtHandle, Encryptor, Mode, SlotVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SessionId(pub [u8; 16]);

/// Client half: plaintext masks, handed out in order.
#[derive(Debug, Clone)]
pub struct ClientMasks {
    id: SessionId,
    mode: Mode,
    modulus: u64,
    masks: Vec<SlotVector>,
    next: usize,
}

/// Server half: encrypted masks, each usable once.
#[derive(Debug)]
pub struct ServerMasks {
    id: SessionId,
    masks: Vec<CtHandle>,
    used: Mutex<Vec<bool>>,
}

pub fn randomizer_provision<R: Rng + ?Sized>(
    enc: &dyn Encryptor,
    count: usize,
    rng: &mut R,
) -> Result<(ClientMasks, ServerMasks)> {
    let params = enc.params();
    let mut id = [0u8; 16];
    rng.fill_bytes(&mut id);
    let masks: Vec<SlotVector> = (0..count)
        .map(|_| {
            SlotVector::new(
                (0..params.slots)
                    .map(|_| rng.gen_range(0..params.modulus))
                    .collect(),
            )
        })
        .collect();
    let encrypted = masks
        .iter()
        .map(|m| enc.encrypt_packed(m))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    Ok((
        ClientMasks {
            id: SessionId(id),
            mode: params.mode,
            modulus: params.modulus,
            masks,
            next: 0,
        },
        ServerMasks {
            id: SessionId(id),
            used: Mutex::new(vec![false; count]),
            masks: encrypted,
        },
    ))
}

impl ClientMasks {
    pub fn id(&self) -> SessionId {
        self.id
    }

    pub fn remaining(&self) -> usize {
        self.masks.len() - self.next
    }

    /// Blinds `values` with the next unused masks. Returns the index of the
    /// first mask used.
    pub fn blind(&mut self, values: &[SlotVector]) -> Result<(u32, Vec<SlotVector>)> {
        if values.len() > self.remaining() {
            return Err(Error::Session(format!(
                "{} masks needed, {} left",
                values.len(),
                self.remaining()
            )));
        }
        let start = self.next;
        let p = self.modulus;
        let blinded = values
            .iter()
            .zip(&self.masks[start..])
            .map(|(v, r)| {
                if v.len() != r.len() {
                    return Err(Error::Input(
                        "slot vector does not match the mask width".into(),
                    ));
                }
                Ok(SlotVector::new(
                    v.as_slice()
                        .iter()
                        .zip(r.as_slice())
                        .map(|(&x, &m)| match self.mode {
                            Mode::Binary => (x ^ m) & 1,
                            Mode::Integer => ((x as u128 + m as u128) % p as u128) as u64,
                        })
                        .collect(),
                ))
            })
            .collect::<Result<Vec<_>>>()?;
        self.next += values.len();
        Ok((start as u32, blinded))
    }
}

impl ServerMasks {
    pub fn id(&self) -> SessionId {
        self.id
    }

    pub fn len(&self) -> usize {
        self.masks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masks.is_empty()
    }

    /// Bytes shipped in the offline phase.
    pub fn offline_bytes(&self) -> usize {
        self.masks.iter().map(|c| c.to_bytes().len()).sum()
    }

    /// Marks masks `start..start + count` as used and returns them. Fails
    /// without consuming anything if any of them was used before.
    pub fn consume(&self, start: usize, count: usize) -> Result<Vec<CtHandle>> {
        let end = start
            .checked_add(count)
            .filter(|&e| e <= self.masks.len())
            .ok_or_else(|| {
                Error::Session(format!("masks {start}..{start}+{count} out of range"))
            })?;
        let mut used = self.used.lock().expect("mask ledger poisoned");
        if let Some(i) = (start..end).find(|&i| used[i]) {
            return Err(Error::Session(format!("mask {i} was already used")));
        }
        used[start..end].fill(true);
        Ok(self.masks[start..end].to_vec())
    }
}
