use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use super::randomizer::{ServerMasks, SessionId};
use super::{int_packing, slots_from_bytes, ClassifyRequest, ClassifyResponse, Header, Scheme};
use crate::circuits::BitCiphertextVector;
use crate::cost::CostReport;
use crate::error::{Error, Result};
use crate::he::{CtHandle, EvaluationKey, Evaluator, Mode, PublicKey};
use crate::pdte_bin::{pdte_bin_run, BinConfig, EncryptedInputBin, PackingMode, PathAlgorithm};
use crate::pdte_int::{pdte_int_run, EncryptedEncoding, EncryptedInputInt, IntConfig};
use crate::tree::TreeModel;

/// Server side of the protocol. Holds the model, the public key and the
/// evaluation key; it has no way to decrypt.
///
/// ```compile_fail
/// use pdte_core::he::Decryptor;
/// use pdte_core::protocol::Server;
/// fn peek(server: &Server, c: &pdte_core::CtHandle) {
///     let _ = server.decrypt(c);
/// }
/// ```
#[derive(Debug)]
pub struct Server {
    pk: PublicKey,
    ek: EvaluationKey,
    model: TreeModel,
    path: PathAlgorithm,
    sessions: Mutex<HashMap<SessionId, Arc<ServerMasks>>>,
    seed: u64,
    served: AtomicU64,
}

impl Server {
    pub fn new(
        pk: PublicKey,
        ek: EvaluationKey,
        model: TreeModel,
        path: PathAlgorithm,
        seed: u64,
    ) -> Self {
        Server {
            pk,
            ek,
            model,
            path,
            sessions: Mutex::new(HashMap::new()),
            seed,
            served: AtomicU64::new(0),
        }
    }

    pub fn model(&self) -> &TreeModel {
        &self.model
    }

    pub fn add_session(&self, masks: ServerMasks) {
        self.sessions
            .lock()
            .expect("session table poisoned")
            .insert(masks.id(), Arc::new(masks));
    }

    pub fn serve_bytes(&self, request: &[u8]) -> Result<Vec<u8>> {
        Ok(self
            .serve(&ClassifyRequest::from_bytes(request)?)?
            .to_bytes())
    }

    pub fn serve(&self, request: &ClassifyRequest) -> Result<ClassifyResponse> {
        let h = request.header;
        let (expected, packed_encodings) = self.check_header(&h)?;
        let inputs = if h.blinded {
            self.unblind(h.scheme, request, expected)?
        } else {
            if request.blobs.len() != expected {
                return Err(Error::Protocol(format!(
                    "request carries {} ciphertexts, expected {expected}",
                    request.blobs.len()
                )));
            }
            let levels = self.ek.params().levels;
            request
                .blobs
                .iter()
                .map(|b| CtHandle::from_bytes(b, levels))
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::Protocol(format!("bad ciphertext: {e}")))?
        };
        if let Some(pos) = inputs.iter().position(|c| !self.ek.capacity_check(c)) {
            return Err(Error::Protocol(format!(
                "input ciphertext {pos} failed the capacity check"
            )));
        }

        let ev = self.ek.metered();
        let params = self.model.params();
        let outputs = match h.scheme {
            Scheme::Bin => {
                let input = EncryptedInputBin {
                    packing: h.packing,
                    attributes: inputs
                        .chunks(params.bits as usize)
                        .map(|c| BitCiphertextVector::new(c.to_vec()))
                        .collect(),
                    batch: h.batch as usize,
                };
                let config = BinConfig {
                    path: self.path,
                    label_bits: None,
                };
                pdte_bin_run(&ev, &self.pk, &self.model, &input, config)?.outputs
            }
            Scheme::Int => {
                let per = if packed_encodings {
                    1
                } else {
                    params.bits as usize + 1
                };
                let input = EncryptedInputInt {
                    bits: params.bits,
                    packed_encodings,
                    attributes: inputs
                        .chunks(2 * per)
                        .map(|c| EncryptedEncoding {
                            v0: c[..per].to_vec(),
                            v1: c[per..].to_vec(),
                        })
                        .collect(),
                };
                let mut rng = ChaCha20Rng::seed_from_u64(self.seed);
                rng.set_stream(self.served.fetch_add(1, Ordering::Relaxed) + 1);
                let config = IntConfig {
                    packed_results: int_packing(h.packing)?.1,
                };
                pdte_int_run(&ev, &self.pk, &self.model, &input, config, &mut rng)?.outputs
            }
        };
        let report =
            CostReport::measured(ev.metrics().snapshot(), &outputs, h.batch as usize).to_kv("");
        Ok(ClassifyResponse {
            header: h,
            results: outputs.iter().map(CtHandle::to_bytes).collect(),
            report: Some(report),
        })
    }

    /// Validates the header against the model and key; returns the number
    /// of input vectors expected and whether integer encodings are packed.
    fn check_header(&self, h: &Header) -> Result<(usize, bool)> {
        let p = self.model.params();
        let he = self.ek.params();
        let mode = match h.scheme {
            Scheme::Bin => Mode::Binary,
            Scheme::Int => Mode::Integer,
        };
        if he.mode != mode {
            return Err(Error::Protocol(format!(
                "scheme {} does not match the evaluation key",
                h.scheme
            )));
        }
        if usize::from(h.n) != p.attributes || u32::from(h.mu) != p.bits {
            return Err(Error::Protocol(format!(
                "request declares n={} mu={}, model has n={} mu={}",
                h.n, h.mu, p.attributes, p.bits
            )));
        }
        let batch = usize::from(h.batch);
        let batch_ok = match h.packing {
            PackingMode::AttributePacking => (1..=he.slots).contains(&batch),
            _ => batch == 1,
        };
        if !batch_ok {
            return Err(Error::Protocol(format!(
                "batch size {batch} not allowed here"
            )));
        }
        match h.scheme {
            Scheme::Bin => Ok((p.attributes * p.bits as usize, false)),
            Scheme::Int => {
                let (packed_encodings, _) =
                    int_packing(h.packing).map_err(|e| Error::Protocol(e.to_string()))?;
                let per = if packed_encodings {
                    1
                } else {
                    p.bits as usize + 1
                };
                Ok((p.attributes * 2 * per, packed_encodings))
            }
        }
    }

    fn unblind(
        &self,
        scheme: Scheme,
        request: &ClassifyRequest,
        expected: usize,
    ) -> Result<Vec<CtHandle>> {
        let Some((head, vectors)) = request.blobs.split_first() else {
            return Err(Error::Protocol(
                "blinded request without session blob".into(),
            ));
        };
        if head.len() != 20 {
            return Err(Error::Protocol("session blob must hold 20 bytes".into()));
        }
        if vectors.len() != expected {
            return Err(Error::Protocol(format!(
                "request carries {} blinded vectors, expected {expected}",
                vectors.len()
            )));
        }
        let id = SessionId(head[..16].try_into().unwrap());
        let start = u32::from_be_bytes(head[16..20].try_into().unwrap()) as usize;
        let session = self
            .sessions
            .lock()
            .expect("session table poisoned")
            .get(&id)
            .cloned()
            .ok_or_else(|| Error::Session("unknown randomizer session".into()))?;
        let masks = session.consume(start, expected)?;
        let s = self.ek.params().slots;
        vectors
            .iter()
            .zip(&masks)
            .map(|(bytes, r)| {
                let plain = self.ek.trivial_packed(&slots_from_bytes(bytes, s)?)?;
                Ok(match scheme {
                    Scheme::Bin => self.ek.add(&plain, r)?,
                    Scheme::Int => self.ek.sub(&plain, r)?,
                })
            })
            .collect()
    }
}
