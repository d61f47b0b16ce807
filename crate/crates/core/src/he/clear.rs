//! Reference backend: plaintext slots plus exact depth bookkeeping.
//!
//! Nothing here is secret. The backend exists so that every engine can be
//! run, instrumented and compared slot by slot with a plaintext oracle. A
//! lattice backend would implement the same three traits.

use std::sync::Arc;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use super::{
    ContextId, CtHandle, Decryptor, Encryptor, Evaluator, HeError, HeParams, HeResult, Metrics,
    SlotVector,
};

/// Shared parameters of one key generation.
#[derive(Debug)]
pub struct ClearContext {
    id: ContextId,
    params: HeParams,
}

impl ClearContext {
    pub fn id(&self) -> ContextId {
        self.id
    }

    pub fn params(&self) -> &HeParams {
        &self.params
    }

    fn fresh(&self, depth: u32, payload: Vec<u64>) -> CtHandle {
        CtHandle::from_parts(self.id, depth, self.params.levels, payload.into())
    }

    fn check_value(&self, value: u64) -> HeResult<()> {
        if value >= self.params.modulus {
            return Err(HeError::ValueOutOfRange {
                value,
                modulus: self.params.modulus,
            });
        }
        Ok(())
    }

    fn check_slots(&self, slots: &SlotVector) -> HeResult<()> {
        if slots.len() != self.params.slots {
            return Err(HeError::SlotCount {
                got: slots.len(),
                expected: self.params.slots,
            });
        }
        slots
            .as_slice()
            .iter()
            .try_for_each(|&v| self.check_value(v))
    }

    fn check_operand(&self, c: &CtHandle) -> HeResult<()> {
        if c.context() != self.id {
            return Err(HeError::ContextMismatch);
        }
        if c.payload().len() != self.params.slots {
            return Err(HeError::Malformed(format!(
                "payload has {} words, expected {}",
                c.payload().len(),
                self.params.slots
            )));
        }
        if c.capacity() < 0 {
            return Err(HeError::CapacityExhausted {
                depth: c.depth(),
                levels: self.params.levels,
            });
        }
        Ok(())
    }

    fn well_formed(&self, c: &CtHandle) -> bool {
        c.context() == self.id
            && c.payload().len() == self.params.slots
            && c.depth() <= self.params.levels
            && c.capacity() == i64::from(self.params.levels) - i64::from(c.depth())
            && c.payload().iter().all(|&v| v < self.params.modulus)
    }
}

/// The `(pk, sk, ek)` triple. `pk` and `ek` may be handed to the server.
#[derive(Debug, Clone)]
pub struct KeyTriple {
    pub pk: PublicKey,
    pub sk: SecretKey,
    pub ek: EvaluationKey,
}

/// Generates a key triple bound to a fresh context.
///
/// The context id is drawn from the seeded context RNG, so the same
/// parameters and seed reproduce the same keys.
pub fn keygen(params: &HeParams) -> HeResult<KeyTriple> {
    params.validate()?;
    let mut id = [0u8; 16];
    params.rng(0).fill_bytes(&mut id);
    let ctx = Arc::new(ClearContext {
        id: ContextId(id),
        params: params.clone(),
    });
    Ok(KeyTriple {
        pk: PublicKey { ctx: ctx.clone() },
        sk: SecretKey { ctx: ctx.clone() },
        ek: EvaluationKey {
            ctx,
            metrics: Arc::new(Metrics::default()),
        },
    })
}

/// On-disk form of one key: its role, context id and parameters.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct KeyFile {
    role: String,
    context: String,
    params: HeParams,
}

fn key_to_text(role: &str, ctx: &ClearContext) -> String {
    let file = KeyFile {
        role: role.into(),
        context: ctx.id.to_hex(),
        params: ctx.params.clone(),
    };
    serde_json::to_string_pretty(&file).expect("key file serializes") + "\n"
}

fn key_from_text(role: &str, text: &str) -> HeResult<Arc<ClearContext>> {
    let file: KeyFile =
        serde_json::from_str(text).map_err(|e| HeError::Malformed(format!("key file: {e}")))?;
    if file.role != role {
        return Err(HeError::Malformed(format!(
            "expected a {role} key, found {}",
            file.role
        )));
    }
    file.params.validate()?;
    let id = ContextId::from_hex(&file.context)
        .ok_or_else(|| HeError::Malformed("key file: bad context id".into()))?;
    Ok(Arc::new(ClearContext {
        id,
        params: file.params,
    }))
}

macro_rules! key_text {
    ($ty:ident, $role:literal, |$ctx:ident| $build:expr) => {
        impl $ty {
            pub fn to_text(&self) -> String {
                key_to_text($role, &self.ctx)
            }

            pub fn from_text(text: &str) -> HeResult<Self> {
                let $ctx = key_from_text($role, text)?;
                Ok($build)
            }
        }
    };
}

key_text!(PublicKey, "public", |ctx| PublicKey { ctx });
key_text!(SecretKey, "secret", |ctx| SecretKey { ctx });
key_text!(EvaluationKey, "evaluation", |ctx| EvaluationKey {
    ctx,
    metrics: Arc::new(Metrics::default()),
});

#[derive(Debug, Clone)]
pub struct PublicKey {
    ctx: Arc<ClearContext>,
}

impl PublicKey {
    pub fn context(&self) -> &ClearContext {
        &self.ctx
    }
}

impl Encryptor for PublicKey {
    fn params(&self) -> &HeParams {
        &self.ctx.params
    }

    fn encrypt(&self, value: u64) -> HeResult<CtHandle> {
        self.ctx.check_value(value)?;
        Ok(self.ctx.fresh(0, vec![value; self.ctx.params.slots]))
    }

    fn encrypt_packed(&self, slots: &SlotVector) -> HeResult<CtHandle> {
        self.ctx.check_slots(slots)?;
        Ok(self.ctx.fresh(0, slots.as_slice().to_vec()))
    }
}

#[derive(Debug, Clone)]
pub struct SecretKey {
    ctx: Arc<ClearContext>,
}

impl SecretKey {
    pub fn context(&self) -> &ClearContext {
        &self.ctx
    }
}

impl Decryptor for SecretKey {
    fn decrypt(&self, c: &CtHandle) -> HeResult<SlotVector> {
        self.ctx.check_operand(c)?;
        Ok(SlotVector::new(c.payload().to_vec()))
    }
}

/// Evaluation key: the server's handle on the ciphertext algebra.
#[derive(Debug, Clone)]
pub struct EvaluationKey {
    ctx: Arc<ClearContext>,
    metrics: Arc<Metrics>,
}

impl EvaluationKey {
    /// A copy of this key with its own, zeroed operation counters.
    pub fn metered(&self) -> EvaluationKey {
        EvaluationKey {
            ctx: self.ctx.clone(),
            metrics: Arc::new(Metrics::default()),
        }
    }

    pub fn context(&self) -> &ClearContext {
        &self.ctx
    }

    fn binary_op(
        &self,
        a: &CtHandle,
        b: &CtHandle,
        depth: u32,
        op: impl Fn(u64, u64) -> u64,
    ) -> HeResult<CtHandle> {
        self.ctx.check_operand(a)?;
        self.ctx.check_operand(b)?;
        if depth > self.ctx.params.levels {
            return Err(HeError::CapacityExhausted {
                depth,
                levels: self.ctx.params.levels,
            });
        }
        let payload = a
            .payload()
            .iter()
            .zip(b.payload())
            .map(|(&x, &y)| op(x, y))
            .collect();
        Ok(self.ctx.fresh(depth, payload))
    }
}

impl Evaluator for EvaluationKey {
    fn params(&self) -> &HeParams {
        &self.ctx.params
    }

    fn context_id(&self) -> ContextId {
        self.ctx.id
    }

    fn metrics(&self) -> &Metrics {
        &self.metrics
    }

    fn add(&self, a: &CtHandle, b: &CtHandle) -> HeResult<CtHandle> {
        let p = self.ctx.params.modulus;
        let out = self.binary_op(a, b, a.depth().max(b.depth()), |x, y| (x + y) % p)?;
        self.metrics.record_add();
        Ok(out)
    }

    fn sub(&self, a: &CtHandle, b: &CtHandle) -> HeResult<CtHandle> {
        let p = self.ctx.params.modulus;
        let out = self.binary_op(a, b, a.depth().max(b.depth()), |x, y| (x + p - y) % p)?;
        self.metrics.record_add();
        Ok(out)
    }

    fn mul(&self, a: &CtHandle, b: &CtHandle) -> HeResult<CtHandle> {
        let p = u128::from(self.ctx.params.modulus);
        let depth = a.depth().max(b.depth()) + 1;
        let out = self.binary_op(a, b, depth, |x, y| {
            ((u128::from(x) * u128::from(y)) % p) as u64
        })?;
        self.metrics.record_mul();
        Ok(out)
    }

    fn mul_scalar(&self, c: &CtHandle, scalar: u64) -> HeResult<CtHandle> {
        self.ctx.check_operand(c)?;
        self.ctx.check_value(scalar)?;
        let p = u128::from(self.ctx.params.modulus);
        let payload = c
            .payload()
            .iter()
            .map(|&x| ((u128::from(x) * u128::from(scalar)) % p) as u64)
            .collect();
        self.metrics.record_add();
        Ok(self.ctx.fresh(c.depth(), payload))
    }

    fn shift_left(&self, c: &CtHandle, offset: usize) -> HeResult<CtHandle> {
        self.ctx.check_operand(c)?;
        let s = self.ctx.params.slots;
        if offset > s {
            return Err(HeError::ShiftOutOfRange { offset, slots: s });
        }
        let mut payload = vec![0; s];
        payload[..s - offset].copy_from_slice(&c.payload()[offset..]);
        self.metrics.record_shift();
        Ok(self.ctx.fresh(c.depth(), payload))
    }

    fn shift_right(&self, c: &CtHandle, offset: usize) -> HeResult<CtHandle> {
        self.ctx.check_operand(c)?;
        let s = self.ctx.params.slots;
        if offset > s {
            return Err(HeError::ShiftOutOfRange { offset, slots: s });
        }
        let mut payload = vec![0; s];
        payload[offset..].copy_from_slice(&c.payload()[..s - offset]);
        self.metrics.record_shift();
        Ok(self.ctx.fresh(c.depth(), payload))
    }

    fn trivial(&self, value: u64) -> HeResult<CtHandle> {
        self.ctx.check_value(value)?;
        Ok(self.ctx.fresh(0, vec![value; self.ctx.params.slots]))
    }

    fn trivial_packed(&self, slots: &SlotVector) -> HeResult<CtHandle> {
        self.ctx.check_slots(slots)?;
        Ok(self.ctx.fresh(0, slots.as_slice().to_vec()))
    }

    fn capacity_check(&self, c: &CtHandle) -> bool {
        self.ctx.well_formed(c)
    }
}
