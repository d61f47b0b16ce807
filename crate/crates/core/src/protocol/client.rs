use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use super::randomizer::ClientMasks;
use super::transport::Transport;
use super::{
    int_packing, slots_to_bytes, ClassifyRequest, ClassifyResponse, Header, Scheme, Server, VERSION,
};
use crate::bits::label_width;
use crate::error::{Error, Result};
use crate::he::{CtHandle, Encryptor, PublicKey, SecretKey, SlotVector};
use crate::pdte_bin::{decode_labels, PackingMode};
use crate::pdte_int::{client_decode_int, distinctify_client, encode01, result_values};
use crate::tree::{AttributeVector, TreeParams};

/// What the client must know about the model to build requests and decode
/// results.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ClientConfig {
    pub scheme: Scheme,
    pub packing: PackingMode,
    pub bits: u32,
    pub attributes: usize,
    pub labels: u64,
}

impl ClientConfig {
    pub fn for_model(params: &TreeParams, scheme: Scheme, packing: PackingMode) -> Self {
        ClientConfig {
            scheme,
            packing,
            bits: params.bits,
            attributes: params.attributes,
            labels: params.labels,
        }
    }
}

#[derive(Debug)]
pub struct Client {
    config: ClientConfig,
    pk: PublicKey,
    sk: SecretKey,
    rng: ChaCha20Rng,
}

impl Client {
    pub fn new(config: ClientConfig, pk: PublicKey, sk: SecretKey, seed: u64) -> Self {
        Client {
            config,
            pk,
            sk,
            rng: ChaCha20Rng::seed_from_u64(seed),
        }
    }

    pub fn config(&self) -> &ClientConfig {
        &self.config
    }

    fn header(&self, batch: usize, blinded: bool) -> Result<Header> {
        let c = &self.config;
        let narrow = |v: usize, what: &str| {
            u16::try_from(v)
                .map_err(|_| Error::Input(format!("{what} {v} does not fit the header")))
        };
        Ok(Header {
            version: VERSION,
            scheme: c.scheme,
            blinded,
            packing: c.packing,
            mu: narrow(c.bits as usize, "bit length")?,
            n: narrow(c.attributes, "attribute count")?,
            batch: narrow(batch, "batch size")?,
        })
    }

    /// Plaintext slot vectors in wire order: per attribute its bits (binary)
    /// or its 0-encoding then 1-encoding (integer).
    fn plain_inputs(&mut self, xs: &[AttributeVector]) -> Result<Vec<SlotVector>> {
        let c = self.config;
        let s = self.pk.params().slots;
        let Some(first) = xs.first() else {
            return Err(Error::Input("no attribute vector given".into()));
        };
        let batched = c.packing == PackingMode::AttributePacking;
        if xs.len() > 1 && !batched {
            return Err(Error::Input(
                "only attribute packing batches several vectors".into(),
            ));
        }
        if xs.len() > s {
            return Err(Error::Input(format!(
                "{} vectors exceed {s} slots",
                xs.len()
            )));
        }
        for x in xs {
            if x.len() != c.attributes {
                return Err(Error::Input(format!(
                    "attribute vector has {} entries, model expects {}",
                    x.len(),
                    c.attributes
                )));
            }
            if let Some(v) = x.values().iter().find(|&&v| v >> c.bits != 0) {
                return Err(Error::Input(format!(
                    "attribute value {v} does not fit in {} bits",
                    c.bits
                )));
            }
        }
        let mut out = Vec::new();
        match c.scheme {
            Scheme::Bin => {
                for i in 0..c.attributes {
                    for b in (0..c.bits).rev() {
                        if batched {
                            let column: Vec<u64> =
                                xs.iter().map(|x| (x.values()[i] >> b) & 1).collect();
                            out.push(SlotVector::padded(&column, s));
                        } else {
                            out.push(SlotVector::replicate((first.values()[i] >> b) & 1, s));
                        }
                    }
                }
            }
            Scheme::Int => {
                let (packed, _) = int_packing(c.packing)?;
                let width = c.bits + 1;
                for &v in first.values() {
                    let e = encode01(distinctify_client(v), width, &mut self.rng)?;
                    for vector in [&e.v0, &e.v1] {
                        if packed {
                            if vector.len() > s {
                                return Err(Error::Unsupported(format!(
                                    "packed encodings need {} slots, have {s}",
                                    vector.len()
                                )));
                            }
                            out.push(SlotVector::padded(vector, s));
                        } else {
                            out.extend(vector.iter().map(|&w| SlotVector::replicate(w, s)));
                        }
                    }
                }
            }
        }
        Ok(out)
    }

    /// Encrypts the input(s) into a request.
    pub fn request(&mut self, xs: &[AttributeVector]) -> Result<ClassifyRequest> {
        let header = self.header(xs.len(), false)?;
        let blobs = self
            .plain_inputs(xs)?
            .iter()
            .map(|v| Ok(self.pk.encrypt_packed(v)?.to_bytes()))
            .collect::<Result<Vec<_>>>()?;
        Ok(ClassifyRequest { header, blobs })
    }

    /// Blinds the input(s) with pre-shared masks instead of encrypting.
    pub fn blinded_request(
        &mut self,
        xs: &[AttributeVector],
        masks: &mut ClientMasks,
    ) -> Result<ClassifyRequest> {
        let header = self.header(xs.len(), true)?;
        let plain = self.plain_inputs(xs)?;
        let (start, blinded) = masks.blind(&plain)?;
        let mut head = masks.id().0.to_vec();
        head.extend_from_slice(&start.to_be_bytes());
        let mut blobs = vec![head];
        blobs.extend(blinded.iter().map(slots_to_bytes));
        Ok(ClassifyRequest { header, blobs })
    }

    /// Decrypts a response into one label per input vector.
    pub fn decode(&self, response: &ClassifyResponse) -> Result<Vec<u64>> {
        let h = response.header;
        if h.scheme != self.config.scheme || h.packing != self.config.packing {
            return Err(Error::Protocol(
                "response does not match the request settings".into(),
            ));
        }
        let levels = self.pk.params().levels;
        let outputs = response
            .results
            .iter()
            .map(|b| CtHandle::from_bytes(b, levels))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        match h.scheme {
            Scheme::Bin => decode_labels(
                &self.sk,
                &outputs,
                h.packing,
                label_width(self.config.labels),
                h.batch as usize,
            ),
            Scheme::Int => {
                let packed_results = int_packing(h.packing)?.1;
                let values = result_values(&self.sk, &outputs, packed_results)?;
                Ok(vec![client_decode_int(&values, self.config.labels)?])
            }
        }
    }
}

/// Encrypt, one request, one response, decrypt. Returns the labels and the
/// parsed response (which carries the server's cost report).
pub fn client_round_trip(
    client: &mut Client,
    server: &Server,
    transport: &dyn Transport,
    xs: &[AttributeVector],
) -> Result<(Vec<u64>, ClassifyResponse)> {
    let request = client.request(xs)?;
    transport.send_request(&request.to_bytes())?;
    let response = server.serve_bytes(&transport.recv_request()?)?;
    transport.send_response(&response)?;
    let response = ClassifyResponse::from_bytes(&transport.recv_response()?)?;
    Ok((client.decode(&response)?, response))
}
