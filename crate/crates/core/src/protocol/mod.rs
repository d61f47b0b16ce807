//! One-round client/server protocol.
//!
//! The client sends one [`ClassifyRequest`] holding its encrypted (or
//! blinded) input; the server answers with one [`ClassifyResponse`]
//! holding the encrypted result. Both messages share a framed layout:
//!
//! ```text
//! "PDTE" | version u8 | scheme u8 | packing u8 | mu u16 | n u16 | batch u16
//!        | count u32 | (len u32 | blob)*           requests end here
//!        | report_len u32 | report (UTF-8)        responses only
//! ```
//!
//! All integers are big-endian. The high bit of the scheme byte marks a
//! blinded request; its first blob is then the randomizer session id
//! (16 bytes) followed by the first mask index (u32).

mod client;
mod randomizer;
mod server;
mod transport;

pub use client::{client_round_trip, Client, ClientConfig};
pub use randomizer::{randomizer_provision, ClientMasks, ServerMasks, SessionId};
pub use server::Server;
pub use transport::{DirTransport, MemoryTransport, Transport};

use crate::error::{Error, Result};
use crate::he::SlotVector;
use crate::pdte_bin::PackingMode;

pub const MAGIC: &[u8; 4] = b"PDTE";
pub const VERSION: u8 = 1;
const HEADER_LEN: usize = 4 + 1 + 1 + 1 + 2 + 2 + 2;
const BLINDED: u8 = 0x80;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scheme {
    Bin,
    Int,
}

impl Scheme {
    fn code(self) -> u8 {
        match self {
            Scheme::Bin => 1,
            Scheme::Int => 2,
        }
    }
}

impl std::str::FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bin" => Ok(Scheme::Bin),
            "int" => Ok(Scheme::Int),
            other => Err(Error::Input(format!("unknown scheme {other:?}"))),
        }
    }
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Scheme::Bin => "bin",
            Scheme::Int => "int",
        })
    }
}

/// How the integer scheme realizes each packing mode: packed encodings
/// (one ciphertext per encoding vector) and packed results.
pub fn int_packing(packing: PackingMode) -> Result<(bool, bool)> {
    match packing {
        PackingMode::None => Ok((false, false)),
        PackingMode::LabelPacking => Ok((false, true)),
        PackingMode::ThresholdPacking => Ok((true, true)),
        PackingMode::AttributePacking => Err(Error::Unsupported(
            "attribute packing is only available for the binary scheme".into(),
        )),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Header {
    pub version: u8,
    pub scheme: Scheme,
    pub blinded: bool,
    pub packing: PackingMode,
    pub mu: u16,
    pub n: u16,
    pub batch: u16,
}

impl Header {
    fn write(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(MAGIC);
        out.push(self.version);
        out.push(self.scheme.code() | if self.blinded { BLINDED } else { 0 });
        out.push(self.packing.code());
        out.extend_from_slice(&self.mu.to_be_bytes());
        out.extend_from_slice(&self.n.to_be_bytes());
        out.extend_from_slice(&self.batch.to_be_bytes());
    }

    fn read(r: &mut Reader<'_>) -> Result<Self> {
        if r.take(4)? != MAGIC {
            return Err(Error::Protocol("bad magic".into()));
        }
        let version = r.u8()?;
        if version != VERSION {
            return Err(Error::Protocol(format!("unsupported version {version}")));
        }
        let scheme_byte = r.u8()?;
        let scheme = match scheme_byte & !BLINDED {
            1 => Scheme::Bin,
            2 => Scheme::Int,
            other => return Err(Error::Protocol(format!("unknown scheme code {other}"))),
        };
        let packing_byte = r.u8()?;
        let packing = PackingMode::from_code(packing_byte)
            .ok_or_else(|| Error::Protocol(format!("unknown packing code {packing_byte}")))?;
        Ok(Header {
            version,
            scheme,
            blinded: scheme_byte & BLINDED != 0,
            packing,
            mu: r.u16()?,
            n: r.u16()?,
            batch: r.u16()?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassifyRequest {
    pub header: Header,
    pub blobs: Vec<Vec<u8>>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassifyResponse {
    pub header: Header,
    pub results: Vec<Vec<u8>>,
    /// Line-oriented `key=value` text.
    pub report: Option<String>,
}

struct Reader<'a> {
    bytes: &'a [u8],
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() < n {
            return Err(Error::Protocol("message truncated".into()));
        }
        let (head, tail) = self.bytes.split_at(n);
        self.bytes = tail;
        Ok(head)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_be_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_be_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn blobs(&mut self) -> Result<Vec<Vec<u8>>> {
        let count = self.u32()? as usize;
        let mut out = Vec::with_capacity(count.min(1 << 16));
        for _ in 0..count {
            let len = self.u32()? as usize;
            out.push(self.take(len)?.to_vec());
        }
        Ok(out)
    }

    fn finish(self) -> Result<()> {
        if self.bytes.is_empty() {
            Ok(())
        } else {
            Err(Error::Protocol(format!(
                "{} trailing bytes",
                self.bytes.len()
            )))
        }
    }
}

fn write_blobs(out: &mut Vec<u8>, blobs: &[Vec<u8>]) {
    out.extend_from_slice(&(blobs.len() as u32).to_be_bytes());
    for b in blobs {
        out.extend_from_slice(&(b.len() as u32).to_be_bytes());
        out.extend_from_slice(b);
    }
}

impl ClassifyRequest {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(
            HEADER_LEN + 4 + self.blobs.iter().map(|b| b.len() + 4).sum::<usize>(),
        );
        self.header.write(&mut out);
        write_blobs(&mut out, &self.blobs);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes };
        let header = Header::read(&mut r)?;
        let blobs = r.blobs()?;
        r.finish()?;
        Ok(ClassifyRequest { header, blobs })
    }
}

impl ClassifyResponse {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.header.write(&mut out);
        write_blobs(&mut out, &self.results);
        let report = self.report.as_deref().unwrap_or("");
        out.extend_from_slice(&(report.len() as u32).to_be_bytes());
        out.extend_from_slice(report.as_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes };
        let header = Header::read(&mut r)?;
        let results = r.blobs()?;
        let len = r.u32()? as usize;
        let text = std::str::from_utf8(r.take(len)?)
            .map_err(|_| Error::Protocol("report is not UTF-8".into()))?
            .to_owned();
        r.finish()?;
        Ok(ClassifyResponse {
            header,
            results,
            report: (!text.is_empty()).then_some(text),
        })
    }

    /// Looks up `key` in the report block.
    pub fn report_value(&self, key: &str) -> Option<&str> {
        self.report
            .as_deref()?
            .lines()
            .find_map(|line| line.strip_prefix(key)?.strip_prefix('='))
    }
}

fn slots_to_bytes(v: &SlotVector) -> Vec<u8> {
    v.as_slice().iter().flat_map(|w| w.to_be_bytes()).collect()
}

fn slots_from_bytes(bytes: &[u8], slots: usize) -> Result<SlotVector> {
    if bytes.len() != slots * 8 {
        return Err(Error::Protocol(format!(
            "blinded vector holds {} bytes, expected {}",
            bytes.len(),
            slots * 8
        )));
    }
    Ok(SlotVector::new(
        bytes
            .chunks_exact(8)
            .map(|c| u64::from_be_bytes(c.try_into().unwrap()))
            .collect(),
    ))
}
