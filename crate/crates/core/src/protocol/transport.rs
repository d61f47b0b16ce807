use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use crate::error::{Error, Result};

/// A framed, one-shot byte channel. Every `send_*` counts as one message.
pub trait Transport {
    fn send_request(&self, bytes: &[u8]) -> Result<()>;
    fn recv_request(&self) -> Result<Vec<u8>>;
    fn send_response(&self, bytes: &[u8]) -> Result<()>;
    fn recv_response(&self) -> Result<Vec<u8>>;
    /// Messages sent so far, in either direction.
    fn messages(&self) -> usize;
}

#[derive(Debug, Default)]
pub struct MemoryTransport {
    request: Mutex<Option<Vec<u8>>>,
    response: Mutex<Option<Vec<u8>>>,
    messages: AtomicUsize,
    request_bytes: AtomicUsize,
    response_bytes: AtomicUsize,
}

impl MemoryTransport {
    /// Bytes sent as requests and as responses.
    pub fn bytes_sent(&self) -> (usize, usize) {
        (
            self.request_bytes.load(Ordering::Relaxed),
            self.response_bytes.load(Ordering::Relaxed),
        )
    }
}

fn put(slot: &Mutex<Option<Vec<u8>>>, bytes: &[u8]) {
    *slot.lock().expect("transport poisoned") = Some(bytes.to_vec());
}

fn take(slot: &Mutex<Option<Vec<u8>>>, what: &str) -> Result<Vec<u8>> {
    slot.lock()
        .expect("transport poisoned")
        .take()
        .ok_or_else(|| Error::Protocol(format!("no {what} pending")))
}

impl Transport for MemoryTransport {
    fn send_request(&self, bytes: &[u8]) -> Result<()> {
        self.messages.fetch_add(1, Ordering::Relaxed);
        self.request_bytes.fetch_add(bytes.len(), Ordering::Relaxed);
        put(&self.request, bytes);
        Ok(())
    }

    fn recv_request(&self) -> Result<Vec<u8>> {
        take(&self.request, "request")
    }

    fn send_response(&self, bytes: &[u8]) -> Result<()> {
        self.messages.fetch_add(1, Ordering::Relaxed);
        self.response_bytes
            .fetch_add(bytes.len(), Ordering::Relaxed);
        put(&self.response, bytes);
        Ok(())
    }

    fn recv_response(&self) -> Result<Vec<u8>> {
        take(&self.response, "response")
    }

    fn messages(&self) -> usize {
        self.messages.load(Ordering::Relaxed)
    }
}

/// Offline transport: the request and response are files in a directory,
/// so client and server can run as separate processes.
#[derive(Debug)]
pub struct DirTransport {
    dir: PathBuf,
    messages: AtomicUsize,
}

impl DirTransport {
    pub const REQUEST_FILE: &'static str = "request.bin";
    pub const RESPONSE_FILE: &'static str = "response.bin";

    pub fn new(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir)
            .map_err(|e| Error::Protocol(format!("cannot create {}: {e}", dir.display())))?;
        Ok(DirTransport {
            dir,
            messages: AtomicUsize::new(0),
        })
    }

    fn write(&self, name: &str, bytes: &[u8]) -> Result<()> {
        let path = self.dir.join(name);
        std::fs::write(&path, bytes)
            .map_err(|e| Error::Protocol(format!("cannot write {}: {e}", path.display())))?;
        self.messages.fetch_add(1, Ordering::Relaxed);
        Ok(())
    }

    fn read(&self, name: &str) -> Result<Vec<u8>> {
        let path = self.dir.join(name);
        std::fs::read(&path)
            .map_err(|e| Error::Protocol(format!("cannot read {}: {e}", path.display())))
    }
}

impl Transport for DirTransport {
    fn send_request(&self, bytes: &[u8]) -> Result<()> {
        self.write(Self::REQUEST_FILE, bytes)
    }

    fn recv_request(&self) -> Result<Vec<u8>> {
        self.read(Self::REQUEST_FILE)
    }

    fn send_response(&self, bytes: &[u8]) -> Result<()> {
        self.write(Self::RESPONSE_FILE, bytes)
    }

    fn recv_response(&self) -> Result<Vec<u8>> {
        self.read(Self::RESPONSE_FILE)
    }

    fn messages(&self) -> usize {
        self.messages.load(Ordering::Relaxed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn memory_transport_counts_messages() {
        let t = MemoryTransport::default();
        t.send_request(b"abc").unwrap();
        assert_eq!(t.recv_request().unwrap(), b"abc");
        assert!(t.recv_request().is_err());
        t.send_response(b"de").unwrap();
        assert_eq!(t.recv_response().unwrap(), b"de");
        assert_eq!(t.messages(), 2);
        assert_eq!(t.bytes_sent(), (3, 2));
    }

    #[test]
    fn dir_transport_uses_files() {
        let dir = tempfile::tempdir().unwrap();
        let t = DirTransport::new(dir.path()).unwrap();
        t.send_request(b"req").unwrap();
        assert_eq!(
            std::fs::read(dir.path().join(DirTransport::REQUEST_FILE)).unwrap(),
            b"req"
        );
        t.send_response(b"resp").unwrap();
        assert_eq!(t.recv_response().unwrap(), b"resp");
        assert_eq!(t.messages(), 2);
    }
}
