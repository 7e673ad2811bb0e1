use std::collections::HashMap;
use std::io::BufReader;
use std::net::{Shutdown, SocketAddr, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::mpsc::{self, RecvTimeoutError};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use super::frame::{read_frame, write_frame, Kind, Message};
use super::value::Payload;
use super::WireError;

#[derive(Default)]
struct Pending {
    waiters: HashMap<u64, mpsc::Sender<Message>>,
    closed: bool,
}

struct Shared {
    stream: TcpStream,
    writer: Mutex<TcpStream>,
    pending: Mutex<Pending>,
}

impl Shared {
    fn close(&self) {
        let mut p = self.pending.lock().unwrap();
        p.closed = true;
        p.waiters.clear();
        let _ = self.stream.shutdown(Shutdown::Both);
    }
}

/// One TCP connection to a service endpoint.
///
/// Requests may be pipelined from several threads; a background reader
/// routes every reply to its caller by correlation id, so replies can arrive
/// in any order. Any framing error closes the connection for good.
pub struct Client {
    addr: SocketAddr,
    shared: Arc<Shared>,
    next_id: AtomicU64,
}

pub fn resolve(address: &str) -> Result<SocketAddr, WireError> {
    address
        .to_socket_addrs()
        .map_err(|e| WireError::Connection(format!("{address}: {e}")))?
        .next()
        .ok_or_else(|| WireError::Connection(format!("{address}: no address")))
}

impl Client {
    pub fn connect(address: &str, timeout: Duration) -> Result<Client, WireError> {
        let addr = resolve(address)?;
        let stream = TcpStream::connect_timeout(&addr, timeout)
            .map_err(|e| WireError::Connection(format!("{addr}: {e}")))?;
        stream.set_nodelay(true).ok();
        let writer = stream
            .try_clone()
            .map_err(|e| WireError::Connection(e.to_string()))?;
        let reader = stream
            .try_clone()
            .map_err(|e| WireError::Connection(e.to_string()))?;
        let shared = Arc::new(Shared {
            stream,
            writer: Mutex::new(writer),
            pending: Mutex::new(Pending::default()),
        });
        let bg = Arc::clone(&shared);
        thread::Builder::new()
            .name(format!("wire-reader-{addr}"))
            .spawn(move || reader_loop(reader, bg))
            .map_err(|e| WireError::Connection(e.to_string()))?;
        Ok(Client {
            addr,
            shared,
            next_id: AtomicU64::new(0),
        })
    }

    pub fn peer(&self) -> SocketAddr {
        self.addr
    }

    pub fn is_closed(&self) -> bool {
        self.shared.pending.lock().unwrap().closed
    }

    /// Sends a request and blocks until its reply or the deadline.
    pub fn call(
        &self,
        service: &str,
        payload: Payload,
        deadline: Duration,
    ) -> Result<Payload, WireError> {
        let id = self.next_id.fetch_add(1, Ordering::Relaxed);
        let (tx, rx) = mpsc::channel();
        {
            let mut p = self.shared.pending.lock().unwrap();
            if p.closed {
                return Err(WireError::Connection("connection closed".into()));
            }
            p.waiters.insert(id, tx);
        }
        let req = Message::request(id, service, payload);
        let sent = {
            let mut w = self.shared.writer.lock().unwrap();
            write_frame(&mut *w, &req)
        };
        if let Err(e) = sent {
            if matches!(e, WireError::Connection(_)) {
                self.shared.close();
            } else {
                self.shared.pending.lock().unwrap().waiters.remove(&id);
            }
            return Err(e);
        }
        match rx.recv_timeout(deadline) {
            Ok(msg) => match msg.kind {
                Kind::Response => Ok(msg.payload),
                Kind::Error => Err(WireError::remote_from(&msg.payload)),
                Kind::Request => {
                    self.shared.close();
                    Err(WireError::Connection("peer sent a request as a reply".into()))
                }
            },
            Err(RecvTimeoutError::Timeout) => {
                self.shared.pending.lock().unwrap().waiters.remove(&id);
                Err(WireError::DeadlineExceeded(deadline))
            }
            Err(RecvTimeoutError::Disconnected) => {
                Err(WireError::Connection("connection closed".into()))
            }
        }
    }

    pub fn close(&self) {
        self.shared.close();
    }
}

impl Drop for Client {
    fn drop(&mut self) {
        self.shared.close();
    }
}

fn reader_loop(stream: TcpStream, shared: Arc<Shared>) {
    let mut reader = BufReader::new(stream);
    loop {
        match read_frame(&mut reader) {
            Ok(Some(msg)) => {
                let waiter = shared.pending.lock().unwrap().waiters.remove(&msg.id);
                if let Some(tx) = waiter {
                    let _ = tx.send(msg);
                }
            }
            Ok(None) => break,
            Err(e) => {
                log::debug!("closing client connection: {e}");
                break;
            }
        }
    }
    shared.close();
}

/// One-shot call: connect, send one request, wait for its reply, disconnect.
/// The deadline bounds both the connect and the reply wait.
pub fn call(
    address: &str,
    service: &str,
    payload: Payload,
    deadline: Duration,
) -> Result<Payload, WireError> {
    let client = Client::connect(address, deadline)?;
    client.call(service, payload, deadline)
}
