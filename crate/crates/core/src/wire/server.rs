use std::io::BufReader;
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread;

use super::frame::{read_frame, write_frame, Kind, Message};
use super::value::Payload;
use super::WireError;

/// Error returned by a service handler; sent to the caller as an
/// error-kind message carrying `code` and `message`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ServiceError {
    pub code: String,
    pub message: String,
}

impl ServiceError {
    pub fn new(code: impl Into<String>, message: impl Into<String>) -> Self {
        ServiceError {
            code: code.into(),
            message: message.into(),
        }
    }
}

pub trait Handler: Send + Sync + 'static {
    /// Names of the services this endpoint answers.
    fn services(&self) -> &[&'static str];

    fn handle(&self, service: &str, payload: &Payload) -> Result<Payload, ServiceError>;
}

struct ServerShared {
    stop: AtomicBool,
    conns: Mutex<Vec<TcpStream>>,
}

/// A running endpoint. Dropping the handle does not stop the server; call
/// [`ServerHandle::shutdown`].
pub struct ServerHandle {
    addr: SocketAddr,
    shared: Arc<ServerShared>,
    accept: Option<thread::JoinHandle<()>>,
}

impl ServerHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    /// Stops accepting and closes every open connection.
    pub fn shutdown(&mut self) {
        if self.shared.stop.swap(true, Ordering::SeqCst) {
            return;
        }
        // Unblock accept().
        let _ = TcpStream::connect(self.addr);
        if let Some(h) = self.accept.take() {
            let _ = h.join();
        }
        for c in self.shared.conns.lock().unwrap().drain(..) {
            let _ = c.shutdown(Shutdown::Both);
        }
    }

    /// Blocks until the accept loop exits.
    pub fn wait(mut self) {
        if let Some(h) = self.accept.take() {
            let _ = h.join();
        }
    }
}

/// Serves `handler` on `listener`, one thread per connection and one per
/// in-flight request, so replies on a connection may be sent out of order.
pub fn serve(listener: TcpListener, handler: Arc<dyn Handler>) -> Result<ServerHandle, WireError> {
    let addr = listener
        .local_addr()
        .map_err(|e| WireError::Connection(e.to_string()))?;
    let shared = Arc::new(ServerShared {
        stop: AtomicBool::new(false),
        conns: Mutex::new(Vec::new()),
    });
    let bg = Arc::clone(&shared);
    let accept = thread::Builder::new()
        .name(format!("wire-accept-{addr}"))
        .spawn(move || accept_loop(listener, handler, bg))
        .map_err(|e| WireError::Connection(e.to_string()))?;
    Ok(ServerHandle {
        addr,
        shared,
        accept: Some(accept),
    })
}

fn accept_loop(listener: TcpListener, handler: Arc<dyn Handler>, shared: Arc<ServerShared>) {
    for conn in listener.incoming() {
        if shared.stop.load(Ordering::SeqCst) {
            break;
        }
        let Ok(stream) = conn else { continue };
        stream.set_nodelay(true).ok();
        if let Ok(c) = stream.try_clone() {
            let mut conns = shared.conns.lock().unwrap();
            conns.retain(|s| s.peer_addr().is_ok());
            conns.push(c);
        }
        let handler = Arc::clone(&handler);
        let _ = thread::Builder::new()
            .name("wire-conn".into())
            .spawn(move || connection_loop(stream, handler));
    }
}

fn connection_loop(stream: TcpStream, handler: Arc<dyn Handler>) {
    let Ok(writer) = stream.try_clone() else { return };
    let writer = Arc::new(Mutex::new(writer));
    let mut reader = BufReader::new(stream);
    loop {
        let req = match read_frame(&mut reader) {
            Ok(Some(m)) => m,
            Ok(None) => break,
            Err(e) => {
                // No resynchronization after a bad frame.
                log::debug!("dropping connection: {e}");
                break;
            }
        };
        let handler = Arc::clone(&handler);
        let writer = Arc::clone(&writer);
        let _ = thread::Builder::new()
            .name(format!("wire-req-{}", req.service))
            .spawn(move || {
                let reply = dispatch(&*handler, &req);
                let mut w = writer.lock().unwrap();
                if write_frame(&mut *w, &reply).is_err() {
                    let _ = w.shutdown(Shutdown::Both);
                }
            });
    }
    let _ = writer.lock().unwrap().shutdown(Shutdown::Both);
}

fn dispatch(handler: &dyn Handler, req: &Message) -> Message {
    if req.kind != Kind::Request {
        return Message::error_to(req, "BadKind", "expected a request");
    }
    if !handler.services().contains(&req.service.as_str()) {
        return Message::error_to(
            req,
            "UnknownService",
            &format!("no service named {:?}", req.service),
        );
    }
    match handler.handle(&req.service, &req.payload) {
        Ok(payload) => Message::response_to(req, payload),
        Err(e) => Message::error_to(req, &e.code, &e.message),
    }
}
