//! Loopback completion server that answers with the symbolic predictor.
//!
//! Speaks just enough HTTP/1.1 for [`RemotePredictor`](crate::RemotePredictor):
//! one request per connection, `Content-Length` bodies, `Connection: close`.

use std::io::{self, BufRead, BufReader, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::Duration;

use caef_core::runtime::symbolic_predict;

use crate::parse_adapter_name;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Behavior {
    Symbolic,
    /// Every completion is the same nonsense.
    Garbage,
    /// The first `n` requests get a 500, later ones are answered.
    FailFirst(usize),
    /// Answers after a delay.
    Slow(Duration),
}

#[derive(Default)]
struct Stats {
    requests: AtomicUsize,
    in_flight: AtomicUsize,
    peak: AtomicUsize,
    bodies: Mutex<Vec<Vec<u8>>>,
    auth: Mutex<Vec<Option<String>>>,
}

pub struct MockServer {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    stats: Arc<Stats>,
    handle: Option<JoinHandle<()>>,
}

impl MockServer {
    pub fn start(behavior: Behavior) -> io::Result<Self> {
        let listener = TcpListener::bind("127.0.0.1:0")?;
        let addr = listener.local_addr()?;
        let stop = Arc::new(AtomicBool::new(false));
        let stats = Arc::new(Stats::default());
        let handle = {
            let (stop, stats) = (stop.clone(), stats.clone());
            thread::spawn(move || {
                for conn in listener.incoming() {
                    if stop.load(Ordering::SeqCst) {
                        break;
                    }
                    let Ok(conn) = conn else { continue };
                    let stats = stats.clone();
                    thread::spawn(move || {
                        if let Err(e) = serve(conn, behavior, &stats) {
                            log::debug!("mock connection: {e}");
                        }
                    });
                }
            })
        };
        Ok(Self { addr, stop, stats, handle: Some(handle) })
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn requests(&self) -> usize {
        self.stats.requests.load(Ordering::SeqCst)
    }

    /// Most requests ever handled at the same time.
    pub fn peak_in_flight(&self) -> usize {
        self.stats.peak.load(Ordering::SeqCst)
    }

    pub fn bodies(&self) -> Vec<Vec<u8>> {
        self.stats.bodies.lock().unwrap().clone()
    }

    /// `Authorization` header of each request, in arrival order.
    pub fn auth_headers(&self) -> Vec<Option<String>> {
        self.stats.auth.lock().unwrap().clone()
    }
}

impl Drop for MockServer {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        // wake the accept loop
        let _ = TcpStream::connect(self.addr);
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

fn serve(conn: TcpStream, behavior: Behavior, stats: &Stats) -> io::Result<()> {
    let mut reader = BufReader::new(conn.try_clone()?);
    let mut line = String::new();
    reader.read_line(&mut line)?;
    if line.is_empty() {
        return Ok(());
    }
    let mut length = 0;
    let mut auth = None;
    loop {
        line.clear();
        reader.read_line(&mut line)?;
        let header = line.trim_end();
        if header.is_empty() {
            break;
        }
        if let Some((name, value)) = header.split_once(':') {
            match name.to_ascii_lowercase().as_str() {
                "content-length" => length = value.trim().parse().unwrap_or(0),
                "authorization" => auth = Some(value.trim().to_string()),
                _ => {}
            }
        }
    }
    let mut body = vec![0; length];
    reader.read_exact(&mut body)?;

    let n = stats.requests.fetch_add(1, Ordering::SeqCst);
    let now = stats.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
    stats.peak.fetch_max(now, Ordering::SeqCst);
    stats.bodies.lock().unwrap().push(body.clone());
    stats.auth.lock().unwrap().push(auth);

    let (status, payload) = answer(&body, behavior, n);
    stats.in_flight.fetch_sub(1, Ordering::SeqCst);

    let mut out = conn;
    write!(
        out,
        "HTTP/1.1 {status}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n",
        payload.len()
    )?;
    out.write_all(payload.as_bytes())?;
    out.flush()
}

fn answer(body: &[u8], behavior: Behavior, index: usize) -> (&'static str, String) {
    match behavior {
        Behavior::FailFirst(k) if index < k => return ("500 Internal Server Error", "{}".into()),
        Behavior::Slow(d) => thread::sleep(d),
        _ => {}
    }
    let Ok(req) = serde_json::from_slice::<serde_json::Value>(body) else {
        return ("400 Bad Request", "{}".into());
    };
    let model = req["model"].as_str().unwrap_or_default();
    let prompt = req["prompt"].as_str().unwrap_or_default();
    let Some((op, role)) = parse_adapter_name(model) else {
        return ("404 Not Found", "{}".into());
    };
    let text = match behavior {
        Behavior::Garbage => "the answer is probably 42".to_string(),
        _ => match symbolic_predict(op, role, prompt.strip_suffix('\n').unwrap_or(prompt)) {
            Ok(t) => t + "\n",
            Err(e) => format!("cannot step: {e}\n"),
        },
    };
    ("200 OK", serde_json::json!({ "choices": [{ "text": text }] }).to_string())
}
