//! Shared test support: an instrumented HTTP stub server.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

/// Counters observed by the stub server.
#[derive(Default)]
pub struct ServerStats {
    pub hits: AtomicUsize,
    pub inflight: AtomicUsize,
    pub inflight_peak: AtomicUsize,
}

impl ServerStats {
    pub fn hits(&self) -> usize {
        self.hits.load(Ordering::SeqCst)
    }

    pub fn peak(&self) -> usize {
        self.inflight_peak.load(Ordering::SeqCst)
    }
}

/// Minimal HTTP/1.1 server: replies 503 to the first `fail_first` requests,
/// then 200 with a JSON `{"text":"pong"}` body, holding each request for
/// `hold` to force overlap. Connections close after each response.
pub fn spawn_stub(fail_first: usize, hold: Duration) -> (String, Arc<ServerStats>) {
    let listener = TcpListener::bind("127.0.0.1:0").expect("bind stub server");
    let addr = listener.local_addr().unwrap();
    let stats = Arc::new(ServerStats::default());
    let shared = stats.clone();
    std::thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(stream) = stream else { break };
            let stats = shared.clone();
            std::thread::spawn(move || handle(stream, &stats, fail_first, hold));
        }
    });
    (format!("http://{addr}"), stats)
}

fn handle(mut stream: TcpStream, stats: &ServerStats, fail_first: usize, hold: Duration) {
    let mut reader = BufReader::new(stream.try_clone().expect("clone stream"));
    let mut content_length = 0usize;
    let mut line = String::new();
    loop {
        line.clear();
        if reader.read_line(&mut line).unwrap_or(0) == 0 {
            return;
        }
        let trimmed = line.trim();
        if trimmed.is_empty() {
            break;
        }
        if let Some(value) = trimmed.to_ascii_lowercase().strip_prefix("content-length:") {
            content_length = value.trim().parse().unwrap_or(0);
        }
    }
    let mut body = vec![0u8; content_length];
    reader.read_exact(&mut body).ok();

    let now = stats.inflight.fetch_add(1, Ordering::SeqCst) + 1;
    stats.inflight_peak.fetch_max(now, Ordering::SeqCst);
    std::thread::sleep(hold);
    let hit = stats.hits.fetch_add(1, Ordering::SeqCst);
    let response = if hit < fail_first {
        "HTTP/1.1 503 Service Unavailable\r\ncontent-length: 0\r\nconnection: close\r\n\r\n"
            .to_string()
    } else {
        let payload = r#"{"text":"pong"}"#;
        format!(
            "HTTP/1.1 200 OK\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{payload}",
            payload.len()
        )
    };
    stream.write_all(response.as_bytes()).ok();
    stream.flush().ok();
    stats.inflight.fetch_sub(1, Ordering::SeqCst);
}
