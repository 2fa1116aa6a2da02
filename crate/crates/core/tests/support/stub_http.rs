//! Minimal scripted HTTP/1.1 server for exercising clients offline.
#![allow(dead_code)]

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

#[derive(Clone)]
pub struct Reply {
    pub status: u16,
    pub body: String,
    pub delay: Duration,
}

impl Reply {
    pub fn new(status: u16, body: impl Into<String>) -> Self {
        Reply { status, body: body.into(), delay: Duration::ZERO }
    }

    pub fn completion(text: &str) -> Self {
        let body = serde_json::json!({"choices": [{"message": {"role": "assistant", "content": text}}]});
        Reply::new(200, body.to_string())
    }
}

pub struct StubServer {
    pub url: String,
    pub requests: Arc<Mutex<Vec<(String, String)>>>,
}

/// Serves `script` in order, one reply per connection; the last reply repeats.
pub fn serve(script: Vec<Reply>) -> StubServer {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1/chat/completions", listener.local_addr().unwrap());
    let requests = Arc::new(Mutex::new(Vec::new()));
    let log = requests.clone();
    thread::spawn(move || {
        let mut n = 0;
        for stream in listener.incoming() {
            let Ok(mut stream) = stream else { break };
            let reply = script[n.min(script.len() - 1)].clone();
            n += 1;
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut headers = String::new();
            let mut len = 0;
            loop {
                let mut line = String::new();
                if reader.read_line(&mut line).unwrap_or(0) == 0 || line == "\r\n" {
                    break;
                }
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap_or(0);
                }
                headers.push_str(&line);
            }
            let mut body = vec![0; len];
            let _ = reader.read_exact(&mut body);
            log.lock().unwrap().push((headers, String::from_utf8_lossy(&body).into_owned()));
            thread::sleep(reply.delay);
            let resp = format!(
                "HTTP/1.1 {} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{}",
                reply.status,
                reply.body.len(),
                reply.body
            );
            let _ = stream.write_all(resp.as_bytes());
        }
    });
    StubServer { url, requests }
}
