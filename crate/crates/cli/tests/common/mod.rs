#![allow(dead_code)]

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpStream;
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Output, Stdio};

use serde_json::Value;

pub const BIN: &str = env!("CARGO_BIN_EXE_trake");

pub fn trake(args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .env_remove("TRAKE_INDEX_DIR")
        .env_remove("TRAKE_REWRITER_URL")
        .env_remove("TRAKE_REWRITER_KEY")
        .output()
        .expect("run trake")
}

pub fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

pub fn code(o: &Output) -> i32 {
    o.status.code().unwrap_or(-1)
}

/// Writes the synthetic corpus of `kind` and ingests it; returns
/// (inputs dir, index dir, synth summary).
pub fn synth_and_ingest(root: &Path, kind: &str, seed: u64) -> (PathBuf, PathBuf, Value) {
    let inputs = root.join(format!("{kind}-in"));
    let index = root.join(format!("{kind}-idx"));
    let o = trake(&["synth", "--out", s(&inputs), "--kind", kind, "--seed", &seed.to_string()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let info: Value = serde_json::from_str(stdout(&o).trim()).unwrap();
    let o = trake(&[
        "ingest",
        "--scenes",
        s(&inputs.join("scenes.jsonl")),
        "--embeddings",
        s(&inputs.join("embeddings.trke")),
        "--ocr",
        s(&inputs.join("ocr.jsonl")),
        "--out",
        s(&index),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    (inputs, index, info)
}

pub fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// A `trake serve` child on an ephemeral port, killed on drop.
pub struct Server {
    child: Child,
    pub addr: String,
}

impl Server {
    pub fn start(args: &[&str]) -> Server {
        let mut child = Command::new(BIN)
            .arg("serve")
            .args(args)
            .args(["--addr", "127.0.0.1:0"])
            .env_remove("TRAKE_REWRITER_URL")
            .stderr(Stdio::piped())
            .spawn()
            .expect("spawn trake serve");
        let mut line = String::new();
        BufReader::new(child.stderr.take().unwrap()).read_line(&mut line).unwrap();
        let addr = line
            .trim()
            .strip_prefix("listening on http://")
            .unwrap_or_else(|| panic!("unexpected serve output: {line}"))
            .to_owned();
        Server { child, addr }
    }

    pub fn get(&self, path: &str) -> (u16, String) {
        http(&self.addr, "GET", path, None)
    }

    pub fn post(&self, path: &str, body: &Value) -> (u16, String) {
        http(&self.addr, "POST", path, Some(&body.to_string()))
    }

    pub fn post_json(&self, path: &str, body: &Value) -> (u16, Value) {
        let (status, text) = self.post(path, body);
        (status, serde_json::from_str(&text).unwrap_or(Value::Null))
    }
}

impl Drop for Server {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// One HTTP/1.1 exchange with `Connection: close`; returns status and body.
pub fn http(addr: &str, method: &str, path: &str, body: Option<&str>) -> (u16, String) {
    let mut stream = TcpStream::connect(addr).expect("connect");
    let body = body.unwrap_or("");
    write!(
        stream,
        "{method} {path} HTTP/1.1\r\nHost: {addr}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
        body.len()
    )
    .unwrap();
    let mut raw = Vec::new();
    stream.read_to_end(&mut raw).unwrap();
    let text = String::from_utf8(raw).unwrap();
    let (head, rest) = text.split_once("\r\n\r\n").expect("http response");
    let status = head.split(' ').nth(1).unwrap().parse().unwrap();
    let chunked = head
        .lines()
        .any(|l| l.to_ascii_lowercase().starts_with("transfer-encoding:") && l.to_ascii_lowercase().contains("chunked"));
    let body = if chunked { dechunk(rest) } else { rest.to_owned() };
    (status, body)
}

fn dechunk(mut rest: &str) -> String {
    let mut out = String::new();
    loop {
        let (size, tail) = rest.split_once("\r\n").unwrap();
        let n = usize::from_str_radix(size.trim(), 16).unwrap();
        if n == 0 {
            return out;
        }
        out.push_str(&tail[..n]);
        rest = &tail[n + 2..];
    }
}

/// Drops `took_ms` from a response body.
pub fn without_timing(body: &str) -> Value {
    let mut v: Value = serde_json::from_str(body).unwrap();
    v.as_object_mut().unwrap().remove("took_ms");
    v
}

/// Removes the `"took_ms":N` member from a compact JSON body, leaving every
/// other byte in place.
pub fn strip_timing(body: &str) -> String {
    let key = "\"took_ms\":";
    let start = body.find(key).expect("took_ms present");
    let digits = body[start + key.len()..]
        .find(|c: char| !c.is_ascii_digit())
        .unwrap();
    let mut end = start + key.len() + digits;
    let mut start = start;
    if body[end..].starts_with(',') {
        end += 1;
    } else if body[..start].ends_with(',') {
        start -= 1;
    }
    format!("{}{}", &body[..start], &body[end..])
}
