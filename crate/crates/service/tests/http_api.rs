use std::io::{Read, Write};
use std::net::{SocketAddr, TcpStream};
use std::path::Path;

use panelscope_core::{BookMeta, Corpus, Genre, Panel};
use panelscope_service::{router, AppState, SessionStore};
use serde_json::{json, Value};

/// Minimal HTTP/1.1 client; one request per connection.
fn request(addr: SocketAddr, method: &str, path: &str, body: Option<&Value>) -> (u16, Vec<u8>) {
    let mut s = TcpStream::connect(addr).unwrap();
    let payload = body.map(|b| b.to_string()).unwrap_or_default();
    let mut req = format!("{method} {path} HTTP/1.1\r\nHost: test\r\nConnection: close\r\n");
    if body.is_some() {
        req += &format!("Content-Type: application/json\r\nContent-Length: {}\r\n", payload.len());
    }
    req += "\r\n";
    req += &payload;
    s.write_all(req.as_bytes()).unwrap();
    let mut raw = Vec::new();
    s.read_to_end(&mut raw).unwrap();
    let split = raw.windows(4).position(|w| w == b"\r\n\r\n").expect("header end") + 4;
    let head = String::from_utf8_lossy(&raw[..split]).to_string();
    let status = head.split_whitespace().nth(1).unwrap().parse().unwrap();
    let mut body = raw[split..].to_vec();
    if head.to_ascii_lowercase().contains("transfer-encoding: chunked") {
        body = dechunk(&body);
    }
    (status, body)
}

fn dechunk(mut b: &[u8]) -> Vec<u8> {
    let mut out = Vec::new();
    loop {
        let eol = b.windows(2).position(|w| w == b"\r\n").unwrap();
        let n = usize::from_str_radix(std::str::from_utf8(&b[..eol]).unwrap().trim(), 16).unwrap();
        if n == 0 {
            return out;
        }
        out.extend_from_slice(&b[eol + 2..eol + 2 + n]);
        b = &b[eol + 4 + n..];
    }
}

fn call(addr: SocketAddr, method: &str, path: &str, body: Option<Value>) -> (u16, Value) {
    let (status, bytes) = request(addr, method, path, body.as_ref());
    let v = if bytes.is_empty() { Value::Null } else { serde_json::from_slice(&bytes).unwrap() };
    (status, v)
}

fn corpus() -> Corpus {
    let books = vec![BookMeta {
        book_id: "bk".into(),
        title: "Book".into(),
        genre: Genre::Humor,
        page_count: 1,
    }];
    let panels = (0..4)
        .map(|i| Panel {
            book_id: "bk".into(),
            page_index: 0,
            panel_index: i,
            image_ref: Some(format!("images/bk/000_{i}.png")),
        })
        .collect();
    Corpus::new(books, panels, vec![]).unwrap()
}

fn spawn(store: SessionStore, dir: Option<&Path>) -> SocketAddr {
    let mut state = AppState::new(store);
    state.corpus = Some(corpus().into());
    state.corpus_dir = dir.map(Path::to_path_buf);
    let (tx, rx) = std::sync::mpsc::channel();
    std::thread::spawn(move || {
        let rt = tokio::runtime::Builder::new_current_thread().enable_all().build().unwrap();
        rt.block_on(async move {
            let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
            tx.send(listener.local_addr().unwrap()).unwrap();
            axum::serve(listener, router(state)).await.unwrap();
        });
    });
    rx.recv().unwrap()
}

fn create(addr: SocketAddr, pairs: &[&str]) -> String {
    let (status, v) = call(
        addr,
        "POST",
        "/sessions",
        Some(json!({"annotator_id": "ann", "pairs": pairs, "mode": "ground_truth"})),
    );
    assert_eq!(status, 201, "{v}");
    v["session_id"].as_str().unwrap().to_string()
}

#[test]
fn full_session_walkthrough() {
    let addr = spawn(SessionStore::in_memory(), None);
    let id = create(addr, &["bk:0:0", "bk:0:1", "bk:0:2"]);

    let (status, next) = call(addr, "GET", &format!("/sessions/{id}/next"), None);
    assert_eq!(status, 200);
    assert_eq!(next["status"], "task");
    assert_eq!(next["pair"], "bk:0:0");
    assert_eq!(next["position"], 1);
    assert_eq!(next["images"][0], "/images/images/bk/000_0.png");

    for (pair, label) in [("bk:0:0", "ACT"), ("bk:0:2", "NON"), ("bk:0:1", "ACT")] {
        let (status, v) = call(
            addr,
            "POST",
            &format!("/sessions/{id}/labels"),
            Some(json!({"pair": pair, "label": label})),
        );
        assert_eq!(status, 200, "{v}");
    }
    let (_, prog) = call(addr, "GET", &format!("/sessions/{id}/progress"), None);
    assert_eq!(prog["completed"], 3);
    assert_eq!(prog["status"], "complete");
    assert_eq!(prog["tally"]["ACT"], 2);
    assert_eq!(prog["tally"]["NON"], 1);
    assert_eq!(prog["tally"]["MOM"], 0);

    let (_, done) = call(addr, "GET", &format!("/sessions/{id}/next"), None);
    assert_eq!(done["status"], "complete");

    let (_, list) = call(addr, "GET", "/sessions", None);
    assert_eq!(list.as_array().unwrap().len(), 1);
}

#[test]
fn tasks_never_reveal_model_output() {
    let addr = spawn(SessionStore::in_memory(), None);
    let id = create(addr, &["bk:0:0"]);
    let (_, next) = call(addr, "GET", &format!("/sessions/{id}/next"), None);
    let text = next.to_string().to_lowercase();
    for word in ["predict", "score", "confidence", "label\""] {
        assert!(!text.contains(word), "task payload leaks {word}: {text}");
    }
}

#[test]
fn error_statuses() {
    let addr = spawn(SessionStore::in_memory(), None);
    let id = create(addr, &["bk:0:0", "bk:0:1"]);
    let labels = format!("/sessions/{id}/labels");

    let (s, _) = call(addr, "POST", &labels, Some(json!({"pair": "bk:0:0", "label": "XYZ"})));
    assert_eq!(s, 422);
    let (s, _) = call(addr, "POST", &labels, Some(json!({"pair": "bk:0:0", "label": "act"})));
    assert_eq!(s, 422);
    let (s, _) = call(addr, "POST", &labels, Some(json!({"pair": "bk:0:0", "label": "ACT"})));
    assert_eq!(s, 200);
    let (s, v) = call(addr, "POST", &labels, Some(json!({"pair": "bk:0:0", "label": "SUB"})));
    assert_eq!(s, 409);
    assert!(v["error"].as_str().unwrap().contains("already labeled"));
    let (s, _) = call(addr, "POST", &labels, Some(json!({"pair": "bk:0:2", "label": "SUB"})));
    assert_eq!(s, 409);

    let (s, _) = call(addr, "GET", "/sessions/nope/next", None);
    assert_eq!(s, 404);
    let (s, _) = call(addr, "POST", "/sessions/nope/labels", Some(json!({"pair": "bk:0:0", "label": "ACT"})));
    assert_eq!(s, 404);

    // empty and unknown pairs are rejected at creation
    let (s, _) = call(addr, "POST", "/sessions", Some(json!({"annotator_id": "a", "pairs": [], "mode": "ground_truth"})));
    assert_eq!(s, 422);
    let (s, _) = call(addr, "POST", "/sessions", Some(json!({"annotator_id": "a", "pairs": ["bk:0:3"], "mode": "ground_truth"})));
    assert_eq!(s, 422);

    // abandoning freezes the session
    let (s, v) = call(addr, "DELETE", &format!("/sessions/{id}"), None);
    assert_eq!(s, 200);
    assert_eq!(v["status"], "abandoned");
    let (s, _) = call(addr, "POST", &labels, Some(json!({"pair": "bk:0:1", "label": "ACT"})));
    assert_eq!(s, 409);
    let (_, next) = call(addr, "GET", &format!("/sessions/{id}/next"), None);
    assert_eq!(next["status"], "abandoned");
}

#[test]
fn labels_and_images() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::create_dir_all(dir.path().join("images/bk")).unwrap();
    std::fs::write(dir.path().join("images/bk/000_1.png"), b"\x89PNGfake").unwrap();
    let addr = spawn(SessionStore::in_memory(), Some(dir.path()));

    let (_, labels) = call(addr, "GET", "/labels", None);
    let codes: Vec<&str> = labels.as_array().unwrap().iter().map(|l| l["code"].as_str().unwrap()).collect();
    assert_eq!(codes, ["ACT", "ASP", "SUB", "SCE", "MOM", "NON"]);

    let (s, v) = call(addr, "GET", "/pairs/bk:0:1/images", None);
    assert_eq!(s, 200);
    assert_eq!(v["images"][0], "/images/images/bk/000_1.png");
    let (s, _) = call(addr, "GET", "/pairs/bk:0:3/images", None);
    assert_eq!(s, 404);

    let (s, bytes) = request(addr, "GET", "/images/images/bk/000_1.png", None);
    assert_eq!(s, 200);
    assert_eq!(bytes, b"\x89PNGfake");
    let (s, _) = request(addr, "GET", "/images/images/bk/000_2.png", None);
    assert_eq!(s, 404);
    let (s, _) = request(addr, "GET", "/images/..%2F..%2Fetc%2Fpasswd", None);
    assert_eq!(s, 404);
}

#[test]
fn restart_replays_log() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("sessions.jsonl");
    let addr = spawn(SessionStore::open(&log).unwrap(), None);
    let id = create(addr, &["bk:0:0", "bk:0:1"]);
    let (s, _) = call(
        addr,
        "POST",
        &format!("/sessions/{id}/labels"),
        Some(json!({"pair": "bk:0:0", "label": "SCE"})),
    );
    assert_eq!(s, 200);

    // a second server over the same log sees the same state
    let addr2 = spawn(SessionStore::open(&log).unwrap(), None);
    let (_, a) = call(addr, "GET", &format!("/sessions/{id}/progress"), None);
    let (_, b) = call(addr2, "GET", &format!("/sessions/{id}/progress"), None);
    assert_eq!(a, b);
    let (_, next) = call(addr2, "GET", &format!("/sessions/{id}/next"), None);
    assert_eq!(next["pair"], "bk:0:1");
}
