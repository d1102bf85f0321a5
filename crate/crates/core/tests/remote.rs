//! Client side of the encoder sidecar against an in-process HTTP fake.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};

use serde_json::{json, Value};
use tsrcdf::corpus::{Label, RequirementPair};
use tsrcdf::embeddings::{
    CachedEncoder, EmbeddingError, EmbeddingProvider, EncoderFinetuner, RemoteEncoder, RemoteEncoderService,
};

type Handler = dyn Fn(&str, &str, &Value) -> (u16, Value) + Send + Sync;

/// Request log entry: method, path, JSON body.
type Seen = Arc<Mutex<Vec<(String, String, Value)>>>;

/// Serves `handler` on a loopback port until the process exits.
fn serve(handler: impl Fn(&str, &str, &Value) -> (u16, Value) + Send + Sync + 'static) -> (String, Seen) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let base = format!("http://{}", listener.local_addr().unwrap());
    let seen: Seen = Arc::default();
    let log = seen.clone();
    let handler: Arc<Handler> = Arc::new(handler);
    std::thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(mut stream) = stream else { continue };
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut line = String::new();
            reader.read_line(&mut line).unwrap();
            let mut parts = line.split_whitespace();
            let method = parts.next().unwrap_or_default().to_string();
            let path = parts.next().unwrap_or_default().to_string();
            let mut length = 0;
            loop {
                let mut h = String::new();
                reader.read_line(&mut h).unwrap();
                if h.trim().is_empty() {
                    break;
                }
                if let Some((k, v)) = h.split_once(':') {
                    if k.eq_ignore_ascii_case("content-length") {
                        length = v.trim().parse().unwrap();
                    }
                }
            }
            let mut body = vec![0; length];
            reader.read_exact(&mut body).unwrap();
            let body: Value = serde_json::from_slice(&body).unwrap_or(Value::Null);
            let (status, reply) = handler(&method, &path, &body);
            log.lock().unwrap().push((method, path, body));
            let reply = reply.to_string();
            write!(
                stream,
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{reply}",
                reply.len()
            )
            .unwrap();
        }
    });
    (base, seen)
}

/// Vector `[len, first byte]` per text.
fn fake_embed(body: &Value, dim: usize) -> (u16, Value) {
    let vectors: Vec<Value> = body["texts"]
        .as_array()
        .unwrap()
        .iter()
        .map(|t| {
            let t = t.as_str().unwrap();
            json!([t.len() as f64, t.bytes().next().unwrap_or(0) as f64])
        })
        .collect();
    (200, json!({"model": body["model"], "dim": dim, "vectors": vectors}))
}

#[test]
fn embed_round_trip_in_batches() {
    let (base, seen) = serve(|_, _, body| fake_embed(body, 2));
    let enc = CachedEncoder::uncached(Box::new(RemoteEncoder::new(&base, "a", 2)));
    let texts: Vec<String> = (0..130).map(|i| format!("{}{}", char::from(b'a' + (i % 26) as u8), "x".repeat(i))).collect();
    let refs: Vec<&str> = texts.iter().map(String::as_str).collect();
    let out = enc.resolve(&refs).unwrap();
    for (t, v) in texts.iter().zip(&out) {
        assert_eq!(v.values(), &[t.len() as f64, t.as_bytes()[0] as f64]);
        assert_eq!(v.model_id(), "a");
    }
    let seen = seen.lock().unwrap();
    let sizes: Vec<usize> = seen.iter().map(|(_, _, b)| b["texts"].as_array().unwrap().len()).collect();
    assert_eq!(sizes, vec![64, 64, 2]);
    assert!(seen.iter().all(|(m, p, b)| m == "POST" && p == "/embed" && b["model"] == "a"));
}

#[test]
fn embed_errors() {
    let (base, _) = serve(|_, _, body| fake_embed(body, 3));
    let err = RemoteEncoder::new(&base, "a", 2).embed(&["x"]).unwrap_err();
    assert!(matches!(err, EmbeddingError::DimMismatch { expected: 2, found: 3 }));

    let (base, _) = serve(|_, _, _| (500, json!({"error": "boom"})));
    let err = RemoteEncoder::new(&base, "a", 2).embed(&["x"]).unwrap_err();
    assert!(matches!(&err, EmbeddingError::ProviderUnavailable(m) if m.contains("500")), "{err}");

    let dead = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap();
    let err = RemoteEncoder::new(&format!("http://{dead}"), "a", 2).embed(&["x"]).unwrap_err();
    assert!(matches!(err, EmbeddingError::ProviderUnavailable(_)));
}

#[test]
fn discover_reads_health() {
    let (base, _) = serve(|method, path, _| {
        assert_eq!((method, path), ("GET", "/health"));
        (
            200,
            json!({"status": "ok", "models": [
                {"role": "a", "checkpoint_id": "sbert-base", "dim": 768},
                {"role": "b", "checkpoint_id": "simcse-base", "dim": 1024}
            ]}),
        )
    });
    assert_eq!(RemoteEncoder::discover(&base, "b").unwrap().dim(), 1024);
    let by_ckpt = RemoteEncoder::discover(&base, "sbert-base").unwrap();
    assert_eq!((by_ckpt.dim(), by_ckpt.model_id()), (768, "sbert-base"));
    assert!(matches!(
        RemoteEncoder::discover(&base, "c"),
        Err(EmbeddingError::ProviderUnavailable(_))
    ));
    let health = RemoteEncoderService::new(&base).health().unwrap();
    assert_eq!(health.models.len(), 2);
}

fn pairs() -> Vec<RequirementPair> {
    vec![
        RequirementPair {
            id: "1".into(),
            text1: "The system shall log.".into(),
            text2: "The system shall not log.".into(),
            label: Some(Label::Conflict),
        },
        RequirementPair {
            id: "2".into(),
            text1: "u".into(),
            text2: "v".into(),
            label: None,
        },
    ]
}

#[test]
fn finetune_status_mapping() {
    let status = Arc::new(Mutex::new(200u16));
    let s = status.clone();
    let (base, seen) = serve(move |_, _, _| {
        let code = *s.lock().unwrap();
        (code, json!({"checkpoint_id": "ft-1", "error": "nope"}))
    });
    let svc = RemoteEncoderService::new(&base);
    let params = json!({"epochs": 2});
    for code in [200, 201] {
        *status.lock().unwrap() = code;
        assert_eq!(svc.finetune("sbert-base", &pairs(), &params).unwrap(), "ft-1");
    }
    for code in [400, 409, 422, 507] {
        *status.lock().unwrap() = code;
        match svc.finetune("sbert-base", &pairs(), &params) {
            Err(EmbeddingError::FinetuneRejected { status, message }) => {
                assert_eq!(status, code);
                assert!(message.contains("nope"));
            }
            other => panic!("{code}: {other:?}"),
        }
    }
    for code in [500, 503] {
        *status.lock().unwrap() = code;
        assert!(matches!(
            svc.finetune("sbert-base", &pairs(), &params),
            Err(EmbeddingError::ProviderUnavailable(_))
        ));
    }
    let seen = seen.lock().unwrap();
    let (method, path, body) = &seen[0];
    assert_eq!((method.as_str(), path.as_str()), ("POST", "/finetune"));
    assert_eq!(body["base"], "sbert-base");
    assert_eq!(body["params"], params);
    assert_eq!(
        body["pairs"],
        json!([{"text1": "The system shall log.", "text2": "The system shall not log.", "label": "Conflict"}])
    );
}

#[test]
fn finetuned_provider_targets_checkpoint() {
    let (base, seen) = serve(|_, _, body| fake_embed(body, 2));
    let p = RemoteEncoderService::new(&base).provider("ft-7", 2).unwrap();
    assert_eq!(p.model_id(), "ft-7");
    p.embed(&["q"]).unwrap();
    assert_eq!(seen.lock().unwrap()[0].2["model"], "ft-7");
}
