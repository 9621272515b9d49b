//! HTTP chat client against a local tiny_http server.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use base64::Engine;
use cogweb::imaging;
use cogweb::model::{ChatMessage, ChatParams, HttpChatClient, ModelClient, ModelConfig, ModelError, RetryPolicy};
use image::Rgba;
use serde_json::{json, Value};

/// Recorded request body and authorization header.
type Request = (Value, Option<String>);

struct Server {
    url: String,
    hits: Arc<AtomicUsize>,
    bodies: Arc<Mutex<Vec<Request>>>,
}

/// `respond(hit_index, body)` returns (status, body).
fn serve(respond: impl Fn(usize, &Value) -> (u16, String) + Send + 'static) -> Server {
    let server = tiny_http::Server::http("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1/chat/completions", server.server_addr().to_ip().unwrap());
    let hits = Arc::new(AtomicUsize::new(0));
    let bodies = Arc::new(Mutex::new(Vec::new()));
    let (h, b) = (hits.clone(), bodies.clone());
    thread::spawn(move || {
        for mut req in server.incoming_requests() {
            let mut raw = String::new();
            req.as_reader().read_to_string(&mut raw).unwrap();
            let body: Value = serde_json::from_str(&raw).unwrap_or(Value::Null);
            let auth = req.headers().iter().find(|h| h.field.equiv("Authorization")).map(|h| h.value.to_string());
            let n = h.fetch_add(1, Ordering::SeqCst);
            b.lock().unwrap().push((body.clone(), auth));
            let (status, text) = respond(n, &body);
            let _ = req.respond(tiny_http::Response::from_string(text).with_status_code(status));
        }
    });
    Server { url, hits, bodies }
}

fn client(url: &str, key: Option<&str>) -> ModelClient {
    let retry = RetryPolicy { attempts: 3, base_backoff: Duration::from_millis(10), timeout: Duration::from_secs(5) };
    ModelClient::new(
        Arc::new(HttpChatClient::with_retry(key.map(String::from), 2, retry)),
        ModelConfig { endpoint: url.into(), model_name: "mock-vlm".into(), params: ChatParams::default() },
    )
}

fn completion(text: &str) -> String {
    json!({"choices": [{"message": {"role": "assistant", "content": text}}]}).to_string()
}

#[test]
fn echo_round_trip() {
    let s = serve(|_, body| {
        let last = body["messages"].as_array().unwrap().last().unwrap();
        let text = match &last["content"] {
            Value::String(t) => t.clone(),
            Value::Array(parts) => parts.iter().filter_map(|p| p["text"].as_str()).collect(),
            _ => String::new(),
        };
        (200, completion(&format!("echo: {text}")))
    });
    let c = client(&s.url, Some("sk-test"));
    let out = c.chat(vec![ChatMessage::system("be brief"), ChatMessage::user("hello")]).unwrap();
    assert_eq!(out, "echo: hello");
    let (body, auth) = s.bodies.lock().unwrap()[0].clone();
    assert_eq!(body["model"], "mock-vlm");
    assert_eq!(body["temperature"], 0.0);
    assert_eq!(body["messages"][0]["role"], "system");
    assert_eq!(auth.as_deref(), Some("Bearer sk-test"));
}

#[test]
fn image_is_sent_as_png_data_url() {
    let s = serve(|_, _| (200, completion("ok")));
    let img = imaging::solid(7, 5, Rgba([1, 2, 3, 255]));
    let c = client(&s.url, None);
    c.chat(vec![ChatMessage::user("look").with_images(vec![img.clone()])]).unwrap();
    let (body, auth) = s.bodies.lock().unwrap()[0].clone();
    assert!(auth.is_none());
    let parts = body["messages"][0]["content"].as_array().unwrap();
    let url = parts.iter().find_map(|p| p["image_url"]["url"].as_str()).unwrap();
    let b64 = url.strip_prefix("data:image/png;base64,").unwrap();
    let bytes = base64::engine::general_purpose::STANDARD.decode(b64).unwrap();
    assert_eq!(imaging::decode_png(&bytes).unwrap(), img);
}

#[test]
fn server_errors_retry_then_fail() {
    let s = serve(|_, _| (500, "boom".into()));
    let err = client(&s.url, None).chat(vec![ChatMessage::user("x")]).unwrap_err();
    assert!(matches!(err, ModelError::EndpointUnreachable(_)), "{err:?}");
    assert_eq!(s.hits.load(Ordering::SeqCst), 3);
}

#[test]
fn transient_error_recovers() {
    let s = serve(|n, _| if n == 0 { (503, "busy".into()) } else { (200, completion("fine")) });
    assert_eq!(client(&s.url, None).chat(vec![ChatMessage::user("x")]).unwrap(), "fine");
    assert_eq!(s.hits.load(Ordering::SeqCst), 2);
}

#[test]
fn rate_limit_is_reported() {
    let s = serve(|_, _| (429, "slow down".into()));
    let err = client(&s.url, None).chat(vec![ChatMessage::user("x")]).unwrap_err();
    assert_eq!(err, ModelError::RateLimited);
    assert_eq!(s.hits.load(Ordering::SeqCst), 3);
}

#[test]
fn client_errors_do_not_retry() {
    let s = serve(|_, _| (400, "bad".into()));
    let err = client(&s.url, None).chat(vec![ChatMessage::user("x")]).unwrap_err();
    assert!(matches!(err, ModelError::BadResponse(_)));
    assert_eq!(s.hits.load(Ordering::SeqCst), 1);
}

#[test]
fn unreachable_endpoint() {
    let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let err = client(&format!("http://127.0.0.1:{port}/v1"), None).chat(vec![ChatMessage::user("x")]).unwrap_err();
    assert!(matches!(err, ModelError::EndpointUnreachable(_)));
}
