//! Drives CdpSession against an in-process websocket server that speaks a
//! small subset of the devtools protocol.

use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use base64::Engine;
use cogweb::browser::{Browser, BrowserError, CdpSession, ConnectOptions, InputOutcome, InputPrimitive, InputTarget};
use cogweb::geometry::Viewport;
use cogweb::imaging;
use cogweb::observation::compose_observation;
use image::Rgba;
use serde_json::{json, Value};
use tungstenite::Message;

type Frames = Arc<Mutex<Vec<Value>>>;

#[derive(Clone, Copy)]
struct Behaviour {
    settle: bool,
    hit: bool,
}

fn png_b64(w: u32, h: u32) -> String {
    let img = imaging::solid(w, h, Rgba([10, 120, 200, 255]));
    base64::engine::general_purpose::STANDARD.encode(imaging::encode_png(&img).unwrap())
}

fn ax_nodes() -> Value {
    json!([
        {"nodeId": "1", "role": {"value": "RootWebArea"}, "name": {"value": "Mock"}, "childIds": ["2", "3"], "backendDOMNodeId": 1},
        {"nodeId": "2", "parentId": "1", "role": {"value": "link"}, "name": {"value": "Home"}, "childIds": [], "backendDOMNodeId": 11},
        {"nodeId": "3", "parentId": "1", "role": {"value": "button"}, "name": {"value": "Buy"}, "childIds": [], "backendDOMNodeId": 12,
         "properties": [{"name": "focusable", "value": {"value": true}}]}
    ])
}

fn reply(method: &str, params: &Value, b: Behaviour) -> (Value, Vec<Value>) {
    match method {
        "Target.createTarget" => (json!({"targetId": "T1"}), vec![]),
        "Target.attachToTarget" => (json!({"sessionId": "S1"}), vec![]),
        "Page.navigate" => {
            let events = if b.settle {
                vec![
                    json!({"method": "Page.lifecycleEvent", "params": {"name": "load", "loaderId": "L1"}}),
                    json!({"method": "Page.lifecycleEvent", "params": {"name": "networkIdle", "loaderId": "L1"}}),
                ]
            } else {
                vec![]
            };
            let _ = params;
            (json!({"frameId": "F", "loaderId": "L1"}), events)
        }
        "Page.captureScreenshot" => (json!({"data": png_b64(320, 200)}), vec![]),
        "Accessibility.getFullAXTree" => (json!({"nodes": ax_nodes()}), vec![]),
        "Runtime.evaluate" => (json!({"result": {"type": "string", "value": "http://mock.test/"}}), vec![]),
        "DOM.getBoxModel" => (json!({"model": {"border": [100, 50, 160, 50, 160, 80, 100, 80]}}), vec![]),
        "DOM.resolveNode" => (json!({"object": {"objectId": "obj-12"}}), vec![]),
        "Runtime.callFunctionOn" => (json!({"result": {"type": "boolean", "value": b.hit}}), vec![]),
        "Page.getNavigationHistory" => (json!({"currentIndex": 0, "entries": [{"id": 1, "url": "http://mock.test/"}]}), vec![]),
        _ => (json!({}), vec![]),
    }
}

fn serve(b: Behaviour) -> (String, Frames) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let port = listener.local_addr().unwrap().port();
    let frames: Frames = Arc::default();
    let log = frames.clone();
    thread::spawn(move || {
        let (stream, _) = listener.accept().unwrap();
        let mut ws = tungstenite::accept(stream).unwrap();
        loop {
            let msg = match ws.read() {
                Ok(Message::Text(t)) => t,
                Ok(Message::Close(_)) | Err(_) => break,
                Ok(_) => continue,
            };
            let frame: Value = serde_json::from_str(&msg).unwrap();
            log.lock().unwrap().push(frame.clone());
            let method = frame["method"].as_str().unwrap_or_default().to_string();
            if method == "Test.hangUp" {
                break;
            }
            let (result, events) = reply(&method, &frame["params"], b);
            let mut resp = json!({"id": frame["id"], "result": result});
            if let Some(s) = frame.get("sessionId") {
                resp["sessionId"] = s.clone();
            }
            ws.send(Message::Text(resp.to_string())).unwrap();
            for e in events {
                ws.send(Message::Text(e.to_string())).unwrap();
            }
        }
    });
    (format!("ws://127.0.0.1:{port}"), frames)
}

fn opts() -> ConnectOptions {
    ConnectOptions { viewport: Viewport::new(320, 200).unwrap(), command_timeout: Duration::from_secs(5) }
}

fn methods(frames: &Frames) -> Vec<String> {
    frames.lock().unwrap().iter().map(|f| f["method"].as_str().unwrap().to_string()).collect()
}

#[test]
fn page_endpoint_session() {
    let (url, frames) = serve(Behaviour { settle: true, hit: true });
    let mut s = CdpSession::connect(&format!("{url}/devtools/page/P1"), opts()).unwrap();
    assert_eq!(
        methods(&frames),
        ["Page.enable", "Page.setLifecycleEventsEnabled", "DOM.enable", "Accessibility.enable", "Emulation.setDeviceMetricsOverride"]
    );
    let vp = frames.lock().unwrap()[4]["params"].clone();
    assert_eq!((vp["width"].as_u64(), vp["height"].as_u64()), (Some(320), Some(200)));

    s.navigate("http://mock.test/", Duration::from_secs(2)).unwrap();
    let obs = compose_observation(&mut s, 0).unwrap();
    assert_eq!(obs.screenshot.dimensions(), (320, 200));
    assert_eq!(obs.url, "http://mock.test/");
    assert!(obs.ax_text.contains("button 'Buy'"), "{}", obs.ax_text);

    let out = s.execute_input(&InputPrimitive::Click(InputTarget::Node(12))).unwrap();
    assert_eq!(out, InputOutcome::Dispatched);
    let f = frames.lock().unwrap().clone();
    let presses: Vec<&Value> = f.iter().filter(|f| f["method"] == "Input.dispatchMouseEvent").collect();
    assert_eq!(presses.len(), 3);
    assert_eq!(presses[1]["params"]["type"], "mousePressed");
    assert_eq!((presses[1]["params"]["x"].as_f64(), presses[1]["params"]["y"].as_f64()), (Some(130.0), Some(65.0)));

    assert_eq!(s.execute_input(&InputPrimitive::HistoryBack).unwrap(), InputOutcome::NoHistoryEntry);
    assert!(f.iter().all(|f| f.get("sessionId").is_none()));
}

#[test]
fn browser_endpoint_attaches_flat_session() {
    let (url, frames) = serve(Behaviour { settle: true, hit: true });
    let mut s = CdpSession::connect(&format!("{url}/devtools/browser/B1"), opts()).unwrap();
    s.navigate("http://mock.test/", Duration::from_secs(2)).unwrap();
    let f = frames.lock().unwrap().clone();
    assert_eq!(f[0]["method"], "Target.createTarget");
    assert_eq!(f[1]["method"], "Target.attachToTarget");
    assert_eq!(f[1]["params"]["flatten"], true);
    assert!(f[2..].iter().all(|x| x["sessionId"] == "S1"));
}

#[test]
fn occluded_click_falls_back_to_dom() {
    let (url, frames) = serve(Behaviour { settle: true, hit: false });
    let mut s = CdpSession::connect(&url, opts()).unwrap();
    let out = s.execute_input(&InputPrimitive::Click(InputTarget::Node(12))).unwrap();
    assert_eq!(out, InputOutcome::DomFallback);
    assert!(!methods(&frames).contains(&"Input.dispatchMouseEvent".to_string()));
}

#[test]
fn unsettled_navigation_times_out() {
    let (url, _) = serve(Behaviour { settle: false, hit: true });
    let mut s = CdpSession::connect(&url, opts()).unwrap();
    let err = s.navigate("http://mock.test/slow", Duration::from_millis(300)).unwrap_err();
    assert_eq!(err, BrowserError::NavigationTimeout { url: "http://mock.test/slow".into() });
    assert!(!err.is_fatal());
}

#[test]
fn dropped_connection_is_fatal() {
    let (url, _) = serve(Behaviour { settle: true, hit: true });
    let mut s = CdpSession::connect(&url, opts()).unwrap();
    let _ = s.send("Test.hangUp", json!({}));
    thread::sleep(Duration::from_millis(100));
    let err = s.capture_screenshot().unwrap_err();
    assert!(err.is_fatal(), "{err:?}");
}

#[test]
fn point_outside_viewport_is_unresolvable() {
    let (url, _) = serve(Behaviour { settle: true, hit: true });
    let mut s = CdpSession::connect(&url, opts()).unwrap();
    let err = s.execute_input(&InputPrimitive::Click(InputTarget::Point { x: 500.0, y: 10.0 })).unwrap_err();
    assert!(matches!(err, BrowserError::TargetUnresolvable(_)));
}

#[test]
fn nothing_listening_fails_to_connect() {
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let err = CdpSession::connect(&format!("ws://127.0.0.1:{port}"), opts()).unwrap_err();
    assert!(matches!(err, BrowserError::ConnectFailed(_)));
}
