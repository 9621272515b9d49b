use std::collections::{HashMap, VecDeque};
use std::net::TcpStream;
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::{Duration, Instant};

use base64::Engine;
use serde_json::{json, Value};
use tungstenite::stream::MaybeTlsStream;
use tungstenite::{Message, WebSocket};

use super::{Browser, BrowserError, InputOutcome, InputPrimitive, InputTarget, PageReady, RawAXNode, ScrollDirection, WAIT_DURATION};
use crate::geometry::{Rect, Viewport};
use crate::imaging::{self, Image};

static SESSION_COUNTER: AtomicU64 = AtomicU64::new(1);

const POLL_INTERVAL: Duration = Duration::from_millis(50);

#[derive(Debug, Clone)]
pub struct ConnectOptions {
    pub viewport: Viewport,
    pub command_timeout: Duration,
}

impl Default for ConnectOptions {
    fn default() -> Self {
        Self {
            viewport: Viewport::DEFAULT,
            command_timeout: Duration::from_secs(30),
        }
    }
}

/// A live devtools-protocol connection to one page target.
pub struct CdpSession {
    session_id: String,
    target_url: String,
    viewport: Viewport,
    socket: WebSocket<MaybeTlsStream<TcpStream>>,
    /// Set when attached through a browser-level endpoint (flattened sessions).
    target_session: Option<String>,
    next_id: u64,
    pending_events: VecDeque<Value>,
    command_log: Vec<String>,
    current_url: String,
    command_timeout: Duration,
}

impl std::fmt::Debug for CdpSession {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CdpSession")
            .field("session_id", &self.session_id)
            .field("target_url", &self.target_url)
            .field("viewport", &self.viewport)
            .finish()
    }
}

fn connect_err(e: impl std::fmt::Display) -> BrowserError {
    BrowserError::ConnectFailed(e.to_string())
}

/// Resolves `http://host:port` to the browser websocket URL via `/json/version`.
fn discover_ws_url(endpoint: &str) -> Result<String, BrowserError> {
    if endpoint.starts_with("ws://") || endpoint.starts_with("wss://") {
        return Ok(endpoint.to_string());
    }
    let base = endpoint.trim_end_matches('/');
    let body: Value = ureq::get(&format!("{base}/json/version"))
        .timeout(Duration::from_secs(5))
        .call()
        .map_err(connect_err)?
        .into_json()
        .map_err(connect_err)?;
    body.get("webSocketDebuggerUrl")
        .and_then(Value::as_str)
        .map(str::to_string)
        .ok_or_else(|| connect_err("no webSocketDebuggerUrl in /json/version"))
}

impl CdpSession {
    /// Opens a session with `opts.viewport` applied and a blank page loaded.
    pub fn connect(endpoint: &str, opts: ConnectOptions) -> Result<Self, BrowserError> {
        let vp = opts.viewport;
        if vp.width == 0 || vp.height == 0 {
            return Err(BrowserError::InvalidViewport { width: vp.width, height: vp.height });
        }
        let ws_url = discover_ws_url(endpoint)?;
        let (socket, _) = tungstenite::connect(ws_url.as_str()).map_err(connect_err)?;
        if let MaybeTlsStream::Plain(s) = socket.get_ref() {
            s.set_read_timeout(Some(POLL_INTERVAL)).map_err(connect_err)?;
        }
        let mut session = CdpSession {
            session_id: format!("cw-{}", SESSION_COUNTER.fetch_add(1, Ordering::Relaxed)),
            target_url: ws_url.clone(),
            viewport: vp,
            socket,
            target_session: None,
            next_id: 1,
            pending_events: VecDeque::new(),
            command_log: Vec::new(),
            current_url: "about:blank".into(),
            command_timeout: opts.command_timeout,
        };
        if ws_url.contains("/devtools/browser") {
            let created = session.send("Target.createTarget", json!({ "url": "about:blank" }))?;
            let target_id = created["targetId"].as_str().ok_or_else(|| connect_err("createTarget returned no targetId"))?.to_string();
            let attached = session.send("Target.attachToTarget", json!({ "targetId": target_id, "flatten": true }))?;
            let sid = attached["sessionId"].as_str().ok_or_else(|| connect_err("attachToTarget returned no sessionId"))?;
            session.target_session = Some(sid.to_string());
        }
        session.send("Page.enable", json!({}))?;
        session.send("Page.setLifecycleEventsEnabled", json!({ "enabled": true }))?;
        session.send("DOM.enable", json!({}))?;
        session.send("Accessibility.enable", json!({}))?;
        session.send(
            "Emulation.setDeviceMetricsOverride",
            json!({ "width": vp.width, "height": vp.height, "deviceScaleFactor": 1, "mobile": false }),
        )?;
        Ok(session)
    }

    pub fn session_id(&self) -> &str {
        &self.session_id
    }

    pub fn target_url(&self) -> &str {
        &self.target_url
    }

    /// Methods sent on this session, in order.
    pub fn command_log(&self) -> &[String] {
        &self.command_log
    }

    fn read_message(&mut self) -> Result<Option<Value>, BrowserError> {
        match self.socket.read() {
            Ok(Message::Text(text)) => serde_json::from_str(&text)
                .map(Some)
                .map_err(|e| BrowserError::Protocol(format!("bad frame: {e}"))),
            Ok(Message::Close(_)) => Err(BrowserError::Disconnected("socket closed".into())),
            Ok(_) => Ok(None),
            Err(tungstenite::Error::Io(e))
                if matches!(e.kind(), std::io::ErrorKind::WouldBlock | std::io::ErrorKind::TimedOut) =>
            {
                Ok(None)
            }
            Err(e) => Err(BrowserError::Disconnected(e.to_string())),
        }
    }

    /// Sends one command and blocks until its response; events seen meanwhile are queued.
    pub fn send(&mut self, method: &str, params: Value) -> Result<Value, BrowserError> {
        let id = self.next_id;
        self.next_id += 1;
        let mut frame = json!({ "id": id, "method": method, "params": params });
        if let Some(sid) = &self.target_session {
            if !method.starts_with("Target.") {
                frame["sessionId"] = json!(sid);
            }
        }
        self.command_log.push(method.to_string());
        self.socket
            .send(Message::Text(frame.to_string()))
            .map_err(|e| BrowserError::Disconnected(e.to_string()))?;
        let deadline = Instant::now() + self.command_timeout;
        loop {
            if Instant::now() > deadline {
                return Err(BrowserError::Protocol(format!("{method} timed out")));
            }
            let Some(msg) = self.read_message()? else { continue };
            if msg.get("id").and_then(Value::as_u64) == Some(id) {
                if let Some(err) = msg.get("error") {
                    let text = err.get("message").and_then(Value::as_str).unwrap_or("unknown error");
                    return Err(BrowserError::Protocol(format!("{method}: {text}")));
                }
                return Ok(msg.get("result").cloned().unwrap_or(Value::Null));
            }
            if msg.get("method").is_some() {
                self.pending_events.push_back(msg);
            }
        }
    }

    /// Waits for an event satisfying `pred`, consuming queued events first.
    fn wait_event(&mut self, deadline: Instant, pred: impl Fn(&Value) -> bool) -> Result<bool, BrowserError> {
        while let Some(ev) = self.pending_events.pop_front() {
            if pred(&ev) {
                return Ok(true);
            }
        }
        while Instant::now() < deadline {
            if let Some(msg) = self.read_message()? {
                if msg.get("method").is_some() && pred(&msg) {
                    return Ok(true);
                }
            }
        }
        Ok(false)
    }

    fn mouse(&mut self, kind: &str, x: f64, y: f64, click_count: u32, extra: Value) -> Result<(), BrowserError> {
        let mut params = json!({
            "type": kind, "x": x, "y": y, "button": "left", "clickCount": click_count,
        });
        if let (Value::Object(p), Value::Object(e)) = (&mut params, extra) {
            p.extend(e);
        }
        if kind == "mouseMoved" || kind == "mouseWheel" {
            params["button"] = json!("none");
        }
        self.send("Input.dispatchMouseEvent", params)?;
        Ok(())
    }

    fn resolve_object(&mut self, backend_id: i64) -> Result<String, BrowserError> {
        let res = self
            .send("DOM.resolveNode", json!({ "backendNodeId": backend_id }))
            .map_err(|e| BrowserError::StaleTarget(format!("node {backend_id}: {e}")))?;
        res["object"]["objectId"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| BrowserError::StaleTarget(format!("node {backend_id}")))
    }

    fn call_on(&mut self, object_id: &str, function: &str, args: Value) -> Result<Value, BrowserError> {
        let res = self.send(
            "Runtime.callFunctionOn",
            json!({ "objectId": object_id, "functionDeclaration": function, "arguments": args, "returnByValue": true }),
        )?;
        if let Some(ex) = res.get("exceptionDetails") {
            return Err(BrowserError::ScriptError(exception_text(ex)));
        }
        Ok(res["result"]["value"].clone())
    }

    fn target_point(&mut self, target: &InputTarget) -> Result<(f64, f64), BrowserError> {
        match *target {
            InputTarget::Point { x, y } => {
                if !self.viewport.bounds().contains_point(x, y) {
                    return Err(BrowserError::TargetUnresolvable(format!("point ({x}, {y}) outside viewport")));
                }
                Ok((x, y))
            }
            InputTarget::Node(id) => match self.node_box(id)? {
                Some(r) if !r.is_empty() => Ok(r.center()),
                Some(_) => Err(BrowserError::TargetUnresolvable(format!("node {id} has no layout box"))),
                None => Err(BrowserError::StaleTarget(format!("node {id}"))),
            },
            InputTarget::Window => {
                let vp = self.viewport.bounds();
                Ok(vp.center())
            }
        }
    }

    fn click(&mut self, target: &InputTarget, count: u32) -> Result<InputOutcome, BrowserError> {
        let (x, y) = self.target_point(target)?;
        if let InputTarget::Node(id) = *target {
            let object = self.resolve_object(id)?;
            let hit = self.call_on(
                &object,
                "function(x, y) { const e = document.elementFromPoint(x, y); return !!e && (e === this || this.contains(e)); }",
                json!([{ "value": x }, { "value": y }]),
            )?;
            if hit != Value::Bool(true) {
                let script = if count > 1 {
                    "function() { this.dispatchEvent(new MouseEvent('dblclick', {bubbles: true})); }"
                } else {
                    "function() { this.click(); }"
                };
                self.call_on(&object, script, json!([]))?;
                return Ok(InputOutcome::DomFallback);
            }
        }
        self.mouse("mouseMoved", x, y, 0, json!({}))?;
        for n in 1..=count {
            self.mouse("mousePressed", x, y, n, json!({}))?;
            self.mouse("mouseReleased", x, y, n, json!({}))?;
        }
        Ok(InputOutcome::Dispatched)
    }

    fn history_step(&mut self, delta: i64) -> Result<InputOutcome, BrowserError> {
        let hist = self.send("Page.getNavigationHistory", json!({}))?;
        let current = hist["currentIndex"].as_i64().unwrap_or(0);
        let entries = hist["entries"].as_array().cloned().unwrap_or_default();
        let target = current + delta;
        if target < 0 || target as usize >= entries.len() {
            return Ok(InputOutcome::NoHistoryEntry);
        }
        let entry = &entries[target as usize];
        let entry_id = entry["id"].as_i64().unwrap_or(0);
        self.send("Page.navigateToHistoryEntry", json!({ "entryId": entry_id }))?;
        let deadline = Instant::now() + super::DEFAULT_SETTLE;
        self.wait_event(deadline, |ev| ev["method"] == "Page.loadEventFired" || ev["method"] == "Page.navigatedWithinDocument")?;
        if let Some(url) = entry["url"].as_str() {
            self.current_url = url.to_string();
        }
        Ok(InputOutcome::Dispatched)
    }
}

fn exception_text(ex: &Value) -> String {
    ex["exception"]["description"]
        .as_str()
        .or_else(|| ex["text"].as_str())
        .unwrap_or("script threw")
        .to_string()
}

fn ax_value(node: &Value, key: &str) -> String {
    match &node[key]["value"] {
        Value::String(s) => s.clone(),
        Value::Null => String::new(),
        other => other.to_string(),
    }
}

/// Builds the nested raw tree from `Accessibility.getFullAXTree` output.
pub(crate) fn raw_tree_from_cdp(nodes: &[Value]) -> Result<RawAXNode, BrowserError> {
    if nodes.is_empty() {
        return Err(BrowserError::SnapshotFailed("empty accessibility tree".into()));
    }
    let mut index: HashMap<String, usize> = HashMap::new();
    for (i, n) in nodes.iter().enumerate() {
        if let Some(id) = n["nodeId"].as_str() {
            index.insert(id.to_string(), i);
        }
    }
    let root = nodes
        .iter()
        .position(|n| n.get("parentId").is_none_or(Value::is_null))
        .unwrap_or(0);

    fn build(i: usize, nodes: &[Value], index: &HashMap<String, usize>, depth: usize) -> RawAXNode {
        let n = &nodes[i];
        let ignored = n["ignored"].as_bool().unwrap_or(false);
        let role = if ignored { "none".to_string() } else { ax_value(n, "role") };
        let backend_id = n["backendDOMNodeId"].as_i64().unwrap_or(-(i as i64) - 1);
        let mut state_flags = Vec::new();
        if let Some(props) = n["properties"].as_array() {
            for p in props {
                if let Some(name) = p["name"].as_str() {
                    state_flags.push((name.to_string(), ax_value(p, "value")));
                }
            }
        }
        let children = if depth > 512 {
            Vec::new()
        } else {
            n["childIds"]
                .as_array()
                .map(|ids| {
                    ids.iter()
                        .filter_map(|c| c.as_str().and_then(|c| index.get(c)))
                        .map(|&c| build(c, nodes, index, depth + 1))
                        .collect()
                })
                .unwrap_or_default()
        };
        RawAXNode {
            backend_id,
            role,
            name: ax_value(n, "name"),
            description: ax_value(n, "description"),
            state_flags,
            children,
        }
    }
    Ok(build(root, nodes, &index, 0))
}

impl Browser for CdpSession {
    fn viewport(&self) -> Viewport {
        self.viewport
    }

    fn navigate(&mut self, url: &str, settle: Duration) -> Result<PageReady, BrowserError> {
        self.pending_events.clear();
        let res = self.send("Page.navigate", json!({ "url": url }))?;
        if let Some(err) = res["errorText"].as_str() {
            return Err(BrowserError::NavigationFailed { url: url.into(), reason: err.into() });
        }
        self.current_url = url.to_string();
        let loader = res["loaderId"].as_str().map(str::to_string);
        let deadline = Instant::now() + settle;
        let settled = self.wait_event(deadline, |ev| {
            ev["method"] == "Page.lifecycleEvent"
                && ev["params"]["name"] == "networkIdle"
                && loader.as_deref().is_none_or(|l| ev["params"]["loaderId"] == l)
        })?;
        if !settled {
            return Err(BrowserError::NavigationTimeout { url: url.into() });
        }
        Ok(PageReady { url: url.into() })
    }

    fn current_url(&mut self) -> Result<String, BrowserError> {
        match self.evaluate_script("location.href") {
            Ok(Value::String(u)) => {
                self.current_url = u.clone();
                Ok(u)
            }
            Ok(_) => Ok(self.current_url.clone()),
            Err(e) if e.is_fatal() => Err(e),
            Err(_) => Ok(self.current_url.clone()),
        }
    }

    fn capture_screenshot(&mut self) -> Result<Image, BrowserError> {
        let res = self
            .send("Page.captureScreenshot", json!({ "format": "png", "captureBeyondViewport": false }))
            .map_err(|e| if e.is_fatal() { e } else { BrowserError::CaptureFailed(e.to_string()) })?;
        let data = res["data"].as_str().ok_or_else(|| BrowserError::CaptureFailed("no image data".into()))?;
        let bytes = base64::engine::general_purpose::STANDARD
            .decode(data)
            .map_err(|e| BrowserError::CaptureFailed(e.to_string()))?;
        let img = imaging::decode_png(&bytes).map_err(|e| BrowserError::CaptureFailed(e.to_string()))?;
        if img.width() != self.viewport.width || img.height() != self.viewport.height {
            return Err(BrowserError::CaptureFailed(format!(
                "got {}x{}, viewport is {}x{}",
                img.width(),
                img.height(),
                self.viewport.width,
                self.viewport.height
            )));
        }
        Ok(img)
    }

    fn fetch_raw_ax(&mut self) -> Result<RawAXNode, BrowserError> {
        let res = self
            .send("Accessibility.getFullAXTree", json!({}))
            .map_err(|e| if e.is_fatal() { e } else { BrowserError::SnapshotFailed(e.to_string()) })?;
        let nodes = res["nodes"].as_array().cloned().unwrap_or_default();
        raw_tree_from_cdp(&nodes)
    }

    fn execute_input(&mut self, input: &InputPrimitive) -> Result<InputOutcome, BrowserError> {
        match input {
            InputPrimitive::Click(t) => self.click(t, 1),
            InputPrimitive::DbClick(t) => self.click(t, 2),
            InputPrimitive::Hover(t) => {
                let (x, y) = self.target_point(t)?;
                self.mouse("mouseMoved", x, y, 0, json!({}))?;
                Ok(InputOutcome::Dispatched)
            }
            InputPrimitive::TypeText { target, text } => {
                match *target {
                    InputTarget::Node(id) => {
                        self.send("DOM.focus", json!({ "backendNodeId": id }))
                            .map_err(|e| BrowserError::StaleTarget(format!("node {id}: {e}")))?;
                    }
                    InputTarget::Point { .. } => {
                        self.click(target, 1)?;
                    }
                    InputTarget::Window => {}
                }
                self.send("Input.insertText", json!({ "text": text }))?;
                Ok(InputOutcome::Dispatched)
            }
            InputPrimitive::Scroll { target, direction } => {
                let delta = match direction {
                    ScrollDirection::Up => -(self.viewport.height as f64) * 0.8,
                    ScrollDirection::Down => self.viewport.height as f64 * 0.8,
                };
                let (x, y) = self.target_point(target)?;
                self.mouse("mouseWheel", x, y, 0, json!({ "deltaX": 0, "deltaY": delta }))?;
                Ok(InputOutcome::Dispatched)
            }
            InputPrimitive::HistoryBack => self.history_step(-1),
            InputPrimitive::HistoryForward => self.history_step(1),
            InputPrimitive::Wait => {
                std::thread::sleep(WAIT_DURATION);
                Ok(InputOutcome::Waited)
            }
        }
    }

    fn evaluate_script(&mut self, script: &str) -> Result<Value, BrowserError> {
        let res = self.send(
            "Runtime.evaluate",
            json!({ "expression": script, "returnByValue": true, "awaitPromise": true }),
        )?;
        if let Some(ex) = res.get("exceptionDetails") {
            return Err(BrowserError::ScriptError(exception_text(ex)));
        }
        Ok(res["result"]["value"].clone())
    }

    fn node_box(&mut self, backend_id: i64) -> Result<Option<Rect>, BrowserError> {
        match self.send("DOM.getBoxModel", json!({ "backendNodeId": backend_id })) {
            Ok(res) => {
                let quad: Vec<f64> = res["model"]["border"]
                    .as_array()
                    .map(|q| q.iter().filter_map(Value::as_f64).collect())
                    .unwrap_or_default();
                if quad.len() != 8 {
                    return Ok(None);
                }
                let xs = [quad[0], quad[2], quad[4], quad[6]];
                let ys = [quad[1], quad[3], quad[5], quad[7]];
                let min_x = xs.iter().cloned().fold(f64::INFINITY, f64::min);
                let max_x = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let min_y = ys.iter().cloned().fold(f64::INFINITY, f64::min);
                let max_y = ys.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                Ok(Some(Rect::from_f64(min_x, min_y, max_x - min_x, max_y - min_y)))
            }
            Err(e) if e.is_fatal() => Err(e),
            Err(_) => Ok(None),
        }
    }

    fn locate(&mut self, css: &str) -> Result<Option<Rect>, BrowserError> {
        let script = format!(
            "(() => {{ const e = document.querySelector({}); if (!e) return null; const r = e.getBoundingClientRect(); return [r.x, r.y, r.width, r.height]; }})()",
            serde_json::to_string(css).unwrap_or_default()
        );
        let v = self.evaluate_script(&script)?;
        Ok(v.as_array().and_then(|a| {
            let f: Vec<f64> = a.iter().filter_map(Value::as_f64).collect();
            (f.len() == 4).then(|| Rect::from_f64(f[0], f[1], f[2], f[3]))
        }))
    }

    fn reset_history(&mut self) -> Result<(), BrowserError> {
        self.send("Page.resetNavigationHistory", json!({}))?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builds_nested_tree_from_flat_nodes() {
        let nodes = vec![
            json!({"nodeId": "1", "role": {"value": "RootWebArea"}, "name": {"value": "Fixture"}, "childIds": ["2"], "backendDOMNodeId": 10}),
            json!({"nodeId": "2", "parentId": "1", "role": {"value": "generic"}, "childIds": ["3"], "backendDOMNodeId": 11}),
            json!({"nodeId": "3", "parentId": "2", "role": {"value": "button"}, "name": {"value": "Go"},
                   "properties": [{"name": "focusable", "value": {"type": "booleanOrUndefined", "value": true}}],
                   "backendDOMNodeId": 12}),
            json!({"nodeId": "4", "parentId": "1", "ignored": true, "role": {"value": "generic"}}),
        ];
        let root = raw_tree_from_cdp(&nodes).unwrap();
        assert_eq!(root.role, "RootWebArea");
        assert_eq!(root.children.len(), 1);
        let button = &root.children[0].children[0];
        assert_eq!((button.role.as_str(), button.name.as_str(), button.backend_id), ("button", "Go", 12));
        assert_eq!(button.state_flags, vec![("focusable".to_string(), "true".to_string())]);
    }

    #[test]
    fn empty_snapshot_is_an_error() {
        assert!(matches!(raw_tree_from_cdp(&[]), Err(BrowserError::SnapshotFailed(_))));
    }

    #[test]
    fn zero_viewport_rejected_before_connecting() {
        let opts = ConnectOptions { viewport: Viewport { width: 0, height: 720 }, ..Default::default() };
        let err = CdpSession::connect("ws://127.0.0.1:1/devtools/page/x", opts).unwrap_err();
        assert_eq!(err, BrowserError::InvalidViewport { width: 0, height: 720 });
    }
}
