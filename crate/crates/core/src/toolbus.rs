//! Tool-call syntax, the result envelope, and dispatch to tool adapters.
//!
//! A router emits `<tool_call> name </tool_call>`. Calls to registered names
//! become [`ActionKind::Tool`](crate::types::ActionKind::Tool), well-formed
//! calls to anything else become decoys, and everything else is a format error.
//!
//! # Subprocess protocol
//!
//! The child receives exactly one UTF-8 line on stdin:
//!
//! ```text
//! {"tool":"<name>","audio_path":"<path>"|null,"params":{...}}
//! ```
//!
//! and must answer with one line on stdout, either
//! `{"status":"ok","result":{...}}` or `{"status":"error","message":"..."}`.
//! A nonzero exit, a malformed line, or a missed deadline turns into an
//! error envelope.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::process::{Command, Stdio};
use std::sync::mpsc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::dsp;
use crate::types::{is_valid_token, ActionId, Adapter, ToolRegistry, ToolSpec};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ToolbusError {
    #[error("malformed tool call: {0}")]
    FormatError(String),
    #[error("{0} is not a tool call")]
    NotAToolAction(String),
    #[error("unknown tool `{0}`")]
    UnknownTool(String),
    #[error("tool manifest: {0}")]
    Manifest(String),
}

/// A scalar inside a result list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Scalar {
    Number(f64),
    Text(String),
}

/// Result values: numbers, text, or a flat list of those.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ResultValue {
    Number(f64),
    Text(String),
    List(Vec<Scalar>),
}

impl ResultValue {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            ResultValue::Number(n) => Some(*n),
            _ => None,
        }
    }
}

impl From<f64> for ResultValue {
    fn from(v: f64) -> Self {
        ResultValue::Number(v)
    }
}

impl From<&str> for ResultValue {
    fn from(v: &str) -> Self {
        ResultValue::Text(v.to_string())
    }
}

pub type ResultMap = BTreeMap<String, ResultValue>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Ok,
    Error,
}

/// Unified envelope returned by every tool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolResult {
    pub tool: String,
    pub status: Status,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub result: Option<ResultMap>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
    pub latency_ms: f64,
}

impl ToolResult {
    pub fn ok(tool: &str, result: ResultMap) -> Self {
        Self { tool: tool.to_string(), status: Status::Ok, result: Some(result), message: None, latency_ms: 0.0 }
    }

    pub fn error(tool: &str, message: impl Into<String>) -> Self {
        Self { tool: tool.to_string(), status: Status::Error, result: None, message: Some(message.into()), latency_ms: 0.0 }
    }

    pub fn is_ok(&self) -> bool {
        self.status == Status::Ok
    }

    pub fn get(&self, key: &str) -> Option<&ResultValue> {
        self.result.as_ref()?.get(key)
    }

    fn with_latency(mut self, since: Instant) -> Self {
        self.latency_ms = since.elapsed().as_secs_f64() * 1e3;
        self
    }
}

/// Arguments of one tool invocation.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ToolRequest {
    pub audio_path: Option<String>,
    pub params: Map<String, Value>,
}

impl ToolRequest {
    pub fn with_audio(path: impl Into<String>) -> Self {
        Self { audio_path: Some(path.into()), params: Map::new() }
    }

    pub fn param(mut self, key: &str, value: impl Into<Value>) -> Self {
        self.params.insert(key.to_string(), value.into());
        self
    }
}

#[derive(Serialize)]
struct WireRequest<'a> {
    tool: &'a str,
    audio_path: Option<&'a str>,
    params: &'a Map<String, Value>,
}

/// The exact line written to a subprocess tool's stdin (without newline).
pub fn request_line(tool: &str, request: &ToolRequest) -> String {
    serde_json::to_string(&WireRequest { tool, audio_path: request.audio_path.as_deref(), params: &request.params })
        .expect("request serializes")
}

const OPEN: &str = "<tool_call>";
const CLOSE: &str = "</tool_call>";

pub fn parse_tool_call(text: &str, registry: &ToolRegistry) -> Result<ActionId, ToolbusError> {
    let fail = |m: &str| Err(ToolbusError::FormatError(m.to_string()));
    let t = text.trim();
    let Some(rest) = t.strip_prefix(OPEN) else {
        return fail("missing <tool_call>");
    };
    let Some(inner) = rest.strip_suffix(CLOSE) else {
        return fail("missing </tool_call>");
    };
    if !inner.starts_with(char::is_whitespace) || !inner.ends_with(char::is_whitespace) {
        return fail("tool name must be separated from the tags by whitespace");
    }
    let name = inner.trim();
    if name.is_empty() {
        return fail("empty tool name");
    }
    if !is_valid_token(name) {
        return fail("tool name is not a token");
    }
    if registry.contains(name) {
        Ok(ActionId::tool(name))
    } else {
        Ok(ActionId::decoy(name))
    }
}

/// Canonical single-space form. Decoys serialize too: they are well-formed
/// calls to names that happen not to exist.
pub fn serialize_tool_call(action: &ActionId) -> Result<String, ToolbusError> {
    if action.is_direct() {
        return Err(ToolbusError::NotAToolAction(action.to_string()));
    }
    Ok(format!("{OPEN} {} {CLOSE}", action.name()))
}

/// Dispatches to the tool's adapter. Adapter faults come back as error
/// envelopes; only an unregistered name is an `Err`.
pub fn invoke(registry: &ToolRegistry, name: &str, request: &ToolRequest) -> Result<ToolResult, ToolbusError> {
    let spec = registry.lookup(name).ok_or_else(|| ToolbusError::UnknownTool(name.to_string()))?;
    let start = Instant::now();
    let res = match &spec.adapter {
        Adapter::Simulated { scripted } => invoke_simulated(name, scripted, request),
        Adapter::NativeDsp => invoke_native(name, request),
        Adapter::Subprocess { command, timeout_ms } => invoke_subprocess(name, command, *timeout_ms, request),
    };
    Ok(res.with_latency(start))
}

fn invoke_simulated(name: &str, scripted: &BTreeMap<String, ResultMap>, request: &ToolRequest) -> ToolResult {
    let key = request.params.get("instance_id").and_then(Value::as_str).unwrap_or("*");
    match scripted.get(key).or_else(|| scripted.get("*")) {
        Some(r) => ToolResult::ok(name, r.clone()),
        None => ToolResult::error(name, format!("no scripted result for `{key}`")),
    }
}

fn invoke_native(name: &str, request: &ToolRequest) -> ToolResult {
    match name {
        "audio_features" => dsp::audio_features_tool(name, request),
        "duration_analysis" => dsp::duration_tool(name, request),
        "temporal_analysis" => dsp::temporal_tool(name, request),
        _ => ToolResult::error(name, format!("no native implementation for `{name}`")),
    }
}

fn invoke_subprocess(name: &str, command: &[String], timeout_ms: u64, request: &ToolRequest) -> ToolResult {
    let Some((program, args)) = command.split_first() else {
        return ToolResult::error(name, "empty subprocess command");
    };
    let deadline = Instant::now() + Duration::from_millis(timeout_ms);
    let mut child = match Command::new(program)
        .args(args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
    {
        Ok(c) => c,
        Err(e) => return ToolResult::error(name, format!("spawn failed: {e}")),
    };

    let mut line = request_line(name, request);
    line.push('\n');
    if let Some(mut stdin) = child.stdin.take() {
        // a child that exits without reading is judged by its exit status
        let _ = stdin.write_all(line.as_bytes());
    }

    let stdout = child.stdout.take().expect("stdout piped");
    let (tx, rx) = mpsc::channel();
    std::thread::spawn(move || {
        let mut reader = BufReader::new(stdout);
        let mut out = String::new();
        let res = reader.read_line(&mut out).map(|_| out);
        let _ = tx.send(res);
    });

    let timeout_err = |child: &mut std::process::Child| {
        let _ = child.kill();
        let _ = child.wait();
        ToolResult::error(name, format!("timeout after {timeout_ms} ms"))
    };

    let remaining = deadline.saturating_duration_since(Instant::now());
    let response = match rx.recv_timeout(remaining) {
        Ok(Ok(l)) => l,
        Ok(Err(e)) => {
            let _ = child.kill();
            let _ = child.wait();
            return ToolResult::error(name, format!("reading response: {e}"));
        }
        Err(_) => return timeout_err(&mut child),
    };

    let status = loop {
        match child.try_wait() {
            Ok(Some(s)) => break s,
            Ok(None) if Instant::now() >= deadline => return timeout_err(&mut child),
            Ok(None) => std::thread::sleep(Duration::from_millis(2)),
            Err(e) => return ToolResult::error(name, format!("waiting for child: {e}")),
        }
    };
    if !status.success() {
        return ToolResult::error(name, format!("tool exited with {status}"));
    }
    parse_response(name, &response)
}

/// Decodes one response line of the subprocess protocol.
pub fn parse_response(name: &str, line: &str) -> ToolResult {
    let malformed = |why: &str| ToolResult::error(name, format!("malformed response: {why}"));
    let v: Value = match serde_json::from_str(line.trim()) {
        Ok(v) => v,
        Err(e) => return malformed(&e.to_string()),
    };
    match v.get("status").and_then(Value::as_str) {
        Some("ok") => match v.get("result").map(|r| serde_json::from_value::<ResultMap>(r.clone())) {
            Some(Ok(r)) => ToolResult::ok(name, r),
            Some(Err(_)) => malformed("result is not a flat map of numbers, text and lists"),
            None => malformed("missing result"),
        },
        Some("error") => match v.get("message").and_then(Value::as_str) {
            Some(m) => ToolResult::error(name, m),
            None => malformed("missing message"),
        },
        _ => malformed("missing status"),
    }
}

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    version: u32,
    tools: Vec<ToolSpec>,
}

pub fn manifest_text(registry: &ToolRegistry) -> String {
    let m = Manifest { version: MANIFEST_VERSION, tools: registry.iter().cloned().collect() };
    serde_json::to_string_pretty(&m).expect("manifest serializes") + "\n"
}

pub fn parse_manifest(text: &str) -> Result<ToolRegistry, ToolbusError> {
    let m: Manifest = serde_json::from_str(text).map_err(|e| ToolbusError::Manifest(e.to_string()))?;
    if m.version != MANIFEST_VERSION {
        return Err(ToolbusError::Manifest(format!("unsupported version {}", m.version)));
    }
    ToolRegistry::from_specs(m.tools).map_err(|e| ToolbusError::Manifest(e.to_string()))
}

pub fn load_manifest(path: &Path) -> Result<ToolRegistry, ToolbusError> {
    let text = fs::read_to_string(path).map_err(|e| ToolbusError::Manifest(format!("{}: {e}", path.display())))?;
    parse_manifest(&text)
}
