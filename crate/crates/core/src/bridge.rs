//! Newline-delimited JSON reward service.
//!
//! Each request line is `{"id", "op", "payload", "config"}`; each response line
//! is `{"id", "ok": true, "result"}` or `{"id", "ok": false, "error": {"code",
//! "message"}}`. Requests are independent and may be answered in any order.

use std::io::{BufRead, BufReader, Write};
use std::net::{SocketAddr, TcpListener};
use std::path::Path;
use std::sync::Mutex;

use serde::Deserialize;
use serde_json::{json, Value};

use crate::reward::{group_advantages, grpo_objective_from_parts, kl_surrogate, total_reward, RewardError};
use crate::types::{Label, RewardConfig, Trajectory, TrajectoryLogProbs, DEFAULT_BETA};

#[derive(Debug, Clone, PartialEq)]
pub struct BridgeError {
    pub code: &'static str,
    pub message: String,
}

impl BridgeError {
    fn schema(message: impl Into<String>) -> Self {
        Self {
            code: "SCHEMA",
            message: message.into(),
        }
    }
}

impl From<RewardError> for BridgeError {
    fn from(e: RewardError) -> Self {
        Self {
            code: e.code(),
            message: e.to_string(),
        }
    }
}

#[derive(Deserialize)]
struct TotalRewardPayload {
    trajectory: Trajectory,
    truth: Label,
}

#[derive(Deserialize)]
struct RewardsPayload {
    rewards: Vec<f64>,
}

#[derive(Deserialize)]
struct KlPayload {
    logp_ref: f64,
    logp_policy: f64,
}

#[derive(Deserialize)]
struct ObjectivePayload {
    advantages: Vec<f64>,
    logprobs: Vec<Option<TrajectoryLogProbs>>,
    #[serde(default)]
    beta: Option<f64>,
}

fn payload<T: for<'de> Deserialize<'de>>(v: &Value) -> Result<T, BridgeError> {
    serde_json::from_value(v.clone()).map_err(|e| BridgeError::schema(format!("payload: {e}")))
}

fn reward_config(config: &Value) -> Result<RewardConfig, BridgeError> {
    let cfg: RewardConfig = match config {
        Value::Null => RewardConfig::default(),
        v => serde_json::from_value(v.clone()).map_err(|e| BridgeError::schema(format!("config: {e}")))?,
    };
    cfg.validate().map_err(|m| BridgeError {
        code: "BAD_CONFIG",
        message: m,
    })?;
    Ok(cfg)
}

fn to_value<T: serde::Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("result types serialize")
}

/// Evaluates one operation. `config` may be null.
pub fn dispatch(op: &str, payload_v: &Value, config: &Value) -> Result<Value, BridgeError> {
    match op {
        "ping" => Ok(json!({"pong": true})),
        "total_reward" => {
            let p: TotalRewardPayload = payload(payload_v)?;
            let cfg = reward_config(config)?;
            Ok(to_value(&total_reward(&p.trajectory, p.truth, &cfg)))
        }
        "group_advantages" => {
            let p: RewardsPayload = payload(payload_v)?;
            Ok(to_value(&group_advantages(&p.rewards)?))
        }
        "kl_surrogate" => {
            let p: KlPayload = payload(payload_v)?;
            Ok(json!({"value": kl_surrogate(p.logp_ref, p.logp_policy)?}))
        }
        "grpo_objective" => {
            let p: ObjectivePayload = payload(payload_v)?;
            let beta = match p.beta {
                Some(b) => b,
                None => config.get("beta").and_then(Value::as_f64).unwrap_or(DEFAULT_BETA),
            };
            if !beta.is_finite() || beta < 0.0 {
                return Err(BridgeError {
                    code: "BAD_CONFIG",
                    message: format!("beta must be finite and >= 0, got {beta}"),
                });
            }
            Ok(to_value(&grpo_objective_from_parts(&p.advantages, &p.logprobs, beta)?))
        }
        other => Err(BridgeError {
            code: "UNKNOWN_OP",
            message: format!("unknown op {other:?}"),
        }),
    }
}

/// Answers one request line. Never fails: malformed lines get an error
/// response with a null id when no id could be recovered.
pub fn handle_line(line: &str) -> String {
    let (id, outcome) = match serde_json::from_str::<Value>(line) {
        Err(e) => (Value::Null, Err(BridgeError::schema(format!("request is not JSON: {e}")))),
        Ok(req) => {
            let id = req.get("id").cloned().unwrap_or(Value::Null);
            let outcome = match req.get("op").and_then(Value::as_str) {
                None => Err(BridgeError::schema("missing string field `op`")),
                Some(_) if !id.is_string() => Err(BridgeError::schema("missing string field `id`")),
                Some(op) => dispatch(
                    op,
                    req.get("payload").unwrap_or(&Value::Null),
                    req.get("config").unwrap_or(&Value::Null),
                ),
            };
            (id, outcome)
        }
    };
    let resp = match outcome {
        Ok(result) => json!({"id": id, "ok": true, "result": result}),
        Err(e) => json!({"id": id, "ok": false, "error": {"code": e.code, "message": e.message}}),
    };
    resp.to_string()
}

/// Serves requests from `input` until EOF, one response line per non-blank
/// request line.
pub fn serve<R: BufRead, W: Write>(input: R, output: &Mutex<W>) -> std::io::Result<()> {
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let resp = handle_line(&line);
        let mut out = output.lock().expect("output lock");
        writeln!(out, "{resp}")?;
        out.flush()?;
    }
    Ok(())
}

pub fn serve_stdio() -> std::io::Result<()> {
    let stdin = std::io::stdin();
    serve(stdin.lock(), &Mutex::new(std::io::stdout()))
}

/// Accepts connections forever, one thread per connection. `addr` is either a
/// TCP address such as `127.0.0.1:7070` or, on Unix, a socket file path.
pub fn serve_socket(addr: &str) -> std::io::Result<()> {
    if let Ok(sock) = addr.parse::<SocketAddr>() {
        let listener = TcpListener::bind(sock)?;
        log::info!("reward bridge listening on tcp {}", listener.local_addr()?);
        for stream in listener.incoming() {
            let stream = stream?;
            std::thread::spawn(move || {
                let reader = BufReader::new(stream.try_clone()?);
                serve(reader, &Mutex::new(stream))
            });
        }
        return Ok(());
    }
    serve_unix(Path::new(addr))
}

#[cfg(unix)]
fn serve_unix(path: &Path) -> std::io::Result<()> {
    use std::os::unix::net::UnixListener;
    if path.exists() {
        std::fs::remove_file(path)?;
    }
    let listener = UnixListener::bind(path)?;
    log::info!("reward bridge listening on {}", path.display());
    for stream in listener.incoming() {
        let stream = stream?;
        std::thread::spawn(move || {
            let reader = BufReader::new(stream.try_clone()?);
            serve(reader, &Mutex::new(stream))
        });
    }
    Ok(())
}

#[cfg(not(unix))]
fn serve_unix(path: &Path) -> std::io::Result<()> {
    Err(std::io::Error::new(
        std::io::ErrorKind::Unsupported,
        format!("{} is not a TCP address and Unix sockets are unavailable", path.display()),
    ))
}
