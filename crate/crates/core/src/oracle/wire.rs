//! Newline-delimited JSON protocol spoken with external oracles.
//!
//! ```text
//! → {"id":0,"op":"meta"}
//! ← {"id":0,"latent_dim":8,"num_classes":5}
//! → {"id":1,"op":"query","codes":[[0.1,-0.2,...],...]}
//! ← {"id":1,"probs":[[0.2,0.8,...],...]}
//! ← {"id":<id>,"error":"<message>"}
//! ```
//!
//! One UTF-8 object per LF-terminated line. Floats use the shortest
//! representation that round-trips exactly. Ids strictly increase per
//! connection and responses come back in request order.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::OracleBackend;

pub const OP_META: &str = "meta";
pub const OP_QUERY: &str = "query";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Request {
    pub id: u64,
    pub op: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub codes: Option<Vec<Vec<f64>>>,
}

impl Request {
    pub fn meta(id: u64) -> Self {
        Self {
            id,
            op: OP_META.into(),
            codes: None,
        }
    }

    pub fn query(id: u64, codes: Vec<Vec<f64>>) -> Self {
        Self {
            id,
            op: OP_QUERY.into(),
            codes: Some(codes),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
struct MetaResponse {
    id: u64,
    latent_dim: usize,
    num_classes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
struct QueryResponse<'a> {
    id: u64,
    probs: &'a [Vec<f64>],
}

#[derive(Debug, Clone, PartialEq, Serialize)]
struct ErrorResponse<'a> {
    id: u64,
    error: &'a str,
}

/// Any response line, as read by a client.
#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct Response {
    pub id: u64,
    #[serde(default)]
    pub latent_dim: Option<usize>,
    #[serde(default)]
    pub num_classes: Option<usize>,
    #[serde(default)]
    pub probs: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub error: Option<String>,
}

pub fn encode<T: Serialize>(message: &T) -> String {
    serde_json::to_string(message).expect("protocol messages always serialize")
}

pub fn meta_response(id: u64, latent_dim: usize, num_classes: usize) -> String {
    encode(&MetaResponse {
        id,
        latent_dim,
        num_classes,
    })
}

pub fn query_response(id: u64, probs: &[Vec<f64>]) -> String {
    encode(&QueryResponse { id, probs })
}

pub fn error_response(id: u64, message: &str) -> String {
    encode(&ErrorResponse { id, error: message })
}

/// Answers one request line. Malformed lines yield an error response
/// carrying the request id when one can be recovered, else id 0.
pub fn handle_line(backend: &mut dyn OracleBackend, line: &str) -> String {
    let value: serde_json::Value = match serde_json::from_str(line) {
        Ok(v) => v,
        Err(e) => return error_response(0, &format!("malformed request: {e}")),
    };
    let id = value.get("id").and_then(serde_json::Value::as_u64).unwrap_or(0);
    let request: Request = match serde_json::from_value(value) {
        Ok(r) => r,
        Err(e) => return error_response(id, &format!("malformed request: {e}")),
    };
    match request.op.as_str() {
        OP_META => meta_response(id, backend.latent_dim(), backend.num_classes()),
        OP_QUERY => {
            let Some(codes) = request.codes else {
                return error_response(id, "query request without codes");
            };
            let n = backend.latent_dim();
            if let Some(bad) = codes.iter().position(|c| c.len() != n) {
                return error_response(
                    id,
                    &format!("code {bad} has length {}, expected {n}", codes[bad].len()),
                );
            }
            match backend.evaluate(&codes) {
                Ok(probs) => query_response(id, &probs),
                Err(e) => error_response(id, &e.to_string()),
            }
        }
        other => error_response(id, &format!("unknown op {other:?}")),
    }
}

/// Serves requests from `reader` until end of input, one response line per
/// non-empty request line.
pub fn serve<R: BufRead, W: Write>(
    backend: &mut dyn OracleBackend,
    reader: R,
    mut writer: W,
) -> std::io::Result<()> {
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let response = handle_line(backend, &line);
        writer.write_all(response.as_bytes())?;
        writer.write_all(b"\n")?;
        writer.flush()?;
    }
    Ok(())
}
