//! HTTP client for a judge served over the JSON wire protocol.
//!
//! `POST /judge` with `{"factor", "labels", "shape", "dtype": "f32",
//! "data"}` where `data` is base64 of the little-endian f32 payload;
//! the reply is `{"label": name}`.

use std::time::Duration;

use base64::Engine;
use serde::{Deserialize, Serialize};

use crate::data::{f32_bytes, FactorSpec};
use crate::error::{Error, Result};
use crate::judges::{check_factor, Judge};

pub const DEFAULT_TIMEOUT_MS: u64 = 30_000;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JudgeRequest {
    pub factor: String,
    pub labels: Vec<String>,
    pub shape: Vec<usize>,
    pub dtype: String,
    pub data: String,
}

impl JudgeRequest {
    pub fn new(factor: &FactorSpec, shape: Vec<usize>, payload: &[f32]) -> Self {
        Self {
            factor: factor.name.clone(),
            labels: factor.labels.clone(),
            shape,
            dtype: "f32".into(),
            data: base64::engine::general_purpose::STANDARD.encode(f32_bytes(payload)),
        }
    }

    /// Decodes the payload, checking dtype and shape.
    pub fn payload(&self) -> Result<Vec<f32>> {
        if self.dtype != "f32" {
            return Err(Error::Protocol(format!("unsupported dtype {}", self.dtype)));
        }
        let bytes = base64::engine::general_purpose::STANDARD
            .decode(&self.data)
            .map_err(|e| Error::Protocol(format!("bad base64 payload: {e}")))?;
        let n: usize = self.shape.iter().product();
        if bytes.len() != n * 4 {
            return Err(Error::Protocol(format!(
                "payload has {} bytes, shape {:?} needs {}",
                bytes.len(),
                self.shape,
                n * 4
            )));
        }
        Ok(bytes
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct JudgeResponse {
    pub label: String,
}

pub struct RemoteJudge {
    endpoint: String,
    factors: Vec<FactorSpec>,
    seq_len: usize,
    frame_shape: Vec<usize>,
    timeout_ms: u64,
    retries: usize,
    agent: ureq::Agent,
}

impl RemoteJudge {
    /// `endpoint` is the server root, e.g. `http://127.0.0.1:8080`.
    pub fn new(endpoint: &str, factors: Vec<FactorSpec>, seq_len: usize, frame_shape: Vec<usize>) -> Self {
        Self::with_limits(endpoint, factors, seq_len, frame_shape, DEFAULT_TIMEOUT_MS, 0)
    }

    pub fn with_limits(
        endpoint: &str,
        factors: Vec<FactorSpec>,
        seq_len: usize,
        frame_shape: Vec<usize>,
        timeout_ms: u64,
        retries: usize,
    ) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_millis(timeout_ms)))
            .http_status_as_error(false)
            .build()
            .into();
        Self {
            endpoint: endpoint.trim_end_matches('/').to_string(),
            factors,
            seq_len,
            frame_shape,
            timeout_ms,
            retries,
            agent,
        }
    }

    fn request(&self, factor: usize, shape: Vec<usize>, payload: &[f32]) -> Result<u32> {
        check_factor(&self.factors, factor)?;
        let spec = &self.factors[factor];
        let body = JudgeRequest::new(spec, shape, payload);
        let url = format!("{}/judge", self.endpoint);
        let mut last = None;
        for _ in 0..=self.retries {
            match self.send(&url, &body) {
                Ok(name) => {
                    return spec.label_index(&name).map(|i| i as u32).ok_or_else(|| {
                        Error::Protocol(format!("label {name:?} is not in the label space of {}", spec.name))
                    })
                }
                Err(e @ (Error::Timeout(_) | Error::Io(_))) => last = Some(e),
                Err(e) => return Err(e),
            }
        }
        Err(last.expect("at least one attempt"))
    }

    fn send(&self, url: &str, body: &JudgeRequest) -> Result<String> {
        let mut resp = self.agent.post(url).send_json(body).map_err(|e| self.map_err(e))?;
        let status = resp.status().as_u16();
        let text = resp.body_mut().read_to_string().map_err(|e| self.map_err(e))?;
        if status != 200 {
            return Err(Error::Protocol(format!("judge server answered {status}: {text}")));
        }
        let parsed: JudgeResponse =
            serde_json::from_str(&text).map_err(|e| Error::Protocol(format!("malformed judge reply: {e}")))?;
        Ok(parsed.label)
    }

    fn map_err(&self, e: ureq::Error) -> Error {
        match e {
            ureq::Error::Timeout(_) => Error::Timeout(self.timeout_ms),
            ureq::Error::Io(io) => Error::Io(io),
            ureq::Error::ConnectionFailed | ureq::Error::HostNotFound => {
                Error::Io(std::io::Error::new(std::io::ErrorKind::ConnectionRefused, format!("{e}")))
            }
            other => Error::Protocol(other.to_string()),
        }
    }
}

impl Judge for RemoteJudge {
    fn factors(&self) -> &[FactorSpec] {
        &self.factors
    }

    fn judge(&self, x: &[f32], factor: usize) -> Result<u32> {
        let mut shape = vec![self.seq_len];
        shape.extend(&self.frame_shape);
        self.request(factor, shape, x)
    }

    fn judge_frame(&self, frame: &[f32], factor: usize) -> Result<u32> {
        self.request(factor, self.frame_shape.clone(), frame)
    }
}
