//! Two ways to reach the gateway API: over HTTP, or in process against the
//! same router with no socket involved.

use axum::body::{to_bytes, Body};
use axum::http::{header, Request};
use axum::Router;
use credito_gateway::{open_node, router, GatewayError, ServiceConfig, Shared};
use serde_json::Value;
use thiserror::Error;
use tower::ServiceExt;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Get,
    Post,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Get => "GET",
            Method::Post => "POST",
        }
    }
}

#[derive(Debug, Error)]
pub enum TransportError {
    #[error("request to {url} failed: {reason}")]
    Http { url: String, reason: String },
    #[error("response is not JSON: {0}")]
    Body(String),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

/// Status code and JSON body of one API call.
pub type Reply = (u16, Value);

pub trait Transport {
    fn call(&mut self, method: Method, path: &str, body: Option<&Value>) -> Result<Reply, TransportError>;

    fn get(&mut self, path: &str) -> Result<Reply, TransportError> {
        self.call(Method::Get, path, None)
    }
}

pub struct Remote {
    base: String,
    agent: ureq::Agent,
}

impl Remote {
    pub fn new(base: &str) -> Self {
        let agent = ureq::Agent::config_builder().http_status_as_error(false).build().new_agent();
        Remote { base: base.trim_end_matches('/').to_owned(), agent }
    }
}

impl Transport for Remote {
    fn call(&mut self, method: Method, path: &str, body: Option<&Value>) -> Result<Reply, TransportError> {
        let url = format!("{}{path}", self.base);
        let http = |e: ureq::Error| TransportError::Http { url: url.clone(), reason: e.to_string() };
        let mut resp = match method {
            Method::Get => self.agent.get(&url).call().map_err(http)?,
            Method::Post => self.agent.post(&url).send_json(body.unwrap_or(&Value::Null)).map_err(http)?,
        };
        let status = resp.status().as_u16();
        let value = resp.body_mut().read_json().map_err(|e| TransportError::Body(e.to_string()))?;
        Ok((status, value))
    }
}

/// The gateway router driven directly, on a private single-threaded runtime.
pub struct Embedded {
    rt: tokio::runtime::Runtime,
    app: Router,
    node: Shared,
}

impl Embedded {
    pub fn new(config: &ServiceConfig) -> Result<Self, TransportError> {
        let (node, _) = open_node(config)?;
        let rt = tokio::runtime::Builder::new_current_thread().build().expect("runtime");
        Ok(Embedded { rt, app: router(node.clone()), node })
    }

    pub fn node(&self) -> &Shared {
        &self.node
    }
}

impl Transport for Embedded {
    fn call(&mut self, method: Method, path: &str, body: Option<&Value>) -> Result<Reply, TransportError> {
        let bytes = body.map(|b| serde_json::to_vec(b).expect("json")).unwrap_or_default();
        let req = Request::builder()
            .method(method.as_str())
            .uri(path)
            .header(header::CONTENT_TYPE, "application/json")
            .body(Body::from(bytes))
            .map_err(|e| TransportError::Http { url: path.to_owned(), reason: e.to_string() })?;
        let app = self.app.clone();
        self.rt.block_on(async move {
            let resp = app.oneshot(req).await.expect("router is infallible");
            let status = resp.status().as_u16();
            let bytes = to_bytes(resp.into_body(), usize::MAX).await.map_err(|e| TransportError::Body(e.to_string()))?;
            let value = serde_json::from_slice(&bytes).map_err(|e| TransportError::Body(e.to_string()))?;
            Ok((status, value))
        })
    }
}

/// Percent-encodes one path segment.
pub fn segment(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for b in s.bytes() {
        if b.is_ascii_alphanumeric() || matches!(b, b'-' | b'_' | b'.' | b'~') {
            out.push(b as char);
        } else {
            out.push_str(&format!("%{b:02X}"));
        }
    }
    out
}
