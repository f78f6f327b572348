use std::io::Read;
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Duration;

use serde_json::Value;

use super::mock::MockBackend;
use super::{GatewayError, Transport};

/// JSON-over-HTTP transport. A connection failure is retried once; HTTP
/// error statuses are returned as they are.
pub struct HttpTransport {
    base_url: String,
    agent: ureq::Agent,
}

impl HttpTransport {
    pub fn new(base_url: &str, timeout: Duration) -> Self {
        let agent = ureq::AgentBuilder::new().timeout(timeout).build();
        Self {
            base_url: base_url.trim_end_matches('/').to_string(),
            agent,
        }
    }

    fn once(&self, url: &str, body: &Value) -> Result<Value, Attempt> {
        match self.agent.post(url).send_json(body) {
            Ok(resp) => resp.into_json::<Value>().map_err(|e| Attempt::Reply(e.to_string())),
            Err(ureq::Error::Status(status, resp)) => {
                let mut text = String::new();
                let _ = resp.into_reader().take(64 * 1024).read_to_string(&mut text);
                Err(Attempt::Status(status, text))
            }
            Err(ureq::Error::Transport(t)) => Err(Attempt::Transport(t.to_string())),
        }
    }
}

enum Attempt {
    Transport(String),
    Status(u16, String),
    Reply(String),
}

impl Transport for HttpTransport {
    fn post(&self, endpoint: &str, body: &Value) -> Result<Value, GatewayError> {
        let url = format!("{}{endpoint}", self.base_url);
        let mut result = self.once(&url, body);
        if let Err(Attempt::Transport(_)) = result {
            log::debug!("retrying {url} after a connection failure");
            result = self.once(&url, body);
        }
        result.map_err(|a| match a {
            Attempt::Transport(message) => GatewayError::Unreachable {
                url: self.base_url.clone(),
                message,
            },
            Attempt::Status(status, body) => GatewayError::Status { status, body },
            Attempt::Reply(detail) => GatewayError::Protocol {
                endpoint: endpoint.to_string(),
                detail,
            },
        })
    }
}

/// Serves a [`MockBackend`] on an ephemeral loopback port until dropped.
pub struct LoopbackServer {
    server: Arc<tiny_http::Server>,
    url: String,
    worker: Option<JoinHandle<()>>,
}

impl LoopbackServer {
    pub fn start(backend: Arc<MockBackend>) -> std::io::Result<Self> {
        let server = tiny_http::Server::http("127.0.0.1:0").map_err(std::io::Error::other)?;
        let port = server
            .server_addr()
            .to_ip()
            .map(|a| a.port())
            .ok_or_else(|| std::io::Error::other("loopback server has no IP address"))?;
        let server = Arc::new(server);
        let srv = Arc::clone(&server);
        let worker = std::thread::spawn(move || {
            for mut req in srv.incoming_requests() {
                let endpoint = req.url().to_string();
                let mut text = String::new();
                let reply = if *req.method() != tiny_http::Method::Post {
                    Err((405, "only POST is supported".to_string()))
                } else if req.as_reader().read_to_string(&mut text).is_err() {
                    Err((400, "body is not UTF-8".to_string()))
                } else {
                    match serde_json::from_str::<Value>(&text) {
                        Ok(body) => backend.handle(&endpoint, &body),
                        Err(e) => Err((400, e.to_string())),
                    }
                };
                let (status, payload) = match reply {
                    Ok(v) => (200, v.to_string()),
                    Err((s, msg)) => (s, msg),
                };
                let header = tiny_http::Header::from_bytes(&b"Content-Type"[..], &b"application/json"[..])
                    .expect("static header");
                let response = tiny_http::Response::from_string(payload)
                    .with_status_code(status)
                    .with_header(header);
                let _ = req.respond(response);
            }
        });
        Ok(Self {
            server,
            url: format!("http://127.0.0.1:{port}"),
            worker: Some(worker),
        })
    }

    pub fn url(&self) -> &str {
        &self.url
    }
}

impl Drop for LoopbackServer {
    fn drop(&mut self) {
        self.server.unblock();
        if let Some(w) = self.worker.take() {
            let _ = w.join();
        }
    }
}
