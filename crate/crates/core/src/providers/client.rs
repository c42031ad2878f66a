use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::thread;
use std::time::Duration;

use thiserror::Error;

use super::matrix::{EmbeddingError, EmbeddingMatrix};
use super::mock::MockProvider;
use super::protocol::{Request, Response};

pub const DEFAULT_EMBED_BATCH: usize = 100;
pub const DEFAULT_TRANSLATE_BATCH: usize = 32;

#[derive(Debug, Error)]
pub enum ProviderError {
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("provider did not answer within {0:?}")]
    Timeout(Duration),
    #[error("malformed response: {0}")]
    Malformed(String),
    #[error("provider error: {0}")]
    Remote(String),
    #[error("provider does not support {src}->{tgt}: {message}")]
    UnsupportedPair {
        src: String,
        tgt: String,
        message: String,
    },
    #[error("embedding dimension changed from {expected} to {found}")]
    DimensionDrift { expected: usize, found: usize },
    #[error("sent {expected} texts, got {found} results back")]
    LengthMismatch { expected: usize, found: usize },
    #[error("invalid provider options: {0}")]
    Config(String),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
}

/// Moves one request line to a provider and returns its response line.
pub trait Transport: Send {
    fn round_trip(&mut self, line: &str, timeout: Duration) -> Result<String, ProviderError>;
}

/// Provider in the same process, still going through the wire encoding.
pub struct InProcessTransport(pub MockProvider);

impl Transport for InProcessTransport {
    fn round_trip(&mut self, line: &str, _timeout: Duration) -> Result<String, ProviderError> {
        Ok(self.0.handle_line(line))
    }
}

/// Child process speaking the protocol on stdin/stdout.
pub struct ProcessTransport {
    child: Child,
    stdin: ChildStdin,
    lines: Receiver<std::io::Result<String>>,
}

impl ProcessTransport {
    pub fn spawn(command: &[String]) -> Result<Self, ProviderError> {
        let (program, args) = command
            .split_first()
            .ok_or_else(|| ProviderError::Config("empty provider command".into()))?;
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| ProviderError::Transport(format!("cannot start `{program}`: {e}")))?;
        let stdin = child.stdin.take().expect("stdin is piped");
        let stdout = child.stdout.take().expect("stdout is piped");
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                if tx.send(line).is_err() {
                    break;
                }
            }
        });
        Ok(ProcessTransport {
            child,
            stdin,
            lines: rx,
        })
    }
}

impl Transport for ProcessTransport {
    fn round_trip(&mut self, line: &str, timeout: Duration) -> Result<String, ProviderError> {
        writeln!(self.stdin, "{line}")
            .and_then(|_| self.stdin.flush())
            .map_err(|e| ProviderError::Transport(format!("write to provider: {e}")))?;
        match self.lines.recv_timeout(timeout) {
            Ok(Ok(line)) => Ok(line),
            Ok(Err(e)) => Err(ProviderError::Transport(format!("read from provider: {e}"))),
            Err(RecvTimeoutError::Timeout) => Err(ProviderError::Timeout(timeout)),
            Err(RecvTimeoutError::Disconnected) => {
                Err(ProviderError::Transport("provider closed its output".into()))
            }
        }
    }
}

impl Drop for ProcessTransport {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// `POST <base>/rpc` with one JSON request per call.
pub struct HttpTransport {
    agent: ureq::Agent,
    url: String,
}

impl HttpTransport {
    pub fn new(base_url: &str, timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        HttpTransport {
            agent,
            url: format!("{}/rpc", base_url.trim_end_matches('/')),
        }
    }
}

impl Transport for HttpTransport {
    fn round_trip(&mut self, line: &str, timeout: Duration) -> Result<String, ProviderError> {
        let mut resp = self
            .agent
            .post(&self.url)
            .header("Content-Type", "application/json")
            .send(line)
            .map_err(|e| match e {
                ureq::Error::Timeout(_) => ProviderError::Timeout(timeout),
                e => ProviderError::Transport(e.to_string()),
            })?;
        let status = resp.status();
        let body = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| ProviderError::Transport(e.to_string()))?;
        if !status.is_success() && body.trim().is_empty() {
            return Err(ProviderError::Transport(format!("HTTP {status}")));
        }
        Ok(body.trim_end().to_string())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProviderOptions {
    pub timeout: Duration,
    pub embed_batch: usize,
    pub translate_batch: usize,
    /// Reject embeddings whose dimension differs from this.
    pub expected_dim: Option<usize>,
}

impl Default for ProviderOptions {
    fn default() -> Self {
        ProviderOptions {
            timeout: Duration::from_secs(120),
            embed_batch: DEFAULT_EMBED_BATCH,
            translate_batch: DEFAULT_TRANSLATE_BATCH,
            expected_dim: None,
        }
    }
}

/// Client for one provider connection. Requests are strictly sequential.
pub struct ProviderHandle {
    transport: Box<dyn Transport>,
    opts: ProviderOptions,
    next_id: u64,
    sent: Vec<(&'static str, usize)>,
}

impl ProviderHandle {
    pub fn new(transport: Box<dyn Transport>, opts: ProviderOptions) -> Result<Self, ProviderError> {
        if opts.timeout.is_zero() {
            return Err(ProviderError::Config("timeout must be positive".into()));
        }
        if opts.embed_batch == 0 || opts.translate_batch == 0 {
            return Err(ProviderError::Config("batch sizes must be at least 1".into()));
        }
        Ok(ProviderHandle {
            transport,
            opts,
            next_id: 1,
            sent: Vec::new(),
        })
    }

    pub fn mock(provider: MockProvider, opts: ProviderOptions) -> Result<Self, ProviderError> {
        Self::new(Box::new(InProcessTransport(provider)), opts)
    }

    pub fn spawn(command: &[String], opts: ProviderOptions) -> Result<Self, ProviderError> {
        Self::new(Box::new(ProcessTransport::spawn(command)?), opts)
    }

    pub fn http(base_url: &str, opts: ProviderOptions) -> Result<Self, ProviderError> {
        let timeout = opts.timeout;
        Self::new(Box::new(HttpTransport::new(base_url, timeout)), opts)
    }

    pub fn options(&self) -> &ProviderOptions {
        &self.opts
    }

    /// `(op, number of texts)` for every request sent so far.
    pub fn request_log(&self) -> &[(&'static str, usize)] {
        &self.sent
    }

    fn call(&mut self, make: impl FnOnce(u64) -> Request) -> Result<Response, ProviderError> {
        let id = self.next_id;
        self.next_id += 1;
        let request = make(id);
        let size = match &request {
            Request::Ping { .. } => 0,
            Request::Embed { texts, .. } | Request::Translate { texts, .. } => texts.len(),
        };
        self.sent.push((request.op(), size));
        let line = self.transport.round_trip(&request.to_line(), self.opts.timeout)?;
        let response: Response = serde_json::from_str(line.trim())
            .map_err(|e| ProviderError::Malformed(format!("{e}: {line}")))?;
        if response.id != id {
            return Err(ProviderError::Malformed(format!(
                "response id {} does not match request id {id}",
                response.id
            )));
        }
        Ok(response)
    }

    fn remote_error(response: &Response) -> ProviderError {
        ProviderError::Remote(response.error.clone().unwrap_or_else(|| "unspecified".into()))
    }

    pub fn ping(&mut self) -> Result<(), ProviderError> {
        let r = self.call(|id| Request::Ping { id })?;
        if r.ok {
            Ok(())
        } else {
            Err(Self::remote_error(&r))
        }
    }

    /// Embeds `texts` in batches; rows come back in input order, normalized.
    pub fn embed_texts(&mut self, texts: &[String]) -> Result<EmbeddingMatrix, ProviderError> {
        let mut dim = self.opts.expected_dim;
        let mut out = EmbeddingMatrix::empty(dim.unwrap_or(0));
        for batch in texts.chunks(self.opts.embed_batch) {
            let r = self.call(|id| Request::Embed {
                id,
                texts: batch.to_vec(),
            })?;
            if !r.ok {
                return Err(Self::remote_error(&r));
            }
            let vectors = r
                .vectors
                .ok_or_else(|| ProviderError::Malformed("embed response without vectors".into()))?;
            if vectors.len() != batch.len() {
                return Err(ProviderError::LengthMismatch {
                    expected: batch.len(),
                    found: vectors.len(),
                });
            }
            for v in &vectors {
                match dim {
                    None if v.is_empty() => {
                        return Err(ProviderError::Malformed("zero-length vector".into()))
                    }
                    None => dim = Some(v.len()),
                    Some(d) if d != v.len() => {
                        return Err(ProviderError::DimensionDrift {
                            expected: d,
                            found: v.len(),
                        })
                    }
                    Some(_) => {}
                }
            }
            let offset = out.n();
            let part = EmbeddingMatrix::from_rows(&vectors).map_err(|e| match e {
                EmbeddingError::ZeroVector { row } => EmbeddingError::ZeroVector { row: row + offset },
                EmbeddingError::NonFinite { row } => EmbeddingError::NonFinite { row: row + offset },
                e => e,
            })?;
            out.append(part)?;
        }
        Ok(out)
    }

    /// Translates `texts` in batches, preserving order and length.
    pub fn translate_texts(
        &mut self,
        texts: &[String],
        src: &str,
        tgt: &str,
    ) -> Result<Vec<String>, ProviderError> {
        let mut out = Vec::with_capacity(texts.len());
        for batch in texts.chunks(self.opts.translate_batch) {
            let r = self.call(|id| Request::Translate {
                id,
                src: src.to_string(),
                tgt: tgt.to_string(),
                texts: batch.to_vec(),
            })?;
            if !r.ok {
                let message = r.error.clone().unwrap_or_default();
                if message.starts_with("unsupported") {
                    return Err(ProviderError::UnsupportedPair {
                        src: src.to_string(),
                        tgt: tgt.to_string(),
                        message,
                    });
                }
                return Err(Self::remote_error(&r));
            }
            let translated = r
                .texts
                .ok_or_else(|| ProviderError::Malformed("translate response without texts".into()))?;
            if translated.len() != batch.len() {
                return Err(ProviderError::LengthMismatch {
                    expected: batch.len(),
                    found: translated.len(),
                });
            }
            out.extend(translated);
        }
        Ok(out)
    }
}
