//! Deterministic stand-in for a model provider.
//!
//! Embeddings are hashed bags of words: every lower-cased, punctuation-stripped
//! token seeds a pseudo-random vector and a sentence is the sum of its token
//! vectors. Sentences that share words therefore get higher cosines, which is
//! enough to exercise mining end to end. All arithmetic is integer-derived, so
//! output is identical on every platform.

use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};

use super::protocol::{Request, Response};

pub const DEFAULT_MOCK_DIM: usize = 768;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MockTranslate {
    /// Return the input unchanged.
    Echo,
    /// Prefix each text with `[<tgt>] `.
    #[default]
    Tag,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MockProvider {
    pub dim: usize,
    pub translate: MockTranslate,
    /// Supported (src, tgt) pairs; `None` accepts any pair.
    pub pairs: Option<Vec<(String, String)>>,
}

impl Default for MockProvider {
    fn default() -> Self {
        MockProvider {
            dim: DEFAULT_MOCK_DIM,
            translate: MockTranslate::default(),
            pairs: None,
        }
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn mock_tokens(text: &str) -> Vec<String> {
    let tokens: Vec<String> = text
        .split_whitespace()
        .map(|t| t.trim_matches(|c: char| !c.is_alphanumeric()).to_lowercase())
        .filter(|t| !t.is_empty())
        .collect();
    if tokens.is_empty() {
        vec![text.to_string()]
    } else {
        tokens
    }
}

impl MockProvider {
    pub fn new(dim: usize) -> Self {
        MockProvider {
            dim,
            ..Default::default()
        }
    }

    pub fn embed_one(&self, text: &str) -> Vec<f32> {
        let mut v = vec![0f32; self.dim];
        for tok in mock_tokens(text) {
            let mut state = fnv1a(tok.as_bytes());
            for x in v.iter_mut() {
                // 24-bit value mapped to [-1, 1): exact in f32
                let bits = (splitmix64(&mut state) >> 40) as i32;
                *x += (bits - (1 << 23)) as f32 / (1 << 23) as f32;
            }
        }
        v
    }

    pub fn translate_one(&self, text: &str, tgt: &str) -> String {
        match self.translate {
            MockTranslate::Echo => text.to_string(),
            MockTranslate::Tag => format!("[{tgt}] {text}"),
        }
    }

    pub fn handle(&self, request: &Request) -> Response {
        match request {
            Request::Ping { id } => Response::ok(*id),
            Request::Embed { id, texts } => {
                Response::with_vectors(*id, texts.iter().map(|t| self.embed_one(t)).collect())
            }
            Request::Translate { id, src, tgt, texts } => {
                let supported = self
                    .pairs
                    .as_ref()
                    .is_none_or(|p| p.iter().any(|(s, t)| s == src && t == tgt));
                if !supported {
                    return Response::error(*id, format!("unsupported pair: {src}->{tgt}"));
                }
                Response::with_texts(*id, texts.iter().map(|t| self.translate_one(t, tgt)).collect())
            }
        }
    }

    /// Answers one protocol line. Malformed input yields an `ok:false`
    /// response carrying the request id when one can be recovered.
    pub fn handle_line(&self, line: &str) -> String {
        match serde_json::from_str::<Request>(line) {
            Ok(req) => self.handle(&req).to_line(),
            Err(e) => {
                let id = serde_json::from_str::<serde_json::Value>(line)
                    .ok()
                    .and_then(|v| v.get("id").and_then(|id| id.as_u64()))
                    .unwrap_or(0);
                Response::error(id, format!("malformed request: {e}")).to_line()
            }
        }
    }

    /// Request loop over a line stream, one response line per request line.
    pub fn serve<R: BufRead, W: Write>(&self, input: R, mut output: W) -> io::Result<()> {
        for line in input.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            writeln!(output, "{}", self.handle_line(&line))?;
            output.flush()?;
        }
        Ok(())
    }
}
