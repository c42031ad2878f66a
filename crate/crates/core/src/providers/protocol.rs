//! Newline-delimited JSON messages exchanged with a model provider.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "lowercase", deny_unknown_fields)]
pub enum Request {
    Ping {
        id: u64,
    },
    Embed {
        id: u64,
        texts: Vec<String>,
    },
    Translate {
        id: u64,
        src: String,
        tgt: String,
        texts: Vec<String>,
    },
}

impl Request {
    pub fn id(&self) -> u64 {
        match self {
            Request::Ping { id } | Request::Embed { id, .. } | Request::Translate { id, .. } => *id,
        }
    }

    pub fn op(&self) -> &'static str {
        match self {
            Request::Ping { .. } => "ping",
            Request::Embed { .. } => "embed",
            Request::Translate { .. } => "translate",
        }
    }

    /// Serializes to a single line without the trailing newline.
    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("request serialization cannot fail")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Response {
    pub id: u64,
    pub ok: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vectors: Option<Vec<Vec<f32>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub texts: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl Response {
    pub fn ok(id: u64) -> Self {
        Response {
            id,
            ok: true,
            vectors: None,
            texts: None,
            error: None,
        }
    }

    pub fn with_vectors(id: u64, vectors: Vec<Vec<f32>>) -> Self {
        Response {
            vectors: Some(vectors),
            ..Response::ok(id)
        }
    }

    pub fn with_texts(id: u64, texts: Vec<String>) -> Self {
        Response {
            texts: Some(texts),
            ..Response::ok(id)
        }
    }

    pub fn error(id: u64, message: impl Into<String>) -> Self {
        Response {
            ok: false,
            error: Some(message.into()),
            ..Response::ok(id)
        }
    }

    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("response serialization cannot fail")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wire_shapes() {
        let r = Request::Embed {
            id: 3,
            texts: vec!["a".into()],
        };
        assert_eq!(r.to_line(), r#"{"op":"embed","id":3,"texts":["a"]}"#);
        let t = Request::Translate {
            id: 4,
            src: "da".into(),
            tgt: "en".into(),
            texts: vec![],
        };
        assert_eq!(
            t.to_line(),
            r#"{"op":"translate","id":4,"src":"da","tgt":"en","texts":[]}"#
        );
        assert_eq!(Request::Ping { id: 1 }.to_line(), r#"{"op":"ping","id":1}"#);
        assert_eq!(Response::ok(1).to_line(), r#"{"id":1,"ok":true}"#);
        assert_eq!(
            Response::error(2, "boom").to_line(),
            r#"{"id":2,"ok":false,"error":"boom"}"#
        );
        let parsed: Response = serde_json::from_str(r#"{"id":7,"ok":true,"vectors":[[0.5,1]]}"#).unwrap();
        assert_eq!(parsed.vectors, Some(vec![vec![0.5, 1.0]]));
    }
}
