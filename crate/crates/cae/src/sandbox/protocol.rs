use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnitSource {
    pub name: String,
    pub source: String,
}

/// One request line of the shim wire protocol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "lowercase")]
pub enum Message {
    Load { units: Vec<UnitSource>, entrypoint: String },
    Call { request: Value },
    Shutdown,
}

/// One response line. `response` accompanies a successful call, `traceback`
/// a failed one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reply {
    pub ok: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response: Option<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub traceback: Option<String>,
}

impl Reply {
    pub fn ok() -> Self {
        Reply {
            ok: true,
            response: None,
            error: None,
            traceback: None,
        }
    }

    pub fn response(value: Value) -> Self {
        Reply {
            response: Some(value),
            ..Reply::ok()
        }
    }

    pub fn error(message: impl Into<String>) -> Self {
        Reply {
            ok: false,
            response: None,
            error: Some(message.into()),
            traceback: None,
        }
    }

    pub fn raised(message: impl Into<String>, traceback: impl Into<String>) -> Self {
        Reply {
            traceback: Some(traceback.into()),
            ..Reply::error(message)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn wire_shapes() {
        let load = Message::Load {
            units: vec![UnitSource {
                name: "f".into(),
                source: "k = 1".into(),
            }],
            entrypoint: "f".into(),
        };
        assert_eq!(
            serde_json::to_value(&load).unwrap(),
            json!({"op": "load", "units": [{"name": "f", "source": "k = 1"}], "entrypoint": "f"})
        );
        assert_eq!(serde_json::to_string(&Message::Shutdown).unwrap(), r#"{"op":"shutdown"}"#);
        assert_eq!(serde_json::to_string(&Reply::ok()).unwrap(), r#"{"ok":true}"#);
        let r: Reply = serde_json::from_str(r#"{"ok":false,"error":"boom","traceback":"tb"}"#).unwrap();
        assert_eq!(r, Reply::raised("boom", "tb"));
    }
}
