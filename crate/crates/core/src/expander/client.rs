use std::time::Duration;

use serde::{Deserialize, Serialize};

pub const SYSTEM_MESSAGE: &str = "You are a helpful assistant.";

/// Instruction preceding the section text in the user turn.
pub const INSTRUCTION: &str = "Expand all acronyms to their full forms while preserving all the details in the following paragraph, do not mention the acronyms again. Paragraph: ";

/// Pre-seeded start of the assistant turn.
pub const ASSISTANT_PREFIX: &str = "Here is the paragraph with all acronyms expanded to their full forms:";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

impl ChatMessage {
    fn new(role: &str, content: impl Into<String>) -> Self {
        ChatMessage {
            role: role.to_owned(),
            content: content.into(),
        }
    }
}

/// Body of a chat-completions request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_tokens: Option<u32>,
}

impl ChatRequest {
    /// The three-turn expansion prompt for one paragraph.
    pub fn expansion(model: &str, paragraph: &str, temperature: f64, max_tokens: Option<u32>) -> Self {
        ChatRequest {
            model: model.to_owned(),
            messages: vec![
                ChatMessage::new("system", SYSTEM_MESSAGE),
                ChatMessage::new("user", user_message(paragraph)),
                ChatMessage::new("assistant", ASSISTANT_PREFIX),
            ],
            temperature,
            max_tokens,
        }
    }

    /// Bytes identifying the prompt for caching: every message, role and
    /// content, separated by NUL.
    pub fn prompt_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        for m in &self.messages {
            out.extend_from_slice(m.role.as_bytes());
            out.push(0);
            out.extend_from_slice(m.content.as_bytes());
            out.push(0);
        }
        out
    }
}

pub fn user_message(paragraph: &str) -> String {
    format!("{INSTRUCTION}{paragraph}")
}

#[derive(Debug, Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Debug, Deserialize)]
struct Choice {
    message: ChatMessage,
}

/// Extracts the first choice's message text from a chat-completions response body.
pub fn parse_response(body: &str) -> Result<String, String> {
    let response: ChatResponse = serde_json::from_str(body).map_err(|e| format!("malformed response: {e}"))?;
    response
        .choices
        .into_iter()
        .next()
        .map(|c| c.message.content)
        .ok_or_else(|| "response has no choices".to_owned())
}

/// Removes an echoed assistant prefix (and anything before it) from a reply.
pub fn clean_response(reply: &str) -> &str {
    let reply = match reply.find(ASSISTANT_PREFIX) {
        Some(at) => &reply[at + ASSISTANT_PREFIX.len()..],
        None => reply,
    };
    reply.trim()
}

/// Anything that can answer a chat request with the reply text.
pub trait ChatEndpoint: Send + Sync {
    fn complete(&self, request: &ChatRequest) -> Result<String, String>;
}

/// Chat-completions endpoint reached over HTTP.
pub struct HttpEndpoint {
    url: String,
    api_key: Option<String>,
    client: reqwest::blocking::Client,
}

impl HttpEndpoint {
    pub fn new(url: impl Into<String>, api_key: Option<String>, timeout: Duration) -> crate::Result<Self> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| crate::Error::InvalidArgument(format!("http client: {e}")))?;
        Ok(HttpEndpoint {
            url: url.into(),
            api_key,
            client,
        })
    }
}

impl ChatEndpoint for HttpEndpoint {
    fn complete(&self, request: &ChatRequest) -> Result<String, String> {
        let mut req = self.client.post(&self.url).json(request);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| e.to_string())?;
        let status = resp.status();
        let body = resp.text().map_err(|e| e.to_string())?;
        if !status.is_success() {
            return Err(format!("HTTP {status}: {}", body.chars().take(200).collect::<String>()));
        }
        parse_response(&body)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn request_layout() {
        let req = ChatRequest::expansion("llama-3.1-70b", "severe oa", 0.0, None);
        let json = serde_json::to_value(&req).unwrap();
        assert_eq!(json["model"], "llama-3.1-70b");
        assert_eq!(json["messages"][0]["role"], "system");
        assert_eq!(json["messages"][0]["content"], "You are a helpful assistant.");
        assert_eq!(
            json["messages"][1]["content"],
            "Expand all acronyms to their full forms while preserving all the details in the following paragraph, do not mention the acronyms again. Paragraph: severe oa"
        );
        assert_eq!(json["messages"][2]["role"], "assistant");
        assert_eq!(
            json["messages"][2]["content"],
            "Here is the paragraph with all acronyms expanded to their full forms:"
        );
        assert!(json.get("max_tokens").is_none());
    }

    #[test]
    fn response_cleaning() {
        assert_eq!(clean_response("  severe osteoarthritis\n"), "severe osteoarthritis");
        assert_eq!(
            clean_response("Here is the paragraph with all acronyms expanded to their full forms:\n\nsevere osteoarthritis"),
            "severe osteoarthritis"
        );
        assert_eq!(
            clean_response("Sure! Here is the paragraph with all acronyms expanded to their full forms: x"),
            "x"
        );
    }

    #[test]
    fn parses_first_choice() {
        let body = r#"{"id":"1","choices":[{"index":0,"message":{"role":"assistant","content":"a"}},{"index":1,"message":{"role":"assistant","content":"b"}}]}"#;
        assert_eq!(parse_response(body).unwrap(), "a");
        assert!(parse_response(r#"{"choices":[]}"#).is_err());
        assert!(parse_response("not json").is_err());
    }
}
