//! HTTP clients for chat-completions and embeddings endpoints.
//!
//! Request body sent to `{base_url}/chat/completions`:
//!
//! ```json
//! {"model": "...", "messages": [{"role": "system", "content": "..."},
//!                               {"role": "user", "content": "..."}],
//!  "temperature": 0.7, "max_tokens": 512}
//! ```
//!
//! The system message is omitted when the system prompt is empty. The reply
//! text is read from `choices[0].message.content`. When the environment
//! variable named by `api_key_env` is set, its value is sent as a bearer
//! token; credentials are never read from config files.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::embedder::Embedding;

/// Sampling parameters forwarded to a completion endpoint.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecodingParams {
    pub temperature: f64,
    pub max_output_tokens: u32,
}

impl Default for DecodingParams {
    fn default() -> Self {
        Self {
            temperature: 0.7,
            max_output_tokens: 512,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ClientError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("endpoint returned status {0}")]
    Status(u16),
    #[error("unexpected response: {0}")]
    BadResponse(String),
    #[error("{0}")]
    Other(String),
}

impl From<ureq::Error> for ClientError {
    fn from(e: ureq::Error) -> Self {
        match e {
            ureq::Error::StatusCode(code) => ClientError::Status(code),
            other => ClientError::Transport(other.to_string()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EndpointConfig {
    pub base_url: String,
    pub model: String,
    /// Name of the environment variable holding the bearer token.
    pub api_key_env: String,
    pub timeout_secs: u64,
}

impl Default for EndpointConfig {
    fn default() -> Self {
        Self {
            base_url: "http://127.0.0.1:8000/v1".into(),
            model: "gpt-4".into(),
            api_key_env: "QFINE_API_KEY".into(),
            timeout_secs: 120,
        }
    }
}

#[derive(Serialize)]
struct ChatMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: Vec<ChatMessage<'a>>,
    temperature: f64,
    max_tokens: u32,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatReply,
}

#[derive(Deserialize)]
struct ChatReply {
    content: Option<String>,
}

fn agent(timeout_secs: u64) -> ureq::Agent {
    ureq::Agent::config_builder()
        .timeout_global(Some(Duration::from_secs(timeout_secs)))
        .build()
        .into()
}

fn endpoint(base: &str, path: &str) -> String {
    format!("{}/{}", base.trim_end_matches('/'), path)
}

/// Blocking client for an OpenAI-style chat-completions endpoint.
#[derive(Clone, Debug)]
pub struct ChatCompletionsClient {
    config: EndpointConfig,
    agent: ureq::Agent,
}

impl ChatCompletionsClient {
    pub fn new(config: EndpointConfig) -> Self {
        let agent = agent(config.timeout_secs);
        Self { config, agent }
    }

    pub fn config(&self) -> &EndpointConfig {
        &self.config
    }

    pub fn chat(
        &self,
        system_prompt: &str,
        user_prompt: &str,
        decoding: &DecodingParams,
    ) -> Result<String, ClientError> {
        let mut messages = Vec::with_capacity(2);
        if !system_prompt.is_empty() {
            messages.push(ChatMessage {
                role: "system",
                content: system_prompt,
            });
        }
        messages.push(ChatMessage {
            role: "user",
            content: user_prompt,
        });
        let body = ChatRequest {
            model: &self.config.model,
            messages,
            temperature: decoding.temperature,
            max_tokens: decoding.max_output_tokens,
        };
        let mut req = self
            .agent
            .post(endpoint(&self.config.base_url, "chat/completions"));
        if let Ok(key) = std::env::var(&self.config.api_key_env) {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let resp: ChatResponse = req
            .send_json(&body)?
            .into_body()
            .read_json()
            .map_err(|e| ClientError::BadResponse(e.to_string()))?;
        resp.choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| ClientError::BadResponse("no choices[0].message.content".into()))
    }
}

impl crate::querygen::GenerationClient for ChatCompletionsClient {
    fn complete(
        &self,
        system_prompt: &str,
        user_prompt: &str,
        decoding: &DecodingParams,
    ) -> Result<String, ClientError> {
        self.chat(system_prompt, user_prompt, decoding)
    }
}

impl crate::ragpipe::GeneratorClient for ChatCompletionsClient {
    fn complete(
        &self,
        prompt: &crate::ragpipe::PromptBundle,
        decoding: &DecodingParams,
    ) -> Result<String, ClientError> {
        self.chat(&prompt.system_text, &prompt.user_text, decoding)
    }
}

#[derive(Serialize)]
struct EmbeddingRequest<'a> {
    model: &'a str,
    input: &'a str,
}

#[derive(Deserialize)]
struct EmbeddingResponse {
    data: Vec<EmbeddingDatum>,
}

#[derive(Deserialize)]
struct EmbeddingDatum {
    embedding: Vec<f64>,
}

/// Embeds text with a remote pretrained model through an OpenAI-style
/// `{base_url}/embeddings` endpoint (`{"model", "input"}` in,
/// `data[0].embedding` out). Results are L2-normalized like local embeddings.
#[derive(Clone, Debug)]
pub struct ExternalEmbeddingClient {
    config: EndpointConfig,
    agent: ureq::Agent,
}

impl ExternalEmbeddingClient {
    pub fn new(config: EndpointConfig) -> Self {
        let agent = agent(config.timeout_secs);
        Self { config, agent }
    }

    pub fn embed(&self, text: &str) -> Result<Embedding, ClientError> {
        let mut req = self.agent.post(endpoint(&self.config.base_url, "embeddings"));
        if let Ok(key) = std::env::var(&self.config.api_key_env) {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let resp: EmbeddingResponse = req
            .send_json(&EmbeddingRequest {
                model: &self.config.model,
                input: text,
            })?
            .into_body()
            .read_json()
            .map_err(|e| ClientError::BadResponse(e.to_string()))?;
        let v = resp
            .data
            .into_iter()
            .next()
            .ok_or_else(|| ClientError::BadResponse("empty data".into()))?
            .embedding;
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return Ok(Embedding {
                values: vec![0.0; v.len()],
                degenerate: true,
            });
        }
        Ok(Embedding {
            values: v.iter().map(|x| x / norm).collect(),
            degenerate: false,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;
    use std::thread;

    /// One-shot HTTP server: captures the request body, replies with `reply`.
    fn serve_once(status: u16, reply: &'static str) -> (String, thread::JoinHandle<String>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let h = thread::spawn(move || {
            let (stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut len = 0usize;
            let mut request_line = String::new();
            reader.read_line(&mut request_line).unwrap();
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                if line == "\r\n" || line.is_empty() {
                    break;
                }
                let lower = line.to_ascii_lowercase();
                if let Some(v) = lower.strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap();
                }
            }
            let mut body = vec![0u8; len];
            reader.read_exact(&mut body).unwrap();
            let mut stream = stream;
            write!(
                stream,
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{reply}",
                reply.len()
            )
            .unwrap();
            format!("{}{}", request_line, String::from_utf8(body).unwrap())
        });
        (format!("http://{addr}/v1"), h)
    }

    fn cfg(base: String) -> EndpointConfig {
        EndpointConfig {
            base_url: base,
            model: "test-model".into(),
            api_key_env: "QFINE_TEST_UNSET_KEY".into(),
            timeout_secs: 10,
        }
    }

    #[test]
    fn chat_wire_format() {
        let (base, h) = serve_once(200, r#"{"choices":[{"message":{"role":"assistant","content":"1. a\n2. b"}}]}"#);
        let c = ChatCompletionsClient::new(cfg(base));
        let out = c.chat("sys", "user text", &DecodingParams::default()).unwrap();
        assert_eq!(out, "1. a\n2. b");
        let req = h.join().unwrap();
        assert!(req.starts_with("POST /v1/chat/completions"));
        let body: serde_json::Value = serde_json::from_str(req.split_once("\r\n").unwrap().1).unwrap();
        assert_eq!(body["model"], "test-model");
        assert_eq!(body["messages"][0]["role"], "system");
        assert_eq!(body["messages"][1]["content"], "user text");
        assert_eq!(body["max_tokens"], 512);
        assert_eq!(body["temperature"], 0.7);
    }

    #[test]
    fn empty_system_prompt_omitted() {
        let (base, h) = serve_once(200, r#"{"choices":[{"message":{"content":"x"}}]}"#);
        let c = ChatCompletionsClient::new(cfg(base));
        c.chat("", "u", &DecodingParams::default()).unwrap();
        let req = h.join().unwrap();
        let body: serde_json::Value = serde_json::from_str(req.split_once("\r\n").unwrap().1).unwrap();
        assert_eq!(body["messages"].as_array().unwrap().len(), 1);
        assert_eq!(body["messages"][0]["role"], "user");
    }

    #[test]
    fn server_error_status() {
        let (base, h) = serve_once(500, r#"{"error":"boom"}"#);
        let c = ChatCompletionsClient::new(cfg(base));
        assert_eq!(
            c.chat("", "u", &DecodingParams::default()),
            Err(ClientError::Status(500))
        );
        h.join().unwrap();
    }

    #[test]
    fn embedding_client_normalizes() {
        let (base, h) = serve_once(200, r#"{"data":[{"embedding":[3.0,4.0]}]}"#);
        let c = ExternalEmbeddingClient::new(cfg(base));
        let e = c.embed("hello").unwrap();
        assert_eq!(e.values, vec![0.6, 0.8]);
        assert!(!e.degenerate);
        let req = h.join().unwrap();
        assert!(req.starts_with("POST /v1/embeddings"));
    }
}
