use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A chat-completion service reduced to one blocking call.
pub trait Transport: Send + Sync {
    fn send(&self, prompt: &str) -> Result<String>;
}

impl<T: Transport + ?Sized> Transport for Box<T> {
    fn send(&self, prompt: &str) -> Result<String> {
        (**self).send(prompt)
    }
}

type Responder = Box<dyn Fn(usize, &str) -> String + Send + Sync>;

/// Answers from a script or a closure; never touches the network.
pub struct MockTransport {
    responder: Responder,
    calls: AtomicUsize,
}

impl MockTransport {
    /// Replies with `responses` in order, starting over when they run out.
    pub fn scripted<S: Into<String>>(responses: impl IntoIterator<Item = S>) -> Self {
        let responses: Vec<String> = responses.into_iter().map(Into::into).collect();
        assert!(!responses.is_empty(), "a scripted mock needs at least one response");
        MockTransport::from_fn(move |i, _| responses[i % responses.len()].clone())
    }

    /// `f(call_index, prompt)` produces each reply.
    pub fn from_fn(f: impl Fn(usize, &str) -> String + Send + Sync + 'static) -> Self {
        MockTransport {
            responder: Box::new(f),
            calls: AtomicUsize::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl Transport for MockTransport {
    fn send(&self, prompt: &str) -> Result<String> {
        let i = self.calls.fetch_add(1, Ordering::SeqCst);
        Ok((self.responder)(i, prompt))
    }
}

#[derive(Serialize)]
struct LogRecord<'a> {
    timestamp: f64,
    direction: &'a str,
    payload: &'a str,
}

/// Appends every prompt and reply to a JSON Lines log before handing the
/// reply back.
pub struct LoggedTransport<T> {
    inner: T,
    log: Mutex<File>,
}

impl<T: Transport> LoggedTransport<T> {
    pub fn new(inner: T, path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        Ok(LoggedTransport {
            inner,
            log: Mutex::new(file),
        })
    }

    fn record(&self, direction: &str, payload: &str) -> Result<()> {
        let timestamp = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0.0, |d| d.as_secs_f64());
        let mut line = serde_json::to_string(&LogRecord {
            timestamp,
            direction,
            payload,
        })
        .expect("log record serializes");
        line.push('\n');
        let mut f = self.log.lock().expect("log lock");
        f.write_all(line.as_bytes())
            .and_then(|_| f.flush())
            .map_err(|e| Error::Transport {
                attempts: 0,
                message: format!("cannot write transport log: {e}"),
            })
    }
}

impl<T: Transport> Transport for LoggedTransport<T> {
    fn send(&self, prompt: &str) -> Result<String> {
        self.record("request", prompt)?;
        match self.inner.send(prompt) {
            Ok(reply) => {
                self.record("response", &reply)?;
                Ok(reply)
            }
            Err(e) => {
                self.record("error", &e.to_string())?;
                Err(e)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HttpConfig {
    pub model: String,
    pub timeout_secs: u64,
    /// Extra attempts after the first on connection errors, 429 and 5xx.
    pub retries: usize,
    pub backoff_ms: u64,
}

impl Default for HttpConfig {
    fn default() -> Self {
        HttpConfig {
            model: "default".into(),
            timeout_secs: 60,
            retries: 3,
            backoff_ms: 500,
        }
    }
}

#[cfg(feature = "http")]
pub use http::{HttpTransport, ENDPOINT_VAR, TOKEN_VAR};

#[cfg(feature = "http")]
mod http {
    use std::time::Duration;

    use serde::{Deserialize, Serialize};

    use super::{HttpConfig, Transport};
    use crate::error::{Error, Result};

    pub const ENDPOINT_VAR: &str = "BIASLENS_LLM_ENDPOINT";
    pub const TOKEN_VAR: &str = "BIASLENS_LLM_TOKEN";

    /// Minimal chat-completion client: one user message, temperature 0.
    pub struct HttpTransport {
        agent: ureq::Agent,
        endpoint: String,
        token: Option<String>,
        cfg: HttpConfig,
    }

    #[derive(Serialize)]
    struct Message<'a> {
        role: &'a str,
        content: &'a str,
    }

    #[derive(Serialize)]
    struct ChatRequest<'a> {
        model: &'a str,
        messages: [Message<'a>; 1],
        temperature: f64,
    }

    #[derive(Deserialize)]
    struct ChatResponse {
        choices: Vec<Choice>,
    }

    #[derive(Deserialize)]
    struct Choice {
        message: ReplyMessage,
    }

    #[derive(Deserialize)]
    struct ReplyMessage {
        content: String,
    }

    enum Attempt {
        Retry(String),
        Fail(Error),
    }

    impl HttpTransport {
        pub fn new(endpoint: impl Into<String>, token: Option<String>, cfg: HttpConfig) -> Self {
            let agent: ureq::Agent = ureq::Agent::config_builder()
                .timeout_global(Some(Duration::from_secs(cfg.timeout_secs)))
                .http_status_as_error(false)
                .build()
                .into();
            HttpTransport {
                agent,
                endpoint: endpoint.into(),
                token,
                cfg,
            }
        }

        /// Endpoint from `BIASLENS_LLM_ENDPOINT`, optional bearer token from
        /// `BIASLENS_LLM_TOKEN`.
        pub fn from_env(cfg: HttpConfig) -> Result<Self> {
            let endpoint = std::env::var(ENDPOINT_VAR)
                .map_err(|_| Error::InvalidConfig(format!("{ENDPOINT_VAR} is not set")))?;
            Ok(HttpTransport::new(endpoint, std::env::var(TOKEN_VAR).ok(), cfg))
        }

        fn attempt(&self, body: &str) -> std::result::Result<String, Attempt> {
            let mut req = self.agent.post(&self.endpoint).header("Content-Type", "application/json");
            if let Some(t) = &self.token {
                req = req.header("Authorization", format!("Bearer {t}"));
            }
            let mut resp = req.send(body).map_err(|e| Attempt::Retry(e.to_string()))?;
            let status = resp.status().as_u16();
            let text = resp.body_mut().read_to_string().map_err(|e| Attempt::Retry(e.to_string()))?;
            if status == 429 || status >= 500 {
                return Err(Attempt::Retry(format!("HTTP {status}")));
            }
            if !(200..300).contains(&status) {
                return Err(Attempt::Fail(Error::Transport {
                    attempts: 1,
                    message: format!("HTTP {status}: {text}"),
                }));
            }
            let parsed: ChatResponse = serde_json::from_str(&text)
                .map_err(|e| Attempt::Fail(Error::Format(format!("unexpected chat response: {e}"))))?;
            parsed
                .choices
                .into_iter()
                .next()
                .map(|c| c.message.content)
                .ok_or_else(|| Attempt::Fail(Error::Format("chat response has no choices".into())))
        }
    }

    impl Transport for HttpTransport {
        fn send(&self, prompt: &str) -> Result<String> {
            let body = serde_json::to_string(&ChatRequest {
                model: &self.cfg.model,
                messages: [Message {
                    role: "user",
                    content: prompt,
                }],
                temperature: 0.0,
            })
            .expect("request serializes");
            let attempts = self.cfg.retries + 1;
            let mut last = String::new();
            for i in 0..attempts {
                if i > 0 {
                    std::thread::sleep(Duration::from_millis(self.cfg.backoff_ms << (i - 1).min(10) as u32));
                }
                match self.attempt(&body) {
                    Ok(text) => return Ok(text),
                    Err(Attempt::Fail(Error::Transport { message, .. })) => {
                        return Err(Error::Transport { attempts: i + 1, message })
                    }
                    Err(Attempt::Fail(e)) => return Err(e),
                    Err(Attempt::Retry(msg)) => last = msg,
                }
            }
            Err(Error::Transport {
                attempts,
                message: last,
            })
        }
    }

    #[cfg(test)]
    mod tests {
        use super::*;
        use std::io::{BufRead, BufReader, Read, Write};
        use std::net::TcpListener;
        use std::sync::{Arc, Mutex};

        /// Serves the canned `(status, body)` replies in order and records
        /// request bodies.
        fn serve(replies: Vec<(u16, String)>) -> (String, Arc<Mutex<Vec<String>>>) {
            let listener = TcpListener::bind("127.0.0.1:0").unwrap();
            let url = format!("http://{}/v1/chat", listener.local_addr().unwrap());
            let seen = Arc::new(Mutex::new(Vec::new()));
            let log = Arc::clone(&seen);
            std::thread::spawn(move || {
                for (status, body) in replies {
                    let (stream, _) = listener.accept().unwrap();
                    let mut reader = BufReader::new(stream.try_clone().unwrap());
                    let mut len = 0;
                    loop {
                        let mut line = String::new();
                        reader.read_line(&mut line).unwrap();
                        if line == "\r\n" || line.is_empty() {
                            break;
                        }
                        if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                            len = v.trim().parse().unwrap();
                        }
                    }
                    let mut buf = vec![0; len];
                    reader.read_exact(&mut buf).unwrap();
                    log.lock().unwrap().push(String::from_utf8(buf).unwrap());
                    let mut s = stream;
                    write!(
                        s,
                        "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                        body.len()
                    )
                    .unwrap();
                }
            });
            (url, seen)
        }

        fn cfg() -> HttpConfig {
            HttpConfig {
                model: "m".into(),
                timeout_secs: 5,
                retries: 2,
                backoff_ms: 0,
            }
        }

        const OK: &str = r#"{"choices":[{"message":{"role":"assistant","content":"Distribution 2"}}]}"#;

        #[test]
        fn retries_server_errors_then_succeeds() {
            let (url, seen) = serve(vec![(503, "{}".into()), (429, "{}".into()), (200, OK.into())]);
            let t = HttpTransport::new(url, Some("tok".into()), cfg());
            assert_eq!(t.send("hello").unwrap(), "Distribution 2");
            let bodies = seen.lock().unwrap();
            assert_eq!(bodies.len(), 3);
            let v: serde_json::Value = serde_json::from_str(&bodies[0]).unwrap();
            assert_eq!(v["messages"][0]["content"], "hello");
            assert_eq!(v["messages"][0]["role"], "user");
            assert_eq!(v["temperature"], 0.0);
        }

        #[test]
        fn client_errors_are_not_retried() {
            let (url, seen) = serve(vec![(400, "bad".into()), (200, OK.into())]);
            let t = HttpTransport::new(url, None, cfg());
            assert!(matches!(t.send("x"), Err(Error::Transport { attempts: 1, .. })));
            assert_eq!(seen.lock().unwrap().len(), 1);
        }

        #[test]
        fn exhausted_retries() {
            let (url, _) = serve(vec![(500, "{}".into()); 3]);
            let t = HttpTransport::new(url, None, cfg());
            assert!(matches!(t.send("x"), Err(Error::Transport { attempts: 3, .. })));
        }

        #[test]
        fn malformed_reply_is_a_format_error() {
            let (url, _) = serve(vec![(200, "{\"choices\":[]}".into())]);
            let t = HttpTransport::new(url, None, cfg());
            assert!(matches!(t.send("x"), Err(Error::Format(_))));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scripted_mock_cycles() {
        let m = MockTransport::scripted(["a", "b"]);
        let got: Vec<String> = (0..3).map(|_| m.send("p").unwrap()).collect();
        assert_eq!(got, ["a", "b", "a"]);
        assert_eq!(m.calls(), 3);
    }

    #[test]
    fn log_records_both_directions() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("log.jsonl");
        let t = LoggedTransport::new(MockTransport::scripted(["pong"]), &path).unwrap();
        t.send("ping").unwrap();
        let lines: Vec<serde_json::Value> = std::fs::read_to_string(&path)
            .unwrap()
            .lines()
            .map(|l| serde_json::from_str(l).unwrap())
            .collect();
        assert_eq!(lines.len(), 2);
        assert_eq!((lines[0]["direction"].as_str(), lines[0]["payload"].as_str()), (Some("request"), Some("ping")));
        assert_eq!((lines[1]["direction"].as_str(), lines[1]["payload"].as_str()), (Some("response"), Some("pong")));
        assert!(lines[0]["timestamp"].as_f64().unwrap() > 0.0);
    }
}
