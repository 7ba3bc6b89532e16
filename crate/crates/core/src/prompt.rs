//! Instruction prompt assembly and the text-generation backend seam.
//!
//! A rendered prompt is a list of segments. Text segments carry the
//! instruction, the user query and the emotion tag; the projected video
//! tokens travel as a separate block and appear in the flat text only as
//! [`VIDEO_TOKEN_PLACEHOLDER`]. The flat text is
//!
//! ```text
//! USER: {instruction} {user_query}<vid-tokens><emotion:{tag}>\nAssistant: 
//! ```
//!
//! with every `<` in the instruction and query doubled.

use std::io::{BufRead, BufReader, Write};
use std::net::{TcpStream, ToSocketAddrs};
use std::time::{Duration, Instant};

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use serde::{Deserialize, Serialize};

use crate::emotion::{emotion_tag, Emotion};
use crate::error::{Error, Result};
use crate::tensor::Tensor;
use crate::vision::VideoTokens;

pub const VIDEO_TOKEN_PLACEHOLDER: &str = "<vid-tokens>";

/// Default task instruction. Not normative; override it in the run config.
pub const DEFAULT_INSTRUCTION: &str =
    "Watch the video and read the conversation, then explain what caused the emotion of the target utterance.";

#[derive(Debug, Clone, PartialEq)]
pub struct PromptBundle {
    pub instruction: String,
    pub user_query: String,
    pub video_tokens: VideoTokens,
    pub emotion: Option<Emotion>,
}

impl PromptBundle {
    pub fn new(
        instruction: impl Into<String>,
        user_query: impl Into<String>,
        video_tokens: VideoTokens,
        emotion: Option<Emotion>,
    ) -> Result<Self> {
        let b = PromptBundle {
            instruction: instruction.into(),
            user_query: user_query.into(),
            video_tokens,
            emotion,
        };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        if self.instruction.is_empty() {
            return Err(Error::input("prompt instruction is empty"));
        }
        if self.user_query.is_empty() {
            return Err(Error::input("prompt user query is empty"));
        }
        Ok(())
    }

    pub fn emotion_tag(&self) -> &'static str {
        emotion_tag(self.emotion)
    }
}

/// Doubles every `<` so user text cannot forge a tag.
pub fn escape(text: &str) -> String {
    text.replace('<', "<<")
}

#[derive(Debug, Clone, PartialEq)]
pub enum Segment {
    Literal(&'static str),
    Instruction(String),
    Query(String),
    VideoTokens { rows: usize, width: usize },
    Emotion(&'static str),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenderedPrompt {
    pub segments: Vec<Segment>,
}

impl RenderedPrompt {
    /// The flat text channel, with the token block replaced by its placeholder.
    pub fn text(&self) -> String {
        let mut out = String::new();
        for s in &self.segments {
            match s {
                Segment::Literal(t) => out.push_str(t),
                Segment::Instruction(t) | Segment::Query(t) => out.push_str(t),
                Segment::VideoTokens { .. } => out.push_str(VIDEO_TOKEN_PLACEHOLDER),
                Segment::Emotion(tag) => {
                    out.push_str("<emotion:");
                    out.push_str(tag);
                    out.push('>');
                }
            }
        }
        out
    }

    /// `(rows, width)` of the out-of-band token block.
    pub fn token_shape(&self) -> Option<(usize, usize)> {
        self.segments.iter().find_map(|s| match s {
            Segment::VideoTokens { rows, width } => Some((*rows, *width)),
            _ => None,
        })
    }
}

pub fn assemble_prompt(b: &PromptBundle) -> Result<RenderedPrompt> {
    b.validate()?;
    Ok(RenderedPrompt {
        segments: vec![
            Segment::Literal("USER: "),
            Segment::Instruction(escape(&b.instruction)),
            Segment::Literal(" "),
            Segment::Query(escape(&b.user_query)),
            Segment::VideoTokens {
                rows: b.video_tokens.rows(),
                width: b.video_tokens.width(),
            },
            Segment::Emotion(b.emotion_tag()),
            Segment::Literal("\nAssistant: "),
        ],
    })
}

/// A text generator that answers a rendered prompt.
pub trait GenerationBackend: Send + Sync {
    fn id(&self) -> &str;
    fn generate(&self, bundle: &PromptBundle, prompt: &RenderedPrompt) -> Result<String>;
}

/// Replies with the user query.
#[derive(Debug, Clone, Default)]
pub struct EchoBackend;

impl GenerationBackend for EchoBackend {
    fn id(&self) -> &str {
        "echo"
    }

    fn generate(&self, bundle: &PromptBundle, _: &RenderedPrompt) -> Result<String> {
        Ok(bundle.user_query.clone())
    }
}

pub const CANNED_REPLY: &str =
    "Because the speaker is reacting to what the other person has just said and done in the conversation.";

/// Replies with [`CANNED_REPLY`].
#[derive(Debug, Clone, Default)]
pub struct CannedBackend;

impl GenerationBackend for CannedBackend {
    fn id(&self) -> &str {
        "canned"
    }

    fn generate(&self, _: &PromptBundle, _: &RenderedPrompt) -> Result<String> {
        Ok(CANNED_REPLY.to_string())
    }
}

/// Fault injection: always replies with an empty string.
#[derive(Debug, Clone, Default)]
pub struct EmptyBackend;

impl GenerationBackend for EmptyBackend {
    fn id(&self) -> &str {
        "empty"
    }

    fn generate(&self, _: &PromptBundle, _: &RenderedPrompt) -> Result<String> {
        Ok(String::new())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GenerationResult {
    pub explanation: String,
    pub backend_id: String,
    pub latency_ms: f64,
}

/// Renders the prompt, calls `backend`, and strips trailing whitespace from
/// the reply. An empty reply is a backend error carrying the raw payload.
pub fn generate_explanation(b: &PromptBundle, backend: &dyn GenerationBackend) -> Result<GenerationResult> {
    let prompt = assemble_prompt(b)?;
    let start = Instant::now();
    let raw = backend.generate(b, &prompt)?;
    let latency_ms = start.elapsed().as_secs_f64() * 1e3;
    let explanation = raw.trim_end().to_string();
    if explanation.is_empty() {
        return Err(Error::backend(backend.id(), "empty explanation", Some(raw)));
    }
    Ok(GenerationResult {
        explanation,
        backend_id: backend.id().to_string(),
        latency_ms,
    })
}

/// One request line of the wire protocol. Tokens are row-major
/// little-endian `f32`, base64 encoded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WireRequest {
    pub emotion: String,
    pub instruction: String,
    pub query: String,
    pub tokens_b64: String,
    pub tokens_shape: [usize; 2],
}

impl WireRequest {
    pub fn from_bundle(b: &PromptBundle) -> Self {
        let t = b.video_tokens.values();
        let mut bytes = Vec::with_capacity(t.len() * 4);
        for &v in t.data() {
            bytes.extend_from_slice(&(v as f32).to_le_bytes());
        }
        WireRequest {
            emotion: b.emotion_tag().to_string(),
            instruction: b.instruction.clone(),
            query: b.user_query.clone(),
            tokens_b64: B64.encode(bytes),
            tokens_shape: [b.video_tokens.rows(), b.video_tokens.width()],
        }
    }

    /// Compact JSON followed by `\n`.
    pub fn to_line(&self) -> String {
        let mut s = serde_json::to_string(self).expect("request serializes");
        s.push('\n');
        s
    }

    pub fn parse_line(line: &str) -> Result<Self> {
        serde_json::from_str(line.trim_end_matches(['\r', '\n']))
            .map_err(|e| Error::input(format!("malformed wire request: {e}")))
    }

    pub fn into_bundle(self) -> Result<PromptBundle> {
        let [rows, width] = self.tokens_shape;
        let bytes = B64
            .decode(&self.tokens_b64)
            .map_err(|e| Error::input(format!("bad token base64: {e}")))?;
        let expected = rows
            .checked_mul(width)
            .and_then(|n| n.checked_mul(4))
            .ok_or_else(|| Error::input("token shape overflows"))?;
        if bytes.len() != expected {
            return Err(Error::input(format!(
                "token block has {} bytes, shape {rows}x{width} needs {expected}",
                bytes.len()
            )));
        }
        let data = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect();
        let tokens = VideoTokens::new(Tensor::new(vec![rows, width], data).map_err(|e| Error::input(e.to_string()))?)?;
        let emotion = match self.emotion.as_str() {
            "none" => None,
            s => Some(s.parse()?),
        };
        PromptBundle::new(self.instruction, self.query, tokens, emotion)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireResponse {
    pub explanation: String,
}

impl WireResponse {
    pub fn to_line(&self) -> String {
        let mut s = serde_json::to_string(self).expect("response serializes");
        s.push('\n');
        s
    }
}

/// Parses one reply line; failures carry the raw line as payload.
pub fn parse_response(backend: &str, line: &str) -> Result<WireResponse> {
    serde_json::from_str(line.trim_end_matches(['\r', '\n'])).map_err(|e| {
        Error::backend(backend, format!("malformed reply: {e}"), Some(line.to_string()))
    })
}

/// Writes one request line and reads one reply line.
pub fn exchange<R: BufRead, W: Write>(backend: &str, reader: &mut R, writer: &mut W, req: &WireRequest) -> Result<String> {
    let io_err = |e: std::io::Error| {
        let what = match e.kind() {
            std::io::ErrorKind::WouldBlock | std::io::ErrorKind::TimedOut => "timed out".to_string(),
            _ => e.to_string(),
        };
        Error::backend(backend, what, None)
    };
    writer.write_all(req.to_line().as_bytes()).map_err(io_err)?;
    writer.flush().map_err(io_err)?;
    let mut line = String::new();
    let n = reader.read_line(&mut line).map_err(io_err)?;
    if n == 0 {
        return Err(Error::backend(backend, "connection closed before reply", None));
    }
    Ok(parse_response(backend, &line)?.explanation)
}

/// Serves wire requests from `reader` until end of stream, answering each
/// with `backend`. Malformed requests get a reply with an empty
/// explanation and the loop continues.
pub fn serve<R: BufRead, W: Write>(reader: &mut R, writer: &mut W, backend: &dyn GenerationBackend) -> Result<usize> {
    let mut served = 0;
    let mut line = String::new();
    loop {
        line.clear();
        if reader.read_line(&mut line)? == 0 {
            return Ok(served);
        }
        let explanation = WireRequest::parse_line(&line)
            .and_then(WireRequest::into_bundle)
            .and_then(|b| {
                let p = assemble_prompt(&b)?;
                backend.generate(&b, &p)
            })
            .unwrap_or_default();
        writer.write_all(WireResponse { explanation }.to_line().as_bytes())?;
        writer.flush()?;
        served += 1;
    }
}

/// Line-delimited JSON over TCP; one connection per call.
#[derive(Debug, Clone)]
pub struct WireBackend {
    pub endpoint: String,
    pub timeout: Duration,
}

impl GenerationBackend for WireBackend {
    fn id(&self) -> &str {
        "wire"
    }

    fn generate(&self, bundle: &PromptBundle, _: &RenderedPrompt) -> Result<String> {
        let fail = |msg: String| Error::backend("wire", msg, None);
        let addr = self
            .endpoint
            .to_socket_addrs()
            .map_err(|e| fail(format!("cannot resolve {}: {e}", self.endpoint)))?
            .next()
            .ok_or_else(|| fail(format!("no address for {}", self.endpoint)))?;
        let stream = TcpStream::connect_timeout(&addr, self.timeout)
            .map_err(|e| fail(format!("cannot connect to {}: {e}", self.endpoint)))?;
        stream.set_read_timeout(Some(self.timeout)).map_err(|e| fail(e.to_string()))?;
        stream.set_write_timeout(Some(self.timeout)).map_err(|e| fail(e.to_string()))?;
        let mut writer = stream.try_clone().map_err(|e| fail(e.to_string()))?;
        let mut reader = BufReader::new(stream);
        exchange("wire", &mut reader, &mut writer, &WireRequest::from_bundle(bundle))
    }
}

/// Builds a backend from its configuration name.
pub fn backend_by_name(name: &str, endpoint: &str, timeout: Duration) -> Result<Box<dyn GenerationBackend>> {
    match name {
        "echo" => Ok(Box::new(EchoBackend)),
        "canned" => Ok(Box::new(CannedBackend)),
        "empty" => Ok(Box::new(EmptyBackend)),
        "wire" => {
            if endpoint.is_empty() {
                return Err(Error::input("the wire backend needs an endpoint"));
            }
            Ok(Box::new(WireBackend {
                endpoint: endpoint.to_string(),
                timeout,
            }))
        }
        other => Err(Error::input(format!("unknown generation backend {other:?}"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::io::Cursor;
    use std::net::TcpListener;

    fn tokens(rows: usize, width: usize) -> VideoTokens {
        VideoTokens::new(Tensor::from_fn(&[rows, width], |i| i as f64 * 0.25 - 1.0).unwrap()).unwrap()
    }

    fn bundle(instr: &str, query: &str, emotion: Option<Emotion>) -> PromptBundle {
        PromptBundle::new(instr, query, tokens(2, 3), emotion).unwrap()
    }

    #[test]
    fn renders_exact_bytes() {
        let b = bundle("Explain the emotion cause.", "Q", Some(Emotion::Joy));
        let p = assemble_prompt(&b).unwrap();
        assert_eq!(
            p.text(),
            "USER: Explain the emotion cause. Q<vid-tokens><emotion:joy>\nAssistant: "
        );
        assert_eq!(p, assemble_prompt(&b).unwrap());
        assert_eq!(p.text().as_bytes(), assemble_prompt(&b).unwrap().text().as_bytes());
    }

    #[test]
    fn placeholder_records_token_shape() {
        let b = PromptBundle::new("i", "q", tokens(12, 8), None).unwrap();
        let p = assemble_prompt(&b).unwrap();
        assert_eq!(p.token_shape(), Some((12, 8)));
        assert!(p.text().contains("<emotion:none>"));
    }

    #[test]
    fn escapes_angle_brackets_and_rejects_empty() {
        let b = bundle("say <hi>", "<emotion:joy>", None);
        assert_eq!(
            assemble_prompt(&b).unwrap().text(),
            "USER: say <<hi> <<emotion:joy><vid-tokens><emotion:none>\nAssistant: "
        );
        assert!(PromptBundle::new("", "q", tokens(1, 1), None).is_err());
        assert!(PromptBundle::new("i", "", tokens(1, 1), None).is_err());
    }

    #[test]
    fn stub_backends() {
        let b = bundle("i", "what made Ross angry?", Some(Emotion::Anger));
        let r = generate_explanation(&b, &EchoBackend).unwrap();
        assert_eq!(r.explanation, "what made Ross angry?");
        assert_eq!(r.backend_id, "echo");

        let r = generate_explanation(&b, &CannedBackend).unwrap();
        assert_eq!(r.explanation, CANNED_REPLY);

        match generate_explanation(&b, &EmptyBackend) {
            Err(Error::Backend { payload, .. }) => assert_eq!(payload.as_deref(), Some("")),
            other => panic!("expected backend error, got {other:?}"),
        }
    }

    #[test]
    fn trailing_whitespace_is_stripped() {
        let b = bundle("i", "  spaced query \n\t", None);
        let r = generate_explanation(&b, &EchoBackend).unwrap();
        assert_eq!(r.explanation, "  spaced query");
    }

    #[test]
    fn wire_request_round_trips() {
        let b = bundle("instr <x>", "query \"quoted\"\nline", Some(Emotion::Fear));
        let line = WireRequest::from_bundle(&b).to_line();
        assert!(line.ends_with('\n') && line.matches('\n').count() == 1);
        assert!(line.starts_with("{\"emotion\":\"fear\",\"instruction\":"));
        let back = WireRequest::parse_line(&line).unwrap().into_bundle().unwrap();
        assert_eq!(back, b);
        assert_eq!(assemble_prompt(&back).unwrap(), assemble_prompt(&b).unwrap());
    }

    #[test]
    fn wire_request_rejects_bad_tokens() {
        let mut req = WireRequest::from_bundle(&bundle("i", "q", None));
        req.tokens_shape = [3, 3];
        assert!(req.clone().into_bundle().is_err());
        req.tokens_b64 = "!!!".into();
        assert!(req.into_bundle().is_err());
    }

    #[test]
    fn exchange_over_in_memory_streams() {
        let b = bundle("i", "q", None);
        let req = WireRequest::from_bundle(&b);
        let mut reader = Cursor::new(b"{\"explanation\":\"because\"}\n".to_vec());
        let mut written = Vec::new();
        assert_eq!(exchange("wire", &mut reader, &mut written, &req).unwrap(), "because");
        assert_eq!(String::from_utf8(written).unwrap(), req.to_line());

        let mut bad = Cursor::new(b"not json\n".to_vec());
        match exchange("wire", &mut bad, &mut Vec::new(), &req) {
            Err(Error::Backend { payload, .. }) => assert_eq!(payload.as_deref(), Some("not json\n")),
            other => panic!("expected backend error, got {other:?}"),
        }
        let mut closed = Cursor::new(Vec::new());
        assert!(matches!(exchange("wire", &mut closed, &mut Vec::new(), &req), Err(Error::Backend { .. })));
    }

    #[test]
    fn serve_answers_each_line() {
        let b = bundle("i", "echo me", None);
        let mut input = WireRequest::from_bundle(&b).to_line();
        input.push_str("garbage\n");
        let mut out = Vec::new();
        let n = serve(&mut Cursor::new(input.into_bytes()), &mut out, &EchoBackend).unwrap();
        assert_eq!(n, 2);
        let text = String::from_utf8(out).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(parse_response("t", lines[0]).unwrap().explanation, "echo me");
        assert_eq!(parse_response("t", lines[1]).unwrap().explanation, "");
    }

    #[test]
    fn wire_backend_over_tcp() {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let server = std::thread::spawn(move || {
            let (stream, _) = listener.accept().unwrap();
            let mut w = stream.try_clone().unwrap();
            serve(&mut BufReader::new(stream), &mut w, &CannedBackend).unwrap()
        });
        let backend = WireBackend { endpoint: addr.to_string(), timeout: Duration::from_secs(5) };
        let r = generate_explanation(&bundle("i", "q", Some(Emotion::Joy)), &backend).unwrap();
        assert_eq!(r.explanation, CANNED_REPLY);
        assert_eq!(r.backend_id, "wire");
        assert_eq!(server.join().unwrap(), 1);
    }

    #[test]
    fn wire_backend_unreachable_and_timeout() {
        // Bind then drop to get a port nobody listens on.
        let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
        let backend = WireBackend { endpoint: format!("127.0.0.1:{port}"), timeout: Duration::from_millis(500) };
        assert!(matches!(
            generate_explanation(&bundle("i", "q", None), &backend),
            Err(Error::Backend { .. })
        ));

        let silent = TcpListener::bind("127.0.0.1:0").unwrap();
        let backend = WireBackend {
            endpoint: silent.local_addr().unwrap().to_string(),
            timeout: Duration::from_millis(200),
        };
        match generate_explanation(&bundle("i", "q", None), &backend) {
            Err(Error::Backend { message, .. }) => assert_eq!(message, "timed out"),
            other => panic!("expected timeout, got {other:?}"),
        }
    }

    #[test]
    fn backend_registry() {
        let t = Duration::from_secs(1);
        assert_eq!(backend_by_name("echo", "", t).unwrap().id(), "echo");
        assert!(backend_by_name("wire", "", t).is_err());
        assert!(backend_by_name("gpt", "", t).is_err());
    }

    fn tag_strategy() -> impl Strategy<Value = Option<Emotion>> {
        prop::option::of(prop::sample::select(Emotion::ALL.to_vec()))
    }

    proptest! {
        // The flat text channel is injective in (query, emotion) for a fixed
        // instruction, even when the query is built from delimiter pieces.
        #[test]
        fn text_is_injective_in_query_and_tag(
            q1 in "[<>a: \n]{1,8}|(<emotion:joy>|<vid-tokens>|<<|<|>|x){1,4}",
            q2 in "[<>a: \n]{1,8}|(<emotion:joy>|<vid-tokens>|<<|<|>|x){1,4}",
            t1 in tag_strategy(),
            t2 in tag_strategy(),
        ) {
            let a = assemble_prompt(&bundle("explain <it>", &q1, t1)).unwrap().text();
            let b = assemble_prompt(&bundle("explain <it>", &q2, t2)).unwrap().text();
            prop_assert_eq!(a == b, q1 == q2 && t1 == t2);
        }

        #[test]
        fn segments_are_injective(
            i1 in "[<a ]{1,5}", q1 in "[<a ]{1,5}",
            i2 in "[<a ]{1,5}", q2 in "[<a ]{1,5}",
        ) {
            let a = assemble_prompt(&bundle(&i1, &q1, None)).unwrap();
            let b = assemble_prompt(&bundle(&i2, &q2, None)).unwrap();
            prop_assert_eq!(a == b, i1 == i2 && q1 == q2);
        }

        #[test]
        fn wire_round_trip_is_lossless(instr in "\\PC{1,20}", query in "\\PC{1,40}", tag in tag_strategy()) {
            let b = bundle(&instr, &query, tag);
            let back = WireRequest::parse_line(&WireRequest::from_bundle(&b).to_line())
                .unwrap()
                .into_bundle()
                .unwrap();
            prop_assert_eq!(back, b);
        }
    }
}
