//! Remote chat-completions backend against a local canned-response server.

use std::io::{Read, Write};
use std::net::TcpListener;
use std::sync::mpsc;

use serde_json::{json, Value};
use workbench_core::backends::remote::{RemoteBackend, RemoteConfig};
use workbench_core::kernel::agents::{team_for, AgentName, Topology};
use workbench_core::kernel::episode::{BackendDecision, DecisionBackend, DecisionContext, Message};

/// Serve canned (status, body) responses on a local port, capturing request
/// bodies; returns the endpoint URL and a receiver of captured bodies.
fn canned_server(responses: Vec<(u16, Value)>) -> (String, mpsc::Receiver<Value>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let (tx, rx) = mpsc::channel();
    std::thread::spawn(move || {
        for (status, body) in responses {
            let (mut stream, _) = listener.accept().unwrap();
            let mut buf = vec![0u8; 65536];
            let mut read = 0;
            let body_start;
            loop {
                let n = stream.read(&mut buf[read..]).unwrap();
                read += n;
                if let Some(pos) = find_header_end(&buf[..read]) {
                    body_start = pos;
                    break;
                }
            }
            let headers = String::from_utf8_lossy(&buf[..body_start]).to_string();
            let content_length: usize = headers
                .lines()
                .find_map(|l| l.to_lowercase().strip_prefix("content-length:").map(|v| v.trim().parse().unwrap()))
                .unwrap_or(0);
            while read < body_start + content_length {
                let n = stream.read(&mut buf[read..]).unwrap();
                read += n;
            }
            let request_body: Value =
                serde_json::from_slice(&buf[body_start..body_start + content_length])
                    .unwrap_or(Value::Null);
            let _ = tx.send(request_body);
            let body_text = body.to_string();
            let response = format!(
                "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{}",
                body_text.len(),
                body_text
            );
            stream.write_all(response.as_bytes()).unwrap();
        }
    });
    (format!("http://{addr}/v1/chat/completions"), rx)
}

fn find_header_end(buf: &[u8]) -> Option<usize> {
    buf.windows(4).position(|w| w == b"\r\n\r\n").map(|p| p + 4)
}

fn config(url: &str) -> RemoteConfig {
    RemoteConfig {
        endpoint_url: url.to_string(),
        model: "test-model".into(),
        api_key: "sk-test".into(),
        max_retries: 3,
        backoff_ms: 5,
    }
}

fn chat_response(message: Value) -> Value {
    json!({"choices": [{"message": message}]})
}

fn decide_once(backend: &mut RemoteBackend, topology: Topology) -> BackendDecision {
    let team = team_for(topology);
    let agent = team.agent(topology.entry_agent()).unwrap();
    let messages = vec![Message::user("segment the glioma")];
    let ctx = DecisionContext {
        agent,
        topology,
        messages: &messages,
        schema_doc: "{\"name\":\"segment_pathology\",\"description\":\"seg\",\"parameters\":[{\"name\":\"model\",\"type\":\"text\",\"required\":true,\"description\":\"m\"}],\"returns\":\"mask\"}\n",
        in_subepisode: false,
    };
    backend.decide(&ctx).unwrap()
}

#[test]
fn function_call_maps_to_tool_calls() {
    let (url, rx) = canned_server(vec![(
        200,
        chat_response(json!({
            "content": null,
            "tool_calls": [{"function": {"name": "segment_pathology", "arguments": "{\"model\":\"glioma\"}"}}]
        })),
    )]);
    let mut backend = RemoteBackend::new(config(&url));
    let decision = decide_once(&mut backend, Topology::Single);
    match decision {
        BackendDecision::ToolCalls(calls) => {
            assert_eq!(calls.len(), 1);
            assert_eq!(calls[0].tool, "segment_pathology");
            assert_eq!(calls[0].args["model"], json!("glioma"));
        }
        other => panic!("expected tool calls, got {other:?}"),
    }
    // The request body carried temperature 0, the transcript, and the schema.
    let body = rx.recv().unwrap();
    assert_eq!(body["temperature"], json!(0));
    assert_eq!(body["model"], json!("test-model"));
    assert!(body["messages"]
        .as_array()
        .unwrap()
        .iter()
        .any(|m| m["content"].as_str().unwrap_or("").contains("segment the glioma")));
    assert!(body["tools"]
        .as_array()
        .unwrap()
        .iter()
        .any(|t| t["function"]["name"] == json!("segment_pathology")));
}

#[test]
fn plain_text_maps_to_final() {
    let (url, _rx) = canned_server(vec![(
        200,
        chat_response(json!({"content": "lesion_count: 2"})),
    )]);
    let mut backend = RemoteBackend::new(config(&url));
    match decide_once(&mut backend, Topology::Single) {
        BackendDecision::Final(text) => assert_eq!(text, "lesion_count: 2"),
        other => panic!("expected final, got {other:?}"),
    }
}

#[test]
fn two_rate_limits_then_success_logs_two_retries() {
    let (url, _rx) = canned_server(vec![
        (429, json!({"error": "slow down"})),
        (429, json!({"error": "slow down"})),
        (200, chat_response(json!({"content": "ok"}))),
    ]);
    let mut backend = RemoteBackend::new(config(&url));
    let decision = decide_once(&mut backend, Topology::Single);
    assert!(matches!(decision, BackendDecision::Final(_)));
    assert_eq!(backend.retries_logged, 2);
}

#[test]
fn retries_exhausted_is_a_backend_error() {
    let (url, _rx) = canned_server(vec![
        (500, json!({"error": "boom"})),
        (500, json!({"error": "boom"})),
    ]);
    let mut backend = RemoteBackend::new(RemoteConfig {
        max_retries: 1,
        ..config(&url)
    });
    let team = team_for(Topology::Single);
    let agent = team.agent(AgentName::Generalist).unwrap();
    let messages = vec![Message::user("x")];
    let ctx = DecisionContext {
        agent,
        topology: Topology::Single,
        messages: &messages,
        schema_doc: "",
        in_subepisode: false,
    };
    assert!(backend.decide(&ctx).is_err());
}

#[test]
fn malformed_tool_arguments_degrade_to_text_with_warning() {
    let (url, _rx) = canned_server(vec![(
        200,
        chat_response(json!({
            "content": "fallback text",
            "tool_calls": [{"function": {"name": "segment_pathology", "arguments": "{not json"}}]
        })),
    )]);
    let mut backend = RemoteBackend::new(config(&url));
    match decide_once(&mut backend, Topology::Single) {
        BackendDecision::Final(text) => assert_eq!(text, "fallback text"),
        other => panic!("expected final, got {other:?}"),
    }
    assert_eq!(backend.warnings.len(), 1);
}

#[test]
fn handoff_pseudo_function_maps_to_handoff() {
    let (url, rx) = canned_server(vec![(
        200,
        chat_response(json!({
            "content": null,
            "tool_calls": [{"function": {"name": "handoff_to_segmentation", "arguments": "{\"task\":\"segment\"}"}}]
        })),
    )]);
    let mut backend = RemoteBackend::new(config(&url));
    match decide_once(&mut backend, Topology::Handoffs) {
        BackendDecision::Handoff(target) => assert_eq!(target, "segmentation"),
        other => panic!("expected handoff, got {other:?}"),
    }
    // Peer pseudo-tools are advertised in handoffs mode.
    let body = rx.recv().unwrap();
    assert!(body["tools"]
        .as_array()
        .unwrap()
        .iter()
        .any(|t| t["function"]["name"]
            .as_str()
            .unwrap_or("")
            .starts_with("handoff_to_")));
}

#[test]
fn request_pseudo_function_maps_to_subagent() {
    let (url, _rx) = canned_server(vec![(
        200,
        chat_response(json!({
            "content": null,
            "tool_calls": [{"function": {"name": "request_segmentation",
                "arguments": "{\"task\":\"segment the glioma\",\"inputs\":[\"obj_1\"],\"expected_outputs\":[\"handles\"]}"}}]
        })),
    )]);
    let mut backend = RemoteBackend::new(config(&url));
    match decide_once(&mut backend, Topology::AgentsAsTools) {
        BackendDecision::Subagent(req) => {
            assert_eq!(req.target, AgentName::Segmentation);
            assert_eq!(req.task, "segment the glioma");
            assert_eq!(req.inputs, vec!["obj_1".to_string()]);
        }
        other => panic!("expected subagent, got {other:?}"),
    }
}
