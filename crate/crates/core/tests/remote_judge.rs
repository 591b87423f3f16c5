use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::thread;

use serde_json::json;
use steerbench_core::persona::generate_personas;
use steerbench_core::schema::*;
use steerbench_core::user_sim::remote::{parse_reply, RemoteConfig, RemoteJudge};
use steerbench_core::user_sim::{EpisodicMemory, UserBackend};
use steerbench_core::Error;

/// Minimal HTTP server answering each connection with the next canned
/// `(status, body)`. Returns the base URL and the captured requests.
fn serve(replies: Vec<(u16, String)>) -> (String, Arc<Mutex<Vec<String>>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let seen = Arc::new(Mutex::new(Vec::new()));
    let log = Arc::clone(&seen);
    thread::spawn(move || {
        for (status, body) in replies {
            let (stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut head = String::new();
            let mut len = 0;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap();
                }
                head.push_str(&line);
                if line == "\r\n" || line.is_empty() {
                    break;
                }
            }
            let mut payload = vec![0; len];
            reader.read_exact(&mut payload).unwrap();
            head.push_str(&String::from_utf8(payload).unwrap());
            log.lock().unwrap().push(head);
            let mut stream = stream;
            write!(
                stream,
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                body.len()
            )
            .unwrap();
        }
    });
    (format!("http://{addr}/v1"), seen)
}

fn completion(content: &str) -> String {
    json!({"choices": [{"message": {"role": "assistant", "content": content}}]}).to_string()
}

fn verdict() -> String {
    json!({
        "welcome": false,
        "action": "reject",
        "satisfaction": {"scheduling": 1, "communication_style": 4},
        "text": {"scheduling": "not now, later"},
        "active_categories": ["scheduling"],
        "preference_text": "No reminders during my morning routine.",
        "preferred_response": "I'll hold this until you're done.",
        "iqa_ratings": [1, 2, 4, 3, 4]
    })
    .to_string()
}

fn context() -> ActivityContext {
    ActivityContext {
        activity_type: ActivityType::Health,
        day: 0,
        period_index: 0,
        start_minute: 390,
        duration_minutes: 25,
        description: "health: morning hygiene".into(),
        template_id: 8,
    }
}

fn judge(base: &str) -> RemoteJudge {
    let mut cfg = RemoteConfig::new(base, "test-model");
    cfg.timeout_secs = 5;
    RemoteJudge::with_key(cfg, Some("sk-test".into()))
}

fn ask(j: &RemoteJudge, decision: Decision) -> steerbench_core::Result<steerbench_core::user_sim::UserJudgment> {
    let persona = &generate_personas(1, 1).unwrap()[0];
    let memory = EpisodicMemory::new(10).unwrap();
    let text = if decision == Decision::Intervene { "Time to floss!" } else { "" };
    j.judge(persona, &memory, &context(), decision, &[0.5; 5], text)
}

#[test]
fn valid_reply_becomes_a_judgment() {
    let (base, seen) = serve(vec![(200, completion(&format!("```json\n{}\n```", verdict())))]);
    let j = ask(&judge(&base), Decision::Intervene).unwrap();
    assert_eq!(j.welcome, Welcome::Unwelcome);
    let fb = j.feedback.unwrap();
    assert_eq!(fb.action, Action::Reject);
    assert_eq!(fb.satisfaction[&PreferenceCategory::Scheduling], 1);
    assert_eq!(j.iqa_ratings, [1, 2, 4, 3, 4]);
    let req = &seen.lock().unwrap()[0];
    assert!(req.starts_with("POST /v1/chat/completions"));
    assert!(req.contains("Bearer sk-test"));
    assert!(req.contains("test-model"));
    assert!(req.contains("Time to floss!"));
}

#[test]
fn silent_decision_drops_feedback() {
    let (base, _) = serve(vec![(200, completion(&verdict()))]);
    let j = ask(&judge(&base), Decision::Silent).unwrap();
    assert!(j.feedback.is_none());
}

#[test]
fn malformed_replies_exhaust_retries_as_protocol_error() {
    let (base, seen) = serve(vec![
        (200, completion("sure, happy to help")),
        (200, "not json at all".into()),
        (200, completion(r#"{"welcome": true}"#)),
    ]);
    match ask(&judge(&base), Decision::Intervene) {
        Err(Error::Protocol { message, .. }) => assert!(message.contains("3 attempts"), "{message}"),
        other => panic!("{other:?}"),
    }
    assert_eq!(seen.lock().unwrap().len(), 3);
}

#[test]
fn retry_recovers_after_one_bad_reply() {
    let (base, seen) = serve(vec![(200, completion("{}")), (200, completion(&verdict()))]);
    assert!(ask(&judge(&base), Decision::Intervene).is_ok());
    assert_eq!(seen.lock().unwrap().len(), 2);
}

#[test]
fn accepted_unwelcome_intervention_is_rejected() {
    let bad = verdict().replace("\"reject\"", "\"accept\"");
    let (base, _) = serve(vec![(200, completion(&bad)); 3]);
    assert!(matches!(ask(&judge(&base), Decision::Intervene), Err(Error::Protocol { .. })));
}

#[test]
fn http_error_status_is_transport_error() {
    let (base, seen) = serve(vec![(503, "{}".into())]);
    assert!(matches!(ask(&judge(&base), Decision::Intervene), Err(Error::Transport { .. })));
    assert_eq!(seen.lock().unwrap().len(), 1);
}

#[test]
fn unreachable_endpoint_is_transport_error() {
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let j = judge(&format!("http://127.0.0.1:{port}/v1"));
    assert!(matches!(ask(&j, Decision::Intervene), Err(Error::Transport { .. })));
}

#[test]
fn reply_parser_reports_shape_problems() {
    assert!(parse_reply("{}").unwrap_err().contains("choices"));
    assert!(parse_reply(&completion(&verdict())).is_ok());
}
