use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::{Arc, Mutex};
use std::thread;

use restlink::api_model::{
    parse_service_description, ActionInstance, InputGene, InputValue, LiteralPool, TestCase,
};
use restlink::sut::live::{LiveConfig, LiveSut, NETWORK_FAILURE_STATUS};
use restlink::sut::{Sut, TargetKind};

const SERVICE: &str = r#"{"endpoints": [
    {"method": "POST", "path": "/login", "params": [
        {"name": "user", "in": "body", "type": "string", "required": true}]},
    {"method": "GET", "path": "/item/{id}", "params": [
        {"name": "id", "in": "path", "type": "integer", "required": true},
        {"name": "token", "in": "query", "type": "string", "required": true}]},
    {"method": "GET", "path": "/boom"}
]}"#;

type Log = Arc<Mutex<Vec<String>>>;

fn handle(mut stream: TcpStream, log: Log) {
    let mut reader = BufReader::new(stream.try_clone().unwrap());
    let mut line = String::new();
    if reader.read_line(&mut line).is_err() {
        return;
    }
    let target = line
        .split_whitespace()
        .take(2)
        .collect::<Vec<_>>()
        .join(" ");
    let mut length = 0;
    loop {
        let mut h = String::new();
        reader.read_line(&mut h).unwrap();
        if h.trim().is_empty() {
            break;
        }
        if let Some(v) = h.to_ascii_lowercase().strip_prefix("content-length:") {
            length = v.trim().parse().unwrap();
        }
    }
    let mut body = vec![0; length];
    reader.read_exact(&mut body).unwrap();
    let body = String::from_utf8(body).unwrap();
    log.lock()
        .unwrap()
        .push(format!("{target} {body}").trim_end().to_string());

    let (status, payload) = match target.as_str() {
        "POST /login" if body.contains("\"admin\"") => (200, r#"{"token":"abc"}"#),
        "POST /login" => (403, "{}"),
        "GET /item/42?token=abc" => (200, r#"{"id":42}"#),
        t if t.starts_with("GET /item/") => (401, "{}"),
        "GET /boom" => (500, "{}"),
        "POST /reset" => (204, ""),
        _ => (404, "{}"),
    };
    let reply = format!(
        "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{payload}",
        payload.len()
    );
    let _ = stream.write_all(reply.as_bytes());
}

fn serve() -> (String, Log) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let base = format!("http://{}", listener.local_addr().unwrap());
    let log: Log = Arc::default();
    let l = log.clone();
    thread::spawn(move || {
        for stream in listener.incoming().flatten() {
            handle(stream, l.clone());
        }
    });
    (base, log)
}

fn stmt(action: usize, inputs: &[(&str, InputValue)]) -> ActionInstance {
    ActionInstance {
        action,
        inputs: inputs
            .iter()
            .map(|(n, v)| InputGene {
                name: n.to_string(),
                value: v.clone(),
            })
            .collect(),
    }
}

fn sut(base: &str, reset: bool) -> LiveSut {
    let config = LiveConfig {
        base_url: base.to_string(),
        reset_url: reset.then(|| format!("{base}/reset")),
        timeout_ms: 2000,
    };
    LiveSut::new(
        config,
        parse_service_description(SERVICE).unwrap(),
        LiteralPool::default(),
    )
    .unwrap()
}

#[test]
fn targets_are_status_classes_per_action() {
    let s = sut("http://127.0.0.1:9", false);
    assert_eq!(s.targets().len(), 12);
    assert_eq!(s.targets()[7].kind, TargetKind::ResponseClass(5));
}

#[test]
fn token_flows_and_server_errors_are_faults() {
    let (base, log) = serve();
    let mut s = sut(&base, true);
    let test = TestCase::new(vec![
        stmt(0, &[("user", InputValue::Str("admin".into()))]),
        stmt(
            1,
            &[
                ("id", InputValue::Int(42)),
                ("token", InputValue::TokenRef { back: 1 }),
            ],
        ),
        stmt(2, &[]),
    ]);
    s.reset();
    let r = s.execute(&test).unwrap();
    assert_eq!(r.statuses, vec![200, 200, 500]);
    assert_eq!(r.faults.len(), 1);
    let f = r.faults.iter().next().unwrap();
    assert_eq!(
        (f.endpoint.as_str(), f.last_statement, f.status),
        ("/boom", None, 500)
    );
    // 2xx of login and item, 5xx of boom
    assert_eq!(r.covered, [0, 4, 11].into_iter().collect());
    let log = log.lock().unwrap();
    assert_eq!(log[0], "POST /reset");
    assert_eq!(log[1], r#"POST /login {"user":"admin"}"#);
    assert_eq!(log[2], "GET /item/42?token=abc");
}

#[test]
fn missing_token_gives_client_error() {
    let (base, _) = serve();
    let mut s = sut(&base, false);
    s.reset();
    let test = TestCase::new(vec![stmt(
        1,
        &[
            ("id", InputValue::Int(42)),
            ("token", InputValue::TokenRef { back: 1 }),
        ],
    )]);
    let r = s.execute(&test).unwrap();
    assert_eq!(r.statuses, vec![401]);
    assert!(r.faults.is_empty());
}

#[test]
fn unreachable_service_records_network_failure() {
    let port = TcpListener::bind("127.0.0.1:0")
        .unwrap()
        .local_addr()
        .unwrap()
        .port();
    let mut s = sut(&format!("http://127.0.0.1:{port}"), false);
    let r = s.execute(&TestCase::new(vec![stmt(2, &[])])).unwrap();
    assert_eq!(r.statuses, vec![NETWORK_FAILURE_STATUS]);
    assert!(r.covered.is_empty());
}

#[test]
fn bad_base_url_is_rejected() {
    let config = LiveConfig {
        base_url: "not a url".into(),
        reset_url: None,
        timeout_ms: 100,
    };
    assert!(LiveSut::new(
        config,
        parse_service_description(SERVICE).unwrap(),
        LiteralPool::default()
    )
    .is_err());
}
