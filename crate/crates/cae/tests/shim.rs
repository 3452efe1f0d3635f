use std::io::{BufRead, BufReader, Write};
use std::process::{Command, Stdio};

use cae::sandbox::protocol::{Message, Reply, UnitSource};
use serde_json::{json, Value};

fn load(source: &str) -> Value {
    json!({"op": "load", "units": [{"name": "main", "source": source}], "entrypoint": "main"})
}

#[test]
fn wire_format_is_one_tagged_object_per_line() {
    let load = Message::Load {
        units: vec![UnitSource {
            name: "main".into(),
            source: "k = 2".into(),
        }],
        entrypoint: "main".into(),
    };
    assert_eq!(
        serde_json::to_value(&load).unwrap(),
        json!({"op": "load", "units": [{"name": "main", "source": "k = 2"}], "entrypoint": "main"})
    );
    assert_eq!(
        serde_json::to_value(Message::Call { request: json!({"task": "guide_tsp"}) }).unwrap(),
        json!({"op": "call", "request": {"task": "guide_tsp"}})
    );
    assert_eq!(serde_json::to_string(&Message::Shutdown).unwrap(), r#"{"op":"shutdown"}"#);
    let raised: Reply = serde_json::from_str(r#"{"ok":false,"error":"ValueError: x","traceback":"Traceback ..."}"#).unwrap();
    assert!(!raised.ok);
    assert_eq!(raised.traceback.as_deref(), Some("Traceback ..."));
    assert_eq!(serde_json::to_string(&Reply::ok()).unwrap(), r#"{"ok":true}"#);
}

#[test]
fn interactive_session_answers_each_request_in_turn() {
    let mut child = Command::new(env!("CARGO_BIN_EXE_cae-stub-shim"))
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    let mut stdin = child.stdin.take().unwrap();
    let mut stdout = BufReader::new(child.stdout.take().unwrap());
    let mut ask = |line: &str| -> Value {
        writeln!(stdin, "{line}").unwrap();
        stdin.flush().unwrap();
        let mut reply = String::new();
        stdout.read_line(&mut reply).unwrap();
        serde_json::from_str(&reply).unwrap()
    };
    let guide = json!({"op": "call", "request": {"task": "guide_tsp", "algorithm": "GA", "edges": [[0, 1, 2.0], [1, 2, 4.0]]}}).to_string();

    assert_eq!(ask(&guide), json!({"ok": false, "error": "not_loaded"}));
    assert_eq!(ask("not json"), json!({"ok": false, "error": "protocol"}));
    assert_eq!(ask(&load("guide = inverse_square").to_string()), json!({"ok": true}));
    let r = ask(&guide);
    assert_eq!(r["ok"], true);
    assert_eq!(r["response"]["scores"], json!([0.25, 0.0625]));
    assert_eq!(ask(&load("returns = function").to_string()), json!({"ok": true}));
    assert_eq!(ask(&guide), json!({"ok": false, "error": "unserializable"}));
    assert_eq!(ask(&load("raise = KeyError: 'x'").to_string()), json!({"ok": true}));
    let r = ask(&guide);
    assert_eq!(r["error"], "KeyError: 'x'");
    assert!(r["traceback"].as_str().unwrap().contains("main"));

    writeln!(stdin, r#"{{"op":"shutdown"}}"#).unwrap();
    drop(stdin);
    let mut rest = String::new();
    assert_eq!(stdout.read_line(&mut rest).unwrap(), 0, "no reply to shutdown");
    assert!(child.wait().unwrap().success());
}

#[test]
fn end_of_input_exits_cleanly() {
    let out = Command::new(env!("CARGO_BIN_EXE_cae-stub-shim"))
        .stdin(Stdio::null())
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(out.stdout.is_empty());
}
