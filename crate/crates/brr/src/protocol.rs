//! Newline-delimited JSON session protocol.
//!
//! Every server message is `{"seq": n, "kind": k, "payload": {...}}`
//! with `seq` strictly increasing. Clients send
//! `{"kind": "command", "payload": {"text": "..."}}`. See
//! `docs/protocol.md` for the payload of each kind.

use std::io::{BufRead, Write};
use std::net::TcpListener;
use std::path::PathBuf;
use std::sync::mpsc::{channel, Receiver};
use std::sync::{Arc, Mutex};
use std::thread;

use anyhow::Result;
use brr_core::session::{Event, Frontend, Session, TOP_PROMPT};
use serde_json::{json, Value};

/// Serializes messages and numbers them.
pub struct Outbox {
    writer: Box<dyn Write + Send>,
    seq: u64,
}

impl Outbox {
    pub fn new(writer: Box<dyn Write + Send>) -> Self {
        Outbox { writer, seq: 0 }
    }

    pub fn send(&mut self, kind: &str, payload: Value) {
        self.seq += 1;
        let msg = json!({"seq": self.seq, "kind": kind, "payload": payload});
        let _ = writeln!(self.writer, "{msg}");
        let _ = self.writer.flush();
    }
}

/// Converts an event to its `(kind, payload)`.
pub fn event_message(e: &Event) -> (&'static str, Value) {
    let text = e.text();
    match e {
        Event::Output(_) => ("event", json!({"type": "output", "text": text})),
        Event::Ack(v) => ("event", json!({"type": "ack", "value": v, "text": text})),
        Event::Warning(m) => ("event", json!({"type": "warning", "message": m, "text": text})),
        Event::Error(m) => ("error", json!({"message": m, "text": text})),
        Event::BreakOpen { depth, rune, target, criteria, near_miss, .. } => (
            "break-open",
            json!({
                "depth": depth,
                "rune": rune,
                "target": target,
                "criteria": criteria,
                "near_miss_messages": near_miss,
                "text": text,
            }),
        ),
        Event::BreakClose { depth, rune, .. } => {
            ("break-close", json!({"depth": depth, "rune": rune, "text": text}))
        }
        Event::ProofOutcome { proved, checkpoints, .. } => {
            ("proof-outcome", json!({"proved": proved, "checkpoints": checkpoints, "text": text}))
        }
        Event::QueryResult { found, product, frames, result, .. } => (
            "query-result",
            json!({
                "found": found,
                "product": product,
                "frames": frames
                    .iter()
                    .enumerate()
                    .map(|(i, f)| json!({"number": i + 1, "text": f}))
                    .collect::<Vec<_>>(),
                "result": result,
                "text": text,
            }),
        ),
    }
}

/// Extracts the command text of a client line.
pub fn parse_client_line(line: &str) -> Result<String, String> {
    let v: Value = serde_json::from_str(line).map_err(|e| format!("malformed JSON: {e}"))?;
    if v.get("kind").and_then(Value::as_str) != Some("command") {
        return Err("expected a message of kind \"command\"".into());
    }
    match v.pointer("/payload/text").and_then(Value::as_str) {
        Some(t) => Ok(t.to_string()),
        None => Err("command message needs payload.text".into()),
    }
}

pub struct ProtocolFrontend {
    out: Arc<Mutex<Outbox>>,
    commands: Receiver<String>,
    base: Option<PathBuf>,
}

impl ProtocolFrontend {
    fn send(&self, kind: &str, payload: Value) {
        self.out.lock().expect("outbox lock").send(kind, payload);
    }
}

impl Frontend for ProtocolFrontend {
    fn emit(&mut self, event: Event) {
        let (kind, payload) = event_message(&event);
        self.send(kind, payload);
    }

    fn read_command(&mut self, prompt: &str) -> Option<String> {
        if prompt == TOP_PROMPT {
            self.send("event", json!({"type": "ready", "prompt": prompt}));
        } else {
            let depth: usize = prompt.split_whitespace().next().and_then(|d| d.parse().ok()).unwrap_or(0);
            self.send("break-prompt", json!({"depth": depth, "prompt": prompt}));
        }
        let cmd = self.commands.recv().ok()?;
        self.send("command", json!({"text": cmd, "prompt": prompt}));
        Some(cmd)
    }

    fn load_file(&mut self, path: &str) -> Result<String, String> {
        let p = match &self.base {
            Some(dir) if PathBuf::from(path).is_relative() => dir.join(path),
            _ => PathBuf::from(path),
        };
        std::fs::read_to_string(&p).map_err(|e| format!("cannot load {}: {e}", p.display()))
    }
}

/// Runs one protocol session until the client disconnects or quits.
/// `setup` prepares the session (rules, settings) before the first prompt.
pub fn serve<R>(
    reader: R,
    writer: Box<dyn Write + Send>,
    setup: impl FnOnce(&mut Session<ProtocolFrontend>) -> Result<()>,
) -> Result<Session<ProtocolFrontend>>
where
    R: BufRead + Send + 'static,
{
    let out = Arc::new(Mutex::new(Outbox::new(writer)));
    let (tx, rx) = channel();
    let reader_out = out.clone();
    thread::spawn(move || {
        for line in reader.lines() {
            let Ok(line) = line else { break };
            if line.trim().is_empty() {
                continue;
            }
            match parse_client_line(&line) {
                Ok(cmd) => {
                    if tx.send(cmd).is_err() {
                        break;
                    }
                }
                Err(m) => reader_out.lock().expect("outbox lock").send("error", json!({"message": m})),
            }
        }
    });
    let frontend = ProtocolFrontend { out, commands: rx, base: None };
    let mut session = Session::new(frontend);
    setup(&mut session)?;
    session.repl();
    Ok(session)
}

/// Serves sessions over TCP, one connection at a time.
pub fn serve_tcp(
    addr: &str,
    setup: impl Fn(&mut Session<ProtocolFrontend>) -> Result<()>,
) -> Result<()> {
    let listener = TcpListener::bind(addr)?;
    eprintln!("listening on {}", listener.local_addr()?);
    for stream in listener.incoming() {
        let stream = stream?;
        let reader = std::io::BufReader::new(stream.try_clone()?);
        serve(reader, Box::new(stream), &setup)?;
    }
    Ok(())
}
