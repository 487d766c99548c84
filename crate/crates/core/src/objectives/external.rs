//! Black-box adapter that runs one external process per evaluation.
//!
//! The child receives one line on stdin, `{"params": {name: value, ...}}`, and
//! must answer with one line on stdout, `{"objective": number}` with an
//! optional `"status"` field. Anything else is a failure, never an error.
use super::{EvalContext, Objective};
use crate::domain::{Point, SearchSpace, Value};
use crate::trial::Outcome;
use serde_json::{json, Map};
use std::io::{BufRead, BufReader, Write};
use std::process::{Command, Stdio};
use std::sync::mpsc;
use std::time::{Duration, Instant};

pub const NONZERO_EXIT: &str = "nonzero_exit";
pub const TIMEOUT: &str = "timeout";
pub const PARSE_ERROR: &str = "parse_error";

#[derive(Debug, Clone)]
pub struct ExternalObjective {
    command: Vec<String>,
    timeout: Duration,
    names: Vec<String>,
}

impl ExternalObjective {
    /// `command[0]` is the program, the rest are its arguments.
    pub fn new(space: &SearchSpace, command: Vec<String>, timeout_ms: u64) -> Self {
        Self {
            command,
            timeout: Duration::from_millis(timeout_ms),
            names: space.variables().iter().map(|v| v.name.clone()).collect(),
        }
    }

    pub fn request_line(&self, p: &Point) -> String {
        let params: Map<String, serde_json::Value> = self
            .names
            .iter()
            .zip(&p.values)
            .map(|(name, v)| {
                let jv = match v {
                    Value::Real(x) => json!(x),
                    Value::Int(k) => json!(k),
                    Value::Level(s) => json!(s),
                };
                (name.clone(), jv)
            })
            .collect();
        json!({ "params": params }).to_string()
    }

    pub fn run(&self, p: &Point) -> Outcome {
        let Some((program, args)) = self.command.split_first() else {
            return Outcome::Fail(NONZERO_EXIT.into());
        };
        let spawned = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn();
        // an unlaunchable command is reported the way a shell would: a nonzero exit
        let Ok(mut child) = spawned else {
            return Outcome::Fail(NONZERO_EXIT.into());
        };
        let deadline = Instant::now() + self.timeout;

        if let Some(mut stdin) = child.stdin.take() {
            let line = self.request_line(p);
            let _ = writeln!(stdin, "{line}");
        }

        let (tx, rx) = mpsc::channel();
        if let Some(stdout) = child.stdout.take() {
            std::thread::spawn(move || {
                let mut line = String::new();
                let _ = BufReader::new(stdout).read_line(&mut line);
                let _ = tx.send(line);
            });
        }

        let status = loop {
            match child.try_wait() {
                Ok(Some(status)) => break status,
                Ok(None) if Instant::now() >= deadline => {
                    let _ = child.kill();
                    let _ = child.wait();
                    return Outcome::Fail(TIMEOUT.into());
                }
                Ok(None) => std::thread::sleep(Duration::from_millis(2)),
                Err(_) => return Outcome::Fail(NONZERO_EXIT.into()),
            }
        };
        if !status.success() {
            return Outcome::Fail(NONZERO_EXIT.into());
        }
        // a grandchild may still hold the pipe open; never wait past the deadline
        let remaining = deadline.saturating_duration_since(Instant::now()) + Duration::from_millis(100);
        match rx.recv_timeout(remaining) {
            Ok(line) => parse_response(&line),
            Err(mpsc::RecvTimeoutError::Timeout) => Outcome::Fail(TIMEOUT.into()),
            Err(mpsc::RecvTimeoutError::Disconnected) => Outcome::Fail(PARSE_ERROR.into()),
        }
    }
}

/// Parses one response line. A `"status"` other than `"ok"` is reported as a
/// failure with reason `reported`.
pub fn parse_response(line: &str) -> Outcome {
    let Ok(serde_json::Value::Object(obj)) = serde_json::from_str::<serde_json::Value>(line.trim()) else {
        return Outcome::Fail(PARSE_ERROR.into());
    };
    if let Some(status) = obj.get("status") {
        match status.as_str() {
            Some("ok") => {}
            Some(_) => return Outcome::Fail("reported".into()),
            None => return Outcome::Fail(PARSE_ERROR.into()),
        }
    }
    match obj.get("objective").and_then(|v| v.as_f64()) {
        Some(v) if v.is_finite() => Outcome::Ok(v),
        _ => Outcome::Fail(PARSE_ERROR.into()),
    }
}

impl Objective for ExternalObjective {
    fn evaluate(&self, p: &Point, _ctx: &EvalContext) -> Outcome {
        self.run(p)
    }
}
