//! Frontends backed by the process: scripted runs and the interactive console.

use std::io::{BufRead, Write};
use std::path::PathBuf;

use brr_core::session::{Event, Frontend, ScriptedFrontend};

fn read_relative(base: &Option<PathBuf>, path: &str) -> Result<String, String> {
    let p = match base {
        Some(dir) if PathBuf::from(path).is_relative() => dir.join(path),
        _ => PathBuf::from(path),
    };
    std::fs::read_to_string(&p).map_err(|e| format!("cannot load {}: {e}", p.display()))
}

/// Commands from a script; output collected as a transcript and
/// optionally echoed to stdout.
#[derive(Debug, Default)]
pub struct ScriptFrontend {
    pub inner: ScriptedFrontend,
    /// Directory `(load "...")` paths are relative to.
    pub base: Option<PathBuf>,
    pub echo: bool,
}

impl ScriptFrontend {
    pub fn new(script: &str, base: Option<PathBuf>) -> Self {
        ScriptFrontend { inner: ScriptedFrontend::from_script(script), base, echo: false }
    }

    pub fn transcript(&self) -> &str {
        &self.inner.transcript
    }

    fn flush_echo(&self, from: usize) {
        if self.echo {
            let mut out = std::io::stdout().lock();
            let _ = out.write_all(&self.inner.transcript.as_bytes()[from..]);
            let _ = out.flush();
        }
    }
}

impl Frontend for ScriptFrontend {
    fn emit(&mut self, event: Event) {
        let n = self.inner.transcript.len();
        self.inner.emit(event);
        self.flush_echo(n);
    }

    fn read_command(&mut self, prompt: &str) -> Option<String> {
        let n = self.inner.transcript.len();
        let cmd = self.inner.read_command(prompt);
        self.flush_echo(n);
        cmd
    }

    fn load_file(&mut self, path: &str) -> Result<String, String> {
        read_relative(&self.base, path)
    }
}

/// True once every paren opened in `text` is closed.
pub fn is_complete(text: &str) -> bool {
    let mut depth = 0i64;
    let mut in_string = false;
    let mut escaped = false;
    let mut comment = false;
    for c in text.chars() {
        if comment {
            comment = c != '\n';
            continue;
        }
        if in_string {
            match c {
                _ if escaped => escaped = false,
                '\\' => escaped = true,
                '"' => in_string = false,
                _ => {}
            }
            continue;
        }
        match c {
            '"' => in_string = true,
            ';' => comment = true,
            '(' => depth += 1,
            ')' => depth -= 1,
            _ => {}
        }
    }
    depth <= 0 && !in_string
}

/// Reads commands from a reader and prints events to a writer.
pub struct ConsoleFrontend<R, W> {
    input: R,
    output: W,
    base: Option<PathBuf>,
}

impl<R: BufRead, W: Write> ConsoleFrontend<R, W> {
    pub fn new(input: R, output: W) -> Self {
        ConsoleFrontend { input, output, base: None }
    }

    pub fn into_output(self) -> W {
        self.output
    }
}

impl<R: BufRead, W: Write> Frontend for ConsoleFrontend<R, W> {
    fn emit(&mut self, event: Event) {
        let _ = self.output.write_all(event.text().as_bytes());
        let _ = self.output.flush();
    }

    fn read_command(&mut self, prompt: &str) -> Option<String> {
        let _ = write!(self.output, "{prompt}");
        let _ = self.output.flush();
        let mut buf = String::new();
        loop {
            let mut line = String::new();
            match self.input.read_line(&mut line) {
                Ok(0) | Err(_) => return if buf.trim().is_empty() { None } else { Some(buf) },
                Ok(_) => {}
            }
            buf.push_str(&line);
            if !buf.trim().is_empty() && is_complete(&buf) {
                return Some(buf.trim().to_string());
            }
        }
    }

    fn load_file(&mut self, path: &str) -> Result<String, String> {
        read_relative(&self.base, path)
    }
}
