#![allow(dead_code)]

use std::path::PathBuf;

use brr::frontend::ScriptFrontend;
use brr::normalize_ws;
use brr_core::session::Session;

pub fn crate_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

pub fn read(rel: &str) -> String {
    let p = crate_dir().join(rel);
    std::fs::read_to_string(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

/// Runs a script from `scripts/` and returns the finished session.
pub fn run_script(name: &str) -> Session<ScriptFrontend> {
    let text = read(&format!("scripts/{name}.brr"));
    let mut s = Session::new(ScriptFrontend::new(&text, Some(crate_dir().join("scripts"))));
    s.repl();
    s
}

pub fn transcript(name: &str) -> String {
    run_script(name).frontend().transcript().to_string()
}

/// True iff `fragment` occurs in `text` modulo whitespace.
pub fn contains_ws(text: &str, fragment: &str) -> bool {
    normalize_ws(text).contains(&normalize_ws(fragment))
}

pub fn world(file: &str) -> brr_core::World {
    let mut w = brr_core::World::new();
    w.load_text(&read(&format!("worlds/{file}"))).unwrap();
    w
}
pub mod gen;
