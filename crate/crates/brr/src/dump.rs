//! Dumps of a loaded brr-data list as JSON or s-expressions.

use brr_core::brr_data::BrrData;
use brr_core::sexpr::SExpr;
use serde_json::{json, Value};

fn record_json(r: &BrrData) -> Value {
    json!({
        "rune": r.rune().to_string(),
        "target": r.pre.target.to_string(),
        "result": r.post.brr_result.as_ref().map(|t| t.to_string()),
        "failure_reason": r.post.failure_reason.as_ref().map(|f| f.to_string()),
        "unify_subst": r.post.unify_subst.iter().map(|(v, t)| json!([v.to_string(), t.to_string()])).collect::<Vec<_>>(),
        "ancestors": r.pre.ancestors.iter().map(|a| a.to_string()).collect::<Vec<_>>(),
        "gstack_depth": r.pre.gstack.len(),
        "completed": r.completed.iter().map(record_json).collect::<Vec<_>>(),
    })
}

/// A JSON array of record trees, one node per application.
pub fn to_json(data: &[BrrData]) -> Value {
    Value::Array(data.iter().map(record_json).collect())
}

/// Counts nodes of a [`to_json`] tree.
pub fn json_node_count(v: &Value) -> usize {
    match v {
        Value::Array(items) => items.iter().map(json_node_count).sum(),
        Value::Object(m) => 1 + m.get("completed").map(json_node_count).unwrap_or(0),
        _ => 0,
    }
}

fn kw(name: &str) -> SExpr {
    SExpr::sym(name)
}

fn record_sexpr(r: &BrrData) -> SExpr {
    let opt = |t: Option<SExpr>| t.unwrap_or_else(SExpr::nil);
    SExpr::List(vec![
        SExpr::sym("BRR-DATA"),
        kw(":RUNE"),
        r.rune().to_sexpr(),
        kw(":TARGET"),
        r.pre.target.to_sexpr(),
        kw(":RESULT"),
        opt(r.post.brr_result.as_ref().map(|t| t.to_sexpr())),
        kw(":FAILURE-REASON"),
        opt(r.post.failure_reason.as_ref().map(|f| SExpr::Str(f.to_string()))),
        kw(":ANCESTORS"),
        SExpr::List(r.pre.ancestors.iter().map(|a| a.to_sexpr()).collect()),
        kw(":COMPLETED"),
        SExpr::List(r.completed.iter().map(record_sexpr).collect()),
    ])
}

/// Pretty-printed s-expressions, one top-level record per paragraph.
pub fn to_sexpr_text(data: &[BrrData]) -> String {
    let mut out = String::new();
    for r in data {
        pretty(&record_sexpr(r), 0, &mut out);
        out.push_str("\n\n");
    }
    out
}

const WIDTH: usize = 78;

fn pretty(s: &SExpr, indent: usize, out: &mut String) {
    let flat = s.to_string();
    let items = match s {
        SExpr::List(items) if indent + flat.len() > WIDTH && !items.is_empty() => items,
        _ => {
            out.push_str(&flat);
            return;
        }
    };
    out.push('(');
    pretty(&items[0], indent + 1, out);
    let mut rest = items[1..].iter().peekable();
    while let Some(item) = rest.next() {
        out.push('\n');
        out.push_str(&" ".repeat(indent + 1));
        pretty(item, indent + 1, out);
        // keep a keyword and its value on one line
        if item.as_symbol().is_some_and(|k| k.is_keyword()) {
            if let Some(v) = rest.next() {
                out.push(' ');
                let col = indent + 2 + item.to_string().len();
                pretty(v, col, out);
            }
        }
    }
    out.push(')');
}
