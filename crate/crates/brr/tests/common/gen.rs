//! Seeded random terms, worlds and goals over a small signature.

use rand::seq::SliceRandom;
use rand::Rng;

pub const FNS: &[(&str, usize)] = &[("G0", 1), ("G1", 2), ("G2", 1), ("G3", 2)];

fn leaf<R: Rng>(rng: &mut R, vars: &[&str], consts: bool) -> String {
    if consts && (vars.is_empty() || rng.gen_bool(0.2)) {
        return if rng.gen_bool(0.5) { "'0".into() } else { "'1".into() };
    }
    vars.choose(rng).expect("no variables").to_string()
}

/// A random term of depth at most `depth`.
pub fn term<R: Rng>(rng: &mut R, depth: usize, vars: &[&str], consts: bool) -> String {
    if depth == 0 || rng.gen_bool(0.3) {
        return leaf(rng, vars, consts);
    }
    app(rng, depth, vars, consts)
}

/// A random function application of depth at most `depth` (at least 1).
pub fn app<R: Rng>(rng: &mut R, depth: usize, vars: &[&str], consts: bool) -> String {
    let (f, n) = FNS[rng.gen_range(0..FNS.len())];
    let args: Vec<String> = (0..n).map(|_| term(rng, depth.saturating_sub(1), vars, consts)).collect();
    format!("({f} {})", args.join(" "))
}

fn vars_in<'a>(text: &str, candidates: &[&'a str]) -> Vec<&'a str> {
    let tokens: Vec<&str> = text.split(|c: char| c == '(' || c == ')' || c.is_whitespace()).collect();
    candidates.iter().copied().filter(|v| tokens.contains(v)).collect()
}

/// Rule forms; some may be rejected by the loader (e.g. a variable lhs).
pub fn world_forms<R: Rng>(rng: &mut R) -> Vec<String> {
    let mut out = vec![
        "(defrule pa :lhs (p0 (g2 x)) :rhs 't)".to_string(),
        "(defrule pb :hyps ((p0 x)) :lhs (p0 (g0 x)) :rhs 't)".to_string(),
        "(defrule pc :hyps ((p1 x)) :lhs (p0 (g3 x y)) :rhs 't)".to_string(),
    ];
    for i in 0..rng.gen_range(2..7) {
        let quoted = rng.gen_bool(0.3);
        let lhs = app(rng, 2, &["X", "Y"], quoted);
        let lvars = vars_in(&lhs, &["X", "Y"]);
        let rhs = term(rng, 2, &lvars, true);
        let hyps = match lvars.choose(rng) {
            Some(v) if rng.gen_bool(0.4) => format!(" :hyps ((p0 {v}))"),
            _ => String::new(),
        };
        out.push(format!("(defrule r{i}{hyps} :lhs {lhs} :rhs {rhs})"));
    }
    out
}

pub fn world<R: Rng>(rng: &mut R) -> brr_core::World {
    let mut w = brr_core::World::new();
    for f in world_forms(rng) {
        let _ = w.load_text(&f);
    }
    w
}

pub fn goal<R: Rng>(rng: &mut R) -> String {
    let t1 = app(rng, 3, &["X", "Y"], true);
    let t2 = term(rng, 3, &["X", "Y"], true);
    match rng.gen_range(0..5) {
        0 => format!("(implies (p0 x) (equal {t1} {t2}))"),
        4 => format!("(p0 (g0 (g3 {t1} {t2})))"),
        1 => format!("(p0 {t1})"),
        2 => format!("(implies (p0 (g2 y)) (p0 {t1}))"),
        _ => format!("(equal {t1} {t2})"),
    }
}
