//! One-way matching of patterns against terms.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::vec::Vec;

use crate::sexpr::Symbol;
use crate::term::{Substitution, Term};

/// Extends `init` so that applying it to `pattern` yields `target`.
/// Quoted constants match only identical quoted constants.
pub fn match_term(pattern: &Term, target: &Term, init: &Substitution) -> Option<Substitution> {
    let mut s = init.clone();
    if match_into(pattern, target, &mut s) {
        Some(s)
    } else {
        None
    }
}

fn match_into(pattern: &Term, target: &Term, s: &mut Substitution) -> bool {
    match pattern {
        Term::Var(v) => match s.get(v) {
            Some(bound) => bound == target,
            None => s.bind(v.clone(), target.clone()),
        },
        Term::Quote(_) => pattern == target,
        Term::App(f, pargs) => match target {
            Term::App(g, targs) if f == g && pargs.len() == targs.len() => {
                pargs.iter().zip(targs).all(|(p, t)| match_into(p, t, s))
            }
            _ => false,
        },
    }
}

/// Generates `GENSYM0`, `GENSYM1`, ... skipping names already in use.
#[derive(Debug, Clone)]
pub struct FreshNames {
    taken: BTreeSet<Symbol>,
    next: usize,
}

impl FreshNames {
    pub fn avoiding(taken: BTreeSet<Symbol>) -> Self {
        FreshNames { taken, next: 0 }
    }

    pub fn fresh(&mut self) -> Symbol {
        loop {
            let candidate = Symbol::new(&format!("GENSYM{}", self.next));
            self.next += 1;
            if self.taken.insert(candidate.clone()) {
                return candidate;
            }
        }
    }
}

/// Replaces every quoted LAMBDA in `pattern` by a fresh variable,
/// left to right. Returns the generalized pattern and the fresh names.
pub fn generalize_lambdas(pattern: &Term) -> (Term, Vec<Symbol>) {
    let mut names = FreshNames::avoiding(pattern.vars());
    let mut introduced = Vec::new();
    let generalized = replace_lambdas(pattern, &mut names, &mut introduced);
    (generalized, introduced)
}

fn replace_lambdas(t: &Term, names: &mut FreshNames, introduced: &mut Vec<Symbol>) -> Term {
    match t {
        Term::Quote(_) if t.is_quoted_lambda() => {
            let v = names.fresh();
            introduced.push(v.clone());
            Term::Var(v)
        }
        Term::App(f, args) => Term::App(
            f.clone(),
            args.iter().map(|a| replace_lambdas(a, names, introduced)).collect(),
        ),
        _ => t.clone(),
    }
}

/// True iff `pattern` fails to match `target` only because of quoted
/// LAMBDA constants: the lambda-generalized pattern matches, the plain
/// pattern does not, and some generalized position lines up with a quoted
/// LAMBDA in the target.
pub fn matches_except_lambdas(pattern: &Term, target: &Term) -> bool {
    if match_term(pattern, target, &Substitution::new()).is_some() {
        return false;
    }
    let (generalized, fresh) = generalize_lambdas(pattern);
    let Some(s) = match_term(&generalized, target, &Substitution::new()) else {
        return false;
    };
    fresh
        .iter()
        .any(|v| s.get(v).is_some_and(Term::is_quoted_lambda))
}
