//! Break-rewrite state: the status stack, near-miss detection, the break
//! condition interpreter, and the locals visible to break commands.
//!
//! The handlers themselves live in [`crate::session`], which owns the I/O.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::matching::{generalize_lambdas, match_term, matches_except_lambdas, FreshNames};
use crate::rewriter::{FailureReason, GStack, TypeAlist};
use crate::rules::{BreakCriteria, MonitorTable, RewriteRule, Rune};
use crate::sexpr::{SExpr, Symbol};
use crate::term::{Substitution, Term};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ExitMode {
    Eval,
    Go,
    Ok,
    EvalBang,
    GoBang,
    OkBang,
}

impl ExitMode {
    pub fn from_command(cmd: &str) -> Option<ExitMode> {
        Some(match cmd {
            ":EVAL" => ExitMode::Eval,
            ":GO" => ExitMode::Go,
            ":OK" => ExitMode::Ok,
            ":EVAL!" => ExitMode::EvalBang,
            ":GO!" => ExitMode::GoBang,
            ":OK!" => ExitMode::OkBang,
            _ => return None,
        })
    }

    /// Bang variants suppress breaks inside the attempt.
    pub fn is_bang(self) -> bool {
        matches!(self, ExitMode::EvalBang | ExitMode::GoBang | ExitMode::OkBang)
    }

    pub fn base(self) -> ExitMode {
        match self {
            ExitMode::EvalBang => ExitMode::Eval,
            ExitMode::GoBang => ExitMode::Go,
            ExitMode::OkBang => ExitMode::Ok,
            m => m,
        }
    }

    pub fn keyword(self) -> &'static str {
        match self {
            ExitMode::Eval => ":EVAL",
            ExitMode::Go => ":GO",
            ExitMode::Ok => ":OK",
            ExitMode::EvalBang => ":EVAL!",
            ExitMode::GoBang => ":GO!",
            ExitMode::OkBang => ":OK!",
        }
    }
}

/// What a break knows about the rule attempt it interrupted.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BreakLocals {
    pub rule: RewriteRule,
    pub target: Term,
    pub unify_subst: Substitution,
    pub type_alist: TypeAlist,
    pub ancestors: Vec<Term>,
    pub gstack: GStack,
    pub criteria: BreakCriteria,
    /// Messages of the satisfied near-miss criteria; empty for ordinary breaks.
    pub near_miss: Vec<String>,
    /// Set once the attempt has finished.
    pub wonp: Option<bool>,
    pub failure_reason: Option<FailureReason>,
    pub brr_result: Option<Term>,
}

impl BreakLocals {
    pub fn rune(&self) -> &Rune {
        &self.rule.rune
    }

    /// The value of `(brr@ key)`, with `key` an upper-case keyword.
    pub fn brr_at(&self, key: &str, depth: usize) -> Option<SExpr> {
        let term_list = |ts: &[Term]| SExpr::List(ts.iter().map(Term::to_sexpr).collect());
        Some(match key {
            ":TARGET" => self.target.to_sexpr(),
            ":LHS" => self.rule.lhs.to_sexpr(),
            ":RHS" => self.rule.rhs.to_sexpr(),
            ":HYPS" => term_list(&self.rule.hyps),
            ":RUNE" | ":LEMMA" => self.rule.rune.to_sexpr(),
            ":UNIFY-SUBST" => subst_to_sexpr(&self.unify_subst),
            ":TYPE-ALIST" => type_alist_to_sexpr(&self.type_alist),
            ":ANCESTORS" => term_list(&self.ancestors),
            ":DEPTH" => SExpr::Int(depth as i64),
            ":WONP" => bool_sexpr(self.wonp.unwrap_or(false)),
            ":FAILURE-REASON" => match &self.failure_reason {
                Some(r) => SExpr::Str(r.to_string()),
                None => SExpr::nil(),
            },
            ":BRR-RESULT" => match &self.brr_result {
                Some(t) => t.to_sexpr(),
                None => SExpr::nil(),
            },
            _ => return None,
        })
    }

    /// The raw value of `(get-brr-local 'name)`.
    pub fn get_local(&self, name: &str, depth: usize) -> Option<SExpr> {
        self.brr_at(&format!(":{name}"), depth)
    }
}

fn bool_sexpr(b: bool) -> SExpr {
    if b {
        SExpr::t()
    } else {
        SExpr::nil()
    }
}

pub fn subst_to_sexpr(s: &Substitution) -> SExpr {
    SExpr::List(
        s.iter()
            .rev()
            .map(|(v, t)| SExpr::List(alloc::vec![SExpr::Sym(v.clone()), t.to_sexpr()]))
            .collect(),
    )
}

pub fn type_alist_to_sexpr(ta: &TypeAlist) -> SExpr {
    SExpr::List(
        ta.entries()
            .iter()
            .map(|(t, b)| SExpr::List(alloc::vec![t.to_sexpr(), bool_sexpr(*b)]))
            .collect(),
    )
}

/// One open break.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OpenBreak {
    pub gstack: GStack,
    pub locals: BreakLocals,
    pub exit_mode: Option<ExitMode>,
}

impl OpenBreak {
    pub fn suppresses_inner(&self) -> bool {
        self.exit_mode.is_some_and(ExitMode::is_bang)
    }
}

/// The status of the `brr` wormhole: monitored runes and one layer per
/// open break, innermost last.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct BrrStatus {
    pub monitored: MonitorTable,
    pub stack: Vec<OpenBreak>,
}

impl BrrStatus {
    pub fn depth(&self) -> usize {
        self.stack.len()
    }

    pub fn top(&self) -> Option<&OpenBreak> {
        self.stack.last()
    }

    pub fn top_mut(&mut self) -> Option<&mut OpenBreak> {
        self.stack.last_mut()
    }

    /// True iff some open break was left with a bang exit mode.
    pub fn inner_breaks_suppressed(&self) -> bool {
        self.stack.iter().any(OpenBreak::suppresses_inner)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum NearMissCriterion {
    Lambda,
    Depth(u64),
    Abstraction(Term),
}

impl NearMissCriterion {
    pub fn message(&self) -> String {
        match self {
            NearMissCriterion::Lambda => {
                String::from(":LHS matches :TARGET except at one or more quoted LAMBDA constants.")
            }
            NearMissCriterion::Depth(k) => format!(":LHS matches :TARGET down to depth {k}."),
            NearMissCriterion::Abstraction(p) => format!("The :ABSTRACTION pattern {p} matches :TARGET."),
        }
    }
}

/// Generalizes `lhs` for a near-miss criterion.
///
/// For `Depth(k)` the root has depth 1; every non-variable subterm deeper
/// than `k` becomes a fresh variable, left to right. The root is kept.
pub fn near_miss_pattern(criterion: &NearMissCriterion, lhs: &Term) -> Term {
    match criterion {
        NearMissCriterion::Lambda => generalize_lambdas(lhs).0,
        NearMissCriterion::Depth(k) => {
            let mut names = FreshNames::avoiding(lhs.vars());
            match lhs {
                Term::App(f, args) => {
                    Term::App(f.clone(), args.iter().map(|a| cut_at_depth(a, 2, *k, &mut names)).collect())
                }
                _ => lhs.clone(),
            }
        }
        NearMissCriterion::Abstraction(p) => p.clone(),
    }
}

fn cut_at_depth(t: &Term, depth: u64, k: u64, names: &mut FreshNames) -> Term {
    match t {
        Term::Var(_) => t.clone(),
        _ if depth > k => Term::Var(names.fresh()),
        Term::App(f, args) => {
            Term::App(f.clone(), args.iter().map(|a| cut_at_depth(a, depth + 1, k, names)).collect())
        }
        Term::Quote(_) => t.clone(),
    }
}

/// The near-miss criteria of `criteria`, in display order.
pub fn near_miss_criteria(criteria: &BreakCriteria) -> Vec<NearMissCriterion> {
    let mut out = Vec::new();
    if criteria.lambda {
        out.push(NearMissCriterion::Lambda);
    }
    if let Some(k) = criteria.depth {
        out.push(NearMissCriterion::Depth(k));
    }
    if let Some(p) = &criteria.abstraction {
        out.push(NearMissCriterion::Abstraction(p.clone()));
    }
    out
}

/// A satisfied near-miss criterion and the pattern that matched.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NearMiss {
    pub criterion: NearMissCriterion,
    pub pattern: Term,
    pub message: String,
}

/// Checks each near-miss criterion against a target the lhs failed to match.
pub fn brr_near_missp(criteria: &BreakCriteria, lhs: &Term, target: &Term) -> Vec<NearMiss> {
    if match_term(lhs, target, &Substitution::new()).is_some() {
        return Vec::new();
    }
    near_miss_criteria(criteria)
        .into_iter()
        .filter_map(|c| {
            let pattern = near_miss_pattern(&c, lhs);
            let hit = match c {
                NearMissCriterion::Lambda => matches_except_lambdas(lhs, target),
                _ => match_term(&pattern, target, &Substitution::new()).is_some(),
            };
            hit.then(|| NearMiss { message: c.message(), criterion: c, pattern })
        })
        .collect()
}

/// The text between the near-miss banner line and the prompt.
pub fn near_miss_explanation(criteria: &BreakCriteria, misses: &[NearMiss]) -> String {
    let mut out = String::from(
        "The pattern in this rule failed to match the target.  However, this\n\
         is considered a NEAR MISS under the break criteria, \n",
    );
    out.push_str(&format!("{criteria}, specified when this rule was monitored.\n"));
    if misses.len() == 1 {
        out.push_str("The following criterion is satisfied.\n\n");
    } else {
        out.push_str("The following criteria are satisfied.\n\n");
    }
    for m in misses {
        out.push_str(&format!("* {}\n", m.message));
    }
    out
}

/// Evaluates a break condition. `brr_at` supplies `(brr@ :key)` values.
pub fn eval_condition(
    expr: &SExpr,
    brr_at: &dyn Fn(&str) -> Option<SExpr>,
) -> Result<SExpr, String> {
    match expr {
        SExpr::Int(_) | SExpr::Str(_) => Ok(expr.clone()),
        SExpr::Sym(s) if s.as_str() == "T" || s.as_str() == "NIL" || s.is_keyword() => Ok(expr.clone()),
        SExpr::Sym(s) => Err(format!("unbound variable {s}")),
        SExpr::List(items) => {
            let Some((SExpr::Sym(f), args)) = items.split_first() else {
                return Err(format!("cannot evaluate {expr}"));
            };
            let ev = |e: &SExpr| eval_condition(e, brr_at);
            let arity = |n: usize| {
                if args.len() == n {
                    Ok(())
                } else {
                    Err(format!("{f} expects {n} argument(s) in {expr}"))
                }
            };
            match f.as_str() {
                "QUOTE" => {
                    arity(1)?;
                    Ok(args[0].clone())
                }
                "EQUAL" => {
                    arity(2)?;
                    Ok(bool_sexpr(ev(&args[0])? == ev(&args[1])?))
                }
                "NOT" => {
                    arity(1)?;
                    Ok(bool_sexpr(ev(&args[0])?.is_nil()))
                }
                "IF" => {
                    arity(3)?;
                    if ev(&args[0])?.is_nil() {
                        ev(&args[2])
                    } else {
                        ev(&args[1])
                    }
                }
                "AND" => {
                    let mut last = SExpr::t();
                    for a in args {
                        last = ev(a)?;
                        if last.is_nil() {
                            break;
                        }
                    }
                    Ok(last)
                }
                "OR" => {
                    for a in args {
                        let v = ev(a)?;
                        if !v.is_nil() {
                            return Ok(v);
                        }
                    }
                    Ok(SExpr::nil())
                }
                "BRR@" => {
                    arity(1)?;
                    let key = match &args[0] {
                        SExpr::Sym(k) if k.is_keyword() => k.as_str().to_string(),
                        other => return Err(format!("BRR@ expects a keyword, not {other}")),
                    };
                    brr_at(&key).ok_or_else(|| format!("unknown BRR@ key {key}"))
                }
                _ => Err(format!("unsupported function {f} in break condition")),
            }
        }
    }
}

/// Every rune mentioned by a monitor table.
pub fn monitored_runes(table: &MonitorTable) -> BTreeSet<Rune> {
    table.entries().iter().map(|e| e.rune.clone()).collect()
}

/// Symbol used for the break-rewrite wormhole.
pub fn brr_wormhole() -> Symbol {
    Symbol::new("BRR")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sexpr::parse;
    use crate::term::parse_term;

    fn t(s: &str) -> Term {
        parse_term(s).unwrap()
    }

    #[test]
    fn depth_two_pattern() {
        let p = near_miss_pattern(&NearMissCriterion::Depth(2), &t("(F (G (H X) X))"));
        assert_eq!(p.to_string(), "(F (G GENSYM0 X))");
    }

    #[test]
    fn depth_zero_keeps_root_and_variables() {
        let p = near_miss_pattern(&NearMissCriterion::Depth(0), &t("(F (G A) 'C B)"));
        assert_eq!(p.to_string(), "(F GENSYM0 GENSYM1 B)");
    }

    #[test]
    fn lambda_pattern() {
        let p = near_miss_pattern(&NearMissCriterion::Lambda, &t("(ALWAYS$ '(LAMBDA (E) (ATOM E)) (NATS N))"));
        assert_eq!(p.to_string(), "(ALWAYS$ GENSYM0 (NATS N))");
    }

    #[test]
    fn lambda_near_miss_report() {
        let c = BreakCriteria { lambda: true, ..BreakCriteria::default() };
        let lhs = t("(ALWAYS$ '(LAMBDA (LOOP$-IVAR) (ATOM LOOP$-IVAR)) (NATS N))");
        let target = t("(ALWAYS$ '(LAMBDA (LOOP$-IVAR) (IF (CONSP LOOP$-IVAR) 'NIL 'T)) (NATS (FOO A)))");
        let report = brr_near_missp(&c, &lhs, &target);
        assert_eq!(report.len(), 1);
        assert_eq!(report[0].message, ":LHS matches :TARGET except at one or more quoted LAMBDA constants.");
        assert!(brr_near_missp(&BreakCriteria::default(), &lhs, &target).is_empty());
    }

    #[test]
    fn depth_near_miss_report() {
        let c = BreakCriteria { depth: Some(1), ..BreakCriteria::default() };
        let report = brr_near_missp(&c, &t("(F (G A) B)"), &t("(F (H A) B)"));
        assert_eq!(report.len(), 1);
        assert_eq!(report[0].pattern.to_string(), "(F GENSYM0 B)");
    }

    #[test]
    fn condition_interpreter() {
        let target = SExpr::List(alloc::vec![SExpr::sym("BINARY-APPEND"), SExpr::sym("X"), SExpr::sym("Y")]);
        let lookup = |k: &str| (k == ":TARGET").then(|| target.clone());
        let cond = parse("(equal (brr@ :target) '(BINARY-APPEND X Y))").unwrap();
        assert!(!eval_condition(&cond, &lookup).unwrap().is_nil());
        let cond = parse("(and t (not (equal (brr@ :target) 'x)))").unwrap();
        assert!(!eval_condition(&cond, &lookup).unwrap().is_nil());
        assert!(eval_condition(&parse("(brr@ :bogus)").unwrap(), &lookup).is_err());
        assert!(eval_condition(&parse("x").unwrap(), &lookup).is_err());
        assert!(eval_condition(&parse("(if nil t nil)").unwrap(), &lookup).unwrap().is_nil());
    }

    #[test]
    fn explanation_text() {
        let c = BreakCriteria { lambda: true, ..BreakCriteria::default() };
        let miss = NearMiss { criterion: NearMissCriterion::Lambda, pattern: t("X"), message: NearMissCriterion::Lambda.message() };
        let text = near_miss_explanation(&c, &[miss]);
        assert!(text.contains("(:CONDITION 'T :LAMBDA T), specified when this rule was monitored."));
        assert!(text.contains("The following criterion is satisfied."));
    }
}
