//! Rules, runes, worlds and monitor entries.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use crate::matching::match_term;
use crate::sexpr::{SExpr, Symbol};
use crate::term::{Alias, Signature, Substitution, Term, VarScope};
use crate::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum RuleClass {
    Rewrite,
    Definition,
}

impl RuleClass {
    pub fn keyword(self) -> &'static str {
        match self {
            RuleClass::Rewrite => ":REWRITE",
            RuleClass::Definition => ":DEFINITION",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Rune {
    pub class: RuleClass,
    pub name: Symbol,
}

impl Rune {
    pub fn new(class: RuleClass, name: &str) -> Self {
        Rune { class, name: Symbol::new(name) }
    }

    pub fn to_sexpr(&self) -> SExpr {
        SExpr::List(alloc::vec![SExpr::sym(self.class.keyword()), SExpr::Sym(self.name.clone())])
    }
}

impl fmt::Display for Rune {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({} {})", self.class.keyword(), self.name)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RuleError {
    #[error("a rule named {0} already exists")]
    DuplicateRune(Symbol),
    #[error("no rule named {0}")]
    UnknownRune(Symbol),
    #[error("ill-formed rule {0}: {1}")]
    BadRule(Symbol, String),
    #[error("malformed break criteria: {0}")]
    MalformedCriteria(String),
    #[error("unrecognized rule-file form: {0}")]
    UnknownForm(String),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RewriteRule {
    pub rune: Rune,
    pub hyps: Vec<Term>,
    pub lhs: Term,
    pub rhs: Term,
    pub enabled: bool,
    pub permutative: bool,
    /// Hypothesis variables that do not occur in the lhs.
    pub free_vars: BTreeSet<Symbol>,
}

impl RewriteRule {
    pub fn new(rune: Rune, hyps: Vec<Term>, lhs: Term, rhs: Term) -> Result<Self, RuleError> {
        let bad = |msg: &str| RuleError::BadRule(rune.name.clone(), msg.to_string());
        let Term::App(_, lhs_args) = &lhs else {
            return Err(bad("the lhs must be a function application"));
        };
        let lhs_vars = lhs.vars();
        if !rhs.vars().is_subset(&lhs_vars) {
            return Err(bad("every rhs variable must occur in the lhs"));
        }
        if rune.class == RuleClass::Definition {
            let mut seen = BTreeSet::new();
            for a in lhs_args {
                match a {
                    Term::Var(v) if seen.insert(v.clone()) => {}
                    _ => return Err(bad("a definition lhs must be a call on distinct variables")),
                }
            }
        }
        let free_vars = hyps
            .iter()
            .flat_map(Term::vars)
            .filter(|v| !lhs_vars.contains(v))
            .collect();
        let permutative = is_permutation(&lhs, &rhs);
        Ok(RewriteRule { rune, hyps, lhs, rhs, enabled: true, permutative, free_vars })
    }

    pub fn head(&self) -> &Symbol {
        self.lhs.head().expect("lhs is an application")
    }

    pub fn is_definition(&self) -> bool {
        self.rune.class == RuleClass::Definition
    }

    /// A definition whose body calls the function being defined.
    pub fn is_recursive_definition(&self) -> bool {
        self.is_definition() && self.rhs.mentions_fn(self.head())
    }
}

/// `lhs` and `rhs` differ and are equal up to an injective renaming of variables.
fn is_permutation(lhs: &Term, rhs: &Term) -> bool {
    if lhs == rhs {
        return false;
    }
    let Some(s) = match_term(lhs, rhs, &Substitution::new()) else {
        return false;
    };
    let mut images = BTreeSet::new();
    let ok = s.iter().all(|(_, t)| matches!(t, Term::Var(v) if images.insert(v.clone())));
    ok
}

/// A near-miss criterion plus the break condition of a monitor.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BreakCriteria {
    /// Condition expression, evaluated by the break condition interpreter.
    pub condition: SExpr,
    pub lambda: bool,
    pub depth: Option<u64>,
    pub abstraction: Option<Term>,
}

impl Default for BreakCriteria {
    fn default() -> Self {
        BreakCriteria { condition: SExpr::quote(SExpr::t()), lambda: false, depth: None, abstraction: None }
    }
}

impl BreakCriteria {
    /// Parses `t`, a keyword list over `:condition`, `:lambda`, `:depth`
    /// and `:abstraction`, or a bare condition term. One level of quoting
    /// is stripped.
    pub fn parse(s: &SExpr, sig: &Signature) -> Result<BreakCriteria, RuleError> {
        let s = s.unquote();
        if s.is_symbol("T") {
            return Ok(BreakCriteria::default());
        }
        let keyword_list = matches!(s.as_list(), Some([SExpr::Sym(k), ..]) if k.is_keyword());
        if !keyword_list {
            if s.is_nil() {
                return Err(RuleError::MalformedCriteria("NIL never breaks; use unmonitor".into()));
            }
            return Ok(BreakCriteria { condition: s.clone(), ..BreakCriteria::default() });
        }
        let items = s.as_list().unwrap_or(&[]);
        if !items.len().is_multiple_of(2) {
            return Err(RuleError::MalformedCriteria(format!("odd-length keyword list {s}")));
        }
        let mut c = BreakCriteria::default();
        for pair in items.chunks(2) {
            let key = pair[0].as_symbol().map(Symbol::as_str).unwrap_or("");
            let value = &pair[1];
            match key {
                ":CONDITION" => c.condition = value.clone(),
                ":LAMBDA" => c.lambda = !value.is_nil(),
                ":DEPTH" => match value {
                    SExpr::Int(n) if *n >= 0 => c.depth = Some(*n as u64),
                    _ => {
                        return Err(RuleError::MalformedCriteria(format!(
                            ":DEPTH must be a natural number, not {value}"
                        )))
                    }
                },
                ":ABSTRACTION" => {
                    let pat = sig
                        .to_term_readonly(value.unquote(), &VarScope::Any)
                        .map_err(|e| RuleError::MalformedCriteria(e.to_string()))?;
                    if !matches!(pat, Term::App(..)) {
                        return Err(RuleError::MalformedCriteria(
                            ":ABSTRACTION must be a function application".into(),
                        ));
                    }
                    c.abstraction = Some(pat);
                }
                other => {
                    return Err(RuleError::MalformedCriteria(format!("unknown keyword {other}")))
                }
            }
        }
        Ok(c)
    }

    pub fn has_near_miss_criteria(&self) -> bool {
        self.lambda || self.depth.is_some() || self.abstraction.is_some()
    }
}

impl fmt::Display for BreakCriteria {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(:CONDITION {}", self.condition)?;
        if self.lambda {
            f.write_str(" :LAMBDA T")?;
        }
        if let Some(d) = self.depth {
            write!(f, " :DEPTH {d}")?;
        }
        if let Some(p) = &self.abstraction {
            write!(f, " :ABSTRACTION {p}")?;
        }
        f.write_str(")")
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MonitorEntry {
    pub rune: Rune,
    pub criteria: BreakCriteria,
}

/// Monitored runes in the order they were first monitored.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct MonitorTable {
    entries: Vec<MonitorEntry>,
}

impl MonitorTable {
    pub fn monitor(&mut self, rune: Rune, criteria: BreakCriteria) {
        match self.entries.iter_mut().find(|e| e.rune == rune) {
            Some(e) => e.criteria = criteria,
            None => self.entries.push(MonitorEntry { rune, criteria }),
        }
    }

    /// Returns false if `rune` was not monitored.
    pub fn unmonitor(&mut self, rune: &Rune) -> bool {
        let before = self.entries.len();
        self.entries.retain(|e| &e.rune != rune);
        self.entries.len() != before
    }

    pub fn monitored(&self, rune: &Rune) -> Option<&MonitorEntry> {
        self.entries.iter().find(|e| &e.rune == rune)
    }

    pub fn entries(&self) -> &[MonitorEntry] {
        &self.entries
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// What a rule-file form added to the world.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Defined {
    Rule(Rune),
    Alias(Symbol),
    FnSlot(Symbol, usize),
}

/// Rules in insertion order, the signature used to translate input, and
/// the registry of argument positions holding lambda objects.
#[derive(Clone, Debug, Default)]
pub struct World {
    pub signature: Signature,
    rules: Vec<RewriteRule>,
    fn_slots: BTreeMap<Symbol, BTreeSet<usize>>,
}

impl World {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_rule(&mut self, rule: RewriteRule) -> Result<(), RuleError> {
        if self.rules.iter().any(|r| r.rune.name == rule.rune.name) {
            return Err(RuleError::DuplicateRune(rule.rune.name.clone()));
        }
        self.rules.push(rule);
        Ok(())
    }

    /// Rules for head symbol `f`, most recent first.
    pub fn rules_for<'a>(&'a self, f: &'a Symbol) -> impl Iterator<Item = &'a RewriteRule> + 'a {
        self.rules.iter().rev().filter(move |r| r.head() == f)
    }

    pub fn rules(&self) -> &[RewriteRule] {
        &self.rules
    }

    pub fn rule(&self, name: &Symbol) -> Option<&RewriteRule> {
        self.rules.iter().find(|r| &r.rune.name == name)
    }

    pub fn rune(&self, name: &Symbol) -> Result<Rune, RuleError> {
        self.rule(name).map(|r| r.rune.clone()).ok_or_else(|| RuleError::UnknownRune(name.clone()))
    }

    pub fn set_enabled(&mut self, name: &Symbol, enabled: bool) -> Result<(), RuleError> {
        let rule = self
            .rules
            .iter_mut()
            .find(|r| &r.rune.name == name)
            .ok_or_else(|| RuleError::UnknownRune(name.clone()))?;
        rule.enabled = enabled;
        Ok(())
    }

    pub fn add_fn_slot(&mut self, f: Symbol, position: usize) {
        self.fn_slots.entry(f).or_default().insert(position);
    }

    /// 1-based argument positions of `f` that hold lambda objects.
    pub fn fn_slots(&self, f: &Symbol) -> impl Iterator<Item = usize> + '_ {
        self.fn_slots.get(f).into_iter().flat_map(|s| s.iter().copied())
    }

    /// Resolves a rune designator: `name`, `'name` or `(:rewrite name)`.
    pub fn resolve_rune(&self, s: &SExpr) -> Result<Rune, RuleError> {
        let s = s.unquote();
        let name = match s {
            SExpr::Sym(name) => name,
            SExpr::List(items) if items.len() == 2 => match &items[1] {
                SExpr::Sym(name) => name,
                _ => return Err(RuleError::MalformedCriteria(format!("not a rune: {s}"))),
            },
            _ => return Err(RuleError::MalformedCriteria(format!("not a rune: {s}"))),
        };
        self.rune(name)
    }

    /// Reads every form of a rule file.
    pub fn load_text(&mut self, text: &str) -> Result<Vec<Defined>, Error> {
        let forms = crate::sexpr::parse_all(text)?;
        forms.iter().map(|f| self.define(f)).collect()
    }

    /// Processes one of `defrule`, `defthm`, `defun`, `alias`, `fn-slot`.
    pub fn define(&mut self, form: &SExpr) -> Result<Defined, Error> {
        let items = form.as_list().unwrap_or(&[]);
        let head = items.first().and_then(SExpr::as_symbol).map(Symbol::as_str).unwrap_or("");
        match head {
            "DEFRULE" => self.defrule(items),
            "DEFTHM" => self.defthm(items),
            "DEFUN" => self.defun(items),
            "ALIAS" => self.alias(items),
            "FN-SLOT" => match items {
                [_, SExpr::Sym(f), SExpr::Int(n)] if *n >= 1 => {
                    self.add_fn_slot(f.clone(), *n as usize);
                    Ok(Defined::FnSlot(f.clone(), *n as usize))
                }
                _ => Err(RuleError::UnknownForm(form.to_string()).into()),
            },
            _ => Err(RuleError::UnknownForm(form.to_string()).into()),
        }
    }

    fn form_name(items: &[SExpr], form: &str) -> Result<Symbol, Error> {
        items
            .get(1)
            .and_then(SExpr::as_symbol)
            .cloned()
            .ok_or_else(|| RuleError::UnknownForm(format!("{form} needs a name")).into())
    }

    fn defrule(&mut self, items: &[SExpr]) -> Result<Defined, Error> {
        let name = Self::form_name(items, "DEFRULE")?;
        let mut class = RuleClass::Rewrite;
        let (mut hyps, mut lhs, mut rhs) = (None, None, None);
        let rest = &items[2..];
        if !rest.len().is_multiple_of(2) {
            return Err(RuleError::BadRule(name, "odd-length keyword arguments".into()).into());
        }
        for pair in rest.chunks(2) {
            match pair[0].as_symbol().map(Symbol::as_str).unwrap_or("") {
                ":CLASS" => {
                    class = match pair[1].as_symbol().map(Symbol::as_str) {
                        Some(":REWRITE") => RuleClass::Rewrite,
                        Some(":DEFINITION") => RuleClass::Definition,
                        _ => return Err(RuleError::BadRule(name, format!("unknown class {}", pair[1])).into()),
                    }
                }
                ":HYPS" => hyps = Some(&pair[1]),
                ":LHS" => lhs = Some(&pair[1]),
                ":RHS" => rhs = Some(&pair[1]),
                other => return Err(RuleError::BadRule(name, format!("unknown keyword {other}")).into()),
            }
        }
        let (Some(lhs), Some(rhs)) = (lhs, rhs) else {
            return Err(RuleError::BadRule(name, ":LHS and :RHS are required".into()).into());
        };
        let lhs = self.signature.to_term(lhs, &VarScope::Any)?;
        let rhs = self.signature.to_term(rhs, &VarScope::Any)?;
        let hyps = match hyps {
            Some(h) => h
                .as_list()
                .ok_or_else(|| RuleError::BadRule(name.clone(), ":HYPS must be a list".into()))?
                .iter()
                .map(|h| self.signature.to_term(h, &VarScope::Any))
                .collect::<Result<Vec<_>, _>>()?,
            None => Vec::new(),
        };
        self.install(RewriteRule::new(Rune { class, name }, hyps, lhs, rhs)?)
    }

    fn defthm(&mut self, items: &[SExpr]) -> Result<Defined, Error> {
        let name = Self::form_name(items, "DEFTHM")?;
        let body = items
            .get(2)
            .ok_or_else(|| RuleError::BadRule(name.clone(), "missing formula".into()))?;
        let formula = self.signature.to_term(body, &VarScope::Any)?;
        let (hyps, concl) = match &formula {
            Term::App(f, args) if f.as_str() == "IMPLIES" && args.len() == 2 => {
                let mut hyps = Vec::new();
                flatten_and(&args[0], &mut hyps);
                (hyps, args[1].clone())
            }
            _ => (Vec::new(), formula.clone()),
        };
        let (lhs, rhs) = match &concl {
            Term::App(f, args) if f.as_str() == "EQUAL" && args.len() == 2 => {
                (args[0].clone(), args[1].clone())
            }
            Term::App(f, args) if f.as_str() == "NOT" && args.len() == 1 => (args[0].clone(), Term::nil()),
            _ => (concl.clone(), Term::t()),
        };
        self.install(RewriteRule::new(Rune { class: RuleClass::Rewrite, name }, hyps, lhs, rhs)?)
    }

    fn defun(&mut self, items: &[SExpr]) -> Result<Defined, Error> {
        let name = Self::form_name(items, "DEFUN")?;
        let (Some(formals), Some(body)) = (items.get(2), items.get(3)) else {
            return Err(RuleError::BadRule(name, "expected (defun f (formals...) body)".into()).into());
        };
        let formals = formals
            .as_list()
            .ok_or_else(|| RuleError::BadRule(name.clone(), "formals must be a list".into()))?;
        let mut call = alloc::vec![SExpr::Sym(name.clone())];
        call.extend(formals.iter().cloned());
        let lhs = self.signature.to_term(&SExpr::List(call), &VarScope::Any)?;
        let rhs = self.signature.to_term(body, &VarScope::Any)?;
        self.install(RewriteRule::new(Rune { class: RuleClass::Definition, name }, Vec::new(), lhs, rhs)?)
    }

    fn alias(&mut self, items: &[SExpr]) -> Result<Defined, Error> {
        let (Some(SExpr::Sym(name)), Some(SExpr::Sym(target))) = (items.get(1), items.get(2)) else {
            return Err(RuleError::UnknownForm("expected (alias NAME TARGET ...)".into()).into());
        };
        let mut right_assoc = true;
        for pair in items[3..].chunks(2) {
            match (pair[0].as_symbol().map(Symbol::as_str), pair.get(1)) {
                (Some(":ASSOC"), Some(v)) => right_assoc = !v.is_symbol("LEFT"),
                (Some(":ARITY"), Some(SExpr::Int(2))) => {}
                _ => {
                    return Err(RuleError::UnknownForm(format!("bad alias option in {}", SExpr::List(items.to_vec()))).into())
                }
            }
        }
        self.signature.add_alias(name.clone(), Alias { target: target.clone(), right_assoc });
        Ok(Defined::Alias(name.clone()))
    }

    fn install(&mut self, rule: RewriteRule) -> Result<Defined, Error> {
        let rune = rule.rune.clone();
        self.add_rule(rule)?;
        Ok(Defined::Rule(rune))
    }
}

fn flatten_and(t: &Term, out: &mut Vec<Term>) {
    match t {
        Term::App(f, args) if f.as_str() == "AND" => args.iter().for_each(|a| flatten_and(a, out)),
        Term::App(f, args) if f.as_str() == "IF" && args.len() == 3 && args[2].is_nil() => {
            flatten_and(&args[0], out);
            flatten_and(&args[1], out);
        }
        _ => out.push(t.clone()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sexpr::parse;
    use alloc::string::ToString;

    const PQ: &str = "
        (defthm p-rule (implies (q x) (p (f x y))))
        (defthm q-rule1 (implies (r x) (q x)))
        (defthm q-rule2 (implies (s x) (q x)))";

    #[test]
    fn later_rules_are_tried_first() {
        let mut w = World::new();
        w.load_text(PQ).unwrap();
        let names: Vec<_> = w.rules_for(&Symbol::new("Q")).map(|r| r.rune.name.to_string()).collect();
        assert_eq!(names, ["Q-RULE2", "Q-RULE1"]);
    }

    #[test]
    fn defthm_shapes() {
        let mut w = World::new();
        w.load_text(PQ).unwrap();
        let p = w.rule(&Symbol::new("P-RULE")).unwrap();
        assert_eq!(p.lhs.to_string(), "(P (F X Y))");
        assert_eq!(p.rhs, Term::t());
        assert_eq!(p.hyps[0].to_string(), "(Q X)");
        assert_eq!(p.rune.to_string(), "(:REWRITE P-RULE)");
    }

    #[test]
    fn duplicate_rune_rejected() {
        let mut w = World::new();
        w.load_text(PQ).unwrap();
        let err = w.load_text("(defthm p-rule (p x))").unwrap_err();
        assert!(matches!(err, Error::Rule(RuleError::DuplicateRune(_))));
    }

    #[test]
    fn add_to_empty_world() {
        let mut w = World::new();
        let defined = w.load_text("(defrule r1 :lhs (f1 x) :rhs (f2 x))").unwrap();
        assert_eq!(defined, [Defined::Rule(Rune::new(RuleClass::Rewrite, "R1"))]);
        assert_eq!(w.rules().len(), 1);
    }

    #[test]
    fn definition_checks() {
        let mut w = World::new();
        let d = w
            .load_text("(defun binary-append (x y) (if (consp x) (cons (car x) (binary-append (cdr x) y)) y))")
            .unwrap();
        assert_eq!(d, [Defined::Rule(Rune::new(RuleClass::Definition, "BINARY-APPEND"))]);
        assert!(w.rules()[0].is_recursive_definition());
        let err = w.load_text("(defrule bad :class :definition :lhs (g x x) :rhs x)").unwrap_err();
        assert!(matches!(err, Error::Rule(RuleError::BadRule(..))));
    }

    #[test]
    fn rhs_vars_must_be_bound() {
        let mut w = World::new();
        assert!(w.load_text("(defrule bad :lhs (g x) :rhs (h y))").is_err());
    }

    #[test]
    fn free_vars_and_permutative_flag() {
        let mut w = World::new();
        w.load_text("(defrule fr :hyps ((r y)) :lhs (g x) :rhs x) (defrule comm :lhs (g2 x y) :rhs (g2 y x))")
            .unwrap();
        assert!(w.rule(&Symbol::new("FR")).unwrap().free_vars.contains(&Symbol::new("Y")));
        assert!(w.rule(&Symbol::new("COMM")).unwrap().permutative);
        assert!(!w.rule(&Symbol::new("FR")).unwrap().permutative);
    }

    #[test]
    fn criteria_forms() {
        let sig = Signature::default();
        let c = BreakCriteria::parse(&parse("t").unwrap(), &sig).unwrap();
        assert_eq!(c.to_string(), "(:CONDITION 'T)");
        let c = BreakCriteria::parse(&parse("'(:lambda t)").unwrap(), &sig).unwrap();
        assert_eq!(c.to_string(), "(:CONDITION 'T :LAMBDA T)");
        let c = BreakCriteria::parse(&parse("(equal (brr@ :target) '(BINARY-APPEND X Y))").unwrap(), &sig)
            .unwrap();
        assert_eq!(c.condition.to_string(), "(EQUAL (BRR@ :TARGET) '(BINARY-APPEND X Y))");
        assert!(!c.has_near_miss_criteria());
        let c = BreakCriteria::parse(&parse("'(:depth 2 :abstraction (f x))").unwrap(), &sig).unwrap();
        assert_eq!(c.depth, Some(2));
        assert!(BreakCriteria::parse(&parse("'(:depth -1)").unwrap(), &sig).is_err());
        assert!(BreakCriteria::parse(&parse("'(:depth x)").unwrap(), &sig).is_err());
        assert!(BreakCriteria::parse(&parse("'(:bogus 1)").unwrap(), &sig).is_err());
    }

    #[test]
    fn monitor_then_unmonitor() {
        let mut w = World::new();
        w.load_text(PQ).unwrap();
        let rune = w.resolve_rune(&parse("'p-rule").unwrap()).unwrap();
        let mut table = MonitorTable::default();
        table.monitor(rune.clone(), BreakCriteria::default());
        assert!(table.monitored(&rune).is_some());
        assert!(table.unmonitor(&rune));
        assert!(table.monitored(&rune).is_none());
        assert!(w.resolve_rune(&parse("nope").unwrap()).is_err());
        assert_eq!(w.resolve_rune(&parse("(:rewrite q-rule1)").unwrap()).unwrap().to_string(), "(:REWRITE Q-RULE1)");
    }

    #[test]
    fn alias_form() {
        let mut w = World::new();
        w.load_text("(alias append binary-append :arity 2 :assoc right)").unwrap();
        let t = w.signature.to_term(&parse("(append a b c)").unwrap(), &VarScope::Any).unwrap();
        assert_eq!(t.to_string(), "(BINARY-APPEND A (BINARY-APPEND B C))");
    }
}
