//! Translated terms: variables, quoted constants and function applications.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::cmp::Ordering;
use core::fmt;

use crate::sexpr::{SExpr, Symbol};

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Term {
    Var(Symbol),
    Quote(SExpr),
    App(Symbol, Vec<Term>),
}

impl Term {
    pub fn var(name: &str) -> Self {
        Term::Var(Symbol::new(name))
    }

    pub fn app(f: &str, args: Vec<Term>) -> Self {
        Term::App(Symbol::new(f), args)
    }

    pub fn t() -> Self {
        Term::Quote(SExpr::t())
    }

    pub fn nil() -> Self {
        Term::Quote(SExpr::nil())
    }

    pub fn is_nil(&self) -> bool {
        matches!(self, Term::Quote(v) if v.is_nil())
    }

    /// A quoted constant other than `'NIL`.
    pub fn is_non_nil_constant(&self) -> bool {
        matches!(self, Term::Quote(v) if !v.is_nil())
    }

    pub fn is_t(&self) -> bool {
        matches!(self, Term::Quote(v) if v.is_symbol("T"))
    }

    pub fn head(&self) -> Option<&Symbol> {
        match self {
            Term::App(f, _) => Some(f),
            _ => None,
        }
    }

    pub fn args(&self) -> &[Term] {
        match self {
            Term::App(_, args) => args,
            _ => &[],
        }
    }

    pub fn is_call_of(&self, f: &str) -> bool {
        matches!(self, Term::App(g, _) if g.as_str() == f)
    }

    /// Number of nodes; quoted constants count as one.
    pub fn size(&self) -> usize {
        match self {
            Term::Var(_) | Term::Quote(_) => 1,
            Term::App(_, args) => 1 + args.iter().map(Term::size).sum::<usize>(),
        }
    }

    pub fn vars(&self) -> BTreeSet<Symbol> {
        let mut out = BTreeSet::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars(&self, out: &mut BTreeSet<Symbol>) {
        match self {
            Term::Var(v) => {
                out.insert(v.clone());
            }
            Term::Quote(_) => {}
            Term::App(_, args) => args.iter().for_each(|a| a.collect_vars(out)),
        }
    }

    pub fn mentions_fn(&self, f: &Symbol) -> bool {
        match self {
            Term::App(g, args) => g == f || args.iter().any(|a| a.mentions_fn(f)),
            _ => false,
        }
    }

    /// Subterms in leftmost-innermost order (arguments before the node).
    pub fn subterms_innermost(&self) -> Vec<&Term> {
        let mut out = Vec::new();
        fn walk<'a>(t: &'a Term, out: &mut Vec<&'a Term>) {
            for a in t.args() {
                walk(a, out);
            }
            out.push(t);
        }
        walk(self, &mut out);
        out
    }

    pub fn as_quoted_lambda(&self) -> Option<QuotedLambda> {
        match self {
            Term::Quote(v) => QuotedLambda::from_sexpr(v),
            _ => None,
        }
    }

    pub fn is_quoted_lambda(&self) -> bool {
        self.as_quoted_lambda().is_some()
    }

    pub fn to_sexpr(&self) -> SExpr {
        match self {
            Term::Var(v) => SExpr::Sym(v.clone()),
            Term::Quote(v) => SExpr::quote(v.clone()),
            Term::App(f, args) => {
                let mut items = Vec::with_capacity(args.len() + 1);
                items.push(SExpr::Sym(f.clone()));
                items.extend(args.iter().map(Term::to_sexpr));
                SExpr::List(items)
            }
        }
    }

    /// Converts without arity checks or aliasing; every non-constant symbol
    /// becomes a variable. Used for lambda bodies and break conditions.
    pub fn from_sexpr_lenient(s: &SExpr) -> Result<Term, TermError> {
        Signature::default().convert(s, &VarScope::Any, false)
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Var(v) => write!(f, "{v}"),
            Term::Quote(v) => write!(f, "'{v}"),
            Term::App(g, args) => {
                write!(f, "({g}")?;
                for a in args {
                    write!(f, " {a}")?;
                }
                f.write_str(")")
            }
        }
    }
}

/// Total syntactic order: size first, then the printed form.
pub fn term_order(a: &Term, b: &Term) -> Ordering {
    a.size()
        .cmp(&b.size())
        .then_with(|| a.to_string().cmp(&b.to_string()))
}

/// True iff `small` equals `big` or occurs in one of its arguments.
/// Quoted constants are atomic.
pub fn occurs_subterm(small: &Term, big: &Term) -> bool {
    small == big || big.args().iter().any(|a| occurs_subterm(small, a))
}

/// `'(LAMBDA (formals...) body)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QuotedLambda {
    pub formals: Vec<Symbol>,
    pub body: Term,
}

impl QuotedLambda {
    pub fn from_sexpr(v: &SExpr) -> Option<QuotedLambda> {
        let items = match v {
            SExpr::List(items) => items,
            _ => return None,
        };
        if items.len() != 3 || !items[0].is_symbol("LAMBDA") {
            return None;
        }
        let formals = items[1]
            .as_list()?
            .iter()
            .map(|f| f.as_symbol().cloned())
            .collect::<Option<Vec<_>>>()?;
        let body = Term::from_sexpr_lenient(&items[2]).ok()?;
        Some(QuotedLambda { formals, body })
    }

    pub fn to_term(&self) -> Term {
        let formals = SExpr::List(self.formals.iter().cloned().map(SExpr::Sym).collect());
        Term::Quote(SExpr::List(alloc::vec![SExpr::sym("LAMBDA"), formals, self.body.to_sexpr()]))
    }
}

/// Variable bindings in binding order. Each variable is bound at most once.
#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Substitution {
    bindings: Vec<(Symbol, Term)>,
}

impl Substitution {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, v: &Symbol) -> Option<&Term> {
        self.bindings.iter().find(|(k, _)| k == v).map(|(_, t)| t)
    }

    pub fn is_bound(&self, v: &Symbol) -> bool {
        self.get(v).is_some()
    }

    /// Binds `v` unless already bound; returns false if it was.
    pub fn bind(&mut self, v: Symbol, t: Term) -> bool {
        if self.is_bound(&v) {
            return false;
        }
        self.bindings.push((v, t));
        true
    }

    pub fn is_empty(&self) -> bool {
        self.bindings.is_empty()
    }

    pub fn len(&self) -> usize {
        self.bindings.len()
    }

    pub fn iter(&self) -> impl DoubleEndedIterator<Item = (&Symbol, &Term)> {
        self.bindings.iter().map(|(k, v)| (k, v))
    }

    pub fn apply(&self, t: &Term) -> Term {
        match t {
            Term::Var(v) => self.get(v).cloned().unwrap_or_else(|| t.clone()),
            Term::Quote(_) => t.clone(),
            Term::App(f, args) => Term::App(f.clone(), args.iter().map(|a| self.apply(a)).collect()),
        }
    }
}

impl FromIterator<(Symbol, Term)> for Substitution {
    fn from_iter<I: IntoIterator<Item = (Symbol, Term)>>(iter: I) -> Self {
        let mut s = Substitution::new();
        for (k, v) in iter {
            s.bind(k, v);
        }
        s
    }
}

impl fmt::Display for Substitution {
    /// Most recent binding first, one `VAR : term` per line.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, (k, v)) in self.bindings.iter().rev().enumerate() {
            if i > 0 {
                f.write_str("\n")?;
            }
            write!(f, "{k} : {v}")?;
        }
        Ok(())
    }
}

/// A disjunction of literals.
#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Clause(pub Vec<Term>);

impl Clause {
    pub fn literals(&self) -> &[Term] {
        &self.0
    }
}

impl fmt::Display for Clause {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("(")?;
        for (i, lit) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            write!(f, "{lit}")?;
        }
        f.write_str(")")
    }
}

/// Spells 1-based ordinals as words up to ten.
pub fn ordinal(n: usize) -> String {
    const WORDS: [&str; 10] = [
        "first", "second", "third", "fourth", "fifth", "sixth", "seventh", "eighth", "ninth", "tenth",
    ];
    match n {
        1..=10 => WORDS[n - 1].to_string(),
        _ => alloc::format!("#{n}"),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TermError {
    #[error("{0} is called with {1} arguments but was previously seen with {2}")]
    ArityMismatch(Symbol, usize, usize),
    #[error("unknown symbol {0}")]
    UnknownSymbol(Symbol),
    #[error("malformed QUOTE form: {0}")]
    BadQuote(SExpr),
    #[error("cannot translate {0}: function position must be a symbol")]
    BadCall(SExpr),
    #[error("{0} needs at least one argument")]
    EmptyAliasCall(Symbol),
}

/// Which symbols may become variables when translating.
#[derive(Clone, Debug)]
pub enum VarScope<'a> {
    Any,
    Only(&'a BTreeSet<Symbol>),
}

impl VarScope<'_> {
    fn admits(&self, s: &Symbol) -> bool {
        match self {
            VarScope::Any => true,
            VarScope::Only(set) => set.contains(s),
        }
    }
}

/// Right- or left-associated flattening of an n-ary alias.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Alias {
    pub target: Symbol,
    pub right_assoc: bool,
}

/// Per-session arity table plus n-ary aliases such as APPEND.
#[derive(Clone, Debug, Default)]
pub struct Signature {
    arities: BTreeMap<Symbol, usize>,
    aliases: BTreeMap<Symbol, Alias>,
}

impl Signature {
    pub fn add_alias(&mut self, name: Symbol, alias: Alias) {
        self.aliases.insert(name, alias);
    }

    pub fn arity(&self, f: &Symbol) -> Option<usize> {
        self.arities.get(f).copied()
    }

    /// Translates `s`, recording the arity of every function symbol seen.
    pub fn to_term(&mut self, s: &SExpr, vars: &VarScope<'_>) -> Result<Term, TermError> {
        self.convert(s, vars, true)
    }

    /// Translates without recording new arities, but still checks known ones.
    pub fn to_term_readonly(&self, s: &SExpr, vars: &VarScope<'_>) -> Result<Term, TermError> {
        let mut scratch = self.clone();
        scratch.convert(s, vars, true)
    }

    /// Folds binary calls of alias targets back into n-ary alias calls,
    /// for display.
    pub fn untranslate(&self, t: &Term) -> Term {
        let Term::App(f, args) = t else {
            return t.clone();
        };
        let args: Vec<Term> = args.iter().map(|a| self.untranslate(a)).collect();
        if f.as_str() == "IF" && args.len() == 3 && args[2].is_nil() && !args[1].is_nil() {
            let mut it = args.into_iter();
            let mut out = alloc::vec![it.next().unwrap()];
            match it.next().unwrap() {
                Term::App(g, inner) if g.as_str() == "AND" => out.extend(inner),
                b => out.push(b),
            }
            return Term::App(Symbol::new("AND"), out);
        }
        let found = self.aliases.iter().find(|(_, a)| &a.target == f);
        let (Some((name, alias)), 2) = (found, args.len()) else {
            return Term::App(f.clone(), args);
        };
        let mut it = args.into_iter();
        let (a, b) = (it.next().unwrap(), it.next().unwrap());
        let mut out = Vec::new();
        if alias.right_assoc {
            out.push(a);
            match b {
                Term::App(g, inner) if &g == name => out.extend(inner),
                b => out.push(b),
            }
        } else {
            match a {
                Term::App(g, inner) if &g == name => out.extend(inner),
                a => out.push(a),
            }
            out.push(b);
        }
        Term::App(name.clone(), out)
    }

    fn convert(&mut self, s: &SExpr, vars: &VarScope<'_>, check: bool) -> Result<Term, TermError> {
        match s {
            SExpr::Int(_) | SExpr::Str(_) => Ok(Term::Quote(s.clone())),
            SExpr::Sym(sym) if sym.is_self_evaluating() => Ok(Term::Quote(s.clone())),
            SExpr::Sym(sym) => {
                if vars.admits(sym) {
                    Ok(Term::Var(sym.clone()))
                } else {
                    Err(TermError::UnknownSymbol(sym.clone()))
                }
            }
            SExpr::List(items) if items.is_empty() => Ok(Term::nil()),
            SExpr::List(items) => {
                let Some(head) = items[0].as_symbol() else {
                    return Err(TermError::BadCall(s.clone()));
                };
                if head.as_str() == "QUOTE" {
                    return match items.len() {
                        2 => Ok(Term::Quote(items[1].clone())),
                        _ => Err(TermError::BadQuote(s.clone())),
                    };
                }
                let args = items[1..]
                    .iter()
                    .map(|a| self.convert(a, vars, check))
                    .collect::<Result<Vec<_>, _>>()?;
                match head.as_str() {
                    "AND" => return Ok(and_to_if(args)),
                    "OR" => return Ok(or_to_if(args)),
                    _ => {}
                }
                if let Some(alias) = self.aliases.get(head).cloned() {
                    return self.expand_alias(head, &alias, args, check);
                }
                self.make_app(head.clone(), args, check)
            }
        }
    }

    fn expand_alias(
        &mut self,
        name: &Symbol,
        alias: &Alias,
        mut args: Vec<Term>,
        check: bool,
    ) -> Result<Term, TermError> {
        if args.is_empty() {
            return Err(TermError::EmptyAliasCall(name.clone()));
        }
        if args.len() == 1 {
            return Ok(args.pop().unwrap());
        }
        if alias.right_assoc {
            let mut acc = args.pop().unwrap();
            while let Some(a) = args.pop() {
                acc = self.make_app(alias.target.clone(), alloc::vec![a, acc], check)?;
            }
            Ok(acc)
        } else {
            let mut iter = args.into_iter();
            let mut acc = iter.next().unwrap();
            for a in iter {
                acc = self.make_app(alias.target.clone(), alloc::vec![acc, a], check)?;
            }
            Ok(acc)
        }
    }

    fn make_app(&mut self, f: Symbol, args: Vec<Term>, check: bool) -> Result<Term, TermError> {
        if check {
            match self.arities.get(&f) {
                Some(&n) if n != args.len() => return Err(TermError::ArityMismatch(f, args.len(), n)),
                Some(_) => {}
                None => {
                    self.arities.insert(f.clone(), args.len());
                }
            }
        }
        Ok(Term::App(f, args))
    }
}

/// `(AND a b c)` is `(IF a (IF b c 'NIL) 'NIL)`; `(AND)` is `'T`.
fn and_to_if(mut args: Vec<Term>) -> Term {
    let Some(mut acc) = args.pop() else {
        return Term::t();
    };
    while let Some(a) = args.pop() {
        acc = Term::App(Symbol::new("IF"), alloc::vec![a, acc, Term::nil()]);
    }
    acc
}

/// `(OR a b)` is `(IF a a b)`; `(OR)` is `'NIL`.
fn or_to_if(mut args: Vec<Term>) -> Term {
    let Some(mut acc) = args.pop() else {
        return Term::nil();
    };
    while let Some(a) = args.pop() {
        acc = Term::App(Symbol::new("IF"), alloc::vec![a.clone(), a, acc]);
    }
    acc
}

/// Parses text directly into a term, all symbols admitted as variables.
pub fn parse_term(text: &str) -> Result<Term, crate::Error> {
    let s = crate::sexpr::parse(text)?;
    Ok(Term::from_sexpr_lenient(&s)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sexpr::parse;
    use alloc::format;
    use alloc::vec;

    fn vars(names: &[&str]) -> BTreeSet<Symbol> {
        names.iter().map(|n| Symbol::new(n)).collect()
    }

    #[test]
    fn to_term_basic() {
        let mut sig = Signature::default();
        let v = vars(&["X"]);
        let t = sig.to_term(&parse("(REV X)").unwrap(), &VarScope::Only(&v)).unwrap();
        assert_eq!(t, Term::app("REV", vec![Term::var("X")]));
        let t = sig.to_term(&parse("(QUOTE NIL)").unwrap(), &VarScope::Only(&v)).unwrap();
        assert_eq!(t, Term::nil());
        let t = sig.to_term(&parse("7").unwrap(), &VarScope::Any).unwrap();
        assert_eq!(t, Term::Quote(SExpr::Int(7)));
    }

    #[test]
    fn to_term_if_with_quotes() {
        let mut sig = Signature::default();
        let v = vars(&["LOOP$-IVAR"]);
        let t = sig
            .to_term(&parse("(IF (CONSP LOOP$-IVAR) 'NIL 'T)").unwrap(), &VarScope::Only(&v))
            .unwrap();
        assert_eq!(
            t,
            Term::app(
                "IF",
                vec![Term::app("CONSP", vec![Term::var("LOOP$-IVAR")]), Term::nil(), Term::t()]
            )
        );
    }

    #[test]
    fn arity_is_fixed_once_seen() {
        let mut sig = Signature::default();
        sig.to_term(&parse("(F X Y)").unwrap(), &VarScope::Any).unwrap();
        let err = sig.to_term(&parse("(F X)").unwrap(), &VarScope::Any).unwrap_err();
        assert!(matches!(err, TermError::ArityMismatch(_, 1, 2)));
    }

    #[test]
    fn unknown_symbol_outside_scope() {
        let mut sig = Signature::default();
        let v = vars(&["X"]);
        let err = sig.to_term(&parse("(F X Y)").unwrap(), &VarScope::Only(&v)).unwrap_err();
        assert_eq!(err, TermError::UnknownSymbol(Symbol::new("Y")));
    }

    #[test]
    fn alias_flattens_right() {
        let mut sig = Signature::default();
        sig.add_alias(
            Symbol::new("APPEND"),
            Alias { target: Symbol::new("BINARY-APPEND"), right_assoc: true },
        );
        let t = sig.to_term(&parse("(append a b c)").unwrap(), &VarScope::Any).unwrap();
        assert_eq!(format!("{t}"), "(BINARY-APPEND A (BINARY-APPEND B C))");
        let t = sig.to_term(&parse("(append a)").unwrap(), &VarScope::Any).unwrap();
        assert_eq!(t, Term::var("A"));
    }

    #[test]
    fn untranslate_folds_aliases_and_conjunctions() {
        let mut sig = Signature::default();
        sig.add_alias(
            Symbol::new("APPEND"),
            Alias { target: Symbol::new("BINARY-APPEND"), right_assoc: true },
        );
        let src = "(if (and p q r) (append a b c) 'nil)";
        let t = sig.to_term(&parse(src).unwrap(), &VarScope::Any).unwrap();
        assert_eq!(format!("{}", sig.untranslate(&t)), "(AND (AND P Q R) (APPEND A B C))");
        let t = sig.to_term(&parse("(and p (append a b) r)").unwrap(), &VarScope::Any).unwrap();
        assert_eq!(format!("{}", sig.untranslate(&t)), "(AND P (APPEND A B) R)");
        let t = sig.to_term(&parse("(if p 'nil 'nil)").unwrap(), &VarScope::Any).unwrap();
        assert_eq!(format!("{}", sig.untranslate(&t)), "(IF P 'NIL 'NIL)");
    }

    #[test]
    fn and_or_become_if() {
        let mut sig = Signature::default();
        let t = sig.to_term(&parse("(and (natp n) (< n (len x)))").unwrap(), &VarScope::Any).unwrap();
        assert_eq!(format!("{t}"), "(IF (NATP N) (< N (LEN X)) 'NIL)");
        let t = sig.to_term(&parse("(or a b)").unwrap(), &VarScope::Any).unwrap();
        assert_eq!(format!("{t}"), "(IF A A B)");
        assert_eq!(sig.to_term(&parse("(and)").unwrap(), &VarScope::Any).unwrap(), Term::t());
    }

    #[test]
    fn printing() {
        let t = Term::app(
            "BINARY-APPEND",
            vec![Term::app("REV", vec![Term::var("X")]), Term::var("Y")],
        );
        assert_eq!(format!("{t}"), "(BINARY-APPEND (REV X) Y)");
        assert_eq!(format!("{}", Term::t()), "'T");
        assert_eq!(format!("{}", Term::var("N")), "N");
        assert_eq!(format!("{}", Term::Quote(SExpr::Int(0))), "'0");
    }

    #[test]
    fn substitution_apply() {
        let s: Substitution =
            [(Symbol::new("X"), Term::app("G", vec![Term::var("A")]))].into_iter().collect();
        let t = parse_term("(F X X)").unwrap();
        assert_eq!(format!("{}", s.apply(&t)), "(F (G A) (G A))");
        let t = parse_term("(F X '(X))").unwrap();
        assert_eq!(Substitution::new().apply(&t), t);
        let s: Substitution = [(Symbol::new("X"), Term::var("A"))].into_iter().collect();
        assert_eq!(format!("{}", s.apply(&parse_term("(F2 X)").unwrap())), "(F2 A)");
    }

    #[test]
    fn substitution_prints_latest_first() {
        let s: Substitution =
            [(Symbol::new("X"), Term::var("X")), (Symbol::new("Y"), Term::nil())].into_iter().collect();
        assert_eq!(format!("{s}"), "Y : 'NIL\nX : X");
    }

    #[test]
    fn occurs() {
        let rx = parse_term("(REV X)").unwrap();
        assert!(occurs_subterm(&rx, &parse_term("(BINARY-APPEND (REV X) Y)").unwrap()));
        assert!(occurs_subterm(&rx, &rx));
        assert!(!occurs_subterm(&rx, &parse_term("(NTH N (REVAPPEND X Y))").unwrap()));
        // quoted constants are opaque
        assert!(!occurs_subterm(&Term::var("X"), &parse_term("(F '(X))").unwrap()));
    }

    #[test]
    fn quoted_lambda_recognition() {
        let t = parse_term("'(LAMBDA (E) (ATOM E))").unwrap();
        let q = t.as_quoted_lambda().unwrap();
        assert_eq!(q.formals, vec![Symbol::new("E")]);
        assert_eq!(q.body, parse_term("(ATOM E)").unwrap());
        assert_eq!(q.to_term(), t);
        assert!(!parse_term("'(LAMBDA (E))").unwrap().is_quoted_lambda());
        assert!(!parse_term("'NIL").unwrap().is_quoted_lambda());
    }

    #[test]
    fn term_order_is_size_then_print() {
        let a = parse_term("(G A B)").unwrap();
        let b = parse_term("(G B A)").unwrap();
        assert_eq!(term_order(&a, &b), Ordering::Less);
        assert_eq!(term_order(&a, &a), Ordering::Equal);
        assert_eq!(term_order(&parse_term("(G (H A) B)").unwrap(), &b), Ordering::Greater);
    }

    #[test]
    fn ordinals() {
        assert_eq!(ordinal(1), "first");
        assert_eq!(ordinal(10), "tenth");
        assert_eq!(ordinal(11), "#11");
    }
}
