//! Clause simplification by inside-out conditional rewriting.
//!
//! The rewriter is value-pure: it reports each rule attempt to a
//! [`Hooks`] implementation at three points (failed match, successful
//! match, attempt finished) and otherwise keeps no global state.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;
use core::cmp::Ordering;
use core::fmt::{self, Write as _};

use crate::matching::match_term;
use crate::rules::{RewriteRule, Rune, World};
use crate::sexpr::Symbol;
use crate::term::{ordinal, term_order, Clause, QuotedLambda, Substitution, Term};

/// Which instrumentation is active (the `gstackp` setting).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum GstackMode {
    #[default]
    Off,
    Brr,
    BrrData,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Frame {
    SimplifyingClause(Clause),
    RewritingLiteralAtom { ordinal: usize, atom: Term },
    RewritingArg { ordinal: usize, term: Term, subst: Substitution },
    ApplyingRule { rune: Rune, target: Term },
    RewritingBody { term: Term, subst: Substitution },
    RewritingRhs { term: Term, subst: Substitution },
    RelievingHyp { ordinal: usize, term: Term, subst: Substitution },
    RewritingLambdaBody { ordinal: usize, term: Term },
}

impl Frame {
    pub fn render(&self, n: usize, out: &mut String) {
        let (head, term, subst) = match self {
            Frame::SimplifyingClause(c) => {
                let _ = write!(out, "{n}. Simplifying the clause\n     {c}\n");
                return;
            }
            Frame::ApplyingRule { rune, target } => {
                let _ = write!(out, "{n}. Attempting to apply {rune} to\n     {target}\n");
                return;
            }
            Frame::RewritingLiteralAtom { ordinal: k, atom } => {
                (format!("the atom of the {} literal", ordinal(*k)), atom, None)
            }
            Frame::RewritingArg { ordinal: k, term, subst } => {
                (format!("the {} argument", ordinal(*k)), term, Some(subst))
            }
            Frame::RewritingBody { term, subst } => ("the body".into(), term, Some(subst)),
            Frame::RewritingRhs { term, subst } => ("the rhs of the conclusion".into(), term, Some(subst)),
            Frame::RelievingHyp { ordinal: k, term, subst } => {
                let _ = write!(out, "{n}. Rewriting (to establish) the {} hypothesis,\n     {term},\n", ordinal(*k));
                render_subst(subst, out);
                return;
            }
            Frame::RewritingLambdaBody { ordinal: k, term } => (
                format!("the body of the lambda object in the {} argument", ordinal(*k)),
                term,
                None,
            ),
        };
        let _ = write!(out, "{n}. Rewriting (to simplify) {head},\n     {term},\n");
        if let Some(s) = subst {
            render_subst(s, out);
        }
    }
}

fn render_subst(s: &Substitution, out: &mut String) {
    if s.is_empty() {
        return;
    }
    out.push_str("   under the substitution\n");
    for (v, t) in s.iter().rev() {
        let _ = writeln!(out, "     {v} : {t}");
    }
}

#[derive(Debug)]
struct Link {
    frame: Frame,
    parent: Option<Arc<Link>>,
    len: usize,
}

/// The rewriter's call stack, outermost frame first. Copies share their
/// common frames.
#[derive(Clone, Debug, Default)]
pub struct GStack(Option<Arc<Link>>);

impl GStack {
    pub fn from_frames(frames: Vec<Frame>) -> Self {
        let mut g = GStack::default();
        for f in frames {
            g.push(f);
        }
        g
    }

    /// The frames, outermost first.
    pub fn frames(&self) -> Vec<&Frame> {
        let mut out: Vec<&Frame> = self.links().map(|l| &l.frame).collect();
        out.reverse();
        out
    }

    fn links(&self) -> impl Iterator<Item = &Link> {
        core::iter::successors(self.0.as_deref(), |l| l.parent.as_deref())
    }

    pub fn push(&mut self, frame: Frame) {
        let len = self.len() + 1;
        self.0 = Some(Arc::new(Link { frame, parent: self.0.take(), len }));
    }

    pub fn pop(&mut self) {
        if let Some(top) = self.0.take() {
            self.0 = top.parent.clone();
        }
    }

    pub fn len(&self) -> usize {
        self.0.as_ref().map_or(0, |l| l.len)
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_none()
    }

    fn suffix(&self, len: usize) -> Option<&Arc<Link>> {
        let mut cur = self.0.as_ref();
        while let Some(l) = cur {
            if l.len <= len {
                break;
            }
            cur = l.parent.as_ref();
        }
        cur
    }

    /// True iff `self` is a proper extension of `prefix`.
    pub fn strictly_extends(&self, prefix: &GStack) -> bool {
        self.len() > prefix.len() && same_links(self.suffix(prefix.len()), prefix.0.as_ref())
    }

    /// Numbered frames in the `cw-gstack` layout.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for (i, f) in self.frames().into_iter().enumerate() {
            f.render(i + 1, &mut out);
        }
        out
    }
}

fn same_links(mut a: Option<&Arc<Link>>, mut b: Option<&Arc<Link>>) -> bool {
    loop {
        match (a, b) {
            (None, None) => return true,
            (Some(x), Some(y)) => {
                if Arc::ptr_eq(x, y) {
                    return true;
                }
                if x.len != y.len || x.frame != y.frame {
                    return false;
                }
                a = x.parent.as_ref();
                b = y.parent.as_ref();
            }
            _ => return false,
        }
    }
}

impl PartialEq for GStack {
    fn eq(&self, other: &Self) -> bool {
        self.len() == other.len() && same_links(self.0.as_ref(), other.0.as_ref())
    }
}

impl Eq for GStack {}

impl core::hash::Hash for GStack {
    fn hash<H: core::hash::Hasher>(&self, state: &mut H) {
        self.len().hash(state);
        for l in self.links() {
            l.frame.hash(state);
        }
    }
}

impl Drop for Link {
    fn drop(&mut self) {
        let mut next = self.parent.take();
        while let Some(l) = next {
            match Arc::try_unwrap(l) {
                Ok(mut l) => next = l.parent.take(),
                Err(_) => break,
            }
        }
    }
}

/// Assumptions about terms, most recent first.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct TypeAlist {
    entries: Vec<(Term, bool)>,
}

const BOOLEAN_RECOGNIZERS: &[&str] = &[
    "EQUAL", "NOT", "CONSP", "ATOM", "STRINGP", "INTEGERP", "NATP", "<", "IFF", "SYMBOLP", "ENDP",
    "TRUE-LISTP",
];

impl TypeAlist {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn entries(&self) -> &[(Term, bool)] {
        &self.entries
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn lookup(&self, t: &Term) -> Option<bool> {
        self.entries.iter().find(|(u, _)| u == t).map(|&(_, b)| b)
    }

    /// Records that `t` is non-nil (`truth`) or nil. `None` means the
    /// assumption contradicts what is already known.
    pub fn assume(&self, t: &Term, truth: bool) -> Option<TypeAlist> {
        match t {
            Term::Quote(_) => (t.is_nil() != truth).then(|| self.clone()),
            Term::App(f, args) if f.as_str() == "NOT" && args.len() == 1 => self.assume(&args[0], !truth),
            Term::App(f, args) if truth && f.as_str() == "IF" && args.len() == 3 && args[2].is_nil() => {
                self.assume(&args[0], true)?.assume(&args[1], true)
            }
            _ => match self.lookup(t) {
                Some(b) if b == truth => Some(self.clone()),
                Some(_) => None,
                None => {
                    let mut entries = Vec::with_capacity(self.entries.len() + 1);
                    entries.push((t.clone(), truth));
                    entries.extend(self.entries.iter().cloned());
                    Some(TypeAlist { entries })
                }
            },
        }
    }

    pub fn true_terms(&self) -> impl Iterator<Item = &Term> {
        self.entries.iter().filter(|(_, b)| *b).map(|(t, _)| t)
    }

    /// `(a, b)` for every `(EQUAL a b)` assumed true.
    pub fn equalities(&self) -> impl Iterator<Item = (&Term, &Term)> {
        self.true_terms().filter_map(|t| match t {
            Term::App(f, args) if f.as_str() == "EQUAL" && args.len() == 2 => Some((&args[0], &args[1])),
            _ => None,
        })
    }

    /// The printed type and the displayed term for an entry.
    fn decode_entry(t: &Term, truth: bool) -> (&'static str, &Term) {
        let consp_arg = match t {
            Term::App(f, args) if f.as_str() == "CONSP" && args.len() == 1 => Some(&args[0]),
            _ => None,
        };
        match (consp_arg, truth) {
            (Some(x), true) => ("*TS-CONS*", x),
            (Some(x), false) => ("(TS-COMPLEMENT *TS-CONS*)", x),
            (None, false) => ("*TS-NIL*", t),
            (None, true) => {
                let boolean = t.head().is_some_and(|f| BOOLEAN_RECOGNIZERS.contains(&f.as_str()));
                (if boolean { "*TS-T*" } else { "(TS-COMPLEMENT *TS-NIL*)" }, t)
            }
        }
    }

    /// Groups entries by type in order of first appearance.
    pub fn decode(&self, show: impl Fn(&Term) -> String) -> String {
        let mut groups: Vec<(&'static str, Vec<String>)> = Vec::new();
        for (t, truth) in &self.entries {
            let (ty, shown) = Self::decode_entry(t, *truth);
            let text = show(shown);
            match groups.iter_mut().find(|(g, _)| *g == ty) {
                Some((_, members)) => members.push(text),
                None => groups.push((ty, alloc::vec![text])),
            }
        }
        let mut out = String::from("Decoded type-alist:\n");
        for (ty, members) in groups {
            let _ = writeln!(out, "-----\nTerms with type {ty}:");
            for m in members {
                let _ = writeln!(out, "{m}");
            }
        }
        out.push_str("\n==========\nUse (GET-BRR-LOCAL 'TYPE-ALIST STATE) to see actual type-alist.\n");
        out
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum FailureReason {
    /// A hypothesis (1-based) did not rewrite to true.
    HypFailed { index: usize, rewrote_to: Term },
    /// No instantiation of a hypothesis's free variables was found.
    FreeVarsNotFound { index: usize },
    BackchainLimit { index: usize },
    LoopStopper,
    /// The lhs failed to match; only ever passed to `brkpt2` after a near-miss check.
    NearMiss,
    /// A recursive definition was opened up but left a recursive call under an IF.
    RecursiveExpansion,
    /// Instantiating the rhs would cost more than the remaining step budget.
    StepBudget,
}

impl fmt::Display for FailureReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FailureReason::HypFailed { index, rewrote_to } => write!(f, ":HYP {index} rewrote to {rewrote_to}"),
            FailureReason::FreeVarsNotFound { index } => write!(
                f,
                ":HYP {index} contains free variables for which no suitable bindings were found"
            ),
            FailureReason::BackchainLimit { index } => {
                write!(f, "the backchain limit was reached while relieving :HYP {index}")
            }
            FailureReason::LoopStopper => {
                f.write_str("the permutative rule would not make the target smaller in the term order")
            }
            FailureReason::NearMiss => f.write_str(":LHS does not match :TARGET"),
            FailureReason::RecursiveExpansion => {
                f.write_str("the expansion leaves a recursive call under an IF")
            }
            FailureReason::StepBudget => f.write_str("the step budget was exhausted"),
        }
    }
}

/// Rewriting parameters carried through a proof.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Rcnst {
    pub backchain_limit: usize,
    pub step_budget: u64,
    pub rewrite_lambda_objects: bool,
    /// Convert `IMPLIES`/`AND` goals into multi-literal clauses.
    pub preprocess: bool,
}

impl Default for Rcnst {
    fn default() -> Self {
        Rcnst { backchain_limit: 3, step_budget: 20_000, rewrite_lambda_objects: true, preprocess: true }
    }
}

/// A breakpoint handler asked the proof to stop.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Abort;

/// What the rewriter knows when it considers a rule.
#[derive(Clone, Copy, Debug)]
pub struct Attempt<'a> {
    pub rule: &'a RewriteRule,
    pub target: &'a Term,
    pub unify_subst: &'a Substitution,
    pub type_alist: &'a TypeAlist,
    pub ancestors: &'a [Term],
    pub gstack: &'a GStack,
    pub rcnst: &'a Rcnst,
    pub ttree: &'a BTreeSet<Rune>,
}

/// The end of a rule attempt.
#[derive(Clone, Copy, Debug)]
pub struct Outcome<'a> {
    pub attempt: Attempt<'a>,
    pub failure: Option<&'a FailureReason>,
    pub result: Option<&'a Term>,
}

impl Outcome<'_> {
    pub fn wonp(&self) -> bool {
        self.failure.is_none()
    }
}

pub trait Hooks {
    fn near_miss_brkpt1(&mut self, attempt: &Attempt<'_>) -> Result<(), Abort>;
    fn brkpt1(&mut self, attempt: &Attempt<'_>) -> Result<(), Abort>;
    fn brkpt2(&mut self, outcome: &Outcome<'_>) -> Result<(), Abort>;
}

/// Handlers that do nothing.
#[derive(Clone, Copy, Debug, Default)]
pub struct NoHooks;

impl Hooks for NoHooks {
    fn near_miss_brkpt1(&mut self, _: &Attempt<'_>) -> Result<(), Abort> {
        Ok(())
    }
    fn brkpt1(&mut self, _: &Attempt<'_>) -> Result<(), Abort> {
        Ok(())
    }
    fn brkpt2(&mut self, _: &Outcome<'_>) -> Result<(), Abort> {
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ProofOutcome {
    pub proved: bool,
    /// Clauses that could not be simplified further.
    pub checkpoints: Vec<Clause>,
    pub budget_exhausted: bool,
    /// Rewriting was cut off at `REWRITE_DEPTH_LIMIT` nested calls.
    pub depth_exceeded: bool,
    /// Runes of every successful rule application.
    pub runes: BTreeSet<Rune>,
}

impl ProofOutcome {
    pub fn render(&self) -> String {
        if self.proved {
            return String::from("Q.E.D.\n");
        }
        let mut out = String::new();
        if self.budget_exhausted {
            out.push_str("The rewriter's step budget was exhausted.\n");
        }
        if self.depth_exceeded {
            out.push_str(DEPTH_EXCEEDED);
        }
        out.push_str("The proof fails.  Checkpoint:\n");
        for c in &self.checkpoints {
            let _ = writeln!(out, "{}", clause_to_formula(c));
        }
        out
    }
}

/// `(NOT a)` for a term, `a` for `(NOT a)`.
pub fn negate(t: &Term) -> Term {
    match t {
        Term::App(f, args) if f.as_str() == "NOT" && args.len() == 1 => args[0].clone(),
        Term::Quote(_) => {
            if t.is_nil() {
                Term::t()
            } else {
                Term::nil()
            }
        }
        _ => Term::App(Symbol::new("NOT"), alloc::vec![t.clone()]),
    }
}

/// Displays a clause as `(IMPLIES (AND h...) concl)`.
pub fn clause_to_formula(c: &Clause) -> Term {
    let lits = c.literals();
    match lits {
        [] => Term::nil(),
        [only] => only.clone(),
        [hyps @ .., concl] => {
            let mut hs: Vec<Term> = hyps.iter().map(negate).collect();
            let hyp = if hs.len() == 1 { hs.pop().unwrap() } else { Term::App(Symbol::new("AND"), hs) };
            Term::App(Symbol::new("IMPLIES"), alloc::vec![hyp, concl.clone()])
        }
    }
}

fn flatten_conjuncts(t: &Term, out: &mut Vec<Term>) {
    match t {
        Term::App(f, args) if f.as_str() == "IF" && args.len() == 3 && args[2].is_nil() => {
            flatten_conjuncts(&args[0], out);
            flatten_conjuncts(&args[1], out);
        }
        Term::App(f, args) if f.as_str() == "AND" => args.iter().for_each(|a| flatten_conjuncts(a, out)),
        _ => out.push(t.clone()),
    }
}

/// Turns `(IMPLIES (AND h1 h2) c)` into `((NOT h1) (NOT h2) c)`.
pub fn clausify(goal: &Term) -> Clause {
    let mut lits = Vec::new();
    let mut concl = goal.clone();
    loop {
        match &concl {
            Term::App(f, args) if f.as_str() == "IMPLIES" && args.len() == 2 => {
                let mut hyps = Vec::new();
                flatten_conjuncts(&args[0], &mut hyps);
                lits.extend(hyps.iter().map(negate));
                concl = args[1].clone();
            }
            _ => break,
        }
    }
    lits.push(concl);
    Clause(lits)
}

fn has_if_calling(t: &Term, f: &Symbol) -> bool {
    match t {
        Term::App(g, args) => {
            (g.as_str() == "IF" && args.iter().any(|a| a.mentions_fn(f))) || args.iter().any(|a| has_if_calling(a, f))
        }
        _ => false,
    }
}

const MAX_PASSES: usize = 16;

/// Nested `rewrite` calls allowed before the rewriter gives up on a term.
pub const REWRITE_DEPTH_LIMIT: usize = 200;

pub const DEPTH_EXCEEDED: &str = "The rewriter's call depth limit of 200 was exceeded.\n";

/// Nodes copied in from the bindings when instantiating `t` under `s`.
fn instance_size(t: &Term, s: &Substitution) -> usize {
    match t {
        Term::Var(v) => s.get(v).map_or(0, |b| b.size().saturating_sub(1)),
        Term::App(_, args) => args.iter().map(|a| instance_size(a, s)).sum(),
        _ => 0,
    }
}

pub struct Rewriter<'a, H: Hooks> {
    world: &'a World,
    rcnst: Rcnst,
    mode: GstackMode,
    hooks: &'a mut H,
    gstack: GStack,
    steps_left: u64,
    exhausted: bool,
    depth: usize,
    depth_exceeded: bool,
    expanding: Vec<Symbol>,
    ttree: BTreeSet<Rune>,
}

impl<'a, H: Hooks> Rewriter<'a, H> {
    pub fn new(world: &'a World, rcnst: Rcnst, mode: GstackMode, hooks: &'a mut H) -> Self {
        let steps_left = rcnst.step_budget;
        Rewriter {
            world,
            rcnst,
            mode,
            hooks,
            gstack: GStack::default(),
            steps_left,
            exhausted: false,
            depth: 0,
            depth_exceeded: false,
            expanding: Vec::new(),
            ttree: BTreeSet::new(),
        }
    }

    pub fn gstack(&self) -> &GStack {
        &self.gstack
    }

    pub fn budget_exhausted(&self) -> bool {
        self.exhausted
    }

    /// Simplifies the clause form of `goal` until it is proved or stops changing.
    pub fn prove(&mut self, goal: &Term) -> Result<ProofOutcome, Abort> {
        let mut clause = if self.rcnst.preprocess { clausify(goal) } else { Clause(alloc::vec![goal.clone()]) };
        let mut proved = false;
        for _ in 0..MAX_PASSES {
            match normalize(clause) {
                None => {
                    proved = true;
                    clause = Clause::default();
                    break;
                }
                Some(c) => clause = c,
            }
            if clause.0.is_empty() || self.exhausted || self.depth_exceeded {
                break;
            }
            match self.simplify_clause(&clause)? {
                None => {
                    proved = true;
                    break;
                }
                Some(next) if next == clause => break,
                Some(next) => clause = next,
            }
        }
        if !proved {
            if let Some(c) = normalize(clause.clone()) {
                clause = c;
            } else {
                proved = true;
            }
        }
        Ok(ProofOutcome {
            proved,
            checkpoints: if proved { Vec::new() } else { alloc::vec![clause] },
            budget_exhausted: self.exhausted,
            depth_exceeded: self.depth_exceeded,
            runes: core::mem::take(&mut self.ttree),
        })
    }

    /// Rewrites each literal's atom assuming the other literals false.
    /// Returns `None` when the clause is proved.
    pub fn simplify_clause(&mut self, clause: &Clause) -> Result<Option<Clause>, Abort> {
        self.gstack.push(Frame::SimplifyingClause(clause.clone()));
        let r = self.simplify_literals(clause);
        self.gstack.pop();
        r
    }

    fn simplify_literals(&mut self, clause: &Clause) -> Result<Option<Clause>, Abort> {
        let mut lits = clause.0.clone();
        for i in 0..lits.len() {
            let mut ta = Some(TypeAlist::new());
            for (j, lit) in lits.iter().enumerate() {
                if j != i {
                    ta = ta.and_then(|ta| ta.assume(lit, false));
                }
            }
            let Some(ta) = ta else {
                return Ok(None);
            };
            let (atom, negated) = match &lits[i] {
                Term::App(f, args) if f.as_str() == "NOT" && args.len() == 1 => (args[0].clone(), true),
                lit => (lit.clone(), false),
            };
            self.gstack.push(Frame::RewritingLiteralAtom { ordinal: i + 1, atom: atom.clone() });
            let r = self.rewrite(&atom, &Substitution::new(), &ta, &[]);
            self.gstack.pop();
            let r = r?;
            let lit = if negated { negate(&r) } else { r };
            if lit.is_non_nil_constant() {
                return Ok(None);
            }
            lits[i] = lit;
        }
        Ok(Some(Clause(lits)))
    }

    fn tick(&mut self) -> bool {
        self.charge(1)
    }

    fn charge(&mut self, cost: u64) -> bool {
        if self.steps_left < cost {
            self.steps_left = 0;
            self.exhausted = true;
            false
        } else {
            self.steps_left -= cost;
            true
        }
    }

    /// Rewrites the instance of `t` under `s`.
    pub fn rewrite(&mut self, t: &Term, s: &Substitution, ta: &TypeAlist, anc: &[Term]) -> Result<Term, Abort> {
        if self.depth >= REWRITE_DEPTH_LIMIT {
            self.depth_exceeded = true;
            return Ok(s.apply(t));
        }
        self.depth += 1;
        let r = self.rewrite_term(t, s, ta, anc);
        self.depth -= 1;
        r
    }

    fn rewrite_term(&mut self, t: &Term, s: &Substitution, ta: &TypeAlist, anc: &[Term]) -> Result<Term, Abort> {
        let Term::App(f, args) = t else {
            return Ok(s.apply(t));
        };
        if !self.tick() {
            return Ok(s.apply(t));
        }
        if f.as_str() == "IF" && args.len() == 3 {
            return self.rewrite_if(args, s, ta, anc);
        }
        let mut new_args = Vec::with_capacity(args.len());
        for (i, a) in args.iter().enumerate() {
            new_args.push(self.rewrite_arg(i + 1, a, s, ta, anc)?);
        }
        if self.rcnst.rewrite_lambda_objects {
            for slot in self.world.fn_slots(f) {
                let Some(lambda) = new_args.get(slot - 1).and_then(Term::as_quoted_lambda) else {
                    continue;
                };
                self.gstack.push(Frame::RewritingLambdaBody { ordinal: slot, term: lambda.body.clone() });
                let body = self.rewrite(&lambda.body, &Substitution::new(), &TypeAlist::new(), &[]);
                self.gstack.pop();
                new_args[slot - 1] = QuotedLambda { formals: lambda.formals, body: body? }.to_term();
            }
        }
        self.rewrite_call(Term::App(f.clone(), new_args), ta, anc)
    }

    fn rewrite_arg(
        &mut self,
        ordinal: usize,
        a: &Term,
        s: &Substitution,
        ta: &TypeAlist,
        anc: &[Term],
    ) -> Result<Term, Abort> {
        if !matches!(a, Term::App(..)) {
            return Ok(s.apply(a));
        }
        self.gstack.push(Frame::RewritingArg { ordinal, term: a.clone(), subst: s.clone() });
        let r = self.rewrite(a, s, ta, anc);
        self.gstack.pop();
        r
    }

    fn rewrite_if(&mut self, args: &[Term], s: &Substitution, ta: &TypeAlist, anc: &[Term]) -> Result<Term, Abort> {
        let test = self.rewrite_arg(1, &args[0], s, ta, anc)?;
        if let Term::Quote(_) = test {
            let k = if test.is_nil() { 3 } else { 2 };
            return self.rewrite_arg(k, &args[k - 1], s, ta, anc);
        }
        let then_b = match ta.assume(&test, true) {
            Some(ta1) => Some(self.rewrite_arg(2, &args[1], s, &ta1, anc)?),
            None => None,
        };
        let else_b = match ta.assume(&test, false) {
            Some(ta2) => Some(self.rewrite_arg(3, &args[2], s, &ta2, anc)?),
            None => None,
        };
        Ok(match (then_b, else_b) {
            (Some(a), Some(b)) if a == b => a,
            (Some(a), Some(b)) => Term::App(Symbol::new("IF"), alloc::vec![test, a, b]),
            (Some(a), None) => a,
            (None, Some(b)) => b,
            (None, None) => Term::nil(),
        })
    }

    /// `t` has rewritten arguments.
    fn rewrite_call(&mut self, t: Term, ta: &TypeAlist, anc: &[Term]) -> Result<Term, Abort> {
        if let Some(r) = evaluate_builtin(&t) {
            return Ok(r);
        }
        match ta.lookup(&t) {
            Some(true) => return Ok(Term::t()),
            Some(false) => return Ok(Term::nil()),
            None => {}
        }
        if let Some((_, b)) = ta.equalities().find(|(a, b)| **a == t && *a != *b && a.size() >= b.size()) {
            return Ok(b.clone());
        }
        self.try_rules(t, ta, anc)
    }

    fn try_rules(&mut self, target: Term, ta: &TypeAlist, anc: &[Term]) -> Result<Term, Abort> {
        let Some(f) = target.head().cloned() else {
            return Ok(target);
        };
        let world = self.world;
        for rule in world.rules_for(&f) {
            if !rule.enabled || (rule.is_definition() && self.expanding.contains(&f)) {
                continue;
            }
            self.gstack.push(Frame::ApplyingRule { rune: rule.rune.clone(), target: target.clone() });
            let r = self.try_rule(rule, &target, ta, anc);
            self.gstack.pop();
            if let Some(result) = r? {
                return Ok(result);
            }
        }
        Ok(target)
    }

    fn try_rule(&mut self, rule: &RewriteRule, target: &Term, ta: &TypeAlist, anc: &[Term]) -> Result<Option<Term>, Abort> {
        let instrumented = self.mode != GstackMode::Off;
        let empty = Substitution::new();
        let Some(u) = match_term(&rule.lhs, target, &empty) else {
            if instrumented {
                let attempt = Attempt {
                    rule,
                    target,
                    unify_subst: &empty,
                    type_alist: ta,
                    ancestors: anc,
                    gstack: &self.gstack,
                    rcnst: &self.rcnst,
                    ttree: &self.ttree,
                };
                self.hooks.near_miss_brkpt1(&attempt)?;
                self.hooks.brkpt2(&Outcome { attempt, failure: Some(&FailureReason::NearMiss), result: None })?;
            }
            return Ok(None);
        };
        if instrumented {
            self.hooks.brkpt1(&Attempt {
                rule,
                target,
                unify_subst: &u,
                type_alist: ta,
                ancestors: anc,
                gstack: &self.gstack,
                rcnst: &self.rcnst,
                ttree: &self.ttree,
            })?;
        }
        let (u, outcome) = self.apply_matched(rule, target, u, ta, anc)?;
        if outcome.is_ok() {
            self.ttree.insert(rule.rune.clone());
        }
        if instrumented {
            let attempt = Attempt {
                rule,
                target,
                unify_subst: &u,
                type_alist: ta,
                ancestors: anc,
                gstack: &self.gstack,
                rcnst: &self.rcnst,
                ttree: &self.ttree,
            };
            let (failure, result) = match &outcome {
                Ok(r) => (None, Some(r)),
                Err(reason) => (Some(reason), None),
            };
            self.hooks.brkpt2(&Outcome { attempt, failure, result })?;
        }
        Ok(outcome.ok())
    }

    #[allow(clippy::type_complexity)]
    fn apply_matched(
        &mut self,
        rule: &RewriteRule,
        target: &Term,
        mut u: Substitution,
        ta: &TypeAlist,
        anc: &[Term],
    ) -> Result<(Substitution, Result<Term, FailureReason>), Abort> {
        for (k, hyp) in rule.hyps.iter().enumerate() {
            let index = k + 1;
            if hyp.vars().iter().any(|v| !u.is_bound(v)) {
                match ta.true_terms().find_map(|t| match_term(hyp, t, &u)) {
                    Some(extended) => u = extended,
                    None => return Ok((u, Err(FailureReason::FreeVarsNotFound { index }))),
                }
                continue;
            }
            if anc.len() >= self.rcnst.backchain_limit {
                return Ok((u, Err(FailureReason::BackchainLimit { index })));
            }
            let mut anc2 = Vec::with_capacity(anc.len() + 1);
            anc2.push(u.apply(hyp));
            anc2.extend_from_slice(anc);
            self.gstack.push(Frame::RelievingHyp { ordinal: index, term: hyp.clone(), subst: u.clone() });
            let r = self.rewrite(hyp, &u, ta, &anc2);
            self.gstack.pop();
            let r = r?;
            if !r.is_non_nil_constant() {
                return Ok((u, Err(FailureReason::HypFailed { index, rewrote_to: r })));
            }
        }
        if rule.permutative && term_order(&u.apply(&rule.rhs), target) != Ordering::Less {
            return Ok((u, Err(FailureReason::LoopStopper)));
        }
        if !self.charge(instance_size(&rule.rhs, &u) as u64) {
            return Ok((u, Err(FailureReason::StepBudget)));
        }
        let frame = if rule.is_definition() {
            Frame::RewritingBody { term: rule.rhs.clone(), subst: u.clone() }
        } else {
            Frame::RewritingRhs { term: rule.rhs.clone(), subst: u.clone() }
        };
        if rule.is_definition() {
            self.expanding.push(rule.head().clone());
        }
        self.gstack.push(frame);
        let r = self.rewrite(&rule.rhs, &u, ta, anc);
        self.gstack.pop();
        if rule.is_definition() {
            self.expanding.pop();
        }
        let r = r?;
        if rule.is_recursive_definition() && has_if_calling(&r, rule.head()) {
            return Ok((u, Err(FailureReason::RecursiveExpansion)));
        }
        Ok((u, Ok(r)))
    }
}

/// Drops `'NIL` and duplicate literals. `None` if the clause is trivially true.
fn normalize(clause: Clause) -> Option<Clause> {
    let mut lits: Vec<Term> = Vec::new();
    for lit in clause.0 {
        if lit.is_non_nil_constant() {
            return None;
        }
        if lit.is_nil() || lits.contains(&lit) {
            continue;
        }
        if lits.contains(&negate(&lit)) {
            return None;
        }
        lits.push(lit);
    }
    Some(Clause(lits))
}

/// Built-in simplifications on calls whose arguments are already rewritten.
fn evaluate_builtin(t: &Term) -> Option<Term> {
    let Term::App(f, args) = t else {
        return None;
    };
    let bool_term = |b: bool| if b { Term::t() } else { Term::nil() };
    match (f.as_str(), args.as_slice()) {
        ("EQUAL", [a, b]) if a == b => Some(Term::t()),
        ("EQUAL", [Term::Quote(a), Term::Quote(b)]) => Some(bool_term(a == b)),
        ("NOT", [a @ Term::Quote(_)]) => Some(bool_term(a.is_nil())),
        ("IMPLIES", [a, b]) if a.is_nil() || b.is_non_nil_constant() => Some(Term::t()),
        ("IMPLIES", [a, b]) if a.is_non_nil_constant() && matches!(b, Term::Quote(_)) => {
            Some(bool_term(!b.is_nil()))
        }
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::term::parse_term;
    use alloc::string::ToString;

    fn world(text: &str) -> World {
        let mut w = World::new();
        w.load_text(text).unwrap();
        w
    }

    fn goal(w: &World, text: &str) -> Term {
        w.signature
            .to_term_readonly(&crate::sexpr::parse(text).unwrap(), &crate::term::VarScope::Any)
            .unwrap()
    }

    fn prove(w: &World, text: &str) -> ProofOutcome {
        let mut hooks = NoHooks;
        Rewriter::new(w, Rcnst::default(), GstackMode::Off, &mut hooks).prove(&goal(w, text)).unwrap()
    }

    const PQ: &str = "(defthm p-rule (implies (q x) (p (f x y))))
                      (defthm q-rule1 (implies (r x) (q x)))";

    #[test]
    fn p_rule_proves_matching_goal() {
        let w = world(PQ);
        let out = prove(&w, "(implies (r u) (p (f u v)))");
        assert!(out.proved);
        assert!(out.checkpoints.is_empty());
        assert_eq!(out.render(), "Q.E.D.\n");
    }

    #[test]
    fn p_rule_fails_on_wrong_variable() {
        let w = world(PQ);
        let out = prove(&w, "(implies (r v) (p (f u v)))");
        assert!(!out.proved);
        assert_eq!(out.checkpoints.len(), 1);
        assert_eq!(clause_to_formula(&out.checkpoints[0]).to_string(), "(IMPLIES (R V) (P (F U V)))");
    }

    #[test]
    fn trivial_goal() {
        assert!(prove(&World::new(), "'t").proved);
        assert!(prove(&World::new(), "t").proved);
    }

    #[test]
    fn second_literal_rewrites_to_t() {
        let w = world(PQ);
        let clause = Clause(alloc::vec![parse_term("(NOT (R U))").unwrap(), parse_term("(Q U)").unwrap()]);
        let mut hooks = NoHooks;
        let mut rw = Rewriter::new(&w, Rcnst::default(), GstackMode::Off, &mut hooks);
        assert_eq!(rw.simplify_clause(&clause).unwrap(), None);
    }

    #[test]
    fn lambda_objects_are_rewritten() {
        let w = world("(defun atom (x) (if (consp x) 'nil 't)) (fn-slot always$ 1)");
        let t = goal(&w, "(always$ '(lambda (loop$-ivar) (atom loop$-ivar)) (nats n))");
        let mut hooks = NoHooks;
        let mut rw = Rewriter::new(&w, Rcnst::default(), GstackMode::Off, &mut hooks);
        let r = rw.rewrite(&t, &Substitution::new(), &TypeAlist::new(), &[]).unwrap();
        assert_eq!(r.to_string(), "(ALWAYS$ '(LAMBDA (LOOP$-IVAR) (IF (CONSP LOOP$-IVAR) 'NIL 'T)) (NATS N))");
        let rcnst = Rcnst { rewrite_lambda_objects: false, ..Rcnst::default() };
        let mut rw = Rewriter::new(&w, rcnst, GstackMode::Off, &mut hooks);
        assert_eq!(rw.rewrite(&t, &Substitution::new(), &TypeAlist::new(), &[]).unwrap(), t);
    }

    #[test]
    fn equality_from_type_alist_switches_arguments() {
        let w = world("(defun binary-append (x y) (if (consp x) (cons (car x) (binary-append (cdr x) y)) y))");
        let ta = TypeAlist::new()
            .assume(&parse_term("(CONSP X)").unwrap(), true)
            .unwrap()
            .assume(&parse_term("(EQUAL (BINARY-APPEND (CDR X) Y) (BINARY-APPEND Y (CDR X)))").unwrap(), true)
            .unwrap();
        let mut hooks = NoHooks;
        let mut rw = Rewriter::new(&w, Rcnst::default(), GstackMode::Off, &mut hooks);
        let r = rw.rewrite(&parse_term("(BINARY-APPEND X Y)").unwrap(), &Substitution::new(), &ta, &[]).unwrap();
        assert_eq!(r.to_string(), "(CONS (CAR X) (BINARY-APPEND Y (CDR X)))");
        // without the CONSP assumption the expansion is rejected
        let r = rw.rewrite(&parse_term("(BINARY-APPEND Y X)").unwrap(), &Substitution::new(), &ta, &[]).unwrap();
        assert_eq!(r.to_string(), "(BINARY-APPEND Y X)");
    }

    #[test]
    fn revappend_with_nil_becomes_rev() {
        let w = world(
            "(defrule revappend-removal :lhs (revappend x y) :rhs (binary-append (rev x) y))
             (defrule append-atom-under-list-equiv :lhs (binary-append x 'nil) :rhs x)",
        );
        let mut hooks = NoHooks;
        let mut rw = Rewriter::new(&w, Rcnst::default(), GstackMode::Off, &mut hooks);
        let r = rw
            .rewrite(&parse_term("(REVAPPEND X 'NIL)").unwrap(), &Substitution::new(), &TypeAlist::new(), &[])
            .unwrap();
        assert_eq!(r.to_string(), "(REV X)");
        assert_eq!(rw.rewrite(&Term::nil(), &Substitution::new(), &TypeAlist::new(), &[]).unwrap(), Term::nil());
    }

    #[test]
    fn loop_stopper_blocks_symmetric_instance() {
        let w = world("(defrule comm :lhs (g x y) :rhs (g y x))");
        let mut hooks = NoHooks;
        let mut rw = Rewriter::new(&w, Rcnst::default(), GstackMode::Off, &mut hooks);
        let t = parse_term("(G A A)").unwrap();
        assert_eq!(rw.rewrite(&t, &Substitution::new(), &TypeAlist::new(), &[]).unwrap(), t);
        let t = parse_term("(G B A)").unwrap();
        assert_eq!(rw.rewrite(&t, &Substitution::new(), &TypeAlist::new(), &[]).unwrap().to_string(), "(G A B)");
    }

    #[test]
    fn free_variable_hypothesis_uses_type_alist() {
        let w = world("(defrule fr :hyps ((r x)) :lhs (h) :rhs 't)");
        let mut hooks = NoHooks;
        let mut rw = Rewriter::new(&w, Rcnst::default(), GstackMode::Off, &mut hooks);
        let ta = TypeAlist::new().assume(&parse_term("(R A)").unwrap(), true).unwrap();
        let r = rw.rewrite(&parse_term("(H)").unwrap(), &Substitution::new(), &ta, &[]).unwrap();
        assert!(r.is_t());
        let r = rw.rewrite(&parse_term("(H)").unwrap(), &Substitution::new(), &TypeAlist::new(), &[]).unwrap();
        assert_eq!(r.to_string(), "(H)");
    }

    #[test]
    fn disabled_rules_are_not_tried() {
        let mut w = world(PQ);
        w.set_enabled(&Symbol::new("Q-RULE1"), false).unwrap();
        assert!(!prove(&w, "(implies (r u) (p (f u v)))").proved);
    }

    #[test]
    fn budget_exhaustion_is_reported() {
        let w = world("(defrule loop :lhs (k x) :rhs (k (s x)))");
        let mut hooks = NoHooks;
        let rcnst = Rcnst { step_budget: 50, ..Rcnst::default() };
        let out = Rewriter::new(&w, rcnst, GstackMode::Off, &mut hooks).prove(&goal(&w, "(k a)")).unwrap();
        assert!(!out.proved);
        assert!(out.budget_exhausted);
    }

    #[test]
    fn clausify_flattens_hypotheses() {
        let w = World::new();
        let c = clausify(&goal(&w, "(implies (and (integerp n) (not (< n '0)) (< n (len x))) (p n))"));
        assert_eq!(c.to_string(), "((NOT (INTEGERP N)) (< N '0) (NOT (< N (LEN X))) (P N))");
    }

    #[test]
    fn type_alist_decoding() {
        let ta = TypeAlist::new()
            .assume(&parse_term("(CONSP X)").unwrap(), true)
            .unwrap()
            .assume(&parse_term("(EQUAL A B)").unwrap(), true)
            .unwrap()
            .assume(&parse_term("(R V)").unwrap(), true)
            .unwrap();
        let text = ta.decode(|t| t.to_string());
        assert_eq!(
            text,
            "Decoded type-alist:\n-----\nTerms with type (TS-COMPLEMENT *TS-NIL*):\n(R V)\n-----\nTerms with type *TS-T*:\n(EQUAL A B)\n-----\nTerms with type *TS-CONS*:\nX\n\n==========\nUse (GET-BRR-LOCAL 'TYPE-ALIST STATE) to see actual type-alist.\n"
        );
        assert!(ta.assume(&parse_term("(R V)").unwrap(), false).is_none());
        assert!(ta.assume(&parse_term("(NOT (R V))").unwrap(), true).is_none());
    }

    #[test]
    fn self_rewriting_rule_stops_at_depth_limit() {
        let w = world("(defrule id :lhs (k x) :rhs (k x))");
        let out = prove(&w, "(p (k a))");
        assert!(out.depth_exceeded);
        assert!(!out.proved);
        assert!(out.render().contains("depth limit"));
    }

    #[test]
    fn gstack_copies_share_frames() {
        let mut a = GStack::default();
        a.push(Frame::RewritingLiteralAtom { ordinal: 1, atom: parse_term("(P X)").unwrap() });
        let mut b = a.clone();
        b.push(Frame::RewritingLiteralAtom { ordinal: 2, atom: parse_term("(Q X)").unwrap() });
        assert!(b.strictly_extends(&a));
        assert!(!a.strictly_extends(&b));
        assert_eq!(b.frames().len(), 2);
        b.pop();
        assert_eq!(a, b);
        let c = GStack::from_frames(a.frames().into_iter().cloned().collect());
        assert_eq!(a, c);
        assert!(!c.strictly_extends(&a));
    }

    #[test]
    fn gstack_rendering() {
        let s: Substitution = [(Symbol::new("X"), Term::var("X")), (Symbol::new("Y"), Term::nil())].into_iter().collect();
        let gs = GStack::from_frames(alloc::vec![
            Frame::SimplifyingClause(Clause(alloc::vec![parse_term("(P X)").unwrap()])),
            Frame::RewritingLiteralAtom { ordinal: 1, atom: parse_term("(P X)").unwrap() },
            Frame::ApplyingRule { rune: crate::rules::Rune::new(crate::rules::RuleClass::Rewrite, "R"), target: parse_term("(P X)").unwrap() },
            Frame::RewritingRhs { term: parse_term("(Q X Y)").unwrap(), subst: s },
        ]);
        assert_eq!(
            gs.render(),
            "1. Simplifying the clause\n     ((P X))\n2. Rewriting (to simplify) the atom of the first literal,\n     (P X),\n3. Attempting to apply (:REWRITE R) to\n     (P X)\n4. Rewriting (to simplify) the rhs of the conclusion,\n     (Q X Y),\n   under the substitution\n     Y : 'NIL\n     X : X\n"
        );
    }
}
