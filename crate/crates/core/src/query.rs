//! `cw-gstack-for-subterm` and friends: find the first rule application
//! that introduced a term, then extend its stack through subsidiary
//! applications whose results still contain it.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write as _;

use crate::brr_data::BrrData;
use crate::matching::match_term;
use crate::rewriter::GStack;
use crate::rules::Rune;
use crate::sexpr::Symbol;
use crate::term::{occurs_subterm, Substitution, Term};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum QueryMode {
    /// The result contains the term.
    Subterm,
    /// The result is the term.
    Term,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct QueryPattern {
    pub term: Term,
    /// Variables of `term` that may be instantiated.
    pub free: BTreeSet<Symbol>,
}

impl QueryPattern {
    pub fn exact(term: Term) -> Self {
        QueryPattern { term, free: BTreeSet::new() }
    }

    /// Instances of the pattern among the subterms of `t`, leftmost-innermost.
    pub fn instances_in(&self, t: &Term) -> Vec<Term> {
        if self.free.is_empty() {
            return alloc::vec![self.term.clone()];
        }
        let fixed: Substitution = self
            .term
            .vars()
            .into_iter()
            .filter(|v| !self.free.contains(v))
            .map(|v| (v.clone(), Term::Var(v)))
            .collect();
        let mut out: Vec<Term> = Vec::new();
        for sub in t.subterms_innermost() {
            if let Some(s) = match_term(&self.term, sub, &fixed) {
                let inst = s.apply(&self.term);
                if !out.contains(&inst) {
                    out.push(inst);
                }
            }
        }
        out
    }
}

/// `record` introduced `instance`: its result has it (as a subterm, or
/// exactly) and its target does not.
pub fn introduces(record: &BrrData, instance: &Term, mode: QueryMode) -> bool {
    let Some(result) = &record.post.brr_result else {
        return false;
    };
    let target = &record.pre.target;
    match mode {
        QueryMode::Subterm => occurs_subterm(instance, result) && !occurs_subterm(instance, target),
        QueryMode::Term => result == instance && target != instance,
    }
}

/// Whether a record's result is suitable for extending the stack.
pub fn suitable(record: &BrrData, instance: &Term, mode: QueryMode) -> bool {
    match (&record.post.brr_result, mode) {
        (Some(r), QueryMode::Subterm) => occurs_subterm(instance, r),
        (Some(r), QueryMode::Term) => r == instance,
        (None, _) => false,
    }
}

/// A record's identity: the child indices leading to it.
pub type RecordPath = Vec<usize>;

pub fn record_at<'a>(data: &'a [BrrData], path: &[usize]) -> Option<&'a BrrData> {
    let (first, rest) = path.split_first()?;
    let mut r = data.get(*first)?;
    for &i in rest {
        r = r.completed.get(i)?;
    }
    Some(r)
}

fn is_excluded(path: &[usize], excluded: &[RecordPath]) -> bool {
    excluded.iter().any(|e| path.starts_with(e))
}

/// The first record in application order (depth first, parents before
/// children) outside `excluded` that introduced an instance of `pattern`.
pub fn find_product(
    data: &[BrrData],
    pattern: &QueryPattern,
    mode: QueryMode,
    excluded: &[RecordPath],
) -> Option<(RecordPath, Term)> {
    let mut path = Vec::new();
    search(data, pattern, mode, excluded, &mut path)
}

fn search(
    records: &[BrrData],
    pattern: &QueryPattern,
    mode: QueryMode,
    excluded: &[RecordPath],
    path: &mut RecordPath,
) -> Option<(RecordPath, Term)> {
    for (i, r) in records.iter().enumerate() {
        path.push(i);
        if !is_excluded(path, excluded) {
            if let Some(result) = &r.post.brr_result {
                let candidates = match mode {
                    QueryMode::Subterm => pattern.instances_in(result),
                    QueryMode::Term => pattern.instances_in(result).into_iter().filter(|c| c == result).collect(),
                };
                if let Some(inst) = candidates.into_iter().find(|c| introduces(r, c, mode)) {
                    return Some((path.clone(), inst));
                }
            }
            if let Some(found) = search(&r.completed, pattern, mode, excluded, path) {
                return Some(found);
            }
        }
        path.pop();
    }
    None
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QueryResult {
    pub product_path: RecordPath,
    pub product_rune: Rune,
    pub instance: Term,
    /// From the clause frame down to the deepest suitable application.
    pub stack: GStack,
    pub final_result: Term,
    /// 1-based frame number of the product's application frame.
    pub product_frame: usize,
    /// The product's result, present iff the stack goes past the product.
    pub product_result: Option<Term>,
    /// Runes of the applications below the product on the stack.
    pub descent: Vec<Rune>,
}

/// Follows the last suitable child from the product as far as possible.
pub fn extend_stack(data: &[BrrData], product_path: &[usize], instance: &Term, mode: QueryMode) -> Option<QueryResult> {
    let product = record_at(data, product_path)?;
    let mut deepest = product;
    let mut descent = Vec::new();
    while let Some(child) = deepest.completed.iter().rev().find(|c| suitable(c, instance, mode)) {
        descent.push(child.rune().clone());
        deepest = child;
    }
    Some(QueryResult {
        product_path: product_path.to_vec(),
        product_rune: product.rune().clone(),
        instance: instance.clone(),
        stack: deepest.pre.gstack.clone(),
        final_result: deepest.post.brr_result.clone()?,
        product_frame: product.pre.gstack.len(),
        product_result: if descent.is_empty() { None } else { product.post.brr_result.clone() },
        descent,
    })
}

/// Runs a full query.
pub fn query(data: &[BrrData], pattern: &QueryPattern, mode: QueryMode, excluded: &[RecordPath]) -> Option<QueryResult> {
    let (path, instance) = find_product(data, pattern, mode, excluded)?;
    extend_stack(data, &path, &instance, mode)
}

impl QueryResult {
    /// The stack, result, and note in the `cw-gstack` layout. `show`
    /// prints terms.
    pub fn render(&self, show: &dyn Fn(&Term) -> String) -> String {
        let mut out = self.stack.render();
        let _ = write!(out, "The resulting (translated) term is\n  {}.\n", show(&self.final_result));
        if let Some(r) = &self.product_result {
            let _ = write!(
                out,
                "Note: The first lemma application above that provides a suitable result\n\
                 is at frame {}, and that result is\n  {}.\n",
                self.product_frame,
                show(r)
            );
        }
        out
    }
}

/// Iteration state for the `*` variants.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QueryCursor {
    pub pattern: QueryPattern,
    pub mode: QueryMode,
    pub excluded: Vec<RecordPath>,
}

impl QueryCursor {
    pub fn new(pattern: QueryPattern, mode: QueryMode) -> Self {
        QueryCursor { pattern, mode, excluded: Vec::new() }
    }

    /// The next result; its product's subtree is excluded afterwards.
    pub fn next_result(&mut self, data: &[BrrData]) -> Option<QueryResult> {
        let r = query(data, &self.pattern, self.mode, &self.excluded)?;
        self.excluded.push(r.product_path.clone());
        Some(r)
    }
}

pub const NO_DATA: &str = "There is no brr-data to query.  Use WITH-BRR-DATA first.\n";

pub fn not_found(pattern: &QueryPattern, mode: QueryMode) -> String {
    let what = match mode {
        QueryMode::Subterm => "introduced a subterm",
        QueryMode::Term => "produced a term",
    };
    if pattern.free.is_empty() {
        format!("No rule application was found that {what} {}.\n", pattern.term)
    } else {
        format!("No rule application was found that {what} of the form {}.\n", pattern.term)
    }
}

pub const NO_FURTHER: &str = "No further results.\n";

#[cfg(test)]
mod tests {
    use super::*;
    use crate::brr_data::{BrrData1, BrrData2};
    use crate::rewriter::{Frame, Rcnst, TypeAlist};
    use crate::rules::{RewriteRule, RuleClass};
    use crate::term::parse_term;

    fn t(s: &str) -> Term {
        parse_term(s).unwrap()
    }

    fn rec(name: &str, target: &str, result: &str, depth: usize, completed: Vec<BrrData>) -> BrrData {
        let rule = RewriteRule::new(Rune::new(RuleClass::Rewrite, name), Vec::new(), t("(G X)"), t("X")).unwrap();
        let gstack = GStack::from_frames(
            (0..depth)
                .map(|i| Frame::ApplyingRule { rune: Rune::new(RuleClass::Rewrite, name), target: Term::Quote(crate::sexpr::SExpr::Int(i as i64)) })
                .collect(),
        );
        BrrData {
            pre: BrrData1 {
                lemma: rule,
                target: t(target),
                unify_subst: Substitution::new(),
                type_alist: TypeAlist::new(),
                pot_list: Vec::new(),
                ancestors: Vec::new(),
                rcnst: Rcnst::default(),
                initial_ttree: BTreeSet::new(),
                gstack: gstack.clone(),
            },
            post: BrrData2 {
                failure_reason: None,
                unify_subst: Substitution::new(),
                brr_result: Some(t(result)),
                rcnst: Rcnst::default(),
                final_ttree: BTreeSet::new(),
                gstack,
            },
            completed,
        }
    }

    #[test]
    fn product_is_first_introduction() {
        let data = alloc::vec![
            rec("A", "(K X)", "(K (REV Y))", 2, Vec::new()),
            rec("B", "(REVERSE X)", "(IF (P X) (REV X) 'NIL)", 2, alloc::vec![
                rec("C", "(REVAPPEND X 'NIL)", "(REV X)", 4, Vec::new()),
                rec("D", "(H X)", "(H2 X)", 4, Vec::new()),
            ]),
        ];
        let r = query(&data, &QueryPattern::exact(t("(REV X)")), QueryMode::Subterm, &[]).unwrap();
        assert_eq!(r.product_rune.name.as_str(), "B");
        assert_eq!(r.descent.len(), 1);
        assert_eq!(r.stack.len(), 4);
        assert_eq!(r.final_result, t("(REV X)"));
        assert_eq!(r.product_frame, 2);
        assert!(r.product_result.is_some());
        let text = r.render(&|t| alloc::string::ToString::to_string(t));
        assert!(text.contains("is at frame 2, and that result is"));

        let r = query(&data, &QueryPattern::exact(t("(REV X)")), QueryMode::Term, &[]).unwrap();
        assert_eq!(r.product_rune.name.as_str(), "C");
        assert!(r.product_result.is_none());
    }

    #[test]
    fn free_pattern_and_cursor() {
        let data = alloc::vec![
            rec("A", "(K X)", "(K (REV Y))", 2, Vec::new()),
            rec("B", "(M X)", "(REV X)", 2, Vec::new()),
        ];
        let p = QueryPattern { term: t("(REV A)"), free: [Symbol::new("A")].into_iter().collect() };
        let mut cursor = QueryCursor::new(p, QueryMode::Subterm);
        let first = cursor.next_result(&data).unwrap();
        assert_eq!(first.instance, t("(REV Y)"));
        let second = cursor.next_result(&data).unwrap();
        assert_eq!(second.instance, t("(REV X)"));
        assert!(cursor.next_result(&data).is_none());
    }

    #[test]
    fn never_introduced_is_none() {
        let data = alloc::vec![rec("A", "(K (REV X))", "(K2 (REV X))", 2, Vec::new())];
        assert!(query(&data, &QueryPattern::exact(t("(REV X)")), QueryMode::Subterm, &[]).is_none());
    }
}
