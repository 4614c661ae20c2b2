//! Provenance records of rule applications, collected through the
//! `brr-data` wormhole while a `with-brr-data` proof runs.

use alloc::collections::{BTreeMap, BTreeSet, VecDeque};
use alloc::string::{String, ToString};
use alloc::sync::Arc;
use alloc::vec::Vec;

use crate::rewriter::{FailureReason, GStack, Rcnst, TypeAlist};
use crate::rules::{RewriteRule, Rune};
use crate::sexpr::Symbol;
use crate::term::{Substitution, Term};

/// Snapshot taken when the lhs matched.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BrrData1 {
    pub lemma: RewriteRule,
    pub target: Term,
    pub unify_subst: Substitution,
    pub type_alist: TypeAlist,
    /// Linear arithmetic is not modelled; always empty.
    pub pot_list: Vec<Term>,
    pub ancestors: Vec<Term>,
    pub rcnst: Rcnst,
    pub initial_ttree: BTreeSet<Rune>,
    pub gstack: GStack,
}

/// Snapshot taken when the attempt finished.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BrrData2 {
    pub failure_reason: Option<FailureReason>,
    pub unify_subst: Substitution,
    /// `None` when the attempt failed.
    pub brr_result: Option<Term>,
    pub rcnst: Rcnst,
    pub final_ttree: BTreeSet<Rune>,
    pub gstack: GStack,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BrrData {
    pub pre: BrrData1,
    pub post: BrrData2,
    /// Subsidiary applications.
    pub completed: Vec<BrrData>,
}

impl BrrData {
    pub fn rune(&self) -> &Rune {
        &self.pre.lemma.rune
    }

    /// Number of records in this subtree.
    pub fn count(&self) -> usize {
        1 + self.completed.iter().map(BrrData::count).sum::<usize>()
    }
}

/// Total number of records in a forest.
pub fn record_count(data: &[BrrData]) -> usize {
    data.iter().map(BrrData::count).sum()
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OpenRecord {
    pub pre: BrrData1,
    /// Newest first.
    pub completed: VecDeque<BrrData>,
}

/// The `brr-data` wormhole status. Lists are kept newest first while
/// collecting; [`brr_data_lst`] puts them in application order.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct BrrDataStore {
    pub open: Vec<OpenRecord>,
    pub finished: VecDeque<BrrData>,
}

impl BrrDataStore {
    pub fn is_empty(&self) -> bool {
        self.open.is_empty() && self.finished.is_empty()
    }

    pub fn push_open(&mut self, pre: BrrData1) {
        self.open.push(OpenRecord { pre, completed: VecDeque::new() });
    }

    /// Closes the innermost open record. The closed record goes to its
    /// parent's completed list, or to `finished`.
    pub fn close(&mut self, post: BrrData2) -> Result<(), BrrDataError> {
        let open = self.open.pop().ok_or(BrrDataError::Unbalanced)?;
        let record = BrrData { pre: open.pre, post, completed: open.completed.into_iter().collect() };
        self.add_finished(record);
        Ok(())
    }

    fn add_finished(&mut self, record: BrrData) {
        match self.open.last_mut() {
            Some(parent) => parent.completed.push_front(record),
            None => self.finished.push_front(record),
        }
    }

    /// Closes the innermost open record but keeps only its children,
    /// in the place the record would have occupied.
    pub fn close_dropping(&mut self) -> Result<(), BrrDataError> {
        let open = self.open.pop().ok_or(BrrDataError::Unbalanced)?;
        for child in open.completed.into_iter().rev() {
            self.add_finished(child);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BrrDataError {
    #[error("unbalanced brr-data record")]
    Unbalanced,
    #[error("brr-data records are still open (was the proof aborted?)")]
    OpenRecords,
    #[error("unknown brr-data attachment {0}")]
    UnknownStrategy(String),
    #[error("with-brr-data is disallowed when waterfall parallelism is enabled")]
    WaterfallParallel,
}

fn reversed(records: Vec<BrrData>) -> Vec<BrrData> {
    records
        .into_iter()
        .rev()
        .map(|r| BrrData { completed: reversed(r.completed), ..r })
        .collect()
}

/// The collected records in application order.
pub fn brr_data_lst(store: &BrrDataStore) -> Result<Vec<BrrData>, BrrDataError> {
    if !store.open.is_empty() {
        return Err(BrrDataError::OpenRecords);
    }
    Ok(reversed(store.finished.iter().cloned().collect()))
}

/// The four attachable functions that decide what is collected.
pub trait Strategy: Send + Sync {
    fn name(&self) -> &str;
    /// Whether `brkpt1` records anything at all.
    fn entry1(&self, ancestors: &[Term], gstack: &GStack, rcnst: &Rcnst) -> bool;
    /// Whether `brkpt2` records anything at all.
    fn entry2(&self, ancestors: &[Term], gstack: &GStack, rcnst: &Rcnst) -> bool;
    fn update1(&self, store: BrrDataStore, pre: BrrData1) -> BrrDataStore;
    fn update2(&self, store: BrrDataStore, post: BrrData2) -> BrrDataStore;
}

fn open_record(mut store: BrrDataStore, pre: BrrData1) -> BrrDataStore {
    store.push_open(pre);
    store
}

fn close_record(mut store: BrrDataStore, post: BrrData2) -> BrrDataStore {
    // entry1 and entry2 agree for a given attempt, so a record is open
    let _ = store.close(post);
    store
}

/// Top-level applications only.
#[derive(Clone, Copy, Debug, Default)]
pub struct DefaultStrategy;

impl Strategy for DefaultStrategy {
    fn name(&self) -> &str {
        "default"
    }
    fn entry1(&self, ancestors: &[Term], _: &GStack, _: &Rcnst) -> bool {
        ancestors.is_empty()
    }
    fn entry2(&self, ancestors: &[Term], _: &GStack, _: &Rcnst) -> bool {
        ancestors.is_empty()
    }
    fn update1(&self, store: BrrDataStore, pre: BrrData1) -> BrrDataStore {
        open_record(store, pre)
    }
    fn update2(&self, store: BrrDataStore, post: BrrData2) -> BrrDataStore {
        close_record(store, post)
    }
}

/// Every application, including backchaining.
#[derive(Clone, Copy, Debug, Default)]
pub struct AllStrategy;

impl Strategy for AllStrategy {
    fn name(&self) -> &str {
        "all"
    }
    fn entry1(&self, _: &[Term], _: &GStack, _: &Rcnst) -> bool {
        true
    }
    fn entry2(&self, _: &[Term], _: &GStack, _: &Rcnst) -> bool {
        true
    }
    fn update1(&self, store: BrrDataStore, pre: BrrData1) -> BrrDataStore {
        open_record(store, pre)
    }
    fn update2(&self, store: BrrDataStore, post: BrrData2) -> BrrDataStore {
        close_record(store, post)
    }
}

/// Failed applications during backchaining.
#[derive(Clone, Copy, Debug, Default)]
pub struct FailuresStrategy;

impl Strategy for FailuresStrategy {
    fn name(&self) -> &str {
        "failures"
    }
    fn entry1(&self, ancestors: &[Term], _: &GStack, _: &Rcnst) -> bool {
        !ancestors.is_empty()
    }
    fn entry2(&self, ancestors: &[Term], _: &GStack, _: &Rcnst) -> bool {
        !ancestors.is_empty()
    }
    fn update1(&self, store: BrrDataStore, pre: BrrData1) -> BrrDataStore {
        open_record(store, pre)
    }
    fn update2(&self, mut store: BrrDataStore, post: BrrData2) -> BrrDataStore {
        if post.failure_reason.is_some() {
            close_record(store, post)
        } else {
            let _ = store.close_dropping();
            store
        }
    }
}

/// Strategies by lower-case name.
#[derive(Clone)]
pub struct StrategyRegistry {
    strategies: BTreeMap<String, Arc<dyn Strategy>>,
}

impl core::fmt::Debug for StrategyRegistry {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_list().entries(self.strategies.keys()).finish()
    }
}

impl Default for StrategyRegistry {
    fn default() -> Self {
        let mut r = StrategyRegistry { strategies: BTreeMap::new() };
        r.register(Arc::new(DefaultStrategy));
        r.register(Arc::new(FailuresStrategy));
        r.register(Arc::new(AllStrategy));
        r
    }
}

impl StrategyRegistry {
    pub fn register(&mut self, s: Arc<dyn Strategy>) {
        self.strategies.insert(s.name().to_lowercase(), s);
    }

    pub fn get(&self, name: &str) -> Result<Arc<dyn Strategy>, BrrDataError> {
        self.strategies
            .get(&name.to_lowercase())
            .cloned()
            .ok_or_else(|| BrrDataError::UnknownStrategy(name.to_string()))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.strategies.keys().map(String::as_str)
    }
}

/// Symbol used for the provenance wormhole.
pub fn brr_data_wormhole() -> Symbol {
    Symbol::new("BRR-DATA")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rules::RuleClass;
    use crate::term::parse_term;

    fn pre(name: &str, target: &str, depth: usize) -> BrrData1 {
        let rule = RewriteRule::new(
            Rune::new(RuleClass::Rewrite, name),
            Vec::new(),
            parse_term("(G X)").unwrap(),
            parse_term("X").unwrap(),
        )
        .unwrap();
        BrrData1 {
            lemma: rule,
            target: parse_term(target).unwrap(),
            unify_subst: Substitution::new(),
            type_alist: TypeAlist::new(),
            pot_list: Vec::new(),
            ancestors: Vec::new(),
            rcnst: Rcnst::default(),
            initial_ttree: BTreeSet::new(),
            gstack: GStack::from_frames(alloc::vec![crate::rewriter::Frame::RewritingLambdaBody { ordinal: 1, term: Term::nil() }; depth]),
        }
    }

    fn post(result: Option<&str>, depth: usize) -> BrrData2 {
        BrrData2 {
            failure_reason: if result.is_some() { None } else { Some(FailureReason::LoopStopper) },
            unify_subst: Substitution::new(),
            brr_result: result.map(|r| parse_term(r).unwrap()),
            rcnst: Rcnst::default(),
            final_ttree: BTreeSet::new(),
            gstack: GStack::from_frames(alloc::vec![crate::rewriter::Frame::RewritingLambdaBody { ordinal: 1, term: Term::nil() }; depth]),
        }
    }

    #[test]
    fn nesting_and_order() {
        let s = DefaultStrategy;
        let mut store = BrrDataStore::default();
        store = s.update1(store, pre("A", "(A)", 1));
        store = s.update1(store, pre("B", "(B)", 2));
        store = s.update2(store, post(Some("(B1)"), 2));
        store = s.update1(store, pre("C", "(C)", 2));
        store = s.update2(store, post(Some("(C1)"), 2));
        store = s.update2(store, post(Some("(A1)"), 1));
        store = s.update1(store, pre("D", "(D)", 1));
        store = s.update2(store, post(None, 1));
        let lst = brr_data_lst(&store).unwrap();
        let names: Vec<_> = lst.iter().map(|r| r.rune().name.to_string()).collect();
        assert_eq!(names, ["A", "D"]);
        let kids: Vec<_> = lst[0].completed.iter().map(|r| r.rune().name.to_string()).collect();
        assert_eq!(kids, ["B", "C"]);
        assert_eq!(record_count(&lst), 4);
    }

    #[test]
    fn failures_splices_children_of_successes() {
        let s = FailuresStrategy;
        let mut store = BrrDataStore::default();
        store = s.update1(store, pre("A", "(A)", 1));
        store = s.update1(store, pre("B", "(B)", 2));
        store = s.update2(store, post(None, 2));
        store = s.update1(store, pre("C", "(C)", 2));
        store = s.update2(store, post(None, 2));
        store = s.update2(store, post(Some("(A1)"), 1));
        let lst = brr_data_lst(&store).unwrap();
        let names: Vec<_> = lst.iter().map(|r| r.rune().name.to_string()).collect();
        assert_eq!(names, ["B", "C"]);
    }

    #[test]
    fn open_records_are_an_error() {
        let mut store = BrrDataStore::default();
        store.push_open(pre("A", "(A)", 1));
        assert_eq!(brr_data_lst(&store), Err(BrrDataError::OpenRecords));
        assert_eq!(BrrDataStore::default().close_dropping(), Err(BrrDataError::Unbalanced));
    }

    #[test]
    fn registry_lookup() {
        let r = StrategyRegistry::default();
        assert_eq!(r.get("FAILURES").unwrap().name(), "failures");
        assert!(r.get("bogus").is_err());
        assert_eq!(r.names().collect::<Vec<_>>(), ["all", "default", "failures"]);
    }
}
