use brr_core::matching::match_term;
use brr_core::rules::MonitorTable;
use brr_core::term::{occurs_subterm, parse_term};
use brr_core::wormhole::{EntryCode, WormholeStatus, Wormholes};
use brr_core::{BreakCriteria, Frame, GStack, RuleClass, Rune, SExpr, Substitution, Symbol, Term};
use proptest::prelude::*;

fn sym() -> impl Strategy<Value = Symbol> {
    prop_oneof![Just("F"), Just("G"), Just("H")].prop_map(Symbol::new)
}

fn var() -> impl Strategy<Value = Term> {
    prop_oneof![Just("X"), Just("Y"), Just("Z")].prop_map(Term::var)
}

fn constant() -> impl Strategy<Value = Term> {
    prop_oneof![(0i64..3).prop_map(|n| Term::Quote(SExpr::Int(n))), Just(Term::nil())]
}

fn term_with(leaf: BoxedStrategy<Term>) -> impl Strategy<Value = Term> {
    leaf.prop_recursive(4, 32, 3, |inner| {
        (sym(), prop::collection::vec(inner, 1..3)).prop_map(|(f, args)| Term::App(f, args))
    })
}

fn term() -> impl Strategy<Value = Term> {
    term_with(prop_oneof![var(), constant()].boxed())
}

fn ground() -> impl Strategy<Value = Term> {
    term_with(prop_oneof![Just(Term::var("A")), Just(Term::var("B")), constant()].boxed())
}

/// Every subterm, reached by walking argument positions.
fn positions(t: &Term, out: &mut Vec<Term>) {
    out.push(t.clone());
    if let Term::App(_, args) = t {
        for a in args {
            positions(a, out);
        }
    }
}

fn frame(n: u8) -> Frame {
    Frame::RewritingLiteralAtom { ordinal: n as usize, atom: Term::var("X") }
}

proptest! {
    #[test]
    fn printed_terms_read_back(t in term()) {
        prop_assert_eq!(parse_term(&t.to_string()).unwrap(), t);
    }

    #[test]
    fn instances_match_their_pattern(p in term(), b in prop::collection::vec(ground(), 3)) {
        let s: Substitution = ["X", "Y", "Z"].iter().map(|v| Symbol::new(v)).zip(b).collect();
        let t = s.apply(&p);
        let m = match_term(&p, &t, &Substitution::new()).expect("instance did not match");
        prop_assert_eq!(m.apply(&p), t);
    }

    #[test]
    fn matches_are_sound(p in term(), t in ground()) {
        if let Some(m) = match_term(&p, &t, &Substitution::new()) {
            prop_assert_eq!(m.apply(&p), t);
        }
    }

    #[test]
    fn occurrence_agrees_with_positions(small in ground(), big in ground()) {
        let mut subs = Vec::new();
        positions(&big, &mut subs);
        prop_assert_eq!(occurs_subterm(&small, &big), subs.contains(&small));
        for s in &subs {
            prop_assert!(occurs_subterm(s, &big));
        }
    }

    #[test]
    fn unmonitor_undoes_monitor(names in prop::collection::vec("[a-c]", 0..6), extra in "[a-d]") {
        let mut table = MonitorTable::default();
        for n in &names {
            table.monitor(Rune::new(RuleClass::Rewrite, n), BreakCriteria::default());
        }
        let before = table.clone();
        let rune = Rune::new(RuleClass::Rewrite, &extra);
        let was = table.monitored(&rune).is_some();
        if !was {
            table.monitor(rune.clone(), BreakCriteria::default());
            prop_assert!(table.unmonitor(&rune));
            prop_assert_eq!(&table, &before);
        } else {
            table.monitor(rune.clone(), BreakCriteria::default());
            prop_assert_eq!(&table, &before);
        }
        table.unmonitor(&rune);
        prop_assert!(!table.unmonitor(&rune));
    }

    #[test]
    fn wormhole_updates_compose(xs in prop::collection::vec(0u32..100, 0..8), ys in prop::collection::vec(0u32..100, 0..8)) {
        let name = Symbol::new("W");
        let mut a: Wormholes<Vec<u32>> = Wormholes::new();
        a.wormhole_eval(&name, |mut s| { s.data.extend(&xs); s }).unwrap();
        a.wormhole_eval(&name, |mut s| { s.data.extend(&ys); s }).unwrap();
        let mut b: Wormholes<Vec<u32>> = Wormholes::new();
        b.wormhole_eval(&name, |mut s| { s.data.extend(&xs); s.data.extend(&ys); s }).unwrap();
        prop_assert_eq!(a.get_persistent_whs(&name), b.get_persistent_whs(&name));
        let mut all = xs.clone();
        all.extend(&ys);
        prop_assert_eq!(a.get_persistent_whs(&name), WormholeStatus::new(EntryCode::Enter, all));
    }

    #[test]
    fn gstack_push_pop(frames in prop::collection::vec(0u8..4, 0..10), k in 0usize..10) {
        let g = GStack::from_frames(frames.iter().map(|&n| frame(n)).collect());
        prop_assert_eq!(g.len(), frames.len());
        let mut h = g.clone();
        for i in 0..k {
            h.push(frame(i as u8));
        }
        prop_assert_eq!(h.strictly_extends(&g), k > 0);
        prop_assert!(!g.strictly_extends(&h));
        for _ in 0..k {
            h.pop();
        }
        prop_assert_eq!(&h, &g);
        let copy = GStack::from_frames(g.frames().into_iter().cloned().collect());
        prop_assert_eq!(copy, g);
    }
}
