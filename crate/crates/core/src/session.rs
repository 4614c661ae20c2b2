//! A prover session: the world, settings, wormholes, the three breakpoint
//! handlers, and the command language shared by the REPL, scripts and
//! the JSON protocol.

use alloc::boxed::Box;
use alloc::collections::{BTreeMap, BTreeSet, VecDeque};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::sync::Arc;
use alloc::vec::Vec;

use crate::brkpt::{
    brr_near_missp, brr_wormhole, eval_condition, near_miss_explanation, BreakLocals, BrrStatus, ExitMode,
    OpenBreak,
};
use crate::brr_data::{
    brr_data_lst, brr_data_wormhole, BrrData, BrrData1, BrrData2, BrrDataError, BrrDataStore, Strategy,
    StrategyRegistry,
};
use crate::query::{self, QueryCursor, QueryMode, QueryPattern};
use crate::rewriter::{
    clause_to_formula, Abort, Attempt, FailureReason, GstackMode, Hooks, Outcome, ProofOutcome, Rcnst,
    Rewriter,
};
use crate::rules::{BreakCriteria, Defined, Rune, World};
use crate::sexpr::{parse, SExpr, Symbol};
use crate::term::{Term, VarScope};
use crate::wormhole::{EntryCode, WormholeStatus, Wormholes};
use crate::Error;

/// Something the session wants shown.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Event {
    Output(String),
    /// The value returned by a top-level command.
    Ack(String),
    Warning(String),
    Error(String),
    BreakOpen {
        depth: usize,
        rune: String,
        target: String,
        criteria: String,
        near_miss: Vec<String>,
        text: String,
    },
    BreakClose {
        depth: usize,
        rune: String,
        text: String,
    },
    ProofOutcome {
        proved: bool,
        checkpoints: Vec<String>,
        text: String,
    },
    QueryResult {
        found: bool,
        product: Option<String>,
        /// One rendered entry per stack frame.
        frames: Vec<String>,
        result: Option<String>,
        text: String,
    },
}

impl Event {
    /// The console rendering.
    pub fn text(&self) -> String {
        match self {
            Event::Output(s) => s.clone(),
            Event::Ack(v) => format!(" {v}\n"),
            Event::Warning(m) => format!("Warning: {m}\n"),
            Event::Error(m) => format!("Error: {m}\n"),
            Event::BreakOpen { text, .. }
            | Event::BreakClose { text, .. }
            | Event::ProofOutcome { text, .. }
            | Event::QueryResult { text, .. } => text.clone(),
        }
    }
}

/// Where commands come from and events go.
pub trait Frontend {
    fn emit(&mut self, event: Event);
    /// Blocks for the next command. `None` means the source is gone; at a
    /// break prompt that aborts the proof.
    fn read_command(&mut self, prompt: &str) -> Option<String>;
    fn load_file(&mut self, path: &str) -> Result<String, String> {
        Err(format!("cannot load {path}: no file access"))
    }
}

/// Reads commands from a queue and records a console transcript.
#[derive(Clone, Debug, Default)]
pub struct ScriptedFrontend {
    pub commands: VecDeque<String>,
    pub transcript: String,
    pub events: Vec<Event>,
    pub files: BTreeMap<String, String>,
}

impl ScriptedFrontend {
    pub fn new<I: IntoIterator<Item = S>, S: Into<String>>(commands: I) -> Self {
        ScriptedFrontend { commands: commands.into_iter().map(Into::into).collect(), ..Self::default() }
    }

    /// Splits a script into commands.
    pub fn from_script(text: &str) -> Self {
        Self::new(crate::sexpr::split_commands(text))
    }

    pub fn push(&mut self, cmd: &str) {
        self.commands.push_back(cmd.to_string());
    }
}

impl Frontend for ScriptedFrontend {
    fn emit(&mut self, event: Event) {
        self.transcript.push_str(&event.text());
        self.events.push(event);
    }

    fn read_command(&mut self, prompt: &str) -> Option<String> {
        let cmd = self.commands.pop_front()?;
        self.transcript.push_str(prompt);
        self.transcript.push_str(&cmd);
        self.transcript.push('\n');
        Some(cmd)
    }

    fn load_file(&mut self, path: &str) -> Result<String, String> {
        self.files.get(path).cloned().ok_or_else(|| format!("no such file {path}"))
    }
}

/// Wormhole status payloads used by the session.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub enum Whs {
    #[default]
    Empty,
    Brr(BrrStatus),
    BrrData(BrrDataStore),
}

impl Whs {
    pub fn brr(&self) -> BrrStatus {
        match self {
            Whs::Brr(b) => b.clone(),
            _ => BrrStatus::default(),
        }
    }

    pub fn brr_data(&self) -> BrrDataStore {
        match self {
            Whs::BrrData(d) => d.clone(),
            _ => BrrDataStore::default(),
        }
    }

    pub fn into_brr_data(self) -> BrrDataStore {
        match self {
            Whs::BrrData(d) => d,
            _ => BrrDataStore::default(),
        }
    }
}

/// One handler-level event, recorded whenever instrumentation is on.
/// Near-miss calls are not recorded.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FlatEvent {
    /// True for `brkpt1`, false for `brkpt2`.
    pub pre: bool,
    pub gstack_len: usize,
    pub rune: Rune,
    pub target: Term,
    pub ancestors: usize,
    pub result: Option<Term>,
    pub failure: Option<FailureReason>,
}

pub const TOP_PROMPT: &str = "!>";
pub const ABORT_TEXT: &str = "Abort to ACL2 top-level.\n";

const BREAK_HELP: &str = "Break commands:
 :target :lhs :rhs :hyps :unify-subst :type-alist :path :ancestors
 :wonp :failure-reason :brr-result :help
 (get-brr-local 'name) (brr@ :key)
 :eval :go :ok  proceed (print result and prompt again / print result / silently)
 :eval! :go! :ok!  the same, with no breaks inside this attempt
 :a!  abort the proof
 (monitor rune criteria) (unmonitor rune) (monitored-runes) (assign x v) (@ x)
";

/// Why a command did not complete.
#[derive(Debug)]
enum Fail {
    Abort,
    Msg(String),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Msg(e.to_string())
    }
}

impl From<crate::rules::RuleError> for Fail {
    fn from(e: crate::rules::RuleError) -> Self {
        Fail::Msg(e.to_string())
    }
}

impl From<crate::term::TermError> for Fail {
    fn from(e: crate::term::TermError) -> Self {
        Fail::Msg(e.to_string())
    }
}

impl From<crate::sexpr::ParseError> for Fail {
    fn from(e: crate::sexpr::ParseError) -> Self {
        Fail::Msg(Error::from(e).to_string())
    }
}

impl From<BrrDataError> for Fail {
    fn from(e: BrrDataError) -> Self {
        Fail::Msg(e.to_string())
    }
}

impl From<Abort> for Fail {
    fn from(_: Abort) -> Self {
        Fail::Abort
    }
}

fn msg<T>(m: impl Into<String>) -> Result<T, Fail> {
    Err(Fail::Msg(m.into()))
}

/// Whether the top-level loop should go on.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Control {
    Continue,
    Quit,
}

/// Reads a command line. `:kw args...` is the list `(kw args...)`.
pub fn read_command_form(text: &str) -> Result<SExpr, crate::sexpr::ParseError> {
    let t = text.trim();
    if let Some(rest) = t.strip_prefix(':') {
        let (head, args) = match rest.find(char::is_whitespace) {
            Some(i) => (&rest[..i], rest[i..].trim()),
            None => (rest, ""),
        };
        if args.is_empty() {
            return parse(t);
        }
        return parse(&format!("({head} {args})"));
    }
    parse(t)
}

fn sym_of(s: &SExpr) -> &str {
    s.as_symbol().map(Symbol::as_str).unwrap_or("")
}

fn flag(s: Option<&SExpr>) -> Result<bool, Fail> {
    match s.map(SExpr::unquote) {
        Some(v) if v.is_nil() => Ok(false),
        Some(_) => Ok(true),
        None => msg("expected T or NIL"),
    }
}

fn natural(s: Option<&SExpr>) -> Result<u64, Fail> {
    match s {
        Some(SExpr::Int(n)) if *n >= 0 => Ok(*n as u64),
        _ => msg("expected a natural number"),
    }
}

/// True iff `hints` asks not to preprocess the goal.
fn hints_disable_preprocess(hints: &SExpr) -> bool {
    fn walk(s: &SExpr, under_do_not: bool) -> bool {
        match s {
            SExpr::Sym(x) => under_do_not && x.as_str() == "PREPROCESS",
            SExpr::Int(_) | SExpr::Str(_) => false,
            SExpr::List(items) => {
                let mut after_do_not = false;
                for item in items {
                    if walk(item, under_do_not || after_do_not) {
                        return true;
                    }
                    after_do_not = item.is_symbol(":DO-NOT");
                }
                false
            }
        }
    }
    walk(hints, false)
}

pub struct Session<F: Frontend> {
    pub world: World,
    settings: Rcnst,
    gstackp: GstackMode,
    wormholes: Wormholes<Whs>,
    globals: BTreeMap<Symbol, SExpr>,
    strategies: StrategyRegistry,
    strategy: Arc<dyn Strategy>,
    brr_data: Option<Vec<BrrData>>,
    cursor: Option<QueryCursor>,
    waterfall_parallel: bool,
    trace_brkpts: bool,
    flat_log: Vec<FlatEvent>,
    handler_depth: usize,
    max_handler_depth: usize,
    goal_vars: BTreeSet<Symbol>,
    frontend: F,
}

impl<F: Frontend> Session<F> {
    pub fn new(frontend: F) -> Self {
        let strategies = StrategyRegistry::default();
        let strategy = strategies.get("default").expect("builtin strategy");
        Session {
            world: World::new(),
            settings: Rcnst::default(),
            gstackp: GstackMode::Off,
            wormholes: Wormholes::new(),
            globals: BTreeMap::new(),
            strategies,
            strategy,
            brr_data: None,
            cursor: None,
            waterfall_parallel: false,
            trace_brkpts: false,
            flat_log: Vec::new(),
            handler_depth: 0,
            max_handler_depth: 0,
            goal_vars: BTreeSet::new(),
            frontend,
        }
    }

    pub fn frontend(&self) -> &F {
        &self.frontend
    }

    pub fn frontend_mut(&mut self) -> &mut F {
        &mut self.frontend
    }

    pub fn into_frontend(self) -> F {
        self.frontend
    }

    pub fn settings(&self) -> &Rcnst {
        &self.settings
    }

    pub fn settings_mut(&mut self) -> &mut Rcnst {
        &mut self.settings
    }

    pub fn gstackp(&self) -> GstackMode {
        self.gstackp
    }

    /// Equivalent of `(brr t)` / `(brr nil)`.
    pub fn set_brr(&mut self, on: bool) {
        self.gstackp = if on { GstackMode::Brr } else { GstackMode::Off };
        self.set_brr_entry(if on { EntryCode::Enter } else { EntryCode::Skip });
    }

    fn set_brr_entry(&mut self, code: EntryCode) {
        let name = brr_wormhole();
        let mut whs = self.wormholes.get_persistent_whs(&name);
        whs.entry_code = code;
        whs.data = Whs::Brr(whs.data.brr());
        self.wormholes.set_persistent_whs(&name, whs);
    }

    pub fn wormholes(&self) -> &Wormholes<Whs> {
        &self.wormholes
    }

    pub fn wormholes_mut(&mut self) -> &mut Wormholes<Whs> {
        &mut self.wormholes
    }

    /// The persistent break-rewrite status.
    pub fn brr_status(&self) -> BrrStatus {
        self.wormholes.get_persistent_whs(&brr_wormhole()).data.brr()
    }

    fn update_brr_status(&mut self, f: impl FnOnce(&mut BrrStatus)) {
        let _ = self.wormholes.wormhole_eval(&brr_wormhole(), |whs| {
            let mut brr = whs.data.brr();
            f(&mut brr);
            WormholeStatus::new(whs.entry_code, Whs::Brr(brr))
        });
    }

    /// The persistent provenance store.
    pub fn brr_data_store(&self) -> BrrDataStore {
        self.wormholes.get_persistent_whs(&brr_data_wormhole()).data.brr_data()
    }

    /// The list loaded by the last `with-brr-data`.
    pub fn brr_data(&self) -> Option<&[BrrData]> {
        self.brr_data.as_deref()
    }

    pub fn globals(&self) -> &BTreeMap<Symbol, SExpr> {
        &self.globals
    }

    pub fn set_global(&mut self, name: &str, value: SExpr) {
        self.globals.insert(Symbol::new(name), value);
    }

    pub fn flat_log(&self) -> &[FlatEvent] {
        &self.flat_log
    }

    pub fn clear_flat_log(&mut self) {
        self.flat_log.clear();
    }

    /// Deepest nesting of handler calls seen so far; always at most 1.
    pub fn max_handler_depth(&self) -> usize {
        self.max_handler_depth
    }

    pub fn strategies_mut(&mut self) -> &mut StrategyRegistry {
        &mut self.strategies
    }

    pub fn set_strategy(&mut self, name: &str) -> Result<(), BrrDataError> {
        self.strategy = self.strategies.get(name)?;
        Ok(())
    }

    pub fn strategy_name(&self) -> &str {
        self.strategy.name()
    }

    pub fn set_waterfall_parallel(&mut self, on: bool) {
        self.waterfall_parallel = on;
    }

    pub fn set_trace(&mut self, on: bool) {
        self.trace_brkpts = on;
    }

    /// Terms as the user would write them (aliases folded back).
    pub fn show(&self, t: &Term) -> String {
        self.world.signature.untranslate(t).to_string()
    }

    fn emit(&mut self, e: Event) {
        self.frontend.emit(e);
    }

    fn out(&mut self, s: impl Into<String>) {
        self.frontend.emit(Event::Output(s.into()));
    }

    /// Runs the top-level loop until the command source ends or `(quit)`.
    pub fn repl(&mut self) {
        while let Some(cmd) = self.frontend.read_command(TOP_PROMPT) {
            if self.execute(&cmd) == Control::Quit {
                break;
            }
        }
    }

    /// Executes one top-level command, reporting errors as events.
    pub fn execute(&mut self, text: &str) -> Control {
        let form = match read_command_form(text) {
            Ok(f) => f,
            Err(e) => {
                self.emit(Event::Error(Error::from(e).to_string()));
                return Control::Continue;
            }
        };
        match self.execute_form(&form) {
            Ok(c) => c,
            Err(Fail::Abort) => Control::Continue,
            Err(Fail::Msg(m)) => {
                self.emit(Event::Error(m));
                Control::Continue
            }
        }
    }

    fn execute_form(&mut self, form: &SExpr) -> Result<Control, Fail> {
        let items: &[SExpr] = match form {
            SExpr::List(items) if !items.is_empty() => items,
            SExpr::Sym(s) if s.as_str() == ":Q" => return Ok(Control::Quit),
            SExpr::Sym(s) if s.is_keyword() => {
                return msg(format!("{s} is only meaningful at a break-rewrite prompt"))
            }
            _ => return msg(format!("not a command: {form}")),
        };
        let args = &items[1..];
        match sym_of(&items[0]) {
            "QUIT" | "EXIT" | "Q" => return Ok(Control::Quit),
            "LOAD" => {
                let Some(SExpr::Str(path)) = args.first() else {
                    return msg("expected (load \"file\")");
                };
                let text = self.frontend.load_file(path).map_err(Fail::Msg)?;
                let defined = self.world.load_text(&text)?;
                self.emit(Event::Ack(format!("{} forms loaded from {path}", defined.len())));
            }
            "DEFRULE" | "DEFTHM" | "DEFUN" | "ALIAS" | "FN-SLOT" => {
                let d = self.world.define(form)?;
                let name = match d {
                    Defined::Rule(r) => r.name.to_string(),
                    Defined::Alias(a) => a.to_string(),
                    Defined::FnSlot(f, _) => f.to_string(),
                };
                self.emit(Event::Ack(name));
            }
            "THM" => {
                self.thm(args)?;
            }
            "WITH-BRR-DATA" => {
                let [body] = args else {
                    return msg("expected (with-brr-data form)");
                };
                self.with_brr_data(|s| s.execute_form(body).map(|_| ()))?;
            }
            "BRR" => {
                let on = flag(args.first())?;
                self.set_brr(on);
                self.emit(Event::Ack(if on { "T" } else { "NIL" }.into()));
            }
            "MONITOR" | "MONITOR!" => {
                let (rune, criteria) = self.parse_monitor(args)?;
                if sym_of(&items[0]) == "MONITOR!" {
                    self.set_brr(true);
                }
                self.update_brr_status(|b| b.monitored.monitor(rune, criteria));
                self.emit(Event::Ack("T".into()));
            }
            "UNMONITOR" => {
                let rune = self.world.resolve_rune(args.first().unwrap_or(&SExpr::nil()))?;
                let mut found = false;
                self.update_brr_status(|b| found = b.monitored.unmonitor(&rune));
                if !found {
                    return msg(format!("{rune} is not monitored"));
                }
                self.emit(Event::Ack("T".into()));
            }
            "MONITORED-RUNES" => {
                let text = render_monitored(&self.brr_status());
                self.out(text);
            }
            "ENABLE" | "DISABLE" => {
                let rune = self.world.resolve_rune(args.first().unwrap_or(&SExpr::nil()))?;
                self.world.set_enabled(&rune.name, sym_of(&items[0]) == "ENABLE")?;
                self.emit(Event::Ack(rune.to_string()));
            }
            "CW-GSTACK-FOR-SUBTERM" => self.run_query(args, QueryMode::Subterm, false)?,
            "CW-GSTACK-FOR-TERM" => self.run_query(args, QueryMode::Term, false)?,
            "CW-GSTACK-FOR-SUBTERM*" => self.run_query(args, QueryMode::Subterm, true)?,
            "CW-GSTACK-FOR-TERM*" => self.run_query(args, QueryMode::Term, true)?,
            "SET-BRR-DATA-ATTACHMENTS" => {
                let name = args.first().map(|a| a.unquote().to_string()).unwrap_or_default();
                self.set_strategy(&name)?;
                self.emit(Event::Ack(name.to_uppercase()));
            }
            "CLEAR-BRR-DATA-LST" => {
                self.clear_brr_data();
                self.emit(Event::Ack("NIL".into()));
            }
            "SET-WATERFALL-PARALLELISM" => {
                self.waterfall_parallel = flag(args.first())?;
                self.emit(Event::Ack(args[0].unquote().to_string()));
            }
            "SET-REWRITE-LAMBDA-OBJECTS" => {
                self.settings.rewrite_lambda_objects = flag(args.first())?;
                self.emit(Event::Ack(args[0].unquote().to_string()));
            }
            "SET-BACKCHAIN-LIMIT" => {
                self.settings.backchain_limit = natural(args.first())? as usize;
                self.emit(Event::Ack(args[0].to_string()));
            }
            "SET-STEP-BUDGET" => {
                self.settings.step_budget = natural(args.first())?;
                self.emit(Event::Ack(args[0].to_string()));
            }
            "TRACE-BRKPTS" => {
                self.trace_brkpts = flag(args.first())?;
                self.emit(Event::Ack(args[0].unquote().to_string()));
            }
            "ASSIGN" => {
                let (Some(SExpr::Sym(name)), Some(value)) = (args.first(), args.get(1)) else {
                    return msg("expected (assign name value)");
                };
                self.globals.insert(name.clone(), value.unquote().clone());
                self.emit(Event::Ack(value.unquote().to_string()));
            }
            "@" => {
                let Some(SExpr::Sym(name)) = args.first() else {
                    return msg("expected (@ name)");
                };
                let v = self.globals.get(name).cloned().unwrap_or_else(SExpr::nil);
                self.emit(Event::Ack(v.to_string()));
            }
            "GET-BRR-LOCAL" | "BRR@" => return msg("not at a break-rewrite prompt"),
            other => return msg(format!("unknown command {other}")),
        }
        Ok(Control::Continue)
    }

    fn parse_monitor(&self, args: &[SExpr]) -> Result<(Rune, BreakCriteria), Fail> {
        let Some(r) = args.first() else {
            return msg("expected (monitor rune criteria)");
        };
        let rune = self.world.resolve_rune(r)?;
        let criteria = match args.get(1) {
            Some(c) => BreakCriteria::parse(c, &self.world.signature)?,
            None => BreakCriteria::default(),
        };
        Ok((rune, criteria))
    }

    fn thm(&mut self, args: &[SExpr]) -> Result<(), Fail> {
        let Some(goal) = args.first() else {
            return msg("expected (thm term)");
        };
        let mut preprocess = true;
        for pair in args[1..].chunks(2) {
            match (sym_of(&pair[0]), pair.get(1)) {
                (":HINTS", Some(h)) => preprocess &= !hints_disable_preprocess(h),
                (k, _) => return msg(format!("unsupported thm argument {k}")),
            }
        }
        let goal = self.world.signature.to_term(goal, &VarScope::Any)?;
        self.goal_vars = goal.vars();
        let outcome = self.prove_with(&goal, preprocess)?;
        let text = self.render_outcome(&outcome);
        let checkpoints = outcome.checkpoints.iter().map(|c| self.show(&clause_to_formula(c))).collect();
        self.emit(Event::ProofOutcome { proved: outcome.proved, checkpoints, text });
        Ok(())
    }

    /// Proves `goal` with the current settings and instrumentation.
    pub fn prove(&mut self, goal: &Term) -> Result<ProofOutcome, Abort> {
        self.prove_with(goal, self.settings.preprocess)
    }

    fn prove_with(&mut self, goal: &Term, preprocess: bool) -> Result<ProofOutcome, Abort> {
        let world = self.world.clone();
        let rcnst = Rcnst { preprocess, ..self.settings.clone() };
        let mode = self.gstackp;
        let r = Rewriter::new(&world, rcnst, mode, self).prove(goal);
        let mut leftover = 0;
        self.update_brr_status(|b| {
            leftover = b.stack.len();
            b.stack.clear();
        });
        if leftover > 0 {
            self.emit(Event::Warning(format!("{leftover} break(s) were still open after the proof; cleared")));
        }
        r
    }

    pub fn render_outcome(&self, o: &ProofOutcome) -> String {
        if o.proved {
            return String::from("Q.E.D.\n");
        }
        let mut out = String::new();
        if o.budget_exhausted {
            out.push_str("The rewriter's step budget was exhausted.\n");
        }
        if o.depth_exceeded {
            out.push_str(crate::rewriter::DEPTH_EXCEEDED);
        }
        out.push_str("The proof fails.  Checkpoint:\n");
        for c in &o.checkpoints {
            out.push_str(&self.show(&clause_to_formula(c)));
            out.push('\n');
        }
        out
    }

    pub fn clear_brr_data(&mut self) {
        self.wormholes
            .set_persistent_whs(&brr_data_wormhole(), WormholeStatus::new(EntryCode::Enter, Whs::BrrData(BrrDataStore::default())));
        self.brr_data = None;
        self.cursor = None;
    }

    /// Runs `body` collecting provenance data, then loads the data for
    /// queries. The previous instrumentation mode is restored even if the
    /// body aborts, in which case the partial data is discarded.
    fn with_brr_data(&mut self, body: impl FnOnce(&mut Self) -> Result<(), Fail>) -> Result<(), Fail> {
        if self.waterfall_parallel {
            return Err(BrrDataError::WaterfallParallel.into());
        }
        self.clear_brr_data();
        let saved_mode = self.gstackp;
        let saved_entry = self.wormholes.get_persistent_whs(&brr_wormhole()).entry_code;
        self.gstackp = GstackMode::BrrData;
        self.set_brr_entry(EntryCode::Enter);
        let r = body(self);
        self.gstackp = saved_mode;
        self.set_brr_entry(saved_entry);
        match r {
            Ok(()) => {
                let lst = brr_data_lst(&self.brr_data_store());
                match lst {
                    Ok(lst) => {
                        self.brr_data = Some(lst);
                        Ok(())
                    }
                    Err(e) => {
                        self.clear_brr_data();
                        Err(e.into())
                    }
                }
            }
            Err(e) => {
                self.clear_brr_data();
                Err(e)
            }
        }
    }

    /// `(with-brr-data (thm goal))` for library callers.
    pub fn prove_with_brr_data(&mut self, goal: &Term) -> Result<ProofOutcome, Abort> {
        let mut out = None;
        let r = self.with_brr_data(|s| {
            let o = s.prove(goal)?;
            out = Some(o);
            Ok(())
        });
        match (r, out) {
            (Ok(()), Some(o)) => Ok(o),
            _ => Err(Abort),
        }
    }

    fn parse_query_pattern(&self, arg: &SExpr) -> Result<QueryPattern, Fail> {
        let mut free = BTreeSet::new();
        let mut body = arg;
        if let Some([k, SExpr::List(vars), tm]) = arg.as_list() {
            if k.is_symbol(":FREE") {
                for v in vars {
                    match v {
                        SExpr::Sym(s) if !s.is_self_evaluating() => {
                            free.insert(s.clone());
                        }
                        _ => return msg(format!("not a variable: {v}")),
                    }
                }
                body = tm;
            }
        }
        let scope: BTreeSet<Symbol> = self.goal_vars.union(&free).cloned().collect();
        let term = self.world.signature.to_term_readonly(body, &VarScope::Only(&scope))?;
        Ok(QueryPattern { term, free })
    }

    fn run_query(&mut self, args: &[SExpr], mode: QueryMode, iterative: bool) -> Result<(), Fail> {
        let [arg] = args else {
            return msg("expected one query pattern");
        };
        let pattern = self.parse_query_pattern(arg)?;
        let Some(data) = self.brr_data.clone() else {
            self.emit(Event::QueryResult {
                found: false,
                product: None,
                frames: Vec::new(),
                result: None,
                text: query::NO_DATA.into(),
            });
            return Ok(());
        };
        let result = if iterative {
            let continuing = self.cursor.as_ref().is_some_and(|c| c.pattern == pattern && c.mode == mode);
            if !continuing {
                self.cursor = Some(QueryCursor::new(pattern.clone(), mode));
            }
            let cursor = self.cursor.as_mut().expect("cursor just set");
            match cursor.next_result(&data) {
                None if continuing => {
                    self.emit(Event::QueryResult {
                        found: false,
                        product: None,
                        frames: Vec::new(),
                        result: None,
                        text: query::NO_FURTHER.into(),
                    });
                    return Ok(());
                }
                r => r,
            }
        } else {
            query::query(&data, &pattern, mode, &[])
        };
        let event = match result {
            Some(r) => Event::QueryResult {
                found: true,
                product: Some(r.product_rune.to_string()),
                frames: r
                    .stack
                    .frames()
                    .iter()
                    .enumerate()
                    .map(|(i, f)| {
                        let mut s = String::new();
                        f.render(i + 1, &mut s);
                        s
                    })
                    .collect(),
                result: Some(r.final_result.to_string()),
                text: r.render(&|t| t.to_string()),
            },
            None => Event::QueryResult {
                found: false,
                product: None,
                frames: Vec::new(),
                result: None,
                text: query::not_found(&pattern, mode),
            },
        };
        self.emit(event);
        Ok(())
    }

    // ---- breakpoint handlers ----

    fn handler_enter(&mut self, name: &str, rune: &Rune) {
        self.handler_depth += 1;
        self.max_handler_depth = self.max_handler_depth.max(self.handler_depth);
        if self.trace_brkpts {
            let line = format!("{}> {name} {{{}}}\n", self.handler_depth, rune.name.as_str().to_lowercase());
            self.out(line);
        }
    }

    fn handler_exit(&mut self, name: &str, rune: &Rune) {
        if self.trace_brkpts {
            let line = format!("<{} {name} {{{}}}\n", self.handler_depth, rune.name.as_str().to_lowercase());
            self.out(line);
        }
        self.handler_depth -= 1;
    }

    /// Runs `body` inside the `brr` wormhole. Session globals changed
    /// inside are restored on exit; the status is written back.
    fn in_brr_wormhole(
        &mut self,
        body: impl FnOnce(&mut Self, &mut BrrStatus) -> Result<(), Abort>,
    ) -> Result<(), Abort> {
        let name = brr_wormhole();
        if self.wormholes.get_persistent_whs(&name).entry_code == EntryCode::Skip {
            return Ok(());
        }
        let entry_code = match self.wormholes.open(&name) {
            Ok(whs) => whs.entry_code,
            Err(_) => return Ok(()),
        };
        let mut brr = self.wormholes.ephemeral(&name).map(|w| w.data.brr()).unwrap_or_default();
        let saved_globals = self.globals.clone();
        let r = body(self, &mut brr);
        self.globals = saved_globals;
        if let Some(eph) = self.wormholes.ephemeral_mut(&name) {
            *eph = WormholeStatus::new(entry_code, Whs::Brr(brr));
        }
        let _ = self.wormholes.close(&name);
        r
    }

    fn locals_for(&self, a: &Attempt<'_>, criteria: BreakCriteria, near_miss: Vec<String>) -> BreakLocals {
        BreakLocals {
            rule: a.rule.clone(),
            target: a.target.clone(),
            unify_subst: a.unify_subst.clone(),
            type_alist: a.type_alist.clone(),
            ancestors: a.ancestors.to_vec(),
            gstack: a.gstack.clone(),
            criteria,
            near_miss,
            wonp: None,
            failure_reason: None,
            brr_result: None,
        }
    }

    fn condition_holds(&mut self, locals: &BreakLocals, depth: usize) -> bool {
        let lookup = |k: &str| locals.brr_at(k, depth);
        match eval_condition(&locals.criteria.condition, &lookup) {
            Ok(v) => !v.is_nil(),
            Err(e) => {
                self.emit(Event::Warning(format!(
                    "error evaluating the break condition of {}: {e}; breaking anyway",
                    locals.rune()
                )));
                true
            }
        }
    }

    fn open_break(&mut self, brr: &mut BrrStatus, locals: BreakLocals) -> Result<(), Abort> {
        let depth = brr.depth() + 1;
        let rune = locals.rune().to_string();
        let target = locals.target.to_string();
        let mut text = format!("\n({depth} Breaking {rune} on {target}:\n");
        if !locals.near_miss.is_empty() {
            text.push('\n');
        }
        let criteria = locals.criteria.to_string();
        let near_miss = locals.near_miss.clone();
        brr.stack.push(OpenBreak { gstack: locals.gstack.clone(), locals, exit_mode: None });
        if !near_miss.is_empty() {
            let top = brr.top().expect("just pushed");
            let misses: Vec<_> = crate::brkpt::brr_near_missp(
                &top.locals.criteria,
                &top.locals.rule.lhs,
                &top.locals.target,
            );
            text.push_str(&near_miss_explanation(&top.locals.criteria, &misses));
            text.push('\n');
        }
        self.emit(Event::BreakOpen { depth, rune, target, criteria, near_miss, text });
        self.break_loop(brr, true)
    }

    /// Reads break commands until an exit command. `opening` is true at
    /// the `brkpt1` prompt and false at the `:eval` prompt in `brkpt2`.
    fn break_loop(&mut self, brr: &mut BrrStatus, opening: bool) -> Result<(), Abort> {
        loop {
            let prompt = format!("{} brr>", brr.depth());
            let Some(cmd) = self.frontend.read_command(&prompt) else {
                return self.abort(brr);
            };
            let form = match read_command_form(&cmd) {
                Ok(f) => f,
                Err(e) => {
                    self.emit(Event::Error(Error::from(e).to_string()));
                    continue;
                }
            };
            if let SExpr::Sym(s) = &form {
                if let Some(mode) = ExitMode::from_command(s.as_str()) {
                    if opening {
                        if let Some(top) = brr.top_mut() {
                            top.exit_mode = Some(mode);
                        }
                    }
                    return Ok(());
                }
                if s.as_str() == ":A!" {
                    return self.abort(brr);
                }
            }
            if let Err(m) = self.break_command(brr, &form) {
                self.emit(Event::Error(m));
            }
        }
    }

    fn abort(&mut self, brr: &mut BrrStatus) -> Result<(), Abort> {
        brr.stack.clear();
        self.out(ABORT_TEXT);
        Err(Abort)
    }

    fn break_command(&mut self, brr: &mut BrrStatus, form: &SExpr) -> Result<(), String> {
        let depth = brr.depth();
        let Some(top) = brr.top() else {
            return Err("no open break".into());
        };
        let locals = &top.locals;
        let text = match form {
            SExpr::Sym(k) => match k.as_str() {
                ":TARGET" => format!("{}\n", locals.target),
                ":LHS" => format!("{}\n", locals.rule.lhs),
                ":RHS" => format!("{}\n", locals.rule.rhs),
                ":HYPS" => format!("{}\n", SExpr::List(locals.rule.hyps.iter().map(Term::to_sexpr).collect())),
                ":UNIFY-SUBST" => {
                    let mut s = String::new();
                    for (v, t) in locals.unify_subst.iter().rev() {
                        s.push_str(&format!("     {v} : {t}\n"));
                    }
                    s
                }
                ":TYPE-ALIST" => format!("\n{}", locals.type_alist.decode(|t| self.show(t))),
                ":PATH" => top.gstack.render(),
                ":ANCESTORS" => {
                    let mut s = String::new();
                    for (i, a) in locals.ancestors.iter().enumerate() {
                        s.push_str(&format!("{}. {a}\n", i + 1));
                    }
                    if s.is_empty() {
                        s.push_str("Ancestors: NIL\n");
                    }
                    s
                }
                ":WONP" | ":FAILURE-REASON" | ":BRR-RESULT" if locals.wonp.is_none() => {
                    format!("{k} is not available until the attempt has finished (use :eval)\n")
                }
                ":WONP" => format!("{}\n", locals.brr_at(":WONP", depth).unwrap_or_default_nil()),
                ":FAILURE-REASON" => match &locals.failure_reason {
                    Some(r) => format!("{r}\n"),
                    None => "NIL\n".into(),
                },
                ":BRR-RESULT" => match &locals.brr_result {
                    Some(t) => format!("{t}\n"),
                    None => "NIL\n".into(),
                },
                ":HELP" => BREAK_HELP.into(),
                _ => BREAK_HELP.into(),
            },
            SExpr::List(items) if !items.is_empty() => match sym_of(&items[0]) {
                "GET-BRR-LOCAL" => {
                    let name = items.get(1).map(|n| n.unquote().to_string()).unwrap_or_default();
                    match locals.get_local(&name, depth) {
                        Some(v) => format!("{v}\n"),
                        None => return Err(format!("unknown brr local {name}")),
                    }
                }
                "BRR@" => {
                    let key = items.get(1).map(|n| n.to_string()).unwrap_or_default();
                    match locals.brr_at(&key, depth) {
                        Some(v) => format!("{v}\n"),
                        None => return Err(format!("unknown brr@ key {key}")),
                    }
                }
                "MONITOR" | "MONITOR!" => {
                    let (rune, criteria) = self.parse_monitor(&items[1..]).map_err(fail_text)?;
                    brr.monitored.monitor(rune, criteria);
                    " T\n".into()
                }
                "UNMONITOR" => {
                    let rune = self
                        .world
                        .resolve_rune(items.get(1).unwrap_or(&SExpr::nil()))
                        .map_err(|e| e.to_string())?;
                    if !brr.monitored.unmonitor(&rune) {
                        return Err(format!("{rune} is not monitored"));
                    }
                    " T\n".into()
                }
                "MONITORED-RUNES" => render_monitored(brr),
                "ASSIGN" => {
                    let (Some(SExpr::Sym(name)), Some(value)) = (items.get(1), items.get(2)) else {
                        return Err("expected (assign name value)".into());
                    };
                    self.globals.insert(name.clone(), value.unquote().clone());
                    format!(" {}\n", value.unquote())
                }
                "@" => {
                    let Some(SExpr::Sym(name)) = items.get(1) else {
                        return Err("expected (@ name)".into());
                    };
                    format!(" {}\n", self.globals.get(name).cloned().unwrap_or_else(SExpr::nil))
                }
                _ => BREAK_HELP.into(),
            },
            _ => BREAK_HELP.into(),
        };
        self.out(text);
        Ok(())
    }

    fn record_flat(&mut self, pre: bool, a: &Attempt<'_>, result: Option<&Term>, failure: Option<&FailureReason>) {
        self.flat_log.push(FlatEvent {
            pre,
            gstack_len: a.gstack.len(),
            rune: a.rule.rune.clone(),
            target: a.target.clone(),
            ancestors: a.ancestors.len(),
            result: result.cloned(),
            failure: failure.cloned(),
        });
    }
}

fn fail_text(f: Fail) -> String {
    match f {
        Fail::Msg(m) => m,
        Fail::Abort => "aborted".into(),
    }
}

trait NilDefault {
    fn unwrap_or_default_nil(self) -> SExpr;
}

impl NilDefault for Option<SExpr> {
    fn unwrap_or_default_nil(self) -> SExpr {
        self.unwrap_or_else(SExpr::nil)
    }
}

fn render_monitored(brr: &BrrStatus) -> String {
    let mut out = String::new();
    for e in brr.monitored.entries() {
        out.push_str(&format!("({} {})\n", e.rune, e.criteria));
    }
    if out.is_empty() {
        out.push_str("No runes are monitored.\n");
    }
    out
}

impl<F: Frontend> Hooks for Session<F> {
    fn near_miss_brkpt1(&mut self, a: &Attempt<'_>) -> Result<(), Abort> {
        self.handler_depth += 1;
        self.max_handler_depth = self.max_handler_depth.max(self.handler_depth);
        let r = self.in_brr_wormhole(|s, brr| {
            if brr.inner_breaks_suppressed() {
                return Ok(());
            }
            let Some(entry) = brr.monitored.monitored(&a.rule.rune).cloned() else {
                return Ok(());
            };
            if !entry.criteria.has_near_miss_criteria() {
                return Ok(());
            }
            let misses = brr_near_missp(&entry.criteria, &a.rule.lhs, a.target);
            if misses.is_empty() {
                return Ok(());
            }
            let messages = misses.into_iter().map(|m| m.message).collect();
            let locals = s.locals_for(a, entry.criteria, messages);
            if !s.condition_holds(&locals, brr.depth() + 1) {
                return Ok(());
            }
            s.open_break(brr, locals)
        });
        self.handler_depth -= 1;
        r
    }

    fn brkpt1(&mut self, a: &Attempt<'_>) -> Result<(), Abort> {
        self.handler_enter("BRKPT1", &a.rule.rune);
        if self.gstackp == GstackMode::BrrData && self.strategy.entry1(a.ancestors, a.gstack, a.rcnst) {
            let pre = BrrData1 {
                lemma: a.rule.clone(),
                target: a.target.clone(),
                unify_subst: a.unify_subst.clone(),
                type_alist: a.type_alist.clone(),
                pot_list: Vec::new(),
                ancestors: a.ancestors.to_vec(),
                rcnst: a.rcnst.clone(),
                initial_ttree: a.ttree.clone(),
                gstack: a.gstack.clone(),
            };
            let strategy = self.strategy.clone();
            let _ = self.wormholes.wormhole_eval(&brr_data_wormhole(), |whs| {
                WormholeStatus::new(whs.entry_code, Whs::BrrData(strategy.update1(whs.data.into_brr_data(), pre)))
            });
        }
        self.record_flat(true, a, None, None);
        let r = self.in_brr_wormhole(|s, brr| {
            if brr.inner_breaks_suppressed() {
                return Ok(());
            }
            let Some(entry) = brr.monitored.monitored(&a.rule.rune).cloned() else {
                return Ok(());
            };
            let locals = s.locals_for(a, entry.criteria, Vec::new());
            if !s.condition_holds(&locals, brr.depth() + 1) {
                return Ok(());
            }
            s.open_break(brr, locals)
        });
        self.handler_exit("BRKPT1", &a.rule.rune);
        r
    }

    fn brkpt2(&mut self, o: &Outcome<'_>) -> Result<(), Abort> {
        let a = &o.attempt;
        let near_miss = o.failure == Some(&FailureReason::NearMiss);
        if !near_miss {
            self.handler_enter("BRKPT2", &a.rule.rune);
            if self.gstackp == GstackMode::BrrData && self.strategy.entry2(a.ancestors, a.gstack, a.rcnst) {
                let post = BrrData2 {
                    failure_reason: o.failure.cloned(),
                    unify_subst: a.unify_subst.clone(),
                    brr_result: o.result.cloned(),
                    rcnst: a.rcnst.clone(),
                    final_ttree: a.ttree.clone(),
                    gstack: a.gstack.clone(),
                };
                let strategy = self.strategy.clone();
                let _ = self.wormholes.wormhole_eval(&brr_data_wormhole(), |whs| {
                    WormholeStatus::new(whs.entry_code, Whs::BrrData(strategy.update2(whs.data.into_brr_data(), post)))
                });
            }
            self.record_flat(false, a, o.result, o.failure);
        } else {
            self.handler_depth += 1;
            self.max_handler_depth = self.max_handler_depth.max(self.handler_depth);
        }
        let r = self.in_brr_wormhole(|s, brr| {
            let depth = brr.depth();
            let Some(top) = brr.top_mut() else {
                return Ok(());
            };
            if top.gstack != *a.gstack {
                return Ok(());
            }
            top.locals.wonp = Some(o.wonp());
            top.locals.failure_reason = o.failure.cloned();
            top.locals.brr_result = o.result.cloned();
            top.locals.unify_subst = a.unify_subst.clone();
            let rune = a.rule.rune.to_string();
            let mode = top.exit_mode.unwrap_or(ExitMode::Go).base();
            let summary = match (o.failure, o.result) {
                (Some(reason), _) => format!("{depth}x {rune} failed because {reason}."),
                (None, Some(result)) => format!("{depth}{} {rune} produced {result}.", if mode == ExitMode::Eval { "!" } else { "" }),
                (None, None) => format!("{depth} {rune} finished."),
            };
            match mode {
                ExitMode::Eval => {
                    s.out(format!("\n{summary}\n\n"));
                    s.break_loop(brr, false)?;
                }
                ExitMode::Go => s.out(format!("{summary}\n")),
                _ => {}
            }
            s.emit(Event::BreakClose { depth, rune, text: format!("{depth})\n") });
            brr.stack.pop();
            Ok(())
        });
        if near_miss {
            self.handler_depth -= 1;
        } else {
            self.handler_exit("BRKPT2", &a.rule.rune);
        }
        r
    }
}

/// Runs a script through a [`ScriptedFrontend`] and returns the transcript.
pub fn run_script(world: Option<World>, script: &str) -> String {
    let mut session = Session::new(ScriptedFrontend::from_script(script));
    if let Some(w) = world {
        session.world = w;
    }
    session.repl();
    session.into_frontend().transcript
}

#[allow(dead_code)]
fn _assert_object_safe(_: &dyn Frontend, _: Box<dyn Strategy>) {}
