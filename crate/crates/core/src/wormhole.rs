//! Named side-channel state cells.
//!
//! Each wormhole has a persistent status. While a wormhole is open its
//! status is copied into an ephemeral view that is written back on close.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};

use crate::sexpr::Symbol;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Hash)]
pub enum EntryCode {
    #[default]
    Enter,
    Skip,
}

#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct WormholeStatus<D> {
    pub entry_code: EntryCode,
    pub data: D,
}

impl<D> WormholeStatus<D> {
    pub fn new(entry_code: EntryCode, data: D) -> Self {
        WormholeStatus { entry_code, data }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum WormholeError {
    #[error("wormhole {0} is already open")]
    AlreadyOpen(String),
    #[error("wormhole {0} is not open")]
    NotOpen(String),
}

#[derive(Clone, Debug)]
struct Ephemeral<D> {
    status: WormholeStatus<D>,
    dirty: bool,
}

/// The persistent statuses of all wormholes plus the ephemeral views of
/// the open ones.
#[derive(Clone, Debug)]
pub struct Wormholes<D> {
    persistent: BTreeMap<Symbol, WormholeStatus<D>>,
    open: BTreeMap<Symbol, Ephemeral<D>>,
}

impl<D> Default for Wormholes<D> {
    fn default() -> Self {
        Wormholes { persistent: BTreeMap::new(), open: BTreeMap::new() }
    }
}

impl<D: Clone + Default> Wormholes<D> {
    pub fn new() -> Self {
        Self::default()
    }

    /// Unknown names have status `{Enter, D::default()}`.
    pub fn get_persistent_whs(&self, name: &Symbol) -> WormholeStatus<D> {
        self.persistent.get(name).cloned().unwrap_or_default()
    }

    /// Sets the status coherently: if the wormhole is open the ephemeral
    /// view is updated too, so the write-back on close keeps the value.
    pub fn set_persistent_whs(&mut self, name: &Symbol, status: WormholeStatus<D>) {
        if let Some(eph) = self.open.get_mut(name) {
            eph.status = status.clone();
            eph.dirty = true;
        }
        self.persistent.insert(name.clone(), status);
    }

    /// Replaces the persistent status by `f(status)`.
    pub fn wormhole_eval(
        &mut self,
        name: &Symbol,
        f: impl FnOnce(WormholeStatus<D>) -> WormholeStatus<D>,
    ) -> Result<(), WormholeError> {
        if self.open.contains_key(name) {
            return Err(WormholeError::AlreadyOpen(name.to_string()));
        }
        let status = self.persistent.remove(name).unwrap_or_default();
        self.persistent.insert(name.clone(), f(status));
        Ok(())
    }

    pub fn is_open(&self, name: &Symbol) -> bool {
        self.open.contains_key(name)
    }

    /// Copies the persistent status into a fresh ephemeral view.
    pub fn open(&mut self, name: &Symbol) -> Result<&mut WormholeStatus<D>, WormholeError> {
        if self.open.contains_key(name) {
            return Err(WormholeError::AlreadyOpen(name.to_string()));
        }
        let status = self.get_persistent_whs(name);
        let eph = self.open.entry(name.clone()).or_insert(Ephemeral { status, dirty: false });
        Ok(&mut eph.status)
    }

    pub fn ephemeral(&self, name: &Symbol) -> Option<&WormholeStatus<D>> {
        self.open.get(name).map(|e| &e.status)
    }

    pub fn ephemeral_mut(&mut self, name: &Symbol) -> Option<&mut WormholeStatus<D>> {
        self.open.get_mut(name).map(|e| {
            e.dirty = true;
            &mut e.status
        })
    }

    /// True iff the open view has been written since it was opened.
    pub fn is_dirty(&self, name: &Symbol) -> bool {
        self.open.get(name).is_some_and(|e| e.dirty)
    }

    /// Writes the ephemeral status back and discards the view.
    pub fn close(&mut self, name: &Symbol) -> Result<(), WormholeError> {
        let eph = self.open.remove(name).ok_or_else(|| WormholeError::NotOpen(name.to_string()))?;
        self.persistent.insert(name.clone(), eph.status);
        Ok(())
    }

    /// Runs `body` inside the named wormhole. A `Skip` entry code bypasses
    /// the body entirely and yields `None`. Changes `body` makes to `state`
    /// are undone on exit; changes to the status are kept.
    pub fn enter<S: Clone, R>(
        &mut self,
        name: &Symbol,
        state: &mut S,
        body: impl FnOnce(&mut WormholeStatus<D>, &mut S) -> R,
    ) -> Result<Option<R>, WormholeError> {
        if self.is_open(name) {
            return Err(WormholeError::AlreadyOpen(name.to_string()));
        }
        if self.get_persistent_whs(name).entry_code == EntryCode::Skip {
            return Ok(None);
        }
        let mut status = self.open(name)?.clone();
        let saved = state.clone();
        let r = body(&mut status, state);
        *state = saved;
        if let Some(eph) = self.ephemeral_mut(name) {
            *eph = status;
        }
        self.close(name)?;
        Ok(Some(r))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec::Vec;

    fn name() -> Symbol {
        Symbol::new("BRR")
    }

    #[test]
    fn unknown_name_is_empty() {
        let w: Wormholes<Vec<u32>> = Wormholes::new();
        assert_eq!(w.get_persistent_whs(&name()), WormholeStatus::new(EntryCode::Enter, Vec::new()));
    }

    #[test]
    fn eval_pushes() {
        let mut w: Wormholes<Vec<u32>> = Wormholes::new();
        w.wormhole_eval(&name(), |mut s| {
            s.data.push(7);
            s
        })
        .unwrap();
        assert_eq!(w.get_persistent_whs(&name()).data, [7]);
        w.wormhole_eval(&name(), |s| s).unwrap();
        assert_eq!(w.get_persistent_whs(&name()).data, [7]);
    }

    #[test]
    fn eval_rejects_open_wormhole() {
        let mut w: Wormholes<Vec<u32>> = Wormholes::new();
        w.open(&name()).unwrap();
        assert!(w.wormhole_eval(&name(), |s| s).is_err());
        assert!(w.open(&name()).is_err());
        w.close(&name()).unwrap();
        assert!(w.close(&name()).is_err());
    }

    #[test]
    fn enter_keeps_status_and_restores_state() {
        let mut w: Wormholes<Vec<u32>> = Wormholes::new();
        let mut state = 5;
        let r = w
            .enter(&name(), &mut state, |status, st| {
                status.data.push(1);
                *st = 99;
                "done"
            })
            .unwrap();
        assert_eq!(r, Some("done"));
        assert_eq!(state, 5);
        assert_eq!(w.get_persistent_whs(&name()).data, [1]);
        assert!(!w.is_open(&name()));
    }

    #[test]
    fn skip_bypasses_body() {
        let mut w: Wormholes<Vec<u32>> = Wormholes::new();
        w.set_persistent_whs(&name(), WormholeStatus::new(EntryCode::Skip, Vec::new()));
        let mut state = ();
        let r = w.enter(&name(), &mut state, |_, _| panic!("entered")).unwrap();
        assert_eq!(r, None::<()>);
    }

    #[test]
    fn set_while_open_survives_close() {
        let mut w: Wormholes<Vec<u32>> = Wormholes::new();
        w.open(&name()).unwrap();
        w.set_persistent_whs(&name(), WormholeStatus::new(EntryCode::Enter, alloc::vec![3]));
        assert!(w.is_dirty(&name()));
        assert_eq!(w.ephemeral(&name()).unwrap().data, [3]);
        w.close(&name()).unwrap();
        assert_eq!(w.get_persistent_whs(&name()).data, [3]);
    }
}
