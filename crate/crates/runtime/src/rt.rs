//! The mutable inference context threaded through generated code.

use crate::dist::Dist;
use crate::memo::NEVER;
use crate::rng::CountingRng;
use crate::state::{StateStore, WorldRegistry};
use crate::value::{Value, VarId};

pub const CH: u8 = 1;
pub const CONT: u8 = 2;
pub const RC: u8 = 4;

/// References found while walking one declaration along its current path.
/// Each variable appears once; flags from repeated references are merged.
#[derive(Debug, Default, Clone)]
pub struct RefList {
    items: Vec<(VarId, u8)>,
}

impl RefList {
    #[inline]
    fn push(&mut self, v: VarId, flag: u8) {
        for it in &mut self.items {
            if it.0 == v {
                it.1 |= flag;
                return;
            }
        }
        self.items.push((v, flag));
    }

    /// `Ch(v) += me`
    #[inline]
    pub fn ch(&mut self, v: VarId) {
        self.push(v, CH);
    }

    /// `Cont(v) += me`
    #[inline]
    pub fn cont(&mut self, v: VarId) {
        self.push(v, CONT);
    }

    /// `inc_cnt(v)` / `dec_cnt(v)`
    #[inline]
    pub fn rc(&mut self, v: VarId) {
        self.push(v, RC);
    }

    pub fn items(&self) -> &[(VarId, u8)] {
        &self.items
    }

    pub fn clear(&mut self) {
        self.items.clear();
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Flags {
    pub db: bool,
    pub rc: bool,
    pub acu: bool,
}

impl Default for Flags {
    fn default() -> Self {
        Flags { db: true, rc: true, acu: true }
    }
}

#[derive(Debug, Default, Clone, Copy)]
pub struct Counters {
    pub likelihood_evals: u64,
    pub accepted: u64,
    pub rejected: u64,
    pub cont_updates: u64,
}

pub struct Rt {
    pub rng: CountingRng,
    pub counters: Counters,
    pub generation: u64,
    pub proposal: u64,
    pub states: StateStore,
    pub world: WorldRegistry,
    /// When false (LW), instantiation does not touch the registry.
    pub track_world: bool,
    /// Every instantiation since the last `reset_world`, pinned ones included.
    pub instantiated: Vec<VarId>,
    pub pending_zero: Vec<VarId>,
    pub flags: Flags,
    names: &'static [&'static str],
}

impl Rt {
    pub fn new(seed: u64, flags: Flags, names: &'static [&'static str]) -> Self {
        Rt {
            rng: CountingRng::new(seed, 0),
            counters: Counters::default(),
            generation: NEVER + 1,
            proposal: NEVER + 1,
            states: StateStore::new(names.len()),
            world: WorldRegistry::default(),
            track_world: false,
            instantiated: Vec::new(),
            pending_zero: Vec::new(),
            flags,
            names,
        }
    }

    /// Invalidate every memoized value in O(1).
    #[inline]
    pub fn bump_generation(&mut self) {
        self.generation += 1;
    }

    #[inline]
    pub fn bump_proposal(&mut self) {
        self.proposal += 1;
        self.world.proposed_vars.clear();
    }

    pub fn reset_world(&mut self) {
        self.bump_generation();
        self.world.clear();
        self.states.clear();
        self.instantiated.clear();
        self.pending_zero.clear();
    }

    #[inline]
    pub fn on_instantiate(&mut self, id: VarId, selectable: bool) {
        if self.track_world {
            self.instantiated.push(id);
            if selectable {
                self.world.add(id, &mut self.states);
            }
        }
    }

    #[inline]
    pub fn on_propose(&mut self, id: VarId) {
        self.world.proposed_vars.push(id);
    }

    pub fn describe(&self, id: VarId) -> String {
        let name = self.names.get(id.tmpl() as usize).copied().unwrap_or("?");
        format!("{name}[{}, {}]", id.a0(), id.a1())
    }

    /// Sample from `d` on behalf of `who`; invalid parameters are fatal.
    #[inline]
    pub fn sample(&mut self, d: &Dist, who: VarId) -> Value {
        match d.sample(&mut self.rng) {
            Ok(v) => v,
            Err(e) => panic!("while sampling {}: {e}", self.describe(who)),
        }
    }

    #[inline]
    pub fn inc_cnt(&mut self, v: VarId) {
        self.states.get_mut(v).cnt += 1;
    }

    #[inline]
    pub fn dec_cnt(&mut self, v: VarId) {
        let st = self.states.get_mut(v);
        if st.cnt == 0 {
            panic!("reference count underflow for {}", self.describe(v));
        }
        st.cnt -= 1;
        if st.cnt == 0 {
            self.pending_zero.push(v);
        }
    }

    /// Register `me` as a child of everything in `refs`.
    pub fn link(&mut self, me: VarId, refs: &RefList) {
        for &(u, f) in refs.items() {
            if f & CH != 0 {
                self.states.get_mut(u).ch.insert(me);
            }
            if f & CONT != 0 {
                self.states.get_mut(u).cont.insert(me);
                self.counters.cont_updates += 1;
            }
            if f & RC != 0 {
                self.inc_cnt(u);
            }
        }
    }

    pub fn unlink(&mut self, me: VarId, refs: &RefList) {
        for &(u, f) in refs.items() {
            if f & CH != 0 {
                self.states.get_mut(u).ch.remove(me);
            }
            if f & CONT != 0 {
                self.states.get_mut(u).cont.remove(me);
                self.counters.cont_updates += 1;
            }
            if f & RC != 0 {
                self.dec_cnt(u);
            }
        }
    }

    pub fn children(&self, id: VarId) -> Vec<VarId> {
        self.states.get(id).map_or_else(Vec::new, |s| s.ch.as_slice().to_vec())
    }

    pub fn contingent(&self, id: VarId) -> Vec<VarId> {
        self.states.get(id).map_or_else(Vec::new, |s| s.cont.as_slice().to_vec())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const NAMES: &[&str] = &["a", "b", "c"];

    #[test]
    fn reflist_merges_flags() {
        let mut r = RefList::default();
        let v = VarId::new(1, 0, 0);
        r.cont(v);
        r.ch(v);
        r.rc(v);
        assert_eq!(r.items(), &[(v, CH | CONT | RC)]);
    }

    #[test]
    fn link_then_unlink_restores_state() {
        let mut rt = Rt::new(0, Flags::default(), NAMES);
        let me = VarId::new(2, 0, 0);
        let p = VarId::new(1, 3, 0);
        let mut r = RefList::default();
        r.ch(p);
        r.cont(p);
        r.rc(p);
        rt.link(me, &r);
        assert_eq!(rt.states.cnt(p), 1);
        assert_eq!(rt.children(p), vec![me]);
        assert_eq!(rt.contingent(p), vec![me]);
        rt.unlink(me, &r);
        assert_eq!(rt.states.cnt(p), 0);
        assert!(rt.children(p).is_empty());
        assert_eq!(rt.pending_zero, vec![p]);
    }

    #[test]
    #[should_panic(expected = "underflow")]
    fn dec_below_zero_is_fatal() {
        let mut rt = Rt::new(0, Flags::default(), NAMES);
        rt.dec_cnt(VarId::new(0, 0, 0));
    }
}
