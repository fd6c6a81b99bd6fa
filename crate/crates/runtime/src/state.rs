//! Per-instance dependency state: reference counts, children and contingent
//! sets, and the registry of variables instantiated in the current world.

use crate::value::VarId;

/// Small ordered set of handles. Insertion order is kept so that iteration
/// (and therefore every run) is deterministic.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct VarSet(Vec<VarId>);

impl VarSet {
    pub fn insert(&mut self, v: VarId) -> bool {
        if self.0.contains(&v) {
            false
        } else {
            self.0.push(v);
            true
        }
    }

    pub fn remove(&mut self, v: VarId) -> bool {
        match self.0.iter().position(|&x| x == v) {
            Some(i) => {
                self.0.swap_remove(i);
                true
            }
            None => false,
        }
    }

    pub fn contains(&self, v: VarId) -> bool {
        self.0.contains(&v)
    }

    pub fn as_slice(&self) -> &[VarId] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn sorted(&self) -> Vec<VarId> {
        let mut v = self.0.clone();
        v.sort();
        v
    }
}

pub const NOT_ACTIVE: u32 = u32::MAX;

#[derive(Debug, Clone)]
pub struct RuntimeVarState {
    pub cnt: u32,
    pub ch: VarSet,
    pub cont: VarSet,
    pub active_pos: u32,
}

impl Default for RuntimeVarState {
    fn default() -> Self {
        RuntimeVarState { cnt: 0, ch: VarSet::default(), cont: VarSet::default(), active_pos: NOT_ACTIVE }
    }
}

/// Dense storage indexed by template, then by the two argument indices.
#[derive(Debug, Default)]
pub struct StateStore {
    per_tmpl: Vec<Vec<Vec<RuntimeVarState>>>,
}

impl StateStore {
    pub fn new(templates: usize) -> Self {
        StateStore { per_tmpl: (0..templates).map(|_| Vec::new()).collect() }
    }

    #[inline]
    pub fn get_mut(&mut self, id: VarId) -> &mut RuntimeVarState {
        let rows = &mut self.per_tmpl[id.tmpl() as usize];
        let (i, j) = (id.a0() as usize, id.a1() as usize);
        if i >= rows.len() {
            rows.resize_with(i + 1, Vec::new);
        }
        let row = &mut rows[i];
        if j >= row.len() {
            row.resize_with(j + 1, RuntimeVarState::default);
        }
        &mut row[j]
    }

    #[inline]
    pub fn get(&self, id: VarId) -> Option<&RuntimeVarState> {
        self.per_tmpl.get(id.tmpl() as usize)?.get(id.a0() as usize)?.get(id.a1() as usize)
    }

    pub fn cnt(&self, id: VarId) -> u32 {
        self.get(id).map_or(0, |s| s.cnt)
    }

    pub fn clear(&mut self) {
        for t in &mut self.per_tmpl {
            t.clear();
        }
    }
}

/// The variables of the current world that inference may select.
#[derive(Debug, Default)]
pub struct WorldRegistry {
    pub active_vars: Vec<VarId>,
    pub proposed_vars: Vec<VarId>,
}

impl WorldRegistry {
    pub fn world_size(&self) -> usize {
        self.active_vars.len()
    }

    pub fn add(&mut self, id: VarId, states: &mut StateStore) {
        let st = states.get_mut(id);
        if st.active_pos == NOT_ACTIVE {
            st.active_pos = self.active_vars.len() as u32;
            self.active_vars.push(id);
        }
    }

    pub fn remove(&mut self, id: VarId, states: &mut StateStore) {
        let pos = states.get_mut(id).active_pos;
        if pos == NOT_ACTIVE {
            return;
        }
        let last = *self.active_vars.last().expect("active position without active vars");
        self.active_vars.swap_remove(pos as usize);
        if last != id {
            states.get_mut(last).active_pos = pos;
        }
        states.get_mut(id).active_pos = NOT_ACTIVE;
    }

    pub fn clear(&mut self) {
        self.active_vars.clear();
        self.proposed_vars.clear();
    }
}
