//! Memoization cells and dynamic tables.
//!
//! A cell is valid for the current world iff `mark == generation`; bumping the
//! generation counter invalidates every cell at once without touching memory.
//! The proposal cache follows the same scheme with its own counter.

/// Generation id that no live counter ever takes.
pub const NEVER: u64 = 0;

#[derive(Debug, Clone, Copy)]
pub struct MemoCell<V> {
    pub val: V,
    pub cached_val: V,
    pub mark: u64,
    pub cache_mark: u64,
}

impl<V: Copy + Default> Default for MemoCell<V> {
    fn default() -> Self {
        MemoCell { val: V::default(), cached_val: V::default(), mark: NEVER, cache_mark: NEVER }
    }
}

impl<V: Copy> MemoCell<V> {
    #[inline]
    pub fn valid(&self, generation: u64) -> bool {
        self.mark == generation
    }

    #[inline]
    pub fn cached(&self, proposal: u64) -> bool {
        self.cache_mark == proposal
    }
}

/// Growable array of cells whose logical length follows a number variable.
/// Capacity only grows unless `shrink_to` is called explicitly.
#[derive(Debug, Clone)]
pub struct DynamicTable<V> {
    cells: Vec<MemoCell<V>>,
    len: usize,
}

impl<V: Copy + Default> Default for DynamicTable<V> {
    fn default() -> Self {
        Self::with_len(0)
    }
}

impl<V: Copy + Default> DynamicTable<V> {
    pub fn with_len(len: usize) -> Self {
        DynamicTable { cells: vec![MemoCell::default(); len], len }
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn capacity(&self) -> usize {
        self.cells.len()
    }

    /// Set the logical length, allocating only when it exceeds capacity.
    pub fn ensure(&mut self, len: usize) {
        if len > self.cells.len() {
            let target = len.max(self.cells.len() * 2);
            self.cells.resize(target, MemoCell::default());
        }
        self.len = self.len.max(len);
    }

    /// Release memory beyond `len` (the live prefix).
    pub fn shrink_to(&mut self, len: usize) {
        self.cells.resize(len, MemoCell::default());
        self.cells.shrink_to_fit();
        self.len = len;
    }

    #[inline]
    pub fn cell(&mut self, i: usize) -> &mut MemoCell<V> {
        if i >= self.cells.len() {
            self.ensure(i + 1);
        }
        &mut self.cells[i]
    }

    #[inline]
    pub fn get(&self, i: usize) -> Option<&MemoCell<V>> {
        self.cells.get(i)
    }
}

/// Two-argument table: one dynamic row per value of the first argument.
#[derive(Debug, Clone, Default)]
pub struct Table2<V: Copy + Default> {
    rows: Vec<DynamicTable<V>>,
}

impl<V: Copy + Default> Table2<V> {
    pub fn new() -> Self {
        Table2 { rows: Vec::new() }
    }

    #[inline]
    pub fn cell(&mut self, i: usize, j: usize) -> &mut MemoCell<V> {
        if i >= self.rows.len() {
            self.rows.resize_with(i + 1, DynamicTable::default);
        }
        self.rows[i].cell(j)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> Option<&MemoCell<V>> {
        self.rows.get(i)?.get(j)
    }

    pub fn shrink_to(&mut self, rows: usize, cols: usize) {
        self.rows.truncate(rows);
        for r in &mut self.rows {
            r.shrink_to(cols);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bump_invalidates_without_touching_cells() {
        let mut t: DynamicTable<f64> = DynamicTable::with_len(3);
        let generation = 1;
        t.cell(1).val = 4.0;
        t.cell(1).mark = generation;
        assert!(t.cell(1).valid(generation));
        assert!(!t.cell(1).valid(generation + 1));
        assert_eq!(t.cell(1).val, 4.0);
    }

    #[test]
    fn ensure_grows_geometrically_and_keeps_contents() {
        let mut t: DynamicTable<i64> = DynamicTable::with_len(2);
        t.cell(1).val = 9;
        t.ensure(5);
        assert_eq!(t.len(), 5);
        assert!(t.capacity() >= 5);
        assert_eq!(t.cell(1).val, 9);
        let cap = t.capacity();
        t.ensure(3);
        assert_eq!(t.capacity(), cap);
    }

    #[test]
    fn shrink_releases_tail() {
        let mut t: DynamicTable<bool> = DynamicTable::with_len(10);
        t.shrink_to(4);
        assert_eq!(t.capacity(), 4);
        assert_eq!(t.len(), 4);
    }

    #[test]
    fn table2_grows_both_dimensions() {
        let mut t: Table2<i64> = Table2::new();
        t.cell(3, 5).val = 2;
        assert_eq!(t.cell(3, 5).val, 2);
        assert_eq!(t.cell(0, 0).mark, NEVER);
    }
}
