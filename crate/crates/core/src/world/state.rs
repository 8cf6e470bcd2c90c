use std::fmt;

/// A set of true atoms as a fixed-width bit vector over the atom universe.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct State {
    words: Vec<u64>,
    len: usize,
}

impl State {
    pub fn empty(len: usize) -> Self {
        State {
            words: vec![0; len.div_ceil(64)],
            len,
        }
    }

    pub fn from_atoms(len: usize, atoms: impl IntoIterator<Item = u32>) -> Self {
        let mut s = State::empty(len);
        for a in atoms {
            s.insert(a as usize);
        }
        s
    }

    /// Width of the universe in atoms.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    #[inline]
    pub fn contains(&self, i: usize) -> bool {
        debug_assert!(i < self.len);
        self.words[i >> 6] >> (i & 63) & 1 == 1
    }

    #[inline]
    pub fn insert(&mut self, i: usize) {
        assert!(i < self.len, "atom {i} outside universe of {}", self.len);
        self.words[i >> 6] |= 1 << (i & 63);
    }

    #[inline]
    pub fn remove(&mut self, i: usize) {
        assert!(i < self.len, "atom {i} outside universe of {}", self.len);
        self.words[i >> 6] &= !(1 << (i & 63));
    }

    pub fn count(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    /// `other ⊆ self`
    pub fn is_superset(&self, other: &State) -> bool {
        debug_assert_eq!(self.len, other.len);
        self.words
            .iter()
            .zip(&other.words)
            .all(|(a, b)| b & !a == 0)
    }

    pub fn ones(&self) -> impl Iterator<Item = usize> + '_ {
        self.words.iter().enumerate().flat_map(|(wi, &w)| {
            let mut w = w;
            std::iter::from_fn(move || {
                if w == 0 {
                    return None;
                }
                let b = w.trailing_zeros() as usize;
                w &= w - 1;
                Some(wi * 64 + b)
            })
        })
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }
}

impl fmt::Debug for State {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.ones()).finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn set_ops() {
        let mut s = State::empty(130);
        s.insert(0);
        s.insert(64);
        s.insert(129);
        assert_eq!(s.ones().collect::<Vec<_>>(), [0, 64, 129]);
        assert_eq!(s.count(), 3);
        s.remove(64);
        assert!(!s.contains(64));
        let g = State::from_atoms(130, [0, 129]);
        assert!(s.is_superset(&g));
        assert!(!g.is_superset(&State::from_atoms(130, [1])));
        assert!(s.is_superset(&State::empty(130)));
    }
}
