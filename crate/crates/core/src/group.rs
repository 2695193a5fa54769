//! Bit-packed dimension subsets.

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

pub(crate) fn word_count(dim: usize) -> usize {
    dim.div_ceil(64)
}

/// A subset of the `D` input dimensions, stored as a packed bit mask.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Group {
    dim: usize,
    words: Vec<u64>,
}

impl Group {
    pub fn empty(dim: usize) -> Self {
        Self {
            dim,
            words: vec![0; word_count(dim)],
        }
    }

    /// Indices past `dim` are ignored.
    pub fn from_indices(dim: usize, indices: impl IntoIterator<Item = usize>) -> Self {
        let mut g = Self::empty(dim);
        for i in indices {
            if i < dim {
                g.insert(i);
            }
        }
        g
    }

    pub fn from_mask(mask: &[bool]) -> Self {
        Self::from_indices(
            mask.len(),
            mask.iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| i),
        )
    }

    pub(crate) fn from_words(dim: usize, words: &[u64]) -> Self {
        debug_assert_eq!(words.len(), word_count(dim));
        Self {
            dim,
            words: words.to_vec(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    pub fn insert(&mut self, i: usize) {
        self.words[i / 64] |= 1 << (i % 64);
    }

    pub fn remove(&mut self, i: usize) {
        self.words[i / 64] &= !(1 << (i % 64));
    }

    pub fn contains(&self, i: usize) -> bool {
        self.words[i / 64] >> (i % 64) & 1 == 1
    }

    pub fn len(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    pub fn indices(&self) -> Vec<usize> {
        iter_bits(&self.words).collect()
    }

    pub fn to_mask(&self) -> Vec<bool> {
        (0..self.dim).map(|i| self.contains(i)).collect()
    }

    /// Number of dimensions shared with a packed activity state.
    pub(crate) fn overlap(&self, state: &[u64]) -> u32 {
        self.words
            .iter()
            .zip(state)
            .map(|(a, b)| (a & b).count_ones())
            .sum()
    }

    pub(crate) fn intersects(&self, state: &[u64]) -> bool {
        self.words.iter().zip(state).any(|(a, b)| a & b != 0)
    }

    /// Ordering used for deterministic tie-breaks: smaller groups first, then
    /// lexicographic on sorted indices.
    pub fn tie_break_cmp(&self, other: &Self) -> Ordering {
        self.len()
            .cmp(&other.len())
            .then_with(|| self.indices().cmp(&other.indices()))
    }
}

impl fmt::Debug for Group {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Group{:?}", self.indices())
    }
}

/// Serialized as `{"dim": D, "indices": [...]}`.
impl Serialize for Group {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct Repr {
            dim: usize,
            indices: Vec<usize>,
        }
        Repr {
            dim: self.dim,
            indices: self.indices(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Group {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Repr {
            dim: usize,
            indices: Vec<usize>,
        }
        let r = Repr::deserialize(d)?;
        if let Some(&i) = r.indices.iter().find(|&&i| i >= r.dim) {
            return Err(serde::de::Error::custom(format!(
                "index {i} outside dimension {}",
                r.dim
            )));
        }
        Ok(Group::from_indices(r.dim, r.indices))
    }
}

pub(crate) fn iter_bits(words: &[u64]) -> impl Iterator<Item = usize> + '_ {
    words.iter().enumerate().flat_map(|(w, &word)| {
        let mut rest = word;
        std::iter::from_fn(move || {
            if rest == 0 {
                return None;
            }
            let b = rest.trailing_zeros() as usize;
            rest &= rest - 1;
            Some(w * 64 + b)
        })
    })
}
