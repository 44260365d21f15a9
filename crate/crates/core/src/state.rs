//! Key-value state and read-only views over it.

use alloc::collections::BTreeMap;

use crate::hash::Hasher64;
use crate::model::{Key, Value};

/// Read access to a state. Missing keys read as zero.
pub trait StateView: Sync {
    fn get(&self, key: &Key) -> Value;
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct State {
    map: BTreeMap<Key, Value>,
}

impl State {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(&mut self, key: Key, v: Value) {
        self.map.insert(key, v);
    }

    pub fn apply<'a>(&mut self, writes: impl IntoIterator<Item = (&'a Key, &'a Value)>) {
        for (k, v) in writes {
            self.map.insert(k.clone(), *v);
        }
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Key, &Value)> {
        self.map.iter()
    }

    /// Order-independent summary of the contents; zero-valued keys count as
    /// absent so that an explicit zero equals a missing key.
    pub fn digest(&self) -> u64 {
        let mut h = Hasher64::new();
        for (k, v) in &self.map {
            if *v != 0 {
                h.u64(k.as_bytes().len() as u64).bytes(k.as_bytes()).i64(*v);
            }
        }
        h.finish()
    }
}

impl FromIterator<(Key, Value)> for State {
    fn from_iter<I: IntoIterator<Item = (Key, Value)>>(iter: I) -> Self {
        Self { map: iter.into_iter().collect() }
    }
}

impl StateView for State {
    fn get(&self, key: &Key) -> Value {
        self.map.get(key).copied().unwrap_or(0)
    }
}

/// Pending writes layered over a base view.
pub struct Overlay<'a> {
    pub base: &'a dyn StateView,
    pub top: &'a BTreeMap<Key, Value>,
}

impl StateView for Overlay<'_> {
    fn get(&self, key: &Key) -> Value {
        match self.top.get(key) {
            Some(v) => *v,
            None => self.base.get(key),
        }
    }
}
