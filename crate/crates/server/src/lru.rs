use std::collections::HashMap;
use std::hash::Hash;

/// Bounded map that evicts the least recently used entry. Capacities are
/// small (hundreds), so eviction is a linear scan.
#[derive(Debug)]
pub struct Lru<K, V> {
    cap: usize,
    tick: u64,
    map: HashMap<K, (V, u64)>,
}

impl<K: Hash + Eq + Clone, V: Clone> Lru<K, V> {
    pub fn new(cap: usize) -> Self {
        Lru { cap: cap.max(1), tick: 0, map: HashMap::new() }
    }

    pub fn get(&mut self, k: &K) -> Option<V> {
        self.tick += 1;
        let tick = self.tick;
        self.map.get_mut(k).map(|e| {
            e.1 = tick;
            e.0.clone()
        })
    }

    /// Inserts `v`, returning the evicted entry if the cap was reached.
    pub fn insert(&mut self, k: K, v: V) -> Option<(K, V)> {
        self.tick += 1;
        let mut evicted = None;
        if !self.map.contains_key(&k) && self.map.len() >= self.cap {
            let oldest = self.map.iter().min_by_key(|(_, e)| e.1).map(|(k, _)| k.clone());
            if let Some(old) = oldest {
                evicted = self.map.remove(&old).map(|e| (old, e.0));
            }
        }
        self.map.insert(k, (v, self.tick));
        evicted
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}
