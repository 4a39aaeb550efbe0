use std::hash::{BuildHasher, Hash};
use std::sync::RwLock;

use rustc_hash::{FxBuildHasher, FxHashMap};

pub const DEFAULT_SHARDS: usize = 997;

/// Hash map split into independently locked shards.
///
/// `insert_if_absent` is linearizable per key; readers on different shards
/// never contend.
pub struct ShardedMap<K, V> {
    shards: Vec<RwLock<FxHashMap<K, V>>>,
    hasher: FxBuildHasher,
}

impl<K: Hash + Eq, V: Copy> ShardedMap<K, V> {
    pub fn new(shard_count: usize) -> Self {
        let shard_count = shard_count.max(1);
        Self {
            shards: (0..shard_count).map(|_| RwLock::new(FxHashMap::default())).collect(),
            hasher: FxBuildHasher,
        }
    }

    fn shard(&self, key: &K) -> &RwLock<FxHashMap<K, V>> {
        let h = self.hasher.hash_one(key);
        &self.shards[(h % self.shards.len() as u64) as usize]
    }

    pub fn get(&self, key: &K) -> Option<V> {
        self.shard(key).read().expect("shard lock poisoned").get(key).copied()
    }

    /// Returns `true` if the key was absent and `value` was stored.
    pub fn insert_if_absent(&self, key: K, value: V) -> bool {
        let mut shard = self.shard(&key).write().expect("shard lock poisoned");
        match shard.entry(key) {
            std::collections::hash_map::Entry::Occupied(_) => false,
            std::collections::hash_map::Entry::Vacant(v) => {
                v.insert(value);
                true
            }
        }
    }

    pub fn len(&self) -> usize {
        self.shards.iter().map(|s| s.read().expect("shard lock poisoned").len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn shard_count(&self) -> usize {
        self.shards.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rayon::prelude::*;

    #[test]
    fn first_insert_wins() {
        let map = ShardedMap::new(DEFAULT_SHARDS);
        assert!(map.insert_if_absent(5u64, 1u32));
        assert!(!map.insert_if_absent(5u64, 2u32));
        assert_eq!(map.get(&5), Some(1));
        assert_eq!(map.get(&6), None);
        assert_eq!(map.shard_count(), 997);
    }

    #[test]
    fn concurrent_inserts_are_counted_once() {
        let map = ShardedMap::new(13);
        let wins: usize = (0..4000u64)
            .into_par_iter()
            .map(|i| usize::from(map.insert_if_absent(i % 1000, i)))
            .sum();
        assert_eq!(wins, 1000);
        assert_eq!(map.len(), 1000);
    }
}
