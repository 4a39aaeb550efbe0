//! Substitution search.
//!
//! To show `R(T_X) >= target`, suppose a decomposition with at most
//! `target - 1` terms exists. Padding with zero terms `a x b x 0` makes it
//! exactly `target - 1` terms long. Each term's `A`-factor, restricted to the
//! free variables, is a nonzero component `c`, and restricting `c = 0` kills
//! that term. The search walks non-decreasing sequences of components; a
//! node `(c_1..c_k)` is pruned when some sub-list `S` containing `c_k` gives
//! `|S| + R(T_{X + span S}) >= target`. Every node at depth `target - 1` must
//! be pruned, otherwise the attempt fails.

use std::cell::RefCell;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use rustc_hash::FxHashMap;
use serde::Serialize;
use thread_local::ThreadLocal;

use super::{submasks_ascending, EngineConfig};
use crate::certificate::SubstitutionRecord;
use crate::error::{Error, Result};
use crate::orbits::{OrbitCatalog, RestrictionSet, SmallBasis, SubspaceKey, WitnessIndex};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SearchOutcome {
    Proved,
    /// Some leaf at the depth cap could not be pruned.
    Failed,
    /// The step budget ran out.
    Aborted,
}

impl SearchOutcome {
    pub fn name(self) -> &'static str {
        match self {
            SearchOutcome::Proved => "proved",
            SearchOutcome::Failed => "failed",
            SearchOutcome::Aborted => "aborted",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct StageReport {
    pub target: u32,
    pub outcome: SearchOutcome,
    pub steps: u64,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Node {
    Proved,
    Failed,
    Aborted,
    Cancelled,
}

/// Canonicalization cache with random-half eviction.
struct Cache {
    map: FxHashMap<SubspaceKey, (u32, WitnessIndex)>,
    capacity: usize,
    rng: ChaCha8Rng,
}

impl Cache {
    fn new(capacity: usize, seed: u64) -> Self {
        Self {
            map: FxHashMap::default(),
            capacity: capacity.max(1),
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    fn get_or_insert(&mut self, key: SubspaceKey, f: impl FnOnce() -> Result<(u32, WitnessIndex)>) -> Result<(u32, WitnessIndex)> {
        if let Some(&v) = self.map.get(&key) {
            return Ok(v);
        }
        let v = f()?;
        if self.map.len() >= self.capacity {
            let rng = &mut self.rng;
            self.map.retain(|_, _| rng.random_bool(0.5));
        }
        self.map.insert(key, v);
        Ok(v)
    }
}

/// Substitution search state for one orbit, shared by all of its targets.
pub struct SubstitutionSearch<'a> {
    catalog: &'a OrbitCatalog,
    bounds: &'a [Option<u32>],
    base: SmallBasis,
    dimension: usize,
    components: Vec<u64>,
    /// `best_from[e]`: largest known bound among orbits of dimension `>= e`.
    best_from: Vec<u32>,
    step_limit: u64,
    caches: ThreadLocal<RefCell<Cache>>,
    cache_capacity: usize,
    seed: u64,
}

struct Run<'s, 'a> {
    search: &'s SubstitutionSearch<'a>,
    target: u32,
    steps: AtomicU64,
    stop: AtomicBool,
}

impl<'a> SubstitutionSearch<'a> {
    pub fn new(catalog: &'a OrbitCatalog, bounds: &'a [Option<u32>], rep: &RestrictionSet, cfg: &EngineConfig) -> Self {
        let lm = catalog.l() * catalog.m();
        let d = rep.dimension();
        let mut best_from = vec![0u32; lm + 2];
        for e in (d + 1..=lm).rev() {
            let layer_best = catalog.layer(e).iter().filter_map(|o| bounds[o.id as usize]).max().unwrap_or(0);
            best_from[e] = best_from[e + 1].max(layer_best);
        }
        Self {
            catalog,
            bounds,
            base: SmallBasis::from_rref(rep.basis()),
            dimension: d,
            components: submasks_ascending(rep.free_mask()),
            best_from,
            step_limit: cfg.step_limit,
            caches: ThreadLocal::new(),
            cache_capacity: cfg.cache_capacity,
            seed: cfg.seed,
        }
    }

    pub fn components(&self) -> &[u64] {
        &self.components
    }

    /// Attempts to prove `target`. Records are returned only when proved.
    pub fn run(&self, target: u32) -> Result<(StageReport, Option<Vec<SubstitutionRecord>>)> {
        let run = Run {
            search: self,
            target,
            steps: AtomicU64::new(1),
            stop: AtomicBool::new(false),
        };
        let report = |outcome| StageReport {
            target,
            outcome,
            steps: run.steps.load(Ordering::Relaxed),
        };
        if target < 2 || self.components.is_empty() {
            return Ok((report(SearchOutcome::Failed), None));
        }
        if self.step_limit < 1 {
            return Ok((report(SearchOutcome::Aborted), None));
        }
        let branches: Vec<Result<(Node, Vec<SubstitutionRecord>)>> = (0..self.components.len() as u16)
            .into_par_iter()
            .map(|c| {
                let mut records = Vec::new();
                let mut seq = vec![c];
                let r = run.node(&mut seq, &mut records)?;
                Ok((r, records))
            })
            .collect();
        let mut all = Vec::new();
        let mut failed = false;
        let mut aborted = false;
        for b in branches {
            let (node, records) = b?;
            match node {
                Node::Proved => all.extend(records),
                Node::Failed => failed = true,
                Node::Aborted => aborted = true,
                Node::Cancelled => {}
            }
        }
        let outcome = if failed {
            SearchOutcome::Failed
        } else if aborted {
            SearchOutcome::Aborted
        } else {
            SearchOutcome::Proved
        };
        if outcome == SearchOutcome::Proved {
            Ok((report(outcome), Some(all)))
        } else {
            Ok((report(outcome), None))
        }
    }

    fn child_of(&self, ext: &SmallBasis) -> Result<(u32, WitnessIndex)> {
        let cache = self
            .caches
            .get_or(|| RefCell::new(Cache::new(self.cache_capacity, self.seed)));
        let mut cache = cache.borrow_mut();
        cache.get_or_insert(ext.key(), || self.catalog.canonicalize_words(ext.rows()))
    }
}

impl Run<'_, '_> {
    fn node(&self, seq: &mut Vec<u16>, records: &mut Vec<SubstitutionRecord>) -> Result<Node> {
        if self.stop.load(Ordering::Relaxed) {
            return Ok(Node::Cancelled);
        }
        if self.steps.fetch_add(1, Ordering::Relaxed) + 1 > self.search.step_limit {
            self.stop.store(true, Ordering::Relaxed);
            return Ok(Node::Aborted);
        }
        if let Some(rec) = self.try_prune(seq)? {
            records.push(rec);
            return Ok(Node::Proved);
        }
        if seq.len() as u32 + 1 >= self.target {
            self.stop.store(true, Ordering::Relaxed);
            return Ok(Node::Failed);
        }
        let last = *seq.last().expect("nodes below the root are nonempty");
        for c in last..self.search.components.len() as u16 {
            seq.push(c);
            let r = self.node(seq, records)?;
            seq.pop();
            if r != Node::Proved {
                return Ok(r);
            }
        }
        Ok(Node::Proved)
    }

    /// First pruning sub-list in ascending bitmask order. Only sub-lists that
    /// take every copy of each chosen component are tried: adding copies
    /// never changes the restricted tensor and only raises `|S|`.
    fn try_prune(&self, seq: &[u16]) -> Result<Option<SubstitutionRecord>> {
        let s = self.search;
        let k = seq.len();
        let mut runs: Vec<(u16, u64)> = Vec::new();
        for (i, &c) in seq.iter().enumerate() {
            match runs.last_mut() {
                Some((rc, mask)) if *rc == c => *mask |= 1 << i,
                _ => runs.push((c, 1 << i)),
            }
        }
        let (last_c, last_mask) = *runs.last().expect("nonempty sequence");
        let others = &runs[..runs.len() - 1];
        if others.len() >= 63 {
            return Err(Error::ResourceLimit("too many distinct components in one branch".into()));
        }
        for choice in 0..(1u64 << others.len()) {
            let mut ext = s.base;
            ext.insert(s.components[last_c as usize]);
            let mut subset = last_mask;
            for (i, &(c, mask)) in others.iter().enumerate() {
                if (choice >> i) & 1 == 1 {
                    ext.insert(s.components[c as usize]);
                    subset |= mask;
                }
            }
            let size = subset.count_ones();
            let dim = ext.len();
            if size + s.best_from[dim.min(s.best_from.len() - 1)] < self.target {
                continue;
            }
            ext.sort();
            let (child, idx) = s.child_of(&ext)?;
            let child_bound = s.bounds[child as usize]
                .ok_or_else(|| Error::Internal(format!("orbit {child} consulted before its bound was known")))?;
            if size + child_bound >= self.target {
                debug_assert!(s.catalog.dimension_of(child) > s.dimension);
                let w = s.catalog.witness(idx);
                return Ok(Some(SubstitutionRecord {
                    depth: k as u16,
                    subset,
                    left: w.left.code() as u16,
                    right: w.right.code() as u16,
                    transposed: w.transposed,
                    child,
                }));
            }
        }
        Ok(None)
    }
}

/// Component-index sequences of each record, recovered by walking the
/// search tree the way the verifier does. `None` if the records do not form
/// a complete tree for `target`.
pub fn record_paths(component_count: usize, target: u32, records: &[SubstitutionRecord]) -> Option<Vec<Vec<u16>>> {
    fn walk(n: usize, target: u32, records: &[SubstitutionRecord], pos: &mut usize, seq: &mut Vec<u16>, out: &mut Vec<Vec<u16>>) -> bool {
        let Some(rec) = records.get(*pos) else { return false };
        let k = seq.len();
        if rec.depth as usize == k {
            *pos += 1;
            out.push(seq.clone());
            return true;
        }
        if (rec.depth as usize) < k || k as u32 + 1 >= target {
            return false;
        }
        let last = *seq.last().expect("nonempty");
        for c in last..n as u16 {
            seq.push(c);
            let ok = walk(n, target, records, pos, seq, out);
            seq.pop();
            if !ok {
                return false;
            }
        }
        true
    }
    let mut out = Vec::new();
    let mut pos = 0;
    for c in 0..component_count as u16 {
        if !walk(component_count, target, records, &mut pos, &mut vec![c], &mut out) {
            return None;
        }
    }
    (pos == records.len()).then_some(out)
}
