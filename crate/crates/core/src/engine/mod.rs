//! Bound computation over an orbit catalog.
//!
//! Layers are processed from the most restricted (dimension `lm`, the zero
//! tensor) down to the unrestricted orbit. Every technique only consults
//! orbits of strictly larger dimension, so the orbits of one layer are
//! independent and run in parallel.

pub mod forced;
pub mod substitution;

use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::certificate::{Certificate, CertificateHeader, OrbitRecord, Technique, FIELD_GF2};
use crate::error::{Error, Result};
use crate::orbits::{CatalogOptions, OrbitCatalog, RestrictionSet};
use crate::sharded::DEFAULT_SHARDS;
use crate::tensor::{build_restricted_tensor, Tensor3};

pub use forced::{analyze_rotation, bound_forced_product, RotationAnalysis};
pub use substitution::{record_paths, SearchOutcome, StageReport, SubstitutionSearch};

pub const DEFAULT_STEP_LIMIT: u64 = 10_000_000;
pub const DEFAULT_FP_BIT_CAP: usize = 32;
pub const DEFAULT_CACHE_CAPACITY: usize = 3_000_000;

#[derive(Clone, Debug)]
pub struct EngineConfig {
    /// Node budget per substitution attempt (one orbit, one target).
    pub step_limit: u64,
    /// Forced-product rotations with this many unknown bits or more are skipped.
    pub fp_bit_cap: usize,
    /// Entries per thread-local canonicalization cache.
    pub cache_capacity: usize,
    pub shard_count: usize,
    /// Worker threads; 0 uses the default pool.
    pub thread_count: usize,
    /// Byte budget for the catalog's form table.
    pub memory_budget: Option<usize>,
    /// Substitution never attempts targets above this value.
    pub global_target: Option<u32>,
    /// Seed for cache eviction.
    pub seed: u64,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            step_limit: DEFAULT_STEP_LIMIT,
            fp_bit_cap: DEFAULT_FP_BIT_CAP,
            cache_capacity: DEFAULT_CACHE_CAPACITY,
            shard_count: DEFAULT_SHARDS,
            thread_count: 0,
            memory_budget: None,
            global_target: None,
            seed: 0x6d6d_726b,
        }
    }
}

impl EngineConfig {
    /// Runs `f` on a pool with `thread_count` threads (or the global pool).
    pub fn install<R: Send>(&self, f: impl FnOnce() -> R + Send) -> Result<R> {
        if self.thread_count == 0 {
            return Ok(f());
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.thread_count)
            .build()
            .map_err(|e| Error::Internal(format!("thread pool: {e}")))?;
        Ok(pool.install(f))
    }

    pub fn catalog_options(&self) -> CatalogOptions {
        CatalogOptions {
            memory_budget: self.memory_budget,
            shard_count: self.shard_count,
        }
    }
}

/// Bound for one orbit and how it was justified.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BoundEntry {
    pub orbit: u32,
    pub bound: u32,
    pub technique: Technique,
}

/// Per-orbit diagnostics, one JSON line each in the CLI summary.
#[derive(Clone, Debug, Serialize)]
pub struct OrbitSummary {
    pub orbit: u32,
    pub dimension: usize,
    pub bound: u32,
    pub technique: &'static str,
    pub flattening: u32,
    pub forced_product: Option<u32>,
    pub degenerate: Option<u32>,
    pub stages: Vec<StageReport>,
    pub steps: u64,
    pub millis: f64,
    /// Smallest dimension of any orbit consulted; always above `dimension`.
    pub min_child_dimension: Option<usize>,
}

pub struct ProofRun {
    pub l: usize,
    pub m: usize,
    pub n: usize,
    pub catalog: OrbitCatalog,
    pub entries: Vec<BoundEntry>,
    pub summaries: Vec<OrbitSummary>,
    pub certificate: Certificate,
    pub millis: f64,
}

impl ProofRun {
    pub fn bounds(&self) -> Vec<u32> {
        self.entries.iter().map(|e| e.bound).collect()
    }

    pub fn final_bound(&self) -> u32 {
        self.entries[0].bound
    }
}

pub fn bound_flattening(t: &Tensor3) -> u32 {
    t.max_flattening_rank() as u32
}

/// Best single-step degeneration: add one nonzero functional supported on
/// the free variables and read the child's bound. Ties keep the smallest
/// functional. `None` for the fully restricted orbit.
pub fn bound_degenerate(catalog: &OrbitCatalog, bounds: &[Option<u32>], set: &RestrictionSet) -> Result<Option<(u32, u64, u32)>> {
    let free = set.free_mask();
    let mut best: Option<(u32, u64, u32)> = None;
    let mut sub = 0u64;
    loop {
        sub = sub.wrapping_sub(free) & free;
        if sub == 0 {
            break;
        }
        let mut words = set.basis().to_vec();
        words.push(sub);
        let (child, _) = catalog.canonicalize_words(&words)?;
        let b = bounds[child as usize]
            .ok_or_else(|| Error::Internal(format!("orbit {child} consulted before its bound was known")))?;
        if best.is_none_or(|(bb, _, _)| b > bb) {
            best = Some((b, sub, child));
        }
    }
    Ok(best)
}

/// Computes the bound table for `<l,m,n>` with restrictions on `A`.
pub fn prove_format(l: usize, m: usize, n: usize, cfg: &EngineConfig) -> Result<ProofRun> {
    prove_format_with(l, m, n, cfg, &|_| {})
}

/// Like [`prove_format`], calling `progress` as each orbit finishes.
pub fn prove_format_with(
    l: usize,
    m: usize,
    n: usize,
    cfg: &EngineConfig,
    progress: &(dyn Fn(&OrbitSummary) + Sync),
) -> Result<ProofRun> {
    if !(1..=4).contains(&l) || !(1..=4).contains(&m) || !(1..=4).contains(&n) {
        return Err(Error::Unsupported(format!("<{l},{m},{n}>: dimensions must be between 1 and 4")));
    }
    if cfg.fp_bit_cap > 255 {
        return Err(Error::Unsupported("forced-product cap must fit in a byte".into()));
    }
    cfg.install(|| prove_inner(l, m, n, cfg, progress))?
}

fn prove_inner(l: usize, m: usize, n: usize, cfg: &EngineConfig, progress: &(dyn Fn(&OrbitSummary) + Sync)) -> Result<ProofRun> {
    let start = Instant::now();
    let square = l == m && m == n;
    let catalog = OrbitCatalog::enumerate(l, m, square, &cfg.catalog_options())?;
    let lm = l * m;
    let mut bounds: Vec<Option<u32>> = vec![None; catalog.len()];
    let mut entries: Vec<Option<BoundEntry>> = vec![None; catalog.len()];
    let mut summaries: Vec<Option<OrbitSummary>> = vec![None; catalog.len()];

    for d in (0..=lm).rev() {
        let layer = catalog.layer(d);
        let results: Vec<Result<(BoundEntry, OrbitSummary)>> = layer
            .par_iter()
            .map(|orbit| {
                let r = prove_orbit(&catalog, &bounds, orbit.id, n, cfg);
                if let Ok((_, summary)) = &r {
                    progress(summary);
                }
                r
            })
            .collect();
        for r in results {
            let (entry, summary) = r?;
            bounds[entry.orbit as usize] = Some(entry.bound);
            summaries[entry.orbit as usize] = Some(summary);
            let slot = entry.orbit as usize;
            entries[slot] = Some(entry);
        }
    }

    let entries: Vec<BoundEntry> = entries.into_iter().map(|e| e.expect("every orbit processed")).collect();
    let summaries: Vec<OrbitSummary> = summaries.into_iter().map(|s| s.expect("every orbit processed")).collect();
    let certificate = Certificate {
        header: CertificateHeader {
            l: l as u8,
            m: m as u8,
            n: n as u8,
            square,
            field: FIELD_GF2,
            final_bound: entries[0].bound,
            step_limit: cfg.step_limit,
            fp_bit_cap: cfg.fp_bit_cap as u8,
        },
        layer_counts: catalog.layer_counts().iter().map(|&c| c as u32).collect(),
        records: entries
            .iter()
            .map(|e| {
                let rep = catalog.representative(e.orbit);
                OrbitRecord {
                    dimension: rep.dimension(),
                    basis: rep.basis().to_vec(),
                    bound: e.bound,
                    technique: e.technique.clone(),
                }
            })
            .collect(),
    };
    Ok(ProofRun {
        l,
        m,
        n,
        catalog,
        entries,
        summaries,
        certificate,
        millis: start.elapsed().as_secs_f64() * 1e3,
    })
}

fn prove_orbit(
    catalog: &OrbitCatalog,
    bounds: &[Option<u32>],
    id: u32,
    n: usize,
    cfg: &EngineConfig,
) -> Result<(BoundEntry, OrbitSummary)> {
    let start = Instant::now();
    let (l, m) = (catalog.l(), catalog.m());
    let rep = catalog.representative(id);
    let d = rep.dimension();
    let tensor = build_restricted_tensor(l, m, n, rep)?;
    let flat = bound_flattening(&tensor);

    let degenerate = if d < l * m { bound_degenerate(catalog, bounds, rep)? } else { None };
    let deg = degenerate.map_or(0, |(b, _, _)| b);
    let floor = (flat + 1).max(deg) as usize;
    let fp = bound_forced_product(&tensor, cfg.fp_bit_cap, floor);

    let mut min_child = degenerate.map(|(_, _, c)| catalog.dimension_of(c));
    let fp_bound = fp.map_or(0, |(b, _)| b as u32);
    let base = flat.max(deg).max(fp_bound);
    let base_technique = if flat == base {
        Technique::Flattening
    } else if fp_bound == base {
        Technique::ForcedProduct { rotation: fp.expect("forced product attained the bound").1 }
    } else {
        let (_, added, _) = degenerate.expect("degeneration attained the bound");
        Technique::Degenerate { added: vec![added] }
    };

    let search = substitution::SubstitutionSearch::new(catalog, bounds, rep, cfg);
    let mut stages = Vec::new();
    let mut reports = Vec::new();
    let mut bound = base;
    let mut steps = 0;
    if d < l * m {
        loop {
            let target = bound + 1;
            if cfg.global_target.is_some_and(|g| target > g) {
                break;
            }
            let (report, records) = search.run(target)?;
            steps += report.steps;
            let proved = report.outcome == SearchOutcome::Proved;
            reports.push(report);
            match records {
                Some(records) if proved => {
                    for r in &records {
                        let cd = catalog.dimension_of(r.child);
                        min_child = Some(min_child.map_or(cd, |c: usize| c.min(cd)));
                    }
                    stages.push(crate::certificate::SubstitutionStage { target, records });
                    bound = target;
                }
                _ => break,
            }
        }
    }
    let technique = if stages.is_empty() {
        base_technique
    } else {
        Technique::Substitution { base: Box::new(base_technique), stages }
    };
    let summary = OrbitSummary {
        orbit: id,
        dimension: d,
        bound,
        technique: technique.name(),
        flattening: flat,
        forced_product: fp.map(|(b, _)| b as u32),
        degenerate: degenerate.map(|(b, _, _)| b),
        stages: reports,
        steps,
        millis: start.elapsed().as_secs_f64() * 1e3,
        min_child_dimension: min_child,
    };
    Ok((BoundEntry { orbit: id, bound, technique }, summary))
}

/// Nonzero words supported on `mask`, ascending.
pub(crate) fn submasks_ascending(mask: u64) -> Vec<u64> {
    let mut out = Vec::new();
    let mut sub = 0u64;
    loop {
        sub = sub.wrapping_sub(mask) & mask;
        if sub == 0 {
            return out;
        }
        out.push(sub);
    }
}
