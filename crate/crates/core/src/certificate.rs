//! Binary proof certificates.
//!
//! Layout (little-endian) is documented in `docs/certificate-format.md`.

use std::fmt::Write as _;
use std::io::{Read, Write};

use thiserror::Error;

use crate::error::Result;
use crate::gf2::{low_mask, rref_words, BitMatrix};
use crate::orbits::{functional_name, SymmetryWitness};
use crate::wire::{Reader, Writer};

pub const CERTIFICATE_MAGIC: &[u8; 4] = b"MM2C";
pub const CERTIFICATE_VERSION: u32 = 1;
/// Field identifier stored in the header (the characteristic).
pub const FIELD_GF2: u8 = 2;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FormatError {
    #[error("bad magic bytes")]
    BadMagic,
    #[error("unsupported version {found} (expected {expected})")]
    Version { expected: u32, found: u32 },
    #[error("checksum mismatch")]
    Crc,
    #[error("malformed data: {0}")]
    Structure(String),
}

fn bad(msg: impl Into<String>) -> FormatError {
    FormatError::Structure(msg.into())
}

fn witness_row(row: u8, width: usize) -> Result<u16, FormatError> {
    if row >> width != 0 {
        return Err(bad(format!("witness row {row:#04x} wider than {width} bits")));
    }
    Ok(row as u16)
}

/// One pruned node of a substitution search.
///
/// `subset` selects positions of the node's component sequence (bit `i` is
/// the `i`-th component). `left`/`right` are row-major matrix codes of the
/// witness, so `L . (rep + S)^(T) . R` reduces to the child representative.
/// Packed to 19 bytes: large proofs hold tens of millions of these.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(C, packed)]
pub struct SubstitutionRecord {
    pub depth: u16,
    pub subset: u64,
    pub left: u16,
    pub right: u16,
    pub transposed: bool,
    pub child: u32,
}

impl SubstitutionRecord {
    pub fn witness(&self, l: usize, m: usize) -> SymmetryWitness {
        SymmetryWitness {
            left: BitMatrix::from_code(l, self.left as u64),
            right: BitMatrix::from_code(m, self.right as u64),
            transposed: self.transposed,
        }
    }
}

/// A successful substitution search for one target value. Records appear in
/// depth-first order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SubstitutionStage {
    pub target: u32,
    pub records: Vec<SubstitutionRecord>,
}

/// How an orbit's bound was obtained.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Technique {
    Flattening,
    /// Forced product on the tensor rotated `rotation` steps.
    ForcedProduct { rotation: u8 },
    /// Extra restrictions leading to a deeper orbit.
    Degenerate { added: Vec<u64> },
    /// Staged substitution searches on top of a base technique; each stage
    /// raises the bound by one.
    Substitution { base: Box<Technique>, stages: Vec<SubstitutionStage> },
}

impl Technique {
    pub fn tag(&self) -> u8 {
        match self {
            Technique::Flattening => 0,
            Technique::ForcedProduct { .. } => 1,
            Technique::Degenerate { .. } => 2,
            Technique::Substitution { .. } => 3,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Technique::Flattening => "flattening",
            Technique::ForcedProduct { .. } => "forced_product",
            Technique::Degenerate { .. } => "degenerate",
            Technique::Substitution { .. } => "substitution",
        }
    }

    /// Total number of pruning records (zero for non-substitution proofs).
    pub fn record_count(&self) -> usize {
        match self {
            Technique::Substitution { stages, .. } => stages.iter().map(|s| s.records.len()).sum(),
            _ => 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CertificateHeader {
    pub l: u8,
    pub m: u8,
    pub n: u8,
    pub square: bool,
    pub field: u8,
    pub final_bound: u32,
    pub step_limit: u64,
    pub fp_bit_cap: u8,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OrbitRecord {
    pub dimension: usize,
    pub basis: Vec<u64>,
    pub bound: u32,
    pub technique: Technique,
}

/// Bound table for one format plus the justification of every entry, in
/// catalog order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Certificate {
    pub header: CertificateHeader,
    pub layer_counts: Vec<u32>,
    pub records: Vec<OrbitRecord>,
}

fn write_simple(w: &mut Writer, t: &Technique) {
    w.u8(t.tag());
    match t {
        Technique::Flattening => {}
        Technique::ForcedProduct { rotation } => w.u8(*rotation),
        Technique::Degenerate { added } => {
            w.u8(added.len() as u8);
            for &a in added {
                w.u64(a);
            }
        }
        Technique::Substitution { .. } => unreachable!("nested substitution"),
    }
}

fn read_simple(r: &mut Reader<'_>, tag: u8) -> Result<Technique, FormatError> {
    Ok(match tag {
        0 => Technique::Flattening,
        1 => Technique::ForcedProduct { rotation: r.u8()? },
        2 => {
            let count = r.u8()? as usize;
            let mut added = Vec::with_capacity(count);
            for _ in 0..count {
                added.push(r.u64()?);
            }
            Technique::Degenerate { added }
        }
        t => return Err(bad(format!("unknown technique tag {t}"))),
    })
}

impl Certificate {
    pub fn l(&self) -> usize {
        self.header.l as usize
    }
    pub fn m(&self) -> usize {
        self.header.m as usize
    }
    pub fn n(&self) -> usize {
        self.header.n as usize
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let (l, m) = (self.l(), self.m());
        let h = &self.header;
        let mut w = Writer::default();
        w.bytes(CERTIFICATE_MAGIC);
        w.u32(CERTIFICATE_VERSION);
        w.u8(h.l);
        w.u8(h.m);
        w.u8(h.n);
        w.u8(h.square as u8);
        w.u8(h.field);
        w.u16(h.final_bound as u16);
        w.u64(h.step_limit);
        w.u8(h.fp_bit_cap);
        for &c in &self.layer_counts {
            w.u32(c);
        }
        for rec in &self.records {
            w.u8(rec.dimension as u8);
            for &b in &rec.basis {
                w.u64(b);
            }
            w.u16(rec.bound as u16);
            match &rec.technique {
                Technique::Substitution { base, stages } => {
                    w.u8(3);
                    write_simple(&mut w, base);
                    w.u16(stages.len() as u16);
                    for st in stages {
                        w.u16(st.target as u16);
                        w.u32(st.records.len() as u32);
                        for r in &st.records {
                            w.u16(r.depth);
                            w.u64(r.subset);
                            for i in 0..l {
                                w.u8(((r.left as u64 >> (i * l)) & low_mask(l)) as u8);
                            }
                            for i in 0..m {
                                w.u8(((r.right as u64 >> (i * m)) & low_mask(m)) as u8);
                            }
                            w.u8(r.transposed as u8);
                            w.u32(r.child);
                        }
                    }
                }
                t => write_simple(&mut w, t),
            }
        }
        w.finish()
    }

    pub fn write_to(&self, mut sink: impl Write) -> Result<usize> {
        let bytes = self.to_bytes();
        sink.write_all(&bytes)?;
        Ok(bytes.len())
    }

    pub fn read_from(mut source: impl Read) -> Result<Self> {
        let mut data = Vec::new();
        source.read_to_end(&mut data)?;
        Ok(Self::from_bytes(&data)?)
    }

    /// Parses and structurally validates a certificate. Mathematical checks
    /// are left to the verifier.
    pub fn from_bytes(data: &[u8]) -> Result<Self, FormatError> {
        let mut r = Reader::open(data, CERTIFICATE_MAGIC, CERTIFICATE_VERSION)?;
        let header = CertificateHeader {
            l: r.u8()?,
            m: r.u8()?,
            n: r.u8()?,
            square: match r.u8()? {
                0 => false,
                1 => true,
                v => return Err(bad(format!("square flag {v}"))),
            },
            field: r.u8()?,
            final_bound: r.u16()? as u32,
            step_limit: r.u64()?,
            fp_bit_cap: r.u8()?,
        };
        let (l, m) = (header.l as usize, header.m as usize);
        if !(1..=4).contains(&l) || !(1..=4).contains(&m) || !(1..=4).contains(&(header.n as usize)) {
            return Err(bad(format!("unsupported format <{},{},{}>", header.l, header.m, header.n)));
        }
        let lm = l * m;
        let mut layer_counts = Vec::with_capacity(lm + 1);
        for _ in 0..=lm {
            layer_counts.push(r.u32()?);
        }
        let total: u64 = layer_counts.iter().map(|&c| c as u64).sum();
        if total > (data.len() as u64) {
            return Err(bad("layer counts exceed data size"));
        }
        let mut records = Vec::with_capacity(total as usize);
        for _ in 0..total {
            let dimension = r.u8()? as usize;
            if dimension > lm {
                return Err(bad(format!("orbit dimension {dimension} exceeds {lm}")));
            }
            let mut basis = Vec::with_capacity(dimension);
            for _ in 0..dimension {
                basis.push(r.u64()?);
            }
            let bound = r.u16()? as u32;
            let tag = r.u8()?;
            let technique = if tag == 3 {
                let base_tag = r.u8()?;
                let base = read_simple(&mut r, base_tag)?;
                let stage_count = r.u16()? as usize;
                let mut stages = Vec::with_capacity(stage_count);
                for _ in 0..stage_count {
                    let target = r.u16()? as u32;
                    let count = r.u32()? as usize;
                    if count > data.len() {
                        return Err(bad("record count exceeds data size"));
                    }
                    let mut recs = Vec::with_capacity(count);
                    for _ in 0..count {
                        let depth = r.u16()?;
                        let subset = r.u64()?;
                        let mut left = 0u16;
                        for i in 0..l {
                            left |= witness_row(r.u8()?, l)? << (i * l);
                        }
                        let mut right = 0u16;
                        for i in 0..m {
                            right |= witness_row(r.u8()?, m)? << (i * m);
                        }
                        let transposed = match r.u8()? {
                            0 => false,
                            1 => true,
                            v => return Err(bad(format!("transpose flag {v}"))),
                        };
                        let child = r.u32()?;
                        recs.push(SubstitutionRecord { depth, subset, left, right, transposed, child });
                    }
                    stages.push(SubstitutionStage { target, records: recs });
                }
                Technique::Substitution { base: Box::new(base), stages }
            } else {
                read_simple(&mut r, tag)?
            };
            records.push(OrbitRecord { dimension, basis, bound, technique });
        }
        r.expect_end()?;
        let cert = Certificate { header, layer_counts, records };
        cert.validate()?;
        Ok(cert)
    }

    /// Structural checks that need no catalog.
    pub fn validate(&self) -> Result<(), FormatError> {
        let h = &self.header;
        let (l, m, n) = (self.l(), self.m(), self.n());
        let lm = l * m;
        if h.field != FIELD_GF2 {
            return Err(bad(format!("field {} is not supported", h.field)));
        }
        if h.square != (l == m && m == n) {
            return Err(bad("square flag disagrees with the format"));
        }
        if self.layer_counts.len() != lm + 1 {
            return Err(bad("wrong number of layer counts"));
        }
        if self.layer_counts[0] != 1 || self.layer_counts[lm] != 1 {
            return Err(bad("first and last layers must hold exactly one orbit"));
        }
        let mut expected_dims = Vec::with_capacity(self.records.len());
        for (d, &c) in self.layer_counts.iter().enumerate() {
            expected_dims.extend(std::iter::repeat_n(d, c as usize));
        }
        if expected_dims.len() != self.records.len() {
            return Err(bad("record count disagrees with layer counts"));
        }
        let space = low_mask(lm);
        let orbit_count = self.records.len() as u64;
        for (id, (rec, &d)) in self.records.iter().zip(&expected_dims).enumerate() {
            let ctx = |msg: String| bad(format!("orbit {id}: {msg}"));
            if rec.dimension != d || rec.basis.len() != d {
                return Err(ctx("dimension out of layer order".into()));
            }
            if rec.basis.iter().any(|&b| b & !space != 0) || rref_words(&rec.basis) != rec.basis {
                return Err(ctx("basis is not a reduced echelon form".into()));
            }
            match &rec.technique {
                Technique::Substitution { base, stages } => {
                    check_simple(base, lm).map_err(ctx)?;
                    let Some(last) = stages.last() else {
                        return Err(ctx("substitution without stages".into()));
                    };
                    if last.target != rec.bound {
                        return Err(ctx("last stage target differs from the bound".into()));
                    }
                    for (i, st) in stages.iter().enumerate() {
                        if i > 0 && st.target != stages[i - 1].target + 1 {
                            return Err(ctx("stage targets are not consecutive".into()));
                        }
                        if st.target < 2 {
                            return Err(ctx("stage target below 2".into()));
                        }
                        for r in &st.records {
                            let depth = r.depth as u32;
                            if depth == 0 || depth >= st.target || depth > 63 {
                                return Err(ctx(format!("record depth {depth} out of range")));
                            }
                            if r.subset >> (depth - 1) != 1 {
                                return Err(ctx("record subset must contain exactly the last position as its top bit".into()));
                            }
                            if r.child as u64 >= orbit_count {
                                return Err(ctx(format!("child orbit {} out of range", { r.child })));
                            }
                            if r.transposed && !h.square {
                                return Err(ctx("transposed witness in a non-square format".into()));
                            }
                        }
                    }
                }
                t => check_simple(t, lm).map_err(ctx)?,
            }
        }
        if self.records[0].bound != h.final_bound {
            return Err(bad("final bound differs from the unrestricted orbit's bound"));
        }
        Ok(())
    }

    /// Human-readable listing of the certificate.
    pub fn dump_text(&self) -> String {
        let (l, m) = (self.l(), self.m());
        let h = &self.header;
        let mut out = String::new();
        let _ = writeln!(
            out,
            "<{},{},{}> over GF(2){}: {} orbits, rank >= {}",
            h.l,
            h.m,
            h.n,
            if h.square { ", transpose symmetry" } else { "" },
            self.records.len(),
            h.final_bound
        );
        let _ = writeln!(out, "step limit {}, forced-product cap {} bits", h.step_limit, h.fp_bit_cap);
        let _ = writeln!(out, "layer counts {:?}", self.layer_counts);
        let names = |words: &[u64]| {
            let parts: Vec<String> = words.iter().map(|&w| functional_name(m, w)).collect();
            format!("{{{}}}", parts.join(", "))
        };
        for (id, rec) in self.records.iter().enumerate() {
            let _ = write!(out, "orbit {id} d={} {} >= {}: ", rec.dimension, names(&rec.basis), rec.bound);
            let simple = |t: &Technique| match t {
                Technique::ForcedProduct { rotation } => format!("forced product (rotation {rotation})"),
                Technique::Degenerate { added } => format!("degenerate + {}", names(added)),
                t => t.name().to_string(),
            };
            match &rec.technique {
                Technique::Substitution { base, stages } => {
                    let _ = writeln!(out, "substitution over {}", simple(base));
                    for st in stages {
                        let _ = writeln!(out, "  target {} ({} records)", st.target, st.records.len());
                        for r in &st.records {
                            let w = r.witness(l, m);
                            let _ = writeln!(
                                out,
                                "  {:indent$}depth {} subset {:0width$b} -> orbit {} L={} R={}{}",
                                "",
                                { r.depth },
                                { r.subset },
                                { r.child },
                                w.left.code(),
                                w.right.code(),
                                if r.transposed { " T" } else { "" },
                                indent = 2 * r.depth as usize,
                                width = r.depth as usize,
                            );
                        }
                    }
                }
                t => {
                    let _ = writeln!(out, "{}", simple(t));
                }
            }
        }
        out
    }
}

fn check_simple(t: &Technique, lm: usize) -> Result<(), String> {
    match t {
        Technique::Flattening => Ok(()),
        Technique::ForcedProduct { rotation } if *rotation < 3 => Ok(()),
        Technique::ForcedProduct { rotation } => Err(format!("rotation {rotation} out of range")),
        Technique::Degenerate { added } => {
            if added.is_empty() || added.len() > lm {
                return Err("degenerate reduction needs 1..=lm functionals".into());
            }
            if added.iter().any(|&a| a == 0 || a & !low_mask(lm) != 0) {
                return Err("degenerate functional out of range".into());
            }
            Ok(())
        }
        Technique::Substitution { .. } => Err("nested substitution".into()),
    }
}

impl From<FormatError> for std::io::Error {
    fn from(e: FormatError) -> Self {
        std::io::Error::new(std::io::ErrorKind::InvalidData, e)
    }
}
