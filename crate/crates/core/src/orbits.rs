//! Orbits of restriction subspaces under left/right base change.
//!
//! A restriction on an `l x m` matrix `A` is a linear functional, stored as an
//! `l*m`-bit word (see [`crate::gf2`]). The group `GL_l x GL_m` acts on a set of
//! functionals by `M -> L M R`; when the format is square (`l = m = n`) the
//! transpose `M -> L M^T R` joins the group. Catalogs list one representative
//! per orbit, grouped by the number of restrictions.

use std::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use rayon::prelude::*;

use crate::certificate::FormatError;
use crate::error::{Error, Result};
use crate::gf2::{self, enumerate_gl, gl_order, insert_reduced, BitMatrix};
use crate::sharded::{ShardedMap, DEFAULT_SHARDS};
use crate::wire::{Reader, Writer};

pub const MAX_FUNCTIONAL_BITS: usize = 16;

/// Bytes charged per stored right-normalized form when checking the memory
/// budget (key, value and hash table overhead).
const BYTES_PER_FORM: usize = 56;

const CATALOG_MAGIC: &[u8; 4] = b"MM2O";
const CATALOG_VERSION: u32 = 1;

/// Names a functional as a sum of `a_{i,j}` variables.
pub fn functional_name(m: usize, word: u64) -> String {
    if word == 0 {
        return "0".into();
    }
    let terms: Vec<String> = (0..64)
        .filter(|b| (word >> b) & 1 == 1)
        .map(|b| format!("a_{{{},{}}}", b / m, b % m))
        .collect();
    terms.join("+")
}

/// A subspace of functionals, held as its RREF basis.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct RestrictionSet {
    l: usize,
    m: usize,
    basis: Vec<u64>,
}

impl RestrictionSet {
    /// Spans the given functionals; the stored basis is their RREF.
    pub fn new(l: usize, m: usize, functionals: &[u64]) -> Result<Self> {
        check_shape(l, m)?;
        let width = gf2::low_mask(l * m);
        if let Some(w) = functionals.iter().find(|&&w| w & !width != 0) {
            return Err(Error::DimensionMismatch(format!(
                "functional {w:#x} has bits outside a {l}x{m} matrix"
            )));
        }
        Ok(Self {
            l,
            m,
            basis: gf2::rref_words(functionals),
        })
    }

    pub fn empty(l: usize, m: usize) -> Self {
        Self { l, m, basis: Vec::new() }
    }

    pub(crate) fn from_rref_unchecked(l: usize, m: usize, basis: Vec<u64>) -> Self {
        Self { l, m, basis }
    }

    pub fn l(&self) -> usize {
        self.l
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn basis(&self) -> &[u64] {
        &self.basis
    }

    /// Number of independent restrictions (the codimension of the restricted
    /// A-space).
    pub fn dimension(&self) -> usize {
        self.basis.len()
    }

    pub fn pivot_mask(&self) -> u64 {
        self.basis.iter().fold(0, |acc, &w| acc | (1u64 << gf2::pivot(w).unwrap()))
    }

    /// Bits of variables left free by the restrictions.
    pub fn free_mask(&self) -> u64 {
        gf2::low_mask(self.l * self.m) & !self.pivot_mask()
    }

    /// Free variable bit indices in ascending order.
    pub fn free_variables(&self) -> Vec<usize> {
        let free = self.free_mask();
        (0..self.l * self.m).filter(|b| (free >> b) & 1 == 1).collect()
    }

    pub fn extend(&self, functionals: &[u64]) -> Result<Self> {
        let mut all = self.basis.clone();
        all.extend_from_slice(functionals);
        Self::new(self.l, self.m, &all)
    }

    pub fn contains(&self, functional: u64) -> bool {
        gf2::reduce(&self.basis, functional) == 0
    }

    pub fn matrices(&self) -> Vec<BitMatrix> {
        self.basis.iter().map(|&w| functional_matrix(self.l, self.m, w)).collect()
    }
}

impl fmt::Debug for RestrictionSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<String> = self.basis.iter().map(|&w| functional_name(self.m, w)).collect();
        write!(f, "{{{}}}", names.join(", "))
    }
}

fn check_shape(l: usize, m: usize) -> Result<()> {
    if !(1..=4).contains(&l) || !(1..=4).contains(&m) {
        return Err(Error::Unsupported(format!("{l}x{m} restriction space")));
    }
    Ok(())
}

pub fn functional_matrix(l: usize, m: usize, word: u64) -> BitMatrix {
    let rows: Vec<u64> = (0..l).map(|i| (word >> (i * m)) & gf2::low_mask(m)).collect();
    BitMatrix::from_row_words(m, &rows)
}

pub fn matrix_functional(mat: &BitMatrix) -> u64 {
    let m = mat.cols();
    (0..mat.rows()).fold(0, |acc, i| acc | (mat.row_word(i) << (i * m)))
}

/// The symmetry `M -> L M R`, or `M -> L M^T R` when `transposed`.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct SymmetryWitness {
    pub left: BitMatrix,
    pub right: BitMatrix,
    pub transposed: bool,
}

impl SymmetryWitness {
    pub fn identity(l: usize, m: usize) -> Self {
        Self {
            left: BitMatrix::identity(l),
            right: BitMatrix::identity(m),
            transposed: false,
        }
    }

    /// Checks shapes and invertibility against an `l x m` restriction space.
    pub fn validate(&self, l: usize, m: usize) -> Result<()> {
        let shapes_ok = self.left.rows() == l
            && self.left.cols() == l
            && self.right.rows() == m
            && self.right.cols() == m
            && (!self.transposed || l == m);
        if !shapes_ok {
            return Err(Error::DimensionMismatch("symmetry witness shape".into()));
        }
        if !self.left.is_invertible()? || !self.right.is_invertible()? {
            return Err(Error::DimensionMismatch("symmetry witness is singular".into()));
        }
        Ok(())
    }

    /// Maps every restriction through the symmetry using plain matrix
    /// products, then re-reduces.
    pub fn apply(&self, set: &RestrictionSet) -> Result<RestrictionSet> {
        self.validate(set.l, set.m)?;
        let mut images = Vec::with_capacity(set.basis.len());
        for &w in &set.basis {
            let mut mat = functional_matrix(set.l, set.m, w);
            if self.transposed {
                mat = mat.transpose();
            }
            let img = self.left.mul(&mat)?.mul(&self.right)?;
            images.push(matrix_functional(&img));
        }
        RestrictionSet::new(set.l, set.m, &images)
    }
}

impl fmt::Debug for SymmetryWitness {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "Witness(L={:#x}, R={:#x}, T={})",
            self.left.code(),
            self.right.code(),
            self.transposed
        )
    }
}

/// A linear map on functional words, evaluated through per-nibble tables.
#[derive(Clone)]
pub(crate) struct WordMap {
    tables: [[u16; 16]; 4],
}

impl WordMap {
    fn from_basis_images(images: &[u64]) -> Self {
        debug_assert!(images.len() <= MAX_FUNCTIONAL_BITS);
        let mut tables = [[0u16; 16]; 4];
        for (nib, table) in tables.iter_mut().enumerate() {
            for (v, slot) in table.iter_mut().enumerate() {
                let mut acc = 0u64;
                for k in 0..4 {
                    let bit = nib * 4 + k;
                    if (v >> k) & 1 == 1 && bit < images.len() {
                        acc ^= images[bit];
                    }
                }
                *slot = acc as u16;
            }
        }
        Self { tables }
    }

    #[inline]
    pub fn apply(&self, w: u64) -> u64 {
        (self.tables[0][(w & 15) as usize]
            ^ self.tables[1][((w >> 4) & 15) as usize]
            ^ self.tables[2][((w >> 8) & 15) as usize]
            ^ self.tables[3][((w >> 12) & 15) as usize]) as u64
    }
}

/// Fixed-capacity RREF accumulator for up to 16 functionals.
#[derive(Clone, Copy)]
pub(crate) struct SmallBasis {
    rows: [u64; MAX_FUNCTIONAL_BITS],
    len: usize,
}

impl SmallBasis {
    pub fn new() -> Self {
        Self {
            rows: [0; MAX_FUNCTIONAL_BITS],
            len: 0,
        }
    }

    pub fn from_rref(rows: &[u64]) -> Self {
        let mut b = Self::new();
        b.rows[..rows.len()].copy_from_slice(rows);
        b.len = rows.len();
        b
    }

    #[inline]
    pub fn insert(&mut self, mut word: u64) -> bool {
        for &row in &self.rows[..self.len] {
            let p = 63 - row.leading_zeros();
            if (word >> p) & 1 == 1 {
                word ^= row;
            }
        }
        if word == 0 {
            return false;
        }
        let p = 63 - word.leading_zeros();
        for row in &mut self.rows[..self.len] {
            if (*row >> p) & 1 == 1 {
                *row ^= word;
            }
        }
        self.rows[self.len] = word;
        self.len += 1;
        true
    }

    #[inline]
    pub fn sort(&mut self) {
        let rows = &mut self.rows[..self.len];
        for i in 1..rows.len() {
            let mut j = i;
            while j > 0 && rows[j - 1] < rows[j] {
                rows.swap(j - 1, j);
                j -= 1;
            }
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn rows(&self) -> &[u64] {
        &self.rows[..self.len]
    }

    /// Packs the (sorted) rows into a fixed-width hash key.
    #[inline]
    pub fn key(&self) -> SubspaceKey {
        let mut k = [0u64; 4];
        for (i, &r) in self.rows[..self.len].iter().enumerate() {
            k[i / 4] |= r << ((i % 4) * 16);
        }
        SubspaceKey(k)
    }
}

/// An RREF basis packed 16 bits per row. Rows are nonzero, so the packing is
/// injective across dimensions.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub(crate) struct SubspaceKey([u64; 4]);

/// Location of a right-normalized form: the orbit and the index of `R^-1` in
/// the right group list.
#[derive(Clone, Copy, Debug)]
struct FormEntry {
    orbit: u32,
    right_inverse: u16,
}

/// Group elements and their word-level actions.
pub(crate) struct GroupTables {
    pub gl_left: Vec<BitMatrix>,
    pub gl_right: Vec<BitMatrix>,
    left: Vec<WordMap>,
    left_transposed: Vec<WordMap>,
    right: Vec<WordMap>,
    right_inverse: Vec<u16>,
}

impl GroupTables {
    fn new(l: usize, m: usize, square: bool) -> Self {
        let lm = l * m;
        let gl_left = enumerate_gl(l);
        let gl_right = enumerate_gl(m);
        let left: Vec<WordMap> = gl_left
            .iter()
            .map(|lmat| {
                let images: Vec<u64> = (0..lm)
                    .map(|bit| {
                        let (k, j) = (bit / m, bit % m);
                        (0..l).filter(|&i| lmat.get(i, k)).fold(0, |acc, i| acc | 1 << (i * m + j))
                    })
                    .collect();
                WordMap::from_basis_images(&images)
            })
            .collect();
        let left_transposed = if square {
            gl_left
                .iter()
                .zip(&left)
                .map(|(_, lmap)| {
                    // M -> L M^T: transpose first, then the left action.
                    let images: Vec<u64> = (0..lm)
                        .map(|bit| {
                            let (i, j) = (bit / m, bit % m);
                            lmap.apply(1 << (j * m + i))
                        })
                        .collect();
                    WordMap::from_basis_images(&images)
                })
                .collect()
        } else {
            Vec::new()
        };
        let right = gl_right
            .iter()
            .map(|rmat| {
                let images: Vec<u64> = (0..lm)
                    .map(|bit| {
                        let (i, j) = (bit / m, bit % m);
                        (0..m).filter(|&c| rmat.get(j, c)).fold(0, |acc, c| acc | 1 << (i * m + c))
                    })
                    .collect();
                WordMap::from_basis_images(&images)
            })
            .collect();
        let right_inverse = gl_right
            .iter()
            .map(|r| {
                let inv = r.inverse().expect("GL element is invertible");
                gl_right.binary_search_by_key(&inv.code(), BitMatrix::code).expect("inverse in GL") as u16
            })
            .collect();
        Self {
            gl_left,
            gl_right,
            left,
            left_transposed,
            right,
            right_inverse,
        }
    }
}

/// Indices of a symmetry inside a catalog's group tables.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub struct WitnessIndex {
    pub left: u16,
    pub right: u16,
    pub transposed: bool,
}

#[derive(Clone, Debug)]
pub struct Orbit {
    pub id: u32,
    pub representative: RestrictionSet,
}

impl Orbit {
    pub fn dimension(&self) -> usize {
        self.representative.dimension()
    }
}

/// All orbits of restriction subspaces for one `l x m` space.
pub struct OrbitCatalog {
    l: usize,
    m: usize,
    square: bool,
    orbits: Vec<Orbit>,
    layer_start: Vec<usize>,
    lookup: ShardedMap<SubspaceKey, FormEntry>,
    group: GroupTables,
}

/// Options for catalog construction.
#[derive(Clone, Debug)]
pub struct CatalogOptions {
    pub memory_budget: Option<usize>,
    pub shard_count: usize,
}

impl Default for CatalogOptions {
    fn default() -> Self {
        Self {
            memory_budget: None,
            shard_count: DEFAULT_SHARDS,
        }
    }
}

/// Enumerates orbit representatives layer by layer.
pub fn enumerate_orbits(l: usize, m: usize, square: bool) -> Result<OrbitCatalog> {
    OrbitCatalog::enumerate(l, m, square, &CatalogOptions::default())
}

impl OrbitCatalog {
    fn empty(l: usize, m: usize, square: bool, opts: &CatalogOptions) -> Result<Self> {
        check_shape(l, m)?;
        if square && l != m {
            return Err(Error::Unsupported(format!("transpose symmetry on a {l}x{m} space")));
        }
        Ok(Self {
            l,
            m,
            square,
            orbits: Vec::new(),
            layer_start: vec![0],
            lookup: ShardedMap::new(opts.shard_count),
            group: GroupTables::new(l, m, square),
        })
    }

    pub fn enumerate(l: usize, m: usize, square: bool, opts: &CatalogOptions) -> Result<Self> {
        let mut cat = Self::empty(l, m, square, opts)?;
        let lm = l * m;
        let budget = opts.memory_budget.unwrap_or(usize::MAX);

        cat.accept(SmallBasis::new(), budget)?;
        cat.layer_start.push(cat.orbits.len());

        for dim in 1..=lm {
            let prev = cat.layer_start[dim - 1]..cat.layer_start[dim];
            let mut candidates: Vec<SmallBasis> = Vec::new();
            for id in prev {
                let rep = cat.orbits[id].representative.basis().to_vec();
                let base = SmallBasis::from_rref(&rep);
                let free = cat.orbits[id].representative.free_mask();
                // Ascending nonzero words supported on the free bits.
                let mut x: u64 = 0;
                loop {
                    x = ((x | !free).wrapping_add(1)) & free;
                    if x == 0 {
                        break;
                    }
                    let mut ext = base;
                    ext.insert(x);
                    ext.sort();
                    candidates.push(ext);
                }
            }
            for chunk in candidates.chunks(2048) {
                let known: Vec<bool> = chunk.par_iter().map(|c| cat.probe(c.rows()).is_some()).collect();
                for (cand, seen) in chunk.iter().zip(known) {
                    if !seen && cat.probe(cand.rows()).is_none() {
                        cat.accept(*cand, budget)?;
                    }
                }
            }
            cat.layer_start.push(cat.orbits.len());
        }
        Ok(cat)
    }

    /// Rebuilds a catalog from stored representatives, one list per layer.
    pub fn from_representatives(l: usize, m: usize, square: bool, layers: &[Vec<Vec<u64>>]) -> Result<Self> {
        let mut cat = Self::empty(l, m, square, &CatalogOptions::default())?;
        if layers.len() != l * m + 1 {
            return Err(Error::DimensionMismatch(format!(
                "expected {} layers, got {}",
                l * m + 1,
                layers.len()
            )));
        }
        for (dim, layer) in layers.iter().enumerate() {
            for rep in layer {
                let set = RestrictionSet::new(l, m, rep)?;
                if set.basis() != rep.as_slice() || set.dimension() != dim {
                    return Err(Error::DimensionMismatch(format!(
                        "representative {rep:?} is not an RREF basis of dimension {dim}"
                    )));
                }
                if cat.probe(rep).is_some() {
                    return Err(Error::Internal(format!("representative {set:?} duplicates an earlier orbit")));
                }
                cat.accept(SmallBasis::from_rref(rep), usize::MAX)?;
            }
            cat.layer_start.push(cat.orbits.len());
        }
        Ok(cat)
    }

    fn accept(&mut self, rep: SmallBasis, budget: usize) -> Result<()> {
        let projected = (self.lookup.len() + self.group.gl_right.len()) * BYTES_PER_FORM;
        if projected > budget {
            return Err(Error::ResourceLimit(format!(
                "orbit catalog needs more than {budget} bytes ({} orbits so far)",
                self.orbits.len()
            )));
        }
        let id = self.orbits.len() as u32;
        for (ri, rmap) in self.group.right.iter().enumerate() {
            let mut form = SmallBasis::new();
            for &w in rep.rows() {
                form.insert(rmap.apply(w));
            }
            form.sort();
            self.lookup.insert_if_absent(
                form.key(),
                FormEntry {
                    orbit: id,
                    right_inverse: self.group.right_inverse[ri],
                },
            );
        }
        self.orbits.push(Orbit {
            id,
            representative: RestrictionSet::from_rref_unchecked(self.l, self.m, rep.rows().to_vec()),
        });
        Ok(())
    }

    /// Looks up the orbit of a basis by enumerating left actions (and the
    /// transpose) against the stored right-normalized forms.
    fn probe(&self, basis: &[u64]) -> Option<(u32, WitnessIndex)> {
        let passes: &[(bool, &Vec<WordMap>)] = if self.square {
            &[(false, &self.group.left), (true, &self.group.left_transposed)]
        } else {
            &[(false, &self.group.left)]
        };
        for &(transposed, maps) in passes {
            for (li, lmap) in maps.iter().enumerate() {
                let mut form = SmallBasis::new();
                for &w in basis {
                    form.insert(lmap.apply(w));
                }
                form.sort();
                if let Some(entry) = self.lookup.get(&form.key()) {
                    return Some((
                        entry.orbit,
                        WitnessIndex {
                            left: li as u16,
                            right: entry.right_inverse,
                            transposed,
                        },
                    ));
                }
            }
        }
        None
    }

    /// Orbit of an arbitrary generating set (not necessarily reduced).
    pub(crate) fn canonicalize_words(&self, words: &[u64]) -> Result<(u32, WitnessIndex)> {
        let mut b = SmallBasis::new();
        for &w in words {
            b.insert(w);
        }
        b.sort();
        self.probe(b.rows())
            .ok_or_else(|| Error::Internal(format!("no orbit matches restriction basis {:?}", b.rows())))
    }

    /// Orbit id and a symmetry `g` with `g . s` equal to the representative.
    pub fn canonicalize(&self, set: &RestrictionSet) -> Result<(u32, SymmetryWitness)> {
        if set.l != self.l || set.m != self.m {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} restriction set against a {}x{} catalog",
                set.l, set.m, self.l, self.m
            )));
        }
        let (id, idx) = self.canonicalize_words(set.basis())?;
        Ok((id, self.witness(idx)))
    }

    pub fn witness(&self, idx: WitnessIndex) -> SymmetryWitness {
        SymmetryWitness {
            left: self.group.gl_left[idx.left as usize].clone(),
            right: self.group.gl_right[idx.right as usize].clone(),
            transposed: idx.transposed,
        }
    }

    pub fn l(&self) -> usize {
        self.l
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn square(&self) -> bool {
        self.square
    }

    pub fn len(&self) -> usize {
        self.orbits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.orbits.is_empty()
    }

    pub fn orbits(&self) -> &[Orbit] {
        &self.orbits
    }

    pub fn orbit(&self, id: u32) -> &Orbit {
        &self.orbits[id as usize]
    }

    pub fn representative(&self, id: u32) -> &RestrictionSet {
        &self.orbits[id as usize].representative
    }

    pub fn dimension_of(&self, id: u32) -> usize {
        self.orbits[id as usize].dimension()
    }

    /// Orbits with exactly `dim` restrictions.
    pub fn layer(&self, dim: usize) -> &[Orbit] {
        &self.orbits[self.layer_start[dim]..self.layer_start[dim + 1]]
    }

    pub fn layer_counts(&self) -> Vec<usize> {
        self.layer_start.windows(2).map(|w| w[1] - w[0]).collect()
    }

    /// Id of the orbit with no restrictions.
    pub fn unrestricted(&self) -> u32 {
        0
    }

    pub fn stored_forms(&self) -> usize {
        self.lookup.len()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::default();
        w.bytes(CATALOG_MAGIC);
        w.u32(CATALOG_VERSION);
        w.u8(self.l as u8);
        w.u8(self.m as u8);
        w.u8(u8::from(self.square));
        w.u8(2);
        for c in self.layer_counts() {
            w.u32(c as u32);
        }
        for orbit in &self.orbits {
            w.u8(orbit.dimension() as u8);
            for &word in orbit.representative.basis() {
                w.u64(word);
            }
        }
        w.finish()
    }

    pub fn from_bytes(data: &[u8]) -> Result<Self> {
        let mut r = Reader::open(data, CATALOG_MAGIC, CATALOG_VERSION)?;
        let (l, m, square, field) = (r.u8()? as usize, r.u8()? as usize, r.u8()?, r.u8()?);
        if field != 2 || square > 1 || !(1..=4).contains(&l) || !(1..=4).contains(&m) {
            return Err(FormatError::Structure("bad catalog header".into()).into());
        }
        let counts: Vec<usize> = (0..=l * m).map(|_| r.u32().map(|c| c as usize)).collect::<Result<_, _>>()?;
        let mut layers = Vec::with_capacity(counts.len());
        for (dim, &count) in counts.iter().enumerate() {
            let mut layer = Vec::with_capacity(count);
            for _ in 0..count {
                if r.u8()? as usize != dim {
                    return Err(FormatError::Structure("orbit dimension out of layer order".into()).into());
                }
                layer.push((0..dim).map(|_| r.u64()).collect::<Result<Vec<_>, _>>()?);
            }
            layers.push(layer);
        }
        r.expect_end()?;
        Self::from_representatives(l, m, square == 1, &layers)
    }
}

/// Rank distribution and left/right point profiles of a subspace.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OrbitInvariants {
    pub rank_distribution: Vec<u64>,
    pub left_profile: Vec<u64>,
    pub right_profile: Vec<u64>,
}

impl OrbitInvariants {
    /// Equality as invariants of the group; with the transpose the two
    /// profiles are compared as an unordered pair.
    pub fn compatible(&self, other: &Self, square: bool) -> bool {
        if self.rank_distribution != other.rank_distribution {
            return false;
        }
        let direct = self.left_profile == other.left_profile && self.right_profile == other.right_profile;
        direct
            || (square && self.left_profile == other.right_profile && self.right_profile == other.left_profile)
    }
}

pub fn orbit_invariants(set: &RestrictionSet) -> OrbitInvariants {
    let (l, m) = (set.l, set.m);
    let mats: Vec<Vec<u64>> = set
        .basis
        .iter()
        .map(|&w| (0..l).map(|i| (w >> (i * m)) & gf2::low_mask(m)).collect())
        .collect();
    let d = mats.len();

    let mut rank_distribution = vec![0u64; l.min(m) + 1];
    for combo in 0u64..(1 << d) {
        let w = (0..d).filter(|k| (combo >> k) & 1 == 1).fold(0, |acc, k| acc ^ set.basis[k]);
        rank_distribution[functional_matrix(l, m, w).rank()] += 1;
    }

    let mut left_profile = vec![0u64; m + 1];
    for x in 0u64..(1 << l) {
        // Row k is x^T B_k.
        let rows: Vec<u64> = mats
            .iter()
            .map(|b| (0..l).filter(|i| (x >> i) & 1 == 1).fold(0, |acc, i| acc ^ b[i]))
            .collect();
        left_profile[BitMatrix::from_row_words(m, &rows).rank()] += 1;
    }

    let mut right_profile = vec![0u64; l + 1];
    for x in 0u64..(1 << m) {
        // Column k is B_k x.
        let cols: Vec<u64> = mats
            .iter()
            .map(|b| (0..l).fold(0, |acc, i| acc | (u64::from((b[i] & x).count_ones() & 1)) << i))
            .collect();
        right_profile[BitMatrix::from_row_words(l, &cols).rank()] += 1;
    }

    OrbitInvariants {
        rank_distribution,
        left_profile,
        right_profile,
    }
}

/// Exact value of `sum_d 2^(lmd) / (|GL_l| |GL_m| |GL_d| |T|)`, a lower bound
/// on the number of orbits.
pub fn orbit_count_lower_bound(l: usize, m: usize, square: bool) -> BigRational {
    let lm = l * m;
    let t = if square { 2u64 } else { 1 };
    let mut total = BigRational::from_integer(BigInt::from(0));
    for d in 0..=lm {
        let num = BigInt::from(1) << (lm * d);
        let den = gl_order_big(l) * gl_order_big(m) * gl_order_big(d) * BigInt::from(t);
        total += BigRational::new(num, den);
    }
    total
}

fn gl_order_big(n: usize) -> BigInt {
    if n <= 4 {
        return BigInt::from(gl_order(n));
    }
    (0..n).fold(BigInt::from(1), |acc, k| {
        acc * ((BigInt::from(1) << n) - (BigInt::from(1) << k))
    })
}

/// Orthogonal complement of a restriction subspace under the standard
/// pairing, used by the duality property.
pub fn orthogonal_complement(set: &RestrictionSet) -> RestrictionSet {
    let lm = set.l * set.m;
    let mut out = Vec::new();
    for w in 1u64..(1 << lm) {
        if set.basis.iter().all(|&b| (b & w).count_ones() % 2 == 0) {
            insert_reduced(&mut out, w);
        }
    }
    RestrictionSet::new(set.l, set.m, &out).expect("same shape")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_set(rng: &mut ChaCha8Rng, l: usize, m: usize) -> RestrictionSet {
        let k = rng.random_range(0..=l * m);
        let words: Vec<u64> = (0..k).map(|_| rng.random::<u64>() & gf2::low_mask(l * m)).collect();
        RestrictionSet::new(l, m, &words).unwrap()
    }

    fn random_witness(rng: &mut ChaCha8Rng, cat: &OrbitCatalog) -> SymmetryWitness {
        SymmetryWitness {
            left: cat.group.gl_left[rng.random_range(0..cat.group.gl_left.len())].clone(),
            right: cat.group.gl_right[rng.random_range(0..cat.group.gl_right.len())].clone(),
            transposed: cat.square && rng.random_bool(0.5),
        }
    }

    #[test]
    fn small_counts() {
        assert_eq!(enumerate_orbits(2, 2, true).unwrap().len(), 10);
        assert_eq!(enumerate_orbits(2, 2, false).unwrap().len(), 11);
        assert_eq!(enumerate_orbits(2, 3, false).unwrap().len(), 31);
    }

    #[test]
    fn first_layer_is_the_empty_set() {
        let cat = enumerate_orbits(2, 3, false).unwrap();
        assert_eq!(cat.layer(0).len(), 1);
        assert!(cat.layer(0)[0].representative.basis().is_empty());
        assert_eq!(cat.layer(6).len(), 1);
    }

    #[test]
    fn square_requires_equal_sides() {
        assert!(enumerate_orbits(2, 3, true).is_err());
        assert!(enumerate_orbits(5, 2, false).is_err());
    }

    #[test]
    fn equivalent_sets_share_an_orbit() {
        let cat = enumerate_orbits(2, 2, true).unwrap();
        let top = RestrictionSet::new(2, 2, &[0b0001, 0b0010]).unwrap();
        let bottom = RestrictionSet::new(2, 2, &[0b0100, 0b1000]).unwrap();
        let combo = RestrictionSet::new(2, 2, &[0b0001, 0b0011]).unwrap();
        let a = cat.canonicalize(&top).unwrap().0;
        assert_eq!(cat.canonicalize(&bottom).unwrap().0, a);
        assert_eq!(cat.canonicalize(&combo).unwrap().0, a);
    }

    #[test]
    fn representatives_map_to_themselves() {
        let cat = enumerate_orbits(2, 3, false).unwrap();
        for orbit in cat.orbits() {
            let (id, w) = cat.canonicalize(&orbit.representative).unwrap();
            assert_eq!(id, orbit.id);
            assert_eq!(w.apply(&orbit.representative).unwrap(), orbit.representative);
        }
    }

    #[test]
    fn witness_maps_onto_representative() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for (l, m, sq) in [(2, 2, true), (2, 3, false), (3, 3, true)] {
            let cat = enumerate_orbits(l, m, sq).unwrap();
            for _ in 0..100 {
                let s = random_set(&mut rng, l, m);
                let (id, w) = cat.canonicalize(&s).unwrap();
                assert_eq!(&w.apply(&s).unwrap(), cat.representative(id));
            }
        }
    }

    #[test]
    fn canonicalize_is_group_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for (l, m, sq) in [(2, 2, true), (2, 3, false), (3, 3, true), (3, 3, false)] {
            let cat = enumerate_orbits(l, m, sq).unwrap();
            for _ in 0..200 {
                let s = random_set(&mut rng, l, m);
                let g = random_witness(&mut rng, &cat);
                let moved = g.apply(&s).unwrap();
                assert_eq!(cat.canonicalize(&s).unwrap().0, cat.canonicalize(&moved).unwrap().0);
                let inv_s = orbit_invariants(&s);
                let inv_moved = orbit_invariants(&moved);
                assert!(inv_s.compatible(&inv_moved, sq));
            }
        }
    }

    #[test]
    fn representatives_pairwise_distinct_orbits() {
        for (l, m, sq) in [(2, 2, true), (2, 2, false), (2, 3, false)] {
            let cat = enumerate_orbits(l, m, sq).unwrap();
            let ids: Vec<u32> = cat
                .orbits()
                .iter()
                .map(|o| cat.canonicalize(&o.representative).unwrap().0)
                .collect();
            let mut sorted = ids.clone();
            sorted.dedup();
            assert_eq!(sorted.len(), cat.len());
        }
    }

    #[test]
    fn invariants_of_zero_and_full_spaces() {
        let zero = RestrictionSet::empty(2, 2);
        let inv = orbit_invariants(&zero);
        assert_eq!(inv.rank_distribution, vec![1, 0, 0]);
        assert_eq!(inv.left_profile[0], 4);
        assert_eq!(inv.right_profile[0], 4);

        let full = RestrictionSet::new(2, 2, &[1, 2, 4, 8]).unwrap();
        assert_eq!(orbit_invariants(&full).rank_distribution, vec![1, 9, 6]);
    }

    #[test]
    fn full_space_rank_distribution_matches_brute_force() {
        for (l, m) in [(2, 2), (2, 3), (3, 3)] {
            let mut expected = vec![0u64; l.min(m) + 1];
            for w in 0u64..(1 << (l * m)) {
                expected[functional_matrix(l, m, w).rank()] += 1;
            }
            let all: Vec<u64> = (0..l * m).map(|b| 1u64 << b).collect();
            let set = RestrictionSet::new(l, m, &all).unwrap();
            assert_eq!(orbit_invariants(&set).rank_distribution, expected);
        }
    }

    #[test]
    fn catalog_bytes_round_trip() {
        let cat = enumerate_orbits(2, 3, false).unwrap();
        let bytes = cat.to_bytes();
        let back = OrbitCatalog::from_bytes(&bytes).unwrap();
        assert_eq!(back.len(), cat.len());
        assert_eq!(back.to_bytes(), bytes);
        let mut bad = bytes.clone();
        bad[14] ^= 1;
        assert!(OrbitCatalog::from_bytes(&bad).is_err());
    }

    #[test]
    fn memory_budget_is_enforced() {
        let opts = CatalogOptions {
            memory_budget: Some(10_000),
            ..Default::default()
        };
        assert!(matches!(
            OrbitCatalog::enumerate(2, 4, false, &opts),
            Err(Error::ResourceLimit(_))
        ));
    }

    #[test]
    fn lower_bound_formula_small_cases() {
        use num_traits::ToPrimitive;
        let v = orbit_count_lower_bound(2, 2, true).to_f64().unwrap();
        assert!(v > 0.0 && v <= 10.0);
        // d = 0 term alone: 1 / (6 * 6 * 1 * 2)
        let d0 = BigRational::new(BigInt::from(1), BigInt::from(72));
        assert!(orbit_count_lower_bound(2, 2, true) > d0);
    }
}
