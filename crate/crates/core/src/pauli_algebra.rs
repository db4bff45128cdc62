// Copyright 2026 The liethermal Authors
// SPDX-License-Identifier: Apache-2.0

//! Pauli strings, the dynamical Lie algebra of the driven XX chain, its
//! Cartan split and the structure constants of the adjoint action.
//!
//! A Pauli string is stored in symplectic form as two bitmasks: bit `j` of
//! `x` is set when site `j` carries X or Y, bit `j` of `z` when it carries Z
//! or Y. Strings are phase free and Hermitian, `P = i^{|x & z|} X^x Z^z`.
//!
//! Commutators follow `[P, Q] = -i λ R`, so for a basis element `b_j` and a
//! generator `g_k` the coefficient lands in `Λ_k[l][j]` with `b_l = R`, and
//! the coefficient vector of `K(t) = Σ a_j b_j` evolves as `ȧ = Σ_k h_k Λ_k a`.

use std::collections::{HashMap, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Largest chain supported by the single-word masks.
pub const MAX_SITES: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PauliString {
    x: u64,
    z: u64,
    n: u8,
}

fn site_mask(n: usize) -> u64 {
    if n == 64 {
        u64::MAX
    } else {
        (1u64 << n) - 1
    }
}

/// Mask with bits `lo..hi` set.
fn range_mask(lo: usize, hi: usize) -> u64 {
    if hi <= lo {
        0
    } else {
        site_mask(hi) & !site_mask(lo)
    }
}

impl PauliString {
    pub fn new(x: u64, z: u64, n: usize) -> Result<Self> {
        if n == 0 || n > MAX_SITES {
            return Err(Error::UnsupportedSize(format!(
                "{n} sites (supported: 1..={MAX_SITES})"
            )));
        }
        let m = site_mask(n);
        if x & !m != 0 || z & !m != 0 {
            return Err(Error::InvalidInput(format!(
                "mask bits beyond site {n}: x={x:#x} z={z:#x}"
            )));
        }
        Ok(Self { x, z, n: n as u8 })
    }

    pub(crate) fn from_masks(x: u64, z: u64, n: usize) -> Self {
        debug_assert!((1..=MAX_SITES).contains(&n));
        Self { x, z, n: n as u8 }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_masks(0, 0, n)
    }

    /// Single-site X on `site` (0-based).
    pub fn x(site: usize, n: usize) -> Self {
        Self::from_masks(1 << site, 0, n)
    }

    pub fn y(site: usize, n: usize) -> Self {
        Self::from_masks(1 << site, 1 << site, n)
    }

    pub fn z(site: usize, n: usize) -> Self {
        Self::from_masks(0, 1 << site, n)
    }

    /// `X_j X_{j+1}` (0-based `j`).
    pub fn xx(site: usize, n: usize) -> Self {
        Self::from_masks(0b11 << site, 0, n)
    }

    /// The parity string `Z_1 … Z_n`.
    pub fn parity(n: usize) -> Self {
        Self::from_masks(0, site_mask(n), n)
    }

    /// Parses a label such as `"XZIY"`; character `j` is site `j`.
    pub fn from_label(label: &str) -> Result<Self> {
        let n = label.chars().count();
        let (mut x, mut z) = (0u64, 0u64);
        for (j, ch) in label.chars().enumerate() {
            match ch {
                'I' | '_' => {}
                'X' => x |= 1 << j,
                'Y' => {
                    x |= 1 << j;
                    z |= 1 << j;
                }
                'Z' => z |= 1 << j,
                other => {
                    return Err(Error::InvalidInput(format!(
                        "unexpected character {other:?} in Pauli label"
                    )))
                }
            }
        }
        Self::new(x, z, n)
    }

    pub fn x_mask(&self) -> u64 {
        self.x
    }

    pub fn z_mask(&self) -> u64 {
        self.z
    }

    pub fn n(&self) -> usize {
        self.n as usize
    }

    pub fn is_identity(&self) -> bool {
        self.x == 0 && self.z == 0
    }

    pub fn y_count(&self) -> u32 {
        (self.x & self.z).count_ones()
    }

    pub fn weight(&self) -> u32 {
        (self.x | self.z).count_ones()
    }

    pub fn commutes_with(&self, other: &Self) -> bool {
        ((self.x & other.z).count_ones() + (self.z & other.x).count_ones()).is_multiple_of(2)
    }

    /// Single-site factor at `site` as one of `'I'`, `'X'`, `'Y'`, `'Z'`.
    pub fn site(&self, site: usize) -> char {
        match ((self.x >> site) & 1, (self.z >> site) & 1) {
            (0, 0) => 'I',
            (1, 0) => 'X',
            (1, 1) => 'Y',
            _ => 'Z',
        }
    }

    pub fn label(&self) -> String {
        (0..self.n()).map(|j| self.site(j)).collect()
    }

    fn check_same_n(&self, other: &Self) -> Result<()> {
        if self.n != other.n {
            return Err(Error::Dimension {
                expected: self.n(),
                found: other.n(),
            });
        }
        Ok(())
    }
}

impl fmt::Display for PauliString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

/// `P·Q = i^phase · R` with `R` phase free.
pub fn pauli_product(p: &PauliString, q: &PauliString) -> Result<(u8, PauliString)> {
    p.check_same_n(q)?;
    let r = PauliString::from_masks(p.x ^ q.x, p.z ^ q.z, p.n());
    // i^{yP} X^{xP} Z^{zP} · i^{yQ} X^{xQ} Z^{zQ}: moving Z^{zP} past X^{xQ}
    // costs (-1)^{|zP & xQ|}; the result carries i^{-yR} relative to R.
    let phase = p.y_count() + q.y_count() + 2 * (p.z & q.x).count_ones() + 4 * 64 - r.y_count();
    Ok(((phase % 4) as u8, r))
}

/// `[P, Q] = -i λ R`, or `None` when the strings commute.
pub fn commutator(p: &PauliString, q: &PauliString) -> Result<Option<(f64, PauliString)>> {
    p.check_same_n(q)?;
    if p.commutes_with(q) {
        return Ok(None);
    }
    let (phase, r) = pauli_product(p, q)?;
    // [P,Q] = 2 i^phase R and phase is odd here, so λ = 2 i^{phase+1} = ∓2.
    let lambda = if phase == 1 { -2.0 } else { 2.0 };
    Ok(Some((lambda, r)))
}

/// The Cartan involution `A ↦ -Aᵀ` splits the algebra by the parity of the
/// number of Y factors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CartanLabel {
    K,
    M,
}

impl CartanLabel {
    pub fn of(p: &PauliString) -> Self {
        if p.y_count() % 2 == 1 {
            CartanLabel::K
        } else {
            CartanLabel::M
        }
    }
}

/// Row families of the closed-form element table, in canonical order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TableRow {
    /// `Z_j`
    SingleZ = 1,
    /// `X_j Z…Z X_k`
    XzX,
    /// `X_j Z…Z Y_k`
    XzY,
    /// `Y_j Z…Z X_k`
    YzX,
    /// `Y_j Z…Z Y_k`
    YzY,
    /// `Z_1…Z_{j-1} X_j`
    PrefixX,
    /// `Z_1…Z_{j-1} Y_j`
    PrefixY,
    /// `X_j Z_{j+1}…Z_n`
    SuffixX,
    /// `Y_j Z_{j+1}…Z_n`
    SuffixY,
    /// `Z_1…Z_n`
    Parity,
}

impl TableRow {
    pub const ALL: [TableRow; 10] = [
        TableRow::SingleZ,
        TableRow::XzX,
        TableRow::XzY,
        TableRow::YzX,
        TableRow::YzY,
        TableRow::PrefixX,
        TableRow::PrefixY,
        TableRow::SuffixX,
        TableRow::SuffixY,
        TableRow::Parity,
    ];

    /// Members of this row for an `n`-site chain, sorted by `(j, k)`.
    pub fn members(self, n: usize) -> Vec<PauliString> {
        let pair = |xj: bool, xk: bool| -> Vec<PauliString> {
            let mut out = Vec::new();
            for j in 0..n {
                for k in (j + 1)..n {
                    let x = (1u64 << j) | (1u64 << k);
                    let mut z = range_mask(j + 1, k);
                    if !xj {
                        z |= 1 << j;
                    }
                    if !xk {
                        z |= 1 << k;
                    }
                    out.push(PauliString::from_masks(x, z, n));
                }
            }
            out
        };
        match self {
            TableRow::SingleZ => (0..n).map(|j| PauliString::z(j, n)).collect(),
            TableRow::XzX => pair(true, true),
            TableRow::XzY => pair(true, false),
            TableRow::YzX => pair(false, true),
            TableRow::YzY => pair(false, false),
            TableRow::PrefixX | TableRow::PrefixY => (0..n)
                .map(|j| {
                    let own = if self == TableRow::PrefixY { 1 << j } else { 0 };
                    PauliString::from_masks(1 << j, range_mask(0, j) | own, n)
                })
                .collect(),
            TableRow::SuffixX | TableRow::SuffixY => (0..n)
                .map(|j| {
                    let own = if self == TableRow::SuffixY { 1 << j } else { 0 };
                    PauliString::from_masks(1 << j, range_mask(j + 1, n) | own, n)
                })
                .collect(),
            TableRow::Parity => vec![PauliString::parity(n)],
        }
    }

    /// Places a string in the table: `(row, j, k)` with 0-based sites, or
    /// `None` if it belongs to no row.
    pub fn classify(p: &PauliString) -> Option<(TableRow, usize, usize)> {
        let n = p.n();
        let (x, z) = (p.x, p.z);
        let bit = |m: u64, j: usize| (m >> j) & 1 == 1;
        match x.count_ones() {
            0 => {
                if z.count_ones() == 1 {
                    let j = z.trailing_zeros() as usize;
                    Some((TableRow::SingleZ, j, j))
                } else if z == site_mask(n) && n > 1 {
                    Some((TableRow::Parity, 0, 0))
                } else {
                    None
                }
            }
            1 => {
                let j = x.trailing_zeros() as usize;
                let y = bit(z, j);
                let rest = z & !(1 << j);
                if rest == range_mask(0, j) {
                    let row = if y { TableRow::PrefixY } else { TableRow::PrefixX };
                    Some((row, j, j))
                } else if rest == range_mask(j + 1, n) {
                    let row = if y { TableRow::SuffixY } else { TableRow::SuffixX };
                    Some((row, j, j))
                } else {
                    None
                }
            }
            2 => {
                let j = x.trailing_zeros() as usize;
                let k = 63 - x.leading_zeros() as usize;
                let rest = z & !((1 << j) | (1 << k));
                if rest != range_mask(j + 1, k) {
                    return None;
                }
                let row = match (bit(z, j), bit(z, k)) {
                    (false, false) => TableRow::XzX,
                    (false, true) => TableRow::XzY,
                    (true, false) => TableRow::YzX,
                    (true, true) => TableRow::YzY,
                };
                Some((row, j, k))
            }
            _ => None,
        }
    }
}

/// Generators of the algebra: the terms of the driven XX chain.
pub fn chain_generators(n: usize) -> Vec<PauliString> {
    let mut gens: Vec<PauliString> = (0..n).map(|j| PauliString::z(j, n)).collect();
    gens.push(PauliString::x(0, n));
    if n > 1 {
        gens.push(PauliString::x(n - 1, n));
    }
    gens.extend((0..n.saturating_sub(1)).map(|j| PauliString::xx(j, n)));
    gens
}

/// Ordered Lie-algebra basis with Cartan labels.
#[derive(Debug, Clone)]
pub struct LieBasis {
    n: usize,
    elements: Vec<PauliString>,
    index_of: HashMap<PauliString, usize>,
    labels: Vec<CartanLabel>,
    h_indices: Vec<usize>,
}

fn check_chain_size(n: usize) -> Result<()> {
    if n < 2 {
        return Err(Error::UnsupportedSize(format!(
            "the chain algebra needs n >= 2, got {n}"
        )));
    }
    if n > MAX_SITES {
        return Err(Error::UnsupportedSize(format!(
            "n = {n} exceeds the {MAX_SITES}-site mask width"
        )));
    }
    Ok(())
}

impl LieBasis {
    fn from_ordered(n: usize, elements: Vec<PauliString>) -> Self {
        let index_of = elements.iter().enumerate().map(|(i, p)| (*p, i)).collect();
        let mut basis = Self {
            n,
            elements,
            index_of,
            labels: Vec::new(),
            h_indices: Vec::new(),
        };
        basis.classify_in_place();
        basis
    }

    fn classify_in_place(&mut self) {
        self.labels = self.elements.iter().map(CartanLabel::of).collect();
        let n = self.n;
        self.h_indices = (0..n)
            .map(|j| PauliString::z(j, n))
            .chain(std::iter::once(PauliString::parity(n)))
            .filter_map(|p| self.index_of.get(&p).copied())
            .collect();
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn elements(&self) -> &[PauliString] {
        &self.elements
    }

    pub fn element(&self, i: usize) -> PauliString {
        self.elements[i]
    }

    pub fn index_of(&self, p: &PauliString) -> Option<usize> {
        self.index_of.get(p).copied()
    }

    pub fn labels(&self) -> &[CartanLabel] {
        &self.labels
    }

    pub fn label(&self, i: usize) -> CartanLabel {
        self.labels[i]
    }

    /// Indices of `Z_1, …, Z_n` followed by the parity string.
    pub fn h_indices(&self) -> &[usize] {
        &self.h_indices
    }

    pub fn parity_index(&self) -> usize {
        self.h_indices[self.n]
    }

    pub fn count(&self, label: CartanLabel) -> usize {
        self.labels.iter().filter(|&&l| l == label).count()
    }

    /// SHA-256 over the site count and the ordered masks, hex encoded.
    pub fn content_hash(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update((self.n as u64).to_le_bytes());
        for p in &self.elements {
            hasher.update(p.x.to_le_bytes());
            hasher.update(p.z.to_le_bytes());
        }
        hasher
            .finalize()
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

/// Breadth-first closure of the chain generators under commutation,
/// re-sorted into table order.
pub fn generate_closure(n: usize) -> Result<LieBasis> {
    check_chain_size(n)?;
    let gens = chain_generators(n);
    let mut seen: HashMap<PauliString, ()> = gens.iter().map(|g| (*g, ())).collect();
    let mut queue: VecDeque<PauliString> = gens.iter().copied().collect();
    let mut found = gens.clone();
    // Nested commutators [g_1, [g_2, [… , g_k]]] span the algebra, so
    // repeatedly applying ad_g for every generator reaches all of it.
    while let Some(p) = queue.pop_front() {
        for g in &gens {
            if let Some((_, r)) = commutator(g, &p)? {
                if seen.insert(r, ()).is_none() {
                    found.push(r);
                    queue.push_back(r);
                }
            }
        }
    }
    found.sort_by_key(|p| match TableRow::classify(p) {
        Some((row, j, k)) => (row as usize, j, k, 0, 0),
        // Not expected for this generator family; keep them, deterministically, at the end.
        None => (usize::MAX, 0, 0, p.x as usize, p.z as usize),
    });
    Ok(LieBasis::from_ordered(n, found))
}

/// Builds the basis directly from the ten closed-form row families.
pub fn enumerate_table1(n: usize) -> Result<LieBasis> {
    check_chain_size(n)?;
    let elements = TableRow::ALL
        .iter()
        .flat_map(|row| row.members(n))
        .collect();
    Ok(LieBasis::from_ordered(n, elements))
}

/// Recomputes the Cartan labels and the maximal Abelian subset.
pub fn cartan_classify(mut basis: LieBasis) -> LieBasis {
    basis.classify_in_place();
    basis
}

/// One generator's adjoint action: a signed partial permutation, since
/// `[b_j, g]` is a single Pauli string or zero.
#[derive(Debug, Clone)]
pub struct AdjointAction {
    pub generator: PauliString,
    /// `(row l, column j, λ)` triplets sorted by column.
    pub entries: Vec<(usize, usize, f64)>,
}

impl AdjointAction {
    /// `y += scale · Λ x`.
    pub fn apply_add(&self, x: &[f64], scale: f64, y: &mut [f64]) {
        for &(l, j, v) in &self.entries {
            y[l] += scale * v * x[j];
        }
    }

    /// `uᵀ Λ v`.
    pub fn bilinear(&self, u: &[f64], v: &[f64]) -> f64 {
        self.entries.iter().map(|&(l, j, w)| u[l] * w * v[j]).sum()
    }

    pub fn get(&self, l: usize, j: usize) -> f64 {
        self.entries
            .iter()
            .find(|&&(row, col, _)| row == l && col == j)
            .map_or(0.0, |e| e.2)
    }
}

#[derive(Debug, Clone)]
pub struct StructureTensor {
    d: usize,
    actions: Vec<AdjointAction>,
}

impl StructureTensor {
    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn action(&self, k: usize) -> &AdjointAction {
        &self.actions[k]
    }

    pub fn actions(&self) -> &[AdjointAction] {
        &self.actions
    }
}

/// `Λ_k[l][j] = λ` where `[b_j, g_k] = -i λ b_l`.
pub fn structure_tensor(basis: &LieBasis, generators: &[PauliString]) -> Result<StructureTensor> {
    let mut actions = Vec::with_capacity(generators.len());
    for g in generators {
        if basis.index_of(g).is_none() {
            return Err(Error::UnknownGenerator(g.label()));
        }
        let mut entries = Vec::new();
        for (j, b) in basis.elements().iter().enumerate() {
            if let Some((lambda, r)) = commutator(b, g)? {
                let l = basis
                    .index_of(&r)
                    .ok_or_else(|| Error::UnknownGenerator(format!("{} (not closed)", r.label())))?;
                entries.push((l, j, lambda));
            }
        }
        actions.push(AdjointAction {
            generator: *g,
            entries,
        });
    }
    Ok(StructureTensor {
        d: basis.len(),
        actions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn p(label: &str) -> PauliString {
        PauliString::from_label(label).unwrap()
    }

    #[test]
    fn single_site_products() {
        assert_eq!(pauli_product(&p("X"), &p("Z")).unwrap(), (3, p("Y")));
        assert_eq!(pauli_product(&p("Z"), &p("Z")).unwrap(), (0, p("I")));
        assert_eq!(pauli_product(&p("XX"), &p("ZI")).unwrap(), (3, p("YX")));
        // ZX = iY, YZ = iX, ZY = -iX
        assert_eq!(pauli_product(&p("Z"), &p("X")).unwrap(), (1, p("Y")));
        assert_eq!(pauli_product(&p("Y"), &p("Z")).unwrap(), (1, p("X")));
        assert_eq!(pauli_product(&p("Z"), &p("Y")).unwrap(), (3, p("X")));
    }

    #[test]
    fn mismatched_sizes_are_rejected() {
        assert!(matches!(
            pauli_product(&p("X"), &p("XZ")),
            Err(Error::Dimension { .. })
        ));
        assert!(commutator(&p("X"), &p("XZ")).is_err());
    }

    #[test]
    fn commutator_examples() {
        assert_eq!(commutator(&p("Z"), &p("X")).unwrap(), Some((-2.0, p("Y"))));
        assert_eq!(commutator(&p("ZI"), &p("XX")).unwrap(), Some((-2.0, p("YX"))));
        assert_eq!(commutator(&p("ZI"), &p("IZ")).unwrap(), None);
    }

    #[test]
    fn closure_sizes_small() {
        assert_eq!(generate_closure(2).unwrap().len(), 15);
        let b3 = generate_closure(3).unwrap();
        assert_eq!(b3.len(), 28);
        assert_eq!(b3.count(CartanLabel::M), 16);
        assert_eq!(b3.count(CartanLabel::K), 12);
        assert_eq!(generate_closure(11).unwrap().len(), 276);
    }

    #[test]
    fn too_small_chain_rejected() {
        assert!(matches!(generate_closure(1), Err(Error::UnsupportedSize(_))));
        assert!(matches!(enumerate_table1(1), Err(Error::UnsupportedSize(_))));
        assert!(matches!(generate_closure(65), Err(Error::UnsupportedSize(_))));
    }

    #[test]
    fn table_rows_examples() {
        let row6: Vec<_> = TableRow::PrefixX.members(2);
        assert_eq!(row6, vec![p("XI"), p("ZX")]);
        let row2: Vec<_> = TableRow::XzX.members(3);
        assert_eq!(row2, vec![p("XXI"), p("XZX"), p("IXX")]);
    }

    #[test]
    fn closure_matches_table_including_order() {
        for n in 2..=8 {
            let a = generate_closure(n).unwrap();
            let b = enumerate_table1(n).unwrap();
            assert_eq!(a.elements(), b.elements(), "n = {n}");
            assert_eq!(a.content_hash(), b.content_hash());
        }
    }

    #[test]
    fn classify_roundtrips_table() {
        let n = 5;
        for row in TableRow::ALL {
            for m in row.members(n) {
                assert_eq!(TableRow::classify(&m).unwrap().0, row, "{m}");
            }
        }
        assert!(TableRow::classify(&p("ZZIII")).is_none());
    }

    #[test]
    fn cartan_labels() {
        let b = cartan_classify(generate_closure(3).unwrap());
        let lab = |s: &str| b.label(b.index_of(&p(s)).unwrap());
        assert_eq!(lab("YXI"), CartanLabel::K);
        assert_eq!(lab("YYI"), CartanLabel::M);
        assert_eq!(lab("ZZZ"), CartanLabel::M);
        assert!(b.h_indices().contains(&b.index_of(&p("ZZZ")).unwrap()));
        assert_eq!(b.h_indices().len(), 4);
        for &i in b.h_indices() {
            for &j in b.h_indices() {
                assert!(b.element(i).commutes_with(&b.element(j)));
            }
        }
    }

    #[test]
    fn structure_tensor_n2_z1() {
        let b = generate_closure(2).unwrap();
        let t = structure_tensor(&b, &[p("ZI")]).unwrap();
        let act = t.action(0);
        let xx = b.index_of(&p("XX")).unwrap();
        let yx = b.index_of(&p("YX")).unwrap();
        assert_eq!(act.get(yx, xx).abs(), 2.0);
        assert_eq!(act.get(xx, yx), -act.get(yx, xx));
        // Columns of strings commuting with Z1 are empty.
        let cols: HashSet<usize> = act.entries.iter().map(|e| e.1).collect();
        for (j, e) in b.elements().iter().enumerate() {
            assert_eq!(cols.contains(&j), !e.commutes_with(&p("ZI")), "{e}");
        }
    }

    #[test]
    fn structure_tensor_unknown_generator() {
        let b = generate_closure(3).unwrap();
        assert!(b.index_of(&p("ZZI")).is_none());
        assert!(matches!(
            structure_tensor(&b, &[p("ZII"), p("ZZI")]),
            Err(Error::UnknownGenerator(_))
        ));
    }

    #[test]
    fn structure_tensor_antisymmetric_even_integers() {
        let b = generate_closure(4).unwrap();
        let t = structure_tensor(&b, &chain_generators(4)).unwrap();
        for act in t.actions() {
            for &(l, j, v) in &act.entries {
                assert!(v == 2.0 || v == -2.0);
                assert_eq!(act.get(j, l), -v);
            }
        }
    }

    #[test]
    fn nested_commutator_gives_three_body_term() {
        // [X_{j-1}X_j, [X_jX_{j+1}, Z_j]] = 4 X_{j-1} Z_j X_{j+1}
        for n in 3..=8 {
            let b = generate_closure(n).unwrap();
            for j in 1..n - 1 {
                let outer = PauliString::xx(j - 1, n);
                let inner = PauliString::xx(j, n);
                let zj = PauliString::z(j, n);
                let t = structure_tensor(&b, &[outer, inner]).unwrap();
                // [C,[B,Z]] = -Λ_C Λ_B e_Z
                let mut e = vec![0.0; b.len()];
                e[b.index_of(&zj).unwrap()] = 1.0;
                let mut mid = vec![0.0; b.len()];
                t.action(1).apply_add(&e, 1.0, &mut mid);
                let mut out = vec![0.0; b.len()];
                t.action(0).apply_add(&mid, -1.0, &mut out);
                let target = PauliString::from_masks(
                    (1 << (j - 1)) | (1 << (j + 1)),
                    1 << j,
                    n,
                );
                let ti = b.index_of(&target).unwrap();
                for (i, v) in out.iter().enumerate() {
                    let want = if i == ti { 4.0 } else { 0.0 };
                    assert_eq!(*v, want, "n={n} j={j} i={i}");
                }
            }
        }
    }
}
