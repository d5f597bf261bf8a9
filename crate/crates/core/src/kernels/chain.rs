//! Signed boundary algebra for the corner-stratum/simplex product chains.
//!
//! Cells are products `U_I(ε)-or-U⁰_I(ε) × (simplex face)` with a sign; the
//! boundary operator follows the product rule
//! `b(C₁×C₂) = (C₁×bC₂) ∪ (−1)^{dim C₂}(bC₁×C₂)`
//! and cancels interior faces, leaving exactly the three families that feed
//! the kernel-transition argument: the pure-convex endpoints, the
//! pure-concave endpoints, and the Σt = 1 faces.

use std::collections::BTreeMap;

/// Simplex face state over an ordered coordinate set: the full simplex
/// `{t ≥ 0, Σt ≤ 1}` or its `Σt = 1` face.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SimplexFace {
    /// active t coordinates, ascending; index 0 is reserved for t₀
    pub coords: Vec<u8>,
    pub sum_one: bool,
}

impl SimplexFace {
    pub fn dim(&self) -> usize {
        self.coords.len() - usize::from(self.sum_one)
    }
}

/// A signed product cell.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ChainCell {
    /// τ-constraint index set I (1-based piece labels)
    pub base: Vec<u8>,
    /// true for U⁰_I(ε) (on the shell) vs U_I(ε) (solid in ρ)
    pub corner: bool,
    pub simplex: SimplexFace,
}

/// A signed formal sum of cells.
pub type Chain = BTreeMap<ChainCell, i64>;

pub fn add_cell(chain: &mut Chain, cell: ChainCell, sign: i64) {
    let e = chain.entry(cell).or_insert(0);
    *e += sign;
    if *e == 0 {
        chain.remove_entry_zero();
    }
}

trait RemoveZero {
    fn remove_entry_zero(&mut self);
}
impl RemoveZero for Chain {
    fn remove_entry_zero(&mut self) {
        self.retain(|_, v| *v != 0);
    }
}

/// Faces of a simplex state with position signs: `t at position p` (1-based)
/// contributes `(−1)^p`, the `Σ = 1` face contributes `+1`.
fn simplex_faces(s: &SimplexFace) -> Vec<(SimplexFace, i64)> {
    let mut out = Vec::new();
    if s.dim() == 0 {
        return out;
    }
    for (p, _) in s.coords.iter().enumerate() {
        let mut coords = s.coords.clone();
        coords.remove(p);
        // on the Σ = 1 face the induced orientation flips the position signs
        let mut sign = if (p + 1) % 2 == 0 { 1 } else { -1 };
        if s.sum_one {
            sign = -sign;
        }
        out.push((SimplexFace { coords, sum_one: s.sum_one }, sign));
    }
    if !s.sum_one && !s.coords.is_empty() {
        out.push((SimplexFace { coords: s.coords.clone(), sum_one: true }, 1));
    }
    out
}

/// Base faces: a corner stratum gains one τ-constraint per available index,
/// signed by the insertion rank plus the current constraint count (the
/// parity that makes interior faces cancel against the simplex faces of
/// the neighbouring cell).
fn base_faces(base: &[u8], corner: bool, labels: &[u8]) -> Vec<(Vec<u8>, bool, i64)> {
    let mut out = Vec::new();
    if !corner {
        // the solid tube piece U_I(ε) meets the shell: U⁰_I(ε)
        out.push((base.to_vec(), true, 1));
    }
    for &k in labels {
        if base.contains(&k) {
            continue;
        }
        let mut b2 = base.to_vec();
        let pos = b2.iter().position(|&x| x > k).unwrap_or(b2.len());
        b2.insert(pos, k);
        let sign = if (pos + base.len()) % 2 == 0 { 1 } else { -1 };
        out.push((b2, corner, sign));
    }
    out
}

/// Signed boundary of a chain over the label set J = {1..l}.
pub fn boundary(chain: &Chain, labels: &[u8]) -> Chain {
    let mut out: Chain = BTreeMap::new();
    for (cell, &c) in chain {
        let sdim = cell.simplex.dim();
        let sgn_base = if sdim % 2 == 0 { 1 } else { -1 };
        // C × b(simplex)
        for (f, s) in simplex_faces(&cell.simplex) {
            add_cell(
                &mut out,
                ChainCell { base: cell.base.clone(), corner: cell.corner, simplex: f },
                c * s,
            );
        }
        // (−1)^{dim simplex} bC × simplex
        for (b2, corner, s) in base_faces(&cell.base, cell.corner, labels) {
            add_cell(
                &mut out,
                ChainCell { base: b2, corner, simplex: cell.simplex.clone() },
                c * s * sgn_base,
            );
        }
    }
    out.remove_entry_zero();
    out
}

/// The corner chain `𝒞 = ∪_{1 ≤ |I| ≤ |J|} U⁰_I(ε) × Δ_I^{|I|}`.
pub fn corner_chain(labels: &[u8]) -> Chain {
    let mut chain: Chain = BTreeMap::new();
    for mask in 1u32..(1 << labels.len()) {
        let subset: Vec<u8> =
            labels.iter().enumerate().filter(|(i, _)| mask >> i & 1 == 1).map(|(_, &l)| l).collect();
        add_cell(
            &mut chain,
            ChainCell {
                base: subset.clone(),
                corner: true,
                simplex: SimplexFace { coords: subset, sum_one: false },
            },
            1,
        );
    }
    chain
}

/// The displayed boundary: pure-convex endpoints `U⁰_j × [Σ = 1 of {t_j}]`,
/// pure-concave endpoints `−U⁰_j × [t_j = 0]`, and the Σt = 1 faces for
/// every |I| ≥ 2 (the S-kernel domains). Returned as an unsigned family per
/// the display's set-theoretic reading.
pub fn boundary_display_families(labels: &[u8]) -> Vec<ChainCell> {
    let mut out = Vec::new();
    for &j in labels {
        out.push(ChainCell {
            base: vec![j],
            corner: true,
            simplex: SimplexFace { coords: vec![j], sum_one: true },
        });
        out.push(ChainCell {
            base: vec![j],
            corner: true,
            simplex: SimplexFace { coords: vec![], sum_one: false },
        });
    }
    for mask in 1u32..(1 << labels.len()) {
        let subset: Vec<u8> =
            labels.iter().enumerate().filter(|(i, _)| mask >> i & 1 == 1).map(|(_, &l)| l).collect();
        if subset.len() >= 2 {
            out.push(ChainCell {
                base: subset.clone(),
                corner: true,
                simplex: SimplexFace { coords: subset, sum_one: true },
            });
        }
    }
    out
}
