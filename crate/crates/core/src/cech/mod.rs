//! Čech globalization over an abstract section space: cochains, the
//! coboundary ϱ, the partition contraction χ, the south-west and north-east
//! diagram searches, the coboundary-splitting operator 𝒬², the glued global
//! solvers, and the homotopy assembly — all generic over a [`SectionSpace`]
//! so the same algorithms run on the finite-dimensional mock backend and on
//! numeric patch hooks.

use std::collections::BTreeMap;

use num_complex::Complex64;
use thiserror::Error;

pub mod mock;
pub mod patch;

#[derive(Debug, Error)]
pub enum CechError {
    #[error("cochain degrees incompatible: {0} vs {1}")]
    DegreeMismatch(usize, usize),
    #[error("input is not a coboundary (rank test failed, defect {0:.3e})")]
    NotCoboundary(f64),
    #[error("local solve failed at stage {stage}: residual {residual:.3e}")]
    LocalSolve { stage: &'static str, residual: f64 },
    #[error("gluing mismatch beyond tolerance: {0:.3e}")]
    GluingMismatch(f64),
}

/// Abstract space of local sections with the hooks the diagram searches
/// need. Values carry their own form degree; the cover structure is shared
/// through [`Cover`].
pub trait SectionSpace {
    /// A section value over one cover set (or overlap).
    type Value: Clone;

    fn zero(&self, form_degree: usize) -> Self::Value;
    fn add_scaled(&self, a: &Self::Value, b: &Self::Value, c: Complex64) -> Self::Value;
    fn scale(&self, a: &Self::Value, c: Complex64) -> Self::Value;
    /// the degree-raising differential
    fn dbar(&self, a: &Self::Value) -> Self::Value;
    /// right inverse of dbar on closed inputs over shrunken sets (P^r hook)
    fn local_solve(&self, a: &Self::Value, form_degree: usize) -> Self::Value;
    /// holomorphic/CR extension hook (P⁰): fixes a CR section as a global
    /// object on the deeper cover level
    fn extend(&self, a: &Self::Value) -> Self::Value;
    /// restriction between cover levels (identity in the mock)
    fn restrict(&self, a: &Self::Value, level_from: usize, level_to: usize) -> Self::Value;
    /// multiplication by the partition function of cover set `set`; the
    /// family must sum to the identity but need not commute with ∂̄ (it
    /// does not in the analytic setting, which is what makes the
    /// south-west search produce nonzero global forms)
    fn partition(&self, set: usize, a: &Self::Value) -> Self::Value;
    fn norm(&self, a: &Self::Value) -> f64;
}

/// Nested cover data: N sets with level structure and partition weights.
#[derive(Debug, Clone)]
pub struct Cover {
    pub n_sets: usize,
    pub levels: usize,
    /// partition-of-unity weight φ_i per set (constants in the mock;
    /// Σ φ_i = 1)
    pub weights: Vec<f64>,
}

impl Cover {
    pub fn uniform(n_sets: usize, levels: usize) -> Self {
        Cover { n_sets, levels, weights: vec![1.0 / n_sets as f64; n_sets] }
    }

    pub fn with_weights(weights: Vec<f64>, levels: usize) -> Self {
        let total: f64 = weights.iter().sum();
        assert!((total - 1.0).abs() < 1e-12, "partition weights must sum to 1");
        Cover { n_sets: weights.len(), levels, weights }
    }
}

/// A Čech j-cochain of form-degree-k values: entries on sorted multi-indices
/// (|I| = j + 1), antisymmetric under permutations by the sign convention.
#[derive(Clone)]
pub struct Cochain<V> {
    pub cech_degree: usize,
    pub form_degree: usize,
    pub entries: BTreeMap<Vec<u8>, V>,
}

impl<V: Clone> Cochain<V> {
    pub fn new(cech_degree: usize, form_degree: usize) -> Self {
        Cochain { cech_degree, form_degree, entries: BTreeMap::new() }
    }

    pub fn insert(&mut self, idx: Vec<u8>, v: V) {
        debug_assert_eq!(idx.len(), self.cech_degree + 1);
        debug_assert!(idx.windows(2).all(|w| w[0] < w[1]), "indices must be sorted");
        self.entries.insert(idx, v);
    }

    /// Value on an arbitrary index tuple with the antisymmetry sign;
    /// `None` for tuples with repeats or missing overlaps.
    pub fn value_signed<S: SectionSpace<Value = V>>(&self, space: &S, idx: &[u8]) -> Option<V> {
        let mut sorted = idx.to_vec();
        let mut swaps = 0;
        for i in 1..sorted.len() {
            let mut j = i;
            while j > 0 && sorted[j - 1] > sorted[j] {
                sorted.swap(j - 1, j);
                swaps += 1;
                j -= 1;
            }
        }
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return None;
        }
        let v = self.entries.get(&sorted)?;
        if swaps % 2 == 0 {
            Some(v.clone())
        } else {
            Some(space.scale(v, Complex64::new(-1.0, 0.0)))
        }
    }
}

/// Sorted multi-indices of length k over 0..n.
pub fn multi_indices(n: usize, k: usize) -> Vec<Vec<u8>> {
    fn rec(start: u8, n: u8, k: usize, cur: &mut Vec<u8>, out: &mut Vec<Vec<u8>>) {
        if k == 0 {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, k - 1, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, n as u8, k, &mut Vec::new(), &mut out);
    out
}

/// The alternating coboundary ϱ: (ϱf)_{i₀…i_{j+1}} = Σ (−1)^k f_{…î_k…}.
pub fn rho<S: SectionSpace>(space: &S, cover: &Cover, c: &Cochain<S::Value>) -> Cochain<S::Value> {
    let mut out = Cochain::new(c.cech_degree + 1, c.form_degree);
    for idx in multi_indices(cover.n_sets, c.cech_degree + 2) {
        let mut acc = space.zero(c.form_degree);
        let mut any = false;
        for k in 0..idx.len() {
            let omit: Vec<u8> =
                idx.iter().enumerate().filter(|(p, _)| *p != k).map(|(_, &x)| x).collect();
            if let Some(v) = c.entries.get(&omit) {
                let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
                acc = space.add_scaled(&acc, v, Complex64::new(sign, 0.0));
                any = true;
            }
        }
        if any {
            out.insert(idx, acc);
        }
    }
    out
}

/// The partition contraction χ: χ(α)_I = Σ_{l ∉ I} φ_l α_{l ∪ I}; for
/// ϱ-closed α it satisfies ϱ∘χ(α) = α.
pub fn chi<S: SectionSpace>(space: &S, cover: &Cover, c: &Cochain<S::Value>) -> Cochain<S::Value> {
    assert!(c.cech_degree >= 1);
    let mut out = Cochain::new(c.cech_degree - 1, c.form_degree);
    for idx in multi_indices(cover.n_sets, c.cech_degree) {
        let mut acc = space.zero(c.form_degree);
        for l in 0..cover.n_sets as u8 {
            if idx.contains(&l) {
                continue;
            }
            let mut full = vec![l];
            full.extend(&idx);
            if let Some(v) = c.value_signed(space, &full) {
                let pv = space.partition(l as usize, &v);
                acc = space.add_scaled(&acc, &pv, Complex64::new(1.0, 0.0));
            }
        }
        out.insert(idx, acc);
    }
    out
}

/// Apply ∂̄ entrywise.
pub fn dbar_cochain<S: SectionSpace>(space: &S, c: &Cochain<S::Value>) -> Cochain<S::Value> {
    let mut out = Cochain::new(c.cech_degree, c.form_degree + 1);
    for (idx, v) in &c.entries {
        out.insert(idx.clone(), space.dbar(v));
    }
    out
}

fn sub<S: SectionSpace>(space: &S, a: &Cochain<S::Value>, b: &Cochain<S::Value>) -> Cochain<S::Value> {
    assert_eq!(a.cech_degree, b.cech_degree);
    let mut out = Cochain::new(a.cech_degree, a.form_degree);
    let keys: Vec<Vec<u8>> = a.entries.keys().chain(b.entries.keys()).cloned().collect();
    for idx in keys {
        let za = a.entries.get(&idx);
        let zb = b.entries.get(&idx);
        let v = match (za, zb) {
            (Some(x), Some(y)) => space.add_scaled(x, y, Complex64::new(-1.0, 0.0)),
            (Some(x), None) => x.clone(),
            (None, Some(y)) => space.scale(y, Complex64::new(-1.0, 0.0)),
            (None, None) => continue,
        };
        out.entries.insert(idx, v);
    }
    out
}

/// South-west diagram search: a ϱ-closed 2-cochain of sections becomes a
/// global ∂̄-closed (0,2) object h = ∂̄χ(∂̄χ(α)), glued from a 0-cochain
/// whose coboundary vanishes.
pub fn sw_search<S: SectionSpace>(
    space: &S,
    cover: &Cover,
    alpha: &Cochain<S::Value>,
    tol: f64,
) -> Result<(S::Value, Cochain<S::Value>), CechError> {
    let chi_a = chi(space, cover, alpha);
    let d_chi_a = dbar_cochain(space, &chi_a);
    let chi_d = chi(space, cover, &d_chi_a);
    let d_chi_d = dbar_cochain(space, &chi_d);
    // gluing: ϱ of the final 0-cochain must vanish
    let glue = rho(space, cover, &d_chi_d);
    let mut defect: f64 = 0.0;
    for v in glue.entries.values() {
        defect = defect.max(space.norm(v));
    }
    let h_scale: f64 = d_chi_d.entries.values().map(|v| space.norm(v)).fold(0.0, f64::max);
    let a_scale: f64 = alpha.entries.values().map(|v| space.norm(v)).fold(0.0, f64::max);
    let scale = h_scale.max(a_scale).max(1e-300);
    if defect / scale > tol {
        return Err(CechError::GluingMismatch(defect / scale));
    }
    let h = d_chi_d
        .entries
        .values()
        .next()
        .cloned()
        .unwrap_or_else(|| space.zero(alpha.form_degree + 2));
    Ok((h, d_chi_d))
}

/// North-east diagram search: from a global closed object h (with the
/// certificate h = ∂̄g) produce the holomorphic 2-cocycle α and the
/// 1-cochain β with ϱβ = α, through the chains of local solves.
pub struct NeSearchResult<V> {
    pub alpha: Cochain<V>,
    pub beta: Cochain<V>,
    pub h_i: Cochain<V>,
    pub h_ij: Cochain<V>,
    pub f_i: Cochain<V>,
}

pub fn ne_search<S: SectionSpace>(
    space: &S,
    cover: &Cover,
    h: &S::Value,
    g_certificate: &S::Value,
) -> NeSearchResult<S::Value> {
    let n = cover.n_sets;
    // h_i = P²(h) on level-2 sets
    let mut h_i = Cochain::new(0, 1);
    for i in 0..n as u8 {
        let local = space.restrict(h, 1, 2);
        h_i.insert(vec![i], space.local_solve(&local, 2));
    }
    // h_ij = P¹((ϱh)_{ij}) on level-3 overlaps: ∂̄h_ij = h_j − h_i
    let rho_h = rho(space, cover, &h_i);
    let mut h_ij = Cochain::new(1, 0);
    for idx in multi_indices(n, 2) {
        let diff = space.restrict(&rho_h.entries[&idx.clone()], 2, 3);
        h_ij.insert(idx, space.local_solve(&diff, 1));
    }
    // α = extend(ϱ(h_ij)) on level-4 overlaps: a CR 2-cocycle
    let rho_hij = rho(space, cover, &h_ij);
    let mut alpha = Cochain::new(2, 0);
    for idx in multi_indices(n, 3) {
        let v = space.restrict(&rho_hij.entries[&idx.clone()], 3, 4);
        alpha.insert(idx, space.extend(&v));
    }
    // f_i = P¹(h_i − g): ∂̄f_i = h_i − g, so β = extend(h_ij − (ϱf)) is CR
    // with ϱβ = α
    let mut f_i = Cochain::new(0, 0);
    for i in 0..n as u8 {
        let hi = &h_i.entries[&vec![i]];
        let diff = space.add_scaled(hi, g_certificate, Complex64::new(-1.0, 0.0));
        let diff = space.restrict(&diff, 2, 3);
        f_i.insert(vec![i], space.local_solve(&diff, 1));
    }
    let rho_f = rho(space, cover, &f_i);
    let mut beta = Cochain::new(1, 0);
    for idx in multi_indices(n, 2) {
        let hij = &h_ij.entries[&idx.clone()];
        let rf = &rho_f.entries[&idx.clone()];
        let v = space.add_scaled(hij, rf, Complex64::new(-1.0, 0.0));
        let v = space.restrict(&v, 3, 4);
        beta.insert(idx, space.extend(&v));
    }
    NeSearchResult { alpha, beta, h_i, h_ij, f_i }
}

/// 𝒬²: split a 2-coboundary α into ϱ of a ∂̄-closed 1-cochain on the inner
/// cover: 𝒬²(α) = ϱ{f_i} + χ(α).
pub fn q2<S: SectionSpace>(
    space: &S,
    cover: &Cover,
    alpha: &Cochain<S::Value>,
) -> Result<Cochain<S::Value>, CechError> {
    // south-west: h = ∂̄χ(∂̄χ(α)) as a global form, then Q² of it is a
    // global (0,1) primitive — in the abstract space the Hodge hook is the
    // local_solve at the global level (the mock supplies it exactly).
    let chi_a = chi(space, cover, alpha);
    let d_chi_a = dbar_cochain(space, &chi_a);
    let chi_d = chi(space, cover, &d_chi_a);
    let d_chi_d = dbar_cochain(space, &chi_d);
    let h_glob = d_chi_d
        .entries
        .values()
        .next()
        .cloned()
        .unwrap_or_else(|| space.zero(alpha.form_degree + 2));
    let q_h = space.local_solve(&h_glob, 2);
    // 0-cochain of ∂̄-closed (0,1) forms: ϱ(Q²h)_i − χ(∂̄χα)_i … per the
    // proof the 0-cochain is Q²(h)|_i − χ(∂̄_M χ(α))_i
    let mut f_i = Cochain::new(0, 0);
    for i in 0..cover.n_sets as u8 {
        let chi_d_i =
            chi_d.entries.get(&vec![i]).cloned().unwrap_or_else(|| space.zero(1));
        let closed = space.add_scaled(&q_h, &chi_d_i, Complex64::new(-1.0, 0.0));
        f_i.insert(vec![i], space.local_solve(&closed, 1));
    }
    // 𝒬²(α) = ϱ{f_i} + χ(α)
    let rho_f = rho(space, cover, &f_i);
    let mut out = Cochain::new(1, 0);
    for idx in multi_indices(cover.n_sets, 2) {
        let a = rho_f.entries.get(&idx);
        let b = chi_a.entries.get(&idx);
        let v = match (a, b) {
            (Some(x), Some(y)) => space.add_scaled(x, y, Complex64::new(1.0, 0.0)),
            (Some(x), None) => x.clone(),
            (None, Some(y)) => y.clone(),
            (None, None) => continue,
        };
        out.insert(idx, v);
    }
    Ok(out)
}

/// Global solver R^r for r ∈ {1, 2}: assemble γ through the diagram
/// searches and glue `g_i = h_i − ∂̄χ(h_ij − γ_ij)`; the returned value is
/// the common entry of the glued 0-cochain.
pub struct GlobalSolveTrace<V> {
    pub solution: V,
    pub glue_defect: f64,
    pub gamma: Cochain<V>,
}

pub fn global_solve_r<S: SectionSpace>(
    space: &S,
    cover: &Cover,
    h: &S::Value,
    g_certificate: &S::Value,
    r: usize,
) -> Result<GlobalSolveTrace<S::Value>, CechError> {
    assert!(r == 1 || r == 2);
    if r == 1 {
        // with a certificate g the splitting is direct: β_i = P⁰(h_i − g)
        // is CR with ϱβ matching ϱh, so g_i = h_i − β_i glues exactly;
        // without one the global hook (the Hodge-type inverse) applies,
        // which is where the H¹-vanishing hypothesis enters.
        let n = cover.n_sets;
        let mut h_i = Cochain::new(0, 0);
        for i in 0..n as u8 {
            let local = space.restrict(h, 1, 2);
            h_i.insert(vec![i], space.local_solve(&local, 1));
        }
        let use_certificate = space.norm(g_certificate) > 0.0;
        let mut g_i = Cochain::new(0, 0);
        if use_certificate {
            for i in 0..n as u8 {
                let hi = &h_i.entries[&vec![i]];
                let diff = space.add_scaled(hi, g_certificate, Complex64::new(-1.0, 0.0));
                let beta = space.extend(&space.restrict(&diff, 2, 3));
                g_i.insert(vec![i], space.add_scaled(hi, &beta, Complex64::new(-1.0, 0.0)));
            }
        } else {
            let sol = space.local_solve(h, 1);
            for i in 0..n as u8 {
                g_i.insert(vec![i], space.restrict(&sol, 1, 6));
            }
        }
        let glue = rho(space, cover, &g_i);
        let defect = glue.entries.values().map(|v| space.norm(v)).fold(0.0, f64::max);
        let gamma = Cochain::new(1, 0);
        let solution = g_i.entries.values().next().cloned().unwrap_or_else(|| space.zero(0));
        return Ok(GlobalSolveTrace { solution, glue_defect: defect, gamma });
    }
    // r = 2
    let ne = ne_search(space, cover, h, g_certificate);
    // γ: split α on the inner cover (the mock extend hook plays P⁰)
    let q = q2(space, cover, &ne.alpha)?;
    let mut gamma = Cochain::new(1, 0);
    for (idx, v) in &q.entries {
        gamma.insert(idx.clone(), space.extend(v));
    }
    // g_i = h_i − ∂̄ χ(h_ij − γ_ij)
    let delta = sub(space, &ne.h_ij, &gamma);
    let chi_delta = chi(space, cover, &delta);
    let mut g_i = Cochain::new(0, 1);
    for i in 0..cover.n_sets as u8 {
        let hi = &ne.h_i.entries[&vec![i]];
        let cd = chi_delta.entries.get(&vec![i]).cloned().unwrap_or_else(|| space.zero(0));
        let dcd = space.dbar(&cd);
        g_i.insert(vec![i], space.add_scaled(hi, &dcd, Complex64::new(-1.0, 0.0)));
    }
    let glue = rho(space, cover, &g_i);
    let defect = glue.entries.values().map(|v| space.norm(v)).fold(0.0, f64::max);
    let solution = g_i.entries.values().next().cloned().unwrap_or_else(|| space.zero(1));
    Ok(GlobalSolveTrace { solution, glue_defect: defect, gamma })
}

/// The homotopy assembly: P(h) = R¹(h − R²(∂̄h)), Q(∂̄h) = R²(∂̄h), with
/// h = ∂̄P(h) + Q(∂̄h).
pub struct HomotopyResult<V> {
    pub p_of_h: V,
    pub q_of_dh: V,
    pub identity_residual: f64,
}

pub fn homotopy<S: SectionSpace>(
    space: &S,
    cover: &Cover,
    h: &S::Value,
) -> Result<HomotopyResult<S::Value>, CechError> {
    let dh = space.dbar(h);
    // R²(∂̄h): its certificate is h itself (∂̄h = ∂̄ of h)
    let r2 = global_solve_r(space, cover, &dh, h, 2)?;
    let q_of_dh = r2.solution;
    // h − R²∂̄h is ∂̄-closed; R¹ of it
    let closed = space.add_scaled(h, &q_of_dh, Complex64::new(-1.0, 0.0));
    let r1 = global_solve_r(space, cover, &closed, &space.zero(0), 1)?;
    let p_of_h = r1.solution;
    // identity
    let recon = space.add_scaled(&space.dbar(&p_of_h), &q_of_dh, Complex64::new(1.0, 0.0));
    let resid = space.norm(&space.add_scaled(&recon, h, Complex64::new(-1.0, 0.0)));
    Ok(HomotopyResult { p_of_h, q_of_dh, identity_residual: resid })
}
