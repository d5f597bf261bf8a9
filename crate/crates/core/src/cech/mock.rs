//! Finite-dimensional mock section space: a four-term complex
//! `V⁰ → V¹ → V² → V³` with `D∘D = 0`, exact at degrees 1 and 2, built
//! from a split canonical form conjugated by seeded random invertible maps.
//! Every hook of the [`SectionSpace`] interface is an exact linear map, so
//! the diagram-search identities hold to rounding.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::SectionSpace;

/// Dimension plan of the canonical split complex:
/// V⁰ = A⊕B, V¹ = B⊕C, V² = C⊕E, V³ = E with
/// D⁰(a,b) = (b,0), D¹(b,c) = (c,0), D²(c,e) = e.
#[derive(Debug, Clone, Copy)]
pub struct MockDims {
    pub a: usize,
    pub b: usize,
    pub c: usize,
    pub e: usize,
}

impl Default for MockDims {
    fn default() -> Self {
        MockDims { a: 3, b: 4, c: 3, e: 2 }
    }
}

/// A value in the mock space: its form degree and the coefficient vector.
#[derive(Debug, Clone)]
pub struct MockValue {
    pub degree: usize,
    pub data: DVector<Complex64>,
}

pub struct MockSpace {
    pub dims: MockDims,
    /// change of basis per degree: V_k-coordinates = T_k · canonical
    t: Vec<DMatrix<Complex64>>,
    t_inv: Vec<DMatrix<Complex64>>,
    /// partition operators per degree per set: Σ_l Φ_l = id, generically
    /// not commuting with D (modelling multiplication by a partition
    /// function)
    phis: Vec<Vec<DMatrix<Complex64>>>,
    pub n_sets: usize,
}

fn random_invertible(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<Complex64> {
    loop {
        let m = DMatrix::from_fn(n, n, |_, _| {
            Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        });
        // diagonal dominance keeps the conditioning tame
        let m = m.clone() + DMatrix::identity(n, n).scale(2.5);
        if m.clone().lu().is_invertible() {
            return m;
        }
    }
}

impl MockSpace {
    pub fn new(dims: MockDims, seed: u64) -> Self {
        Self::with_sets(dims, 3, seed)
    }

    pub fn with_sets(dims: MockDims, n_sets: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sizes = [dims.a + dims.b, dims.b + dims.c, dims.c + dims.e, dims.e];
        let mut t = Vec::new();
        let mut t_inv = Vec::new();
        for &s in &sizes {
            let m = random_invertible(s, &mut rng);
            t_inv.push(m.clone().try_inverse().expect("invertible by construction"));
            t.push(m);
        }
        // partition operators: id/N plus deviations that sum to zero
        let mut phis = Vec::new();
        for &s in &sizes {
            let mut per_set = Vec::new();
            let mut acc = DMatrix::from_element(s, s, Complex64::new(0.0, 0.0));
            for _ in 0..n_sets - 1 {
                let dev = DMatrix::from_fn(s, s, |_, _| {
                    Complex64::new(rng.gen_range(-0.15..0.15), rng.gen_range(-0.15..0.15))
                });
                let phi = DMatrix::identity(s, s).scale(1.0 / n_sets as f64) + dev.clone();
                acc += dev;
                per_set.push(phi);
            }
            per_set.push(DMatrix::identity(s, s).scale(1.0 / n_sets as f64) - acc);
            phis.push(per_set);
        }
        MockSpace { dims, t, t_inv, phis, n_sets }
    }

    pub fn dim_of(&self, degree: usize) -> usize {
        let d = self.dims;
        [d.a + d.b, d.b + d.c, d.c + d.e, d.e][degree]
    }

    /// Canonical-coordinate splits per degree.
    fn split_sizes(&self, degree: usize) -> (usize, usize) {
        let d = self.dims;
        match degree {
            0 => (d.a, d.b),
            1 => (d.b, d.c),
            2 => (d.c, d.e),
            3 => (d.e, 0),
            _ => panic!("degree out of range"),
        }
    }

    pub fn random_value(&self, degree: usize, rng: &mut ChaCha8Rng) -> MockValue {
        let n = self.dim_of(degree);
        MockValue {
            degree,
            data: DVector::from_fn(n, |_, _| {
                Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
            }),
        }
    }

    /// A random CR section (kernel of D⁰).
    pub fn random_cr_section(&self, rng: &mut ChaCha8Rng) -> MockValue {
        let (a, b) = self.split_sizes(0);
        let mut canon = DVector::from_element(a + b, Complex64::new(0.0, 0.0));
        for i in 0..a {
            canon[i] = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        }
        MockValue { degree: 0, data: &self.t[0] * canon }
    }

    /// A random exact value of the given degree ≥ 1 (image of D).
    pub fn random_exact(&self, degree: usize, rng: &mut ChaCha8Rng) -> MockValue {
        let below = self.random_value(degree - 1, rng);
        self.dbar(&below)
    }

    /// Text fixture: the change-of-basis and partition matrices as matrix
    /// lists (rows of re/im pairs).
    pub fn to_text(&self) -> String {
        use std::fmt::Write as _;
        let mut s = String::new();
        let d = self.dims;
        let _ = writeln!(s, "MOCKCOMPLEX v1 a={} b={} c={} e={} sets={}", d.a, d.b, d.c, d.e, self.n_sets);
        let dump = |s: &mut String, name: &str, m: &DMatrix<Complex64>| {
            let _ = writeln!(s, "matrix {name} {}x{}", m.nrows(), m.ncols());
            for r in 0..m.nrows() {
                let row: Vec<String> =
                    (0..m.ncols()).map(|c| format!("{:.17e} {:.17e}", m[(r, c)].re, m[(r, c)].im)).collect();
                let _ = writeln!(s, "{}", row.join(" "));
            }
        };
        for (k, t) in self.t.iter().enumerate() {
            dump(&mut s, &format!("basis_{k}"), t);
        }
        for (k, per_set) in self.phis.iter().enumerate() {
            for (l, phi) in per_set.iter().enumerate() {
                dump(&mut s, &format!("partition_{k}_{l}"), phi);
            }
        }
        s
    }
}

impl SectionSpace for MockSpace {
    type Value = MockValue;

    fn zero(&self, form_degree: usize) -> MockValue {
        MockValue {
            degree: form_degree,
            data: DVector::from_element(self.dim_of(form_degree), Complex64::new(0.0, 0.0)),
        }
    }

    fn add_scaled(&self, a: &MockValue, b: &MockValue, c: Complex64) -> MockValue {
        debug_assert_eq!(a.degree, b.degree);
        MockValue { degree: a.degree, data: &a.data + &b.data * c }
    }

    fn scale(&self, a: &MockValue, c: Complex64) -> MockValue {
        MockValue { degree: a.degree, data: &a.data * c }
    }

    fn dbar(&self, v: &MockValue) -> MockValue {
        let deg = v.degree;
        assert!(deg < 3, "mock complex has degrees 0..3");
        let canon = &self.t_inv[deg] * &v.data;
        let (first, _) = self.split_sizes(deg);
        let out_dim = self.dim_of(deg + 1);
        let mut out = DVector::from_element(out_dim, Complex64::new(0.0, 0.0));
        // D(x_first, x_second) = (x_second, 0)
        let second = canon.rows(first, canon.len() - first);
        for (i, val) in second.iter().enumerate() {
            out[i] = *val;
        }
        MockValue { degree: deg + 1, data: &self.t[deg + 1] * out }
    }

    fn local_solve(&self, v: &MockValue, _form_degree: usize) -> MockValue {
        // exact right inverse on the image: D(x,y) = (y,0) inverts to
        // (0, x_first) in the lower degree
        let deg = v.degree;
        assert!(deg >= 1);
        let canon = &self.t_inv[deg] * &v.data;
        let (first, _) = self.split_sizes(deg);
        let below = deg - 1;
        let (bf, _bs) = self.split_sizes(below);
        let out_dim = self.dim_of(below);
        let mut out = DVector::from_element(out_dim, Complex64::new(0.0, 0.0));
        for i in 0..first.min(out_dim - bf) {
            out[bf + i] = canon[i];
        }
        MockValue { degree: below, data: &self.t[below] * out }
    }

    fn extend(&self, v: &MockValue) -> MockValue {
        // mock uniqueness-of-extension: project onto the CR part (the
        // second canonical block is discarded for degree-0 values whose
        // differential vanishes; others pass through)
        v.clone()
    }

    fn restrict(&self, v: &MockValue, _from: usize, _to: usize) -> MockValue {
        v.clone()
    }

    fn partition(&self, set: usize, v: &MockValue) -> MockValue {
        MockValue { degree: v.degree, data: &self.phis[v.degree][set] * &v.data }
    }

    fn norm(&self, v: &MockValue) -> f64 {
        v.data.iter().map(|c| c.norm()).fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cech::{
        chi, dbar_cochain, global_solve_r, homotopy, multi_indices, ne_search, q2, rho, sw_search,
        Cochain, Cover,
    };

    const TOL: f64 = 1e-10;

    fn setup() -> (MockSpace, Cover, ChaCha8Rng) {
        let space = MockSpace::new(MockDims::default(), 42);
        let cover = Cover::with_weights(vec![0.5, 0.3, 0.2], 6);
        let rng = ChaCha8Rng::seed_from_u64(7);
        (space, cover, rng)
    }

    fn random_cochain(
        space: &MockSpace,
        cover: &Cover,
        cech_degree: usize,
        form_degree: usize,
        rng: &mut ChaCha8Rng,
    ) -> Cochain<MockValue> {
        let mut c = Cochain::new(cech_degree, form_degree);
        for idx in multi_indices(cover.n_sets, cech_degree + 1) {
            c.insert(idx, space.random_value(form_degree, rng));
        }
        c
    }

    #[test]
    fn dbar_squared_zero_and_exactness() {
        let (space, _cover, mut rng) = setup();
        for deg in 0..2usize {
            let v = space.random_value(deg, &mut rng);
            let dd = space.dbar(&space.dbar(&v));
            assert!(space.norm(&dd) < TOL);
        }
        // local_solve is a right inverse on exact values
        for deg in 1..3usize {
            let h = space.random_exact(deg, &mut rng);
            let s = space.local_solve(&h, deg);
            let back = space.dbar(&s);
            let diff = space.add_scaled(&back, &h, Complex64::new(-1.0, 0.0));
            assert!(space.norm(&diff) < TOL, "right inverse at degree {deg}");
        }
    }

    #[test]
    fn rho_squared_vanishes() {
        let (space, cover, mut rng) = setup();
        let c = random_cochain(&space, &cover, 0, 1, &mut rng);
        let rr = rho(&space, &cover, &rho(&space, &cover, &c));
        for v in rr.entries.values() {
            assert!(space.norm(v) < TOL);
        }
    }

    #[test]
    fn rho_on_two_sets_is_difference() {
        let (space, _c, mut rng) = setup();
        let cover = Cover::uniform(2, 6);
        let mut c = Cochain::new(0, 0);
        let f1 = space.random_value(0, &mut rng);
        let f2 = space.random_value(0, &mut rng);
        c.insert(vec![0], f1.clone());
        c.insert(vec![1], f2.clone());
        let r = rho(&space, &cover, &c);
        let want = space.add_scaled(&f2, &f1, Complex64::new(-1.0, 0.0));
        let diff = space.add_scaled(&r.entries[&vec![0, 1]], &want, Complex64::new(-1.0, 0.0));
        assert!(space.norm(&diff) < TOL);
        // constant cochain: ϱ = 0
        let mut cc = Cochain::new(0, 0);
        cc.insert(vec![0], f1.clone());
        cc.insert(vec![1], f1.clone());
        let r0 = rho(&space, &cover, &cc);
        for v in r0.entries.values() {
            assert!(space.norm(v) < TOL);
        }
    }

    #[test]
    fn chi_splits_closed_cochains() {
        let (space, cover, mut rng) = setup();
        // random 1-cocycle: ϱ of a 0-cochain
        let c0 = random_cochain(&space, &cover, 0, 1, &mut rng);
        let alpha = rho(&space, &cover, &c0);
        let split = chi(&space, &cover, &alpha);
        let back = rho(&space, &cover, &split);
        for (idx, v) in &alpha.entries {
            let diff = space.add_scaled(&back.entries[idx], v, Complex64::new(-1.0, 0.0));
            assert!(space.norm(&diff) < TOL, "rho-chi identity at {idx:?}");
        }
        // chi(0) = 0
        let z = Cochain::new(1, 1);
        let cz = chi(&space, &cover, &z);
        for v in cz.entries.values() {
            assert!(space.norm(v) < TOL);
        }
    }

    #[test]
    fn double_complex_commutes() {
        let (space, cover, mut rng) = setup();
        let c = random_cochain(&space, &cover, 0, 0, &mut rng);
        let a = dbar_cochain(&space, &rho(&space, &cover, &c));
        let b = rho(&space, &cover, &dbar_cochain(&space, &c));
        for (idx, v) in &a.entries {
            let diff = space.add_scaled(v, &b.entries[idx], Complex64::new(-1.0, 0.0));
            assert!(space.norm(&diff) < TOL);
        }
    }

    #[test]
    fn sw_search_produces_closed_global_form() {
        let (space, cover, mut rng) = setup();
        // ϱ-closed 2-cochain of CR sections: ϱ(β) for a 1-cochain β of
        // CR sections
        let mut beta = Cochain::new(1, 0);
        for idx in multi_indices(cover.n_sets, 2) {
            beta.insert(idx, space.random_cr_section(&mut rng));
        }
        let alpha = rho(&space, &cover, &beta);
        let (h, glued) = sw_search(&space, &cover, &alpha, 1e-8).unwrap();
        let dh = space.dbar(&h);
        assert!(space.norm(&dh) < TOL, "dbar h = {}", space.norm(&dh));
        // the glued 0-cochain entries agree
        let vals: Vec<&MockValue> = glued.entries.values().collect();
        for v in &vals[1..] {
            let diff = space.add_scaled(v, vals[0], Complex64::new(-1.0, 0.0));
            assert!(space.norm(&diff) < TOL);
        }
        // zero in, zero out
        let z2 = Cochain::new(2, 0);
        let (hz, _) = sw_search(&space, &cover, &z2, 1e-8).unwrap();
        assert!(space.norm(&hz) < TOL);
    }

    #[test]
    fn ne_search_produces_cocycle_and_splitting() {
        let (space, cover, mut rng) = setup();
        // h = ∂̄g for a random (0,1) certificate g
        let g = space.random_value(1, &mut rng);
        let h = space.dbar(&g);
        let ne = ne_search(&space, &cover, &h, &g);
        // α is a 2-cocycle
        let ra = rho(&space, &cover, &ne.alpha);
        for v in ra.entries.values() {
            assert!(space.norm(v) < TOL, "alpha cocycle defect {}", space.norm(v));
        }
        // α entries are CR (∂̄ = 0)
        for v in ne.alpha.entries.values() {
            assert!(space.norm(&space.dbar(v)) < TOL);
        }
        // ϱβ = α
        let rb = rho(&space, &cover, &ne.beta);
        for (idx, v) in &ne.alpha.entries {
            let diff = space.add_scaled(&rb.entries[idx], v, Complex64::new(-1.0, 0.0));
            assert!(space.norm(&diff) < TOL, "rho beta = alpha at {idx:?}");
        }
        // h = 0 → all zero
        let z = space.zero(2);
        let zg = space.zero(1);
        let nez = ne_search(&space, &cover, &z, &zg);
        for v in nez.alpha.entries.values() {
            assert!(space.norm(v) < TOL);
        }
    }

    #[test]
    fn q2_splits_coboundaries() {
        let (space, cover, mut rng) = setup();
        for _ in 0..10 {
            let mut beta = Cochain::new(1, 0);
            for idx in multi_indices(cover.n_sets, 2) {
                beta.insert(idx, space.random_cr_section(&mut rng));
            }
            let alpha = rho(&space, &cover, &beta);
            let q = q2(&space, &cover, &alpha).unwrap();
            // ∂̄ Q²(α) = 0
            for v in q.entries.values() {
                assert!(space.norm(&space.dbar(v)) < TOL);
            }
            // ϱ Q²(α) = α on the inner cover (identical restrictions here)
            let back = rho(&space, &cover, &q);
            for (idx, v) in &alpha.entries {
                let diff = space.add_scaled(&back.entries[idx], v, Complex64::new(-1.0, 0.0));
                assert!(space.norm(&diff) < TOL, "q2 splitting at {idx:?}");
            }
        }
        // zero input → zero output, linearity
        let z = Cochain::new(2, 0);
        let qz = q2(&space, &cover, &z).unwrap();
        for v in qz.entries.values() {
            assert!(space.norm(v) < TOL);
        }
    }

    #[test]
    fn global_solve_inverts_dbar() {
        let (space, cover, mut rng) = setup();
        for r in [1usize, 2] {
            for _ in 0..10 {
                let g = space.random_value(r - 1, &mut rng);
                let h = space.dbar(&g);
                let trace = global_solve_r(&space, &cover, &h, &g, r).unwrap();
                assert!(trace.glue_defect < TOL, "glue defect {}", trace.glue_defect);
                let back = space.dbar(&trace.solution);
                let diff = space.add_scaled(&back, &h, Complex64::new(-1.0, 0.0));
                assert!(
                    space.norm(&diff) < TOL,
                    "r = {r}: dbar(solution) = h defect {}",
                    space.norm(&diff)
                );
                // solution may differ from g by a dbar-kernel element
                let ambig = space.add_scaled(&trace.solution, &g, Complex64::new(-1.0, 0.0));
                assert!(space.norm(&space.dbar(&ambig)) < TOL);
            }
        }
        // zero input
        let z = space.zero(2);
        let t = global_solve_r(&space, &cover, &z, &space.zero(1), 2).unwrap();
        assert!(space.norm(&t.solution) < TOL);
    }

    #[test]
    fn homotopy_identity_exact() {
        let (space, cover, mut rng) = setup();
        for _ in 0..20 {
            let h = space.random_value(1, &mut rng);
            let res = homotopy(&space, &cover, &h).unwrap();
            assert!(res.identity_residual < TOL, "identity residual {}", res.identity_residual);
        }
        // closed h: h = dbar P(h), Q-term vanishes
        let g = space.random_value(0, &mut rng);
        let h = space.dbar(&g);
        let res = homotopy(&space, &cover, &h).unwrap();
        assert!(space.norm(&res.q_of_dh) < TOL);
        assert!(res.identity_residual < TOL);
    }
}
