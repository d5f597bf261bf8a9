//! Exterior algebra for point-evaluated differential forms in the variables
//! `ζ ∈ ℂⁿ`, `z ∈ ℂⁿ` and a real parameter `t ∈ ℝˡ`.
//!
//! Forms are stored as sparse tables mapping an ordered basis monomial
//! (a wedge of `dζ`, `dz`, `dζ̄`, `dz̄`, `dt` factors) to a complex
//! coefficient.  The canonical factor order is
//! `dζ < dz < dζ̄ < dz̄ < dt`, each block ascending in index; every sign
//! in the algebra is defined relative to this order.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use num_complex::Complex64;
use thiserror::Error;

pub mod cf;
pub mod jet;

pub use cf::{cf_identity_residual, check_kernel_condition, omega_prime_r};
pub use jet::{JetField, JetPoint};

/// Errors raised by the form algebra.
#[derive(Debug, Error)]
pub enum FormError {
    #[error("ambient dimension mismatch: ({0}, {1}) vs ({2}, {3})")]
    DimensionMismatch(usize, usize, usize, usize),
    #[error("degree r = {r} out of range for n = {n}")]
    DegreeOutOfRange { r: usize, n: usize },
    #[error("kernel condition <eta, zeta - z> = 1 violated: residual {0:.3e}")]
    KernelCondition(f64),
}

/// Which differential a factor belongs to, in canonical order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum VarClass {
    DZeta = 0,
    DZ = 1,
    DZetaBar = 2,
    DZBar = 3,
    Dt = 4,
}

/// A single wedge factor, e.g. `dζ̄₃`. Indices are 1-based as in the
/// ambient coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Factor {
    pub class: VarClass,
    pub index: u8,
}

/// An ordered basis monomial: strictly increasing index sets per class.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct FormMonomial {
    pub dzeta: Vec<u8>,
    pub dz: Vec<u8>,
    pub dzetabar: Vec<u8>,
    pub dzbar: Vec<u8>,
    pub dt: Vec<u8>,
}

impl FormMonomial {
    pub fn unit() -> Self {
        Self::default()
    }

    pub fn degree(&self) -> usize {
        self.dzeta.len() + self.dz.len() + self.dzetabar.len() + self.dzbar.len() + self.dt.len()
    }

    /// Factors in canonical order.
    pub fn factors(&self) -> Vec<Factor> {
        let mut out = Vec::with_capacity(self.degree());
        for &i in &self.dzeta {
            out.push(Factor { class: VarClass::DZeta, index: i });
        }
        for &i in &self.dz {
            out.push(Factor { class: VarClass::DZ, index: i });
        }
        for &i in &self.dzetabar {
            out.push(Factor { class: VarClass::DZetaBar, index: i });
        }
        for &i in &self.dzbar {
            out.push(Factor { class: VarClass::DZBar, index: i });
        }
        for &i in &self.dt {
            out.push(Factor { class: VarClass::Dt, index: i });
        }
        out
    }

    /// Rebuild a monomial from an unordered factor list. Returns the
    /// canonical monomial together with the sorting parity, or `None`
    /// when a factor repeats.
    pub fn from_factors(factors: &[Factor]) -> Option<(Self, i32)> {
        let mut fs = factors.to_vec();
        // insertion sort, counting transpositions
        let mut swaps = 0usize;
        for i in 1..fs.len() {
            let mut j = i;
            while j > 0 && fs[j - 1] > fs[j] {
                fs.swap(j - 1, j);
                swaps += 1;
                j -= 1;
            }
        }
        for w in fs.windows(2) {
            if w[0] == w[1] {
                return None;
            }
        }
        let mut m = FormMonomial::default();
        for f in fs {
            match f.class {
                VarClass::DZeta => m.dzeta.push(f.index),
                VarClass::DZ => m.dz.push(f.index),
                VarClass::DZetaBar => m.dzetabar.push(f.index),
                VarClass::DZBar => m.dzbar.push(f.index),
                VarClass::Dt => m.dt.push(f.index),
            }
        }
        let sign = if swaps % 2 == 0 { 1 } else { -1 };
        Some((m, sign))
    }

    fn key_string(&self) -> String {
        let block = |name: &str, v: &[u8]| -> String {
            if v.is_empty() {
                String::new()
            } else {
                let idx: Vec<String> = v.iter().map(|i| i.to_string()).collect();
                format!("{}[{}]", name, idx.join(","))
            }
        };
        let mut parts = Vec::new();
        for s in [
            block("dzeta", &self.dzeta),
            block("dz", &self.dz),
            block("dzetabar", &self.dzetabar),
            block("dzbar", &self.dzbar),
            block("dt", &self.dt),
        ] {
            if !s.is_empty() {
                parts.push(s);
            }
        }
        if parts.is_empty() {
            "1".to_string()
        } else {
            parts.join("|")
        }
    }
}

/// A graded antisymmetric coefficient table at a point.
#[derive(Debug, Clone, PartialEq)]
pub struct PointForm {
    /// complex ambient dimension (ζ and z both run over 1..=n)
    pub n: usize,
    /// number of real parameters t
    pub l: usize,
    terms: BTreeMap<FormMonomial, Complex64>,
}

impl PointForm {
    pub fn zero(n: usize, l: usize) -> Self {
        PointForm { n, l, terms: BTreeMap::new() }
    }

    /// The constant function 1 viewed as a 0-form.
    pub fn one(n: usize, l: usize) -> Self {
        let mut f = Self::zero(n, l);
        f.add_term(FormMonomial::unit(), Complex64::new(1.0, 0.0));
        f
    }

    pub fn scalar(n: usize, l: usize, c: Complex64) -> Self {
        let mut f = Self::zero(n, l);
        f.add_term(FormMonomial::unit(), c);
        f
    }

    /// A single basis 1-form with unit coefficient.
    pub fn basis(n: usize, l: usize, class: VarClass, index: u8) -> Self {
        let mut f = Self::zero(n, l);
        let (m, s) = FormMonomial::from_factors(&[Factor { class, index }]).unwrap();
        f.add_term(m, Complex64::new(s as f64, 0.0));
        f
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&FormMonomial, &Complex64)> {
        self.terms.iter()
    }

    pub fn coeff(&self, m: &FormMonomial) -> Complex64 {
        self.terms.get(m).copied().unwrap_or_else(|| Complex64::new(0.0, 0.0))
    }

    pub fn add_term(&mut self, m: FormMonomial, c: Complex64) {
        if c.norm_sqr() == 0.0 {
            return;
        }
        let entry = self.terms.entry(m);
        match entry {
            std::collections::btree_map::Entry::Vacant(v) => {
                v.insert(c);
            }
            std::collections::btree_map::Entry::Occupied(mut o) => {
                let s = *o.get() + c;
                if s.norm_sqr() == 0.0 {
                    o.remove();
                } else {
                    *o.get_mut() = s;
                }
            }
        }
    }

    pub fn add_assign(&mut self, other: &PointForm) {
        for (m, c) in &other.terms {
            self.add_term(m.clone(), *c);
        }
    }

    pub fn sub(&self, other: &PointForm) -> PointForm {
        let mut out = self.clone();
        for (m, c) in &other.terms {
            out.add_term(m.clone(), -*c);
        }
        out
    }

    pub fn add(&self, other: &PointForm) -> PointForm {
        let mut out = self.clone();
        out.add_assign(other);
        out
    }

    pub fn scale(&self, c: Complex64) -> PointForm {
        let mut out = PointForm::zero(self.n, self.l);
        if c.norm_sqr() == 0.0 {
            return out;
        }
        for (m, a) in &self.terms {
            out.terms.insert(m.clone(), a * c);
        }
        out
    }

    /// Drop coefficients with magnitude below `eps` (post-accumulation noise).
    pub fn prune(&mut self, eps: f64) {
        self.terms.retain(|_, c| c.norm() > eps);
    }

    /// Sup of coefficient magnitudes.
    pub fn max_coeff(&self) -> f64 {
        self.terms.values().map(|c| c.norm()).fold(0.0, f64::max)
    }

    /// Keep only terms of the given total degree.
    pub fn degree_part(&self, degree: usize) -> PointForm {
        let mut out = PointForm::zero(self.n, self.l);
        for (m, c) in &self.terms {
            if m.degree() == degree {
                out.terms.insert(m.clone(), *c);
            }
        }
        out
    }

    /// Keep terms with exactly `r` dz̄ factors and `s` combined dζ̄/dt factors.
    pub fn bidegree_part(&self, r: usize, s: usize) -> PointForm {
        let mut out = PointForm::zero(self.n, self.l);
        for (m, c) in &self.terms {
            if m.dzbar.len() == r && m.dzetabar.len() + m.dt.len() == s {
                out.terms.insert(m.clone(), *c);
            }
        }
        out
    }

    /// Graded wedge product with canonical-order sign bookkeeping.
    pub fn wedge(&self, other: &PointForm) -> Result<PointForm, FormError> {
        if self.n != other.n || self.l != other.l {
            return Err(FormError::DimensionMismatch(self.n, self.l, other.n, other.l));
        }
        let mut out = PointForm::zero(self.n, self.l);
        for (ma, ca) in &self.terms {
            let fa = ma.factors();
            for (mb, cb) in &other.terms {
                let mut fs = fa.clone();
                fs.extend(mb.factors());
                if let Some((m, sign)) = FormMonomial::from_factors(&fs) {
                    out.add_term(m, ca * cb * sign as f64);
                }
            }
        }
        Ok(out)
    }

    /// JSON-style text record with sorted monomial keys mapped to `[re, im]`.
    pub fn to_text_record(&self) -> String {
        let mut s = String::from("{");
        let mut first = true;
        for (m, c) in &self.terms {
            if !first {
                s.push_str(", ");
            }
            first = false;
            let _ = write!(s, "\"{}\": [{:.17e}, {:.17e}]", m.key_string(), c.re, c.im);
        }
        s.push('}');
        s
    }
}

/// `ω(η) = dη₁ ∧ … ∧ dηₙ` specialised to the coordinate kernels:
/// `dζ₁∧…∧dζₙ` (or the `dz` analog).
pub fn omega(n: usize, l: usize, class: VarClass) -> PointForm {
    assert!(n >= 1, "omega requires n >= 1");
    let mut m = FormMonomial::unit();
    let idx: Vec<u8> = (1..=n as u8).collect();
    match class {
        VarClass::DZeta => m.dzeta = idx,
        VarClass::DZ => m.dz = idx,
        _ => panic!("omega is only taken in dzeta or dz"),
    }
    let mut f = PointForm::zero(n, l);
    f.add_term(m, Complex64::new(1.0, 0.0));
    f
}
