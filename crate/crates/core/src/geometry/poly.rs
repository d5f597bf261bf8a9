//! Polynomials in the ambient variables (z, z̄) with exact derivative algebra.
//!
//! Defining functions of the model patches are stored in this form, so
//! gradients and Hessians carry no finite-difference error.

use num_complex::Complex64;

/// Sparse polynomial Σ c · z^α z̄^β in n complex variables.
#[derive(Debug, Clone, Default)]
pub struct AmbientPoly {
    pub n: usize,
    /// (coefficient, z-powers, z̄-powers)
    pub terms: Vec<(Complex64, Vec<u8>, Vec<u8>)>,
}

impl AmbientPoly {
    pub fn zero(n: usize) -> Self {
        AmbientPoly { n, terms: Vec::new() }
    }

    pub fn constant(n: usize, c: Complex64) -> Self {
        let mut p = Self::zero(n);
        p.push(c, vec![0; n], vec![0; n]);
        p
    }

    /// z_i as a polynomial (i is 0-based).
    pub fn var(n: usize, i: usize) -> Self {
        let mut zp = vec![0u8; n];
        zp[i] = 1;
        let mut p = Self::zero(n);
        p.push(Complex64::new(1.0, 0.0), zp, vec![0; n]);
        p
    }

    /// z̄_i as a polynomial.
    pub fn var_bar(n: usize, i: usize) -> Self {
        let mut bp = vec![0u8; n];
        bp[i] = 1;
        let mut p = Self::zero(n);
        p.push(Complex64::new(1.0, 0.0), vec![0; n], bp);
        p
    }

    pub fn push(&mut self, c: Complex64, zp: Vec<u8>, bp: Vec<u8>) {
        if c.norm_sqr() == 0.0 {
            return;
        }
        for t in &mut self.terms {
            if t.1 == zp && t.2 == bp {
                t.0 += c;
                return;
            }
        }
        self.terms.push((c, zp, bp));
    }

    pub fn add(&self, other: &AmbientPoly) -> AmbientPoly {
        let mut out = self.clone();
        for (c, zp, bp) in &other.terms {
            out.push(*c, zp.clone(), bp.clone());
        }
        out.compact();
        out
    }

    pub fn scale(&self, c: Complex64) -> AmbientPoly {
        let mut out = self.clone();
        for t in &mut out.terms {
            t.0 *= c;
        }
        out.compact();
        out
    }

    pub fn mul(&self, other: &AmbientPoly) -> AmbientPoly {
        let mut out = AmbientPoly::zero(self.n);
        for (ca, za, ba) in &self.terms {
            for (cb, zb, bb) in &other.terms {
                let zp: Vec<u8> = za.iter().zip(zb).map(|(a, b)| a + b).collect();
                let bp: Vec<u8> = ba.iter().zip(bb).map(|(a, b)| a + b).collect();
                out.push(ca * cb, zp, bp);
            }
        }
        out.compact();
        out
    }

    fn compact(&mut self) {
        self.terms.retain(|t| t.0.norm() > 0.0);
    }

    pub fn eval(&self, z: &[Complex64]) -> Complex64 {
        let mut s = Complex64::new(0.0, 0.0);
        for (c, zp, bp) in &self.terms {
            let mut v = *c;
            for i in 0..self.n {
                for _ in 0..zp[i] {
                    v *= z[i];
                }
                for _ in 0..bp[i] {
                    v *= z[i].conj();
                }
            }
            s += v;
        }
        s
    }

    /// ∂/∂z_i, exact.
    pub fn d_z(&self, i: usize) -> AmbientPoly {
        let mut out = AmbientPoly::zero(self.n);
        for (c, zp, bp) in &self.terms {
            if zp[i] == 0 {
                continue;
            }
            let mut z2 = zp.clone();
            z2[i] -= 1;
            out.push(c * zp[i] as f64, z2, bp.clone());
        }
        out
    }

    /// ∂/∂z̄_i, exact.
    pub fn d_zbar(&self, i: usize) -> AmbientPoly {
        let mut out = AmbientPoly::zero(self.n);
        for (c, zp, bp) in &self.terms {
            if bp[i] == 0 {
                continue;
            }
            let mut b2 = bp.clone();
            b2[i] -= 1;
            out.push(c * bp[i] as f64, zp.clone(), b2);
        }
        out
    }

    /// Whether the polynomial is a real-valued function (conjugation-symmetric
    /// term table) up to `tol` on the coefficients.
    pub fn is_real_valued(&self, tol: f64) -> bool {
        for (c, zp, bp) in &self.terms {
            // the conjugate term must appear with conjugated coefficient
            let mut found = false;
            for (c2, zp2, bp2) in &self.terms {
                if zp2 == bp && bp2 == zp {
                    if (c2 - c.conj()).norm() <= tol {
                        found = true;
                    }
                    break;
                }
            }
            if !found {
                return false;
            }
        }
        true
    }
}
