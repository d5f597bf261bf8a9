//! Point evaluators for vector-valued kernels `η(ζ, z, t)` carrying
//! first-derivative jets in the antiholomorphic and parameter directions.

use std::sync::Arc;

use num_complex::Complex64;

type EvalFn = dyn Fn(&[Complex64], &[Complex64], &[f64]) -> Vec<Complex64> + Send + Sync;
type JetFn = dyn Fn(&[Complex64], &[Complex64], &[f64]) -> JetPoint + Send + Sync;

/// Value and first-derivative jets of `η` at a point.
///
/// `d_zetabar[k][i] = ∂η_k/∂ζ̄_i`, `d_zbar[k][i] = ∂η_k/∂z̄_i`,
/// `d_t[k][a] = ∂η_k/∂t_a`.
#[derive(Debug, Clone)]
pub struct JetPoint {
    pub value: Vec<Complex64>,
    pub d_zetabar: Vec<Vec<Complex64>>,
    pub d_zbar: Vec<Vec<Complex64>>,
    pub d_t: Vec<Vec<Complex64>>,
}

impl JetPoint {
    pub fn zero(n: usize, l: usize) -> Self {
        JetPoint {
            value: vec![Complex64::new(0.0, 0.0); n],
            d_zetabar: vec![vec![Complex64::new(0.0, 0.0); n]; n],
            d_zbar: vec![vec![Complex64::new(0.0, 0.0); n]; n],
            d_t: vec![vec![Complex64::new(0.0, 0.0); l]; n],
        }
    }

    /// Affine combination `Σ w_p · jet_p` (used for simplex-interpolated kernels).
    pub fn affine(parts: &[(f64, &JetPoint)]) -> Self {
        let n = parts[0].1.value.len();
        let l = parts[0].1.d_t[0].len();
        let mut out = JetPoint::zero(n, l);
        for &(w, j) in parts {
            for k in 0..n {
                out.value[k] += w * j.value[k];
                for i in 0..n {
                    out.d_zetabar[k][i] += w * j.d_zetabar[k][i];
                    out.d_zbar[k][i] += w * j.d_zbar[k][i];
                }
                for a in 0..l {
                    out.d_t[k][a] += w * j.d_t[k][a];
                }
            }
        }
        out
    }
}

/// A callable point-evaluator for a ℂⁿ-valued function of `(ζ, z, t)` with
/// first-derivative jets, either analytic (if supplied) or by central
/// finite differences with step `h`.
#[derive(Clone)]
pub struct JetField {
    pub n: usize,
    pub l: usize,
    eval: Arc<EvalFn>,
    analytic: Option<Arc<JetFn>>,
    pub fd_step: f64,
}

pub const DEFAULT_FD_STEP: f64 = 1e-5;

impl JetField {
    pub fn new<F>(n: usize, l: usize, eval: F) -> Self
    where
        F: Fn(&[Complex64], &[Complex64], &[f64]) -> Vec<Complex64> + Send + Sync + 'static,
    {
        JetField { n, l, eval: Arc::new(eval), analytic: None, fd_step: DEFAULT_FD_STEP }
    }

    pub fn with_analytic_jets<F>(mut self, jets: F) -> Self
    where
        F: Fn(&[Complex64], &[Complex64], &[f64]) -> JetPoint + Send + Sync + 'static,
    {
        self.analytic = Some(Arc::new(jets));
        self
    }

    pub fn with_fd_step(mut self, h: f64) -> Self {
        self.fd_step = h;
        self
    }

    pub fn value(&self, zeta: &[Complex64], z: &[Complex64], t: &[f64]) -> Vec<Complex64> {
        (self.eval)(zeta, z, t)
    }

    /// Value plus jets at the point.
    pub fn jet(&self, zeta: &[Complex64], z: &[Complex64], t: &[f64]) -> JetPoint {
        if let Some(a) = &self.analytic {
            return a(zeta, z, t);
        }
        self.fd_jet(zeta, z, t)
    }

    /// Central finite-difference jets: `∂/∂w̄ = ½(∂/∂x + i ∂/∂y)` per complex
    /// coordinate `w = x + iy`.
    fn fd_jet(&self, zeta: &[Complex64], z: &[Complex64], t: &[f64]) -> JetPoint {
        let n = self.n;
        let l = self.l;
        let h = self.fd_step;
        let half = Complex64::new(0.5, 0.0);
        let ihalf = Complex64::new(0.0, 0.5);
        let mut out = JetPoint::zero(n, l);
        out.value = (self.eval)(zeta, z, t);

        let mut zeta_m = zeta.to_vec();
        for i in 0..n {
            let base = zeta[i];
            zeta_m[i] = base + h;
            let fxp = (self.eval)(&zeta_m, z, t);
            zeta_m[i] = base - h;
            let fxm = (self.eval)(&zeta_m, z, t);
            zeta_m[i] = base + Complex64::new(0.0, h);
            let fyp = (self.eval)(&zeta_m, z, t);
            zeta_m[i] = base - Complex64::new(0.0, h);
            let fym = (self.eval)(&zeta_m, z, t);
            zeta_m[i] = base;
            for k in 0..n {
                let dx = (fxp[k] - fxm[k]) / (2.0 * h);
                let dy = (fyp[k] - fym[k]) / (2.0 * h);
                out.d_zetabar[k][i] = half * dx + ihalf * dy;
            }
        }

        let mut z_m = z.to_vec();
        for i in 0..n {
            let base = z[i];
            z_m[i] = base + h;
            let fxp = (self.eval)(zeta, &z_m, t);
            z_m[i] = base - h;
            let fxm = (self.eval)(zeta, &z_m, t);
            z_m[i] = base + Complex64::new(0.0, h);
            let fyp = (self.eval)(zeta, &z_m, t);
            z_m[i] = base - Complex64::new(0.0, h);
            let fym = (self.eval)(zeta, &z_m, t);
            z_m[i] = base;
            for k in 0..n {
                let dx = (fxp[k] - fxm[k]) / (2.0 * h);
                let dy = (fyp[k] - fym[k]) / (2.0 * h);
                out.d_zbar[k][i] = half * dx + ihalf * dy;
            }
        }

        let mut t_m = t.to_vec();
        for a in 0..l {
            let base = t[a];
            t_m[a] = base + h;
            let fp = (self.eval)(zeta, z, &t_m);
            t_m[a] = base - h;
            let fm = (self.eval)(zeta, z, &t_m);
            t_m[a] = base;
            for k in 0..n {
                out.d_t[k][a] = (fp[k] - fm[k]) / (2.0 * h);
            }
        }
        out
    }

    /// The Bochner-Martinelli kernel `β = (ζ̄ − z̄)/|ζ − z|²`, which satisfies
    /// `Σ β_k (ζ_k − z_k) = 1`, with analytic jets.
    pub fn bochner_martinelli(n: usize, l: usize) -> JetField {
        let eval = move |zeta: &[Complex64], z: &[Complex64], _t: &[f64]| -> Vec<Complex64> {
            let d2: f64 = zeta.iter().zip(z).map(|(a, b)| (a - b).norm_sqr()).sum();
            zeta.iter().zip(z).map(|(a, b)| (a - b).conj() / d2).collect()
        };
        let jets = move |zeta: &[Complex64], z: &[Complex64], _t: &[f64]| -> JetPoint {
            // β_k = w̄_k / |w|², w = ζ − z.
            // ∂β_k/∂ζ̄_i = δ_ki/|w|² − w̄_k w_i/|w|⁴,
            // ∂β_k/∂z̄_i = −δ_ki/|w|² + w̄_k w_i/|w|⁴.
            let n = zeta.len();
            let w: Vec<Complex64> = zeta.iter().zip(z).map(|(a, b)| a - b).collect();
            let d2: f64 = w.iter().map(|c| c.norm_sqr()).sum();
            let mut out = JetPoint::zero(n, l);
            for k in 0..n {
                out.value[k] = w[k].conj() / d2;
                for i in 0..n {
                    let delta = if i == k { Complex64::new(1.0, 0.0) } else { Complex64::new(0.0, 0.0) };
                    let g = delta / d2 - w[k].conj() * w[i] / (d2 * d2);
                    out.d_zetabar[k][i] = g;
                    out.d_zbar[k][i] = -g;
                }
            }
            out
        };
        JetField::new(n, l, eval).with_analytic_jets(jets)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fd_jets_converge_quadratically() {
        // smooth test field: eta_k = exp(zeta_k * conj(z_k)) + t^2 * zeta_k
        let n = 2;
        let field = |h: f64| {
            JetField::new(n, 1, |zeta: &[Complex64], z: &[Complex64], t: &[f64]| {
                (0..2)
                    .map(|k| (zeta[k] * z[k].conj()).exp() + t[0] * t[0] * zeta[k].conj())
                    .collect()
            })
            .with_fd_step(h)
        };
        let zeta = [Complex64::new(0.3, -0.2), Complex64::new(-0.1, 0.4)];
        let z = [Complex64::new(0.05, 0.1), Complex64::new(0.2, -0.3)];
        let t = [0.7];
        // exact: d eta_k / d zetabar_i = delta_ki t^2; d/d zbar_i = delta_ki zeta_k exp(...)
        let err = |h: f64| -> f64 {
            let j = field(h).jet(&zeta, &z, &t);
            let mut e: f64 = 0.0;
            for k in 0..2 {
                for i in 0..2 {
                    let exact_zb = if i == k {
                        zeta[k] * (zeta[k] * z[k].conj()).exp()
                    } else {
                        Complex64::new(0.0, 0.0)
                    };
                    let exact_ztb =
                        if i == k { Complex64::new(t[0] * t[0], 0.0) } else { Complex64::new(0.0, 0.0) };
                    e = e.max((j.d_zbar[k][i] - exact_zb).norm());
                    e = e.max((j.d_zetabar[k][i] - exact_ztb).norm());
                }
                let exact_t = 2.0 * t[0] * zeta[k].conj();
                e = e.max((j.d_t[k][0] - exact_t).norm());
            }
            e
        };
        let e1 = err(1e-3);
        let e2 = err(5e-4);
        let ratio = e1 / e2;
        assert!((2.5..6.0).contains(&ratio), "O(h^2) refinement expected, ratio {ratio}");
    }

    #[test]
    fn bm_kernel_satisfies_unit_pairing() {
        let f = JetField::bochner_martinelli(3, 0);
        let zeta = [Complex64::new(1.0, 0.2), Complex64::new(0.0, -0.5), Complex64::new(0.3, 0.0)];
        let z = [Complex64::new(0.1, 0.0), Complex64::new(0.4, 0.1), Complex64::new(-0.2, 0.3)];
        let v = f.value(&zeta, &z, &[]);
        let s: Complex64 = v.iter().zip(zeta.iter().zip(z.iter())).map(|(b, (a, c))| b * (a - c)).sum();
        assert!((s - Complex64::new(1.0, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn bm_analytic_jets_match_fd() {
        let f = JetField::bochner_martinelli(2, 0);
        let fd = JetField::new(2, 0, {
            let g = f.clone();
            move |zeta: &[Complex64], z: &[Complex64], t: &[f64]| g.value(zeta, z, t)
        })
        .with_fd_step(1e-5);
        let zeta = [Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)];
        let z = [Complex64::new(0.0, 0.1), Complex64::new(0.3, 0.0)];
        let ja = f.jet(&zeta, &z, &[]);
        let jf = fd.jet(&zeta, &z, &[]);
        for k in 0..2 {
            for i in 0..2 {
                assert!((ja.d_zetabar[k][i] - jf.d_zetabar[k][i]).norm() < 1e-8);
                assert!((ja.d_zbar[k][i] - jf.d_zbar[k][i]).norm() < 1e-8);
            }
        }
    }
}
