//! Almost CR structures as T′-valued (0,1)-forms: the normalization gauge,
//! the integrability residual, the deformed tangential operator ∂̄^μ, the
//! exponential/inverse diffeomorphism maps, and the pushforward of μ under
//! near-identity maps.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use thiserror::Error;

use crate::geometry::grid::GridScalar;
use crate::geometry::{build_frame, extension_dzbar, DefiningSet, FrameForm, GraphManifold};

#[derive(Debug, Error)]
pub enum DeformError {
    #[error("map is not a contraction: |f|_1 estimate {0:.3}")]
    NotContraction(f64),
    #[error("fixed point iteration failed to converge (residual {0:.3e})")]
    InverseDiverged(f64),
    #[error("frame expansion near-singular at node {0}")]
    SingularExpansion(usize),
    #[error("admissibility failure: composite norm {0:.3} too close to 1")]
    Admissibility(f64),
    #[error(transparent)]
    Geometry(#[from] crate::geometry::GeometryError),
}

/// μ = Σ_i μ^i ∂/∂z_i with μ^i = Σ_j μ^i_j dz̄_j, coefficients sampled on
/// the patch grid (ambient indices, stored flattened as `comps[i·n + j]`).
#[derive(Debug, Clone)]
pub struct DeformationForm {
    pub n: usize,
    pub comps: Vec<GridScalar>,
}

impl DeformationForm {
    pub fn zeros(man: &GraphManifold) -> Self {
        let n = man.n;
        DeformationForm { n, comps: (0..n * n).map(|_| GridScalar::zeros(&man.grid)).collect() }
    }

    pub fn from_fn<F>(man: &GraphManifold, f: F) -> Self
    where
        F: Fn(usize, usize, &[f64]) -> Complex64,
    {
        let n = man.n;
        let comps = (0..n * n)
            .map(|k| {
                let (i, j) = (k / n, k % n);
                GridScalar::from_fn(&man.grid, |u| f(i, j, u))
            })
            .collect();
        DeformationForm { n, comps }
    }

    pub fn comp(&self, i: usize, j: usize) -> &GridScalar {
        &self.comps[i * self.n + j]
    }

    pub fn max_abs(&self) -> f64 {
        self.comps.iter().map(|g| g.max_abs()).fold(0.0, f64::max)
    }

    pub fn add_scaled(&self, other: &DeformationForm, c: Complex64) -> DeformationForm {
        let mut out = self.clone();
        for (a, b) in out.comps.iter_mut().zip(&other.comps) {
            for (x, y) in a.values.iter_mut().zip(&b.values) {
                *x += c * y;
            }
        }
        out
    }

    /// μ = ∂̄_M f for an ambient vector field f given with its value and
    /// graph-coordinate gradient (manufactured integrable-to-first-order
    /// deformations).
    pub fn from_dbar_of_field(
        man: &GraphManifold,
        rho: &DefiningSet,
        field: &[GridScalar],
    ) -> Result<DeformationForm, DeformError> {
        let n = man.n;
        let mut comps = Vec::with_capacity(n * n);
        for fi in field {
            let dbar = extension_dzbar(man, fi);
            for d in dbar {
                comps.push(d);
            }
        }
        let raw = DeformationForm { n, comps };
        normalize_mu(man, rho, &raw)
    }

    /// μ = ∂̄_M f for a displacement field given as an ambient closure:
    /// the coefficients are the closure's antiholomorphic jets at the
    /// nodes, so a later pushforward under exp(f) sees exactly matching
    /// first-order data.
    pub fn from_dbar_of_map(
        man: &GraphManifold,
        rho: &DefiningSet,
        map: &NearIdentityMap,
    ) -> Result<DeformationForm, DeformError> {
        let n = man.n;
        let mut comps = vec![GridScalar::zeros(&man.grid); n * n];
        for (node, u) in man.grid.nodes() {
            let z = man.lift(&u);
            let (_, f_dzb) = map.f_jets(&z);
            for i in 0..n {
                for j in 0..n {
                    comps[i * n + j].values[node] = f_dzb[i][j];
                }
            }
        }
        let raw = DeformationForm { n, comps };
        normalize_mu(man, rho, &raw)
    }

    /// Versioned text serialization: per-node complex matrices.
    pub fn to_text(&self, man: &GraphManifold) -> String {
        use std::fmt::Write as _;
        let mut s = String::new();
        let _ = writeln!(s, "MUFIELD v1 n={} nodes={}", self.n, man.grid.len());
        for node in 0..man.grid.len() {
            for c in &self.comps {
                let v = c.values[node];
                let _ = write!(s, "{:.17e} {:.17e} ", v.re, v.im);
            }
            let _ = writeln!(s);
        }
        s
    }

    pub fn from_text(man: &GraphManifold, text: &str) -> Option<DeformationForm> {
        let mut lines = text.lines();
        let header = lines.next()?;
        if !header.starts_with("MUFIELD v1") {
            return None;
        }
        let n: usize = header.split("n=").nth(1)?.split_whitespace().next()?.parse().ok()?;
        let mut comps = vec![GridScalar::zeros(&man.grid); n * n];
        for (node, line) in lines.enumerate() {
            let vals: Vec<f64> = line.split_whitespace().filter_map(|v| v.parse().ok()).collect();
            for k in 0..n * n {
                comps[k].values[node] = Complex64::new(vals[2 * k], vals[2 * k + 1]);
            }
        }
        Some(DeformationForm { n, comps })
    }
}

/// Enforce the gauge Σ_j μ^i_j p̄_l^j = 0:
/// μ^{i′} = μ^i − Σ_l (Σ_j μ^i_j p̄_l^j)·∂̄ρ_l. Values on M are unchanged
/// as tangential forms; the operation is idempotent.
pub fn normalize_mu(
    man: &GraphManifold,
    rho: &DefiningSet,
    mu: &DeformationForm,
) -> Result<DeformationForm, DeformError> {
    let n = man.n;
    let m = man.m;
    let mut out = mu.clone();
    for (node, u) in man.grid.nodes() {
        let z = man.lift(&u);
        let frame = build_frame(rho, &z)?;
        let grad = rho.grad_z(&z);
        for i in 0..n {
            // contraction c_l = Σ_j μ^i_j p̄_l^j
            for l in 0..m {
                let mut c = Complex64::new(0.0, 0.0);
                for j in 0..n {
                    c += mu.comp(i, j).values[node] * frame.p_bar(l, j);
                }
                // subtract c_l · ∂ρ_l/∂z̄_j
                for j in 0..n {
                    out.comps[i * n + j].values[node] -= c * grad[l][j].conj();
                }
            }
        }
    }
    Ok(out)
}

/// Residual of the gauge condition (51).
pub fn gauge_residual(
    man: &GraphManifold,
    rho: &DefiningSet,
    mu: &DeformationForm,
) -> Result<f64, DeformError> {
    let n = man.n;
    let m = man.m;
    let mut worst: f64 = 0.0;
    for (node, u) in man.grid.nodes() {
        let z = man.lift(&u);
        let frame = build_frame(rho, &z)?;
        for i in 0..n {
            for l in 0..m {
                let mut c = Complex64::new(0.0, 0.0);
                for j in 0..n {
                    c += mu.comp(i, j).values[node] * frame.p_bar(l, j);
                }
                worst = worst.max(c.norm());
            }
        }
    }
    Ok(worst)
}

/// The tangential holomorphic derivative ∂^τ g/∂z_k = (∂/∂z_k − Σ_l
/// (∂ρ_l/∂z_k) P″_l)(E g) on grid scalars.
pub fn tau_derivatives(
    man: &GraphManifold,
    rho: &DefiningSet,
    g: &GridScalar,
) -> Result<Vec<GridScalar>, DeformError> {
    let n = man.n;
    let m = man.m;
    let grid = &man.grid;
    // ambient holomorphic derivatives of E(g): ∂/∂z_s = conj-partner of the
    // antiholomorphic table
    let half = Complex64::new(0.5, 0.0);
    let mihalf = Complex64::new(0.0, -0.5);
    let mut d_hol: Vec<GridScalar> = Vec::with_capacity(n);
    for s in 0..n {
        if s < m {
            let dy = g.partial(grid, s);
            let mut d = GridScalar::zeros(grid);
            for (i, v) in dy.values.iter().enumerate() {
                d.values[i] = mihalf * v;
            }
            d_hol.push(d);
        } else {
            let a = s - m;
            let dre = g.partial(grid, m + 2 * a);
            let dim = g.partial(grid, m + 2 * a + 1);
            let mut d = GridScalar::zeros(grid);
            for i in 0..d.values.len() {
                d.values[i] = half * dre.values[i] + mihalf * dim.values[i];
            }
            d_hol.push(d);
        }
    }
    let d_bar = extension_dzbar(man, g);
    let mut out = vec![GridScalar::zeros(grid); n];
    for (node, u) in grid.nodes() {
        let z = man.lift(&u);
        let frame = build_frame(rho, &z)?;
        let grad = rho.grad_z(&z);
        for (k, ok) in out.iter_mut().enumerate() {
            let mut v = d_hol[k].values[node];
            for l in 0..m {
                // P″_l(E g) = Σ_s p̄_l^s ∂E(g)/∂z̄_s
                let mut pl = Complex64::new(0.0, 0.0);
                for s in 0..n {
                    pl += frame.p_bar(l, s) * d_bar[s].values[node];
                }
                v -= grad[l][k] * pl;
            }
            ok.values[node] = v;
        }
    }
    Ok(out)
}

/// ∂̄^μ_M f = ∂̄_M f − Σ_j (∂^τ f/∂z_j) μ^j as an ambient-indexed (0,1)
/// table.
pub fn dbar_mu(
    man: &GraphManifold,
    rho: &DefiningSet,
    mu: &DeformationForm,
    f: &GridScalar,
) -> Result<Vec<GridScalar>, DeformError> {
    let n = man.n;
    let mut out = extension_dzbar(man, f);
    let tau = tau_derivatives(man, rho, f)?;
    for node in 0..man.grid.len() {
        for k in 0..n {
            let mut corr = Complex64::new(0.0, 0.0);
            for j in 0..n {
                corr += tau[j].values[node] * mu.comp(j, k).values[node];
            }
            out[k].values[node] -= corr;
        }
    }
    Ok(out)
}

/// Antisymmetric (0,2) coefficient table over ambient index pairs.
pub struct TwoForm {
    pub n: usize,
    /// comps[a·n + b] for a < b
    pub comps: Vec<GridScalar>,
}

impl TwoForm {
    fn zeros(man: &GraphManifold) -> Self {
        let n = man.n;
        TwoForm { n, comps: (0..n * n).map(|_| GridScalar::zeros(&man.grid)).collect() }
    }

    pub fn comp(&self, a: usize, b: usize) -> &GridScalar {
        &self.comps[a * self.n + b]
    }

    pub fn max_abs(&self) -> f64 {
        self.comps.iter().map(|g| g.max_abs()).fold(0.0, f64::max)
    }
}

fn wedge_accumulate(
    out: &mut TwoForm,
    scale: Complex64,
    alpha: &[Complex64],
    beta: &[Complex64],
    node: usize,
) {
    let n = out.n;
    for a in 0..n {
        for b in (a + 1)..n {
            let v = scale * (alpha[a] * beta[b] - alpha[b] * beta[a]);
            out.comps[a * n + b].values[node] += v;
        }
    }
}


/// The (0,2) part of dZ̄^c in the substitution calculus of the deformed
/// ideal (dz_s ≡ −μ^s, ∂ρ_l ≡ −μ(ρ_l)):
/// dZ̄^c ≡ −Σ_l (∂̄_M p̄_l^c − Σ_t (∂^τ p̄_l^c/∂z_t) μ^t) ∧ μ(ρ_l)
///        + Σ_l p̄_l^c Σ_s μ^s ∧ (Σ_t ∂²ρ_l/∂z_s∂z̄_t · dz̄_t).
/// The mixed-Hessian completion is what makes the deformed complex close
/// on curved models.
fn dzbar_subst_tables(
    man: &GraphManifold,
    rho: &DefiningSet,
    mu: &DeformationForm,
) -> Result<Vec<TwoForm>, DeformError> {
    let n = man.n;
    let m = man.m;
    let grid = &man.grid;
    let mut pbar: Vec<GridScalar> = vec![GridScalar::zeros(grid); m * n];
    let mut grad_tab: Vec<GridScalar> = vec![GridScalar::zeros(grid); m * n];
    let mut hess: Vec<Vec<DMatrix<Complex64>>> = Vec::with_capacity(grid.len());
    for (node, u) in grid.nodes() {
        let z = man.lift(&u);
        let frame = build_frame(rho, &z)?;
        let grad = rho.grad_z(&z);
        for l in 0..m {
            for j in 0..n {
                pbar[l * n + j].values[node] = frame.p_bar(l, j);
                grad_tab[l * n + j].values[node] = grad[l][j];
            }
        }
        hess.push((0..m).map(|l| rho.hessian_mixed(l, &z)).collect());
    }
    let mut pbar_dbar = Vec::with_capacity(m * n);
    let mut pbar_tau = Vec::with_capacity(m * n);
    for t in &pbar {
        pbar_dbar.push(extension_dzbar(man, t));
        pbar_tau.push(tau_derivatives(man, rho, t)?);
    }
    let mut out = Vec::with_capacity(n);
    for c in 0..n {
        let mut tf = TwoForm::zeros(man);
        for node in 0..grid.len() {
            // μ(ρ_l) rows
            for l in 0..m {
                let mu_rho: Vec<Complex64> = (0..n)
                    .map(|a| {
                        (0..n)
                            .map(|j| grad_tab[l * n + j].values[node] * mu.comp(j, a).values[node])
                            .sum()
                    })
                    .collect();
                let inner: Vec<Complex64> = (0..n)
                    .map(|a| {
                        let mut v = pbar_dbar[l * n + c][a].values[node];
                        for t in 0..n {
                            v -= pbar_tau[l * n + c][t].values[node] * mu.comp(t, a).values[node];
                        }
                        v
                    })
                    .collect();
                wedge_accumulate(&mut tf, Complex64::new(-1.0, 0.0), &inner, &mu_rho, node);
                // mixed-Hessian completion
                let plc = pbar[l * n + c].values[node];
                if plc.norm_sqr() == 0.0 {
                    continue;
                }
                for sdx in 0..n {
                    let mu_s: Vec<Complex64> =
                        (0..n).map(|a| mu.comp(sdx, a).values[node]).collect();
                    let hrow: Vec<Complex64> = (0..n).map(|t| hess[node][l][(sdx, t)]).collect();
                    wedge_accumulate(&mut tf, plc, &mu_s, &hrow, node);
                }
            }
        }
        out.push(tf);
    }
    Ok(out)
}

/// The integrability residual Φ(μ): Φ^i = ∂̄_M μ^i
/// − Σ_{k,j} (∂^τ μ^i_j/∂z_k) μ^k ∧ dz̄_j
/// − Σ_j μ^i_j Σ_l (∂̄_M p̄_l^j − Σ_k (∂^τ p̄_l^j/∂z_k) μ^k) ∧ μ(ρ_l),
/// with μ(ρ_l) = Σ_j (∂ρ_l/∂z_j) μ^j. Vanishes exactly at μ = 0.
pub fn integrability_residual(
    man: &GraphManifold,
    rho: &DefiningSet,
    mu: &DeformationForm,
) -> Result<Vec<TwoForm>, DeformError> {
    let n = man.n;
    let grid = &man.grid;
    let dz_subst = dzbar_subst_tables(man, rho, mu)?;
    // ∂̄_M and ∂^τ of the μ components
    let mut mu_dbar: Vec<Vec<GridScalar>> = Vec::with_capacity(n * n);
    let mut mu_tau: Vec<Vec<GridScalar>> = Vec::with_capacity(n * n);
    for c in &mu.comps {
        mu_dbar.push(extension_dzbar(man, c));
        mu_tau.push(tau_derivatives(man, rho, c)?);
    }

    let mut result = Vec::with_capacity(n);
    for i in 0..n {
        let mut phi = TwoForm::zeros(man);
        for node in 0..grid.len() {
            // ∂̄_M μ^i: antisymmetrised table
            for a in 0..n {
                for b in (a + 1)..n {
                    let v = mu_dbar[i * n + b][a].values[node] - mu_dbar[i * n + a][b].values[node];
                    phi.comps[a * n + b].values[node] += v;
                }
            }
            // − Σ_{k,j} (∂^τ μ^i_j/∂z_k) μ^k ∧ dz̄_j
            for j in 0..n {
                for k in 0..n {
                    let coef = mu_tau[i * n + j][k].values[node];
                    if coef.norm_sqr() == 0.0 {
                        continue;
                    }
                    let mu_k: Vec<Complex64> =
                        (0..n).map(|a| mu.comp(k, a).values[node]).collect();
                    let mut basis = vec![Complex64::new(0.0, 0.0); n];
                    basis[j] = Complex64::new(1.0, 0.0);
                    wedge_accumulate(&mut phi, -coef, &mu_k, &basis, node);
                }
            }
            // + Σ_j μ^i_j · (dZ̄^j in the substitution calculus)
            for j in 0..n {
                let muij = mu.comp(i, j).values[node];
                if muij.norm_sqr() == 0.0 {
                    continue;
                }
                for a in 0..n {
                    for b in (a + 1)..n {
                        phi.comps[a * n + b].values[node] +=
                            muij * dz_subst[j].comps[a * n + b].values[node];
                    }
                }
            }
        }
        result.push(phi);
    }
    Ok(result)
}

/// Admissibility of μ (no eigenvalue 1): the operator-norm square of the
/// contraction matrix on the tangential basis must stay below 1 − margin.
pub fn admissibility_margin(
    man: &GraphManifold,
    rho: &DefiningSet,
    mu: &DeformationForm,
) -> Result<f64, DeformError> {
    let n = man.n;
    let m = man.m;
    let dim = n - m;
    let mut worst: f64 = 0.0;
    for (node, u) in man.grid.nodes() {
        let z = man.lift(&u);
        let frame = build_frame(rho, &z)?;
        // K[a][b] = μ^{(m+b)}(Z̄_{m+a}) contractions on the basis
        let mut k_mat = DMatrix::from_element(dim, dim, Complex64::new(0.0, 0.0));
        for a in 0..dim {
            let zb = frame.zbar_vec(m + a);
            for b in 0..dim {
                let mut v = Complex64::new(0.0, 0.0);
                for c in 0..n {
                    v += mu.comp(m + b, c).values[node] * zb[c];
                }
                k_mat[(a, b)] = v;
            }
        }
        let svd = k_mat.svd(false, false);
        let sigma = svd.singular_values.iter().fold(0.0f64, |acc, &s| acc.max(s));
        worst = worst.max(sigma * sigma);
    }
    if worst >= 1.0 - 1e-6 {
        return Err(DeformError::Admissibility(worst));
    }
    Ok(1.0 - worst)
}

// ---------------------------------------------------------------------------
// Near-identity maps

type MapFn = dyn Fn(&[Complex64]) -> Vec<Complex64> + Send + Sync;

/// F(z) = z + f(z) with an optional inverse G(z) = z + g(z).
#[derive(Clone)]
pub struct NearIdentityMap {
    pub n: usize,
    pub f: Arc<MapFn>,
    pub inverse: Option<Arc<MapFn>>,
    pub fd_step: f64,
}

impl NearIdentityMap {
    pub fn identity(n: usize) -> Self {
        NearIdentityMap {
            n,
            f: Arc::new(|z: &[Complex64]| vec![Complex64::new(0.0, 0.0); z.len()]),
            inverse: Some(Arc::new(|z: &[Complex64]| vec![Complex64::new(0.0, 0.0); z.len()])),
            fd_step: 1e-5,
        }
    }

    pub fn apply(&self, z: &[Complex64]) -> Vec<Complex64> {
        let fv = (self.f)(z);
        z.iter().zip(fv).map(|(a, b)| a + b).collect()
    }

    pub fn apply_inverse(&self, z: &[Complex64]) -> Option<Vec<Complex64>> {
        let g = self.inverse.as_ref()?;
        let gv = g(z);
        Some(z.iter().zip(gv).map(|(a, b)| a + b).collect())
    }

    /// Holomorphic and antiholomorphic jets of f by central differences.
    pub fn f_jets(&self, z: &[Complex64]) -> (Vec<Vec<Complex64>>, Vec<Vec<Complex64>>) {
        let n = self.n;
        let h = self.fd_step;
        let mut dz = vec![vec![Complex64::new(0.0, 0.0); n]; n]; // [s][j] = ∂f_s/∂z_j
        let mut dzb = vec![vec![Complex64::new(0.0, 0.0); n]; n];
        let mut zp = z.to_vec();
        for j in 0..n {
            let base = z[j];
            zp[j] = base + h;
            let fxp = (self.f)(&zp);
            zp[j] = base - h;
            let fxm = (self.f)(&zp);
            zp[j] = base + Complex64::new(0.0, h);
            let fyp = (self.f)(&zp);
            zp[j] = base - Complex64::new(0.0, h);
            let fym = (self.f)(&zp);
            zp[j] = base;
            for s in 0..n {
                let dx = (fxp[s] - fxm[s]) / (2.0 * h);
                let dy = (fyp[s] - fym[s]) / (2.0 * h);
                dz[s][j] = 0.5 * dx - Complex64::new(0.0, 0.5) * dy;
                dzb[s][j] = 0.5 * dx + Complex64::new(0.0, 0.5) * dy;
            }
        }
        (dz, dzb)
    }
}

/// The exponential map in the flat ambient metric: exp(ξ) = id + ξ (the
/// curvature correction A(z, ξ) vanishes identically).
pub fn exp_map<F>(n: usize, xi: F) -> NearIdentityMap
where
    F: Fn(&[Complex64]) -> Vec<Complex64> + Send + Sync + 'static,
{
    NearIdentityMap { n, f: Arc::new(xi), inverse: None, fd_step: 1e-5 }
}

/// Populate the inverse by the fixed-point iteration
/// g_{k+1}(z) = −f(z + g_k(z)); requires a contraction (|f|₁ < 1).
pub fn invert_map(map: &NearIdentityMap, f_norm_1: f64) -> Result<NearIdentityMap, DeformError> {
    if f_norm_1 >= 0.5 {
        return Err(DeformError::NotContraction(f_norm_1));
    }
    let f = map.f.clone();
    let n = map.n;
    let inverse = Arc::new(move |z: &[Complex64]| -> Vec<Complex64> {
        let mut g = vec![Complex64::new(0.0, 0.0); n];
        for _ in 0..100 {
            let arg: Vec<Complex64> = z.iter().zip(&g).map(|(a, b)| a + b).collect();
            let fv = f(&arg);
            let mut delta: f64 = 0.0;
            for (gi, fi) in g.iter_mut().zip(&fv) {
                let new = -fi;
                delta = delta.max((new - *gi).norm());
                *gi = new;
            }
            if delta < 1e-13 {
                break;
            }
        }
        g
    });
    Ok(NearIdentityMap { n, f: map.f.clone(), inverse: Some(inverse), fd_step: map.fd_step })
}

/// Composition residual max |F∘G − id| over sample points.
pub fn inverse_residual(map: &NearIdentityMap, samples: &[Vec<Complex64>]) -> f64 {
    let mut worst: f64 = 0.0;
    for z in samples {
        if let Some(g) = map.apply_inverse(z) {
            let back = map.apply(&g);
            let d: f64 = back.iter().zip(z).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
            worst = worst.max(d);
        }
    }
    worst
}

// ---------------------------------------------------------------------------
// Pushforward

/// Result of pushing μ forward under F: coefficients on the image manifold,
/// sampled at the images of the source grid nodes.
pub struct PushforwardResult {
    pub mu_star: DeformationForm,
    /// sup over nodes of the pushed-forward basis defect (how far DF[X̄_i]
    /// is from the span of the new structure)
    pub basis_defect: f64,
}

/// Pushforward of the structure form: per node solve the frame expansion at the
/// image point and read off μ*. The image manifold is described by
/// ρ* = ρ∘G through the populated inverse.
pub fn pushforward_mu(
    man: &GraphManifold,
    rho: &DefiningSet,
    mu: &DeformationForm,
    map: &NearIdentityMap,
) -> Result<PushforwardResult, DeformError> {
    let n = man.n;
    let m = man.m;
    let dim = n - m;
    let map_inv = map.inverse.as_ref().ok_or(DeformError::NotContraction(1.0))?;
    let _ = map_inv;
    let mut out = DeformationForm::zeros(man);
    let mut basis_defect: f64 = 0.0;

    for (node, u) in man.grid.nodes() {
        let z = man.lift(&u);
        let frame = build_frame(rho, &z)?;
        let grad = rho.grad_z(&z);
        let (f_dz, f_dzb) = map.f_jets(&z);
        let w = map.apply(&z);

        // ρ*-gradients at the image: chain rule through G
        let g_jets = inverse_jets(map, &w);
        let grad_star = rho_star_grad(rho, map, &w, &g_jets);

        // frame at the image from the ρ* gradients
        let frame_star = frame_from_grad(&grad_star).ok_or(DeformError::SingularExpansion(node))?;

        // contractions μ_i^j = μ^j(Z̄_{m+i}) = μ^j_{m+i} in the normalized gauge
        let mu_c = |i_basis: usize, j: usize| -> Complex64 {
            let zb = frame.zbar_vec(m + i_basis);
            (0..n).map(|c| mu.comp(j, c).values[node] * zb[c]).sum()
        };

        // b-vector: the ∂/∂z_s components of DF[X̄_i]
        let mut b = vec![vec![Complex64::new(0.0, 0.0); n]; dim];
        for i in 0..dim {
            let zb = frame.zbar_vec(m + i);
            for s in 0..n {
                // Z̄_i(f_s) = Σ_c (Z̄_i)_c ∂f_s/∂z̄_c
                let mut zbar_f = Complex64::new(0.0, 0.0);
                for c in 0..n {
                    zbar_f += zb[c] * f_dzb[s][c];
                }
                let mut v = zbar_f - mu_c(i, s);
                for j in 0..n {
                    let muij = mu_c(i, j);
                    if muij.norm_sqr() == 0.0 {
                        continue;
                    }
                    for l in 0..m {
                        // P″_l(f_s) = Σ_c p̄_l^c ∂f_s/∂z̄_c
                        let mut pf = Complex64::new(0.0, 0.0);
                        for c in 0..n {
                            pf += frame.p_bar(l, c) * f_dzb[s][c];
                        }
                        v += muij * grad[l][j] * pf;
                    }
                    v -= muij * f_dz[s][j];
                }
                b[i][s] = v;
            }
        }

        // v_i: the ∂/∂z̄_s components of DF[X̄_i]
        let mut vbar = vec![vec![Complex64::new(0.0, 0.0); n]; dim];
        for i in 0..dim {
            let zb = frame.zbar_vec(m + i);
            for s in 0..n {
                let mut v = zb[s];
                // Z̄_i(conj F_s) = Σ_c (Z̄_i)_c conj(∂F_s/∂z_c)
                let mut zbar_fbar = Complex64::new(0.0, 0.0);
                for c in 0..n {
                    zbar_fbar += zb[c] * f_dz[s][c].conj();
                }
                v += zbar_fbar;
                for j in 0..n {
                    let muij = mu_c(i, j);
                    if muij.norm_sqr() == 0.0 {
                        continue;
                    }
                    for l in 0..m {
                        // P″_l(conj F_s) = p̄_l^s + Σ_c p̄_l^c conj(∂f_s/∂z_c)
                        let mut pf = frame.p_bar(l, s);
                        for c in 0..n {
                            pf += frame.p_bar(l, c) * f_dz[s][c].conj();
                        }
                        v += muij * grad[l][j] * pf;
                    }
                    v -= muij * f_dz[s][j].conj();
                }
                vbar[i][s] = v;
            }
        }

        // expand v_i over the image frame {Z̄*_(basis), P″*}: n×n solve
        let mut basis_mat = DMatrix::from_element(n, n, Complex64::new(0.0, 0.0));
        for (col, zbst) in (0..dim).map(|a| frame_star.zbar_vec(m + a)).enumerate() {
            for r in 0..n {
                basis_mat[(r, col)] = zbst[r];
            }
        }
        for l in 0..m {
            for r in 0..n {
                basis_mat[(r, dim + l)] = frame_star.p_bar(l, r);
            }
        }
        let lu = basis_mat.clone().lu();
        let mut e_mat = DMatrix::from_element(dim, dim, Complex64::new(0.0, 0.0));
        for i in 0..dim {
            let rhs = DVector::from_fn(n, |r, _| vbar[i][r]);
            let sol = lu.solve(&rhs).ok_or(DeformError::SingularExpansion(node))?;
            for jcol in 0..dim {
                e_mat[(i, jcol)] = sol[jcol];
            }
        }
        let e_inv = e_mat.clone().try_inverse().ok_or(DeformError::SingularExpansion(node))?;

        // μ*_i^s = −Σ_j (E⁻¹)_{ij} b_j^s (contractions on the image basis)
        let mut mu_star_c = vec![vec![Complex64::new(0.0, 0.0); n]; dim];
        for i in 0..dim {
            for s in 0..n {
                let mut v = Complex64::new(0.0, 0.0);
                for j in 0..dim {
                    v += e_inv[(i, j)] * b[j][s];
                }
                mu_star_c[i][s] = -v;
            }
        }

        // convert contractions to gauge-normalized ambient components:
        // rows = conj(Z̄*_(m+a)) pairing + p̄* gauge rows
        let mut sys = DMatrix::from_element(n, n, Complex64::new(0.0, 0.0));
        for a in 0..dim {
            let zbst = frame_star.zbar_vec(m + a);
            for c in 0..n {
                sys[(a, c)] = zbst[c];
            }
        }
        for l in 0..m {
            for c in 0..n {
                sys[(dim + l, c)] = frame_star.p_bar(l, c);
            }
        }
        let lu2 = sys.lu();
        for s in 0..n {
            let rhs = DVector::from_fn(n, |r, _| {
                if r < dim {
                    mu_star_c[r][s]
                } else {
                    Complex64::new(0.0, 0.0)
                }
            });
            let sol = lu2.solve(&rhs).ok_or(DeformError::SingularExpansion(node))?;
            for c in 0..n {
                out.comps[s * n + c].values[node] = sol[c];
            }
        }

        // basis defect: DF[X̄_i] should lie in the span of
        // {X̄*_i = Z̄*_i + Σ μ*(normal-corrections) − Σ μ*∂/∂z}: verify by
        // reconstructing the z-components from the expansion
        for i in 0..dim {
            for s in 0..n {
                let mut recon = Complex64::new(0.0, 0.0);
                for j in 0..dim {
                    recon += e_mat[(i, j)] * (-mu_star_c[j][s]);
                }
                basis_defect = basis_defect.max((recon - b[i][s]).norm());
            }
        }
    }
    Ok(PushforwardResult { mu_star: out, basis_defect })
}

/// Jets of the inverse displacement g at a point (central differences; the
/// inverse must be populated).
fn inverse_jets(map: &NearIdentityMap, w: &[Complex64]) -> (Vec<Vec<Complex64>>, Vec<Vec<Complex64>>) {
    let g = map.inverse.as_ref().expect("inverse populated");
    let n = map.n;
    let h = map.fd_step;
    let mut dz = vec![vec![Complex64::new(0.0, 0.0); n]; n];
    let mut dzb = vec![vec![Complex64::new(0.0, 0.0); n]; n];
    let mut wp = w.to_vec();
    for j in 0..n {
        let base = w[j];
        wp[j] = base + h;
        let fxp = g(&wp);
        wp[j] = base - h;
        let fxm = g(&wp);
        wp[j] = base + Complex64::new(0.0, h);
        let fyp = g(&wp);
        wp[j] = base - Complex64::new(0.0, h);
        let fym = g(&wp);
        wp[j] = base;
        for s in 0..n {
            let dx = (fxp[s] - fxm[s]) / (2.0 * h);
            let dy = (fyp[s] - fym[s]) / (2.0 * h);
            dz[s][j] = 0.5 * dx - Complex64::new(0.0, 0.5) * dy;
            dzb[s][j] = 0.5 * dx + Complex64::new(0.0, 0.5) * dy;
        }
    }
    (dz, dzb)
}

/// Gradients of ρ*_l = ρ_l ∘ G at the image point w.
fn rho_star_grad(
    rho: &DefiningSet,
    map: &NearIdentityMap,
    w: &[Complex64],
    g_jets: &(Vec<Vec<Complex64>>, Vec<Vec<Complex64>>),
) -> Vec<Vec<Complex64>> {
    let n = rho.n;
    let gw = map.apply_inverse(w).expect("inverse populated");
    let grad = rho.grad_z(&gw);
    let (g_dz, g_dzb) = g_jets;
    let mut out = vec![vec![Complex64::new(0.0, 0.0); n]; rho.m];
    for l in 0..rho.m {
        for s in 0..n {
            // ∂(ρ_l∘G)/∂z_s = Σ_t [∂ρ_l/∂z_t·∂G_t/∂z_s + ∂ρ_l/∂z̄_t·∂Ḡ_t/∂z_s]
            let mut v = Complex64::new(0.0, 0.0);
            for t in 0..n {
                let dg = if t == s { Complex64::new(1.0, 0.0) } else { Complex64::new(0.0, 0.0) }
                    + g_dz[t][s];
                let dgbar = g_dzb[t][s].conj();
                v += grad[l][t] * dg + grad[l][t].conj() * dgbar;
            }
            out[l][s] = v;
        }
    }
    out
}

/// Frame data from explicit defining-function gradients (for image
/// manifolds known through ρ∘G rather than polynomials).
fn frame_from_grad(grad: &[Vec<Complex64>]) -> Option<crate::geometry::FramePoint> {
    let m = grad.len();
    let n = grad[0].len();
    let ipa = DMatrix::from_fn(m, m, |l, s| {
        (0..n).map(|i| grad[l][i] * grad[s][i].conj()).sum::<Complex64>()
    });
    let inv = ipa.try_inverse()?;
    let mut p = vec![vec![Complex64::new(0.0, 0.0); n]; m];
    for (s, ps) in p.iter_mut().enumerate() {
        for (i, psi) in ps.iter_mut().enumerate() {
            for t in 0..m {
                *psi += grad[t][i].conj() * inv[(t, s)];
            }
        }
    }
    let mut z_vec = vec![vec![Complex64::new(0.0, 0.0); n]; n];
    for i in 0..n {
        z_vec[i][i] = Complex64::new(1.0, 0.0);
        for l in 0..m {
            for s in 0..n {
                let c = grad[l][i] * p[l][s];
                z_vec[i][s] -= c;
            }
        }
    }
    Some(crate::geometry::FramePoint { n, m, p, dz_rho: grad.to_vec(), z_vec })
}

/// The CR structure induced on M by a diffeomorphism F with F(M) = M:
/// the pushforward of μ ≡ 0, sampled so the outputs live at the grid nodes
/// (the source point of each node is G(node)). Integrability is inherited
/// from the ambient structure, making this the completeness test for the
/// residual Φ.
pub fn induced_structure_on_grid(
    man: &GraphManifold,
    rho: &DefiningSet,
    map: &NearIdentityMap,
) -> Result<DeformationForm, DeformError> {
    let n = man.n;
    let m = man.m;
    let dim = n - m;
    let mut out = DeformationForm::zeros(man);
    for (node, u) in man.grid.nodes() {
        let w_target = man.lift(&u);
        let z_src = map.apply_inverse(&w_target).ok_or(DeformError::NotContraction(1.0))?;
        let frame = build_frame(rho, &z_src)?;
        let (f_dz, f_dzb) = map.f_jets(&z_src);
        let g_jets = inverse_jets(map, &w_target);
        let grad_star = rho_star_grad(rho, map, &w_target, &g_jets);
        let frame_star = frame_from_grad(&grad_star).ok_or(DeformError::SingularExpansion(node))?;

        // μ = 0: b_i^s = Z̄_i(f_s), v_i^s = (Z̄_i)_s + Z̄_i(conj F_s)-corr
        let mut b = vec![vec![Complex64::new(0.0, 0.0); n]; dim];
        let mut vbar = vec![vec![Complex64::new(0.0, 0.0); n]; dim];
        for i in 0..dim {
            let zb = frame.zbar_vec(m + i);
            for s in 0..n {
                let mut zbar_f = Complex64::new(0.0, 0.0);
                let mut zbar_fbar = Complex64::new(0.0, 0.0);
                for c in 0..n {
                    zbar_f += zb[c] * f_dzb[s][c];
                    zbar_fbar += zb[c] * f_dz[s][c].conj();
                }
                b[i][s] = zbar_f;
                vbar[i][s] = zb[s] + zbar_fbar;
            }
        }
        let mut basis_mat = DMatrix::from_element(n, n, Complex64::new(0.0, 0.0));
        for (col, zbst) in (0..dim).map(|a| frame_star.zbar_vec(m + a)).enumerate() {
            for r in 0..n {
                basis_mat[(r, col)] = zbst[r];
            }
        }
        for l in 0..m {
            for r in 0..n {
                basis_mat[(r, dim + l)] = frame_star.p_bar(l, r);
            }
        }
        let lu = basis_mat.lu();
        let mut e_mat = DMatrix::from_element(dim, dim, Complex64::new(0.0, 0.0));
        for i in 0..dim {
            let rhs = DVector::from_fn(n, |r, _| vbar[i][r]);
            let sol = lu.solve(&rhs).ok_or(DeformError::SingularExpansion(node))?;
            for jcol in 0..dim {
                e_mat[(i, jcol)] = sol[jcol];
            }
        }
        let e_inv = e_mat.try_inverse().ok_or(DeformError::SingularExpansion(node))?;
        let mut mu_star_c = vec![vec![Complex64::new(0.0, 0.0); n]; dim];
        for i in 0..dim {
            for s in 0..n {
                let mut v = Complex64::new(0.0, 0.0);
                for j in 0..dim {
                    v += e_inv[(i, j)] * b[j][s];
                }
                mu_star_c[i][s] = -v;
            }
        }
        // gauge-normalized components against the frame at the TARGET
        // point (on M, so the polynomial frame applies)
        let frame_t = build_frame(rho, &w_target)?;
        let mut sys = DMatrix::from_element(n, n, Complex64::new(0.0, 0.0));
        for a in 0..dim {
            let zbst = frame_t.zbar_vec(m + a);
            for c in 0..n {
                sys[(a, c)] = zbst[c];
            }
        }
        for l in 0..m {
            for c in 0..n {
                sys[(dim + l, c)] = frame_t.p_bar(l, c);
            }
        }
        let lu2 = sys.lu();
        for s in 0..n {
            let rhs = DVector::from_fn(n, |r, _| {
                if r < dim { mu_star_c[r][s] } else { Complex64::new(0.0, 0.0) }
            });
            let sol = lu2.solve(&rhs).ok_or(DeformError::SingularExpansion(node))?;
            for c in 0..n {
                out.comps[s * n + c].values[node] = sol[c];
            }
        }
    }
    Ok(out)
}

/// The FrameForm view of one μ^i component (for feeding ∂̄_M machinery).
pub fn mu_component_form(mu: &DeformationForm, i: usize) -> FrameForm {
    let mut comps = std::collections::BTreeMap::new();
    for j in 0..mu.n {
        comps.insert(vec![j as u8], mu.comp(i, j).clone());
    }
    FrameForm { degree: 1, comps }
}

/// ∂̄^μ on ambient-indexed (0,1) tables, including the deformed coframe
/// terms: ∂̄^μ(Σ a_j dz̄_j) = Σ (∂̄_M a_j − Σ_k (∂^τ a_j/∂z_k) μ^k) ∧ dz̄_j
/// + Σ_j a_j Σ_k μ^k ∧ Σ_l (∂ρ_l/∂z_k)(∂̄_M p̄_l^j − Σ_t (∂^τ p̄_l^j/∂z_t) μ^t).
pub fn dbar_mu_oneform(
    man: &GraphManifold,
    rho: &DefiningSet,
    mu: &DeformationForm,
    a: &[GridScalar],
) -> Result<TwoForm, DeformError> {
    let n = man.n;
    let grid = &man.grid;
    let mut out = TwoForm::zeros(man);
    // coefficient derivatives
    let mut a_dbar = Vec::with_capacity(n);
    let mut a_tau = Vec::with_capacity(n);
    for aj in a {
        a_dbar.push(extension_dzbar(man, aj));
        a_tau.push(tau_derivatives(man, rho, aj)?);
    }
    let dz_subst = dzbar_subst_tables(man, rho, mu)?;
    for node in 0..grid.len() {
        for j in 0..n {
            // (∂̄^μ a_j) ∧ dz̄_j
            let dmu_aj: Vec<Complex64> = (0..n)
                .map(|c| {
                    let mut v = a_dbar[j][c].values[node];
                    for k in 0..n {
                        v -= a_tau[j][k].values[node] * mu.comp(k, c).values[node];
                    }
                    v
                })
                .collect();
            let mut basis = vec![Complex64::new(0.0, 0.0); n];
            basis[j] = Complex64::new(1.0, 0.0);
            wedge_accumulate(&mut out, Complex64::new(1.0, 0.0), &dmu_aj, &basis, node);
            // a_j · dZ̄^j (substitution calculus)
            let aj = a[j].values[node];
            if aj.norm_sqr() == 0.0 {
                continue;
            }
            for p in 0..n {
                for q in (p + 1)..n {
                    out.comps[p * n + q].values[node] += aj * dz_subst[j].comps[p * n + q].values[node];
                }
            }
        }
    }
        Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model() -> (GraphManifold, DefiningSet) {
        let man = GraphManifold::signature_quadric(3, &[1.0, -1.0], 0.35, 5);
        let rho = man.rho.clone();
        (man, rho)
    }

    fn sample_mu(man: &GraphManifold, rho: &DefiningSet, amp: f64) -> DeformationForm {
        let raw = DeformationForm::from_fn(man, |i, j, u| {
            let z2 = Complex64::new(u[1], u[2]);
            Complex64::new(0.3 + i as f64 * 0.2 - j as f64 * 0.1, 0.1 * u[0]) * amp
                + amp * 0.2 * z2 * ((i + 2 * j) as f64)
        });
        normalize_mu(man, rho, &raw).unwrap()
    }

    #[test]
    fn normalize_gauge_and_idempotence() {
        let (man, rho) = model();
        let mu = sample_mu(&man, &rho, 0.05);
        assert!(gauge_residual(&man, &rho, &mu).unwrap() < 1e-12);
        // idempotent
        let again = normalize_mu(&man, &rho, &mu).unwrap();
        let d = again.add_scaled(&mu, Complex64::new(-1.0, 0.0)).max_abs();
        assert!(d < 1e-13);
        // a form already in gauge is unchanged
        let z = DeformationForm::zeros(&man);
        let nz = normalize_mu(&man, &rho, &z).unwrap();
        assert!(nz.max_abs() == 0.0);
    }

    #[test]
    fn normalize_flat_removes_pbar_component() {
        let man = GraphManifold::hyperplane(2, 1, 0.4, 3);
        let rho = man.rho.clone();
        // μ¹_1 = 1 constant; on the flat model p̄₁ = (2, 0)
        let raw = DeformationForm::from_fn(&man, |i, j, _| {
            if i == 0 && j == 0 {
                Complex64::new(1.0, 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            }
        });
        let mu = normalize_mu(&man, &rho, &raw).unwrap();
        assert!(gauge_residual(&man, &rho, &mu).unwrap() < 1e-13);
        // linearity of the correction
        let raw2 = raw.add_scaled(&raw, Complex64::new(1.0, 0.0)); // 2 raw
        let mu2 = normalize_mu(&man, &rho, &raw2).unwrap();
        let d = mu2.add_scaled(&mu.add_scaled(&mu, Complex64::new(1.0, 0.0)), Complex64::new(-1.0, 0.0));
        assert!(d.max_abs() < 1e-13);
    }

    #[test]
    fn integrability_zero_and_admissibility() {
        let (man, rho) = model();
        let mu0 = DeformationForm::zeros(&man);
        let phi = integrability_residual(&man, &rho, &mu0).unwrap();
        assert!(phi.iter().map(|t| t.max_abs()).fold(0.0, f64::max) == 0.0);
        let margin = admissibility_margin(&man, &rho, &mu0).unwrap();
        assert!((margin - 1.0).abs() < 1e-12);
        let mu = sample_mu(&man, &rho, 0.05);
        assert!(admissibility_margin(&man, &rho, &mu).unwrap() > 0.5);
    }

    #[test]
    fn dbar_mu_reduces_to_dbar_at_zero() {
        let (man, rho) = model();
        let f = GridScalar::from_fn(&man.grid, |u| Complex64::new(u[1] * u[3], u[0] + u[2]));
        let mu0 = DeformationForm::zeros(&man);
        let d = dbar_mu(&man, &rho, &mu0, &f).unwrap();
        let plain = extension_dzbar(&man, &f);
        for (a, b) in d.iter().zip(&plain) {
            for (x, y) in a.values.iter().zip(&b.values) {
                assert!((x - y).norm() < 1e-14);
            }
        }
        // holomorphic restriction: first term vanishes, residue is the
        // μ-contraction alone
        let g = GridScalar::from_fn(&man.grid, |u| Complex64::new(u[1], u[2])); // z2
        let mu = sample_mu(&man, &rho, 0.04);
        let dm = dbar_mu(&man, &rho, &mu, &g).unwrap();
        let tau = tau_derivatives(&man, &rho, &g).unwrap();
        for node in 0..man.grid.len() {
            for c in 0..3 {
                let mut want = Complex64::new(0.0, 0.0);
                for j in 0..3 {
                    want -= tau[j].values[node] * mu.comp(j, c).values[node];
                }
                assert!((dm[c].values[node] - want).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn dbar_mu_squared_is_phi_contraction() {
        let (man, rho) = model();
        let mu = sample_mu(&man, &rho, 0.05);
        let f = GridScalar::from_fn(&man.grid, |u| {
            Complex64::new(u[1] + 0.5 * u[3] * u[0], u[2] - 0.3 * u[4])
        });
        let lhs = {
            let first = dbar_mu(&man, &rho, &mu, &f).unwrap();
            dbar_mu_oneform(&man, &rho, &mu, &first).unwrap()
        };
        let phi = integrability_residual(&man, &rho, &mu).unwrap();
        let tau = tau_derivatives(&man, &rho, &f).unwrap();
        // rhs_{ab} = −Σ_i (∂^τ f/∂z_i) Φ^i_{ab}
        let mut worst: f64 = 0.0;
        let mut scale: f64 = 0.0;
        // compare on interior nodes only (one-sided stencils at the box
        // faces lose an order on the nested derivatives)
        for (node, _) in man.grid.nodes() {
            let mi = man.grid.multi_index(node);
            if mi.iter().zip(&man.grid.shape).any(|(&i, &s)| i == 0 || i + 1 == s) {
                continue;
            }
            for a in 0..3 {
                for b in (a + 1)..3 {
                    let mut rhs = Complex64::new(0.0, 0.0);
                    for i in 0..3 {
                        rhs -= tau[i].values[node] * phi[i].comp(a, b).values[node];
                    }
                    let l = lhs.comp(a, b).values[node];
                    worst = worst.max((l - rhs).norm());
                    scale = scale.max(l.norm()).max(rhs.norm());
                }
            }
        }
        assert!(
            worst <= 0.05 * scale.max(1e-6),
            "remark identity: worst {worst:.3e} vs scale {scale:.3e}"
        );
    }

    #[test]
    fn exp_and_invert_roundtrip() {
        // ξ = 0 → identity
        let e0 = exp_map(2, |z: &[Complex64]| vec![Complex64::new(0.0, 0.0); z.len()]);
        let z = vec![Complex64::new(0.3, -0.2), Complex64::new(0.1, 0.4)];
        assert_eq!(e0.apply(&z), z);
        // constant ξ → translation
        let ec = exp_map(2, |_: &[Complex64]| {
            vec![Complex64::new(0.05, 0.0), Complex64::new(0.0, -0.02)]
        });
        let w = ec.apply(&z);
        assert!((w[0] - z[0] - Complex64::new(0.05, 0.0)).norm() < 1e-15);
        // linear f(z) = εz: g = −εz/(1+ε) closed form
        let eps = 0.08;
        let el = exp_map(2, move |z: &[Complex64]| z.iter().map(|v| eps * v).collect());
        let el = invert_map(&el, eps).unwrap();
        let g = el.apply_inverse(&z).unwrap();
        for (gi, zi) in g.iter().zip(&z) {
            let want = zi / (1.0 + eps);
            assert!((gi - want).norm() < 1e-12, "linear inverse closed form");
        }
        // random smooth f with |f|₁ ≈ 0.05: roundtrip ≤ 1e−10
        let er = exp_map(2, |z: &[Complex64]| {
            vec![
                0.02 * z[0] * z[0] + Complex64::new(0.01, 0.015) * z[1].conj(),
                Complex64::new(0.0, 0.02) * (z[0] * z[1]).cos() * 0.5,
            ]
        });
        let er = invert_map(&er, 0.05).unwrap();
        let samples: Vec<Vec<Complex64>> = (0..50)
            .map(|k| {
                let t = k as f64 / 50.0;
                vec![
                    Complex64::new(0.4 * (3.0 * t).cos(), 0.4 * (5.0 * t).sin()),
                    Complex64::new(0.4 * (7.0 * t).sin(), 0.4 * (2.0 * t).cos()),
                ]
            })
            .collect();
        assert!(inverse_residual(&er, &samples) < 1e-10);
        // non-contraction rejected
        let big = exp_map(1, |z: &[Complex64]| vec![z[0] * 2.0]);
        assert!(matches!(invert_map(&big, 2.0), Err(DeformError::NotContraction(_))));
    }

    #[test]
    fn pushforward_anchors() {
        let (man, rho) = model();
        let mu0 = DeformationForm::zeros(&man);
        // identity map: exactly zero
        let idm = NearIdentityMap::identity(3);
        let p = pushforward_mu(&man, &rho, &mu0, &idm).unwrap();
        assert!(p.mu_star.max_abs() == 0.0);
        // holomorphic map: zero up to jet noise
        let hol = exp_map(3, |z: &[Complex64]| {
            vec![0.02 * z[1] * z[1], Complex64::new(0.01, 0.005) * z[2], 0.015 * z[0] * z[1]]
        });
        let hol = invert_map(&hol, 0.05).unwrap();
        let p = pushforward_mu(&man, &rho, &mu0, &hol).unwrap();
        assert!(p.mu_star.max_abs() < 1e-10, "holomorphic pushforward {:.3e}", p.mu_star.max_abs());
    }

    #[test]
    fn pushforward_quadratic_smallness() {
        let (man, rho) = model();
        let mut norms = Vec::new();
        let base = 0.02;
        for rung in 0..3 {
            let amp = base / (1 << rung) as f64;
            let man2 = man.clone();
            let fmap = exp_map(3, move |z: &[Complex64]| {
                let u = man2.base_coords(z);
                let z2 = Complex64::new(u[1], u[2]);
                let z3 = Complex64::new(u[3], u[4]);
                vec![
                    amp * (z2.conj() * z3 + Complex64::new(0.3 * u[0], 0.1)),
                    amp * (z3.conj() + 0.5 * z2 * z2.conj()),
                    amp * (z2 + Complex64::new(0.0, 0.2) * z3.conj() * z3),
                ]
            });
            let mu = DeformationForm::from_dbar_of_map(&man, &rho, &fmap).unwrap();
            let fmap = invert_map(&fmap, 0.2).unwrap();
            let push = pushforward_mu(&man, &rho, &mu, &fmap).unwrap();
            norms.push(push.mu_star.max_abs());
        }
        for w in norms.windows(2) {
            let ratio = w[0] / w[1];
            assert!((3.3..4.8).contains(&ratio), "quadratic halving ratio {ratio}");
        }
    }

    #[test]
    fn induced_structure_is_integrable() {
        // F maps the flat model to itself (Re f₁ = 0 on M); the induced
        // structure is nonzero but integrable, so Φ collapses to FD noise.
        let man = GraphManifold::hyperplane(3, 1, 0.35, 7);
        let rho = man.rho.clone();
        let fmap = exp_map(3, |z: &[Complex64]| {
            let y1 = z[0].im;
            let (z2, z3) = (z[1], z[2]);
            vec![
                Complex64::new(0.0, 0.06) * (z2.re * z3.im + 0.5 * y1),
                0.05 * z2.conj() * z3 + Complex64::new(0.02, 0.0) * y1,
                Complex64::new(0.0, 0.04) * z2 * z2.conj(),
            ]
        });
        let fmap = invert_map(&fmap, 0.2).unwrap();
        let mu_raw = induced_structure_on_grid(&man, &rho, &fmap).unwrap();
        let mu = normalize_mu(&man, &rho, &mu_raw).unwrap();
        assert!(mu.max_abs() > 1e-3, "induced structure should be nonzero: {}", mu.max_abs());
        let phi = integrability_residual(&man, &rho, &mu).unwrap();
        let worst = phi.iter().map(|t| t.max_abs()).fold(0.0, f64::max);
        // Φ is quadratic in μ-scale data; FD noise dominates
        assert!(
            worst < 0.02 * mu.max_abs(),
            "inherited integrability: |Φ| = {worst:.3e} vs |μ| = {:.3e}",
            mu.max_abs()
        );
    }

    #[test]
    fn serialization_roundtrip() {
        let (man, rho) = model();
        let mu = sample_mu(&man, &rho, 0.03);
        let text = mu.to_text(&man);
        assert!(text.starts_with("MUFIELD v1"));
        let back = DeformationForm::from_text(&man, &text).unwrap();
        let d = back.add_scaled(&mu, Complex64::new(-1.0, 0.0)).max_abs();
        assert!(d < 1e-15);
    }
}
