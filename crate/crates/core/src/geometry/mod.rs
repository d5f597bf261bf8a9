//! Model CR patches in graph form: defining functions, frame fields,
//! Levi-form analysis, pseudoconcavity certification, the Kohn
//! regularization, the extension operator and the tangential
//! Cauchy-Riemann operator on patch grids.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::Deserialize;
use thiserror::Error;

pub mod grid;
pub mod poly;

use grid::{GridScalar, PatchGrid};
use poly::AmbientPoly;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("point off the manifold: |rho| = {0:.3e}")]
    OffManifold(f64),
    #[error("frame system near-singular: |det(I+A)| = {0:.3e}")]
    DegenerateFrame(f64),
    #[error("genericity failure: min leading-minor |det| = {0:.3e}")]
    NotGeneric(f64),
    #[error("graph function {0} is not real-valued")]
    ComplexGraphFunction(usize),
    #[error("invalid model: {0}")]
    InvalidModel(String),
}

/// A set of m real defining functions with exact polynomial jets.
#[derive(Debug, Clone)]
pub struct DefiningSet {
    pub n: usize,
    pub m: usize,
    pub rho: Vec<AmbientPoly>,
    grad: Vec<Vec<AmbientPoly>>,      // grad[k][i] = ∂ρ_k/∂z_i
    hess_mixed: Vec<Vec<AmbientPoly>>, // hess_mixed[k][i*n+j] = ∂²ρ_k/∂z_i∂z̄_j
    hess_hol: Vec<Vec<AmbientPoly>>,   // hess_hol[k][i*n+j] = ∂²ρ_k/∂z_i∂z_j
}

impl DefiningSet {
    pub fn new(n: usize, rho: Vec<AmbientPoly>) -> Self {
        let m = rho.len();
        let grad: Vec<Vec<AmbientPoly>> =
            rho.iter().map(|r| (0..n).map(|i| r.d_z(i)).collect()).collect();
        let hess_mixed = rho
            .iter()
            .map(|r| {
                let mut h = Vec::with_capacity(n * n);
                for i in 0..n {
                    let di = r.d_z(i);
                    for j in 0..n {
                        h.push(di.d_zbar(j));
                    }
                }
                h
            })
            .collect();
        let hess_hol = rho
            .iter()
            .map(|r| {
                let mut h = Vec::with_capacity(n * n);
                for i in 0..n {
                    let di = r.d_z(i);
                    for j in 0..n {
                        h.push(di.d_z(j));
                    }
                }
                h
            })
            .collect();
        DefiningSet { n, m, rho, grad, hess_mixed, hess_hol }
    }

    pub fn values(&self, z: &[Complex64]) -> Vec<f64> {
        self.rho.iter().map(|r| r.eval(z).re).collect()
    }

    /// ρ(z) = (Σ ρ_k²)^{1/2}
    pub fn norm(&self, z: &[Complex64]) -> f64 {
        self.values(z).iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// m×n matrix R[k][i] = ∂ρ_k/∂z_i.
    pub fn grad_z(&self, z: &[Complex64]) -> Vec<Vec<Complex64>> {
        self.grad.iter().map(|row| row.iter().map(|p| p.eval(z)).collect()).collect()
    }

    /// Mixed complex Hessian of ρ_k: H[i][j] = ∂²ρ_k/∂z_i∂z̄_j.
    pub fn hessian_mixed(&self, k: usize, z: &[Complex64]) -> DMatrix<Complex64> {
        DMatrix::from_fn(self.n, self.n, |i, j| self.hess_mixed[k][i * self.n + j].eval(z))
    }

    /// Holomorphic Hessian of ρ_k: H[i][j] = ∂²ρ_k/∂z_i∂z_j.
    pub fn hessian_hol(&self, k: usize, z: &[Complex64]) -> DMatrix<Complex64> {
        DMatrix::from_fn(self.n, self.n, |i, j| self.hess_hol[k][i * self.n + j].eval(z))
    }

    /// θ-weighted mixed Hessian Σ θ_k H_k.
    pub fn hessian_theta(&self, theta: &[f64], z: &[Complex64]) -> DMatrix<Complex64> {
        let mut h = DMatrix::from_element(self.n, self.n, Complex64::new(0.0, 0.0));
        for k in 0..self.m {
            h += self.hessian_mixed(k, z).scale(theta[k]);
        }
        h
    }
}

/// Kohn regularization: ρ̃_k = ρ_k + A·Σ_i ρ_i², exact in the polynomial
/// algebra. On M the values and gradients agree with ρ.
pub fn kohn_modify(rho: &DefiningSet, a: f64) -> DefiningSet {
    assert!(a >= 0.0);
    let mut sum_sq = AmbientPoly::zero(rho.n);
    for r in &rho.rho {
        sum_sq = sum_sq.add(&r.mul(r));
    }
    let modified: Vec<AmbientPoly> = rho
        .rho
        .iter()
        .map(|r| r.add(&sum_sq.scale(Complex64::new(a, 0.0))))
        .collect();
    DefiningSet::new(rho.n, modified)
}

/// A polynomial in graph coordinates (y₁..y_m, z″, z̄″).
#[derive(Debug, Clone, Deserialize)]
pub struct GraphTerm {
    /// [re, im]
    pub coeff: [f64; 2],
    #[serde(default)]
    pub y_pow: Vec<u8>,
    #[serde(default)]
    pub z_pow: Vec<u8>,
    #[serde(default)]
    pub zbar_pow: Vec<u8>,
}

/// One graph function as a term list.
#[derive(Debug, Clone, Deserialize)]
pub struct GraphFunction {
    pub terms: Vec<GraphTerm>,
}

/// Model definition: n, m, graph functions as term lists, patch box in the
/// 2n−m graph coordinates, and grid resolution per axis.
#[derive(Debug, Clone, Deserialize)]
pub struct ModelSpec {
    pub n: usize,
    pub m: usize,
    pub h: Vec<GraphFunction>,
    pub box_lo: Vec<f64>,
    pub box_hi: Vec<f64>,
    pub grid: Vec<usize>,
}

/// A CR patch x_j = h_j(y₁..y_m, z″) with derived defining functions.
#[derive(Debug, Clone)]
pub struct GraphManifold {
    pub n: usize,
    pub m: usize,
    /// h_j as ambient polynomials (functions of (z, z̄) constant in x₁..x_m)
    pub h: Vec<AmbientPoly>,
    pub rho: DefiningSet,
    pub grid: PatchGrid,
}

impl GraphManifold {
    /// Build from graph-coordinate term lists. The y variables are replaced
    /// by (z_j − z̄_j)/2i and z″ indices shifted past the normal block.
    pub fn from_spec(spec: &ModelSpec) -> Result<Self, GeometryError> {
        let (n, m) = (spec.n, spec.m);
        if m < 1 || m >= n {
            return Err(GeometryError::InvalidModel(format!("need 1 <= m < n, got m={m}, n={n}")));
        }
        if spec.h.len() != m {
            return Err(GeometryError::InvalidModel(format!(
                "expected {m} graph functions, got {}",
                spec.h.len()
            )));
        }
        if spec.box_lo.len() != 2 * n - m || spec.box_hi.len() != 2 * n - m || spec.grid.len() != 2 * n - m {
            return Err(GeometryError::InvalidModel(format!(
                "patch box/grid must have {} axes",
                2 * n - m
            )));
        }
        let mut hs = Vec::with_capacity(m);
        for (j, func) in spec.h.iter().enumerate() {
            let mut hj = AmbientPoly::zero(n);
            for t in &func.terms {
                let mut p = AmbientPoly::constant(n, Complex64::new(t.coeff[0], t.coeff[1]));
                for (k, &pw) in t.y_pow.iter().enumerate() {
                    // y_k = (z_k − z̄_k)/(2i)
                    let y = AmbientPoly::var(n, k)
                        .add(&AmbientPoly::var_bar(n, k).scale(Complex64::new(-1.0, 0.0)))
                        .scale(Complex64::new(0.0, -0.5));
                    for _ in 0..pw {
                        p = p.mul(&y);
                    }
                }
                for (a, &pw) in t.z_pow.iter().enumerate() {
                    for _ in 0..pw {
                        p = p.mul(&AmbientPoly::var(n, m + a));
                    }
                }
                for (a, &pw) in t.zbar_pow.iter().enumerate() {
                    for _ in 0..pw {
                        p = p.mul(&AmbientPoly::var_bar(n, m + a));
                    }
                }
                hj = hj.add(&p);
            }
            if !hj.is_real_valued(1e-12) {
                return Err(GeometryError::ComplexGraphFunction(j));
            }
            hs.push(hj);
        }
        // ρ_j = x_j − h_j = (z_j + z̄_j)/2 − h_j
        let rho_polys: Vec<AmbientPoly> = (0..m)
            .map(|j| {
                AmbientPoly::var(n, j)
                    .add(&AmbientPoly::var_bar(n, j))
                    .scale(Complex64::new(0.5, 0.0))
                    .add(&hs[j].scale(Complex64::new(-1.0, 0.0)))
            })
            .collect();
        let rho = DefiningSet::new(n, rho_polys);
        let grid = PatchGrid::new(spec.box_lo.clone(), spec.box_hi.clone(), spec.grid.clone());
        Ok(GraphManifold { n, m, h: hs, rho, grid })
    }

    /// Hypersurface model (m = 1) with h = Σ_j σ_j |z″_j|², signature given
    /// by the σ list; box [−half, half] per axis.
    pub fn signature_quadric(n: usize, sigma: &[f64], half: f64, nodes: usize) -> Self {
        assert_eq!(sigma.len(), n - 1);
        let terms: Vec<GraphTerm> = sigma
            .iter()
            .enumerate()
            .filter(|(_, s)| **s != 0.0)
            .map(|(j, s)| {
                let mut zp = vec![0u8; n - 1];
                let mut bp = vec![0u8; n - 1];
                zp[j] = 1;
                bp[j] = 1;
                GraphTerm { coeff: [*s, 0.0], y_pow: vec![0], z_pow: zp, zbar_pow: bp }
            })
            .collect();
        let dim = 2 * n - 1;
        let spec = ModelSpec {
            n,
            m: 1,
            h: vec![GraphFunction { terms }],
            box_lo: vec![-half; dim],
            box_hi: vec![half; dim],
            grid: vec![nodes; dim],
        };
        Self::from_spec(&spec).expect("valid builtin model")
    }

    /// Flat model x_j = 0, j = 1..m.
    pub fn hyperplane(n: usize, m: usize, half: f64, nodes: usize) -> Self {
        let dim = 2 * n - m;
        let spec = ModelSpec {
            n,
            m,
            h: vec![GraphFunction { terms: Vec::new() }; m],
            box_lo: vec![-half; dim],
            box_hi: vec![half; dim],
            grid: vec![nodes; dim],
        };
        Self::from_spec(&spec).expect("valid builtin model")
    }

    pub fn graph_dim(&self) -> usize {
        2 * self.n - self.m
    }

    /// Ambient point from graph coordinates, offset so that ρ_j = targets[j]
    /// (targets = 0 lands on M exactly).
    pub fn lift_with_rho(&self, u: &[f64], targets: &[f64]) -> Vec<Complex64> {
        let m = self.m;
        let n = self.n;
        let mut z = vec![Complex64::new(0.0, 0.0); n];
        for a in 0..(n - m) {
            z[m + a] = Complex64::new(u[m + 2 * a], u[m + 2 * a + 1]);
        }
        // h_j depends on y and z″ only; fill y first
        for j in 0..m {
            z[j] = Complex64::new(0.0, u[j]);
        }
        for j in 0..m {
            let hj = self.h[j].eval(&z).re;
            z[j] = Complex64::new(hj + targets[j], u[j]);
        }
        z
    }

    pub fn lift(&self, u: &[f64]) -> Vec<Complex64> {
        self.lift_with_rho(u, &vec![0.0; self.m])
    }

    /// Graph coordinates of an ambient point (drops the x-part).
    pub fn base_coords(&self, z: &[Complex64]) -> Vec<f64> {
        let mut u = vec![0.0; self.graph_dim()];
        for j in 0..self.m {
            u[j] = z[j].im;
        }
        for a in 0..(self.n - self.m) {
            u[self.m + 2 * a] = z[self.m + a].re;
            u[self.m + 2 * a + 1] = z[self.m + a].im;
        }
        u
    }

    /// Extension operator E: evaluate a patch function at the graph
    /// coordinates of z, identically in x₁..x_m.
    pub fn extend<'a, F>(&'a self, g: F) -> impl Fn(&[Complex64]) -> Complex64 + 'a
    where
        F: Fn(&[f64]) -> Complex64 + 'a,
    {
        move |z: &[Complex64]| g(&self.base_coords(z))
    }

    /// Genericity: min over grid nodes of |det| of the m×m leading minor of
    /// [∂ρ/∂z]. Errors when it degenerates.
    pub fn check_genericity(&self, floor: f64) -> Result<f64, GeometryError> {
        let mut min_det = f64::INFINITY;
        for (_, u) in self.grid.nodes() {
            let z = self.lift(&u);
            let g = self.rho.grad_z(&z);
            let mm = DMatrix::from_fn(self.m, self.m, |i, j| g[i][j]);
            let d = mm.determinant().norm();
            min_det = min_det.min(d);
        }
        if min_det < floor {
            return Err(GeometryError::NotGeneric(min_det));
        }
        Ok(min_det)
    }
}

/// Frame data at a point: the dual fields P′_l and the tangential vectors.
#[derive(Debug, Clone)]
pub struct FramePoint {
    pub n: usize,
    pub m: usize,
    /// p[l][i]: P′_l = Σ_i p_l^i ∂/∂z_i
    pub p: Vec<Vec<Complex64>>,
    /// R[l][i] = ∂ρ_l/∂z_i at the point
    pub dz_rho: Vec<Vec<Complex64>>,
    /// Z_i = ∂/∂z_i − Σ_l (∂ρ_l/∂z_i) P′_l, ambient coefficient vectors
    pub z_vec: Vec<Vec<Complex64>>,
}

impl FramePoint {
    /// Z̄_i ambient coefficients (conjugates of Z_i).
    pub fn zbar_vec(&self, i: usize) -> Vec<Complex64> {
        self.z_vec[i].iter().map(|c| c.conj()).collect()
    }

    /// p̄_l^i (components of P″_l).
    pub fn p_bar(&self, l: usize, i: usize) -> Complex64 {
        self.p[l][i].conj()
    }

    /// Tangential basis indices (ambient 0-based): m..n−1 in graph models.
    pub fn basis_indices(&self) -> Vec<usize> {
        (self.m..self.n).collect()
    }

    /// max over l,s of |∂ρ_l(P′_s) − δ_ls| plus orthogonality residual —
    /// the duality conditions at this point.
    pub fn duality_residual(&self) -> f64 {
        let mut res: f64 = 0.0;
        for l in 0..self.m {
            for s in 0..self.m {
                let mut v = Complex64::new(0.0, 0.0);
                for i in 0..self.n {
                    v += self.dz_rho[l][i] * self.p[s][i];
                }
                let target = if l == s { 1.0 } else { 0.0 };
                res = res.max((v - target).norm());
            }
        }
        // Z_i annihilate all ∂ρ_l
        for i in 0..self.n {
            for l in 0..self.m {
                let mut v = Complex64::new(0.0, 0.0);
                for s in 0..self.n {
                    v += self.dz_rho[l][s] * self.z_vec[i][s];
                }
                res = res.max(v.norm());
            }
        }
        res
    }

    /// Σ_i p_l^i Z_i = 0 as a coefficient identity.
    pub fn null_combination_residual(&self) -> f64 {
        let mut res: f64 = 0.0;
        for l in 0..self.m {
            for s in 0..self.n {
                let mut v = Complex64::new(0.0, 0.0);
                for i in 0..self.n {
                    v += self.p[l][i] * self.z_vec[i][s];
                }
                res = res.max(v.norm());
            }
        }
        res
    }
}

/// Solve the frame system [P′] = [∂ρ/∂z̄]^τ [I+A]^{-1} at z.
pub fn build_frame(rho: &DefiningSet, z: &[Complex64]) -> Result<FramePoint, GeometryError> {
    let (n, m) = (rho.n, rho.m);
    let r = rho.grad_z(z);
    // [I+A]_{ls} = Σ_i R[l][i] conj(R[s][i])
    let ipa = DMatrix::from_fn(m, m, |l, s| {
        (0..n).map(|i| r[l][i] * r[s][i].conj()).sum::<Complex64>()
    });
    let det = ipa.determinant().norm();
    if det < 1e-12 {
        return Err(GeometryError::DegenerateFrame(det));
    }
    let inv = ipa.try_inverse().ok_or(GeometryError::DegenerateFrame(det))?;
    // p_s^i = Σ_t conj(R[t][i]) inv[t][s]  (column s of [∂ρ/∂z̄]^τ · inv)
    let mut p = vec![vec![Complex64::new(0.0, 0.0); n]; m];
    for (s, ps) in p.iter_mut().enumerate() {
        for (i, psi) in ps.iter_mut().enumerate() {
            for t in 0..m {
                *psi += r[t][i].conj() * inv[(t, s)];
            }
        }
    }
    // Z_i = e_i − Σ_l R[l][i] P′_l
    let mut z_vec = vec![vec![Complex64::new(0.0, 0.0); n]; n];
    for i in 0..n {
        z_vec[i][i] = Complex64::new(1.0, 0.0);
        for l in 0..m {
            for s in 0..n {
                let c = r[l][i] * p[l][s];
                z_vec[i][s] -= c;
            }
        }
    }
    Ok(FramePoint { n, m, p, dz_rho: r, z_vec })
}

/// Levi data at (z, θ): the Hermitian form of Σθ_kρ_k restricted to the
/// tangential Z-basis, with eigendecomposition.
#[derive(Debug, Clone)]
pub struct LeviData {
    pub theta: Vec<f64>,
    pub matrix: DMatrix<Complex64>,
    /// ascending
    pub eigenvalues: Vec<f64>,
    /// columns matching `eigenvalues`, coordinates in the Z-basis
    pub eigenvectors: DMatrix<Complex64>,
    pub negative_count: usize,
    /// ambient lifts of the eigenvector directions (columns ↔ eigenvalues)
    pub ambient_vectors: Vec<Vec<Complex64>>,
}

pub const DEFAULT_EIG_TOL_FACTOR: f64 = 1e-9;

pub fn levi_form(
    m: &GraphManifold,
    rho: &DefiningSet,
    z: &[Complex64],
    theta: &[f64],
) -> Result<LeviData, GeometryError> {
    let dist = rho.norm(z);
    if dist > 1e-8 {
        return Err(GeometryError::OffManifold(dist));
    }
    let _ = m;
    levi_form_at(rho, z, theta)
}

/// Levi data without the on-manifold check (used on tube shells where the
/// base point is an angular limit).
pub fn levi_form_at(rho: &DefiningSet, z: &[Complex64], theta: &[f64]) -> Result<LeviData, GeometryError> {
    let (n, mm) = (rho.n, rho.m);
    assert_eq!(theta.len(), mm);
    let frame = build_frame(rho, z)?;
    let h = rho.hessian_theta(theta, z);
    let idx = frame.basis_indices();
    let dim = idx.len();
    let mut lmat = DMatrix::from_element(dim, dim, Complex64::new(0.0, 0.0));
    for (a, &ia) in idx.iter().enumerate() {
        for (b, &ib) in idx.iter().enumerate() {
            let mut v = Complex64::new(0.0, 0.0);
            for i in 0..n {
                for j in 0..n {
                    v += h[(i, j)] * frame.z_vec[ia][i] * frame.z_vec[ib][j].conj();
                }
            }
            lmat[(a, b)] = v;
        }
    }
    // enforce exact Hermitian symmetry before the eigensolve
    let herm = (lmat.clone() + lmat.adjoint()).scale(0.5);
    let eig = herm.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].partial_cmp(&eig.eigenvalues[b]).unwrap());
    let eigenvalues: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let eigenvectors = DMatrix::from_fn(dim, dim, |r, c| eig.eigenvectors[(r, order[c])]);
    let scale = eigenvalues.iter().map(|v| v.abs()).fold(0.0, f64::max).max(1e-300);
    let tol = DEFAULT_EIG_TOL_FACTOR * scale;
    let negative_count = eigenvalues.iter().filter(|&&v| v < -tol).count();
    // ambient lifts
    let mut ambient = Vec::with_capacity(dim);
    for c in 0..dim {
        let mut v = vec![Complex64::new(0.0, 0.0); n];
        for (a, &ia) in idx.iter().enumerate() {
            for s in 0..n {
                v[s] += eigenvectors[(a, c)] * frame.z_vec[ia][s];
            }
        }
        ambient.push(v);
    }
    Ok(LeviData {
        theta: theta.to_vec(),
        matrix: herm,
        eigenvalues,
        eigenvectors,
        negative_count,
        ambient_vectors: ambient,
    })
}

impl LeviData {
    /// Span of the q most-negative eigenvectors (Z-basis coordinates).
    pub fn negative_span(&self, q: usize) -> DMatrix<Complex64> {
        let dim = self.eigenvalues.len();
        DMatrix::from_fn(dim, q, |r, c| self.eigenvectors[(r, c)])
    }

    /// Orthonormal ambient rows a_j spanning the complement of the q
    /// most-positive tangential directions; these feed the barrier form 𝒜.
    pub fn complement_frame(&self, q: usize) -> Vec<Vec<Complex64>> {
        let dim = self.eigenvalues.len();
        assert!(q <= dim);
        // eigenvalues ascending: the top q are the most positive; the
        // complement is the remaining dim − q ambient directions.
        let picks: Vec<usize> = (0..dim - q).collect();
        let mut rows: Vec<Vec<Complex64>> = picks.iter().map(|&c| self.ambient_vectors[c].clone()).collect();
        // modified Gram-Schmidt in the ambient Hermitian metric
        for i in 0..rows.len() {
            for j in 0..i {
                let proj: Complex64 =
                    rows[i].iter().zip(&rows[j]).map(|(a, b)| a * b.conj()).sum();
                let rj = rows[j].clone();
                for (a, b) in rows[i].iter_mut().zip(rj) {
                    *a -= proj * b;
                }
            }
            let norm: f64 = rows[i].iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
            for a in rows[i].iter_mut() {
                *a /= norm;
            }
        }
        rows
    }
}

/// Sample directions on S^{m−1}: ±1 for m = 1, a great-circle grid for m = 2,
/// a deterministic low-discrepancy set for m ≥ 3.
pub fn theta_samples(m: usize, count: usize) -> Vec<Vec<f64>> {
    match m {
        1 => vec![vec![1.0], vec![-1.0]],
        2 => (0..count)
            .map(|i| {
                let a = 2.0 * std::f64::consts::PI * i as f64 / count as f64;
                vec![a.cos(), a.sin()]
            })
            .collect(),
        _ => {
            let mut s = crate::num::Sobol::new(m, 17);
            (0..count).map(|_| crate::num::unit_sphere_point(&s.next_point())).collect()
        }
    }
}

/// Certification report for regular q-pseudoconcavity on sampled (θ, z).
#[derive(Debug, Clone)]
pub struct ConcavityReport {
    pub q: usize,
    pub samples: usize,
    pub failures: Vec<(usize, usize, usize)>, // (theta index, z index, negative count)
    pub min_negative_count: usize,
    pub max_principal_angle_deg: f64,
    pub angle_tol_deg: f64,
}

impl ConcavityReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty() && self.max_principal_angle_deg <= self.angle_tol_deg
    }
}

/// Principal angles (degrees, max) between spans given as column matrices
/// with orthonormalized columns.
fn max_principal_angle_deg(e1: &DMatrix<Complex64>, e2: &DMatrix<Complex64>) -> f64 {
    let q1 = orthonormalize(e1);
    let q2 = orthonormalize(e2);
    let m = q1.adjoint() * q2;
    let svd = m.svd(false, false);
    let mut worst: f64 = 0.0;
    for s in svd.singular_values.iter() {
        let c = s.min(1.0);
        worst = worst.max(c.acos());
    }
    worst.to_degrees()
}

fn orthonormalize(e: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    let mut q = e.clone();
    let cols = q.ncols();
    for i in 0..cols {
        for j in 0..i {
            let mut proj = Complex64::new(0.0, 0.0);
            for r in 0..q.nrows() {
                proj += q[(r, i)] * q[(r, j)].conj();
            }
            for r in 0..q.nrows() {
                let v = q[(r, j)];
                q[(r, i)] -= proj * v;
            }
        }
        let norm: f64 = (0..q.nrows()).map(|r| q[(r, i)].norm_sqr()).sum::<f64>().sqrt();
        for r in 0..q.nrows() {
            q[(r, i)] /= norm;
        }
    }
    q
}

/// Check that every sampled (θ, z) has at least q negative Levi eigenvalues
/// and that the negative-span family moves continuously between adjacent
/// samples (principal-angle proxy).
pub fn certify_regular_q_pseudoconcave(
    m: &GraphManifold,
    rho: &DefiningSet,
    q: usize,
    thetas: &[Vec<f64>],
    z_samples: &[Vec<Complex64>],
    angle_tol_deg: f64,
) -> Result<ConcavityReport, GeometryError> {
    assert!(!thetas.is_empty() && !z_samples.is_empty());
    let mut failures = Vec::new();
    let mut min_neg = usize::MAX;
    let mut max_angle: f64 = 0.0;
    let mut prev_span: Option<DMatrix<Complex64>> = None;
    for (ti, theta) in thetas.iter().enumerate() {
        for (zi, z) in z_samples.iter().enumerate() {
            let levi = levi_form(m, rho, z, theta)?;
            min_neg = min_neg.min(levi.negative_count);
            if levi.negative_count < q {
                failures.push((ti, zi, levi.negative_count));
                prev_span = None;
                continue;
            }
            let span = levi.negative_span(q);
            if let Some(prev) = &prev_span {
                max_angle = max_angle.max(max_principal_angle_deg(prev, &span));
            }
            prev_span = Some(span);
        }
        prev_span = None; // do not compare across theta jumps for m = 1
    }
    Ok(ConcavityReport {
        q,
        samples: thetas.len() * z_samples.len(),
        failures,
        min_negative_count: if min_neg == usize::MAX { 0 } else { min_neg },
        max_principal_angle_deg: max_angle,
        angle_tol_deg,
    })
}

// ---------------------------------------------------------------------------
// Tangential Cauchy-Riemann operator on patch grids

/// A (0,r) coefficient table on the patch grid in the coframe `Z̄^I`,
/// indexed by sorted ambient index tuples (0-based, over 0..n).
///
/// In the quotient calculus mod the ideal `(dz_i, ∂ρ_l)` the coframe
/// satisfies `dz̄_i ≡ Z̄^i` and `∂̄_M Z̄^i = 0`, so the tangential projection
/// of an ambient (0,r) form is a plain coefficient reindexing and the
/// tangential Cauchy-Riemann operator acts on identically-extended
/// coefficients by antisymmetrised ambient `∂/∂z̄` derivatives.
#[derive(Debug, Clone)]
pub struct FrameForm {
    pub degree: usize,
    pub comps: std::collections::BTreeMap<Vec<u8>, GridScalar>,
}

impl FrameForm {
    pub fn function(g: GridScalar) -> Self {
        let mut comps = std::collections::BTreeMap::new();
        comps.insert(Vec::new(), g);
        FrameForm { degree: 0, comps }
    }

    pub fn zero(degree: usize) -> Self {
        FrameForm { degree, comps: std::collections::BTreeMap::new() }
    }

    pub fn max_abs(&self) -> f64 {
        self.comps.values().map(|g| g.max_abs()).fold(0.0, f64::max)
    }

    pub fn component(&self, key: &[u8]) -> Option<&GridScalar> {
        self.comps.get(key)
    }

    pub fn add_scaled(&mut self, grid: &PatchGrid, other: &FrameForm, c: Complex64) {
        assert_eq!(self.degree, other.degree);
        for (k, g) in &other.comps {
            let e = self.comps.entry(k.clone()).or_insert_with(|| GridScalar::zeros(grid));
            for (a, b) in e.values.iter_mut().zip(&g.values) {
                *a += c * b;
            }
        }
    }

    /// Apply the form to a tuple of tangential basis fields Z̄_{j} at a node,
    /// using the coframe pairing `Z̄^i(Z̄_j) = δ_ij − Σ_l (∂ρ_l/∂z̄_j) p̄_l^i`.
    pub fn contract(&self, frame: &FramePoint, flat: usize, tuple: &[usize]) -> Complex64 {
        assert_eq!(tuple.len(), self.degree);
        let n = frame.n;
        // pairing matrix column per tuple entry
        let pairing = |i: usize, j: usize| -> Complex64 {
            let mut v = if i == j { Complex64::new(1.0, 0.0) } else { Complex64::new(0.0, 0.0) };
            for l in 0..frame.m {
                v -= frame.dz_rho[l][j].conj() * frame.p[l][i].conj();
            }
            v
        };
        let _ = n;
        let mut total = Complex64::new(0.0, 0.0);
        for (key, g) in &self.comps {
            // det of the r×r pairing block [Z̄^{key_a}(Z̄_{tuple_b})]
            let r = key.len();
            let mat = nalgebra::DMatrix::from_fn(r, r, |a, b| pairing(key[a] as usize, tuple[b]));
            total += g.values[flat] * mat.determinant();
        }
        total
    }
}

/// Ambient antiholomorphic derivatives of the extension E(g) of a grid
/// scalar: ∂E(g)/∂z̄_s per node. For s < m this is (i/2)∂g/∂y_s; for the
/// graph block it is ½(∂/∂Re + i·∂/∂Im).
pub fn extension_dzbar(m: &GraphManifold, g: &GridScalar) -> Vec<GridScalar> {
    let grid = &m.grid;
    let half = Complex64::new(0.5, 0.0);
    let ihalf = Complex64::new(0.0, 0.5);
    let mut out = Vec::with_capacity(m.n);
    for s in 0..m.n {
        if s < m.m {
            let dy = g.partial(grid, s);
            let mut d = GridScalar::zeros(grid);
            for (i, v) in dy.values.iter().enumerate() {
                d.values[i] = ihalf * v;
            }
            out.push(d);
        } else {
            let a = s - m.m;
            let dre = g.partial(grid, m.m + 2 * a);
            let dim = g.partial(grid, m.m + 2 * a + 1);
            let mut d = GridScalar::zeros(grid);
            for i in 0..d.values.len() {
                d.values[i] = half * dre.values[i] + ihalf * dim.values[i];
            }
            out.push(d);
        }
    }
    out
}

/// ∂̄_M on coframe coefficient tables: the coefficients of the input are
/// extended identically off M and differentiated in the ambient `z̄`
/// directions, then antisymmetrised:
/// `(∂̄_M a)_{sorted(j∪K)} = Σ ± ∂(E a_K)/∂z̄_j`.
pub fn tangential_cr(
    m: &GraphManifold,
    _rho: &DefiningSet,
    g: &FrameForm,
) -> Result<FrameForm, GeometryError> {
    let grid = &m.grid;
    let mut out: std::collections::BTreeMap<Vec<u8>, GridScalar> = std::collections::BTreeMap::new();
    for (key, comp) in &g.comps {
        let dbar = extension_dzbar(m, comp);
        for (j, dj) in dbar.iter().enumerate() {
            let j = j as u8;
            if key.contains(&j) {
                continue;
            }
            // insert j into the sorted key; sign from its slot position
            let pos = key.iter().position(|&x| x > j).unwrap_or(key.len());
            let mut key2 = key.clone();
            key2.insert(pos, j);
            let sign = if pos % 2 == 0 { 1.0 } else { -1.0 };
            let acc = out.entry(key2).or_insert_with(|| GridScalar::zeros(grid));
            for (a, b) in acc.values.iter_mut().zip(&dj.values) {
                *a += sign * b;
            }
        }
    }
    Ok(FrameForm { degree: g.degree + 1, comps: out })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quad_c3() -> GraphManifold {
        GraphManifold::signature_quadric(3, &[1.0, -1.0], 0.5, 5)
    }

    #[test]
    fn rho_vanishes_on_patch() {
        let m = quad_c3();
        for (_, u) in m.grid.nodes() {
            let z = m.lift(&u);
            assert!(m.rho.norm(&z) < 1e-13);
        }
        m.check_genericity(1e-6).unwrap();
    }

    #[test]
    fn levi_signature_quadric_origin() {
        let m = quad_c3();
        let z = m.lift(&vec![0.0; 5]);
        let levi = levi_form(&m, &m.rho, &z, &[1.0]).unwrap();
        assert_eq!(levi.eigenvalues.len(), 2);
        assert!(levi.eigenvalues[0] < 0.0 && levi.eigenvalues[1] > 0.0);
        assert!((levi.eigenvalues[0] + levi.eigenvalues[1]).abs() < 1e-10);
        assert_eq!(levi.negative_count, 1);
    }

    #[test]
    fn levi_hyperplane_zero() {
        let m = GraphManifold::hyperplane(2, 1, 0.5, 3);
        let z = m.lift(&vec![0.1, 0.0, 0.2]);
        for theta in [[1.0], [-1.0]] {
            let levi = levi_form(&m, &m.rho, &z, &theta).unwrap();
            assert!(levi.matrix.iter().all(|c| c.norm() < 1e-13));
            assert_eq!(levi.negative_count, 0);
        }
    }

    #[test]
    fn levi_c7_signature_33() {
        let m = GraphManifold::signature_quadric(7, &[1.0, 1.0, 1.0, -1.0, -1.0, -1.0], 0.3, 3);
        let z = m.lift(&vec![0.0; 13]);
        for theta in [[1.0], [-1.0]] {
            let levi = levi_form(&m, &m.rho, &z, &theta).unwrap();
            assert_eq!(levi.negative_count, 3);
        }
    }

    #[test]
    fn off_manifold_rejected() {
        let m = quad_c3();
        let mut z = m.lift(&vec![0.0; 5]);
        z[0] += Complex64::new(0.05, 0.0);
        assert!(matches!(levi_form(&m, &m.rho, &z, &[1.0]), Err(GeometryError::OffManifold(_))));
    }

    #[test]
    fn kohn_modify_matches_on_manifold() {
        let m = quad_c3();
        let modified = kohn_modify(&m.rho, 10.0);
        let u = vec![0.1, 0.2, -0.1, 0.05, 0.3];
        let z = m.lift(&u);
        // values and gradients agree on M
        assert!(modified.norm(&z) < 1e-12);
        let g0 = m.rho.grad_z(&z);
        let g1 = modified.grad_z(&z);
        for i in 0..3 {
            assert!((g0[0][i] - g1[0][i]).norm() < 1e-12);
        }
        // Hessian gains 2A ∂ρ⊗∂̄ρ
        let h0 = m.rho.hessian_mixed(0, &z);
        let h1 = modified.hessian_mixed(0, &z);
        for i in 0..3 {
            for j in 0..3 {
                let expect = h0[(i, j)] + 20.0 * g0[0][i] * g0[0][j].conj();
                assert!((h1[(i, j)] - expect).norm() < 1e-10);
            }
        }
        // A = 0 is the identity
        let same = kohn_modify(&m.rho, 0.0);
        assert!((same.rho[0].eval(&z) - m.rho.rho[0].eval(&z)).norm() < 1e-15);
    }

    #[test]
    fn kohn_levi_eigs_match_oracle_m2() {
        // m = 2 model: ρ1 = x1 − |z3|², ρ2 = x2 + |z3|², A = 10
        let spec = ModelSpec {
            n: 3,
            m: 2,
            h: vec![
                GraphFunction {
                    terms: vec![GraphTerm { coeff: [1.0, 0.0], y_pow: vec![0, 0], z_pow: vec![1], zbar_pow: vec![1] }],
                },
                GraphFunction {
                    terms: vec![GraphTerm { coeff: [-1.0, 0.0], y_pow: vec![0, 0], z_pow: vec![1], zbar_pow: vec![1] }],
                },
            ],
            box_lo: vec![-0.3; 4],
            box_hi: vec![0.3; 4],
            grid: vec![3; 4],
        };
        let m = GraphManifold::from_spec(&spec).unwrap();
        let z = m.lift(&vec![0.0; 4]);
        let a = 10.0;
        let modified = kohn_modify(&m.rho, a);
        for theta in [[1.0, 0.0], [0.6, -0.8]] {
            let h_mod = modified.hessian_theta(&theta, &z);
            // oracle: H_theta + 2A Σ_k θ_k Σ_i ∂ρ_i⊗∂̄ρ_i evaluated densely
            let h0 = m.rho.hessian_theta(&theta, &z);
            let grad = m.rho.grad_z(&z);
            let mut oracle = h0.clone();
            let mult: f64 = theta.iter().sum();
            for i in 0..3 {
                for j in 0..3 {
                    for k in 0..2 {
                        oracle[(i, j)] += 2.0 * a * mult * grad[k][i] * grad[k][j].conj();
                    }
                }
            }
            let _ = k_eigs(&oracle);
            let d = (&h_mod - &oracle).iter().map(|c| c.norm()).fold(0.0, f64::max);
            assert!(d < 1e-10, "Hessian mismatch {d}");
        }

        fn k_eigs(h: &DMatrix<Complex64>) -> Vec<f64> {
            let herm = (h.clone() + h.adjoint()).scale(0.5);
            let mut e: Vec<f64> = herm.symmetric_eigen().eigenvalues.iter().copied().collect();
            e.sort_by(|a, b| a.partial_cmp(b).unwrap());
            e
        }
    }

    #[test]
    fn frame_hyperplane_c2() {
        let m = GraphManifold::hyperplane(2, 1, 0.5, 3);
        let z = m.lift(&vec![0.0, 0.1, 0.2]);
        let f = build_frame(&m.rho, &z).unwrap();
        // ∂ρ/∂z = (1/2, 0) → P′₁ = (2, 0)
        assert!((f.p[0][0] - Complex64::new(2.0, 0.0)).norm() < 1e-14);
        assert!(f.p[0][1].norm() < 1e-14);
        assert!(f.duality_residual() < 1e-12);
    }

    #[test]
    fn frame_quadric_residuals() {
        let m = quad_c3();
        let z = m.lift(&vec![0.0; 5]);
        let f = build_frame(&m.rho, &z).unwrap();
        assert!(f.duality_residual() < 1e-12);
        // random patch points
        for (i, u) in m.grid.nodes() {
            if i % 7 != 0 {
                continue;
            }
            let f = build_frame(&m.rho, &m.lift(&u)).unwrap();
            assert!(f.duality_residual() < 1e-8, "duality at node {i}");
            assert!(f.null_combination_residual() < 1e-8);
        }
    }

    #[test]
    fn certify_quadric_33_passes_and_sphere_fails() {
        let m = GraphManifold::signature_quadric(7, &[1.0, 1.0, 1.0, -1.0, -1.0, -1.0], 0.2, 3);
        let thetas = theta_samples(1, 2);
        let zs: Vec<Vec<Complex64>> = (0..27)
            .map(|i| {
                let mut u = vec![0.0; 13];
                u[1 + (i % 12)] = 0.05 * ((i / 12) as f64 - 1.0);
                m.lift(&u)
            })
            .collect();
        let rep = certify_regular_q_pseudoconcave(&m, &m.rho, 3, &thetas, &zs, 10.0).unwrap();
        assert!(rep.passed(), "failures: {:?}, angle {}", rep.failures, rep.max_principal_angle_deg);

        // strictly pseudoconvex: fails for θ = +1
        let sphere = GraphManifold::signature_quadric(3, &[-1.0, -1.0], 0.2, 3);
        let z0 = vec![sphere.lift(&vec![0.0; 5])];
        let rep = certify_regular_q_pseudoconcave(&sphere, &sphere.rho, 1, &thetas, &z0, 10.0).unwrap();
        assert!(!rep.failures.is_empty());

        // flat hyperplane: fails everywhere
        let flat = GraphManifold::hyperplane(3, 1, 0.2, 3);
        let zf = vec![flat.lift(&vec![0.0; 5])];
        let rep = certify_regular_q_pseudoconcave(&flat, &flat.rho, 1, &thetas, &zf, 10.0).unwrap();
        assert_eq!(rep.failures.len(), 2);
    }

    #[test]
    fn extension_restricts_exactly_and_is_x_constant() {
        let m = quad_c3();
        let g = |u: &[f64]| Complex64::new(u[0] + 2.0 * u[1], u[2] - u[3]);
        let eg = m.extend(g);
        for (_, u) in m.grid.nodes() {
            let z = m.lift(&u);
            assert_eq!(eg(&z), g(&u));
            // constancy in x1
            let mut z2 = z.clone();
            z2[0] += Complex64::new(0.37, 0.0);
            assert_eq!(eg(&z2), g(&u));
        }
        // E(1) = 1
        let one = m.extend(|_| Complex64::new(1.0, 0.0));
        assert_eq!(one(&m.lift(&vec![0.1; 5])), Complex64::new(1.0, 0.0));
    }

    #[test]
    fn tangential_cr_holomorphic_restriction_vanishes() {
        let m = quad_c3();
        // g = restriction of z2 (holomorphic coordinate)
        let g = GridScalar::from_fn(&m.grid, |u| Complex64::new(u[1], u[2]));
        let f = FrameForm::function(g);
        let dg = tangential_cr(&m, &m.rho, &f).unwrap();
        assert!(dg.max_abs() < 1e-10, "holomorphic restriction should be CR: {}", dg.max_abs());
    }

    #[test]
    fn tangential_cr_flat_conjugate_coordinate() {
        let m = GraphManifold::hyperplane(2, 1, 0.4, 5);
        let g = GridScalar::from_fn(&m.grid, |u| Complex64::new(u[1], -u[2])); // conj(z2)
        let dg = tangential_cr(&m, &m.rho, &FrameForm::function(g)).unwrap();
        let comp = dg.component(&[1]).unwrap();
        for v in &comp.values {
            assert!((v - Complex64::new(1.0, 0.0)).norm() < 1e-10);
        }
        // no dz̄₁ component on the flat model
        assert!(dg.component(&[0]).unwrap().max_abs() < 1e-12);
    }

    #[test]
    fn tangential_cr_matches_symbolic_oracle() {
        let m = quad_c3();
        // g = |z2|² extends to z2 z̄2 (constant in x): ∂E(g)/∂z̄_s = δ_{s,1} z2
        let g = GridScalar::from_fn(&m.grid, |u| {
            let z2 = Complex64::new(u[1], u[2]);
            Complex64::new(z2.norm_sqr(), 0.0)
        });
        let dg = tangential_cr(&m, &m.rho, &FrameForm::function(g)).unwrap();
        let mut worst: f64 = 0.0;
        for (flat, u) in m.grid.nodes() {
            let z = m.lift(&u);
            let got1 = dg.component(&[1]).unwrap().values[flat];
            worst = worst.max((got1 - z[1]).norm());
            let got0 = dg.component(&[0]).unwrap().values[flat];
            worst = worst.max(got0.norm());
            let got2 = dg.component(&[2]).unwrap().values[flat];
            worst = worst.max(got2.norm());
        }
        // second-order stencils are exact on this quadratic
        assert!(worst < 1e-12, "grid-FD vs symbolic oracle: {worst}");
    }

    #[test]
    fn dbar_squared_vanishes() {
        let m = quad_c3();
        let g = GridScalar::from_fn(&m.grid, |u| Complex64::new((u[1] * u[3]).sin(), u[2] * u[4]));
        let f = FrameForm::function(g);
        let dg = tangential_cr(&m, &m.rho, &f).unwrap();
        let ddg = tangential_cr(&m, &m.rho, &dg).unwrap();
        // mixed-axis stencils commute, so ∂̄² collapses to rounding noise
        assert!(ddg.max_abs() < 1e-12, "dbar^2 = {}", ddg.max_abs());
    }

    #[test]
    fn contract_pairs_table_against_frame_tuple() {
        let m = quad_c3();
        let g = GridScalar::from_fn(&m.grid, |u| {
            let z2 = Complex64::new(u[1], u[2]);
            Complex64::new(z2.norm_sqr(), 0.0)
        });
        let dg = tangential_cr(&m, &m.rho, &FrameForm::function(g)).unwrap();
        // contraction against Z̄_j equals Z̄_j(E g) = Σ_s (Z̄_j)_s ∂E(g)/∂z̄_s
        let (flat, u) = m.grid.nodes().nth(7).unwrap();
        let z = m.lift(&u);
        let frame = build_frame(&m.rho, &z).unwrap();
        for j in 1..3usize {
            let zb = frame.zbar_vec(j);
            let exact = zb[1] * z[1]; // only the s=1 ambient derivative is nonzero
            let got = dg.contract(&frame, flat, &[j]);
            assert!((got - exact).norm() < 1e-12);
        }
    }
}
