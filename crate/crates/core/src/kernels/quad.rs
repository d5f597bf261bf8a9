//! Quadrature engine for stratified tube integrals: node generation with
//! exact parameterization Jacobians, and the pullback pairing that turns a
//! `PointForm` integrand into a number per output `dz̄` monomial.

use std::sync::Arc;

use num_complex::Complex64;

use crate::form::{FormMonomial, PointForm};
use crate::geometry::GraphManifold;
use crate::num::{gauss_legendre_on, periodic_nodes, sphere_area, unit_sphere_point, Sobol};

/// One parameter direction of a chart: derivatives of the ambient complex
/// coordinates and of the simplex coordinates along it.
#[derive(Debug, Clone)]
pub struct Column {
    pub dzeta: Vec<Complex64>,
    pub dt: Vec<f64>,
}

impl Column {
    pub fn zeta(dzeta: Vec<Complex64>, lt: usize) -> Self {
        Column { dzeta, dt: vec![0.0; lt] }
    }
    pub fn t_unit(n: usize, lt: usize, a: usize) -> Self {
        let mut dt = vec![0.0; lt];
        dt[a] = 1.0;
        Column { dzeta: vec![Complex64::new(0.0, 0.0); n], dt }
    }
}

/// A quadrature node on a stratum × simplex product.
#[derive(Debug, Clone)]
pub struct EngineNode {
    pub zeta: Vec<Complex64>,
    pub t: Vec<f64>,
    pub weight: f64,
    pub cols: Vec<Column>,
}

/// A stratum: nodes plus a global orientation sign.
#[derive(Debug, Clone)]
pub struct Stratum {
    pub nodes: Vec<EngineNode>,
    pub orientation: f64,
}

impl Stratum {
    /// Cartesian product with a simplex rule: t-columns are appended after
    /// the base columns.
    pub fn product_with_simplex(&self, simplex: &SimplexRule, n: usize) -> Stratum {
        let lt = simplex.dim_t;
        let mut nodes = Vec::with_capacity(self.nodes.len() * simplex.nodes.len());
        for base in &self.nodes {
            for (t, wt, tcols) in &simplex.nodes {
                let mut cols: Vec<Column> = base
                    .cols
                    .iter()
                    .map(|c| Column { dzeta: c.dzeta.clone(), dt: vec![0.0; lt] })
                    .collect();
                for tc in tcols {
                    cols.push(Column { dzeta: vec![Complex64::new(0.0, 0.0); n], dt: tc.clone() });
                }
                nodes.push(EngineNode {
                    zeta: base.zeta.clone(),
                    t: t.clone(),
                    weight: base.weight * wt,
                    cols,
                });
            }
        }
        Stratum { nodes, orientation: self.orientation }
    }
}

/// Nodes on a t-simplex (or a Σ=1 face): (t values, weight, t-columns).
pub struct SimplexRule {
    pub dim_t: usize,
    pub nodes: Vec<(Vec<f64>, f64, Vec<Vec<f64>>)>,
}

impl SimplexRule {
    /// A single point with no t coordinates (Δ⁰).
    pub fn point(dim_t: usize, t: Vec<f64>) -> Self {
        SimplexRule { dim_t, nodes: vec![(t, 1.0, Vec::new())] }
    }

    /// Δ^s = {t ≥ 0, Σ t ≤ 1} with `per_axis` Gauss points through a Duffy map.
    pub fn full(s: usize, per_axis: usize) -> Self {
        assert!((1..=3).contains(&s));
        let (x, w) = gauss_legendre_on(per_axis, 0.0, 1.0);
        let mut nodes = Vec::new();
        let idx: Vec<usize> = (0..per_axis).collect();
        let mut stack = vec![Vec::new()];
        for _ in 0..s {
            let mut next = Vec::new();
            for v in &stack {
                for &i in &idx {
                    let mut v2: Vec<usize> = v.clone();
                    v2.push(i);
                    next.push(v2);
                }
            }
            stack = next;
        }
        for combo in stack {
            // Duffy: t_1 = a_1, t_2 = a_2 (1 − t_1), t_3 = a_3 (1 − t_1 − t_2)
            let mut t = vec![0.0; s];
            let mut weight = 1.0;
            let mut remaining = 1.0;
            for k in 0..s {
                let a = x[combo[k]];
                t[k] = a * remaining;
                weight *= w[combo[k]] * remaining;
                remaining -= t[k];
            }
            let tcols: Vec<Vec<f64>> = (0..s)
                .map(|k| {
                    let mut e = vec![0.0; s];
                    e[k] = 1.0;
                    e
                })
                .collect();
            nodes.push((t, weight, tcols));
        }
        SimplexRule { dim_t: s, nodes }
    }

    /// The Σ t = 1 face of Δ^s: s coordinates, s−1 parameters.
    pub fn sum_one_face(s: usize, per_axis: usize) -> Self {
        if s == 1 {
            return SimplexRule { dim_t: 1, nodes: vec![(vec![1.0], 1.0, Vec::new())] };
        }
        let inner = SimplexRule::full(s - 1, per_axis);
        let nodes = inner
            .nodes
            .into_iter()
            .map(|(tin, w, _)| {
                let mut t = tin.clone();
                let sum: f64 = tin.iter().sum();
                t.push(1.0 - sum);
                let tcols: Vec<Vec<f64>> = (0..s - 1)
                    .map(|k| {
                        let mut e = vec![0.0; s];
                        e[k] = 1.0;
                        e[s - 1] = -1.0;
                        e
                    })
                    .collect();
                (t, w, tcols)
            })
            .collect();
        SimplexRule { dim_t: s, nodes }
    }
}

// ---------------------------------------------------------------------------
// Chart derivative helpers on graph manifolds

/// Ambient derivative columns of the lift map along the graph axes at u,
/// with the normal offsets held fixed.
pub fn lift_jacobian(man: &GraphManifold, zeta: &[Complex64]) -> Vec<Vec<Complex64>> {
    let gd = man.graph_dim();
    let n = man.n;
    let m = man.m;
    // horizontal derivative of the graph coordinates
    let mut cols = Vec::with_capacity(gd);
    for q in 0..gd {
        // v_i = ∂(horizontal z_i)/∂u_q
        let mut v = vec![Complex64::new(0.0, 0.0); n];
        if q < m {
            v[q] = Complex64::new(0.0, 1.0);
        } else {
            let a = (q - m) / 2;
            let im = (q - m) % 2 == 1;
            v[m + a] = if im { Complex64::new(0.0, 1.0) } else { Complex64::new(1.0, 0.0) };
        }
        // dζ_j/∂u_q = ∂h_j/∂u_q + i δ_{jq} for the normal block
        let mut col = v.clone();
        for j in 0..m {
            let mut dh = Complex64::new(0.0, 0.0);
            for i in 0..n {
                let dz = man.h[j].d_z(i).eval(zeta);
                let dzb = man.h[j].d_zbar(i).eval(zeta);
                dh += dz * v[i] + dzb * v[i].conj();
            }
            // x_j varies with h; y_j follows u directly (already in v)
            col[j] = dh + v[j];
        }
        cols.push(col);
    }
    cols
}

/// Map a graph-space direction vector to an ambient column through the lift.
pub fn graph_direction_column(
    axis_cols: &[Vec<Complex64>],
    direction: &[f64],
) -> Vec<Complex64> {
    let n = axis_cols[0].len();
    let mut out = vec![Complex64::new(0.0, 0.0); n];
    for (q, w) in direction.iter().enumerate() {
        if *w == 0.0 {
            continue;
        }
        for i in 0..n {
            out[i] += axis_cols[q][i] * *w;
        }
    }
    out
}

/// Tensor Gauss sheet over the full graph box at normal offsets `targets`
/// (oriented +1 for the +shell when the chart order is (y, Re, Im, …)).
pub fn sheet_box(man: &GraphManifold, targets: &[f64], per_axis: usize, lt: usize) -> Stratum {
    let gd = man.graph_dim();
    let rules: Vec<(Vec<f64>, Vec<f64>)> = (0..gd)
        .map(|d| gauss_legendre_on(per_axis, man.grid.lo[d], man.grid.hi[d]))
        .collect();
    let mut nodes = Vec::new();
    let mut combo = vec![0usize; gd];
    loop {
        let u: Vec<f64> = (0..gd).map(|d| rules[d].0[combo[d]]).collect();
        let w: f64 = (0..gd).map(|d| rules[d].1[combo[d]]).product();
        let zeta = man.lift_with_rho(&u, targets);
        let axis_cols = lift_jacobian(man, &zeta);
        let cols = axis_cols.into_iter().map(|c| Column::zeta(c, lt)).collect();
        nodes.push(EngineNode { zeta, t: vec![0.0; lt], weight: w, cols });
        // advance
        let mut d = gd;
        loop {
            if d == 0 {
                return Stratum { nodes, orientation: 1.0 };
            }
            d -= 1;
            combo[d] += 1;
            if combo[d] < per_axis {
                break;
            }
            combo[d] = 0;
        }
    }
}

/// Polar sheet around `center_u` in graph coordinates: log-spaced radial
/// segments × QMC sphere directions, at normal offsets `targets`.
#[allow(clippy::too_many_arguments)]
pub fn sheet_polar(
    man: &GraphManifold,
    targets: &[f64],
    center_u: &[f64],
    r_min: f64,
    r_max: f64,
    n_rad: usize,
    n_sphere: usize,
    seed: u64,
    lt: usize,
) -> Stratum {
    let gd = man.graph_dim();
    let mut nodes = Vec::new();
    // geometric radial segments, Gauss(3) on each
    let n_seg = n_rad.max(2);
    let ratio = (r_max / r_min).powf(1.0 / n_seg as f64);
    let mut sob = Sobol::new(gd.min(12), seed);
    let sphere_pts: Vec<Vec<f64>> = (0..n_sphere)
        .map(|_| unit_sphere_point(&sob.next_point()[..gd.min(12)]))
        .collect();
    let area = sphere_area(gd) / n_sphere as f64;
    for seg in 0..n_seg {
        let a = r_min * ratio.powi(seg as i32);
        let b = a * ratio;
        let (rx, rw) = gauss_legendre_on(3, a, b);
        for (ri, &r) in rx.iter().enumerate() {
            for dir in &sphere_pts {
                let mut u = center_u.to_vec();
                for d in 0..gd {
                    u[d] += r * dir[d];
                }
                let zeta = man.lift_with_rho(&u, targets);
                let axis_cols = lift_jacobian(man, &zeta);
                // radial column + (gd−1) tangent frame columns scaled by r
                let frame = tangent_frame(dir);
                let mut cols = Vec::with_capacity(gd);
                cols.push(Column::zeta(graph_direction_column(&axis_cols, dir), lt));
                for f in &frame {
                    let scaled: Vec<f64> = f.iter().map(|x| x * r).collect();
                    cols.push(Column::zeta(graph_direction_column(&axis_cols, &scaled), lt));
                }
                nodes.push(EngineNode { zeta, t: vec![0.0; lt], weight: rw[ri] * area, cols });
            }
        }
    }
    Stratum { nodes, orientation: 1.0 }
}

/// Graph-sphere corner stratum: |u − c| = radius lifted at normal offsets.
pub fn corner_sphere(
    man: &GraphManifold,
    center_u: &[f64],
    radius: f64,
    targets: &[f64],
    n_nodes: usize,
    seed: u64,
    lt: usize,
) -> Stratum {
    let gd = man.graph_dim();
    let mut sob = Sobol::new(gd.min(12), seed);
    let area = sphere_area(gd) * radius.powi(gd as i32 - 1) / n_nodes as f64;
    let mut nodes = Vec::with_capacity(n_nodes);
    for _ in 0..n_nodes {
        let dir = unit_sphere_point(&sob.next_point()[..gd.min(12)]);
        let mut u = center_u.to_vec();
        for d in 0..gd {
            u[d] += radius * dir[d];
        }
        let zeta = man.lift_with_rho(&u, targets);
        let axis_cols = lift_jacobian(man, &zeta);
        let frame = tangent_frame(&dir);
        let cols: Vec<Column> = frame
            .iter()
            .map(|f| Column::zeta(graph_direction_column(&axis_cols, f), lt))
            .collect();
        nodes.push(EngineNode { zeta, t: vec![0.0; lt], weight: area, cols });
    }
    Stratum { nodes, orientation: 1.0 }
}

/// Orthonormal tangent frame of the sphere at direction ω, ordered so that
/// (ω, frame) is positively oriented in ℝ^d.
pub fn tangent_frame(omega: &[f64]) -> Vec<Vec<f64>> {
    let d = omega.len();
    // Householder reflection mapping e_1 to ω: columns 2..d of the
    // reflection form the frame
    let mut v = omega.to_vec();
    v[0] -= 1.0;
    let vn: f64 = v.iter().map(|x| x * x).sum();
    let mut frame = Vec::with_capacity(d - 1);
    for k in 1..d {
        let mut col = vec![0.0; d];
        col[k] = 1.0;
        if vn > 1e-28 {
            let coef = 2.0 * v[k] / vn;
            for i in 0..d {
                col[i] -= coef * v[i];
            }
        }
        frame.push(col);
    }
    // Householder has det −1, so (ω, frame) as built is negatively oriented;
    // flip one frame vector to restore positive orientation.
    if d >= 2 {
        for x in frame[0].iter_mut() {
            *x = -*x;
        }
    }
    frame
}

/// Solid-tube volume chart: normal offset × polar graph chart around a foot
/// point. The chart (offset, u) is positively oriented in ℝ^{2n} for m = 1.
#[allow(clippy::too_many_arguments)]
pub fn tube_volume(
    man: &GraphManifold,
    eps: f64,
    n_eps: usize,
    center_u: &[f64],
    r_min: f64,
    r_max: f64,
    n_rad: usize,
    n_sphere: usize,
    seed: u64,
    lt: usize,
) -> Stratum {
    assert_eq!(man.m, 1, "tube volume chart implemented for hypersurface models");
    let (ox, ow) = gauss_legendre_on(n_eps, -eps, eps);
    let mut nodes = Vec::new();
    for (oi, &off) in ox.iter().enumerate() {
        let sheet =
            sheet_polar(man, &[off], center_u, r_min, r_max, n_rad, n_sphere, seed + oi as u64, lt);
        for mut node in sheet.nodes {
            // prepend the normal column ∂ζ/∂offset = e_1
            let mut dz = vec![Complex64::new(0.0, 0.0); man.n];
            dz[0] = Complex64::new(1.0, 0.0);
            node.cols.insert(0, Column::zeta(dz, lt));
            node.weight *= ow[oi];
            nodes.push(node);
        }
    }
    Stratum { nodes, orientation: 1.0 }
}

/// Hopf-coordinate tensor rule on a sphere S³ ⊂ ℂ² (for the reproducing
/// tests). The chart (ψ, φ₁, φ₂) carries the boundary orientation that
/// reproduces +g(z) in the representation formula (pinned by the
/// reproducing tests).
pub fn sphere_hopf_c2(center: &[Complex64], radius: f64, n_psi: usize, n_phi: usize, lt: usize) -> Stratum {
    let (px, pw) = gauss_legendre_on(n_psi, 0.0, std::f64::consts::FRAC_PI_2);
    let (fx, fh) = periodic_nodes(n_phi, 2.0 * std::f64::consts::PI);
    let mut nodes = Vec::new();
    for (pi, &psi) in px.iter().enumerate() {
        for &p1 in &fx {
            for &p2 in &fx {
                let e1 = Complex64::new(0.0, p1).exp();
                let e2 = Complex64::new(0.0, p2).exp();
                let zeta = vec![
                    center[0] + radius * psi.cos() * e1,
                    center[1] + radius * psi.sin() * e2,
                ];
                let cols = vec![
                    Column::zeta(
                        vec![-radius * psi.sin() * e1, radius * psi.cos() * e2],
                        lt,
                    ),
                    Column::zeta(vec![Complex64::new(0.0, radius * psi.cos()) * e1, Complex64::new(0.0, 0.0)], lt),
                    Column::zeta(vec![Complex64::new(0.0, 0.0), Complex64::new(0.0, radius * psi.sin()) * e2], lt),
                ];
                nodes.push(EngineNode {
                    zeta,
                    t: vec![0.0; lt],
                    weight: pw[pi] * fh * fh,
                    cols,
                });
            }
        }
    }
    Stratum { nodes, orientation: 1.0 }
}

/// Ambient sphere S^{2n−1} via QMC with orthonormal real frames
/// (outward-normal-first orientation).
pub fn ambient_sphere(center: &[Complex64], radius: f64, n_nodes: usize, seed: u64, lt: usize) -> Stratum {
    let n = center.len();
    let d = 2 * n;
    let mut sob = Sobol::new(d.min(12), seed);
    let area = sphere_area(d) * radius.powi(d as i32 - 1) / n_nodes as f64;
    let mut nodes = Vec::with_capacity(n_nodes);
    for _ in 0..n_nodes {
        let dir = unit_sphere_point(&sob.next_point()[..d.min(12)]);
        let zeta: Vec<Complex64> = (0..n)
            .map(|i| center[i] + radius * Complex64::new(dir[2 * i], dir[2 * i + 1]))
            .collect();
        let frame = tangent_frame(&dir);
        let cols: Vec<Column> = frame
            .iter()
            .map(|f| {
                let dz: Vec<Complex64> =
                    (0..n).map(|i| Complex64::new(f[2 * i], f[2 * i + 1])).collect();
                Column::zeta(dz, lt)
            })
            .collect();
        nodes.push(EngineNode { zeta, t: vec![0.0; lt], weight: area, cols });
    }
    Stratum { nodes, orientation: 1.0 }
}

/// Ambient ball volume via log-radial shells × QMC sphere directions,
/// excluding a small ball around the (future) singular point.
#[allow(clippy::too_many_arguments)]
pub fn ambient_ball_volume(
    center: &[Complex64],
    r_min: f64,
    r_max: f64,
    n_rad: usize,
    n_sphere: usize,
    seed: u64,
    lt: usize,
) -> Stratum {
    let n = center.len();
    let d = 2 * n;
    let mut sob = Sobol::new(d.min(12), seed);
    let sphere_pts: Vec<Vec<f64>> =
        (0..n_sphere).map(|_| unit_sphere_point(&sob.next_point()[..d.min(12)])).collect();
    let area = sphere_area(d) / n_sphere as f64;
    let ratio = (r_max / r_min).powf(1.0 / n_rad as f64);
    let mut nodes = Vec::new();
    // constant columns: the standard real coordinate directions
    let std_cols: Vec<Column> = (0..d)
        .map(|k| {
            let mut dz = vec![Complex64::new(0.0, 0.0); n];
            dz[k / 2] = if k % 2 == 0 { Complex64::new(1.0, 0.0) } else { Complex64::new(0.0, 1.0) };
            Column::zeta(dz, lt)
        })
        .collect();
    for seg in 0..n_rad {
        let a = r_min * ratio.powi(seg as i32);
        let b = a * ratio;
        let (rx, rw) = gauss_legendre_on(3, a, b);
        for (ri, &r) in rx.iter().enumerate() {
            for dir in &sphere_pts {
                let zeta: Vec<Complex64> = (0..n)
                    .map(|i| center[i] + r * Complex64::new(dir[2 * i], dir[2 * i + 1]))
                    .collect();
                nodes.push(EngineNode {
                    zeta,
                    t: vec![0.0; lt],
                    weight: rw[ri] * area * r.powi(d as i32 - 1),
                    cols: std_cols.clone(),
                });
            }
        }
    }
    Stratum { nodes, orientation: 1.0 }
}

// ---------------------------------------------------------------------------
// Integration

fn det_complex(mat: &mut [Vec<Complex64>]) -> Complex64 {
    let d = mat.len();
    let mut det = Complex64::new(1.0, 0.0);
    for k in 0..d {
        // partial pivot
        let mut piv = k;
        let mut best = mat[k][k].norm_sqr();
        for r in (k + 1)..d {
            let v = mat[r][k].norm_sqr();
            if v > best {
                best = v;
                piv = r;
            }
        }
        if best == 0.0 {
            return Complex64::new(0.0, 0.0);
        }
        if piv != k {
            mat.swap(piv, k);
            det = -det;
        }
        let pivot = mat[k][k];
        det *= pivot;
        for r in (k + 1)..d {
            let f = mat[r][k] / pivot;
            for c in k..d {
                let sub = f * mat[k][c];
                mat[r][c] -= sub;
            }
        }
    }
    det
}

/// Integrate a `PointForm`-valued integrand over a stratum: for each
/// monomial the `dz̄` factors pass to the output and the remaining
/// `(dζ, dζ̄, dt)` factors are paired against the chart columns by a
/// pullback determinant.
pub fn integrate<F>(stratum: &Stratum, integrand: F) -> PointForm
where
    F: Fn(&EngineNode) -> PointForm + Sync,
{
    integrate_indexed(stratum, |_, node| integrand(node))
}

/// Same as [`integrate`] but the integrand also receives the node index
/// (for per-node caches).
pub fn integrate_indexed<F>(stratum: &Stratum, integrand: F) -> PointForm
where
    F: Fn(usize, &EngineNode) -> PointForm + Sync,
{
    let mut out: Option<PointForm> = None;
    for (node_idx, node) in stratum.nodes.iter().enumerate() {
        let form = integrand(node_idx, node);
        let dim = node.cols.len();
        let mut acc = PointForm::zero(form.n, form.l);
        for (mono, coeff) in form.terms() {
            let int_deg = mono.dzeta.len() + mono.dzetabar.len() + mono.dt.len();
            if int_deg != dim {
                continue;
            }
            // move the dz̄ block in front of the dζ̄/dt blocks it follows
            let swaps = (mono.dzeta.len() + mono.dzetabar.len()) * mono.dzbar.len();
            let split_sign = if swaps % 2 == 0 { 1.0 } else { -1.0 };
            // pullback rows in canonical order
            let mut mat: Vec<Vec<Complex64>> = Vec::with_capacity(dim);
            for &i in &mono.dzeta {
                mat.push(node.cols.iter().map(|c| c.dzeta[(i - 1) as usize]).collect());
            }
            for &i in &mono.dzetabar {
                mat.push(node.cols.iter().map(|c| c.dzeta[(i - 1) as usize].conj()).collect());
            }
            for &a in &mono.dt {
                mat.push(
                    node.cols.iter().map(|c| Complex64::new(c.dt[(a - 1) as usize], 0.0)).collect(),
                );
            }
            let det = det_complex(&mut mat);
            if det.norm_sqr() == 0.0 {
                continue;
            }
            let mut out_mono = FormMonomial::unit();
            out_mono.dzbar = mono.dzbar.clone();
            acc.add_term(out_mono, coeff * det * split_sign * node.weight);
        }
        match &mut out {
            None => out = Some(acc),
            Some(o) => o.add_assign(&acc),
        }
    }
    let mut res = out.unwrap_or_else(|| PointForm::zero(1, 0));
    res = res.scale(Complex64::new(stratum.orientation, 0.0));
    res
}

// ---------------------------------------------------------------------------
// Combined kernels

/// One kernel slot of a simplex-interpolated Cauchy-Fantappie kernel.
pub enum KernelSlot {
    BochnerMartinelli,
    Concave(Arc<crate::barrier::Barrier>),
    Convex(Arc<crate::barrier::ConvexPiece>),
}

/// `η(ζ,z,t) = Σ_s w_s(t)·η_s(ζ,z)` with affine weights
/// `w_s(t) = c_s + Σ_a k_{sa} t_a`; satisfies the unit-pairing condition
/// whenever `Σ_s w_s = 1`.
pub struct CombinedKernel {
    pub n: usize,
    pub lt: usize,
    pub slots: Vec<KernelSlot>,
    pub w_const: Vec<f64>,
    pub w_coef: Vec<Vec<f64>>,
}

impl CombinedKernel {
    pub fn jet(&self, zeta: &[Complex64], z: &[Complex64], t: &[f64]) -> crate::form::JetPoint {
        use crate::form::JetPoint;
        let n = self.n;
        let lt = self.lt;
        let piece_jets: Vec<JetPoint> = self
            .slots
            .iter()
            .map(|s| match s {
                KernelSlot::BochnerMartinelli => {
                    crate::form::JetField::bochner_martinelli(n, lt).jet(zeta, z, t)
                }
                KernelSlot::Concave(b) => b.kernel_jet(zeta, z, lt),
                KernelSlot::Convex(c) => c.kernel_jet(zeta, z, lt),
            })
            .collect();
        let mut out = JetPoint::zero(n, lt);
        for (s, jp) in piece_jets.iter().enumerate() {
            let w = self.w_const[s] + self.w_coef[s].iter().zip(t).map(|(k, ta)| k * ta).sum::<f64>();
            for k in 0..n {
                out.value[k] += w * jp.value[k];
                for i in 0..n {
                    out.d_zetabar[k][i] += w * jp.d_zetabar[k][i];
                    out.d_zbar[k][i] += w * jp.d_zbar[k][i];
                }
                // t-jets: ∂η/∂t_a = Σ_s k_{sa} η_s
                for a in 0..lt {
                    out.d_t[k][a] += self.w_coef[s][a] * jp.value[k];
                }
            }
        }
        out
    }
}

// ---------------------------------------------------------------------------
// Fast determinant pairing for the CF integrands
//
// The integrand E(h) ∧ ω′_R(η) ∧ ω(ζ) expands into a sum of wedge products
// of 1-forms (plus the η scalar); its pairing with the chart columns is a
// sum of small determinants.  This path avoids the sparse-form algebra in
// the hot quadrature loops and is checked against the generic engine.

use crate::form::JetPoint;

/// Pair one CF term with the chart columns: value of
/// `h-factor ∧ ω′_R(η)-term ∧ ω(ζ)` against the node, split into the output
/// dz̄ components. `h_coeffs` carries degree-0 (`key = []`) or degree-1
/// (`key = [s]`) input coefficients; `r_omega ∈ {0, 1}`.
///
/// Each wedge factor is kept as a whole 1-form and applied to the chart
/// columns, so every (input-component, η-row, output-row) term costs a
/// single small determinant. Orientation conventions are pinned against
/// the generic engine by the equivalence test.
pub fn cf_fast_pairing(
    node: &EngineNode,
    h_coeffs: &[(Vec<u8>, Complex64)],
    jet: &JetPoint,
    r_omega: usize,
    n: usize,
) -> Vec<(Vec<u8>, Complex64)> {
    assert!(r_omega <= 1, "fast path covers omega degrees 0 and 1");
    let lt = node.cols.first().map(|c| c.dt.len()).unwrap_or(0);
    let dim = node.cols.len();
    let d_in = h_coeffs.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
    // degree bookkeeping: rows = d_in + (n − 1 − r_omega) + n must fill the chart
    if d_in + (n - 1 - r_omega) + n != dim {
        return Vec::new();
    }
    let mut out: Vec<(Vec<u8>, Complex64)> = vec![];

    // C-row values per (j, col): the 1-form ∂̄_{ζ,t}η_j applied to the column
    let mut c_rows = vec![vec![Complex64::new(0.0, 0.0); dim]; n];
    for j in 0..n {
        for (q, col) in node.cols.iter().enumerate() {
            let mut v = Complex64::new(0.0, 0.0);
            for i in 0..n {
                v += jet.d_zetabar[j][i] * col.dzeta[i].conj();
            }
            for a in 0..lt {
                v += jet.d_t[j][a] * col.dt[a];
            }
            c_rows[j][q] = v;
        }
    }
    // extraction sign for the output dz̄ factor sitting after the h factor
    // (only present when r_omega = 1)
    let extract = if r_omega == 1 && d_in % 2 == 1 { -1.0 } else { 1.0 };

    let mut mat: Vec<Vec<Complex64>> = vec![vec![Complex64::new(0.0, 0.0); dim]; dim];

    // the determinant is linear in the input row, so all degree-1 input
    // components merge into a single applied row before the elimination
    let mut h_row = vec![Complex64::new(0.0, 0.0); dim];
    let mut h_scalar = Complex64::new(0.0, 0.0);
    let mut have_row = false;
    for (key, val) in h_coeffs {
        if val.norm_sqr() == 0.0 {
            continue;
        }
        if key.is_empty() {
            h_scalar += val;
        } else {
            let si = (key[0] - 1) as usize;
            for (q, col) in node.cols.iter().enumerate() {
                h_row[q] += val * col.dzeta[si].conj();
            }
            have_row = true;
        }
    }
    if d_in == 1 && !have_row {
        return Vec::new();
    }
    if d_in == 0 && h_scalar.norm_sqr() == 0.0 {
        return Vec::new();
    }

    for k in 0..n {
        let eta_k = jet.value[k];
        if eta_k.norm_sqr() == 0.0 {
            continue;
        }
        let b_iter: Vec<Option<usize>> = if r_omega == 0 {
            vec![None]
        } else {
            (0..n).filter(|&b| b != k).map(Some).collect()
        };
        for b in b_iter {
            // permutation sign of (k, b?, rest ascending)
            let mut seq: Vec<usize> = vec![k];
            if let Some(b) = b {
                seq.push(b);
            }
            for j in 0..n {
                if j != k && Some(j) != b {
                    seq.push(j);
                }
            }
            let mut inv = 0usize;
            for i in 0..seq.len() {
                for j2 in (i + 1)..seq.len() {
                    if seq[i] > seq[j2] {
                        inv += 1;
                    }
                }
            }
            let sgn_perm = if inv % 2 == 0 { 1.0 } else { -1.0 };
            // rows in wedge order: merged input row | C_j (ascending) | dζ-block
            let mut r = 0usize;
            if d_in == 1 {
                mat[r][..dim].copy_from_slice(&h_row);
                r += 1;
            }
            for (j, cj) in c_rows.iter().enumerate() {
                if j == k || Some(j) == b {
                    continue;
                }
                mat[r][..dim].copy_from_slice(cj);
                r += 1;
            }
            for i in 0..n {
                for (q, col) in node.cols.iter().enumerate() {
                    mat[r][q] = col.dzeta[i];
                }
                r += 1;
            }
            debug_assert_eq!(r, dim);
            let det = det_complex(&mut mat);
            if det.norm_sqr() == 0.0 {
                continue;
            }
            let front = if d_in == 0 { h_scalar } else { Complex64::new(1.0, 0.0) };
            let base = front * eta_k * sgn_perm * extract * det * node.weight;
            match b {
                None => match out.iter_mut().find(|(k2, _)| k2.is_empty()) {
                    Some((_, v)) => *v += base,
                    None => out.push((Vec::new(), base)),
                },
                Some(b) => {
                    for p in 1..=n as u8 {
                        let c = jet.d_zbar[b][(p - 1) as usize];
                        if c.norm_sqr() == 0.0 {
                            continue;
                        }
                        let val = base * c;
                        match out.iter_mut().find(|(k2, _)| k2.len() == 1 && k2[0] == p) {
                            Some((_, v)) => *v += val,
                            None => out.push((vec![p], val)),
                        }
                    }
                }
            }
        }
    }
    out
}

/// Integrate a CF operator piece with the fast pairing: per node the input
/// coefficients come from `h_at` (index-aware for caches) and the kernel jet
/// from `kernel`.
pub fn integrate_cf<H>(
    stratum: &Stratum,
    h_at: H,
    kernel: &CombinedKernel,
    r_omega: usize,
    z: &[Complex64],
) -> PointForm
where
    H: Fn(usize, &EngineNode) -> Vec<(Vec<u8>, Complex64)>,
{
    let n = kernel.n;
    let mut acc = PointForm::zero(n, kernel.lt);
    for (idx, node) in stratum.nodes.iter().enumerate() {
        let coeffs = h_at(idx, node);
        if coeffs.is_empty() {
            continue;
        }
        let jet = kernel.jet(&node.zeta, z, &node.t);
        for (key, val) in cf_fast_pairing(node, &coeffs, &jet, r_omega, n) {
            let mut m = FormMonomial::unit();
            m.dzbar = key;
            acc.add_term(m, val);
        }
    }
    acc.scale(Complex64::new(stratum.orientation, 0.0))
}
