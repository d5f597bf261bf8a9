//! The local solver for ∂̄_M-closed forms on an adjusted pair, and the CR
//! extension wrapper: `P(h) = R_M(h) + u` where u solves ∂̄u = g on the
//! inner convex ball against the corner-kernel form g.

use std::sync::Arc;

use num_complex::Complex64;

use super::{apply_rm_r, corner_g, BallSolver, CFOperatorConfig, FormCoeffFn, KernelError, PairGeometry};
use crate::barrier::Barrier;
use crate::form::FormMonomial;
use crate::geometry::GraphManifold;

/// Configuration of the inner ∂̄-solve.
#[derive(Debug, Clone)]
pub struct SolveConfig {
    pub cf: CFOperatorConfig,
    /// radius of the convex ball carrying the u-solve
    pub ball_radius: f64,
    /// radial segments / sphere nodes of the u-volume chart
    pub volume_radial: usize,
    pub volume_sphere: usize,
    pub boundary_sphere: usize,
    /// quadrature of the corner-kernel g when cached on the u-charts
    pub corner_sphere: usize,
    /// ε at which the (nonsingular) corner limit is evaluated
    pub corner_eps: f64,
}

impl Default for SolveConfig {
    fn default() -> Self {
        SolveConfig {
            cf: CFOperatorConfig::default(),
            ball_radius: 0.25,
            volume_radial: 10,
            volume_sphere: 256,
            boundary_sphere: 512,
            corner_sphere: 256,
            corner_eps: 1e-3,
        }
    }
}

/// Local solver state: the g-cache on the ball charts is filled once per
/// input form; every evaluation point shares it.
pub struct LocalSolver {
    pub man: Arc<GraphManifold>,
    pub barrier: Arc<Barrier>,
    pub pair: PairGeometry,
    pub cfg: SolveConfig,
    ball: BallSolver,
    h: FormCoeffFn,
    r: usize,
}

impl LocalSolver {
    /// Build the solver for a ∂̄_M-closed (0,r) input with 1 ≤ r < q.
    pub fn new(
        man: Arc<GraphManifold>,
        barrier: Arc<Barrier>,
        pair: PairGeometry,
        h: FormCoeffFn,
        r: usize,
        cfg: SolveConfig,
    ) -> Result<Self, KernelError> {
        if r == 0 || r >= barrier.q {
            return Err(KernelError::Degree(r));
        }
        let center = man.lift(&pair.center_u);
        // g(y): the ∂̄-closed corner form, cached on the ball charts
        let g_closure: FormCoeffFn = {
            let man = man.clone();
            let barrier = barrier.clone();
            let pair = pair.clone();
            let h = h.clone();
            let cfg = cfg.clone();
            let mut cf = cfg.cf.clone();
            cf.sphere_nodes = cfg.corner_sphere;
            Arc::new(move |y: &[Complex64]| {
                let val = corner_g(&man, &barrier, &pair, &h, r, y, cfg.corner_eps, &cf);
                val.terms().map(|(m, c)| (m.dzbar.clone(), *c)).collect()
            })
        };
        let ball = BallSolver::new(
            center,
            cfg.ball_radius,
            &g_closure,
            cfg.cf.excl_radius,
            cfg.volume_radial,
            cfg.volume_sphere,
            cfg.cf.simplex_per_axis,
            cfg.cf.seed + 101,
        );
        Ok(LocalSolver { man, barrier, pair, cfg, ball, h, r })
    }

    /// P(h) at a patch point (graph coordinates): the transition part plus
    /// the ball solution, for r = 1 a scalar.
    pub fn solve_at(&self, z_u: &[f64]) -> Result<Complex64, KernelError> {
        let rm = apply_rm_r(
            &self.man,
            &self.barrier,
            &self.pair,
            &self.h,
            self.r,
            z_u,
            &self.cfg.cf,
        )?;
        let z = self.man.lift(z_u);
        let u = self.ball.solve_at(&z);
        Ok(rm.coeff(&FormMonomial::unit()) + u)
    }

    /// The transition part alone (diagnostics).
    pub fn transition_at(&self, z_u: &[f64]) -> Result<Complex64, KernelError> {
        let rm = apply_rm_r(
            &self.man,
            &self.barrier,
            &self.pair,
            &self.h,
            self.r,
            z_u,
            &self.cfg.cf,
        )?;
        Ok(rm.coeff(&FormMonomial::unit()))
    }

    /// The ball part alone (diagnostics).
    pub fn ball_part_at(&self, z_u: &[f64]) -> Complex64 {
        let z = self.man.lift(z_u);
        self.ball.solve_at(&z)
    }
}

/// Relative residual ‖∂̄_M P(h) − h‖/‖h‖ measured by central differences of
/// the solved potential along the graph coordinates at `points_u`.
pub fn dbar_residual_at(
    solver: &LocalSolver,
    points_u: &[Vec<f64>],
    fd_step: f64,
) -> Result<f64, KernelError> {
    let man = &solver.man;
    let n = man.n;
    let m = man.m;
    let mut num: f64 = 0.0;
    let mut den: f64 = 0.0;
    for z_u in points_u {
        // ∂(E P)/∂z̄_s via graph-coordinate differences
        let mut dbar = vec![Complex64::new(0.0, 0.0); n];
        for s in 0..n {
            let (d1, d2): (usize, Option<usize>) = if s < m {
                (s, None) // y_s axis
            } else {
                let a = s - m;
                (m + 2 * a, Some(m + 2 * a + 1))
            };
            let mut up = z_u.clone();
            let mut dn = z_u.clone();
            up[d1] += fd_step;
            dn[d1] -= fd_step;
            let dx = (solver.solve_at(&up)? - solver.solve_at(&dn)?) / (2.0 * fd_step);
            if let Some(d2) = d2 {
                let mut up = z_u.clone();
                let mut dn = z_u.clone();
                up[d2] += fd_step;
                dn[d2] -= fd_step;
                let dy = (solver.solve_at(&up)? - solver.solve_at(&dn)?) / (2.0 * fd_step);
                dbar[s] = 0.5 * dx + Complex64::new(0.0, 0.5) * dy;
            } else {
                dbar[s] = Complex64::new(0.0, 0.5) * dx;
            }
        }
        let z = man.lift(z_u);
        let h_here = (solver.h)(&z);
        for (idx, want) in &h_here {
            if idx.len() != 1 {
                continue;
            }
            let got = dbar[(idx[0] - 1) as usize];
            num = num.max((got - want).norm());
            den = den.max(want.norm());
        }
        // components of h absent from the table are zero; include the
        // computed dbar magnitude there too
        for (s, d) in dbar.iter().enumerate() {
            let present = h_here.iter().any(|(idx, _)| idx.len() == 1 && idx[0] == (s + 1) as u8);
            if !present {
                num = num.max(d.norm());
            }
        }
    }
    Ok(num / den.max(1e-300))
}
