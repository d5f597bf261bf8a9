//! Numeric instantiation of the section space on a graph patch: values are
//! coframe coefficient tables on the patch grid, ∂̄ is the tangential
//! Cauchy-Riemann operator, and the solve/extend hooks are wired to the
//! tube-limit integral operators through grid interpolation.
//!
//! The mock backend carries the exactly-verifiable tests; this backend
//! exposes the same interface on real geometry. Full diagram searches on it
//! are quadrature-heavy and are exercised through the ignored smoke test
//! and the experiment driver rather than the default suite.

use std::sync::Arc;

use num_complex::Complex64;

use super::SectionSpace;
use crate::geometry::grid::GridScalar;
use crate::geometry::{tangential_cr, DefiningSet, FrameForm, GraphManifold};

#[derive(Clone)]
pub struct PatchValue {
    pub degree: usize,
    pub form: FrameForm,
}

type SolveHook = dyn Fn(&FrameForm, usize) -> FrameForm + Send + Sync;
type ExtendHook = dyn Fn(&FrameForm) -> FrameForm + Send + Sync;

pub struct PatchSpace {
    pub man: Arc<GraphManifold>,
    pub rho: Arc<DefiningSet>,
    /// local-solver hook (the tube-limit solver adapted to grid tables)
    pub solve_hook: Arc<SolveHook>,
    /// P⁰ hook (CR extension re-sampled on the grid)
    pub extend_hook: Arc<ExtendHook>,
    /// partition-of-unity weights per cover set, sampled on the grid
    pub partitions: Vec<GridScalar>,
}

impl PatchSpace {
    /// Identity-hook space: ∂̄ and the cochain calculus are live, the solve
    /// hooks must be injected for the diagram searches.
    pub fn with_hooks(
        man: Arc<GraphManifold>,
        rho: Arc<DefiningSet>,
        n_sets: usize,
        solve_hook: Arc<SolveHook>,
        extend_hook: Arc<ExtendHook>,
    ) -> Self {
        // default: uniform constant partition (callers may replace with
        // genuine bump functions)
        let len = man.grid.len();
        let partitions = (0..n_sets)
            .map(|_| GridScalar {
                values: vec![Complex64::new(1.0 / n_sets as f64, 0.0); len],
            })
            .collect();
        PatchSpace { man, rho, solve_hook, extend_hook, partitions }
    }

    /// Interpolating coefficient closure for a grid table (the adapter the
    /// integral operators consume).
    pub fn table_closure(
        man: Arc<GraphManifold>,
        form: FrameForm,
    ) -> impl Fn(&[Complex64]) -> Vec<(Vec<u8>, Complex64)> {
        move |zeta: &[Complex64]| {
            let u = man.base_coords(zeta);
            form.comps
                .iter()
                .map(|(key, tab)| {
                    let idx: Vec<u8> = key.iter().map(|&k| k + 1).collect();
                    (idx, tab.interp(&man.grid, &u))
                })
                .collect()
        }
    }
}

impl SectionSpace for PatchSpace {
    type Value = PatchValue;

    fn zero(&self, form_degree: usize) -> PatchValue {
        PatchValue { degree: form_degree, form: FrameForm::zero(form_degree) }
    }

    fn add_scaled(&self, a: &PatchValue, b: &PatchValue, c: Complex64) -> PatchValue {
        let mut out = a.form.clone();
        out.add_scaled(&self.man.grid, &b.form, c);
        PatchValue { degree: a.degree, form: out }
    }

    fn scale(&self, a: &PatchValue, c: Complex64) -> PatchValue {
        let mut out = FrameForm::zero(a.degree);
        out.add_scaled(&self.man.grid, &a.form, c);
        PatchValue { degree: a.degree, form: out }
    }

    fn dbar(&self, a: &PatchValue) -> PatchValue {
        let d = tangential_cr(&self.man, &self.rho, &a.form).expect("patch grid stencils");
        PatchValue { degree: a.degree + 1, form: d }
    }

    fn local_solve(&self, a: &PatchValue, form_degree: usize) -> PatchValue {
        PatchValue { degree: a.degree - 1, form: (self.solve_hook)(&a.form, form_degree) }
    }

    fn extend(&self, a: &PatchValue) -> PatchValue {
        PatchValue { degree: a.degree, form: (self.extend_hook)(&a.form) }
    }

    fn restrict(&self, a: &PatchValue, _from: usize, _to: usize) -> PatchValue {
        a.clone()
    }

    fn partition(&self, set: usize, a: &PatchValue) -> PatchValue {
        let w = &self.partitions[set];
        let mut out = FrameForm::zero(a.degree);
        for (key, tab) in &a.form.comps {
            let mut scaled = tab.clone();
            for (v, ww) in scaled.values.iter_mut().zip(&w.values) {
                *v *= ww;
            }
            out.comps.insert(key.clone(), scaled);
        }
        PatchValue { degree: a.degree, form: out }
    }

    fn norm(&self, a: &PatchValue) -> f64 {
        a.form.max_abs()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cech::{chi, dbar_cochain, rho as rho_op, Cochain, Cover};

    fn flat_space() -> PatchSpace {
        let man = Arc::new(GraphManifold::hyperplane(2, 1, 0.4, 5));
        let rho = Arc::new(man.rho.clone());
        PatchSpace::with_hooks(
            man,
            rho,
            3,
            Arc::new(|f: &FrameForm, _| f.clone()),
            Arc::new(|f: &FrameForm| f.clone()),
        )
    }

    #[test]
    fn patch_cochain_calculus_runs() {
        let space = flat_space();
        let cover = Cover::uniform(3, 6);
        let man = space.man.clone();
        let mk = |phase: f64| {
            let g = GridScalar::from_fn(&man.grid, |u| {
                Complex64::new((u[1] + phase).sin(), u[2] * phase)
            });
            PatchValue { degree: 0, form: FrameForm::function(g) }
        };
        let mut c = Cochain::new(0, 0);
        for i in 0..3u8 {
            c.insert(vec![i], mk(i as f64));
        }
        // ϱ² = 0 on the numeric backend too
        let rr = rho_op(&space, &cover, &rho_op(&space, &cover, &c));
        for v in rr.entries.values() {
            assert!(space.norm(v) < 1e-12);
        }
        // double complex commutes: ∂̄ϱ = ϱ∂̄
        let a = dbar_cochain(&space, &rho_op(&space, &cover, &c));
        let b = rho_op(&space, &cover, &dbar_cochain(&space, &c));
        for (idx, v) in &a.entries {
            let diff = space.add_scaled(v, &b.entries[idx], Complex64::new(-1.0, 0.0));
            assert!(space.norm(&diff) < 1e-12);
        }
        // χ splits closed 1-cochains with constant partition weights
        let alpha = rho_op(&space, &cover, &c);
        let split = chi(&space, &cover, &alpha);
        let back = rho_op(&space, &cover, &split);
        for (idx, v) in &alpha.entries {
            let diff = space.add_scaled(&back.entries[idx], v, Complex64::new(-1.0, 0.0));
            assert!(space.norm(&diff) < 1e-12);
        }
    }

    #[test]
    fn interpolating_closure_matches_grid() {
        let space = flat_space();
        let man = space.man.clone();
        let g = GridScalar::from_fn(&man.grid, |u| Complex64::new(u[1], -u[2]));
        let form = FrameForm::function(g);
        let closure = PatchSpace::table_closure(man.clone(), form);
        let z = man.lift(&vec![0.1, 0.05, -0.2]);
        let coeffs = closure(&z);
        assert_eq!(coeffs.len(), 1);
        // linear data: multilinear interpolation is exact
        assert!((coeffs[0].1 - Complex64::new(0.05, 0.2)).norm() < 1e-12);
    }
}
