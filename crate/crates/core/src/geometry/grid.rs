//! Uniform tensor grids over graph coordinates with second-order stencils.

use num_complex::Complex64;

/// A uniform tensor grid on a box in ℝ^dim (the 2n−m graph coordinates).
#[derive(Debug, Clone)]
pub struct PatchGrid {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub shape: Vec<usize>,
    pub step: Vec<f64>,
}

impl PatchGrid {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>, shape: Vec<usize>) -> Self {
        assert_eq!(lo.len(), hi.len());
        assert_eq!(lo.len(), shape.len());
        let step = lo
            .iter()
            .zip(&hi)
            .zip(&shape)
            .map(|((a, b), &s)| if s > 1 { (b - a) / (s - 1) as f64 } else { 0.0 })
            .collect();
        PatchGrid { lo, hi, shape, step }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn coords(&self, flat: usize) -> Vec<f64> {
        let mut idx = flat;
        let mut u = vec![0.0; self.dim()];
        for d in (0..self.dim()).rev() {
            let i = idx % self.shape[d];
            idx /= self.shape[d];
            u[d] = self.lo[d] + i as f64 * self.step[d];
        }
        u
    }

    pub fn multi_index(&self, flat: usize) -> Vec<usize> {
        let mut idx = flat;
        let mut mi = vec![0usize; self.dim()];
        for d in (0..self.dim()).rev() {
            mi[d] = idx % self.shape[d];
            idx /= self.shape[d];
        }
        mi
    }

    pub fn flat_index(&self, mi: &[usize]) -> usize {
        let mut f = 0usize;
        for d in 0..self.dim() {
            f = f * self.shape[d] + mi[d];
        }
        f
    }

    pub fn nodes(&self) -> impl Iterator<Item = (usize, Vec<f64>)> + '_ {
        (0..self.len()).map(move |i| (i, self.coords(i)))
    }
}

/// Complex scalar samples over a grid.
#[derive(Debug, Clone)]
pub struct GridScalar {
    pub values: Vec<Complex64>,
}

impl GridScalar {
    pub fn zeros(grid: &PatchGrid) -> Self {
        GridScalar { values: vec![Complex64::new(0.0, 0.0); grid.len()] }
    }

    pub fn from_fn<F: Fn(&[f64]) -> Complex64>(grid: &PatchGrid, f: F) -> Self {
        GridScalar { values: (0..grid.len()).map(|i| f(&grid.coords(i))).collect() }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|c| c.norm()).fold(0.0, f64::max)
    }

    /// ∂/∂u_d by second-order differences: central inside, one-sided at the
    /// box faces.
    pub fn partial(&self, grid: &PatchGrid, d: usize) -> GridScalar {
        let mut out = GridScalar::zeros(grid);
        let h = grid.step[d];
        assert!(h > 0.0, "grid axis {d} has a single node; cannot differentiate");
        let nd = grid.shape[d];
        for flat in 0..grid.len() {
            let mi = grid.multi_index(flat);
            let at = |i: usize| -> Complex64 {
                let mut m2 = mi.clone();
                m2[d] = i;
                self.values[grid.flat_index(&m2)]
            };
            let i = mi[d];
            let v = if i > 0 && i + 1 < nd {
                (at(i + 1) - at(i - 1)) / (2.0 * h)
            } else if i == 0 {
                (-3.0 * at(0) + 4.0 * at(1) - at(2)) / (2.0 * h)
            } else {
                (3.0 * at(nd - 1) - 4.0 * at(nd - 2) + at(nd - 3)) / (2.0 * h)
            };
            out.values[flat] = v;
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_is_second_order() {
        let f = |u: &[f64]| Complex64::new((2.0 * u[0]).sin() * u[1], u[0] * u[0]);
        let exact = |u: &[f64]| Complex64::new(2.0 * (2.0 * u[0]).cos() * u[1], 2.0 * u[0]);
        let err = |nn: usize| -> f64 {
            let g = PatchGrid::new(vec![-1.0, -1.0], vec![1.0, 1.0], vec![nn, 5]);
            let s = GridScalar::from_fn(&g, f);
            let d = s.partial(&g, 0);
            let mut e: f64 = 0.0;
            for (i, u) in g.nodes() {
                e = e.max((d.values[i] - exact(&u)).norm());
            }
            e
        };
        let e1 = err(21);
        let e2 = err(41);
        assert!(e1 / e2 > 3.0, "expected ~4x, got {}", e1 / e2);
    }
}

impl GridScalar {
    /// Multilinear interpolation at an arbitrary point of the box (clamped).
    pub fn interp(&self, grid: &PatchGrid, u: &[f64]) -> Complex64 {
        let dim = grid.dim();
        let mut base = vec![0usize; dim];
        let mut frac = vec![0.0f64; dim];
        for d in 0..dim {
            if grid.shape[d] == 1 {
                base[d] = 0;
                frac[d] = 0.0;
                continue;
            }
            let t = ((u[d] - grid.lo[d]) / grid.step[d]).clamp(0.0, (grid.shape[d] - 1) as f64);
            let i = (t.floor() as usize).min(grid.shape[d] - 2);
            base[d] = i;
            frac[d] = t - i as f64;
        }
        let corners = 1usize << dim;
        let mut acc = Complex64::new(0.0, 0.0);
        for c in 0..corners {
            let mut w = 1.0;
            let mut mi = base.clone();
            for d in 0..dim {
                if (c >> d) & 1 == 1 && grid.shape[d] > 1 {
                    mi[d] += 1;
                    w *= frac[d];
                } else {
                    w *= 1.0 - frac[d];
                }
            }
            if w != 0.0 {
                acc += w * self.values[grid.flat_index(&mi)];
            }
        }
        acc
    }
}
