//! Cauchy-Fantappie determinant kernels `ω′_r(η)` and the differential
//! identity they satisfy.
//!
//! `ω′_r(η) = 1/((n−r−1)! r!) · Det[η, (∂̄_z η)^r, (∂̄_{ζ,t} η)^{n−r−1}]`
//! where the determinant is expanded with exterior products of its entries
//! and the position of an entry in the product is given by its column.

use num_complex::Complex64;

use super::jet::{JetField, JetPoint};
use super::{FormError, PointForm, VarClass};

/// `Σ_k η_k (ζ_k − z_k)` — must equal 1 for a Cauchy-Fantappie kernel.
pub fn scalar_pairing(eta: &[Complex64], zeta: &[Complex64], z: &[Complex64]) -> Complex64 {
    eta.iter().zip(zeta.iter().zip(z.iter())).map(|(e, (a, b))| e * (a - b)).sum()
}

/// Verifies the normalisation `<η, ζ−z> = 1` to `tol`.
pub fn check_kernel_condition(
    eta: &JetField,
    zeta: &[Complex64],
    z: &[Complex64],
    t: &[f64],
    tol: f64,
) -> Result<(), FormError> {
    let v = eta.value(zeta, z, t);
    let res = (scalar_pairing(&v, zeta, z) - Complex64::new(1.0, 0.0)).norm();
    if res > tol {
        return Err(FormError::KernelCondition(res));
    }
    Ok(())
}

fn permutation_sign(seq: &[usize]) -> f64 {
    let mut inv = 0usize;
    for i in 0..seq.len() {
        for j in (i + 1)..seq.len() {
            if seq[i] > seq[j] {
                inv += 1;
            }
        }
    }
    if inv % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

fn subsets(pool: &[usize], size: usize) -> Vec<Vec<usize>> {
    if size == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for (i, &x) in pool.iter().enumerate() {
        if pool.len() - i < size {
            break;
        }
        for mut tail in subsets(&pool[i + 1..], size - 1) {
            let mut v = vec![x];
            v.append(&mut tail);
            out.push(v);
        }
    }
    out
}

/// Row `i` of the `∂̄_z η` column as a 1-form.
fn row_zbar(jet: &JetPoint, i: usize, n: usize, l: usize) -> PointForm {
    let mut f = PointForm::zero(n, l);
    for j in 0..n {
        let c = jet.d_zbar[i][j];
        if c.norm_sqr() != 0.0 {
            f.add_assign(&PointForm::basis(n, l, VarClass::DZBar, (j + 1) as u8).scale(c));
        }
    }
    f
}

/// Row `i` of the `∂̄_{ζ,t} η` column as a 1-form.
fn row_zetabar_t(jet: &JetPoint, i: usize, n: usize, l: usize) -> PointForm {
    let mut f = PointForm::zero(n, l);
    for j in 0..n {
        let c = jet.d_zetabar[i][j];
        if c.norm_sqr() != 0.0 {
            f.add_assign(&PointForm::basis(n, l, VarClass::DZetaBar, (j + 1) as u8).scale(c));
        }
    }
    for a in 0..l {
        let c = jet.d_t[i][a];
        if c.norm_sqr() != 0.0 {
            f.add_assign(&PointForm::basis(n, l, VarClass::Dt, (a + 1) as u8).scale(c));
        }
    }
    f
}

/// `ω′_r(η)` from an evaluated jet.
///
/// The determinant collapses to a sum over the row feeding the η column
/// and the ordered row subset feeding the `∂̄_z η` block; the factorials
/// cancel against the orderings within each block of identical columns.
/// Every stored monomial has exactly `r` factors in `dz̄` and `n−r−1`
/// factors in `dζ̄ ∪ dt`.
pub fn omega_prime_r_from_jet(jet: &JetPoint, r: usize, n: usize, l: usize) -> Result<PointForm, FormError> {
    if n == 0 || r + 1 > n {
        return Err(FormError::DegreeOutOfRange { r, n });
    }
    let b_rows: Vec<PointForm> = (0..n).map(|i| row_zbar(jet, i, n, l)).collect();
    let c_rows: Vec<PointForm> = (0..n).map(|i| row_zetabar_t(jet, i, n, l)).collect();

    let mut acc = PointForm::zero(n, l);
    for k in 0..n {
        if jet.value[k].norm_sqr() == 0.0 {
            continue;
        }
        let rest: Vec<usize> = (0..n).filter(|&i| i != k).collect();
        for s_set in subsets(&rest, r) {
            let t_set: Vec<usize> = rest.iter().copied().filter(|i| !s_set.contains(i)).collect();
            let mut seq = vec![k];
            seq.extend(&s_set);
            seq.extend(&t_set);
            let sign = permutation_sign(&seq);

            let mut term = PointForm::scalar(n, l, jet.value[k] * sign);
            for &s in &s_set {
                term = term.wedge(&b_rows[s])?;
                if term.is_zero() {
                    break;
                }
            }
            if !term.is_zero() {
                for &ti in &t_set {
                    term = term.wedge(&c_rows[ti])?;
                    if term.is_zero() {
                        break;
                    }
                }
            }
            acc.add_assign(&term);
        }
    }
    Ok(acc)
}

/// `ω′_r(η)` evaluated at `(ζ, z, t)`.
pub fn omega_prime_r(
    eta: &JetField,
    r: usize,
    zeta: &[Complex64],
    z: &[Complex64],
    t: &[f64],
) -> Result<PointForm, FormError> {
    let jet = eta.jet(zeta, z, t);
    omega_prime_r_from_jet(&jet, r, eta.n, eta.l)
}

fn fd_form_derivative<F>(eval: F, h: f64) -> PointForm
where
    F: Fn(f64) -> PointForm,
{
    let plus = eval(h);
    let minus = eval(-h);
    plus.sub(&minus).scale(Complex64::new(1.0 / (2.0 * h), 0.0))
}

/// Finite-difference residual of the identity
/// `d_t ω′_r + ∂̄_ζ ω′_r + ∂̄_z ω′_{r−1} = 0`
/// for a kernel satisfying `<η, ζ−z> = 1`; `ω′_{−1} = 0` for `r = 0`.
///
/// Returns the max coefficient magnitude of the left-hand side; contract:
/// `O(h²)` decay under `h`-refinement for smooth kernels.
pub fn cf_identity_residual(
    eta: &JetField,
    r: usize,
    zeta: &[Complex64],
    z: &[Complex64],
    t: &[f64],
    h: f64,
) -> Result<f64, FormError> {
    check_kernel_condition(eta, zeta, z, t, 1e-8)?;
    let n = eta.n;
    let l = eta.l;
    if r + 1 > n {
        return Err(FormError::DegreeOutOfRange { r, n });
    }

    let form_r = |zeta_s: &[Complex64], z_s: &[Complex64], t_s: &[f64], deg: usize| -> PointForm {
        omega_prime_r(eta, deg, zeta_s, z_s, t_s).expect("degree checked above")
    };

    let mut total = PointForm::zero(n, l);

    // d_t part on ω′_r
    for a in 0..l {
        let dta = fd_form_derivative(
            |s| {
                let mut tt = t.to_vec();
                tt[a] += s;
                form_r(zeta, z, &tt, r)
            },
            h,
        );
        let dt_basis = PointForm::basis(n, l, VarClass::Dt, (a + 1) as u8);
        total.add_assign(&dt_basis.wedge(&dta)?);
    }

    // ∂̄_ζ part on ω′_r: ∂/∂ζ̄_i = ½(∂/∂x_i + i ∂/∂y_i)
    for i in 0..n {
        let dx = fd_form_derivative(
            |s| {
                let mut zz = zeta.to_vec();
                zz[i] += s;
                form_r(&zz, z, t, r)
            },
            h,
        );
        let dy = fd_form_derivative(
            |s| {
                let mut zz = zeta.to_vec();
                zz[i] += Complex64::new(0.0, s);
                form_r(&zz, z, t, r)
            },
            h,
        );
        let dbar = dx.scale(Complex64::new(0.5, 0.0)).add(&dy.scale(Complex64::new(0.0, 0.5)));
        let basis = PointForm::basis(n, l, VarClass::DZetaBar, (i + 1) as u8);
        total.add_assign(&basis.wedge(&dbar)?);
    }

    // ∂̄_z part on ω′_{r−1}
    if r >= 1 {
        for i in 0..n {
            let dx = fd_form_derivative(
                |s| {
                    let mut zz = z.to_vec();
                    zz[i] += s;
                    form_r(zeta, &zz, t, r - 1)
                },
                h,
            );
            let dy = fd_form_derivative(
                |s| {
                    let mut zz = z.to_vec();
                    zz[i] += Complex64::new(0.0, s);
                    form_r(zeta, &zz, t, r - 1)
                },
                h,
            );
            let dbar = dx.scale(Complex64::new(0.5, 0.0)).add(&dy.scale(Complex64::new(0.0, 0.5)));
            let basis = PointForm::basis(n, l, VarClass::DZBar, (i + 1) as u8);
            total.add_assign(&basis.wedge(&dbar)?);
        }
    }

    Ok(total.max_coeff())
}
