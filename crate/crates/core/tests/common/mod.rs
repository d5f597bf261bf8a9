//! Shared test oracles, independent of the library's form plumbing.
//!
//! The determinant oracle below expands `Det[η, (∂̄_z η)^r, (∂̄_{ζ,t} η)^{n−r−1}]`
//! literally over all n! permutations with the `1/(r!(n−r−1)!)` prefactor and
//! its own monomial/sign bookkeeping; it never calls the library wedge.

#![allow(dead_code)]

use std::collections::HashMap;

use num_complex::Complex64;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crlab::form::{JetField, JetPoint, PointForm};

/// Oracle-side factor: (class, index), class codes 2 = dζ̄, 3 = dz̄, 4 = dt.
pub type OFactor = (u8, u8);

/// Sort a factor list into ascending order, returning parity; None when a
/// factor repeats.
pub fn sort_factors(mut fs: Vec<OFactor>) -> Option<(Vec<OFactor>, f64)> {
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
    Some((fs, if swaps % 2 == 0 { 1.0 } else { -1.0 }))
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 1 {
        return vec![vec![0]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for pos in 0..n {
            let mut q: Vec<usize> = p.iter().map(|&x| if x >= pos { x + 1 } else { x }).collect();
            q.insert(0, pos);
            // rotate so the inserted element corresponds to index 0 of the new symbol set
            out.push(q);
        }
    }
    out
}

fn perm_sign(p: &[usize]) -> f64 {
    let mut inv = 0;
    for i in 0..p.len() {
        for j in (i + 1)..p.len() {
            if p[i] > p[j] {
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

/// Options of a 1-form column entry: list of (factor, coefficient).
fn entry_options(jet: &JetPoint, row: usize, kind: u8, n: usize, l: usize) -> Vec<(OFactor, Complex64)> {
    let mut out = Vec::new();
    match kind {
        3 => {
            for j in 0..n {
                out.push(((3u8, (j + 1) as u8), jet.d_zbar[row][j]));
            }
        }
        2 => {
            for j in 0..n {
                out.push(((2u8, (j + 1) as u8), jet.d_zetabar[row][j]));
            }
            for a in 0..l {
                out.push(((4u8, (a + 1) as u8), jet.d_t[row][a]));
            }
        }
        _ => unreachable!(),
    }
    out
}

/// Literal permutation expansion of the `ω′_r` determinant with prefactor.
pub fn oracle_omega_prime_r(
    jet: &JetPoint,
    r: usize,
    n: usize,
    l: usize,
) -> HashMap<Vec<OFactor>, Complex64> {
    let mut acc: HashMap<Vec<OFactor>, Complex64> = HashMap::new();
    let fact = |m: usize| -> f64 { (1..=m).product::<usize>().max(1) as f64 };
    let prefactor = 1.0 / (fact(r) * fact(n - r - 1));

    // column kinds: col 0 -> eta, cols 1..=r -> dbar_z, cols r+1..n-1 -> dbar_{zeta,t}
    for p in permutations(n) {
        let sgn = perm_sign(&p);
        // rows assigned per column: row p[c] feeds column c
        let eta_coeff = jet.value[p[0]];
        if eta_coeff.norm_sqr() == 0.0 {
            continue;
        }
        // expand multi-choices for the 1-form columns, in column order
        let mut partials: Vec<(Vec<OFactor>, Complex64)> = vec![(Vec::new(), eta_coeff * sgn * prefactor)];
        for c in 1..n {
            let kind = if c <= r { 3u8 } else { 2u8 };
            let opts = entry_options(jet, p[c], kind, n, l);
            let mut next = Vec::with_capacity(partials.len() * opts.len());
            for (fs, coeff) in &partials {
                for (f, oc) in &opts {
                    if oc.norm_sqr() == 0.0 {
                        continue;
                    }
                    let mut fs2 = fs.clone();
                    fs2.push(*f);
                    next.push((fs2, coeff * oc));
                }
            }
            partials = next;
        }
        for (fs, coeff) in partials {
            if let Some((sorted, sign)) = sort_factors(fs) {
                *acc.entry(sorted).or_insert_with(|| Complex64::new(0.0, 0.0)) += coeff * sign;
            }
        }
    }
    acc.retain(|_, c| c.norm() > 0.0);
    acc
}

/// The other algebraic route: `ω′(η) = Σ_k (−1)^{k−1} η_k ∧_{j≠k} d̄η_j`
/// with `d̄ = ∂̄_ζ + ∂̄_z + d_t`, expanded with oracle-side bookkeeping.
pub fn oracle_omega_prime_full(jet: &JetPoint, n: usize, l: usize) -> HashMap<Vec<OFactor>, Complex64> {
    let mut acc: HashMap<Vec<OFactor>, Complex64> = HashMap::new();
    for k in 0..n {
        let sgn = if k % 2 == 0 { 1.0 } else { -1.0 }; // (−1)^{k−1} with 1-based k
        let coeff0 = jet.value[k] * sgn;
        if coeff0.norm_sqr() == 0.0 {
            continue;
        }
        let mut partials: Vec<(Vec<OFactor>, Complex64)> = vec![(Vec::new(), coeff0)];
        for j in 0..n {
            if j == k {
                continue;
            }
            // full antiholomorphic differential of η_j
            let mut opts: Vec<(OFactor, Complex64)> = Vec::new();
            for i in 0..n {
                opts.push(((2u8, (i + 1) as u8), jet.d_zetabar[j][i]));
                opts.push(((3u8, (i + 1) as u8), jet.d_zbar[j][i]));
            }
            for a in 0..l {
                opts.push(((4u8, (a + 1) as u8), jet.d_t[j][a]));
            }
            let mut next = Vec::new();
            for (fs, coeff) in &partials {
                for (f, oc) in &opts {
                    if oc.norm_sqr() == 0.0 {
                        continue;
                    }
                    let mut fs2 = fs.clone();
                    fs2.push(*f);
                    next.push((fs2, coeff * oc));
                }
            }
            partials = next;
        }
        for (fs, coeff) in partials {
            if let Some((sorted, sign)) = sort_factors(fs) {
                *acc.entry(sorted).or_insert_with(|| Complex64::new(0.0, 0.0)) += coeff * sign;
            }
        }
    }
    acc.retain(|_, c| c.norm() > 0.0);
    acc
}

/// Convert a library `PointForm` into the oracle's map representation.
pub fn pointform_to_map(f: &PointForm) -> HashMap<Vec<OFactor>, Complex64> {
    let mut out = HashMap::new();
    for (m, c) in f.terms() {
        let mut fs: Vec<OFactor> = Vec::new();
        for &i in &m.dzetabar {
            fs.push((2, i));
        }
        for &i in &m.dzbar {
            fs.push((3, i));
        }
        for &i in &m.dt {
            fs.push((4, i));
        }
        assert!(m.dzeta.is_empty() && m.dz.is_empty(), "kernel forms carry no holomorphic factors");
        fs.sort();
        out.insert(fs, *c);
    }
    out
}

pub fn map_distance(a: &HashMap<Vec<OFactor>, Complex64>, b: &HashMap<Vec<OFactor>, Complex64>) -> f64 {
    let mut keys: Vec<&Vec<OFactor>> = a.keys().chain(b.keys()).collect();
    keys.sort();
    keys.dedup();
    let mut d: f64 = 0.0;
    for k in keys {
        let ca = a.get(k).copied().unwrap_or_else(|| Complex64::new(0.0, 0.0));
        let cb = b.get(k).copied().unwrap_or_else(|| Complex64::new(0.0, 0.0));
        d = d.max((ca - cb).norm());
    }
    d
}

pub fn map_max(a: &HashMap<Vec<OFactor>, Complex64>) -> f64 {
    a.values().map(|c| c.norm()).fold(0.0, f64::max)
}

/// A smooth random vector field normalised so `<η, ζ−z> = 1`.
/// Coefficients are seeded; the field is polynomial plus a Gaussian bump so
/// all derivative blocks are exercised.
pub fn random_cf_kernel(n: usize, l: usize, seed: u64) -> JetField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cc = || Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
    let base: Vec<Complex64> = (0..n).map(|_| cc() + 2.0).collect();
    let lin_zeta: Vec<Vec<Complex64>> = (0..n).map(|_| (0..n).map(|_| cc() * 0.2).collect()).collect();
    let lin_zetabar: Vec<Vec<Complex64>> = (0..n).map(|_| (0..n).map(|_| cc() * 0.2).collect()).collect();
    let lin_zbar: Vec<Vec<Complex64>> = (0..n).map(|_| (0..n).map(|_| cc() * 0.2).collect()).collect();
    let lin_t: Vec<Vec<Complex64>> = (0..n).map(|_| (0..l).map(|_| cc() * 0.2).collect()).collect();

    JetField::new(n, l, move |zeta: &[Complex64], z: &[Complex64], t: &[f64]| {
        let lambda: Vec<Complex64> = (0..n)
            .map(|k| {
                let mut v = base[k];
                for i in 0..n {
                    v += lin_zeta[k][i] * zeta[i]
                        + lin_zetabar[k][i] * zeta[i].conj()
                        + lin_zbar[k][i] * z[i].conj();
                }
                for (a, ta) in t.iter().enumerate() {
                    v += lin_t[k][a] * *ta;
                }
                v
            })
            .collect();
        let pairing: Complex64 =
            lambda.iter().zip(zeta.iter().zip(z.iter())).map(|(e, (a, b))| e * (a - b)).sum();
        lambda.iter().map(|v| v / pairing).collect()
    })
    .with_fd_step(1e-5)
}

/// Random well-separated (ζ, z) pair in a ball.
pub fn random_pair(n: usize, rng: &mut ChaCha8Rng) -> (Vec<Complex64>, Vec<Complex64>) {
    loop {
        let zeta: Vec<Complex64> =
            (0..n).map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
        let z: Vec<Complex64> =
            (0..n).map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
        let d2: f64 = zeta.iter().zip(&z).map(|(a, b)| (a - b).norm_sqr()).sum();
        if d2 > 0.25 {
            return (zeta, z);
        }
    }
}
