//! Small numerical utilities: Gauss-Legendre rules, a Sobol sequence,
//! sphere sampling, least-squares fits and the ε·log ε extrapolation used
//! by the tube-limit operators.

/// Gauss-Legendre nodes and weights on [-1, 1], by Newton iteration on the
/// Legendre recurrence.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        // Chebyshev-style initial guess
        let mut t = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, t);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * t * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            // derivative via the standard identity
            dp = n as f64 * (t * p1 - p0) / (t * t - 1.0);
            let dt = p1 / dp;
            t -= dt;
            if dt.abs() < 1e-15 {
                break;
            }
        }
        x[i] = -t;
        x[n - 1 - i] = t;
        let wi = 2.0 / ((1.0 - t * t) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

/// Nodes and weights for ∫_a^b.
pub fn gauss_legendre_on(n: usize, a: f64, b: f64) -> (Vec<f64>, Vec<f64>) {
    let (x, w) = gauss_legendre(n);
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    (x.iter().map(|t| mid + half * t).collect(), w.iter().map(|v| v * half).collect())
}

/// Uniform nodes for a periodic direction (trapezoid rule, spectrally
/// accurate for smooth periodic integrands).
pub fn periodic_nodes(n: usize, period: f64) -> (Vec<f64>, f64) {
    let h = period / n as f64;
    ((0..n).map(|i| i as f64 * h).collect(), h)
}

// ---------------------------------------------------------------------------
// Sobol sequence (direction numbers from the Joe-Kuo tables, first 12 dims)

// dimension 1 uses the van der Corput sequence; entries: (s, a, m...)
const SOBOL_POLY: [(u32, u32, [u32; 8]); 11] = [
    (1, 0, [1, 0, 0, 0, 0, 0, 0, 0]),
    (2, 1, [1, 3, 0, 0, 0, 0, 0, 0]),
    (3, 1, [1, 3, 1, 0, 0, 0, 0, 0]),
    (3, 2, [1, 1, 1, 0, 0, 0, 0, 0]),
    (4, 1, [1, 1, 3, 3, 0, 0, 0, 0]),
    (4, 4, [1, 3, 5, 13, 0, 0, 0, 0]),
    (5, 2, [1, 1, 5, 5, 17, 0, 0, 0]),
    (5, 4, [1, 1, 5, 5, 5, 0, 0, 0]),
    (5, 7, [1, 1, 7, 11, 19, 0, 0, 0]),
    (5, 11, [1, 1, 5, 1, 1, 0, 0, 0]),
    (5, 13, [1, 1, 1, 3, 11, 0, 0, 0]),
];

const SOBOL_BITS: usize = 31;

/// Low-discrepancy Sobol points in [0,1)^dim, deterministic; `seed` applies a
/// digital shift so independent experiments decorrelate while staying
/// reproducible.
pub struct Sobol {
    dim: usize,
    v: Vec<[u32; SOBOL_BITS]>,
    x: Vec<u32>,
    shift: Vec<u32>,
    count: u64,
}

impl Sobol {
    pub fn new(dim: usize, seed: u64) -> Self {
        assert!(dim >= 1 && dim <= SOBOL_POLY.len() + 1, "sobol dims 1..=12 supported");
        let mut v = Vec::with_capacity(dim);
        // dimension 0: van der Corput
        let mut v0 = [0u32; SOBOL_BITS];
        for (i, slot) in v0.iter_mut().enumerate() {
            *slot = 1u32 << (SOBOL_BITS - 1 - i);
        }
        v.push(v0);
        for d in 1..dim {
            let (s, a, m) = SOBOL_POLY[d - 1];
            let s = s as usize;
            let mut vd = [0u32; SOBOL_BITS];
            for i in 0..s.min(SOBOL_BITS) {
                vd[i] = m[i] << (SOBOL_BITS - 1 - i);
            }
            for i in s..SOBOL_BITS {
                let mut val = vd[i - s] ^ (vd[i - s] >> s);
                for k in 1..s {
                    if (a >> (s - 1 - k)) & 1 == 1 {
                        val ^= vd[i - k];
                    }
                }
                vd[i] = val;
            }
            v.push(vd);
        }
        // digital shift from a splitmix of the seed
        let mut state = seed.wrapping_add(0x9E3779B97F4A7C15);
        let mut next = || {
            state = state.wrapping_add(0x9E3779B97F4A7C15);
            let mut z = state;
            z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
            z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
            (z ^ (z >> 31)) as u32 & ((1u32 << SOBOL_BITS) - 1)
        };
        let shift: Vec<u32> = (0..dim).map(|_| if seed == 0 { 0 } else { next() }).collect();
        Sobol { dim, v, x: vec![0; dim], shift, count: 0 }
    }

    pub fn next_point(&mut self) -> Vec<f64> {
        // Gray-code update
        let c = self.count.trailing_ones() as usize;
        self.count += 1;
        let c = c.min(SOBOL_BITS - 1);
        let scale = 1.0 / (1u64 << SOBOL_BITS) as f64;
        let mut out = Vec::with_capacity(self.dim);
        for d in 0..self.dim {
            self.x[d] ^= self.v[d][c];
            out.push(((self.x[d] ^ self.shift[d]) as f64 + 0.5) * scale);
        }
        out
    }
}

/// Acklam's rational approximation to the standard normal quantile.
pub fn normal_quantile(p: f64) -> f64 {
    debug_assert!(p > 0.0 && p < 1.0);
    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.383577518672690e+02,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-03,
        3.224671290700398e-01,
        2.445134137142996e+00,
        3.754408661907416e+00,
    ];
    let plow = 0.02425;
    if p < plow {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - plow {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        -normal_quantile(1.0 - p)
    }
}

/// Map a [0,1)^d Sobol point to the unit sphere S^{d-1} ⊂ ℝ^d via the
/// normal transform.
pub fn unit_sphere_point(u: &[f64]) -> Vec<f64> {
    let g: Vec<f64> = u.iter().map(|&p| normal_quantile(p.clamp(1e-12, 1.0 - 1e-12))).collect();
    let norm: f64 = g.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 {
        let mut e = vec![0.0; u.len()];
        e[0] = 1.0;
        return e;
    }
    g.iter().map(|x| x / norm).collect()
}

/// Surface measure of the unit sphere S^{d-1}.
pub fn sphere_area(d: usize) -> f64 {
    // 2 π^{d/2} / Γ(d/2)
    let half = d as f64 / 2.0;
    2.0 * std::f64::consts::PI.powf(half) / gamma(half)
}

fn gamma(x: f64) -> f64 {
    // Lanczos, g = 7
    const G: [f64; 9] = [
        0.99999999999980993,
        676.5203681218851,
        -1259.1392167224028,
        771.32342877765313,
        -176.61502916214059,
        12.507343278686905,
        -0.13857109526572012,
        9.9843695780195716e-6,
        1.5056327351493116e-7,
    ];
    if x < 0.5 {
        std::f64::consts::PI / ((std::f64::consts::PI * x).sin() * gamma(1.0 - x))
    } else {
        let x = x - 1.0;
        let mut a = G[0];
        let t = x + 7.5;
        for (i, &g) in G.iter().enumerate().skip(1) {
            a += g / (x + i as f64);
        }
        (2.0 * std::f64::consts::PI).sqrt() * t.powf(x + 0.5) * (-t).exp() * a
    }
}

/// Least squares fit y ≈ a + b·x; returns (a, b, r_squared).
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let sx: f64 = x.iter().sum();
    let sy: f64 = y.iter().sum();
    let sxx: f64 = x.iter().map(|v| v * v).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    let denom = n * sxx - sx * sx;
    let b = (n * sxy - sx * sy) / denom;
    let a = (sy - b * sx) / n;
    let mean_y = sy / n;
    let ss_tot: f64 = y.iter().map(|v| (v - mean_y).powi(2)).sum();
    let ss_res: f64 = x.iter().zip(y).map(|(xi, yi)| (yi - a - b * xi).powi(2)).sum();
    let r2 = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    (a, b, r2)
}

/// Fit y ≈ K·x through the origin; returns (K, r_squared).
pub fn proportional_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    let sxx: f64 = x.iter().map(|v| v * v).sum();
    let k = sxy / sxx;
    let mean_y = y.iter().sum::<f64>() / y.len() as f64;
    let ss_tot: f64 = y.iter().map(|v| (v - mean_y).powi(2)).sum();
    let ss_res: f64 = x.iter().zip(y).map(|(xi, yi)| (yi - k * xi).powi(2)).sum();
    let r2 = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    (k, r2)
}

/// Log-log slope of y against x (decay-rate measurements).
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.max(1e-300).ln()).collect();
    linear_fit(&lx, &ly).1
}

/// Extrapolate values v(ε) sampled on a decreasing ε ladder to ε → 0 using
/// the model v = a + b·ε·log(1/ε) + c·ε, least squares per component.
/// Returns (a, rms residual of the fit).
pub fn extrapolate_eps_log(eps: &[f64], values: &[f64]) -> (f64, f64) {
    let m = eps.len();
    assert!(m >= 3, "need at least 3 ladder rungs");
    // normal equations for the 3-parameter model
    let mut ata = [[0.0f64; 3]; 3];
    let mut atb = [0.0f64; 3];
    for i in 0..m {
        let e = eps[i];
        let row = [1.0, e * (1.0 / e).ln(), e];
        for r in 0..3 {
            for c in 0..3 {
                ata[r][c] += row[r] * row[c];
            }
            atb[r] += row[r] * values[i];
        }
    }
    // 3x3 solve by Cramer
    let det = |m: &[[f64; 3]; 3]| -> f64 {
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    };
    let d = det(&ata);
    let mut sol = [0.0f64; 3];
    for k in 0..3 {
        let mut mk = ata;
        for r in 0..3 {
            mk[r][k] = atb[r];
        }
        sol[k] = det(&mk) / d;
    }
    let mut ss = 0.0;
    for i in 0..m {
        let e = eps[i];
        let pred = sol[0] + sol[1] * e * (1.0 / e).ln() + sol[2] * e;
        ss += (values[i] - pred).powi(2);
    }
    (sol[0], (ss / m as f64).sqrt())
}
