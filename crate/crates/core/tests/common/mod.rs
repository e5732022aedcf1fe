//! Test-only reference implementations, independent of the library paths
//! they check.
#![allow(dead_code)]

use histloss::toy::{Configuration, LjParams};

/// Adaptive Simpson integration to absolute tolerance `tol`.
pub fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson(fa: f64, fm: f64, fb: f64, a: f64, b: f64) -> f64 {
        (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    }
    #[allow(clippy::too_many_arguments)]
    fn recurse(
        f: &dyn Fn(f64) -> f64,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = simpson(fa, flm, fm, a, m);
        let right = simpson(fm, frm, fb, m, b);
        let delta = left + right - whole;
        // below round-off the estimate cannot improve; stop refining
        let tol = tol.max(4.0 * f64::EPSILON * (left.abs() + right.abs()));
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        recurse(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
            + recurse(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
    }
    let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
    recurse(f, a, b, fa, fm, fb, simpson(fa, fm, fb, a, b), tol, 30)
}

pub fn gaussian_pdf(t: f64, mean: f64, sigma: f64) -> f64 {
    let z = (t - mean) / sigma;
    (-0.5 * z * z).exp() / (sigma * (2.0 * std::f64::consts::PI).sqrt())
}

/// Per-bin quadrature of the Gaussian density, renormalized over the grid.
pub fn quadrature_histogram(e: f64, sigma: f64, lo: f64, hi: f64, k: usize) -> Vec<f64> {
    let w = (hi - lo) / k as f64;
    let f = |t: f64| gaussian_pdf(t, e, sigma);
    let raw: Vec<f64> = (0..k)
        .map(|i| {
            let a = lo + i as f64 * w;
            adaptive_simpson(&f, a, a + w, 1e-14)
        })
        .collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|p| p / total).collect()
}

/// Pairwise LJ energy written out directly from the formula.
pub fn direct_lj_energy(c: &Configuration, p: &LjParams) -> f64 {
    let mut e = 0.0;
    for i in 0..c.positions.len() {
        for j in 0..i {
            let (a, b) = (p.species[c.species[i]], p.species[c.species[j]]);
            let eps = (a.epsilon * b.epsilon).sqrt();
            let sig = (a.sigma + b.sigma) / 2.0;
            let d: f64 = (0..3)
                .map(|k| (c.positions[i][k] - c.positions[j][k]).powi(2))
                .sum::<f64>()
                .sqrt();
            e += 4.0 * eps * ((sig / d).powi(12) - (sig / d).powi(6));
        }
    }
    e
}

/// Rotation matrix from a normalized random quaternion.
pub fn rotation(q: [f64; 4]) -> [[f64; 3]; 3] {
    let n = q.iter().map(|v| v * v).sum::<f64>().sqrt();
    let [w, x, y, z] = [q[0] / n, q[1] / n, q[2] / n, q[3] / n];
    [
        [
            1.0 - 2.0 * (y * y + z * z),
            2.0 * (x * y - w * z),
            2.0 * (x * z + w * y),
        ],
        [
            2.0 * (x * y + w * z),
            1.0 - 2.0 * (x * x + z * z),
            2.0 * (y * z - w * x),
        ],
        [
            2.0 * (x * z - w * y),
            2.0 * (y * z + w * x),
            1.0 - 2.0 * (x * x + y * y),
        ],
    ]
}

pub fn rigid_motion(c: &Configuration, r: &[[f64; 3]; 3], t: [f64; 3]) -> Configuration {
    Configuration {
        positions: c
            .positions
            .iter()
            .map(|p| {
                let mut out = [0.0; 3];
                for (i, o) in out.iter_mut().enumerate() {
                    *o = (0..3).map(|j| r[i][j] * p[j]).sum::<f64>() + t[i];
                }
                out
            })
            .collect(),
        species: c.species.clone(),
    }
}

/// Relative error with an absolute floor.
pub fn rel_err(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

/// `|a - b| / max(|a|, |b|)` in the Euclidean norm.
pub fn rel_err_vec(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if diff == 0.0 {
        0.0
    } else {
        diff / na.max(nb)
    }
}
