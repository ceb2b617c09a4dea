//! Univariate root finding: Aberth simultaneous iteration with a
//! companion-matrix fallback.

use nalgebra::DMatrix;

use super::scalar::C64;
use crate::error::{Error, Result};

/// A distinct root with its multiplicity.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Root {
    pub z: C64,
    pub multiplicity: usize,
}

const MAX_ITER: usize = 600;

/// Value, derivative ratio `p/p'` and relative residual `|p| / Σ|aᵢ||z|ⁱ`.
///
/// For `|z| > 1` the reversed polynomial is used so large roots do not
/// overflow.
pub fn newton_ratio(a: &[C64], z: C64) -> (C64, f64) {
    let n = a.len() - 1;
    if z.norm() <= 1.0 {
        let mut p = a[n];
        let mut dp = C64::new(0.0, 0.0);
        let r = z.norm();
        let mut s = a[n].norm();
        for k in (0..n).rev() {
            dp = dp * z + p;
            p = p * z + a[k];
            s = s * r + a[k].norm();
        }
        (safe_div(p, dp, z), if s > 0.0 { p.norm() / s } else { 0.0 })
    } else {
        let y = z.inv();
        let r = y.norm();
        // q(y) = Σ a_i y^(n-i)
        let mut q = a[0];
        let mut dq = C64::new(0.0, 0.0);
        let mut s = a[0].norm();
        for k in 1..=n {
            dq = dq * y + q;
            q = q * y + a[k];
            s = s * r + a[k].norm();
        }
        let den = q * n as f64 - y * dq;
        (safe_div(z * q, den, z), if s > 0.0 { q.norm() / s } else { 0.0 })
    }
}

fn safe_div(p: C64, dp: C64, z: C64) -> C64 {
    if dp.norm() == 0.0 {
        if p.norm() == 0.0 {
            C64::new(0.0, 0.0)
        } else {
            // stationary point: nudge off it
            C64::new(1e-7, 1e-7) * (1.0 + z.norm())
        }
    } else {
        p / dp
    }
}

/// Relative residual of `p` at `z`.
pub fn rel_residual(a: &[C64], z: C64) -> f64 {
    newton_ratio(a, z).1
}

/// Initial approximations on circles whose radii come from the upper
/// convex hull of `(i, log|aᵢ|)`.
pub fn initial_guesses(a: &[C64]) -> Vec<C64> {
    let n = a.len() - 1;
    let pts: Vec<(usize, f64)> =
        a.iter().enumerate().filter(|(_, c)| c.norm() > 0.0).map(|(i, c)| (i, c.norm().ln())).collect();
    let mut hull: Vec<(usize, f64)> = Vec::new();
    for p in pts {
        while hull.len() >= 2 {
            let (i1, y1) = hull[hull.len() - 2];
            let (i2, y2) = hull[hull.len() - 1];
            let cross = (i2 as f64 - i1 as f64) * (p.1 - y1) - (y2 - y1) * (p.0 as f64 - i1 as f64);
            if cross >= 0.0 {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(p);
    }
    let mut out = Vec::with_capacity(n);
    let tau = std::f64::consts::TAU;
    for w in hull.windows(2) {
        let (i, yi) = w[0];
        let (j, yj) = w[1];
        let k = j - i;
        let r = ((yi - yj) / k as f64).exp();
        for m in 0..k {
            let ang = tau * (m as f64) / (k as f64) + tau * (i as f64) / (n as f64) + 0.4;
            out.push(C64::from_polar(r, ang));
        }
    }
    out
}

/// Aberth iteration driven only by a `p/p'` oracle.
///
/// Returns the approximations and whether every correction fell below
/// `tol` relative to the root modulus.
pub fn aberth_blackbox<F>(mut ratio: F, mut z: Vec<C64>, tol: f64, max_iter: usize) -> (Vec<C64>, bool)
where
    F: FnMut(C64) -> C64,
{
    let n = z.len();
    let mut done = vec![false; n];
    for _ in 0..max_iter {
        let mut all = true;
        for k in 0..n {
            if done[k] {
                continue;
            }
            let r = ratio(z[k]);
            if !(r.re.is_finite() && r.im.is_finite()) {
                all = false;
                z[k] *= C64::new(1.0 + 1e-6, 1e-6);
                continue;
            }
            let mut s = C64::new(0.0, 0.0);
            for j in 0..n {
                if j != k {
                    let d = z[k] - z[j];
                    if d.norm() > 0.0 {
                        s += d.inv();
                    }
                }
            }
            let den = C64::new(1.0, 0.0) - r * s;
            let w = if den.norm() > 0.0 { r / den } else { r };
            z[k] -= w;
            if w.norm() <= tol * z[k].norm().max(1e-300) || r.norm() == 0.0 {
                done[k] = true;
            } else {
                all = false;
            }
        }
        if all {
            return (z, true);
        }
    }
    (z, done.iter().all(|&d| d))
}

/// All roots (with repetition) of `Σ a_k x^k`, coefficients ascending.
///
/// `tol` bounds the relative residual of every returned root.
pub fn roots_with_repetition(a: &[C64], tol: f64) -> Result<Vec<C64>> {
    let a = trim(a)?;
    let zeros = a.iter().take_while(|c| c.norm() == 0.0).count();
    let core = &a[zeros..];
    let mut out = vec![C64::new(0.0, 0.0); zeros];
    let n = core.len() - 1;
    if n == 0 {
        return Ok(out);
    }
    if n == 1 {
        out.push(-core[0] / core[1]);
        return Ok(out);
    }
    let init = initial_guesses(core);
    let (mut z, _) = aberth_blackbox(|x| newton_ratio(core, x).0, init, 4.0 * f64::EPSILON, MAX_ITER);
    polish(core, &mut z);
    let worst = z.iter().map(|&x| rel_residual(core, x)).fold(0.0, f64::max);
    if worst > tol.max(1e-12) || z.iter().any(|x| !x.re.is_finite() || !x.im.is_finite()) {
        let mut c = companion_roots(core)?;
        polish(core, &mut c);
        let worst_c = c.iter().map(|&x| rel_residual(core, x)).fold(0.0, f64::max);
        if worst_c > tol.max(1e-12) && worst_c >= worst {
            return Err(Error::RootSolver { iterations: MAX_ITER, residual: worst.min(worst_c) });
        }
        if worst_c < worst {
            z = c;
        }
    }
    out.extend(z);
    Ok(out)
}

fn polish(a: &[C64], z: &mut [C64]) {
    for x in z.iter_mut() {
        for _ in 0..2 {
            let (r, res) = newton_ratio(a, *x);
            if res < 1e-15 {
                break;
            }
            let cand = *x - r;
            if rel_residual(a, cand) < res {
                *x = cand;
            } else {
                break;
            }
        }
    }
}

fn trim(a: &[C64]) -> Result<&[C64]> {
    let mut n = a.len();
    while n > 0 && a[n - 1].norm() == 0.0 {
        n -= 1;
    }
    if n == 0 {
        return Err(Error::InvalidInput("zero polynomial has no finite root set".into()));
    }
    if a[..n].iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
        return Err(Error::InvalidInput("non-finite coefficient".into()));
    }
    Ok(&a[..n])
}

/// Eigenvalues of the companion matrix (complex Schur form).
pub fn companion_roots(a: &[C64]) -> Result<Vec<C64>> {
    let a = trim(a)?;
    let n = a.len() - 1;
    if n == 0 {
        return Ok(Vec::new());
    }
    let lead = a[n];
    let mut m = DMatrix::<C64>::zeros(n, n);
    for i in 1..n {
        m[(i, i - 1)] = C64::new(1.0, 0.0);
    }
    for i in 0..n {
        m[(i, n - 1)] = -a[i] / lead;
    }
    m.schur()
        .eigenvalues()
        .map(|v| v.iter().copied().collect())
        .ok_or(Error::RootSolver { iterations: 0, residual: f64::INFINITY })
}

/// Merge approximations closer than `radius·max(1,|z|)` (single linkage).
pub fn cluster(z: &[C64], radius: f64) -> Vec<Root> {
    let n = z.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], i: usize) -> usize {
        let mut r = i;
        while p[r] != r {
            r = p[r];
        }
        let mut c = i;
        while p[c] != r {
            let nx = p[c];
            p[c] = r;
            c = nx;
        }
        r
    }
    for i in 0..n {
        for j in i + 1..n {
            let scale = 1.0f64.max(z[i].norm()).max(z[j].norm());
            if (z[i] - z[j]).norm() <= radius * scale {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    parent[b] = a;
                }
            }
        }
    }
    let mut groups: std::collections::BTreeMap<usize, Vec<C64>> = Default::default();
    for i in 0..n {
        let r = find(&mut parent, i);
        groups.entry(r).or_default().push(z[i]);
    }
    groups.into_values().map(|g| Root { z: g.iter().sum::<C64>() / g.len() as f64, multiplicity: g.len() }).collect()
}

/// Distinct roots with multiplicities of `Σ a_k x^k` (ascending coefficients).
///
/// Approximations within `10·tol` are merged. A root of multiplicity m is
/// only resolved to about `eps^(1/m)`, so wider clusters are also merged
/// when the derivative vanishes at their centre.
pub fn poly_roots(a: &[C64], tol: f64) -> Result<Vec<Root>> {
    let t = trim(a)?;
    if t.len() < 2 {
        return Err(Error::InvalidInput("degree must be at least 1".into()));
    }
    let z = roots_with_repetition(t, tol)?;
    let mut roots = cluster(&z, 10.0 * tol);
    let wide = cluster(&z, (10.0 * tol).max(1e-5));
    if wide.len() < roots.len() {
        let d1: Vec<C64> = (1..t.len()).map(|k| t[k] * k as f64).collect();
        if wide.iter().all(|r| r.multiplicity == 1 || rel_residual(&d1, r.z) < 1e-4) {
            roots = wide;
        }
    }
    roots.sort_by(|x, y| x.z.re.total_cmp(&y.z.re).then(x.z.im.total_cmp(&y.z.im)));
    Ok(roots)
}

/// Roots `[u:v]` (with repetition) of the binary form `Σ a_k u^k v^(n−k)`.
/// Roots at infinity (`v = 0`) are reported as `[1:0]`.
pub fn binary_form_roots(a: &[C64], tol: f64) -> Result<Vec<[C64; 2]>> {
    let n = a.len() - 1;
    let mut top = n;
    while top > 0 && a[top].norm() == 0.0 {
        top -= 1;
    }
    if top == 0 && a[0].norm() == 0.0 {
        return Err(Error::InvalidInput("zero binary form".into()));
    }
    let one = C64::new(1.0, 0.0);
    let mut out: Vec<[C64; 2]> = if top > 0 {
        roots_with_repetition(&a[..=top], tol)?
            .into_iter()
            .map(|x| if x.norm() <= 1.0 { [x, one] } else { [one, x.inv()] })
            .collect()
    } else {
        Vec::new()
    };
    for _ in top..n {
        out.push([one, C64::new(0.0, 0.0)]);
    }
    Ok(out)
}

/// Expand `lead · Π (x − rᵢ)` to ascending coefficients.
pub fn from_roots(lead: C64, roots: &[C64]) -> Vec<C64> {
    let mut c = vec![lead];
    for &r in roots {
        let mut next = vec![C64::new(0.0, 0.0); c.len() + 1];
        for (k, &ck) in c.iter().enumerate() {
            next[k + 1] += ck;
            next[k] -= ck * r;
        }
        c = next;
    }
    c
}

/// Evaluate `Σ a_k x^k`.
pub fn horner(a: &[C64], x: C64) -> C64 {
    a.iter().rev().fold(C64::new(0.0, 0.0), |acc, &c| acc * x + c)
}

/// Roots of a degree-`deg` polynomial known only through a `p/p'` oracle,
/// started on the circle of radius `r0` and polished by two Newton steps.
pub fn blackbox_roots<F>(ratio: F, deg: usize, r0: f64, tol: f64) -> (Vec<C64>, bool)
where
    F: Fn(C64) -> C64,
{
    let init: Vec<C64> = (0..deg)
        .map(|k| C64::from_polar(r0.clamp(1e-8, 1e8), std::f64::consts::TAU * (k as f64 + 0.25) / deg as f64 + 0.3))
        .collect();
    let (mut z, ok) = aberth_blackbox(&ratio, init, tol, MAX_ITER);
    for x in z.iter_mut() {
        for _ in 0..2 {
            let r = ratio(*x);
            if r.re.is_finite() && r.im.is_finite() {
                *x -= r;
            }
        }
    }
    (z, ok)
}
