//! Real-coefficient polynomials and their complex roots.
//!
//! Roots are the eigenvalues of the companion matrix, found with balancing
//! followed by the Francis double-shift QR iteration on the (already upper
//! Hessenberg) companion form. Everything is generic over [`Real`] so the
//! same code runs in `f64` and in double-double.

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::scalar::Real;

const MAX_SWEEPS_PER_ROOT: usize = 100;

/// Evaluate `sum c_k z^k` (ascending coefficients) at a complex point.
pub fn eval_complex<T: Real>(coeffs: &[T], z: Complex<T>) -> Complex<T> {
    coeffs
        .iter()
        .rev()
        .fold(Complex::new(T::zero(), T::zero()), |acc, &c| acc * z + Complex::new(c, T::zero()))
}

pub fn modulus<T: Real>(z: Complex<T>) -> T {
    z.re.hypot(z.im)
}

/// All complex roots of the polynomial with ascending coefficients `coeffs`.
///
/// Leading (highest-degree) exact zeros are trimmed first; the returned list
/// has one entry per remaining degree, in no particular order.
pub fn roots<T: Real>(coeffs: &[T]) -> Result<Vec<Complex<T>>> {
    let degree = match coeffs.iter().rposition(|c| !c.is_zero()) {
        Some(d) => d,
        None => return Err(Error::DegenerateDegree("polynomial is identically zero".into())),
    };
    if degree == 0 {
        return Ok(Vec::new());
    }
    let lead = coeffs[degree];
    let n = degree;
    // 1-based storage keeps the QR sweep close to its textbook form.
    let mut a = vec![vec![T::zero(); n + 1]; n + 1];
    for j in 1..=n {
        a[1][j] = -coeffs[n - j] / lead;
    }
    for i in 2..=n {
        a[i][i - 1] = T::one();
    }
    let mut balanced = a.clone();
    balance(&mut balanced, n);
    // Balancing occasionally steers the shifts into a stall on defective
    // root clusters; the raw companion matrix is the fallback.
    hqr(&mut balanced, n).or_else(|_| hqr(&mut a, n))
}

fn balance<T: Real>(a: &mut [Vec<T>], n: usize) {
    let radix = T::from_f64_lossy(2.0);
    let sqrdx = radix * radix;
    let mut done = false;
    while !done {
        done = true;
        for i in 1..=n {
            let mut r = T::zero();
            let mut c = T::zero();
            for j in 1..=n {
                if j != i {
                    c += a[j][i].abs();
                    r += a[i][j].abs();
                }
            }
            if c.is_zero() || r.is_zero() {
                continue;
            }
            let mut g = r / radix;
            let mut f = T::one();
            let s = c + r;
            while c < g {
                f *= radix;
                c *= sqrdx;
            }
            g = r * radix;
            while c > g {
                f /= radix;
                c /= sqrdx;
            }
            if (c + r) / f < T::from_f64_lossy(0.95) * s {
                done = false;
                let g = T::one() / f;
                for j in 1..=n {
                    a[i][j] *= g;
                }
                for j in 1..=n {
                    a[j][i] *= f;
                }
            }
        }
    }
}

fn sign<T: Real>(a: T, b: T) -> T {
    if b >= T::zero() {
        a.abs()
    } else {
        -a.abs()
    }
}

#[allow(clippy::many_single_char_names)]
fn hqr<T: Real>(a: &mut [Vec<T>], n: usize) -> Result<Vec<Complex<T>>> {
    let zero = T::zero();
    let mut wr = vec![zero; n + 1];
    let mut wi = vec![zero; n + 1];

    let mut anorm = zero;
    for i in 1..=n {
        for j in i.saturating_sub(1).max(1)..=n {
            anorm += a[i][j].abs();
        }
    }

    let mut nn = n;
    let mut t = zero;
    let (mut p, mut q, mut r): (T, T, T);
    let (mut x, mut y, mut z, mut w);
    while nn >= 1 {
        let mut its = 0;
        let mut l;
        loop {
            l = nn;
            while l >= 2 {
                let mut s = a[l - 1][l - 1].abs() + a[l][l].abs();
                if s.is_zero() {
                    s = anorm;
                }
                if a[l][l - 1].abs() + s == s {
                    a[l][l - 1] = zero;
                    break;
                }
                l -= 1;
            }
            x = a[nn][nn];
            if l == nn {
                wr[nn] = x + t;
                wi[nn] = zero;
                nn -= 1;
                break;
            }
            y = a[nn - 1][nn - 1];
            w = a[nn][nn - 1] * a[nn - 1][nn];
            if l == nn - 1 {
                p = (y - x) * T::from_f64_lossy(0.5);
                q = p * p + w;
                z = q.abs().sqrt();
                x += t;
                if q >= zero {
                    z = p + sign(z, p);
                    wr[nn - 1] = x + z;
                    wr[nn] = x + z;
                    if !z.is_zero() {
                        wr[nn] = x - w / z;
                    }
                    wi[nn - 1] = zero;
                    wi[nn] = zero;
                } else {
                    wr[nn - 1] = x + p;
                    wr[nn] = x + p;
                    wi[nn - 1] = -z;
                    wi[nn] = z;
                }
                nn = nn.saturating_sub(2);
                break;
            }
            if its == MAX_SWEEPS_PER_ROOT {
                return Err(Error::NoConvergence(format!(
                    "companion QR iteration did not converge after {its} sweeps"
                )));
            }
            if its > 0 && its % 10 == 0 {
                t += x;
                for i in 1..=nn {
                    a[i][i] -= x;
                }
                let s = a[nn][nn - 1].abs() + a[nn - 1][nn - 2].abs();
                x = T::from_f64_lossy(0.75) * s;
                y = x;
                w = T::from_f64_lossy(-0.4375) * s * s;
            }
            its += 1;
            let mut m = nn - 2;
            loop {
                z = a[m][m];
                r = x - z;
                let s = y - z;
                p = (r * s - w) / a[m + 1][m] + a[m][m + 1];
                q = a[m + 1][m + 1] - z - r - s;
                r = a[m + 2][m + 1];
                let s = p.abs() + q.abs() + r.abs();
                p /= s;
                q /= s;
                r /= s;
                if m == l {
                    break;
                }
                let u = a[m][m - 1].abs() * (q.abs() + r.abs());
                let v = p.abs() * (a[m - 1][m - 1].abs() + z.abs() + a[m + 1][m + 1].abs());
                if u + v == v {
                    break;
                }
                m -= 1;
            }
            for i in (m + 2)..=nn {
                a[i][i - 2] = zero;
                if i != m + 2 {
                    a[i][i - 3] = zero;
                }
            }
            let mut k = m;
            while k < nn {
                if k != m {
                    p = a[k][k - 1];
                    q = a[k + 1][k - 1];
                    r = zero;
                    if k != nn - 1 {
                        r = a[k + 2][k - 1];
                    }
                    x = p.abs() + q.abs() + r.abs();
                    if !x.is_zero() {
                        p /= x;
                        q /= x;
                        r /= x;
                    }
                }
                let s = sign((p * p + q * q + r * r).sqrt(), p);
                if !s.is_zero() {
                    if k == m {
                        if l != m {
                            a[k][k - 1] = -a[k][k - 1];
                        }
                    } else {
                        a[k][k - 1] = -s * x;
                    }
                    p += s;
                    x = p / s;
                    y = q / s;
                    z = r / s;
                    q /= p;
                    r /= p;
                    for j in k..=nn {
                        p = a[k][j] + q * a[k + 1][j];
                        if k != nn - 1 {
                            p += r * a[k + 2][j];
                            a[k + 2][j] -= p * z;
                        }
                        a[k + 1][j] -= p * y;
                        a[k][j] -= p * x;
                    }
                    let mmin = if nn < k + 3 { nn } else { k + 3 };
                    for i in l..=mmin {
                        p = x * a[i][k] + y * a[i][k + 1];
                        if k != nn - 1 {
                            p += z * a[i][k + 2];
                            a[i][k + 2] -= p * r;
                        }
                        a[i][k + 1] -= p * q;
                        a[i][k] -= p;
                    }
                }
                k += 1;
            }
            if l >= nn - 1 {
                break;
            }
        }
    }
    Ok((1..=n).map(|i| Complex::new(wr[i], wi[i])).collect())
}

/// Group roots that lie within `tol` of each other (single linkage).
pub(crate) fn clusters<T: Real>(roots: &[Complex<T>], tol: T) -> Vec<Vec<Complex<T>>> {
    let mut label: Vec<usize> = (0..roots.len()).collect();
    for i in 0..roots.len() {
        for j in (i + 1)..roots.len() {
            if modulus(roots[i] - roots[j]) < tol {
                let (from, to) = (label[j], label[i]);
                for l in label.iter_mut() {
                    if *l == from {
                        *l = to;
                    }
                }
            }
        }
    }
    let mut groups: Vec<(usize, Vec<Complex<T>>)> = Vec::new();
    for (i, &l) in label.iter().enumerate() {
        match groups.iter_mut().find(|(k, _)| *k == l) {
            Some((_, g)) => g.push(roots[i]),
            None => groups.push((l, vec![roots[i]])),
        }
    }
    groups.into_iter().map(|(_, g)| g).collect()
}
