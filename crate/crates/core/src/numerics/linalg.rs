use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::numerics::Matrix;

fn require_square(a: &Matrix, what: &str) -> Result<()> {
    if a.nrows() != a.ncols() {
        return Err(Error::Dimension(format!(
            "{what} requires a square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    Ok(())
}

fn norm1(a: &Matrix) -> f64 {
    (0..a.ncols())
        .map(|j| a.column(j).iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Coefficients of the diagonal Padé approximant of degree `q` to `exp`.
fn pade_coefficients(q: usize) -> Vec<f64> {
    let mut c = vec![1.0; q + 1];
    for k in 1..=q {
        c[k] = c[k - 1] * (q + 1 - k) as f64 / (k * (2 * q + 1 - k)) as f64;
    }
    c
}

/// Matrix exponential `e^{A t}` by scaling and squaring around a degree-8 Padé core.
pub fn expm(a: &Matrix, t: f64) -> Result<Matrix> {
    require_square(a, "expm")?;
    let n = a.nrows();
    if n == 0 {
        return Ok(Matrix::zeros(0, 0));
    }
    let at = a * t;
    let nrm = norm1(&at);
    if !nrm.is_finite() {
        return Err(Error::Invalid("expm of a non-finite matrix".into()));
    }
    // ‖A/2^s‖ ≤ 1/2 keeps the (8,8) Padé truncation error far below 1e-16.
    let s = if nrm > 0.5 { (nrm / 0.5).log2().ceil() as i32 } else { 0 };
    let scaled = at / 2f64.powi(s);

    let c = pade_coefficients(8);
    let eye = Matrix::identity(n, n);
    let mut power = eye.clone();
    let mut num = eye.clone() * c[0];
    let mut den = eye.clone() * c[0];
    for (k, ck) in c.iter().enumerate().skip(1) {
        power = &power * &scaled;
        num += &power * *ck;
        if k % 2 == 0 {
            den += &power * *ck;
        } else {
            den -= &power * *ck;
        }
    }
    let lu = den.lu();
    let mut e = lu
        .solve(&num)
        .ok_or_else(|| Error::Consistency("singular Padé denominator in expm".into()))?;
    for _ in 0..s {
        e = &e * &e;
    }
    Ok(e)
}

/// Diagonal similarity scaling that equalizes row and column norms.
fn balance(a: &mut [Vec<f64>]) {
    const RADIX: f64 = 2.0;
    let n = a.len();
    let sqrdx = RADIX * RADIX;
    let mut done = false;
    while !done {
        done = true;
        for i in 0..n {
            let mut r = 0.0;
            let mut c = 0.0;
            for j in 0..n {
                if j != i {
                    c += a[j][i].abs();
                    r += a[i][j].abs();
                }
            }
            if c != 0.0 && r != 0.0 {
                let mut g = r / RADIX;
                let mut f = 1.0;
                let s = c + r;
                while c < g {
                    f *= RADIX;
                    c *= sqrdx;
                }
                g = r * RADIX;
                while c > g {
                    f /= RADIX;
                    c /= sqrdx;
                }
                if (c + r) / f < 0.95 * s {
                    done = false;
                    let g = 1.0 / f;
                    for j in 0..n {
                        a[i][j] *= g;
                    }
                    for row in a.iter_mut() {
                        row[i] *= f;
                    }
                }
            }
        }
    }
}

/// Reduction to upper Hessenberg form by stabilized elementary similarity transforms.
fn hessenberg(a: &mut [Vec<f64>]) {
    let n = a.len();
    for m in 1..n.saturating_sub(1) {
        let mut x: f64 = 0.0;
        let mut i = m;
        for j in m..n {
            if a[j][m - 1].abs() > x.abs() {
                x = a[j][m - 1];
                i = j;
            }
        }
        if i != m {
            for j in (m - 1)..n {
                let tmp = a[i][j];
                a[i][j] = a[m][j];
                a[m][j] = tmp;
            }
            for row in a.iter_mut() {
                row.swap(i, m);
            }
        }
        if x != 0.0 {
            for i in (m + 1)..n {
                let mut y = a[i][m - 1];
                if y != 0.0 {
                    y /= x;
                    a[i][m - 1] = y;
                    for j in m..n {
                        a[i][j] -= y * a[m][j];
                    }
                    for row in a.iter_mut() {
                        row[m] += y * row[i];
                    }
                }
            }
        }
    }
    for (i, row) in a.iter_mut().enumerate() {
        for v in row.iter_mut().take(i.saturating_sub(1)) {
            *v = 0.0;
        }
    }
}

fn sign(a: f64, b: f64) -> f64 {
    if b >= 0.0 {
        a.abs()
    } else {
        -a.abs()
    }
}

/// Francis double-shift QR on an upper Hessenberg matrix.
fn hqr(a: &mut [Vec<f64>]) -> Result<Vec<Complex64>> {
    let n = a.len() as isize;
    let mut wri = vec![Complex64::new(0.0, 0.0); n as usize];
    let eps = f64::EPSILON;
    let budget = 100 * n.max(1) as usize;
    let mut sweeps = 0usize;

    let mut anorm = 0.0;
    for i in 0..n as usize {
        for j in i.saturating_sub(1)..n as usize {
            anorm += a[i][j].abs();
        }
    }
    let mut nn = n - 1;
    let mut t = 0.0;
    let (mut x, mut y, mut z, mut w, mut p, mut q, mut r, mut s);
    while nn >= 0 {
        let mut its = 0;
        loop {
            let mut l = nn;
            while l > 0 {
                let lu = l as usize;
                s = a[lu - 1][lu - 1].abs() + a[lu][lu].abs();
                if s == 0.0 {
                    s = anorm;
                }
                if a[lu][lu - 1].abs() <= eps * s {
                    a[lu][lu - 1] = 0.0;
                    break;
                }
                l -= 1;
            }
            let nu = nn as usize;
            x = a[nu][nu];
            if l == nn {
                wri[nu] = Complex64::new(x + t, 0.0);
                nn -= 1;
            } else {
                y = a[nu - 1][nu - 1];
                w = a[nu][nu - 1] * a[nu - 1][nu];
                if l == nn - 1 {
                    p = 0.5 * (y - x);
                    q = p * p + w;
                    z = q.abs().sqrt();
                    x += t;
                    if q >= 0.0 {
                        z = p + sign(z, p);
                        wri[nu - 1] = Complex64::new(x + z, 0.0);
                        wri[nu] = Complex64::new(x + z, 0.0);
                        if z != 0.0 {
                            wri[nu] = Complex64::new(x - w / z, 0.0);
                        }
                    } else {
                        wri[nu] = Complex64::new(x + p, -z);
                        wri[nu - 1] = wri[nu].conj();
                    }
                    nn -= 2;
                } else {
                    if its == 60 || sweeps >= budget {
                        return Err(Error::NoConvergence {
                            what: "Francis QR eigenvalue iteration".into(),
                            iterations: sweeps,
                            residual: a[nu][nu - 1].abs(),
                        });
                    }
                    if its == 10 || its == 20 || its == 40 {
                        t += x;
                        for i in 0..=nu {
                            a[i][i] -= x;
                        }
                        s = a[nu][nu - 1].abs() + a[nu - 1][nu - 2].abs();
                        x = 0.75 * s;
                        y = x;
                        w = -0.4375 * s * s;
                    }
                    its += 1;
                    sweeps += 1;
                    let lu = l as usize;
                    let mut m = nu - 2;
                    loop {
                        z = a[m][m];
                        r = x - z;
                        s = y - z;
                        p = (r * s - w) / a[m + 1][m] + a[m][m + 1];
                        q = a[m + 1][m + 1] - z - r - s;
                        r = a[m + 2][m + 1];
                        s = p.abs() + q.abs() + r.abs();
                        p /= s;
                        q /= s;
                        r /= s;
                        if m == lu {
                            break;
                        }
                        let u = a[m][m - 1].abs() * (q.abs() + r.abs());
                        let v = p.abs() * (a[m - 1][m - 1].abs() + z.abs() + a[m + 1][m + 1].abs());
                        if u <= eps * v {
                            break;
                        }
                        m -= 1;
                    }
                    for i in m..nu - 1 {
                        a[i + 2][i] = 0.0;
                        if i != m {
                            a[i + 2][i - 1] = 0.0;
                        }
                    }
                    let mut k = m;
                    while k < nu {
                        if k != m {
                            p = a[k][k - 1];
                            q = a[k + 1][k - 1];
                            r = 0.0;
                            if k + 1 != nu {
                                r = a[k + 2][k - 1];
                            }
                            x = p.abs() + q.abs() + r.abs();
                            if x != 0.0 {
                                p /= x;
                                q /= x;
                                r /= x;
                            }
                        }
                        s = sign((p * p + q * q + r * r).sqrt(), p);
                        if s != 0.0 {
                            if k == m {
                                if l as usize != m {
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
                            for j in k..=nu {
                                p = a[k][j] + q * a[k + 1][j];
                                if k + 1 != nu {
                                    p += r * a[k + 2][j];
                                    a[k + 2][j] -= p * z;
                                }
                                a[k + 1][j] -= p * y;
                                a[k][j] -= p * x;
                            }
                            let mmin = if nu < k + 3 { nu } else { k + 3 };
                            for i in lu..=mmin {
                                p = x * a[i][k] + y * a[i][k + 1];
                                if k + 1 != nu {
                                    p += z * a[i][k + 2];
                                    a[i][k + 2] -= p * r;
                                }
                                a[i][k + 1] -= p * q;
                                a[i][k] -= p;
                            }
                        }
                        k += 1;
                    }
                }
            }
            if !(nn >= 1 && l < nn - 1) {
                break;
            }
        }
    }
    Ok(wri)
}

/// All eigenvalues of a real square matrix (balancing, Hessenberg reduction, Francis QR).
pub fn eigenvalues(a: &Matrix) -> Result<Vec<Complex64>> {
    require_square(a, "eigenvalues")?;
    let n = a.nrows();
    if a.iter().any(|x| !x.is_finite()) {
        return Err(Error::Invalid("eigenvalues of a non-finite matrix".into()));
    }
    let mut rows: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| a[(i, j)]).collect()).collect();
    balance(&mut rows);
    hessenberg(&mut rows);
    let mut eigs = hqr(&mut rows)?;
    eigs.sort_by(|x, y| {
        x.re.partial_cmp(&y.re)
            .unwrap()
            .then(x.im.partial_cmp(&y.im).unwrap())
    });
    Ok(eigs)
}

/// Largest real part of the spectrum.
pub fn spectral_abscissa(a: &Matrix) -> Result<f64> {
    Ok(eigenvalues(a)?
        .iter()
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max))
}

/// Spectral radius of the complex matrix `re + j·im`, via its real 2n×2n embedding.
pub fn complex_spectral_radius(re: &Matrix, im: &Matrix) -> Result<f64> {
    let n = re.nrows();
    let mut big = Matrix::zeros(2 * n, 2 * n);
    big.view_mut((0, 0), (n, n)).copy_from(re);
    big.view_mut((n, n), (n, n)).copy_from(re);
    big.view_mut((0, n), (n, n)).copy_from(&(-im));
    big.view_mut((n, 0), (n, n)).copy_from(im);
    Ok(eigenvalues(&big)?
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max))
}

/// Induced 2-norm (largest singular value).
pub fn norm2(a: &Matrix) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    a.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .fold(0.0, |m, s| f64::max(m, *s))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    fn close(a: &Matrix, b: &Matrix, tol: f64) -> bool {
        (a - b).iter().all(|x| x.abs() <= tol)
    }

    #[test]
    fn expm_of_zero_is_identity() {
        let e = expm(&Matrix::zeros(2, 2), 5.0).unwrap();
        assert!(close(&e, &Matrix::identity(2, 2), 1e-15));
    }

    #[test]
    fn expm_diagonal() {
        let e = expm(&dmatrix![1.0, 0.0; 0.0, -2.0], 1.0).unwrap();
        let want = dmatrix![1f64.exp(), 0.0; 0.0, (-2f64).exp()];
        assert!((&e - &want).iter().zip(want.iter()).all(|(d, w)| d.abs() <= 1e-12 * w.abs().max(1e-300) + 1e-300));
    }

    #[test]
    fn expm_nilpotent() {
        for &t in &[0.3, 2.0, 7.5] {
            let e = expm(&dmatrix![0.0, 1.0; 0.0, 0.0], t).unwrap();
            assert!(close(&e, &dmatrix![1.0, t; 0.0, 1.0], 1e-12 * t.max(1.0)));
        }
    }

    #[test]
    fn expm_rotation_large_norm() {
        // ‖At‖ = 10
        let e = expm(&dmatrix![0.0, 1.0; -1.0, 0.0], 10.0).unwrap();
        let want = dmatrix![10f64.cos(), 10f64.sin(); -10f64.sin(), 10f64.cos()];
        assert!(close(&e, &want, 1e-12));
    }

    #[test]
    fn expm_rejects_non_square() {
        assert!(matches!(expm(&Matrix::zeros(2, 3), 1.0), Err(Error::Dimension(_))));
    }

    #[test]
    fn eigenvalues_diagonal() {
        let e = eigenvalues(&dmatrix![1.0, 0.0, 0.0; 0.0, -2.0, 0.0; 0.0, 0.0, 3.0]).unwrap();
        let re: Vec<f64> = e.iter().map(|z| z.re).collect();
        assert!((re[0] + 2.0).abs() < 1e-12 && (re[1] - 1.0).abs() < 1e-12 && (re[2] - 3.0).abs() < 1e-12);
        assert!(e.iter().all(|z| z.im == 0.0));
    }

    #[test]
    fn eigenvalues_rotation() {
        let e = eigenvalues(&dmatrix![0.0, 1.0; -1.0, 0.0]).unwrap();
        assert!(e.iter().all(|z| z.re.abs() < 1e-12 && (z.im.abs() - 1.0).abs() < 1e-12));
        assert!(e[0].im * e[1].im < 0.0);
    }

    #[test]
    fn eigenvalues_companion() {
        // s² − 3s + 2
        let e = eigenvalues(&dmatrix![3.0, -2.0; 1.0, 0.0]).unwrap();
        assert!((e[0].re - 1.0).abs() < 1e-12 && (e[1].re - 2.0).abs() < 1e-12);
    }

    #[test]
    fn complex_radius_of_phase() {
        let r = complex_spectral_radius(&dmatrix![0.0], &dmatrix![0.7]).unwrap();
        assert!((r - 0.7).abs() < 1e-12);
    }
}
