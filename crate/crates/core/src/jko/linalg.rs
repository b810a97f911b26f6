//! Small sparse symmetric solvers used by the ascent directions.

/// Symmetric matrix in compressed-row form, assembled from triplets.
#[derive(Clone, Debug)]
pub(crate) struct Csr {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl Csr {
    /// Sum duplicate entries of `(row, col, value)` triplets.
    pub(crate) fn from_triplets(n: usize, mut trip: Vec<(usize, usize, f64)>) -> Csr {
        trip.sort_unstable_by_key(|&(r, c, _)| (r, c));
        let mut row_ptr = vec![0usize; n + 1];
        let mut cols = Vec::with_capacity(trip.len());
        let mut vals: Vec<f64> = Vec::with_capacity(trip.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in trip {
            if last == Some((r, c)) {
                *vals.last_mut().unwrap() += v;
            } else {
                cols.push(c);
                vals.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        Csr { n, row_ptr, cols, vals }
    }

    pub(crate) fn diagonal(&self) -> Vec<f64> {
        (0..self.n)
            .map(|i| {
                (self.row_ptr[i]..self.row_ptr[i + 1])
                    .find(|&k| self.cols[k] == i)
                    .map_or(0.0, |k| self.vals[k])
            })
            .collect()
    }

    pub(crate) fn mul(&self, x: &[f64], out: &mut [f64]) {
        for i in 0..self.n {
            let mut acc = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += self.vals[k] * x[self.cols[k]];
            }
            out[i] = acc;
        }
    }

    /// Entry `(i, j)`, zero when absent.
    pub(crate) fn get(&self, i: usize, j: usize) -> f64 {
        (self.row_ptr[i]..self.row_ptr[i + 1]).find(|&k| self.cols[k] == j).map_or(0.0, |k| self.vals[k])
    }

    /// Largest `|i − j|` over stored entries.
    pub(crate) fn bandwidth(&self) -> usize {
        (0..self.n)
            .flat_map(|i| (self.row_ptr[i]..self.row_ptr[i + 1]).map(move |k| (i, k)))
            .map(|(i, k)| i.abs_diff(self.cols[k]))
            .max()
            .unwrap_or(0)
    }
}

/// Solve a tridiagonal system with sub-, main and super-diagonals.
pub(crate) fn thomas(sub: &[f64], diag: &[f64], sup: &[f64], rhs: &[f64]) -> Vec<f64> {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    let mut denom = diag[0];
    c[0] = if n > 1 { sup[0] / denom } else { 0.0 };
    d[0] = rhs[0] / denom;
    for i in 1..n {
        denom = diag[i] - sub[i] * c[i - 1];
        if i + 1 < n {
            c[i] = sup[i] / denom;
        }
        d[i] = (rhs[i] - sub[i] * d[i - 1]) / denom;
    }
    let mut x = d;
    for i in (0..n.saturating_sub(1)).rev() {
        x[i] -= c[i] * x[i + 1];
    }
    x
}

/// Jacobi-preconditioned conjugate gradients from a zero start.
pub(crate) fn pcg(a: &Csr, b: &[f64], rel_tol: f64, max_iter: usize) -> Vec<f64> {
    let n = b.len();
    let dinv: Vec<f64> = a.diagonal().iter().map(|&d| if d > 0.0 { 1.0 / d } else { 1.0 }).collect();
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&dinv).map(|(r, d)| r * d).collect();
    let mut p = z.clone();
    let mut ap = vec![0.0; n];
    let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
    let bnorm = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    if bnorm == 0.0 {
        return x;
    }
    for _ in 0..max_iter {
        a.mul(&p, &mut ap);
        let pap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
        if !(pap > 0.0) {
            break;
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rnorm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
        if rnorm <= rel_tol * bnorm {
            break;
        }
        for i in 0..n {
            z[i] = r[i] * dinv[i];
        }
        let rz_new: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    x
}

/// Solve `a x = b` for symmetric positive definite `a`: direct for
/// tridiagonal matrices, conjugate gradients otherwise.
pub(crate) fn solve_spd(a: &Csr, b: &[f64]) -> Vec<f64> {
    let n = b.len();
    if a.bandwidth() <= 1 {
        let diag = a.diagonal();
        let sub: Vec<f64> = (0..n).map(|i| if i > 0 { a.get(i, i - 1) } else { 0.0 }).collect();
        let sup: Vec<f64> = (0..n).map(|i| if i + 1 < n { a.get(i, i + 1) } else { 0.0 }).collect();
        let x = thomas(&sub, &diag, &sup, b);
        if x.iter().all(|v| v.is_finite()) {
            return x;
        }
    }
    pcg(a, b, 1e-12, 10 * n + 100)
}

/// Solve the dense `k × k` system `m x = b` (row-major) by Gaussian
/// elimination with partial pivoting. `None` when `m` is singular.
pub(crate) fn dense_solve(mut m: Vec<f64>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let k = b.len();
    for c in 0..k {
        let piv = (c..k).max_by(|&i, &j| m[i * k + c].abs().total_cmp(&m[j * k + c].abs()))?;
        if m[piv * k + c] == 0.0 {
            return None;
        }
        if piv != c {
            for j in 0..k {
                m.swap(c * k + j, piv * k + j);
            }
            b.swap(c, piv);
        }
        for r in c + 1..k {
            let f = m[r * k + c] / m[c * k + c];
            if f != 0.0 {
                for j in c..k {
                    m[r * k + j] -= f * m[c * k + j];
                }
                b[r] -= f * b[c];
            }
        }
    }
    for c in (0..k).rev() {
        let tail: f64 = (c + 1..k).map(|j| m[c * k + j] * b[j]).sum();
        b[c] = (b[c] - tail) / m[c * k + c];
    }
    b.iter().all(|v| v.is_finite()).then_some(b)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplacian(n: usize, shift: f64) -> Csr {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.0 + shift));
            if i > 0 {
                t.push((i, i - 1, -1.0));
                t.push((i - 1, i, -0.5));
                t.push((i - 1, i, -0.5));
            }
        }
        Csr::from_triplets(n, t)
    }

    #[test]
    fn triplets_are_summed() {
        let a = laplacian(5, 0.1);
        assert_eq!(a.get(1, 2), -1.0);
        assert_eq!(a.get(0, 3), 0.0);
        assert_eq!(a.bandwidth(), 1);
    }

    #[test]
    fn thomas_and_cg_agree() {
        let n = 40;
        let a = laplacian(n, 0.01);
        let b: Vec<f64> = (0..n).map(|i| (i as f64 * 0.3).sin()).collect();
        let x1 = solve_spd(&a, &b);
        let x2 = pcg(&a, &b, 1e-14, 1000);
        let mut r = vec![0.0; n];
        a.mul(&x1, &mut r);
        for i in 0..n {
            assert!((r[i] - b[i]).abs() < 1e-10);
            assert!((x1[i] - x2[i]).abs() < 1e-8);
        }
    }

    #[test]
    fn dense_solve_pivots() {
        let m = vec![0.0, 2.0, 1.0, 1.0, 1.0, 0.0, 3.0, 0.0, 1.0];
        let x = [1.0, -2.0, 0.5];
        let b: Vec<f64> = (0..3).map(|i| (0..3).map(|j| m[i * 3 + j] * x[j]).sum()).collect();
        let got = dense_solve(m, b).unwrap();
        for (g, e) in got.iter().zip(x) {
            assert!((g - e).abs() < 1e-14);
        }
        assert!(dense_solve(vec![1.0, 2.0, 2.0, 4.0], vec![1.0, 1.0]).is_none());
    }
}
