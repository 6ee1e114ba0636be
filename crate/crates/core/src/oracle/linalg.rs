//! Linear solvers for the exact oracles: a pivot-free banded solver for the
//! star chain, dense LU for small generators and Jacobi-preconditioned
//! BiCGSTAB for larger sparse ones.

/// Compressed sparse rows.
#[derive(Debug, Clone)]
pub(crate) struct Csr {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl Csr {
    pub(crate) fn from_rows(rows: &[Vec<(usize, f64)>]) -> Self {
        let mut row_ptr = Vec::with_capacity(rows.len() + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for row in rows {
            for &(c, v) in row {
                cols.push(c);
                vals.push(v);
            }
            row_ptr.push(cols.len());
        }
        Self { n: rows.len(), row_ptr, cols, vals }
    }

    pub(crate) fn dim(&self) -> usize {
        self.n
    }

    fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[r.clone()].iter().copied().zip(self.vals[r].iter().copied())
    }

    pub(crate) fn matvec(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            *yi = self.row(i).map(|(c, v)| v * x[c]).sum();
        }
    }

    fn diagonal(&self) -> Vec<f64> {
        (0..self.n)
            .map(|i| self.row(i).filter(|&(c, _)| c == i).map(|(_, v)| v).sum())
            .collect()
    }

    fn norm_inf(&self) -> f64 {
        (0..self.n)
            .map(|i| self.row(i).map(|(_, v)| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    fn to_dense(&self) -> Vec<f64> {
        let mut a = vec![0.0; self.n * self.n];
        for i in 0..self.n {
            for (c, v) in self.row(i) {
                a[i * self.n + c] += v;
            }
        }
        a
    }
}

fn norm_inf(x: &[f64]) -> f64 {
    x.iter().fold(0.0, |m, v| m.max(v.abs()))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Normwise backward error `‖b - Ax‖∞ / (‖A‖∞‖x‖∞ + ‖b‖∞)`.
pub(crate) fn backward_error(a: &Csr, x: &[f64], b: &[f64]) -> f64 {
    let mut ax = vec![0.0; a.dim()];
    a.matvec(x, &mut ax);
    let r = ax.iter().zip(b).fold(0.0f64, |m, (p, q)| m.max((p - q).abs()));
    let scale = a.norm_inf() * norm_inf(x) + norm_inf(b);
    if scale == 0.0 {
        0.0
    } else {
        r / scale
    }
}

/// Solves `A x = b` for every right-hand side with one partial-pivot LU.
pub(crate) fn dense_solve(a: &Csr, rhs: &[Vec<f64>]) -> Option<Vec<Vec<f64>>> {
    let n = a.dim();
    let mut m = a.to_dense();
    let mut perm: Vec<usize> = (0..n).collect();
    for k in 0..n {
        let (p, best) = (k..n)
            .map(|i| (i, m[i * n + k].abs()))
            .fold((k, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
        if best == 0.0 {
            return None;
        }
        if p != k {
            for j in 0..n {
                m.swap(k * n + j, p * n + j);
            }
            perm.swap(k, p);
        }
        let pivot = m[k * n + k];
        for i in k + 1..n {
            let f = m[i * n + k] / pivot;
            if f != 0.0 {
                m[i * n + k] = f;
                for j in k + 1..n {
                    m[i * n + j] -= f * m[k * n + j];
                }
            }
        }
    }
    let solve = |b: &Vec<f64>| {
        let mut x: Vec<f64> = perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let s: f64 = (0..i).map(|j| m[i * n + j] * x[j]).sum();
            x[i] -= s;
        }
        for i in (0..n).rev() {
            let s: f64 = (i + 1..n).map(|j| m[i * n + j] * x[j]).sum();
            x[i] = (x[i] - s) / m[i * n + i];
        }
        x
    };
    Some(rhs.iter().map(solve).collect())
}

/// Jacobi-preconditioned BiCGSTAB started from `x0`. Returns the iterate
/// once the recursive residual drops below `tol · ‖b‖`, or `None` on
/// breakdown or after `max_iter` steps.
pub(crate) fn bicgstab(a: &Csr, b: &[f64], x0: Vec<f64>, tol: f64, max_iter: usize) -> Option<Vec<f64>> {
    let n = a.dim();
    let inv_diag: Vec<f64> =
        a.diagonal().iter().map(|&d| if d != 0.0 { 1.0 / d } else { 1.0 }).collect();
    let mut x = x0;
    let mut r = vec![0.0; n];
    a.matvec(&x, &mut r);
    for (ri, bi) in r.iter_mut().zip(b) {
        *ri = bi - *ri;
    }
    let target = tol * norm_inf(b).max(f64::MIN_POSITIVE);
    if norm_inf(&r) <= target {
        return Some(x);
    }
    let r_hat = r.clone();
    let (mut rho, mut alpha, mut omega) = (1.0, 1.0, 1.0);
    let mut v = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut y = vec![0.0; n];
    let mut s = vec![0.0; n];
    let mut z = vec![0.0; n];
    let mut t = vec![0.0; n];
    for _ in 0..max_iter {
        let rho_new = dot(&r_hat, &r);
        if rho_new == 0.0 || omega == 0.0 {
            return None;
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        for i in 0..n {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
            y[i] = inv_diag[i] * p[i];
        }
        a.matvec(&y, &mut v);
        let denom = dot(&r_hat, &v);
        if denom == 0.0 {
            return None;
        }
        alpha = rho / denom;
        for i in 0..n {
            s[i] = r[i] - alpha * v[i];
        }
        if norm_inf(&s) <= target {
            for i in 0..n {
                x[i] += alpha * y[i];
            }
            return Some(x);
        }
        for i in 0..n {
            z[i] = inv_diag[i] * s[i];
        }
        a.matvec(&z, &mut t);
        let tt = dot(&t, &t);
        if tt == 0.0 {
            return None;
        }
        omega = dot(&t, &s) / tt;
        for i in 0..n {
            x[i] += alpha * y[i] + omega * z[i];
            r[i] = s[i] - omega * t[i];
        }
        if norm_inf(&r) <= target {
            return Some(x);
        }
    }
    None
}

/// Pivot-free Gaussian elimination on a matrix with two sub- and two
/// super-diagonals, row `i` stored as `band[i] = [a(i,i-2), .., a(i,i+2)]`.
/// Adequate for the diagonally dominant M-matrices of birth-death generators.
pub(crate) fn banded_solve(band: &[[f64; 5]], rhs: &[f64]) -> Option<Vec<f64>> {
    let n = band.len();
    let mut m = band.to_vec();
    let mut x = rhs.to_vec();
    for k in 0..n {
        let pivot = m[k][2];
        if pivot == 0.0 || !pivot.is_finite() {
            return None;
        }
        for i in k + 1..(k + 3).min(n) {
            let off = 2 - (i - k);
            let f = m[i][off] / pivot;
            if f == 0.0 {
                continue;
            }
            m[i][off] = 0.0;
            // row k entries at columns k+1, k+2 sit at m[k][3], m[k][4]
            for d in 1..=2 {
                if k + d < n {
                    m[i][off + d] -= f * m[k][2 + d];
                }
            }
            x[i] -= f * x[k];
        }
    }
    for i in (0..n).rev() {
        let mut s = x[i];
        for d in 1..=2 {
            if i + d < n {
                s -= m[i][2 + d] * x[i + d];
            }
        }
        x[i] = s / m[i][2];
    }
    Some(x)
}

/// Backward error of a banded solve, as in [`backward_error`].
pub(crate) fn banded_backward_error(band: &[[f64; 5]], x: &[f64], b: &[f64]) -> f64 {
    let n = band.len();
    let (mut r, mut a_norm) = (0.0f64, 0.0f64);
    for i in 0..n {
        let mut ax = 0.0;
        let mut row = 0.0;
        for (d, &v) in band[i].iter().enumerate() {
            let j = i as isize + d as isize - 2;
            if v != 0.0 && j >= 0 && (j as usize) < n {
                ax += v * x[j as usize];
                row += v.abs();
            }
        }
        r = r.max((ax - b[i]).abs());
        a_norm = a_norm.max(row);
    }
    let scale = a_norm * norm_inf(x) + norm_inf(b);
    if scale == 0.0 {
        0.0
    } else {
        r / scale
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplacian_like(n: usize) -> Vec<Vec<(usize, f64)>> {
        (0..n)
            .map(|i| {
                let mut row = vec![(i, 3.0 + i as f64 * 0.01)];
                if i > 0 {
                    row.push((i - 1, -1.0));
                }
                if i + 2 < n {
                    row.push((i + 2, -1.5));
                }
                row
            })
            .collect()
    }

    #[test]
    fn dense_and_iterative_agree() {
        let a = Csr::from_rows(&laplacian_like(60));
        let b: Vec<f64> = (0..60).map(|i| (i % 7) as f64 - 2.0).collect();
        let xd = dense_solve(&a, &[b.clone()]).unwrap().remove(0);
        let xi = bicgstab(&a, &b, vec![0.0; 60], 1e-14, 1000).unwrap();
        assert!(backward_error(&a, &xd, &b) < 1e-14);
        assert!(backward_error(&a, &xi, &b) < 1e-12);
        for (p, q) in xd.iter().zip(&xi) {
            assert!((p - q).abs() < 1e-10);
        }
    }

    #[test]
    fn banded_matches_dense() {
        let n = 40;
        let rows: Vec<Vec<(usize, f64)>> = (0..n)
            .map(|i| {
                let mut row = vec![(i, 5.0)];
                for (d, v) in [(-2isize, -1.0), (-1, -0.5), (1, -2.0), (2, -1.0)] {
                    let j = i as isize + d;
                    if j >= 0 && (j as usize) < n {
                        row.push((j as usize, v));
                    }
                }
                row
            })
            .collect();
        let band: Vec<[f64; 5]> = rows
            .iter()
            .enumerate()
            .map(|(i, row)| {
                let mut b = [0.0; 5];
                for &(j, v) in row {
                    b[(j as isize - i as isize + 2) as usize] = v;
                }
                b
            })
            .collect();
        let rhs: Vec<f64> = (0..n).map(|i| i as f64).collect();
        let xb = banded_solve(&band, &rhs).unwrap();
        let xd = dense_solve(&Csr::from_rows(&rows), &[rhs.clone()]).unwrap().remove(0);
        for (p, q) in xb.iter().zip(&xd) {
            assert!((p - q).abs() < 1e-12);
        }
        assert!(banded_backward_error(&band, &xb, &rhs) < 1e-15);
    }

    #[test]
    fn singular_is_reported() {
        let a = Csr::from_rows(&[vec![(0, 1.0), (1, 1.0)], vec![(0, 1.0), (1, 1.0)]]);
        assert!(dense_solve(&a, &[vec![1.0, 2.0]]).is_none());
    }
}
