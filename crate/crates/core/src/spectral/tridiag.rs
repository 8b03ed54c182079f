//! Eigenvalues of a symmetric tridiagonal matrix by implicitly shifted QL
//! iteration, also returning the last component of each eigenvector.

/// `d` is the diagonal, `e[i]` couples `i` and `i + 1` (length `n - 1`).
/// Returns ascending eigenvalues paired with the last entry of the matching
/// unit eigenvector, or `None` if an eigenvalue fails to converge.
pub(crate) fn tridiag_eigen(d: &[f64], e: &[f64]) -> Option<Vec<(f64, f64)>> {
    let n = d.len();
    assert_eq!(e.len() + 1, n.max(1), "off-diagonal length must be n - 1");
    if n == 0 {
        return Some(Vec::new());
    }
    let mut d = d.to_vec();
    let mut e: Vec<f64> = e.iter().copied().chain(std::iter::once(0.0)).collect();
    // last row of the accumulated rotation matrix
    let mut z = vec![0.0; n];
    z[n - 1] = 1.0;

    let eps = f64::EPSILON;
    let mut f = 0.0;
    let mut tst1: f64 = 0.0;
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n - 1 && e[m].abs() > eps * tst1 {
            m += 1;
        }
        if m > l {
            let mut iter = 0;
            loop {
                iter += 1;
                if iter > 60 {
                    return None;
                }
                let g = d[l];
                let mut p = (d[l + 1] - g) / (2.0 * e[l]);
                let mut r = p.hypot(1.0);
                if p < 0.0 {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for di in d.iter_mut().skip(l + 2) {
                    *di -= h;
                }
                f += h;

                p = d[m];
                let mut c = 1.0;
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = 0.0;
                let mut s2 = 0.0;
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    let g = c * e[i];
                    h = c * p;
                    r = p.hypot(e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);
                    let zh = z[i + 1];
                    z[i + 1] = s * z[i] + c * zh;
                    z[i] = c * z[i] - s * zh;
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;
                if e[l].abs() <= eps * tst1 {
                    break;
                }
            }
        }
        d[l] += f;
        e[l] = 0.0;
    }
    let mut out: Vec<(f64, f64)> = d.into_iter().zip(z).collect();
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    Some(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;
    use proptest::prelude::*;

    fn dense(d: &[f64], e: &[f64]) -> DMatrix<f64> {
        let n = d.len();
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = d[i];
            if i + 1 < n {
                m[(i, i + 1)] = e[i];
                m[(i + 1, i)] = e[i];
            }
        }
        m
    }

    #[test]
    fn two_by_two() {
        let out = tridiag_eigen(&[2.0, 2.0], &[1.0]).unwrap();
        assert!((out[0].0 - 1.0).abs() < 1e-14);
        assert!((out[1].0 - 3.0).abs() < 1e-14);
        assert!((out[0].1.abs() - 0.5f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn single_entry() {
        assert_eq!(tridiag_eigen(&[4.0], &[]).unwrap(), vec![(4.0, 1.0)]);
    }

    proptest! {
        #[test]
        fn matches_dense_oracle(
            d in prop::collection::vec(-10.0f64..10.0, 2..40),
            e_raw in prop::collection::vec(-5.0f64..5.0, 40),
        ) {
            let n = d.len();
            let e = &e_raw[..n - 1];
            let got = tridiag_eigen(&d, e).unwrap();
            let eig = nalgebra::SymmetricEigen::new(dense(&d, e));
            let mut want: Vec<(f64, f64)> = (0..n)
                .map(|k| (eig.eigenvalues[k], eig.eigenvectors[(n - 1, k)]))
                .collect();
            want.sort_by(|a, b| a.0.total_cmp(&b.0));
            let scale = d.iter().chain(e).map(|v| v.abs()).fold(1.0, f64::max);
            for (g, w) in got.iter().zip(&want) {
                prop_assert!((g.0 - w.0).abs() < 1e-12 * scale * n as f64);
            }
            // last components squared sum to one across eigenvectors
            let ss: f64 = got.iter().map(|g| g.1 * g.1).sum();
            prop_assert!((ss - 1.0).abs() < 1e-10);
            // for well separated eigenvalues the last components agree up to sign
            for k in 0..n {
                let gap = (0..n).filter(|&j| j != k).map(|j| (want[j].0 - want[k].0).abs()).fold(f64::INFINITY, f64::min);
                if gap > 1e-3 * scale {
                    prop_assert!((got[k].1.abs() - want[k].1.abs()).abs() < 1e-7);
                }
            }
        }
    }
}
