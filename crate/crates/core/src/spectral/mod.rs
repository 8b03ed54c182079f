//! Graph Laplacians of supply-chain networks, their spectra and related
//! diffusion quantities.

mod lanczos;
mod stats;
mod tridiag;

pub use lanczos::{lambda2_lanczos, LanczosReport, DEFAULT_LANCZOS_TOL};
pub use stats::{network_stats, NetworkStats};

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::panel::{AdoptionPanel, TechId, Year};

/// Largest `n` accepted by [`dense_spectrum`] unless overridden.
pub const DEFAULT_DENSE_CAP: usize = 2000;

/// Undirected weighted edge with `i < j`; weight in millions of currency units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub i: usize,
    pub j: usize,
    pub weight: f64,
}

/// One year's supply-chain graph.
#[derive(Debug, Clone, PartialEq)]
pub struct YearNetwork {
    n: usize,
    edges: Vec<Edge>,
}

impl YearNetwork {
    /// Validates storage invariants: `i < j < n`, each pair at most once,
    /// positive finite weights. Connectivity is checked where it matters.
    pub fn new(n: usize, mut edges: Vec<Edge>) -> Result<Self> {
        for e in &edges {
            if e.i >= e.j || e.j >= n {
                return Err(Error::Input(format!("edge ({}, {}) must satisfy i < j < {n}", e.i, e.j)));
            }
            if !(e.weight > 0.0 && e.weight.is_finite()) {
                return Err(Error::Input(format!("edge ({}, {}) has weight {}", e.i, e.j, e.weight)));
            }
        }
        edges.sort_by_key(|e| (e.i, e.j));
        if let Some(w) = edges.windows(2).find(|w| (w[0].i, w[0].j) == (w[1].i, w[1].j)) {
            return Err(Error::Input(format!("duplicate edge ({}, {})", w[0].i, w[0].j)));
        }
        Ok(Self { n, edges })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Edges sorted by `(i, j)`.
    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    /// Number of connected components.
    pub fn component_count(&self) -> usize {
        let mut parent: Vec<usize> = (0..self.n).collect();
        fn find(p: &mut [usize], mut x: usize) -> usize {
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        let mut count = self.n;
        for e in &self.edges {
            let (a, b) = (find(&mut parent, e.i), find(&mut parent, e.j));
            if a != b {
                parent[a] = b;
                count -= 1;
            }
        }
        count
    }

    pub fn is_connected(&self) -> bool {
        self.n > 0 && self.component_count() == 1
    }

    /// Network over (possibly repeated) node indices. Copies of one node are
    /// distinct nodes and are never joined to each other.
    pub fn select(&self, idx: &[usize]) -> Self {
        let mut copies = vec![Vec::new(); self.n];
        for (new, &old) in idx.iter().enumerate() {
            copies[old].push(new);
        }
        let mut edges = Vec::new();
        for e in &self.edges {
            for &a in &copies[e.i] {
                for &b in &copies[e.j] {
                    edges.push(Edge { i: a.min(b), j: a.max(b), weight: e.weight });
                }
            }
        }
        edges.sort_by_key(|e| (e.i, e.j));
        Self { n: idx.len(), edges }
    }
}

/// Edge-weight multipliers by the adoption status of the endpoints.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MultiplierScheme {
    pub both_adopted: f64,
    pub one_adopted: f64,
    pub neither: f64,
}

impl Default for MultiplierScheme {
    fn default() -> Self {
        Self { both_adopted: 1.0, one_adopted: 0.5, neither: 0.1 }
    }
}

impl MultiplierScheme {
    pub fn new(both_adopted: f64, one_adopted: f64, neither: f64) -> Result<Self> {
        let m = Self { both_adopted, one_adopted, neither };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if 0.0 < self.neither && self.neither <= self.one_adopted && self.one_adopted <= self.both_adopted {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "multipliers must satisfy 0 < neither <= one <= both, got {} / {} / {}",
                self.neither, self.one_adopted, self.both_adopted
            )))
        }
    }

    pub fn factor(&self, a: bool, b: bool) -> f64 {
        match (a, b) {
            (true, true) => self.both_adopted,
            (false, false) => self.neither,
            _ => self.one_adopted,
        }
    }
}

/// Reweight every edge by the adoption status of its endpoints in `year`.
pub fn tech_weighted_network(
    net: &YearNetwork,
    panel: &AdoptionPanel,
    tech: TechId,
    year: Year,
    m: &MultiplierScheme,
) -> Result<YearNetwork> {
    if net.n() != panel.n_firms() {
        return Err(Error::Input(format!("network has {} nodes but panel has {} firms", net.n(), panel.n_firms())));
    }
    if !panel.covers(year) {
        return Err(Error::Input(format!("panel does not cover {year}")));
    }
    m.validate()?;
    Ok(reweight(net, panel.year_slice(tech, year), m))
}

pub(crate) fn reweight(net: &YearNetwork, adopted: &[bool], m: &MultiplierScheme) -> YearNetwork {
    let edges =
        net.edges.iter().map(|e| Edge { weight: e.weight * m.factor(adopted[e.i], adopted[e.j]), ..*e }).collect();
    YearNetwork { n: net.n, edges }
}

/// Graph Laplacian `L = D - A` in compressed sparse row form.
#[derive(Debug, Clone, PartialEq)]
pub struct LaplacianMatrix {
    n: usize,
    diag: Vec<f64>,
    row_ptr: Vec<usize>,
    col: Vec<usize>,
    // off-diagonal entries, i.e. -w_ij
    val: Vec<f64>,
}

impl LaplacianMatrix {
    /// Build from weighted pairs without any connectivity check. Repeated
    /// pairs accumulate.
    pub fn from_weighted_pairs(n: usize, pairs: &[(usize, usize, f64)]) -> Self {
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        let mut diag = vec![0.0; n];
        for &(i, j, w) in pairs {
            assert!(i != j && i < n && j < n, "bad pair ({i}, {j})");
            rows[i].push((j, -w));
            rows[j].push((i, -w));
            diag[i] += w;
            diag[j] += w;
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col = Vec::new();
        let mut val = Vec::new();
        row_ptr.push(0);
        for mut r in rows {
            r.sort_by_key(|x| x.0);
            for (c, v) in r {
                if col.len() > *row_ptr.last().unwrap() && *col.last().unwrap() == c {
                    *val.last_mut().unwrap() += v;
                } else {
                    col.push(c);
                    val.push(v);
                }
            }
            row_ptr.push(col.len());
        }
        Self { n, diag, row_ptr, col, val }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn diagonal(&self) -> &[f64] {
        &self.diag
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if i == j {
            return self.diag[i];
        }
        let (a, b) = (self.row_ptr[i], self.row_ptr[i + 1]);
        match self.col[a..b].binary_search(&j) {
            Ok(k) => self.val[a + k],
            Err(_) => 0.0,
        }
    }

    /// `y = L x`.
    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        for i in 0..self.n {
            let mut s = self.diag[i] * x[i];
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                s += self.val[k] * x[self.col[k]];
            }
            y[i] = s;
        }
    }

    pub fn mul(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.matvec(x, &mut y);
        y
    }

    /// Largest absolute row sum, an upper bound on the spectral radius.
    pub fn max_abs_row_sum(&self) -> f64 {
        (0..self.n)
            .map(|i| {
                self.diag[i].abs() + self.val[self.row_ptr[i]..self.row_ptr[i + 1]].iter().map(|v| v.abs()).sum::<f64>()
            })
            .fold(0.0, f64::max)
    }

    /// Largest absolute entry.
    pub fn max_abs_entry(&self) -> f64 {
        self.diag.iter().chain(&self.val).map(|v| v.abs()).fold(0.0, f64::max)
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            diag: self.diag.iter().map(|v| v * c).collect(),
            val: self.val.iter().map(|v| v * c).collect(),
            ..self.clone()
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            m[(i, i)] = self.diag[i];
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                m[(i, self.col[k])] = self.val[k];
            }
        }
        m
    }
}

/// Laplacian of a connected network.
pub fn build_laplacian(net: &YearNetwork) -> Result<LaplacianMatrix> {
    if !net.is_connected() {
        return Err(Error::Connectivity(format!(
            "network over {} nodes has {} components",
            net.n(),
            net.component_count()
        )));
    }
    let pairs: Vec<(usize, usize, f64)> = net.edges.iter().map(|e| (e.i, e.j, e.weight)).collect();
    Ok(LaplacianMatrix::from_weighted_pairs(net.n, &pairs))
}

/// Full eigendecomposition, eigenvalues ascending.
#[derive(Debug, Clone)]
pub struct LaplacianSpectrum {
    pub eigenvalues: Vec<f64>,
    /// Column `k` pairs with `eigenvalues[k]`.
    pub eigenvectors: Option<DMatrix<f64>>,
}

impl LaplacianSpectrum {
    pub fn lambda2(&self) -> f64 {
        self.eigenvalues.get(1).copied().unwrap_or(0.0)
    }

    /// Number of eigenvalues below `tol`, which equals the component count.
    pub fn zero_multiplicity(&self, tol: f64) -> usize {
        self.eigenvalues.iter().filter(|&&l| l < tol).count()
    }

    /// True when zero is a repeated eigenvalue.
    pub fn disconnected(&self) -> bool {
        self.zero_multiplicity(1e-8) > 1
    }
}

/// Dense symmetric eigendecomposition. Accepts any Laplacian, connected or not.
pub fn dense_spectrum(l: &LaplacianMatrix, cap: usize) -> Result<LaplacianSpectrum> {
    if l.n() > cap {
        return Err(Error::Size { n: l.n(), cap });
    }
    let eig = SymmetricEigen::new(l.to_dense());
    let mut order: Vec<usize> = (0..l.n()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let eigenvalues = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let vectors = DMatrix::from_fn(l.n(), l.n(), |r, c| eig.eigenvectors[(r, order[c])]);
    Ok(LaplacianSpectrum { eigenvalues, eigenvectors: Some(vectors) })
}

/// Time for network diffusion to come within `epsilon` of equilibrium.
pub fn mixing_time(lambda2: f64, epsilon: f64) -> Result<f64> {
    if !(lambda2 > 0.0) {
        return Err(Error::Domain(format!("lambda2 = {lambda2}: mixing time is infinite for a disconnected network")));
    }
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::Domain(format!("epsilon = {epsilon} outside (0, 1)")));
    }
    Ok((1.0 / epsilon).ln() / lambda2)
}

/// Exact solution of `du/dt = -L u` by mode decomposition.
pub fn diffuse_modes(spectrum: &LaplacianSpectrum, u0: &[f64], t: f64) -> Result<Vec<f64>> {
    let v =
        spectrum.eigenvectors.as_ref().ok_or_else(|| Error::Input("mode decomposition needs eigenvectors".into()))?;
    let n = v.nrows();
    if u0.len() != n {
        return Err(Error::Input(format!("state has {} entries, spectrum {}", u0.len(), n)));
    }
    let mut out = vec![0.0; n];
    for k in 0..n {
        let col = v.column(k);
        let c: f64 = col.iter().zip(u0).map(|(a, b)| a * b).sum();
        let decay = (-spectrum.eigenvalues[k].max(0.0) * t).exp();
        for (o, &x) in out.iter_mut().zip(col.iter()) {
            *o += c * decay * x;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn net(n: usize, e: &[(usize, usize, f64)]) -> YearNetwork {
        YearNetwork::new(n, e.iter().map(|&(i, j, weight)| Edge { i, j, weight }).collect()).unwrap()
    }

    fn p3() -> YearNetwork {
        net(3, &[(0, 1, 1.0), (1, 2, 1.0)])
    }

    fn complete(n: usize) -> YearNetwork {
        let mut e = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                e.push((i, j, 1.0));
            }
        }
        net(n, &e)
    }

    pub(crate) fn random_connected(rng: &mut ChaCha8Rng, n: usize, extra: usize) -> YearNetwork {
        let mut set = std::collections::BTreeMap::new();
        for v in 1..n {
            let u = rng.random_range(0..v);
            set.insert((u, v), rng.random_range(0.1..10.0));
        }
        for _ in 0..extra {
            let a = rng.random_range(0..n);
            let b = rng.random_range(0..n);
            if a != b {
                set.insert((a.min(b), a.max(b)), rng.random_range(0.1..10.0));
            }
        }
        YearNetwork::new(n, set.into_iter().map(|((i, j), weight)| Edge { i, j, weight }).collect()).unwrap()
    }

    #[test]
    fn network_rejects_bad_edges() {
        assert!(YearNetwork::new(3, vec![Edge { i: 1, j: 0, weight: 1.0 }]).is_err());
        assert!(YearNetwork::new(3, vec![Edge { i: 0, j: 1, weight: 0.0 }]).is_err());
        assert!(YearNetwork::new(2, vec![Edge { i: 0, j: 2, weight: 1.0 }]).is_err());
        let dup = vec![Edge { i: 0, j: 1, weight: 1.0 }, Edge { i: 0, j: 1, weight: 2.0 }];
        assert!(YearNetwork::new(2, dup).is_err());
    }

    #[test]
    fn laplacian_examples() {
        let l = build_laplacian(&p3()).unwrap().to_dense();
        let want = DMatrix::from_row_slice(3, 3, &[1.0, -1.0, 0.0, -1.0, 2.0, -1.0, 0.0, -1.0, 1.0]);
        assert_eq!(l, want);
        let l = build_laplacian(&net(2, &[(0, 1, 5.0)])).unwrap().to_dense();
        assert_eq!(l, DMatrix::from_row_slice(2, 2, &[5.0, -5.0, -5.0, 5.0]));
        let split = net(4, &[(0, 1, 1.0), (2, 3, 1.0)]);
        assert!(matches!(build_laplacian(&split), Err(Error::Connectivity(_))));
    }

    #[test]
    fn quadratic_form_matches_edge_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let g = random_connected(&mut rng, 10, 15);
        let l = build_laplacian(&g).unwrap();
        for i in 0..10 {
            let s: f64 = l.diag[i] + l.val[l.row_ptr[i]..l.row_ptr[i + 1]].iter().sum::<f64>();
            assert!(s.abs() < 1e-12);
        }
        for _ in 0..100 {
            let x: Vec<f64> = (0..10).map(|_| rng.random_range(-1.0..1.0)).collect();
            let lhs: f64 = x.iter().zip(l.mul(&x)).map(|(a, b)| a * b).sum();
            let rhs: f64 = g.edges().iter().map(|e| e.weight * (x[e.i] - x[e.j]).powi(2)).sum();
            assert!((lhs - rhs).abs() < 1e-10 * rhs.max(1.0));
        }
    }

    #[test]
    fn dense_examples() {
        let s = dense_spectrum(&build_laplacian(&p3()).unwrap(), DEFAULT_DENSE_CAP).unwrap();
        for (a, b) in s.eigenvalues.iter().zip([0.0, 1.0, 3.0]) {
            assert!((a - b).abs() < 1e-12);
        }
        let s = dense_spectrum(&build_laplacian(&complete(4)).unwrap(), DEFAULT_DENSE_CAP).unwrap();
        for (a, b) in s.eigenvalues.iter().zip([0.0, 4.0, 4.0, 4.0]) {
            assert!((a - b).abs() < 1e-12);
        }
        let raw = LaplacianMatrix::from_weighted_pairs(4, &[(0, 1, 1.0), (2, 3, 1.0)]);
        let s = dense_spectrum(&raw, DEFAULT_DENSE_CAP).unwrap();
        assert!(s.lambda2().abs() < 1e-12);
        assert!(s.disconnected());
        assert_eq!(s.zero_multiplicity(1e-8), 2);
        assert!(matches!(dense_spectrum(&raw, 3), Err(Error::Size { n: 4, cap: 3 })));
    }

    #[test]
    fn multiplier_examples() {
        let m = MultiplierScheme::default();
        let mut panel = AdoptionPanel::new(3, 2010, 2010, vec!["t".into()]).unwrap();
        panel.set(0, 2010, 0, true);
        panel.set(0, 2010, 1, true);
        let g = net(3, &[(0, 1, 200.0), (1, 2, 40.0)]);
        let w = tech_weighted_network(&g, &panel, 0, 2010, &m).unwrap();
        assert_eq!(w.edges()[0].weight, 200.0);
        assert_eq!(w.edges()[1].weight, 20.0);
        assert!(MultiplierScheme::new(1.0, 0.05, 0.1).is_err());
        assert!(MultiplierScheme::new(1.0, 0.5, 0.0).is_err());
        let other = AdoptionPanel::new(4, 2010, 2010, vec!["t".into()]).unwrap();
        assert!(tech_weighted_network(&g, &other, 0, 2010, &m).is_err());
    }

    #[test]
    fn no_adopters_scales_lambda2_by_neither() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g = random_connected(&mut rng, 30, 40);
        let panel = AdoptionPanel::new(30, 2010, 2010, vec!["t".into()]).unwrap();
        let w = tech_weighted_network(&g, &panel, 0, 2010, &MultiplierScheme::default()).unwrap();
        let base = dense_spectrum(&build_laplacian(&g).unwrap(), 100).unwrap().lambda2();
        let low = dense_spectrum(&build_laplacian(&w).unwrap(), 100).unwrap().lambda2();
        assert!((low - 0.1 * base).abs() < 1e-10 * base);
    }

    #[test]
    fn mixing_time_examples() {
        assert!((mixing_time(1.0, (-1.0f64).exp()).unwrap() - 1.0).abs() < 1e-15);
        let e = (-1.0f64).exp();
        assert!((mixing_time(21.61, e).unwrap() - 0.046).abs() < 5e-4);
        let drop = 1.0 - mixing_time(21.61, 0.05).unwrap() / mixing_time(5.22, 0.05).unwrap();
        assert!((drop - 0.758).abs() < 1e-3);
        assert!(mixing_time(0.0, 0.5).is_err());
        assert!(mixing_time(1.0, 1.0).is_err());
    }

    #[test]
    fn modes_trivial_cases() {
        let s = dense_spectrum(&build_laplacian(&p3()).unwrap(), 10).unwrap();
        let c = diffuse_modes(&s, &[0.3, 0.3, 0.3], 5.0).unwrap();
        assert!(c.iter().all(|v| (v - 0.3).abs() < 1e-12));
        let u0 = [0.2, 0.9, 0.4];
        let z = diffuse_modes(&s, &u0, 0.0).unwrap();
        assert!(z.iter().zip(u0).all(|(a, b)| (a - b).abs() < 1e-12));
        let inf = diffuse_modes(&s, &u0, 200.0).unwrap();
        assert!(inf.iter().all(|v| (v - 0.5).abs() < 1e-10));
    }

    #[test]
    fn modes_match_fine_euler() {
        let l = build_laplacian(&p3()).unwrap();
        let s = dense_spectrum(&l, 10).unwrap();
        let exact = diffuse_modes(&s, &[1.0, 0.0, 0.0], 1.0).unwrap();
        let mut u = vec![1.0, 0.0, 0.0];
        let dt = 1e-4;
        for _ in 0..10_000 {
            let lu = l.mul(&u);
            for (x, d) in u.iter_mut().zip(lu) {
                *x -= dt * d;
            }
        }
        for (a, b) in exact.iter().zip(&u) {
            assert!((a - b).abs() < 1e-3);
        }
    }

    #[test]
    fn select_duplicates_without_self_edges() {
        let g = net(3, &[(0, 1, 2.0), (1, 2, 3.0)]);
        let s = g.select(&[1, 1, 0]);
        assert_eq!(s.n(), 3);
        // copies of node 1 (0 and 1) each connect to the copy of node 0 (2)
        let pairs: Vec<(usize, usize)> = s.edges().iter().map(|e| (e.i, e.j)).collect();
        assert_eq!(pairs, vec![(0, 2), (1, 2)]);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn proposition_one_suite(seed in any::<u64>(), n in 3usize..40) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let g = random_connected(&mut rng, n, n);
            let l = build_laplacian(&g).unwrap();
            let d = l.to_dense();
            prop_assert_eq!(&d, &d.transpose());
            let ones = vec![1.0; n];
            prop_assert!(l.mul(&ones).iter().all(|v| v.abs() < 1e-12));
            let s = dense_spectrum(&l, 100).unwrap();
            prop_assert!(s.eigenvalues[0].abs() < 1e-10);
            prop_assert!(s.eigenvalues.iter().all(|&v| v >= -1e-10));
            prop_assert_eq!(s.zero_multiplicity(1e-8), 1);
            for _ in 0..50 {
                let mut x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
                let q: f64 = x.iter().zip(l.mul(&x)).map(|(a, b)| a * b).sum();
                prop_assert!(q >= -1e-10);
                let mean = x.iter().sum::<f64>() / n as f64;
                x.iter_mut().for_each(|v| *v -= mean);
                let q: f64 = x.iter().zip(l.mul(&x)).map(|(a, b)| a * b).sum();
                let xx: f64 = x.iter().map(|v| v * v).sum();
                prop_assert!(q / xx >= s.lambda2() - 1e-9);
            }
        }

        #[test]
        fn spectral_reconstruction(seed in any::<u64>(), n in 2usize..30) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let l = build_laplacian(&random_connected(&mut rng, n, n)).unwrap();
            let s = dense_spectrum(&l, 100).unwrap();
            let v = s.eigenvectors.as_ref().unwrap();
            let lam = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(s.eigenvalues.clone()));
            let rec = v * lam * v.transpose();
            prop_assert!((rec - l.to_dense()).amax() < 1e-8 * l.max_abs_entry().max(1.0));
            for k in 0..n {
                let r = l.to_dense() * v.column(k) - v.column(k) * s.eigenvalues[k];
                prop_assert!(r.norm() <= 1e-8 * l.max_abs_entry() * n as f64);
            }
        }

        #[test]
        fn weight_increase_never_lowers_eigenvalues(seed in any::<u64>(), n in 3usize..25, bump in 0.0f64..5.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let g = random_connected(&mut rng, n, n);
            let k = rng.random_range(0..g.edges().len());
            let mut edges = g.edges().to_vec();
            edges[k].weight += bump;
            let h = YearNetwork::new(n, edges).unwrap();
            let a = dense_spectrum(&build_laplacian(&g).unwrap(), 100).unwrap();
            let b = dense_spectrum(&build_laplacian(&h).unwrap(), 100).unwrap();
            for (x, y) in a.eigenvalues.iter().zip(&b.eigenvalues) {
                prop_assert!(*y >= *x - 1e-9 * x.abs().max(1.0));
            }
        }

        #[test]
        fn lambda2_nondecreasing_in_adopters(seed in any::<u64>(), n in 4usize..25) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let g = random_connected(&mut rng, n, n);
            let mut panel = AdoptionPanel::new(n, 2010, 2010, vec!["t".into()]).unwrap();
            let m = MultiplierScheme::default();
            let mut prev: f64 = 0.0;
            let mut order: Vec<usize> = (0..n).collect();
            for i in (1..n).rev() {
                order.swap(i, rng.random_range(0..=i));
            }
            for &f in &order {
                panel.set(0, 2010, f, true);
                let w = tech_weighted_network(&g, &panel, 0, 2010, &m).unwrap();
                let l2 = dense_spectrum(&build_laplacian(&w).unwrap(), 100).unwrap().lambda2();
                prop_assert!(l2 >= prev - 1e-9 * prev.max(1.0));
                prev = l2;
            }
        }

        #[test]
        fn uniform_scaling(seed in any::<u64>(), n in 3usize..25, c in 0.01f64..100.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let l = build_laplacian(&random_connected(&mut rng, n, n)).unwrap();
            let a = dense_spectrum(&l, 100).unwrap();
            let b = dense_spectrum(&l.scaled(c), 100).unwrap();
            for (x, y) in a.eigenvalues.iter().zip(&b.eigenvalues).skip(1) {
                prop_assert!((y - c * x).abs() <= 1e-10 * (c * x).abs());
            }
        }
    }
}
