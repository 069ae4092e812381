//! Shared numerical kernels.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SVD};
use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Standard deviations below this are treated as zero.
pub const DEGENERATE_STD: f64 = 1e-12;
/// Default relative ridge strength for linear probes.
pub const DEFAULT_LAMBDA_REL: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct Standardized {
    pub data: Array2<f64>,
    pub means: Array1<f64>,
    pub stds: Array1<f64>,
    /// Columns whose std fell under [`DEGENERATE_STD`]; they are zeroed in `data`.
    pub degenerate: Vec<bool>,
}

impl Standardized {
    /// Indices of columns that carry variance.
    pub fn informative_columns(&self) -> Vec<usize> {
        (0..self.degenerate.len()).filter(|&j| !self.degenerate[j]).collect()
    }
}

/// Column-wise centering and scaling to unit population variance.
pub fn standardize(x: ArrayView2<f64>) -> Standardized {
    let n = x.nrows() as f64;
    let means = x.mean_axis(Axis(0)).unwrap_or_else(|| Array1::zeros(x.ncols()));
    let mut data = x.to_owned();
    let mut stds = Array1::zeros(x.ncols());
    let mut degenerate = vec![false; x.ncols()];
    for (j, mut col) in data.axis_iter_mut(Axis(1)).enumerate() {
        col -= means[j];
        let var = col.iter().map(|v| v * v).sum::<f64>() / n;
        let std = var.sqrt();
        stds[j] = std;
        if std < DEGENERATE_STD {
            degenerate[j] = true;
            col.fill(0.0);
        } else {
            col /= std;
        }
    }
    Standardized { data, means, stds, degenerate }
}

/// Centers and scales a vector to unit population variance; `None` if it is constant.
pub fn standardize_vector(z: ArrayView1<f64>) -> Option<Array1<f64>> {
    let n = z.len() as f64;
    let mean = z.sum() / n;
    let var = z.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    (std >= DEGENERATE_STD).then(|| z.mapv(|v| (v - mean) / std))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionFit {
    pub coefficients: Array1<f64>,
    pub r_squared: f64,
    pub residual_sse: f64,
}

enum NormalSolver {
    Cholesky(Cholesky<f64, Dyn>),
    MinNorm(SVD<f64, Dyn, Dyn>),
    Empty,
}

/// A ridge-regularized linear probe with its normal-equation factorization
/// cached, so many targets can be regressed on the same design.
pub struct LinearProbe {
    design: Array2<f64>,
    lambda: f64,
    solver: NormalSolver,
}

impl LinearProbe {
    /// Factorizes `xᵀx + λI` with `λ = lambda_rel · trace(xᵀx) / d`.
    pub fn new(x: Array2<f64>, lambda_rel: f64) -> Result<Self> {
        if !(lambda_rel >= 0.0 && lambda_rel.is_finite()) {
            return Err(Error::Argument(format!("lambda_rel must be >= 0, got {lambda_rel}")));
        }
        let (n, d) = x.dim();
        if n < 2 {
            return Err(Error::Shape(format!("need at least 2 samples, got {n}")));
        }
        if d == 0 {
            return Ok(LinearProbe { design: x, lambda: 0.0, solver: NormalSolver::Empty });
        }
        let gram = x.t().dot(&x);
        let lambda = lambda_rel * gram.diag().sum() / d as f64;
        let mut g = DMatrix::from_fn(d, d, |i, j| gram[[i, j]]);
        for i in 0..d {
            g[(i, i)] += lambda;
        }
        let solver = match Cholesky::new(g.clone()) {
            Some(chol) => NormalSolver::Cholesky(chol),
            None => NormalSolver::MinNorm(SVD::new(g, true, true)),
        };
        Ok(LinearProbe { design: x, lambda, solver })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn n_samples(&self) -> usize {
        self.design.nrows()
    }

    /// Fits `z` and reports R² of the unpenalized residual.
    pub fn fit(&self, z: ArrayView1<f64>) -> Result<RegressionFit> {
        let (n, d) = self.design.dim();
        if z.len() != n {
            return Err(Error::Shape(format!("target has {} rows, design has {n}", z.len())));
        }
        let coefficients = match &self.solver {
            NormalSolver::Empty => Array1::zeros(0),
            solver => {
                let b = self.design.t().dot(&z);
                let rhs = DVector::from_iterator(d, b.iter().copied());
                let w = match solver {
                    NormalSolver::Cholesky(chol) => chol.solve(&rhs),
                    NormalSolver::MinNorm(svd) => {
                        let eps = 1e-12 * svd.singular_values.max();
                        svd.solve(&rhs, eps).map_err(|e| Error::Internal(e.to_string()))?
                    }
                    NormalSolver::Empty => unreachable!(),
                };
                Array1::from_iter(w.iter().copied())
            }
        };
        let prediction = if d == 0 { Array1::zeros(n) } else { self.design.dot(&coefficients) };
        let residual_sse: f64 = z.iter().zip(&prediction).map(|(a, b)| (a - b).powi(2)).sum();
        let mean = z.sum() / n as f64;
        let total_ss: f64 = z.iter().map(|v| (v - mean).powi(2)).sum();
        let r_squared = if total_ss < DEGENERATE_STD {
            0.0
        } else {
            (1.0 - residual_sse / total_ss).clamp(0.0, 1.0)
        };
        Ok(RegressionFit { coefficients, r_squared, residual_sse })
    }
}

/// Ridge regression of `z` on `x`; both are expected to be standardized by the caller.
pub fn ridge_r2(x: ArrayView2<f64>, z: ArrayView1<f64>, lambda_rel: f64) -> Result<RegressionFit> {
    if x.nrows() != z.len() {
        return Err(Error::Shape(format!("x has {} rows, z has {}", x.nrows(), z.len())));
    }
    LinearProbe::new(x.to_owned(), lambda_rel)?.fit(z)
}

/// `H (a aᵀ) H` with `H = I − 11ᵀ/n`.
pub fn centered_gram(a: ArrayView2<f64>) -> Array2<f64> {
    let centered = center_columns(a);
    let gram = centered.dot(&centered.t());
    // symmetrize away round-off
    (&gram + &gram.t()) * 0.5
}

pub fn center_columns(a: ArrayView2<f64>) -> Array2<f64> {
    let means = a.mean_axis(Axis(0)).unwrap_or_else(|| Array1::zeros(a.ncols()));
    &a - &means
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    pub assignments: Vec<usize>,
    pub centroids: Array2<f64>,
    /// Within-cluster SSE after seeding and after every Lloyd iteration.
    pub sse_history: Vec<f64>,
    pub iterations: usize,
}

impl KMeansResult {
    pub fn sse(&self) -> f64 {
        self.sse_history.last().copied().unwrap_or(0.0)
    }
}

fn sq_dist(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

/// Nearest centroid per point, ties to the lowest index, plus the total SSE.
fn assign(points: ArrayView2<f64>, centroids: &Array2<f64>) -> (Vec<usize>, f64) {
    let mut sse = 0.0;
    let assignments = points
        .rows()
        .into_iter()
        .map(|p| {
            let mut best = (0, f64::INFINITY);
            for (c, centroid) in centroids.rows().into_iter().enumerate() {
                let d = sq_dist(p, centroid);
                if d < best.1 {
                    best = (c, d);
                }
            }
            sse += best.1;
            best.0
        })
        .collect();
    (assignments, sse)
}

/// Seeded k-means++ followed by Lloyd iterations.
pub fn kmeans(points: ArrayView2<f64>, n_clusters: usize, seed: u64, max_iter: usize) -> Result<KMeansResult> {
    let (k, dim) = points.dim();
    if n_clusters == 0 || n_clusters > k {
        return Err(Error::Argument(format!("n_clusters = {n_clusters} must be in 1..={k}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut chosen = vec![rng.random_range(0..k)];
    let mut dist: Vec<f64> = points.rows().into_iter().map(|p| sq_dist(p, points.row(chosen[0]))).collect();
    while chosen.len() < n_clusters {
        let total: f64 = dist.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut pick = None;
            for (i, &d) in dist.iter().enumerate() {
                if d > 0.0 {
                    pick = Some(i);
                    if target < d {
                        break;
                    }
                    target -= d;
                }
            }
            pick.expect("positive total implies a positive weight")
        } else {
            // all remaining points coincide with a centroid
            (0..k).find(|i| !chosen.contains(i)).expect("n_clusters <= k")
        };
        chosen.push(next);
        for (i, p) in points.rows().into_iter().enumerate() {
            dist[i] = dist[i].min(sq_dist(p, points.row(next)));
        }
    }
    let mut centroids = points.select(Axis(0), &chosen);

    let (mut assignments, sse) = assign(points, &centroids);
    let mut sse_history = vec![sse];
    let mut iterations = 0;
    while iterations < max_iter {
        iterations += 1;
        let mut sums = Array2::<f64>::zeros((n_clusters, dim));
        let mut counts = vec![0usize; n_clusters];
        for (p, &c) in points.rows().into_iter().zip(&assignments) {
            let mut row = sums.row_mut(c);
            row += &p;
            counts[c] += 1;
        }
        for (c, &count) in counts.iter().enumerate() {
            if count > 0 {
                let mean = &sums.row(c) / count as f64;
                centroids.row_mut(c).assign(&mean);
            }
        }
        let (next, sse) = assign(points, &centroids);
        sse_history.push(sse);
        let converged = next == assignments;
        assignments = next;
        if converged {
            break;
        }
    }
    Ok(KMeansResult { assignments, centroids, sse_history, iterations })
}

/// Ranks starting at 1, ties receive their average rank.
pub fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && x[order[j + 1]] == x[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = rank;
        }
        i = j + 1;
    }
    ranks
}

/// Pearson correlation; 0 when either side has no variance.
pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    if sxx < DEGENERATE_STD || syy < DEGENERATE_STD {
        return 0.0;
    }
    (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankCorrelation {
    pub rho: f64,
    pub p_value: f64,
    pub n_permutations: usize,
}

pub const DEFAULT_PERMUTATIONS: usize = 10_000;

/// Spearman correlation with a two-sided permutation p-value.
pub fn spearman(x: &[f64], y: &[f64], n_permutations: usize, seed: u64) -> Result<RankCorrelation> {
    if x.len() != y.len() {
        return Err(Error::Alignment(format!("{} vs {} observations", x.len(), y.len())));
    }
    if x.len() < 2 {
        return Err(Error::Argument("spearman needs at least 2 observations".into()));
    }
    let rx = average_ranks(x);
    let mut ry = average_ranks(y);
    let rho = pearson(&rx, &ry);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let threshold = rho.abs() - 1e-12;
    let mut hits = 0usize;
    for _ in 0..n_permutations {
        ry.shuffle(&mut rng);
        if pearson(&rx, &ry).abs() >= threshold {
            hits += 1;
        }
    }
    let p_value = (1 + hits) as f64 / (1 + n_permutations) as f64;
    Ok(RankCorrelation { rho, p_value, n_permutations })
}

/// Index of the largest entry, ties to the lowest index.
pub fn argmax(row: ArrayView1<f64>) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

pub fn mean(values: impl IntoIterator<Item = f64>) -> f64 {
    let (sum, count) = values.into_iter().fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
    if count == 0 {
        0.0
    } else {
        sum / count as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_simple_fn((rows, cols), || StandardNormal.sample(&mut rng))
    }

    #[test]
    fn standardize_two_point_and_constant() {
        let s = standardize(array![[1.0, 5.0], [3.0, 5.0]].view());
        assert_eq!(s.data.column(0).to_vec(), vec![-1.0, 1.0]);
        assert_eq!(s.means[0], 2.0);
        assert_eq!(s.stds[0], 1.0);
        assert_eq!(s.data.column(1).to_vec(), vec![0.0, 0.0]);
        assert_eq!(s.degenerate, vec![false, true]);
        let c = standardize(array![[5.0], [5.0], [5.0]].view());
        assert!(c.degenerate[0]);
    }

    #[test]
    fn standardize_random_matrix() {
        let x = gaussian(100, 10, 3).mapv(|v| 4.0 * v + 2.0);
        let s = standardize(x.view());
        for col in s.data.columns() {
            let m = col.sum() / 100.0;
            let v = col.iter().map(|a| a * a).sum::<f64>() / 100.0 - m * m;
            assert!(m.abs() < 1e-10);
            assert!((v - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn ridge_perfect_fit() {
        let x = standardize(gaussian(50, 3, 1).view()).data;
        let z = x.dot(&array![0.5, -2.0, 1.0]);
        let fit = ridge_r2(x.view(), z.view(), 0.0).unwrap();
        assert_abs_diff_eq!(fit.r_squared, 1.0, epsilon = 1e-10);
    }

    #[test]
    fn ridge_noise_has_low_r2() {
        let x = standardize(gaussian(10_000, 1, 4).view()).data;
        let z = standardize_vector(gaussian(10_000, 1, 5).column(0)).unwrap();
        let fit = ridge_r2(x.view(), z.view(), DEFAULT_LAMBDA_REL).unwrap();
        assert!(fit.r_squared < 0.01, "{}", fit.r_squared);
    }

    #[test]
    fn ridge_matches_hand_solved_normal_equations() {
        // x = [[1,0],[0,1],[1,1]], z = [1,2,4]
        // xᵀx = [[2,1],[1,2]], xᵀz = [5,6] → w = [4/3, 7/3]
        let x = array![[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]];
        let z = array![1.0, 2.0, 4.0];
        let fit = ridge_r2(x.view(), z.view(), 0.0).unwrap();
        assert_abs_diff_eq!(fit.coefficients[0], 4.0 / 3.0, epsilon = 1e-8);
        assert_abs_diff_eq!(fit.coefficients[1], 7.0 / 3.0, epsilon = 1e-8);
        // residual [-1/3, -1/3, 1/3]
        assert_abs_diff_eq!(fit.residual_sse, 1.0 / 3.0, epsilon = 1e-10);
    }

    #[test]
    fn ridge_shape_error() {
        let x = Array2::<f64>::zeros((3, 2));
        let z = array![1.0, 2.0];
        assert!(matches!(ridge_r2(x.view(), z.view(), 0.0), Err(Error::Shape(_))));
    }

    #[test]
    fn rank_deficient_design_falls_back_to_min_norm() {
        let base = gaussian(30, 1, 9);
        let mut x = Array2::zeros((30, 2));
        x.column_mut(0).assign(&base.column(0));
        x.column_mut(1).assign(&base.column(0));
        let z = base.column(0).mapv(|v| 2.0 * v);
        let fit = ridge_r2(x.view(), z.view(), 0.0).unwrap();
        assert_abs_diff_eq!(fit.r_squared, 1.0, epsilon = 1e-8);
        assert_abs_diff_eq!(fit.coefficients[0], fit.coefficients[1], epsilon = 1e-8);
    }

    #[test]
    fn r2_non_increasing_in_lambda() {
        let x = standardize(gaussian(40, 5, 11).view()).data;
        let z = standardize_vector((x.column(0).to_owned() + gaussian(40, 1, 12).column(0)).view()).unwrap();
        let mut prev = f64::INFINITY;
        for lambda in [0.0, 1e-6, 1e-3, 1e-1, 1.0, 10.0] {
            let r2 = ridge_r2(x.view(), z.view(), lambda).unwrap().r_squared;
            assert!(r2 <= prev + 1e-12);
            prev = r2;
        }
    }

    #[test]
    fn centered_gram_cases() {
        let ones = Array2::<f64>::ones((4, 1));
        assert!(centered_gram(ones.view()).iter().all(|v| v.abs() < 1e-12));

        // a = [[1,0],[0,1],[1,1],[2,0]]; column means [1, 0.5]
        // centered rows: [0,-.5],[-1,.5],[0,.5],[1,-.5]
        let a = array![[1.0, 0.0], [0.0, 1.0], [1.0, 1.0], [2.0, 0.0]];
        let expected = array![
            [0.25, -0.25, -0.25, 0.25],
            [-0.25, 1.25, 0.25, -1.25],
            [-0.25, 0.25, 0.25, -0.25],
            [0.25, -1.25, -0.25, 1.25]
        ];
        let g = centered_gram(a.view());
        for (x, y) in g.iter().zip(&expected) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-12);
        }

        let theta: f64 = 0.7;
        let q = array![[theta.cos(), -theta.sin()], [theta.sin(), theta.cos()]];
        let g2 = centered_gram(a.dot(&q).view());
        for (x, y) in g.iter().zip(&g2) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-8);
        }
        for row in g.rows() {
            assert!(row.sum().abs() < 1e-8);
        }
    }

    #[test]
    fn centered_gram_is_psd() {
        let a = gaussian(12, 3, 21);
        let g = centered_gram(a.view());
        let m = DMatrix::from_fn(12, 12, |i, j| g[[i, j]]);
        let eig = m.symmetric_eigen();
        assert!(eig.eigenvalues.iter().all(|&l| l >= -1e-8));
    }

    #[test]
    fn kmeans_saturation_and_determinism() {
        let pts = gaussian(7, 2, 2);
        let res = kmeans(pts.view(), 7, 5, 100).unwrap();
        let mut sorted = res.assignments.clone();
        sorted.sort();
        assert_eq!(sorted, (0..7).collect::<Vec<_>>());
        assert!(res.sse() < 1e-20);

        let a = kmeans(pts.view(), 3, 42, 100).unwrap();
        let b = kmeans(pts.view(), 3, 42, 100).unwrap();
        assert_eq!(a.assignments, b.assignments);
        assert!(matches!(kmeans(pts.view(), 8, 0, 10), Err(Error::Argument(_))));
    }

    #[test]
    fn kmeans_separates_blobs() {
        let mut pts = gaussian(40, 2, 8).mapv(|v| 0.1 * v);
        for mut row in pts.rows_mut().into_iter().skip(20) {
            row += &array![50.0, -50.0];
        }
        for seed in 0..10 {
            let res = kmeans(pts.view(), 2, seed, 100).unwrap();
            let first = res.assignments[0];
            assert!(res.assignments[..20].iter().all(|&c| c == first));
            assert!(res.assignments[20..].iter().all(|&c| c != first));
            for w in res.sse_history.windows(2) {
                assert!(w[1] <= w[0] * (1.0 + 1e-12));
            }
        }
    }

    #[test]
    fn average_ranks_handle_ties() {
        assert_eq!(average_ranks(&[3.0, 1.0, 3.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
    }

    #[test]
    fn spearman_constant_side_is_null() {
        let x = [0.1, 0.5, 0.2, 0.9];
        let c = spearman(&x, &[1.0; 4], 1000, 0).unwrap();
        assert_eq!(c.rho, 0.0);
        assert_eq!(c.p_value, 1.0);
        let perfect = spearman(&x, &[-1.0, -5.0, -2.0, -9.0], 1000, 0).unwrap();
        assert_abs_diff_eq!(perfect.rho, -1.0, epsilon = 1e-12);
    }

    #[test]
    fn argmax_ties_low() {
        assert_eq!(argmax(array![0.0, 0.0, 0.0].view()), 0);
        assert_eq!(argmax(array![1.0, 3.0, 3.0].view()), 1);
    }
}
