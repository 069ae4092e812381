//! Overcomplete non-negative dictionary learning and feature extraction.
//!
//! Training alternates exact non-negative least-squares solves for the
//! loadings `Z` and the atoms `D` so that `||A − Z D||_F` never increases.
//! Extraction solves one NNLS problem per activation row against a fixed
//! dictionary.

use std::path::{Path, PathBuf};

use log::warn;
use nalgebra::{Cholesky, DMatrix, DVector};
use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::acts_io::{read_dump, write_dump, ActivationDump, Branch};
use crate::error::{Error, Result};
use crate::numkit::argmax;

pub const DEFAULT_TOL: f64 = 1e-4;
pub const DEFAULT_MAX_ITER: usize = 500;
/// Features per class used to size the dictionary by default.
pub const FEATURES_PER_CLASS: usize = 10;
/// Largest atom count solved with the active-set method; above it projected gradient is used.
pub const ACTIVE_SET_MAX_K: usize = 64;
/// KKT tolerance for NNLS, relative to `||D aᵀ||_∞`.
pub const KKT_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub tol: f64,
    pub max_iter: usize,
    pub seed: u64,
    pub final_objective: f64,
    pub iterations: usize,
    pub objective_history: Vec<f64>,
    /// Atom indices (pre-pruning numbering) removed because they collapsed to zero.
    pub pruned_atoms: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dictionary {
    /// `k x d`, non-negative, no all-zero rows.
    pub atoms: Array2<f64>,
    pub training_meta: Option<TrainingMeta>,
}

impl Dictionary {
    pub fn new(atoms: Array2<f64>) -> Result<Self> {
        let dict = Dictionary { atoms, training_meta: None };
        dict.validate()?;
        Ok(dict)
    }

    pub fn k(&self) -> usize {
        self.atoms.nrows()
    }

    pub fn d(&self) -> usize {
        self.atoms.ncols()
    }

    pub fn is_overcomplete(&self) -> bool {
        self.k() > self.d()
    }

    pub fn validate(&self) -> Result<()> {
        if self.k() == 0 || self.d() == 0 {
            return Err(Error::Validation("dictionary is empty".into()));
        }
        if self.atoms.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Validation("dictionary atoms must be finite and non-negative".into()));
        }
        if let Some(i) = self.atoms.rows().into_iter().position(|r| r.iter().all(|&v| v == 0.0)) {
            return Err(Error::Validation(format!("dictionary atom {i} is all zero")));
        }
        Ok(())
    }

    /// `D Dᵀ`, the Gram matrix shared by every extraction row.
    pub fn gram(&self) -> Array2<f64> {
        self.atoms.dot(&self.atoms.t())
    }

    pub fn sidecar_path(path: &Path) -> PathBuf {
        path.with_extension("json")
    }

    /// Writes atoms as an ACTS matrix and training metadata as a JSON sidecar.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let ids = (0..self.k() as u64).collect();
        let dump = ActivationDump::from_f64("dictionary", Branch::Combined, 0, &self.atoms, ids)?;
        write_dump(&dump, path)?;
        let sidecar = Self::sidecar_path(path);
        let text = serde_json::to_string_pretty(&Sidecar { k: self.k(), d: self.d(), training_meta: self.training_meta.clone() })?;
        std::fs::write(&sidecar, text + "\n").map_err(|e| Error::io(&sidecar, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let dump = read_dump(path)?;
        let sidecar = Self::sidecar_path(path);
        let training_meta = if sidecar.is_file() {
            let text = std::fs::read_to_string(&sidecar).map_err(|e| Error::io(&sidecar, e))?;
            let meta: Sidecar = serde_json::from_str(&text)?;
            if meta.k != dump.n_samples() || meta.d != dump.n_units() {
                return Err(Error::Corrupt(format!(
                    "{}: sidecar says {}x{}, matrix is {}x{}",
                    sidecar.display(),
                    meta.k,
                    meta.d,
                    dump.n_samples(),
                    dump.n_units()
                )));
            }
            meta.training_meta
        } else {
            None
        };
        let dict = Dictionary { atoms: dump.to_f64(), training_meta };
        dict.validate()?;
        Ok(dict)
    }
}

#[derive(Serialize, Deserialize)]
struct Sidecar {
    k: usize,
    d: usize,
    training_meta: Option<TrainingMeta>,
}

/// Non-negative per-sample feature values.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    /// `n x k`.
    pub values: Array2<f64>,
    pub sample_ids: Vec<u64>,
}

impl FeatureMatrix {
    pub fn new(values: Array2<f64>, sample_ids: Vec<u64>) -> Result<Self> {
        if sample_ids.len() != values.nrows() {
            return Err(Error::Shape(format!(
                "{} sample ids for {} rows",
                sample_ids.len(),
                values.nrows()
            )));
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Validation("feature values must be finite and non-negative".into()));
        }
        Ok(FeatureMatrix { values, sample_ids })
    }

    pub fn n_samples(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.values.ncols()
    }

    pub fn column(&self, feature: usize) -> ArrayView1<'_, f64> {
        self.values.column(feature)
    }

    pub fn save(&self, path: impl AsRef<Path>, epoch: u64) -> Result<()> {
        let dump = ActivationDump::from_f64("features", Branch::Combined, epoch, &self.values, self.sample_ids.clone())?;
        write_dump(&dump, path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let dump = read_dump(path)?;
        FeatureMatrix::new(dump.to_f64(), dump.sample_ids)
    }
}

/// Largest KKT violation of `min ½zᵀQz − bᵀz, z ≥ 0` at `z`.
pub fn kkt_violation(gram: ArrayView2<f64>, b: ArrayView1<f64>, z: ArrayView1<f64>) -> f64 {
    let grad = gram.dot(&z) - &b;
    z.iter()
        .zip(&grad)
        .map(|(&zi, &g)| if zi > 0.0 { g.abs() } else { (-g).max(0.0) })
        .fold(0.0, f64::max)
}

/// Solves `min ||a − z D||²` over `z ≥ 0` in Gram form: `Q = D Dᵀ`, `b = D aᵀ`.
pub fn nnls_gram(gram: ArrayView2<f64>, b: ArrayView1<f64>) -> Array1<f64> {
    if b.len() <= ACTIVE_SET_MAX_K {
        nnls_active_set(gram, b)
    } else {
        nnls_projected_gradient(gram, b, None)
    }
}

fn solve_spd(gram: ArrayView2<f64>, b: ArrayView1<f64>, set: &[usize]) -> Option<Vec<f64>> {
    let p = set.len();
    let sub = DMatrix::from_fn(p, p, |i, j| gram[[set[i], set[j]]]);
    let chol = Cholesky::new(sub)?;
    // reject numerically singular subsystems
    let diag = chol.l_dirty().diagonal();
    let (lo, hi) = diag.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if lo <= 1e-10 * hi {
        return None;
    }
    let rhs = DVector::from_iterator(p, set.iter().map(|&i| b[i]));
    Some(chol.solve(&rhs).iter().copied().collect())
}

/// Lawson–Hanson active-set NNLS on the normal equations.
pub fn nnls_active_set(gram: ArrayView2<f64>, b: ArrayView1<f64>) -> Array1<f64> {
    let k = b.len();
    let mut z = Array1::<f64>::zeros(k);
    let scale = b.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 {
        return z;
    }
    let tol = 1e-11 * scale;
    let mut passive = vec![false; k];
    let mut blocked = vec![false; k];
    let mut w = b.to_owned();

    for _ in 0..(5 * k + 50) {
        let candidate = (0..k)
            .filter(|&j| !passive[j] && !blocked[j])
            .max_by(|&a, &c| w[a].total_cmp(&w[c]).then(c.cmp(&a)));
        let j = match candidate {
            Some(j) if w[j] > tol => j,
            _ => break,
        };
        passive[j] = true;

        let mut singular = false;
        for _ in 0..(3 * k + 10) {
            let set: Vec<usize> = (0..k).filter(|&i| passive[i]).collect();
            let Some(s) = solve_spd(gram, b, &set) else {
                singular = true;
                break;
            };
            if s.iter().all(|&v| v > 0.0) {
                z.fill(0.0);
                for (&i, &v) in set.iter().zip(&s) {
                    z[i] = v;
                }
                break;
            }
            // step toward s until the first passive coordinate hits zero
            let mut alpha = f64::INFINITY;
            for (&i, &si) in set.iter().zip(&s) {
                if si <= 0.0 {
                    alpha = alpha.min(z[i] / (z[i] - si));
                }
            }
            for (&i, &si) in set.iter().zip(&s) {
                z[i] += alpha * (si - z[i]);
            }
            for &i in &set {
                if z[i] <= 1e-15 * scale || (i == j && alpha == 0.0) {
                    z[i] = 0.0;
                    passive[i] = false;
                }
            }
            if !passive[j] {
                break;
            }
        }
        if singular || !passive[j] {
            if singular {
                passive[j] = false;
            }
            blocked[j] = true;
        } else {
            blocked.fill(false);
        }
        w = &b - &gram.dot(&z);
    }
    z
}

fn objective(gram: ArrayView2<f64>, b: ArrayView1<f64>, z: &Array1<f64>) -> f64 {
    0.5 * z.dot(&gram.dot(z)) - b.dot(z)
}

fn largest_eigenvalue(gram: ArrayView2<f64>) -> f64 {
    let k = gram.nrows();
    let mut v = Array1::from_elem(k, 1.0 / (k as f64).sqrt());
    let mut lambda = 0.0;
    for _ in 0..200 {
        let next = gram.dot(&v);
        let norm = next.dot(&next).sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        let estimate = v.dot(&next);
        v = next / norm;
        if (estimate - lambda).abs() <= 1e-10 * estimate.abs() {
            lambda = estimate;
            break;
        }
        lambda = estimate;
    }
    // power iteration underestimates; the trace bound caps the safety margin
    (lambda * 1.01).min(gram.diag().sum())
}

/// Monotone accelerated projected gradient NNLS with step `1/L`.
pub fn nnls_projected_gradient(gram: ArrayView2<f64>, b: ArrayView1<f64>, warm: Option<ArrayView1<f64>>) -> Array1<f64> {
    let k = b.len();
    let scale = b.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 {
        return Array1::zeros(k);
    }
    let lipschitz = largest_eigenvalue(gram);
    if lipschitz <= 0.0 {
        return Array1::zeros(k);
    }
    let target = 0.1 * KKT_TOL * scale;
    let mut z = warm.map(|w| w.mapv(|v| v.max(0.0))).unwrap_or_else(|| Array1::zeros(k));
    let mut f = objective(gram, b, &z);
    let mut y = z.clone();
    let mut t = 1.0f64;
    let max_iter = 50_000;
    for it in 0..max_iter {
        let grad = gram.dot(&y) - &b;
        let next = (&y - &(grad / lipschitz)).mapv(|v| v.max(0.0));
        let f_next = objective(gram, b, &next);
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        if f_next > f {
            // restart momentum from the last accepted point
            y = z.clone();
            t = 1.0;
            continue;
        }
        y = &next + &((&next - &z) * ((t - 1.0) / t_next));
        t = t_next;
        z = next;
        f = f_next;
        if it % 10 == 0 && kkt_violation(gram, b, z.view()) <= target {
            return z;
        }
    }
    warn!("projected-gradient NNLS hit {max_iter} iterations before reaching KKT tolerance");
    z
}

/// Extracts features for every row of `a` (`m x d`) against `dict`.
pub fn nnls_extract(dict: &Dictionary, a: ArrayView2<f64>) -> Result<FeatureMatrix> {
    let values = extract_values(dict, a)?;
    FeatureMatrix::new(values, (0..a.nrows() as u64).collect())
}

/// Extracts features for a dump, carrying its sample ids.
pub fn extract_dump(dict: &Dictionary, dump: &ActivationDump) -> Result<FeatureMatrix> {
    let values = extract_values(dict, dump.to_f64().view())?;
    FeatureMatrix::new(values, dump.sample_ids.clone())
}

fn extract_values(dict: &Dictionary, a: ArrayView2<f64>) -> Result<Array2<f64>> {
    if a.ncols() != dict.d() {
        return Err(Error::Shape(format!("activations have {} columns, dictionary has {}", a.ncols(), dict.d())));
    }
    let gram = dict.gram();
    let rhs = a.dot(&dict.atoms.t());
    let rows: Vec<Array1<f64>> = (0..a.nrows())
        .into_par_iter()
        .map(|i| nnls_gram(gram.view(), rhs.row(i)))
        .collect();
    let mut values = Array2::zeros((a.nrows(), dict.k()));
    for (mut out, row) in values.rows_mut().into_iter().zip(rows) {
        out.assign(&row);
    }
    Ok(values)
}

fn frobenius_residual(a: ArrayView2<f64>, z: &Array2<f64>, atoms: &Array2<f64>) -> f64 {
    let recon = z.dot(atoms);
    a.iter().zip(&recon).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// Solves every column of `target` against `basis` (`Q = basisᵀ basis`), warm starting from `current`.
fn nnls_block(gram: &Array2<f64>, rhs: &Array2<f64>, current: &Array2<f64>) -> Array2<f64> {
    let k = gram.nrows();
    let cols: Vec<Array1<f64>> = (0..rhs.ncols())
        .into_par_iter()
        .map(|j| {
            if k <= ACTIVE_SET_MAX_K {
                nnls_active_set(gram.view(), rhs.column(j))
            } else {
                nnls_projected_gradient(gram.view(), rhs.column(j), Some(current.column(j)))
            }
        })
        .collect();
    let mut out = Array2::zeros((k, rhs.ncols()));
    for (mut col, solved) in out.columns_mut().into_iter().zip(cols) {
        col.assign(&solved);
    }
    out
}

/// Learns `a ≈ Z D` with `Z, D ≥ 0` by alternating exact NNLS block updates.
pub fn nmf_fit(a: ArrayView2<f64>, k: usize, tol: f64, max_iter: usize, seed: u64) -> Result<(FeatureMatrix, Dictionary)> {
    let (n, d) = a.dim();
    if k == 0 {
        return Err(Error::Argument("k must be at least 1".into()));
    }
    if n * d < k {
        return Err(Error::Argument(format!("n*d = {} must be >= k = {k}", n * d)));
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::Validation("activations must be finite".into()));
    }
    if let Some(v) = a.iter().find(|v| **v < 0.0) {
        return Err(Error::Domain(format!("NMF input has a negative entry {v}")));
    }
    if !(tol >= 0.0) {
        return Err(Error::Argument(format!("tol must be >= 0, got {tol}")));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mean = a.sum() / (n * d) as f64;
    let high = (mean / k as f64).sqrt();
    let mut draw = |shape: (usize, usize)| Array2::from_shape_simple_fn(shape, || high * rng.random::<f64>());
    let mut z = draw((n, k));
    let mut atoms = draw((k, d));

    let norm_a = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut history = vec![frobenius_residual(a, &z, &atoms)];
    let mut iterations = 0;
    while iterations < max_iter {
        iterations += 1;
        let prev = *history.last().expect("history starts non-empty");

        // Z block: rows of Z solve against atoms
        let gram_d = atoms.dot(&atoms.t());
        let rhs_z = atoms.dot(&a.t());
        z = nnls_block(&gram_d, &rhs_z, &z.t().to_owned()).reversed_axes();

        // D block: columns of D solve against Z
        let gram_z = z.t().dot(&z);
        let rhs_d = z.t().dot(&a);
        atoms = nnls_block(&gram_z, &rhs_d, &atoms);

        let obj = frobenius_residual(a, &z, &atoms);
        if obj > prev * (1.0 + 1e-10) + 1e-300 {
            return Err(Error::Internal(format!(
                "NMF objective increased from {prev} to {obj} at iteration {iterations}"
            )));
        }
        history.push(obj);
        if obj <= 1e-12 * norm_a || prev == 0.0 || (prev - obj) / prev < tol {
            break;
        }
    }

    let keep: Vec<usize> = (0..k).filter(|&i| atoms.row(i).iter().any(|&v| v > 0.0)).collect();
    let pruned: Vec<usize> = (0..k).filter(|i| !keep.contains(i)).collect();
    if !pruned.is_empty() {
        warn!("pruned {} zero atoms from the dictionary: {:?}", pruned.len(), pruned);
    }
    if keep.is_empty() {
        return Err(Error::Degenerate("every dictionary atom collapsed to zero".into()));
    }
    let atoms = atoms.select(Axis(0), &keep);
    let z = z.select(Axis(1), &keep);
    let final_objective = *history.last().expect("non-empty");
    let meta = TrainingMeta {
        tol,
        max_iter,
        seed,
        final_objective,
        iterations,
        objective_history: history,
        pruned_atoms: pruned,
    };
    let dict = Dictionary { atoms, training_meta: Some(meta) };
    dict.validate()?;
    Ok((FeatureMatrix::new(z, (0..n as u64).collect())?, dict))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionReport {
    pub rel_error: f64,
    pub prediction_agreement: Option<f64>,
}

/// Relative reconstruction error, and top-1 agreement through a linear head when given.
pub fn reconstruction_report(
    a: ArrayView2<f64>,
    z: &FeatureMatrix,
    dict: &Dictionary,
    head_weights: Option<ArrayView2<f64>>,
) -> Result<ReconstructionReport> {
    if z.n_features() != dict.k() || a.ncols() != dict.d() || a.nrows() != z.n_samples() {
        return Err(Error::Shape(format!(
            "activations {:?}, features {:?}, dictionary {}x{}",
            a.dim(),
            z.values.dim(),
            dict.k(),
            dict.d()
        )));
    }
    let recon = z.values.dot(&dict.atoms);
    let norm_a = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    let err = a.iter().zip(&recon).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let rel_error = if norm_a > 0.0 { err / norm_a } else if err == 0.0 { 0.0 } else { f64::INFINITY };
    let prediction_agreement = match head_weights {
        None => None,
        Some(w) => {
            if w.nrows() != dict.d() {
                return Err(Error::Shape(format!("head has {} rows, dictionary has {} units", w.nrows(), dict.d())));
            }
            let original = a.dot(&w);
            let rebuilt = recon.dot(&w);
            let agree = original
                .rows()
                .into_iter()
                .zip(rebuilt.rows())
                .filter(|(o, r)| argmax(*o) == argmax(*r))
                .count();
            Some(agree as f64 / a.nrows().max(1) as f64)
        }
    };
    Ok(ReconstructionReport { rel_error, prediction_agreement })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    fn uniform(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_simple_fn((rows, cols), || rng.random::<f64>())
    }

    #[test]
    fn extracts_single_atom_exactly() {
        let dict = Dictionary::new(uniform(3, 5, 1)).unwrap();
        for j in 0..3 {
            let a = dict.atoms.row(j).insert_axis(Axis(0)).to_owned();
            let z = nnls_extract(&dict, a.view()).unwrap();
            for i in 0..3 {
                let expected = if i == j { 1.0 } else { 0.0 };
                assert_abs_diff_eq!(z.values[[0, i]], expected, epsilon = 1e-6);
            }
        }
    }

    #[test]
    fn zero_row_gives_zero_features() {
        let dict = Dictionary::new(uniform(4, 3, 2)).unwrap();
        let z = nnls_extract(&dict, Array2::zeros((1, 3)).view()).unwrap();
        assert!(z.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn extract_shape_error() {
        let dict = Dictionary::new(uniform(4, 3, 2)).unwrap();
        assert!(matches!(nnls_extract(&dict, Array2::zeros((1, 4)).view()), Err(Error::Shape(_))));
    }

    #[test]
    fn active_set_and_projected_gradient_agree() {
        for seed in 0..20 {
            let atoms = uniform(6, 10, seed);
            let a = uniform(1, 10, 100 + seed).mapv(|v| v - 0.3);
            let gram = atoms.dot(&atoms.t());
            let b = atoms.dot(&a.row(0));
            let exact = nnls_active_set(gram.view(), b.view());
            let pg = nnls_projected_gradient(gram.view(), b.view(), None);
            for (x, y) in exact.iter().zip(&pg) {
                assert_abs_diff_eq!(x, y, epsilon = 1e-6);
            }
        }
    }

    #[test]
    fn kkt_holds_for_large_overcomplete_dictionary() {
        let dict = Dictionary::new(uniform(100, 64, 5)).unwrap();
        let a = uniform(5, 64, 6);
        let z = nnls_extract(&dict, a.view()).unwrap();
        let gram = dict.gram();
        for (row, zr) in a.rows().into_iter().zip(z.values.rows()) {
            let b = dict.atoms.dot(&row);
            let scale = b.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            assert!(kkt_violation(gram.view(), b.view(), zr) <= KKT_TOL * scale);
        }
    }

    #[test]
    fn nmf_rank_one() {
        let u = array![1.0, 2.0, 0.5, 3.0];
        let v = array![0.2, 1.0, 4.0];
        let a = u.view().insert_axis(Axis(1)).dot(&v.view().insert_axis(Axis(0)));
        let (z, dict) = nmf_fit(a.view(), 1, DEFAULT_TOL, 200, 0).unwrap();
        let rep = reconstruction_report(a.view(), &z, &dict, None).unwrap();
        assert!(rep.rel_error < 1e-6, "{}", rep.rel_error);
    }

    #[test]
    fn nmf_rejects_negative_input() {
        let a = array![[1.0, -1.0], [0.0, 2.0]];
        assert!(matches!(nmf_fit(a.view(), 1, 1e-4, 10, 0), Err(Error::Domain(_))));
    }

    #[test]
    fn nmf_is_deterministic_and_monotone() {
        let a = uniform(15, 6, 7);
        let (z1, d1) = nmf_fit(a.view(), 4, 1e-6, 100, 3).unwrap();
        let (z2, d2) = nmf_fit(a.view(), 4, 1e-6, 100, 3).unwrap();
        assert_eq!(z1, z2);
        assert_eq!(d1, d2);
        let hist = &d1.training_meta.as_ref().unwrap().objective_history;
        for w in hist.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-10));
        }
        assert!(z1.values.iter().all(|&v| v >= 0.0));
        assert!(d1.atoms.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn reconstruction_exact_when_features_planted() {
        let atoms = uniform(3, 6, 9);
        let dict = Dictionary::new(atoms.clone()).unwrap();
        let planted = uniform(10, 3, 10);
        let a = planted.dot(&atoms);
        let z = nnls_extract(&dict, a.view()).unwrap();
        let head = uniform(6, 4, 11);
        let rep = reconstruction_report(a.view(), &z, &dict, Some(head.view())).unwrap();
        assert!(rep.rel_error < 1e-6);
        assert_eq!(rep.prediction_agreement, Some(1.0));
    }

    #[test]
    fn dictionary_save_load() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("dict.acts");
        let a = uniform(12, 4, 12);
        let (_, dict) = nmf_fit(a.view(), 3, 1e-4, 50, 1).unwrap();
        dict.save(&path).unwrap();
        let back = Dictionary::load(&path).unwrap();
        assert_eq!(back.training_meta, dict.training_meta);
        for (x, y) in back.atoms.iter().zip(&dict.atoms) {
            assert_eq!(*x, (*y as f32) as f64);
        }
    }
}
