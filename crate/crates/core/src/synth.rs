//! Synthetic activation dumps with planted features, and brute-force oracles.
//!
//! Feature `f` occupies unit `f` of every layer. From layer
//! `decodable_from_layer` on, and from epoch `emerges_at_epoch` on, that unit
//! carries `snr·g_f + ε`; everywhere else it is standard normal noise. The
//! residual branch carries planted units forward from earlier layers, the main
//! branch carries fresh noise plus the units planted at that layer.

use std::io::Write;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::acts_io::{write_dump, write_head_weights, write_labels, ActivationDump, Branch, DumpEntry, Manifest, PerturbationSet};
use crate::dictionary::{Dictionary, FeatureMatrix};
use crate::error::{Error, Result};
use crate::flow::{DEFAULT_N_NOISE, DEFAULT_SIGMAS};
use crate::numkit::argmax;

pub const ORACLE_NNLS_MAX_K: usize = 16;
pub const ORACLE_GRAD_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedFeature {
    pub feature_id: usize,
    pub decodable_from_layer: usize,
    pub emerges_at_epoch: u64,
    pub snr: f64,
}

impl PlantedFeature {
    pub fn k_expected(&self, n_layers: usize) -> f64 {
        1.0 - (n_layers - self.decodable_from_layer + 1) as f64 / n_layers as f64
    }

    pub fn lambda_expected(&self, n_epochs: u64) -> f64 {
        self.emerges_at_epoch as f64 / n_epochs as f64
    }

    fn present(&self, layer: usize, epoch: u64) -> bool {
        layer >= self.decodable_from_layer && epoch >= self.emerges_at_epoch
    }
}

fn default_classes() -> usize {
    3
}

fn default_sigmas() -> Vec<f64> {
    DEFAULT_SIGMAS.to_vec()
}

fn default_n_noise() -> usize {
    DEFAULT_N_NOISE
}

fn default_label_noise() -> f64 {
    0.1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantSpec {
    pub n_samples: usize,
    /// Units per layer; a single entry applies to every layer.
    pub n_units_per_layer: Vec<usize>,
    pub n_layers: usize,
    pub n_epochs: u64,
    /// Feature `i` must have `feature_id == i`; it is planted on unit `i`.
    pub features: Vec<PlantedFeature>,
    pub seed: u64,
    #[serde(default = "default_classes")]
    pub n_classes: usize,
    /// Noise levels for perturbed final-layer dumps.
    #[serde(default = "default_sigmas")]
    pub sigmas: Vec<f64>,
    #[serde(default = "default_n_noise")]
    pub n_noise: usize,
    /// Mix every layer with a random orthogonal matrix.
    #[serde(default)]
    pub rotate: bool,
    /// Fraction of labels replaced with a random class.
    #[serde(default = "default_label_noise")]
    pub label_noise: f64,
}

impl PlantSpec {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let spec: PlantSpec = serde_json::from_str(&text)
            .map_err(|e| Error::Validation(format!("{}: {e}", path.display())))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn units(&self, layer: usize) -> usize {
        if self.n_units_per_layer.len() == 1 {
            self.n_units_per_layer[0]
        } else {
            self.n_units_per_layer[layer - 1]
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Validation(m));
        if self.n_samples < 3 {
            return bad(format!("n_samples = {} must be at least 3", self.n_samples));
        }
        if self.n_layers == 0 || self.n_epochs == 0 {
            return bad("n_layers and n_epochs must be positive".into());
        }
        if self.n_units_per_layer.len() != 1 && self.n_units_per_layer.len() != self.n_layers {
            return bad(format!(
                "n_units_per_layer has {} entries for {} layers",
                self.n_units_per_layer.len(),
                self.n_layers
            ));
        }
        if self.features.is_empty() {
            return bad("no planted features".into());
        }
        if self.n_classes == 0 {
            return bad("n_classes must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.label_noise) {
            return bad(format!("label_noise {} must lie in [0, 1]", self.label_noise));
        }
        if let Some(s) = self.sigmas.iter().find(|s| !(s.is_finite() && **s > 0.0)) {
            return bad(format!("sigma {s} must be positive"));
        }
        for layer in 1..=self.n_layers {
            if self.units(layer) < self.features.len() {
                return bad(format!("layer {layer} has {} units for {} features", self.units(layer), self.features.len()));
            }
        }
        for (i, f) in self.features.iter().enumerate() {
            if f.feature_id != i {
                return bad(format!("feature at position {i} has id {}", f.feature_id));
            }
            if f.decodable_from_layer < 1 || f.decodable_from_layer > self.n_layers {
                return bad(format!("feature {i}: decodable_from_layer must be in 1..={}", self.n_layers));
            }
            if f.emerges_at_epoch >= self.n_epochs {
                return bad(format!("feature {i}: emerges_at_epoch must be below {}", self.n_epochs));
            }
            if !(f.snr.is_finite() && f.snr > 0.0) {
                return bad(format!("feature {i}: snr must be positive"));
            }
        }
        Ok(())
    }

    fn offset(&self) -> f64 {
        let snr = self.features.iter().map(|f| f.snr).fold(0.0, f64::max);
        8.0 * (snr * snr + 1.0).sqrt()
    }
}

pub fn layer_name(layer: usize) -> String {
    format!("layer{layer}")
}

fn normal(rng: &mut ChaCha8Rng, shape: (usize, usize)) -> Array2<f64> {
    Array2::from_shape_simple_fn(shape, || StandardNormal.sample(&mut *rng))
}

fn random_orthogonal(rng: &mut ChaCha8Rng, d: usize) -> Array2<f64> {
    let g = normal(rng, (d, d));
    let qr = DMatrix::from_row_iterator(d, d, g.iter().copied()).qr();
    let (q, r) = (qr.q(), qr.r());
    // sign-fix so the distribution is Haar
    Array2::from_shape_fn((d, d), |(i, j)| q[(i, j)] * r[(j, j)].signum())
}

struct Finisher {
    offset: f64,
    rotations: Vec<Option<Array2<f64>>>,
}

impl Finisher {
    fn apply(&self, layer: usize, mut x: Array2<f64>) -> Array2<f64> {
        if let Some(q) = &self.rotations[layer - 1] {
            x = x.dot(q);
        }
        x.mapv_inplace(|v| (v + self.offset).max(0.0));
        x
    }
}

/// Writes every dump, the feature/dictionary/head/label files, the ground
/// truth table and `manifest.json` under `out_dir`.
pub fn generate(spec: &PlantSpec, out_dir: impl AsRef<Path>) -> Result<Manifest> {
    spec.validate()?;
    let out = out_dir.as_ref();
    for sub in ["acts", "perturb"] {
        let dir = out.join(sub);
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = spec.n_samples;
    let n_feat = spec.features.len();
    let ids: Vec<u64> = (0..n as u64).collect();

    let latents = normal(&mut rng, (n, n_feat));
    let finisher = Finisher {
        offset: spec.offset(),
        rotations: (1..=spec.n_layers)
            .map(|l| spec.rotate.then(|| random_orthogonal(&mut rng, spec.units(l))))
            .collect(),
    };

    let layers: Vec<String> = (1..=spec.n_layers).map(layer_name).collect();
    let epochs: Vec<u64> = (0..spec.n_epochs).collect();
    let mut manifest = Manifest::new(layers.clone(), epochs.clone());
    let mut final_combined = None;

    for &epoch in &epochs {
        let mut planted = Array2::zeros((n, n_feat));
        for (f, feat) in spec.features.iter().enumerate() {
            let noise: Array1<f64> = Array1::from_shape_simple_fn(n, || StandardNormal.sample(&mut rng));
            planted.column_mut(f).assign(&(&latents.column(f) * feat.snr + noise));
        }
        for layer in 1..=spec.n_layers {
            let d = spec.units(layer);
            let mut residual = normal(&mut rng, (n, d));
            let mut main = normal(&mut rng, (n, d));
            let mut combined = normal(&mut rng, (n, d));
            for (f, feat) in spec.features.iter().enumerate() {
                if !feat.present(layer, epoch) {
                    continue;
                }
                let value = planted.column(f);
                combined.column_mut(f).assign(&value);
                if layer > feat.decodable_from_layer {
                    residual.column_mut(f).assign(&value);
                } else {
                    main.column_mut(f).assign(&value);
                }
            }
            for (branch, data) in [(Branch::Residual, residual), (Branch::Main, main), (Branch::Combined, combined)] {
                let data = finisher.apply(layer, data);
                let rel = PathBuf::from("acts").join(format!("layer{layer}_{branch}_e{epoch}.acts"));
                let dump = ActivationDump::from_f64(layer_name(layer), branch, epoch, &data, ids.clone())?;
                write_dump(&dump, out.join(&rel))?;
                manifest.dumps.push(DumpEntry { layer: layer_name(layer), branch, epoch, path: rel });
                if branch == Branch::Combined && layer == spec.n_layers && epoch + 1 == spec.n_epochs {
                    final_combined = Some(data);
                }
            }
        }
    }
    let final_combined = final_combined.ok_or_else(|| Error::Internal("final layer not generated".into()))?;
    let d_final = final_combined.ncols();
    let final_epoch = spec.n_epochs - 1;

    for &sigma in &spec.sigmas {
        let mut paths = Vec::with_capacity(spec.n_noise);
        for i in 0..spec.n_noise {
            let noisy = (&final_combined + &(normal(&mut rng, (n, d_final)) * sigma)).mapv(|v| v.max(0.0));
            let rel = PathBuf::from("perturb").join(format!("sigma{sigma}_{i}.acts"));
            let dump = ActivationDump::from_f64(layer_name(spec.n_layers), Branch::Combined, final_epoch, &noisy, ids.clone())?;
            write_dump(&dump, out.join(&rel))?;
            paths.push(rel);
        }
        manifest.perturbation_sets.push(PerturbationSet { sigma, paths });
    }

    let raw = ActivationDump::from_f64("latents", Branch::Combined, final_epoch, &latents, ids.clone())?;
    write_dump(&raw, out.join("latents.acts"))?;
    let mut shifted = latents.clone();
    for mut col in shifted.columns_mut() {
        let min = col.fold(f64::INFINITY, |a, &b| a.min(b));
        col -= min;
    }
    let features = FeatureMatrix::new(shifted, ids.clone())?;
    features.save(out.join("features.acts"), final_epoch)?;

    let atoms = Array2::from_shape_fn((n_feat, d_final), |(f, u)| if f == u { 1.0 } else { 0.0 });
    let atoms = match &finisher.rotations[spec.n_layers - 1] {
        Some(q) => atoms.dot(q),
        None => atoms,
    };
    Dictionary { atoms, training_meta: None }.save(out.join("dictionary.acts"))?;

    let head = planted_head(spec, d_final, &mut rng);
    write_head_weights(&head, out.join("head.json"))?;
    let logits = features.values.dot(&head.slice(s![..n_feat, ..]));
    let labels: Vec<(u64, usize)> = logits
        .rows()
        .into_iter()
        .enumerate()
        .map(|(i, row)| {
            let label = if rng.random::<f64>() < spec.label_noise {
                rng.random_range(0..spec.n_classes)
            } else {
                argmax(row)
            };
            (i as u64, label)
        })
        .collect();
    write_labels(&labels, out.join("labels.csv"))?;
    write_ground_truth(spec, &out.join("ground_truth.csv"))?;

    manifest.features = Some("features.acts".into());
    manifest.dictionary = Some("dictionary.acts".into());
    manifest.head_weights = Some("head.json".into());
    manifest.labels = Some("labels.csv".into());
    manifest.metadata.insert("generator".into(), "synth".into());
    manifest.metadata.insert("plant_spec".into(), serde_json::to_value(spec)?);
    manifest.save(out.join("manifest.json"))?;
    manifest.root = out.to_path_buf();
    Ok(manifest)
}

/// Reserved rows scale with `1 − K_expected`, so simple features dominate decisions.
fn planted_head(spec: &PlantSpec, d: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let c = spec.n_classes;
    let mut head = normal(rng, (d, c)) * 0.1;
    for (f, feat) in spec.features.iter().enumerate() {
        let gauss: f64 = StandardNormal.sample(&mut *rng);
        let scale = 1.0 - feat.k_expected(spec.n_layers) + 0.02 * gauss;
        for class in 0..c {
            let jitter: f64 = StandardNormal.sample(&mut *rng);
            head[[f, class]] = scale * (1.0 + 0.05 * jitter);
        }
    }
    head
}

pub fn write_ground_truth(spec: &PlantSpec, path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    let io = |e| Error::io(path, e);
    writeln!(buf, "feature_id,decodable_from_layer,emerges_at_epoch,snr,k_expected,lambda_expected").map_err(io)?;
    for f in &spec.features {
        writeln!(
            buf,
            "{},{},{},{},{},{}",
            f.feature_id,
            f.decodable_from_layer,
            f.emerges_at_epoch,
            f.snr,
            f.k_expected(spec.n_layers),
            f.lambda_expected(spec.n_epochs)
        )
        .map_err(io)?;
    }
    std::fs::write(path, buf).map_err(io)
}

/// Gaussian elimination with partial pivoting; `None` when singular.
fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let m = b.len();
    let scale = a.iter().flatten().fold(0.0f64, |acc, v| acc.max(v.abs())).max(f64::MIN_POSITIVE);
    for col in 0..m {
        let pivot = (col..m).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() <= 1e-13 * scale {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..m {
            let factor = a[row][col] / a[col][col];
            for k in col..m {
                a[row][k] -= factor * a[col][k];
            }
            b[row] -= factor * b[col];
        }
    }
    let mut x = vec![0.0; m];
    for row in (0..m).rev() {
        let tail: f64 = (row + 1..m).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - tail) / a[row][row];
    }
    Some(x)
}

/// Exact NNLS by enumerating every support set of `dict`'s atoms.
pub fn oracle_nnls(dict: &Dictionary, a_row: ArrayView1<f64>) -> Result<Array1<f64>> {
    let (k, d) = dict.atoms.dim();
    if k > ORACLE_NNLS_MAX_K {
        return Err(Error::Budget(format!("oracle enumerates 2^k supports; k = {k} exceeds {ORACLE_NNLS_MAX_K}")));
    }
    if a_row.len() != d {
        return Err(Error::Shape(format!("row has {} units, atoms have {d}", a_row.len())));
    }
    let objective = |z: &Array1<f64>| {
        let r = &a_row - &z.dot(&dict.atoms);
        r.dot(&r)
    };
    let mut best = Array1::zeros(k);
    let mut best_obj = objective(&best);
    for mask in 1u32..(1u32 << k) {
        let support: Vec<usize> = (0..k).filter(|&i| mask & (1 << i) != 0).collect();
        let gram: Vec<Vec<f64>> = support
            .iter()
            .map(|&i| support.iter().map(|&j| dict.atoms.row(i).dot(&dict.atoms.row(j))).collect())
            .collect();
        let rhs: Vec<f64> = support.iter().map(|&i| dict.atoms.row(i).dot(&a_row)).collect();
        let Some(sol) = solve_dense(gram, rhs) else { continue };
        if sol.iter().any(|&v| v < 0.0) {
            continue;
        }
        let mut z = Array1::zeros(k);
        for (&i, v) in support.iter().zip(sol) {
            z[i] = v;
        }
        let obj = objective(&z);
        if obj < best_obj {
            best_obj = obj;
            best = z;
        }
    }
    Ok(best)
}

/// V-information under the Gaussian linear family by direct minimization.
///
/// Minimizes the mean squared error of an affine predictor, normalized by
/// `Var(z)`, with restarted conjugate gradient until the gradient norm drops
/// below [`ORACLE_GRAD_TOL`]. Returns the unclipped `1 − MSE/Var(z)`.
pub fn oracle_vinfo(x: ArrayView2<f64>, z: ArrayView1<f64>) -> Result<f64> {
    let (n, d) = x.dim();
    if z.len() != n {
        return Err(Error::Alignment(format!("{n} rows, {} targets", z.len())));
    }
    if n == 0 {
        return Err(Error::Shape("no samples".into()));
    }
    let nf = n as f64;
    let z_mean = z.sum() / nf;
    let var = z.iter().map(|v| (v - z_mean).powi(2)).sum::<f64>() / nf;
    if var < 1e-24 {
        return Ok(0.0);
    }
    let mut design = Array2::ones((n, d + 1));
    design.slice_mut(s![.., 1..]).assign(&x);
    for mut col in design.columns_mut() {
        let rms = (col.dot(&col) / nf).sqrt();
        if rms > 0.0 {
            col /= rms;
        }
    }
    // f(w) = ||Xw − z||² / (n·Var), gradient H w − c with H = 2XᵀX/(n·Var)
    let h = design.t().dot(&design) * (2.0 / (nf * var));
    let c = design.t().dot(&z) * (2.0 / (nf * var));
    let mut w = Array1::<f64>::zeros(d + 1);
    let max_rounds = 50;
    for _ in 0..max_rounds {
        let mut r = &c - &h.dot(&w);
        if r.dot(&r).sqrt() < ORACLE_GRAD_TOL {
            let resid = &design.dot(&w) - &z;
            return Ok(1.0 - resid.dot(&resid) / (nf * var));
        }
        let mut p = r.clone();
        let mut rr = r.dot(&r);
        for _ in 0..(d + 1) {
            let hp = h.dot(&p);
            let php = p.dot(&hp);
            if php <= 0.0 {
                break;
            }
            let alpha = rr / php;
            w.scaled_add(alpha, &p);
            r.scaled_add(-alpha, &hp);
            let rr_next = r.dot(&r);
            if rr_next.sqrt() < ORACLE_GRAD_TOL {
                break;
            }
            p = &r + &(p * (rr_next / rr));
            rr = rr_next;
        }
    }
    Err(Error::OracleFailure(format!("gradient norm above {ORACLE_GRAD_TOL:e} after {max_rounds} restarts")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dictionary::nnls_extract;
    use crate::vinformation::v_information;
    use crate::numkit::DEFAULT_LAMBDA_REL;
    use ndarray::array;

    fn feature(id: usize, layer: usize, epoch: u64, snr: f64) -> PlantedFeature {
        PlantedFeature { feature_id: id, decodable_from_layer: layer, emerges_at_epoch: epoch, snr }
    }

    fn small_spec() -> PlantSpec {
        PlantSpec {
            n_samples: 60,
            n_units_per_layer: vec![6],
            n_layers: 3,
            n_epochs: 2,
            features: vec![feature(0, 1, 0, 10.0), feature(1, 3, 1, 10.0)],
            seed: 5,
            n_classes: 2,
            sigmas: vec![0.1],
            n_noise: 2,
            rotate: false,
            label_noise: 0.1,
        }
    }

    #[test]
    fn expected_complexity_arithmetic() {
        assert_eq!(feature(0, 1, 0, 100.0).k_expected(4), 0.0);
        assert_eq!(feature(0, 4, 0, 100.0).k_expected(4), 0.75);
        assert_eq!(feature(0, 1, 5, 1.0).lambda_expected(10), 0.5);
    }

    #[test]
    fn spec_validation() {
        let mut spec = small_spec();
        spec.features[1].decodable_from_layer = 4;
        assert!(matches!(spec.validate(), Err(Error::Validation(_))));
        let mut spec = small_spec();
        spec.features[1].feature_id = 7;
        assert!(spec.validate().is_err());
        let mut spec = small_spec();
        spec.n_units_per_layer = vec![1];
        assert!(spec.validate().is_err());
    }

    #[test]
    fn generation_is_deterministic_and_complete() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let m = generate(&small_spec(), a.path()).unwrap();
        generate(&small_spec(), b.path()).unwrap();
        assert_eq!(m.dumps.len(), 3 * 3 * 2);
        let reloaded = Manifest::load(a.path().join("manifest.json")).unwrap();
        assert_eq!(reloaded.dumps, m.dumps);
        for entry in &m.dumps {
            let x = std::fs::read(a.path().join(&entry.path)).unwrap();
            let y = std::fs::read(b.path().join(&entry.path)).unwrap();
            assert_eq!(x, y, "{}", entry.path.display());
        }
        for f in ["features.acts", "head.json", "labels.csv", "ground_truth.csv", "dictionary.acts"] {
            assert_eq!(std::fs::read(a.path().join(f)).unwrap(), std::fs::read(b.path().join(f)).unwrap());
        }
    }

    #[test]
    fn planted_unit_placement() {
        let dir = tempfile::tempdir().unwrap();
        let m = generate(&small_spec(), dir.path()).unwrap();
        let latents = crate::acts_io::read_dump(dir.path().join("latents.acts")).unwrap().to_f64();
        let g1 = latents.column(1);
        let vinfo = |layer: &str, branch, epoch| {
            let x = m.load_dump(layer, branch, epoch).unwrap().to_f64();
            v_information(x.view(), g1, DEFAULT_LAMBDA_REL).unwrap()
        };
        assert!(vinfo("layer3", Branch::Combined, 1) > 0.9);
        assert!(vinfo("layer3", Branch::Main, 1) > 0.9);
        assert!(vinfo("layer3", Branch::Residual, 1) < 0.5);
        assert!(vinfo("layer3", Branch::Combined, 0) < 0.5);
        assert!(vinfo("layer2", Branch::Combined, 1) < 0.5);
    }

    #[test]
    fn rotated_variant_preserves_vinfo() {
        let dir = tempfile::tempdir().unwrap();
        let mut spec = small_spec();
        spec.rotate = true;
        let m = generate(&spec, dir.path()).unwrap();
        let latents = crate::acts_io::read_dump(dir.path().join("latents.acts")).unwrap().to_f64();
        let x = m.load_dump("layer1", Branch::Combined, 1).unwrap().to_f64();
        assert!(v_information(x.view(), latents.column(0), DEFAULT_LAMBDA_REL).unwrap() > 0.9);
        let q = random_orthogonal(&mut ChaCha8Rng::seed_from_u64(3), 5);
        let eye = q.t().dot(&q);
        for ((i, j), v) in eye.indexed_iter() {
            assert!((v - if i == j { 1.0 } else { 0.0 }).abs() < 1e-12);
        }
    }

    #[test]
    fn oracle_nnls_trivial_cases() {
        let one = Dictionary::new(array![[1.0, 2.0, 2.0]]).unwrap();
        let z = oracle_nnls(&one, array![2.0, 4.0, 4.0].view()).unwrap();
        assert!((z[0] - 2.0).abs() < 1e-12);
        let ortho = Dictionary::new(array![[1.0, 0.0], [0.0, 2.0]]).unwrap();
        let z = oracle_nnls(&ortho, array![3.0, -4.0].view()).unwrap();
        assert_eq!(z, array![3.0, 0.0]);
        let big = Dictionary::new(Array2::eye(17)).unwrap();
        assert!(matches!(oracle_nnls(&big, Array1::zeros(17).view()), Err(Error::Budget(_))));
    }

    #[test]
    fn oracle_nnls_agrees_with_extraction() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let atoms = normal(&mut rng, (3, 5)).mapv(f64::abs);
            let dict = Dictionary::new(atoms).unwrap();
            let a = normal(&mut rng, (4, 5));
            let fast = nnls_extract(&dict, a.view()).unwrap();
            for (row, z) in a.rows().into_iter().zip(fast.values.rows()) {
                let exact = oracle_nnls(&dict, row).unwrap();
                for (u, v) in exact.iter().zip(z) {
                    assert!((u - v).abs() < 1e-8);
                }
            }
        }
    }

    #[test]
    fn oracle_vinfo_trivial_cases() {
        let x = array![[1.0], [2.0], [4.0], [7.0]];
        assert_eq!(oracle_vinfo(x.view(), array![3.0, 3.0, 3.0, 3.0].view()).unwrap(), 0.0);
        assert!((oracle_vinfo(x.view(), x.column(0)).unwrap() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn oracle_vinfo_matches_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = normal(&mut rng, (200, 6));
        let z = x.column(0).to_owned() * 0.7 + x.column(3).to_owned() * -0.2 + normal(&mut rng, (200, 1)).column(0);
        let oracle = oracle_vinfo(x.view(), z.view()).unwrap();
        let closed = v_information(x.view(), z.view(), DEFAULT_LAMBDA_REL).unwrap();
        assert!((oracle - closed).abs() < 1e-6, "{oracle} vs {closed}");
    }
}
