//! Linear-probe V-information, depth complexity `K` and time-to-decode `Λ`.
//!
//! With a Gaussian linear predictive family the V-information of `x → z`
//! reduces to `Var(z) · R²` of a least-squares probe. Standardizing `z`
//! to unit variance makes the score exactly the probe's R² in `[0, 1]`.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::acts_io::{ensure_same_samples, ActivationDump, Branch, Manifest};
use crate::dictionary::FeatureMatrix;
use crate::error::{Error, Result};
use crate::numkit::{mean, standardize, standardize_vector, LinearProbe};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexityProfile {
    pub feature_id: usize,
    /// V-information per layer, in forward order.
    pub per_layer_vinfo: Vec<(String, f64)>,
    /// `1 − mean(per_layer_vinfo)`.
    pub complexity_k: Option<f64>,
    pub per_epoch_vinfo: BTreeMap<u64, f64>,
    /// `1 − mean(per_epoch_vinfo)`.
    pub lambda_ttd: Option<f64>,
}

impl ComplexityProfile {
    fn empty(feature_id: usize) -> Self {
        ComplexityProfile {
            feature_id,
            per_layer_vinfo: Vec::new(),
            complexity_k: None,
            per_epoch_vinfo: BTreeMap::new(),
            lambda_ttd: None,
        }
    }

    fn set_layers(&mut self, values: Vec<(String, f64)>) {
        self.complexity_k = Some(one_minus_mean(values.iter().map(|(_, v)| *v)));
        self.per_layer_vinfo = values;
    }

    fn set_epochs(&mut self, values: BTreeMap<u64, f64>) {
        self.lambda_ttd = Some(one_minus_mean(values.values().copied()));
        self.per_epoch_vinfo = values;
    }
}

fn one_minus_mean(values: impl IntoIterator<Item = f64>) -> f64 {
    (1.0 - mean(values)).clamp(0.0, 1.0)
}

/// A standardized layer design with its probe factorization, reusable across features.
pub struct LayerProbe {
    probe: LinearProbe,
}

impl LayerProbe {
    pub fn new(x_layer: ArrayView2<f64>, lambda_rel: f64) -> Result<Self> {
        if x_layer.nrows() < 2 {
            return Err(Error::Shape(format!("need at least 2 samples, got {}", x_layer.nrows())));
        }
        let standardized = standardize(x_layer);
        let keep = standardized.informative_columns();
        let design = standardized.data.select(Axis(1), &keep);
        Ok(LayerProbe { probe: LinearProbe::new(design, lambda_rel)? })
    }

    pub fn from_dump(dump: &ActivationDump, lambda_rel: f64) -> Result<Self> {
        Self::new(dump.to_f64().view(), lambda_rel)
    }

    /// Unit-variance V-information of `z` from this layer, in `[0, 1]`.
    pub fn vinfo(&self, z: ArrayView1<f64>) -> Result<f64> {
        if z.len() != self.probe.n_samples() {
            return Err(Error::Alignment(format!(
                "feature has {} samples, layer has {}",
                z.len(),
                self.probe.n_samples()
            )));
        }
        let Some(z) = standardize_vector(z) else {
            return Ok(0.0);
        };
        let r2 = self.probe.fit(z.view())?.r_squared;
        Ok(r2.clamp(0.0, 1.0))
    }
}

/// `I_V(x → z)` for the Gaussian linear family with `z` scaled to unit variance.
pub fn v_information(x_layer: ArrayView2<f64>, z: ArrayView1<f64>, lambda_rel: f64) -> Result<f64> {
    if x_layer.nrows() != z.len() {
        return Err(Error::Alignment(format!("x has {} samples, z has {}", x_layer.nrows(), z.len())));
    }
    LayerProbe::new(x_layer, lambda_rel)?.vinfo(z)
}

fn load_aligned(manifest: &Manifest, layer: &str, epoch: u64, reference: &mut Option<Vec<u64>>) -> Result<ActivationDump> {
    let dump = manifest.load_dump(layer, Branch::Combined, epoch)?;
    match reference {
        Some(ids) => ensure_same_samples(ids, &dump)?,
        None => *reference = Some(dump.sample_ids.clone()),
    }
    Ok(dump)
}

fn layer_probes(manifest: &Manifest, epoch: u64, lambda_rel: f64, reference: &mut Option<Vec<u64>>) -> Result<Vec<(String, LayerProbe)>> {
    manifest
        .layers
        .iter()
        .map(|layer| {
            let dump = load_aligned(manifest, layer, epoch, reference)?;
            Ok((layer.clone(), LayerProbe::from_dump(&dump, lambda_rel)?))
        })
        .collect()
}

fn epoch_probes(manifest: &Manifest, lambda_rel: f64, reference: &mut Option<Vec<u64>>) -> Result<Vec<(u64, LayerProbe)>> {
    if manifest.epochs.is_empty() {
        return Err(Error::Manifest("no epochs declared".into()));
    }
    let layer = manifest.final_layer();
    manifest
        .epochs
        .iter()
        .map(|&epoch| {
            let dump = load_aligned(manifest, layer, epoch, reference)?;
            Ok((epoch, LayerProbe::from_dump(&dump, lambda_rel)?))
        })
        .collect()
}

fn check_len(z: ArrayView1<f64>, reference: &Option<Vec<u64>>) -> Result<()> {
    if let Some(ids) = reference {
        if ids.len() != z.len() {
            return Err(Error::Alignment(format!("feature has {} samples, dumps have {}", z.len(), ids.len())));
        }
    }
    Ok(())
}

/// Depth complexity `K = 1 − mean_ℓ I_V(f_ℓ(x) → z)` over every manifest layer at `epoch`.
///
/// The returned profile has `feature_id` 0.
pub fn complexity_score(manifest: &Manifest, z: ArrayView1<f64>, epoch: u64, lambda_rel: f64) -> Result<ComplexityProfile> {
    let mut reference = None;
    let probes = layer_probes(manifest, epoch, lambda_rel, &mut reference)?;
    check_len(z, &reference)?;
    let values = probes
        .iter()
        .map(|(layer, probe)| Ok((layer.clone(), probe.vinfo(z)?)))
        .collect::<Result<Vec<_>>>()?;
    let mut profile = ComplexityProfile::empty(0);
    profile.set_layers(values);
    Ok(profile)
}

/// Time to decode `Λ = 1 − mean_e I_V(f_n^{(e)}(x) → z)` over every manifest epoch.
pub fn time_to_decode(manifest: &Manifest, z_final: ArrayView1<f64>, lambda_rel: f64) -> Result<ComplexityProfile> {
    let mut reference = None;
    let probes = epoch_probes(manifest, lambda_rel, &mut reference)?;
    check_len(z_final, &reference)?;
    let values = probes
        .iter()
        .map(|(epoch, probe)| Ok((*epoch, probe.vinfo(z_final)?)))
        .collect::<Result<BTreeMap<_, _>>>()?;
    let mut profile = ComplexityProfile::empty(0);
    profile.set_epochs(values);
    Ok(profile)
}

/// Profiles every feature column: `K` at the final epoch, and `Λ` when the
/// final layer has a dump for every epoch.
pub fn batch_profiles(manifest: &Manifest, features: &FeatureMatrix, lambda_rel: f64) -> Result<Vec<ComplexityProfile>> {
    let final_epoch = manifest.final_epoch()?;
    let mut reference = Some(features.sample_ids.clone());
    let layers = layer_probes(manifest, final_epoch, lambda_rel, &mut reference)?;
    let final_layer = manifest.final_layer();
    let epochs = if manifest.epochs.iter().all(|&e| manifest.has_dump(final_layer, Branch::Combined, e)) {
        Some(epoch_probes(manifest, lambda_rel, &mut reference)?)
    } else {
        None
    };

    (0..features.n_features())
        .into_par_iter()
        .map(|feature| {
            let z = features.column(feature);
            let result = (|| {
                let mut profile = ComplexityProfile::empty(feature);
                let per_layer = layers
                    .iter()
                    .map(|(layer, probe)| Ok((layer.clone(), probe.vinfo(z)?)))
                    .collect::<Result<Vec<_>>>()?;
                profile.set_layers(per_layer);
                if let Some(epochs) = &epochs {
                    let per_epoch = epochs
                        .iter()
                        .map(|(epoch, probe)| Ok((*epoch, probe.vinfo(z)?)))
                        .collect::<Result<BTreeMap<_, _>>>()?;
                    profile.set_epochs(per_epoch);
                }
                Ok(profile)
            })();
            result.map_err(|e: Error| Error::Feature { index: feature, source: Box::new(e) })
        })
        .collect()
}

/// `K` for every feature column at one epoch.
pub fn batch_complexity(manifest: &Manifest, features: &FeatureMatrix, epoch: u64, lambda_rel: f64) -> Result<Vec<ComplexityProfile>> {
    let mut reference = Some(features.sample_ids.clone());
    let layers = layer_probes(manifest, epoch, lambda_rel, &mut reference)?;
    per_feature(features, |profile, z| {
        let values = layers
            .iter()
            .map(|(layer, probe)| Ok((layer.clone(), probe.vinfo(z)?)))
            .collect::<Result<Vec<_>>>()?;
        profile.set_layers(values);
        Ok(())
    })
}

/// `Λ` for every feature column.
pub fn batch_time_to_decode(manifest: &Manifest, features: &FeatureMatrix, lambda_rel: f64) -> Result<Vec<ComplexityProfile>> {
    let mut reference = Some(features.sample_ids.clone());
    let epochs = epoch_probes(manifest, lambda_rel, &mut reference)?;
    per_feature(features, |profile, z| {
        let values = epochs
            .iter()
            .map(|(epoch, probe)| Ok((*epoch, probe.vinfo(z)?)))
            .collect::<Result<BTreeMap<_, _>>>()?;
        profile.set_epochs(values);
        Ok(())
    })
}

fn per_feature<F>(features: &FeatureMatrix, fill: F) -> Result<Vec<ComplexityProfile>>
where
    F: Fn(&mut ComplexityProfile, ArrayView1<f64>) -> Result<()> + Sync,
{
    (0..features.n_features())
        .into_par_iter()
        .map(|feature| {
            let mut profile = ComplexityProfile::empty(feature);
            fill(&mut profile, features.column(feature))
                .map_err(|e| Error::Feature { index: feature, source: Box::new(e) })?;
            Ok(profile)
        })
        .collect()
}

/// Long-format CSV: `feature_id,axis,key,vinfo,K,lambda`.
///
/// One row per (feature, layer) with `axis=layer` and per (feature, epoch)
/// with `axis=epoch`; `K` and `lambda` repeat the feature's aggregates.
pub fn write_profiles_csv(profiles: &[ComplexityProfile], out: &mut impl Write) -> std::io::Result<()> {
    writeln!(out, "feature_id,axis,key,vinfo,K,lambda")?;
    for p in profiles {
        let k = fmt_opt(p.complexity_k);
        let l = fmt_opt(p.lambda_ttd);
        for (layer, v) in &p.per_layer_vinfo {
            writeln!(out, "{},layer,{},{},{},{}", p.feature_id, layer, v, k, l)?;
        }
        for (epoch, v) in &p.per_epoch_vinfo {
            writeln!(out, "{},epoch,{},{},{},{}", p.feature_id, epoch, v, k, l)?;
        }
    }
    Ok(())
}

pub(crate) fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn save_profiles(profiles: &[ComplexityProfile], csv_path: &Path, json_path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    write_profiles_csv(profiles, &mut buf).map_err(|e| Error::io(csv_path, e))?;
    std::fs::write(csv_path, buf).map_err(|e| Error::io(csv_path, e))?;
    let json = serde_json::to_string_pretty(profiles)?;
    std::fs::write(json_path, json + "\n").map_err(|e| Error::io(json_path, e))
}

/// Feature values as one column, for single-feature calls.
pub fn as_column(z: ArrayView1<f64>) -> Array2<f64> {
    z.to_owned().insert_axis(Axis(1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::Array1;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_simple_fn((rows, cols), || StandardNormal.sample(&mut rng))
    }

    #[test]
    fn affine_function_is_fully_available() {
        let x = gaussian(200, 3, 1);
        let z = x.column(1).mapv(|v| 3.0 * v + 7.0);
        assert_abs_diff_eq!(v_information(x.view(), z.view(), 0.0).unwrap(), 1.0, epsilon = 1e-8);
    }

    #[test]
    fn independent_noise_is_unavailable() {
        let x = gaussian(10_000, 1, 2);
        let z = gaussian(10_000, 1, 3).column(0).to_owned();
        assert!(v_information(x.view(), z.view(), 1e-6).unwrap() < 0.01);
    }

    #[test]
    fn constant_feature_has_zero_information() {
        let x = gaussian(50, 2, 4);
        let z = Array1::from_elem(50, 3.0);
        assert_eq!(v_information(x.view(), z.view(), 1e-6).unwrap(), 0.0);
    }

    #[test]
    fn misaligned_inputs_error() {
        let x = gaussian(10, 2, 4);
        let z = Array1::zeros(9);
        assert!(matches!(v_information(x.view(), z.view(), 0.0), Err(Error::Alignment(_))));
    }

    #[test]
    fn invariant_to_affine_reparameterization_of_z() {
        let x = gaussian(100, 4, 5);
        let z = &x.column(0) + &gaussian(100, 1, 6).column(0);
        let base = v_information(x.view(), z.view(), 1e-6).unwrap();
        let moved = v_information(x.view(), z.mapv(|v| -2.5 * v + 10.0).view(), 1e-6).unwrap();
        assert_abs_diff_eq!(base, moved, epsilon = 1e-10);
    }

    #[test]
    fn invariant_to_invertible_linear_maps_at_zero_lambda() {
        let x = gaussian(60, 3, 7);
        let z = &x.column(0) * 0.5 + &gaussian(60, 1, 8).column(0);
        let mix = ndarray::array![[1.0, 2.0, 0.0], [0.0, 1.0, -1.0], [0.5, 0.0, 3.0]];
        let a = v_information(x.view(), z.view(), 0.0).unwrap();
        let b = v_information(x.dot(&mix).view(), z.view(), 0.0).unwrap();
        assert_abs_diff_eq!(a, b, epsilon = 1e-8);
    }

    #[test]
    fn constant_column_is_ignored() {
        let x = gaussian(80, 3, 9);
        let z = &x.column(2) + &gaussian(80, 1, 10).column(0);
        let mut padded = Array2::from_elem((80, 4), 4.2);
        padded.slice_mut(ndarray::s![.., ..3]).assign(&x);
        let a = v_information(x.view(), z.view(), 1e-6).unwrap();
        let b = v_information(padded.view(), z.view(), 1e-6).unwrap();
        assert!((a - b).abs() < 1e-8);
    }
}
