//! Representation similarity: CKA, residual/main branch flow, masked-CKA
//! redundancy and sensitivity to input noise.

use std::io::Write;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::acts_io::{ensure_same_samples, read_dump, Branch, Manifest};
use crate::dictionary::{extract_dump, Dictionary};
use crate::error::{Error, Result};
use crate::numkit::{center_columns, mean};

pub const DEFAULT_MASK_FRACTIONS: [f64; 3] = [0.1, 0.5, 0.9];
pub const DEFAULT_N_MASKS: usize = 20;
pub const DEFAULT_SIGMAS: [f64; 3] = [0.01, 0.1, 0.5];
pub const DEFAULT_N_NOISE: usize = 100;

fn frobenius(m: &Array2<f64>) -> f64 {
    m.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Centered copy scaled to unit Frobenius norm, or `None` if it is all zero.
fn centered_unit(a: ArrayView2<f64>) -> Option<Array2<f64>> {
    let c = center_columns(a);
    let norm = frobenius(&c);
    (norm > 0.0).then(|| c / norm)
}

/// `CKA(A, B) = ||K_A K_B||²_F / (||K_A K_A||_F ||K_B K_B||_F)` with linear centered Grams.
pub fn cka(a: ArrayView2<f64>, b: ArrayView2<f64>) -> Result<f64> {
    let n = a.nrows();
    if b.nrows() != n {
        return Err(Error::Alignment(format!("{} vs {} samples", n, b.nrows())));
    }
    if n < 3 {
        return Err(Error::Shape(format!("CKA needs at least 3 samples, got {n}")));
    }
    let (Some(a), Some(b)) = (centered_unit(a), centered_unit(b)) else {
        return Ok(0.0);
    };
    let (num, den) = if a.ncols().max(b.ncols()) > n {
        // sample space is smaller than feature space
        let ka = a.dot(&a.t());
        let kb = b.dot(&b.t());
        let kab = ka.dot(&kb);
        (kab.iter().map(|v| v * v).sum::<f64>(), frobenius(&ka.dot(&ka)) * frobenius(&kb.dot(&kb)))
    } else {
        // ||K_A K_B||² = tr(Saa Sab Sbb Sabᵀ), ||K_A²||_F = ||Saa²||_F
        let saa = a.t().dot(&a);
        let sbb = b.t().dot(&b);
        let sab = a.t().dot(&b);
        let left = saa.dot(&sab);
        let right = sab.dot(&sbb);
        let num = left.iter().zip(&right).map(|(x, y)| x * y).sum::<f64>();
        (num, frobenius(&saa.dot(&saa)) * frobenius(&sbb.dot(&sbb)))
    };
    if den <= 0.0 {
        return Ok(0.0);
    }
    Ok((num / den).clamp(0.0, 1.0))
}

/// CKA between a feature and activations with column subsets removed, reusing
/// the activation cross-moments across masks.
struct MaskedCka {
    /// `ÃᵀÃ`, activations centered and scaled to unit Frobenius norm.
    moments: Array2<f64>,
    /// `Ãᵀz̃`.
    cross: Array1<f64>,
    /// `z̃ᵀz̃`.
    z_energy: f64,
}

impl MaskedCka {
    fn new(acts: ArrayView2<f64>, z: ArrayView1<f64>) -> Option<Self> {
        let a = centered_unit(acts)?;
        let zc = centered_unit(z.insert_axis(Axis(1)))?;
        let zc = zc.column(0);
        Some(MaskedCka { moments: a.t().dot(&a), cross: a.t().dot(&zc), z_energy: zc.dot(&zc) })
    }

    fn cka(&self, keep: &[usize]) -> f64 {
        if keep.is_empty() {
            return 0.0;
        }
        let s = self.moments.select(Axis(0), keep).select(Axis(1), keep);
        let c = self.cross.select(Axis(0), keep);
        let num = c.dot(&s.dot(&c));
        let den = self.z_energy * frobenius(&s.dot(&s));
        if den <= 0.0 {
            0.0
        } else {
            (num / den).clamp(0.0, 1.0)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowPoint {
    pub block: String,
    pub cka_residual: f64,
    pub cka_main: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowCurve {
    pub feature_id: usize,
    pub per_block: Vec<FlowPoint>,
}

/// Residual- and main-branch CKA with `z` per block, in forward order.
pub fn branch_flow(manifest: &Manifest, z: ArrayView1<f64>, epoch: u64) -> Result<FlowCurve> {
    Ok(branch_flow_many(manifest, &[z], epoch)?.remove(0))
}

/// [`branch_flow`] for several features, loading each dump once.
pub fn branch_flow_many(manifest: &Manifest, features: &[ArrayView1<f64>], epoch: u64) -> Result<Vec<FlowCurve>> {
    let mut curves: Vec<FlowCurve> = (0..features.len())
        .map(|feature_id| FlowCurve { feature_id, per_block: Vec::new() })
        .collect();
    for layer in &manifest.layers {
        let residual = manifest.load_dump(layer, Branch::Residual, epoch)?;
        let main = manifest.load_dump(layer, Branch::Main, epoch)?;
        ensure_same_samples(&residual.sample_ids, &main)?;
        let (r, m) = (residual.to_f64(), main.to_f64());
        let points = features
            .par_iter()
            .map(|z| {
                let col = z.insert_axis(Axis(1));
                Ok(FlowPoint { block: layer.clone(), cka_residual: cka(r.view(), col)?, cka_main: cka(m.view(), col)? })
            })
            .collect::<Result<Vec<_>>>()?;
        for (curve, point) in curves.iter_mut().zip(points) {
            curve.per_block.push(point);
        }
    }
    Ok(curves)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RedundancyScore {
    pub feature_id: usize,
    /// `(fraction masked, score)` in the order requested.
    pub per_fraction: Vec<(f64, f64)>,
    pub aggregate: f64,
}

/// Number of units zeroed by a mask of the given fraction.
pub fn masked_count(fraction: f64, d: usize) -> usize {
    ((fraction * d as f64) - 1e-9).ceil().max(0.0) as usize
}

fn task_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// `E_m[CKA(acts ⊙ m, z)] / CKA(acts, z)` per mask fraction, averaged over fractions.
pub fn redundancy(final_acts: ArrayView2<f64>, z: ArrayView1<f64>, fractions: &[f64], n_masks: usize, seed: u64) -> Result<RedundancyScore> {
    if final_acts.nrows() != z.len() {
        return Err(Error::Alignment(format!("{} activation rows, {} feature values", final_acts.nrows(), z.len())));
    }
    if let Some(f) = fractions.iter().find(|f| !(**f > 0.0 && **f < 1.0)) {
        return Err(Error::Argument(format!("mask fraction {f} must lie in (0, 1)")));
    }
    if fractions.is_empty() || n_masks == 0 {
        return Err(Error::Argument("need at least one fraction and one mask".into()));
    }
    let baseline = cka(final_acts, z.insert_axis(Axis(1)))?;
    if baseline <= 1e-6 {
        return Err(Error::Degenerate(format!("baseline CKA {baseline:.3e} is too small for a redundancy ratio")));
    }
    let masked = MaskedCka::new(final_acts, z)
        .ok_or_else(|| Error::Degenerate("activations or feature have no variance".into()))?;
    let d = final_acts.ncols();

    let per_fraction: Vec<(f64, f64)> = fractions
        .iter()
        .enumerate()
        .map(|(fi, &fraction)| {
            let zeroed = masked_count(fraction, d);
            let values: Vec<f64> = (0..n_masks)
                .into_par_iter()
                .map(|mi| {
                    let mut rng = task_rng(seed, ((fi as u64) << 32) | mi as u64);
                    let mut dropped = vec![false; d];
                    for j in sample(&mut rng, d, zeroed).iter() {
                        dropped[j] = true;
                    }
                    let keep: Vec<usize> = (0..d).filter(|&j| !dropped[j]).collect();
                    masked.cka(&keep)
                })
                .collect();
            (fraction, mean(values) / baseline)
        })
        .collect();
    let aggregate = mean(per_fraction.iter().map(|(_, v)| *v));
    Ok(RedundancyScore { feature_id: 0, per_fraction, aggregate })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityScore {
    pub feature_id: usize,
    /// `(sigma, mean per-sample variance)` in the order requested.
    pub per_sigma: Vec<(f64, f64)>,
    pub aggregate: f64,
}

/// Per-sample population variance across draws, averaged over samples, per feature.
fn mean_draw_variance(draws: &[Array2<f64>]) -> Array1<f64> {
    let count = draws.len() as f64;
    let mut sum = Array2::<f64>::zeros(draws[0].dim());
    let mut sum_sq = Array2::<f64>::zeros(draws[0].dim());
    for d in draws {
        sum += d;
        sum_sq += &d.mapv(|v| v * v);
    }
    let var = (sum_sq / count) - (&sum / count).mapv(|m| m * m);
    var.mapv(|v| v.max(0.0)).mean_axis(Axis(0)).expect("at least one sample")
}

/// Sensitivity of every dictionary feature to the manifest's perturbation sets.
pub fn sensitivity_scores(manifest: &Manifest, dict: &Dictionary, sigmas: &[f64], n_noise: usize) -> Result<Vec<SensitivityScore>> {
    if sigmas.is_empty() || n_noise < 2 {
        return Err(Error::Argument("need at least one sigma and n_noise >= 2".into()));
    }
    let mut per_sigma: Vec<Array1<f64>> = Vec::with_capacity(sigmas.len());
    let mut reference: Option<Vec<u64>> = None;
    for &sigma in sigmas {
        let paths = manifest.perturbation_paths(sigma)?;
        if paths.len() < n_noise {
            return Err(Error::Manifest(format!(
                "perturbation set for sigma {sigma} has {} dumps, need {n_noise}",
                paths.len()
            )));
        }
        let draws = paths[..n_noise]
            .par_iter()
            .map(|p| {
                let dump = read_dump(p)?;
                Ok((dump.sample_ids.clone(), extract_dump(dict, &dump)?.values))
            })
            .collect::<Result<Vec<_>>>()?;
        for (ids, _) in &draws {
            match &reference {
                Some(r) if r != ids => {
                    return Err(Error::Alignment(format!("perturbed dumps for sigma {sigma} disagree on sample ids")))
                }
                Some(_) => {}
                None => reference = Some(ids.clone()),
            }
        }
        let values: Vec<Array2<f64>> = draws.into_iter().map(|(_, v)| v).collect();
        per_sigma.push(mean_draw_variance(&values));
    }
    Ok((0..dict.k())
        .map(|feature_id| {
            let per_sigma: Vec<(f64, f64)> = sigmas.iter().zip(&per_sigma).map(|(&s, v)| (s, v[feature_id])).collect();
            let aggregate = mean(per_sigma.iter().map(|(_, v)| *v));
            SensitivityScore { feature_id, per_sigma, aggregate }
        })
        .collect())
}

/// `Var(z(x̃))` of one feature under input noise, averaged over samples and sigmas.
pub fn sensitivity(manifest: &Manifest, dict: &Dictionary, feature_id: usize, sigmas: &[f64], n_noise: usize) -> Result<SensitivityScore> {
    if feature_id >= dict.k() {
        return Err(Error::Argument(format!("feature {feature_id} out of range for {} atoms", dict.k())));
    }
    Ok(sensitivity_scores(manifest, dict, sigmas, n_noise)?.swap_remove(feature_id))
}

pub fn write_flow_csv(curves: &[FlowCurve], out: &mut impl Write) -> std::io::Result<()> {
    writeln!(out, "feature_id,block,cka_residual,cka_main")?;
    for c in curves {
        for p in &c.per_block {
            writeln!(out, "{},{},{},{}", c.feature_id, p.block, p.cka_residual, p.cka_main)?;
        }
    }
    Ok(())
}

fn write_wide(out: &mut impl Write, prefix: &str, rows: &[(usize, f64, &[(f64, f64)])]) -> std::io::Result<()> {
    let keys: Vec<f64> = rows.first().map(|r| r.2.iter().map(|(k, _)| *k).collect()).unwrap_or_default();
    write!(out, "feature_id,aggregate")?;
    for k in &keys {
        write!(out, ",{prefix}{k}")?;
    }
    writeln!(out)?;
    for (id, agg, values) in rows {
        write!(out, "{id},{agg}")?;
        for (_, v) in values.iter() {
            write!(out, ",{v}")?;
        }
        writeln!(out)?;
    }
    Ok(())
}

pub fn write_redundancy_csv(scores: &[RedundancyScore], out: &mut impl Write) -> std::io::Result<()> {
    let rows: Vec<_> = scores.iter().map(|s| (s.feature_id, s.aggregate, s.per_fraction.as_slice())).collect();
    write_wide(out, "mask_", &rows)
}

pub fn write_sensitivity_csv(scores: &[SensitivityScore], out: &mut impl Write) -> std::io::Result<()> {
    let rows: Vec<_> = scores.iter().map(|s| (s.feature_id, s.aggregate, s.per_sigma.as_slice())).collect();
    write_wide(out, "sigma_", &rows)
}
