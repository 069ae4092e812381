//! Decision importance of features through the folded linear head.
//!
//! Features live in the penultimate layer, so logits are linear in them:
//! `ŷ = z D W = z W′`. Gradient-times-input is then exact, and equals the
//! logit change from occluding the feature.

use std::io::Write;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::dictionary::{Dictionary, FeatureMatrix};
use crate::error::{Error, Result};
use crate::numkit::{argmax, spearman, RankCorrelation};
use crate::vinformation::ComplexityProfile;

#[derive(Debug, Clone, PartialEq)]
pub struct FoldedHead {
    /// `W′ = D W`, `k x c`.
    pub w_prime: Array2<f64>,
}

impl FoldedHead {
    pub fn class_count(&self) -> usize {
        self.w_prime.ncols()
    }

    pub fn logits(&self, features: &FeatureMatrix) -> Result<Array2<f64>> {
        if features.n_features() != self.w_prime.nrows() {
            return Err(Error::Shape(format!(
                "{} features, head folds {} atoms",
                features.n_features(),
                self.w_prime.nrows()
            )));
        }
        Ok(features.values.dot(&self.w_prime))
    }

    /// Argmax class per sample, ties to the lowest class.
    pub fn predict(&self, features: &FeatureMatrix) -> Result<Vec<usize>> {
        Ok(self.logits(features)?.rows().into_iter().map(argmax).collect())
    }
}

pub fn fold_head(dict: &Dictionary, head_weights: ArrayView2<f64>) -> Result<FoldedHead> {
    if head_weights.nrows() != dict.d() {
        return Err(Error::Shape(format!(
            "head has {} rows, dictionary atoms have {} units",
            head_weights.nrows(),
            dict.d()
        )));
    }
    if head_weights.ncols() == 0 {
        return Err(Error::Shape("head has no classes".into()));
    }
    Ok(FoldedHead { w_prime: dict.atoms.dot(&head_weights) })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureImportance {
    pub feature_id: usize,
    /// Mean of `|W′[i, t] · z_i|`.
    pub importance: f64,
    /// Mean of `W′[i, t] · z_i`.
    pub mean_signed: f64,
    pub inhibitor: bool,
    /// Fraction of samples where the feature is non-zero.
    pub activation_frequency: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceReport {
    pub per_feature: Vec<FeatureImportance>,
}

/// Which samples enter the importance expectation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ImportanceScope {
    AllSamples,
    /// Only samples whose target class equals this class.
    Class(usize),
}

/// Per-sample signed contributions `W′[i, t_s] · z_{s,i}` (`n x k`).
pub fn contributions(features: &FeatureMatrix, head: &FoldedHead, target_class: &[usize]) -> Result<Array2<f64>> {
    let (n, k) = features.values.dim();
    if target_class.len() != n {
        return Err(Error::Alignment(format!("{} targets for {n} samples", target_class.len())));
    }
    if head.w_prime.nrows() != k {
        return Err(Error::Shape(format!("{k} features, head folds {} atoms", head.w_prime.nrows())));
    }
    if let Some(&bad) = target_class.iter().find(|&&t| t >= head.class_count()) {
        return Err(Error::Argument(format!("target class {bad} out of range for {} classes", head.class_count())));
    }
    Ok(Array2::from_shape_fn((n, k), |(s, i)| head.w_prime[[i, target_class[s]]] * features.values[[s, i]]))
}

pub fn importance(features: &FeatureMatrix, head: &FoldedHead, target_class: &[usize]) -> Result<ImportanceReport> {
    importance_scoped(features, head, target_class, ImportanceScope::AllSamples)
}

pub fn importance_scoped(
    features: &FeatureMatrix,
    head: &FoldedHead,
    target_class: &[usize],
    scope: ImportanceScope,
) -> Result<ImportanceReport> {
    let contrib = contributions(features, head, target_class)?;
    let rows: Vec<usize> = match scope {
        ImportanceScope::AllSamples => (0..target_class.len()).collect(),
        ImportanceScope::Class(c) => {
            if c >= head.class_count() {
                return Err(Error::Argument(format!("class {c} out of range")));
            }
            (0..target_class.len()).filter(|&s| target_class[s] == c).collect()
        }
    };
    let count = rows.len().max(1) as f64;
    let per_feature = (0..features.n_features())
        .map(|i| {
            let (mut abs, mut signed, mut active) = (0.0, 0.0, 0usize);
            for &s in &rows {
                let c = contrib[[s, i]];
                abs += c.abs();
                signed += c;
                if features.values[[s, i]] > 0.0 {
                    active += 1;
                }
            }
            let mean_signed = signed / count;
            FeatureImportance {
                feature_id: i,
                importance: abs / count,
                mean_signed,
                inhibitor: mean_signed < 0.0,
                activation_frequency: active as f64 / count,
            }
        })
        .collect();
    Ok(ImportanceReport { per_feature })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasRow {
    pub feature_id: usize,
    pub complexity: f64,
    pub importance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimplicityBiasTable {
    pub rows: Vec<BiasRow>,
    pub correlation: RankCorrelation,
}

/// Joins complexity and importance by feature id and rank-correlates them.
pub fn simplicity_bias_table(
    profiles: &[ComplexityProfile],
    report: &ImportanceReport,
    n_permutations: usize,
    seed: u64,
) -> Result<SimplicityBiasTable> {
    let rows = report
        .per_feature
        .iter()
        .map(|imp| {
            let profile = profiles
                .iter()
                .find(|p| p.feature_id == imp.feature_id)
                .ok_or_else(|| Error::Alignment(format!("no complexity profile for feature {}", imp.feature_id)))?;
            let complexity = profile
                .complexity_k
                .ok_or_else(|| Error::Alignment(format!("feature {} has no complexity score", imp.feature_id)))?;
            Ok(BiasRow { feature_id: imp.feature_id, complexity, importance: imp.importance })
        })
        .collect::<Result<Vec<_>>>()?;
    if rows.len() != profiles.len() {
        return Err(Error::Alignment(format!("{} profiles vs {} importance rows", profiles.len(), rows.len())));
    }
    let k: Vec<f64> = rows.iter().map(|r| r.complexity).collect();
    let imp: Vec<f64> = rows.iter().map(|r| r.importance).collect();
    let correlation = spearman(&k, &imp, n_permutations, seed)?;
    Ok(SimplicityBiasTable { rows, correlation })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AblationPoint {
    pub fraction_removed: f64,
    pub removed: usize,
    pub accuracy: f64,
}

pub fn accuracy(logits: &Array2<f64>, labels: &[usize]) -> f64 {
    let hits = logits
        .rows()
        .into_iter()
        .zip(labels)
        .filter(|(row, &label)| argmax(*row) == label)
        .count();
    hits as f64 / labels.len().max(1) as f64
}

/// Zeroes the first `⌈fraction·k⌉` features of `order` and re-scores top-1 accuracy.
pub fn support_ablation(
    features: &FeatureMatrix,
    head: &FoldedHead,
    labels: &[usize],
    order: &[usize],
    steps: &[f64],
) -> Result<Vec<AblationPoint>> {
    let k = features.n_features();
    if labels.len() != features.n_samples() {
        return Err(Error::Alignment(format!("{} labels for {} samples", labels.len(), features.n_samples())));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= head.class_count()) {
        return Err(Error::Argument(format!("label {bad} out of range for {} classes", head.class_count())));
    }
    let mut seen = vec![false; k];
    if order.len() != k || order.iter().any(|&i| i >= k || std::mem::replace(&mut seen[i], true)) {
        return Err(Error::Argument(format!("order must be a permutation of 0..{k}")));
    }
    if let Some(f) = steps.iter().find(|f| !(0.0..=1.0).contains(*f)) {
        return Err(Error::Argument(format!("ablation fraction {f} must lie in [0, 1]")));
    }
    steps
        .iter()
        .map(|&fraction| {
            let removed = ((fraction * k as f64) - 1e-9).ceil().max(0.0) as usize;
            let mut ablated = features.clone();
            for &i in &order[..removed] {
                ablated.values.column_mut(i).fill(0.0);
            }
            let logits = head.logits(&ablated)?;
            Ok(AblationPoint { fraction_removed: fraction, removed, accuracy: accuracy(&logits, labels) })
        })
        .collect()
}

/// Feature ids sorted from most to least complex, ties by id.
pub fn complexity_order(profiles: &[ComplexityProfile]) -> Result<Vec<usize>> {
    let mut keyed = profiles
        .iter()
        .map(|p| {
            p.complexity_k
                .map(|k| (p.feature_id, k))
                .ok_or_else(|| Error::Alignment(format!("feature {} has no complexity score", p.feature_id)))
        })
        .collect::<Result<Vec<_>>>()?;
    keyed.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    Ok(keyed.into_iter().map(|(id, _)| id).collect())
}

pub fn write_importance_csv(report: &ImportanceReport, out: &mut impl Write) -> std::io::Result<()> {
    writeln!(out, "feature_id,importance,mean_signed,inhibitor,activation_frequency")?;
    for f in &report.per_feature {
        writeln!(out, "{},{},{},{},{}", f.feature_id, f.importance, f.mean_signed, f.inhibitor, f.activation_frequency)?;
    }
    Ok(())
}

pub fn write_ablation_csv(curve: &[AblationPoint], out: &mut impl Write) -> std::io::Result<()> {
    writeln!(out, "fraction,removed,accuracy")?;
    for p in curve {
        writeln!(out, "{},{},{}", p.fraction_removed, p.removed, p.accuracy)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    fn fm(values: Array2<f64>) -> FeatureMatrix {
        let n = values.nrows() as u64;
        FeatureMatrix::new(values, (0..n).collect()).unwrap()
    }

    #[test]
    fn identity_dictionary_folds_to_head() {
        let dict = Dictionary::new(Array2::eye(3)).unwrap();
        let w = array![[1.0, -2.0], [0.5, 0.0], [3.0, 1.0]];
        assert_eq!(fold_head(&dict, w.view()).unwrap().w_prime, w);
    }

    #[test]
    fn hand_computed_fold() {
        // D = [[1,2],[0,1],[3,0]], W = [[2],[-1]] → W′ = [[0],[-1],[6]]
        let dict = Dictionary::new(array![[1.0, 2.0], [0.0, 1.0], [3.0, 0.0]]).unwrap();
        let head = fold_head(&dict, array![[2.0], [-1.0]].view()).unwrap();
        let expected = array![[0.0], [-1.0], [6.0]];
        for (a, b) in head.w_prime.iter().zip(&expected) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
        assert!(matches!(fold_head(&dict, array![[1.0]].view()), Err(Error::Shape(_))));
    }

    #[test]
    fn one_hot_feature_importance() {
        let dict = Dictionary::new(Array2::eye(3)).unwrap();
        let head = fold_head(&dict, array![[1.0], [-2.0], [0.5]].view()).unwrap();
        let z = fm(array![[0.0, 3.0, 0.0], [0.0, 1.0, 0.0]]);
        let rep = importance(&z, &head, &[0, 0]).unwrap();
        assert_eq!(rep.per_feature[0].importance, 0.0);
        assert_eq!(rep.per_feature[2].importance, 0.0);
        assert_abs_diff_eq!(rep.per_feature[1].importance, 4.0, epsilon = 1e-12);
        assert!(rep.per_feature[1].inhibitor);
        assert_eq!(rep.per_feature[1].activation_frequency, 1.0);
    }

    #[test]
    fn class_out_of_range_is_rejected() {
        let dict = Dictionary::new(Array2::eye(2)).unwrap();
        let head = fold_head(&dict, array![[1.0], [1.0]].view()).unwrap();
        let z = fm(array![[1.0, 0.0], [0.0, 1.0]]);
        assert!(matches!(importance(&z, &head, &[0, 1]), Err(Error::Argument(_))));
    }

    #[test]
    fn class_conditional_scope_filters_samples() {
        let dict = Dictionary::new(Array2::eye(2)).unwrap();
        let head = fold_head(&dict, array![[1.0, 0.0], [0.0, 1.0]].view()).unwrap();
        let z = fm(array![[2.0, 0.0], [0.0, 4.0], [6.0, 0.0]]);
        let rep = importance_scoped(&z, &head, &[0, 1, 0], ImportanceScope::Class(0)).unwrap();
        assert_abs_diff_eq!(rep.per_feature[0].importance, 4.0, epsilon = 1e-12);
        assert_eq!(rep.per_feature[1].importance, 0.0);
    }

    #[test]
    fn ablation_endpoints() {
        let dict = Dictionary::new(Array2::eye(3)).unwrap();
        let head = fold_head(&dict, array![[1.0, 0.0], [0.0, 1.0], [0.0, 2.0]].view()).unwrap();
        let z = fm(array![[1.0, 0.0, 0.0], [0.0, 1.0, 1.0], [0.0, 0.0, 1.0]]);
        let labels = [0, 1, 1];
        let curve = support_ablation(&z, &head, &labels, &[2, 1, 0], &[0.0, 1.0]).unwrap();
        assert_eq!(curve[0].accuracy, 1.0);
        // all logits zero → class 0 everywhere
        assert_abs_diff_eq!(curve[1].accuracy, 1.0 / 3.0, epsilon = 1e-12);
        assert!(support_ablation(&z, &head, &labels, &[0, 0, 1], &[0.5]).is_err());
    }

    #[test]
    fn occlusion_matches_contribution() {
        let head = FoldedHead { w_prime: array![[0.5, -1.0], [2.0, 0.3], [-0.7, 0.9]] };
        let z = fm(array![[1.0, 0.0, 2.0], [0.5, 1.5, 0.0], [3.0, 0.2, 0.4]]);
        let targets = [1, 0, 1];
        let contrib = contributions(&z, &head, &targets).unwrap();
        let full = head.logits(&z).unwrap();
        for i in 0..3 {
            let mut occluded = z.clone();
            occluded.values.column_mut(i).fill(0.0);
            let logits = head.logits(&occluded).unwrap();
            for (s, &t) in targets.iter().enumerate() {
                assert_abs_diff_eq!(full[[s, t]] - logits[[s, t]], contrib[[s, i]], epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn complexity_order_descends_with_id_ties() {
        let mk = |id, k| ComplexityProfile {
            feature_id: id,
            per_layer_vinfo: vec![],
            complexity_k: Some(k),
            per_epoch_vinfo: Default::default(),
            lambda_ttd: None,
        };
        let order = complexity_order(&[mk(0, 0.2), mk(1, 0.9), mk(2, 0.2)]).unwrap();
        assert_eq!(order, vec![1, 0, 2]);
    }
}
