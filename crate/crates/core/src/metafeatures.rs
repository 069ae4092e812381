//! Meta-features: k-means clusters of dictionary atoms with per-cluster complexity.

use std::io::Write;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::dictionary::Dictionary;
use crate::error::{Error, Result};
use crate::numkit::kmeans;
use crate::vinformation::ComplexityProfile;

pub const DEFAULT_N_CLUSTERS: usize = 150;
pub const DEFAULT_SPECTRUM: usize = 30;
pub const KMEANS_MAX_ITER: usize = 300;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSummary {
    pub cluster_id: usize,
    pub member_count: usize,
    /// `None` for an empty cluster.
    pub mean_complexity: Option<f64>,
    pub members: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaFeatureSet {
    pub assignments: Vec<usize>,
    pub n_clusters: usize,
    /// Empty until [`aggregate_complexity`] fills it.
    pub per_cluster: Vec<ClusterSummary>,
}

impl MetaFeatureSet {
    pub fn members(&self, cluster: usize) -> Vec<usize> {
        self.assignments
            .iter()
            .enumerate()
            .filter(|(_, &c)| c == cluster)
            .map(|(i, _)| i)
            .collect()
    }

    /// Cluster ids ordered by mean complexity ascending, ties by id; empty clusters last.
    pub fn ranking(&self) -> Vec<usize> {
        let mut ids: Vec<&ClusterSummary> = self.per_cluster.iter().collect();
        ids.sort_by(|a, b| match (a.mean_complexity, b.mean_complexity) {
            (Some(x), Some(y)) => x.total_cmp(&y).then(a.cluster_id.cmp(&b.cluster_id)),
            (Some(_), None) => std::cmp::Ordering::Less,
            (None, Some(_)) => std::cmp::Ordering::Greater,
            (None, None) => a.cluster_id.cmp(&b.cluster_id),
        });
        ids.into_iter().map(|c| c.cluster_id).collect()
    }

    /// `count` clusters at evenly spaced positions of the complexity ranking.
    pub fn spectrum(&self, count: usize) -> Vec<usize> {
        let ranked: Vec<usize> = self
            .ranking()
            .into_iter()
            .filter(|&c| self.per_cluster[c].mean_complexity.is_some())
            .collect();
        if count == 0 || ranked.is_empty() {
            return Vec::new();
        }
        if count >= ranked.len() {
            return ranked;
        }
        if count == 1 {
            return vec![ranked[ranked.len() / 2]];
        }
        let last = (ranked.len() - 1) as f64;
        (0..count)
            .map(|i| ranked[(i as f64 * last / (count - 1) as f64).round() as usize])
            .collect()
    }
}

pub fn cluster_dictionary(dict: &Dictionary, n_clusters: usize, seed: u64) -> Result<MetaFeatureSet> {
    let mut atoms: Array2<f64> = dict.atoms.clone();
    for mut row in atoms.rows_mut() {
        let norm = row.dot(&row).sqrt();
        if norm > 0.0 {
            row /= norm;
        }
    }
    let fit = kmeans(atoms.view(), n_clusters, seed, KMEANS_MAX_ITER)?;
    Ok(MetaFeatureSet { assignments: fit.assignments, n_clusters, per_cluster: Vec::new() })
}

pub fn aggregate_complexity(set: &MetaFeatureSet, profiles: &[ComplexityProfile]) -> Result<MetaFeatureSet> {
    let k = set.assignments.len();
    let mut complexity = vec![None; k];
    for p in profiles {
        if p.feature_id < k {
            complexity[p.feature_id] = p.complexity_k;
        }
    }
    if let Some(missing) = complexity.iter().position(Option::is_none) {
        return Err(Error::Alignment(format!("no complexity score for feature {missing}")));
    }
    let per_cluster = (0..set.n_clusters)
        .map(|cluster_id| {
            let members = set.members(cluster_id);
            let mean_complexity = (!members.is_empty()).then(|| {
                members.iter().map(|&i| complexity[i].unwrap_or(0.0)).sum::<f64>() / members.len() as f64
            });
            ClusterSummary { cluster_id, member_count: members.len(), mean_complexity, members }
        })
        .collect();
    Ok(MetaFeatureSet { assignments: set.assignments.clone(), n_clusters: set.n_clusters, per_cluster })
}

/// One row per cluster in ranking order; members are `;`-separated.
pub fn write_cluster_csv(set: &MetaFeatureSet, out: &mut impl Write) -> std::io::Result<()> {
    writeln!(out, "cluster_id,member_count,mean_complexity,members")?;
    for id in set.ranking() {
        let c = &set.per_cluster[id];
        let members: Vec<String> = c.members.iter().map(usize::to_string).collect();
        let mean = c.mean_complexity.map(|v| v.to_string()).unwrap_or_default();
        writeln!(out, "{},{},{},{}", c.cluster_id, c.member_count, mean, members.join(";"))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn profile(id: usize, k: f64) -> ComplexityProfile {
        ComplexityProfile {
            feature_id: id,
            per_layer_vinfo: vec![],
            complexity_k: Some(k),
            per_epoch_vinfo: Default::default(),
            lambda_ttd: None,
        }
    }

    fn two_groups() -> Dictionary {
        // atoms 0-2 point near e0, atoms 3-5 near e2, at very different scales
        Dictionary::new(array![
            [1.0, 0.05, 0.0],
            [5.0, 0.0, 0.1],
            [0.3, 0.02, 0.0],
            [0.0, 0.1, 2.0],
            [0.01, 0.0, 0.4],
            [0.0, 0.3, 9.0],
        ])
        .unwrap()
    }

    #[test]
    fn separates_orthogonal_groups() {
        let set = cluster_dictionary(&two_groups(), 2, 7).unwrap();
        let a = &set.assignments;
        assert!(a[0] == a[1] && a[1] == a[2]);
        assert!(a[3] == a[4] && a[4] == a[5]);
        assert_ne!(a[0], a[3]);
        assert_eq!(set, cluster_dictionary(&two_groups(), 2, 7).unwrap());
    }

    #[test]
    fn saturated_clusters_are_singletons() {
        let set = cluster_dictionary(&two_groups(), 6, 1).unwrap();
        let mut sorted = set.assignments.clone();
        sorted.sort();
        assert_eq!(sorted, vec![0, 1, 2, 3, 4, 5]);
        assert!(cluster_dictionary(&two_groups(), 7, 1).is_err());
    }

    #[test]
    fn planted_cluster_means() {
        let set = MetaFeatureSet { assignments: vec![0, 0, 1, 1, 1], n_clusters: 2, per_cluster: vec![] };
        let profiles: Vec<_> = [0.1, 0.1, 0.9, 0.9, 0.9].iter().enumerate().map(|(i, &k)| profile(i, k)).collect();
        let filled = aggregate_complexity(&set, &profiles).unwrap();
        assert!((filled.per_cluster[0].mean_complexity.unwrap() - 0.1).abs() < 1e-12);
        assert!((filled.per_cluster[1].mean_complexity.unwrap() - 0.9).abs() < 1e-12);
        assert!(matches!(aggregate_complexity(&set, &profiles[..4]), Err(Error::Alignment(_))));
    }

    #[test]
    fn ranking_breaks_ties_by_id() {
        let set = MetaFeatureSet { assignments: vec![2, 1, 0, 3], n_clusters: 5, per_cluster: vec![] };
        let profiles: Vec<_> = [0.5, 0.5, 0.7, 0.2].iter().enumerate().map(|(i, &k)| profile(i, k)).collect();
        let filled = aggregate_complexity(&set, &profiles).unwrap();
        assert_eq!(filled.ranking(), vec![3, 1, 2, 0, 4]);
        assert_eq!(filled.per_cluster[4].mean_complexity, None);
        assert_eq!(filled.spectrum(2), vec![3, 0]);
    }
}
