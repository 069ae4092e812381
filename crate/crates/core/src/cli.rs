//! Command-line interface.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::warn;
use ndarray::{Array2, ArrayView1};
use rayon::prelude::*;

use crate::acts_io::{ensure_same_samples, labels_for, read_head_weights, read_labels, Branch, Manifest};
use crate::attribution::{
    complexity_order, fold_head, importance_scoped, support_ablation, write_ablation_csv, write_importance_csv,
    FoldedHead, ImportanceReport, ImportanceScope,
};
use crate::dictionary::{extract_dump, nmf_fit, reconstruction_report, Dictionary, FeatureMatrix, FEATURES_PER_CLASS};
use crate::error::{Error, Result};
use crate::flow::{
    branch_flow_many, redundancy, sensitivity_scores, write_flow_csv, write_redundancy_csv, write_sensitivity_csv,
    RedundancyScore, DEFAULT_MASK_FRACTIONS, DEFAULT_N_MASKS, DEFAULT_N_NOISE, DEFAULT_SIGMAS,
};
use crate::metafeatures::{aggregate_complexity, cluster_dictionary, write_cluster_csv, DEFAULT_N_CLUSTERS, DEFAULT_SPECTRUM};
use crate::numkit::{DEFAULT_LAMBDA_REL, DEFAULT_PERMUTATIONS};
use crate::report::{complexity_correlations, master_table, write_correlations_csv, write_master_csv};
use crate::synth::{generate, PlantSpec};
use crate::vinformation::{batch_complexity, batch_profiles, batch_time_to_decode, ComplexityProfile};

#[derive(Debug, Parser)]
#[command(name = "featurescope", version, about = "Feature complexity and importance metrics from activation dumps")]
struct Cli {
    /// Worker threads; results do not depend on this.
    #[arg(long, global = true, env = "FEATURESCOPE_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    #[arg(long)]
    manifest: PathBuf,
    /// Output directory [default: <manifest dir>/results]
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct FeatureInput {
    /// Feature matrix (ACTS) instead of the manifest's entry.
    #[arg(long)]
    features: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct DictionaryInput {
    /// Dictionary (ACTS) instead of the manifest's entry.
    #[arg(long)]
    dictionary: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct Probe {
    #[arg(long, default_value_t = DEFAULT_LAMBDA_REL)]
    lambda_rel: f64,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum AblationOrder {
    /// Least important first.
    ImportanceAsc,
    /// Most complex first.
    ComplexityDesc,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Learn a non-negative dictionary on final-layer activations.
    LearnDict {
        #[command(flatten)]
        common: Common,
        /// Atom count [default: 10 per class of the head]
        #[arg(long)]
        k: Option<usize>,
        #[arg(long, default_value_t = crate::dictionary::DEFAULT_TOL)]
        tol: f64,
        #[arg(long, default_value_t = crate::dictionary::DEFAULT_MAX_ITER)]
        max_iter: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        epoch: Option<u64>,
    },
    /// Extract feature values from a dump with a fixed dictionary.
    Extract {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        dict: DictionaryInput,
        #[arg(long)]
        layer: Option<String>,
        #[arg(long)]
        epoch: Option<u64>,
    },
    /// Depth complexity K per feature.
    Complexity {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        input: FeatureInput,
        #[command(flatten)]
        probe: Probe,
        #[arg(long)]
        epoch: Option<u64>,
    },
    /// Time to decode per feature.
    Ttd {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        input: FeatureInput,
        #[command(flatten)]
        probe: Probe,
    },
    /// Residual and main branch CKA per block.
    Flow {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        input: FeatureInput,
        #[arg(long)]
        epoch: Option<u64>,
    },
    /// Masked-activation CKA ratio per feature.
    Redundancy {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        input: FeatureInput,
        #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_MASK_FRACTIONS)]
        fractions: Vec<f64>,
        #[arg(long, default_value_t = DEFAULT_N_MASKS)]
        n_masks: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Feature variance under input noise.
    Sensitivity {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        dict: DictionaryInput,
        /// Noise levels; defaults to every perturbation set in the manifest.
        #[arg(long, value_delimiter = ',')]
        sigmas: Option<Vec<f64>>,
        /// Noisy copies per level; defaults to the smallest perturbation set.
        #[arg(long)]
        n_noise: Option<usize>,
    },
    /// Gradient-times-input importance through the folded head.
    Importance {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        input: FeatureInput,
        #[command(flatten)]
        dict: DictionaryInput,
        /// Restrict to samples predicted as this class.
        #[arg(long)]
        class: Option<usize>,
    },
    /// Accuracy while zeroing features in a chosen order.
    Ablate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        input: FeatureInput,
        #[command(flatten)]
        dict: DictionaryInput,
        #[command(flatten)]
        probe: Probe,
        #[arg(long, value_enum, default_value_t = AblationOrder::ImportanceAsc)]
        order: AblationOrder,
        #[arg(long, value_delimiter = ',', default_values_t = [0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0])]
        steps: Vec<f64>,
    },
    /// Cluster dictionary atoms into meta-features.
    Cluster {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        input: FeatureInput,
        #[command(flatten)]
        dict: DictionaryInput,
        #[command(flatten)]
        probe: Probe,
        #[arg(long, default_value_t = DEFAULT_N_CLUSTERS)]
        n_clusters: usize,
        /// Clusters to select across the complexity range.
        #[arg(long, default_value_t = DEFAULT_SPECTRUM)]
        spectrum: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Generate a synthetic experiment with planted features.
    Synth {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Join every metric into one table and correlate with K.
    Report {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        input: FeatureInput,
        #[command(flatten)]
        dict: DictionaryInput,
        #[command(flatten)]
        probe: Probe,
        #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_MASK_FRACTIONS)]
        fractions: Vec<f64>,
        #[arg(long, default_value_t = DEFAULT_N_MASKS)]
        n_masks: usize,
        /// Noise levels; defaults to every perturbation set in the manifest.
        #[arg(long, value_delimiter = ',')]
        sigmas: Option<Vec<f64>>,
        /// Noisy copies per level; defaults to the smallest perturbation set.
        #[arg(long)]
        n_noise: Option<usize>,
        #[arg(long, default_value_t = DEFAULT_PERMUTATIONS)]
        permutations: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

/// Runs the CLI and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let outcome = match cli.threads {
        Some(0) => Err(Error::Argument("--threads must be at least 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Internal(e.to_string()))
            .and_then(|pool| pool.install(|| dispatch(cli.command))),
        None => dispatch(cli.command),
    };
    match outcome {
        Ok(summary) => {
            println!("{summary}");
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_validation() {
                1
            } else {
                2
            }
        }
    }
}

struct Session {
    manifest: Manifest,
    out: PathBuf,
}

impl Session {
    fn open(common: &Common) -> Result<Self> {
        let manifest = Manifest::load(&common.manifest)?;
        let out = common.out.clone().unwrap_or_else(|| manifest.root.join("results"));
        std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
        Ok(Session { manifest, out })
    }

    fn features(&self, input: &FeatureInput) -> Result<FeatureMatrix> {
        let path = match &input.features {
            Some(p) => p.clone(),
            None => self.manifest.features_path()?,
        };
        FeatureMatrix::load(path)
    }

    fn dictionary(&self, input: &DictionaryInput) -> Result<Dictionary> {
        let path = match &input.dictionary {
            Some(p) => p.clone(),
            None => self.manifest.dictionary_path()?,
        };
        Dictionary::load(path)
    }

    fn head(&self, dict: &Dictionary) -> Result<FoldedHead> {
        let weights = read_head_weights(self.manifest.head_weights_path()?)?;
        fold_head(dict, weights.view())
    }

    fn final_acts(&self, features: &FeatureMatrix) -> Result<Array2<f64>> {
        let dump = self.manifest.load_dump(self.manifest.final_layer(), Branch::Combined, self.manifest.final_epoch()?)?;
        ensure_same_samples(&features.sample_ids, &dump)?;
        Ok(dump.to_f64())
    }

    fn epoch(&self, epoch: Option<u64>) -> Result<u64> {
        match epoch {
            Some(e) if self.manifest.epochs.contains(&e) => Ok(e),
            Some(e) => Err(Error::Argument(format!("epoch {e} is not in the manifest"))),
            None => self.manifest.final_epoch(),
        }
    }

    fn write(&self, name: &str, fill: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>) -> Result<PathBuf> {
        let path = self.out.join(name);
        let mut buf = Vec::new();
        fill(&mut buf).map_err(|e| Error::io(&path, e))?;
        std::fs::write(&path, buf).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }

    fn write_json(&self, name: &str, value: &impl serde::Serialize) -> Result<PathBuf> {
        let path = self.out.join(name);
        std::fs::write(&path, serde_json::to_string_pretty(value)? + "\n").map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }
}

fn check_unit_interval(name: &str, values: &[f64], open: bool) -> Result<()> {
    for &v in values {
        let ok = if open { v > 0.0 && v < 1.0 } else { (0.0..=1.0).contains(&v) };
        if !ok {
            return Err(Error::Argument(format!("{name} value {v} out of range")));
        }
    }
    Ok(())
}

fn check_positive(name: &str, values: &[f64]) -> Result<()> {
    match values.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
        Some(v) => Err(Error::Argument(format!("{name} value {v} must be positive"))),
        None if values.is_empty() => Err(Error::Argument(format!("{name} is empty"))),
        None => Ok(()),
    }
}

fn noise_levels(manifest: &Manifest, sigmas: Option<Vec<f64>>, n_noise: Option<usize>) -> Result<(Vec<f64>, usize)> {
    let sets = &manifest.perturbation_sets;
    let sigmas = match sigmas {
        Some(given) => given,
        None if sets.is_empty() => DEFAULT_SIGMAS.to_vec(),
        None => sets.iter().map(|p| p.sigma).collect(),
    };
    check_positive("sigmas", &sigmas)?;
    let n_noise = n_noise.unwrap_or_else(|| {
        sets.iter()
            .filter(|p| sigmas.contains(&p.sigma))
            .map(|p| p.paths.len())
            .min()
            .unwrap_or(DEFAULT_N_NOISE)
    });
    Ok((sigmas, n_noise))
}

fn predicted_importance(features: &FeatureMatrix, head: &FoldedHead, class: Option<usize>) -> Result<ImportanceReport> {
    let targets = head.predict(features)?;
    let scope = class.map_or(ImportanceScope::AllSamples, ImportanceScope::Class);
    importance_scoped(features, head, &targets, scope)
}

fn all_redundancy(acts: &Array2<f64>, features: &FeatureMatrix, fractions: &[f64], n_masks: usize, seed: u64) -> Vec<Result<RedundancyScore>> {
    (0..features.n_features())
        .into_par_iter()
        .map(|f| {
            redundancy(acts.view(), features.column(f), fractions, n_masks, seed)
                .map(|mut r| {
                    r.feature_id = f;
                    r
                })
                .map_err(|e| Error::Feature { index: f, source: Box::new(e) })
        })
        .collect()
}

fn fmt_corr(rho: f64, p: f64) -> String {
    format!("rho={rho:.4} p={p:.4}")
}

fn dispatch(command: Command) -> Result<String> {
    match command {
        Command::LearnDict { common, k, tol, max_iter, seed, epoch } => {
            if !(tol > 0.0) || max_iter == 0 {
                return Err(Error::Argument("tol and max_iter must be positive".into()));
            }
            let s = Session::open(&common)?;
            let epoch = s.epoch(epoch)?;
            let k = match k {
                Some(k) => k,
                None => FEATURES_PER_CLASS * read_head_weights(s.manifest.head_weights_path()?)?.ncols(),
            };
            let dump = s.manifest.load_dump(s.manifest.final_layer(), Branch::Combined, epoch)?;
            let a = dump.to_f64();
            let (z, dict) = nmf_fit(a.view(), k, tol, max_iter, seed)?;
            let z = FeatureMatrix::new(z.values, dump.sample_ids.clone())?;
            let head = s.manifest.head_weights_path().ok().map(read_head_weights).transpose()?;
            let recon = reconstruction_report(a.view(), &z, &dict, head.as_ref().map(|h| h.view()))?;
            dict.save(s.out.join("dictionary.acts"))?;
            z.save(s.out.join("features.acts"), epoch)?;
            s.write_json("reconstruction.json", &recon)?;
            let agreement = recon.prediction_agreement.map(|a| format!(" agreement={a:.4}")).unwrap_or_default();
            Ok(format!("learn-dict: k={} rel_error={:.6}{agreement} -> {}", dict.k(), recon.rel_error, s.out.display()))
        }
        Command::Extract { common, dict, layer, epoch } => {
            let s = Session::open(&common)?;
            let dictionary = s.dictionary(&dict)?;
            let epoch = s.epoch(epoch)?;
            let layer = layer.unwrap_or_else(|| s.manifest.final_layer().to_string());
            let dump = s.manifest.load_dump(&layer, Branch::Combined, epoch)?;
            let z = extract_dump(&dictionary, &dump)?;
            let head = s.manifest.head_weights_path().ok().map(read_head_weights).transpose()?;
            let head = head.filter(|_| layer == s.manifest.final_layer());
            let recon = reconstruction_report(dump.to_f64().view(), &z, &dictionary, head.as_ref().map(|h| h.view()))?;
            z.save(s.out.join("features.acts"), epoch)?;
            s.write_json("reconstruction.json", &recon)?;
            Ok(format!("extract: {} samples x {} features rel_error={:.6}", z.n_samples(), z.n_features(), recon.rel_error))
        }
        Command::Complexity { common, input, probe, epoch } => {
            let s = Session::open(&common)?;
            let features = s.features(&input)?;
            let profiles = batch_complexity(&s.manifest, &features, s.epoch(epoch)?, probe.lambda_rel)?;
            let path = s.write("complexity.csv", |out| write_complexity_csv(&profiles, out))?;
            let mean_k = crate::numkit::mean(profiles.iter().filter_map(|p| p.complexity_k));
            Ok(format!("complexity: {} features mean K={mean_k:.4} -> {}", profiles.len(), path.display()))
        }
        Command::Ttd { common, input, probe } => {
            let s = Session::open(&common)?;
            let features = s.features(&input)?;
            let profiles = batch_time_to_decode(&s.manifest, &features, probe.lambda_rel)?;
            let path = s.write("ttd.csv", |out| write_ttd_csv(&profiles, out))?;
            let mean_l = crate::numkit::mean(profiles.iter().filter_map(|p| p.lambda_ttd));
            Ok(format!("ttd: {} features mean lambda={mean_l:.4} -> {}", profiles.len(), path.display()))
        }
        Command::Flow { common, input, epoch } => {
            let s = Session::open(&common)?;
            let features = s.features(&input)?;
            let columns: Vec<ArrayView1<f64>> = (0..features.n_features()).map(|f| features.column(f)).collect();
            let curves = branch_flow_many(&s.manifest, &columns, s.epoch(epoch)?)?;
            let path = s.write("flow.csv", |out| write_flow_csv(&curves, out))?;
            Ok(format!("flow: {} features x {} blocks -> {}", curves.len(), s.manifest.layers.len(), path.display()))
        }
        Command::Redundancy { common, input, fractions, n_masks, seed } => {
            check_unit_interval("fractions", &fractions, true)?;
            let s = Session::open(&common)?;
            let features = s.features(&input)?;
            let acts = s.final_acts(&features)?;
            let scores = all_redundancy(&acts, &features, &fractions, n_masks, seed)
                .into_iter()
                .collect::<Result<Vec<_>>>()?;
            let path = s.write("redundancy.csv", |out| write_redundancy_csv(&scores, out))?;
            let mean_r = crate::numkit::mean(scores.iter().map(|r| r.aggregate));
            Ok(format!("redundancy: {} features mean={mean_r:.4} -> {}", scores.len(), path.display()))
        }
        Command::Sensitivity { common, dict, sigmas, n_noise } => {
            let s = Session::open(&common)?;
            let (sigmas, n_noise) = noise_levels(&s.manifest, sigmas, n_noise)?;
            let dictionary = s.dictionary(&dict)?;
            let scores = sensitivity_scores(&s.manifest, &dictionary, &sigmas, n_noise)?;
            let path = s.write("sensitivity.csv", |out| write_sensitivity_csv(&scores, out))?;
            Ok(format!("sensitivity: {} features x {} sigmas -> {}", scores.len(), sigmas.len(), path.display()))
        }
        Command::Importance { common, input, dict, class } => {
            let s = Session::open(&common)?;
            let features = s.features(&input)?;
            let head = s.head(&s.dictionary(&dict)?)?;
            let report = predicted_importance(&features, &head, class)?;
            let path = s.write("importance.csv", |out| write_importance_csv(&report, out))?;
            let inhibitors = report.per_feature.iter().filter(|f| f.inhibitor).count();
            Ok(format!("importance: {} features, {inhibitors} inhibitors -> {}", report.per_feature.len(), path.display()))
        }
        Command::Ablate { common, input, dict, probe, order, steps } => {
            check_unit_interval("steps", &steps, false)?;
            let s = Session::open(&common)?;
            let features = s.features(&input)?;
            let head = s.head(&s.dictionary(&dict)?)?;
            let labels = match s.manifest.labels_path() {
                Ok(path) => labels_for(&features.sample_ids, &read_labels(path)?)?,
                Err(_) => head.predict(&features)?,
            };
            let order = match order {
                AblationOrder::ImportanceAsc => {
                    let report = predicted_importance(&features, &head, None)?;
                    let mut ids: Vec<(usize, f64)> = report.per_feature.iter().map(|f| (f.feature_id, f.importance)).collect();
                    ids.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
                    ids.into_iter().map(|(id, _)| id).collect()
                }
                AblationOrder::ComplexityDesc => {
                    let profiles = batch_complexity(&s.manifest, &features, s.manifest.final_epoch()?, probe.lambda_rel)?;
                    complexity_order(&profiles)?
                }
            };
            let curve = support_ablation(&features, &head, &labels, &order, &steps)?;
            let path = s.write("ablation.csv", |out| write_ablation_csv(&curve, out))?;
            let first = curve.first().map_or(f64::NAN, |p| p.accuracy);
            let last = curve.last().map_or(f64::NAN, |p| p.accuracy);
            Ok(format!("ablate: accuracy {first:.4} -> {last:.4} over {} steps -> {}", curve.len(), path.display()))
        }
        Command::Cluster { common, input, dict, probe, n_clusters, spectrum, seed } => {
            let s = Session::open(&common)?;
            let dictionary = s.dictionary(&dict)?;
            let features = s.features(&input)?;
            if features.n_features() != dictionary.k() {
                return Err(Error::Shape(format!("{} features for {} atoms", features.n_features(), dictionary.k())));
            }
            let set = cluster_dictionary(&dictionary, n_clusters, seed)?;
            let profiles = batch_complexity(&s.manifest, &features, s.manifest.final_epoch()?, probe.lambda_rel)?;
            let set = aggregate_complexity(&set, &profiles)?;
            let path = s.write("clusters.csv", |out| write_cluster_csv(&set, out))?;
            let picked = set.spectrum(spectrum);
            s.write("cluster_spectrum.csv", |out| {
                use std::io::Write;
                writeln!(out, "rank,cluster_id,mean_complexity")?;
                for (rank, id) in picked.iter().enumerate() {
                    let mean = set.per_cluster[*id].mean_complexity.map(|v| v.to_string()).unwrap_or_default();
                    writeln!(out, "{rank},{id},{mean}")?;
                }
                Ok(())
            })?;
            Ok(format!("cluster: {} atoms into {n_clusters} clusters, {} selected -> {}", dictionary.k(), picked.len(), path.display()))
        }
        Command::Synth { spec, out } => {
            let spec = PlantSpec::load(&spec)?;
            let manifest = generate(&spec, &out)?;
            Ok(format!(
                "synth: {} features, {} layers, {} epochs, {} dumps -> {}",
                spec.features.len(),
                spec.n_layers,
                spec.n_epochs,
                manifest.dumps.len(),
                out.join("manifest.json").display()
            ))
        }
        Command::Report { common, input, dict, probe, fractions, n_masks, sigmas, n_noise, permutations, seed } => {
            check_unit_interval("fractions", &fractions, true)?;
            let s = Session::open(&common)?;
            let (sigmas, n_noise) = noise_levels(&s.manifest, sigmas, n_noise)?;
            let features = s.features(&input)?;
            let profiles = batch_profiles(&s.manifest, &features, probe.lambda_rel)?;
            let dictionary = match (&dict.dictionary, &s.manifest.dictionary) {
                (None, None) => None,
                _ => Some(s.dictionary(&dict)?),
            };
            let importance = match (&dictionary, &s.manifest.head_weights) {
                (Some(d), Some(_)) => Some(predicted_importance(&features, &s.head(d)?, None)?),
                _ => None,
            };
            let acts = s.final_acts(&features)?;
            let mut redundancy = Vec::new();
            for score in all_redundancy(&acts, &features, &fractions, n_masks, seed) {
                match score {
                    Ok(r) => redundancy.push(r),
                    Err(e) if !e.is_validation() => warn!("redundancy skipped: {e}"),
                    Err(e) => return Err(e),
                }
            }
            let sensitivity = match &dictionary {
                Some(d) if !s.manifest.perturbation_sets.is_empty() => Some(sensitivity_scores(&s.manifest, d, &sigmas, n_noise)?),
                _ => None,
            };
            let rows = master_table(features.n_features(), &profiles, importance.as_ref(), Some(&redundancy), sensitivity.as_deref());
            let path = s.write("master.csv", |out| write_master_csv(&rows, out))?;
            let pairs = complexity_correlations(&rows, permutations, seed)?;
            s.write("correlations.csv", |out| write_correlations_csv(&pairs, out))?;
            let parts: String = pairs
                .iter()
                .map(|p| format!("; spearman(K,{}): {}", p.y, fmt_corr(p.correlation.rho, p.correlation.p_value)))
                .collect();
            Ok(format!("report: {} features{parts} -> {}", rows.len(), path.display()))
        }
    }
}

fn write_complexity_csv(profiles: &[ComplexityProfile], out: &mut impl std::io::Write) -> std::io::Result<()> {
    let layers: Vec<&str> = profiles
        .first()
        .map(|p| p.per_layer_vinfo.iter().map(|(l, _)| l.as_str()).collect())
        .unwrap_or_default();
    writeln!(out, "feature_id,K,{}", layers.iter().map(|l| format!("vinfo_{l}")).collect::<Vec<_>>().join(","))?;
    for p in profiles {
        let values: Vec<String> = p.per_layer_vinfo.iter().map(|(_, v)| v.to_string()).collect();
        writeln!(out, "{},{},{}", p.feature_id, crate::vinformation::fmt_opt(p.complexity_k), values.join(","))?;
    }
    Ok(())
}

fn write_ttd_csv(profiles: &[ComplexityProfile], out: &mut impl std::io::Write) -> std::io::Result<()> {
    let epochs: Vec<u64> = profiles.first().map(|p| p.per_epoch_vinfo.keys().copied().collect()).unwrap_or_default();
    writeln!(out, "feature_id,lambda,{}", epochs.iter().map(|e| format!("vinfo_e{e}")).collect::<Vec<_>>().join(","))?;
    for p in profiles {
        let values: Vec<String> = p.per_epoch_vinfo.values().map(f64::to_string).collect();
        writeln!(out, "{},{},{}", p.feature_id, crate::vinformation::fmt_opt(p.lambda_ttd), values.join(","))?;
    }
    Ok(())
}
