//! Feature-level interpretability metrics computed from exported activation dumps.
//!
//! The crate learns an overcomplete non-negative dictionary over final-layer
//! activations, extracts per-sample feature values, and scores every feature
//! for depth complexity (linear-probe V-information across layers), time to
//! decode across training epochs, residual/main branch flow, redundancy,
//! sensitivity to input noise and decision importance.

pub mod acts_io;
pub mod attribution;
pub mod cli;
pub mod dictionary;
pub mod error;
pub mod flow;
pub mod metafeatures;
pub mod numkit;
pub mod report;
pub mod synth;
pub mod vinformation;

pub use acts_io::{align_samples, read_dump, write_dump, ActivationDump, Branch, Manifest};

pub use error::{Error, Result};
pub use numkit::{centered_gram, kmeans, ridge_r2, standardize, RegressionFit};
pub use dictionary::{nmf_fit, nnls_extract, reconstruction_report, Dictionary, FeatureMatrix};
pub use vinformation::{batch_profiles, complexity_score, time_to_decode, v_information, ComplexityProfile};
pub use flow::{branch_flow, cka, redundancy, sensitivity, FlowCurve, RedundancyScore, SensitivityScore};
pub use attribution::{fold_head, importance, simplicity_bias_table, support_ablation, FoldedHead, ImportanceReport};
pub use metafeatures::{aggregate_complexity, cluster_dictionary, MetaFeatureSet};
pub use synth::{generate, oracle_nnls, oracle_vinfo, PlantSpec, PlantedFeature};
