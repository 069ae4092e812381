//! ACTS activation dumps and the experiment manifest.
//!
//! An ACTS file is a little-endian binary container for one dense
//! `n_samples x n_units` activation matrix:
//!
//! ```text
//! offset  size            field
//! 0       4               magic b"ACTS"
//! 4       1               version (1)
//! 5       1               branch (0 = residual, 1 = main, 2 = combined)
//! 6       4               layer_id length L (u32)
//! 10      L               layer_id, UTF-8
//! 10+L    8               epoch (u64)
//! 18+L    8               n_samples (u64)
//! 26+L    8               n_units (u64)
//! 34+L    8*n_samples     sample_ids (u64, strictly increasing)
//! ...     4*n*u           payload, row-major f32
//! ```

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"ACTS";
pub const VERSION: u8 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Branch {
    Residual,
    Main,
    Combined,
}

impl Branch {
    fn code(self) -> u8 {
        match self {
            Branch::Residual => 0,
            Branch::Main => 1,
            Branch::Combined => 2,
        }
    }

    fn from_code(code: u8) -> Result<Self> {
        match code {
            0 => Ok(Branch::Residual),
            1 => Ok(Branch::Main),
            2 => Ok(Branch::Combined),
            other => Err(Error::Format(format!("unknown branch code {other}"))),
        }
    }
}

impl fmt::Display for Branch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Branch::Residual => "residual",
            Branch::Main => "main",
            Branch::Combined => "combined",
        };
        f.write_str(name)
    }
}

/// One activation matrix for a (layer, branch, epoch) triple.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationDump {
    pub layer_id: String,
    pub branch: Branch,
    pub epoch: u64,
    pub data: Array2<f32>,
    pub sample_ids: Vec<u64>,
}

impl ActivationDump {
    pub fn new(
        layer_id: impl Into<String>,
        branch: Branch,
        epoch: u64,
        data: Array2<f32>,
        sample_ids: Vec<u64>,
    ) -> Result<Self> {
        let dump = ActivationDump { layer_id: layer_id.into(), branch, epoch, data, sample_ids };
        dump.validate()?;
        Ok(dump)
    }

    /// Builds a dump from an f64 matrix, rounding to f32 storage precision.
    pub fn from_f64(
        layer_id: impl Into<String>,
        branch: Branch,
        epoch: u64,
        data: &Array2<f64>,
        sample_ids: Vec<u64>,
    ) -> Result<Self> {
        Self::new(layer_id, branch, epoch, data.mapv(|v| v as f32), sample_ids)
    }

    pub fn n_samples(&self) -> usize {
        self.data.nrows()
    }

    pub fn n_units(&self) -> usize {
        self.data.ncols()
    }

    pub fn to_f64(&self) -> Array2<f64> {
        self.data.mapv(f64::from)
    }

    pub fn validate(&self) -> Result<()> {
        let (n, d) = self.data.dim();
        if n < 2 {
            return Err(Error::Validation(format!(
                "dump {} has {n} samples, need at least 2",
                self.layer_id
            )));
        }
        if d < 1 {
            return Err(Error::Validation(format!("dump {} has no units", self.layer_id)));
        }
        if self.sample_ids.len() != n {
            return Err(Error::Validation(format!(
                "dump {} has {} sample ids for {n} rows",
                self.layer_id,
                self.sample_ids.len()
            )));
        }
        if self.sample_ids.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Validation(format!(
                "dump {} sample ids are not strictly increasing",
                self.layer_id
            )));
        }
        if let Some(pos) = self.data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Validation(format!(
                "dump {} has a non-finite entry at flat index {pos}",
                self.layer_id
            )));
        }
        Ok(())
    }

    /// Keeps only the given row indices, in the given order.
    fn select_rows(&self, rows: &[usize]) -> ActivationDump {
        ActivationDump {
            layer_id: self.layer_id.clone(),
            branch: self.branch,
            epoch: self.epoch,
            data: self.data.select(Axis(0), rows),
            sample_ids: rows.iter().map(|&r| self.sample_ids[r]).collect(),
        }
    }
}

pub fn write_dump(dump: &ActivationDump, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    dump.validate()?;
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    encode(dump, &mut w).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

fn encode(dump: &ActivationDump, w: &mut impl Write) -> std::io::Result<()> {
    w.write_all(MAGIC)?;
    w.write_u8(VERSION)?;
    w.write_u8(dump.branch.code())?;
    let id = dump.layer_id.as_bytes();
    w.write_u32::<LittleEndian>(id.len() as u32)?;
    w.write_all(id)?;
    w.write_u64::<LittleEndian>(dump.epoch)?;
    w.write_u64::<LittleEndian>(dump.n_samples() as u64)?;
    w.write_u64::<LittleEndian>(dump.n_units() as u64)?;
    for &id in &dump.sample_ids {
        w.write_u64::<LittleEndian>(id)?;
    }
    for row in dump.data.rows() {
        for &v in row {
            w.write_f32::<LittleEndian>(v)?;
        }
    }
    Ok(())
}

pub fn read_dump(path: impl AsRef<Path>) -> Result<ActivationDump> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut bytes = Vec::new();
    BufReader::new(file).read_to_end(&mut bytes).map_err(|e| Error::io(path, e))?;
    decode(&bytes).map_err(|e| match e {
        Error::Format(m) => Error::Format(format!("{}: {m}", path.display())),
        Error::Corrupt(m) => Error::Corrupt(format!("{}: {m}", path.display())),
        other => other,
    })
}

fn truncated(what: &str) -> Error {
    Error::Corrupt(format!("file truncated while reading {what}"))
}

fn decode(bytes: &[u8]) -> Result<ActivationDump> {
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(Error::Format("bad magic, expected ACTS".into()));
    }
    let mut r = &bytes[4..];
    let version = r.read_u8().map_err(|_| truncated("version"))?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let branch = Branch::from_code(r.read_u8().map_err(|_| truncated("branch"))?)?;
    let id_len = r.read_u32::<LittleEndian>().map_err(|_| truncated("layer id length"))? as usize;
    if r.len() < id_len {
        return Err(truncated("layer id"));
    }
    let layer_id = std::str::from_utf8(&r[..id_len])
        .map_err(|_| Error::Format("layer id is not UTF-8".into()))?
        .to_owned();
    r = &r[id_len..];
    let epoch = r.read_u64::<LittleEndian>().map_err(|_| truncated("epoch"))?;
    let n = r.read_u64::<LittleEndian>().map_err(|_| truncated("n_samples"))? as usize;
    let d = r.read_u64::<LittleEndian>().map_err(|_| truncated("n_units"))? as usize;
    let expected = n
        .checked_mul(8)
        .and_then(|ids| n.checked_mul(d)?.checked_mul(4)?.checked_add(ids))
        .ok_or_else(|| Error::Corrupt(format!("implausible shape {n}x{d}")))?;
    if r.len() != expected {
        return Err(Error::Corrupt(format!(
            "expected {expected} bytes after header for {n}x{d}, found {}",
            r.len()
        )));
    }
    let mut sample_ids = Vec::with_capacity(n);
    for _ in 0..n {
        sample_ids.push(r.read_u64::<LittleEndian>().map_err(|_| truncated("sample ids"))?);
    }
    let mut payload = vec![0f32; n * d];
    r.read_f32_into::<LittleEndian>(&mut payload).map_err(|_| truncated("payload"))?;
    let data = Array2::from_shape_vec((n, d), payload)
        .map_err(|e| Error::Corrupt(format!("payload shape: {e}")))?;
    ActivationDump::new(layer_id, branch, epoch, data, sample_ids)
}

/// Restricts every dump to the sample ids they all share, rows in ascending id order.
pub fn align_samples(dumps: &[ActivationDump]) -> Result<Vec<ActivationDump>> {
    let first = dumps
        .first()
        .ok_or_else(|| Error::Alignment("no dumps to align".into()))?;
    let mut common: Vec<u64> = first.sample_ids.clone();
    for dump in &dumps[1..] {
        let ids: HashSet<u64> = dump.sample_ids.iter().copied().collect();
        common.retain(|id| ids.contains(id));
    }
    if common.len() < 2 {
        return Err(Error::Alignment(format!(
            "sample id intersection has {} elements, need at least 2",
            common.len()
        )));
    }
    Ok(dumps
        .iter()
        .map(|dump| {
            // ids are strictly increasing, so a merge walk finds the rows
            let mut rows = Vec::with_capacity(common.len());
            let mut it = dump.sample_ids.iter().enumerate();
            for id in &common {
                for (row, sid) in it.by_ref() {
                    if sid == id {
                        rows.push(row);
                        break;
                    }
                }
            }
            dump.select_rows(&rows)
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DumpEntry {
    pub layer: String,
    pub branch: Branch,
    pub epoch: u64,
    pub path: PathBuf,
}

/// Noise-perturbed final-layer dumps for one input-noise level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationSet {
    pub sigma: f64,
    pub paths: Vec<PathBuf>,
}

/// Experiment manifest. Relative paths resolve against the manifest's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    /// Layer ids in forward-pass order.
    pub layers: Vec<String>,
    pub epochs: Vec<u64>,
    pub dumps: Vec<DumpEntry>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub perturbation_sets: Vec<PerturbationSet>,
    /// Feature matrix (ACTS) aligned with the final-layer dumps.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub features: Option<PathBuf>,
    /// Dictionary atoms (ACTS) with a `.json` sidecar.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dictionary: Option<PathBuf>,
    /// Penultimate-to-logit weights, JSON `{"weights": [[..]; d]}`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub head_weights: Option<PathBuf>,
    /// CSV `sample_id,label`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub metadata: BTreeMap<String, serde_json::Value>,
    #[serde(skip)]
    pub root: PathBuf,
}

impl Manifest {
    pub fn new(layers: Vec<String>, epochs: Vec<u64>) -> Self {
        Manifest {
            layers,
            epochs,
            dumps: Vec::new(),
            perturbation_sets: Vec::new(),
            features: None,
            dictionary: None,
            head_weights: None,
            labels: None,
            metadata: BTreeMap::new(),
            root: PathBuf::new(),
        }
    }

    /// Parses and validates a manifest; every referenced file must exist.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut manifest: Manifest = serde_json::from_str(&text)
            .map_err(|e| Error::Manifest(format!("{}: {e}", path.display())))?;
        manifest.root = path.parent().map(Path::to_path_buf).unwrap_or_default();
        manifest.validate()?;
        Ok(manifest)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::Manifest("no layers declared".into()));
        }
        let mut seen = HashSet::new();
        for layer in &self.layers {
            if !seen.insert(layer) {
                return Err(Error::Manifest(format!("duplicate layer id {layer}")));
            }
        }
        let mut seen = HashSet::new();
        for epoch in &self.epochs {
            if !seen.insert(epoch) {
                return Err(Error::Manifest(format!("duplicate epoch {epoch}")));
            }
        }
        let mut keys = HashSet::new();
        for entry in &self.dumps {
            if !self.layers.contains(&entry.layer) {
                return Err(Error::Manifest(format!("dump references undeclared layer {}", entry.layer)));
            }
            if !self.epochs.contains(&entry.epoch) {
                return Err(Error::Manifest(format!("dump references undeclared epoch {}", entry.epoch)));
            }
            if !keys.insert((&entry.layer, entry.branch, entry.epoch)) {
                return Err(Error::Manifest(format!(
                    "duplicate dump for ({}, {}, {})",
                    entry.layer, entry.branch, entry.epoch
                )));
            }
            self.require_file(&entry.path)?;
        }
        for set in &self.perturbation_sets {
            if !(set.sigma > 0.0 && set.sigma.is_finite()) {
                return Err(Error::Manifest(format!("perturbation sigma {} must be > 0", set.sigma)));
            }
            for p in &set.paths {
                self.require_file(p)?;
            }
        }
        for p in [&self.features, &self.dictionary, &self.head_weights, &self.labels]
            .into_iter()
            .flatten()
        {
            self.require_file(p)?;
        }
        Ok(())
    }

    fn require_file(&self, rel: &Path) -> Result<()> {
        let full = self.resolve(rel);
        if !full.is_file() {
            return Err(Error::Manifest(format!("missing file {}", full.display())));
        }
        Ok(())
    }

    pub fn resolve(&self, rel: &Path) -> PathBuf {
        if rel.is_absolute() {
            rel.to_path_buf()
        } else {
            self.root.join(rel)
        }
    }

    pub fn final_layer(&self) -> &str {
        self.layers.last().map(String::as_str).unwrap_or_default()
    }

    pub fn final_epoch(&self) -> Result<u64> {
        self.epochs
            .last()
            .copied()
            .ok_or_else(|| Error::Manifest("no epochs declared".into()))
    }

    pub fn dump_path(&self, layer: &str, branch: Branch, epoch: u64) -> Result<PathBuf> {
        self.dumps
            .iter()
            .find(|e| e.layer == layer && e.branch == branch && e.epoch == epoch)
            .map(|e| self.resolve(&e.path))
            .ok_or_else(|| {
                Error::Manifest(format!("no dump for layer {layer}, branch {branch}, epoch {epoch}"))
            })
    }

    pub fn has_dump(&self, layer: &str, branch: Branch, epoch: u64) -> bool {
        self.dumps
            .iter()
            .any(|e| e.layer == layer && e.branch == branch && e.epoch == epoch)
    }

    /// Reads a dump and checks that its header agrees with the manifest entry.
    pub fn load_dump(&self, layer: &str, branch: Branch, epoch: u64) -> Result<ActivationDump> {
        let path = self.dump_path(layer, branch, epoch)?;
        let dump = read_dump(&path)?;
        if dump.layer_id != layer || dump.branch != branch || dump.epoch != epoch {
            return Err(Error::Manifest(format!(
                "{} holds ({}, {}, {}) but manifest lists ({layer}, {branch}, {epoch})",
                path.display(),
                dump.layer_id,
                dump.branch,
                dump.epoch
            )));
        }
        Ok(dump)
    }

    pub fn perturbation_paths(&self, sigma: f64) -> Result<Vec<PathBuf>> {
        self.perturbation_sets
            .iter()
            .find(|s| (s.sigma - sigma).abs() <= 1e-12 * sigma.abs().max(1.0))
            .map(|s| s.paths.iter().map(|p| self.resolve(p)).collect())
            .ok_or_else(|| Error::Manifest(format!("no perturbation set for sigma {sigma}")))
    }

    fn optional(&self, field: &Option<PathBuf>, name: &str) -> Result<PathBuf> {
        field
            .as_ref()
            .map(|p| self.resolve(p))
            .ok_or_else(|| Error::Manifest(format!("manifest has no {name} entry")))
    }

    pub fn features_path(&self) -> Result<PathBuf> {
        self.optional(&self.features, "features")
    }

    pub fn dictionary_path(&self) -> Result<PathBuf> {
        self.optional(&self.dictionary, "dictionary")
    }

    pub fn head_weights_path(&self) -> Result<PathBuf> {
        self.optional(&self.head_weights, "head_weights")
    }

    pub fn labels_path(&self) -> Result<PathBuf> {
        self.optional(&self.labels, "labels")
    }
}

/// Errors unless every dump carries the same sample ids as `reference`.
pub fn ensure_same_samples(reference: &[u64], dump: &ActivationDump) -> Result<()> {
    if dump.sample_ids != reference {
        return Err(Error::Alignment(format!(
            "dump ({}, {}, {}) sample ids differ from the reference set",
            dump.layer_id, dump.branch, dump.epoch
        )));
    }
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct HeadWeightsFile {
    weights: Vec<Vec<f64>>,
}

/// Reads a `d x c` classifier weight matrix from JSON.
pub fn read_head_weights(path: impl AsRef<Path>) -> Result<Array2<f64>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file: HeadWeightsFile = serde_json::from_str(&text)?;
    let d = file.weights.len();
    let c = file.weights.first().map_or(0, Vec::len);
    if d == 0 || c == 0 || file.weights.iter().any(|r| r.len() != c) {
        return Err(Error::Shape(format!("{}: head weights must be a non-empty rectangular matrix", path.display())));
    }
    let flat: Vec<f64> = file.weights.into_iter().flatten().collect();
    Array2::from_shape_vec((d, c), flat).map_err(|e| Error::Shape(e.to_string()))
}

pub fn write_head_weights(weights: &Array2<f64>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = HeadWeightsFile { weights: weights.rows().into_iter().map(|r| r.to_vec()).collect() };
    std::fs::write(path, serde_json::to_string(&file)? + "\n").map_err(|e| Error::io(path, e))
}

/// Reads `sample_id,label` rows (header required).
pub fn read_labels(path: impl AsRef<Path>) -> Result<Vec<(u64, usize)>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == "sample_id,label" => {}
        _ => return Err(Error::Format(format!("{}: expected header sample_id,label", path.display()))),
    }
    lines
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, line)| {
            let bad = || Error::Format(format!("{}: bad label row {}", path.display(), i + 2));
            let (id, label) = line.split_once(',').ok_or_else(bad)?;
            Ok((id.trim().parse().map_err(|_| bad())?, label.trim().parse().map_err(|_| bad())?))
        })
        .collect()
}

pub fn write_labels(labels: &[(u64, usize)], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::from("sample_id,label\n");
    for (id, label) in labels {
        out.push_str(&format!("{id},{label}\n"));
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Looks up the label of every sample id; errors on any missing id.
pub fn labels_for(ids: &[u64], labels: &[(u64, usize)]) -> Result<Vec<usize>> {
    let map: std::collections::HashMap<u64, usize> = labels.iter().copied().collect();
    ids.iter()
        .map(|id| {
            map.get(id)
                .copied()
                .ok_or_else(|| Error::Alignment(format!("no label for sample {id}")))
        })
        .collect()
}
