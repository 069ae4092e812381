use featurescope::acts_io::{self, Branch};
use featurescope::{attribution, dictionary, flow, numkit, synth, vinformation, Dictionary, Error, FeatureMatrix};
use ndarray::{Array1, Array2};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn to_py(e: Error) -> PyErr {
    if e.is_validation() {
        PyValueError::new_err(e.to_string())
    } else {
        PyRuntimeError::new_err(e.to_string())
    }
}

fn matrix(rows: Vec<Vec<f64>>) -> PyResult<Array2<f64>> {
    let n = rows.len();
    let d = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != d) {
        return Err(PyValueError::new_err("ragged matrix"));
    }
    Array2::from_shape_vec((n, d), rows.into_iter().flatten().collect()).map_err(|e| PyValueError::new_err(e.to_string()))
}

fn rows(m: &Array2<f64>) -> Vec<Vec<f64>> {
    m.rows().into_iter().map(|r| r.to_vec()).collect()
}

fn parse_branch(name: &str) -> PyResult<Branch> {
    match name {
        "residual" => Ok(Branch::Residual),
        "main" => Ok(Branch::Main),
        "combined" => Ok(Branch::Combined),
        other => Err(PyValueError::new_err(format!("unknown branch {other:?}"))),
    }
}

/// One activation dump read from an ACTS file.
#[pyclass(name = "ActivationDump", frozen)]
struct PyDump {
    inner: acts_io::ActivationDump,
}

#[pymethods]
impl PyDump {
    #[getter]
    fn layer_id(&self) -> String {
        self.inner.layer_id.clone()
    }

    #[getter]
    fn branch(&self) -> String {
        self.inner.branch.to_string()
    }

    #[getter]
    fn epoch(&self) -> u64 {
        self.inner.epoch
    }

    #[getter]
    fn sample_ids(&self) -> Vec<u64> {
        self.inner.sample_ids.clone()
    }

    #[getter]
    fn shape(&self) -> (usize, usize) {
        self.inner.data.dim()
    }

    fn data(&self) -> Vec<Vec<f64>> {
        rows(&self.inner.to_f64())
    }

    fn __repr__(&self) -> String {
        let (n, d) = self.inner.data.dim();
        format!("ActivationDump(layer_id={:?}, branch={}, epoch={}, shape=({n}, {d}))", self.inner.layer_id, self.inner.branch, self.inner.epoch)
    }
}

#[pyfunction]
fn read_dump(path: &str) -> PyResult<PyDump> {
    Ok(PyDump { inner: acts_io::read_dump(path).map_err(to_py)? })
}

#[pyfunction]
#[pyo3(signature = (path, layer_id, branch, epoch, data, sample_ids=None))]
fn write_dump(path: &str, layer_id: &str, branch: &str, epoch: u64, data: Vec<Vec<f64>>, sample_ids: Option<Vec<u64>>) -> PyResult<()> {
    let data = matrix(data)?;
    let ids = sample_ids.unwrap_or_else(|| (0..data.nrows() as u64).collect());
    let dump = acts_io::ActivationDump::from_f64(layer_id, parse_branch(branch)?, epoch, &data, ids).map_err(to_py)?;
    acts_io::write_dump(&dump, path).map_err(to_py)
}

#[pyfunction]
#[pyo3(signature = (x, z, lambda_rel=numkit::DEFAULT_LAMBDA_REL))]
fn v_information(x: Vec<Vec<f64>>, z: Vec<f64>, lambda_rel: f64) -> PyResult<f64> {
    vinformation::v_information(matrix(x)?.view(), Array1::from(z).view(), lambda_rel).map_err(to_py)
}

#[pyfunction]
fn oracle_vinfo(x: Vec<Vec<f64>>, z: Vec<f64>) -> PyResult<f64> {
    synth::oracle_vinfo(matrix(x)?.view(), Array1::from(z).view()).map_err(to_py)
}

#[pyfunction]
fn cka(a: Vec<Vec<f64>>, b: Vec<Vec<f64>>) -> PyResult<f64> {
    flow::cka(matrix(a)?.view(), matrix(b)?.view()).map_err(to_py)
}

#[pyfunction]
fn nnls_extract(atoms: Vec<Vec<f64>>, a: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
    let dict = Dictionary::new(matrix(atoms)?).map_err(to_py)?;
    Ok(rows(&dictionary::nnls_extract(&dict, matrix(a)?.view()).map_err(to_py)?.values))
}

#[pyfunction]
fn oracle_nnls(atoms: Vec<Vec<f64>>, a_row: Vec<f64>) -> PyResult<Vec<f64>> {
    let dict = Dictionary::new(matrix(atoms)?).map_err(to_py)?;
    Ok(synth::oracle_nnls(&dict, Array1::from(a_row).view()).map_err(to_py)?.to_vec())
}

/// Returns `(features, atoms, objective_history)`.
#[pyfunction]
#[pyo3(signature = (a, k, tol=dictionary::DEFAULT_TOL, max_iter=dictionary::DEFAULT_MAX_ITER, seed=0))]
fn nmf_fit(a: Vec<Vec<f64>>, k: usize, tol: f64, max_iter: usize, seed: u64) -> PyResult<(Vec<Vec<f64>>, Vec<Vec<f64>>, Vec<f64>)> {
    let (z, dict) = dictionary::nmf_fit(matrix(a)?.view(), k, tol, max_iter, seed).map_err(to_py)?;
    let history = dict.training_meta.as_ref().map(|m| m.objective_history.clone()).unwrap_or_default();
    Ok((rows(&z.values), rows(&dict.atoms), history))
}

#[pyfunction]
#[pyo3(signature = (acts, z, fractions=flow::DEFAULT_MASK_FRACTIONS.to_vec(), n_masks=flow::DEFAULT_N_MASKS, seed=0))]
fn redundancy(acts: Vec<Vec<f64>>, z: Vec<f64>, fractions: Vec<f64>, n_masks: usize, seed: u64) -> PyResult<(f64, Vec<(f64, f64)>)> {
    let score = flow::redundancy(matrix(acts)?.view(), Array1::from(z).view(), &fractions, n_masks, seed).map_err(to_py)?;
    Ok((score.aggregate, score.per_fraction))
}

/// Per-feature importance records for the given target classes.
#[pyfunction]
fn importance<'py>(
    py: Python<'py>,
    features: Vec<Vec<f64>>,
    atoms: Vec<Vec<f64>>,
    head_weights: Vec<Vec<f64>>,
    targets: Vec<usize>,
) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let values = matrix(features)?;
    let ids = (0..values.nrows() as u64).collect();
    let features = FeatureMatrix::new(values, ids).map_err(to_py)?;
    let dict = Dictionary::new(matrix(atoms)?).map_err(to_py)?;
    let head = attribution::fold_head(&dict, matrix(head_weights)?.view()).map_err(to_py)?;
    let report = attribution::importance(&features, &head, &targets).map_err(to_py)?;
    report
        .per_feature
        .iter()
        .map(|f| {
            let d = PyDict::new(py);
            d.set_item("feature_id", f.feature_id)?;
            d.set_item("importance", f.importance)?;
            d.set_item("mean_signed", f.mean_signed)?;
            d.set_item("inhibitor", f.inhibitor)?;
            d.set_item("activation_frequency", f.activation_frequency)?;
            Ok(d)
        })
        .collect()
}

/// Returns `(assignments, centroids)`.
#[pyfunction]
#[pyo3(signature = (points, n_clusters, seed=0, max_iter=300))]
fn kmeans(points: Vec<Vec<f64>>, n_clusters: usize, seed: u64, max_iter: usize) -> PyResult<(Vec<usize>, Vec<Vec<f64>>)> {
    let fit = numkit::kmeans(matrix(points)?.view(), n_clusters, seed, max_iter).map_err(to_py)?;
    Ok((fit.assignments, rows(&fit.centroids)))
}

/// Returns `(rho, p_value)`.
#[pyfunction]
#[pyo3(signature = (x, y, n_permutations=numkit::DEFAULT_PERMUTATIONS, seed=0))]
fn spearman(x: Vec<f64>, y: Vec<f64>, n_permutations: usize, seed: u64) -> PyResult<(f64, f64)> {
    let c = numkit::spearman(&x, &y, n_permutations, seed).map_err(to_py)?;
    Ok((c.rho, c.p_value))
}

/// Generates a planted experiment from a JSON spec string; returns the manifest path.
#[pyfunction]
fn synth_generate(spec_json: &str, out_dir: &str) -> PyResult<String> {
    let spec: synth::PlantSpec = serde_json::from_str(spec_json).map_err(|e| PyValueError::new_err(e.to_string()))?;
    synth::generate(&spec, out_dir).map_err(to_py)?;
    Ok(std::path::Path::new(out_dir).join("manifest.json").display().to_string())
}

/// `(K, lambda)` per feature of the manifest's feature matrix.
#[pyfunction]
#[pyo3(signature = (manifest_path, lambda_rel=numkit::DEFAULT_LAMBDA_REL))]
fn complexity_profiles(manifest_path: &str, lambda_rel: f64) -> PyResult<Vec<(Option<f64>, Option<f64>)>> {
    let manifest = acts_io::Manifest::load(manifest_path).map_err(to_py)?;
    let features = FeatureMatrix::load(manifest.features_path().map_err(to_py)?).map_err(to_py)?;
    let profiles = vinformation::batch_profiles(&manifest, &features, lambda_rel).map_err(to_py)?;
    Ok(profiles.into_iter().map(|p| (p.complexity_k, p.lambda_ttd)).collect())
}

/// Runs the command-line interface with `args` (without the program name).
#[pyfunction]
fn run_cli(args: Vec<String>) -> i32 {
    featurescope::cli::run(std::iter::once("featurescope".to_string()).chain(args))
}

#[pymodule]
#[pyo3(name = "featurescope")]
fn featurescope_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyDump>()?;
    m.add_function(wrap_pyfunction!(read_dump, m)?)?;
    m.add_function(wrap_pyfunction!(write_dump, m)?)?;
    m.add_function(wrap_pyfunction!(v_information, m)?)?;
    m.add_function(wrap_pyfunction!(oracle_vinfo, m)?)?;
    m.add_function(wrap_pyfunction!(cka, m)?)?;
    m.add_function(wrap_pyfunction!(nnls_extract, m)?)?;
    m.add_function(wrap_pyfunction!(oracle_nnls, m)?)?;
    m.add_function(wrap_pyfunction!(nmf_fit, m)?)?;
    m.add_function(wrap_pyfunction!(redundancy, m)?)?;
    m.add_function(wrap_pyfunction!(importance, m)?)?;
    m.add_function(wrap_pyfunction!(kmeans, m)?)?;
    m.add_function(wrap_pyfunction!(spearman, m)?)?;
    m.add_function(wrap_pyfunction!(synth_generate, m)?)?;
    m.add_function(wrap_pyfunction!(complexity_profiles, m)?)?;
    m.add_function(wrap_pyfunction!(run_cli, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
