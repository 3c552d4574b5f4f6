//! Python bindings: checkpoints and inference, the metric kernels, manifest
//! checks, the shape set, and the full command line.

use std::path::PathBuf;

use gscope::dataset::{build_label_space, load_manifest, validate_manifest};
use gscope::imaging::{to_input, Image};
use gscope::nn::gradcheck::{finite_diff_grad_check_with, GradCheckOptions};
use gscope::nn::network::sample_gradients;
use gscope::nn::{NetworkSpec, Params};
use gscope::train::{
    load_checkpoint, predict_images, save_checkpoint, Checkpoint, HyperParams, Provenance, ShapeDataset, Stage,
};
use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;
use pyo3::types::PyBytes;

create_exception!(pygscope, GscopeError, PyException);

fn py_err(e: gscope::Error) -> PyErr {
    GscopeError::new_err(e.to_string())
}

fn image_from_bytes(data: &[u8], width: u32, height: u32) -> PyResult<Image> {
    Image::from_raw(width, height, data.to_vec()).ok_or_else(|| {
        GscopeError::new_err(format!(
            "expected {} bytes of RGB data for {width}x{height}, got {}",
            width as usize * height as usize * 3,
            data.len()
        ))
    })
}

/// A network spec with its parameters and label list.
#[pyclass(module = "pygscope")]
struct Network {
    ckpt: Checkpoint,
}

#[pymethods]
impl Network {
    /// Freshly initialized VGG-nano for `classes` outputs.
    #[staticmethod]
    #[pyo3(signature = (classes, seed=0))]
    fn vgg_nano(classes: usize, seed: u64) -> PyResult<Network> {
        let spec = NetworkSpec::vgg_nano(classes);
        let params = Params::init(&spec, seed).map_err(py_err)?;
        let provenance = Provenance {
            stage: Stage::Pretrained,
            seed,
            epochs: 0,
            hyper: HyperParams::default(),
            source_hash: String::new(),
            labels: (0..classes).map(|c| format!("class_{c}")).collect(),
            held_out: None,
            parent: None,
        };
        let ckpt = Checkpoint::new(spec, params, provenance).map_err(py_err)?;
        Ok(Network { ckpt })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Network> {
        Ok(Network {
            ckpt: load_checkpoint(&path).map_err(py_err)?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        save_checkpoint(&self.ckpt, &path).map_err(py_err)
    }

    #[getter]
    fn classes(&self) -> usize {
        self.ckpt.spec.classes
    }

    #[getter]
    fn labels(&self) -> Vec<String> {
        self.ckpt.provenance.labels.clone()
    }

    #[getter]
    fn input_size(&self) -> (usize, usize) {
        (self.ckpt.spec.input.width, self.ckpt.spec.input.height)
    }

    #[getter]
    fn param_count(&self) -> usize {
        self.ckpt.params.count()
    }

    fn params_hash(&self) -> String {
        self.ckpt.params_hash()
    }

    fn spec_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.ckpt.spec).map_err(|e| GscopeError::new_err(e.to_string()))
    }

    fn provenance_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.ckpt.provenance).map_err(|e| GscopeError::new_err(e.to_string()))
    }

    /// Class scores for one RGB image given as packed bytes.
    fn predict(&self, py: Python<'_>, data: &[u8], width: u32, height: u32) -> PyResult<Vec<f32>> {
        let img = image_from_bytes(data, width, height)?;
        let ckpt = &self.ckpt;
        let mut out = py
            .detach(|| predict_images(&ckpt.spec, &ckpt.params, std::slice::from_ref(&img)))
            .map_err(py_err)?;
        Ok(out.pop().unwrap_or_default())
    }

    /// Labels ordered by descending score.
    #[pyo3(signature = (data, width, height, k=5))]
    fn top_k(&self, py: Python<'_>, data: &[u8], width: u32, height: u32, k: usize) -> PyResult<Vec<(String, f32)>> {
        let scores = self.predict(py, data, width, height)?;
        let mut order: Vec<usize> = (0..scores.len()).collect();
        order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
        Ok(order
            .into_iter()
            .take(k)
            .map(|i| (self.ckpt.provenance.labels[i].clone(), scores[i]))
            .collect())
    }

    /// Finite-difference check of the analytic gradient on one image;
    /// returns (passed, worst relative error).
    #[pyo3(signature = (data, width, height, target, step=1e-3, tolerance=1e-3, max_entries=8))]
    #[allow(clippy::too_many_arguments)]
    fn grad_check(
        &self,
        py: Python<'_>,
        data: &[u8],
        width: u32,
        height: u32,
        target: usize,
        step: f64,
        tolerance: f64,
        max_entries: usize,
    ) -> PyResult<(bool, f64)> {
        let img = image_from_bytes(data, width, height)?;
        let ckpt = &self.ckpt;
        let input = to_input(&img, ckpt.spec.input).map_err(py_err)?;
        let mut opts = GradCheckOptions::new(step, tolerance);
        opts.max_entries_per_tensor = Some(max_entries);
        let report = py.detach(|| {
            finite_diff_grad_check_with(&ckpt.spec, &ckpt.params, &input, target, opts, |s, p, x, t| {
                sample_gradients(s, p, x, t).map(|(_, _, g)| g)
            })
        });
        if let Some(e) = report.error {
            return Err(GscopeError::new_err(e));
        }
        Ok((report.passed(), report.worst()))
    }
}

/// Whether `pred` is among the first `k` entries of the ordered ground truth.
#[pyfunction]
fn topk_hit(pred: &str, ordered_gt: Vec<String>, k: usize) -> bool {
    gscope::eval::topk_hit(pred, &ordered_gt, k)
}

/// Per-k mean and sample standard deviation over split curves.
#[pyfunction]
fn aggregate_splits(curves: Vec<Vec<f64>>) -> PyResult<(Vec<f64>, Vec<f64>)> {
    gscope::eval::aggregate_splits(&curves).map_err(py_err)
}

#[pyfunction]
fn derive_seed(master: u64, tag: &str, index: u64) -> u64 {
    gscope::fsio::derive_seed(master, tag, index)
}

/// Rule violations of a manifest file as (field, message) pairs.
#[pyfunction]
fn manifest_violations(path: PathBuf) -> PyResult<Vec<(String, String)>> {
    let text = std::fs::read_to_string(&path).map_err(|e| GscopeError::new_err(format!("{}: {e}", path.display())))?;
    let m: gscope::dataset::GalleryManifest = serde_json::from_str(&text).map_err(|e| GscopeError::new_err(format!("{}: {e}", path.display())))?;
    Ok(validate_manifest(&m).into_iter().map(|v| (v.field, v.message)).collect())
}

/// Class labels of a manifest in network output order.
#[pyfunction]
fn label_space(path: PathBuf) -> PyResult<Vec<String>> {
    let m = load_manifest(&path).map_err(py_err)?;
    Ok(build_label_space(&m).labels().to_vec())
}

/// Generic pre-training images as (rgb_bytes, label) pairs.
#[pyfunction]
#[pyo3(signature = (n, size=64, seed=0))]
fn shape_dataset<'py>(py: Python<'py>, n: usize, size: u32, seed: u64) -> PyResult<Vec<(Bound<'py, PyBytes>, usize)>> {
    let ds = py.detach(|| ShapeDataset::generate(n, size, seed)).map_err(py_err)?;
    Ok(ds
        .images
        .iter()
        .zip(&ds.labels)
        .map(|(img, &l)| (PyBytes::new(py, img.as_raw()), l))
        .collect())
}

/// Run the command line with `args` (without the program name).
#[pyfunction]
fn run_cli(py: Python<'_>, args: Vec<String>) -> PyResult<()> {
    py.detach(|| gscope::cli::run_args(args)).map_err(py_err)
}

#[pymodule]
fn pygscope(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("GscopeError", m.py().get_type::<GscopeError>())?;
    m.add_class::<Network>()?;
    m.add_function(wrap_pyfunction!(topk_hit, m)?)?;
    m.add_function(wrap_pyfunction!(aggregate_splits, m)?)?;
    m.add_function(wrap_pyfunction!(derive_seed, m)?)?;
    m.add_function(wrap_pyfunction!(manifest_violations, m)?)?;
    m.add_function(wrap_pyfunction!(label_space, m)?)?;
    m.add_function(wrap_pyfunction!(shape_dataset, m)?)?;
    m.add_function(wrap_pyfunction!(run_cli, m)?)?;
    Ok(())
}
