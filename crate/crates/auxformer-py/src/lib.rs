//! Python bindings: the main types and operations of the auxformer crate.
//!
//! Coordinates cross the boundary as flat row-major lists (frame-major,
//! joint-major, xyz) so the module has no array-library dependency.

use auxformer::eval;
use auxformer::model::{
    load_checkpoint, predict_future, save_checkpoint, HyperConfig, MaskingVariant, ModelParams,
};
use auxformer::motion::MotionSequence as CoreMotion;
use auxformer::numerics::Tensor;
use auxformer::synth::{self, default_nine_joint_skeleton, SynthConfig};
use auxformer::tasks::{
    self, full_loss_grad_check, CorruptionSpec, Dataset, LossConfig, LossWeights, TrainConfig,
    TrainOptions,
};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use std::path::PathBuf;

fn to_py_err(e: auxformer::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// A motion clip: T frames of J joints in millimeters with a past/future split.
#[pyclass(name = "MotionSequence", from_py_object)]
#[derive(Clone)]
struct PyMotionSequence {
    inner: CoreMotion,
}

#[pymethods]
impl PyMotionSequence {
    /// Build from flat row-major coordinates of length t_total*joints*3.
    #[new]
    fn new(coords: Vec<f64>, t_total: usize, joints: usize, t_past: usize) -> PyResult<Self> {
        let tensor = Tensor::new(vec![t_total, joints, 3], coords).map_err(to_py_err)?;
        Ok(PyMotionSequence {
            inner: CoreMotion::new(tensor, t_past).map_err(to_py_err)?,
        })
    }

    #[getter]
    fn t_total(&self) -> usize {
        self.inner.t_total()
    }

    #[getter]
    fn t_past(&self) -> usize {
        self.inner.t_past()
    }

    #[getter]
    fn t_future(&self) -> usize {
        self.inner.t_future()
    }

    #[getter]
    fn joints(&self) -> usize {
        self.inner.joints()
    }

    /// Flat row-major coordinates.
    fn coords(&self) -> Vec<f64> {
        self.inner.coords().data().to_vec()
    }

    /// Flat row-major coordinates of the future frames.
    fn future(&self) -> Vec<f64> {
        self.inner.future().data().to_vec()
    }

    fn coord(&self, t: usize, j: usize) -> PyResult<(f64, f64, f64)> {
        if t >= self.inner.t_total() || j >= self.inner.joints() {
            return Err(PyValueError::new_err("coordinate index out of range"));
        }
        let c = self.inner.coord(t, j);
        Ok((c[0], c[1], c[2]))
    }

    fn __repr__(&self) -> String {
        format!(
            "MotionSequence(t_past={}, t_future={}, joints={})",
            self.inner.t_past(),
            self.inner.t_future(),
            self.inner.joints()
        )
    }
}

/// A trained (or freshly initialized) model bound to one sequence shape.
#[pyclass(name = "Model")]
struct PyModel {
    params: ModelParams,
    hyper: HyperConfig,
    input_scale: f64,
}

fn hyper_from(feature_dim: usize, layers: usize, heads: usize) -> HyperConfig {
    HyperConfig {
        feature_dim,
        layers,
        heads,
        masking_variant: MaskingVariant::PostSoftmaxLiteral,
        paper_literal_masked_update: false,
    }
}

#[pymethods]
impl PyModel {
    #[new]
    #[pyo3(signature = (t_total, joints, feature_dim=16, layers=1, heads=4, seed=0))]
    fn new(
        t_total: usize,
        joints: usize,
        feature_dim: usize,
        layers: usize,
        heads: usize,
        seed: u64,
    ) -> PyResult<Self> {
        let hyper = hyper_from(feature_dim, layers, heads);
        let params = ModelParams::init(t_total, joints, &hyper, seed).map_err(to_py_err)?;
        Ok(PyModel {
            params,
            hyper,
            input_scale: 0.01,
        })
    }

    #[getter]
    fn parameter_count(&self) -> usize {
        self.params.param_count()
    }

    /// Predict the future frames of a clip from its past; returns flat
    /// row-major coordinates of shape t_future*joints*3 in millimeters.
    fn predict(&self, x: &PyMotionSequence) -> PyResult<Vec<f64>> {
        let scaled = x.inner.zero_padded().scaled(self.input_scale);
        let fut = predict_future(&scaled, &self.params, &self.hyper).map_err(to_py_err)?;
        Ok(fut.scale(1.0 / self.input_scale).into_data())
    }

    /// Train in place on a dataset; returns per-epoch rows of
    /// (epoch, loss_total, loss_pred, loss_mask, loss_denoise, val_mpjpe...).
    #[allow(clippy::too_many_arguments)]
    #[pyo3(signature = (
        train_set, val_set, epochs=12, batch_size=16, learning_rate=3e-4,
        mask_prob=0.5, noise_prob=0.3, noise_sigma=50.0,
        alpha_mask=1.0, alpha_denoise=1.0, horizons=vec![2, 4, 8, 10],
        frame_rate=25.0, seed=0
    ))]
    fn train(
        &mut self,
        train_set: Vec<PyMotionSequence>,
        val_set: Vec<PyMotionSequence>,
        epochs: usize,
        batch_size: usize,
        learning_rate: f64,
        mask_prob: f64,
        noise_prob: f64,
        noise_sigma: f64,
        alpha_mask: f64,
        alpha_denoise: f64,
        horizons: Vec<usize>,
        frame_rate: f64,
        seed: u64,
    ) -> PyResult<Vec<(usize, f64, f64, f64, f64, Vec<f64>)>> {
        let data = Dataset {
            train: train_set.into_iter().map(|m| m.inner).collect(),
            val: val_set.into_iter().map(|m| m.inner).collect(),
        };
        let corruption = CorruptionSpec {
            p_mask: mask_prob,
            p_noise: noise_prob,
            sigma: noise_sigma,
            seed,
        };
        let loss = LossConfig {
            weights: LossWeights {
                alpha_mask,
                alpha_denoise,
            },
            ..LossConfig::default()
        };
        let optim = TrainConfig {
            epochs,
            batch_size,
            learning_rate,
            input_scale: self.input_scale,
            ..TrainConfig::default()
        };
        let opts = TrainOptions {
            corruption: &corruption,
            loss: &loss,
            optim: &optim,
            hyper: &self.hyper,
            horizons: &horizons,
            frame_rate,
            seed,
        };
        let report = tasks::train(&data, &mut self.params, &opts).map_err(to_py_err)?;
        Ok(report
            .rows
            .into_iter()
            .map(|r| {
                (
                    r.epoch,
                    r.loss_total,
                    r.loss_pred,
                    r.loss_mask,
                    r.loss_denoise,
                    r.val_mpjpe,
                )
            })
            .collect())
    }

    /// Write the parameters as a binary checkpoint.
    fn save(&self, path: PathBuf) -> PyResult<()> {
        save_checkpoint(&path, &self.params).map_err(to_py_err)
    }

    /// Load parameters from a checkpoint written by `save` (or the CLI).
    #[staticmethod]
    #[pyo3(signature = (path, heads=4))]
    fn load(path: PathBuf, heads: usize) -> PyResult<Self> {
        let params = load_checkpoint(&path).map_err(to_py_err)?;
        let hyper = hyper_from(params.feature_dim(), params.layer_count(), heads);
        params.check_compatible(&hyper).map_err(to_py_err)?;
        Ok(PyModel {
            params,
            hyper,
            input_scale: 0.01,
        })
    }
}

/// Generate smooth synthetic skeleton motion on the built-in 9-joint
/// skeleton.
#[pyfunction]
#[pyo3(signature = (samples, t_past=10, t_future=10, frame_rate=25.0, seed=0))]
fn generate_motions(
    samples: usize,
    t_past: usize,
    t_future: usize,
    frame_rate: f64,
    seed: u64,
) -> PyResult<Vec<PyMotionSequence>> {
    let skel = default_nine_joint_skeleton();
    let cfg = SynthConfig {
        t_past,
        t_future,
        frame_rate,
        seed,
        samples,
        ..SynthConfig::default()
    };
    cfg.validate().map_err(to_py_err)?;
    Ok(synth::generate_dataset(&skel, &cfg)
        .into_iter()
        .map(|inner| PyMotionSequence { inner })
        .collect())
}

/// Mean per-joint position error at a 1-based future-frame horizon. Both
/// arguments are flat row-major t_future*joints*3 coordinate lists.
#[pyfunction]
fn mpjpe(
    pred: Vec<f64>,
    gt: Vec<f64>,
    t_future: usize,
    joints: usize,
    horizon: usize,
) -> PyResult<f64> {
    let p = Tensor::new(vec![t_future, joints, 3], pred).map_err(to_py_err)?;
    let g = Tensor::new(vec![t_future, joints, 3], gt).map_err(to_py_err)?;
    eval::mpjpe(&p, &g, horizon).map_err(to_py_err)
}

/// Repeat-last-frame baseline prediction.
#[pyfunction]
fn zero_velocity_baseline(x: &PyMotionSequence) -> Vec<f64> {
    eval::zero_velocity_baseline(&x.inner).into_data()
}

/// Verify the full three-task loss gradient against central finite
/// differences on a tiny model; returns the max relative error.
#[pyfunction]
#[pyo3(signature = (seed=0))]
fn grad_check(seed: u64) -> PyResult<f64> {
    let hyper = hyper_from(8, 1, 2);
    full_loss_grad_check(&hyper, 2, 2, 2, seed, 1e-5).map_err(to_py_err)
}

/// Write a motion clip in the binary motion format.
#[pyfunction]
fn write_motion(path: PathBuf, x: &PyMotionSequence) -> PyResult<()> {
    synth::write_motion(&path, &x.inner).map_err(to_py_err)
}

/// Read a motion clip written by `write_motion` (or the CLI generator).
#[pyfunction]
fn read_motion(path: PathBuf) -> PyResult<PyMotionSequence> {
    Ok(PyMotionSequence {
        inner: synth::read_motion(&path).map_err(to_py_err)?,
    })
}

#[pymodule]
fn auxformer_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyMotionSequence>()?;
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(generate_motions, m)?)?;
    m.add_function(wrap_pyfunction!(mpjpe, m)?)?;
    m.add_function(wrap_pyfunction!(zero_velocity_baseline, m)?)?;
    m.add_function(wrap_pyfunction!(grad_check, m)?)?;
    m.add_function(wrap_pyfunction!(write_motion, m)?)?;
    m.add_function(wrap_pyfunction!(read_motion, m)?)?;
    Ok(())
}
