//! Python bindings: configuration, training, evaluation, the channel, and
//! the trained transceivers.

use std::path::PathBuf;

use ndarray::Array2;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use sbrnn_core::channel::{ChannelPlan, NoiseDraw};
use sbrnn_core::estimation::{gray_code, sliding_estimate, ErrorReport};
use sbrnn_core::harness::{self, GradCheckConfig, GradPath, SystemKind};
use sbrnn_core::transceiver::{MessageBatch, StateCarry};

fn err(e: sbrnn_core::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn carry(name: &str) -> PyResult<StateCarry> {
    match name {
        "forward-only" => Ok(StateCarry::ForwardOnly),
        "both" => Ok(StateCarry::Both),
        "none" => Ok(StateCarry::None),
        other => Err(PyValueError::new_err(format!("unknown state carry `{other}`"))),
    }
}

fn report_dict<'py>(py: Python<'py>, r: &ErrorReport) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("ber", r.ber)?;
    d.set_item("bler", r.bler)?;
    d.set_item("bit_errors", r.bit_errors)?;
    d.set_item("block_errors", r.block_errors)?;
    d.set_item("evaluated", r.evaluated)?;
    d.set_item("sequences", r.sequences)?;
    Ok(d)
}

/// Run configuration; constructed from TOML text (empty for defaults).
#[pyclass(name = "RunConfig", from_py_object)]
#[derive(Clone)]
struct PyRunConfig {
    inner: harness::RunConfig,
}

#[pymethods]
impl PyRunConfig {
    #[new]
    #[pyo3(signature = (toml = ""))]
    fn new(toml: &str) -> PyResult<Self> {
        Ok(Self {
            inner: harness::RunConfig::from_toml(toml).map_err(err)?,
        })
    }

    fn to_toml(&self) -> PyResult<String> {
        self.inner.to_toml().map_err(err)
    }

    #[getter]
    fn system(&self) -> &'static str {
        self.inner.train.system.name()
    }

    #[getter]
    fn fiber_length_km(&self) -> f64 {
        self.inner.channel.fiber_length_km
    }

    #[getter]
    fn block_len(&self) -> PyResult<usize> {
        self.inner.block_len().map_err(err)
    }

    fn __repr__(&self) -> String {
        format!(
            "RunConfig(system={:?}, rate_gbps={}, fiber_length_km={})",
            self.inner.train.system.name(),
            self.inner.train.rate_gbps,
            self.inner.channel.fiber_length_km
        )
    }
}

/// A trained or freshly initialized system.
#[pyclass(name = "Model")]
struct PyModel {
    inner: harness::Model,
}

#[pymethods]
impl PyModel {
    #[staticmethod]
    #[pyo3(signature = (config, seed = 1))]
    fn init(config: &PyRunConfig, seed: u32) -> PyResult<Self> {
        Ok(Self {
            inner: harness::Model::init(&config.inner, seed).map_err(err)?,
        })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: harness::Model::load(&path).map_err(err)?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save(&path).map_err(err)
    }

    fn to_bytes(&self) -> PyResult<Vec<u8>> {
        self.inner.to_checkpoint().to_bytes().map_err(err)
    }

    #[getter]
    fn system(&self) -> &'static str {
        self.inner.system().name()
    }

    #[getter]
    fn node_count(&self) -> usize {
        self.inner.node_count()
    }

    /// Transmitted blocks for sequences of messages in `1..=M`:
    /// `out[b][t]` is block `t` of sequence `b`.
    fn encode(&self, sequences: Vec<Vec<usize>>) -> PyResult<Vec<Vec<Vec<f64>>>> {
        let ae = self.autoencoder()?;
        let batch = MessageBatch::from_sequences(&sequences, ae.alphabet()).map_err(err)?;
        let blocks = ae.encode(&batch).map_err(err)?;
        Ok((0..sequences.len())
            .map(|b| blocks.iter().map(|blk| blk.row(b).to_vec()).collect())
            .collect())
    }

    /// Sliding-window decisions (`1..=M`) for received blocks laid out like
    /// the output of [`encode`].
    #[pyo3(signature = (received, window, state_carry = "forward-only"))]
    fn decode(
        &self,
        received: Vec<Vec<Vec<f64>>>,
        window: usize,
        state_carry: &str,
    ) -> PyResult<Vec<Vec<usize>>> {
        let ae = self.autoencoder()?;
        let batch = received.len();
        let len = received.first().map_or(0, Vec::len);
        let n = ae.block_len();
        let mut blocks = vec![Array2::zeros((batch, n)); len];
        for (b, seq) in received.iter().enumerate() {
            if seq.len() != len {
                return Err(PyValueError::new_err("sequences differ in length"));
            }
            for (t, block) in seq.iter().enumerate() {
                if block.len() != n {
                    return Err(PyValueError::new_err(format!("blocks must have {n} samples")));
                }
                blocks[t].row_mut(b).iter_mut().zip(block).for_each(|(d, &s)| *d = s);
            }
        }
        let fused = sliding_estimate(ae, &blocks, window, carry(state_carry)?).map_err(err)?;
        Ok(fused.iter().map(|f| f.decisions()).collect())
    }
}

impl PyModel {
    fn autoencoder(&self) -> PyResult<&dyn sbrnn_core::transceiver::Autoencoder> {
        self.inner
            .autoencoder()
            .ok_or_else(|| PyValueError::new_err("not an autoencoder"))
    }
}

/// Trains the configured system; returns the model and the loss trace.
#[pyfunction]
fn train(py: Python<'_>, config: &PyRunConfig) -> PyResult<(PyModel, Vec<f64>)> {
    let cfg = config.inner.clone();
    let trained = py.detach(|| harness::train(&cfg)).map_err(err)?;
    Ok((PyModel { inner: trained.model }, trained.record.loss_trace))
}

/// Error rates of `model` on the configured test campaign.
#[pyfunction]
fn evaluate<'py>(py: Python<'py>, config: &PyRunConfig, model: &PyModel) -> PyResult<Bound<'py, PyDict>> {
    let report = harness::evaluate(&config.inner, &model.inner).map_err(err)?;
    report_dict(py, &report)
}

/// One pass of `tx` (samples at the simulation rate) through the configured
/// channel with the noise realization `(seed, stream)`.
#[pyfunction]
#[pyo3(signature = (config, tx, seed = 0, stream = 0))]
fn channel(config: &PyRunConfig, tx: Vec<f64>, seed: u64, stream: u64) -> PyResult<Vec<f64>> {
    let plan = ChannelPlan::new(&config.inner.channel, tx.len()).map_err(err)?;
    plan.run(&tx, &plan.sample_noise(NoiseDraw::new(seed, stream)))
        .map_err(err)
}

/// Maximum relative gradient error on path `vanilla`, `lstm-gru`, or `channel`.
#[pyfunction]
#[pyo3(signature = (path, seed = 11))]
fn grad_check(path: &str, seed: u64) -> PyResult<f64> {
    let path = match path {
        "vanilla" => GradPath::Vanilla,
        "lstm-gru" => GradPath::LstmGru,
        "channel" => GradPath::Channel,
        other => return Err(PyValueError::new_err(format!("unknown path `{other}`"))),
    };
    let cfg = GradCheckConfig {
        seed,
        ..GradCheckConfig::default()
    };
    Ok(harness::grad_check(path, &cfg).map_err(err)?.max_relative_error)
}

/// Node count of `system` at `rate_gbps` computed from parameter shapes.
#[pyfunction]
fn param_count(system: &str, rate_gbps: u32) -> PyResult<usize> {
    let mut cfg = harness::RunConfig::default();
    cfg.train.system = SystemKind::parse(system).map_err(err)?;
    cfg.train.rate_gbps = rate_gbps;
    Ok(harness::Model::init(&cfg, 0).map_err(err)?.node_count())
}

#[pyfunction]
fn mersenne_messages(seed: u32, alphabet: usize, count: usize) -> Vec<usize> {
    harness::mersenne_stream(seed, alphabet).take(count)
}

#[pyfunction]
fn tausworthe_messages(seed: u32, alphabet: usize, count: usize) -> Vec<usize> {
    harness::tausworthe_stream(seed, alphabet).take(count)
}

/// Gray-coded bits of message `m` in `1..=M`, most significant first.
#[pyfunction]
fn gray_bits(m: usize, alphabet: usize) -> PyResult<Vec<u32>> {
    Ok(gray_code(m, alphabet).map_err(err)?.into_iter().map(u32::from).collect())
}

#[pymodule]
fn sbrnn(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyRunConfig>()?;
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(channel, m)?)?;
    m.add_function(wrap_pyfunction!(grad_check, m)?)?;
    m.add_function(wrap_pyfunction!(param_count, m)?)?;
    m.add_function(wrap_pyfunction!(mersenne_messages, m)?)?;
    m.add_function(wrap_pyfunction!(tausworthe_messages, m)?)?;
    m.add_function(wrap_pyfunction!(gray_bits, m)?)?;
    Ok(())
}
