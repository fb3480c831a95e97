use nalgebra::DMatrix;
use num_complex::Complex64;
use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyBytes, PyDict};

use mimo_ae::autoencoder::{self, AutoencoderConfig, AutoencoderModel, MseNormalization};
use mimo_ae::detectors::{self, AdmmParams};
use mimo_ae::evaluation::{self, EvalConfig};
use mimo_ae::fronthaul::{self, BandwidthLedger, Precision};
use mimo_ae::signal_model::{self, CMatrix, CoherenceBlock, Constellation, SystemConfig};
use mimo_ae::Error;

fn err(e: Error) -> PyErr {
    match e {
        Error::Config(_) | Error::Dimension(_) | Error::MalformedFrame(_) | Error::Csv { .. } => {
            PyValueError::new_err(e.to_string())
        }
        Error::Io { .. } => PyIOError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn rows_to_matrix<T: nalgebra::Scalar + Copy>(rows: &[Vec<T>]) -> PyResult<DMatrix<T>> {
    let n = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != n) {
        return Err(PyValueError::new_err("ragged matrix rows"));
    }
    Ok(DMatrix::from_fn(rows.len(), n, |i, j| rows[i][j]))
}

fn matrix_to_rows<T: nalgebra::Scalar + Copy>(m: &DMatrix<T>) -> Vec<Vec<T>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn precision(name: &str) -> PyResult<Precision> {
    name.parse().map_err(err)
}

fn system(m: usize, k: usize, seed: u64, constellation: &str) -> PyResult<SystemConfig> {
    let cfg = SystemConfig {
        constellation: constellation.parse::<Constellation>().map_err(err)?,
        master_seed: seed,
        ..SystemConfig::new(m, k)
    };
    cfg.validate().map_err(err)?;
    Ok(cfg)
}

/// One coherence block: channel `h` (M×K), symbols `tx` (K×84), received `rx` (M×84).
#[pyclass(name = "Block", frozen)]
struct PyBlock {
    inner: CoherenceBlock,
}

#[pymethods]
impl PyBlock {
    #[getter]
    fn block_id(&self) -> u64 {
        self.inner.block_id
    }
    #[getter]
    fn noise_var(&self) -> f64 {
        self.inner.rx.noise_var
    }
    #[getter]
    fn h(&self) -> Vec<Vec<Complex64>> {
        matrix_to_rows(self.inner.channel.matrix())
    }
    #[getter]
    fn tx(&self) -> Vec<Vec<Complex64>> {
        matrix_to_rows(&self.inner.tx.entries)
    }
    #[getter]
    fn rx(&self) -> Vec<Vec<Complex64>> {
        matrix_to_rows(&self.inner.rx.entries)
    }
    fn training_columns(&self, n_cbw: usize) -> Vec<Vec<Complex64>> {
        matrix_to_rows(&self.inner.training_columns(n_cbw))
    }
}

#[pyfunction]
#[pyo3(signature = (m, k, snr_db, block_id, seed=0, constellation="qam16"))]
fn build_block(m: usize, k: usize, snr_db: f64, block_id: u64, seed: u64, constellation: &str) -> PyResult<PyBlock> {
    let cfg = system(m, k, seed, constellation)?;
    let inner = signal_model::build_coherence_block(&cfg, snr_db, block_id).map_err(err)?;
    Ok(PyBlock { inner })
}

#[pyfunction]
fn snr_to_noise_var(snr_db: f64, k: usize) -> f64 {
    signal_model::snr_to_noise_var(snr_db, k)
}

#[pyfunction]
#[pyo3(signature = (h, y, iterations=5))]
fn gs_detect(h: Vec<Vec<Complex64>>, y: Vec<Vec<Complex64>>, iterations: usize) -> PyResult<Vec<Vec<Complex64>>> {
    let r = detectors::gs_detect(&rows_to_matrix(&h)?, &rows_to_matrix(&y)?, iterations).map_err(err)?;
    Ok(matrix_to_rows(&r.s_hat))
}

#[pyfunction]
fn zf_detect(h: Vec<Vec<Complex64>>, y: Vec<Vec<Complex64>>) -> PyResult<Vec<Vec<Complex64>>> {
    let r = detectors::zf_exact(&rows_to_matrix(&h)?, &rows_to_matrix(&y)?).map_err(err)?;
    Ok(matrix_to_rows(&r.s_hat))
}

#[pyfunction]
#[pyo3(signature = (h, y, clusters, rho=1.0, t_outer=5, t_inner=1))]
fn admm_gs_detect(
    h: Vec<Vec<Complex64>>,
    y: Vec<Vec<Complex64>>,
    clusters: usize,
    rho: f64,
    t_outer: usize,
    t_inner: usize,
) -> PyResult<Vec<Vec<Complex64>>> {
    let params = AdmmParams { rho, t_outer, t_inner };
    let p = detectors::partition_clusters(&rows_to_matrix(&h)?, &rows_to_matrix(&y)?, clusters, params)
        .map_err(err)?;
    Ok(matrix_to_rows(&detectors::admm_gs_detect(&p).map_err(err)?.s_hat))
}

/// EVM in percent.
#[pyfunction]
fn evm(s_hat: Vec<Vec<Complex64>>, s: Vec<Vec<Complex64>>) -> PyResult<f64> {
    let (a, b): (CMatrix, CMatrix) = (rows_to_matrix(&s_hat)?, rows_to_matrix(&s)?);
    detectors::evm(&a, &b).map_err(err)
}

fn ledger_dict<'py>(py: Python<'py>, l: &BandwidthLedger) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("mode", l.mode.to_string())?;
    d.set_item("full", l.full_samples)?;
    d.set_item("latent", l.latent_samples)?;
    d.set_item("overhead", l.overhead_samples)?;
    d.set_item("total", l.transferred())?;
    d.set_item("factor", l.effective_factor())?;
    Ok(d)
}

#[pyfunction]
fn paper_sample_count(py: Python<'_>, m: usize, n_cbw: usize, n_slot: usize, n_div: usize) -> PyResult<Bound<'_, PyDict>> {
    ledger_dict(py, &fronthaul::paper_sample_count(m, n_cbw, n_slot, n_div).map_err(err)?)
}

#[pyfunction]
fn actual_sample_count(py: Python<'_>, m: usize, n_cbw: usize, n_slot: usize, n_div: usize) -> PyResult<Bound<'_, PyDict>> {
    ledger_dict(py, &fronthaul::actual_sample_count_for(m, n_cbw, n_slot, n_div).map_err(err)?)
}

/// A trained sparse autoencoder; data matrices are feature rows × sample columns.
#[pyclass(name = "Autoencoder", frozen)]
struct PyAutoencoder {
    inner: AutoencoderModel,
}

#[pymethods]
impl PyAutoencoder {
    #[staticmethod]
    #[pyo3(signature = (x, n_div=8, max_epochs=2000, seed=0, l2_coeff=0.001, sparsity_coeff=1.0, sparsity_target=0.05, per_element=false))]
    #[allow(clippy::too_many_arguments)]
    fn train(
        x: Vec<Vec<f64>>,
        n_div: usize,
        max_epochs: usize,
        seed: u64,
        l2_coeff: f64,
        sparsity_coeff: f64,
        sparsity_target: f64,
        per_element: bool,
    ) -> PyResult<PyAutoencoder> {
        let cfg = AutoencoderConfig {
            n_div,
            max_epochs,
            l2_coeff,
            sparsity_coeff,
            sparsity_target,
            mse: if per_element { MseNormalization::PerElement } else { MseNormalization::PerSample },
            ..AutoencoderConfig::default()
        };
        let x = rows_to_matrix(&x)?;
        let mut rng = signal_model::substream(seed, 0, signal_model::Stream::AutoencoderInit);
        Ok(PyAutoencoder {
            inner: autoencoder::train(&x, &cfg, &mut rng).map_err(err)?,
        })
    }

    #[getter]
    fn input_dim(&self) -> usize {
        self.inner.input_dim()
    }

    #[getter]
    fn latent_dim(&self) -> usize {
        self.inner.latent_dim()
    }

    fn encode(&self, x: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
        let z = self.inner.encoder().encode_matrix(&rows_to_matrix(&x)?).map_err(err)?;
        Ok(matrix_to_rows(&z))
    }

    fn decode(&self, z: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
        let x = self.inner.decoder().decode_matrix(&rows_to_matrix(&z)?).map_err(err)?;
        Ok(matrix_to_rows(&x))
    }

    fn reconstruct(&self, x: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
        Ok(matrix_to_rows(&self.inner.reconstruct_matrix(&rows_to_matrix(&x)?).map_err(err)?))
    }

    #[pyo3(signature = (block_id=0, precision="f32"))]
    fn encoder_frame<'py>(&self, py: Python<'py>, block_id: u64, precision: &str) -> PyResult<Bound<'py, PyBytes>> {
        let f = fronthaul::encoder_frame(&self.inner.encoder(), block_id, self::precision(precision)?).map_err(err)?;
        Ok(PyBytes::new(py, &fronthaul::serialize(&f).map_err(err)?))
    }

    #[pyo3(signature = (block_id=0, precision="f32"))]
    fn decoder_frame<'py>(&self, py: Python<'py>, block_id: u64, precision: &str) -> PyResult<Bound<'py, PyBytes>> {
        let f = fronthaul::decoder_frame(&self.inner.decoder(), block_id, self::precision(precision)?).map_err(err)?;
        Ok(PyBytes::new(py, &fronthaul::serialize(&f).map_err(err)?))
    }

    /// Rebuild a model from serialized encoder and decoder frames.
    #[staticmethod]
    fn from_frames(encoder: &[u8], decoder: &[u8]) -> PyResult<PyAutoencoder> {
        let enc = fronthaul::encoder_from_frame(&fronthaul::deserialize(encoder).map_err(err)?).map_err(err)?;
        let dec = fronthaul::decoder_from_frame(&fronthaul::deserialize(decoder).map_err(err)?).map_err(err)?;
        Ok(PyAutoencoder {
            inner: AutoencoderModel::merge(enc, dec).map_err(err)?,
        })
    }
}

/// Stack complex antenna columns into `[Re; Im]` feature rows, optionally
/// augmented with phase rotations.
#[pyfunction]
#[pyo3(signature = (columns, rotations=1))]
fn training_set(columns: Vec<Vec<Complex64>>, rotations: usize) -> PyResult<Vec<Vec<f64>>> {
    Ok(matrix_to_rows(&autoencoder::training_set(&rows_to_matrix(&columns)?, rotations)))
}

/// Header fields and payload of one serialized frame.
#[pyfunction]
fn decode_frame<'py>(py: Python<'py>, data: &[u8]) -> PyResult<Bound<'py, PyDict>> {
    let f = fronthaul::deserialize(data).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("precision", format!("{:?}", f.precision).to_lowercase())?;
    d.set_item("kind", format!("{:?}", f.kind).to_lowercase())?;
    d.set_item("block_id", f.block_id)?;
    d.set_item("rows", f.rows)?;
    d.set_item("cols", f.cols)?;
    d.set_item("m", f.m)?;
    d.set_item("n_div", f.n_div)?;
    d.set_item("payload", f.payload)?;
    Ok(d)
}

/// Run a sweep and return its CSV text.
#[pyfunction]
#[pyo3(signature = (scenarios="full,ae,array,admm", n_div=vec![8], snr_db=vec![0.0, 10.0, 20.0], blocks=4, seed=0, max_epochs=2000, m=64, k=8, clusters=4))]
#[allow(clippy::too_many_arguments)]
fn sweep_csv(
    scenarios: &str,
    n_div: Vec<usize>,
    snr_db: Vec<f64>,
    blocks: usize,
    seed: u64,
    max_epochs: usize,
    m: usize,
    k: usize,
    clusters: usize,
) -> PyResult<String> {
    let mut cfg = EvalConfig {
        system: system(m, k, seed, "qam16")?,
        ..EvalConfig::default()
    };
    cfg.autoencoder.max_epochs = max_epochs;
    let list = evaluation::parse_scenarios(scenarios, &n_div, clusters).map_err(err)?;
    let records = evaluation::sweep(&cfg, &list, &snr_db, blocks).map_err(err)?;
    evaluation::to_csv_string(&records).map_err(err)
}

/// Report text for CSV produced by [`sweep_csv`].
#[pyfunction]
#[pyo3(signature = (csv, m=64, k=8))]
fn report(csv: &str, m: usize, k: usize) -> PyResult<String> {
    let records = evaluation::read_csv(csv.as_bytes()).map_err(err)?;
    evaluation::emit_report(&records, &SystemConfig::new(m, k)).map_err(err)
}

/// `(name, passed, detail)` for each fast invariant check.
#[pyfunction]
fn selftest() -> Vec<(String, bool, String)> {
    mimo_ae::selftest::run(&[])
        .into_iter()
        .map(|c| (c.name.to_string(), c.passed, c.detail))
        .collect()
}

#[pymodule]
fn mimo_ae_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyBlock>()?;
    m.add_class::<PyAutoencoder>()?;
    m.add_function(wrap_pyfunction!(build_block, m)?)?;
    m.add_function(wrap_pyfunction!(snr_to_noise_var, m)?)?;
    m.add_function(wrap_pyfunction!(gs_detect, m)?)?;
    m.add_function(wrap_pyfunction!(zf_detect, m)?)?;
    m.add_function(wrap_pyfunction!(admm_gs_detect, m)?)?;
    m.add_function(wrap_pyfunction!(evm, m)?)?;
    m.add_function(wrap_pyfunction!(paper_sample_count, m)?)?;
    m.add_function(wrap_pyfunction!(actual_sample_count, m)?)?;
    m.add_function(wrap_pyfunction!(training_set, m)?)?;
    m.add_function(wrap_pyfunction!(decode_frame, m)?)?;
    m.add_function(wrap_pyfunction!(sweep_csv, m)?)?;
    m.add_function(wrap_pyfunction!(report, m)?)?;
    m.add_function(wrap_pyfunction!(selftest, m)?)?;
    Ok(())
}
