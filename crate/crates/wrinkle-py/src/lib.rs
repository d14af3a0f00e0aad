//! Python bindings: grids, coefficient fields, the solver with its
//! diagnostics, plate deformations, the repair and the experiment harness.
//! Structured results cross the boundary as JSON strings.

use std::path::PathBuf;

use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;

use wrinkle::cascade;
use wrinkle::diagnostics::{self, X_LO};
use wrinkle::error::WrinkleError;
use wrinkle::experiments::{self, ExperimentConfig};
use wrinkle::fvk;
use wrinkle::grid::{GridSpec, XGrid};
use wrinkle::repair::{self, RepairOptions, TwoSidedField};
use wrinkle::solver::SolveOptions;
use wrinkle::spectral;

create_exception!(wrinkle_py, WrinkleException, PyException);

fn err(e: WrinkleError) -> PyErr {
    WrinkleException::new_err(e.to_string())
}

fn json<T: serde::Serialize>(v: &T) -> PyResult<String> {
    serde_json::to_string(v).map_err(|e| err(e.into()))
}

fn log_linear(n: usize) -> PyResult<XGrid> {
    XGrid::log_linear(n, 1e-4, 2.0).map_err(err)
}

/// Coefficient field `a_k(x)` on a frequency grid and an x-grid.
#[pyclass(module = "wrinkle_py", frozen)]
struct CoefficientField {
    inner: spectral::CoefficientField,
}

#[pymethods]
impl CoefficientField {
    /// Parses the JSON form.
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(CoefficientField { inner: spectral::CoefficientField::from_json(text).map_err(err)? })
    }

    fn to_json(&self) -> PyResult<String> {
        self.inner.to_json().map_err(err)
    }

    /// Half-period `L`.
    #[getter]
    fn l(&self) -> f64 {
        self.inner.l()
    }

    /// Mode indices `m` with `k = pi m / L`.
    #[getter]
    fn modes(&self) -> Vec<u32> {
        self.inner.freq().modes().to_vec()
    }

    /// x-grid nodes.
    #[getter]
    fn x(&self) -> Vec<f64> {
        self.inner.xgrid().nodes().to_vec()
    }

    /// Amplitudes of the mode at position `j`.
    fn row(&self, j: usize) -> PyResult<Vec<f64>> {
        if j >= self.inner.freq().len() {
            return Err(WrinkleException::new_err(format!("mode position {j} out of range")));
        }
        Ok(self.inner.row(j).to_vec())
    }

    /// `(total, membrane, bending)` of the scalar functional.
    fn energy(&self) -> (f64, f64, f64) {
        let e = self.inner.energy();
        (e.total, e.membrane, e.bending)
    }

    /// `sum a_k^2 k^2 - 2x` per node.
    fn constraint_residual(&self) -> Vec<f64> {
        self.inner.constraint_residual()
    }

    /// Periodic extension to `n L`.
    fn periodic_extend(&self, n: u32) -> PyResult<Self> {
        Ok(CoefficientField { inner: self.inner.periodic_extend(n).map_err(err)? })
    }

    fn __repr__(&self) -> String {
        format!(
            "CoefficientField(L={}, modes={}, nodes={})",
            self.inner.l(),
            self.inner.freq().len(),
            self.inner.xgrid().len()
        )
    }
}

/// Minimizer with its diagnostics.
#[pyclass(module = "wrinkle_py", frozen)]
struct SolveResult {
    inner: diagnostics::SolveResult,
}

#[pymethods]
impl SolveResult {
    #[getter]
    fn sigma(&self) -> f64 {
        self.inner.sigma_estimate
    }

    #[getter]
    fn converged(&self) -> bool {
        self.inner.converged
    }

    #[getter]
    fn iterations(&self) -> usize {
        self.inner.iterations
    }

    #[getter]
    fn el_residual(&self) -> f64 {
        self.inner.el.aggregate
    }

    #[getter]
    fn field(&self) -> CoefficientField {
        CoefficientField { inner: self.inner.field.clone() }
    }

    /// Pointwise multiplier `lambda(x)` (`None` where not recoverable).
    fn lambda_(&self) -> Vec<Option<f64>> {
        self.inner.multiplier.lambda.iter().map(|v| v.is_finite().then_some(*v)).collect()
    }

    /// Atom of the multiplier at `x = 1`.
    #[getter]
    fn atom(&self) -> f64 {
        self.inner.multiplier.atom
    }

    fn to_json(&self) -> PyResult<String> {
        self.inner.to_json().map_err(err)
    }

    /// Structural checks as JSON.
    fn checks_json(&self) -> PyResult<String> {
        diagnostics::structural_checks(&self.inner).to_json().map_err(err)
    }

    /// Structural checks as a text table.
    fn checks_text(&self) -> String {
        diagnostics::structural_checks(&self.inner).to_text()
    }

    /// Regularity envelopes on `[x_lo, 1]` as JSON.
    #[pyo3(signature = (x_lo = X_LO))]
    fn regularity_json(&self, x_lo: f64) -> PyResult<String> {
        json(&diagnostics::regularity_report(&self.inner.field, x_lo))
    }
}

/// Plate deformation on `[-1, 1] x [-L, L]`.
#[pyclass(module = "wrinkle_py", frozen)]
struct DeformationField {
    inner: fvk::DeformationField,
}

#[pymethods]
impl DeformationField {
    /// Planar compression `u3 = 0, W1 = -x, W2 = 0` on `2 n_half + 1` uniform nodes.
    #[staticmethod]
    fn planar(l: f64, n_half: usize, ny: usize) -> PyResult<Self> {
        let d = fvk::DeformationField::planar(l, fvk::uniform_nodes(n_half), ny).map_err(err)?;
        Ok(DeformationField { inner: d })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(DeformationField { inner: fvk::DeformationField::from_json(text).map_err(err)? })
    }

    fn to_json(&self) -> PyResult<String> {
        self.inner.to_json().map_err(err)
    }

    #[getter]
    fn l(&self) -> f64 {
        self.inner.l
    }

    /// Rescaled energy terms as a JSON object.
    fn evaluate(&self) -> PyResult<String> {
        json(&fvk::evaluate_el(&self.inner).map_err(err)?)
    }

    /// `E_L` of the deformation.
    fn energy(&self) -> PyResult<f64> {
        Ok(fvk::evaluate_el(&self.inner).map_err(err)?.total)
    }
}

/// Solves the coefficient problem at half-period `l`.
#[pyfunction]
#[pyo3(signature = (l, grid_n = 400, modes_per_unit = 32, seed = 0, restarts = 3))]
fn solve(l: f64, grid_n: usize, modes_per_unit: u32, seed: u64, restarts: usize) -> PyResult<SolveResult> {
    let cfg = ExperimentConfig {
        grid: GridSpec::LogLinear { n: grid_n, x_c: 1e-4, beta: 2.0 },
        modes_per_unit,
        seed,
        solver: SolveOptions { restarts, ..Default::default() },
        ..Default::default()
    };
    let (res, _) = experiments::run_single(&cfg, l).map_err(err)?;
    Ok(SolveResult { inner: res })
}

/// Dyadic cascade on `[0, b]` at half-period `l`.
#[pyfunction]
#[pyo3(signature = (l, b = 1.0, grid_n = 400))]
fn build_cascade(l: f64, b: f64, grid_n: usize) -> PyResult<CoefficientField> {
    let c = cascade::build_cascade(l, b, &log_linear(grid_n)?, None).map_err(err)?;
    Ok(CoefficientField { inner: c.field })
}

/// Plate deformation built from a minimizer at `L0` on `L = copies L0`.
#[pyfunction]
#[pyo3(signature = (minimizer, copies, delta, neg_intervals = 64))]
fn assemble_upper_bound(
    minimizer: &CoefficientField,
    copies: u32,
    delta: f64,
    neg_intervals: usize,
) -> PyResult<DeformationField> {
    let opts = fvk::AssemblyOptions { ny: None, neg_intervals };
    let d = fvk::assemble_upper_bound(&minimizer.inner, copies, delta, &opts).map_err(err)?;
    Ok(DeformationField { inner: d })
}

/// Repairs a one-sided field (odd extension) and returns the budget and
/// feasibility margin as JSON.
#[pyfunction]
#[pyo3(signature = (field, eta = None, neg_intervals = 64))]
fn repair_field(field: &CoefficientField, eta: Option<f64>, neg_intervals: usize) -> PyResult<String> {
    let v = TwoSidedField::from_one_sided(&field.inner, neg_intervals).map_err(err)?;
    let out = repair::repair(&v, &RepairOptions { eta, ..Default::default() }).map_err(err)?;
    json(&serde_json::json!({ "budget": out.budget, "feasibility_margin": out.feasibility_margin }))
}

/// Lower-bound certificate of a deformation as JSON.
#[pyfunction]
#[pyo3(signature = (deformation, sigma_hat, eta = None))]
fn lower_bound_certificate(deformation: &DeformationField, sigma_hat: f64, eta: Option<f64>) -> PyResult<String> {
    let opts = RepairOptions { eta, ..Default::default() };
    json(&repair::lower_bound_certificate(&deformation.inner, sigma_hat, &opts).map_err(err)?)
}

fn config(config_json: &str) -> PyResult<ExperimentConfig> {
    let cfg: ExperimentConfig = serde_json::from_str(config_json).map_err(|e| err(e.into()))?;
    cfg.validate().map_err(err)?;
    Ok(cfg)
}

/// Default experiment configuration as JSON.
#[pyfunction]
fn default_config() -> PyResult<String> {
    json(&ExperimentConfig::default())
}

/// Hash identifying the results of a configuration.
#[pyfunction]
fn config_hash(config_json: &str) -> PyResult<String> {
    Ok(config(config_json)?.hash())
}

/// Runs the sigma scan of a JSON configuration; returns its summary as JSON.
#[pyfunction]
fn sigma_scan(config_json: &str) -> PyResult<String> {
    json(&experiments::sigma_scan(&config(config_json)?).map_err(err)?)
}

/// Runs the scaling experiment; returns its table as JSON.
#[pyfunction]
fn scaling_law(config_json: &str) -> PyResult<String> {
    json(&experiments::scaling_law(&config(config_json)?).map_err(err)?)
}

/// Runs the repair test; returns its table as JSON.
#[pyfunction]
fn repair_test(config_json: &str) -> PyResult<String> {
    json(&experiments::repair_test(&config(config_json)?).map_err(err)?)
}

/// Writes `report.md` and `report.json` into `out_dir`; returns the markdown.
#[pyfunction]
fn report(out_dir: PathBuf) -> PyResult<String> {
    Ok(experiments::report(&out_dir).map_err(err)?.to_markdown())
}

/// Leading-order plate energy.
#[pyfunction]
fn e0() -> f64 {
    fvk::E0
}

#[pymodule]
fn wrinkle_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("WrinkleException", m.py().get_type::<WrinkleException>())?;
    m.add_class::<CoefficientField>()?;
    m.add_class::<SolveResult>()?;
    m.add_class::<DeformationField>()?;
    m.add_function(wrap_pyfunction!(solve, m)?)?;
    m.add_function(wrap_pyfunction!(build_cascade, m)?)?;
    m.add_function(wrap_pyfunction!(assemble_upper_bound, m)?)?;
    m.add_function(wrap_pyfunction!(repair_field, m)?)?;
    m.add_function(wrap_pyfunction!(lower_bound_certificate, m)?)?;
    m.add_function(wrap_pyfunction!(default_config, m)?)?;
    m.add_function(wrap_pyfunction!(config_hash, m)?)?;
    m.add_function(wrap_pyfunction!(sigma_scan, m)?)?;
    m.add_function(wrap_pyfunction!(scaling_law, m)?)?;
    m.add_function(wrap_pyfunction!(repair_test, m)?)?;
    m.add_function(wrap_pyfunction!(report, m)?)?;
    m.add_function(wrap_pyfunction!(e0, m)?)?;
    Ok(())
}
