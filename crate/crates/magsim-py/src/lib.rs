//! Python bindings for magsim.
//!
//! The module exposes the Gaussian state with its channel operations, the
//! scalar physics relations, and a JSON entry point to the full protocol
//! runner, so a notebook can reproduce anything the CLI computes without
//! touching the filesystem.
//!
//! Quadrature modes are addressed by the same dotted names the CSV output
//! uses: `atom.z_plus`, `atom.y_minus`, `light.s2c`, and so on.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use magsim::config::SimConfig;
use magsim::physics::{self, EnsembleParams, PhysicalConstants, ProbeParams};
use magsim::run::{self, RunOptions};
use magsim::{ModeLabel, QuadratureState};

fn value_err<E: std::fmt::Display>(e: E) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn parse_label(s: &str) -> PyResult<ModeLabel> {
    s.parse().map_err(value_err)
}

fn parse_labels(names: Vec<String>) -> PyResult<Vec<ModeLabel>> {
    names.iter().map(|s| parse_label(s)).collect()
}

fn probe(
    gamma_swap: f64,
    gamma_extra: f64,
    duration: f64,
    xi_squared: f64,
    efficiency: f64,
) -> ProbeParams {
    ProbeParams {
        gamma_swap,
        gamma_extra,
        duration,
        xi_squared,
        efficiency,
    }
}

/// Joint Gaussian state of the atomic and light quadratures.
///
/// Operations return new states; nothing mutates in place except
/// `displace`.
#[pyclass(frozen)]
struct State {
    inner: QuadratureState,
}

impl State {
    fn wrap(inner: QuadratureState) -> State {
        State { inner }
    }
}

#[pymethods]
impl State {
    /// Vacuum (variance 1/2 per quadrature) over the given modes.
    #[staticmethod]
    fn vacuum(labels: Vec<String>) -> PyResult<State> {
        Ok(State::wrap(QuadratureState::vacuum(&parse_labels(labels)?)))
    }

    /// Optically pumped atomic state: every spin quadrature at the
    /// thermal equilibrium variance (1 + thermal_excess) / 2.
    #[staticmethod]
    #[pyo3(signature = (n_cells=2, atoms_per_cell=3.6e11, t2_dark=32e-3, thermal_excess=0.10))]
    fn pumped(
        n_cells: usize,
        atoms_per_cell: f64,
        t2_dark: f64,
        thermal_excess: f64,
    ) -> PyResult<State> {
        let ensemble = EnsembleParams {
            n_cells,
            atoms_per_cell,
            t2_dark,
            thermal_excess,
        };
        Ok(State::wrap(
            magsim::protocol::pumped_state(&ensemble).map_err(value_err)?,
        ))
    }

    fn labels(&self) -> Vec<String> {
        self.inner.labels().iter().map(|l| l.to_string()).collect()
    }

    fn mean_of(&self, label: &str) -> PyResult<f64> {
        self.inner.mean_of(parse_label(label)?).map_err(value_err)
    }

    fn var_of(&self, label: &str) -> PyResult<f64> {
        self.inner.var_of(parse_label(label)?).map_err(value_err)
    }

    fn cov_of(&self, a: &str, b: &str) -> PyResult<f64> {
        self.inner
            .cov_of(parse_label(a)?, parse_label(b)?)
            .map_err(value_err)
    }

    /// EPR variance sum of the joint spin quadratures, in units of two
    /// vacua (< 1 certifies entanglement between the cells).
    fn epr_sum(&self) -> PyResult<f64> {
        let vz = self.inner.var_of(ModeLabel::AtomZPlus).map_err(value_err)?;
        let vy = self.inner.var_of(ModeLabel::AtomYPlus).map_err(value_err)?;
        Ok(magsim::estimation::epr_criterion(vz, vy))
    }

    /// Product state of this state and `other` (disjoint mode sets).
    fn tensor(&self, other: &State) -> PyResult<State> {
        Ok(State::wrap(
            self.inner.tensor(&other.inner).map_err(value_err)?,
        ))
    }

    /// Stroboscopic Faraday pass of one probe pulse through the cells.
    /// The state must already contain the light modes (use `tensor`).
    #[pyo3(signature = (gamma_swap, duration, xi_squared, gamma_extra=0.0, efficiency=1.0))]
    fn faraday_pass(
        &self,
        gamma_swap: f64,
        duration: f64,
        xi_squared: f64,
        gamma_extra: f64,
        efficiency: f64,
    ) -> PyResult<State> {
        let p = probe(gamma_swap, gamma_extra, duration, xi_squared, efficiency);
        let ch = physics::faraday_pass(self.inner.labels(), &p).map_err(value_err)?;
        Ok(State::wrap(self.inner.apply_channel(&ch).map_err(value_err)?))
    }

    /// Relax every atomic mode toward `floor_var` at rate `gamma` for a
    /// time `dt`; light modes are untouched.
    fn decohere(&self, gamma: f64, dt: f64, floor_var: f64) -> PyResult<State> {
        let ch = physics::decoherence_channel(self.inner.labels(), gamma, dt, floor_var)
            .map_err(value_err)?;
        Ok(State::wrap(self.inner.apply_channel(&ch).map_err(value_err)?))
    }

    /// pi pulse on the second cell: flips the sign of every minus mode.
    fn spin_flip(&self) -> PyResult<State> {
        let ch = physics::spin_flip(self.inner.labels()).map_err(value_err)?;
        Ok(State::wrap(self.inner.apply_channel(&ch).map_err(value_err)?))
    }

    /// Beamsplitter loss of the given transmission on every light mode.
    fn detection_loss(&self, efficiency: f64) -> PyResult<State> {
        let ch = physics::detection_loss(self.inner.labels(), efficiency).map_err(value_err)?;
        Ok(State::wrap(self.inner.apply_channel(&ch).map_err(value_err)?))
    }

    /// Posterior state after a homodyne detection of `label` at `outcome`.
    /// The measured mode is removed.
    fn condition_on(&self, label: &str, outcome: f64) -> PyResult<State> {
        Ok(State::wrap(
            self.inner
                .condition_on_outcome(parse_label(label)?, outcome)
                .map_err(value_err)?,
        ))
    }

    /// Reduced state over a subset of modes.
    fn marginal(&self, labels: Vec<String>) -> PyResult<State> {
        Ok(State::wrap(
            self.inner.marginal(&parse_labels(labels)?).map_err(value_err)?,
        ))
    }

    /// Shift the mean of one mode (an RF drive or a calibration tone).
    fn displace(&self, label: &str, by: f64) -> PyResult<State> {
        let mut st = self.inner.clone();
        st.displace_mode(parse_label(label)?, by).map_err(value_err)?;
        Ok(State::wrap(st))
    }

    fn __repr__(&self) -> String {
        format!("State({} modes: {})", self.inner.dim(), self.labels().join(", "))
    }
}

/// Larmor frequency in Hz of the default alkali manifold at a bias field
/// `b_dc` (Tesla).
#[pyfunction]
fn larmor_frequency(b_dc: f64) -> f64 {
    physics::larmor_frequency(&PhysicalConstants::default(), b_dc)
}

/// Back-action broadening factor from the atomic polarizability ratio.
#[pyfunction]
fn xi_squared(polarizability_ratio: f64) -> f64 {
    physics::xi_squared(polarizability_ratio)
}

/// Coupling constant kappa of one probe pulse (xi^2 kappa^2 + t^2 = 1).
#[pyfunction]
fn coupling_constant(gamma_swap: f64, duration: f64, xi_squared: f64) -> f64 {
    physics::coupling_constant(gamma_swap, duration, xi_squared)
}

/// Swap rate that realizes a given kappa^2 for a pulse of `duration`.
#[pyfunction]
fn swap_rate_for_coupling(kappa_squared: f64, xi_squared: f64, duration: f64) -> PyResult<f64> {
    physics::swap_rate_for_coupling(kappa_squared, xi_squared, duration).map_err(value_err)
}

/// Field transmission t = exp(-gamma_swap * duration) of one pulse.
#[pyfunction]
fn pass_transmission(gamma_swap: f64, duration: f64) -> f64 {
    physics::pass_transmission(gamma_swap, duration)
}

/// Projection-noise-limited single-window field resolution and
/// sensitivity.  Returns a dict with `b_min` (T), `sensitivity`
/// (T/sqrt(Hz)), and the decay-corrected `effective_duration` (s).
#[pyfunction]
#[pyo3(signature = (duration, n_cells=2, atoms_per_cell=7.2e11, t2_dark=32e-3, thermal_excess=0.10))]
fn pn_limited_sensitivity<'py>(
    py: Python<'py>,
    duration: f64,
    n_cells: usize,
    atoms_per_cell: f64,
    t2_dark: f64,
    thermal_excess: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let ensemble = EnsembleParams {
        n_cells,
        atoms_per_cell,
        t2_dark,
        thermal_excess,
    };
    let lim = physics::pn_limited_sensitivity(&PhysicalConstants::default(), &ensemble, duration)
        .map_err(value_err)?;
    let d = PyDict::new(py);
    d.set_item("b_min", lim.b_min)?;
    d.set_item("sensitivity", lim.sensitivity)?;
    d.set_item("effective_duration", lim.effective_duration)?;
    Ok(d)
}

/// Variance of one detected lock-in quadrature after a stroboscopic
/// readout pass, in shot units (vacuum = 1/2), for atoms entering the
/// pulse at `atom_var` and relaxing toward `equilibrium_var`.
#[pyfunction]
#[pyo3(signature = (gamma_swap, duration, xi_squared, atom_var, equilibrium_var, gamma_extra=0.0, efficiency=1.0))]
#[allow(clippy::too_many_arguments)]
fn detected_quadrature_variance(
    gamma_swap: f64,
    duration: f64,
    xi_squared: f64,
    atom_var: f64,
    equilibrium_var: f64,
    gamma_extra: f64,
    efficiency: f64,
) -> f64 {
    let p = probe(gamma_swap, gamma_extra, duration, xi_squared, efficiency);
    physics::detected_quadrature_variance(&p, atom_var, equilibrium_var)
}

/// Run a full protocol from a TOML configuration string and return the
/// summary as a JSON string — the same figures the CLI writes to
/// `summary.json`.
///
/// `command` is one of `simulate`, `sweep`, `pn-limit`, `calibrate`,
/// `optimize-mode`, `spectrum`.  Configuration problems raise
/// `ValueError`; failures inside the run raise `RuntimeError`.
#[pyfunction]
#[pyo3(signature = (config_toml, command="simulate", *, seed=1, shots=2000, parallel=true))]
fn run_protocol_json(
    config_toml: &str,
    command: &str,
    seed: u64,
    shots: u64,
    parallel: bool,
) -> PyResult<String> {
    let cfg = SimConfig::from_toml(config_toml).map_err(value_err)?;
    let opts = RunOptions {
        seed,
        shots,
        parallel,
    };
    let runner = match command {
        "simulate" => run::run_simulate,
        "sweep" => run::run_sweep,
        "pn-limit" => run::run_pn_limit,
        "calibrate" => run::run_calibrate,
        "optimize-mode" => run::run_optimize_mode,
        "spectrum" => run::run_spectrum,
        other => {
            return Err(PyValueError::new_err(format!(
                "unknown command `{other}`; expected simulate, sweep, pn-limit, \
                 calibrate, optimize-mode, or spectrum"
            )))
        }
    };
    let result = runner(&cfg, &opts).map_err(|e| match e.exit_code() {
        2 => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    })?;
    serde_json::to_string_pretty(&result.summary)
        .map_err(|e| PyRuntimeError::new_err(e.to_string()))
}

#[pymodule]
fn magsim_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<State>()?;
    m.add_function(wrap_pyfunction!(larmor_frequency, m)?)?;
    m.add_function(wrap_pyfunction!(xi_squared, m)?)?;
    m.add_function(wrap_pyfunction!(coupling_constant, m)?)?;
    m.add_function(wrap_pyfunction!(swap_rate_for_coupling, m)?)?;
    m.add_function(wrap_pyfunction!(pass_transmission, m)?)?;
    m.add_function(wrap_pyfunction!(pn_limited_sensitivity, m)?)?;
    m.add_function(wrap_pyfunction!(detected_quadrature_variance, m)?)?;
    m.add_function(wrap_pyfunction!(run_protocol_json, m)?)?;
    Ok(())
}
