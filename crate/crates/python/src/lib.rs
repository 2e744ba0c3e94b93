//! Python bindings. Thresholds are given as "p/q" strings, either one
//! comma-separated string or a list of strings and ints.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyString;

use bwc_core::chain::{self, induced_chain};
use bwc_core::decomposition;
use bwc_core::error::Error;
use bwc_core::fixtures::fixture_by_name;
use bwc_core::games;
use bwc_core::io::{mdp_from_json, mdp_to_json};
use bwc_core::model::{self, nontrivial_dims, Mode, ThresholdQuery};
use bwc_core::procedural::{bwc_infinite_strategy, tune_k, AnyStrategy};
use bwc_core::rational::{self, Rational};
use bwc_core::sim;
use bwc_core::synthesis::{self, SynthOptions};
use bwc_core::systems;

fn err(e: Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_py(py: Python<'_>, v: &serde_json::Value) -> PyResult<Py<PyAny>> {
    Ok(py.import("json")?.call_method1("loads", (v.to_string(),))?.unbind())
}

fn vector(v: &Bound<'_, PyAny>) -> PyResult<Vec<Rational>> {
    if let Ok(s) = v.cast::<PyString>() {
        return rational::parse_vector(s.to_str()?).map_err(err);
    }
    v.try_iter()?
        .map(|x| rational::parse(x?.str()?.to_str()?).map_err(err))
        .collect()
}

fn ratios(v: &[Rational]) -> Vec<String> {
    v.iter().map(rational::format).collect()
}

#[pyclass(name = "Mdp", frozen)]
struct PyMdp {
    inner: model::Mdp,
}

#[pymethods]
impl PyMdp {
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(PyMdp {
            inner: mdp_from_json(text).map_err(err)?,
        })
    }

    /// Built-in models: RUN_EX, RUN_EX_BAS, TASK_EX, APPROX_EX.
    #[staticmethod]
    fn fixture(name: &str) -> PyResult<Self> {
        Ok(PyMdp {
            inner: fixture_by_name(name).map_err(err)?,
        })
    }

    fn to_json(&self) -> String {
        mdp_to_json(&self.inner)
    }

    #[getter]
    fn dimension(&self) -> usize {
        self.inner.dimension()
    }

    #[getter]
    fn states(&self) -> Vec<String> {
        self.inner.states().iter().map(|s| s.id.clone()).collect()
    }

    #[getter]
    fn n_edges(&self) -> usize {
        self.inner.n_edges()
    }

    #[getter]
    fn initial(&self) -> Option<String> {
        self.inner.initial().map(|s| self.inner.state(s).id.clone())
    }

    /// Violated invariants as readable strings; empty when valid.
    fn validate(&self) -> Vec<String> {
        model::validate(&self.inner).iter().map(|v| v.to_string()).collect()
    }

    fn mecs(&self) -> Vec<Vec<String>> {
        decomposition::mecs(&self.inner).iter().map(|c| c.state_ids(&self.inner)).collect()
    }

    /// Maximal end components winning the worst-case game for `mu`.
    fn mwecs(&self, mu: &Bound<'_, PyAny>) -> PyResult<Vec<Vec<String>>> {
        let mu = vector(mu)?;
        let q = ThresholdQuery::new(Mode::WorstCase, "", mu.clone(), mu.clone());
        let (work, _) = model::normalize(&self.inner, &q).map_err(err)?;
        let dims = nontrivial_dims(&mu, self.inner.max_abs_weight());
        let ecs = games::mwecs(&work, &dims, games::DEFAULT_ADVERSARY_CAP).map_err(err)?;
        Ok(ecs.iter().map(|c| c.state_ids(&work)).collect())
    }

    fn __repr__(&self) -> String {
        format!(
            "Mdp(dimension={}, states={}, edges={})",
            self.inner.dimension(),
            self.inner.n_states(),
            self.inner.n_edges()
        )
    }
}

fn query(mdp: &model::Mdp, mode: &str, start: Option<&str>, mu: Option<&Bound<'_, PyAny>>, nu: Option<&Bound<'_, PyAny>>) -> PyResult<ThresholdQuery> {
    let mode: Mode = mode.parse().map_err(err)?;
    let start = match start {
        Some(s) => s.to_string(),
        None => mdp
            .initial()
            .map(|s| mdp.state(s).id.clone())
            .ok_or_else(|| PyValueError::new_err("start state required"))?,
    };
    let get = |v: Option<&Bound<'_, PyAny>>, needed: bool, name: &str| -> PyResult<Vec<Rational>> {
        match v {
            Some(v) => vector(v),
            None if needed => Err(PyValueError::new_err(format!("`{name}` is required for this mode"))),
            None => Ok(vec![rational::zero(); mdp.dimension()]),
        }
    };
    Ok(ThresholdQuery::new(mode, &start, get(mu, mode.uses_mu(), "mu")?, get(nu, mode.uses_nu(), "nu")?))
}

/// Decision as a dict: {"answer": "yes"|"no", "mode", "witness"?, "failure"?}.
#[pyfunction]
#[pyo3(signature = (mdp, mode, start=None, mu=None, nu=None))]
fn decide(
    py: Python<'_>,
    mdp: &PyMdp,
    mode: &str,
    start: Option<&str>,
    mu: Option<&Bound<'_, PyAny>>,
    nu: Option<&Bound<'_, PyAny>>,
) -> PyResult<Py<PyAny>> {
    let q = query(&mdp.inner, mode, start, mu, nu)?;
    let d = systems::decide(&mdp.inner, &q).map_err(err)?;
    to_py(py, &d.to_json())
}

#[pyclass(name = "Strategy", frozen)]
struct PyStrategy {
    inner: AnyStrategy,
    json: serde_json::Value,
}

#[pymethods]
impl PyStrategy {
    #[staticmethod]
    fn from_json(mdp: &PyMdp, text: &str) -> PyResult<Self> {
        let json: serde_json::Value = serde_json::from_str(text).map_err(|e| err(e.into()))?;
        Ok(PyStrategy {
            inner: AnyStrategy::from_json(&mdp.inner, &json).map_err(err)?,
            json,
        })
    }

    fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.json).expect("json")
    }

    /// "machine" or "f_K".
    #[getter]
    fn kind(&self) -> &'static str {
        match self.inner {
            AnyStrategy::Machine(_) => "machine",
            AnyStrategy::Procedural(_) => "f_K",
        }
    }

    #[getter]
    fn memory_size(&self) -> Option<usize> {
        match &self.inner {
            AnyStrategy::Machine(m) => Some(m.memory_size()),
            AnyStrategy::Procedural(_) => None,
        }
    }

    /// Exact check: "wc", "as" or "exp". For f_K only its finite parts are
    /// checked, against its own thresholds.
    #[pyo3(signature = (mdp, check, start=None, threshold=None))]
    fn verify(&self, mdp: &PyMdp, check: &str, start: Option<&str>, threshold: Option<&Bound<'_, PyAny>>) -> PyResult<bool> {
        let m = &mdp.inner;
        let s0 = match start {
            Some(s) => m.require_state(s).map_err(err)?,
            None => m.initial().ok_or_else(|| PyValueError::new_err("start state required"))?,
        };
        match &self.inner {
            AnyStrategy::Machine(machine) => {
                let t = vector(threshold.ok_or_else(|| PyValueError::new_err("threshold required"))?)?;
                match check {
                    "wc" => Ok(chain::verify_worstcase(m, machine, s0, &t).map_err(err)?.holds),
                    "as" => chain::verify_almost_sure(m, machine, s0, &t).map_err(err),
                    "exp" => Ok(chain::verify_expectation(m, machine, s0, &t).map_err(err)?.0),
                    _ => Err(PyValueError::new_err("check must be wc, as or exp")),
                }
            }
            AnyStrategy::Procedural(f) => {
                let p = f.verify_parts(m, s0, SynthOptions::default().memory_cap).map_err(err)?;
                match check {
                    "wc" => Ok(p.worst_case.holds),
                    "as" => Ok(p.almost_sure),
                    "exp" => Ok(p.expectation_holds && p.monitors_positive),
                    _ => Err(PyValueError::new_err("check must be wc, as or exp")),
                }
            }
        }
    }

    /// Exact expected mean payoff of a finite machine, as "p/q" strings.
    #[pyo3(signature = (mdp, start=None))]
    fn expected_mp(&self, mdp: &PyMdp, start: Option<&str>) -> PyResult<Vec<String>> {
        let m = &mdp.inner;
        let AnyStrategy::Machine(machine) = &self.inner else {
            return Err(PyValueError::new_err("f_K has no finite induced chain"));
        };
        let s0 = match start {
            Some(s) => m.require_state(s).map_err(err)?,
            None => m.initial().ok_or_else(|| PyValueError::new_err("start state required"))?,
        };
        let c = induced_chain(m, machine, s0).map_err(err)?;
        Ok(ratios(&chain::expected_mp(&c)))
    }

    #[pyo3(signature = (mdp, start=None, horizon=10_000, runs=1000, seed=0))]
    fn simulate(&self, py: Python<'_>, mdp: &PyMdp, start: Option<&str>, horizon: u64, runs: u64, seed: u64) -> PyResult<Py<PyAny>> {
        let m = &mdp.inner;
        let s0 = match start {
            Some(s) => m.require_state(s).map_err(err)?,
            None => m.initial().ok_or_else(|| PyValueError::new_err("start state required"))?,
        };
        let mu = match &self.inner {
            AnyStrategy::Procedural(f) => Some(f.mu.clone()),
            AnyStrategy::Machine(_) => None,
        };
        let r = py
            .detach(|| sim::simulate(m, &self.inner, s0, horizon, runs, seed, mu.as_deref()))
            .map_err(err)?;
        to_py(py, &r.to_json())
    }
}

/// Synthesizes a witness for mode "bas", "bwc-fin" or "bwc-inf". For
/// bwc-inf, `k` fixes the phase length; otherwise it is tuned by simulation.
#[pyfunction]
#[pyo3(signature = (mdp, mode, start=None, mu=None, nu=None, k=None))]
fn synthesize(
    py: Python<'_>,
    mdp: &PyMdp,
    mode: &str,
    start: Option<&str>,
    mu: Option<&Bound<'_, PyAny>>,
    nu: Option<&Bound<'_, PyAny>>,
    k: Option<u64>,
) -> PyResult<PyStrategy> {
    let q = query(&mdp.inner, mode, start, mu, nu)?;
    let m = &mdp.inner;
    let opts = SynthOptions::default();
    let inner = py
        .detach(|| -> bwc_core::error::Result<AnyStrategy> {
            Ok(match q.mode {
                Mode::BwcInfinite => AnyStrategy::Procedural(match k {
                    Some(k) => bwc_infinite_strategy(m, &q, k, &opts)?,
                    None => tune_k(m, &q, &opts, 10_000, 200, 0)?,
                }),
                _ => AnyStrategy::Machine(synthesis::synthesize(m, &q, &opts)?.machine),
            })
        })
        .map_err(err)?;
    let json = match &inner {
        AnyStrategy::Machine(machine) => machine.to_json(m),
        AnyStrategy::Procedural(f) => f.to_json(m),
    };
    Ok(PyStrategy { inner, json })
}

#[pymodule]
fn bwc(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyMdp>()?;
    m.add_class::<PyStrategy>()?;
    m.add_function(wrap_pyfunction!(decide, m)?)?;
    m.add_function(wrap_pyfunction!(synthesize, m)?)?;
    Ok(())
}
