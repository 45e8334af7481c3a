//! Python bindings. Matrices are passed as lists of rows, structures as the
//! JSON produced by the structure builders, and results come back as dicts.

use fusionlasso::calibrate::{aic_grid, CalibrateOptions, GridSpec};
use fusionlasso::design::FamilyName;
use fusionlasso::diagnostics::diagnose;
use fusionlasso::em::{fit_em, EmOptions};
use fusionlasso::gibbs::{sample, LambdaPrior, PosteriorDraws, PriorSpec, SamplerSettings};
use fusionlasso::propriety::{check_posterior, prior_report};
use fusionlasso::simulate::{run_benchmark, BenchOptions, SimulationSpec};
use fusionlasso::structure::{
    build_agnostic, build_lattice, build_priority, compile_constraints, Cell, ConstraintSet, StructureGraph,
};
use fusionlasso::Family;
use nalgebra::DMatrix;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use std::collections::BTreeMap;

fn err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_py<'py, T: serde::Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(err)?;
    py.import("json")?.call_method1("loads", (text,))
}

fn matrix(rows: &[Vec<f64>]) -> PyResult<DMatrix<f64>> {
    let n = rows.len();
    let p = rows.first().map_or(0, Vec::len);
    if n == 0 || p == 0 || rows.iter().any(|r| r.len() != p) {
        return Err(PyValueError::new_err("x must be a non-empty rectangular list of rows"));
    }
    Ok(DMatrix::from_fn(n, p, |i, j| rows[i][j]))
}

/// `linear`, `logistic`, or `multinomial` (category count taken from `y`).
fn family(name: &str, y: &[f64]) -> PyResult<Family> {
    let f: FamilyName = name.parse().map_err(err)?;
    Ok(match f {
        FamilyName::Linear => Family::Linear,
        FamilyName::Logistic => Family::Logistic,
        FamilyName::Multinomial => {
            Family::Multinomial { categories: y.iter().fold(0.0f64, |m, v| m.max(*v)) as usize + 1 }
        }
    })
}

fn constraints(structure: &str) -> PyResult<ConstraintSet> {
    compile_constraints(&StructureGraph::from_json(structure).map_err(err)?).map_err(err)
}

/// Build a structure over cells given as factor → level maps, one per
/// coefficient. `kind` is `agnostic`, `lattice` or `priority:<factor>`.
/// Returns the structure JSON.
#[pyfunction]
fn build_structure(kind: &str, cells: Vec<BTreeMap<String, String>>) -> PyResult<String> {
    let p = cells.len();
    let cells: Vec<Cell> = cells
        .into_iter()
        .enumerate()
        .map(|(i, attrs)| Cell { index: i, label: format!("b{i}"), attrs })
        .collect();
    let graph = match kind.split_once(':') {
        None if kind == "agnostic" => build_agnostic(p, &cells),
        None if kind == "lattice" => build_lattice(p, &cells),
        Some(("priority", factor)) => build_priority(p, &cells, factor),
        _ => return Err(PyValueError::new_err(format!("unknown structure kind `{kind}`"))),
    }
    .map_err(err)?;
    graph.to_json().map_err(err)
}

/// Prior report, or the posterior report when `x` and `y` are given.
#[pyfunction]
#[pyo3(signature = (structure, x=None, y=None, family="linear"))]
fn check_propriety<'py>(
    py: Python<'py>,
    structure: &str,
    x: Option<Vec<Vec<f64>>>,
    y: Option<Vec<f64>>,
    family: &str,
) -> PyResult<Bound<'py, PyAny>> {
    let cset = constraints(structure)?;
    let report = match (x, y) {
        (Some(x), Some(y)) => {
            let fam = self::family(family, &y)?;
            check_posterior(&matrix(&x)?, &y, &cset, fam).map_err(err)?
        }
        (None, None) => prior_report(&cset),
        _ => return Err(PyValueError::new_err("pass both x and y, or neither")),
    };
    to_py(py, &report)
}

/// Posterior mode at a single `lam`.
#[pyfunction]
#[pyo3(signature = (x, y, structure, lam, family="linear"))]
fn fit<'py>(
    py: Python<'py>,
    x: Vec<Vec<f64>>,
    y: Vec<f64>,
    structure: &str,
    lam: f64,
    family: &str,
) -> PyResult<Bound<'py, PyAny>> {
    let fam = self::family(family, &y)?;
    let sol = fit_em(&matrix(&x)?, &y, &constraints(structure)?, lam, fam, &EmOptions::default()).map_err(err)?;
    to_py(py, &sol)
}

/// AIC over an automatic grid; returns `{"calibration": .., "best": ..}`.
#[pyfunction]
#[pyo3(signature = (x, y, structure, family="linear", points=50))]
fn calibrate<'py>(
    py: Python<'py>,
    x: Vec<Vec<f64>>,
    y: Vec<f64>,
    structure: &str,
    family: &str,
    points: usize,
) -> PyResult<Bound<'py, PyAny>> {
    let fam = self::family(family, &y)?;
    let opts = CalibrateOptions { grid: GridSpec::Auto(points), ..Default::default() };
    let res = aic_grid(&matrix(&x)?, &y, &constraints(structure)?, fam, &opts).map_err(err)?;
    to_py(py, &res)
}

/// Gibbs draws. `lam` fixes λ; otherwise λ² has a Gamma(1, 1) prior.
#[pyfunction]
#[pyo3(signature = (x, y, structure, seed, family="linear", chains=4, iters=10_000, burnin=5_000, thin=1, lam=None, force=false))]
#[allow(clippy::too_many_arguments)]
fn gibbs<'py>(
    py: Python<'py>,
    x: Vec<Vec<f64>>,
    y: Vec<f64>,
    structure: &str,
    seed: u64,
    family: &str,
    chains: usize,
    iters: usize,
    burnin: usize,
    thin: usize,
    lam: Option<f64>,
    force: bool,
) -> PyResult<Bound<'py, PyAny>> {
    let fam = self::family(family, &y)?;
    let x = matrix(&x)?;
    let cset = constraints(structure)?;
    let labels: Vec<String> = (0..x.ncols()).map(|j| format!("b{j}")).collect();
    let mut prior = PriorSpec::default();
    if let Some(lambda) = lam {
        prior.lambda = LambdaPrior::Fixed { lambda };
    }
    let settings = SamplerSettings { chains, iters, burnin, thin, seed, force };
    let draws = py
        .detach(|| sample(&x, &y, &labels, &cset, fam, &prior, &settings))
        .map_err(err)?;
    to_py(py, &draws)
}

/// R̂ and Geweke diagnostics for draws returned by [`gibbs`].
#[pyfunction]
#[pyo3(signature = (draws, split=true))]
fn diagnostics<'py>(py: Python<'py>, draws: Bound<'py, PyAny>, split: bool) -> PyResult<Bound<'py, PyAny>> {
    let text: String = py.import("json")?.call_method1("dumps", (draws,))?.extract()?;
    let draws: PosteriorDraws = serde_json::from_str(&text).map_err(err)?;
    to_py(py, &diagnose(&draws, split).map_err(err)?)
}

#[pyfunction]
#[pyo3(signature = (g, r, s, seed, family="linear", reps=100))]
fn simulate<'py>(
    py: Python<'py>,
    g: usize,
    r: usize,
    s: usize,
    seed: u64,
    family: &str,
    reps: usize,
) -> PyResult<Bound<'py, PyAny>> {
    let spec = SimulationSpec { g, r, s, family: family.parse().map_err(err)?, seed, replicates: reps };
    let res = py.detach(|| run_benchmark(&spec, &BenchOptions::default())).map_err(err)?;
    to_py(py, &res)
}

#[pymodule]
fn fusionlasso_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", fusionlasso::VERSION)?;
    m.add_function(wrap_pyfunction!(build_structure, m)?)?;
    m.add_function(wrap_pyfunction!(check_propriety, m)?)?;
    m.add_function(wrap_pyfunction!(fit, m)?)?;
    m.add_function(wrap_pyfunction!(calibrate, m)?)?;
    m.add_function(wrap_pyfunction!(gibbs, m)?)?;
    m.add_function(wrap_pyfunction!(diagnostics, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    Ok(())
}
