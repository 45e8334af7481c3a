//! Loading a data set, its design matrix and the fusion structure.

use std::fs::File;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use fusionlasso::design::{expand_design, DataConfig, Dataset, DesignMatrix, ExpandOptions, Formula};
use fusionlasso::em::{ridge_pilot, PILOT_RIDGE};
use fusionlasso::structure::{
    adaptive_weights, build_agnostic, build_lattice, build_priority, cells_from_design, compile_constraints,
    ConstraintSet, StructureGraph,
};
use fusionlasso::Family;
use serde::{Deserialize, Serialize};

/// Parsed `--structure` value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "value")]
pub enum StructureSpec {
    Agnostic,
    Lattice,
    Priority(String),
    File(PathBuf),
}

impl std::str::FromStr for StructureSpec {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.split_once(':') {
            None if s == "agnostic" => Ok(StructureSpec::Agnostic),
            None if s == "lattice" => Ok(StructureSpec::Lattice),
            Some(("priority", f)) if !f.is_empty() => Ok(StructureSpec::Priority(f.to_owned())),
            Some(("file", p)) if !p.is_empty() => Ok(StructureSpec::File(PathBuf::from(p))),
            _ => Err(format!("expected agnostic, lattice, priority:<factor> or file:<path>, got `{s}`")),
        }
    }
}

impl std::fmt::Display for StructureSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            StructureSpec::Agnostic => f.write_str("agnostic"),
            StructureSpec::Lattice => f.write_str("lattice"),
            StructureSpec::Priority(x) => write!(f, "priority:{x}"),
            StructureSpec::File(p) => write!(f, "file:{}", p.display()),
        }
    }
}

impl StructureSpec {
    pub fn resolve_paths(&mut self) -> Result<()> {
        if let StructureSpec::File(p) = self {
            *p = absolute(p)?;
        }
        Ok(())
    }

    pub fn load_file(path: &Path) -> Result<StructureGraph> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading structure {}", path.display()))?;
        Ok(StructureGraph::from_json(&text)?)
    }
}

pub fn absolute(p: &Path) -> Result<PathBuf> {
    std::fs::canonicalize(p).with_context(|| format!("cannot resolve {}", p.display()))
}

pub struct Problem {
    pub design: DesignMatrix,
    pub y: Vec<f64>,
    pub family: Family,
    pub cset: ConstraintSet,
}

/// Terms containing at least one categorical factor, in design order.
pub fn default_structure_terms(dm: &DesignMatrix) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for j in 0..dm.p() {
        if !dm.cell_attrs[j].is_empty() && !out.contains(&dm.terms[j]) {
            out.push(dm.terms[j].clone());
        }
    }
    out
}

pub fn structure_graph(spec: &StructureSpec, dm: &DesignMatrix, config: &DataConfig) -> Result<StructureGraph> {
    let terms = config.structure_terms.clone().unwrap_or_else(|| default_structure_terms(dm));
    let cells = cells_from_design(dm, &terms);
    let p = dm.p();
    let graph = match spec {
        StructureSpec::File(path) => {
            let g = StructureSpec::load_file(path)?;
            if g.p != p {
                bail!("structure file covers {} coefficients but the design has {p}", g.p);
            }
            g
        }
        _ if cells.is_empty() => bail!("no structured terms in the design; set structure_terms in the config"),
        StructureSpec::Agnostic => build_agnostic(p, &cells)?,
        StructureSpec::Lattice => build_lattice(p, &cells)?,
        StructureSpec::Priority(f) => build_priority(p, &cells, f)?,
    };
    Ok(graph.with_labels(dm.labels.clone())?)
}

pub fn read_config(path: &Path) -> Result<DataConfig> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("invalid config {}", path.display()))
}

/// Read data and config, expand the design and compile the structure.
/// `adaptive` rescales edge weights by a ridge pilot with that exponent.
pub fn load(data: &Path, config: &Path, spec: &StructureSpec, adaptive: Option<f64>) -> Result<Problem> {
    let config = read_config(config)?;
    let file = File::open(data).with_context(|| format!("opening data {}", data.display()))?;
    let ds = Dataset::from_csv(file, &config)?;
    let family = config.family()?.resolve(&ds);
    ds.validate_family(family)?;
    let formula = Formula::parse(&config.formula)?;
    let design = expand_design(&ds, &formula, ExpandOptions { intercept: config.intercept })?;
    let graph = structure_graph(spec, &design, &config)?;
    let mut cset = compile_constraints(&graph)?;
    let y = ds.outcome.values.clone();
    if let Some(gamma) = adaptive {
        let pilot = ridge_pilot(&design.values, &y, family, PILOT_RIDGE * y.len() as f64)?;
        // Multinomial pilots hold one block per category; weights follow the first.
        cset = adaptive_weights(&cset, &pilot.as_slice()[..design.p()], gamma)?;
    }
    log::info!("design {} x {}, {} penalty terms, family {}", design.n(), design.p(), cset.n_terms(), family.name());
    Ok(Problem { design, y, family, cset })
}

/// Coefficient labels for every block of `family`.
pub fn block_labels(labels: &[String], family: Family) -> Vec<String> {
    match family {
        Family::Multinomial { categories } => (1..categories)
            .flat_map(|c| labels.iter().map(move |l| format!("[{c}]{l}")))
            .collect(),
        _ => labels.to_vec(),
    }
}
