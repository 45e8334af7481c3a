//! Fusion graphs over coefficients and their compiled penalty constraints.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::design::DesignMatrix;
use crate::error::{Error, Result};
use crate::linalg;

/// A structured coefficient together with its factor-level attributes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub index: usize,
    pub label: String,
    #[serde(default)]
    pub attrs: BTreeMap<String, String>,
}

impl Cell {
    pub fn new(index: usize, label: impl Into<String>) -> Self {
        Self { index, label: label.into(), attrs: BTreeMap::new() }
    }

    pub fn with_attr(mut self, factor: impl Into<String>, level: impl Into<String>) -> Self {
        self.attrs.insert(factor.into(), level.into());
        self
    }
}

/// Cells for every design column belonging to one of `terms`.
pub fn cells_from_design(dm: &DesignMatrix, terms: &[String]) -> Vec<Cell> {
    (0..dm.p())
        .filter(|&j| terms.iter().any(|t| t == &dm.terms[j]))
        .map(|j| Cell { index: j, label: dm.labels[j].clone(), attrs: dm.cell_attrs[j].clone() })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub i: usize,
    pub j: usize,
    #[serde(default = "one")]
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadGroup {
    pub members: Vec<usize>,
    #[serde(default = "one")]
    pub weight: f64,
}

/// A user-supplied linear penalty row (need not be a difference).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CustomRow {
    pub entries: Vec<(usize, f64)>,
    #[serde(default = "one")]
    pub weight: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructureGraph {
    pub p: usize,
    pub labels: Vec<String>,
    pub edges: Vec<Edge>,
    #[serde(default)]
    pub quad_groups: Vec<QuadGroup>,
    #[serde(default)]
    pub custom_rows: Vec<CustomRow>,
    /// Dense user-supplied PSD matrices (row-major `p × p`).
    #[serde(default)]
    pub quad_matrices: Vec<Vec<Vec<f64>>>,
}

impl StructureGraph {
    pub fn empty(p: usize) -> Self {
        Self {
            p,
            labels: (0..p).map(|j| format!("b{j}")).collect(),
            edges: Vec::new(),
            quad_groups: Vec::new(),
            custom_rows: Vec::new(),
            quad_matrices: Vec::new(),
        }
    }

    fn from_cells(p: usize, cells: &[Cell]) -> Result<Self> {
        let mut g = Self::empty(p);
        for c in cells {
            if c.index >= p {
                return Err(Error::Structure(format!("cell index {} out of range for p = {p}", c.index)));
            }
            g.labels[c.index] = c.label.clone();
        }
        Ok(g)
    }

    pub fn with_labels(mut self, labels: Vec<String>) -> Result<Self> {
        if labels.len() != self.p {
            return Err(Error::Dimension(format!("{} labels for p = {}", labels.len(), self.p)));
        }
        self.labels = labels;
        Ok(self)
    }

    /// Merge the edges and groups of `other` (same `p`), dropping duplicates.
    pub fn union(mut self, other: &StructureGraph) -> Result<Self> {
        if other.p != self.p {
            return Err(Error::Dimension("cannot merge graphs with different p".into()));
        }
        let mut seen: BTreeSet<(usize, usize)> = self.edges.iter().map(|e| key(e.i, e.j)).collect();
        for e in &other.edges {
            if seen.insert(key(e.i, e.j)) {
                self.edges.push(*e);
            }
        }
        self.quad_groups.extend(other.quad_groups.iter().cloned());
        self.custom_rows.extend(other.custom_rows.iter().cloned());
        self.quad_matrices.extend(other.quad_matrices.iter().cloned());
        for (j, l) in other.labels.iter().enumerate() {
            if self.labels[j] == format!("b{j}") {
                self.labels[j] = l.clone();
            }
        }
        Ok(self)
    }

    pub fn add_quad_group(mut self, members: Vec<usize>, weight: f64) -> Self {
        self.quad_groups.push(QuadGroup { members, weight });
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.labels.len() != self.p {
            return Err(Error::Structure("label count differs from p".into()));
        }
        let mut seen = BTreeSet::new();
        for e in &self.edges {
            if e.i >= self.p || e.j >= self.p {
                return Err(Error::Structure(format!("edge ({}, {}) out of range", e.i, e.j)));
            }
            if e.i == e.j {
                return Err(Error::Structure(format!("self-loop at {}", e.i)));
            }
            if !(e.weight > 0.0 && e.weight.is_finite()) {
                return Err(Error::Structure(format!("edge ({}, {}) has non-positive weight", e.i, e.j)));
            }
            if !seen.insert(key(e.i, e.j)) {
                return Err(Error::Structure(format!("duplicate edge ({}, {})", e.i, e.j)));
            }
        }
        for g in &self.quad_groups {
            let set: BTreeSet<usize> = g.members.iter().copied().collect();
            if set.len() != g.members.len() || set.len() < 2 {
                return Err(Error::Structure("quadratic group needs at least two distinct members".into()));
            }
            if set.iter().any(|&m| m >= self.p) {
                return Err(Error::Structure("quadratic group member out of range".into()));
            }
            if !(g.weight > 0.0 && g.weight.is_finite()) {
                return Err(Error::Structure("quadratic group weight must be positive".into()));
            }
        }
        for r in &self.custom_rows {
            if r.entries.iter().any(|&(j, v)| j >= self.p || !v.is_finite()) {
                return Err(Error::Structure("custom row entry out of range".into()));
            }
            if !(r.weight > 0.0 && r.weight.is_finite()) {
                return Err(Error::Structure("custom row weight must be positive".into()));
            }
        }
        for m in &self.quad_matrices {
            if m.len() != self.p || m.iter().any(|r| r.len() != self.p) {
                return Err(Error::Structure("quadratic matrix must be p × p".into()));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let g: StructureGraph = serde_json::from_str(s)?;
        g.validate()?;
        Ok(g)
    }
}

fn key(i: usize, j: usize) -> (usize, usize) {
    (i.min(j), i.max(j))
}

fn pairs_where<F: Fn(&Cell, &Cell) -> bool>(p: usize, cells: &[Cell], keep: F) -> Result<StructureGraph> {
    let mut g = StructureGraph::from_cells(p, cells)?;
    for (a, ca) in cells.iter().enumerate() {
        for cb in &cells[a + 1..] {
            if keep(ca, cb) {
                g.edges.push(Edge { i: ca.index, j: cb.index, weight: 1.0 });
            }
        }
    }
    g.validate()?;
    Ok(g)
}

/// Complete graph on the cells: any pair may fuse.
pub fn build_agnostic(p: usize, cells: &[Cell]) -> Result<StructureGraph> {
    if cells.len() < 2 {
        return Err(Error::Structure("agnostic structure needs at least two cells".into()));
    }
    pairs_where(p, cells, |_, _| true)
}

/// Edge iff the two cells share at least one factor level.
pub fn build_lattice(p: usize, cells: &[Cell]) -> Result<StructureGraph> {
    let Some(first) = cells.first() else {
        return Ok(StructureGraph::from_cells(p, cells)?);
    };
    let keys: Vec<&String> = first.attrs.keys().collect();
    if keys.is_empty() {
        return Err(Error::Structure("lattice structure needs factor attributes on cells".into()));
    }
    for c in cells {
        if c.attrs.keys().collect::<Vec<_>>() != keys {
            return Err(Error::Structure(format!("cell `{}` has mismatched factor keys", c.label)));
        }
    }
    pairs_where(p, cells, |a, b| a.attrs.iter().any(|(k, v)| b.attrs.get(k) == Some(v)))
}

/// Edge iff the two cells share the level of `factor`.
pub fn build_priority(p: usize, cells: &[Cell], factor: &str) -> Result<StructureGraph> {
    if let Some(c) = cells.iter().find(|c| !c.attrs.contains_key(factor)) {
        return Err(if cells.iter().all(|c| !c.attrs.contains_key(factor)) {
            Error::UnknownFactor(factor.to_owned())
        } else {
            Error::Structure(format!("cell `{}` lacks factor `{factor}`", c.label))
        });
    }
    pairs_where(p, cells, |a, b| a.attrs[factor] == b.attrs[factor])
}

/// One penalized linear functional `weight · Σ entries·β`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearRow {
    pub entries: Vec<(usize, f64)>,
    pub weight: f64,
    /// Size normalization used by adaptive reweighting.
    pub base: f64,
}

impl LinearRow {
    /// `weight · (β_i − β_j)`.
    pub fn difference(i: usize, j: usize, weight: f64) -> Self {
        Self { entries: vec![(i, 1.0), (j, -1.0)], weight, base: 1.0 }
    }

    /// Unweighted `entriesᵀβ`.
    pub fn raw_dot(&self, beta: &[f64]) -> f64 {
        self.entries.iter().map(|&(j, v)| v * beta[j]).sum()
    }

    pub fn dot(&self, beta: &[f64]) -> f64 {
        self.weight * self.raw_dot(beta)
    }

    pub fn is_difference(&self) -> bool {
        self.entries.len() == 2 && self.entries[0].1 == -self.entries[1].1
    }
}

/// Penalty `weight · sqrt(βᵀFβ)`; the weight is folded into `matrix`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadPenalty {
    pub matrix: DMatrix<f64>,
    /// Support of the matrix (rows/columns with nonzeros).
    pub support: Vec<usize>,
}

impl QuadPenalty {
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        if !linalg::is_psd(&matrix) {
            return Err(Error::Structure("quadratic penalty matrix is not symmetric PSD".into()));
        }
        let support = (0..matrix.nrows()).filter(|&i| matrix.row(i).iter().any(|v| *v != 0.0)).collect();
        Ok(Self { matrix, support })
    }

    pub fn quad_form(&self, beta: &[f64]) -> f64 {
        let mut s = 0.0;
        for &i in &self.support {
            let mut r = 0.0;
            for &j in &self.support {
                r += self.matrix[(i, j)] * beta[j];
            }
            s += beta[i] * r;
        }
        s.max(0.0)
    }
}

/// Linear rows `d_k` (K of them) and quadratic matrices `F_ℓ` (L of them).
/// Penalty terms are indexed `0..K` for rows and `K..K+L` for quadratics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintSet {
    pub p: usize,
    pub rows: Vec<LinearRow>,
    pub quads: Vec<QuadPenalty>,
}

impl ConstraintSet {
    pub fn new(p: usize, rows: Vec<LinearRow>, quads: Vec<QuadPenalty>) -> Result<Self> {
        for r in &rows {
            if r.entries.iter().any(|&(j, _)| j >= p) || !(r.weight > 0.0 && r.weight.is_finite()) {
                return Err(Error::Structure("invalid linear row".into()));
            }
        }
        for q in &quads {
            if q.matrix.nrows() != p {
                return Err(Error::Dimension("quadratic matrix must be p × p".into()));
            }
        }
        Ok(Self { p, rows, quads })
    }

    pub fn empty(p: usize) -> Self {
        Self { p, rows: Vec::new(), quads: Vec::new() }
    }

    /// `D = I_p`.
    pub fn identity(p: usize) -> Self {
        let rows = (0..p).map(|j| LinearRow { entries: vec![(j, 1.0)], weight: 1.0, base: 1.0 }).collect();
        Self { p, rows, quads: Vec::new() }
    }

    pub fn k(&self) -> usize {
        self.rows.len()
    }

    pub fn l(&self) -> usize {
        self.quads.len()
    }

    pub fn n_terms(&self) -> usize {
        self.k() + self.l()
    }

    pub fn with_quad(mut self, q: QuadPenalty) -> Result<Self> {
        if q.matrix.nrows() != self.p {
            return Err(Error::Dimension("quadratic matrix must be p × p".into()));
        }
        self.quads.push(q);
        Ok(self)
    }

    /// Weighted `K × p` matrix of linear rows.
    pub fn d_matrix(&self) -> DMatrix<f64> {
        let mut d = DMatrix::zeros(self.k(), self.p);
        for (k, r) in self.rows.iter().enumerate() {
            for &(j, v) in &r.entries {
                d[(k, j)] += r.weight * v;
            }
        }
        d
    }

    /// Vertical stack of weighted `D` and every `F_ℓ`.
    pub fn dbar(&self) -> DMatrix<f64> {
        let d = self.d_matrix();
        let mut blocks: Vec<&DMatrix<f64>> = vec![&d];
        blocks.extend(self.quads.iter().map(|q| &q.matrix));
        linalg::vstack(&blocks, self.p)
    }

    pub fn rank_dbar(&self) -> usize {
        linalg::numerical_rank(&self.dbar())
    }

    /// Rows whose vanishing expresses that the given terms are exactly zero:
    /// the linear row itself, or a row factor of the quadratic matrix.
    pub fn binding_rows(&self, terms: &[usize]) -> DMatrix<f64> {
        let mut blocks: Vec<DMatrix<f64>> = Vec::new();
        for &t in terms {
            if t < self.k() {
                let r = &self.rows[t];
                let mut m = DMatrix::zeros(1, self.p);
                for &(j, v) in &r.entries {
                    m[(0, j)] += v;
                }
                blocks.push(m);
            } else {
                blocks.push(linalg::psd_row_factor(&self.quads[t - self.k()].matrix));
            }
        }
        let refs: Vec<&DMatrix<f64>> = blocks.iter().collect();
        linalg::vstack(&refs, self.p)
    }

    /// `|d_kᵀβ|` for rows and `sqrt(βᵀF_ℓβ)` for quadratics, indexed by term.
    pub fn term_magnitudes(&self, beta: &[f64]) -> Vec<f64> {
        let mut out: Vec<f64> = self.rows.iter().map(|r| r.dot(beta).abs()).collect();
        out.extend(self.quads.iter().map(|q| q.quad_form(beta).sqrt()));
        out
    }

    /// `Σ_k |d_kᵀβ| + Σ_ℓ sqrt(βᵀF_ℓβ)`.
    pub fn penalty(&self, beta: &[f64]) -> f64 {
        self.term_magnitudes(beta).iter().sum()
    }

    /// `Σ_k c_k d_k d_kᵀ + Σ_ℓ e_ℓ F_ℓ` for per-term scalars `c`.
    pub fn weighted_precision(&self, c: &[f64]) -> DMatrix<f64> {
        let mut p = DMatrix::zeros(self.p, self.p);
        for (k, r) in self.rows.iter().enumerate() {
            let s = c[k] * r.weight * r.weight;
            for &(i, vi) in &r.entries {
                for &(j, vj) in &r.entries {
                    p[(i, j)] += s * vi * vj;
                }
            }
        }
        for (l, q) in self.quads.iter().enumerate() {
            let s = c[self.k() + l];
            for &i in &q.support {
                for &j in &q.support {
                    p[(i, j)] += s * q.matrix[(i, j)];
                }
            }
        }
        p
    }

    /// Every weight multiplied by `c` (quadratics by `c²`, so each penalty
    /// term scales by `c`).
    pub fn scaled(&self, c: f64) -> Self {
        let mut out = self.clone();
        for r in &mut out.rows {
            r.weight *= c;
        }
        for q in &mut out.quads {
            q.matrix *= c * c;
        }
        out
    }

    /// Block-diagonal copy for `blocks` stacked coefficient vectors of length
    /// `p` each (multinomial categories share one structure).
    pub fn block_diagonal(&self, blocks: usize) -> Self {
        let bp = self.p * blocks;
        let mut rows = Vec::with_capacity(self.k() * blocks);
        let mut quads = Vec::with_capacity(self.l() * blocks);
        for b in 0..blocks {
            let off = b * self.p;
            for r in &self.rows {
                rows.push(LinearRow {
                    entries: r.entries.iter().map(|&(j, v)| (j + off, v)).collect(),
                    weight: r.weight,
                    base: r.base,
                });
            }
        }
        for b in 0..blocks {
            let off = b * self.p;
            for q in &self.quads {
                let mut m = DMatrix::zeros(bp, bp);
                m.view_mut((off, off), (self.p, self.p)).copy_from(&q.matrix);
                quads.push(QuadPenalty { matrix: m, support: q.support.iter().map(|j| j + off).collect() });
            }
        }
        // Interleave so that block b's rows are contiguous: rows then quads
        // ordering is kept per category.
        Self { p: bp, rows, quads }
    }

    /// Linear rows weighted by Gertheiss-Tutz size normalization
    /// `sqrt((n_i + n_j)/N)` from per-column observation counts.
    pub fn with_gertheiss_tutz(&self, counts: &[f64], n: usize) -> Result<Self> {
        if counts.len() != self.p {
            return Err(Error::Dimension("one count per coefficient required".into()));
        }
        let mut out = self.clone();
        for r in &mut out.rows {
            if r.is_difference() {
                let (i, j) = (r.entries[0].0, r.entries[1].0);
                let base = ((counts[i] + counts[j]) / n as f64).sqrt();
                if base > 0.0 {
                    r.base = base;
                    r.weight *= base;
                }
            }
        }
        Ok(out)
    }
}

/// Compile a graph into its constraint set: one difference row per edge and
/// one Gram-of-differences matrix per quadratic group.
pub fn compile_constraints(graph: &StructureGraph) -> Result<ConstraintSet> {
    graph.validate()?;
    let p = graph.p;
    let mut rows: Vec<LinearRow> = graph
        .edges
        .iter()
        .map(|e| LinearRow { entries: vec![(e.i, 1.0), (e.j, -1.0)], weight: e.weight, base: 1.0 })
        .collect();
    rows.extend(graph.custom_rows.iter().map(|r| LinearRow { entries: r.entries.clone(), weight: r.weight, base: 1.0 }));
    let mut quads = Vec::new();
    for g in &graph.quad_groups {
        quads.push(QuadPenalty::new(group_gram(p, &g.members, g.weight))?);
    }
    for m in &graph.quad_matrices {
        let flat: Vec<f64> = m.iter().flatten().copied().collect();
        quads.push(QuadPenalty::new(DMatrix::from_row_slice(p, p, &flat))?);
    }
    ConstraintSet::new(p, rows, quads)
}

/// `w² Σ_{i<j∈g} (e_i − e_j)(e_i − e_j)ᵀ`, i.e. `w²(|g| I − 11ᵀ)` on the
/// group block.
pub fn group_gram(p: usize, members: &[usize], weight: f64) -> DMatrix<f64> {
    let g = members.len() as f64;
    let w2 = weight * weight;
    let mut m = DMatrix::zeros(p, p);
    for &i in members {
        for &j in members {
            m[(i, j)] = w2 * if i == j { g - 1.0 } else { -1.0 };
        }
    }
    m
}

/// Rescale linear-row weights by `(base_k / |d_kᵀβ_pilot|)^γ`, with the gap
/// floored at `1e-8` and the resulting weight capped at `1e8`.
pub fn adaptive_weights(cset: &ConstraintSet, pilot: &[f64], gamma: f64) -> Result<ConstraintSet> {
    if pilot.len() != cset.p {
        return Err(Error::Dimension("pilot length differs from p".into()));
    }
    if pilot.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("pilot estimate is not finite".into()));
    }
    if !(gamma >= 0.0 && gamma.is_finite()) {
        return Err(Error::InvalidArgument("gamma must be non-negative".into()));
    }
    let mut out = cset.clone();
    if gamma == 0.0 {
        return Ok(out);
    }
    for r in &mut out.rows {
        let gap = r.raw_dot(pilot).abs().max(1e-8);
        r.weight = (r.weight * (r.base / gap).powf(gamma)).min(1e8);
    }
    Ok(out)
}

/// Component labels (`0..`) of the graph on `p` nodes with the given edges,
/// numbered in order of first appearance.
pub fn connected_components(p: usize, edges: &[(usize, usize)]) -> Vec<usize> {
    let mut parent: Vec<usize> = (0..p).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for &(a, b) in edges {
        let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
        if ra != rb {
            parent[ra.max(rb)] = ra.min(rb);
        }
    }
    let mut ids = BTreeMap::new();
    (0..p)
        .map(|x| {
            let r = find(&mut parent, x);
            let next = ids.len();
            *ids.entry(r).or_insert(next)
        })
        .collect()
}

/// `Σ_k d_k d_kᵀ` convenience for tests and reporting.
pub fn gram(cset: &ConstraintSet) -> DMatrix<f64> {
    cset.weighted_precision(&vec![1.0; cset.n_terms()])
}

/// Unweighted gaps `d_kᵀβ` (used for adaptive weights and diagnostics).
pub fn raw_gaps(cset: &ConstraintSet, beta: &DVector<f64>) -> Vec<f64> {
    cset.rows.iter().map(|r| r.raw_dot(beta.as_slice())).collect()
}
