//! Tabular data ingestion and factorial design expansion.
//!
//! Categorical factors are one-hot encoded with every level kept (no baseline
//! is dropped). Interaction terms multiply indicator columns, and numeric
//! columns enter a term as a multiplicative value. Formulas use the usual
//! `A + B`, `A : B`, `A * B` (= `A + B + A:B`) grammar with parentheses.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Read;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::family::Family;

pub const INTERCEPT_LABEL: &str = "(Intercept)";

#[derive(Debug, Clone, PartialEq)]
pub enum ColumnData {
    Numeric(Vec<f64>),
    Categorical { levels: Vec<String>, codes: Vec<usize> },
}

impl ColumnData {
    fn len(&self) -> usize {
        match self {
            ColumnData::Numeric(v) => v.len(),
            ColumnData::Categorical { codes, .. } => codes.len(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnKind {
    Numeric,
    Categorical,
}

/// The response column. Values are stored as reals: binary outcomes as 0/1,
/// categorical outcomes as level indices `0..C`.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub name: String,
    pub values: Vec<f64>,
    pub levels: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    n: usize,
    columns: BTreeMap<String, ColumnData>,
    pub outcome: Outcome,
}

impl Dataset {
    pub fn new(outcome: impl Into<String>, values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Data("dataset needs at least one row".into()));
        }
        Ok(Self {
            n: values.len(),
            columns: BTreeMap::new(),
            outcome: Outcome { name: outcome.into(), values, levels: None },
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn column(&self, name: &str) -> Option<&ColumnData> {
        self.columns.get(name)
    }

    pub fn column_names(&self) -> impl Iterator<Item = &str> {
        self.columns.keys().map(String::as_str)
    }

    pub fn with_numeric(mut self, name: impl Into<String>, values: Vec<f64>) -> Result<Self> {
        self.insert(name.into(), ColumnData::Numeric(values))?;
        Ok(self)
    }

    /// Add a categorical column. When `levels` is `None` the level set is the
    /// sorted set of observed values.
    pub fn with_categorical<S: AsRef<str>>(
        mut self,
        name: impl Into<String>,
        levels: Option<Vec<String>>,
        values: &[S],
    ) -> Result<Self> {
        let name = name.into();
        let (levels, codes) = encode_levels(&name, levels, values)?;
        self.insert(name, ColumnData::Categorical { levels, codes })?;
        Ok(self)
    }

    /// Declare the outcome as categorical with the given level order
    /// (values must already be level indices).
    pub fn with_outcome_levels(mut self, levels: Vec<String>) -> Result<Self> {
        let c = levels.len();
        if self.outcome.values.iter().any(|&v| v < 0.0 || v.fract() != 0.0 || v as usize >= c) {
            return Err(Error::Data("outcome codes outside the declared level set".into()));
        }
        self.outcome.levels = Some(levels);
        Ok(self)
    }

    fn insert(&mut self, name: String, col: ColumnData) -> Result<()> {
        if col.len() != self.n {
            return Err(Error::Data(format!("column `{name}` has {} rows, expected {}", col.len(), self.n)));
        }
        if let ColumnData::Categorical { levels, .. } = &col {
            if levels.is_empty() {
                return Err(Error::EmptyLevels(name));
            }
        }
        self.columns.insert(name, col);
        Ok(())
    }

    /// Check that the outcome is admissible for `family`.
    pub fn validate_family(&self, family: Family) -> Result<()> {
        let y = &self.outcome.values;
        match family {
            Family::Linear => {
                if y.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Data("linear outcome must be finite".into()));
                }
            }
            Family::Logistic => {
                if y.iter().any(|&v| v != 0.0 && v != 1.0) {
                    return Err(Error::Data("logistic outcome must be 0/1".into()));
                }
            }
            Family::Multinomial { categories } => {
                if categories < 2 {
                    return Err(Error::Data("multinomial outcome needs at least 2 categories".into()));
                }
                if y.iter().any(|&v| v < 0.0 || v.fract() != 0.0 || v as usize >= categories) {
                    return Err(Error::Data("multinomial outcome must hold category indices".into()));
                }
            }
        }
        Ok(())
    }

    /// Read a comma-separated file with a header row.
    pub fn from_csv<R: Read>(reader: R, config: &DataConfig) -> Result<Dataset> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
        let headers: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
        let mut raw: Vec<Vec<String>> = vec![Vec::new(); headers.len()];
        for rec in rdr.records() {
            let rec = rec?;
            if rec.len() != headers.len() {
                return Err(Error::Data("ragged CSV row".into()));
            }
            for (i, field) in rec.iter().enumerate() {
                raw[i].push(field.to_owned());
            }
        }
        let Some(out_idx) = headers.iter().position(|h| h == &config.outcome) else {
            return Err(Error::Data(format!("outcome column `{}` not found", config.outcome)));
        };
        let family_name = config.family.as_str();
        let (y, y_levels) = if family_name == "multinomial" {
            let levels = config.levels.get(&config.outcome).cloned();
            let (levels, codes) = encode_levels(&config.outcome, levels, &raw[out_idx])?;
            (codes.into_iter().map(|c| c as f64).collect(), Some(levels))
        } else {
            (parse_numeric(&config.outcome, &raw[out_idx])?, None)
        };
        let mut ds = Dataset::new(config.outcome.clone(), y)?;
        if let Some(lv) = y_levels {
            ds = ds.with_outcome_levels(lv)?;
        }
        for (i, name) in headers.iter().enumerate() {
            if i == out_idx {
                continue;
            }
            match config.columns.get(name).copied().unwrap_or(ColumnKind::Numeric) {
                ColumnKind::Numeric => {
                    ds = ds.with_numeric(name.clone(), parse_numeric(name, &raw[i])?)?;
                }
                ColumnKind::Categorical => {
                    ds = ds.with_categorical(name.clone(), config.levels.get(name).cloned(), &raw[i])?;
                }
            }
        }
        ds.validate_family(config.family()?.resolve(&ds))?;
        Ok(ds)
    }
}

fn parse_numeric(name: &str, raw: &[String]) -> Result<Vec<f64>> {
    raw.iter()
        .map(|s| s.parse::<f64>().map_err(|_| Error::Data(format!("column `{name}`: `{s}` is not numeric"))))
        .collect()
}

fn encode_levels<S: AsRef<str>>(
    name: &str,
    levels: Option<Vec<String>>,
    values: &[S],
) -> Result<(Vec<String>, Vec<usize>)> {
    let levels = match levels {
        Some(l) => l,
        None => values.iter().map(|v| v.as_ref().to_owned()).collect::<BTreeSet<_>>().into_iter().collect(),
    };
    if levels.is_empty() {
        return Err(Error::EmptyLevels(name.to_owned()));
    }
    let index: BTreeMap<&str, usize> = levels.iter().enumerate().map(|(i, l)| (l.as_str(), i)).collect();
    let codes = values
        .iter()
        .map(|v| {
            index
                .get(v.as_ref())
                .copied()
                .ok_or_else(|| Error::Data(format!("column `{name}`: level `{}` not declared", v.as_ref())))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((levels, codes))
}

/// JSON sidecar describing how to read a CSV file.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct DataConfig {
    pub outcome: String,
    #[serde(default = "default_family")]
    pub family: String,
    #[serde(default)]
    pub columns: BTreeMap<String, ColumnKind>,
    #[serde(default)]
    pub levels: BTreeMap<String, Vec<String>>,
    pub formula: String,
    #[serde(default = "default_true")]
    pub intercept: bool,
    /// Terms whose columns carry the fusion structure; defaults to every term
    /// containing a categorical factor.
    #[serde(default)]
    pub structure_terms: Option<Vec<String>>,
}

fn default_family() -> String {
    "linear".into()
}

fn default_true() -> bool {
    true
}

/// Family name parsed from a config, before the category count is known.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FamilyName {
    Linear,
    Logistic,
    Multinomial,
}

impl FamilyName {
    pub fn resolve(self, data: &Dataset) -> Family {
        match self {
            FamilyName::Linear => Family::Linear,
            FamilyName::Logistic => Family::Logistic,
            FamilyName::Multinomial => Family::Multinomial {
                categories: data.outcome.levels.as_ref().map_or(0, Vec::len),
            },
        }
    }
}

impl std::str::FromStr for FamilyName {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" | "gaussian" => Ok(FamilyName::Linear),
            "logistic" | "binomial" => Ok(FamilyName::Logistic),
            "multinomial" => Ok(FamilyName::Multinomial),
            other => Err(Error::InvalidArgument(format!("unknown family `{other}`"))),
        }
    }
}

impl DataConfig {
    pub fn family(&self) -> Result<FamilyName> {
        self.family.parse()
    }
}

// ---------------------------------------------------------------------------
// Formula grammar
// ---------------------------------------------------------------------------

/// Parsed interaction formula.
#[derive(Debug, Clone, PartialEq)]
pub enum Formula {
    Factor(String),
    /// `A + B`
    Sum(Box<Formula>, Box<Formula>),
    /// `A : B`
    Interact(Box<Formula>, Box<Formula>),
    /// `A * B`
    Cross(Box<Formula>, Box<Formula>),
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Ident(String),
    Plus,
    Star,
    Colon,
    Open,
    Close,
}

fn tokenize(src: &str) -> Result<Vec<Token>> {
    let mut out = Vec::new();
    let mut chars = src.chars().peekable();
    while let Some(&c) = chars.peek() {
        match c {
            c if c.is_whitespace() => {
                chars.next();
            }
            '+' => {
                chars.next();
                out.push(Token::Plus);
            }
            '*' => {
                chars.next();
                out.push(Token::Star);
            }
            ':' => {
                chars.next();
                out.push(Token::Colon);
            }
            '(' => {
                chars.next();
                out.push(Token::Open);
            }
            ')' => {
                chars.next();
                out.push(Token::Close);
            }
            '`' => {
                chars.next();
                let mut name = String::new();
                loop {
                    match chars.next() {
                        Some('`') => break,
                        Some(ch) => name.push(ch),
                        None => return Err(Error::Formula("unterminated backtick".into())),
                    }
                }
                out.push(Token::Ident(name));
            }
            c if c.is_alphanumeric() || c == '_' || c == '.' || c == '-' => {
                let mut name = String::new();
                while let Some(&ch) = chars.peek() {
                    if ch.is_alphanumeric() || ch == '_' || ch == '.' || ch == '-' {
                        name.push(ch);
                        chars.next();
                    } else {
                        break;
                    }
                }
                out.push(Token::Ident(name));
            }
            other => return Err(Error::Formula(format!("unexpected character `{other}`"))),
        }
    }
    Ok(out)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn sum(&mut self) -> Result<Formula> {
        let mut lhs = self.cross()?;
        while self.peek() == Some(&Token::Plus) {
            self.pos += 1;
            lhs = Formula::Sum(Box::new(lhs), Box::new(self.cross()?));
        }
        Ok(lhs)
    }

    fn cross(&mut self) -> Result<Formula> {
        let mut lhs = self.interact()?;
        while self.peek() == Some(&Token::Star) {
            self.pos += 1;
            lhs = Formula::Cross(Box::new(lhs), Box::new(self.interact()?));
        }
        Ok(lhs)
    }

    fn interact(&mut self) -> Result<Formula> {
        let mut lhs = self.atom()?;
        while self.peek() == Some(&Token::Colon) {
            self.pos += 1;
            lhs = Formula::Interact(Box::new(lhs), Box::new(self.atom()?));
        }
        Ok(lhs)
    }

    fn atom(&mut self) -> Result<Formula> {
        match self.tokens.get(self.pos).cloned() {
            Some(Token::Ident(name)) => {
                self.pos += 1;
                Ok(Formula::Factor(name))
            }
            Some(Token::Open) => {
                self.pos += 1;
                let inner = self.sum()?;
                if self.peek() != Some(&Token::Close) {
                    return Err(Error::Formula("missing `)`".into()));
                }
                self.pos += 1;
                Ok(inner)
            }
            Some(tok) => Err(Error::Formula(format!("unexpected token {tok:?}"))),
            None => Err(Error::Formula("unexpected end of formula".into())),
        }
    }
}

impl Formula {
    /// Parse a right-hand side such as `Type * (Money + Stage)`. A leading
    /// `~` or `y ~` is accepted and ignored.
    pub fn parse(src: &str) -> Result<Formula> {
        let rhs = match src.find('~') {
            Some(i) => &src[i + 1..],
            None => src,
        };
        let tokens = tokenize(rhs)?;
        if tokens.is_empty() {
            return Err(Error::Formula("empty formula".into()));
        }
        let mut p = Parser { tokens, pos: 0 };
        let f = p.sum()?;
        if p.pos != p.tokens.len() {
            return Err(Error::Formula(format!("trailing tokens starting at {:?}", p.tokens[p.pos])));
        }
        Ok(f)
    }

    /// Expand into the distinct terms, each a sorted set of factor names,
    /// ordered by interaction order and then lexicographically.
    pub fn terms(&self) -> Vec<Vec<String>> {
        let mut set: Vec<Vec<String>> = self.term_sets().into_iter().map(|t| t.into_iter().collect()).collect();
        set.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
        set.dedup();
        set
    }

    fn term_sets(&self) -> BTreeSet<BTreeSet<String>> {
        match self {
            Formula::Factor(name) => BTreeSet::from([BTreeSet::from([name.clone()])]),
            Formula::Sum(a, b) => {
                let mut s = a.term_sets();
                s.extend(b.term_sets());
                s
            }
            Formula::Interact(a, b) => {
                let (sa, sb) = (a.term_sets(), b.term_sets());
                let mut out = BTreeSet::new();
                for ta in &sa {
                    for tb in &sb {
                        out.insert(ta.union(tb).cloned().collect());
                    }
                }
                out
            }
            Formula::Cross(a, b) => {
                let (sa, sb) = (a.term_sets(), b.term_sets());
                let mut out = sa.clone();
                out.extend(sb.iter().cloned());
                for ta in &sa {
                    for tb in &sb {
                        out.insert(ta.union(tb).cloned().collect());
                    }
                }
                out
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Design matrix
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    pub values: DMatrix<f64>,
    pub labels: Vec<String>,
    /// Categorical factor → level for each column; numeric factors are absent.
    pub cell_attrs: Vec<BTreeMap<String, String>>,
    /// Term label (`A:B`) each column belongs to.
    pub terms: Vec<String>,
}

impl DesignMatrix {
    pub fn p(&self) -> usize {
        self.labels.len()
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    /// Column indices belonging to the named term.
    pub fn term_columns(&self, term: &str) -> Vec<usize> {
        (0..self.p()).filter(|&j| self.terms[j] == term).collect()
    }

    /// Number of observations with a nonzero entry in each column.
    pub fn column_counts(&self) -> Vec<f64> {
        (0..self.p())
            .map(|j| self.values.column(j).iter().filter(|v| **v != 0.0).count() as f64)
            .collect()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ExpandOptions {
    pub intercept: bool,
}

impl Default for ExpandOptions {
    fn default() -> Self {
        Self { intercept: true }
    }
}

/// Expand `formula` over `data` into a labeled design matrix.
pub fn expand_design(data: &Dataset, formula: &Formula, opts: ExpandOptions) -> Result<DesignMatrix> {
    let n = data.n();
    let terms = formula.terms();
    for t in &terms {
        for f in t {
            match data.column(f) {
                None => return Err(Error::UnknownFactor(f.clone())),
                Some(ColumnData::Categorical { levels, .. }) if levels.is_empty() => {
                    return Err(Error::EmptyLevels(f.clone()))
                }
                _ => {}
            }
        }
    }

    let mut cols: Vec<Vec<f64>> = Vec::new();
    let mut labels = Vec::new();
    let mut attrs = Vec::new();
    let mut term_labels = Vec::new();
    if opts.intercept {
        cols.push(vec![1.0; n]);
        labels.push(INTERCEPT_LABEL.to_owned());
        attrs.push(BTreeMap::new());
        term_labels.push(INTERCEPT_LABEL.to_owned());
    }

    for term in &terms {
        let term_label = term.join(":");
        // Each factor contributes a list of (label piece, attr, column values).
        let mut partial: Vec<(Vec<String>, BTreeMap<String, String>, Vec<f64>)> =
            vec![(Vec::new(), BTreeMap::new(), vec![1.0; n])];
        for factor in term {
            let col = data.column(factor).expect("checked above");
            let mut next = Vec::new();
            for (lab, at, vals) in &partial {
                match col {
                    ColumnData::Numeric(x) => {
                        let mut lab = lab.clone();
                        lab.push(factor.clone());
                        let v = vals.iter().zip(x).map(|(a, b)| a * b).collect();
                        next.push((lab, at.clone(), v));
                    }
                    ColumnData::Categorical { levels, codes } => {
                        for (li, level) in levels.iter().enumerate() {
                            let mut lab = lab.clone();
                            lab.push(format!("{factor}({level})"));
                            let mut at = at.clone();
                            at.insert(factor.clone(), level.clone());
                            let v = vals
                                .iter()
                                .zip(codes)
                                .map(|(a, &c)| if c == li { *a } else { 0.0 })
                                .collect();
                            next.push((lab, at, v));
                        }
                    }
                }
            }
            partial = next;
        }
        for (lab, at, vals) in partial {
            labels.push(lab.join(":"));
            attrs.push(at);
            cols.push(vals);
            term_labels.push(term_label.clone());
        }
    }

    let p = cols.len();
    let values = DMatrix::from_fn(n, p, |i, j| cols[j][i]);
    Ok(DesignMatrix { values, labels, cell_attrs: attrs, terms: term_labels })
}
