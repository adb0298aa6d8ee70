//! Tuples, relations, instances and semiring annotations, plus the TSV /
//! manifest formats shared by the generators and the CLI.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::Write;
use std::path::Path;

use smallvec::SmallVec;
use thiserror::Error;

use crate::query::{AttrId, QueryHypergraph};

/// Domain element: an opaque 64-bit unsigned integer.
pub type Value = u64;

/// Inline-capacity vector for attribute values; most schemas have arity <= 4.
pub type Values = SmallVec<[Value; 4]>;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DataError {
    #[error("parse error at {path}:{line}: {msg}")]
    ParseError { path: String, line: usize, msg: String },
    #[error("schema mismatch: expected {expected:?}, found {found:?}")]
    SchemaMismatch { expected: Vec<String>, found: Vec<String> },
    #[error("duplicate tuple at {path}:{line}")]
    DuplicateTuple { path: String, line: usize },
    #[error("unknown attribute `{0}`")]
    UnknownAttribute(String),
    #[error("annotation overflow in {0} arithmetic")]
    AnnotationOverflow(&'static str),
    #[error("io error on {path}: {msg}")]
    Io { path: String, msg: String },
}

/// A tuple: values aligned with its relation's schema plus a semiring
/// annotation (the ⊗-identity when absent from the input).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Tuple {
    pub values: Values,
    pub weight: i64,
}

impl Tuple {
    pub fn new(values: impl Into<Values>, weight: i64) -> Self {
        Tuple { values: values.into(), weight }
    }
}

/// Commutative semirings over 64-bit integers. `counting` and `sum-product`
/// share (+, ×); counting is the convention that all input annotations are 1
/// so the aggregate is a cardinality. Arithmetic is checked: overflow is an
/// error rather than a silent wrap.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Semiring {
    Counting,
    SumProduct,
    MinPlus,
}

impl Semiring {
    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "counting" => Some(Semiring::Counting),
            "sum-product" => Some(Semiring::SumProduct),
            "min-plus" => Some(Semiring::MinPlus),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Semiring::Counting => "counting",
            Semiring::SumProduct => "sum-product",
            Semiring::MinPlus => "min-plus",
        }
    }

    /// ⊕-identity.
    pub fn zero(self) -> i64 {
        match self {
            Semiring::Counting | Semiring::SumProduct => 0,
            Semiring::MinPlus => i64::MAX,
        }
    }

    /// ⊗-identity.
    pub fn one(self) -> i64 {
        match self {
            Semiring::Counting | Semiring::SumProduct => 1,
            Semiring::MinPlus => 0,
        }
    }

    pub fn add(self, a: i64, b: i64) -> Result<i64, DataError> {
        match self {
            Semiring::Counting | Semiring::SumProduct => a
                .checked_add(b)
                .ok_or(DataError::AnnotationOverflow(self.name())),
            Semiring::MinPlus => Ok(a.min(b)),
        }
    }

    pub fn mul(self, a: i64, b: i64) -> Result<i64, DataError> {
        match self {
            Semiring::Counting | Semiring::SumProduct => a
                .checked_mul(b)
                .ok_or(DataError::AnnotationOverflow(self.name())),
            Semiring::MinPlus => {
                if a == i64::MAX || b == i64::MAX {
                    Ok(i64::MAX)
                } else {
                    a.checked_add(b).ok_or(DataError::AnnotationOverflow(self.name()))
                }
            }
        }
    }
}

/// A named relation: a set of tuples over a fixed schema. Set semantics — no
/// two tuples share the same values.
#[derive(Debug, Clone)]
pub struct Relation {
    pub name: String,
    pub schema: Vec<String>,
    pub tuples: Vec<Tuple>,
}

impl Relation {
    pub fn new(name: &str, schema: &[&str]) -> Self {
        Relation {
            name: name.to_owned(),
            schema: schema.iter().map(|s| (*s).to_owned()).collect(),
            tuples: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.tuples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tuples.is_empty()
    }

    /// Inserts a tuple; duplicated values are an error under set semantics.
    pub fn push(&mut self, t: Tuple) -> Result<(), DataError> {
        debug_assert_eq!(t.values.len(), self.schema.len());
        self.tuples.push(t);
        Ok(())
    }

    fn attr_pos(&self, attr: &str) -> Result<usize, DataError> {
        self.schema
            .iter()
            .position(|a| a == attr)
            .ok_or_else(|| DataError::UnknownAttribute(attr.to_owned()))
    }

    /// Positions of `attrs` within this relation's schema.
    pub fn positions(&self, attrs: &[&str]) -> Result<Vec<usize>, DataError> {
        attrs.iter().map(|a| self.attr_pos(a)).collect()
    }

    /// σ_{attr = v}: tuples whose value on `attr` equals `v`, annotations kept.
    pub fn select(&self, attr: &str, v: Value) -> Result<Relation, DataError> {
        let pos = self.attr_pos(attr)?;
        Ok(Relation {
            name: self.name.clone(),
            schema: self.schema.clone(),
            tuples: self
                .tuples
                .iter()
                .filter(|t| t.values[pos] == v)
                .cloned()
                .collect(),
        })
    }

    /// π_s of one tuple, preserving the order of `s`.
    pub fn project_tuple(&self, t: &Tuple, s: &[&str]) -> Result<Values, DataError> {
        let positions = self.positions(s)?;
        Ok(positions.iter().map(|&p| t.values[p]).collect())
    }

    /// Loads a TSV relation: a header of tab-separated attribute names with an
    /// optional trailing `#w` annotation column, then one row of decimal
    /// unsigned integers per tuple.
    pub fn load(path: &Path, expect_schema: Option<&[String]>) -> Result<Relation, DataError> {
        let text = fs::read_to_string(path).map_err(|e| DataError::Io {
            path: path.display().to_string(),
            msg: e.to_string(),
        })?;
        let p = path.display().to_string();
        let mut lines = text.lines().enumerate();
        let (_, header) = lines.next().ok_or_else(|| DataError::ParseError {
            path: p.clone(),
            line: 1,
            msg: "empty file".into(),
        })?;
        let mut cols: Vec<&str> = header.split('\t').collect();
        let weighted = cols.last() == Some(&"#w");
        if weighted {
            cols.pop();
        }
        let schema: Vec<String> = cols.iter().map(|c| (*c).to_owned()).collect();
        if let Some(expected) = expect_schema {
            if expected != schema.as_slice() {
                return Err(DataError::SchemaMismatch {
                    expected: expected.to_vec(),
                    found: schema,
                });
            }
        }
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        let mut rel = Relation {
            name,
            schema,
            tuples: Vec::new(),
        };
        let mut seen: BTreeSet<Values> = BTreeSet::new();
        for (i, line) in lines {
            if line.is_empty() {
                continue;
            }
            let parts: Vec<&str> = line.split('\t').collect();
            let want = rel.schema.len() + usize::from(weighted);
            if parts.len() != want {
                return Err(DataError::ParseError {
                    path: p.clone(),
                    line: i + 1,
                    msg: format!("expected {want} columns, found {}", parts.len()),
                });
            }
            let mut values: Values = SmallVec::new();
            for v in &parts[..rel.schema.len()] {
                values.push(v.parse::<Value>().map_err(|e| DataError::ParseError {
                    path: p.clone(),
                    line: i + 1,
                    msg: format!("bad value `{v}`: {e}"),
                })?);
            }
            let weight = if weighted {
                parts[rel.schema.len()].parse::<i64>().map_err(|e| DataError::ParseError {
                    path: p.clone(),
                    line: i + 1,
                    msg: format!("bad annotation: {e}"),
                })?
            } else {
                1
            };
            if !seen.insert(values.clone()) {
                return Err(DataError::DuplicateTuple { path: p.clone(), line: i + 1 });
            }
            rel.tuples.push(Tuple { values, weight });
        }
        Ok(rel)
    }

    /// Writes the TSV form; the `#w` column is emitted only when some
    /// annotation differs from 1.
    pub fn save(&self, path: &Path) -> Result<(), DataError> {
        let io_err = |e: std::io::Error| DataError::Io {
            path: path.display().to_string(),
            msg: e.to_string(),
        };
        let mut f = fs::File::create(path).map_err(io_err)?;
        let weighted = self.tuples.iter().any(|t| t.weight != 1);
        let mut header = self.schema.join("\t");
        if weighted {
            header.push_str("\t#w");
        }
        writeln!(f, "{header}").map_err(io_err)?;
        for t in &self.tuples {
            let row: Vec<String> = t.values.iter().map(|v| v.to_string()).collect();
            if weighted {
                writeln!(f, "{}\t{}", row.join("\t"), t.weight).map_err(io_err)?;
            } else {
                writeln!(f, "{}", row.join("\t")).map_err(io_err)?;
            }
        }
        Ok(())
    }
}

/// An instance: one relation per query edge, schemas matching the edge
/// attribute sets.
#[derive(Debug, Clone)]
pub struct Instance {
    pub query: QueryHypergraph,
    /// indexed by edge id
    pub relations: Vec<Relation>,
}

impl Instance {
    pub fn new(query: QueryHypergraph, relations: Vec<Relation>) -> Result<Self, DataError> {
        assert_eq!(query.edge_count(), relations.len());
        for e in query.edge_ids() {
            let want: Vec<String> = query
                .edge_attrs(e)
                .iter()
                .map(|&a| query.attr_name(a).to_owned())
                .collect();
            let got: BTreeSet<&String> = relations[e].schema.iter().collect();
            let want_set: BTreeSet<&String> = want.iter().collect();
            if got != want_set {
                return Err(DataError::SchemaMismatch {
                    expected: want,
                    found: relations[e].schema.clone(),
                });
            }
        }
        Ok(Instance { query, relations })
    }

    /// IN: the total number of input tuples.
    pub fn input_size(&self) -> u64 {
        self.relations.iter().map(|r| r.len() as u64).sum()
    }

    /// Active domain of one attribute across all relations containing it.
    pub fn active_domain(&self, attr: AttrId) -> BTreeSet<Value> {
        let name = self.query.attr_name(attr);
        let mut dom = BTreeSet::new();
        for rel in &self.relations {
            if let Ok(pos) = rel.attr_pos(name) {
                for t in &rel.tuples {
                    dom.insert(t.values[pos]);
                }
            }
        }
        dom
    }

    /// Loads an instance from a JSON manifest mapping edge names to TSV paths.
    /// Relative paths resolve against the manifest's directory.
    pub fn load_manifest(query: QueryHypergraph, manifest: &Path) -> Result<Self, DataError> {
        let text = fs::read_to_string(manifest).map_err(|e| DataError::Io {
            path: manifest.display().to_string(),
            msg: e.to_string(),
        })?;
        let map: BTreeMap<String, String> =
            serde_json::from_str(&text).map_err(|e| DataError::Io {
                path: manifest.display().to_string(),
                msg: format!("bad manifest JSON: {e}"),
            })?;
        let base = manifest.parent().unwrap_or(Path::new("."));
        let mut relations = Vec::new();
        for e in query.edge_ids() {
            let name = query.edge_name(e);
            let rel_path = map.get(name).ok_or_else(|| DataError::Io {
                path: manifest.display().to_string(),
                msg: format!("manifest has no entry for edge `{name}`"),
            })?;
            let full = base.join(rel_path);
            let schema: Vec<String> = query
                .edge_attrs(e)
                .iter()
                .map(|&a| query.attr_name(a).to_owned())
                .collect();
            let mut rel = Relation::load(&full, Some(&schema))?;
            rel.name = name.to_owned();
            relations.push(rel);
        }
        Instance::new(query, relations)
    }
}
