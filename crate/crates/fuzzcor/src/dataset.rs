//! Versioned interchange formats: dataset files (observations plus category
//! banks per variable), table files, and matrix outputs.

use crate::count::{BuildOptions, FuzzyFrequencyTable};
use crate::error::{Error, Result};
use crate::estimator::{FitResult, Method};
use crate::fuzzy::{FuzzyNumber, FuzzyPartition, FuzzySample, RangeConvention};
use serde::{Deserialize, Serialize};

/// Schema version tag carried by every file this crate writes.
pub const FORMAT: &str = "fuzzcor/1";

fn check_format(format: &str) -> Result<()> {
    if format != FORMAT {
        return Err(Error::Schema(format!(
            "unsupported format tag {format:?}, expected {FORMAT:?}"
        )));
    }
    Ok(())
}

/// One variable: observations (crisp scalars or fuzzy records) and its
/// category bank.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VariableRecord {
    pub name: String,
    pub observations: Vec<FuzzyNumber>,
    pub categories: FuzzyPartition,
    /// Explicit partition domain; defaults to the hull of the categories.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain: Option<(f64, f64)>,
}

/// Input dataset: named variables with equal observation counts.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetFile {
    pub format: String,
    pub variables: Vec<VariableRecord>,
}

impl DatasetFile {
    pub fn from_json(json: &str) -> Result<Self> {
        let file: DatasetFile =
            serde_json::from_str(json).map_err(|e| Error::Schema(e.to_string()))?;
        file.validate_schema()?;
        Ok(file)
    }

    fn validate_schema(&self) -> Result<()> {
        check_format(&self.format)?;
        if self.variables.is_empty() {
            return Err(Error::Schema("dataset has no variables".into()));
        }
        let len = self.variables[0].observations.len();
        if len == 0 {
            return Err(Error::Schema("dataset has no observations".into()));
        }
        for v in &self.variables {
            if v.observations.len() != len {
                return Err(Error::Schema(format!(
                    "variable {:?} has {} observations, expected {}",
                    v.name,
                    v.observations.len(),
                    len
                )));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.variables.len()
    }

    pub fn is_empty(&self) -> bool {
        self.variables.is_empty()
    }

    /// Resolves a variable reference: a 0-based index or a name.
    pub fn resolve(&self, reference: &str) -> Result<usize> {
        if let Ok(idx) = reference.parse::<usize>() {
            if idx < self.variables.len() {
                return Ok(idx);
            }
            return Err(Error::Schema(format!(
                "variable index {idx} out of range (have {})",
                self.variables.len()
            )));
        }
        self.variables
            .iter()
            .position(|v| v.name == reference)
            .ok_or_else(|| Error::Schema(format!("unknown variable {reference:?}")))
    }

    pub fn sample(&self, j: usize) -> Result<FuzzySample> {
        FuzzySample::new(
            self.variables[j].observations.clone(),
            RangeConvention::default(),
        )
    }

    pub fn partition(&self, j: usize) -> Result<FuzzyPartition> {
        let v = &self.variables[j];
        match v.domain {
            Some(domain) => FuzzyPartition::new(v.categories.granules().to_vec(), domain),
            None => Ok(v.categories.clone()),
        }
    }

    /// Builds the fuzzy frequency table for a pair of variables.
    pub fn build_pair(&self, j: usize, k: usize, opts: &BuildOptions) -> Result<FuzzyFrequencyTable> {
        let mut table = FuzzyFrequencyTable::build(
            &self.sample(j)?,
            &self.sample(k)?,
            &self.partition(j)?,
            &self.partition(k)?,
            opts,
        )?;
        table.pair = Some((
            self.variables[j].name.clone(),
            self.variables[k].name.clone(),
        ));
        Ok(table)
    }
}

/// One stored table with its pair indices.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TableRecord {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pair_index: Option<(usize, usize)>,
    #[serde(flatten)]
    pub table: FuzzyFrequencyTable,
}

/// A batch of fuzzy frequency tables.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TablesFile {
    pub format: String,
    pub tables: Vec<TableRecord>,
}

impl TablesFile {
    pub fn new(tables: Vec<TableRecord>) -> Self {
        TablesFile {
            format: FORMAT.to_string(),
            tables,
        }
    }

    /// Accepts either the batch format or a single bare table object.
    pub fn from_json(json: &str) -> Result<Self> {
        if let Ok(file) = serde_json::from_str::<TablesFile>(json) {
            check_format(&file.format)?;
            return Ok(file);
        }
        let table: FuzzyFrequencyTable =
            serde_json::from_str(json).map_err(|e| Error::Schema(e.to_string()))?;
        Ok(TablesFile::new(vec![TableRecord {
            pair_index: None,
            table,
        }]))
    }
}

/// Per-pair fit in a matrix output.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PairFit {
    pub pair_index: (usize, usize),
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pair: Option<(String, String)>,
    pub fit: FitResult,
}

/// Assembled correlation matrix output.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MatrixFile {
    pub format: String,
    pub method: Method,
    pub variables: Vec<String>,
    pub matrix: Vec<Vec<f64>>,
    pub smoothed: bool,
    pub fits: Vec<PairFit>,
}

impl MatrixFile {
    /// Correlation matrix as CSV with a variable-name header column.
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        write!(w, "variable")?;
        for name in &self.variables {
            write!(w, ",{name}")?;
        }
        writeln!(w)?;
        for (name, row) in self.variables.iter().zip(&self.matrix) {
            write!(w, "{name}")?;
            for v in row {
                write!(w, ",{v}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::count::DefuzzMode;

    fn toy_dataset_json() -> String {
        serde_json::json!({
            "format": FORMAT,
            "variables": [
                {
                    "name": "X1",
                    "observations": [0.1, 0.2, 0.8, 0.9, 0.3, 0.7],
                    "categories": [
                        {"xl": 0.0, "c1": 0.0, "c2": 0.55, "xu": 0.55},
                        {"xl": 0.55, "c1": 0.55, "c2": 1.0, "xu": 1.0}
                    ]
                },
                {
                    "name": "X2",
                    "observations": [0.9, 0.1, 0.6, 0.8, 0.2, 0.4],
                    "categories": [
                        {"xl": 0.0, "c1": 0.0, "c2": 0.45, "xu": 0.45},
                        {"xl": 0.45, "c1": 0.45, "c2": 1.0, "xu": 1.0}
                    ]
                }
            ]
        })
        .to_string()
    }

    #[test]
    fn dataset_roundtrip_and_build() {
        let data = DatasetFile::from_json(&toy_dataset_json()).unwrap();
        assert_eq!(data.len(), 2);
        assert_eq!(data.resolve("X2").unwrap(), 1);
        assert_eq!(data.resolve("0").unwrap(), 0);
        assert!(data.resolve("nope").is_err());

        let table = data.build_pair(0, 1, &BuildOptions::default()).unwrap();
        assert_eq!(table.pair, Some(("X1".into(), "X2".into())));
        let counts = table.defuzzify(DefuzzMode::Max).unwrap();
        assert_eq!(counts.sum(), 6.0);
    }

    #[test]
    fn dataset_schema_errors() {
        assert!(DatasetFile::from_json("{}").is_err());
        let wrong_format = toy_dataset_json().replace("fuzzcor/1", "fuzzcor/9");
        assert!(DatasetFile::from_json(&wrong_format).is_err());
        let ragged = toy_dataset_json().replace("[0.9,0.1,0.6,0.8,0.2,0.4]", "[0.9]");
        assert_ne!(ragged, toy_dataset_json());
        assert!(DatasetFile::from_json(&ragged).is_err());
    }

    #[test]
    fn tables_file_accepts_bare_table() {
        let data = DatasetFile::from_json(&toy_dataset_json()).unwrap();
        let table = data.build_pair(0, 1, &BuildOptions::default()).unwrap();
        let bare = serde_json::to_string(&table).unwrap();
        let parsed = TablesFile::from_json(&bare).unwrap();
        assert_eq!(parsed.tables.len(), 1);
        assert_eq!(parsed.tables[0].table, table);

        let batch = TablesFile::new(vec![TableRecord {
            pair_index: Some((0, 1)),
            table: table.clone(),
        }]);
        let json = serde_json::to_string(&batch).unwrap();
        let back = TablesFile::from_json(&json).unwrap();
        assert_eq!(back.tables[0].pair_index, Some((0, 1)));
        assert_eq!(back.tables[0].table, table);
    }
}
