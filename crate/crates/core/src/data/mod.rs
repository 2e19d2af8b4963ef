//! Sample manifests, feature/prediction file formats, the synthetic
//! multi-view domain-shift generator, and classification metrics.

pub(crate) mod io;
mod metrics;
mod synthetic;

pub use io::{
    feature_csv_string, load_feature_csv, load_manifest, load_predictions, manifest_to_csv,
    parse_feature_csv, parse_manifest, parse_predictions, predictions_to_csv, read_pgm,
    write_feature_csv, write_manifest, write_pgm, write_predictions, PredictionRow, UNKNOWN_LABEL,
};
pub use metrics::{accuracy, confusion_matrix, f1_macro, ConfusionMatrix, MetricsReport};
pub use synthetic::{generate_synthetic, ring_landmarks, DomainData, SyntheticConfig, SyntheticDataset, SyntheticMode};

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Domain {
    Source,
    Target,
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Domain::Source => "source",
            Domain::Target => "target",
        })
    }
}

impl FromStr for Domain {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "source" => Ok(Domain::Source),
            "target" => Ok(Domain::Target),
            other => Err(format!("unknown domain {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleRecord {
    pub id: String,
    /// Image path, relative to the manifest's directory. Empty for inline feature rows.
    pub path: String,
    /// `None` when unknown (`-1` on disk).
    pub label: Option<usize>,
    pub domain: Domain,
    pub view: u32,
}

/// Ordered sample list with class metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    records: Vec<SampleRecord>,
    class_count: usize,
    class_names: Vec<String>,
}

impl Manifest {
    /// Validates unique ids, labels in `[0, class_count)` and labelled source samples.
    /// Missing class names default to the class index.
    pub fn new(records: Vec<SampleRecord>, class_count: usize, mut class_names: Vec<String>) -> Result<Self> {
        if class_names.len() > class_count {
            return Err(Error::Validation(format!(
                "{} class names for {class_count} classes",
                class_names.len()
            )));
        }
        for k in class_names.len()..class_count {
            class_names.push(k.to_string());
        }
        let mut seen = HashSet::with_capacity(records.len());
        for r in &records {
            if !seen.insert(r.id.as_str()) {
                return Err(Error::Validation(format!("duplicate sample id {:?}", r.id)));
            }
            match r.label {
                Some(l) if l >= class_count => {
                    return Err(Error::Validation(format!(
                        "sample {:?} has label {l}, but there are {class_count} classes",
                        r.id
                    )))
                }
                None if r.domain == Domain::Source => {
                    return Err(Error::Validation(format!("source sample {:?} has no label", r.id)))
                }
                _ => {}
            }
        }
        Ok(Self {
            records,
            class_count,
            class_names,
        })
    }

    pub fn records(&self) -> &[SampleRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn ids(&self) -> Vec<String> {
        self.records.iter().map(|r| r.id.clone()).collect()
    }

    pub fn labels(&self) -> Vec<Option<usize>> {
        self.records.iter().map(|r| r.label).collect()
    }

    /// All labels, or `None` if any sample is unlabelled.
    pub fn known_labels(&self) -> Option<Vec<usize>> {
        self.records.iter().map(|r| r.label).collect()
    }
}
