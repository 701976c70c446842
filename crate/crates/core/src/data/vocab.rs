//! Concept vocabulary shared by preparation, the model, and embeddings.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{DataError, FactRow, Result};

/// Static attribute categories, in fixed order. A fact whose concept is
/// `"<category>:<level>"` for one of these is a static attribute, not an
/// event.
pub const STATIC_CATEGORIES: [&str; 3] = ["gender", "race", "pseudo_age"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct StaticBlock {
    category: String,
    levels: Vec<String>,
}

/// Sorted registries of indicative event types, numeric measurement
/// concepts, and static attribute levels.
///
/// Type ids are dense and stable: 0 is padding, `1..=n_indicative` are the
/// indicative types in sorted name order, and the static categories follow
/// as one pseudo-type each (the model predicts an intensity per type, and
/// static pseudo-types simply learn to stay silent). Numeric concepts live
/// in a separate token space and get no type id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vocabulary {
    indicative: Vec<String>,
    numeric: Vec<String>,
    statics: Vec<StaticBlock>,
}

impl Vocabulary {
    /// Scans a fact table and registers every concept it sees.
    pub fn from_facts(facts: &[FactRow]) -> Result<Self> {
        let mut indicative = BTreeSet::new();
        let mut numeric = BTreeSet::new();
        let mut levels: BTreeMap<&str, BTreeSet<String>> = STATIC_CATEGORIES.iter().map(|&c| (c, BTreeSet::new())).collect();

        for fact in facts {
            let concept = fact.concept.as_str();
            if let Some((category, level)) = split_static(concept) {
                if level.is_empty() {
                    return Err(DataError::BareStatic(concept.to_string()));
                }
                levels.get_mut(category).unwrap().insert(level.to_string());
                continue;
            }
            if STATIC_CATEGORIES.contains(&concept) {
                return Err(DataError::BareStatic(concept.to_string()));
            }
            match fact.value {
                Some(_) => {
                    numeric.insert(concept.to_string());
                }
                None => {
                    indicative.insert(concept.to_string());
                }
            }
        }

        for name in &numeric {
            if indicative.contains(name) {
                return Err(DataError::MixedConcept(name.clone()));
            }
        }

        Ok(Vocabulary {
            indicative: indicative.into_iter().collect(),
            numeric: numeric.into_iter().collect(),
            statics: STATIC_CATEGORIES
                .iter()
                .map(|&c| StaticBlock { category: c.to_string(), levels: levels[c].iter().cloned().collect() })
                .collect(),
        })
    }

    pub fn n_indicative(&self) -> usize {
        self.indicative.len()
    }

    pub fn n_numeric(&self) -> usize {
        self.numeric.len()
    }

    pub fn n_static_categories(&self) -> usize {
        self.statics.len()
    }

    /// Number of typed intensity slots (indicative types plus one
    /// pseudo-type per static category); excludes padding id 0.
    pub fn n_types(&self) -> usize {
        self.indicative.len() + self.statics.len()
    }

    /// Type id (1-based) of an indicative concept.
    pub fn indicative_id(&self, name: &str) -> Option<usize> {
        self.indicative.binary_search_by(|c| c.as_str().cmp(name)).ok().map(|i| i + 1)
    }

    /// Type id of the pseudo-type for static category index `cat`.
    pub fn static_type_id(&self, cat: usize) -> usize {
        self.indicative.len() + cat + 1
    }

    /// Name for a type id in `1..=n_types()`.
    pub fn type_name(&self, id: usize) -> &str {
        if id >= 1 && id <= self.indicative.len() {
            &self.indicative[id - 1]
        } else {
            &self.statics[id - self.indicative.len() - 1].category
        }
    }

    /// True if the id belongs to a static pseudo-type.
    pub fn is_static_type(&self, id: usize) -> bool {
        id > self.indicative.len() && id <= self.n_types()
    }

    pub fn indicative_names(&self) -> &[String] {
        &self.indicative
    }

    pub fn numeric_names(&self) -> &[String] {
        &self.numeric
    }

    /// Index (0-based) of a numeric concept in the measurement token space.
    pub fn numeric_id(&self, name: &str) -> Option<usize> {
        self.numeric.binary_search_by(|c| c.as_str().cmp(name)).ok()
    }

    pub fn static_category(&self, cat: usize) -> &str {
        &self.statics[cat].category
    }

    pub fn n_levels(&self, cat: usize) -> usize {
        self.statics[cat].levels.len()
    }

    pub fn level_id(&self, cat: usize, level: &str) -> Result<usize> {
        self.statics[cat]
            .levels
            .binary_search_by(|l| l.as_str().cmp(level))
            .map_err(|_| DataError::UnknownLevel { category: self.statics[cat].category.clone(), level: level.to_string() })
    }

    pub fn level_name(&self, cat: usize, level: usize) -> &str {
        &self.statics[cat].levels[level]
    }

    pub fn category_index(&self, category: &str) -> Result<usize> {
        self.statics
            .iter()
            .position(|b| b.category == category)
            .ok_or_else(|| DataError::UnknownStatic(category.to_string()))
    }

    /// Hex SHA-256 of the canonical JSON form; checkpoints store this so a
    /// model is never applied against the wrong vocabulary.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("vocabulary serializes");
        let mut hasher = Sha256::new();
        hasher.update(&bytes);
        format!("{:x}", hasher.finalize())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self)?;
        std::fs::write(path, json).map_err(DataError::Io)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        Ok(serde_json::from_slice(&bytes)?)
    }
}

/// Splits `"gender:f"` into `("gender", "f")` for known static categories.
fn split_static(concept: &str) -> Option<(&str, &str)> {
    let (head, tail) = concept.split_once(':')?;
    STATIC_CATEGORIES.contains(&head).then_some((head, tail))
}

#[cfg(test)]
mod tests {
    use super::*;
    fn fact(concept: &str, value: Option<f64>) -> FactRow {
        FactRow { patient_id: "1".into(), interval: 3, concept: concept.into(), value }
    }

    fn sample() -> Vocabulary {
        Vocabulary::from_facts(&[
            fact("dx_b", None),
            fact("dx_a", None),
            fact("lab_x", Some(1.0)),
            fact("gender:f", None),
            fact("gender:m", None),
            fact("race:w", None),
            fact("pseudo_age:40s", None),
            fact("pseudo_age:30s", None),
        ])
        .unwrap()
    }

    #[test]
    fn ids_are_sorted_and_dense() {
        let v = sample();
        assert_eq!(v.n_indicative(), 2);
        assert_eq!(v.indicative_id("dx_a"), Some(1));
        assert_eq!(v.indicative_id("dx_b"), Some(2));
        assert_eq!(v.indicative_id("dx_z"), None);
        assert_eq!(v.n_types(), 5);
        assert_eq!(v.static_type_id(0), 3);
        assert_eq!(v.type_name(3), "gender");
        assert!(v.is_static_type(3));
        assert!(!v.is_static_type(2));
        assert_eq!(v.numeric_id("lab_x"), Some(0));
        assert_eq!(v.level_id(2, "30s").unwrap(), 0);
        assert_eq!(v.level_id(2, "40s").unwrap(), 1);
        assert!(v.level_id(0, "x").is_err());
    }

    #[test]
    fn mixed_concept_is_rejected() {
        let err = Vocabulary::from_facts(&[fact("dx_a", None), fact("dx_a", Some(2.0))]).unwrap_err();
        assert!(matches!(err, DataError::MixedConcept(_)));
    }

    #[test]
    fn bare_static_is_rejected() {
        assert!(matches!(Vocabulary::from_facts(&[fact("gender", None)]), Err(DataError::BareStatic(_))));
        assert!(matches!(Vocabulary::from_facts(&[fact("gender:", None)]), Err(DataError::BareStatic(_))));
    }

    #[test]
    fn non_static_colon_concepts_stay_indicative() {
        let v = Vocabulary::from_facts(&[fact("icd:401", None), fact("gender:f", None)]).unwrap();
        assert_eq!(v.indicative_id("icd:401"), Some(1));
    }

    #[test]
    fn hash_tracks_content() {
        let v = sample();
        assert_eq!(v.hash(), sample().hash());
        let w = Vocabulary::from_facts(&[fact("dx_a", None)]).unwrap();
        assert_ne!(v.hash(), w.hash());
    }

    #[test]
    fn json_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vocab.json");
        let v = sample();
        v.save(&path).unwrap();
        assert_eq!(Vocabulary::load(&path).unwrap(), v);
    }
}
