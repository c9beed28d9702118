use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::engine::ValueSource;

/// Declared response keys of one operation (`"200"`, `"4XX"`, `"default"`).
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DeclaredStatuses(pub Vec<String>);

impl DeclaredStatuses {
    pub fn new<I: IntoIterator<Item = S>, S: Into<String>>(keys: I) -> Self {
        DeclaredStatuses(keys.into_iter().map(Into::into).collect())
    }

    /// Exact or `NXX` match; `default` does not count.
    pub fn declares(&self, status: u16) -> bool {
        let exact = status.to_string();
        let pattern = format!("{}XX", status / 100);
        self.0.iter().any(|k| *k == exact || k.eq_ignore_ascii_case(&pattern))
    }

    pub fn has_default(&self) -> bool {
        self.0.iter().any(|k| k == "default")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StatusFindingKind {
    /// 500 where a dictionary-chosen identifier should have produced the
    /// declared 404.
    ErrorInsteadOfNotFound,
    /// Status outside the declared set, with no `default` response.
    Undeclared,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatusFinding {
    pub kind: StatusFindingKind,
    pub expectation: String,
}

/// A path slot filled from the dictionary most likely names a resource
/// that does not exist, so the declared 404 is the expected answer.
pub fn status_mapping_checker(
    status: u16,
    path_sources: &BTreeMap<String, ValueSource>,
    declared: &DeclaredStatuses,
) -> Option<StatusFinding> {
    if status == 0 {
        return None;
    }
    let guessed_id = path_sources.values().any(|s| *s == ValueSource::Dictionary);
    if status == 500 && guessed_id && declared.declares(404) && !declared.declares(500) {
        return Some(StatusFinding {
            kind: StatusFindingKind::ErrorInsteadOfNotFound,
            expectation: "unknown resource identifier should yield the declared 404".into(),
        });
    }
    if !declared.declares(status) && !declared.has_default() {
        return Some(StatusFinding {
            kind: StatusFindingKind::Undeclared,
            expectation: format!("status {status} is not among declared {:?}", declared.0),
        });
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sources(s: ValueSource) -> BTreeMap<String, ValueSource> {
        BTreeMap::from([("ueId".to_string(), s)])
    }

    #[test]
    fn unknown_id_500_with_declared_404() {
        let d = DeclaredStatuses::new(["200", "400", "404"]);
        let f = status_mapping_checker(500, &sources(ValueSource::Dictionary), &d).unwrap();
        assert_eq!(f.kind, StatusFindingKind::ErrorInsteadOfNotFound);
        let f = status_mapping_checker(500, &sources(ValueSource::Handle), &d).unwrap();
        assert_eq!(f.kind, StatusFindingKind::Undeclared);
    }

    #[test]
    fn declared_and_undeclared() {
        let d = DeclaredStatuses::new(["200", "400", "404"]);
        assert_eq!(status_mapping_checker(200, &BTreeMap::new(), &d), None);
        assert_eq!(
            status_mapping_checker(418, &BTreeMap::new(), &d).unwrap().kind,
            StatusFindingKind::Undeclared
        );
        let wild = DeclaredStatuses::new(["200", "default"]);
        assert_eq!(status_mapping_checker(418, &BTreeMap::new(), &wild), None);
        let pattern = DeclaredStatuses::new(["200", "4XX"]);
        assert_eq!(status_mapping_checker(418, &BTreeMap::new(), &pattern), None);
        assert_eq!(status_mapping_checker(0, &BTreeMap::new(), &d), None);
    }
}
