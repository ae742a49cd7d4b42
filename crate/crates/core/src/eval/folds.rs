//! Cross-validation splits and the majority-class baseline.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataset::{PrivacyClass, RecordingKey};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Scheme {
    /// Person-specific: train on a person's other recordings.
    #[serde(rename = "loro")]
    LeaveOneRecordingOut,
    /// Person-independent: train on everyone else.
    #[serde(rename = "lopo")]
    LeaveOnePersonOut,
}

impl Scheme {
    pub fn as_str(self) -> &'static str {
        match self {
            Scheme::LeaveOneRecordingOut => "loro",
            Scheme::LeaveOnePersonOut => "lopo",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "loro" => Ok(Scheme::LeaveOneRecordingOut),
            "lopo" => Ok(Scheme::LeaveOnePersonOut),
            _ => Err(Error::InvalidArgument(format!("unknown scheme `{s}` (loro, lopo)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub id: usize,
    pub scheme: Scheme,
    pub test_person: String,
    pub train: Vec<RecordingKey>,
    pub test: Vec<RecordingKey>,
}

fn by_person(keys: &[RecordingKey]) -> BTreeMap<&str, Vec<&RecordingKey>> {
    let mut map: BTreeMap<&str, Vec<&RecordingKey>> = BTreeMap::new();
    for k in keys {
        map.entry(k.person_id.as_str()).or_default().push(k);
    }
    for v in map.values_mut() {
        v.sort();
    }
    map
}

/// One fold per (person, held-out recording), training on that person's
/// remaining recordings.
pub fn split_leave_one_recording_out(keys: &[RecordingKey]) -> Result<Vec<Fold>> {
    let mut folds = Vec::new();
    for (person, recs) in by_person(keys) {
        if recs.len() < 2 {
            return Err(Error::Data(format!(
                "person {person} has {} recording(s); leave-one-recording-out needs at least 2",
                recs.len()
            )));
        }
        for held_out in &recs {
            folds.push(Fold {
                id: folds.len(),
                scheme: Scheme::LeaveOneRecordingOut,
                test_person: person.to_string(),
                train: recs.iter().filter(|k| k != &held_out).map(|k| (*k).clone()).collect(),
                test: vec![(*held_out).clone()],
            });
        }
    }
    Ok(folds)
}

/// One fold per person, training on every other person's recordings.
pub fn split_leave_one_person_out(keys: &[RecordingKey]) -> Result<Vec<Fold>> {
    let groups = by_person(keys);
    if groups.len() < 2 {
        return Err(Error::Data("leave-one-person-out needs at least 2 persons".into()));
    }
    Ok(groups
        .iter()
        .enumerate()
        .map(|(id, (person, recs))| Fold {
            id,
            scheme: Scheme::LeaveOnePersonOut,
            test_person: person.to_string(),
            train: groups
                .iter()
                .filter(|(p, _)| p != &person)
                .flat_map(|(_, r)| r.iter().map(|k| (*k).clone()))
                .collect(),
            test: recs.iter().map(|k| (*k).clone()).collect(),
        })
        .collect())
}

pub fn split(scheme: Scheme, keys: &[RecordingKey]) -> Result<Vec<Fold>> {
    match scheme {
        Scheme::LeaveOneRecordingOut => split_leave_one_recording_out(keys),
        Scheme::LeaveOnePersonOut => split_leave_one_person_out(keys),
    }
}

/// The more frequent training class; ties go to `Sensitive`.
pub fn majority_baseline(train_labels: &[PrivacyClass]) -> Result<PrivacyClass> {
    if train_labels.is_empty() {
        return Err(Error::InvalidArgument("majority baseline needs training labels".into()));
    }
    let sensitive = train_labels.iter().filter(|&&c| c == PrivacyClass::Sensitive).count();
    Ok(if 2 * sensitive >= train_labels.len() {
        PrivacyClass::Sensitive
    } else {
        PrivacyClass::NonSensitive
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    fn keys(persons: usize, recs: u32) -> Vec<RecordingKey> {
        (0..persons)
            .flat_map(|p| {
                (1..=recs).map(move |r| RecordingKey {
                    person_id: format!("p{p:02}"),
                    recording_id: r,
                })
            })
            .collect()
    }

    #[test]
    fn loro_counts() {
        assert_eq!(split_leave_one_recording_out(&keys(17, 3)).unwrap().len(), 51);
        let f = split_leave_one_recording_out(&keys(1, 3)).unwrap();
        assert_eq!(f.len(), 3);
        for fold in &f {
            assert_eq!(fold.train.len(), 2);
            let all: BTreeSet<_> = fold.train.iter().chain(&fold.test).collect();
            assert_eq!(all.len(), 3);
            assert!(fold.test.iter().all(|t| !fold.train.contains(t)));
            assert!(fold.train.iter().all(|k| k.person_id == fold.test_person));
        }
        assert!(split_leave_one_recording_out(&keys(2, 1)).is_err());
    }

    #[test]
    fn lopo_counts() {
        let f = split_leave_one_person_out(&keys(17, 3)).unwrap();
        assert_eq!(f.len(), 17);
        for fold in &f {
            assert_eq!(fold.train.len(), 48);
            assert_eq!(fold.test.len(), 3);
            assert!(fold.train.iter().all(|k| k.person_id != fold.test_person));
            assert!(fold.test.iter().all(|k| k.person_id == fold.test_person));
        }
        assert_eq!(split_leave_one_person_out(&keys(2, 1)).unwrap().len(), 2);
        assert!(split_leave_one_person_out(&keys(1, 3)).is_err());
    }

    #[test]
    fn majority_examples() {
        use PrivacyClass::{NonSensitive as N, Sensitive as S};
        let mut labels = vec![N; 7];
        labels.extend([S; 3]);
        assert_eq!(majority_baseline(&labels).unwrap(), N);
        assert_eq!(majority_baseline(&[S, N]).unwrap(), S);
        assert!(majority_baseline(&[]).is_err());
    }

    #[test]
    fn scheme_parsing() {
        assert_eq!("loro".parse::<Scheme>().unwrap(), Scheme::LeaveOneRecordingOut);
        assert_eq!("lopo".parse::<Scheme>().unwrap(), Scheme::LeaveOnePersonOut);
        assert!("kfold".parse::<Scheme>().is_err());
    }
}
