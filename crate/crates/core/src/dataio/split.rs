//! Train/validation/test splitting.

use std::collections::{BTreeMap, HashMap, HashSet};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{Dataset, DatasetManifest};
use crate::error::{Error, Result};
use crate::rng::substream;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitMode {
    /// Per-class proportions; samples sharing a lineage stay together.
    #[default]
    Stratified,
    /// Whole subjects go to one split.
    SubjectDisjoint,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train: f64,
    pub val: f64,
    pub test: f64,
    pub seed: u64,
    pub mode: SplitMode,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            train: 0.6,
            val: 0.2,
            test: 0.2,
            seed: 0,
            mode: SplitMode::Stratified,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        let parts = [self.train, self.val, self.test];
        if parts.iter().any(|f| !f.is_finite() || *f < 0.0) || self.train <= 0.0 {
            return Err(Error::Config(format!(
                "split fractions must be nonnegative with a positive train share, got {parts:?}"
            )));
        }
        if (parts.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("split fractions {parts:?} do not sum to 1")));
        }
        Ok(())
    }

    fn splits_in_use(&self) -> usize {
        1 + usize::from(self.val > 0.0) + usize::from(self.test > 0.0)
    }

    /// `(train, val, test)` group counts for `n` groups: test first, then val out of the remainder.
    fn counts(&self, n: usize) -> (usize, usize, usize) {
        let mut test = (n as f64 * self.test).round() as usize;
        if self.test > 0.0 {
            test = test.max(1);
        }
        let rest = n - test.min(n);
        let mut val = (rest as f64 * self.val / (self.train + self.val)).round() as usize;
        if self.val > 0.0 {
            val = val.max(1);
        }
        let train = n.saturating_sub(test + val);
        (train, val, test)
    }
}

/// Split-relevant attributes of one item.
#[derive(Clone, Copy, Debug)]
pub struct SplitKey<'a> {
    pub label: usize,
    pub group: &'a str,
    pub subject: &'a str,
}

/// Item indices per split, ascending.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

pub fn split_indices(keys: &[SplitKey], spec: &SplitSpec) -> Result<SplitIndices> {
    spec.validate()?;
    // groups in order of first appearance; a group is stratified by its first member's label
    let mut group_of: HashMap<&str, usize> = HashMap::new();
    let mut members: Vec<Vec<usize>> = Vec::new();
    let mut group_label = Vec::new();
    let mut group_subject = Vec::new();
    for (i, k) in keys.iter().enumerate() {
        let g = *group_of.entry(k.group).or_insert_with(|| {
            members.push(Vec::new());
            group_label.push(k.label);
            group_subject.push(k.subject);
            members.len() - 1
        });
        members[g].push(i);
    }

    let mut rng = substream(spec.seed, "split");
    let needed = spec.splits_in_use();
    let mut buckets: [Vec<usize>; 3] = Default::default();
    match spec.mode {
        SplitMode::Stratified => {
            let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
            for (g, &label) in group_label.iter().enumerate() {
                by_class.entry(label).or_default().push(g);
            }
            for (class, mut groups) in by_class {
                if groups.len() < needed {
                    return Err(Error::InsufficientSamples {
                        class,
                        count: groups.len(),
                        needed,
                    });
                }
                groups.shuffle(&mut rng);
                let (_, val, test) = spec.counts(groups.len());
                buckets[2].extend_from_slice(&groups[..test]);
                buckets[1].extend_from_slice(&groups[test..test + val]);
                buckets[0].extend_from_slice(&groups[test + val..]);
            }
        }
        SplitMode::SubjectDisjoint => {
            let mut subjects: Vec<&str> = group_subject.iter().copied().collect::<HashSet<_>>().into_iter().collect();
            subjects.sort_unstable();
            if subjects.len() < needed {
                return Err(Error::Dataset(format!(
                    "subject-disjoint split needs at least {needed} subjects, found {}",
                    subjects.len()
                )));
            }
            subjects.shuffle(&mut rng);
            let (_, val, test) = spec.counts(subjects.len());
            let bucket_of: HashMap<&str, usize> = subjects
                .iter()
                .enumerate()
                .map(|(i, s)| (*s, if i < test { 2 } else if i < test + val { 1 } else { 0 }))
                .collect();
            for (g, s) in group_subject.iter().enumerate() {
                buckets[bucket_of[s]].push(g);
            }
        }
    }

    let expand = |groups: &[usize]| {
        let mut idx: Vec<usize> = groups.iter().flat_map(|&g| members[g].iter().copied()).collect();
        idx.sort_unstable();
        idx
    };
    Ok(SplitIndices {
        train: expand(&buckets[0]),
        val: expand(&buckets[1]),
        test: expand(&buckets[2]),
    })
}

/// Splits samples into `(train, val, test)`. Derivatives of one original never straddle splits.
pub fn split_dataset(ds: &Dataset, spec: &SplitSpec) -> Result<(Dataset, Dataset, Dataset)> {
    let keys: Vec<SplitKey> = ds
        .samples
        .iter()
        .map(|s| SplitKey {
            label: s.label,
            group: &s.lineage,
            subject: &s.subject,
        })
        .collect();
    let idx = split_indices(&keys, spec)?;
    let take = |ix: &[usize]| ds.with_samples(ix.iter().map(|&i| ds.samples[i].clone()).collect());
    Ok((take(&idx.train), take(&idx.val), take(&idx.test)))
}

pub fn split_manifest(m: &DatasetManifest, spec: &SplitSpec) -> Result<(DatasetManifest, DatasetManifest, DatasetManifest)> {
    let paths: Vec<String> = m.entries.iter().map(|e| e.path.to_string_lossy().into_owned()).collect();
    let keys: Vec<SplitKey> = m
        .entries
        .iter()
        .zip(&paths)
        .map(|(e, p)| SplitKey {
            label: e.label,
            group: p,
            subject: &e.subject,
        })
        .collect();
    let idx = split_indices(&keys, spec)?;
    let take = |ix: &[usize]| DatasetManifest {
        class_names: m.class_names.clone(),
        entries: ix.iter().map(|&i| m.entries[i].clone()).collect(),
    };
    Ok((take(&idx.train), take(&idx.val), take(&idx.test)))
}

/// Errors if any lineage appears in more than one split.
pub fn check_no_leakage(train: &Dataset, val: &Dataset, test: &Dataset) -> Result<()> {
    let mut owner: HashMap<&str, &str> = HashMap::new();
    for (name, ds) in [("train", train), ("val", val), ("test", test)] {
        for s in &ds.samples {
            match owner.insert(&s.lineage, name) {
                Some(prev) if prev != name => {
                    return Err(Error::Dataset(format!(
                        "lineage {} appears in both {prev} and {name}",
                        s.lineage
                    )))
                }
                _ => {}
            }
        }
    }
    Ok(())
}
