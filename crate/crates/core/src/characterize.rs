//! Grouping projection kinds by the distance pools between their MSVs.
//!
//! Starting from a reference kind, every still-unassigned kind whose pool
//! against the reference is power-law joins the reference's group. The
//! next reference is the first unassigned kind in the preference order, and
//! so on until every kind is placed.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use crate::dsv::PairOutcome;
use crate::dsv::{classify_outcome, pairwise_dsv, DistributionClass};
use crate::error::{Error, Result};
use crate::projection::ProjectionKind;
use crate::spectral::Msv;

/// Named reference orders.
pub const PRESETS: [&str; 6] = [
    "default",
    "llama-3.2-1b",
    "llama-3.2-3b",
    "llama-3.2-8b",
    "smollm2",
    "qwen",
];

/// Reference-kind preference for a preset name.
///
/// `llama-3.2-3b` prefers k then up, `llama-3.2-8b` prefers up for the
/// second group; everything else uses canonical order.
pub fn preset_order(name: &str) -> Option<Vec<ProjectionKind>> {
    use ProjectionKind::*;
    let order = match name {
        "default" | "llama-3.2-1b" | "smollm2" | "qwen" => ProjectionKind::ALL.to_vec(),
        "llama-3.2-3b" => vec![Q, K, Up, V, O, Gate, Down],
        "llama-3.2-8b" => vec![Q, Up, K, V, O, Gate, Down],
        _ => return None,
    };
    Some(order)
}

fn ordered(a: ProjectionKind, b: ProjectionKind) -> (ProjectionKind, ProjectionKind) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

/// Pair key used in JSON, e.g. `q-gate`; the smaller kind comes first.
pub fn pair_key(a: ProjectionKind, b: ProjectionKind) -> String {
    let (a, b) = ordered(a, b);
    format!("{a}-{b}")
}

/// Classes of the 21 cross-kind and 7 within-kind pools.
#[derive(Debug, Clone, PartialEq)]
pub struct PairClassMatrix {
    entries: BTreeMap<(ProjectionKind, ProjectionKind), PairOutcome>,
}

impl PairClassMatrix {
    /// Symmetric lookup.
    pub fn get(&self, a: ProjectionKind, b: ProjectionKind) -> Option<&PairOutcome> {
        self.entries.get(&ordered(a, b))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&(ProjectionKind, ProjectionKind), &PairOutcome)> {
        self.entries.iter()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

fn by_kind(msvs: &[Msv]) -> Result<BTreeMap<ProjectionKind, &Msv>> {
    let mut map = BTreeMap::new();
    for m in msvs {
        if map.insert(m.kind, m).is_some() {
            return Err(Error::InvalidConfig(format!("duplicate MSV for {}", m.kind)));
        }
    }
    if map.len() != ProjectionKind::ALL.len() {
        return Err(Error::InvalidConfig(format!(
            "expected MSVs for all 7 kinds, got {}",
            map.len()
        )));
    }
    let rank = msvs[0].rank;
    if let Some(m) = msvs.iter().find(|m| m.rank != rank) {
        return Err(Error::RankMismatch(rank, m.rank));
    }
    Ok(map)
}

fn classify_pair(a: &Msv, b: &Msv) -> Result<PairOutcome> {
    classify_outcome(&pairwise_dsv(a, b)?.without_zeros())
}

/// Classifies every unordered kind pair, including each kind with itself.
pub fn pair_class_matrix(msvs: &[Msv]) -> Result<PairClassMatrix> {
    let map = by_kind(msvs)?;
    let pairs: Vec<(ProjectionKind, ProjectionKind)> = ProjectionKind::ALL
        .into_iter()
        .flat_map(|a| {
            ProjectionKind::ALL
                .into_iter()
                .filter(move |b| a <= *b)
                .map(move |b| (a, b))
        })
        .collect();
    let outcomes = pairs
        .par_iter()
        .map(|&(a, b)| classify_pair(map[&a], map[&b]))
        .collect::<Result<Vec<_>>>()?;
    Ok(PairClassMatrix {
        entries: pairs.into_iter().zip(outcomes).collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Group {
    pub reference: ProjectionKind,
    pub members: Vec<ProjectionKind>,
}

impl Group {
    /// Reference followed by members.
    pub fn kinds(&self) -> impl Iterator<Item = ProjectionKind> + '_ {
        std::iter::once(self.reference).chain(self.members.iter().copied())
    }
}

/// Referenced-weight groups of one model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CharacteristicTable {
    pub model_id: String,
    pub rank: usize,
    pub groups: Vec<Group>,
    /// Keyed by [`pair_key`].
    #[serde(default)]
    pub diagnostics: BTreeMap<String, DistributionClass>,
    /// Pools that could not be classified, with the reason.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub unclassified: BTreeMap<String, String>,
}

impl CharacteristicTable {
    pub fn from_json(text: &str) -> Result<Self> {
        let table: Self = serde_json::from_str(text)?;
        table.validate()?;
        Ok(table)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Checks that the groups partition the seven kinds.
    pub fn validate(&self) -> Result<()> {
        let mut seen = BTreeMap::new();
        for g in &self.groups {
            for k in g.kinds() {
                if seen.insert(k, ()).is_some() {
                    return Err(Error::InvalidConfig(format!(
                        "{k} appears more than once in the characteristic table"
                    )));
                }
            }
        }
        let missing: Vec<String> = ProjectionKind::ALL
            .into_iter()
            .filter(|k| !seen.contains_key(k))
            .map(|k| k.to_string())
            .collect();
        if !missing.is_empty() {
            return Err(Error::IncompleteTable(missing.join(", ")));
        }
        Ok(())
    }

    /// The group containing `kind`.
    pub fn group_of(&self, kind: ProjectionKind) -> Option<(usize, &Group)> {
        self.groups
            .iter()
            .enumerate()
            .find(|(_, g)| g.kinds().any(|k| k == kind))
    }

    pub fn diagnostic(&self, a: ProjectionKind, b: ProjectionKind) -> Option<&DistributionClass> {
        self.diagnostics.get(&pair_key(a, b))
    }

    /// One line per group, `q: k, gate`.
    pub fn summary(&self) -> String {
        self.groups
            .iter()
            .map(|g| {
                let members: Vec<_> = g.members.iter().map(|m| m.to_string()).collect();
                let members = if members.is_empty() {
                    "---".to_string()
                } else {
                    members.join(", ")
                };
                format!("{}: {}", g.reference, members)
            })
            .collect::<Vec<_>>()
            .join("\n")
    }
}

/// Completes a (possibly partial) preference into a full order: listed kinds
/// first, the rest in canonical order.
fn full_order(preference: &[ProjectionKind]) -> Result<Vec<ProjectionKind>> {
    let mut order = Vec::with_capacity(7);
    for &k in preference {
        if order.contains(&k) {
            return Err(Error::InvalidConfig(format!("{k} listed twice in reference order")));
        }
        order.push(k);
    }
    for k in ProjectionKind::ALL {
        if !order.contains(&k) {
            order.push(k);
        }
    }
    Ok(order)
}

/// Greedy referenced-weight grouping.
pub fn characterize_model(
    model_id: &str,
    msvs: &[Msv],
    reference_order: &[ProjectionKind],
) -> Result<CharacteristicTable> {
    let order = full_order(reference_order)?;
    let matrix = pair_class_matrix(msvs)?;
    let rank = msvs[0].rank;

    let mut unassigned = order;
    let mut groups = Vec::new();
    while !unassigned.is_empty() {
        let reference = unassigned.remove(0);
        let (members, rest): (Vec<_>, Vec<_>) = unassigned
            .into_iter()
            .partition(|&k| matrix.get(reference, k).is_some_and(PairOutcome::is_power_law));
        unassigned = rest;
        groups.push(Group { reference, members });
    }

    let mut diagnostics = BTreeMap::new();
    let mut unclassified = BTreeMap::new();
    for (&(a, b), outcome) in matrix.iter() {
        match outcome {
            PairOutcome::Classified(c) => {
                diagnostics.insert(pair_key(a, b), *c);
            }
            PairOutcome::Unclassifiable(reason) => {
                unclassified.insert(pair_key(a, b), reason.clone());
            }
        }
    }
    let table = CharacteristicTable {
        model_id: model_id.to_string(),
        rank,
        groups,
        diagnostics,
        unclassified,
    };
    table.validate()?;
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ProjectionKind::*;

    #[test]
    fn presets_resolve() {
        for p in PRESETS {
            let order = preset_order(p).unwrap();
            assert_eq!(full_order(&order).unwrap().len(), 7);
        }
        assert_eq!(preset_order("llama-3.2-8b").unwrap()[1], Up);
        assert!(preset_order("gpt").is_none());
    }

    #[test]
    fn partial_orders_are_completed() {
        assert_eq!(full_order(&[Up]).unwrap(), vec![Up, Q, K, V, O, Gate, Down]);
        assert!(full_order(&[Q, Q]).is_err());
    }

    #[test]
    fn pair_keys_are_symmetric() {
        assert_eq!(pair_key(Gate, Q), "q-gate");
        assert_eq!(pair_key(Q, Gate), "q-gate");
        assert_eq!(pair_key(Up, Up), "up-up");
    }

    fn table(groups: Vec<Group>) -> CharacteristicTable {
        CharacteristicTable {
            model_id: "m".into(),
            rank: 16,
            groups,
            diagnostics: BTreeMap::new(),
            unclassified: BTreeMap::new(),
        }
    }

    #[test]
    fn validation_catches_gaps_and_repeats() {
        let ok = table(vec![
            Group { reference: Q, members: vec![K, Gate] },
            Group { reference: V, members: vec![O, Up, Down] },
        ]);
        ok.validate().unwrap();
        assert_eq!(ok.summary(), "q: k, gate\nv: o, up, down");
        assert_eq!(ok.group_of(Down).unwrap().0, 1);

        let missing = table(vec![Group { reference: Q, members: vec![K] }]);
        assert!(matches!(missing.validate(), Err(Error::IncompleteTable(_))));

        let twice = table(vec![
            Group { reference: Q, members: vec![K, V, O, Gate, Up, Down] },
            Group { reference: K, members: vec![] },
        ]);
        assert!(twice.validate().is_err());
    }

    #[test]
    fn singleton_summary() {
        let t = table(vec![
            Group { reference: Q, members: vec![K, V, Gate, Up, Down] },
            Group { reference: O, members: vec![] },
        ]);
        assert_eq!(t.summary().lines().nth(1), Some("o: ---"));
    }
}
