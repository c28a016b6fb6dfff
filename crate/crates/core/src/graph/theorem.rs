//! Executable forms of the direct-cause characterisation: unselected
//! observables are d-separated from the label by the selected set exactly
//! when the selected set contains every observed parent of the label.

use serde::Serialize;

use super::dsep::reachable;
use super::{Dag, GraphError, NodeSet};

/// Subset enumeration is `2^|x|`; beyond this it stops being a unit check.
pub const MAX_THEOREM_OBSERVABLES: usize = 15;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DirectCauses {
    /// Parents of the label inside the observable set.
    pub observed: NodeSet,
    /// Parents of the label outside the observable set.
    pub latent: NodeSet,
}

pub fn direct_causes(g: &Dag, y: &str, x: &NodeSet) -> Result<DirectCauses, GraphError> {
    let yi = g.resolve_one(y)?;
    g.resolve(x)?;
    let mut observed = NodeSet::new();
    let mut latent = NodeSet::new();
    for &p in g.parents_of(yi) {
        let name = g.name(p);
        if x.contains(name) {
            observed.insert(name);
        } else {
            latent.insert(name);
        }
    }
    Ok(DirectCauses { observed, latent })
}

/// True iff no directed path leads from `y` into any node of `x`.
pub fn satisfies_assumption1(g: &Dag, y: &str, x: &NodeSet) -> Result<bool, GraphError> {
    Ok(first_descendant_in(g, y, x)?.is_none())
}

fn first_descendant_in(g: &Dag, y: &str, x: &NodeSet) -> Result<Option<String>, GraphError> {
    let yi = g.resolve_one(y)?;
    if x.contains(y) {
        return Err(GraphError::InvalidQuery(format!(
            "label `{y}` must not be among the observables"
        )));
    }
    let xs = g.resolve(x)?;
    let desc = g.descendants_of(yi);
    Ok(xs
        .into_iter()
        .find(|&i| desc[i])
        .map(|i| g.name(i).to_string()))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SubsetRow {
    /// Selected observables.
    pub selected: NodeSet,
    /// Whether the unselected observables are d-separated from the label.
    pub d_separated: bool,
    /// Whether every observed direct cause is selected.
    pub contains_direct_causes: bool,
}

impl SubsetRow {
    pub fn biconditional_holds(&self) -> bool {
        self.d_separated == self.contains_direct_causes
    }

    /// The "d-separated implies causes selected" direction.
    pub fn forward_holds(&self) -> bool {
        !self.d_separated || self.contains_direct_causes
    }

    /// The "causes selected implies d-separated" direction.
    pub fn backward_holds(&self) -> bool {
        !self.contains_direct_causes || self.d_separated
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SeparationReport {
    pub label: String,
    pub observables: NodeSet,
    pub direct_causes: DirectCauses,
    pub rows: Vec<SubsetRow>,
}

impl SeparationReport {
    pub fn holds(&self) -> bool {
        self.rows.iter().all(SubsetRow::biconditional_holds)
    }

    pub fn forward_holds(&self) -> bool {
        self.rows.iter().all(SubsetRow::forward_holds)
    }

    pub fn separating_subsets(&self) -> impl Iterator<Item = &NodeSet> {
        self.rows
            .iter()
            .filter(|r| r.d_separated)
            .map(|r| &r.selected)
    }
}

/// Full truth table over every `Z ⊆ x`. Requires that the label has no
/// directed path into `x`.
pub fn verify_theorem1(g: &Dag, y: &str, x: &NodeSet) -> Result<SeparationReport, GraphError> {
    if let Some(node) = first_descendant_in(g, y, x)? {
        return Err(GraphError::AssumptionViolation {
            label: y.to_string(),
            node,
        });
    }
    truth_table(g, y, x)
}

/// The same truth table without the assumption check; only
/// [`SeparationReport::forward_holds`] is guaranteed here.
pub fn verify_unchecked(g: &Dag, y: &str, x: &NodeSet) -> Result<SeparationReport, GraphError> {
    first_descendant_in(g, y, x)?;
    truth_table(g, y, x)
}

fn truth_table(g: &Dag, y: &str, x: &NodeSet) -> Result<SeparationReport, GraphError> {
    if x.len() > MAX_THEOREM_OBSERVABLES {
        return Err(GraphError::TooManyObservables(x.len()));
    }
    let yi = g.resolve_one(y)?;
    let causes = direct_causes(g, y, x)?;
    let members: Vec<&str> = x.iter().collect();
    let idx: Vec<usize> = members
        .iter()
        .map(|m| g.resolve_one(m))
        .collect::<Result<_, _>>()?;

    let mut rows = Vec::with_capacity(1 << members.len());
    for bits in 0u32..(1u32 << members.len()) {
        let in_z = |k: usize| bits & (1 << k) != 0;
        let selected: NodeSet = (0..members.len())
            .filter(|&k| in_z(k))
            .map(|k| members[k])
            .collect();
        let observed = g.indicator(
            &(0..members.len())
                .filter(|&k| in_z(k))
                .map(|k| idx[k])
                .collect::<Vec<_>>(),
        );
        // d-separation is symmetric, so sweep from the label; an empty
        // unselected set is vacuously separated
        let reach = reachable(g, &[yi], &observed);
        let d_separated = (0..members.len())
            .filter(|&k| !in_z(k))
            .all(|k| !reach[idx[k]]);
        rows.push(SubsetRow {
            contains_direct_causes: causes.observed.is_subset(&selected),
            selected,
            d_separated,
        });
    }
    Ok(SeparationReport {
        label: y.to_string(),
        observables: x.clone(),
        direct_causes: causes,
        rows,
    })
}
