use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

use crate::protocol::{mint_pointer, ActionRequest, ResultStore};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("dependency cycle through {0:?}")]
pub struct DependencyCycle(pub Vec<String>);

/// Pointers action `k` of `round` will bind: its minted pointer and its
/// declared `output`, if any.
pub fn produced_pointers(action: &ActionRequest, round: u32, k: usize) -> Vec<String> {
    let mut out = alloc::vec![mint_pointer(&action.tool_name, round, k)];
    if let Some(p) = &action.output {
        if !out.contains(p) {
            out.push(p.clone());
        }
    }
    out
}

/// Topological layering of `actions` (indices into the slice).
///
/// `B` depends on `A` when `B` references a pointer `A` produces and the
/// pointer is not already bound in `store`. Each batch holds mutually
/// independent actions in index order.
pub fn partition_round(
    actions: &[ActionRequest],
    store: &ResultStore,
    round: u32,
) -> Result<Vec<Vec<usize>>, DependencyCycle> {
    let mut producers: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (k, a) in actions.iter().enumerate() {
        for p in produced_pointers(a, round, k) {
            producers.entry(p).or_default().push(k);
        }
    }
    let deps: Vec<BTreeSet<usize>> = actions
        .iter()
        .map(|a| {
            a.referenced_pointers()
                .iter()
                .filter(|p| !store.contains(p))
                .filter_map(|p| producers.get(p))
                .flatten()
                .copied()
                .collect()
        })
        .collect();

    let mut done = alloc::vec![false; actions.len()];
    let mut batches = Vec::new();
    let mut left = actions.len();
    while left > 0 {
        let batch: Vec<usize> =
            (0..actions.len()).filter(|&i| !done[i] && deps[i].iter().all(|&d| done[d])).collect();
        if batch.is_empty() {
            let stuck: BTreeSet<usize> = (0..actions.len()).filter(|&i| !done[i]).collect();
            let mut cycle: Vec<String> = stuck
                .iter()
                .flat_map(|&i| actions[i].referenced_pointers())
                .filter(|p| !store.contains(p) && producers.get(p).is_some_and(|ks| ks.iter().any(|k| stuck.contains(k))))
                .collect();
            cycle.sort();
            cycle.dedup();
            return Err(DependencyCycle(cycle));
        }
        for &i in &batch {
            done[i] = true;
        }
        left -= batch.len();
        batches.push(batch);
    }
    Ok(batches)
}
