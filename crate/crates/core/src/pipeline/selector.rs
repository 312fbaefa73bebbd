//! Consistency-based selection over a candidate pool.

use std::collections::BTreeMap;

use crate::executor::ResultSignature;

/// What the selector needs to know about one executed candidate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Vote {
    pub trajectory_id: usize,
    pub signature: ResultSignature,
    pub has_sql: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cluster {
    pub signature: ResultSignature,
    /// Trajectory ids, ascending.
    pub members: Vec<usize>,
    pub failure: bool,
}

/// Groups votes by signature; candidates without SQL never form a cluster.
pub fn clusters(votes: &[Vote]) -> Vec<Cluster> {
    let mut map: BTreeMap<ResultSignature, Vec<usize>> = BTreeMap::new();
    for v in votes.iter().filter(|v| v.has_sql) {
        map.entry(v.signature).or_default().push(v.trajectory_id);
    }
    let mut out: Vec<Cluster> = map
        .into_iter()
        .map(|(signature, mut members)| {
            members.sort_unstable();
            Cluster {
                signature,
                members,
                failure: signature.is_failure(),
            }
        })
        .collect();
    out.sort_by_key(|c| c.members[0]);
    out
}

/// Plurality winner: failure clusters are dropped unless nothing else is left,
/// the largest cluster wins, ties go to the cluster holding the lowest
/// trajectory id. Returns the winning representative (its lowest trajectory id).
pub fn plurality(votes: &[Vote]) -> Option<usize> {
    let all = clusters(votes);
    let any_ok = all.iter().any(|c| !c.failure);
    all.iter()
        .filter(|c| !any_ok || !c.failure)
        .min_by_key(|c| (std::cmp::Reverse(c.members.len()), c.members[0]))
        .map(|c| c.members[0])
}

/// Hook for selection strategies other than plurality voting (e.g. ranking
/// candidates with a judge model). Returns the chosen trajectory id.
pub trait CandidateSelector: Send + Sync {
    fn name(&self) -> &'static str;
    fn select(&self, votes: &[Vote]) -> Option<usize>;
}

pub struct ConsistencySelector;

impl CandidateSelector for ConsistencySelector {
    fn name(&self) -> &'static str {
        "consistency"
    }

    fn select(&self, votes: &[Vote]) -> Option<usize> {
        plurality(votes)
    }
}
