use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashSet};

use crate::error::{Error, Result};
use crate::types::{l2_squared, ChunkId, Embedding, SearchHit};

/// Heap entry ordered by result rank, so a max-heap keeps the worst on top.
#[derive(Clone, Copy)]
struct Ranked(SearchHit);

impl PartialEq for Ranked {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Ranked {}

impl PartialOrd for Ranked {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Ranked {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.rank_cmp(&other.0)
    }
}

pub(crate) fn check_k(k: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::InvalidParameter("k must be at least 1".into()));
    }
    Ok(())
}

/// Keeps the `k` best hits of `hits`, sorted.
pub(crate) fn top_k(hits: impl IntoIterator<Item = SearchHit>, k: usize) -> Vec<SearchHit> {
    let mut heap: BinaryHeap<Ranked> = BinaryHeap::with_capacity(k + 1);
    for hit in hits {
        if heap.len() < k {
            heap.push(Ranked(hit));
        } else if let Some(worst) = heap.peek() {
            if hit.rank_cmp(&worst.0).is_lt() {
                heap.pop();
                heap.push(Ranked(hit));
            }
        }
    }
    heap.into_sorted_vec().into_iter().map(|r| r.0).collect()
}

/// The `k` nearest members of one cluster to `query`.
pub fn search_cluster(members: &[(ChunkId, Embedding)], query: &Embedding, k: usize) -> Result<Vec<SearchHit>> {
    check_k(k)?;
    for (_, e) in members {
        if e.dim() != query.dim() {
            return Err(Error::DimensionMismatch { expected: query.dim(), actual: e.dim() });
        }
    }
    Ok(top_k(
        members.iter().map(|(id, e)| SearchHit { chunk_id: *id, distance: l2_squared(e.as_slice(), query.as_slice()) }),
        k,
    ))
}

/// Global top-`k` across sorted per-cluster result lists. A chunk id that
/// appears in several lists is kept once, at its smallest distance.
pub fn merge_hits(lists: &[Vec<SearchHit>], k: usize) -> Vec<SearchHit> {
    // (hit, list index, position) in a min-heap via Reverse ordering.
    let mut heap: BinaryHeap<std::cmp::Reverse<(Ranked, usize, usize)>> = lists
        .iter()
        .enumerate()
        .filter_map(|(li, l)| l.first().map(|h| std::cmp::Reverse((Ranked(*h), li, 0))))
        .collect();
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(k);
    while out.len() < k {
        let Some(std::cmp::Reverse((Ranked(hit), li, pos))) = heap.pop() else {
            break;
        };
        if seen.insert(hit.chunk_id) {
            out.push(hit);
        }
        if let Some(next) = lists[li].get(pos + 1) {
            heap.push(std::cmp::Reverse((Ranked(*next), li, pos + 1)));
        }
    }
    out
}
