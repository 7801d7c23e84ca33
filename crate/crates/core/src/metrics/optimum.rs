use std::cmp::Reverse;
use std::collections::BinaryHeap;

use crate::engine::ImpressionStream;
use crate::{Error, Result};

/// Default limit on request-campaign edges for the exact solver.
pub const DEFAULT_EDGE_CAP: usize = 50_000;

/// Best achievable total quality with the whole stream known in advance.
#[derive(Debug, Clone, PartialEq)]
pub struct HindsightOptimum {
    pub value: f64,
    pub budgets: Vec<u64>,
    pub num_requests: usize,
    /// Optimal winner per request in stream order.
    pub assignment: Vec<Option<u32>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Key(f64);

impl Eq for Key {}

impl PartialOrd for Key {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Key {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}

type MinHeap = BinaryHeap<Reverse<(Key, usize)>>;

/// Maximum of `sum v_ij x_ij` with each request used at most once and
/// campaign `j` at most `budgets[j]` times.
///
/// Solved by successive shortest paths on the transportation network. Because
/// every residual path alternates between campaigns and requests, the
/// network is contracted onto the campaigns: entering campaign `j` with a new
/// request costs the smallest `-v_ij` over unassigned requests, and moving
/// from `j` to `j'` costs the smallest `v_ij - v_ij'` over requests currently
/// held by `j`. Those minima are kept in lazily cleaned heaps. Each
/// augmentation runs Bellman-Ford on the `M + 2` contracted nodes and
/// assigns one more request; the search stops when no path has negative cost.
pub fn hindsight_optimum(
    stream: &ImpressionStream,
    budgets: &[u64],
    edge_cap: usize,
) -> Result<HindsightOptimum> {
    let edges = stream.num_edges();
    if edges > edge_cap {
        return Err(Error::InstanceTooLarge {
            edges,
            cap: edge_cap,
        });
    }
    let m = budgets.len();
    stream.validate(m)?;
    let requests: Vec<&[(crate::CampaignId, f64)]> =
        stream.requests().map(|r| r.qualities.as_slice()).collect();
    let quality = |i: usize, j: usize| -> Option<f64> {
        requests[i]
            .iter()
            .find(|(id, _)| id.index() == j)
            .map(|&(_, v)| v)
    };

    let mut owner: Vec<Option<usize>> = vec![None; requests.len()];
    let mut load = vec![0u64; m];
    let mut enter: Vec<MinHeap> = vec![BinaryHeap::new(); m];
    let mut moves: Vec<MinHeap> = vec![BinaryHeap::new(); m * m];
    for (i, q) in requests.iter().enumerate() {
        for &(id, v) in q.iter() {
            enter[id.index()].push(Reverse((Key(-v), i)));
        }
    }

    loop {
        // Drop stale heap tops, then read the contracted edge weights.
        let mut enter_cost = vec![f64::INFINITY; m];
        for j in 0..m {
            while let Some(Reverse((k, i))) = enter[j].peek().copied() {
                if owner[i].is_some() {
                    enter[j].pop();
                } else {
                    enter_cost[j] = k.0;
                    break;
                }
            }
        }
        let mut move_cost = vec![f64::INFINITY; m * m];
        for j in 0..m {
            for jp in 0..m {
                if j == jp {
                    continue;
                }
                let heap = &mut moves[j * m + jp];
                while let Some(Reverse((k, i))) = heap.peek().copied() {
                    if owner[i] == Some(j) {
                        move_cost[j * m + jp] = k.0;
                        break;
                    }
                    heap.pop();
                }
            }
        }

        // Bellman-Ford from the source over campaigns.
        let mut dist = enter_cost.clone();
        let mut pred: Vec<Option<usize>> = vec![None; m];
        for _ in 0..m {
            let mut changed = false;
            for j in 0..m {
                if !dist[j].is_finite() {
                    continue;
                }
                for jp in 0..m {
                    let w = move_cost[j * m + jp];
                    if w.is_finite() && dist[j] + w < dist[jp] - 1e-15 {
                        dist[jp] = dist[j] + w;
                        pred[jp] = Some(j);
                        changed = true;
                    }
                }
            }
            if !changed {
                break;
            }
        }
        let sink = (0..m)
            .filter(|&j| load[j] < budgets[j] && dist[j].is_finite())
            .min_by(|&a, &b| dist[a].total_cmp(&dist[b]));
        let Some(last) = sink else { break };
        if dist[last] >= 0.0 {
            break;
        }

        // Walk the path back: every hop moves one request, the first hop
        // brings in a new request.
        let mut path = vec![last];
        let mut node = last;
        while let Some(p) = pred[node] {
            path.push(p);
            node = p;
            if path.len() > m {
                return Err(Error::Mismatch("cycle in shortest-path tree".to_string()));
            }
        }
        path.reverse();
        let mut moved = Vec::with_capacity(path.len());
        for w in path.windows(2) {
            let (j, jp) = (w[0], w[1]);
            let Reverse((_, i)) = moves[j * m + jp].pop().expect("edge had a live request");
            moved.push((i, jp));
        }
        let first = path[0];
        let Reverse((_, fresh)) = enter[first].pop().expect("entry had a live request");
        moved.push((fresh, first));
        for (i, j) in moved {
            owner[i] = Some(j);
            for &(id, v) in requests[i].iter() {
                let jp = id.index();
                if jp != j {
                    let vj = quality(i, j).expect("assigned campaign was recalled");
                    moves[j * m + jp].push(Reverse((Key(vj - v), i)));
                }
            }
        }
        load[last] += 1;
    }

    let value = owner
        .iter()
        .enumerate()
        .filter_map(|(i, o)| o.and_then(|j| quality(i, j)))
        .sum();
    Ok(HindsightOptimum {
        value,
        budgets: budgets.to_vec(),
        num_requests: requests.len(),
        assignment: owner.into_iter().map(|o| o.map(|j| j as u32)).collect(),
    })
}
