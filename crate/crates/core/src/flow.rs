//! Edmonds-Karp max-flow on a dense integer capacity matrix.

use std::collections::VecDeque;

use num_bigint::BigInt;
use num_traits::{Signed, Zero};

/// Maximum `source -> sink` flow. Returns the flow value and the flow on
/// every arc (`flow[u][v] > 0` only where `capacity[u][v] > 0`).
pub fn max_flow(capacity: &[Vec<BigInt>], source: usize, sink: usize) -> (BigInt, Vec<Vec<BigInt>>) {
    let n = capacity.len();
    let mut residual: Vec<Vec<BigInt>> = capacity.to_vec();
    let mut value = BigInt::zero();
    loop {
        let mut parent = vec![usize::MAX; n];
        parent[source] = source;
        let mut queue = VecDeque::from([source]);
        while let Some(u) = queue.pop_front() {
            if u == sink {
                break;
            }
            for v in 0..n {
                if parent[v] == usize::MAX && residual[u][v].is_positive() {
                    parent[v] = u;
                    queue.push_back(v);
                }
            }
        }
        if parent[sink] == usize::MAX {
            break;
        }
        let mut bottleneck: Option<BigInt> = None;
        let mut v = sink;
        while v != source {
            let u = parent[v];
            let c = &residual[u][v];
            if bottleneck.as_ref().map_or(true, |b| c < b) {
                bottleneck = Some(c.clone());
            }
            v = u;
        }
        let b = bottleneck.expect("augmenting path has an arc");
        let mut v = sink;
        while v != source {
            let u = parent[v];
            residual[u][v] -= &b;
            residual[v][u] += &b;
            v = u;
        }
        value += b;
    }
    let flow = (0..n)
        .map(|u| {
            (0..n)
                .map(|v| {
                    let f = &capacity[u][v] - &residual[u][v];
                    if f.is_positive() {
                        f
                    } else {
                        BigInt::zero()
                    }
                })
                .collect()
        })
        .collect();
    (value, flow)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn caps(rows: &[&[i64]]) -> Vec<Vec<BigInt>> {
        rows.iter()
            .map(|r| r.iter().map(|&c| BigInt::from(c)).collect())
            .collect()
    }

    #[test]
    fn classic_network() {
        // CLRS figure 26.1, max flow 23
        let c = caps(&[
            &[0, 16, 13, 0, 0, 0],
            &[0, 0, 10, 12, 0, 0],
            &[0, 4, 0, 0, 14, 0],
            &[0, 0, 9, 0, 0, 20],
            &[0, 0, 0, 7, 0, 4],
            &[0, 0, 0, 0, 0, 0],
        ]);
        let (value, flow) = max_flow(&c, 0, 5);
        assert_eq!(value, BigInt::from(23));
        for u in 0..6 {
            for v in 0..6 {
                assert!(flow[u][v] <= c[u][v]);
            }
        }
        for v in 1..5 {
            let inflow: BigInt = (0..6).map(|u| flow[u][v].clone()).sum();
            let outflow: BigInt = (0..6).map(|w| flow[v][w].clone()).sum();
            assert_eq!(inflow, outflow);
        }
    }

    #[test]
    fn disconnected() {
        let c = caps(&[&[0, 5, 0], &[0, 0, 0], &[0, 0, 0]]);
        assert_eq!(max_flow(&c, 0, 2).0, BigInt::zero());
    }
}
