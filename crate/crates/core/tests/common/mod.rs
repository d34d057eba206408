#![allow(dead_code)]

use doco::encoding::{decode_stochastic, encode_repetition, quantize_level, EncoderSpec};
use doco::graph::{Graph, NodeId};
use proptest::prelude::*;

/// Random connected graph: a random tree on `2..=max_n` nodes plus a few chords.
pub fn connected_graph(max_n: usize) -> impl Strategy<Value = Graph> {
    (2..=max_n)
        .prop_flat_map(|n| {
            let parents = (1..n).map(|i| 0..i).collect::<Vec<_>>();
            let chords = proptest::collection::vec((0..n, 0..n), 0..n);
            (Just(n), parents, chords)
        })
        .prop_map(|(n, parents, chords)| {
            let mut edges: Vec<(NodeId, NodeId)> = parents.iter().enumerate().map(|(i, &p)| (i + 1, p)).collect();
            edges.extend(chords.into_iter().filter(|(u, v)| u != v));
            Graph::new(n, &edges).unwrap()
        })
}

/// Floyd-Warshall distances.
#[allow(clippy::needless_range_loop)]
pub fn floyd(g: &Graph) -> Vec<Vec<usize>> {
    let n = g.len();
    let inf = usize::MAX / 4;
    let mut d = vec![vec![inf; n]; n];
    for u in 0..n {
        d[u][u] = 0;
    }
    for (u, v) in g.edges() {
        d[u][v] = 1;
        d[v][u] = 1;
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                if d[i][k] + d[k][j] < d[i][j] {
                    d[i][j] = d[i][k] + d[k][j];
                }
            }
        }
    }
    d
}

/// Exact `E[x^]` by enumerating every index and rounding choice of every repetition.
pub fn exact_mean(x: &[f64], spec: &EncoderSpec) -> Vec<f64> {
    let d = spec.dim;
    let m = spec.repetitions();
    let p = spec.precision.unwrap();
    let choices: Vec<(Vec<bool>, f64)> = (0..d)
        .flat_map(|i| {
            let (_, prob) = quantize_level(x[i], spec.grad_bound, p);
            [(false, 1.0 - prob), (true, prob)]
                .into_iter()
                .map(move |(up, w)| (encode_repetition(x, spec, i, up).unwrap(), w / d as f64))
        })
        .collect();
    let mut combos: Vec<(Vec<bool>, f64)> = vec![(Vec::new(), 1.0)];
    for _ in 0..m {
        combos = combos
            .iter()
            .flat_map(|(bits, w)| {
                choices.iter().map(move |(b, cw)| {
                    let mut nb = bits.clone();
                    nb.extend(b);
                    (nb, w * cw)
                })
            })
            .collect();
    }
    let mut mean = vec![0.0; d];
    for (bits, w) in combos {
        for (acc, v) in mean.iter_mut().zip(decode_stochastic(&bits, spec).unwrap()) {
            *acc += w * v;
        }
    }
    mean
}
