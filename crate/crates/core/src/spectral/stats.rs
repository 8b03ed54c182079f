//! Descriptive statistics of a network's unweighted skeleton.

use std::collections::VecDeque;

use super::YearNetwork;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct NetworkStats {
    pub density: f64,
    pub average_degree: f64,
    /// Mean local clustering coefficient; nodes of degree < 2 count as 0.
    pub clustering: f64,
    /// Mean shortest-path hop count over ordered pairs.
    pub average_path_length: f64,
    pub degree: Vec<usize>,
    pub weighted_degree: Vec<f64>,
    /// Betweenness divided by `(n-1)(n-2)/2`.
    pub betweenness: Vec<f64>,
}

/// Summary statistics for a connected network.
pub fn network_stats(net: &YearNetwork) -> Result<NetworkStats> {
    let n = net.n();
    if !net.is_connected() {
        return Err(Error::Connectivity("network statistics need a connected network".into()));
    }
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut weighted_degree = vec![0.0; n];
    for e in net.edges() {
        adj[e.i].push(e.j);
        adj[e.j].push(e.i);
        weighted_degree[e.i] += e.weight;
        weighted_degree[e.j] += e.weight;
    }
    for a in &mut adj {
        a.sort_unstable();
    }
    let degree: Vec<usize> = adj.iter().map(Vec::len).collect();
    let m = net.edges().len() as f64;
    let density = if n > 1 { 2.0 * m / (n as f64 * (n as f64 - 1.0)) } else { 0.0 };
    let average_degree = 2.0 * m / n as f64;

    let mut clustering = 0.0;
    for nb in &adj {
        let k = nb.len();
        if k < 2 {
            continue;
        }
        let mut links = 0usize;
        for (a, &x) in nb.iter().enumerate() {
            for &y in &nb[a + 1..] {
                if adj[x].binary_search(&y).is_ok() {
                    links += 1;
                }
            }
        }
        clustering += 2.0 * links as f64 / (k * (k - 1)) as f64;
    }
    clustering /= n as f64;

    // Brandes on the unweighted graph; path lengths from the same BFS sweeps.
    let mut between = vec![0.0; n];
    let mut path_sum = 0.0;
    let mut dist = vec![usize::MAX; n];
    let mut sigma = vec![0.0f64; n];
    let mut delta = vec![0.0f64; n];
    let mut order = Vec::with_capacity(n);
    let mut queue = VecDeque::new();
    for s in 0..n {
        dist.iter_mut().for_each(|d| *d = usize::MAX);
        sigma.iter_mut().for_each(|x| *x = 0.0);
        delta.iter_mut().for_each(|x| *x = 0.0);
        order.clear();
        dist[s] = 0;
        sigma[s] = 1.0;
        queue.push_back(s);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            path_sum += dist[v] as f64;
            for &w in &adj[v] {
                if dist[w] == usize::MAX {
                    dist[w] = dist[v] + 1;
                    queue.push_back(w);
                }
                if dist[w] == dist[v] + 1 {
                    sigma[w] += sigma[v];
                }
            }
        }
        for &w in order.iter().rev() {
            for &v in &adj[w] {
                if dist[v] + 1 == dist[w] {
                    delta[v] += sigma[v] / sigma[w] * (1.0 + delta[w]);
                }
            }
            if w != s {
                between[w] += delta[w];
            }
        }
    }
    // each unordered pair was counted from both ends
    let pairs = if n > 2 { (n as f64 - 1.0) * (n as f64 - 2.0) / 2.0 } else { 1.0 };
    let betweenness = between.iter().map(|b| b / 2.0 / pairs).collect();
    let average_path_length = if n > 1 { path_sum / (n as f64 * (n as f64 - 1.0)) } else { 0.0 };

    Ok(NetworkStats { density, average_degree, clustering, average_path_length, degree, weighted_degree, betweenness })
}
