//! Graph queries on the AC line network.

use std::collections::VecDeque;

use super::GridModel;

fn adjacency(grid: &GridModel) -> Vec<Vec<(usize, usize)>> {
    let mut adj = vec![Vec::new(); grid.nodes.len()];
    for (l, line) in grid.lines.iter().enumerate() {
        adj[line.from].push((line.to, l));
        adj[line.to].push((line.from, l));
    }
    adj
}

/// True if the nodes selected by `mask` form one connected component using
/// only lines between selected nodes, optionally ignoring one line.
pub fn is_connected(grid: &GridModel, mask: &[bool], excluded_line: Option<usize>) -> bool {
    let Some(start) = mask.iter().position(|&m| m) else {
        return true;
    };
    let adj = adjacency(grid);
    let mut seen = vec![false; mask.len()];
    seen[start] = true;
    let mut queue = VecDeque::from([start]);
    while let Some(n) = queue.pop_front() {
        for &(m, l) in &adj[n] {
            if Some(l) == excluded_line || !mask[m] || seen[m] {
                continue;
            }
            seen[m] = true;
            queue.push_back(m);
        }
    }
    mask.iter().zip(&seen).all(|(&m, &s)| !m || s)
}

/// Marks lines whose removal disconnects the network.
pub fn bridges(grid: &GridModel) -> Vec<bool> {
    let n = grid.nodes.len();
    let adj = adjacency(grid);
    let mut disc = vec![usize::MAX; n];
    let mut low = vec![0usize; n];
    let mut is_bridge = vec![false; grid.lines.len()];
    let mut timer = 0;
    // iterative DFS: (node, parent line, next neighbour index)
    for root in 0..n {
        if disc[root] != usize::MAX {
            continue;
        }
        let mut stack: Vec<(usize, Option<usize>, usize)> = vec![(root, None, 0)];
        disc[root] = timer;
        low[root] = timer;
        timer += 1;
        while let Some(top) = stack.last_mut() {
            let (v, parent) = (top.0, top.1);
            if top.2 < adj[v].len() {
                let (w, l) = adj[v][top.2];
                top.2 += 1;
                if Some(l) == parent {
                    continue;
                }
                if disc[w] == usize::MAX {
                    disc[w] = timer;
                    low[w] = timer;
                    timer += 1;
                    stack.push((w, Some(l), 0));
                } else {
                    low[v] = low[v].min(disc[w]);
                }
            } else {
                stack.pop();
                if let (Some(&(u, _, _)), Some(l)) = (stack.last(), parent) {
                    low[u] = low[u].min(low[v]);
                    if low[v] > disc[u] {
                        is_bridge[l] = true;
                    }
                }
            }
        }
    }
    is_bridge
}

/// Hop distance from every node to the nearest node in `sources`.
pub fn hop_distances(grid: &GridModel, sources: &[usize]) -> Vec<usize> {
    let adj = adjacency(grid);
    let mut dist = vec![usize::MAX; grid.nodes.len()];
    let mut queue = VecDeque::new();
    for &s in sources {
        dist[s] = 0;
        queue.push_back(s);
    }
    while let Some(n) = queue.pop_front() {
        for &(m, _) in &adj[n] {
            if dist[m] == usize::MAX {
                dist[m] = dist[n] + 1;
                queue.push_back(m);
            }
        }
    }
    dist
}
