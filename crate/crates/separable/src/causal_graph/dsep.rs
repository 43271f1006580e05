//! d-separation by reachability, with witness paths.

use std::collections::VecDeque;
use std::fmt;

use super::CausalGraph;
use crate::error::Result;

/// A path between two nodes; `forward[i]` tells whether the edge between
/// `nodes[i]` and `nodes[i + 1]` points towards `nodes[i + 1]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Path {
    pub nodes: Vec<String>,
    pub forward: Vec<bool>,
}

impl fmt::Display for Path {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.nodes[0])?;
        for (n, fw) in self.nodes[1..].iter().zip(&self.forward) {
            write!(f, " {} {}", if *fw { "->" } else { "<-" }, n)?;
        }
        Ok(())
    }
}

impl CausalGraph {
    fn indices(&self, labels: &[&str]) -> Result<Vec<usize>> {
        labels.iter().map(|l| self.index(l)).collect()
    }

    /// Whether every path between `x` and `y` is blocked by `z`.
    pub fn d_separated(&self, x: &[&str], y: &[&str], z: &[&str]) -> Result<bool> {
        let (x, y, z) = (self.indices(x)?, self.indices(y)?, self.indices(z)?);
        Ok(self.d_separated_ids(&x, &y, &z))
    }

    /// An unblocked path between `x` and `y` given `z`, if one exists.
    pub fn d_connecting_path(&self, x: &[&str], y: &[&str], z: &[&str]) -> Result<Option<Path>> {
        let (x, y, z) = (self.indices(x)?, self.indices(y)?, self.indices(z)?);
        Ok(self.connecting_path_ids(&x, &y, &z))
    }

    pub(crate) fn d_separated_ids(&self, x: &[usize], y: &[usize], z: &[usize]) -> bool {
        let n = self.nodes.len();
        let mut in_z = vec![false; n];
        z.iter().for_each(|&v| in_z[v] = true);
        let opens_collider = self.ancestors_of(z);
        let mut in_y = vec![false; n];
        y.iter().for_each(|&v| in_y[v] = true);
        if x.iter().any(|&v| in_y[v]) {
            return false;
        }
        // (node, arrived travelling up from a child)
        let mut seen = vec![[false; 2]; n];
        let mut queue: VecDeque<(usize, bool)> = x.iter().map(|&v| (v, true)).collect();
        while let Some((v, up)) = queue.pop_front() {
            if seen[v][up as usize] {
                continue;
            }
            seen[v][up as usize] = true;
            if !in_z[v] && in_y[v] {
                return false;
            }
            if up {
                if !in_z[v] {
                    queue.extend(self.parents[v].iter().map(|&p| (p, true)));
                    queue.extend(self.children[v].iter().map(|&c| (c, false)));
                }
            } else {
                if !in_z[v] {
                    queue.extend(self.children[v].iter().map(|&c| (c, false)));
                }
                if opens_collider[v] {
                    queue.extend(self.parents[v].iter().map(|&p| (p, true)));
                }
            }
        }
        true
    }

    /// Depth-first search over simple paths, returning the first active one.
    /// Neighbours are visited children first, each list in edge order.
    pub(crate) fn connecting_path_ids(&self, x: &[usize], y: &[usize], z: &[usize]) -> Option<Path> {
        let n = self.nodes.len();
        let mut in_z = vec![false; n];
        z.iter().for_each(|&v| in_z[v] = true);
        let opens_collider = self.ancestors_of(z);
        let mut in_y = vec![false; n];
        y.iter().for_each(|&v| in_y[v] = true);

        struct Search<'a> {
            g: &'a CausalGraph,
            in_z: Vec<bool>,
            in_y: Vec<bool>,
            opens: Vec<bool>,
            on_path: Vec<bool>,
            nodes: Vec<usize>,
            forward: Vec<bool>,
        }

        impl Search<'_> {
            // `arrived_forward`: whether the last edge points into the current end.
            fn go(&mut self, v: usize, arrived_forward: Option<bool>) -> bool {
                if self.in_y[v] && arrived_forward.is_some() {
                    return true;
                }
                let steps: Vec<(usize, bool)> = self.g.children[v]
                    .iter()
                    .map(|&c| (c, true))
                    .chain(self.g.parents[v].iter().map(|&p| (p, false)))
                    .collect();
                for (w, fw) in steps {
                    if self.on_path[w] {
                        continue;
                    }
                    if let Some(prev_fw) = arrived_forward {
                        // v becomes an interior node of the path
                        let collider = prev_fw && !fw;
                        let open = if collider { self.opens[v] } else { !self.in_z[v] };
                        if !open {
                            continue;
                        }
                    }
                    self.on_path[w] = true;
                    self.nodes.push(w);
                    self.forward.push(fw);
                    if self.go(w, Some(fw)) {
                        return true;
                    }
                    self.on_path[w] = false;
                    self.nodes.pop();
                    self.forward.pop();
                }
                false
            }
        }

        for &s in x {
            if in_y[s] {
                return Some(Path { nodes: vec![self.label(s).to_string()], forward: vec![] });
            }
            let mut search = Search {
                g: self,
                in_z: in_z.clone(),
                in_y: in_y.clone(),
                opens: opens_collider.clone(),
                on_path: vec![false; n],
                nodes: vec![s],
                forward: vec![],
            };
            search.on_path[s] = true;
            if search.go(s, None) {
                return Some(Path {
                    nodes: search.nodes.iter().map(|&v| self.label(v).to_string()).collect(),
                    forward: search.forward,
                });
            }
        }
        None
    }
}
