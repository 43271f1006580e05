//! Extended causal DAGs for a treatment split into components.
//!
//! A graph holds the treatment `A`, its components (`A_Y`, `A_D` and
//! optionally `A_Z`) joined to `A` by deterministic edges, event nodes `Y_k`
//! and `D_k`, and covariate nodes which may be unmeasured. The text format is
//! line based:
//!
//! ```text
//! # comment
//! node A A
//! node Ay AY
//! node Y1 Y k=1
//! node U L unmeasured
//! edge A Ay det
//! ```

mod conditions;
mod dsep;

pub use conditions::{
    check_dismissible, check_isolation, check_zk_partition, classify, search_partitions,
    search_zk_splits, z_nodes, Block, DismissibleReport, GraphSummary, Isolation, LPartition,
    Verdict, ZSplit,
};
pub use dsep::Path;

use std::collections::{HashMap, VecDeque};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NodeKind {
    Treatment,
    ComponentY,
    ComponentD,
    ComponentZ,
    EventY,
    EventD,
    Covariate { measured: bool },
}

impl NodeKind {
    fn keyword(self) -> &'static str {
        match self {
            NodeKind::Treatment => "A",
            NodeKind::ComponentY => "AY",
            NodeKind::ComponentD => "AD",
            NodeKind::ComponentZ => "AZ",
            NodeKind::EventY => "Y",
            NodeKind::EventD => "D",
            NodeKind::Covariate { .. } => "L",
        }
    }

    pub fn is_component(self) -> bool {
        matches!(self, NodeKind::ComponentY | NodeKind::ComponentD | NodeKind::ComponentZ)
    }

    pub fn is_event(self) -> bool {
        matches!(self, NodeKind::EventY | NodeKind::EventD)
    }

    pub fn is_covariate(self) -> bool {
        matches!(self, NodeKind::Covariate { .. })
    }

    pub fn is_measured_covariate(self) -> bool {
        matches!(self, NodeKind::Covariate { measured: true })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GraphNode {
    pub label: String,
    pub kind: NodeKind,
    /// Interval index; required for events and measured covariates.
    pub k: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Edge {
    pub from: usize,
    pub to: usize,
    pub det: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CausalGraph {
    nodes: Vec<GraphNode>,
    edges: Vec<Edge>,
    children: Vec<Vec<usize>>,
    parents: Vec<Vec<usize>>,
}

/// Position in the within-interval temporal order. Events at interval `k`
/// come first (`D_k` then `Y_k`), then covariates; treatment sits after the
/// baseline covariates of interval 0.
fn time_key(n: &GraphNode) -> Option<(usize, u8)> {
    match n.kind {
        NodeKind::Treatment => Some((0, 3)),
        NodeKind::ComponentY | NodeKind::ComponentD | NodeKind::ComponentZ => Some((0, 4)),
        NodeKind::EventD => n.k.map(|k| (k, 0)),
        NodeKind::EventY => n.k.map(|k| (k, 1)),
        NodeKind::Covariate { .. } => n.k.map(|k| (k, 2)),
    }
}

impl CausalGraph {
    /// Builds a graph, checking every structural invariant.
    pub fn new(nodes: Vec<GraphNode>, edges: Vec<Edge>) -> Result<Self> {
        let mut labels = HashMap::new();
        for (i, n) in nodes.iter().enumerate() {
            if labels.insert(n.label.clone(), i).is_some() {
                return Err(Error::Parse { line: 0, message: format!("duplicate node {}", n.label) });
            }
            let unique = !n.kind.is_covariate() && !n.kind.is_event();
            if unique && nodes[..i].iter().any(|o| o.kind == n.kind) {
                return Err(Error::Parse { line: 0, message: format!("second {} node", n.kind.keyword()) });
            }
            if n.kind.is_event() {
                if n.k.map_or(true, |k| k == 0) {
                    return Err(Error::Parse { line: 0, message: format!("event {} needs k>=1", n.label) });
                }
                if nodes[..i].iter().any(|o| o.kind == n.kind && o.k == n.k) {
                    return Err(Error::Parse { line: 0, message: format!("second event of kind {} at k={:?}", n.kind.keyword(), n.k) });
                }
            }
            if n.kind.is_measured_covariate() && n.k.is_none() {
                return Err(Error::Parse { line: 0, message: format!("measured covariate {} needs k", n.label) });
            }
        }
        let mut children = vec![Vec::new(); nodes.len()];
        let mut parents = vec![Vec::new(); nodes.len()];
        for e in &edges {
            let (f, t) = (&nodes[e.from], &nodes[e.to]);
            if e.from == e.to {
                return Err(Error::CycleDetected(f.label.clone()));
            }
            // Edges from A to a component are exactly the deterministic ones.
            if e.det != (f.kind == NodeKind::Treatment && t.kind.is_component()) {
                return Err(Error::BadDeterministicEdge { from: f.label.clone(), to: t.label.clone() });
            }
            if let (Some(a), Some(b)) = (time_key(f), time_key(t)) {
                let same_ok = f.kind.is_covariate() && t.kind.is_covariate();
                if a > b || (a == b && !same_ok) {
                    return Err(Error::TimeOrder { from: f.label.clone(), to: t.label.clone() });
                }
            }
            if children[e.from].contains(&e.to) {
                return Err(Error::Parse { line: 0, message: format!("duplicate edge {} {}", f.label, t.label) });
            }
            children[e.from].push(e.to);
            parents[e.to].push(e.from);
        }
        let g = CausalGraph { nodes, edges, children, parents };
        if let Some(v) = g.find_cycle() {
            return Err(Error::CycleDetected(g.nodes[v].label.clone()));
        }
        Ok(g)
    }

    fn find_cycle(&self) -> Option<usize> {
        let mut indeg: Vec<usize> = self.parents.iter().map(Vec::len).collect();
        let mut queue: VecDeque<usize> = (0..self.nodes.len()).filter(|&i| indeg[i] == 0).collect();
        let mut seen = 0;
        while let Some(v) = queue.pop_front() {
            seen += 1;
            for &c in &self.children[v] {
                indeg[c] -= 1;
                if indeg[c] == 0 {
                    queue.push_back(c);
                }
            }
        }
        (seen < self.nodes.len()).then(|| indeg.iter().position(|&d| d > 0).unwrap_or(0))
    }

    pub fn nodes(&self) -> &[GraphNode] {
        &self.nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn children(&self, v: usize) -> &[usize] {
        &self.children[v]
    }

    pub fn parents(&self, v: usize) -> &[usize] {
        &self.parents[v]
    }

    pub fn index(&self, label: &str) -> Result<usize> {
        self.nodes
            .iter()
            .position(|n| n.label == label)
            .ok_or_else(|| Error::UnknownNode(label.to_string()))
    }

    pub fn label(&self, v: usize) -> &str {
        &self.nodes[v].label
    }

    pub fn find_kind(&self, kind: NodeKind) -> Option<usize> {
        self.nodes.iter().position(|n| n.kind == kind)
    }

    pub fn event(&self, kind: NodeKind, k: usize) -> Option<usize> {
        self.nodes.iter().position(|n| n.kind == kind && n.k == Some(k))
    }

    /// Largest event index minus one: the last interval `K` whose outcomes
    /// appear in the graph.
    pub fn horizon(&self) -> usize {
        self.nodes.iter().filter(|n| n.kind.is_event()).filter_map(|n| n.k).max().unwrap_or(1) - 1
    }

    /// Nodes with a directed path into some node of `targets`, including the
    /// targets themselves.
    pub fn ancestors_of(&self, targets: &[usize]) -> Vec<bool> {
        let mut mark = vec![false; self.nodes.len()];
        let mut stack: Vec<usize> = targets.to_vec();
        while let Some(v) = stack.pop() {
            if !mark[v] {
                mark[v] = true;
                stack.extend(self.parents[v].iter().copied());
            }
        }
        mark
    }

    /// Parses the line-based text format.
    pub fn parse(text: &str) -> Result<Self> {
        let mut nodes = Vec::new();
        let mut pending = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let toks: Vec<&str> = content.split_whitespace().collect();
            let bad = |m: &str| Error::Parse { line, message: format!("{m}: {content:?}") };
            match toks[0] {
                "node" => {
                    if toks.len() < 3 {
                        return Err(bad("node needs a label and a kind"));
                    }
                    let mut k = None;
                    let mut measured = true;
                    for t in &toks[3..] {
                        if let Some(v) = t.strip_prefix("k=") {
                            k = Some(v.parse().map_err(|_| bad("bad interval"))?);
                        } else if *t == "unmeasured" {
                            measured = false;
                        } else {
                            return Err(bad("unknown node attribute"));
                        }
                    }
                    let kind = match toks[2] {
                        "A" => NodeKind::Treatment,
                        "AY" => NodeKind::ComponentY,
                        "AD" => NodeKind::ComponentD,
                        "AZ" => NodeKind::ComponentZ,
                        "Y" => NodeKind::EventY,
                        "D" => NodeKind::EventD,
                        "L" => NodeKind::Covariate { measured },
                        _ => return Err(bad("unknown node kind")),
                    };
                    if !measured && !kind.is_covariate() {
                        return Err(bad("only covariates can be unmeasured"));
                    }
                    nodes.push(GraphNode { label: toks[1].to_string(), kind, k });
                }
                "edge" => {
                    let det = match toks.get(3) {
                        None => false,
                        Some(&"det") if toks.len() == 4 => true,
                        _ => return Err(bad("edge takes two labels and an optional det flag")),
                    };
                    if toks.len() < 3 {
                        return Err(bad("edge needs two labels"));
                    }
                    pending.push((line, toks[1].to_string(), toks[2].to_string(), det));
                }
                _ => return Err(bad("expected node or edge")),
            }
        }
        let lookup: HashMap<&str, usize> =
            nodes.iter().enumerate().map(|(i, n): (usize, &GraphNode)| (n.label.as_str(), i)).collect();
        let mut edges = Vec::with_capacity(pending.len());
        for (line, f, t, det) in &pending {
            let from = *lookup
                .get(f.as_str())
                .ok_or_else(|| Error::Parse { line: *line, message: format!("unknown node {f}") })?;
            let to = *lookup
                .get(t.as_str())
                .ok_or_else(|| Error::Parse { line: *line, message: format!("unknown node {t}") })?;
            edges.push(Edge { from, to, det: *det });
        }
        CausalGraph::new(nodes, edges)
    }

    /// Normalized text: nodes then edges, in storage order.
    pub fn emit(&self) -> String {
        let mut out = String::new();
        for n in &self.nodes {
            out.push_str(&format!("node {} {}", n.label, n.kind.keyword()));
            if let Some(k) = n.k {
                out.push_str(&format!(" k={k}"));
            }
            if n.kind == (NodeKind::Covariate { measured: false }) {
                out.push_str(" unmeasured");
            }
            out.push('\n');
        }
        for e in &self.edges {
            out.push_str(&format!("edge {} {}", self.nodes[e.from].label, self.nodes[e.to].label));
            if e.det {
                out.push_str(" det");
            }
            out.push('\n');
        }
        out
    }

    /// The graph of the hypothetical trial in which the components are
    /// assigned separately: `A` and its deterministic edges are removed.
    pub fn g_transform(&self) -> Result<CausalGraph> {
        if self.find_kind(NodeKind::ComponentY).is_none() || self.find_kind(NodeKind::ComponentD).is_none() {
            return Err(Error::NoDecomposition);
        }
        let Some(a) = self.find_kind(NodeKind::Treatment) else {
            return Ok(self.clone());
        };
        let remap = |v: usize| if v > a { v - 1 } else { v };
        let nodes: Vec<GraphNode> = self
            .nodes
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != a)
            .map(|(_, n)| n.clone())
            .collect();
        let edges = self
            .edges
            .iter()
            .filter(|e| !e.det && e.from != a && e.to != a)
            .map(|e| Edge { from: remap(e.from), to: remap(e.to), det: false })
            .collect();
        CausalGraph::new(nodes, edges)
    }

    /// True when `A` is absent, i.e. the graph already represents the trial
    /// with separately assigned components.
    pub fn is_transformed(&self) -> bool {
        self.find_kind(NodeKind::Treatment).is_none()
    }

    /// Same node and edge sets regardless of declaration order.
    pub fn same_structure(&self, other: &CausalGraph) -> bool {
        if self.nodes.len() != other.nodes.len() || self.edges.len() != other.edges.len() {
            return false;
        }
        let mut a: Vec<_> = self.nodes.iter().map(|n| (n.label.clone(), n.kind.keyword(), n.kind, n.k)).collect();
        let mut b: Vec<_> = other.nodes.iter().map(|n| (n.label.clone(), n.kind.keyword(), n.kind, n.k)).collect();
        a.sort_by(|x, y| x.0.cmp(&y.0));
        b.sort_by(|x, y| x.0.cmp(&y.0));
        if a != b {
            return false;
        }
        let mut ea: Vec<_> = self.edges.iter().map(|e| (self.label(e.from), self.label(e.to), e.det)).collect();
        let mut eb: Vec<_> = other.edges.iter().map(|e| (other.label(e.from), other.label(e.to), e.det)).collect();
        ea.sort();
        eb.sort();
        ea == eb
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const FIG1B: &str = "\
node A A
node Ay AY
node Ad AD
node Y1 Y k=1
node D1 D k=1
node Y2 Y k=2
node D2 D k=2
edge A Ay det
edge A Ad det
edge Ad D1
edge Ad D2
edge Ay Y1
edge Ay Y2
edge D1 Y1
edge Y1 D2
edge Y1 Y2
edge D1 D2
edge D2 Y2
";

    #[test]
    fn parses_and_round_trips() {
        let g = CausalGraph::parse(FIG1B).unwrap();
        assert_eq!(g.nodes().len(), 7);
        assert_eq!(g.edges().iter().filter(|e| e.det).count(), 2);
        assert_eq!(g.emit(), FIG1B);
        assert_eq!(CausalGraph::parse(&g.emit()).unwrap(), g);
        assert_eq!(g.horizon(), 1);
    }

    #[test]
    fn rejects_bad_graphs() {
        let self_loop = "node L1 L k=1\nedge L1 L1\n";
        assert!(matches!(CausalGraph::parse(self_loop), Err(Error::CycleDetected(_))));
        let cyc = "node L1 L k=1\nnode L2 L k=1\nedge L1 L2\nedge L2 L1\n";
        assert!(matches!(CausalGraph::parse(cyc), Err(Error::CycleDetected(_))));
        let det = "node A A\nnode Y1 Y k=1\nedge A Y1 det\n";
        assert!(matches!(CausalGraph::parse(det), Err(Error::BadDeterministicEdge { .. })));
        let back = "node Y1 Y k=1\nnode D1 D k=1\nedge Y1 D1\n";
        assert!(matches!(CausalGraph::parse(back), Err(Error::TimeOrder { .. })));
        assert!(matches!(CausalGraph::parse("node x Q\n"), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn transform_drops_treatment_and_deterministic_edges() {
        let g = CausalGraph::parse(FIG1B).unwrap();
        let t = g.g_transform().unwrap();
        assert_eq!(t.nodes().len(), g.nodes().len() - 1);
        assert_eq!(t.edges().len(), g.edges().len() - 2);
        assert_eq!(t.g_transform().unwrap(), t);
        let plain = CausalGraph::parse("node A A\nnode Y1 Y k=1\nedge A Y1\n").unwrap();
        assert_eq!(plain.g_transform(), Err(Error::NoDecomposition));
    }
}
