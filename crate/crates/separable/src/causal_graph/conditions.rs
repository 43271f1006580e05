//! Graph conditions for separable effects: isolation, the common-cause
//! partition, and the dismissible component conditions.

use std::collections::{BTreeMap, VecDeque};
use std::fmt;

use super::{CausalGraph, NodeKind};
use crate::error::{Error, Result};
use crate::par::{map_indexed, Execution};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Isolation {
    Full,
    AYPartial,
    ADPartial,
    None,
}

impl fmt::Display for Isolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Isolation::Full => "full isolation",
            Isolation::AYPartial => "A_Y partial isolation",
            Isolation::ADPartial => "A_D partial isolation",
            Isolation::None => "no isolation",
        })
    }
}

fn components(g: &CausalGraph) -> Result<(usize, usize)> {
    match (g.find_kind(NodeKind::ComponentY), g.find_kind(NodeKind::ComponentD)) {
        (Some(ay), Some(ad)) => Ok((ay, ad)),
        _ => Err(Error::NoDecomposition),
    }
}

/// Whether a directed path from `start` reaches a node with `target` true
/// without passing through a node with `stop` true.
fn reaches(g: &CausalGraph, start: usize, target: &[bool], stop: &[bool]) -> bool {
    let mut seen = vec![false; g.nodes.len()];
    let mut queue = VecDeque::from([start]);
    seen[start] = true;
    while let Some(v) = queue.pop_front() {
        for &c in g.children(v) {
            if target[c] {
                return true;
            }
            if !seen[c] && !stop[c] {
                seen[c] = true;
                queue.push_back(c);
            }
        }
    }
    false
}

fn mask(g: &CausalGraph, pred: impl Fn(usize) -> bool) -> Vec<bool> {
    (0..g.nodes.len()).map(pred).collect()
}

pub fn check_isolation(g: &CausalGraph) -> Result<Isolation> {
    let (ay, ad) = components(g)?;
    let is_y = mask(g, |v| g.nodes[v].kind == NodeKind::EventY);
    let is_d = mask(g, |v| g.nodes[v].kind == NodeKind::EventD);
    // A_Y reaches no D except through some Y; A_D reaches no Y except through some D.
    let ay_ok = !reaches(g, ay, &is_d, &is_y);
    let ad_ok = !reaches(g, ad, &is_y, &is_d);
    Ok(match (ay_ok, ad_ok) {
        (true, true) => Isolation::Full,
        (true, false) => Isolation::AYPartial,
        (false, true) => Isolation::ADPartial,
        (false, false) => Isolation::None,
    })
}

/// Covariate nodes, measured or not, with a directed path into some event.
pub fn z_nodes(g: &CausalGraph) -> Vec<usize> {
    let events: Vec<usize> = (0..g.nodes.len()).filter(|&v| g.nodes[v].kind.is_event()).collect();
    let anc = g.ancestors_of(&events);
    (0..g.nodes.len()).filter(|&v| g.nodes[v].kind.is_covariate() && anc[v]).collect()
}

/// A split of the common causes into the block reached by `A_Y` and the block
/// reached by `A_D`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ZSplit {
    pub ay: Vec<String>,
    pub ad: Vec<String>,
}

pub fn check_zk_partition(g: &CausalGraph, split: &ZSplit) -> Result<bool> {
    let (ay, ad) = components(g)?;
    let z = z_nodes(g);
    let mut in_ay = vec![false; g.nodes.len()];
    let mut in_ad = vec![false; g.nodes.len()];
    for l in &split.ay {
        in_ay[g.index(l)?] = true;
    }
    for l in &split.ad {
        let v = g.index(l)?;
        if in_ay[v] {
            return Err(Error::IncompletePartition(format!("{l} is in both blocks")));
        }
        in_ad[v] = true;
    }
    let covered = (0..g.nodes.len()).filter(|&v| in_ay[v] || in_ad[v]).count();
    if covered != z.len() || z.iter().any(|&v| !in_ay[v] && !in_ad[v]) {
        return Err(Error::IncompletePartition("split must cover exactly the common causes".into()));
    }
    let is_y = mask(g, |v| g.nodes[v].kind == NodeKind::EventY);
    let is_d = mask(g, |v| g.nodes[v].kind == NodeKind::EventD);
    let d_or_zad = mask(g, |v| is_d[v] || in_ad[v]);
    let y_or_zay = mask(g, |v| is_y[v] || in_ay[v]);
    let ay_ok = !reaches(g, ay, &d_or_zad, &y_or_zay);
    let ad_ok = !reaches(g, ad, &y_or_zay, &d_or_zad);
    Ok(ay_ok && ad_ok)
}

/// Every split of the common causes that passes, in bitmask order (bit `i`
/// set puts the `i`-th common cause in the `A_Y` block).
pub fn search_zk_splits(g: &CausalGraph) -> Result<Vec<ZSplit>> {
    components(g)?;
    let z = z_nodes(g);
    if z.len() > 20 {
        return Err(Error::TooManyCovariates(z.len()));
    }
    let mut out = Vec::new();
    for m in 0u32..(1 << z.len()) {
        let split = split_from_mask(g, &z, m);
        if check_zk_partition(g, &split)? {
            out.push(split);
        }
    }
    Ok(out)
}

fn split_from_mask(g: &CausalGraph, z: &[usize], m: u32) -> ZSplit {
    let mut split = ZSplit { ay: vec![], ad: vec![] };
    for (i, &v) in z.iter().enumerate() {
        let l = g.label(v).to_string();
        if m >> i & 1 == 1 {
            split.ay.push(l)
        } else {
            split.ad.push(l)
        }
    }
    split
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Block {
    AY,
    AD,
}

/// Assignment of every measured covariate node to a block.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct LPartition {
    pub assignment: BTreeMap<String, Block>,
}

impl LPartition {
    /// All measured covariates in one block.
    pub fn uniform(g: &CausalGraph, block: Block) -> Self {
        let assignment = g
            .nodes
            .iter()
            .filter(|n| n.kind.is_measured_covariate())
            .map(|n| (n.label.clone(), block))
            .collect();
        LPartition { assignment }
    }

    /// Covariates listed in `ay` go to the `A_Y` block, the rest to `A_D`.
    pub fn with_ay(g: &CausalGraph, ay: &[&str]) -> Self {
        let mut p = Self::uniform(g, Block::AD);
        for l in ay {
            p.assignment.insert(l.to_string(), Block::AY);
        }
        p
    }

    fn labels(&self, block: Block) -> Vec<&str> {
        self.assignment.iter().filter(|(_, b)| **b == block).map(|(l, _)| l.as_str()).collect()
    }
}

impl fmt::Display for LPartition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "L_AY={{{}}} L_AD={{{}}}", self.labels(Block::AY).join(","), self.labels(Block::AD).join(","))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Verdict {
    Holds,
    Fails { k: usize, witness: super::Path },
}

impl Verdict {
    pub fn holds(&self) -> bool {
        matches!(self, Verdict::Holds)
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Verdict::Holds => f.write_str("holds"),
            Verdict::Fails { k, witness } => write!(f, "fails at k={k} via {witness}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DismissibleReport {
    /// `Y_{k+1}` independent of `A_D` given the `A_Y` arm and the past.
    pub cond_y: Verdict,
    /// `D_{k+1}` independent of `A_Y` given the `A_D` arm and the past.
    pub cond_d: Verdict,
    /// `L_{A_Y,k}` independent of `A_D`.
    pub cond_lay: Verdict,
    /// `L_{A_D,k}` independent of `A_Y`.
    pub cond_lad: Verdict,
}

impl DismissibleReport {
    pub fn all_hold(&self) -> bool {
        self.cond_y.holds() && self.cond_d.holds() && self.cond_lay.holds() && self.cond_lad.holds()
    }
}

impl fmt::Display for DismissibleReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "  Y condition:     {}", self.cond_y)?;
        writeln!(f, "  D condition:     {}", self.cond_d)?;
        writeln!(f, "  L_AY condition:  {}", self.cond_lay)?;
        write!(f, "  L_AD condition:  {}", self.cond_lad)
    }
}

pub fn check_dismissible(g: &CausalGraph, lp: &LPartition) -> Result<DismissibleReport> {
    let gt = g.g_transform()?;
    let (ay, ad) = components(&gt)?;
    let mut block = vec![None; gt.nodes.len()];
    for (l, b) in &lp.assignment {
        let v = gt.index(l)?;
        if !gt.nodes[v].kind.is_measured_covariate() {
            return Err(Error::IncompletePartition(format!("{l} is not a measured covariate")));
        }
        block[v] = Some(*b);
    }
    let measured: Vec<usize> = (0..gt.nodes.len()).filter(|&v| gt.nodes[v].kind.is_measured_covariate()).collect();
    if let Some(&v) = measured.iter().find(|&&v| block[v].is_none()) {
        return Err(Error::IncompletePartition(format!("{} is unassigned", gt.label(v))));
    }
    let at = |v: usize| gt.nodes[v].k.unwrap_or(0);
    let events = |kind: NodeKind, upto: usize| -> Vec<usize> {
        (1..=upto).filter_map(|j| gt.event(kind, j)).collect()
    };
    let covs = |upto: Option<usize>| -> Vec<usize> {
        match upto {
            None => vec![],
            Some(u) => measured.iter().copied().filter(|&v| at(v) <= u).collect(),
        }
    };
    let in_block = |b: Block, k: usize| -> Vec<usize> {
        measured.iter().copied().filter(|&v| at(v) == k && block[v] == Some(b)).collect()
    };
    let test = |x: usize, y: &[usize], z: Vec<usize>| -> Option<super::Path> {
        if y.is_empty() || gt.d_separated_ids(&[x], y, &z) {
            None
        } else {
            gt.connecting_path_ids(&[x], y, &z)
        }
    };
    let mut verdicts = [Verdict::Holds, Verdict::Holds, Verdict::Holds, Verdict::Holds];
    let mut record = |i: usize, k: usize, w: Option<super::Path>| {
        if let (Verdict::Holds, Some(witness)) = (&verdicts[i], w) {
            verdicts[i] = Verdict::Fails { k, witness };
        }
    };
    for k in 0..=gt.horizon() {
        let prev = k.checked_sub(1);
        let (ys, ds) = (events(NodeKind::EventY, k), events(NodeKind::EventD, k));
        if let Some(y_next) = gt.event(NodeKind::EventY, k + 1) {
            let mut z = vec![ay];
            z.extend(events(NodeKind::EventD, k + 1));
            z.extend(&ys);
            z.extend(covs(Some(k)));
            record(0, k, test(ad, &[y_next], z));
        }
        if let Some(d_next) = gt.event(NodeKind::EventD, k + 1) {
            let mut z = vec![ad];
            z.extend(&ds);
            z.extend(&ys);
            z.extend(covs(Some(k)));
            record(1, k, test(ay, &[d_next], z));
        }
        let mut z = vec![ay];
        z.extend(&ys);
        z.extend(&ds);
        z.extend(covs(prev));
        z.extend(in_block(Block::AD, k));
        record(2, k, test(ad, &in_block(Block::AY, k), z));
        let mut z = vec![ad];
        z.extend(&ds);
        z.extend(&ys);
        z.extend(covs(prev));
        record(3, k, test(ay, &in_block(Block::AD, k), z));
    }
    let [cond_y, cond_d, cond_lay, cond_lad] = verdicts;
    Ok(DismissibleReport { cond_y, cond_d, cond_lay, cond_lad })
}

/// Every partition of the measured covariates for which all four dismissible
/// conditions hold, in bitmask order (bit `i` set puts the `i`-th measured
/// covariate in the `A_Y` block).
pub fn search_partitions(g: &CausalGraph) -> Result<Vec<LPartition>> {
    components(g)?;
    let measured: Vec<String> =
        g.nodes.iter().filter(|n| n.kind.is_measured_covariate()).map(|n| n.label.clone()).collect();
    if measured.len() > 20 {
        return Err(Error::TooManyCovariates(measured.len()));
    }
    let results = map_indexed(Execution::Parallel, 1usize << measured.len(), |m| {
        let assignment = measured
            .iter()
            .enumerate()
            .map(|(i, l)| (l.clone(), if m >> i & 1 == 1 { Block::AY } else { Block::AD }))
            .collect();
        let lp = LPartition { assignment };
        check_dismissible(g, &lp).map(|r| r.all_hold().then_some(lp))
    });
    let mut out = Vec::new();
    for r in results {
        if let Some(lp) = r? {
            out.push(lp);
        }
    }
    Ok(out)
}

/// Everything the graph checks say about one graph.
#[derive(Debug, Clone)]
pub struct GraphSummary {
    pub isolation: Isolation,
    pub zk_splits: Vec<ZSplit>,
    pub zk_total: usize,
    pub passing_partitions: Vec<LPartition>,
    pub partition_total: usize,
}

pub fn classify(g: &CausalGraph) -> Result<GraphSummary> {
    let isolation = check_isolation(g)?;
    let zk_splits = search_zk_splits(g)?;
    let passing_partitions = search_partitions(g)?;
    let measured = g.nodes.iter().filter(|n| n.kind.is_measured_covariate()).count();
    Ok(GraphSummary {
        isolation,
        zk_splits,
        zk_total: 1 << z_nodes(g).len(),
        passing_partitions,
        partition_total: 1 << measured,
    })
}

impl GraphSummary {
    /// One line, e.g. "full isolation; all partitions pass".
    pub fn headline(&self) -> String {
        if self.zk_splits.is_empty() {
            return format!("{}; Z_k partition fails", self.isolation);
        }
        let p = match self.passing_partitions.len() {
            0 => "no partition passes".to_string(),
            n if n == self.partition_total => "all partitions pass".to_string(),
            n => format!("{n} of {} partitions pass", self.partition_total),
        };
        format!("{}; {p}", self.isolation)
    }
}
