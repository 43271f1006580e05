//! Expected classifications of the figure fixtures, and a generator of
//! random decomposition graphs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use separable::causal_graph::{
    check_dismissible, check_isolation, check_zk_partition, classify, search_partitions, search_zk_splits, Block,
    CausalGraph, Edge, GraphNode, Isolation, LPartition, NodeKind, Verdict, ZSplit,
};
use separable::Error;

use super::fixture_path;

pub fn graph(name: &str) -> CausalGraph {
    let text = std::fs::read_to_string(fixture_path(&format!("graphs/{name}.graph"))).unwrap();
    CausalGraph::parse(&text).unwrap_or_else(|e| panic!("{name}: {e}"))
}

pub fn split(ay: &[&str], ad: &[&str]) -> ZSplit {
    ZSplit { ay: ay.iter().map(|s| s.to_string()).collect(), ad: ad.iter().map(|s| s.to_string()).collect() }
}

pub const ISOLATION: [(&str, Isolation); 15] = [
    ("fig1b", Isolation::Full),
    ("fig2b", Isolation::Full),
    ("fig4a", Isolation::AYPartial),
    ("fig4b", Isolation::ADPartial),
    ("fig5a", Isolation::None),
    ("fig5b", Isolation::None),
    ("fig6a", Isolation::AYPartial),
    ("fig6b", Isolation::ADPartial),
    ("fig8a", Isolation::Full),
    ("fig8b", Isolation::Full),
    ("fig8c", Isolation::AYPartial),
    ("fig8d", Isolation::None),
    ("fig8e", Isolation::Full),
    ("fig8f", Isolation::AYPartial),
    ("fig4a_k2", Isolation::AYPartial),
];

/// Graphs whose dismissible conditions hold, with the covariates placed in
/// the `A_Y` block.
pub const DISMISSIBLE: [(&str, &[&str]); 7] = [
    ("fig8a", &[]),
    ("fig8b", &[]),
    ("fig8c", &[]),
    ("fig8d", &["Ly1"]),
    ("fig5b", &["Zy1"]),
    ("fig4a", &[]),
    ("fig4a_k2", &[]),
];

/// Runs every classification check on the figure fixtures and returns the
/// number of checks together with a description of each mismatch.
pub fn classification_mismatches() -> (usize, Vec<String>) {
    let mut checks = 0;
    let mut bad = Vec::new();
    let mut expect = |ok: bool, what: String| {
        checks += 1;
        if !ok {
            bad.push(what);
        }
    };

    for (name, want) in ISOLATION {
        let got = check_isolation(&graph(name));
        expect(got == Ok(want), format!("{name}: isolation {got:?}, expected {want:?}"));
    }
    for name in ["fig1a", "fig2a", "fig3"] {
        let g = graph(name);
        let rejected = check_isolation(&g) == Err(Error::NoDecomposition) && g.g_transform().is_err();
        expect(rejected, format!("{name}: should have no decomposition"));
    }

    let zk = |name: &str, ay: &[&str], ad: &[&str]| check_zk_partition(&graph(name), &split(ay, ad)).unwrap();
    expect(search_zk_splits(&graph("fig2b")).unwrap().len() == 4, "fig2b: every split passes".into());
    expect(zk("fig4a", &[], &["Z1"]), "fig4a: Z1 in the A_D block".into());
    expect(!zk("fig4a", &["Z1"], &[]), "fig4a: Z1 in the A_Y block must fail".into());
    expect(zk("fig4b", &["Z1"], &[]), "fig4b: Z1 in the A_Y block".into());
    expect(search_zk_splits(&graph("fig5a")).unwrap().is_empty(), "fig5a: no split passes".into());
    expect(
        search_zk_splits(&graph("fig5b")).unwrap() == vec![split(&["Zy1"], &["Zd1"])],
        "fig5b: exactly one split".into(),
    );
    for name in ["fig6a", "fig6b"] {
        expect(search_zk_splits(&graph(name)).unwrap().is_empty(), format!("{name}: no split passes"));
    }

    for (name, ay) in DISMISSIBLE {
        let g = graph(name);
        let r = check_dismissible(&g, &LPartition::with_ay(&g, ay)).unwrap();
        expect(r.all_hold(), format!("{name}: dismissible conditions should hold\n{r}"));
    }

    let g = graph("fig8e");
    for ay in [&[][..], &["L1"][..]] {
        let r = check_dismissible(&g, &LPartition::with_ay(&g, ay)).unwrap();
        let only_y = !r.cond_y.holds() && r.cond_d.holds() && r.cond_lay.holds() && r.cond_lad.holds();
        expect(only_y, format!("fig8e {ay:?}: only the outcome condition should fail\n{r}"));
    }
    expect(search_partitions(&g).unwrap().is_empty(), "fig8e: no partition passes".into());
    let witness = |name: &str| match check_dismissible(&graph(name), &LPartition::with_ay(&graph(name), &[])).unwrap().cond_y
    {
        Verdict::Fails { k, witness } => Some((k, witness.to_string())),
        Verdict::Holds => None,
    };
    expect(
        witness("fig8e") == Some((1, "Ad -> D2 <- U_LD -> L1 <- U_LY -> Y2".into())),
        format!("fig8e witness {:?}", witness("fig8e")),
    );
    expect(witness("fig8f") == Some((1, "Ad -> L1 <- U_LY -> Y2".into())), format!("fig8f witness {:?}", witness("fig8f")));

    for (name, want) in [
        ("fig1b", "full isolation; all partitions pass"),
        ("fig2b", "full isolation; all partitions pass"),
        ("fig5a", "no isolation; Z_k partition fails"),
        ("fig6a", "A_Y partial isolation; Z_k partition fails"),
        ("fig8e", "full isolation; no partition passes"),
    ] {
        let got = classify(&graph(name)).unwrap().headline();
        expect(got == want, format!("{name}: headline {got:?}"));
    }
    (checks, bad)
}

/// A random graph with `A`, both components, one or two intervals of events,
/// measured covariates and up to two unmeasured ones; at most 12 nodes.
/// Edges respect the temporal order and each is present with a probability
/// drawn per graph.
pub fn random_decomposition_graph(seed: u64) -> CausalGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let horizon = rng.random_range(1..=2usize);
    let node = |label: String, kind, k| GraphNode { label, kind, k };
    // temporal order of the timed nodes
    let mut nodes = Vec::new();
    for j in 0..rng.random_range(0..=2usize) {
        nodes.push(node(format!("B{j}"), NodeKind::Covariate { measured: true }, Some(0)));
    }
    nodes.push(node("A".into(), NodeKind::Treatment, None));
    nodes.push(node("Ay".into(), NodeKind::ComponentY, None));
    nodes.push(node("Ad".into(), NodeKind::ComponentD, None));
    for k in 1..=horizon {
        nodes.push(node(format!("D{k}"), NodeKind::EventD, Some(k)));
        nodes.push(node(format!("Y{k}"), NodeKind::EventY, Some(k)));
        if k < horizon {
            for j in 0..rng.random_range(1..=2usize) {
                nodes.push(node(format!("L{k}_{j}"), NodeKind::Covariate { measured: true }, Some(k)));
            }
        }
    }
    let timed = nodes.len();
    let unmeasured = rng.random_range(0..=2usize).min(12 - timed);
    for j in 0..unmeasured {
        nodes.push(node(format!("U{j}"), NodeKind::Covariate { measured: false }, None));
    }

    let p: f64 = rng.random_range(0.15..0.5);
    let kind = |i: usize| nodes[i].kind;
    let mut edges = vec![Edge { from: position(&nodes, "A"), to: position(&nodes, "Ay"), det: true }];
    edges.push(Edge { from: position(&nodes, "A"), to: position(&nodes, "Ad"), det: true });
    for from in 0..timed {
        for to in from + 1..timed {
            let into_treatment = matches!(kind(to), NodeKind::Treatment) || kind(to).is_component();
            if kind(from) == NodeKind::Treatment || into_treatment {
                continue;
            }
            if rng.random_bool(p) {
                edges.push(Edge { from, to, det: false });
            }
        }
    }
    for u in timed..nodes.len() {
        for to in 0..timed {
            let allowed = kind(to).is_event() || kind(to).is_covariate();
            if allowed && rng.random_bool(p) {
                edges.push(Edge { from: u, to, det: false });
            }
        }
    }
    CausalGraph::new(nodes, edges).unwrap_or_else(|e| panic!("seed {seed}: {e}"))
}

fn position(nodes: &[GraphNode], label: &str) -> usize {
    nodes.iter().position(|n| n.label == label).unwrap()
}

/// Antecedents met and implications broken for the four graph lemmas on one
/// graph, indexed: no split passes, all-`A_D` passes, all-`A_Y` passes, both
/// uniform partitions pass.
#[derive(Debug, Default, Clone, Copy)]
pub struct LemmaTally {
    pub triggered: [usize; 4],
    pub violated: [usize; 4],
}

impl LemmaTally {
    pub fn add(&mut self, g: &CausalGraph) {
        let iso = check_isolation(g).unwrap();
        let mut check = |i: usize, antecedent: bool, consequent: bool| {
            if antecedent {
                self.triggered[i] += 1;
                if !consequent {
                    self.violated[i] += 1;
                }
            }
        };
        let no_split = search_zk_splits(g).unwrap().is_empty();
        check(0, no_split, search_partitions(g).unwrap().is_empty());
        let ad = check_dismissible(g, &LPartition::uniform(g, Block::AD)).unwrap().all_hold();
        let ay = check_dismissible(g, &LPartition::uniform(g, Block::AY)).unwrap().all_hold();
        check(1, ad, matches!(iso, Isolation::AYPartial | Isolation::Full));
        check(2, ay, matches!(iso, Isolation::ADPartial | Isolation::Full));
        check(3, ad && ay, iso == Isolation::Full);
    }
}
