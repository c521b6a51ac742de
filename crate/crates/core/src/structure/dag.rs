//! Chapter and step graphs.
//!
//! Construction works on units: a parallel group is one unit and every other
//! element is its own unit. Unit edges expand to all member pairs, which gives
//! group members identical predecessor and successor sets by construction.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, Warnings};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Relation {
    /// `from` precedes `to`; without `to` it only declares `from` as a lone element.
    Sequential { from: String, to: Option<String> },
    /// Interchangeable elements sharing predecessors and successors.
    Parallel { group: Vec<String> },
}

impl Relation {
    pub fn seq(from: impl Into<String>, to: impl Into<String>) -> Self {
        Relation::Sequential {
            from: from.into(),
            to: Some(to.into()),
        }
    }

    pub fn parallel<S: Into<String>>(group: impl IntoIterator<Item = S>) -> Self {
        Relation::Parallel {
            group: group.into_iter().map(Into::into).collect(),
        }
    }

    pub fn ids(&self) -> Vec<&str> {
        match self {
            Relation::Sequential { from, to } => std::iter::once(from.as_str()).chain(to.as_deref()).collect(),
            Relation::Parallel { group } => group.iter().map(String::as_str).collect(),
        }
    }
}

/// Nodes in temporal order plus predecessor-to-successor edges.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct StructureGraph {
    pub nodes: Vec<String>,
    pub edges: Vec<(String, String)>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    Cycle(Vec<String>),
    SelfLoop(String),
    DuplicateEdge(String, String),
    UnknownNode(String),
    DuplicateNode(String),
    Unreachable(String),
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Cycle(nodes) => write!(f, "cycle through {}", nodes.join(", ")),
            Violation::SelfLoop(n) => write!(f, "self-loop on {n}"),
            Violation::DuplicateEdge(a, b) => write!(f, "duplicate edge {a} -> {b}"),
            Violation::UnknownNode(n) => write!(f, "edge references unknown node {n}"),
            Violation::DuplicateNode(n) => write!(f, "node {n} listed twice"),
            Violation::Unreachable(n) => write!(f, "node {n} unreachable from any source"),
        }
    }
}

impl StructureGraph {
    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n == id)
    }

    pub fn predecessors(&self, id: &str) -> BTreeSet<&str> {
        self.edges.iter().filter(|(_, b)| b == id).map(|(a, _)| a.as_str()).collect()
    }

    pub fn successors(&self, id: &str) -> BTreeSet<&str> {
        self.edges.iter().filter(|(a, _)| a == id).map(|(_, b)| b.as_str()).collect()
    }

    pub fn has_edge(&self, a: &str, b: &str) -> bool {
        self.edges.iter().any(|(x, y)| x == a && y == b)
    }

    /// Plain graph description for inspection.
    pub fn to_dot(&self, name: &str, labels: &BTreeMap<String, String>) -> String {
        let mut out = format!("digraph \"{name}\" {{\n  rankdir=TB;\n");
        for n in &self.nodes {
            let label = labels.get(n).map(|l| format!("{n}: {l}")).unwrap_or_else(|| n.clone());
            out.push_str(&format!("  \"{n}\" [label=\"{}\"];\n", label.replace('"', "\\\"")));
        }
        for (a, b) in &self.edges {
            out.push_str(&format!("  \"{a}\" -> \"{b}\";\n"));
        }
        out.push_str("}\n");
        out
    }
}

/// Adjacency (by node position) of the edges whose endpoints are known; unknown ids are reported.
fn adjacency(g: &StructureGraph, violations: &mut Vec<Violation>) -> Vec<Vec<usize>> {
    let pos: BTreeMap<&str, usize> = g.nodes.iter().enumerate().map(|(i, n)| (n.as_str(), i)).collect();
    let mut adj = vec![Vec::new(); g.nodes.len()];
    for (a, b) in &g.edges {
        match (pos.get(a.as_str()), pos.get(b.as_str())) {
            (Some(&i), Some(&j)) => adj[i].push(j),
            (None, _) => violations.push(Violation::UnknownNode(a.clone())),
            (_, None) => violations.push(Violation::UnknownNode(b.clone())),
        }
    }
    adj
}

/// Kahn's algorithm; returns the order and the nodes left over when a cycle blocks it.
fn kahn(adj: &[Vec<usize>]) -> (Vec<usize>, Vec<usize>) {
    let n = adj.len();
    let mut indeg = vec![0usize; n];
    for succ in adj {
        for &j in succ {
            indeg[j] += 1;
        }
    }
    let mut queue: VecDeque<usize> = (0..n).filter(|&i| indeg[i] == 0).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(i) = queue.pop_front() {
        order.push(i);
        for &j in &adj[i] {
            indeg[j] -= 1;
            if indeg[j] == 0 {
                queue.push_back(j);
            }
        }
    }
    let stuck = (0..n).filter(|&i| indeg[i] > 0).collect();
    (order, stuck)
}

pub fn validate_dag(g: &StructureGraph) -> Vec<Violation> {
    let mut v = Vec::new();
    let mut seen_nodes = BTreeSet::new();
    for n in &g.nodes {
        if !seen_nodes.insert(n.as_str()) {
            v.push(Violation::DuplicateNode(n.clone()));
        }
    }
    let mut seen = BTreeSet::new();
    for (a, b) in &g.edges {
        if a == b {
            v.push(Violation::SelfLoop(a.clone()));
        }
        if !seen.insert((a.as_str(), b.as_str())) {
            v.push(Violation::DuplicateEdge(a.clone(), b.clone()));
        }
    }
    let adj = adjacency(g, &mut v);
    let (_, stuck) = kahn(&adj);
    if !stuck.is_empty() {
        v.push(Violation::Cycle(stuck.iter().map(|&i| g.nodes[i].clone()).collect()));
    }
    let mut indeg = vec![0usize; g.nodes.len()];
    adj.iter().flatten().for_each(|&j| indeg[j] += 1);
    let mut reached = vec![false; g.nodes.len()];
    let mut queue: VecDeque<usize> = (0..g.nodes.len()).filter(|&i| indeg[i] == 0).collect();
    queue.iter().for_each(|&i| reached[i] = true);
    while let Some(i) = queue.pop_front() {
        for &j in &adj[i] {
            if !reached[j] {
                reached[j] = true;
                queue.push_back(j);
            }
        }
    }
    for (i, r) in reached.iter().enumerate() {
        if !r {
            v.push(Violation::Unreachable(g.nodes[i].clone()));
        }
    }
    v
}

/// Longest-path layering; nodes within a layer keep their temporal order.
pub fn topological_layers(g: &StructureGraph) -> Result<Vec<Vec<String>>> {
    let violations = validate_dag(g);
    if !violations.is_empty() {
        let detail: Vec<String> = violations.iter().map(ToString::to_string).collect();
        return Err(Error::InvalidGraph(detail.join("; ")));
    }
    let mut sink = Vec::new();
    let adj = adjacency(g, &mut sink);
    let (order, _) = kahn(&adj);
    let mut depth = vec![0usize; g.nodes.len()];
    for &i in &order {
        for &j in &adj[i] {
            depth[j] = depth[j].max(depth[i] + 1);
        }
    }
    let layers = depth.iter().copied().max().map_or(0, |d| d + 1);
    let mut out = vec![Vec::new(); layers];
    for (i, &d) in depth.iter().enumerate() {
        out[d].push(g.nodes[i].clone());
    }
    Ok(out)
}

/// Sets of nodes sharing identical, non-empty predecessor or successor sets, in temporal order.
pub fn parallel_siblings(g: &StructureGraph) -> Vec<Vec<String>> {
    let mut by_key: BTreeMap<(BTreeSet<&str>, BTreeSet<&str>), Vec<usize>> = BTreeMap::new();
    for (i, n) in g.nodes.iter().enumerate() {
        by_key.entry((g.predecessors(n), g.successors(n))).or_default().push(i);
    }
    let mut groups: Vec<Vec<usize>> = by_key
        .into_iter()
        .filter(|((p, s), members)| members.len() > 1 && !(p.is_empty() && s.is_empty()))
        .map(|(_, m)| m)
        .collect();
    groups.sort();
    groups
        .into_iter()
        .map(|m| m.into_iter().map(|i| g.nodes[i].clone()).collect())
        .collect()
}

struct UnitGraph {
    succ: Vec<BTreeSet<usize>>,
}

impl UnitGraph {
    fn reaches(&self, from: usize, to: usize) -> bool {
        let mut stack = vec![from];
        let mut seen = vec![false; self.succ.len()];
        while let Some(u) = stack.pop() {
            if u == to {
                return true;
            }
            if std::mem::replace(&mut seen[u], true) {
                continue;
            }
            stack.extend(self.succ[u].iter().copied());
        }
        false
    }

    /// Add `a -> b` unless it is a self-loop or closes a cycle. Returns whether the edge is present afterwards.
    fn add(&mut self, a: usize, b: usize) -> std::result::Result<(), &'static str> {
        if a == b {
            return Err("self-loop");
        }
        if self.succ[a].contains(&b) {
            return Ok(());
        }
        if self.reaches(b, a) {
            return Err("cycle");
        }
        self.succ[a].insert(b);
        Ok(())
    }
}

/// Build a graph over `elements` (temporal order) from validated relations.
///
/// Relations are applied in order and any edge that would close a cycle is dropped
/// with a warning. Elements left without edges are chained to their temporal neighbours.
pub fn build_dag(elements: &[String], relations: &[Relation]) -> Result<(StructureGraph, Warnings)> {
    let mut warnings = Warnings::new();
    let pos: BTreeMap<&str, usize> = elements.iter().enumerate().map(|(i, e)| (e.as_str(), i)).collect();
    if pos.len() != elements.len() {
        return Err(Error::InvalidArgument("element ids must be unique".into()));
    }

    // Units: each element starts alone; groups claim their members (first claim wins).
    let mut unit_of: Vec<usize> = (0..elements.len()).collect();
    let mut grouped = vec![false; elements.len()];
    let mut group_units: Vec<Option<usize>> = vec![None; relations.len()];
    for (r, rel) in relations.iter().enumerate() {
        let Relation::Parallel { group } = rel else { continue };
        let mut members: Vec<usize> = Vec::new();
        for id in group {
            match pos.get(id.as_str()) {
                Some(&i) if grouped[i] => warnings.push(format!("dag: {id} already belongs to a parallel group")),
                Some(&i) if !members.contains(&i) => members.push(i),
                Some(_) => {}
                None => warnings.push(format!("dag: parallel group names unknown id {id}")),
            }
        }
        if members.len() < 2 {
            warnings.push(format!("dag: parallel group {group:?} has fewer than two usable members"));
            continue;
        }
        members.sort_unstable();
        let unit = members[0];
        for &m in &members {
            grouped[m] = true;
            unit_of[m] = unit;
        }
        group_units[r] = Some(unit);
    }
    // Compact unit ids to 0..k in temporal order of their first member.
    let mut compact: BTreeMap<usize, usize> = BTreeMap::new();
    for &u in &unit_of {
        let next = compact.len();
        compact.entry(u).or_insert(next);
    }
    let unit_of: Vec<usize> = unit_of.iter().map(|u| compact[u]).collect();
    let n_units = compact.len();
    let members_of = |u: usize| -> Vec<usize> { (0..elements.len()).filter(|&i| unit_of[i] == u).collect() };

    let mut ug = UnitGraph {
        succ: vec![BTreeSet::new(); n_units],
    };
    let add = |ug: &mut UnitGraph, a: usize, b: usize, warnings: &mut Warnings, why: &str| {
        if let Err(reason) = ug.add(a, b) {
            let (ea, eb) = (&elements[members_of(a)[0]], &elements[members_of(b)[0]]);
            warnings.push(format!("dag: dropped edge {ea} -> {eb} from {why} ({reason})"));
        }
    };
    for (r, rel) in relations.iter().enumerate() {
        match rel {
            Relation::Sequential { from, to } => {
                let a = pos.get(from.as_str());
                let b = to.as_deref().map(|t| pos.get(t));
                match (a, b) {
                    (Some(&a), Some(Some(&b))) => {
                        if unit_of[a] == unit_of[b] {
                            warnings.push(format!("dag: {from} -> {} joins members of one parallel group", to.as_deref().unwrap()));
                        } else {
                            add(&mut ug, unit_of[a], unit_of[b], &mut warnings, "sequential relation");
                        }
                    }
                    (Some(_), None) => {}
                    _ => warnings.push(format!("dag: relation {rel:?} names an unknown id")),
                }
            }
            Relation::Parallel { .. } => {
                let Some(first) = group_units[r] else { continue };
                let unit = compact[&first];
                let members = members_of(unit);
                let (lo, hi) = (members[0], *members.last().unwrap());
                let before = (0..lo).rev().find(|&i| unit_of[i] != unit);
                let after = (hi + 1..elements.len()).find(|&i| unit_of[i] != unit);
                if let Some(p) = before {
                    add(&mut ug, unit_of[p], unit, &mut warnings, "parallel group boundary");
                }
                if let Some(s) = after {
                    add(&mut ug, unit, unit_of[s], &mut warnings, "parallel group boundary");
                }
            }
        }
    }
    // Chain isolated units to their temporal neighbours.
    let touched = |ug: &UnitGraph, u: usize| !ug.succ[u].is_empty() || ug.succ.iter().any(|s| s.contains(&u));
    for u in 0..n_units {
        if n_units > 1 && !touched(&ug, u) {
            if u > 0 {
                add(&mut ug, u - 1, u, &mut warnings, "orphan chaining");
            }
            if u + 1 < n_units {
                add(&mut ug, u, u + 1, &mut warnings, "orphan chaining");
            }
        }
    }

    let mut edges = Vec::new();
    for (a, succ) in ug.succ.iter().enumerate() {
        for &b in succ {
            for i in members_of(a) {
                for j in members_of(b) {
                    edges.push((i, j));
                }
            }
        }
    }
    edges.sort_unstable();
    let graph = StructureGraph {
        nodes: elements.to_vec(),
        edges: edges.into_iter().map(|(i, j)| (elements[i].clone(), elements[j].clone())).collect(),
    };
    let violations = validate_dag(&graph);
    if !violations.is_empty() {
        let detail: Vec<String> = violations.iter().map(ToString::to_string).collect();
        return Err(Error::CycleDetected(detail.join("; ")));
    }
    Ok((graph, warnings))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(n: usize) -> Vec<String> {
        (1..=n).map(|i| i.to_string()).collect()
    }

    fn edge_set(g: &StructureGraph) -> BTreeSet<(String, String)> {
        g.edges.iter().cloned().collect()
    }

    fn pairs(list: &[(u32, u32)]) -> BTreeSet<(String, String)> {
        list.iter().map(|(a, b)| (a.to_string(), b.to_string())).collect()
    }

    #[test]
    fn chain_of_five() {
        let rels: Vec<_> = (1..5).map(|i| Relation::seq(i.to_string(), (i + 1).to_string())).collect();
        let (g, w) = build_dag(&ids(5), &rels).unwrap();
        assert!(w.is_empty());
        assert_eq!(edge_set(&g), pairs(&[(1, 2), (2, 3), (3, 4), (4, 5)]));
    }

    #[test]
    fn diamond_from_parallel_group() {
        let (g, _) = build_dag(&ids(5), &[Relation::parallel(["2", "3", "4"])]).unwrap();
        assert_eq!(edge_set(&g), pairs(&[(1, 2), (1, 3), (1, 4), (2, 5), (3, 5), (4, 5)]));
        assert_eq!(
            topological_layers(&g).unwrap(),
            vec![vec!["1".to_string()], ids(4)[1..].to_vec(), vec!["5".to_string()]]
        );
        assert_eq!(parallel_siblings(&g), vec![vec!["2".to_string(), "3".into(), "4".into()]]);
    }

    #[test]
    fn diamond_with_explicit_sequential_edges() {
        let rels = [Relation::seq("1", "2"), Relation::parallel(["2", "3", "4"]), Relation::seq("4", "5")];
        let (g, _) = build_dag(&ids(5), &rels).unwrap();
        assert_eq!(edge_set(&g), pairs(&[(1, 2), (1, 3), (1, 4), (2, 5), (3, 5), (4, 5)]));
    }

    #[test]
    fn back_edge_is_dropped() {
        let (g, w) = build_dag(&ids(2), &[Relation::seq("1", "2"), Relation::seq("2", "1")]).unwrap();
        assert_eq!(edge_set(&g), pairs(&[(1, 2)]));
        assert!(w.contains("2 -> 1"));
    }

    #[test]
    fn unknown_id_keeps_orphan_chain() {
        let rels = [Relation::seq("1", "2"), Relation::seq("2", "9")];
        let (g, w) = build_dag(&ids(3), &rels).unwrap();
        assert_eq!(edge_set(&g), pairs(&[(1, 2), (2, 3)]));
        assert!(w.contains("unknown"));
    }

    #[test]
    fn no_relations_chains_everything() {
        let (g, _) = build_dag(&ids(4), &[]).unwrap();
        assert_eq!(edge_set(&g), pairs(&[(1, 2), (2, 3), (3, 4)]));
        let (single, _) = build_dag(&ids(1), &[]).unwrap();
        assert!(single.edges.is_empty());
        assert_eq!(topological_layers(&single).unwrap(), vec![vec!["1".to_string()]]);
    }

    #[test]
    fn validation_reports_each_violation() {
        let g = StructureGraph {
            nodes: ids(3),
            edges: vec![("1".into(), "2".into()), ("2".into(), "1".into())],
        };
        let v = validate_dag(&g);
        assert!(v.iter().any(|x| matches!(x, Violation::Cycle(_))));
        let g = StructureGraph {
            nodes: ids(2),
            edges: vec![("1".into(), "1".into()), ("1".into(), "2".into()), ("1".into(), "2".into())],
        };
        let v = validate_dag(&g);
        assert!(v.contains(&Violation::SelfLoop("1".into())));
        assert!(v.contains(&Violation::DuplicateEdge("1".into(), "2".into())));
        let path = StructureGraph {
            nodes: ids(3),
            edges: vec![("1".into(), "2".into()), ("2".into(), "3".into())],
        };
        assert!(validate_dag(&path).is_empty());
        assert_eq!(topological_layers(&path).unwrap().len(), 3);
    }

    #[test]
    fn layering_rejects_cycles() {
        let g = StructureGraph {
            nodes: ids(2),
            edges: vec![("1".into(), "2".into()), ("2".into(), "1".into())],
        };
        assert_eq!(topological_layers(&g).unwrap_err().code(), "INVALID_GRAPH");
    }

    #[test]
    fn overlapping_groups_first_claim_wins() {
        let rels = [Relation::parallel(["2", "3"]), Relation::parallel(["3", "4"])];
        let (g, w) = build_dag(&ids(4), &rels).unwrap();
        assert!(w.contains("already belongs"));
        assert_eq!(edge_set(&g), pairs(&[(1, 2), (1, 3), (2, 4), (3, 4)]));
    }
}
