use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Declared derivations: an edge `(child, parent)` means the child statistic
/// is a deterministic function of the parent. `t1 ⪯ t2` iff t1 is reachable
/// from t2 by following such edges downwards.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(from = "DagRepr", into = "DagRepr")]
pub struct DerivationDag {
    nodes: Vec<String>,
    index: HashMap<String, usize>,
    parents: Vec<Vec<usize>>,
}

#[derive(Serialize, Deserialize)]
struct DagRepr {
    nodes: Vec<String>,
    edges: Vec<(String, String)>,
}

impl From<DerivationDag> for DagRepr {
    fn from(d: DerivationDag) -> Self {
        DagRepr { edges: d.edges(), nodes: d.nodes }
    }
}

impl From<DagRepr> for DerivationDag {
    fn from(r: DagRepr) -> Self {
        let mut d = DerivationDag::default();
        for n in r.nodes {
            d.add_node(n);
        }
        for (c, p) in r.edges {
            // a serialised DAG was validated when it was built
            let _ = d.add_edge(&c, &p);
        }
        d
    }
}

impl DerivationDag {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_node(&mut self, id: impl Into<String>) -> usize {
        let id = id.into();
        if let Some(&k) = self.index.get(&id) {
            return k;
        }
        self.nodes.push(id.clone());
        self.parents.push(Vec::new());
        self.index.insert(id, self.nodes.len() - 1);
        self.nodes.len() - 1
    }

    fn lookup(&self, id: &str) -> Result<usize> {
        self.index.get(id).copied().ok_or_else(|| Error::Lookup { id: id.to_string(), known: self.nodes.clone() })
    }

    /// Register `child = f(parent)`; rejects edges that would close a cycle.
    pub fn add_edge(&mut self, child: &str, parent: &str) -> Result<()> {
        let c = self.lookup(child)?;
        let p = self.lookup(parent)?;
        if self.reaches(c, p) {
            return Err(Error::config(format!("edge {child} ⪯ {parent} would create a cycle")));
        }
        if !self.parents[c].contains(&p) {
            self.parents[c].push(p);
        }
        Ok(())
    }

    /// True iff `anc` is `node` or one of its ancestors, i.e. `node ⪯ anc`.
    fn reaches(&self, anc: usize, node: usize) -> bool {
        let mut stack = vec![node];
        let mut seen = vec![false; self.nodes.len()];
        while let Some(k) = stack.pop() {
            if k == anc {
                return true;
            }
            if !seen[k] {
                seen[k] = true;
                stack.extend(&self.parents[k]);
            }
        }
        false
    }

    /// `t1 ⪯ t2`: t1 is a deterministic function of t2. Reflexive.
    pub fn check_dominates(&self, t1: &str, t2: &str) -> Result<bool> {
        let a = self.lookup(t1)?;
        let b = self.lookup(t2)?;
        Ok(self.reaches(b, a))
    }

    pub fn nodes(&self) -> &[String] {
        &self.nodes
    }

    pub fn edges(&self) -> Vec<(String, String)> {
        let mut out = Vec::new();
        for (c, ps) in self.parents.iter().enumerate() {
            for &p in ps {
                out.push((self.nodes[c].clone(), self.nodes[p].clone()));
            }
        }
        out
    }

    /// Chains of nodes from each basis node down through its descendants.
    pub fn descendant_chains(&self, root: &str) -> Result<Vec<Vec<String>>> {
        let r = self.lookup(root)?;
        let mut children: Vec<Vec<usize>> = vec![Vec::new(); self.nodes.len()];
        for (c, ps) in self.parents.iter().enumerate() {
            for &p in ps {
                children[p].push(c);
            }
        }
        let mut out = Vec::new();
        let mut stack = vec![vec![r]];
        while let Some(path) = stack.pop() {
            let last = *path.last().expect("non-empty path");
            if children[last].is_empty() {
                out.push(path.iter().map(|&k| self.nodes[k].clone()).collect());
            } else {
                for &c in children[last].iter().rev() {
                    let mut p = path.clone();
                    p.push(c);
                    stack.push(p);
                }
            }
        }
        Ok(out)
    }

    /// Map each non-basis node to its unique basis ancestor; errors if a node
    /// has none or several.
    pub fn basis_ancestors(&self, basis: &[&str]) -> Result<BTreeMap<String, String>> {
        let ids = basis.iter().map(|b| self.lookup(b)).collect::<Result<Vec<_>>>()?;
        let mut out = BTreeMap::new();
        for (k, name) in self.nodes.iter().enumerate() {
            if ids.contains(&k) {
                continue;
            }
            let anc: Vec<usize> = ids.iter().copied().filter(|&b| self.reaches(b, k)).collect();
            match anc.as_slice() {
                [b] => {
                    out.insert(name.clone(), self.nodes[*b].clone());
                }
                _ => {
                    return Err(Error::config(format!("`{name}` has {} basis ancestors, expected exactly one", anc.len())));
                }
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    /// Two basis statistics, each with three descendants.
    pub(crate) fn figure_two() -> DerivationDag {
        let mut d = DerivationDag::new();
        for n in ["T1", "T2", "T3", "T4", "T5", "T6", "T7", "T8"] {
            d.add_node(n);
        }
        for (c, p) in [("T3", "T1"), ("T5", "T3"), ("T7", "T1"), ("T4", "T2"), ("T6", "T4"), ("T8", "T2")] {
            d.add_edge(c, p).unwrap();
        }
        d
    }

    #[test]
    fn reflexive_and_figure_two() {
        let d = figure_two();
        assert!(d.check_dominates("T3", "T3").unwrap());
        assert!(d.check_dominates("T3", "T1").unwrap());
        assert!(!d.check_dominates("T3", "T2").unwrap());
        assert!(d.check_dominates("T5", "T1").unwrap());
        assert!(!d.check_dominates("T1", "T5").unwrap());
        let anc = d.basis_ancestors(&["T1", "T2"]).unwrap();
        assert_eq!(anc["T5"], "T1");
        assert_eq!(anc["T8"], "T2");
        let chains = d.descendant_chains("T1").unwrap();
        assert_eq!(chains, vec![vec!["T1", "T3", "T5"], vec!["T1", "T7"]]);
    }

    #[test]
    fn projection_order() {
        let mut d = DerivationDag::new();
        d.add_node("mean");
        d.add_node("mean_se");
        d.add_edge("mean", "mean_se").unwrap();
        assert!(d.check_dominates("mean", "mean_se").unwrap());
        assert!(!d.check_dominates("mean_se", "mean").unwrap());
    }

    #[test]
    fn cycles_and_unknown_ids_rejected() {
        let mut d = figure_two();
        assert!(matches!(d.add_edge("T1", "T5"), Err(Error::Config(_))));
        assert!(matches!(d.check_dominates("T9", "T1"), Err(Error::Lookup { .. })));
    }

    #[test]
    fn serde_round_trip() {
        let d = figure_two();
        let back: DerivationDag = serde_json::from_str(&serde_json::to_string(&d).unwrap()).unwrap();
        assert_eq!(back.edges(), d.edges());
    }

    proptest! {
        #[test]
        fn order_is_transitive_and_antisymmetric(edges in prop::collection::vec((0usize..8, 0usize..8), 0..20)) {
            let mut d = DerivationDag::new();
            let names: Vec<String> = (0..8).map(|k| format!("n{k}")).collect();
            for n in &names {
                d.add_node(n.clone());
            }
            for (c, p) in edges {
                let _ = d.add_edge(&names[c], &names[p]);
            }
            for a in &names {
                for b in &names {
                    let ab = d.check_dominates(a, b).unwrap();
                    let ba = d.check_dominates(b, a).unwrap();
                    if a != b {
                        prop_assert!(!(ab && ba));
                    }
                    for c in &names {
                        if ab && d.check_dominates(b, c).unwrap() {
                            prop_assert!(d.check_dominates(a, c).unwrap());
                        }
                    }
                }
            }
        }
    }
}
