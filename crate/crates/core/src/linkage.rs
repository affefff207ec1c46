//! Linkage learning over HTTP actions.
//!
//! Tests are encoded as action-membership bit vectors; pairwise mutual information
//! between actions (over the fittest tests) is turned into a distance and clustered
//! with UPGMA. The internal nodes of the resulting tree, minus the root, form the
//! family of subsets used by linkage-based recombination.

use serde::Serialize;
use thiserror::Error;

use crate::api_model::TestCase;

#[derive(Debug, Error, PartialEq)]
pub enum LinkageError {
    #[error("linkage model unavailable: need at least 2 tests and 2 actions (got {tests} tests, {actions} actions)")]
    ModelUnavailable { tests: usize, actions: usize },
}

/// Action-membership bits of one test: `bits[i]` is set iff action `i` occurs in it.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct EncodedTest {
    pub bits: Vec<bool>,
}

impl EncodedTest {
    pub fn contains_all(&self, subset: &[usize]) -> bool {
        subset
            .iter()
            .all(|&i| self.bits.get(i).copied().unwrap_or(false))
    }
}

pub fn encode(test: &TestCase, catalog_len: usize) -> EncodedTest {
    let mut bits = vec![false; catalog_len];
    for a in test.actions() {
        bits[a] = true;
    }
    EncodedTest { bits }
}

fn plogp(count: usize, total: usize) -> f64 {
    if count == 0 {
        return 0.0;
    }
    let p = count as f64 / total as f64;
    -p * p.log2()
}

/// Shannon entropy (bits) of a binary column.
pub fn entropy(column: &[bool]) -> f64 {
    assert!(!column.is_empty(), "entropy of an empty column");
    let ones = column.iter().filter(|&&b| b).count();
    plogp(ones, column.len()) + plogp(column.len() - ones, column.len())
}

fn joint_entropy(a: &[bool], b: &[bool]) -> f64 {
    let mut counts = [0usize; 4];
    for (&x, &y) in a.iter().zip(b) {
        counts[(x as usize) << 1 | y as usize] += 1;
    }
    let n = a.len();
    // fixed summation order that does not depend on argument order
    let (lo, hi) = if counts[1] <= counts[2] {
        (counts[1], counts[2])
    } else {
        (counts[2], counts[1])
    };
    plogp(counts[0], n) + plogp(counts[3], n) + plogp(lo, n) + plogp(hi, n)
}

/// `H(a) + H(b) - H(a, b)`, clamped at zero.
pub fn mutual_information(a: &[bool], b: &[bool]) -> f64 {
    assert_eq!(a.len(), b.len(), "columns of different length");
    assert!(!a.is_empty(), "mutual information of empty columns");
    (entropy(a) + entropy(b) - joint_entropy(a, b)).max(0.0)
}

/// `D(i, j) = 1 - MI(i, j) / max MI`, or uniform distance 1 when no pair shares information.
pub fn distance_matrix(front: &[EncodedTest]) -> Vec<Vec<f64>> {
    let n = front.first().map_or(0, |e| e.bits.len());
    let columns: Vec<Vec<bool>> = (0..n)
        .map(|i| front.iter().map(|e| e.bits[i]).collect())
        .collect();
    let mut mi = vec![vec![0.0; n]; n];
    let mut max_mi: f64 = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            let v = mutual_information(&columns[i], &columns[j]);
            mi[i][j] = v;
            mi[j][i] = v;
            max_mi = max_mi.max(v);
        }
    }
    (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    if i == j {
                        0.0
                    } else if max_mi > 0.0 {
                        1.0 - mi[i][j] / max_mi
                    } else {
                        1.0
                    }
                })
                .collect()
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LinkageNode {
    /// Sorted action indices under this node.
    pub members: Vec<usize>,
    /// Average-linkage distance at which the children were merged; 0 for leaves.
    pub height: f64,
    /// Node indices of the two children, the one holding the smaller action index first.
    pub children: Option<(usize, usize)>,
}

/// A binary dendrogram: nodes `0..N` are the leaves, then `N - 1` merges in order; the last node is the root.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LinkageTree {
    pub nodes: Vec<LinkageNode>,
}

impl LinkageTree {
    pub fn leaf_count(&self) -> usize {
        (self.nodes.len() + 1) / 2
    }

    pub fn root(&self) -> &LinkageNode {
        self.nodes.last().expect("tree has at least one node")
    }

    pub fn internal_nodes(&self) -> &[LinkageNode] {
        &self.nodes[self.leaf_count()..]
    }

    /// Nested `{members, height, children}` JSON document rooted at the root node.
    pub fn to_json(&self) -> serde_json::Value {
        fn node(tree: &LinkageTree, i: usize) -> serde_json::Value {
            let n = &tree.nodes[i];
            let mut obj = serde_json::json!({ "members": n.members, "height": n.height });
            if let Some((l, r)) = n.children {
                obj["children"] = serde_json::json!([node(tree, l), node(tree, r)]);
            }
            obj
        }
        node(self, self.nodes.len() - 1)
    }

    /// Checks the structural invariants of a dendrogram over `0..N`.
    pub fn check_invariants(&self) -> Result<(), String> {
        let n = self.leaf_count();
        if self.nodes.len() != 2 * n - 1 {
            return Err(format!("{} nodes for {n} leaves", self.nodes.len()));
        }
        for (i, leaf) in self.nodes[..n].iter().enumerate() {
            if leaf.members != [i] || leaf.children.is_some() {
                return Err(format!("leaf {i} is malformed"));
            }
        }
        let mut prev = f64::NEG_INFINITY;
        for (k, node) in self.nodes[n..].iter().enumerate() {
            let (l, r) = node
                .children
                .ok_or(format!("internal node {k} has no children"))?;
            if l >= n + k || r >= n + k {
                return Err(format!("internal node {k} refers forward"));
            }
            let (a, b) = (&self.nodes[l].members, &self.nodes[r].members);
            if a.iter().any(|x| b.contains(x)) {
                return Err(format!("children of node {k} overlap"));
            }
            let mut union: Vec<usize> = a.iter().chain(b).copied().collect();
            union.sort_unstable();
            if union != node.members {
                return Err(format!("node {k} is not the union of its children"));
            }
            if node.height < prev {
                return Err(format!("height decreases at node {k}"));
            }
            prev = node.height;
        }
        if self.root().members != (0..n).collect::<Vec<_>>() {
            return Err("root does not span all actions".into());
        }
        Ok(())
    }
}

struct Cluster {
    node: usize,
    members: Vec<usize>,
}

/// Average-linkage agglomerative clustering of a symmetric distance matrix.
///
/// Cluster distances are kept as sums of member-pair distances and divided once when
/// compared. Among equally distant pairs, the pair with the lowest smaller
/// representative (minimum member) wins, then the lowest larger representative.
pub fn upgma(distances: &[Vec<f64>]) -> LinkageTree {
    let n = distances.len();
    assert!(n >= 1, "empty distance matrix");
    let mut nodes: Vec<LinkageNode> = (0..n)
        .map(|i| LinkageNode {
            members: vec![i],
            height: 0.0,
            children: None,
        })
        .collect();
    let mut clusters: Vec<Cluster> = (0..n)
        .map(|i| Cluster {
            node: i,
            members: vec![i],
        })
        .collect();
    // sums[a][b]: sum of pairwise distances between clusters a and b (indexed by slot)
    let mut sums: Vec<Vec<f64>> = distances.to_vec();

    while clusters.len() > 1 {
        let mut best: Option<(f64, (usize, usize), usize, usize)> = None;
        for a in 0..clusters.len() {
            for b in a + 1..clusters.len() {
                let size = (clusters[a].members.len() * clusters[b].members.len()) as f64;
                let d = sums[a][b] / size;
                let (ra, rb) = (clusters[a].members[0], clusters[b].members[0]);
                let key = (ra.min(rb), ra.max(rb));
                let better = match best {
                    None => true,
                    Some((bd, bkey, _, _)) => d < bd || (d == bd && key < bkey),
                };
                if better {
                    best = Some((d, key, a, b));
                }
            }
        }
        let (height, _, a, b) = best.expect("at least two clusters");
        // summing rounded distances can land an exact tie one ulp below the previous merge
        let height = nodes.last().map_or(height, |prev| height.max(prev.height));
        let (first, second) = if clusters[a].members[0] < clusters[b].members[0] {
            (a, b)
        } else {
            (b, a)
        };
        let mut members: Vec<usize> = clusters[a]
            .members
            .iter()
            .chain(&clusters[b].members)
            .copied()
            .collect();
        members.sort_unstable();
        nodes.push(LinkageNode {
            members: members.clone(),
            height,
            children: Some((clusters[first].node, clusters[second].node)),
        });
        // merged cluster takes slot a; slot b is removed
        for c in 0..clusters.len() {
            if c != a && c != b {
                let s = sums[a][c] + sums[b][c];
                sums[a][c] = s;
                sums[c][a] = s;
            }
        }
        clusters[a] = Cluster {
            node: nodes.len() - 1,
            members,
        };
        clusters.remove(b);
        sums.remove(b);
        for row in &mut sums {
            row.remove(b);
        }
    }
    LinkageTree { nodes }
}

/// Learns the linkage tree from the encoded fittest tests.
pub fn train_linkage_tree(front: &[EncodedTest]) -> Result<LinkageTree, LinkageError> {
    let actions = front.first().map_or(0, |e| e.bits.len());
    if front.len() < 2 || actions < 2 {
        return Err(LinkageError::ModelUnavailable {
            tests: front.len(),
            actions,
        });
    }
    Ok(upgma(&distance_matrix(front)))
}

/// Clusters of actions read off a linkage tree.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FamilyOfSubsets {
    pub subsets: Vec<Vec<usize>>,
}

/// Every internal node except the root; leaves are excluded.
pub fn extract_fos(tree: &LinkageTree) -> FamilyOfSubsets {
    let internal = tree.internal_nodes();
    let subsets = internal[..internal.len().saturating_sub(1)]
        .iter()
        .map(|n| n.members.clone())
        .collect();
    FamilyOfSubsets { subsets }
}

/// Subsets whose actions all occur in the donor.
pub fn donor_subsets<'a>(donor: &EncodedTest, fos: &'a FamilyOfSubsets) -> Vec<&'a [usize]> {
    fos.subsets
        .iter()
        .filter(|s| donor.contains_all(s))
        .map(Vec::as_slice)
        .collect()
}
