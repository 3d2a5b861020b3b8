use crate::error::{Result, SimError};

use super::OpKind;

/// Which of the two alternating buffer bindings a graph was captured with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    Even,
    Odd,
}

impl Variant {
    pub fn for_iteration(iter: u64) -> Self {
        if iter.is_multiple_of(2) {
            Variant::Even
        } else {
            Variant::Odd
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GraphNode {
    pub kind: OpKind,
    /// Indices of nodes that must finish first.
    pub deps: Vec<usize>,
}

/// A captured DAG of device ops. Nodes cannot be changed after capture.
#[derive(Debug, Clone, PartialEq)]
pub struct DeviceGraph {
    nodes: Vec<GraphNode>,
    children: Vec<Vec<usize>>,
    variant: Variant,
}

impl DeviceGraph {
    pub fn capture(nodes: Vec<GraphNode>, variant: Variant) -> Result<Self> {
        if nodes.is_empty() {
            return Err(SimError::config("cannot capture an empty graph"));
        }
        let n = nodes.len();
        let mut children = vec![Vec::new(); n];
        let mut indeg = vec![0usize; n];
        for (i, node) in nodes.iter().enumerate() {
            for &d in &node.deps {
                if d >= n {
                    return Err(SimError::config(format!(
                        "graph node {i} depends on missing node {d}"
                    )));
                }
                if d == i {
                    return Err(SimError::config(format!("graph node {i} depends on itself")));
                }
                children[d].push(i);
                indeg[i] += 1;
            }
        }
        // Kahn's algorithm: any node left unvisited lies on a cycle.
        let mut ready: Vec<usize> = (0..n).filter(|&i| indeg[i] == 0).collect();
        let mut seen = 0;
        while let Some(i) = ready.pop() {
            seen += 1;
            for &c in &children[i] {
                indeg[c] -= 1;
                if indeg[c] == 0 {
                    ready.push(c);
                }
            }
        }
        if seen != n {
            return Err(SimError::config("graph dependencies contain a cycle"));
        }
        Ok(DeviceGraph {
            nodes,
            children,
            variant,
        })
    }

    pub fn nodes(&self) -> &[GraphNode] {
        &self.nodes
    }

    pub(crate) fn children(&self, i: usize) -> &[usize] {
        &self.children[i]
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}
