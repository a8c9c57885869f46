use serde::{Deserialize, Serialize};

use super::EnvError;

/// Distribution network graph. Node 0 is the shared energy source; users are
/// nodes `1..=node_count`.
///
/// Edges are validated but carry no physics: the simulator only needs every
/// user to be connected to the source.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Topology {
    node_count: usize,
    edges: Vec<(usize, usize)>,
}

impl Topology {
    pub fn new(node_count: usize, edges: Vec<(usize, usize)>) -> Result<Self, EnvError> {
        if node_count == 0 {
            return Err(EnvError::Topology("at least one user node is required".into()));
        }
        for &(u, v) in &edges {
            if u > node_count || v > node_count {
                return Err(EnvError::Topology(format!(
                    "edge ({u}, {v}) references a node outside 0..={node_count}"
                )));
            }
        }

        // Union-find over nodes 0..=N.
        let mut parent: Vec<usize> = (0..=node_count).collect();
        fn find(parent: &mut [usize], mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        for &(u, v) in &edges {
            let (ru, rv) = (find(&mut parent, u), find(&mut parent, v));
            if ru != rv {
                parent[ru] = rv;
            }
        }
        let root = find(&mut parent, 0);
        if let Some(node) = (1..=node_count).find(|&n| find(&mut parent, n) != root) {
            return Err(EnvError::Topology(format!(
                "user node {node} has no path to the source node 0"
            )));
        }

        Ok(Self { node_count, edges })
    }

    /// Every user wired directly to the source.
    pub fn star(node_count: usize) -> Result<Self, EnvError> {
        Self::new(node_count, (1..=node_count).map(|n| (0, n)).collect())
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn star_is_connected() {
        let t = Topology::star(4).unwrap();
        assert_eq!(t.node_count(), 4);
        assert_eq!(t.edges().len(), 4);
    }

    #[test]
    fn chain_through_users_is_connected() {
        assert!(Topology::new(3, vec![(0, 1), (1, 2), (2, 3)]).is_ok());
    }

    #[test]
    fn disconnected_user_rejected() {
        let err = Topology::new(3, vec![(0, 1), (2, 3)]).unwrap_err();
        assert!(err.to_string().contains("node 2"));
    }

    #[test]
    fn out_of_range_edge_rejected() {
        assert!(Topology::new(2, vec![(0, 1), (0, 3)]).is_err());
    }
}
