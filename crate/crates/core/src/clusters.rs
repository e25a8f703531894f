//! Connected components of a configuration (union by rank, path compression).

use crate::error::{Error, Result};
use crate::lattice::BoxLattice;
use crate::sampler::Configuration;

/// Disjoint-set forest over the vertices of a box.
#[derive(Clone, Debug)]
pub struct ClusterForest {
    lattice: BoxLattice,
    parent: Vec<u32>,
    rank: Vec<u8>,
    /// Valid at roots only.
    size: Vec<u32>,
    components: usize,
}

/// Cluster sizes of one forest.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClusterStats {
    pub origin_size: usize,
    /// Ascending.
    pub sizes: Vec<usize>,
    pub largest: usize,
}

impl ClusterForest {
    pub fn singletons(lattice: BoxLattice) -> Self {
        let v = lattice.vertex_count();
        ClusterForest {
            lattice,
            parent: (0..v as u32).collect(),
            rank: vec![0; v],
            size: vec![1; v],
            components: v,
        }
    }

    pub fn lattice(&self) -> &BoxLattice {
        &self.lattice
    }

    pub fn vertex_count(&self) -> usize {
        self.parent.len()
    }

    pub fn component_count(&self) -> usize {
        self.components
    }

    pub fn find(&mut self, x: usize) -> usize {
        let mut root = x;
        while self.parent[root] as usize != root {
            root = self.parent[root] as usize;
        }
        let mut cur = x;
        while self.parent[cur] as usize != root {
            let next = self.parent[cur] as usize;
            self.parent[cur] = root as u32;
            cur = next;
        }
        root
    }

    /// Root without compressing; read-only.
    #[inline]
    pub fn root(&self, x: usize) -> usize {
        let mut r = x;
        while self.parent[r] as usize != r {
            r = self.parent[r] as usize;
        }
        r
    }

    /// Joins the clusters of `a` and `b`; returns whether they were distinct.
    pub fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        let (big, small) = match self.rank[ra].cmp(&self.rank[rb]) {
            std::cmp::Ordering::Less => (rb, ra),
            std::cmp::Ordering::Greater => (ra, rb),
            std::cmp::Ordering::Equal => {
                self.rank[ra] += 1;
                (ra, rb)
            }
        };
        self.parent[small] = big as u32;
        self.size[big] += self.size[small];
        self.components -= 1;
        true
    }

    /// Points every vertex directly at its root.
    pub fn compress(&mut self) {
        for x in 0..self.parent.len() {
            self.find(x);
        }
    }

    fn check(&self, x: usize) -> Result<()> {
        if x >= self.parent.len() {
            return Err(Error::VertexOutOfRange {
                index: x,
                count: self.parent.len(),
            });
        }
        Ok(())
    }

    pub fn connected(&self, x: usize, y: usize) -> Result<bool> {
        self.check(x)?;
        self.check(y)?;
        Ok(self.root(x) == self.root(y))
    }

    /// Connectivity by lattice coordinates.
    pub fn connected_sites(&self, x: &[i64], y: &[i64]) -> Result<bool> {
        let count = self.parent.len();
        let ix = self.lattice.index_of(x).ok_or(Error::VertexOutOfRange { index: usize::MAX, count })?;
        let iy = self.lattice.index_of(y).ok_or(Error::VertexOutOfRange { index: usize::MAX, count })?;
        self.connected(ix, iy)
    }

    /// Size of the cluster containing `x`.
    #[inline]
    pub fn cluster_size(&self, x: usize) -> usize {
        self.size[self.root(x)] as usize
    }

    /// Size stored at a root; meaningless for non-roots.
    #[inline]
    pub(crate) fn root_size(&self, root: usize) -> usize {
        self.size[root] as usize
    }

    pub fn largest_cluster(&self) -> usize {
        (0..self.parent.len())
            .filter(|&x| self.parent[x] as usize == x)
            .map(|r| self.size[r] as usize)
            .max()
            .unwrap_or(0)
    }

    pub fn cluster_statistics(&self) -> ClusterStats {
        let mut sizes: Vec<usize> = (0..self.parent.len())
            .filter(|&x| self.parent[x] as usize == x)
            .map(|r| self.size[r] as usize)
            .collect();
        sizes.sort_unstable();
        ClusterStats {
            origin_size: self.cluster_size(self.lattice.origin()),
            largest: sizes.last().copied().unwrap_or(0),
            sizes,
        }
    }
}

/// Components generated by the open edges; returned fully compressed.
pub fn build_clusters(config: &Configuration) -> ClusterForest {
    let mut forest = ClusterForest::singletons(config.lattice);
    for &(a, b) in &config.open_edges {
        forest.union(a as usize, b as usize);
    }
    forest.compress();
    forest
}

pub fn connected(forest: &ClusterForest, x: usize, y: usize) -> Result<bool> {
    forest.connected(x, y)
}

pub fn cluster_statistics(forest: &ClusterForest) -> ClusterStats {
    forest.cluster_statistics()
}
