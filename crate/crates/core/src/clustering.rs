//! Geometric cluster trees and admissible block partitions.

use std::ops::Range;

use serde::Serialize;
use thiserror::Error;

use crate::mesh::{SurfaceMesh, Vec3};

#[derive(Debug, Error, PartialEq)]
pub enum ClusterError {
    #[error("leaf size bound n_min must be at least 1")]
    InvalidLeafSize,
    #[error("cannot cluster an empty index set")]
    EmptyIndexSet,
    #[error("index {0} is out of range")]
    IndexOutOfRange(usize),
}

/// Axis-parallel box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundingBox {
    pub min: Vec3,
    pub max: Vec3,
}

impl BoundingBox {
    pub fn new(min: Vec3, max: Vec3) -> Self {
        Self { min, max }
    }

    pub fn from_points<'a>(points: impl IntoIterator<Item = &'a Vec3>) -> Self {
        let mut min = Vec3::repeat(f64::INFINITY);
        let mut max = Vec3::repeat(f64::NEG_INFINITY);
        for p in points {
            min = min.inf(p);
            max = max.sup(p);
        }
        Self { min, max }
    }

    pub fn union(&self, other: &Self) -> Self {
        Self {
            min: self.min.inf(&other.min),
            max: self.max.sup(&other.max),
        }
    }

    pub fn extent(&self) -> Vec3 {
        self.max - self.min
    }

    /// Euclidean length of the diagonal.
    pub fn diameter(&self) -> f64 {
        self.extent().norm()
    }

    /// Euclidean distance between the closest points of the two boxes.
    pub fn distance(&self, other: &Self) -> f64 {
        let mut d2 = 0.0;
        for a in 0..3 {
            let gap = (other.min[a] - self.max[a]).max(self.min[a] - other.max[a]);
            if gap > 0.0 {
                d2 += gap * gap;
            }
        }
        d2.sqrt()
    }

    pub fn contains(&self, p: &Vec3, tol: f64) -> bool {
        (0..3).all(|a| p[a] >= self.min[a] - tol && p[a] <= self.max[a] + tol)
    }

    pub fn contains_box(&self, other: &Self) -> bool {
        (0..3).all(|a| other.min[a] >= self.min[a] && other.max[a] <= self.max[a])
    }

    pub fn longest_axis(&self) -> usize {
        let e = self.extent();
        if e.x >= e.y && e.x >= e.z {
            0
        } else if e.y >= e.z {
            1
        } else {
            2
        }
    }
}

/// Bounding-box admissibility: `max(diam B_r, diam B_c) <= eta * dist(B_r, B_c)`.
/// Touching boxes are never admissible.
pub fn admissible(row: &BoundingBox, col: &BoundingBox, eta: f64) -> bool {
    let dist = row.distance(col);
    dist > 0.0 && row.diameter().max(col.diameter()) <= eta * dist
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterNode {
    /// Positions in [`ClusterTree::permutation`] owned by this cluster.
    pub range: Range<usize>,
    pub bbox: BoundingBox,
    pub sons: Vec<usize>,
    pub parent: Option<usize>,
    pub level: usize,
}

impl ClusterNode {
    pub fn len(&self) -> usize {
        self.range.len()
    }

    pub fn is_empty(&self) -> bool {
        self.range.is_empty()
    }

    pub fn is_leaf(&self) -> bool {
        self.sons.is_empty()
    }
}

/// Binary cluster tree stored as an arena; node 0 is the root.
/// Sons always follow their father, so a forward sweep is top-down.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterTree {
    nodes: Vec<ClusterNode>,
    permutation: Vec<usize>,
    n_min: usize,
}

impl ClusterTree {
    /// Clusters the panels `index_set` of `mesh`. Splitting uses panel
    /// centroids; boxes are tight around the panel vertices.
    pub fn build(mesh: &SurfaceMesh, index_set: &[usize], n_min: usize) -> Result<Self, ClusterError> {
        if let Some(&bad) = index_set.iter().find(|&&i| i >= mesh.len()) {
            return Err(ClusterError::IndexOutOfRange(bad));
        }
        let boxes: Vec<BoundingBox> = index_set
            .iter()
            .map(|&i| BoundingBox::from_points(&mesh.corners(i)))
            .collect();
        let centroids: Vec<Vec3> = index_set.iter().map(|&i| mesh.centroids()[i]).collect();
        let mut tree = Self::from_items(&centroids, &boxes, n_min)?;
        for p in &mut tree.permutation {
            *p = index_set[*p];
        }
        Ok(tree)
    }

    /// Clusters all panels of the mesh.
    pub fn for_mesh(mesh: &SurfaceMesh, n_min: usize) -> Result<Self, ClusterError> {
        let all: Vec<usize> = (0..mesh.len()).collect();
        Self::build(mesh, &all, n_min)
    }

    /// Clusters abstract items given by a split point and a support box each.
    pub fn from_items(centres: &[Vec3], supports: &[BoundingBox], n_min: usize) -> Result<Self, ClusterError> {
        if n_min < 1 {
            return Err(ClusterError::InvalidLeafSize);
        }
        if centres.is_empty() {
            return Err(ClusterError::EmptyIndexSet);
        }
        assert_eq!(centres.len(), supports.len());
        let mut tree = Self {
            nodes: Vec::new(),
            permutation: (0..centres.len()).collect(),
            n_min,
        };
        tree.split(0..centres.len(), None, 0, centres, supports);
        Ok(tree)
    }

    fn split(
        &mut self,
        range: Range<usize>,
        parent: Option<usize>,
        level: usize,
        centres: &[Vec3],
        supports: &[BoundingBox],
    ) -> usize {
        let bbox = self.permutation[range.clone()]
            .iter()
            .map(|&i| supports[i])
            .reduce(|a, b| a.union(&b))
            .expect("non-empty cluster");
        let id = self.nodes.len();
        self.nodes.push(ClusterNode {
            range: range.clone(),
            bbox,
            sons: Vec::new(),
            parent,
            level,
        });
        if range.len() <= self.n_min {
            return id;
        }

        let axis = bbox.longest_axis();
        let mid = 0.5 * (bbox.min[axis] + bbox.max[axis]);
        let slice = &mut self.permutation[range.clone()];
        let mut left = 0;
        for k in 0..slice.len() {
            if centres[slice[k]][axis] < mid {
                slice.swap(left, k);
                left += 1;
            }
        }
        if left == 0 || left == slice.len() {
            // midpoint split failed; fall back to a median split
            slice.sort_by(|&a, &b| {
                centres[a][axis]
                    .total_cmp(&centres[b][axis])
                    .then(a.cmp(&b))
            });
            left = slice.len() / 2;
        }

        let split_at = range.start + left;
        let first = self.split(range.start..split_at, Some(id), level + 1, centres, supports);
        let second = self.split(split_at..range.end, Some(id), level + 1, centres, supports);
        self.nodes[id].sons = vec![first, second];
        id
    }

    pub fn root(&self) -> usize {
        0
    }

    pub fn node(&self, id: usize) -> &ClusterNode {
        &self.nodes[id]
    }

    pub fn nodes(&self) -> &[ClusterNode] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn n_min(&self) -> usize {
        self.n_min
    }

    /// Maps tree positions to original indices.
    pub fn permutation(&self) -> &[usize] {
        &self.permutation
    }

    /// Original indices held by a cluster.
    pub fn indices(&self, id: usize) -> &[usize] {
        &self.permutation[self.nodes[id].range.clone()]
    }

    pub fn leaves(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.nodes.len()).filter(|&i| self.nodes[i].is_leaf())
    }

    pub fn depth(&self) -> usize {
        self.nodes.iter().map(|n| n.level).max().unwrap_or(0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct Block {
    pub row: usize,
    pub col: usize,
    pub admissible: bool,
}

/// Leaves of the block cluster tree: a disjoint cover of `I x J` by
/// admissible (far) and small (near) blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockPartition {
    blocks: Vec<Block>,
    eta: f64,
    /// Number of block-tree nodes each row cluster takes part in.
    row_counts: Vec<usize>,
    col_counts: Vec<usize>,
    depth: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct PartitionStats {
    pub blocks: usize,
    pub near_blocks: usize,
    pub far_blocks: usize,
    pub near_entries: usize,
    pub far_entries: usize,
    pub block_tree_depth: usize,
    pub cluster_tree_depth: usize,
    pub clusters: usize,
    pub leaf_clusters: usize,
    pub sparsity: usize,
}

impl BlockPartition {
    pub fn build(rows: &ClusterTree, cols: &ClusterTree, eta: f64) -> Self {
        let mut partition = Self {
            blocks: Vec::new(),
            eta,
            row_counts: vec![0; rows.len()],
            col_counts: vec![0; cols.len()],
            depth: 0,
        };
        partition.descend(rows, cols, rows.root(), cols.root(), 0);
        partition
    }

    fn descend(&mut self, rows: &ClusterTree, cols: &ClusterTree, r: usize, c: usize, level: usize) {
        self.row_counts[r] += 1;
        self.col_counts[c] += 1;
        self.depth = self.depth.max(level);
        let (rn, cn) = (rows.node(r), cols.node(c));
        if admissible(&rn.bbox, &cn.bbox, self.eta) {
            self.blocks.push(Block {
                row: r,
                col: c,
                admissible: true,
            });
            return;
        }
        match (rn.is_leaf(), cn.is_leaf()) {
            (true, true) => self.blocks.push(Block {
                row: r,
                col: c,
                admissible: false,
            }),
            (false, true) => {
                for &rs in &rn.sons {
                    self.descend(rows, cols, rs, c, level + 1);
                }
            }
            (true, false) => {
                for &cs in &cn.sons {
                    self.descend(rows, cols, r, cs, level + 1);
                }
            }
            (false, false) => {
                for &rs in &rn.sons {
                    for &cs in &cn.sons {
                        self.descend(rows, cols, rs, cs, level + 1);
                    }
                }
            }
        }
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    /// Marks admissible blocks matching `pred` as inadmissible and returns
    /// how many changed.
    pub fn demote(&mut self, pred: impl Fn(&Block) -> bool) -> usize {
        let mut count = 0;
        for b in self.blocks.iter_mut().filter(|b| b.admissible) {
            if pred(b) {
                b.admissible = false;
                count += 1;
            }
        }
        count
    }

    pub fn near(&self) -> impl Iterator<Item = &Block> {
        self.blocks.iter().filter(|b| !b.admissible)
    }

    pub fn far(&self) -> impl Iterator<Item = &Block> {
        self.blocks.iter().filter(|b| b.admissible)
    }

    /// Sparsity constant: the largest number of block-tree nodes any
    /// single row or column cluster participates in.
    pub fn sparsity(&self) -> usize {
        self.row_counts
            .iter()
            .chain(&self.col_counts)
            .copied()
            .max()
            .unwrap_or(0)
    }

    pub fn stats(&self, rows: &ClusterTree, cols: &ClusterTree) -> PartitionStats {
        let size = |b: &Block| rows.node(b.row).len() * cols.node(b.col).len();
        PartitionStats {
            blocks: self.blocks.len(),
            near_blocks: self.near().count(),
            far_blocks: self.far().count(),
            near_entries: self.near().map(size).sum(),
            far_entries: self.far().map(size).sum(),
            block_tree_depth: self.depth,
            cluster_tree_depth: rows.depth().max(cols.depth()),
            clusters: rows.len(),
            leaf_clusters: rows.leaves().count(),
            sparsity: self.sparsity(),
        }
    }
}
