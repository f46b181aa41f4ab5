//! Tanner graph shared by the message-passing decoders.

use crate::codec::ParityCheckMatrix;

/// Bipartite graph with one variable node per column and one check node per row.
///
/// Edges are sorted by `(cn, vn)`; every per-edge message buffer in the
/// decoders is indexed by this ordering.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TannerGraph {
    num_vn: usize,
    num_cn: usize,
    edge_vn: Vec<usize>,
    edge_cn: Vec<usize>,
    vn_edges: Vec<Vec<usize>>,
    cn_edges: Vec<Vec<usize>>,
}

impl TannerGraph {
    pub fn from_parity_check(h: &ParityCheckMatrix) -> Self {
        let mut edge_vn = Vec::with_capacity(h.ones());
        let mut edge_cn = Vec::with_capacity(h.ones());
        let mut vn_edges = vec![Vec::new(); h.cols()];
        let mut cn_edges = vec![Vec::new(); h.rows()];
        for cn in 0..h.rows() {
            for &vn in h.row(cn) {
                let e = edge_vn.len();
                edge_vn.push(vn);
                edge_cn.push(cn);
                vn_edges[vn].push(e);
                cn_edges[cn].push(e);
            }
        }
        TannerGraph {
            num_vn: h.cols(),
            num_cn: h.rows(),
            edge_vn,
            edge_cn,
            vn_edges,
            cn_edges,
        }
    }

    pub fn num_vn(&self) -> usize {
        self.num_vn
    }

    pub fn num_cn(&self) -> usize {
        self.num_cn
    }

    pub fn num_edges(&self) -> usize {
        self.edge_vn.len()
    }

    /// `(vn, cn)` endpoints of edge `e`.
    pub fn edge(&self, e: usize) -> (usize, usize) {
        (self.edge_vn[e], self.edge_cn[e])
    }

    /// Variable-node endpoint of every edge.
    pub fn edge_vns(&self) -> &[usize] {
        &self.edge_vn
    }

    /// Check-node endpoint of every edge.
    pub fn edge_cns(&self) -> &[usize] {
        &self.edge_cn
    }

    pub fn vn_edges(&self, vn: usize) -> &[usize] {
        &self.vn_edges[vn]
    }

    pub fn cn_edges(&self, cn: usize) -> &[usize] {
        &self.cn_edges[cn]
    }

    pub fn vn_degree(&self, vn: usize) -> usize {
        self.vn_edges[vn].len()
    }

    pub fn cn_degree(&self, cn: usize) -> usize {
        self.cn_edges[cn].len()
    }

    /// True when the parity checks are all satisfied by `bits`.
    pub fn satisfied(&self, bits: &[u8]) -> bool {
        self.cn_edges
            .iter()
            .all(|edges| edges.iter().fold(0u8, |acc, &e| acc ^ bits[self.edge_vn[e]]) == 0)
    }
}
