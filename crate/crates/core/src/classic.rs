//! Reference decoders: flooding sum-product belief propagation and hard-decision
//! bit flipping.
//!
//! Messages use the crate-wide LLR sign (`ln P(1)/P(0)`). The tanh rule is
//! stated for `ln P(0)/P(1)`, so the check-node update negates on the way in and
//! out of `atanh`.

use crate::error::{contract, Result};
use crate::modem::{clamp_llr, hard_decision, LLR_CLAMP};
use crate::tanner::TannerGraph;

/// Largest tanh-product magnitude fed to `atanh`.
const TANH_PRODUCT_LIMIT: f64 = 1.0 - 1e-12;

/// Per-edge BP state. Dimensions equal the graph's edge count.
#[derive(Debug, Clone, PartialEq)]
pub struct BpWorkspace {
    /// Variable-to-check messages of the latest iteration.
    pub v2c: Vec<f64>,
    /// Check-to-variable messages of the latest iteration.
    pub c2v: Vec<f64>,
    /// Iterations run so far.
    pub iters: usize,
}

/// Result of a BP decode.
#[derive(Debug, Clone, PartialEq)]
pub struct BpOutput {
    /// A-posteriori LLRs: channel LLR plus all incoming check messages.
    pub llrs: Vec<f64>,
    pub hard: Vec<u8>,
    /// Iterations actually run.
    pub iters: usize,
}

impl BpWorkspace {
    pub fn new(graph: &TannerGraph) -> Self {
        BpWorkspace {
            v2c: vec![0.0; graph.num_edges()],
            c2v: vec![0.0; graph.num_edges()],
            iters: 0,
        }
    }

    /// One flooding iteration: all VN-to-CN messages, then all CN-to-VN messages.
    pub fn iterate(&mut self, graph: &TannerGraph, llrs: &[f64]) {
        for (vn, &l) in llrs.iter().enumerate() {
            let edges = graph.vn_edges(vn);
            let total: f64 = l + edges.iter().map(|&e| self.c2v[e]).sum::<f64>();
            for &e in edges {
                self.v2c[e] = clamp_llr(total - self.c2v[e]);
            }
        }
        let mut tanhs: Vec<f64> = Vec::new();
        let mut suffix: Vec<f64> = Vec::new();
        for cn in 0..graph.num_cn() {
            let edges = graph.cn_edges(cn);
            tanhs.clear();
            tanhs.extend(edges.iter().map(|&e| (-0.5 * self.v2c[e]).tanh()));
            // exclusive products via prefix/suffix scans, robust to zero factors
            suffix.clear();
            suffix.resize(edges.len() + 1, 1.0);
            for i in (0..edges.len()).rev() {
                suffix[i] = suffix[i + 1] * tanhs[i];
            }
            let mut prefix = 1.0;
            for (i, &e) in edges.iter().enumerate() {
                let p = (prefix * suffix[i + 1]).clamp(-TANH_PRODUCT_LIMIT, TANH_PRODUCT_LIMIT);
                self.c2v[e] = clamp_llr(-2.0 * p.atanh());
                prefix *= tanhs[i];
            }
        }
        self.iters += 1;
    }

    /// Output LLRs for the current messages.
    pub fn posterior(&self, graph: &TannerGraph, llrs: &[f64]) -> Vec<f64> {
        llrs.iter()
            .enumerate()
            .map(|(vn, &l)| l + graph.vn_edges(vn).iter().map(|&e| self.c2v[e]).sum::<f64>())
            .collect()
    }

    /// Runs up to `iters` further iterations. With `early_stop`, stops as soon as
    /// the hard decision satisfies every check.
    pub fn run(&mut self, graph: &TannerGraph, llrs: &[f64], iters: usize, early_stop: bool) -> Result<BpOutput> {
        check_len(graph, llrs)?;
        if self.c2v.len() != graph.num_edges() || self.v2c.len() != graph.num_edges() {
            return Err(contract("workspace does not match the graph"));
        }
        let start = self.iters;
        for _ in 0..iters {
            self.iterate(graph, llrs);
            if early_stop && graph.satisfied(&hard_decision(&self.posterior(graph, llrs))) {
                break;
            }
        }
        let post = self.posterior(graph, llrs);
        Ok(BpOutput {
            hard: hard_decision(&post),
            llrs: post,
            iters: self.iters - start,
        })
    }
}

fn check_len(graph: &TannerGraph, llrs: &[f64]) -> Result<()> {
    if llrs.len() != graph.num_vn() {
        return Err(contract(format!(
            "{} LLRs for a graph with {} variable nodes",
            llrs.len(),
            graph.num_vn()
        )));
    }
    Ok(())
}

/// Flooding sum-product decoding for a fixed number of iterations.
///
/// Input LLRs are clamped to the modem's bound before use.
pub fn bp_decode(graph: &TannerGraph, llrs: &[f64], iters: usize) -> Result<BpOutput> {
    bp_decode_with(graph, llrs, iters, false)
}

/// As [`bp_decode`], optionally stopping early on a zero syndrome.
pub fn bp_decode_with(graph: &TannerGraph, llrs: &[f64], iters: usize, early_stop: bool) -> Result<BpOutput> {
    if iters == 0 {
        return Err(contract("BP needs at least one iteration"));
    }
    let clamped: Vec<f64> = llrs.iter().map(|&l| l.clamp(-LLR_CLAMP, LLR_CLAMP)).collect();
    BpWorkspace::new(graph).run(graph, &clamped, iters, early_stop)
}

/// Hard decisions refined by bit flipping.
///
/// Each iteration considers the bits for which more than half of the incident
/// checks are unsatisfied (the Gallager-B majority condition) and flips those
/// with the largest margin `unsatisfied - satisfied`. Stops at a zero syndrome,
/// when no bit qualifies, or after `max_iters` iterations.
pub fn conventional_decode(graph: &TannerGraph, llrs: &[f64], max_iters: usize) -> Result<Vec<u8>> {
    check_len(graph, llrs)?;
    let mut bits = hard_decision(llrs);
    let mut unsat = vec![false; graph.num_cn()];
    for _ in 0..max_iters {
        let mut any = false;
        for (cn, u) in unsat.iter_mut().enumerate() {
            *u = graph.cn_edges(cn).iter().fold(0u8, |acc, &e| acc ^ bits[graph.edge(e).0]) == 1;
            any |= *u;
        }
        if !any {
            break;
        }
        let margins: Vec<isize> = (0..graph.num_vn())
            .map(|vn| {
                let edges = graph.vn_edges(vn);
                let bad = edges.iter().filter(|&&e| unsat[graph.edge(e).1]).count();
                if 2 * bad > edges.len() {
                    2 * bad as isize - edges.len() as isize
                } else {
                    0
                }
            })
            .collect();
        let best = margins.iter().copied().max().unwrap_or(0);
        if best <= 0 {
            break;
        }
        for (b, &m) in bits.iter_mut().zip(&margins) {
            if m == best {
                *b ^= 1;
            }
        }
    }
    Ok(bits)
}

/// Syndrome of the hard decisions under the graph's checks.
pub fn graph_syndrome(graph: &TannerGraph, bits: &[u8]) -> Vec<u8> {
    (0..graph.num_cn())
        .map(|cn| graph.cn_edges(cn).iter().fold(0u8, |acc, &e| acc ^ bits[graph.edge(e).0]))
        .collect()
}
