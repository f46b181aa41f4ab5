//! Graph-neural-network decoder on the Tanner graph.
//!
//! Each round runs four learned updates, all two-layer ReLU MLPs:
//!
//! 1. VN-to-CN edge messages from `[w_v | w_f | a_e]`,
//! 2. CN features from `[w_f | mean of incoming messages]`,
//! 3. CN-to-VN edge messages from `[w_f | w_v | a_e]`,
//! 4. VN features from `[w_v | mean of incoming messages | l_v]`,
//!
//! where `a_e` is the channel LLR of the edge's variable node. VN features
//! start as a linear embedding of the channel LLR, CN features at zero, and a
//! linear readout maps each final VN feature to a logit in the crate's LLR
//! sign convention. LLRs enter the network divided by [`LLR_CLAMP`].
//!
//! Every MLP's first layer is applied blockwise: node-level blocks are
//! multiplied once per node and then gathered onto edges, which is the same
//! function as multiplying the concatenated edge input.

use rand::Rng;
use std::sync::Arc;

use crate::autodiff::{Mat, NodeId, ParamSet, Part, Segments, Tape, Tensor};
use crate::error::{contract, Result};
use crate::modem::{hard_decision, LLR_CLAMP};
use crate::tanner::TannerGraph;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GnnConfig {
    pub vn_dim: usize,
    pub cn_dim: usize,
    pub msg_dim: usize,
    pub hidden_dim: usize,
    pub iters: usize,
    pub share_weights_across_iters: bool,
}

impl Default for GnnConfig {
    fn default() -> Self {
        GnnConfig {
            vn_dim: 16,
            cn_dim: 16,
            msg_dim: 16,
            hidden_dim: 32,
            iters: 8,
            share_weights_across_iters: true,
        }
    }
}

impl GnnConfig {
    pub fn validate(&self) -> Result<()> {
        let dims = [self.vn_dim, self.cn_dim, self.msg_dim, self.hidden_dim, self.iters];
        if dims.contains(&0) {
            return Err(contract(format!("all GNN dimensions and iters must be >= 1: {self:?}")));
        }
        Ok(())
    }

    fn weight_sets(&self) -> usize {
        if self.share_weights_across_iters {
            1
        } else {
            self.iters
        }
    }

    /// `(name, rows, cols)` of every tensor, in storage order.
    pub fn tensor_shapes(&self) -> Vec<(String, usize, usize)> {
        let mut shapes = vec![
            ("embed_llr.w".to_string(), self.vn_dim, 1),
            ("embed_llr.b".to_string(), 1, self.vn_dim),
        ];
        let mlps = [
            ("mlp_v2c", self.vn_dim + self.cn_dim + 1, self.msg_dim),
            ("mlp_cn_update", self.cn_dim + self.msg_dim, self.cn_dim),
            ("mlp_c2v", self.cn_dim + self.vn_dim + 1, self.msg_dim),
            ("mlp_vn_update", self.vn_dim + self.msg_dim + 1, self.vn_dim),
        ];
        for set in 0..self.weight_sets() {
            let suffix = if self.share_weights_across_iters {
                String::new()
            } else {
                format!("@{set}")
            };
            for (name, input, output) in mlps {
                shapes.push((format!("{name}{suffix}.w1"), self.hidden_dim, input));
                shapes.push((format!("{name}{suffix}.b1"), 1, self.hidden_dim));
                shapes.push((format!("{name}{suffix}.w2"), output, self.hidden_dim));
                shapes.push((format!("{name}{suffix}.b2"), 1, output));
            }
        }
        shapes.push(("readout.w".to_string(), 1, self.vn_dim));
        shapes.push(("readout.b".to_string(), 1, 1));
        shapes
    }

    /// Number of scalar parameters; independent of the code.
    pub fn param_count(&self) -> usize {
        self.tensor_shapes().iter().map(|(_, r, c)| r * c).sum()
    }
}

/// Trainable tensors of the decoder.
#[derive(Debug, Clone, PartialEq)]
pub struct GnnParams {
    pub set: ParamSet,
}

impl GnnParams {
    pub fn zeros(cfg: &GnnConfig) -> Self {
        GnnParams {
            set: ParamSet {
                tensors: cfg
                    .tensor_shapes()
                    .into_iter()
                    .map(|(name, rows, cols)| Tensor {
                        name,
                        value: Mat::zeros(rows, cols),
                    })
                    .collect(),
            },
        }
    }

    /// Checks that the tensors match the configuration's names and shapes.
    pub fn check_shapes(&self, cfg: &GnnConfig) -> Result<()> {
        let shapes = cfg.tensor_shapes();
        if shapes.len() != self.set.len() {
            return Err(contract(format!(
                "expected {} tensors, found {}",
                shapes.len(),
                self.set.len()
            )));
        }
        for ((name, rows, cols), t) in shapes.iter().zip(&self.set.tensors) {
            if *name != t.name || *rows != t.value.rows || *cols != t.value.cols {
                return Err(contract(format!(
                    "tensor {} is {}x{}, expected {name} {rows}x{cols}",
                    t.name, t.value.rows, t.value.cols
                )));
            }
        }
        Ok(())
    }
}

/// Glorot-uniform weights, zero biases.
pub fn init_params<R: Rng + ?Sized>(cfg: &GnnConfig, rng: &mut R) -> GnnParams {
    let mut params = GnnParams::zeros(cfg);
    for t in &mut params.set.tensors {
        if t.name.ends_with(".b") || t.name.ends_with(".b1") || t.name.ends_with(".b2") {
            continue;
        }
        let (fan_out, fan_in) = (t.value.rows, t.value.cols);
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        for v in &mut t.value.data {
            *v = rng.random_range(-limit..=limit);
        }
    }
    params
}

#[derive(Debug, Clone, Copy)]
struct MlpIdx {
    w1: usize,
    b1: usize,
    w2: usize,
    b2: usize,
}

#[derive(Debug, Clone, Copy)]
struct RoundIdx {
    v2c: MlpIdx,
    cn: MlpIdx,
    c2v: MlpIdx,
    vn: MlpIdx,
}

/// Edge/node index lists for `batch` stacked copies of one graph.
#[derive(Debug, Clone)]
pub struct BatchIndex {
    batch: usize,
    num_vn: usize,
    edge_vn: Arc<Vec<usize>>,
    edge_cn: Arc<Vec<usize>>,
    cn_groups: Arc<Segments>,
    vn_groups: Arc<Segments>,
}

impl BatchIndex {
    pub fn new(graph: &TannerGraph, batch: usize) -> Self {
        let (n, m, e) = (graph.num_vn(), graph.num_cn(), graph.num_edges());
        let mut edge_vn = Vec::with_capacity(batch * e);
        let mut edge_cn = Vec::with_capacity(batch * e);
        for b in 0..batch {
            edge_vn.extend(graph.edge_vns().iter().map(|v| b * n + v));
            edge_cn.extend(graph.edge_cns().iter().map(|c| b * m + c));
        }
        let cn_groups = Segments::from_groups(
            (0..batch).flat_map(|b| (0..m).map(move |c| (b, c))).map(|(b, c)| {
                graph.cn_edges(c).iter().map(move |x| b * e + x).collect::<Vec<_>>()
            }),
        );
        let vn_groups = Segments::from_groups(
            (0..batch).flat_map(|b| (0..n).map(move |v| (b, v))).map(|(b, v)| {
                graph.vn_edges(v).iter().map(move |x| b * e + x).collect::<Vec<_>>()
            }),
        );
        BatchIndex {
            batch,
            num_vn: n,
            edge_vn: Arc::new(edge_vn),
            edge_cn: Arc::new(edge_cn),
            cn_groups: Arc::new(cn_groups),
            vn_groups: Arc::new(vn_groups),
        }
    }

    pub fn batch(&self) -> usize {
        self.batch
    }
}

/// Decoder with resolved parameter indices.
pub struct GnnModel<'a> {
    cfg: &'a GnnConfig,
    params: &'a GnnParams,
    embed_w: usize,
    embed_b: usize,
    readout_w: usize,
    readout_b: usize,
    rounds: Vec<RoundIdx>,
}

impl<'a> GnnModel<'a> {
    pub fn new(cfg: &'a GnnConfig, params: &'a GnnParams) -> Result<Self> {
        cfg.validate()?;
        params.check_shapes(cfg)?;
        let set = &params.set;
        let idx = |name: &str| set.index_of(name).expect("shape check guarantees names");
        let mlp = |base: &str| MlpIdx {
            w1: idx(&format!("{base}.w1")),
            b1: idx(&format!("{base}.b1")),
            w2: idx(&format!("{base}.w2")),
            b2: idx(&format!("{base}.b2")),
        };
        let rounds = (0..cfg.weight_sets())
            .map(|s| {
                let suffix = if cfg.share_weights_across_iters {
                    String::new()
                } else {
                    format!("@{s}")
                };
                RoundIdx {
                    v2c: mlp(&format!("mlp_v2c{suffix}")),
                    cn: mlp(&format!("mlp_cn_update{suffix}")),
                    c2v: mlp(&format!("mlp_c2v{suffix}")),
                    vn: mlp(&format!("mlp_vn_update{suffix}")),
                }
            })
            .collect();
        Ok(GnnModel {
            cfg,
            params,
            embed_w: idx("embed_llr.w"),
            embed_b: idx("embed_llr.b"),
            readout_w: idx("readout.w"),
            readout_b: idx("readout.b"),
            rounds,
        })
    }

    pub fn params(&self) -> &'a ParamSet {
        &self.params.set
    }

    /// Hidden ReLU layer then linear output, given the summed first-layer blocks.
    /// Hidden ReLU layer from the summed first-layer blocks, then the output layer.
    fn finish_mlp(&self, tape: &mut Tape<'a>, rows: usize, parts: Vec<Part>, mlp: MlpIdx) -> NodeId {
        let pre = tape.sum_gather(rows, parts, Some(mlp.b1));
        let h = tape.relu(pre);
        tape.linear(h, mlp.w2, mlp.b2)
    }

    /// Records the forward pass for a batch of LLR vectors laid out row after
    /// row in `llrs` (`index.batch() * n` values). Returns the `(batch * n) x 1`
    /// logit node.
    pub fn forward(&self, tape: &mut Tape<'a>, index: &BatchIndex, llrs: &[f64]) -> Result<NodeId> {
        let rounds = self.forward_rounds(tape, index, llrs, false)?;
        Ok(*rounds.last().expect("at least one round"))
    }

    /// As [`GnnModel::forward`], but with `every_round` set the readout is also
    /// applied after each intermediate round. The last entry is always the
    /// final logits.
    pub fn forward_rounds(
        &self,
        tape: &mut Tape<'a>,
        index: &BatchIndex,
        llrs: &[f64],
        every_round: bool,
    ) -> Result<Vec<NodeId>> {
        let rows = index.batch * index.num_vn;
        if llrs.len() != rows {
            return Err(contract(format!(
                "{} LLRs for a batch of {} words of {} bits",
                llrs.len(),
                index.batch,
                index.num_vn
            )));
        }
        let cfg = self.cfg;
        let scaled: Vec<f64> = llrs.iter().map(|l| l / LLR_CLAMP).collect();
        // The edge attribute is the scaled LLR of the edge's VN, so its
        // projection is taken per VN and gathered along with w_v.
        let llr_node = tape.input(Mat::from_vec(rows, 1, scaled));
        let num_cn_rows = index.cn_groups.len();
        let num_edges = index.edge_vn.len();
        let (evn, ecn) = (&index.edge_vn, &index.edge_cn);

        let mut w_v = tape.linear(llr_node, self.embed_w, self.embed_b);
        let mut w_f = tape.input(Mat::zeros(num_cn_rows, cfg.cn_dim));
        let mut outputs = Vec::with_capacity(if every_round { cfg.iters } else { 1 });

        for round in 0..cfg.iters {
            let p = self.rounds[if cfg.share_weights_across_iters { 0 } else { round }];

            // VN -> CN messages on [w_v | w_f | attr]
            let from_v = tape.matmul_block(w_v, p.v2c.w1, 0);
            let from_f = tape.matmul_block(w_f, p.v2c.w1, cfg.vn_dim);
            let from_a = tape.matmul_block(llr_node, p.v2c.w1, cfg.vn_dim + cfg.cn_dim);
            let parts = vec![Part::gathered(from_v, evn), Part::gathered(from_f, ecn), Part::gathered(from_a, evn)];
            let m_vc = self.finish_mlp(tape, num_edges, parts, p.v2c);

            // CN update on [w_f | mean]
            let agg = tape.segment_mean(m_vc, index.cn_groups.clone());
            let self_f = tape.matmul_block(w_f, p.cn.w1, 0);
            let from_m = tape.matmul_block(agg, p.cn.w1, cfg.cn_dim);
            w_f = self.finish_mlp(tape, num_cn_rows, vec![Part::rows(self_f), Part::rows(from_m)], p.cn);

            // CN -> VN messages on [w_f | w_v | attr]
            let from_f = tape.matmul_block(w_f, p.c2v.w1, 0);
            let from_v = tape.matmul_block(w_v, p.c2v.w1, cfg.cn_dim);
            let from_a = tape.matmul_block(llr_node, p.c2v.w1, cfg.cn_dim + cfg.vn_dim);
            let parts = vec![Part::gathered(from_f, ecn), Part::gathered(from_v, evn), Part::gathered(from_a, evn)];
            let m_cv = self.finish_mlp(tape, num_edges, parts, p.c2v);

            // VN update on [w_v | mean | l]
            let agg = tape.segment_mean(m_cv, index.vn_groups.clone());
            let self_v = tape.matmul_block(w_v, p.vn.w1, 0);
            let from_m = tape.matmul_block(agg, p.vn.w1, cfg.vn_dim);
            let from_l = tape.matmul_block(llr_node, p.vn.w1, cfg.vn_dim + cfg.msg_dim);
            let parts = vec![Part::rows(self_v), Part::rows(from_m), Part::rows(from_l)];
            w_v = self.finish_mlp(tape, rows, parts, p.vn);
            if every_round && round + 1 < cfg.iters {
                outputs.push(tape.linear(w_v, self.readout_w, self.readout_b));
            }
        }

        outputs.push(tape.linear(w_v, self.readout_w, self.readout_b));
        Ok(outputs)
    }

    /// Logits for a batch of LLR vectors (row after row).
    pub fn logits(&self, index: &BatchIndex, llrs: &[f64]) -> Result<Vec<f64>> {
        let mut tape = Tape::new(&self.params.set);
        let out = self.forward(&mut tape, index, llrs)?;
        Ok(tape.value(out).data.clone())
    }
}

/// Output of [`gnn_decode`].
#[derive(Debug, Clone, PartialEq)]
pub struct GnnOutput {
    pub logits: Vec<f64>,
    pub hard: Vec<u8>,
}

/// Decodes one LLR vector.
pub fn gnn_decode(params: &GnnParams, cfg: &GnnConfig, graph: &TannerGraph, llrs: &[f64]) -> Result<GnnOutput> {
    if llrs.len() != graph.num_vn() {
        return Err(contract(format!(
            "{} LLRs for a graph with {} variable nodes",
            llrs.len(),
            graph.num_vn()
        )));
    }
    let model = GnnModel::new(cfg, params)?;
    let logits = model.logits(&BatchIndex::new(graph, 1), llrs)?;
    Ok(GnnOutput {
        hard: hard_decision(&logits),
        logits,
    })
}
