//! Loss, gradients, Adam and the training loop for the GNN decoder, plus
//! checkpoint persistence.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use sha2::{Digest, Sha256};
use std::fmt::Write as _;
use std::path::Path;

use crate::autodiff::{Mat, Tape};
use crate::codec::LinearCode;
use crate::error::{contract, Error, Result};
use crate::gnn::{init_params, BatchIndex, GnnConfig, GnnModel, GnnParams};
use crate::impairments::IqiScenario;
use crate::link::Link;
use crate::modem::Qam;
use crate::tanner::TannerGraph;

/// Codewords per gradient shard. Shards are summed in index order, so the
/// result does not depend on the number of worker threads.
const SHARD: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub steps: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Per-sample SNR is drawn uniformly from this closed interval (dB).
    pub snr_range_db: (f64, f64),
    pub scenario: IqiScenario,
    pub seed: u64,
    pub supervision: Supervision,
}

/// Which readouts the training loss covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Supervision {
    /// BCE of the final logits only.
    FinalRound,
    /// Mean of the BCE of the readout applied after every round.
    #[default]
    EveryRound,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 128,
            steps: 20_000,
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            snr_range_db: (2.0, 9.0),
            scenario: IqiScenario::ideal(),
            seed: 1,
            supervision: Supervision::EveryRound,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.batch_size == 0 {
            problems.push("batch_size must be >= 1".to_string());
        }
        if !(self.lr > 0.0) {
            problems.push(format!("lr must be positive, got {}", self.lr));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            problems.push("beta1 and beta2 must lie in [0, 1)".to_string());
        }
        if !(self.eps > 0.0) {
            problems.push("eps must be positive".to_string());
        }
        let (lo, hi) = self.snr_range_db;
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            problems.push(format!("snr_range_db must be finite with low <= high, got [{lo}, {hi}]"));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(contract(problems.join("; ")))
        }
    }
}

/// Mean binary cross-entropy between logits (positive favours bit 1) and bits.
pub fn bce_loss(logits: &[f64], target: &[u8]) -> Result<f64> {
    if logits.len() != target.len() {
        return Err(contract(format!(
            "{} logits for {} target bits",
            logits.len(),
            target.len()
        )));
    }
    if logits.is_empty() {
        return Ok(0.0);
    }
    let total: f64 = logits.iter().zip(target).map(|(&z, &t)| bce_term(z, t)).sum();
    Ok(total / logits.len() as f64)
}

/// `softplus(z) - t z`, which equals `-t ln s(z) - (1 - t) ln(1 - s(z))`.
fn bce_term(z: f64, t: u8) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p() - f64::from(t & 1) * z
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// One training example: channel LLRs and the transmitted codeword.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub llrs: Vec<f64>,
    pub target: Vec<u8>,
}

/// Mean BCE of the final logits over every bit of the batch and its gradient
/// for each tensor.
pub fn grad(
    cfg: &GnnConfig,
    params: &GnnParams,
    graph: &TannerGraph,
    batch: &[Sample],
) -> Result<(f64, Vec<Mat>)> {
    grad_with(cfg, params, graph, batch, Supervision::FinalRound)
}

/// As [`grad`] with the loss chosen by `supervision`.
pub fn grad_with(
    cfg: &GnnConfig,
    params: &GnnParams,
    graph: &TannerGraph,
    batch: &[Sample],
    supervision: Supervision,
) -> Result<(f64, Vec<Mat>)> {
    if batch.is_empty() {
        return Err(contract("gradient of an empty batch"));
    }
    let n = graph.num_vn();
    if let Some(bad) = batch.iter().find(|s| s.llrs.len() != n || s.target.len() != n) {
        return Err(contract(format!(
            "sample with {} LLRs and {} targets on a graph with {n} variable nodes",
            bad.llrs.len(),
            bad.target.len()
        )));
    }
    let model = GnnModel::new(cfg, params)?;
    let every_round = supervision == Supervision::EveryRound;
    let readouts = if every_round { cfg.iters } else { 1 };
    let total_bits = (batch.len() * n * readouts) as f64;
    let full = BatchIndex::new(graph, SHARD.min(batch.len()));
    let tail = batch.len() % SHARD;
    let partial = (tail != 0 && batch.len() > SHARD).then(|| BatchIndex::new(graph, tail));

    let shards: Vec<Result<(f64, Vec<Mat>)>> = batch
        .par_chunks(SHARD)
        .map(|chunk| {
            let index = if chunk.len() == full.batch() {
                &full
            } else {
                partial.as_ref().expect("tail shard index")
            };
            let llrs: Vec<f64> = chunk.iter().flat_map(|s| s.llrs.iter().copied()).collect();
            let targets: Vec<u8> = chunk.iter().flat_map(|s| s.target.iter().copied()).collect();
            let mut tape = Tape::new(model.params());
            let outs = model.forward_rounds(&mut tape, index, &llrs, every_round)?;
            let mut loss = 0.0;
            let mut seeds = Vec::with_capacity(outs.len());
            for out in outs {
                let logits = &tape.value(out).data;
                let mut seed = Vec::with_capacity(logits.len());
                for (&z, &t) in logits.iter().zip(&targets) {
                    loss += bce_term(z, t);
                    seed.push((sigmoid(z) - f64::from(t & 1)) / total_bits);
                }
                seeds.push((out, Mat::from_vec(logits.len(), 1, seed)));
            }
            Ok((loss, tape.backward_many(seeds)))
        })
        .collect();

    let mut loss = 0.0;
    let mut total = params.set.zeros_like();
    for shard in shards {
        let (l, g) = shard?;
        loss += l;
        for (acc, part) in total.iter_mut().zip(&g) {
            acc.data.iter_mut().zip(&part.data).for_each(|(a, b)| *a += b);
        }
    }
    Ok((loss / total_bits, total))
}

/// First and second moment estimates of Adam.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<Mat>,
    pub v: Vec<Mat>,
    pub t: u64,
}

impl AdamState {
    pub fn new(params: &GnnParams) -> Self {
        AdamState {
            m: params.set.zeros_like(),
            v: params.set.zeros_like(),
            t: 0,
        }
    }
}

/// One bias-corrected Adam update in place.
pub fn adam_step(params: &mut GnnParams, grads: &[Mat], state: &mut AdamState, cfg: &TrainConfig) -> Result<()> {
    let tensors = &mut params.set.tensors;
    if grads.len() != tensors.len() || state.m.len() != tensors.len() || state.v.len() != tensors.len() {
        return Err(contract("Adam state, gradients and parameters differ in tensor count"));
    }
    for (i, t) in tensors.iter().enumerate() {
        let len = t.value.data.len();
        if grads[i].data.len() != len || state.m[i].data.len() != len || state.v[i].data.len() != len {
            return Err(contract(format!("shape mismatch on tensor {}", t.name)));
        }
    }
    state.t += 1;
    let bc1 = 1.0 - cfg.beta1.powi(state.t as i32);
    let bc2 = 1.0 - cfg.beta2.powi(state.t as i32);
    for (i, t) in tensors.iter_mut().enumerate() {
        let g = &grads[i].data;
        let m = &mut state.m[i].data;
        let v = &mut state.v[i].data;
        for j in 0..g.len() {
            m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * g[j];
            v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * g[j] * g[j];
            let m_hat = m[j] / bc1;
            let v_hat = v[j] / bc2;
            t.value.data[j] -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
        }
    }
    Ok(())
}

pub const CHECKPOINT_VERSION: u32 = 1;

/// Trained decoder plus the identity of what it was trained on.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub version: u32,
    pub gnn: GnnConfig,
    /// Digest of the parity-check matrix, see [`crate::codec::ParityCheckMatrix::digest`].
    pub h_digest: String,
    pub scenario: IqiScenario,
    pub params: GnnParams,
    pub steps: u64,
    pub rng_digest: String,
}

fn rng_digest(rng: &ChaCha8Rng) -> String {
    let mut h = Sha256::new();
    h.update(rng.get_seed());
    h.update(rng.get_stream().to_le_bytes());
    h.update(rng.get_word_pos().to_le_bytes());
    hex::encode(h.finalize())
}

/// Per-step progress reported by [`train_with`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepReport {
    /// 1-based step index.
    pub step: usize,
    pub loss: f64,
}

/// Trains from scratch; see [`train_with`].
pub fn train(code: &LinearCode, cfg_gnn: &GnnConfig, cfg_train: &TrainConfig) -> Result<Checkpoint> {
    train_with(code, cfg_gnn, cfg_train, &mut |_| {})
}

/// Trains on freshly simulated QPSK transmissions of random codewords,
/// calling `on_step` after every optimizer step.
pub fn train_with(
    code: &LinearCode,
    cfg_gnn: &GnnConfig,
    cfg_train: &TrainConfig,
    on_step: &mut dyn FnMut(StepReport),
) -> Result<Checkpoint> {
    cfg_gnn.validate()?;
    cfg_train.validate()?;
    let link = Link::new(code.clone(), Qam::qpsk(), &cfg_train.scenario)?;
    let graph = TannerGraph::from_parity_check(code.parity_check());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg_train.seed);
    let mut params = init_params(cfg_gnn, &mut rng);
    let mut adam = AdamState::new(&params);
    let (lo, hi) = cfg_train.snr_range_db;
    for step in 1..=cfg_train.steps {
        let batch = (0..cfg_train.batch_size)
            .map(|_| {
                let snr = if lo == hi { lo } else { rng.random_range(lo..=hi) };
                link.transmit(snr, &mut rng).map(|t| Sample {
                    llrs: t.llrs,
                    target: t.codeword,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let (loss, grads) = grad_with(cfg_gnn, &params, &graph, &batch, cfg_train.supervision)?;
        if !loss.is_finite() {
            return Err(Error::Diverged { step, loss });
        }
        adam_step(&mut params, &grads, &mut adam, cfg_train)?;
        on_step(StepReport { step, loss });
    }
    Ok(Checkpoint {
        version: CHECKPOINT_VERSION,
        gnn: cfg_gnn.clone(),
        h_digest: code.parity_check().digest(),
        scenario: cfg_train.scenario,
        params,
        steps: cfg_train.steps as u64,
        rng_digest: rng_digest(&rng),
    })
}

const MAGIC: &str = "iqlink-checkpoint";

fn fmt_irr(v: Option<f64>) -> String {
    v.map_or_else(|| "inf".to_string(), |x| format!("{x:?}"))
}

/// Serializes a checkpoint; floats are written as the hex of their bit patterns.
pub fn checkpoint_to_string(c: &Checkpoint) -> String {
    let mut s = String::new();
    let g = &c.gnn;
    let _ = writeln!(s, "{MAGIC} {}", c.version);
    let _ = writeln!(s, "vn_dim {}", g.vn_dim);
    let _ = writeln!(s, "cn_dim {}", g.cn_dim);
    let _ = writeln!(s, "msg_dim {}", g.msg_dim);
    let _ = writeln!(s, "hidden_dim {}", g.hidden_dim);
    let _ = writeln!(s, "iters {}", g.iters);
    let _ = writeln!(s, "share_weights {}", g.share_weights_across_iters);
    let _ = writeln!(s, "h_digest {}", c.h_digest);
    let _ = writeln!(s, "tx_irr_db {}", fmt_irr(c.scenario.tx_irr_db));
    let _ = writeln!(s, "rx_irr_db {}", fmt_irr(c.scenario.rx_irr_db));
    let _ = writeln!(s, "theta_deg {:?}", c.scenario.theta_deg);
    let _ = writeln!(s, "steps {}", c.steps);
    let _ = writeln!(s, "rng_digest {}", c.rng_digest);
    let _ = writeln!(s, "tensors {}", c.params.set.len());
    for t in &c.params.set.tensors {
        let _ = writeln!(s, "tensor {} {} {}", t.name, t.value.rows, t.value.cols);
        for r in 0..t.value.rows {
            let row: Vec<String> = t.value.row(r).iter().map(|v| format!("{:016x}", v.to_bits())).collect();
            let _ = writeln!(s, "{}", row.join(" "));
        }
    }
    s.push_str("end\n");
    s
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    last: usize,
}

impl<'a> Lines<'a> {
    fn err(&self, msg: impl Into<String>) -> Error {
        Error::CheckpointParse {
            line: self.last,
            msg: msg.into(),
        }
    }

    fn next_line(&mut self) -> Result<&'a str> {
        match self.inner.next() {
            Some((i, l)) => {
                self.last = i + 1;
                Ok(l)
            }
            None => {
                self.last += 1;
                Err(self.err("unexpected end of file"))
            }
        }
    }

    /// Reads `key value` and returns `value`.
    fn field(&mut self, key: &str) -> Result<&'a str> {
        let line = self.next_line()?;
        match line.split_once(' ') {
            Some((k, v)) if k == key => Ok(v),
            _ => Err(self.err(format!("expected `{key} <value>`, found `{line}`"))),
        }
    }

    fn parsed<T: std::str::FromStr>(&mut self, key: &str) -> Result<T> {
        let v = self.field(key)?;
        v.parse().map_err(|_| self.err(format!("bad value `{v}` for {key}")))
    }

    fn irr(&mut self, key: &str) -> Result<Option<f64>> {
        let v = self.field(key)?;
        if v == "inf" {
            return Ok(None);
        }
        v.parse().map(Some).map_err(|_| self.err(format!("bad value `{v}` for {key}")))
    }
}

/// Parses checkpoint text without checking it against a code.
pub fn checkpoint_from_str(text: &str) -> Result<Checkpoint> {
    let mut lines = Lines {
        inner: text.lines().enumerate(),
        last: 0,
    };
    let version: u32 = lines.parsed(MAGIC)?;
    if version != CHECKPOINT_VERSION {
        return Err(lines.err(format!("unsupported version {version}, expected {CHECKPOINT_VERSION}")));
    }
    let gnn = GnnConfig {
        vn_dim: lines.parsed("vn_dim")?,
        cn_dim: lines.parsed("cn_dim")?,
        msg_dim: lines.parsed("msg_dim")?,
        hidden_dim: lines.parsed("hidden_dim")?,
        iters: lines.parsed("iters")?,
        share_weights_across_iters: lines.parsed("share_weights")?,
    };
    gnn.validate().map_err(|e| lines.err(e.to_string()))?;
    let h_digest = lines.field("h_digest")?.to_string();
    let scenario = IqiScenario {
        tx_irr_db: lines.irr("tx_irr_db")?,
        rx_irr_db: lines.irr("rx_irr_db")?,
        theta_deg: lines.parsed("theta_deg")?,
    };
    let steps = lines.parsed("steps")?;
    let rng_digest = lines.field("rng_digest")?.to_string();
    let count: usize = lines.parsed("tensors")?;
    let mut params = GnnParams::zeros(&gnn);
    if count != params.set.len() {
        return Err(lines.err(format!("{count} tensors, configuration implies {}", params.set.len())));
    }
    for t in &mut params.set.tensors {
        let header = lines.field("tensor")?;
        let expect = format!("{} {} {}", t.name, t.value.rows, t.value.cols);
        if header != expect {
            return Err(lines.err(format!("tensor header `{header}`, expected `{expect}`")));
        }
        for r in 0..t.value.rows {
            let line = lines.next_line()?;
            let words: Vec<&str> = line.split_whitespace().collect();
            if words.len() != t.value.cols {
                return Err(lines.err(format!("{} values in a row of {}", words.len(), t.name)));
            }
            for (c, w) in words.iter().enumerate() {
                let bits = u64::from_str_radix(w, 16).map_err(|_| lines.err(format!("bad hex value `{w}`")))?;
                t.value.data[r * t.value.cols + c] = f64::from_bits(bits);
            }
        }
    }
    if lines.next_line()? != "end" {
        return Err(lines.err("expected `end`"));
    }
    Ok(Checkpoint {
        version,
        gnn,
        h_digest,
        scenario,
        params,
        steps,
        rng_digest,
    })
}

pub fn save_checkpoint(c: &Checkpoint, path: &Path) -> Result<()> {
    std::fs::write(path, checkpoint_to_string(c))?;
    Ok(())
}

/// Loads a checkpoint and verifies it was trained for `expected_h_digest`.
pub fn load_checkpoint(path: &Path, expected_h_digest: &str) -> Result<Checkpoint> {
    let c = checkpoint_from_str(&std::fs::read_to_string(path)?)?;
    verify_digest(&c, expected_h_digest)?;
    Ok(c)
}

pub fn verify_digest(c: &Checkpoint, expected_h_digest: &str) -> Result<()> {
    if c.h_digest != expected_h_digest {
        return Err(Error::DigestMismatch {
            expected: expected_h_digest.to_string(),
            found: c.h_digest.clone(),
        });
    }
    Ok(())
}
