//! Monte Carlo bit-error-rate measurement.
//!
//! Every codeword of a point draws its randomness from its own ChaCha stream,
//! keyed by the point seed and the codeword index, and counters are folded in
//! codeword order. Results therefore do not depend on the thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use sha2::{Digest, Sha256};
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use crate::classic::{bp_decode_with, conventional_decode};
use crate::codec::LinearCode;
use crate::error::{Error, Result};
use crate::gnn::{BatchIndex, GnnConfig, GnnModel};
use crate::impairments::IqiScenario;
use crate::link::{Link, Transmission};
use crate::modem::{hard_decision, Qam};
use crate::tanner::TannerGraph;
use crate::training::{verify_digest, Checkpoint};

/// Codewords simulated between two stop-rule checks.
const BLOCK: usize = 512;
/// Codewords per batched GNN forward pass.
const GNN_CHUNK: usize = 32;
/// Two-sided 95% standard normal quantile.
const Z95: f64 = 1.959_963_984_540_054;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scheme {
    Conventional,
    Bp,
    Gnn,
}

impl Scheme {
    pub const ALL: [Scheme; 3] = [Scheme::Conventional, Scheme::Bp, Scheme::Gnn];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::Conventional => "conventional",
            Scheme::Bp => "bp",
            Scheme::Gnn => "gnn",
        }
    }

    pub fn default_iters(self) -> usize {
        match self {
            Scheme::Conventional => 20,
            Scheme::Bp => 20,
            Scheme::Gnn => 8,
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "conventional" => Ok(Scheme::Conventional),
            "bp" => Ok(Scheme::Bp),
            "gnn" => Ok(Scheme::Gnn),
            other => Err(Error::Config(format!(
                "unknown scheme `{other}` (expected conventional, bp or gnn)"
            ))),
        }
    }
}

/// What to simulate at each SNR: impairments, decoder and its iteration count.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scenario {
    pub iqi: IqiScenario,
    pub scheme: Scheme,
    pub iters: usize,
}

impl Scenario {
    pub fn new(iqi: IqiScenario, scheme: Scheme) -> Self {
        Scenario {
            iqi,
            scheme,
            iters: scheme.default_iters(),
        }
    }
}

/// A point ends once either limit is reached.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StopRule {
    pub min_errors: u64,
    pub max_bits: u64,
}

impl Default for StopRule {
    fn default() -> Self {
        StopRule {
            min_errors: 200,
            max_bits: 100_000_000,
        }
    }
}

/// Outcome of one (scheme, scenario, SNR) point. BER counts information bits only.
#[derive(Debug, Clone, PartialEq)]
pub struct BerRecord {
    pub snr_db: f64,
    pub scheme: Scheme,
    /// `None` is the ideal-mixer sentinel, written as `inf`.
    pub tx_irr_db: Option<f64>,
    pub rx_irr_db: Option<f64>,
    pub theta_deg: f64,
    pub iters: usize,
    pub info_bits: u64,
    pub bit_errors: u64,
    pub ber: f64,
    pub cw_sent: u64,
    pub cw_errors: u64,
    pub ci95_low: f64,
    pub ci95_high: f64,
    pub seed: u64,
    pub wall_ms: u64,
}

/// 95% Wilson score interval for `errors` successes out of `trials`.
pub fn confidence_interval(errors: u64, trials: u64) -> (f64, f64) {
    assert!(trials >= 1, "confidence interval needs at least one trial");
    let n = trials as f64;
    let p = errors as f64 / n;
    let z2 = Z95 * Z95;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = Z95 / denom * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    let low = if errors == 0 { 0.0 } else { (center - half).max(0.0).min(p) };
    let high = if errors == trials { 1.0 } else { (center + half).min(1.0).max(p) };
    (low, high)
}

/// True when the two intervals share no point.
pub fn intervals_disjoint(a: &BerRecord, b: &BerRecord) -> bool {
    a.ci95_high < b.ci95_low || b.ci95_high < a.ci95_low
}

fn hash_u64(parts: &[&[u8]]) -> u64 {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("digest has 32 bytes"))
}

/// Seed of a point, derived from the master seed, the impairments and the SNR.
///
/// The scheme is not an input, so every decoder sees the same transmissions
/// at a given point.
pub fn point_seed(master_seed: u64, iqi: &IqiScenario, snr_db: f64) -> u64 {
    let irr = |v: Option<f64>| v.map_or(f64::INFINITY, |x| x).to_bits().to_le_bytes();
    hash_u64(&[
        &master_seed.to_le_bytes(),
        &irr(iqi.tx_irr_db),
        &irr(iqi.rx_irr_db),
        &iqi.theta_deg.to_bits().to_le_bytes(),
        &snr_db.to_bits().to_le_bytes(),
    ])
}

/// RNG for codeword `index` of the point with seed `seed`.
pub fn codeword_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

enum Decoder<'a> {
    Conventional(usize),
    Bp(usize),
    Gnn { cfg: GnnConfig, ckpt: &'a Checkpoint },
}

fn decoder_for<'a>(code: &LinearCode, scenario: &Scenario, checkpoint: Option<&'a Checkpoint>) -> Result<Decoder<'a>> {
    if scenario.iters == 0 {
        return Err(Error::Config("decoder iterations must be >= 1".into()));
    }
    Ok(match scenario.scheme {
        Scheme::Conventional => Decoder::Conventional(scenario.iters),
        Scheme::Bp => Decoder::Bp(scenario.iters),
        Scheme::Gnn => {
            let ckpt = checkpoint.ok_or_else(|| Error::Config("the gnn scheme needs a checkpoint".into()))?;
            verify_digest(ckpt, &code.parity_check().digest())
                .map_err(|e| Error::Config(format!("checkpoint does not fit the code: {e}")))?;
            let mut cfg = ckpt.gnn.clone();
            if cfg.iters != scenario.iters {
                if !cfg.share_weights_across_iters {
                    return Err(Error::Config(format!(
                        "checkpoint has per-round weights for {} rounds, {} requested",
                        cfg.iters, scenario.iters
                    )));
                }
                cfg.iters = scenario.iters;
            }
            Decoder::Gnn { cfg, ckpt }
        }
    })
}

impl Decoder<'_> {
    /// Hard decisions for a block of transmissions, in order.
    fn decode(&self, graph: &TannerGraph, block: &[Transmission]) -> Result<Vec<Vec<u8>>> {
        match self {
            Decoder::Conventional(iters) => block
                .par_iter()
                .map(|t| conventional_decode(graph, &t.llrs, *iters))
                .collect(),
            Decoder::Bp(iters) => block
                .par_iter()
                .map(|t| bp_decode_with(graph, &t.llrs, *iters, true).map(|o| o.hard))
                .collect(),
            Decoder::Gnn { cfg, ckpt } => {
                let model = GnnModel::new(cfg, &ckpt.params)?;
                let n = graph.num_vn();
                let full = BatchIndex::new(graph, GNN_CHUNK);
                let chunks: Vec<Result<Vec<Vec<u8>>>> = block
                    .par_chunks(GNN_CHUNK)
                    .map(|chunk| {
                        let llrs: Vec<f64> = chunk.iter().flat_map(|t| t.llrs.iter().copied()).collect();
                        let logits = if chunk.len() == GNN_CHUNK {
                            model.logits(&full, &llrs)?
                        } else {
                            model.logits(&BatchIndex::new(graph, chunk.len()), &llrs)?
                        };
                        Ok(logits.chunks(n).map(hard_decision).collect())
                    })
                    .collect();
                let mut out = Vec::with_capacity(block.len());
                for c in chunks {
                    out.extend(c?);
                }
                Ok(out)
            }
        }
    }
}

/// Simulates one point until `stop` is met.
///
/// Uses QPSK. The seed is used as-is; [`sweep`] derives one per point with
/// [`point_seed`].
pub fn run_point(
    code: &LinearCode,
    scenario: &Scenario,
    snr_db: f64,
    stop: StopRule,
    checkpoint: Option<&Checkpoint>,
    seed: u64,
) -> Result<BerRecord> {
    run_point_with(code, Qam::qpsk(), scenario, snr_db, stop, checkpoint, seed)
}

/// As [`run_point`] with an explicit constellation.
pub fn run_point_with(
    code: &LinearCode,
    qam: Qam,
    scenario: &Scenario,
    snr_db: f64,
    stop: StopRule,
    checkpoint: Option<&Checkpoint>,
    seed: u64,
) -> Result<BerRecord> {
    if stop.max_bits == 0 {
        return Err(Error::Config("max_bits must be >= 1".into()));
    }
    if !snr_db.is_finite() {
        return Err(Error::Config(format!("SNR must be finite, got {snr_db}")));
    }
    let started = Instant::now();
    let decoder = decoder_for(code, scenario, checkpoint)?;
    let link = Link::new(code.clone(), qam, &scenario.iqi)?;
    let graph = TannerGraph::from_parity_check(code.parity_check());
    let k = code.k_info() as u64;
    let (mut info_bits, mut bit_errors, mut cw_sent, mut cw_errors) = (0u64, 0u64, 0u64, 0u64);
    'outer: loop {
        let first = cw_sent;
        let block: Vec<Transmission> = (first..first + BLOCK as u64)
            .into_par_iter()
            .map(|i| link.transmit(snr_db, &mut codeword_rng(seed, i)))
            .collect::<Result<_>>()?;
        let decided = decoder.decode(&graph, &block)?;
        for (t, hard) in block.iter().zip(&decided) {
            let errors = code
                .info_positions()
                .iter()
                .filter(|&&p| hard[p] != t.codeword[p])
                .count() as u64;
            info_bits += k;
            bit_errors += errors;
            cw_sent += 1;
            cw_errors += u64::from(errors > 0);
            if bit_errors >= stop.min_errors || info_bits >= stop.max_bits {
                break 'outer;
            }
        }
    }
    let (ci95_low, ci95_high) = confidence_interval(bit_errors, info_bits);
    Ok(BerRecord {
        snr_db,
        scheme: scenario.scheme,
        tx_irr_db: scenario.iqi.tx_irr_db,
        rx_irr_db: scenario.iqi.rx_irr_db,
        theta_deg: scenario.iqi.theta_deg,
        iters: scenario.iters,
        info_bits,
        bit_errors,
        ber: bit_errors as f64 / info_bits as f64,
        cw_sent,
        cw_errors,
        ci95_low,
        ci95_high,
        seed,
        wall_ms: started.elapsed().as_millis() as u64,
    })
}

/// One record per SNR, in ascending SNR order.
pub fn sweep(
    code: &LinearCode,
    scenario: &Scenario,
    snr_list_db: &[f64],
    stop: StopRule,
    checkpoint: Option<&Checkpoint>,
    master_seed: u64,
) -> Result<Vec<BerRecord>> {
    let mut snrs = snr_list_db.to_vec();
    snrs.sort_by(f64::total_cmp);
    snrs.iter()
        .map(|&snr| {
            let seed = point_seed(master_seed, &scenario.iqi, snr);
            run_point(code, scenario, snr, stop, checkpoint, seed)
        })
        .collect()
}

pub const CSV_HEADER: &str =
    "snr_db,scheme,tx_irr_db,rx_irr_db,theta_deg,iters,info_bits,bit_errors,ber,cw_sent,cw_errors,ci95_low,ci95_high,seed,wall_ms";

/// Formats with 6 significant digits, like C's `%.6g`.
pub fn format_g6(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{x:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    let trim = |s: &str| -> String {
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s.to_string()
        }
    };
    if (-5..6).contains(&exp) {
        let decimals = (5 - exp).max(0) as usize;
        trim(&format!("{x:.decimals$}"))
    } else {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{sign}{:02}", trim(mantissa), exp.abs())
    }
}

fn format_irr(v: Option<f64>) -> String {
    v.map_or_else(|| "inf".into(), format_g6)
}

/// CSV text with header. With `timing` false the wall-clock column is written
/// as 0, which makes the bytes a pure function of the inputs.
pub fn records_to_csv(records: &[BerRecord], timing: bool) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in records {
        let fields = [
            format_g6(r.snr_db),
            r.scheme.name().to_string(),
            format_irr(r.tx_irr_db),
            format_irr(r.rx_irr_db),
            format_g6(r.theta_deg),
            r.iters.to_string(),
            r.info_bits.to_string(),
            r.bit_errors.to_string(),
            format_g6(r.ber),
            r.cw_sent.to_string(),
            r.cw_errors.to_string(),
            format_g6(r.ci95_low),
            format_g6(r.ci95_high),
            r.seed.to_string(),
            if timing { r.wall_ms.to_string() } else { "0".into() },
        ];
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}

/// Parses CSV produced by [`records_to_csv`]. Errors name the 1-based line.
pub fn parse_csv(text: &str) -> Result<Vec<BerRecord>> {
    let bad = |line: usize, msg: String| Error::Config(format!("CSV line {line}: {msg}"));
    let mut reader = csv::ReaderBuilder::new().has_headers(false).from_reader(text.as_bytes());
    let mut rows = reader.records();
    match rows.next() {
        None => return Err(bad(1, "empty file".into())),
        Some(Err(e)) => return Err(bad(1, e.to_string())),
        Some(Ok(h)) => {
            let header: Vec<&str> = h.iter().collect();
            if header.join(",") != CSV_HEADER {
                return Err(bad(1, format!("unexpected header `{}`", header.join(","))));
            }
        }
    }
    let mut out = Vec::new();
    for (i, row) in rows.enumerate() {
        let line = i + 2;
        let row = row.map_err(|e| bad(line, e.to_string()))?;
        if row.len() != 15 {
            return Err(bad(line, format!("{} fields, expected 15", row.len())));
        }
        let float = |j: usize| -> Result<f64> {
            row[j]
                .parse::<f64>()
                .map_err(|_| bad(line, format!("field {j} `{}` is not a number", &row[j])))
        };
        let int = |j: usize| -> Result<u64> {
            row[j]
                .parse::<u64>()
                .map_err(|_| bad(line, format!("field {j} `{}` is not a count", &row[j])))
        };
        let irr = |j: usize| -> Result<Option<f64>> {
            if &row[j] == "inf" {
                Ok(None)
            } else {
                float(j).map(Some)
            }
        };
        let record = BerRecord {
            snr_db: float(0)?,
            scheme: row[1].parse().map_err(|e: Error| bad(line, e.to_string()))?,
            tx_irr_db: irr(2)?,
            rx_irr_db: irr(3)?,
            theta_deg: float(4)?,
            iters: int(5)? as usize,
            info_bits: int(6)?,
            bit_errors: int(7)?,
            ber: float(8)?,
            cw_sent: int(9)?,
            cw_errors: int(10)?,
            ci95_low: float(11)?,
            ci95_high: float(12)?,
            seed: int(13)?,
            wall_ms: int(14)?,
        };
        if record.bit_errors > record.info_bits || record.cw_errors > record.cw_sent {
            return Err(bad(line, "error count exceeds trials".into()));
        }
        out.push(record);
    }
    Ok(out)
}
