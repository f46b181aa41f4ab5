//! Binary linear block codes.
//!
//! Parity-check matrices are stored sparsely as per-row column lists. The
//! systematic generator is derived by GF(2) Gaussian elimination, pivoting on
//! the lowest available column, so the message bits land on the non-pivot
//! columns of `H`.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};
use std::fmt::Write as _;

use crate::error::{contract, Error, Result};

/// Sparse binary parity-check matrix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParityCheckMatrix {
    rows: usize,
    cols: usize,
    row_cols: Vec<Vec<usize>>,
    col_rows: Vec<Vec<usize>>,
}

impl ParityCheckMatrix {
    /// Builds a matrix from per-row lists of column indices.
    ///
    /// Lists are sorted; duplicate or out-of-range indices are rejected.
    pub fn from_rows(cols: usize, mut row_cols: Vec<Vec<usize>>) -> Result<Self> {
        let rows = row_cols.len();
        if rows == 0 || cols == 0 {
            return Err(contract("parity-check matrix must be nonempty"));
        }
        let mut col_rows = vec![Vec::new(); cols];
        for (r, list) in row_cols.iter_mut().enumerate() {
            list.sort_unstable();
            if list.windows(2).any(|w| w[0] == w[1]) {
                return Err(contract(format!("row {r} lists a column twice")));
            }
            for &c in list.iter() {
                if c >= cols {
                    return Err(contract(format!("row {r} references column {c} >= {cols}")));
                }
                col_rows[c].push(r);
            }
        }
        Ok(ParityCheckMatrix {
            rows,
            cols,
            row_cols,
            col_rows,
        })
    }

    /// Builds a matrix from a dense 0/1 row-major description.
    pub fn from_dense(dense: &[Vec<u8>]) -> Result<Self> {
        let cols = dense.first().map_or(0, Vec::len);
        if dense.iter().any(|r| r.len() != cols) {
            return Err(contract("ragged dense matrix"));
        }
        let row_cols = dense
            .iter()
            .map(|r| r.iter().enumerate().filter(|(_, &b)| b != 0).map(|(c, _)| c).collect())
            .collect();
        Self::from_rows(cols, row_cols)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Column indices of the ones in row `r`, ascending.
    pub fn row(&self, r: usize) -> &[usize] {
        &self.row_cols[r]
    }

    /// Row indices of the ones in column `c`, ascending.
    pub fn col(&self, c: usize) -> &[usize] {
        &self.col_rows[c]
    }

    pub fn get(&self, r: usize, c: usize) -> bool {
        self.row_cols[r].binary_search(&c).is_ok()
    }

    /// Total number of ones.
    pub fn ones(&self) -> usize {
        self.row_cols.iter().map(Vec::len).sum()
    }

    pub fn col_weights(&self) -> Vec<usize> {
        self.col_rows.iter().map(Vec::len).collect()
    }

    pub fn row_weights(&self) -> Vec<usize> {
        self.row_cols.iter().map(Vec::len).collect()
    }

    /// `(col_weight, row_weight)` when every column and every row share a weight.
    pub fn regular_weights(&self) -> Option<(usize, usize)> {
        let wc = self.col_rows[0].len();
        let wr = self.row_cols[0].len();
        let regular = self.col_rows.iter().all(|c| c.len() == wc)
            && self.row_cols.iter().all(|r| r.len() == wr);
        regular.then_some((wc, wr))
    }

    /// Number of length-4 cycles in the Tanner graph.
    pub fn four_cycles(&self) -> usize {
        let mut count = 0;
        for a in 0..self.rows {
            for b in a + 1..self.rows {
                let shared = intersection_len(&self.row_cols[a], &self.row_cols[b]);
                count += shared * shared.saturating_sub(1) / 2;
            }
        }
        count
    }

    /// Dense copy, one `Vec<u8>` per row.
    pub fn to_dense(&self) -> Vec<Vec<u8>> {
        self.row_cols
            .iter()
            .map(|list| {
                let mut row = vec![0u8; self.cols];
                for &c in list {
                    row[c] = 1;
                }
                row
            })
            .collect()
    }

    /// GF(2) rank.
    pub fn rank(&self) -> usize {
        Elimination::run(self).pivots.len()
    }

    /// Hex SHA-256 of the canonical alist serialization.
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(save_alist(self).as_bytes()))
    }
}

fn intersection_len(a: &[usize], b: &[usize]) -> usize {
    let (mut i, mut j, mut n) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                n += 1;
                i += 1;
                j += 1;
            }
        }
    }
    n
}

const CONSTRUCTION_ATTEMPTS: usize = 500;

/// Builds a `(col_weight, row_weight)`-regular parity-check matrix with `n` columns.
///
/// Columns are filled greedily, each picking the rows with the most spare
/// capacity (random tie-breaks) that do not close a 4-cycle. When no 4-cycle
/// free matrix turns up within the retry budget, the 4-cycle constraint is
/// dropped for a final pass.
pub fn build_regular_code(
    n: usize,
    col_weight: usize,
    row_weight: usize,
    seed: u64,
) -> Result<ParityCheckMatrix> {
    if col_weight < 2 {
        return Err(Error::Construction(format!("col_weight must be >= 2, got {col_weight}")));
    }
    if row_weight == 0 || (n * col_weight) % row_weight != 0 {
        return Err(Error::Construction(format!(
            "n * col_weight = {} is not divisible by row_weight = {row_weight}",
            n * col_weight
        )));
    }
    let rows = n * col_weight / row_weight;
    if rows > n {
        return Err(Error::Construction(format!(
            "rows = n * col_weight / row_weight = {rows} exceeds n = {n}"
        )));
    }
    if col_weight > rows {
        return Err(Error::Construction(format!(
            "col_weight {col_weight} exceeds the row count {rows}"
        )));
    }
    construct(&vec![col_weight; n], &vec![row_weight; rows], seed)
}

/// Builds a parity-check matrix with `rows` rows and the given per-column weights;
/// row weights differ by at most one.
pub fn build_code_with_column_weights(
    col_weights: &[usize],
    rows: usize,
    seed: u64,
) -> Result<ParityCheckMatrix> {
    let n = col_weights.len();
    if rows == 0 || rows > n {
        return Err(Error::Construction(format!("rows must be in 1..={n}, got {rows}")));
    }
    if let Some(&w) = col_weights.iter().find(|&&w| w < 2 || w > rows) {
        return Err(Error::Construction(format!(
            "column weight {w} outside 2..={rows}"
        )));
    }
    let total: usize = col_weights.iter().sum();
    let row_weights: Vec<usize> = (0..rows)
        .map(|r| total / rows + usize::from(r < total % rows))
        .collect();
    construct(col_weights, &row_weights, seed)
}

/// Parity-check matrix of the default rate-45/63 code.
///
/// A (2, 7)-regular 18 x 63 matrix has rank 17 because every column has even
/// weight and the rows sum to zero. Raising the first column to weight 3
/// breaks that dependency: the matrix has full rank 18 while every other
/// column keeps weight 2 and the row weights are 7 (one row of weight 8).
pub fn default_parity_check(seed: u64) -> ParityCheckMatrix {
    let mut weights = vec![2; DEFAULT_N];
    weights[0] = 3;
    build_code_with_column_weights(&weights, DEFAULT_N - DEFAULT_K, seed)
        .expect("default code parameters are feasible")
}

/// Default codeword length.
pub const DEFAULT_N: usize = 63;
/// Default message length.
pub const DEFAULT_K: usize = 45;
/// Default construction seed.
pub const DEFAULT_CODE_SEED: u64 = 1;

fn construct(col_weights: &[usize], row_weights: &[usize], seed: u64) -> Result<ParityCheckMatrix> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for attempt in 0..=CONSTRUCTION_ATTEMPTS {
        let avoid_cycles = attempt < CONSTRUCTION_ATTEMPTS;
        if let Some(row_cols) = try_construct(col_weights, row_weights, avoid_cycles, &mut rng) {
            return ParityCheckMatrix::from_rows(col_weights.len(), row_cols);
        }
    }
    Err(Error::Construction(format!(
        "no matrix with the requested weights found after {CONSTRUCTION_ATTEMPTS} attempts"
    )))
}

fn try_construct(
    col_weights: &[usize],
    row_weights: &[usize],
    avoid_cycles: bool,
    rng: &mut ChaCha8Rng,
) -> Option<Vec<Vec<usize>>> {
    let m = row_weights.len();
    let mut spare = row_weights.to_vec();
    let mut row_cols = vec![Vec::new(); m];
    // linked[a * m + b]: rows a and b already share a column
    let mut linked = vec![false; m * m];
    let n = col_weights.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut candidates: Vec<(usize, u64, usize)> = Vec::with_capacity(m);
    for &col in &order {
        candidates.clear();
        candidates.extend(
            (0..m)
                .filter(|&r| spare[r] > 0)
                .map(|r| (usize::MAX - spare[r], rng.random::<u64>(), r)),
        );
        candidates.sort_unstable();
        let col_weight = col_weights[col];
        let mut chosen: Vec<usize> = Vec::with_capacity(col_weight);
        for &(_, _, r) in candidates.iter() {
            if chosen.len() == col_weight {
                break;
            }
            if avoid_cycles && chosen.iter().any(|&c| linked[c * m + r]) {
                continue;
            }
            chosen.push(r);
        }
        if chosen.len() < col_weight {
            return None;
        }
        for (i, &a) in chosen.iter().enumerate() {
            spare[a] -= 1;
            row_cols[a].push(col);
            for &b in &chosen[i + 1..] {
                linked[a * m + b] = true;
                linked[b * m + a] = true;
            }
        }
    }
    Some(row_cols)
}

/// Parses the alist sparse-matrix interchange format.
pub fn load_alist(text: &str) -> Result<ParityCheckMatrix> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty());
    let last_line = text.lines().count().max(1);
    let mut next_numbers = |what: &str| -> Result<(usize, Vec<usize>)> {
        let (line, content) = lines.next().ok_or_else(|| Error::Alist {
            line: last_line,
            msg: format!("unexpected end of input while reading {what}"),
        })?;
        let nums = content
            .split_whitespace()
            .map(|t| {
                t.parse::<usize>().map_err(|_| Error::Alist {
                    line,
                    msg: format!("invalid integer {t:?} in {what}"),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok((line, nums))
    };
    let expect_len = |line: usize, nums: &[usize], len: usize, what: &str| -> Result<()> {
        if nums.len() != len {
            return Err(Error::Alist {
                line,
                msg: format!("{what}: expected {len} values, found {}", nums.len()),
            });
        }
        Ok(())
    };

    let (line, dims) = next_numbers("dimensions")?;
    expect_len(line, &dims, 2, "dimensions")?;
    let (n, m) = (dims[0], dims[1]);
    if n == 0 || m == 0 {
        return Err(Error::Alist {
            line,
            msg: "dimensions must be positive".into(),
        });
    }
    let (line, maxes) = next_numbers("maximum weights")?;
    expect_len(line, &maxes, 2, "maximum weights")?;
    let (max_cw, max_rw) = (maxes[0], maxes[1]);
    let (line, col_w) = next_numbers("column weights")?;
    expect_len(line, &col_w, n, "column weights")?;
    if col_w.iter().any(|&w| w > max_cw) {
        return Err(Error::Alist {
            line,
            msg: format!("a column weight exceeds the declared maximum {max_cw}"),
        });
    }
    let (line, row_w) = next_numbers("row weights")?;
    expect_len(line, &row_w, m, "row weights")?;
    if row_w.iter().any(|&w| w > max_rw) {
        return Err(Error::Alist {
            line,
            msg: format!("a row weight exceeds the declared maximum {max_rw}"),
        });
    }

    let mut read_lists = |count: usize, weights: &[usize], bound: usize, what: &str| -> Result<Vec<(usize, Vec<usize>)>> {
        (0..count)
            .map(|i| {
                let (line, nums) = next_numbers(what)?;
                let entries: Vec<usize> = nums.iter().copied().filter(|&v| v != 0).collect();
                if entries.len() != weights[i] {
                    return Err(Error::Alist {
                        line,
                        msg: format!(
                            "{what} {}: header declares weight {}, body lists {}",
                            i + 1,
                            weights[i],
                            entries.len()
                        ),
                    });
                }
                if let Some(&bad) = entries.iter().find(|&&v| v > bound) {
                    return Err(Error::Alist {
                        line,
                        msg: format!("{what} {}: index {bad} out of range 1..={bound}", i + 1),
                    });
                }
                Ok((line, entries.into_iter().map(|v| v - 1).collect()))
            })
            .collect()
    };
    let col_lists = read_lists(n, &col_w, m, "column")?;
    let row_lists = read_lists(m, &row_w, n, "row")?;

    let h = ParityCheckMatrix::from_rows(n, row_lists.iter().map(|(_, l)| l.clone()).collect())
        .map_err(|e| Error::Alist {
            line: row_lists.first().map_or(0, |(l, _)| *l),
            msg: e.to_string(),
        })?;
    for (c, (line, rows)) in col_lists.iter().enumerate() {
        let mut sorted = rows.clone();
        sorted.sort_unstable();
        if sorted != h.col(c) {
            return Err(Error::Alist {
                line: *line,
                msg: format!("column {} disagrees with the row lists", c + 1),
            });
        }
    }
    Ok(h)
}

/// Serializes to canonical alist text (1-based indices, lists zero-padded).
pub fn save_alist(h: &ParityCheckMatrix) -> String {
    let col_w = h.col_weights();
    let row_w = h.row_weights();
    let max_cw = col_w.iter().copied().max().unwrap_or(0);
    let max_rw = row_w.iter().copied().max().unwrap_or(0);
    let join = |v: &mut dyn Iterator<Item = usize>| v.map(|x| x.to_string()).collect::<Vec<_>>().join(" ");
    let mut out = String::new();
    let _ = writeln!(out, "{} {}", h.cols, h.rows);
    let _ = writeln!(out, "{max_cw} {max_rw}");
    let _ = writeln!(out, "{}", join(&mut col_w.iter().copied()));
    let _ = writeln!(out, "{}", join(&mut row_w.iter().copied()));
    for list in &h.col_rows {
        let padded = list.iter().map(|r| r + 1).chain(std::iter::repeat(0)).take(max_cw);
        let _ = writeln!(out, "{}", join(&mut padded.into_iter()));
    }
    for list in &h.row_cols {
        let padded = list.iter().map(|c| c + 1).chain(std::iter::repeat(0)).take(max_rw);
        let _ = writeln!(out, "{}", join(&mut padded.into_iter()));
    }
    out
}

/// Dense GF(2) row reduction over 64-bit words.
struct Elimination {
    /// Reduced rows, one per pivot, in pivot order.
    reduced: Vec<Vec<u64>>,
    pivots: Vec<usize>,
}

impl Elimination {
    fn run(h: &ParityCheckMatrix) -> Self {
        let words = h.cols.div_ceil(64);
        let mut rows: Vec<Vec<u64>> = h
            .row_cols
            .iter()
            .map(|list| {
                let mut w = vec![0u64; words];
                for &c in list {
                    w[c / 64] |= 1 << (c % 64);
                }
                w
            })
            .collect();
        let bit = |row: &[u64], c: usize| row[c / 64] >> (c % 64) & 1 == 1;
        let mut pivots = Vec::new();
        let mut rank = 0;
        for c in 0..h.cols {
            if rank == rows.len() {
                break;
            }
            let Some(p) = (rank..rows.len()).find(|&r| bit(&rows[r], c)) else {
                continue;
            };
            rows.swap(rank, p);
            let pivot_row = rows[rank].clone();
            for (r, row) in rows.iter_mut().enumerate() {
                if r != rank && bit(row, c) {
                    row.iter_mut().zip(&pivot_row).for_each(|(a, b)| *a ^= b);
                }
            }
            pivots.push(c);
            rank += 1;
        }
        rows.truncate(rank);
        Elimination {
            reduced: rows,
            pivots,
        }
    }
}

/// A binary linear block code with a systematic encoder.
#[derive(Debug, Clone)]
pub struct LinearCode {
    h: ParityCheckMatrix,
    /// Message-bit positions (the non-pivot columns), ascending.
    info_positions: Vec<usize>,
    /// Pivot column of each reduced parity equation.
    parity_positions: Vec<usize>,
    /// For each parity position, the message indices it sums.
    parity_terms: Vec<Vec<usize>>,
    /// Columns in systematic order: message positions, then parity positions.
    col_perm: Vec<usize>,
}

/// Derives the systematic encoder of the code with parity-check matrix `h`.
///
/// Rank-deficient matrices are accepted; the message length is `n - rank(h)`.
pub fn derive_generator(h: &ParityCheckMatrix) -> LinearCode {
    let elim = Elimination::run(h);
    let mut is_pivot = vec![false; h.cols];
    for &p in &elim.pivots {
        is_pivot[p] = true;
    }
    let info_positions: Vec<usize> = (0..h.cols).filter(|&c| !is_pivot[c]).collect();
    let parity_terms = elim
        .reduced
        .iter()
        .map(|row| {
            info_positions
                .iter()
                .enumerate()
                .filter(|(_, &c)| row[c / 64] >> (c % 64) & 1 == 1)
                .map(|(t, _)| t)
                .collect()
        })
        .collect();
    let col_perm = info_positions.iter().chain(&elim.pivots).copied().collect();
    LinearCode {
        h: h.clone(),
        info_positions,
        parity_positions: elim.pivots,
        parity_terms,
        col_perm,
    }
}

impl LinearCode {
    pub fn parity_check(&self) -> &ParityCheckMatrix {
        &self.h
    }

    /// Codeword length.
    pub fn n(&self) -> usize {
        self.h.cols
    }

    /// Message length.
    pub fn k_info(&self) -> usize {
        self.info_positions.len()
    }

    pub fn rank(&self) -> usize {
        self.parity_positions.len()
    }

    pub fn rate(&self) -> f64 {
        self.k_info() as f64 / self.n() as f64
    }

    /// Codeword positions carrying the message bits, in message order.
    pub fn info_positions(&self) -> &[usize] {
        &self.info_positions
    }

    /// Column permutation that puts the code in systematic `[I | P^T]` form.
    pub fn col_perm(&self) -> &[usize] {
        &self.col_perm
    }

    /// Generator rows in natural column order (`k_info` rows of length `n`).
    pub fn generator(&self) -> Vec<Vec<u8>> {
        (0..self.k_info())
            .map(|t| {
                let mut msg = vec![0u8; self.k_info()];
                msg[t] = 1;
                self.encode_unchecked(&msg)
            })
            .collect()
    }

    /// Generator rows in systematic column order, i.e. `[I | P^T]`.
    pub fn systematic_generator(&self) -> Vec<Vec<u8>> {
        self.generator()
            .into_iter()
            .map(|row| self.col_perm.iter().map(|&c| row[c]).collect())
            .collect()
    }

    /// Systematically encodes a message of `k_info` bits.
    pub fn encode(&self, message: &[u8]) -> Result<Vec<u8>> {
        if message.len() != self.k_info() {
            return Err(contract(format!(
                "message has {} bits, code expects {}",
                message.len(),
                self.k_info()
            )));
        }
        Ok(self.encode_unchecked(message))
    }

    pub(crate) fn encode_unchecked(&self, message: &[u8]) -> Vec<u8> {
        let mut c = vec![0u8; self.n()];
        for (&pos, &b) in self.info_positions.iter().zip(message) {
            c[pos] = b & 1;
        }
        for (&pos, terms) in self.parity_positions.iter().zip(&self.parity_terms) {
            c[pos] = terms.iter().fold(0, |acc, &t| acc ^ (message[t] & 1));
        }
        c
    }

    /// Reads the message bits back out of a codeword-length word.
    pub fn extract_message(&self, word: &[u8]) -> Vec<u8> {
        self.info_positions.iter().map(|&p| word[p]).collect()
    }
}

/// Computes `H c^T` over GF(2).
pub fn syndrome(h: &ParityCheckMatrix, word: &[u8]) -> Result<Vec<u8>> {
    if word.len() != h.cols {
        return Err(contract(format!(
            "word has {} bits, matrix has {} columns",
            word.len(),
            h.cols
        )));
    }
    Ok(syndrome_unchecked(h, word))
}

pub(crate) fn syndrome_unchecked(h: &ParityCheckMatrix, word: &[u8]) -> Vec<u8> {
    h.row_cols
        .iter()
        .map(|list| list.iter().fold(0, |acc, &c| acc ^ (word[c] & 1)))
        .collect()
}

/// Appends zero bits so the length is a multiple of `bits_per_symbol`.
pub fn zero_pad(word: &[u8], bits_per_symbol: usize) -> Vec<u8> {
    let bps = bits_per_symbol.max(1);
    let padded = word.len().div_ceil(bps) * bps;
    let mut out = word.to_vec();
    out.resize(padded, 0);
    out
}

/// Drops trailing pad LLRs, keeping the first `n`.
pub fn strip_pad_llrs(llrs: &[f64], n: usize) -> Result<Vec<f64>> {
    if llrs.len() < n {
        return Err(contract(format!("{} LLRs cannot cover {n} code bits", llrs.len())));
    }
    Ok(llrs[..n].to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn hamming74() -> ParityCheckMatrix {
        ParityCheckMatrix::from_dense(&[
            vec![1, 0, 1, 0, 1, 0, 1],
            vec![0, 1, 1, 0, 0, 1, 1],
            vec![0, 0, 0, 1, 1, 1, 1],
        ])
        .unwrap()
    }

    #[test]
    fn regular_small() {
        let h = build_regular_code(6, 2, 3, 0).unwrap();
        assert_eq!((h.rows(), h.cols()), (4, 6));
        assert_eq!(h.regular_weights(), Some((2, 3)));
    }

    #[test]
    fn regular_default_dimensions() {
        let h = build_regular_code(63, 2, 7, 1).unwrap();
        assert_eq!((h.rows(), h.cols()), (18, 63));
        assert_eq!(h.regular_weights(), Some((2, 7)));
        assert_eq!(h.four_cycles(), 0);
        // even column weight: the rows sum to zero, so one row is redundant
        assert_eq!(h.rank(), 17);
    }

    #[test]
    fn regular_weight_three() {
        let h = build_regular_code(63, 3, 7, 9).unwrap();
        assert_eq!(h.rows(), 27);
        let code = derive_generator(&h);
        assert!(code.k_info() >= 36);
    }

    #[test]
    fn regular_infeasible() {
        let err = build_regular_code(63, 2, 5, 0).unwrap_err();
        assert!(err.to_string().contains("not divisible"), "{err}");
        assert!(build_regular_code(63, 1, 7, 0).is_err());
    }

    #[test]
    fn default_code_is_full_rank() {
        let h = default_parity_check(DEFAULT_CODE_SEED);
        assert_eq!((h.rows(), h.cols()), (18, 63));
        let cw = h.col_weights();
        assert_eq!(cw[0], 3);
        assert!(cw[1..].iter().all(|&w| w == 2));
        let mut rw = h.row_weights();
        rw.sort();
        assert_eq!(rw[..17], [7; 17]);
        assert_eq!(rw[17], 8);
        assert_eq!(h.four_cycles(), 0);
        let code = derive_generator(&h);
        assert_eq!(code.k_info(), 45);
        assert!((code.rate() - 0.714).abs() < 5e-4);
    }

    #[test]
    fn column_weight_profile() {
        let h = build_code_with_column_weights(&[3; 63], 18, 4).unwrap();
        assert!(h.row_weights().iter().all(|&w| w == 10 || w == 11));
        assert!(build_code_with_column_weights(&[1, 2], 2, 0).is_err());
    }

    #[test]
    fn construction_is_deterministic() {
        let a = build_regular_code(63, 2, 7, 42).unwrap();
        let b = build_regular_code(63, 2, 7, 42).unwrap();
        assert_eq!(a, b);
        let c = build_regular_code(63, 2, 7, 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn hamming_generator_by_enumeration() {
        let h = hamming74();
        let code = derive_generator(&h);
        assert_eq!(code.k_info(), 4);
        // brute force: the 16 codewords are exactly the words with zero syndrome
        let mut brute: Vec<Vec<u8>> = (0u32..128)
            .map(|v| (0..7).map(|i| (v >> i & 1) as u8).collect::<Vec<u8>>())
            .filter(|w| syndrome(&h, w).unwrap().iter().all(|&s| s == 0))
            .collect();
        let mut encoded: Vec<Vec<u8>> = (0u32..16)
            .map(|v| {
                let m: Vec<u8> = (0..4).map(|i| (v >> i & 1) as u8).collect();
                code.encode(&m).unwrap()
            })
            .collect();
        brute.sort();
        encoded.sort();
        assert_eq!(brute, encoded);
        // message 1000 lands on the first info position
        let c = code.encode(&[1, 0, 0, 0]).unwrap();
        assert_eq!(code.extract_message(&c), vec![1, 0, 0, 0]);
        let unique: Vec<&Vec<u8>> = encoded
            .iter()
            .filter(|w| code.extract_message(w) == [1, 0, 0, 0])
            .collect();
        assert_eq!(unique, vec![&c]);
    }

    #[test]
    fn systematic_form() {
        let code = derive_generator(&hamming74());
        let g = code.systematic_generator();
        for (t, row) in g.iter().enumerate() {
            for (j, &b) in row[..code.k_info()].iter().enumerate() {
                assert_eq!(b, u8::from(t == j));
            }
        }
        for row in code.generator() {
            assert!(syndrome(code.parity_check(), &row).unwrap().iter().all(|&s| s == 0));
        }
    }

    #[test]
    fn identity_has_no_messages() {
        let h = ParityCheckMatrix::from_dense(&[vec![1, 0, 0], vec![0, 1, 0], vec![0, 0, 1]]).unwrap();
        let code = derive_generator(&h);
        assert_eq!(code.k_info(), 0);
        assert!(code.generator().is_empty());
        assert_eq!(code.encode(&[]).unwrap(), vec![0, 0, 0]);
    }

    #[test]
    fn rank_deficient_reports_actual_rank() {
        let h = ParityCheckMatrix::from_dense(&[vec![1, 1, 0], vec![0, 1, 1], vec![1, 0, 1]]).unwrap();
        let code = derive_generator(&h);
        assert_eq!(code.rank(), 2);
        assert_eq!(code.k_info(), 1);
    }

    #[test]
    fn encode_length_mismatch() {
        let code = derive_generator(&hamming74());
        assert!(matches!(code.encode(&[1, 0]), Err(Error::Contract(_))));
        assert!(code.encode(&[0; 4]).unwrap().iter().all(|&b| b == 0));
    }

    #[test]
    fn syndrome_of_single_flip_is_column() {
        let h = hamming74();
        let code = derive_generator(&h);
        let c = code.encode(&[1, 1, 0, 1]).unwrap();
        for j in 0..7 {
            let mut e = c.clone();
            e[j] ^= 1;
            let s = syndrome(&h, &e).unwrap();
            let column: Vec<u8> = (0..3).map(|r| u8::from(h.get(r, j))).collect();
            assert_eq!(s, column);
        }
        assert!(syndrome(&h, &[0; 6]).is_err());
    }

    #[test]
    fn padding() {
        let c = vec![1u8; 63];
        let p = zero_pad(&c, 2);
        assert_eq!(p.len(), 64);
        assert_eq!(p[63], 0);
        assert_eq!(zero_pad(&[1u8; 64], 2).len(), 64);
        assert_eq!(zero_pad(&c, 4).len(), 64);
        let llrs: Vec<f64> = (0..64).map(f64::from).collect();
        assert_eq!(strip_pad_llrs(&llrs, 63).unwrap(), llrs[..63].to_vec());
        assert_eq!(strip_pad_llrs(&llrs[..63], 63).unwrap().len(), 63);
        assert!(strip_pad_llrs(&llrs[..62], 63).is_err());
    }

    #[test]
    fn hamming_alist() {
        let h = hamming74();
        let text = save_alist(&h);
        let mut w = load_alist(&text).unwrap().col_weights();
        w.sort();
        assert_eq!(w, vec![1, 1, 1, 2, 2, 2, 3]);
        assert_eq!(load_alist(&text).unwrap(), h);
    }

    #[test]
    fn alist_errors() {
        assert!(matches!(load_alist(""), Err(Error::Alist { .. })));
        let h = hamming74();
        let text = save_alist(&h);
        // corrupt the first column list (line 5)
        let mut lines: Vec<String> = text.lines().map(String::from).collect();
        lines[4] = "2 0 0".into();
        let err = load_alist(&lines.join("\n")).unwrap_err();
        match err {
            Error::Alist { line, .. } => assert_eq!(line, 5),
            e => panic!("unexpected {e}"),
        }
        let truncated: String = text.lines().take(8).collect::<Vec<_>>().join("\n");
        assert!(load_alist(&truncated).is_err());
    }

    #[test]
    fn alist_canonical_reserialization() {
        // unpadded lists with extra blank lines parse and re-serialize canonically
        let loose = "7 3\n3 4\n1 1 2 1 2 2 3\n4 4 4\n\n1\n2\n1 2\n3\n1 3\n2 3\n1 2 3\n1 3 5 7\n2 3 6 7\n4 5 6 7\n";
        let h = load_alist(loose).unwrap();
        let canon = save_alist(&h);
        assert_eq!(save_alist(&load_alist(&canon).unwrap()), canon);
        assert!(canon.lines().nth(4).unwrap() == "1 0 0");
    }
}
