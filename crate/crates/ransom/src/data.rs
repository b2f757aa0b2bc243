//! Dataset readers and generators: LibSVM text, MovieLens-style ratings,
//! synthetic low-rank matrices and a synthetic splice-site lookalike.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::io::BufRead;

use ransom_core::problems::{DesignMatrix, Rating};
use ransom_core::rng::{RngState, StreamRng};
use ransom_core::Consumer;

use crate::error::{HarnessError, Result};

/// Parse LibSVM lines `label idx:val ...` with 1-based indices into a dense
/// matrix. Labels `0` and `-1` map to `-1`, `1`/`+1` to `+1`. Without an
/// explicit width the largest index seen is used.
pub fn parse_libsvm<R: BufRead>(reader: R, n_features: Option<usize>) -> Result<DesignMatrix> {
    let mut rows: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut labels = Vec::new();
    let mut width = 0usize;
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| HarnessError::parse("libsvm", lineno, e.to_string()))?;
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut tokens = line.split_whitespace();
        let label_tok = tokens.next().expect("nonempty line");
        let label: f64 = label_tok
            .parse()
            .map_err(|_| HarnessError::parse("libsvm", lineno, format!("bad label {label_tok:?}")))?;
        let label = match label {
            l if l == 1.0 => 1.0,
            l if l == 0.0 || l == -1.0 => -1.0,
            other => return Err(HarnessError::parse("libsvm", lineno, format!("label {other} is not binary"))),
        };
        let mut entries = Vec::new();
        for tok in tokens {
            let (idx, val) = tok
                .split_once(':')
                .ok_or_else(|| HarnessError::parse("libsvm", lineno, format!("expected idx:val, got {tok:?}")))?;
            let idx: usize = idx
                .parse()
                .map_err(|_| HarnessError::parse("libsvm", lineno, format!("bad index {idx:?}")))?;
            if idx == 0 {
                return Err(HarnessError::parse("libsvm", lineno, "indices are 1-based"));
            }
            let val: f64 = val
                .parse()
                .map_err(|_| HarnessError::parse("libsvm", lineno, format!("bad value {val:?}")))?;
            if !val.is_finite() {
                return Err(HarnessError::parse("libsvm", lineno, format!("non-finite value {val}")));
            }
            width = width.max(idx);
            entries.push((idx - 1, val));
        }
        rows.push(entries);
        labels.push(label);
    }
    let n = match n_features {
        Some(n) if n < width => {
            return Err(HarnessError::config(format!("feature index {width} exceeds declared width {n}")))
        }
        Some(n) => n,
        None => width,
    };
    let mut values = vec![0.0; rows.len() * n];
    for (r, entries) in rows.iter().enumerate() {
        for &(c, v) in entries {
            values[r * n + c] = v;
        }
    }
    Ok(DesignMatrix::new(n, values, labels)?)
}

/// Canonical LibSVM text: `+1`/`-1` labels, ascending indices, zeros
/// dropped, shortest round-trip float formatting.
pub fn write_libsvm(data: &DesignMatrix) -> String {
    let mut out = String::new();
    for i in 0..data.n_samples {
        out.push_str(if data.labels[i] > 0.0 { "+1" } else { "-1" });
        for (j, v) in data.row(i).iter().enumerate() {
            if *v != 0.0 {
                let _ = write!(out, " {}:{}", j + 1, v);
            }
        }
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatingEntry {
    pub user: usize,
    pub item: usize,
    pub rating: f64,
    pub timestamp: u64,
}

/// Filtered ratings with contiguous indices. `user_ids[k]` is the raw id of
/// user `k`; likewise for items.
#[derive(Debug, Clone, PartialEq)]
pub struct RatingsTable {
    pub entries: Vec<RatingEntry>,
    pub user_ids: Vec<u64>,
    pub item_ids: Vec<u64>,
}

impl RatingsTable {
    pub fn shape(&self) -> (usize, usize) {
        (self.user_ids.len(), self.item_ids.len())
    }

    pub fn ratings(&self) -> Vec<Rating> {
        self.entries.iter().map(|e| Rating { row: e.user, col: e.item, value: e.rating }).collect()
    }
}

/// Parse `user item rating timestamp` lines (tab, space or comma separated;
/// a `userId,...` header line is skipped), keep
/// the latest rating per pair, then keep the `top_users` users and
/// `top_items` items with the most ratings (ties: lower raw id first).
/// Selected ids are remapped to `0..` in ascending raw-id order.
pub fn parse_movielens<R: BufRead>(reader: R, top_users: usize, top_items: usize) -> Result<RatingsTable> {
    let mut latest: HashMap<(u64, u64), (u64, f64)> = HashMap::new();
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| HarnessError::parse("ratings", lineno, e.to_string()))?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> =
            line.split(|c: char| c == ',' || c.is_whitespace()).filter(|f| !f.is_empty()).collect();
        if lineno == 1 && fields.first().is_some_and(|f| f.parse::<u64>().is_err()) {
            continue;
        }
        if fields.len() != 4 {
            return Err(HarnessError::parse("ratings", lineno, format!("expected 4 fields, got {}", fields.len())));
        }
        let bad = |what: &str, tok: &str| HarnessError::parse("ratings", lineno, format!("bad {what} {tok:?}"));
        let user: u64 = fields[0].parse().map_err(|_| bad("user", fields[0]))?;
        let item: u64 = fields[1].parse().map_err(|_| bad("item", fields[1]))?;
        let rating: f64 = fields[2].parse().map_err(|_| bad("rating", fields[2]))?;
        let ts: u64 = fields[3].parse().map_err(|_| bad("timestamp", fields[3]))?;
        if !rating.is_finite() {
            return Err(bad("rating", fields[2]));
        }
        match latest.get(&(user, item)) {
            Some(&(prev, _)) if prev > ts => {}
            _ => {
                latest.insert((user, item), (ts, rating));
            }
        }
    }

    let mut user_count: HashMap<u64, usize> = HashMap::new();
    let mut item_count: HashMap<u64, usize> = HashMap::new();
    for &(u, i) in latest.keys() {
        *user_count.entry(u).or_default() += 1;
        *item_count.entry(i).or_default() += 1;
    }
    let user_ids = top_by_count(user_count, top_users);
    let item_ids = top_by_count(item_count, top_items);
    let user_index: HashMap<u64, usize> = user_ids.iter().enumerate().map(|(k, &id)| (id, k)).collect();
    let item_index: HashMap<u64, usize> = item_ids.iter().enumerate().map(|(k, &id)| (id, k)).collect();

    let mut entries: Vec<RatingEntry> = latest
        .into_iter()
        .filter_map(|((u, i), (timestamp, rating))| {
            Some(RatingEntry { user: *user_index.get(&u)?, item: *item_index.get(&i)?, rating, timestamp })
        })
        .collect();
    entries.sort_by_key(|e| (e.user, e.item));
    Ok(RatingsTable { entries, user_ids, item_ids })
}

fn top_by_count(counts: HashMap<u64, usize>, keep: usize) -> Vec<u64> {
    let mut ranked: Vec<(u64, usize)> = counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    ranked.truncate(keep);
    let mut ids: Vec<u64> = ranked.into_iter().map(|(id, _)| id).collect();
    ids.sort_unstable();
    ids
}

/// Dense `U Vᵀ + noise` with an observation mask.
#[derive(Debug, Clone, PartialEq)]
pub struct LowRankMatrix {
    pub rows: usize,
    pub cols: usize,
    /// Noise-free `U Vᵀ`, row-major.
    pub clean: Vec<f64>,
    /// `clean` plus i.i.d. Gaussian noise.
    pub values: Vec<f64>,
    pub mask: Vec<bool>,
}

impl LowRankMatrix {
    pub fn observed(&self) -> Vec<Rating> {
        (0..self.rows * self.cols)
            .filter(|&k| self.mask[k])
            .map(|k| Rating { row: k / self.cols, col: k % self.cols, value: self.values[k] })
            .collect()
    }
}

/// Entries of `U` (`rows × rank`) and `V` (`cols × rank`) are standard normal
/// scaled by `1/√rank`; each entry is observed with probability `density`.
pub fn synth_lowrank(
    rows: usize,
    cols: usize,
    rank: usize,
    noise_sigma: f64,
    density: f64,
    rng: &mut StreamRng,
) -> Result<LowRankMatrix> {
    if rank == 0 || rank > rows.min(cols) {
        return Err(HarnessError::config(format!("rank {rank} must lie in 1..={}", rows.min(cols))));
    }
    if !(0.0..=1.0).contains(&density) || !(noise_sigma >= 0.0) {
        return Err(HarnessError::config("density must lie in [0, 1] and noise must be nonnegative"));
    }
    let scale = 1.0 / (rank as f64).sqrt();
    let u: Vec<f64> = (0..rows * rank).map(|_| scale * rng.normal()).collect();
    let v: Vec<f64> = (0..cols * rank).map(|_| scale * rng.normal()).collect();
    let clean = ransom_core::linalg::matmul(&u, &ransom_core::linalg::transpose(&v, cols, rank), rows, rank, cols);
    let values = clean.iter().map(|c| c + noise_sigma * rng.normal()).collect();
    let mask = (0..rows * cols).map(|_| density >= 1.0 || rng.uniform() < density).collect();
    Ok(LowRankMatrix { rows, cols, clean, values, mask })
}

/// Feature codes for the four bases.
pub const BASE_CODES: [f64; 4] = [-1.0, -1.0 / 3.0, 1.0 / 3.0, 1.0];

/// Sequence length of the splice-like data.
pub const SPLICE_WIDTH: usize = 60;

/// Synthetic stand-in for the splice-junction task: 60 positions, each one
/// of four bases encoded by [`BASE_CODES`]. The label is the sign of a score
/// built from positions 20..40 (a linear and a quadratic term in the code per
/// position) plus a dinucleotide bonus at positions 30-31; a fraction `flip`
/// of labels is then inverted.
pub fn synthetic_splice(n: usize, flip: f64, rng: &mut StreamRng) -> DesignMatrix {
    let (lin, quad) = splice_weights();
    let mut values = Vec::with_capacity(n * SPLICE_WIDTH);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let bases: Vec<usize> = (0..SPLICE_WIDTH).map(|_| rng.index(4)).collect();
        let mut score = -0.1;
        for (j, &b) in bases.iter().enumerate() {
            let c = BASE_CODES[b];
            score += lin[j] * c + quad[j] * (c * c - 5.0 / 9.0);
        }
        if bases[29] == 2 && bases[30] == 3 {
            score += 3.0;
        }
        let mut label = if score > 0.0 { 1.0 } else { -1.0 };
        if rng.uniform() < flip {
            label = -label;
        }
        values.extend(bases.iter().map(|&b| BASE_CODES[b]));
        labels.push(label);
    }
    DesignMatrix::new(SPLICE_WIDTH, values, labels).expect("generated data is valid")
}

/// Fixed per-position weights, nonzero on positions 20..40 only.
fn splice_weights() -> (Vec<f64>, Vec<f64>) {
    let mut rng = RngState::new(0x5911CE).split(Consumer::Data).rng();
    let mut lin = vec![0.0; SPLICE_WIDTH];
    let mut quad = vec![0.0; SPLICE_WIDTH];
    for j in 20..40 {
        // positions next to the junction carry most of the signal
        let emphasis = if (27..33).contains(&j) { 2.5 } else { 1.0 };
        lin[j] = emphasis * (2.0 * rng.uniform() - 1.0);
        quad[j] = 0.3 * (rng.uniform() - 0.5);
    }
    (lin, quad)
}

/// Seeded shuffle split into `(train, test)` index lists; disjoint and
/// covering `0..n`, with `round(n · test_fraction)` test items.
pub fn split_indices(n: usize, test_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(0.0..1.0).contains(&test_fraction) {
        return Err(HarnessError::config(format!("test fraction must lie in [0, 1), got {test_fraction}")));
    }
    let mut rng = RngState::new(seed).split(Consumer::Data).fork(0x5917).rng();
    let mut idx: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.index(i + 1);
        idx.swap(i, j);
    }
    let n_test = (n as f64 * test_fraction).round() as usize;
    let test = idx.split_off(n - n_test);
    Ok((idx, test))
}
