//! Leakage-aware stratified train/val assignment.
//!
//! Patches are grouped into spatial blocks and whole blocks are assigned to
//! one side, so no block ever contributes to both splits. Each side has a
//! per-class target count (`train_ratio · n_c` for train, the rest for val).
//! Blocks are placed greedily, largest first, on the side where adding the
//! block brings the counts closest to that side's targets in L1; ties go to
//! the side with the larger remaining deficit. A seeded shuffle fixes the
//! order among equally sized blocks. A local search then moves or exchanges
//! blocks while that lowers the achieved class divergence.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{BlockId, DataError, PatchRecord, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Split {
    Train,
    Val,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "val",
        })
    }
}

impl FromStr for Split {
    type Err = DataError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            other => Err(DataError::Input(format!("unknown split {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SplitParams {
    /// Target fraction of patches in train, in (0, 1).
    pub train_ratio: f64,
    /// Block edge in patches.
    pub block_size: usize,
    pub seed: u64,
    /// Maximum accepted L1 class-proportion divergence.
    pub tolerance: f64,
}

impl Default for SplitParams {
    fn default() -> Self {
        Self {
            train_ratio: 0.8,
            block_size: 4,
            seed: 0,
            tolerance: 0.02,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SplitManifest {
    /// Records in their original order, with `block_id` recomputed for
    /// `params.block_size`.
    pub entries: Vec<(PatchRecord, Split)>,
    pub params: SplitParams,
    pub num_classes: usize,
    /// Achieved L1 distance between train and val class proportions.
    pub divergence: f64,
    pub warnings: Vec<String>,
}

impl SplitManifest {
    pub fn records(&self, split: Split) -> impl Iterator<Item = &PatchRecord> {
        self.entries.iter().filter(move |(_, s)| *s == split).map(|(r, _)| r)
    }

    pub fn class_counts(&self, split: Split) -> Vec<u64> {
        let mut counts = vec![0u64; self.num_classes];
        for r in self.records(split) {
            counts[r.class_index] += 1;
        }
        counts
    }

    pub fn block_ids(&self, split: Split) -> BTreeSet<&BlockId> {
        self.records(split).map(|r| &r.block_id).collect()
    }
}

/// Class proportions; all zeros for an empty count vector.
fn proportions(counts: &[u64]) -> Vec<f64> {
    let total = counts.iter().sum::<u64>().max(1);
    counts.iter().map(|&c| c as f64 / total as f64).collect()
}

/// L1 distance between the class-proportion vectors of two count vectors.
pub fn class_divergence(a: &[u64], b: &[u64]) -> f64 {
    proportions(a)
        .iter()
        .zip(proportions(b))
        .map(|(x, y)| (x - y).abs())
        .sum()
}

/// Change in `Σ_c |target_c − count_c|` from adding `block` to `counts`.
fn placement_cost(counts: &[u64], target: &[f64], block: &[u64]) -> f64 {
    counts
        .iter()
        .zip(target)
        .zip(block)
        .map(|((&n, &t), &b)| (t - (n + b) as f64).abs() - (t - n as f64).abs())
        .sum()
}

fn deficit(counts: &[u64], target: &[f64]) -> f64 {
    counts.iter().zip(target).map(|(&n, &t)| t - n as f64).sum()
}

/// Largest allowed deviation of the train patch fraction from the requested
/// ratio during refinement.
pub const RATIO_BAND: f64 = 0.05;

fn with_block(counts: &[u64], block: &[u64], add: bool) -> Vec<u64> {
    counts
        .iter()
        .zip(block)
        .map(|(&n, &b)| if add { n + b } else { n - b })
        .collect()
}

/// Local search on the achieved divergence: repeatedly applies the single
/// block move (or, failing that, the train/val block exchange) that lowers it
/// most, keeping both sides non-empty and the train
/// fraction within [`RATIO_BAND`] of the ratio.
fn refine(
    hist: &[(BlockId, Vec<u64>, usize)],
    side: &mut BTreeMap<BlockId, Split>,
    train: &mut Vec<u64>,
    val: &mut Vec<u64>,
    ratio: f64,
) {
    let total = (train.iter().sum::<u64>() + val.iter().sum::<u64>()) as f64;
    for _ in 0..4 * hist.len() {
        if train.iter().sum::<u64>() == 0 || val.iter().sum::<u64>() == 0 {
            return;
        }
        let current = class_divergence(train, val);
        let mut best: Option<(usize, f64, Vec<u64>, Vec<u64>)> = None;
        for (i, (id, h, size)) in hist.iter().enumerate() {
            let to_val = side[id] == Split::Train;
            let (from, to) = if to_val { (&*train, &*val) } else { (&*val, &*train) };
            if from.iter().sum::<u64>() == *size as u64 {
                continue;
            }
            let (from, to) = (with_block(from, h, false), with_block(to, h, true));
            let (t, v) = if to_val { (from, to) } else { (to, from) };
            let frac = t.iter().sum::<u64>() as f64 / total;
            if (frac - ratio).abs() > RATIO_BAND {
                continue;
            }
            let d = class_divergence(&t, &v);
            if d < current - 1e-12 && best.as_ref().is_none_or(|b| d < b.1) {
                best = Some((i, d, t, v));
            }
        }
        let (moved, t, v) = match best {
            Some((i, _, t, v)) => (vec![i], t, v),
            None => match best_swap(hist, side, train, val, ratio, total, current) {
                Some(found) => found,
                None => return,
            },
        };
        for i in moved {
            let id = &hist[i].0;
            let flipped = if side[id] == Split::Train {
                Split::Val
            } else {
                Split::Train
            };
            side.insert(id.clone(), flipped);
        }
        *train = t;
        *val = v;
    }
}

/// Blocks to flip with the resulting train and val counts.
type Move = (Vec<usize>, Vec<u64>, Vec<u64>);

/// Best exchange of one train block with one val block, if it improves.
fn best_swap(
    hist: &[(BlockId, Vec<u64>, usize)],
    side: &BTreeMap<BlockId, Split>,
    train: &[u64],
    val: &[u64],
    ratio: f64,
    total: f64,
    current: f64,
) -> Option<Move> {
    let (ti, vi): (Vec<usize>, Vec<usize>) = (0..hist.len()).partition(|&i| side[&hist[i].0] == Split::Train);
    let mut best: Option<(Move, f64)> = None;
    for &a in &ti {
        let t_minus = with_block(train, &hist[a].1, false);
        let v_plus = with_block(val, &hist[a].1, true);
        for &b in &vi {
            let t = with_block(&t_minus, &hist[b].1, true);
            let v = with_block(&v_plus, &hist[b].1, false);
            let (nt, nv) = (t.iter().sum::<u64>(), v.iter().sum::<u64>());
            if nt == 0 || nv == 0 || (nt as f64 / total - ratio).abs() > RATIO_BAND {
                continue;
            }
            let d = class_divergence(&t, &v);
            if d < current - 1e-12 && best.as_ref().is_none_or(|x| d < x.1) {
                best = Some(((vec![a, b], t, v), d));
            }
        }
    }
    best.map(|(m, _)| m)
}

/// Assigns whole blocks to train or val; fails if the achieved class
/// divergence exceeds `params.tolerance`.
pub fn stratified_block_split(
    records: &[PatchRecord],
    num_classes: usize,
    params: &SplitParams,
) -> Result<SplitManifest> {
    if records.is_empty() {
        return Err(DataError::Input("no patch records to split".into()));
    }
    if !(params.train_ratio > 0.0 && params.train_ratio < 1.0) {
        return Err(DataError::Input(format!(
            "train ratio must be in (0, 1), got {}",
            params.train_ratio
        )));
    }
    if params.block_size == 0 {
        return Err(DataError::Input("block size must be >= 1".into()));
    }
    if let Some(r) = records.iter().find(|r| r.class_index >= num_classes) {
        return Err(DataError::Input(format!(
            "record class {} outside 0..{num_classes}",
            r.class_index
        )));
    }

    let mut blocks: BTreeMap<BlockId, Vec<usize>> = BTreeMap::new();
    for (i, r) in records.iter().enumerate() {
        blocks.entry(r.block_for(params.block_size)).or_default().push(i);
    }
    let mut hist: Vec<(BlockId, Vec<u64>, usize)> = blocks
        .iter()
        .map(|(id, members)| {
            let mut h = vec![0u64; num_classes];
            for &m in members {
                h[records[m].class_index] += 1;
            }
            (id.clone(), h, members.len())
        })
        .collect();

    let mut warnings = Vec::new();
    for c in 0..num_classes {
        let present = hist.iter().filter(|(_, h, _)| h[c] > 0).count();
        if present == 1 {
            let msg = format!("class {c} occurs in a single block; it cannot appear in both splits");
            log::warn!("{msg}");
            warnings.push(msg);
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    hist.shuffle(&mut rng);
    hist.sort_by_key(|h| std::cmp::Reverse(h.2));

    let mut totals = vec![0u64; num_classes];
    for r in records {
        totals[r.class_index] += 1;
    }
    let target_train: Vec<f64> = totals.iter().map(|&n| n as f64 * params.train_ratio).collect();
    let target_val: Vec<f64> = totals.iter().zip(&target_train).map(|(&n, &t)| n as f64 - t).collect();

    let mut train = vec![0u64; num_classes];
    let mut val = vec![0u64; num_classes];
    let mut side: BTreeMap<BlockId, Split> = BTreeMap::new();
    for (id, h, _) in &hist {
        let to_train = placement_cost(&train, &target_train, h);
        let to_val = placement_cost(&val, &target_val, h);
        let choice = if to_val < to_train
            || (to_val == to_train && deficit(&val, &target_val) > deficit(&train, &target_train))
        {
            Split::Val
        } else {
            Split::Train
        };
        let dst = if choice == Split::Val { &mut val } else { &mut train };
        dst.iter_mut().zip(h).for_each(|(a, b)| *a += b);
        side.insert(id.clone(), choice);
    }

    refine(&hist, &mut side, &mut train, &mut val, params.train_ratio);

    if train.iter().sum::<u64>() == 0 || val.iter().sum::<u64>() == 0 {
        return Err(DataError::Stratification {
            achieved: 2.0,
            tolerance: params.tolerance,
        });
    }
    let divergence = class_divergence(&train, &val);
    if divergence > params.tolerance {
        return Err(DataError::Stratification {
            achieved: divergence,
            tolerance: params.tolerance,
        });
    }

    let entries = records
        .iter()
        .map(|r| {
            let block_id = r.block_for(params.block_size);
            let s = side[&block_id];
            (PatchRecord { block_id, ..r.clone() }, s)
        })
        .collect();
    Ok(SplitManifest {
        entries,
        params: *params,
        num_classes,
        divergence,
        warnings,
    })
}
