use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{assign_region, build_tree, ClusterTree, GeoSample, Threshold};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvSelection {
    pub tree: ClusterTree,
    pub selected_fold: usize,
    /// L1 score of the tree trained without fold i, for every i.
    pub fold_scores: Vec<f64>,
}

/// Σ over regions of |leaf WER − corpus WER of the held-out samples routed
/// there|. Regions receiving no held-out samples contribute nothing.
pub fn cv_score(tree: &ClusterTree, held_out: &[GeoSample]) -> f64 {
    let mut acc: BTreeMap<usize, (usize, usize)> = BTreeMap::new();
    for s in held_out {
        let e = acc.entry(assign_region(tree, s.lon, s.lat)).or_default();
        e.0 += s.edit_errors;
        e.1 += s.ref_words;
    }
    tree.regions()
        .iter()
        .filter_map(|r| {
            let &(e, w) = acc.get(&r.region_id)?;
            (w > 0).then(|| (r.wer - e as f64 / w as f64).abs())
        })
        .sum()
}

/// Builds one tree per fold on the other folds and keeps the one with the
/// lowest held-out L1 score; ties go to the lower fold index.
pub fn select_tree_from_folds(folds: &[Vec<GeoSample>], threshold: impl Into<Threshold>) -> Result<CvSelection> {
    let threshold = threshold.into();
    if folds.len() < 2 {
        return Err(Error::contract(format!("need at least 2 folds, got {}", folds.len())));
    }
    if let Some(i) = folds.iter().position(Vec::is_empty) {
        return Err(Error::contract(format!("fold {i} is empty")));
    }
    let mut best: Option<(usize, f64, ClusterTree)> = None;
    let mut fold_scores = Vec::with_capacity(folds.len());
    for (i, held_out) in folds.iter().enumerate() {
        let train: Vec<GeoSample> = folds
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != i)
            .flat_map(|(_, f)| f.iter().cloned())
            .collect();
        let tree = build_tree(&train, threshold)?;
        let score = cv_score(&tree, held_out);
        fold_scores.push(score);
        if best.as_ref().is_none_or(|(_, s, _)| score < *s) {
            best = Some((i, score, tree));
        }
    }
    let (selected_fold, _, tree) = best.expect("at least two folds");
    Ok(CvSelection {
        tree,
        selected_fold,
        fold_scores,
    })
}

/// Sample indices per fold: a seeded shuffle of 0..n dealt round-robin.
pub fn cv_folds(n: usize, k: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut folds = vec![Vec::new(); k];
    for (pos, idx) in order.into_iter().enumerate() {
        folds[pos % k].push(idx);
    }
    folds
}

/// [`cv_folds`], then [`select_tree_from_folds`].
pub fn select_tree_cv(
    samples: &[GeoSample],
    threshold: impl Into<Threshold>,
    k: usize,
    seed: u64,
) -> Result<CvSelection> {
    if k < 2 {
        return Err(Error::contract(format!("k-fold selection needs k >= 2, got {k}")));
    }
    if samples.len() < k {
        return Err(Error::contract(format!(
            "{} samples cannot fill {k} folds",
            samples.len()
        )));
    }
    let folds: Vec<Vec<GeoSample>> = cv_folds(samples.len(), k, seed)
        .into_iter()
        .map(|f| f.into_iter().map(|i| samples[i].clone()).collect())
        .collect();
    select_tree_from_folds(&folds, threshold)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub threshold: usize,
    pub selection: CvSelection,
    /// (threshold, max leaf WER − min leaf WER) for each candidate.
    pub disparities: Vec<(usize, f64)>,
}

/// Runs CV selection for each threshold and keeps the one whose tree shows
/// the largest gap between its highest and lowest region WER.
pub fn sweep_thresholds(samples: &[GeoSample], thresholds: &[usize], k: usize, seed: u64) -> Result<SweepResult> {
    let mut best: Option<(usize, f64, CvSelection)> = None;
    let mut disparities = Vec::with_capacity(thresholds.len());
    for &t in thresholds {
        let sel = select_tree_cv(samples, t, k, seed)?;
        let wers: Vec<f64> = sel.tree.regions().iter().map(|r| r.wer).collect();
        let gap =
            wers.iter().copied().fold(f64::NEG_INFINITY, f64::max) - wers.iter().copied().fold(f64::INFINITY, f64::min);
        disparities.push((t, gap));
        if best.as_ref().is_none_or(|(_, g, _)| gap > *g) {
            best = Some((t, gap, sel));
        }
    }
    let (threshold, _, selection) = best.ok_or_else(|| Error::contract("no thresholds to sweep"))?;
    Ok(SweepResult {
        threshold,
        selection,
        disparities,
    })
}
