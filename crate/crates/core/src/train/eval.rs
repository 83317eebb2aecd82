use rayon::prelude::*;

use super::AccessLog;
use crate::error::{Error, Result};
use crate::geo::{assign_region, ClusterTree, GeoSample};
use crate::metrics::{edit_distance, region_wer_stats, EditCounts, ScoredUtterance, WerStats};
use crate::model::RnntModel;
use crate::synth::Utterance;

/// Greedy hypotheses for every utterance, in input order.
pub fn decode_set(model: &RnntModel, data: &[Utterance], max_symbols_per_frame: usize) -> Result<Vec<Vec<usize>>> {
    data.par_iter()
        .map(|u| model.greedy_decode(&u.features, max_symbols_per_frame))
        .collect()
}

fn check_lengths(data: &[Utterance], hyps: &[Vec<usize>]) -> Result<()> {
    if data.len() != hyps.len() {
        return Err(Error::contract(format!(
            "{} hypotheses for {} utterances",
            hyps.len(),
            data.len()
        )));
    }
    Ok(())
}

pub fn score_set(data: &[Utterance], hyps: &[Vec<usize>]) -> Result<Vec<EditCounts>> {
    check_lengths(data, hyps)?;
    Ok(data
        .iter()
        .zip(hyps)
        .map(|(u, h)| edit_distance(&u.transcript, h))
        .collect())
}

pub fn geo_samples(data: &[Utterance], hyps: &[Vec<usize>]) -> Result<Vec<GeoSample>> {
    Ok(score_set(data, hyps)?
        .into_iter()
        .zip(data)
        .map(|(e, u)| u.geo_sample(e.total()))
        .collect())
}

/// Per-region WER with regions taken from the tree.
pub fn region_stats(tree: &ClusterTree, data: &[Utterance], hyps: &[Vec<usize>]) -> Result<WerStats> {
    let scored: Vec<ScoredUtterance> = score_set(data, hyps)?
        .into_iter()
        .zip(data)
        .map(|(e, u)| ScoredUtterance {
            region_id: assign_region(tree, u.lon, u.lat),
            errors: e.total(),
            ref_words: u.transcript.len(),
        })
        .collect();
    region_wer_stats(&scored)
}

pub fn evaluate(
    model: &RnntModel,
    tree: &ClusterTree,
    data: &[Utterance],
    max_symbols_per_frame: usize,
    access: Option<(&AccessLog, &str)>,
) -> Result<WerStats> {
    if let Some((log, phase)) = access {
        log.record(phase, data.iter().map(|u| u.id.as_str()));
    }
    let hyps = decode_set(model, data, max_symbols_per_frame)?;
    region_stats(tree, data, &hyps)
}
