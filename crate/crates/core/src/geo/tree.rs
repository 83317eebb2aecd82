use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::{validate_samples, GeoSample, Threshold, ThresholdUnit};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    Lon,
    Lat,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub axis: Axis,
    pub value: f64,
    /// (WER_left − WER_right)²
    pub wer_difference: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub min_lon: f64,
    pub max_lon: f64,
    pub min_lat: f64,
    pub max_lat: f64,
}

impl BBox {
    pub fn of<'a>(samples: impl IntoIterator<Item = &'a GeoSample>) -> Option<BBox> {
        let mut it = samples.into_iter();
        let first = it.next()?;
        let mut b = BBox {
            min_lon: first.lon,
            max_lon: first.lon,
            min_lat: first.lat,
            max_lat: first.lat,
        };
        for s in it {
            b.min_lon = b.min_lon.min(s.lon);
            b.max_lon = b.max_lon.max(s.lon);
            b.min_lat = b.min_lat.min(s.lat);
            b.max_lat = b.max_lat.max(s.lat);
        }
        Some(b)
    }

    pub fn area(&self) -> f64 {
        (self.max_lon - self.min_lon) * (self.max_lat - self.min_lat)
    }

    /// Splits at `value`: the left part is [min, value), the right [value, max].
    pub fn split(&self, axis: Axis, value: f64) -> (BBox, BBox) {
        let (mut l, mut r) = (*self, *self);
        match axis {
            Axis::Lon => {
                l.max_lon = value;
                r.min_lon = value;
            }
            Axis::Lat => {
                l.max_lat = value;
                r.min_lat = value;
            }
        }
        (l, r)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub region_id: usize,
    /// Corpus-level WER of the training samples in this leaf.
    pub wer: f64,
    pub device_count: usize,
    pub n_utterances: usize,
    pub errors: usize,
    pub ref_words: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Node {
    Internal {
        axis: Axis,
        split_value: f64,
        left: Box<Node>,
        right: Box<Node>,
    },
    Leaf(Region),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterTree {
    pub root: Node,
    /// Bounding box of the samples the tree was built from.
    pub bounds: BBox,
    pub threshold: Threshold,
}

impl ClusterTree {
    /// Leaves in left-to-right order, which is also region-id order.
    pub fn regions(&self) -> Vec<&Region> {
        fn walk<'a>(n: &'a Node, out: &mut Vec<&'a Region>) {
            match n {
                Node::Leaf(r) => out.push(r),
                Node::Internal { left, right, .. } => {
                    walk(left, out);
                    walk(right, out);
                }
            }
        }
        let mut out = Vec::new();
        walk(&self.root, &mut out);
        out
    }

    pub fn num_regions(&self) -> usize {
        self.regions().len()
    }

    pub fn region(&self, id: usize) -> Option<&Region> {
        self.regions().into_iter().find(|r| r.region_id == id)
    }
}

fn corpus_wer(samples: &[&GeoSample]) -> f64 {
    let (e, r) = samples
        .iter()
        .fold((0usize, 0usize), |(e, r), s| (e + s.edit_errors, r + s.ref_words));
    if r == 0 {
        0.0
    } else {
        e as f64 / r as f64
    }
}

fn count(samples: &[&GeoSample], unit: ThresholdUnit) -> usize {
    match unit {
        ThresholdUnit::Utterances => samples.len(),
        ThresholdUnit::Devices => samples
            .iter()
            .map(|s| s.device_id.as_str())
            .collect::<HashSet<_>>()
            .len(),
    }
}

fn lower_median(samples: &[&GeoSample], axis: Axis) -> f64 {
    let mut v: Vec<f64> = samples.iter().map(|s| s.coord(axis)).collect();
    v.sort_by(f64::total_cmp);
    v[(v.len() - 1) / 2]
}

fn best_split_refs(samples: &[&GeoSample], threshold: Threshold) -> Option<Split> {
    if samples.is_empty() {
        return None;
    }
    let mut best: Option<Split> = None;
    let mut best_d = 0.0;
    for axis in [Axis::Lon, Axis::Lat] {
        let median = lower_median(samples, axis);
        let (left, right): (Vec<&GeoSample>, Vec<&GeoSample>) = samples.iter().partition(|s| s.coord(axis) < median);
        if count(&left, threshold.unit) < threshold.min || count(&right, threshold.unit) < threshold.min {
            continue;
        }
        let diff = corpus_wer(&left) - corpus_wer(&right);
        let d = diff * diff;
        if d > best_d {
            best_d = d;
            best = Some(Split {
                axis,
                value: median,
                wer_difference: d,
            });
        }
    }
    best
}

/// Median split along longitude or latitude that maximizes the squared
/// difference between the two branches' corpus WERs. Both branches must meet
/// the threshold; `None` when no axis yields a valid, nonzero split.
pub fn best_split(samples: &[GeoSample], threshold: impl Into<Threshold>) -> Option<Split> {
    let refs: Vec<&GeoSample> = samples.iter().collect();
    best_split_refs(&refs, threshold.into())
}

fn grow(samples: Vec<&GeoSample>, threshold: Threshold) -> Node {
    match best_split_refs(&samples, threshold) {
        None => {
            let (errors, ref_words) = samples
                .iter()
                .fold((0, 0), |(e, r), s| (e + s.edit_errors, r + s.ref_words));
            Node::Leaf(Region {
                region_id: 0,
                wer: corpus_wer(&samples),
                device_count: count(&samples, ThresholdUnit::Devices),
                n_utterances: samples.len(),
                errors,
                ref_words,
            })
        }
        Some(split) => {
            let (left, right): (Vec<&GeoSample>, Vec<&GeoSample>) =
                samples.into_iter().partition(|s| s.coord(split.axis) < split.value);
            Node::Internal {
                axis: split.axis,
                split_value: split.value,
                left: Box::new(grow(left, threshold)),
                right: Box::new(grow(right, threshold)),
            }
        }
    }
}

fn number_leaves(n: &mut Node, next: &mut usize) {
    match n {
        Node::Leaf(r) => {
            r.region_id = *next;
            *next += 1;
        }
        Node::Internal { left, right, .. } => {
            number_leaves(left, next);
            number_leaves(right, next);
        }
    }
}

/// Recursively splits until no valid split remains; leaves become regions
/// numbered 0..R−1 from left to right.
pub fn build_tree(samples: &[GeoSample], threshold: impl Into<Threshold>) -> Result<ClusterTree> {
    let threshold = threshold.into();
    let bounds = BBox::of(samples).ok_or_else(|| Error::contract("cannot build a tree from no samples"))?;
    validate_samples(samples)?;
    if threshold.min == 0 {
        return Err(Error::Config("threshold must be at least 1".into()));
    }
    let mut root = grow(samples.iter().collect(), threshold);
    number_leaves(&mut root, &mut 0);
    Ok(ClusterTree {
        root,
        bounds,
        threshold,
    })
}

/// Routes left iff the coordinate is below the split value.
pub fn assign_region(tree: &ClusterTree, lon: f64, lat: f64) -> usize {
    let mut node = &tree.root;
    loop {
        match node {
            Node::Leaf(r) => return r.region_id,
            Node::Internal {
                axis,
                split_value,
                left,
                right,
            } => {
                let c = match axis {
                    Axis::Lon => lon,
                    Axis::Lat => lat,
                };
                node = if c < *split_value { left } else { right };
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn sample(dev: &str, lon: f64, lat: f64, refs: usize, errs: usize) -> GeoSample {
        GeoSample {
            utterance_id: format!("{dev}-{lon}-{lat}"),
            device_id: dev.into(),
            lon,
            lat,
            ref_words: refs,
            edit_errors: errs,
        }
    }

    #[test]
    fn identical_coordinates_have_no_split() {
        let s: Vec<_> = (0..20).map(|i| sample(&format!("d{i}"), 1.0, 2.0, 10, i % 5)).collect();
        assert!(best_split(&s, 1).is_none());
        let t = build_tree(&s, 1).unwrap();
        assert_eq!(t.num_regions(), 1);
    }

    #[test]
    fn planted_longitude_split() {
        // left half WER 0.5, right half 0.1; latitudes spread uniformly
        // 10 left, 11 right: the lower median is the smallest right coordinate
        let mut s = Vec::new();
        for i in 0..10 {
            s.push(sample(&format!("l{i}"), -1.0 - i as f64 * 0.1, i as f64, 10, 5));
        }
        for i in 0..11 {
            s.push(sample(&format!("r{i}"), 1.0 + i as f64 * 0.1, i as f64, 10, 1));
        }
        let split = best_split(&s, 3).unwrap();
        assert_eq!(split.axis, Axis::Lon);
        assert!((split.wer_difference - 0.16).abs() < 1e-12);
    }

    #[test]
    fn too_few_devices_means_single_leaf() {
        let s: Vec<_> = (0..30)
            .map(|i| sample(&format!("d{}", i / 10), i as f64, -(i as f64), 10, i % 7))
            .collect();
        assert!(best_split(&s, 3).is_none());
        assert_eq!(build_tree(&s, 3).unwrap().num_regions(), 1);
    }

    #[test]
    fn utterance_threshold_counts_rows() {
        let s: Vec<_> = (0..8)
            .map(|i| sample("same", i as f64, 0.0, 10, if i < 4 { 5 } else { 0 }))
            .collect();
        assert!(best_split(&s, 2).is_none());
        assert!(best_split(&s, Threshold::utterances(2)).is_some());
    }

    #[test]
    fn empty_input_is_an_error() {
        assert!(build_tree(&[], 1).is_err());
    }

    #[test]
    fn boundary_routes_right() {
        let s = vec![
            sample("a", 0.0, 0.0, 10, 9),
            sample("b", 1.0, 0.0, 10, 0),
            sample("c", 2.0, 0.0, 10, 0),
        ];
        let t = build_tree(&s, 1).unwrap();
        let Node::Internal { split_value, .. } = &t.root else {
            panic!("expected a split")
        };
        assert_eq!(*split_value, 1.0);
        assert_eq!(assign_region(&t, 1.0, 0.0), assign_region(&t, 2.0, 0.0));
        assert_ne!(assign_region(&t, 0.999, 0.0), assign_region(&t, 1.0, 0.0));
    }

    #[test]
    fn single_leaf_routes_everything_to_zero() {
        let s = vec![sample("a", 0.0, 0.0, 10, 1)];
        let t = build_tree(&s, 1).unwrap();
        assert_eq!(assign_region(&t, -500.0, 1e9), 0);
    }
}
