//! Geographic clustering of utterances into regions that maximize the WER
//! difference between sibling branches.

mod cv;
mod export;
mod tree;

use std::io;

use serde::{Deserialize, Serialize};

pub use cv::{cv_folds, cv_score, select_tree_cv, select_tree_from_folds, sweep_thresholds, CvSelection, SweepResult};
pub use export::{export_regions, region_table, write_region_table_csv, RegionRow};
pub use tree::{assign_region, best_split, build_tree, Axis, BBox, ClusterTree, Node, Region, Split};

use crate::error::{Error, Result};

/// One utterance scored by the current model, with its device location.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeoSample {
    pub utterance_id: String,
    pub device_id: String,
    pub lon: f64,
    pub lat: f64,
    pub ref_words: usize,
    /// May exceed `ref_words` because of insertions.
    pub edit_errors: usize,
}

impl GeoSample {
    pub fn coord(&self, axis: Axis) -> f64 {
        match axis {
            Axis::Lon => self.lon,
            Axis::Lat => self.lat,
        }
    }

    fn validate(&self) -> Result<()> {
        if !self.lon.is_finite() || !self.lat.is_finite() {
            return Err(Error::contract(format!(
                "sample {} has non-finite coordinates",
                self.utterance_id
            )));
        }
        if self.ref_words == 0 {
            return Err(Error::contract(format!(
                "sample {} has no reference words",
                self.utterance_id
            )));
        }
        Ok(())
    }
}

/// What the leaf-size threshold counts.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ThresholdUnit {
    /// Distinct device ids.
    #[default]
    Devices,
    Utterances,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Threshold {
    pub min: usize,
    pub unit: ThresholdUnit,
}

impl Threshold {
    pub fn devices(min: usize) -> Self {
        Threshold {
            min,
            unit: ThresholdUnit::Devices,
        }
    }

    pub fn utterances(min: usize) -> Self {
        Threshold {
            min,
            unit: ThresholdUnit::Utterances,
        }
    }
}

impl From<usize> for Threshold {
    fn from(min: usize) -> Self {
        Threshold::devices(min)
    }
}

/// Reads `utterance_id,device_id,lon,lat,ref_words,edit_errors`.
pub fn read_geo_samples_csv<R: io::Read>(input: R) -> Result<Vec<GeoSample>> {
    let mut rdr = csv::Reader::from_reader(input);
    let mut out = Vec::new();
    for rec in rdr.deserialize() {
        let s: GeoSample = rec?;
        s.validate()?;
        out.push(s);
    }
    Ok(out)
}

pub fn write_geo_samples_csv<W: io::Write>(samples: &[GeoSample], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for s in samples {
        w.serialize(s)?;
    }
    w.flush()?;
    Ok(())
}

pub(crate) fn validate_samples(samples: &[GeoSample]) -> Result<()> {
    samples.iter().try_for_each(GeoSample::validate)
}
