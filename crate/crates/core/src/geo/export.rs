use std::io;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{BBox, ClusterTree, Node};
use crate::error::Result;

fn ring(b: &BBox) -> Value {
    json!([[
        [b.min_lon, b.min_lat],
        [b.max_lon, b.min_lat],
        [b.max_lon, b.max_lat],
        [b.min_lon, b.max_lat],
        [b.min_lon, b.min_lat]
    ]])
}

fn collect(node: &Node, bbox: BBox, out: &mut Vec<Value>) {
    match node {
        Node::Leaf(r) => out.push(json!({
            "type": "Feature",
            "geometry": { "type": "Polygon", "coordinates": ring(&bbox) },
            "properties": {
                "region_id": r.region_id,
                "wer": r.wer,
                "device_count": r.device_count,
            }
        })),
        Node::Internal {
            axis,
            split_value,
            left,
            right,
        } => {
            let (l, r) = bbox.split(*axis, *split_value);
            collect(left, l, out);
            collect(right, r, out);
        }
    }
}

/// One rectangle per leaf, partitioning the training bounding box. Shared
/// edges belong to the right/upper rectangle.
pub fn export_regions(tree: &ClusterTree) -> Value {
    let mut features = Vec::new();
    collect(&tree.root, tree.bounds, &mut features);
    json!({ "type": "FeatureCollection", "features": features })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegionRow {
    pub region_id: usize,
    pub wer: f64,
    pub device_count: usize,
    pub n_utterances: usize,
}

pub fn region_table(tree: &ClusterTree) -> Vec<RegionRow> {
    tree.regions()
        .into_iter()
        .map(|r| RegionRow {
            region_id: r.region_id,
            wer: r.wer,
            device_count: r.device_count,
            n_utterances: r.n_utterances,
        })
        .collect()
}

/// `region_id,wer,device_count,n_utterances`
pub fn write_region_table_csv<W: io::Write>(tree: &ClusterTree, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in region_table(tree) {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}
