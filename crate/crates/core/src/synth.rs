//! Seeded synthetic corpus with planted regional difficulty, and the subset
//! constructions used by the experiment suite.
//!
//! Planted regions are cells of a lon/lat grid. Every token has one feature
//! prototype shared by the whole corpus; an utterance renders each token as
//! 2–4 copies of its prototype plus Gaussian noise at the region's
//! `noise_sigma`. Transcripts mix a region-specific unigram with a
//! corpus-wide successor table.

use std::collections::{BTreeMap, HashSet};
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::GeoSample;
use crate::tensor::Tensor;

pub const MANIFEST_FILE: &str = "manifest.csv";
pub const FEATURES_FILE: &str = "features.bin";
pub const CONFIG_FILE: &str = "corpus.toml";

/// splitmix64 finalizer over `seed` and a stream index.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Utterance {
    pub id: String,
    pub device_id: String,
    pub lon: f64,
    pub lat: f64,
    /// T×input_dim
    pub features: Tensor,
    pub transcript: Vec<usize>,
    /// Planted region the generator drew this utterance from. Never given
    /// to models; used only for stratification and diagnostics.
    pub region_truth: usize,
}

impl Utterance {
    pub fn num_frames(&self) -> usize {
        self.features.shape()[0]
    }

    /// A geo sample carrying this utterance's location and a scored hypothesis.
    pub fn geo_sample(&self, edit_errors: usize) -> GeoSample {
        GeoSample {
            utterance_id: self.id.clone(),
            device_id: self.device_id.clone(),
            lon: self.lon,
            lat: self.lat,
            ref_words: self.transcript.len(),
            edit_errors,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegionProfile {
    pub noise_sigma: f64,
    /// Unigram weights over the non-blank tokens 1..vocab_size. Empty means
    /// uniform.
    #[serde(default)]
    pub lexicon_skew: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusConfig {
    pub seed: u64,
    pub n_regions_planted: usize,
    pub devices_per_region: usize,
    pub utterances_per_device: usize,
    /// Including blank (token 0).
    pub vocab_size: usize,
    pub input_dim: usize,
    pub min_tokens: usize,
    pub max_tokens: usize,
    /// Probability that the next token follows the corpus-wide successor
    /// table instead of the region unigram.
    pub bigram_weight: f64,
    /// Grid extent as [min_lon, max_lon, min_lat, max_lat].
    pub extent: [f64; 4],
    pub profiles: Vec<RegionProfile>,
}

/// Non-blank unigram weights that put `mass` on `favored` and spread the rest.
fn skewed(vocab: usize, favored: &[usize], mass: f64) -> Vec<f64> {
    let n = vocab - 1;
    let rest = (1.0 - mass) / n as f64;
    let mut w = vec![rest; n];
    for &t in favored {
        w[t - 1] += mass / favored.len() as f64;
    }
    w
}

impl CorpusConfig {
    /// Eight regions on a 4×2 grid with noise increasing across the grid;
    /// the noisiest regions also favor a lexicon rarely used elsewhere.
    pub fn desk(seed: u64) -> Self {
        let vocab = 13;
        let sigmas = [0.8, 1.0, 1.2, 1.4, 1.6, 1.9, 2.2, 2.5];
        let profiles = sigmas
            .iter()
            .enumerate()
            .map(|(r, &noise_sigma)| RegionProfile {
                noise_sigma,
                lexicon_skew: if r >= 6 {
                    skewed(vocab, &[9, 10, 11, 12], 0.6)
                } else {
                    skewed(vocab, &[1, 2, 3, 4, 5, 6, 7, 8], 0.6)
                },
            })
            .collect();
        CorpusConfig {
            seed,
            n_regions_planted: sigmas.len(),
            devices_per_region: 50,
            utterances_per_device: 49,
            vocab_size: vocab,
            input_dim: 16,
            min_tokens: 2,
            max_tokens: 5,
            bigram_weight: 0.4,
            extent: [-124.0, -68.0, 26.0, 48.0],
            profiles,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.n_regions_planted == 0 || self.devices_per_region == 0 || self.utterances_per_device == 0 {
            return bad("region, device and utterance counts must be positive".into());
        }
        if self.vocab_size < 3 || self.input_dim == 0 {
            return bad("vocab_size must be at least 3 and input_dim positive".into());
        }
        if self.min_tokens == 0 || self.min_tokens > self.max_tokens {
            return bad(format!(
                "token range {}..={} is empty or starts at 0",
                self.min_tokens, self.max_tokens
            ));
        }
        if !(0.0..=1.0).contains(&self.bigram_weight) {
            return bad(format!("bigram_weight {} outside [0, 1]", self.bigram_weight));
        }
        let [x0, x1, y0, y1] = self.extent;
        if !(x0 < x1 && y0 < y1) {
            return bad(format!("degenerate extent {:?}", self.extent));
        }
        if self.profiles.len() != self.n_regions_planted {
            return bad(format!(
                "{} difficulty profiles for {} regions",
                self.profiles.len(),
                self.n_regions_planted
            ));
        }
        for (r, p) in self.profiles.iter().enumerate() {
            if !(p.noise_sigma >= 0.0) || !p.noise_sigma.is_finite() {
                return bad(format!("region {r}: noise_sigma must be finite and >= 0"));
            }
            if !p.lexicon_skew.is_empty() {
                if p.lexicon_skew.len() != self.vocab_size - 1 {
                    return bad(format!(
                        "region {r}: lexicon_skew has {} weights, expected {}",
                        p.lexicon_skew.len(),
                        self.vocab_size - 1
                    ));
                }
                if p.lexicon_skew.iter().any(|w| !(*w >= 0.0)) || p.lexicon_skew.iter().sum::<f64>() <= 0.0 {
                    return bad(format!(
                        "region {r}: lexicon_skew must be non-negative with positive sum"
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn grid_cols(&self) -> usize {
        (self.n_regions_planted as f64).sqrt().ceil() as usize
    }

    pub fn grid_rows(&self) -> usize {
        self.n_regions_planted.div_ceil(self.grid_cols())
    }

    /// [min_lon, max_lon, min_lat, max_lat] of a planted region's cell.
    pub fn cell(&self, region: usize) -> [f64; 4] {
        let (cols, rows) = (self.grid_cols(), self.grid_rows());
        let [x0, x1, y0, y1] = self.extent;
        let (w, h) = ((x1 - x0) / cols as f64, (y1 - y0) / rows as f64);
        let (c, r) = (region % cols, region / cols);
        [
            x0 + c as f64 * w,
            x0 + (c + 1) as f64 * w,
            y0 + r as f64 * h,
            y0 + (r + 1) as f64 * h,
        ]
    }

    pub fn total_utterances(&self) -> usize {
        self.n_regions_planted * self.devices_per_region * self.utterances_per_device
    }
}

/// Token prototypes (row k is token k; row 0 unused) and the successor table.
struct Grammar {
    prototypes: Vec<Vec<f64>>,
    successor: Vec<usize>,
}

impl Grammar {
    fn new(config: &CorpusConfig) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, u64::MAX));
        let normal = Normal::new(0.0, 1.0).expect("unit normal");
        let prototypes = (0..config.vocab_size)
            .map(|_| (0..config.input_dim).map(|_| normal.sample(&mut rng)).collect())
            .collect();
        // A derangement-like cycle over the non-blank tokens: no token is its
        // own successor.
        let mut order: Vec<usize> = (1..config.vocab_size).collect();
        order.shuffle(&mut rng);
        let mut successor = vec![0; config.vocab_size];
        for (i, &t) in order.iter().enumerate() {
            successor[t] = order[(i + 1) % order.len()];
        }
        Grammar { prototypes, successor }
    }
}

fn unigram(config: &CorpusConfig, region: usize) -> WeightedIndex<f64> {
    let w = &config.profiles[region].lexicon_skew;
    let w = if w.is_empty() {
        vec![1.0; config.vocab_size - 1]
    } else {
        w.clone()
    };
    WeightedIndex::new(w).expect("validated weights")
}

fn device_utterances(config: &CorpusConfig, grammar: &Grammar, region: usize, k: usize) -> Vec<Utterance> {
    let device = region * config.devices_per_region + k;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, device as u64));
    let [x0, x1, y0, y1] = config.cell(region);
    let lon = rng.random_range(x0..x1);
    let lat = rng.random_range(y0..y1);
    let device_id = format!("d{device:05}");
    let unigram = unigram(config, region);
    let sigma = config.profiles[region].noise_sigma;
    let noise = Normal::new(0.0, sigma).expect("validated sigma");
    let d = config.input_dim;
    (0..config.utterances_per_device)
        .map(|j| {
            let n_tokens = rng.random_range(config.min_tokens..=config.max_tokens);
            let mut transcript: Vec<usize> = Vec::with_capacity(n_tokens);
            while transcript.len() < n_tokens {
                let next = match transcript.last() {
                    Some(&prev) if rng.random::<f64>() < config.bigram_weight => grammar.successor[prev],
                    _ => unigram.sample(&mut rng) + 1,
                };
                if transcript.last() != Some(&next) {
                    transcript.push(next);
                }
            }
            let mut frames = Vec::new();
            for &tok in &transcript {
                for _ in 0..rng.random_range(2..=4) {
                    frames.extend(grammar.prototypes[tok].iter().map(|p| p + noise.sample(&mut rng)));
                }
            }
            let t_len = frames.len() / d;
            Utterance {
                id: format!("{device_id}-{j:03}"),
                device_id: device_id.clone(),
                lon,
                lat,
                features: Tensor::new(vec![t_len, d], frames).expect("non-empty utterance"),
                transcript,
                region_truth: region,
            }
        })
        .collect()
}

/// Generates every device's utterances; each device draws from its own
/// derived seed, so the output does not depend on the thread count.
pub fn generate_corpus(config: &CorpusConfig) -> Result<Vec<Utterance>> {
    config.validate()?;
    let grammar = Grammar::new(config);
    let devices: Vec<(usize, usize)> = (0..config.n_regions_planted)
        .flat_map(|r| (0..config.devices_per_region).map(move |k| (r, k)))
        .collect();
    let per_device: Vec<Vec<Utterance>> = devices
        .par_iter()
        .map(|&(r, k)| device_utterances(config, &grammar, r, k))
        .collect();
    Ok(per_device.into_iter().flatten().collect())
}

fn check_budget(budget: usize, available: usize, what: &str) -> Result<()> {
    if budget > available {
        return Err(Error::contract(format!(
            "{what} budget {budget} exceeds {available} available utterances"
        )));
    }
    Ok(())
}

/// Uniform draw of `budget` indices, returned in ascending order.
fn draw(n: usize, budget: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = index::sample(&mut rng, n, budget).into_vec();
    picked.sort_unstable();
    picked
}

fn take_split(items: &[Utterance], picked: &[usize]) -> (Vec<Utterance>, Vec<Utterance>) {
    let mut mark = vec![false; items.len()];
    for &i in picked {
        mark[i] = true;
    }
    let (mut a, mut b) = (Vec::with_capacity(picked.len()), Vec::new());
    for (u, m) in items.iter().zip(mark) {
        if m {
            a.push(u.clone());
        } else {
            b.push(u.clone());
        }
    }
    (a, b)
}

/// Uniform draw without replacement of the pretraining set; the rest is the
/// remainder. Both keep corpus order.
pub fn split_pretrain(corpus: &[Utterance], budget: usize, seed: u64) -> Result<(Vec<Utterance>, Vec<Utterance>)> {
    check_budget(budget, corpus.len(), "pretraining")?;
    Ok(take_split(corpus, &draw(corpus.len(), budget, seed)))
}

pub fn build_random_set(remainder: &[Utterance], budget: usize, seed: u64) -> Result<Vec<Utterance>> {
    check_budget(budget, remainder.len(), "random set")?;
    Ok(take_split(remainder, &draw(remainder.len(), budget, seed)).0)
}

/// Number of utterance ids present in both sets.
pub fn id_overlap(a: &[Utterance], b: &[Utterance]) -> usize {
    let ids: HashSet<&str> = a.iter().map(|u| u.id.as_str()).collect();
    b.iter().filter(|u| ids.contains(u.id.as_str())).count()
}

#[derive(Clone, Debug, PartialEq)]
pub struct HighWerSet {
    pub utterances: Vec<Utterance>,
    /// Regions contributing utterances, in descending WER order.
    pub included_regions: Vec<usize>,
    /// The last included region when it was only partly taken.
    pub boundary_region: Option<usize>,
}

/// Takes whole regions in order of decreasing WER until the budget is met,
/// subsampling the region that overflows it. `regions[i]` is the region of
/// `remainder[i]`. Ties in WER go to the lower region id.
pub fn build_high_wer_set(
    remainder: &[Utterance],
    regions: &[usize],
    region_wers: &BTreeMap<usize, f64>,
    budget: usize,
    seed: u64,
) -> Result<HighWerSet> {
    if regions.len() != remainder.len() {
        return Err(Error::contract(format!(
            "{} region ids for {} utterances",
            regions.len(),
            remainder.len()
        )));
    }
    check_budget(budget, remainder.len(), "high-WER set")?;
    let mut members: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &r) in regions.iter().enumerate() {
        members.entry(r).or_default().push(i);
    }
    let mut order: Vec<(usize, f64)> = Vec::with_capacity(members.len());
    for &r in members.keys() {
        let wer = *region_wers
            .get(&r)
            .ok_or_else(|| Error::contract(format!("no WER for region {r}")))?;
        order.push((r, wer));
    }
    order.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));

    let mut picked = Vec::with_capacity(budget);
    let mut included_regions = Vec::new();
    let mut boundary_region = None;
    for (r, _) in order {
        let left = budget - picked.len();
        if left == 0 {
            break;
        }
        let idx = &members[&r];
        included_regions.push(r);
        if idx.len() <= left {
            picked.extend_from_slice(idx);
        } else {
            picked.extend(draw(idx.len(), left, seed).into_iter().map(|k| idx[k]));
            boundary_region = Some(r);
        }
    }
    picked.sort_unstable();
    Ok(HighWerSet {
        utterances: take_split(remainder, &picked).0,
        included_regions,
        boundary_region,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartitionSizes {
    /// Utterances decoded by the baseline to grow the clustering tree.
    pub tree: usize,
    pub dev: usize,
    pub test: usize,
}

impl PartitionSizes {
    pub fn desk() -> Self {
        PartitionSizes {
            tree: 2000,
            dev: 400,
            test: 1200,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Partition {
    pub tree: Vec<Utterance>,
    pub dev: Vec<Utterance>,
    pub test: Vec<Utterance>,
    /// Everything else: the whole-data pool D_w.
    pub pool: Vec<Utterance>,
}

/// Largest-remainder allocation of `total` across groups by size.
fn allocate(sizes: &[usize], total: usize) -> Vec<usize> {
    let n: usize = sizes.iter().sum();
    let exact: Vec<f64> = sizes.iter().map(|&s| s as f64 * total as f64 / n as f64).collect();
    let mut out: Vec<usize> = exact.iter().map(|x| x.floor() as usize).collect();
    let mut order: Vec<usize> = (0..sizes.len()).collect();
    order.sort_by(|&a, &b| {
        (exact[b] - exact[b].floor())
            .total_cmp(&(exact[a] - exact[a].floor()))
            .then(a.cmp(&b))
    });
    let short = total - out.iter().sum::<usize>();
    for &g in order.iter().take(short) {
        out[g] += 1;
    }
    out
}

/// Dev and test are stratified by planted region so every region appears in
/// both; the tree set is a uniform draw from what is left.
pub fn partition(corpus: &[Utterance], sizes: &PartitionSizes, seed: u64) -> Result<Partition> {
    check_budget(sizes.tree + sizes.dev + sizes.test, corpus.len(), "held-out")?;
    let mut by_region: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, u) in corpus.iter().enumerate() {
        by_region.entry(u.region_truth).or_default().push(i);
    }
    let group_sizes: Vec<usize> = by_region.values().map(Vec::len).collect();
    let dev_n = allocate(&group_sizes, sizes.dev);
    let test_n = allocate(&group_sizes, sizes.test);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut label = vec![0u8; corpus.len()];
    for (g, idx) in by_region.values().enumerate() {
        let mut idx = idx.clone();
        idx.shuffle(&mut rng);
        for &i in &idx[..dev_n[g]] {
            label[i] = 1;
        }
        for &i in &idx[dev_n[g]..dev_n[g] + test_n[g]] {
            label[i] = 2;
        }
    }
    let rest: Vec<usize> = (0..corpus.len()).filter(|&i| label[i] == 0).collect();
    for k in draw(rest.len(), sizes.tree, derive_seed(seed, 1)) {
        label[rest[k]] = 3;
    }
    let mut p = Partition {
        tree: Vec::new(),
        dev: Vec::new(),
        test: Vec::new(),
        pool: Vec::new(),
    };
    for (u, l) in corpus.iter().zip(label) {
        match l {
            1 => p.dev.push(u.clone()),
            2 => p.test.push(u.clone()),
            3 => p.tree.push(u.clone()),
            _ => p.pool.push(u.clone()),
        }
    }
    Ok(p)
}

#[derive(Debug, Serialize, Deserialize)]
struct ManifestRow {
    id: String,
    device_id: String,
    lon: f64,
    lat: f64,
    n_frames: usize,
    transcript: String,
    feature_offset: u64,
    region_truth: usize,
}

/// Writes `corpus.toml`, `manifest.csv` and the little-endian f64 feature
/// archive into `dir`.
pub fn save_corpus(dir: &Path, config: &CorpusConfig, corpus: &[Utterance]) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(CONFIG_FILE), toml::to_string(config)?)?;
    let mut manifest = csv::Writer::from_path(dir.join(MANIFEST_FILE))?;
    let mut features = BufWriter::new(File::create(dir.join(FEATURES_FILE))?);
    let mut offset = 0u64;
    for u in corpus {
        manifest.serialize(ManifestRow {
            id: u.id.clone(),
            device_id: u.device_id.clone(),
            lon: u.lon,
            lat: u.lat,
            n_frames: u.num_frames(),
            transcript: u.transcript.iter().map(usize::to_string).collect::<Vec<_>>().join(" "),
            feature_offset: offset,
            region_truth: u.region_truth,
        })?;
        for v in u.features.data() {
            features.write_all(&v.to_le_bytes())?;
        }
        offset += 8 * u.features.numel() as u64;
    }
    manifest.flush()?;
    features.flush()?;
    Ok(())
}

pub fn load_corpus(dir: &Path) -> Result<(CorpusConfig, Vec<Utterance>)> {
    let config: CorpusConfig = toml::from_str(&fs::read_to_string(dir.join(CONFIG_FILE))?)?;
    config.validate()?;
    let mut bytes = Vec::new();
    BufReader::new(File::open(dir.join(FEATURES_FILE))?).read_to_end(&mut bytes)?;
    let mut reader = csv::Reader::from_path(dir.join(MANIFEST_FILE))?;
    let mut corpus = Vec::new();
    for row in reader.deserialize() {
        let row: ManifestRow = row?;
        let n = row.n_frames * config.input_dim;
        let start = row.feature_offset as usize;
        let end = start + 8 * n;
        if row.n_frames == 0 || end > bytes.len() {
            return Err(Error::Schema(format!(
                "feature block of {} is out of range or empty",
                row.id
            )));
        }
        let data = bytes[start..end]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        let transcript = row
            .transcript
            .split_whitespace()
            .map(|t| {
                t.parse::<usize>()
                    .map_err(|e| Error::Schema(format!("{}: {e}", row.id)))
            })
            .collect::<Result<Vec<_>>>()?;
        if transcript.iter().any(|&t| t == 0 || t >= config.vocab_size) {
            return Err(Error::Schema(format!("{}: transcript token out of range", row.id)));
        }
        corpus.push(Utterance {
            id: row.id,
            device_id: row.device_id,
            lon: row.lon,
            lat: row.lat,
            features: Tensor::new(vec![row.n_frames, config.input_dim], data)?,
            transcript,
            region_truth: row.region_truth,
        });
    }
    Ok((config, corpus))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(seed: u64) -> CorpusConfig {
        let mut c = CorpusConfig::desk(seed);
        c.devices_per_region = 3;
        c.utterances_per_device = 4;
        c
    }

    fn fake(n: usize) -> Vec<Utterance> {
        (0..n)
            .map(|i| Utterance {
                id: format!("u{i}"),
                device_id: format!("d{i}"),
                lon: 0.0,
                lat: 0.0,
                features: Tensor::zeros(&[1, 1]),
                transcript: vec![1],
                region_truth: 0,
            })
            .collect()
    }

    #[test]
    fn generation_is_deterministic_and_well_formed() {
        let c = small(5);
        let a = generate_corpus(&c).unwrap();
        assert_eq!(a, generate_corpus(&c).unwrap());
        assert_eq!(a.len(), c.total_utterances());
        let mut coords: BTreeMap<&str, (f64, f64)> = BTreeMap::new();
        for u in &a {
            assert!(u.num_frames() >= 2 * u.transcript.len() && u.num_frames() <= 4 * u.transcript.len());
            assert!(u.transcript.iter().all(|&t| t != 0 && t < c.vocab_size));
            assert!(u.transcript.windows(2).all(|w| w[0] != w[1]));
            let [x0, x1, y0, y1] = c.cell(u.region_truth);
            assert!(u.lon >= x0 && u.lon < x1 && u.lat >= y0 && u.lat < y1);
            let prev = coords.entry(&u.device_id).or_insert((u.lon, u.lat));
            assert_eq!(*prev, (u.lon, u.lat));
        }
        assert_ne!(a, generate_corpus(&small(6)).unwrap());
    }

    #[test]
    fn zero_noise_features_equal_prototypes() {
        let mut c = small(1);
        for p in &mut c.profiles {
            p.noise_sigma = 0.0;
        }
        let corpus = generate_corpus(&c).unwrap();
        let g = Grammar::new(&c);
        for u in corpus.iter().take(10) {
            let first = u.features.row(0);
            assert_eq!(first, &g.prototypes[u.transcript[0]][..]);
        }
    }

    #[test]
    fn config_validation() {
        let mut c = small(0);
        c.profiles.pop();
        assert!(generate_corpus(&c).is_err());
        let mut c = small(0);
        c.devices_per_region = 0;
        assert!(c.validate().is_err());
        let mut c = small(0);
        c.profiles[0].lexicon_skew = vec![1.0; 3];
        assert!(c.validate().is_err());
    }

    #[test]
    fn pretrain_split_partitions() {
        let corpus = fake(50);
        let (p, r) = split_pretrain(&corpus, 20, 3).unwrap();
        assert_eq!(p.len() + r.len(), 50);
        assert_eq!(id_overlap(&p, &r), 0);
        assert_eq!(split_pretrain(&corpus, 20, 3).unwrap().0, p);
        let (all, none) = split_pretrain(&corpus, 50, 3).unwrap();
        assert_eq!(all.len(), 50);
        assert!(none.is_empty());
        assert!(split_pretrain(&corpus, 51, 3).is_err());
    }

    #[test]
    fn high_wer_greedy_example() {
        let rem = fake(15);
        let regions: Vec<usize> = (0..15).map(|i| i / 5).collect();
        let wers = BTreeMap::from([(0, 0.4), (1, 0.3), (2, 0.1)]);
        let set = build_high_wer_set(&rem, &regions, &wers, 8, 1).unwrap();
        assert_eq!(set.utterances.len(), 8);
        let from = |r: usize| {
            set.utterances
                .iter()
                .filter(|u| regions[u.id[1..].parse::<usize>().unwrap()] == r)
                .count()
        };
        assert_eq!((from(0), from(1), from(2)), (5, 3, 0));
        assert_eq!(set.included_regions, vec![0, 1]);
        assert_eq!(set.boundary_region, Some(1));

        let all = build_high_wer_set(&rem, &regions, &wers, 15, 1).unwrap();
        assert_eq!(all.utterances, rem);
        assert!(build_high_wer_set(&rem, &regions, &wers, 16, 1).is_err());
    }

    #[test]
    fn random_set_overlap() {
        let rem = fake(40);
        let dc = rem[..10].to_vec();
        let all = build_random_set(&rem, 40, 0).unwrap();
        assert_eq!(id_overlap(&all, &dc), 10);
        let a = build_random_set(&rem, 10, 1).unwrap();
        let b = build_random_set(&rem, 10, 2).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn partition_is_stratified_and_disjoint() {
        let c = small(2);
        let corpus = generate_corpus(&c).unwrap();
        let sizes = PartitionSizes {
            tree: 10,
            dev: 8,
            test: 16,
        };
        let p = partition(&corpus, &sizes, 4).unwrap();
        assert_eq!((p.tree.len(), p.dev.len(), p.test.len()), (10, 8, 16));
        assert_eq!(p.pool.len(), corpus.len() - 34);
        for r in 0..c.n_regions_planted {
            assert!(p.test.iter().any(|u| u.region_truth == r));
            assert!(p.dev.iter().any(|u| u.region_truth == r));
        }
        for (x, y) in [
            (&p.tree, &p.dev),
            (&p.tree, &p.test),
            (&p.dev, &p.test),
            (&p.pool, &p.test),
        ] {
            assert_eq!(id_overlap(x, y), 0);
        }
    }

    #[test]
    fn allocation_sums_exactly() {
        assert_eq!(allocate(&[5, 5, 5], 8).iter().sum::<usize>(), 8);
        assert_eq!(allocate(&[10, 30], 4), vec![1, 3]);
    }

    #[test]
    fn corpus_round_trip() {
        let c = small(9);
        let corpus = generate_corpus(&c).unwrap();
        let dir = tempfile::tempdir().unwrap();
        save_corpus(dir.path(), &c, &corpus).unwrap();
        let (c2, corpus2) = load_corpus(dir.path()).unwrap();
        assert_eq!(c, c2);
        assert_eq!(corpus, corpus2);
    }
}
