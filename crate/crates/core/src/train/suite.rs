use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::fs::{self, File};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{
    compute_fisher, config_hash, decode_set, geo_samples, region_stats, train, AccessLog, TrainConfig, TrainHooks,
};
use crate::checkpoint::{self, Checkpoint};
use crate::error::{Error, Result};
use crate::ewc::EwcAnchor;
use crate::geo::{assign_region, export_regions, select_tree_cv, write_region_table_csv, ClusterTree, CvSelection};
use crate::metrics::{
    edit_distance, region_wer_stats, render_table, werr_report, write_region_stats_csv, write_report_csv, ReportRow,
    ScoredUtterance, WerStats,
};
use crate::model::{FreezeScheme, ModelConfig, RnntModel, DEFAULT_MAX_SYMBOLS_PER_FRAME};
use crate::synth::{
    build_high_wer_set, build_random_set, derive_seed, generate_corpus, id_overlap, partition, split_pretrain,
    CorpusConfig, HighWerSet, PartitionSizes, Utterance,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DataSelector {
    Dp,
    Dc,
    Dr,
    DpDc,
    DpDr,
}

impl DataSelector {
    pub fn label(self) -> &'static str {
        match self {
            DataSelector::Dp => "D_p",
            DataSelector::Dc => "D_c",
            DataSelector::Dr => "D_r",
            DataSelector::DpDc => "D_p+D_c",
            DataSelector::DpDr => "D_p+D_r",
        }
    }

    fn reads_dp(self) -> bool {
        matches!(self, DataSelector::Dp | DataSelector::DpDc | DataSelector::DpDr)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Init {
    Scratch,
    Exp1,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Baseline,
    NoFreeze,
    FreezeEncoder,
    FreezePredictor,
    FreezeLower,
    Ewc,
    Joint,
}

impl Method {
    pub fn freeze(self) -> FreezeScheme {
        match self {
            Method::FreezeEncoder => FreezeScheme::Encoder,
            Method::FreezePredictor => FreezeScheme::Predictor,
            Method::FreezeLower => FreezeScheme::LowerLayers,
            _ => FreezeScheme::None,
        }
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "baseline" => Method::Baseline,
            "no-freeze" => Method::NoFreeze,
            "freeze-encoder" => Method::FreezeEncoder,
            "freeze-predictor" => Method::FreezePredictor,
            "freeze-lower" => Method::FreezeLower,
            "ewc" => Method::Ewc,
            "joint" => Method::Joint,
            other => return Err(Error::Config(format!("unknown method {other:?}"))),
        })
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Baseline => "baseline",
            Method::NoFreeze => "no-freeze",
            Method::FreezeEncoder => "freeze-encoder",
            Method::FreezePredictor => "freeze-predictor",
            Method::FreezeLower => "freeze-lower",
            Method::Ewc => "ewc",
            Method::Joint => "joint",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub id: u8,
    pub description: String,
    pub data: DataSelector,
    pub init: Init,
    pub method: Method,
}

/// The eight rows of the results table, in execution order.
pub fn table1_experiments() -> Vec<ExperimentSpec> {
    use DataSelector::*;
    let row = |id, d: &str, data, init, method| ExperimentSpec {
        id,
        description: d.to_string(),
        data,
        init,
        method,
    };
    vec![
        row(1, "Baseline", Dp, Init::Scratch, Method::Baseline),
        row(2, "No freeze", Dc, Init::Exp1, Method::NoFreeze),
        row(3, "Freeze Encoder", Dc, Init::Exp1, Method::FreezeEncoder),
        row(4, "Freeze Predictor", Dc, Init::Exp1, Method::FreezePredictor),
        row(
            5,
            "Freeze lower encoder layers and 1 predictor layer",
            Dc,
            Init::Exp1,
            Method::FreezeLower,
        ),
        row(6, "EWC", Dc, Init::Exp1, Method::Ewc),
        row(7, "Empirical bound", DpDc, Init::Scratch, Method::Joint),
        row(8, "Joint with random set", DpDr, Init::Scratch, Method::Joint),
    ]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteConfig {
    pub corpus: CorpusConfig,
    pub partition: PartitionSizes,
    pub pretrain_budget: usize,
    pub finetune_budget: usize,
    pub model: ModelConfig,
    /// Schedule for the from-scratch runs (Exps 1, 7, 8).
    pub pretrain: TrainConfig,
    /// Schedule for the adaptation runs (Exps 2–6).
    pub finetune: TrainConfig,
    pub lambda: f64,
    pub fisher_examples: usize,
    /// Minimum distinct devices per clustering-tree leaf.
    pub threshold: usize,
    pub folds: usize,
    pub max_symbols_per_frame: usize,
}

impl SuiteConfig {
    pub fn desk() -> Self {
        SuiteConfig {
            corpus: CorpusConfig::desk(0),
            partition: PartitionSizes::desk(),
            pretrain_budget: 4000,
            finetune_budget: 4000,
            model: ModelConfig::desk(),
            pretrain: TrainConfig::desk(),
            finetune: TrainConfig::desk_finetune(),
            lambda: 1.0,
            fisher_examples: 2000,
            threshold: 20,
            folds: 5,
            max_symbols_per_frame: DEFAULT_MAX_SYMBOLS_PER_FRAME,
        }
    }

    /// Production-scale layout and the published fine-tuning constants.
    /// Kept as a record; running it is far beyond a single CPU.
    pub fn paper() -> Self {
        let model = ModelConfig::paper();
        let mut corpus = CorpusConfig::desk(0);
        corpus.vocab_size = model.vocab_size;
        corpus.input_dim = model.input_dim;
        corpus.max_tokens = 40;
        for p in &mut corpus.profiles {
            p.lexicon_skew.clear();
        }
        SuiteConfig {
            corpus,
            model,
            pretrain: TrainConfig::paper(),
            finetune: TrainConfig::paper(),
            threshold: 2000,
            ..SuiteConfig::desk()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.corpus.validate()?;
        self.model.validate()?;
        self.pretrain.validate()?;
        self.finetune.validate()?;
        if self.corpus.vocab_size != self.model.vocab_size || self.corpus.input_dim != self.model.input_dim {
            return Err(Error::Config(
                "corpus and model disagree on vocab_size or input_dim".into(),
            ));
        }
        if self.model.blank_id != 0 {
            return Err(Error::Config("the corpus reserves token 0 for blank".into()));
        }
        if !(self.lambda >= 0.0) || self.threshold == 0 || self.folds < 2 || self.fisher_examples == 0 {
            return Err(Error::Config(
                "need lambda >= 0, threshold >= 1, folds >= 2 and fisher_examples >= 1".into(),
            ));
        }
        if self.max_symbols_per_frame == 0 {
            return Err(Error::Config("max_symbols_per_frame must be at least 1".into()));
        }
        Ok(())
    }

    /// Training schedule for one experiment, with its seed and freeze scheme.
    pub fn train_config(&self, spec: &ExperimentSpec, seed: u64) -> TrainConfig {
        match spec.init {
            Init::Scratch => TrainConfig {
                seed: derive_seed(seed, 30 + spec.id as u64),
                ..self.pretrain.clone()
            },
            // Adaptation runs share one batch order so they differ only in method.
            Init::Exp1 => TrainConfig {
                seed: derive_seed(seed, 20),
                freeze: spec.method.freeze(),
                lambda: self.lambda,
                ..self.finetune.clone()
            },
        }
    }
}

/// Held-out sets, the pretraining set and the remainder of the pool.
#[derive(Clone, Debug, PartialEq)]
pub struct Splits {
    pub tree: Vec<Utterance>,
    pub dev: Vec<Utterance>,
    pub test: Vec<Utterance>,
    pub d_p: Vec<Utterance>,
    pub remainder: Vec<Utterance>,
}

impl Splits {
    pub fn compute(corpus: &[Utterance], config: &SuiteConfig, seed: u64) -> Result<Self> {
        let p = partition(corpus, &config.partition, derive_seed(seed, 1))?;
        let (d_p, remainder) = split_pretrain(&p.pool, config.pretrain_budget, derive_seed(seed, 2))?;
        Ok(Splits {
            tree: p.tree,
            dev: p.dev,
            test: p.test,
            d_p,
            remainder,
        })
    }
}

/// Adaptation sets built from the remainder once the tree exists.
#[derive(Clone, Debug, PartialEq)]
pub struct FinetuneSets {
    pub d_c: HighWerSet,
    pub d_r: Vec<Utterance>,
    pub overlap: usize,
}

pub fn build_finetune_sets(
    splits: &Splits,
    tree: &ClusterTree,
    config: &SuiteConfig,
    seed: u64,
) -> Result<FinetuneSets> {
    let regions: Vec<usize> = splits
        .remainder
        .iter()
        .map(|u| assign_region(tree, u.lon, u.lat))
        .collect();
    let wers: BTreeMap<usize, f64> = tree.regions().iter().map(|r| (r.region_id, r.wer)).collect();
    let d_c = build_high_wer_set(
        &splits.remainder,
        &regions,
        &wers,
        config.finetune_budget,
        derive_seed(seed, 5),
    )?;
    let d_r = build_random_set(&splits.remainder, d_c.utterances.len(), derive_seed(seed, 6))?;
    let overlap = id_overlap(&d_c.utterances, &d_r);
    Ok(FinetuneSets { d_c, d_r, overlap })
}

/// Grows the clustering tree from the baseline's errors on the tree set.
pub fn cluster_with(model: &RnntModel, data: &[Utterance], config: &SuiteConfig, seed: u64) -> Result<CvSelection> {
    let hyps = decode_set(model, data, config.max_symbols_per_frame)?;
    let samples = geo_samples(data, &hyps)?;
    select_tree_cv(&samples, config.threshold, config.folds, derive_seed(seed, 4))
}

/// Trains one experiment. `exp1` must be given for adaptation runs; the EWC
/// run also needs its Fisher section.
pub fn run_experiment(
    spec: &ExperimentSpec,
    config: &SuiteConfig,
    seed: u64,
    data: &[Utterance],
    exp1: Option<&Checkpoint>,
    access: Option<&AccessLog>,
) -> Result<(Checkpoint, Vec<f64>)> {
    let tc = config.train_config(spec, seed);
    let mut model = match spec.init {
        Init::Scratch => RnntModel::init(config.model.clone(), derive_seed(seed, 10))?,
        Init::Exp1 => {
            let ck = exp1.ok_or_else(|| Error::contract("missing prerequisite checkpoint from experiment 1"))?;
            RnntModel::new(ck.config.clone(), ck.params.clone())?
        }
    };
    let anchor = match spec.method {
        Method::Ewc => {
            let ck = exp1.ok_or_else(|| Error::contract("EWC needs the experiment 1 checkpoint"))?;
            let fisher = ck
                .fisher
                .clone()
                .ok_or_else(|| Error::contract("experiment 1 checkpoint has no Fisher section"))?;
            let theta = ck.theta_star.clone().unwrap_or_else(|| ck.params.clone());
            Some(EwcAnchor::new(theta, fisher, tc.lambda)?)
        }
        _ => None,
    };
    let phase = format!("exp{}", spec.id);
    let hooks = TrainHooks {
        anchor: anchor.as_ref(),
        access: access.map(|log| (log, phase.as_str())),
    };
    let outcome = train(&mut model, data, &tc, hooks)?;
    let mut ck = Checkpoint::new(model.config, model.params);
    ck.seed = seed;
    ck.step = tc.steps as u64;
    ck.config_hash = config_hash(&(spec, &tc, &config.model, seed))?;
    ck.optimizer = Some(outcome.optimizer);
    Ok((ck, outcome.losses))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub experiment: u8,
    pub config_hash: String,
    pub seed: u64,
    pub checkpoint_path: Option<PathBuf>,
    pub wer_stats_path: Option<PathBuf>,
    pub wall_clock_secs: f64,
    pub step_losses: Vec<f64>,
}

/// Result of checking that adaptation runs never read pretraining data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AccessCheck {
    pub d_p_size: usize,
    /// Phases checked, with the number of distinct utterances each read.
    pub checked: BTreeMap<String, usize>,
    pub violations: usize,
    /// Distinct D_p utterances read by the joint-retraining control run;
    /// nonzero shows the log does see D_p reads.
    pub control_d_p_reads: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteOutcome {
    pub seed: u64,
    pub rows: Vec<ReportRow>,
    pub stats: BTreeMap<u8, WerStats>,
    /// Test WER grouped by the generator's planted regions instead of tree
    /// leaves; a diagnostic the models never see.
    pub planted_stats: BTreeMap<u8, WerStats>,
    pub tree: ClusterTree,
    pub cv_fold_scores: Vec<f64>,
    pub d_c_regions: Vec<usize>,
    pub d_c_boundary_region: Option<usize>,
    pub d_c_size: usize,
    pub d_r_overlap: usize,
    pub access: AccessCheck,
    /// Utterance ids read by each phase (training, Fisher, clustering, evaluation).
    #[serde(skip)]
    pub access_log: BTreeMap<String, BTreeSet<String>>,
    /// SHA-256 of each experiment's checkpoint bytes.
    pub checkpoint_digests: BTreeMap<u8, String>,
    pub manifests: Vec<RunManifest>,
}

impl SuiteOutcome {
    pub fn table(&self) -> String {
        render_table(&self.rows)
    }
}

fn select<'a>(sel: DataSelector, splits: &'a Splits, sets: &'a FinetuneSets) -> Vec<Utterance> {
    let cat = |a: &[Utterance], b: &[Utterance]| a.iter().chain(b).cloned().collect();
    match sel {
        DataSelector::Dp => splits.d_p.clone(),
        DataSelector::Dc => sets.d_c.utterances.clone(),
        DataSelector::Dr => sets.d_r.clone(),
        DataSelector::DpDc => cat(&splits.d_p, &sets.d_c.utterances),
        DataSelector::DpDr => cat(&splits.d_p, &sets.d_r),
    }
}

fn check_access(log: &AccessLog, specs: &[ExperimentSpec], d_p: &[Utterance]) -> Result<AccessCheck> {
    let dp: HashSet<&str> = d_p.iter().map(|u| u.id.as_str()).collect();
    let mut checked = BTreeMap::new();
    let mut violations = 0;
    let mut control = 0;
    for spec in specs {
        for phase in [format!("exp{}", spec.id), format!("exp{}-eval", spec.id)] {
            let ids = log.ids(&phase);
            let hits = ids.iter().filter(|id| dp.contains(id.as_str())).count();
            if spec.init == Init::Exp1 {
                checked.insert(phase, ids.len());
                violations += hits;
            } else if spec.data.reads_dp() && spec.id != 1 {
                control = control.max(hits);
            }
        }
    }
    let check = AccessCheck {
        d_p_size: dp.len(),
        checked,
        violations,
        control_d_p_reads: control,
    };
    if violations > 0 {
        return Err(Error::contract(format!(
            "adaptation runs read {violations} pretraining utterances"
        )));
    }
    Ok(check)
}

fn planted_stats(data: &[Utterance], hyps: &[Vec<usize>]) -> Result<WerStats> {
    let scored: Vec<ScoredUtterance> = data
        .iter()
        .zip(hyps)
        .map(|(u, h)| ScoredUtterance {
            region_id: u.region_truth,
            errors: edit_distance(&u.transcript, h).total(),
            ref_words: u.transcript.len(),
        })
        .collect();
    region_wer_stats(&scored)
}

fn digest(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Runs all eight experiments for one seed: corpus, baseline, Fisher,
/// clustering, adaptation sets, the remaining runs and the relative-change
/// table against the baseline. Artifacts are written when `out_dir` is set.
pub fn run_suite(config: &SuiteConfig, seed: u64, out_dir: Option<&Path>) -> Result<SuiteOutcome> {
    config.validate()?;
    let corpus_config = CorpusConfig {
        seed,
        ..config.corpus.clone()
    };
    let corpus = generate_corpus(&corpus_config)?;
    let splits = Splits::compute(&corpus, config, seed)?;
    drop(corpus);
    let specs = table1_experiments();
    let log = AccessLog::new();
    if let Some(dir) = out_dir {
        fs::create_dir_all(dir)?;
    }

    let mut checkpoints: BTreeMap<u8, Checkpoint> = BTreeMap::new();
    let mut stats: BTreeMap<u8, WerStats> = BTreeMap::new();
    let mut planted: BTreeMap<u8, WerStats> = BTreeMap::new();
    let mut manifests = Vec::new();
    let mut digests = BTreeMap::new();
    let mut tree: Option<(CvSelection, FinetuneSets)> = None;

    for spec in &specs {
        let started = Instant::now();
        let data = match &tree {
            Some((_, sets)) => select(spec.data, &splits, sets),
            None if spec.data == DataSelector::Dp => splits.d_p.clone(),
            None => return Err(Error::contract("experiment order must start with the baseline")),
        };
        let (mut ck, losses) = run_experiment(spec, config, seed, &data, checkpoints.get(&1), Some(&log))?;

        if spec.id == 1 {
            let model = RnntModel::new(ck.config.clone(), ck.params.clone())?;
            let fisher = compute_fisher(
                &model,
                &splits.d_p,
                config.fisher_examples,
                derive_seed(seed, 7),
                Some((&log, "exp1-fisher")),
            )?;
            ck.fisher = Some(fisher);
            ck.theta_star = Some(ck.params.clone());
            log.record("cluster", splits.tree.iter().map(|u| u.id.as_str()));
            let sel = cluster_with(&model, &splits.tree, config, seed)?;
            let sets = build_finetune_sets(&splits, &sel.tree, config, seed)?;
            tree = Some((sel, sets));
        }
        let region_tree = &tree.as_ref().expect("set after experiment 1").0.tree;
        let model = RnntModel::new(ck.config.clone(), ck.params.clone())?;
        let phase = format!("exp{}-eval", spec.id);
        log.record(&phase, splits.test.iter().map(|u| u.id.as_str()));
        let hyps = decode_set(&model, &splits.test, config.max_symbols_per_frame)?;
        let st = region_stats(region_tree, &splits.test, &hyps)?;
        planted.insert(spec.id, planted_stats(&splits.test, &hyps)?);

        let bytes = checkpoint::to_bytes(&ck)?;
        digests.insert(spec.id, digest(&bytes));
        let (mut ck_path, mut st_path) = (None, None);
        if let Some(dir) = out_dir {
            let sub = dir.join(format!("exp{}", spec.id));
            fs::create_dir_all(&sub)?;
            let p = sub.join("model.ckpt");
            fs::write(&p, &bytes)?;
            ck_path = Some(p);
            let p = sub.join("region_wer.csv");
            write_region_stats_csv(&st, File::create(&p)?)?;
            st_path = Some(p);
        }
        let manifest = RunManifest {
            experiment: spec.id,
            config_hash: ck.config_hash.clone(),
            seed,
            checkpoint_path: ck_path,
            wer_stats_path: st_path,
            wall_clock_secs: started.elapsed().as_secs_f64(),
            step_losses: losses,
        };
        if let Some(dir) = out_dir {
            let p = dir.join(format!("exp{}", spec.id)).join("manifest.json");
            fs::write(p, serde_json::to_string_pretty(&manifest)?)?;
        }
        manifests.push(manifest);
        stats.insert(spec.id, st);
        checkpoints.insert(spec.id, ck);
    }

    let access = check_access(&log, &specs, &splits.d_p)?;
    let baseline = &stats[&1];
    let rows = specs
        .iter()
        .map(|s| {
            Ok(ReportRow {
                experiment: format!("Experiment {}", s.id),
                description: s.description.clone(),
                data: s.data.label().to_string(),
                report: werr_report(baseline, &stats[&s.id])?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let (sel, sets) = tree.expect("experiment 1 ran");
    let outcome = SuiteOutcome {
        seed,
        rows,
        stats,
        planted_stats: planted,
        tree: sel.tree,
        cv_fold_scores: sel.fold_scores,
        d_c_regions: sets.d_c.included_regions,
        d_c_boundary_region: sets.d_c.boundary_region,
        d_c_size: sets.d_c.utterances.len(),
        d_r_overlap: sets.overlap,
        access,
        access_log: log.into_reads(),
        checkpoint_digests: digests,
        manifests,
    };
    if let Some(dir) = out_dir {
        write_suite_artifacts(dir, &outcome)?;
    }
    Ok(outcome)
}

fn write_suite_artifacts(dir: &Path, outcome: &SuiteOutcome) -> Result<()> {
    fs::write(dir.join("table1.txt"), outcome.table())?;
    write_report_csv(&outcome.rows, File::create(dir.join("table1.csv"))?)?;
    fs::write(
        dir.join("regions.geojson"),
        serde_json::to_string_pretty(&export_regions(&outcome.tree))?,
    )?;
    write_region_table_csv(&outcome.tree, File::create(dir.join("regions.csv"))?)?;
    fs::write(dir.join("tree.json"), serde_json::to_string_pretty(&outcome.tree)?)?;
    // Everything except wall-clock timings, so reruns compare byte for byte.
    let summary = serde_json::json!({
        "seed": outcome.seed,
        "rows": outcome.rows,
        "stats": outcome.stats,
        "planted_stats": outcome.planted_stats,
        "cv_fold_scores": outcome.cv_fold_scores,
        "d_c_regions": outcome.d_c_regions,
        "d_c_boundary_region": outcome.d_c_boundary_region,
        "d_c_size": outcome.d_c_size,
        "d_r_overlap": outcome.d_r_overlap,
        "access": outcome.access,
        "checkpoint_digests": outcome.checkpoint_digests,
    });
    fs::write(dir.join("suite.json"), serde_json::to_string_pretty(&summary)?)?;
    fs::write(dir.join("access_log.json"), serde_json::to_string(&outcome.access_log)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_rows_match_layout() {
        let specs = table1_experiments();
        assert_eq!(
            specs.iter().map(|s| s.id).collect::<Vec<_>>(),
            (1..=8).collect::<Vec<_>>()
        );
        assert_eq!(specs[0].data, DataSelector::Dp);
        for s in &specs[1..6] {
            assert_eq!((s.data, s.init), (DataSelector::Dc, Init::Exp1));
        }
        assert_eq!(specs[5].method, Method::Ewc);
        assert_eq!((specs[6].data, specs[6].init), (DataSelector::DpDc, Init::Scratch));
        assert_eq!((specs[7].data, specs[7].init), (DataSelector::DpDr, Init::Scratch));
    }

    #[test]
    fn adaptation_needs_baseline_checkpoint() {
        let spec = &table1_experiments()[1];
        let err = run_experiment(spec, &SuiteConfig::desk(), 0, &[], None, None).unwrap_err();
        assert!(err.to_string().contains("prerequisite"));
    }

    #[test]
    fn method_names_round_trip() {
        for s in table1_experiments() {
            assert_eq!(s.method.to_string().parse::<Method>().unwrap(), s.method);
        }
        assert!("freeze-all".parse::<Method>().is_err());
    }

    #[test]
    fn desk_config_is_valid() {
        SuiteConfig::desk().validate().unwrap();
        let text = toml::to_string(&SuiteConfig::desk()).unwrap();
        let back: SuiteConfig = toml::from_str(&text).unwrap();
        assert_eq!(back, SuiteConfig::desk());
        SuiteConfig::paper().validate().unwrap();
    }
}
