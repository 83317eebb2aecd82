use std::fs::{self, File};
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use geofair_core::checkpoint::{self, Checkpoint};
use geofair_core::geo::{
    export_regions, read_geo_samples_csv, select_tree_cv, sweep_thresholds, write_geo_samples_csv,
    write_region_table_csv, ClusterTree, GeoSample,
};
use geofair_core::metrics::{
    read_region_stats_csv, render_table, werr_report, write_region_stats_csv, write_report_csv, ReportRow, WerStats,
};
use geofair_core::synth::{derive_seed, generate_corpus, load_corpus, save_corpus, CorpusConfig, Utterance};
use geofair_core::train::{
    build_finetune_sets, compute_fisher, decode_set, evaluate, geo_samples, run_experiment, run_suite,
    table1_experiments, ExperimentSpec, Init, Method, RunManifest, Splits, SuiteConfig,
};
use geofair_core::RnntModel;

#[derive(Parser)]
#[command(
    name = "geofair",
    version,
    about = "Geographic WER disparity: clustering, EWC adaptation and the experiment suite"
)]
struct Cli {
    /// TOML suite configuration; replaces the preset.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[arg(long, global = true, value_enum, default_value_t = Preset::Desk)]
    preset: Preset,
    #[arg(long, global = true, default_value = "runs")]
    out_dir: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    Desk,
    Paper,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic corpus into <out-dir>/corpus.
    Synth,
    /// Train a from-scratch experiment (1, 7 or 8).
    Train {
        #[arg(long, default_value_t = 1)]
        experiment: u8,
        #[arg(long)]
        corpus: Option<PathBuf>,
        /// Clustering tree; needed by experiments 7 and 8.
        #[arg(long)]
        tree: Option<PathBuf>,
    },
    /// Estimate the Fisher diagonal on D_p and store it with θ* in the checkpoint.
    Fisher {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        corpus: Option<PathBuf>,
    },
    /// Grow the region tree with k-fold selection.
    Cluster {
        /// Minimum distinct devices per leaf.
        #[arg(long)]
        threshold: Option<usize>,
        #[arg(long)]
        folds: Option<usize>,
        /// Try each threshold and keep the widest WER gap.
        #[arg(long, value_delimiter = ',')]
        sweep_thresholds: Option<Vec<usize>>,
        /// Scored samples (`utterance_id,device_id,lon,lat,ref_words,edit_errors`);
        /// when absent the baseline decodes the tree split of the corpus.
        #[arg(long)]
        samples: Option<PathBuf>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        corpus: Option<PathBuf>,
    },
    /// Adapt the baseline on D_c with one of the methods of experiments 2–6.
    Finetune {
        #[arg(long)]
        method: Method,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        tree: Option<PathBuf>,
        #[arg(long)]
        corpus: Option<PathBuf>,
        /// Overrides the configured EWC weight.
        #[arg(long)]
        lambda: Option<f64>,
    },
    /// Decode the test split and write per-region WER next to the checkpoint.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        tree: Option<PathBuf>,
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Build the relative-change table from <out-dir>/exp*/region_wer.csv.
    Report,
    /// Run all eight experiments end to end.
    Suite,
    /// Print the effective suite configuration as TOML.
    Config,
}

struct Ctx {
    config: SuiteConfig,
    seed: u64,
    out: PathBuf,
}

impl Ctx {
    fn corpus_dir(&self, given: &Option<PathBuf>) -> PathBuf {
        given.clone().unwrap_or_else(|| self.out.join("corpus"))
    }

    fn exp_dir(&self, id: u8) -> PathBuf {
        self.out.join(format!("exp{id}"))
    }

    fn baseline(&self, given: &Option<PathBuf>) -> PathBuf {
        given.clone().unwrap_or_else(|| self.exp_dir(1).join("model.ckpt"))
    }

    fn tree_path(&self, given: &Option<PathBuf>) -> PathBuf {
        given.clone().unwrap_or_else(|| self.out.join("tree.json"))
    }

    fn splits(&self, corpus: &Option<PathBuf>) -> Result<Splits> {
        let dir = self.corpus_dir(corpus);
        let (_, utterances) = load_corpus(&dir).with_context(|| format!("loading corpus from {}", dir.display()))?;
        Ok(Splits::compute(&utterances, &self.config, self.seed)?)
    }

    fn load_checkpoint(&self, path: &Path) -> Result<Checkpoint> {
        checkpoint::load_for(path, &self.config.model).with_context(|| format!("loading checkpoint {}", path.display()))
    }
}

fn load_config(cli: &Cli) -> Result<SuiteConfig> {
    let config = match &cli.config {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
        }
        None => match cli.preset {
            Preset::Desk => SuiteConfig::desk(),
            Preset::Paper => SuiteConfig::paper(),
        },
    };
    config.validate()?;
    Ok(config)
}

fn load_tree(path: &Path) -> Result<ClusterTree> {
    let text = fs::read_to_string(path).with_context(|| format!("reading tree {}", path.display()))?;
    Ok(serde_json::from_str(&text)?)
}

fn spec(id: u8) -> Result<ExperimentSpec> {
    table1_experiments()
        .into_iter()
        .find(|s| s.id == id)
        .with_context(|| format!("no experiment {id}"))
}

fn write_run(ctx: &Ctx, spec: &ExperimentSpec, ck: &Checkpoint, losses: Vec<f64>, started: Instant) -> Result<()> {
    let dir = ctx.exp_dir(spec.id);
    let path = dir.join("model.ckpt");
    checkpoint::save(&path, ck)?;
    let manifest = RunManifest {
        experiment: spec.id,
        config_hash: ck.config_hash.clone(),
        seed: ctx.seed,
        checkpoint_path: Some(path.clone()),
        wer_stats_path: None,
        wall_clock_secs: started.elapsed().as_secs_f64(),
        step_losses: losses,
    };
    fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
    let last = manifest.step_losses.last().copied().unwrap_or(f64::NAN);
    println!(
        "experiment {} ({}): {} steps, final loss {last:.4}, wrote {}",
        spec.id,
        spec.description,
        ck.step,
        path.display()
    );
    Ok(())
}

fn synth(ctx: &Ctx) -> Result<()> {
    let config = CorpusConfig {
        seed: ctx.seed,
        ..ctx.config.corpus.clone()
    };
    let corpus = generate_corpus(&config)?;
    let dir = ctx.corpus_dir(&None);
    save_corpus(&dir, &config, &corpus)?;
    println!("wrote {} utterances to {}", corpus.len(), dir.display());
    Ok(())
}

fn select_data(spec: &ExperimentSpec, splits: &Splits, d_c: &[Utterance], d_r: &[Utterance]) -> Vec<Utterance> {
    let with = |extra: &[Utterance]| splits.d_p.iter().chain(extra).cloned().collect();
    match spec.id {
        1 => splits.d_p.clone(),
        7 => with(d_c),
        8 => with(d_r),
        _ => d_c.to_vec(),
    }
}

fn train_cmd(ctx: &Ctx, experiment: u8, corpus: &Option<PathBuf>, tree: &Option<PathBuf>) -> Result<()> {
    let spec = spec(experiment)?;
    if spec.init != Init::Scratch {
        bail!(
            "experiment {experiment} adapts the baseline; use `finetune --method {}`",
            spec.method
        );
    }
    let splits = ctx.splits(corpus)?;
    let data = if experiment == 1 {
        splits.d_p.clone()
    } else {
        let tree = load_tree(&ctx.tree_path(tree))?;
        let sets = build_finetune_sets(&splits, &tree, &ctx.config, ctx.seed)?;
        select_data(&spec, &splits, &sets.d_c.utterances, &sets.d_r)
    };
    let started = Instant::now();
    let (ck, losses) = run_experiment(&spec, &ctx.config, ctx.seed, &data, None, None)?;
    write_run(ctx, &spec, &ck, losses, started)
}

fn fisher_cmd(ctx: &Ctx, checkpoint: &Option<PathBuf>, corpus: &Option<PathBuf>) -> Result<()> {
    let path = ctx.baseline(checkpoint);
    let mut ck = ctx.load_checkpoint(&path)?;
    let splits = ctx.splits(corpus)?;
    let model = RnntModel::new(ck.config.clone(), ck.params.clone())?;
    let fisher = compute_fisher(
        &model,
        &splits.d_p,
        ctx.config.fisher_examples,
        derive_seed(ctx.seed, 7),
        None,
    )?;
    let (n, total) = (fisher.num_examples(), fisher.entries().flatten().iter().sum::<f64>());
    ck.fisher = Some(fisher);
    ck.theta_star = Some(ck.params.clone());
    checkpoint::save(&path, &ck)?;
    println!(
        "Fisher over {n} utterances (trace {total:.4e}) stored in {}",
        path.display()
    );
    Ok(())
}

struct ClusterArgs<'a> {
    threshold: Option<usize>,
    folds: Option<usize>,
    sweep: &'a Option<Vec<usize>>,
    samples: &'a Option<PathBuf>,
    checkpoint: &'a Option<PathBuf>,
    corpus: &'a Option<PathBuf>,
}

fn cluster_cmd(ctx: &Ctx, args: ClusterArgs) -> Result<()> {
    let samples: Vec<GeoSample> = match args.samples {
        Some(path) => read_geo_samples_csv(File::open(path).with_context(|| format!("opening {}", path.display()))?)?,
        None => {
            let ck = ctx.load_checkpoint(&ctx.baseline(args.checkpoint))?;
            let splits = ctx.splits(args.corpus)?;
            let model = RnntModel::new(ck.config, ck.params)?;
            let hyps = decode_set(&model, &splits.tree, ctx.config.max_symbols_per_frame)?;
            geo_samples(&splits.tree, &hyps)?
        }
    };
    let folds = args.folds.unwrap_or(ctx.config.folds);
    let cv_seed = derive_seed(ctx.seed, 4);
    let selection = match args.sweep {
        Some(ts) if !ts.is_empty() => {
            let sweep = sweep_thresholds(&samples, ts, folds, cv_seed)?;
            for (t, gap) in &sweep.disparities {
                println!("threshold {t}: max − min region WER {gap:.4}");
            }
            println!("selected threshold {}", sweep.threshold);
            sweep.selection
        }
        _ => select_tree_cv(&samples, args.threshold.unwrap_or(ctx.config.threshold), folds, cv_seed)?,
    };
    fs::create_dir_all(&ctx.out)?;
    write_geo_samples_csv(&samples, File::create(ctx.out.join("geo_samples.csv"))?)?;
    fs::write(
        ctx.out.join("tree.json"),
        serde_json::to_string_pretty(&selection.tree)?,
    )?;
    fs::write(
        ctx.out.join("regions.geojson"),
        serde_json::to_string_pretty(&export_regions(&selection.tree))?,
    )?;
    write_region_table_csv(&selection.tree, File::create(ctx.out.join("regions.csv"))?)?;
    println!(
        "{} regions from fold {} (fold scores {:?})",
        selection.tree.num_regions(),
        selection.selected_fold,
        selection.fold_scores
    );
    for r in selection.tree.regions() {
        println!(
            "  region {:>2}: WER {:.4}, {} devices, {} utterances",
            r.region_id, r.wer, r.device_count, r.n_utterances
        );
    }
    Ok(())
}

fn finetune_cmd(
    ctx: &Ctx,
    method: Method,
    checkpoint: &Option<PathBuf>,
    tree: &Option<PathBuf>,
    corpus: &Option<PathBuf>,
    lambda: Option<f64>,
) -> Result<()> {
    let spec = table1_experiments()
        .into_iter()
        .find(|s| s.method == method && s.init == Init::Exp1)
        .with_context(|| format!("method {method} is not an adaptation method"))?;
    let exp1 = ctx.load_checkpoint(&ctx.baseline(checkpoint))?;
    let tree = load_tree(&ctx.tree_path(tree))?;
    let splits = ctx.splits(corpus)?;
    let sets = build_finetune_sets(&splits, &tree, &ctx.config, ctx.seed)?;
    println!(
        "D_c: {} utterances from regions {:?}",
        sets.d_c.utterances.len(),
        sets.d_c.included_regions
    );
    let mut config = ctx.config.clone();
    if let Some(l) = lambda {
        config.lambda = l;
        config.validate()?;
    }
    let started = Instant::now();
    let (ck, losses) = run_experiment(&spec, &config, ctx.seed, &sets.d_c.utterances, Some(&exp1), None)?;
    write_run(ctx, &spec, &ck, losses, started)
}

fn evaluate_cmd(
    ctx: &Ctx,
    checkpoint: &Path,
    tree: &Option<PathBuf>,
    corpus: &Option<PathBuf>,
    output: &Option<PathBuf>,
) -> Result<()> {
    let ck = ctx.load_checkpoint(checkpoint)?;
    let tree = load_tree(&ctx.tree_path(tree))?;
    let splits = ctx.splits(corpus)?;
    let model = RnntModel::new(ck.config, ck.params)?;
    let stats = evaluate(&model, &tree, &splits.test, ctx.config.max_symbols_per_frame, None)?;
    let path = output
        .clone()
        .unwrap_or_else(|| checkpoint.with_file_name("region_wer.csv"));
    write_region_stats_csv(&stats, File::create(&path)?)?;
    let s = stats.summary();
    println!(
        "overall WER {:.4}; region max {:.4}, min {:.4}, variance {:.6}; wrote {}",
        s.overall,
        s.max,
        s.min,
        s.variance,
        path.display()
    );
    Ok(())
}

fn report_cmd(ctx: &Ctx) -> Result<()> {
    let load = |id: u8| -> Result<Option<WerStats>> {
        let path = ctx.exp_dir(id).join("region_wer.csv");
        if !path.exists() {
            return Ok(None);
        }
        Ok(Some(
            read_region_stats_csv(File::open(&path)?).with_context(|| format!("reading {}", path.display()))?,
        ))
    };
    let baseline = load(1)?.context("the report needs exp1/region_wer.csv; run `evaluate` on the baseline first")?;
    let mut rows = Vec::new();
    for spec in table1_experiments() {
        if let Some(stats) = load(spec.id)? {
            rows.push(ReportRow {
                experiment: format!("Experiment {}", spec.id),
                description: spec.description.clone(),
                data: spec.data.label().to_string(),
                report: werr_report(&baseline, &stats)?,
            });
        }
    }
    let table = render_table(&rows);
    fs::write(ctx.out.join("table1.txt"), &table)?;
    write_report_csv(&rows, File::create(ctx.out.join("table1.csv"))?)?;
    print!("{table}");
    Ok(())
}

fn suite_cmd(ctx: &Ctx) -> Result<()> {
    let outcome = run_suite(&ctx.config, ctx.seed, Some(&ctx.out))?;
    print!("{}", outcome.table());
    println!(
        "D_c: {} utterances from regions {:?}; D_p reads by adaptation runs: {}",
        outcome.d_c_size, outcome.d_c_regions, outcome.access.violations
    );
    println!("artifacts in {}", ctx.out.display());
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let ctx = Ctx {
        config: load_config(&cli)?,
        seed: cli.seed,
        out: cli.out_dir.clone(),
    };
    match &cli.command {
        Command::Synth => synth(&ctx),
        Command::Train {
            experiment,
            corpus,
            tree,
        } => train_cmd(&ctx, *experiment, corpus, tree),
        Command::Fisher { checkpoint, corpus } => fisher_cmd(&ctx, checkpoint, corpus),
        Command::Cluster {
            threshold,
            folds,
            sweep_thresholds,
            samples,
            checkpoint,
            corpus,
        } => cluster_cmd(
            &ctx,
            ClusterArgs {
                threshold: *threshold,
                folds: *folds,
                sweep: sweep_thresholds,
                samples,
                checkpoint,
                corpus,
            },
        ),
        Command::Finetune {
            method,
            checkpoint,
            tree,
            corpus,
            lambda,
        } => finetune_cmd(&ctx, *method, checkpoint, tree, corpus, *lambda),
        Command::Evaluate {
            checkpoint,
            tree,
            corpus,
            output,
        } => evaluate_cmd(&ctx, checkpoint, tree, corpus, output),
        Command::Report => report_cmd(&ctx),
        Command::Suite => suite_cmd(&ctx),
        Command::Config => {
            print!("{}", toml::to_string(&ctx.config)?);
            Ok(())
        }
    }
}
