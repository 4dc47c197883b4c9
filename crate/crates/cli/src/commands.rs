use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use seaice_core::data::{
    compute_norm_stats, generate_synthetic_scene, manifest_hash, read_labels, read_manifest, read_scene, read_stats,
    stratified_block_split, tile_scene, write_labels, write_manifest, write_scene, write_stats, ClassTaxonomy,
    CorpusSpec, ManifestRow, NormalizationStats, SceneStore, Split, SplitParams, TileParams,
};
use seaice_core::metrics::{render_report, ConfusionMatrix};
use seaice_core::train::{evaluate, train as train_loop, Dataset, LossKind, ModelSpec, TrainConfig, TrainLogRecord};
use seaice_core::vit::{load_checkpoint, save_checkpoint, Checkpoint, CheckpointMeta, ViTConfig, ViTParams};

use crate::args::{
    load_json, need, EvalArgs, ExperimentArgs, GenArgs, RunSpec, SplitArgs, StatsArgs, TileArgs, TrainArgs,
};
use crate::error::{io_error, CliError, Result};

pub const CHECKPOINT_FILE: &str = "checkpoint.bin";
pub const TRAIN_LOG_FILE: &str = "train_log.csv";
pub const EXPERIMENT_FILE: &str = "experiment.csv";
const MINORITY_DEFAULT: &str = "Old/Multi-Year Ice";

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(io_error(dir))
}

fn write_file(path: &Path, contents: &[u8]) -> Result<()> {
    std::fs::write(path, contents).map_err(io_error(path))
}

fn load_taxonomy(path: &Option<PathBuf>) -> Result<ClassTaxonomy> {
    Ok(match path {
        Some(p) => ClassTaxonomy::load(p)?,
        None => ClassTaxonomy::default_sigrid3(),
    })
}

pub fn gen_synthetic(a: GenArgs) -> Result<()> {
    let mut spec: CorpusSpec = match &a.config {
        Some(p) => load_json(p)?,
        None => CorpusSpec::default(),
    };
    if let Some(n) = a.scenes {
        spec.scenes = n;
    }
    if let Some(w) = a.width {
        spec.width = w;
    }
    if let Some(h) = a.height {
        spec.height = h;
    }
    if let Some(c) = a.cell_size {
        spec.cell_size = c;
    }
    if let Some(s) = a.seed {
        spec.seed = s;
    }
    if spec.scenes == 0 {
        return Err(CliError::Usage("--scenes must be at least 1".into()));
    }
    let specs = spec.scene_specs()?;
    create_dir(&a.out)?;
    for s in &specs {
        let (scene, labels) = generate_synthetic_scene(s)?;
        write_scene(&scene, &a.out.join(format!("{}.scn", s.scene_id)))?;
        write_labels(&labels, &a.out.join(format!("{}.lbl", s.scene_id)))?;
    }
    let mut json = serde_json::to_string_pretty(&spec).expect("corpus spec serializes");
    json.push('\n');
    write_file(&a.out.join("corpus.json"), json.as_bytes())?;
    log::info!("wrote {} scenes to {}", specs.len(), a.out.display());
    Ok(())
}

pub fn tile(a: TileArgs) -> Result<()> {
    let a = a.resolved()?;
    let dir = need(a.scenes, "scenes")?;
    let out = need(a.out, "out")?;
    let taxonomy = load_taxonomy(&a.taxonomy)?;
    let defaults = TileParams::default();
    let params = TileParams {
        patch_size: a.patch_size.unwrap_or(defaults.patch_size),
        purity_threshold: a.purity.unwrap_or(defaults.purity_threshold),
        block_size: a.block_size.unwrap_or(defaults.block_size),
    };

    let mut scene_files: Vec<PathBuf> = std::fs::read_dir(&dir)
        .map_err(io_error(&dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "scn"))
        .collect();
    scene_files.sort();
    if scene_files.is_empty() {
        return Err(CliError::Input(format!("no .scn files in {}", dir.display())));
    }
    let mut records = Vec::new();
    for path in &scene_files {
        let scene = read_scene(path)?;
        let labels = read_labels(&path.with_extension("lbl"))?;
        records.extend(tile_scene(&scene, &labels, &taxonomy, &params)?);
    }
    let mut counts = vec![0usize; taxonomy.num_classes()];
    for r in &records {
        counts[r.class_index] += 1;
    }
    write_manifest(&ManifestRow::unsplit(records), &out)?;
    log::info!(
        "{} patches per class {:?} -> {}",
        counts.iter().sum::<usize>(),
        counts,
        out.display()
    );
    Ok(())
}

pub fn split(a: SplitArgs) -> Result<()> {
    let a = a.resolved()?;
    let manifest = need(a.manifest, "manifest")?;
    let out = need(a.out, "out")?;
    let defaults = SplitParams::default();
    let params = SplitParams {
        train_ratio: a.ratio.unwrap_or(defaults.train_ratio),
        block_size: a.block_size.unwrap_or(defaults.block_size),
        seed: a.seed.unwrap_or(defaults.seed),
        tolerance: a.tolerance.unwrap_or(defaults.tolerance),
    };
    let rows = read_manifest(&manifest)?;
    let records: Vec<_> = rows.into_iter().map(|r| r.record).collect();
    let k = records.iter().map(|r| r.class_index + 1).max().unwrap_or(0);
    let result = stratified_block_split(&records, k, &params)?;
    write_manifest(&result.rows(), &out)?;
    println!(
        "divergence={:.6} train={} val={}",
        result.divergence,
        result.records(Split::Train).count(),
        result.records(Split::Val).count()
    );
    Ok(())
}

pub fn stats(a: StatsArgs) -> Result<()> {
    let a = a.resolved()?;
    if let Some(s) = &a.split {
        if s != "train" {
            return Err(CliError::Usage(format!(
                "statistics are computed from the train split only, not {s:?}"
            )));
        }
    }
    let manifest = need(a.manifest, "manifest")?;
    let scenes = need(a.scenes, "scenes")?;
    let out = need(a.out, "out")?;
    let rows = read_manifest(&manifest)?;
    let stats = compute_norm_stats(&rows, &mut SceneStore::open(scenes))?;
    write_stats(&stats, &out)?;
    Ok(())
}

struct Corpus {
    rows: Vec<ManifestRow>,
    store: SceneStore,
    stats: NormalizationStats,
    taxonomy: ClassTaxonomy,
}

impl Corpus {
    fn load(
        manifest: Option<PathBuf>,
        scenes: Option<PathBuf>,
        stats: Option<PathBuf>,
        taxonomy: &Option<PathBuf>,
    ) -> Result<Self> {
        let rows = read_manifest(&need(manifest, "manifest")?)?;
        let store = SceneStore::open(need(scenes, "scenes")?);
        let stats = read_stats(&need(stats, "stats")?)?;
        let taxonomy = load_taxonomy(taxonomy)?;
        let train: Vec<ManifestRow> = rows.iter().filter(|r| r.split == Some(Split::Train)).cloned().collect();
        if stats.manifest_hash != manifest_hash(&train)? {
            return Err(CliError::Input(
                "statistics were not computed from this manifest's train split".into(),
            ));
        }
        if let Some(r) = rows.iter().find(|r| r.record.class_index >= taxonomy.num_classes()) {
            return Err(CliError::Input(format!(
                "manifest class {} outside the {}-class taxonomy",
                r.record.class_index,
                taxonomy.num_classes()
            )));
        }
        Ok(Self {
            rows,
            store,
            stats,
            taxonomy,
        })
    }

    fn dataset(&mut self, split: Split) -> Result<Dataset> {
        Ok(Dataset::from_manifest(&self.rows, split, &mut self.store, &self.stats)?)
    }
}

fn format_log(log: &[TrainLogRecord]) -> String {
    let mut out = String::from("step,loss,train_acc,wall_ms\n");
    for r in log {
        writeln!(out, "{},{},{},{}", r.step, r.loss, r.train_acc, r.wall_ms).unwrap();
    }
    out
}

/// Trains one model and writes its checkpoint and log into `out`.
fn run_training(
    cfg: &TrainConfig,
    data: &Dataset,
    taxonomy: &ClassTaxonomy,
    out: &Path,
) -> Result<(ViTConfig, ViTParams)> {
    cfg.validate()?;
    let model = cfg.model.resolve(data.size, taxonomy.num_classes())?;
    let objective = cfg.objective(&data.labels, taxonomy.num_classes())?;
    log::info!(
        "training {} ({} params) with {} on {} patches for {} steps",
        match &cfg.model {
            ModelSpec::Preset(name) => name.as_str(),
            ModelSpec::Explicit(_) => "custom model",
        },
        model.param_count(),
        objective.name(),
        data.len(),
        cfg.steps
    );
    let every = (cfg.steps / 10).max(1);
    let outcome = train_loop(cfg, &model, data, &objective, |r| {
        if r.step % every == 0 {
            log::info!("step {} loss {:.5} batch acc {:.3}", r.step, r.loss, r.train_acc);
        }
    })?;
    create_dir(out)?;
    let ckpt = Checkpoint {
        config: model.clone(),
        meta: CheckpointMeta {
            seed: cfg.seed,
            steps: cfg.steps as u64,
            loss: objective.name().to_string(),
            gamma: (cfg.loss == LossKind::Focal).then_some(cfg.gamma),
            class_names: taxonomy.names().to_vec(),
        },
        params: outcome.params,
    };
    save_checkpoint(&ckpt, &out.join(CHECKPOINT_FILE))?;
    write_file(&out.join(TRAIN_LOG_FILE), format_log(&outcome.log).as_bytes())?;
    Ok((model, ckpt.params))
}

fn run_eval(
    params: &ViTParams,
    model: &ViTConfig,
    data: &Dataset,
    taxonomy: &ClassTaxonomy,
    out: &Path,
) -> Result<ConfusionMatrix> {
    let cm = evaluate(params, model, data, taxonomy.names().to_vec())?;
    render_report(&cm, &cm.report()?, out)?;
    Ok(cm)
}

#[allow(clippy::too_many_arguments)]
fn train_config(
    model: Option<ModelSpec>,
    loss: LossKind,
    gamma: Option<f64>,
    lr: Option<f64>,
    batch_size: Option<usize>,
    steps: Option<usize>,
    wall_time: Option<bool>,
    seed: Option<u64>,
) -> Result<TrainConfig> {
    let mut cfg = TrainConfig::new(loss, need(seed, "seed")?);
    if let Some(m) = model {
        cfg.model = m;
    }
    if let Some(g) = gamma {
        if loss != LossKind::Focal {
            return Err(CliError::Usage("--gamma only applies to --loss focal".into()));
        }
        cfg.gamma = g;
    }
    if let Some(lr) = lr {
        cfg.adam.lr = lr;
    }
    if let Some(b) = batch_size {
        cfg.batch_size = b;
    }
    if let Some(s) = steps {
        cfg.steps = s;
    }
    if let Some(w) = wall_time {
        cfg.record_wall_time = w;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn parse_loss(s: &str) -> Result<LossKind> {
    LossKind::parse(s).map_err(|e| CliError::Usage(e.to_string()))
}

pub fn train(a: TrainArgs) -> Result<()> {
    let a = a.resolved()?;
    let out = need(a.out, "out")?;
    let loss = parse_loss(&need(a.loss, "loss")?)?;
    let cfg = train_config(a.model, loss, a.gamma, a.lr, a.batch_size, a.steps, a.wall_time, a.seed)?;
    let mut corpus = Corpus::load(a.manifest, a.scenes, a.stats, &a.taxonomy)?;
    let data = corpus.dataset(Split::Train)?;
    run_training(&cfg, &data, &corpus.taxonomy, &out)?;
    Ok(())
}

pub fn eval(a: EvalArgs) -> Result<()> {
    let a = a.resolved()?;
    let out = need(a.out, "out")?;
    let split: Split = a.split.as_deref().unwrap_or("val").parse()?;
    let ckpt = load_checkpoint(&need(a.checkpoint, "checkpoint")?)?;
    let mut corpus = Corpus::load(a.manifest, a.scenes, a.stats, &a.taxonomy)?;
    let names = corpus.taxonomy.names();
    if ckpt.config.num_classes != names.len() || (!ckpt.meta.class_names.is_empty() && ckpt.meta.class_names != names) {
        return Err(CliError::Input(format!(
            "checkpoint classes {:?} do not match the {}-class taxonomy",
            ckpt.meta.class_names,
            names.len()
        )));
    }
    let data = corpus.dataset(split)?;
    if data.size != ckpt.config.image_size {
        return Err(CliError::Input(format!(
            "checkpoint expects {}px patches, manifest has {}px",
            ckpt.config.image_size, data.size
        )));
    }
    let cm = run_eval(&ckpt.params, &ckpt.config, &data, &corpus.taxonomy, &out)?;
    println!("accuracy={} weighted_f1={}", cm.accuracy()?, cm.weighted_f1()?);
    Ok(())
}

fn minority_index(taxonomy: &ClassTaxonomy, spec: Option<&str>) -> Result<usize> {
    let spec = spec.unwrap_or(MINORITY_DEFAULT);
    let idx = spec
        .parse::<usize>()
        .ok()
        .or_else(|| taxonomy.class_index(spec))
        .filter(|&i| i < taxonomy.num_classes());
    idx.ok_or_else(|| CliError::Usage(format!("minority class {spec:?} is not in the taxonomy")))
}

pub fn experiment(a: ExperimentArgs) -> Result<()> {
    let a = a.resolved()?;
    let out = need(a.out, "out")?;
    let runs = a.runs.clone().unwrap_or_else(|| {
        [("ce", "ce"), ("wce", "wce"), ("focal", "focal")]
            .map(|(name, loss)| RunSpec {
                name: name.into(),
                loss: loss.into(),
                gamma: None,
            })
            .to_vec()
    });
    if runs.is_empty() {
        return Err(CliError::Usage("experiment needs at least one run".into()));
    }
    let mut configs = Vec::with_capacity(runs.len());
    for run in &runs {
        if run.name.is_empty() || !run.name.chars().all(|c| c.is_ascii_alphanumeric() || "_-.".contains(c)) {
            return Err(CliError::Usage(format!(
                "run name {:?} must use [A-Za-z0-9_.-]",
                run.name
            )));
        }
        let loss = parse_loss(&run.loss)?;
        let gamma = if loss == LossKind::Focal {
            run.gamma.or(a.gamma)
        } else {
            run.gamma
        };
        configs.push(train_config(
            a.model.clone(),
            loss,
            gamma,
            a.lr,
            a.batch_size,
            a.steps,
            a.wall_time,
            a.seed,
        )?);
    }
    let mut corpus = Corpus::load(a.manifest, a.scenes, a.stats, &a.taxonomy)?;
    let minority = minority_index(&corpus.taxonomy, a.minority_class.as_deref())?;
    let train_data = corpus.dataset(Split::Train)?;
    let val_data = corpus.dataset(Split::Val)?;

    let mut table = String::from("config,accuracy,weighted_f1,minority_recall,minority_precision\n");
    for (run, cfg) in runs.iter().zip(&configs) {
        let dir = out.join(&run.name);
        let (model, params) = run_training(cfg, &train_data, &corpus.taxonomy, &dir)?;
        let cm = run_eval(&params, &model, &val_data, &corpus.taxonomy, &dir)?;
        let m = &cm.per_class()[minority];
        writeln!(
            table,
            "{},{},{},{},{}",
            run.name,
            cm.accuracy()?,
            cm.weighted_f1()?,
            m.recall,
            m.precision
        )
        .unwrap();
        log::info!(
            "{}: accuracy {:.4}, {} recall {:.4} precision {:.4}",
            run.name,
            cm.accuracy()?,
            m.name,
            m.recall,
            m.precision
        );
    }
    create_dir(&out)?;
    write_file(&out.join(EXPERIMENT_FILE), table.as_bytes())?;
    print!("{table}");
    Ok(())
}
