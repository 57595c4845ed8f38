//! One function per subcommand. Each is a pure function of the config, the
//! seed and the artifacts already on disk.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use autodiff::Checkpoint;
use rawnp::config::RunConfig;
use rawnp::kg::{
    generate_unseen_splits, load_triple_files, make_task, sample_negatives, EntityId, KnowledgeGraph,
    Split,
};
use rawnp::model::RawNp;
use rawnp::pretrain::{init_unseen, pretrain as pretrain_embeddings, EmbeddingTable};
use rawnp::rng;
use rawnp::synth::{planted_graph, PlantedConfig};
use rawnp::train::report::{
    loss_trace_csv, metrics_csv, uncertainty_csv, MetricsRow, UncertaintyRow,
};
use rawnp::train::{
    build_tasks, train as train_model, ClassFilter, Dataset, Evaluator, MetricsReport,
};
use rawnp::walk::{motif_stats, MotifCache, MotifSet};
use rawnp::Error;

use crate::error::{CliError, Result};
use crate::layout::{header, require, write_atomic, Layout};

fn load_graph(config: &RunConfig) -> Result<KnowledgeGraph> {
    config.validate()?;
    let kg = load_triple_files(&config.dataset)?;
    log::info!(
        "loaded {} entities, {} relations, {} triples",
        kg.num_entities(),
        kg.num_relations(),
        kg.triples().len()
    );
    Ok(kg)
}

fn load_dataset(config: &RunConfig, layout: &Layout) -> Result<Dataset> {
    let path = layout.split();
    require(&path, "split artifact", "split")?;
    let kg = load_graph(config)?;
    let split = Split::load(&path)?;
    if split.spec != config.split_spec() {
        log::warn!(
            "split artifact {} was generated with {:?}, config now gives {:?}",
            path.display(),
            split.spec,
            config.split_spec()
        );
    }
    Ok(Dataset::new(kg, split)?)
}

fn base_metadata(config: &RunConfig) -> BTreeMap<String, String> {
    BTreeMap::from([
        ("config_hash".to_string(), config.hash()),
        ("seed".to_string(), config.seed.to_string()),
    ])
}

/// Loads a model checkpoint and checks it against the configured
/// architecture and the dataset vocabulary.
fn load_model(config: &RunConfig, data: &Dataset, path: &Path) -> Result<RawNp> {
    require(path, "model checkpoint", "train")?;
    let model = RawNp::from_checkpoint(&Checkpoint::load(path)?)?;
    let expected = config.model_config(data.kg.num_entities(), data.kg.num_oriented_relations());
    let got = &model.config;
    let pairs = [
        ("model.dim", got.dim, expected.dim),
        ("model.hidden", got.hidden, expected.hidden),
        ("walk.length", got.walk_length, expected.walk_length),
        ("entities", got.num_entities, expected.num_entities),
        ("relations", got.num_relations, expected.num_relations),
    ];
    for (what, have, want) in pairs {
        if have != want {
            return Err(Error::Invalid(format!(
                "checkpoint {} has {what} = {have} but the config/dataset gives {want}",
                path.display()
            ))
            .into());
        }
    }
    Ok(model)
}

fn eval_seed(seed: u64) -> u64 {
    rng::derive(seed, &[rng::tag::EVAL])
}

pub fn split(config: &RunConfig, force: bool) -> Result<()> {
    let layout = Layout::new(config);
    let path = layout.split();
    if path.exists() && !force {
        return Err(CliError::Exists(path.display().to_string()));
    }
    let kg = load_graph(config)?;
    let split = generate_unseen_splits(&kg, &config.split_spec())?;
    let mut text = header(config).line();
    text.push_str(&split.to_json()?);
    text.push('\n');
    write_atomic(&path, text.as_bytes())?;
    println!(
        "split: {} train / {} valid / {} test unseen entities",
        split.train.len(),
        split.valid.len(),
        split.test.len()
    );
    Ok(())
}

pub fn pretrain(config: &RunConfig) -> Result<()> {
    let layout = Layout::new(config);
    let data = load_dataset(config, &layout)?;
    let pcfg = config.pretrain_config();
    let outcome = pretrain_embeddings(&data.background, &pcfg)?;
    let mut table = outcome.table;
    let mut unseen: Vec<EntityId> = data.unseen.iter().copied().collect();
    unseen.sort();
    init_unseen(&mut table, &unseen);

    let epochs = outcome.epoch_losses.len();
    let mut metadata = base_metadata(config);
    metadata.insert("dim".into(), pcfg.dim.to_string());
    metadata.insert("epochs".into(), epochs.to_string());
    write_atomic(&layout.embeddings(), &table.to_checkpoint(metadata).to_bytes())?;

    let mut meta = header(config).line();
    let _ = writeln!(meta, "dim = {}\nseed = {}\nepochs = {epochs}", pcfg.dim, config.seed);
    write_atomic(&layout.embeddings_meta(), meta.as_bytes())?;

    let mut trace = header(config).line();
    trace.push_str("epoch,train_loss,valid_loss\n");
    for (i, loss) in outcome.epoch_losses.iter().enumerate() {
        let valid = outcome.valid_losses.get(i).map(f64::to_string).unwrap_or_default();
        let _ = writeln!(trace, "{},{loss},{valid}", i + 1);
    }
    write_atomic(&layout.pretrain_trace(), trace.as_bytes())?;
    println!("pretrain: {epochs} epochs, dimension {}", pcfg.dim);
    Ok(())
}

pub fn train(config: &RunConfig) -> Result<()> {
    let layout = Layout::new(config);
    let data = load_dataset(config, &layout)?;
    let emb_path = layout.embeddings();
    require(&emb_path, "pretrained embeddings", "pretrain")?;
    let table = EmbeddingTable::from_checkpoint(&Checkpoint::load(&emb_path)?)?;
    if table.dim() != config.dim || table.entity.nrows() != data.kg.num_entities() {
        return Err(Error::Invalid(format!(
            "embeddings at {} are {}x{}, config/dataset need {}x{}",
            emb_path.display(),
            table.entity.nrows(),
            table.dim(),
            data.kg.num_entities(),
            config.dim
        ))
        .into());
    }
    let model_config = config.model_config(data.kg.num_entities(), data.kg.num_oriented_relations());
    let mut model = RawNp::new(model_config, rng::derive(config.seed, &[rng::tag::INIT]));
    model.load_embeddings(&table)?;

    let tc = config.train_config();
    let ablation = config.ablation;
    let last = layout.last_model(ablation);
    let outcome = train_model(&mut model, &data, &tc, |report, current| {
        let mut metadata = base_metadata(config);
        metadata.insert("ablation".into(), ablation.to_string());
        metadata.insert("epoch".into(), report.epoch.to_string());
        Ok(write_atomic(&last, &current.to_checkpoint(metadata).to_bytes())?)
    })?;

    let mut metadata = base_metadata(config);
    metadata.insert("ablation".into(), ablation.to_string());
    if let (Some(epoch), Some(mrr)) = (outcome.best_epoch, outcome.best_valid_mrr) {
        metadata.insert("best_epoch".into(), epoch.to_string());
        metadata.insert("best_valid_mrr".into(), mrr.to_string());
    }
    write_atomic(&layout.best_model(ablation), &model.to_checkpoint(metadata).to_bytes())?;
    write_atomic(
        &layout.train_trace(ablation),
        loss_trace_csv(Some(&header(config)), &outcome.trace).as_bytes(),
    )?;

    let report = evaluate_split(config, &model, &data, &data.split.valid)?;
    let rows: Vec<MetricsRow> = [ClassFilter::All]
        .into_iter()
        .chain(["seen-to-unseen", "unseen-to-unseen"].map(|c| c.parse().expect("known class")))
        .filter_map(|c| MetricsRow::from_report("valid", &report, c))
        .collect();
    let csv = metrics_csv(Some(&header(config)), &rows);
    write_atomic(&layout.metrics(&format!("valid-{ablation}")), csv.as_bytes())?;
    print!("{}", metrics_csv(None, &rows));
    Ok(())
}

fn evaluate_split(
    config: &RunConfig,
    model: &RawNp,
    data: &Dataset,
    entities: &[EntityId],
) -> Result<MetricsReport> {
    let seed = eval_seed(config.seed);
    let (tasks, skipped) = build_tasks(data, entities, config.k, seed)?;
    if tasks.is_empty() {
        return Err(Error::Invalid(format!(
            "all {skipped} entities have at most k={} triples; nothing to evaluate",
            config.k
        ))
        .into());
    }
    let evaluator = Evaluator::new(model, data, &config.walk_config(), seed)?;
    Ok(evaluator.evaluate(&tasks, config.eval_mode)?)
}

fn partition<'a>(data: &'a Dataset, name: &str) -> Result<&'a [EntityId]> {
    match name {
        "valid" => Ok(&data.split.valid),
        "test" => Ok(&data.split.test),
        other => Err(CliError::Usage(format!("unknown split '{other}' (valid|test)"))),
    }
}

pub fn eval(
    config: &RunConfig,
    checkpoint: Option<PathBuf>,
    split: &str,
    class: ClassFilter,
) -> Result<()> {
    let layout = Layout::new(config);
    let data = load_dataset(config, &layout)?;
    let entities = partition(&data, split)?;
    let path = checkpoint.unwrap_or_else(|| layout.best_model(config.ablation));
    let model = load_model(config, &data, &path)?;
    let report = evaluate_split(config, &model, &data, entities)?;
    let row = MetricsRow::from_report(split, &report, class).ok_or_else(|| {
        Error::Invalid(format!("no {} queries in the {split} split", class.as_str()))
    })?;
    let rows = [row];
    let name = format!(
        "eval-{split}-{}-{}-{}",
        config.eval_mode,
        class.as_str(),
        config.ablation
    );
    write_atomic(&layout.metrics(&name), metrics_csv(Some(&header(config)), &rows).as_bytes())?;
    print!("{}", metrics_csv(None, &rows));
    Ok(())
}

/// Parses `a..b` (inclusive), a comma list, or a single size.
pub fn parse_k_range(text: &str) -> Result<Vec<usize>> {
    let bad = || CliError::Usage(format!("bad k-range '{text}' (use e.g. 1..5 or 1,3)"));
    let ks: Vec<usize> = if let Some((a, b)) = text.split_once("..") {
        let a: usize = a.trim().parse().map_err(|_| bad())?;
        let b: usize = b.trim().parse().map_err(|_| bad())?;
        (a..=b).collect()
    } else {
        text.split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| s.parse().map_err(|_| bad()))
            .collect::<Result<_>>()?
    };
    if ks.is_empty() {
        return Err(CliError::Usage(format!("k-range '{text}' is empty")));
    }
    if ks.contains(&0) {
        return Err(CliError::Usage("support sizes must be at least 1".into()));
    }
    Ok(ks)
}

pub fn uncertainty(
    config: &RunConfig,
    checkpoint: Option<PathBuf>,
    ks: &[usize],
    seeds: &[u64],
) -> Result<()> {
    let layout = Layout::new(config);
    let data = load_dataset(config, &layout)?;
    let path = checkpoint.unwrap_or_else(|| layout.best_model(config.ablation));
    let model = load_model(config, &data, &path)?;
    let mut rows = Vec::new();
    for &seed in seeds {
        let seed_eval = eval_seed(seed);
        let evaluator = Evaluator::new(&model, &data, &config.walk_config(), seed_eval)?;
        for &k in ks {
            let (tasks, skipped) = build_tasks(&data, &data.split.test, k, seed_eval)?;
            if skipped > 0 {
                eprintln!(
                    "k={k} seed={seed}: {skipped} of {} test entities skipped (fewer than {} triples)",
                    data.split.test.len(),
                    k + 1
                );
            }
            if tasks.is_empty() {
                eprintln!("k={k} seed={seed}: no test entity qualifies; row omitted");
                continue;
            }
            let report = evaluator.evaluate(&tasks, config.eval_mode)?;
            rows.push(UncertaintyRow {
                k_shot: k,
                seed,
                hits1: report.overall.hits1,
                entropy: report.mean_entropy,
            });
        }
    }
    let csv = uncertainty_csv(Some(&header(config)), &rows);
    write_atomic(&layout.metrics(&format!("uncertainty-{}", config.ablation)), csv.as_bytes())?;
    print!("{}", uncertainty_csv(None, &rows));
    Ok(())
}

fn resolve_entity(kg: &KnowledgeGraph, text: &str) -> Result<EntityId> {
    let id = match kg.entities().get(text) {
        Some(id) => id,
        None => text.parse::<u32>().map_err(|_| {
            CliError::Core(Error::Invalid(format!(
                "unknown entity '{text}': not a known name nor an id in 0..{}",
                kg.num_entities()
            )))
        })?,
    };
    let e = EntityId(id);
    kg.check_entity(e)?;
    Ok(e)
}

pub fn motifs(config: &RunConfig, entity: &str, top: usize) -> Result<()> {
    if top == 0 {
        return Err(CliError::Usage("--top must be at least 1".into()));
    }
    let layout = Layout::new(config);
    let data = load_dataset(config, &layout)?;
    let e = resolve_entity(&data.kg, entity)?;
    let seed = eval_seed(config.seed);
    let task = make_task(&data.kg, e, config.k, seed, &data.unseen)?;
    let mut neg_rng = rng::stream(seed, &[rng::tag::NEGATIVE, e.0 as u64]);
    let mut negatives = Vec::with_capacity(task.query.len());
    for q in &task.query {
        negatives.extend(sample_negatives(&data.kg, e, q.relation, 1, &mut neg_rng)?);
    }
    let walk_seed = rng::derive(seed, &[rng::tag::WALK]);
    let cache = MotifCache::build(&data.background, &config.walk_config(), walk_seed, config.workers)?;
    let sources: [(&str, Vec<EntityId>); 3] = [
        ("support", task.support.iter().map(|t| t.other).collect()),
        ("positive", task.query.iter().map(|t| t.other).collect()),
        ("negative", negatives),
    ];

    let mut body = String::from("source,rank,motif_codes,count\n");
    for (name, entities) in &sources {
        let sets: Vec<&MotifSet> = entities.iter().map(|x| cache.get(*x)).collect();
        for (rank, (motif, count)) in motif_stats(sets).into_iter().take(top).enumerate() {
            let _ = writeln!(body, "{name},{},{},{count}", rank + 1, motif.label());
        }
    }
    let name = format!("motifs-{}", e.0);
    let mut text = header(config).line();
    text.push_str(&body);
    write_atomic(&layout.metrics(&name), text.as_bytes())?;
    print!("{body}");
    Ok(())
}

pub fn synth(config: &RunConfig, out: &Path, entities: usize, out_degree: usize) -> Result<()> {
    let kg = planted_graph(&PlantedConfig {
        entities,
        out_degree,
        seed: config.seed,
        ..PlantedConfig::default()
    })?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    kg.write_tsv(out)?;
    println!(
        "synth: {} entities, {} relations, {} triples -> {}",
        kg.num_entities(),
        kg.num_relations(),
        kg.triples().len(),
        out.display()
    );
    Ok(())
}
