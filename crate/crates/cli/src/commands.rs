use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use sha2::{Digest, Sha256};

use s2s_core::checkpoint::{load_model, save_model};
use s2s_core::eval::{
    confusion_eval, dump_features as dump_feature_rows, plot_scatter, project2d, read_features,
    verb_transfer_eval, EvalReport, FeatureKind, ModelScorer, OracleScorer, Scorer,
};
use s2s_core::model::{Combiner, InputMode, TwoStreamModel};
use s2s_core::pipeline::InputPipeline;
use s2s_core::synthgen::{
    confusion_split, generate_dataset, make_split, vt60_split, Manifest, ManifestEntry, Side,
    SynthConfig, VOSplit,
};
use s2s_core::train::{train_loop, TrainData, TrainState, LOG_HEADER};
use s2s_core::wordvec::{load_embeddings, semantic_fixture_table, EmbeddingTable};

use crate::config::{Dataset, RunConfig, SplitKind};
use crate::UsageError;

pub const CONFIG_FILE: &str = "config.resolved";
pub const MODEL_FILE: &str = "model.s2sm";
pub const STATE_FILE: &str = "train_state.s2sm";
pub const METRICS_FILE: &str = "metrics.csv";
pub const ABLATION_FILE: &str = "ablation.csv";
pub const REPORT_FILE: &str = "report.json";

fn out_dir(cfg: &RunConfig) -> &Path {
    cfg.out
        .as_deref()
        .expect("resolved config has an output directory")
}

/// Print the resolved config and store it as `<out>/config.resolved`.
pub fn echo_config(cfg: &RunConfig) -> Result<()> {
    let text = cfg.to_text();
    print!("{text}");
    write_config(cfg, out_dir(cfg))
}

fn write_config(cfg: &RunConfig, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    fs::write(dir.join(CONFIG_FILE), cfg.to_text())
        .with_context(|| format!("writing config to {}", dir.display()))
}

fn synth_config(cfg: &RunConfig) -> SynthConfig {
    match cfg.dataset {
        Dataset::Vt60 => SynthConfig::vt60(cfg.image_size, cfg.samples_per_pair, cfg.seed),
        Dataset::Confusion => {
            SynthConfig::confusion(cfg.image_size, cfg.samples_per_pair, cfg.seed)
        }
    }
}

fn split_for(cfg: &RunConfig, synth: &SynthConfig) -> Result<VOSplit> {
    let table = match cfg.dataset {
        Dataset::Vt60 => vt60_split(),
        Dataset::Confusion => confusion_split(),
    };
    if cfg.split == SplitKind::Table {
        return Ok(table);
    }
    let mut per_verb: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for p in table.train_pairs.iter().chain(&table.test_pairs) {
        per_verb
            .entry(p.verb.clone())
            .or_default()
            .push(p.object.clone());
    }
    let verbs: Vec<String> = synth.verbs.iter().map(|v| v.name.clone()).collect();
    Ok(make_split(&verbs, &per_verb, cfg.seed)?)
}

pub fn gen_data(cfg: &RunConfig) -> Result<()> {
    let synth = synth_config(cfg);
    let split = split_for(cfg, &synth)?;
    let manifest = generate_dataset(&synth, &split, out_dir(cfg))?;
    println!(
        "generated {} images ({} train, {} test pairs) in {}",
        manifest.entries.len(),
        split.train_pairs.len(),
        split.test_pairs.len(),
        out_dir(cfg).display()
    );
    Ok(())
}

fn load_words(cfg: &RunConfig) -> Result<EmbeddingTable> {
    if cfg.words == "fixture" {
        Ok(semantic_fixture_table(cfg.word_dim, 0)?)
    } else {
        load_embeddings(&cfg.words, Some(cfg.word_dim))
            .with_context(|| format!("loading word vectors from {}", cfg.words))
    }
}

fn load_manifest(cfg: &RunConfig) -> Result<Manifest> {
    Manifest::load(&cfg.data)
        .with_context(|| format!("reading the dataset at {}", cfg.data.display()))
}

fn side_of(cfg: &RunConfig) -> Side {
    if cfg.side == "train" {
        Side::Train
    } else {
        Side::Test
    }
}

/// Train into `dir`, resuming from its checkpoint files when asked.
fn train_into(
    cfg: &RunConfig,
    dir: &Path,
    resume: bool,
    manifest: &Manifest,
    words: &EmbeddingTable,
) -> Result<TwoStreamModel<f32>> {
    let model_path = dir.join(MODEL_FILE);
    let state_path = dir.join(STATE_FILE);
    let (mut model, mut state) = if resume {
        let model = load_model(&model_path).context("resume needs a model checkpoint in --out")?;
        let state = TrainState::load(&model, &state_path)
            .context("resume needs a trainer state in --out")?;
        (model, state)
    } else {
        let model = TwoStreamModel::<f32>::new(cfg.model_config(words.dim()))?;
        let state = TrainState::new(&model);
        (model, state)
    };
    let mode = model.config().input_mode;
    let pipeline =
        InputPipeline::for_mode(mode, model.config().input_size, words, manifest, cfg.seed)?;
    let data = TrainData::load(&cfg.data, manifest, Side::Train, pipeline, words.clone())?;
    let metrics_path = dir.join(METRICS_FILE);
    let mut metrics = if resume && metrics_path.exists() {
        OpenOptions::new().append(true).open(&metrics_path)?
    } else {
        let mut f = File::create(&metrics_path)?;
        writeln!(f, "{LOG_HEADER}")?;
        f
    };
    let train_cfg = cfg.train_config();
    let step = if cfg.checkpoint_every == 0 {
        train_cfg.iterations
    } else {
        cfg.checkpoint_every
    };
    while state.iteration < train_cfg.iterations {
        let stop = (state.iteration / step + 1)
            .saturating_mul(step)
            .min(train_cfg.iterations);
        let chunk = s2s_core::train::TrainConfig {
            iterations: stop,
            ..train_cfg.clone()
        };
        train_loop(&mut model, &mut state, &data, &chunk, |r| {
            writeln!(metrics, "{}", r.to_line())
                .map_err(|e| s2s_core::S2sError::io(&metrics_path, e))
        })?;
        save_model(&model, &model_path)?;
        state.save(&model, &state_path)?;
    }
    metrics.flush()?;
    if state.iteration == 0 || !model_path.exists() {
        save_model(&model, &model_path)?;
        state.save(&model, &state_path)?;
    }
    Ok(model)
}

pub fn train(cfg: &RunConfig, resume: bool) -> Result<()> {
    let manifest = load_manifest(cfg)?;
    let words = load_words(cfg)?;
    let dir = out_dir(cfg);
    train_into(cfg, dir, resume, &manifest, &words)?;
    println!("wrote {}", dir.join(MODEL_FILE).display());
    Ok(())
}

fn checkpoint_path(cfg: &RunConfig) -> PathBuf {
    cfg.checkpoint
        .clone()
        .unwrap_or_else(|| out_dir(cfg).join(MODEL_FILE))
}

fn evaluate(cfg: &RunConfig, manifest: &Manifest, scorer: &mut dyn Scorer) -> Result<EvalReport> {
    let entries: Vec<ManifestEntry> = manifest.side(side_of(cfg)).cloned().collect();
    if cfg.protocol == "vo_confusion" {
        Ok(confusion_eval(
            scorer,
            &entries,
            &manifest.pairs(Side::Test),
        )?)
    } else {
        let verbs: Vec<String> = manifest
            .entries
            .iter()
            .map(|e| e.verb.clone())
            .collect::<std::collections::BTreeSet<_>>()
            .into_iter()
            .collect();
        Ok(verb_transfer_eval(scorer, &entries, &verbs)?)
    }
}

fn model_pipeline(
    cfg: &RunConfig,
    model: &TwoStreamModel<f32>,
    manifest: &Manifest,
    words: &EmbeddingTable,
) -> Result<InputPipeline> {
    let mc = model.config();
    if mc.input_mode != InputMode::Rgb && mc.word_dim != words.dim() {
        return Err(UsageError(format!(
            "checkpoint expects {}-d word vectors, config gives {}",
            mc.word_dim,
            words.dim()
        ))
        .into());
    }
    Ok(InputPipeline::for_mode(
        mc.input_mode,
        mc.input_size,
        words,
        manifest,
        cfg.seed,
    )?)
}

fn write_report(path: &Path, report: &EvalReport) -> Result<()> {
    let mut w =
        BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    serde_json::to_writer_pretty(&mut w, report)?;
    writeln!(w)?;
    Ok(w.flush()?)
}

pub fn eval(cfg: &RunConfig, oracle: bool) -> Result<()> {
    let manifest = load_manifest(cfg)?;
    let report = if oracle {
        evaluate(cfg, &manifest, &mut OracleScorer)?
    } else {
        let words = load_words(cfg)?;
        let model = load_model(checkpoint_path(cfg))?;
        let pipeline = model_pipeline(cfg, &model, &manifest, &words)?;
        let mut scorer = ModelScorer::new(&model, &pipeline, &words, &cfg.data);
        evaluate(cfg, &manifest, &mut scorer)?
    };
    let path = out_dir(cfg).join(format!("eval_{}.json", cfg.protocol));
    write_report(&path, &report)?;
    println!(
        "{} accuracy {:.4} ({}/{})",
        cfg.protocol, report.accuracy, report.hits, report.total
    );
    Ok(())
}

/// Hash of the resolved config with the output directory cleared.
pub fn config_hash(cfg: &RunConfig) -> String {
    let text = RunConfig {
        out: None,
        ..cfg.clone()
    }
    .to_text();
    let digest = Sha256::digest(text.as_bytes());
    digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
}

pub fn ablate(cfg: &RunConfig) -> Result<()> {
    let manifest = load_manifest(cfg)?;
    let words = load_words(cfg)?;
    let root = out_dir(cfg);
    let mut csv = csv::Writer::from_path(root.join(ABLATION_FILE))?;
    csv.write_record([
        "mode",
        "combiner",
        "separate_qnets",
        "query_dim",
        "qnet_input_dim",
        "accuracy",
        "hits",
        "total",
        "cell",
        "cached",
    ])?;
    for mode in InputMode::ALL {
        for separate in [false, true] {
            for combiner in Combiner::ALL {
                let cell_cfg = RunConfig {
                    mode,
                    separate_qnets: separate,
                    combiner,
                    ..cfg.clone()
                };
                let hash = config_hash(&cell_cfg);
                let dir = root.join("cells").join(&hash);
                let cell_cfg = RunConfig {
                    out: Some(dir.clone()),
                    checkpoint: None,
                    ..cell_cfg
                };
                let report_path = dir.join(REPORT_FILE);
                let cached = report_path.exists();
                let report: EvalReport = if cached {
                    serde_json::from_reader(File::open(&report_path)?)
                        .with_context(|| format!("reading cached {}", report_path.display()))?
                } else {
                    write_config(&cell_cfg, &dir)?;
                    let model = train_into(&cell_cfg, &dir, false, &manifest, &words)?;
                    let pipeline = model_pipeline(&cell_cfg, &model, &manifest, &words)?;
                    let mut scorer = ModelScorer::new(&model, &pipeline, &words, &cfg.data);
                    let report = evaluate(&cell_cfg, &manifest, &mut scorer)?;
                    write_report(&report_path, &report)?;
                    report
                };
                let mc = cell_cfg.model_config(words.dim());
                println!(
                    "cell {hash} mode={} combiner={} separate_qnets={separate} accuracy={:.4}{}",
                    mode.as_str(),
                    combiner.as_str(),
                    report.accuracy,
                    if cached { " (cached)" } else { "" }
                );
                csv.write_record([
                    mode.as_str().to_string(),
                    combiner.as_str().to_string(),
                    separate.to_string(),
                    combiner.output_dim(mc.word_dim).to_string(),
                    mc.query_dim().to_string(),
                    report.accuracy.to_string(),
                    report.hits.to_string(),
                    report.total.to_string(),
                    hash,
                    cached.to_string(),
                ])?;
                csv.flush()?;
            }
        }
    }
    Ok(())
}

pub fn dump_features(cfg: &RunConfig) -> Result<()> {
    let which: FeatureKind = cfg
        .features
        .parse()
        .map_err(|e: s2s_core::S2sError| UsageError(e.to_string()))?;
    let manifest = load_manifest(cfg)?;
    let words = load_words(cfg)?;
    let model = load_model(checkpoint_path(cfg))?;
    let pipeline = model_pipeline(cfg, &model, &manifest, &words)?;
    let mut scorer = ModelScorer::new(&model, &pipeline, &words, &cfg.data);
    let entries: Vec<ManifestEntry> = manifest.side(side_of(cfg)).cloned().collect();
    let path = out_dir(cfg).join(format!("features_{}.csv", which.as_str()));
    let file = BufWriter::new(
        File::create(&path).with_context(|| format!("creating {}", path.display()))?,
    );
    let rows = dump_feature_rows(&mut scorer, &entries, which, cfg.seed, file)?;
    println!("wrote {rows} rows to {}", path.display());
    Ok(())
}

pub fn plot(cfg: &RunConfig, input: Option<PathBuf>) -> Result<()> {
    let dir = out_dir(cfg);
    let input = input.unwrap_or_else(|| dir.join(format!("features_{}.csv", cfg.features)));
    let table =
        read_features(File::open(&input).with_context(|| format!("opening {}", input.display()))?)?;
    let labels = table
        .column(&cfg.color_by)
        .ok_or_else(|| UsageError(format!("feature file has no column `{}`", cfg.color_by)))?;
    if table.features.len() < 2 {
        bail!(
            "projection needs at least 2 rows, {} has {}",
            input.display(),
            table.features.len()
        );
    }
    let projection = project2d(&table.features, cfg.seed)?;
    if let Some(w) = &projection.warning {
        eprintln!("warning: {w}");
    }
    let mut coords = csv::Writer::from_path(dir.join("coords.csv"))?;
    let mut header = vec!["x".to_string(), "y".to_string()];
    header.extend(table.label_columns.iter().cloned());
    coords.write_record(&header)?;
    for (c, l) in projection.coords.iter().zip(&table.labels) {
        let mut row = vec![c[0].to_string(), c[1].to_string()];
        row.extend(l.iter().cloned());
        coords.write_record(&row)?;
    }
    coords.flush()?;
    plot_scatter(&projection.coords, &labels, dir.join("plot.png"))?;
    println!(
        "wrote {} and {}",
        dir.join("coords.csv").display(),
        dir.join("plot.png").display()
    );
    Ok(())
}
