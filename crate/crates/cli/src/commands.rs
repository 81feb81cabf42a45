use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use symgraph::dataset::{Bundle, KnowledgeSource, LabelSpace, Split};
use symgraph::embeddings::{load_embeddings, EmbeddingTable};
use symgraph::evaluation::{ablate_graphs, ablate_layers, ablation_csv, attention_csv, evaluate, MetricsReport, Prediction, ThresholdPolicy};
use symgraph::gradcheck::{gradcheck, GradcheckSpec, TOLERANCE};
use symgraph::graphs::{load_scene_graph_file, load_vocabulary, FactStore, KnowledgeOptions, RelationWhitelist};
use symgraph::model::{Checkpoint, FusionMode, GraphMode, Model};
use symgraph::numerics::{OpKind, DEFAULT_STEP};
use symgraph::synth::SynthData;
use symgraph::training::{prepare_examples, run as train_run, RunInputs};

use crate::args::{AblateArgs, Command, EvalArgs, GradcheckArgs, PrepareArgs, SynthArgs, TrainArgs};
use crate::error::{CliError, CliResult};
use crate::manifest::{create_dir, write_file, RunManifest};
use crate::settings::{self, PrepareSettings, Resolved, RunSettings, SynthSettings};

pub const RUNLOG_CSV: &str = "runlog.csv";
pub const CHECKPOINT: &str = "checkpoint.json";
pub const BEST_CHECKPOINT: &str = "best_checkpoint.json";
pub const METRICS_CSV: &str = "metrics.csv";
pub const SUMMARY_CSV: &str = "summary.csv";
pub const PREDICTIONS_CSV: &str = "predictions.csv";
pub const ATTENTION_CSV: &str = "attention.csv";
pub const ABLATION_CSV: &str = "ablation.csv";

pub fn dispatch(command: Command) -> CliResult<()> {
    match command {
        Command::Prepare(a) => prepare(&a),
        Command::Train(a) => train(&a),
        Command::Eval(a) => eval(&a),
        Command::Ablate(a) => ablate(&a),
        Command::Synth(a) => synth(&a),
        Command::Gradcheck(a) => gradcheck_cmd(&a),
    }
}

/// Column count of the first vector line of a word-vector file.
pub fn embedding_width(path: &Path) -> CliResult<usize> {
    let text = fs::read_to_string(path).map_err(|e| CliError::usage(format!("cannot read {}: {e}", path.display())))?;
    let first = text.lines().find(|l| !l.trim().is_empty());
    match first.map(|l| l.split_whitespace().count()) {
        Some(n) if n >= 2 => Ok(n - 1),
        _ => Err(CliError::usage(format!("{} has no vector lines", path.display()))),
    }
}

/// Word vectors of width `dim`, or of the file's own width.
fn load_table(path: &Path, dim: Option<usize>) -> CliResult<EmbeddingTable> {
    let dim = match dim {
        Some(d) => d,
        None => embedding_width(path)?,
    };
    load_embeddings(path, dim).map_err(CliError::usage)
}

fn read_bundle(dir: &Path) -> CliResult<Bundle> {
    Bundle::read(dir).map_err(CliError::usage)
}

fn split_of(bundle: &Bundle, split: Split) -> CliResult<Vec<symgraph::dataset::Example>> {
    bundle.split(split).map_err(CliError::usage)
}

fn prepare(a: &PrepareArgs) -> CliResult<()> {
    let file: PrepareSettings = settings::load(a.config.as_deref())?;
    let seed = a.seed.or(file.seed).unwrap_or(0);
    let options = KnowledgeOptions {
        match_tail: a.match_tail || file.match_tail.unwrap_or(false),
        add_reverse: a.add_reverse || file.add_reverse.unwrap_or(false),
    };
    let whitelist = match (&a.relations, &file.relations) {
        (Some(path), _) => {
            let text = fs::read_to_string(path).map_err(|e| CliError::usage(format!("cannot read {}: {e}", path.display())))?;
            RelationWhitelist::new(text.lines().map(str::trim).filter(|l| !l.is_empty()))
        }
        (None, Some(list)) => RelationWhitelist::new(list),
        (None, None) => RelationWhitelist::default(),
    };
    let store = FactStore::load(&a.facts).map_err(CliError::usage)?;
    let vocab = load_vocabulary(&a.vocab).map_err(CliError::usage)?;
    let labels = LabelSpace::load(&a.labels).map_err(CliError::usage)?;

    let mut files: Vec<PathBuf> = fs::read_dir(&a.scenes)
        .map_err(|e| CliError::usage(format!("cannot list {}: {e}", a.scenes.display())))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(CliError::usage(format!("no scene-graph files in {}", a.scenes.display())));
    }
    let records = files
        .iter()
        .map(|p| load_scene_graph_file(p))
        .collect::<Result<Vec<_>, _>>()
        .map_err(CliError::usage)?;

    let source = KnowledgeSource {
        store: &store,
        whitelist: &whitelist,
        vocab: &vocab,
        options,
    };
    let bundle = Bundle::prepare(records, &source, labels, seed).map_err(CliError::usage)?;
    bundle.write(&a.out).map_err(CliError::runtime)?;

    let config = serde_json::json!({
        "match_tail": options.match_tail,
        "add_reverse": options.add_reverse,
        "relations": file.relations,
    });
    let mut manifest = RunManifest::new("prepare", a.config.as_deref(), config, &a.out, seed);
    manifest.hash_dir("scenes", &a.scenes)?;
    manifest.hash_file("facts", &a.facts)?;
    manifest.hash_file("vocab", &a.vocab)?;
    manifest.hash_file("labels", &a.labels)?;
    if let Some(path) = &a.relations {
        manifest.hash_file("relations", path)?;
    }
    manifest.write(&a.out)?;
    let s = &bundle.splits;
    println!(
        "prepared {} images into {} (train {}, val {}, test {})",
        bundle.examples.len(),
        a.out.display(),
        s.train.len(),
        s.val.len(),
        s.test.len()
    );
    Ok(())
}

/// Bundle, word vectors and resolved configs for `train` and `ablate`.
struct RunSetup {
    bundle: Bundle,
    table: EmbeddingTable,
    resolved: Resolved,
    manifest: RunManifest,
}

fn setup_run(command: &str, bundle_dir: &Path, embeddings: &Path, out: &Path, s: RunSettings, config_file: Option<&Path>) -> CliResult<RunSetup> {
    let bundle = read_bundle(bundle_dir)?;
    let table = load_table(embeddings, s.embed_dim)?;
    let resolved = s.resolve(bundle.labels.len(), table.dim())?;
    let mut manifest = RunManifest::new(command, config_file, resolved.snapshot(), out, resolved.train.seed);
    manifest.hash_dir("bundle", bundle_dir)?;
    manifest.hash_file("embeddings", embeddings)?;
    Ok(RunSetup {
        bundle,
        table,
        resolved,
        manifest,
    })
}

fn write_metrics(out: &Path, prefix: &str, report: &MetricsReport, labels: &LabelSpace) -> CliResult<()> {
    write_file(&out.join(format!("{prefix}{METRICS_CSV}")), report.per_label_csv(labels))?;
    write_file(&out.join(format!("{prefix}{SUMMARY_CSV}")), report.summary_csv())
}

fn predictions_csv(predictions: &[Prediction], labels: &LabelSpace) -> String {
    let mut out = String::from("image_id,predicted\n");
    for p in predictions {
        let names: Vec<&str> = p.predicted.iter().map(|&i| labels.name(i)).collect();
        out.push_str(&format!("{},{}\n", csv_field(&p.image_id), csv_field(&names.join(";"))));
    }
    out
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn require_attention(fusion: FusionMode) -> CliResult<()> {
    if fusion == FusionMode::Concat {
        return Err(CliError::usage("--dump-attention needs an attention fusion mode"));
    }
    Ok(())
}

fn train(a: &TrainArgs) -> CliResult<()> {
    let mut s = settings::load::<RunSettings>(a.run.config.as_deref())?.overlay(&a.run);
    if let Some(k) = a.layers {
        s.gcn_layers = Some(k);
    }
    if let Some(g) = a.graphs {
        s.graphs = Some(g);
    }
    let setup = setup_run("train", &a.bundle, &a.embeddings, &a.out, s, a.run.config.as_deref())?;
    let Resolved { model: mc, train: tc, policy } = &setup.resolved;
    if a.dump_attention {
        require_attention(mc.fusion)?;
    }
    let train_split = split_of(&setup.bundle, Split::Train)?;
    let val_split = split_of(&setup.bundle, Split::Val)?;
    create_dir(&a.out)?;
    setup.manifest.write(&a.out)?;

    let start = Instant::now();
    let inputs = RunInputs {
        train: &train_split,
        val: &val_split,
        labels: &setup.bundle.labels,
        table: &setup.table,
        policy: *policy,
    };
    let outcome = train_run(mc, tc, inputs).map_err(CliError::runtime)?;
    let names = setup.bundle.labels.names();
    write_file(&a.out.join(RUNLOG_CSV), outcome.log.to_csv())?;
    Checkpoint::from_model(&outcome.model, names).save(&a.out.join(CHECKPOINT)).map_err(CliError::runtime)?;
    Checkpoint::from_model(&outcome.best, names).save(&a.out.join(BEST_CHECKPOINT)).map_err(CliError::runtime)?;

    let val = prepare_examples(&outcome.model, &val_split, &setup.bundle.labels, &setup.table).map_err(CliError::runtime)?;
    let (report, predictions) = evaluate(&outcome.model, &val, *policy).map_err(CliError::runtime)?;
    write_metrics(&a.out, "val_", &report, &setup.bundle.labels)?;
    if a.dump_attention {
        write_file(&a.out.join(ATTENTION_CSV), attention_csv(&predictions))?;
    }
    println!(
        "trained {} epochs in {:.1}s: final val macro F {:.2}, best {:.2} at epoch {}",
        tc.epochs,
        start.elapsed().as_secs_f64(),
        report.macro_f,
        outcome.best_val_macro_f().unwrap_or(f64::NAN),
        outcome.best_epoch.map_or("-".to_string(), |e| e.to_string())
    );
    Ok(())
}

fn eval(a: &EvalArgs) -> CliResult<()> {
    let split: Split = a.split.parse().map_err(CliError::usage)?;
    let checkpoint = Checkpoint::load(&a.checkpoint).map_err(CliError::usage)?;
    let model: Model = checkpoint.to_model().map_err(CliError::usage)?;
    let bundle = read_bundle(&a.bundle)?;
    if checkpoint.labels != bundle.labels.names() {
        return Err(CliError::usage("checkpoint labels differ from the bundle's label list"));
    }
    let table = load_table(&a.embeddings, Some(model.config().embed_dim))?;
    let policy = match &a.threshold {
        Some(text) => text.parse().map_err(CliError::usage)?,
        None => ThresholdPolicy::default_for(model.config().output),
    };
    if a.dump_attention {
        require_attention(model.config().fusion)?;
    }
    let examples = split_of(&bundle, split)?;
    if examples.is_empty() {
        return Err(CliError::usage(format!("split {} is empty", split.name())));
    }
    let config = serde_json::json!({
        "split": split.name(),
        "threshold": policy.to_string(),
        "model": model.config(),
    });
    let mut manifest = RunManifest::new("eval", None, config, &a.out, model.config().seed);
    manifest.hash_dir("bundle", &a.bundle)?;
    manifest.hash_file("embeddings", &a.embeddings)?;
    manifest.hash_file("checkpoint", &a.checkpoint)?;
    create_dir(&a.out)?;
    manifest.write(&a.out)?;

    let data = prepare_examples(&model, &examples, &bundle.labels, &table).map_err(CliError::runtime)?;
    let (report, predictions) = evaluate(&model, &data, policy).map_err(CliError::runtime)?;
    write_metrics(&a.out, "", &report, &bundle.labels)?;
    write_file(&a.out.join(PREDICTIONS_CSV), predictions_csv(&predictions, &bundle.labels))?;
    if a.dump_attention {
        write_file(&a.out.join(ATTENTION_CSV), attention_csv(&predictions))?;
    }
    println!(
        "{} split, {} images: macro F {:.2}, micro F {:.2}",
        split.name(),
        data.len(),
        report.macro_f,
        report.micro_f
    );
    Ok(())
}

fn ablate(a: &AblateArgs) -> CliResult<()> {
    let mut s = settings::load::<RunSettings>(a.run.config.as_deref())?.overlay(&a.run);
    if let Some(k) = a.depth {
        s.gcn_layers = Some(k);
    }
    let mut setup = setup_run("ablate", &a.bundle, &a.embeddings, &a.out, s, a.run.config.as_deref())?;
    let sweep = match &a.sweep.layers {
        Some(depths) => serde_json::json!({ "layers": depths }),
        None => serde_json::json!({ "graphs": ["both", "sg_only", "kg_only"] }),
    };
    setup.manifest.config["sweep"] = sweep;
    let train_split = split_of(&setup.bundle, Split::Train)?;
    let val_split = split_of(&setup.bundle, Split::Val)?;
    if let Some(bad) = a.sweep.layers.iter().flatten().find(|&&k| k < 1) {
        return Err(CliError::usage(format!("layer count {bad} must be at least 1")));
    }
    create_dir(&a.out)?;
    setup.manifest.write(&a.out)?;

    let Resolved { model: mc, train: tc, policy } = &setup.resolved;
    let inputs = RunInputs {
        train: &train_split,
        val: &val_split,
        labels: &setup.bundle.labels,
        table: &setup.table,
        policy: *policy,
    };
    let runs = match &a.sweep.layers {
        Some(depths) => ablate_layers(depths, mc, tc, inputs),
        None => ablate_graphs(&[GraphMode::Both, GraphMode::SgOnly, GraphMode::KgOnly], mc, tc, inputs),
    }
    .map_err(CliError::runtime)?;
    write_file(&a.out.join(ABLATION_CSV), ablation_csv(&runs))?;
    for r in &runs {
        let last = r.log.last().map_or(f64::NAN, |rec| rec.val_macro_f);
        println!("{}: final val macro F {last:.2}", r.variant);
    }
    Ok(())
}

fn synth(a: &SynthArgs) -> CliResult<()> {
    let file: SynthSettings = settings::load(a.config.as_deref())?;
    let spec = file.resolve(a);
    spec.validate().map_err(CliError::usage)?;
    let data = SynthData::generate(&spec).map_err(CliError::runtime)?;
    data.write(&a.out).map_err(CliError::runtime)?;
    let config = serde_json::to_value(&spec).expect("spec serializes");
    RunManifest::new("synth", a.config.as_deref(), config, &a.out, spec.seed).write(&a.out)?;
    println!(
        "wrote {} synthetic images with {} labels to {}",
        spec.examples,
        spec.num_labels,
        a.out.display()
    );
    Ok(())
}

fn gradcheck_cmd(a: &GradcheckArgs) -> CliResult<()> {
    let fault = match &a.inject_fault {
        Some(name) => Some(OpKind::parse(name).ok_or_else(|| CliError::usage(format!("unknown op kind {name:?}")))?),
        None => None,
    };
    let fusions = if a.fusion.is_empty() {
        vec![FusionMode::Concat, FusionMode::Attention]
    } else {
        a.fusion.clone()
    };
    let start = Instant::now();
    let mut failed = Vec::new();
    println!("fusion,group,coordinates,max_rel_error,status");
    for fusion in fusions {
        let spec = GradcheckSpec {
            embed_dim: a.embed_dim,
            hidden_dim: a.hidden_dim,
            gcn_layers: a.layers,
            num_labels: a.labels,
            fusion,
            nonlinearity: a.nonlinearity,
            output: a.output,
            train_embeddings: a.train_embeddings,
            seed: a.seed,
            step: a.step.unwrap_or(DEFAULT_STEP),
            fault,
            ..GradcheckSpec::default()
        };
        spec.model_config().validate().map_err(CliError::usage)?;
        let report = gradcheck(&spec).map_err(CliError::runtime)?;
        let mode = serde_json::to_value(fusion).expect("fusion serializes");
        let mode = mode.as_str().expect("fusion is a string");
        for g in report {
            let ok = g.max_rel_error < TOLERANCE;
            println!("{mode},{},{},{:e},{}", g.name, g.coordinates, g.max_rel_error, if ok { "ok" } else { "FAIL" });
            if !ok {
                failed.push(format!("{mode}/{}", g.name));
            }
        }
    }
    println!("elapsed {:.2}s", start.elapsed().as_secs_f64());
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Runtime(format!(
            "gradient check failed (tolerance {TOLERANCE:e}) for {}",
            failed.join(", ")
        )))
    }
}
