use std::collections::HashSet;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use psast_core::analysis::{
    agglomerate, emit_dendrogram, kmeans, kmeans_csv, neighbors_tsv, pairwise_distances, DendrogramFormat,
    DistanceMatrix,
};
use psast_core::ast::{extract_subtrees_into, serialize_ast, tree_features, FILE_EXTENSION};
use psast_core::decode::decode_encoded_command;
use psast_core::embedding::train;
use psast_core::forest::{
    confusion, cross_validate, filter_families, stratified_split, train_forest, tune_max_depth, LabeledCorpus,
};
use psast_core::synth::{generate, SynthSpec};
use psast_core::{seed, Ast, EmbeddingModel, NodeTypeTable, Subtree};
use rand::seq::index::sample;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::config::PipelineConfig;
use crate::ingest::{load_corpus, Corpus, FileError};
use crate::manifest::write_manifest;

/// How a command that completed its main work ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Ok,
    /// Some input files were skipped.
    FileErrors,
}

fn report_file_errors(errors: &[FileError]) -> Status {
    for e in errors {
        eprintln!("error: {e}");
    }
    if errors.is_empty() {
        Status::Ok
    } else {
        Status::FileErrors
    }
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<String> {
    let path = dir.join(name);
    std::fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
    Ok(name.to_owned())
}

fn prepare_out(config: &PipelineConfig) -> Result<PathBuf> {
    let dir = config.out_dir.clone();
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

fn corpus_dir(input: Option<&Path>, config: &PipelineConfig) -> Result<PathBuf> {
    input
        .map(Path::to_path_buf)
        .or_else(|| config.corpus_dir.clone())
        .context("no corpus directory given (argument or `corpus_dir` in the config)")
}

fn model_path(config: &PipelineConfig) -> Result<PathBuf> {
    config.model_path.clone().context("no model given (--model or `model_path` in the config)")
}

pub fn decode(input: &Path, output: Option<&Path>) -> Result<()> {
    let text = std::fs::read_to_string(input).with_context(|| format!("reading {}", input.display()))?;
    let decoded = decode_encoded_command(text.trim()).with_context(|| format!("decoding {}", input.display()))?;
    match output {
        Some(out) => std::fs::write(out, decoded).with_context(|| format!("writing {}", out.display())),
        None => {
            print!("{decoded}");
            Ok(())
        }
    }
}

/// `script_id, family, depth, node_count` per script plus a `TOTAL` row
/// holding the script count, maximum depth and total node count.
pub fn stats_tsv(corpus: &Corpus) -> String {
    let mut out = String::from("script_id\tfamily\tdepth\tnode_count\n");
    let (mut max_depth, mut nodes) = (0, 0);
    for ast in corpus.asts() {
        let f = tree_features(ast);
        max_depth = max_depth.max(f.depth);
        nodes += f.node_count;
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\n",
            ast.script_id,
            ast.family.as_deref().unwrap_or(""),
            f.depth,
            f.node_count
        ));
    }
    if !corpus.trees.is_empty() {
        out.push_str(&format!("TOTAL\t{}\t{max_depth}\t{nodes}\n", corpus.trees.len()));
    }
    out
}

pub fn stats(input: Option<&Path>, config: &PipelineConfig) -> Result<Status> {
    let corpus = load_corpus(&corpus_dir(input, config)?)?;
    let out = prepare_out(config)?;
    let file = write(&out, "stats.tsv", &stats_tsv(&corpus))?;
    write_manifest(
        &out,
        "stats",
        config,
        &[file],
        json!({ "scripts": corpus.trees.len(), "file_errors": corpus.errors.len() }),
    )?;
    Ok(report_file_errors(&corpus.errors))
}

/// Subtrees together with the type table their ids refer to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubtreeFile {
    pub format: String,
    pub types: Vec<String>,
    pub subtrees: Vec<Subtree>,
}

pub const SUBTREE_FORMAT: &str = "psast-subtrees/1";

/// Every subtree of the corpus, with types numbered in name order.
pub fn collect_subtrees(asts: &[&Ast]) -> (NodeTypeTable, Vec<Subtree>) {
    let mut names: Vec<String> = asts
        .iter()
        .flat_map(|a| a.types().names().iter().cloned())
        .collect::<HashSet<_>>()
        .into_iter()
        .collect();
    names.sort();
    let mut table = NodeTypeTable::from_names(names).expect("distinct names");
    let subtrees = asts.iter().flat_map(|a| extract_subtrees_into(a, &mut table)).collect();
    (table, subtrees)
}

pub fn unique_count(subtrees: &[Subtree]) -> usize {
    subtrees.iter().map(Subtree::signature).collect::<HashSet<_>>().len()
}

/// `size` subtrees drawn without replacement, kept in corpus order.
pub fn sample_subtrees(subtrees: Vec<Subtree>, size: Option<usize>, seed: u64) -> Result<Vec<Subtree>> {
    let Some(size) = size else { return Ok(subtrees) };
    ensure!(
        size <= subtrees.len(),
        "sample size {size} exceeds the {} available subtrees",
        subtrees.len()
    );
    let mut picked = sample(&mut seed::rng(seed), subtrees.len(), size).into_vec();
    picked.sort_unstable();
    Ok(picked.into_iter().map(|i| subtrees[i].clone()).collect())
}

struct SubtreeCorpus {
    types: NodeTypeTable,
    total: usize,
    unique_total: usize,
    subtrees: Vec<Subtree>,
    status: Status,
}

fn subtree_corpus(dir: &Path, config: &PipelineConfig) -> Result<SubtreeCorpus> {
    let corpus = load_corpus(dir)?;
    let status = report_file_errors(&corpus.errors);
    let (types, all) = collect_subtrees(&corpus.asts().collect::<Vec<_>>());
    let (total, unique_total) = (all.len(), unique_count(&all));
    let subtrees = sample_subtrees(all, config.subtrees.sample_size, config.sample_seed())?;
    Ok(SubtreeCorpus { types, total, unique_total, subtrees, status })
}

pub fn subtrees(input: Option<&Path>, config: &PipelineConfig) -> Result<Status> {
    let sc = subtree_corpus(&corpus_dir(input, config)?, config)?;
    let out = prepare_out(config)?;
    let unique_sample = unique_count(&sc.subtrees);
    let file = SubtreeFile {
        format: SUBTREE_FORMAT.into(),
        types: sc.types.names().to_vec(),
        subtrees: sc.subtrees,
    };
    let mut text = serde_json::to_string(&file)?;
    text.push('\n');
    let name = write(&out, "subtrees.json", &text)?;
    println!(
        "subtrees: {} total, {} unique; kept {} ({} unique)",
        sc.total,
        sc.unique_total,
        file.subtrees.len(),
        unique_sample
    );
    write_manifest(
        &out,
        "subtrees",
        config,
        &[name],
        json!({
            "total": sc.total,
            "unique": sc.unique_total,
            "kept": file.subtrees.len(),
            "kept_unique": unique_sample,
        }),
    )?;
    Ok(sc.status)
}

pub fn load_subtree_file(path: &Path) -> Result<(NodeTypeTable, Vec<Subtree>)> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let file: SubtreeFile = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    ensure!(file.format == SUBTREE_FORMAT, "{}: unsupported format `{}`", path.display(), file.format);
    let types = NodeTypeTable::from_names(file.types).with_context(|| format!("type table in {}", path.display()))?;
    Ok((types, file.subtrees))
}

/// Trains on a corpus directory or on a `subtrees.json` file.
pub fn train_cmd(input: Option<&Path>, config: &PipelineConfig) -> Result<Status> {
    let input = corpus_dir(input, config)?;
    let (types, subtrees, status) = if input.is_dir() {
        let sc = subtree_corpus(&input, config)?;
        (sc.types, sc.subtrees, sc.status)
    } else {
        let (types, subtrees) = load_subtree_file(&input)?;
        (types, subtrees, Status::Ok)
    };
    ensure!(!subtrees.is_empty(), "no subtrees to train on in {}", input.display());
    let (model, trace) = train(&types, &subtrees, &config.train).context("training")?;
    let out = prepare_out(config)?;
    let files = vec![write(&out, "model.json", &model.to_json())?, write(&out, "loss.csv", &trace.to_csv())?];
    println!(
        "trained {} types on {} subtrees; loss {:.6} -> {:.6}",
        types.len(),
        subtrees.len(),
        trace.first().unwrap_or(0.0),
        trace.last().unwrap_or(0.0)
    );
    write_manifest(
        &out,
        "train",
        config,
        &files,
        json!({
            "types": types.len(),
            "subtrees": subtrees.len(),
            "unique": unique_count(&subtrees),
            "first_loss": trace.first(),
            "final_loss": trace.last(),
        }),
    )?;
    Ok(status)
}

fn load_model(config: &PipelineConfig) -> Result<EmbeddingModel> {
    let path = model_path(config)?;
    EmbeddingModel::load(&path).with_context(|| format!("loading model {}", path.display()))
}

pub fn neighbors(config: &PipelineConfig) -> Result<Status> {
    let model = load_model(config)?;
    let matrix = pairwise_distances(&model, config.analysis.metric);
    let tsv = neighbors_tsv(&matrix, config.analysis.neighbors).context("nearest neighbours")?;
    let out = prepare_out(config)?;
    let file = write(&out, "neighbors.tsv", &tsv)?;
    write_manifest(&out, "neighbors", config, &[file], json!({ "types": model.type_count() }))?;
    Ok(Status::Ok)
}

pub fn display_label(name: &str, strip_ast_suffix: bool) -> String {
    match name.strip_suffix("Ast") {
        Some(short) if strip_ast_suffix && !short.is_empty() => short.to_owned(),
        _ => name.to_owned(),
    }
}

pub fn cluster(config: &PipelineConfig) -> Result<Status> {
    let model = load_model(config)?;
    let opts = &config.analysis;
    let names = model.types.names().to_vec();
    let km = kmeans(&model.vectors, opts.clusters, config.kmeans_seed(), opts.kmeans_max_iters).context("k-means")?;
    let labels = names.iter().map(|n| display_label(n, opts.strip_ast_suffix)).collect();
    let matrix = DistanceMatrix::from_points(&model.vectors, labels, opts.metric);
    let dendrogram = agglomerate(&matrix, opts.linkage).context("agglomerative clustering")?;

    let out = prepare_out(config)?;
    let mut files = vec![write(&out, "kmeans.csv", &kmeans_csv(&names, &km.assignments))?];
    for format in [DendrogramFormat::Newick, DendrogramFormat::Dot, DendrogramFormat::Tsv] {
        let name = format!("dendrogram.{}", format.extension());
        files.push(write(&out, &name, &emit_dendrogram(&dendrogram, format))?);
    }
    write_manifest(
        &out,
        "cluster",
        config,
        &files,
        json!({ "types": names.len(), "inertia_history": km.inertia_history }),
    )?;
    Ok(Status::Ok)
}

#[derive(Debug, Serialize)]
struct ClassifyReport {
    labels: Vec<String>,
    class_counts: Vec<usize>,
    dropped_families: Vec<String>,
    max_depth: usize,
    depth_scores: Option<Vec<(usize, f64)>>,
    cv_fold_accuracies: Vec<f64>,
    cv_mean_accuracy: f64,
    train_size: usize,
    test_size: usize,
    test_accuracy: f64,
    oob_accuracy: Option<f64>,
}

pub fn classify(input: Option<&Path>, config: &PipelineConfig) -> Result<Status> {
    let corpus = load_corpus(&corpus_dir(input, config)?)?;
    let mut errors = corpus.errors;
    let mut named = Vec::new();
    for (path, ast) in &corpus.trees {
        match &ast.family {
            Some(family) => named.push((family.clone(), tree_features(ast))),
            None => errors.push(FileError { path: path.clone(), message: "no `# family` header".into() }),
        }
    }
    let status = report_file_errors(&errors);
    let all = LabeledCorpus::from_named(named);
    let kept = filter_families(&all, config.forest.min_samples_per_family).context("filtering families")?;
    let dropped: Vec<String> = all.labels.iter().filter(|l| !kept.labels.contains(l)).cloned().collect();

    let mut forest_config = config.forest.clone();
    let mut depth_scores = None;
    if config.classify.tune_depth {
        let search = tune_max_depth(&kept.samples, kept.n_classes(), &forest_config, 1..=config.classify.max_depth_grid)
            .context("tuning max_depth")?;
        forest_config.max_depth = search.best_depth;
        depth_scores = Some(search.scores);
    }
    let cv = cross_validate(&kept.samples, kept.n_classes(), &forest_config).context("cross-validation")?;
    let (train_set, test_set) =
        stratified_split(&kept.samples, forest_config.train_fraction, forest_config.seed).context("splitting")?;
    let forest = train_forest(&train_set, kept.n_classes(), &forest_config).context("training forest")?;
    let cm = confusion(&forest, &test_set, &kept.labels);

    let report = ClassifyReport {
        labels: kept.labels.clone(),
        class_counts: kept.class_counts(),
        dropped_families: dropped,
        max_depth: forest_config.max_depth,
        depth_scores,
        cv_fold_accuracies: cv.fold_accuracies.clone(),
        cv_mean_accuracy: cv.mean_accuracy,
        train_size: train_set.len(),
        test_size: test_set.len(),
        test_accuracy: cm.accuracy(),
        oob_accuracy: forest.oob_accuracy,
    };
    let out = prepare_out(config)?;
    let mut report_text = serde_json::to_string_pretty(&report)?;
    report_text.push('\n');
    let files = vec![
        write(&out, "forest.json", &forest.to_json())?,
        write(&out, "confusion.csv", &cm.to_csv())?,
        write(&out, "heatmap.txt", &cm.heatmap())?,
        write(&out, "report.json", &report_text)?,
    ];
    println!(
        "{} families, max_depth {}: cv accuracy {:.4}, test accuracy {:.4}",
        kept.n_classes(),
        forest_config.max_depth,
        cv.mean_accuracy,
        cm.accuracy()
    );
    write_manifest(
        &out,
        "classify",
        config,
        &files,
        json!({ "cv_mean_accuracy": cv.mean_accuracy, "test_accuracy": cm.accuracy() }),
    )?;
    Ok(status)
}

pub fn synth_spec(config: &PipelineConfig) -> SynthSpec {
    let o = &config.synth;
    let mut spec = SynthSpec::grid(o.families, o.scripts_per_family, o.type_count, o.separable, config.seed);
    spec.twins = o.twins.clone();
    spec
}

pub fn synth(config: &PipelineConfig) -> Result<Status> {
    let spec = synth_spec(config);
    let asts = generate(&spec).context("generating corpus")?;
    let out = prepare_out(config)?;
    let mut files = Vec::with_capacity(asts.len() + 1);
    for ast in &asts {
        if ast.script_id.contains(['/', '\\']) {
            bail!("script id `{}` is not a valid file name", ast.script_id);
        }
        files.push(write(&out, &format!("{}{FILE_EXTENSION}", ast.script_id), &serialize_ast(ast))?);
    }
    let mut spec_text = serde_json::to_string_pretty(&spec)?;
    spec_text.push('\n');
    files.push(write(&out, "synth_spec.json", &spec_text)?);
    println!("wrote {} scripts to {}", asts.len(), out.display());
    write_manifest(&out, "synth", config, &files, json!({ "scripts": asts.len() }))?;
    Ok(Status::Ok)
}
