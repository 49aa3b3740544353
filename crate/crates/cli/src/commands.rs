//! One function per subcommand.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use log::{info, warn};
use qfine::augment::{
    mine_triples, original_question_queries, partition_triples, read_eval_queries, read_triples,
    write_eval_queries, write_triples, EvalQuery,
};
use qfine::client::ChatCompletionsClient;
use qfine::corpus::{load_corpus, split_corpus, synthetic_corpus, Corpus, CorpusFormat, SyntheticCorpusConfig};
use qfine::embedder::{init_model, EmbeddingModel};
use qfine::jsonl;
use qfine::metrics::{diversity_report, evaluate_generation, evaluate_retrieval, Rouge1Mode};
use qfine::pipeline::{
    generator_for, run_ablation, run_pipeline, GeneratorKind, PipelineConfig, QuerySource,
};
use qfine::querygen::{
    generate_queries_with, read_queries, synthesize_queries, write_queries, GenerateOptions, QueryType,
};
use qfine::ragpipe::{evaluate_end2end, RagOptions, RagPipeline};
use qfine::retriever::{Bm25Index, DenseRetriever, Retriever, VectorIndex};
use qfine::trainer::train;
use serde::{Deserialize, Serialize};

use crate::args::*;
use crate::CliError;

pub fn dispatch(command: Command, config: PipelineConfig) -> Result<(), CliError> {
    match command {
        Command::SynthCorpus(a) => synth_corpus(a),
        Command::Ingest(a) => ingest(a, &config),
        Command::Genqueries(a) => genqueries(a, &config),
        Command::Mine(a) => mine(a, &config),
        Command::InitModel(a) => init(a, &config),
        Command::Train(a) => train_cmd(a, &config),
        Command::Index(a) => index(a, &config),
        Command::Search(a) => search(a, &config),
        Command::EvalRetrieval(a) => eval_retrieval(a, &config),
        Command::EvalGeneration(a) => eval_generation(a, &config),
        Command::RagEval(a) => rag_eval(a, &config),
        Command::Diversity(a) => diversity(a, &config),
        Command::Run => run(&config),
        Command::Ablate => ablate(&config),
        Command::Serve(a) => crate::serve::serve_command(a, &config),
    }
}

fn corpus_for(arg: &CorpusArg, config: &PipelineConfig) -> Result<Corpus, CliError> {
    let path = arg.corpus.as_ref().unwrap_or(&config.paths.corpus);
    Ok(load_corpus(path, CorpusFormat::Jsonl)?)
}

fn synth_corpus(a: SynthCorpusArgs) -> Result<(), CliError> {
    let corpus = synthetic_corpus(&SyntheticCorpusConfig {
        n_pairs: a.pairs,
        seed: a.seed,
        ..SyntheticCorpusConfig::default()
    });
    corpus.write_jsonl(&a.out)?;
    println!("wrote {} pairs to {}", corpus.len(), a.out.display());
    Ok(())
}

fn ingest(a: IngestArgs, config: &PipelineConfig) -> Result<(), CliError> {
    let corpus = corpus_for(&a.corpus, config)?;
    println!("{}: {} pairs", corpus.name(), corpus.len());
    if let (Some(fraction), Some(train_out), Some(test_out)) = (a.split, &a.train_out, &a.test_out) {
        let (train, test) = split_corpus(&corpus, fraction, a.seed)?;
        train.write_jsonl(train_out)?;
        test.write_jsonl(test_out)?;
        println!("split: {} train, {} test", train.len(), test.len());
    }
    Ok(())
}

fn parse_types(raw: &[String], config: &PipelineConfig) -> Result<Vec<QueryType>, CliError> {
    if raw.is_empty() {
        return Ok(config.querygen.types.clone());
    }
    raw.iter()
        .map(|t| t.parse().map_err(|e: qfine::querygen::UnknownQueryType| CliError::Usage(e.to_string())))
        .collect()
}

fn genqueries(a: GenqueriesArgs, config: &PipelineConfig) -> Result<(), CliError> {
    let corpus = corpus_for(&a.corpus, config)?;
    let types = parse_types(&a.types, config)?;
    let k = a.k.unwrap_or(config.querygen.k_per_type);
    let source = match a.source {
        Some(SourceArg::Synthetic) => QuerySource::Synthetic,
        Some(SourceArg::Llm) => QuerySource::Llm,
        None => config.querygen.source,
    };
    let queries = match source {
        QuerySource::Synthetic => {
            synthesize_queries(&corpus, &types, k, a.seed.unwrap_or(config.querygen.seed))?
        }
        QuerySource::Llm => {
            let qg = &config.querygen;
            let options = GenerateOptions {
                k_per_type: k,
                max_concurrency: qg.max_concurrency,
                system_prompt: qg.system_prompt.clone(),
                language: qg.language,
                decoding: config.eval.decoding.clone(),
            };
            let client = ChatCompletionsClient::new(config.endpoints.querygen.clone());
            let outcome = generate_queries_with(&corpus, &types, &options, &client)?;
            for f in &outcome.failures {
                warn!("no queries for {} / {}: {}", f.qa_id, f.query_type, f.kind);
            }
            outcome.queries
        }
    };
    write_queries(&a.out, &queries)?;
    println!("wrote {} queries to {}", queries.len(), a.out.display());
    Ok(())
}

fn mine(a: MineArgs, config: &PipelineConfig) -> Result<(), CliError> {
    let corpus = corpus_for(&a.corpus, config)?;
    let queries = read_queries(&a.queries)?;
    let seed = a.seed.unwrap_or(config.augment.seed);
    let triples = mine_triples(&queries, &corpus, a.n_neg.unwrap_or(config.augment.n_neg), seed)?;
    let (train_set, held_out) = match (a.holdout, &a.eval_out) {
        (Some(h), Some(eval_out)) => {
            let (t, e) = partition_triples(&triples, h, seed)?;
            write_eval_queries(eval_out, &e)?;
            (t, e.len())
        }
        _ => (triples, 0),
    };
    write_triples(&a.out, &train_set)?;
    println!("wrote {} triples ({} held out)", train_set.triples.len(), held_out);
    Ok(())
}

fn fresh_model(config: &PipelineConfig) -> Result<EmbeddingModel, CliError> {
    let m = &config.model;
    Ok(init_model(m.feat_dim, m.emb_dim, m.seed)?)
}

fn init(a: InitModelArgs, config: &PipelineConfig) -> Result<(), CliError> {
    let m = &config.model;
    let model = init_model(
        a.feat_dim.unwrap_or(m.feat_dim),
        a.emb_dim.unwrap_or(m.emb_dim),
        a.seed.unwrap_or(m.seed),
    )?;
    model.persist(&a.out)?;
    println!("model {} written to {}", model.fingerprint_hex(), a.out.display());
    Ok(())
}

fn train_cmd(a: TrainArgs, config: &PipelineConfig) -> Result<(), CliError> {
    let corpus = corpus_for(&a.corpus, config)?;
    let mut tc = config.train.clone();
    if let Some(v) = a.epochs {
        tc.epochs = v;
    }
    if let Some(v) = a.learning_rate {
        tc.learning_rate = v;
    }
    if let Some(v) = a.batch_size {
        tc.batch_size = v;
    }
    if let Some(v) = a.tau {
        tc.tau = v;
    }
    if let Some(v) = a.seed {
        tc.seed = v;
    }
    let triples = read_triples(&a.triples, corpus.name(), config.augment.seed)?;
    let model = match &a.model {
        Some(p) => EmbeddingModel::restore(p)?,
        None => fresh_model(config)?,
    };
    let (model, log) = train(model, &triples, &corpus, &tc)?;
    model.persist(&a.out)?;
    if let Some(path) = &a.log {
        log.write(path)?;
    }
    for e in &log.epochs {
        info!("epoch {} mean loss {:.6} grad norm {:.6}", e.epoch, e.mean_loss, e.grad_norm);
    }
    let first = log.epochs.first().map_or(f64::NAN, |e| e.mean_loss);
    let last = log.epochs.last().map_or(f64::NAN, |e| e.mean_loss);
    println!(
        "trained {} epochs: loss {first:.4} -> {last:.4}; model {} written to {}",
        log.epochs.len(),
        model.fingerprint_hex(),
        a.out.display()
    );
    Ok(())
}

fn index(a: IndexArgs, config: &PipelineConfig) -> Result<(), CliError> {
    let corpus = corpus_for(&a.corpus, config)?;
    let model = EmbeddingModel::restore(&a.model)?;
    let index = qfine::retriever::build_index(&model, &corpus)?;
    index.persist(&a.out)?;
    println!("indexed {} documents into {}", index.len(), a.out.display());
    Ok(())
}

/// Retrieval artifacts loaded from disk.
enum Loaded {
    Dense(VectorIndex, EmbeddingModel),
    Bm25(Bm25Index),
}

impl Loaded {
    fn open(a: &RetrieverArgs, corpus: &Corpus) -> Result<Self, CliError> {
        if a.bm25 {
            return Ok(Loaded::Bm25(Bm25Index::with_defaults(corpus)?));
        }
        match (&a.index, &a.model) {
            (Some(i), Some(m)) => Ok(Loaded::Dense(VectorIndex::restore(i)?, EmbeddingModel::restore(m)?)),
            _ => Err(CliError::Usage("--index and --model are required without --bm25".into())),
        }
    }

    fn with<R>(&self, f: impl FnOnce(&dyn Retriever) -> Result<R, CliError>) -> Result<R, CliError> {
        match self {
            Loaded::Dense(index, model) => f(&DenseRetriever::new(index, model)?),
            Loaded::Bm25(bm25) => f(bm25),
        }
    }
}

fn search(a: SearchArgs, config: &PipelineConfig) -> Result<(), CliError> {
    let corpus = corpus_for(&a.corpus, config)?;
    let loaded = Loaded::open(&a.retriever, &corpus)?;
    let ranked = loaded.with(|r| Ok(r.retrieve("", &a.query, a.k)?))?;
    if a.json {
        println!("{}", serde_json::to_string(&ranked)?);
        return Ok(());
    }
    if ranked.degenerate {
        println!("query has no features; nothing retrieved");
    }
    for (i, hit) in ranked.hits.iter().enumerate() {
        let text = corpus.get(&hit.doc_id).map_or("", |qa| qa.answer.as_str());
        println!("{:>2}. {:<24} {:.4}  {}", i + 1, hit.doc_id, hit.score, text);
    }
    Ok(())
}

fn k_set_or(raw: &[usize], config: &PipelineConfig) -> Vec<usize> {
    if raw.is_empty() {
        config.eval.k_set.clone()
    } else {
        raw.to_vec()
    }
}

fn eval_queries_for(path: Option<&PathBuf>, corpus: &Corpus) -> Result<Vec<EvalQuery>, CliError> {
    Ok(match path {
        Some(p) => read_eval_queries(p)?,
        None => original_question_queries(corpus),
    })
}

fn eval_retrieval(a: EvalRetrievalArgs, config: &PipelineConfig) -> Result<(), CliError> {
    let corpus = corpus_for(&a.corpus, config)?;
    let loaded = Loaded::open(&a.retriever, &corpus)?;
    let queries = eval_queries_for(a.eval_queries.as_ref(), &corpus)?;
    let k_set = k_set_or(&a.k_set, config);
    let report = loaded.with(|r| Ok(evaluate_retrieval(r, &queries, &k_set)?))?;
    print!("{}", report.table());
    if let Some(out) = &a.out {
        report.write_jsonl(out)?;
    }
    Ok(())
}

/// A prediction or reference line for `eval-generation`.
#[derive(Debug, Serialize, Deserialize)]
pub struct TextRecord {
    pub id: String,
    pub text: String,
}

fn read_texts(path: &Path) -> Result<BTreeMap<String, String>, CliError> {
    let records: Vec<(usize, TextRecord)> =
        jsonl::read_records(path).map_err(|e| CliError::Usage(e.to_string()))?;
    let mut out = BTreeMap::new();
    for (line, r) in records {
        if out.insert(r.id.clone(), r.text).is_some() {
            return Err(CliError::Usage(format!("{}:{line}: duplicate id {:?}", path.display(), r.id)));
        }
    }
    Ok(out)
}

fn eval_generation(a: EvalGenerationArgs, config: &PipelineConfig) -> Result<(), CliError> {
    let predictions = read_texts(&a.predictions)?;
    let references = read_texts(&a.references)?;
    let model = EmbeddingModel::restore(&a.model)?;
    let mut options = config.eval.metrics.clone();
    match a.rouge1_mode {
        Some(Rouge1Arg::Recall) => options.rouge1_mode = Rouge1Mode::Recall,
        Some(Rouge1Arg::F1) => options.rouge1_mode = Rouge1Mode::F1,
        None => {}
    }
    let report = evaluate_generation(&predictions, &references, &model, &options)?;
    print!("{}", report.table());
    if let Some(out) = &a.out {
        report.write_jsonl(out)?;
    }
    Ok(())
}

fn generator_kind(arg: Option<GeneratorArg>, config: &PipelineConfig) -> GeneratorKind {
    match arg {
        Some(GeneratorArg::Echo) => GeneratorKind::Echo,
        Some(GeneratorArg::Chat) => GeneratorKind::Chat,
        None => config.eval.generator,
    }
}

fn rag_eval(a: RagEvalArgs, config: &PipelineConfig) -> Result<(), CliError> {
    let corpus = corpus_for(&a.corpus, config)?;
    let index = VectorIndex::restore(&a.index)?;
    let model = EmbeddingModel::restore(&a.model)?;
    let retriever = DenseRetriever::new(&index, &model)?;
    let queries = eval_queries_for(a.eval_queries.as_ref(), &corpus)?;
    let mut cfg = config.clone();
    cfg.eval.generator = generator_kind(a.generator, config);
    let generator = generator_for(&cfg);
    let pipeline = RagPipeline {
        corpus: &corpus,
        retriever: &retriever,
        generator: generator.as_ref(),
        options: RagOptions {
            k: a.k.unwrap_or(config.eval.top_k),
            max_input_tokens: config.eval.max_input_tokens,
            decoding: config.eval.decoding.clone(),
        },
    };
    let report = evaluate_end2end(
        &pipeline,
        &queries,
        &k_set_or(&a.k_set, config),
        &model,
        &config.eval.metrics,
    )?;
    print!("{}", report.retrieval.table());
    print!("{}", report.generation.table());
    if let Some(dir) = &a.out_dir {
        report.retrieval.write_jsonl(&dir.join("retrieval_report.jsonl"))?;
        report.generation.write_jsonl(&dir.join("generation_report.jsonl"))?;
        jsonl::write_records(&dir.join("answers.jsonl"), &report.answers)
            .map_err(|e| CliError::Usage(e.to_string()))?;
    }
    Ok(())
}

fn diversity(a: DiversityArgs, config: &PipelineConfig) -> Result<(), CliError> {
    let corpus = corpus_for(&a.corpus, config)?;
    let queries = read_queries(&a.queries)?;
    let model = EmbeddingModel::restore(&a.model)?;
    let table = diversity_report(&queries, &corpus, &model)?;
    table.write_csv(&a.out)?;
    for (t, d) in &table.mean_by_type {
        println!("{t:<16} {d:.4}");
    }
    Ok(())
}

fn run(config: &PipelineConfig) -> Result<(), CliError> {
    let run = run_pipeline(config)?;
    if let Some(r) = &run.retrieval {
        print!("{}", r.table());
    }
    if let Some(g) = &run.generation {
        print!("{}", g.table());
    }
    let n: usize = run.manifest.stages.iter().map(|s| s.artifacts.len()).sum();
    println!(
        "{} stages, {n} artifacts under {}",
        run.manifest.stages.len(),
        config.paths.output_dir.display()
    );
    Ok(())
}

fn ablate(config: &PipelineConfig) -> Result<(), CliError> {
    let report = run_ablation(config)?;
    print!("{}", report.table());
    if report.passes() {
        println!("ablation passes");
        Ok(())
    } else {
        Err(CliError::AblationBelowThreshold {
            hit1: report.hit1_delta().unwrap_or(f64::NAN),
            mrr: report.mrr_delta(),
        })
    }
}
