use std::fs;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use ndarray::Array2;
use docnade::evaluation::{
    coherence_npmi, document_representations, evaluate_classification, glove_sum_representations,
    nearest_neighbors, perplexity_report, retrieval_precision_from_representations,
    topic_summaries, EvaluationReport,
};
use docnade::training::grid_search_lambda;
use docnade::{
    load_corpus, load_embedding_prior, train, Corpus, EmbeddingPrior, Error, Model, Vocabulary,
    VocabSource,
};

use crate::config::{self, RunConfig, Settings};
use crate::manifest::{sha256_file, write_file, RunManifest};
use crate::CliError;

type Result<T> = std::result::Result<T, CliError>;

const DEFAULT_FRACTIONS: &str = "0.0001,0.0005,0.001,0.002,0.005,0.01,0.02,0.05,0.1,0.2,0.5,1.0";

#[derive(Debug, Parser)]
#[command(name = "idne", version, about = "Neural autoregressive topic models")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model and write it with its vocabulary, history and manifest.
    Train(TrainArgs),
    /// Train one model per embedding weight and keep the best on validation.
    GridLambda(TrainArgs),
    /// Held-out perplexity.
    Ppl(PplArgs),
    /// Retrieval precision curve with test documents as queries.
    Ir(IrArgs),
    /// Top words of every hidden unit.
    Topics(TopicsArgs),
    /// Sliding-window NPMI coherence of the topics.
    Coherence(CoherenceArgs),
    /// Nearest words by cosine similarity of their weight columns.
    Neighbors(NeighborsArgs),
    /// Logistic-regression categorization over document representations.
    Classify(ClassifyArgs),
}

/// Flags share names with config-file keys and override them.
#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub val: PathBuf,
    /// Model file; the vocabulary, history and manifest are written beside it.
    #[arg(long)]
    pub out: PathBuf,
    /// key=value configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub force: bool,
    /// Hidden layer sizes, comma separated.
    #[arg(long)]
    pub hidden: Option<String>,
    /// full or tree.
    #[arg(long)]
    pub softmax: Option<String>,
    #[arg(long)]
    pub bidirectional: bool,
    /// sigmoid or tanh.
    #[arg(long)]
    pub activation: Option<String>,
    #[arg(long)]
    pub learning_rate: Option<String>,
    #[arg(long)]
    pub epochs: Option<String>,
    #[arg(long)]
    pub seed: Option<String>,
    /// Epochs without improvement before stopping; 0 disables.
    #[arg(long)]
    pub patience: Option<String>,
    #[arg(long)]
    pub lambda: Option<String>,
    #[arg(long)]
    pub lambda_grid: Option<String>,
    /// Word vectors, one `token v1 … vH` per line.
    #[arg(long)]
    pub embeddings: Option<String>,
    /// Model whose shared tensors initialize this one.
    #[arg(long)]
    pub init_from: Option<String>,
    #[arg(long)]
    pub vocab_size: Option<String>,
}

#[derive(Debug, Args)]
pub struct EvalTarget {
    /// Model file, with its `.vocab` file beside it.
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct PplArgs {
    #[command(flatten)]
    pub target: EvalTarget,
    #[arg(long)]
    pub corpus: PathBuf,
}

#[derive(Debug, Args)]
pub struct IrArgs {
    #[command(flatten)]
    pub target: EvalTarget,
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub test: PathBuf,
    #[arg(long, default_value = DEFAULT_FRACTIONS)]
    pub fractions: String,
    /// Use summed word vectors from this file instead of model representations.
    #[arg(long)]
    pub glove: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TopicsArgs {
    #[command(flatten)]
    pub target: EvalTarget,
    #[arg(long, default_value_t = 10)]
    pub n: usize,
}

#[derive(Debug, Args)]
pub struct CoherenceArgs {
    #[command(flatten)]
    pub target: EvalTarget,
    #[arg(long)]
    pub reference: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub n: usize,
    #[arg(long, default_value_t = 10)]
    pub window: usize,
}

#[derive(Debug, Args)]
pub struct NeighborsArgs {
    #[command(flatten)]
    pub target: EvalTarget,
    #[arg(long = "word", required = true)]
    pub words: Vec<String>,
    #[arg(long, default_value_t = 10)]
    pub n: usize,
}

#[derive(Debug, Args)]
pub struct ClassifyArgs {
    #[command(flatten)]
    pub target: EvalTarget,
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub test: PathBuf,
    #[arg(long, default_value_t = 1e-3)]
    pub l2: f64,
    #[arg(long)]
    pub glove: Option<PathBuf>,
}

pub fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(a) => train_command(&a, false),
        Command::GridLambda(a) => train_command(&a, true),
        Command::Ppl(a) => ppl(&a),
        Command::Ir(a) => ir(&a),
        Command::Topics(a) => topics(&a),
        Command::Coherence(a) => coherence(&a),
        Command::Neighbors(a) => neighbors(&a),
        Command::Classify(a) => classify(&a),
    }
}

/// `path` with `suffix` appended to its file name.
pub fn sidecar(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    s.into()
}

fn refuse_overwrite(paths: &[&Path], force: bool) -> Result<()> {
    if force {
        return Ok(());
    }
    match paths.iter().find(|p| p.exists()) {
        Some(p) => Err(CliError::Usage(format!(
            "{} already exists; pass --force to overwrite",
            p.display()
        ))),
        None => Ok(()),
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn json(value: &impl serde::Serialize) -> String {
    serde_json::to_string_pretty(value).expect("report serializes") + "\n"
}

impl TrainArgs {
    fn settings(&self) -> Result<Settings> {
        let mut settings = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
                config::parse_settings(&text)?
            }
            None => Settings::new(),
        };
        let flags = [
            ("hidden", &self.hidden),
            ("softmax", &self.softmax),
            ("activation", &self.activation),
            ("learning_rate", &self.learning_rate),
            ("epochs", &self.epochs),
            ("seed", &self.seed),
            ("patience", &self.patience),
            ("lambda", &self.lambda),
            ("lambda_grid", &self.lambda_grid),
            ("embeddings", &self.embeddings),
            ("init_from", &self.init_from),
            ("vocab_size", &self.vocab_size),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                settings.insert(key.to_string(), v.clone());
            }
        }
        if self.bidirectional {
            settings.insert("bidirectional".into(), "true".into());
        }
        Ok(settings)
    }
}

fn train_command(args: &TrainArgs, grid: bool) -> Result<()> {
    let cfg: RunConfig = config::resolve(&args.settings()?)?;
    let command = if grid { "grid-lambda" } else { "train" };
    match (&cfg.embeddings, cfg.lambda, grid) {
        (None, _, true) => return Err(CliError::Usage("grid-lambda requires embeddings".into())),
        (Some(_), Some(_), true) => log::warn!("lambda is ignored by grid-lambda; the grid decides"),
        (Some(_), None, false) => {
            return Err(CliError::Usage(
                "embeddings requires lambda (or use grid-lambda)".into(),
            ))
        }
        _ => {}
    }

    let model_path = &args.out;
    let vocab_path = sidecar(model_path, ".vocab");
    let history_path = sidecar(model_path, ".history.csv");
    let manifest_path = sidecar(model_path, ".manifest.json");
    let grid_path = sidecar(model_path, ".grid.csv");
    let mut outputs = vec![model_path.as_path(), &vocab_path, &history_path, &manifest_path];
    if grid {
        outputs.push(&grid_path);
    }
    refuse_overwrite(&outputs, args.force)?;

    let train_corpus = load_corpus(&args.train, VocabSource::Build { max_size: cfg.vocab_size })?;
    let val = load_corpus(&args.val, VocabSource::Existing(&train_corpus.vocab))?;
    log::info!(
        "train: {} documents, vocabulary {}; validation: {} documents",
        train_corpus.len(),
        train_corpus.vocab.len(),
        val.len()
    );
    let prior = match &cfg.embeddings {
        Some(path) => Some(load_embedding_prior(
            path,
            &train_corpus.vocab,
            cfg.train.arch.hidden[0],
            cfg.lambda.unwrap_or(0.0),
        )?),
        None => None,
    };

    let mut manifest = RunManifest::new(command);
    let outcome = if grid {
        let result = grid_search_lambda(&train_corpus, &val, &cfg.train, prior.as_ref().expect("checked"))?;
        let mut csv = String::from("lambda,val_ppl\n");
        for row in &result.table {
            csv.push_str(&format!("{:?},{:?}\n", row.lambda, row.val_ppl));
        }
        write_file(&grid_path, csv)?;
        manifest.output("grid", &grid_path).setting("best_lambda", format!("{:?}", result.best_lambda));
        log::info!("best lambda {}", result.best_lambda);
        result.outcome
    } else {
        train(&train_corpus, &val, &cfg.train, prior)?
    };

    outcome.model.save(model_path)?;
    train_corpus.vocab.save(&vocab_path)?;
    write_file(&history_path, outcome.history_csv())?;
    log::info!(
        "best epoch {} with validation perplexity {:.4}",
        outcome.best_epoch,
        outcome.best_val_ppl()
    );

    manifest.config = args.config.clone();
    manifest.seed = Some(cfg.train.seed);
    manifest.settings.extend(cfg.settings());
    manifest
        .input("train", &args.train)
        .input("val", &args.val)
        .output("model", model_path)
        .output("vocab", &vocab_path)
        .output("history", &history_path);
    if let Some(p) = &cfg.embeddings {
        manifest.input("embeddings", p);
    }
    if let Some(p) = &cfg.train.init_from {
        manifest.input("init_from", p);
    }
    manifest.model_sha256 = Some(sha256_file(model_path)?);
    manifest.write(&manifest_path)
}

/// Loads a model and the vocabulary stored beside it.
pub fn load_model(path: &Path) -> Result<(Model, Vocabulary)> {
    let model = Model::load(path)?;
    let vocab = Vocabulary::load(sidecar(path, ".vocab"))?;
    if vocab.len() != model.vocab_size() {
        return Err(Error::Dimension(format!(
            "vocabulary file has {} tokens but the model expects {}",
            vocab.len(),
            model.vocab_size()
        ))
        .into());
    }
    Ok((model, vocab))
}

/// Loaded model plus the bookkeeping every evaluation command shares.
struct EvalRun {
    model: Model,
    vocab: Vocabulary,
    manifest: RunManifest,
    manifest_path: PathBuf,
    dir: PathBuf,
}

impl EvalRun {
    /// Checks the output files named in `files` before any work is done.
    fn start(command: &str, target: &EvalTarget, files: &[&str]) -> Result<Self> {
        let dir = target.out_dir.clone();
        let manifest_path = dir.join(format!("{command}.manifest.json"));
        let mut paths: Vec<PathBuf> = files.iter().map(|f| dir.join(f)).collect();
        paths.push(manifest_path.clone());
        refuse_overwrite(&paths.iter().map(PathBuf::as_path).collect::<Vec<_>>(), target.force)?;
        fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
        let (model, vocab) = load_model(&target.model)?;
        let mut manifest = RunManifest::new(command);
        manifest.input("model", &target.model);
        manifest.model_sha256 = Some(sha256_file(&target.model)?);
        Ok(Self {
            model,
            vocab,
            manifest,
            manifest_path,
            dir,
        })
    }

    fn corpus(&mut self, name: &str, path: &Path) -> Result<Corpus> {
        self.manifest.input(name, path);
        Ok(load_corpus(path, VocabSource::Existing(&self.vocab))?)
    }

    fn write(&mut self, name: &str, file: &str, contents: impl AsRef<[u8]>) -> Result<()> {
        let path = self.dir.join(file);
        write_file(&path, contents)?;
        self.manifest.output(name, &path);
        Ok(())
    }

    fn finish(self) -> Result<()> {
        self.manifest.write(&self.manifest_path)
    }
}

fn ppl(args: &PplArgs) -> Result<()> {
    let mut run = EvalRun::start("ppl", &args.target, &["ppl.json"])?;
    let corpus = run.corpus("corpus", &args.corpus)?;
    let report = perplexity_report(&run.model, &corpus)?;
    if let Some(b) = report.backward {
        log::info!("forward {:.6}, backward {b:.6}", report.forward);
    }
    println!("{:?}", report.ppl);
    let summary = EvaluationReport {
        perplexity: Some(report),
        ..Default::default()
    };
    run.write("summary", "ppl.json", json(&summary))?;
    run.finish()
}

/// Word-vector file dimension, read from its first non-empty line.
fn embedding_dimension(path: &Path) -> Result<usize> {
    let file = fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    for line in BufReader::new(file).lines() {
        let line = line.map_err(|e| CliError::io(path, e))?;
        let fields = line.split_whitespace().count();
        if fields > 0 {
            return Ok(fields - 1);
        }
    }
    Err(Error::Format(format!("{}: no word vectors", path.display())).into())
}

fn glove_prior(path: &Path, vocab: &Vocabulary) -> Result<EmbeddingPrior> {
    Ok(load_embedding_prior(path, vocab, embedding_dimension(path)?, 1.0)?)
}

/// Train and test representations from the model, or from summed word vectors.
fn representations(
    run: &mut EvalRun,
    train_corpus: &Corpus,
    test: &Corpus,
    glove: Option<&Path>,
) -> Result<(Array2<f64>, Array2<f64>)> {
    match glove {
        Some(path) => {
            run.manifest.input("glove", path).setting("representation", "glove-sum");
            let prior = glove_prior(path, &run.vocab)?;
            Ok((
                glove_sum_representations(train_corpus, &prior)?,
                glove_sum_representations(test, &prior)?,
            ))
        }
        None => {
            run.manifest.setting("representation", "model");
            Ok((
                document_representations(&run.model, train_corpus)?,
                document_representations(&run.model, test)?,
            ))
        }
    }
}

fn parse_fractions(text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|f| {
            f.trim()
                .parse::<f64>()
                .map_err(|_| CliError::Usage(format!("invalid fraction {f:?}")))
        })
        .collect()
}

fn ir(args: &IrArgs) -> Result<()> {
    let fractions = parse_fractions(&args.fractions)?;
    let mut run = EvalRun::start("ir", &args.target, &["ir.csv", "ir.json"])?;
    run.manifest.setting("fractions", &args.fractions);
    let train_corpus = run.corpus("train", &args.train)?;
    let test = run.corpus("test", &args.test)?;
    let (train_reps, test_reps) = representations(&mut run, &train_corpus, &test, args.glove.as_deref())?;
    let curve = retrieval_precision_from_representations(
        train_reps.view(),
        &train_corpus.labels(),
        test_reps.view(),
        &test.labels(),
        &fractions,
    )?;
    let mut csv = String::from("fraction,precision\n");
    for p in &curve {
        csv.push_str(&format!("{:?},{:?}\n", p.fraction, p.precision));
        println!("{}\t{:.6}", p.fraction, p.precision);
    }
    run.write("curve", "ir.csv", csv)?;
    let summary = EvaluationReport {
        ir_curve: curve,
        ..Default::default()
    };
    run.write("summary", "ir.json", json(&summary))?;
    run.finish()
}

fn topics(args: &TopicsArgs) -> Result<()> {
    let mut run = EvalRun::start("topics", &args.target, &["topics.csv"])?;
    run.manifest.setting("n", args.n);
    let summaries = topic_summaries(&run.model, &run.vocab, args.n)?;
    let mut csv = String::from("topic,words\n");
    for t in &summaries {
        let words = t.top_words.join(" ");
        println!("{}\t{words}", t.topic);
        csv.push_str(&format!("{},{}\n", t.topic, csv_field(&words)));
    }
    run.write("topics", "topics.csv", csv)?;
    run.finish()
}

fn coherence(args: &CoherenceArgs) -> Result<()> {
    let mut run = EvalRun::start("coherence", &args.target, &["coherence.csv", "coherence.json"])?;
    run.manifest.setting("n", args.n).setting("window", args.window);
    let reference = run.corpus("reference", &args.reference)?;
    let topics: Vec<Vec<String>> = topic_summaries(&run.model, &run.vocab, args.n)?
        .into_iter()
        .map(|t| t.top_words)
        .collect();
    let report = coherence_npmi(&topics, &reference, args.window)?;
    let mut csv = String::from("topic,score\n");
    for t in &report.topics {
        let score = t.score.map(|s| format!("{s:?}")).unwrap_or_default();
        csv.push_str(&format!("{},{score}\n", t.topic));
    }
    match report.mean {
        Some(m) => println!("mean NPMI {m:.6} over {} windows", report.windows),
        None => println!("no topic could be scored"),
    }
    run.write("scores", "coherence.csv", csv)?;
    let summary = EvaluationReport {
        coherence: Some(report),
        ..Default::default()
    };
    run.write("summary", "coherence.json", json(&summary))?;
    run.finish()
}

fn neighbors(args: &NeighborsArgs) -> Result<()> {
    let mut run = EvalRun::start("neighbors", &args.target, &["neighbors.csv"])?;
    run.manifest.setting("n", args.n).setting("words", args.words.join(" "));
    let mut csv = String::from("word,neighbor,similarity\n");
    for word in &args.words {
        let found = nearest_neighbors(&run.model, &run.vocab, word, args.n)?;
        let listed: Vec<String> = found.iter().map(|(w, s)| format!("{w} ({s:.3})")).collect();
        println!("{word}\t{}", listed.join(", "));
        for (w, s) in found {
            csv.push_str(&format!("{},{},{s:?}\n", csv_field(word), csv_field(&w)));
        }
    }
    run.write("neighbors", "neighbors.csv", csv)?;
    run.finish()
}

fn classify(args: &ClassifyArgs) -> Result<()> {
    let mut run = EvalRun::start("classify", &args.target, &["classify.json"])?;
    run.manifest.setting("l2", format!("{:?}", args.l2));
    let train_corpus = run.corpus("train", &args.train)?;
    let test = run.corpus("test", &args.test)?;
    let (train_reps, test_reps) = representations(&mut run, &train_corpus, &test, args.glove.as_deref())?;
    let report = evaluate_classification(
        train_reps.view(),
        &train_corpus.labels(),
        test_reps.view(),
        &test.labels(),
        args.l2,
    )?;
    println!("macro-F1 {:.6}\taccuracy {:.6}", report.macro_f1, report.accuracy);
    if !report.converged {
        log::warn!("classifier stopped after {} iterations without converging", report.iterations);
    }
    let summary = EvaluationReport {
        classification: Some(report),
        ..Default::default()
    };
    run.write("summary", "classify.json", json(&summary))?;
    run.finish()
}
