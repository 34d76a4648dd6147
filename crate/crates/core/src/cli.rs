//! The `fabula` command line: argument definitions and one function per
//! subcommand. Every run writes its tables into the output directory along
//! with `manifest.json` (resolved configuration, input and output digests).

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs;
use std::io::BufRead;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::corpus::{self, AnalogyDimension, HedonometerLexicon, LoadMode, PairAnnotation, Story};
use crate::frames::{self, FrameSeq};
use crate::learn::{self, PairFeatures, TrainConfig};
use crate::metrics::{self, Cell};
use crate::pairing::{self, PairingMethod};
use crate::resources::{ResourceInputs, StoryResources};
use crate::seed;
use crate::shapes::{self, ShapeParams};
use crate::textsim::{provider_from_spec, EmbeddingProvider};

#[derive(Debug, Parser, Serialize)]
#[command(name = "fabula", version, about = "Narrative analogy toolkit for fable corpora", args_override_self = true)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct GlobalArgs {
    /// Story corpus (JSONL).
    #[arg(long, global = true)]
    pub corpus: Option<PathBuf>,
    /// Frame sequences (JSONL).
    #[arg(long, global = true)]
    pub frames: Option<PathBuf>,
    /// Pair annotations (JSONL).
    #[arg(long, global = true)]
    pub annotations: Option<PathBuf>,
    /// Hedonometer lexicon (TSV).
    #[arg(long, global = true)]
    pub lexicon: Option<PathBuf>,
    /// Word vectors: a word2vec text file or `hash:<dim>:<seed>`.
    #[arg(long, global = true)]
    pub embeddings: Option<String>,
    /// Document vectors keyed by story id: a file or `hash:<dim>:<seed>`.
    #[arg(long, global = true)]
    pub doc_embeddings: Option<String>,
    /// Words to drop before similarity computations, one per line.
    #[arg(long, global = true)]
    pub stoplist: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, global = true, env = "FABULA_OUT", default_value = "fabula-out")]
    pub out: PathBuf,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    /// Comma-separated tables with a header row.
    Csv,
    /// One JSON object per line.
    Records,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct TrainArgs {
    #[arg(long, default_value_t = 0.1)]
    pub learning_rate: f64,
    #[arg(long, default_value_t = 200)]
    pub epochs: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub l2: f64,
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f64,
}

impl TrainArgs {
    fn config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            epochs: self.epochs,
            l2: self.l2,
            seed,
            threshold: self.threshold,
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ShapeArgs {
    #[arg(long, default_value_t = 30)]
    pub window: usize,
    #[arg(long, default_value_t = 5.4)]
    pub neutral: f64,
    #[arg(long, default_value_t = 0.2)]
    pub band: f64,
}

impl ShapeArgs {
    fn params(&self) -> ShapeParams {
        ShapeParams {
            window: self.window,
            neutral: self.neutral,
            band: self.band,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClusterMode {
    MoralEmbedding,
    FrameCounts,
    FrameCountsTop15,
}

#[derive(Debug, Subcommand, Serialize)]
pub enum Command {
    /// Moral-tag distribution of the corpus.
    Stats,
    /// Hedonometric arc profile of every story.
    Shapes {
        #[command(flatten)]
        shape: ShapeArgs,
    },
    /// Generate or score candidate story pairs.
    Pairs {
        #[command(subcommand)]
        action: PairsCommand,
    },
    /// One-vs-all moral-tag classifiers.
    Cluster {
        #[arg(long, value_enum, default_value_t = ClusterMode::MoralEmbedding)]
        mode: ClusterMode,
        #[arg(long, default_value_t = 100)]
        repeats: usize,
        #[command(flatten)]
        train: TrainArgs,
    },
    /// Per-dimension analogy classifiers over pair features.
    Analogy {
        #[command(flatten)]
        train: TrainArgs,
        #[command(flatten)]
        shape: ShapeArgs,
    },
    /// Train on same-tag source pairs, evaluate on annotated target pairs.
    Transfer {
        /// Source corpus; defaults to --corpus.
        #[arg(long)]
        source_corpus: Option<PathBuf>,
        #[arg(long, default_value_t = 544)]
        target_size: usize,
        /// Words kept from the middle of each source story.
        #[arg(long, default_value_t = 500)]
        middle_window: usize,
        #[command(flatten)]
        train: TrainArgs,
        #[command(flatten)]
        shape: ShapeArgs,
    },
    /// Cohen kappa for every rater pair and dimension.
    Iaa {
        /// Ratings CSV: rater_id,pair_id,dimension,label.
        #[arg(long)]
        ratings: PathBuf,
    },
    /// Load inputs leniently and report every annotation violation.
    Validate,
}

#[derive(Debug, Subcommand, Serialize)]
pub enum PairsCommand {
    Generate {
        #[arg(long, value_delimiter = ',', default_value = "lexical,semantic,frame,random")]
        methods: Vec<String>,
        #[arg(long, default_value_t = 1)]
        top_k: usize,
        #[arg(long)]
        dedup: bool,
        #[command(flatten)]
        shape: ShapeArgs,
    },
    Score {
        /// Pair file written by `pairs generate`.
        #[arg(long)]
        pairs: PathBuf,
        #[command(flatten)]
        shape: ShapeArgs,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Stats => "stats",
            Command::Shapes { .. } => "shapes",
            Command::Pairs {
                action: PairsCommand::Generate { .. },
            } => "pairs generate",
            Command::Pairs {
                action: PairsCommand::Score { .. },
            } => "pairs score",
            Command::Cluster { .. } => "cluster",
            Command::Analogy { .. } => "analogy",
            Command::Transfer { .. } => "transfer",
            Command::Iaa { .. } => "iaa",
            Command::Validate => "validate",
        }
    }
}

/// What a run produced, for the binary to print.
#[derive(Debug, Clone, Default)]
pub struct RunSummary {
    pub out_dir: PathBuf,
    pub outputs: Vec<String>,
    pub warnings: Vec<String>,
    pub lines: Vec<String>,
}

/// A table with named columns, written as CSV or JSON records.
struct Table {
    columns: Vec<String>,
    rows: Vec<Vec<Value>>,
}

impl Table {
    fn new(columns: &[&str]) -> Self {
        Table {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    fn push(&mut self, row: Vec<Value>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    fn render(&self, format: Format) -> String {
        let mut out = String::new();
        match format {
            Format::Csv => {
                out.push_str(&self.columns.iter().map(|c| csv_field(c)).collect::<Vec<_>>().join(","));
                out.push('\n');
                for row in &self.rows {
                    out.push_str(&row.iter().map(csv_value).collect::<Vec<_>>().join(","));
                    out.push('\n');
                }
            }
            Format::Records => {
                for row in &self.rows {
                    let obj: serde_json::Map<String, Value> =
                        self.columns.iter().cloned().zip(row.iter().cloned()).collect();
                    out.push_str(&Value::Object(obj).to_string());
                    out.push('\n');
                }
            }
        }
        out
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn csv_value(v: &Value) -> String {
    match v {
        Value::Null => String::new(),
        Value::String(s) => csv_field(s),
        Value::Number(n) if n.is_f64() => format!("{:.6}", n.as_f64().unwrap_or(f64::NAN)),
        other => csv_field(&other.to_string()),
    }
}

fn num(x: f64) -> Value {
    serde_json::Number::from_f64(x).map_or(Value::Null, Value::Number)
}

fn opt_num(x: Option<f64>) -> Value {
    x.map_or(Value::Null, num)
}

fn cell_value(c: &Cell) -> Value {
    opt_num(c.value())
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// File names under the output directory must not escape it.
fn safe_name(id: &str) -> String {
    id.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

struct Run<'a> {
    global: &'a GlobalArgs,
    inputs: BTreeMap<String, Value>,
    outputs: BTreeMap<String, String>,
    warnings: Vec<String>,
    lines: Vec<String>,
}

impl<'a> Run<'a> {
    fn new(global: &'a GlobalArgs) -> Result<Self> {
        fs::create_dir_all(&global.out).with_context(|| format!("creating output directory {}", global.out.display()))?;
        Ok(Run {
            global,
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
            warnings: Vec::new(),
            lines: Vec::new(),
        })
    }

    fn ext(&self) -> &'static str {
        match self.global.format {
            Format::Csv => "csv",
            Format::Records => "jsonl",
        }
    }

    fn record_input(&mut self, role: &str, path: &Path) -> Result<()> {
        let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        self.inputs.insert(
            role.to_string(),
            json!({ "path": path.display().to_string(), "sha256": sha256_hex(&bytes) }),
        );
        Ok(())
    }

    fn write_file(&mut self, name: &str, contents: &str) -> Result<()> {
        let path = self.global.out.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
        self.outputs.insert(name.to_string(), sha256_hex(contents.as_bytes()));
        Ok(())
    }

    fn write_table(&mut self, stem: &str, table: &Table) -> Result<()> {
        let name = format!("{stem}.{}", self.ext());
        let text = table.render(self.global.format);
        self.write_file(&name, &text)
    }

    fn warn(&mut self, message: String) {
        self.warnings.push(message);
    }

    fn corpus_path(&self) -> Result<&'a Path> {
        self.global.corpus.as_deref().context("this command needs --corpus")
    }

    fn load_corpus(&mut self) -> Result<Vec<Story>> {
        let path = self.corpus_path()?;
        self.record_input("corpus", path)?;
        corpus::load_corpus(path).with_context(|| format!("loading corpus {}", path.display()))
    }

    fn load_frames(&mut self) -> Result<Option<Vec<FrameSeq>>> {
        let Some(path) = self.global.frames.as_deref() else {
            return Ok(None);
        };
        self.record_input("frames", path)?;
        frames::load_frames(path)
            .with_context(|| format!("loading frames {}", path.display()))
            .map(Some)
    }

    fn load_lexicon(&mut self) -> Result<Option<HedonometerLexicon>> {
        let Some(path) = self.global.lexicon.as_deref() else {
            return Ok(None);
        };
        self.record_input("lexicon", path)?;
        corpus::load_lexicon(path)
            .with_context(|| format!("loading lexicon {}", path.display()))
            .map(Some)
    }

    fn load_annotations(&mut self, stories: &[Story], mode: LoadMode) -> Result<Option<Vec<PairAnnotation>>> {
        let Some(path) = self.global.annotations.as_deref() else {
            return Ok(None);
        };
        self.record_input("annotations", path)?;
        corpus::load_annotations(path, stories, mode)
            .with_context(|| format!("loading annotations {}", path.display()))
            .map(Some)
    }

    fn load_provider(&mut self, role: &str, spec: Option<&str>) -> Result<Option<Box<dyn EmbeddingProvider>>> {
        let Some(spec) = spec else {
            return Ok(None);
        };
        if !spec.starts_with("hash:") {
            self.record_input(role, Path::new(spec))?;
        }
        let provider = provider_from_spec(spec).with_context(|| format!("loading {role} '{spec}'"))?;
        if provider.is_synthetic() {
            self.warn(format!("{role}: synthetic provider {}", provider.describe()));
        }
        Ok(Some(provider))
    }

    fn load_stoplist(&mut self) -> Result<Option<HashSet<String>>> {
        let Some(path) = self.global.stoplist.as_deref() else {
            return Ok(None);
        };
        self.record_input("stoplist", path)?;
        let file = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
        let mut words = HashSet::new();
        for line in std::io::BufReader::new(file).lines() {
            let line = line?;
            let w = line.trim();
            if !w.is_empty() && !w.starts_with('#') {
                words.insert(w.to_lowercase());
            }
        }
        Ok(Some(words))
    }

    /// Loads every optional resource given on the command line and derives
    /// per-story data for `stories`.
    fn resources(&mut self, stories: &[Story], shape: ShapeParams) -> Result<StoryResources> {
        let words = self.load_provider("embeddings", self.global.embeddings.as_deref())?;
        let docs = self.load_provider("doc_embeddings", self.global.doc_embeddings.as_deref())?;
        let frames = self.load_frames()?;
        let lexicon = self.load_lexicon()?;
        let stoplist = self.load_stoplist()?;
        Ok(StoryResources::build(
            stories,
            &ResourceInputs {
                words: words.as_deref(),
                documents: docs.as_deref(),
                morals: None,
                frames: frames.as_deref(),
                lexicon: lexicon.as_ref(),
                shape_params: shape,
                stoplist: stoplist.as_ref(),
            },
        ))
    }

    fn finish(self, command: &str, config: Value) -> Result<RunSummary> {
        let manifest = json!({
            "tool": "fabula",
            "version": env!("CARGO_PKG_VERSION"),
            "command": command,
            "config": config,
            "inputs": self.inputs,
            "outputs": self.outputs,
            "warnings": self.warnings,
            "created_unix": SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
        });
        let path = self.global.out.join("manifest.json");
        fs::write(&path, serde_json::to_string_pretty(&manifest)? + "\n")
            .with_context(|| format!("writing {}", path.display()))?;
        let mut outputs: Vec<String> = self.outputs.into_keys().collect();
        outputs.push("manifest.json".into());
        Ok(RunSummary {
            out_dir: self.global.out.clone(),
            outputs,
            warnings: self.warnings,
            lines: self.lines,
        })
    }
}

/// Runs one parsed command line.
pub fn run(cli: &Cli) -> Result<RunSummary> {
    let mut r = Run::new(&cli.global)?;
    match &cli.command {
        Command::Stats => cmd_stats(&mut r)?,
        Command::Shapes { shape } => cmd_shapes(&mut r, shape.params())?,
        Command::Pairs { action } => match action {
            PairsCommand::Generate {
                methods,
                top_k,
                dedup,
                shape,
            } => cmd_pairs_generate(&mut r, methods, *top_k, *dedup, shape.params())?,
            PairsCommand::Score { pairs, shape } => cmd_pairs_score(&mut r, pairs, shape.params())?,
        },
        Command::Cluster { mode, repeats, train } => cmd_cluster(&mut r, *mode, *repeats, train.config(cli.global.seed))?,
        Command::Analogy { train, shape } => cmd_analogy(&mut r, train.config(cli.global.seed), shape.params())?,
        Command::Transfer {
            source_corpus,
            target_size,
            middle_window,
            train,
            shape,
        } => cmd_transfer(
            &mut r,
            source_corpus.as_deref(),
            *target_size,
            *middle_window,
            train.config(cli.global.seed),
            shape.params(),
        )?,
        Command::Iaa { ratings } => cmd_iaa(&mut r, ratings)?,
        Command::Validate => cmd_validate(&mut r)?,
    }
    let config = serde_json::to_value(cli)?;
    r.finish(cli.command.name(), config)
}

fn cmd_stats(r: &mut Run) -> Result<()> {
    let stories = r.load_corpus()?;
    let dist = corpus::moral_distribution(&stories);
    let tagged = stories.iter().filter(|s| !s.tags.is_empty()).count();
    let mut table = Table::new(&["tag", "count", "share_of_tagged"]);
    for (tag, count) in &dist {
        let share = if tagged == 0 { 0.0 } else { *count as f64 / tagged as f64 };
        table.push(vec![json!(tag.as_str()), json!(count), num(share)]);
    }
    r.write_table("moral_distribution", &table)?;
    let mut summary = Table::new(&["statistic", "value"]);
    let with_moral = stories.iter().filter(|s| s.has_moral()).count();
    let rows = [
        ("stories", stories.len()),
        ("with_moral", with_moral),
        ("tagged", tagged),
        ("untagged", stories.len() - tagged),
    ];
    for (k, v) in rows {
        summary.push(vec![json!(k), json!(v)]);
    }
    r.write_table("stats", &summary)?;
    r.lines.push(format!("{} stories, {} tagged, {} untagged", stories.len(), tagged, stories.len() - tagged));
    Ok(())
}

fn cmd_shapes(r: &mut Run, params: ShapeParams) -> Result<()> {
    let stories = r.load_corpus()?;
    let lexicon = r.load_lexicon()?.context("shapes needs --lexicon")?;
    let mut profiles = Table::new(&[
        "story_id", "begin_avg", "mid_avg", "end_avg", "levels", "arc", "coverage",
    ]);
    let mut skipped = Table::new(&["story_id", "reason"]);
    let mut arcs: BTreeMap<String, usize> = BTreeMap::new();
    for story in &stories {
        match shapes::arc_profile(&story.id, &story.text, &lexicon, params) {
            Ok((p, series)) => {
                profiles.push(vec![
                    json!(p.story_id),
                    num(p.begin_avg),
                    num(p.mid_avg),
                    num(p.end_avg),
                    json!(shapes::levels_string(&p.levels)),
                    json!(p.arc.to_string()),
                    num(p.coverage),
                ]);
                *arcs.entry(p.arc.to_string()).or_default() += 1;
                let mut t = Table::new(&["index", "value"]);
                for (i, v) in series.values.iter().enumerate() {
                    t.push(vec![json!(i), num(*v)]);
                }
                r.write_table(&format!("series/{}", safe_name(&story.id)), &t)?;
            }
            Err(shapes::ShapeError::NoScoredTokens) | Err(shapes::ShapeError::EmptySeries) => {
                skipped.push(vec![json!(story.id), json!("no lexicon-scored tokens")]);
            }
            Err(e) => return Err(e).with_context(|| format!("story '{}'", story.id)),
        }
    }
    if !skipped.rows.is_empty() {
        r.warn(format!("{} stories skipped without scored tokens", skipped.rows.len()));
    }
    let mut counts = Table::new(&["arc", "count"]);
    for (arc, n) in &arcs {
        counts.push(vec![json!(arc), json!(n)]);
    }
    r.write_table("arcs", &profiles)?;
    r.write_table("arc_counts", &counts)?;
    r.write_table("shapes_skipped", &skipped)?;
    r.lines.push(format!("{} profiles, {} skipped", profiles.rows.len(), skipped.rows.len()));
    Ok(())
}

fn parse_methods(methods: &[String]) -> Result<Vec<PairingMethod>> {
    let mut out: Vec<PairingMethod> = Vec::new();
    for m in methods {
        let m: PairingMethod = m.parse()?;
        if !out.contains(&m) {
            out.push(m);
        }
    }
    if out.is_empty() {
        bail!("no pairing methods given");
    }
    Ok(out)
}

fn cmd_pairs_generate(r: &mut Run, methods: &[String], top_k: usize, dedup: bool, shape: ShapeParams) -> Result<()> {
    let methods = parse_methods(methods)?;
    if top_k == 0 {
        bail!("--top-k must be at least 1");
    }
    let needs = [
        (PairingMethod::Lexical, r.global.embeddings.is_some(), "--embeddings"),
        (PairingMethod::Semantic, r.global.doc_embeddings.is_some(), "--doc-embeddings"),
        (PairingMethod::Frame, r.global.frames.is_some(), "--frames"),
        (PairingMethod::Shape, r.global.lexicon.is_some(), "--lexicon"),
    ];
    for (m, present, flag) in needs {
        if methods.contains(&m) && !present {
            bail!("{m} pairing needs {flag}");
        }
    }
    let stories = r.load_corpus()?;
    let res = r.resources(&stories, shape)?;
    let mut set = pairing::generate_pairs_k(&res, &methods, top_k, r.global.seed)?;
    if dedup {
        let before = set.pairs.len();
        set = pairing::dedup(&set);
        r.lines.push(format!("dedup removed {} pairs", before - set.pairs.len()));
    }
    let mut buf = Vec::new();
    match r.global.format {
        Format::Csv => pairing::write_pairs_csv(&mut buf, &set)?,
        Format::Records => pairing::write_pairs_records(&mut buf, &set)?,
    }
    let name = format!("pairs.{}", r.ext());
    r.write_file(&name, &String::from_utf8(buf)?)?;
    r.lines.push(format!("{} pairs from {} stories", set.pairs.len(), stories.len()));
    Ok(())
}

fn cmd_pairs_score(r: &mut Run, pairs_path: &Path, shape: ShapeParams) -> Result<()> {
    let stories = r.load_corpus()?;
    let annotations = r
        .load_annotations(&stories, LoadMode::Strict)?
        .context("pairs score needs --annotations")?;
    r.record_input("pairs", pairs_path)?;
    let file = fs::File::open(pairs_path).with_context(|| format!("opening {}", pairs_path.display()))?;
    let set = pairing::parse_pairs(std::io::BufReader::new(file))?;
    let lexicon = r.load_lexicon()?;
    let res = lexicon.as_ref().map(|lex| {
        StoryResources::build(
            &stories,
            &ResourceInputs {
                lexicon: Some(lex),
                shape_params: shape,
                ..Default::default()
            },
        )
    });
    let report = pairing::score_methods(&set, &annotations, res.as_ref())?;
    let mut columns = vec!["row".to_string()];
    columns.extend(report.methods.iter().map(|m| m.method.to_string()));
    let cols: Vec<&str> = columns.iter().map(String::as_str).collect();
    let mut table = Table::new(&cols);
    let mut row = |label: &str, f: &dyn Fn(&pairing::MethodScore) -> Value| {
        let mut cells = vec![json!(label)];
        cells.extend(report.methods.iter().map(f));
        table.push(cells);
    };
    row("annotated_pairs", &|m| json!(m.annotated_pairs));
    for d in AnalogyDimension::ALL {
        row(d.as_str(), &|m| num(m.dimension_rates[d.index()].1));
    }
    row("method_average", &|m| num(m.method_average));
    row("SSS (interpreted as story-shape agreement)", &|m| opt_num(m.shape_agreement_rate));
    r.write_table("method_scores", &table)?;
    if !report.unmatched.is_empty() {
        r.warn(format!(
            "{} annotated pairs match no generated pair: {}",
            report.unmatched.len(),
            report.unmatched.join(" ")
        ));
    }
    for m in &report.methods {
        r.lines.push(format!("{}: {} pairs, average {:.2}", m.method, m.annotated_pairs, m.method_average));
    }
    Ok(())
}

fn cmd_cluster(r: &mut Run, mode: ClusterMode, repeats: usize, config: TrainConfig) -> Result<()> {
    let stories = r.load_corpus()?;
    let tagged: Vec<&Story> = stories.iter().filter(|s| !s.tags.is_empty()).collect();
    let (x, rows): (learn::FeatureMatrix, Vec<&Story>) = match mode {
        ClusterMode::MoralEmbedding => {
            if r.global.embeddings.is_none() {
                bail!("moral-embedding mode needs --embeddings");
            }
            let words = r.load_provider("embeddings", r.global.embeddings.as_deref())?;
            let stoplist = r.load_stoplist()?;
            let res = StoryResources::build(
                &stories,
                &ResourceInputs {
                    words: words.as_deref(),
                    stoplist: stoplist.as_ref(),
                    ..Default::default()
                },
            );
            let rows: Vec<&Story> = tagged.iter().copied().filter(|s| res.moral.contains_key(&s.id)).collect();
            if rows.len() < tagged.len() {
                r.warn(format!("{} tagged stories lack a moral vector", tagged.len() - rows.len()));
            }
            let vecs: Vec<Vec<f64>> = rows.iter().map(|s| res.moral[&s.id].clone()).collect();
            let mut x = learn::FeatureMatrix::from_rows(&vecs)?;
            x.row_ids = rows.iter().map(|s| s.id.clone()).collect();
            (x, rows)
        }
        ClusterMode::FrameCounts | ClusterMode::FrameCountsTop15 => {
            let frames = r
                .load_frames()?
                .with_context(|| format!("{} mode needs --frames", mode.to_possible_value().map_or("frame".into(), |v| v.get_name().to_string())))?;
            let vocabulary = if mode == ClusterMode::FrameCountsTop15 {
                let owned: Vec<Story> = tagged.iter().map(|s| (*s).clone()).collect();
                let top = frames::top_k_frames_per_tag(&owned, &frames, 15)?;
                let mut t = Table::new(&["tag", "frames"]);
                for (tag, labels) in &top {
                    t.push(vec![json!(tag.as_str()), json!(labels.join(" "))]);
                }
                r.write_table("top_frames", &t)?;
                Some(top.into_values().flatten().collect::<BTreeSet<String>>())
            } else {
                None
            };
            let x = learn::frame_count_matrix(&tagged, &frames, vocabulary.as_ref())?;
            (x, tagged.clone())
        }
    };
    let tags: Vec<_> = rows.iter().map(|s| s.tags.clone()).collect();
    let report = learn::one_vs_all_train(&x, &tags, config, repeats)?;
    let mut table = Table::new(&["tag", "positives", "negatives", "accuracy", "f1", "runs"]);
    for t in &report.results {
        table.push(vec![
            json!(t.tag.as_str()),
            json!(t.positives),
            json!(t.negatives),
            num(t.accuracy),
            num(t.f1),
            json!(t.runs),
        ]);
    }
    r.write_table("cluster", &table)?;
    let mut skipped = Table::new(&["tag", "reason"]);
    for (tag, reason) in &report.skipped {
        skipped.push(vec![json!(tag.as_str()), json!(reason)]);
    }
    r.write_table("cluster_skipped", &skipped)?;
    if !report.skipped.is_empty() {
        r.warn(format!("{} tags skipped for insufficient data", report.skipped.len()));
    }
    r.lines.push(format!("{} tags trained on {} stories x {} features", report.results.len(), x.rows(), x.cols()));
    Ok(())
}

fn features_for(annotations: &[PairAnnotation], res: &StoryResources) -> Result<Vec<PairFeatures>> {
    annotations
        .iter()
        .map(|a| learn::pair_features(&a.story_a, &a.story_b, res).map_err(Into::into))
        .collect()
}

fn feature_table(ids: &[String], features: &[PairFeatures]) -> Table {
    let mut cols = vec!["pair_id"];
    cols.extend(PairFeatures::NAMES);
    let mut t = Table::new(&cols);
    for (id, f) in ids.iter().zip(features) {
        let mut row = vec![json!(id)];
        row.extend(f.to_vec().into_iter().map(num));
        t.push(row);
    }
    t
}

fn cmd_analogy(r: &mut Run, config: TrainConfig, shape: ShapeParams) -> Result<()> {
    let stories = r.load_corpus()?;
    let annotations = r
        .load_annotations(&stories, LoadMode::Strict)?
        .context("analogy needs --annotations")?;
    let res = r.resources(&stories, shape)?;
    let features = features_for(&annotations, &res)?;
    let ids: Vec<String> = annotations.iter().map(|a| a.pair_id.clone()).collect();
    r.write_table("pair_features", &feature_table(&ids, &features))?;

    let matrix = metrics::correlation_matrix(&annotations)?;
    let mut cols = vec!["dimension"];
    cols.extend(AnalogyDimension::ALL.iter().map(|d| d.as_str()));
    let mut corr = Table::new(&cols);
    for (d, row) in matrix.dims.iter().zip(&matrix.values) {
        let mut cells = vec![json!(d.as_str())];
        cells.extend(row.iter().map(cell_value));
        corr.push(cells);
    }
    r.write_table("label_correlations", &corr)?;
    if let Some(m) = matrix.max_off_diagonal() {
        r.lines.push(format!("max off-diagonal label correlation {m:.2}"));
    }

    let reports = learn::train_analogy_classifiers(&features, &annotations, config)?;
    let mut table = Table::new(&["dimension", "positive_ratio", "status", "accuracy", "f1", "f1_defined", "test_size"]);
    for rep in &reports {
        match &rep.outcome {
            learn::DimensionOutcome::Trained {
                accuracy,
                f1,
                f1_defined,
                test_size,
                model,
            } => {
                table.push(vec![
                    json!(rep.dimension.as_str()),
                    num(rep.positive_ratio),
                    json!("trained"),
                    num(*accuracy),
                    num(*f1),
                    json!(f1_defined),
                    json!(test_size),
                ]);
                let mut buf = Vec::new();
                learn::write_model(&mut buf, model)?;
                r.write_file(&format!("models/{}.txt", rep.dimension), &String::from_utf8(buf)?)?;
            }
            learn::DimensionOutcome::Untrainable { reason } => {
                table.push(vec![
                    json!(rep.dimension.as_str()),
                    num(rep.positive_ratio),
                    json!("untrainable"),
                    Value::Null,
                    Value::Null,
                    Value::Null,
                    Value::Null,
                ]);
                r.warn(format!("{} untrainable: {reason}", rep.dimension));
            }
        }
    }
    r.write_table("analogy", &table)?;
    r.lines.push(format!("{} annotated pairs, {} dimensions", annotations.len(), reports.len()));
    Ok(())
}

fn trace_table(trace: &learn::EpochTrace) -> Table {
    let mut t = Table::new(&["epoch", "loss", "accuracy", "f1"]);
    for rec in &trace.records {
        t.push(vec![json!(rec.epoch), num(rec.train_loss), num(rec.eval_accuracy), num(rec.eval_f1)]);
    }
    t
}

fn cmd_transfer(
    r: &mut Run,
    source_path: Option<&Path>,
    target_size: usize,
    window: usize,
    config: TrainConfig,
    shape: ShapeParams,
) -> Result<()> {
    if window == 0 {
        bail!("--middle-window must be at least 1");
    }
    let target = r.load_corpus()?;
    let mut source = match source_path {
        Some(p) => {
            r.record_input("source_corpus", p)?;
            corpus::load_corpus(p).with_context(|| format!("loading source corpus {}", p.display()))?
        }
        None => target.clone(),
    };
    let mut truncated = 0;
    for s in &mut source {
        let kept = learn::middle_window(&s.text, window);
        if kept.split(' ').count() < s.text.split_whitespace().count() {
            truncated += 1;
        }
        s.text = kept;
    }
    r.lines.push(format!("middle window of {window} words applied; {truncated} source stories truncated"));

    let pairs = learn::build_transfer_pairs(&source, target_size, seed::derive(r.global.seed, &["transfer"]))?;
    for w in &pairs.warnings {
        r.warn(format!("{w:?}"));
    }
    if pairs.pairs.is_empty() {
        bail!("no balanced transfer pairs could be built");
    }
    let mut pair_table = Table::new(&["story_a", "story_b", "same_tag"]);
    for p in &pairs.pairs {
        pair_table.push(vec![json!(p.story_a), json!(p.story_b), json!(p.same_tag)]);
    }
    r.write_table("transfer_pairs", &pair_table)?;

    let annotations = r.load_annotations(&target, LoadMode::Strict)?;
    let source_res = r.resources(&source, shape)?;
    let src_features: Vec<PairFeatures> = pairs
        .pairs
        .iter()
        .map(|p| learn::pair_features(&p.story_a, &p.story_b, &source_res))
        .collect::<std::result::Result<_, _>>()?;
    let src_ids: Vec<String> = pairs.pairs.iter().map(|p| format!("{}|{}", p.story_a, p.story_b)).collect();
    let x_src = learn::pair_feature_matrix(&src_features, src_ids)?;
    let y_src: Vec<bool> = pairs.pairs.iter().map(|p| p.same_tag).collect();
    let (train_idx, held_idx) = learn::stratified_split(&y_src, seed::derive(r.global.seed, &["transfer-split"]));
    let x_train = x_src.select(&train_idx);
    let y_train: Vec<bool> = train_idx.iter().map(|&i| y_src[i]).collect();
    let x_held = x_src.select(&held_idx);
    let y_held: Vec<bool> = held_idx.iter().map(|&i| y_src[i]).collect();

    let mut target_sets: Vec<(String, Vec<bool>)> = Vec::new();
    let x_tgt = match &annotations {
        Some(anns) => {
            let target_res = if source_path.is_some() {
                r.resources(&target, shape)?
            } else {
                source_res.clone()
            };
            let feats = features_for(anns, &target_res)?;
            for d in AnalogyDimension::ALL {
                target_sets.push((d.to_string(), anns.iter().map(|a| a.labels.get(*d)).collect()));
            }
            let ids = anns.iter().map(|a| a.pair_id.clone()).collect();
            Some(learn::pair_feature_matrix(&feats, ids)?)
        }
        None => {
            r.warn("no --annotations: only the same_tag trace is produced".into());
            None
        }
    };
    let mut evals: Vec<(&str, &learn::FeatureMatrix, &[bool])> = vec![("same_tag", &x_held, &y_held)];
    if let Some(x) = &x_tgt {
        for (name, y) in &target_sets {
            evals.push((name.as_str(), x, y.as_slice()));
        }
    }
    let (model, traces) = learn::train_with_eval_sets(&x_train, &y_train, config, &evals)?;

    let mut summary = Table::new(&["evaluation", "examples", "final_accuracy", "final_f1"]);
    for (name, _, y) in &evals {
        let trace = &traces[*name];
        r.write_table(&format!("trace_{name}"), &trace_table(trace))?;
        let last = trace.last();
        summary.push(vec![
            json!(name),
            json!(y.len()),
            opt_num(last.map(|l| l.eval_accuracy)),
            opt_num(last.map(|l| l.eval_f1)),
        ]);
    }
    r.write_table("transfer", &summary)?;
    let mut buf = Vec::new();
    learn::write_model(&mut buf, &model)?;
    r.write_file("models/same_tag.txt", &String::from_utf8(buf)?)?;
    r.lines.push(format!(
        "{} transfer pairs ({} positive), {} epochs",
        pairs.pairs.len(),
        pairs.positives(),
        config.epochs
    ));
    Ok(())
}

fn cmd_iaa(r: &mut Run, ratings_path: &Path) -> Result<()> {
    r.record_input("ratings", ratings_path)?;
    let ratings = corpus::load_ratings(ratings_path).with_context(|| format!("loading ratings {}", ratings_path.display()))?;
    let rows = metrics::iaa_report(&ratings)?;
    let mut cols = vec!["raters"];
    cols.extend(AnalogyDimension::ALL.iter().map(|d| d.as_str()));
    let mut table = Table::new(&cols);
    let mut flags = Table::new(&["raters", "dimension", "reason"]);
    for row in &rows {
        let mut cells = vec![json!(row.label())];
        for (d, cell) in &row.kappas {
            cells.push(cell_value(cell));
            if let Cell::Undefined(reason) = cell {
                flags.push(vec![json!(row.label()), json!(d.as_str()), json!(reason)]);
            }
        }
        table.push(cells);
    }
    r.write_table("iaa", &table)?;
    r.write_table("iaa_flags", &flags)?;
    if !flags.rows.is_empty() {
        r.warn(format!("{} kappa cells undefined", flags.rows.len()));
    }
    r.lines.push(format!("{} raters, {} rater pairs", ratings.len(), rows.len()));
    Ok(())
}

fn cmd_validate(r: &mut Run) -> Result<()> {
    let stories = r.load_corpus()?;
    let mut checks = Table::new(&["input", "status", "detail"]);
    checks.push(vec![json!("corpus"), json!("ok"), json!(format!("{} stories", stories.len()))]);
    match r.load_frames() {
        Ok(Some(f)) => checks.push(vec![json!("frames"), json!("ok"), json!(format!("{} sequences", f.len()))]),
        Ok(None) => {}
        Err(e) => checks.push(vec![json!("frames"), json!("error"), json!(format!("{e:#}"))]),
    }
    match r.load_lexicon() {
        Ok(Some(l)) => checks.push(vec![json!("lexicon"), json!("ok"), json!(format!("{} entries", l.len()))]),
        Ok(None) => {}
        Err(e) => checks.push(vec![json!("lexicon"), json!("error"), json!(format!("{e:#}"))]),
    }
    let mut table = Table::new(&["pair_id", "dimension", "rule", "detail"]);
    if let Some(anns) = r.load_annotations(&stories, LoadMode::Lenient)? {
        let violations = corpus::validate_annotations(&anns);
        for v in &violations {
            table.push(vec![
                json!(v.pair_id),
                v.dimension.map_or(Value::Null, |d| json!(d.as_str())),
                json!(v.rule.to_string()),
                json!(v.detail),
            ]);
        }
        let status = if violations.is_empty() { "ok" } else { "violations" };
        checks.push(vec![
            json!("annotations"),
            json!(status),
            json!(format!("{} pairs, {} violations", anns.len(), violations.len())),
        ]);
        if !violations.is_empty() {
            r.warn(format!("{} annotation violations", violations.len()));
        }
        r.lines.push(format!("{} violations", violations.len()));
    }
    r.write_table("validation", &checks)?;
    r.write_table("violations", &table)?;
    Ok(())
}
