//! Command-line frontend for the cotrank library.
//!
//! Subcommands: `rerank` runs sliding-window reranking over a candidates
//! file and writes a scored run; `build-data` splits teacher-labeled
//! candidates into supervised records and held-out prompts; `build-rpo-pairs`
//! samples completions for held-out prompts and emits preference tuples;
//! `eval` scores runs against judgments; `gradcheck` verifies the preference
//! loss gradient against finite differences.
//!
//! Every setting resolves as command-line flag, then config-file entry
//! (`key = value` lines, `#` comments), then built-in default. Each written
//! artifact gets a sibling `{artifact}.manifest.json` recording the tool
//! version, the resolved configuration, inputs, and outputs.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 success with at
//! least one repaired model output, 3 data or verification error.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;

use cotrank::cotparse::{extract_final_ranking, parse_cot_output, RepairPolicy};
use cotrank::evalkit::{
    self, format_percent, mean_metric, ndcg_at_k, paired_t_test, read_qrels, read_run, write_run,
    Gain, RunEntry,
};
use cotrank::llmgate::{
    Completer, EndpointConfig, GateError, HttpGateway, MockOracle, MockOracleConfig,
};
use cotrank::promptgen::{
    build_prompt_capped, emit_sft_dataset, read_rpo_prompts, write_rpo_prompts, write_sft_records,
    FormatMix, PromptFormat, RenderedPrompt,
};
use cotrank::rpo::{build_rpo_dataset, grad_check, write_preference_examples, RpoPrompt};
use cotrank::slidewin::{rerank_sliding, SlideError, WindowConfig};
use cotrank::types::{read_candidates, LabeledCandidates};
use cotrank::{CandidateList, Ranking};

#[derive(Parser)]
#[command(
    name = "cotrank",
    version,
    about = "Listwise passage reranking toolkit"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Rerank candidate passages with a sliding window and write a run file.
    Rerank(RerankArgs),
    /// Split teacher-labeled candidates into supervised records and held-out prompts.
    BuildData(BuildDataArgs),
    /// Sample completions for held-out prompts and emit preference tuples.
    BuildRpoPairs(BuildRpoPairsArgs),
    /// Score a run against judgments, optionally against a baseline run.
    Eval(EvalArgs),
    /// Check the preference-loss gradient against central finite differences.
    Gradcheck(GradcheckArgs),
}

#[derive(Args)]
struct RerankArgs {
    /// Candidates file (line-delimited JSON).
    #[arg(long)]
    candidates: PathBuf,
    /// Output run file.
    #[arg(long)]
    out: PathBuf,
    /// Config file with `key = value` lines.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Completion backend: mock | endpoint.
    #[arg(long)]
    backend: Option<String>,
    /// Prompt format: direct_list | cot_explicit | cot_implicit_final.
    #[arg(long)]
    format: Option<String>,
    #[arg(long)]
    window_size: Option<usize>,
    #[arg(long)]
    stride: Option<usize>,
    /// Output handling: strict | repair.
    #[arg(long)]
    policy: Option<String>,
    /// Tag written in the run file's last column.
    #[arg(long)]
    tag: Option<String>,
    /// Worker threads (and endpoint in-flight bound).
    #[arg(long)]
    parallelism: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Gaussian noise added to the mock oracle's true scores.
    #[arg(long)]
    mock_noise: Option<f64>,
    /// Probability the mock oracle emits a repairable malformation.
    #[arg(long)]
    mock_malform: Option<f64>,
    /// Repair log path (default: {out}.repairs.jsonl).
    #[arg(long)]
    repairs_out: Option<PathBuf>,
    #[arg(long)]
    base_url: Option<String>,
    #[arg(long)]
    model: Option<String>,
    /// Environment variable holding the endpoint API key.
    #[arg(long)]
    api_key_env: Option<String>,
    #[arg(long)]
    temperature: Option<f64>,
    #[arg(long)]
    max_output_tokens: Option<u32>,
    #[arg(long)]
    timeout_secs: Option<u64>,
    #[arg(long)]
    max_retries: Option<u32>,
}

#[derive(Args)]
struct BuildDataArgs {
    /// Candidates file with teacher_order on every record.
    #[arg(long)]
    candidates: PathBuf,
    /// Output file for supervised records.
    #[arg(long)]
    sft_out: PathBuf,
    /// Output file for held-out prompts.
    #[arg(long)]
    rpo_out: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Weight of the single-list format in the format mix.
    #[arg(long)]
    mix_direct_list: Option<f64>,
    /// Weight of the written-steps format in the format mix.
    #[arg(long)]
    mix_cot_explicit: Option<f64>,
    /// Weight of the silent-steps format in the format mix.
    #[arg(long)]
    mix_cot_implicit_final: Option<f64>,
    /// Fraction of examples that become supervised records.
    #[arg(long)]
    split: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct BuildRpoPairsArgs {
    /// Held-out prompts file from build-data.
    #[arg(long)]
    prompts: PathBuf,
    /// Candidates file supplying docids (and mock truth scores) per query.
    #[arg(long)]
    candidates: PathBuf,
    /// Output preference-tuple file.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Completion backend: mock | endpoint.
    #[arg(long)]
    backend: Option<String>,
    /// Completions sampled per prompt.
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    mock_noise: Option<f64>,
    #[arg(long)]
    mock_malform: Option<f64>,
    #[arg(long)]
    base_url: Option<String>,
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    api_key_env: Option<String>,
    /// Endpoint sampling temperature.
    #[arg(long)]
    temperature: Option<f64>,
    #[arg(long)]
    max_output_tokens: Option<u32>,
    #[arg(long)]
    timeout_secs: Option<u64>,
    #[arg(long)]
    max_retries: Option<u32>,
}

#[derive(Args)]
struct EvalArgs {
    /// Run file to score.
    #[arg(long)]
    run: PathBuf,
    /// Judgments file.
    #[arg(long)]
    qrels: PathBuf,
    /// Baseline run for a paired significance test.
    #[arg(long)]
    baseline: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Metric cutoff.
    #[arg(long)]
    k: Option<usize>,
    /// Gain function: linear | exponential.
    #[arg(long)]
    gain: Option<String>,
    /// Write a per-query metric report (JSON) here.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Fail (exit 3) when the run contains queries absent from the judgments.
    #[arg(long)]
    strict: bool,
}

#[derive(Args)]
struct GradcheckArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<usize>,
    /// Finite-difference step.
    #[arg(long)]
    step: Option<f64>,
    /// Maximum allowed relative error.
    #[arg(long)]
    tol: Option<f64>,
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Data(String),
}

impl CliError {
    fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(msg) | CliError::Data(msg) => f.write_str(msg),
        }
    }
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn data(msg: impl Into<String>) -> CliError {
    CliError::Data(msg.into())
}

/// Settings from a config file: `key = value` lines, `#` comments, blank
/// lines ignored. Keys use the long flag spelling, e.g. `window-size = 20`.
struct Resolver {
    entries: BTreeMap<String, String>,
}

impl Resolver {
    fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let mut entries = BTreeMap::new();
        if let Some(path) = path {
            let content = std::fs::read_to_string(path)
                .map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
            for (i, raw) in content.lines().enumerate() {
                let line = raw.trim();
                if line.is_empty() || line.starts_with('#') {
                    continue;
                }
                let Some((key, value)) = line.split_once('=') else {
                    return Err(usage(format!(
                        "config {} line {}: expected key = value",
                        path.display(),
                        i + 1
                    )));
                };
                entries.insert(key.trim().to_string(), value.trim().to_string());
            }
        }
        Ok(Resolver { entries })
    }

    fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>, CliError> {
        match self.entries.get(key) {
            None => Ok(None),
            Some(raw) => raw
                .parse()
                .map(Some)
                .map_err(|_| usage(format!("config key {key}: cannot parse {raw:?}"))),
        }
    }

    /// Flag beats config beats default.
    fn pick<T: FromStr>(&self, flag: Option<T>, key: &str, default: T) -> Result<T, CliError> {
        Ok(flag.or(self.get(key)?).unwrap_or(default))
    }

    fn pick_opt<T: FromStr>(&self, flag: Option<T>, key: &str) -> Result<Option<T>, CliError> {
        Ok(flag.or(self.get(key)?))
    }
}

/// Resolved-settings snapshot recorded in manifests.
#[derive(Default)]
struct Snapshot(BTreeMap<String, String>);

impl Snapshot {
    fn put(&mut self, key: &str, value: impl fmt::Display) {
        self.0.insert(key.to_string(), value.to_string());
    }
}

fn write_manifest(
    artifact: &Path,
    command: &str,
    snapshot: &Snapshot,
    inputs: &[&Path],
    outputs: &[&Path],
) -> Result<(), CliError> {
    let manifest = serde_json::json!({
        "artifact": artifact.display().to_string(),
        "tool": {"name": "cotrank", "version": env!("CARGO_PKG_VERSION")},
        "command": command,
        "created": chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
        "config": snapshot.0,
        "inputs": inputs.iter().map(|p| p.display().to_string()).collect::<Vec<_>>(),
        "outputs": outputs.iter().map(|p| p.display().to_string()).collect::<Vec<_>>(),
    });
    let path = PathBuf::from(format!("{}.manifest.json", artifact.display()));
    let mut body = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    body.push('\n');
    std::fs::write(&path, body)
        .map_err(|e| data(format!("cannot write manifest {}: {e}", path.display())))
}

fn parse_format(raw: &str) -> Result<PromptFormat, CliError> {
    raw.parse().map_err(|_| {
        usage(format!(
            "unknown format {raw:?} (expected direct_list, cot_explicit, or cot_implicit_final)"
        ))
    })
}

fn parse_policy(raw: &str) -> Result<RepairPolicy, CliError> {
    match raw {
        "strict" => Ok(RepairPolicy::Strict),
        "repair" => Ok(RepairPolicy::Repair),
        other => Err(usage(format!(
            "unknown policy {other:?} (expected strict or repair)"
        ))),
    }
}

fn parse_gain(raw: &str) -> Result<Gain, CliError> {
    match raw {
        "linear" => Ok(Gain::Linear),
        "exponential" => Ok(Gain::Exponential),
        other => Err(usage(format!(
            "unknown gain {other:?} (expected linear or exponential)"
        ))),
    }
}

enum Backend {
    Mock { noise: f64, malform: f64, seed: u64 },
    Endpoint(Arc<HttpGateway>),
}

fn parse_backend(raw: &str) -> Result<bool, CliError> {
    match raw {
        "mock" => Ok(true),
        "endpoint" => Ok(false),
        other => Err(usage(format!(
            "unknown backend {other:?} (expected mock or endpoint)"
        ))),
    }
}

fn gate_error(e: GateError) -> CliError {
    match e {
        GateError::MissingApiKey(_) | GateError::InvalidRequest(_) => usage(e.to_string()),
        other => data(other.to_string()),
    }
}

/// True scores for the mock oracle, from one query's candidates record.
fn mock_scores(list: &CandidateList) -> Result<HashMap<String, f64>, CliError> {
    let scores = list.source_scores().ok_or_else(|| {
        data(format!(
            "mock backend requires a scores field on every record; query {} has none",
            list.query().qid()
        ))
    })?;
    Ok(list
        .passages()
        .iter()
        .zip(scores)
        .map(|(p, &s)| (p.docid().to_string(), s))
        .collect())
}

#[derive(Serialize)]
struct RepairLogEntry {
    qid: String,
    /// Window index in processing order (0 is the tail window).
    window: usize,
    rules: Vec<String>,
    broken_trace: bool,
}

struct QueryOutput {
    entries: Vec<RunEntry>,
    repairs: Vec<RepairLogEntry>,
}

fn rerank_one_query(
    labeled: &LabeledCandidates,
    completer: &dyn Completer,
    window_cfg: &WindowConfig,
    format: PromptFormat,
    policy: RepairPolicy,
    tag: &str,
) -> Result<QueryOutput, CliError> {
    let candidates = &labeled.candidates;
    let qid = candidates.query().qid().to_string();
    let n = candidates.len();
    let mut repairs = Vec::new();
    let mut window_idx = 0usize;
    let outcome = rerank_sliding(
        candidates,
        |window| {
            let idx = window_idx;
            window_idx += 1;
            let prompt = build_prompt_capped(window, format, window_cfg.window_size)?;
            let docids: Vec<String> = window
                .passages()
                .iter()
                .map(|p| p.docid().to_string())
                .collect();
            let text = completer.complete(&prompt, &docids)?;
            match policy {
                RepairPolicy::Strict => {
                    let trace = parse_cot_output(&text, window.len(), format)?;
                    Ok(Ranking::new(trace.into_final_order(), window.len())?)
                }
                RepairPolicy::Repair => {
                    let (ranking, report) =
                        extract_final_ranking(&text, window.len(), format, RepairPolicy::Repair)?;
                    if !report.is_clean() || report.broken_trace() {
                        repairs.push(RepairLogEntry {
                            qid: qid.clone(),
                            window: idx,
                            rules: report.rule_codes().iter().map(|c| c.to_string()).collect(),
                            broken_trace: report.broken_trace(),
                        });
                    }
                    Ok(ranking)
                }
            }
        },
        window_cfg,
    )
    .map_err(|e| match e {
        SlideError::InvalidConfig(msg) => usage(msg),
        SlideError::WindowRerankerFailure { .. } => data(format!("query {qid}: {e}")),
    })?;

    let entries = outcome
        .ranking
        .order()
        .iter()
        .enumerate()
        .map(|(pos, &idx)| {
            let docid = candidates.passages()[idx - 1].docid().to_string();
            let score = outcome.scores[&docid];
            RunEntry {
                qid: qid.clone(),
                docid,
                rank: pos + 1,
                score,
                tag: tag.to_string(),
            }
        })
        .collect::<Vec<_>>();
    debug_assert_eq!(entries.len(), n);
    Ok(QueryOutput { entries, repairs })
}

fn cmd_rerank(args: RerankArgs) -> Result<i32, CliError> {
    let resolver = Resolver::load(args.config.as_deref())?;
    let backend_is_mock =
        parse_backend(&resolver.pick(args.backend, "backend", "mock".to_string())?)?;
    let format =
        parse_format(&resolver.pick(args.format, "format", "cot_explicit".to_string())?)?;
    let window_size = resolver.pick(args.window_size, "window-size", 20usize)?;
    let stride = resolver.pick(args.stride, "stride", 10usize)?;
    let policy = parse_policy(&resolver.pick(args.policy, "policy", "repair".to_string())?)?;
    let tag = resolver.pick(args.tag, "tag", "ract".to_string())?;
    let parallelism = resolver.pick(args.parallelism, "parallelism", 4usize)?;
    let seed = resolver.pick(args.seed, "seed", 0u64)?;
    let mock_noise = resolver.pick(args.mock_noise, "mock-noise", 0.0f64)?;
    let mock_malform = resolver.pick(args.mock_malform, "mock-malform", 0.0f64)?;
    let repairs_out = resolver
        .pick_opt(args.repairs_out, "repairs-out")?
        .unwrap_or_else(|| PathBuf::from(format!("{}.repairs.jsonl", args.out.display())));

    let window_cfg = WindowConfig::new(window_size, stride).map_err(|e| usage(e.to_string()))?;
    if parallelism < 1 {
        return Err(usage("parallelism must be at least 1"));
    }

    let mut snapshot = Snapshot::default();
    snapshot.put("backend", if backend_is_mock { "mock" } else { "endpoint" });
    snapshot.put("format", format.as_str());
    snapshot.put("window-size", window_size);
    snapshot.put("stride", stride);
    snapshot.put(
        "policy",
        match policy {
            RepairPolicy::Strict => "strict",
            RepairPolicy::Repair => "repair",
        },
    );
    snapshot.put("tag", &tag);
    snapshot.put("parallelism", parallelism);
    snapshot.put("seed", seed);

    let labeled = read_candidates(&args.candidates).map_err(|e| data(e.to_string()))?;
    if labeled.is_empty() {
        return Err(data(format!(
            "candidates file {} holds no records",
            args.candidates.display()
        )));
    }
    let mut seen_qids = std::collections::HashSet::new();
    for l in &labeled {
        if !seen_qids.insert(l.candidates.query().qid().to_string()) {
            return Err(data(format!(
                "duplicate query id {} in candidates file",
                l.candidates.query().qid()
            )));
        }
    }

    let backend = if backend_is_mock {
        snapshot.put("mock-noise", mock_noise);
        snapshot.put("mock-malform", mock_malform);
        // Validate scores up front so the failure names the first bad query.
        for l in &labeled {
            mock_scores(&l.candidates)?;
        }
        Backend::Mock {
            noise: mock_noise,
            malform: mock_malform,
            seed,
        }
    } else {
        let endpoint = EndpointConfig {
            base_url: resolver.pick(
                args.base_url,
                "base-url",
                EndpointConfig::default().base_url,
            )?,
            model_name: resolver.pick(args.model, "model", EndpointConfig::default().model_name)?,
            api_key_env: resolver.pick(
                args.api_key_env,
                "api-key-env",
                EndpointConfig::default().api_key_env,
            )?,
            temperature: resolver.pick(args.temperature, "temperature", 0.0f64)?,
            max_output_tokens: resolver.pick(args.max_output_tokens, "max-output-tokens", 1024)?,
            timeout_secs: resolver.pick(args.timeout_secs, "timeout-secs", 60)?,
            max_retries: resolver.pick(args.max_retries, "max-retries", 3)?,
            parallelism,
            ..EndpointConfig::default()
        };
        snapshot.put("base-url", &endpoint.base_url);
        snapshot.put("model", &endpoint.model_name);
        snapshot.put("temperature", endpoint.temperature);
        snapshot.put("max-retries", endpoint.max_retries);
        Backend::Endpoint(Arc::new(
            HttpGateway::over_http(endpoint).map_err(gate_error)?,
        ))
    };

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism)
        .build()
        .map_err(|e| usage(format!("cannot build thread pool: {e}")))?;
    let outputs: Vec<QueryOutput> = pool.install(|| {
        labeled
            .par_iter()
            .map(|l| {
                let completer: Box<dyn Completer> = match &backend {
                    Backend::Mock {
                        noise,
                        malform,
                        seed,
                    } => Box::new(
                        MockOracle::new(MockOracleConfig {
                            true_scores: mock_scores(&l.candidates)?,
                            noise_stddev: *noise,
                            malform_rate: *malform,
                            seed: *seed,
                        })
                        .map_err(gate_error)?,
                    ),
                    Backend::Endpoint(gateway) => Box::new(SharedGateway(Arc::clone(gateway))),
                };
                rerank_one_query(l, completer.as_ref(), &window_cfg, format, policy, &tag)
            })
            .collect::<Result<Vec<_>, CliError>>()
    })?;

    let entries: Vec<RunEntry> = outputs.iter().flat_map(|o| o.entries.clone()).collect();
    let repairs: Vec<&RepairLogEntry> = outputs.iter().flat_map(|o| &o.repairs).collect();
    write_run(&args.out, &entries).map_err(|e| data(e.to_string()))?;

    let mut manifest_outputs: Vec<&Path> = vec![&args.out];
    if policy == RepairPolicy::Repair {
        let mut body = String::new();
        for entry in &repairs {
            body.push_str(&serde_json::to_string(entry).expect("repair entry serializes"));
            body.push('\n');
        }
        std::fs::write(&repairs_out, body)
            .map_err(|e| data(format!("cannot write {}: {e}", repairs_out.display())))?;
        manifest_outputs.push(&repairs_out);
    }
    write_manifest(
        &args.out,
        "rerank",
        &snapshot,
        &[&args.candidates],
        &manifest_outputs,
    )?;

    let repaired_windows = repairs.iter().filter(|r| !r.rules.is_empty()).count();
    println!(
        "reranked {} queries ({} entries) -> {}",
        labeled.len(),
        entries.len(),
        args.out.display()
    );
    if policy == RepairPolicy::Repair {
        println!(
            "repairs applied in {} windows (log: {})",
            repaired_windows,
            repairs_out.display()
        );
    }
    Ok(if repaired_windows > 0 { 2 } else { 0 })
}

/// Completer over a shared gateway, for per-query worker closures.
struct SharedGateway(Arc<HttpGateway>);

impl Completer for SharedGateway {
    fn complete_variant(
        &self,
        prompt: &RenderedPrompt,
        window_docids: &[String],
        variant: u64,
    ) -> Result<String, GateError> {
        self.0.complete_variant(prompt, window_docids, variant)
    }
}

fn cmd_build_data(args: BuildDataArgs) -> Result<i32, CliError> {
    let resolver = Resolver::load(args.config.as_deref())?;
    let thirds = FormatMix::default();
    let mix = FormatMix {
        direct_list: resolver.pick(args.mix_direct_list, "mix-direct-list", thirds.direct_list)?,
        cot_explicit: resolver.pick(
            args.mix_cot_explicit,
            "mix-cot-explicit",
            thirds.cot_explicit,
        )?,
        cot_implicit_final: resolver.pick(
            args.mix_cot_implicit_final,
            "mix-cot-implicit-final",
            thirds.cot_implicit_final,
        )?,
    };
    let split = resolver.pick(args.split, "split", 0.8f64)?;
    let seed = resolver.pick(args.seed, "seed", 0u64)?;

    let labeled = read_candidates(&args.candidates).map_err(|e| data(e.to_string()))?;
    let mut examples = Vec::with_capacity(labeled.len());
    for l in labeled {
        let qid = l.candidates.query().qid().to_string();
        let teacher = l
            .teacher
            .ok_or_else(|| data(format!("query {qid} carries no teacher_order")))?;
        let example = cotrank::promptgen::TeacherExample::new(l.candidates, teacher)
            .map_err(|e| data(format!("query {qid}: {e}")))?
            .with_provenance(l.provenance);
        examples.push(example);
    }
    if examples.is_empty() {
        return Err(data(format!(
            "candidates file {} holds no records",
            args.candidates.display()
        )));
    }

    let split_result = emit_sft_dataset(&examples, &mix, split, seed).map_err(|e| match e {
        cotrank::promptgen::PromptError::BadMix(_)
        | cotrank::promptgen::PromptError::BadSplit(_) => usage(e.to_string()),
        other => data(other.to_string()),
    })?;
    write_sft_records(&args.sft_out, &split_result.sft)
        .map_err(|e| data(format!("cannot write {}: {e}", args.sft_out.display())))?;
    write_rpo_prompts(&args.rpo_out, &split_result.rpo_prompts)
        .map_err(|e| data(format!("cannot write {}: {e}", args.rpo_out.display())))?;

    let mut snapshot = Snapshot::default();
    snapshot.put("mix-direct-list", mix.direct_list);
    snapshot.put("mix-cot-explicit", mix.cot_explicit);
    snapshot.put("mix-cot-implicit-final", mix.cot_implicit_final);
    snapshot.put("split", split);
    snapshot.put("seed", seed);
    write_manifest(
        &args.sft_out,
        "build-data",
        &snapshot,
        &[&args.candidates],
        &[&args.sft_out, &args.rpo_out],
    )?;
    write_manifest(
        &args.rpo_out,
        "build-data",
        &snapshot,
        &[&args.candidates],
        &[&args.sft_out, &args.rpo_out],
    )?;

    println!(
        "supervised records: {} -> {}",
        split_result.sft.len(),
        args.sft_out.display()
    );
    println!(
        "held-out prompts: {} -> {}",
        split_result.rpo_prompts.len(),
        args.rpo_out.display()
    );
    Ok(0)
}

fn cmd_build_rpo_pairs(args: BuildRpoPairsArgs) -> Result<i32, CliError> {
    let resolver = Resolver::load(args.config.as_deref())?;
    let backend_is_mock =
        parse_backend(&resolver.pick(args.backend, "backend", "mock".to_string())?)?;
    let k = resolver.pick(args.k, "k", 3usize)?;
    let seed = resolver.pick(args.seed, "seed", 0u64)?;
    let mock_noise = resolver.pick(args.mock_noise, "mock-noise", 0.5f64)?;
    let mock_malform = resolver.pick(args.mock_malform, "mock-malform", 0.0f64)?;
    if k < 1 {
        return Err(usage("k must be at least 1"));
    }

    let prompt_records = read_rpo_prompts(&args.prompts).map_err(|e| data(e.to_string()))?;
    if prompt_records.is_empty() {
        return Err(data(format!(
            "prompts file {} holds no records",
            args.prompts.display()
        )));
    }
    let labeled = read_candidates(&args.candidates).map_err(|e| data(e.to_string()))?;
    let by_qid: HashMap<String, &LabeledCandidates> = labeled
        .iter()
        .map(|l| (l.candidates.query().qid().to_string(), l))
        .collect();

    let mut prompts = Vec::with_capacity(prompt_records.len());
    let mut rendered: HashMap<String, (String, Vec<String>)> = HashMap::new();
    for rec in &prompt_records {
        let l = by_qid.get(&rec.qid).ok_or_else(|| {
            data(format!(
                "prompt {} has no matching record in {}",
                rec.qid,
                args.candidates.display()
            ))
        })?;
        let n = l.candidates.len();
        let truth = Ranking::new(rec.teacher_order.clone(), n)
            .map_err(|e| data(format!("prompt {}: teacher order invalid: {e}", rec.qid)))?;
        let docids: Vec<String> = l
            .candidates
            .passages()
            .iter()
            .map(|p| p.docid().to_string())
            .collect();
        rendered.insert(rec.qid.clone(), (rec.prompt.clone(), docids));
        prompts.push(RpoPrompt {
            prompt_id: rec.qid.clone(),
            format: rec.format,
            truth,
        });
    }

    let mut snapshot = Snapshot::default();
    snapshot.put("backend", if backend_is_mock { "mock" } else { "endpoint" });
    snapshot.put("k", k);
    snapshot.put("seed", seed);

    enum PairBackend {
        // One oracle per query: docids are only unique within a query.
        Mock(HashMap<String, MockOracle>),
        Endpoint(HttpGateway),
    }

    let backend = if backend_is_mock {
        snapshot.put("mock-noise", mock_noise);
        snapshot.put("mock-malform", mock_malform);
        let mut oracles = HashMap::new();
        for rec in &prompt_records {
            let l = by_qid[&rec.qid];
            let oracle = MockOracle::new(MockOracleConfig {
                true_scores: mock_scores(&l.candidates)?,
                noise_stddev: mock_noise,
                malform_rate: mock_malform,
                seed,
            })
            .map_err(gate_error)?;
            oracles.insert(rec.qid.clone(), oracle);
        }
        PairBackend::Mock(oracles)
    } else {
        let endpoint = EndpointConfig {
            base_url: resolver.pick(
                args.base_url,
                "base-url",
                EndpointConfig::default().base_url,
            )?,
            model_name: resolver.pick(args.model, "model", EndpointConfig::default().model_name)?,
            api_key_env: resolver.pick(
                args.api_key_env,
                "api-key-env",
                EndpointConfig::default().api_key_env,
            )?,
            temperature: resolver.pick(args.temperature, "temperature", 0.7f64)?,
            max_output_tokens: resolver.pick(args.max_output_tokens, "max-output-tokens", 1024)?,
            timeout_secs: resolver.pick(args.timeout_secs, "timeout-secs", 60)?,
            max_retries: resolver.pick(args.max_retries, "max-retries", 3)?,
            ..EndpointConfig::default()
        };
        snapshot.put("base-url", &endpoint.base_url);
        snapshot.put("model", &endpoint.model_name);
        snapshot.put("temperature", endpoint.temperature);
        PairBackend::Endpoint(HttpGateway::over_http(endpoint).map_err(gate_error)?)
    };

    let (examples, summary) = build_rpo_dataset(&prompts, k, |prompt, variant| {
        let (text, docids) = &rendered[&prompt.prompt_id];
        let rendered_prompt = RenderedPrompt {
            text: text.clone(),
            num_passages: prompt.truth.len(),
            format: prompt.format,
        };
        let completion = match &backend {
            PairBackend::Mock(oracles) => {
                oracles[&prompt.prompt_id].complete_variant(&rendered_prompt, docids, variant)?
            }
            PairBackend::Endpoint(gateway) => {
                gateway.complete_variant(&rendered_prompt, docids, variant)?
            }
        };
        Ok(completion)
    })
    .map_err(|e| data(e.to_string()))?;

    write_preference_examples(&args.out, &examples)
        .map_err(|e| data(format!("cannot write {}: {e}", args.out.display())))?;
    write_manifest(
        &args.out,
        "build-rpo-pairs",
        &snapshot,
        &[&args.prompts, &args.candidates],
        &[&args.out],
    )?;

    println!(
        "prompts: {}, sampled: {}, parsed: {}, tuples: {}, deduped: {}, mean overlap: {:.2}",
        summary.prompts,
        summary.sampled,
        summary.parsed,
        summary.tuples,
        summary.deduped,
        summary.mean_overlap
    );
    println!("preference tuples -> {}", args.out.display());
    Ok(0)
}

fn cmd_eval(args: EvalArgs) -> Result<i32, CliError> {
    let resolver = Resolver::load(args.config.as_deref())?;
    let k = resolver.pick(args.k, "k", 10usize)?;
    let gain = parse_gain(&resolver.pick(args.gain, "gain", "linear".to_string())?)?;
    let strict = args.strict || resolver.get("strict")?.unwrap_or(false);

    let qrels = read_qrels(&args.qrels).map_err(|e| data(e.to_string()))?;
    let run = read_run(&args.run).map_err(|e| data(e.to_string()))?;
    let report = ndcg_at_k(&run, &qrels, k, gain).map_err(|e| match e {
        evalkit::EvalError::InvalidK => usage(e.to_string()),
        other => data(other.to_string()),
    })?;
    if !report.missing_qids.is_empty() {
        let msg = format!(
            "{} queries have no judgments: {}",
            report.missing_qids.len(),
            report.missing_qids.join(", ")
        );
        if strict {
            return Err(data(msg));
        }
        eprintln!("warning: {msg}");
    }
    let mean = mean_metric(&report.per_query)
        .ok_or_else(|| data("no query in the run could be scored".to_string()))?;

    if let Some(baseline_path) = &args.baseline {
        let baseline_run = read_run(baseline_path).map_err(|e| data(e.to_string()))?;
        let baseline_report =
            ndcg_at_k(&baseline_run, &qrels, k, gain).map_err(|e| data(e.to_string()))?;
        let baseline_mean = mean_metric(&baseline_report.per_query)
            .ok_or_else(|| data("no baseline query could be scored".to_string()))?;
        let t_test = paired_t_test(&report.per_query, &baseline_report.per_query)
            .map_err(|e| data(e.to_string()))?;
        let marker = if t_test.p < 0.05 { "\u{2020}" } else { "" };
        println!("run ndcg@{k}: {}{marker}", format_percent(mean));
        println!("baseline ndcg@{k}: {}", format_percent(baseline_mean));
        println!(
            "paired t-test: t={:.4} p={:.4} dof={}",
            t_test.t, t_test.p, t_test.dof
        );
    } else {
        println!("run ndcg@{k}: {}", format_percent(mean));
    }

    if let Some(report_path) = &args.report {
        evalkit::write_metric_report(report_path, &format!("ndcg@{k}"), &report.per_query)
            .map_err(|e| data(format!("cannot write {}: {e}", report_path.display())))?;
        let mut snapshot = Snapshot::default();
        snapshot.put("k", k);
        snapshot.put(
            "gain",
            match gain {
                Gain::Linear => "linear",
                Gain::Exponential => "exponential",
            },
        );
        write_manifest(
            report_path,
            "eval",
            &snapshot,
            &[&args.run, &args.qrels],
            &[report_path],
        )?;
    }
    Ok(0)
}

fn cmd_gradcheck(args: GradcheckArgs) -> Result<i32, CliError> {
    let resolver = Resolver::load(args.config.as_deref())?;
    let seed = resolver.pick(args.seed, "seed", 0u64)?;
    let trials = resolver.pick(args.trials, "trials", 100usize)?;
    let step = resolver.pick(args.step, "step", 1e-5f64)?;
    let tol = resolver.pick(args.tol, "tol", 1e-6f64)?;
    if trials < 1 {
        return Err(usage("trials must be at least 1"));
    }
    if !(step.is_finite() && step > 0.0) {
        return Err(usage(format!(
            "step must be finite and positive, got {step}"
        )));
    }
    if !(tol.is_finite() && tol > 0.0) {
        return Err(usage(format!("tol must be finite and positive, got {tol}")));
    }
    let report = grad_check(seed, trials, step, tol).map_err(|e| data(e.to_string()))?;
    println!(
        "checked {} coordinates over {} trials; max relative error {:.3e}",
        report.checked_coords, report.trials, report.max_rel_err
    );
    if report.passed() {
        println!("gradient check: PASS");
        Ok(0)
    } else {
        println!(
            "gradient check: FAIL ({} coordinates exceeded tolerance {:.1e})",
            report.failures, tol
        );
        Err(data("analytic gradient disagrees with finite differences"))
    }
}

fn run(cli: Cli) -> Result<i32, CliError> {
    match cli.command {
        Command::Rerank(args) => cmd_rerank(args),
        Command::BuildData(args) => cmd_build_data(args),
        Command::BuildRpoPairs(args) => cmd_build_rpo_pairs(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Gradcheck(args) => cmd_gradcheck(args),
    }
}

fn main() {
    env_logger::init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    match run(cli) {
        Ok(code) => std::process::exit(code),
        Err(err) => {
            eprintln!("error: {err}");
            std::process::exit(err.exit_code());
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    #[test]
    fn test_config_file_parsing() {
        let dir = tempfile::TempDir::new().unwrap();
        let path = dir.path().join("ract.conf");
        let mut f = std::fs::File::create(&path).unwrap();
        writeln!(f, "# reranker settings").unwrap();
        writeln!(f, "window-size = 8").unwrap();
        writeln!(f).unwrap();
        writeln!(f, "tag=mytag").unwrap();
        drop(f);
        let resolver = Resolver::load(Some(&path)).unwrap();
        assert_eq!(resolver.get::<usize>("window-size").unwrap(), Some(8));
        assert_eq!(resolver.get::<String>("tag").unwrap(), Some("mytag".into()));
        assert_eq!(resolver.get::<usize>("stride").unwrap(), None);
    }

    #[test]
    fn test_flag_beats_config_beats_default() {
        let dir = tempfile::TempDir::new().unwrap();
        let path = dir.path().join("ract.conf");
        std::fs::write(&path, "stride = 5\n").unwrap();
        let resolver = Resolver::load(Some(&path)).unwrap();
        assert_eq!(resolver.pick(Some(2usize), "stride", 10).unwrap(), 2);
        assert_eq!(resolver.pick(None::<usize>, "stride", 10).unwrap(), 5);
        assert_eq!(resolver.pick(None::<usize>, "window-size", 10).unwrap(), 10);
    }

    #[test]
    fn test_config_rejections() {
        let dir = tempfile::TempDir::new().unwrap();
        let path = dir.path().join("bad.conf");
        std::fs::write(&path, "just words\n").unwrap();
        assert!(matches!(
            Resolver::load(Some(&path)),
            Err(CliError::Usage(_))
        ));
        std::fs::write(&path, "stride = banana\n").unwrap();
        let resolver = Resolver::load(Some(&path)).unwrap();
        assert!(matches!(
            resolver.get::<usize>("stride"),
            Err(CliError::Usage(_))
        ));
    }

    #[test]
    fn test_mode_parsers() {
        assert!(parse_format("cot_explicit").is_ok());
        assert!(parse_format("sideways").is_err());
        assert!(parse_policy("strict").is_ok());
        assert!(parse_policy("lenient").is_err());
        assert!(parse_gain("exponential").is_ok());
        assert!(parse_gain("cubic").is_err());
        assert!(parse_backend("mock").unwrap());
        assert!(!parse_backend("endpoint").unwrap());
        assert!(parse_backend("oracle").is_err());
    }

    #[test]
    fn test_exit_codes() {
        assert_eq!(usage("x").exit_code(), 1);
        assert_eq!(data("x").exit_code(), 3);
    }
}
