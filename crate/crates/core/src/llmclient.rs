//! OpenAI-compatible chat client and the resumable batch runner.

use std::collections::{BTreeMap, HashSet};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{RawResponse, ResponseKey};
use crate::profiles::PromptInstance;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DecodeParams {
    pub temperature: f64,
    pub top_p: f64,
    pub max_new_tokens: u32,
}

impl Default for DecodeParams {
    fn default() -> Self {
        DecodeParams { temperature: 0.75, top_p: 0.95, max_new_tokens: 300 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub initial_backoff_ms: u64,
    pub max_backoff_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy { max_attempts: 5, initial_backoff_ms: 500, max_backoff_ms: 30_000 }
    }
}

impl RetryPolicy {
    /// Delay before attempt `attempt + 1` (attempts count from 1).
    pub fn backoff(&self, attempt: u32) -> Duration {
        let factor = 1u64 << attempt.saturating_sub(1).min(20);
        Duration::from_millis(self.initial_backoff_ms.saturating_mul(factor).min(self.max_backoff_ms))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelEndpointConfig {
    pub base_url: String,
    pub model_id: String,
    /// Name of the environment variable that holds the API key.
    pub api_key_env: Option<String>,
    pub decode: DecodeParams,
    pub repeats: u32,
    pub max_parallel: usize,
    pub retry: RetryPolicy,
    pub timeout_secs: u64,
}

impl Default for ModelEndpointConfig {
    fn default() -> Self {
        ModelEndpointConfig {
            base_url: "http://localhost:8000".into(),
            model_id: String::new(),
            api_key_env: None,
            decode: DecodeParams::default(),
            repeats: 10,
            max_parallel: 4,
            retry: RetryPolicy::default(),
            timeout_secs: 120,
        }
    }
}

impl ModelEndpointConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.model_id.trim().is_empty() {
            return bad("endpoint model_id is empty".into());
        }
        #[allow(clippy::neg_cmp_op_on_partial_ord)] // also rejects NaN
        if !(self.decode.temperature >= 0.0) {
            return bad(format!("temperature must be >= 0, got {}", self.decode.temperature));
        }
        if !(self.decode.top_p > 0.0 && self.decode.top_p <= 1.0) {
            return bad(format!("top_p must be in (0, 1], got {}", self.decode.top_p));
        }
        if self.repeats < 1 {
            return bad("repeats must be >= 1".into());
        }
        if self.max_parallel < 1 {
            return bad("max_parallel must be >= 1".into());
        }
        if self.retry.max_attempts < 1 {
            return bad("retry.max_attempts must be >= 1".into());
        }
        Ok(())
    }

    pub fn chat_url(&self) -> String {
        let base = self.base_url.trim_end_matches('/');
        if base.ends_with("/v1") {
            format!("{base}/chat/completions")
        } else {
            format!("{base}/v1/chat/completions")
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Completion {
    pub text: String,
    pub usage: Option<serde_json::Value>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TransportError {
    #[error("HTTP {status}: {body}")]
    Http { status: u16, body: String },
    #[error("network error: {0}")]
    Network(String),
    #[error("malformed response: {0}")]
    Protocol(String),
}

impl TransportError {
    pub fn retryable(&self) -> bool {
        match self {
            TransportError::Http { status, .. } => *status == 429 || *status >= 500,
            TransportError::Network(_) => true,
            TransportError::Protocol(_) => false,
        }
    }
}

/// One chat completion per call. Implementations must be shareable across
/// worker threads.
pub trait ChatBackend: Sync {
    fn chat(
        &self,
        cfg: &ModelEndpointConfig,
        prompt: &str,
    ) -> std::result::Result<Completion, TransportError>;
}

pub struct HttpChatBackend {
    client: reqwest::blocking::Client,
    api_key: Option<String>,
}

#[derive(Serialize)]
struct ChatMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: Vec<ChatMessage<'a>>,
    temperature: f64,
    top_p: f64,
    max_tokens: u32,
    n: u32,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
    #[serde(default)]
    usage: Option<serde_json::Value>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatChoiceMessage,
}

#[derive(Deserialize)]
struct ChatChoiceMessage {
    #[serde(default)]
    content: Option<String>,
}

impl HttpChatBackend {
    /// Reads the key from the configured environment variable, if any.
    pub fn from_config(cfg: &ModelEndpointConfig) -> Result<Self> {
        let api_key = match &cfg.api_key_env {
            Some(var) => Some(std::env::var(var).map_err(|_| {
                Error::Config(format!("environment variable `{var}` with the API key is not set"))
            })?),
            None => None,
        };
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(cfg.timeout_secs))
            .build()
            .map_err(|e| Error::Endpoint(e.to_string()))?;
        Ok(HttpChatBackend { client, api_key })
    }
}

impl ChatBackend for HttpChatBackend {
    fn chat(
        &self,
        cfg: &ModelEndpointConfig,
        prompt: &str,
    ) -> std::result::Result<Completion, TransportError> {
        let body = ChatRequest {
            model: &cfg.model_id,
            messages: vec![ChatMessage { role: "user", content: prompt }],
            temperature: cfg.decode.temperature,
            top_p: cfg.decode.top_p,
            max_tokens: cfg.decode.max_new_tokens,
            n: 1,
        };
        let mut req = self.client.post(cfg.chat_url()).json(&body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| TransportError::Network(e.to_string()))?;
        let status = resp.status();
        if !status.is_success() {
            let body = resp.text().unwrap_or_default();
            return Err(TransportError::Http {
                status: status.as_u16(),
                body: body.chars().take(500).collect(),
            });
        }
        let parsed: ChatResponse = resp.json().map_err(|e| TransportError::Protocol(e.to_string()))?;
        let choice = parsed
            .choices
            .into_iter()
            .next()
            .ok_or_else(|| TransportError::Protocol("no choices in response".into()))?;
        Ok(Completion { text: choice.message.content.unwrap_or_default(), usage: parsed.usage })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompletionOutcome {
    pub completion: Completion,
    pub attempts: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FailedCompletion {
    pub error: TransportError,
    pub attempts: u32,
}

/// Sends one prompt, retrying transient failures with exponential backoff.
pub fn complete(
    backend: &dyn ChatBackend,
    prompt: &str,
    cfg: &ModelEndpointConfig,
) -> std::result::Result<CompletionOutcome, FailedCompletion> {
    let mut attempt = 0;
    loop {
        attempt += 1;
        match backend.chat(cfg, prompt) {
            Ok(completion) => {
                if attempt > 1 {
                    log::info!("completion succeeded after {attempt} attempts");
                }
                return Ok(CompletionOutcome { completion, attempts: attempt });
            }
            Err(error) if error.retryable() && attempt < cfg.retry.max_attempts => {
                let delay = cfg.retry.backoff(attempt);
                log::warn!("attempt {attempt} failed ({error}); retrying in {delay:?}");
                std::thread::sleep(delay);
            }
            Err(error) => return Err(FailedCompletion { error, attempts: attempt }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureEntry {
    pub profile_id: String,
    pub model_id: String,
    pub variant: String,
    pub run_index: u32,
    pub attempts: u32,
    pub error: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub planned: usize,
    pub attempted: usize,
    pub succeeded: usize,
    pub skipped_existing: usize,
    pub failures: Vec<FailureEntry>,
}

pub fn failures_path(out: &Path) -> PathBuf {
    let mut name = out.file_name().unwrap_or_default().to_os_string();
    name.push(".failures.json");
    out.with_file_name(name)
}

struct Task<'a> {
    prompt: &'a PromptInstance,
    run_index: u32,
}

/// Existing records in `path`. A torn final line (from an interrupted run) is
/// dropped; any other malformed line is an error.
fn read_existing(path: &Path) -> Result<(Vec<RawResponse>, bool)> {
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok((Vec::new(), false)),
        Err(e) => return Err(Error::io(path, e)),
    };
    let lines: Vec<String> =
        BufReader::new(file).lines().collect::<std::io::Result<_>>().map_err(|e| Error::io(path, e))?;
    let mut records = Vec::new();
    let mut torn = false;
    let last = lines.len().saturating_sub(1);
    for (i, line) in lines.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<RawResponse>(line) {
            Ok(r) => records.push(r),
            Err(_) if i == last => torn = true,
            Err(e) => {
                return Err(Error::Parse { path: path.to_path_buf(), line: i + 1, message: e.to_string() })
            }
        }
    }
    Ok((records, torn))
}

fn write_jsonl(path: &Path, records: &[RawResponse]) -> Result<()> {
    let tmp = path.with_extension("jsonl.tmp");
    {
        let mut f = std::io::BufWriter::new(File::create(&tmp).map_err(|e| Error::io(&tmp, e))?);
        for r in records {
            serde_json::to_writer(&mut f, r)?;
            f.write_all(b"\n").map_err(|e| Error::io(&tmp, e))?;
        }
        f.flush().map_err(|e| Error::io(&tmp, e))?;
    }
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn timestamp() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

/// Runs every prompt `cfg.repeats` times and appends raw responses to `out`.
///
/// Keys already present in `out` are skipped, so an interrupted run can be
/// restarted. Requests run on at most `cfg.max_parallel` worker threads;
/// a single writer appends results in task order. Prompts that still fail
/// after retries are listed in `<out>.failures.json` instead of the JSONL.
pub fn run_experiment(
    prompts: &[PromptInstance],
    cfg: &ModelEndpointConfig,
    backend: &dyn ChatBackend,
    out: &Path,
) -> Result<ExperimentSummary> {
    if prompts.is_empty() {
        return Err(Error::InvalidInput("no prompts to run".into()));
    }
    cfg.validate()?;

    let (existing, torn) = read_existing(out)?;
    let done: HashSet<ResponseKey> = existing.iter().map(RawResponse::key).collect();
    if torn || done.len() != existing.len() {
        // rewrite so appends start from a clean, duplicate-free file
        let mut seen = HashSet::new();
        let clean: Vec<RawResponse> = existing.iter().filter(|r| seen.insert(r.key())).cloned().collect();
        write_jsonl(out, &clean)?;
    }

    let mut tasks = Vec::new();
    let mut planned_keys = Vec::new();
    let mut skipped = 0;
    for prompt in prompts {
        for run_index in 1..=cfg.repeats {
            let key = ResponseKey {
                profile_id: prompt.profile_id.clone(),
                model_id: cfg.model_id.clone(),
                variant: prompt.variant,
                run_index,
            };
            planned_keys.push(key.clone());
            if done.contains(&key) {
                skipped += 1;
            } else {
                tasks.push(Task { prompt, run_index });
            }
        }
    }

    let mut summary = ExperimentSummary {
        planned: planned_keys.len(),
        attempted: tasks.len(),
        skipped_existing: skipped,
        ..Default::default()
    };

    let mut writer = OpenOptions::new().create(true).append(true).open(out).map_err(|e| Error::io(out, e))?;

    let next = AtomicUsize::new(0);
    let (tx, rx) = mpsc::channel();
    let workers = cfg.max_parallel.min(tasks.len().max(1));
    let mut write_error = None;

    std::thread::scope(|scope| {
        for _ in 0..workers {
            let tx = tx.clone();
            let tasks = &tasks;
            let next = &next;
            scope.spawn(move || loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(task) = tasks.get(i) else { break };
                let outcome = complete(backend, &task.prompt.text, cfg);
                if tx.send((i, outcome, timestamp())).is_err() {
                    break;
                }
            });
        }
        drop(tx);

        let mut pending = BTreeMap::new();
        let mut expected = 0;
        for (i, outcome, ts) in rx {
            pending.insert(i, (outcome, ts));
            while let Some((outcome, ts)) = pending.remove(&expected) {
                let task = &tasks[expected];
                expected += 1;
                match outcome {
                    Ok(CompletionOutcome { completion, attempts }) => {
                        let record = RawResponse {
                            profile_id: task.prompt.profile_id.clone(),
                            model_id: cfg.model_id.clone(),
                            variant: task.prompt.variant,
                            run_index: task.run_index,
                            prompt_text: task.prompt.text.clone(),
                            response_text: completion.text,
                            decode_params: cfg.decode,
                            timestamp: ts,
                            usage: completion.usage,
                            attempts: Some(attempts),
                        };
                        let res = serde_json::to_string(&record)
                            .map_err(Error::from)
                            .and_then(|line| writeln!(writer, "{line}").map_err(|e| Error::io(out, e)));
                        match res {
                            Ok(()) => summary.succeeded += 1,
                            Err(e) => {
                                if write_error.is_none() {
                                    write_error = Some(e);
                                }
                            }
                        }
                    }
                    Err(FailedCompletion { error, attempts }) => {
                        log::error!(
                            "{} run {} failed after {attempts} attempts: {error}",
                            task.prompt.profile_id,
                            task.run_index
                        );
                        summary.failures.push(FailureEntry {
                            profile_id: task.prompt.profile_id.clone(),
                            model_id: cfg.model_id.clone(),
                            variant: task.prompt.variant.to_string(),
                            run_index: task.run_index,
                            attempts,
                            error: error.to_string(),
                        });
                    }
                }
            }
        }
    });
    if let Some(e) = write_error {
        return Err(e);
    }
    writer.flush().map_err(|e| Error::io(out, e))?;
    drop(writer);

    // a resumed file is compacted back into canonical task order
    if skipped > 0 {
        let (records, _) = read_existing(out)?;
        let mut by_key: BTreeMap<ResponseKey, RawResponse> = BTreeMap::new();
        let mut foreign = Vec::new();
        let planned: HashSet<&ResponseKey> = planned_keys.iter().collect();
        for r in records {
            let key = r.key();
            if planned.contains(&key) {
                by_key.entry(key).or_insert(r);
            } else {
                foreign.push(r);
            }
        }
        let mut ordered: Vec<RawResponse> = planned_keys.iter().filter_map(|k| by_key.remove(k)).collect();
        ordered.extend(foreign);
        write_jsonl(out, &ordered)?;
    }

    let fpath = failures_path(out);
    if summary.failures.is_empty() {
        if fpath.exists() {
            std::fs::remove_file(&fpath).map_err(|e| Error::io(&fpath, e))?;
        }
    } else {
        let json = serde_json::to_string_pretty(&summary.failures)?;
        std::fs::write(&fpath, json + "\n").map_err(|e| Error::io(&fpath, e))?;
    }
    Ok(summary)
}
