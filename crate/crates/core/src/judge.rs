//! Judge backends and the retry-until-valid evaluation loop.
//!
//! A judge is anything that can turn a prompt into response text: a
//! remote LLM endpoint, a scripted sequence (for tests), or a synthetic
//! oracle that ranks by ground-truth category plus Gaussian noise.
//! [`evaluate`] drives the shared retry loop: validation failures are
//! retried immediately (they are model behavior, not load), transport
//! failures back off exponentially with jitter, and every attempt is
//! reported to the caller's sink for the exchange log.

use std::fmt;
use std::sync::Mutex;
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::corpus::{Category, Corpus, PoemId};
use crate::prompts::PromptText;
use crate::sampler::{splitmix64, Batch};

/// Substream tags for noise draws; the sampler owns 1-3.
const RANK_NOISE_TAG: u64 = 4;
const CLASSIFY_NOISE_TAG: u64 = 5;

const BACKOFF_BASE_MS: u64 = 250;
const BACKOFF_CAP_MS: u64 = 4_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Provider {
    /// First remote endpoint slot (chat-completions wire format).
    RemoteA,
    /// Second remote endpoint slot, so runs can mix vendors.
    RemoteB,
    /// Scripted responses for tests.
    Mock,
    /// Ground-truth-plus-noise oracle.
    Synthetic,
}

impl Provider {
    pub const ALL: [Provider; 4] = [
        Provider::RemoteA,
        Provider::RemoteB,
        Provider::Mock,
        Provider::Synthetic,
    ];

    /// Short lowercase identifier used in judge ids and CLI values.
    pub fn slug(self) -> &'static str {
        match self {
            Provider::RemoteA => "remote-a",
            Provider::RemoteB => "remote-b",
            Provider::Mock => "mock",
            Provider::Synthetic => "synthetic",
        }
    }

    pub fn parse_slug(s: &str) -> Option<Provider> {
        Provider::ALL.into_iter().find(|p| p.slug() == s.trim().to_lowercase())
    }

    /// Remote providers sleep between transport retries and carry real
    /// timestamps; offline ones do neither, keeping artifacts reproducible.
    pub fn is_remote(self) -> bool {
        matches!(self, Provider::RemoteA | Provider::RemoteB)
    }
}

impl fmt::Display for Provider {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.slug())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgeConfig {
    pub provider: Provider,
    pub model_name: String,
    /// Sampling temperature; 1.0 diversifies repeated runs so they act
    /// as independent raters.
    pub temperature: f64,
    /// Extra attempts after the first; attempt numbers run 1..=max_retries+1.
    pub max_retries: u32,
    pub timeout_secs: u64,
    pub max_concurrency: usize,
}

impl JudgeConfig {
    pub fn new(provider: Provider, model_name: impl Into<String>) -> JudgeConfig {
        JudgeConfig {
            provider,
            model_name: model_name.into(),
            temperature: 1.0,
            max_retries: 5,
            timeout_secs: 60,
            max_concurrency: 4,
        }
    }

    pub fn validate(&self) -> Result<(), JudgeError> {
        if !self.temperature.is_finite() || self.temperature < 0.0 {
            return Err(JudgeError::InvalidConfig(format!(
                "temperature must be a finite non-negative number, got {}",
                self.temperature
            )));
        }
        if self.max_concurrency == 0 {
            return Err(JudgeError::InvalidConfig(
                "max_concurrency must be at least 1".into(),
            ));
        }
        Ok(())
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_secs(self.timeout_secs)
    }

    /// Identifier recorded with every response, e.g. `synthetic:oracle`.
    pub fn judge_id(&self) -> String {
        format!("{}:{}", self.provider, self.model_name)
    }

    /// Stable hash of everything that determines a request. All retry
    /// attempts for one request share the same fingerprint.
    pub fn fingerprint(&self, prompt_body: &str) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.provider.slug().as_bytes());
        hasher.update(b"|");
        hasher.update(self.model_name.as_bytes());
        hasher.update(b"|");
        hasher.update(format!("{:?}", self.temperature).as_bytes());
        hasher.update(b"|");
        hasher.update(self.max_retries.to_string().as_bytes());
        hasher.update(b"|");
        hasher.update(prompt_body.as_bytes());
        hex(&hasher.finalize())
    }
}

/// A response the validator accepted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawResponse {
    pub text: String,
    /// 1-based attempt number that produced this text.
    pub attempt: u32,
    pub judge_id: String,
    pub request_fingerprint: String,
}

/// Gaussian perturbation applied to latent quality before the synthetic
/// judge sorts. `sigma = 0` reproduces the ground-truth ordering exactly
/// (ties broken by poem id).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    sigma: f64,
    seed: u64,
}

impl NoiseModel {
    pub fn new(sigma: f64, seed: u64) -> Result<NoiseModel, JudgeError> {
        if !sigma.is_finite() || sigma < 0.0 {
            return Err(JudgeError::InvalidConfig(format!(
                "noise sigma must be a finite non-negative number, got {sigma}"
            )));
        }
        Ok(NoiseModel { sigma, seed })
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }
}

#[derive(Debug, Error)]
pub enum JudgeError {
    #[error("no valid response after {attempts} attempts; last rejection: {last_reason}")]
    ExhaustedRetries { attempts: u32, last_reason: String },
    #[error("provider timed out; gave up after {attempts} attempts")]
    Timeout { attempts: u32 },
    #[error("provider error{}: {excerpt}", .status.map(|s| format!(" (status {s})")).unwrap_or_default())]
    Provider { status: Option<u16>, excerpt: String },
    #[error("missing environment variable {0}")]
    MissingApiKey(String),
    #[error("invalid judge configuration: {0}")]
    InvalidConfig(String),
}

/// A failed attempt to obtain any response at all (network, HTTP status,
/// unusable response envelope). Retried with backoff, unlike validation
/// failures which are retried immediately.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransportFailure {
    pub status: Option<u16>,
    pub message: String,
    pub timed_out: bool,
}

/// Anything that can produce response text for a prompt.
pub trait TextSource: Send + Sync {
    fn fetch(&self, prompt_body: &str, attempt: u32) -> Result<String, TransportFailure>;
}

/// Outcome of a single attempt, as recorded in the exchange log.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AttemptStatus {
    /// Validator accepted the text.
    Accepted,
    /// Text arrived but the validator rejected it.
    Rejected,
    /// No usable text arrived.
    TransportFailed,
}

/// One exchange-log record. `timestamp_ms` is `None` for offline
/// providers so repeated runs produce byte-identical artifacts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttemptRecord {
    pub timestamp_ms: Option<u64>,
    pub request_fingerprint: String,
    pub attempt: u32,
    pub status: AttemptStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    pub text: String,
}

/// Runs the retry-until-valid loop against a response source.
///
/// The identical prompt is re-submitted on every attempt (same
/// fingerprint throughout). Each attempt is passed to `sink` before the
/// loop decides what to do next, so the exchange log is complete even
/// when the loop ends in an error. Returns the first response the
/// validator accepts; after `max_retries + 1` failures, returns
/// [`JudgeError::ExhaustedRetries`] if the last failure was a rejection,
/// or [`JudgeError::Timeout`] / [`JudgeError::Provider`] if the provider
/// itself gave out.
pub fn evaluate(
    config: &JudgeConfig,
    source: &dyn TextSource,
    prompt: &PromptText,
    validator: &mut dyn FnMut(&str) -> Result<(), String>,
    sink: &mut dyn FnMut(AttemptRecord),
) -> Result<RawResponse, JudgeError> {
    config.validate()?;
    let fingerprint = config.fingerprint(&prompt.body);
    let max_attempts = config.max_retries + 1;

    let mut last_failure: Option<TransportFailure> = None;
    let mut last_reason = String::from("no attempts made");
    for attempt in 1..=max_attempts {
        match source.fetch(&prompt.body, attempt) {
            Ok(text) => match validator(&text) {
                Ok(()) => {
                    sink(record(config, &fingerprint, attempt, AttemptStatus::Accepted, None, &text));
                    return Ok(RawResponse {
                        text,
                        attempt,
                        judge_id: config.judge_id(),
                        request_fingerprint: fingerprint,
                    });
                }
                Err(reason) => {
                    sink(record(
                        config,
                        &fingerprint,
                        attempt,
                        AttemptStatus::Rejected,
                        Some(reason.clone()),
                        &text,
                    ));
                    last_reason = reason;
                    last_failure = None;
                    // Invalid output is model behavior, not load: retry at once.
                }
            },
            Err(failure) => {
                sink(record(
                    config,
                    &fingerprint,
                    attempt,
                    AttemptStatus::TransportFailed,
                    Some(failure.message.clone()),
                    "",
                ));
                last_reason = failure.message.clone();
                last_failure = Some(failure);
                if config.provider.is_remote() && attempt < max_attempts {
                    std::thread::sleep(backoff_delay(attempt, &fingerprint));
                }
            }
        }
    }

    match last_failure {
        Some(f) if f.timed_out => Err(JudgeError::Timeout {
            attempts: max_attempts,
        }),
        Some(f) => Err(JudgeError::Provider {
            status: f.status,
            excerpt: f.message,
        }),
        None => Err(JudgeError::ExhaustedRetries {
            attempts: max_attempts,
            last_reason,
        }),
    }
}

fn record(
    config: &JudgeConfig,
    fingerprint: &str,
    attempt: u32,
    status: AttemptStatus,
    reason: Option<String>,
    text: &str,
) -> AttemptRecord {
    let timestamp_ms = if config.provider.is_remote() {
        Some(
            SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .unwrap_or_default()
                .as_millis() as u64,
        )
    } else {
        None
    };
    AttemptRecord {
        timestamp_ms,
        request_fingerprint: fingerprint.to_string(),
        attempt,
        status,
        reason,
        text: text.to_string(),
    }
}

/// Delay before transport-retry `attempt + 1`: exponential from 250 ms,
/// capped at 4 s, scaled into the upper half by a jitter fraction derived
/// deterministically from (fingerprint, attempt).
pub fn backoff_delay(attempt: u32, fingerprint: &str) -> Duration {
    let exp = BACKOFF_BASE_MS
        .saturating_mul(1u64 << (attempt.clamp(1, 6) - 1))
        .min(BACKOFF_CAP_MS);
    let mut h = 0x9E37_79B9_7F4A_7C15u64 ^ u64::from(attempt);
    for b in fingerprint.bytes() {
        h = splitmix64(h ^ u64::from(b));
    }
    let frac = (h >> 11) as f64 / (1u64 << 53) as f64;
    Duration::from_millis((exp as f64 * (0.5 + 0.5 * frac)).round() as u64)
}

/// Scripted response source: replies and failures are consumed in order;
/// running past the end is a transport failure.
pub struct ScriptedSource {
    scripts: Mutex<std::vec::IntoIter<Script>>,
}

#[derive(Debug, Clone)]
pub enum Script {
    Reply(String),
    Failure(TransportFailure),
}

impl Script {
    pub fn reply(text: impl Into<String>) -> Script {
        Script::Reply(text.into())
    }

    pub fn outage(message: impl Into<String>) -> Script {
        Script::Failure(TransportFailure {
            status: None,
            message: message.into(),
            timed_out: false,
        })
    }
}

impl ScriptedSource {
    pub fn new(scripts: Vec<Script>) -> ScriptedSource {
        ScriptedSource {
            scripts: Mutex::new(scripts.into_iter()),
        }
    }
}

impl TextSource for ScriptedSource {
    fn fetch(&self, _prompt_body: &str, _attempt: u32) -> Result<String, TransportFailure> {
        match self.scripts.lock().expect("script cursor poisoned").next() {
            Some(Script::Reply(text)) => Ok(text),
            Some(Script::Failure(failure)) => Err(failure),
            None => Err(TransportFailure {
                status: None,
                message: "scripted responses exhausted".into(),
                timed_out: false,
            }),
        }
    }
}

/// Source that returns the same text on every attempt; used to route
/// pre-generated synthetic responses through the shared retry loop.
pub struct FixedSource {
    text: String,
}

impl FixedSource {
    pub fn new(text: impl Into<String>) -> FixedSource {
        FixedSource { text: text.into() }
    }
}

impl TextSource for FixedSource {
    fn fetch(&self, _prompt_body: &str, _attempt: u32) -> Result<String, TransportFailure> {
        Ok(self.text.clone())
    }
}

/// Thin adapter for a chat-completions HTTP endpoint. The request body
/// and key never leave this type; responses come back verbatim so the
/// exchange log preserves exactly what the model said.
pub struct RemoteEndpoint {
    url: String,
    api_key: String,
    model_name: String,
    temperature: f64,
    client: reqwest::blocking::Client,
}

impl fmt::Debug for RemoteEndpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RemoteEndpoint")
            .field("url", &self.url)
            .field("api_key", &"<redacted>")
            .field("model_name", &self.model_name)
            .field("temperature", &self.temperature)
            .finish()
    }
}

impl RemoteEndpoint {
    /// Env var names for a provider slot: `(url, api_key)`.
    pub fn env_vars(provider: Provider) -> Option<(&'static str, &'static str)> {
        match provider {
            Provider::RemoteA => Some(("VERSERANK_REMOTE_A_URL", "VERSERANK_REMOTE_A_API_KEY")),
            Provider::RemoteB => Some(("VERSERANK_REMOTE_B_URL", "VERSERANK_REMOTE_B_API_KEY")),
            Provider::Mock | Provider::Synthetic => None,
        }
    }

    /// Builds the adapter from the provider slot's environment variables.
    pub fn from_env(config: &JudgeConfig) -> Result<RemoteEndpoint, JudgeError> {
        let (url_var, key_var) = RemoteEndpoint::env_vars(config.provider).ok_or_else(|| {
            JudgeError::InvalidConfig(format!(
                "provider {} is not a remote endpoint",
                config.provider
            ))
        })?;
        let url = std::env::var(url_var)
            .map_err(|_| JudgeError::MissingApiKey(url_var.to_string()))?;
        let api_key = std::env::var(key_var)
            .map_err(|_| JudgeError::MissingApiKey(key_var.to_string()))?;
        let client = reqwest::blocking::Client::builder()
            .timeout(config.timeout())
            .build()
            .map_err(|e| JudgeError::InvalidConfig(format!("http client: {e}")))?;
        Ok(RemoteEndpoint {
            url,
            api_key,
            model_name: config.model_name.clone(),
            temperature: config.temperature,
            client,
        })
    }
}

impl TextSource for RemoteEndpoint {
    fn fetch(&self, prompt_body: &str, _attempt: u32) -> Result<String, TransportFailure> {
        let payload = serde_json::json!({
            "model": self.model_name,
            "temperature": self.temperature,
            "messages": [{"role": "user", "content": prompt_body}],
        });
        let response = self
            .client
            .post(&self.url)
            .bearer_auth(&self.api_key)
            .json(&payload)
            .send()
            .map_err(|e| TransportFailure {
                status: None,
                message: e.to_string(),
                timed_out: e.is_timeout(),
            })?;
        let status = response.status();
        let body = response.text().map_err(|e| TransportFailure {
            status: Some(status.as_u16()),
            message: e.to_string(),
            timed_out: e.is_timeout(),
        })?;
        if !status.is_success() {
            return Err(TransportFailure {
                status: Some(status.as_u16()),
                message: excerpt(&body),
                timed_out: false,
            });
        }
        let value: serde_json::Value = serde_json::from_str(&body).map_err(|e| TransportFailure {
            status: Some(status.as_u16()),
            message: format!("response is not JSON: {e}"),
            timed_out: false,
        })?;
        value["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_owned)
            .ok_or_else(|| TransportFailure {
                status: Some(status.as_u16()),
                message: format!(
                    "response JSON has no choices[0].message.content: {}",
                    excerpt(&body)
                ),
                timed_out: false,
            })
    }
}

fn excerpt(body: &str) -> String {
    let trimmed = body.trim();
    if trimmed.len() <= 200 {
        trimmed.to_string()
    } else {
        let mut end = 200;
        while !trimmed.is_char_boundary(end) {
            end -= 1;
        }
        format!("{}...", &trimmed[..end])
    }
}

/// Maps a 1-based list position onto the 1-5 scale the ranking prompt
/// asks for, spreading the batch evenly so both ends of the scale are
/// used: `ceil(5 * (k - position + 1) / k)`.
pub fn quintile_score(position: usize, k: usize) -> u8 {
    debug_assert!(k > 0 && (1..=k).contains(&position));
    let from_bottom = (k - position + 1) as u64;
    (5 * from_bottom).div_ceil(k as u64) as u8
}

/// Ranks a batch by latent quality `-(category rank) + gaussian(sigma)`
/// and emits the exact ranked-list text a well-behaved judge would print.
/// Ties in latent quality (always, when sigma is 0) break by poem id.
///
/// Deterministic for a fixed (batch id, noise seed); each batch draws
/// from its own noise substream.
///
/// # Panics
/// If the batch references poems outside the corpus.
pub fn synthetic_rank(
    batch: &Batch,
    corpus: &Corpus,
    noise: &NoiseModel,
    scale_policy: &dyn Fn(usize) -> u8,
) -> RawResponse {
    let mut gauss = GaussianSource::new(noise.seed, RANK_NOISE_TAG, batch.batch_id);
    let mut ranked: Vec<(&PoemId, f64)> = batch
        .poem_ids
        .iter()
        .map(|id| {
            let poem = corpus
                .poem(id)
                .unwrap_or_else(|| panic!("batch poem {id} not in corpus"));
            let latent = -(poem.category.rank() as f64) + noise.sigma * gauss.next();
            (id, latent)
        })
        .collect();
    ranked.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .expect("latent quality is always finite")
            .then_with(|| a.0.cmp(b.0))
    });

    let lines: Vec<String> = ranked
        .iter()
        .enumerate()
        .map(|(i, (id, _))| {
            let poem = corpus.poem(id).expect("checked above");
            format!(
                "{}. {} - {} : {}",
                i + 1,
                poem.author,
                poem.title,
                scale_policy(i + 1)
            )
        })
        .collect();

    let ids: Vec<&str> = batch.poem_ids.iter().map(String::as_str).collect();
    let mut hasher = Sha256::new();
    hasher.update(b"synthetic-rank|");
    hasher.update(batch.batch_id.to_string().as_bytes());
    hasher.update(b"|");
    hasher.update(ids.join(",").as_bytes());
    hasher.update(b"|");
    hasher.update(format!("{:?}|{}", noise.sigma, noise.seed).as_bytes());

    RawResponse {
        text: lines.join("\n"),
        attempt: 1,
        judge_id: format!("synthetic:sigma={}", noise.sigma),
        request_fingerprint: hex(&hasher.finalize()),
    }
}

/// Classifies one poem as its ground-truth category perturbed by noise:
/// the category rank plus `gaussian(sigma)`, rounded and clamped back to
/// a valid rank. `sigma = 0` always answers correctly.
///
/// # Panics
/// If the poem is not in the corpus.
pub fn synthetic_classify(poem_id: &PoemId, corpus: &Corpus, noise: &NoiseModel) -> RawResponse {
    let poem = corpus
        .poem(poem_id)
        .unwrap_or_else(|| panic!("poem {poem_id} not in corpus"));
    let mut stream = 0x9E37_79B9_7F4A_7C15u64;
    for b in poem_id.bytes() {
        stream = splitmix64(stream ^ u64::from(b));
    }
    let mut gauss = GaussianSource::new(noise.seed, CLASSIFY_NOISE_TAG, stream);
    let perturbed = poem.category.rank() as f64 + noise.sigma * gauss.next();
    let rank = (perturbed.round() as i64).clamp(1, 3) as u32;
    let category = Category::ALL
        .into_iter()
        .find(|c| c.rank() == rank)
        .expect("ranks 1-3 cover all categories");

    let mut hasher = Sha256::new();
    hasher.update(b"synthetic-classify|");
    hasher.update(poem_id.as_bytes());
    hasher.update(b"|");
    hasher.update(format!("{:?}|{}", noise.sigma, noise.seed).as_bytes());

    RawResponse {
        text: format!(
            "<reasoning>synthetic oracle, category rank {perturbed:.3}</reasoning>\n<category>{}</category>",
            category.label()
        ),
        attempt: 1,
        judge_id: format!("synthetic:sigma={}", noise.sigma),
        request_fingerprint: hex(&hasher.finalize()),
    }
}

/// Box-Muller Gaussian draws from a dedicated ChaCha8 substream, so the
/// sequence is identical across platforms and library versions.
struct GaussianSource {
    rng: ChaCha8Rng,
    spare: Option<f64>,
}

impl GaussianSource {
    fn new(seed: u64, tag: u64, index: u64) -> GaussianSource {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(splitmix64(splitmix64(tag).wrapping_add(index)));
        GaussianSource { rng, spare: None }
    }

    fn next(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        let mut u1 = 0.0;
        while u1 <= 0.0 {
            u1 = unit_f64(self.rng.next_u64());
        }
        let u2 = unit_f64(self.rng.next_u64());
        let radius = (-2.0 * u1.ln()).sqrt();
        let (sin, cos) = (std::f64::consts::TAU * u2).sin_cos();
        self.spare = Some(radius * sin);
        radius * cos
    }
}

/// Top 53 bits of `bits` as a float in [0, 1).
fn unit_f64(bits: u64) -> f64 {
    (bits >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

fn hex(digest: &[u8]) -> String {
    digest.iter().map(|b| format!("{b:02x}")).collect()
}
