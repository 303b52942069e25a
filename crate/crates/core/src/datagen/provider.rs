//! Chat providers, the on-disk reply cache and the retrying rating service.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::prompt::{build_prompt, parse_scores, RatingRequest};
use super::DatagenError;
use crate::board::{BoardState, Move};
use crate::eval::{line_mobility, territory, DistanceMode};

/// What a prompt is about, so offline providers can answer without reading it.
#[derive(Clone, Copy, Debug)]
pub enum ChatContext<'a> {
    Rating { after: &'a BoardState, mover: crate::board::Side },
    MovePick { state: &'a BoardState },
}

pub trait ChatProvider: Send + Sync {
    fn name(&self) -> &str;
    fn chat(&self, prompt: &str, ctx: ChatContext<'_>) -> Result<String, DatagenError>;
}

pub fn prompt_hash(prompt: &str) -> String {
    hex::encode(Sha256::digest(prompt.as_bytes()))
}

/// Offline stand-in for a language model. Ratings are adjacency territory
/// for the move and `1 − opponent line mobility` for the arrow, each with
/// uniform noise of amplitude `epsilon` seeded by the prompt.
#[derive(Clone, Debug)]
pub struct MockProvider {
    pub epsilon: f64,
    pub seed: u64,
}

impl Default for MockProvider {
    fn default() -> Self {
        MockProvider { epsilon: 0.1, seed: 0 }
    }
}

impl MockProvider {
    fn rng_for(&self, prompt: &str) -> ChaCha8Rng {
        let digest = Sha256::digest(prompt.as_bytes());
        let head = u64::from_le_bytes(digest[..8].try_into().expect("digest is 32 bytes"));
        ChaCha8Rng::seed_from_u64(head ^ self.seed)
    }

    /// Noise-free ratings.
    pub fn oracle(after: &BoardState, mover: crate::board::Side) -> (f64, f64) {
        (
            territory(after, mover, DistanceMode::KingMove),
            1.0 - line_mobility(after, mover.opponent()),
        )
    }

    fn noisy(&self, x: f64, rng: &mut ChaCha8Rng) -> f64 {
        if self.epsilon == 0.0 {
            return x;
        }
        (x + rng.random_range(-self.epsilon..=self.epsilon)).clamp(0.0, 1.0)
    }

    fn pick_move(&self, state: &BoardState, rng: &mut ChaCha8Rng) -> Option<Move> {
        let moves = state.legal_moves();
        if moves.is_empty() {
            return None;
        }
        let me = state.side_to_move();
        (0..moves.len().min(30))
            .map(|_| moves[rng.random_range(0..moves.len())])
            .map(|m| (territory(&state.apply_unchecked(&m), me, DistanceMode::KingMove), m))
            .max_by(|a, b| a.0.total_cmp(&b.0))
            .map(|(_, m)| m)
    }
}

impl ChatProvider for MockProvider {
    fn name(&self) -> &str {
        "mock"
    }

    fn chat(&self, prompt: &str, ctx: ChatContext<'_>) -> Result<String, DatagenError> {
        let mut rng = self.rng_for(prompt);
        match ctx {
            ChatContext::Rating { after, mover } => {
                let (m, p) = Self::oracle(after, mover);
                Ok(format!("[{:.4} {:.4}]", self.noisy(m, &mut rng), self.noisy(p, &mut rng)))
            }
            ChatContext::MovePick { state } => Ok(self.pick_move(state, &mut rng).map(|m| m.to_string()).unwrap_or_else(|| "pass".into())),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProviderConfig {
    pub endpoint_url: String,
    pub api_key_env: String,
    pub model: String,
    pub temperature: f64,
    pub max_retries: u32,
    pub timeout: Duration,
    pub requests_per_minute: u32,
    /// First retry delay; doubles per attempt.
    pub backoff: Duration,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        ProviderConfig {
            endpoint_url: "https://api.openai.com/v1/chat/completions".into(),
            api_key_env: "OPENAI_API_KEY".into(),
            model: "gpt-4o-mini".into(),
            temperature: 0.0,
            max_retries: 3,
            timeout: Duration::from_secs(60),
            requests_per_minute: 60,
            backoff: Duration::from_millis(500),
        }
    }
}

/// OpenAI-compatible chat-completions client. The key is read from the
/// environment on every call and never stored.
pub struct ApiProvider {
    config: ProviderConfig,
    agent: ureq::Agent,
}

impl ApiProvider {
    pub fn new(config: ProviderConfig) -> ApiProvider {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(config.timeout))
            .http_status_as_error(false)
            .build()
            .into();
        ApiProvider { config, agent }
    }
}

#[derive(Serialize)]
struct ChatMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: [ChatMessage<'a>; 1],
    temperature: f64,
}

impl ChatProvider for ApiProvider {
    fn name(&self) -> &str {
        &self.config.model
    }

    fn chat(&self, prompt: &str, _ctx: ChatContext<'_>) -> Result<String, DatagenError> {
        let key = std::env::var(&self.config.api_key_env)
            .map_err(|_| DatagenError::Auth(format!("environment variable {} is not set", self.config.api_key_env)))?;
        let body = ChatRequest {
            model: &self.config.model,
            messages: [ChatMessage {
                role: "user",
                content: prompt,
            }],
            temperature: self.config.temperature,
        };
        let mut resp = self
            .agent
            .post(&self.config.endpoint_url)
            .header("Authorization", &format!("Bearer {key}"))
            .send_json(&body)
            .map_err(|e| DatagenError::Transport(e.to_string()))?;
        match resp.status().as_u16() {
            200..=299 => {}
            401 | 403 => return Err(DatagenError::Auth(format!("status {}", resp.status()))),
            429 => return Err(DatagenError::RateLimited),
            s => return Err(DatagenError::Transport(format!("status {s}"))),
        }
        let v: serde_json::Value = resp
            .body_mut()
            .read_json()
            .map_err(|e| DatagenError::Transport(e.to_string()))?;
        v["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_owned)
            .ok_or_else(|| DatagenError::Transport("response has no message content".into()))
    }
}

/// Minimal token bucket: `capacity` tokens refilled evenly over a minute.
pub struct TokenBucket {
    capacity: f64,
    state: Mutex<(f64, Instant)>,
}

impl TokenBucket {
    pub fn per_minute(rate: u32) -> TokenBucket {
        let capacity = f64::from(rate.max(1));
        TokenBucket {
            capacity,
            state: Mutex::new((capacity, Instant::now())),
        }
    }

    pub fn acquire(&self) {
        loop {
            let wait = {
                let mut s = self.state.lock().expect("bucket lock");
                let now = Instant::now();
                let refill = now.duration_since(s.1).as_secs_f64() * self.capacity / 60.0;
                s.0 = (s.0 + refill).min(self.capacity);
                s.1 = now;
                if s.0 >= 1.0 {
                    s.0 -= 1.0;
                    return;
                }
                (1.0 - s.0) * 60.0 / self.capacity
            };
            std::thread::sleep(Duration::from_secs_f64(wait));
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub raw: String,
    pub move_score: f64,
    pub place_score: f64,
}

/// One JSON file per prompt hash.
#[derive(Clone, Debug)]
pub struct ReplyCache {
    dir: PathBuf,
}

impl ReplyCache {
    pub fn open(dir: &Path) -> Result<ReplyCache, DatagenError> {
        fs::create_dir_all(dir).map_err(DatagenError::io)?;
        Ok(ReplyCache { dir: dir.to_path_buf() })
    }

    fn path(&self, hash: &str) -> PathBuf {
        self.dir.join(format!("{hash}.json"))
    }

    pub fn get(&self, hash: &str) -> Option<CacheEntry> {
        let text = fs::read_to_string(self.path(hash)).ok()?;
        serde_json::from_str(&text).ok()
    }

    pub fn put(&self, hash: &str, entry: &CacheEntry) -> Result<(), DatagenError> {
        let tmp = self.dir.join(format!(".{hash}.tmp"));
        let mut f = fs::File::create(&tmp).map_err(DatagenError::io)?;
        f.write_all(serde_json::to_string(entry).expect("plain struct").as_bytes())
            .map_err(DatagenError::io)?;
        fs::rename(&tmp, self.path(hash)).map_err(DatagenError::io)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatingResponse {
    pub move_score: f64,
    pub place_score: f64,
    pub raw_text: String,
    pub provider: String,
    pub cached: bool,
}

/// Provider plus cache, rate limit and retries.
pub struct RatingService {
    provider: Box<dyn ChatProvider>,
    cache: Option<ReplyCache>,
    cache_writes: Mutex<()>,
    limiter: TokenBucket,
    max_retries: u32,
    backoff: Duration,
    network_calls: AtomicUsize,
}

impl RatingService {
    pub fn new(provider: Box<dyn ChatProvider>, cache: Option<ReplyCache>, config: &ProviderConfig) -> RatingService {
        RatingService {
            provider,
            cache,
            cache_writes: Mutex::new(()),
            limiter: TokenBucket::per_minute(config.requests_per_minute),
            max_retries: config.max_retries,
            backoff: config.backoff,
            network_calls: AtomicUsize::new(0),
        }
    }

    /// Mock provider without cache, limit or backoff.
    pub fn mock(provider: MockProvider) -> RatingService {
        let config = ProviderConfig {
            requests_per_minute: u32::MAX,
            backoff: Duration::ZERO,
            ..Default::default()
        };
        RatingService::new(Box::new(provider), None, &config)
    }

    pub fn provider_name(&self) -> &str {
        self.provider.name()
    }

    /// Provider calls made so far, retries included.
    pub fn network_calls(&self) -> usize {
        self.network_calls.load(Ordering::Relaxed)
    }

    fn call(&self, prompt: &str, ctx: ChatContext<'_>, attempt: u32) -> Result<String, DatagenError> {
        if attempt > 0 && !self.backoff.is_zero() {
            std::thread::sleep(self.backoff * 2u32.saturating_pow(attempt - 1));
        }
        self.limiter.acquire();
        self.network_calls.fetch_add(1, Ordering::Relaxed);
        self.provider.chat(prompt, ctx)
    }

    pub fn rate(&self, req: &RatingRequest, after: &BoardState) -> Result<RatingResponse, DatagenError> {
        let prompt = build_prompt(req);
        let hash = prompt_hash(&prompt);
        if let Some(hit) = self.cache.as_ref().and_then(|c| c.get(&hash)) {
            return Ok(RatingResponse {
                move_score: hit.move_score,
                place_score: hit.place_score,
                raw_text: hit.raw,
                provider: self.provider.name().to_owned(),
                cached: true,
            });
        }
        let ctx = ChatContext::Rating { after, mover: req.chess };
        let mut last = String::new();
        for attempt in 0..=self.max_retries {
            let text = match self.call(&prompt, ctx, attempt) {
                Ok(t) => t,
                Err(e @ DatagenError::Auth(_)) => return Err(e),
                Err(e) => {
                    last = e.to_string();
                    continue;
                }
            };
            match parse_scores(&text) {
                Ok((m, p)) => {
                    if let Some(cache) = &self.cache {
                        let _guard = self.cache_writes.lock().expect("cache lock");
                        cache.put(
                            &hash,
                            &CacheEntry {
                                raw: text.clone(),
                                move_score: m,
                                place_score: p,
                            },
                        )?;
                    }
                    return Ok(RatingResponse {
                        move_score: m,
                        place_score: p,
                        raw_text: text,
                        provider: self.provider.name().to_owned(),
                        cached: false,
                    });
                }
                Err(e) => last = e.to_string(),
            }
        }
        Err(DatagenError::RatingUnavailable(last))
    }

    /// Sends a raw prompt with retries on transport failures; no caching.
    pub fn chat(&self, prompt: &str, ctx: ChatContext<'_>) -> Result<String, DatagenError> {
        let mut last = String::new();
        for attempt in 0..=self.max_retries {
            match self.call(prompt, ctx, attempt) {
                Ok(t) => return Ok(t),
                Err(e @ DatagenError::Auth(_)) => return Err(e),
                Err(e) => last = e.to_string(),
            }
        }
        Err(DatagenError::RatingUnavailable(last))
    }
}
