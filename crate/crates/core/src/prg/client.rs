//! Text generation and embedding clients: a deterministic offline stub and a
//! minimal JSON-over-HTTP client.
//!
//! Wire contract of the HTTP client:
//! - `POST {endpoint}/generate` with `{"model", "prompt"}` answers `{"text"}`.
//! - `POST {endpoint}/embed` with `{"model", "text"}` answers `{"embedding": [f64]}`.

use std::time::Duration;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::cache::DescriptionCache;
use super::prompt::digest;
use crate::error::{ensure, Error, Result};

pub const DEFAULT_EMBED_DIM: usize = 1024;

/// Produces a description for a prompt. Errors are plain messages; callers
/// attach the prompt digest.
pub trait TextGenerator {
    fn generate(&mut self, prompt: &str) -> std::result::Result<String, String>;
}

pub trait TextEmbedder {
    fn dim(&self) -> usize;
    fn embed(&mut self, text: &str) -> std::result::Result<Vec<f64>, String>;
}

/// Cache-first description generation. A miss costs exactly one generator call.
pub fn generate_description(
    generator: &mut dyn TextGenerator,
    prompt: &str,
    cache: &mut DescriptionCache,
) -> Result<String> {
    let key = digest(prompt);
    if let Some(text) = cache.lookup(&key) {
        return Ok(text.to_owned());
    }
    let text = generator.generate(prompt).map_err(|message| Error::Client {
        digest: key.clone(),
        message,
    })?;
    cache.insert(&key, &text)?;
    Ok(text)
}

/// Embeds `text`, checking the width and finiteness of the result.
pub fn embed_text(embedder: &mut dyn TextEmbedder, text: &str) -> Result<Vec<f64>> {
    ensure!(!text.is_empty(), InvalidArgument, "cannot embed empty text");
    let v = embedder.embed(text).map_err(|message| Error::Client {
        digest: digest(text),
        message,
    })?;
    ensure!(
        v.len() == embedder.dim(),
        Shape,
        "embedding has {} entries, expected {}",
        v.len(),
        embedder.dim()
    );
    ensure!(v.iter().all(|x| x.is_finite()), Validation, "embedding has non-finite entries");
    Ok(v)
}

/// Offline generator: a summary built from the prompt's data lines.
#[derive(Clone, Copy, Debug, Default)]
pub struct StubGenerator;

impl TextGenerator for StubGenerator {
    fn generate(&mut self, prompt: &str) -> std::result::Result<String, String> {
        let facts: Vec<&str> = prompt
            .lines()
            .skip(1)
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .collect();
        Ok(format!("[stub {}] {}", &digest(prompt)[..12], facts.join("; ")))
    }
}

/// Offline embedder: a unit-norm Gaussian vector seeded by the SHA-256 of the text.
#[derive(Clone, Copy, Debug)]
pub struct StubEmbedder {
    dim: usize,
}

impl StubEmbedder {
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "embedding width must be positive");
        Self { dim }
    }
}

impl Default for StubEmbedder {
    fn default() -> Self {
        Self::new(DEFAULT_EMBED_DIM)
    }
}

impl TextEmbedder for StubEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&mut self, text: &str) -> std::result::Result<Vec<f64>, String> {
        let seed: [u8; 32] = Sha256::digest(text.as_bytes()).into();
        let mut rng = ChaCha8Rng::from_seed(seed);
        let mut v: Vec<f64> = (0..self.dim).map(|_| StandardNormal.sample(&mut rng)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.iter_mut().for_each(|x| *x /= n);
        Ok(v)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct HttpClientConfig {
    pub endpoint: String,
    pub model: String,
    pub timeout_secs: u64,
    pub retries: usize,
    pub embed_dim: usize,
}

impl Default for HttpClientConfig {
    fn default() -> Self {
        Self {
            endpoint: "http://127.0.0.1:8080".into(),
            model: "default".into(),
            timeout_secs: 60,
            retries: 2,
            embed_dim: DEFAULT_EMBED_DIM,
        }
    }
}

impl HttpClientConfig {
    /// Overrides fields from `GAMEREC_LLM_{ENDPOINT,MODEL,TIMEOUT,RETRIES,EMBED_DIM}`.
    pub fn with_env(mut self) -> Result<Self> {
        fn var(name: &str) -> Option<String> {
            std::env::var(name).ok().filter(|v| !v.is_empty())
        }
        fn num<N: std::str::FromStr>(name: &str, v: String) -> Result<N> {
            v.parse()
                .map_err(|_| Error::InvalidArgument(format!("{name}: cannot parse `{v}`")))
        }
        if let Some(v) = var("GAMEREC_LLM_ENDPOINT") {
            self.endpoint = v;
        }
        if let Some(v) = var("GAMEREC_LLM_MODEL") {
            self.model = v;
        }
        if let Some(v) = var("GAMEREC_LLM_TIMEOUT") {
            self.timeout_secs = num("GAMEREC_LLM_TIMEOUT", v)?;
        }
        if let Some(v) = var("GAMEREC_LLM_RETRIES") {
            self.retries = num("GAMEREC_LLM_RETRIES", v)?;
        }
        if let Some(v) = var("GAMEREC_LLM_EMBED_DIM") {
            self.embed_dim = num("GAMEREC_LLM_EMBED_DIM", v)?;
        }
        Ok(self)
    }
}

#[derive(Serialize)]
struct GenerateRequest<'a> {
    model: &'a str,
    prompt: &'a str,
}

#[derive(Deserialize)]
struct GenerateResponse {
    text: String,
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    model: &'a str,
    text: &'a str,
}

#[derive(Deserialize)]
struct EmbedResponse {
    embedding: Vec<f64>,
}

/// Blocking client for the JSON contract above. Each call is attempted
/// `1 + retries` times.
pub struct HttpClient {
    agent: ureq::Agent,
    config: HttpClientConfig,
}

impl HttpClient {
    pub fn new(config: HttpClientConfig) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(config.timeout_secs)))
            .build()
            .into();
        Self { agent, config }
    }

    pub fn config(&self) -> &HttpClientConfig {
        &self.config
    }

    fn post<Req: Serialize, Resp: serde::de::DeserializeOwned>(
        &self,
        route: &str,
        body: &Req,
    ) -> std::result::Result<Resp, String> {
        let url = format!("{}/{route}", self.config.endpoint.trim_end_matches('/'));
        let mut last = String::new();
        for _ in 0..=self.config.retries {
            let attempt = self
                .agent
                .post(&url)
                .send_json(body)
                .and_then(|mut r| r.body_mut().read_json::<Resp>());
            match attempt {
                Ok(v) => return Ok(v),
                Err(e) => last = format!("{url}: {e}"),
            }
        }
        Err(format!("{} attempt(s) failed, last: {last}", self.config.retries + 1))
    }
}

impl TextGenerator for HttpClient {
    fn generate(&mut self, prompt: &str) -> std::result::Result<String, String> {
        let r: GenerateResponse = self.post(
            "generate",
            &GenerateRequest {
                model: &self.config.model,
                prompt,
            },
        )?;
        Ok(r.text)
    }
}

impl TextEmbedder for HttpClient {
    fn dim(&self) -> usize {
        self.config.embed_dim
    }

    fn embed(&mut self, text: &str) -> std::result::Result<Vec<f64>, String> {
        let r: EmbedResponse = self.post(
            "embed",
            &EmbedRequest {
                model: &self.config.model,
                text,
            },
        )?;
        Ok(r.embedding)
    }
}
