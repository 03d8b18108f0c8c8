use std::collections::HashMap;
use std::hash::{DefaultHasher, Hash, Hasher};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, MutexGuard, RwLock};
use std::time::{SystemTime, UNIX_EPOCH};

use mergebo_core::session::Sample;
use mergebo_core::{DisplayBatch, Event, MergeCoefficients, RenderSpec, Renderer, SampleId, Session, SessionConfig};
use serde::{Deserialize, Serialize};

use crate::config::ServiceConfig;
use crate::error::{ApiError, Result};
use crate::generator::Generator;
use crate::store;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Candidates rendered by the built-in procedural renderer.
    #[default]
    Procedural,
    /// Candidates produced by the configured generator.
    External,
    /// Procedural rendering plus a target image to match.
    Matching,
}

/// Everything needed to rebuild a session besides its transcript.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionRecordEnvelope {
    pub session_id: String,
    /// Seconds since the Unix epoch.
    pub created_at: u64,
    pub mode: Mode,
    pub config: SessionConfig,
    pub prompt: String,
    pub render: RenderSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<MergeCoefficients>,
    #[serde(default)]
    pub finalized: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Status {
    Ready,
    Computing,
    Failed(String),
}

#[derive(Debug, Clone)]
pub enum ExternalImage {
    Ready(Arc<Vec<u8>>),
    Failed(String),
}

/// Mutable session state. The engine itself is moved out while a
/// submission is processed, so readers work from the mirrored fields.
pub struct Inner {
    pub session: Option<Session>,
    pub status: Status,
    pub finalized: bool,
    pub samples: Vec<Sample>,
    pub events: Vec<Event>,
    pub stage: u8,
    pub iteration: usize,
    pub pending: Option<DisplayBatch>,
    pub finished: bool,
    pub best: Option<(SampleId, MergeCoefficients)>,
    pub external: HashMap<SampleId, ExternalImage>,
}

impl Inner {
    fn new(session: Session, finalized: bool) -> Self {
        let mut inner = Self {
            session: None,
            status: Status::Ready,
            finalized,
            samples: Vec::new(),
            events: Vec::new(),
            stage: 1,
            iteration: 0,
            pending: None,
            finished: false,
            best: None,
            external: HashMap::new(),
        };
        inner.restore(session);
        inner
    }

    /// Puts the engine back and refreshes the mirror.
    pub fn restore(&mut self, session: Session) {
        let state = session.state();
        self.samples = state.samples.clone();
        self.events = session.events().to_vec();
        self.stage = state.stage;
        self.iteration = state.iteration;
        self.pending = if self.finalized { None } else { state.pending.clone() };
        self.finished = state.finished || self.finalized;
        self.best = state
            .top_id
            .and_then(|id| session.sample(id).map(|s| (id, s.alpha.clone())));
        self.session = Some(session);
    }

    pub fn sample(&self, id: SampleId) -> Option<&Sample> {
        self.samples.get(id.0 as usize).filter(|s| s.id == id)
    }
}

pub struct SessionEntry {
    pub envelope: Mutex<SessionRecordEnvelope>,
    pub id: String,
    pub mode: Mode,
    pub prompt: String,
    pub render: RenderSpec,
    pub target: Option<MergeCoefficients>,
    pub k: usize,
    /// Present for procedural and matching sessions.
    pub renderer: Option<Arc<Renderer>>,
    inner: Mutex<Inner>,
}

impl SessionEntry {
    pub fn new(envelope: SessionRecordEnvelope, session: Session) -> Result<Self> {
        let renderer = match envelope.mode {
            Mode::External => None,
            Mode::Procedural | Mode::Matching => Some(Arc::new(Renderer::new(envelope.config.n, envelope.render)?)),
        };
        Ok(Self {
            id: envelope.session_id.clone(),
            mode: envelope.mode,
            prompt: envelope.prompt.clone(),
            render: envelope.render,
            target: envelope.target.clone(),
            k: envelope.config.k,
            renderer,
            inner: Mutex::new(Inner::new(session, envelope.finalized)),
            envelope: Mutex::new(envelope),
        })
    }

    pub fn lock(&self) -> MutexGuard<'_, Inner> {
        self.inner.lock().unwrap_or_else(|e| e.into_inner())
    }
}

/// Counts procedural renders and external generator calls.
#[derive(Debug, Default)]
pub struct Counters {
    pub renders: AtomicU64,
    pub cache_hits: AtomicU64,
    pub generator_calls: AtomicU64,
}

pub struct AppState {
    pub config: ServiceConfig,
    pub generator: Option<Generator>,
    sessions: RwLock<HashMap<String, Arc<SessionEntry>>>,
    cache: Mutex<HashMap<u64, Arc<Vec<u8>>>>,
    pub counters: Counters,
}

pub fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

fn cache_key(spec: &RenderSpec, n: usize, alpha: &[f64]) -> u64 {
    let mut h = DefaultHasher::new();
    (spec.width, spec.height, spec.prompt_seed, spec.collection_seed, n).hash(&mut h);
    for v in alpha {
        v.to_bits().hash(&mut h);
    }
    h.finish()
}

impl AppState {
    /// Builds the state and recovers persisted sessions from the data
    /// directory, if one is configured.
    pub fn new(config: ServiceConfig) -> Result<Self> {
        let generator = config
            .generator_url
            .clone()
            .map(|url| Generator::new(url, config.generator_timeout))
            .transpose()?;
        let state = Self {
            generator,
            sessions: RwLock::new(HashMap::new()),
            cache: Mutex::new(HashMap::new()),
            counters: Counters::default(),
            config,
        };
        if let Some(dir) = state.config.data_dir.clone() {
            for (envelope, session) in store::load_all(&dir)? {
                let entry = SessionEntry::new(envelope, session)?;
                state.write_sessions().insert(entry.id.clone(), Arc::new(entry));
            }
        }
        Ok(state)
    }

    fn write_sessions(&self) -> std::sync::RwLockWriteGuard<'_, HashMap<String, Arc<SessionEntry>>> {
        self.sessions.write().unwrap_or_else(|e| e.into_inner())
    }

    pub fn session(&self, id: &str) -> Result<Arc<SessionEntry>> {
        self.sessions
            .read()
            .unwrap_or_else(|e| e.into_inner())
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::NotFound(format!("unknown session `{id}`")))
    }

    pub fn session_count(&self) -> usize {
        self.sessions.read().unwrap_or_else(|e| e.into_inner()).len()
    }

    /// Registers a new session under a fresh id and persists its envelope.
    pub fn insert(&self, mut envelope: SessionRecordEnvelope, session: Session) -> Result<Arc<SessionEntry>> {
        let mut sessions = self.write_sessions();
        let id = loop {
            let id = format!("s{:016x}", rand::random::<u64>());
            if !sessions.contains_key(&id) {
                break id;
            }
        };
        envelope.session_id = id.clone();
        self.persist(&envelope, &session)?;
        let entry = Arc::new(SessionEntry::new(envelope, session)?);
        sessions.insert(id, entry.clone());
        Ok(entry)
    }

    pub fn persist(&self, envelope: &SessionRecordEnvelope, session: &Session) -> Result<()> {
        if let Some(dir) = &self.config.data_dir {
            store::save_envelope(dir, envelope)?;
            store::save_transcript(dir, &envelope.session_id, session)?;
        }
        Ok(())
    }

    pub fn persist_transcript(&self, id: &str, session: &Session) -> Result<()> {
        match &self.config.data_dir {
            Some(dir) => store::save_transcript(dir, id, session),
            None => Ok(()),
        }
    }

    pub fn persist_envelope(&self, envelope: &SessionRecordEnvelope) -> Result<()> {
        match &self.config.data_dir {
            Some(dir) => store::save_envelope(dir, envelope),
            None => Ok(()),
        }
    }

    /// PNG of `alpha`, rendered at most once per (spec, coefficients).
    pub fn render_png(&self, renderer: &Renderer, alpha: &[f64]) -> Result<Arc<Vec<u8>>> {
        let key = cache_key(renderer.spec(), renderer.collection_size(), alpha);
        if let Some(png) = self.cache.lock().unwrap_or_else(|e| e.into_inner()).get(&key) {
            self.counters.cache_hits.fetch_add(1, Ordering::Relaxed);
            return Ok(png.clone());
        }
        let png = Arc::new(renderer.render(alpha)?.to_png());
        self.counters.renders.fetch_add(1, Ordering::Relaxed);
        self.cache
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .entry(key)
            .or_insert_with(|| png.clone());
        Ok(png)
    }

    pub fn cache_len(&self) -> usize {
        self.cache.lock().unwrap_or_else(|e| e.into_inner()).len()
    }
}
