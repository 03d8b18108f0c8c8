//! The two-stage ranking session.
//!
//! A [`Session`] owns every sample generated so far, the accumulated
//! preference pairs and the display currently awaiting a ranking. Each
//! submitted ranking is expanded into pairs, the surrogate is refit from
//! scratch on the current stage's samples and the next display is built
//! from a fresh acquisition batch, the current favourite and a few
//! resampled past candidates. After `t1` ranked batches the sparsity
//! pattern of the favourite is frozen and the search restarts over the
//! hypercube on that pattern for `t2` more batches.
//!
//! Sessions are deterministic given the config (including its seed), the
//! optional injected initial samples and the sequence of submissions, so a
//! recorded event log replays to an identical state.

use std::collections::{HashMap, HashSet};
use std::io::{BufRead, Write};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::acquisition::{optimize_batch, round_coefficients};
use crate::config::{RetainMode, SessionConfig};
use crate::error::{Error, Result};
use crate::simplex::{sample_hypercube, sample_initial};
use crate::surrogate::{fit_preferences, Points, PosteriorMixture};
use crate::types::{MergeCoefficients, PreferencePair, SampleId, SearchSpace, SparsityPattern};

/// Version tag written into transcripts.
pub const TRANSCRIPT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    Initial,
    Acquired,
    Retained,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub id: SampleId,
    /// Always full dimension `n`.
    pub alpha: MergeCoefficients,
    pub stage: u8,
    pub iteration_created: usize,
    pub origin: Origin,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingSubmission {
    /// Display token the ranking answers; checked when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub token: Option<u64>,
    pub displayed: Vec<SampleId>,
    /// Best first.
    pub ranked_top: Vec<SampleId>,
}

/// Candidates awaiting a ranking, ordered by descending surrogate estimate
/// when one is available.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisplayBatch {
    pub token: u64,
    pub stage: u8,
    pub iteration: usize,
    pub samples: Vec<SampleId>,
    /// Posterior mixture mean per displayed sample, aligned with `samples`.
    pub estimates: Vec<Option<f64>>,
    /// First display after the stage transition.
    pub transitioned: bool,
    /// Ranking this display advances the stage's iteration counter.
    pub counts_as_iteration: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Step {
    Display(DisplayBatch),
    Finished { best_id: SampleId, best: MergeCoefficients },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    Init {
        version: u32,
        config: SessionConfig,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        initial: Option<Vec<MergeCoefficients>>,
    },
    Display {
        batch: DisplayBatch,
        /// Samples created for this display.
        created: Vec<Sample>,
    },
    Submission {
        submission: RankingSubmission,
    },
    Transition {
        pattern: SparsityPattern,
        retained: Vec<SampleId>,
        dropped_pairs: usize,
    },
    Finished {
        best: SampleId,
    },
}

/// Diagnostics of the most recent surrogate refit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub stage: u8,
    pub utilities: Vec<(SampleId, f64)>,
    pub num_pairs: usize,
    pub num_draws: usize,
    pub acquisition_value: Option<f64>,
    pub used_fallback: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionState {
    pub config: SessionConfig,
    pub stage: u8,
    pub iteration: usize,
    pub samples: Vec<Sample>,
    pub pairs: Vec<PreferencePair>,
    pub top_id: Option<SampleId>,
    pub pattern: Option<SparsityPattern>,
    pub pending: Option<DisplayBatch>,
    pub finished: bool,
    /// Number of display tokens issued so far.
    pub version: u64,
}

/// One candidate for past-sample resampling.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PastCandidate {
    pub id: SampleId,
    pub utility: f64,
    pub comparisons: usize,
}

/// All pairs implied by a top-k ranking of a display: every ranked sample
/// beats every sample ranked below it and every unranked displayed sample.
pub fn expand_ranking(submission: &RankingSubmission) -> Result<Vec<PreferencePair>> {
    let displayed: HashSet<SampleId> = submission.displayed.iter().copied().collect();
    if displayed.len() != submission.displayed.len() {
        return Err(Error::InvalidSubmission("displayed ids contain duplicates".into()));
    }
    let ranked: HashSet<SampleId> = submission.ranked_top.iter().copied().collect();
    if ranked.len() != submission.ranked_top.len() {
        return Err(Error::InvalidSubmission("ranked ids contain duplicates".into()));
    }
    if let Some(id) = submission.ranked_top.iter().find(|id| !displayed.contains(id)) {
        return Err(Error::InvalidSubmission(format!(
            "ranked sample {id} was not displayed"
        )));
    }
    let top = &submission.ranked_top;
    let mut pairs = Vec::new();
    for (i, &better) in top.iter().enumerate() {
        for &worse in &top[i + 1..] {
            pairs.push(PreferencePair {
                preferred: better,
                other: worse,
            });
        }
    }
    for &better in top {
        for &worse in submission.displayed.iter().filter(|id| !ranked.contains(id)) {
            pairs.push(PreferencePair {
                preferred: better,
                other: worse,
            });
        }
    }
    Ok(pairs)
}

/// Exactly non-zero coordinates of `alpha`.
pub fn extract_sparsity(alpha: &MergeCoefficients) -> Result<SparsityPattern> {
    SparsityPattern::new(alpha.support(), alpha.len())
}

/// Selection probabilities of the past-sample softmax, in candidate order:
/// min-max normalized utilities at temperature 2 minus comparison counts
/// normalized to sum 1.
pub fn past_sampling_probabilities(candidates: &[PastCandidate]) -> Vec<f64> {
    if candidates.is_empty() {
        return Vec::new();
    }
    let lo = candidates.iter().map(|c| c.utility).fold(f64::INFINITY, f64::min);
    let hi = candidates.iter().map(|c| c.utility).fold(f64::NEG_INFINITY, f64::max);
    let total: usize = candidates.iter().map(|c| c.comparisons).sum();
    let logits: Vec<f64> = candidates
        .iter()
        .map(|c| {
            let u = if hi > lo { (c.utility - lo) / (hi - lo) } else { 0.0 };
            let count = if total > 0 {
                c.comparisons as f64 / total as f64
            } else {
                0.0
            };
            u / 2.0 - count
        })
        .collect();
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let z: f64 = w.iter().sum();
    w.into_iter().map(|v| v / z).collect()
}

/// Draws up to `m_past` distinct candidates by the past-sampling softmax.
/// Candidates are shuffled first so ties do not favour input order.
pub fn select_past_samples<R: Rng + ?Sized>(candidates: &[PastCandidate], m_past: usize, rng: &mut R) -> Vec<SampleId> {
    let mut pool = candidates.to_vec();
    pool.shuffle(rng);
    let probs = past_sampling_probabilities(&pool);
    let mut weights: Vec<f64> = probs;
    let mut chosen = Vec::new();
    while chosen.len() < m_past && weights.iter().any(|&w| w > 0.0) {
        let total: f64 = weights.iter().sum();
        let mut u = rng.random::<f64>() * total;
        let mut pick = weights.iter().rposition(|&w| w > 0.0).expect("positive weight");
        for (i, &w) in weights.iter().enumerate() {
            if w <= 0.0 {
                continue;
            }
            if u < w {
                pick = i;
                break;
            }
            u -= w;
        }
        chosen.push(pool[pick].id);
        weights[pick] = 0.0;
    }
    chosen
}

/// Samples that survive the stage transition under `mode`.
pub fn retained_samples<'a>(
    samples: impl IntoIterator<Item = &'a Sample>,
    pattern: &SparsityPattern,
    mode: RetainMode,
) -> Vec<SampleId> {
    samples
        .into_iter()
        .filter(|s| match mode {
            RetainMode::Subset => pattern.contains_support(s.alpha.as_slice()),
            RetainMode::Exact => s.alpha.support() == pattern.indices(),
        })
        .map(|s| s.id)
        .collect()
}

struct Fit {
    ids: Vec<SampleId>,
    utilities: Vec<f64>,
    posterior: PosteriorMixture,
}

pub struct Session {
    state: SessionState,
    rng: ChaCha8Rng,
    events: Vec<Event>,
    last_fit: Option<FitReport>,
    /// Samples already included in a display event.
    announced: usize,
}

impl Session {
    /// Starts a session with `n_init` initial samples drawn from the search
    /// space.
    pub fn start(config: SessionConfig) -> Result<Self> {
        Self::start_with(config, None)
    }

    /// Starts a session, optionally with caller-provided initial samples
    /// instead of random ones.
    pub fn start_with(config: SessionConfig, initial: Option<Vec<MergeCoefficients>>) -> Result<Self> {
        config.validate()?;
        if let Some(init) = &initial {
            if init.is_empty() {
                return Err(Error::InvalidInput("initial samples must not be empty".into()));
            }
            if let Some(bad) = init.iter().find(|a| a.len() != config.n) {
                return Err(Error::DimensionMismatch {
                    expected: config.n,
                    found: bad.len(),
                });
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let alphas = match &initial {
            Some(init) => init.clone(),
            None if config.cap >= config.n as f64 => sample_hypercube(config.n, config.tau, config.n_init, &mut rng),
            None => sample_initial(config.n, config.cap, config.tau, config.n_init, &mut rng),
        };
        let mut session = Self {
            state: SessionState {
                config: config.clone(),
                stage: 1,
                iteration: 0,
                samples: Vec::new(),
                pairs: Vec::new(),
                top_id: None,
                pattern: None,
                pending: None,
                finished: false,
                version: 0,
            },
            rng,
            events: vec![Event::Init {
                version: TRANSCRIPT_VERSION,
                config,
                initial,
            }],
            last_fit: None,
            announced: 0,
        };
        let ids = session.create(alphas, Origin::Initial);
        session.issue_display(ids, None, false, false);
        Ok(session)
    }

    /// Rebuilds a session from its event log, checking that every recorded
    /// event is reproduced exactly.
    pub fn replay(events: &[Event]) -> Result<Self> {
        let Some(Event::Init {
            version,
            config,
            initial,
        }) = events.first()
        else {
            return Err(Error::Transcript("log must start with an init event".into()));
        };
        if *version != TRANSCRIPT_VERSION {
            return Err(Error::Transcript(format!("unsupported transcript version {version}")));
        }
        let mut session = Self::start_with(config.clone(), initial.clone())?;
        for event in &events[1..] {
            if let Event::Submission { submission } = event {
                session.submit(submission)?;
            }
        }
        let produced = &session.events;
        if produced.len() < events.len() {
            return Err(Error::Transcript(format!(
                "log has {} events but replay produced {}",
                events.len(),
                produced.len()
            )));
        }
        if let Some(i) = (0..events.len()).find(|&i| produced[i] != events[i]) {
            return Err(Error::Transcript(format!("replay diverged at event {i}")));
        }
        Ok(session)
    }

    pub fn replay_jsonl<R: BufRead>(reader: R) -> Result<Self> {
        Self::replay(&read_transcript(reader)?)
    }

    pub fn state(&self) -> &SessionState {
        &self.state
    }

    pub fn config(&self) -> &SessionConfig {
        &self.state.config
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn last_fit(&self) -> Option<&FitReport> {
        self.last_fit.as_ref()
    }

    pub fn pending(&self) -> Option<&DisplayBatch> {
        self.state.pending.as_ref()
    }

    pub fn is_finished(&self) -> bool {
        self.state.finished
    }

    pub fn sample(&self, id: SampleId) -> Option<&Sample> {
        self.state.samples.get(id.0 as usize).filter(|s| s.id == id)
    }

    pub fn samples(&self) -> &[Sample] {
        &self.state.samples
    }

    /// Images requested so far: every sample ever generated.
    pub fn renders_requested(&self) -> usize {
        self.state.samples.len()
    }

    pub fn best_result(&self) -> Result<MergeCoefficients> {
        let id = self.state.top_id.ok_or(Error::NoRanking)?;
        Ok(self.sample(id).expect("top sample exists").alpha.clone())
    }

    pub fn write_transcript<W: Write>(&self, writer: W) -> Result<()> {
        write_transcript(&self.events, writer)
    }

    /// Validates `submission` against the pending display without applying
    /// it, returning the preference pairs it would add.
    pub fn check_submission(&self, submission: &RankingSubmission) -> Result<Vec<PreferencePair>> {
        if self.state.finished {
            return Err(Error::Finished);
        }
        let pending = self
            .state
            .pending
            .as_ref()
            .expect("unfinished session has a pending display");
        if let Some(token) = submission.token {
            if token != pending.token {
                return Err(Error::StaleSubmission {
                    given: token,
                    expected: pending.token,
                });
            }
        }
        let mut given: Vec<SampleId> = submission.displayed.clone();
        let mut expected = pending.samples.clone();
        given.sort();
        expected.sort();
        if given != expected {
            return Err(Error::StaleSubmission {
                given: submission.token.unwrap_or(0),
                expected: pending.token,
            });
        }
        let k = self.state.config.k.min(pending.samples.len());
        if submission.ranked_top.len() != k {
            return Err(Error::InvalidSubmission(format!(
                "expected {k} ranked samples, got {}",
                submission.ranked_top.len()
            )));
        }
        expand_ranking(submission)
    }

    /// Applies one ranking of the pending display.
    pub fn submit(&mut self, submission: &RankingSubmission) -> Result<Step> {
        let pairs = self.check_submission(submission)?;
        let pending = self.state.pending.clone().expect("checked above");

        self.events.push(Event::Submission {
            submission: submission.clone(),
        });
        self.state.pairs.extend(pairs);
        self.state.top_id = Some(submission.ranked_top[0]);
        self.state.pending = None;
        if pending.counts_as_iteration {
            self.state.iteration += 1;
        }

        let cfg = &self.state.config;
        if self.state.stage == 1 && self.state.iteration >= cfg.t1 {
            self.transition_stage()?;
        } else if self.state.stage == 2 && self.state.iteration >= cfg.t2 {
            return Ok(self.finish());
        } else {
            self.next_round()?;
        }
        Ok(Step::Display(self.state.pending.clone().expect("display issued")))
    }

    fn finish(&mut self) -> Step {
        let best_id = self.state.top_id.expect("ranked at least once");
        self.state.finished = true;
        self.events.push(Event::Finished { best: best_id });
        Step::Finished {
            best_id,
            best: self.sample(best_id).expect("top exists").alpha.clone(),
        }
    }

    /// The space the optimizer searches in the current stage, in model
    /// coordinates.
    pub fn search_space(&self) -> SearchSpace {
        let cfg = &self.state.config;
        match &self.state.pattern {
            Some(p) if self.state.stage == 2 => SearchSpace::Hypercube { n: p.len() },
            _ if cfg.cap >= cfg.n as f64 => SearchSpace::Hypercube { n: cfg.n },
            _ => SearchSpace::CappedSimplex { n: cfg.n, cap: cfg.cap },
        }
    }

    fn model_input(&self, alpha: &MergeCoefficients) -> Vec<f64> {
        match &self.state.pattern {
            Some(p) if self.state.stage == 2 => p.project(alpha.as_slice()),
            _ => alpha.as_slice().to_vec(),
        }
    }

    fn embed(&self, reduced: Vec<f64>) -> MergeCoefficients {
        match &self.state.pattern {
            Some(p) if self.state.stage == 2 => MergeCoefficients::clamped(p.embed(&reduced, self.state.config.n)),
            _ => MergeCoefficients::clamped(reduced),
        }
    }

    fn working_set(&self) -> Vec<SampleId> {
        self.state
            .samples
            .iter()
            .filter(|s| s.stage == self.state.stage)
            .map(|s| s.id)
            .collect()
    }

    /// Refits utilities and hyperposterior on the current stage's samples.
    fn fit(&mut self) -> Result<Option<Fit>> {
        let ids = self.working_set();
        if ids.len() < 2 {
            return Ok(None);
        }
        let index: HashMap<SampleId, usize> = ids.iter().enumerate().map(|(i, &id)| (id, i)).collect();
        let pairs: Vec<(usize, usize)> = self
            .state
            .pairs
            .iter()
            .filter_map(|p| Some((*index.get(&p.preferred)?, *index.get(&p.other)?)))
            .collect();
        let rows: Vec<Vec<f64>> = ids
            .iter()
            .map(|&id| self.model_input(&self.sample(id).expect("working sample").alpha))
            .collect();
        let x = Points::from_rows(&rows)?;
        let (posterior, utilities) = fit_preferences(
            x,
            &pairs,
            self.state.config.sigma_pref,
            &self.state.config.sampler(),
            &mut self.rng,
        )?;
        self.last_fit = Some(FitReport {
            stage: self.state.stage,
            utilities: ids.iter().copied().zip(utilities.iter().copied()).collect(),
            num_pairs: pairs.len(),
            num_draws: posterior.num_draws(),
            acquisition_value: None,
            used_fallback: false,
        });
        Ok(Some(Fit {
            ids,
            utilities,
            posterior,
        }))
    }

    /// `count` new points in model coordinates, by acquisition when a fit
    /// is available and by random draws from the space otherwise.
    fn acquire(&mut self, count: usize, fit: Option<&Fit>) -> Result<Vec<Vec<f64>>> {
        if count == 0 {
            return Ok(Vec::new());
        }
        let space = self.search_space();
        let Some(fit) = fit else {
            return Ok(self.random_points(count));
        };
        let mut acq = self.state.config.acquisition();
        acq.q = count;
        let out = optimize_batch(&fit.posterior, &space, &acq, &mut self.rng)?;
        if let Some(report) = self.last_fit.as_mut() {
            report.acquisition_value = Some(out.value);
            report.used_fallback = out.used_fallback;
        }
        Ok(out.batch.into_iter().map(MergeCoefficients::into_vec).collect())
    }

    fn random_points(&mut self, count: usize) -> Vec<Vec<f64>> {
        let space = self.search_space();
        let cfg = self.state.config.clone();
        let round_eps = cfg.acquisition().round_eps;
        let draws = match space {
            SearchSpace::CappedSimplex { n, cap } => sample_initial(n, cap, cfg.tau, count, &mut self.rng),
            SearchSpace::Hypercube { n } if self.state.stage == 1 => sample_hypercube(n, cfg.tau, count, &mut self.rng),
            SearchSpace::Hypercube { n } => (0..count)
                .map(|_| {
                    let mut a: Vec<f64> = (0..n).map(|_| self.rng.random::<f64>()).collect();
                    round_coefficients(&mut a, &space, round_eps);
                    MergeCoefficients::clamped(a)
                })
                .collect(),
        };
        draws.into_iter().map(MergeCoefficients::into_vec).collect()
    }

    fn create(&mut self, alphas: Vec<MergeCoefficients>, origin: Origin) -> Vec<SampleId> {
        alphas
            .into_iter()
            .map(|alpha| {
                let id = SampleId(self.state.samples.len() as u64);
                self.state.samples.push(Sample {
                    id,
                    alpha,
                    stage: self.state.stage,
                    iteration_created: self.state.iteration,
                    origin,
                });
                id
            })
            .collect()
    }

    fn past_samples(&mut self, fit: Option<&Fit>) -> Vec<SampleId> {
        let m_past = self.state.config.m_past;
        let Some(fit) = fit else {
            return Vec::new();
        };
        let mut counts: HashMap<SampleId, usize> = HashMap::new();
        for p in &self.state.pairs {
            *counts.entry(p.preferred).or_default() += 1;
            *counts.entry(p.other).or_default() += 1;
        }
        let candidates: Vec<PastCandidate> = fit
            .ids
            .iter()
            .zip(&fit.utilities)
            .filter(|(id, _)| Some(**id) != self.state.top_id)
            .map(|(&id, &utility)| PastCandidate {
                id,
                utility,
                comparisons: counts.get(&id).copied().unwrap_or(0),
            })
            .collect();
        select_past_samples(&candidates, m_past, &mut self.rng)
    }

    fn next_round(&mut self) -> Result<()> {
        let fit = self.fit()?;
        let q = self.state.config.q;
        let points = self.acquire(q, fit.as_ref())?;
        let alphas = points.into_iter().map(|p| self.embed(p)).collect();
        let mut ids = self.create(alphas, Origin::Acquired);
        ids.push(self.state.top_id.expect("ranked"));
        let past = self.past_samples(fit.as_ref());
        ids.extend(past);
        self.issue_display(ids, fit.as_ref(), false, true);
        Ok(())
    }

    fn transition_stage(&mut self) -> Result<()> {
        let top = self.state.top_id.expect("ranked");
        let pattern = extract_sparsity(&self.sample(top).expect("top exists").alpha)?;
        let mode = self.state.config.retain;
        let retained = retained_samples(self.state.samples.iter().filter(|s| s.stage == 1), &pattern, mode);
        let keep: HashSet<SampleId> = retained.iter().copied().collect();
        for s in self.state.samples.iter_mut().filter(|s| keep.contains(&s.id)) {
            s.stage = 2;
            s.origin = Origin::Retained;
        }
        let before = self.state.pairs.len();
        self.state
            .pairs
            .retain(|p| keep.contains(&p.preferred) && keep.contains(&p.other));
        let dropped_pairs = before - self.state.pairs.len();
        self.state.pattern = Some(pattern.clone());
        self.state.stage = 2;
        self.state.iteration = 0;
        self.events.push(Event::Transition {
            pattern,
            retained,
            dropped_pairs,
        });

        let cfg = self.state.config.clone();
        if cfg.strict_budget {
            // Re-initialization draws replace part of the first stage-2 batch.
            let reinit = cfg.reinit_samples.min(cfg.q);
            let fresh = self.random_points(reinit);
            let fit = self.fit()?;
            let acquired = self.acquire(cfg.q - reinit, fit.as_ref())?;
            let fresh = fresh.into_iter().map(|p| self.embed(p)).collect();
            let mut ids = self.create(fresh, Origin::Initial);
            let acquired = acquired.into_iter().map(|p| self.embed(p)).collect();
            ids.extend(self.create(acquired, Origin::Acquired));
            ids.push(top);
            let past = self.past_samples(fit.as_ref());
            ids.extend(past);
            self.issue_display(ids, fit.as_ref(), true, true);
        } else {
            let fresh = self.random_points(cfg.reinit_samples);
            let fresh = fresh.into_iter().map(|p| self.embed(p)).collect();
            let mut ids = self.create(fresh, Origin::Initial);
            ids.push(top);
            self.issue_display(ids, None, true, false);
        }
        Ok(())
    }

    fn issue_display(&mut self, ids: Vec<SampleId>, fit: Option<&Fit>, transitioned: bool, counts_as_iteration: bool) {
        let created = self.state.samples[self.announced..].to_vec();
        self.announced = self.state.samples.len();
        let mut entries: Vec<(SampleId, Option<f64>)> = ids
            .iter()
            .map(|&id| {
                let est = fit.and_then(|f| {
                    let input = self.model_input(&self.sample(id).expect("sample").alpha);
                    f.posterior.mean_variance(&input).ok().map(|(m, _)| m)
                });
                (id, est)
            })
            .collect();
        // Stable sort keeps construction order for ties and missing estimates.
        entries.sort_by(|a, b| match (a.1, b.1) {
            (Some(x), Some(y)) => y.total_cmp(&x),
            (Some(_), None) => std::cmp::Ordering::Less,
            (None, Some(_)) => std::cmp::Ordering::Greater,
            (None, None) => std::cmp::Ordering::Equal,
        });
        self.state.version += 1;
        let batch = DisplayBatch {
            token: self.state.version,
            stage: self.state.stage,
            iteration: self.state.iteration,
            samples: entries.iter().map(|e| e.0).collect(),
            estimates: entries.iter().map(|e| e.1).collect(),
            transitioned,
            counts_as_iteration,
        };
        self.events.push(Event::Display {
            batch: batch.clone(),
            created,
        });
        self.state.pending = Some(batch);
    }
}

pub fn write_transcript<W: Write>(events: &[Event], mut writer: W) -> Result<()> {
    for e in events {
        serde_json::to_writer(&mut writer, e).map_err(|e| Error::Transcript(e.to_string()))?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_transcript<R: BufRead>(reader: R) -> Result<Vec<Event>> {
    let mut events = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        events.push(serde_json::from_str(&line).map_err(|e| Error::Transcript(format!("line {}: {e}", i + 1)))?);
    }
    Ok(events)
}
