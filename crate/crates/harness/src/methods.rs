//! Method runners for the matching task: the two-stage engine, its
//! ablations, and the line-search and gallery baselines.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use mergebo_core::simplex::sample_initial;
use mergebo_core::{
    expand_ranking, fit_preferences, optimize_batch, MergeCoefficients, Points, PosteriorMixture, RankingSubmission,
    SampleId, SearchSpace, Session, SessionConfig, Step,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};
use crate::metrics::f1_active;
use crate::oracle::{rank_scored, Oracle};
use crate::records::RunRecord;
use crate::suite::TestCase;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Ours,
    Gallery,
    CyclicCd,
    RandomCd,
    RandomDir,
    /// Ours with the simplex cap lifted to `n`.
    OursCapOff,
    /// Ours with top-1 feedback and no past samples in the display.
    OursTop1NoPast,
}

impl Method {
    pub const MAIN: [Method; 5] = [
        Method::Ours,
        Method::Gallery,
        Method::CyclicCd,
        Method::RandomCd,
        Method::RandomDir,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Method::Ours => "ours",
            Method::Gallery => "gallery",
            Method::CyclicCd => "cyclic_cd",
            Method::RandomCd => "random_cd",
            Method::RandomDir => "random_dir",
            Method::OursCapOff => "ours_cap_off",
            Method::OursTop1NoPast => "ours_top1_no_past",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self> {
        [
            Method::Ours,
            Method::Gallery,
            Method::CyclicCd,
            Method::RandomCd,
            Method::RandomDir,
            Method::OursCapOff,
            Method::OursTop1NoPast,
        ]
        .into_iter()
        .find(|m| m.name() == s)
        .ok_or_else(|| HarnessError::Usage(format!("unknown method `{s}`")))
    }
}

/// Settings shared by every run. The engine configuration also fixes the
/// budget for the baselines: `n_init` initial renders, then `t1 + t2`
/// iterations of `q` renders each.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct RunOptions {
    pub engine: SessionConfig,
    /// Replace the first initial sample by the ground truth.
    pub plant_target: bool,
}

impl RunOptions {
    pub fn iterations(&self) -> usize {
        self.engine.t1 + self.engine.t2
    }

    pub fn budget(&self) -> usize {
        self.engine.n_init + self.iterations() * self.engine.q
    }
}

fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministic per-run seed from the case, the repetition seed and a salt.
pub fn run_seed(case_id: &str, seed: u64, salt: u64) -> u64 {
    let h = case_id.bytes().fold(0xCBF2_9CE4_8422_2325u64, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0100_0000_01B3)
    });
    mix(mix(h ^ seed) ^ salt)
}

/// The initial samples every method starts from for a given case and seed.
pub fn shared_initial(case: &TestCase, seed: u64, options: &RunOptions) -> Vec<MergeCoefficients> {
    let mut rng = ChaCha8Rng::seed_from_u64(run_seed(&case.case_id, seed, 0));
    let cfg = &options.engine;
    let mut init = sample_initial(case.n, cfg.cap, cfg.tau, cfg.n_init, &mut rng);
    if options.plant_target {
        init[0] = case.alpha_gt.clone();
    }
    init
}

/// Counts renders and keeps the running best and the per-iteration records.
struct Tracker<'a> {
    case: &'a TestCase,
    oracle: &'a Oracle,
    method: Method,
    seed: u64,
    budget: usize,
    started: Instant,
    renders: usize,
    best: Option<(f64, Vec<f64>)>,
    records: Vec<RunRecord>,
}

impl<'a> Tracker<'a> {
    fn new(case: &'a TestCase, oracle: &'a Oracle, method: Method, seed: u64, budget: usize) -> Self {
        Self {
            case,
            oracle,
            method,
            seed,
            budget,
            started: Instant::now(),
            renders: 0,
            best: None,
            records: Vec::new(),
        }
    }

    /// Renders `alpha` once and returns its similarity.
    fn render(&mut self, alpha: &[f64]) -> Result<f64> {
        self.renders += 1;
        if self.renders > self.budget {
            return Err(self.overrun());
        }
        let s = self.oracle.similarity(alpha)?;
        if self.best.as_ref().is_none_or(|(b, _)| s > *b) {
            self.best = Some((s, alpha.to_vec()));
        }
        Ok(s)
    }

    fn overrun(&self) -> HarnessError {
        HarnessError::Budget {
            method: self.method.name().to_string(),
            used: self.renders,
            budget: self.budget,
        }
    }

    fn record(&mut self, iteration: usize) {
        let (sim, alpha) = self.best.clone().expect("record after the first render");
        let support: Vec<usize> = (0..alpha.len()).filter(|&i| alpha[i] != 0.0).collect();
        self.records.push(RunRecord {
            case_id: self.case.case_id.clone(),
            method: self.method.name().to_string(),
            seed: self.seed,
            iteration,
            best_similarity: sim,
            f1: f1_active(&support, &self.case.gt_support()),
            num_active: support.len(),
            renders_used: self.renders,
            wall_ms: self.started.elapsed().as_millis() as u64,
        });
    }

    fn finish(self) -> Result<Vec<RunRecord>> {
        if self.renders != self.budget {
            return Err(self.overrun());
        }
        Ok(self.records)
    }
}

/// Runs one method on one case and returns its running-best curve,
/// iteration 0 being the initial samples.
pub fn run_method(method: Method, case: &TestCase, seed: u64, options: &RunOptions) -> Result<Vec<RunRecord>> {
    if !options.engine.strict_budget {
        return Err(HarnessError::Usage("the harness requires strict_budget".into()));
    }
    let oracle = Oracle::for_case(case)?;
    let mut tracker = Tracker::new(case, &oracle, method, seed, options.budget());
    let mut rng = ChaCha8Rng::seed_from_u64(run_seed(&case.case_id, seed, 1 + method as u64));
    match method {
        Method::Ours | Method::OursCapOff | Method::OursTop1NoPast => {
            run_engine(method, case, seed, options, &mut tracker)?
        }
        Method::CyclicCd | Method::RandomCd => {
            let mode = if method == Method::CyclicCd {
                CdMode::Cyclic
            } else {
                CdMode::Random
            };
            run_coordinate_descent(mode, case, seed, options, &mut tracker, &mut rng)?
        }
        Method::RandomDir => run_random_direction(case, seed, options, &mut tracker, &mut rng)?,
        Method::Gallery => run_gallery(case, seed, options, &mut tracker, &mut rng)?,
    }
    tracker.finish()
}

fn engine_config(method: Method, case: &TestCase, seed: u64, options: &RunOptions) -> SessionConfig {
    let mut cfg = options.engine.clone();
    cfg.n = case.n;
    cfg.seed = run_seed(&case.case_id, seed, 100 + method as u64);
    match method {
        Method::OursCapOff => cfg.cap = case.n as f64,
        Method::OursTop1NoPast => {
            cfg.k = 1;
            cfg.m_past = 0;
        }
        _ => {}
    }
    cfg
}

fn run_engine(method: Method, case: &TestCase, seed: u64, options: &RunOptions, tracker: &mut Tracker) -> Result<()> {
    let cfg = engine_config(method, case, seed, options);
    let k = cfg.k;
    // Lifting the cap changes the initial design, so that ablation draws its own.
    let initial = match method {
        Method::OursCapOff if !options.plant_target => None,
        Method::OursCapOff => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            let mut init = mergebo_core::simplex::sample_hypercube(case.n, cfg.tau, cfg.n_init, &mut rng);
            init[0] = case.alpha_gt.clone();
            Some(init)
        }
        _ => Some(shared_initial(case, seed, options)),
    };
    let mut session = Session::start_with(cfg, initial)?;
    let mut seen = 0;
    let mut iteration = 0;
    let mut scores: Vec<f64> = Vec::new();
    loop {
        let display = session.pending().expect("pending display").clone();
        for s in &session.samples()[seen..] {
            let sim = tracker.render(s.alpha.as_slice())?;
            scores.push(sim);
        }
        seen = session.samples().len();
        if display.counts_as_iteration || tracker.records.is_empty() {
            tracker.record(iteration);
        }
        let scored = display.samples.iter().map(|id| (*id, scores[id.0 as usize])).collect();
        let submission = RankingSubmission {
            token: Some(display.token),
            displayed: display.samples.clone(),
            ranked_top: rank_scored(scored, k),
        };
        match session.submit(&submission)? {
            Step::Finished { .. } => break,
            Step::Display(next) => {
                if next.counts_as_iteration {
                    iteration += 1;
                }
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CdMode {
    Cyclic,
    Random,
}

/// Coordinate line search: one coordinate per step swept over evenly spaced
/// values including both endpoints.
#[derive(Debug, Clone)]
pub struct CoordinateDescent {
    pub mode: CdMode,
    pub points: usize,
    next: usize,
}

impl CoordinateDescent {
    pub fn new(mode: CdMode, points: usize) -> Self {
        Self { mode, points, next: 0 }
    }

    pub fn step<R: Rng + ?Sized>(&mut self, current: &[f64], rng: &mut R) -> (usize, Vec<Vec<f64>>) {
        let n = current.len();
        let coord = match self.mode {
            CdMode::Cyclic => {
                let c = self.next % n;
                self.next = (c + 1) % n;
                c
            }
            CdMode::Random => rng.random_range(0..n),
        };
        let denom = (self.points - 1) as f64;
        let candidates = (0..self.points)
            .map(|j| {
                let mut a = current.to_vec();
                a[coord] = j as f64 / denom;
                a
            })
            .collect();
        (coord, candidates)
    }
}

/// `points` evenly spaced points, endpoints included, on the line through
/// `current` along a uniformly random direction, clipped to `[0,1]^n`. A
/// coordinate already sitting on the bound it moves toward stays clamped there
/// and does not shorten the segment; at interior points this is the exact
/// chord of the box.
pub fn step_random_direction<R: Rng + ?Sized>(current: &[f64], points: usize, rng: &mut R) -> Result<Vec<Vec<f64>>> {
    const AT_BOUND: f64 = 1e-12;
    for _ in 0..100 {
        let d: Vec<f64> = (0..current.len())
            .map(|_| rng.sample::<f64, _>(StandardNormal))
            .collect();
        let norm = d.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            continue;
        }
        let d: Vec<f64> = d.iter().map(|v| v / norm).collect();
        let (mut lo, mut hi) = (f64::INFINITY, f64::INFINITY);
        for (&c, &di) in current.iter().zip(&d) {
            if di == 0.0 {
                continue;
            }
            let (up, down) = if di > 0.0 { (1.0 - c, c) } else { (c, 1.0 - c) };
            if up > AT_BOUND {
                hi = hi.min(up / di.abs());
            }
            if down > AT_BOUND {
                lo = lo.min(down / di.abs());
            }
        }
        if !lo.is_finite() {
            lo = 0.0;
        }
        if !hi.is_finite() {
            hi = 0.0;
        }
        if lo + hi <= AT_BOUND || (lo + hi).is_nan() {
            continue;
        }
        let denom = (points - 1) as f64;
        return Ok((0..points)
            .map(|j| {
                let t = -lo + (lo + hi) * j as f64 / denom;
                current
                    .iter()
                    .zip(&d)
                    .map(|(&c, &di)| (c + t * di).clamp(0.0, 1.0))
                    .collect()
            })
            .collect());
    }
    Err(HarnessError::Usage("no feasible line direction after 100 draws".into()))
}

/// The 3×3 gallery spanned from `best` by the acquisitions `a` and `b`, row
/// major in `(s, t)` with `best` first.
pub fn gallery_grid(best: &[f64], a: &[f64], b: &[f64]) -> Vec<Vec<f64>> {
    let mut grid = Vec::with_capacity(9);
    for s in 0..3 {
        for t in 0..3 {
            let (s, t) = (s as f64 / 2.0, t as f64 / 2.0);
            grid.push(
                best.iter()
                    .zip(a.iter().zip(b))
                    .map(|(&x, (&ai, &bi))| (x + s * (ai - x) + t * (bi - x)).clamp(0.0, 1.0))
                    .collect(),
            );
        }
    }
    grid
}

/// One gallery step: two acquisitions over the unit hypercube, then the grid.
pub fn step_gallery<R: Rng + ?Sized>(
    posterior: &PosteriorMixture,
    best: &[f64],
    engine: &SessionConfig,
    rng: &mut R,
) -> Result<Vec<Vec<f64>>> {
    let mut acq = engine.acquisition();
    acq.q = 2;
    let out = optimize_batch(posterior, &SearchSpace::Hypercube { n: best.len() }, &acq, rng)?;
    Ok(gallery_grid(best, out.batch[0].as_slice(), out.batch[1].as_slice()))
}

/// Renders the shared initial samples and returns them with their scores.
fn render_initial(
    case: &TestCase,
    seed: u64,
    options: &RunOptions,
    tracker: &mut Tracker,
) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    let init: Vec<Vec<f64>> = shared_initial(case, seed, options)
        .into_iter()
        .map(|a| a.into_vec())
        .collect();
    let scores = init.iter().map(|a| tracker.render(a)).collect::<Result<Vec<_>>>()?;
    tracker.record(0);
    Ok((init, scores))
}

fn argmax(scores: &[f64]) -> usize {
    rank_scored(
        scores
            .iter()
            .enumerate()
            .map(|(i, &s)| (SampleId(i as u64), s))
            .collect(),
        1,
    )[0]
    .0 as usize
}

/// Best of `candidates` and the current point; the current point wins ties.
fn pick(current: (Vec<f64>, f64), candidates: Vec<Vec<f64>>, tracker: &mut Tracker) -> Result<(Vec<f64>, f64)> {
    let mut best = current;
    for c in candidates {
        let s = tracker.render(&c)?;
        if s > best.1 {
            best = (c, s);
        }
    }
    Ok(best)
}

fn run_coordinate_descent(
    mode: CdMode,
    case: &TestCase,
    seed: u64,
    options: &RunOptions,
    tracker: &mut Tracker,
    rng: &mut ChaCha8Rng,
) -> Result<()> {
    let (init, scores) = render_initial(case, seed, options, tracker)?;
    let i = argmax(&scores);
    let mut current = (init[i].clone(), scores[i]);
    let mut cd = CoordinateDescent::new(mode, options.engine.q);
    for it in 1..=options.iterations() {
        let (_, candidates) = cd.step(&current.0, rng);
        current = pick(current, candidates, tracker)?;
        tracker.record(it);
    }
    Ok(())
}

fn run_random_direction(
    case: &TestCase,
    seed: u64,
    options: &RunOptions,
    tracker: &mut Tracker,
    rng: &mut ChaCha8Rng,
) -> Result<()> {
    let (init, scores) = render_initial(case, seed, options, tracker)?;
    let i = argmax(&scores);
    let mut current = (init[i].clone(), scores[i]);
    for it in 1..=options.iterations() {
        let candidates = step_random_direction(&current.0, options.engine.q, rng)?;
        current = pick(current, candidates, tracker)?;
        tracker.record(it);
    }
    Ok(())
}

fn run_gallery(
    case: &TestCase,
    seed: u64,
    options: &RunOptions,
    tracker: &mut Tracker,
    rng: &mut ChaCha8Rng,
) -> Result<()> {
    if options.engine.q != 8 {
        return Err(HarnessError::Usage(
            "the gallery baseline needs q = 8 (a 3x3 grid)".into(),
        ));
    }
    let (mut points, scores) = render_initial(case, seed, options, tracker)?;
    let ids: Vec<SampleId> = (0..points.len() as u64).map(SampleId).collect();
    let ranked = rank_scored(ids.iter().copied().zip(scores.iter().copied()).collect(), points.len());
    let mut pairs: Vec<(usize, usize)> = expand_ranking(&RankingSubmission {
        token: None,
        displayed: ids,
        ranked_top: ranked,
    })?
    .into_iter()
    .map(|p| (p.preferred.0 as usize, p.other.0 as usize))
    .collect();
    let mut best = argmax(&scores);
    let mut best_score = scores[best];
    for it in 1..=options.iterations() {
        let (posterior, _) = fit_preferences(
            Points::from_rows(&points)?,
            &pairs,
            options.engine.sigma_pref,
            &options.engine.sampler(),
            rng,
        )?;
        let grid = step_gallery(&posterior, &points[best], &options.engine, rng)?;
        let mut shown = vec![(best, best_score)];
        for p in grid.into_iter().skip(1) {
            let s = tracker.render(&p)?;
            points.push(p);
            shown.push((points.len() - 1, s));
        }
        let winner = rank_scored(shown.iter().map(|&(i, s)| (SampleId(i as u64), s)).collect(), 1)[0].0 as usize;
        pairs.extend(shown.iter().filter(|&&(i, _)| i != winner).map(|&(i, _)| (winner, i)));
        best = winner;
        best_score = shown.iter().find(|&&(i, _)| i == winner).expect("winner shown").1;
        tracker.record(it);
    }
    Ok(())
}
