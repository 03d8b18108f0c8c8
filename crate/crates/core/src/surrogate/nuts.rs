//! Multinomial No-U-Turn sampler with dual-averaging step size adaptation
//! and a diagonal mass matrix estimated during warmup.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Unnormalized log density with gradient.
pub trait LogDensity {
    fn dim(&self) -> usize;

    /// Writes the gradient into `grad` and returns the log density, which
    /// may be `-inf` outside the support.
    fn log_density(&self, position: &[f64], grad: &mut [f64]) -> f64;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NutsSettings {
    pub warmup: usize,
    pub samples: usize,
    pub max_tree_depth: usize,
    pub target_accept: f64,
}

impl Default for NutsSettings {
    fn default() -> Self {
        Self {
            warmup: 80,
            samples: 80,
            max_tree_depth: 6,
            target_accept: 0.8,
        }
    }
}

const MAX_ENERGY_ERROR: f64 = 1000.0;

#[derive(Clone)]
struct State {
    q: Vec<f64>,
    p: Vec<f64>,
    grad: Vec<f64>,
    logp: f64,
}

struct Tree {
    left: State,
    right: State,
    proposal: State,
    log_weight: f64,
    sum_accept: f64,
    n_steps: usize,
    turning: bool,
    diverging: bool,
}

fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

struct Integrator<'a, T: LogDensity> {
    target: &'a T,
    inv_mass: Vec<f64>,
}

impl<T: LogDensity> Integrator<'_, T> {
    fn energy(&self, s: &State) -> f64 {
        let kinetic: f64 = s.p.iter().zip(&self.inv_mass).map(|(p, m)| 0.5 * m * p * p).sum();
        kinetic - s.logp
    }

    fn leapfrog(&self, s: &State, eps: f64) -> State {
        let d = s.q.len();
        let mut p: Vec<f64> = (0..d).map(|i| s.p[i] + 0.5 * eps * s.grad[i]).collect();
        let q: Vec<f64> = (0..d).map(|i| s.q[i] + eps * self.inv_mass[i] * p[i]).collect();
        let mut grad = vec![0.0; d];
        let logp = self.target.log_density(&q, &mut grad);
        if logp.is_finite() {
            for i in 0..d {
                p[i] += 0.5 * eps * grad[i];
            }
        }
        State { q, p, grad, logp }
    }

    fn is_turning(&self, left: &State, right: &State) -> bool {
        let mut fwd = 0.0;
        let mut bwd = 0.0;
        for i in 0..left.q.len() {
            let dq = right.q[i] - left.q[i];
            fwd += dq * self.inv_mass[i] * right.p[i];
            bwd += dq * self.inv_mass[i] * left.p[i];
        }
        fwd < 0.0 || bwd < 0.0
    }

    fn build_tree<R: Rng + ?Sized>(
        &self,
        start: &State,
        forward: bool,
        depth: usize,
        eps: f64,
        h0: f64,
        rng: &mut R,
    ) -> Tree {
        if depth == 0 {
            let s = self.leapfrog(start, if forward { eps } else { -eps });
            let delta = if s.logp.is_finite() {
                self.energy(&s) - h0
            } else {
                f64::INFINITY
            };
            let diverging = !(delta < MAX_ENERGY_ERROR);
            let log_weight = if delta.is_finite() { -delta } else { f64::NEG_INFINITY };
            let accept = if delta.is_finite() {
                (-delta).exp().min(1.0)
            } else {
                0.0
            };
            return Tree {
                left: s.clone(),
                right: s.clone(),
                proposal: s,
                log_weight,
                sum_accept: accept,
                n_steps: 1,
                turning: false,
                diverging,
            };
        }
        let first = self.build_tree(start, forward, depth - 1, eps, h0, rng);
        if first.turning || first.diverging {
            return first;
        }
        let edge = if forward { &first.right } else { &first.left };
        let second = self.build_tree(edge, forward, depth - 1, eps, h0, rng);
        let log_weight = log_add_exp(first.log_weight, second.log_weight);
        let take_second = rng.random::<f64>() < (second.log_weight - log_weight).exp();
        let (left, right) = if forward {
            (first.left, second.right)
        } else {
            (second.left, first.right)
        };
        let turning = second.turning || self.is_turning(&left, &right);
        Tree {
            proposal: if take_second { second.proposal } else { first.proposal },
            left,
            right,
            log_weight,
            sum_accept: first.sum_accept + second.sum_accept,
            n_steps: first.n_steps + second.n_steps,
            turning,
            diverging: second.diverging,
        }
    }

    /// One NUTS transition; returns the new state and the mean acceptance statistic.
    fn transition<R: Rng + ?Sized>(&self, current: &State, eps: f64, max_depth: usize, rng: &mut R) -> (State, f64) {
        let mut start = current.clone();
        for (p, m) in start.p.iter_mut().zip(&self.inv_mass) {
            let z: f64 = rng.sample(StandardNormal);
            *p = z / m.sqrt();
        }
        let h0 = self.energy(&start);
        let mut left = start.clone();
        let mut right = start.clone();
        let mut proposal = start;
        let mut log_weight = 0.0;
        let mut sum_accept = 0.0;
        let mut n_steps = 0;
        for depth in 0..max_depth {
            let forward = rng.random::<bool>();
            let edge = if forward { &right } else { &left };
            let sub = self.build_tree(edge, forward, depth, eps, h0, rng);
            sum_accept += sub.sum_accept;
            n_steps += sub.n_steps;
            if sub.diverging || sub.turning {
                break;
            }
            if rng.random::<f64>() < (sub.log_weight - log_weight).exp() {
                proposal = sub.proposal;
            }
            log_weight = log_add_exp(log_weight, sub.log_weight);
            if forward {
                right = sub.right;
            } else {
                left = sub.left;
            }
            if self.is_turning(&left, &right) {
                break;
            }
        }
        (proposal, sum_accept / n_steps.max(1) as f64)
    }

    fn initial_step_size<R: Rng + ?Sized>(&self, s: &State, rng: &mut R) -> f64 {
        let mut eps = 0.1;
        let mut probe = s.clone();
        for (p, m) in probe.p.iter_mut().zip(&self.inv_mass) {
            let z: f64 = rng.sample(StandardNormal);
            *p = z / m.sqrt();
        }
        let h0 = self.energy(&probe);
        let log_ratio = |eps: f64| {
            let next = self.leapfrog(&probe, eps);
            if next.logp.is_finite() {
                h0 - self.energy(&next)
            } else {
                f64::NEG_INFINITY
            }
        };
        let up = log_ratio(eps) > (0.5f64).ln();
        for _ in 0..50 {
            let r = log_ratio(eps);
            if up && r > (0.5f64).ln() {
                eps *= 2.0;
            } else if !up && !(r > (0.5f64).ln()) {
                eps *= 0.5;
            } else {
                break;
            }
        }
        eps.clamp(1e-6, 10.0)
    }
}

struct DualAveraging {
    mu: f64,
    h_bar: f64,
    log_eps_bar: f64,
    count: f64,
    target: f64,
}

impl DualAveraging {
    fn new(eps: f64, target: f64) -> Self {
        Self {
            mu: (10.0 * eps).ln(),
            h_bar: 0.0,
            log_eps_bar: 0.0,
            count: 0.0,
            target,
        }
    }

    fn update(&mut self, accept: f64) -> f64 {
        const GAMMA: f64 = 0.05;
        const T0: f64 = 10.0;
        const KAPPA: f64 = 0.75;
        self.count += 1.0;
        let m = self.count;
        self.h_bar = (1.0 - 1.0 / (m + T0)) * self.h_bar + (self.target - accept) / (m + T0);
        let log_eps = self.mu - m.sqrt() / GAMMA * self.h_bar;
        let eta = m.powf(-KAPPA);
        self.log_eps_bar = eta * log_eps + (1.0 - eta) * self.log_eps_bar;
        log_eps.exp()
    }

    fn final_step(&self) -> f64 {
        self.log_eps_bar.exp()
    }
}

/// Runs one chain from `init` and returns the post-warmup positions.
pub fn sample_nuts<T: LogDensity, R: Rng + ?Sized>(
    target: &T,
    init: Vec<f64>,
    settings: &NutsSettings,
    rng: &mut R,
) -> Result<Vec<Vec<f64>>> {
    let d = target.dim();
    if init.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: init.len(),
        });
    }
    let mut grad = vec![0.0; d];
    let logp = target.log_density(&init, &mut grad);
    if !logp.is_finite() {
        return Err(Error::InvalidInput("initial position has zero density".into()));
    }
    let mut integrator = Integrator {
        target,
        inv_mass: vec![1.0; d],
    };
    let mut current = State {
        q: init,
        p: vec![0.0; d],
        grad,
        logp,
    };
    let mut eps = integrator.initial_step_size(&current, rng);
    let mut adapt = DualAveraging::new(eps, settings.target_accept);

    // Mass matrix window: 15 % .. 90 % of warmup, when warmup is long enough.
    let window = (settings.warmup >= 20).then(|| {
        let start = settings.warmup * 15 / 100;
        let end = settings.warmup * 90 / 100;
        (start, end)
    });
    let mut window_draws: Vec<Vec<f64>> = Vec::new();

    for it in 0..settings.warmup {
        let (next, accept) = integrator.transition(&current, eps, settings.max_tree_depth, rng);
        current = next;
        eps = adapt.update(accept);
        if let Some((start, end)) = window {
            if it >= start && it < end {
                window_draws.push(current.q.clone());
            }
            if it + 1 == end && window_draws.len() >= 5 {
                let n = window_draws.len() as f64;
                for i in 0..d {
                    let mean = window_draws.iter().map(|q| q[i]).sum::<f64>() / n;
                    let var = window_draws.iter().map(|q| (q[i] - mean).powi(2)).sum::<f64>() / (n - 1.0);
                    integrator.inv_mass[i] = (n / (n + 5.0)) * var + 1e-3 * (5.0 / (n + 5.0));
                }
                eps = integrator.initial_step_size(&current, rng);
                adapt = DualAveraging::new(eps, settings.target_accept);
            }
        }
    }
    if settings.warmup > 0 {
        eps = adapt.final_step();
    }
    let mut out = Vec::with_capacity(settings.samples);
    for _ in 0..settings.samples {
        let (next, _) = integrator.transition(&current, eps, settings.max_tree_depth, rng);
        current = next;
        out.push(current.q.clone());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    struct Gaussian {
        mean: Vec<f64>,
        sd: Vec<f64>,
    }

    impl LogDensity for Gaussian {
        fn dim(&self) -> usize {
            self.mean.len()
        }

        fn log_density(&self, x: &[f64], grad: &mut [f64]) -> f64 {
            let mut lp = 0.0;
            for i in 0..x.len() {
                let z = (x[i] - self.mean[i]) / self.sd[i];
                lp -= 0.5 * z * z;
                grad[i] = -z / self.sd[i];
            }
            lp
        }
    }

    #[test]
    fn recovers_gaussian_moments() {
        let target = Gaussian {
            mean: vec![1.0, -2.0, 0.5],
            sd: vec![1.0, 0.1, 3.0],
        };
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let settings = NutsSettings {
            warmup: 300,
            samples: 2000,
            ..Default::default()
        };
        let draws = sample_nuts(&target, vec![0.0; 3], &settings, &mut rng).unwrap();
        for i in 0..3 {
            let n = draws.len() as f64;
            let m = draws.iter().map(|d| d[i]).sum::<f64>() / n;
            let v = draws.iter().map(|d| (d[i] - m).powi(2)).sum::<f64>() / n;
            assert!((m - target.mean[i]).abs() < 0.15 * target.sd[i], "mean {i}: {m}");
            assert!((v.sqrt() / target.sd[i] - 1.0).abs() < 0.15, "sd {i}: {}", v.sqrt());
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let target = Gaussian {
            mean: vec![0.0; 2],
            sd: vec![1.0; 2],
        };
        let s = NutsSettings::default();
        let a = sample_nuts(&target, vec![0.3, 0.3], &s, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let b = sample_nuts(&target, vec![0.3, 0.3], &s, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(a, b);
    }
}
