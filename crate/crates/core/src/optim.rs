//! Projected limited-memory BFGS for box-constrained minimization.

use std::collections::VecDeque;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxLbfgs {
    pub memory: usize,
    pub max_iters: usize,
    /// Stop when the projected gradient's infinity norm falls below this.
    pub pgtol: f64,
    /// Stop when the relative decrease of one step falls below this.
    pub ftol: f64,
}

impl Default for BoxLbfgs {
    fn default() -> Self {
        Self {
            memory: 10,
            max_iters: 200,
            pgtol: 1e-6,
            ftol: 1e-10,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
    /// The very first line search failed, so `x` is the projected start.
    pub stalled: bool,
}

fn project(x: &mut [f64], lo: f64, hi: f64) {
    for v in x.iter_mut() {
        *v = v.clamp(lo, hi);
    }
}

fn projected_gradient(x: &[f64], g: &[f64], lo: f64, hi: f64) -> Vec<f64> {
    x.iter()
        .zip(g)
        .map(|(&xi, &gi)| {
            if (xi <= lo && gi > 0.0) || (xi >= hi && gi < 0.0) {
                0.0
            } else {
                gi
            }
        })
        .collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl BoxLbfgs {
    /// Minimizes `f` over `[lo, hi]^n`. `f` writes its gradient into the
    /// second argument and returns the value.
    pub fn minimize<F>(&self, mut f: F, x0: &[f64], lo: f64, hi: f64) -> Minimum
    where
        F: FnMut(&[f64], &mut [f64]) -> f64,
    {
        let n = x0.len();
        let mut x = x0.to_vec();
        project(&mut x, lo, hi);
        let mut g = vec![0.0; n];
        let mut fx = f(&x, &mut g);
        let mut history: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::new();
        let mut g_new = vec![0.0; n];
        let mut stalled = false;
        let mut converged = false;
        let mut iterations = 0;

        while iterations < self.max_iters {
            let pg = projected_gradient(&x, &g, lo, hi);
            if pg.iter().fold(0.0f64, |m, v| m.max(v.abs())) < self.pgtol {
                converged = true;
                break;
            }
            let free: Vec<bool> = pg.iter().zip(&g).map(|(p, g)| *p != 0.0 || *g == 0.0).collect();

            // Two-loop recursion on the free subspace.
            let mut d = pg.clone();
            let mut coeffs = Vec::with_capacity(history.len());
            for (s, y, rho) in history.iter().rev() {
                let a = rho * dot(s, &d);
                for i in 0..n {
                    d[i] -= a * y[i];
                }
                coeffs.push(a);
            }
            if let Some((s, y, _)) = history.back() {
                let gamma = dot(s, y) / dot(y, y);
                d.iter_mut().for_each(|v| *v *= gamma);
            }
            for ((s, y, rho), a) in history.iter().zip(coeffs.iter().rev()) {
                let b = rho * dot(y, &d);
                for i in 0..n {
                    d[i] += (a - b) * s[i];
                }
            }
            for i in 0..n {
                d[i] = if free[i] { -d[i] } else { 0.0 };
            }
            if dot(&d, &g) >= 0.0 {
                d = pg.iter().map(|v| -v).collect();
                history.clear();
            }

            let mut t = if history.is_empty() {
                (1.0 / pg.iter().map(|v| v * v).sum::<f64>().sqrt()).min(1.0)
            } else {
                1.0
            };
            let mut accepted = None;
            for _ in 0..40 {
                let mut trial: Vec<f64> = x.iter().zip(&d).map(|(xi, di)| xi + t * di).collect();
                project(&mut trial, lo, hi);
                let step: Vec<f64> = trial.iter().zip(&x).map(|(a, b)| a - b).collect();
                let decrease = dot(&g, &step);
                if decrease >= 0.0 {
                    t *= 0.5;
                    continue;
                }
                let ft = f(&trial, &mut g_new);
                if ft.is_finite() && ft <= fx + 1e-4 * decrease {
                    accepted = Some((trial, ft, step));
                    break;
                }
                t *= 0.5;
            }
            let Some((trial, ft, s)) = accepted else {
                if !history.is_empty() {
                    history.clear();
                    continue;
                }
                stalled = iterations == 0;
                break;
            };
            iterations += 1;
            let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
            let sy = dot(&s, &y);
            if sy > 1e-10 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() {
                history.push_back((s, y, 1.0 / sy));
                if history.len() > self.memory {
                    history.pop_front();
                }
            }
            let rel = (fx - ft) / fx.abs().max(ft.abs()).max(1.0);
            x = trial;
            fx = ft;
            std::mem::swap(&mut g, &mut g_new);
            if rel <= self.ftol {
                converged = true;
                break;
            }
        }
        Minimum {
            x,
            value: fx,
            iterations,
            converged,
            stalled,
        }
    }
}
