//! Reparameterized Monte-Carlo batch UCB and its gradient.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg;
use crate::surrogate::kernel::{matern52_with_grad, scaled_sq_dist};
use crate::surrogate::{Points, PosteriorMixture};

/// `√(π/2)`, so that `E|γ|·√(π/2) = σ` for `γ ~ N(0, σ²)`.
const SQRT_HALF_PI: f64 = 1.253_314_137_315_500_3;

/// Fixed standard-normal draws, one row of length `q` per Monte-Carlo sample.
#[derive(Debug, Clone, PartialEq)]
pub struct BaseSamples {
    q: usize,
    values: Vec<f64>,
}

impl BaseSamples {
    pub fn new<R: Rng + ?Sized>(q: usize, count: usize, rng: &mut R) -> Self {
        let values = (0..q * count).map(|_| rng.sample(StandardNormal)).collect();
        Self { q, values }
    }

    pub fn from_values(q: usize, values: Vec<f64>) -> Result<Self> {
        if q == 0 || values.is_empty() || !values.len().is_multiple_of(q) {
            return Err(Error::InvalidInput(format!(
                "{} base values do not form rows of length {q}",
                values.len()
            )));
        }
        Ok(Self { q, values })
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn count(&self) -> usize {
        self.values.len() / self.q
    }

    pub(crate) fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.q)
    }
}

/// Scratch buffers reused across draws.
struct Scratch {
    kx: Vec<f64>,
    gx: Vec<f64>,
    v: Vec<f64>,
    mu: Vec<f64>,
    cov: Vec<f64>,
    gbb: Vec<f64>,
}

impl Scratch {
    fn new(q: usize, m: usize) -> Self {
        Self {
            kx: vec![0.0; q * m],
            gx: vec![0.0; q * m],
            v: vec![0.0; q * m],
            mu: vec![0.0; q],
            cov: vec![0.0; q * q],
            gbb: vec![0.0; q * q],
        }
    }
}

fn check_shapes(post: &PosteriorMixture, batch: &Points, base: &BaseSamples) -> Result<()> {
    if batch.dim() != post.dim() {
        return Err(Error::DimensionMismatch {
            expected: post.dim(),
            found: batch.dim(),
        });
    }
    if batch.len() != base.q() {
        return Err(Error::DimensionMismatch {
            expected: base.q(),
            found: batch.len(),
        });
    }
    Ok(())
}

/// Monte-Carlo batch UCB `E[max_j μ_j + λ √(π/2) |(L ε)_j|]` averaged over
/// posterior draws, with `L` the Cholesky factor of each draw's joint
/// covariance at `batch`.
pub fn qucb_batch(post: &PosteriorMixture, batch: &Points, base: &BaseSamples, lambda: f64) -> Result<f64> {
    check_shapes(post, batch, base)?;
    evaluate(
        post,
        batch.rows().flatten().copied().collect::<Vec<_>>().as_slice(),
        base,
        lambda,
        None,
    )
}

/// [`qucb_batch`] together with its gradient with respect to the batch
/// points (row-major, same layout as `batch`).
pub fn qucb_batch_gradient(
    post: &PosteriorMixture,
    batch: &Points,
    base: &BaseSamples,
    lambda: f64,
) -> Result<(f64, Vec<f64>)> {
    check_shapes(post, batch, base)?;
    let flat: Vec<f64> = batch.rows().flatten().copied().collect();
    let mut grad = vec![0.0; flat.len()];
    let v = evaluate(post, &flat, base, lambda, Some(&mut grad))?;
    Ok((v, grad))
}

/// Unchecked evaluation on a flat row-major batch of `base.q()` points.
pub(crate) fn evaluate(
    post: &PosteriorMixture,
    batch: &[f64],
    base: &BaseSamples,
    lambda: f64,
    mut grad: Option<&mut [f64]>,
) -> Result<f64> {
    let q = base.q();
    let m = post.num_train();
    let mut scratch = Scratch::new(q, m);
    let h = post.num_draws() as f64;
    if let Some(g) = grad.as_deref_mut() {
        g.iter_mut().for_each(|v| *v = 0.0);
    }
    let mut total = 0.0;
    for c in 0..post.num_draws() {
        total += draw_value(post, c, batch, base, lambda, &mut scratch, grad.as_deref_mut(), 1.0 / h)? / h;
    }
    Ok(total)
}

#[allow(clippy::too_many_arguments)]
fn draw_value(
    post: &PosteriorMixture,
    c: usize,
    batch: &[f64],
    base: &BaseSamples,
    lambda: f64,
    s: &mut Scratch,
    grad: Option<&mut [f64]>,
    weight: f64,
) -> Result<f64> {
    let comp = &post.components[c];
    let rho = &comp.draw.inv_sq_lengthscales;
    let s2 = comp.draw.signal_variance;
    let d = post.dim();
    let m = post.num_train();
    let q = base.q();
    let want_grad = grad.is_some();

    for j in 0..q {
        let b = &batch[j * d..(j + 1) * d];
        for (a, xa) in post.x.rows().enumerate() {
            let (k, g) = matern52_with_grad(scaled_sq_dist(xa, b, rho));
            s.kx[j * m + a] = s2 * k;
            s.gx[j * m + a] = s2 * g;
        }
        let kx = &s.kx[j * m..(j + 1) * m];
        s.mu[j] = linalg::dot(kx, &comp.alpha);
        let v = &mut s.v[j * m..(j + 1) * m];
        v.copy_from_slice(kx);
        linalg::solve_lower(&comp.chol, m, v);
    }
    for j in 0..q {
        let bj = &batch[j * d..(j + 1) * d];
        for l in 0..=j {
            let bl = &batch[l * d..(l + 1) * d];
            let (k, g) = matern52_with_grad(scaled_sq_dist(bj, bl, rho));
            let val = s2 * k - linalg::dot(&s.v[j * m..(j + 1) * m], &s.v[l * m..(l + 1) * m]);
            s.cov[j * q + l] = val;
            s.cov[l * q + j] = val;
            s.gbb[j * q + l] = s2 * g;
            s.gbb[l * q + j] = s2 * g;
        }
    }
    let chol = factor_batch_covariance(&s.cov, q, s2)?;

    let scale = lambda * SQRT_HALF_PI;
    let count = base.count() as f64;
    let mut value = 0.0;
    let mut gamma = vec![0.0; q];
    let mut d_mu = vec![0.0; q];
    let mut d_chol = vec![0.0; if want_grad { q * q } else { 0 }];
    for eps in base.rows() {
        let mut best = f64::NEG_INFINITY;
        let mut arg = 0;
        for j in 0..q {
            gamma[j] = linalg::dot(&chol[j * q..j * q + j + 1], &eps[..=j]);
            let phi = s.mu[j] + scale * gamma[j].abs();
            if phi > best {
                best = phi;
                arg = j;
            }
        }
        value += best / count;
        if want_grad {
            d_mu[arg] += 1.0 / count;
            let sign = if gamma[arg] >= 0.0 { 1.0 } else { -1.0 };
            for l in 0..=arg {
                d_chol[arg * q + l] += scale * sign * eps[l] / count;
            }
        }
    }

    if let Some(grad) = grad {
        let d_cov = cholesky_backward(&chol, &d_chol, q);
        let mut dv = vec![0.0; m];
        for j in 0..q {
            let bj = &batch[j * d..(j + 1) * d];
            let gj = &mut grad[j * d..(j + 1) * d];
            // Through the prior block s² C(b_j, b_l).
            for l in 0..q {
                if l == j {
                    continue;
                }
                let bl = &batch[l * d..(l + 1) * d];
                let w = 2.0 * d_cov[j * q + l] * s.gbb[j * q + l] * 2.0 * weight;
                for i in 0..d {
                    gj[i] += w * rho[i] * (bj[i] - bl[i]);
                }
            }
            // Through v_j = L⁻¹ k(X, b_j): ∂/∂v_j of −Σ G_ab v_a·v_b.
            dv.iter_mut().for_each(|x| *x = 0.0);
            for l in 0..q {
                let w = -2.0 * d_cov[j * q + l];
                for (x, vl) in dv.iter_mut().zip(&s.v[l * m..(l + 1) * m]) {
                    *x += w * vl;
                }
            }
            linalg::solve_lower_transpose(&comp.chol, m, &mut dv);
            for (a, xa) in post.x.rows().enumerate() {
                let dk = dv[a] + d_mu[j] * comp.alpha[a];
                let w = dk * s.gx[j * m + a] * 2.0 * weight;
                if w == 0.0 {
                    continue;
                }
                for i in 0..d {
                    gj[i] += w * rho[i] * (bj[i] - xa[i]);
                }
            }
        }
    }
    Ok(value)
}

/// Cholesky factor of the joint batch covariance with a jitter floor
/// relative to the signal variance, so coincident points stay factorable.
fn factor_batch_covariance(cov: &[f64], q: usize, s2: f64) -> Result<Vec<f64>> {
    let base = 1e-10 * s2.max(1e-12);
    for scale in [1.0, 1e2, 1e4, 1e6] {
        let mut l = cov.to_vec();
        for j in 0..q {
            l[j * q + j] += base * scale;
        }
        if linalg::cholesky_in_place(&mut l, q) {
            return Ok(l);
        }
    }
    Err(Error::Singular { jitter: base * 1e6 })
}

/// Reverse-mode step through `Σ = L Lᵀ`. Given `L̄` (lower triangular)
/// returns the symmetric `Σ̄` such that `dℓ = Σ_{ab} Σ̄_ab dΣ_ab` for
/// symmetric perturbations.
pub(crate) fn cholesky_backward(l: &[f64], l_bar: &[f64], q: usize) -> Vec<f64> {
    // P = Φ(Lᵀ L̄): lower triangle with halved diagonal.
    let mut p = vec![0.0; q * q];
    for i in 0..q {
        for j in 0..=i {
            let mut acc = 0.0;
            for k in i..q {
                acc += l[k * q + i] * l_bar[k * q + j];
            }
            p[i * q + j] = if i == j { 0.5 * acc } else { acc };
        }
    }
    // Explicit L⁻¹ (lower triangular), fine for small q.
    let mut linv = vec![0.0; q * q];
    for col in 0..q {
        let mut e = vec![0.0; q];
        e[col] = 1.0;
        linalg::solve_lower(l, q, &mut e);
        for row in 0..q {
            linv[row * q + col] = e[row];
        }
    }
    // S = L⁻ᵀ P L⁻¹
    let mut pl = vec![0.0; q * q];
    for i in 0..q {
        for j in 0..q {
            pl[i * q + j] = (0..q).map(|k| p[i * q + k] * linv[k * q + j]).sum();
        }
    }
    let mut s = vec![0.0; q * q];
    for i in 0..q {
        for j in 0..q {
            s[i * q + j] = (0..q).map(|k| linv[k * q + i] * pl[k * q + j]).sum();
        }
    }
    let mut out = vec![0.0; q * q];
    for i in 0..q {
        for j in 0..q {
            out[i * q + j] = 0.5 * (s[i * q + j] + s[j * q + i]);
        }
    }
    out
}
