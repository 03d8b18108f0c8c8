//! Deterministic procedural renderer standing in for an image generator.
//!
//! Each adapter owns a texture field `p_i(x) ∈ [−1, 1]` and a color
//! direction. A coefficient vector produces a per-channel offset field
//! `Δ(x) = Σ α_i A_i (p_i(x) d_i + t_i)` on top of a base canvas chosen by
//! the prompt seed, and a rational saturation curve maps `base + Δ` back
//! into `[0, 1]`. Large coefficient sums therefore wash the textures out
//! instead of clipping.

use std::f64::consts::{PI, TAU};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Texture {
    Stripes,
    Rings,
    NoiseGrain,
    Dots,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StyleBasis {
    pub adapter_id: usize,
    pub hue: f64,
    pub angle: f64,
    /// Cycles per image, in `[2, 16]`.
    pub frequency: f64,
    pub texture: Texture,
    pub palette: [[f64; 3]; 3],
    pub amplitude: f64,
    phase: f64,
    center: (f64, f64),
    grain: [(f64, f64, f64); 4],
}

fn mix_seed(a: u64, b: u64) -> u64 {
    // SplitMix64 finalizer over the pair.
    let mut z = a ^ b.wrapping_add(0x9E37_79B9_7F4A_7C15).rotate_left(17);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn hue_color(hue: f64) -> [f64; 3] {
    [0, 1, 2].map(|c| 0.5 + 0.5 * (hue + TAU * c as f64 / 3.0).cos())
}

impl StyleBasis {
    pub fn generate(collection_seed: u64, adapter_id: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(collection_seed, adapter_id as u64));
        let hue = rng.random::<f64>() * TAU;
        let texture = match rng.random_range(0..4) {
            0 => Texture::Stripes,
            1 => Texture::Rings,
            2 => Texture::NoiseGrain,
            _ => Texture::Dots,
        };
        let angle = rng.random::<f64>() * PI;
        let frequency = rng.random_range(2.0..=16.0);
        let palette = [
            hue_color(hue),
            hue_color(hue + PI),
            hue_color(hue + rng.random_range(-0.6..0.6)),
        ];
        let amplitude = rng.random_range(0.9..1.6);
        let phase = rng.random::<f64>() * TAU;
        let center = (rng.random_range(0.2..0.8), rng.random_range(0.2..0.8));
        let grain = [(); 4].map(|_| {
            (
                angle + rng.random_range(-0.5..0.5),
                frequency * rng.random_range(0.8..1.25),
                rng.random::<f64>() * TAU,
            )
        });
        Self {
            adapter_id,
            hue,
            angle,
            frequency,
            texture,
            palette,
            amplitude,
            phase,
            center,
            grain,
        }
    }

    /// Texture value at normalized image coordinates.
    fn pattern(&self, x: f64, y: f64) -> f64 {
        let (s, c) = self.angle.sin_cos();
        let u = x * c + y * s;
        let v = -x * s + y * c;
        match self.texture {
            Texture::Stripes => (TAU * self.frequency * u + self.phase).sin(),
            Texture::Rings => {
                let r = ((x - self.center.0).powi(2) + (y - self.center.1).powi(2)).sqrt();
                (TAU * self.frequency * r + self.phase).sin()
            }
            Texture::NoiseGrain => {
                self.grain
                    .iter()
                    .map(|&(a, f, ph)| (TAU * f * (x * a.cos() + y * a.sin()) + ph).sin())
                    .sum::<f64>()
                    / 4.0
            }
            Texture::Dots => (TAU * self.frequency * u + self.phase).cos() * (TAU * self.frequency * v).cos(),
        }
    }

    /// Per-channel response to the texture value and constant tint.
    fn color(&self) -> ([f64; 3], [f64; 3]) {
        let dir = [0, 1, 2].map(|c| self.palette[0][c] - self.palette[1][c]);
        let tint = [0, 1, 2].map(|c| 0.5 * (self.palette[2][c] - 0.5));
        (dir, tint)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderSpec {
    pub width: usize,
    pub height: usize,
    pub prompt_seed: u64,
    pub collection_seed: u64,
}

impl Default for RenderSpec {
    fn default() -> Self {
        Self {
            width: 128,
            height: 128,
            prompt_seed: 0,
            collection_seed: 0,
        }
    }
}

impl RenderSpec {
    pub fn validate(&self) -> Result<()> {
        if self.width < 16 || self.height < 16 {
            return Err(Error::InvalidInput(format!(
                "render size {}x{} is below the 16x16 minimum",
                self.width, self.height
            )));
        }
        Ok(())
    }
}

/// 8-bit RGB image, row-major, 3 bytes per pixel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub data: Vec<u8>,
}

impl Image {
    pub fn to_png(&self) -> Vec<u8> {
        let mut out = Vec::new();
        {
            let mut encoder = png::Encoder::new(&mut out, self.width as u32, self.height as u32);
            encoder.set_color(png::ColorType::Rgb);
            encoder.set_depth(png::BitDepth::Eight);
            let mut writer = encoder.write_header().expect("in-memory png header");
            writer.write_image_data(&self.data).expect("in-memory png data");
        }
        out
    }
}

fn base_canvas(spec: &RenderSpec) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(spec.prompt_seed, 0x5EED));
    let top = [(); 3].map(|_| rng.random_range(0.25..0.75));
    let bottom = [(); 3].map(|_| rng.random_range(0.25..0.75));
    let shapes: Vec<(bool, f64, f64, f64, [f64; 3])> = (0..rng.random_range(3..7))
        .map(|_| {
            (
                rng.random::<bool>(),
                rng.random_range(0.1..0.9),
                rng.random_range(0.1..0.9),
                rng.random_range(0.08..0.3),
                [(); 3].map(|_| rng.random_range(0.2..0.8)),
            )
        })
        .collect();
    let (w, h) = (spec.width, spec.height);
    let mut canvas = vec![0.0; w * h * 3];
    for py in 0..h {
        let y = (py as f64 + 0.5) / h as f64;
        for px in 0..w {
            let x = (px as f64 + 0.5) / w as f64;
            let mut rgb = [0, 1, 2].map(|c| top[c] * (1.0 - y) + bottom[c] * y);
            for &(circle, cx, cy, size, color) in &shapes {
                let inside = if circle {
                    (x - cx).powi(2) + (y - cy).powi(2) <= size * size
                } else {
                    (x - cx).abs() <= size && (y - cy).abs() <= 0.6 * size
                };
                if inside {
                    rgb = color;
                }
            }
            canvas[(py * w + px) * 3..(py * w + px) * 3 + 3].copy_from_slice(&rgb);
        }
    }
    canvas
}

/// Saturating map of `base + delta` into `[0, 1]`; identity at `delta = 0`.
fn tone_map(base: f64, delta: f64) -> f64 {
    if delta >= 0.0 {
        base + (1.0 - base) * delta / (1.0 + delta)
    } else {
        base - base * (-delta) / (1.0 - delta)
    }
}

/// Precomputed canvas and per-adapter fields for one (spec, collection size).
#[derive(Debug, Clone)]
pub struct Renderer {
    spec: RenderSpec,
    bases: Vec<StyleBasis>,
    canvas: Vec<f64>,
    /// Per adapter, per pixel and channel: `A_i (p_i(x) d_ic + t_ic)`.
    fields: Vec<Vec<f64>>,
}

impl Renderer {
    pub fn new(n: usize, spec: RenderSpec) -> Result<Self> {
        spec.validate()?;
        let (w, h) = (spec.width, spec.height);
        let bases: Vec<StyleBasis> = (0..n).map(|i| StyleBasis::generate(spec.collection_seed, i)).collect();
        let fields = bases
            .iter()
            .map(|b| {
                let (dir, tint) = b.color();
                let mut f = vec![0.0; w * h * 3];
                for py in 0..h {
                    let y = (py as f64 + 0.5) / h as f64;
                    for px in 0..w {
                        let x = (px as f64 + 0.5) / w as f64;
                        let p = b.pattern(x, y);
                        for c in 0..3 {
                            f[(py * w + px) * 3 + c] = b.amplitude * (p * dir[c] + tint[c]);
                        }
                    }
                }
                f
            })
            .collect();
        Ok(Self {
            spec,
            bases,
            canvas: base_canvas(&spec),
            fields,
        })
    }

    pub fn spec(&self) -> &RenderSpec {
        &self.spec
    }

    pub fn bases(&self) -> &[StyleBasis] {
        &self.bases
    }

    pub fn collection_size(&self) -> usize {
        self.bases.len()
    }

    fn check(&self, alpha: &[f64]) -> Result<()> {
        if alpha.len() != self.bases.len() {
            return Err(Error::DimensionMismatch {
                expected: self.bases.len(),
                found: alpha.len(),
            });
        }
        Ok(())
    }

    /// Tone-mapped floating-point image in `[0, 1]` before quantization.
    pub fn field(&self, alpha: &[f64]) -> Result<Vec<f64>> {
        self.check(alpha)?;
        let mut delta = vec![0.0; self.canvas.len()];
        for (a, f) in alpha.iter().zip(&self.fields) {
            if *a == 0.0 {
                continue;
            }
            for (d, v) in delta.iter_mut().zip(f) {
                *d += a * v;
            }
        }
        Ok(self.canvas.iter().zip(&delta).map(|(&b, &d)| tone_map(b, d)).collect())
    }

    pub fn render(&self, alpha: &[f64]) -> Result<Image> {
        let field = self.field(alpha)?;
        Ok(Image {
            width: self.spec.width,
            height: self.spec.height,
            data: field
                .iter()
                .map(|v| (v * 255.0).round().clamp(0.0, 255.0) as u8)
                .collect(),
        })
    }

    /// Matched-filter response of adapter `i` on an image: the correlation
    /// of its signed color field with the pixel values.
    pub fn style_presence(&self, i: usize, image: &Image) -> f64 {
        self.fields[i]
            .iter()
            .zip(&image.data)
            .map(|(f, &p)| f * p as f64 / 255.0)
            .sum::<f64>()
            / self.canvas.len() as f64
    }
}

/// `1 −` mean absolute per-channel difference on `[0, 1]`-scaled pixels.
pub fn image_similarity(a: &Image, b: &Image) -> Result<f64> {
    if a.width != b.width || a.height != b.height || a.data.len() != b.data.len() {
        return Err(Error::InvalidInput(format!(
            "image sizes differ: {}x{} vs {}x{}",
            a.width, a.height, b.width, b.height
        )));
    }
    if a.data.is_empty() {
        return Ok(1.0);
    }
    let total: u64 = a
        .data
        .iter()
        .zip(&b.data)
        .map(|(&x, &y)| (x as i32 - y as i32).unsigned_abs() as u64)
        .sum();
    Ok(1.0 - total as f64 / (255.0 * a.data.len() as f64))
}

/// `exp(−‖α − α_gt‖₂ / scale)`.
pub fn coefficient_similarity(alpha: &[f64], target: &[f64], scale: f64) -> Result<f64> {
    if alpha.len() != target.len() {
        return Err(Error::DimensionMismatch {
            expected: target.len(),
            found: alpha.len(),
        });
    }
    if !(scale > 0.0) {
        return Err(Error::InvalidInput(format!("scale must be positive, got {scale}")));
    }
    let dist = alpha
        .iter()
        .zip(target)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    Ok((-dist / scale).exp())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn renderer(n: usize) -> Renderer {
        Renderer::new(
            n,
            RenderSpec {
                width: 32,
                height: 32,
                prompt_seed: 4,
                collection_seed: 11,
            },
        )
        .unwrap()
    }

    #[test]
    fn zero_alpha_is_base_canvas() {
        let r = renderer(5);
        let f = r.field(&[0.0; 5]).unwrap();
        assert_eq!(f, r.canvas);
    }

    #[test]
    fn deterministic_and_png_encodes() {
        let r = renderer(4);
        let a = [0.3, 0.0, 0.8, 0.1];
        let i1 = r.render(&a).unwrap();
        let i2 = renderer(4).render(&a).unwrap();
        assert_eq!(i1, i2);
        let png = i1.to_png();
        assert_eq!(&png[1..4], b"PNG");
        assert_eq!(png, i2.to_png());
    }

    #[test]
    fn basis_depends_only_on_seed_and_id() {
        assert_eq!(StyleBasis::generate(3, 7), StyleBasis::generate(3, 7));
        assert_ne!(StyleBasis::generate(3, 7), StyleBasis::generate(4, 7));
        for i in 0..50 {
            let b = StyleBasis::generate(9, i);
            assert!((2.0..=16.0).contains(&b.frequency));
        }
    }

    #[test]
    fn tone_map_stays_in_unit_interval() {
        for base in [0.0, 0.2, 0.5, 1.0] {
            for d in [-50.0, -1.0, 0.0, 0.3, 80.0] {
                let v = tone_map(base, d);
                assert!((0.0..=1.0).contains(&v));
            }
        }
    }

    #[test]
    fn similarity_extremes() {
        let black = Image {
            width: 2,
            height: 2,
            data: vec![0; 12],
        };
        let white = Image {
            width: 2,
            height: 2,
            data: vec![255; 12],
        };
        assert_eq!(image_similarity(&black, &black).unwrap(), 1.0);
        assert_eq!(image_similarity(&black, &white).unwrap(), 0.0);
        let small = Image {
            width: 1,
            height: 1,
            data: vec![0; 3],
        };
        assert!(image_similarity(&black, &small).is_err());
    }

    #[test]
    fn coefficient_similarity_definition() {
        assert_eq!(coefficient_similarity(&[0.2, 0.4], &[0.2, 0.4], 1.0).unwrap(), 1.0);
        let s = coefficient_similarity(&[1.0, 0.0], &[0.0, 0.0], 1.0).unwrap();
        assert!((s - (-1.0f64).exp()).abs() < 1e-15);
        assert!(coefficient_similarity(&[1.0], &[0.0, 0.0], 1.0).is_err());
    }
}
