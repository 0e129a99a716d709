//! Fractal 2-D Perlin gradient noise with a sine color map.
//!
//! Classic improved-Perlin construction: a seeded 256-entry permutation
//! table (doubled for wraparound), eight unit gradient directions, and the
//! quintic fade `6t⁵−15t⁴+10t³`. Octaves stack with lacunarity 2 and
//! persistence 0.5, renormalized so values stay in [−1, 1]; the sine map
//! `sin(2π·f·v)` is applied after the octave sum.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use crate::error::{Error, Result};
use crate::image_tensor::ImageTensor;
use crate::seed::splitmix64;

/// Four-parameter noise specification plus the permutation seed.
///
/// Defaults are max_norm 30, period 30, freq_sine 30, octaves 2.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PerlinConfig {
    /// Perturbation bound in 8-bit pixel-intensity units, 0..=255.
    pub max_norm: f64,
    /// Lattice cell size in pixels, > 0.
    pub period: f64,
    /// Sine color-map frequency (cycles per unit noise value), >= 0.
    pub freq_sine: f64,
    /// Octave count, >= 1.
    pub octaves: u32,
    /// Seed for the permutation tables.
    pub seed: u64,
}

impl Default for PerlinConfig {
    fn default() -> Self {
        Self {
            max_norm: 30.0,
            period: 30.0,
            freq_sine: 30.0,
            octaves: 2,
            seed: 0,
        }
    }
}

impl PerlinConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=255.0).contains(&self.max_norm) {
            return Err(Error::Parameter(format!(
                "max_norm must be within [0, 255], got {}",
                self.max_norm
            )));
        }
        if !(self.period > 0.0) {
            return Err(Error::Parameter(format!(
                "period must be positive, got {}",
                self.period
            )));
        }
        if !(self.freq_sine >= 0.0) {
            return Err(Error::Parameter(format!(
                "freq_sine must be non-negative, got {}",
                self.freq_sine
            )));
        }
        if self.octaves < 1 {
            return Err(Error::Parameter("octaves must be at least 1".into()));
        }
        Ok(())
    }

    /// Same config with a different permutation seed.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

/// The eight unit gradient directions used at lattice corners.
pub const GRADIENTS: [(f64, f64); 8] = [
    (1.0, 0.0),
    (-1.0, 0.0),
    (0.0, 1.0),
    (0.0, -1.0),
    (FRAC_1_SQRT_2, FRAC_1_SQRT_2),
    (-FRAC_1_SQRT_2, FRAC_1_SQRT_2),
    (FRAC_1_SQRT_2, -FRAC_1_SQRT_2),
    (-FRAC_1_SQRT_2, -FRAC_1_SQRT_2),
];

/// With unit gradients 2-D noise lies in ±√2/2; this rescales to ±1.
const RANGE_SCALE: f64 = std::f64::consts::SQRT_2;

/// Seeded permutation of 0..=255, doubled so `table[a + b]` needs no mask.
#[derive(Clone)]
pub struct PermutationTable {
    table: [u8; 512],
}

impl PermutationTable {
    pub fn new(seed: u64) -> Self {
        let mut perm: [u8; 256] = std::array::from_fn(|i| i as u8);
        let mut state = seed;
        for i in (1..256usize).rev() {
            let j = (splitmix64(&mut state) % (i as u64 + 1)) as usize;
            perm.swap(i, j);
        }
        let mut table = [0u8; 512];
        table[..256].copy_from_slice(&perm);
        table[256..].copy_from_slice(&perm);
        Self { table }
    }

    /// Gradient index (0..8) for the lattice corner `(xi, yi)`.
    #[inline]
    pub fn gradient_index(&self, xi: i64, yi: i64) -> usize {
        let xw = xi.rem_euclid(256) as usize;
        let yw = yi.rem_euclid(256) as usize;
        (self.table[self.table[xw] as usize + yw] & 7) as usize
    }
}

#[inline]
fn fade(t: f64) -> f64 {
    t * t * t * (t * (t * 6.0 - 15.0) + 10.0)
}

#[inline]
fn lerp(t: f64, a: f64, b: f64) -> f64 {
    a + t * (b - a)
}

/// Single-octave gradient noise over cells of size `period`, in [−1, 1] and
/// exactly zero on the lattice.
pub fn perlin2(x: f64, y: f64, period: f64, seed: u64) -> f64 {
    perlin2_with(x, y, period, &PermutationTable::new(seed))
}

/// As `perlin2` but with a prebuilt permutation table.
pub fn perlin2_with(x: f64, y: f64, period: f64, table: &PermutationTable) -> f64 {
    let sx = x / period;
    let sy = y / period;
    let x0 = sx.floor();
    let y0 = sy.floor();
    let fx = sx - x0;
    let fy = sy - y0;
    let xi = x0 as i64;
    let yi = y0 as i64;

    let dot = |gx: i64, gy: i64, dx: f64, dy: f64| -> f64 {
        let (gvx, gvy) = GRADIENTS[table.gradient_index(gx, gy)];
        gvx * dx + gvy * dy
    };
    let n00 = dot(xi, yi, fx, fy);
    let n10 = dot(xi + 1, yi, fx - 1.0, fy);
    let n01 = dot(xi, yi + 1, fx, fy - 1.0);
    let n11 = dot(xi + 1, yi + 1, fx - 1.0, fy - 1.0);

    let u = fade(fx);
    let v = fade(fy);
    let value = lerp(v, lerp(u, n00, n10), lerp(u, n01, n11)) * RANGE_SCALE;
    value.clamp(-1.0, 1.0)
}

const LACUNARITY: f64 = 2.0;
const PERSISTENCE: f64 = 0.5;

/// Octave sum `Σ persistence^o · perlin2(x·2^o, y·2^o, period, seed⊕o)`,
/// renormalized by `Σ persistence^o`.
pub fn fractal_perlin2(x: f64, y: f64, config: &PerlinConfig) -> f64 {
    let tables: Vec<PermutationTable> = (0..config.octaves)
        .map(|o| PermutationTable::new(config.seed ^ o as u64))
        .collect();
    fractal_perlin2_with(x, y, config.period, &tables)
}

fn fractal_perlin2_with(x: f64, y: f64, period: f64, tables: &[PermutationTable]) -> f64 {
    let mut sum = 0.0;
    let mut amplitude = 1.0;
    let mut frequency = 1.0;
    let mut norm = 0.0;
    for table in tables {
        sum += amplitude * perlin2_with(x * frequency, y * frequency, period, table);
        norm += amplitude;
        amplitude *= PERSISTENCE;
        frequency *= LACUNARITY;
    }
    sum / norm
}

/// Sine color map `sin(2π · freq_sine · v)`.
#[inline]
pub fn sine_colormap(v: f64, freq_sine: f64) -> f64 {
    (2.0 * PI * freq_sine * v).sin()
}

/// A generated noise raster; values lie in [−1, 1] and the field is a pure
/// function of `(width, height, config)`.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseField {
    width: usize,
    height: usize,
    values: Vec<f64>,
}

impl NoiseField {
    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn value(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Renders the field as a grayscale image, mapping [−1, 1] to [0, 1].
    pub fn to_grayscale_image(&self) -> ImageTensor {
        let mut img = ImageTensor::zeros(self.width, self.height);
        for y in 0..self.height {
            for x in 0..self.width {
                let v = ((self.value(x, y) + 1.0) / 2.0) as f32;
                img.set_pixel(x, y, [v, v, v]);
            }
        }
        img
    }
}

/// Evaluates `sine_colormap(fractal_perlin2(x, y), freq_sine)` at every
/// pixel center `(x, y)` of a `width`×`height` raster.
pub fn generate_noise_field(width: usize, height: usize, config: &PerlinConfig) -> Result<NoiseField> {
    config.validate()?;
    if width == 0 || height == 0 {
        return Err(Error::Parameter(format!(
            "noise field dimensions must be at least 1x1, got {width}x{height}"
        )));
    }
    let tables: Vec<PermutationTable> = (0..config.octaves)
        .map(|o| PermutationTable::new(config.seed ^ o as u64))
        .collect();
    let mut values = Vec::with_capacity(width * height);
    for y in 0..height {
        for x in 0..width {
            let raw = fractal_perlin2_with(x as f64, y as f64, config.period, &tables);
            values.push(sine_colormap(raw, config.freq_sine));
        }
    }
    Ok(NoiseField {
        width,
        height,
        values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_on_lattice_points() {
        for seed in [0u64, 1, 42, u64::MAX] {
            for period in [30.0, 7.0, 1.0, 2.5] {
                for k in -3i64..=3 {
                    for m in -3i64..=3 {
                        let v = perlin2(k as f64 * period, m as f64 * period, period, seed);
                        assert_eq!(v, 0.0, "seed={seed} period={period} k={k} m={m}");
                    }
                }
            }
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let a = perlin2(3.7, -12.2, 30.0, 99);
        let b = perlin2(3.7, -12.2, 30.0, 99);
        assert_eq!(a, b);
        assert_ne!(a, perlin2(3.7, -12.2, 30.0, 100));
    }

    #[test]
    fn values_bounded() {
        let mut state = 5u64;
        for _ in 0..2000 {
            let x = (splitmix64(&mut state) % 10_000) as f64 / 13.0;
            let y = (splitmix64(&mut state) % 10_000) as f64 / 17.0;
            let v = perlin2(x, y, 9.0, 3);
            assert!((-1.0..=1.0).contains(&v), "{v} at ({x}, {y})");
        }
    }

    #[test]
    fn mean_near_zero_over_dense_grid() {
        // 10x10 cells of period 10, sampled every half pixel
        let mut sum = 0.0;
        let mut count = 0usize;
        let mut i = 0;
        while i < 200 {
            let mut j = 0;
            while j < 200 {
                sum += perlin2(i as f64 * 0.5, j as f64 * 0.5, 10.0, 11);
                count += 1;
                j += 1;
            }
            i += 1;
        }
        let mean = sum / count as f64;
        assert!(mean.abs() < 0.02, "grid mean {mean}");
    }

    #[test]
    fn single_octave_fractal_equals_perlin2() {
        let config = PerlinConfig {
            octaves: 1,
            seed: 17,
            ..PerlinConfig::default()
        };
        for &(x, y) in &[(0.3, 4.4), (15.9, 2.2), (101.5, 77.7)] {
            assert_eq!(
                fractal_perlin2(x, y, &config),
                perlin2(x, y, config.period, config.seed)
            );
        }
    }

    #[test]
    fn two_octaves_expand_to_weighted_sum() {
        let config = PerlinConfig {
            octaves: 2,
            seed: 23,
            ..PerlinConfig::default()
        };
        for &(x, y) in &[(1.1, 2.9), (44.0, 13.5), (7.25, 91.0)] {
            let p0 = perlin2(x, y, config.period, config.seed);
            let p1 = perlin2(2.0 * x, 2.0 * y, config.period, config.seed ^ 1);
            let expect = (p0 + 0.5 * p1) / 1.5;
            let got = fractal_perlin2(x, y, &config);
            assert!((got - expect).abs() < 1e-15, "{got} vs {expect}");
        }
    }

    #[test]
    fn fractal_vanishes_at_origin() {
        let config = PerlinConfig::default().with_seed(5);
        assert_eq!(fractal_perlin2(0.0, 0.0, &config), 0.0);
    }

    #[test]
    fn sine_colormap_values() {
        assert_eq!(sine_colormap(0.0, 30.0), 0.0);
        // 2π·f·v = π/2 peaks at exactly 1
        let v = 0.25 / 12.0;
        assert!((sine_colormap(v, 12.0) - 1.0).abs() < 1e-12);
        assert!((sine_colormap(0.01, 30.0) - 0.951_056_516_295_153_5).abs() < 1e-12);
    }

    #[test]
    fn field_is_deterministic_and_bounded() {
        let config = PerlinConfig::default().with_seed(7);
        let a = generate_noise_field(64, 48, &config).unwrap();
        let b = generate_noise_field(64, 48, &config).unwrap();
        assert_eq!(a, b);
        assert!(a.values().iter().all(|v| (-1.0..=1.0).contains(v)));
        assert_ne!(
            a,
            generate_noise_field(64, 48, &config.with_seed(8)).unwrap()
        );
    }

    #[test]
    fn one_by_one_field_at_origin_is_zero() {
        let config = PerlinConfig::default().with_seed(3);
        let f = generate_noise_field(1, 1, &config).unwrap();
        assert_eq!(f.value(0, 0), 0.0);
    }

    #[test]
    fn zero_dims_rejected() {
        let config = PerlinConfig::default();
        assert!(generate_noise_field(0, 5, &config).is_err());
        assert!(generate_noise_field(5, 0, &config).is_err());
    }

    #[test]
    fn invalid_configs_rejected() {
        let bad_norm = PerlinConfig {
            max_norm: 300.0,
            ..PerlinConfig::default()
        };
        assert!(bad_norm.validate().is_err());
        let bad_period = PerlinConfig {
            period: 0.0,
            ..PerlinConfig::default()
        };
        assert!(bad_period.validate().is_err());
        let bad_octaves = PerlinConfig {
            octaves: 0,
            ..PerlinConfig::default()
        };
        assert!(bad_octaves.validate().is_err());
    }

    #[test]
    fn field_histogram_roughly_symmetric() {
        let config = PerlinConfig::default().with_seed(0);
        let f = generate_noise_field(64, 64, &config).unwrap();
        let pos = f.values().iter().filter(|&&v| v > 0.0).count() as f64;
        let neg = f.values().iter().filter(|&&v| v < 0.0).count() as f64;
        let total = f.values().len() as f64;
        assert!(
            (pos - neg).abs() / total <= 0.02,
            "pos {pos} vs neg {neg} of {total}"
        );
    }
}
