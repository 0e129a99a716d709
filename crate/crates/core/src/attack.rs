//! Sign-bounded adversarial perturbation: `adv = clip(img + ε·sign(noise))`
//! with `ε = max_norm / 255` on [0, 1] images.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::image_tensor::ImageTensor;
use crate::perlin::{generate_noise_field, NoiseField, PerlinConfig};
use crate::seed::{derive_seed, stream};

/// How the scalar noise field maps onto RGB.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelMode {
    /// One field, its sign broadcast to all three channels.
    #[default]
    Broadcast,
    /// An independent field per channel.
    PerChannel,
}

/// Whether each image gets its own field or all share one.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldMode {
    /// Field seed derived from `(config.seed, image id)`.
    #[default]
    PerImage,
    /// Every image uses the field seeded by `config.seed` alone.
    Fixed,
}

#[inline]
fn sign(v: f64) -> f32 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Adds `(max_norm/255)·sign(field)` to every pixel, broadcast across the
/// three channels, then clips to [0, 1].
pub fn apply_perturbation(
    image: &ImageTensor,
    field: &NoiseField,
    max_norm: f64,
) -> Result<ImageTensor> {
    if field.width() != image.width() || field.height() != image.height() {
        return Err(Error::Shape(format!(
            "noise field {}x{} does not match image {}x{}",
            field.width(),
            field.height(),
            image.width(),
            image.height()
        )));
    }
    if !(0.0..=255.0).contains(&max_norm) {
        return Err(Error::Parameter(format!(
            "max_norm must be within [0, 255], got {max_norm}"
        )));
    }
    let eps = (max_norm / 255.0) as f32;
    let mut out = image.clone();
    for y in 0..image.height() {
        for x in 0..image.width() {
            let step = eps * sign(field.value(x, y));
            let [r, g, b] = image.pixel(x, y);
            out.set_pixel(
                x,
                y,
                [
                    (r + step).clamp(0.0, 1.0),
                    (g + step).clamp(0.0, 1.0),
                    (b + step).clamp(0.0, 1.0),
                ],
            );
        }
    }
    Ok(out)
}

/// As `apply_perturbation` with one independent field per channel.
pub fn apply_perturbation_per_channel(
    image: &ImageTensor,
    fields: &[NoiseField; 3],
    max_norm: f64,
) -> Result<ImageTensor> {
    for f in fields {
        if f.width() != image.width() || f.height() != image.height() {
            return Err(Error::Shape(format!(
                "noise field {}x{} does not match image {}x{}",
                f.width(),
                f.height(),
                image.width(),
                image.height()
            )));
        }
    }
    if !(0.0..=255.0).contains(&max_norm) {
        return Err(Error::Parameter(format!(
            "max_norm must be within [0, 255], got {max_norm}"
        )));
    }
    let eps = (max_norm / 255.0) as f32;
    let mut out = image.clone();
    for y in 0..image.height() {
        for x in 0..image.width() {
            let px = image.pixel(x, y);
            let mut adv = [0.0f32; 3];
            for c in 0..3 {
                adv[c] = (px[c] + eps * sign(fields[c].value(x, y))).clamp(0.0, 1.0);
            }
            out.set_pixel(x, y, adv);
        }
    }
    Ok(out)
}

/// Noise seed for one image under the given field mode.
pub fn image_noise_seed(config: &PerlinConfig, mode: FieldMode, image_id: u64) -> u64 {
    match mode {
        FieldMode::PerImage => derive_seed(config.seed, stream::NOISE_FIELD, image_id),
        FieldMode::Fixed => config.seed,
    }
}

/// Perturbs one identified image.
pub fn attack_image(
    image: &ImageTensor,
    image_id: u64,
    config: &PerlinConfig,
    field_mode: FieldMode,
    channel_mode: ChannelMode,
) -> Result<ImageTensor> {
    config.validate()?;
    let base = image_noise_seed(config, field_mode, image_id);
    match channel_mode {
        ChannelMode::Broadcast => {
            let field =
                generate_noise_field(image.width(), image.height(), &config.with_seed(base))?;
            apply_perturbation(image, &field, config.max_norm)
        }
        ChannelMode::PerChannel => {
            let mut fields = Vec::with_capacity(3);
            for c in 0..3u64 {
                let seed = derive_seed(base, stream::CHANNEL, c);
                fields.push(generate_noise_field(
                    image.width(),
                    image.height(),
                    &config.with_seed(seed),
                )?);
            }
            let fields: [NoiseField; 3] = fields.try_into().expect("three fields");
            apply_perturbation_per_channel(image, &fields, config.max_norm)
        }
    }
}

/// Result of a batch attack: per-image successes and failures, both tagged
/// with the image id.
#[derive(Debug)]
pub struct AttackOutcome {
    pub images: Vec<(u64, ImageTensor)>,
    pub failures: Vec<(u64, Error)>,
}

/// Attacks a batch with per-image noise fields; failures are collected per
/// image, the batch continues.
pub fn attack_batch(images: &[(u64, ImageTensor)], config: &PerlinConfig) -> AttackOutcome {
    attack_batch_with(images, config, FieldMode::PerImage, ChannelMode::Broadcast)
}

pub fn attack_batch_with(
    images: &[(u64, ImageTensor)],
    config: &PerlinConfig,
    field_mode: FieldMode,
    channel_mode: ChannelMode,
) -> AttackOutcome {
    let results: Vec<(u64, Result<ImageTensor>)> = images
        .par_iter()
        .map(|(id, img)| (*id, attack_image(img, *id, config, field_mode, channel_mode)))
        .collect();
    let mut outcome = AttackOutcome {
        images: Vec::with_capacity(results.len()),
        failures: Vec::new(),
    };
    for (id, res) in results {
        match res {
            Ok(img) => outcome.images.push((id, img)),
            Err(e) => outcome.failures.push((id, e)),
        }
    }
    outcome
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::splitmix64;

    fn random_image(w: usize, h: usize, seed: u64) -> ImageTensor {
        let mut img = ImageTensor::zeros(w, h);
        let mut state = seed;
        for v in img.as_mut_slice() {
            *v = (splitmix64(&mut state) % 1000) as f32 / 999.0;
        }
        img
    }

    #[test]
    fn zero_max_norm_is_identity() {
        let img = random_image(16, 12, 1);
        let field = generate_noise_field(16, 12, &PerlinConfig::default().with_seed(2)).unwrap();
        let out = apply_perturbation(&img, &field, 0.0).unwrap();
        assert_eq!(img, out);
    }

    #[test]
    fn saturated_pixel_stays_clipped() {
        let mut img = ImageTensor::zeros(8, 8);
        for v in img.as_mut_slice() {
            *v = 1.0;
        }
        let field = generate_noise_field(8, 8, &PerlinConfig::default().with_seed(3)).unwrap();
        let out = apply_perturbation(&img, &field, 30.0).unwrap();
        for y in 0..8 {
            for x in 0..8 {
                if field.value(x, y) > 0.0 {
                    assert_eq!(out.pixel(x, y), [1.0, 1.0, 1.0]);
                }
            }
        }
    }

    #[test]
    fn midgray_shifts_by_eps() {
        let mut img = ImageTensor::zeros(4, 4);
        for v in img.as_mut_slice() {
            *v = 0.5;
        }
        let field = generate_noise_field(4, 4, &PerlinConfig::default().with_seed(11)).unwrap();
        let out = apply_perturbation(&img, &field, 30.0).unwrap();
        let eps = 30.0f32 / 255.0;
        for y in 0..4 {
            for x in 0..4 {
                if field.value(x, y) > 0.0 {
                    let got = out.pixel(x, y)[0];
                    assert!((got - (0.5 + eps)).abs() < 1e-7, "{got}");
                }
            }
        }
    }

    #[test]
    fn zero_noise_pixels_unchanged() {
        // pixel (0, 0) sits on the lattice, where the field is exactly zero
        let img = random_image(8, 8, 21);
        let cfg = PerlinConfig::default().with_seed(4);
        let field = generate_noise_field(8, 8, &cfg).unwrap();
        assert_eq!(field.value(0, 0), 0.0);
        let out = apply_perturbation(&img, &field, 30.0).unwrap();
        assert_eq!(out.pixel(0, 0), img.pixel(0, 0));
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let img = random_image(8, 8, 5);
        let field = generate_noise_field(9, 8, &PerlinConfig::default()).unwrap();
        assert!(apply_perturbation(&img, &field, 30.0).is_err());
    }

    #[test]
    fn batch_is_deterministic_and_bounded() {
        let config = PerlinConfig::default().with_seed(77);
        let batch: Vec<(u64, ImageTensor)> = (0..10)
            .map(|i| (i as u64, random_image(20, 14, 100 + i as u64)))
            .collect();
        let a = attack_batch(&batch, &config);
        let b = attack_batch(&batch, &config);
        assert!(a.failures.is_empty());
        assert_eq!(a.images.len(), 10);
        for ((ida, imga), (idb, imgb)) in a.images.iter().zip(&b.images) {
            assert_eq!(ida, idb);
            assert_eq!(imga, imgb);
        }
        let bound = 30.0 / 255.0 + 1e-7;
        for ((id, adv), (_, orig)) in a.images.iter().zip(&batch) {
            assert!(adv.all_in_unit_range(), "image {id} out of range");
            for (x, o) in adv.as_slice().iter().zip(orig.as_slice()) {
                assert!((x - o).abs() <= bound, "image {id}: |{x} - {o}|");
            }
        }
    }

    #[test]
    fn per_image_fields_differ_but_fixed_mode_shares() {
        let config = PerlinConfig::default().with_seed(9);
        let img = random_image(24, 24, 50);
        let a = attack_image(&img, 0, &config, FieldMode::PerImage, ChannelMode::Broadcast)
            .unwrap();
        let b = attack_image(&img, 1, &config, FieldMode::PerImage, ChannelMode::Broadcast)
            .unwrap();
        assert_ne!(a, b);
        let fa = attack_image(&img, 0, &config, FieldMode::Fixed, ChannelMode::Broadcast).unwrap();
        let fb = attack_image(&img, 1, &config, FieldMode::Fixed, ChannelMode::Broadcast).unwrap();
        assert_eq!(fa, fb);
    }

    #[test]
    fn per_channel_mode_differs_from_broadcast() {
        let config = PerlinConfig::default().with_seed(13);
        let img = random_image(24, 24, 51);
        let mono = attack_image(&img, 0, &config, FieldMode::PerImage, ChannelMode::Broadcast)
            .unwrap();
        let color = attack_image(
            &img,
            0,
            &config,
            FieldMode::PerImage,
            ChannelMode::PerChannel,
        )
        .unwrap();
        assert_ne!(mono, color);
        assert!(color.all_in_unit_range());
    }

    #[test]
    fn empty_batch_is_empty() {
        let out = attack_batch(&[], &PerlinConfig::default());
        assert!(out.images.is_empty());
        assert!(out.failures.is_empty());
    }
}
