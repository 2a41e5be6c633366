//! Global-distribution-driven augmentation.
//!
//! The server turns the pooled class histogram into per-class targets; each
//! client then expands its own minority-class samples so that the pooled
//! class totals land exactly on those targets.

use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::apportion;
use crate::dataset::{class_histogram, ClassDistribution, ClientPartition, Sample};
use crate::error::{Error, Result};
use crate::seed::{self, SimRng};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AugmentationPlan {
    pub alpha: f64,
    /// Mean class count `C̄`.
    pub mean: f64,
    pub counts: Vec<u64>,
    /// Classes with `C_i < C̄`, ascending.
    pub aug_set: Vec<usize>,
    pub targets: Vec<u64>,
}

impl AugmentationPlan {
    /// `target_i - C_i` for every class.
    pub fn deficits(&self) -> Vec<u64> {
        self.targets
            .iter()
            .zip(&self.counts)
            .map(|(t, c)| t - c)
            .collect()
    }

    pub fn total_added(&self) -> u64 {
        self.deficits().iter().sum()
    }

    pub fn is_noop(&self) -> bool {
        self.total_added() == 0
    }
}

fn class_target(count: u64, mean: f64, alpha: f64) -> u64 {
    if count == 0 {
        // No holder exists, so nothing can be expanded.
        return 0;
    }
    let c = count as f64;
    let scaled = if alpha == 0.0 {
        c
    } else if alpha == 1.0 {
        mean
    } else {
        c * (mean / c).powf(alpha)
    };
    (scaled.round() as u64).max(count)
}

/// Per-class targets `round(C_i · (C̄/C_i)^alpha)` for every `C_i < C̄`.
pub fn compute_plan(global: &ClassDistribution, alpha: f64) -> Result<AugmentationPlan> {
    if !alpha.is_finite() || alpha < 0.0 {
        return Err(Error::config("alpha", "must be finite and >= 0"));
    }
    let total = global.total();
    if total == 0 {
        return Err(Error::config("alpha", "cannot plan augmentation for an empty dataset"));
    }
    let counts = global.counts().to_vec();
    let mean = total as f64 / counts.len() as f64;
    let aug_set: Vec<usize> = (0..counts.len())
        .filter(|&i| (counts[i] as f64) < mean)
        .collect();
    let mut targets = counts.clone();
    for &i in &aug_set {
        targets[i] = class_target(counts[i], mean, alpha);
    }
    Ok(AugmentationPlan {
        alpha,
        mean,
        counts,
        aug_set,
        targets,
    })
}

/// How many new samples each client contributes per class. The deficit of
/// class `i` is apportioned over clients in proportion to their class-`i`
/// holdings (largest remainder), so only holders ever receive work.
pub fn client_gains(histograms: &[ClassDistribution], plan: &AugmentationPlan) -> Result<Vec<Vec<u64>>> {
    let n = plan.counts.len();
    let mut gains = vec![vec![0u64; n]; histograms.len()];
    let pooled = ClassDistribution::sum(n, histograms);
    if pooled.counts() != plan.counts.as_slice() {
        return Err(Error::config(
            "alpha",
            "augmentation plan was computed from a different global histogram",
        ));
    }
    for (class, deficit) in plan.deficits().into_iter().enumerate() {
        if deficit == 0 {
            continue;
        }
        let holdings: Vec<u64> = histograms.iter().map(|h| h.counts()[class]).collect();
        let alloc = apportion::by_counts(&holdings, deficit)?;
        for (k, a) in alloc.into_iter().enumerate() {
            assert!(a == 0 || holdings[k] > 0, "client {k} asked to augment class {class} it lacks");
            gains[k][class] = a;
        }
    }
    Ok(gains)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TransformConfig {
    /// `x' = s · (x + ε)`, `ε ~ N(0, σ² I)`, `s ~ U[scale_min, scale_max]`.
    VectorJitter {
        sigma: f64,
        scale_min: f64,
        scale_max: f64,
    },
    /// Random shift, rotation, shear and zoom of a `height × width` image
    /// (bilinear resampling, zero fill). Angles are in degrees, shift in pixels.
    ImageAffine {
        width: usize,
        height: usize,
        max_shift: f64,
        max_rotation: f64,
        max_shear: f64,
        zoom_min: f64,
        zoom_max: f64,
    },
}

impl Default for TransformConfig {
    fn default() -> Self {
        TransformConfig::VectorJitter {
            sigma: 0.1,
            scale_min: 0.95,
            scale_max: 1.05,
        }
    }
}

impl TransformConfig {
    pub fn validate(&self, feature_dim: usize) -> Result<()> {
        match *self {
            TransformConfig::VectorJitter {
                sigma,
                scale_min,
                scale_max,
            } => {
                if !(sigma >= 0.0) || !sigma.is_finite() {
                    return Err(Error::config("transform.sigma", "must be finite and >= 0"));
                }
                if !(scale_min <= scale_max) || !scale_min.is_finite() || !scale_max.is_finite() {
                    return Err(Error::config("transform.scale_min", "range must be nonempty"));
                }
            }
            TransformConfig::ImageAffine {
                width,
                height,
                max_shift,
                max_rotation,
                max_shear,
                zoom_min,
                zoom_max,
            } => {
                if width * height != feature_dim {
                    return Err(Error::config(
                        "transform.width",
                        format!("{width}x{height} image does not match feature dim {feature_dim}"),
                    ));
                }
                if [max_shift, max_rotation, max_shear].iter().any(|v| !(*v >= 0.0)) {
                    return Err(Error::config("transform", "ranges must be >= 0"));
                }
                if !(zoom_min > 0.0 && zoom_min <= zoom_max) {
                    return Err(Error::config("transform.zoom_min", "need 0 < zoom_min <= zoom_max"));
                }
            }
        }
        Ok(())
    }
}

fn uniform(rng: &mut SimRng, lo: f64, hi: f64) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..=hi)
    }
}

fn symmetric(rng: &mut SimRng, max: f64) -> f64 {
    uniform(rng, -max, max)
}

fn bilinear(img: &[f64], width: usize, height: usize, x: f64, y: f64) -> f64 {
    let at = |ix: isize, iy: isize| -> f64 {
        if ix < 0 || iy < 0 || ix >= width as isize || iy >= height as isize {
            0.0
        } else {
            img[iy as usize * width + ix as usize]
        }
    };
    let (x0, y0) = (x.floor(), y.floor());
    let (fx, fy) = (x - x0, y - y0);
    let (x0, y0) = (x0 as isize, y0 as isize);
    at(x0, y0) * (1.0 - fx) * (1.0 - fy)
        + at(x0 + 1, y0) * fx * (1.0 - fy)
        + at(x0, y0 + 1) * (1.0 - fx) * fy
        + at(x0 + 1, y0 + 1) * fx * fy
}

/// Produce one augmented copy of `sample`. The label is preserved and the id
/// is left for the caller to replace.
pub fn transform_sample(sample: &Sample, config: &TransformConfig, rng: &mut SimRng) -> Sample {
    let features = match *config {
        TransformConfig::VectorJitter {
            sigma,
            scale_min,
            scale_max,
        } => {
            let scale = uniform(rng, scale_min, scale_max);
            if sigma == 0.0 {
                sample.features.iter().map(|x| scale * x).collect()
            } else {
                let noise = Normal::new(0.0, sigma).expect("sigma validated");
                sample
                    .features
                    .iter()
                    .map(|x| scale * (x + noise.sample(rng)))
                    .collect()
            }
        }
        TransformConfig::ImageAffine {
            width,
            height,
            max_shift,
            max_rotation,
            max_shear,
            zoom_min,
            zoom_max,
        } => {
            let theta = symmetric(rng, max_rotation) * PI / 180.0;
            let shear = symmetric(rng, max_shear) * PI / 180.0;
            let zoom = uniform(rng, zoom_min, zoom_max);
            let (tx, ty) = (symmetric(rng, max_shift), symmetric(rng, max_shift));
            // Forward map A = R(theta) · Shear · Zoom about the image center;
            // sample each output pixel from A^{-1}(p - c - t) + c.
            let (c, s) = (theta.cos(), theta.sin());
            let sh = shear.tan();
            let a = [[c * zoom, (c * sh - s) * zoom], [s * zoom, (s * sh + c) * zoom]];
            let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
            let inv = [[a[1][1] / det, -a[0][1] / det], [-a[1][0] / det, a[0][0] / det]];
            let (cx, cy) = ((width as f64 - 1.0) / 2.0, (height as f64 - 1.0) / 2.0);
            let mut out = Vec::with_capacity(width * height);
            for py in 0..height {
                for px in 0..width {
                    let dx = px as f64 - cx - tx;
                    let dy = py as f64 - cy - ty;
                    let sx = inv[0][0] * dx + inv[0][1] * dy + cx;
                    let sy = inv[1][0] * dx + inv[1][1] * dy + cy;
                    out.push(bilinear(&sample.features, width, height, sx, sy));
                }
            }
            out
        }
    };
    Sample {
        id: sample.id,
        features,
        label: sample.label,
    }
}

/// Expand every client's minority-class samples according to `plan`.
///
/// Client `k`'s share of class `i`'s deficit is spread round-robin over its
/// class-`i` samples. Fresh ids start after the partition's largest id and
/// are pre-assigned per client, and every client draws from its own seeded
/// stream, so the result does not depend on execution order. Clients that
/// gained samples are shuffled afterwards; originals are always kept.
pub fn apply_plan(
    partition: &ClientPartition,
    plan: &AugmentationPlan,
    transform: &TransformConfig,
    seed: u64,
) -> Result<ClientPartition> {
    transform.validate(partition.feature_dim())?;
    let gains = client_gains(&partition.histograms(), plan)?;
    let mut next_id = partition.max_id().map_or(0, |m| m + 1);
    let first_ids: Vec<u64> = gains
        .iter()
        .map(|g| {
            let start = next_id;
            next_id += g.iter().sum::<u64>();
            start
        })
        .collect();

    let mut out = partition.clone();
    out.clients_mut()
        .par_iter_mut()
        .zip(gains.par_iter().zip(first_ids.par_iter()))
        .enumerate()
        .for_each(|(k, (client, (gain, &first_id)))| {
            if gain.iter().all(|&g| g == 0) {
                return;
            }
            let mut rng = seed::rng(seed, &[seed::tag::AUGMENT, k as u64]);
            let by_class = client.indices_by_class();
            let mut id = first_id;
            let mut added = Vec::with_capacity(gain.iter().sum::<u64>() as usize);
            for (class, &g) in gain.iter().enumerate() {
                let holders = &by_class[class];
                for j in 0..g as usize {
                    let src = &client.samples()[holders[j % holders.len()]];
                    let mut aug = transform_sample(src, transform, &mut rng);
                    aug.id = id;
                    id += 1;
                    added.push(aug);
                }
            }
            let samples = client.samples_mut();
            samples.extend(added);
            samples.shuffle(&mut rng);
        });
    debug_assert!(out
        .clients()
        .iter()
        .zip(partition.clients())
        .all(|(a, b)| class_histogram(a).total() >= class_histogram(b).total()));
    Ok(out)
}
