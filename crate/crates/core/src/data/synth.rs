//! Seeded synthetic skeleton actions.
//!
//! Every class animates the arms of a fixed standing skeleton with its own
//! sinusoid (frequency, amplitude and left/right phase keyed by the class
//! index). Camera views squash and shift the x axis. All per-sample variation
//! is noise scaled by the view's sigma, so a zero sigma makes every sample of
//! one (class, view) pair identical.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{
    Attributes, DataError, Dataset, Frame, Gender, Keypoint, LabeledSample, Pose, SkeletonSequence, View,
    DEFAULT_FRAME_RATE, KEYPOINTS,
};

/// Noise standard deviation (normalised units) per camera view.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ViewNoise {
    pub left: f64,
    pub center: f64,
    pub right: f64,
}

impl ViewNoise {
    pub fn uniform(sigma: f64) -> Self {
        Self { left: sigma, center: sigma, right: sigma }
    }

    pub fn get(&self, view: View) -> f64 {
        match view {
            View::Left => self.left,
            View::Center => self.center,
            View::Right => self.right,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_classes: usize,
    pub samples_per_class: usize,
    pub frames: usize,
    pub noise: ViewNoise,
    pub seed: u64,
    /// Subject ids cycle through this many values.
    #[serde(default = "default_subjects")]
    pub n_subjects: usize,
}

fn default_subjects() -> usize {
    15
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_classes: 3,
            samples_per_class: 300,
            frames: 64,
            noise: ViewNoise::uniform(0.05),
            seed: 7,
            n_subjects: default_subjects(),
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), DataError> {
        let noise = [self.noise.left, self.noise.center, self.noise.right];
        if self.n_classes < 2 {
            return Err(DataError::Invalid("synthetic data needs at least 2 classes".into()));
        }
        if self.samples_per_class == 0 || self.frames == 0 || self.n_subjects == 0 {
            return Err(DataError::Invalid("samples per class, frames and subjects must be >= 1".into()));
        }
        if noise.iter().any(|s| !(*s >= 0.0) || !s.is_finite()) {
            return Err(DataError::Invalid("noise sigmas must be finite and >= 0".into()));
        }
        Ok(())
    }
}

/// Standing skeleton, mid-hip at the origin, image convention (y grows down).
const REST_POSE: [(f64, f64); KEYPOINTS] = [
    (0.0, -0.55),
    (-0.03, -0.58),
    (0.03, -0.58),
    (-0.06, -0.56),
    (0.06, -0.56),
    (-0.15, -0.42),
    (0.15, -0.42),
    (-0.2, -0.2),
    (0.2, -0.2),
    (-0.22, 0.0),
    (0.22, 0.0),
    (-0.1, 0.0),
    (0.1, 0.0),
    (-0.1, 0.25),
    (0.1, 0.25),
    (-0.1, 0.5),
    (0.1, 0.5),
];
const LEFT_ARM: [(usize, f64); 2] = [(7, 0.5), (9, 1.0)];
const RIGHT_ARM: [(usize, f64); 2] = [(8, 0.5), (10, 1.0)];
const GRID: usize = 12;

struct ClassMotion {
    freq_hz: f64,
    amplitude: f64,
    right_phase: f64,
    sway: f64,
}

fn class_motion(k: usize, n: usize) -> ClassMotion {
    ClassMotion {
        freq_hz: 0.5 + 0.25 * k as f64,
        amplitude: 0.08 + 0.04 * (k % 2) as f64,
        right_phase: std::f64::consts::PI * k as f64 / n as f64,
        sway: 0.03 * ((k % 3) as f64 - 1.0),
    }
}

fn view_transform(view: View, x: f64) -> f64 {
    match view {
        View::Left => 0.6 * x - 0.05,
        View::Center => x,
        View::Right => -0.6 * x + 0.05,
    }
}

fn grid_attributes(j: usize, n_subjects: usize) -> Attributes {
    let cell = j % GRID;
    Attributes {
        gender: if (cell / 6).is_multiple_of(2) { Gender::Male } else { Gender::Female },
        pose: if (cell / 3).is_multiple_of(2) { Pose::Stand } else { Pose::Walk },
        view: View::ALL[cell % 3],
        subject_id: format!("S{:02}", (j / 3) % n_subjects),
    }
}

/// Deterministic for a fixed seed. Attributes cycle round-robin over the
/// full gender × pose × view grid in sample order. Subjects advance once per
/// view cycle, so every subject is recorded from every view.
pub fn generate_synthetic(config: &SynthConfig) -> Result<Dataset, DataError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let classes: Vec<String> = (0..config.n_classes).map(|k| format!("action{k:02}")).collect();
    let mut samples = Vec::with_capacity(config.n_classes * config.samples_per_class);

    for k in 0..config.n_classes {
        let motion = class_motion(k, config.n_classes);
        for i in 0..config.samples_per_class {
            let j = k * config.samples_per_class + i;
            let attributes = grid_attributes(j, config.n_subjects);
            let sigma = config.noise.get(attributes.view);
            let mut normal = || -> f64 { StandardNormal.sample(&mut rng) };
            let tempo = 1.0 + 2.0 * sigma * normal();
            let gain = 1.0 + 2.0 * sigma * normal();
            let shift = 10.0 * sigma * normal();

            let mut frames: Vec<Frame> = Vec::with_capacity(config.frames);
            for f in 0..config.frames {
                let t = f as f64 / DEFAULT_FRAME_RATE;
                let omega = 2.0 * std::f64::consts::PI * motion.freq_hz * tempo;
                let left = gain * motion.amplitude * (omega * t + shift).sin();
                let right = gain * motion.amplitude * (omega * t + shift + motion.right_phase).sin();
                let sway = motion.sway * (omega * 0.5 * t + shift).sin();
                let mut pose: [(f64, f64); KEYPOINTS] = REST_POSE;
                for &(idx, w) in &LEFT_ARM {
                    pose[idx].1 -= w * left;
                    pose[idx].0 += 0.3 * w * left;
                }
                for &(idx, w) in &RIGHT_ARM {
                    pose[idx].1 -= w * right;
                    pose[idx].0 -= 0.3 * w * right;
                }
                for p in pose.iter_mut().take(5) {
                    p.0 += sway;
                }
                let frame: Frame = std::array::from_fn(|kp| {
                    let (x, y) = pose[kp];
                    let nx = sigma * normal();
                    let ny = sigma * normal();
                    Keypoint::new(view_transform(attributes.view, x) + nx, y + ny)
                });
                frames.push(frame);
            }
            samples.push(LabeledSample {
                id: format!("syn-{j:05}"),
                sequence: SkeletonSequence::new(frames)?,
                attributes,
                action: k,
            });
        }
    }
    Ok(Dataset { classes, samples })
}
