//! Seeded synthetic pose sequences for testing the pipeline without a
//! recorded dataset.
//!
//! Bodies live in a 3-D frame measured in torso lengths: neck at the origin,
//! `y` pointing down, `z` towards a frontal camera, and the subject's right
//! side at negative `x`. Motions are sinusoids of limb angles. A viewpoint is
//! a rotation about the vertical axis followed by orthographic projection, so
//! `x` is compressed by `cos(angle)` and picks up depth; the mirrored
//! viewpoint uses the opposite angle. Pixel coordinates are quantized to
//! 1/256 px.

use std::f64::consts::PI;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::augment::sample_seed;
use crate::error::{Error, Result};
use crate::ingest::{DatasetManifest, ManifestEntry};
use crate::pose::{LandmarkId, Pose, Sample, Viewpoint, NUM_LANDMARKS};
use crate::records;

pub const PIXEL_QUANTUM: f64 = 1.0 / 256.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Archetype {
    Still,
    WaveOneArm,
    WaveTwoArms,
    Squat,
    March,
}

impl Archetype {
    pub const ALL: [Archetype; 5] = [
        Archetype::Still,
        Archetype::WaveOneArm,
        Archetype::WaveTwoArms,
        Archetype::Squat,
        Archetype::March,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Archetype::Still => "still",
            Archetype::WaveOneArm => "wave-one-arm",
            Archetype::WaveTwoArms => "wave-two-arms",
            Archetype::Squat => "squat",
            Archetype::March => "march",
        }
    }
}

impl fmt::Display for Archetype {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Archetype {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Archetype::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| Error::UnknownLabel {
                kind: "archetype",
                label: s.to_string(),
            })
    }
}

/// Rotation about the vertical axis, positive towards the subject's left.
pub fn view_angle(v: Viewpoint) -> f64 {
    match v {
        Viewpoint::Front => 0.0,
        Viewpoint::FrontLeft => PI / 4.0,
        Viewpoint::FrontRight => -PI / 4.0,
        Viewpoint::Left => PI / 2.0,
        Viewpoint::Right => -PI / 2.0,
        Viewpoint::RearLeft => 3.0 * PI / 4.0,
        Viewpoint::RearRight => -3.0 * PI / 4.0,
        Viewpoint::Rear => PI,
    }
}

/// Landmarks absent over frames `first..=last`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Occlusion {
    pub landmark: u8,
    pub first: usize,
    pub last: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotionSpec {
    pub archetype: Archetype,
    pub viewpoint: Viewpoint,
    /// Frames per motion cycle.
    pub period: f64,
    /// Scales every joint-angle swing; 0 gives the rest pose.
    pub amplitude: f64,
    pub frames: usize,
    /// Body proportions, image scale and placement.
    pub actor_seed: u64,
    /// Phase and per-frame jitter.
    pub clip_seed: u64,
    /// Standard deviation of per-landmark noise, torso units. The root is
    /// never jittered.
    pub jitter: f64,
    pub occlusions: Vec<Occlusion>,
    pub actor: String,
}

impl MotionSpec {
    pub fn new(archetype: Archetype, viewpoint: Viewpoint, frames: usize, seed: u64) -> Self {
        MotionSpec {
            archetype,
            viewpoint,
            period: 20.0,
            amplitude: 1.0,
            frames,
            actor_seed: seed,
            clip_seed: seed,
            jitter: 0.0,
            occlusions: Vec::new(),
            actor: seed.to_string(),
        }
    }
}

struct Actor {
    shoulder: f64,
    hip: f64,
    head: f64,
    upper_arm: f64,
    forearm: f64,
    thigh: f64,
    shin: f64,
    pixels_per_unit: f64,
    origin: [f64; 2],
}

impl Actor {
    fn draw(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut u = |lo: f64, hi: f64| rng.random_range(lo..hi);
        let limb = u(0.9, 1.1);
        Actor {
            shoulder: 0.35 * u(0.85, 1.15),
            hip: 0.2 * u(0.85, 1.15),
            head: 0.5 * u(0.9, 1.1),
            upper_arm: 0.55 * limb,
            forearm: 0.5 * limb,
            thigh: 0.85 * limb,
            shin: 0.8 * limb,
            pixels_per_unit: u(60.0, 140.0),
            origin: [quantize(u(200.0, 440.0)), quantize(u(80.0, 200.0))],
        }
    }
}

fn quantize(v: f64) -> f64 {
    (v / PIXEL_QUANTUM).round() * PIXEL_QUANTUM
}

/// Direction that starts pointing down, swings sideways by `abduct` (away
/// from the midline on `side`) and forward by `flex`.
fn limb_dir(side: f64, abduct: f64, flex: f64) -> [f64; 3] {
    [
        side * abduct.sin(),
        abduct.cos() * flex.cos(),
        abduct.cos() * flex.sin(),
    ]
}

fn add(a: [f64; 3], d: [f64; 3], len: f64) -> [f64; 3] {
    [a[0] + len * d[0], a[1] + len * d[1], a[2] + len * d[2]]
}

#[derive(Clone, Copy, Default)]
struct ArmPose {
    abduct: f64,
    bend: f64,
    flex: f64,
}

#[derive(Clone, Copy, Default)]
struct LegPose {
    flex: f64,
    knee: f64,
}

const REST_ARM: ArmPose = ArmPose {
    abduct: 0.15,
    bend: 0.1,
    flex: 0.0,
};

fn wave_arm(s: f64, a: f64) -> ArmPose {
    ArmPose {
        abduct: 2.5 + 0.2 * a * s.sin(),
        bend: 0.6 * a * s.sin(),
        flex: 0.0,
    }
}

/// `(right arm, left arm, right leg, left leg, vertical drop)`.
fn joint_angles(arch: Archetype, s: f64, a: f64, thigh: f64) -> (ArmPose, ArmPose, LegPose, LegPose, f64) {
    let rest_leg = LegPose::default();
    match arch {
        Archetype::Still => (REST_ARM, REST_ARM, rest_leg, rest_leg, 0.0),
        Archetype::WaveOneArm => (wave_arm(s, a), REST_ARM, rest_leg, rest_leg, 0.0),
        Archetype::WaveTwoArms => (wave_arm(s, a), wave_arm(s, a), rest_leg, rest_leg, 0.0),
        Archetype::Squat => {
            let flex = 1.1 * a * (1.0 - s.cos()) / 2.0;
            let arm = ArmPose {
                flex: 0.9 * flex,
                ..REST_ARM
            };
            let leg = LegPose { flex, knee: flex };
            (arm, arm, leg, leg, thigh * (1.0 - flex.cos()))
        }
        Archetype::March => {
            let r = a * s.sin().max(0.0);
            let l = a * (-s.sin()).max(0.0);
            let swing = 0.4 * a * s.sin();
            (
                ArmPose {
                    flex: -swing,
                    ..REST_ARM
                },
                ArmPose {
                    flex: swing,
                    ..REST_ARM
                },
                LegPose { flex: r, knee: 1.6 * r },
                LegPose { flex: l, knee: 1.6 * l },
                0.0,
            )
        }
    }
}

/// Body-frame landmark positions, slot order.
fn body(actor: &Actor, arch: Archetype, s: f64, amplitude: f64) -> [[f64; 3]; NUM_LANDMARKS] {
    let (ra, la, rl, ll, drop) = joint_angles(arch, s, amplitude, actor.thigh);
    let mut p = [[0.0; 3]; NUM_LANDMARKS];
    p[0] = [0.0, drop - actor.head, 0.0];
    p[1] = [0.0, drop, 0.0];
    for (side, arm, base) in [(-1.0, ra, 2), (1.0, la, 5)] {
        let shoulder = [side * actor.shoulder, drop + 0.05, 0.0];
        let elbow = add(shoulder, limb_dir(side, arm.abduct, arm.flex), actor.upper_arm);
        let wrist = add(elbow, limb_dir(side, arm.abduct + arm.bend, arm.flex), actor.forearm);
        p[base] = shoulder;
        p[base + 1] = elbow;
        p[base + 2] = wrist;
    }
    for (side, leg, base) in [(-1.0, rl, 8), (1.0, ll, 11)] {
        let hip = [side * actor.hip, drop + 1.0, 0.0];
        let knee = add(hip, limb_dir(side, 0.04, leg.flex), actor.thigh);
        let ankle = add(knee, limb_dir(side, 0.04, leg.flex - leg.knee), actor.shin);
        p[base] = hip;
        p[base + 1] = knee;
        p[base + 2] = ankle;
    }
    p
}

/// One labeled sequence in pixel coordinates.
pub fn generate(spec: &MotionSpec) -> Sample {
    let actor = Actor::draw(spec.actor_seed);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.clip_seed);
    let phase = rng.random_range(0.0..2.0 * PI);
    let jitter = (spec.jitter > 0.0).then(|| Normal::new(0.0, spec.jitter).expect("finite jitter"));
    let beta = view_angle(spec.viewpoint);
    let (sin_b, cos_b) = (beta.sin(), beta.cos());
    let ppu = actor.pixels_per_unit;
    let period = spec.period.max(1.0);

    let mut poses = Vec::with_capacity(spec.frames);
    for t in 0..spec.frames {
        let s = 2.0 * PI * t as f64 / period + phase;
        let mut pts = body(&actor, spec.archetype, s, spec.amplitude);
        if let Some(n) = &jitter {
            for (slot, p) in pts.iter_mut().enumerate() {
                if slot != LandmarkId::ROOT.slot() {
                    for v in p.iter_mut() {
                        *v += n.sample(&mut rng);
                    }
                }
            }
        }
        let mut coords = [[0.0; 2]; NUM_LANDMARKS];
        for (c, p) in coords.iter_mut().zip(&pts) {
            let x = p[0] * cos_b + p[2] * sin_b;
            *c = [
                actor.origin[0] + quantize(ppu * x),
                actor.origin[1] + quantize(ppu * p[1]),
            ];
        }
        let mut pose = Pose::from_coords(coords);
        for occ in &spec.occlusions {
            if (occ.first..=occ.last).contains(&t) {
                if let Some(id) = LandmarkId::new(occ.landmark) {
                    pose.clear(id);
                }
            }
        }
        poses.push(pose);
    }
    Sample {
        poses,
        action: spec.archetype.as_str().to_string(),
        viewpoint: spec.viewpoint,
        actor: spec.actor.clone(),
        dataset: "synthetic".to_string(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorpusConfig {
    pub n_per_class: usize,
    pub archetypes: Vec<Archetype>,
    pub viewpoints: Vec<Viewpoint>,
    pub seed: u64,
    /// Inclusive range of clip lengths.
    pub frames: (usize, usize),
    /// Range of cycle lengths, drawn per actor.
    pub period: (f64, f64),
    /// Range of swing amplitudes, drawn per actor.
    pub amplitude: (f64, f64),
    pub jitter: f64,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        CorpusConfig {
            n_per_class: 12,
            archetypes: vec![
                Archetype::WaveOneArm,
                Archetype::WaveTwoArms,
                Archetype::Squat,
                Archetype::March,
            ],
            viewpoints: vec![Viewpoint::Front],
            seed: 0,
            frames: (30, 45),
            period: (16.0, 24.0),
            amplitude: (0.8, 1.2),
            jitter: 0.01,
        }
    }
}

/// Balanced corpus: for each archetype, `n_per_class` clips cycling through
/// the viewpoints, clip `i` performed by actor `i / viewpoints.len()`. An
/// actor keeps body, image placement, tempo and amplitude across clips.
pub fn generate_corpus_with(cfg: &CorpusConfig) -> Result<(Vec<Sample>, DatasetManifest)> {
    if cfg.n_per_class == 0 || cfg.archetypes.is_empty() || cfg.viewpoints.is_empty() {
        return Err(Error::Config(
            "corpus needs n_per_class >= 1, an archetype and a viewpoint".into(),
        ));
    }
    if cfg.frames.0 == 0 || cfg.frames.0 > cfg.frames.1 {
        return Err(Error::Config(format!("bad frame range {:?}", cfg.frames)));
    }
    let actions: Vec<String> = cfg.archetypes.iter().map(|a| a.as_str().to_string()).collect();
    let mut manifest = DatasetManifest::new(actions);
    let mut samples = Vec::new();
    let nv = cfg.viewpoints.len();
    for (ai, &arch) in cfg.archetypes.iter().enumerate() {
        for i in 0..cfg.n_per_class {
            let actor = i / nv;
            let viewpoint = cfg.viewpoints[i % nv];
            let actor_seed = sample_seed(cfg.seed, actor);
            let mut style = ChaCha8Rng::seed_from_u64(actor_seed ^ 0xA5A5_A5A5);
            let period = style.random_range(cfg.period.0..=cfg.period.1);
            let amplitude = style.random_range(cfg.amplitude.0..=cfg.amplitude.1);
            let clip_seed = sample_seed(actor_seed, ai * 1_000_003 + i);
            let frames = ChaCha8Rng::seed_from_u64(clip_seed).random_range(cfg.frames.0..=cfg.frames.1);
            let spec = MotionSpec {
                archetype: arch,
                viewpoint,
                period,
                amplitude,
                frames,
                actor_seed,
                clip_seed,
                jitter: cfg.jitter,
                occlusions: Vec::new(),
                actor: format!("{actor:02}"),
            };
            let sample = generate(&spec);
            manifest.entries.push(ManifestEntry {
                path: PathBuf::from(format!("clips/{}-{actor:02}-{}-{i:03}.phs", arch, viewpoint.as_str())),
                action: sample.action.clone(),
                viewpoint: viewpoint.as_str().to_string(),
                actor: sample.actor.clone(),
                dataset: sample.dataset.clone(),
            });
            samples.push(sample);
        }
    }
    Ok((samples, manifest))
}

pub fn generate_corpus(
    n_per_class: usize,
    archetypes: &[Archetype],
    viewpoints: &[Viewpoint],
    seed: u64,
) -> Result<(Vec<Sample>, DatasetManifest)> {
    generate_corpus_with(&CorpusConfig {
        n_per_class,
        archetypes: archetypes.to_vec(),
        viewpoints: viewpoints.to_vec(),
        seed,
        ..Default::default()
    })
}

/// Write records under `dir` at the manifest's paths, then `manifest.toml`.
pub fn save_corpus(dir: &Path, samples: &[Sample], manifest: &DatasetManifest) -> Result<PathBuf> {
    for (s, e) in samples.iter().zip(&manifest.entries) {
        let path = dir.join(&e.path);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|err| Error::io(parent, err))?;
        }
        records::write_sample(&path, s)?;
    }
    let path = dir.join("manifest.toml");
    manifest.save(&path)?;
    Ok(path)
}
