//! Audio/visual stream contracts: per-modality layer normalization, feature
//! concatenation, frame-rate alignment planning and stride-2 temporal
//! downsampling.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const FEATSEQ_MAGIC: &[u8; 8] = b"FEATSEQ1";
/// Per-modality feature width at the fusion input.
pub const MODALITY_DIM: usize = 512;
pub const FUSED_DIM: usize = 2 * MODALITY_DIM;
pub const FUSION_RATE_HZ: f64 = 25.0;
pub const AUDIO_SAMPLE_RATE: u32 = 16_000;
pub const DEFAULT_WINDOW: usize = 400;
pub const DEFAULT_HOP: usize = 320;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Audio,
    Visual,
    Fused,
}

impl Modality {
    fn code(self) -> u8 {
        match self {
            Modality::Audio => 0,
            Modality::Visual => 1,
            Modality::Fused => 2,
        }
    }

    fn from_code(code: u8) -> Result<Self> {
        match code {
            0 => Ok(Modality::Audio),
            1 => Ok(Modality::Visual),
            2 => Ok(Modality::Fused),
            other => Err(Error::Format(format!("unknown modality code {other}"))),
        }
    }
}

/// Row-major `frames x dim` feature matrix tagged with modality and rate.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSequence {
    pub modality: Modality,
    pub rate_hz: f64,
    frames: usize,
    dim: usize,
    data: Vec<f64>,
}

impl FeatureSequence {
    pub fn new(modality: Modality, rate_hz: f64, frames: usize, dim: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != frames * dim {
            return Err(Error::DimensionMismatch(format!(
                "{frames}x{dim} needs {} values, got {}",
                frames * dim,
                data.len()
            )));
        }
        Ok(Self { modality, rate_hz, frames, dim, data })
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn frame(&self, t: usize) -> &[f64] {
        &self.data[t * self.dim..(t + 1) * self.dim]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(FEATSEQ_MAGIC)?;
        w.write_all(&(self.frames as u32).to_le_bytes())?;
        w.write_all(&(self.dim as u32).to_le_bytes())?;
        w.write_all(&[self.modality.code()])?;
        w.write_all(&self.rate_hz.to_le_bytes())?;
        for x in &self.data {
            w.write_all(&x.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != FEATSEQ_MAGIC {
            return Err(Error::Format("missing FEATSEQ1 magic".into()));
        }
        let mut u32buf = [0u8; 4];
        r.read_exact(&mut u32buf)?;
        let frames = u32::from_le_bytes(u32buf) as usize;
        r.read_exact(&mut u32buf)?;
        let dim = u32::from_le_bytes(u32buf) as usize;
        let mut code = [0u8; 1];
        r.read_exact(&mut code)?;
        let mut f64buf = [0u8; 8];
        r.read_exact(&mut f64buf)?;
        let rate_hz = f64::from_le_bytes(f64buf);
        let mut data = Vec::with_capacity(frames * dim);
        for _ in 0..frames * dim {
            r.read_exact(&mut f64buf)?;
            data.push(f64::from_le_bytes(f64buf));
        }
        Self::new(Modality::from_code(code[0])?, rate_hz, frames, dim, data)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read(std::fs::File::open(path)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormParams {
    pub gain: Vec<f64>,
    pub bias: Vec<f64>,
    pub epsilon: f64,
}

impl NormParams {
    pub fn identity(dim: usize) -> Self {
        Self { gain: vec![1.0; dim], bias: vec![0.0; dim], epsilon: 1e-5 }
    }
}

/// Output of [`layer_norm`]: the normalized sequence plus the indices of
/// frames whose variance was at or below epsilon.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalized {
    pub sequence: FeatureSequence,
    pub degenerate_frames: Vec<usize>,
}

/// `(x − mean) / sqrt(var + ε) · gain + bias` per frame, population variance.
pub fn layer_norm(seq: &FeatureSequence, params: &NormParams) -> Result<Normalized> {
    let d = seq.dim;
    if d < 2 {
        return Err(Error::DimensionMismatch("layer norm needs at least 2 features".into()));
    }
    if params.gain.len() != d || params.bias.len() != d {
        return Err(Error::DimensionMismatch(format!(
            "norm parameters have {} / {} entries for {d} features",
            params.gain.len(),
            params.bias.len()
        )));
    }
    let mut data = Vec::with_capacity(seq.data.len());
    let mut degenerate_frames = Vec::new();
    for t in 0..seq.frames {
        let x = seq.frame(t);
        let mean = x.iter().sum::<f64>() / d as f64;
        let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
        if var <= params.epsilon {
            degenerate_frames.push(t);
        }
        let inv = 1.0 / (var + params.epsilon).sqrt();
        data.extend(
            x.iter()
                .zip(params.gain.iter().zip(&params.bias))
                .map(|(v, (g, b))| (v - mean) * inv * g + b),
        );
    }
    Ok(Normalized {
        sequence: FeatureSequence { data, ..seq.clone() },
        degenerate_frames,
    })
}

/// Normalizes each stream separately and concatenates `[visual ‖ audio]`
/// into 1024-wide fused frames.
pub fn fuse(
    audio: &FeatureSequence,
    visual: &FeatureSequence,
    audio_params: &NormParams,
    visual_params: &NormParams,
) -> Result<FeatureSequence> {
    if audio.frames != visual.frames {
        return Err(Error::FrameCountMismatch { audio: audio.frames, visual: visual.frames });
    }
    if audio.rate_hz != visual.rate_hz {
        return Err(Error::RateMismatch(audio.rate_hz, visual.rate_hz));
    }
    if audio.rate_hz != FUSION_RATE_HZ {
        return Err(Error::RateMismatch(audio.rate_hz, FUSION_RATE_HZ));
    }
    if audio.dim != MODALITY_DIM || visual.dim != MODALITY_DIM {
        return Err(Error::DimensionMismatch(format!(
            "fusion expects {MODALITY_DIM}-wide streams, got audio {} and visual {}",
            audio.dim, visual.dim
        )));
    }
    let a = layer_norm(audio, audio_params)?.sequence;
    let v = layer_norm(visual, visual_params)?.sequence;
    let mut data = Vec::with_capacity(audio.frames * FUSED_DIM);
    for t in 0..audio.frames {
        data.extend_from_slice(v.frame(t));
        data.extend_from_slice(a.frame(t));
    }
    FeatureSequence::new(Modality::Fused, FUSION_RATE_HZ, audio.frames, FUSED_DIM, data)
}

/// Padding and truncation that make a sliding-window front end produce
/// exactly two frames per visual frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RateAlignmentPlan {
    pub sample_count: usize,
    pub visual_frames: usize,
    pub pad_front: usize,
    pub pad_back: usize,
    pub truncate_frames: usize,
    pub window: usize,
    pub hop: usize,
}

impl RateAlignmentPlan {
    /// Front-end frames produced by the padded signal before truncation.
    pub fn raw_frames(&self) -> usize {
        frames_for(self.sample_count + self.pad_front + self.pad_back, self.window, self.hop)
    }

    pub fn front_end_frames(&self) -> usize {
        self.raw_frames() - self.truncate_frames
    }

    pub fn fused_frames(&self) -> usize {
        self.front_end_frames() / 2
    }
}

/// `floor((n − window) / hop) + 1`, or 0 when the signal is shorter than one window.
pub fn frames_for(samples: usize, window: usize, hop: usize) -> usize {
    if samples < window {
        0
    } else {
        (samples - window) / hop + 1
    }
}

/// Plans the minimal padding (front gets the extra sample when odd) or a
/// single trailing-frame truncation that yields `2 · visual_frames` front-end
/// frames. Signals that would need more than `window + hop` samples of
/// padding, or more than one dropped frame, are rejected.
pub fn plan_rate_alignment(
    sample_count: usize,
    visual_frames: usize,
    window: usize,
    hop: usize,
) -> Result<RateAlignmentPlan> {
    if visual_frames == 0 {
        return Err(Error::InfeasiblePlan("need at least one visual frame".into()));
    }
    if hop == 0 || window < hop {
        return Err(Error::InfeasiblePlan(format!("window {window} must be >= hop {hop} >= 1")));
    }
    let target = 2 * visual_frames;
    let needed = window + (target - 1) * hop;
    let mut plan = RateAlignmentPlan {
        sample_count,
        visual_frames,
        pad_front: 0,
        pad_back: 0,
        truncate_frames: 0,
        window,
        hop,
    };
    if sample_count < needed {
        let pad = needed - sample_count;
        if pad > window + hop {
            return Err(Error::InfeasiblePlan(format!(
                "{sample_count} samples is too short for {visual_frames} visual frames ({pad} samples of padding needed)"
            )));
        }
        plan.pad_front = pad.div_ceil(2);
        plan.pad_back = pad / 2;
    } else {
        let produced = frames_for(sample_count, window, hop);
        match produced - target {
            0 => {}
            1 => plan.truncate_frames = 1,
            extra => {
                return Err(Error::InfeasiblePlan(format!(
                    "{sample_count} samples give {extra} front-end frames more than {target}"
                )))
            }
        }
    }
    Ok(plan)
}

/// Convolution weights indexed `[k][d_in][d_out]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    pub width: usize,
    pub d_in: usize,
    pub d_out: usize,
    pub weights: Vec<f64>,
}

impl Kernel {
    pub fn new(width: usize, d_in: usize, d_out: usize, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != width * d_in * d_out {
            return Err(Error::DimensionMismatch(format!(
                "kernel {width}x{d_in}x{d_out} needs {} weights, got {}",
                width * d_in * d_out,
                weights.len()
            )));
        }
        if width % 2 == 0 {
            return Err(Error::DimensionMismatch(format!("kernel width {width} must be odd")));
        }
        Ok(Self { width, d_in, d_out, weights })
    }

    #[inline]
    pub fn weight(&self, k: usize, i: usize, o: usize) -> f64 {
        self.weights[(k * self.d_in + i) * self.d_out + o]
    }
}

/// Stride-2 cross-correlation along time with `(K − 1) / 2` zero frames on
/// each side. Halves the frame count and the rate.
pub fn strided_downsample(seq: &FeatureSequence, kernel: &Kernel) -> Result<FeatureSequence> {
    if seq.frames % 2 != 0 {
        return Err(Error::OddFrameCount(seq.frames));
    }
    if kernel.d_in != seq.dim {
        return Err(Error::DimensionMismatch(format!(
            "kernel expects {} input features, sequence has {}",
            kernel.d_in, seq.dim
        )));
    }
    let pad = (kernel.width - 1) / 2;
    let out_frames = seq.frames / 2;
    let mut data = vec![0.0; out_frames * kernel.d_out];
    for (i, out) in data.chunks_mut(kernel.d_out).enumerate() {
        for k in 0..kernel.width {
            let Some(t) = (2 * i + k).checked_sub(pad).filter(|&t| t < seq.frames) else {
                continue;
            };
            let x = seq.frame(t);
            let taps = &kernel.weights[k * kernel.d_in * kernel.d_out..(k + 1) * kernel.d_in * kernel.d_out];
            for (xi, row) in x.iter().zip(taps.chunks(kernel.d_out)) {
                for (o, w) in out.iter_mut().zip(row) {
                    *o += xi * w;
                }
            }
        }
    }
    FeatureSequence::new(seq.modality, seq.rate_hz / 2.0, out_frames, kernel.d_out, data)
}
