//! Waveform handling and additive-noise augmentation.
//!
//! Power is the mean of squared samples over the whole signal. Noise that is
//! shorter than the signal is tiled cyclically; longer noise is cropped at a
//! seeded random offset.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SAMPLE_RATE: u32 = 16_000;
pub const BABBLE_SOURCES: usize = 20;

#[derive(Debug, Clone, PartialEq)]
pub struct AudioSignal {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl AudioSignal {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::UnsupportedAudio("sample rate must be positive".into()));
        }
        if samples.iter().any(|x| !x.is_finite()) {
            return Err(Error::UnsupportedAudio("non-finite sample".into()));
        }
        Ok(Self { samples, sample_rate })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn power(&self) -> f64 {
        power(&self.samples)
    }

    /// Reads a mono 16-bit PCM WAV file; samples are mapped to `[-1, 1)`.
    pub fn read_wav(path: impl AsRef<Path>) -> Result<Self> {
        let mut reader = hound::WavReader::open(path)?;
        let spec = reader.spec();
        if spec.channels != 1 || spec.bits_per_sample != 16 || spec.sample_format != hound::SampleFormat::Int {
            return Err(Error::UnsupportedAudio(format!(
                "expected mono 16-bit PCM, got {} channel(s), {} bits",
                spec.channels, spec.bits_per_sample
            )));
        }
        let samples = reader
            .samples::<i16>()
            .map(|s| s.map(|v| f64::from(v) / 32768.0))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        Self::new(samples, spec.sample_rate)
    }

    /// Writes mono 16-bit PCM; amplitudes outside `[-1, 1)` are clipped.
    pub fn write_wav(&self, path: impl AsRef<Path>) -> Result<()> {
        let spec = hound::WavSpec {
            channels: 1,
            sample_rate: self.sample_rate,
            bits_per_sample: 16,
            sample_format: hound::SampleFormat::Int,
        };
        let mut writer = hound::WavWriter::create(path, spec)?;
        for &x in &self.samples {
            let v = (x * 32768.0).round().clamp(i16::MIN as f64, i16::MAX as f64) as i16;
            writer.write_sample(v)?;
        }
        writer.finalize()?;
        Ok(())
    }
}

pub fn power(samples: &[f64]) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    samples.iter().map(|x| x * x).sum::<f64>() / samples.len() as f64
}

/// `10 · log10(P_signal / P_noise)`.
pub fn snr_db(signal: &[f64], noise: &[f64]) -> f64 {
    10.0 * (power(signal) / power(noise)).log10()
}

/// Zero mean, unit (population) variance.
pub fn normalize(signal: &AudioSignal) -> Result<AudioSignal> {
    let n = signal.samples.len();
    if n < 2 {
        return Err(Error::ConstantSignal);
    }
    let mean = signal.samples.iter().sum::<f64>() / n as f64;
    let var = signal.samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
    if var <= 0.0 {
        return Err(Error::ConstantSignal);
    }
    let inv = 1.0 / var.sqrt();
    Ok(AudioSignal {
        samples: signal.samples.iter().map(|x| (x - mean) * inv).collect(),
        sample_rate: signal.sample_rate,
    })
}

fn scale_to_unit_power(samples: &mut [f64]) -> Result<()> {
    let p = power(samples);
    if p <= 0.0 {
        return Err(Error::SilentNoise);
    }
    let k = 1.0 / p.sqrt();
    samples.iter_mut().for_each(|x| *x *= k);
    Ok(())
}

/// Tiles or crops `noise` to exactly `len` samples.
pub fn fit_length<R: Rng>(noise: &[f64], len: usize, rng: &mut R) -> Vec<f64> {
    if noise.is_empty() {
        return vec![0.0; len];
    }
    if noise.len() <= len {
        noise.iter().copied().cycle().take(len).collect()
    } else {
        let start = rng.gen_range(0..=noise.len() - len);
        noise[start..start + len].to_vec()
    }
}

/// Gain `k` that puts `k · noise` at `snr_db` below a signal of power `p_signal`.
pub fn snr_gain(p_signal: f64, p_noise: f64, snr_db: f64) -> f64 {
    (p_signal / (p_noise * 10f64.powf(snr_db / 10.0))).sqrt()
}

/// `signal + k · noise'`, where `noise'` is `noise` fitted to the signal
/// length and `k` sets the requested SNR.
pub fn mix_at_snr<R: Rng>(signal: &AudioSignal, noise: &AudioSignal, snr_db: f64, rng: &mut R) -> Result<AudioSignal> {
    if signal.sample_rate != noise.sample_rate {
        return Err(Error::RateMismatch(f64::from(signal.sample_rate), f64::from(noise.sample_rate)));
    }
    if !snr_db.is_finite() {
        return Err(Error::InvalidConfig(format!("SNR {snr_db} dB is not finite")));
    }
    let fitted = fit_length(&noise.samples, signal.len(), rng);
    let p_noise = power(&fitted);
    if p_noise <= 0.0 {
        return Err(Error::SilentNoise);
    }
    let k = snr_gain(signal.power(), p_noise, snr_db);
    Ok(AudioSignal {
        samples: signal.samples.iter().zip(&fitted).map(|(s, n)| s + k * n).collect(),
        sample_rate: signal.sample_rate,
    })
}

/// Sum of 20 seeded crops from distinct sources, scaled to unit power.
pub fn synth_babble(sources: &[AudioSignal], target_len: usize, seed: u64) -> Result<AudioSignal> {
    if sources.len() < BABBLE_SOURCES {
        return Err(Error::InsufficientSources { required: BABBLE_SOURCES, available: sources.len() });
    }
    if sources.iter().any(|s| s.power() <= 0.0) {
        return Err(Error::SilentNoise);
    }
    let rate = sources[0].sample_rate;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen: Vec<usize> = (0..sources.len()).collect();
    chosen.shuffle(&mut rng);
    chosen.truncate(BABBLE_SOURCES);
    let mut mix = vec![0.0; target_len];
    for &i in &chosen {
        for (m, x) in mix.iter_mut().zip(fit_length(&sources[i].samples, target_len, &mut rng)) {
            *m += x;
        }
    }
    scale_to_unit_power(&mut mix)?;
    AudioSignal::new(mix, rate)
}

/// Consecutive one-second crops, each from a different source, concatenated
/// and scaled to unit power. The last crop is cut to fit.
pub fn synth_human_noise(sources: &[AudioSignal], target_len: usize, seed: u64) -> Result<AudioSignal> {
    let Some(first) = sources.first() else {
        return Err(Error::InsufficientSources { required: 1, available: 0 });
    };
    let second = first.sample_rate as usize;
    for (index, s) in sources.iter().enumerate() {
        if s.len() < second {
            return Err(Error::SourceTooShort { index, len: s.len(), required: second });
        }
    }
    let segments = target_len.div_ceil(second);
    if segments > sources.len() {
        return Err(Error::InsufficientSources { required: segments, available: sources.len() });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..sources.len()).collect();
    order.shuffle(&mut rng);
    let mut out = Vec::with_capacity(segments * second);
    for &i in order.iter().take(segments) {
        let src = &sources[i].samples;
        let start = rng.gen_range(0..=src.len() - second);
        out.extend_from_slice(&src[start..start + second]);
    }
    out.truncate(target_len);
    scale_to_unit_power(&mut out)?;
    AudioSignal::new(out, first.sample_rate)
}

/// Seeds for training-time and evaluation-time noise never collide.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SeedNamespace {
    Train,
    Eval,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind", content = "path")]
pub enum NoiseKind {
    Babble,
    Human,
    File(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    pub snr_db: f64,
    pub apply_prob: f64,
    pub seed: u64,
    pub namespace: SeedNamespace,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self {
            kind: NoiseKind::Babble,
            snr_db: 5.0,
            apply_prob: 0.25,
            seed: 0,
            namespace: SeedNamespace::Train,
        }
    }
}

/// Noise material backing a [`NoiseSpec`].
#[derive(Debug, Clone)]
pub enum NoiseSource {
    Babble(Vec<AudioSignal>),
    Human(Vec<AudioSignal>),
    Signal(AudioSignal),
}

/// Stable per-utterance seed from the corpus seed, namespace and utterance id.
pub fn derive_seed(corpus_seed: u64, namespace: SeedNamespace, utterance_id: &str) -> u64 {
    // FNV-1a over the id, then a splitmix64 finalizer
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    let tag: &[u8] = match namespace {
        SeedNamespace::Train => b"train\0",
        SeedNamespace::Eval => b"eval\0",
    };
    for &b in tag.iter().chain(utterance_id.as_bytes()) {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    let mut z = h ^ corpus_seed.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentEntry {
    pub utterance_id: String,
    pub seed: u64,
    pub noised: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentReport {
    pub spec: NoiseSpec,
    /// Babble sources fixed for the whole corpus (indices into the pool).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub babble_sources: Option<Vec<usize>>,
    pub entries: Vec<AugmentEntry>,
    pub noised_count: usize,
}

#[derive(Debug, Clone)]
pub struct Augmented {
    pub report: AugmentReport,
    /// One output per input utterance; unchanged copies where no noise was added.
    pub signals: Vec<AudioSignal>,
}

/// Mixes each utterance with noise independently with probability
/// `spec.apply_prob`. Per-utterance failures are recorded in the report and
/// leave that utterance unchanged.
pub fn augment_corpus(utterances: &[(String, AudioSignal)], source: &NoiseSource, spec: &NoiseSpec) -> Result<Augmented> {
    if !(0.0..=1.0).contains(&spec.apply_prob) {
        return Err(Error::InvalidConfig(format!("apply probability {} outside [0, 1]", spec.apply_prob)));
    }
    let mut ids: Vec<&str> = utterances.iter().map(|(id, _)| id.as_str()).collect();
    ids.sort_unstable();
    if ids.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::InvalidManifest("duplicate utterance id".into()));
    }

    let babble_pool: Option<(Vec<usize>, Vec<AudioSignal>)> = match source {
        NoiseSource::Babble(pool) => {
            if pool.len() < BABBLE_SOURCES {
                return Err(Error::InsufficientSources { required: BABBLE_SOURCES, available: pool.len() });
            }
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, spec.namespace, "#babble-pool"));
            let mut idx: Vec<usize> = (0..pool.len()).collect();
            idx.shuffle(&mut rng);
            idx.truncate(BABBLE_SOURCES);
            idx.sort_unstable();
            let chosen = idx.iter().map(|&i| pool[i].clone()).collect();
            Some((idx, chosen))
        }
        _ => None,
    };

    let results: Vec<(AugmentEntry, AudioSignal)> = utterances
        .par_iter()
        .map(|(id, signal)| {
            let seed = derive_seed(spec.seed, spec.namespace, id);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let apply = rng.gen::<f64>() < spec.apply_prob;
            let mut entry = AugmentEntry { utterance_id: id.clone(), seed, noised: false, error: None };
            if !apply {
                return (entry, signal.clone());
            }
            let noise_seed = rng.gen::<u64>();
            let noise = match (source, &babble_pool) {
                (NoiseSource::Babble(_), Some((_, chosen))) => synth_babble(chosen, signal.len(), noise_seed),
                (NoiseSource::Human(pool), _) => synth_human_noise(pool, signal.len(), noise_seed),
                (NoiseSource::Signal(n), _) => Ok(n.clone()),
                (NoiseSource::Babble(_), None) => unreachable!("babble pool prepared above"),
            };
            match noise.and_then(|n| mix_at_snr(signal, &n, spec.snr_db, &mut rng)) {
                Ok(mixed) => {
                    entry.noised = true;
                    (entry, mixed)
                }
                Err(e) => {
                    entry.error = Some(e.to_string());
                    (entry, signal.clone())
                }
            }
        })
        .collect();

    let (entries, signals): (Vec<_>, Vec<_>) = results.into_iter().unzip();
    let noised_count = entries.iter().filter(|e| e.noised).count();
    Ok(Augmented {
        report: AugmentReport {
            spec: spec.clone(),
            babble_sources: babble_pool.map(|(idx, _)| idx),
            entries,
            noised_count,
        },
        signals,
    })
}
