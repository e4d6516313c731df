//! Landmark preprocessing geometry and mouth-ROI frame extraction.
//!
//! The pipeline runs on externally detected 68-point facial landmarks:
//! gap interpolation, temporal smoothing, per-frame similarity alignment to a
//! reference shape, and a sequence-level 120x120 mouth box. Training-time
//! augmentation draws one 112x112 crop offset and one flip decision per
//! sequence.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const LANDMARKS: usize = 68;
pub const MOUTH: std::ops::Range<usize> = 48..68;
pub const SMOOTHING_WINDOW: usize = 12;
pub const ROI_SIZE: usize = 120;
pub const AUG_CROP: usize = 112;
pub const FLIP_PROB: f64 = 0.5;
const LUMA: [f64; 3] = [0.299, 0.587, 0.114];

pub type Point = [f64; 2];

#[derive(Debug, Clone, PartialEq)]
pub struct LandmarkTrack {
    pub frames: Vec<Vec<Point>>,
    pub valid: Vec<bool>,
}

impl LandmarkTrack {
    pub fn new(frames: Vec<Vec<Point>>, valid: Vec<bool>) -> Result<Self> {
        if frames.len() != valid.len() {
            return Err(Error::InvalidLandmarks("mask length differs from frame count".into()));
        }
        if let Some(t) = frames.iter().position(|f| f.len() != LANDMARKS) {
            return Err(Error::InvalidLandmarks(format!("frame {t} does not hold {LANDMARKS} points")));
        }
        Ok(Self { frames, valid })
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn is_fully_valid(&self) -> bool {
        self.valid.iter().all(|&v| v)
    }

    /// Reads `frame,point,x,y,valid` rows. Frames with no rows are invalid.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        #[derive(Deserialize)]
        struct Row {
            frame: usize,
            point: usize,
            x: f64,
            y: f64,
            valid: u8,
        }
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let mut frames: Vec<Vec<Option<Point>>> = Vec::new();
        let mut valid: Vec<Option<bool>> = Vec::new();
        for row in rdr.deserialize::<Row>() {
            let row = row?;
            if row.point >= LANDMARKS {
                return Err(Error::InvalidLandmarks(format!("point index {} out of range", row.point)));
            }
            if row.frame >= frames.len() {
                frames.resize(row.frame + 1, vec![None; LANDMARKS]);
                valid.resize(row.frame + 1, None);
            }
            frames[row.frame][row.point] = Some([row.x, row.y]);
            let v = row.valid != 0;
            match valid[row.frame] {
                Some(prev) if prev != v => {
                    return Err(Error::InvalidLandmarks(format!("frame {} has mixed validity", row.frame)))
                }
                _ => valid[row.frame] = Some(v),
            }
        }
        let mut out_frames = Vec::with_capacity(frames.len());
        let mut out_valid = Vec::with_capacity(frames.len());
        for (t, (pts, v)) in frames.into_iter().zip(valid).enumerate() {
            let v = v.unwrap_or(false);
            let complete = pts.iter().all(Option::is_some);
            if v && !complete {
                return Err(Error::InvalidLandmarks(format!("valid frame {t} is missing points")));
            }
            out_frames.push(pts.into_iter().map(|p| p.unwrap_or([0.0, 0.0])).collect());
            out_valid.push(v && complete);
        }
        Self::new(out_frames, out_valid)
    }

    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_csv(std::fs::File::open(path)?)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["frame", "point", "x", "y", "valid"])?;
        for (t, (pts, &v)) in self.frames.iter().zip(&self.valid).enumerate() {
            for (i, p) in pts.iter().enumerate() {
                w.write_record([
                    t.to_string(),
                    i.to_string(),
                    p[0].to_string(),
                    p[1].to_string(),
                    u8::from(v).to_string(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Fills invalid frames by per-coordinate linear interpolation between the
/// nearest valid neighbours; leading and trailing gaps copy the nearest
/// valid frame.
pub fn interpolate_gaps(track: &LandmarkTrack) -> Result<LandmarkTrack> {
    let valid_idx: Vec<usize> = (0..track.len()).filter(|&t| track.valid[t]).collect();
    if valid_idx.is_empty() {
        return Err(Error::AllInvalid);
    }
    let mut frames = track.frames.clone();
    for t in 0..track.len() {
        if track.valid[t] {
            continue;
        }
        let next = valid_idx.partition_point(|&v| v < t);
        frames[t] = match (next.checked_sub(1).map(|i| valid_idx[i]), valid_idx.get(next)) {
            (Some(a), Some(&b)) => {
                let w = (t - a) as f64 / (b - a) as f64;
                track.frames[a]
                    .iter()
                    .zip(&track.frames[b])
                    .map(|(p, q)| [p[0] + w * (q[0] - p[0]), p[1] + w * (q[1] - p[1])])
                    .collect()
            }
            (Some(a), None) => track.frames[a].clone(),
            (None, Some(&b)) => track.frames[b].clone(),
            (None, None) => unreachable!("at least one valid frame"),
        };
    }
    LandmarkTrack::new(frames, vec![true; track.len()])
}

/// Centered moving average: `window / 2` frames back, the rest forward,
/// shrinking at the sequence ends.
pub fn smooth(track: &LandmarkTrack, window: usize) -> Result<LandmarkTrack> {
    if !track.is_fully_valid() {
        return Err(Error::InvalidLandmarks("smoothing needs a fully valid track".into()));
    }
    if window == 0 {
        return Err(Error::InvalidConfig("smoothing window must be positive".into()));
    }
    let back = window / 2;
    let forward = window - 1 - back;
    let n = track.len();
    let frames = (0..n)
        .map(|t| {
            let lo = t.saturating_sub(back);
            let hi = (t + forward).min(n - 1);
            let count = (hi - lo + 1) as f64;
            (0..LANDMARKS)
                .map(|i| {
                    let mut acc = [0.0, 0.0];
                    for f in &track.frames[lo..=hi] {
                        acc[0] += f[i][0];
                        acc[1] += f[i][1];
                    }
                    [acc[0] / count, acc[1] / count]
                })
                .collect()
        })
        .collect();
    LandmarkTrack::new(frames, vec![true; n])
}

/// `x ↦ scale · R(rotation) · x + translation`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimilarityTransform {
    pub scale: f64,
    pub rotation: f64,
    pub translation: [f64; 2],
}

impl SimilarityTransform {
    pub fn identity() -> Self {
        Self { scale: 1.0, rotation: 0.0, translation: [0.0, 0.0] }
    }

    pub fn apply(&self, p: Point) -> Point {
        let (s, c) = self.rotation.sin_cos();
        [
            self.scale * (c * p[0] - s * p[1]) + self.translation[0],
            self.scale * (s * p[0] + c * p[1]) + self.translation[1],
        ]
    }
}

/// Sum of squared distances between transformed `source` and `reference`.
pub fn alignment_residual(t: &SimilarityTransform, source: &[Point], reference: &[Point]) -> f64 {
    source
        .iter()
        .zip(reference)
        .map(|(p, q)| {
            let m = t.apply(*p);
            (m[0] - q[0]).powi(2) + (m[1] - q[1]).powi(2)
        })
        .sum()
}

fn centroid(points: &[Point]) -> Point {
    let n = points.len() as f64;
    let s = points.iter().fold([0.0, 0.0], |a, p| [a[0] + p[0], a[1] + p[1]]);
    [s[0] / n, s[1] / n]
}

/// Closed-form least-squares similarity (rotation without reflection)
/// mapping `source` onto `reference`. Returns the transform and its residual.
pub fn estimate_similarity(source: &[Point], reference: &[Point]) -> Result<(SimilarityTransform, f64)> {
    if source.len() != reference.len() || source.len() < 2 {
        return Err(Error::InvalidLandmarks(format!(
            "need matching point sets of at least 2 points, got {} and {}",
            source.len(),
            reference.len()
        )));
    }
    let cs = centroid(source);
    let cr = centroid(reference);
    let (mut dot, mut cross, mut norm) = (0.0, 0.0, 0.0);
    for (p, q) in source.iter().zip(reference) {
        let (x, y) = (p[0] - cs[0], p[1] - cs[1]);
        let (u, v) = (q[0] - cr[0], q[1] - cr[1]);
        dot += x * u + y * v;
        cross += x * v - y * u;
        norm += x * x + y * y;
    }
    if norm <= f64::EPSILON * (1.0 + cs[0].abs() + cs[1].abs()) {
        return Err(Error::DegenerateSource);
    }
    let a = dot / norm;
    let b = cross / norm;
    let scale = a.hypot(b);
    if scale == 0.0 {
        return Err(Error::DegenerateSource);
    }
    let rotation = b.atan2(a);
    let translation = [cr[0] - (a * cs[0] - b * cs[1]), cr[1] - (b * cs[0] + a * cs[1])];
    let t = SimilarityTransform { scale, rotation, translation };
    let residual = alignment_residual(&t, source, reference);
    Ok((t, residual))
}

/// Aligns every frame of a fully valid track to `reference`.
pub fn align_track(track: &LandmarkTrack, reference: &[Point]) -> Result<(LandmarkTrack, Vec<SimilarityTransform>)> {
    let mut frames = Vec::with_capacity(track.len());
    let mut transforms = Vec::with_capacity(track.len());
    for f in &track.frames {
        let (t, _) = estimate_similarity(f, reference)?;
        frames.push(f.iter().map(|&p| t.apply(p)).collect());
        transforms.push(t);
    }
    Ok((LandmarkTrack::new(frames, track.valid.clone())?, transforms))
}

/// Square crop box `[x0, x0 + size) × [y0, y0 + size)` in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoiBox {
    pub x0: i64,
    pub y0: i64,
    pub size: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CropPlan {
    pub roi: RoiBox,
    /// Offset of the augmentation crop inside the ROI, if augmenting.
    pub aug_offset: Option<(usize, usize)>,
    pub aug_size: usize,
    pub flip: bool,
}

impl CropPlan {
    /// Absolute crop rectangle `(x0, y0, size)` applied to every frame.
    pub fn crop_rect(&self) -> (i64, i64, usize) {
        match self.aug_offset {
            Some((dx, dy)) => (self.roi.x0 + dx as i64, self.roi.y0 + dy as i64, self.aug_size),
            None => (self.roi.x0, self.roi.y0, self.roi.size),
        }
    }

    /// The plan used at each of `frames` frames. A plan is drawn once per
    /// sequence, so every entry is identical.
    pub fn per_frame(&self, frames: usize) -> Vec<CropPlan> {
        vec![*self; frames]
    }

    /// Maps an image-space point into output-crop pixel coordinates,
    /// applying the horizontal flip when set.
    pub fn map_point(&self, p: Point) -> Point {
        let (x0, y0, size) = self.crop_rect();
        let x = p[0] - x0 as f64;
        let y = p[1] - y0 as f64;
        if self.flip {
            [(size - 1) as f64 - x, y]
        } else {
            [x, y]
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoiPlan {
    pub plan: CropPlan,
    pub center: [f64; 2],
    pub warnings: Vec<String>,
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// 120x120 (or `size`) box centered on the per-axis median over frames of
/// the mouth-landmark centroid. When `image_size` is given the box is
/// clamped inside the image and a warning is recorded.
pub fn mouth_roi(track: &LandmarkTrack, size: usize, image_size: Option<(usize, usize)>) -> Result<RoiPlan> {
    if track.is_empty() {
        return Err(Error::InvalidLandmarks("empty track".into()));
    }
    if !track.is_fully_valid() {
        return Err(Error::InvalidLandmarks("mouth ROI needs a fully valid track".into()));
    }
    let (mut xs, mut ys): (Vec<f64>, Vec<f64>) =
        track.frames.iter().map(|f| centroid(&f[MOUTH])).map(|c| (c[0], c[1])).unzip();
    let center = [median(&mut xs), median(&mut ys)];
    let half = (size / 2) as i64;
    let mut x0 = center[0].round() as i64 - half;
    let mut y0 = center[1].round() as i64 - half;
    let mut warnings = Vec::new();
    if let Some((w, h)) = image_size {
        if size > w || size > h {
            return Err(Error::BoundsError(format!("{size}px box does not fit a {w}x{h} image")));
        }
        let cx = x0.clamp(0, (w - size) as i64);
        let cy = y0.clamp(0, (h - size) as i64);
        if (cx, cy) != (x0, y0) {
            warnings.push(format!("OutOfFrame: box moved from ({x0}, {y0}) to ({cx}, {cy})"));
            x0 = cx;
            y0 = cy;
        }
    }
    Ok(RoiPlan {
        plan: CropPlan { roi: RoiBox { x0, y0, size }, aug_offset: None, aug_size: size, flip: false },
        center,
        warnings,
    })
}

/// Draws the sequence-level random crop offset and flip decision.
pub fn augment_plan<R: Rng>(plan: &CropPlan, crop: usize, flip_prob: f64, rng: &mut R) -> Result<CropPlan> {
    if crop > plan.roi.size {
        return Err(Error::BoundsError(format!("{crop}px crop exceeds the {}px ROI", plan.roi.size)));
    }
    let slack = plan.roi.size - crop;
    let dx = rng.gen_range(0..=slack);
    let dy = rng.gen_range(0..=slack);
    let flip = rng.gen::<f64>() < flip_prob;
    Ok(CropPlan { aug_offset: Some((dx, dy)), aug_size: crop, flip, ..*plan })
}

/// Row-major `frames × height × width × channels` tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameTensor {
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub data: Vec<f64>,
}

pub const FRAMES_MAGIC: &[u8; 8] = b"FRAMES01";

impl FrameTensor {
    pub fn new(frames: usize, height: usize, width: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != frames * height * width * channels {
            return Err(Error::DimensionMismatch(format!(
                "{frames}x{height}x{width}x{channels} tensor needs {} values, got {}",
                frames * height * width * channels,
                data.len()
            )));
        }
        Ok(Self { frames, height, width, channels, data })
    }

    #[inline]
    pub fn at(&self, t: usize, y: usize, x: usize, c: usize) -> f64 {
        self.data[((t * self.height + y) * self.width + x) * self.channels + c]
    }

    /// Binary container: magic `FRAMES01`, little-endian `u32` frames,
    /// height, width, channels, then `f64` values.
    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(FRAMES_MAGIC)?;
        for d in [self.frames, self.height, self.width, self.channels] {
            w.write_all(&(d as u32).to_le_bytes())?;
        }
        for x in &self.data {
            w.write_all(&x.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != FRAMES_MAGIC {
            return Err(Error::Format("missing FRAMES01 magic".into()));
        }
        let mut dims = [0usize; 4];
        let mut buf4 = [0u8; 4];
        for d in &mut dims {
            r.read_exact(&mut buf4)?;
            *d = u32::from_le_bytes(buf4) as usize;
        }
        let n = dims.iter().product();
        let mut data = Vec::with_capacity(n);
        let mut buf8 = [0u8; 8];
        for _ in 0..n {
            r.read_exact(&mut buf8)?;
            data.push(f64::from_le_bytes(buf8));
        }
        Self::new(dims[0], dims[1], dims[2], dims[3], data)
    }
}

/// Crop, optional flip, optional grayscale, then `(x − mean) / sqrt(var)`.
/// The same crop and flip apply to every frame.
pub fn apply_frames(frames: &FrameTensor, plan: &CropPlan, grayscale: bool, mean: f64, var: f64) -> Result<FrameTensor> {
    if frames.channels != 1 && frames.channels != 3 {
        return Err(Error::DimensionMismatch(format!("{} channels; expected 1 or 3", frames.channels)));
    }
    if var <= 0.0 {
        return Err(Error::InvalidConfig("normalization variance must be positive".into()));
    }
    let (x0, y0, size) = plan.crop_rect();
    if x0 < 0 || y0 < 0 || x0 as usize + size > frames.width || y0 as usize + size > frames.height {
        return Err(Error::BoundsError(format!(
            "crop ({x0}, {y0}, {size}) outside {}x{} frames",
            frames.width, frames.height
        )));
    }
    let (x0, y0) = (x0 as usize, y0 as usize);
    let out_c = if grayscale { 1 } else { frames.channels };
    let inv_std = 1.0 / var.sqrt();
    let mut data = Vec::with_capacity(frames.frames * size * size * out_c);
    for t in 0..frames.frames {
        for y in 0..size {
            for x in 0..size {
                let sx = x0 + if plan.flip { size - 1 - x } else { x };
                let sy = y0 + y;
                if grayscale && frames.channels == 3 {
                    let g: f64 = (0..3).map(|c| LUMA[c] * frames.at(t, sy, sx, c)).sum();
                    data.push((g - mean) * inv_std);
                } else {
                    for c in 0..out_c {
                        data.push((frames.at(t, sy, sx, c) - mean) * inv_std);
                    }
                }
            }
        }
    }
    FrameTensor::new(frames.frames, size, size, out_c, data)
}

/// Reads a binary (P5/P6) 8-bit PGM/PPM image as one frame with values in
/// `[0, 255]`.
pub fn read_pnm(path: impl AsRef<Path>) -> Result<FrameTensor> {
    let mut reader = BufReader::new(std::fs::File::open(path)?);
    let mut tokens = Vec::new();
    let mut line = String::new();
    while tokens.len() < 4 {
        line.clear();
        if reader.read_line(&mut line)? == 0 {
            return Err(Error::Format("truncated PNM header".into()));
        }
        let content = line.split('#').next().unwrap_or("");
        tokens.extend(content.split_whitespace().map(str::to_owned));
    }
    let channels = match tokens[0].as_str() {
        "P5" => 1,
        "P6" => 3,
        other => return Err(Error::Format(format!("unsupported PNM type {other}"))),
    };
    let parse = |s: &str| s.parse::<usize>().map_err(|_| Error::Format(format!("bad PNM header value {s:?}")));
    let (width, height, maxval) = (parse(&tokens[1])?, parse(&tokens[2])?, parse(&tokens[3])?);
    if maxval == 0 || maxval > 255 {
        return Err(Error::Format(format!("unsupported PNM maxval {maxval}")));
    }
    let mut bytes = vec![0u8; width * height * channels];
    reader.read_exact(&mut bytes)?;
    FrameTensor::new(1, height, width, channels, bytes.into_iter().map(f64::from).collect())
}

/// Writes frame `t` as an 8-bit binary PGM/PPM, clamping to `[0, 255]`.
pub fn write_pnm(tensor: &FrameTensor, t: usize, path: impl AsRef<Path>) -> Result<()> {
    let magic = match tensor.channels {
        1 => "P5",
        3 => "P6",
        c => return Err(Error::DimensionMismatch(format!("cannot write {c}-channel PNM"))),
    };
    let mut out = format!("{magic}\n{} {}\n255\n", tensor.width, tensor.height).into_bytes();
    let per_frame = tensor.height * tensor.width * tensor.channels;
    out.extend(tensor.data[t * per_frame..(t + 1) * per_frame].iter().map(|v| v.round().clamp(0.0, 255.0) as u8));
    std::fs::write(path, out)?;
    Ok(())
}
