//! Dense optical flow between frame pairs a fixed time gap apart.
//!
//! The estimator is Horn–Schunck: Gaussian pre-smoothing, central spatial
//! differences averaged over both frames, a forward temporal difference and
//! Jacobi iterations of the classic update until the largest per-pixel change
//! falls below the tolerance.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataio::GrayFrame;
use crate::error::{Error, Result};
use crate::preprocess::WindowInterval;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FlowParams {
    /// Time between the two frames of a flow pair.
    pub rate_seconds: f64,
    /// Smoothness weight, in units of 8-bit intensity levels.
    pub alpha: f64,
    pub max_iterations: usize,
    pub tolerance: f64,
    /// Gaussian pre-smoothing; 0 disables it.
    pub sigma: f64,
}

impl Default for FlowParams {
    fn default() -> Self {
        FlowParams {
            rate_seconds: 1.0 / 50.0,
            alpha: 1.0,
            max_iterations: 200,
            tolerance: 1e-4,
            sigma: 1.0,
        }
    }
}

/// Frames are normalized to [0, 1]; derivatives are taken on the 8-bit scale
/// so that `alpha` keeps its customary magnitude.
const INTENSITY_SCALE: f64 = 255.0;

impl FlowParams {
    /// Frame gap `R = max(1, round(fps · rate))`.
    pub fn gap(&self, fps: f64) -> usize {
        ((fps * self.rate_seconds).round() as usize).max(1)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.tolerance > 0.0 && self.max_iterations >= 1) {
            return Err(Error::Validation(
                "flow parameters need alpha > 0, tolerance > 0, iterations >= 1".into(),
            ));
        }
        if !(self.sigma >= 0.0 && self.rate_seconds > 0.0) {
            return Err(Error::Validation(
                "flow sigma and rate must be nonnegative/positive".into(),
            ));
        }
        Ok(())
    }
}

/// Per-pixel displacement over the frame gap, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    pub width: usize,
    pub height: usize,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

impl FlowField {
    pub fn zeros(width: usize, height: usize) -> Self {
        FlowField {
            width,
            height,
            u: vec![0.0; width * height],
            v: vec![0.0; width * height],
        }
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> (f64, f64) {
        let i = y * self.width + x;
        (self.u[i], self.v[i])
    }

    /// Pixels with valid derivatives: everything but the 1-pixel border.
    pub fn is_interior(&self, x: usize, y: usize) -> bool {
        x >= 1 && y >= 1 && x + 1 < self.width && y + 1 < self.height
    }

    /// Mean `(u, v)` over the interior shrunk by `margin` further pixels.
    pub fn interior_mean(&self, margin: usize) -> (f64, f64) {
        let (mut su, mut sv, mut n) = (0.0, 0.0, 0usize);
        for y in 1 + margin..self.height.saturating_sub(1 + margin) {
            for x in 1 + margin..self.width.saturating_sub(1 + margin) {
                let (u, v) = self.at(x, y);
                su += u;
                sv += v;
                n += 1;
            }
        }
        if n == 0 {
            return (0.0, 0.0);
        }
        (su / n as f64, sv / n as f64)
    }
}

/// Anything that turns a frame pair into a flow field.
pub trait FlowEstimator: Sync {
    fn estimate(&self, from: &GrayFrame, to: &GrayFrame) -> Result<FlowField>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct HornSchunck {
    pub params: FlowParams,
}

impl HornSchunck {
    pub fn new(params: FlowParams) -> Self {
        HornSchunck { params }
    }
}

impl FlowEstimator for HornSchunck {
    fn estimate(&self, from: &GrayFrame, to: &GrayFrame) -> Result<FlowField> {
        compute_flow(from, to, &self.params)
    }
}

pub fn compute_flow(from: &GrayFrame, to: &GrayFrame, params: &FlowParams) -> Result<FlowField> {
    params.validate()?;
    if from.width() != to.width() || from.height() != to.height() {
        return Err(Error::Validation(format!(
            "flow frames differ in size: {}x{} vs {}x{}",
            from.width(),
            from.height(),
            to.width(),
            to.height()
        )));
    }
    let (w, h) = (from.width(), from.height());
    let a = gaussian_blur(&scaled(from), w, h, params.sigma);
    let b = gaussian_blur(&scaled(to), w, h, params.sigma);

    let mut ix = vec![0.0; w * h];
    let mut iy = vec![0.0; w * h];
    let mut it = vec![0.0; w * h];
    for y in 1..h.saturating_sub(1) {
        for x in 1..w.saturating_sub(1) {
            let i = y * w + x;
            ix[i] = 0.25 * ((a[i + 1] - a[i - 1]) + (b[i + 1] - b[i - 1]));
            iy[i] = 0.25 * ((a[i + w] - a[i - w]) + (b[i + w] - b[i - w]));
            it[i] = b[i] - a[i];
        }
    }

    let alpha2 = params.alpha * params.alpha;
    let denom: Vec<f64> = ix
        .iter()
        .zip(&iy)
        .map(|(gx, gy)| alpha2 + gx * gx + gy * gy)
        .collect();

    let mut flow = FlowField::zeros(w, h);
    let mut next_u = vec![0.0; w * h];
    let mut next_v = vec![0.0; w * h];
    for _ in 0..params.max_iterations {
        let mut max_change: f64 = 0.0;
        for y in 0..h {
            let border_row = y == 0 || y + 1 == h;
            for x in 0..w {
                let i = y * w + x;
                let (ub, vb) = if border_row || x == 0 || x + 1 == w {
                    (
                        neighbour_mean(&flow.u, w, h, x, y),
                        neighbour_mean(&flow.v, w, h, x, y),
                    )
                } else {
                    (interior_mean(&flow.u, w, i), interior_mean(&flow.v, w, i))
                };
                let t = (ix[i] * ub + iy[i] * vb + it[i]) / denom[i];
                let (nu, nv) = (ub - ix[i] * t, vb - iy[i] * t);
                max_change = max_change
                    .max((nu - flow.u[i]).abs())
                    .max((nv - flow.v[i]).abs());
                next_u[i] = nu;
                next_v[i] = nv;
            }
        }
        std::mem::swap(&mut flow.u, &mut next_u);
        std::mem::swap(&mut flow.v, &mut next_v);
        if max_change < params.tolerance {
            break;
        }
    }
    Ok(flow)
}

fn scaled(frame: &GrayFrame) -> Vec<f64> {
    frame
        .data()
        .iter()
        .map(|&v| f64::from(v) * INTENSITY_SCALE)
        .collect()
}

#[inline(always)]
fn interior_mean(f: &[f64], w: usize, i: usize) -> f64 {
    (f[i - 1] + f[i + 1] + f[i - w] + f[i + w]) / 6.0
        + (f[i - w - 1] + f[i - w + 1] + f[i + w - 1] + f[i + w + 1]) / 12.0
}

/// Horn–Schunck neighbourhood average (1/6 edge, 1/12 corner neighbours),
/// replicating the border.
#[inline]
fn neighbour_mean(f: &[f64], w: usize, h: usize, x: usize, y: usize) -> f64 {
    let xm = x.saturating_sub(1);
    let xp = (x + 1).min(w - 1);
    let ym = y.saturating_sub(1);
    let yp = (y + 1).min(h - 1);
    let at = |xx: usize, yy: usize| f[yy * w + xx];
    (at(xm, y) + at(xp, y) + at(x, ym) + at(x, yp)) / 6.0
        + (at(xm, ym) + at(xp, ym) + at(xm, yp) + at(xp, yp)) / 12.0
}

fn gaussian_blur(src: &[f64], w: usize, h: usize, sigma: f64) -> Vec<f64> {
    if sigma <= 0.0 {
        return src.to_vec();
    }
    let radius = (3.0 * sigma).ceil() as isize;
    let mut kernel: Vec<f64> = (-radius..=radius)
        .map(|k| (-((k * k) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = kernel.iter().sum();
    kernel.iter_mut().for_each(|k| *k /= total);

    let clamp = |v: isize, n: usize| v.clamp(0, n as isize - 1) as usize;
    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            tmp[y * w + x] = kernel
                .iter()
                .enumerate()
                .map(|(k, kv)| kv * src[y * w + clamp(x as isize + k as isize - radius, w)])
                .sum();
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            out[y * w + x] = kernel
                .iter()
                .enumerate()
                .map(|(k, kv)| kv * tmp[clamp(y as isize + k as isize - radius, h) * w + x])
                .sum();
        }
    }
    out
}

/// Frame-index pairs `(a, b)` whose flow forms the timesteps of a window.
///
/// Pair `k` is `(start + k·R, start + (k+1)·R)`, with both ends clipped to the
/// window's last frame; there are `round(|W| / R)` pairs.
pub fn flow_pairs_for_window(window: &WindowInterval, gap: usize) -> Vec<(usize, usize)> {
    let gap = gap.max(1);
    let len = window.len();
    let steps = ((len as f64 / gap as f64).round() as usize).max(1);
    let last = window.start + len - 1;
    (0..steps)
        .map(|k| {
            let b = (window.start + (k + 1) * gap).min(last);
            let a = (window.start + k * gap).min(b.saturating_sub(1).max(window.start));
            (a, b)
        })
        .collect()
}

const FLOW_MAGIC: &[u8; 8] = b"MSFLOW01";

/// Debug dump: 8-byte magic, u32 width, u32 height, then the u plane and
/// the v plane as little-endian f32.
pub fn write_flow_dump(path: &Path, flow: &FlowField) -> Result<()> {
    let mut buf = Vec::with_capacity(16 + 8 * flow.u.len());
    buf.extend_from_slice(FLOW_MAGIC);
    buf.extend_from_slice(&(flow.width as u32).to_le_bytes());
    buf.extend_from_slice(&(flow.height as u32).to_le_bytes());
    for plane in [&flow.u, &flow.v] {
        for &x in plane.iter() {
            buf.extend_from_slice(&(x as f32).to_le_bytes());
        }
    }
    std::fs::File::create(path)
        .and_then(|mut f| f.write_all(&buf))
        .map_err(|e| Error::io(path, e))
}

pub fn read_flow_dump(path: &Path) -> Result<FlowField> {
    let mut buf = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut buf))
        .map_err(|e| Error::io(path, e))?;
    if buf.len() < 16 || &buf[..8] != FLOW_MAGIC {
        return Err(Error::format("flow dump", path, "bad magic"));
    }
    let width = u32::from_le_bytes(buf[8..12].try_into().unwrap()) as usize;
    let height = u32::from_le_bytes(buf[12..16].try_into().unwrap()) as usize;
    let n = width * height;
    if buf.len() != 16 + 8 * n {
        return Err(Error::format("flow dump", path, "truncated planes"));
    }
    let plane = |k: usize| -> Vec<f64> {
        buf[16 + 4 * n * k..16 + 4 * n * (k + 1)]
            .chunks_exact(4)
            .map(|c| f64::from(f32::from_le_bytes(c.try_into().unwrap())))
            .collect()
    };
    Ok(FlowField {
        width,
        height,
        u: plane(0),
        v: plane(1),
    })
}
