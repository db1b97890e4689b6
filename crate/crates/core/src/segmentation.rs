//! Head boundary extraction from a per-pixel segmentation mask.
//!
//! The mask is binarized, 4-connected components are labeled, speckle below
//! `min_component_px` is dropped, and the bounding box of the largest
//! remaining component is the head rectangle.

use thiserror::Error;

use crate::mesh::Rect;

pub const DEFAULT_THRESHOLD: f32 = 0.5;
pub const DEFAULT_MIN_COMPONENT_PX: usize = 64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SegmentationError {
    #[error("no head detected in segmentation mask")]
    NoHeadDetected,
    #[error("run lengths sum to {got}, expected {expected}")]
    RleLengthMismatch { expected: u64, got: u64 },
    #[error("invalid mask: {0}")]
    InvalidMask(String),
}

pub type Result<T> = std::result::Result<T, SegmentationError>;

/// Head-confidence mask, row-major, values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SegMask {
    width: u32,
    height: u32,
    confidences: Vec<f32>,
}

impl SegMask {
    pub fn new(width: u32, height: u32, confidences: Vec<f32>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(SegmentationError::InvalidMask("dimensions must be >= 1".into()));
        }
        let expected = width as usize * height as usize;
        if confidences.len() != expected {
            return Err(SegmentationError::InvalidMask(format!(
                "{} confidences for a {width}x{height} mask",
                confidences.len()
            )));
        }
        if let Some(i) = confidences.iter().position(|c| !(0.0..=1.0).contains(c)) {
            return Err(SegmentationError::InvalidMask(format!(
                "confidence {} at index {i} outside [0, 1]",
                confidences[i]
            )));
        }
        Ok(Self { width, height, confidences })
    }

    pub fn from_fn(width: u32, height: u32, f: impl Fn(u32, u32) -> f32) -> Result<Self> {
        let mut c = Vec::with_capacity(width as usize * height as usize);
        for y in 0..height {
            for x in 0..width {
                c.push(f(x, y));
            }
        }
        Self::new(width, height, c)
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn confidences(&self) -> &[f32] {
        &self.confidences
    }

    pub fn binarize(&self, threshold: f32) -> Vec<bool> {
        self.confidences.iter().map(|&c| c >= threshold).collect()
    }
}

#[derive(Debug, Clone, Copy)]
struct Component {
    size: usize,
    min_x: u32,
    min_y: u32,
    max_x: u32,
    max_y: u32,
}

/// Bounding box of the largest 4-connected foreground component with at least
/// `min_component_px` pixels. Equal sizes resolve to the component found first
/// in row-major order.
pub fn largest_component_box(width: u32, height: u32, fg: &[bool], min_component_px: usize) -> Result<Rect> {
    largest_component(width, height, fg, min_component_px).map(|(r, _)| r)
}

/// Like [`largest_component_box`], also returning the component's pixel count.
pub fn largest_component(width: u32, height: u32, fg: &[bool], min_component_px: usize) -> Result<(Rect, usize)> {
    let (w, h) = (width as usize, height as usize);
    debug_assert_eq!(fg.len(), w * h);
    let mut visited = vec![false; fg.len()];
    let mut stack = Vec::new();
    let mut best: Option<Component> = None;

    for start in 0..fg.len() {
        if !fg[start] || visited[start] {
            continue;
        }
        visited[start] = true;
        stack.push(start);
        let mut comp = Component {
            size: 0,
            min_x: u32::MAX,
            min_y: u32::MAX,
            max_x: 0,
            max_y: 0,
        };
        while let Some(i) = stack.pop() {
            let (x, y) = (i % w, i / w);
            comp.size += 1;
            comp.min_x = comp.min_x.min(x as u32);
            comp.max_x = comp.max_x.max(x as u32);
            comp.min_y = comp.min_y.min(y as u32);
            comp.max_y = comp.max_y.max(y as u32);
            let mut visit = |j: usize| {
                if fg[j] && !visited[j] {
                    visited[j] = true;
                    stack.push(j);
                }
            };
            if x > 0 {
                visit(i - 1);
            }
            if x + 1 < w {
                visit(i + 1);
            }
            if y > 0 {
                visit(i - w);
            }
            if y + 1 < h {
                visit(i + w);
            }
        }
        if comp.size >= min_component_px && best.is_none_or(|b| comp.size > b.size) {
            best = Some(comp);
        }
    }

    let c = best.ok_or(SegmentationError::NoHeadDetected)?;
    let rect = Rect::new(
        c.min_x as f64,
        c.min_y as f64,
        (c.max_x - c.min_x + 1) as f64,
        (c.max_y - c.min_y + 1) as f64,
    );
    Ok((rect, c.size))
}

pub fn mask_to_box(mask: &SegMask, threshold: f32, min_component_px: usize) -> Result<Rect> {
    largest_component_box(mask.width, mask.height, &mask.binarize(threshold), min_component_px)
}

/// Run lengths over the binarized mask, row-major, background first.
pub fn encode_rle(fg: &[bool]) -> Vec<u32> {
    let mut runs = Vec::new();
    let mut current = false;
    let mut len = 0u32;
    for &v in fg {
        if v == current {
            len += 1;
        } else {
            runs.push(len);
            current = v;
            len = 1;
        }
    }
    runs.push(len);
    runs
}

pub fn decode_rle(width: u32, height: u32, runs: &[u32]) -> Result<Vec<bool>> {
    let expected = width as u64 * height as u64;
    let got: u64 = runs.iter().map(|&r| r as u64).sum();
    if got != expected {
        return Err(SegmentationError::RleLengthMismatch { expected, got });
    }
    let mut out = Vec::with_capacity(expected as usize);
    for (i, &r) in runs.iter().enumerate() {
        out.extend(std::iter::repeat_n(i % 2 == 1, r as usize));
    }
    Ok(out)
}

pub fn box_from_rle(width: u32, height: u32, runs: &[u32], min_component_px: usize) -> Result<Rect> {
    if width == 0 || height == 0 {
        return Err(SegmentationError::InvalidMask("dimensions must be >= 1".into()));
    }
    let fg = decode_rle(width, height, runs)?;
    largest_component_box(width, height, &fg, min_component_px)
}
