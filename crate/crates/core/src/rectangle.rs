use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RectangleMethod {
    Delta,
    Bootstrap,
    SuperAccurate,
    FiniteSample,
    AppendixUnion,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HalfWidth {
    /// One radius for every coordinate (a max-norm ball).
    Uniform(f64),
    PerCoordinate(Vec<f64>),
}

/// A simultaneous confidence set: the product of intervals
/// `center[i] +/- half_width[i]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceRectangle {
    center: Vec<f64>,
    half_width: HalfWidth,
    alpha: f64,
    method: RectangleMethod,
    n: usize,
}

impl ConfidenceRectangle {
    pub fn new(center: Vec<f64>, half_width: HalfWidth, alpha: f64, method: RectangleMethod, n: usize) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::InvalidArgument(format!("alpha must lie in (0, 1), got {alpha}")));
        }
        match &half_width {
            HalfWidth::Uniform(w) if !(*w >= 0.0) => {
                return Err(Error::InvalidArgument(format!("negative half-width {w}")))
            }
            HalfWidth::PerCoordinate(ws) => {
                if ws.len() != center.len() {
                    return Err(Error::InvalidArgument(format!(
                        "{} half-widths for {} coordinates",
                        ws.len(),
                        center.len()
                    )));
                }
                if let Some(w) = ws.iter().find(|w| !(**w >= 0.0)) {
                    return Err(Error::InvalidArgument(format!("negative half-width {w}")));
                }
            }
            _ => {}
        }
        Ok(Self {
            center,
            half_width,
            alpha,
            method,
            n,
        })
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }

    pub fn half_width(&self) -> &HalfWidth {
        &self.half_width
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn method(&self) -> RectangleMethod {
        self.method
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.center.len()
    }

    pub fn is_empty(&self) -> bool {
        self.center.is_empty()
    }

    pub fn half_width_at(&self, i: usize) -> f64 {
        match &self.half_width {
            HalfWidth::Uniform(w) => *w,
            HalfWidth::PerCoordinate(ws) => ws[i],
        }
    }

    pub fn interval(&self, i: usize) -> (f64, f64) {
        let w = self.half_width_at(i);
        (self.center[i] - w, self.center[i] + w)
    }

    /// True when every coordinate of `point` lies in its interval.
    pub fn contains(&self, point: &[f64]) -> bool {
        point.len() == self.center.len()
            && point
                .iter()
                .enumerate()
                .all(|(i, p)| (p - self.center[i]).abs() <= self.half_width_at(i))
    }
}
