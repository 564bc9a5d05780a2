use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Head position in pixel coordinates (`x` is the column, `y` the row).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl From<[f64; 2]> for Point {
    fn from([x, y]: [f64; 2]) -> Self {
        Point { x, y }
    }
}

impl From<Point> for [f64; 2] {
    fn from(p: Point) -> Self {
        [p.x, p.y]
    }
}

/// How visible a head is; only synthetic scenes carry this.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HeadKind {
    Easy,
    Hard,
}

/// Head annotations for one image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationSet {
    pub width: usize,
    pub height: usize,
    pub points: Vec<Point>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kinds: Option<Vec<HeadKind>>,
}

impl AnnotationSet {
    pub fn new(width: usize, height: usize, points: Vec<Point>) -> Result<Self> {
        let set = Self {
            width,
            height,
            points,
            kinds: None,
        };
        set.validate()?;
        Ok(set)
    }

    pub fn with_kinds(mut self, kinds: Vec<HeadKind>) -> Result<Self> {
        self.kinds = Some(kinds);
        self.validate()?;
        Ok(self)
    }

    pub fn empty(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            points: Vec::new(),
            kinds: None,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        for (i, p) in self.points.iter().enumerate() {
            let inside = p.x.is_finite()
                && p.y.is_finite()
                && p.x >= 0.0
                && p.y >= 0.0
                && p.x < self.width as f64
                && p.y < self.height as f64;
            if !inside {
                return Err(Error::Data(format!(
                    "point {i} at ({}, {}) lies outside the {}x{} image",
                    p.x, p.y, self.width, self.height
                )));
            }
        }
        if let Some(kinds) = &self.kinds {
            if kinds.len() != self.points.len() {
                return Err(Error::Data(format!(
                    "{} head kinds for {} points",
                    kinds.len(),
                    self.points.len()
                )));
            }
        }
        Ok(())
    }

    pub fn kind_of(&self, i: usize) -> Option<HeadKind> {
        self.kinds.as_ref().map(|k| k[i])
    }

    /// Heads inside the rectangle, re-expressed relative to its top-left corner.
    pub fn crop(&self, x0: usize, y0: usize, width: usize, height: usize) -> Self {
        let mut points = Vec::new();
        let mut kinds = self.kinds.as_ref().map(|_| Vec::new());
        for (i, p) in self.points.iter().enumerate() {
            let (x, y) = (p.x - x0 as f64, p.y - y0 as f64);
            if x >= 0.0 && y >= 0.0 && x < width as f64 && y < height as f64 {
                points.push(Point { x, y });
                if let (Some(out), Some(src)) = (kinds.as_mut(), self.kinds.as_ref()) {
                    out.push(src[i]);
                }
            }
        }
        Self {
            width,
            height,
            points,
            kinds,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let set: Self = serde_json::from_str(text).map_err(|e| Error::Data(format!("annotation JSON: {e}")))?;
        set.validate()?;
        Ok(set)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Data(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }
}
