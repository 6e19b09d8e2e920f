//! Rectangle and coordinate-mapping types.
//!
//! Two integer rect flavors keep units straight in signatures: [`GridRect`]
//! lives on the (upsampled) saliency grid, [`Roi`] in high-res frame pixels.
//! [`Rect`] is the float rect used for overlap math between arbitrary boxes.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Saliency-grid dimensions paired with the frame they map onto.
///
/// The mapping is rational: `scale_x() = frame_w / grid_w` need not be an
/// integer, though it is 8 in the common configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameGeometry {
    pub grid_w: usize,
    pub grid_h: usize,
    pub frame_w: usize,
    pub frame_h: usize,
}

impl FrameGeometry {
    pub fn new(grid_w: usize, grid_h: usize, frame_w: usize, frame_h: usize) -> Result<Self> {
        if grid_w == 0 || grid_h == 0 {
            return Err(Error::InvalidParam {
                name: "grid",
                msg: format!("{grid_w}x{grid_h} must be at least 1x1"),
            });
        }
        if frame_w < grid_w || frame_h < grid_h {
            return Err(Error::InvalidParam {
                name: "frame",
                msg: format!("{frame_w}x{frame_h} smaller than grid {grid_w}x{grid_h}"),
            });
        }
        Ok(Self {
            grid_w,
            grid_h,
            frame_w,
            frame_h,
        })
    }

    pub fn scale_x(&self) -> f64 {
        self.frame_w as f64 / self.grid_w as f64
    }

    pub fn scale_y(&self) -> f64 {
        self.frame_h as f64 / self.grid_h as f64
    }
}

/// Axis-aligned rect in saliency-grid cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridRect {
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
}

/// Axis-aligned crop region in frame pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Roi {
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
}

impl Roi {
    /// True when the region lies fully inside a `frame_w × frame_h` frame.
    pub fn fits(&self, frame_w: usize, frame_h: usize) -> bool {
        self.w >= 1
            && self.h >= 1
            && self.x + self.w <= frame_w
            && self.y + self.h <= frame_h
    }

    pub fn as_rect(&self) -> Rect {
        Rect {
            x: self.x as f64,
            y: self.y as f64,
            w: self.w as f64,
            h: self.h as f64,
        }
    }
}

/// Float rect for overlap computations; any consistent unit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl Rect {
    /// Intersection-over-union. Degenerate rects (zero width or height on
    /// both sides of the union) yield 0 rather than NaN.
    pub fn iou(&self, other: &Rect) -> f64 {
        let ix = (self.x + self.w).min(other.x + other.w) - self.x.max(other.x);
        let iy = (self.y + self.h).min(other.y + other.h) - self.y.max(other.y);
        let inter = ix.max(0.0) * iy.max(0.0);
        let union = self.w * self.h + other.w * other.h - inter;
        if union <= 0.0 {
            0.0
        } else {
            inter / union
        }
    }
}

#[derive(Serialize, Deserialize)]
struct TrackLine {
    frame: usize,
    x: usize,
    y: usize,
    w: usize,
    h: usize,
}

/// Writes a track as JSON Lines, one `{"frame","x","y","w","h"}` per frame.
pub fn write_track<P: AsRef<Path>>(path: P, track: &[Roi]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for (frame, roi) in track.iter().enumerate() {
        let line = TrackLine {
            frame,
            x: roi.x,
            y: roi.y,
            w: roi.w,
            h: roi.h,
        };
        serde_json::to_writer(&mut w, &line).map_err(|e| Error::EventSyntax {
            line: frame + 1,
            msg: e.to_string(),
        })?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a track written by [`write_track`]. Frames must be contiguous from
/// zero and in order; anything else is a validation error.
pub fn read_track<P: AsRef<Path>>(path: P) -> Result<Vec<Roi>> {
    let r = BufReader::new(File::open(path)?);
    let mut track = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: TrackLine = serde_json::from_str(&line).map_err(|e| Error::EventSyntax {
            line: i + 1,
            msg: e.to_string(),
        })?;
        if rec.frame != track.len() {
            return Err(Error::InvalidParam {
                name: "track",
                msg: format!(
                    "line {}: frame {} out of order, expected {}",
                    i + 1,
                    rec.frame,
                    track.len()
                ),
            });
        }
        track.push(Roi {
            x: rec.x,
            y: rec.y,
            w: rec.w,
            h: rec.h,
        });
    }
    Ok(track)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn iou_hand_value() {
        let a = Rect { x: 0.0, y: 0.0, w: 2.0, h: 2.0 };
        let b = Rect { x: 1.0, y: 1.0, w: 2.0, h: 2.0 };
        assert!((a.iou(&b) - 1.0 / 7.0).abs() < 1e-12);
        assert!((b.iou(&a) - 1.0 / 7.0).abs() < 1e-12);
    }

    #[test]
    fn iou_disjoint_identical_degenerate() {
        let a = Rect { x: 0.0, y: 0.0, w: 1.0, h: 1.0 };
        let b = Rect { x: 5.0, y: 0.0, w: 1.0, h: 1.0 };
        assert_eq!(a.iou(&b), 0.0);
        assert!((a.iou(&a) - 1.0).abs() < 1e-12);
        let z = Rect { x: 0.0, y: 0.0, w: 0.0, h: 3.0 };
        assert_eq!(z.iou(&z), 0.0);
    }

    #[test]
    fn geometry_rejects_frame_smaller_than_grid() {
        assert!(FrameGeometry::new(56, 56, 448, 448).is_ok());
        assert!(FrameGeometry::new(56, 56, 55, 448).is_err());
        assert!(FrameGeometry::new(0, 1, 1, 1).is_err());
    }

    #[test]
    fn track_round_trip_and_order_check() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("track.jsonl");
        let track = vec![
            Roi { x: 0, y: 0, w: 4, h: 4 },
            Roi { x: 2, y: 1, w: 4, h: 4 },
        ];
        write_track(&path, &track).unwrap();
        assert_eq!(read_track(&path).unwrap(), track);

        // Gap in frame numbering is rejected.
        std::fs::write(
            &path,
            "{\"frame\":0,\"x\":0,\"y\":0,\"w\":1,\"h\":1}\n{\"frame\":2,\"x\":0,\"y\":0,\"w\":1,\"h\":1}\n",
        )
        .unwrap();
        assert!(read_track(&path).is_err());
    }
}
