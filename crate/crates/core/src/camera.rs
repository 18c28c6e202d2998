//! Pinhole camera, 16-bit depth images and the image ↔ heatmap grid mapping.
//!
//! Camera frame: +x right, +y down, +z forward. Depth samples are raw sensor
//! units; multiply by [`Intrinsics::depth_scale`] for meters. A zero sample
//! is invalid.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::geometry::Vec3;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
    /// Meters per depth unit.
    pub depth_scale: f64,
}

impl Default for Intrinsics {
    /// 384×288 camera with a ~57° horizontal field of view and 0.1 mm depth units.
    fn default() -> Self {
        Self {
            fx: 350.0,
            fy: 350.0,
            cx: 192.0,
            cy: 144.0,
            width: 384,
            height: 288,
            depth_scale: 1e-4,
        }
    }
}

impl Intrinsics {
    pub fn validate(&self) -> Result<()> {
        let finite = [self.fx, self.fy, self.cx, self.cy, self.depth_scale]
            .iter()
            .all(|v| v.is_finite());
        if !finite || self.fx <= 0.0 || self.fy <= 0.0 || self.depth_scale <= 0.0 {
            return Err(Error::invalid(
                "focal lengths and depth scale must be positive",
            ));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::invalid("image size must be positive"));
        }
        Ok(())
    }

    pub fn load_json(path: impl AsRef<Path>) -> Result<Self> {
        let intr: Intrinsics = serde_json::from_slice(&fs::read(path)?)?;
        intr.validate()?;
        Ok(intr)
    }

    /// Back-projects pixel `(u, v)` at metric depth `z`.
    #[inline]
    pub fn unproject(&self, u: f64, v: f64, z: f64) -> Vec3 {
        Vec3::new((u - self.cx) * z / self.fx, (v - self.cy) * z / self.fy, z)
    }

    /// Projects a camera-frame point to `(u, v)`; `None` behind the camera.
    #[inline]
    pub fn project(&self, p: &Vec3) -> Option<(f64, f64)> {
        if p.z <= 0.0 || !p.z.is_finite() {
            return None;
        }
        Some((self.fx * p.x / p.z + self.cx, self.fy * p.y / p.z + self.cy))
    }

    /// Integer pixel containing the projection of `p`, if inside the image.
    pub fn pixel_of(&self, p: &Vec3) -> Option<(usize, usize)> {
        let (u, v) = self.project(p)?;
        let (u, v) = (u.round(), v.round());
        if u < 0.0 || v < 0.0 || u >= self.width as f64 || v >= self.height as f64 {
            return None;
        }
        Some((u as usize, v as usize))
    }
}

/// Row-major 16-bit depth image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DepthImage {
    width: usize,
    height: usize,
    data: Vec<u16>,
}

impl DepthImage {
    pub fn new(width: usize, height: usize, data: Vec<u16>) -> Result<Self> {
        if width.checked_mul(height) != Some(data.len()) {
            return Err(Error::invalid(format!(
                "depth buffer of {} samples does not match {width}x{height}",
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[u16] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [u16] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, u: usize, v: usize) -> u16 {
        self.data[v * self.width + u]
    }

    pub fn valid_count(&self) -> usize {
        self.data.iter().filter(|&&d| d != 0).count()
    }

    fn check_matches(&self, intr: &Intrinsics) -> Result<()> {
        if self.width != intr.width || self.height != intr.height {
            return Err(Error::DimensionMismatch(format!(
                "depth image is {}x{} but intrinsics describe {}x{}",
                self.width, self.height, intr.width, intr.height
            )));
        }
        Ok(())
    }

    /// Reads a binary PGM (`P5`, maxval 65535, big-endian samples).
    pub fn load_pgm(path: impl AsRef<Path>) -> Result<Self> {
        Self::decode_pgm(&fs::read(path)?)
    }

    pub fn save_pgm(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = fs::File::create(path)?;
        f.write_all(&self.encode_pgm())?;
        Ok(())
    }

    pub fn encode_pgm(&self) -> Vec<u8> {
        let header = format!("P5\n{} {}\n65535\n", self.width, self.height);
        let mut out = Vec::with_capacity(header.len() + 2 * self.data.len());
        out.extend_from_slice(header.as_bytes());
        for &d in &self.data {
            out.extend_from_slice(&d.to_be_bytes());
        }
        out
    }

    pub fn decode_pgm(bytes: &[u8]) -> Result<Self> {
        let mut cursor = PgmCursor { bytes, pos: 0 };
        if bytes.len() < 2 || &bytes[..2] != b"P5" {
            return Err(Error::format(0, "missing P5 magic"));
        }
        cursor.pos = 2;
        let (width, _) = cursor.header_int()?;
        let (height, _) = cursor.header_int()?;
        let (maxval, maxval_at) = cursor.header_int()?;
        if maxval != 65535 {
            return Err(Error::format(
                maxval_at as u64,
                format!("maxval {maxval} unsupported, expected 65535"),
            ));
        }
        // Exactly one whitespace byte separates the header from the raster.
        match bytes.get(cursor.pos) {
            Some(b) if b.is_ascii_whitespace() => cursor.pos += 1,
            _ => {
                return Err(Error::format(
                    cursor.pos as u64,
                    "expected whitespace after maxval",
                ))
            }
        }
        if width == 0 || height == 0 {
            return Err(Error::format(3, "zero image dimension"));
        }
        let count = width
            .checked_mul(height)
            .ok_or_else(|| Error::format(3, "image dimensions overflow"))?;
        let payload = &bytes[cursor.pos..];
        if payload.len() < 2 * count {
            return Err(Error::format(
                bytes.len() as u64,
                format!(
                    "truncated raster: need {} bytes, found {}",
                    2 * count,
                    payload.len()
                ),
            ));
        }
        let data = payload[..2 * count]
            .chunks_exact(2)
            .map(|c| u16::from_be_bytes([c[0], c[1]]))
            .collect();
        Self::new(width, height, data)
    }
}

struct PgmCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl PgmCursor<'_> {
    fn skip_space_and_comments(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b.is_ascii_whitespace() {
                self.pos += 1;
            } else if b == b'#' {
                while let Some(&c) = self.bytes.get(self.pos) {
                    self.pos += 1;
                    if c == b'\n' {
                        break;
                    }
                }
            } else {
                break;
            }
        }
    }

    /// Next decimal field and the offset where it starts.
    fn header_int(&mut self) -> Result<(usize, usize)> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.bytes.get(self.pos).is_some_and(u8::is_ascii_digit) {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(Error::format(
                start as u64,
                "expected a decimal header field",
            ));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .map(|v| (v, start))
            .ok_or_else(|| Error::format(start as u64, "header field out of range"))
    }
}

/// Camera-frame points in meters; every point has `z > 0`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointCloud {
    pub points: Vec<Vec3>,
}

impl PointCloud {
    pub fn new(points: Vec<Vec3>) -> Result<Self> {
        if let Some(i) = points
            .iter()
            .position(|p| !(p.iter().all(|c| c.is_finite()) && p.z > 0.0))
        {
            return Err(Error::invalid(format!(
                "point {i} is non-finite or behind the camera"
            )));
        }
        Ok(Self { points })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Whitespace-separated `x y z` per line; blank lines and `#` comments skipped.
    pub fn load_xyz(path: impl AsRef<Path>) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let mut points = Vec::new();
        for (line_no, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let vals: Vec<f64> = line
                .split_whitespace()
                .map(str::parse)
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| Error::format(line_no as u64 + 1, "unparsable coordinate"))?;
            if vals.len() != 3 {
                return Err(Error::format(
                    line_no as u64 + 1,
                    "expected three coordinates",
                ));
            }
            points.push(Vec3::new(vals[0], vals[1], vals[2]));
        }
        Self::new(points)
    }

    pub fn save_xyz(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = String::with_capacity(self.points.len() * 40);
        for p in &self.points {
            // `{:?}` on f64 prints the shortest string that round-trips.
            out.push_str(&format!("{:?} {:?} {:?}\n", p.x, p.y, p.z));
        }
        fs::write(path, out)?;
        Ok(())
    }
}

/// Back-projects every valid pixel, in row-major pixel order.
pub fn backproject(depth: &DepthImage, intr: &Intrinsics) -> Result<PointCloud> {
    depth.check_matches(intr)?;
    let mut points = Vec::with_capacity(depth.valid_count());
    for v in 0..depth.height {
        for u in 0..depth.width {
            let d = depth.get(u, v);
            if d != 0 {
                let z = d as f64 * intr.depth_scale;
                points.push(intr.unproject(u as f64, v as f64, z));
            }
        }
    }
    Ok(PointCloud { points })
}

/// Partition of the image into `grid_h × grid_w` square cells of `stride` pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridMap {
    pub stride: usize,
    pub grid_h: usize,
    pub grid_w: usize,
}

impl GridMap {
    pub fn new(stride: usize, width: usize, height: usize) -> Result<Self> {
        if stride == 0 || width == 0 || height == 0 {
            return Err(Error::invalid("stride and image size must be positive"));
        }
        if !width.is_multiple_of(stride) || !height.is_multiple_of(stride) {
            return Err(Error::invalid(format!(
                "image {width}x{height} is not divisible by stride {stride}"
            )));
        }
        Ok(Self {
            stride,
            grid_h: height / stride,
            grid_w: width / stride,
        })
    }

    pub fn for_intrinsics(stride: usize, intr: &Intrinsics) -> Result<Self> {
        Self::new(stride, intr.width, intr.height)
    }

    pub fn image_width(&self) -> usize {
        self.stride * self.grid_w
    }

    pub fn image_height(&self) -> usize {
        self.stride * self.grid_h
    }

    /// Center pixel `(u, v)` of cell `(row, col)`.
    #[inline]
    pub fn cell_center(&self, row: usize, col: usize) -> (usize, usize) {
        (
            col * self.stride + self.stride / 2,
            row * self.stride + self.stride / 2,
        )
    }

    /// Cell `(row, col)` containing pixel `(u, v)`.
    #[inline]
    pub fn cell_of_pixel(&self, u: usize, v: usize) -> Option<(usize, usize)> {
        let (row, col) = (v / self.stride, u / self.stride);
        (row < self.grid_h && col < self.grid_w).then_some((row, col))
    }

    pub fn check_matches(&self, intr: &Intrinsics) -> Result<()> {
        if self.image_width() != intr.width || self.image_height() != intr.height {
            return Err(Error::DimensionMismatch(format!(
                "grid {}x{} at stride {} does not tile a {}x{} image",
                self.grid_w, self.grid_h, self.stride, intr.width, intr.height
            )));
        }
        Ok(())
    }
}

/// 3D anchor for a grid cell: the cell-center pixel, falling back to the
/// median valid depth inside the cell when the center pixel is invalid.
pub fn point_of_grid(
    grid: &GridMap,
    row: usize,
    col: usize,
    depth: &DepthImage,
    intr: &Intrinsics,
) -> Result<Option<Vec3>> {
    if row >= grid.grid_h || col >= grid.grid_w {
        return Err(Error::invalid(format!(
            "cell ({row}, {col}) outside {}x{} grid",
            grid.grid_h, grid.grid_w
        )));
    }
    depth.check_matches(intr)?;
    Ok(anchor_unchecked(grid, row, col, depth, intr))
}

pub(crate) fn anchor_unchecked(
    grid: &GridMap,
    row: usize,
    col: usize,
    depth: &DepthImage,
    intr: &Intrinsics,
) -> Option<Vec3> {
    let (u, v) = grid.cell_center(row, col);
    let d = depth.get(u, v);
    let raw = if d != 0 {
        d as f64
    } else {
        let mut valid: Vec<u16> = Vec::with_capacity(grid.stride * grid.stride);
        for vv in row * grid.stride..(row + 1) * grid.stride {
            for uu in col * grid.stride..(col + 1) * grid.stride {
                let s = depth.get(uu, vv);
                if s != 0 {
                    valid.push(s);
                }
            }
        }
        median(&mut valid)?
    };
    Some(intr.unproject(u as f64, v as f64, raw * intr.depth_scale))
}

fn median(values: &mut [u16]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_unstable();
    let n = values.len();
    Some(if n % 2 == 1 {
        values[n / 2] as f64
    } else {
        (values[n / 2 - 1] as f64 + values[n / 2] as f64) / 2.0
    })
}
