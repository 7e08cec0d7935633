//! Cylindrical virtual wall, pinhole projection and tile visibility.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::angle;
use crate::error::{Error, Result};

/// Shape and tiling of the virtual wall.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CylinderParams {
    pub center: (f64, f64),
    pub radius: f64,
    pub z_min: f64,
    pub z_max: f64,
    pub rows: usize,
    pub cols: usize,
}

impl Default for CylinderParams {
    fn default() -> Self {
        Self {
            center: (0.0, 0.0),
            radius: 4.5,
            z_min: 0.4,
            z_max: 1.6,
            rows: 2,
            cols: 36,
        }
    }
}

impl CylinderParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.radius > 0.0
            && self.radius.is_finite()
            && self.z_max > self.z_min
            && self.center.0.is_finite()
            && self.center.1.is_finite()
            && self.rows >= 1
            && self.cols >= 3;
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("invalid cylinder parameters {self:?}")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TileId {
    pub row: usize,
    pub col: usize,
}

impl TileId {
    pub const fn new(row: usize, col: usize) -> Self {
        Self { row, col }
    }
}

/// Row/column addressing over a [`CylinderParams`] wall.
///
/// Column `c` covers field-frame azimuths `[c w, (c + 1) w)` with `w = 2π / cols`,
/// measured from the cylinder center. Row 0 is the lowest band.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TileGrid {
    params: CylinderParams,
}

pub fn make_tile_grid(params: CylinderParams) -> Result<TileGrid> {
    params.validate()?;
    Ok(TileGrid { params })
}

impl TileGrid {
    pub fn params(&self) -> &CylinderParams {
        &self.params
    }

    pub fn rows(&self) -> usize {
        self.params.rows
    }

    pub fn cols(&self) -> usize {
        self.params.cols
    }

    pub fn tile_count(&self) -> usize {
        self.params.rows * self.params.cols
    }

    pub fn col_width(&self) -> f64 {
        TAU / self.params.cols as f64
    }

    pub fn row_height(&self) -> f64 {
        (self.params.z_max - self.params.z_min) / self.params.rows as f64
    }

    pub fn index(&self, id: TileId) -> usize {
        id.row * self.params.cols + id.col
    }

    pub fn ids(&self) -> impl Iterator<Item = TileId> + '_ {
        (0..self.params.rows)
            .flat_map(move |row| (0..self.params.cols).map(move |col| TileId::new(row, col)))
    }

    pub fn contains(&self, id: TileId) -> bool {
        id.row < self.params.rows && id.col < self.params.cols
    }

    /// Column containing a field-frame azimuth.
    pub fn col_of_azimuth(&self, azimuth: f64) -> usize {
        let a = angle::wrap_positive(azimuth);
        ((a / self.col_width()) as usize).min(self.params.cols - 1)
    }

    pub fn row_of_height(&self, z: f64) -> Option<usize> {
        if z < self.params.z_min || z >= self.params.z_max {
            return None;
        }
        Some((((z - self.params.z_min) / self.row_height()) as usize).min(self.params.rows - 1))
    }

    pub fn azimuth_span(&self, col: usize) -> (f64, f64) {
        let w = self.col_width();
        (col as f64 * w, (col + 1) as f64 * w)
    }

    pub fn center_azimuth(&self, col: usize) -> f64 {
        (col as f64 + 0.5) * self.col_width()
    }

    pub fn height_span(&self, row: usize) -> (f64, f64) {
        let h = self.row_height();
        let lo = self.params.z_min + row as f64 * h;
        (lo, lo + h)
    }

    /// Point on the wall at a given azimuth and height.
    pub fn wall_point(&self, azimuth: f64, z: f64) -> [f64; 3] {
        let (cx, cy) = self.params.center;
        [
            cx + self.params.radius * azimuth.cos(),
            cy + self.params.radius * azimuth.sin(),
            z,
        ]
    }

    pub fn tile_center(&self, id: TileId) -> [f64; 3] {
        let (lo, hi) = self.height_span(id.row);
        self.wall_point(self.center_azimuth(id.col), 0.5 * (lo + hi))
    }

    /// Corners in order: bottom-start, bottom-end, top-end, top-start.
    pub fn tile_corners(&self, id: TileId) -> [[f64; 3]; 4] {
        let (a0, a1) = self.azimuth_span(id.col);
        let (z0, z1) = self.height_span(id.row);
        [
            self.wall_point(a0, z0),
            self.wall_point(a1, z0),
            self.wall_point(a1, z1),
            self.wall_point(a0, z1),
        ]
    }

    /// Re-addresses a tile by a rotation of the wall about its axis.
    pub fn rotate(&self, id: TileId, offset: f64) -> TileId {
        TileId::new(id.row, self.col_of_azimuth(self.center_azimuth(id.col) + offset))
    }

    /// Field-frame azimuth of a point, seen from the cylinder center.
    pub fn azimuth_of(&self, x: f64, y: f64) -> f64 {
        let (cx, cy) = self.params.center;
        angle::wrap((y - cy).atan2(x - cx))
    }

    /// Distance along a horizontal unit direction from an interior point to the wall.
    pub fn wall_distance(&self, origin: (f64, f64), dir: (f64, f64)) -> Option<f64> {
        let (cx, cy) = self.params.center;
        let (ox, oy) = (origin.0 - cx, origin.1 - cy);
        let a = dir.0 * dir.0 + dir.1 * dir.1;
        if a <= 1e-18 {
            return None;
        }
        let b = 2.0 * (ox * dir.0 + oy * dir.1);
        let c = ox * ox + oy * oy - self.params.radius * self.params.radius;
        let disc = b * b - 4.0 * a * c;
        if disc < 0.0 {
            return None;
        }
        let t = (-b + disc.sqrt()) / (2.0 * a);
        (t > 0.0).then_some(t)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraModel {
    pub horizontal_fov: f64,
    pub image_width: u32,
    pub image_height: u32,
    pub mount_height: f64,
    /// Largest accepted angle between a viewing ray and the tile's inward normal.
    pub grazing_limit: f64,
}

impl Default for CameraModel {
    fn default() -> Self {
        Self {
            horizontal_fov: 60f64.to_radians(),
            image_width: 640,
            image_height: 480,
            mount_height: 0.45,
            grazing_limit: 75f64.to_radians(),
        }
    }
}

impl CameraModel {
    pub fn validate(&self) -> Result<()> {
        let ok = self.horizontal_fov > 0.0
            && self.horizontal_fov < std::f64::consts::PI
            && self.image_width > 0
            && self.image_height > 0
            && self.mount_height.is_finite()
            && self.grazing_limit > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("invalid camera model {self:?}")))
        }
    }

    /// Focal length in pixels.
    pub fn focal(&self) -> f64 {
        0.5 * f64::from(self.image_width) / (0.5 * self.horizontal_fov).tan()
    }
}

/// Position of the robot plus the orientation of its head camera.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ViewPose {
    pub position: (f64, f64),
    pub body_heading: f64,
    pub head_yaw: f64,
    pub head_pitch: f64,
}

impl ViewPose {
    pub fn new(position: (f64, f64), body_heading: f64, head_yaw: f64, head_pitch: f64) -> Self {
        Self {
            position,
            body_heading: angle::wrap(body_heading),
            head_yaw: angle::wrap(head_yaw),
            head_pitch: angle::wrap(head_pitch),
        }
    }

    pub fn camera_heading(&self) -> f64 {
        angle::wrap(self.body_heading + self.head_yaw)
    }
}

/// Orthonormal camera frame in field coordinates.
#[derive(Debug, Clone, Copy)]
pub struct CameraFrame {
    pub origin: [f64; 3],
    pub forward: [f64; 3],
    pub left: [f64; 3],
    pub up: [f64; 3],
    focal: f64,
    cx: f64,
    cy: f64,
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

impl CameraFrame {
    pub fn new(view: &ViewPose, cam: &CameraModel) -> Self {
        let (sy, cyaw) = view.camera_heading().sin_cos();
        let (sp, cp) = view.head_pitch.sin_cos();
        Self {
            origin: [view.position.0, view.position.1, cam.mount_height],
            forward: [cyaw * cp, sy * cp, sp],
            left: [-sy, cyaw, 0.0],
            up: [-cyaw * sp, -sy * sp, cp],
            focal: cam.focal(),
            cx: 0.5 * f64::from(cam.image_width),
            cy: 0.5 * f64::from(cam.image_height),
        }
    }

    /// Pixel coordinates of a world point, `None` when behind the camera.
    pub fn project(&self, p: [f64; 3]) -> Option<(f64, f64)> {
        let d = [p[0] - self.origin[0], p[1] - self.origin[1], p[2] - self.origin[2]];
        let depth = dot(d, self.forward);
        if depth <= 1e-9 {
            return None;
        }
        Some((
            self.cx - self.focal * dot(d, self.left) / depth,
            self.cy - self.focal * dot(d, self.up) / depth,
        ))
    }

    /// Un-normalized world direction of the ray through a pixel.
    pub fn ray(&self, px: f64, py: f64) -> [f64; 3] {
        let a = (self.cx - px) / self.focal;
        let b = (self.cy - py) / self.focal;
        [
            self.forward[0] + a * self.left[0] + b * self.up[0],
            self.forward[1] + a * self.left[1] + b * self.up[1],
            self.forward[2] + a * self.left[2] + b * self.up[2],
        ]
    }

    /// Where the ray through a pixel meets the wall, as `(azimuth, z)`.
    pub fn hit_wall(&self, grid: &TileGrid, px: f64, py: f64) -> Option<(f64, f64)> {
        let r = self.ray(px, py);
        let t = grid.wall_distance((self.origin[0], self.origin[1]), (r[0], r[1]))?;
        let x = self.origin[0] + t * r[0];
        let y = self.origin[1] + t * r[1];
        Some((grid.azimuth_of(x, y), self.origin[2] + t * r[2]))
    }
}

/// Field-frame azimuth where the optical axis meets the wall.
pub fn view_center_azimuth(v: &ViewPose, grid: &TileGrid) -> f64 {
    let heading = v.camera_heading();
    let dir = (heading.cos(), heading.sin());
    match grid.wall_distance(v.position, dir) {
        Some(t) => grid.azimuth_of(v.position.0 + t * dir.0, v.position.1 + t * dir.1),
        None => heading,
    }
}

/// A field-frame disc that blocks the view, e.g. another robot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Occluder {
    pub center: (f64, f64),
    pub radius: f64,
}

impl Occluder {
    /// Whether the segment `from -> to` passes through the disc.
    fn blocks(&self, from: (f64, f64), to: (f64, f64)) -> bool {
        let (dx, dy) = (to.0 - from.0, to.1 - from.1);
        let (fx, fy) = (from.0 - self.center.0, from.1 - self.center.1);
        let a = dx * dx + dy * dy;
        if a <= 0.0 {
            return false;
        }
        let t = (-(fx * dx + fy * dy) / a).clamp(0.0, 1.0);
        let (px, py) = (fx + t * dx, fy + t * dy);
        px * px + py * py <= self.radius * self.radius
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VisibleTile {
    pub id: TileId,
    /// Projected corners, ordered as in [`TileGrid::tile_corners`].
    pub quad: [(f64, f64); 4],
}

/// Angle between the ray from the camera to a tile center and the tile's inward normal.
pub fn incidence_angle(v: &ViewPose, cam: &CameraModel, grid: &TileGrid, id: TileId) -> f64 {
    let c = grid.tile_center(id);
    let to_cam = [
        v.position.0 - c[0],
        v.position.1 - c[1],
        cam.mount_height - c[2],
    ];
    let (ox, oy) = grid.params().center;
    let normal = [(ox - c[0]), (oy - c[1]), 0.0];
    let n = dot(normal, normal).sqrt();
    let m = dot(to_cam, to_cam).sqrt();
    if n <= 0.0 || m <= 0.0 {
        return 0.0;
    }
    (dot(to_cam, normal) / (n * m)).clamp(-1.0, 1.0).acos()
}

/// Tiles whose four projected corners fall inside the image, that are not
/// seen edge-on and whose center ray is not blocked by an occluder.
pub fn visible_tiles(
    v: &ViewPose,
    cam: &CameraModel,
    grid: &TileGrid,
    occluders: &[Occluder],
) -> Vec<VisibleTile> {
    let frame = CameraFrame::new(v, cam);
    let (w, h) = (f64::from(cam.image_width), f64::from(cam.image_height));
    let inside = |(x, y): (f64, f64)| (0.0..=w).contains(&x) && (0.0..=h).contains(&y);
    let mut out = Vec::new();
    for id in grid.ids() {
        let corners = grid.tile_corners(id);
        let mut quad = [(0.0, 0.0); 4];
        let mut ok = true;
        for (q, c) in quad.iter_mut().zip(corners) {
            match frame.project(c) {
                Some(p) if inside(p) => *q = p,
                _ => {
                    ok = false;
                    break;
                }
            }
        }
        if !ok || incidence_angle(v, cam, grid, id) > cam.grazing_limit {
            continue;
        }
        let center = grid.tile_center(id);
        if occluders
            .iter()
            .any(|o| o.blocks(v.position, (center[0], center[1])))
        {
            continue;
        }
        out.push(VisibleTile { id, quad });
    }
    out
}
