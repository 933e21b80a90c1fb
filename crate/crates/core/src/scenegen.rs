//! Deterministic synthetic tabletop scenes with ground truth, plus the
//! brute-force oracles the test suite checks the fast paths against.
//!
//! World frame: z up, table at z = 0. A pinhole camera hangs at
//! `(0, 0, mount_height)` looking straight down with image +x along world +x
//! and image +y along world +y, so image angles equal world yaw.
//!
//! Only surfaces visible from above are sampled: object tops and the table
//! (optionally wrinkled by towel ridges). Table points under an object and
//! points hidden behind a taller object's top face are dropped.

use image::{Rgb, RgbImage};
use nalgebra::{Point2, Point3, Vector2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::cloud::PointCloud;
use crate::detect::{make_gbd, Anchor, DepthImage, Detection, RawPredictionGrid, ANCHOR_ANGLES};
use crate::error::{Error, Result};
use crate::rotgeom::{angle_factor, contains3d, intersection_area, OrientedBox3D, RotatedBox2D};

/// Overhead pinhole camera.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Camera {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
    /// Height of the optical center above the table, in meters.
    pub mount_height: f64,
}

impl Default for Camera {
    fn default() -> Self {
        Self {
            fx: 1000.0,
            fy: 1000.0,
            cx: 320.0,
            cy: 240.0,
            width: 640,
            height: 480,
            mount_height: 0.6,
        }
    }
}

impl Camera {
    /// Image coordinates of a world point.
    pub fn project(&self, p: &Point3<f64>) -> Point2<f64> {
        let depth = self.mount_height - p.z;
        Point2::new(
            self.cx + self.fx * p.x / depth,
            self.cy + self.fy * p.y / depth,
        )
    }

    pub fn in_image(&self, px: &Point2<f64>) -> bool {
        px.x >= 0.0 && px.y >= 0.0 && px.x < self.width as f64 && px.y < self.height as f64
    }

    /// Table-level region seen by the camera: `(x_min, x_max, y_min, y_max)`.
    pub fn table_view(&self) -> (f64, f64, f64, f64) {
        let h = self.mount_height;
        (
            -self.cx * h / self.fx,
            (self.width as f64 - self.cx) * h / self.fx,
            -self.cy * h / self.fy,
            (self.height as f64 - self.cy) * h / self.fy,
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ShapeKind {
    /// dims: `[w, h, height]`, `w` along the yaw direction.
    Cuboid,
    /// dims: `[radius, height]`.
    Cylinder,
    /// Half-cylinder wrinkle on the table. dims: `[length, radius]`, running
    /// along the yaw direction.
    TowelRidge,
}

fn default_score() -> f64 {
    1.0
}

fn default_true() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectSpec {
    pub shape: ShapeKind,
    /// `[x, y, yaw_deg]`.
    pub pose: [f64; 3],
    pub dims: Vec<f64>,
    pub class_name: String,
    #[serde(default = "default_score")]
    pub score: f64,
    /// Undetected objects still occupy the scene (walls, clutter).
    #[serde(default = "default_true")]
    pub detected: bool,
}

impl ObjectSpec {
    #[allow(clippy::too_many_arguments)]
    pub fn cuboid(
        x: f64,
        y: f64,
        yaw: f64,
        w: f64,
        h: f64,
        height: f64,
        class: &str,
        score: f64,
    ) -> Self {
        Self {
            shape: ShapeKind::Cuboid,
            pose: [x, y, yaw],
            dims: vec![w, h, height],
            class_name: class.into(),
            score,
            detected: true,
        }
    }

    pub fn cylinder(x: f64, y: f64, radius: f64, height: f64, class: &str, score: f64) -> Self {
        Self {
            shape: ShapeKind::Cylinder,
            pose: [x, y, 0.0],
            dims: vec![radius, height],
            class_name: class.into(),
            score,
            detected: true,
        }
    }

    pub fn ridge(x: f64, y: f64, yaw: f64, length: f64, radius: f64) -> Self {
        Self {
            shape: ShapeKind::TowelRidge,
            pose: [x, y, yaw],
            dims: vec![length, radius],
            class_name: "towel".into(),
            score: 1.0,
            detected: false,
        }
    }

    pub fn undetected(mut self) -> Self {
        self.detected = false;
        self
    }

    /// Planar size along local x and y, and top height.
    fn size(&self) -> (f64, f64, f64) {
        match self.shape {
            ShapeKind::Cuboid => (self.dims[0], self.dims[1], self.dims[2]),
            ShapeKind::Cylinder => (2.0 * self.dims[0], 2.0 * self.dims[0], self.dims[1]),
            ShapeKind::TowelRidge => (self.dims[0], 2.0 * self.dims[1], self.dims[1]),
        }
    }

    fn top_height(&self) -> f64 {
        self.size().2
    }

    fn footprint(&self) -> RotatedBox2D {
        let (w, h, _) = self.size();
        RotatedBox2D::new(self.pose[0], self.pose[1], w, h, self.pose[2])
    }

    fn local(&self, x: f64, y: f64) -> Vector2<f64> {
        self.footprint().to_local(Point2::new(x, y))
    }

    fn world(&self, lx: f64, ly: f64) -> (f64, f64) {
        let (s, c) = self.pose[2].to_radians().sin_cos();
        (
            self.pose[0] + c * lx - s * ly,
            self.pose[1] + s * lx + c * ly,
        )
    }

    /// Solid objects block the table; ridges are part of it.
    fn is_solid(&self) -> bool {
        self.shape != ShapeKind::TowelRidge
    }

    fn covers_xy(&self, x: f64, y: f64) -> bool {
        match self.shape {
            ShapeKind::Cylinder => {
                let d = Vector2::new(x - self.pose[0], y - self.pose[1]).norm();
                d <= self.dims[0] * (1.0 + 1e-12)
            }
            _ => self.footprint().contains(Point2::new(x, y)),
        }
    }

    fn ridge_height(&self, x: f64, y: f64) -> Option<f64> {
        let l = self.local(x, y);
        let (len, r) = (self.dims[0], self.dims[1]);
        (l.x.abs() <= 0.5 * len && l.y.abs() < r).then(|| (r * r - l.y * l.y).sqrt())
    }
}

/// Table region to sample, in meters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Workspace {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub seed: u64,
    #[serde(default)]
    pub camera: Camera,
    pub objects: Vec<ObjectSpec>,
    /// Points per square meter.
    pub point_density: f64,
    #[serde(default)]
    pub noise_sigma: f64,
    /// Defaults to the camera's table-level view.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workspace: Option<Workspace>,
    /// When set, a raw prediction grid with this stride is synthesized from
    /// the ground-truth detections.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw_grid_stride: Option<f64>,
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidSpec(m));
        let cam = &self.camera;
        if !(cam.fx > 0.0
            && cam.fy > 0.0
            && cam.mount_height > 0.0
            && cam.width > 0
            && cam.height > 0)
        {
            return bad("camera intrinsics and mount height must be positive".into());
        }
        if (cam.fx - cam.fy).abs() > 1e-9 * cam.fx {
            return bad("camera must have square pixels (fx == fy)".into());
        }
        if !(self.point_density > 0.0 && self.point_density.is_finite()) {
            return bad(format!(
                "point density must be positive, got {}",
                self.point_density
            ));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return bad(format!(
                "noise sigma must be non-negative, got {}",
                self.noise_sigma
            ));
        }
        if let Some(ws) = &self.workspace {
            if !(ws.x_min < ws.x_max && ws.y_min < ws.y_max) {
                return bad("workspace bounds are empty".into());
            }
        }
        if let Some(s) = self.raw_grid_stride {
            if !(s.is_finite() && s > 0.0) {
                return bad(format!("raw grid stride must be positive, got {s}"));
            }
        }
        for (i, o) in self.objects.iter().enumerate() {
            let expected = match o.shape {
                ShapeKind::Cuboid => 3,
                _ => 2,
            };
            if o.dims.len() != expected || o.dims.iter().any(|d| !(*d > 0.0 && d.is_finite())) {
                return bad(format!(
                    "object {i}: needs {expected} positive dims, got {:?}",
                    o.dims
                ));
            }
            if !(0.0..=1.0).contains(&o.score) {
                return bad(format!("object {i}: score {} outside [0, 1]", o.score));
            }
            if o.top_height() >= cam.mount_height {
                return bad(format!("object {i} reaches the camera"));
            }
        }
        for i in 0..self.objects.len() {
            for j in (i + 1)..self.objects.len() {
                let a = self.objects[i].footprint().corners();
                let b = self.objects[j].footprint().corners();
                if intersection_area(&a, &b) > 1e-12 {
                    return bad(format!("objects {i} and {j} have overlapping footprints"));
                }
            }
        }
        Ok(())
    }
}

/// Generated scene with ground truth.
#[derive(Clone, Debug, PartialEq)]
pub struct Scene {
    pub camera: Camera,
    pub cloud: PointCloud,
    /// Green-Blue-Depth rendering of the cloud.
    pub gbd: RgbImage,
    /// Detections of the objects marked `detected`, in object order.
    pub truth_dets: Vec<Detection>,
    /// `truth_dets[k]` describes `objects[truth_det_objects[k]]`.
    pub truth_det_objects: Vec<usize>,
    /// One box per object, in object order.
    pub truth_boxes3d: Vec<OrientedBox3D>,
    /// Object each point was sampled from; `None` for the table.
    pub point_owner: Vec<Option<usize>>,
    pub raw_grid: Option<(RawPredictionGrid, Vec<Anchor>)>,
}

/// Sorted unique class names of detected objects; a detection's class id is
/// its position in this list.
pub fn class_names(spec: &SceneSpec) -> Vec<String> {
    let mut names: Vec<String> = spec
        .objects
        .iter()
        .filter(|o| o.detected)
        .map(|o| o.class_name.clone())
        .collect();
    names.sort();
    names.dedup();
    names
}

fn linspace(lo: f64, hi: f64, spacing: f64) -> Vec<f64> {
    let n = ((hi - lo) / spacing).ceil().max(1.0) as usize;
    (0..=n)
        .map(|i| lo + (hi - lo) * i as f64 / n as f64)
        .collect()
}

/// Image-space region covered by an object's top face.
fn top_covers_pixel(o: &ObjectSpec, cam: &Camera, px: &Point2<f64>) -> bool {
    match o.shape {
        ShapeKind::Cuboid => truth_box2d(o, cam).contains(*px),
        ShapeKind::Cylinder => {
            let c = cam.project(&Point3::new(o.pose[0], o.pose[1], o.dims[1]));
            let r = o.dims[0] * cam.fx / (cam.mount_height - o.dims[1]);
            (px - c).norm() <= r * (1.0 + 1e-12)
        }
        ShapeKind::TowelRidge => false,
    }
}

/// The object's top face as seen in the image.
fn truth_box2d(o: &ObjectSpec, cam: &Camera) -> RotatedBox2D {
    let (w, h, top) = o.size();
    let c = cam.project(&Point3::new(o.pose[0], o.pose[1], top));
    let scale = cam.fx / (cam.mount_height - top);
    RotatedBox2D::new(c.x, c.y, w * scale, h * scale, o.pose[2])
}

fn truth_box3d(o: &ObjectSpec, noise_sigma: f64) -> OrientedBox3D {
    let (w, h, top) = o.size();
    // Room for top-surface noise above the nominal height.
    let z_hi = top + 3.0 * noise_sigma;
    OrientedBox3D::new(
        Point3::new(o.pose[0], o.pose[1], 0.5 * z_hi),
        w,
        h,
        z_hi,
        o.pose[2],
    )
}

fn class_color(o: Option<&ObjectSpec>) -> Rgb<u8> {
    match o.map(|o| o.shape) {
        None => Rgb([235, 235, 230]),
        Some(ShapeKind::TowelRidge) => Rgb([240, 240, 240]),
        Some(ShapeKind::Cuboid) => Rgb([200, 60, 40]),
        Some(ShapeKind::Cylinder) => Rgb([40, 90, 200]),
    }
}

/// Builds the scene described by `spec`. Pure in `spec`.
pub fn generate(spec: &SceneSpec) -> Result<Scene> {
    spec.validate()?;
    let cam = spec.camera;
    let spacing = 1.0 / spec.point_density.sqrt();
    let objects = &spec.objects;

    let mut raw: Vec<(Point3<f64>, Option<usize>)> = Vec::new();
    for (i, o) in objects.iter().enumerate() {
        let (w, h, top) = o.size();
        match o.shape {
            ShapeKind::Cuboid => {
                for lx in linspace(-0.5 * w, 0.5 * w, spacing) {
                    for ly in linspace(-0.5 * h, 0.5 * h, spacing) {
                        let (x, y) = o.world(lx, ly);
                        raw.push((Point3::new(x, y, top), Some(i)));
                    }
                }
            }
            ShapeKind::Cylinder => {
                let r = o.dims[0];
                for lx in linspace(-r, r, spacing) {
                    for ly in linspace(-r, r, spacing) {
                        let on_axis = (lx == 0.0 || ly == 0.0) && (lx.abs() == r || ly.abs() == r);
                        if lx * lx + ly * ly <= r * r || on_axis {
                            let (x, y) = o.world(lx, ly);
                            raw.push((Point3::new(x, y, top), Some(i)));
                        }
                    }
                }
            }
            ShapeKind::TowelRidge => {}
        }
    }

    let (x_min, x_max, y_min, y_max) = match spec.workspace {
        Some(ws) => (ws.x_min, ws.x_max, ws.y_min, ws.y_max),
        None => cam.table_view(),
    };
    let solids: Vec<&ObjectSpec> = objects.iter().filter(|o| o.is_solid()).collect();
    for x in linspace(x_min, x_max, spacing) {
        for y in linspace(y_min, y_max, spacing) {
            if solids.iter().any(|o| o.covers_xy(x, y)) {
                continue;
            }
            let mut z = 0.0_f64;
            let mut owner = None;
            for (i, o) in objects.iter().enumerate() {
                if o.shape == ShapeKind::TowelRidge {
                    if let Some(rz) = o.ridge_height(x, y) {
                        if rz > z {
                            z = rz;
                            owner = Some(i);
                        }
                    }
                }
            }
            raw.push((Point3::new(x, y, z), owner));
        }
    }

    let mut points = Vec::with_capacity(raw.len());
    let mut pixels = Vec::with_capacity(raw.len());
    let mut owners = Vec::with_capacity(raw.len());
    for (p, owner) in raw {
        let px = cam.project(&p);
        if !cam.in_image(&px) {
            continue;
        }
        let hidden = objects.iter().enumerate().any(|(j, o)| {
            Some(j) != owner
                && o.is_solid()
                && o.top_height() > p.z + 1e-9
                && top_covers_pixel(o, &cam, &px)
        });
        if hidden {
            continue;
        }
        points.push(p);
        pixels.push(px);
        owners.push(owner);
    }

    if spec.noise_sigma > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let normal = Normal::new(0.0, spec.noise_sigma).expect("sigma validated");
        for p in &mut points {
            p.z += normal.sample(&mut rng);
        }
    }

    let names = class_names(spec);
    let mut truth_dets = Vec::new();
    let mut truth_det_objects = Vec::new();
    for (i, o) in objects.iter().enumerate().filter(|(_, o)| o.detected) {
        let id = names
            .binary_search(&o.class_name)
            .expect("name collected above");
        truth_dets.push(Detection::new(
            id,
            o.class_name.clone(),
            o.score,
            truth_box2d(o, &cam),
        ));
        truth_det_objects.push(i);
    }
    let truth_boxes3d = objects
        .iter()
        .map(|o| truth_box3d(o, spec.noise_sigma))
        .collect();

    let gbd = render_gbd(&cam, objects, &points, &pixels, &owners)?;
    let raw_grid = match spec.raw_grid_stride {
        Some(stride) => {
            let anchors = anchors_for(&truth_dets);
            let grid =
                synthesize_grid(&truth_dets, &anchors, &names, stride, cam.width, cam.height)?;
            Some((grid, anchors))
        }
        None => None,
    };
    let cloud = PointCloud::organized(points, pixels)?;
    Ok(Scene {
        camera: cam,
        cloud,
        gbd,
        truth_dets,
        truth_det_objects,
        truth_boxes3d,
        point_owner: owners,
        raw_grid,
    })
}

fn render_gbd(
    cam: &Camera,
    objects: &[ObjectSpec],
    points: &[Point3<f64>],
    pixels: &[Point2<f64>],
    owners: &[Option<usize>],
) -> Result<RgbImage> {
    let mut rgb = RgbImage::from_pixel(cam.width, cam.height, class_color(None));
    let mut depth = DepthImage::new(cam.width, cam.height);
    for ((p, px), owner) in points.iter().zip(pixels).zip(owners) {
        let (u, v) = (px.x.floor() as u32, px.y.floor() as u32);
        let d = (cam.mount_height - p.z) as f32;
        let cur = depth.get_pixel(u, v)[0];
        if cur == 0.0 || d < cur {
            depth.put_pixel(u, v, image::Luma([d]));
            rgb.put_pixel(u, v, class_color(owner.map(|i| &objects[i])));
        }
    }
    let tallest = objects.iter().map(|o| o.top_height()).fold(0.0, f64::max);
    make_gbd(
        &rgb,
        &depth,
        cam.mount_height - tallest - 0.05,
        cam.mount_height,
    )
}

/// One anchor per fixed angle, sized to the mean truth box.
fn anchors_for(dets: &[Detection]) -> Vec<Anchor> {
    let (w, h) = if dets.is_empty() {
        (32.0, 32.0)
    } else {
        let n = dets.len() as f64;
        (
            dets.iter().map(|d| d.bbox.w()).sum::<f64>() / n,
            dets.iter().map(|d| d.bbox.h()).sum::<f64>() / n,
        )
    };
    ANCHOR_ANGLES
        .iter()
        .map(|&t| Anchor::new(w, h, t))
        .collect()
}

fn logit(p: f64) -> f64 {
    let p = p.clamp(1e-12, 1.0 - 1e-12);
    (p / (1.0 - p)).ln()
}

/// Encodes detections into a raw head grid that decodes back to them, up
/// to the anchor angle quantization.
///
/// Each detection goes to the cell holding its center and the anchor with
/// the nearest angle; objectness and class logits are set so the decoded
/// score equals the detection score.
pub fn synthesize_grid(
    dets: &[Detection],
    anchors: &[Anchor],
    class_names: &[String],
    stride: f64,
    image_w: u32,
    image_h: u32,
) -> Result<RawPredictionGrid> {
    if class_names.is_empty() && !dets.is_empty() {
        return Err(Error::InvalidArgument(
            "need at least one class name".into(),
        ));
    }
    let grid_w = (image_w as f64 / stride).ceil() as usize;
    let grid_h = (image_h as f64 / stride).ceil() as usize;
    let mut grid =
        RawPredictionGrid::empty(grid_w, grid_h, anchors.len(), class_names.to_vec(), stride);
    for d in dets {
        let gx = ((d.bbox.cx() / stride).floor() as usize).min(grid_w.saturating_sub(1));
        let gy = ((d.bbox.cy() / stride).floor() as usize).min(grid_h.saturating_sub(1));
        let a = (0..anchors.len())
            .max_by(|&i, &j| {
                angle_factor(anchors[i].theta, d.bbox.theta())
                    .total_cmp(&angle_factor(anchors[j].theta, d.bbox.theta()))
                    .then(j.cmp(&i))
            })
            .ok_or_else(|| Error::InvalidArgument("anchor list is empty".into()))?;
        let fx = d.bbox.cx() / stride - gx as f64;
        let fy = d.bbox.cy() / stride - gy as f64;
        let slot = grid.slot_mut(gx, gy, a);
        slot[0] = logit(fx);
        slot[1] = logit(fy);
        slot[2] = (d.bbox.w() / anchors[a].w).ln();
        slot[3] = (d.bbox.h() / anchors[a].h).ln();
        slot[4] = logit(d.score.sqrt());
        for c in slot[5..].iter_mut() {
            *c = -20.0;
        }
        slot[5 + d.class_id] = logit(d.score.sqrt());
    }
    Ok(grid)
}

/// Monte-Carlo estimate with its standard error.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct McEstimate {
    pub value: f64,
    pub std_err: f64,
}

/// Monte-Carlo ArIoU: uniform samples over the joint bounding rectangle,
/// IoU estimated as the fraction of union samples that fall in both boxes.
pub fn oracle_ariou_mc(
    a: &RotatedBox2D,
    b: &RotatedBox2D,
    samples: usize,
    seed: u64,
) -> McEstimate {
    let corners: Vec<Point2<f64>> = a
        .corners()
        .vertices()
        .iter()
        .chain(b.corners().vertices())
        .copied()
        .collect();
    let (x0, x1) = corners
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
            (lo.min(p.x), hi.max(p.x))
        });
    let (y0, y1) = corners
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
            (lo.min(p.y), hi.max(p.y))
        });
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut both, mut either) = (0usize, 0usize);
    for _ in 0..samples {
        let p = Point2::new(rng.random_range(x0..=x1), rng.random_range(y0..=y1));
        let (ia, ib) = (a.contains(p), b.contains(p));
        if ia || ib {
            either += 1;
            if ia && ib {
                both += 1;
            }
        }
    }
    if either == 0 {
        return McEstimate {
            value: 0.0,
            std_err: 0.0,
        };
    }
    let p = both as f64 / either as f64;
    let k = angle_factor(a.theta(), b.theta());
    McEstimate {
        value: p * k,
        std_err: k * (p * (1.0 - p) / either as f64).sqrt(),
    }
}

/// Per-box point counts by a plain loop over every point.
pub fn oracle_collision(cloud: &PointCloud, boxes: &[OrientedBox3D]) -> Vec<usize> {
    boxes
        .iter()
        .map(|b| {
            let mut n = 0;
            for p in cloud.points() {
                if contains3d(b, p) {
                    n += 1;
                }
            }
            n
        })
        .collect()
}

/// Ready-made scene specs used by the tests, the CLI fixtures and the docs.
pub mod fixtures {
    use super::*;

    const DENSE: f64 = 1.0e6;

    fn base(seed: u64, objects: Vec<ObjectSpec>) -> SceneSpec {
        SceneSpec {
            seed,
            camera: Camera::default(),
            objects,
            point_density: DENSE,
            noise_sigma: 0.0,
            workspace: Some(Workspace {
                x_min: -0.18,
                x_max: 0.18,
                y_min: -0.135,
                y_max: 0.135,
            }),
            raw_grid_stride: None,
        }
    }

    /// A towel wrinkle, a covered shape and a rigid object on the towel.
    pub fn covered_objects() -> SceneSpec {
        let mut s = base(
            101,
            vec![
                ObjectSpec::ridge(-0.1, 0.0, 90.0, 0.12, 0.02),
                ObjectSpec::cuboid(0.05, 0.07, 15.0, 0.06, 0.08, 0.03, "rectangle", 0.92),
                ObjectSpec::cuboid(0.06, -0.07, 100.0, 0.03, 0.12, 0.03, "toothpaste", 0.85),
            ],
        );
        s.noise_sigma = 0.0005;
        s
    }

    /// Two parallel boxes 5 mm apart; the better-scored one is lower and its
    /// narrow-side fingers land on its taller neighbor.
    pub fn second_candidate() -> SceneSpec {
        let yaw: f64 = 20.0;
        let (s, c) = yaw.to_radians().sin_cos();
        let off = 0.04 + 0.005;
        base(
            102,
            vec![
                ObjectSpec::cuboid(0.0, 0.0, yaw, 0.04, 0.10, 0.04, "box", 0.9),
                ObjectSpec::cuboid(off * c, off * s, yaw, 0.04, 0.10, 0.06, "box", 0.8),
            ],
        )
    }

    /// One box between two taller undetected walls along its long sides;
    /// its short ends are clear.
    pub fn regrasp() -> SceneSpec {
        base(
            103,
            vec![
                ObjectSpec::cuboid(0.0, 0.0, 0.0, 0.04, 0.06, 0.04, "box", 0.9),
                ObjectSpec::cuboid(-0.035, 0.0, 0.0, 0.02, 0.06, 0.07, "wall", 1.0).undetected(),
                ObjectSpec::cuboid(0.035, 0.0, 0.0, 0.02, 0.06, 0.07, "wall", 1.0).undetected(),
            ],
        )
    }

    /// Two boxes, each walled in: the first is too long to regrasp across,
    /// the second has walls on all four sides.
    pub fn fully_hemmed() -> SceneSpec {
        let objects = vec![
            ObjectSpec::cuboid(-0.06, 0.0, 0.0, 0.04, 0.10, 0.04, "box", 0.9),
            ObjectSpec::cuboid(-0.095, 0.0, 0.0, 0.02, 0.10, 0.07, "wall", 1.0).undetected(),
            ObjectSpec::cuboid(-0.025, 0.0, 0.0, 0.02, 0.10, 0.07, "wall", 1.0).undetected(),
            ObjectSpec::cuboid(0.07, 0.0, 0.0, 0.04, 0.06, 0.04, "box", 0.7),
            ObjectSpec::cuboid(0.035, 0.0, 0.0, 0.02, 0.06, 0.07, "wall", 1.0).undetected(),
            ObjectSpec::cuboid(0.105, 0.0, 0.0, 0.02, 0.06, 0.07, "wall", 1.0).undetected(),
            ObjectSpec::cuboid(0.07, 0.045, 0.0, 0.04, 0.02, 0.07, "wall", 1.0).undetected(),
            ObjectSpec::cuboid(0.07, -0.045, 0.0, 0.04, 0.02, 0.07, "wall", 1.0).undetected(),
        ];
        base(104, objects)
    }

    /// Bare towel with one wrinkle and nothing detected.
    pub fn towel_only() -> SceneSpec {
        let mut s = base(105, vec![ObjectSpec::ridge(0.02, -0.01, 35.0, 0.14, 0.018)]);
        s.noise_sigma = 0.0005;
        s
    }

    /// Empty table.
    pub fn empty_table() -> SceneSpec {
        base(106, Vec::new())
    }

    /// Random non-overlapping clutter of `n` objects plus one wrinkle.
    pub fn random_clutter(seed: u64, n: usize, point_density: f64) -> SceneSpec {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut s = base(seed, Vec::new());
        s.point_density = point_density;
        s.noise_sigma = 0.0005;
        s.workspace = None;
        let classes = ["box", "coke", "toothpaste", "rectangle", "cylinder"];
        let mut tries = 0;
        while s.objects.len() < n && tries < 10_000 {
            tries += 1;
            let x = rng.random_range(-0.15..0.15);
            let y = rng.random_range(-0.11..0.11);
            let yaw = rng.random_range(0.0..180.0);
            let class = classes[rng.random_range(0..classes.len())];
            let score = (rng.random_range(0.5..1.0) * 1e4_f64).round() / 1e4;
            let candidate = if class == "cylinder" || class == "coke" {
                ObjectSpec::cylinder(
                    x,
                    y,
                    rng.random_range(0.02..0.035),
                    rng.random_range(0.03..0.08),
                    class,
                    score,
                )
            } else {
                ObjectSpec::cuboid(
                    x,
                    y,
                    yaw,
                    rng.random_range(0.025..0.05),
                    rng.random_range(0.06..0.12),
                    rng.random_range(0.02..0.07),
                    class,
                    score,
                )
            };
            s.objects.push(candidate);
            if s.validate().is_err() {
                s.objects.pop();
            }
        }
        let ridge = ObjectSpec::ridge(
            rng.random_range(-0.12..0.12),
            rng.random_range(-0.08..0.08),
            rng.random_range(0.0..180.0),
            0.1,
            0.015,
        );
        s.objects.push(ridge);
        if s.validate().is_err() {
            s.objects.pop();
        }
        s
    }
}
