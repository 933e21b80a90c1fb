//! Grasp planning for scenes mixing rigid objects and towels.
//!
//! [`plan_scene`] picks one of three modes:
//!
//! * covered-shape detections present: towel mode on the feasible region
//!   (cloud minus covered-shape boxes and expanded rigid boxes);
//! * rigid detections present: [`plan_rigid`], which walks the fallback
//!   chain (three positions per object, then the 90 degree regrasp, then a
//!   push);
//! * otherwise: towel mode on the whole cloud.
//!
//! Collision checks are only run for rigid grasps.

use std::collections::{BTreeMap, VecDeque};

use nalgebra::{Matrix3, Point3, Vector2, Vector3};

use crate::cloud::{count_in, crop, lift_box, pca, subtract, PointCloud, PrincipalFrame};
use crate::detect::{rank_order, Detection};
use crate::error::{Error, Result};
use crate::rotgeom::{normalize_angle, OrientedBox3D};

/// Finger-volume point count at or below which a pose is collision free.
pub const DEFAULT_COLLISION_THRESHOLD: usize = 60;
/// Opening for towel grasps, in meters.
pub const TOWEL_OPENING: f64 = 0.030;
/// Rigid opening as a multiple of the object's narrow extent.
pub const RIGID_OPENING_FACTOR: f64 = 1.5;
/// Regrasp opening as a multiple of the object's long extent.
pub const REGRASP_OPENING_FACTOR: f64 = 1.2;
/// Offset of the outer grasp candidates, as a fraction of the long extent.
pub const CANDIDATE_SPACING: f64 = 0.3;
/// Push stroke as a fraction of the long extent.
pub const PUSH_STROKE_FACTOR: f64 = 0.5;
/// Planar growth applied to rigid boxes before excluding them from towel grasps.
pub const RIGID_EXCLUSION_FACTOR: f64 = 1.5;

const MIN_HORIZONTAL: f64 = 1e-6;

/// Parallel-jaw gripper dimensions, in meters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GripperModel {
    pub max_opening: f64,
    /// Thickness along the closing direction.
    pub finger_width: f64,
    /// Length along the approach axis.
    pub finger_length: f64,
    /// Size tangential to the closing direction.
    pub finger_depth: f64,
    pub collision_threshold: usize,
}

impl Default for GripperModel {
    fn default() -> Self {
        Self {
            max_opening: 0.100,
            finger_width: 0.010,
            finger_length: 0.040,
            finger_depth: 0.020,
            collision_threshold: DEFAULT_COLLISION_THRESHOLD,
        }
    }
}

impl GripperModel {
    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("max_opening", self.max_opening),
            ("finger_width", self.finger_width),
            ("finger_length", self.finger_length),
            ("finger_depth", self.finger_depth),
        ];
        for (name, v) in dims {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!(
                    "gripper {name} must be positive, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// Top-down parallel-jaw grasp.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GraspPose {
    pub position: Point3<f64>,
    /// Unit direction the jaws close along, in the table plane.
    pub closing_dir: Vector2<f64>,
    pub approach: Vector3<f64>,
    pub opening: f64,
    /// Index of the grasped detection; `None` for towel grasps.
    pub target_id: Option<usize>,
}

impl GraspPose {
    pub fn new(
        position: Point3<f64>,
        closing_dir: Vector2<f64>,
        opening: f64,
        target_id: Option<usize>,
    ) -> Result<Self> {
        let n = closing_dir.norm();
        if !n.is_finite() || n <= MIN_HORIZONTAL {
            return Err(Error::DegenerateDirection(format!(
                "closing direction {closing_dir:?} has no usable length"
            )));
        }
        Ok(Self {
            position,
            closing_dir: closing_dir / n,
            approach: -Vector3::z(),
            opening,
            target_id,
        })
    }

    /// Closing direction angle in degrees, in `[0, 180)`.
    pub fn yaw(&self) -> f64 {
        normalize_angle(self.closing_dir.y.atan2(self.closing_dir.x).to_degrees())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PushPlan {
    pub start: Point3<f64>,
    pub end: Point3<f64>,
    pub direction: Vector2<f64>,
    pub target_id: Option<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Outcome {
    Grasp(GraspPose),
    Push(PushPlan),
    NoAction(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PlanMode {
    Towel,
    Rigid,
}

impl PlanMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            PlanMode::Towel => "towel",
            PlanMode::Rigid => "rigid",
        }
    }
}

/// Planner output with an ordered log of every candidate tried.
#[derive(Clone, Debug, PartialEq)]
pub struct PlanResult {
    pub mode: PlanMode,
    pub outcome: Outcome,
    pub trace: Vec<String>,
}

/// Left and right finger boxes for a pose.
///
/// Fingers sit at `position -/+ closing_dir * (opening + finger_width) / 2`
/// and extend upward from the grasp height by `finger_length`.
pub fn finger_volumes(
    g: &GraspPose,
    grip: &GripperModel,
) -> Result<(OrientedBox3D, OrientedBox3D)> {
    if g.opening > grip.max_opening {
        return Err(Error::OpeningLimit {
            opening: g.opening,
            limit: grip.max_opening,
        });
    }
    let offset = g.closing_dir * (0.5 * g.opening + 0.5 * grip.finger_width);
    let z = g.position.z + 0.5 * grip.finger_length;
    let make = |sign: f64| {
        OrientedBox3D::new(
            Point3::new(
                g.position.x + sign * offset.x,
                g.position.y + sign * offset.y,
                z,
            ),
            grip.finger_width,
            grip.finger_depth,
            grip.finger_length,
            g.yaw(),
        )
    };
    Ok((make(-1.0), make(1.0)))
}

/// Scene points inside the left and right finger boxes.
pub fn finger_counts(
    g: &GraspPose,
    grip: &GripperModel,
    scene: &PointCloud,
) -> Result<(usize, usize)> {
    let (l, r) = finger_volumes(g, grip)?;
    Ok((count_in(scene, &l), count_in(scene, &r)))
}

pub fn collision_free(g: &GraspPose, grip: &GripperModel, scene: &PointCloud) -> Result<bool> {
    let (l, r) = finger_counts(g, grip, scene)?;
    Ok(l <= grip.collision_threshold && r <= grip.collision_threshold)
}

/// Centroid plus two positions `0.3 * h_r` either side of it along the
/// unit primary axis.
pub fn rigid_candidates(frame: &PrincipalFrame, h_r: f64) -> [Point3<f64>; 3] {
    let step = frame.primary() * (CANDIDATE_SPACING * h_r);
    [frame.centroid, frame.centroid - step, frame.centroid + step]
}

fn horizontal(v: &Vector3<f64>) -> Option<Vector2<f64>> {
    let h = Vector2::new(v.x, v.y);
    let n = h.norm();
    (n >= MIN_HORIZONTAL).then(|| h / n)
}

/// Push from half a long extent out along the primary direction back to the
/// centroid.
pub fn plan_push(frame: &PrincipalFrame, h_r: f64) -> Result<PushPlan> {
    if !(h_r.is_finite() && h_r > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "h_r must be positive, got {h_r}"
        )));
    }
    let dir = horizontal(&frame.primary()).ok_or_else(|| {
        Error::DegenerateDirection("primary axis is vertical; no push direction".into())
    })?;
    let c = frame.centroid;
    let start = Point3::new(
        c.x + dir.x * PUSH_STROKE_FACTOR * h_r,
        c.y + dir.y * PUSH_STROKE_FACTOR * h_r,
        c.z,
    );
    Ok(PushPlan {
        start,
        end: c,
        direction: dir,
        target_id: None,
    })
}

/// Everything the rigid planner derives for one detection.
#[derive(Clone, Debug)]
pub struct RigidTarget {
    pub index: usize,
    pub lifted: OrientedBox3D,
    pub frame: PrincipalFrame,
    /// Narrow planar extent of the lifted box.
    pub w_r: f64,
    /// Long planar extent of the lifted box.
    pub h_r: f64,
    /// Horizontal unit primary direction.
    pub primary: Vector2<f64>,
}

impl RigidTarget {
    pub fn analyze(index: usize, det: &Detection, cloud: &PointCloud) -> Result<Self> {
        let lifted = lift_box(cloud, &det.bbox)?;
        let object = crop(cloud, &lifted);
        let frame = pca(&object)?;
        let primary = horizontal(&frame.primary())
            .ok_or_else(|| Error::DegenerateDirection("primary axis is vertical".into()))?;
        let (a, b) = (lifted.extent_x(), lifted.extent_y());
        Ok(Self {
            index,
            lifted,
            frame,
            w_r: a.min(b),
            h_r: a.max(b),
            primary,
        })
    }

    /// Closing direction across the narrow side.
    pub fn narrow_closing(&self) -> Vector2<f64> {
        Vector2::new(-self.primary.y, self.primary.x)
    }
}

fn describe(index: usize, det: &Detection) -> String {
    format!(
        "target {index} ({}, score {:.4})",
        det.class_name, det.score
    )
}

/// Rigid-object planning with the full fallback chain.
///
/// `target_id` in the result indexes `dets`.
pub fn plan_rigid(
    dets: &[Detection],
    cloud: &PointCloud,
    grip: &GripperModel,
) -> Result<PlanResult> {
    let ids: Vec<usize> = (0..dets.len()).collect();
    plan_rigid_with_ids(dets, &ids, cloud, grip)
}

/// [`plan_rigid`] reporting `ids[k]` for `dets[k]` in the result and trace.
pub fn plan_rigid_with_ids(
    dets: &[Detection],
    ids: &[usize],
    cloud: &PointCloud,
    grip: &GripperModel,
) -> Result<PlanResult> {
    if dets.is_empty() {
        return Err(Error::Precondition(
            "plan_rigid needs at least one rigid detection".into(),
        ));
    }
    if ids.len() != dets.len() {
        return Err(Error::InvalidArgument(format!(
            "{} ids for {} detections",
            ids.len(),
            dets.len()
        )));
    }
    grip.validate()?;
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| rank_order(&dets[a], &dets[b]));

    let mut trace = Vec::new();
    let mut targets = Vec::new();
    let done = |outcome: Outcome, trace: Vec<String>| PlanResult {
        mode: PlanMode::Rigid,
        outcome,
        trace,
    };

    for &i in &order {
        let name = describe(ids[i], &dets[i]);
        let target = match RigidTarget::analyze(i, &dets[i], cloud) {
            Ok(t) => t,
            Err(e) => {
                trace.push(format!("{name}: skipped, {e}"));
                continue;
            }
        };
        let opening = RIGID_OPENING_FACTOR * target.w_r;
        trace.push(format!(
            "{name}: w_r {:.4} m, h_r {:.4} m, opening {opening:.4} m",
            target.w_r, target.h_r
        ));
        if opening > grip.max_opening {
            trace.push(format!(
                "{name}: rejected, opening {opening:.4} m exceeds limit {:.4} m",
                grip.max_opening
            ));
            targets.push(target);
            continue;
        }
        let closing = target.narrow_closing();
        for (k, p) in rigid_candidates(&target.frame, target.h_r)
            .iter()
            .enumerate()
        {
            let pose = GraspPose::new(*p, closing, opening, Some(ids[i]))?;
            let (l, r) = finger_counts(&pose, grip, cloud)?;
            if l <= grip.collision_threshold && r <= grip.collision_threshold {
                trace.push(format!(
                    "{name} P{}: collision free (left {l}, right {r}), grasp selected",
                    k + 1
                ));
                return Ok(done(Outcome::Grasp(pose), trace));
            }
            trace.push(format!(
                "{name} P{}: rejected, collision (left {l}, right {r}, threshold {})",
                k + 1,
                grip.collision_threshold
            ));
        }
        targets.push(target);
    }

    // Solution 1: close across the long side instead.
    for target in &targets {
        let name = describe(ids[target.index], &dets[target.index]);
        let opening = REGRASP_OPENING_FACTOR * target.h_r;
        if opening > grip.max_opening {
            trace.push(format!(
                "solution 1 {name}: rejected, opening {opening:.4} m exceeds limit {:.4} m",
                grip.max_opening
            ));
            continue;
        }
        let pose = GraspPose::new(
            target.frame.centroid,
            target.primary,
            opening,
            Some(ids[target.index]),
        )?;
        let (l, r) = finger_counts(&pose, grip, cloud)?;
        if l <= grip.collision_threshold && r <= grip.collision_threshold {
            trace.push(format!(
                "solution 1 {name}: collision free (left {l}, right {r}), grasp selected"
            ));
            return Ok(done(Outcome::Grasp(pose), trace));
        }
        trace.push(format!(
            "solution 1 {name}: rejected, collision (left {l}, right {r}, threshold {})",
            grip.collision_threshold
        ));
    }

    // Solution 2: push the best-ranked object we could analyze.
    for target in &targets {
        let name = describe(ids[target.index], &dets[target.index]);
        match plan_push(&target.frame, target.h_r) {
            Ok(mut push) => {
                push.target_id = Some(ids[target.index]);
                trace.push(format!("solution 2 {name}: push planned"));
                trace.push("push emitted without a workspace bounds check".into());
                return Ok(done(Outcome::Push(push), trace));
            }
            Err(e) => trace.push(format!("solution 2 {name}: skipped, {e}")),
        }
    }

    let reason = "no rigid target could be grasped or pushed".to_string();
    trace.push(reason.clone());
    Ok(done(Outcome::NoAction(reason), trace))
}

/// Role a detection class plays in planning.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum ClassRole {
    /// Regular shape seen on a towel; implies a rigid object underneath.
    CoveredShape,
    Rigid,
    Towel,
}

impl ClassRole {
    pub fn as_str(&self) -> &'static str {
        match self {
            ClassRole::CoveredShape => "covered",
            ClassRole::Rigid => "rigid",
            ClassRole::Towel => "towel",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "covered" | "covered_shape" | "covered-shape" => Some(ClassRole::CoveredShape),
            "rigid" => Some(ClassRole::Rigid),
            "towel" => Some(ClassRole::Towel),
            _ => None,
        }
    }
}

/// Class name to role table.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassMap {
    roles: BTreeMap<String, ClassRole>,
}

impl Default for ClassMap {
    fn default() -> Self {
        let mut roles = BTreeMap::new();
        for c in ["rectangle", "cylinder"] {
            roles.insert(c.to_string(), ClassRole::CoveredShape);
        }
        for c in [
            "toothpaste",
            "coke",
            "bottle",
            "box",
            "can",
            "cup",
            "cuboid",
        ] {
            roles.insert(c.to_string(), ClassRole::Rigid);
        }
        roles.insert("towel".to_string(), ClassRole::Towel);
        Self { roles }
    }
}

impl ClassMap {
    pub fn empty() -> Self {
        Self {
            roles: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, class: impl Into<String>, role: ClassRole) {
        self.roles.insert(class.into(), role);
    }

    pub fn role(&self, class: &str) -> Option<ClassRole> {
        self.roles.get(class).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, ClassRole)> {
        self.roles.iter().map(|(k, v)| (k.as_str(), *v))
    }

    fn require(&self, det: &Detection) -> Result<ClassRole> {
        self.role(&det.class_name).ok_or_else(|| {
            Error::Config(format!(
                "class {:?} has no role in the class map",
                det.class_name
            ))
        })
    }
}

/// Which detection an exclusion box came from.
#[derive(Clone, Debug, PartialEq)]
pub struct Exclusion {
    pub detection: usize,
    pub role: ClassRole,
    /// Box as lifted from the detection.
    pub lifted: OrientedBox3D,
    /// Box actually removed (expanded for rigid objects).
    pub region: OrientedBox3D,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FeasibleRegion {
    pub cloud: PointCloud,
    pub exclusions: Vec<Exclusion>,
    pub trace: Vec<String>,
}

impl FeasibleRegion {
    pub fn boxes(&self) -> Vec<OrientedBox3D> {
        self.exclusions.iter().map(|e| e.region).collect()
    }
}

/// Cloud minus covered-shape boxes and 1.5x-expanded rigid boxes.
pub fn towel_feasible(
    cloud: &PointCloud,
    dets: &[Detection],
    classes: &ClassMap,
) -> Result<FeasibleRegion> {
    let mut exclusions = Vec::new();
    let mut trace = Vec::new();
    for (i, det) in dets.iter().enumerate() {
        let role = classes.require(det)?;
        if role == ClassRole::Towel {
            continue;
        }
        let lifted = match lift_box(cloud, &det.bbox) {
            Ok(b) => b,
            Err(e) => {
                trace.push(format!("{}: exclusion skipped, {e}", describe(i, det)));
                continue;
            }
        };
        let region = match role {
            ClassRole::Rigid => lifted.expand(RIGID_EXCLUSION_FACTOR, RIGID_EXCLUSION_FACTOR)?,
            _ => lifted,
        };
        trace.push(format!(
            "{}: excluded {} region {:.4} x {:.4} m",
            describe(i, det),
            role.as_str(),
            region.extent_x(),
            region.extent_y()
        ));
        exclusions.push(Exclusion {
            detection: i,
            role,
            lifted,
            region,
        });
    }
    let boxes: Vec<OrientedBox3D> = exclusions.iter().map(|e| e.region).collect();
    let feasible = subtract(cloud, &boxes);
    trace.push(format!(
        "feasible region keeps {} of {} points",
        feasible.len(),
        cloud.len()
    ));
    Ok(FeasibleRegion {
        cloud: feasible,
        exclusions,
        trace,
    })
}

/// Stand-in wrinkle segmentation parameters (meters, points).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WrinkleParams {
    /// Fraction of lowest points used for the support-plane fit.
    pub plane_fraction: f64,
    pub ridge_height: f64,
    pub cell_size: f64,
    pub min_points: usize,
}

impl Default for WrinkleParams {
    fn default() -> Self {
        Self {
            plane_fraction: 0.6,
            ridge_height: 0.008,
            cell_size: 0.005,
            min_points: 50,
        }
    }
}

/// Least-squares plane `z = a x + b y + c` through the lowest points.
/// Returns `(a, b, c)`.
fn fit_support_plane(points: &[Point3<f64>], fraction: f64) -> (f64, f64, f64) {
    let mut idx: Vec<usize> = (0..points.len()).collect();
    idx.sort_by(|&i, &j| points[i].z.total_cmp(&points[j].z).then(i.cmp(&j)));
    let take = ((fraction * points.len() as f64).ceil() as usize).clamp(1, points.len());
    let low: Vec<&Point3<f64>> = idx[..take].iter().map(|&i| &points[i]).collect();
    let n = low.len() as f64;
    let (mx, my, mz) = low
        .iter()
        .fold((0.0, 0.0, 0.0), |a, p| (a.0 + p.x, a.1 + p.y, a.2 + p.z));
    let (mx, my, mz) = (mx / n, my / n, mz / n);
    let mut ata = Matrix3::zeros();
    let mut atb = Vector3::zeros();
    for p in &low {
        let row = Vector3::new(p.x - mx, p.y - my, 1.0);
        ata += row * row.transpose();
        atb += row * (p.z - mz);
    }
    match ata.lu().solve(&atb) {
        Some(s) if s.iter().all(|v| v.is_finite()) && take >= 3 => {
            let (a, b, c) = (s[0], s[1], s[2]);
            (a, b, mz + c - a * mx - b * my)
        }
        _ => (0.0, 0.0, mz),
    }
}

/// Simplified wrinkle segmentation.
///
/// Fits the support plane, keeps points at least `ridge_height` above it,
/// groups them by 8-connected occupancy cells and returns groups of at least
/// `min_points`, largest first.
pub fn extract_wrinkles(cloud: &PointCloud, params: &WrinkleParams) -> Vec<PointCloud> {
    let pts = cloud.points();
    if pts.len() < 3 {
        return Vec::new();
    }
    let (a, b, c) = fit_support_plane(pts, params.plane_fraction);
    let norm = (1.0 + a * a + b * b).sqrt();
    let mut cells: BTreeMap<(i64, i64), Vec<usize>> = BTreeMap::new();
    for (i, p) in pts.iter().enumerate() {
        let height = (p.z - (a * p.x + b * p.y + c)) / norm;
        if height >= params.ridge_height {
            let key = (
                (p.x / params.cell_size).floor() as i64,
                (p.y / params.cell_size).floor() as i64,
            );
            cells.entry(key).or_default().push(i);
        }
    }

    let mut seen: BTreeMap<(i64, i64), bool> = cells.keys().map(|k| (*k, false)).collect();
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for &start in cells.keys() {
        if seen[&start] {
            continue;
        }
        let mut members = Vec::new();
        let mut queue = VecDeque::from([start]);
        seen.insert(start, true);
        while let Some(cell) = queue.pop_front() {
            members.extend_from_slice(&cells[&cell]);
            for dx in -1..=1 {
                for dy in -1..=1 {
                    let nb = (cell.0 + dx, cell.1 + dy);
                    if let Some(flag) = seen.get_mut(&nb) {
                        if !*flag {
                            *flag = true;
                            queue.push_back(nb);
                        }
                    }
                }
            }
        }
        if members.len() >= params.min_points {
            members.sort_unstable();
            groups.push(members);
        }
    }
    // Stable: equal sizes keep cell order.
    groups.sort_by_key(|g| std::cmp::Reverse(g.len()));
    groups.iter().map(|g| cloud.select(g)).collect()
}

/// Grasp at the wrinkle's centroid, closing across the ridge.
pub fn towel_grasp(wrinkle: &PointCloud) -> Result<GraspPose> {
    let frame = pca(wrinkle)?;
    let closing = horizontal(&frame.secondary())
        .or_else(|| horizontal(&frame.primary()).map(|p| Vector2::new(-p.y, p.x)))
        .ok_or_else(|| Error::DegenerateDirection("wrinkle has no horizontal extent".into()))?;
    GraspPose::new(frame.centroid, closing, TOWEL_OPENING, None)
}

fn towel_mode(cloud: &PointCloud, mut trace: Vec<String>) -> Result<PlanResult> {
    let wrinkles = extract_wrinkles(cloud, &WrinkleParams::default());
    trace.push(format!("found {} wrinkle candidates", wrinkles.len()));
    let outcome = match wrinkles.first() {
        None => {
            let reason = "no wrinkle candidate in the feasible region".to_string();
            trace.push(reason.clone());
            Outcome::NoAction(reason)
        }
        Some(w) => match towel_grasp(w) {
            Ok(g) => {
                trace.push(format!(
                    "towel grasp on largest wrinkle ({} points)",
                    w.len()
                ));
                Outcome::Grasp(g)
            }
            Err(e) => {
                let reason = format!("towel grasp failed: {e}");
                trace.push(reason.clone());
                Outcome::NoAction(reason)
            }
        },
    };
    Ok(PlanResult {
        mode: PlanMode::Towel,
        outcome,
        trace,
    })
}

/// Full scene dispatch.
pub fn plan_scene(
    cloud: &PointCloud,
    dets: &[Detection],
    grip: &GripperModel,
    classes: &ClassMap,
) -> Result<PlanResult> {
    grip.validate()?;
    let roles: Vec<ClassRole> = dets
        .iter()
        .map(|d| classes.require(d))
        .collect::<Result<_>>()?;

    if roles.contains(&ClassRole::CoveredShape) {
        let region = towel_feasible(cloud, dets, classes)?;
        let mut trace =
            vec!["covered objects detected: towel mode on the feasible region".to_string()];
        trace.extend(region.trace);
        return towel_mode(&region.cloud, trace);
    }

    let rigid: Vec<usize> = (0..dets.len())
        .filter(|&i| roles[i] == ClassRole::Rigid)
        .collect();
    if !rigid.is_empty() {
        let subset: Vec<Detection> = rigid.iter().map(|&i| dets[i].clone()).collect();
        let mut result = plan_rigid_with_ids(&subset, &rigid, cloud, grip)?;
        result
            .trace
            .insert(0, "rigid objects detected: rigid mode".to_string());
        return Ok(result);
    }

    towel_mode(
        cloud,
        vec!["no covered or rigid objects: towel mode on the whole cloud".to_string()],
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rotgeom::RotatedBox2D;
    use approx::assert_abs_diff_eq;
    use nalgebra::Point2;

    fn frame(centroid: Point3<f64>, primary: Vector3<f64>) -> PrincipalFrame {
        let p = primary.normalize();
        let s = if p.z.abs() < 0.9 {
            Vector3::z().cross(&p).normalize()
        } else {
            Vector3::x()
        };
        PrincipalFrame {
            centroid,
            axes: [p, s, p.cross(&s)],
            sigma: [1.0, 0.5, 0.1],
        }
    }

    #[test]
    fn finger_geometry() {
        let grip = GripperModel::default();
        let g = GraspPose::new(Point3::origin(), Vector2::new(1.0, 0.0), 0.03, None).unwrap();
        let (l, r) = finger_volumes(&g, &grip).unwrap();
        assert_abs_diff_eq!(l.center().x, -0.02, epsilon = 1e-15);
        assert_abs_diff_eq!(r.center().x, 0.02, epsilon = 1e-15);
        assert_abs_diff_eq!(l.center().z - 0.5 * l.extent_z(), 0.0, epsilon = 1e-15);
        assert_eq!(
            (l.extent_x(), l.extent_y(), l.extent_z()),
            (0.01, 0.02, 0.04)
        );

        let flipped = GraspPose {
            closing_dir: -g.closing_dir,
            ..g
        };
        let (fl, fr) = finger_volumes(&flipped, &grip).unwrap();
        assert_abs_diff_eq!(fl.center(), r.center(), epsilon = 1e-15);
        assert_abs_diff_eq!(fr.center(), l.center(), epsilon = 1e-15);

        let up = GraspPose::new(Point3::origin(), Vector2::new(0.0, 1.0), 0.03, None).unwrap();
        assert_abs_diff_eq!(
            finger_volumes(&up, &grip).unwrap().0.yaw(),
            90.0,
            epsilon = 1e-12
        );

        let wide = GraspPose { opening: 0.2, ..g };
        assert!(matches!(
            finger_volumes(&wide, &grip),
            Err(Error::OpeningLimit { .. })
        ));
        assert!(collision_free(&wide, &grip, &PointCloud::default()).is_err());
    }

    #[test]
    fn collision_threshold_is_inclusive() {
        let grip = GripperModel::default();
        let g = GraspPose::new(Point3::origin(), Vector2::new(1.0, 0.0), 0.03, None).unwrap();
        assert!(collision_free(&g, &grip, &PointCloud::default()).unwrap());

        let (l, r) = finger_volumes(&g, &grip).unwrap();
        let mut pts = vec![l.center(); 60];
        pts.extend(vec![r.center(); 60]);
        assert!(collision_free(&g, &grip, &PointCloud::new(pts.clone()).unwrap()).unwrap());
        pts.push(l.center());
        assert!(!collision_free(&g, &grip, &PointCloud::new(pts).unwrap()).unwrap());

        let crowded = PointCloud::new(vec![l.center(); 100]).unwrap();
        assert!(!collision_free(&g, &grip, &crowded).unwrap());
    }

    #[test]
    fn candidate_positions() {
        let f = frame(Point3::new(0.0, 0.0, 0.1), Vector3::x());
        let c = rigid_candidates(&f, 0.2);
        assert_abs_diff_eq!(c[0], Point3::new(0.0, 0.0, 0.1), epsilon = 1e-15);
        assert_abs_diff_eq!(c[1], Point3::new(-0.06, 0.0, 0.1), epsilon = 1e-15);
        assert_abs_diff_eq!(c[2], Point3::new(0.06, 0.0, 0.1), epsilon = 1e-15);
        let z = rigid_candidates(&f, 0.0);
        assert!(z.iter().all(|p| *p == f.centroid));

        let g = frame(Point3::new(1.0, -2.0, 0.3), Vector3::new(0.3, 0.4, 0.1));
        let c = rigid_candidates(&g, 0.17);
        assert_abs_diff_eq!(
            (c[1] - c[0]) + (c[2] - c[0]),
            Vector3::zeros(),
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(
            (c[2] - c[0]).normalize().dot(&g.primary()),
            1.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn push_formula() {
        let f = frame(Point3::new(1.0, 2.0, 0.05), Vector3::y());
        let p = plan_push(&f, 0.3).unwrap();
        assert_abs_diff_eq!(p.start, Point3::new(1.0, 2.15, 0.05), epsilon = 1e-12);
        assert_eq!(p.end, f.centroid);
        assert_eq!(p.start.z, f.centroid.z);

        let tilted = frame(Point3::new(0.2, 0.1, 0.4), Vector3::new(1.0, 2.0, 0.5));
        let p = plan_push(&tilted, 0.12).unwrap();
        let d = (p.start - p.end).xy();
        assert_abs_diff_eq!(d.norm(), 0.06, epsilon = 1e-12);
        assert_abs_diff_eq!(d.normalize(), p.direction, epsilon = 1e-12);

        let vertical = frame(Point3::origin(), Vector3::z());
        assert!(matches!(
            plan_push(&vertical, 0.1),
            Err(Error::DegenerateDirection(_))
        ));
        assert!(plan_push(&f, 0.0).is_err());
    }

    fn plane_with_ridge(ridges: &[(f64, f64, f64)]) -> PointCloud {
        // 0.4 x 0.4 m plane at 2 mm spacing; ridges are (x, y_center, radius)
        // half-cylinders running along y with length 0.12 m.
        let mut pts = Vec::new();
        for i in 0..=200 {
            for j in 0..=200 {
                let x = -0.2 + 0.002 * i as f64;
                let y = -0.2 + 0.002 * j as f64;
                let mut z = 0.0_f64;
                for &(rx, ry, r) in ridges {
                    let d = x - rx;
                    if d.abs() < r && (y - ry).abs() <= 0.06 {
                        z = z.max((r * r - d * d).sqrt());
                    }
                }
                pts.push(Point3::new(x, y, z));
            }
        }
        PointCloud::new(pts).unwrap()
    }

    #[test]
    fn wrinkle_extraction() {
        let params = WrinkleParams::default();
        assert!(extract_wrinkles(&plane_with_ridge(&[]), &params).is_empty());

        let one = extract_wrinkles(&plane_with_ridge(&[(0.05, 0.02, 0.02)]), &params);
        assert_eq!(one.len(), 1);
        let c = one[0].centroid().unwrap();
        assert!((c.x - 0.05).abs() < 0.01 && (c.y - 0.02).abs() < 0.01);

        let two = extract_wrinkles(
            &plane_with_ridge(&[(-0.1, 0.0, 0.02), (0.1, 0.0, 0.015)]),
            &params,
        );
        assert_eq!(two.len(), 2);
        assert!(two[0].len() >= two[1].len());
    }

    #[test]
    fn towel_grasp_crosses_ridge() {
        let w = extract_wrinkles(
            &plane_with_ridge(&[(0.0, 0.0, 0.02)]),
            &WrinkleParams::default(),
        );
        let g = towel_grasp(&w[0]).unwrap();
        assert_abs_diff_eq!(g.closing_dir.x.abs(), 1.0, epsilon = 1e-6);
        assert_eq!(g.opening, TOWEL_OPENING);
        assert!(g.target_id.is_none());
        let (lo, hi) = w[0].points().iter().fold(
            (
                Vector3::repeat(f64::INFINITY),
                Vector3::repeat(f64::NEG_INFINITY),
            ),
            |(lo, hi), p| (lo.inf(&p.coords), hi.sup(&p.coords)),
        );
        assert!((0..3).all(|k| g.position[k] >= lo[k] && g.position[k] <= hi[k]));
        assert!(towel_grasp(&PointCloud::default()).is_err());
    }

    #[test]
    fn scene_rejects_unmapped_class() {
        let det = Detection::new(
            0,
            "mystery",
            0.9,
            RotatedBox2D::new(1.0, 1.0, 1.0, 1.0, 0.0),
        );
        let r = plan_scene(
            &PointCloud::default(),
            &[det],
            &GripperModel::default(),
            &ClassMap::default(),
        );
        assert!(matches!(r, Err(Error::Config(_))));
    }

    #[test]
    fn rigid_needs_detections() {
        let r = plan_rigid(&[], &PointCloud::default(), &GripperModel::default());
        assert!(matches!(r, Err(Error::Precondition(_))));
    }

    #[test]
    fn lift_failures_are_traced() {
        let cloud =
            PointCloud::organized(vec![Point3::origin()], vec![Point2::new(0.0, 0.0)]).unwrap();
        let det = Detection::new(
            0,
            "box",
            0.9,
            RotatedBox2D::new(100.0, 100.0, 10.0, 10.0, 0.0),
        );
        let r = plan_rigid(&[det], &cloud, &GripperModel::default()).unwrap();
        assert!(matches!(r.outcome, Outcome::NoAction(_)));
        assert!(r.trace[0].contains("skipped"));
    }
}
