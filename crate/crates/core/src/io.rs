//! JSON file formats: scenes, plans and gripper configs.
//!
//! Floats are written with at least nine significant digits. Values are the
//! shortest round-trip representation, zero-padded when shorter, so reading
//! a file back yields bit-identical numbers.

use std::collections::BTreeMap;
use std::io::{self, Write};
use std::path::Path;

use nalgebra::{Point2, Point3};
use serde::{de::DeserializeOwned, Deserialize, Serialize};
use serde_json::ser::{CompactFormatter, Formatter, PrettyFormatter};

use crate::cloud::PointCloud;
use crate::detect::{Anchor, Detection, RawPredictionGrid};
use crate::error::{Error, Result};
use crate::planner::{ClassMap, ClassRole, GripperModel, Outcome, PlanResult};
use crate::rotgeom::{normalize_angle, OrientedBox3D, RotatedBox2D};
use crate::scenegen::Scene;

pub const SCHEMA_VERSION: u32 = 1;
pub const UNITS: &str = "m";

const MIN_SIGNIFICANT: usize = 9;

/// Decimal text for `v` with at least nine significant digits.
pub fn format_f64(v: f64) -> String {
    if !v.is_finite() {
        return "null".into();
    }
    let a = v.abs();
    if v == 0.0 || (1e-5..1e16).contains(&a) {
        pad_mantissa(&format!("{v}"))
    } else {
        let s = format!("{v:e}");
        let (mantissa, exp) = s.split_once('e').expect("exponent form");
        format!("{}e{exp}", pad_mantissa(mantissa))
    }
}

fn pad_mantissa(s: &str) -> String {
    let significant = s
        .trim_start_matches('-')
        .chars()
        .filter(char::is_ascii_digit)
        .skip_while(|&c| c == '0')
        .count();
    let zero = s
        .trim_start_matches('-')
        .chars()
        .all(|c| c == '0' || c == '.');
    let missing = if zero {
        let decimals = s.split_once('.').map_or(0, |(_, f)| f.len());
        MIN_SIGNIFICANT.saturating_sub(decimals)
    } else {
        MIN_SIGNIFICANT.saturating_sub(significant)
    };
    let mut out = s.to_string();
    if missing > 0 {
        if !out.contains('.') {
            out.push('.');
        }
        out.extend(std::iter::repeat_n('0', missing));
    }
    out
}

/// Wraps a serde_json formatter to write padded floats.
struct Padded<F>(F);

macro_rules! delegate {
    ($($name:ident($($arg:ident: $ty:ty),*)),* $(,)?) => {
        $(fn $name<W: ?Sized + Write>(&mut self, w: &mut W $(, $arg: $ty)*) -> io::Result<()> {
            self.0.$name(w $(, $arg)*)
        })*
    };
}

impl<F: Formatter> Formatter for Padded<F> {
    fn write_f64<W: ?Sized + Write>(&mut self, w: &mut W, v: f64) -> io::Result<()> {
        w.write_all(format_f64(v).as_bytes())
    }

    fn write_f32<W: ?Sized + Write>(&mut self, w: &mut W, v: f32) -> io::Result<()> {
        self.write_f64(w, f64::from(v))
    }

    delegate!(
        begin_array(),
        end_array(),
        begin_array_value(first: bool),
        end_array_value(),
        begin_object(),
        end_object(),
        begin_object_key(first: bool),
        end_object_key(),
        begin_object_value(),
        end_object_value(),
    );
}

/// Compact JSON with padded floats and a trailing newline.
pub fn to_json_compact<T: Serialize>(value: &T) -> Result<String> {
    write_with(value, Padded(CompactFormatter))
}

/// Indented JSON with padded floats and a trailing newline.
pub fn to_json_pretty<T: Serialize>(value: &T) -> Result<String> {
    write_with(value, Padded(PrettyFormatter::new()))
}

fn write_with<T: Serialize, F: Formatter>(value: &T, formatter: F) -> Result<String> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, formatter);
    value
        .serialize(&mut ser)
        .map_err(|e| Error::InvalidInput(format!("serialization failed: {e}")))?;
    buf.push(b'\n');
    Ok(String::from_utf8(buf).expect("serde_json writes UTF-8"))
}

/// Maps serde_json failures onto parse and schema errors.
fn parse_json<T: DeserializeOwned>(text: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| {
        use serde_json::error::Category;
        match e.classify() {
            Category::Data => {
                Error::Schema(format!("line {}, column {}: {e}", e.line(), e.column()))
            }
            Category::Io => Error::Io(e.into()),
            Category::Syntax | Category::Eof => Error::Parse {
                line: e.line(),
                column: e.column(),
                message: e.to_string(),
            },
        }
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraInfo {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

#[derive(Serialize, Deserialize)]
struct Meta {
    units: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    schema_version: u32,
}

#[derive(Serialize, Deserialize)]
struct CloudRecord {
    points: Vec<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pixels: Option<Vec<[f64; 2]>>,
}

#[derive(Serialize, Deserialize)]
struct DetectionRecord {
    class: String,
    score: f64,
    #[serde(rename = "box")]
    bbox: [f64; 5],
}

#[derive(Serialize, Deserialize)]
struct RawGridRecord {
    /// `[grid_h, grid_w, anchors, 5 + classes]`.
    shape: [usize; 4],
    stride: f64,
    /// `[w, h, theta_deg]` per anchor.
    anchors: Vec<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    classes: Vec<String>,
    values: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxRecord {
    pub center: [f64; 3],
    pub extents: [f64; 3],
    pub yaw: f64,
}

impl From<&OrientedBox3D> for BoxRecord {
    fn from(b: &OrientedBox3D) -> Self {
        let c = b.center();
        Self {
            center: [c.x, c.y, c.z],
            extents: [b.extent_x(), b.extent_y(), b.extent_z()],
            yaw: b.yaw(),
        }
    }
}

impl From<&BoxRecord> for OrientedBox3D {
    fn from(r: &BoxRecord) -> Self {
        let [x, y, z] = r.center;
        OrientedBox3D::new(
            Point3::new(x, y, z),
            r.extents[0],
            r.extents[1],
            r.extents[2],
            r.yaw,
        )
    }
}

/// Ground truth carried along with generated scenes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Truth {
    /// One box per generated object.
    pub boxes3d: Vec<BoxRecord>,
    /// Object index of each file-level detection.
    pub det_objects: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct SceneRecord {
    meta: Meta,
    camera: CameraInfo,
    cloud: CloudRecord,
    detections: Vec<DetectionRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    raw_grid: Option<RawGridRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    truth: Option<Truth>,
}

/// In-memory scene file.
#[derive(Clone, Debug, PartialEq)]
pub struct SceneData {
    pub seed: Option<u64>,
    pub camera: CameraInfo,
    pub cloud: PointCloud,
    pub detections: Vec<Detection>,
    pub raw_grid: Option<(RawPredictionGrid, Vec<Anchor>)>,
    pub truth: Option<Truth>,
}

impl SceneData {
    pub fn from_scene(scene: &Scene, seed: u64) -> Self {
        let c = scene.camera;
        Self {
            seed: Some(seed),
            camera: CameraInfo {
                fx: c.fx,
                fy: c.fy,
                cx: c.cx,
                cy: c.cy,
                width: c.width,
                height: c.height,
            },
            cloud: scene.cloud.clone(),
            detections: scene.truth_dets.clone(),
            raw_grid: scene.raw_grid.clone(),
            truth: Some(Truth {
                boxes3d: scene.truth_boxes3d.iter().map(BoxRecord::from).collect(),
                det_objects: scene.truth_det_objects.clone(),
            }),
        }
    }
}

/// Parsed value plus non-fatal notes (e.g. angle normalization).
#[derive(Clone, Debug, PartialEq)]
pub struct Loaded<T> {
    pub value: T,
    pub warnings: Vec<String>,
}

pub fn load_scene(path: impl AsRef<Path>) -> Result<Loaded<SceneData>> {
    parse_scene(&std::fs::read_to_string(path)?)
}

pub fn parse_scene(text: &str) -> Result<Loaded<SceneData>> {
    let rec: SceneRecord = parse_json(text)?;
    let mut warnings = Vec::new();
    if rec.meta.units != UNITS {
        return Err(Error::Units(rec.meta.units));
    }
    if rec.meta.schema_version != SCHEMA_VERSION {
        return Err(Error::Schema(format!(
            "meta.schema_version {} is not supported (expected {SCHEMA_VERSION})",
            rec.meta.schema_version
        )));
    }
    let cam = rec.camera;
    if !(cam.fx > 0.0 && cam.fy > 0.0) {
        return Err(Error::Schema(
            "camera focal lengths must be positive".into(),
        ));
    }

    let points: Vec<Point3<f64>> = rec
        .cloud
        .points
        .iter()
        .map(|&[x, y, z]| Point3::new(x, y, z))
        .collect();
    let cloud = match rec.cloud.pixels {
        Some(px) => {
            if px.len() != points.len() {
                return Err(Error::Schema(format!(
                    "cloud.pixels has {} entries for {} points",
                    px.len(),
                    points.len()
                )));
            }
            PointCloud::organized(points, px.iter().map(|&[u, v]| Point2::new(u, v)).collect())
        }
        None => PointCloud::new(points),
    }
    .map_err(|e| Error::Schema(format!("cloud: {e}")))?;

    let mut names: Vec<&str> = rec.detections.iter().map(|d| d.class.as_str()).collect();
    names.sort_unstable();
    names.dedup();
    let mut detections = Vec::with_capacity(rec.detections.len());
    for (i, d) in rec.detections.iter().enumerate() {
        let [cx, cy, w, h, theta] = d.bbox;
        if !(0.0..=1.0).contains(&d.score) {
            return Err(Error::Schema(format!(
                "detections[{i}].score {} outside [0, 1]",
                d.score
            )));
        }
        if !(w >= 0.0 && h >= 0.0) {
            return Err(Error::Schema(format!(
                "detections[{i}].box has negative size"
            )));
        }
        let t = normalize_angle(theta);
        if t != theta {
            warnings.push(format!("detections[{i}]: theta {theta} normalized to {t}"));
        }
        let id = names
            .binary_search(&d.class.as_str())
            .expect("collected above");
        detections.push(Detection::new(
            id,
            d.class.clone(),
            d.score,
            RotatedBox2D::new(cx, cy, w, h, t),
        ));
    }

    let raw_grid = match rec.raw_grid {
        Some(g) => Some(grid_from_record(g, &mut warnings)?),
        None => None,
    };

    if let Some(t) = &rec.truth {
        if t.det_objects.len() != detections.len()
            || t.det_objects.iter().any(|&k| k >= t.boxes3d.len())
        {
            return Err(Error::Schema(
                "truth.det_objects does not match detections".into(),
            ));
        }
    }

    Ok(Loaded {
        value: SceneData {
            seed: rec.meta.seed,
            camera: cam,
            cloud,
            detections,
            raw_grid,
            truth: rec.truth,
        },
        warnings,
    })
}

fn grid_from_record(
    g: RawGridRecord,
    warnings: &mut Vec<String>,
) -> Result<(RawPredictionGrid, Vec<Anchor>)> {
    let [grid_h, grid_w, num_anchors, slot] = g.shape;
    if slot < 5 {
        return Err(Error::Schema(format!(
            "raw_grid.shape last axis {slot} is below 5"
        )));
    }
    if g.anchors.len() != num_anchors {
        return Err(Error::Schema(format!(
            "raw_grid has {} anchors, shape says {num_anchors}",
            g.anchors.len()
        )));
    }
    let num_classes = slot - 5;
    if !g.classes.is_empty() && g.classes.len() != num_classes {
        return Err(Error::Schema(format!(
            "raw_grid has {} class names, shape says {num_classes}",
            g.classes.len()
        )));
    }
    let mut anchors = Vec::with_capacity(num_anchors);
    for (i, &[w, h, theta]) in g.anchors.iter().enumerate() {
        let t = normalize_angle(theta);
        if t != theta {
            warnings.push(format!(
                "raw_grid.anchors[{i}]: theta {theta} normalized to {t}"
            ));
        }
        anchors.push(Anchor::new(w, h, t));
    }
    let grid = RawPredictionGrid {
        grid_w,
        grid_h,
        num_anchors,
        num_classes,
        stride: g.stride,
        class_names: g.classes,
        values: g.values,
    };
    grid.validate()
        .map_err(|e| Error::Schema(format!("raw_grid: {e}")))?;
    Ok((grid, anchors))
}

fn scene_record(scene: &SceneData) -> SceneRecord {
    let cloud = &scene.cloud;
    SceneRecord {
        meta: Meta {
            units: UNITS.into(),
            seed: scene.seed,
            schema_version: SCHEMA_VERSION,
        },
        camera: scene.camera,
        cloud: CloudRecord {
            points: cloud.points().iter().map(|p| [p.x, p.y, p.z]).collect(),
            pixels: cloud
                .pixels()
                .map(|px| px.iter().map(|p| [p.x, p.y]).collect()),
        },
        detections: scene
            .detections
            .iter()
            .map(|d| DetectionRecord {
                class: d.class_name.clone(),
                score: d.score,
                bbox: [
                    d.bbox.cx(),
                    d.bbox.cy(),
                    d.bbox.w(),
                    d.bbox.h(),
                    d.bbox.theta(),
                ],
            })
            .collect(),
        raw_grid: scene.raw_grid.as_ref().map(|(g, anchors)| RawGridRecord {
            shape: g.shape(),
            stride: g.stride,
            anchors: anchors.iter().map(|a| [a.w, a.h, a.theta]).collect(),
            classes: g.class_names.clone(),
            values: g.values.clone(),
        }),
        truth: scene.truth.clone(),
    }
}

pub fn scene_to_string(scene: &SceneData) -> Result<String> {
    to_json_compact(&scene_record(scene))
}

pub fn save_scene(path: impl AsRef<Path>, scene: &SceneData) -> Result<()> {
    std::fs::write(path, scene_to_string(scene)?)?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlanRecord {
    Grasp {
        position: [f64; 3],
        closing_dir: [f64; 2],
        opening_m: f64,
        target: Option<usize>,
    },
    Push {
        start: [f64; 3],
        end: [f64; 3],
        direction: [f64; 2],
        target: Option<usize>,
    },
}

/// Serialized planner output. `mode` is `"none"` when no action was found.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanFile {
    pub mode: String,
    pub result: Option<PlanRecord>,
    pub trace: Vec<String>,
}

impl From<&PlanResult> for PlanFile {
    fn from(r: &PlanResult) -> Self {
        let (mode, result) = match &r.outcome {
            Outcome::Grasp(g) => (
                r.mode.as_str(),
                Some(PlanRecord::Grasp {
                    position: [g.position.x, g.position.y, g.position.z],
                    closing_dir: [g.closing_dir.x, g.closing_dir.y],
                    opening_m: g.opening,
                    target: g.target_id,
                }),
            ),
            Outcome::Push(p) => (
                r.mode.as_str(),
                Some(PlanRecord::Push {
                    start: [p.start.x, p.start.y, p.start.z],
                    end: [p.end.x, p.end.y, p.end.z],
                    direction: [p.direction.x, p.direction.y],
                    target: p.target_id,
                }),
            ),
            Outcome::NoAction(_) => ("none", None),
        };
        Self {
            mode: mode.into(),
            result,
            trace: r.trace.clone(),
        }
    }
}

pub fn plan_to_string(plan: &PlanFile) -> Result<String> {
    to_json_pretty(plan)
}

pub fn parse_plan(text: &str) -> Result<PlanFile> {
    parse_json(text)
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GripperRecord {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    units: Option<String>,
    max_opening: Option<f64>,
    finger_width: Option<f64>,
    finger_length: Option<f64>,
    finger_depth: Option<f64>,
    collision_threshold: Option<usize>,
    /// Extra or overriding class roles: `"covered"`, `"rigid"` or `"towel"`.
    #[serde(default)]
    class_roles: BTreeMap<String, String>,
}

/// Gripper dimensions and class roles read from a config file.
#[derive(Clone, Debug, PartialEq)]
pub struct GripperConfig {
    pub gripper: GripperModel,
    pub classes: ClassMap,
}

pub fn load_gripper(path: impl AsRef<Path>) -> Result<GripperConfig> {
    parse_gripper(&std::fs::read_to_string(path)?)
}

/// Missing fields fall back to [`GripperModel::default`] and the default
/// class map.
pub fn parse_gripper(text: &str) -> Result<GripperConfig> {
    let rec: GripperRecord = parse_json(text).map_err(|e| match e {
        Error::Schema(m) => Error::Config(m),
        other => other,
    })?;
    if let Some(u) = rec.units {
        if u != UNITS {
            return Err(Error::Units(u));
        }
    }
    let d = GripperModel::default();
    let gripper = GripperModel {
        max_opening: rec.max_opening.unwrap_or(d.max_opening),
        finger_width: rec.finger_width.unwrap_or(d.finger_width),
        finger_length: rec.finger_length.unwrap_or(d.finger_length),
        finger_depth: rec.finger_depth.unwrap_or(d.finger_depth),
        collision_threshold: rec.collision_threshold.unwrap_or(d.collision_threshold),
    };
    gripper.validate()?;
    let mut classes = ClassMap::default();
    for (class, role) in rec.class_roles {
        let r = ClassRole::parse(&role)
            .ok_or_else(|| Error::Config(format!("class {class:?}: unknown role {role:?}")))?;
        classes.insert(class, r);
    }
    Ok(GripperConfig { gripper, classes })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenegen::{fixtures, generate};

    const MINIMAL: &str = r#"{
  "meta": {"units": "m", "seed": 1, "schema_version": 1},
  "camera": {"fx": 600, "fy": 600, "cx": 320, "cy": 240, "width": 640, "height": 480},
  "cloud": {"points": [[0.1, 0.2, 0.3]]},
  "detections": []
}"#;

    #[test]
    fn padded_floats() {
        assert_eq!(format_f64(0.5), "0.500000000");
        assert_eq!(format_f64(1.0), "1.00000000");
        assert_eq!(format_f64(-2.0), "-2.00000000");
        assert_eq!(format_f64(0.0), "0.000000000");
        assert_eq!(format_f64(0.1234567891234), "0.1234567891234");
        assert_eq!(format_f64(1e-7), "1.00000000e-7");
        assert_eq!(format_f64(f64::NAN), "null");
        for v in [0.1, 1.0 / 3.0, 123456.0, 1e-7, -4.5e20, 5e-324, f64::MAX] {
            let back: f64 = format_f64(v).parse().unwrap();
            assert_eq!(back.to_bits(), v.to_bits());
        }
    }

    #[test]
    fn minimal_scene_loads() {
        let s = parse_scene(MINIMAL).unwrap();
        assert_eq!(s.value.cloud.len(), 1);
        assert!(s.value.detections.is_empty());
        assert!(s.warnings.is_empty());
    }

    #[test]
    fn theta_is_normalized_with_warning() {
        let text = MINIMAL.replace(
            r#""detections": []"#,
            r#""detections": [{"class": "box", "score": 0.9, "box": [1, 2, 3, 4, 270]}]"#,
        );
        let s = parse_scene(&text).unwrap();
        assert_eq!(s.value.detections[0].bbox.theta(), 90.0);
        assert_eq!(s.warnings.len(), 1);
    }

    #[test]
    fn error_kinds_are_distinct() {
        let truncated = &MINIMAL[..MINIMAL.len() / 2];
        let e = parse_scene(truncated).unwrap_err();
        assert!(matches!(e, Error::Parse { line, .. } if line > 1), "{e}");

        let e = parse_scene(&MINIMAL.replace(r#""units": "m""#, r#""units": "mm""#)).unwrap_err();
        assert!(matches!(e, Error::Units(ref u) if u == "mm"));

        let e = parse_scene(&MINIMAL.replace(
            r#""points": [[0.1, 0.2, 0.3]]"#,
            r#""points": [[0.1, 0.2]]"#,
        ))
        .unwrap_err();
        assert!(matches!(e, Error::Schema(_)), "{e}");

        let e = parse_scene(&MINIMAL.replace(r#", "schema_version": 1"#, "")).unwrap_err();
        assert!(matches!(e, Error::Schema(_)), "{e}");

        let codes = [
            Error::Parse {
                line: 1,
                column: 1,
                message: String::new(),
            }
            .code(),
            Error::Schema(String::new()).code(),
            Error::Units(String::new()).code(),
        ];
        assert!(codes[0] != codes[1] && codes[1] != codes[2] && codes[0] != codes[2]);
    }

    #[test]
    fn scene_round_trip_is_exact() {
        let mut spec = fixtures::random_clutter(3, 4, 2e4);
        spec.raw_grid_stride = Some(32.0);
        let scene = generate(&spec).unwrap();
        let data = SceneData::from_scene(&scene, spec.seed);
        let text = scene_to_string(&data).unwrap();
        let back = parse_scene(&text).unwrap();
        assert!(back.warnings.is_empty());
        assert_eq!(back.value, data);
        assert_eq!(scene_to_string(&back.value).unwrap(), text);
    }

    #[test]
    fn gripper_defaults_and_overrides() {
        let g = parse_gripper("{}").unwrap();
        assert_eq!(g.gripper, GripperModel::default());
        assert_eq!(g.classes, ClassMap::default());

        let g = parse_gripper(
            r#"{"max_opening": 0.08, "collision_threshold": 10, "class_roles": {"mug": "rigid"}}"#,
        )
        .unwrap();
        assert_eq!(g.gripper.max_opening, 0.08);
        assert_eq!(g.gripper.collision_threshold, 10);
        assert_eq!(g.classes.role("mug"), Some(ClassRole::Rigid));

        assert!(matches!(
            parse_gripper(r#"{"finger_width": -1}"#),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            parse_gripper(r#"{"units": "mm"}"#),
            Err(Error::Units(_))
        ));
        assert!(matches!(
            parse_gripper(r#"{"class_roles": {"x": "soft"}}"#),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            parse_gripper(r#"{"fingers": 2}"#),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn plan_file_shapes() {
        let scene = generate(&fixtures::empty_table()).unwrap();
        let r = crate::planner::plan_scene(
            &scene.cloud,
            &[],
            &GripperModel::default(),
            &ClassMap::default(),
        )
        .unwrap();
        let f = PlanFile::from(&r);
        assert_eq!(f.mode, "none");
        let text = plan_to_string(&f).unwrap();
        assert!(text.contains("\"result\": null"));
        assert_eq!(parse_plan(&text).unwrap(), f);
    }
}
