//! Python bindings for `mixgrasp`.
//!
//! Boxes, clouds and detections are thin wrappers over the core types.
//! Plan results come back as plain dicts in the plan-file layout.

use std::collections::BTreeMap;

use mixgrasp::cloud::{self as core_cloud};
use mixgrasp::detect as core_detect;
use mixgrasp::io as core_io;
use mixgrasp::planner::{self as core_planner, ClassMap, ClassRole};
use mixgrasp::rotgeom as core_geom;
use mixgrasp::scenegen as core_scene;
use nalgebra::{Point2, Point3, Vector2};
use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyOSError};
use pyo3::prelude::*;

create_exception!(
    mixgrasp,
    MixgraspError,
    PyException,
    "Error raised by the mixgrasp core."
);

fn to_py(e: mixgrasp::Error) -> PyErr {
    match e {
        mixgrasp::Error::Io(io) => PyOSError::new_err(io.to_string()),
        other => MixgraspError::new_err((other.code(), other.to_string())),
    }
}

#[pyclass(
    name = "RotatedBox2D",
    module = "mixgrasp",
    frozen,
    skip_from_py_object
)]
#[derive(Clone, Copy)]
pub struct PyRotatedBox2D {
    inner: core_geom::RotatedBox2D,
}

#[pymethods]
impl PyRotatedBox2D {
    #[new]
    fn new(cx: f64, cy: f64, w: f64, h: f64, theta: f64) -> Self {
        Self {
            inner: core_geom::RotatedBox2D::new(cx, cy, w, h, theta),
        }
    }

    #[getter]
    fn cx(&self) -> f64 {
        self.inner.cx()
    }

    #[getter]
    fn cy(&self) -> f64 {
        self.inner.cy()
    }

    #[getter]
    fn w(&self) -> f64 {
        self.inner.w()
    }

    #[getter]
    fn h(&self) -> f64 {
        self.inner.h()
    }

    /// Angle in degrees, normalized to [0, 180).
    #[getter]
    fn theta(&self) -> f64 {
        self.inner.theta()
    }

    fn area(&self) -> f64 {
        self.inner.area()
    }

    /// Corners counterclockwise.
    fn corners(&self) -> Vec<(f64, f64)> {
        self.inner
            .corners()
            .vertices()
            .iter()
            .map(|p| (p.x, p.y))
            .collect()
    }

    fn contains(&self, x: f64, y: f64) -> bool {
        self.inner.contains(Point2::new(x, y))
    }

    fn expand(&self, factor_w: f64, factor_h: f64) -> PyResult<Self> {
        Ok(Self {
            inner: self.inner.expand(factor_w, factor_h).map_err(to_py)?,
        })
    }

    fn __repr__(&self) -> String {
        let b = &self.inner;
        format!(
            "RotatedBox2D({}, {}, {}, {}, {})",
            b.cx(),
            b.cy(),
            b.w(),
            b.h(),
            b.theta()
        )
    }
}

#[pyclass(
    name = "OrientedBox3D",
    module = "mixgrasp",
    frozen,
    skip_from_py_object
)]
#[derive(Clone, Copy)]
pub struct PyOrientedBox3D {
    inner: core_geom::OrientedBox3D,
}

#[pymethods]
impl PyOrientedBox3D {
    #[new]
    fn new(center: [f64; 3], extent_x: f64, extent_y: f64, extent_z: f64, yaw: f64) -> Self {
        let [x, y, z] = center;
        Self {
            inner: core_geom::OrientedBox3D::new(
                Point3::new(x, y, z),
                extent_x,
                extent_y,
                extent_z,
                yaw,
            ),
        }
    }

    #[getter]
    fn center(&self) -> (f64, f64, f64) {
        let c = self.inner.center();
        (c.x, c.y, c.z)
    }

    #[getter]
    fn extents(&self) -> (f64, f64, f64) {
        (
            self.inner.extent_x(),
            self.inner.extent_y(),
            self.inner.extent_z(),
        )
    }

    #[getter]
    fn yaw(&self) -> f64 {
        self.inner.yaw()
    }

    fn volume(&self) -> f64 {
        self.inner.volume()
    }

    fn contains(&self, point: [f64; 3]) -> bool {
        let [x, y, z] = point;
        self.inner.contains(&Point3::new(x, y, z))
    }

    fn __repr__(&self) -> String {
        let (c, e) = (self.center(), self.extents());
        format!(
            "OrientedBox3D({c:?}, {}, {}, {}, {})",
            e.0,
            e.1,
            e.2,
            self.inner.yaw()
        )
    }
}

#[pyclass(name = "Detection", module = "mixgrasp", frozen, skip_from_py_object)]
#[derive(Clone)]
pub struct PyDetection {
    inner: core_detect::Detection,
}

#[pymethods]
impl PyDetection {
    #[new]
    fn new(
        class_id: usize,
        class_name: String,
        score: f64,
        bbox: PyRef<'_, PyRotatedBox2D>,
    ) -> Self {
        Self {
            inner: core_detect::Detection::new(class_id, class_name, score, bbox.inner),
        }
    }

    #[getter]
    fn class_id(&self) -> usize {
        self.inner.class_id
    }

    #[getter]
    fn class_name(&self) -> String {
        self.inner.class_name.clone()
    }

    #[getter]
    fn score(&self) -> f64 {
        self.inner.score
    }

    #[getter]
    fn bbox(&self) -> PyRotatedBox2D {
        PyRotatedBox2D {
            inner: self.inner.bbox,
        }
    }

    fn __repr__(&self) -> String {
        format!(
            "Detection({}, {:?}, {}, {})",
            self.inner.class_id,
            self.inner.class_name,
            self.inner.score,
            self.bbox().__repr__()
        )
    }
}

#[pyclass(name = "PointCloud", module = "mixgrasp", frozen, skip_from_py_object)]
#[derive(Clone)]
pub struct PyPointCloud {
    inner: core_cloud::PointCloud,
}

#[pymethods]
impl PyPointCloud {
    /// `points` is a sequence of (x, y, z); `pixels`, when given, holds the
    /// matching (u, v) image coordinates.
    #[new]
    #[pyo3(signature = (points, pixels=None))]
    fn new(points: Vec<[f64; 3]>, pixels: Option<Vec<[f64; 2]>>) -> PyResult<Self> {
        let pts = points
            .iter()
            .map(|&[x, y, z]| Point3::new(x, y, z))
            .collect();
        let inner = match pixels {
            Some(px) => core_cloud::PointCloud::organized(
                pts,
                px.iter().map(|&[u, v]| Point2::new(u, v)).collect(),
            ),
            None => core_cloud::PointCloud::new(pts),
        }
        .map_err(to_py)?;
        Ok(Self { inner })
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn points(&self) -> Vec<(f64, f64, f64)> {
        self.inner
            .points()
            .iter()
            .map(|p| (p.x, p.y, p.z))
            .collect()
    }

    fn pixels(&self) -> Option<Vec<(f64, f64)>> {
        self.inner
            .pixels()
            .map(|px| px.iter().map(|p| (p.x, p.y)).collect())
    }

    fn is_organized(&self) -> bool {
        self.inner.is_organized()
    }

    fn crop(&self, bbox: PyRef<'_, PyOrientedBox3D>) -> Self {
        Self {
            inner: core_cloud::crop(&self.inner, &bbox.inner),
        }
    }

    fn __repr__(&self) -> String {
        format!("PointCloud(<{} points>)", self.inner.len())
    }
}

#[pyclass(
    name = "PrincipalFrame",
    module = "mixgrasp",
    frozen,
    skip_from_py_object
)]
pub struct PyPrincipalFrame {
    inner: core_cloud::PrincipalFrame,
}

#[pymethods]
impl PyPrincipalFrame {
    #[getter]
    fn centroid(&self) -> (f64, f64, f64) {
        let c = self.inner.centroid;
        (c.x, c.y, c.z)
    }

    /// Unit axes, primary first, forming a right-handed frame.
    #[getter]
    fn axes(&self) -> Vec<(f64, f64, f64)> {
        self.inner.axes.iter().map(|a| (a.x, a.y, a.z)).collect()
    }

    /// Covariance eigenvalues, descending.
    #[getter]
    fn sigma(&self) -> (f64, f64, f64) {
        let [a, b, c] = self.inner.sigma;
        (a, b, c)
    }
}

#[pyclass(
    name = "GripperModel",
    module = "mixgrasp",
    frozen,
    skip_from_py_object
)]
#[derive(Clone, Copy)]
pub struct PyGripperModel {
    inner: core_planner::GripperModel,
}

#[pymethods]
impl PyGripperModel {
    #[new]
    #[pyo3(signature = (max_opening=None, finger_width=None, finger_length=None, finger_depth=None, collision_threshold=None))]
    fn new(
        max_opening: Option<f64>,
        finger_width: Option<f64>,
        finger_length: Option<f64>,
        finger_depth: Option<f64>,
        collision_threshold: Option<usize>,
    ) -> PyResult<Self> {
        let d = core_planner::GripperModel::default();
        let inner = core_planner::GripperModel {
            max_opening: max_opening.unwrap_or(d.max_opening),
            finger_width: finger_width.unwrap_or(d.finger_width),
            finger_length: finger_length.unwrap_or(d.finger_length),
            finger_depth: finger_depth.unwrap_or(d.finger_depth),
            collision_threshold: collision_threshold.unwrap_or(d.collision_threshold),
        };
        inner.validate().map_err(to_py)?;
        Ok(Self { inner })
    }

    #[getter]
    fn max_opening(&self) -> f64 {
        self.inner.max_opening
    }

    #[getter]
    fn collision_threshold(&self) -> usize {
        self.inner.collision_threshold
    }
}

#[pyclass(name = "GraspPose", module = "mixgrasp", frozen, skip_from_py_object)]
#[derive(Clone, Copy)]
pub struct PyGraspPose {
    inner: core_planner::GraspPose,
}

#[pymethods]
impl PyGraspPose {
    #[new]
    #[pyo3(signature = (position, closing_dir, opening, target_id=None))]
    fn new(
        position: [f64; 3],
        closing_dir: [f64; 2],
        opening: f64,
        target_id: Option<usize>,
    ) -> PyResult<Self> {
        let [x, y, z] = position;
        let inner = core_planner::GraspPose::new(
            Point3::new(x, y, z),
            Vector2::new(closing_dir[0], closing_dir[1]),
            opening,
            target_id,
        )
        .map_err(to_py)?;
        Ok(Self { inner })
    }

    #[getter]
    fn position(&self) -> (f64, f64, f64) {
        let p = self.inner.position;
        (p.x, p.y, p.z)
    }

    #[getter]
    fn closing_dir(&self) -> (f64, f64) {
        (self.inner.closing_dir.x, self.inner.closing_dir.y)
    }

    #[getter]
    fn opening(&self) -> f64 {
        self.inner.opening
    }
}

#[pyfunction]
fn normalize_angle(deg: f64) -> f64 {
    core_geom::normalize_angle(deg)
}

#[pyfunction]
fn iou(a: PyRef<'_, PyRotatedBox2D>, b: PyRef<'_, PyRotatedBox2D>) -> f64 {
    core_geom::iou(&a.inner, &b.inner)
}

/// IoU scaled by |cos| of the angle difference.
#[pyfunction]
fn ariou(a: PyRef<'_, PyRotatedBox2D>, b: PyRef<'_, PyRotatedBox2D>) -> f64 {
    core_geom::ariou(&a.inner, &b.inner)
}

/// Decodes one anchor slot; `anchor` is (w, h, theta_deg).
#[pyfunction]
#[pyo3(signature = (t, cell, anchor, stride, max_box_size=core_detect::DEFAULT_MAX_BOX_SIZE))]
fn decode_cell(
    t: [f64; 4],
    cell: (usize, usize),
    anchor: (f64, f64, f64),
    stride: f64,
    max_box_size: f64,
) -> PyRotatedBox2D {
    let a = core_detect::Anchor::new(anchor.0, anchor.1, anchor.2);
    PyRotatedBox2D {
        inner: core_detect::decode_cell(t, cell, &a, stride, max_box_size),
    }
}

#[pyfunction]
fn nms_ariou(dets: Vec<PyRef<'_, PyDetection>>, threshold: f64) -> PyResult<Vec<PyDetection>> {
    let raw: Vec<core_detect::Detection> = dets.iter().map(|d| d.inner.clone()).collect();
    Ok(core_detect::nms_ariou(&raw, threshold)
        .map_err(to_py)?
        .into_iter()
        .map(|inner| PyDetection { inner })
        .collect())
}

#[pyfunction]
fn pca(cloud: PyRef<'_, PyPointCloud>) -> PyResult<PyPrincipalFrame> {
    Ok(PyPrincipalFrame {
        inner: core_cloud::pca(&cloud.inner).map_err(to_py)?,
    })
}

#[pyfunction]
fn lift_box(
    cloud: PyRef<'_, PyPointCloud>,
    bbox: PyRef<'_, PyRotatedBox2D>,
) -> PyResult<PyOrientedBox3D> {
    Ok(PyOrientedBox3D {
        inner: core_cloud::lift_box(&cloud.inner, &bbox.inner).map_err(to_py)?,
    })
}

#[pyfunction]
fn finger_volumes(
    pose: PyRef<'_, PyGraspPose>,
    gripper: PyRef<'_, PyGripperModel>,
) -> PyResult<(PyOrientedBox3D, PyOrientedBox3D)> {
    let (l, r) = core_planner::finger_volumes(&pose.inner, &gripper.inner).map_err(to_py)?;
    Ok((PyOrientedBox3D { inner: l }, PyOrientedBox3D { inner: r }))
}

#[pyfunction]
fn collision_free(
    pose: PyRef<'_, PyGraspPose>,
    gripper: PyRef<'_, PyGripperModel>,
    cloud: PyRef<'_, PyPointCloud>,
) -> PyResult<bool> {
    core_planner::collision_free(&pose.inner, &gripper.inner, &cloud.inner).map_err(to_py)
}

fn plan_dict(py: Python<'_>, result: &core_planner::PlanResult) -> PyResult<Py<PyAny>> {
    let text = core_io::plan_to_string(&core_io::PlanFile::from(result)).map_err(to_py)?;
    Ok(py.import("json")?.call_method1("loads", (text,))?.unbind())
}

/// Push plan for a cloud's principal frame, as a plan-file `push` dict.
#[pyfunction]
fn plan_push(py: Python<'_>, object: PyRef<'_, PyPointCloud>, h_r: f64) -> PyResult<Py<PyAny>> {
    let frame = core_cloud::pca(&object.inner).map_err(to_py)?;
    let push = core_planner::plan_push(&frame, h_r).map_err(to_py)?;
    let result = core_planner::PlanResult {
        mode: core_planner::PlanMode::Rigid,
        outcome: core_planner::Outcome::Push(push),
        trace: Vec::new(),
    };
    let full = plan_dict(py, &result)?;
    Ok(full.bind(py).get_item("result")?.get_item("push")?.unbind())
}

/// Full planner. `class_roles` extends the default class table with
/// entries like `{"mug": "rigid"}`. Returns a plan-file dict.
#[pyfunction]
#[pyo3(signature = (cloud, detections, gripper=None, class_roles=None))]
fn plan_scene(
    py: Python<'_>,
    cloud: PyRef<'_, PyPointCloud>,
    detections: Vec<PyRef<'_, PyDetection>>,
    gripper: Option<PyRef<'_, PyGripperModel>>,
    class_roles: Option<BTreeMap<String, String>>,
) -> PyResult<Py<PyAny>> {
    let mut classes = ClassMap::default();
    for (class, role) in class_roles.unwrap_or_default() {
        let r = ClassRole::parse(&role).ok_or_else(|| {
            to_py(mixgrasp::Error::Config(format!(
                "class {class:?}: unknown role {role:?}"
            )))
        })?;
        classes.insert(class, r);
    }
    let grip = gripper.map(|g| g.inner).unwrap_or_default();
    let dets: Vec<core_detect::Detection> = detections.iter().map(|d| d.inner.clone()).collect();
    let result = core_planner::plan_scene(&cloud.inner, &dets, &grip, &classes).map_err(to_py)?;
    plan_dict(py, &result)
}

type LoadedScene = (PyPointCloud, Vec<PyDetection>, Py<PyAny>, Vec<String>);

/// Loads a scene file: (cloud, detections, camera dict, warnings).
#[pyfunction]
fn load_scene(py: Python<'_>, path: std::path::PathBuf) -> PyResult<LoadedScene> {
    let loaded = core_io::load_scene(path).map_err(to_py)?;
    let scene = loaded.value;
    let cam = pyo3::types::PyDict::new(py);
    cam.set_item("fx", scene.camera.fx)?;
    cam.set_item("fy", scene.camera.fy)?;
    cam.set_item("cx", scene.camera.cx)?;
    cam.set_item("cy", scene.camera.cy)?;
    cam.set_item("width", scene.camera.width)?;
    cam.set_item("height", scene.camera.height)?;
    Ok((
        PyPointCloud { inner: scene.cloud },
        scene
            .detections
            .into_iter()
            .map(|inner| PyDetection { inner })
            .collect(),
        cam.into_any().unbind(),
        loaded.warnings,
    ))
}

/// Generates a synthetic scene from a JSON scene spec: (cloud, detections).
#[pyfunction]
fn generate_scene(spec_json: &str) -> PyResult<(PyPointCloud, Vec<PyDetection>)> {
    let spec: core_scene::SceneSpec = serde_json::from_str(spec_json)
        .map_err(|e| to_py(mixgrasp::Error::InvalidSpec(e.to_string())))?;
    let scene = core_scene::generate(&spec).map_err(to_py)?;
    Ok((
        PyPointCloud { inner: scene.cloud },
        scene
            .truth_dets
            .into_iter()
            .map(|inner| PyDetection { inner })
            .collect(),
    ))
}

#[pymodule]
#[pyo3(name = "mixgrasp")]
pub fn mixgrasp_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("MixgraspError", m.py().get_type::<MixgraspError>())?;
    m.add_class::<PyRotatedBox2D>()?;
    m.add_class::<PyOrientedBox3D>()?;
    m.add_class::<PyDetection>()?;
    m.add_class::<PyPointCloud>()?;
    m.add_class::<PyPrincipalFrame>()?;
    m.add_class::<PyGripperModel>()?;
    m.add_class::<PyGraspPose>()?;
    m.add_function(wrap_pyfunction!(normalize_angle, m)?)?;
    m.add_function(wrap_pyfunction!(iou, m)?)?;
    m.add_function(wrap_pyfunction!(ariou, m)?)?;
    m.add_function(wrap_pyfunction!(decode_cell, m)?)?;
    m.add_function(wrap_pyfunction!(nms_ariou, m)?)?;
    m.add_function(wrap_pyfunction!(pca, m)?)?;
    m.add_function(wrap_pyfunction!(lift_box, m)?)?;
    m.add_function(wrap_pyfunction!(finger_volumes, m)?)?;
    m.add_function(wrap_pyfunction!(collision_free, m)?)?;
    m.add_function(wrap_pyfunction!(plan_push, m)?)?;
    m.add_function(wrap_pyfunction!(plan_scene, m)?)?;
    m.add_function(wrap_pyfunction!(load_scene, m)?)?;
    m.add_function(wrap_pyfunction!(generate_scene, m)?)?;
    Ok(())
}
