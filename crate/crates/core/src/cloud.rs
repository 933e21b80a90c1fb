//! Point-cloud container and the spatial queries used by the planner.

use nalgebra::{Matrix3, Point2, Point3, Vector2, Vector3};

use crate::error::{Error, Result};
use crate::rotgeom::{OrientedBox3D, RotatedBox2D};

/// Fewest in-footprint points [`lift_box`] accepts.
pub const LIFT_MIN_POINTS: usize = 20;
/// Padding added to the lifted box's vertical extent, in meters.
pub const LIFT_Z_PADDING: f64 = 0.005;
/// Depth percentiles bounding the lifted box's vertical extent.
pub const LIFT_Z_PERCENTILES: (f64, f64) = (0.01, 0.99);

/// Set of 3D points in meters, optionally carrying per-point image
/// coordinates (an organized cloud).
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PointCloud {
    points: Vec<Point3<f64>>,
    pixels: Option<Vec<Point2<f64>>>,
}

impl PointCloud {
    pub fn new(points: Vec<Point3<f64>>) -> Result<Self> {
        check_finite(&points)?;
        Ok(Self {
            points,
            pixels: None,
        })
    }

    /// `pixels[i]` is the image coordinate `(u, v)` of `points[i]`.
    pub fn organized(points: Vec<Point3<f64>>, pixels: Vec<Point2<f64>>) -> Result<Self> {
        check_finite(&points)?;
        if pixels.len() != points.len() {
            return Err(Error::InvalidInput(format!(
                "{} pixel indices for {} points",
                pixels.len(),
                points.len()
            )));
        }
        if pixels.iter().any(|p| !(p.x.is_finite() && p.y.is_finite())) {
            return Err(Error::InvalidInput("non-finite pixel index".into()));
        }
        Ok(Self {
            points,
            pixels: Some(pixels),
        })
    }

    pub fn points(&self) -> &[Point3<f64>] {
        &self.points
    }

    pub fn pixels(&self) -> Option<&[Point2<f64>]> {
        self.pixels.as_deref()
    }

    pub fn is_organized(&self) -> bool {
        self.pixels.is_some()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Keeps points for which `keep(point)` holds, preserving order and pixels.
    pub fn filter<F: Fn(&Point3<f64>) -> bool>(&self, keep: F) -> Self {
        let mask: Vec<bool> = self.points.iter().map(keep).collect();
        let points = self
            .points
            .iter()
            .zip(&mask)
            .filter_map(|(p, &k)| k.then_some(*p))
            .collect();
        let pixels = self.pixels.as_ref().map(|px| {
            px.iter()
                .zip(&mask)
                .filter_map(|(p, &k)| k.then_some(*p))
                .collect()
        });
        Self { points, pixels }
    }

    /// Sub-cloud made of the given point indices, in the given order.
    pub fn select(&self, indices: &[usize]) -> Self {
        Self {
            points: indices.iter().map(|&i| self.points[i]).collect(),
            pixels: self
                .pixels
                .as_ref()
                .map(|px| indices.iter().map(|&i| px[i]).collect()),
        }
    }

    pub fn centroid(&self) -> Option<Point3<f64>> {
        if self.points.is_empty() {
            return None;
        }
        let sum = self
            .points
            .iter()
            .fold(Vector3::zeros(), |acc, p| acc + p.coords);
        Some(Point3::from(sum / self.points.len() as f64))
    }
}

fn check_finite(points: &[Point3<f64>]) -> Result<()> {
    match points
        .iter()
        .position(|p| !(p.x.is_finite() && p.y.is_finite() && p.z.is_finite()))
    {
        Some(i) => Err(Error::InvalidInput(format!(
            "non-finite coordinate at point {i}"
        ))),
        None => Ok(()),
    }
}

/// Points inside `bbox`, in input order.
pub fn crop(cloud: &PointCloud, bbox: &OrientedBox3D) -> PointCloud {
    cloud.filter(|p| bbox.contains(p))
}

pub fn count_in(cloud: &PointCloud, bbox: &OrientedBox3D) -> usize {
    cloud.points.iter().filter(|p| bbox.contains(p)).count()
}

/// Points contained in none of the exclusion boxes, in input order.
pub fn subtract(cloud: &PointCloud, exclusions: &[OrientedBox3D]) -> PointCloud {
    cloud.filter(|p| !exclusions.iter().any(|b| b.contains(p)))
}

/// Centroid and covariance eigenframe of a point set.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PrincipalFrame {
    pub centroid: Point3<f64>,
    /// Orthonormal, right-handed, primary first.
    pub axes: [Vector3<f64>; 3],
    /// Covariance eigenvalues, descending.
    pub sigma: [f64; 3],
}

impl PrincipalFrame {
    pub fn primary(&self) -> Vector3<f64> {
        self.axes[0]
    }

    pub fn secondary(&self) -> Vector3<f64> {
        self.axes[1]
    }
}

/// Population covariance (1/n) about the centroid.
pub fn covariance(points: &[Point3<f64>]) -> (Point3<f64>, Matrix3<f64>) {
    let n = points.len() as f64;
    let mean = points
        .iter()
        .fold(Vector3::zeros(), |acc, p| acc + p.coords)
        / n;
    let mut cov = Matrix3::zeros();
    for p in points {
        let d = p.coords - mean;
        cov += d * d.transpose();
    }
    (Point3::from(mean), cov / n)
}

/// Cyclic Jacobi eigen-decomposition of a symmetric 3x3 matrix.
///
/// Returns eigenvalues and the matrix whose columns are the matching
/// eigenvectors, unsorted.
pub fn jacobi_eigen(m: &Matrix3<f64>) -> (Vector3<f64>, Matrix3<f64>) {
    let mut a = *m;
    let mut v = Matrix3::identity();
    let scale = a.diagonal().norm_squared().max(f64::MIN_POSITIVE);
    for _sweep in 0..64 {
        let off = a[(0, 1)].powi(2) + a[(0, 2)].powi(2) + a[(1, 2)].powi(2);
        if off <= 1e-36 * scale {
            break;
        }
        for (p, q) in [(0, 1), (0, 2), (1, 2)] {
            let apq = a[(p, q)];
            if apq == 0.0 {
                continue;
            }
            let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
            let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
            let c = 1.0 / (t * t + 1.0).sqrt();
            let s = t * c;
            let mut rot = Matrix3::identity();
            rot[(p, p)] = c;
            rot[(q, q)] = c;
            rot[(p, q)] = s;
            rot[(q, p)] = -s;
            a = rot.transpose() * a * rot;
            // Exact zero keeps later sweeps from chasing rounding noise.
            a[(p, q)] = 0.0;
            a[(q, p)] = 0.0;
            v *= rot;
        }
    }
    (a.diagonal(), v)
}

/// Flips `v` so its largest-magnitude component is positive; ties go to
/// the earliest coordinate.
pub fn canonical_sign(v: Vector3<f64>) -> Vector3<f64> {
    let mut best = 0;
    for i in 1..3 {
        if v[i].abs() > v[best].abs() {
            best = i;
        }
    }
    if v[best] < 0.0 {
        -v
    } else {
        v
    }
}

/// Unit vector perpendicular to `v`, built from the coordinate axis least
/// aligned with it.
fn perpendicular(v: &Vector3<f64>) -> Vector3<f64> {
    let mut least = 0;
    for i in 1..3 {
        if v[i].abs() < v[least].abs() {
            least = i;
        }
    }
    let mut e = Vector3::zeros();
    e[least] = 1.0;
    v.cross(&e).normalize()
}

/// Principal frame of a cloud.
///
/// Needs at least 3 points. Collinear or coincident clouds return zero
/// trailing eigenvalues; the undefined axes are completed with cross
/// products so the frame stays orthonormal and right-handed.
pub fn pca(cloud: &PointCloud) -> Result<PrincipalFrame> {
    pca_points(cloud.points())
}

pub fn pca_points(points: &[Point3<f64>]) -> Result<PrincipalFrame> {
    if points.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "PCA needs at least 3 points, got {}",
            points.len()
        )));
    }
    let (centroid, cov) = covariance(points);
    let (values, vectors) = jacobi_eigen(&cov);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&i, &j| values[j].total_cmp(&values[i]));
    let sigma = order.map(|i| values[i].max(0.0));
    let tol = 1e-12 * sigma[0];

    let primary = if sigma[0] > 0.0 {
        canonical_sign(vectors.column(order[0]).normalize())
    } else {
        Vector3::x()
    };
    let secondary = if sigma[1] > tol {
        let s = vectors.column(order[1]).into_owned();
        // Re-orthogonalize against the primary before normalizing.
        canonical_sign((s - primary * primary.dot(&s)).normalize())
    } else {
        canonical_sign(perpendicular(&primary))
    };
    let third = primary.cross(&secondary).normalize();
    let sigma = [
        sigma[0],
        if sigma[1] > tol { sigma[1] } else { 0.0 },
        if sigma[2] > tol { sigma[2] } else { 0.0 },
    ];
    Ok(PrincipalFrame {
        centroid,
        axes: [primary, secondary, third],
        sigma,
    })
}

/// Lifts an image-plane detection into a yaw-oriented 3D box using the
/// organized cloud's pixel indices.
///
/// Image axes map onto world x/y, so the box yaw equals the 2D angle. The
/// planar extents are the spans of the in-footprint points along the yawed
/// axes; the vertical extent is the 1st-99th percentile height span plus
/// [`LIFT_Z_PADDING`]. The box is centered on those spans so it encloses the
/// points it was built from.
pub fn lift_box(cloud: &PointCloud, box2d: &RotatedBox2D) -> Result<OrientedBox3D> {
    let pixels = cloud
        .pixels()
        .ok_or_else(|| Error::InvalidInput("lift_box needs an organized cloud".into()))?;
    let selected: Vec<&Point3<f64>> = cloud
        .points()
        .iter()
        .zip(pixels)
        .filter_map(|(p, px)| box2d.contains(*px).then_some(p))
        .collect();
    if selected.len() < LIFT_MIN_POINTS {
        return Err(Error::InsufficientData(format!(
            "{} points inside the detection footprint, need {LIFT_MIN_POINTS}",
            selected.len()
        )));
    }

    let yaw = box2d.theta();
    let (s, c) = yaw.to_radians().sin_cos();
    let ax = Vector2::new(c, s);
    let ay = Vector2::new(-s, c);
    let (mut x_lo, mut x_hi) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut y_lo, mut y_hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for p in &selected {
        let q = Vector2::new(p.x, p.y);
        let (u, v) = (q.dot(&ax), q.dot(&ay));
        x_lo = x_lo.min(u);
        x_hi = x_hi.max(u);
        y_lo = y_lo.min(v);
        y_hi = y_hi.max(v);
    }
    let mut zs: Vec<f64> = selected.iter().map(|p| p.z).collect();
    zs.sort_by(f64::total_cmp);
    let z_lo = percentile_sorted(&zs, LIFT_Z_PERCENTILES.0);
    let z_hi = percentile_sorted(&zs, LIFT_Z_PERCENTILES.1);

    let mid = ax * (0.5 * (x_lo + x_hi)) + ay * (0.5 * (y_lo + y_hi));
    Ok(OrientedBox3D::new(
        Point3::new(mid.x, mid.y, 0.5 * (z_lo + z_hi)),
        x_hi - x_lo,
        y_hi - y_lo,
        z_hi - z_lo + LIFT_Z_PADDING,
        yaw,
    ))
}

/// Nearest-rank percentile of an ascending slice.
fn percentile_sorted(sorted: &[f64], q: f64) -> f64 {
    let idx = (q * (sorted.len() - 1) as f64).round() as usize;
    sorted[idx.min(sorted.len() - 1)]
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use nalgebra::{Rotation3, SymmetricEigen};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cube_cloud(n: usize, seed: u64) -> PointCloud {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        PointCloud::new(
            (0..n)
                .map(|_| Point3::new(rng.random(), rng.random(), rng.random()))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn rejects_bad_input() {
        assert!(PointCloud::new(vec![Point3::new(f64::NAN, 0.0, 0.0)]).is_err());
        assert!(PointCloud::organized(vec![Point3::origin()], vec![]).is_err());
    }

    #[test]
    fn crop_cases() {
        let cloud = cube_cloud(1000, 7);
        let all = OrientedBox3D::new(Point3::new(0.5, 0.5, 0.5), 2.0, 2.0, 2.0, 20.0);
        assert_eq!(crop(&cloud, &all), cloud);
        let away = OrientedBox3D::new(Point3::new(5.0, 5.0, 5.0), 1.0, 1.0, 1.0, 0.0);
        assert!(crop(&cloud, &away).is_empty());

        let half = OrientedBox3D::new(Point3::new(0.25, 0.5, 0.5), 0.5, 1.0, 1.0, 0.0);
        let inside = crop(&cloud, &half);
        let brute = cloud.points().iter().filter(|p| p.x <= 0.5).count();
        assert_eq!(inside.len(), brute);
        assert!((inside.len() as f64 - 500.0).abs() <= 30.0);
        assert_eq!(count_in(&cloud, &half), inside.len());
    }

    #[test]
    fn crop_keeps_pixels_in_step() {
        let pts = vec![
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(9.0, 0.0, 0.0),
            Point3::new(0.1, 0.0, 0.0),
        ];
        let px = vec![
            Point2::new(1.0, 1.0),
            Point2::new(2.0, 2.0),
            Point2::new(3.0, 3.0),
        ];
        let cloud = PointCloud::organized(pts, px).unwrap();
        let b = OrientedBox3D::new(Point3::origin(), 1.0, 1.0, 1.0, 0.0);
        let c = crop(&cloud, &b);
        assert_eq!(
            c.pixels().unwrap(),
            &[Point2::new(1.0, 1.0), Point2::new(3.0, 3.0)]
        );
    }

    #[test]
    fn count_cases() {
        let b = OrientedBox3D::new(Point3::new(1.0, 1.0, 1.0), 0.1, 0.1, 0.1, 45.0);
        assert_eq!(count_in(&PointCloud::default(), &b), 0);
        let at_center = PointCloud::new(vec![b.center(); 17]).unwrap();
        assert_eq!(count_in(&at_center, &b), 17);
    }

    #[test]
    fn subtract_cases() {
        let cloud = cube_cloud(10, 1);
        assert_eq!(subtract(&cloud, &[]), cloud);
        let all = OrientedBox3D::new(Point3::new(0.5, 0.5, 0.5), 2.0, 2.0, 2.0, 0.0);
        assert!(subtract(&cloud, &[all]).is_empty());

        let mut pts: Vec<Point3<f64>> = (0..6).map(|i| Point3::new(i as f64, 5.0, 0.0)).collect();
        pts.extend((0..4).map(|i| Point3::new(0.1 * i as f64, 0.0, 0.0)));
        let cloud = PointCloud::new(pts).unwrap();
        let ex = OrientedBox3D::new(Point3::new(0.15, 0.0, 0.0), 0.5, 0.5, 0.5, 0.0);
        assert_eq!(subtract(&cloud, &[ex]).len(), 6);
    }

    #[test]
    fn pca_line_is_degenerate_but_complete() {
        let pts: Vec<_> = (0..11)
            .map(|i| Point3::new(i as f64 * 0.1 - 0.5, 0.0, 0.0))
            .collect();
        let f = pca_points(&pts).unwrap();
        assert_abs_diff_eq!(f.axes[0], Vector3::x(), epsilon = 1e-12);
        assert_eq!(f.sigma[1], 0.0);
        assert_eq!(f.sigma[2], 0.0);
        assert_abs_diff_eq!(
            f.axes[0].cross(&f.axes[1]).dot(&f.axes[2]),
            1.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn pca_needs_three_points() {
        let pts = vec![Point3::origin(), Point3::new(1.0, 0.0, 0.0)];
        assert!(matches!(pca_points(&pts), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn pca_matches_dense_eigensolver() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let rot = Rotation3::from_euler_angles(0.3, -0.7, 1.1);
        let pts: Vec<Point3<f64>> = (0..10_000)
            .map(|_| {
                let g: Vector3<f64> = Vector3::new(
                    rng.sample::<f64, _>(rand_distr::StandardNormal) * 3.0,
                    rng.sample::<f64, _>(rand_distr::StandardNormal) * 1.5,
                    rng.sample::<f64, _>(rand_distr::StandardNormal) * 0.5,
                );
                Point3::from(rot * g)
            })
            .collect();
        let f = pca_points(&pts).unwrap();
        let (_, cov) = covariance(&pts);
        let oracle = SymmetricEigen::new(cov);
        let mut idx = [0usize, 1, 2];
        idx.sort_by(|&i, &j| oracle.eigenvalues[j].total_cmp(&oracle.eigenvalues[i]));
        for (k, &i) in idx.iter().enumerate() {
            let e = oracle.eigenvectors.column(i);
            assert!(f.axes[k].dot(&e).abs() > 1f64.to_radians().cos());
            let ev = oracle.eigenvalues[i];
            assert!((f.sigma[k] - ev).abs() <= 1e-9 * ev);
        }
    }

    #[test]
    fn lift_requires_organized_and_enough_points() {
        let cloud = cube_cloud(50, 3);
        let b = RotatedBox2D::new(0.0, 0.0, 10.0, 10.0, 0.0);
        assert!(matches!(lift_box(&cloud, &b), Err(Error::InvalidInput(_))));

        let px = vec![Point2::new(500.0, 500.0); 50];
        let org = PointCloud::organized(cloud.points().to_vec(), px).unwrap();
        assert!(matches!(
            lift_box(&org, &b),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn lift_recovers_rotated_rectangle() {
        // 0.10 x 0.20 m flat rectangle at height 0.05, yawed 30 degrees, with
        // pixel coordinates equal to 1 mm per pixel around (320, 240).
        let (s, c) = 30f64.to_radians().sin_cos();
        let mut pts = Vec::new();
        let mut px = Vec::new();
        for i in 0..=40 {
            for j in 0..=80 {
                let lx = -0.05 + 0.1 * i as f64 / 40.0;
                let ly = -0.1 + 0.2 * j as f64 / 80.0;
                let p = Point3::new(0.2 + c * lx - s * ly, -0.1 + s * lx + c * ly, 0.05);
                px.push(Point2::new(320.0 + 1000.0 * p.x, 240.0 + 1000.0 * p.y));
                pts.push(p);
            }
        }
        let cloud = PointCloud::organized(pts, px).unwrap();
        let b2 = RotatedBox2D::new(520.0, 140.0, 100.0, 200.0, 30.0);
        let b3 = lift_box(&cloud, &b2).unwrap();
        assert!((b3.extent_x() - 0.1).abs() <= 0.002);
        assert!((b3.extent_y() - 0.2).abs() <= 0.004);
        assert!((b3.yaw() - 30.0).abs() <= 3.0);
        assert_abs_diff_eq!(b3.extent_z(), LIFT_Z_PADDING, epsilon = 1e-12);
        assert_eq!(count_in(&cloud, &b3), cloud.len());
    }

    fn arb_points() -> impl Strategy<Value = Vec<Point3<f64>>> {
        prop::collection::vec(prop::array::uniform3(-1.0..1.0f64), 3..60).prop_map(|v| {
            v.into_iter()
                .map(|a| Point3::new(a[0], a[1] * 0.5, a[2] * 0.2))
                .collect()
        })
    }

    fn arb_box() -> impl Strategy<Value = OrientedBox3D> {
        (
            prop::array::uniform3(-1.0..1.0f64),
            0.05..1.5f64,
            0.05..1.5f64,
            0.05..1.5f64,
            0.0..180.0f64,
        )
            .prop_map(|(c, x, y, z, yaw)| {
                OrientedBox3D::new(Point3::new(c[0], c[1], c[2]), x, y, z, yaw)
            })
    }

    proptest! {
        #[test]
        fn crop_and_subtract_partition(pts in arb_points(), b in arb_box()) {
            let cloud = PointCloud::new(pts).unwrap();
            let inside = crop(&cloud, &b);
            let outside = subtract(&cloud, &[b]);
            prop_assert_eq!(inside.len() + outside.len(), cloud.len());
            prop_assert_eq!(count_in(&cloud, &b), inside.len());
            prop_assert!(outside.points().iter().all(|p| !b.contains(p)));
        }

        #[test]
        fn pca_frame_is_orthonormal_right_handed(pts in arb_points()) {
            let f = pca_points(&pts).unwrap();
            for i in 0..3 {
                prop_assert!((f.axes[i].norm() - 1.0).abs() < 1e-9);
                for j in (i + 1)..3 {
                    prop_assert!(f.axes[i].dot(&f.axes[j]).abs() < 1e-9);
                }
            }
            prop_assert!((f.axes[0].cross(&f.axes[1]).dot(&f.axes[2]) - 1.0).abs() < 1e-9);
            prop_assert!(f.sigma[0] >= f.sigma[1] && f.sigma[1] >= f.sigma[2] && f.sigma[2] >= 0.0);
        }
    }
}
