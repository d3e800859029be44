//! A-priori geometric target models and body-fixed virtual points.

use std::path::Path;

use nalgebra::{DMatrix, Matrix3, Rotation3, Unit, Vector3};
use serde::{Deserialize, Serialize};

use crate::camera::{RigidTransform, WorldPoint};
use crate::error::{Error, Result};
use crate::pose::KinematicParams;

/// Distance under which two points are considered the same, in millimeters.
pub const SYMMETRY_TOLERANCE_MM: f64 = 1e-6;
/// Default angular sampling of the symmetry search, in degrees.
pub const DEFAULT_SYMMETRY_STEP_DEG: f64 = 1.0;

/// Target-frame offset of a virtual body point, in millimeters.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BodyOffset(pub Vector3<f64>);

impl BodyOffset {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Self(Vector3::new(x, y, z))
    }

    pub fn homogeneous(&self) -> nalgebra::Vector4<f64> {
        self.0.push(1.0)
    }
}

/// Rigid feature layout `G` (n x 3, target frame, millimeters).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TargetFile", into = "TargetFile")]
pub struct GeometricTargetModel {
    name: String,
    points: Vec<WorldPoint>,
    virtual_offset: BodyOffset,
}

#[derive(Serialize, Deserialize)]
struct TargetFile {
    name: String,
    points_mm: Vec<[f64; 3]>,
    #[serde(default)]
    virtual_offset_mm: [f64; 3],
}

impl TryFrom<TargetFile> for GeometricTargetModel {
    type Error = Error;

    fn try_from(f: TargetFile) -> Result<Self> {
        let points = f.points_mm.iter().map(|p| WorldPoint::new(p[0], p[1], p[2])).collect();
        let off = f.virtual_offset_mm;
        Self::new(f.name, points, BodyOffset::new(off[0], off[1], off[2]))
    }
}

impl From<GeometricTargetModel> for TargetFile {
    fn from(m: GeometricTargetModel) -> Self {
        Self {
            name: m.name,
            points_mm: m.points.iter().map(|p| [p.x, p.y, p.z]).collect(),
            virtual_offset_mm: m.virtual_offset.0.into(),
        }
    }
}

impl GeometricTargetModel {
    /// Validated model: shape checks plus the asymmetry requirement.
    pub fn new(name: impl Into<String>, points: Vec<WorldPoint>, virtual_offset: BodyOffset) -> Result<Self> {
        let model = Self::with_shape(name, points, virtual_offset)?;
        validate_asymmetry(&model, DEFAULT_SYMMETRY_STEP_DEG)?;
        Ok(model)
    }

    /// Checks point count, finiteness and non-collinearity only.
    pub fn with_shape(name: impl Into<String>, points: Vec<WorldPoint>, virtual_offset: BodyOffset) -> Result<Self> {
        let name = name.into();
        if points.len() < 4 {
            return Err(Error::InvalidModel(format!(
                "'{name}' has {} features, need at least 4",
                points.len()
            )));
        }
        if points.iter().any(|p| !p.coords.iter().all(|v| v.is_finite()))
            || !virtual_offset.0.iter().all(|v| v.is_finite())
        {
            return Err(Error::InvalidModel(format!("'{name}' has non-finite coordinates")));
        }
        let sv = centered_matrix(&points).singular_values();
        let mut sv: Vec<f64> = sv.iter().copied().collect();
        sv.sort_by(|a, b| b.total_cmp(a));
        if sv[1] <= 1e-9 * sv[0].max(1e-300) {
            return Err(Error::InvalidModel(format!("'{name}' features are collinear")));
        }
        Ok(Self {
            name,
            points,
            virtual_offset,
        })
    }

    /// `rows x cols` junction grid at `pitch_mm` in the `Z = 0` plane, minus one grid node.
    pub fn grid(
        name: impl Into<String>,
        rows: usize,
        cols: usize,
        pitch_mm: f64,
        missing: (usize, usize),
        virtual_offset: BodyOffset,
    ) -> Result<Self> {
        let points = (0..rows)
            .flat_map(|r| (0..cols).map(move |c| (r, c)))
            .filter(|&rc| rc != missing)
            .map(|(r, c)| WorldPoint::new(c as f64 * pitch_mm, r as f64 * pitch_mm, 0.0))
            .collect();
        Self::new(name, points, virtual_offset)
    }

    /// Upper-trunk target: 4x4 grid at 20 mm, last corner removed; tracks its origin.
    pub fn shoulder() -> Self {
        Self::grid("shoulder", 4, 4, 20.0, (3, 3), BodyOffset::default()).expect("valid default model")
    }

    /// Lower-trunk target: 4x4 grid at 20 mm, last corner removed; tracks a point
    /// 100 mm along the target normal into the body.
    pub fn lumbar() -> Self {
        Self::grid("lumbar", 4, 4, 20.0, (3, 3), BodyOffset::new(0.0, 0.0, 100.0)).expect("valid default model")
    }

    /// Built-in models by name.
    pub fn builtin(name: &str) -> Option<Self> {
        match name {
            "shoulder" => Some(Self::shoulder()),
            "lumbar" => Some(Self::lumbar()),
            _ => None,
        }
    }

    /// A built-in name, or a JSON file path resolved against `base_dir`.
    pub fn resolve(reference: &str, base_dir: Option<&Path>) -> Result<Self> {
        if let Some(m) = Self::builtin(reference) {
            return Ok(m);
        }
        let path = Path::new(reference);
        match base_dir {
            Some(dir) if path.is_relative() => Self::load(dir.join(path)),
            _ => Self::load(path),
        }
    }

    pub fn library() -> Vec<Self> {
        vec![Self::shoulder(), Self::lumbar()]
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::format(path, e))
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn points(&self) -> &[WorldPoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn virtual_offset(&self) -> BodyOffset {
        self.virtual_offset
    }

    pub fn centroid(&self) -> WorldPoint {
        centroid(&self.points)
    }

    /// Transform taking target coordinates onto a frame where every feature has
    /// `Z = 0`, if the features are coplanar within `tol` millimeters.
    pub fn plane_frame(&self, tol: f64) -> Option<RigidTransform> {
        if self.points.iter().all(|p| p.z.abs() <= tol) {
            return Some(RigidTransform::identity());
        }
        let c = self.centroid();
        let (normal, spread) = plane_normal(&self.points);
        if spread > tol {
            return None;
        }
        // Rows of the rotation are the plane axes expressed in target coordinates.
        let seed = if normal.x.abs() < 0.9 { Vector3::x() } else { Vector3::y() };
        let e1 = (seed - normal * normal.dot(&seed)).normalize();
        let e2 = normal.cross(&e1);
        let r = Matrix3::from_rows(&[e1.transpose(), e2.transpose(), normal.transpose()]);
        RigidTransform::new(r, -(r * c.coords)).ok()
    }
}

fn centroid(points: &[WorldPoint]) -> WorldPoint {
    let sum = points.iter().fold(Vector3::zeros(), |acc, p| acc + p.coords);
    WorldPoint::from(sum / points.len() as f64)
}

fn centered_matrix(points: &[WorldPoint]) -> DMatrix<f64> {
    let c = centroid(points);
    DMatrix::from_fn(points.len(), 3, |i, j| points[i][j] - c[j])
}

/// Unit normal of the best-fit plane and the largest distance of a point from it.
fn plane_normal(points: &[WorldPoint]) -> (Vector3<f64>, f64) {
    let c = centroid(points);
    let mut scatter = Matrix3::zeros();
    for p in points {
        let d = p - c;
        scatter += d * d.transpose();
    }
    let eig = scatter.symmetric_eigen();
    let (imin, _) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("three eigenvalues");
    let n = eig.eigenvectors.column(imin).into_owned().normalize();
    let spread = points.iter().map(|p| (p - c).dot(&n).abs()).fold(0.0, f64::max);
    (n, spread)
}

/// Proper rotations mapping the cube onto itself (signed permutation matrices, det +1).
fn cube_rotations() -> Vec<Matrix3<f64>> {
    let perms = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
    let mut out = Vec::with_capacity(24);
    for p in perms {
        for signs in 0..8u8 {
            let mut m = Matrix3::zeros();
            for (row, &col) in p.iter().enumerate() {
                m[(row, col)] = if signs & (1 << row) != 0 { -1.0 } else { 1.0 };
            }
            if m.determinant() > 0.0 {
                out.push(m);
            }
        }
    }
    out
}

fn maps_onto_itself(centered: &[Vector3<f64>], r: &Matrix3<f64>) -> bool {
    let mut used = vec![false; centered.len()];
    'points: for p in centered {
        let q = r * p;
        for (j, c) in centered.iter().enumerate() {
            if !used[j] && (q - c).norm() <= SYMMETRY_TOLERANCE_MM {
                used[j] = true;
                continue 'points;
            }
        }
        return false;
    }
    true
}

fn describe(r: &Matrix3<f64>) -> String {
    let rot = Rotation3::from_matrix_unchecked(*r);
    match rot.axis_angle() {
        Some((axis, angle)) => format!(
            "rotation by {:.1} deg about ({:.3}, {:.3}, {:.3})",
            angle.to_degrees(),
            axis.x,
            axis.y,
            axis.z
        ),
        None => "identity".into(),
    }
}

/// Rejects models whose feature set is invariant under a non-trivial rotation
/// about its centroid, since such a target has no unique orientation.
///
/// For coplanar targets only rotations about the plane normal are searched
/// (the back of a target is never imaged); otherwise the 24 cube rotations plus
/// rotations about each model axis are. Rotation angles are sampled at
/// `grid_step_deg`, so the check is sound for the sampled set only.
pub fn validate_asymmetry(model: &GeometricTargetModel, grid_step_deg: f64) -> Result<()> {
    if !(grid_step_deg > 0.0) || grid_step_deg > 180.0 {
        return Err(Error::InvalidParameter(format!(
            "symmetry grid step must be in (0, 180] degrees, got {grid_step_deg}"
        )));
    }
    let c = model.centroid();
    let centered: Vec<Vector3<f64>> = model.points.iter().map(|p| p - c).collect();
    let (normal, spread) = plane_normal(&model.points);

    let mut axes: Vec<Unit<Vector3<f64>>> = Vec::new();
    let mut candidates: Vec<Matrix3<f64>> = Vec::new();
    if spread <= SYMMETRY_TOLERANCE_MM {
        axes.push(Unit::new_normalize(normal));
    } else {
        axes.extend([Vector3::x_axis(), Vector3::y_axis(), Vector3::z_axis()]);
        candidates.extend(
            cube_rotations()
                .into_iter()
                .filter(|m| (m - Matrix3::identity()).amax() > 0.5),
        );
    }
    let steps = (360.0 / grid_step_deg).ceil() as usize;
    for axis in &axes {
        for quarter in [90.0f64, 180.0, 270.0] {
            candidates.push(*Rotation3::from_axis_angle(axis, quarter.to_radians()).matrix());
        }
        for k in 1..steps {
            let deg = k as f64 * grid_step_deg;
            if deg >= 360.0 - 1e-9 {
                break;
            }
            candidates.push(*Rotation3::from_axis_angle(axis, deg.to_radians()).matrix());
        }
    }

    match candidates.iter().find(|r| maps_onto_itself(&centered, r)) {
        Some(r) => Err(Error::AmbiguousTarget {
            name: model.name.clone(),
            symmetry: describe(r),
        }),
        None => Ok(()),
    }
}

/// Camera-frame position of a body-fixed point: the first three rows of `M_Θ (δ, 1)`.
pub fn virtual_point(theta: &KinematicParams, delta: &BodyOffset) -> WorldPoint {
    theta.transform_point(&WorldPoint::from(delta.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn square(displace: f64) -> GeometricTargetModel {
        let pts = vec![
            WorldPoint::new(0.0, 0.0, 0.0),
            WorldPoint::new(20.0, 0.0, 0.0),
            WorldPoint::new(20.0, 20.0, 0.0),
            WorldPoint::new(0.0, 20.0 + displace, 0.0),
        ];
        GeometricTargetModel::with_shape("square", pts, BodyOffset::default()).unwrap()
    }

    #[test]
    fn square_is_ambiguous() {
        let err = validate_asymmetry(&square(0.0), 1.0).unwrap_err();
        match err {
            Error::AmbiguousTarget { symmetry, .. } => assert!(symmetry.contains("90.0"), "{symmetry}"),
            e => panic!("unexpected {e:?}"),
        }
    }

    #[test]
    fn displaced_corner_breaks_symmetry() {
        assert!(validate_asymmetry(&square(5.0), 1.0).is_ok());
    }

    #[test]
    fn library_models_are_asymmetric() {
        for m in GeometricTargetModel::library() {
            assert_eq!(m.len(), 15);
            validate_asymmetry(&m, 1.0).unwrap();
        }
    }

    #[test]
    fn full_grid_is_rejected() {
        let pts: Vec<_> = (0..16)
            .map(|i| WorldPoint::new((i % 4) as f64 * 20.0, (i / 4) as f64 * 20.0, 0.0))
            .collect();
        let r = GeometricTargetModel::new("full", pts, BodyOffset::default());
        assert!(matches!(r, Err(Error::AmbiguousTarget { .. })));
    }

    #[test]
    fn cube_corners_are_rejected() {
        let pts: Vec<_> = (0..8)
            .map(|i| WorldPoint::new((i & 1) as f64 * 10.0, ((i >> 1) & 1) as f64 * 10.0, ((i >> 2) & 1) as f64 * 10.0))
            .collect();
        let m = GeometricTargetModel::with_shape("cube", pts, BodyOffset::default()).unwrap();
        assert!(validate_asymmetry(&m, 1.0).is_err());
    }

    #[test]
    fn shape_checks() {
        let few = vec![WorldPoint::origin(); 3];
        assert!(GeometricTargetModel::with_shape("x", few, BodyOffset::default()).is_err());
        let line: Vec<_> = (0..5).map(|i| WorldPoint::new(i as f64, 2.0 * i as f64, 0.0)).collect();
        assert!(GeometricTargetModel::with_shape("x", line, BodyOffset::default()).is_err());
    }

    #[test]
    fn json_round_trip_and_validation() {
        let m = GeometricTargetModel::lumbar();
        let s = serde_json::to_string(&m).unwrap();
        assert!(s.contains("\"points_mm\"") && s.contains("\"virtual_offset_mm\":[0.0,0.0,100.0]"));
        let back: GeometricTargetModel = serde_json::from_str(&s).unwrap();
        assert_eq!(back, m);
        let sym = r#"{"name":"sq","points_mm":[[0,0,0],[1,0,0],[1,1,0],[0,1,0]]}"#;
        assert!(serde_json::from_str::<GeometricTargetModel>(sym).is_err());
    }

    #[test]
    fn tilted_plane_frame_flattens_points() {
        let base = GeometricTargetModel::shoulder();
        let t = KinematicParams::new([0.3, 0.2, -0.4, 10.0, -5.0, 3.0]).unwrap();
        let pts = base.points().iter().map(|p| t.transform_point(p)).collect();
        let m = GeometricTargetModel::with_shape("tilted", pts, BodyOffset::default()).unwrap();
        let frame = m.plane_frame(1e-6).unwrap();
        for p in m.points() {
            assert!(frame.apply(p).z.abs() < 1e-9);
        }
    }

    #[test]
    fn virtual_point_examples() {
        let delta = BodyOffset::new(0.0, 0.0, 100.0);
        let p = virtual_point(&KinematicParams::zero(), &delta);
        assert_eq!(p, WorldPoint::new(0.0, 0.0, 100.0));
        let shifted = KinematicParams::new([0.0, 0.0, 0.0, 5.0, -3.0, 7.0]).unwrap();
        assert_eq!(virtual_point(&shifted, &delta), WorldPoint::new(5.0, -3.0, 107.0));
        let yaw = KinematicParams::new([std::f64::consts::FRAC_PI_2, 0.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
        let p = virtual_point(&yaw, &BodyOffset::new(100.0, 0.0, 0.0));
        assert!((p - WorldPoint::new(0.0, 100.0, 0.0)).norm() < 1e-12);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(256))]

        #[test]
        fn zero_offset_is_translation(a in -1.0..1.0f64, b in -1.0..1.0f64, c in -1.0..1.0f64,
                                      x in -500.0..500.0f64, y in -500.0..500.0f64, z in 0.0..2000.0f64) {
            let t = KinematicParams::new([a, b, c, x, y, z]).unwrap();
            let p = virtual_point(&t, &BodyOffset::default());
            prop_assert_eq!(p.coords, t.translation());
        }

        #[test]
        fn rigid_motion_preserves_distances(a in -3.0..3.0f64, b in -1.5..1.5f64, c in -3.0..3.0f64,
                                             x in -500.0..500.0f64, y in -500.0..500.0f64, z in 0.0..2000.0f64) {
            let t = KinematicParams::new([a, b, c, x, y, z]).unwrap();
            let m = GeometricTargetModel::lumbar();
            let moved: Vec<_> = m.points().iter().map(|p| t.transform_point(p)).collect();
            for i in 0..m.len() {
                for j in i + 1..m.len() {
                    let d0 = (m.points()[i] - m.points()[j]).norm();
                    let d1 = (moved[i] - moved[j]).norm();
                    prop_assert!((d0 - d1).abs() < 1e-9);
                }
            }
        }
    }
}
