//! Complex-bilinear algebra, the minimal-ball norm, and point types for the
//! null cone and its unit-sphere slice.
//!
//! Conventions: `bilinear` is the non-Hermitian pairing `Σ z_j w_j`,
//! `hermitian` is `Σ z_j conj(w_j)`. The minimal-ball norm is
//! `N(z) = sqrt(|z|^2 + |z∙z|)` and the minimal ball is `{ N(z) < 1 }`.
//! Boundary points of the cone slice are encoded by an ordered pair of
//! orthonormal real vectors (x, y) via `z = (x + iy)/√2`, which satisfies
//! `z∙z = 0` and `|z| = 1`.

use num_complex::Complex64;
use thiserror::Error;

/// Relative tolerance for cone membership and frame orthonormality.
pub const CONE_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("point dimension must be >= 2, got {0}")]
    DimensionTooSmall(usize),
    #[error("point has a non-finite coordinate at index {0}")]
    NonFinite(usize),
    #[error("frame vector {name} is not unit length: |{name}| = {norm}")]
    NotUnit { name: &'static str, norm: f64 },
    #[error("frame vectors are not orthogonal: x·y = {dot}")]
    NotOrthogonal { dot: f64 },
    #[error("frame vectors have mismatched dimensions: {0} vs {1}")]
    FrameDimMismatch(usize, usize),
    #[error("radius must lie in (0, 1], got {0}")]
    RadiusOutOfRange(f64),
    #[error("point is not on the null cone: |z∙z|/|z|^2 = {defect}")]
    NotOnCone { defect: f64 },
    #[error("point is not inside the unit ball: |z| = {0}")]
    NotInBall(f64),
}

/// A complex n- or (n+1)-vector; the universal point type.
#[derive(Debug, Clone, PartialEq)]
pub struct CPoint {
    coords: Vec<Complex64>,
}

impl CPoint {
    pub fn new(coords: Vec<Complex64>) -> Result<Self, GeometryError> {
        if coords.len() < 2 {
            return Err(GeometryError::DimensionTooSmall(coords.len()));
        }
        for (i, c) in coords.iter().enumerate() {
            if !c.re.is_finite() || !c.im.is_finite() {
                return Err(GeometryError::NonFinite(i));
            }
        }
        Ok(CPoint { coords })
    }

    pub fn from_real(xs: &[f64]) -> Result<Self, GeometryError> {
        Self::new(xs.iter().map(|&x| Complex64::new(x, 0.0)).collect())
    }

    pub fn zero(dim: usize) -> Self {
        assert!(dim >= 2);
        CPoint {
            coords: vec![Complex64::new(0.0, 0.0); dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn coords(&self) -> &[Complex64] {
        &self.coords
    }

    pub fn coord(&self, i: usize) -> Complex64 {
        self.coords[i]
    }

    /// Euclidean norm |z|.
    pub fn norm(&self) -> f64 {
        self.coords.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn scale(&self, a: Complex64) -> CPoint {
        CPoint {
            coords: self.coords.iter().map(|c| c * a).collect(),
        }
    }

    /// Drops the last coordinate: (z_1, ..., z_{n+1}) -> (z_1, ..., z_n).
    pub fn truncate(&self) -> CPoint {
        assert!(self.dim() >= 3, "cannot truncate below dimension 2");
        CPoint {
            coords: self.coords[..self.dim() - 1].to_vec(),
        }
    }
}

/// Non-Hermitian pairing z∙w = Σ z_j w_j (no conjugation).
///
/// Panics on dimension mismatch.
pub fn bilinear(z: &CPoint, w: &CPoint) -> Complex64 {
    assert_eq!(
        z.dim(),
        w.dim(),
        "bilinear pairing requires equal dimensions"
    );
    z.coords
        .iter()
        .zip(&w.coords)
        .map(|(a, b)| a * b)
        .sum()
}

/// Hermitian pairing Σ z_j conj(w_j).
///
/// Panics on dimension mismatch.
pub fn hermitian(z: &CPoint, w: &CPoint) -> Complex64 {
    assert_eq!(
        z.dim(),
        w.dim(),
        "hermitian pairing requires equal dimensions"
    );
    z.coords
        .iter()
        .zip(&w.coords)
        .map(|(a, b)| a * b.conj())
        .sum()
}

/// The minimal-ball norm N(z) = sqrt(|z|^2 + |z∙z|).
pub fn minimal_norm(z: &CPoint) -> f64 {
    let sq: f64 = z.coords.iter().map(|c| c.norm_sqr()).sum();
    (sq + bilinear(z, z).norm()).sqrt()
}

/// Membership in the open minimal ball, decided solely by N(z) < 1.
pub fn in_minimal_ball(z: &CPoint) -> bool {
    minimal_norm(z) < 1.0
}

/// An ordered pair of orthonormal real vectors in R^{n+1}, encoding the
/// boundary point z = (x + iy)/√2 of the cone slice.
#[derive(Debug, Clone)]
pub struct BoundaryFrame {
    x: Vec<f64>,
    y: Vec<f64>,
}

impl BoundaryFrame {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Result<Self, GeometryError> {
        if x.len() != y.len() {
            return Err(GeometryError::FrameDimMismatch(x.len(), y.len()));
        }
        let nx: f64 = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        let ny: f64 = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        if (nx - 1.0).abs() > CONE_TOL {
            return Err(GeometryError::NotUnit { name: "x", norm: nx });
        }
        if (ny - 1.0).abs() > CONE_TOL {
            return Err(GeometryError::NotUnit { name: "y", norm: ny });
        }
        let dot: f64 = x.iter().zip(&y).map(|(a, b)| a * b).sum();
        if dot.abs() > CONE_TOL {
            return Err(GeometryError::NotOrthogonal { dot });
        }
        Ok(BoundaryFrame { x, y })
    }

    pub fn dim(&self) -> usize {
        self.x.len()
    }

    /// The boundary point z = (x + iy)/√2.
    pub fn to_point(&self) -> CPoint {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        CPoint {
            coords: self
                .x
                .iter()
                .zip(&self.y)
                .map(|(&a, &b)| Complex64::new(a * s, b * s))
                .collect(),
        }
    }
}

/// A point of the cone slice: z on the null cone with |z| = t.
///
/// The radius may reach 1 (closure); interior membership is `is_interior`.
#[derive(Debug, Clone)]
pub struct ManifoldPoint {
    point: CPoint,
    radius: f64,
}

impl ManifoldPoint {
    /// Validates cone membership (relative tolerance on |z∙z|/|z|^2) and the
    /// radius range (0, 1].
    pub fn new(point: CPoint) -> Result<Self, GeometryError> {
        let t = point.norm();
        if !(t > 0.0 && t <= 1.0) {
            return Err(GeometryError::RadiusOutOfRange(t));
        }
        let defect = bilinear(&point, &point).norm() / (t * t);
        if defect > CONE_TOL {
            return Err(GeometryError::NotOnCone { defect });
        }
        Ok(ManifoldPoint { point, radius: t })
    }

    pub fn point(&self) -> &CPoint {
        &self.point
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn is_interior(&self) -> bool {
        self.radius < 1.0
    }
}

/// z = t·(x+iy)/√2 for a boundary frame and a radius t in (0, 1].
pub fn frame_to_point(frame: &BoundaryFrame, t: f64) -> Result<ManifoldPoint, GeometryError> {
    if !(t > 0.0 && t <= 1.0) {
        return Err(GeometryError::RadiusOutOfRange(t));
    }
    let z = frame.to_point().scale(Complex64::new(t, 0.0));
    Ok(ManifoldPoint { point: z, radius: t })
}

/// The coordinate map F(z) = (z_1, ..., z_n) from the cone slice into the
/// minimal ball. On the cone, N(F(z))^2 = |z|^2, so the image radius equals
/// the cone radius.
pub fn project_to_ball(m: &ManifoldPoint) -> CPoint {
    m.point.truncate()
}
