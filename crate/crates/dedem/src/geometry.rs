//! Crack and interface geometry: signed distance queries on polylines and
//! the discontinuity embeddings appended to the network input.
//!
//! A crack carries a strong (jump) embedding `relu(psi)^2 * sgn(phi)` built
//! from the normal SDF `phi` and the tip-tangential SDFs `psi`; a material
//! interface carries the weak (ramp) embedding `|phi|`. Both come with exact
//! analytic spatial gradients.

use crate::scalar::{sgn, Scalar};
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

/// 2D point / vector in meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point2<T> {
    pub x1: T,
    pub x2: T,
}

impl<T: Scalar> Point2<T> {
    pub fn new(x1: T, x2: T) -> Self {
        Point2 { x1, x2 }
    }

    pub fn dot(self, o: Self) -> T {
        self.x1 * o.x1 + self.x2 * o.x2
    }

    pub fn norm(self) -> T {
        self.dot(self).sqrt()
    }

    /// Left-hand perpendicular (rotation by +90 degrees).
    pub fn perp_left(self) -> Self {
        Point2::new(-self.x2, self.x1)
    }

    pub fn normalized(self) -> Self {
        let n = self.norm();
        Point2::new(self.x1 / n, self.x2 / n)
    }

    pub fn as_array(self) -> [T; 2] {
        [self.x1, self.x2]
    }
}

impl<T: Scalar> Add for Point2<T> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Point2::new(self.x1 + o.x1, self.x2 + o.x2)
    }
}

impl<T: Scalar> Sub for Point2<T> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Point2::new(self.x1 - o.x1, self.x2 - o.x2)
    }
}

impl<T: Scalar> Mul<T> for Point2<T> {
    type Output = Self;
    fn mul(self, s: T) -> Self {
        Point2::new(self.x1 * s, self.x2 * s)
    }
}

impl<T: Scalar> Neg for Point2<T> {
    type Output = Self;
    fn neg(self) -> Self {
        Point2::new(-self.x1, -self.x2)
    }
}

impl<T: Scalar> fmt::Display for Point2<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.x1, self.x2)
    }
}

/// Axis-aligned rectangle (the computational domain), in meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect<T> {
    pub x_min: T,
    pub x_max: T,
    pub y_min: T,
    pub y_max: T,
}

impl<T: Scalar> Rect<T> {
    pub fn new(x_min: T, x_max: T, y_min: T, y_max: T) -> Self {
        Rect {
            x_min,
            x_max,
            y_min,
            y_max,
        }
    }

    pub fn width(&self) -> T {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> T {
        self.y_max - self.y_min
    }

    pub fn area(&self) -> T {
        self.width() * self.height()
    }

    pub fn diag(&self) -> T {
        (self.width() * self.width() + self.height() * self.height()).sqrt()
    }

    pub fn contains(&self, p: Point2<T>, tol: T) -> bool {
        p.x1 >= self.x_min - tol
            && p.x1 <= self.x_max + tol
            && p.x2 >= self.y_min - tol
            && p.x2 <= self.y_max + tol
    }

    /// Distance from `p` to the rectangle's boundary (zero outside too).
    pub fn boundary_distance(&self, p: Point2<T>) -> T {
        let dx = (p.x1 - self.x_min).abs().min((self.x_max - p.x1).abs());
        let dy = (p.x2 - self.y_min).abs().min((self.y_max - p.x2).abs());
        dx.min(dy)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum GeometryError {
    InvalidCrack(String),
    InvalidInterface(String),
    NotATip(String),
}

impl fmt::Display for GeometryError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GeometryError::InvalidCrack(m) => write!(f, "invalid crack: {m}"),
            GeometryError::InvalidInterface(m) => write!(f, "invalid interface: {m}"),
            GeometryError::NotATip(m) => write!(f, "endpoint is not a tip: {m}"),
        }
    }
}

impl std::error::Error for GeometryError {}

/// Which end of a crack polyline.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TipEnd {
    Start,
    End,
}

/// Open polyline describing a crack. Endpoints that terminate inside the
/// domain are tips; an endpoint resting on the outer boundary is not.
#[derive(Debug, Clone, PartialEq)]
pub struct CrackPath<T> {
    pub vertices: Vec<Point2<T>>,
    pub start_is_tip: bool,
    pub end_is_tip: bool,
}

impl<T: Scalar> CrackPath<T> {
    pub fn new(
        vertices: Vec<Point2<T>>,
        start_is_tip: bool,
        end_is_tip: bool,
    ) -> Result<Self, GeometryError> {
        let path = CrackPath {
            vertices,
            start_is_tip,
            end_is_tip,
        };
        path.validate()?;
        Ok(path)
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        if self.vertices.len() < 2 {
            return Err(GeometryError::InvalidCrack(
                "needs at least two vertices".to_owned(),
            ));
        }
        for w in self.vertices.windows(2) {
            if (w[1] - w[0]).norm() == T::zero() {
                return Err(GeometryError::InvalidCrack(format!(
                    "consecutive vertices coincide at {}",
                    w[0]
                )));
            }
        }
        if !self.start_is_tip && !self.end_is_tip {
            // A through crack: both ends on the boundary. Allowed.
        }
        let n = self.vertices.len() - 1;
        for i in 0..n {
            for j in (i + 1)..n {
                let adjacent = j == i + 1;
                if segments_cross(
                    self.vertices[i],
                    self.vertices[i + 1],
                    self.vertices[j],
                    self.vertices[j + 1],
                    adjacent,
                ) {
                    return Err(GeometryError::InvalidCrack(format!(
                        "segments {i} and {j} intersect"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn tip_count(&self) -> usize {
        usize::from(self.start_is_tip) + usize::from(self.end_is_tip)
    }

    pub fn tip_point(&self, which: TipEnd) -> Point2<T> {
        match which {
            TipEnd::Start => self.vertices[0],
            TipEnd::End => *self.vertices.last().unwrap(),
        }
    }

    /// Unit tangent of the tip's segment pointing out of the crack.
    pub fn tip_tangent(&self, which: TipEnd) -> Point2<T> {
        match which {
            TipEnd::Start => (self.vertices[0] - self.vertices[1]).normalized(),
            TipEnd::End => {
                let n = self.vertices.len();
                (self.vertices[n - 1] - self.vertices[n - 2]).normalized()
            }
        }
    }

    pub fn total_length(&self) -> T {
        self.vertices
            .windows(2)
            .fold(T::zero(), |acc, w| acc + (w[1] - w[0]).norm())
    }

    /// Tips actually flagged on this path, in (start, end) order.
    pub fn tips(&self) -> Vec<TipEnd> {
        let mut v = Vec::new();
        if self.start_is_tip {
            v.push(TipEnd::Start);
        }
        if self.end_is_tip {
            v.push(TipEnd::End);
        }
        v
    }
}

/// True when two segments touch anywhere they should not. Adjacent segments
/// legitimately share one endpoint; a fold-back onto the previous segment is
/// still rejected.
fn segments_cross<T: Scalar>(
    a0: Point2<T>,
    a1: Point2<T>,
    b0: Point2<T>,
    b1: Point2<T>,
    adjacent: bool,
) -> bool {
    let orient = |p: Point2<T>, q: Point2<T>, r: Point2<T>| -> T {
        (q.x1 - p.x1) * (r.x2 - p.x2) - (q.x2 - p.x2) * (r.x1 - p.x1)
    };
    let on_segment = |p: Point2<T>, q: Point2<T>, r: Point2<T>| -> bool {
        r.x1 <= p.x1.max(q.x1)
            && r.x1 >= p.x1.min(q.x1)
            && r.x2 <= p.x2.max(q.x2)
            && r.x2 >= p.x2.min(q.x2)
    };
    if adjacent {
        // a1 == b0 by construction. Reject only if b1 folds back onto [a0, a1].
        let o = orient(a0, a1, b1);
        if o != T::zero() {
            return false;
        }
        return on_segment(a0, a1, b1) || on_segment(b0, b1, a0);
    }
    let o1 = orient(a0, a1, b0);
    let o2 = orient(a0, a1, b1);
    let o3 = orient(b0, b1, a0);
    let o4 = orient(b0, b1, a1);
    if ((o1 > T::zero()) != (o2 > T::zero()) || o1 == T::zero() || o2 == T::zero())
        && ((o3 > T::zero()) != (o4 > T::zero()) || o3 == T::zero() || o4 == T::zero())
    {
        // Proper or touching intersection, modulo collinear-disjoint cases.
        let collinear_disjoint = o1 == T::zero()
            && o2 == T::zero()
            && !on_segment(a0, a1, b0)
            && !on_segment(a0, a1, b1)
            && !on_segment(b0, b1, a0);
        return !collinear_disjoint;
    }
    false
}

/// Material interface supporting the weak (ramp) embedding.
#[derive(Debug, Clone, PartialEq)]
pub enum InterfaceShape<T> {
    /// Straight line through `point` with unit `normal`; the signed distance
    /// is positive on the normal side.
    Line { point: Point2<T>, normal: Point2<T> },
    /// Circle; the signed distance is positive outside.
    Circle { center: Point2<T>, radius: T },
}

impl<T: Scalar> InterfaceShape<T> {
    pub fn validate(&self) -> Result<(), GeometryError> {
        match self {
            InterfaceShape::Line { normal, .. } => {
                let len = normal.norm();
                if (len - T::one()).abs() > T::c(1e-12) {
                    return Err(GeometryError::InvalidInterface(format!(
                        "normal must have unit length, got {len}"
                    )));
                }
            }
            InterfaceShape::Circle { radius, .. } => {
                if *radius <= T::zero() {
                    return Err(GeometryError::InvalidInterface(
                        "radius must be positive".to_owned(),
                    ));
                }
            }
        }
        Ok(())
    }

    /// Signed distance and its gradient. On the zero set the gradient falls
    /// back to the shape normal.
    pub fn signed_distance(&self, x: Point2<T>) -> (T, Point2<T>) {
        match self {
            InterfaceShape::Line { point, normal } => ((x - *point).dot(*normal), *normal),
            InterfaceShape::Circle { center, radius } => {
                let d = x - *center;
                let dist = d.norm();
                if dist == T::zero() {
                    // Center of the circle: any direction works; pick +x1.
                    (-*radius, Point2::new(T::one(), T::zero()))
                } else {
                    (dist - *radius, d * dist.recip())
                }
            }
        }
    }
}

/// One discontinuity tracked by the solver.
#[derive(Debug, Clone, PartialEq)]
pub enum EmbeddingSpec<T> {
    Strong { id: String, path: CrackPath<T> },
    Weak { id: String, shape: InterfaceShape<T> },
}

impl<T: Scalar> EmbeddingSpec<T> {
    pub fn id(&self) -> &str {
        match self {
            EmbeddingSpec::Strong { id, .. } | EmbeddingSpec::Weak { id, .. } => id,
        }
    }

    /// Power of length carried by this embedding's value; used by the
    /// optional input normalization.
    pub fn length_power(&self) -> i32 {
        match self {
            EmbeddingSpec::Strong { path, .. } => 2 * path.tip_count() as i32,
            EmbeddingSpec::Weak { .. } => 1,
        }
    }
}

/// Evaluated embedding: value plus exact spatial gradient.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmbeddingValue<T> {
    pub value: T,
    pub gradient: [T; 2],
}

/// Signed distance to a crack polyline.
///
/// `|phi|` is the distance to the nearest point of the polyline and the sign
/// is taken from the left-hand normal of the nearest segment (positive to
/// the left of the traversal direction). Distance ties at shared vertices
/// resolve toward the earlier segment. The returned gradient is the unit
/// vector from the nearest point toward `x` times the sign; on the path it
/// degenerates to the segment normal.
pub fn sdf_polyline<T: Scalar>(x: Point2<T>, path: &CrackPath<T>) -> (T, Point2<T>) {
    let mut best_d2 = T::infinity();
    let mut best_closest = path.vertices[0];
    let mut best_normal = Point2::new(T::zero(), T::one());
    for w in path.vertices.windows(2) {
        let (a, b) = (w[0], w[1]);
        let ab = b - a;
        let t = ((x - a).dot(ab) / ab.dot(ab)).max(T::zero()).min(T::one());
        let closest = a + ab * t;
        let d2 = (x - closest).dot(x - closest);
        // Strict improvement keeps ties on the earlier segment.
        if d2 < best_d2 {
            best_d2 = d2;
            best_closest = closest;
            best_normal = ab.perp_left().normalized();
        }
    }
    let diff = x - best_closest;
    let dist = best_d2.sqrt();
    let sign = sgn(best_normal.dot(diff));
    if dist == T::zero() {
        (T::zero(), best_normal)
    } else {
        (sign * dist, diff * (sign / dist))
    }
}

/// Tangential tip SDF `psi = t . (x_tip - x)` with `t` the unit tangent of
/// the tip segment pointing out of the crack; positive on the crack side of
/// the tip plane, zero on it, negative ahead. Gradient is `-t`.
pub fn tip_tangential_sdf<T: Scalar>(
    x: Point2<T>,
    path: &CrackPath<T>,
    which: TipEnd,
) -> Result<(T, Point2<T>), GeometryError> {
    let is_tip = match which {
        TipEnd::Start => path.start_is_tip,
        TipEnd::End => path.end_is_tip,
    };
    if !is_tip {
        return Err(GeometryError::NotATip(format!("{which:?}")));
    }
    let t = path.tip_tangent(which);
    let psi = t.dot(path.tip_point(which) - x);
    Ok((psi, -t))
}

/// Strong-discontinuity embedding of a crack, with the side of the jump
/// optionally forced (used for nodes sitting exactly on the crack and for
/// crack-face evaluation). `force_side` of `+1`/`-1` replaces `sgn(phi)`.
pub fn strong_embedding_sided<T: Scalar>(
    x: Point2<T>,
    path: &CrackPath<T>,
    force_side: Option<i8>,
) -> EmbeddingValue<T> {
    let side = match force_side {
        Some(s) => {
            if s >= 0 {
                T::one()
            } else {
                -T::one()
            }
        }
        None => {
            let (phi, _) = sdf_polyline(x, path);
            sgn(phi)
        }
    };
    // d(sgn)/dx is taken as zero everywhere; the jump lives in the sign.
    match path.tip_count() {
        0 => EmbeddingValue {
            value: side,
            gradient: [T::zero(); 2],
        },
        1 => {
            let which = if path.start_is_tip { TipEnd::Start } else { TipEnd::End };
            let (psi, dpsi) = tip_tangential_sdf(x, path, which).unwrap();
            let r = psi.max(T::zero());
            let two = T::one() + T::one();
            EmbeddingValue {
                value: side * r * r,
                gradient: [side * two * r * dpsi.x1, side * two * r * dpsi.x2],
            }
        }
        _ => {
            let (psi1, d1) = tip_tangential_sdf(x, path, TipEnd::Start).unwrap();
            let (psi2, d2) = tip_tangential_sdf(x, path, TipEnd::End).unwrap();
            let p = psi1 * psi2;
            let r = p.max(T::zero());
            let two = T::one() + T::one();
            // Exact derivative of relu(psi1 psi2)^2:
            //   2 relu(psi1 psi2) (psi2 grad psi1 + psi1 grad psi2)
            let gate = if p > T::zero() { T::one() } else { T::zero() };
            let gx = psi2 * d1.x1 + psi1 * d2.x1;
            let gy = psi2 * d1.x2 + psi1 * d2.x2;
            EmbeddingValue {
                value: side * r * r,
                gradient: [side * two * r * gate * gx, side * two * r * gate * gy],
            }
        }
    }
}

/// Strong embedding with the side taken from `sgn(phi)` at `x`.
pub fn strong_embedding<T: Scalar>(x: Point2<T>, path: &CrackPath<T>) -> EmbeddingValue<T> {
    strong_embedding_sided(x, path, None)
}

/// Weak-discontinuity (ramp) embedding `|phi|` of a material interface.
pub fn weak_embedding<T: Scalar>(x: Point2<T>, shape: &InterfaceShape<T>) -> EmbeddingValue<T> {
    let (phi, grad) = shape.signed_distance(x);
    let s = sgn(phi);
    EmbeddingValue {
        value: phi.abs(),
        gradient: [s * grad.x1, s * grad.x2],
    }
}

/// Evaluate one spec, honoring a forced crack side where given.
pub fn embedding_value<T: Scalar>(
    x: Point2<T>,
    spec: &EmbeddingSpec<T>,
    force_side: Option<i8>,
) -> EmbeddingValue<T> {
    match spec {
        EmbeddingSpec::Strong { path, .. } => strong_embedding_sided(x, path, force_side),
        EmbeddingSpec::Weak { shape, .. } => weak_embedding(x, shape),
    }
}

/// Augmented network input `(x1, x2, g_1, .., g_n)` and its Jacobian with
/// respect to `(x1, x2)`: identity block on top, one `grad g_k` row per
/// embedding below. `sides` optionally forces the crack side per spec
/// (parallel to `specs`; `0` means "use sgn(phi)").
pub fn embed_inputs<T: Scalar>(
    x: Point2<T>,
    specs: &[EmbeddingSpec<T>],
    sides: Option<&[i8]>,
    scale: Option<&[T]>,
) -> (Vec<T>, Vec<[T; 2]>) {
    let n = specs.len();
    let mut aug = Vec::with_capacity(2 + n);
    let mut jac = Vec::with_capacity(2 + n);
    aug.push(x.x1);
    aug.push(x.x2);
    jac.push([T::one(), T::zero()]);
    jac.push([T::zero(), T::one()]);
    for (k, spec) in specs.iter().enumerate() {
        let side = sides.and_then(|s| if s[k] == 0 { None } else { Some(s[k]) });
        let ev = embedding_value(x, spec, side);
        let sc = scale.map(|s| s[k]).unwrap_or_else(T::one);
        aug.push(ev.value * sc);
        jac.push([ev.gradient[0] * sc, ev.gradient[1] * sc]);
    }
    (aug, jac)
}
