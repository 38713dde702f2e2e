//! Composite-trapezoid quadrature on the rectangular domain: tensor grids,
//! tip-refined subdivision, crack-aware node labeling and 1D boundary /
//! crack-face rules.
//!
//! Weights are untruncated trapezoid weights, so every transformation here
//! conserves the total measure to rounding. Nodes that fall exactly on a
//! crack are split into a +/- replica pair (half weight each, shifted a hair
//! off the crack along its normal) so the jump embedding is single-valued at
//! every node.

use crate::geometry::{sdf_polyline, CrackPath, Point2, Rect};
use crate::scalar::{sgn, Scalar};
use std::collections::HashMap;
use std::fmt;

/// Relative (to the domain diagonal) distance below which a node counts as
/// lying on a crack.
pub const ON_CRACK_REL_TOL: f64 = 1e-12;
/// Relative offset used when splitting an on-crack node into side replicas.
pub const SIDE_SPLIT_REL_OFFSET: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub enum QuadError {
    Degenerate(String),
    Mismatch(String),
}

impl fmt::Display for QuadError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            QuadError::Degenerate(m) => write!(f, "degenerate grid: {m}"),
            QuadError::Mismatch(m) => write!(f, "sample mismatch: {m}"),
        }
    }
}

impl std::error::Error for QuadError {}

/// One interior quadrature node. `sides` holds the per-crack sign labels
/// (+1/-1) once [`crack_aware_relabel`] has run; before that it is empty.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadNode<T> {
    pub point: Point2<T>,
    pub weight: T,
    pub sides: Vec<i8>,
}

/// Domain edge carrying a prescribed traction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Edge {
    Left,
    Right,
    Bottom,
    Top,
}

impl Edge {
    pub fn name(self) -> &'static str {
        match self {
            Edge::Left => "left",
            Edge::Right => "right",
            Edge::Bottom => "bottom",
            Edge::Top => "top",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "left" => Some(Edge::Left),
            "right" => Some(Edge::Right),
            "bottom" => Some(Edge::Bottom),
            "top" => Some(Edge::Top),
            _ => None,
        }
    }
}

/// 1D trapezoid rule along a loaded domain edge (weights in meters).
#[derive(Debug, Clone, PartialEq)]
pub struct BoundarySegment<T> {
    pub edge: Edge,
    pub nodes: Vec<(Point2<T>, T)>,
}

/// 1D trapezoid rule along one face (+/-) of a loaded crack.
#[derive(Debug, Clone, PartialEq)]
pub struct CrackFaceSegment<T> {
    pub crack_index: usize,
    pub side: i8,
    pub nodes: Vec<(Point2<T>, T)>,
}

/// Tip-refinement parameters: cells whose center lies within `radius` of a
/// tip are subdivided `factor x factor`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RefinementSpec<T> {
    pub radius: T,
    pub factor: usize,
}

impl<T: Scalar> RefinementSpec<T> {
    pub fn new(radius: T, factor: usize) -> Result<Self, QuadError> {
        if radius <= T::zero() {
            return Err(QuadError::Degenerate("refinement radius must be > 0".into()));
        }
        if factor < 2 {
            return Err(QuadError::Degenerate("refinement factor must be >= 2".into()));
        }
        Ok(RefinementSpec { radius, factor })
    }

    /// Default: radius = 0.1 * min(domain extents), factor 4.
    pub fn default_for(rect: &Rect<T>) -> Self {
        RefinementSpec {
            radius: T::c(0.1) * rect.width().min(rect.height()),
            factor: 4,
        }
    }
}

/// Quadrature node set over the domain plus the 1D rules for loaded
/// boundaries and crack faces.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadGrid<T> {
    pub rect: Rect<T>,
    pub nodes: Vec<QuadNode<T>>,
    pub boundary_segments: Vec<BoundarySegment<T>>,
    pub crack_face_segments: Vec<CrackFaceSegment<T>>,
    /// Tensor structure (nx, ny), present until refinement or relabeling
    /// destroys it.
    lattice: Option<(usize, usize)>,
}

impl<T: Scalar> QuadGrid<T> {
    pub fn total_weight(&self) -> T {
        self.nodes.iter().fold(T::zero(), |acc, n| acc + n.weight)
    }

    pub fn lattice(&self) -> Option<(usize, usize)> {
        self.lattice
    }

    /// Debug dump: `x1,x2,weight,side_0,...` one row per node.
    pub fn to_csv(&self) -> String {
        let n_cracks = self.nodes.iter().map(|n| n.sides.len()).max().unwrap_or(0);
        let mut out = String::from("x1,x2,weight");
        for k in 0..n_cracks {
            out.push_str(&format!(",side_{k}"));
        }
        out.push('\n');
        for node in &self.nodes {
            out.push_str(&format!(
                "{},{},{}",
                node.point.x1, node.point.x2, node.weight
            ));
            for k in 0..n_cracks {
                let s = node.sides.get(k).copied().unwrap_or(0);
                out.push_str(&format!(",{s}"));
            }
            out.push('\n');
        }
        out
    }
}

/// Tensor-product composite-trapezoid grid: `nx * ny` nodes, corner weight
/// `h1 h2 / 4`, edge weight `h1 h2 / 2`, interior weight `h1 h2`.
pub fn build_uniform_grid<T: Scalar>(
    nx: usize,
    ny: usize,
    rect: Rect<T>,
) -> Result<QuadGrid<T>, QuadError> {
    if nx < 2 || ny < 2 {
        return Err(QuadError::Degenerate(format!(
            "grid needs nx, ny >= 2, got {nx} x {ny}"
        )));
    }
    if rect.width() <= T::zero() || rect.height() <= T::zero() {
        return Err(QuadError::Degenerate(format!(
            "rectangle has non-positive extent: width {}, height {}",
            rect.width(),
            rect.height()
        )));
    }
    let h1 = rect.width() / T::c((nx - 1) as f64);
    let h2 = rect.height() / T::c((ny - 1) as f64);
    let cell = h1 * h2;
    let mut nodes = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        let x2 = if j == ny - 1 {
            rect.y_max
        } else {
            rect.y_min + h2 * T::c(j as f64)
        };
        let wy = if j == 0 || j == ny - 1 { T::c(0.5) } else { T::one() };
        for i in 0..nx {
            let x1 = if i == nx - 1 {
                rect.x_max
            } else {
                rect.x_min + h1 * T::c(i as f64)
            };
            let wx = if i == 0 || i == nx - 1 { T::c(0.5) } else { T::one() };
            nodes.push(QuadNode {
                point: Point2::new(x1, x2),
                weight: cell * wx * wy,
                sides: Vec::new(),
            });
        }
    }
    Ok(QuadGrid {
        rect,
        nodes,
        boundary_segments: Vec::new(),
        crack_face_segments: Vec::new(),
        lattice: Some((nx, ny)),
    })
}

/// Subdivides every cell whose center lies within `spec.radius` of a tip
/// into `factor x factor` trapezoid sub-cells; all other cells keep their
/// plain corner contributions. Total weight is conserved.
///
/// Must run on a tensor grid, i.e. before [`crack_aware_relabel`].
pub fn refine_near_tips<T: Scalar>(
    grid: QuadGrid<T>,
    tips: &[Point2<T>],
    spec: &RefinementSpec<T>,
) -> QuadGrid<T> {
    if tips.is_empty() {
        return grid;
    }
    let (nx, ny) = grid
        .lattice
        .expect("refine_near_tips requires an unrefined tensor grid");
    let rect = grid.rect;
    let f = spec.factor;
    let h1 = rect.width() / T::c((nx - 1) as f64);
    let h2 = rect.height() / T::c((ny - 1) as f64);
    let h1f = h1 / T::c(f as f64);
    let h2f = h2 / T::c(f as f64);

    // Node bookkeeping on the fine lattice ((nx-1)f + 1) x ((ny-1)f + 1).
    let mut index: HashMap<(u64, u64), usize> = HashMap::new();
    let mut nodes: Vec<QuadNode<T>> = Vec::new();
    let coord = |fi: u64, fj: u64| -> Point2<T> {
        let x1 = if fi == ((nx - 1) * f) as u64 {
            rect.x_max
        } else if fi % f as u64 == 0 {
            rect.x_min + h1 * T::c((fi / f as u64) as f64)
        } else {
            rect.x_min + h1f * T::c(fi as f64)
        };
        let x2 = if fj == ((ny - 1) * f) as u64 {
            rect.y_max
        } else if fj % f as u64 == 0 {
            rect.y_min + h2 * T::c((fj / f as u64) as f64)
        } else {
            rect.y_min + h2f * T::c(fj as f64)
        };
        Point2::new(x1, x2)
    };
    let mut add_weight = |fi: u64, fj: u64, w: T, nodes: &mut Vec<QuadNode<T>>| {
        let slot = index.entry((fi, fj)).or_insert_with(|| {
            nodes.push(QuadNode {
                point: coord(fi, fj),
                weight: T::zero(),
                sides: Vec::new(),
            });
            nodes.len() - 1
        });
        nodes[*slot].weight = nodes[*slot].weight + w;
    };

    let quarter = T::c(0.25);
    let half = T::c(0.5);
    for cj in 0..ny - 1 {
        for ci in 0..nx - 1 {
            let center = Point2::new(
                rect.x_min + h1 * (T::c(ci as f64) + half),
                rect.y_min + h2 * (T::c(cj as f64) + half),
            );
            let near_tip = tips
                .iter()
                .any(|tip| (*tip - center).norm() <= spec.radius);
            let (fi0, fj0) = ((ci * f) as u64, (cj * f) as u64);
            if near_tip {
                let sub = h1f * h2f;
                for sj in 0..=f as u64 {
                    let wy = if sj == 0 || sj == f as u64 { half } else { T::one() };
                    for si in 0..=f as u64 {
                        let wx = if si == 0 || si == f as u64 { half } else { T::one() };
                        add_weight(fi0 + si, fj0 + sj, sub * wx * wy, &mut nodes);
                    }
                }
            } else {
                let w = h1 * h2 * quarter;
                add_weight(fi0, fj0, w, &mut nodes);
                add_weight(fi0 + f as u64, fj0, w, &mut nodes);
                add_weight(fi0, fj0 + f as u64, w, &mut nodes);
                add_weight(fi0 + f as u64, fj0 + f as u64, w, &mut nodes);
            }
        }
    }

    QuadGrid {
        rect,
        nodes,
        boundary_segments: grid.boundary_segments,
        crack_face_segments: grid.crack_face_segments,
        lattice: None,
    }
}

/// Labels every node with its side (+1/-1) per crack. Nodes lying on a
/// crack (within `1e-12 * diag`) are replaced by two replicas shifted
/// `+/- 1e-8 * diag` along the crack normal, each carrying half the weight
/// and an explicit label.
pub fn crack_aware_relabel<T: Scalar>(grid: QuadGrid<T>, cracks: &[CrackPath<T>]) -> QuadGrid<T> {
    let diag = grid.rect.diag();
    let on_tol = T::c(ON_CRACK_REL_TOL) * diag;
    let offset = T::c(SIDE_SPLIT_REL_OFFSET) * diag;
    let mut nodes = grid.nodes;
    for (k, crack) in cracks.iter().enumerate() {
        let mut next = Vec::with_capacity(nodes.len());
        for node in nodes {
            let (phi, grad) = sdf_polyline(node.point, crack);
            if phi.abs() <= on_tol {
                // grad is the segment normal here (on-path degenerate case).
                let normal = grad;
                let half = node.weight * T::c(0.5);
                for side in [1i8, -1i8] {
                    let s = T::c(side as f64);
                    let mut sides = node.sides.clone();
                    debug_assert_eq!(sides.len(), k);
                    sides.push(side);
                    next.push(QuadNode {
                        point: node.point + normal * (s * offset),
                        weight: half,
                        sides,
                    });
                }
            } else {
                let mut node = node;
                node.sides.push(if sgn(phi) > T::zero() { 1 } else { -1 });
                next.push(node);
            }
        }
        nodes = next;
    }
    QuadGrid {
        rect: grid.rect,
        nodes,
        boundary_segments: grid.boundary_segments,
        crack_face_segments: grid.crack_face_segments,
        lattice: None,
    }
}

/// `sum_i w_i f_i` over the interior nodes, in node order.
pub fn integrate<T: Scalar>(samples: &[T], grid: &QuadGrid<T>) -> Result<T, QuadError> {
    if samples.len() != grid.nodes.len() {
        return Err(QuadError::Mismatch(format!(
            "{} samples for {} nodes",
            samples.len(),
            grid.nodes.len()
        )));
    }
    Ok(samples
        .iter()
        .zip(&grid.nodes)
        .fold(T::zero(), |acc, (f, n)| acc + *f * n.weight))
}

/// 1D composite trapezoid along a domain edge with `n` nodes.
pub fn edge_segment<T: Scalar>(rect: &Rect<T>, edge: Edge, n: usize) -> BoundarySegment<T> {
    let n = n.max(2);
    let (start, dir, len) = match edge {
        Edge::Bottom => (
            Point2::new(rect.x_min, rect.y_min),
            Point2::new(T::one(), T::zero()),
            rect.width(),
        ),
        Edge::Top => (
            Point2::new(rect.x_min, rect.y_max),
            Point2::new(T::one(), T::zero()),
            rect.width(),
        ),
        Edge::Left => (
            Point2::new(rect.x_min, rect.y_min),
            Point2::new(T::zero(), T::one()),
            rect.height(),
        ),
        Edge::Right => (
            Point2::new(rect.x_max, rect.y_min),
            Point2::new(T::zero(), T::one()),
            rect.height(),
        ),
    };
    let h = len / T::c((n - 1) as f64);
    let nodes = (0..n)
        .map(|i| {
            let w = if i == 0 || i == n - 1 { h * T::c(0.5) } else { h };
            (start + dir * (h * T::c(i as f64)), w)
        })
        .collect();
    BoundarySegment { edge, nodes }
}

/// 1D composite trapezoid along a crack face. Nodes are placed per segment
/// with spacing at most `target_h`; shared polyline vertices accumulate the
/// weights of both adjacent segments.
pub fn crack_face_segment<T: Scalar>(
    path: &CrackPath<T>,
    crack_index: usize,
    side: i8,
    target_h: T,
) -> CrackFaceSegment<T> {
    let mut nodes: Vec<(Point2<T>, T)> = Vec::new();
    for w in path.vertices.windows(2) {
        let (a, b) = (w[0], w[1]);
        let len = (b - a).norm();
        let m = (len / target_h).to_f64().ceil().max(1.0) as usize;
        let h = len / T::c(m as f64);
        let dir = (b - a) * len.recip();
        for i in 0..=m {
            let p = a + dir * (h * T::c(i as f64));
            let wgt = if i == 0 || i == m { h * T::c(0.5) } else { h };
            // Merge with a shared vertex from the previous segment.
            if i == 0 {
                if let Some(last) = nodes.last_mut() {
                    if (last.0 - p).norm() <= T::c(1e-14) * len.max(T::one()) {
                        last.1 = last.1 + wgt;
                        continue;
                    }
                }
            }
            nodes.push((p, wgt));
        }
    }
    CrackFaceSegment {
        crack_index,
        side,
        nodes,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::CrackPath;

    fn unit_rect() -> Rect<f64> {
        Rect::new(0.0, 1.0, 0.0, 1.0)
    }

    fn p(x1: f64, x2: f64) -> Point2<f64> {
        Point2::new(x1, x2)
    }

    #[test]
    fn two_by_two_grid_is_four_quarter_corners() {
        let g = build_uniform_grid(2, 2, unit_rect()).unwrap();
        assert_eq!(g.nodes.len(), 4);
        for n in &g.nodes {
            assert_eq!(n.weight, 0.25);
        }
        assert!((g.total_weight() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn three_by_three_weight_pattern() {
        let g = build_uniform_grid(3, 3, unit_rect()).unwrap();
        let mut weights: Vec<f64> = g.nodes.iter().map(|n| n.weight).collect();
        weights.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(
            weights,
            vec![
                1.0 / 16.0,
                1.0 / 16.0,
                1.0 / 16.0,
                1.0 / 16.0,
                1.0 / 8.0,
                1.0 / 8.0,
                1.0 / 8.0,
                1.0 / 8.0,
                1.0 / 4.0
            ]
        );
        assert!((g.total_weight() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn trapezoid_is_exact_on_linears() {
        for (nx, ny) in [(2, 2), (5, 3), (17, 9)] {
            let g = build_uniform_grid(nx, ny, unit_rect()).unwrap();
            let fx: Vec<f64> = g.nodes.iter().map(|n| n.point.x1).collect();
            assert!((integrate(&fx, &g).unwrap() - 0.5).abs() < 1e-14);
            let fxy: Vec<f64> = g.nodes.iter().map(|n| n.point.x1 + n.point.x2).collect();
            assert!((integrate(&fxy, &g).unwrap() - 1.0).abs() < 1e-14);
            let c: Vec<f64> = g.nodes.iter().map(|_| 3.25).collect();
            assert!((integrate(&c, &g).unwrap() - 3.25).abs() < 1e-14);
        }
    }

    #[test]
    fn quadratic_matches_closed_form_composite_trapezoid() {
        // On a 101 x 2 grid the x1 rule has h = 0.01 and the composite
        // trapezoid of x^2 on [0, 1] equals 1/3 + h^2/6 = 0.3333500...
        let g = build_uniform_grid(101, 2, unit_rect()).unwrap();
        let f: Vec<f64> = g.nodes.iter().map(|n| n.point.x1 * n.point.x1).collect();
        let v = integrate(&f, &g).unwrap();
        let h: f64 = 0.01;
        assert!((v - (1.0 / 3.0 + h * h / 6.0)).abs() < 1e-14, "{v}");
        assert!((v - 0.33335).abs() < 1e-9);
    }

    #[test]
    fn second_order_convergence() {
        // Error of x1^2 x2^2 shrinks ~4x per doubling.
        let exact = 1.0 / 9.0;
        let mut errs = Vec::new();
        for n in [9, 17, 33] {
            let g = build_uniform_grid(n, n, unit_rect()).unwrap();
            let f: Vec<f64> = g
                .nodes
                .iter()
                .map(|n| (n.point.x1 * n.point.x2).powi(2))
                .collect();
            errs.push((integrate(&f, &g).unwrap() - exact).abs());
        }
        for w in errs.windows(2) {
            let ratio = w[0] / w[1];
            assert!((ratio - 4.0).abs() < 0.5, "ratio {ratio}");
        }
    }

    #[test]
    fn degenerate_inputs_error() {
        assert!(build_uniform_grid(1, 5, unit_rect()).is_err());
        assert!(build_uniform_grid(4, 4, Rect::new(0.0, 0.0, 0.0, 1.0)).is_err());
        let g = build_uniform_grid(2, 2, unit_rect()).unwrap();
        assert!(integrate(&[1.0, 2.0], &g).is_err());
    }

    #[test]
    fn relabel_splits_on_crack_nodes() {
        // 3 x 3 grid with a crack along y = 0.5: the middle row sits on it.
        let g = build_uniform_grid(3, 3, unit_rect()).unwrap();
        let crack = CrackPath::new(vec![p(0.0, 0.5), p(1.0, 0.5)], false, false).unwrap();
        let total_before = g.total_weight();
        let g = crack_aware_relabel(g, &[crack]);
        // 3 on-crack nodes duplicate: 9 + 3 = 12 nodes.
        assert_eq!(g.nodes.len(), 12);
        assert!((g.total_weight() - total_before).abs() <= 1e-12 * total_before);
        let diag = 2f64.sqrt();
        for n in &g.nodes {
            assert_eq!(n.sides.len(), 1);
            // No unlabeled on-crack nodes remain.
            assert!((n.point.x2 - 0.5).abs() > 1e-12 * diag * 0.9);
            let expected = if n.point.x2 > 0.5 { 1 } else { -1 };
            assert_eq!(n.sides[0], expected, "node at {}", n.point);
        }
        let split: Vec<_> = g
            .nodes
            .iter()
            .filter(|n| (n.point.x2 - 0.5).abs() < 1e-6)
            .collect();
        assert_eq!(split.len(), 6);
        for n in split {
            assert!((n.point.x2 - 0.5).abs() <= 1.1e-8 * diag);
        }
    }

    #[test]
    fn relabel_off_crack_keeps_single_node() {
        let g = build_uniform_grid(2, 2, unit_rect()).unwrap();
        let crack = CrackPath::new(vec![p(0.0, 0.3), p(0.6, 0.3)], false, true).unwrap();
        let g = crack_aware_relabel(g, &[crack]);
        assert_eq!(g.nodes.len(), 4);
        for n in &g.nodes {
            let expected = if n.point.x2 > 0.3 { 1 } else { -1 };
            assert_eq!(n.sides, vec![expected]);
        }
    }

    #[test]
    fn refinement_conserves_weight_and_stays_local() {
        let g = build_uniform_grid(11, 11, unit_rect()).unwrap();
        let n_before = g.nodes.len();
        let spec = RefinementSpec::new(0.15, 4).unwrap();
        let tip = p(0.5, 0.5);
        let g = refine_near_tips(g, &[tip], &spec);
        assert!(g.nodes.len() > n_before);
        assert!((g.total_weight() - 1.0).abs() <= 1e-12);
        // New nodes appear only near the tip: everything beyond
        // radius + cell diagonal must be on the coarse lattice.
        let h = 0.1;
        for n in &g.nodes {
            let d = (n.point - tip).norm();
            if d > 0.15 + h * 2f64.sqrt() {
                let fi = (n.point.x1 / h).round();
                let fj = (n.point.x2 / h).round();
                assert!(
                    (n.point.x1 - fi * h).abs() < 1e-12 && (n.point.x2 - fj * h).abs() < 1e-12,
                    "unexpected fine node at {} (d = {d})",
                    n.point
                );
            }
        }
        // Constant integrates to the area exactly.
        let ones: Vec<f64> = g.nodes.iter().map(|_| 1.0).collect();
        assert!((integrate(&ones, &g).unwrap() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn refinement_without_tips_is_identity() {
        let g = build_uniform_grid(5, 5, unit_rect()).unwrap();
        let spec = RefinementSpec::default_for(&unit_rect());
        let g2 = refine_near_tips(g.clone(), &[], &spec);
        assert_eq!(g, g2);
    }

    #[test]
    fn refined_then_relabeled_pipeline_conserves_weight() {
        let rect = Rect::new(0.0, 1.0, -1.0, 1.0);
        let g = build_uniform_grid(21, 41, rect).unwrap();
        let crack = CrackPath::new(vec![p(0.0, 0.0), p(0.5, 0.0)], false, true).unwrap();
        let spec = RefinementSpec::default_for(&rect);
        let g = refine_near_tips(g, &[p(0.5, 0.0)], &spec);
        let g = crack_aware_relabel(g, &[crack]);
        assert!((g.total_weight() - rect.area()).abs() <= 1e-12 * rect.area());
        for n in &g.nodes {
            assert_eq!(n.sides.len(), 1);
        }
    }

    #[test]
    fn edge_segments_cover_their_edges() {
        let rect = Rect::new(0.0, 2.0, -1.0, 1.0);
        let seg = edge_segment(&rect, Edge::Top, 5);
        assert_eq!(seg.nodes.len(), 5);
        let total: f64 = seg.nodes.iter().map(|(_, w)| w).sum();
        assert!((total - 2.0).abs() < 1e-14);
        assert!(seg.nodes.iter().all(|(pt, _)| pt.x2 == 1.0));
        let seg = edge_segment(&rect, Edge::Left, 3);
        let total: f64 = seg.nodes.iter().map(|(_, w)| w).sum();
        assert!((total - 2.0).abs() < 1e-14);
        assert!(seg.nodes.iter().all(|(pt, _)| pt.x1 == 0.0));
    }

    #[test]
    fn crack_face_rule_integrates_length() {
        let path = CrackPath::new(vec![p(0.0, 0.0), p(0.3, 0.0), p(0.3, 0.4)], false, true).unwrap();
        let seg = crack_face_segment(&path, 0, 1, 0.05);
        let total: f64 = seg.nodes.iter().map(|(_, w)| w).sum();
        assert!((total - 0.7).abs() < 1e-12);
        // Linear function of arc length integrates exactly: f = x1 on the
        // first leg has integral 0.045.
        let first_leg: f64 = seg
            .nodes
            .iter()
            .filter(|(pt, _)| pt.x2 == 0.0)
            .map(|(pt, w)| pt.x1 * w)
            .sum();
        // Shared vertex at (0.3, 0) carries weight from both legs; subtract
        // the second leg's half-interval contribution there.
        let h2 = 0.4 / 8.0;
        assert!((first_leg - (0.045 + 0.3 * h2 * 0.5)).abs() < 1e-12);
    }
}
