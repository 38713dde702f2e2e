//! Scenario files: one structured text file fully describing a problem —
//! domain, materials and their regions, cracks, interfaces, hard-constraint
//! expressions, loads, quadrature grid and training schedule.
//!
//! Format (TOML):
//!
//! ```toml
//! mode = "plane_strain"          # or "plane_stress"
//! seed = 0
//!
//! [domain]
//! x = [0.0, 1.0]                 # m
//! y = [-1.0, 1.0]
//!
//! [material.steel]
//! e = 100.0                      # GPa
//! nu = 0.3
//! region = "whole"               # or { kind = "half_plane", point = [..], normal = [..] }
//!                                # or { kind = "circle", center = [..], radius = .. }
//!
//! [crack.main]
//! vertices = [[0.0, 0.0], [0.5, 0.0]]
//! # tips = [false, true]         # optional; endpoints on the boundary are not tips
//!
//! [interface.mid]
//! kind = "line"
//! point = [0.0, 0.0]
//! normal = [0.0, 1.0]
//!
//! [constraint.u1]
//! A = "x1"
//! B = "0"
//! [constraint.u2]
//! A = "(x2 + 1) / 2"
//! B = "0"
//!
//! [traction.top]                 # edges: left/right/top/bottom;
//! t1 = "0"                       # crack faces: [traction."main+"] / [traction."main-"]
//! t2 = "10"                      # MPa
//!
//! [body_force]                   # optional, defaults to zero
//! b1 = "0"
//! b2 = "0"
//!
//! [train]
//! max_epochs = 15000
//!
//! [grid]
//! nx = 80
//! ny = 100
//! # tip_radius = 0.1             # default 0.1 * min extent
//! # tip_factor = 4
//! ```
//!
//! Units: lengths in m, moduli in GPa, stresses in MPa, angles in radians.

use crate::expr::{parse_expression, ExpressionAst, ExprError};
use crate::geometry::{CrackPath, EmbeddingSpec, InterfaceShape, Point2, Rect};
use crate::quadrature::{
    build_uniform_grid, crack_aware_relabel, crack_face_segment, edge_segment, refine_near_tips,
    Edge, QuadGrid, RefinementSpec,
};
use crate::scalar::Scalar;
use serde::Deserialize;
use std::collections::BTreeMap;
use std::fmt;

#[derive(Debug)]
pub enum ScenarioError {
    /// Malformed file; the message carries line/column from the TOML parser.
    Syntax(String),
    /// Well-formed file violating a constraint; names the offending field.
    Semantic { field: String, msg: String },
}

impl fmt::Display for ScenarioError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScenarioError::Syntax(m) => write!(f, "syntax error: {m}"),
            ScenarioError::Semantic { field, msg } => write!(f, "field '{field}': {msg}"),
        }
    }
}

impl std::error::Error for ScenarioError {}

fn semantic(field: impl Into<String>, msg: impl Into<String>) -> ScenarioError {
    ScenarioError::Semantic {
        field: field.into(),
        msg: msg.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AnalysisMode {
    PlaneStress,
    PlaneStrain,
}

/// One material together with the subdomain it occupies. When regions
/// overlap, the most specific shape wins (circle over half-plane over
/// whole); equal specificity resolves to the material later in name order.
#[derive(Debug, Clone, PartialEq)]
pub struct MaterialSpec<T> {
    pub name: String,
    pub e_gpa: T,
    pub nu: T,
    pub region: Region<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Region<T> {
    Whole,
    /// Strictly the positive-normal side; the boundary itself belongs to
    /// the complement (the sgn(0) = -1 side).
    HalfPlane { point: Point2<T>, normal: Point2<T> },
    /// Inside of the circle, boundary included.
    Circle { center: Point2<T>, radius: T },
}

impl<T: Scalar> Region<T> {
    pub fn specificity(&self) -> u8 {
        match self {
            Region::Whole => 0,
            Region::HalfPlane { .. } => 1,
            Region::Circle { .. } => 2,
        }
    }

    pub fn contains(&self, p: Point2<T>) -> bool {
        match self {
            Region::Whole => true,
            Region::HalfPlane { point, normal } => (p - *point).dot(*normal) > T::zero(),
            Region::Circle { center, radius } => (p - *center).norm() - *radius <= T::zero(),
        }
    }
}

/// Hard-constraint factors for one displacement component:
/// `u = A * u_hat + B`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintPair {
    pub a: ExpressionAst,
    pub b: ExpressionAst,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TractionTarget {
    Edge(Edge),
    CrackFace { crack: String, side: i8 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TractionSpec {
    pub target: TractionTarget,
    pub t1: ExpressionAst,
    pub t2: ExpressionAst,
}

/// Adam schedule and early-stopping parameters plus network size.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig<T> {
    pub lr0: T,
    pub decay_factor: T,
    pub decay_every: usize,
    pub patience: usize,
    pub max_epochs: usize,
    pub beta1: T,
    pub beta2: T,
    pub epsilon: T,
    pub deterministic: bool,
    pub width: usize,
    pub blocks: usize,
    /// When false, discontinuity embeddings are not appended to the network
    /// input (plain smooth trial function; cracks and interfaces are then
    /// only felt through the energy).
    pub embed: bool,
    /// Scale each embedding by the matching power of the domain diagonal.
    pub normalize_embeddings: bool,
    /// Fixed output scale of the trial function (`u = A * (scale * net) + B`);
    /// derived from the loads when absent.
    pub output_scale: Option<T>,
}

impl<T: Scalar> Default for TrainConfig<T> {
    fn default() -> Self {
        TrainConfig {
            lr0: T::c(0.02),
            decay_factor: T::c(0.5),
            decay_every: 5000,
            patience: 1000,
            max_epochs: 15000,
            beta1: T::c(0.9),
            beta2: T::c(0.999),
            epsilon: T::c(1e-8),
            deterministic: true,
            width: 30,
            blocks: 2,
            embed: true,
            normalize_embeddings: false,
            output_scale: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridConfig<T> {
    pub nx: usize,
    pub ny: usize,
    pub tip_radius: Option<T>,
    pub tip_factor: usize,
}

/// Full problem description; everything a run needs besides the seed-derived
/// initial parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario<T> {
    pub domain: Rect<T>,
    pub mode: AnalysisMode,
    pub seed: u64,
    /// Sorted by name.
    pub materials: Vec<MaterialSpec<T>>,
    /// Sorted by id.
    pub cracks: Vec<(String, CrackPath<T>)>,
    /// Sorted by id.
    pub interfaces: Vec<(String, InterfaceShape<T>)>,
    /// `[u1, u2]`.
    pub constraints: [ConstraintPair; 2],
    pub tractions: Vec<TractionSpec>,
    pub body_force: [ExpressionAst; 2],
    pub train: TrainConfig<T>,
    pub grid: GridConfig<T>,
}

// ---------------------------------------------------------------------------
// Raw (serde) representation
// ---------------------------------------------------------------------------

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    mode: String,
    seed: Option<u64>,
    domain: RawDomain,
    material: BTreeMap<String, RawMaterial>,
    #[serde(default)]
    crack: BTreeMap<String, RawCrack>,
    #[serde(default)]
    interface: BTreeMap<String, RawInterface>,
    constraint: BTreeMap<String, RawConstraint>,
    #[serde(default)]
    traction: BTreeMap<String, RawTraction>,
    body_force: Option<RawBodyForce>,
    #[serde(default)]
    train: RawTrain,
    grid: RawGrid,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDomain {
    x: [f64; 2],
    y: [f64; 2],
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMaterial {
    e: f64,
    nu: f64,
    region: RawRegion,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RawRegion {
    Keyword(String),
    Shape(RawRegionShape),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRegionShape {
    kind: String,
    point: Option<[f64; 2]>,
    normal: Option<[f64; 2]>,
    center: Option<[f64; 2]>,
    radius: Option<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCrack {
    vertices: Vec<[f64; 2]>,
    tips: Option<[bool; 2]>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawInterface {
    kind: String,
    point: Option<[f64; 2]>,
    normal: Option<[f64; 2]>,
    center: Option<[f64; 2]>,
    radius: Option<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConstraint {
    #[serde(rename = "A")]
    a: String,
    #[serde(rename = "B")]
    b: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTraction {
    t1: String,
    t2: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBodyForce {
    b1: String,
    b2: String,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawTrain {
    lr0: Option<f64>,
    decay_factor: Option<f64>,
    decay_every: Option<usize>,
    patience: Option<usize>,
    max_epochs: Option<usize>,
    beta1: Option<f64>,
    beta2: Option<f64>,
    epsilon: Option<f64>,
    deterministic: Option<bool>,
    width: Option<usize>,
    blocks: Option<usize>,
    embed: Option<bool>,
    normalize_embeddings: Option<bool>,
    output_scale: Option<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGrid {
    nx: usize,
    ny: usize,
    tip_radius: Option<f64>,
    tip_factor: Option<usize>,
}

// ---------------------------------------------------------------------------
// Parsing and validation
// ---------------------------------------------------------------------------

fn parse_expr_field(field: &str, text: &str) -> Result<ExpressionAst, ScenarioError> {
    parse_expression(text).map_err(|e: ExprError| semantic(field, e.to_string()))
}

/// Parses and validates a scenario file.
pub fn parse_scenario<T: Scalar>(text: &str) -> Result<Scenario<T>, ScenarioError> {
    let raw: RawScenario =
        toml::from_str(text).map_err(|e| ScenarioError::Syntax(e.to_string()))?;

    let domain = Rect::new(
        T::c(raw.domain.x[0]),
        T::c(raw.domain.x[1]),
        T::c(raw.domain.y[0]),
        T::c(raw.domain.y[1]),
    );
    if domain.width() <= T::zero() {
        return Err(semantic("domain.x", "width must be strictly positive"));
    }
    if domain.height() <= T::zero() {
        return Err(semantic("domain.y", "height must be strictly positive"));
    }

    let mode = match raw.mode.as_str() {
        "plane_stress" => AnalysisMode::PlaneStress,
        "plane_strain" => AnalysisMode::PlaneStrain,
        other => {
            return Err(semantic(
                "mode",
                format!("expected 'plane_stress' or 'plane_strain', got '{other}'"),
            ))
        }
    };

    if raw.material.is_empty() {
        return Err(semantic("material", "at least one material is required"));
    }
    let mut materials = Vec::new();
    for (name, m) in &raw.material {
        let field = format!("material.{name}");
        if m.e <= 0.0 {
            return Err(semantic(&field, "Young's modulus must be positive"));
        }
        if m.nu <= -1.0 || m.nu >= 0.5 {
            return Err(semantic(&field, "Poisson ratio must lie in (-1, 0.5)"));
        }
        let region = parse_region::<T>(&field, &m.region)?;
        materials.push(MaterialSpec {
            name: name.clone(),
            e_gpa: T::c(m.e),
            nu: T::c(m.nu),
            region,
        });
    }

    let boundary_tol = T::c(1e-12) * domain.diag();
    let mut cracks = Vec::new();
    for (id, c) in &raw.crack {
        let field = format!("crack.{id}");
        let vertices: Vec<Point2<T>> = c
            .vertices
            .iter()
            .map(|v| Point2::new(T::c(v[0]), T::c(v[1])))
            .collect();
        for v in &vertices {
            if !domain.contains(*v, boundary_tol) {
                return Err(semantic(&field, format!("crack outside domain: vertex {v}")));
            }
        }
        if vertices.len() < 2 {
            return Err(semantic(&field, "a crack needs at least two vertices"));
        }
        let on_boundary = |v: &Point2<T>| domain.boundary_distance(*v) <= boundary_tol;
        let (start_is_tip, end_is_tip) = match c.tips {
            Some([s, e]) => {
                if s && on_boundary(&vertices[0]) {
                    return Err(semantic(
                        &field,
                        "start endpoint lies on the domain boundary and cannot be a tip",
                    ));
                }
                if e && on_boundary(vertices.last().unwrap()) {
                    return Err(semantic(
                        &field,
                        "end endpoint lies on the domain boundary and cannot be a tip",
                    ));
                }
                (s, e)
            }
            None => (
                !on_boundary(&vertices[0]),
                !on_boundary(vertices.last().unwrap()),
            ),
        };
        if !start_is_tip && !on_boundary(&vertices[0]) {
            return Err(semantic(
                &field,
                "start endpoint is neither a tip nor on the domain boundary",
            ));
        }
        if !end_is_tip && !on_boundary(vertices.last().unwrap()) {
            return Err(semantic(
                &field,
                "end endpoint is neither a tip nor on the domain boundary",
            ));
        }
        let path = CrackPath::new(vertices, start_is_tip, end_is_tip)
            .map_err(|e| semantic(&field, e.to_string()))?;
        cracks.push((id.clone(), path));
    }
    // All tips across all cracks must be distinct points.
    let mut tips: Vec<(String, Point2<T>)> = Vec::new();
    for (id, path) in &cracks {
        for which in path.tips() {
            tips.push((id.clone(), path.tip_point(which)));
        }
    }
    for i in 0..tips.len() {
        for j in (i + 1)..tips.len() {
            if (tips[i].1 - tips[j].1).norm() <= boundary_tol {
                return Err(semantic(
                    format!("crack.{}", tips[j].0),
                    format!("tip at {} coincides with another tip", tips[j].1),
                ));
            }
        }
    }

    let mut interfaces = Vec::new();
    for (id, raw_if) in &raw.interface {
        let field = format!("interface.{id}");
        let shape = parse_interface::<T>(&field, raw_if)?;
        shape.validate().map_err(|e| semantic(&field, e.to_string()))?;
        interfaces.push((id.clone(), shape));
    }

    let mut constraint_of = |comp: &str| -> Result<ConstraintPair, ScenarioError> {
        let raw_c = raw
            .constraint
            .get(comp)
            .ok_or_else(|| semantic(format!("constraint.{comp}"), "missing constraint pair"))?;
        Ok(ConstraintPair {
            a: parse_expr_field(&format!("constraint.{comp}.A"), &raw_c.a)?,
            b: parse_expr_field(&format!("constraint.{comp}.B"), &raw_c.b)?,
        })
    };
    let constraints = [constraint_of("u1")?, constraint_of("u2")?];
    for key in raw.constraint.keys() {
        if key != "u1" && key != "u2" {
            return Err(semantic(
                format!("constraint.{key}"),
                "only u1 and u2 take constraints",
            ));
        }
    }

    let mut tractions = Vec::new();
    for (target_name, t) in &raw.traction {
        let field = format!("traction.{target_name}");
        let target = if let Some(edge) = Edge::from_name(target_name) {
            TractionTarget::Edge(edge)
        } else if let Some(stripped) = target_name.strip_suffix('+') {
            check_crack_ref(&field, stripped, &cracks)?;
            TractionTarget::CrackFace {
                crack: stripped.to_owned(),
                side: 1,
            }
        } else if let Some(stripped) = target_name.strip_suffix('-') {
            check_crack_ref(&field, stripped, &cracks)?;
            TractionTarget::CrackFace {
                crack: stripped.to_owned(),
                side: -1,
            }
        } else {
            return Err(semantic(
                &field,
                "target must be an edge (left/right/top/bottom) or a crack face '<id>+'/'<id>-'",
            ));
        };
        tractions.push(TractionSpec {
            target,
            t1: parse_expr_field(&format!("{field}.t1"), &t.t1)?,
            t2: parse_expr_field(&format!("{field}.t2"), &t.t2)?,
        });
    }

    let body_force = match &raw.body_force {
        Some(bf) => [
            parse_expr_field("body_force.b1", &bf.b1)?,
            parse_expr_field("body_force.b2", &bf.b2)?,
        ],
        None => [ExpressionAst::Constant(0.0), ExpressionAst::Constant(0.0)],
    };

    let d = TrainConfig::<T>::default();
    let train = TrainConfig {
        lr0: raw.train.lr0.map(T::c).unwrap_or(d.lr0),
        decay_factor: raw.train.decay_factor.map(T::c).unwrap_or(d.decay_factor),
        decay_every: raw.train.decay_every.unwrap_or(d.decay_every),
        patience: raw.train.patience.unwrap_or(d.patience),
        max_epochs: raw.train.max_epochs.unwrap_or(d.max_epochs),
        beta1: raw.train.beta1.map(T::c).unwrap_or(d.beta1),
        beta2: raw.train.beta2.map(T::c).unwrap_or(d.beta2),
        epsilon: raw.train.epsilon.map(T::c).unwrap_or(d.epsilon),
        deterministic: raw.train.deterministic.unwrap_or(d.deterministic),
        width: raw.train.width.unwrap_or(d.width),
        blocks: raw.train.blocks.unwrap_or(d.blocks),
        embed: raw.train.embed.unwrap_or(d.embed),
        normalize_embeddings: raw
            .train
            .normalize_embeddings
            .unwrap_or(d.normalize_embeddings),
        output_scale: raw.train.output_scale.map(T::c),
    };
    validate_train(&train)?;

    if raw.grid.nx < 2 || raw.grid.ny < 2 {
        return Err(semantic("grid", "nx and ny must be at least 2"));
    }
    let tip_factor = raw.grid.tip_factor.unwrap_or(4);
    if tip_factor < 2 {
        return Err(semantic("grid.tip_factor", "must be at least 2"));
    }
    if let Some(r) = raw.grid.tip_radius {
        if r <= 0.0 {
            return Err(semantic("grid.tip_radius", "must be positive"));
        }
    }
    let grid = GridConfig {
        nx: raw.grid.nx,
        ny: raw.grid.ny,
        tip_radius: raw.grid.tip_radius.map(T::c),
        tip_factor,
    };

    Ok(Scenario {
        domain,
        mode,
        seed: raw.seed.unwrap_or(0),
        materials,
        cracks,
        interfaces,
        constraints,
        tractions,
        body_force,
        train,
        grid,
    })
}

fn validate_train<T: Scalar>(t: &TrainConfig<T>) -> Result<(), ScenarioError> {
    let pos = [
        ("train.lr0", t.lr0 > T::zero()),
        ("train.decay_factor", t.decay_factor > T::zero()),
        ("train.beta1", t.beta1 > T::zero() && t.beta1 < T::one()),
        ("train.beta2", t.beta2 > T::zero() && t.beta2 < T::one()),
        ("train.epsilon", t.epsilon > T::zero()),
        ("train.decay_every", t.decay_every > 0),
        ("train.patience", t.patience > 0),
        ("train.width", t.width >= 1),
        ("train.blocks", t.blocks >= 1),
    ];
    for (field, ok) in pos {
        if !ok {
            return Err(semantic(field, "out of range"));
        }
    }
    if t.max_epochs > 0 && t.patience > t.max_epochs {
        return Err(semantic("train.patience", "must not exceed max_epochs"));
    }
    Ok(())
}

fn check_crack_ref<T>(
    field: &str,
    id: &str,
    cracks: &[(String, CrackPath<T>)],
) -> Result<(), ScenarioError> {
    if cracks.iter().any(|(c, _)| c == id) {
        Ok(())
    } else {
        Err(semantic(field, format!("unknown crack '{id}'")))
    }
}

fn unit_normal<T: Scalar>(field: &str, v: [f64; 2]) -> Result<Point2<T>, ScenarioError> {
    let n = Point2::new(T::c(v[0]), T::c(v[1]));
    if (n.norm() - T::one()).abs() > T::c(1e-12) {
        return Err(semantic(field, "normal must have unit length"));
    }
    Ok(n)
}

fn parse_region<T: Scalar>(field: &str, raw: &RawRegion) -> Result<Region<T>, ScenarioError> {
    match raw {
        RawRegion::Keyword(k) if k == "whole" => Ok(Region::Whole),
        RawRegion::Keyword(k) => Err(semantic(
            format!("{field}.region"),
            format!("unknown region keyword '{k}'"),
        )),
        RawRegion::Shape(s) => match s.kind.as_str() {
            "half_plane" => {
                let point = s.point.ok_or_else(|| {
                    semantic(format!("{field}.region"), "half_plane needs 'point'")
                })?;
                let normal = s.normal.ok_or_else(|| {
                    semantic(format!("{field}.region"), "half_plane needs 'normal'")
                })?;
                Ok(Region::HalfPlane {
                    point: Point2::new(T::c(point[0]), T::c(point[1])),
                    normal: unit_normal(&format!("{field}.region.normal"), normal)?,
                })
            }
            "circle" => {
                let center = s
                    .center
                    .ok_or_else(|| semantic(format!("{field}.region"), "circle needs 'center'"))?;
                let radius = s
                    .radius
                    .ok_or_else(|| semantic(format!("{field}.region"), "circle needs 'radius'"))?;
                if radius <= 0.0 {
                    return Err(semantic(format!("{field}.region.radius"), "must be positive"));
                }
                Ok(Region::Circle {
                    center: Point2::new(T::c(center[0]), T::c(center[1])),
                    radius: T::c(radius),
                })
            }
            other => Err(semantic(
                format!("{field}.region.kind"),
                format!("unknown region kind '{other}'"),
            )),
        },
    }
}

fn parse_interface<T: Scalar>(
    field: &str,
    raw: &RawInterface,
) -> Result<InterfaceShape<T>, ScenarioError> {
    match raw.kind.as_str() {
        "line" => {
            let point = raw
                .point
                .ok_or_else(|| semantic(field, "line interface needs 'point'"))?;
            let normal = raw
                .normal
                .ok_or_else(|| semantic(field, "line interface needs 'normal'"))?;
            Ok(InterfaceShape::Line {
                point: Point2::new(T::c(point[0]), T::c(point[1])),
                normal: unit_normal(&format!("{field}.normal"), normal)?,
            })
        }
        "circle" => {
            let center = raw
                .center
                .ok_or_else(|| semantic(field, "circle interface needs 'center'"))?;
            let radius = raw
                .radius
                .ok_or_else(|| semantic(field, "circle interface needs 'radius'"))?;
            Ok(InterfaceShape::Circle {
                center: Point2::new(T::c(center[0]), T::c(center[1])),
                radius: T::c(radius),
            })
        }
        other => Err(semantic(
            format!("{field}.kind"),
            format!("unknown interface kind '{other}'"),
        )),
    }
}

// ---------------------------------------------------------------------------
// Derived structures
// ---------------------------------------------------------------------------

impl<T: Scalar> Scenario<T> {
    /// Embeddings in input order: cracks (by id), then interfaces (by id).
    /// Empty when the scenario disables embedding.
    pub fn embedding_specs(&self) -> Vec<EmbeddingSpec<T>> {
        if !self.train.embed {
            return Vec::new();
        }
        let mut specs = Vec::new();
        for (id, path) in &self.cracks {
            specs.push(EmbeddingSpec::Strong {
                id: id.clone(),
                path: path.clone(),
            });
        }
        for (id, shape) in &self.interfaces {
            specs.push(EmbeddingSpec::Weak {
                id: id.clone(),
                shape: shape.clone(),
            });
        }
        specs
    }

    /// Per-embedding input scale (all ones unless normalization is on).
    pub fn embedding_scales(&self) -> Vec<T> {
        let specs = self.embedding_specs();
        if !self.train.normalize_embeddings {
            return vec![T::one(); specs.len()];
        }
        let diag = self.domain.diag();
        specs
            .iter()
            .map(|s| diag.powi(-s.length_power()))
            .collect()
    }

    /// Material governing the point, by region specificity.
    pub fn material_at(&self, p: Point2<T>) -> Option<&MaterialSpec<T>> {
        self.materials
            .iter()
            .filter(|m| m.region.contains(p))
            .max_by_key(|m| m.region.specificity())
    }

    /// Characteristic displacement magnitude of the problem, used as the
    /// fixed output scale of the trial function so the trained parameters
    /// live at order one. Estimated from sampled traction and body-force
    /// magnitudes against the softest stiffness, and from the prescribed
    /// boundary values; falls back to 1 when the scenario carries no loads.
    pub fn characteristic_displacement(&self) -> T {
        if let Some(s) = self.train.output_scale {
            return s;
        }
        let l_min = self.domain.width().min(self.domain.height());
        let e_min_mpa = self
            .materials
            .iter()
            .map(|m| m.e_gpa)
            .fold(T::infinity(), T::min)
            * T::c(1000.0);
        let mut traction_max = T::zero();
        let mut sample_expr_max = |e: &ExpressionAst, pts: &[Point2<T>], acc: &mut T| {
            for p in pts {
                if let Ok(v) = crate::expr::eval_value::<T>(e, p.as_array()) {
                    *acc = acc.max(v.abs());
                }
            }
        };
        for t in &self.tractions {
            let pts: Vec<Point2<T>> = match &t.target {
                TractionTarget::Edge(edge) => {
                    let seg = edge_segment(&self.domain, *edge, 17);
                    seg.nodes.iter().map(|(p, _)| *p).collect()
                }
                TractionTarget::CrackFace { crack, .. } => self
                    .cracks
                    .iter()
                    .find(|(id, _)| id == crack)
                    .map(|(_, path)| path.vertices.clone())
                    .unwrap_or_default(),
            };
            sample_expr_max(&t.t1, &pts, &mut traction_max);
            sample_expr_max(&t.t2, &pts, &mut traction_max);
        }
        let lattice: Vec<Point2<T>> = (0..5)
            .flat_map(|j| (0..5).map(move |i| (i, j)))
            .map(|(i, j)| {
                Point2::new(
                    self.domain.x_min + self.domain.width() * T::c(i as f64 / 4.0),
                    self.domain.y_min + self.domain.height() * T::c(j as f64 / 4.0),
                )
            })
            .collect();
        let mut body_max = T::zero();
        sample_expr_max(&self.body_force[0], &lattice, &mut body_max);
        sample_expr_max(&self.body_force[1], &lattice, &mut body_max);
        let mut b_max = T::zero();
        for c in &self.constraints {
            sample_expr_max(&c.b, &lattice, &mut b_max);
        }
        let scale = (traction_max * l_min / e_min_mpa)
            .max(body_max * l_min * l_min / e_min_mpa)
            .max(b_max);
        if scale > T::zero() {
            scale
        } else {
            T::one()
        }
    }

    /// All crack-tip points, cracks in id order, start tip before end tip.
    pub fn all_tips(&self) -> Vec<Point2<T>> {
        let mut tips = Vec::new();
        for (_, path) in &self.cracks {
            for which in path.tips() {
                tips.push(path.tip_point(which));
            }
        }
        tips
    }

    /// Builds the quadrature grid for this scenario: uniform tensor grid,
    /// tip refinement, crack-aware relabeling, then 1D rules for every
    /// loaded edge and crack face.
    pub fn build_quad_grid(&self) -> Result<QuadGrid<T>, crate::Error> {
        let mut grid = build_uniform_grid(self.grid.nx, self.grid.ny, self.domain)?;
        let tips = self.all_tips();
        if !tips.is_empty() {
            let spec = RefinementSpec {
                radius: self
                    .grid
                    .tip_radius
                    .unwrap_or_else(|| RefinementSpec::default_for(&self.domain).radius),
                factor: self.grid.tip_factor,
            };
            grid = refine_near_tips(grid, &tips, &spec);
        }
        let crack_paths: Vec<CrackPath<T>> =
            self.cracks.iter().map(|(_, p)| p.clone()).collect();
        let mut grid = crack_aware_relabel(grid, &crack_paths);

        let h1 = self.domain.width() / T::c((self.grid.nx - 1) as f64);
        let h2 = self.domain.height() / T::c((self.grid.ny - 1) as f64);
        for t in &self.tractions {
            match &t.target {
                TractionTarget::Edge(edge) => {
                    let n = match edge {
                        Edge::Top | Edge::Bottom => self.grid.nx,
                        Edge::Left | Edge::Right => self.grid.ny,
                    };
                    grid.boundary_segments
                        .push(edge_segment(&self.domain, *edge, n));
                }
                TractionTarget::CrackFace { crack, side } => {
                    let idx = self
                        .cracks
                        .iter()
                        .position(|(id, _)| id == crack)
                        .expect("validated crack reference");
                    grid.crack_face_segments.push(crack_face_segment(
                        &self.cracks[idx].1,
                        idx,
                        *side,
                        h1.min(h2),
                    ));
                }
            }
        }
        Ok(grid)
    }
}
