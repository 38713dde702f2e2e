//! Constitutive law, strain/stress evaluation and the discontinuous-form
//! potential energy that serves as the training loss.
//!
//! The energy is assembled twice over the same precomputed node data:
//!
//! * [`potential_energy`] records it on the autodiff tape (the reference
//!   path used by gradient checks and small problems);
//! * [`EnergyModel`] evaluates loss and parameter gradient with batched
//!   matrix kernels and a hand-derived reverse sweep (the training path).
//!
//! Both paths produce the same value and gradient up to rounding, which the
//! tests pin down.
//!
//! Units: lengths in m, moduli folded to MPa internally; the reported loss
//! and breakdown are in N·m per unit thickness.

use crate::autodiff::{ParamKey, ParamLayout, ParamRole, SpatialDual, Tape, Var};
use crate::expr::{eval_value, ExpressionAst};
use crate::geometry::Point2;
use crate::network::{forward_tape, NetConfig, NetParams, Trial, LAYERS_PER_BLOCK, N_COMPONENTS};
use crate::quadrature::QuadGrid;
use crate::scalar::Scalar;
use crate::scenario::{AnalysisMode, Scenario, TractionSpec, TractionTarget};
use crate::Error;
use ndarray::{s, Array1, Array2, ArrayView2, ArrayViewMut2, Axis, Zip};

/// Loss scale: MPa·m² folded to N·m per unit thickness.
const UNIT_FOLD: f64 = 1e6;

/// Nodes per evaluation block; fixed so that results are bit-identical for
/// any worker count.
const BLOCK: usize = 2048;

/// Linear-elastic material in a given analysis mode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Material<T> {
    pub e_gpa: T,
    pub nu: T,
    pub mode: AnalysisMode,
}

impl<T: Scalar> Material<T> {
    pub fn new(e_gpa: T, nu: T, mode: AnalysisMode) -> Result<Self, Error> {
        if e_gpa <= T::zero() {
            return Err(Error::Invalid("material: E must be positive".into()));
        }
        if nu <= -T::one() || nu >= T::c(0.5) {
            return Err(Error::Invalid(
                "material: Poisson ratio must lie in (-1, 0.5)".into(),
            ));
        }
        Ok(Material { e_gpa, nu, mode })
    }
}

/// Engineering strain in Voigt layout (`g12 = 2 e12`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StrainState<T> {
    pub e11: T,
    pub e22: T,
    pub g12: T,
}

/// Stress in Voigt layout, MPa.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StressState<T> {
    pub s11: T,
    pub s22: T,
    pub s12: T,
}

/// 3x3 stiffness matrix in MPa (Voigt layout).
pub fn elastic_matrix<T: Scalar>(m: &Material<T>) -> [[T; 3]; 3] {
    let [c11, c12, c33] = elastic_coeffs(m);
    let z = T::zero();
    [[c11, c12, z], [c12, c11, z], [z, z, c33]]
}

/// The three independent entries `(c11, c12, c33)` of the stiffness matrix,
/// in MPa.
pub fn elastic_coeffs<T: Scalar>(m: &Material<T>) -> [T; 3] {
    let e_mpa = m.e_gpa * T::c(1000.0);
    let nu = m.nu;
    let one = T::one();
    let half = T::c(0.5);
    match m.mode {
        AnalysisMode::PlaneStress => {
            let f = e_mpa / (one - nu * nu);
            [f, f * nu, f * (one - nu) * half]
        }
        AnalysisMode::PlaneStrain => {
            let f = e_mpa / ((one + nu) * (one - T::c(2.0) * nu));
            [f * (one - nu), f * nu, f * (one - T::c(2.0) * nu) * half]
        }
    }
}

/// Symmetric part of the displacement gradient:
/// `e11 = u1,1`, `e22 = u2,2`, `g12 = u1,2 + u2,1`.
pub fn strain_from_grad<T: Scalar>(grad: [[T; 2]; 2]) -> StrainState<T> {
    StrainState {
        e11: grad[0][0],
        e22: grad[1][1],
        g12: grad[0][1] + grad[1][0],
    }
}

pub fn stress_from_strain<T: Scalar>(e: &StrainState<T>, m: &Material<T>) -> StressState<T> {
    let [c11, c12, c33] = elastic_coeffs(m);
    StressState {
        s11: c11 * e.e11 + c12 * e.e22,
        s22: c12 * e.e11 + c11 * e.e22,
        s12: c33 * e.g12,
    }
}

/// `1/2 e : C : e` in MPa.
pub fn strain_energy_density<T: Scalar>(e: &StrainState<T>, m: &Material<T>) -> T {
    let s = stress_from_strain(e, m);
    T::c(0.5) * (s.s11 * e.e11 + s.s22 * e.e22 + s.s12 * e.g12)
}

/// In-plane comparison stress `sqrt((s11 - s22)^2 / 2 + 3 s12^2)`, the
/// shear-dominated von Mises reduction used for field comparisons. Note it
/// deliberately drops the hydrostatic in-plane part, so equibiaxial states
/// report zero.
pub fn von_mises_reduced<T: Scalar>(s: &StressState<T>) -> T {
    let d = s.s11 - s.s22;
    (d * d * T::c(0.5) + T::c(3.0) * s.s12 * s.s12).sqrt()
}

/// Signed sum of the energy contributions, N·m per unit thickness.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyBreakdown<T> {
    pub strain_energy: T,
    pub boundary_traction_work: T,
    pub crack_traction_work: T,
    pub body_work: T,
}

impl<T: Scalar> EnergyBreakdown<T> {
    pub fn total(&self) -> T {
        self.strain_energy - self.boundary_traction_work - self.crack_traction_work - self.body_work
    }
}

// ---------------------------------------------------------------------------
// Node assembly shared by both energy paths
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum NodeKind {
    Interior,
    Boundary,
    CrackFace,
}

#[derive(Debug, Clone)]
struct NodeData<T> {
    point: Point2<T>,
    kind: NodeKind,
    aug: Vec<T>,
    jac: Vec<[T; 2]>,
    /// Constraint factor tables per component.
    a: [T; 2],
    da: [[T; 2]; 2],
    b: [T; 2],
    db: [[T; 2]; 2],
    /// Stiffness entries (MPa); zero off the interior.
    cmat: [T; 3],
    w_strain: T,
    body_load: [T; 2],
    boundary_load: [T; 2],
    crack_load: [T; 2],
}

fn is_zero_expr(e: &ExpressionAst) -> bool {
    matches!(e, ExpressionAst::Constant(c) if *c == 0.0)
}

fn traction_for_edge<'a, T>(
    scenario: &'a Scenario<T>,
    edge: crate::quadrature::Edge,
) -> Option<&'a TractionSpec> {
    scenario
        .tractions
        .iter()
        .find(|t| matches!(&t.target, TractionTarget::Edge(e) if *e == edge))
}

fn traction_for_face<'a, T>(
    scenario: &'a Scenario<T>,
    crack_id: &str,
    side: i8,
) -> Option<&'a TractionSpec> {
    scenario.tractions.iter().find(
        |t| matches!(&t.target, TractionTarget::CrackFace { crack, side: s } if crack == crack_id && *s == side),
    )
}

fn assemble_nodes<T: Scalar>(
    scenario: &Scenario<T>,
    grid: &QuadGrid<T>,
    trial: &Trial<T>,
) -> Result<Vec<NodeData<T>>, Error> {
    let mut nodes = Vec::with_capacity(grid.nodes.len());
    let body_active =
        !is_zero_expr(&scenario.body_force[0]) || !is_zero_expr(&scenario.body_force[1]);

    let mut push = |point: Point2<T>,
                    kind: NodeKind,
                    sides: Option<&[i8]>,
                    w_strain: T,
                    body_load: [T; 2],
                    boundary_load: [T; 2],
                    crack_load: [T; 2],
                    cmat: [T; 3]|
     -> Result<(), Error> {
        let (aug, jac) =
            crate::geometry::embed_inputs(point, &trial.specs, sides, Some(&trial.scales));
        let mut a = [T::zero(); 2];
        let mut da = [[T::zero(); 2]; 2];
        let mut b = [T::zero(); 2];
        let mut db = [[T::zero(); 2]; 2];
        for c in 0..N_COMPONENTS {
            let (av, dav) = crate::expr::eval_expression(&trial.constraints[c].a, point.as_array())?;
            let (bv, dbv) = crate::expr::eval_expression(&trial.constraints[c].b, point.as_array())?;
            // Fold the trial's fixed output scale into the constraint factor:
            // u = A (s net) + B = (s A) net + B.
            a[c] = av * trial.output_scale;
            da[c] = [dav[0] * trial.output_scale, dav[1] * trial.output_scale];
            b[c] = bv;
            db[c] = dbv;
        }
        nodes.push(NodeData {
            point,
            kind,
            aug,
            jac,
            a,
            da,
            b,
            db,
            cmat,
            w_strain,
            body_load,
            boundary_load,
            crack_load,
        });
        Ok(())
    };

    // Interior: strain energy and body-force work.
    for node in &grid.nodes {
        let mat = scenario.material_at(node.point).ok_or_else(|| {
            Error::Invalid(format!("no material covers node at {}", node.point))
        })?;
        let material = Material::new(mat.e_gpa, mat.nu, scenario.mode)?;
        let cmat = elastic_coeffs(&material);
        let body = if body_active {
            [
                node.weight * eval_value(&scenario.body_force[0], node.point.as_array())?,
                node.weight * eval_value(&scenario.body_force[1], node.point.as_array())?,
            ]
        } else {
            [T::zero(); 2]
        };
        let sides = if node.sides.is_empty() {
            None
        } else {
            Some(node.sides.as_slice())
        };
        push(
            node.point,
            NodeKind::Interior,
            sides,
            node.weight,
            body,
            [T::zero(); 2],
            [T::zero(); 2],
            cmat,
        )?;
    }

    // Loaded domain edges.
    for seg in &grid.boundary_segments {
        let spec = traction_for_edge(scenario, seg.edge).ok_or_else(|| {
            Error::Invalid(format!("no traction defined for edge '{}'", seg.edge.name()))
        })?;
        for (p, w) in &seg.nodes {
            let t1 = eval_value(&spec.t1, p.as_array())?;
            let t2 = eval_value(&spec.t2, p.as_array())?;
            push(
                *p,
                NodeKind::Boundary,
                None,
                T::zero(),
                [T::zero(); 2],
                [*w * t1, *w * t2],
                [T::zero(); 2],
                [T::zero(); 3],
            )?;
        }
    }

    // Loaded crack faces: evaluate on the forced side of the jump.
    for seg in &grid.crack_face_segments {
        let crack_id = &scenario.cracks[seg.crack_index].0;
        let spec = traction_for_face(scenario, crack_id, seg.side).ok_or_else(|| {
            Error::Invalid(format!(
                "no traction defined for crack face '{crack_id}{}'",
                if seg.side > 0 { '+' } else { '-' }
            ))
        })?;
        let mut sides = vec![0i8; trial.specs.len()];
        if let Some(k) = trial
            .specs
            .iter()
            .position(|sp| sp.id() == crack_id.as_str())
        {
            sides[k] = seg.side;
        }
        for (p, w) in &seg.nodes {
            let t1 = eval_value(&spec.t1, p.as_array())?;
            let t2 = eval_value(&spec.t2, p.as_array())?;
            push(
                *p,
                NodeKind::CrackFace,
                Some(&sides),
                T::zero(),
                [T::zero(); 2],
                [T::zero(); 2],
                [*w * t1, *w * t2],
                [T::zero(); 3],
            )?;
        }
    }

    Ok(nodes)
}

// ---------------------------------------------------------------------------
// Tape route
// ---------------------------------------------------------------------------

/// Potential energy recorded on the tape, ready for a reverse sweep.
pub struct RecordedEnergy<T> {
    pub tape: Tape<T>,
    pub theta: Vec<Var<T>>,
    pub loss: Var<T>,
    pub breakdown: EnergyBreakdown<T>,
}

impl<T: Scalar> RecordedEnergy<T> {
    /// Gradient of the loss with respect to the flat parameter vector.
    pub fn gradient(&self) -> Result<Vec<T>, Error> {
        Ok(self.tape.gradient(&self.loss)?)
    }
}

/// Assembles the total potential energy on the autodiff tape: strain energy
/// over interior nodes, minus boundary-traction, crack-face-traction and
/// body-force work. Traction-free crack faces contribute nothing and are
/// satisfied automatically by the variational form.
pub fn potential_energy<T: Scalar>(
    params: &NetParams<T>,
    scenario: &Scenario<T>,
    grid: &QuadGrid<T>,
) -> Result<RecordedEnergy<T>, Error> {
    let trial = Trial::from_scenario(scenario);
    let nodes = assemble_nodes(scenario, grid, &trial)?;
    let layout = params.config.param_layout();

    let tape: Tape<T> = Tape::new();
    let theta = tape.inputs(&params.params.values);

    let mut strain_energy = tape.constant(T::zero());
    let mut boundary_work = tape.constant(T::zero());
    let mut crack_work = tape.constant(T::zero());
    let mut body_work = tape.constant(T::zero());

    for (i, node) in nodes.iter().enumerate() {
        // Trial displacement with spatial channels at this node.
        let (x1d, x2d) = crate::autodiff::spatial_seed(&tape, [node.aug[0], node.aug[1]]);
        let mut inputs = vec![x1d, x2d];
        for k in 2..node.aug.len() {
            inputs.push(SpatialDual::lift(&tape, node.aug[k], node.jac[k]));
        }
        let mut u = Vec::with_capacity(N_COMPONENTS);
        for c in 0..N_COMPONENTS {
            let u_hat = forward_tape(&theta, &params.config, &layout, c, &inputs);
            let a_dual = SpatialDual::lift(&tape, node.a[c], node.da[c]);
            let b_dual = SpatialDual::lift(&tape, node.b[c], node.db[c]);
            u.push(a_dual.mul(&u_hat).add(&b_dual));
        }

        match node.kind {
            NodeKind::Interior => {
                let e11 = &u[0].dx1;
                let e22 = &u[1].dx2;
                let g12 = &u[0].dx2 + &u[1].dx1;
                let sum_sq = &(&(e11 * e11) + &(e22 * e22)).scale(node.cmat[0])
                    + &(e11 * e22).scale(T::c(2.0) * node.cmat[1]);
                let density = (&sum_sq + &(&g12 * &g12).scale(node.cmat[2])).scale(T::c(0.5));
                if !density.value().is_finite() {
                    return Err(Error::Invalid(format!(
                        "non-finite energy density at node {i} ({})",
                        node.point
                    )));
                }
                strain_energy = &strain_energy + &density.scale(node.w_strain);
                if node.body_load[0] != T::zero() || node.body_load[1] != T::zero() {
                    let w = &u[0].v.scale(node.body_load[0]) + &u[1].v.scale(node.body_load[1]);
                    body_work = &body_work + &w;
                }
            }
            NodeKind::Boundary => {
                let w =
                    &u[0].v.scale(node.boundary_load[0]) + &u[1].v.scale(node.boundary_load[1]);
                boundary_work = &boundary_work + &w;
            }
            NodeKind::CrackFace => {
                let w = &u[0].v.scale(node.crack_load[0]) + &u[1].v.scale(node.crack_load[1]);
                crack_work = &crack_work + &w;
            }
        }
    }

    let fold = T::c(UNIT_FOLD);
    let total = &(&(&strain_energy - &boundary_work) - &crack_work) - &body_work;
    let loss = total.scale(fold);
    tape.check()?;
    if !loss.value().is_finite() {
        return Err(Error::Invalid("non-finite total potential energy".into()));
    }
    let breakdown = EnergyBreakdown {
        strain_energy: strain_energy.value() * fold,
        boundary_traction_work: boundary_work.value() * fold,
        crack_traction_work: crack_work.value() * fold,
        body_work: body_work.value() * fold,
    };
    Ok(RecordedEnergy {
        tape,
        theta,
        loss,
        breakdown,
    })
}

// ---------------------------------------------------------------------------
// Batched fast route
// ---------------------------------------------------------------------------

/// Precomputed batched energy evaluator. Everything that does not depend on
/// the parameters (embeddings, constraint factors, stiffness entries, load
/// tables) is packed into column arrays once; each epoch is then a forward
/// and reverse sweep of dense layer kernels.
///
/// Evaluation runs in fixed-size node blocks accumulated in block order, so
/// results are bit-identical for any worker count.
pub struct EnergyModel<T> {
    config: NetConfig,
    layout: ParamLayout,
    n: usize,
    /// `(input_dim, 3n)` packed input: value, d/dx1 and d/dx2 channel
    /// blocks.
    x: Array2<T>,
    a: [Array1<T>; 2],
    dax: [Array1<T>; 2],
    day: [Array1<T>; 2],
    db_x: [Array1<T>; 2],
    db_y: [Array1<T>; 2],
    b_val: [Array1<T>; 2],
    c11w: Array1<T>,
    c12w: Array1<T>,
    c33w: Array1<T>,
    w_strain: Array1<T>,
    body_load: [Array1<T>; 2],
    boundary_load: [Array1<T>; 2],
    crack_load: [Array1<T>; 2],
    points: Vec<Point2<T>>,
    /// Worker threads; blocks are summed in order regardless.
    pub threads: usize,
}

struct BlockOut<T> {
    strain: T,
    boundary: T,
    crack: T,
    body: T,
    grad: Option<Vec<T>>,
    bad_node: Option<usize>,
}

impl<T: Scalar> EnergyModel<T> {
    pub fn new(scenario: &Scenario<T>, grid: &QuadGrid<T>) -> Result<Self, Error> {
        let trial = Trial::from_scenario(scenario);
        let nodes = assemble_nodes(scenario, grid, &trial)?;
        let n = nodes.len();
        let d = trial.config.input_dim;

        let mut x = Array2::zeros((d, 3 * n));
        let mut model = EnergyModel {
            config: trial.config,
            layout: trial.config.param_layout(),
            n,
            x: Array2::zeros((0, 0)),
            a: [Array1::zeros(n), Array1::zeros(n)],
            dax: [Array1::zeros(n), Array1::zeros(n)],
            day: [Array1::zeros(n), Array1::zeros(n)],
            db_x: [Array1::zeros(n), Array1::zeros(n)],
            db_y: [Array1::zeros(n), Array1::zeros(n)],
            b_val: [Array1::zeros(n), Array1::zeros(n)],
            c11w: Array1::zeros(n),
            c12w: Array1::zeros(n),
            c33w: Array1::zeros(n),
            w_strain: Array1::zeros(n),
            body_load: [Array1::zeros(n), Array1::zeros(n)],
            boundary_load: [Array1::zeros(n), Array1::zeros(n)],
            crack_load: [Array1::zeros(n), Array1::zeros(n)],
            points: Vec::with_capacity(n),
            threads: 1,
        };
        for (i, node) in nodes.iter().enumerate() {
            for k in 0..d {
                x[[k, i]] = node.aug[k];
                x[[k, n + i]] = node.jac[k][0];
                x[[k, 2 * n + i]] = node.jac[k][1];
            }
            for c in 0..N_COMPONENTS {
                model.a[c][i] = node.a[c];
                model.dax[c][i] = node.da[c][0];
                model.day[c][i] = node.da[c][1];
                model.b_val[c][i] = node.b[c];
                model.db_x[c][i] = node.db[c][0];
                model.db_y[c][i] = node.db[c][1];
                model.body_load[c][i] = node.body_load[c];
                model.boundary_load[c][i] = node.boundary_load[c];
                model.crack_load[c][i] = node.crack_load[c];
            }
            model.c11w[i] = node.cmat[0];
            model.c12w[i] = node.cmat[1];
            model.c33w[i] = node.cmat[2];
            model.w_strain[i] = node.w_strain;
            model.points.push(node.point);
        }
        model.x = x;
        Ok(model)
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    fn check_params(&self, params: &NetParams<T>) -> Result<(), Error> {
        if params.config != self.config {
            return Err(Error::Invalid(format!(
                "parameter config {:?} does not match model config {:?}",
                params.config, self.config
            )));
        }
        Ok(())
    }

    /// Loss and breakdown only.
    pub fn loss(&self, params: &NetParams<T>) -> Result<(T, EnergyBreakdown<T>), Error> {
        let (loss, breakdown, _) = self.eval(params, false)?;
        Ok((loss, breakdown))
    }

    /// Loss, breakdown and the parameter gradient.
    pub fn loss_grad(
        &self,
        params: &NetParams<T>,
    ) -> Result<(T, EnergyBreakdown<T>, Vec<T>), Error> {
        let (loss, breakdown, grad) = self.eval(params, true)?;
        Ok((loss, breakdown, grad.expect("gradient requested")))
    }

    fn eval(
        &self,
        params: &NetParams<T>,
        with_grad: bool,
    ) -> Result<(T, EnergyBreakdown<T>, Option<Vec<T>>), Error> {
        self.check_params(params)?;
        let ranges: Vec<(usize, usize)> = (0..self.n)
            .step_by(BLOCK)
            .map(|s| (s, (s + BLOCK).min(self.n)))
            .collect();

        let mut outs: Vec<Option<BlockOut<T>>> = (0..ranges.len()).map(|_| None).collect();
        let workers = self.threads.max(1).min(ranges.len().max(1));
        if workers <= 1 {
            for (k, r) in ranges.iter().enumerate() {
                outs[k] = Some(self.eval_block(params, r.0, r.1, with_grad));
            }
        } else {
            // Whole blocks go to workers; per-block math is unchanged, so
            // the ordered reduction below gives thread-count-independent
            // results.
            let next = std::sync::atomic::AtomicUsize::new(0);
            let outs_mx = std::sync::Mutex::new(&mut outs);
            std::thread::scope(|scope| {
                for _ in 0..workers {
                    scope.spawn(|| loop {
                        let k = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                        if k >= ranges.len() {
                            break;
                        }
                        let out = self.eval_block(params, ranges[k].0, ranges[k].1, with_grad);
                        outs_mx.lock().unwrap()[k] = Some(out);
                    });
                }
            });
        }

        let fold = T::c(UNIT_FOLD);
        let mut strain = T::zero();
        let mut boundary = T::zero();
        let mut crack = T::zero();
        let mut body = T::zero();
        let mut grad = if with_grad {
            Some(vec![T::zero(); params.params.len()])
        } else {
            None
        };
        for (k, out) in outs.into_iter().enumerate() {
            let out = out.expect("block evaluated");
            if let Some(i) = out.bad_node {
                return Err(Error::Invalid(format!(
                    "non-finite energy density at node {i} ({})",
                    self.points[i]
                )));
            }
            strain += out.strain;
            boundary += out.boundary;
            crack += out.crack;
            body += out.body;
            if let (Some(g), Some(bg)) = (grad.as_mut(), out.grad.as_ref()) {
                for (gi, bgi) in g.iter_mut().zip(bg) {
                    *gi += *bgi;
                }
            }
            let _ = k;
        }
        let breakdown = EnergyBreakdown {
            strain_energy: strain * fold,
            boundary_traction_work: boundary * fold,
            crack_traction_work: crack * fold,
            body_work: body * fold,
        };
        let loss = (strain - boundary - crack - body) * fold;
        if !loss.is_finite() {
            return Err(Error::Invalid("non-finite total potential energy".into()));
        }
        if let Some(g) = grad.as_mut() {
            for gi in g.iter_mut() {
                *gi *= fold;
            }
        }
        Ok((loss, breakdown, grad))
    }

    fn weight_view<'a>(
        &self,
        params: &'a NetParams<T>,
        network: usize,
        layer: usize,
    ) -> ArrayView2<'a, T> {
        let (o, i) = self.config.layer_dims(layer);
        ArrayView2::from_shape((o, i), params.weight(network, layer)).unwrap()
    }

    #[allow(clippy::too_many_lines)]
    fn eval_block(
        &self,
        params: &NetParams<T>,
        start: usize,
        end: usize,
        with_grad: bool,
    ) -> BlockOut<T> {
        let m = end - start;
        let n = self.n;
        // Gather the three channel blocks for this node range.
        let mut x = Array2::zeros((self.config.input_dim, 3 * m));
        x.slice_mut(s![.., 0..m])
            .assign(&self.x.slice(s![.., start..end]));
        x.slice_mut(s![.., m..2 * m])
            .assign(&self.x.slice(s![.., n + start..n + end]));
        x.slice_mut(s![.., 2 * m..3 * m])
            .assign(&self.x.slice(s![.., 2 * n + start..2 * n + end]));

        let blocks = self.config.residual_blocks;
        let n_layers = self.config.layers_per_component();
        // Forward traces per component: pre-activations and activations per
        // tanh layer, block inputs, and the head output channels.
        let mut zs: Vec<Vec<Array2<T>>> = vec![Vec::new(); N_COMPONENTS];
        let mut hs: Vec<Vec<Array2<T>>> = vec![Vec::new(); N_COMPONENTS];
        let mut ys: Vec<Vec<Array2<T>>> = vec![Vec::new(); N_COMPONENTS];
        let mut u_hat: Vec<Array2<T>> = Vec::new();

        for c in 0..N_COMPONENTS {
            let mut z = self.weight_view(params, c, 0).dot(&x);
            add_bias(&mut z, params.bias(c, 0), m);
            let h = activate(&z, m);
            zs[c].push(z);
            let mut y = h.clone();
            hs[c].push(h);
            let mut layer = 1;
            for _ in 0..blocks {
                ys[c].push(y.clone());
                let mut cur = y.clone();
                for _ in 0..LAYERS_PER_BLOCK {
                    let mut z = self.weight_view(params, c, layer).dot(&cur);
                    add_bias(&mut z, params.bias(c, layer), m);
                    cur = activate(&z, m);
                    zs[c].push(z);
                    hs[c].push(cur.clone());
                    layer += 1;
                }
                y += &cur;
            }
            ys[c].push(y.clone());
            let mut zh = self.weight_view(params, c, n_layers - 1).dot(&y);
            add_bias(&mut zh, params.bias(c, n_layers - 1), m);
            u_hat.push(zh);
        }

        // Hard constraint and strain on the node range.
        let a0 = self.a[0].slice(s![start..end]);
        let a1 = self.a[1].slice(s![start..end]);
        let mut strain = T::zero();
        let mut boundary = T::zero();
        let mut crack = T::zero();
        let mut body = T::zero();
        let mut bad_node = None;

        // Adjoint seeds per component: value, x1- and x2-channel rows.
        let mut useed: Vec<Array2<T>> = (0..N_COMPONENTS)
            .map(|_| Array2::zeros((1, 3 * m)))
            .collect();

        for i in 0..m {
            let gi = start + i;
            let uh = [u_hat[0][[0, i]], u_hat[1][[0, i]]];
            let uhp = [u_hat[0][[0, m + i]], u_hat[1][[0, m + i]]];
            let uhq = [u_hat[0][[0, 2 * m + i]], u_hat[1][[0, 2 * m + i]]];
            let av = [a0[i], a1[i]];
            let mut u = [T::zero(); 2];
            let mut ux = [T::zero(); 2];
            let mut uy = [T::zero(); 2];
            for c in 0..N_COMPONENTS {
                u[c] = av[c] * uh[c] + self.b_val[c][gi];
                ux[c] = self.dax[c][gi] * uh[c] + av[c] * uhp[c] + self.db_x[c][gi];
                uy[c] = self.day[c][gi] * uh[c] + av[c] * uhq[c] + self.db_y[c][gi];
            }
            let w = self.w_strain[gi];
            let e11 = ux[0];
            let e22 = uy[1];
            let g12 = uy[0] + ux[1];
            let s11 = self.c11w[gi] * e11 + self.c12w[gi] * e22;
            let s22 = self.c12w[gi] * e11 + self.c11w[gi] * e22;
            let s12 = self.c33w[gi] * g12;
            let density = T::c(0.5) * (s11 * e11 + s22 * e22 + s12 * g12);
            if !density.is_finite() && bad_node.is_none() {
                bad_node = Some(gi);
            }
            strain += w * density;
            boundary += self.boundary_load[0][gi] * u[0] + self.boundary_load[1][gi] * u[1];
            crack += self.crack_load[0][gi] * u[0] + self.crack_load[1][gi] * u[1];
            body += self.body_load[0][gi] * u[0] + self.body_load[1][gi] * u[1];

            if with_grad {
                // d(loss)/du and /d(grad u), then through the constraint.
                let ubar = [
                    -(self.boundary_load[0][gi] + self.crack_load[0][gi] + self.body_load[0][gi]),
                    -(self.boundary_load[1][gi] + self.crack_load[1][gi] + self.body_load[1][gi]),
                ];
                let uxbar = [w * s11, w * s12];
                let uybar = [w * s12, w * s22];
                for c in 0..N_COMPONENTS {
                    useed[c][[0, i]] = av[c] * ubar[c]
                        + self.dax[c][gi] * uxbar[c]
                        + self.day[c][gi] * uybar[c];
                    useed[c][[0, m + i]] = av[c] * uxbar[c];
                    useed[c][[0, 2 * m + i]] = av[c] * uybar[c];
                }
            }
        }

        if !with_grad {
            return BlockOut {
                strain,
                boundary,
                crack,
                body,
                grad: None,
                bad_node,
            };
        }

        // Reverse sweep through both networks.
        let mut grad = vec![T::zero(); params.params.len()];
        for c in 0..N_COMPONENTS {
            let head_layer = n_layers - 1;
            let y_last = &ys[c][blocks];
            // Head: u_hat = w_h . y + b_h.
            accumulate_linear_grads(
                &mut grad,
                &self.layout,
                c,
                head_layer,
                &useed[c],
                y_last,
                m,
            );
            let mut ybar = self
                .weight_view(params, c, head_layer)
                .t()
                .dot(&useed[c]);

            let mut layer = n_layers - 2;
            for k in (0..blocks).rev() {
                // Block output adjoint = ybar; it feeds both the skip path
                // and the two tanh layers of the branch.
                let idx_b = 1 + k * LAYERS_PER_BLOCK + 1;
                let idx_a = 1 + k * LAYERS_PER_BLOCK;
                let zbar_b = activate_reverse(&zs[c][idx_b], &hs[c][idx_b], &ybar, m);
                accumulate_linear_grads(
                    &mut grad,
                    &self.layout,
                    c,
                    layer,
                    &zbar_b,
                    &hs[c][idx_a],
                    m,
                );
                let hbar_a = self.weight_view(params, c, layer).t().dot(&zbar_b);
                layer -= 1;
                let zbar_a = activate_reverse(&zs[c][idx_a], &hs[c][idx_a], &hbar_a, m);
                accumulate_linear_grads(&mut grad, &self.layout, c, layer, &zbar_a, &ys[c][k], m);
                let branch_bar = self.weight_view(params, c, layer).t().dot(&zbar_a);
                ybar += &branch_bar;
                if layer > 0 {
                    layer -= 1;
                }
            }
            // Stem.
            let zbar_0 = activate_reverse(&zs[c][0], &hs[c][0], &ybar, m);
            accumulate_linear_grads(&mut grad, &self.layout, c, 0, &zbar_0, &x, m);
        }

        BlockOut {
            strain,
            boundary,
            crack,
            body,
            grad: Some(grad),
            bad_node,
        }
    }
}

/// Adds the bias to the value-channel block only; the derivative channels
/// of a constant are zero.
fn add_bias<T: Scalar>(z: &mut Array2<T>, bias: &[T], m: usize) {
    let mut v = z.slice_mut(s![.., 0..m]);
    for (mut row, b) in v.axis_iter_mut(Axis(0)).zip(bias) {
        row.mapv_inplace(|z| z + *b);
    }
}

/// Channel-coupled tanh: `h = tanh(z)` on values, `h' = (1 - h^2) z'` on the
/// derivative channels.
fn activate<T: Scalar>(z: &Array2<T>, m: usize) -> Array2<T> {
    let rows = z.nrows();
    let mut h = Array2::zeros((rows, 3 * m));
    {
        let mut hv = h.slice_mut(s![.., 0..m]);
        hv.assign(&z.slice(s![.., 0..m]));
        hv.mapv_inplace(|v| v.tanh());
    }
    let (hv, mut rest) = h.view_mut().split_at(Axis(1), m);
    let (mut hp, mut hq) = rest.view_mut().split_at(Axis(1), m);
    Zip::from(&mut hp)
        .and(&hv)
        .and(&z.slice(s![.., m..2 * m]))
        .for_each(|hp, hv, zp| *hp = (T::one() - *hv * *hv) * *zp);
    Zip::from(&mut hq)
        .and(&hv)
        .and(&z.slice(s![.., 2 * m..3 * m]))
        .for_each(|hq, hv, zq| *hq = (T::one() - *hv * *hv) * *zq);
    h
}

/// Reverse of [`activate`]: given the adjoint of `h`, produce the adjoint
/// of `z`. The value channel collects the derivative-channel coupling
/// `-2 h (1 - h^2) z' hbar'`.
fn activate_reverse<T: Scalar>(
    z: &Array2<T>,
    h: &Array2<T>,
    hbar: &Array2<T>,
    m: usize,
) -> Array2<T> {
    let rows = z.nrows();
    let mut zbar = Array2::zeros((rows, 3 * m));
    let two = T::c(2.0);
    for r in 0..rows {
        for i in 0..m {
            let hv = h[[r, i]];
            let s = T::one() - hv * hv;
            let zp = z[[r, m + i]];
            let zq = z[[r, 2 * m + i]];
            let hb = hbar[[r, i]];
            let hbp = hbar[[r, m + i]];
            let hbq = hbar[[r, 2 * m + i]];
            zbar[[r, i]] = s * hb - two * hv * s * (zp * hbp + zq * hbq);
            zbar[[r, m + i]] = s * hbp;
            zbar[[r, 2 * m + i]] = s * hbq;
        }
    }
    zbar
}

/// `W_bar += z_bar . input^T` (all three channel blocks at once) and
/// `b_bar += row-sum of the value-channel adjoint`.
fn accumulate_linear_grads<T: Scalar>(
    grad: &mut [T],
    layout: &ParamLayout,
    network: usize,
    layer: usize,
    zbar: &Array2<T>,
    input: &Array2<T>,
    m: usize,
) {
    let wbar = zbar.dot(&input.t());
    let wr = layout
        .range(ParamKey {
            network,
            layer,
            role: ParamRole::Weight,
        })
        .unwrap();
    let mut wslice = ArrayViewMut2::from_shape(wbar.dim(), &mut grad[wr]).unwrap();
    wslice += &wbar;
    let br = layout
        .range(ParamKey {
            network,
            layer,
            role: ParamRole::Bias,
        })
        .unwrap();
    let bslice = &mut grad[br];
    for (r, row) in zbar.slice(s![.., 0..m]).axis_iter(Axis(0)).enumerate() {
        bslice[r] += row.sum();
    }
}

// ---------------------------------------------------------------------------
// Field export
// ---------------------------------------------------------------------------

/// Samples the solution on an `nx x ny` evaluation lattice and returns the
/// table `u1, u2, s11, s22, s12, svm` (displacements in m, stresses in MPa).
pub fn solution_field_table<T: Scalar>(
    scenario: &Scenario<T>,
    params: &NetParams<T>,
    nx: usize,
    ny: usize,
) -> Result<crate::field::FieldTable<T>, Error> {
    let trial = Trial::from_scenario(scenario);
    let mut table = crate::field::FieldTable::new(
        ["u1", "u2", "s11", "s22", "s12", "svm"]
            .iter()
            .map(|s| s.to_string())
            .collect(),
    );
    let r = scenario.domain;
    let h1 = r.width() / T::c((nx - 1) as f64);
    let h2 = r.height() / T::c((ny - 1) as f64);
    for j in 0..ny {
        for i in 0..nx {
            let p = Point2::new(
                if i == nx - 1 { r.x_max } else { r.x_min + h1 * T::c(i as f64) },
                if j == ny - 1 { r.y_max } else { r.y_min + h2 * T::c(j as f64) },
            );
            let d = trial.displacement_plain(params, p, None)?;
            let mat = scenario
                .material_at(p)
                .ok_or_else(|| Error::Invalid(format!("no material covers point {p}")))?;
            let material = Material::new(mat.e_gpa, mat.nu, scenario.mode)?;
            let strain = strain_from_grad(d.grad);
            let stress = stress_from_strain(&strain, &material);
            table.push_row(
                [p.x1, p.x2],
                &[
                    d.u[0],
                    d.u[1],
                    stress.s11,
                    stress.s22,
                    stress.s12,
                    von_mises_reduced(&stress),
                ],
            )?;
        }
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::init_params;
    use crate::scenario::parse_scenario;

    fn material(mode: AnalysisMode) -> Material<f64> {
        Material::new(100.0, 0.3, mode).unwrap()
    }

    #[test]
    fn elastic_matrix_decouples_at_zero_poisson() {
        let m = Material::new(100.0, 0.0, AnalysisMode::PlaneStress).unwrap();
        let c = elastic_matrix(&m);
        let e_mpa = 100.0e3;
        assert_eq!(c[0][0], e_mpa);
        assert_eq!(c[1][1], e_mpa);
        assert_eq!(c[0][1], 0.0);
        assert_eq!(c[2][2], 0.5 * e_mpa);
    }

    #[test]
    fn plane_strain_leading_entry() {
        let c = elastic_matrix(&material(AnalysisMode::PlaneStrain));
        // E (1 - nu) / ((1 + nu)(1 - 2 nu)) = 100 * 0.7 / (1.3 * 0.4) GPa.
        let expected_gpa = 100.0 * 0.7 / (1.3 * 0.4);
        assert!((c[0][0] / 1000.0 - expected_gpa).abs() < 1e-9);
        assert!((c[0][0] - 134_615.384615).abs() < 1e-3);
    }

    #[test]
    fn elastic_matrix_is_spd_for_valid_materials() {
        for &(e, nu) in &[(1.0, -0.9), (10.0, 0.0), (100.0, 0.3), (200.0, 0.49)] {
            for mode in [AnalysisMode::PlaneStress, AnalysisMode::PlaneStrain] {
                let c = elastic_matrix(&Material::new(e, nu, mode).unwrap());
                // Leading principal minors of the symmetric matrix.
                let m1 = c[0][0];
                let m2 = c[0][0] * c[1][1] - c[0][1] * c[0][1];
                let m3 = m2 * c[2][2];
                assert!(m1 > 0.0 && m2 > 0.0 && m3 > 0.0, "E={e}, nu={nu}");
            }
        }
        assert!(Material::<f64>::new(100.0, 0.5, AnalysisMode::PlaneStrain).is_err());
    }

    #[test]
    fn strain_from_gradient_cases() {
        // Rigid rotation produces no strain.
        let s = strain_from_grad([[0.0, -0.3], [0.3, 0.0]]);
        assert_eq!((s.e11, s.e22, s.g12), (0.0, 0.0, 0.0));
        // Uniaxial stretch.
        let s = strain_from_grad([[2e-3, 0.0], [0.0, 0.0]]);
        assert_eq!((s.e11, s.e22, s.g12), (2e-3, 0.0, 0.0));
        // Simple shear u1 = k x2.
        let s = strain_from_grad([[0.0, 0.4], [0.0, 0.0]]);
        assert_eq!((s.e11, s.e22, s.g12), (0.0, 0.0, 0.4));
    }

    #[test]
    fn energy_density_matches_half_stress_contraction() {
        let m = material(AnalysisMode::PlaneStress);
        let zero = StrainState {
            e11: 0.0,
            e22: 0.0,
            g12: 0.0,
        };
        assert_eq!(strain_energy_density(&zero, &m), 0.0);
        // Uniaxial strain in plane stress: density = E a^2 / (2 (1 - nu^2)).
        let a = 1e-3;
        let s = StrainState {
            e11: a,
            e22: 0.0,
            g12: 0.0,
        };
        let expected = 0.5 * 100.0e3 / (1.0 - 0.09) * a * a;
        assert!((strain_energy_density(&s, &m) - expected).abs() <= 1e-12 * expected);
        // Identity 1/2 sigma : eps for a generic state.
        let s = StrainState {
            e11: 2e-4,
            e22: -1e-4,
            g12: 3e-4,
        };
        let sig = stress_from_strain(&s, &m);
        let direct = 0.5 * (sig.s11 * s.e11 + sig.s22 * s.e22 + sig.s12 * s.g12);
        assert!((strain_energy_density(&s, &m) - direct).abs() <= 1e-15 * direct.abs());
    }

    #[test]
    fn comparison_stress_formula() {
        let hydro = StressState {
            s11: 7.0,
            s22: 7.0,
            s12: 0.0,
        };
        assert_eq!(von_mises_reduced(&hydro), 0.0);
        let shear = StressState {
            s11: 0.0,
            s22: 0.0,
            s12: 2.0,
        };
        assert!((von_mises_reduced(&shear) - 3f64.sqrt() * 2.0).abs() < 1e-14);
        let uni = StressState {
            s11: 1.0,
            s22: 0.0,
            s12: 0.0,
        };
        assert!((von_mises_reduced(&uni) - 1.0 / 2f64.sqrt()).abs() < 1e-14);
    }

    const PATCH: &str = r#"
mode = "plane_stress"
seed = 1

[domain]
x = [0.0, 1.0]
y = [0.0, 1.0]

[material.m]
e = 100.0
nu = 0.3
region = "whole"

[constraint.u1]
A = "0"
B = "0.0001*x1"

[constraint.u2]
A = "0"
B = "-0.00003*x2"

[traction.right]
t1 = "10"
t2 = "0"

[train]
width = 4
blocks = 1

[grid]
nx = 9
ny = 9
"#;

    /// Uniform uniaxial state imposed exactly through B with matching edge
    /// traction: closed-form energy, and zero parameter gradient since
    /// A = 0 removes the network entirely.
    #[test]
    fn uniform_state_energy_matches_closed_form() {
        // sigma = 10 MPa, E = 1e5 MPa plane stress: eps11 = 1e-4,
        // eps22 = -nu * 1e-4 = -3e-5 — exactly the B expressions above.
        let scenario = parse_scenario::<f64>(PATCH).unwrap();
        let grid = scenario.build_quad_grid().unwrap();
        let params = init_params(crate::network::NetConfig::new(2, 4, 1), 3);

        let sigma = 10.0;
        let e_mpa = 100.0e3;
        let expected_strain = sigma * sigma / (2.0 * e_mpa) * 1.0 * UNIT_FOLD;

        let rec = potential_energy(&params, &scenario, &grid).unwrap();
        assert!(
            (rec.breakdown.strain_energy - expected_strain).abs() <= 1e-9 * expected_strain,
            "strain energy {} vs {expected_strain}",
            rec.breakdown.strain_energy
        );
        assert!(
            (rec.breakdown.total() + expected_strain).abs() <= 1e-9 * expected_strain,
            "total {} vs {}",
            rec.breakdown.total(),
            -expected_strain
        );
        assert!(
            (rec.loss.value() - rec.breakdown.total()).abs()
                <= 1e-12 * rec.breakdown.total().abs()
        );
        // A = 0: the loss cannot depend on the parameters.
        let g = rec.gradient().unwrap();
        let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(norm <= 1e-8 * expected_strain, "gradient norm {norm}");

        // Fast path agrees on everything.
        let model = EnergyModel::new(&scenario, &grid).unwrap();
        let (loss, breakdown, grad) = model.loss_grad(&params).unwrap();
        assert!((loss - rec.breakdown.total()).abs() <= 1e-9 * loss.abs());
        assert!((breakdown.strain_energy - expected_strain).abs() <= 1e-9 * expected_strain);
        let gnorm = grad.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(gnorm <= 1e-8 * expected_strain);
    }

    #[test]
    fn zero_parameters_and_no_loads_give_zero_energy() {
        let text = PATCH
            .replace("[traction.right]\nt1 = \"10\"\nt2 = \"0\"\n", "")
            .replace("B = \"0.0001*x1\"", "B = \"0\"")
            .replace("B = \"-0.00003*x2\"", "B = \"0\"")
            .replace("A = \"0\"", "A = \"1\"");
        let scenario = parse_scenario::<f64>(&text).unwrap();
        let grid = scenario.build_quad_grid().unwrap();
        let params = NetParams::<f64>::zeros(crate::network::NetConfig::new(2, 4, 1));
        let rec = potential_energy(&params, &scenario, &grid).unwrap();
        assert_eq!(rec.loss.value(), 0.0);
        assert_eq!(rec.breakdown.total(), 0.0);
    }

    const CRACKED: &str = r#"
mode = "plane_strain"
seed = 2

[domain]
x = [0.0, 1.0]
y = [-1.0, 1.0]

[material.m]
e = 100.0
nu = 0.3
region = "whole"

[crack.main]
vertices = [[0.0, 0.0], [0.5, 0.0]]

[constraint.u1]
A = "x1"
B = "0"

[constraint.u2]
A = "(x2 + 1) / 2"
B = "0"

[traction.top]
t1 = "0"
t2 = "10"

[train]
width = 5
blocks = 2

[grid]
nx = 7
ny = 9
tip_factor = 2
tip_radius = 0.12
"#;

    #[test]
    fn tape_and_fast_paths_agree_on_cracked_scenario() {
        let scenario = parse_scenario::<f64>(CRACKED).unwrap();
        let grid = scenario.build_quad_grid().unwrap();
        let trial = Trial::from_scenario(&scenario);
        let params = init_params(trial.config, 17);

        let rec = potential_energy(&params, &scenario, &grid).unwrap();
        let tape_grad = rec.gradient().unwrap();

        let model = EnergyModel::new(&scenario, &grid).unwrap();
        let (loss, breakdown, grad) = model.loss_grad(&params).unwrap();

        let scale = loss.abs().max(1e-12);
        assert!(
            (loss - rec.loss.value()).abs() <= 1e-10 * scale,
            "fast {loss} vs tape {}",
            rec.loss.value()
        );
        for (name, a, b) in [
            (
                "strain",
                breakdown.strain_energy,
                rec.breakdown.strain_energy,
            ),
            (
                "boundary",
                breakdown.boundary_traction_work,
                rec.breakdown.boundary_traction_work,
            ),
        ] {
            assert!((a - b).abs() <= 1e-10 * scale, "{name}: {a} vs {b}");
        }
        let gscale = tape_grad
            .iter()
            .fold(0.0f64, |m, v| m.max(v.abs()))
            .max(1e-12);
        for (i, (a, b)) in grad.iter().zip(&tape_grad).enumerate() {
            assert!(
                (a - b).abs() <= 1e-9 * gscale,
                "grad[{i}]: fast {a} vs tape {b}"
            );
        }
    }

    #[test]
    fn fast_gradient_matches_finite_differences() {
        let scenario = parse_scenario::<f64>(CRACKED).unwrap();
        let grid = scenario.build_quad_grid().unwrap();
        let trial = Trial::from_scenario(&scenario);
        let params = init_params(trial.config, 23);
        let model = EnergyModel::new(&scenario, &grid).unwrap();
        let (_, _, grad) = model.loss_grad(&params).unwrap();

        let mut rng_idx = [0usize, 7, 33, 101, 160, 233];
        let total = params.params.len();
        for i in rng_idx.iter_mut() {
            *i %= total;
        }
        let h = 1e-6;
        for &i in &rng_idx {
            let mut pp = params.clone();
            pp.params.values[i] += h;
            let mut pm = params.clone();
            pm.params.values[i] -= h;
            let (lp, _) = model.loss(&pp).unwrap();
            let (lm, _) = model.loss(&pm).unwrap();
            let fd = (lp - lm) / (2.0 * h);
            let scale = fd.abs().max(1e-6);
            assert!(
                ((grad[i] - fd) / scale).abs() <= 1e-5,
                "coord {i}: ad {} vs fd {fd}",
                grad[i]
            );
        }
    }

    #[test]
    fn strain_energy_is_nonnegative_for_any_draw() {
        let scenario = parse_scenario::<f64>(CRACKED).unwrap();
        let grid = scenario.build_quad_grid().unwrap();
        let trial = Trial::from_scenario(&scenario);
        let model = EnergyModel::new(&scenario, &grid).unwrap();
        for seed in 0..8 {
            let params = init_params(trial.config, seed);
            let (_, breakdown) = model.loss(&params).unwrap();
            assert!(breakdown.strain_energy >= 0.0, "seed {seed}");
        }
    }

    #[test]
    fn crack_face_traction_work_on_rigid_translation() {
        // Rigid translation via B, A = 0; one loaded face with t2 = p:
        // work = p * (face length) * translation.
        let text = r#"
mode = "plane_strain"

[domain]
x = [0.0, 1.0]
y = [-1.0, 1.0]

[material.m]
e = 100.0
nu = 0.3
region = "whole"

[crack.main]
vertices = [[0.0, 0.0], [0.5, 0.0]]

[constraint.u1]
A = "0"
B = "0.002"

[constraint.u2]
A = "0"
B = "0.003"

[traction."main+"]
t1 = "0"
t2 = "4"

[train]
width = 3
blocks = 1

[grid]
nx = 5
ny = 5
"#;
        let scenario = parse_scenario::<f64>(text).unwrap();
        let grid = scenario.build_quad_grid().unwrap();
        let params = init_params(crate::network::NetConfig::new(3, 3, 1), 1);
        let rec = potential_energy(&params, &scenario, &grid).unwrap();
        let expected = 4.0 * 0.5 * 0.003 * UNIT_FOLD;
        assert!(
            (rec.breakdown.crack_traction_work - expected).abs() <= 1e-9 * expected,
            "crack work {} vs {expected}",
            rec.breakdown.crack_traction_work
        );
        let model = EnergyModel::new(&scenario, &grid).unwrap();
        let (_, breakdown) = model.loss(&params).unwrap();
        assert!((breakdown.crack_traction_work - expected).abs() <= 1e-9 * expected);
    }

    #[test]
    fn threaded_evaluation_is_bit_identical() {
        let scenario = parse_scenario::<f64>(CRACKED).unwrap();
        let mut scenario = scenario;
        scenario.grid.nx = 40;
        scenario.grid.ny = 60;
        let grid = scenario.build_quad_grid().unwrap();
        let trial = Trial::from_scenario(&scenario);
        let params = init_params(trial.config, 5);
        let mut model = EnergyModel::new(&scenario, &grid).unwrap();
        assert!(model.node_count() > BLOCK, "test needs multiple blocks");
        let (l1, _, g1) = model.loss_grad(&params).unwrap();
        model.threads = 4;
        let (l4, _, g4) = model.loss_grad(&params).unwrap();
        assert_eq!(l1.to_bits(), l4.to_bits());
        assert!(g1.iter().zip(&g4).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn solution_field_export_has_expected_columns() {
        let scenario = parse_scenario::<f64>(PATCH).unwrap();
        let params = init_params(crate::network::NetConfig::new(2, 4, 1), 3);
        let table = solution_field_table(&scenario, &params, 5, 5).unwrap();
        assert_eq!(table.len(), 25);
        assert_eq!(table.columns, vec!["u1", "u2", "s11", "s22", "s12", "svm"]);
        // The imposed field is uniform uniaxial: s11 = 10 MPa everywhere.
        for v in table.column("s11").unwrap() {
            assert!((v - 10.0).abs() < 1e-9);
        }
        for v in table.column("s22").unwrap() {
            assert!(v.abs() < 1e-9);
        }
    }
}
