//! The neural trial function: one small residual MLP per displacement
//! component, evaluated over the embedded inputs and wrapped by the
//! multiplicative hard constraint `u = A * u_hat + B` so essential boundary
//! conditions hold exactly for any parameters.
//!
//! Two evaluation paths exist: a tape-based one whose spatial-derivative
//! channels can be differentiated with respect to the parameters (training
//! and gradient checks), and a plain scalar one for post-processing.

use crate::autodiff::{ParamKey, ParamLayout, ParamRole, ParamVector, SpatialDual, Tape, Var};
use crate::expr::eval_expression;
use crate::geometry::{embed_inputs, EmbeddingSpec, Point2};
use crate::scalar::Scalar;
use crate::scenario::{ConstraintPair, Scenario};
use crate::Error;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Fully connected layers inside each residual block.
pub const LAYERS_PER_BLOCK: usize = 2;
/// Displacement components, each with its own network.
pub const N_COMPONENTS: usize = 2;

/// Architecture of one component network; the two components share the
/// config but never the parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NetConfig {
    pub input_dim: usize,
    pub width: usize,
    pub residual_blocks: usize,
}

impl NetConfig {
    pub fn new(input_dim: usize, width: usize, residual_blocks: usize) -> Self {
        assert!(width >= 1, "width must be at least 1");
        NetConfig {
            input_dim,
            width,
            residual_blocks,
        }
    }

    /// Layers per component: stem, the block layers, linear head.
    pub fn layers_per_component(&self) -> usize {
        1 + LAYERS_PER_BLOCK * self.residual_blocks + 1
    }

    /// `(out_dim, in_dim)` of one layer.
    pub fn layer_dims(&self, layer: usize) -> (usize, usize) {
        let last = self.layers_per_component() - 1;
        if layer == 0 {
            (self.width, self.input_dim)
        } else if layer == last {
            (1, self.width)
        } else {
            (self.width, self.width)
        }
    }

    pub fn params_per_component(&self) -> usize {
        (0..self.layers_per_component())
            .map(|l| {
                let (o, i) = self.layer_dims(l);
                o * i + o
            })
            .sum()
    }

    pub fn total_params(&self) -> usize {
        N_COMPONENTS * self.params_per_component()
    }

    /// Flat layout: per component, per layer, weight block then bias block.
    pub fn param_layout(&self) -> ParamLayout {
        let mut entries = Vec::new();
        let mut cursor = 0usize;
        for network in 0..N_COMPONENTS {
            for layer in 0..self.layers_per_component() {
                let (o, i) = self.layer_dims(layer);
                entries.push((
                    ParamKey {
                        network,
                        layer,
                        role: ParamRole::Weight,
                    },
                    cursor..cursor + o * i,
                ));
                cursor += o * i;
                entries.push((
                    ParamKey {
                        network,
                        layer,
                        role: ParamRole::Bias,
                    },
                    cursor..cursor + o,
                ));
                cursor += o;
            }
        }
        ParamLayout::new(entries).expect("generated layout tiles the vector")
    }
}

/// Trainable parameters of both component networks.
#[derive(Debug, Clone, PartialEq)]
pub struct NetParams<T> {
    pub config: NetConfig,
    pub params: ParamVector<T>,
}

impl<T: Scalar> NetParams<T> {
    pub fn from_values(config: NetConfig, values: Vec<T>) -> Result<Self, Error> {
        let layout = config.param_layout();
        let params = ParamVector::new(values, layout)?;
        Ok(NetParams { config, params })
    }

    pub fn zeros(config: NetConfig) -> Self {
        NetParams::from_values(config, vec![T::zero(); config.total_params()]).unwrap()
    }

    pub fn weight(&self, network: usize, layer: usize) -> &[T] {
        self.params
            .block(ParamKey {
                network,
                layer,
                role: ParamRole::Weight,
            })
            .expect("layer in range")
    }

    pub fn bias(&self, network: usize, layer: usize) -> &[T] {
        self.params
            .block(ParamKey {
                network,
                layer,
                role: ParamRole::Bias,
            })
            .expect("layer in range")
    }
}

/// Glorot-uniform weights, zero biases, reproducible from the seed.
pub fn init_params<T: Scalar>(config: NetConfig, seed: u64) -> NetParams<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = vec![T::zero(); config.total_params()];
    let layout = config.param_layout();
    for (key, range) in layout.blocks() {
        match key.role {
            ParamRole::Weight => {
                let (fan_out, fan_in) = config.layer_dims(key.layer);
                let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
                for v in &mut values[range] {
                    let u: f64 = rng.gen();
                    *v = T::c(bound * (2.0 * u - 1.0));
                }
            }
            ParamRole::Bias => {}
        }
    }
    NetParams {
        config,
        params: ParamVector::new(values, layout).unwrap(),
    }
}

// ---------------------------------------------------------------------------
// Tape-based evaluation
// ---------------------------------------------------------------------------

fn linear_tape<T: Scalar>(
    theta: &[Var<T>],
    layout: &ParamLayout,
    network: usize,
    layer: usize,
    dims: (usize, usize),
    input: &[SpatialDual<T>],
) -> Vec<SpatialDual<T>> {
    let (out_dim, in_dim) = dims;
    debug_assert_eq!(input.len(), in_dim, "layer input shape mismatch");
    let w = layout
        .range(ParamKey {
            network,
            layer,
            role: ParamRole::Weight,
        })
        .expect("layer in range");
    let b = layout
        .range(ParamKey {
            network,
            layer,
            role: ParamRole::Bias,
        })
        .expect("layer in range");
    (0..out_dim)
        .map(|i| {
            let mut acc = SpatialDual::from_var(theta[b.start + i].clone());
            for (j, x) in input.iter().enumerate() {
                acc = acc.add(&x.mul_var(&theta[w.start + i * in_dim + j]));
            }
            acc
        })
        .collect()
}

/// Forward pass of one component network over spatial-dual inputs: stem with
/// tanh, residual blocks of two tanh layers each, linear head.
pub fn forward_tape<T: Scalar>(
    theta: &[Var<T>],
    config: &NetConfig,
    layout: &ParamLayout,
    network: usize,
    x_aug: &[SpatialDual<T>],
) -> SpatialDual<T> {
    assert_eq!(x_aug.len(), config.input_dim, "input length mismatch");
    let mut y: Vec<SpatialDual<T>> =
        linear_tape(theta, layout, network, 0, config.layer_dims(0), x_aug)
            .iter()
            .map(|z| z.tanh())
            .collect();
    let mut layer = 1;
    for _ in 0..config.residual_blocks {
        let mut h = y.clone();
        for _ in 0..LAYERS_PER_BLOCK {
            h = linear_tape(theta, layout, network, layer, config.layer_dims(layer), &h)
                .iter()
                .map(|z| z.tanh())
                .collect();
            layer += 1;
        }
        y = y.iter().zip(&h).map(|(a, b)| a.add(b)).collect();
    }
    let head = linear_tape(theta, layout, network, layer, config.layer_dims(layer), &y);
    head.into_iter().next().unwrap()
}

/// `u = A * u_hat + B` with the spatial channels filled in by the product
/// rule from the expressions' analytic gradients.
pub fn apply_hard_constraint<T: Scalar>(
    tape: &Tape<T>,
    u_hat: &SpatialDual<T>,
    pair: &ConstraintPair,
    x: Point2<T>,
) -> Result<SpatialDual<T>, Error> {
    let (a, da) = eval_expression(&pair.a, x.as_array())?;
    let (b, db) = eval_expression(&pair.b, x.as_array())?;
    let a_dual = SpatialDual::lift(tape, a, da);
    let b_dual = SpatialDual::lift(tape, b, db);
    Ok(a_dual.mul(u_hat).add(&b_dual))
}

/// The trial function: architecture, hard constraints and embeddings in one
/// place, with matching tape and plain evaluation paths.
#[derive(Debug, Clone)]
pub struct Trial<T> {
    pub config: NetConfig,
    pub constraints: [ConstraintPair; 2],
    pub specs: Vec<EmbeddingSpec<T>>,
    pub scales: Vec<T>,
    /// Fixed output scale: the trial displacement is
    /// `u = A * (output_scale * net) + B`, keeping trained parameters at
    /// order one regardless of the physical displacement magnitude.
    pub output_scale: T,
}

/// Displacement with spatial-derivative channels, on a recording.
pub struct DualDisplacement<T> {
    pub u1: SpatialDual<T>,
    pub u2: SpatialDual<T>,
}

/// Plain displacement and its spatial gradient.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlainDisplacement<T> {
    pub u: [T; 2],
    /// `grad[i][j] = d u_(i+1) / d x_(j+1)`.
    pub grad: [[T; 2]; 2],
}

impl<T: Scalar> Trial<T> {
    pub fn from_scenario(s: &Scenario<T>) -> Self {
        let specs = s.embedding_specs();
        let scales = s.embedding_scales();
        Trial {
            config: NetConfig::new(2 + specs.len(), s.train.width, s.train.blocks),
            constraints: s.constraints.clone(),
            specs,
            scales,
            output_scale: s.characteristic_displacement(),
        }
    }

    /// Full pipeline on the tape: embed, per-component forward, hard
    /// constraint. `sides` forces crack sides per spec (0 = by sign).
    pub fn displacement_tape(
        &self,
        tape: &Tape<T>,
        theta: &[Var<T>],
        layout: &ParamLayout,
        x: Point2<T>,
        sides: Option<&[i8]>,
    ) -> Result<DualDisplacement<T>, Error> {
        let (aug, jac) = embed_inputs(x, &self.specs, sides, Some(&self.scales));
        let (x1d, x2d) = crate::autodiff::spatial_seed(tape, [aug[0], aug[1]]);
        let mut inputs = vec![x1d, x2d];
        for k in 2..aug.len() {
            inputs.push(SpatialDual::lift(tape, aug[k], jac[k]));
        }
        let mut out = Vec::with_capacity(N_COMPONENTS);
        for c in 0..N_COMPONENTS {
            let u_hat = forward_tape(theta, &self.config, layout, c, &inputs)
                .scale(self.output_scale);
            out.push(apply_hard_constraint(tape, &u_hat, &self.constraints[c], x)?);
        }
        let u2 = out.pop().unwrap();
        let u1 = out.pop().unwrap();
        Ok(DualDisplacement { u1, u2 })
    }

    /// Plain-scalar pipeline; the reference implementation for exports and
    /// crack-opening sampling.
    pub fn displacement_plain(
        &self,
        params: &NetParams<T>,
        x: Point2<T>,
        sides: Option<&[i8]>,
    ) -> Result<PlainDisplacement<T>, Error> {
        let (aug, jac) = embed_inputs(x, &self.specs, sides, Some(&self.scales));
        let mut u = [T::zero(); 2];
        let mut grad = [[T::zero(); 2]; 2];
        for c in 0..N_COMPONENTS {
            let (uh, duh) = forward_plain(params, c, &aug, &jac);
            let sc = self.output_scale;
            let (uh, duh) = (sc * uh, [sc * duh[0], sc * duh[1]]);
            let (a, da) = eval_expression(&self.constraints[c].a, x.as_array())?;
            let (b, db) = eval_expression(&self.constraints[c].b, x.as_array())?;
            u[c] = a * uh + b;
            for j in 0..2 {
                grad[c][j] = da[j] * uh + a * duh[j] + db[j];
            }
        }
        Ok(PlainDisplacement { u, grad })
    }
}

/// Plain forward pass of one component network: value and spatial gradient
/// of `u_hat` at one point, propagated alongside the embedding Jacobian.
pub fn forward_plain<T: Scalar>(
    params: &NetParams<T>,
    network: usize,
    aug: &[T],
    jac: &[[T; 2]],
) -> (T, [T; 2]) {
    let config = &params.config;
    assert_eq!(aug.len(), config.input_dim, "input length mismatch");
    let width = config.width;

    let mut v = vec![T::zero(); width];
    let mut p = vec![T::zero(); width];
    let mut q = vec![T::zero(); width];

    // Stem.
    {
        let w = params.weight(network, 0);
        let b = params.bias(network, 0);
        for i in 0..width {
            let row = &w[i * config.input_dim..(i + 1) * config.input_dim];
            let mut zv = b[i];
            let mut zp = T::zero();
            let mut zq = T::zero();
            for (j, wj) in row.iter().enumerate() {
                zv = zv + *wj * aug[j];
                zp = zp + *wj * jac[j][0];
                zq = zq + *wj * jac[j][1];
            }
            let t = zv.tanh();
            let s = T::one() - t * t;
            v[i] = t;
            p[i] = s * zp;
            q[i] = s * zq;
        }
    }

    let mut layer = 1;
    for _ in 0..config.residual_blocks {
        let (mut hv, mut hp, mut hq) = (v.clone(), p.clone(), q.clone());
        for _ in 0..LAYERS_PER_BLOCK {
            let w = params.weight(network, layer);
            let b = params.bias(network, layer);
            let (mut nv, mut np, mut nq) = (
                vec![T::zero(); width],
                vec![T::zero(); width],
                vec![T::zero(); width],
            );
            for i in 0..width {
                let row = &w[i * width..(i + 1) * width];
                let mut zv = b[i];
                let mut zp = T::zero();
                let mut zq = T::zero();
                for (j, wj) in row.iter().enumerate() {
                    zv = zv + *wj * hv[j];
                    zp = zp + *wj * hp[j];
                    zq = zq + *wj * hq[j];
                }
                let t = zv.tanh();
                let s = T::one() - t * t;
                nv[i] = t;
                np[i] = s * zp;
                nq[i] = s * zq;
            }
            hv = nv;
            hp = np;
            hq = nq;
            layer += 1;
        }
        for i in 0..width {
            v[i] = v[i] + hv[i];
            p[i] = p[i] + hp[i];
            q[i] = q[i] + hq[i];
        }
    }

    // Linear head.
    let w = params.weight(network, layer);
    let b = params.bias(network, layer);
    let mut uv = b[0];
    let mut up = T::zero();
    let mut uq = T::zero();
    for j in 0..width {
        uv = uv + w[j] * v[j];
        up = up + w[j] * p[j];
        uq = uq + w[j] * q[j];
    }
    (uv, [up, uq])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Tape;
    use crate::expr::parse_expression;
    use crate::geometry::{CrackPath, InterfaceShape};
    use crate::scenario::parse_scenario;

    fn pt(x1: f64, x2: f64) -> Point2<f64> {
        Point2::new(x1, x2)
    }

    fn identity_constraints() -> [ConstraintPair; 2] {
        let one = parse_expression("1").unwrap();
        let zero = parse_expression("0").unwrap();
        [
            ConstraintPair {
                a: one.clone(),
                b: zero.clone(),
            },
            ConstraintPair { a: one, b: zero },
        ]
    }

    fn crack_specs() -> Vec<EmbeddingSpec<f64>> {
        vec![EmbeddingSpec::Strong {
            id: "c".into(),
            path: CrackPath::new(vec![pt(0.0, 0.0), pt(0.5, 0.0)], false, true).unwrap(),
        }]
    }

    #[test]
    fn parameter_count_formula() {
        // Default width 30, two blocks, two embeddings: 3901 per component.
        let config = NetConfig::new(4, 30, 2);
        assert_eq!(config.params_per_component(), 3901);
        assert_eq!(config.total_params(), 7802);
        // Same formula at width 15.
        let config = NetConfig::new(4, 15, 2);
        let expected = 15 * 4 + 15 + 2 * 2 * (15 * 15 + 15) + 15 + 1;
        assert_eq!(config.params_per_component(), expected);
    }

    #[test]
    fn init_is_reproducible_and_glorot_bounded() {
        let config = NetConfig::new(3, 8, 2);
        let a: NetParams<f64> = init_params(config, 7);
        let b: NetParams<f64> = init_params(config, 7);
        assert_eq!(a, b);
        let c: NetParams<f64> = init_params(config, 8);
        assert_ne!(a, c);
        // Stem bound: sqrt(6 / (3 + 8)).
        let bound = (6.0f64 / 11.0).sqrt();
        for v in a.weight(0, 0) {
            assert!(v.abs() <= bound);
        }
        for v in a.bias(0, 0) {
            assert_eq!(*v, 0.0);
        }
    }

    #[test]
    fn zero_params_give_zero_displacement() {
        let trial = Trial {
            config: NetConfig::new(3, 6, 1),
            constraints: identity_constraints(),
            specs: crack_specs(),
            scales: vec![1.0],
            output_scale: 1.0,
        };
        let params = NetParams::<f64>::zeros(trial.config);
        let d = trial.displacement_plain(&params, pt(0.3, 0.2), None).unwrap();
        assert_eq!(d.u, [0.0, 0.0]);
        assert_eq!(d.grad, [[0.0, 0.0], [0.0, 0.0]]);
    }

    #[test]
    fn head_bias_gives_constant_output() {
        let config = NetConfig::new(2, 5, 1);
        let mut params = NetParams::<f64>::zeros(config);
        let layout = config.param_layout();
        let head_layer = config.layers_per_component() - 1;
        let r = layout
            .range(ParamKey {
                network: 0,
                layer: head_layer,
                role: ParamRole::Bias,
            })
            .unwrap();
        params.params.values[r.start] = 2.5;
        let trial = Trial {
            config,
            constraints: identity_constraints(),
            specs: vec![],
            scales: vec![],
            output_scale: 1.0,
        };
        for x in [pt(0.0, 0.0), pt(0.7, -0.3)] {
            let d = trial.displacement_plain(&params, x, None).unwrap();
            assert_eq!(d.u[0], 2.5);
            assert_eq!(d.u[1], 0.0);
            assert_eq!(d.grad[0], [0.0, 0.0]);
        }
    }

    #[test]
    fn tape_value_matches_plain_forward() {
        let config = NetConfig::new(4, 7, 2);
        let params: NetParams<f64> = init_params(config, 3);
        let layout = config.param_layout();
        let specs = vec![
            EmbeddingSpec::Strong {
                id: "c".into(),
                path: CrackPath::new(vec![pt(0.0, 0.0), pt(0.5, 0.0)], false, true).unwrap(),
            },
            EmbeddingSpec::Weak {
                id: "i".into(),
                shape: InterfaceShape::Line {
                    point: pt(0.0, 0.0),
                    normal: pt(0.0, 1.0),
                },
            },
        ];
        let trial = Trial {
            config,
            constraints: identity_constraints(),
            specs,
            scales: vec![1.0, 1.0],
            output_scale: 1.0,
        };
        for x in [pt(0.3, 0.2), pt(0.7, -0.4), pt(0.1, 0.9)] {
            let tape = Tape::new();
            let theta = tape.inputs(&params.params.values);
            let dual = trial
                .displacement_tape(&tape, &theta, &layout, x, None)
                .unwrap();
            let plain = trial.displacement_plain(&params, x, None).unwrap();
            assert!((dual.u1.v.value() - plain.u[0]).abs() <= 1e-12);
            assert!((dual.u2.v.value() - plain.u[1]).abs() <= 1e-12);
            assert!((dual.u1.dx1.value() - plain.grad[0][0]).abs() <= 1e-12);
            assert!((dual.u1.dx2.value() - plain.grad[0][1]).abs() <= 1e-12);
            assert!((dual.u2.dx1.value() - plain.grad[1][0]).abs() <= 1e-12);
            assert!((dual.u2.dx2.value() - plain.grad[1][1]).abs() <= 1e-12);
        }
    }

    #[test]
    fn hard_constraint_pins_boundary_values() {
        // u1 = x1 * u_hat: exactly zero at x1 = 0 for any parameters.
        let config = NetConfig::new(2, 6, 2);
        let params: NetParams<f64> = init_params(config, 11);
        let trial = Trial {
            config,
            constraints: [
                ConstraintPair {
                    a: parse_expression("x1").unwrap(),
                    b: parse_expression("0").unwrap(),
                },
                ConstraintPair {
                    a: parse_expression("(x1+1)*(x1-1)/4").unwrap(),
                    b: parse_expression("0").unwrap(),
                },
            ],
            specs: vec![],
            scales: vec![],
            output_scale: 1.0,
        };
        for y in [-0.8, 0.0, 0.3] {
            let d = trial.displacement_plain(&params, pt(0.0, y), None).unwrap();
            assert!(d.u[0].abs() <= 1e-12);
        }
        for x1 in [-1.0, 1.0] {
            let d = trial.displacement_plain(&params, pt(x1, 0.2), None).unwrap();
            assert!(d.u[1].abs() <= 1e-12);
        }
        // A = "1", B = "0" leaves the raw network output untouched.
        let id_trial = Trial {
            config,
            constraints: identity_constraints(),
            specs: vec![],
            scales: vec![],
            output_scale: 1.0,
        };
        let (aug, jac) = embed_inputs(pt(0.4, 0.1), &[], None, None);
        let (uh, _) = forward_plain(&params, 0, &aug, &jac);
        let d = id_trial.displacement_plain(&params, pt(0.4, 0.1), None).unwrap();
        assert_eq!(d.u[0], uh);
    }

    #[test]
    fn displacement_jumps_across_crack_and_not_ahead_of_tip() {
        let trial = Trial {
            config: NetConfig::new(3, 10, 2),
            constraints: identity_constraints(),
            specs: crack_specs(),
            scales: vec![1.0],
            output_scale: 1.0,
        };
        let params: NetParams<f64> = init_params(trial.config, 5);
        let eps = 1e-8;
        let above = trial.displacement_plain(&params, pt(0.3, eps), None).unwrap();
        let below = trial.displacement_plain(&params, pt(0.3, -eps), None).unwrap();
        assert!(
            (above.u[0] - below.u[0]).abs() > 1e-6,
            "expected a jump, got {} vs {}",
            above.u[0],
            below.u[0]
        );
        // The jump equals the network evaluated at the two embedding sides.
        let plus = trial.displacement_plain(&params, pt(0.3, 0.0), Some(&[1])).unwrap();
        let minus = trial.displacement_plain(&params, pt(0.3, 0.0), Some(&[-1])).unwrap();
        let direct = plus.u[0] - minus.u[0];
        let limit = above.u[0] - below.u[0];
        assert!((direct - limit).abs() <= 1e-6 * direct.abs().max(1e-12));
        // Ahead of the tip the embedding is identically zero on both sides,
        // so the jump part vanishes exactly...
        let plus = trial.displacement_plain(&params, pt(0.7, 0.0), Some(&[1])).unwrap();
        let minus = trial.displacement_plain(&params, pt(0.7, 0.0), Some(&[-1])).unwrap();
        assert_eq!(plus.u, minus.u);
        // ...and mirrored points differ only by smoothness: |du| <= 2 eps L
        // with L bounded by the layer weight norms (tanh is 1-Lipschitz and
        // the input Jacobian reduces to the identity rows out there).
        let frob = |w: &[f64]| w.iter().map(|v| v * v).sum::<f64>().sqrt();
        let mut lip: f64 = 0.0;
        for c in 0..2 {
            let mut l = frob(params.weight(c, 0));
            let mut layer = 1;
            for _ in 0..trial.config.residual_blocks {
                let inner = frob(params.weight(c, layer)) * frob(params.weight(c, layer + 1));
                l *= 1.0 + inner;
                layer += 2;
            }
            l *= frob(params.weight(c, layer));
            lip = lip.max(l);
        }
        let above = trial.displacement_plain(&params, pt(0.7, eps), None).unwrap();
        let below = trial.displacement_plain(&params, pt(0.7, -eps), None).unwrap();
        for c in 0..2 {
            assert!(
                (above.u[c] - below.u[c]).abs() <= 2.0 * eps * lip,
                "component {c}: {} vs bound {}",
                (above.u[c] - below.u[c]).abs(),
                2.0 * eps * lip
            );
        }
    }

    #[test]
    fn spatial_gradient_matches_finite_differences() {
        let trial = Trial {
            config: NetConfig::new(3, 8, 2),
            constraints: [
                ConstraintPair {
                    a: parse_expression("x1").unwrap(),
                    b: parse_expression("0.1*x2").unwrap(),
                },
                ConstraintPair {
                    a: parse_expression("(x2 + 1) / 2").unwrap(),
                    b: parse_expression("0").unwrap(),
                },
            ],
            specs: crack_specs(),
            scales: vec![1.0],
            output_scale: 1.0,
        };
        let params: NetParams<f64> = init_params(trial.config, 9);
        let h = 1e-6;
        for x in [pt(0.3, 0.25), pt(0.8, -0.4), pt(0.6, 0.55)] {
            let d = trial.displacement_plain(&params, x, None).unwrap();
            for c in 0..2 {
                for j in 0..2 {
                    let mut xp = x;
                    let mut xm = x;
                    if j == 0 {
                        xp.x1 += h;
                        xm.x1 -= h;
                    } else {
                        xp.x2 += h;
                        xm.x2 -= h;
                    }
                    let up = trial.displacement_plain(&params, xp, None).unwrap().u[c];
                    let um = trial.displacement_plain(&params, xm, None).unwrap().u[c];
                    let fd = (up - um) / (2.0 * h);
                    let scale = fd.abs().max(1e-3);
                    assert!(
                        ((d.grad[c][j] - fd) / scale).abs() <= 1e-5,
                        "du{}/dx{} at {x}: {} vs fd {fd}",
                        c + 1,
                        j + 1,
                        d.grad[c][j]
                    );
                }
            }
        }
    }

    #[test]
    fn trial_from_scenario_sets_input_dim() {
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

[interface.mid]
kind = "line"
point = [0.0, 0.0]
normal = [0.0, 1.0]

[constraint.u1]
A = "x1"
B = "0"
[constraint.u2]
A = "(x2 + 1) / 2"
B = "0"

[train]
width = 12
blocks = 1

[grid]
nx = 8
ny = 8
"#;
        let s = parse_scenario::<f64>(text).unwrap();
        let trial = Trial::from_scenario(&s);
        assert_eq!(trial.config.input_dim, 4);
        assert_eq!(trial.config.width, 12);
        assert_eq!(trial.config.residual_blocks, 1);
        assert_eq!(trial.specs.len(), 2);
    }
}
