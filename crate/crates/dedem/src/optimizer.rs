//! Adam training loop: step-decayed learning rate, best-snapshot tracking
//! and early stopping on stalled improvement.

use crate::elasticity::{EnergyBreakdown, EnergyModel};
use crate::network::{init_params, NetConfig, NetParams, Trial};
use crate::scalar::Scalar;
use crate::scenario::{Scenario, TrainConfig};
use crate::Error;
use std::time::Instant;

/// Relative loss decrease below which an epoch does not count as an
/// improvement for early stopping.
pub const IMPROVEMENT_RTOL: f64 = 1e-12;

/// First/second moment estimates plus the bias-correction step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub m: Vec<T>,
    pub v: Vec<T>,
    pub step: usize,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(n: usize) -> Self {
        AdamState {
            m: vec![T::zero(); n],
            v: vec![T::zero(); n],
            step: 0,
        }
    }
}

/// `lr0 * decay^floor(epoch / decay_every)`.
pub fn lr_at_epoch<T: Scalar>(cfg: &TrainConfig<T>, epoch: usize) -> T {
    let k = (epoch / cfg.decay_every) as i32;
    cfg.lr0 * cfg.decay_factor.powi(k)
}

/// One bias-corrected Adam update in place. A non-finite gradient aborts
/// the step.
pub fn adam_step<T: Scalar>(
    params: &mut [T],
    grad: &[T],
    state: &mut AdamState<T>,
    lr: T,
    cfg: &TrainConfig<T>,
) -> Result<(), Error> {
    if params.len() != grad.len() || params.len() != state.m.len() {
        return Err(Error::Invalid(format!(
            "adam: shape mismatch ({} params, {} grads, {} moments)",
            params.len(),
            grad.len(),
            state.m.len()
        )));
    }
    if grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::Invalid("adam: non-finite gradient".into()));
    }
    state.step += 1;
    let t = state.step as f64;
    let one = T::one();
    let bc1 = one - cfg.beta1.powi(t as i32);
    let bc2 = one - cfg.beta2.powi(t as i32);
    let _ = t;
    for i in 0..params.len() {
        let g = grad[i];
        state.m[i] = cfg.beta1 * state.m[i] + (one - cfg.beta1) * g;
        state.v[i] = cfg.beta2 * state.v[i] + (one - cfg.beta2) * g * g;
        let m_hat = state.m[i] / bc1;
        let v_hat = state.v[i] / bc2;
        params[i] = params[i] - lr * m_hat / (v_hat.sqrt() + cfg.epsilon);
    }
    Ok(())
}

/// Everything a finished run reports: the loss trace, where the best loss
/// occurred, a snapshot of the best parameters, and wall time.
#[derive(Debug, Clone)]
pub struct TrainReport<T> {
    pub losses: Vec<T>,
    pub best_epoch: usize,
    pub best_loss: T,
    pub best_params: NetParams<T>,
    pub breakdown_at_best: EnergyBreakdown<T>,
    pub wall_seconds: f64,
    pub stopped_early: bool,
}

impl<T: Scalar> TrainReport<T> {
    /// `epoch,loss,lr` CSV of the whole history.
    pub fn history_csv(&self, cfg: &TrainConfig<T>) -> String {
        let mut out = String::from("epoch,loss,lr\n");
        for (epoch, loss) in self.losses.iter().enumerate() {
            out.push_str(&format!("{epoch},{loss},{}\n", lr_at_epoch(cfg, epoch)));
        }
        out
    }
}

/// Core epoch loop over an arbitrary loss/gradient oracle; the oracle is
/// called once per epoch on the current parameters.
pub fn train_loop<T, F>(
    cfg: &TrainConfig<T>,
    init: NetParams<T>,
    mut step_fn: F,
) -> Result<TrainReport<T>, Error>
where
    T: Scalar,
    F: FnMut(&NetParams<T>) -> Result<(T, EnergyBreakdown<T>, Vec<T>), Error>,
{
    let started = Instant::now();
    let mut params = init;
    let mut state = AdamState::new(params.params.len());
    let mut losses = Vec::with_capacity(cfg.max_epochs);
    let mut best_epoch = 0usize;
    let mut best_loss = T::infinity();
    let mut best_params = params.clone();
    let mut breakdown_at_best = EnergyBreakdown {
        strain_energy: T::zero(),
        boundary_traction_work: T::zero(),
        crack_traction_work: T::zero(),
        body_work: T::zero(),
    };
    let mut since_improvement = 0usize;
    let mut stopped_early = false;

    for epoch in 0..cfg.max_epochs {
        let (loss, breakdown, grad) = step_fn(&params)
            .map_err(|e| Error::Invalid(format!("epoch {epoch}: {e}")))?;
        if !loss.is_finite() {
            return Err(Error::Invalid(format!("epoch {epoch}: non-finite loss")));
        }
        losses.push(loss);
        let improved = !best_loss.is_finite()
            || loss < best_loss - T::c(IMPROVEMENT_RTOL) * best_loss.abs();
        if improved {
            best_loss = loss;
            best_epoch = epoch;
            best_params = params.clone();
            breakdown_at_best = breakdown;
            since_improvement = 0;
        } else {
            since_improvement += 1;
            if since_improvement >= cfg.patience {
                stopped_early = true;
                break;
            }
        }
        let lr = lr_at_epoch(cfg, epoch);
        adam_step(&mut params.params.values, &grad, &mut state, lr, cfg)
            .map_err(|e| Error::Invalid(format!("epoch {epoch}: {e}")))?;
    }

    if losses.is_empty() {
        // max_epochs = 0: hand back the initial parameters untouched.
        best_params = params;
        best_loss = T::nan();
    }
    Ok(TrainReport {
        losses,
        best_epoch,
        best_loss,
        best_params,
        breakdown_at_best,
        wall_seconds: started.elapsed().as_secs_f64(),
        stopped_early,
    })
}

/// How a training run selects its initial parameters.
pub enum TrainInit<T> {
    /// Fresh Glorot initialization from the scenario seed.
    FromSeed,
    /// Explicit parameters, e.g. a warm start from an earlier run.
    Params(NetParams<T>),
}

#[derive(Debug, Clone, Copy)]
pub struct TrainOptions {
    pub threads: usize,
    /// Print a progress line every this many epochs (stderr).
    pub log_every: Option<usize>,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            threads: 1,
            log_every: None,
        }
    }
}

/// Full-batch training of the scenario's trial function by minimizing the
/// total potential energy on the scenario grid. Returns the best-parameter
/// snapshot, not the final epoch.
pub fn train<T: Scalar>(
    scenario: &Scenario<T>,
    init: TrainInit<T>,
    options: TrainOptions,
) -> Result<TrainReport<T>, Error> {
    let trial = Trial::from_scenario(scenario);
    let init_params = match init {
        TrainInit::FromSeed => init_params(trial.config, scenario.seed),
        TrainInit::Params(p) => {
            if p.config != trial.config {
                return Err(Error::Invalid(format!(
                    "warm start config {:?} does not match scenario config {:?}",
                    p.config, trial.config
                )));
            }
            p
        }
    };
    let grid = scenario.build_quad_grid()?;
    let mut model = EnergyModel::new(scenario, &grid)?;
    model.threads = if scenario.train.deterministic {
        // Block order is thread-independent, but stay single-threaded in
        // deterministic mode to keep the execution path itself fixed.
        1
    } else {
        options.threads.max(1)
    };
    let cfg = scenario.train.clone();
    let mut epoch = 0usize;
    train_loop(&cfg, init_params, |p| {
        let out = model.loss_grad(p)?;
        if let Some(every) = options.log_every {
            if epoch % every.max(1) == 0 {
                eprintln!(
                    "epoch {epoch:>6}  loss {:+.6e}  lr {}",
                    out.0.to_f64(),
                    lr_at_epoch(&cfg, epoch)
                );
            }
        }
        epoch += 1;
        Ok(out)
    })
}

/// Reuses a finished run's best parameters as the initial values of a new
/// run with the same architecture.
pub fn warm_start<T: Scalar>(
    report: &TrainReport<T>,
    expected: NetConfig,
) -> Result<NetParams<T>, Error> {
    if report.best_params.config != expected {
        return Err(Error::Invalid(format!(
            "warm start: snapshot config {:?} does not match expected {:?}",
            report.best_params.config, expected
        )));
    }
    Ok(report.best_params.clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::parse_scenario;

    fn cfg() -> TrainConfig<f64> {
        TrainConfig::default()
    }

    #[test]
    fn lr_schedule() {
        let c = cfg();
        assert_eq!(lr_at_epoch(&c, 0), 0.02);
        assert_eq!(lr_at_epoch(&c, 4999), 0.02);
        assert_eq!(lr_at_epoch(&c, 5000), 0.01);
        assert_eq!(lr_at_epoch(&c, 12000), 0.005);
    }

    #[test]
    fn zero_gradient_leaves_parameters_unchanged() {
        let mut p = vec![1.0, -2.0, 0.5];
        let g = vec![0.0; 3];
        let mut state = AdamState::new(3);
        adam_step(&mut p, &g, &mut state, 0.02, &cfg()).unwrap();
        assert_eq!(p, vec![1.0, -2.0, 0.5]);
    }

    #[test]
    fn first_step_magnitude_is_the_learning_rate() {
        // Bias correction makes m_hat / sqrt(v_hat) = sign(g) on step one,
        // for any gradient magnitude well above the epsilon regularizer.
        for &g0 in &[1e-3, 1.0, 1e6] {
            let mut p = vec![0.0];
            let mut state = AdamState::new(1);
            adam_step(&mut p, &[g0], &mut state, 0.02, &cfg()).unwrap();
            assert!(
                (p[0].abs() - 0.02).abs() <= 0.02 * 1e-3,
                "g = {g0}: step {}",
                p[0]
            );
            assert!(p[0] < 0.0);
        }
    }

    #[test]
    fn quadratic_objective_converges() {
        // f(x) = (x - 3)^2 from x = 0.
        let mut x = vec![0.0];
        let mut state = AdamState::new(1);
        let c = cfg();
        for epoch in 0..4000 {
            let g = 2.0 * (x[0] - 3.0);
            adam_step(&mut x, &[g], &mut state, lr_at_epoch(&c, epoch), &c).unwrap();
        }
        assert!((x[0] - 3.0).abs() < 1e-3, "x = {}", x[0]);
    }

    #[test]
    fn non_finite_gradient_aborts() {
        let mut p = vec![0.0];
        let mut state = AdamState::new(1);
        assert!(adam_step(&mut p, &[f64::NAN], &mut state, 0.02, &cfg()).is_err());
    }

    fn dummy_params() -> NetParams<f64> {
        NetParams::zeros(NetConfig::new(2, 2, 1))
    }

    fn zero_breakdown() -> EnergyBreakdown<f64> {
        EnergyBreakdown {
            strain_energy: 0.0,
            boundary_traction_work: 0.0,
            crack_traction_work: 0.0,
            body_work: 0.0,
        }
    }

    #[test]
    fn early_stop_fires_exactly_at_patience() {
        let mut c = cfg();
        c.patience = 7;
        c.max_epochs = 1000;
        let n = dummy_params().params.len();
        // Constant loss: the first epoch is the only improvement.
        let report = train_loop(&c, dummy_params(), |_| {
            Ok((1.0, zero_breakdown(), vec![0.0; n]))
        })
        .unwrap();
        assert!(report.stopped_early);
        assert_eq!(report.losses.len(), 8); // epoch 0 + 7 stalled epochs
        assert_eq!(report.best_epoch, 0);
    }

    #[test]
    fn best_loss_is_the_minimum_of_history() {
        let mut c = cfg();
        c.max_epochs = 50;
        c.patience = 50;
        let n = dummy_params().params.len();
        let mut k = 0usize;
        let report = train_loop(&c, dummy_params(), |_| {
            // V-shaped trace with minimum at epoch 20.
            let loss = ((k as f64) - 20.0).abs();
            k += 1;
            Ok((loss, zero_breakdown(), vec![0.1; n]))
        })
        .unwrap();
        assert_eq!(report.best_epoch, 20);
        assert_eq!(report.best_loss, 0.0);
        let min = report.losses.iter().cloned().fold(f64::INFINITY, f64::min);
        assert_eq!(report.best_loss, min);
        assert!(report.losses.iter().all(|l| l.is_finite()));
    }

    #[test]
    fn zero_epochs_returns_initial_parameters() {
        let mut c = cfg();
        c.max_epochs = 0;
        let init = dummy_params();
        let report = train_loop(&c, init.clone(), |_| unreachable!("no epochs")).unwrap();
        assert_eq!(report.best_params, init);
        assert!(report.losses.is_empty());
    }

    const SMALL_PATCH: &str = r#"
mode = "plane_stress"
seed = 9

[domain]
x = [0.0, 1.0]
y = [0.0, 1.0]

[material.m]
e = 100.0
nu = 0.3
region = "whole"

[constraint.u1]
A = "x1"
B = "0"

[constraint.u2]
A = "x2"
B = "0"

[traction.top]
t1 = "0"
t2 = "10"

[train]
width = 6
blocks = 1
max_epochs = 3000
patience = 600

[grid]
nx = 9
ny = 9
"#;

    #[test]
    fn patch_training_reaches_the_closed_form_minimum() {
        // Uniaxial tension sigma on the top edge, plane stress: the exact
        // minimum of the potential energy is -sigma^2 area / (2 E).
        let scenario = parse_scenario::<f64>(SMALL_PATCH).unwrap();
        let report = train(&scenario, TrainInit::FromSeed, TrainOptions::default()).unwrap();
        let expected = -(10.0 * 10.0) / (2.0 * 100.0e3) * 1e6;
        assert!(
            (report.best_loss - expected).abs() <= 2e-3 * expected.abs(),
            "best loss {} vs {expected}",
            report.best_loss
        );
    }

    #[test]
    fn deterministic_training_is_bit_identical() {
        let mut scenario = parse_scenario::<f64>(SMALL_PATCH).unwrap();
        scenario.train.max_epochs = 40;
        scenario.train.patience = 40;
        let r1 = train(&scenario, TrainInit::FromSeed, TrainOptions::default()).unwrap();
        let r2 = train(&scenario, TrainInit::FromSeed, TrainOptions::default()).unwrap();
        assert_eq!(r1.losses.len(), r2.losses.len());
        assert!(r1
            .losses
            .iter()
            .zip(&r2.losses)
            .all(|(a, b)| a.to_bits() == b.to_bits()));
        assert_eq!(r1.best_params, r2.best_params);
    }

    #[test]
    fn warm_start_requires_matching_config() {
        let mut c = cfg();
        c.max_epochs = 0;
        let report = train_loop(&c, dummy_params(), |_| unreachable!()).unwrap();
        assert!(warm_start(&report, NetConfig::new(2, 2, 1)).is_ok());
        let err = warm_start(&report, NetConfig::new(2, 30, 2)).unwrap_err();
        assert!(err.to_string().contains("config"), "{err}");
    }

    #[test]
    fn history_csv_has_epoch_loss_lr_rows() {
        let mut c = cfg();
        c.max_epochs = 3;
        c.patience = 3;
        let n = dummy_params().params.len();
        let report = train_loop(&c, dummy_params(), |_| {
            Ok((2.5, zero_breakdown(), vec![0.1; n]))
        })
        .unwrap();
        let csv = report.history_csv(&c);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "epoch,loss,lr");
        assert_eq!(lines[1], "0,2.5,0.02");
        assert_eq!(lines.len(), 1 + report.losses.len());
    }
}
