use std::collections::BTreeSet;
use std::io::{self, Write};

use nalgebra::{DMatrix, DVector, Isometry3, Vector3};
use serde::{Deserialize, Serialize};

use super::qp::{solve_box_qp, BoxQp};
use super::{check_q, fk, jacobian, KinematicsError};
use crate::model::{KinematicChain, ValidationError};

/// Largest KKT residual accepted from the step QP.
pub const KKT_TOL: f64 = 1e-8;
/// Step norm below which a solve is declared stalled.
pub const STALL_NORM: f64 = 1e-9;

/// Solver gains and tolerances loaded from config.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IkDefaults {
    pub position_weight: f64,
    pub orientation_weight: f64,
    pub posture_weight: f64,
    /// Fraction of the posture error pulled per second, inside the task null space.
    pub posture_rate: f64,
    pub dt: f64,
    pub max_steps: usize,
    pub tol_pos: f64,
    pub tol_rot: f64,
    /// m/s
    pub max_linear_speed: f64,
    /// rad/s
    pub max_angular_speed: f64,
}

impl Default for IkDefaults {
    fn default() -> Self {
        Self {
            position_weight: 1.0,
            orientation_weight: 1.0,
            posture_weight: 1e-2,
            posture_rate: 1.0,
            dt: 0.01,
            max_steps: 200,
            tol_pos: 1e-3,
            tol_rot: 1e-2,
            max_linear_speed: 0.2,
            max_angular_speed: 1.0,
        }
    }
}

impl IkDefaults {
    pub fn validate(&self, field: &str) -> Result<(), ValidationError> {
        let err = |sub: &str, msg: String| Err(ValidationError::new(format!("{field}.{sub}"), msg));
        for (name, v) in [
            ("position_weight", self.position_weight),
            ("orientation_weight", self.orientation_weight),
            ("posture_weight", self.posture_weight),
            ("posture_rate", self.posture_rate),
        ] {
            if !(v >= 0.0) {
                return err(name, format!("must be >= 0, got {v}"));
            }
        }
        for (name, v) in [
            ("dt", self.dt),
            ("tol_pos", self.tol_pos),
            ("tol_rot", self.tol_rot),
            ("max_linear_speed", self.max_linear_speed),
            ("max_angular_speed", self.max_angular_speed),
        ] {
            if !(v > 0.0) {
                return err(name, format!("must be > 0, got {v}"));
            }
        }
        if self.max_steps == 0 {
            return err("max_steps", "must be >= 1".into());
        }
        Ok(())
    }
}

/// Frame target plus posture regularization for one chain.
#[derive(Debug, Clone, PartialEq)]
pub struct IkTask {
    pub target: Isometry3<f64>,
    /// Weights on (x, y, z, rx, ry, rz) of the frame error.
    pub frame_weight: [f64; 6],
    pub posture_ref: Vec<f64>,
    pub posture_weight: f64,
    /// 1/s; see [`IkDefaults::posture_rate`].
    pub posture_rate: f64,
    pub frozen: BTreeSet<usize>,
    pub dt: f64,
    pub max_steps: usize,
    pub tol_pos: f64,
    pub tol_rot: f64,
    pub max_linear_speed: f64,
    pub max_angular_speed: f64,
}

impl IkTask {
    /// Task toward `target` with the chain's home posture and its excluded
    /// joints frozen.
    pub fn new(chain: &KinematicChain, target: Isometry3<f64>, d: &IkDefaults) -> Self {
        let (p, o) = (d.position_weight, d.orientation_weight);
        Self {
            target,
            frame_weight: [p, p, p, o, o, o],
            posture_ref: chain.home(),
            posture_weight: d.posture_weight,
            posture_rate: d.posture_rate,
            frozen: chain.ik_exclude.iter().copied().collect(),
            dt: d.dt,
            max_steps: d.max_steps,
            tol_pos: d.tol_pos,
            tol_rot: d.tol_rot,
            max_linear_speed: d.max_linear_speed,
            max_angular_speed: d.max_angular_speed,
        }
    }

    /// Drops the orientation part of the frame task.
    pub fn position_only(mut self) -> Self {
        self.frame_weight[3..].fill(0.0);
        self
    }

    fn tracks_orientation(&self) -> bool {
        self.frame_weight[3..].iter().any(|&w| w > 0.0)
    }

    fn validate(&self, chain: &KinematicChain) -> Result<(), KinematicsError> {
        let bad = |m: String| Err(KinematicsError::InvalidTask(m));
        if !(self.dt > 0.0) {
            return bad(format!("dt must be > 0, got {}", self.dt));
        }
        if self.frame_weight.iter().any(|w| !(*w >= 0.0))
            || !(self.posture_weight >= 0.0)
            || !(self.posture_rate >= 0.0)
        {
            return bad("weights must be >= 0".into());
        }
        if self.posture_ref.len() != chain.dof() {
            return bad(format!("posture_ref has {} values for {} joints", self.posture_ref.len(), chain.dof()));
        }
        if (0..chain.dof()).all(|i| self.frozen.contains(&i)) {
            return bad("every joint is frozen".into());
        }
        Ok(())
    }

    /// Position and rotation error magnitudes at `pose`.
    pub fn errors(&self, pose: &Isometry3<f64>) -> (f64, f64) {
        let (p, r) = frame_error(pose, &self.target);
        (p.norm(), r.norm())
    }

    pub fn is_reached(&self, pose: &Isometry3<f64>) -> bool {
        let (p, r) = self.errors(pose);
        p < self.tol_pos && (!self.tracks_orientation() || r < self.tol_rot)
    }
}

/// Position error and rotation-log error (both in the base frame) taking
/// `current` to `target`.
pub fn frame_error(current: &Isometry3<f64>, target: &Isometry3<f64>) -> (Vector3<f64>, Vector3<f64>) {
    let dp = target.translation.vector - current.translation.vector;
    let dr = (target.rotation * current.rotation.inverse()).scaled_axis();
    (dp, dr)
}

fn clamp_norm(v: Vector3<f64>, max: f64) -> Vector3<f64> {
    let n = v.norm();
    if n > max {
        v * (max / n)
    } else {
        v
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IkStep {
    pub dq: Vec<f64>,
    pub kkt_residual: f64,
}

/// One differential IK step: the box-constrained QP
/// `min |W(J dq - v)|^2 + lambda |dq - dq_post|^2`, where `dq_post` pulls toward
/// the posture reference inside the null space of the weighted frame task.
pub fn ik_step(chain: &KinematicChain, q: &[f64], task: &IkTask) -> Result<IkStep, KinematicsError> {
    check_q(chain, q)?;
    task.validate(chain)?;
    let pose = fk(chain, q)?;
    let jac = jacobian(chain, q)?;
    let (ep, er) = frame_error(&pose, &task.target);
    let v_lin = clamp_norm(ep, task.max_linear_speed * task.dt);
    let v_ang = clamp_norm(er, task.max_angular_speed * task.dt);
    let w = DVector::from_row_slice(&task.frame_weight);
    let wv = DVector::from_fn(6, |i, _| w[i] * if i < 3 { v_lin[i] } else { v_ang[i - 3] });

    let free: Vec<usize> = (0..chain.dof()).filter(|i| !task.frozen.contains(i)).collect();
    let m = free.len();
    let wj = DMatrix::from_fn(6, m, |r, c| w[r] * jac[(r, free[c])]);
    let lambda = task.posture_weight;

    let svd = wj.clone().svd(false, true);
    let v_t = svd.v_t.as_ref().expect("requested V^T");
    let smax = svd.singular_values.max();
    let rank_tol = 1e-9 * smax.max(1e-300);
    let rank = svd.singular_values.iter().filter(|&&s| s > rank_tol).count();
    if lambda == 0.0 && rank < m {
        return Err(KinematicsError::Degenerate);
    }

    let pull = (task.posture_rate * task.dt).min(1.0);
    let d = DVector::from_fn(m, |a, _| pull * (task.posture_ref[free[a]] - q[free[a]]));
    let mut dq_post = d.clone();
    for (k, &s) in svd.singular_values.iter().enumerate() {
        if s > rank_tol {
            let row = v_t.row(k).transpose();
            dq_post -= &row * row.dot(&d);
        }
    }

    let lo = DVector::from_fn(m, |a, _| {
        let (j, qi) = (&chain.joints[free[a]], q[free[a]]);
        (j.limit_lo - qi).max(-j.vel_limit * task.dt).min(0.0)
    });
    let hi = DVector::from_fn(m, |a, _| {
        let (j, qi) = (&chain.joints[free[a]], q[free[a]]);
        (j.limit_hi - qi).min(j.vel_limit * task.dt).max(0.0)
    });
    // Shrink the posture pull uniformly into the box so that it stays in the
    // null space instead of being clipped into the frame task.
    let fit = (0..m)
        .map(|a| match dq_post[a] {
            p if p > 0.0 => hi[a] / p,
            p if p < 0.0 => lo[a] / p,
            _ => f64::INFINITY,
        })
        .fold(1.0, f64::min);
    dq_post *= fit;

    let h = wj.transpose() * &wj + DMatrix::identity(m, m) * lambda;
    let g = wj.transpose() * &wv + &dq_post * lambda;
    let sol = solve_box_qp(&BoxQp { h, g, lo, hi })?;
    if sol.kkt_residual > KKT_TOL {
        return Err(KinematicsError::KktResidual(sol.kkt_residual));
    }
    let mut dq = vec![0.0; chain.dof()];
    for (a, &i) in free.iter().enumerate() {
        dq[i] = sol.x[a];
    }
    Ok(IkStep { dq, kkt_residual: sol.kkt_residual })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Reached,
    MaxSteps,
    Stalled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub dt: f64,
    /// Joint vectors at `t = k * dt`, starting with `q0`.
    pub samples: Vec<Vec<f64>>,
    pub termination: Termination,
    pub final_position_error: f64,
    pub final_rotation_error: f64,
}

impl Trajectory {
    pub fn final_q(&self) -> &[f64] {
        self.samples.last().expect("trajectory has q0")
    }

    pub fn duration(&self) -> f64 {
        (self.samples.len() - 1) as f64 * self.dt
    }

    /// Writes `t,q0,...,qn`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        let n = self.samples.first().map_or(0, Vec::len);
        let header: Vec<String> = std::iter::once("t".to_string()).chain((0..n).map(|i| format!("q{i}"))).collect();
        writeln!(w, "{}", header.join(","))?;
        for (k, q) in self.samples.iter().enumerate() {
            write!(w, "{:.6}", k as f64 * self.dt)?;
            for v in q {
                write!(w, ",{v:.9}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

/// Iterates `ik_step` from `q0` until the target is reached, the step
/// vanishes, or `max_steps` is spent.
pub fn solve_trajectory(chain: &KinematicChain, q0: &[f64], task: &IkTask) -> Result<Trajectory, KinematicsError> {
    check_q(chain, q0)?;
    task.validate(chain)?;
    let mut q = q0.to_vec();
    let mut samples = vec![q.clone()];
    let mut termination = Termination::MaxSteps;
    for _ in 0..task.max_steps {
        if task.is_reached(&fk(chain, &q)?) {
            termination = Termination::Reached;
            break;
        }
        let step = ik_step(chain, &q, task)?;
        if step.dq.iter().map(|d| d * d).sum::<f64>().sqrt() < STALL_NORM {
            termination = Termination::Stalled;
            break;
        }
        for (qi, d) in q.iter_mut().zip(&step.dq) {
            *qi += d;
        }
        chain.clamp(&mut q);
        samples.push(q.clone());
    }
    let pose = fk(chain, &q)?;
    if termination == Termination::MaxSteps && task.is_reached(&pose) {
        termination = Termination::Reached;
    }
    let (final_position_error, final_rotation_error) = task.errors(&pose);
    Ok(Trajectory { dt: task.dt, samples, termination, final_position_error, final_rotation_error })
}
