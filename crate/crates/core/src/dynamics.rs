//! Benchmark dynamics in port-Hamiltonian form.
//!
//! Each system is described by a state-dependent quadruple `(J, R, B, H)`
//! and evolves as
//!
//! ```text
//!     dx/dt = (J(x) - R(x)) ∇H(x) + B(x) u
//!     y     = B(x)^T ∇H(x)
//! ```
//!
//! with `J` skew-symmetric, `R` symmetric positive semidefinite, and `H`
//! bounded below. Along any trajectory the stored energy obeys the power
//! balance `dH/dt = y^T u - ∇H^T R ∇H`, which the data generator uses as an
//! integration check.
//!
//! Three benchmarks are provided:
//!
//! * `spring`: two serially coupled mass-spring-damper pairs, state
//!   `[q1, p1, q2, p2]`, forces on both masses as inputs, velocities as
//!   outputs. Damping is cubic in momentum, so `R` depends on the state.
//! * `ball`: magnetic levitation of a ball, state `[position, momentum,
//!   flux]`, coil voltage as input, current as output. The inductance varies
//!   with the position, which couples the flux energy to the mechanical
//!   coordinate.
//! * `motor`: permanent-magnet synchronous motor in dq coordinates, state
//!   `[flux_d, flux_q, angular momentum]`, dq voltages as inputs. The
//!   interconnection matrix depends on the state, so the drift is nonlinear
//!   even though the energy is quadratic.
//!
//! Two additional closed-form systems (`decay`, `oscillator`) exist only to
//! exercise the integrator against analytic solutions.

use crate::error::{Error, Result};
use rand::Rng;

/// Two coupled mass-spring-damper pairs. `H = k1 q1^2/2 + p1^2/(2 m1)
/// + k2 q2^2/2 + p2^2/(2 m2)`, dampers act with force `b_i (p_i/m_i)^3`.
#[derive(Clone, Debug, PartialEq)]
pub struct SpringParams {
    pub m1: f64,
    pub m2: f64,
    pub b1: f64,
    pub b2: f64,
    pub k1: f64,
    pub k2: f64,
}

impl Default for SpringParams {
    fn default() -> Self {
        SpringParams { m1: 1.0, m2: 1.5, b1: 2.0, b2: 2.0, k1: 1.0, k2: 0.1 }
    }
}

/// Magnetic levitation. Position-dependent inductance
/// `L(x1) = 1/(0.1 + x1^2)`, so the magnetic energy is
/// `x3^2 (0.1 + x1^2)/2`; kinetic energy `x2^2/(2m)`. `r` is the coil
/// resistance, `c` the mechanical friction coefficient.
#[derive(Clone, Debug, PartialEq)]
pub struct BallParams {
    pub m: f64,
    pub r: f64,
    pub c: f64,
}

impl Default for BallParams {
    fn default() -> Self {
        BallParams { m: 0.1, r: 0.1, c: 1.0 }
    }
}

/// Synchronous motor in dq coordinates. `j_m` rotor inertia, `l` winding
/// inductance, `beta` mechanical damping, `r` winding resistance, `phi`
/// permanent-magnet flux linkage.
#[derive(Clone, Debug, PartialEq)]
pub struct MotorParams {
    pub j_m: f64,
    pub l: f64,
    pub beta: f64,
    pub r: f64,
    pub phi: f64,
}

impl Default for MotorParams {
    fn default() -> Self {
        MotorParams { j_m: 0.012, l: 3.8e-3, beta: 0.0026, r: 0.225, phi: 0.17 }
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Kind {
    Spring(SpringParams),
    Ball(BallParams),
    Motor(MotorParams),
    /// `H = |x|^2/2`, `J = 0`, `R = I`, no input: `dx/dt = -x`.
    Decay { dim: usize },
    /// `H = |x|^2/2`, planar rotation, lossless, no input.
    Oscillator,
}

/// A concrete port-Hamiltonian system together with the box from which
/// initial states are drawn.
#[derive(Clone, Debug, PartialEq)]
pub struct PhSystem {
    kind: Kind,
    pub x_min: Vec<f64>,
    pub x_max: Vec<f64>,
}

impl PhSystem {
    pub fn spring() -> Self {
        Self::spring_with(SpringParams::default())
    }

    pub fn spring_with(p: SpringParams) -> Self {
        PhSystem { kind: Kind::Spring(p), x_min: vec![-1.0; 4], x_max: vec![1.0; 4] }
    }

    pub fn ball() -> Self {
        Self::ball_with(BallParams::default())
    }

    pub fn ball_with(p: BallParams) -> Self {
        PhSystem { kind: Kind::Ball(p), x_min: vec![-0.5; 3], x_max: vec![0.5; 3] }
    }

    pub fn motor() -> Self {
        Self::motor_with(MotorParams::default())
    }

    pub fn motor_with(p: MotorParams) -> Self {
        PhSystem { kind: Kind::Motor(p), x_min: vec![-0.5; 3], x_max: vec![0.5; 3] }
    }

    /// Linear contraction toward the origin; closed-form solution
    /// `x(t) = x0 exp(-t)`. Test system.
    pub fn linear_decay(dim: usize) -> Self {
        PhSystem { kind: Kind::Decay { dim }, x_min: vec![-1.0; dim], x_max: vec![1.0; dim] }
    }

    /// Lossless planar rotation; conserves `H`. Test system.
    pub fn oscillator() -> Self {
        PhSystem { kind: Kind::Oscillator, x_min: vec![-1.0; 2], x_max: vec![1.0; 2] }
    }

    /// Benchmark lookup by CLI name. Test systems are not reachable here.
    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "spring" => Ok(Self::spring()),
            "ball" => Ok(Self::ball()),
            "motor" => Ok(Self::motor()),
            other => Err(Error::invalid(format!(
                "unknown system {other:?} (expected spring, ball, or motor)"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match &self.kind {
            Kind::Spring(_) => "spring",
            Kind::Ball(_) => "ball",
            Kind::Motor(_) => "motor",
            Kind::Decay { .. } => "decay",
            Kind::Oscillator => "oscillator",
        }
    }

    pub fn state_dim(&self) -> usize {
        match &self.kind {
            Kind::Spring(_) => 4,
            Kind::Ball(_) | Kind::Motor(_) => 3,
            Kind::Decay { dim } => *dim,
            Kind::Oscillator => 2,
        }
    }

    pub fn input_dim(&self) -> usize {
        match &self.kind {
            Kind::Spring(_) | Kind::Motor(_) => 2,
            Kind::Ball(_) => 1,
            Kind::Decay { .. } | Kind::Oscillator => 1,
        }
    }

    /// Replace the initial-state sampling box.
    pub fn with_bounds(mut self, x_min: Vec<f64>, x_max: Vec<f64>) -> Result<Self> {
        let n = self.state_dim();
        if x_min.len() != n || x_max.len() != n {
            return Err(Error::invalid(format!(
                "bounds must have {n} components, got {} and {}",
                x_min.len(),
                x_max.len()
            )));
        }
        if x_min.iter().zip(&x_max).any(|(lo, hi)| !(lo <= hi)) {
            return Err(Error::invalid("bounds must satisfy x_min <= x_max componentwise"));
        }
        self.x_min = x_min;
        self.x_max = x_max;
        Ok(self)
    }

    /// Set one physical parameter by its conventional symbol. Valid keys:
    /// spring `m1 m2 b1 b2 k1 k2`, ball `m R c`, motor `J_m L beta r Phi`.
    pub fn set_param(&mut self, key: &str, value: f64) -> Result<()> {
        let unknown = |name: &str, key: &str| {
            Err(Error::invalid(format!("system {name:?} has no parameter {key:?}")))
        };
        match &mut self.kind {
            Kind::Spring(p) => match key {
                "m1" => p.m1 = value,
                "m2" => p.m2 = value,
                "b1" => p.b1 = value,
                "b2" => p.b2 = value,
                "k1" => p.k1 = value,
                "k2" => p.k2 = value,
                _ => return unknown("spring", key),
            },
            Kind::Ball(p) => match key {
                "m" => p.m = value,
                "R" => p.r = value,
                "c" => p.c = value,
                _ => return unknown("ball", key),
            },
            Kind::Motor(p) => match key {
                "J_m" => p.j_m = value,
                "L" => p.l = value,
                "beta" => p.beta = value,
                "r" => p.r = value,
                "Phi" => p.phi = value,
                _ => return unknown("motor", key),
            },
            Kind::Decay { .. } | Kind::Oscillator => {
                return unknown(self.name(), key);
            }
        }
        Ok(())
    }

    /// Stored energy. Nonnegative for all states.
    pub fn hamiltonian(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.state_dim());
        match &self.kind {
            Kind::Spring(p) => {
                0.5 * p.k1 * x[0] * x[0]
                    + x[1] * x[1] / (2.0 * p.m1)
                    + 0.5 * p.k2 * x[2] * x[2]
                    + x[3] * x[3] / (2.0 * p.m2)
            }
            Kind::Ball(p) => x[1] * x[1] / (2.0 * p.m) + 0.5 * x[2] * x[2] * (0.1 + x[0] * x[0]),
            Kind::Motor(p) => {
                (x[0] * x[0] + x[1] * x[1]) / (2.0 * p.l) + x[2] * x[2] / (2.0 * p.j_m)
            }
            Kind::Decay { .. } | Kind::Oscillator => 0.5 * x.iter().map(|v| v * v).sum::<f64>(),
        }
    }

    /// Gradient of the stored energy.
    pub fn grad_h(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.state_dim());
        match &self.kind {
            Kind::Spring(p) => vec![p.k1 * x[0], x[1] / p.m1, p.k2 * x[2], x[3] / p.m2],
            Kind::Ball(p) => vec![
                x[0] * x[2] * x[2],
                x[1] / p.m,
                x[2] * (0.1 + x[0] * x[0]),
            ],
            Kind::Motor(p) => vec![x[0] / p.l, x[1] / p.l, x[2] / p.j_m],
            Kind::Decay { .. } | Kind::Oscillator => x.to_vec(),
        }
    }

    /// Interconnection matrix, row-major `n x n`. Skew-symmetric.
    // Entries are written `row * stride + col` for every row, including row
    // zero, so the layout reads off directly.
    #[allow(clippy::erasing_op, clippy::identity_op)]
    pub fn j_matrix(&self, x: &[f64]) -> Vec<f64> {
        let n = self.state_dim();
        let mut j = vec![0.0; n * n];
        match &self.kind {
            Kind::Spring(_) => {
                // Chain topology: coordinate shifts feed adjacent momenta.
                j[0 * 4 + 1] = 1.0;
                j[1 * 4 + 0] = -1.0;
                j[1 * 4 + 2] = 1.0;
                j[2 * 4 + 1] = -1.0;
                j[2 * 4 + 3] = 1.0;
                j[3 * 4 + 2] = -1.0;
            }
            Kind::Ball(_) => {
                j[0 * 3 + 1] = 1.0;
                j[1 * 3 + 0] = -1.0;
            }
            Kind::Motor(p) => {
                j[0 * 3 + 2] = x[1];
                j[1 * 3 + 2] = -x[0] - p.phi;
                j[2 * 3 + 0] = -x[1];
                j[2 * 3 + 1] = x[0] + p.phi;
            }
            Kind::Decay { .. } => {}
            Kind::Oscillator => {
                j[0 * 2 + 1] = 1.0;
                j[1 * 2 + 0] = -1.0;
            }
        }
        j
    }

    /// Dissipation matrix, row-major `n x n`. Diagonal and nonnegative for
    /// every system here.
    #[allow(clippy::erasing_op, clippy::identity_op)]
    pub fn r_matrix(&self, x: &[f64]) -> Vec<f64> {
        let n = self.state_dim();
        let mut r = vec![0.0; n * n];
        match &self.kind {
            Kind::Spring(p) => {
                r[1 * 4 + 1] = p.b1 * x[1] * x[1] / (p.m1 * p.m1);
                r[3 * 4 + 3] = p.b2 * x[3] * x[3] / (p.m2 * p.m2);
            }
            Kind::Ball(p) => {
                r[1 * 3 + 1] = p.c * x[1].abs();
                r[2 * 3 + 2] = 1.0 / p.r;
            }
            Kind::Motor(p) => {
                r[0 * 3 + 0] = p.r;
                r[1 * 3 + 1] = p.r;
                r[2 * 3 + 2] = p.beta;
            }
            Kind::Decay { dim } => {
                for i in 0..*dim {
                    r[i * dim + i] = 1.0;
                }
            }
            Kind::Oscillator => {}
        }
        r
    }

    /// Input matrix, row-major `n x m`.
    #[allow(clippy::erasing_op, clippy::identity_op)]
    pub fn b_matrix(&self, _x: &[f64]) -> Vec<f64> {
        let (n, m) = (self.state_dim(), self.input_dim());
        let mut b = vec![0.0; n * m];
        match &self.kind {
            Kind::Spring(_) => {
                // Forces act on the two momenta.
                b[1 * 2 + 0] = 1.0;
                b[3 * 2 + 1] = 1.0;
            }
            Kind::Ball(_) => {
                b[2] = 1.0;
            }
            Kind::Motor(_) => {
                b[0 * 2 + 0] = 1.0;
                b[1 * 2 + 1] = 1.0;
            }
            Kind::Decay { .. } | Kind::Oscillator => {}
        }
        b
    }

    /// Drift plus forced dynamics `(J - R) ∇H + B u`.
    pub fn rhs(&self, x: &[f64], u: &[f64]) -> Result<Vec<f64>> {
        let (n, m) = (self.state_dim(), self.input_dim());
        if x.len() != n {
            return Err(Error::invalid(format!("state must have {n} components, got {}", x.len())));
        }
        if u.len() != m {
            return Err(Error::invalid(format!("input must have {m} components, got {}", u.len())));
        }
        let g = self.grad_h(x);
        let j = self.j_matrix(x);
        let r = self.r_matrix(x);
        let b = self.b_matrix(x);
        let mut dx = vec![0.0; n];
        for i in 0..n {
            let mut acc = 0.0;
            for k in 0..n {
                acc += (j[i * n + k] - r[i * n + k]) * g[k];
            }
            for q in 0..m {
                acc += b[i * m + q] * u[q];
            }
            dx[i] = acc;
        }
        Ok(dx)
    }

    /// Collocated output `B^T ∇H`.
    pub fn output(&self, x: &[f64]) -> Vec<f64> {
        let (n, m) = (self.state_dim(), self.input_dim());
        let g = self.grad_h(x);
        let b = self.b_matrix(x);
        let mut y = vec![0.0; m];
        for q in 0..m {
            let mut acc = 0.0;
            for i in 0..n {
                acc += b[i * m + q] * g[i];
            }
            y[q] = acc;
        }
        y
    }

    /// Instantaneous dissipated power `∇H^T R ∇H`. Nonnegative.
    pub fn dissipation(&self, x: &[f64]) -> f64 {
        let n = self.state_dim();
        let g = self.grad_h(x);
        let r = self.r_matrix(x);
        let mut acc = 0.0;
        for i in 0..n {
            for k in 0..n {
                acc += g[i] * r[i * n + k] * g[k];
            }
        }
        acc
    }

    /// Uniform draw from the sampling box, component by component in order.
    pub fn sample_initial_state<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        self.x_min
            .iter()
            .zip(&self.x_max)
            .map(|(&lo, &hi)| if lo == hi { lo } else { rng.random_range(lo..=hi) })
            .collect()
    }
}
