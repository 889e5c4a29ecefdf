//! Neural identification models.
//!
//! Three architectures predict `(dx/dt, y)` from `(x, u)`:
//!
//! * `unstructured`: two plain networks `f(x, u)` and `g(x)`; no structure
//!   imposed. Hidden width is doubled relative to the other architectures so
//!   parameter counts stay comparable.
//! * `input-affine`: `dx/dt = h(x) + j(x) u`, `y = k(x)`; affine dependence
//!   on the input is built in, nothing else.
//! * `ph`: a full port-Hamiltonian parametrization. Networks emit a raw
//!   square matrix `A(x)` (skew-symmetrized into the interconnection
//!   matrix), a lower-triangular factor (squared into the dissipation
//!   matrix, so it is positive semidefinite by construction), an input
//!   matrix, and a feature vector whose squared norm is the stored energy.
//!   Prediction uses the energy gradient, obtained by reverse mode through
//!   the feature network.
//!
//! States and inputs are standardized with training-set statistics before
//! entering any network; the energy gradient is mapped back to physical
//! coordinates by the chain rule.

use crate::datagen::{column_std, Dataset};
use crate::error::{Error, Result};
use crate::nn::{Mlp, MlpCache, MlpShape};
use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Arch {
    #[serde(rename = "unstructured")]
    Unstructured,
    #[serde(rename = "input-affine")]
    InputAffine,
    #[serde(rename = "ph")]
    PortHamiltonian,
}

impl Arch {
    pub const ALL: [Arch; 3] = [Arch::Unstructured, Arch::InputAffine, Arch::PortHamiltonian];

    pub fn as_str(&self) -> &'static str {
        match self {
            Arch::Unstructured => "unstructured",
            Arch::InputAffine => "input-affine",
            Arch::PortHamiltonian => "ph",
        }
    }
}

impl std::fmt::Display for Arch {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Arch {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "unstructured" => Ok(Arch::Unstructured),
            "input-affine" => Ok(Arch::InputAffine),
            "ph" => Ok(Arch::PortHamiltonian),
            other => Err(Error::invalid(format!(
                "unknown architecture {other:?} (expected unstructured, input-affine, or ph)"
            ))),
        }
    }
}

/// Standardization statistics, computed from the training set. Standard
/// deviations are floored so constant channels cannot produce divisions by
/// zero.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean_x: Vec<f64>,
    pub std_x: Vec<f64>,
    pub mean_u: Vec<f64>,
    pub std_u: Vec<f64>,
}

pub const STD_FLOOR: f64 = 1e-8;

fn column_mean(data: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut mean = vec![0.0; cols];
    for r in 0..rows {
        for c in 0..cols {
            mean[c] += data[r * cols + c];
        }
    }
    for c in 0..cols {
        mean[c] /= rows as f64;
    }
    mean
}

impl NormStats {
    pub fn from_dataset(ds: &Dataset) -> Self {
        let mean_x = column_mean(&ds.states, ds.rows, ds.n);
        let std_x =
            column_std(&ds.states, ds.rows, ds.n).iter().map(|s| s.max(STD_FLOOR)).collect();
        let mean_u = column_mean(&ds.inputs, ds.rows, ds.m);
        let std_u =
            column_std(&ds.inputs, ds.rows, ds.m).iter().map(|s| s.max(STD_FLOOR)).collect();
        NormStats { mean_x, std_x, mean_u, std_u }
    }

    /// Identity transform for the given dimensions (used by tests).
    pub fn identity(n: usize, m: usize) -> Self {
        NormStats {
            mean_x: vec![0.0; n],
            std_x: vec![1.0; n],
            mean_u: vec![0.0; m],
            std_u: vec![1.0; m],
        }
    }
}

#[derive(Clone, Debug)]
enum Blocks {
    /// f: (x, u) -> dx/dt, g: x -> y.
    Unstructured { f: Mlp, g: Mlp },
    /// h: drift, j: input matrix entries, k: output.
    InputAffine { h: Mlp, j: Mlp, k: Mlp },
    /// a: raw interconnection, lam: dissipation factor, b: input matrix,
    /// ham: energy features.
    PortHamiltonian { a: Mlp, lam: Mlp, b: Mlp, ham: Mlp },
}

impl Blocks {
    fn as_vec(&self) -> Vec<&Mlp> {
        match self {
            Blocks::Unstructured { f, g } => vec![f, g],
            Blocks::InputAffine { h, j, k } => vec![h, j, k],
            Blocks::PortHamiltonian { a, lam, b, ham } => vec![a, lam, b, ham],
        }
    }
}

/// One trainable identification model: flat parameters, block views, and the
/// standardization attached at build time.
#[derive(Clone, Debug)]
pub struct IdentModel {
    pub arch: Arch,
    pub n: usize,
    pub m: usize,
    pub hidden: usize,
    pub depth: usize,
    pub theta: Vec<f64>,
    pub norm: NormStats,
    blocks: Blocks,
}

/// Preallocated per-thread scratch for forward/backward passes.
#[derive(Clone, Debug)]
pub struct Workspace {
    caches: Vec<MlpCache>,
    xt: Vec<f64>,
    ut: Vec<f64>,
    xu: Vec<f64>,
    jm: Vec<f64>,
    rm: Vec<f64>,
    lm: Vec<f64>,
    bm: Vec<f64>,
    g_phys: Vec<f64>,
    pub pred_xdot: Vec<f64>,
    pub pred_y: Vec<f64>,
    d_xdot: Vec<f64>,
    d_y: Vec<f64>,
    d_gphys: Vec<f64>,
    d_a: Vec<f64>,
    d_lp: Vec<f64>,
    d_b: Vec<f64>,
    v_norm: Vec<f64>,
    seed_a: Vec<f64>,
    seed_b: Vec<f64>,
}

fn make_blocks(arch: Arch, n: usize, m: usize, hidden: usize, depth: usize) -> Blocks {
    let mut at = 0;
    let mut next = |input: usize, output: usize, width: usize| {
        let mlp = Mlp::new(MlpShape { input, output, hidden: width, depth }, at);
        at = mlp.end();
        mlp
    };
    match arch {
        Arch::Unstructured => {
            let wide = 2 * hidden;
            let f = next(n + m, n, wide);
            let g = next(n, m, wide);
            Blocks::Unstructured { f, g }
        }
        Arch::InputAffine => {
            let h = next(n, n, hidden);
            let j = next(n, n * m, hidden);
            let k = next(n, m, hidden);
            Blocks::InputAffine { h, j, k }
        }
        Arch::PortHamiltonian => {
            let a = next(n, n * n, hidden);
            let lam = next(n, n * (n + 1) / 2, hidden);
            let b = next(n, n * m, hidden);
            let ham = next(n, hidden, hidden);
            Blocks::PortHamiltonian { a, lam, b, ham }
        }
    }
}

/// Parameter count a model of this shape would have, without building it.
pub fn param_count_for(arch: Arch, n: usize, m: usize, hidden: usize, depth: usize) -> usize {
    make_blocks(arch, n, m, hidden, depth).as_vec().iter().map(|b| b.param_count()).sum()
}

impl IdentModel {
    /// Allocate and initialize a model. Weight draws happen block by block
    /// in declaration order, so a fixed generator fixes the model.
    pub fn build<R: Rng>(
        arch: Arch,
        n: usize,
        m: usize,
        hidden: usize,
        depth: usize,
        norm: NormStats,
        rng: &mut R,
    ) -> Result<IdentModel> {
        if n == 0 || m == 0 {
            return Err(Error::invalid("model needs n >= 1 state and m >= 1 input dims"));
        }
        if hidden == 0 || depth == 0 {
            return Err(Error::invalid("hidden width and depth must be at least 1"));
        }
        if norm.mean_x.len() != n || norm.std_x.len() != n || norm.mean_u.len() != m {
            return Err(Error::invalid("normalization statistics do not match model dims"));
        }
        if norm.std_x.iter().chain(&norm.std_u).any(|s| !(*s > 0.0)) {
            return Err(Error::invalid("normalization spread must be positive"));
        }
        let blocks = make_blocks(arch, n, m, hidden, depth);
        let total: usize = blocks.as_vec().iter().map(|b| b.param_count()).sum();
        let mut theta = vec![0.0; total];
        for block in blocks.as_vec() {
            block.init(&mut theta, rng);
        }
        Ok(IdentModel { arch, n, m, hidden, depth, theta, norm, blocks })
    }

    pub fn param_count(&self) -> usize {
        self.theta.len()
    }

    pub fn workspace(&self) -> Workspace {
        let (n, m) = (self.n, self.m);
        let caches = self.blocks.as_vec().iter().map(|b| b.new_cache()).collect();
        let ham_out = match self.arch {
            Arch::PortHamiltonian => self.hidden,
            _ => 1,
        };
        Workspace {
            caches,
            xt: vec![0.0; n],
            ut: vec![0.0; m],
            xu: vec![0.0; n + m],
            jm: vec![0.0; n * n],
            rm: vec![0.0; n * n],
            lm: vec![0.0; n * n],
            bm: vec![0.0; n * m],
            g_phys: vec![0.0; n],
            pred_xdot: vec![0.0; n],
            pred_y: vec![0.0; m],
            d_xdot: vec![0.0; n],
            d_y: vec![0.0; m],
            d_gphys: vec![0.0; n],
            d_a: vec![0.0; n * n],
            d_lp: vec![0.0; n * (n + 1) / 2],
            d_b: vec![0.0; n * m],
            v_norm: vec![0.0; n],
            seed_a: vec![0.0; ham_out],
            seed_b: vec![0.0; ham_out],
        }
    }

    fn standardize(&self, x: &[f64], u: &[f64], ws: &mut Workspace) {
        for i in 0..self.n {
            ws.xt[i] = (x[i] - self.norm.mean_x[i]) / self.norm.std_x[i];
        }
        for q in 0..self.m {
            ws.ut[q] = (u[q] - self.norm.mean_u[q]) / self.norm.std_u[q];
        }
    }

    /// Forward pass into `ws.pred_xdot` / `ws.pred_y`, leaving every block
    /// cache ready for `backward_ws`.
    fn forward_ws(&self, x: &[f64], u: &[f64], ws: &mut Workspace) {
        let (n, m) = (self.n, self.m);
        self.standardize(x, u, ws);
        match &self.blocks {
            Blocks::Unstructured { f, g } => {
                ws.xu[..n].copy_from_slice(&ws.xt);
                ws.xu[n..].copy_from_slice(&ws.ut);
                f.forward(&self.theta, &ws.xu, &mut ws.caches[0]);
                ws.pred_xdot.copy_from_slice(&ws.caches[0].out);
                g.forward(&self.theta, &ws.xt, &mut ws.caches[1]);
                ws.pred_y.copy_from_slice(&ws.caches[1].out);
            }
            Blocks::InputAffine { h, j, k } => {
                h.forward(&self.theta, &ws.xt, &mut ws.caches[0]);
                j.forward(&self.theta, &ws.xt, &mut ws.caches[1]);
                k.forward(&self.theta, &ws.xt, &mut ws.caches[2]);
                ws.bm.copy_from_slice(&ws.caches[1].out);
                for i in 0..n {
                    let mut acc = ws.caches[0].out[i];
                    for q in 0..m {
                        acc += ws.bm[i * m + q] * ws.ut[q];
                    }
                    ws.pred_xdot[i] = acc;
                }
                ws.pred_y.copy_from_slice(&ws.caches[2].out);
            }
            Blocks::PortHamiltonian { a, lam, b, ham } => {
                a.forward(&self.theta, &ws.xt, &mut ws.caches[0]);
                lam.forward(&self.theta, &ws.xt, &mut ws.caches[1]);
                b.forward(&self.theta, &ws.xt, &mut ws.caches[2]);
                // Skew part of the raw square output.
                for i in 0..n {
                    for k in 0..n {
                        ws.jm[i * n + k] = ws.caches[0].out[i * n + k] - ws.caches[0].out[k * n + i];
                    }
                }
                // Lower-triangular factor, then R = L L^T.
                ws.lm.fill(0.0);
                for i in 0..n {
                    for k in 0..=i {
                        ws.lm[i * n + k] = ws.caches[1].out[i * (i + 1) / 2 + k];
                    }
                }
                for i in 0..n {
                    for k in 0..n {
                        let lim = i.min(k);
                        let mut acc = 0.0;
                        for j2 in 0..=lim {
                            acc += ws.lm[i * n + j2] * ws.lm[k * n + j2];
                        }
                        ws.rm[i * n + k] = acc;
                    }
                }
                ws.bm.copy_from_slice(&ws.caches[2].out);
                // Energy gradient in standardized coordinates via reverse
                // mode, then back to physical units.
                ham.forward(&self.theta, &ws.xt, &mut ws.caches[3]);
                ws.seed_a.copy_from_slice(&ws.caches[3].out);
                {
                    let Workspace { caches, v_norm, seed_a, .. } = &mut *ws;
                    ham.backward(&self.theta, &mut caches[3], seed_a, None, Some(&mut v_norm[..]));
                }
                for i in 0..n {
                    ws.g_phys[i] = ws.v_norm[i] / self.norm.std_x[i];
                }
                for i in 0..n {
                    let mut acc = 0.0;
                    for k in 0..n {
                        acc += (ws.jm[i * n + k] - ws.rm[i * n + k]) * ws.g_phys[k];
                    }
                    for q in 0..m {
                        acc += ws.bm[i * m + q] * ws.ut[q];
                    }
                    ws.pred_xdot[i] = acc;
                }
                for q in 0..m {
                    let mut acc = 0.0;
                    for i in 0..n {
                        acc += ws.bm[i * m + q] * ws.g_phys[i];
                    }
                    ws.pred_y[q] = acc;
                }
            }
        }
    }

    /// Reverse pass for the sample currently held in `ws`, seeded from
    /// `ws.d_xdot` / `ws.d_y`. Accumulates into `grad`.
    fn backward_ws(&self, ws: &mut Workspace, grad: &mut [f64]) {
        let (n, m) = (self.n, self.m);
        match &self.blocks {
            Blocks::Unstructured { f, g } => {
                let (d_xdot, d_y) = (&ws.d_xdot, &ws.d_y);
                f.backward(&self.theta, &mut ws.caches[0], d_xdot, Some(grad), None);
                g.backward(&self.theta, &mut ws.caches[1], d_y, Some(grad), None);
            }
            Blocks::InputAffine { h, j, k } => {
                for i in 0..n {
                    for q in 0..m {
                        ws.d_b[i * m + q] = ws.d_xdot[i] * ws.ut[q];
                    }
                }
                h.backward(&self.theta, &mut ws.caches[0], &ws.d_xdot, Some(grad), None);
                j.backward(&self.theta, &mut ws.caches[1], &ws.d_b, Some(grad), None);
                k.backward(&self.theta, &mut ws.caches[2], &ws.d_y, Some(grad), None);
            }
            Blocks::PortHamiltonian { a, lam, b, ham } => {
                // Adjoint of the energy gradient: through the drift term and
                // the output map.
                for k in 0..n {
                    let mut acc = 0.0;
                    for i in 0..n {
                        acc += (ws.jm[i * n + k] - ws.rm[i * n + k]) * ws.d_xdot[i];
                    }
                    for q in 0..m {
                        acc += ws.bm[k * m + q] * ws.d_y[q];
                    }
                    ws.d_gphys[k] = acc;
                }
                // Raw interconnection output: dJ = d_xdot g^T, skew-projected.
                for i in 0..n {
                    for k in 0..n {
                        ws.d_a[i * n + k] = ws.d_xdot[i] * ws.g_phys[k]
                            - ws.d_xdot[k] * ws.g_phys[i];
                    }
                }
                a.backward(&self.theta, &mut ws.caches[0], &ws.d_a, Some(grad), None);
                // dR = -d_xdot g^T; dL = (dR + dR^T) L on the lower triangle.
                for i in 0..n {
                    for j2 in 0..=i {
                        let mut acc = 0.0;
                        for k in 0..n {
                            let dr_ik = -ws.d_xdot[i] * ws.g_phys[k];
                            let dr_ki = -ws.d_xdot[k] * ws.g_phys[i];
                            acc += (dr_ik + dr_ki) * ws.lm[k * n + j2];
                        }
                        ws.d_lp[i * (i + 1) / 2 + j2] = acc;
                    }
                }
                lam.backward(&self.theta, &mut ws.caches[1], &ws.d_lp, Some(grad), None);
                for i in 0..n {
                    for q in 0..m {
                        ws.d_b[i * m + q] = ws.d_xdot[i] * ws.ut[q] + ws.g_phys[i] * ws.d_y[q];
                    }
                }
                b.backward(&self.theta, &mut ws.caches[2], &ws.d_b, Some(grad), None);
                // Energy network: the loss sees <v, grad H>; run the tangent
                // pass in direction v (standardized), then its reverse sweep.
                for i in 0..n {
                    ws.v_norm[i] = ws.d_gphys[i] / self.norm.std_x[i];
                }
                ham.forward_tangent(&self.theta, &ws.xt, &ws.v_norm, &mut ws.caches[3]);
                ws.seed_a.copy_from_slice(&ws.caches[3].tan_out);
                ws.seed_b.copy_from_slice(&ws.caches[3].out);
                let (seed_a, seed_b) = (&ws.seed_a, &ws.seed_b);
                ham.backward_tangent(&self.theta, &mut ws.caches[3], seed_a, seed_b, grad);
            }
        }
    }

    /// Predict into caller buffers without allocating.
    pub fn predict_into(
        &self,
        x: &[f64],
        u: &[f64],
        ws: &mut Workspace,
        xdot: &mut [f64],
        y: &mut [f64],
    ) {
        self.forward_ws(x, u, ws);
        xdot.copy_from_slice(&ws.pred_xdot);
        y.copy_from_slice(&ws.pred_y);
    }

    /// Convenience prediction with validation; allocates a workspace.
    pub fn predict(&self, x: &[f64], u: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        if x.len() != self.n || u.len() != self.m {
            return Err(Error::invalid(format!(
                "expected state dim {} and input dim {}, got {} and {}",
                self.n,
                self.m,
                x.len(),
                u.len()
            )));
        }
        let mut ws = self.workspace();
        self.forward_ws(x, u, &mut ws);
        Ok((ws.pred_xdot.clone(), ws.pred_y.clone()))
    }

    /// Batch loss and parameter gradient. Residuals are normalized by the
    /// per-column variance of the batch targets (floored), derivative and
    /// output terms weighted equally, and the sum averaged over the batch.
    pub fn loss_and_grad(
        &self,
        data: &Dataset,
        rows: &[usize],
        ws: &mut Workspace,
        grad: &mut [f64],
    ) -> Result<f64> {
        let (n, m) = (self.n, self.m);
        if data.n != n || data.m != m {
            return Err(Error::invalid("dataset dimensions do not match model"));
        }
        if rows.is_empty() {
            return Err(Error::invalid("empty batch"));
        }
        assert_eq!(grad.len(), self.theta.len());
        grad.fill(0.0);
        let count = rows.len() as f64;

        // Batch-target variances (population, floored). Constants with
        // respect to the parameters.
        let mut var_x = vec![0.0; n];
        let mut var_y = vec![0.0; m];
        {
            let mut mean_x = vec![0.0; n];
            let mut mean_y = vec![0.0; m];
            for &r in rows {
                for j in 0..n {
                    mean_x[j] += data.derivs[r * n + j];
                }
                for q in 0..m {
                    mean_y[q] += data.outputs[r * m + q];
                }
            }
            for v in &mut mean_x {
                *v /= count;
            }
            for v in &mut mean_y {
                *v /= count;
            }
            for &r in rows {
                for j in 0..n {
                    let d = data.derivs[r * n + j] - mean_x[j];
                    var_x[j] += d * d;
                }
                for q in 0..m {
                    let d = data.outputs[r * m + q] - mean_y[q];
                    var_y[q] += d * d;
                }
            }
            for v in &mut var_x {
                *v = (*v / count).max(STD_FLOOR);
            }
            for v in &mut var_y {
                *v = (*v / count).max(STD_FLOOR);
            }
        }

        let mut loss = 0.0;
        for &r in rows {
            let x = &data.states[r * n..(r + 1) * n];
            let u = &data.inputs[r * m..(r + 1) * m];
            self.forward_ws(x, u, ws);
            for j in 0..n {
                let res = ws.pred_xdot[j] - data.derivs[r * n + j];
                loss += res * res / var_x[j];
                ws.d_xdot[j] = 2.0 * res / (var_x[j] * count);
            }
            for q in 0..m {
                let res = ws.pred_y[q] - data.outputs[r * m + q];
                loss += res * res / var_y[q];
                ws.d_y[q] = 2.0 * res / (var_y[q] * count);
            }
            self.backward_ws(ws, grad);
        }
        loss /= count;
        if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NumericalFailure("non-finite loss or gradient".into()));
        }
        Ok(loss)
    }

    /// Learned interconnection, dissipation, and input matrices at `x`
    /// (row-major). Only defined for the `ph` architecture.
    pub fn structure_matrices(&self, x: &[f64]) -> Option<(Vec<f64>, Vec<f64>, Vec<f64>)> {
        match self.arch {
            Arch::PortHamiltonian => {
                let mut ws = self.workspace();
                self.forward_ws(x, &vec![0.0; self.m], &mut ws);
                Some((ws.jm.clone(), ws.rm.clone(), ws.bm.clone()))
            }
            _ => None,
        }
    }

    /// Learned stored energy at `x` (`ph` only). Nonnegative by
    /// construction.
    pub fn energy(&self, x: &[f64]) -> Option<f64> {
        match &self.blocks {
            Blocks::PortHamiltonian { ham, .. } => {
                let mut ws = self.workspace();
                self.standardize(x, &vec![0.0; self.m], &mut ws);
                ham.forward(&self.theta, &ws.xt, &mut ws.caches[3]);
                Some(0.5 * ws.caches[3].out.iter().map(|v| v * v).sum::<f64>())
            }
            _ => None,
        }
    }

    /// Gradient of the learned energy in physical coordinates (`ph` only).
    pub fn energy_grad(&self, x: &[f64]) -> Option<Vec<f64>> {
        match self.arch {
            Arch::PortHamiltonian => {
                let mut ws = self.workspace();
                self.forward_ws(x, &vec![0.0; self.m], &mut ws);
                Some(ws.g_phys.clone())
            }
            _ => None,
        }
    }
}

const MODEL_MAGIC: &[u8; 4] = b"NSLM";
const MODEL_VERSION: u32 = 1;

fn arch_tag(arch: Arch) -> u8 {
    match arch {
        Arch::Unstructured => 0,
        Arch::InputAffine => 1,
        Arch::PortHamiltonian => 2,
    }
}

impl IdentModel {
    /// Write the binary checkpoint (little-endian, fixed layout).
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(MODEL_MAGIC)?;
        w.write_u32::<LittleEndian>(MODEL_VERSION)?;
        w.write_u8(arch_tag(self.arch))?;
        for dim in [self.n, self.m, self.hidden, self.depth] {
            w.write_u32::<LittleEndian>(dim as u32)?;
        }
        w.write_u64::<LittleEndian>(self.theta.len() as u64)?;
        for &v in &self.theta {
            w.write_f64::<LittleEndian>(v)?;
        }
        for block in [&self.norm.mean_x, &self.norm.std_x, &self.norm.mean_u, &self.norm.std_u] {
            for &v in block {
                w.write_f64::<LittleEndian>(v)?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<IdentModel> {
        let bad = |detail: String| Error::MalformedFile {
            path: path.display().to_string(),
            detail,
        };
        let mut r = BufReader::new(File::open(path)?);
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MODEL_MAGIC {
            return Err(bad("bad magic".into()));
        }
        let version = r.read_u32::<LittleEndian>()?;
        if version != MODEL_VERSION {
            return Err(bad(format!("unsupported version {version}")));
        }
        let tag = r.read_u8()?;
        let arch = match tag {
            0 => Arch::Unstructured,
            1 => Arch::InputAffine,
            2 => Arch::PortHamiltonian,
            t => return Err(bad(format!("unknown architecture tag {t}"))),
        };
        let n = r.read_u32::<LittleEndian>()? as usize;
        let m = r.read_u32::<LittleEndian>()? as usize;
        let hidden = r.read_u32::<LittleEndian>()? as usize;
        let depth = r.read_u32::<LittleEndian>()? as usize;
        if n == 0 || m == 0 || hidden == 0 || depth == 0 || hidden > 1 << 20 {
            return Err(bad("implausible dimensions".into()));
        }
        let blocks = make_blocks(arch, n, m, hidden, depth);
        let expect: usize = blocks.as_vec().iter().map(|b| b.param_count()).sum();
        let len = r.read_u64::<LittleEndian>()? as usize;
        if len != expect {
            return Err(bad(format!("parameter count {len} does not match shape ({expect})")));
        }
        let mut theta = vec![0.0; len];
        r.read_f64_into::<LittleEndian>(&mut theta)?;
        let mut read_block = |len: usize| -> Result<Vec<f64>> {
            let mut v = vec![0.0; len];
            r.read_f64_into::<LittleEndian>(&mut v)?;
            Ok(v)
        };
        let norm = NormStats {
            mean_x: read_block(n)?,
            std_x: read_block(n)?,
            mean_u: read_block(m)?,
            std_u: read_block(m)?,
        };
        if norm.std_x.iter().chain(&norm.std_u).any(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(bad("invalid normalization statistics".into()));
        }
        Ok(IdentModel { arch, n, m, hidden, depth, theta, norm, blocks })
    }
}

/// Provenance sidecar for model checkpoints.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub system: String,
    pub arch: Arch,
    pub seed: u64,
    pub trajectories: f64,
    pub epochs: u64,
    pub hidden: usize,
    pub depth: usize,
}

impl ModelMeta {
    pub fn write(&self, model_path: &Path) -> Result<()> {
        let mut f = BufWriter::new(File::create(crate::datagen::sidecar_path(model_path))?);
        serde_json::to_writer_pretty(&mut f, self)?;
        f.write_all(b"\n")?;
        f.flush()?;
        Ok(())
    }
}
