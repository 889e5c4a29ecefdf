//! Broken power laws and their fit to envelope samples.
//!
//! The law is a product of a base power law and smooth break factors, with
//! an optional additive floor:
//!
//! ```text
//!     L(r) = alpha + beta * r^d0 * prod_i [1 + (r/s_i)^(1/f_i)]^(d_i f_i)
//! ```
//!
//! Each break factor is flat for `r << s_i` and adds `d_i` to the slope for
//! `r >> s_i`; `f_i` controls how wide the transition is and is floored at
//! 0.2 so a break cannot collapse into a kink. The fit minimizes the mean
//! squared log-space gap to the envelope samples (the margin), skipping the
//! first grid point, with Adam over log-space parameters and analytic
//! gradients. Initialization comes from segmented least squares on the
//! log-log samples, solved exactly by dynamic programming with segments
//! sharing their boundary points.
//!
//! Everything is evaluated through `log L` with softplus/sigmoid identities,
//! so huge resource ranges cannot overflow.

use crate::adam::Adam;
use crate::envelope::EnvelopeSamples;
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Lower bound applied to every break width before evaluation.
pub const PHI_FLOOR: f64 = 0.2;

/// Transition width after applying the floor.
pub fn phi_cap(phi: f64) -> f64 {
    phi.max(PHI_FLOOR)
}

/// One break factor in log-space parametrization.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BreakParams {
    pub log_sigma: f64,
    pub phi: f64,
    pub delta: f64,
}

/// Full law parameters. `log_alpha == None` pins the floor to exactly zero
/// rather than a small positive value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NslParams {
    pub log_alpha: Option<f64>,
    pub log_beta: f64,
    pub delta0: f64,
    pub breaks: Vec<BreakParams>,
}

fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn logaddexp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

impl NslParams {
    pub fn alpha(&self) -> f64 {
        self.log_alpha.map_or(0.0, f64::exp)
    }

    pub fn beta(&self) -> f64 {
        self.log_beta.exp()
    }

    /// Number of flattened optimizer coordinates.
    pub fn dim(&self) -> usize {
        usize::from(self.log_alpha.is_some()) + 2 + 3 * self.breaks.len()
    }

    /// Order: `[log_alpha?] log_beta delta0 (log_sigma phi delta)*`.
    pub fn flatten(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.dim());
        if let Some(la) = self.log_alpha {
            v.push(la);
        }
        v.push(self.log_beta);
        v.push(self.delta0);
        for b in &self.breaks {
            v.push(b.log_sigma);
            v.push(b.phi);
            v.push(b.delta);
        }
        v
    }

    pub fn unflatten(&mut self, v: &[f64]) {
        assert_eq!(v.len(), self.dim());
        let mut at = 0;
        if self.log_alpha.is_some() {
            self.log_alpha = Some(v[0]);
            at = 1;
        }
        self.log_beta = v[at];
        self.delta0 = v[at + 1];
        at += 2;
        for b in &mut self.breaks {
            b.log_sigma = v[at];
            b.phi = v[at + 1];
            b.delta = v[at + 2];
            at += 3;
        }
    }

    /// Log of the power-law product (everything except the floor).
    fn log_power(&self, ln_r: f64) -> f64 {
        let mut lp = self.log_beta + self.delta0 * ln_r;
        for b in &self.breaks {
            let pe = phi_cap(b.phi);
            let lq = (ln_r - b.log_sigma) / pe;
            lp += b.delta * pe * softplus(lq);
        }
        lp
    }

    /// `ln L(r)`; stable for any finite parameters and positive `r`.
    pub fn log_eval(&self, r: f64) -> f64 {
        let lp = self.log_power(r.ln());
        match self.log_alpha {
            None => lp,
            Some(la) => logaddexp(la, lp),
        }
    }

    /// `L(r)`. Errors on nonpositive or non-finite `r`.
    pub fn eval(&self, r: f64) -> Result<f64> {
        if !(r.is_finite() && r > 0.0) {
            return Err(Error::invalid(format!("law is defined for positive finite r, got {r}")));
        }
        Ok(self.log_eval(r).exp())
    }
}

fn check_samples(env: &EnvelopeSamples) -> Result<()> {
    if env.r.len() < 2 || env.r.len() != env.e.len() {
        return Err(Error::invalid("need at least two envelope samples"));
    }
    if env.e.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(Error::invalid("envelope values must be positive and finite"));
    }
    if env.r.windows(2).any(|w| !(w[0] > 0.0 && w[0] < w[1])) {
        return Err(Error::invalid("envelope grid must be positive and strictly increasing"));
    }
    Ok(())
}

/// Mean squared log-space gap between the law and the envelope samples,
/// skipping the first grid point (it is pinned to the cheapest observed run
/// and carries no scaling information).
pub fn margin(params: &NslParams, env: &EnvelopeSamples) -> Result<f64> {
    check_samples(env)?;
    let k = env.intervals();
    let mut acc = 0.0;
    for j in 1..=k {
        let gap = params.log_eval(env.r[j]) - env.e[j].ln();
        acc += gap * gap;
    }
    let m = acc / k as f64;
    if !m.is_finite() {
        return Err(Error::NumericalFailure("non-finite margin".into()));
    }
    Ok(m)
}

/// Margin plus its gradient in the flattened parameter order. The width
/// gradient is zero wherever the floor is active (boundary included).
pub fn margin_and_grad(params: &NslParams, env: &EnvelopeSamples) -> Result<(f64, Vec<f64>)> {
    check_samples(env)?;
    let k = env.intervals();
    let nb = params.breaks.len();
    let has_alpha = params.log_alpha.is_some();
    let base = usize::from(has_alpha);
    let mut grad = vec![0.0; params.dim()];
    let mut acc = 0.0;
    let mut lqs = vec![0.0; nb];

    for j in 1..=k {
        let ln_r = env.r[j].ln();
        let mut lp = params.log_beta + params.delta0 * ln_r;
        for (i, b) in params.breaks.iter().enumerate() {
            let pe = phi_cap(b.phi);
            let lq = (ln_r - b.log_sigma) / pe;
            lqs[i] = lq;
            lp += b.delta * pe * softplus(lq);
        }
        let (log_l, to_alpha, to_power) = match params.log_alpha {
            None => (lp, 0.0, 1.0),
            Some(la) => {
                let s = sigmoid(la - lp);
                (logaddexp(la, lp), s, 1.0 - s)
            }
        };
        let w = 2.0 * (log_l - env.e[j].ln()) / k as f64;
        acc += (log_l - env.e[j].ln()).powi(2);
        if has_alpha {
            grad[0] += w * to_alpha;
        }
        let scale = w * to_power;
        grad[base] += scale;
        grad[base + 1] += scale * ln_r;
        for (i, b) in params.breaks.iter().enumerate() {
            let pe = phi_cap(b.phi);
            let (sp, sg) = (softplus(lqs[i]), sigmoid(lqs[i]));
            let at = base + 2 + 3 * i;
            grad[at] += scale * b.delta * (-sg);
            if b.phi > PHI_FLOOR {
                grad[at + 1] += scale * b.delta * (sp - sg * lqs[i]);
            }
            grad[at + 2] += scale * pe * sp;
        }
    }
    let m = acc / k as f64;
    if !m.is_finite() || grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::NumericalFailure("non-finite margin or gradient".into()));
    }
    Ok((m, grad))
}

/// Segmented least-squares initialization: the log-log samples split into
/// `slopes.len()` contiguous segments that share their boundary points.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseInit {
    /// Grid indices of the interior boundaries, ascending.
    pub boundary_index: Vec<usize>,
    /// `ln r` at those boundaries.
    pub break_log_r: Vec<f64>,
    /// Per-segment least-squares slope, left to right.
    pub slopes: Vec<f64>,
    /// Per-segment least-squares intercept.
    pub intercepts: Vec<f64>,
}

struct SegmentedLs {
    sx: Vec<f64>,
    sy: Vec<f64>,
    sxx: Vec<f64>,
    sxy: Vec<f64>,
    syy: Vec<f64>,
}

impl SegmentedLs {
    fn new(x: &[f64], y: &[f64]) -> SegmentedLs {
        let n = x.len();
        let mut s = SegmentedLs {
            sx: vec![0.0; n + 1],
            sy: vec![0.0; n + 1],
            sxx: vec![0.0; n + 1],
            sxy: vec![0.0; n + 1],
            syy: vec![0.0; n + 1],
        };
        for i in 0..n {
            s.sx[i + 1] = s.sx[i] + x[i];
            s.sy[i + 1] = s.sy[i] + y[i];
            s.sxx[i + 1] = s.sxx[i] + x[i] * x[i];
            s.sxy[i + 1] = s.sxy[i] + x[i] * y[i];
            s.syy[i + 1] = s.syy[i] + y[i] * y[i];
        }
        s
    }

    /// Least-squares line over points `i..=j`: returns (sse, slope,
    /// intercept).
    fn fit(&self, i: usize, j: usize) -> (f64, f64, f64) {
        let n = (j - i + 1) as f64;
        let sx = self.sx[j + 1] - self.sx[i];
        let sy = self.sy[j + 1] - self.sy[i];
        let sxx = self.sxx[j + 1] - self.sxx[i];
        let sxy = self.sxy[j + 1] - self.sxy[i];
        let syy = self.syy[j + 1] - self.syy[i];
        let det = n * sxx - sx * sx;
        let slope = (n * sxy - sx * sy) / det;
        let intercept = (sy - slope * sx) / n;
        let sse = (syy - intercept * sy - slope * sxy).max(0.0);
        (sse, slope, intercept)
    }
}

/// Exact segmented least squares on the log-log envelope with `breaks + 1`
/// segments. Ties in the dynamic program resolve to the leftmost boundary,
/// so the result is deterministic.
pub fn auto_init(env: &EnvelopeSamples, breaks: usize) -> Result<PiecewiseInit> {
    check_samples(env)?;
    let points = env.r.len();
    let segments = breaks + 1;
    if points < 2 * segments {
        return Err(Error::InsufficientData(format!(
            "{points} grid points cannot support {segments} segments (need at least {})",
            2 * segments
        )));
    }
    let x: Vec<f64> = env.r.iter().map(|r| r.ln()).collect();
    let y: Vec<f64> = env.e.iter().map(|e| e.ln()).collect();
    let ls = SegmentedLs::new(&x, &y);
    let last = points - 1;

    // best[s][j]: minimal cost covering points 0..=j with s segments, the
    // segment boundaries (shared points) included in both neighbors.
    let inf = f64::INFINITY;
    let mut best = vec![vec![inf; points]; segments + 1];
    let mut from = vec![vec![usize::MAX; points]; segments + 1];
    for j in 1..points {
        best[1][j] = ls.fit(0, j).0;
    }
    for s in 2..=segments {
        for j in s..points {
            let mut bv = inf;
            let mut bi = usize::MAX;
            for i in (s - 1)..j {
                let c = best[s - 1][i] + ls.fit(i, j).0;
                if c < bv {
                    bv = c;
                    bi = i;
                }
            }
            best[s][j] = bv;
            from[s][j] = bi;
        }
    }

    let mut bounds = vec![last];
    let mut s = segments;
    let mut j = last;
    while s > 1 {
        j = from[s][j];
        bounds.push(j);
        s -= 1;
    }
    bounds.push(0);
    bounds.reverse();

    let mut slopes = Vec::with_capacity(segments);
    let mut intercepts = Vec::with_capacity(segments);
    for w in bounds.windows(2) {
        let (_, slope, intercept) = ls.fit(w[0], w[1]);
        slopes.push(slope);
        intercepts.push(intercept);
    }
    let interior = &bounds[1..segments];
    Ok(PiecewiseInit {
        boundary_index: interior.to_vec(),
        break_log_r: interior.iter().map(|&i| x[i]).collect(),
        slopes,
        intercepts,
    })
}

/// Convert a piecewise-linear initialization into law parameters: base
/// slope and intercept from the first segment, one break per boundary with
/// the slope increment, width at the floor. With a plateau, the floor
/// starts at half the final envelope value.
pub fn init_to_params(init: &PiecewiseInit, with_plateau: bool, env: &EnvelopeSamples) -> NslParams {
    let breaks = init
        .break_log_r
        .iter()
        .zip(init.slopes.windows(2))
        .map(|(&log_r, s)| BreakParams { log_sigma: log_r, phi: PHI_FLOOR, delta: s[1] - s[0] })
        .collect();
    NslParams {
        log_alpha: with_plateau.then(|| (0.5 * env.e[env.e.len() - 1]).ln()),
        log_beta: init.intercepts[0],
        delta0: init.slopes[0],
        breaks,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FitOptions {
    pub iterations: usize,
    pub lr: f64,
    pub with_plateau: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions { iterations: 5000, lr: 0.02, with_plateau: false }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FitResult {
    pub params: NslParams,
    pub margin: f64,
    pub iterations: usize,
    pub init: PiecewiseInit,
}

/// Fit a law with the given break count. Keeps the best parameters seen at
/// any iteration, so a late wander cannot spoil the answer.
pub fn fit_nsl(
    env: &EnvelopeSamples,
    breaks: usize,
    init: Option<PiecewiseInit>,
    opts: &FitOptions,
) -> Result<FitResult> {
    check_samples(env)?;
    if opts.iterations == 0 || !(opts.lr > 0.0 && opts.lr.is_finite()) {
        return Err(Error::invalid("fit needs iterations >= 1 and a positive learning rate"));
    }
    let init = match init {
        Some(i) => {
            if i.slopes.len() != breaks + 1
                || i.intercepts.len() != i.slopes.len()
                || i.break_log_r.len() != breaks
            {
                return Err(Error::invalid(format!(
                    "initialization has {} segments, law with {breaks} breaks needs {}",
                    i.slopes.len(),
                    breaks + 1
                )));
            }
            i
        }
        None => auto_init(env, breaks)?,
    };
    let mut params = init_to_params(&init, opts.with_plateau, env);
    let mut v = params.flatten();
    let mut opt = Adam::new(v.len(), opts.lr);

    let mut best_v = v.clone();
    let mut best_m = f64::INFINITY;
    for done in 0..opts.iterations {
        let (m, grad) = match margin_and_grad(&params, env) {
            Ok(pair) => pair,
            Err(Error::NumericalFailure(_)) => {
                params.unflatten(&best_v);
                return Err(Error::FitDiverged {
                    iterations: done,
                    best_margin: best_m,
                    best_formula: formula_string(&params, 'r'),
                });
            }
            Err(e) => return Err(e),
        };
        if m < best_m {
            best_m = m;
            best_v.copy_from_slice(&v);
        }
        opt.step(&mut v, &grad);
        params.unflatten(&v);
    }
    if let Ok(m) = margin(&params, env) {
        if m < best_m {
            best_m = m;
            best_v.copy_from_slice(&v);
        }
    }
    params.unflatten(&best_v);
    Ok(FitResult { params, margin: best_m, iterations: opts.iterations, init })
}

/// Shortest-round-trip decimal form of a float (Rust's default `Display`).
fn num(x: f64) -> String {
    format!("{x}")
}

/// Printable form of a law, e.g.
/// `0.74*c^-0.039*[1 + (c/1200000)^(1/0.2)]^(-1.1*0.2)`.
/// The printed width is the effective (floored) one.
pub fn formula_string(params: &NslParams, var: char) -> String {
    let mut s = String::new();
    if params.log_alpha.is_some() {
        s.push_str(&num(params.alpha()));
        s.push_str(" + ");
    }
    s.push_str(&format!("{}*{var}^{}", num(params.beta()), num(params.delta0)));
    for b in &params.breaks {
        let pe = phi_cap(b.phi);
        s.push_str(&format!(
            "*[1 + ({var}/{})^(1/{})]^({}*{})",
            num(b.log_sigma.exp()),
            num(pe),
            num(b.delta),
            num(pe)
        ));
    }
    s
}

struct Cursor<'a> {
    s: &'a [u8],
    at: usize,
}

impl<'a> Cursor<'a> {
    fn skip_ws(&mut self) {
        while self.at < self.s.len() && self.s[self.at].is_ascii_whitespace() {
            self.at += 1;
        }
    }

    fn expect(&mut self, lit: &str) -> Result<()> {
        self.skip_ws();
        if self.s[self.at..].starts_with(lit.as_bytes()) {
            self.at += lit.len();
            Ok(())
        } else {
            Err(Error::invalid(format!("expected {lit:?} at byte {} of formula", self.at)))
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.s.get(self.at).copied()
    }

    fn number(&mut self) -> Result<f64> {
        self.skip_ws();
        let start = self.at;
        if self.peek() == Some(b'-') || self.peek() == Some(b'+') {
            self.at += 1;
        }
        let mut seen_e = false;
        while self.at < self.s.len() {
            let c = self.s[self.at];
            let ok = c.is_ascii_digit()
                || c == b'.'
                || c == b'e'
                || c == b'E'
                || (seen_e && (c == b'-' || c == b'+') && matches!(self.s[self.at - 1], b'e' | b'E'));
            if c == b'e' || c == b'E' {
                seen_e = true;
            }
            if !ok {
                break;
            }
            self.at += 1;
        }
        let text = std::str::from_utf8(&self.s[start..self.at]).unwrap();
        text.parse::<f64>()
            .map_err(|_| Error::invalid(format!("bad number {text:?} at byte {start} of formula")))
    }

    fn var(&mut self) -> Result<char> {
        self.skip_ws();
        match self.s.get(self.at) {
            Some(c) if c.is_ascii_alphabetic() => {
                self.at += 1;
                Ok(*c as char)
            }
            _ => Err(Error::invalid(format!("expected variable at byte {} of formula", self.at))),
        }
    }

    fn done(&mut self) -> bool {
        self.skip_ws();
        self.at == self.s.len()
    }
}

/// Parse a formula produced by [`formula_string`] back into parameters
/// (break widths come back as the effective ones). Returns the variable
/// letter alongside.
pub fn parse_formula(text: &str) -> Result<(NslParams, char)> {
    let mut c = Cursor { s: text.as_bytes(), at: 0 };
    let first = c.number()?;
    let (alpha, beta) = if c.peek() == Some(b'+') {
        c.expect("+")?;
        (Some(first), c.number()?)
    } else {
        (None, first)
    };
    if !(beta > 0.0) || alpha.is_some_and(|a| !(a > 0.0)) {
        return Err(Error::invalid("formula needs positive floor and prefactor"));
    }
    c.expect("*")?;
    let var = c.var()?;
    c.expect("^")?;
    let delta0 = c.number()?;
    let mut breaks = Vec::new();
    while c.peek() == Some(b'*') {
        c.expect("*")?;
        c.expect("[1")?;
        c.expect("+")?;
        c.expect("(")?;
        let v2 = c.var()?;
        if v2 != var {
            return Err(Error::invalid(format!("mixed variables {var:?} and {v2:?} in formula")));
        }
        c.expect("/")?;
        let sigma = c.number()?;
        c.expect(")")?;
        c.expect("^")?;
        c.expect("(1")?;
        c.expect("/")?;
        let phi = c.number()?;
        c.expect(")")?;
        c.expect("]")?;
        c.expect("^")?;
        c.expect("(")?;
        let delta = c.number()?;
        c.expect("*")?;
        let phi2 = c.number()?;
        c.expect(")")?;
        if phi != phi2 {
            return Err(Error::invalid("break width differs between base and exponent"));
        }
        if !(sigma > 0.0 && phi > 0.0) {
            return Err(Error::invalid("break location and width must be positive"));
        }
        breaks.push(BreakParams { log_sigma: sigma.ln(), phi, delta });
    }
    if !c.done() {
        return Err(Error::invalid(format!("trailing input at byte {} of formula", c.at)));
    }
    Ok((
        NslParams { log_alpha: alpha.map(f64::ln), log_beta: beta.ln(), delta0, breaks },
        var,
    ))
}
