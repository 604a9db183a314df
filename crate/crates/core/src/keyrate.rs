//! Asymptotic Gaussian-modulation key rates for dual-quadrature
//! (heterodyne-type) detection with reverse reconciliation.
//!
//! Quantities are in SNU with vacuum variance 1 and `V = V_mod + 1`.
//!
//! * Untrusted receiver: detector loss and electronic noise are folded into
//!   the channel, `T' = η·T` and `ξ' = ξ + 2·v_el/(η·T)`.
//! * Trusted receiver: Eve purifies only the fibre channel. The detector is a
//!   beamsplitter of transmittance η whose second input is one arm of an EPR
//!   pair of variance `v = 1 + 2·v_el/(1 − η)`.
//!
//! Bob's heterodyne is accounted for by conditioning with `(B + I)⁻¹`.

use nalgebra::{Matrix3, Matrix4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KeyrateInput {
    pub v_mod_snu: f64,
    pub t_channel: f64,
    pub xi_channel_snu: f64,
    pub eta_det: f64,
    pub v_el_snu: f64,
    pub beta_rec: f64,
    pub trusted: bool,
    pub symbol_rate_baud: f64,
}

impl KeyrateInput {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::InvalidArgument(m));
        if !(self.v_mod_snu > 0.0 && self.v_mod_snu.is_finite()) {
            return fail(format!("v_mod_snu must be positive, got {}", self.v_mod_snu));
        }
        if !(0.0..=1.0).contains(&self.t_channel) {
            return fail(format!("t_channel must lie in [0, 1], got {}", self.t_channel));
        }
        if !(self.eta_det > 0.0 && self.eta_det <= 1.0) {
            return fail(format!("eta_det must lie in (0, 1], got {}", self.eta_det));
        }
        if !(0.0..=1.0).contains(&self.beta_rec) {
            return fail(format!("beta_rec must lie in [0, 1], got {}", self.beta_rec));
        }
        if !(self.xi_channel_snu.is_finite() && self.xi_channel_snu >= 0.0) {
            return fail(format!("xi_channel_snu must be ≥ 0, got {}", self.xi_channel_snu));
        }
        if !(self.v_el_snu.is_finite() && self.v_el_snu >= 0.0) {
            return fail(format!("v_el_snu must be ≥ 0, got {}", self.v_el_snu));
        }
        if !(self.symbol_rate_baud >= 0.0 && self.symbol_rate_baud.is_finite()) {
            return fail(format!("symbol_rate_baud must be ≥ 0, got {}", self.symbol_rate_baud));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KeyrateReport {
    pub i_ab_bits: f64,
    pub chi_be_bits: f64,
    pub key_fraction_bits: f64,
    pub skr_bps: f64,
}

/// Point in the link at which the two-mode covariance is taken.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CovStage {
    ChannelOutput,
    Detected,
}

/// Entropy kernel (x+1)·log2(x+1) − x·log2(x).
pub fn g_func(x: f64) -> Result<f64> {
    if x.is_nan() || x < -1e-12 {
        return Err(Error::NumericDomain(format!("g(x) needs x ≥ 0, got {x}")));
    }
    if x <= 0.0 {
        return Ok(0.0);
    }
    Ok((x + 1.0) * (x + 1.0).log2() - x * x.log2())
}

/// Von Neumann entropy of a mode with symplectic eigenvalue ν.
fn mode_entropy(nu: f64) -> Result<f64> {
    g_func((nu - 1.0) / 2.0)
}

pub fn covariance_abc(inp: &KeyrateInput, stage: CovStage) -> Result<(f64, f64, f64)> {
    inp.validate()?;
    let v = inp.v_mod_snu + 1.0;
    let t = match stage {
        CovStage::ChannelOutput => inp.t_channel,
        CovStage::Detected => inp.eta_det * inp.t_channel,
    };
    let mut b = t * (v + inp.xi_channel_snu) + 1.0 - t;
    if stage == CovStage::Detected {
        b += 2.0 * inp.v_el_snu;
    }
    let c = (t * (v * v - 1.0)).sqrt();
    if b < 1.0 - 1e-12 {
        return Err(Error::Unphysical(format!("b = {b} < 1")));
    }
    Ok((v, b, c))
}

/// Symplectic eigenvalues (ν₊, ν₋) of the two-mode state with parameters a, b, c.
pub fn symplectic_eigenvalues(a: f64, b: f64, c: f64) -> Result<(f64, f64)> {
    let delta = a * a + b * b - 2.0 * c * c;
    let d = a * b - c * c;
    let disc = delta * delta - 4.0 * d * d;
    let tol = 1e-9 * delta * delta.max(1.0);
    if disc < -tol {
        return Err(Error::NumericDomain(format!(
            "negative discriminant {disc} for a = {a}, b = {b}, c = {c}"
        )));
    }
    let root = disc.max(0.0).sqrt();
    let hi = ((delta + root) / 2.0).max(0.0).sqrt();
    let lo = ((delta - root) / 2.0).max(0.0).sqrt();
    Ok((hi, lo))
}

/// Mutual information per symbol between Alice and Bob's dual-quadrature
/// outcome.
pub fn mutual_information(inp: &KeyrateInput) -> Result<f64> {
    let (a, b, c) = covariance_abc(inp, CovStage::Detected)?;
    let cond = b + 1.0 - c * c / (a + 1.0);
    Ok(((b + 1.0) / cond).log2())
}

/// Holevo information between Eve and Bob's outcome.
pub fn holevo_bound(inp: &KeyrateInput) -> Result<f64> {
    if inp.trusted {
        holevo_trusted(inp)
    } else {
        holevo_untrusted(inp)
    }
}

fn holevo_untrusted(inp: &KeyrateInput) -> Result<f64> {
    let (a, b, c) = covariance_abc(inp, CovStage::Detected)?;
    let (n1, n2) = symplectic_eigenvalues(a, b, c)?;
    // Schur complement of the per-quadrature blocks [[a, ±c], [±c, b]].
    let n3 = a - c * c / (b + 1.0);
    if n3 < 1.0 - 1e-9 {
        return Err(Error::NumericDomain(format!(
            "conditional eigenvalue {n3} < 1 for {inp:?}"
        )));
    }
    Ok(mode_entropy(n1)? + mode_entropy(n2)? - mode_entropy(n3)?)
}

/// Symplectic spectrum of a state with uncorrelated x and p blocks.
fn block_symplectic(x: &Matrix3<f64>, p: &Matrix3<f64>) -> Result<[f64; 3]> {
    let l = p
        .cholesky()
        .ok_or_else(|| Error::NumericDomain(format!("momentum block not positive definite: {p}")))?
        .l();
    let m = l.transpose() * x * l;
    let eig = m.symmetric_eigen().eigenvalues;
    let mut out = [0.0; 3];
    for (o, e) in out.iter_mut().zip(eig.iter()) {
        if *e < -1e-9 {
            return Err(Error::NumericDomain(format!(
                "negative eigenvalue {e} in conditional state"
            )));
        }
        *o = e.max(0.0).sqrt();
    }
    Ok(out)
}

fn holevo_trusted(inp: &KeyrateInput) -> Result<f64> {
    let (a, b, c) = covariance_abc(inp, CovStage::ChannelOutput)?;
    let eta = inp.eta_det;
    let anc = if eta < 1.0 {
        1.0 + 2.0 * inp.v_el_snu / (1.0 - eta)
    } else if inp.v_el_snu == 0.0 {
        1.0
    } else {
        return Err(Error::NumericDomain(
            "trusted model needs eta_det < 1 when v_el > 0".into(),
        ));
    };
    let w = (anc * anc - 1.0).sqrt();
    // Modes: A, B, F0 (detector ancilla port), G (its purification).
    let block = |sign: f64| {
        Matrix4::new(
            a,
            sign * c,
            0.0,
            0.0,
            sign * c,
            b,
            0.0,
            0.0,
            0.0,
            0.0,
            anc,
            sign * w,
            0.0,
            0.0,
            sign * w,
            anc,
        )
    };
    let (se, sr) = (eta.sqrt(), (1.0 - eta).sqrt());
    let bs = Matrix4::new(
        1.0, 0.0, 0.0, 0.0, 0.0, se, sr, 0.0, 0.0, -sr, se, 0.0, 0.0, 0.0, 0.0, 1.0,
    );
    let xs = bs * block(1.0) * bs.transpose();
    let ps = bs * block(-1.0) * bs.transpose();
    let idx = [0usize, 2, 3];
    let condition = |m: &Matrix4<f64>| {
        let denom = m[(1, 1)] + 1.0;
        Matrix3::from_fn(|i, j| m[(idx[i], idx[j])] - m[(idx[i], 1)] * m[(idx[j], 1)] / denom)
    };
    let nu_c = block_symplectic(&condition(&xs), &condition(&ps))?;
    let (n1, n2) = symplectic_eigenvalues(a, b, c)?;
    let mut chi = mode_entropy(n1)? + mode_entropy(n2)?;
    for nu in nu_c {
        chi -= mode_entropy(nu.max(1.0))?;
    }
    Ok(chi)
}

pub fn secure_key_rate(inp: &KeyrateInput) -> Result<KeyrateReport> {
    inp.validate()?;
    let i_ab = mutual_information(inp)?;
    let chi = holevo_bound(inp)?;
    let r = (inp.beta_rec * i_ab - chi).max(0.0);
    Ok(KeyrateReport {
        i_ab_bits: i_ab,
        chi_be_bits: chi,
        key_fraction_bits: r,
        skr_bps: r * inp.symbol_rate_baud,
    })
}
