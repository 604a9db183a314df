//! Distance sweeps, reach and crossover extraction, AES key-renewal capacity,
//! network-segment applicability and detection-efficiency calibration.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frontend::Architecture;
use crate::keyrate::{secure_key_rate, KeyrateInput};

/// Per-architecture key-rate template. Excess noise is referred to the
/// receiver input and held constant over distance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchTemplate {
    pub symbol_rate_baud: f64,
    pub xi_snu: f64,
    pub xi_trusted_snu: f64,
    pub hybrid_loss_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioPair {
    pub heterodyne: ArchTemplate,
    pub intradyne: ArchTemplate,
    pub alpha_db_per_km: f64,
    pub trusted: bool,
    pub eta_det: f64,
    pub v_mod_snu: f64,
    pub beta_rec: f64,
}

/// Heterodyne electronic-noise share (ξ − ξ_T) applied to the intradyne
/// receiver, whose trusted excess noise is not measured separately.
pub const ELECTRONIC_SHARE_SNU: f64 = 0.0182 - 0.0105;

impl Default for ScenarioPair {
    fn default() -> Self {
        Self {
            heterodyne: ArchTemplate {
                symbol_rate_baud: 100e6,
                xi_snu: 0.0182,
                xi_trusted_snu: 0.0105,
                hybrid_loss_db: 0.0,
            },
            intradyne: ArchTemplate {
                symbol_rate_baud: 250e6,
                xi_snu: 0.0153,
                xi_trusted_snu: 0.0153 - ELECTRONIC_SHARE_SNU,
                hybrid_loss_db: 3.0,
            },
            alpha_db_per_km: 0.2,
            trusted: false,
            eta_det: 0.4,
            v_mod_snu: 8.0,
            beta_rec: 0.97,
        }
    }
}

impl ScenarioPair {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha_db_per_km >= 0.0 && self.alpha_db_per_km.is_finite()) {
            return Err(Error::Config("planner.alpha_db_per_km must be ≥ 0".into()));
        }
        if !(self.eta_det > 0.0 && self.eta_det <= 1.0) {
            return Err(Error::Config("planner.eta_det must lie in (0, 1]".into()));
        }
        for (name, t) in [("heterodyne", &self.heterodyne), ("intradyne", &self.intradyne)] {
            if !(t.xi_trusted_snu <= t.xi_snu) {
                return Err(Error::Config(format!("planner.{name}: xi_trusted_snu exceeds xi_snu")));
            }
            if !(t.xi_trusted_snu >= 0.0 && t.symbol_rate_baud > 0.0 && t.hybrid_loss_db >= 0.0) {
                return Err(Error::Config(format!("planner.{name}: invalid template values")));
            }
        }
        Ok(())
    }

    pub fn template(&self, arch: Architecture) -> &ArchTemplate {
        match arch {
            Architecture::Heterodyne => &self.heterodyne,
            Architecture::Intradyne => &self.intradyne,
        }
    }

    /// Efficiency between the receiver input and the photodiodes.
    pub fn effective_eta(&self, arch: Architecture) -> f64 {
        self.eta_det * 10f64.powf(-self.template(arch).hybrid_loss_db / 10.0)
    }

    /// Key-rate input at channel transmittance `t`.
    pub fn keyrate_input(&self, arch: Architecture, t: f64) -> KeyrateInput {
        let tpl = self.template(arch);
        let eta = self.effective_eta(arch);
        let refer = |xi: f64| if t > 0.0 { xi / t } else { 0.0 };
        let (xi_ch, v_el) = if self.trusted {
            (refer(tpl.xi_trusted_snu), eta * (tpl.xi_snu - tpl.xi_trusted_snu) / 2.0)
        } else {
            (refer(tpl.xi_snu), 0.0)
        };
        KeyrateInput {
            v_mod_snu: self.v_mod_snu,
            t_channel: t,
            xi_channel_snu: xi_ch,
            eta_det: eta,
            v_el_snu: v_el,
            beta_rec: self.beta_rec,
            trusted: self.trusted,
            symbol_rate_baud: tpl.symbol_rate_baud,
        }
    }

    pub fn skr_at(&self, arch: Architecture, distance_km: f64) -> Result<f64> {
        let t = 10f64.powf(-self.alpha_db_per_km * distance_km / 10.0);
        secure_key_rate(&self.keyrate_input(arch, t))
            .map(|r| r.skr_bps)
            .map_err(|e| Error::InvalidArgument(format!("{arch} at {distance_km} km: {e}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SkrCurve {
    pub distance_km: Vec<f64>,
    pub heterodyne_bps: Vec<f64>,
    pub intradyne_bps: Vec<f64>,
    pub trusted: bool,
}

impl SkrCurve {
    pub fn rates(&self, arch: Architecture) -> &[f64] {
        match arch {
            Architecture::Heterodyne => &self.heterodyne_bps,
            Architecture::Intradyne => &self.intradyne_bps,
        }
    }
}

/// Regular grid from `start` to `stop` inclusive.
pub fn distance_grid(start_km: f64, stop_km: f64, step_km: f64) -> Result<Vec<f64>> {
    if !(step_km > 0.0 && stop_km >= start_km && start_km >= 0.0) {
        return Err(Error::InvalidArgument(
            "grid needs 0 ≤ start ≤ stop and step > 0".into(),
        ));
    }
    let n = ((stop_km - start_km) / step_km + 1e-9).floor() as usize + 1;
    Ok((0..n).map(|i| start_km + i as f64 * step_km).collect())
}

pub fn sweep(pair: &ScenarioPair, distances_km: &[f64]) -> Result<SkrCurve> {
    pair.validate()?;
    if distances_km.is_empty() {
        return Err(Error::InvalidArgument("distance grid is empty".into()));
    }
    if distances_km.windows(2).any(|w| w[1] <= w[0]) || distances_km[0] < 0.0 {
        return Err(Error::InvalidArgument(
            "distances must be non-negative and strictly increasing".into(),
        ));
    }
    let mut het = Vec::with_capacity(distances_km.len());
    let mut int = Vec::with_capacity(distances_km.len());
    for &d in distances_km {
        het.push(pair.skr_at(Architecture::Heterodyne, d)?);
        int.push(pair.skr_at(Architecture::Intradyne, d)?);
    }
    Ok(SkrCurve {
        distance_km: distances_km.to_vec(),
        heterodyne_bps: het,
        intradyne_bps: int,
        trusted: pair.trusted,
    })
}

/// Distance at which a rate target is met, or a marker that it never is.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Reach {
    Reached { km: f64 },
    NotReached,
}

impl Reach {
    pub fn km(&self) -> Option<f64> {
        match self {
            Reach::Reached { km } => Some(*km),
            Reach::NotReached => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ReachPair {
    pub target_bps: f64,
    pub heterodyne: Reach,
    pub intradyne: Reach,
}

fn reach_one(d: &[f64], r: &[f64], target: f64) -> Reach {
    if r.is_empty() || r[0] < target {
        return Reach::NotReached;
    }
    for i in 0..r.len() {
        if r[i] == target && (i + 1 == r.len() || r[i + 1] < target) {
            return Reach::Reached { km: d[i] };
        }
        if i + 1 < r.len() && r[i] >= target && r[i + 1] < target {
            let (x0, x1) = (d[i], d[i + 1]);
            let frac = if r[i + 1] > 0.0 {
                (r[i].ln() - target.ln()) / (r[i].ln() - r[i + 1].ln())
            } else {
                (r[i] - target) / r[i]
            };
            return Reach::Reached {
                km: x0 + frac * (x1 - x0),
            };
        }
    }
    Reach::NotReached
}

pub fn reach_at_rate(curve: &SkrCurve, target_bps: f64) -> Result<ReachPair> {
    if !(target_bps > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "target rate must be positive, got {target_bps}"
        )));
    }
    Ok(ReachPair {
        target_bps,
        heterodyne: reach_one(&curve.distance_km, &curve.heterodyne_bps, target_bps),
        intradyne: reach_one(&curve.distance_km, &curve.intradyne_bps, target_bps),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Crossover {
    /// First distance where heterodyne SKR ≥ intradyne SKR.
    pub km: Option<f64>,
    /// Both curves identical over the grid.
    pub degenerate: bool,
    /// 10·log10(intradyne/heterodyne) per grid point; NaN where undefined.
    pub ratio_db: Vec<f64>,
}

pub fn find_crossover(curve: &SkrCurve) -> Crossover {
    let (h, i, d) = (&curve.heterodyne_bps, &curve.intradyne_bps, &curve.distance_km);
    let ratio_db: Vec<f64> = h
        .iter()
        .zip(i)
        .map(|(&h, &i)| {
            if h > 0.0 && i > 0.0 {
                10.0 * (i / h).log10()
            } else {
                f64::NAN
            }
        })
        .collect();
    let degenerate = h.iter().zip(i).all(|(a, b)| a == b);
    if degenerate {
        return Crossover {
            km: d.first().copied(),
            degenerate,
            ratio_db,
        };
    }
    for k in 0..d.len() {
        if h[k] == 0.0 && i[k] == 0.0 {
            break;
        }
        if h[k] >= i[k] {
            let km = if k > 0 && ratio_db[k - 1].is_finite() && ratio_db[k].is_finite() {
                let (r0, r1) = (ratio_db[k - 1], ratio_db[k]);
                d[k - 1] + r0 / (r0 - r1) * (d[k] - d[k - 1])
            } else {
                d[k]
            };
            return Crossover {
                km: Some(km),
                degenerate,
                ratio_db,
            };
        }
    }
    Crossover {
        km: None,
        degenerate,
        ratio_db,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AesCapacity {
    pub keys_per_s: f64,
    pub secured_bps: f64,
}

pub const AES_KEY_BITS: f64 = 256.0;
pub const AES_BYTES_PER_KEY: f64 = 64e9;

pub fn aes_capacity(skr_bps: f64, key_bits: f64, bytes_per_key_limit: f64) -> Result<AesCapacity> {
    if !(skr_bps >= 0.0) || !(key_bits > 0.0) || !(bytes_per_key_limit >= 0.0) {
        return Err(Error::InvalidArgument(
            "AES capacity needs skr ≥ 0 and key size > 0".into(),
        ));
    }
    let keys = skr_bps / key_bits;
    Ok(AesCapacity {
        keys_per_s: keys,
        secured_bps: keys * bytes_per_key_limit * 8.0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TrustModel {
    Untrusted,
    Trusted,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Segment {
    pub label: &'static str,
    pub min_km: f64,
    pub max_km: f64,
    pub trust: TrustModel,
}

pub const SEGMENTS: [Segment; 4] = [
    Segment {
        label: "intra-datacenter",
        min_km: 0.0,
        max_km: 10.0,
        trust: TrustModel::Untrusted,
    },
    Segment {
        label: "fronthaul",
        min_km: 5.0,
        max_km: 20.0,
        trust: TrustModel::Untrusted,
    },
    Segment {
        label: "campus",
        min_km: 1.0,
        max_km: 5.0,
        trust: TrustModel::Trusted,
    },
    Segment {
        label: "metro-dci",
        min_km: 20.0,
        max_km: 50.0,
        trust: TrustModel::Trusted,
    },
];

pub fn classify_segments(distance_km: f64) -> Result<Vec<Segment>> {
    if !(distance_km >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "distance must be ≥ 0, got {distance_km}"
        )));
    }
    Ok(SEGMENTS
        .iter()
        .filter(|s| distance_km >= s.min_km && distance_km <= s.max_km)
        .copied()
        .collect())
}

/// A reach point the calibration should reproduce.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReachTarget {
    pub architecture: Architecture,
    pub trusted: bool,
    pub rate_bps: f64,
    pub distance_km: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TargetResidual {
    pub target: ReachTarget,
    pub model_km: Option<f64>,
    pub relative_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EfficiencyFit {
    pub eta_det: f64,
    pub rms_relative_error: f64,
    pub max_relative_error: f64,
    pub at_boundary: bool,
    pub residuals: Vec<TargetResidual>,
}

impl std::fmt::Display for EfficiencyFit {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "eta_det = {:.4}, rms error {:.1} %, max error {:.1} %",
            self.eta_det,
            100.0 * self.rms_relative_error,
            100.0 * self.max_relative_error
        )?;
        for r in &self.residuals {
            let model = r.model_km.map_or("not reached".to_string(), |k| format!("{k:.2} km"));
            write!(
                f,
                "; {} {} {} b/s: target {:.1} km, model {model}",
                r.target.architecture,
                if r.target.trusted { "trusted" } else { "untrusted" },
                r.target.rate_bps,
                r.target.distance_km
            )?;
        }
        Ok(())
    }
}

/// Continuous reach by bisection on distance (SKR is monotone in distance).
pub fn reach_continuous(pair: &ScenarioPair, arch: Architecture, rate_bps: f64) -> Result<Option<f64>> {
    if pair.skr_at(arch, 0.0)? < rate_bps {
        return Ok(None);
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    while pair.skr_at(arch, hi)? >= rate_bps {
        lo = hi;
        hi *= 2.0;
        if hi > 1e4 {
            return Ok(None);
        }
    }
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if pair.skr_at(arch, mid)? >= rate_bps {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-9 {
            break;
        }
    }
    Ok(Some(0.5 * (lo + hi)))
}

fn fit_residuals(targets: &[ReachTarget], pair: &ScenarioPair, eta: f64) -> Result<(f64, Vec<TargetResidual>)> {
    let mut cost = 0.0;
    let mut out = Vec::with_capacity(targets.len());
    for t in targets {
        let p = ScenarioPair {
            eta_det: eta,
            trusted: t.trusted,
            ..pair.clone()
        };
        let model = reach_continuous(&p, t.architecture, t.rate_bps)?;
        let err = model.map_or(1.0, |k| (k - t.distance_km) / t.distance_km);
        cost += err * err;
        out.push(TargetResidual {
            target: *t,
            model_km: model,
            relative_error: err,
        });
    }
    Ok((cost, out))
}

/// Golden-section search for the detection efficiency that best reproduces
/// the reach targets. A minimum on the edge of the search range is reported
/// as a calibration failure carrying the residuals.
pub fn calibrate_efficiency(targets: &[ReachTarget], pair: &ScenarioPair, range: (f64, f64)) -> Result<EfficiencyFit> {
    if targets.is_empty() {
        return Err(Error::InvalidArgument("no calibration targets".into()));
    }
    let (lo, hi) = range;
    if !(lo > 0.0 && hi <= 1.0 && lo < hi) {
        return Err(Error::InvalidArgument(format!(
            "search range ({lo}, {hi}) must lie in (0, 1]"
        )));
    }
    let fit = golden_fit(targets, pair, lo, hi)?;
    if fit.at_boundary {
        return Err(Error::CalibrationFailure(format!(
            "no interior minimum in [{lo}, {hi}]: {fit}"
        )));
    }
    Ok(fit)
}

/// Golden-section fit without the interior-minimum requirement.
pub fn golden_fit(targets: &[ReachTarget], pair: &ScenarioPair, lo: f64, hi: f64) -> Result<EfficiencyFit> {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let cost = |eta: f64| fit_residuals(targets, pair, eta).map(|c| c.0);
    let (mut a, mut b) = (lo, hi);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (cost(c)?, cost(d)?);
    while b - a > 1e-5 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = cost(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = cost(d)?;
        }
    }
    let eta = 0.5 * (a + b);
    let (c_best, residuals) = fit_residuals(targets, pair, eta)?;
    let edge_tol = 1e-3 * (hi - lo);
    let at_boundary =
        (eta - lo < edge_tol && cost(lo)? <= c_best + 1e-15) || (hi - eta < edge_tol && cost(hi)? <= c_best + 1e-15);
    let n = residuals.len() as f64;
    Ok(EfficiencyFit {
        eta_det: eta,
        rms_relative_error: (c_best / n).sqrt(),
        max_relative_error: residuals.iter().map(|r| r.relative_error.abs()).fold(0.0, f64::max),
        at_boundary,
        residuals,
    })
}

/// The four 1 Mb/s reach points reported for the experimental link.
pub fn paper_reach_targets() -> Vec<ReachTarget> {
    let t = |architecture, trusted, distance_km| ReachTarget {
        architecture,
        trusted,
        rate_bps: 1e6,
        distance_km,
    };
    vec![
        t(Architecture::Heterodyne, false, 13.2),
        t(Architecture::Intradyne, false, 12.1),
        t(Architecture::Heterodyne, true, 37.4),
        t(Architecture::Intradyne, true, 17.8),
    ]
}
