//! Ground-truth satisfaction labels from time spent in under-performing sites.
//!
//! A user is dissatisfied when the time they spend in under-performing sites
//! reaches their personal tolerance `u_i * T`, with `u_i ~ N(mu, sigma^2)`
//! clamped into `(0, 1)`.

use rand::seq::index;
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mobility::VisitMatrix;

/// Tolerances are clamped into `[TOLERANCE_EPS, 1 - TOLERANCE_EPS]`.
pub const TOLERANCE_EPS: f64 = 1e-6;

/// Search bracket for sigma calibration.
pub const SIGMA_BRACKET: (f64, f64) = (1e-4, 0.5);

/// Tolerance redraws averaged per calibration probe.
pub const CALIBRATION_REDRAWS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UserProfileParams {
    pub mu: f64,
    pub sigma: f64,
    #[serde(default)]
    pub psi: f64,
}

impl UserProfileParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.mu > 0.0 && self.mu < 1.0) {
            return Err(Error::param("mu", format!("must lie in (0, 1), got {}", self.mu)));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::param("sigma", format!("must be positive, got {}", self.sigma)));
        }
        check_psi(self.psi)
    }
}

fn check_psi(psi: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&psi) {
        return Err(Error::param("psi", format!("must lie in [0, 1], got {psi}")));
    }
    Ok(())
}

/// Binary labels (`true` = dissatisfied) and the tolerances that produced them.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SatisfactionVector {
    pub labels: Vec<bool>,
    pub tolerances: Vec<f64>,
}

impl SatisfactionVector {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dissatisfied_count(&self) -> usize {
        self.labels.iter().filter(|l| **l).count()
    }

    pub fn dissatisfied_fraction(&self) -> f64 {
        if self.labels.is_empty() {
            0.0
        } else {
            self.dissatisfied_count() as f64 / self.labels.len() as f64
        }
    }
}

fn clamp_tolerance(u: f64) -> f64 {
    u.clamp(TOLERANCE_EPS, 1.0 - TOLERANCE_EPS)
}

pub fn draw_tolerances<R: Rng + ?Sized>(users: usize, mu: f64, sigma: f64, rng: &mut R) -> Result<Vec<f64>> {
    let normal = Normal::new(mu, sigma).map_err(|e| Error::param("sigma", format!("{e} (mu={mu}, sigma={sigma})")))?;
    Ok((0..users).map(|_| clamp_tolerance(normal.sample(rng))).collect())
}

/// Time each user spends in the given sites.
pub fn exposure_times(visits: &VisitMatrix, underperforming: &[usize]) -> Vec<f64> {
    visits
        .rows()
        .map(|row| underperforming.iter().map(|&j| row[j]).sum())
        .collect()
}

pub fn compute_satisfaction(
    visits: &VisitMatrix,
    underperforming: &[usize],
    tolerances: &[f64],
) -> Result<SatisfactionVector> {
    if tolerances.len() != visits.users() {
        return Err(Error::param(
            "tolerances",
            format!("expected {} tolerances, got {}", visits.users(), tolerances.len()),
        ));
    }
    if let Some(&j) = underperforming.iter().find(|&&j| j >= visits.sites()) {
        return Err(Error::param("underperforming", format!("site id {j} out of range")));
    }
    let horizon = visits.horizon();
    let labels = exposure_times(visits, underperforming)
        .iter()
        .zip(tolerances)
        .map(|(e, u)| *e >= u * horizon)
        .collect();
    Ok(SatisfactionVector {
        labels,
        tolerances: tolerances.to_vec(),
    })
}

/// Redraw the labels of a uniform `floor(psi * N)`-subset of users as fair coins.
pub fn apply_label_noise<R: Rng + ?Sized>(s: &SatisfactionVector, psi: f64, rng: &mut R) -> Result<SatisfactionVector> {
    check_psi(psi)?;
    let n = s.len();
    let noisy = ((psi * n as f64).floor() as usize).min(n);
    let mut out = s.clone();
    if noisy == 0 {
        return Ok(out);
    }
    let mut chosen = index::sample(rng, n, noisy).into_vec();
    chosen.sort_unstable();
    for i in chosen {
        out.labels[i] = rng.random_bool(0.5);
    }
    Ok(out)
}

/// Outcome of a sigma search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Calibration {
    pub sigma: f64,
    /// Dissatisfied fraction averaged over the calibration redraws.
    pub fraction: f64,
    pub probes: usize,
}

/// Sigma values scanned during calibration, log-spaced over the bracket.
const SIGMA_GRID: usize = 64;

/// Bisection steps used to sharpen the scan's first hit.
const REFINE_STEPS: usize = 30;

/// Dissatisfied fraction as a function of sigma, with the standard-normal
/// draws held fixed so the function is deterministic.
struct FractionProbe {
    exposure: Vec<f64>,
    z: Vec<f64>,
    mu: f64,
    horizon: f64,
    probes: usize,
}

impl FractionProbe {
    fn new<R: Rng + ?Sized>(
        visits: &VisitMatrix,
        underperforming: &[usize],
        mu: f64,
        target: (f64, f64),
        rng: &mut R,
    ) -> Result<Self> {
        let (lo, hi) = target;
        if !(0.0..=1.0).contains(&lo) || !(0.0..=1.0).contains(&hi) || lo >= hi {
            return Err(Error::param(
                "target",
                format!("need 0 <= lo < hi <= 1, got ({lo}, {hi})"),
            ));
        }
        if !(mu > 0.0 && mu < 1.0) {
            return Err(Error::param("mu", format!("must lie in (0, 1), got {mu}")));
        }
        let exposure = exposure_times(visits, underperforming);
        let z = (0..CALIBRATION_REDRAWS * exposure.len())
            .map(|_| StandardNormal.sample(rng))
            .collect();
        Ok(FractionProbe {
            exposure,
            z,
            mu,
            horizon: visits.horizon(),
            probes: 0,
        })
    }

    fn at(&mut self, sigma: f64) -> f64 {
        self.probes += 1;
        let n = self.exposure.len();
        if n == 0 {
            return 0.0;
        }
        let hits = self
            .z
            .chunks(n)
            .flat_map(|zs| zs.iter().zip(&self.exposure))
            .filter(|(z, e)| **e >= clamp_tolerance(self.mu + sigma * **z) * self.horizon)
            .count();
        hits as f64 / self.z.len() as f64
    }

    /// Grid point `step` of the log-spaced scan.
    fn grid(step: usize) -> f64 {
        let (a, b) = SIGMA_BRACKET;
        if step + 1 == SIGMA_GRID {
            return b;
        }
        a * (b / a).powf(step as f64 / (SIGMA_GRID - 1) as f64)
    }
}

/// Find the smallest sigma whose average dissatisfied fraction lands in
/// `target`.
///
/// The search holds `CALIBRATION_REDRAWS` standard-normal vectors fixed
/// and evaluates `u = clamp(mu + sigma * z)`, so the fraction is a
/// deterministic function of sigma. Sigma is scanned upward from the low
/// end of `SIGMA_BRACKET` on a log grid and the first hit is sharpened by
/// bisection against the preceding miss.
///
/// Interior target bounds are tightened by three binomial standard errors
/// of a single population draw, so fresh tolerances drawn at the returned
/// sigma still land in `target`. A bound at 0 or 1 needs no margin. When
/// the tightened interval is never reached the plain target is used.
pub fn calibrate_sigma<R: Rng + ?Sized>(
    visits: &VisitMatrix,
    underperforming: &[usize],
    mu: f64,
    target: (f64, f64),
    rng: &mut R,
) -> Result<Calibration> {
    let (lo, hi) = target;
    let mut probe = FractionProbe::new(visits, underperforming, mu, target, rng)?;
    let n = probe.exposure.len().max(1) as f64;
    let centre = 0.5 * (lo + hi);
    let margin = (3.0 * (centre * (1.0 - centre) / n).sqrt()).min(0.25 * (hi - lo));
    let inner = (
        if lo > 0.0 { lo + margin } else { lo },
        if hi < 1.0 { hi - margin } else { hi },
    );

    let mut scan = Vec::with_capacity(SIGMA_GRID);
    for step in 0..SIGMA_GRID {
        let sigma = FractionProbe::grid(step);
        let f = probe.at(sigma);
        scan.push((sigma, f));
        if inner.0 <= f && f <= inner.1 {
            break;
        }
    }
    for window in [inner, target] {
        let inside = |f: f64| window.0 <= f && f <= window.1;
        let Some(hit) = scan.iter().position(|&(_, f)| inside(f)) else {
            continue;
        };
        let (mut sigma, mut fraction) = scan[hit];
        if hit > 0 {
            let mut miss = scan[hit - 1].0;
            for _ in 0..REFINE_STEPS {
                let mid = 0.5 * (miss + sigma);
                let f = probe.at(mid);
                if inside(f) {
                    sigma = mid;
                    fraction = f;
                } else {
                    miss = mid;
                }
            }
        }
        return Ok(Calibration {
            sigma,
            fraction,
            probes: probe.probes,
        });
    }
    while scan.len() < SIGMA_GRID {
        let sigma = FractionProbe::grid(scan.len());
        scan.push((sigma, probe.at(sigma)));
    }
    let achieved_lo = scan.iter().map(|s| s.1).fold(f64::INFINITY, f64::min);
    let achieved_hi = scan.iter().map(|s| s.1).fold(f64::NEG_INFINITY, f64::max);
    Err(Error::InfeasibleCalibration {
        sigma_lo: SIGMA_BRACKET.0,
        sigma_hi: SIGMA_BRACKET.1,
        target_lo: lo,
        target_hi: hi,
        achieved_lo,
        achieved_hi,
    })
}

/// Fallback for targets that [`calibrate_sigma`] cannot reach: scan sigma
/// over the bracket with the same common random numbers and return the value
/// whose average fraction is closest to `target` (distance zero inside it).
/// Ties keep the smaller sigma.
pub fn nearest_sigma<R: Rng + ?Sized>(
    visits: &VisitMatrix,
    underperforming: &[usize],
    mu: f64,
    target: (f64, f64),
    rng: &mut R,
) -> Result<Calibration> {
    let (lo, hi) = target;
    let mut probe = FractionProbe::new(visits, underperforming, mu, target, rng)?;
    let mut best: Option<(f64, f64, f64)> = None;
    for step in 0..SIGMA_GRID {
        let sigma = FractionProbe::grid(step);
        let fraction = probe.at(sigma);
        let distance = (lo - fraction).max(fraction - hi).max(0.0);
        if best.is_none_or(|(d, _, _)| distance < d) {
            best = Some((distance, sigma, fraction));
        }
    }
    let (_, sigma, fraction) = best.expect("grid is non-empty");
    Ok(Calibration {
        sigma,
        fraction,
        probes: probe.probes,
    })
}
