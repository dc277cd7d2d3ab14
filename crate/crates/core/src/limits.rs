//! Limit variances of the normalized sums: the region integrals `G_inf` and
//! `G_dagger` of the limit profile, their squared integrals, extrapolation
//! of the boundary variance and the closed-form series constants.
//!
//! The profile `g_inf` of every supported model is homogeneous of degree
//! `-beta`, so integrals over a region seen from a point `x` reduce to an
//! angular integral of `g_inf(u)` times a closed-form radial integral over
//! the segments where the ray `x + s u` meets the region.

use std::cell::Cell;
use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coefficients::{CoefficientModel, ModelKind, Regime, SeparableSequence};
use crate::error::{invalid, Error, Result};
use crate::geometry::{Estimate, PrototypeKind, RegionPrototype, ShellRule};
use crate::quadrature::{integrate, integrate_breakpoints, QuadOptions};
use crate::special::{stream_seed, unit_ball_volume, unit_sphere_area, CompensatedSum};
use crate::theta::{default_window, theta_fft};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LimitMethod {
    Quadrature,
    MonteCarloIntegration,
    TruncatedSeries,
    Extrapolation,
}

/// A limiting variance with how it was obtained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitVariance {
    pub regime: Regime,
    pub value: f64,
    pub method: LimitMethod,
    pub error_estimate: f64,
    pub provenance: String,
}

/// Which region integral of the limit profile.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LimitFunction {
    /// `G_inf(x) = int_{R0} g_inf(y - x) dy`, for `beta < d`.
    Full,
    /// Integral over `R0` from outside the closed region and over the
    /// complement from inside, zero on the boundary; for `beta > d`.
    Dagger,
}

/// Part of space covered by a squared integral.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Part {
    All,
    Interior,
    Exterior,
}

const ANGLE_PIECES: usize = 16;
const MC_CHUNK: usize = 512;
/// Equal-volume radial strata of the inner ball.
const MC_SHELLS: usize = 8;
/// Two samples per stratum.
pub const MIN_MC_SAMPLES: usize = 2 * (MC_SHELLS + 1);
const EDGE: f64 = 1e-7;

/// True when the limit profile vanishes identically.
pub fn profile_vanishes(model: &CoefficientModel) -> bool {
    matches!(
        model.kind(),
        ModelKind::Delta | ModelKind::Table { .. } | ModelKind::SeparableNd { .. }
    )
}

struct Evaluator<'a> {
    model: &'a CoefficientModel,
    proto: &'a RegionPrototype,
    which: LimitFunction,
    d: usize,
    /// `d - beta`
    e: f64,
    opts: QuadOptions,
}

impl<'a> Evaluator<'a> {
    fn new(
        model: &'a CoefficientModel,
        proto: &'a RegionPrototype,
        which: LimitFunction,
        rel_tol: f64,
    ) -> Result<Self> {
        let d = model.dim();
        if proto.dim() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: proto.dim(),
            });
        }
        if d > 3 {
            return Err(Error::Unsupported(format!(
                "limit functions in dimension {d}"
            )));
        }
        let beta = model.beta();
        let df = d as f64;
        match which {
            LimitFunction::Full if !(beta < df) => {
                return Err(invalid("beta", format!("G_inf needs beta < d, got {beta}")));
            }
            LimitFunction::Dagger if !(beta > df) => {
                return Err(invalid(
                    "beta",
                    format!("G_dagger needs beta > d, got {beta}"),
                ));
            }
            _ => {}
        }
        Ok(Self {
            model,
            proto,
            which,
            d,
            e: df - beta,
            opts: QuadOptions {
                rel_tol,
                abs_tol: 1e-300,
                max_intervals: 4000,
            },
        })
    }

    /// `int_a^b s^{d-1-beta} ds` through its antiderivative.
    fn h(&self, s: f64) -> f64 {
        if s.is_infinite() {
            return 0.0;
        }
        s.powf(self.e) / self.e
    }

    fn radial_part(&self, x: &[f64], u: &[f64], inside: bool) -> f64 {
        let segs = self.proto.ray_segments(x, u);
        if inside && self.which == LimitFunction::Dagger {
            let mut acc = 0.0;
            for w in segs.windows(2) {
                acc += self.h(w[1].0) - self.h(w[0].1);
            }
            if let Some(last) = segs.last() {
                acc -= self.h(last.1);
            }
            acc
        } else {
            segs.iter().map(|&(a, b)| self.h(b) - self.h(a)).sum()
        }
    }

    fn angle_breaks(&self, x: &[f64], focus: Option<(f64, f64)>) -> Vec<f64> {
        let mut b: Vec<f64> = (0..=ANGLE_PIECES)
            .map(|k| 2.0 * PI * k as f64 / ANGLE_PIECES as f64)
            .collect();
        if let Some((angle, mut scale)) = focus {
            while scale < PI / 4.0 {
                b.push((angle - scale).rem_euclid(2.0 * PI));
                b.push((angle + scale).rem_euclid(2.0 * PI));
                scale *= 2.0;
            }
        }
        match self.proto.kind() {
            PrototypeKind::Cube => {
                for (cx, cy) in [(0.5, 0.5), (-0.5, 0.5), (-0.5, -0.5), (0.5, -0.5)] {
                    b.push((cy - x[1]).atan2(cx - x[0]).rem_euclid(2.0 * PI));
                }
            }
            PrototypeKind::Ball { radius } => {
                let r = x[0].hypot(x[1]);
                if r > *radius {
                    let c = (-x[1]).atan2(-x[0]);
                    let w = (radius / r).asin();
                    b.push((c - w).rem_euclid(2.0 * PI));
                    b.push((c + w).rem_euclid(2.0 * PI));
                }
            }
            _ => {}
        }
        sorted_breaks(b)
    }

    /// The limit function at `x`; `inside` selects the branch for points
    /// of the open region.  `focus` is an angle and width around which the
    /// angular integrand varies rapidly (points close to the boundary).
    fn eval(&self, x: &[f64], inside: bool, focus: Option<(f64, f64)>) -> Estimate {
        let f = |u: &[f64]| {
            let g = self.model.g_limit_unchecked(u, 1.0);
            if g == 0.0 {
                0.0
            } else {
                g * self.radial_part(x, u, inside)
            }
        };
        match self.d {
            1 => Estimate {
                value: f(&[1.0]) + f(&[-1.0]),
                error: 0.0,
            },
            2 => {
                let r = integrate_breakpoints(
                    |t| f(&[t.cos(), t.sin()]),
                    &self.angle_breaks(x, focus),
                    &self.opts,
                );
                Estimate {
                    value: r.value,
                    error: r.error,
                }
            }
            _ => {
                let err = Cell::new(0.0);
                let inner_breaks: Vec<f64> = (0..=8).map(|k| PI * k as f64 / 4.0).collect();
                let outer = integrate(
                    |z| {
                        let s = (1.0 - z * z).max(0.0).sqrt();
                        let r = integrate_breakpoints(
                            |t| f(&[s * t.cos(), s * t.sin(), z]),
                            &inner_breaks,
                            &self.opts,
                        );
                        err.set(err.get() + r.error);
                        r.value
                    },
                    -1.0,
                    1.0,
                    &self.opts,
                );
                Estimate {
                    value: outer.value,
                    error: outer.error + err.get() / outer.evaluations.max(1) as f64 * 2.0,
                }
            }
        }
    }
}

fn sorted_breaks(mut b: Vec<f64>) -> Vec<f64> {
    b.sort_by(f64::total_cmp);
    b.dedup_by(|a, c| (*a - *c).abs() < 1e-12);
    b
}

fn point_branch(proto: &RegionPrototype, x: &[f64]) -> Option<bool> {
    if proto.distance(x) == 0.0 {
        None
    } else {
        Some(proto.contains(x))
    }
}

fn check_point(model: &CoefficientModel, x: &[f64]) -> Result<()> {
    if x.len() != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            got: x.len(),
        });
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(invalid("x", "must be finite"));
    }
    Ok(())
}

/// `G_inf(x) = int_{R0} g_inf(y - x) dy` for `beta < d`.
pub fn g_infty_at(
    model: &CoefficientModel,
    proto: &RegionPrototype,
    x: &[f64],
) -> Result<Estimate> {
    check_point(model, x)?;
    let ev = Evaluator::new(model, proto, LimitFunction::Full, 1e-10)?;
    Ok(ev.eval(x, proto.contains(x), None))
}

/// `G_dagger(x)` for `beta > d`: the region integral from outside, the
/// complement integral from inside and zero on the boundary.
pub fn g_dagger_at(
    model: &CoefficientModel,
    proto: &RegionPrototype,
    x: &[f64],
) -> Result<Estimate> {
    check_point(model, x)?;
    let ev = Evaluator::new(model, proto, LimitFunction::Dagger, 1e-10)?;
    Ok(match point_branch(proto, x) {
        None => Estimate {
            value: 0.0,
            error: 0.0,
        },
        Some(inside) => ev.eval(x, inside, None),
    })
}

fn check_square_integrable(model: &CoefficientModel, which: LimitFunction) -> Result<()> {
    let d = model.dim() as f64;
    let beta = model.beta();
    match which {
        LimitFunction::Full if !(beta > d / 2.0) => Err(Error::NotSquareIntegrable(format!(
            "G_inf decays like |x|^-{beta}, not square integrable for beta <= d/2"
        ))),
        LimitFunction::Dagger if !(beta < d + 0.5) => Err(Error::NotSquareIntegrable(format!(
            "G_dagger grows like dist(x, boundary)^({d} - {beta}) near the boundary"
        ))),
        _ => Ok(()),
    }
}

/// `int G^2` over the chosen part of space by quadrature in coordinates
/// fitted to the boundary, `x = tau rho(u) u` with `rho` the radial
/// function of the prototype.
///
/// The radial variable is split at `tau = 1` and `tau = 2`.  Near the
/// boundary the integration runs in the logarithm of the distance, down to
/// a relative distance `EDGE`, below which `|G|` is extrapolated as a
/// power of the distance; a power substitution maps the far field onto a
/// bounded interval with a bounded integrand.
pub fn squared_integral(
    model: &CoefficientModel,
    proto: &RegionPrototype,
    which: LimitFunction,
    part: Part,
) -> Result<Estimate> {
    let ev = Evaluator::new(model, proto, which, 1e-8)?;
    if profile_vanishes(model) {
        return Ok(Estimate {
            value: 0.0,
            error: 0.0,
        });
    }
    check_square_integrable(model, which)?;
    let d = ev.d;
    if d > 2 {
        return Err(Error::Unsupported(
            "squared integrals in dimension 3".into(),
        ));
    }
    let df = d as f64;
    let beta = model.beta();
    // exponent of |G| against the distance to the boundary
    let edge_power = match which {
        LimitFunction::Full => 0.0,
        LimitFunction::Dagger => df - beta,
    };
    let m = 1.0 / (2.0 * beta - df);
    let inner_opts = QuadOptions {
        rel_tol: 1e-7,
        abs_tol: 1e-300,
        max_intervals: 400,
    };
    let worst = Cell::new(0.0f64);
    let ray = |u: &[f64]| -> f64 {
        let rho = proto.radial(u);
        let angle = if d == 2 { u[1].atan2(u[0]) } else { 0.0 };
        let jac = |tau: f64| tau.powi(d as i32 - 1) * rho.powi(d as i32);
        let g = |tau: f64, inside: bool| {
            let x: Vec<f64> = u.iter().map(|v| tau * rho * v).collect();
            let gap = (1.0 - tau).abs();
            let focus = if inside { angle } else { angle + PI };
            let g = ev.eval(
                &x,
                inside,
                (d == 2 && gap < 0.25).then_some((focus, 0.5 * gap)),
            );
            worst.set(worst.get().max(g.error / g.value.abs().max(1e-300)));
            g.value
        };
        // within EDGE of the boundary |G| is extrapolated as a power of the
        // distance fitted at EDGE and 4 EDGE
        let layer = |inside: bool| -> (f64, f64) {
            let sign = if inside { -1.0 } else { 1.0 };
            let g0 = g(1.0 + sign * EDGE, inside);
            let g1 = g(1.0 + sign * 4.0 * EDGE, inside);
            let fitted = if g0 != 0.0 && g1 / g0 > 0.0 {
                (g1 / g0).ln() / 4f64.ln()
            } else {
                edge_power
            };
            let mass = |q: f64| g0 * g0 * jac(1.0) * EDGE / (2.0 * q + 1.0).max(0.05);
            let v = mass(fitted);
            (v, (v - mass(edge_power)).abs())
        };
        let mut total = 0.0;
        let mut err = 0.0;
        let lo = EDGE.ln();
        if part != Part::Exterior {
            let r = integrate(
                |v| {
                    let gap = v.exp();
                    let tau = 1.0 - gap;
                    g(tau, true).powi(2) * jac(tau) * gap
                },
                lo,
                0.0,
                &inner_opts,
            );
            let (lv, le) = layer(true);
            total += r.value + lv;
            err += r.error + le;
        }
        if part != Part::Interior {
            let near = integrate(
                |v| {
                    let gap = v.exp();
                    let tau = 1.0 + gap;
                    g(tau, false).powi(2) * jac(tau) * gap
                },
                lo,
                0.0,
                &inner_opts,
            );
            let far = integrate(
                |w| {
                    let tau = 2.0 * w.powf(-m);
                    g(tau, false).powi(2) * jac(tau) * 2.0 * m * w.powf(-m - 1.0)
                },
                0.0,
                1.0,
                &inner_opts,
            );
            let (lv, le) = layer(false);
            total += near.value + far.value + lv;
            err += near.error + far.error + le;
        }
        worst.set(worst.get().max(err / total.abs().max(1e-300)));
        total
    };
    let (value, outer_err) = match d {
        1 => (ray(&[1.0]) + ray(&[-1.0]), 0.0),
        _ => {
            let mut breaks: Vec<f64> = (0..=8).map(|j| PI * j as f64 / 4.0).collect();
            match proto.kind() {
                PrototypeKind::Cube => {
                    breaks.extend((0..4).map(|j| PI / 4.0 + PI * j as f64 / 2.0))
                }
                PrototypeKind::PolarStar(star) if star.radial_samples().len() <= 256 => {
                    let n = star.radial_samples().len();
                    breaks.extend((0..n).map(|j| 2.0 * PI * j as f64 / n as f64));
                }
                _ => {}
            }
            let outer = integrate_breakpoints(
                |t| ray(&[t.cos(), t.sin()]),
                &sorted_breaks(breaks),
                &QuadOptions {
                    rel_tol: 1e-6,
                    abs_tol: 1e-300,
                    max_intervals: 400,
                },
            );
            (outer.value, outer.error)
        }
    };
    Ok(Estimate {
        value,
        error: outer_err + 2.0 * worst.get() * value.abs(),
    })
}

/// `int G^2` by Monte Carlo integration over two strata: uniform points in
/// a ball enclosing the region, and outside it a Pareto-tailed radial law
/// whose tail matches the decay of `G^2`.  Deterministic for a given seed.
pub fn squared_integral_mc(
    model: &CoefficientModel,
    proto: &RegionPrototype,
    which: LimitFunction,
    samples: usize,
    seed: u64,
) -> Result<Estimate> {
    let ev = Evaluator::new(model, proto, which, 1e-7)?;
    if profile_vanishes(model) {
        return Ok(Estimate {
            value: 0.0,
            error: 0.0,
        });
    }
    check_square_integrable(model, which)?;
    if samples < MIN_MC_SAMPLES {
        return Err(invalid(
            "samples",
            format!("need at least {MIN_MC_SAMPLES}"),
        ));
    }
    let d = ev.d;
    let df = d as f64;
    let r1 = 1.5 * proto.bounding_radius();
    let kappa = 2.0 * model.beta() - df;
    let vol = unit_ball_volume(d) * r1.powi(d as i32);
    let c_out = kappa * r1.powf(kappa) / unit_sphere_area(d);
    let chunks = samples.div_ceil(MC_CHUNK);
    let strata = MC_SHELLS + 1;
    // per stratum: sum and sum of squares of the weighted integrand
    let parts: Vec<Vec<(f64, f64, usize)>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(seed, c as u64));
            let n = MC_CHUNK.min(samples - c * MC_CHUNK);
            let mut acc = vec![(CompensatedSum::new(), CompensatedSum::new(), 0usize); strata];
            let mut x = vec![0.0; d];
            for k in 0..n {
                let mut norm: f64 = 0.0;
                for v in x.iter_mut() {
                    *v = rng.sample::<f64, _>(StandardNormal);
                    norm += *v * *v;
                }
                let norm = norm.sqrt();
                let stratum = (c * MC_CHUNK + k) % strata;
                let (r, weight) = if stratum < MC_SHELLS {
                    // equal-volume shells of the inner ball
                    let u = (stratum as f64 + rng.random::<f64>()) / MC_SHELLS as f64;
                    (r1 * u.powf(1.0 / df), vol / MC_SHELLS as f64)
                } else {
                    let r = r1 * (1.0 - rng.random::<f64>()).powf(-1.0 / kappa);
                    (r, r.powf(kappa + df) / c_out)
                };
                for v in x.iter_mut() {
                    *v *= r / norm;
                }
                let g = match (which, point_branch(proto, &x)) {
                    (LimitFunction::Dagger, None) => 0.0,
                    (_, branch) => ev.eval(&x, branch.unwrap_or(false), None).value,
                };
                let f = g * g * weight;
                acc[stratum].0.add(f);
                acc[stratum].1.add(f * f);
                acc[stratum].2 += 1;
            }
            acc.into_iter()
                .map(|(s, q, n)| (s.value(), q.value(), n))
                .collect()
        })
        .collect();
    let mut value = 0.0;
    let mut var = 0.0;
    for stratum in 0..strata {
        let n = parts.iter().map(|p| p[stratum].2).sum::<usize>() as f64;
        let sum: f64 = parts
            .iter()
            .map(|p| p[stratum].0)
            .collect::<CompensatedSum>()
            .value();
        let sq: f64 = parts
            .iter()
            .map(|p| p[stratum].1)
            .collect::<CompensatedSum>()
            .value();
        let mean = sum / n;
        value += mean;
        var += ((sq / n - mean * mean) * n / (n - 1.0)).max(0.0) / n;
    }
    Ok(Estimate {
        value,
        error: var.sqrt(),
    })
}

fn require_regime(model: &CoefficientModel, expected: Regime) -> Result<()> {
    let class = model.classify()?;
    if class.label != expected {
        return Err(Error::WrongRegime {
            expected: expected.label().into(),
            actual: class.label.label().into(),
        });
    }
    Ok(())
}

const PSD_NOTE: &str =
    "variance of the Gaussian limit under positive strong dependence: integral of G_inf^2";
const ND_NOTE: &str = "variance of the Gaussian limit under negative dependence without edge effects: integral of G_dagger^2";

fn wrap(regime: Regime, est: Estimate, method: LimitMethod, note: &str) -> LimitVariance {
    LimitVariance {
        regime,
        value: est.value,
        method,
        error_estimate: est.error,
        provenance: note.into(),
    }
}

/// `int G_inf^2` for a model with positive strong dependence.
pub fn limit_variance_psd(
    model: &CoefficientModel,
    proto: &RegionPrototype,
) -> Result<LimitVariance> {
    require_regime(model, Regime::Psd)?;
    let est = squared_integral(model, proto, LimitFunction::Full, Part::All)?;
    Ok(wrap(Regime::Psd, est, LimitMethod::Quadrature, PSD_NOTE))
}

/// Monte Carlo counterpart of [`limit_variance_psd`].
pub fn limit_variance_psd_mc(
    model: &CoefficientModel,
    proto: &RegionPrototype,
    samples: usize,
    seed: u64,
) -> Result<LimitVariance> {
    require_regime(model, Regime::Psd)?;
    let est = squared_integral_mc(model, proto, LimitFunction::Full, samples, seed)?;
    Ok(wrap(
        Regime::Psd,
        est,
        LimitMethod::MonteCarloIntegration,
        PSD_NOTE,
    ))
}

/// `int G_dagger^2` for a zero-sum model with `d < beta < d + 1/2`.
pub fn limit_variance_nd(
    model: &CoefficientModel,
    proto: &RegionPrototype,
) -> Result<LimitVariance> {
    require_regime(model, Regime::NdNee)?;
    let est = squared_integral(model, proto, LimitFunction::Dagger, Part::All)?;
    Ok(wrap(Regime::NdNee, est, LimitMethod::Quadrature, ND_NOTE))
}

/// Monte Carlo counterpart of [`limit_variance_nd`].
pub fn limit_variance_nd_mc(
    model: &CoefficientModel,
    proto: &RegionPrototype,
    samples: usize,
    seed: u64,
) -> Result<LimitVariance> {
    require_regime(model, Regime::NdNee)?;
    let est = squared_integral_mc(model, proto, LimitFunction::Dagger, samples, seed)?;
    Ok(wrap(
        Regime::NdNee,
        est,
        LimitMethod::MonteCarloIntegration,
        ND_NOTE,
    ))
}

/// Fit of `a + b / lambda` to `(lambda, boundary_sum_scaled)` pairs; the
/// intercept estimates the limiting boundary variance and its standard
/// error is reported.
pub fn sigma_ee_extrapolate(pairs: &[(f64, f64)]) -> Result<LimitVariance> {
    if pairs.len() < 3 {
        return Err(invalid("pairs", "need at least three inflation factors"));
    }
    if pairs
        .iter()
        .any(|(l, v)| !(l.is_finite() && *l > 0.0 && v.is_finite()))
    {
        return Err(invalid(
            "pairs",
            "values must be finite with positive lambda",
        ));
    }
    if pairs.windows(2).any(|w| !(w[1].0 > w[0].0)) {
        return Err(invalid("pairs", "lambda must be strictly increasing"));
    }
    let n = pairs.len() as f64;
    let x: Vec<f64> = pairs.iter().map(|p| 1.0 / p.0).collect();
    let y0 = pairs[0].1;
    // centring on the first value keeps constant input exact
    let y: Vec<f64> = pairs.iter().map(|p| p.1 - y0).collect();
    let xm = x.iter().sum::<f64>() / n;
    let ym = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - xm) * (v - xm)).sum();
    let sxy: f64 = x.iter().zip(&y).map(|(u, v)| (u - xm) * (v - ym)).sum();
    let slope = sxy / sxx;
    let a = ym - slope * xm;
    let ssr: f64 = x
        .iter()
        .zip(&y)
        .map(|(u, v)| (v - a - slope * u).powi(2))
        .sum();
    let s2 = ssr / (n - 2.0);
    let sx2: f64 = x.iter().map(|v| v * v).sum();
    let se = (s2 * sx2 / (n * sxx)).sqrt();
    let value = a + y0;
    if value < 0.0 {
        return Err(Error::Degenerate(format!(
            "extrapolated boundary variance is negative ({value})"
        )));
    }
    Ok(LimitVariance {
        regime: Regime::NdEe,
        value,
        method: LimitMethod::Extrapolation,
        error_estimate: se,
        provenance: "limit of the scaled boundary-shell variance, fitted as a + b/lambda".into(),
    })
}

/// `(lambda, lambda^{-(d-1)} sum over the boundary shell of theta_n^2)` for
/// each inflation factor.
pub fn boundary_sum_series(
    model: &CoefficientModel,
    proto: &RegionPrototype,
    lambdas: &[f64],
    rule: ShellRule,
    rho: f64,
) -> Result<Vec<(f64, f64)>> {
    lambdas
        .iter()
        .map(|&lambda| {
            let sites = proto.enumerate_sites(lambda)?;
            let window = default_window(model.dim(), lambda, rho);
            let field = theta_fft(model, &sites, &window)?;
            let class = proto.classify_sites(lambda, rule.t_n(lambda), &window)?;
            Ok((
                lambda,
                field.variance_decompose(&class)?.boundary_sum_scaled,
            ))
        })
        .collect()
}

fn sigma0_from_tails(total: f64, tails: &[f64]) -> f64 {
    // tails[k - 1] = sum_{j >= k} b(j)
    let first: f64 = tails
        .iter()
        .map(|t| t * t)
        .collect::<CompensatedSum>()
        .value();
    let second: f64 = tails[1..]
        .iter()
        .map(|t| t * t)
        .collect::<CompensatedSum>()
        .value();
    16.0 * total * total * (total * total + first + second)
}

/// `sigma_0^2 = 16 B^2 [B^2 + sum_k T(k)^2 + sum_k T(k + 1)^2]` with
/// `T(k) = sum_{j >= k} b(j)`, the boundary variance constant of the
/// separable planar model on the square.
pub fn separable_edge_constant(b: &SeparableSequence) -> Result<Estimate> {
    match b {
        SeparableSequence::Power { p, .. } => {
            let eps = 1e-13;
            let k = ((1.0 / ((p - 1.0).powi(2) * (2.0 * p - 3.0) * eps))
                .powf(1.0 / (2.0 * p - 3.0))
                + 2.0)
                .ceil()
                .min(2e7);
            separable_edge_constant_truncated(b, k as u64)
        }
        SeparableSequence::Finite(v) => {
            if v.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
                return Err(invalid("b", "must be non-negative"));
            }
            let total: f64 = v.iter().sum();
            if !(total > 0.0) {
                return Err(invalid("b", "must not vanish"));
            }
            let mut tails = vec![0.0; v.len() + 1];
            for k in (0..v.len()).rev() {
                tails[k] = tails[k + 1] + v[k];
            }
            let value = sigma0_from_tails(total, &tails);
            Ok(Estimate {
                value,
                error: 8.0 * f64::EPSILON * (v.len() as f64 + 1.0) * value,
            })
        }
    }
}

/// [`separable_edge_constant`] truncated after `k` terms of each series, with the
/// bound on the omitted terms as the error.
pub fn separable_edge_constant_truncated(b: &SeparableSequence, k: u64) -> Result<Estimate> {
    let SeparableSequence::Power { c, p } = *b else {
        return separable_edge_constant(b);
    };
    if !(c > 0.0) {
        return Err(invalid("b", "must be positive"));
    }
    if !(p > 1.5) {
        return Err(invalid(
            "b",
            format!("sum of squared tails diverges for decay exponent {p} <= 1.5"),
        ));
    }
    if k < 2 {
        return Err(invalid("k", "need at least two terms"));
    }
    let total = b.total();
    let mut tails = vec![0.0; k as usize + 1];
    tails[k as usize] = b.tail_from(k + 1);
    for j in (0..k as usize).rev() {
        tails[j] = tails[j + 1] + b.value(j as u64 + 1);
    }
    let value = sigma0_from_tails(total, &tails);
    // T(j) <= c (j - 1)^{1-p} / (p - 1), summed beyond k
    let omitted =
        c * c / (p - 1.0).powi(2) * ((k - 1) as f64).powf(3.0 - 2.0 * p) / (2.0 * p - 3.0);
    let error =
        16.0 * total * total * 2.0 * omitted + 8.0 * f64::EPSILON * (k as f64).sqrt() * value;
    Ok(Estimate { value, error })
}

/// `A^2` for a short-range dependent model.
pub fn limit_variance_srd(model: &CoefficientModel) -> Result<LimitVariance> {
    require_regime(model, Regime::Srd)?;
    let ts = model.total_sum(model.default_sum_radius())?;
    if ts.value.abs() <= ts.tail_bound {
        return Err(Error::ZeroTotalSum {
            value: ts.value,
            tail_bound: ts.tail_bound,
        });
    }
    let a = ts.value.abs();
    Ok(LimitVariance {
        regime: Regime::Srd,
        value: a * a,
        method: LimitMethod::TruncatedSeries,
        error_estimate: 2.0 * a * ts.tail_bound + ts.tail_bound * ts.tail_bound,
        provenance:
            "variance of the Gaussian limit under short-range dependence: squared coefficient sum"
                .into(),
    })
}

/// `sigma_EE^2 + c0^2 int G_dagger^2` at the critical exponent
/// `beta = d + 1/2`.
///
/// The squared integral diverges there unless the limit profile vanishes,
/// so only `c0 = 0` or a vanishing profile gives a finite value.
pub fn critical_combined_variance(
    model: &CoefficientModel,
    proto: &RegionPrototype,
    c0: f64,
    sigma_ee: &LimitVariance,
) -> Result<LimitVariance> {
    require_regime(model, Regime::NdCritical)?;
    if model.dim() != proto.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            got: proto.dim(),
        });
    }
    if !(c0.is_finite() && c0 >= 0.0) {
        return Err(invalid("c0", "must be finite and non-negative"));
    }
    if c0 > 0.0 && !profile_vanishes(model) {
        return Err(Error::NotSquareIntegrable(
            "G_dagger^2 is not integrable near the boundary at beta = d + 1/2".into(),
        ));
    }
    Ok(LimitVariance {
        regime: Regime::NdCritical,
        value: sigma_ee.value,
        method: sigma_ee.method,
        error_estimate: sigma_ee.error_estimate,
        provenance: "boundary variance plus c0^2 times the integral of G_dagger^2".into(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::Amplitude;
    use std::collections::BTreeMap;

    fn iso(beta: f64) -> CoefficientModel {
        CoefficientModel::isotropic(2, beta, 1.0, Amplitude::Constant).unwrap()
    }

    fn iso_nd(beta: f64) -> CoefficientModel {
        CoefficientModel::isotropic(2, beta, 1.0, Amplitude::Smooth)
            .unwrap()
            .with_zero_sum()
            .unwrap()
    }

    fn ball() -> RegionPrototype {
        RegionPrototype::ball(2, 0.5).unwrap()
    }

    // midpoint rule over [-0.5, 0.5]^2 with n cells per axis
    fn grid_sum(n: usize, f: impl Fn(f64, f64) -> f64) -> f64 {
        let h = 1.0 / n as f64;
        let mut acc = CompensatedSum::new();
        for a in 0..n {
            let x = -0.5 + (a as f64 + 0.5) * h;
            for b in 0..n {
                acc.add(f(x, -0.5 + (b as f64 + 0.5) * h));
            }
        }
        acc.value() * h * h
    }

    #[test]
    fn g_inf_at_ball_centre() {
        let g = g_infty_at(&iso(1.5), &ball(), &[0.0, 0.0]).unwrap();
        let oracle = 2.0 * PI * 0.5f64.sqrt() / 0.5;
        assert!(
            (g.value - oracle).abs() < 1e-9 * oracle,
            "{} vs {oracle}",
            g.value
        );
        assert!((oracle - 8.8858).abs() < 1e-4);
    }

    #[test]
    fn g_inf_far_point_bounded_by_nearest_value() {
        let g = g_infty_at(&iso(1.5), &ball(), &[10.0, 0.0]).unwrap().value;
        assert!(g > 0.0);
        assert!(g <= ball().volume() * 9.5f64.powf(-1.5));
        assert!(g >= ball().volume() * 10.5f64.powf(-1.5));
    }

    #[test]
    fn g_inf_cube_centre_matches_grid_oracle() {
        let f = |x: f64, y: f64| (x * x + y * y).powf(-0.75);
        let coarse = grid_sum(512, f);
        let fine = grid_sum(2048, f);
        // midpoint error of the r^{-1.5} singularity scales like h^{1/2}
        let oracle = 2.0 * fine - coarse;
        let g = g_infty_at(&iso(1.5), &RegionPrototype::cube(2).unwrap(), &[0.0, 0.0]).unwrap();
        assert!(
            (g.value / oracle - 1.0).abs() < 0.01,
            "{} vs {oracle}",
            g.value
        );
    }

    #[test]
    fn g_dagger_centre_of_ball() {
        let g = g_dagger_at(&iso_nd(2.2), &ball(), &[0.0, 0.0]).unwrap();
        let oracle = 2.0 * PI * 0.5f64.powf(-0.2) / 0.2;
        assert!((g.value - oracle).abs() < 1e-8 * oracle);
        assert!((oracle - 36.087).abs() < 1e-3);
    }

    #[test]
    fn g_dagger_outside_matches_grid_oracle() {
        let f = |x: f64, y: f64| {
            if x * x + y * y < 0.25 {
                ((x - 2.0).powi(2) + y * y).powf(-1.1)
            } else {
                0.0
            }
        };
        let oracle = grid_sum(2048, f);
        let g = g_dagger_at(&iso_nd(2.2), &ball(), &[2.0, 0.0]).unwrap();
        assert!((g.value / oracle - 1.0).abs() < 0.01);
    }

    #[test]
    fn g_dagger_vanishes_on_boundary() {
        let m = iso_nd(2.2);
        assert_eq!(g_dagger_at(&m, &ball(), &[0.5, 0.0]).unwrap().value, 0.0);
        assert_eq!(
            g_dagger_at(&m, &RegionPrototype::cube(2).unwrap(), &[0.5, 0.1])
                .unwrap()
                .value,
            0.0
        );
    }

    #[test]
    fn exponent_ranges_are_enforced() {
        assert!(g_infty_at(&iso_nd(2.2), &ball(), &[0.0, 0.0]).is_err());
        assert!(g_dagger_at(&iso(1.5), &ball(), &[0.0, 0.0]).is_err());
        assert!(matches!(
            limit_variance_psd(&iso_nd(2.2), &ball()),
            Err(Error::WrongRegime { .. })
        ));
    }

    #[test]
    fn exterior_branch_matches_cartesian_quadrature() {
        // independent nested Gauss-Kronrod over the square
        let cube = RegionPrototype::cube(2).unwrap();
        let m = iso_nd(2.3);
        let opts = QuadOptions {
            rel_tol: 1e-11,
            abs_tol: 1e-300,
            max_intervals: 200,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut checked = 0;
        while checked < 100 {
            let x = [rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)];
            if cube.distance(&x) < 0.2 || cube.contains(&x) {
                continue;
            }
            let oracle = integrate(
                |a| {
                    integrate(
                        |b| ((a - x[0]).powi(2) + (b - x[1]).powi(2)).powf(-1.15),
                        -0.5,
                        0.5,
                        &opts,
                    )
                    .value
                },
                -0.5,
                0.5,
                &opts,
            )
            .value;
            let g = g_dagger_at(&m, &cube, &x).unwrap().value;
            assert!((g / oracle - 1.0).abs() < 1e-6, "{x:?}: {g} vs {oracle}");
            checked += 1;
        }
    }

    // radial oracle for an isotropic profile on a centred ball:
    // G depends on |x| only, so int G^2 = 2 pi int r G(r)^2 dr
    fn radial_oracle(model: &CoefficientModel, which: LimitFunction) -> f64 {
        let b = ball();
        let opts = QuadOptions {
            rel_tol: 1e-9,
            abs_tol: 1e-300,
            max_intervals: 2000,
        };
        let g = |r: f64| match which {
            LimitFunction::Full => g_infty_at(model, &b, &[r, 0.0]).unwrap().value,
            LimitFunction::Dagger => g_dagger_at(model, &b, &[r, 0.0]).unwrap().value,
        };
        let beta = model.beta();
        let inside = integrate(
            |s| {
                let r = 0.5 * (1.0 - (1.0 - s).powi(12));
                r * g(r).powi(2) * 6.0 * (1.0 - s).powi(11)
            },
            0.0,
            1.0,
            &opts,
        )
        .value;
        let m = 1.0 / (2.0 * beta - 2.0);
        let outside = integrate(
            |w| {
                let r = 0.5 + w.powi(12) * 0.5;
                r * g(r).powi(2) * 6.0 * w.powi(11)
            },
            0.0,
            1.0,
            &opts,
        )
        .value
            + integrate(
                |w| {
                    let r = w.powf(-m);
                    r * g(r).powi(2) * m * w.powf(-m - 1.0)
                },
                0.0,
                1.0,
                &opts,
            )
            .value;
        2.0 * PI * (inside + outside)
    }

    #[test]
    fn psd_squared_integral_two_methods() {
        let m = iso(1.5);
        let q = limit_variance_psd(&m, &ball()).unwrap();
        let oracle = radial_oracle(&m, LimitFunction::Full);
        assert!(
            (q.value / oracle - 1.0).abs() < 1e-4,
            "{} vs {oracle}",
            q.value
        );
        let mc = limit_variance_psd_mc(&m, &ball(), 20_000, 3).unwrap();
        assert!(
            (mc.value / q.value - 1.0).abs() < 0.01,
            "{} +- {} vs {}",
            mc.value,
            mc.error_estimate,
            q.value
        );
        assert!(q.value > 0.0 && q.error_estimate >= 0.0);
    }

    #[test]
    fn psd_value_invariant_under_scaling_and_monotone_in_region() {
        let m = iso(1.5);
        let a = limit_variance_psd(&m, &ball()).unwrap().value;
        let b = limit_variance_psd(&m.clone().scaled(3.0).unwrap(), &ball())
            .unwrap()
            .value;
        assert!((a - b).abs() < 1e-12 * a);
        let small = limit_variance_psd(&m, &RegionPrototype::ball(2, 0.25).unwrap())
            .unwrap()
            .value;
        assert!(small < a);
    }

    #[test]
    fn nd_squared_integral_two_methods() {
        let m = iso_nd(2.2);
        let q = limit_variance_nd(&m, &ball()).unwrap();
        let oracle = radial_oracle(&m, LimitFunction::Dagger);
        assert!(
            (q.value / oracle - 1.0).abs() < 1e-3,
            "{} vs {oracle}",
            q.value
        );
        let mc = limit_variance_nd_mc(&m, &ball(), 20_000, 5).unwrap();
        assert!(
            (mc.value / q.value - 1.0).abs() < 0.02,
            "{} vs {}",
            mc.value,
            q.value
        );
    }

    #[test]
    fn nd_finite_close_to_critical_exponent() {
        let q = limit_variance_nd(&iso_nd(2.45), &ball()).unwrap();
        assert!(q.value.is_finite() && q.value > 0.0);
    }

    #[test]
    fn extrapolation_of_exact_and_constant_input() {
        let c = sigma_ee_extrapolate(&[(8.0, 0.1), (16.0, 0.1), (32.0, 0.1)]).unwrap();
        assert_eq!(c.value, 0.1);
        assert_eq!(c.error_estimate, 0.0);
        let pairs: Vec<(f64, f64)> = [10.0, 20.0, 40.0, 80.0]
            .iter()
            .map(|&l| (l, 3.0 + 5.0 / l))
            .collect();
        let f = sigma_ee_extrapolate(&pairs).unwrap();
        assert!((f.value - 3.0).abs() < 1e-12);
        assert!(sigma_ee_extrapolate(&pairs[..2]).is_err());
        assert!(sigma_ee_extrapolate(&[(2.0, 1.0), (1.0, 1.0), (3.0, 1.0)]).is_err());
    }

    #[test]
    fn delta_boundary_density_extrapolates_to_perimeter() {
        // shell of width 2 around the boundary: three lattice rows along the
        // two closed faces, two along the open ones
        let cube = RegionPrototype::cube(2).unwrap();
        let delta = CoefficientModel::delta(2).unwrap();
        let pairs = boundary_sum_series(
            &delta,
            &cube,
            &[16.0, 32.0, 64.0],
            ShellRule::Fixed(2.0),
            1.0,
        )
        .unwrap();
        for &(lambda, v) in &pairs {
            let class = cube
                .classify_sites(lambda, 2.0, &default_window(2, lambda, 1.0))
                .unwrap();
            let sites = cube.enumerate_sites(lambda).unwrap();
            let counted = class
                .boundary_sites()
                .iter()
                .filter(|p| sites.iter().any(|s| s == p.as_slice()))
                .count();
            assert!((v - counted as f64 / lambda).abs() < 1e-12);
        }
        let fit = sigma_ee_extrapolate(&pairs).unwrap();
        assert!((fit.value - 10.0).abs() < 0.1, "{}", fit.value);
    }

    #[test]
    fn sigma0_single_term() {
        let v = separable_edge_constant(&SeparableSequence::Finite(vec![1.0])).unwrap();
        assert_eq!(v.value, 32.0);
    }

    #[test]
    fn sigma0_cubic_sequence_two_truncations() {
        let b = SeparableSequence::Power { c: 1.0, p: 3.0 };
        let full = separable_edge_constant(&b).unwrap();
        assert!(full.error < 1e-6);
        let coarse = separable_edge_constant_truncated(&b, 2000).unwrap();
        let fine = separable_edge_constant_truncated(&b, 20000).unwrap();
        assert!((coarse.value - fine.value).abs() <= coarse.error + fine.error);
        assert!((fine.value - full.value).abs() < 1e-6);
        // brute force: T(k) by direct summation
        let n = 200_000usize;
        let mut tails = vec![0.0; n + 1];
        for k in (1..=n).rev() {
            tails[k - 1] = tails[k] + (k as f64).powi(-3);
        }
        let total = tails[0];
        let first: f64 = tails.iter().map(|t| t * t).sum();
        let brute = 16.0 * total * total * (total * total + 2.0 * first - total * total);
        assert!(
            (brute / full.value - 1.0).abs() < 1e-6,
            "{brute} vs {}",
            full.value
        );
        assert!(separable_edge_constant(&SeparableSequence::Power { c: 1.0, p: 1.4 }).is_err());
    }

    #[test]
    fn sigma0_homogeneous_of_degree_four() {
        let base = separable_edge_constant(&SeparableSequence::Power { c: 1.0, p: 3.0 })
            .unwrap()
            .value;
        let scaled = separable_edge_constant(&SeparableSequence::Power { c: 1.7, p: 3.0 })
            .unwrap()
            .value;
        assert!((scaled / (1.7f64.powi(4) * base) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn srd_limits() {
        let d = limit_variance_srd(&CoefficientModel::delta(2).unwrap()).unwrap();
        assert_eq!(d.value, 1.0);
        let mut e = BTreeMap::new();
        e.insert(vec![0, 0], 1.5);
        e.insert(vec![1, 0], 0.5);
        let t = limit_variance_srd(&CoefficientModel::table(2, e).unwrap()).unwrap();
        assert!((t.value - 4.0).abs() < 1e-12);
        assert!(limit_variance_srd(&iso(1.5)).is_err());
    }

    #[test]
    fn critical_combination() {
        let sep = CoefficientModel::separable(SeparableSequence::Power { c: 1.0, p: 2.5 }).unwrap();
        let cube = RegionPrototype::cube(2).unwrap();
        let ee = sigma_ee_extrapolate(&[(8.0, 2.0), (16.0, 2.5), (32.0, 2.75)]).unwrap();
        let c = critical_combined_variance(&sep, &cube, 0.0, &ee).unwrap();
        assert_eq!(c.value, ee.value);
        let c = critical_combined_variance(&sep, &cube, 1.0, &ee).unwrap();
        assert_eq!(c.value, ee.value);
        assert!(critical_combined_variance(&iso_nd(2.2), &cube, 1.0, &ee).is_err());
    }

    #[test]
    fn json_shape() {
        let v = limit_variance_srd(&CoefficientModel::delta(1).unwrap()).unwrap();
        let j: serde_json::Value = serde_json::to_value(&v).unwrap();
        assert_eq!(j["regime"], "SRD");
        assert_eq!(j["method"], "truncated-series");
        for k in ["value", "error_estimate", "provenance"] {
            assert!(j.get(k).is_some());
        }
    }
}
