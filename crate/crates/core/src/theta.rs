//! The field `theta_n(i) = sum_{j in D_n} alpha(j - i)`, the variance
//! `sigma_n^2 = sum_i theta_n(i)^2` and its boundary decomposition.

use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::coefficients::{radial_tail, CoefficientModel};
use crate::error::{Error, Result};
use crate::fft::{fft_nd, negated_offset, smooth_size};
use crate::geometry::{BoundaryClassification, SiteClass, SiteSet};
use crate::io::fmt_f64;
use crate::lattice::IntBox;
use crate::special::CompensatedSum;

/// Default truncation factor: the window is `[-rho lambda, rho lambda]^d`.
pub const DEFAULT_RHO: f64 = 4.0;

const MAGIC: &[u8; 8] = b"THETAF01";

/// `theta_n` on a finite window.
#[derive(Debug, Clone, PartialEq)]
pub struct ThetaField {
    pub window: IntBox,
    /// Row-major values over `window`.
    pub values: Vec<f64>,
    pub rho: Option<f64>,
    /// Upper bound on the sum of `theta_n(i)^2` over `i` outside the window.
    pub tail_bound: f64,
    pub lambda: Option<f64>,
    pub site_count: usize,
}

/// `sigma_n^2` over the window with the bound on the omitted part.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SigmaSq {
    pub value: f64,
    pub tail_bound: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VarianceDecomposition {
    pub interior_sum: f64,
    pub exterior_sum: f64,
    pub boundary_sum: f64,
    pub boundary_sum_scaled: f64,
    pub t_n: f64,
    pub sigma_sq_total: f64,
    pub tail_bound: f64,
}

/// The window `[-floor(rho lambda), floor(rho lambda)]^d`.
pub fn default_window(dim: usize, lambda: f64, rho: f64) -> IntBox {
    IntBox::symmetric(dim, (rho * lambda).floor() as i64)
}

fn check_inputs(model: &CoefficientModel, sites: &SiteSet, window: &IntBox) -> Result<()> {
    if sites.dim() != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            got: sites.dim(),
        });
    }
    if window.dim() != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            got: window.dim(),
        });
    }
    if sites.is_empty() {
        return Err(Error::EmptyRegion(sites.lambda().unwrap_or(f64::NAN)));
    }
    Ok(())
}

/// Reference evaluation by summing over the sites for every window cell.
pub fn theta_direct(
    model: &CoefficientModel,
    sites: &SiteSet,
    window: &IntBox,
) -> Result<ThetaField> {
    check_inputs(model, sites, window)?;
    let d = model.dim();
    let values: Vec<f64> = (0..window.len())
        .into_par_iter()
        .with_min_len(64)
        .map_init(
            || (vec![0i64; d], vec![0i64; d]),
            |(i, k), off| {
                window.point_into(off, i);
                let mut acc = CompensatedSum::new();
                for j in sites.iter() {
                    for m in 0..d {
                        k[m] = j[m] - i[m];
                    }
                    acc.add(model.alpha(k));
                }
                acc.value()
            },
        )
        .collect();
    finish(model, sites, window, values)
}

/// Evaluation by FFT cross-correlation on a zero-padded grid.
pub fn theta_fft(model: &CoefficientModel, sites: &SiteSet, window: &IntBox) -> Result<ThetaField> {
    theta_fft_with_grid(model, sites, window, None)
}

/// Grid extent per axis that keeps circular wrap-around out of the window.
pub fn required_grid(sites: &SiteSet, window: &IntBox) -> Vec<usize> {
    let region = sites.bounding_window();
    (0..window.dim())
        .map(|k| window.extent(k) + region.extent(k) - 1)
        .collect()
}

/// Like [`theta_fft`] with an explicit transform grid; grids smaller than
/// [`required_grid`] are rejected.
pub fn theta_fft_with_grid(
    model: &CoefficientModel,
    sites: &SiteSet,
    window: &IntBox,
    grid: Option<&[usize]>,
) -> Result<ThetaField> {
    check_inputs(model, sites, window)?;
    let d = model.dim();
    let need = required_grid(sites, window);
    let shape: Vec<usize> = match grid {
        Some(g) => {
            if g.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: g.len(),
                });
            }
            for k in 0..d {
                if g[k] < need[k] {
                    return Err(Error::InsufficientPadding {
                        axis: k,
                        size: g[k],
                        required: need[k],
                    });
                }
            }
            g.to_vec()
        }
        None => need.iter().map(|&n| smooth_size(n)).collect(),
    };
    let strides: Vec<usize> = (0..d).map(|k| shape[k + 1..].iter().product()).collect();
    let total: usize = shape.iter().product();
    let region = sites.bounding_window().clone();

    // real part: alpha at offsets k_lo + m; imaginary part: site indicator
    let mut buf = vec![Complex64::default(); total];
    let k_lo: Vec<i64> = (0..d).map(|k| region.lo[k] - window.hi[k]).collect();
    let k_hi: Vec<i64> = (0..d).map(|k| region.hi[k] - window.lo[k]).collect();
    let offsets = IntBox::new(k_lo.clone(), k_hi)?;
    let mut integral = true;
    offsets.for_each(|_, p| {
        let mut off = 0;
        for k in 0..d {
            off += (p[k] - k_lo[k]) as usize * strides[k];
        }
        let a = model.alpha(p);
        integral &= a.fract() == 0.0 && a.abs() < 1e12;
        buf[off].re = a;
    });
    for j in sites.iter() {
        let mut off = 0;
        for k in 0..d {
            off += (j[k] - region.lo[k]) as usize * strides[k];
        }
        buf[off].im = 1.0;
    }

    fft_nd(&mut buf, &shape, false);
    // separate the two real transforms and form conj(F_I) F_A
    for off in 0..total {
        let neg = negated_offset(off, &shape);
        if neg < off {
            continue;
        }
        let z = buf[off];
        let zn = buf[neg].conj();
        let fa = (z + zn) * 0.5;
        let fi = (z - zn) * Complex64::new(0.0, -0.5);
        let prod = fi.conj() * fa;
        buf[off] = prod;
        buf[neg] = prod.conj();
    }
    fft_nd(&mut buf, &shape, true);

    let norm = 1.0 / total as f64;
    let mut values = Vec::with_capacity(window.len());
    window.for_each(|_, i| {
        let mut off = 0;
        for k in 0..d {
            off += (window.hi[k] - i[k]) as usize * strides[k];
        }
        let v = buf[off].re * norm;
        // integer inputs give an integer correlation; restore it exactly
        values.push(if integral { v.round() } else { v });
    });
    drop(buf);
    finish(model, sites, window, values)
}

fn finish(
    model: &CoefficientModel,
    sites: &SiteSet,
    window: &IntBox,
    values: Vec<f64>,
) -> Result<ThetaField> {
    let tail_bound = theta_tail_bound(model, sites, window);
    let lambda = sites.lambda();
    let rho = lambda.and_then(|l| {
        let r = window.hi[0];
        (window == &IntBox::symmetric(window.dim(), r)).then_some(r as f64 / l)
    });
    Ok(ThetaField {
        window: window.clone(),
        values,
        rho,
        tail_bound,
        lambda,
        site_count: sites.count(),
    })
}

/// Bound on `sum_{i outside window} theta_n(i)^2`.
///
/// For `i` at distance `s` from the sites, `|theta_n(i)|` is at most
/// `N_n env(s)` and, for summable fields, at most the absolute tail of
/// `alpha` beyond `s`; the squared bound is integrated radially.
pub fn theta_tail_bound(model: &CoefficientModel, sites: &SiteSet, window: &IntBox) -> f64 {
    let d = model.dim();
    let h = 0.5 * (d as f64).sqrt();
    let reach = sites.max_norm();
    let inner = (0..d)
        .map(|k| (-window.lo[k]).min(window.hi[k]) + 1)
        .min()
        .unwrap_or(0)
        .max(0) as f64;
    let n = sites.count() as f64;
    let summable = model.is_summable();
    let f = |s: f64| -> f64 {
        let gap = (s - h - reach).max(0.0);
        let mut b = n * model.envelope(gap);
        if summable {
            b = b.min(model.abs_tail_bound(gap));
        }
        b * b
    };
    radial_tail(d, inner - 0.5, f)
}

impl ThetaField {
    pub fn dim(&self) -> usize {
        self.window.dim()
    }

    /// `theta_n(i)`, or `None` outside the window.
    pub fn get(&self, i: &[i64]) -> Option<f64> {
        self.window
            .contains(i)
            .then(|| self.values[self.window.offset(i)])
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Compensated sum of squares over the window.
    pub fn sigma_sq(&self) -> SigmaSq {
        SigmaSq {
            value: self
                .values
                .iter()
                .map(|v| v * v)
                .collect::<CompensatedSum>()
                .value(),
            tail_bound: self.tail_bound,
        }
    }

    /// `max |theta_n(i)| / sigma_n`.
    pub fn lindeberg_ratio(&self) -> Result<f64> {
        let s = self.sigma_sq().value;
        if !(s > 0.0) {
            return Err(Error::Degenerate("sigma_n = 0".into()));
        }
        Ok(self.max_abs() / s.sqrt())
    }

    /// Interior, exterior and boundary-shell sums of `theta_n(i)^2`.
    pub fn variance_decompose(
        &self,
        class: &BoundaryClassification,
    ) -> Result<VarianceDecomposition> {
        if !self.window.contains_box(&class.window) {
            return Err(Error::WindowMismatch(format!(
                "classification window {} is not inside the theta window {}",
                class.window, self.window
            )));
        }
        let mut sums = [
            CompensatedSum::new(),
            CompensatedSum::new(),
            CompensatedSum::new(),
        ];
        let labels = class.labels();
        class.window.for_each(|off, p| {
            let v = self.values[self.window.offset(p)];
            let slot = match labels[off] {
                SiteClass::Interior => 0,
                SiteClass::Exterior => 1,
                SiteClass::Boundary => 2,
            };
            sums[slot].add(v * v);
        });
        let total = self.sigma_sq().value;
        let [interior, exterior, boundary] = sums.map(|s| s.value());
        let covered = [interior, exterior, boundary]
            .iter()
            .copied()
            .collect::<CompensatedSum>()
            .value();
        let lambda = class.lambda;
        Ok(VarianceDecomposition {
            interior_sum: interior,
            exterior_sum: exterior,
            boundary_sum: boundary,
            boundary_sum_scaled: boundary / lambda.powi(self.dim() as i32 - 1),
            t_n: class.t_n,
            sigma_sq_total: total,
            tail_bound: self.tail_bound + (total - covered).max(0.0),
        })
    }

    /// CSV with header `i1,...,id,theta`.
    pub fn to_csv(&self) -> String {
        let d = self.dim();
        let mut out: String = (1..=d).map(|k| format!("i{k},")).collect();
        out.push_str("theta\n");
        self.window.for_each(|off, p| {
            for x in p {
                out.push_str(&x.to_string());
                out.push(',');
            }
            out.push_str(&fmt_f64(self.values[off]));
            out.push('\n');
        });
        out
    }

    /// Little-endian binary: magic, `d`, window corners, `lambda`, `rho`,
    /// tail bound, site count, then the row-major values.
    pub fn to_binary(&self) -> Vec<u8> {
        let d = self.dim();
        let mut out = Vec::with_capacity(64 + 16 * d + 8 * self.values.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(d as u32).to_le_bytes());
        for v in self.window.lo.iter().chain(&self.window.hi) {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for v in [
            self.lambda.unwrap_or(f64::NAN),
            self.rho.unwrap_or(f64::NAN),
            self.tail_bound,
        ] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&(self.site_count as u64).to_le_bytes());
        for v in &self.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_binary(bytes: &[u8]) -> Result<Self> {
        let bad = |what: &str| Error::Parse(format!("theta binary: {what}"));
        let mut pos = 0;
        let mut take = |n: usize| -> Result<&[u8]> {
            let s = bytes.get(pos..pos + n).ok_or_else(|| bad("truncated"))?;
            pos += n;
            Ok(s)
        };
        if take(8)? != MAGIC {
            return Err(bad("bad magic"));
        }
        let d = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
        if d == 0 || d > 16 {
            return Err(bad("bad dimension"));
        }
        let mut corners = Vec::with_capacity(2 * d);
        for _ in 0..2 * d {
            corners.push(i64::from_le_bytes(take(8)?.try_into().unwrap()));
        }
        let f = |s: &[u8]| f64::from_le_bytes(s.try_into().unwrap());
        let lambda = f(take(8)?);
        let rho = f(take(8)?);
        let tail_bound = f(take(8)?);
        let site_count = u64::from_le_bytes(take(8)?.try_into().unwrap()) as usize;
        let window = IntBox::new(corners[..d].to_vec(), corners[d..].to_vec())?;
        let body = take(8 * window.len())?;
        let values = body.chunks_exact(8).map(f).collect();
        if pos != bytes.len() {
            return Err(bad("trailing bytes"));
        }
        Ok(ThetaField {
            window,
            values,
            rho: (!rho.is_nan()).then_some(rho),
            tail_bound,
            lambda: (!lambda.is_nan()).then_some(lambda),
            site_count,
        })
    }
}
