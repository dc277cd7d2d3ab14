//! Prototype regions, their inflations, lattice sites and boundary shells.
//!
//! A prototype `R0` is a star-shaped set inside `(-1/2, 1/2]^d` containing
//! the origin. The sampling region for inflation factor `lambda` is
//! `lambda * R0` and the data sites are its integer points. Membership uses
//! the open-set convention: points on the boundary are outside, except that
//! the cube is the half-open box `(-1/2, 1/2]^d`, so that `lambda * R0`
//! tiles the lattice with exactly `lambda^d` sites for integer `lambda`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::lattice::IntBox;

/// Default number of boundary vertices used for polar-star distances.
pub const DEFAULT_STAR_DIRECTIONS: usize = 4096;

#[derive(Debug, Clone, PartialEq)]
pub enum PrototypeKind {
    Cube,
    Ball { radius: f64 },
    Ellipsoid { semi_axes: Vec<f64> },
    PolarStar(PolarStar),
}

/// Planar star-shaped region `{ rho u(phi) : rho < r(phi) }` with `r`
/// linearly interpolated between equally spaced direction samples.
#[derive(Debug, Clone, PartialEq)]
pub struct PolarStar {
    radial: Vec<f64>,
    vertices: Vec<[f64; 2]>,
    distance_error: f64,
}

impl PolarStar {
    fn new(radial: Vec<f64>, directions: usize) -> Result<Self> {
        if radial.len() < 3 {
            return Err(invalid("radial", "need at least 3 direction samples"));
        }
        if radial.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
            return Err(invalid("radial", "radii must be positive and finite"));
        }
        if radial.iter().any(|&r| r > 0.5) {
            return Err(invalid("radial", "radii above 1/2 leave (-1/2, 1/2]^2"));
        }
        let directions = directions.max(radial.len());
        let mut star = PolarStar {
            radial,
            vertices: Vec::new(),
            distance_error: 0.0,
        };
        let step = 2.0 * PI / directions as f64;
        star.vertices = (0..directions)
            .map(|m| {
                let phi = m as f64 * step;
                let r = star.radius_at(phi);
                [r * phi.cos(), r * phi.sin()]
            })
            .collect();
        // Deviation of the interpolated curve from the chord at each
        // segment's mid angle bounds the polyline distance error.
        let mut err: f64 = 0.0;
        for m in 0..directions {
            let phi = (m as f64 + 0.5) * step;
            let r = star.radius_at(phi);
            let p = [r * phi.cos(), r * phi.sin()];
            let a = star.vertices[m];
            let b = star.vertices[(m + 1) % directions];
            err = err.max(point_segment_distance(p, a, b));
        }
        // curvature of the sampled curve makes the mid-angle deviation a
        // slight underestimate; double it
        star.distance_error = 2.0 * err;
        Ok(star)
    }

    pub fn radial_samples(&self) -> &[f64] {
        &self.radial
    }

    /// Linear interpolation of the radial function at angle `phi`.
    pub fn radius_at(&self, phi: f64) -> f64 {
        let k = self.radial.len();
        let t = phi.rem_euclid(2.0 * PI) / (2.0 * PI) * k as f64;
        let i = (t.floor() as usize) % k;
        let frac = t - t.floor();
        let j = (i + 1) % k;
        self.radial[i] * (1.0 - frac) + self.radial[j] * frac
    }

    pub fn max_radius(&self) -> f64 {
        self.radial.iter().cloned().fold(0.0, f64::max)
    }

    /// Upper bound on the error of [`RegionPrototype::boundary_distance`].
    pub fn distance_error_bound(&self) -> f64 {
        self.distance_error
    }

    fn polyline_distance(&self, p: [f64; 2]) -> f64 {
        let n = self.vertices.len();
        let rho = (p[0] * p[0] + p[1] * p[1]).sqrt();
        let phi = p[1].atan2(p[0]);
        let r = self.radius_at(phi);
        let upper = (rho - r).abs() + self.distance_error;
        let step = 2.0 * PI / n as f64;
        let (start, count) = if rho > upper {
            let half = (upper / rho).asin() + 2.0 * step;
            let lo = ((phi - half).rem_euclid(2.0 * PI) / step).floor() as usize;
            let cnt = ((2.0 * half / step).ceil() as usize + 2).min(n);
            (lo, cnt)
        } else {
            (0, n)
        };
        let mut best = f64::INFINITY;
        for m in 0..count {
            let i = (start + m) % n;
            let a = self.vertices[i];
            let b = self.vertices[(i + 1) % n];
            best = best.min(point_segment_distance(p, a, b));
        }
        best
    }
}

fn point_segment_distance(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let ab = [b[0] - a[0], b[1] - a[1]];
    let ap = [p[0] - a[0], p[1] - a[1]];
    let len2 = ab[0] * ab[0] + ab[1] * ab[1];
    let t = if len2 > 0.0 {
        ((ap[0] * ab[0] + ap[1] * ab[1]) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let dx = ap[0] - t * ab[0];
    let dy = ap[1] - t * ab[1];
    (dx * dx + dy * dy).sqrt()
}

/// The prototype `R0` of the sampling regions.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionPrototype {
    kind: PrototypeKind,
    dim: usize,
}

impl RegionPrototype {
    pub fn cube(dim: usize) -> Result<Self> {
        check_dim(dim)?;
        Ok(Self {
            kind: PrototypeKind::Cube,
            dim,
        })
    }

    pub fn ball(dim: usize, radius: f64) -> Result<Self> {
        check_dim(dim)?;
        if !(radius > 0.0 && radius <= 0.5) {
            return Err(invalid(
                "radius",
                format!("must lie in (0, 1/2], got {radius}"),
            ));
        }
        Ok(Self {
            kind: PrototypeKind::Ball { radius },
            dim,
        })
    }

    pub fn ellipsoid(semi_axes: Vec<f64>) -> Result<Self> {
        let dim = semi_axes.len();
        check_dim(dim)?;
        if semi_axes.iter().any(|a| !(*a > 0.0 && *a <= 0.5)) {
            return Err(invalid("semi_axes", "every semi-axis must lie in (0, 1/2]"));
        }
        Ok(Self {
            kind: PrototypeKind::Ellipsoid { semi_axes },
            dim,
        })
    }

    /// Planar star region from radial samples at angles `2 pi k / K`.
    pub fn polar_star(radial: Vec<f64>, directions: usize) -> Result<Self> {
        Ok(Self {
            kind: PrototypeKind::PolarStar(PolarStar::new(radial, directions)?),
            dim: 2,
        })
    }

    /// Planar star region sampling `r(phi)` at `samples` directions.
    pub fn polar_star_from_fn(r: impl Fn(f64) -> f64, samples: usize) -> Result<Self> {
        let radial = (0..samples)
            .map(|k| r(2.0 * PI * k as f64 / samples as f64))
            .collect();
        Self::polar_star(radial, DEFAULT_STAR_DIRECTIONS)
    }

    pub fn kind(&self) -> &PrototypeKind {
        &self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn name(&self) -> &'static str {
        match self.kind {
            PrototypeKind::Cube => "cube",
            PrototypeKind::Ball { .. } => "ball",
            PrototypeKind::Ellipsoid { .. } => "ellipsoid",
            PrototypeKind::PolarStar(_) => "polar-star",
        }
    }

    fn check(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        Ok(())
    }

    /// Whether `x` lies in `R0`.
    pub fn membership(&self, x: &[f64]) -> Result<bool> {
        self.check(x)?;
        Ok(self.contains(x))
    }

    pub(crate) fn contains(&self, x: &[f64]) -> bool {
        match &self.kind {
            PrototypeKind::Cube => x.iter().all(|&v| v > -0.5 && v <= 0.5),
            PrototypeKind::Ball { radius } => {
                x.iter().map(|v| v * v).sum::<f64>() < radius * radius
            }
            PrototypeKind::Ellipsoid { semi_axes } => {
                x.iter()
                    .zip(semi_axes)
                    .map(|(v, a)| (v / a) * (v / a))
                    .sum::<f64>()
                    < 1.0
            }
            PrototypeKind::PolarStar(star) => {
                let rho2 = x[0] * x[0] + x[1] * x[1];
                if rho2 == 0.0 {
                    return true;
                }
                let r = star.radius_at(x[1].atan2(x[0]));
                rho2 < r * r
            }
        }
    }

    /// Euclidean distance from `x` to the boundary of `R0`.
    ///
    /// Exact for cube, ball and ellipsoid. For the polar star the distance to
    /// a dense polyline is reduced by its error bound, so the result never
    /// exceeds the true distance.
    pub fn boundary_distance(&self, x: &[f64]) -> Result<f64> {
        self.check(x)?;
        Ok(self.distance(x))
    }

    pub(crate) fn distance(&self, x: &[f64]) -> f64 {
        match &self.kind {
            PrototypeKind::Cube => {
                if x.iter().all(|v| v.abs() < 0.5) {
                    x.iter()
                        .map(|v| 0.5 - v.abs())
                        .fold(f64::INFINITY, f64::min)
                } else {
                    x.iter()
                        .map(|v| (v.abs() - 0.5).max(0.0).powi(2))
                        .sum::<f64>()
                        .sqrt()
                }
            }
            PrototypeKind::Ball { radius } => {
                (radius - x.iter().map(|v| v * v).sum::<f64>().sqrt()).abs()
            }
            PrototypeKind::Ellipsoid { semi_axes } => ellipsoid_distance(semi_axes, x),
            PrototypeKind::PolarStar(star) => {
                (star.polyline_distance([x[0], x[1]]) - star.distance_error).max(0.0)
            }
        }
    }

    /// Distance from the origin to the boundary along the unit vector `u`.
    pub fn radial(&self, u: &[f64]) -> f64 {
        match &self.kind {
            PrototypeKind::Cube => 0.5 / u.iter().map(|v| v.abs()).fold(0.0, f64::max),
            PrototypeKind::Ball { radius } => *radius,
            PrototypeKind::Ellipsoid { semi_axes } => {
                1.0 / u
                    .iter()
                    .zip(semi_axes)
                    .map(|(v, a)| (v / a) * (v / a))
                    .sum::<f64>()
                    .sqrt()
            }
            PrototypeKind::PolarStar(star) => star.radius_at(u[1].atan2(u[0])),
        }
    }

    /// Radius of the smallest origin-centred ball containing `R0`.
    pub fn bounding_radius(&self) -> f64 {
        match &self.kind {
            PrototypeKind::Cube => 0.5 * (self.dim as f64).sqrt(),
            PrototypeKind::Ball { radius } => *radius,
            PrototypeKind::Ellipsoid { semi_axes } => semi_axes.iter().cloned().fold(0.0, f64::max),
            PrototypeKind::PolarStar(star) => star.max_radius(),
        }
    }

    /// Half-widths of an origin-centred box containing the closure of `R0`.
    pub fn half_widths(&self) -> Vec<f64> {
        match &self.kind {
            PrototypeKind::Cube => vec![0.5; self.dim],
            PrototypeKind::Ball { radius } => vec![*radius; self.dim],
            PrototypeKind::Ellipsoid { semi_axes } => semi_axes.clone(),
            PrototypeKind::PolarStar(star) => vec![star.max_radius(); 2],
        }
    }

    /// Lebesgue measure of `R0`.
    pub fn volume(&self) -> f64 {
        match &self.kind {
            PrototypeKind::Cube => 1.0,
            PrototypeKind::Ball { radius } => {
                crate::special::unit_ball_volume(self.dim) * radius.powi(self.dim as i32)
            }
            PrototypeKind::Ellipsoid { semi_axes } => {
                crate::special::unit_ball_volume(self.dim) * semi_axes.iter().product::<f64>()
            }
            PrototypeKind::PolarStar(star) => {
                // area = 1/2 int r(phi)^2 dphi; r is piecewise linear
                let k = star.radial.len();
                let h = 2.0 * PI / k as f64;
                (0..k)
                    .map(|i| {
                        let a = star.radial[i];
                        let b = star.radial[(i + 1) % k];
                        0.5 * h * (a * a + a * b + b * b) / 3.0
                    })
                    .sum()
            }
        }
    }

    /// Intervals of `s >= 0` with `x + s u` in `R0`, sorted and disjoint.
    pub fn ray_segments(&self, x: &[f64], u: &[f64]) -> Vec<(f64, f64)> {
        let quadratic = |a: f64, b: f64, c: f64| -> Vec<(f64, f64)> {
            // a s^2 + 2 b s + c < 0
            let disc = b * b - a * c;
            if disc <= 0.0 {
                return vec![];
            }
            let sq = disc.sqrt();
            // stable roots
            let q = -(b + b.signum() * sq);
            let (mut r1, mut r2) = if q != 0.0 {
                (q / a, c / q)
            } else {
                (-sq / a, sq / a)
            };
            if r1 > r2 {
                std::mem::swap(&mut r1, &mut r2);
            }
            let lo = r1.max(0.0);
            if r2 > lo {
                vec![(lo, r2)]
            } else {
                vec![]
            }
        };
        match &self.kind {
            PrototypeKind::Cube => {
                let mut t0 = 0.0f64;
                let mut t1 = f64::INFINITY;
                for k in 0..self.dim {
                    if u[k] == 0.0 {
                        if x[k].abs() >= 0.5 {
                            return vec![];
                        }
                        continue;
                    }
                    let a = (-0.5 - x[k]) / u[k];
                    let b = (0.5 - x[k]) / u[k];
                    t0 = t0.max(a.min(b));
                    t1 = t1.min(a.max(b));
                }
                if t1 > t0 {
                    vec![(t0, t1)]
                } else {
                    vec![]
                }
            }
            PrototypeKind::Ball { radius } => {
                let b: f64 = x.iter().zip(u).map(|(p, v)| p * v).sum();
                let c = x.iter().map(|p| p * p).sum::<f64>() - radius * radius;
                let a = u.iter().map(|v| v * v).sum::<f64>();
                quadratic(a, b, c)
            }
            PrototypeKind::Ellipsoid { semi_axes } => {
                let mut a = 0.0;
                let mut b = 0.0;
                let mut c = -1.0;
                for k in 0..self.dim {
                    let p = x[k] / semi_axes[k];
                    let v = u[k] / semi_axes[k];
                    a += v * v;
                    b += p * v;
                    c += p * p;
                }
                quadratic(a, b, c)
            }
            PrototypeKind::PolarStar(star) => star_ray_segments(self, star, x, u),
        }
    }

    /// Lattice sites of `lambda * R0`.
    pub fn enumerate_sites(&self, lambda: f64) -> Result<SiteSet> {
        if !(lambda >= 1.0) || !lambda.is_finite() {
            return Err(Error::LambdaTooSmall(lambda));
        }
        let hw = self.half_widths();
        let lo: Vec<i64> = hw
            .iter()
            .map(|h| (-h * lambda).floor() as i64 - 1)
            .collect();
        let hi: Vec<i64> = hw.iter().map(|h| (h * lambda).ceil() as i64 + 1).collect();
        let scan = IntBox::new(lo, hi)?;
        let mut sites = Vec::new();
        let mut x = vec![0.0; self.dim];
        scan.for_each(|_, p| {
            for k in 0..p.len() {
                x[k] = p[k] as f64 / lambda;
            }
            if self.contains(&x) {
                sites.extend_from_slice(p);
            }
        });
        Ok(SiteSet::from_flat(self.dim, sites)?.with_lambda(lambda))
    }

    /// Splits `window` into interior, exterior and boundary-shell sites of
    /// `lambda * R0` at shell half-width `t_n`.
    pub fn classify_sites(
        &self,
        lambda: f64,
        t_n: f64,
        window: &IntBox,
    ) -> Result<BoundaryClassification> {
        if window.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: window.dim(),
            });
        }
        if !(lambda >= 1.0) {
            return Err(Error::LambdaTooSmall(lambda));
        }
        if !(t_n > 0.0 && t_n < lambda) {
            return Err(invalid(
                "t_n",
                format!("need 0 < t_n < lambda, got t_n = {t_n}, lambda = {lambda}"),
            ));
        }
        let hw = self.half_widths();
        for k in 0..self.dim {
            let need_lo = (-hw[k] * lambda - t_n).floor() as i64;
            let need_hi = (hw[k] * lambda + t_n).ceil() as i64;
            if window.lo[k] > need_lo || window.hi[k] < need_hi {
                return Err(Error::WindowTooSmall(format!(
                    "axis {k}: window {window} does not cover [{need_lo}, {need_hi}]"
                )));
            }
        }
        let mut labels = Vec::with_capacity(window.len());
        let mut x = vec![0.0; self.dim];
        window.for_each(|_, p| {
            for k in 0..p.len() {
                x[k] = p[k] as f64 / lambda;
            }
            let inside = self.contains(&x);
            let dist = lambda * self.distance(&x);
            labels.push(if dist > t_n {
                if inside {
                    SiteClass::Interior
                } else {
                    SiteClass::Exterior
                }
            } else {
                SiteClass::Boundary
            });
        });
        Ok(BoundaryClassification {
            t_n,
            lambda,
            window: window.clone(),
            labels,
        })
    }

    /// Grid estimate of the measure of the `epsilon`-enlargement of the
    /// boundary, with an error bound from cells whose classification is
    /// ambiguous at grid resolution.
    pub fn enlargement_measure(&self, epsilon: f64, cells_per_axis: usize) -> Result<Estimate> {
        if !(epsilon > 0.0 && epsilon < 0.25) {
            return Err(invalid("epsilon", "must lie in (0, 1/4)"));
        }
        self.shell_integral(epsilon, cells_per_axis, |_| 1.0)
    }

    /// Ratio `int_{shell} f(d(x)) dx / int_0^eps f(t) dt` for
    /// `f(t) = t^{-b}`, `0 <= b < 1`; bounded ratios as `eps -> 0` are the
    /// empirical signature of the boundary regularity condition.
    pub fn boundary_regularity_ratio(
        &self,
        b: f64,
        epsilon: f64,
        cells_per_axis: usize,
    ) -> Result<Estimate> {
        if !(0.0..1.0).contains(&b) {
            return Err(invalid("b", "must lie in [0, 1)"));
        }
        if !(epsilon > 0.0 && epsilon < 0.25) {
            return Err(invalid("epsilon", "must lie in (0, 1/4)"));
        }
        let denom = epsilon.powf(1.0 - b) / (1.0 - b);
        let e = self.shell_integral(epsilon, cells_per_axis, |t| t.max(1e-300).powf(-b))?;
        Ok(Estimate {
            value: e.value / denom,
            error: e.error / denom,
        })
    }

    fn shell_integral(
        &self,
        epsilon: f64,
        cells_per_axis: usize,
        f: impl Fn(f64) -> f64,
    ) -> Result<Estimate> {
        let n = cells_per_axis.max(8);
        let hw: Vec<f64> = self.half_widths().iter().map(|h| h + epsilon).collect();
        let steps: Vec<f64> = hw.iter().map(|h| 2.0 * h / n as f64).collect();
        let cell_vol: f64 = steps.iter().product();
        let diag = 0.5 * steps.iter().map(|s| s * s).sum::<f64>().sqrt();
        let grid = IntBox::symmetric(self.dim, 0);
        let grid = IntBox::new(vec![0; grid.dim()], vec![n as i64 - 1; grid.dim()])?;
        let mut acc = crate::special::CompensatedSum::new();
        let mut ambiguous = 0usize;
        let mut fmax_amb: f64 = 0.0;
        let mut x = vec![0.0; self.dim];
        grid.for_each(|_, p| {
            for k in 0..p.len() {
                x[k] = -hw[k] + (p[k] as f64 + 0.5) * steps[k];
            }
            let d = self.distance(&x);
            if d <= epsilon {
                acc.add(f(d) * cell_vol);
            }
            if (d - epsilon).abs() <= diag {
                ambiguous += 1;
                fmax_amb = fmax_amb.max(f(epsilon));
            }
        });
        Ok(Estimate {
            value: acc.value(),
            error: ambiguous as f64 * cell_vol * fmax_amb.max(1.0),
        })
    }
}

fn check_dim(dim: usize) -> Result<()> {
    if dim == 0 {
        return Err(invalid("dim", "dimension must be positive"));
    }
    Ok(())
}

fn star_ray_segments(
    proto: &RegionPrototype,
    star: &PolarStar,
    x: &[f64],
    u: &[f64],
) -> Vec<(f64, f64)> {
    // restrict to the bounding disc, then locate sign changes of membership
    let rmax = star.max_radius() * (1.0 + 1e-12);
    let b = x[0] * u[0] + x[1] * u[1];
    let c = x[0] * x[0] + x[1] * x[1] - rmax * rmax;
    let disc = b * b - c;
    if disc <= 0.0 {
        return vec![];
    }
    let s_lo = (-b - disc.sqrt()).max(0.0);
    let s_hi = -b + disc.sqrt();
    if s_hi <= s_lo {
        return vec![];
    }
    const SAMPLES: usize = 512;
    let inside = |s: f64| proto.contains(&[x[0] + s * u[0], x[1] + s * u[1]]);
    let refine = |mut a: f64, mut bb: f64, a_in: bool| -> f64 {
        for _ in 0..60 {
            let m = 0.5 * (a + bb);
            if inside(m) == a_in {
                a = m;
            } else {
                bb = m;
            }
        }
        0.5 * (a + bb)
    };
    let h = (s_hi - s_lo) / SAMPLES as f64;
    let mut segs = Vec::new();
    let mut prev_s = s_lo;
    let mut prev_in = inside(s_lo);
    let mut open = if prev_in { Some(s_lo) } else { None };
    for m in 1..=SAMPLES {
        let s = s_lo + m as f64 * h;
        let now = inside(s);
        if now != prev_in {
            let cross = refine(prev_s, s, prev_in);
            if now {
                open = Some(cross);
            } else if let Some(a) = open.take() {
                segs.push((a, cross));
            }
        }
        prev_s = s;
        prev_in = now;
    }
    if let Some(a) = open {
        segs.push((a, s_hi));
    }
    segs
}

/// Distance from `y` to the surface `sum (x_k / a_k)^2 = 1`.
fn ellipsoid_distance(axes: &[f64], y: &[f64]) -> f64 {
    let e: Vec<f64> = axes.to_vec();
    let z: Vec<f64> = y.iter().map(|v| v.abs()).collect();
    ellipsoid_distance_abs(&e, &z)
}

fn ellipsoid_distance_abs(e: &[f64], z: &[f64]) -> f64 {
    let n = e.len();
    if n == 1 {
        return (e[0] - z[0]).abs();
    }
    let e_min = e.iter().cloned().fold(f64::INFINITY, f64::min);
    let ties: Vec<usize> = (0..n).filter(|&k| e[k] == e_min).collect();
    let tie_zero = ties.iter().all(|&k| z[k] == 0.0);
    if tie_zero {
        // the nearest point may leave the coordinate plane of the shortest axis
        let mut s = 0.0;
        let mut d2 = 0.0;
        let mut ok = true;
        for k in 0..n {
            if ties.contains(&k) {
                continue;
            }
            let denom = e[k] * e[k] - e_min * e_min;
            let xk = e[k] * e[k] * z[k] / denom;
            if !xk.is_finite() {
                ok = false;
                break;
            }
            s += (xk / e[k]).powi(2);
            d2 += (xk - z[k]).powi(2);
        }
        if ok && s < 1.0 {
            return (d2 + e_min * e_min * (1.0 - s)).sqrt();
        }
        // otherwise the nearest point lies in the plane z_ties = 0
        let keep: Vec<usize> = (0..n).filter(|k| !ties.contains(k)).collect();
        if keep.is_empty() {
            return e_min;
        }
        let ee: Vec<f64> = keep.iter().map(|&k| e[k]).collect();
        let zz: Vec<f64> = keep.iter().map(|&k| z[k]).collect();
        return ellipsoid_distance_abs(&ee, &zz);
    }
    // root of F(t) = sum (e_k z_k / (t + e_k^2))^2 - 1 on (-e_m^2, inf),
    // where e_m is the shortest axis with non-zero coordinate
    let active: Vec<usize> = (0..n).filter(|&k| z[k] > 0.0).collect();
    let m = *active
        .iter()
        .min_by(|&&a, &&b| e[a].total_cmp(&e[b]))
        .expect("some coordinate is non-zero");
    let f = |t: f64| -> f64 {
        active
            .iter()
            .map(|&k| (e[k] * z[k] / (t + e[k] * e[k])).powi(2))
            .sum::<f64>()
            - 1.0
    };
    let mut lo = -e[m] * e[m] + e[m] * z[m];
    let norm = active
        .iter()
        .map(|&k| (e[k] * z[k]).powi(2))
        .sum::<f64>()
        .sqrt();
    let mut hi = -e[m] * e[m] + norm;
    if f(lo) < 0.0 {
        lo = -e[m] * e[m];
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let t = 0.5 * (lo + hi);
    let mut d2 = 0.0;
    for k in 0..n {
        let xk = if z[k] > 0.0 {
            e[k] * e[k] * z[k] / (t + e[k] * e[k])
        } else {
            0.0
        };
        d2 += (xk - z[k]).powi(2);
    }
    d2.sqrt()
}

/// Scalar estimate with an error bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
}

/// `R_n = lambda * R0`.
#[derive(Debug, Clone, PartialEq)]
pub struct InflatedRegion {
    pub prototype: RegionPrototype,
    pub lambda: f64,
}

impl InflatedRegion {
    pub fn new(prototype: RegionPrototype, lambda: f64) -> Result<Self> {
        if !(lambda > 0.0) {
            return Err(invalid("lambda", "must be positive"));
        }
        Ok(Self { prototype, lambda })
    }

    pub fn membership(&self, x: &[f64]) -> Result<bool> {
        let scaled: Vec<f64> = x.iter().map(|v| v / self.lambda).collect();
        self.prototype.membership(&scaled)
    }

    pub fn sites(&self) -> Result<SiteSet> {
        self.prototype.enumerate_sites(self.lambda)
    }
}

/// Lattice sites in lexicographic order, stored flat.
#[derive(Debug, Clone, PartialEq)]
pub struct SiteSet {
    dim: usize,
    sites: Vec<i64>,
    bounding_window: IntBox,
    lambda: Option<f64>,
}

impl SiteSet {
    /// Builds a site set from flat coordinates; sites are sorted and
    /// deduplicated.
    pub fn from_flat(dim: usize, flat: Vec<i64>) -> Result<Self> {
        if dim == 0 || flat.len() % dim != 0 {
            return Err(invalid(
                "sites",
                "coordinate count is not a multiple of the dimension",
            ));
        }
        let mut rows: Vec<&[i64]> = flat.chunks(dim).collect();
        let sorted = rows.windows(2).all(|w| w[0] < w[1]);
        let flat = if sorted {
            flat.clone()
        } else {
            rows.sort();
            rows.dedup();
            rows.concat()
        };
        let bounding_window = if flat.is_empty() {
            IntBox::symmetric(dim, 0)
        } else {
            let mut lo = vec![i64::MAX; dim];
            let mut hi = vec![i64::MIN; dim];
            for s in flat.chunks(dim) {
                for k in 0..dim {
                    lo[k] = lo[k].min(s[k]);
                    hi[k] = hi[k].max(s[k]);
                }
            }
            IntBox::new(lo, hi)?
        };
        Ok(Self {
            dim,
            sites: flat,
            bounding_window,
            lambda: None,
        })
    }

    pub fn from_points(dim: usize, points: &[Vec<i64>]) -> Result<Self> {
        if let Some(p) = points.iter().find(|p| p.len() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: p.len(),
            });
        }
        Self::from_flat(dim, points.concat())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Inflation factor the sites were enumerated at, if known.
    pub fn lambda(&self) -> Option<f64> {
        self.lambda
    }

    pub fn with_lambda(mut self, lambda: f64) -> Self {
        self.lambda = Some(lambda);
        self
    }

    /// Largest Euclidean norm of a site.
    pub fn max_norm(&self) -> f64 {
        self.iter()
            .map(|s| s.iter().map(|&v| (v * v) as f64).sum::<f64>().sqrt())
            .fold(0.0, f64::max)
    }

    /// `N_n`.
    pub fn count(&self) -> usize {
        self.sites.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    pub fn bounding_window(&self) -> &IntBox {
        &self.bounding_window
    }

    pub fn iter(&self) -> impl Iterator<Item = &[i64]> + '_ {
        self.sites.chunks(self.dim)
    }

    pub fn flat(&self) -> &[i64] {
        &self.sites
    }

    pub fn translate(&self, v: &[i64]) -> Self {
        let flat = self
            .sites
            .chunks(self.dim)
            .flat_map(|s| s.iter().zip(v).map(|(a, b)| a + b).collect::<Vec<_>>())
            .collect();
        let mut out = Self::from_flat(self.dim, flat).expect("translation preserves shape");
        out.lambda = self.lambda;
        out
    }

    /// CSV with header `i1,...,id` and one site per row.
    pub fn to_csv(&self) -> String {
        let mut out = (1..=self.dim)
            .map(|k| format!("i{k}"))
            .collect::<Vec<_>>()
            .join(",");
        out.push('\n');
        for s in self.iter() {
            out.push_str(
                &s.iter()
                    .map(|v| v.to_string())
                    .collect::<Vec<_>>()
                    .join(","),
            );
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SiteClass {
    Interior,
    Exterior,
    Boundary,
}

/// Partition of a window into interior, exterior and boundary-shell sites.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryClassification {
    pub t_n: f64,
    pub lambda: f64,
    pub window: IntBox,
    labels: Vec<SiteClass>,
}

impl BoundaryClassification {
    pub fn labels(&self) -> &[SiteClass] {
        &self.labels
    }

    pub fn label(&self, p: &[i64]) -> Option<SiteClass> {
        self.window
            .contains(p)
            .then(|| self.labels[self.window.offset(p)])
    }

    pub fn count(&self, class: SiteClass) -> usize {
        self.labels.iter().filter(|&&c| c == class).count()
    }

    pub fn sites(&self, class: SiteClass) -> Vec<Vec<i64>> {
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, &c)| c == class)
            .map(|(off, _)| self.window.point(off))
            .collect()
    }

    pub fn interior_sites(&self) -> Vec<Vec<i64>> {
        self.sites(SiteClass::Interior)
    }

    pub fn exterior_window_sites(&self) -> Vec<Vec<i64>> {
        self.sites(SiteClass::Exterior)
    }

    pub fn boundary_sites(&self) -> Vec<Vec<i64>> {
        self.sites(SiteClass::Boundary)
    }
}

/// Shell half-width rule for the boundary decomposition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ShellRule {
    /// `max(2, floor(log lambda))`
    #[default]
    Log,
    /// `max(2, floor(sqrt lambda))`
    Sqrt,
    Fixed(f64),
}

impl ShellRule {
    pub fn t_n(&self, lambda: f64) -> f64 {
        match *self {
            ShellRule::Log => lambda.ln().floor().max(2.0),
            ShellRule::Sqrt => lambda.sqrt().floor().max(2.0),
            ShellRule::Fixed(v) => v,
        }
    }
}
