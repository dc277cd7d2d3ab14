//! Special functions and summation helpers used across the crate.

use std::f64::consts::PI;

use statrs::function::gamma::gamma;

use crate::quadrature::{integrate, QuadOptions};

/// Neumaier-compensated running sum.
///
/// Addition order is the caller's; the result is deterministic for a fixed
/// order.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

impl std::iter::FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = CompensatedSum::new();
        for x in iter {
            s.add(x);
        }
        s
    }
}

pub fn compensated_sum<I: IntoIterator<Item = f64>>(iter: I) -> f64 {
    iter.into_iter().collect::<CompensatedSum>().value()
}

/// Seed of the `k`-th independent stream derived from `base` (SplitMix64).
pub fn stream_seed(base: u64, k: u64) -> u64 {
    let mut z = base.wrapping_add(k.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Surface area of the unit sphere in R^d.
pub fn unit_sphere_area(dim: usize) -> f64 {
    let h = dim as f64 / 2.0;
    2.0 * PI.powf(h) / gamma(h)
}

/// Volume of the unit ball in R^d.
pub fn unit_ball_volume(dim: usize) -> f64 {
    unit_sphere_area(dim) / dim as f64
}

// B_{2k} / (2k)! for k = 1..=8.
const BERNOULLI_OVER_FACTORIAL: [f64; 8] = [
    1.0 / 12.0,
    -1.0 / 720.0,
    1.0 / 30240.0,
    -1.0 / 1209600.0,
    1.0 / 47900160.0,
    -691.0 / 1307674368000.0,
    1.0 / 74724249600.0,
    -3617.0 / 10670622842880000.0,
];

/// Hurwitz zeta `sum_{j >= 0} (q + j)^{-s}` for `s > 1`, `q > 0`.
///
/// Direct summation up to a shift of 16 followed by an Euler-Maclaurin
/// tail; accurate to roughly machine precision for the exponents used here.
pub fn hurwitz_zeta(s: f64, q: f64) -> f64 {
    assert!(s > 1.0 && q > 0.0, "hurwitz_zeta requires s > 1, q > 0");
    const SHIFT: usize = 16;
    let mut head = CompensatedSum::new();
    let mut a = q;
    let mut n = 0;
    while n < SHIFT || a < 16.0 {
        head.add(a.powf(-s));
        a += 1.0;
        n += 1;
    }
    // Euler-Maclaurin for sum_{j>=0} f(a + j), f(x) = x^{-s}.
    let mut tail = a.powf(1.0 - s) / (s - 1.0) + 0.5 * a.powf(-s);
    // f^{(2k-1)}(a) = -s(s+1)...(s+2k-2) a^{-s-2k+1}
    let mut rising = s; // s (s+1) ... (s + 2k - 2)
    let mut pow = a.powf(-s - 1.0);
    for (k, c) in BERNOULLI_OVER_FACTORIAL.iter().enumerate() {
        // sum_{j>=0} f(a+j) = int_a^inf f + f(a)/2 - sum_k B_2k/(2k)! f^{(2k-1)}(a)
        tail += c * rising * pow;
        let m = 2.0 * k as f64;
        rising *= (s + m + 1.0) * (s + m + 2.0);
        pow /= a * a;
    }
    head.value() + tail
}

/// Riemann zeta for `s > 1`.
pub fn zeta(s: f64) -> f64 {
    hurwitz_zeta(s, 1.0)
}

/// Modified Bessel function of the second kind `K_nu(x)` for real order and
/// `x > 0`, from `K_nu(x) = int_0^inf exp(-x cosh t) cosh(nu t) dt`.
pub fn bessel_k(nu: f64, x: f64) -> f64 {
    assert!(x > 0.0, "bessel_k requires x > 0");
    // exp(-x cosh t) < 1e-300 beyond this point.
    let upper = (700.0 / x).max(1.0).acosh() + 1.0;
    let opts = QuadOptions {
        rel_tol: 1e-13,
        abs_tol: 0.0,
        max_intervals: 4000,
    };
    let r = integrate(
        |t| (-x * t.cosh()).exp() * (nu * t).cosh(),
        0.0,
        upper,
        &opts,
    );
    r.value
}

/// Exact lattice sum `sum_{i in Z^d} (1 + |i|^2)^{-beta/2}` for `beta > d`,
/// by Poisson summation.
///
/// The Fourier transform of `(1 + |x|^2)^{-nu}` is
/// `2 pi^nu / Gamma(nu) |xi|^{nu - d/2} K_{nu - d/2}(2 pi |xi|)`, which
/// decays like `exp(-2 pi |xi|)`; frequencies with `|k|_inf <= 8` suffice.
pub fn smooth_power_lattice_sum(beta: f64, dim: usize) -> f64 {
    assert!(beta > dim as f64, "lattice sum diverges for beta <= d");
    let nu = beta / 2.0;
    let h = dim as f64 / 2.0;
    let zero_term = PI.powf(h) * gamma(nu - h) / gamma(nu);
    let prefactor = 2.0 * PI.powf(nu) / gamma(nu);
    const K: i64 = 8;
    // group frequencies by squared norm
    let mut counts: std::collections::BTreeMap<i64, u64> = Default::default();
    let side = (2 * K + 1) as usize;
    let total = side.pow(dim as u32);
    let mut k = vec![0i64; dim];
    for mut idx in 0..total {
        let mut n2 = 0;
        for c in k.iter_mut() {
            *c = (idx % side) as i64 - K;
            idx /= side;
            n2 += *c * *c;
        }
        if n2 > 0 {
            *counts.entry(n2).or_default() += 1;
        }
    }
    let mut acc = CompensatedSum::new();
    // smallest terms first
    for (n2, c) in counts.iter().rev() {
        let r = (*n2 as f64).sqrt();
        acc.add(*c as f64 * prefactor * r.powf(nu - h) * bessel_k(nu - h, 2.0 * PI * r));
    }
    acc.add(zero_term);
    acc.value()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zeta_values() {
        assert!((zeta(2.0) - PI * PI / 6.0).abs() < 1e-14);
        assert!((zeta(3.0) - 1.202_056_903_159_594_3).abs() < 1e-14);
        assert!((zeta(4.0) - PI.powi(4) / 90.0).abs() < 1e-14);
    }

    #[test]
    fn hurwitz_matches_shifted_zeta() {
        // zeta(s, 3) = zeta(s) - 1 - 2^{-s}
        for s in [1.5, 2.5, 3.0, 6.0] {
            let lhs = hurwitz_zeta(s, 3.0);
            let rhs = zeta(s) - 1.0 - 2f64.powf(-s);
            assert!((lhs - rhs).abs() < 1e-13 * rhs.abs().max(1.0), "s={s}");
        }
    }

    #[test]
    fn bessel_k_half_order_closed_form() {
        // K_{1/2}(x) = sqrt(pi / (2x)) e^{-x}
        for x in [0.1, 1.0, 3.0, 10.0] {
            let exact = (PI / (2.0 * x)).sqrt() * (-x).exp();
            let got = bessel_k(0.5, x);
            assert!((got - exact).abs() < 1e-12 * exact, "x={x}");
        }
        // K_0(1) reference value
        assert!((bessel_k(0.0, 1.0) - 0.421_024_438_240_708_3).abs() < 1e-13);
    }

    #[test]
    fn compensated_sum_recovers_cancellation() {
        let xs = [1e16, 1.0, -1e16, 1.0];
        assert_eq!(compensated_sum(xs), 2.0);
    }

    #[test]
    fn sphere_constants() {
        assert!((unit_sphere_area(2) - 2.0 * PI).abs() < 1e-14);
        assert!((unit_sphere_area(3) - 4.0 * PI).abs() < 1e-13);
        assert!((unit_sphere_area(1) - 2.0).abs() < 1e-14);
        assert!((unit_ball_volume(2) - PI).abs() < 1e-14);
    }

    #[test]
    fn smooth_lattice_sum_d1_against_direct() {
        // d = 1, beta = 4: sum (1 + i^2)^{-2} = (pi coth(pi) + pi^2 csch^2(pi)) / 2 ... checked by brute force
        let exact = smooth_power_lattice_sum(4.0, 1);
        let mut direct = CompensatedSum::new();
        for i in -200_000i64..=200_000 {
            direct.add((1.0 + (i * i) as f64).powi(-2));
        }
        // tail beyond 2e5 is ~ 2 / (3 * 8e15)
        assert!(
            (exact - direct.value()).abs() < 1e-12,
            "{exact} vs {}",
            direct.value()
        );
    }

    #[test]
    fn smooth_lattice_sum_d2_against_direct_plus_tail() {
        // beta = 4 in d = 2: truncated square sum plus the integral of the
        // far field outside the square [-R-1/2, R+1/2]^2.
        let beta = 4.0;
        let exact = smooth_power_lattice_sum(beta, 2);
        let r = 400i64;
        let mut direct = CompensatedSum::new();
        for i in -r..=r {
            for j in -r..=r {
                direct.add((1.0 + (i * i + j * j) as f64).powf(-beta / 2.0));
            }
        }
        // outside a square of half width a: int r^{-beta} = 4 a^{2-beta}/(beta-2) int_{-pi/4}^{pi/4} cos^{beta-2}
        let a = r as f64 + 0.5;
        let ang = integrate(
            |t: f64| t.cos().powf(beta - 2.0),
            -PI / 4.0,
            PI / 4.0,
            &QuadOptions::default(),
        )
        .value;
        let tail = 4.0 * a.powf(2.0 - beta) / (beta - 2.0) * ang;
        let approx = direct.value() + tail;
        assert!((exact - approx).abs() < 1e-8, "{exact} vs {approx}");
    }
}
