//! Globally adaptive Gauss-Kronrod (10/21 point) quadrature.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

#[allow(clippy::excessive_precision)]
const XGK: [f64; 11] = [
    0.995_657_163_025_808_080_735_527_280_689_003,
    0.973_906_528_517_171_720_077_964_012_084_452,
    0.930_157_491_355_708_226_001_207_180_059_508,
    0.865_063_366_688_984_510_732_096_688_423_493,
    0.780_817_726_586_416_897_063_717_578_345_042,
    0.679_409_568_299_024_406_234_327_365_114_874,
    0.562_757_134_668_604_683_339_000_099_272_694,
    0.433_395_394_129_247_190_799_265_943_165_784,
    0.294_392_862_701_460_198_131_126_603_103_866,
    0.148_874_338_981_631_210_884_826_001_129_720,
    0.0,
];

#[allow(clippy::excessive_precision)]
const WG: [f64; 5] = [
    0.066_671_344_308_688_137_593_568_809_893_332,
    0.149_451_349_150_580_593_145_776_339_657_697,
    0.219_086_362_515_982_043_995_534_934_228_163,
    0.269_266_719_309_996_355_091_226_921_569_469,
    0.295_524_224_714_752_870_173_892_994_651_338,
];

#[allow(clippy::excessive_precision)]
const WGK: [f64; 11] = [
    0.011_694_638_867_371_874_278_064_396_062_192,
    0.032_558_162_307_964_727_478_818_972_459_390,
    0.054_755_896_574_351_996_031_381_300_244_580,
    0.075_039_674_810_919_952_767_043_140_916_190,
    0.093_125_454_583_697_605_535_065_465_083_366,
    0.109_387_158_802_297_641_899_210_590_325_805,
    0.123_491_976_262_065_851_077_958_109_831_074,
    0.134_709_217_311_473_325_928_054_001_771_707,
    0.142_775_938_577_060_080_797_094_273_138_717,
    0.147_739_104_901_338_491_374_841_515_972_068,
    0.149_445_554_002_916_905_664_936_468_389_821,
];

#[derive(Debug, Clone, Copy)]
pub struct QuadOptions {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_intervals: usize,
}

impl Default for QuadOptions {
    fn default() -> Self {
        Self {
            rel_tol: 1e-10,
            abs_tol: 1e-14,
            max_intervals: 2000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadResult {
    pub value: f64,
    pub error: f64,
    pub evaluations: usize,
    pub converged: bool,
}

fn gk21(f: &mut impl FnMut(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = fc * WGK[10];
    let mut gauss = 0.0;
    let mut abs_k = kronrod.abs();
    let mut fv1 = [0.0; 10];
    let mut fv2 = [0.0; 10];
    for j in 0..10 {
        let x = h * XGK[j];
        let f1 = f(c - x);
        let f2 = f(c + x);
        fv1[j] = f1;
        fv2[j] = f2;
        kronrod += WGK[j] * (f1 + f2);
        abs_k += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            gauss += WG[j / 2] * (f1 + f2);
        }
    }
    let mean = 0.5 * kronrod;
    let mut asc = WGK[10] * (fc - mean).abs();
    for j in 0..10 {
        asc += WGK[j] * ((fv1[j] - mean).abs() + (fv2[j] - mean).abs());
    }
    let value = kronrod * h;
    let asc = asc * h.abs();
    let abs_k = abs_k * h.abs();
    let mut err = ((kronrod - gauss) * h).abs();
    if asc != 0.0 && err != 0.0 {
        err = asc * (200.0 * err / asc).powf(1.5).min(1.0);
    }
    let round = 50.0 * f64::EPSILON * abs_k;
    if abs_k > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) && round > err {
        err = round;
    }
    (value, err)
}

struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

/// Integrates `f` over `[a, b]`, bisecting the worst interval until the
/// summed error estimate meets the tolerance.
pub fn integrate(f: impl FnMut(f64) -> f64, a: f64, b: f64, opts: &QuadOptions) -> QuadResult {
    integrate_breakpoints(f, &[a, b], opts)
}

/// Like [`integrate`], but starts from the given breakpoints so that known
/// kinks or singular points sit on interval ends.
pub fn integrate_breakpoints(
    mut f: impl FnMut(f64) -> f64,
    points: &[f64],
    opts: &QuadOptions,
) -> QuadResult {
    assert!(points.len() >= 2);
    let mut heap = BinaryHeap::new();
    let mut evals = 0;
    for w in points.windows(2) {
        if w[1] == w[0] {
            continue;
        }
        let (v, e) = gk21(&mut f, w[0], w[1]);
        evals += 21;
        heap.push(Segment {
            a: w[0],
            b: w[1],
            value: v,
            error: e,
        });
    }
    let total = |h: &BinaryHeap<Segment>| -> (f64, f64) {
        let mut v = crate::special::CompensatedSum::new();
        let mut e = 0.0;
        for s in h.iter() {
            v.add(s.value);
            e += s.error;
        }
        (v.value(), e)
    };
    let (mut value, mut error) = total(&heap);
    let mut converged = error <= opts.abs_tol.max(opts.rel_tol * value.abs());
    while !converged && heap.len() < opts.max_intervals {
        let worst = heap.pop().expect("non-empty heap");
        let mid = 0.5 * (worst.a + worst.b);
        if !(mid > worst.a.min(worst.b) && mid < worst.a.max(worst.b)) {
            // interval exhausted at machine resolution
            heap.push(worst);
            break;
        }
        let (v1, e1) = gk21(&mut f, worst.a, mid);
        let (v2, e2) = gk21(&mut f, mid, worst.b);
        evals += 42;
        heap.push(Segment {
            a: worst.a,
            b: mid,
            value: v1,
            error: e1,
        });
        heap.push(Segment {
            a: mid,
            b: worst.b,
            value: v2,
            error: e2,
        });
        value += v1 + v2 - worst.value;
        error += e1 + e2 - worst.error;
        if heap.len() % 64 == 0 {
            // refresh to limit drift of the running totals
            let (v, e) = total(&heap);
            value = v;
            error = e;
        }
        converged = error <= opts.abs_tol.max(opts.rel_tol * value.abs());
    }
    let (value, error) = total(&heap);
    QuadResult {
        value,
        error,
        evaluations: evals,
        converged: converged || error <= opts.abs_tol.max(opts.rel_tol * value.abs()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_is_exact() {
        let r = integrate(|x| 3.0 * x * x, 0.0, 2.0, &QuadOptions::default());
        assert!((r.value - 8.0).abs() < 1e-13);
        assert!(r.converged);
    }

    #[test]
    fn endpoint_singularity() {
        // int_0^1 x^{-1/2} = 2
        let opts = QuadOptions {
            rel_tol: 1e-10,
            ..Default::default()
        };
        let r = integrate(|x: f64| x.powf(-0.5), 0.0, 1.0, &opts);
        assert!((r.value - 2.0).abs() < 1e-8, "{:?}", r);
    }

    #[test]
    fn kink_with_breakpoint() {
        let r = integrate_breakpoints(|x: f64| x.abs(), &[-1.0, 0.0, 2.0], &QuadOptions::default());
        assert!((r.value - 2.5).abs() < 1e-14);
    }

    #[test]
    fn oscillatory() {
        let r = integrate(
            |x: f64| (10.0 * x).sin(),
            0.0,
            std::f64::consts::PI,
            &QuadOptions::default(),
        );
        assert!(r.value.abs() < 1e-12);
    }
}
