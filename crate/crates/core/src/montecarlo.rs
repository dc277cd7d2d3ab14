//! Replicates of the centred sum `S_n - E S_n = sum_i theta_n(i) eps(i)`,
//! normality checks and variance growth fits.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

use crate::coefficients::{CoefficientModel, DependenceClass, ModelKind, Regime};
use crate::error::{invalid, Error, Result};
use crate::geometry::{PrototypeKind, RegionPrototype, ShellRule, SiteClass};
use crate::io::fmt_f64;
use crate::limits::{
    limit_variance_nd, limit_variance_psd, limit_variance_srd, separable_edge_constant,
    sigma_ee_extrapolate, LimitMethod, LimitVariance,
};
use crate::special::{stream_seed, CompensatedSum};
use crate::theta::{default_window, theta_fft, ThetaField, VarianceDecomposition};

/// Zero-mean, unit-variance innovation laws.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Innovation {
    #[default]
    Gaussian,
    Rademacher,
    /// `Exp(1) - 1`
    CenteredExponential,
    /// `Uniform(-sqrt 3, sqrt 3)`
    ShiftedUniform,
}

impl Innovation {
    pub fn name(&self) -> &'static str {
        match self {
            Innovation::Gaussian => "gaussian",
            Innovation::Rademacher => "rademacher",
            Innovation::CenteredExponential => "centered-exponential",
            Innovation::ShiftedUniform => "shifted-uniform",
        }
    }

    /// One draw.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            Innovation::Gaussian => rng.sample(StandardNormal),
            Innovation::Rademacher => {
                if rng.random::<bool>() {
                    1.0
                } else {
                    -1.0
                }
            }
            Innovation::CenteredExponential => rng.sample::<f64, _>(Exp1) - 1.0,
            Innovation::ShiftedUniform => 3f64.sqrt() * (2.0 * rng.random::<f64>() - 1.0),
        }
    }
}

/// Relative variance that may be dropped when compacting a kernel.
pub const DEFAULT_DROP: f64 = 1e-6;

/// The non-negligible values of a theta field, largest first.
///
/// Innovations are i.i.d., so a draw depends on the multiset of values
/// only.  The smallest values are dropped while their squared mass stays
/// below a fraction of `sigma_n^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct SumSampler {
    kernel: Vec<f64>,
    sigma_sq: f64,
    kept_sigma_sq: f64,
    abs_sum: f64,
    sum: f64,
    window_tail: f64,
}

impl SumSampler {
    pub fn new(theta: &ThetaField, drop_fraction: f64) -> Result<Self> {
        if theta.values.iter().any(|v| !v.is_finite()) {
            return Err(invalid("theta", "must be finite"));
        }
        if !(0.0..1.0).contains(&drop_fraction) {
            return Err(invalid("drop_fraction", "must lie in [0, 1)"));
        }
        let mut kernel: Vec<f64> = theta.values.iter().copied().filter(|v| *v != 0.0).collect();
        kernel.sort_by(|a, b| b.abs().total_cmp(&a.abs()).then(b.total_cmp(a)));
        let sigma_sq = theta.sigma_sq().value;
        let budget = drop_fraction * sigma_sq;
        let mut dropped = 0.0;
        while let Some(&v) = kernel.last() {
            if dropped + v * v > budget {
                break;
            }
            dropped += v * v;
            kernel.pop();
        }
        let kept_sigma_sq = kernel
            .iter()
            .map(|v| v * v)
            .collect::<CompensatedSum>()
            .value();
        let abs_sum = kernel.iter().map(|v| v.abs()).sum();
        let sum = kernel.iter().copied().collect::<CompensatedSum>().value();
        Ok(Self {
            kernel,
            sigma_sq,
            kept_sigma_sq,
            abs_sum,
            sum,
            window_tail: theta.tail_bound,
        })
    }

    pub fn len(&self) -> usize {
        self.kernel.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kernel.is_empty()
    }

    /// `sigma_n^2` over the window.
    pub fn sigma_sq(&self) -> f64 {
        self.sigma_sq
    }

    /// Variance of the simulated part.
    pub fn kept_sigma_sq(&self) -> f64 {
        self.kept_sigma_sq
    }

    /// `sum |theta|` over the simulated part.
    pub fn abs_sum(&self) -> f64 {
        self.abs_sum
    }

    /// Bound on the variance not simulated: dropped values plus the part
    /// outside the window.
    pub fn omitted_variance(&self) -> f64 {
        (self.sigma_sq - self.kept_sigma_sq).max(0.0) + self.window_tail
    }

    /// Standard deviation bound of the omitted part.
    pub fn omitted_sd(&self) -> f64 {
        self.omitted_variance().sqrt()
    }

    /// One draw of `sum theta eps` from the stream seeded by `seed`.
    ///
    /// Gaussian innovations use the exact reduction to
    /// `sqrt(sum theta^2) Z`.
    pub fn draw(&self, innovation: Innovation, seed: u64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        match innovation {
            Innovation::Gaussian => {
                self.kept_sigma_sq.sqrt() * rng.sample::<f64, _>(StandardNormal)
            }
            Innovation::Rademacher => {
                let mut lanes = [0.0f64; 4];
                for chunk in self.kernel.chunks(64) {
                    let mut bits = rng.next_u64();
                    for (k, v) in chunk.iter().enumerate() {
                        let signed = f64::from_bits(v.to_bits() ^ ((bits & 1) << 63));
                        lanes[k & 3] += signed;
                        bits >>= 1;
                    }
                }
                (lanes[0] + lanes[1]) + (lanes[2] + lanes[3])
            }
            Innovation::CenteredExponential => {
                let mut lanes = [0.0f64; 4];
                for chunk in self.kernel.chunks_exact(4) {
                    for k in 0..4 {
                        lanes[k] += chunk[k] * rng.sample::<f64, _>(Exp1);
                    }
                }
                for v in self.kernel.chunks_exact(4).remainder() {
                    lanes[0] += v * rng.sample::<f64, _>(Exp1);
                }
                ((lanes[0] + lanes[1]) + (lanes[2] + lanes[3])) - self.sum
            }
            Innovation::ShiftedUniform => {
                let mut lanes = [0.0f64; 4];
                for (k, v) in self.kernel.iter().enumerate() {
                    lanes[k & 3] += v * innovation.sample(&mut rng);
                }
                (lanes[0] + lanes[1]) + (lanes[2] + lanes[3])
            }
        }
    }

    /// Replicate `k` uses the stream `stream_seed(base_seed, k)`.
    pub fn sample(&self, innovation: Innovation, replicates: usize, base_seed: u64) -> Vec<f64> {
        (0..replicates)
            .into_par_iter()
            .map(|k| self.draw(innovation, stream_seed(base_seed, k as u64)))
            .collect()
    }
}

/// One draw of the centred sum over the theta window.
pub fn simulate_sum(theta: &ThetaField, innovation: Innovation, seed: u64) -> Result<f64> {
    Ok(SumSampler::new(theta, DEFAULT_DROP)?.draw(innovation, seed))
}

/// Independent reproducible replicates of the centred sum.
pub fn sample_sums(
    theta: &ThetaField,
    innovation: Innovation,
    replicates: usize,
    base_seed: u64,
) -> Result<Vec<f64>> {
    if replicates == 0 {
        return Err(invalid("replicates", "need at least one"));
    }
    Ok(SumSampler::new(theta, DEFAULT_DROP)?.sample(innovation, replicates, base_seed))
}

/// Asymptotic Kolmogorov critical value at level 0.01.
pub const KS_CRITICAL_01: f64 = 1.627_61;

/// KS threshold at level 0.01 for `n` observations (Stephens' correction).
pub fn ks_threshold(n: usize) -> f64 {
    let s = (n as f64).sqrt();
    KS_CRITICAL_01 / (s + 0.12 + 0.11 / s)
}

/// Kolmogorov-Smirnov distance of the sample to the standard normal law.
pub fn ks_statistic(standardized: &[f64]) -> f64 {
    let normal = Normal::standard();
    let mut sorted = standardized.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    sorted.iter().enumerate().fold(0.0, |d: f64, (i, x)| {
        let f = normal.cdf(*x);
        d.max(f - i as f64 / n).max((i + 1) as f64 / n - f)
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CltReport {
    pub replicate_count: usize,
    pub sample_mean: f64,
    pub sample_variance: f64,
    pub skewness: f64,
    pub excess_kurtosis: f64,
    pub ks_statistic: f64,
    pub ks_threshold: f64,
    pub pass: bool,
    /// Samples without spread; never a pass.
    pub degenerate: bool,
    pub predicted_scale: f64,
    pub scale_provenance: String,
}

/// Moments and KS test of `samples / predicted_scale` against `N(0, 1)` at
/// level 0.01.
pub fn normality_test(
    samples: &[f64],
    predicted_scale: f64,
    provenance: &str,
) -> Result<CltReport> {
    if samples.len() < 100 {
        return Err(invalid("samples", "need at least 100 replicates"));
    }
    if !(predicted_scale > 0.0 && predicted_scale.is_finite()) {
        return Err(invalid("predicted_scale", "must be positive"));
    }
    let z: Vec<f64> = samples.iter().map(|s| s / predicted_scale).collect();
    let n = z.len() as f64;
    let mean = z.iter().copied().collect::<CompensatedSum>().value() / n;
    let central = |p: i32| {
        z.iter()
            .map(|v| (v - mean).powi(p))
            .collect::<CompensatedSum>()
            .value()
            / n
    };
    let m2 = central(2);
    let threshold = ks_threshold(z.len());
    let degenerate = !(m2 > 0.0);
    let (skewness, kurtosis) = if degenerate {
        (f64::NAN, f64::NAN)
    } else {
        (central(3) / m2.powf(1.5), central(4) / (m2 * m2) - 3.0)
    };
    let ks = ks_statistic(&z);
    Ok(CltReport {
        replicate_count: z.len(),
        sample_mean: mean,
        sample_variance: m2 * n / (n - 1.0),
        skewness,
        excess_kurtosis: kurtosis,
        ks_statistic: ks,
        ks_threshold: threshold,
        pass: !degenerate && ks < threshold,
        degenerate,
        predicted_scale,
        scale_provenance: provenance.into(),
    })
}

/// Least-squares fit of `log sigma^2` on `log lambda`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrowthFit {
    pub slope: f64,
    pub intercept: f64,
    /// Half-width of the 95% confidence interval of the slope.
    pub confidence_halfwidth: f64,
    /// The grid spans less than a decade.
    pub narrow_span: bool,
}

pub fn growth_regression(pairs: &[(f64, f64)]) -> Result<GrowthFit> {
    if pairs.len() < 4 {
        return Err(invalid("pairs", "need at least four inflation factors"));
    }
    if pairs
        .iter()
        .any(|(l, s)| !(*l > 0.0 && *s > 0.0 && l.is_finite() && s.is_finite()))
    {
        return Err(invalid("pairs", "lambda and sigma^2 must be positive"));
    }
    let x: Vec<f64> = pairs.iter().map(|p| p.0.ln()).collect();
    let y: Vec<f64> = pairs.iter().map(|p| p.1.ln()).collect();
    let n = x.len() as f64;
    let xm = x.iter().sum::<f64>() / n;
    let ym = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - xm).powi(2)).sum();
    if !(sxx > 0.0) {
        return Err(invalid("pairs", "lambda values must differ"));
    }
    let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - xm) * (b - ym)).sum();
    let slope = sxy / sxx;
    let intercept = ym - slope * xm;
    let ssr: f64 = x
        .iter()
        .zip(&y)
        .map(|(a, b)| (b - intercept - slope * a).powi(2))
        .sum();
    let se = (ssr / (n - 2.0) / sxx).sqrt();
    let t = StudentsT::new(0.0, 1.0, n - 2.0)
        .map_err(|e| Error::Degenerate(e.to_string()))?
        .inverse_cdf(0.975);
    let (lo, hi) = pairs.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), p| {
        (lo.min(p.0), hi.max(p.0))
    });
    Ok(GrowthFit {
        slope,
        intercept,
        confidence_halfwidth: t * se,
        narrow_span: hi / lo < 10.0,
    })
}

/// Equal-width histogram.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
}

impl Histogram {
    pub fn new(values: &[f64], bins: usize) -> Result<Self> {
        if bins == 0 || values.is_empty() {
            return Err(invalid("histogram", "need data and at least one bin"));
        }
        let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let (lo, hi) = if hi > lo {
            (lo, hi)
        } else {
            (lo - 0.5, lo + 0.5)
        };
        let w = (hi - lo) / bins as f64;
        let edges: Vec<f64> = (0..=bins).map(|k| lo + w * k as f64).collect();
        let mut counts = vec![0u64; bins];
        for v in values {
            let k = (((v - lo) / w) as usize).min(bins - 1);
            counts[k] += 1;
        }
        Ok(Self { edges, counts })
    }

    /// CSV rows `bin_lo,bin_hi,count`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("bin_lo,bin_hi,count\n");
        for (k, c) in self.counts.iter().enumerate() {
            out.push_str(&format!(
                "{},{},{c}\n",
                fmt_f64(self.edges[k]),
                fmt_f64(self.edges[k + 1])
            ));
        }
        out
    }
}

/// Variance summary at one inflation factor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanRow {
    pub lambda: f64,
    pub n_sites: usize,
    pub sigma_sq: f64,
    pub tail_bound: f64,
    pub lindeberg_ratio: f64,
    pub interior_sum: f64,
    pub exterior_sum: f64,
    pub boundary_sum_scaled: f64,
}

impl ScanRow {
    pub const CSV_HEADER: &'static str =
        "lambda,N_n,sigma_sq,tail_bound,lindeberg_ratio,interior_sum,exterior_sum,boundary_sum_scaled";

    pub fn to_csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            fmt_f64(self.lambda),
            self.n_sites,
            fmt_f64(self.sigma_sq),
            fmt_f64(self.tail_bound),
            fmt_f64(self.lindeberg_ratio),
            fmt_f64(self.interior_sum),
            fmt_f64(self.exterior_sum),
            fmt_f64(self.boundary_sum_scaled)
        )
    }
}

/// Window and shell settings of a scan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanOptions {
    pub rho: f64,
    pub shell_rule: ShellRule,
}

impl Default for ScanOptions {
    fn default() -> Self {
        Self {
            rho: crate::theta::DEFAULT_RHO,
            shell_rule: ShellRule::Log,
        }
    }
}

/// Everything computed at one inflation factor.
#[derive(Debug, Clone)]
pub struct ScanPoint {
    pub row: ScanRow,
    pub decomposition: VarianceDecomposition,
    /// Interior, exterior and boundary site counts of the window.
    pub class_counts: [usize; 3],
    pub field: ThetaField,
}

/// Theta field, its variance decomposition and summary at `lambda`.
pub fn scan_point(
    model: &CoefficientModel,
    proto: &RegionPrototype,
    lambda: f64,
    opts: &ScanOptions,
) -> Result<ScanPoint> {
    let sites = proto.enumerate_sites(lambda)?;
    let window = default_window(model.dim(), lambda, opts.rho);
    let field = theta_fft(model, &sites, &window)?;
    let class = proto.classify_sites(lambda, opts.shell_rule.t_n(lambda), &window)?;
    let dec = field.variance_decompose(&class)?;
    let row = ScanRow {
        lambda,
        n_sites: sites.count(),
        sigma_sq: dec.sigma_sq_total,
        tail_bound: dec.tail_bound,
        lindeberg_ratio: field.lindeberg_ratio()?,
        interior_sum: dec.interior_sum,
        exterior_sum: dec.exterior_sum,
        boundary_sum_scaled: dec.boundary_sum_scaled,
    };
    Ok(ScanPoint {
        row,
        decomposition: dec,
        class_counts: [
            class.count(SiteClass::Interior),
            class.count(SiteClass::Exterior),
            class.count(SiteClass::Boundary),
        ],
        field,
    })
}

/// Theta field and its variance summary at `lambda`.
pub fn scan_lambda(
    model: &CoefficientModel,
    proto: &RegionPrototype,
    lambda: f64,
    opts: &ScanOptions,
) -> Result<(ScanRow, ThetaField)> {
    let p = scan_point(model, proto, lambda, opts)?;
    Ok((p.row, p.field))
}

/// Limiting variance appropriate to the regime, when one is available.
pub fn regime_limit(
    model: &CoefficientModel,
    proto: &RegionPrototype,
    class: &DependenceClass,
    rows: &[ScanRow],
) -> Result<Option<LimitVariance>> {
    Ok(match class.label {
        Regime::Srd => Some(limit_variance_srd(model)?),
        Regime::Psd => Some(limit_variance_psd(model, proto)?),
        Regime::NdNee => Some(limit_variance_nd(model, proto)?),
        Regime::NdEe | Regime::NdCritical => match (model.kind(), proto.kind()) {
            (ModelKind::SeparableNd { b }, PrototypeKind::Cube) if class.label == Regime::NdEe => {
                let est = separable_edge_constant(b)?;
                Some(LimitVariance {
                    regime: Regime::NdEe,
                    value: est.value,
                    method: LimitMethod::TruncatedSeries,
                    error_estimate: est.error,
                    provenance:
                        "boundary variance constant of the separable planar model on the square"
                            .into(),
                })
            }
            _ if rows.len() >= 3 => {
                let pairs: Vec<(f64, f64)> = rows
                    .iter()
                    .map(|r| (r.lambda, r.boundary_sum_scaled))
                    .collect();
                let mut v = sigma_ee_extrapolate(&pairs)?;
                v.regime = class.label;
                Some(v)
            }
            _ => None,
        },
    })
}

/// `scale^2` the regime predicts for `Var(S_n)` at `lambda`, given the
/// limiting constant.
pub fn predicted_variance(
    model: &CoefficientModel,
    class: &DependenceClass,
    limit: f64,
    lambda: f64,
    n_sites: usize,
) -> Result<f64> {
    Ok(match class.label {
        Regime::Srd => n_sites as f64 * limit,
        Regime::Psd | Regime::NdNee => {
            let l = model.slowly_varying(lambda)?;
            lambda.powf(class.predicted_variance_exponent) * l * l * limit
        }
        Regime::NdEe | Regime::NdCritical => lambda.powf(class.predicted_variance_exponent) * limit,
    })
}

/// Output of [`regime_experiment`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub classification: DependenceClass,
    pub rows: Vec<ScanRow>,
    pub growth: GrowthFit,
    pub lindeberg_decreasing: bool,
    pub limit: Option<LimitVariance>,
    /// `sigma_n^2` over the predicted variance at each inflation factor.
    pub limit_ratios: Vec<f64>,
    pub innovation: Innovation,
    pub clt: CltReport,
    /// Predicted standard deviation at the largest inflation factor.
    pub theoretical_scale: Option<f64>,
    pub omitted_variance: f64,
    /// The simulation omits less than 1% of `sigma_n^2`.
    pub valid: bool,
}

/// Variance scan over the grid, regime limit, and a normality test at the
/// largest inflation factor.
#[allow(clippy::too_many_arguments)]
pub fn regime_experiment(
    model: &CoefficientModel,
    proto: &RegionPrototype,
    lambda_grid: &[f64],
    innovation: Innovation,
    replicates: usize,
    base_seed: u64,
    opts: &ScanOptions,
) -> Result<ExperimentReport> {
    if model.dim() != proto.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            got: proto.dim(),
        });
    }
    if lambda_grid.windows(2).any(|w| !(w[1] > w[0])) || lambda_grid.is_empty() {
        return Err(invalid(
            "lambda_grid",
            "must be non-empty and strictly increasing",
        ));
    }
    let class = model.classify()?;
    let mut rows = Vec::with_capacity(lambda_grid.len());
    let mut last = None;
    for (k, &lambda) in lambda_grid.iter().enumerate() {
        let (row, field) = scan_lambda(model, proto, lambda, opts)?;
        rows.push(row);
        if k + 1 == lambda_grid.len() {
            last = Some(field);
        }
    }
    let field = last.expect("non-empty grid");
    let growth = growth_regression(
        &rows
            .iter()
            .map(|r| (r.lambda, r.sigma_sq))
            .collect::<Vec<_>>(),
    )?;
    let lindeberg_decreasing = rows
        .windows(2)
        .all(|w| w[1].lindeberg_ratio < w[0].lindeberg_ratio);
    let limit = regime_limit(model, proto, &class, &rows)?;
    let limit_ratios = match &limit {
        Some(l) => rows
            .iter()
            .map(|r| {
                Ok(r.sigma_sq / predicted_variance(model, &class, l.value, r.lambda, r.n_sites)?)
            })
            .collect::<Result<Vec<_>>>()?,
        None => vec![],
    };
    let sampler = SumSampler::new(&field, DEFAULT_DROP)?;
    let samples = sampler.sample(innovation, replicates, base_seed);
    let clt = normality_test(&samples, sampler.sigma_sq().sqrt(), "computed sigma_n")?;
    let top = rows.last().expect("non-empty grid");
    let theoretical_scale = match &limit {
        Some(l) => {
            Some(predicted_variance(model, &class, l.value, top.lambda, top.n_sites)?.sqrt())
        }
        None => None,
    };
    let omitted = sampler.omitted_variance();
    Ok(ExperimentReport {
        classification: class,
        rows,
        growth,
        lindeberg_decreasing,
        limit,
        limit_ratios,
        innovation,
        clt,
        theoretical_scale,
        omitted_variance: omitted,
        valid: omitted < 0.01 * sampler.sigma_sq(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::Amplitude;
    use crate::geometry::SiteSet;
    use crate::lattice::IntBox;

    fn delta_field(n: i64) -> ThetaField {
        let sites: Vec<Vec<i64>> = (0..n).map(|k| vec![k]).collect();
        let sites = SiteSet::from_points(1, &sites).unwrap();
        theta_fft(
            &CoefficientModel::delta(1).unwrap(),
            &sites,
            &IntBox::new(vec![-2], vec![n + 2]).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn innovations_have_unit_variance() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for inn in [
            Innovation::Gaussian,
            Innovation::Rademacher,
            Innovation::CenteredExponential,
            Innovation::ShiftedUniform,
        ] {
            let n = 200_000;
            let xs: Vec<f64> = (0..n).map(|_| inn.sample(&mut rng)).collect();
            let m = xs.iter().sum::<f64>() / n as f64;
            let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n as f64;
            assert!(m.abs() < 0.01, "{inn:?} mean {m}");
            assert!((v - 1.0).abs() < 0.02, "{inn:?} var {v}");
        }
    }

    #[test]
    fn delta_sum_variance() {
        let field = delta_field(100);
        let xs = sample_sums(&field, Innovation::Gaussian, 10_000, 3).unwrap();
        let v = xs.iter().map(|x| x * x).sum::<f64>() / xs.len() as f64;
        assert!((92.0..108.0).contains(&v), "{v}");
        let xs = sample_sums(&field, Innovation::CenteredExponential, 10_000, 3).unwrap();
        let v = xs.iter().map(|x| x * x).sum::<f64>() / xs.len() as f64;
        assert!((92.0..108.0).contains(&v), "{v}");
    }

    #[test]
    fn rademacher_draw_bounded_by_absolute_sum() {
        let m = CoefficientModel::isotropic(1, 0.7, 1.0, Amplitude::Constant).unwrap();
        let sites = RegionPrototype::cube(1)
            .unwrap()
            .enumerate_sites(40.0)
            .unwrap();
        let field = theta_fft(&m, &sites, &default_window(1, 40.0, 4.0)).unwrap();
        let bound: f64 = field.values.iter().map(|v| v.abs()).sum();
        for seed in 0..50 {
            assert!(
                simulate_sum(&field, Innovation::Rademacher, seed)
                    .unwrap()
                    .abs()
                    <= bound
            );
        }
    }

    #[test]
    fn replicates_are_reproducible_streams() {
        let field = delta_field(30);
        let one = sample_sums(&field, Innovation::ShiftedUniform, 1, 9).unwrap();
        assert_eq!(
            one[0],
            simulate_sum(&field, Innovation::ShiftedUniform, stream_seed(9, 0)).unwrap()
        );
        let a = sample_sums(&field, Innovation::Rademacher, 500, 1).unwrap();
        let b = sample_sums(&field, Innovation::Rademacher, 500, 1).unwrap();
        let c = sample_sums(&field, Innovation::Rademacher, 500, 2).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        let bound = 4.0 * 30f64.sqrt() / 500f64.sqrt();
        for s in [&a, &c] {
            assert!((s.iter().sum::<f64>() / 500.0).abs() < bound);
        }
    }

    #[test]
    fn compaction_keeps_variance() {
        let m = CoefficientModel::isotropic(2, 2.2, 1.0, Amplitude::Constant).unwrap();
        let sites = RegionPrototype::cube(2)
            .unwrap()
            .enumerate_sites(16.0)
            .unwrap();
        let field = theta_fft(&m, &sites, &default_window(2, 16.0, 4.0)).unwrap();
        let s = SumSampler::new(&field, 1e-4).unwrap();
        assert!(s.len() < field.values.len());
        assert!(s.kept_sigma_sq() >= (1.0 - 1e-4) * s.sigma_sq());
        assert!(s.omitted_variance() >= field.tail_bound);
    }

    #[test]
    fn ks_on_exact_normal_draws() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let xs: Vec<f64> = (0..2000)
            .map(|_| rng.sample::<f64, _>(StandardNormal))
            .collect();
        let r = normality_test(&xs, 1.0, "unit").unwrap();
        assert!(r.pass, "{r:?}");
        assert!((r.ks_threshold - 0.0364).abs() < 1e-3);
        let shifted: Vec<f64> = xs.iter().map(|x| x + 0.3).collect();
        assert!(!normality_test(&shifted, 1.0, "unit").unwrap().pass);
        let flat = vec![1.0; 200];
        let r = normality_test(&flat, 1.0, "unit").unwrap();
        assert!(r.degenerate && !r.pass);
    }

    #[test]
    fn ks_statistic_matches_definition() {
        // single point at 0: F = 1/2 on both sides
        assert!((ks_statistic(&[0.0]) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn gaussian_pass_rate() {
        let field = delta_field(50);
        let sampler = SumSampler::new(&field, DEFAULT_DROP).unwrap();
        let passes = (0..100u64)
            .filter(|&run| {
                let xs = sampler.sample(Innovation::Gaussian, 2000, stream_seed(77, run));
                normality_test(&xs, sampler.sigma_sq().sqrt(), "exact")
                    .unwrap()
                    .pass
            })
            .count();
        assert!(passes >= 97, "{passes}");
    }

    #[test]
    fn regression_on_exact_power_law() {
        let pairs: Vec<(f64, f64)> = [4.0f64, 8.0, 16.0, 64.0]
            .iter()
            .map(|&l| (l, 2.5 * l.powf(1.7)))
            .collect();
        let fit = growth_regression(&pairs).unwrap();
        assert!((fit.slope - 1.7).abs() < 1e-10);
        assert!((fit.intercept - 2.5f64.ln()).abs() < 1e-10);
        assert!(fit.confidence_halfwidth < 1e-6);
        assert!(!fit.narrow_span);
        assert!(growth_regression(&pairs[..3]).is_err());
        assert!(growth_regression(&[(1.0, 1.0), (2.0, 0.0), (3.0, 1.0), (4.0, 1.0)]).is_err());
    }

    #[test]
    fn histogram_counts_everything() {
        let h = Histogram::new(&[0.0, 0.1, 0.5, 1.0], 2).unwrap();
        assert_eq!(h.counts, vec![2, 2]);
        assert!(h.to_csv().starts_with("bin_lo,bin_hi,count\n"));
    }

    #[test]
    fn delta_experiment() {
        let m = CoefficientModel::delta(2).unwrap();
        let cube = RegionPrototype::cube(2).unwrap();
        let opts = ScanOptions {
            rho: 2.0,
            ..Default::default()
        };
        let r = regime_experiment(
            &m,
            &cube,
            &[8.0, 16.0, 32.0, 64.0],
            Innovation::Rademacher,
            400,
            0,
            &opts,
        )
        .unwrap();
        assert_eq!(r.classification.label, Regime::Srd);
        assert!((r.growth.slope - 2.0).abs() < 0.05);
        for q in &r.limit_ratios {
            assert!((q - 1.0).abs() < 1e-12);
        }
        assert!(r.lindeberg_decreasing && r.valid);
        assert!(r.clt.pass);
    }
}
