//! The explicit reproducing kernels on the cone slice and on the minimal
//! ball, and the calibration of their normalization constants.
//!
//! Both normalization constants are fixed numerically by requiring that the
//! discretized projection of the constant function returns 1 at the origin,
//! rather than trusting any closed-form expression.

use crate::geometry::{bilinear, hermitian, CPoint};
use crate::sampling::{mc_integrate_weighted, Domain, SampleCloud, SamplingError};
use num_complex::Complex64;
use thiserror::Error;

/// Guard radius for kernel denominators.
pub const SINGULARITY_GUARD: f64 = 1e-14;

#[derive(Debug, Error)]
pub enum KernelError {
    #[error("kernel parameters invalid: n={n}, s={s}")]
    BadParams { n: usize, s: f64 },
    #[error("kernel singularity: |denominator base| = {0} below guard")]
    Singular(f64),
    #[error("series base X = 0 with non-integer exponent")]
    ZeroBase,
    #[error("denominator left the principal-branch half plane: re = {0}")]
    BranchViolation(f64),
    #[error("series did not converge within {0} terms")]
    SeriesDiverged(usize),
    #[error("calibration cloud mismatch: expected n={expected}, got n={got}")]
    CloudMismatch { expected: usize, got: usize },
    #[error("degenerate calibration: projection of 1 evaluated to {0}")]
    DegenerateCalibration(f64),
    #[error(transparent)]
    Sampling(#[from] SamplingError),
}

/// Which pairing the ball-kernel denominator uses. The displayed formula is
/// ambiguous; `Hermitian` (the default) restores Hermitian symmetry and the
/// reproducing property, `Bilinear` is the literal reading kept for
/// comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BallPairing {
    #[default]
    Hermitian,
    Bilinear,
}

#[derive(Debug, Clone)]
pub struct KernelParams {
    pub n: usize,
    pub s: f64,
    /// Normalization of the cone-slice kernel (calibrated).
    pub norm_m: f64,
    /// Normalization of the ball kernel (calibrated).
    pub norm_ball: f64,
    /// Relative tolerance for series truncation.
    pub series_tol: f64,
    pub ball_pairing: BallPairing,
}

impl KernelParams {
    pub fn new(n: usize, s: f64) -> Result<Self, KernelError> {
        if n < 2 || !(s > -1.0) || !s.is_finite() {
            return Err(KernelError::BadParams { n, s });
        }
        Ok(KernelParams {
            n,
            s,
            norm_m: 1.0,
            norm_ball: 1.0,
            series_tol: 1e-12,
            ball_pairing: BallPairing::default(),
        })
    }

    pub fn with_pairing(mut self, pairing: BallPairing) -> Self {
        self.ball_pairing = pairing;
        self
    }
}

/// Kernel on the cone slice:
/// `C (n-1 + (n+1+2s) z∙w̄) / (1 - z∙w̄)^{n+1+s}`.
pub fn kernel_m(z: &CPoint, w: &CPoint, kp: &KernelParams) -> Result<Complex64, KernelError> {
    let n = kp.n as f64;
    let zw = hermitian(z, w);
    let base = Complex64::new(1.0, 0.0) - zw;
    if base.norm() < SINGULARITY_GUARD {
        return Err(KernelError::Singular(base.norm()));
    }
    let numer = Complex64::new(n - 1.0, 0.0) + zw * (n + 1.0 + 2.0 * kp.s);
    Ok(numer * kp.norm_m / base.powf(n + 1.0 + kp.s))
}

/// The series
/// `A(X,Y) = Σ_k  C(n+s+1, 2k+1) X^{n+s-2k-1} Y^k [2(n+s) - (n+1+2s)(n+s-2k)/(n+s+1) (X²-Y)]`
/// with the generalized (falling-product) binomial coefficient.
///
/// For integer `n+s` the binomial factor vanishes after finitely many terms
/// and the sum is exact; otherwise the sum is truncated once the term
/// magnitude stays below `tol` times the running sum for 3 consecutive
/// terms, capped at 500 terms.
pub fn a_series(
    x: Complex64,
    y: Complex64,
    n: usize,
    s: f64,
    tol: f64,
) -> Result<Complex64, KernelError> {
    assert!(tol > 0.0, "series tolerance must be positive");
    const CAP: usize = 500;
    let a = n as f64 + s; // exponent base: binomial top is a+1
    let integral_case = s.fract() == 0.0;
    if !integral_case && x.norm() == 0.0 {
        return Err(KernelError::ZeroBase);
    }
    let x2my = |k: usize| -> Complex64 {
        // X^{a - 1 - 2k}, exact powi in the integral case
        let e = a - 1.0 - 2.0 * k as f64;
        if integral_case {
            x.powi(e as i32)
        } else {
            x.powf(e)
        }
    };
    let xsq = x * x;
    let mut binom = a + 1.0; // falling product over (2k+1)! at k = 0
    let mut ypow = Complex64::new(1.0, 0.0);
    let mut sum = Complex64::new(0.0, 0.0);
    let mut small_streak = 0usize;
    for k in 0..CAP {
        if binom == 0.0 {
            return Ok(sum); // exact vanishing: finite sum complete
        }
        let bracket = Complex64::new(2.0 * a, 0.0)
            - (xsq - y) * ((n as f64 + 1.0 + 2.0 * s) * (a - 2.0 * k as f64) / (a + 1.0));
        let term = x2my(k) * ypow * bracket * binom;
        sum += term;
        if term.norm() <= tol * sum.norm().max(f64::MIN_POSITIVE) {
            small_streak += 1;
            if small_streak >= 3 {
                return Ok(sum);
            }
        } else {
            small_streak = 0;
        }
        // advance binomial: multiply the two new falling factors, divide the
        // two new factorial factors
        let k1 = k as f64 + 1.0;
        binom *= (a + 1.0 - (2.0 * k1 - 1.0)) * (a + 1.0 - 2.0 * k1) / ((2.0 * k1) * (2.0 * k1 + 1.0));
        ypow *= y;
    }
    Err(KernelError::SeriesDiverged(CAP))
}

/// Kernel on the minimal ball:
/// `norm · A(1 - z∙w̄, (z∙z) conj(w∙w)) / ((1 - z∙w̄)² - (z∙z) conj(w∙w))^{n+1+s}`
/// (Hermitian pairing in the denominator by default; see [`BallPairing`]).
pub fn kernel_ball(z: &CPoint, w: &CPoint, kp: &KernelParams) -> Result<Complex64, KernelError> {
    let x_num = Complex64::new(1.0, 0.0) - hermitian(z, w);
    let y = bilinear(z, z) * bilinear(w, w).conj();
    let x_den = match kp.ball_pairing {
        BallPairing::Hermitian => x_num,
        BallPairing::Bilinear => Complex64::new(1.0, 0.0) - bilinear(z, w),
    };
    let d = x_den * x_den - y;
    if d.norm() < SINGULARITY_GUARD || x_den.norm() < SINGULARITY_GUARD {
        return Err(KernelError::Singular(d.norm()));
    }
    let numer = a_series(x_num, y, kp.n, kp.s, kp.series_tol)?;
    let e = kp.n as f64 + 1.0 + kp.s;
    // principal-branch-safe factorization: X^{2e} (1 - Y/X²)^{e}
    let ratio = Complex64::new(1.0, 0.0) - y / (x_den * x_den);
    if x_den.re <= 0.0 {
        return Err(KernelError::BranchViolation(x_den.re));
    }
    if ratio.re <= 0.0 && kp.s.fract() != 0.0 {
        return Err(KernelError::BranchViolation(ratio.re));
    }
    let denom = x_den.powf(2.0 * e) * ratio.powf(e);
    Ok(numer * kp.norm_ball / denom)
}

/// Result of a normalization calibration.
#[derive(Debug, Clone, Copy)]
pub struct CalibrationReport {
    /// Estimated projection of 1 at the origin before rescaling.
    pub raw_value: f64,
    /// Its Monte-Carlo standard error.
    pub raw_stderr: f64,
    /// Relative standard error carried by the calibrated constant.
    pub rel_stderr: f64,
}

/// Scales the relevant normalization constant so that the discretized
/// projection of `f = 1` returns 1 at the origin. Idempotent up to the
/// Monte-Carlo error of the cloud.
pub fn calibrate(
    kp: &KernelParams,
    cloud: &SampleCloud,
) -> Result<(KernelParams, CalibrationReport), KernelError> {
    if cloud.n != kp.n {
        return Err(KernelError::CloudMismatch {
            expected: kp.n,
            got: cloud.n,
        });
    }
    // At the origin both kernels are constant in w, so the projection of 1
    // factorizes into (kernel at 0) x (weighted mass of the cloud).
    let mass = mc_integrate_weighted(|_| Complex64::new(1.0, 0.0), cloud, kp.s)?;
    let kernel_at_zero = match cloud.domain {
        Domain::M => kp.norm_m * (kp.n as f64 - 1.0),
        Domain::BallStar => {
            kp.norm_ball
                * a_series(
                    Complex64::new(1.0, 0.0),
                    Complex64::new(0.0, 0.0),
                    kp.n,
                    kp.s,
                    kp.series_tol,
                )?
                .re
        }
    };
    let raw = kernel_at_zero * mass.re();
    let raw_se = kernel_at_zero.abs() * mass.stderr;
    if raw.abs() < 1e-12 {
        return Err(KernelError::DegenerateCalibration(raw));
    }
    let mut out = kp.clone();
    match cloud.domain {
        Domain::M => out.norm_m /= raw,
        Domain::BallStar => out.norm_ball /= raw,
    }
    Ok((
        out,
        CalibrationReport {
            raw_value: raw,
            raw_stderr: raw_se,
            rel_stderr: raw_se / raw.abs(),
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::{sample_ball_star, sample_m, RngState};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn random_m_points(n: usize, count: usize, stream: u64) -> Vec<CPoint> {
        sample_m(&RngState::new(77, stream), n, 0.0, count, 1.0)
            .unwrap()
            .points
    }

    fn random_ball_points(n: usize, count: usize, stream: u64) -> Vec<CPoint> {
        sample_ball_star(&RngState::new(77, stream), n, count)
            .unwrap()
            .points
    }

    #[test]
    fn kernel_m_at_zero_is_constant() {
        let kp = KernelParams::new(2, 0.5).unwrap();
        let zero = CPoint::zero(3);
        for w in random_m_points(2, 10, 0) {
            let v = kernel_m(&zero, &w, &kp).unwrap();
            assert!((v - c(1.0, 0.0)).norm() < 1e-12); // C (n-1) = 1 * 1
        }
    }

    #[test]
    fn kernel_m_hermitian_symmetry_and_diagonal() {
        let kp = KernelParams::new(2, 1.0).unwrap();
        let pts = random_m_points(2, 20, 1);
        for pair in pts.chunks(2) {
            if pair.len() < 2 {
                break;
            }
            let (z, w) = (&pair[0], &pair[1]);
            let a = kernel_m(z, w, &kp).unwrap();
            let b = kernel_m(w, z, &kp).unwrap();
            assert!((a - b.conj()).norm() < 1e-12 * a.norm().max(1.0));
            let d = kernel_m(z, z, &kp).unwrap();
            assert!(d.im.abs() < 1e-12 * d.re.abs());
            assert!(d.re > 0.0);
        }
    }

    #[test]
    fn kernel_m_singularity_guard() {
        let kp = KernelParams::new(2, 0.0).unwrap();
        let f = crate::geometry::BoundaryFrame::new(
            vec![1.0, 0.0, 0.0],
            vec![0.0, 1.0, 0.0],
        )
        .unwrap();
        let z = f.to_point(); // |z| = 1, z.z̄ = 1: base exactly 0
        assert!(matches!(
            kernel_m(&z, &z, &kp),
            Err(KernelError::Singular(_))
        ));
    }

    #[test]
    fn a_series_single_term_when_y_zero() {
        // integer n+s: A(X, 0) = (n+s+1) X^{n+s-1} [2(n+s) - (n+1+2s)(n+s)/(n+s+1) X²]
        let (n, s) = (2usize, 1.0f64);
        let a = n as f64 + s;
        for &x in &[c(1.0, 0.0), c(0.7, 0.4), c(0.3, -0.8)] {
            let got = a_series(x, c(0.0, 0.0), n, s, 1e-12).unwrap();
            let expect = x.powi((a - 1.0) as i32)
                * (c(2.0 * a, 0.0)
                    - x * x * ((n as f64 + 1.0 + 2.0 * s) * a / (a + 1.0)))
                * (a + 1.0);
            assert!((got - expect).norm() < 1e-12 * expect.norm());
        }
    }

    #[test]
    fn a_series_term_count_integral_case() {
        // count the non-vanishing terms directly from the binomial product
        for &(n, s) in &[(2usize, 0.0f64), (2, 1.0), (3, 0.0), (3, 2.0)] {
            let a = n as f64 + s;
            let expected_terms = ((a + 1.0) / 2.0).ceil() as usize;
            let mut binom = a + 1.0;
            let mut count = 0;
            for k in 0..100 {
                if binom == 0.0 {
                    break;
                }
                count += 1;
                let k1 = k as f64 + 1.0;
                binom *= (a + 1.0 - (2.0 * k1 - 1.0)) * (a + 1.0 - 2.0 * k1)
                    / ((2.0 * k1) * (2.0 * k1 + 1.0));
            }
            assert_eq!(count, expected_terms, "n={n} s={s}");
        }
    }

    #[test]
    fn a_series_non_integer_stable_under_refinement() {
        let (n, s) = (2usize, 0.35f64);
        for &(x, y) in &[
            (c(0.9, 0.1), c(0.05, 0.02)),
            (c(0.5, -0.2), c(0.01, -0.03)),
            (c(0.25, 0.05), c(0.002, 0.001)),
        ] {
            let coarse = a_series(x, y, n, s, 1e-8).unwrap();
            let fine = a_series(x, y, n, s, 1e-9 / 10.0).unwrap();
            assert!(
                (coarse - fine).norm() <= 1e-8 * fine.norm().max(1e-30) * 10.0,
                "x={x} y={y}: {coarse} vs {fine}"
            );
        }
    }

    /// Exact-rational oracle: expand the finite sum for integer n+s into
    /// monomials X^p Y^q with rational coefficients and evaluate directly.
    #[test]
    fn a_series_matches_rational_expansion() {
        use num_rational::Rational64;

        // builds the list of (p, q, coeff) monomials of A for integer a = n+s
        fn expand(n: i64, s: i64) -> Vec<(i64, i64, Rational64)> {
            let a = n + s;
            let mut out: Vec<(i64, i64, Rational64)> = Vec::new();
            let mut push = |p: i64, q: i64, c: Rational64| {
                if c != Rational64::from_integer(0) {
                    out.push((p, q, c));
                }
            };
            let mut binom = Rational64::from_integer(a + 1);
            let mut k = 0i64;
            while binom != Rational64::from_integer(0) {
                let r = Rational64::new((n + 1 + 2 * s) * (a - 2 * k), a + 1);
                let base_p = a - 1 - 2 * k;
                // term: binom * X^{base_p} Y^k [2a - r (X² - Y)]
                push(base_p, k, binom * Rational64::from_integer(2 * a));
                push(base_p + 2, k, -binom * r);
                push(base_p, k + 1, binom * r);
                k += 1;
                binom *= Rational64::new((a + 1 - (2 * k - 1)) * (a + 1 - 2 * k), (2 * k) * (2 * k + 1));
            }
            out
        }

        for &(n, s) in &[(2i64, 0i64), (2, 1), (3, 0)] {
            let monomials = expand(n, s);
            for &(x, y) in &[
                (c(1.0, 0.0), c(0.0, 0.0)),
                (c(0.8, 0.3), c(0.1, -0.2)),
                (c(0.4, -0.5), c(-0.15, 0.07)),
            ] {
                let mut expect = c(0.0, 0.0);
                for &(p, q, coeff) in &monomials {
                    let cf = *coeff.numer() as f64 / *coeff.denom() as f64;
                    expect += x.powi(p as i32) * y.powi(q as i32) * cf;
                }
                let got = a_series(x, y, n as usize, s as f64, 1e-12).unwrap();
                assert!(
                    (got - expect).norm() <= 1e-12 * expect.norm().max(1.0),
                    "n={n} s={s} x={x} y={y}: {got} vs {expect}"
                );
            }
        }
    }

    #[test]
    fn kernel_ball_constant_at_zero() {
        let kp = KernelParams::new(2, 0.0).unwrap();
        let a10 = a_series(c(1.0, 0.0), c(0.0, 0.0), 2, 0.0, 1e-12)
            .unwrap()
            .re;
        for w in random_ball_points(2, 10, 2) {
            let v = kernel_ball(&w, &CPoint::zero(2), &kp).unwrap();
            assert!((v - c(a10, 0.0)).norm() < 1e-12 * a10.abs());
            let v2 = kernel_ball(&CPoint::zero(2), &w, &kp).unwrap();
            assert!((v2 - c(a10, 0.0)).norm() < 1e-12 * a10.abs());
        }
    }

    #[test]
    fn kernel_ball_hermitian_symmetry_and_diagonal() {
        for s in [0.0, 1.0] {
            let kp = KernelParams::new(2, s).unwrap();
            let pts = random_ball_points(2, 40, 3);
            for pair in pts.chunks(2) {
                if pair.len() < 2 {
                    break;
                }
                let (z, w) = (&pair[0], &pair[1]);
                let a = kernel_ball(z, w, &kp).unwrap();
                let b = kernel_ball(w, z, &kp).unwrap();
                assert!(
                    (a - b.conj()).norm() < 1e-10 * a.norm().max(1.0),
                    "s={s}: {a} vs conj {b}"
                );
                let d = kernel_ball(z, z, &kp).unwrap();
                assert!(d.re > 0.0, "diagonal not positive: {d}");
                assert!(d.im.abs() < 1e-10 * d.re);
            }
        }
    }

    #[test]
    fn kernel_ball_bilinear_reading_breaks_symmetry() {
        // the literal reading loses Hermitian symmetry on generic pairs
        let kp = KernelParams::new(2, 0.0)
            .unwrap()
            .with_pairing(BallPairing::Bilinear);
        let pts = random_ball_points(2, 60, 4);
        let mut max_defect: f64 = 0.0;
        for pair in pts.chunks(2) {
            if pair.len() < 2 {
                break;
            }
            let a = kernel_ball(&pair[0], &pair[1], &kp).unwrap();
            let b = kernel_ball(&pair[1], &pair[0], &kp).unwrap();
            max_defect = max_defect.max((a - b.conj()).norm() / a.norm().max(1.0));
        }
        assert!(max_defect > 1e-6, "defect unexpectedly small: {max_defect}");
    }

    #[test]
    fn kernel_m_antiholomorphic_in_w() {
        // finite-difference Cauchy-Riemann check on conj(kernel_m(z, .))
        let kp = KernelParams::new(2, 1.0).unwrap();
        let pts = random_m_points(2, 6, 5);
        let h = 1e-4;
        for pair in pts.chunks(2) {
            if pair.len() < 2 {
                break;
            }
            let (z, w) = (&pair[0], &pair[1]);
            let f = |w_: &CPoint| kernel_m(z, w_, &kp).unwrap().conj();
            for j in 0..3 {
                let mut shift = |dre: f64, dim: f64| {
                    let mut cs = w.coords().to_vec();
                    cs[j] += c(dre, dim);
                    f(&CPoint::new(cs).unwrap())
                };
                let dx = (shift(h, 0.0) - shift(-h, 0.0)) / (2.0 * h);
                let dy = (shift(0.0, h) - shift(0.0, -h)) / (2.0 * h);
                let dbar = (dx + dy * c(0.0, 1.0)) / 2.0;
                assert!(
                    dbar.norm() < 1e-6 * dx.norm().max(1.0),
                    "coordinate {j}: dbar = {dbar}"
                );
            }
        }
    }

    #[test]
    fn calibrate_m_fixes_projection_of_one() {
        let kp = KernelParams::new(2, 0.5).unwrap();
        let cloud = sample_m(&RngState::new(42, 9), 2, 0.5, 20_000, 1.0).unwrap();
        let (cal, report) = calibrate(&kp, &cloud).unwrap();
        // after calibration, projection of one at the origin is exactly 1
        let mass = mc_integrate_weighted(|_| c(1.0, 0.0), &cloud, 0.5).unwrap();
        let p1 = cal.norm_m * 1.0 * mass.re();
        assert!((p1 - 1.0).abs() < 1e-12);
        assert!(report.rel_stderr >= 0.0);
        // idempotent
        let (cal2, _) = calibrate(&cal, &cloud).unwrap();
        assert!((cal2.norm_m - cal.norm_m).abs() < 1e-12 * cal.norm_m.abs());
    }

    #[test]
    fn calibrate_ball_stable_across_seeds() {
        let kp = KernelParams::new(2, 1.0).unwrap();
        let c1 = sample_ball_star(&RngState::new(1, 0), 2, 40_000).unwrap();
        let c2 = sample_ball_star(&RngState::new(2, 0), 2, 40_000).unwrap();
        let (k1, r1) = calibrate(&kp, &c1).unwrap();
        let (k2, r2) = calibrate(&kp, &c2).unwrap();
        let combined = (r1.rel_stderr.powi(2) + r2.rel_stderr.powi(2)).sqrt();
        let rel = (k1.norm_ball - k2.norm_ball).abs() / k1.norm_ball;
        assert!(
            rel < 3.0 * combined,
            "norm_ball {} vs {} (combined rel se {combined})",
            k1.norm_ball,
            k2.norm_ball
        );
        // doubling the cloud moves the constant by less than 2 stderr
        let c3 = sample_ball_star(&RngState::new(1, 0), 2, 80_000).unwrap();
        let (k3, r3) = calibrate(&kp, &c3).unwrap();
        let comb2 = (r1.rel_stderr.powi(2) + r3.rel_stderr.powi(2)).sqrt();
        assert!((k3.norm_ball - k1.norm_ball).abs() / k1.norm_ball < 2.0 * comb2);
    }

    #[test]
    fn calibrate_rejects_mismatched_cloud() {
        let kp = KernelParams::new(3, 0.0).unwrap();
        let cloud = sample_m(&RngState::new(4, 0), 2, 0.0, 1000, 1.0).unwrap();
        assert!(matches!(
            calibrate(&kp, &cloud),
            Err(KernelError::CloudMismatch { .. })
        ));
    }
}
