//! Gamma/Beta helpers and Gauss–Jacobi quadrature rules.
//!
//! The radial direction of every integral in this crate carries a weight of
//! the form `u^beta * (1-u)^alpha` on `[0, 1]`, so Gauss–Jacobi rules are the
//! workhorse quadrature. Nodes are computed by Newton iteration on the Jacobi
//! recurrence (the classical `gaujac` scheme).

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SpecialError {
    #[error("gauss-jacobi requires alpha > -1 and beta > -1, got alpha={alpha}, beta={beta}")]
    InvalidJacobiExponent { alpha: f64, beta: f64 },
    #[error("gauss-jacobi requires at least 2 nodes, got {0}")]
    TooFewNodes(usize),
    #[error("gauss-jacobi Newton iteration failed to converge for node {node}")]
    NoConvergence { node: usize },
}

/// Lanczos coefficients (g = 7, 9 terms), the GSL set.
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_93,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_13,
    -176.615_029_162_140_59,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_571_6e-6,
    1.505_632_735_149_311_6e-7,
];

/// Natural log of the gamma function for x > 0.
pub fn ln_gamma(x: f64) -> f64 {
    assert!(x > 0.0, "ln_gamma requires x > 0, got {x}");
    if x < 0.5 {
        // reflection: Γ(x)Γ(1-x) = π / sin(πx)
        return std::f64::consts::PI.ln()
            - (std::f64::consts::PI * x).sin().ln()
            - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = LANCZOS[0];
    for (i, c) in LANCZOS.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + 7.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

pub fn gamma(x: f64) -> f64 {
    ln_gamma(x).exp()
}

/// ln B(a, b) = ln Γ(a) + ln Γ(b) − ln Γ(a+b).
pub fn ln_beta(a: f64, b: f64) -> f64 {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

/// Beta function B(a, b).
pub fn beta(a: f64, b: f64) -> f64 {
    ln_beta(a, b).exp()
}

/// A Gauss–Jacobi rule for `∫_{-1}^{1} (1-x)^alpha (1+x)^beta f(x) dx`.
///
/// Nodes are stored in descending order (largest first).
#[derive(Debug, Clone)]
pub struct GaussJacobi {
    pub alpha: f64,
    pub beta: f64,
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussJacobi {
    pub fn new(n: usize, alpha: f64, beta: f64) -> Result<Self, SpecialError> {
        if !(alpha > -1.0 && beta > -1.0) || !alpha.is_finite() || !beta.is_finite() {
            return Err(SpecialError::InvalidJacobiExponent { alpha, beta });
        }
        if n < 2 {
            return Err(SpecialError::TooFewNodes(n));
        }
        let mut x = vec![0.0f64; n];
        let mut w = vec![0.0f64; n];
        let nf = n as f64;
        let alfbet = alpha + beta;
        const EPS: f64 = 1e-14;
        const MAX_IT: usize = 60;

        for i in 0..n {
            // Initial guesses from the classical gaujac recipe; roots descend
            // from +1 toward -1.
            let mut z: f64 = match i {
                0 => {
                    let an = alpha / nf;
                    let bn = beta / nf;
                    let r1 = (1.0 + alpha) * (2.78 / (4.0 + nf * nf) + 0.768 * an / nf);
                    let r2 = 1.0 + 1.48 * an + 0.96 * bn + 0.452 * an * an + 0.83 * an * bn;
                    1.0 - r1 / r2
                }
                1 => {
                    let r1 = (4.1 + alpha) / ((1.0 + alpha) * (1.0 + 0.156 * alpha));
                    let r2 = 1.0 + 0.06 * (nf - 8.0) * (1.0 + 0.12 * alpha) / nf;
                    let r3 = 1.0 + 0.012 * beta * (1.0 + 0.25 * alpha.abs()) / nf;
                    x[0] - (1.0 - x[0]) * r1 * r2 * r3
                }
                2 => {
                    let r1 = (1.67 + 0.28 * alpha) / (1.0 + 0.37 * alpha);
                    let r2 = 1.0 + 0.22 * (nf - 8.0) / nf;
                    let r3 = 1.0 + 8.0 * beta / ((6.28 + beta) * nf * nf);
                    x[1] - (x[0] - x[1]) * r1 * r2 * r3
                }
                _ if i == n - 2 && n > 4 => {
                    let r1 = (1.0 + 0.235 * beta) / (0.766 + 0.119 * beta);
                    let r2 = 1.0 / (1.0 + 0.639 * (nf - 4.0) / (1.0 + 0.71 * (nf - 4.0)));
                    let r3 = 1.0 / (1.0 + 20.0 * alpha / ((7.5 + alpha) * nf * nf));
                    x[i - 1] + (x[i - 1] - x[i - 2]) * r1 * r2 * r3
                }
                _ if i == n - 1 && n > 3 => {
                    let r1 = (1.0 + 0.37 * beta) / (1.67 + 0.28 * beta);
                    let r2 = 1.0 / (1.0 + 0.22 * (nf - 8.0) / nf);
                    let r3 = 1.0 / (1.0 + 8.0 * alpha / ((6.28 + alpha) * nf * nf));
                    x[i - 1] + (x[i - 1] - x[i - 2]) * r1 * r2 * r3
                }
                _ => 3.0 * x[i - 1] - 3.0 * x[i - 2] + x[i - 3],
            };

            // Jacobi polynomial value/derivative at z via the three-term
            // recurrence; returns (P_n, P_{n-1}, P_n').
            let eval = |z: f64| -> (f64, f64, f64) {
                let mut temp = 2.0 + alfbet;
                let mut p1 = (alpha - beta + temp * z) / 2.0;
                let mut p2 = 1.0;
                for j in 2..=n {
                    let p3 = p2;
                    p2 = p1;
                    let jf = j as f64;
                    temp = 2.0 * jf + alfbet;
                    let a = 2.0 * jf * (jf + alfbet) * (temp - 2.0);
                    let b = (temp - 1.0)
                        * (alpha * alpha - beta * beta + temp * (temp - 2.0) * z);
                    let c = 2.0 * (jf - 1.0 + alpha) * (jf - 1.0 + beta) * temp;
                    p1 = (b * p2 - c * p3) / a;
                }
                let pp = (nf * (alpha - beta - temp * z) * p1
                    + 2.0 * (nf + alpha) * (nf + beta) * p2)
                    / (temp * (1.0 - z * z));
                (p1, p2, pp)
            };
            let mut converged = false;
            for _ in 0..MAX_IT {
                let (p1, _, pp) = eval(z);
                let z1 = z;
                z = z1 - p1 / pp;
                if (z - z1).abs() <= EPS {
                    converged = true;
                    break;
                }
            }
            if !converged {
                return Err(SpecialError::NoConvergence { node: i });
            }
            let (_, p2, pp) = eval(z);
            x[i] = z;
            w[i] = (ln_gamma(alpha + nf) + ln_gamma(beta + nf)
                - ln_gamma(nf + 1.0)
                - ln_gamma(nf + alfbet + 1.0))
            .exp()
                * (2.0 * nf + alfbet)
                * 2.0f64.powf(alfbet)
                / (pp * p2);
        }
        Ok(GaussJacobi {
            alpha,
            beta,
            nodes: x,
            weights: w,
        })
    }

    /// Rule for `∫_0^1 u^beta (1-u)^alpha f(u) du` obtained by mapping
    /// x = 2u - 1.
    pub fn on_unit_interval(n: usize, alpha: f64, beta: f64) -> Result<Self, SpecialError> {
        let base = Self::new(n, alpha, beta)?;
        let scale = 2.0f64.powf(alpha + beta + 1.0);
        let nodes = base.nodes.iter().map(|x| 0.5 * (x + 1.0)).collect();
        let weights = base.weights.iter().map(|w| w / scale).collect();
        Ok(GaussJacobi {
            alpha,
            beta,
            nodes,
            weights,
        })
    }

    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }
}

/// 12-point Gauss–Legendre rule on [0, 1], cached for the circle averages.
fn unit_legendre() -> &'static GaussJacobi {
    use std::sync::OnceLock;
    static RULE: OnceLock<GaussJacobi> = OnceLock::new();
    RULE.get_or_init(|| GaussJacobi::on_unit_interval(12, 0.0, 0.0).expect("legendre rule"))
}

/// Quadrature for `∫_0^1 u^beta (1-u)^alpha f(u) du` on a dyadic mesh graded
/// toward u = 1 at resolution `peak`, for integrands whose variation
/// concentrates near the right endpoint at that scale. The endpoint panel
/// carries the `(1-u)^alpha` weight exactly (Gauss–Jacobi); the remaining
/// panels fold the full weight into the integrand.
///
/// Returned weights include the weight function; sum ≈ B(beta+1, alpha+1).
pub fn graded_unit_rule(
    alpha: f64,
    beta: f64,
    peak: f64,
) -> Result<(Vec<f64>, Vec<f64>), SpecialError> {
    if !(alpha > -1.0) || !(beta > -1.0) {
        return Err(SpecialError::InvalidJacobiExponent { alpha, beta });
    }
    let gl = unit_legendre();
    let edge = GaussJacobi::on_unit_interval(12, 0.0, alpha)?; // weight x^alpha on [0,1]
    let w0 = peak.clamp(1e-15, 0.25);
    let mut nodes = Vec::new();
    let mut weights = Vec::new();
    // endpoint panel [1-w0, 1]: u = 1 - w0 x
    for (&x, &wx) in edge.nodes.iter().zip(&edge.weights) {
        let u = 1.0 - w0 * x;
        nodes.push(u);
        weights.push(wx * w0.powf(1.0 + alpha) * u.powf(beta));
    }
    // dyadic panels approaching 0
    let mut hi = 1.0 - w0;
    let mut width = w0;
    while hi > 0.0 {
        let lo = (hi - width).max(0.0);
        let span = hi - lo;
        for (&x, &wx) in gl.nodes.iter().zip(&gl.weights) {
            let u = lo + x * span;
            nodes.push(u);
            weights.push(wx * span * u.powf(beta) * (1.0 - u).powf(alpha));
        }
        hi = lo;
        width *= 2.0;
    }
    Ok((nodes, weights))
}

/// Circle average of an explicit function with a near-singularity at
/// θ = 0: integrates `(1/2π) ∫_{-π}^{π} g(θ) dθ = (1/π) ∫_0^π g(θ) dθ`
/// over dyadic panels graded toward 0 at resolution `width`.
pub fn circle_average_graded<F: Fn(f64) -> f64>(g: F, width: f64) -> f64 {
    let rule = unit_legendre();
    let w0 = width.clamp(1e-15, std::f64::consts::FRAC_PI_2);
    let mut lo = 0.0f64;
    let mut hi = w0;
    let mut acc = 0.0f64;
    loop {
        let span = hi - lo;
        for (&u, &wt) in rule.nodes.iter().zip(&rule.weights) {
            acc += wt * span * g(lo + u * span);
        }
        if hi >= std::f64::consts::PI {
            break;
        }
        lo = hi;
        hi = (2.0 * hi).min(std::f64::consts::PI);
    }
    acc / std::f64::consts::PI
}

/// `(1/2π) ∫ |1 - ρ e^{iθ}|^{-a} dθ` for ρ in [0, 1).
///
/// This is the exact average of the kernel power over the circle action;
/// substituting it for the raw integrand removes the phase dimension of the
/// boundary-peak variance in Monte-Carlo runs.
pub fn circle_average_inv_pow(a: f64, rho: f64) -> f64 {
    debug_assert!((0.0..1.0).contains(&rho), "rho must be in [0,1), got {rho}");
    if rho < 1e-14 {
        return 1.0;
    }
    let d = 1.0 - rho;
    let g = |theta: f64| {
        let s = (0.5 * theta).sin();
        (d * d + 4.0 * rho * s * s).powf(-0.5 * a)
    };
    circle_average_graded(g, d)
}
