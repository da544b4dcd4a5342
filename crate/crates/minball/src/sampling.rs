//! Seedable sampling for the boundary measure, the cone slice, and the
//! minimal ball, plus Monte-Carlo and composite radial-quadrature
//! integrators.
//!
//! Determinism contract: a fixed `(seed, stream, count)` reproduces the
//! identical sample sequence bit-for-bit, independent of thread count.
//! Generation is split into fixed-size blocks, one ChaCha stream per block,
//! concatenated in block order; integrator reductions accumulate fixed-size
//! chunks in index order.

use crate::geometry::{
    bilinear, in_minimal_ball, minimal_norm, BoundaryFrame, CPoint,
};
use crate::special::{beta as beta_fn, GaussJacobi, SpecialError};
use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, StandardNormal};
use rayon::prelude::*;
use std::io::{BufRead, Write};
use thiserror::Error;

/// Points generated per RNG block; fixed so results never depend on the
/// worker count.
const BLOCK: usize = 8192;

/// Chunk size for deterministic parallel reductions.
pub(crate) const REDUCE_CHUNK: usize = 2048;

#[derive(Debug, Error)]
pub enum SamplingError {
    #[error("weight exponent must exceed -1, got {0}")]
    BadWeightExponent(f64),
    #[error("sample count must be >= 1")]
    EmptySample,
    #[error("integrand returned a non-finite value at point index {index}")]
    NonFinite { index: usize },
    #[error("cloud invariant violated: {0}")]
    BadCloud(String),
    #[error(transparent)]
    Quadrature(#[from] SpecialError),
    #[error("cloud csv: {0}")]
    Csv(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Seed + stream identifier for reproducible sampling.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RngState {
    pub seed: u64,
    pub stream: u64,
}

impl RngState {
    pub fn new(seed: u64, stream: u64) -> Self {
        assert!(stream < (1 << 40), "stream id must fit in 40 bits");
        RngState { seed, stream }
    }

    /// A derived state with the same seed and a sub-stream id.
    pub fn substream(&self, k: u64) -> RngState {
        RngState::new(self.seed, self.stream.wrapping_mul(1 << 8).wrapping_add(k))
    }

    pub fn rng(&self) -> ChaCha8Rng {
        self.block_rng(0)
    }

    /// RNG for generation block `idx` of this stream.
    pub fn block_rng(&self, idx: u64) -> ChaCha8Rng {
        assert!(idx < (1 << 24), "block index must fit in 24 bits");
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream((self.stream << 24) | idx);
        rng
    }
}

/// Default scale constant for the cone measure in the polar identity.
///
/// Any positive value is admissible (every calibrated or ratio-based
/// quantity cancels it); this particular choice makes the weighted lift
/// from the ball norm-preserving, so cross-domain comparisons need no
/// extra bookkeeping.
pub fn default_mass_constant(n: usize) -> f64 {
    (4 * n * (n + 1) * (n + 1)) as f64
}

/// Which domain a cloud discretizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Domain {
    /// The cone slice (points live in C^{n+1} on the null cone).
    M,
    /// The minimal ball (points live in C^n).
    BallStar,
}

/// A weighted point set representing a weighted measure.
///
/// On the cone slice the represented measure is
/// `(1-|z|^2)^s * (mass constant) * t^{2n-3} dt dmu`; on the ball it is
/// `(1-N(z)^2)^s dv` with `v` the normalized Lebesgue measure.
#[derive(Debug, Clone)]
pub struct SampleCloud {
    pub domain: Domain,
    pub n: usize,
    pub points: Vec<CPoint>,
    pub weights: Vec<f64>,
    /// Weight exponent s of the represented measure.
    pub weight_exponent: f64,
    /// Declared total mass; the weights sum to this.
    pub total_mass: f64,
    /// Rejection acceptance ratio, where applicable.
    pub acceptance: Option<f64>,
}

impl SampleCloud {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Boundary defect of the domain: 1-|z|^2 on the cone slice,
    /// 1-N(z)^2 on the ball.
    pub fn boundary_defect(&self, z: &CPoint) -> f64 {
        match self.domain {
            Domain::M => 1.0 - z.norm() * z.norm(),
            Domain::BallStar => 1.0 - minimal_norm(z) * minimal_norm(z),
        }
    }

    /// Rescales weights so the cloud represents a probability measure.
    pub fn normalized(&self) -> SampleCloud {
        let mut c = self.clone();
        let m = self.total_mass;
        for w in &mut c.weights {
            *w /= m;
        }
        c.total_mass = 1.0;
        c
    }

    /// Checks the declared invariants: domain membership of every point and
    /// agreement of the weight sum with the declared mass.
    pub fn validate(&self) -> Result<(), SamplingError> {
        if self.points.len() != self.weights.len() {
            return Err(SamplingError::BadCloud(
                "points/weights length mismatch".into(),
            ));
        }
        let sum: f64 = self.weights.iter().sum();
        if (sum - self.total_mass).abs() > 1e-9 * self.total_mass.abs().max(1.0) {
            return Err(SamplingError::BadCloud(format!(
                "weight sum {sum} != declared mass {}",
                self.total_mass
            )));
        }
        for (i, z) in self.points.iter().enumerate() {
            let ok = match self.domain {
                Domain::M => {
                    let t = z.norm();
                    t > 0.0
                        && t < 1.0
                        && bilinear(z, z).norm() <= crate::geometry::CONE_TOL * t * t
                }
                Domain::BallStar => in_minimal_ball(z),
            };
            if !ok {
                return Err(SamplingError::BadCloud(format!(
                    "point {i} violates domain membership"
                )));
            }
        }
        Ok(())
    }
}

/// First two columns of a Haar-distributed orthogonal matrix, via
/// Gram-Schmidt on Gaussian vectors with the positive-diagonal convention.
pub fn sample_haar_frame<R: Rng>(rng: &mut R, dim: usize) -> BoundaryFrame {
    assert!(dim >= 3, "frame dimension must be at least 3");
    loop {
        let g1: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        let g2: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        let n1: f64 = g1.iter().map(|v| v * v).sum::<f64>().sqrt();
        if n1 < 1e-12 {
            continue;
        }
        let x: Vec<f64> = g1.iter().map(|v| v / n1).collect();
        let proj: f64 = x.iter().zip(&g2).map(|(a, b)| a * b).sum();
        let mut y: Vec<f64> = g2.iter().zip(&x).map(|(b, a)| b - proj * a).collect();
        // one re-orthogonalization pass keeps the defect at machine level
        let proj2: f64 = x.iter().zip(&y).map(|(a, b)| a * b).sum();
        for (yi, xi) in y.iter_mut().zip(&x) {
            *yi -= proj2 * xi;
        }
        let n2: f64 = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        if n2 < 1e-12 {
            continue;
        }
        for v in &mut y {
            *v /= n2;
        }
        match BoundaryFrame::new(x, y) {
            Ok(f) => return f,
            Err(_) => continue,
        }
    }
}

/// A batch of Haar frames, blocked for determinism and generated in
/// parallel.
pub fn sample_frames(state: &RngState, n: usize, count: usize) -> Vec<BoundaryFrame> {
    let dim = n + 1;
    let blocks = count.div_ceil(BLOCK);
    (0..blocks)
        .into_par_iter()
        .map(|b| {
            let take = BLOCK.min(count - b * BLOCK);
            let mut rng = state.block_rng(b as u64);
            (0..take)
                .map(|_| sample_haar_frame(&mut rng, dim))
                .collect::<Vec<_>>()
        })
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect()
}

/// Cloud for the weighted cone-slice measure with exponent `s`.
///
/// Points are `t * xi` with `xi` boundary-uniform and `t^2 ~ Beta(n-1, s+1)`
/// (importance sampling of the radial weight), equal weights summing to
/// `(m_n/2) * B(n-1, s+1)`.
pub fn sample_m(
    state: &RngState,
    n: usize,
    s: f64,
    count: usize,
    m_n: f64,
) -> Result<SampleCloud, SamplingError> {
    if !(s > -1.0) || !s.is_finite() {
        return Err(SamplingError::BadWeightExponent(s));
    }
    if count == 0 {
        return Err(SamplingError::EmptySample);
    }
    let dim = n + 1;
    let radial = Beta::new((n - 1) as f64, s + 1.0).expect("valid Beta parameters");
    let blocks = count.div_ceil(BLOCK);
    let points: Vec<CPoint> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let take = BLOCK.min(count - b * BLOCK);
            let mut rng = state.block_rng(b as u64);
            (0..take)
                .map(|_| {
                    let frame = sample_haar_frame(&mut rng, dim);
                    let u: f64 = loop {
                        let u = radial.sample(&mut rng);
                        if u > 0.0 && u < 1.0 {
                            break u;
                        }
                    };
                    frame
                        .to_point()
                        .scale(Complex64::new(u.sqrt(), 0.0))
                })
                .collect::<Vec<_>>()
        })
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect();
    let mass = 0.5 * m_n * beta_fn((n - 1) as f64, s + 1.0);
    let w = mass / count as f64;
    Ok(SampleCloud {
        domain: Domain::M,
        n,
        points,
        weights: vec![w; count],
        weight_exponent: s,
        total_mass: mass,
        acceptance: None,
    })
}

/// Uniform cloud on the minimal ball via rejection from the Euclidean unit
/// ball of C^n (which contains it, since N >= |.|). Represents the
/// normalized Lebesgue measure: mass 1, exponent 0.
pub fn sample_ball_star(
    state: &RngState,
    n: usize,
    count: usize,
) -> Result<SampleCloud, SamplingError> {
    if count == 0 {
        return Err(SamplingError::EmptySample);
    }
    let blocks = count.div_ceil(BLOCK);
    let results: Vec<(Vec<CPoint>, u64)> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let take = BLOCK.min(count - b * BLOCK);
            let mut rng = state.block_rng(b as u64);
            let mut pts = Vec::with_capacity(take);
            let mut trials = 0u64;
            while pts.len() < take {
                trials += 1;
                let g: Vec<f64> = (0..2 * n).map(|_| StandardNormal.sample(&mut rng)).collect();
                let gn: f64 = g.iter().map(|v| v * v).sum::<f64>().sqrt();
                if gn < 1e-12 {
                    continue;
                }
                let r: f64 = rng.gen::<f64>().powf(1.0 / (2 * n) as f64);
                let coords: Vec<Complex64> = (0..n)
                    .map(|j| Complex64::new(r * g[2 * j] / gn, r * g[2 * j + 1] / gn))
                    .collect();
                let z = CPoint::new(coords).expect("finite coordinates");
                if in_minimal_ball(&z) {
                    pts.push(z);
                }
            }
            (pts, trials)
        })
        .collect();
    let mut points = Vec::with_capacity(count);
    let mut trials = 0u64;
    for (pts, t) in results {
        points.extend(pts);
        trials += t;
    }
    let w = 1.0 / count as f64;
    Ok(SampleCloud {
        domain: Domain::BallStar,
        n,
        points,
        weights: vec![w; count],
        weight_exponent: 0.0,
        total_mass: 1.0,
        acceptance: Some(count as f64 / trials as f64),
    })
}

/// A Monte-Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy)]
pub struct McEstimate {
    pub value: Complex64,
    pub stderr: f64,
}

impl McEstimate {
    pub fn re(&self) -> f64 {
        self.value.re
    }
}

/// Weighted Monte-Carlo mean of `f` over the cloud, with standard error.
pub fn mc_integrate<F>(f: F, cloud: &SampleCloud) -> Result<McEstimate, SamplingError>
where
    F: Fn(&CPoint) -> Complex64,
{
    let n = cloud.len();
    if n == 0 {
        return Err(SamplingError::EmptySample);
    }
    let nf = n as f64;
    let mut sum = Complex64::new(0.0, 0.0);
    let mut sum_sq = 0.0f64;
    for (i, (z, &w)) in cloud.points.iter().zip(&cloud.weights).enumerate() {
        let x = f(z) * (nf * w);
        if !x.re.is_finite() || !x.im.is_finite() {
            return Err(SamplingError::NonFinite { index: i });
        }
        sum += x;
        sum_sq += x.norm_sqr();
    }
    let mean = sum / nf;
    let var = ((sum_sq - mean.norm_sqr() * nf) / (nf - 1.0).max(1.0)).max(0.0);
    Ok(McEstimate {
        value: mean,
        stderr: (var / nf).sqrt(),
    })
}

/// Same, integrating against the measure with a different weight exponent:
/// the factor `defect^(target - cloud.s)` is applied pointwise.
pub fn mc_integrate_weighted<F>(
    f: F,
    cloud: &SampleCloud,
    target_exponent: f64,
) -> Result<McEstimate, SamplingError>
where
    F: Fn(&CPoint) -> Complex64,
{
    let delta = target_exponent - cloud.weight_exponent;
    mc_integrate(
        |z| f(z) * cloud.boundary_defect(z).powf(delta),
        cloud,
    )
}

/// Composite estimator for integrals over the cone slice with weight
/// `(1-|z|^2)^s`: Gauss–Jacobi in the radius (exact for the boundary
/// weight), Monte-Carlo over boundary frames shared across radial nodes.
pub fn radial_angular_integrate<F>(
    f: F,
    n: usize,
    s: f64,
    radial_nodes: usize,
    angular_count: usize,
    state: &RngState,
    m_n: f64,
) -> Result<McEstimate, SamplingError>
where
    F: Fn(&CPoint) -> Complex64 + Sync,
{
    let frames = sample_frames(state, n, angular_count);
    radial_angular_with_frames(f, n, s, radial_nodes, &frames, m_n)
}

/// Radial-angular estimator over a caller-provided frame sample (so several
/// integrals can share the same angular randomness).
pub fn radial_angular_with_frames<F>(
    f: F,
    n: usize,
    s: f64,
    radial_nodes: usize,
    frames: &[BoundaryFrame],
    m_n: f64,
) -> Result<McEstimate, SamplingError>
where
    F: Fn(&CPoint) -> Complex64 + Sync,
{
    if !(s > -1.0) || !s.is_finite() {
        return Err(SamplingError::BadWeightExponent(s));
    }
    if frames.is_empty() {
        return Err(SamplingError::EmptySample);
    }
    let rule = GaussJacobi::on_unit_interval(radial_nodes, s, (n - 2) as f64)?;
    let radii: Vec<f64> = rule.nodes.iter().map(|u| u.sqrt()).collect();
    let half_mn = 0.5 * m_n;

    // Per-frame radial quadrature; frames reduced in fixed chunk order.
    let partials: Vec<func_reduce::Partial> = frames
        .par_chunks(REDUCE_CHUNK)
        .map(|chunk| {
            let mut p = func_reduce::Partial::default();
            for frame in chunk {
                let xi = frame.to_point();
                let mut g = Complex64::new(0.0, 0.0);
                for (t, &w) in radii.iter().zip(&rule.weights) {
                    g += f(&xi.scale(Complex64::new(*t, 0.0))) * w;
                }
                g *= half_mn;
                p.push(g);
            }
            p
        })
        .collect();

    let mut total = func_reduce::Partial::default();
    for p in partials {
        total.merge(&p);
    }
    if !total.finite {
        return Err(SamplingError::NonFinite { index: 0 });
    }
    Ok(total.estimate())
}

pub(crate) mod func_reduce {
    use super::McEstimate;
    use num_complex::Complex64;

    #[derive(Default, Clone)]
    pub struct Partial {
        pub sum: Complex64,
        pub sum_sq: f64,
        pub count: usize,
        pub finite: bool,
    }

    impl Partial {
        pub fn push(&mut self, x: Complex64) {
            if self.count == 0 {
                self.finite = true;
            }
            if !x.re.is_finite() || !x.im.is_finite() {
                self.finite = false;
            }
            self.sum += x;
            self.sum_sq += x.norm_sqr();
            self.count += 1;
        }

        pub fn merge(&mut self, other: &Partial) {
            if self.count == 0 {
                self.finite = other.finite;
            } else if other.count > 0 {
                self.finite = self.finite && other.finite;
            }
            self.sum += other.sum;
            self.sum_sq += other.sum_sq;
            self.count += other.count;
        }

        pub fn estimate(&self) -> McEstimate {
            let m = self.count as f64;
            let mean = self.sum / m;
            let var = ((self.sum_sq - mean.norm_sqr() * m) / (m - 1.0).max(1.0)).max(0.0);
            McEstimate {
                value: mean,
                stderr: (var / m).sqrt(),
            }
        }
    }
}

/// Writes a cloud as CSV: one comment line with metadata, a header, then
/// `re_0,im_0,...,re_{d-1},im_{d-1},weight` rows.
pub fn write_cloud_csv<W: Write>(cloud: &SampleCloud, out: &mut W) -> Result<(), SamplingError> {
    let dim = cloud.points.first().map(|p| p.dim()).unwrap_or(0);
    writeln!(
        out,
        "# domain={} n={} s={} mass={} dim={}",
        match cloud.domain {
            Domain::M => "M",
            Domain::BallStar => "BallStar",
        },
        cloud.n,
        cloud.weight_exponent,
        cloud.total_mass,
        dim
    )?;
    let mut header: Vec<String> = Vec::new();
    for j in 0..dim {
        header.push(format!("re{j}"));
        header.push(format!("im{j}"));
    }
    header.push("weight".into());
    writeln!(out, "{}", header.join(","))?;
    for (z, w) in cloud.points.iter().zip(&cloud.weights) {
        let mut row: Vec<String> = Vec::new();
        for c in z.coords() {
            row.push(format!("{}", c.re));
            row.push(format!("{}", c.im));
        }
        row.push(format!("{w}"));
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}

/// Reads a cloud written by [`write_cloud_csv`].
pub fn read_cloud_csv<R: BufRead>(input: R) -> Result<SampleCloud, SamplingError> {
    let mut lines = input.lines();
    let meta = lines
        .next()
        .ok_or_else(|| SamplingError::Csv("empty input".into()))??;
    let meta = meta
        .strip_prefix("# ")
        .ok_or_else(|| SamplingError::Csv("missing metadata line".into()))?;
    let mut domain = None;
    let mut n = None;
    let mut s = None;
    let mut mass = None;
    for kv in meta.split_whitespace() {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| SamplingError::Csv(format!("bad metadata field {kv}")))?;
        match k {
            "domain" => {
                domain = Some(match v {
                    "M" => Domain::M,
                    "BallStar" => Domain::BallStar,
                    other => return Err(SamplingError::Csv(format!("unknown domain {other}"))),
                })
            }
            "n" => n = v.parse::<usize>().ok(),
            "s" => s = v.parse::<f64>().ok(),
            "mass" => mass = v.parse::<f64>().ok(),
            _ => {}
        }
    }
    let (domain, n, s, mass) = match (domain, n, s, mass) {
        (Some(d), Some(n), Some(s), Some(m)) => (d, n, s, m),
        _ => return Err(SamplingError::Csv("incomplete metadata".into())),
    };
    let _header = lines
        .next()
        .ok_or_else(|| SamplingError::Csv("missing header".into()))??;
    let mut points = Vec::new();
    let mut weights = Vec::new();
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() < 3 || cells.len() % 2 == 0 {
            return Err(SamplingError::Csv(format!("bad row: {line}")));
        }
        let dim = (cells.len() - 1) / 2;
        let mut coords = Vec::with_capacity(dim);
        for j in 0..dim {
            let re: f64 = cells[2 * j]
                .parse()
                .map_err(|e| SamplingError::Csv(format!("bad number: {e}")))?;
            let im: f64 = cells[2 * j + 1]
                .parse()
                .map_err(|e| SamplingError::Csv(format!("bad number: {e}")))?;
            coords.push(Complex64::new(re, im));
        }
        let w: f64 = cells[cells.len() - 1]
            .parse()
            .map_err(|e| SamplingError::Csv(format!("bad weight: {e}")))?;
        points.push(CPoint::new(coords).map_err(|e| SamplingError::Csv(e.to_string()))?);
        weights.push(w);
    }
    Ok(SampleCloud {
        domain,
        n,
        points,
        weights,
        weight_exponent: s,
        total_mass: mass,
        acceptance: None,
    })
}
