use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::bundle::C64;
use crate::error::{Error, Result};

/// Exponent `m` in the raised cosine `cos^{2m}(πs/2)`; the profile is `C^{2m−1}`.
pub const RAISED_COSINE_POWER: i32 = 8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Family {
    /// `exp(−((x−c)/w)²)`
    Gaussian { center: f64, width: f64 },
    /// `exp(1 − 1/(1−s²))` on `|s| < 1`, `s = (x−c)/r`; equals 1 at the center.
    SmoothBump { center: f64, radius: f64 },
    /// `cos^{2m}(πs/2)` on `|s| ≤ 1`, normalized to unit integral.
    RaisedCosine { center: f64, radius: f64 },
    /// `Σ aᵢxⁱ` times the smooth bump.
    PolyTimesBump { coeffs: Vec<f64>, center: f64, radius: f64 },
}

impl Family {
    fn eval(&self, x: f64) -> f64 {
        match self {
            Family::Gaussian { center, width } => (-((x - center) / width).powi(2)).exp(),
            Family::SmoothBump { center, radius } => bump((x - center) / radius),
            Family::RaisedCosine { center, radius } => {
                let s = (x - center) / radius;
                if s.abs() >= 1.0 {
                    0.0
                } else {
                    (PI * s / 2.0).cos().powi(2 * RAISED_COSINE_POWER) / (radius * raised_cosine_mass())
                }
            }
            Family::PolyTimesBump { coeffs, center, radius } => {
                let b = bump((x - center) / radius);
                if b == 0.0 {
                    return 0.0;
                }
                coeffs.iter().rev().fold(0.0, |acc, a| acc * x + a) * b
            }
        }
    }

    fn support(&self) -> Option<(f64, f64)> {
        match self {
            Family::Gaussian { .. } => None,
            Family::SmoothBump { center, radius }
            | Family::RaisedCosine { center, radius }
            | Family::PolyTimesBump { center, radius, .. } => Some((center - radius, center + radius)),
        }
    }

    /// Half-width of the region carrying the mass.
    fn scale(&self) -> f64 {
        match self {
            Family::Gaussian { width, .. } => *width,
            Family::SmoothBump { radius, .. } | Family::RaisedCosine { radius, .. } | Family::PolyTimesBump { radius, .. } => {
                *radius
            }
        }
    }

    fn validate(&self) -> Result<()> {
        let s = self.scale();
        if !(s > 0.0 && s.is_finite()) {
            return Err(Error::InvalidSpec("function width/radius must be positive".into()));
        }
        Ok(())
    }
}

fn bump(s: f64) -> f64 {
    if s.abs() >= 1.0 {
        0.0
    } else {
        (1.0 - 1.0 / (1.0 - s * s)).exp()
    }
}

/// `∫_{−1}^{1} cos^{2m}(πs/2) ds = 2·C(2m,m)/4^m`.
fn raised_cosine_mass() -> f64 {
    let m = RAISED_COSINE_POWER as u32;
    let mut c = 1.0;
    for i in 0..m {
        c *= (2 * m - i) as f64 / (m - i) as f64;
    }
    2.0 * c / 4f64.powi(m as i32)
}

/// `f(x) = scale · Πᵢ factorᵢ(x)`. Closed under products and conjugation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FunctionSpec {
    pub factors: Vec<Family>,
    #[serde(with = "complex_pair")]
    pub scale: C64,
}

mod complex_pair {
    use super::C64;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(z: &C64, s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq([z.re, z.im])
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<C64, D::Error> {
        let [re, im] = <[f64; 2]>::deserialize(d)?;
        Ok(C64::new(re, im))
    }
}

impl FunctionSpec {
    pub fn new(f: Family) -> Result<Self> {
        f.validate()?;
        Ok(FunctionSpec {
            factors: vec![f],
            scale: C64::new(1.0, 0.0),
        })
    }

    pub fn gaussian(center: f64, width: f64) -> Result<Self> {
        FunctionSpec::new(Family::Gaussian { center, width })
    }

    pub fn smooth_bump(center: f64, radius: f64) -> Result<Self> {
        FunctionSpec::new(Family::SmoothBump { center, radius })
    }

    pub fn raised_cosine(center: f64, radius: f64) -> Result<Self> {
        FunctionSpec::new(Family::RaisedCosine { center, radius })
    }

    /// The zero function.
    pub fn zero() -> Self {
        FunctionSpec {
            factors: vec![Family::Gaussian { center: 0.0, width: 1.0 }],
            scale: C64::new(0.0, 0.0),
        }
    }

    /// `gaussian:c,w`, `bump:c,r`, `raised_cosine:c,r`, `poly_bump:c,r:a0;a1;…`.
    pub fn parse(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("cannot parse function '{s}'"));
        let mut parts = s.split(':');
        let kind = parts.next().ok_or_else(bad)?.trim();
        let nums: Vec<f64> = parts
            .next()
            .ok_or_else(bad)?
            .split(',')
            .map(|v| v.trim().parse::<f64>().map_err(|_| bad()))
            .collect::<Result<_>>()?;
        if nums.len() != 2 {
            return Err(bad());
        }
        let (c, r) = (nums[0], nums[1]);
        match kind {
            "gaussian" => FunctionSpec::gaussian(c, r),
            "bump" | "smooth_bump" => FunctionSpec::smooth_bump(c, r),
            "raised_cosine" | "cosine" => FunctionSpec::raised_cosine(c, r),
            "poly_bump" => {
                let coeffs = parts
                    .next()
                    .ok_or_else(bad)?
                    .split(';')
                    .map(|v| v.trim().parse::<f64>().map_err(|_| bad()))
                    .collect::<Result<Vec<_>>>()?;
                FunctionSpec::new(Family::PolyTimesBump {
                    coeffs,
                    center: c,
                    radius: r,
                })
            }
            _ => Err(bad()),
        }
    }

    pub fn eval(&self, x: f64) -> C64 {
        if self.scale == C64::new(0.0, 0.0) {
            return self.scale;
        }
        self.scale * self.factors.iter().map(|f| f.eval(x)).product::<f64>()
    }

    pub fn value_at_zero(&self) -> C64 {
        self.eval(0.0)
    }

    /// Intersection of the compact factors' supports.
    pub fn support(&self) -> Option<(f64, f64)> {
        self.factors.iter().filter_map(Family::support).reduce(|a, b| (a.0.max(b.0), a.1.min(b.1)))
    }

    pub fn is_compact(&self) -> bool {
        self.support().is_some()
    }

    /// Bound on `|x|` over the region where `f` is non-negligible.
    pub fn extent(&self) -> f64 {
        match self.support() {
            Some((lo, hi)) => lo.abs().max(hi.abs()),
            None => self
                .factors
                .iter()
                .map(|f| match f {
                    Family::Gaussian { center, width } => center.abs() + 7.0 * width,
                    _ => unreachable!("compact factors give a support"),
                })
                .fold(0.0, f64::max),
        }
    }

    fn scale_width(&self) -> f64 {
        match self.support() {
            Some((lo, hi)) => ((hi - lo) / 2.0).max(1e-3),
            None => self.factors.iter().map(Family::scale).fold(f64::INFINITY, f64::min),
        }
    }

    pub fn product(&self, other: &FunctionSpec) -> FunctionSpec {
        let mut factors = self.factors.clone();
        factors.extend(other.factors.iter().cloned());
        FunctionSpec {
            factors,
            scale: self.scale * other.scale,
        }
    }

    pub fn conj(&self) -> FunctionSpec {
        FunctionSpec {
            factors: self.factors.clone(),
            scale: self.scale.conj(),
        }
    }

    pub fn scaled(&self, c: C64) -> FunctionSpec {
        FunctionSpec {
            factors: self.factors.clone(),
            scale: self.scale * c,
        }
    }

    /// `f̂(t) = ∫ f(x) e^{itx} dx`.
    pub fn fourier_transform(&self, t: f64) -> C64 {
        if self.scale == C64::new(0.0, 0.0) {
            return self.scale;
        }
        if let Some((lo, hi)) = self.support() {
            if hi <= lo {
                return C64::new(0.0, 0.0);
            }
            return self.scale * oscillatory_integral(|x| self.factors.iter().map(|f| f.eval(x)).product(), lo, hi, t);
        }
        // Product of Gaussians: exp(−a x² + b x − c₀).
        let (mut a, mut b, mut c0) = (0.0, 0.0, 0.0);
        for f in &self.factors {
            if let Family::Gaussian { center, width } = f {
                let iw2 = 1.0 / (width * width);
                a += iw2;
                b += 2.0 * center * iw2;
                c0 += center * center * iw2;
            }
        }
        let z = C64::new(b, t);
        self.scale * (PI / a).sqrt() * (z * z / (4.0 * a) - c0).exp()
    }
}

const GL_ORDER: usize = 16;

/// Gauss–Legendre nodes and weights on `[−1, 1]` by Newton iteration.
pub fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        out.push((x, 2.0 / ((1.0 - x * x) * dp * dp)));
    }
    out
}

fn gl_panels<F: Fn(f64) -> f64>(f: &F, lo: f64, hi: f64, t: f64, panels: usize, nodes: &[(f64, f64)]) -> C64 {
    let h = (hi - lo) / panels as f64;
    let mut acc = C64::new(0.0, 0.0);
    for p in 0..panels {
        let mid = lo + (p as f64 + 0.5) * h;
        let mut s = C64::new(0.0, 0.0);
        for &(x, w) in nodes {
            let y = mid + 0.5 * h * x;
            s += w * f(y) * C64::from_polar(1.0, t * y);
        }
        acc += s * (0.5 * h);
    }
    acc
}

/// `∫_lo^hi g(x) e^{itx} dx` by panel doubling until successive values agree to 1e-13.
fn oscillatory_integral<F: Fn(f64) -> f64>(g: F, lo: f64, hi: f64, t: f64) -> C64 {
    thread_local! {
        static NODES: Vec<(f64, f64)> = gauss_legendre(GL_ORDER);
    }
    NODES.with(|nodes| {
        let mut panels = ((hi - lo) * t.abs() / PI).ceil().max(4.0) as usize;
        let mut prev = gl_panels(&g, lo, hi, t, panels, nodes);
        for _ in 0..12 {
            panels *= 2;
            let next = gl_panels(&g, lo, hi, t, panels, nodes);
            if (next - prev).norm() <= 1e-13 * (1.0 + next.norm()) {
                return next;
            }
            prev = next;
        }
        prev
    })
}

/// `|f̂| ≤ A/(1+|t|)^m` fitted on `[t_max/2, t_max]`.
#[derive(Clone, Debug, Serialize)]
pub struct DecayFit {
    pub a: f64,
    pub exponent: f64,
    pub t_max: f64,
}

/// Sampled `|f̂|` on `[0, t_max]` plus a polynomial decay model beyond.
#[derive(Clone, Debug, Serialize)]
pub struct FourierEnvelope {
    pub step: f64,
    pub samples: Vec<f64>,
    pub decay: DecayFit,
}

impl FourierEnvelope {
    /// `m` is the decay exponent of the model beyond the sampled range; for
    /// functions with `2d+4` integrable derivatives `m = 2d+4` is admissible.
    pub fn new(f: &FunctionSpec, m: f64) -> Self {
        let w = f.scale_width();
        let step = (0.25f64).min(PI / (8.0 * w.max(f.extent())));
        let t_max = (400.0 / w).clamp(40.0, 4000.0);
        let n = (t_max / step).ceil() as usize;
        let samples: Vec<f64> = (0..=n).map(|i| f.fourier_transform(i as f64 * step).norm()).collect();
        let t_max = n as f64 * step;
        let a = samples[n / 2..]
            .iter()
            .enumerate()
            .map(|(j, v)| v * (1.0 + (j + n / 2) as f64 * step).powf(m))
            .fold(0.0, f64::max);
        FourierEnvelope {
            step,
            samples,
            decay: DecayFit { a, exponent: m, t_max },
        }
    }

    /// `A` with `|f̂(t)| ≤ A/(1+|t|)^{e}` over the sampled range.
    pub fn fit_constant(&self, e: f64) -> f64 {
        self.samples
            .iter()
            .enumerate()
            .map(|(i, v)| v * (1.0 + i as f64 * self.step).powf(e))
            .fold(0.0, f64::max)
    }

    /// `(1/2π) ∫_{|t|>T} |f̂(t)| (1 + Ĉ(1+|t|)^n) dt`.
    pub fn tail(&self, t: f64, c_hat: f64, n_hat: f64) -> f64 {
        let g = |s: f64| 1.0 + c_hat * (1.0 + s).powf(n_hat);
        let t_max = self.decay.t_max;
        let mut acc = 0.0;
        if t < t_max {
            let i0 = (t / self.step).floor() as usize;
            for i in i0..self.samples.len() - 1 {
                let (s0, s1) = (i as f64 * self.step, (i + 1) as f64 * self.step);
                let lo = s0.max(t);
                if s1 <= lo {
                    continue;
                }
                let v = self.samples[i].max(self.samples[i + 1]);
                acc += v * g(s1) * (s1 - lo);
            }
        }
        let from = t.max(t_max);
        let m = self.decay.exponent;
        if m - 1.0 - n_hat <= 0.0 {
            return f64::INFINITY;
        }
        let rem = self.decay.a
            * ((1.0 + from).powf(1.0 - m) / (m - 1.0) + c_hat * (1.0 + from).powf(1.0 + n_hat - m) / (m - 1.0 - n_hat));
        2.0 * (acc + rem) / (2.0 * PI)
    }

    /// Smallest sampled `T` with `tail(T) ≤ target`, if any.
    pub fn truncation_for(&self, target: f64, c_hat: f64, n_hat: f64) -> Option<f64> {
        let mut lo = 0.0;
        let mut hi = self.decay.t_max;
        if self.tail(hi, c_hat, n_hat) > target {
            let mut t = hi;
            for _ in 0..40 {
                t *= 2.0;
                if self.tail(t, c_hat, n_hat) <= target {
                    hi = t;
                    break;
                }
            }
            if self.tail(hi, c_hat, n_hat) > target {
                return None;
            }
        }
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if self.tail(mid, c_hat, n_hat) <= target {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Some(hi)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let nodes = gauss_legendre(GL_ORDER);
        let w: f64 = nodes.iter().map(|n| n.1).sum();
        assert!((w - 2.0).abs() < 1e-14);
        for k in 0..(2 * GL_ORDER) {
            let got: f64 = nodes.iter().map(|(x, w)| w * x.powi(k as i32)).sum();
            let want = if k % 2 == 1 { 0.0 } else { 2.0 / (k as f64 + 1.0) };
            assert!((got - want).abs() < 1e-13, "k={k}");
        }
    }

    #[test]
    fn gaussian_transform_closed_form() {
        let f = FunctionSpec::gaussian(0.0, 1.0).unwrap();
        for t in [0.0, 0.5, 3.0, 10.0] {
            let want = PI.sqrt() * (-t * t / 4.0f64).exp();
            assert!((f.fourier_transform(t) - C64::new(want, 0.0)).norm() < 1e-14);
        }
        // Shifted and multiplied Gaussians against direct quadrature.
        let g = FunctionSpec::gaussian(0.7, 0.8).unwrap().product(&FunctionSpec::gaussian(-0.2, 1.3).unwrap());
        for t in [0.0, 1.3, 4.0] {
            let q = oscillatory_integral(|x| g.eval(x).re, -12.0, 12.0, t);
            assert!((g.fourier_transform(t) - q).norm() < 1e-11);
        }
    }

    #[test]
    fn raised_cosine_normalized() {
        let f = FunctionSpec::raised_cosine(0.0, 1.0).unwrap();
        assert!((f.fourier_transform(0.0) - C64::new(1.0, 0.0)).norm() < 1e-12);
        let g = FunctionSpec::raised_cosine(3.0, 0.5).unwrap();
        assert!((g.fourier_transform(0.0).re - 1.0).abs() < 1e-12);
        assert_eq!(g.value_at_zero(), C64::new(0.0, 0.0));
    }

    #[test]
    fn bump_transform_and_decay() {
        let f = FunctionSpec::smooth_bump(0.0, 1.0).unwrap();
        // Real and even, so the transform is real.
        let v = f.fourier_transform(2.0);
        assert!(v.im.abs() < 1e-13);
        let env = FourierEnvelope::new(&f, 3.0);
        let a = env.fit_constant(3.0);
        assert!(f.fourier_transform(10.0).norm() <= a / 11f64.powi(3));
        // Shift only changes the phase.
        let g = FunctionSpec::smooth_bump(1.5, 1.0).unwrap();
        assert!((g.fourier_transform(7.0).norm() - f.fourier_transform(7.0).norm()).abs() < 1e-12);
    }

    #[test]
    fn tail_is_monotone_and_reaches_target() {
        let f = FunctionSpec::gaussian(0.0, 1.0).unwrap();
        let env = FourierEnvelope::new(&f, 6.0);
        assert!(env.tail(1.0, 1.0, 0.5) > env.tail(5.0, 1.0, 0.5));
        let t = env.truncation_for(1e-8, 2.0, 0.5).unwrap();
        assert!(env.tail(t, 2.0, 0.5) <= 1e-8);
        assert!(t < 15.0, "{t}");
    }

    #[test]
    fn parse_and_algebra() {
        let f = FunctionSpec::parse("gaussian:0,1").unwrap();
        assert_eq!(f, FunctionSpec::gaussian(0.0, 1.0).unwrap());
        let p = FunctionSpec::parse("poly_bump:0,2:1;0;-1").unwrap();
        assert!((p.eval(0.5).re - 0.75 * bump(0.25)).abs() < 1e-15);
        assert!(FunctionSpec::parse("nope:1").is_err());
        let h = f.product(&FunctionSpec::raised_cosine(0.0, 1.0).unwrap());
        assert!(h.is_compact());
        assert!((h.eval(0.3) - f.eval(0.3) * FunctionSpec::raised_cosine(0.0, 1.0).unwrap().eval(0.3)).norm() < 1e-15);
        let c = f.scaled(C64::new(0.0, 2.0)).conj();
        assert_eq!(c.eval(0.0), C64::new(0.0, -2.0));
    }
}
