//! Globally adaptive 15-point Gauss-Kronrod quadrature on finite and
//! semi-infinite intervals.
//!
//! Semi-infinite ranges `[a, inf)` are mapped onto `(0, 1]` before
//! refinement; the Kronrod rule never samples the endpoint `u = 0`.

use crate::error::Error;
use crate::scalar::Scalar;

const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];

// Gauss weights for XGK[1], XGK[3], XGK[5], XGK[7].
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

/// Change of variable applied to `[a, inf)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InfiniteTransform {
    /// `u = 1 / (1 + (t - a) / L)`.
    Reciprocal,
    /// `u = exp(-(t - a) / L)`; suited to exponentially decaying tails.
    Logarithmic,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureSpec<T> {
    pub rel_tol: T,
    pub abs_tol: T,
    /// Maximum bisection depth of any subinterval.
    pub max_depth: u32,
    pub transform: InfiniteTransform,
}

impl<T: Scalar> Default for QuadratureSpec<T> {
    fn default() -> Self {
        QuadratureSpec {
            rel_tol: T::lit(1e-6),
            abs_tol: T::lit(1e-9),
            max_depth: 40,
            transform: InfiniteTransform::Reciprocal,
        }
    }
}

impl<T: Scalar> QuadratureSpec<T> {
    pub fn with_tolerances(rel_tol: T, abs_tol: T) -> Self {
        QuadratureSpec {
            rel_tol,
            abs_tol,
            ..Default::default()
        }
    }

    /// Same spec with both tolerances multiplied by `factor`.
    pub fn scaled(&self, factor: T) -> Self {
        QuadratureSpec {
            rel_tol: self.rel_tol * factor,
            abs_tol: self.abs_tol * factor,
            ..*self
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Domain<T> {
    Finite(T, T),
    /// `[lower, inf)`; `scale` is the length over which the integrand
    /// varies, used by the change of variable.
    SemiInfinite { lower: T, scale: T },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Integral<T> {
    pub value: T,
    pub error: T,
}

impl<T: Scalar> Integral<T> {
    pub fn zero() -> Self {
        Integral {
            value: T::zero(),
            error: T::zero(),
        }
    }

    pub fn exact(value: T) -> Self {
        Integral {
            value,
            error: T::zero(),
        }
    }
}

impl<T: Scalar> std::ops::Add for Integral<T> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Integral {
            value: self.value + o.value,
            error: self.error + o.error,
        }
    }
}

impl<T: Scalar> std::ops::Sub for Integral<T> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Integral {
            value: self.value - o.value,
            error: self.error + o.error,
        }
    }
}

impl<T: Scalar> std::ops::Mul<T> for Integral<T> {
    type Output = Self;
    fn mul(self, k: T) -> Self {
        Integral {
            value: self.value * k,
            error: self.error * k.abs(),
        }
    }
}

/// Refinement stopped before reaching the requested tolerance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NonConvergence<T> {
    pub best: Integral<T>,
}

impl<T: Scalar> From<NonConvergence<T>> for Error {
    fn from(e: NonConvergence<T>) -> Self {
        Error::NonConvergence {
            value: e.best.value.to_f64().unwrap_or(f64::NAN),
            error: e.best.error.to_f64().unwrap_or(f64::NAN),
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Segment<T> {
    a: T,
    b: T,
    value: T,
    error: T,
    depth: u32,
}

fn rescale_error<T: Scalar>(err: T, res_abs: T, res_asc: T) -> T {
    let mut e = err.abs();
    if res_asc != T::zero() && e != T::zero() {
        let scale = (T::lit(200.0) * e / res_asc).powf(T::lit(1.5));
        e = if scale < T::one() { res_asc * scale } else { res_asc };
    }
    let eps = T::epsilon();
    if res_abs > T::min_positive_value() / (T::lit(50.0) * eps) {
        e = e.max(T::lit(50.0) * eps * res_abs);
    }
    e
}

fn kronrod<T: Scalar, F: FnMut(T) -> T>(f: &mut F, a: T, b: T) -> (T, T) {
    let half = T::lit(0.5);
    let center = half * (a + b);
    let half_len = half * (b - a);
    let fc = f(center);
    let mut res_k = fc * T::lit(WGK[7]);
    let mut res_g = fc * T::lit(WG[3]);
    let mut res_abs = res_k.abs();
    let mut fv1 = [T::zero(); 7];
    let mut fv2 = [T::zero(); 7];
    for j in 0..7 {
        let dx = half_len * T::lit(XGK[j]);
        let f1 = f(center - dx);
        let f2 = f(center + dx);
        fv1[j] = f1;
        fv2[j] = f2;
        let w = T::lit(WGK[j]);
        res_k = res_k + w * (f1 + f2);
        res_abs = res_abs + w * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            res_g = res_g + T::lit(WG[j / 2]) * (f1 + f2);
        }
    }
    let mean = res_k * half;
    let mut res_asc = T::lit(WGK[7]) * (fc - mean).abs();
    for j in 0..7 {
        res_asc = res_asc + T::lit(WGK[j]) * ((fv1[j] - mean).abs() + (fv2[j] - mean).abs());
    }
    let value = res_k * half_len;
    let res_abs = res_abs * half_len.abs();
    let res_asc = res_asc * half_len.abs();
    let err = rescale_error((res_k - res_g) * half_len, res_abs, res_asc);
    (value, err)
}

const MAX_SEGMENTS: usize = 4000;

fn adapt<T: Scalar, F: FnMut(T) -> T>(
    mut f: F,
    a: T,
    b: T,
    spec: &QuadratureSpec<T>,
) -> Result<Integral<T>, NonConvergence<T>> {
    let (value, error) = kronrod(&mut f, a, b);
    let mut segs = vec![Segment {
        a,
        b,
        value,
        error,
        depth: 0,
    }];
    loop {
        let total: T = segs.iter().fold(T::zero(), |s, g| s + g.value);
        let total_err: T = segs.iter().fold(T::zero(), |s, g| s + g.error);
        let result = Integral {
            value: total,
            error: total_err,
        };
        if !total.is_finite() {
            return Err(NonConvergence { best: result });
        }
        if total_err <= spec.abs_tol.max(spec.rel_tol * total.abs()) {
            return Ok(result);
        }
        let (worst, _) = segs
            .iter()
            .enumerate()
            .fold((0usize, T::neg_infinity()), |(bi, be), (i, g)| {
                if g.error > be {
                    (i, g.error)
                } else {
                    (bi, be)
                }
            });
        let seg = segs[worst];
        if seg.depth >= spec.max_depth || segs.len() >= MAX_SEGMENTS {
            return Err(NonConvergence { best: result });
        }
        let mid = T::lit(0.5) * (seg.a + seg.b);
        let (v1, e1) = kronrod(&mut f, seg.a, mid);
        let (v2, e2) = kronrod(&mut f, mid, seg.b);
        segs[worst] = Segment {
            a: seg.a,
            b: mid,
            value: v1,
            error: e1,
            depth: seg.depth + 1,
        };
        segs.push(Segment {
            a: mid,
            b: seg.b,
            value: v2,
            error: e2,
            depth: seg.depth + 1,
        });
    }
}

/// Integrates `f` over `domain` until the summed error estimate is below
/// `max(abs_tol, rel_tol * |value|)`.
pub fn integrate<T: Scalar, F: FnMut(T) -> T>(
    mut f: F,
    domain: Domain<T>,
    spec: &QuadratureSpec<T>,
) -> Result<Integral<T>, NonConvergence<T>> {
    match domain {
        Domain::Finite(a, b) => {
            if a == b {
                return Ok(Integral::zero());
            }
            if b < a {
                return adapt(|x| -f(x), b, a, spec);
            }
            adapt(f, a, b, spec)
        }
        Domain::SemiInfinite { lower, scale } => {
            let scale = if scale > T::zero() { scale } else { T::one() };
            match spec.transform {
                InfiniteTransform::Reciprocal => adapt(
                    |u: T| {
                        let t = lower + scale * (T::one() - u) / u;
                        if !t.is_finite() {
                            return T::zero();
                        }
                        let v = f(t) * scale / (u * u);
                        if v.is_finite() {
                            v
                        } else {
                            T::zero()
                        }
                    },
                    T::zero(),
                    T::one(),
                    spec,
                ),
                InfiniteTransform::Logarithmic => adapt(
                    |u: T| {
                        let t = lower - scale * u.ln();
                        if !t.is_finite() {
                            return T::zero();
                        }
                        let v = f(t) * scale / u;
                        if v.is_finite() {
                            v
                        } else {
                            T::zero()
                        }
                    },
                    T::zero(),
                    T::one(),
                    spec,
                ),
            }
        }
    }
}
