//! Small numerical kernels: stable exponential ratios, log-sum-exp and
//! adaptive Gauss–Kronrod quadrature with explicit breakpoints.

/// `(e^x - 1) / x`, continuous at `x = 0` (value 1).
///
/// Uses a short Taylor series when `|x| < 1e-6`.
#[inline]
pub fn expm1_ratio(x: f64) -> f64 {
    if x.abs() < 1e-6 {
        1.0 + x * (0.5 + x / 6.0)
    } else {
        x.exp_m1() / x
    }
}

/// `ln((e^x - 1) / x)` without overflow for large `|x|`.
pub fn ln_expm1_ratio(x: f64) -> f64 {
    if x.abs() < 1.0 {
        expm1_ratio(x).ln()
    } else if x > 0.0 {
        // e^x - 1 = e^x (1 - e^{-x})
        x + (-(-x).exp_m1()).ln() - x.ln()
    } else {
        (-x.exp_m1()).ln() - (-x).ln()
    }
}

/// `ln Σ e^{x_i}`; returns `-∞` for an empty slice.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

// Gauss–Kronrod 7/15 nodes and weights on [-1, 1].
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
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quadrature {
    pub value: f64,
    pub error: f64,
    pub intervals: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct QuadratureOptions {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_intervals: usize,
}

impl Default for QuadratureOptions {
    fn default() -> Self {
        Self {
            abs_tol: 1e-13,
            rel_tol: 1e-12,
            max_intervals: 4000,
        }
    }
}

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for i in 0..7 {
        let dx = half * XGK[i];
        let s = f(center - dx) + f(center + dx);
        kronrod += WGK[i] * s;
        if i % 2 == 1 {
            gauss += WG[i / 2] * s;
        }
    }
    (kronrod * half, ((kronrod - gauss) * half).abs())
}

/// Adaptive integration over `[points[0], points[last]]`, with every entry
/// of `points` used as an initial breakpoint.
pub fn integrate_with_breaks<F: Fn(f64) -> f64>(
    f: F,
    points: &[f64],
    opts: QuadratureOptions,
) -> Quadrature {
    assert!(points.len() >= 2, "need at least two points");
    let mut parts: Vec<(f64, f64, f64, f64)> = points
        .windows(2)
        .filter(|w| w[1] > w[0])
        .map(|w| {
            let (v, e) = gk15(&f, w[0], w[1]);
            (w[0], w[1], v, e)
        })
        .collect();
    loop {
        let value: f64 = parts.iter().map(|p| p.2).sum();
        let error: f64 = parts.iter().map(|p| p.3).sum();
        let target = opts.abs_tol.max(opts.rel_tol * value.abs());
        if error <= target || parts.len() >= opts.max_intervals {
            return Quadrature {
                value,
                error,
                intervals: parts.len(),
            };
        }
        let (idx, _) = parts
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
            .expect("nonempty");
        let (a, b, _, _) = parts.swap_remove(idx);
        let m = 0.5 * (a + b);
        if m <= a || m >= b {
            // Interval exhausted at machine precision.
            let (v, _) = gk15(&f, a, b);
            parts.push((a, b, v, 0.0));
            continue;
        }
        let (v1, e1) = gk15(&f, a, m);
        let (v2, e2) = gk15(&f, m, b);
        parts.push((a, m, v1, e1));
        parts.push((m, b, v2, e2));
    }
}

pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, opts: QuadratureOptions) -> Quadrature {
    integrate_with_breaks(f, &[a, b], opts)
}

/// `∫_{points[0]}^∞ f`, breakpoints in `points` respected; the tail beyond
/// the last breakpoint is mapped to `[0, 1)` by `x = a + t / (1 - t)`.
pub fn integrate_to_infinity<F: Fn(f64) -> f64>(
    f: F,
    points: &[f64],
    opts: QuadratureOptions,
) -> Quadrature {
    let last = *points.last().expect("at least one point");
    let head = if points.len() >= 2 {
        integrate_with_breaks(&f, points, opts)
    } else {
        Quadrature {
            value: 0.0,
            error: 0.0,
            intervals: 0,
        }
    };
    let tail = integrate_with_breaks(
        |t: f64| {
            let u = 1.0 - t;
            let v = f(last + t / u) / (u * u);
            if v.is_finite() {
                v
            } else {
                0.0
            }
        },
        &[0.0, 0.25, 0.5, 0.75, 1.0],
        opts,
    );
    Quadrature {
        value: head.value + tail.value,
        error: head.error + tail.error,
        intervals: head.intervals + tail.intervals,
    }
}
