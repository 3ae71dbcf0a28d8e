//! Reference computations for the test suites.
//!
//! Nothing here shares code with `qpiston-core`: the integrals are evaluated by
//! adaptive quadrature straight from their definitions and the thermal sums are
//! written out term by term.

use std::f64::consts::PI;

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

// (integral, error estimate, integral of |f|)
fn kronrod15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    let mut magnitude = WGK[7] * fc.abs();
    for (j, &x) in XGK.iter().take(7).enumerate() {
        let (lo, hi) = (f(c - h * x), f(c + h * x));
        kronrod += WGK[j] * (lo + hi);
        magnitude += WGK[j] * (lo.abs() + hi.abs());
        if j % 2 == 1 {
            gauss += WG[j / 2] * (lo + hi);
        }
    }
    (kronrod * h, ((kronrod - gauss) * h).abs(), magnitude * h.abs())
}

/// Adaptive Gauss-Kronrod (7/15) quadrature of `f` over `[a, b]`.
///
/// Bisects until each panel's Gauss/Kronrod disagreement is below its share of
/// `tol`, or below the rounding noise of the panel's `∫|f|`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> f64 {
    fn recurse<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
        let (value, err, magnitude) = kronrod15(f, a, b);
        if err <= tol || err <= 50.0 * f64::EPSILON * magnitude || depth == 0 {
            return value;
        }
        let m = 0.5 * (a + b);
        recurse(f, a, m, 0.5 * tol, depth - 1) + recurse(f, m, b, 0.5 * tol, depth - 1)
    }
    recurse(&f, a, b, tol, 40)
}

/// `∫₀¹ x φ_n(x) φ_k'(x) dx` with `φ_k(x) = √2 sin(kπx)`, by quadrature.
pub fn overlap_by_quadrature(n: usize, k: usize) -> f64 {
    let (nf, kf) = (n as f64, k as f64);
    // Start from 64 panels so that the highest modes are resolved before the
    // error estimate is trusted.
    let panels = 64;
    (0..panels)
        .map(|p| {
            let a = p as f64 / panels as f64;
            let b = (p + 1) as f64 / panels as f64;
            integrate(
                |x| x * 2.0 * (nf * PI * x).sin() * kf * PI * (kf * PI * x).cos(),
                a,
                b,
                1e-15,
            )
        })
        .sum()
}

/// Particle-in-a-box level `n` (1-based) for `ħ = m = 1`.
pub fn box_level(n: usize, length: f64) -> f64 {
    let nf = n as f64;
    nf * nf * PI * PI / (2.0 * length * length)
}

/// Truncated partition function, summed term by term.
pub fn partition_sum(beta: f64, length: f64, levels: usize) -> f64 {
    let mut z = 0.0;
    for n in 1..=levels {
        z += (-beta * box_level(n, length)).exp();
    }
    z
}

/// Boltzmann populations of the first `levels` box states.
pub fn boltzmann_populations(beta: f64, length: f64, levels: usize) -> Vec<f64> {
    let z = partition_sum(beta, length, levels);
    (1..=levels)
        .map(|n| (-beta * box_level(n, length)).exp() / z)
        .collect()
}

/// Overlap `∫₀ᵃ f(x) g(x) dx` of two real sampled functions by composite
/// Simpson's rule on `intervals` (even) panels.
pub fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, intervals: usize) -> f64 {
    assert!(intervals % 2 == 0, "Simpson's rule needs an even panel count");
    let h = (b - a) / intervals as f64;
    let mut acc = f(a) + f(b);
    for i in 1..intervals {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(a + i as f64 * h);
    }
    acc * h / 3.0
}
