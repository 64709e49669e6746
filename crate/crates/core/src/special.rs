//! Special functions used by the closed-form series: Hurwitz zeta, the
//! two-dimensional superlinear kernel mass, and the normal CDF.

use std::f64::consts::SQRT_2;

// B_{2j} / (2j)!
const BERNOULLI_OVER_FACT: [f64; 8] = [
    1.0 / 6.0 / 2.0,
    -1.0 / 30.0 / 24.0,
    1.0 / 42.0 / 720.0,
    -1.0 / 30.0 / 40320.0,
    5.0 / 66.0 / 3628800.0,
    -691.0 / 2730.0 / 479001600.0,
    7.0 / 6.0 / 87178291200.0,
    -3617.0 / 510.0 / 20922789888000.0,
];

/// Hurwitz zeta `sum_{n >= 0} (q + n)^(-s)` for `s > 1`, `q > 0`.
///
/// Euler-Maclaurin with the head summed until `q + N >= 16`; relative error is
/// near machine precision for the exponents used here (s <= 40).
pub fn hurwitz_zeta(s: f64, q: f64) -> f64 {
    debug_assert!(s > 1.0 && q > 0.0);
    let mut head = 0.0;
    let mut a = q;
    while a < 16.0 {
        head += a.powf(-s);
        a += 1.0;
    }
    let mut tail = a.powf(1.0 - s) / (s - 1.0) + 0.5 * a.powf(-s);
    // rising factorial s (s+1) ... (s+2j-2) times a^(-s-2j+1)
    let mut fac = s;
    let mut pow = a.powf(-s - 1.0);
    let inv_a2 = 1.0 / (a * a);
    for (j, b) in BERNOULLI_OVER_FACT.iter().enumerate() {
        tail += b * fac * pow;
        let m = 2.0 * (j as f64 + 1.0);
        fac *= (s + m - 1.0) * (s + m);
        pow *= inv_a2;
    }
    head + tail
}

/// `sum_{u, v >= 0} (y + u + v)^(-s)` for `s > 2`, `y >= 1`.
///
/// Equal to `sum_{x >= y} (x - y + 1) x^(-s) = zeta(s-1, y) - (y-1) zeta(s, y)`.
pub fn quadrant_mass(s: f64, y: f64) -> f64 {
    hurwitz_zeta(s - 1.0, y) - (y - 1.0) * hurwitz_zeta(s, y)
}

/// Certified constant `B` with `quadrant_mass(s, x) <= B * x^(2-s)` for every `x >= y`.
pub fn quadrant_mass_majorant(s: f64, y: f64) -> f64 {
    1.0 / ((s - 1.0) * (s - 2.0)) + (s / (s - 1.0)) / y
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / SQRT_2)
}

/// Standard normal quantile: `erfc_inv` start, polished by two Newton steps
/// against [`normal_cdf`].
pub fn normal_quantile(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    let mut x = -SQRT_2 * statrs::function::erf::erfc_inv(2.0 * p);
    for _ in 0..2 {
        let density = (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
        if density > 0.0 {
            x -= (normal_cdf(x) - p) / density;
        }
    }
    x
}
