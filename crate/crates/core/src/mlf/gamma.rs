//! Gamma, log-Gamma, digamma and Beta for real arguments.

use crate::error::{FdError, Result};
use std::f64::consts::PI;

const LANCZOS_G: f64 = 7.0;
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

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;
pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// True when `x` is 0, -1, -2, ...
pub fn is_nonpositive_integer(x: f64) -> bool {
    x <= 0.0 && x == x.floor()
}

/// sin(pi x) with exact argument reduction, so integers give exact zeros.
pub fn sin_pi(x: f64) -> f64 {
    let n = x.round();
    let f = x - n;
    let s = (PI * f).sin();
    if (n as i64) % 2 == 0 {
        s
    } else {
        -s
    }
}

fn lanczos_sum(xm1: f64) -> f64 {
    let mut acc = LANCZOS[0];
    for (i, c) in LANCZOS.iter().enumerate().skip(1) {
        acc += c / (xm1 + i as f64);
    }
    acc
}

// x >= 0.5
fn gamma_pos(x: f64) -> f64 {
    if x == x.floor() && x <= 23.0 {
        let mut f = 1.0;
        let mut k = 2.0;
        while k < x {
            f *= k;
            k += 1.0;
        }
        return f;
    }
    let xm1 = x - 1.0;
    let t = xm1 + LANCZOS_G + 0.5;
    // split the power so it stays finite up to x ~ 171
    let half = t.powf(0.5 * (xm1 + 0.5));
    (2.0 * PI).sqrt() * half * (half * (-t).exp()) * lanczos_sum(xm1)
}

/// Gamma function. Errors at the poles 0, -1, -2, ...
pub fn gamma(x: f64) -> Result<f64> {
    if x.is_nan() || is_nonpositive_integer(x) {
        return Err(FdError::Domain(format!("gamma pole at x={x}")));
    }
    Ok(gamma_unchecked(x))
}

pub(crate) fn gamma_unchecked(x: f64) -> f64 {
    if x < 0.5 {
        PI / (sin_pi(x) * gamma_pos(1.0 - x))
    } else {
        gamma_pos(x)
    }
}

/// 1/Gamma(x), zero at the poles.
pub fn rgamma(x: f64) -> f64 {
    if is_nonpositive_integer(x) {
        return 0.0;
    }
    if x > 171.0 {
        return (-ln_gamma_abs(x)).exp();
    }
    if x > 0.0 && x < 0.5 {
        // agree bitwise with 1 / gamma(x) on (0, 1/2)
        return 1.0 / gamma_unchecked(x);
    }
    if x < 0.5 {
        // 1/Gamma(x) = sin(pi x) Gamma(1-x) / pi
        let g = 1.0 - x;
        if g > 171.0 {
            let s = sin_pi(x);
            return s.signum() * (ln_gamma_abs(g) + s.abs().ln() - PI.ln()).exp();
        }
        return sin_pi(x) * gamma_pos(g) / PI;
    }
    1.0 / gamma_pos(x)
}

/// ln|Gamma(x)|.
pub fn ln_gamma_abs(x: f64) -> f64 {
    if is_nonpositive_integer(x) {
        return f64::INFINITY;
    }
    if x < 0.5 {
        return PI.ln() - sin_pi(x).abs().ln() - ln_gamma_abs(1.0 - x);
    }
    if x < 20.0 {
        return gamma_pos(x).ln();
    }
    let xm1 = x - 1.0;
    let t = xm1 + LANCZOS_G + 0.5;
    LN_SQRT_2PI + (xm1 + 0.5) * t.ln() - t + lanczos_sum(xm1).ln()
}

/// Digamma psi(x) = Gamma'(x)/Gamma(x).
pub fn digamma(x: f64) -> Result<f64> {
    if x.is_nan() || is_nonpositive_integer(x) {
        return Err(FdError::Domain(format!("digamma pole at x={x}")));
    }
    if x < 0.5 {
        // psi(x) = psi(1-x) - pi cot(pi x)
        let s = sin_pi(x);
        let c = sin_pi(x + 0.5);
        return Ok(digamma(1.0 - x)? - PI * c / s);
    }
    let mut x = x;
    let mut acc = 0.0;
    while x < 10.0 {
        acc -= 1.0 / x;
        x += 1.0;
    }
    let x2 = 1.0 / (x * x);
    // Bernoulli tail B_{2k}/(2k)
    let tail = x2
        * (1.0 / 12.0
            - x2 * (1.0 / 120.0
                - x2 * (1.0 / 252.0
                    - x2 * (1.0 / 240.0 - x2 * (1.0 / 132.0 - x2 * (691.0 / 32760.0 - x2 / 12.0))))));
    Ok(acc + x.ln() - 0.5 / x - tail)
}

/// Beta function B(a, b) for a, b > 0.
pub fn beta(a: f64, b: f64) -> Result<f64> {
    if !(a > 0.0 && b > 0.0) {
        return Err(FdError::Domain(format!("beta needs positive arguments, got ({a}, {b})")));
    }
    if a + b < 170.0 {
        return Ok(gamma_pos_any(a) * gamma_pos_any(b) / gamma_pos_any(a + b));
    }
    Ok((ln_gamma_abs(a) + ln_gamma_abs(b) - ln_gamma_abs(a + b)).exp())
}

fn gamma_pos_any(x: f64) -> f64 {
    gamma_unchecked(x)
}
