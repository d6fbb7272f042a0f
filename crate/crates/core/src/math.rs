//! Float helpers over `libm` so the crate stays `no_std`.

#[inline]
pub fn sqrt(x: f64) -> f64 {
    libm::sqrt(x)
}

#[inline]
pub fn tanh(x: f64) -> f64 {
    libm::tanh(x)
}

#[inline]
pub fn atanh(x: f64) -> f64 {
    libm::atanh(x)
}

#[inline]
pub fn exp(x: f64) -> f64 {
    libm::exp(x)
}

#[inline]
pub fn ln(x: f64) -> f64 {
    libm::log(x)
}

#[inline]
pub fn round(x: f64) -> f64 {
    libm::round(x)
}

#[inline]
pub fn sinh(x: f64) -> f64 {
    libm::sinh(x)
}

/// `ln(z + sqrt(z^2 - 1))` with `z` clamped to `>= 1`.
#[inline]
pub fn acosh_clamped(z: f64) -> f64 {
    let z = if z < 1.0 { 1.0 } else { z };
    ln(z + sqrt((z - 1.0) * (z + 1.0)))
}

#[inline]
pub fn acosh_clamped_grad(z: f64) -> f64 {
    if z <= 1.0 {
        0.0
    } else {
        1.0 / sqrt((z - 1.0) * (z + 1.0))
    }
}

const RATIO_SERIES: f64 = 1e-3;

/// `tanh(z) / z`, equal to 1 at the origin.
#[inline]
pub fn tanh_ratio(z: f64) -> f64 {
    if z.abs() < RATIO_SERIES {
        let z2 = z * z;
        1.0 - z2 / 3.0 + 2.0 * z2 * z2 / 15.0
    } else {
        tanh(z) / z
    }
}

#[inline]
pub fn tanh_ratio_grad(z: f64) -> f64 {
    if z.abs() < RATIO_SERIES {
        -2.0 * z / 3.0 + 8.0 * z * z * z / 15.0
    } else {
        let t = tanh(z);
        (z * (1.0 - t * t) - t) / (z * z)
    }
}

/// `atanh(z) / z`, equal to 1 at the origin.
#[inline]
pub fn atanh_ratio(z: f64) -> f64 {
    if z.abs() < RATIO_SERIES {
        let z2 = z * z;
        1.0 + z2 / 3.0 + z2 * z2 / 5.0
    } else {
        atanh(z) / z
    }
}

#[inline]
pub fn atanh_ratio_grad(z: f64) -> f64 {
    if z.abs() < RATIO_SERIES {
        2.0 * z / 3.0 + 4.0 * z * z * z / 5.0
    } else {
        (z / (1.0 - z * z) - atanh(z)) / (z * z)
    }
}

/// `z / sinh(z)`, equal to 1 at the origin.
#[inline]
pub fn z_over_sinh(z: f64) -> f64 {
    if z.abs() < 1e-6 {
        1.0 - z * z / 6.0
    } else {
        z / sinh(z)
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm_sq(a: &[f64]) -> f64 {
    dot(a, a)
}

pub fn norm(a: &[f64]) -> f64 {
    sqrt(norm_sq(a))
}
