//! Float math shims. `f64` transcendentals live in `std`, which this crate does
//! not link; route them through `libm` so the library builds for `no_std` targets.

#[inline]
pub fn sin(x: f64) -> f64 {
    libm::sin(x)
}

#[inline]
pub fn cos(x: f64) -> f64 {
    libm::cos(x)
}

#[inline]
pub fn sqrt(x: f64) -> f64 {
    libm::sqrt(x)
}

#[inline]
pub fn exp(x: f64) -> f64 {
    libm::exp(x)
}

/// x^2, spelled out since `f64::powi` is std-only.
#[inline]
pub fn sq(x: f64) -> f64 {
    x * x
}
