//! Float math routed through `std` or `libm` depending on the build.

#[cfg(feature = "std")]
mod imp {
    #[inline]
    pub fn abs(x: f64) -> f64 {
        x.abs()
    }
    #[inline]
    pub fn powf(x: f64, y: f64) -> f64 {
        x.powf(y)
    }
    #[inline]
    pub fn exp(x: f64) -> f64 {
        x.exp()
    }
    #[inline]
    pub fn floor(x: f64) -> f64 {
        x.floor()
    }
    #[inline]
    pub fn round(x: f64) -> f64 {
        x.round()
    }
}

#[cfg(not(feature = "std"))]
mod imp {
    #[inline]
    pub fn abs(x: f64) -> f64 {
        libm::fabs(x)
    }
    #[inline]
    pub fn powf(x: f64, y: f64) -> f64 {
        libm::pow(x, y)
    }
    #[inline]
    pub fn exp(x: f64) -> f64 {
        libm::exp(x)
    }
    #[inline]
    pub fn floor(x: f64) -> f64 {
        libm::floor(x)
    }
    #[inline]
    pub fn round(x: f64) -> f64 {
        libm::round(x)
    }
}

pub use imp::*;

/// |x|^p, with a fast path for the common quadratic case.
#[inline]
pub fn abs_pow(x: f64, p: f64) -> f64 {
    if p == 2.0 {
        x * x
    } else {
        powf(abs(x), p)
    }
}

/// |x|^(p-1) * sign(x), the derivative of |x|^p / p.
#[inline]
pub fn abs_pow_grad(x: f64, p: f64) -> f64 {
    if p == 2.0 {
        x
    } else if x == 0.0 {
        0.0
    } else {
        let s = if x < 0.0 { -1.0 } else { 1.0 };
        s * powf(abs(x), p - 1.0)
    }
}
