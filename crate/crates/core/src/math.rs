// Float helpers that std would normally provide as inherent methods.

#[inline]
pub fn sqrt(x: f64) -> f64 {
    libm::sqrt(x)
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
pub fn log2(x: f64) -> f64 {
    libm::log2(x)
}

#[inline]
pub fn pow10(x: f64) -> f64 {
    libm::pow(10.0, x)
}

#[inline]
pub fn erf(x: f64) -> f64 {
    libm::erf(x)
}

#[inline]
pub fn abs(x: f64) -> f64 {
    libm::fabs(x)
}

#[inline]
pub fn round(x: f64) -> f64 {
    libm::round(x)
}

/// Converts a loss in dB to a power transmittance.
#[inline]
pub fn db_to_transmittance(loss_db: f64) -> f64 {
    pow10(-loss_db / 10.0)
}
