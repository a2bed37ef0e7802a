//! Physical constants (SI unless the name says otherwise).

/// Planck constant, J s.
pub const PLANCK: f64 = 6.626_070_15e-34;

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Mean Earth radius, km.
pub const EARTH_RADIUS_KM: f64 = 6371.0;

/// Standard gravitational parameter of the Earth, km^3/s^2.
pub const EARTH_GM_KM3_S2: f64 = 398_600.441_8;

/// Photon energy at the given wavelength (m), in joules.
pub fn photon_energy(wavelength_m: f64) -> f64 {
    PLANCK * SPEED_OF_LIGHT / wavelength_m
}

/// Converts a loss expressed in dB into a power transmission factor.
pub fn db_to_transmission(loss_db: f64) -> f64 {
    10f64.powf(-loss_db / 10.0)
}

/// Converts a transmission factor into dB (negative for losses).
pub fn transmission_to_db(eta: f64) -> f64 {
    10.0 * eta.log10()
}
