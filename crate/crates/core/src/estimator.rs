//! Reconstruction of the tank state from the measurable intermediate-fluid
//! temperature.
//!
//! Between two measurements the fluid energy balance pins the energy
//! exchanged with the PCM: the applied power references are assumed tracked
//! and held over the period, losses are integrated with a trapezoidal
//! (Tustin) average of the measured endpoints, and the remainder of the
//! balance is booked into the layer distribution with the same layer
//! algorithm the plant model uses. The fluid temperature itself is never
//! estimated, always overwritten by the measurement.

use crate::tes::{ColdEnergyOutcome, TesModel, TesState};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Measurement {
    /// Measured intermediate-fluid temperature, °C.
    pub t_int: f64,
    /// Ambient temperature, °C.
    pub t_surr: f64,
    /// Measurement instant, s.
    pub time_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatedState {
    /// Reconstructed layer enthalpies with the measured fluid temperature.
    pub state: TesState,
    /// Charge ratio of the reconstructed distribution.
    pub gamma: f64,
    /// Energy booked into the PCM at the last update, J (whole tank,
    /// positive while charging).
    pub last_du_tes: f64,
}

/// Cold start: the true distribution is unknowable, so the layers are
/// initialized uniformly at the enthalpy matching the configured charge
/// ratio, and the fluid temperature comes from the first measurement.
pub fn initial_estimate(model: &TesModel, gamma0: f64, m: &Measurement) -> EstimatedState {
    let state = model.uniform_state(gamma0, m.t_int);
    EstimatedState {
        gamma: model.charge_ratio(&state),
        state,
        last_du_tes: 0.0,
    }
}

/// Thermal energy gained from the surroundings over one period, J, using
/// the trapezoidal average of the endpoint fluid temperatures.
pub fn tustin_losses(
    model: &TesModel,
    t_int_prev: f64,
    t_int_now: f64,
    t_surr: f64,
    dt: f64,
) -> f64 {
    model.geom.alpha_surr
        * model.tank_surface_area()
        * (t_surr - 0.5 * (t_int_prev + t_int_now))
        * dt
}

/// Energy transferred from the intermediate fluid into all PCM cylinders
/// over the last period, J, from the fluid energy balance. Positive while
/// charging (the PCM absorbed cold energy).
pub fn estimate_transferred_energy(
    model: &TesModel,
    m: &Measurement,
    prev: &Measurement,
    q_tes_prev: f64,
    q_tes_sec_prev: f64,
    dt: f64,
) -> f64 {
    let du_surr = tustin_losses(model, prev.t_int, m.t_int, m.t_surr, dt);
    model.fluid_heat_capacity() * (m.t_int - prev.t_int)
        + (q_tes_prev - q_tes_sec_prev) * dt
        - du_surr
}

/// Book the transferred energy into the layer estimate and apply the fresh
/// measurement as feedback.
pub fn update_state(
    model: &TesModel,
    prev: &EstimatedState,
    du_tes: f64,
    m: &Measurement,
) -> (EstimatedState, ColdEnergyOutcome) {
    let du_cold = du_tes / model.geom.n_pcm as f64;
    let (mut state, outcome) = model.apply_cold_energy(&prev.state, du_cold);
    state.t_int = m.t_int;
    (
        EstimatedState {
            gamma: model.charge_ratio(&state),
            state,
            last_du_tes: du_tes,
        },
        outcome,
    )
}
