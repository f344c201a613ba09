//! Layered enthalpy-method model of the PCM thermal storage tank.
//!
//! Every PCM cylinder is split into `n_lay` equal-mass cylindrical layers
//! (index 0 innermost). A layer is *latent* while its specific enthalpy lies
//! strictly inside the band `(h_lat_minus, h_lat_plus)`; freezing drains the
//! band outside-in, melting refills it outside-in, and heat exchange with
//! the intermediate fluid passes through the conduction resistance of the
//! sensible shell outside the outermost latent layer. Temperatures are in
//! degrees Celsius; only differences enter the physics.
//!
//! Sign convention used throughout: *cold* energy `du_cold > 0` means
//! charging (layer enthalpies decrease, charge ratio rises).

use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TesError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

/// Phase-change material properties (per unit mass).
#[derive(Debug, Clone)]
pub struct PcmProperties {
    /// Sensible specific heat, J kg⁻¹ K⁻¹.
    pub cp_sensible: f64,
    /// Specific enthalpy of fusion, J kg⁻¹.
    pub h_lat: f64,
    /// Phase-change temperature, °C.
    pub t_lat: f64,
    /// Thermal conductivity, W m⁻¹ K⁻¹.
    pub kappa: f64,
    /// Density, kg m⁻³ (constant across the band).
    pub rho: f64,
    /// Enthalpy at the lower latency edge (fully frozen), J kg⁻¹.
    pub h_lat_minus: f64,
    /// Enthalpy at the upper latency edge (fully melted), J kg⁻¹.
    pub h_lat_plus: f64,
}

impl PcmProperties {
    /// Band edges follow the `h_lat_minus = 0` reference convention.
    pub fn new(cp_sensible: f64, h_lat: f64, t_lat: f64, kappa: f64, rho: f64) -> Self {
        PcmProperties {
            cp_sensible,
            h_lat,
            t_lat,
            kappa,
            rho,
            h_lat_minus: 0.0,
            h_lat_plus: h_lat,
        }
    }
}

/// TES tank geometry (Table-style design parameters).
#[derive(Debug, Clone)]
pub struct TankGeometry {
    pub l_tank: f64,
    pub d_tank: f64,
    pub e_tank: f64,
    pub n_pcm: usize,
    /// External diameter of a PCM cylinder including its coating, m.
    pub d_pcm: f64,
    /// Coating thickness, m.
    pub e_pcm: f64,
    /// Coating thermal conductivity, W m⁻¹ K⁻¹.
    pub kappa_coat: f64,
    /// Intermediate-fluid volume, m³.
    pub v_int: f64,
    /// Thermal-loss coefficient to the surroundings, W m⁻² K⁻¹.
    pub alpha_surr: f64,
    pub n_lay: usize,
    /// PCM cylinder length, m.
    pub l_pcm: f64,
}

#[derive(Debug, Clone)]
pub struct IntermediateFluidProperties {
    pub cp: f64,
    pub rho: f64,
}

/// Dynamic state: per-layer specific enthalpies (index 0 innermost) plus the
/// intermediate-fluid temperature.
#[derive(Debug, Clone, PartialEq)]
pub struct TesState {
    pub h_layers: Vec<f64>,
    pub t_int: f64,
}

/// Equal-mass layering of a PCM cylinder: `r_j = R sqrt((j+1)/n_lay)`.
#[derive(Debug, Clone)]
pub struct LayerGeometry {
    /// Outer radius of each layer, m (strictly increasing, last = PCM radius).
    pub radii: Vec<f64>,
    /// Volume of one layer, m³ (equal by construction).
    pub layer_volume: f64,
    /// Mass of one layer, kg.
    pub layer_mass: f64,
    /// PCM material radius (coating excluded), m.
    pub r_pcm: f64,
    /// Outer coating radius, m.
    pub r_coat_outer: f64,
    /// PCM mass of one cylinder, kg.
    pub cylinder_mass: f64,
}

/// Achievable cooling-power window per mode, W.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerLimits {
    pub q_e_min: f64,
    pub q_e_max: f64,
    pub q_tes_min: f64,
    pub q_tes_max: f64,
    pub q_tes_sec_min: f64,
    pub q_tes_sec_max: f64,
}

/// Configuration of the power-limit model.
#[derive(Debug, Clone)]
pub struct LimitConfig {
    /// Fixed evaporator window, W.
    pub q_e_min: f64,
    pub q_e_max: f64,
    /// Driving temperature difference for charging, K.
    pub dt_charge: f64,
    /// Driving temperature difference for discharging, K.
    pub dt_discharge: f64,
    /// Minimum limits as a fraction of the corresponding maximum.
    pub min_frac: f64,
    /// Convective film resistance per cylinder, K W⁻¹.
    pub r_film: f64,
    /// Radius floor for a fully sensible cylinder, as a fraction of the
    /// innermost layer radius.
    pub r_floor_frac: f64,
}

impl Default for LimitConfig {
    fn default() -> Self {
        LimitConfig {
            q_e_min: 80.0,
            q_e_max: 1600.0,
            dt_charge: 10.0,
            dt_discharge: 9.0,
            min_frac: 0.05,
            r_film: 0.0,
            r_floor_frac: 0.5,
        }
    }
}

/// Outcome of a cold-energy layer update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ColdEnergyOutcome {
    /// Energy actually booked into the layers, J (same sign as the request).
    pub consumed: f64,
    /// Unbookable remainder, J; nonzero only when the sensible bounds clamp.
    pub residual: f64,
    pub saturated: bool,
}

/// One plant step, with the integrated energy flows needed for bookkeeping.
#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub state: TesState,
    /// Integrated thermal gain from the surroundings, J.
    pub u_surr: f64,
    /// Integrated heat transferred from the intermediate fluid into the PCM
    /// cylinders, J (positive while discharging).
    pub u_int: f64,
    pub saturated: bool,
}

/// Compute the equal-mass layer geometry for the given tank.
pub fn layer_geometry(geom: &TankGeometry, props: &PcmProperties) -> Result<LayerGeometry, TesError> {
    if geom.n_lay < 1 {
        return Err(TesError::Config("n_lay must be >= 1".into()));
    }
    if geom.n_pcm < 1 {
        return Err(TesError::Config("n_pcm must be >= 1".into()));
    }
    let r_pcm = (geom.d_pcm - 2.0 * geom.e_pcm) / 2.0;
    if r_pcm <= 0.0 {
        return Err(TesError::Config(format!(
            "non-positive PCM radius: d_pcm {} with coating {}",
            geom.d_pcm, geom.e_pcm
        )));
    }
    if geom.l_pcm <= 0.0 || props.rho <= 0.0 {
        return Err(TesError::Config("l_pcm and rho must be positive".into()));
    }
    let n = geom.n_lay;
    let radii: Vec<f64> = (1..=n)
        .map(|j| r_pcm * ((j as f64) / (n as f64)).sqrt())
        .collect();
    let cylinder_volume = PI * r_pcm * r_pcm * geom.l_pcm;
    let layer_volume = cylinder_volume / n as f64;
    let layer_mass = layer_volume * props.rho;
    Ok(LayerGeometry {
        radii,
        layer_volume,
        layer_mass,
        r_pcm,
        r_coat_outer: geom.d_pcm / 2.0,
        cylinder_mass: layer_mass * n as f64,
    })
}

/// Tank model bundling geometry, material data and limit configuration.
#[derive(Debug, Clone)]
pub struct TesModel {
    pub geom: TankGeometry,
    pub pcm: PcmProperties,
    pub fluid: IntermediateFluidProperties,
    pub limits: LimitConfig,
    pub layers: LayerGeometry,
    /// Lower admissible specific enthalpy (subcooled solid), J kg⁻¹.
    pub h_sens_min: f64,
    /// Upper admissible specific enthalpy (superheated liquid), J kg⁻¹.
    pub h_sens_max: f64,
}

impl TesModel {
    pub fn new(
        geom: TankGeometry,
        pcm: PcmProperties,
        fluid: IntermediateFluidProperties,
        limits: LimitConfig,
        h_sens_span: f64,
    ) -> Result<Self, TesError> {
        if pcm.h_lat_plus - pcm.h_lat_minus <= 0.0 {
            return Err(TesError::Config("latency band must have positive width".into()));
        }
        if pcm.cp_sensible <= 0.0 || pcm.kappa <= 0.0 {
            return Err(TesError::Config("cp and kappa must be positive".into()));
        }
        if fluid.cp <= 0.0 || fluid.rho <= 0.0 || geom.v_int <= 0.0 {
            return Err(TesError::Config("intermediate fluid cp, rho, v_int must be positive".into()));
        }
        if geom.alpha_surr < 0.0 {
            return Err(TesError::Config("alpha_surr must be nonnegative".into()));
        }
        if h_sens_span < 0.0 {
            return Err(TesError::Config("h_sens_span must be nonnegative".into()));
        }
        let layers = layer_geometry(&geom, &pcm)?;
        Ok(TesModel {
            h_sens_min: pcm.h_lat_minus - h_sens_span,
            h_sens_max: pcm.h_lat_plus + h_sens_span,
            geom,
            pcm,
            fluid,
            limits,
            layers,
        })
    }

    /// Heat capacity of the intermediate fluid, J K⁻¹.
    pub fn fluid_heat_capacity(&self) -> f64 {
        self.fluid.cp * self.fluid.rho * self.geom.v_int
    }

    /// Latent capacity of one cylinder, `U_max - U_min`, J.
    pub fn latent_capacity_per_cylinder(&self) -> f64 {
        self.layers.cylinder_mass * (self.pcm.h_lat_plus - self.pcm.h_lat_minus)
    }

    /// Latent capacity of the whole tank, J.
    pub fn latent_capacity_tank(&self) -> f64 {
        self.latent_capacity_per_cylinder() * self.geom.n_pcm as f64
    }

    /// Outer tank surface (shell plus both end caps), m².
    pub fn tank_surface_area(&self) -> f64 {
        PI * self.geom.d_tank * self.geom.l_tank + 2.0 * PI * (self.geom.d_tank / 2.0).powi(2)
    }

    /// Uniform-enthalpy state realizing a given charge ratio.
    pub fn uniform_state(&self, gamma: f64, t_int: f64) -> TesState {
        let h = self.pcm.h_lat_plus - gamma * (self.pcm.h_lat_plus - self.pcm.h_lat_minus);
        TesState {
            h_layers: vec![h; self.geom.n_lay],
            t_int,
        }
    }

    /// Total thermal energy of the tank content, J (fluid plus all PCM).
    pub fn total_energy(&self, state: &TesState) -> f64 {
        let pcm: f64 = state.h_layers.iter().sum::<f64>()
            * self.layers.layer_mass
            * self.geom.n_pcm as f64;
        self.fluid_heat_capacity() * state.t_int + pcm
    }

    /// Normalized stored cold energy: 1 when fully frozen, 0 when fully
    /// melted. Not clipped; sensible excursions map outside [0, 1].
    pub fn charge_ratio(&self, state: &TesState) -> f64 {
        let u_pcm: f64 = state.h_layers.iter().sum::<f64>() * self.layers.layer_mass;
        let u_max = self.layers.cylinder_mass * self.pcm.h_lat_plus;
        let u_min = self.layers.cylinder_mass * self.pcm.h_lat_minus;
        (u_max - u_pcm) / (u_max - u_min)
    }

    /// Largest layer index strictly inside the latency band, if any.
    pub fn find_outermost_latent_layer(&self, state: &TesState) -> Option<usize> {
        state
            .h_layers
            .iter()
            .rposition(|&h| h > self.pcm.h_lat_minus && h < self.pcm.h_lat_plus)
    }

    /// The layer a transfer in the given direction acts on: freezing drains
    /// the outermost layer still holding enthalpy, melting refills the
    /// outermost layer not yet at the upper edge. On direction-consistent
    /// states this is the outermost latent layer; right after a
    /// charge/discharge reversal it is the cylinder edge, which is exactly
    /// the fresh front such a transition creates.
    pub fn active_front(&self, state: &TesState, charging: bool) -> Option<usize> {
        if charging {
            state.h_layers.iter().rposition(|&h| h > self.pcm.h_lat_minus)
        } else {
            state.h_layers.iter().rposition(|&h| h < self.pcm.h_lat_plus)
        }
    }

    /// Conduction resistance between the intermediate fluid and the latent
    /// front, aggregated over all cylinders, K W⁻¹. `j_boundary` is the
    /// outermost latent layer; `None` means a fully sensible cylinder, which
    /// uses the configured radius floor to avoid the log singularity.
    pub fn sensible_shell_resistance(&self, j_boundary: Option<usize>) -> f64 {
        let r_b = match j_boundary {
            Some(j) => self.layers.radii[j],
            None => self.limits.r_floor_frac * self.layers.radii[0],
        };
        let shell = (self.layers.r_pcm / r_b).ln() / (2.0 * PI * self.pcm.kappa * self.geom.l_pcm);
        let coat = (self.layers.r_coat_outer / self.layers.r_pcm).ln()
            / (2.0 * PI * self.geom.kappa_coat * self.geom.l_pcm);
        (shell + coat + self.limits.r_film) / self.geom.n_pcm as f64
    }

    /// Charging and discharging maxima for a given front position.
    pub fn limits_from_boundary(&self, j_boundary: Option<usize>) -> (f64, f64) {
        let r = self.sensible_shell_resistance(j_boundary);
        (self.limits.dt_charge / r, self.limits.dt_discharge / r)
    }

    /// Achievable power window for the current state. Each pair is
    /// evaluated from the front its own transfer direction would act on, so
    /// a charge/discharge reversal automatically sees the fresh front at
    /// the cylinder edge.
    pub fn power_limits(&self, state: &TesState) -> PowerLimits {
        let (q_tes_max, _) = self.limits_from_boundary(self.active_front(state, true));
        let (_, q_tes_sec_max) = self.limits_from_boundary(self.active_front(state, false));
        PowerLimits {
            q_e_min: self.limits.q_e_min,
            q_e_max: self.limits.q_e_max,
            q_tes_min: self.limits.min_frac * q_tes_max,
            q_tes_max,
            q_tes_sec_min: self.limits.min_frac * q_tes_sec_max,
            q_tes_sec_max,
        }
    }

    /// Thermal gain from the surroundings, W (positive into the tank).
    pub fn thermal_losses(&self, t_int: f64, t_surr: f64) -> f64 {
        self.geom.alpha_surr * self.tank_surface_area() * (t_surr - t_int)
    }

    /// PCM surface temperature seen by the fluid: the phase-change
    /// temperature while any layer is latent, otherwise the sensible
    /// temperature of the outermost layer.
    pub fn surface_temperature(&self, state: &TesState) -> f64 {
        if self.find_outermost_latent_layer(state).is_some() {
            return self.pcm.t_lat;
        }
        let h = *state.h_layers.last().expect("n_lay >= 1");
        if h >= self.pcm.h_lat_plus {
            self.pcm.t_lat + (h - self.pcm.h_lat_plus) / self.pcm.cp_sensible
        } else {
            self.pcm.t_lat + (h - self.pcm.h_lat_minus) / self.pcm.cp_sensible
        }
    }

    /// Book `du_cold` joules of cold energy (per cylinder, positive =
    /// charging) into the layer distribution.
    ///
    /// Latent capacity is consumed outside-in: freezing drains each layer to
    /// the lower band edge starting from the outermost layer holding
    /// enthalpy, melting refills toward the upper edge likewise. Interior
    /// layers are untouched while the front layer stays strictly latent, and
    /// everything outside the final front ends saturated at the edge matching
    /// the transfer direction. A direction reversal therefore restarts the
    /// front at the cylinder edge. Energy that no latent capacity can absorb
    /// becomes a uniform sensible enthalpy change over all layers, clamped at
    /// the sensible bounds with the unbooked remainder reported.
    pub fn apply_cold_energy(&self, state: &TesState, du_cold: f64) -> (TesState, ColdEnergyOutcome) {
        let mut out = state.clone();
        if du_cold == 0.0 {
            return (
                out,
                ColdEnergyOutcome {
                    consumed: 0.0,
                    residual: 0.0,
                    saturated: false,
                },
            );
        }
        let m_lay = self.layers.layer_mass;
        let n = self.geom.n_lay;
        let (h_lo, h_hi) = (self.pcm.h_lat_minus, self.pcm.h_lat_plus);
        let mut saturated = false;

        if du_cold > 0.0 {
            let mut remaining = du_cold;
            for j in (0..n).rev() {
                let h = out.h_layers[j];
                if h > h_lo {
                    let cap = (h - h_lo) * m_lay;
                    if remaining >= cap {
                        out.h_layers[j] = h_lo;
                        remaining -= cap;
                    } else {
                        out.h_layers[j] = h - remaining / m_lay;
                        remaining = 0.0;
                        break;
                    }
                }
            }
            if remaining > 0.0 {
                let dh = remaining / (m_lay * n as f64);
                let headroom = out
                    .h_layers
                    .iter()
                    .fold(f64::INFINITY, |m, &h| m.min(h - self.h_sens_min));
                if dh <= headroom {
                    for h in out.h_layers.iter_mut() {
                        *h -= dh;
                    }
                    remaining = 0.0;
                } else {
                    saturated = true;
                    for h in out.h_layers.iter_mut() {
                        let take = dh.min(*h - self.h_sens_min);
                        *h -= take;
                        remaining -= take * m_lay;
                    }
                }
            }
            let consumed = du_cold - remaining;
            (
                out,
                ColdEnergyOutcome {
                    consumed,
                    residual: remaining,
                    saturated,
                },
            )
        } else {
            let mut remaining = -du_cold;
            for j in (0..n).rev() {
                let h = out.h_layers[j];
                if h < h_hi {
                    let cap = (h_hi - h) * m_lay;
                    if remaining >= cap {
                        out.h_layers[j] = h_hi;
                        remaining -= cap;
                    } else {
                        out.h_layers[j] = h + remaining / m_lay;
                        remaining = 0.0;
                        break;
                    }
                }
            }
            if remaining > 0.0 {
                let dh = remaining / (m_lay * n as f64);
                let headroom = out
                    .h_layers
                    .iter()
                    .fold(f64::INFINITY, |m, &h| m.min(self.h_sens_max - h));
                if dh <= headroom {
                    for h in out.h_layers.iter_mut() {
                        *h += dh;
                    }
                    remaining = 0.0;
                } else {
                    saturated = true;
                    for h in out.h_layers.iter_mut() {
                        let take = dh.min(self.h_sens_max - *h);
                        *h += take;
                        remaining -= take * m_lay;
                    }
                }
            }
            let consumed = du_cold + remaining;
            (
                out,
                ColdEnergyOutcome {
                    consumed,
                    residual: -remaining,
                    saturated,
                },
            )
        }
    }

    /// Advance the tank by `dt` seconds under constant charging power
    /// `q_tes` and discharging power `q_tes_sec` (both >= 0, W), ambient
    /// `t_surr`, using `n_sub` backward-Euler substeps on the fluid balance.
    pub fn simulate_step(
        &self,
        state: &TesState,
        q_tes: f64,
        q_tes_sec: f64,
        t_surr: f64,
        dt: f64,
        n_sub: usize,
    ) -> Result<StepOutcome, TesError> {
        if !(q_tes.is_finite() && q_tes_sec.is_finite() && t_surr.is_finite() && dt.is_finite()) {
            return Err(TesError::NonFinite("simulate_step input"));
        }
        if q_tes < 0.0 || q_tes_sec < 0.0 {
            return Err(TesError::InvalidInput("cooling powers must be nonnegative".into()));
        }
        if dt <= 0.0 || n_sub == 0 {
            return Err(TesError::InvalidInput("dt must be positive, n_sub >= 1".into()));
        }
        if state.h_layers.len() != self.geom.n_lay || !state.t_int.is_finite() {
            return Err(TesError::InvalidInput("state does not match the model".into()));
        }

        let c_fluid = self.fluid_heat_capacity();
        let alpha_a = self.geom.alpha_surr * self.tank_surface_area();
        let n_pcm = self.geom.n_pcm as f64;
        let dt_sub = dt / n_sub as f64;

        let mut s = state.clone();
        let mut u_surr = 0.0;
        let mut u_int = 0.0;
        let mut saturated = false;

        for _ in 0..n_sub {
            let t_pcm = self.surface_temperature(&s);
            // Heat about to flow into the PCM melts from the edge inward,
            // heat flowing out freezes likewise; the conduction path runs to
            // the front of that direction.
            let melting = s.t_int > t_pcm;
            let r_tot = self.sensible_shell_resistance(self.active_front(&s, !melting));
            // Implicit update of the fluid balance keeps the substep stable
            // for any resistance.
            let denom = c_fluid + dt_sub * (alpha_a + 1.0 / r_tot);
            let t_next = (c_fluid * s.t_int
                + dt_sub * (q_tes_sec - q_tes + alpha_a * t_surr + t_pcm / r_tot))
                / denom;
            let q_int = (t_next - t_pcm) / r_tot;
            let q_surr = alpha_a * (t_surr - t_next);

            let du_cold = -(q_int / n_pcm) * dt_sub;
            let (next_state, outcome) = self.apply_cold_energy(&s, du_cold);
            s.h_layers = next_state.h_layers;
            // Heat the clamped layers could not take stays in the fluid.
            s.t_int = t_next - outcome.residual * n_pcm / c_fluid;
            saturated |= outcome.saturated;
            u_surr += q_surr * dt_sub;
            u_int += -outcome.consumed * n_pcm;
        }

        if !s.t_int.is_finite() || s.h_layers.iter().any(|h| !h.is_finite()) {
            return Err(TesError::NonFinite("simulate_step state"));
        }
        Ok(StepOutcome {
            state: s,
            u_surr,
            u_int,
            saturated,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Tank and PCM data used across the test suite (design-table values).
    pub(crate) fn table_geometry(n_lay: usize) -> TankGeometry {
        TankGeometry {
            l_tank: 1.4,
            d_tank: 0.4,
            e_tank: 0.005,
            n_pcm: 17,
            d_pcm: 0.0445,
            e_pcm: 0.001,
            kappa_coat: 16.3,
            v_int: 0.109,
            alpha_surr: 0.1,
            n_lay,
            l_pcm: 1.4,
        }
    }

    pub(crate) fn table_pcm() -> PcmProperties {
        PcmProperties::new(3690.0, 222_000.0, -29.0, 0.64, 1420.0)
    }

    pub(crate) fn table_fluid() -> IntermediateFluidProperties {
        IntermediateFluidProperties {
            cp: 150.0,
            rho: 400.0,
        }
    }

    pub(crate) fn table_model(n_lay: usize) -> TesModel {
        TesModel::new(
            table_geometry(n_lay),
            table_pcm(),
            table_fluid(),
            LimitConfig::default(),
            80_000.0,
        )
        .unwrap()
    }

    #[test]
    fn single_layer_degenerate_geometry() {
        let lg = layer_geometry(&table_geometry(1), &table_pcm()).unwrap();
        assert_eq!(lg.radii.len(), 1);
        assert!((lg.radii[0] - lg.r_pcm).abs() < 1e-15);
        assert!((lg.layer_volume - PI * lg.r_pcm * lg.r_pcm * 1.4).abs() < 1e-12);
    }

    #[test]
    fn four_layer_radii() {
        let mut geom = table_geometry(4);
        geom.d_pcm = 0.042; // R = 0.02 with 1 mm coating
        let lg = layer_geometry(&geom, &table_pcm()).unwrap();
        let expected = [0.01, 0.014142135623730952, 0.017320508075688773, 0.02];
        for (r, e) in lg.radii.iter().zip(expected) {
            assert!((r - e).abs() < 1e-15, "radius {r} vs {e}");
        }
    }

    #[test]
    fn table_cylinder_mass() {
        // pi * 0.02125^2 * 1.4 * 1420, cross-checked externally.
        let lg = layer_geometry(&table_geometry(20), &table_pcm()).unwrap();
        assert!((lg.cylinder_mass - 2.8202273600816414).abs() < 1e-12);
        assert!((lg.layer_mass * 20.0 - lg.cylinder_mass).abs() < 1e-12);
    }

    #[test]
    fn invalid_geometry_rejected() {
        let mut geom = table_geometry(4);
        geom.e_pcm = geom.d_pcm; // coating eats the whole cylinder
        assert!(layer_geometry(&geom, &table_pcm()).is_err());
    }

    #[test]
    fn charge_ratio_extremes_and_midpoint() {
        let model = table_model(8);
        let melted = model.uniform_state(0.0, -20.0);
        let frozen = model.uniform_state(1.0, -35.0);
        assert_eq!(model.charge_ratio(&melted), 0.0);
        assert_eq!(model.charge_ratio(&frozen), 1.0);

        let mut half = melted.clone();
        for j in 0..4 {
            half.h_layers[j] = model.pcm.h_lat_minus;
        }
        assert!((model.charge_ratio(&half) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn outermost_latent_layer_selection() {
        let model = table_model(4);
        let mid = model.pcm.h_lat / 2.0;
        let lo = model.pcm.h_lat_minus;
        let hi = model.pcm.h_lat_plus;

        let all_latent = TesState {
            h_layers: vec![mid; 4],
            t_int: -29.0,
        };
        assert_eq!(model.find_outermost_latent_layer(&all_latent), Some(3));

        let outer_frozen = TesState {
            h_layers: vec![mid, mid, lo, lo],
            t_int: -30.0,
        };
        assert_eq!(model.find_outermost_latent_layer(&outer_frozen), Some(1));

        let all_melted = TesState {
            h_layers: vec![hi; 4],
            t_int: -20.0,
        };
        assert_eq!(model.find_outermost_latent_layer(&all_melted), None);
    }

    #[test]
    fn zero_energy_is_identity() {
        let model = table_model(6);
        let state = model.uniform_state(0.37, -29.0);
        let (out, info) = model.apply_cold_energy(&state, 0.0);
        assert_eq!(out, state);
        assert_eq!(info.consumed, 0.0);
        assert!(!info.saturated);
    }

    #[test]
    fn quarter_band_charge_two_layers() {
        // Both layers at mid-band; a quarter of the cylinder's latent
        // capacity freezes exactly the outer layer's remaining half band.
        let model = table_model(2);
        let state = model.uniform_state(0.5, -29.0);
        let du = 0.25 * model.latent_capacity_per_cylinder();
        let (out, info) = model.apply_cold_energy(&state, du);
        assert_eq!(out.h_layers[0], state.h_layers[0]);
        assert_eq!(out.h_layers[1], model.pcm.h_lat_minus);
        assert!((model.charge_ratio(&out) - 0.75).abs() < 1e-12);
        assert_eq!(info.residual, 0.0);
    }

    #[test]
    fn band_crossing_spills_inward() {
        let model = table_model(2);
        let mut state = model.uniform_state(0.5, -29.0);
        let m_lay = model.layers.layer_mass;
        // Outer layer nearly frozen.
        state.h_layers[1] = model.pcm.h_lat_minus + 1000.0;
        let eps = 50.0 * m_lay; // 50 J/kg worth of spill
        let du = 1000.0 * m_lay + eps;
        let (out, info) = model.apply_cold_energy(&state, du);
        assert_eq!(out.h_layers[1], model.pcm.h_lat_minus);
        assert!((out.h_layers[0] - (state.h_layers[0] - 50.0)).abs() < 1e-9);
        assert_eq!(info.residual, 0.0);
    }

    #[test]
    fn direction_reversal_restarts_at_edge() {
        // Charging history: outer layers frozen. Melting must attack the
        // outermost frozen layer, not the interior latent front.
        let model = table_model(4);
        let mid = model.pcm.h_lat / 2.0;
        let state = TesState {
            h_layers: vec![mid, mid, model.pcm.h_lat_minus, model.pcm.h_lat_minus],
            t_int: -28.0,
        };
        let m_lay = model.layers.layer_mass;
        let (out, info) = model.apply_cold_energy(&state, -500.0 * m_lay);
        assert_eq!(out.h_layers[0], mid);
        assert_eq!(out.h_layers[1], mid);
        assert_eq!(out.h_layers[2], model.pcm.h_lat_minus);
        assert!((out.h_layers[3] - 500.0).abs() < 1e-9);
        assert_eq!(info.residual, 0.0);
    }

    #[test]
    fn saturation_clamps_and_reports() {
        let model = table_model(3);
        let state = model.uniform_state(1.0, -35.0); // already fully frozen
        let capacity_to_floor =
            (model.pcm.h_lat_minus - model.h_sens_min) * model.layers.cylinder_mass;
        let du = capacity_to_floor + 1000.0;
        let (out, info) = model.apply_cold_energy(&state, du);
        assert!(info.saturated);
        assert!((info.residual - 1000.0).abs() < 1e-6);
        for &h in &out.h_layers {
            assert_eq!(h, model.h_sens_min);
        }
        // Booked energy still matches the enthalpy drop exactly.
        let dropped: f64 = state
            .h_layers
            .iter()
            .zip(&out.h_layers)
            .map(|(b, a)| (b - a) * model.layers.layer_mass)
            .sum();
        assert!((dropped - info.consumed).abs() <= 1e-9 * du.abs());
    }

    #[test]
    fn energy_bookkeeping_random_states() {
        let model = table_model(12);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..500 {
            let mut state = model.uniform_state(0.0, -29.0);
            for h in state.h_layers.iter_mut() {
                *h = rng.gen_range(model.h_sens_min..model.h_sens_max);
            }
            let du = rng.gen_range(-2.0..2.0) * model.latent_capacity_per_cylinder();
            let (out, info) = model.apply_cold_energy(&state, du);
            let booked: f64 = state
                .h_layers
                .iter()
                .zip(&out.h_layers)
                .map(|(b, a)| (b - a) * model.layers.layer_mass)
                .sum();
            let scale = 1.0 + du.abs();
            assert!(
                (booked - info.consumed).abs() <= 1e-9 * scale,
                "booked {booked} vs consumed {}",
                info.consumed
            );
            assert!(
                (info.consumed + info.residual - du).abs() <= 1e-9 * scale,
                "consumed {} + residual {} != du {du}",
                info.consumed,
                info.residual
            );
        }
    }

    #[test]
    fn shell_resistance_edge_and_pinned_values() {
        let model = table_model(20);
        // Front at the cylinder edge: only coating (film defaults to zero).
        let r_edge = model.sensible_shell_resistance(Some(19));
        let coat = (model.layers.r_coat_outer / model.layers.r_pcm).ln()
            / (2.0 * PI * model.geom.kappa_coat * model.geom.l_pcm);
        assert!((r_edge - coat / 17.0).abs() < 1e-15);

        // Innermost front, cross-checked externally.
        let r_deep = model.sensible_shell_resistance(Some(0));
        assert!((r_deep - 0.015669653495174882).abs() < 1e-12);

        // Monotone: deeper fronts mean more resistance.
        let mut prev = r_edge;
        for j in (0..19).rev() {
            let r = model.sensible_shell_resistance(Some(j));
            assert!(r > prev);
            prev = r;
        }
        // Fully sensible uses the radius floor: largest of all.
        assert!(model.sensible_shell_resistance(None) > prev);
    }

    #[test]
    fn shell_resistance_formula_term() {
        let mut geom = table_geometry(4);
        geom.d_pcm = 0.042;
        let model = TesModel::new(
            geom,
            table_pcm(),
            table_fluid(),
            LimitConfig::default(),
            80_000.0,
        )
        .unwrap();
        let r1 = model.sensible_shell_resistance(Some(1));
        let r_edge = model.sensible_shell_resistance(Some(3));
        let pcm_term = (r1 - r_edge) * 17.0;
        let expected = (0.02f64 / (0.02 * 0.5f64.sqrt())).ln() / (2.0 * PI * 0.64 * 1.4);
        assert!((pcm_term - expected).abs() < 1e-12);
    }

    #[test]
    fn power_limits_fully_latent_and_pinned() {
        let model = table_model(20);
        let state = model.uniform_state(0.5, -30.0);
        let lim = model.power_limits(&state);
        let r_edge = model.sensible_shell_resistance(Some(19));
        assert!((lim.q_tes_max - 10.0 / r_edge).abs() < 1e-9);
        assert!((lim.q_tes_min - 0.05 * lim.q_tes_max).abs() < 1e-9);
        assert_eq!(lim.q_e_max, 1600.0);

        // Mid-depth front, cross-checked externally (j0 = 10 of 20).
        let (q_ch, _) = model.limits_from_boundary(Some(9));
        assert!((q_ch - 2747.1644368852963).abs() < 1e-9);
    }

    #[test]
    fn power_limits_follow_each_direction_front() {
        let model = table_model(20);
        // Charging history: outer three quarters frozen solid.
        let mut state = model.uniform_state(0.9, -28.0);
        for j in 5..20 {
            state.h_layers[j] = model.pcm.h_lat_minus;
        }
        let lim = model.power_limits(&state);
        // More charging must conduct through the frozen shell to layer 5.
        let deep = model.limits_from_boundary(Some(4)).0;
        assert!((lim.q_tes_max - deep).abs() < 1e-9);
        // Discharging melts the frozen edge: a fresh front at the surface.
        let edge = model.limits_from_boundary(Some(19)).1;
        assert!((lim.q_tes_sec_max - edge).abs() < 1e-9);
    }

    #[test]
    fn losses_zero_gradient_and_pinned_area() {
        let model = table_model(20);
        assert_eq!(model.thermal_losses(-29.0, -29.0), 0.0);
        assert!((model.tank_surface_area() - 2.0106192982974673).abs() < 1e-12);
        let q = model.thermal_losses(-29.0, 21.0);
        assert!((q - 10.053096491487338).abs() < 1e-9);
    }

    #[test]
    fn equilibrium_state_is_stationary() {
        let model = table_model(10);
        let state = model.uniform_state(0.5, model.pcm.t_lat);
        let out = model
            .simulate_step(&state, 0.0, 0.0, model.pcm.t_lat, 3600.0, 60)
            .unwrap();
        assert!((out.state.t_int - state.t_int).abs() < 1e-9);
        // Enthalpies sit at ~1e5 J/kg; roundoff through the tiny shell
        // resistance stays below 1e-10 relative.
        for (a, b) in out.state.h_layers.iter().zip(&state.h_layers) {
            assert!((a - b).abs() < 1e-10 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn charging_cools_fluid_and_raises_gamma() {
        let model = table_model(10);
        let state = model.uniform_state(0.2, model.pcm.t_lat);
        let out = model
            .simulate_step(&state, 800.0, 0.0, 25.0, 3600.0, 60)
            .unwrap();
        assert!(out.state.t_int < state.t_int);
        assert!(model.charge_ratio(&out.state) > model.charge_ratio(&state));
    }

    #[test]
    fn substep_self_convergence() {
        // 3 h of constant charging: gamma with 3600 substeps per hour vs 36.
        let model = table_model(20);
        let mut coarse = model.uniform_state(0.3, -29.0);
        let mut fine = coarse.clone();
        for _ in 0..3 {
            coarse = model
                .simulate_step(&coarse, 600.0, 0.0, 25.0, 3600.0, 36)
                .unwrap()
                .state;
            fine = model
                .simulate_step(&fine, 600.0, 0.0, 25.0, 3600.0, 3600)
                .unwrap()
                .state;
        }
        let diff = (model.charge_ratio(&coarse) - model.charge_ratio(&fine)).abs();
        assert!(diff < 1e-3, "gamma substep drift {diff}");
    }

    #[test]
    fn step_energy_balance_closes() {
        let model = table_model(20);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let state = model.uniform_state(rng.gen_range(0.1..0.9), rng.gen_range(-32.0..-26.0));
            let q_tes = rng.gen_range(0.0..1500.0);
            let q_tes_sec = rng.gen_range(0.0..1500.0);
            let out = model
                .simulate_step(&state, q_tes, q_tes_sec, 25.0, 3600.0, 30)
                .unwrap();
            let de = model.total_energy(&out.state) - model.total_energy(&state);
            let expected = (q_tes_sec - q_tes) * 3600.0 + out.u_surr;
            let scale = model.total_energy(&state).abs().max(1.0);
            assert!(
                (de - expected).abs() <= 1e-9 * scale,
                "energy residual {}",
                (de - expected).abs()
            );
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let model = table_model(4);
        let state = model.uniform_state(0.5, -29.0);
        assert!(model
            .simulate_step(&state, -1.0, 0.0, 25.0, 3600.0, 10)
            .is_err());
        assert!(model
            .simulate_step(&state, 0.0, 0.0, 25.0, 0.0, 10)
            .is_err());
        assert!(model
            .simulate_step(&state, f64::NAN, 0.0, 25.0, 3600.0, 10)
            .is_err());
    }
}
