//! Flat key-value configuration: tank geometry, material data and solver
//! knobs, one `key = value` per line, `#` comments.

use crate::scheduler::SchedulerConfig;
use crate::tes::{
    IntermediateFluidProperties, LimitConfig, PcmProperties, TankGeometry, TesError, TesModel,
};
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },
    #[error(transparent)]
    Model(#[from] TesError),
}

/// Everything the CLI needs to build the model and the scheduler.
#[derive(Debug, Clone)]
pub struct AppConfig {
    pub l_tank_m: f64,
    pub d_tank_m: f64,
    pub e_tank_m: f64,
    pub n_pcm: usize,
    pub d_pcm_m: f64,
    pub e_pcm_m: f64,
    pub kappa_coat: f64,
    pub v_int_m3: f64,
    pub alpha_surr_w_m2k: f64,
    pub l_pcm_m: f64,
    pub cp_pcm: f64,
    pub h_lat_j_kg: f64,
    pub t_lat_c: f64,
    pub kappa_pcm: f64,
    pub rho_pcm: f64,
    pub n_lay: usize,
    pub cp_int: f64,
    pub rho_int: f64,
    pub q_e_min_w: f64,
    pub q_e_max_w: f64,
    pub dt_charge_k: f64,
    pub dt_discharge_k: f64,
    pub min_power_frac: f64,
    pub r_film_k_w: f64,
    pub r_floor_frac: f64,
    pub h_sens_span_j_kg: f64,
    pub n_sub: usize,
    pub gamma0: f64,
    pub ph: usize,
    pub dt_s: f64,
    pub gamma_min: f64,
    pub gamma_max: f64,
    pub jac_eps_frac: f64,
    pub limit_max_iters: usize,
    pub limit_tol_frac: f64,
}

impl Default for AppConfig {
    fn default() -> Self {
        AppConfig {
            l_tank_m: 1.4,
            d_tank_m: 0.4,
            e_tank_m: 0.005,
            n_pcm: 17,
            d_pcm_m: 0.0445,
            e_pcm_m: 0.001,
            kappa_coat: 16.3,
            v_int_m3: 0.109,
            alpha_surr_w_m2k: 0.1,
            l_pcm_m: 1.4,
            cp_pcm: 3690.0,
            h_lat_j_kg: 222_000.0,
            t_lat_c: -29.0,
            kappa_pcm: 0.64,
            rho_pcm: 1420.0,
            n_lay: 20,
            cp_int: 150.0,
            rho_int: 400.0,
            q_e_min_w: 80.0,
            q_e_max_w: 1600.0,
            dt_charge_k: 10.0,
            dt_discharge_k: 9.0,
            min_power_frac: 0.05,
            r_film_k_w: 0.08,
            r_floor_frac: 0.5,
            h_sens_span_j_kg: 80_000.0,
            n_sub: 60,
            gamma0: 0.10,
            ph: 12,
            dt_s: 3600.0,
            gamma_min: 0.05,
            gamma_max: 0.95,
            jac_eps_frac: 0.01,
            limit_max_iters: 5,
            limit_tol_frac: 0.01,
        }
    }
}

impl AppConfig {
    pub fn build_model(&self) -> Result<TesModel, TesError> {
        TesModel::new(
            TankGeometry {
                l_tank: self.l_tank_m,
                d_tank: self.d_tank_m,
                e_tank: self.e_tank_m,
                n_pcm: self.n_pcm,
                d_pcm: self.d_pcm_m,
                e_pcm: self.e_pcm_m,
                kappa_coat: self.kappa_coat,
                v_int: self.v_int_m3,
                alpha_surr: self.alpha_surr_w_m2k,
                n_lay: self.n_lay,
                l_pcm: self.l_pcm_m,
            },
            PcmProperties::new(
                self.cp_pcm,
                self.h_lat_j_kg,
                self.t_lat_c,
                self.kappa_pcm,
                self.rho_pcm,
            ),
            IntermediateFluidProperties {
                cp: self.cp_int,
                rho: self.rho_int,
            },
            LimitConfig {
                q_e_min: self.q_e_min_w,
                q_e_max: self.q_e_max_w,
                dt_charge: self.dt_charge_k,
                dt_discharge: self.dt_discharge_k,
                min_frac: self.min_power_frac,
                r_film: self.r_film_k_w,
                r_floor_frac: self.r_floor_frac,
            },
            self.h_sens_span_j_kg,
        )
    }

    pub fn scheduler_config(&self) -> SchedulerConfig {
        SchedulerConfig {
            ph: self.ph,
            dt_s: self.dt_s,
            gamma_min: self.gamma_min,
            gamma_max: self.gamma_max,
            n_sub: self.n_sub,
            jac_eps_frac: self.jac_eps_frac,
            limit_max_iters: self.limit_max_iters,
            limit_tol_frac: self.limit_tol_frac,
            parallel: true,
            ..SchedulerConfig::default()
        }
    }
}

/// Parse a configuration file; keys not present keep their defaults,
/// unknown keys are rejected with their line number.
pub fn load_config(path: &Path) -> Result<AppConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut cfg = AppConfig::default();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let stripped = raw.split('#').next().unwrap_or("").trim();
        if stripped.is_empty() {
            continue;
        }
        let Some((key, value)) = stripped.split_once('=') else {
            return Err(ConfigError::Parse {
                path: path.to_path_buf(),
                line,
                msg: format!("expected `key = value`, got `{stripped}`"),
            });
        };
        let key = key.trim();
        let value = value.trim();
        apply_key(&mut cfg, key, value).map_err(|msg| ConfigError::Parse {
            path: path.to_path_buf(),
            line,
            msg,
        })?;
    }
    Ok(cfg)
}

fn apply_key(cfg: &mut AppConfig, key: &str, value: &str) -> Result<(), String> {
    fn f(value: &str, key: &str) -> Result<f64, String> {
        value
            .parse::<f64>()
            .map_err(|_| format!("value `{value}` for `{key}` is not a number"))
    }
    fn u(value: &str, key: &str) -> Result<usize, String> {
        value
            .parse::<usize>()
            .map_err(|_| format!("value `{value}` for `{key}` is not a nonnegative integer"))
    }
    match key {
        "l_tank_m" => cfg.l_tank_m = f(value, key)?,
        "d_tank_m" => cfg.d_tank_m = f(value, key)?,
        "e_tank_m" => cfg.e_tank_m = f(value, key)?,
        "n_pcm" => cfg.n_pcm = u(value, key)?,
        "d_pcm_m" => cfg.d_pcm_m = f(value, key)?,
        "e_pcm_m" => cfg.e_pcm_m = f(value, key)?,
        "kappa_coat" => cfg.kappa_coat = f(value, key)?,
        "v_int_m3" => cfg.v_int_m3 = f(value, key)?,
        "alpha_surr_w_m2k" => cfg.alpha_surr_w_m2k = f(value, key)?,
        "l_pcm_m" => cfg.l_pcm_m = f(value, key)?,
        "cp_pcm" => cfg.cp_pcm = f(value, key)?,
        "h_lat_j_kg" => cfg.h_lat_j_kg = f(value, key)?,
        "t_lat_c" => cfg.t_lat_c = f(value, key)?,
        "kappa_pcm" => cfg.kappa_pcm = f(value, key)?,
        "rho_pcm" => cfg.rho_pcm = f(value, key)?,
        "n_lay" => cfg.n_lay = u(value, key)?,
        "cp_int" => cfg.cp_int = f(value, key)?,
        "rho_int" => cfg.rho_int = f(value, key)?,
        "q_e_min_w" => cfg.q_e_min_w = f(value, key)?,
        "q_e_max_w" => cfg.q_e_max_w = f(value, key)?,
        "dt_charge_k" => cfg.dt_charge_k = f(value, key)?,
        "dt_discharge_k" => cfg.dt_discharge_k = f(value, key)?,
        "min_power_frac" => cfg.min_power_frac = f(value, key)?,
        "r_film_k_w" => cfg.r_film_k_w = f(value, key)?,
        "r_floor_frac" => cfg.r_floor_frac = f(value, key)?,
        "h_sens_span_j_kg" => cfg.h_sens_span_j_kg = f(value, key)?,
        "n_sub" => cfg.n_sub = u(value, key)?,
        "gamma0" => cfg.gamma0 = f(value, key)?,
        "ph" => cfg.ph = u(value, key)?,
        "dt_s" => cfg.dt_s = f(value, key)?,
        "gamma_min" => cfg.gamma_min = f(value, key)?,
        "gamma_max" => cfg.gamma_max = f(value, key)?,
        "jac_eps_frac" => cfg.jac_eps_frac = f(value, key)?,
        "limit_max_iters" => cfg.limit_max_iters = u(value, key)?,
        "limit_tol_frac" => cfg.limit_tol_frac = f(value, key)?,
        other => return Err(format!("unknown key `{other}`")),
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_temp(content: &str) -> PathBuf {
        let dir = std::env::temp_dir().join("tes_sched_cfg_tests");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join(format!("cfg_{}.txt", std::process::id()));
        let mut fh = std::fs::File::create(&path).unwrap();
        fh.write_all(content.as_bytes()).unwrap();
        path
    }

    #[test]
    fn parses_overrides_and_comments() {
        let path = write_temp("# comment\n n_lay = 10 \nq_e_max_w = 2000 # inline\n\n");
        let cfg = load_config(&path).unwrap();
        assert_eq!(cfg.n_lay, 10);
        assert_eq!(cfg.q_e_max_w, 2000.0);
        assert_eq!(cfg.n_pcm, 17);
        std::fs::remove_file(path).ok();
    }

    #[test]
    fn rejects_unknown_key_with_line() {
        let path = write_temp("n_lay = 10\nbogus_key = 1\n");
        match load_config(&path).unwrap_err() {
            ConfigError::Parse { line, msg, .. } => {
                assert_eq!(line, 2);
                assert!(msg.contains("bogus_key"));
            }
            other => panic!("unexpected {other}"),
        }
        std::fs::remove_file(path).ok();
    }

    #[test]
    fn default_config_builds_a_model() {
        let cfg = AppConfig::default();
        let model = cfg.build_model().unwrap();
        assert_eq!(model.geom.n_lay, 20);
        assert!((model.layers.cylinder_mass - 2.8202273600816414).abs() < 1e-12);
    }
}
