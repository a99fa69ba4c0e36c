//! Physical constants of the actuator and the parameter file format.
//!
//! Parameter files are TOML. Inertias may be given per testbed module
//! (`[modules]`) and are then aggregated into the two bodies of the reduced
//! model, or directly as `[inertia] j_psi / j_q`.

use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const DEFAULT_FILE: &str = include_str!("../../data/table2.toml");

/// Which magnitude multiplies the `beta` term of the hysteresis ODE.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HysteresisForm {
    /// `h' = a*phi' - b*|phi'|*h - g*phi'*|h|` (classic Bouc-Wen).
    #[default]
    RateMagnitude,
    /// `h' = a*phi' - b*|phi|*h - g*phi'*|h|`.
    PositionMagnitude,
}

/// Constants of the reduced two-body model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActuatorParams {
    /// Spring-output side inertia, kg m^2.
    pub j_psi: f64,
    /// Link inertia, kg m^2.
    pub j_q: f64,
    /// Link mass, kg.
    pub mass: f64,
    /// Link centre-of-mass distance, m.
    pub com: f64,
    /// Gravitational acceleration, m/s^2.
    pub grav: f64,
    /// Spring stiffness, N m/rad.
    pub stiffness: f64,
    pub tau_c_psi: f64,
    pub tau_c_q: f64,
    pub d_psi: f64,
    pub d_q: f64,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub hysteresis_form: HysteresisForm,
    /// Maximum spring deflection, rad.
    pub phi_max: f64,
    /// Maximum spring torque, N m.
    pub tau_s_max: f64,
    /// Motor angle bound, rad.
    pub theta_range: f64,
    /// Motor velocity command bound, rad/s.
    pub u_max: f64,
    /// Brake engagement delay, s.
    pub delay_brake: f64,
    /// Clutch engagement delay, s.
    pub delay_clutch: f64,
    /// Velocity scale of the `tanh` used in place of `sign` for smoothed friction, rad/s.
    pub eps_sign: f64,
}

/// Per-module inertias of the testbed, kg m^2. `None` marks a missing row.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModuleInertias {
    pub motor: Option<f64>,
    pub spring_input: Option<f64>,
    pub spring_output: Option<f64>,
    pub ts_input: Option<f64>,
    pub ts_output: Option<f64>,
    pub brake: Option<f64>,
    pub clutch: Option<f64>,
    pub link: Option<f64>,
}

impl ModuleInertias {
    /// Spring-side inertia: spring output, torque sensor, brake and clutch bodies.
    pub fn spring_side(&self) -> Result<f64> {
        let rows = [
            ("spring_output", self.spring_output),
            ("ts_input", self.ts_input),
            ("ts_output", self.ts_output),
            ("brake", self.brake),
            ("clutch", self.clutch),
        ];
        let mut sum = 0.0;
        for (name, v) in rows {
            sum += v.ok_or_else(|| Error::MissingParameter(format!("modules.{name}")))?;
        }
        Ok(sum)
    }

    pub fn link_side(&self) -> Result<f64> {
        self.link
            .ok_or_else(|| Error::MissingParameter("modules.link".into()))
    }
}

/// Everything except the two aggregated inertias.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NonInertialParams {
    pub mass: f64,
    pub com: f64,
    pub grav: f64,
    pub stiffness: f64,
    pub tau_c_psi: f64,
    pub tau_c_q: f64,
    pub d_psi: f64,
    pub d_q: f64,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub hysteresis_form: HysteresisForm,
    pub phi_max: f64,
    pub tau_s_max: f64,
    pub theta_range: f64,
    pub u_max: f64,
    pub delay_brake: f64,
    pub delay_clutch: f64,
    pub eps_sign: f64,
}

/// Collapses testbed module inertias into the two-body model.
pub fn aggregate_params(modules: &ModuleInertias, rest: &NonInertialParams) -> Result<ActuatorParams> {
    let p = ActuatorParams {
        j_psi: modules.spring_side()?,
        j_q: modules.link_side()?,
        mass: rest.mass,
        com: rest.com,
        grav: rest.grav,
        stiffness: rest.stiffness,
        tau_c_psi: rest.tau_c_psi,
        tau_c_q: rest.tau_c_q,
        d_psi: rest.d_psi,
        d_q: rest.d_q,
        alpha: rest.alpha,
        beta: rest.beta,
        gamma: rest.gamma,
        hysteresis_form: rest.hysteresis_form,
        phi_max: rest.phi_max,
        tau_s_max: rest.tau_s_max,
        theta_range: rest.theta_range,
        u_max: rest.u_max,
        delay_brake: rest.delay_brake,
        delay_clutch: rest.delay_clutch,
        eps_sign: rest.eps_sign,
    };
    p.validate()?;
    Ok(p)
}

impl Default for ActuatorParams {
    fn default() -> Self {
        ActuatorParams::from_toml_str(DEFAULT_FILE).expect("bundled parameter file is valid")
    }
}

impl ActuatorParams {
    /// `m * g * l`, the gravity torque amplitude in N m.
    pub fn gravity_torque(&self) -> f64 {
        self.mass * self.grav * self.com
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("j_psi", self.j_psi),
            ("j_q", self.j_q),
            ("stiffness", self.stiffness),
            ("eps_sign", self.eps_sign),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::param(name, format!("must be finite and > 0, got {v}")));
            }
        }
        let non_negative = [
            ("mass", self.mass),
            ("com", self.com),
            ("grav", self.grav),
            ("tau_c_psi", self.tau_c_psi),
            ("tau_c_q", self.tau_c_q),
            ("d_psi", self.d_psi),
            ("d_q", self.d_q),
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("gamma", self.gamma),
            ("phi_max", self.phi_max),
            ("tau_s_max", self.tau_s_max),
            ("theta_range", self.theta_range),
            ("u_max", self.u_max),
            ("delay_brake", self.delay_brake),
            ("delay_clutch", self.delay_clutch),
        ];
        for (name, v) in non_negative {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::param(name, format!("must be finite and >= 0, got {v}")));
            }
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<ActuatorParams> {
        let file: ParamFile = toml::from_str(text).map_err(|e| Error::ParameterFile(e.to_string()))?;
        file.into_params()
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<ActuatorParams> {
        let text = std::fs::read_to_string(path.as_ref())?;
        ActuatorParams::from_toml_str(&text)
    }

    /// High-level TOML rendering that `from_toml_str` reads back.
    pub fn to_toml_string(&self) -> String {
        let file = ParamFile {
            modules: None,
            inertia: Some(InertiaSection {
                j_psi: self.j_psi,
                j_q: self.j_q,
            }),
            link: LinkSection {
                mass: self.mass,
                com: self.com,
                grav: self.grav,
            },
            friction: FrictionSection {
                tau_c_q: self.tau_c_q,
                d_q: self.d_q,
                tau_c_psi: self.tau_c_psi,
                d_psi: self.d_psi,
            },
            spring: SpringSection {
                stiffness: self.stiffness,
                alpha: self.alpha,
                beta: self.beta,
                gamma: self.gamma,
                hysteresis_form: self.hysteresis_form,
            },
            limits: LimitsSection {
                phi_max: self.phi_max,
                tau_s_max: self.tau_s_max,
                theta_range: self.theta_range,
                u_max: self.u_max,
                motor_torque_max: None,
            },
            delays: DelaySection {
                brake: self.delay_brake,
                clutch: self.delay_clutch,
            },
            numerics: NumericsSection {
                eps_sign: self.eps_sign,
            },
        };
        toml::to_string(&file).expect("parameters serialize")
    }

    /// Frictionless copy (Coulomb and viscous terms zeroed).
    pub fn frictionless(&self) -> ActuatorParams {
        ActuatorParams {
            tau_c_psi: 0.0,
            tau_c_q: 0.0,
            d_psi: 0.0,
            d_q: 0.0,
            ..*self
        }
    }

    pub fn without_gravity(&self) -> ActuatorParams {
        ActuatorParams { grav: 0.0, ..*self }
    }

    /// Copy with stiffness, friction and inertias scaled by i.i.d. factors
    /// `1 + rel * N(0, 1)`.
    pub fn perturbed<R: Rng + ?Sized>(&self, rng: &mut R, rel: f64) -> ActuatorParams {
        if rel <= 0.0 {
            return *self;
        }
        let normal = Normal::new(0.0, rel).expect("finite std");
        let mut f = || (1.0 + normal.sample(rng)).max(0.05);
        ActuatorParams {
            j_psi: self.j_psi * f(),
            j_q: self.j_q * f(),
            stiffness: self.stiffness * f(),
            tau_c_psi: self.tau_c_psi * f(),
            tau_c_q: self.tau_c_q * f(),
            d_psi: self.d_psi * f(),
            d_q: self.d_q * f(),
            ..*self
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ParamFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    modules: Option<ModuleInertias>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    inertia: Option<InertiaSection>,
    link: LinkSection,
    friction: FrictionSection,
    spring: SpringSection,
    limits: LimitsSection,
    #[serde(default)]
    delays: DelaySection,
    #[serde(default)]
    numerics: NumericsSection,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct InertiaSection {
    j_psi: f64,
    j_q: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LinkSection {
    mass: f64,
    com: f64,
    #[serde(default = "default_grav")]
    grav: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FrictionSection {
    tau_c_q: f64,
    d_q: f64,
    tau_c_psi: f64,
    d_psi: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SpringSection {
    stiffness: f64,
    alpha: f64,
    beta: f64,
    gamma: f64,
    #[serde(default)]
    hysteresis_form: HysteresisForm,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LimitsSection {
    phi_max: f64,
    tau_s_max: f64,
    theta_range: f64,
    u_max: f64,
    /// Informational only; the velocity-controlled motor model has no torque input.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    motor_torque_max: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DelaySection {
    brake: f64,
    clutch: f64,
}

impl Default for DelaySection {
    fn default() -> Self {
        DelaySection {
            brake: 0.022,
            clutch: 0.023,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NumericsSection {
    eps_sign: f64,
}

impl Default for NumericsSection {
    fn default() -> Self {
        NumericsSection { eps_sign: 1e-2 }
    }
}

fn default_grav() -> f64 {
    9.81
}

impl ParamFile {
    fn into_params(self) -> Result<ActuatorParams> {
        let rest = NonInertialParams {
            mass: self.link.mass,
            com: self.link.com,
            grav: self.link.grav,
            stiffness: self.spring.stiffness,
            tau_c_psi: self.friction.tau_c_psi,
            tau_c_q: self.friction.tau_c_q,
            d_psi: self.friction.d_psi,
            d_q: self.friction.d_q,
            alpha: self.spring.alpha,
            beta: self.spring.beta,
            gamma: self.spring.gamma,
            hysteresis_form: self.spring.hysteresis_form,
            phi_max: self.limits.phi_max,
            tau_s_max: self.limits.tau_s_max,
            theta_range: self.limits.theta_range,
            u_max: self.limits.u_max,
            delay_brake: self.delays.brake,
            delay_clutch: self.delays.clutch,
            eps_sign: self.numerics.eps_sign,
        };
        match (self.modules, self.inertia) {
            (_, Some(inertia)) => {
                let modules = ModuleInertias {
                    spring_output: Some(inertia.j_psi),
                    ts_input: Some(0.0),
                    ts_output: Some(0.0),
                    brake: Some(0.0),
                    clutch: Some(0.0),
                    link: Some(inertia.j_q),
                    ..Default::default()
                };
                aggregate_params(&modules, &rest)
            }
            (Some(modules), None) => aggregate_params(&modules, &rest),
            (None, None) => Err(Error::MissingParameter("modules or inertia".into())),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn default_aggregates_module_rows() {
        let p = ActuatorParams::default();
        assert_relative_eq!(p.j_psi, 8.28e-3, max_relative = 1e-12);
        assert_eq!(p.j_q, 0.52);
        assert_eq!(p.stiffness, 15.0);
        assert!((p.stiffness * p.phi_max - p.tau_s_max).abs() < 1e-9);
        assert_relative_eq!(p.gravity_torque(), 2.3544, max_relative = 1e-12);
        assert_eq!((p.alpha, p.beta, p.gamma), (0.08, 2.0, 0.6));
        assert_eq!((p.delay_brake, p.delay_clutch), (0.022, 0.023));
    }

    #[test]
    fn missing_spring_chain_rows_is_an_error() {
        let rest = {
            let p = ActuatorParams::default();
            NonInertialParams {
                mass: p.mass,
                com: p.com,
                grav: p.grav,
                stiffness: p.stiffness,
                tau_c_psi: p.tau_c_psi,
                tau_c_q: p.tau_c_q,
                d_psi: p.d_psi,
                d_q: p.d_q,
                alpha: p.alpha,
                beta: p.beta,
                gamma: p.gamma,
                hysteresis_form: p.hysteresis_form,
                phi_max: p.phi_max,
                tau_s_max: p.tau_s_max,
                theta_range: p.theta_range,
                u_max: p.u_max,
                delay_brake: p.delay_brake,
                delay_clutch: p.delay_clutch,
                eps_sign: p.eps_sign,
            }
        };
        let modules = ModuleInertias {
            link: Some(0.52),
            ..Default::default()
        };
        let err = aggregate_params(&modules, &rest).unwrap_err();
        assert!(matches!(err, Error::MissingParameter(ref f) if f == "modules.spring_output"));
    }

    #[test]
    fn toml_round_trip() {
        let p = ActuatorParams::default();
        let back = ActuatorParams::from_toml_str(&p.to_toml_string()).unwrap();
        assert_relative_eq!(back.j_psi, p.j_psi, max_relative = 1e-15);
        assert_eq!(back.stiffness, p.stiffness);
        assert_eq!(back.hysteresis_form, p.hysteresis_form);
    }

    #[test]
    fn malformed_file_names_the_field() {
        let text = DEFAULT_FILE.replace("stiffness = 15.0", "stiffness = \"stiff\"");
        let err = ActuatorParams::from_toml_str(&text).unwrap_err().to_string();
        assert!(err.contains("stiffness"), "{err}");

        let text = DEFAULT_FILE.replace("stiffness = 15.0", "stiffness = -1.0");
        let err = ActuatorParams::from_toml_str(&text).unwrap_err().to_string();
        assert!(err.contains("stiffness"), "{err}");
    }
}
