//! Run configuration: JSON schema, problem catalog and conversion to library types.

use serde::Deserialize;
use serde_json::Value;

use roughheat::coeffs::{CoefficientField, LeslieParameters, ThetaField};
use roughheat::data::{Envelope, Forcing, GMode, InitialDatum, Profile};
use roughheat::duhamel::{DuhamelConfig, Grid, ProblemSpec};
use roughheat::parametrix::ParametrixConfig;
use roughheat::quadrature::QuadratureConfig;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Catalog name or an inline problem object.
    pub problem: Value,
    pub grid: GridConfig,
    #[serde(default)]
    pub parametrix: ParametrixConfig,
    #[serde(default)]
    pub quadrature: QuadratureConfig,
    #[serde(default)]
    pub duhamel: DuhamelConfig,
    #[serde(default)]
    pub verify: VerifyConfig,
    #[serde(default)]
    pub study: StudyConfig,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub x_min: f64,
    pub x_max: f64,
    pub nx: usize,
    #[serde(default)]
    pub t_min: f64,
    /// Defaults to the horizon.
    pub t_max: Option<f64>,
    pub nt: usize,
}

impl GridConfig {
    pub fn build(&self, horizon: f64) -> Result<Grid, String> {
        self.build_with(horizon, self.nx, self.nt)
    }

    pub fn build_with(&self, horizon: f64, nx: usize, nt: usize) -> Result<Grid, String> {
        let t_max = self.t_max.unwrap_or(horizon);
        if t_max > horizon {
            return Err(format!("grid.t_max = {t_max} exceeds the horizon {horizon}"));
        }
        Grid::uniform(self.x_min, self.x_max, nx, self.t_min, t_max, nt).map_err(|e| format!("grid: {e}"))
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyConfig {
    pub test_functions: usize,
    pub residual_tol: f64,
    pub reference_nx: usize,
    pub reference_nt: usize,
    pub oracle_tol: f64,
    pub closed_form_tol: f64,
    pub bound_sources: usize,
    pub bound_targets: usize,
    pub trace_times: Vec<f64>,
    pub trace_fraction: f64,
    pub lemma_samples: usize,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            test_functions: 20,
            residual_tol: 5e-3,
            reference_nx: 512,
            reference_nt: 512,
            oracle_tol: 1e-2,
            closed_form_tol: 1e-4,
            bound_sources: 4,
            bound_targets: 150,
            trace_times: vec![1e-1, 1e-2, 1e-3],
            trace_fraction: 1e-2,
            lemma_samples: 10_000,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StudyConfig {
    pub epsilons: Vec<f64>,
    pub deltas: Vec<f64>,
    /// `[nx, nt]` per mesh, coarse to fine.
    pub ladder: Vec<[usize; 2]>,
    pub alphas: Vec<f64>,
    pub alpha_grid: Vec<f64>,
    pub pair_budget: usize,
    /// Accepted range of the fitted exponent in `x`, for both `w` and `w_x`.
    pub target_x: Option<[f64; 2]>,
    pub target_t: Option<[f64; 2]>,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            epsilons: vec![0.2, 0.1, 0.05, 0.025],
            deltas: vec![0.4, 0.1, 0.025],
            ladder: vec![[33, 17], [65, 33], [129, 65]],
            alphas: vec![0.2, 0.3, 0.4],
            alpha_grid: (1..20).map(|i| 0.05 * i as f64).collect(),
            pair_budget: 4096,
            target_x: None,
            target_t: None,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CoefficientConfig {
    Constant {
        k: f64,
    },
    Smoothstep {
        center: f64,
        width: f64,
        k_left: f64,
        k_right: f64,
    },
    Cusp {
        base: f64,
        amp: f64,
        center: f64,
        radius: f64,
        beta: f64,
    },
    /// `k = g(θ)` from Leslie parameters and a director angle field.
    Theta {
        leslie: LeslieParameters,
        theta: ThetaField,
    },
}

fn unit_envelope() -> Envelope {
    Envelope::constant(1.0)
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ForcingConfig {
    Zero,
    Separable {
        profile: Profile,
        #[serde(default = "unit_envelope")]
        envelope: Envelope,
    },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub coefficient: CoefficientConfig,
    #[serde(default)]
    pub gamma: f64,
    pub forcing: ForcingConfig,
    #[serde(default)]
    pub g_mode: GMode,
    pub initial: InitialDatum,
    pub horizon: f64,
    pub halfwidth: f64,
}

impl ProblemConfig {
    pub fn build(&self) -> roughheat::Result<ProblemSpec> {
        let field = match &self.coefficient {
            CoefficientConfig::Constant { k } => CoefficientField::constant(*k)?,
            CoefficientConfig::Smoothstep {
                center,
                width,
                k_left,
                k_right,
            } => CoefficientField::smoothstep(*center, *width, *k_left, *k_right)?,
            CoefficientConfig::Cusp {
                base,
                amp,
                center,
                radius,
                beta,
            } => CoefficientField::cusp(*base, *amp, *center, *radius, *beta)?,
            CoefficientConfig::Theta { leslie, theta } => {
                let p = LeslieParameters::new(leslie.alpha, leslie.k1, leslie.k3)?;
                CoefficientField::from_theta(
                    &p,
                    *theta,
                    roughheat::coeffs::SampleDomain {
                        halfwidth: self.halfwidth,
                        horizon: self.horizon,
                    },
                )?
            }
        };
        let forcing = match &self.forcing {
            ForcingConfig::Zero => Forcing::Zero,
            ForcingConfig::Separable { profile, envelope } => Forcing::Separable {
                profile: profile.clone(),
                envelope: *envelope,
            },
        };
        ProblemSpec::new(
            field,
            self.gamma,
            forcing,
            self.g_mode,
            self.initial.clone(),
            self.horizon,
            self.halfwidth,
        )
    }
}

pub const CATALOG: [&str; 3] = ["constant_k", "smooth_smoothstep", "rough_pulse"];

/// Named problems, as the JSON they abbreviate.
fn catalog_entry(name: &str) -> Option<Value> {
    let v = match name {
        "constant_k" => serde_json::json!({
            "coefficient": {"kind": "constant", "k": 1.0},
            "gamma": 0.0,
            "forcing": {"kind": "zero"},
            "g_mode": "zero",
            "initial": {"kind": "gaussian", "amp": 1.0, "center": 0.2, "sigma": 0.35},
            "horizon": 0.5,
            "halfwidth": 6.0
        }),
        "smooth_smoothstep" => serde_json::json!({
            "coefficient": {"kind": "smoothstep", "center": 0.0, "width": 1.0, "k_left": 0.5, "k_right": 2.0},
            "gamma": 0.5,
            "forcing": {
                "kind": "separable",
                "profile": {"kind": "gaussian", "amp": 1.0, "center": -0.5, "width": 0.5},
                "envelope": {"mean": 1.0, "amp": 0.5, "omega": 6.0}
            },
            "g_mode": "from_f",
            "initial": {"kind": "gaussian", "amp": 1.0, "center": 0.3, "sigma": 0.4},
            "horizon": 0.5,
            "halfwidth": 5.0
        }),
        "rough_pulse" => serde_json::json!({
            "coefficient": {"kind": "smoothstep", "center": 0.0, "width": 2.0, "k_left": 0.75, "k_right": 1.5},
            "gamma": 0.5,
            "forcing": {
                "kind": "separable",
                "profile": {"kind": "rough_pulse", "amp": 1.0, "left": -0.6, "right": 0.4, "ramp": 0.1, "exponent": 0.25},
                "envelope": {"mean": 1.0, "amp": 0.5, "omega": std::f64::consts::TAU}
            },
            "g_mode": "from_f",
            "initial": {"kind": "gaussian", "amp": 1.0, "center": 0.3, "sigma": 0.4},
            "horizon": 0.5,
            "halfwidth": 5.0
        }),
        _ => return None,
    };
    Some(v)
}

/// Parses a config, naming the offending key on failure.
pub fn parse(text: &str) -> Result<(RunConfig, ProblemConfig), String> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        if path == "." {
            e.inner().to_string()
        } else {
            format!("{path}: {}", e.inner())
        }
    })?;
    let problem = match &cfg.problem {
        Value::String(name) => catalog_entry(name)
            .ok_or_else(|| format!("problem: unknown catalog name `{name}` (known: {})", CATALOG.join(", ")))?,
        v @ Value::Object(_) => v.clone(),
        _ => return Err("problem: expected a catalog name or an object".into()),
    };
    let problem: ProblemConfig = serde_path_to_error::deserialize(problem).map_err(|e| format!("problem.{}: {}", e.path(), e.inner()))?;
    cfg.parametrix.validate().map_err(|e| format!("parametrix: {e}"))?;
    cfg.quadrature.validate().map_err(|e| format!("quadrature: {e}"))?;
    let v = &cfg.verify;
    if v.test_functions == 0 {
        return Err("verify.test_functions: the test-function panel is empty".into());
    }
    if v.bound_sources < 2 || v.bound_targets == 0 {
        return Err("verify.bound_sources: need at least 2 sources with targets (fit and held-out)".into());
    }
    if cfg.study.ladder.len() < 2 {
        return Err("study.ladder: need at least two meshes".into());
    }
    Ok((cfg, problem))
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{"problem": "constant_k", "grid": {"x_min": -2, "x_max": 2, "nx": 9, "nt": 5}}"#;

    #[test]
    fn catalog_entries_build() {
        for name in CATALOG {
            let p: ProblemConfig = serde_json::from_value(catalog_entry(name).unwrap()).unwrap();
            p.build().unwrap();
        }
    }

    #[test]
    fn errors_name_the_key() {
        assert!(parse(MINIMAL).is_ok());
        let e = parse(&MINIMAL.replace("\"nx\"", "\"nx_typo\"")).unwrap_err();
        assert!(e.contains("nx_typo"), "{e}");
        let e = parse(&MINIMAL.replace("\"nt\": 5", "\"nt\": \"five\"")).unwrap_err();
        assert!(e.starts_with("grid.nt"), "{e}");
        let e = parse(&MINIMAL.replace("constant_k", "nope")).unwrap_err();
        assert!(e.contains("unknown catalog name"), "{e}");
        let inline = r#"{"problem": {"coefficient": {"kind": "constant", "k": 1}, "forcing": {"kind": "zero"},
            "initial": {"kind": "zero"}, "horizon": 0.5, "halfwidth": 4, "gama": 1},
            "grid": {"x_min": -2, "x_max": 2, "nx": 9, "nt": 5}}"#;
        let e = parse(inline).unwrap_err();
        assert!(e.contains("gama"), "{e}");
    }
}
