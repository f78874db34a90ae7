//! JSON system documents.
//!
//! A document either lists every sub-system explicitly or names a
//! generator:
//!
//! ```json
//! {"n": 2, "c": 2, "d": 1, "r": 1, "U": [[1.0]],
//!  "subsystems": [{"F": [[0.9, 0.1], [0, 0.9]], "H": [[1, 1]], "V": [[1, 0], [0, 1]],
//!                  "R": [[1]], "G": [[1], [1]]}]}
//! ```
//!
//! A single explicit sub-system is repeated `n` times.

use serde::{Deserialize, Serialize};

use crate::blockstruct::DenseMat;
use crate::model::generators::{make_identical_chain, make_random_system, make_speckle_system};
use crate::model::rng::RngSpec;
use crate::model::system::{CoupledSystem, Subsystem};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubsystemDoc {
    #[serde(rename = "F")]
    pub transition: DenseMat<f64>,
    #[serde(rename = "H")]
    pub observation: DenseMat<f64>,
    #[serde(rename = "V")]
    pub process_cov: DenseMat<f64>,
    #[serde(rename = "R")]
    pub meas_cov: DenseMat<f64>,
    #[serde(rename = "G")]
    pub coupling: DenseMat<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GeneratorDoc {
    IdenticalChain { beta: f64 },
    Random { spectral_radius_cap: f64, seed: u64 },
    Speckle { drift_scale: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemDoc {
    pub n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r: Option<usize>,
    #[serde(rename = "U", default, skip_serializing_if = "Option::is_none")]
    pub input_cov: Option<DenseMat<f64>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub subsystems: Vec<SubsystemDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<GeneratorDoc>,
}

impl SystemDoc {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Validation(format!("system document: {e}")))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("system documents always serialize")
    }

    /// Explicit document describing `sys`.
    pub fn from_system(sys: &CoupledSystem<f64>) -> Self {
        let subsystems = sys
            .subsystems()
            .into_iter()
            .map(|s| SubsystemDoc {
                transition: s.transition,
                observation: s.observation,
                process_cov: s.process_cov,
                meas_cov: s.meas_cov,
                coupling: s.coupling,
            })
            .collect();
        Self {
            n: sys.n(),
            c: Some(sys.c()),
            d: Some(sys.d()),
            r: Some(sys.r()),
            input_cov: Some(sys.input_cov().clone()),
            subsystems,
            generator: None,
        }
    }

    pub fn build(&self) -> Result<CoupledSystem<f64>> {
        if self.n == 0 {
            return Err(Error::Validation("n must be at least 1".into()));
        }
        let sys = match (&self.generator, self.subsystems.is_empty()) {
            (Some(_), false) => {
                return Err(Error::Validation("give either \"generator\" or \"subsystems\", not both".into()))
            }
            (None, true) => return Err(Error::Validation("missing \"subsystems\" or \"generator\"".into())),
            (Some(g), true) => self.generate(g)?,
            (None, false) => {
                let u = self
                    .input_cov
                    .clone()
                    .ok_or_else(|| Error::Validation("missing \"U\"".into()))?;
                let subs: Vec<Subsystem<f64>> = self
                    .subsystems
                    .iter()
                    .map(|s| Subsystem {
                        transition: s.transition.clone(),
                        observation: s.observation.clone(),
                        process_cov: s.process_cov.clone(),
                        meas_cov: s.meas_cov.clone(),
                        coupling: s.coupling.clone(),
                    })
                    .collect();
                match subs.len() {
                    1 => CoupledSystem::identical(&subs[0], self.n, u)?,
                    k if k == self.n => CoupledSystem::new(&subs, u)?,
                    k => return Err(Error::Validation(format!("{k} subsystems listed for n = {}", self.n))),
                }
            }
        };
        self.check_dims(&sys)?;
        Ok(sys)
    }

    fn generate(&self, g: &GeneratorDoc) -> Result<CoupledSystem<f64>> {
        let sys = match *g {
            GeneratorDoc::IdenticalChain { beta } => make_identical_chain(beta, self.n)?,
            GeneratorDoc::Random { spectral_radius_cap, seed } => {
                let need = |v: Option<usize>, name: &str| {
                    v.ok_or_else(|| Error::Validation(format!("random generator needs \"{name}\"")))
                };
                make_random_system(
                    need(self.c, "c")?,
                    need(self.d, "d")?,
                    need(self.r, "r")?,
                    self.n,
                    spectral_radius_cap,
                    &RngSpec::new(seed),
                )?
            }
            GeneratorDoc::Speckle { drift_scale } => {
                let r = self.r.ok_or_else(|| Error::Validation("speckle generator needs \"r\"".into()))?;
                make_speckle_system(self.n, r, drift_scale)?.system
            }
        };
        match &self.input_cov {
            Some(u) => sys.with_input_cov(u.clone()),
            None => Ok(sys),
        }
    }

    fn check_dims(&self, sys: &CoupledSystem<f64>) -> Result<()> {
        for (name, want, got) in [("c", self.c, sys.c()), ("d", self.d, sys.d()), ("r", self.r, sys.r())] {
            if let Some(w) = want {
                if w != got {
                    return Err(Error::Validation(format!("\"{name}\" is {w} but the matrices give {got}")));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let sys = make_random_system(2, 1, 3, 3, 0.9, &RngSpec::new(4)).unwrap();
        let doc = SystemDoc::from_system(&sys);
        let back = SystemDoc::from_json(&doc.to_json()).unwrap().build().unwrap();
        assert_eq!(back.dense_stack().unwrap().transition, sys.dense_stack().unwrap().transition);
        assert_eq!(back.input_cov(), sys.input_cov());
        assert_eq!(back.coupling().as_slice(), sys.coupling().as_slice());
    }

    #[test]
    fn generator_matches_direct_call() {
        let doc = SystemDoc::from_json(r#"{"n": 4, "generator": {"kind": "identical_chain", "beta": 0.1}}"#).unwrap();
        let sys = doc.build().unwrap();
        let direct = make_identical_chain(0.1, 4).unwrap();
        assert_eq!(sys.transition().as_slice(), direct.transition().as_slice());
    }

    #[test]
    fn single_subsystem_is_repeated() {
        let text = r#"{"n": 3, "U": [[1.0]], "subsystems": [
            {"F": [[0.5]], "H": [[1]], "V": [[1]], "R": [[0]], "G": [[1]]}]}"#;
        let sys = SystemDoc::from_json(text).unwrap().build().unwrap();
        assert_eq!(sys.n(), 3);
        assert_eq!(sys.c(), 1);
    }

    #[test]
    fn errors() {
        assert!(SystemDoc::from_json(r#"{"generator": {"kind": "identical_chain", "beta": 0.1}}"#).is_err());
        assert!(SystemDoc::from_json(r#"{"n": 1, "bogus": 1}"#).is_err());
        let no_body = SystemDoc::from_json(r#"{"n": 2}"#).unwrap();
        assert!(matches!(no_body.build(), Err(Error::Validation(_))));
        let bad_dim = SystemDoc::from_json(r#"{"n": 2, "c": 3, "generator": {"kind": "identical_chain", "beta": 0}}"#)
            .unwrap();
        assert!(matches!(bad_dim.build(), Err(Error::Validation(_))));
        let random = SystemDoc::from_json(r#"{"n": 2, "generator": {"kind": "random", "spectral_radius_cap": 0.5, "seed": 1}}"#)
            .unwrap();
        assert!(matches!(random.build(), Err(Error::Validation(_))));
    }
}
