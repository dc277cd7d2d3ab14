//! Declarative descriptions of coefficient models and prototype regions,
//! as read from configuration files.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::coefficients::{Amplitude, CoefficientModel, SeparableSequence};
use crate::error::{invalid, Error, Result};
use crate::geometry::RegionPrototype;
use crate::io::parse_coefficient_table;

fn one() -> f64 {
    1.0
}

/// `alpha` value forced at one lattice offset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OverrideSpec {
    pub at: Vec<i64>,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SequenceSpec {
    Power { c: f64, p: f64 },
    Finite { values: Vec<f64> },
}

impl From<&SequenceSpec> for SeparableSequence {
    fn from(s: &SequenceSpec) -> Self {
        match s {
            SequenceSpec::Power { c, p } => SeparableSequence::Power { c: *c, p: *p },
            SequenceSpec::Finite { values } => SeparableSequence::Finite(values.clone()),
        }
    }
}

/// A coefficient model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ModelSpec {
    Delta {
        dim: usize,
        #[serde(default)]
        overrides: Vec<OverrideSpec>,
        #[serde(default = "one")]
        scale: f64,
        #[serde(default)]
        zero_sum: bool,
    },
    Isotropic {
        dim: usize,
        beta: f64,
        #[serde(default = "one")]
        c0: f64,
        #[serde(default)]
        amplitude: Amplitude,
        #[serde(default)]
        overrides: Vec<OverrideSpec>,
        #[serde(default = "one")]
        scale: f64,
        #[serde(default)]
        zero_sum: bool,
    },
    AnisotropicOrthant {
        rows: Vec<Vec<f64>>,
        exponents: Vec<f64>,
        delta: f64,
        #[serde(default)]
        overrides: Vec<OverrideSpec>,
        #[serde(default = "one")]
        scale: f64,
        #[serde(default)]
        zero_sum: bool,
    },
    DirectionalCones {
        directions: Vec<Vec<f64>>,
        widths: Vec<f64>,
        exponents: Vec<f64>,
        #[serde(default)]
        overrides: Vec<OverrideSpec>,
        #[serde(default = "one")]
        scale: f64,
        #[serde(default)]
        zero_sum: bool,
    },
    Separable {
        b: SequenceSpec,
        #[serde(default)]
        overrides: Vec<OverrideSpec>,
        #[serde(default = "one")]
        scale: f64,
        #[serde(default)]
        zero_sum: bool,
    },
    /// Finite support, inline as `[i1, ..., id, alpha]` rows or from a CSV
    /// file.
    Table {
        dim: usize,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        entries: Vec<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        path: Option<String>,
        #[serde(default)]
        overrides: Vec<OverrideSpec>,
        #[serde(default = "one")]
        scale: f64,
        #[serde(default)]
        zero_sum: bool,
    },
}

impl ModelSpec {
    fn adjustments(&self) -> (&[OverrideSpec], f64, bool) {
        match self {
            ModelSpec::Delta {
                overrides,
                scale,
                zero_sum,
                ..
            }
            | ModelSpec::Isotropic {
                overrides,
                scale,
                zero_sum,
                ..
            }
            | ModelSpec::AnisotropicOrthant {
                overrides,
                scale,
                zero_sum,
                ..
            }
            | ModelSpec::DirectionalCones {
                overrides,
                scale,
                zero_sum,
                ..
            }
            | ModelSpec::Separable {
                overrides,
                scale,
                zero_sum,
                ..
            }
            | ModelSpec::Table {
                overrides,
                scale,
                zero_sum,
                ..
            } => (overrides, *scale, *zero_sum),
        }
    }

    /// Builds the model; relative table paths resolve against `base_dir`.
    pub fn build(&self, base_dir: Option<&Path>) -> Result<CoefficientModel> {
        let model = match self {
            ModelSpec::Delta { dim, .. } => CoefficientModel::delta(*dim)?,
            ModelSpec::Isotropic {
                dim,
                beta,
                c0,
                amplitude,
                ..
            } => CoefficientModel::isotropic(*dim, *beta, *c0, *amplitude)?,
            ModelSpec::AnisotropicOrthant {
                rows,
                exponents,
                delta,
                ..
            } => CoefficientModel::anisotropic_orthant(rows.clone(), exponents.clone(), *delta)?,
            ModelSpec::DirectionalCones {
                directions,
                widths,
                exponents,
                ..
            } => CoefficientModel::directional_cones(
                directions.clone(),
                widths.clone(),
                exponents.clone(),
            )?,
            ModelSpec::Separable { b, .. } => CoefficientModel::separable(b.into())?,
            ModelSpec::Table {
                dim, entries, path, ..
            } => {
                let mut table = std::collections::BTreeMap::new();
                if let Some(p) = path {
                    let full = match base_dir {
                        Some(b) => b.join(p),
                        None => p.into(),
                    };
                    let text = std::fs::read_to_string(&full)
                        .map_err(|e| Error::Io(format!("{}: {e}", full.display())))?;
                    let (d, parsed) = parse_coefficient_table(&text)?;
                    if d != *dim {
                        return Err(Error::DimensionMismatch {
                            expected: *dim,
                            got: d,
                        });
                    }
                    table.extend(parsed);
                }
                for row in entries {
                    if row.len() != dim + 1 {
                        return Err(invalid(
                            "entries",
                            format!("rows need {} indices and a value", dim),
                        ));
                    }
                    let site: Vec<i64> = row[..*dim]
                        .iter()
                        .map(|v| {
                            if v.fract() == 0.0 {
                                Ok(*v as i64)
                            } else {
                                Err(invalid("entries", format!("index {v} is not an integer")))
                            }
                        })
                        .collect::<Result<_>>()?;
                    if table.insert(site, row[*dim]).is_some() {
                        return Err(invalid("entries", "duplicate site"));
                    }
                }
                CoefficientModel::table(*dim, table)?
            }
        };
        let (overrides, scale, zero_sum) = self.adjustments();
        let mut model = model;
        if !overrides.is_empty() {
            model = model.with_overrides(overrides.iter().map(|o| (o.at.clone(), o.value)))?;
        }
        if scale != 1.0 {
            model = model.scaled(scale)?;
        }
        if zero_sum {
            model = model.with_zero_sum()?;
        }
        Ok(model)
    }
}

/// A prototype region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "kebab-case", deny_unknown_fields)]
pub enum RegionSpec {
    Cube {
        dim: usize,
    },
    Ball {
        dim: usize,
        radius: f64,
    },
    Ellipsoid {
        semi_axes: Vec<f64>,
    },
    /// Planar star-shaped region from equally spaced radial samples.
    PolarStar {
        radial: Vec<f64>,
        #[serde(default = "default_directions")]
        directions: usize,
    },
}

fn default_directions() -> usize {
    4096
}

impl RegionSpec {
    pub fn build(&self) -> Result<RegionPrototype> {
        match self {
            RegionSpec::Cube { dim } => RegionPrototype::cube(*dim),
            RegionSpec::Ball { dim, radius } => RegionPrototype::ball(*dim, *radius),
            RegionSpec::Ellipsoid { semi_axes } => RegionPrototype::ellipsoid(semi_axes.clone()),
            RegionSpec::PolarStar { radial, directions } => {
                RegionPrototype::polar_star(radial.clone(), *directions)
            }
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            RegionSpec::Cube { dim } | RegionSpec::Ball { dim, .. } => *dim,
            RegionSpec::Ellipsoid { semi_axes } => semi_axes.len(),
            RegionSpec::PolarStar { .. } => 2,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn model_from_toml() {
        let spec: ModelSpec = toml::from_str(
            r#"
            kind = "isotropic"
            dim = 2
            beta = 2.2
            amplitude = { form = "smooth" }
            zero_sum = true
            "#,
        )
        .unwrap();
        let m = spec.build(None).unwrap();
        assert_eq!(m.dim(), 2);
        assert!(m.sum_vanishes().unwrap());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let r: std::result::Result<ModelSpec, _> =
            toml::from_str("kind = \"delta\"\ndim = 2\nbetta = 1\n");
        assert!(r.is_err());
        let r: std::result::Result<RegionSpec, _> =
            toml::from_str("shape = \"ball\"\ndim = 2\nradius = 0.4\nr = 1\n");
        assert!(r.is_err());
    }

    #[test]
    fn table_rows() {
        let spec: ModelSpec =
            toml::from_str("kind = \"table\"\ndim = 2\nentries = [[0, 0, 1.5], [1, 0, 0.5]]\n")
                .unwrap();
        let m = spec.build(None).unwrap();
        assert_eq!(m.alpha(&[1, 0]), 0.5);
        let bad: ModelSpec =
            toml::from_str("kind = \"table\"\ndim = 2\nentries = [[0.5, 0, 1.5]]\n").unwrap();
        assert!(bad.build(None).is_err());
    }

    #[test]
    fn separable_and_regions() {
        let spec: ModelSpec =
            toml::from_str("kind = \"separable\"\nb = { form = \"power\", c = 1.0, p = 3.0 }\n")
                .unwrap();
        assert_eq!(spec.build(None).unwrap().dim(), 2);
        let r: RegionSpec =
            toml::from_str("shape = \"polar-star\"\nradial = [0.3, 0.4, 0.3, 0.4]\n").unwrap();
        assert_eq!(r.build().unwrap().dim(), 2);
    }
}
