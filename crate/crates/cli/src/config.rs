use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Args, ValueEnum};
use cqbem::assembly::QuadratureConfig;
use cqbem::htensor::CompressionParams;
use cqbem::kernels::{cqm_frequencies, default_radius, CqmScheme, Method};
use cqbem::mesh::{make_sphere, SurfaceMesh};
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum MethodArg {
    Bdf1,
    Bdf2,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Bdf1 => Method::Bdf1,
            MethodArg::Bdf2 => Method::Bdf2,
        }
    }
}

/// Options shared by all subcommands.
#[derive(Debug, Clone, Args, Serialize)]
pub struct RunConfig {
    /// Surface mesh in OFF format.
    #[arg(long, conflicts_with = "sphere")]
    pub mesh: Option<PathBuf>,
    /// Icosphere refinement level (20 * 4^level panels); default 2.
    #[arg(long)]
    pub sphere: Option<u32>,
    /// Number of time steps N.
    #[arg(long, default_value_t = 32)]
    pub steps: usize,
    /// Final time T.
    #[arg(long = "final-time", default_value_t = 3.0, allow_negative_numbers = true)]
    pub final_time: f64,
    /// Contour radius R; default 10^(-5/N).
    #[arg(long, allow_negative_numbers = true)]
    pub radius: Option<f64>,
    #[arg(long, value_enum, default_value_t = MethodArg::Bdf2)]
    pub method: MethodArg,
    /// Chebyshev points per axis m.
    #[arg(long, default_value_t = 4)]
    pub order: usize,
    /// MACA tolerance.
    #[arg(long, default_value_t = 1e-4, allow_negative_numbers = true)]
    pub eps: f64,
    /// Admissibility parameter.
    #[arg(long, default_value_t = 2.0, allow_negative_numbers = true)]
    pub eta: f64,
    /// Leaf size of the cluster tree.
    #[arg(long, default_value_t = 32)]
    pub nmin: usize,
    /// Triangle rule degree for well-separated panel pairs.
    #[arg(long = "quad-far", default_value_t = 4)]
    pub quad_far: usize,
    /// Gauss points per direction of the singular rules.
    #[arg(long = "quad-sing", default_value_t = 4)]
    pub quad_sing: usize,
    /// Interpolate every admissible block, even when its coupling matrix
    /// is larger than the block.
    #[arg(long = "literal-far")]
    pub literal_far: bool,
    /// Compare against the dense pipeline.
    #[arg(long)]
    pub oracle: bool,
    /// Output directory; results go to stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.steps < 1 {
            return Err("--steps must be at least 1".into());
        }
        if !(self.final_time > 0.0) {
            return Err("--final-time must be positive".into());
        }
        if let Some(r) = self.radius {
            if !(r > 0.0 && r < 1.0) {
                return Err(format!("--radius must lie in (0, 1), got {r}"));
            }
        }
        if self.order < 1 {
            return Err("--order must be at least 1".into());
        }
        if !(self.eps > 0.0) {
            return Err("--eps must be positive".into());
        }
        if !(self.eta > 0.0) {
            return Err("--eta must be positive".into());
        }
        if self.nmin < 2 {
            return Err("--nmin must be greater than 1".into());
        }
        if self.quad_far < 1 || self.quad_sing < 1 {
            return Err("quadrature orders must be at least 1".into());
        }
        Ok(())
    }

    pub fn load_mesh(&self) -> Result<SurfaceMesh> {
        match &self.mesh {
            Some(path) => SurfaceMesh::load_off(path).with_context(|| format!("reading {}", path.display())),
            None => Ok(make_sphere(self.sphere.unwrap_or(2))),
        }
    }

    pub fn scheme(&self, steps: usize) -> Result<CqmScheme> {
        let radius = self.radius.unwrap_or_else(|| default_radius(steps));
        Ok(cqm_frequencies(steps, self.final_time, radius, self.method.into())?)
    }

    pub fn params(&self) -> CompressionParams {
        CompressionParams {
            n_min: self.nmin,
            eta: self.eta,
            order: self.order,
            eps: self.eps,
            eps_near: None,
            eps_far: None,
            quad: QuadratureConfig {
                far_order: self.quad_far,
                singular_order: self.quad_sing,
                ..QuadratureConfig::default()
            },
            direct_small_far: !self.literal_far,
        }
    }
}

/// Comma-separated list; the empty string is the empty list.
pub fn parse_list<T: std::str::FromStr>(s: &str) -> Result<Vec<T>, String>
where
    T::Err: std::fmt::Display,
{
    s.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<T>().map_err(|e| format!("'{t}': {e}")))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::Parser;

    #[derive(Parser)]
    struct Wrapper {
        #[command(flatten)]
        config: RunConfig,
    }

    fn parse(args: &[&str]) -> RunConfig {
        let mut full = vec!["test"];
        full.extend_from_slice(args);
        Wrapper::parse_from(full).config
    }

    #[test]
    fn defaults_are_valid() {
        let c = parse(&[]);
        assert!(c.validate().is_ok());
        assert_eq!(c.load_mesh().unwrap().len(), 320);
        let p = c.params();
        assert_eq!((p.n_min, p.order, p.eta), (32, 4, 2.0));
        assert!(p.direct_small_far);
        let s = c.scheme(c.steps).unwrap();
        assert!((s.radius - 10f64.powf(-5.0 / 32.0)).abs() < 1e-15);
    }

    #[test]
    fn invalid_values_are_rejected() {
        for args in [
            &["--radius", "1.5"][..],
            &["--radius", "0"],
            &["--steps", "0"],
            &["--order", "0"],
            &["--eps", "0"],
            &["--eta", "-1"],
            &["--nmin", "1"],
        ] {
            assert!(parse(args).validate().is_err(), "{args:?}");
        }
    }

    #[test]
    fn list_parsing() {
        assert_eq!(parse_list::<f64>("1e-2, 1e-3").unwrap(), vec![1e-2, 1e-3]);
        assert!(parse_list::<u32>("").unwrap().is_empty());
        assert!(parse_list::<u32>("1,x").is_err());
    }
}
