//! Helmholtz fundamental solution at complex frequencies and the
//! convolution quadrature frequency set.

use std::f64::consts::PI;

use nalgebra::Complex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mesh::Vec3;

pub type C64 = Complex<f64>;

#[derive(Debug, Error, PartialEq)]
pub enum KernelError {
    #[error("contour radius must lie in (0, 1), got {0}")]
    InvalidRadius(f64),
    #[error("number of time steps must be positive")]
    NoSteps,
    #[error("final time must be positive, got {0}")]
    InvalidFinalTime(f64),
    #[error("kernel evaluated at coinciding points")]
    CoincidentPoints,
}

/// Linear multistep method underlying the quadrature.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Method {
    Bdf1,
    #[default]
    Bdf2,
}

impl Method {
    /// Characteristic function `χ(ζ)`.
    pub fn chi(self, zeta: C64) -> C64 {
        match self {
            Method::Bdf1 => 1.0 - zeta,
            Method::Bdf2 => 1.5 - 2.0 * zeta + 0.5 * zeta * zeta,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Method::Bdf1 => "bdf1",
            Method::Bdf2 => "bdf2",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "bdf1" => Ok(Method::Bdf1),
            "bdf2" => Ok(Method::Bdf2),
            other => Err(format!("unknown method '{other}', expected bdf1 or bdf2")),
        }
    }
}

/// Time grid and complex frequencies `s_ℓ = χ(R e^{2πiℓ/N}) / Δt`.
#[derive(Debug, Clone, PartialEq)]
pub struct CqmScheme {
    pub n_steps: usize,
    pub dt: f64,
    pub radius: f64,
    pub method: Method,
    pub frequencies: Vec<C64>,
}

/// Default contour radius `10^{-5/N}`.
pub fn default_radius(n_steps: usize) -> f64 {
    10f64.powf(-5.0 / n_steps as f64)
}

pub fn cqm_frequencies(n_steps: usize, final_time: f64, radius: f64, method: Method) -> Result<CqmScheme, KernelError> {
    if n_steps == 0 {
        return Err(KernelError::NoSteps);
    }
    if !(final_time > 0.0 && final_time.is_finite()) {
        return Err(KernelError::InvalidFinalTime(final_time));
    }
    if !(radius > 0.0 && radius < 1.0) {
        return Err(KernelError::InvalidRadius(radius));
    }
    let dt = final_time / n_steps as f64;
    let frequencies = (0..n_steps)
        .map(|l| {
            let zeta = C64::from_polar(radius, 2.0 * PI * l as f64 / n_steps as f64);
            method.chi(zeta) / dt
        })
        .collect::<Vec<_>>();
    // make the conjugate symmetry exact
    let mut frequencies = frequencies;
    for l in 1..n_steps {
        if l > n_steps - l {
            frequencies[l] = frequencies[n_steps - l].conj();
        } else if l == n_steps - l {
            frequencies[l].im = 0.0;
        }
    }
    if n_steps >= 1 {
        frequencies[0].im = 0.0;
    }
    Ok(CqmScheme {
        n_steps,
        dt,
        radius,
        method,
        frequencies,
    })
}

impl CqmScheme {
    pub fn final_time(&self) -> f64 {
        self.dt * self.n_steps as f64
    }

    /// Indices `ℓ <= N/2` that must be computed; the rest follow by conjugation.
    pub fn half_spectrum(&self) -> std::ops::RangeInclusive<usize> {
        0..=self.n_steps / 2
    }

    /// Index `N - ℓ` mirrored onto the half spectrum, and whether conjugation applies.
    pub fn mirror(&self, l: usize) -> (usize, bool) {
        if l <= self.n_steps / 2 {
            (l, false)
        } else {
            (self.n_steps - l, true)
        }
    }
}

/// `e^{-s r} / (4π r)` with `r = |y - x|`.
pub fn slp_kernel(x: &Vec3, y: &Vec3, s: C64) -> Result<C64, KernelError> {
    let r = (y - x).norm();
    if r == 0.0 {
        return Err(KernelError::CoincidentPoints);
    }
    Ok(slp_radial(r, s))
}

/// `n_y · ∇_y` of the single layer kernel.
pub fn dlp_kernel(x: &Vec3, y: &Vec3, n_y: &Vec3, s: C64) -> Result<C64, KernelError> {
    let d = y - x;
    let r = d.norm();
    if r == 0.0 {
        return Err(KernelError::CoincidentPoints);
    }
    Ok(dlp_radial(r, d.dot(n_y), s))
}

/// Single layer kernel as a function of the distance. Requires `r > 0`.
#[inline]
pub fn slp_radial(r: f64, s: C64) -> C64 {
    (-s * r).exp() / (4.0 * PI * r)
}

/// Double layer kernel given the distance and `(y - x) · n_y`. Requires `r > 0`.
#[inline]
pub fn dlp_radial(r: f64, projection: f64, s: C64) -> C64 {
    -(1.0 + s * r) * (-s * r).exp() * (projection / (4.0 * PI * r * r * r))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: C64, b: C64, tol: f64) -> bool {
        (a - b).norm() <= tol * (1.0 + b.norm())
    }

    #[test]
    fn single_step_frequency() {
        let scheme = cqm_frequencies(1, 1.0, 1e-5, Method::Bdf2).unwrap();
        let expected = 1.5 - 2e-5 + 0.5e-10;
        assert!((scheme.frequencies[0].re - expected).abs() < 1e-15);
        assert_eq!(scheme.frequencies[0].im, 0.0);
    }

    #[test]
    fn bdf1_nyquist_frequency_is_real() {
        let radius = 10f64.powf(-2.5);
        let scheme = cqm_frequencies(2, 2.0, radius, Method::Bdf1).unwrap();
        assert!((scheme.dt - 1.0).abs() < 1e-15);
        assert!(close(scheme.frequencies[1], C64::new(1.0 + radius, 0.0), 1e-15));
    }

    #[test]
    fn radius_is_validated() {
        for r in [0.0, -0.5, 1.0, 1.5, f64::NAN] {
            assert!(matches!(cqm_frequencies(4, 1.0, r, Method::Bdf2), Err(KernelError::InvalidRadius(_))));
        }
        assert_eq!(cqm_frequencies(0, 1.0, 0.5, Method::Bdf2), Err(KernelError::NoSteps));
        assert!(cqm_frequencies(4, 0.0, 0.5, Method::Bdf2).is_err());
    }

    #[test]
    fn default_radius_value() {
        assert!((default_radius(5) - 0.1).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn frequencies_are_conjugate_symmetric_and_stable(
            n in 1usize..80,
            t in 0.1f64..10.0,
            bdf2 in any::<bool>(),
        ) {
            let method = if bdf2 { Method::Bdf2 } else { Method::Bdf1 };
            let scheme = cqm_frequencies(n, t, default_radius(n), method).unwrap();
            for l in 1..n {
                let (a, b) = (scheme.frequencies[n - l], scheme.frequencies[l].conj());
                prop_assert!((a - b).norm() <= 1e-14 * b.norm());
            }
            for (l, s) in scheme.frequencies.iter().enumerate() {
                prop_assert!(s.re > 0.0);
                let zeta = C64::from_polar(scheme.radius, 2.0 * PI * l as f64 / n as f64);
                prop_assert!(close(*s, method.chi(zeta) / scheme.dt, 1e-13));
            }
        }

        #[test]
        fn slp_decays_with_real_part(r in 0.01f64..10.0, a in 0.0f64..5.0, da in 0.01f64..5.0, b in -5.0f64..5.0) {
            let k1 = slp_radial(r, C64::new(a, b)).norm();
            let k2 = slp_radial(r, C64::new(a + da, b)).norm();
            prop_assert!(k2 < k1);
        }

        #[test]
        fn dlp_is_normal_derivative_of_slp(
            x in prop::collection::vec(-1.0f64..1.0, 3),
            dir in prop::collection::vec(-1.0f64..1.0, 3),
            nvec in prop::collection::vec(-1.0f64..1.0, 3),
            sr in 0.0f64..4.0,
            si in -10.0f64..10.0,
        ) {
            let x = Vec3::new(x[0], x[1], x[2]);
            let dir = Vec3::new(dir[0], dir[1], dir[2]);
            let n = Vec3::new(nvec[0], nvec[1], nvec[2]);
            prop_assume!(dir.norm() > 0.1 && n.norm() > 0.1);
            let y = x + dir.normalize() * 2.0;
            let n = n.normalize();
            let s = C64::new(sr, si);
            let h = 1e-5;
            let fd = (slp_kernel(&x, &(y + n * h), s).unwrap() - slp_kernel(&x, &(y - n * h), s).unwrap()) / (2.0 * h);
            let exact = dlp_kernel(&x, &y, &n, s).unwrap();
            prop_assert!((fd - exact).norm() < 1e-6, "{} vs {}", fd, exact);
        }
    }

    #[test]
    fn slp_examples() {
        let x = Vec3::zeros();
        let y = Vec3::new(1.0, 0.0, 0.0);
        let inv4pi = 1.0 / (4.0 * PI);
        assert!(close(slp_kernel(&x, &y, C64::new(0.0, 0.0)).unwrap(), C64::new(inv4pi, 0.0), 1e-15));
        assert!(close(slp_kernel(&x, &y, C64::new(0.0, PI)).unwrap(), C64::new(-inv4pi, 0.0), 1e-15));
        let y2 = Vec3::new(0.0, 2.0, 0.0);
        let expected = C64::new(2f64.cos(), -2f64.sin()) * (-2f64).exp() / (8.0 * PI);
        assert!(close(slp_kernel(&x, &y2, C64::new(1.0, 1.0)).unwrap(), expected, 1e-15));
        assert_eq!(slp_kernel(&x, &x, C64::new(1.0, 0.0)), Err(KernelError::CoincidentPoints));
    }

    #[test]
    fn dlp_examples() {
        let x = Vec3::zeros();
        let y = Vec3::new(0.0, 0.0, 1.0);
        let tangent = Vec3::new(1.0, 0.0, 0.0);
        assert_eq!(dlp_kernel(&x, &y, &tangent, C64::new(1.0, 2.0)).unwrap(), C64::new(0.0, 0.0));
        let normal = Vec3::new(0.0, 0.0, 1.0);
        let v = dlp_kernel(&x, &y, &normal, C64::new(0.0, 0.0)).unwrap();
        assert!(close(v, C64::new(-1.0 / (4.0 * PI), 0.0), 1e-15));
        assert_eq!(dlp_kernel(&y, &y, &normal, C64::new(1.0, 0.0)), Err(KernelError::CoincidentPoints));
    }

    /// Mixed first differences scale like `|k| (1 + |s| r) / r`.
    #[test]
    fn asymptotic_smoothness_proxy() {
        let s = C64::new(1.0, 3.0);
        for e in -6..=6 {
            let r = 2f64.powi(e);
            let x = Vec3::zeros();
            let y = Vec3::new(r, 0.0, 0.0);
            let h = 1e-4 * r;
            let k = slp_kernel(&x, &y, s).unwrap();
            let dxdy = (slp_kernel(&(x + Vec3::new(0.0, h, 0.0)), &(y + Vec3::new(h, 0.0, 0.0)), s).unwrap()
                - slp_kernel(&(x + Vec3::new(0.0, h, 0.0)), &(y - Vec3::new(h, 0.0, 0.0)), s).unwrap()
                - slp_kernel(&(x - Vec3::new(0.0, h, 0.0)), &(y + Vec3::new(h, 0.0, 0.0)), s).unwrap()
                + slp_kernel(&(x - Vec3::new(0.0, h, 0.0)), &(y - Vec3::new(h, 0.0, 0.0)), s).unwrap())
                / (4.0 * h * h);
            let bound = k.norm() * (1.0 + s.norm() * r).powi(2) / (r * r);
            assert!(dxdy.norm() <= 4.0 * bound, "r={r}: {} vs {bound}", dxdy.norm());
        }
    }

    #[test]
    fn mirror_indices() {
        let scheme = cqm_frequencies(5, 1.0, 0.5, Method::Bdf2).unwrap();
        assert_eq!(scheme.half_spectrum(), 0..=2);
        assert_eq!(scheme.mirror(2), (2, false));
        assert_eq!(scheme.mirror(3), (2, true));
        assert_eq!(scheme.mirror(4), (1, true));
    }
}
