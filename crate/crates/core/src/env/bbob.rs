//! Simplified BBOB-style test functions.
//!
//! Each function keeps its canonical formula and is made instance specific
//! through a seeded optimum location `x_opt`, optimum value `f_opt` and
//! random rotations. The official oscillation and asymmetry transforms are
//! not applied.

use alloc::format;
use alloc::vec::Vec;

use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{random_rotation, Matrix};
use crate::rng::derive_rng_stream;

use super::cmaes::CmaesInstance;

const INSTANCE_ROOT_SEED: u64 = 0xB_B0B;

pub const FUNCTION_NAMES: [&str; 10] = [
    "sphere",
    "ellipsoidal",
    "rastrigin",
    "bueche_rastrigin",
    "linear_slope",
    "attractive_sector",
    "step_ellipsoidal",
    "rosenbrock",
    "rosenbrock_rotated",
    "ellipsoidal_high_conditioning",
];

/// A fully instantiated test function.
#[derive(Debug, Clone)]
pub struct BbobFunction {
    function_id: u32,
    x_opt: Vec<f64>,
    f_opt: f64,
    rotation: Matrix,
    rotation2: Matrix,
}

impl BbobFunction {
    pub fn new(instance: &CmaesInstance) -> Result<Self> {
        instance.validate()?;
        let n = instance.dimension;
        let mut rng = derive_rng_stream(
            INSTANCE_ROOT_SEED,
            &format!("bbob/f{}/i{}/d{}", instance.function_id, instance.bbob_instance_id, n),
        );
        let mut x_opt: Vec<f64> = (0..n).map(|_| rng.random_range(-4.0..=4.0)).collect();
        if instance.function_id == 5 {
            // linear slope has its optimum on the boundary of [-5, 5]^n
            x_opt.iter_mut().for_each(|x| *x = if *x >= 0.0 { 5.0 } else { -5.0 });
        }
        let f_opt = rng.random_range(-100.0..=100.0);
        let rotation = random_rotation(n, &mut rng);
        let rotation2 = random_rotation(n, &mut rng);
        Ok(BbobFunction { function_id: instance.function_id, x_opt, f_opt, rotation, rotation2 })
    }

    pub fn dimension(&self) -> usize {
        self.x_opt.len()
    }

    pub fn x_opt(&self) -> &[f64] {
        &self.x_opt
    }

    pub fn f_opt(&self) -> f64 {
        self.f_opt
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        let n = self.dimension();
        if x.len() != n {
            return Err(Error::arg(format!("point has dimension {}, function expects {n}", x.len())));
        }
        let shifted: Vec<f64> = x.iter().zip(&self.x_opt).map(|(a, b)| a - b).collect();
        let value = match self.function_id {
            1 => shifted.iter().map(|z| z * z).sum(),
            2 => ellipsoid(&shifted),
            3 => rastrigin(&conditioned(&shifted, 10.0)),
            4 => self.bueche_rastrigin(x, &shifted),
            5 => self.linear_slope(x),
            6 => self.attractive_sector(&shifted),
            7 => self.step_ellipsoid(x, &shifted),
            8 => rosenbrock(&shifted, None),
            9 => rosenbrock(&shifted, Some(&self.rotation)),
            10 => ellipsoid(&self.rotation.mul_vec(&shifted)),
            _ => unreachable!("function id validated on construction"),
        };
        Ok(value + self.f_opt)
    }

    fn bueche_rastrigin(&self, x: &[f64], shifted: &[f64]) -> f64 {
        let n = shifted.len();
        let z: Vec<f64> = shifted
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                let s = scale_factor(i, n, 10.0);
                // odd coordinates (1-based) get an extra factor when positive
                if i % 2 == 0 && v > 0.0 {
                    10.0 * s * v
                } else {
                    s * v
                }
            })
            .collect();
        rastrigin(&z) + 100.0 * boundary_penalty(x)
    }

    fn linear_slope(&self, x: &[f64]) -> f64 {
        let n = x.len();
        x.iter()
            .zip(&self.x_opt)
            .enumerate()
            .map(|(i, (&xi, &oi))| {
                let s = oi.signum() * libm::pow(10.0, i as f64 / denom(n));
                let z = if oi * xi < 25.0 { xi } else { oi };
                5.0 * libm::fabs(s) - s * z
            })
            .sum()
    }

    fn attractive_sector(&self, shifted: &[f64]) -> f64 {
        let z = self.rotation2.mul_vec(&conditioned(&self.rotation.mul_vec(shifted), 10.0));
        let sum: f64 = z
            .iter()
            .zip(&self.x_opt)
            .map(|(&zi, &oi)| {
                let s = if zi * oi > 0.0 { 100.0 } else { 1.0 };
                (s * zi) * (s * zi)
            })
            .sum();
        libm::pow(sum, 0.9)
    }

    fn step_ellipsoid(&self, x: &[f64], shifted: &[f64]) -> f64 {
        let n = shifted.len();
        let z_hat = conditioned(&self.rotation.mul_vec(shifted), 10.0);
        let z_tilde: Vec<f64> = z_hat
            .iter()
            .map(|&v| if libm::fabs(v) > 0.5 { libm::round(v) } else { libm::round(10.0 * v) / 10.0 })
            .collect();
        let z = self.rotation2.mul_vec(&z_tilde);
        let weighted: f64 = z.iter().enumerate().map(|(i, v)| libm::pow(10.0, 2.0 * i as f64 / denom(n)) * v * v).sum();
        0.1 * f64::max(libm::fabs(z_hat[0]) / 1e4, weighted) + boundary_penalty(x)
    }
}

/// Evaluate the function of `instance` at `x`.
pub fn bbob_eval(instance: &CmaesInstance, x: &[f64]) -> Result<f64> {
    BbobFunction::new(instance)?.eval(x)
}

fn denom(n: usize) -> f64 {
    if n > 1 {
        (n - 1) as f64
    } else {
        1.0
    }
}

fn scale_factor(i: usize, n: usize, alpha: f64) -> f64 {
    libm::pow(alpha, 0.5 * i as f64 / denom(n))
}

/// Applies the diagonal conditioning matrix with ratio `alpha`.
fn conditioned(z: &[f64], alpha: f64) -> Vec<f64> {
    let n = z.len();
    z.iter().enumerate().map(|(i, v)| scale_factor(i, n, alpha) * v).collect()
}

fn ellipsoid(z: &[f64]) -> f64 {
    let n = z.len();
    z.iter().enumerate().map(|(i, v)| libm::pow(10.0, 6.0 * i as f64 / denom(n)) * v * v).sum()
}

fn rastrigin(z: &[f64]) -> f64 {
    let n = z.len() as f64;
    let cos_sum: f64 = z.iter().map(|v| libm::cos(2.0 * core::f64::consts::PI * v)).sum();
    10.0 * (n - cos_sum) + z.iter().map(|v| v * v).sum::<f64>()
}

fn rosenbrock(shifted: &[f64], rotation: Option<&Matrix>) -> f64 {
    let n = shifted.len();
    let scale = f64::max(1.0, libm::sqrt(n as f64) / 8.0);
    let base = match rotation {
        Some(r) => r.mul_vec(shifted),
        None => shifted.to_vec(),
    };
    let z: Vec<f64> = base.iter().map(|v| scale * v + 1.0).collect();
    z.windows(2)
        .map(|w| {
            let a = w[0] * w[0] - w[1];
            100.0 * a * a + (w[0] - 1.0) * (w[0] - 1.0)
        })
        .sum()
}

fn boundary_penalty(x: &[f64]) -> f64 {
    x.iter()
        .map(|v| {
            let e = libm::fabs(*v) - 5.0;
            if e > 0.0 {
                e * e
            } else {
                0.0
            }
        })
        .sum()
}
