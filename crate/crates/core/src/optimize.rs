//! Grid maximization of scalar curves over a [`DecisionSpace`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problem::DecisionSpace;

/// A maximizer and the curve value there.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Optimum {
    pub z: f64,
    pub value: f64,
}

/// Maximizes `curve` over the grid of `space`; ties go to the smallest `z`.
pub fn optimize_scalar_curve<F>(curve: F, space: &DecisionSpace) -> Result<Optimum>
where
    F: Fn(f64) -> f64,
{
    optimize_scalar_curve_with(curve, space, false)
}

/// Like [`optimize_scalar_curve`], optionally followed by a golden-section
/// search inside the two grid cells around the grid maximizer.
///
/// The refined point replaces the grid node only when its value is strictly
/// larger, so refinement never lowers the returned value.
pub fn optimize_scalar_curve_with<F>(curve: F, space: &DecisionSpace, refine: bool) -> Result<Optimum>
where
    F: Fn(f64) -> f64,
{
    let nodes = space.grid();
    let values: Vec<f64> = nodes.iter().map(|&z| curve(z)).collect();
    let best = argmax_on_grid(&nodes, &values)?;
    match (refine, space.step()) {
        (true, Some(step)) => {
            let a = (best.z - step).max(space.lo());
            let b = (best.z + step).min(space.hi());
            let z = golden_section_max(&curve, a, b, 1e-10, 200);
            let value = curve(z);
            if value.is_finite() && value > best.value {
                Ok(Optimum { z, value })
            } else {
                Ok(best)
            }
        }
        _ => Ok(best),
    }
}

/// Picks the largest value among precomputed grid evaluations, breaking
/// ties by the smallest node.
pub fn argmax_on_grid(nodes: &[f64], values: &[f64]) -> Result<Optimum> {
    if nodes.is_empty() || nodes.len() != values.len() {
        return Err(Error::InvalidInput("grid and values must be non-empty and of equal length".into()));
    }
    let mut best: Option<Optimum> = None;
    for (&z, &value) in nodes.iter().zip(values) {
        if !value.is_finite() {
            return Err(Error::NonFiniteCurve { z });
        }
        match best {
            Some(b) if value < b.value || (value == b.value && z >= b.z) => {}
            _ => best = Some(Optimum { z, value }),
        }
    }
    Ok(best.expect("non-empty grid"))
}

fn golden_section_max<F: Fn(f64) -> f64>(f: &F, mut a: f64, mut b: f64, tol: f64, max_iter: usize) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..max_iter {
        if (b - a).abs() <= tol {
            break;
        }
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}
