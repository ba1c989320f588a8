//! Shared fixtures for the benchmarks.

use ndarray::Array2;
use snode_core::diff::{init_mlp, init_stencil, Activation, WeightInit};
use snode_core::node::{RhsModel, Variant};
use snode_core::spectral::{generate_vbe_ic, true_linear_operator, IcSpec, KseSolver};
use snode_core::{Field, System};

/// A Kuramoto-Sivashinsky state on the attractor (after a 200-unit transient).
pub fn kse_attractor_state(d: usize) -> Field {
    let solver = KseSolver::new(d, 22.0, 0.05).expect("valid grid");
    let u0 = Field::from_fn(d, 22.0, |x| {
        let q = 2.0 * std::f64::consts::PI / 22.0;
        0.1 * (q * x).cos() + 0.05 * (2.0 * q * x).sin()
    })
    .expect("valid grid");
    solver.advance(&u0, 4000).expect("stable transient")
}

pub fn vbe_state(d: usize, seed: u64) -> Field {
    let spec = IcSpec::normalized(10.0, d, 1.0, seed).expect("valid spectrum");
    generate_vbe_ic(&spec, d, 1.0).expect("valid grid")
}

/// Model of the given variant with `hidden` units per layer, two hidden layers.
pub fn model(system: System, variant: Variant, d: usize, hidden: usize) -> RhsModel {
    let (length, act, width) = match system {
        System::Vbe => (1.0, Activation::Relu, 3),
        System::Kse => (22.0, Activation::Sigmoid, 5),
    };
    let init = WeightInit::Normal { mean: 0.0, var: 1e-2 };
    let mlp = init_mlp(&[d, hidden, hidden, d], &[act, act, Activation::Linear], init, 7).expect("valid sizes");
    match variant {
        Variant::Nonlinear => RhsModel::nonlinear(mlp, length),
        Variant::FixedLinear => RhsModel::fixed_linear(mlp, true_linear_operator(system, d, length, 8e-4), length),
        Variant::LearnedLinear => {
            let s = init_stencil(width, system == System::Vbe, WeightInit::Normal { mean: 0.0, var: 1.0 }, 3)
                .expect("odd width");
            RhsModel::learned_linear(mlp, s, length)
        }
    }
    .expect("consistent model")
}

/// `rows` copies of a field, each shifted by one grid point.
pub fn batch_of(u: &Field, rows: usize) -> Array2<f64> {
    let d = u.dim();
    Array2::from_shape_fn((rows, d), |(r, j)| u.values[(j + r) % d])
}

