//! Scalar model `ẋ = x⁴ + u` in original, quartic, quadratic-bilinear ODE
//! and quadratic-bilinear DAE forms.
//!
//! The model is small enough to write every lifted operator down in closed
//! form, which makes it the reference case for the lifting machinery:
//!
//! * QB-ODE in `[x, w₁, w₂, w₃] = [x, x², x⁴, x³]`:
//!   `ẋ = w₂ + u`, `ẇ₁ = 2xw₂ + 2xu`, `ẇ₂ = 4w₂w₃ + 4w₃u`,
//!   `ẇ₃ = 3w₁w₂ + 3w₁u`.
//! * QB-DAE in `[x; w₁]` with `w₁ = x²`: `ẋ = w₁² + u`, `0 = w₁ - x²`.
//!
//! For `u = 0` the solution is `x(t) = (x₀⁻³ - 3t)^(-1/3)`, available from
//! [`scalar_exact`] as an oracle.

use crate::dynamics::{QbDae, QbOde, QuarticOde, VarLayout};
use crate::tensor::MatricizedTensor;
use crate::{Mat, Vector};

/// Original dynamics as a one-state quartic ODE: `ẋ = G⁽⁴⁾ x⊗x⊗x⊗x + u`.
pub fn scalar_quartic() -> QuarticOde {
    let layout = VarLayout::flat("x", 1);
    let a = MatricizedTensor::new(1, vec![1]);
    let mut g2 = MatricizedTensor::new(1, vec![1, 1]);
    g2.assemble();
    let mut g3 = MatricizedTensor::new(1, vec![1, 1, 1]);
    g3.assemble();
    let mut g4 = MatricizedTensor::new(1, vec![1, 1, 1, 1]);
    g4.push(0, &[0, 0, 0, 0], 1.0);
    g4.assemble();
    QuarticOde {
        layout,
        mass: Vector::from_element(1, 1.0),
        a,
        g: vec![g2, g3, g4],
        n_ops: vec![vec![]],
        b: Mat::from_element(1, 1, 1.0),
    }
}

/// Quadratic-bilinear ODE lifting with `[x, w₁, w₂, w₃] = [x, x², x⁴, x³]`.
pub fn scalar_qb_ode() -> QbOde {
    let layout = VarLayout::new(&[("x", 1), ("w1", 1), ("w2", 1), ("w3", 1)]);
    let mut a = MatricizedTensor::new(4, vec![4]);
    a.push(0, &[2], 1.0);
    a.assemble();
    let mut h = MatricizedTensor::new(4, vec![4, 4]);
    h.push(1, &[0, 2], 2.0);
    h.push(2, &[2, 3], 4.0);
    h.push(3, &[1, 2], 3.0);
    h.assemble();
    let mut n1 = MatricizedTensor::new(4, vec![4]);
    n1.push(1, &[0], 2.0);
    n1.push(2, &[3], 4.0);
    n1.push(3, &[1], 3.0);
    n1.assemble();
    let mut b = Mat::zeros(4, 1);
    b[(0, 0)] = 1.0;
    QbOde { layout, mass: Vector::from_element(4, 1.0), a, h, n_ops: vec![n1], b }
}

/// Quadratic-bilinear DAE lifting with differential `x` and algebraic
/// `w₁ = x²`.
pub fn scalar_qb_dae() -> QbDae {
    let layout1 = VarLayout::flat("x", 1);
    let layout2 = VarLayout::flat("w1", 1);
    let a11 = MatricizedTensor::new(1, vec![1]);
    let a12 = MatricizedTensor::new(1, vec![1]);
    let mut h1 = MatricizedTensor::new(1, vec![2, 2]);
    h1.push(0, &[1, 1], 1.0); // w₁²
    h1.assemble();
    let mut n1 = MatricizedTensor::new(1, vec![2]);
    n1.assemble();
    let mut h2t = MatricizedTensor::new(1, vec![1, 1]);
    h2t.push(0, &[0, 0], 1.0); // w₁ = x²
    h2t.assemble();
    QbDae {
        layout1,
        layout2,
        mass1: Vector::from_element(1, 1.0),
        a11,
        a12,
        h1,
        n1_ops: vec![n1],
        b1: Mat::from_element(1, 1, 1.0),
        h2t,
    }
}

/// Consistent QB-ODE state `[x, x², x⁴, x³]` for an initial value `x₀`.
pub fn scalar_qb_ic(x0: f64) -> Vector {
    Vector::from_vec(vec![x0, x0 * x0, x0.powi(4), x0.powi(3)])
}

/// Exact unforced solution `x(t) = (x₀⁻³ - 3t)^(-1/3)`; valid while
/// `x₀⁻³ - 3t > 0`.
pub fn scalar_exact(x0: f64, t: f64) -> f64 {
    (x0.powi(-3) - 3.0 * t).powf(-1.0 / 3.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{
        eval_rhs_qb, integrate_ode, solve_qbdae, InputSignal, IntegrateOptions, OdeSystem, Scheme,
    };
    use approx::assert_relative_eq;

    #[test]
    fn quartic_and_qb_forms_agree_with_exact_solution() {
        let x0 = 1.0;
        let opts = IntegrateOptions::span(1e-4, 0.2).unwrap().with_scheme(Scheme::Rk4);
        let input = InputSignal::Zero(1);

        let quartic = scalar_quartic();
        let tq = integrate_ode(&quartic, &input, &Vector::from_element(1, x0), &opts).unwrap();

        let qb = scalar_qb_ode();
        let tqb = integrate_ode(&qb, &input, &scalar_qb_ic(x0), &opts).unwrap();

        let dae = scalar_qb_dae();
        let tdae = solve_qbdae(&dae, &input, &Vector::from_element(1, x0), &opts).unwrap();

        let exact = scalar_exact(x0, 0.2);
        assert_relative_eq!(tq.last_state()[0], exact, max_relative = 1e-9);
        assert_relative_eq!(tqb.last_state()[0], exact, max_relative = 1e-9);
        assert_relative_eq!(tdae.last_state()[0], exact, max_relative = 1e-9);
        // Auxiliary variables track their definitions.
        let xf = tqb.last_state();
        assert_relative_eq!(xf[1], xf[0] * xf[0], max_relative = 1e-8);
        assert_relative_eq!(xf[3], xf[0].powi(3), max_relative = 1e-8);
    }

    #[test]
    fn qb_rhs_under_unit_input_matches_hand_values() {
        let qb = scalar_qb_ode();
        let x = Vector::from_element(4, 1.0);
        let u = Vector::from_element(1, 1.0);
        let rhs = eval_rhs_qb(&qb, &x, &u).unwrap();
        assert_eq!(rhs.as_slice(), &[2.0, 4.0, 8.0, 6.0]);
    }

    #[test]
    fn dae_rhs_is_fourth_power() {
        let dae = scalar_qb_dae();
        let sub = crate::dynamics::SubstitutedQbDae { dae: &dae };
        let x1 = Vector::from_element(1, 2.0);
        let rhs = sub.eval_rhs(&x1, &Vector::zeros(1)).unwrap();
        assert_relative_eq!(rhs[0], 16.0, max_relative = 1e-15);
    }
}
