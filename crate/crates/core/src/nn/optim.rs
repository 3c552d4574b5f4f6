use crate::error::{Error, Result};
use crate::nn::network::{Gradients, Params};

/// Heavy-ball SGD: `v' = momentum·v − lr·g`, `p' = p + v'`.
pub fn sgd_momentum_step(
    params: &mut Params,
    grads: &Gradients,
    velocity: &mut Gradients,
    lr: f32,
    momentum: f32,
) -> Result<()> {
    if !(lr >= 0.0 && lr.is_finite()) {
        return Err(Error::InvalidArgument(format!("learning rate must be >= 0, got {lr}")));
    }
    if !(0.0..1.0).contains(&momentum) {
        return Err(Error::InvalidArgument(format!(
            "momentum must be in [0, 1), got {momentum}"
        )));
    }
    let n = params.tensors.len();
    if grads.tensors.len() != n || velocity.tensors.len() != n {
        return Err(Error::Shape(format!(
            "{n} parameter tensors but {} gradients and {} velocities",
            grads.tensors.len(),
            velocity.tensors.len()
        )));
    }
    for ((p, g), v) in params
        .tensors
        .iter()
        .zip(&grads.tensors)
        .zip(&velocity.tensors)
    {
        if p.shape() != g.shape() || p.shape() != v.shape() {
            return Err(Error::Shape(format!(
                "parameter {:?}, gradient {:?}, velocity {:?}",
                p.shape(),
                g.shape(),
                v.shape()
            )));
        }
    }
    for ((p, g), v) in params
        .tensors
        .iter_mut()
        .zip(&grads.tensors)
        .zip(velocity.tensors.iter_mut())
    {
        for ((pv, &gv), vv) in p.data_mut().iter_mut().zip(g.data()).zip(v.data_mut()) {
            *vv = momentum * *vv - lr * gv;
            *pv += *vv;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    fn single(v: f32) -> Params {
        Params {
            tensors: vec![Tensor::filled(&[2], v)],
        }
    }

    fn grads(v: f32) -> Gradients {
        Gradients {
            tensors: vec![Tensor::filled(&[2], v)],
        }
    }

    #[test]
    fn zero_momentum_is_plain_sgd() {
        let mut p = single(1.0);
        let mut v = grads(0.0);
        sgd_momentum_step(&mut p, &grads(0.5), &mut v, 0.1, 0.0).unwrap();
        assert_eq!(p.tensors[0].data(), &[0.95, 0.95]);
    }

    #[test]
    fn zero_gradient_is_fixed_point() {
        let mut p = single(0.3);
        let mut v = grads(0.0);
        sgd_momentum_step(&mut p, &grads(0.0), &mut v, 0.1, 0.9).unwrap();
        assert_eq!(p, single(0.3));
    }

    #[test]
    fn two_steps_match_closed_form() {
        // v1 = -lr g; v2 = m v1 - lr g = -lr g (1 + m); p2 = p0 - lr g (2 + m)
        let (lr, m, g, p0) = (0.1f32, 0.9f32, 2.0f32, 1.0f32);
        let mut p = single(p0);
        let mut v = grads(0.0);
        sgd_momentum_step(&mut p, &grads(g), &mut v, lr, m).unwrap();
        sgd_momentum_step(&mut p, &grads(g), &mut v, lr, m).unwrap();
        let want_v = -lr * g * (1.0 + m);
        let want_p = p0 - lr * g * (2.0 + m);
        assert!((v.tensors[0].data()[0] - want_v).abs() < 1e-6);
        assert!((p.tensors[0].data()[0] - want_p).abs() < 1e-6);
    }

    #[test]
    fn rejects_bad_hyper_and_shapes() {
        let mut p = single(1.0);
        let mut v = grads(0.0);
        assert!(sgd_momentum_step(&mut p, &grads(1.0), &mut v, 0.1, 1.0).is_err());
        assert!(sgd_momentum_step(&mut p, &grads(1.0), &mut v, -0.1, 0.5).is_err());
        let bad = Gradients {
            tensors: vec![Tensor::zeros(&[3])],
        };
        assert!(sgd_momentum_step(&mut p, &bad, &mut v, 0.1, 0.5).is_err());
    }
}
