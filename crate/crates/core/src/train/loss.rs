use crate::error::{Error, Result};
use crate::metrics::Task;
use crate::tensor::{Tensor, Var};

fn targets<'t>(y_hat: &Var<'t>, y: &[f64]) -> Result<Var<'t>> {
    let n = y_hat.value().numel();
    if n != y.len() {
        return Err(Error::Dimension {
            op: "loss",
            lhs: y_hat.shape(),
            rhs: vec![y.len()],
        });
    }
    Ok(y_hat.tape().constant(Tensor::new(y_hat.shape(), y.to_vec())?))
}

fn check(op: &'static str, values: &[f64], ok: impl Fn(f64) -> bool) -> Result<()> {
    match values.iter().position(|&v| !ok(v)) {
        Some(index) => Err(Error::Domain {
            op,
            index,
            value: values[index],
        }),
        None => Ok(()),
    }
}

/// Mean binary cross-entropy. Predictions must lie strictly inside (0, 1).
pub fn loss_ihm<'t>(y_hat: &Var<'t>, y: &[f64]) -> Result<Var<'t>> {
    check("mortality prediction", y_hat.value().data(), |v| v > 0.0 && v < 1.0)?;
    check("mortality label", y, |v| v == 0.0 || v == 1.0)?;
    let t = targets(y_hat, y)?;
    let pos = t.mul(&y_hat.ln()?)?;
    let one_minus_t = t.neg().add_scalar(1.0);
    let neg = one_minus_t.mul(&y_hat.neg().add_scalar(1.0).ln()?)?;
    Ok(pos.add(&neg)?.mean().neg())
}

/// Mean squared logarithmic error over positive predictions and targets.
pub fn loss_los<'t>(y_hat: &Var<'t>, y: &[f64]) -> Result<Var<'t>> {
    check("length-of-stay prediction", y_hat.value().data(), |v| v > 0.0)?;
    check("length-of-stay label", y, |v| v > 0.0)?;
    let t = targets(y_hat, y)?.log1p()?;
    Ok(y_hat.log1p()?.sub(&t)?.square().mean())
}

pub fn task_loss<'t>(task: Task, y_hat: &Var<'t>, y: &[f64]) -> Result<Var<'t>> {
    match task {
        Task::Ihm => loss_ihm(y_hat, y),
        Task::Los => loss_los(y_hat, y),
    }
}

/// Task loss on the full prediction plus `alpha` times the task loss on the
/// temporal-only prediction.
pub fn joint_loss<'t>(task: Task, y_hat: &Var<'t>, y_lstm: &Var<'t>, y: &[f64], alpha: f64) -> Result<Var<'t>> {
    if !(alpha >= 0.0) {
        return Err(Error::Config(format!("alpha must be non-negative, got {alpha}")));
    }
    let main = task_loss(task, y_hat, y)?;
    if alpha == 0.0 {
        return Ok(main);
    }
    main.add(&task_loss(task, y_lstm, y)?.scale(alpha))
}
