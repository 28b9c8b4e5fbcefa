use super::tape::{Tape, Var};
use super::tensor::{Scalar, Tensor};
use crate::error::Result;

/// Class-weighted cross-entropy with weighted-mean reduction, recorded on the
/// tape so it can be differentiated.
pub fn weighted_cross_entropy<T: Scalar>(
    tape: &mut Tape<T>,
    logits: Var,
    labels: &[usize],
    class_weights: &[T],
) -> Result<Var> {
    let logp = tape.log_softmax(logits)?;
    tape.weighted_nll(logp, labels, class_weights)
}

/// Loss value for fixed logits.
pub fn weighted_cross_entropy_value<T: Scalar>(
    logits: &Tensor<T>,
    labels: &[usize],
    class_weights: &[T],
) -> Result<T> {
    let mut tape = Tape::new();
    let l = tape.leaf(logits.clone(), false)?;
    let loss = weighted_cross_entropy(&mut tape, l, labels, class_weights)?;
    Ok(tape.value(loss).data()[0])
}

/// Row-wise softmax.
pub fn softmax_rows<T: Scalar>(logits: &Tensor<T>) -> Tensor<T> {
    let c = logits.cols();
    let mut data = Vec::with_capacity(logits.len());
    for row in logits.data().chunks(c) {
        data.extend(super::tape::log_softmax_row(row).into_iter().map(|v| v.exp()));
    }
    Tensor::new(logits.shape().to_vec(), data).expect("same shape")
}
