use crate::error::{Error, Result};
use crate::tensor::{Elem, Tensor};

/// Mean cross-entropy over supervised positions. `mask[t] == 1` asks the
/// logits at `t - 1` to predict `ids[t]`.
pub fn masked_next_token_loss<E: Elem>(logits: &Tensor<E>, ids: &[usize], mask: &[u8]) -> Result<Tensor<E>> {
    let t = logits.shape().first().copied().unwrap_or(0);
    if ids.len() != t || mask.len() != t {
        return Err(Error::Dimension { op: "masked_next_token_loss", lhs: logits.shape().to_vec(), rhs: vec![ids.len(), mask.len()] });
    }
    if mask.first() == Some(&1) {
        return Err(Error::Contract("position 0 has no predecessor to supervise it".into()));
    }
    let (rows, targets): (Vec<usize>, Vec<usize>) = (1..t).filter(|&i| mask[i] == 1).map(|i| (i - 1, ids[i])).unzip();
    if rows.is_empty() {
        return Err(Error::validation("row has no supervised tokens (all-zero loss mask)"));
    }
    logits.cross_entropy_rows(&rows, &targets)
}
