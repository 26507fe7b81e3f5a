use crate::error::Result;
use crate::model::ParamSet;
use crate::scalar::Scalar;

/// One step of SGD with classical momentum and L2 weight decay:
///
/// ```text
/// g   ← g + wd·p
/// buf ← momentum·buf + g
/// p   ← p − lr·buf
/// ```
pub fn sgd_update<T: Scalar>(
    params: &mut ParamSet<T>,
    grads: &ParamSet<T>,
    momentum_buffers: &mut ParamSet<T>,
    lr: T,
    momentum: T,
    weight_decay: T,
) -> Result<()> {
    params.check_layout(grads)?;
    params.check_layout(momentum_buffers)?;
    let tensors = params
        .tensors_mut()
        .iter_mut()
        .zip(grads.tensors())
        .zip(momentum_buffers.tensors_mut().iter_mut());
    for ((p, g), buf) in tensors {
        for ((pv, &gv), bv) in p.data.iter_mut().zip(&g.data).zip(buf.data.iter_mut()) {
            let g_eff = gv + weight_decay * *pv;
            *bv = momentum * *bv + g_eff;
            *pv -= lr * *bv;
        }
    }
    Ok(())
}
