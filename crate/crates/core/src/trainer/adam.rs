use super::config::AdamHyper;
use crate::error::TensorError;
use crate::nets::{ParamId, ParamStore};
use crate::tensor::{Element, Tensor};

/// First and second moments for every parameter of one store.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T: Element> {
    pub step: u64,
    pub m: Vec<Tensor<T>>,
    pub v: Vec<Tensor<T>>,
}

impl<T: Element> AdamState<T> {
    pub fn new(store: &ParamStore<T>) -> Self {
        let zeros = || store.iter().map(|(_, _, t)| Tensor::zeros(t.shape().to_vec())).collect();
        AdamState { step: 0, m: zeros(), v: zeros() }
    }
}

/// One bias-corrected Adam update of every parameter in `store`. Each
/// `ParamId` appears at most once in `grads`; missing ids count as zero
/// gradient.
pub fn adam_step<T: Element>(
    store: &mut ParamStore<T>,
    grads: &[(ParamId, Tensor<T>)],
    state: &mut AdamState<T>,
    hyper: &AdamHyper,
) -> Result<(), TensorError> {
    let mut per_param: Vec<Option<&Tensor<T>>> = vec![None; store.len()];
    for (id, g) in grads {
        let slot = &mut per_param[id.index()];
        if slot.is_some() {
            return Err(TensorError::Invalid(format!("adam_step: duplicate gradient for {}", store.name(*id))));
        }
        if g.shape() != store.get(*id).shape() {
            return Err(TensorError::ShapeMismatch { op: "adam_step", left: store.get(*id).shape().to_vec(), right: g.shape().to_vec() });
        }
        *slot = Some(g);
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - hyper.beta1.powi(t);
    let bc2 = 1.0 - hyper.beta2.powi(t);
    let ids: Vec<ParamId> = store.ids().collect();
    for id in ids {
        let i = id.index();
        let g = per_param[i];
        let p = store.get_mut(id).data_mut();
        let m = state.m[i].data_mut();
        let v = state.v[i].data_mut();
        for k in 0..p.len() {
            let gk = g.map_or(0.0, |g| g.data()[k].as_f64());
            let mk = hyper.beta1 * m[k].as_f64() + (1.0 - hyper.beta1) * gk;
            let vk = hyper.beta2 * v[k].as_f64() + (1.0 - hyper.beta2) * gk * gk;
            m[k] = T::from_f64_lossy(mk);
            v[k] = T::from_f64_lossy(vk);
            let update = hyper.lr * (mk / bc1) / ((vk / bc2).sqrt() + hyper.eps);
            p[k] = T::from_f64_lossy(p[k].as_f64() - update);
        }
    }
    Ok(())
}
