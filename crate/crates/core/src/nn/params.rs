use std::collections::HashMap;

use super::{NnError, Real, Tensor};
use crate::rng::Rng;

/// Index of a parameter inside its [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

#[derive(Clone, Debug)]
pub struct Parameter<T = f32> {
    pub name: String,
    pub value: Tensor<T>,
    pub grad: Tensor<T>,
}

/// Named parameters of one model, in registration order.
#[derive(Clone, Debug)]
pub struct ParamStore<T = f32> {
    params: Vec<Parameter<T>>,
    by_name: HashMap<String, ParamId>,
}

impl<T: Real> Default for ParamStore<T> {
    fn default() -> Self {
        Self {
            params: Vec::new(),
            by_name: HashMap::new(),
        }
    }
}

impl<T: Real> ParamStore<T> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: &str, value: Tensor<T>) -> Result<ParamId, NnError> {
        if self.by_name.contains_key(name) {
            return Err(NnError::DuplicateName(name.to_string()));
        }
        let id = ParamId(self.params.len());
        let grad = Tensor::zeros(value.shape());
        self.params.push(Parameter {
            name: name.to_string(),
            value,
            grad,
        });
        self.by_name.insert(name.to_string(), id);
        Ok(id)
    }

    /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weight.
    pub fn add_uniform(
        &mut self,
        name: &str,
        shape: &[usize],
        fan_in: usize,
        rng: &mut Rng,
    ) -> Result<ParamId, NnError> {
        let bound = 1.0 / (fan_in.max(1) as f32).sqrt();
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| T::of(f64::from(rng.uniform_f32(-bound, bound)))).collect();
        self.add(name, Tensor::new(shape.to_vec(), data)?)
    }

    pub fn add_normal(
        &mut self,
        name: &str,
        shape: &[usize],
        std: f32,
        rng: &mut Rng,
    ) -> Result<ParamId, NnError> {
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| T::of(f64::from(rng.normal_f32(0.0, std)))).collect();
        self.add(name, Tensor::new(shape.to_vec(), data)?)
    }

    pub fn add_zeros(&mut self, name: &str, shape: &[usize]) -> Result<ParamId, NnError> {
        self.add(name, Tensor::zeros(shape))
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).copied()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    pub fn get(&self, id: ParamId) -> &Parameter<T> {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Parameter<T> {
        &mut self.params[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Tensor<T> {
        &self.params[id.0].value
    }

    pub fn grad(&self, id: ParamId) -> &Tensor<T> {
        &self.params[id.0].grad
    }

    pub fn iter(&self) -> impl Iterator<Item = &Parameter<T>> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Parameter<T>> {
        self.params.iter_mut()
    }

    pub fn zero_grad(&mut self) {
        for p in &mut self.params {
            p.grad.fill(T::zero());
        }
    }

    pub fn scale_grads(&mut self, k: T) {
        for p in &mut self.params {
            p.grad.data_mut().iter_mut().for_each(|g| *g *= k);
        }
    }

    /// Overwrite a value with one of identical shape.
    pub fn set_value(&mut self, id: ParamId, value: Tensor<T>) -> Result<(), NnError> {
        let p = &mut self.params[id.0];
        if p.value.shape() != value.shape() {
            return Err(NnError::Shape(format!(
                "{}: expected {:?}, got {:?}",
                p.name,
                p.value.shape(),
                value.shape()
            )));
        }
        p.value = value;
        Ok(())
    }

    /// Copy every same-named tensor from `other`; names missing from `other`
    /// are left as they are. Returns how many tensors were copied.
    pub fn copy_matching(&mut self, other: &ParamStore<T>) -> Result<usize, NnError> {
        let mut copied = 0;
        for p in &other.params {
            if let Some(id) = self.id(&p.name) {
                self.set_value(id, p.value.clone())?;
                copied += 1;
            }
        }
        Ok(copied)
    }

    pub fn all_finite(&self) -> bool {
        self.params.iter().all(|p| p.value.is_finite())
    }

    pub fn num_values(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    /// Same names and ids at another precision; grads start at zero.
    pub fn cast<U: Real>(&self) -> ParamStore<U> {
        ParamStore {
            params: self
                .params
                .iter()
                .map(|p| Parameter {
                    name: p.name.clone(),
                    value: p.value.cast(),
                    grad: Tensor::zeros(p.value.shape()),
                })
                .collect(),
            by_name: self.by_name.clone(),
        }
    }
}

impl ParamStore<f32> {
    /// FNV-1a over names and value bytes; the freeze check compares these.
    pub fn fingerprint(&self) -> u64 {
        let mut bytes = Vec::new();
        for p in &self.params {
            bytes.extend_from_slice(p.name.as_bytes());
            bytes.extend(p.value.to_le_bytes());
        }
        crate::rng::fnv1a(&bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duplicate_names_rejected() {
        let mut s: ParamStore = ParamStore::new();
        s.add_zeros("w", &[2]).unwrap();
        assert!(matches!(s.add_zeros("w", &[2]), Err(NnError::DuplicateName(_))));
    }

    #[test]
    fn uniform_init_respects_fan_in_bound() {
        let mut s: ParamStore = ParamStore::new();
        let mut rng = Rng::new(0, 0);
        let id = s.add_uniform("w", &[10, 16], 16, &mut rng).unwrap();
        assert!(s.value(id).data().iter().all(|v| v.abs() <= 0.25));
        assert_eq!(s.grad(id).shape(), &[10, 16]);
    }

    #[test]
    fn fingerprint_tracks_values() {
        let mut s: ParamStore = ParamStore::new();
        let id = s.add_zeros("w", &[3]).unwrap();
        let before = s.fingerprint();
        s.get_mut(id).value.data_mut()[1] = 1.0;
        assert_ne!(before, s.fingerprint());
    }
}
