//! Trainable parameter storage and plain SGD / Adam updates with global-norm
//! gradient clipping.

use indexmap::IndexMap;
use rand::Rng;

use crate::error::{Error, Result};

use super::tensor::Tensor;

/// Named trainable weights of one model. Shapes are fixed at insertion.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParameterSet {
    params: IndexMap<String, Tensor>,
}

impl ParameterSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: &str, tensor: Tensor) -> Result<()> {
        if self.params.contains_key(name) {
            return Err(Error::InvalidArgument(format!(
                "duplicate parameter {name}"
            )));
        }
        self.params.insert(name.to_string(), tensor);
        Ok(())
    }

    /// Uniform init in [-bound, bound], seeded by the caller's rng.
    pub fn add_uniform<R: Rng>(
        &mut self,
        name: &str,
        shape: &[usize],
        bound: f64,
        rng: &mut R,
    ) -> Result<()> {
        let data = (0..shape.iter().product::<usize>())
            .map(|_| rng.gen_range(-bound..=bound))
            .collect();
        self.insert(name, Tensor::from_vec(shape, data)?)
    }

    pub fn add_zeros(&mut self, name: &str, shape: &[usize]) -> Result<()> {
        self.insert(name, Tensor::zeros(shape))
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.params
            .get(name)
            .ok_or_else(|| Error::MissingGradient(name.to_string()))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor> {
        self.params
            .get_mut(name)
            .ok_or_else(|| Error::MissingGradient(name.to_string()))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.params.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.params.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

/// SGD or Adam with optional global-norm gradient clipping.
#[derive(Debug, Clone)]
pub struct Optimizer {
    pub kind: OptimizerKind,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub clip_norm: Option<f64>,
    step: u64,
    moment1: IndexMap<String, Vec<f64>>,
    moment2: IndexMap<String, Vec<f64>>,
}

impl Optimizer {
    pub fn sgd(lr: f64) -> Self {
        Optimizer {
            kind: OptimizerKind::Sgd,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            clip_norm: Some(5.0),
            step: 0,
            moment1: IndexMap::new(),
            moment2: IndexMap::new(),
        }
    }

    pub fn adam(lr: f64) -> Self {
        Optimizer {
            kind: OptimizerKind::Adam,
            ..Optimizer::sgd(lr)
        }
    }

    pub fn without_clipping(mut self) -> Self {
        self.clip_norm = None;
        self
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn step(
        &mut self,
        params: &mut ParameterSet,
        grads: &IndexMap<String, Tensor>,
    ) -> Result<()> {
        if self.lr <= 0.0 {
            return Err(Error::InvalidArgument("learning rate must be > 0".into()));
        }
        // Every parameter must have a matching gradient.
        for (name, t) in params.iter() {
            let g = grads
                .get(name)
                .ok_or_else(|| Error::MissingGradient(name.to_string()))?;
            if g.shape != t.shape {
                return Err(Error::ShapeMismatch {
                    op: "optimizer_step".to_string(),
                    detail: format!("{name}: {:?} vs {:?}", g.shape, t.shape),
                });
            }
        }

        let clip_factor = match self.clip_norm {
            Some(max_norm) => {
                let sq: f64 = grads
                    .values()
                    .map(|g| g.data.iter().map(|x| x * x).sum::<f64>())
                    .sum();
                let norm = sq.sqrt();
                if norm > max_norm {
                    max_norm / norm
                } else {
                    1.0
                }
            }
            None => 1.0,
        };

        self.step += 1;
        let names: Vec<String> = params.names().map(str::to_string).collect();
        for name in names {
            let g = &grads[&name];
            let p = params.get_mut(&name)?;
            match self.kind {
                OptimizerKind::Sgd => {
                    for (pv, gv) in p.data.iter_mut().zip(&g.data) {
                        *pv -= self.lr * clip_factor * gv;
                    }
                }
                OptimizerKind::Adam => {
                    let m = self
                        .moment1
                        .entry(name.clone())
                        .or_insert_with(|| vec![0.0; p.data.len()]);
                    let v = self
                        .moment2
                        .entry(name.clone())
                        .or_insert_with(|| vec![0.0; p.data.len()]);
                    let b1 = self.beta1;
                    let b2 = self.beta2;
                    let bc1 = 1.0 - b1.powi(self.step as i32);
                    let bc2 = 1.0 - b2.powi(self.step as i32);
                    for i in 0..p.data.len() {
                        let gv = clip_factor * g.data[i];
                        m[i] = b1 * m[i] + (1.0 - b1) * gv;
                        v[i] = b2 * v[i] + (1.0 - b2) * gv * gv;
                        let mhat = m[i] / bc1;
                        let vhat = v[i] / bc2;
                        p.data[i] -= self.lr * mhat / (vhat.sqrt() + self.eps);
                    }
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_param(v: f64) -> ParameterSet {
        let mut p = ParameterSet::new();
        p.insert("p", Tensor::scalar(v)).unwrap();
        p
    }

    fn grad_of(v: f64) -> IndexMap<String, Tensor> {
        let mut g = IndexMap::new();
        g.insert("p".to_string(), Tensor::scalar(v));
        g
    }

    #[test]
    fn sgd_basic_update() {
        let mut params = one_param(1.0);
        let mut opt = Optimizer::sgd(0.1).without_clipping();
        opt.step(&mut params, &grad_of(1.0)).unwrap();
        assert!((params.get("p").unwrap().item() - 0.9).abs() < 1e-12);
    }

    #[test]
    fn zero_gradient_leaves_params_unchanged() {
        let mut params = one_param(0.7);
        let mut opt = Optimizer::adam(1e-3);
        opt.step(&mut params, &grad_of(0.0)).unwrap();
        assert_eq!(params.get("p").unwrap().item(), 0.7);
    }

    #[test]
    fn missing_gradient_errors() {
        let mut params = one_param(1.0);
        let mut opt = Optimizer::sgd(0.1);
        let empty = IndexMap::new();
        assert!(matches!(
            opt.step(&mut params, &empty),
            Err(Error::MissingGradient(_))
        ));
    }

    #[test]
    fn adam_converges_on_quadratic_bowl() {
        // loss = p^2 / 2, grad = p; |p| < 1e-2 within 500 steps from p=1.
        let mut params = one_param(1.0);
        let mut opt = Optimizer::adam(1e-2).without_clipping();
        for _ in 0..500 {
            let g = grad_of(params.get("p").unwrap().item());
            opt.step(&mut params, &g).unwrap();
        }
        assert!(params.get("p").unwrap().item().abs() < 1e-2);
    }

    #[test]
    fn clipping_caps_global_norm() {
        let mut params = one_param(0.0);
        let mut opt = Optimizer::sgd(1.0);
        opt.step(&mut params, &grad_of(50.0)).unwrap();
        // Clipped to norm 5, so the update is exactly -5.
        assert!((params.get("p").unwrap().item() + 5.0).abs() < 1e-12);
    }
}
