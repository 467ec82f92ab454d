use crate::diffcore::{Gradients, ParamStore, Tensor};

use super::TrainError;

/// Adam with bias-corrected moment estimates.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl Adam {
    pub fn new(store: &ParamStore, lr: f64) -> Self {
        let zeros: Vec<Tensor> = store
            .iter()
            .map(|p| Tensor::zeros(p.value.rows(), p.value.cols()))
            .collect();
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, store: &mut ParamStore, grads: &Gradients) -> Result<(), TrainError> {
        let tensors = grads.tensors();
        if tensors.len() != self.m.len() || store.len() != self.m.len() {
            return Err(TrainError::ShapeMismatch {
                name: "<parameter count>".into(),
                expected: (self.m.len(), 1),
                found: (tensors.len(), 1),
            });
        }
        for ((p, g), m) in store.iter().zip(tensors).zip(&self.m) {
            if p.value.shape() != g.shape() || m.shape() != g.shape() {
                return Err(TrainError::ShapeMismatch {
                    name: p.name.clone(),
                    expected: m.shape(),
                    found: g.shape(),
                });
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for (((p, g), m), v) in store.iter_mut().zip(tensors).zip(&mut self.m).zip(&mut self.v) {
            let values = p.value.data_mut();
            let (m, v) = (m.data_mut(), v.data_mut());
            for (k, &gk) in g.data().iter().enumerate() {
                m[k] = self.beta1 * m[k] + (1.0 - self.beta1) * gk;
                v[k] = self.beta2 * v[k] + (1.0 - self.beta2) * gk * gk;
                let m_hat = m[k] / c1;
                let v_hat = v[k] / c2;
                values[k] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store() -> ParamStore {
        let mut s = ParamStore::new();
        s.add("w", Tensor::new(1, 3, vec![1.0, -2.0, 0.5]).unwrap()).unwrap();
        s
    }

    #[test]
    fn first_step_moves_by_lr_against_gradient_sign() {
        let mut s = store();
        let mut adam = Adam::new(&s, 0.01);
        let g = Gradients(vec![Tensor::new(1, 3, vec![3.0, -0.2, 1e-3]).unwrap()]);
        adam.step(&mut s, &g).unwrap();
        let w = s.value(s.id("w").unwrap()).data().to_vec();
        assert!((w[0] - 0.99).abs() < 1e-9);
        assert!((w[1] + 1.99).abs() < 1e-9);
        assert!((w[2] - 0.49).abs() < 1e-7);
        assert_eq!(adam.steps_taken(), 1);
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut s = store();
        let before = s.value(s.id("w").unwrap()).clone();
        let mut adam = Adam::new(&s, 0.1);
        let zero = s.zero_gradients();
        adam.step(&mut s, &zero).unwrap();
        assert_eq!(s.value(s.id("w").unwrap()), &before);
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let mut s = store();
        let mut adam = Adam::new(&s, 0.1);
        let g = Gradients(vec![Tensor::zeros(3, 1)]);
        assert!(matches!(adam.step(&mut s, &g), Err(TrainError::ShapeMismatch { name, .. }) if name == "w"));
    }

    #[test]
    fn minimises_a_quadratic() {
        let mut s = store();
        let id = s.id("w").unwrap();
        let mut adam = Adam::new(&s, 0.05);
        for _ in 0..2000 {
            let g = Gradients(vec![s.value(id).map(|x| 2.0 * (x - 3.0))]);
            adam.step(&mut s, &g).unwrap();
        }
        assert!(s.value(id).data().iter().all(|x| (x - 3.0).abs() < 1e-3));
    }
}
