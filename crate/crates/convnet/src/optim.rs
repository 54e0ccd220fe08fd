use crate::model::ConvNet;

/// Adaptive-moment optimizer state for every parameter of a network.
#[derive(Debug, Clone)]
pub struct Adam {
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    learning_rate: f64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
}

impl Adam {
    pub fn new(net: &ConvNet) -> Self {
        let c = net.config();
        let zeros: Vec<Vec<f64>> = net.params().iter().map(|t| vec![0.0; t.len()]).collect();
        Adam {
            step: 0,
            m: zeros.clone(),
            v: zeros,
            learning_rate: c.learning_rate,
            beta1: c.beta1,
            beta2: c.beta2,
            epsilon: c.adam_epsilon,
        }
    }

    pub fn apply(&mut self, net: &mut ConvNet, gradients: &[Vec<f64>]) {
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step as i32);
        let c2 = 1.0 - self.beta2.powi(self.step as i32);
        for (((t, g), m), v) in net
            .params_mut()
            .iter_mut()
            .zip(gradients)
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            for i in 0..t.data.len() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                let mh = m[i] / c1;
                let vh = v[i] / c2;
                t.data[i] -= self.learning_rate * mh / (vh.sqrt() + self.epsilon);
            }
        }
    }
}
